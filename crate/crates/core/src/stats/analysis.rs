//! The test battery over role and interaction tables.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{
    anova_oneway, bonferroni, pearson_residuals, prop_test_two, residualize_fixed_effect, significance_stars,
    t_test_two_sample, ContingencyTable, StatResult, TestKind,
};
use crate::error::{Error, Result};
use crate::roles::{InteractionPair, RoleRow, SpeakerRole};
use crate::script::{DemographicIndex, Gender, Race, ViolenceLevel};

/// How interactions are grouped for the omnibus ANOVA.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InteractionGrouping {
    /// Gender and race of both parties.
    #[default]
    GenderRace,
    Gender,
    Race,
}

impl InteractionGrouping {
    pub fn as_str(self) -> &'static str {
        match self {
            InteractionGrouping::GenderRace => "gender_race",
            InteractionGrouping::Gender => "gender",
            InteractionGrouping::Race => "race",
        }
    }

    /// Cell label of a pair, or `None` when a grouped attribute is UNKNOWN.
    fn cell(self, p: &InteractionPair) -> Option<String> {
        let ((pg, pr), (vg, vr)) = (p.perpetrator_demo, p.victim_demo);
        let gender_known = pg != Gender::Unknown && vg != Gender::Unknown;
        let race_known = pr != Race::Unknown && vr != Race::Unknown;
        match self {
            InteractionGrouping::GenderRace if gender_known && race_known => Some(format!("{pg}/{pr}>{vg}/{vr}")),
            InteractionGrouping::Gender if gender_known => Some(format!("{pg}>{vg}")),
            InteractionGrouping::Race if race_known => Some(format!("{pr}>{vr}")),
            _ => None,
        }
    }
}

impl fmt::Display for InteractionGrouping {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for InteractionGrouping {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gender_race" => Ok(InteractionGrouping::GenderRace),
            "gender" => Ok(InteractionGrouping::Gender),
            "race" => Ok(InteractionGrouping::Race),
            _ => Err(Error::Config(format!("unknown interaction grouping {s:?}"))),
        }
    }
}

/// One line of the stats report. `result` is `None` when the test could not
/// be run on the data at hand; `note` then says why.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub test_kind: TestKind,
    pub grouping: String,
    pub result: Option<StatResult>,
    pub note: String,
}

impl ReportRow {
    fn from_outcome(test_kind: TestKind, grouping: String, outcome: Result<StatResult>) -> Self {
        match outcome {
            Ok(r) => ReportRow { test_kind, grouping, result: Some(r), note: String::new() },
            Err(e) => ReportRow { test_kind, grouping, result: None, note: format!("skipped: {e}") },
        }
    }
}

/// Per-character share of `role` among that character's triplets at
/// `level`: the speaker fixed effect of the role indicator.
fn role_shares(rows: &[&RoleRow], role: SpeakerRole) -> Result<BTreeMap<(String, String), f64>> {
    let values: Vec<f64> = rows.iter().map(|r| f64::from(u8::from(r.speaker_role == role))).collect();
    let groups: Vec<(String, String)> = rows.iter().map(|r| (r.movie_id.clone(), r.speaker_id.clone())).collect();
    let residuals = residualize_fixed_effect(&values, &groups)?;
    Ok(groups.into_iter().zip(values.iter().zip(residuals).map(|(v, r)| v - r)).collect())
}

fn role_tests(roles: &[RoleRow], demographics: &DemographicIndex, out: &mut Vec<ReportRow>) -> Result<()> {
    for level in [ViolenceLevel::High, ViolenceLevel::Med] {
        let rows: Vec<&RoleRow> = roles.iter().filter(|r| r.violence_level == level).collect();
        for role in SpeakerRole::ALL {
            let gender_label = format!("{level} {role} gender MALE vs FEMALE");
            let race_label = format!("{level} {role} race");
            if rows.is_empty() {
                let none = || Err(Error::EmptyInput("no role assignments at this level"));
                out.push(ReportRow::from_outcome(TestKind::TTest, gender_label, none()));
                out.push(ReportRow::from_outcome(TestKind::AnovaF, race_label, none()));
                continue;
            }
            let shares = role_shares(&rows, role)?;
            let mut by_gender: BTreeMap<Gender, Vec<f64>> = BTreeMap::new();
            let mut by_race: BTreeMap<Race, Vec<f64>> = BTreeMap::new();
            for ((movie, character), share) in &shares {
                let (g, r) = demographics.get(movie, character);
                by_gender.entry(g).or_default().push(*share);
                if r != Race::Unknown {
                    by_race.entry(r).or_default().push(*share);
                }
            }
            let sample = |g: Gender| by_gender.get(&g).cloned().unwrap_or_default();
            let t = t_test_two_sample(&sample(Gender::Male), &sample(Gender::Female));
            out.push(ReportRow::from_outcome(TestKind::TTest, gender_label, t));
            let labels: Vec<&str> = by_race.keys().map(|r| r.as_str()).collect();
            let groups: Vec<Vec<f64>> = by_race.into_values().collect();
            let f = anova_oneway(&groups);
            out.push(ReportRow::from_outcome(TestKind::AnovaF, format!("{race_label} {}", labels.join("|")), f));
        }
    }
    Ok(())
}

fn omnibus(interactions: &[InteractionPair], grouping: InteractionGrouping) -> ReportRow {
    let mut counts: BTreeMap<(String, &str), f64> = BTreeMap::new();
    for p in interactions {
        if let Some(cell) = grouping.cell(p) {
            *counts.entry((cell, p.movie_id.as_str())).or_default() += 1.0;
        }
    }
    let mut groups: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for ((cell, _), n) in counts {
        groups.entry(cell).or_default().push(n);
    }
    let label = format!("interactions per movie by {grouping} cell");
    ReportRow::from_outcome(TestKind::AnovaF, label, anova_oneway(&groups.into_values().collect::<Vec<_>>()))
}

/// Share of HIGH among interactions of each gender pairing, compared pairwise
/// with Bonferroni correction over the tests that could be run.
fn gender_pair_tests(interactions: &[InteractionPair], out: &mut Vec<ReportRow>) -> Result<()> {
    let pairings = [
        (Gender::Male, Gender::Female),
        (Gender::Female, Gender::Male),
        (Gender::Male, Gender::Male),
        (Gender::Female, Gender::Female),
    ];
    let tally: Vec<(u64, u64)> = pairings
        .iter()
        .map(|&(pg, vg)| {
            let cell = interactions.iter().filter(|p| p.perpetrator_demo.0 == pg && p.victim_demo.0 == vg);
            cell.fold((0, 0), |(x, n), p| (x + u64::from(p.violence_level == ViolenceLevel::High), n + 1))
        })
        .collect();
    let mut rows = Vec::new();
    for i in 0..pairings.len() {
        for j in i + 1..pairings.len() {
            let name = |(p, v): (Gender, Gender)| format!("{p}>{v}");
            let label = format!("HIGH share {} vs {}", name(pairings[i]), name(pairings[j]));
            let ((x1, n1), (x2, n2)) = (tally[i], tally[j]);
            rows.push(ReportRow::from_outcome(TestKind::Chi2Prop, label, prop_test_two(x1, n1, x2, n2)));
        }
    }
    let ps: Vec<f64> = rows.iter().filter_map(|r| r.result.as_ref().map(|s| s.p_value)).collect();
    let adjusted = bonferroni(&ps)?;
    let mut it = adjusted.into_iter();
    for r in rows.iter_mut() {
        if let Some(s) = r.result.as_mut() {
            s.p_adjusted = it.next();
        }
    }
    out.extend(rows);
    Ok(())
}

/// The full battery: per level and role, a gender t-test and a race ANOVA on
/// per-character role shares; an omnibus ANOVA over interaction cells; and
/// pairwise gender-pairing proportion tests.
pub fn analyze_roles(
    roles: &[RoleRow],
    interactions: &[InteractionPair],
    demographics: &DemographicIndex,
    grouping: InteractionGrouping,
) -> Result<Vec<ReportRow>> {
    let mut out = Vec::new();
    role_tests(roles, demographics, &mut out)?;
    out.push(omnibus(interactions, grouping));
    gender_pair_tests(interactions, &mut out)?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualCell {
    pub perpetrator_race: Race,
    pub victim_race: Race,
    pub observed: u64,
    pub expected: f64,
    pub z: f64,
}

/// Pearson residuals of the perpetrator-race × victim-race table. UNKNOWN
/// races and empty rows or columns are left out; no data gives no cells.
pub fn interaction_residuals(interactions: &[InteractionPair]) -> Result<Vec<ResidualCell>> {
    let mut counts: BTreeMap<(Race, Race), u64> = BTreeMap::new();
    for p in interactions {
        let (pr, vr) = (p.perpetrator_demo.1, p.victim_demo.1);
        if pr != Race::Unknown && vr != Race::Unknown {
            *counts.entry((pr, vr)).or_default() += 1;
        }
    }
    if counts.is_empty() {
        return Ok(Vec::new());
    }
    let mut rows: Vec<Race> = counts.keys().map(|k| k.0).collect();
    let mut cols: Vec<Race> = counts.keys().map(|k| k.1).collect();
    rows.dedup();
    cols.sort();
    cols.dedup();
    let matrix: Vec<Vec<u64>> =
        rows.iter().map(|r| cols.iter().map(|c| counts.get(&(*r, *c)).copied().unwrap_or(0)).collect()).collect();
    let label = |v: &[Race]| v.iter().map(|r| r.to_string()).collect();
    let table = ContingencyTable::new(label(&rows), label(&cols), matrix)?;
    let expected = table.expected()?;
    let z = pearson_residuals(&table)?;
    let mut out = Vec::new();
    for (i, r) in rows.iter().enumerate() {
        for (j, c) in cols.iter().enumerate() {
            out.push(ResidualCell {
                perpetrator_race: *r,
                victim_race: *c,
                observed: table.counts[i][j],
                expected: expected[i][j],
                z: z[i][j],
            });
        }
    }
    Ok(out)
}

const REPORT_HEADER: [&str; 9] =
    ["test_kind", "grouping", "statistic", "df1", "df2", "p_value", "p_adjusted", "stars", "note"];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Stats report table. Stars use the adjusted p-value when there is one.
pub fn write_stats_report(rows: &[ReportRow], w: impl Write) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(REPORT_HEADER)?;
    for r in rows {
        let (stat, df1, df2, p, adj, stars) = match &r.result {
            Some(s) => (
                s.statistic.to_string(),
                s.df1.to_string(),
                opt(s.df2),
                s.p_value.to_string(),
                opt(s.p_adjusted),
                significance_stars(s.p_adjusted.unwrap_or(s.p_value)).to_string(),
            ),
            None => Default::default(),
        };
        out.write_record([r.test_kind.as_str(), &r.grouping, &stat, &df1, &df2, &p, &adj, &stars, &r.note])?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_stats_report(rdr: impl Read) -> Result<Vec<ReportRow>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(rdr);
    let found: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if found != REPORT_HEADER {
        return Err(Error::BadHeader { expected: REPORT_HEADER.join(","), found: found.join(",") });
    }
    let mut out = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row?;
        let f = |j: usize| row.get(j).unwrap_or("");
        let num = |j: usize| -> Result<Option<f64>> {
            if f(j).is_empty() {
                return Ok(None);
            }
            f(j).parse()
                .map(Some)
                .map_err(|_| Error::BadRecord { record: i + 1, message: format!("bad number {:?}", f(j)) })
        };
        let test_kind: TestKind = f(0).parse()?;
        let result = match (num(2)?, num(3)?, num(5)?) {
            (Some(statistic), Some(df1), Some(p_value)) => {
                Some(StatResult { test_kind, statistic, df1, df2: num(4)?, p_value, p_adjusted: num(6)? })
            }
            _ => None,
        };
        out.push(ReportRow { test_kind, grouping: f(1).to_string(), result, note: f(8).to_string() });
    }
    Ok(out)
}

/// `perp_race,victim_race,observed,expected,z` table.
pub fn write_residuals(cells: &[ResidualCell], w: impl Write) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["perp_race", "victim_race", "observed", "expected", "z"])?;
    for c in cells {
        out.write_record([
            c.perpetrator_race.as_str(),
            c.victim_race.as_str(),
            &c.observed.to_string(),
            &c.expected.to_string(),
            &c.z.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::script::load_demographics;

    fn role(movie: &str, speaker: &str, r: SpeakerRole, level: ViolenceLevel) -> RoleRow {
        RoleRow {
            movie_id: movie.into(),
            utterance_index: 0,
            speaker_id: speaker.into(),
            speaker_role: r,
            verb_lemma: "hit".into(),
            perpetrator_id: None,
            victim_id: None,
            violence_level: level,
        }
    }

    fn pair(movie: &str, p: (Gender, Race), v: (Gender, Race), level: ViolenceLevel) -> InteractionPair {
        InteractionPair {
            movie_id: movie.into(),
            perpetrator_id: "P".into(),
            victim_id: "V".into(),
            perpetrator_demo: p,
            victim_demo: v,
            violence_level: level,
        }
    }

    #[test]
    fn role_shares_are_per_character_means() {
        use SpeakerRole::*;
        let rows = [
            role("m", "A", Perpetrator, ViolenceLevel::High),
            role("m", "A", Narrator, ViolenceLevel::High),
            role("m", "B", Perpetrator, ViolenceLevel::High),
        ];
        let refs: Vec<&RoleRow> = rows.iter().collect();
        let s = role_shares(&refs, Perpetrator).unwrap();
        assert_eq!(s[&("m".to_string(), "A".to_string())], 0.5);
        assert_eq!(s[&("m".to_string(), "B".to_string())], 1.0);
    }

    #[test]
    fn gender_t_test_on_shares() {
        use SpeakerRole::*;
        let demo = load_demographics(
            "movie_id,character_id,gender,race\nm,A,MALE,WHITE\nm,B,MALE,BLACK\nm,C,FEMALE,WHITE\nm,D,FEMALE,BLACK\n"
                .as_bytes(),
        )
        .unwrap()
        .index();
        let h = ViolenceLevel::High;
        let rows = vec![
            role("m", "A", Perpetrator, h),
            role("m", "B", Perpetrator, h),
            role("m", "B", Victim, h),
            role("m", "C", Victim, h),
            role("m", "D", Victim, h),
            role("m", "D", Perpetrator, h),
        ];
        let report = analyze_roles(&rows, &[], &demo, InteractionGrouping::default()).unwrap();
        let t = report.iter().find(|r| r.grouping == "HIGH PERPETRATOR gender MALE vs FEMALE").unwrap();
        // shares: male (1, 0.5), female (0, 0.5)
        let want = t_test_two_sample(&[1.0, 0.5], &[0.0, 0.5]).unwrap();
        assert_eq!(t.result.as_ref().unwrap(), &want);
        // MED has no rows: every MED test is skipped, not an error
        assert!(report.iter().filter(|r| r.grouping.starts_with("MED")).all(|r| r.result.is_none()));
    }

    #[test]
    fn pairwise_tests_are_bonferroni_adjusted() {
        let (m, f) = (Gender::Male, Gender::Female);
        let w = Race::White;
        let mut pairs = Vec::new();
        for i in 0..10 {
            let level = if i < 8 { ViolenceLevel::High } else { ViolenceLevel::Med };
            pairs.push(pair("m", (m, w), (f, w), level));
            let level = if i < 3 { ViolenceLevel::High } else { ViolenceLevel::Med };
            pairs.push(pair("m", (f, w), (m, w), level));
        }
        let mut rows = Vec::new();
        gender_pair_tests(&pairs, &mut rows).unwrap();
        assert_eq!(rows.len(), 6);
        let run: Vec<&StatResult> = rows.iter().filter_map(|r| r.result.as_ref()).collect();
        assert_eq!(run.len(), 1, "only M>F vs F>M has data on both sides");
        let raw = prop_test_two(8, 10, 3, 10).unwrap();
        assert_eq!(run[0].statistic, raw.statistic);
        assert_eq!(run[0].p_adjusted, Some(raw.p_value));
    }

    #[test]
    fn residual_table_skips_unknown() {
        let (m, u) = (Gender::Male, Gender::Unknown);
        let pairs = vec![
            pair("m", (m, Race::White), (m, Race::White), ViolenceLevel::High),
            pair("m", (m, Race::White), (m, Race::White), ViolenceLevel::High),
            pair("m", (m, Race::Black), (m, Race::Black), ViolenceLevel::High),
            pair("m", (m, Race::Black), (m, Race::Black), ViolenceLevel::High),
            pair("m", (u, Race::Unknown), (m, Race::Black), ViolenceLevel::High),
        ];
        let cells = interaction_residuals(&pairs).unwrap();
        assert_eq!(cells.len(), 4);
        let z: Vec<f64> = cells.iter().map(|c| c.z).collect();
        assert_eq!(z, vec![1.0, -1.0, -1.0, 1.0]);
        assert!(interaction_residuals(&[]).unwrap().is_empty());
    }

    #[test]
    fn report_round_trip() {
        let mut r = prop_test_two(3, 10, 7, 10).unwrap();
        r.p_adjusted = Some((r.p_value * 6.0).min(1.0));
        let rows = vec![
            ReportRow { test_kind: TestKind::Chi2Prop, grouping: "x, y".into(), result: Some(r), note: String::new() },
            ReportRow { test_kind: TestKind::TTest, grouping: "g".into(), result: None, note: "skipped: why".into() },
        ];
        let mut buf = Vec::new();
        write_stats_report(&rows, &mut buf).unwrap();
        assert_eq!(read_stats_report(buf.as_slice()).unwrap(), rows);
    }
}
