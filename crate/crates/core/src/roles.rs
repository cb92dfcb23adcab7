//! Subject-verb-object triplets from dependency parses, and the
//! victim/perpetrator/narrator judgment for the speaker of each one.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::PosteriorRecord;
use crate::script::{
    normalize_speaker, DemographicIndex, Gender, ParsedSentence, Race, Screenplay, Utterance, ViolenceLevel,
};

const SUBJECT_DEPRELS: [&str; 3] = ["nsubj", "nsubj:pass", "nsubjpass"];
const PASSIVE_SUBJECT_DEPRELS: [&str; 2] = ["nsubj:pass", "nsubjpass"];
const OBJECT_DEPRELS: [&str; 2] = ["obj", "dobj"];
const AGENT_DEPRELS: [&str; 2] = ["obl:agent", "agent"];

const FIRST_PERSON: [&str; 6] = ["i", "me", "we", "us", "my", "myself"];
const SECOND_PERSON: [&str; 3] = ["you", "your", "yourself"];

/// Shape of a triplet by the part of speech of its subject and object.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Form {
    /// pronoun-verb-noun
    #[serde(rename = "PVN")]
    Pvn,
    /// pronoun-verb-pronoun
    #[serde(rename = "PVP")]
    Pvp,
    /// noun-verb-noun
    #[serde(rename = "NVN")]
    Nvn,
    /// pronoun-verb-proper noun
    #[serde(rename = "PVPN")]
    Pvpn,
    #[serde(rename = "OTHER")]
    Other,
}

impl Form {
    pub const ALL: [Form; 5] = [Form::Pvn, Form::Pvp, Form::Nvn, Form::Pvpn, Form::Other];

    pub fn from_upos(subject: &str, object: &str) -> Self {
        match (subject, object) {
            ("PRON", "NOUN") => Form::Pvn,
            ("PRON", "PRON") => Form::Pvp,
            ("NOUN", "NOUN") => Form::Nvn,
            ("PRON", "PROPN") => Form::Pvpn,
            _ => Form::Other,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Form::Pvn => "PVN",
            Form::Pvp => "PVP",
            Form::Nvn => "NVN",
            Form::Pvpn => "PVPN",
            Form::Other => "OTHER",
        }
    }
}

impl fmt::Display for Form {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A subject or object token.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mention {
    pub surface: String,
    pub upos: String,
    /// `Coref=` value from the MISC column, if annotated.
    pub coref: Option<String>,
}

impl Mention {
    fn from_token(s: &ParsedSentence, i: usize) -> Self {
        let t = &s.tokens[i];
        Mention { surface: t.surface.clone(), upos: t.upos.clone(), coref: t.misc.get("Coref").cloned() }
    }
}

/// A directed action. Passive clauses are stored in active direction, so
/// `subject` is always the agent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SvoTriplet {
    pub movie_id: String,
    pub utterance_index: usize,
    pub subject: Mention,
    pub verb_lemma: String,
    pub object: Mention,
    pub form: Form,
    pub passive: bool,
}

fn is_by_oblique(s: &ParsedSentence, i: usize) -> bool {
    s.tokens[i].deprel == "obl" && s.children(i).any(|(_, c)| c.deprel == "case" && c.lemma.eq_ignore_ascii_case("by"))
}

/// Every (subject, object) pair governed by a VERB token. Passive subjects
/// pair with the by-agent and are swapped into active direction.
pub fn extract_svo(sentence: &ParsedSentence) -> Vec<SvoTriplet> {
    let mut out = Vec::new();
    for (v, verb) in sentence.tokens.iter().enumerate() {
        if verb.upos != "VERB" {
            continue;
        }
        let deps: Vec<usize> = sentence.children(v).map(|(i, _)| i).collect();
        let rel = |i: &usize| sentence.tokens[*i].deprel.as_str();
        for &s in deps.iter().filter(|i| SUBJECT_DEPRELS.contains(&rel(i))) {
            let passive = PASSIVE_SUBJECT_DEPRELS.contains(&rel(&s));
            let partners: Vec<usize> = if passive {
                deps.iter()
                    .copied()
                    .filter(|i| AGENT_DEPRELS.contains(&rel(i)) || is_by_oblique(sentence, *i))
                    .collect()
            } else {
                deps.iter().copied().filter(|i| OBJECT_DEPRELS.contains(&rel(i))).collect()
            };
            for o in partners {
                let (agent, patient) = if passive { (o, s) } else { (s, o) };
                let subject = Mention::from_token(sentence, agent);
                let object = Mention::from_token(sentence, patient);
                out.push(SvoTriplet {
                    movie_id: sentence.movie_id.clone(),
                    utterance_index: sentence.utt_index,
                    form: Form::from_upos(&subject.upos, &object.upos),
                    subject,
                    verb_lemma: verb.lemma.clone(),
                    object,
                    passive,
                });
            }
        }
    }
    out
}

/// Keep the forms whose direction is recoverable: PVP and PVPN.
pub fn filter_forms(triplets: &[SvoTriplet]) -> Vec<SvoTriplet> {
    triplets.iter().filter(|t| matches!(t.form, Form::Pvp | Form::Pvpn)).cloned().collect()
}

/// Percentage of triplets per form. Every form is present in the map.
pub fn form_distribution(triplets: &[SvoTriplet]) -> Result<BTreeMap<Form, f64>> {
    if triplets.is_empty() {
        return Err(Error::EmptyInput("triplet list"));
    }
    let mut counts: BTreeMap<Form, usize> = Form::ALL.iter().map(|f| (*f, 0)).collect();
    for t in triplets {
        *counts.get_mut(&t.form).unwrap() += 1;
    }
    let n = triplets.len() as f64;
    Ok(counts.into_iter().map(|(f, c)| (f, 100.0 * c as f64 / n)).collect())
}

/// Speaker of the nearest utterance within two positions that has a
/// different speaker, looking back first.
pub fn addressee(utterances: &[Utterance], position: usize) -> Option<&str> {
    let speaker = &utterances.get(position)?.speaker_id;
    let back = (1..=2).filter_map(|d| position.checked_sub(d));
    let fwd = (1..=2).map(|d| position + d).filter(|&i| i < utterances.len());
    back.chain(fwd).map(|i| utterances[i].speaker_id.as_str()).find(|s| s != speaker)
}

fn resolve_mention(m: &Mention, speaker: &str, addressee: Option<&str>, roster: &[String]) -> Option<String> {
    let lower = m.surface.to_lowercase();
    if FIRST_PERSON.contains(&lower.as_str()) {
        return Some(speaker.to_string());
    }
    if SECOND_PERSON.contains(&lower.as_str()) {
        return addressee.map(str::to_string);
    }
    match m.upos.as_str() {
        "PRON" => m.coref.as_deref().map(normalize_speaker).filter(|c| !c.is_empty()),
        "PROPN" => {
            let name = normalize_speaker(&m.surface);
            roster.iter().find(|r| **r == name).cloned()
        }
        _ => None,
    }
}

/// Map the subject and object of `triplet` to characters.
///
/// First person resolves to the speaker, second person to the addressee
/// (see [`addressee`]), other pronouns to their `Coref=` annotation and
/// proper nouns to an exact match in `roster`. Anything else is unresolved.
pub fn resolve_participants(
    triplet: &SvoTriplet,
    utterances: &[Utterance],
    roster: &[String],
) -> Result<(Option<String>, Option<String>)> {
    let position = utterances.iter().position(|u| u.index == triplet.utterance_index).ok_or_else(|| {
        Error::UnknownUtterance { movie_id: triplet.movie_id.clone(), index: triplet.utterance_index }
    })?;
    let speaker = utterances[position].speaker_id.as_str();
    let addr = addressee(utterances, position);
    Ok((
        resolve_mention(&triplet.subject, speaker, addr, roster),
        resolve_mention(&triplet.object, speaker, addr, roster),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SpeakerRole {
    #[serde(rename = "VICTIM")]
    Victim,
    #[serde(rename = "PERPETRATOR")]
    Perpetrator,
    #[serde(rename = "NARRATOR")]
    Narrator,
}

impl SpeakerRole {
    pub const ALL: [SpeakerRole; 3] = [SpeakerRole::Victim, SpeakerRole::Perpetrator, SpeakerRole::Narrator];

    pub fn as_str(self) -> &'static str {
        match self {
            SpeakerRole::Victim => "VICTIM",
            SpeakerRole::Perpetrator => "PERPETRATOR",
            SpeakerRole::Narrator => "NARRATOR",
        }
    }
}

impl fmt::Display for SpeakerRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SpeakerRole {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SpeakerRole::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| Error::BadRecord { record: 0, message: format!("unknown role {s:?}") })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleAssignment {
    pub triplet: SvoTriplet,
    pub speaker_id: String,
    pub speaker_role: SpeakerRole,
    pub perpetrator_id: Option<String>,
    pub victim_id: Option<String>,
    pub violence_level: ViolenceLevel,
}

impl RoleAssignment {
    /// `(perpetrator, victim)` when both are resolved.
    pub fn pair(&self) -> Option<(&str, &str)> {
        Some((self.perpetrator_id.as_deref()?, self.victim_id.as_deref()?))
    }
}

/// Judge the speaker's role in one triplet of a MED or HIGH utterance.
pub fn assign_role(
    triplet: &SvoTriplet,
    resolution: (Option<String>, Option<String>),
    speaker_id: &str,
    violence_level: ViolenceLevel,
) -> Result<RoleAssignment> {
    if violence_level == ViolenceLevel::Low {
        return Err(Error::LowViolence);
    }
    let (subject, object) = resolution;
    let (speaker_role, perpetrator_id, victim_id) = if subject.as_deref() == Some(speaker_id) {
        (SpeakerRole::Perpetrator, subject, object)
    } else if object.as_deref() == Some(speaker_id) {
        (SpeakerRole::Victim, subject, object)
    } else {
        (SpeakerRole::Narrator, subject, object)
    };
    Ok(RoleAssignment {
        triplet: triplet.clone(),
        speaker_id: speaker_id.to_string(),
        speaker_role,
        perpetrator_id,
        victim_id,
        violence_level,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InteractionPair {
    pub movie_id: String,
    pub perpetrator_id: String,
    pub victim_id: String,
    pub perpetrator_demo: (Gender, Race),
    pub victim_demo: (Gender, Race),
    pub violence_level: ViolenceLevel,
}

/// One pair per assignment whose perpetrator and victim are both resolved.
pub fn collect_interactions(assignments: &[RoleAssignment], demographics: &DemographicIndex) -> Vec<InteractionPair> {
    assignments
        .iter()
        .filter_map(|a| {
            let (p, v) = a.pair()?;
            let movie = &a.triplet.movie_id;
            Some(InteractionPair {
                movie_id: movie.clone(),
                perpetrator_id: p.to_string(),
                victim_id: v.to_string(),
                perpetrator_demo: demographics.get(movie, p),
                victim_demo: demographics.get(movie, v),
                violence_level: a.violence_level,
            })
        })
        .collect()
}

/// Everything the role stage produces for a set of movies.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RoleOutput {
    /// All triplets from MED/HIGH utterances, before form filtering.
    pub triplets: Vec<SvoTriplet>,
    pub assignments: Vec<RoleAssignment>,
    /// Parsed sentences whose utterance had no posterior and was skipped.
    pub ungated_sentences: usize,
}

/// Run the role stage over parsed sentences, admitting only utterances whose
/// posterior record predicts MED or HIGH. Sentences of utterances without a
/// posterior are skipped and counted.
///
/// `extra_roster` adds characters per movie (for example from the
/// demographics table) to the speakers proper nouns are matched against.
pub fn extract_roles(
    screenplays: &[Screenplay],
    sentences: &[ParsedSentence],
    posteriors: &[PosteriorRecord],
    extra_roster: &BTreeMap<String, Vec<String>>,
) -> Result<RoleOutput> {
    let gate: HashMap<(&str, usize), ViolenceLevel> =
        posteriors.iter().map(|p| ((p.movie_id.as_str(), p.utterance_index), p.predicted_class)).collect();
    let movies: HashMap<&str, &Screenplay> = screenplays.iter().map(|s| (s.movie_id.as_str(), s)).collect();
    let mut rosters: HashMap<&str, Vec<String>> = HashMap::new();
    let mut out = RoleOutput::default();
    for sentence in sentences {
        let level = match gate.get(&(sentence.movie_id.as_str(), sentence.utt_index)) {
            Some(level) => *level,
            None => {
                out.ungated_sentences += 1;
                continue;
            }
        };
        if level == ViolenceLevel::Low {
            continue;
        }
        let sp = movies.get(sentence.movie_id.as_str()).ok_or_else(|| Error::UnknownUtterance {
            movie_id: sentence.movie_id.clone(),
            index: sentence.utt_index,
        })?;
        let roster = rosters.entry(sp.movie_id.as_str()).or_insert_with(|| {
            let mut r = sp.roster();
            for extra in extra_roster.get(&sp.movie_id).into_iter().flatten() {
                if !r.contains(extra) {
                    r.push(extra.clone());
                }
            }
            r
        });
        let triplets = extract_svo(sentence);
        for t in filter_forms(&triplets) {
            let resolution = resolve_participants(&t, &sp.utterances, roster)?;
            let speaker = sp.utterances.iter().find(|u| u.index == t.utterance_index).map(|u| u.speaker_id.as_str());
            out.assignments.push(assign_role(&t, resolution, speaker.unwrap_or_default(), level)?);
        }
        out.triplets.extend(triplets);
    }
    if out.ungated_sentences > 0 {
        log::warn!("{} parsed sentences had no posterior and were skipped", out.ungated_sentences);
    }
    Ok(out)
}

const ROLE_HEADER: [&str; 8] = [
    "movie_id",
    "utterance_index",
    "speaker_id",
    "speaker_role",
    "verb_lemma",
    "perpetrator_id",
    "victim_id",
    "violence_level",
];
const INTERACTION_HEADER: [&str; 8] =
    ["movie_id", "perpetrator_id", "perp_gender", "perp_race", "victim_id", "vic_gender", "vic_race", "violence_level"];

fn or_dash(s: &Option<String>) -> &str {
    s.as_deref().unwrap_or("-")
}

/// Role table, one row per assignment. Unresolved ids are written as `-`.
pub fn write_roles(assignments: &[RoleAssignment], w: impl Write) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(ROLE_HEADER)?;
    for a in assignments {
        out.write_record([
            a.triplet.movie_id.as_str(),
            &a.triplet.utterance_index.to_string(),
            &a.speaker_id,
            a.speaker_role.as_str(),
            &a.triplet.verb_lemma,
            or_dash(&a.perpetrator_id),
            or_dash(&a.victim_id),
            a.violence_level.as_str(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// A row of the role table as read back from disk. The triplet itself is not
/// stored there.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoleRow {
    pub movie_id: String,
    pub utterance_index: usize,
    pub speaker_id: String,
    pub speaker_role: SpeakerRole,
    pub verb_lemma: String,
    pub perpetrator_id: Option<String>,
    pub victim_id: Option<String>,
    pub violence_level: ViolenceLevel,
}

impl From<&RoleAssignment> for RoleRow {
    fn from(a: &RoleAssignment) -> Self {
        RoleRow {
            movie_id: a.triplet.movie_id.clone(),
            utterance_index: a.triplet.utterance_index,
            speaker_id: a.speaker_id.clone(),
            speaker_role: a.speaker_role,
            verb_lemma: a.triplet.verb_lemma.clone(),
            perpetrator_id: a.perpetrator_id.clone(),
            victim_id: a.victim_id.clone(),
            violence_level: a.violence_level,
        }
    }
}

fn table_reader(rdr: impl Read, header: &[&str]) -> Result<csv::Reader<impl Read>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(rdr);
    let found: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if found != header {
        return Err(Error::BadHeader { expected: header.join(","), found: found.join(",") });
    }
    Ok(reader)
}

fn dash_none(s: &str) -> Option<String> {
    (s != "-").then(|| s.to_string())
}

fn bad(record: usize, message: String) -> Error {
    Error::BadRecord { record, message }
}

pub fn read_roles(rdr: impl Read) -> Result<Vec<RoleRow>> {
    let mut reader = table_reader(rdr, &ROLE_HEADER)?;
    let mut out = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row?;
        let record = i + 1;
        let f = |j: usize| row.get(j).unwrap_or("");
        out.push(RoleRow {
            movie_id: f(0).to_string(),
            utterance_index: f(1).parse().map_err(|_| bad(record, format!("bad utterance index {:?}", f(1))))?,
            speaker_id: f(2).to_string(),
            speaker_role: f(3).parse().map_err(|_| bad(record, format!("unknown role {:?}", f(3))))?,
            verb_lemma: f(4).to_string(),
            perpetrator_id: dash_none(f(5)),
            victim_id: dash_none(f(6)),
            violence_level: f(7).parse()?,
        });
    }
    Ok(out)
}

pub fn write_interactions(pairs: &[InteractionPair], w: impl Write) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(INTERACTION_HEADER)?;
    for p in pairs {
        out.write_record([
            p.movie_id.as_str(),
            &p.perpetrator_id,
            p.perpetrator_demo.0.as_str(),
            p.perpetrator_demo.1.as_str(),
            &p.victim_id,
            p.victim_demo.0.as_str(),
            p.victim_demo.1.as_str(),
            p.violence_level.as_str(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_interactions(rdr: impl Read) -> Result<Vec<InteractionPair>> {
    let mut reader = table_reader(rdr, &INTERACTION_HEADER)?;
    let mut out = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row?;
        let record = i + 1;
        let f = |j: usize| row.get(j).unwrap_or("");
        let gender = |j: usize| Gender::parse(f(j)).ok_or_else(|| bad(record, format!("unknown gender {:?}", f(j))));
        let race = |j: usize| Race::parse(f(j)).ok_or_else(|| bad(record, format!("unknown race {:?}", f(j))));
        out.push(InteractionPair {
            movie_id: f(0).to_string(),
            perpetrator_id: f(1).to_string(),
            perpetrator_demo: (gender(2)?, race(3)?),
            victim_id: f(4).to_string(),
            victim_demo: (gender(5)?, race(6)?),
            violence_level: f(7).parse()?,
        });
    }
    Ok(out)
}

/// Form distribution as a `form,count,percent` table.
pub fn write_form_distribution(triplets: &[SvoTriplet], w: impl Write) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["form", "count", "percent"])?;
    let pct = if triplets.is_empty() { None } else { Some(form_distribution(triplets)?) };
    for f in Form::ALL {
        let count = triplets.iter().filter(|t| t.form == f).count();
        let p = pct.as_ref().map_or(0.0, |m| m[&f]);
        out.write_record([f.as_str(), &count.to_string(), &p.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::script::{load_conllu, ConlluToken};

    fn tok(surface: &str, lemma: &str, upos: &str, head: usize, deprel: &str) -> ConlluToken {
        ConlluToken {
            surface: surface.into(),
            lemma: lemma.into(),
            upos: upos.into(),
            head,
            deprel: deprel.into(),
            misc: BTreeMap::new(),
        }
    }

    fn sentence(tokens: Vec<ConlluToken>) -> ParsedSentence {
        ParsedSentence { movie_id: "m1".into(), utt_index: 0, tokens }
    }

    fn mention(surface: &str, upos: &str) -> Mention {
        Mention { surface: surface.into(), upos: upos.into(), coref: None }
    }

    fn triplet(subject: Mention, verb: &str, object: Mention, index: usize) -> SvoTriplet {
        SvoTriplet {
            movie_id: "m1".into(),
            utterance_index: index,
            form: Form::from_upos(&subject.upos, &object.upos),
            subject,
            verb_lemma: verb.into(),
            object,
            passive: false,
        }
    }

    #[test]
    fn they_attacked_her() {
        let s = sentence(vec![
            tok("They", "they", "PRON", 2, "nsubj"),
            tok("attacked", "attack", "VERB", 0, "root"),
            tok("her", "she", "PRON", 2, "obj"),
        ]);
        let t = extract_svo(&s);
        assert_eq!(t.len(), 1);
        assert_eq!(
            (t[0].subject.surface.as_str(), t[0].verb_lemma.as_str(), t[0].object.surface.as_str()),
            ("They", "attack", "her")
        );
        assert_eq!(t[0].form, Form::Pvp);
        assert!(!t[0].passive);
    }

    #[test]
    fn passive_is_turned_around() {
        let text = "# movie_id = m1\n# utt_index = 0\n\
            1\tI\tI\tPRON\t_\t_\t3\tnsubj:pass\t_\t_\n\
            2\twas\tbe\tAUX\t_\t_\t3\taux:pass\t_\t_\n\
            3\tattacked\tattack\tVERB\t_\t_\t0\troot\t_\t_\n\
            4\tby\tby\tADP\t_\t_\t5\tcase\t_\t_\n\
            5\tthem\tthey\tPRON\t_\t_\t3\tobl\t_\t_\n\n";
        let s = &load_conllu(text.as_bytes()).unwrap()[0];
        let t = extract_svo(s);
        assert_eq!(t.len(), 1);
        assert_eq!(t[0].subject.surface, "them");
        assert_eq!(t[0].object.surface, "I");
        assert!(t[0].passive);
        assert_eq!(t[0].form, Form::Pvp);

        // the same clause with an explicit agent relation
        let mut s2 = s.clone();
        s2.tokens[4].deprel = "obl:agent".into();
        assert_eq!(extract_svo(&s2), t);
    }

    #[test]
    fn no_object_no_triplet() {
        let s = sentence(vec![
            tok("The", "the", "DET", 2, "det"),
            tok("storm", "storm", "NOUN", 3, "nsubj"),
            tok("ended", "end", "VERB", 0, "root"),
        ]);
        assert!(extract_svo(&s).is_empty());
    }

    #[test]
    fn two_objects_two_triplets() {
        let s = sentence(vec![
            tok("I", "I", "PRON", 2, "nsubj"),
            tok("shot", "shoot", "VERB", 0, "root"),
            tok("him", "he", "PRON", 2, "obj"),
            tok("and", "and", "CCONJ", 5, "cc"),
            tok("her", "she", "PRON", 2, "obj"),
        ]);
        let t = extract_svo(&s);
        assert_eq!(t.len(), 2);
        assert_eq!(t[1].object.surface, "her");
    }

    #[test]
    fn form_filter_and_distribution() {
        let pron = || mention("he", "PRON");
        let forms = [
            triplet(pron(), "hit", pron(), 0),
            triplet(pron(), "hit", mention("door", "NOUN"), 0),
            triplet(pron(), "hit", mention("Dutch", "PROPN"), 0),
            triplet(mention("dog", "NOUN"), "bite", mention("man", "NOUN"), 0),
        ];
        let kept: Vec<Form> = filter_forms(&forms).iter().map(|t| t.form).collect();
        assert_eq!(kept, [Form::Pvp, Form::Pvpn]);
        assert!(filter_forms(&[]).is_empty());
        assert!(filter_forms(&forms[3..]).is_empty());

        let d = form_distribution(&[forms[0].clone(), forms[0].clone(), forms[1].clone(), forms[3].clone()]).unwrap();
        assert_eq!(d[&Form::Pvp], 50.0);
        assert_eq!(d[&Form::Pvn], 25.0);
        assert_eq!(d[&Form::Nvn], 25.0);
        assert_eq!(d[&Form::Pvpn], 0.0);
        assert_eq!(d[&Form::Other], 0.0);
        assert!(matches!(form_distribution(&[]), Err(Error::EmptyInput(_))));
    }

    fn dialogue(speakers: &[&str]) -> Vec<Utterance> {
        speakers.iter().enumerate().map(|(i, s)| Utterance::new("m1", i, s, "line")).collect()
    }

    #[test]
    fn pronoun_table() {
        let u = dialogue(&["MARY", "JOHN", "JOHN"]);
        let roster = vec!["MARY".to_string(), "JOHN".to_string(), "DUTCH".to_string()];
        let t = triplet(mention("I", "PRON"), "kill", mention("you", "PRON"), 2);
        assert_eq!(resolve_participants(&t, &u, &roster).unwrap(), (Some("JOHN".into()), Some("MARY".into())));

        let t = triplet(mention("I", "PRON"), "find", mention("Dutch", "PROPN"), 1);
        assert_eq!(resolve_participants(&t, &u, &roster).unwrap().1, Some("DUTCH".into()));

        let mut her = mention("her", "PRON");
        let t = triplet(mention("they", "PRON"), "attack", her.clone(), 0);
        assert_eq!(resolve_participants(&t, &u, &roster).unwrap(), (None, None));
        her.coref = Some("Mary".into());
        let t = triplet(mention("they", "PRON"), "attack", her, 0);
        assert_eq!(resolve_participants(&t, &u, &roster).unwrap().1, Some("MARY".into()));
    }

    #[test]
    fn addressee_looks_back_then_forward() {
        let u = dialogue(&["A", "B", "B", "C", "D", "D", "D", "D"]);
        assert_eq!(addressee(&u, 0), Some("B"));
        assert_eq!(addressee(&u, 2), Some("A"));
        assert_eq!(addressee(&u, 3), Some("B"));
        assert_eq!(addressee(&u, 6), None);
    }

    #[test]
    fn role_rules() {
        let t = triplet(mention("I", "PRON"), "kill", mention("you", "PRON"), 0);
        let a = assign_role(&t, (Some("JOHN".into()), Some("MARY".into())), "JOHN", ViolenceLevel::High).unwrap();
        assert_eq!(a.speaker_role, SpeakerRole::Perpetrator);
        assert_eq!(a.pair(), Some(("JOHN", "MARY")));

        let a = assign_role(&t, (None, None), "JOHN", ViolenceLevel::Med).unwrap();
        assert_eq!(a.speaker_role, SpeakerRole::Narrator);
        assert_eq!(a.pair(), None);

        let t = triplet(mention("you", "PRON"), "hit", mention("me", "PRON"), 0);
        let a = assign_role(&t, (Some("REX".into()), Some("ZOE".into())), "ZOE", ViolenceLevel::High).unwrap();
        assert_eq!(a.speaker_role, SpeakerRole::Victim);
        assert_eq!(a.pair(), Some(("REX", "ZOE")));

        assert!(matches!(assign_role(&t, (None, None), "ZOE", ViolenceLevel::Low), Err(Error::LowViolence)));
    }

    #[test]
    fn interactions_fall_back_to_unknown() {
        let t = triplet(mention("I", "PRON"), "kill", mention("you", "PRON"), 0);
        let a = assign_role(&t, (Some("JOHN".into()), Some("MARY".into())), "JOHN", ViolenceLevel::High).unwrap();
        let narr = assign_role(&t, (Some("JOHN".into()), None), "ZOE", ViolenceLevel::High).unwrap();
        let demo =
            crate::script::load_demographics("movie_id,character_id,gender,race\nm1,JOHN,MALE,WHITE\n".as_bytes())
                .unwrap()
                .index();
        let pairs = collect_interactions(&[a, narr], &demo);
        assert_eq!(pairs.len(), 1);
        assert_eq!(pairs[0].perpetrator_demo, (Gender::Male, Race::White));
        assert_eq!(pairs[0].victim_demo, (Gender::Unknown, Race::Unknown));
    }

    #[test]
    fn tables_round_trip() {
        let t = triplet(mention("I", "PRON"), "kill", mention("you", "PRON"), 3);
        let a = assign_role(&t, (Some("JOHN".into()), None), "JOHN", ViolenceLevel::Med).unwrap();
        let mut buf = Vec::new();
        write_roles(std::slice::from_ref(&a), &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().nth(1), Some("m1,3,JOHN,PERPETRATOR,kill,JOHN,-,MED"));
        assert_eq!(read_roles(buf.as_slice()).unwrap(), vec![RoleRow::from(&a)]);

        let pair = InteractionPair {
            movie_id: "m1".into(),
            perpetrator_id: "JOHN".into(),
            victim_id: "MARY".into(),
            perpetrator_demo: (Gender::Male, Race::White),
            victim_demo: (Gender::Female, Race::Black),
            violence_level: ViolenceLevel::High,
        };
        let mut buf = Vec::new();
        write_interactions(std::slice::from_ref(&pair), &mut buf).unwrap();
        assert_eq!(read_interactions(buf.as_slice()).unwrap(), vec![pair]);
    }
}
