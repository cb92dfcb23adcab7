//! Hypothesis tests used on the role tables, plus the distribution functions
//! behind their p-values.

mod analysis;
mod special;

use std::collections::HashMap;
use std::fmt;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use analysis::{
    analyze_roles, interaction_residuals, read_stats_report, write_residuals, write_stats_report, InteractionGrouping,
    ReportRow, ResidualCell,
};
pub use special::{beta_reg, gamma_reg, ln_gamma};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TestKind {
    #[serde(rename = "T_TEST")]
    TTest,
    #[serde(rename = "ANOVA_F")]
    AnovaF,
    #[serde(rename = "CHI2_PROP")]
    Chi2Prop,
}

impl TestKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TestKind::TTest => "T_TEST",
            TestKind::AnovaF => "ANOVA_F",
            TestKind::Chi2Prop => "CHI2_PROP",
        }
    }
}

impl fmt::Display for TestKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for TestKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "T_TEST" => Ok(TestKind::TTest),
            "ANOVA_F" => Ok(TestKind::AnovaF),
            "CHI2_PROP" => Ok(TestKind::Chi2Prop),
            _ => Err(Error::BadRecord { record: 0, message: format!("unknown test kind {s:?}") }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatResult {
    pub test_kind: TestKind,
    pub statistic: f64,
    pub df1: f64,
    pub df2: Option<f64>,
    pub p_value: f64,
    pub p_adjusted: Option<f64>,
}

impl StatResult {
    fn new(test_kind: TestKind, statistic: f64, df1: f64, df2: Option<f64>, p_value: f64) -> Self {
        StatResult { test_kind, statistic, df1, df2, p_value: p_value.clamp(0.0, 1.0), p_adjusted: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Distribution {
    StudentT(f64),
    FisherF(f64, f64),
    ChiSquared(f64),
}

impl Distribution {
    fn check(self) -> Result<()> {
        let dfs = match self {
            Distribution::StudentT(d) | Distribution::ChiSquared(d) => [d, d],
            Distribution::FisherF(a, b) => [a, b],
        };
        match dfs.iter().find(|d| !(**d > 0.0 && d.is_finite())) {
            Some(d) => Err(Error::NonPositiveDf(*d)),
            None => Ok(()),
        }
    }
}

/// `P(X ≤ x)`.
pub fn dist_cdf(dist: Distribution, x: f64) -> Result<f64> {
    dist.check()?;
    Ok(match dist {
        Distribution::StudentT(df) => {
            let tail = 0.5 * beta_reg(df / 2.0, 0.5, df / (df + x * x));
            if x > 0.0 {
                1.0 - tail
            } else {
                tail
            }
        }
        Distribution::FisherF(d1, d2) => {
            if x <= 0.0 {
                0.0
            } else {
                beta_reg(d1 / 2.0, d2 / 2.0, d1 * x / (d1 * x + d2))
            }
        }
        Distribution::ChiSquared(df) => gamma_reg(df / 2.0, x.max(0.0) / 2.0).0,
    })
}

/// `P(X > x)`, computed without cancellation in the upper tail.
pub fn dist_sf(dist: Distribution, x: f64) -> Result<f64> {
    dist.check()?;
    Ok(match dist {
        Distribution::StudentT(df) => {
            let tail = 0.5 * beta_reg(df / 2.0, 0.5, df / (df + x * x));
            if x > 0.0 {
                tail
            } else {
                1.0 - tail
            }
        }
        Distribution::FisherF(d1, d2) => {
            if x <= 0.0 {
                1.0
            } else {
                beta_reg(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * x))
            }
        }
        Distribution::ChiSquared(df) => gamma_reg(df / 2.0, x.max(0.0) / 2.0).1,
    })
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sum_sq_dev(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum()
}

/// Subtract each group's mean from its members. Equivalent to the residuals
/// of least squares on one dummy per group.
pub fn residualize_fixed_effect<G: Eq + Hash>(values: &[f64], group_ids: &[G]) -> Result<Vec<f64>> {
    if values.len() != group_ids.len() {
        return Err(Error::LengthMismatch { left: values.len(), right: group_ids.len() });
    }
    if values.is_empty() {
        return Err(Error::EmptyInput("values"));
    }
    let mut sums: HashMap<&G, (f64, usize)> = HashMap::new();
    for (v, g) in values.iter().zip(group_ids) {
        let e = sums.entry(g).or_insert((0.0, 0));
        e.0 += v;
        e.1 += 1;
    }
    Ok(values
        .iter()
        .zip(group_ids)
        .map(|(v, g)| {
            let (s, n) = sums[g];
            v - s / n as f64
        })
        .collect())
}

/// Pooled-variance two-sample Student's t with a two-sided p-value.
pub fn t_test_two_sample(a: &[f64], b: &[f64]) -> Result<StatResult> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::DegenerateVariance("each sample needs at least two values"));
    }
    let (n1, n2) = (a.len() as f64, b.len() as f64);
    let df = n1 + n2 - 2.0;
    let pooled = (sum_sq_dev(a) + sum_sq_dev(b)) / df;
    if !(pooled > 0.0 && pooled.is_finite()) {
        return Err(Error::DegenerateVariance("pooled variance is zero"));
    }
    let t = (mean(a) - mean(b)) / (pooled * (1.0 / n1 + 1.0 / n2)).sqrt();
    let p = beta_reg(df / 2.0, 0.5, df / (df + t * t));
    Ok(StatResult::new(TestKind::TTest, t, df, None, p))
}

/// One-way ANOVA F test.
pub fn anova_oneway(groups: &[Vec<f64>]) -> Result<StatResult> {
    if groups.len() < 2 {
        return Err(Error::TooFewGroups(groups.len()));
    }
    if groups.iter().any(Vec::is_empty) {
        return Err(Error::EmptyInput("ANOVA group"));
    }
    let g = groups.len() as f64;
    let n: f64 = groups.iter().map(|x| x.len() as f64).sum();
    if n <= g {
        return Err(Error::DegenerateVariance("no within-group degrees of freedom"));
    }
    let all: Vec<f64> = groups.iter().flatten().copied().collect();
    let grand = mean(&all);
    let ss_between: f64 = groups.iter().map(|x| x.len() as f64 * (mean(x) - grand).powi(2)).sum();
    let ss_within: f64 = groups.iter().map(|x| sum_sq_dev(x)).sum();
    if !(ss_within > 0.0 && ss_within.is_finite()) {
        return Err(Error::DegenerateVariance("within-group variance is zero"));
    }
    let (df1, df2) = (g - 1.0, n - g);
    let f = (ss_between / df1) / (ss_within / df2);
    let p = dist_sf(Distribution::FisherF(df1, df2), f)?;
    Ok(StatResult::new(TestKind::AnovaF, f, df1, Some(df2), p))
}

/// Pooled two-proportion χ² test with one degree of freedom and no
/// continuity correction. When both samples are all-success or all-failure
/// the proportions are equal and the statistic is 0.
pub fn prop_test_two(x1: u64, n1: u64, x2: u64, n2: u64) -> Result<StatResult> {
    for (x, n) in [(x1, n1), (x2, n2)] {
        if n == 0 {
            return Err(Error::ZeroMarginal);
        }
        if x > n {
            return Err(Error::CountExceedsTotal { x, n });
        }
    }
    let (p1, p2) = (x1 as f64 / n1 as f64, x2 as f64 / n2 as f64);
    let pooled = (x1 + x2) as f64 / (n1 + n2) as f64;
    let var = pooled * (1.0 - pooled) * (1.0 / n1 as f64 + 1.0 / n2 as f64);
    let chi2 = if var > 0.0 { (p1 - p2).powi(2) / var } else { 0.0 };
    let p = dist_sf(Distribution::ChiSquared(1.0), chi2)?;
    Ok(StatResult::new(TestKind::Chi2Prop, chi2, 1.0, None, p))
}

/// Multiply every p-value by the number of tests, clamped to 1.
pub fn bonferroni(p_values: &[f64]) -> Result<Vec<f64>> {
    if let Some(p) = p_values.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::ProbabilityOutOfRange(*p));
    }
    let m = p_values.len() as f64;
    Ok(p_values.iter().map(|p| (p * m).min(1.0)).collect())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContingencyTable {
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

impl ContingencyTable {
    pub fn new(row_labels: Vec<String>, col_labels: Vec<String>, counts: Vec<Vec<u64>>) -> Result<Self> {
        if counts.len() != row_labels.len() {
            return Err(Error::LengthMismatch { left: counts.len(), right: row_labels.len() });
        }
        if let Some(row) = counts.iter().find(|r| r.len() != col_labels.len()) {
            return Err(Error::LengthMismatch { left: row.len(), right: col_labels.len() });
        }
        Ok(ContingencyTable { row_labels, col_labels, counts })
    }

    /// Expected counts under independence.
    pub fn expected(&self) -> Result<Vec<Vec<f64>>> {
        let rows: Vec<u64> = self.counts.iter().map(|r| r.iter().sum()).collect();
        let cols: Vec<u64> = (0..self.col_labels.len()).map(|j| self.counts.iter().map(|r| r[j]).sum()).collect();
        if rows.is_empty() || cols.is_empty() || rows.contains(&0) || cols.contains(&0) {
            return Err(Error::ZeroMarginal);
        }
        let total: u64 = rows.iter().sum();
        Ok(rows.iter().map(|&r| cols.iter().map(|&c| r as f64 * c as f64 / total as f64).collect()).collect())
    }
}

/// `z_ij = (O_ij − E_ij) / √E_ij`.
pub fn pearson_residuals(table: &ContingencyTable) -> Result<Vec<Vec<f64>>> {
    let expected = table.expected()?;
    Ok(table
        .counts
        .iter()
        .zip(&expected)
        .map(|(obs, exp)| obs.iter().zip(exp).map(|(&o, &e)| (o as f64 - e) / e.sqrt()).collect())
        .collect())
}

/// Unweighted mean of per-class F1. Every listed class counts, including
/// classes absent from both sequences, which score 0.
pub fn macro_f1<T: PartialEq>(predictions: &[T], gold: &[T], classes: &[T]) -> Result<f64> {
    if predictions.len() != gold.len() {
        return Err(Error::LengthMismatch { left: predictions.len(), right: gold.len() });
    }
    if gold.is_empty() || classes.is_empty() {
        return Err(Error::EmptyInput("macro-F1 input"));
    }
    let mut total = 0.0;
    for c in classes {
        let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
        for (p, g) in predictions.iter().zip(gold) {
            match (p == c, g == c) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => {}
            }
        }
        let denom = 2 * tp + fp + fn_;
        if denom > 0 {
            total += 2.0 * tp as f64 / denom as f64;
        }
    }
    Ok(total / classes.len() as f64)
}

/// `***` below 0.001, `**` below 0.005, `*` below 0.05.
pub fn significance_stars(p: f64) -> &'static str {
    if p < 0.001 {
        "***"
    } else if p < 0.005 {
        "**"
    } else if p < 0.05 {
        "*"
    } else {
        ""
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn residualize_examples() {
        assert_eq!(residualize_fixed_effect(&[1.0, 1.0, 0.0, 0.0], &["s1", "s1", "s2", "s2"]).unwrap(), vec![0.0; 4]);
        assert_eq!(residualize_fixed_effect(&[1.0, 0.0], &["s1", "s1"]).unwrap(), vec![0.5, -0.5]);
        assert_eq!(residualize_fixed_effect(&[3.0, -2.0, 7.5], &[1, 2, 3]).unwrap(), vec![0.0; 3]);
        assert!(matches!(residualize_fixed_effect(&[1.0], &[1, 2]), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn t_test_examples() {
        let r = t_test_two_sample(&[1.0, 2.0, 3.0], &[2.0, 3.0, 4.0]).unwrap();
        // t = −1 / sqrt(1 · 2/3)
        assert!(close(r.statistic, -(1.5f64).sqrt(), 1e-12));
        assert_eq!(r.df1, 4.0);
        assert!(close(r.p_value, 0.287_864_134_7, 1e-9), "{}", r.p_value);

        let same = t_test_two_sample(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(same.statistic, 0.0);
        assert!(close(same.p_value, 1.0, 1e-15));

        assert!(matches!(t_test_two_sample(&[1.0, 1.0], &[1.0, 1.0]), Err(Error::DegenerateVariance(_))));
    }

    #[test]
    fn anova_examples() {
        let g = vec![1.0, 2.0, 3.0];
        let r = anova_oneway(&[g.clone(), g.clone(), g]).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0);

        let r = anova_oneway(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert!(close(r.statistic, 8.0, 1e-12));
        assert_eq!((r.df1, r.df2), (1.0, Some(2.0)));
        // F(1, 2) = t(2)², p = 1 − 2/√(2 + 8)·(…) ; closed form: p = 1 − sqrt(F/(F+2))
        assert!(close(r.p_value, 1.0 - (8.0f64 / 10.0).sqrt(), 1e-12));

        assert!(matches!(anova_oneway(&[vec![1.0, 2.0]]), Err(Error::TooFewGroups(1))));
    }

    #[test]
    fn prop_test_examples() {
        let r = prop_test_two(10, 100, 20, 100).unwrap();
        assert!(close(r.statistic, 0.01 / (0.15 * 0.85 * 0.02), 1e-12));
        assert!(close(r.statistic, 3.921_568_627, 1e-8));
        assert!(close(r.p_value, 0.047_670, 1e-5));

        let eq = prop_test_two(5, 50, 10, 100).unwrap();
        assert!(close(eq.statistic, 0.0, 1e-15));
        assert!(close(eq.p_value, 1.0, 1e-12));

        let r = prop_test_two(0, 10, 10, 10).unwrap();
        assert!(close(r.statistic, 20.0, 1e-12));
        assert!(close(r.p_value, 7.744e-6, 1e-8));

        assert!(matches!(prop_test_two(11, 10, 1, 10), Err(Error::CountExceedsTotal { x: 11, n: 10 })));
    }

    #[test]
    fn bonferroni_examples() {
        assert_eq!(bonferroni(&[0.01, 0.2, 0.2, 0.2, 0.2]).unwrap()[0], 0.05);
        assert_eq!(bonferroni(&[0.3, 0.0, 0.0, 0.0, 0.0]).unwrap()[0], 1.0);
        assert!(bonferroni(&[]).unwrap().is_empty());
        assert!(matches!(bonferroni(&[1.5]), Err(Error::ProbabilityOutOfRange(_))));
    }

    #[test]
    fn pearson_residual_examples() {
        let t = |c: Vec<Vec<u64>>| {
            let labels = |n: usize| (0..n).map(|i| i.to_string()).collect();
            ContingencyTable::new(labels(c.len()), labels(c[0].len()), c).unwrap()
        };
        assert_eq!(pearson_residuals(&t(vec![vec![10, 10], vec![10, 10]])).unwrap(), vec![vec![0.0; 2]; 2]);
        assert_eq!(
            pearson_residuals(&t(vec![vec![2, 0], vec![0, 2]])).unwrap(),
            vec![vec![1.0, -1.0], vec![-1.0, 1.0]]
        );
        assert!(matches!(pearson_residuals(&t(vec![vec![1, 0], vec![0, 0]])), Err(Error::ZeroMarginal)));
    }

    #[test]
    fn macro_f1_examples() {
        let c = ["L", "M", "H"];
        assert_eq!(macro_f1(&["L", "M", "H"], &["L", "M", "H"], &c).unwrap(), 1.0);
        assert!(close(macro_f1(&["L", "L", "L"], &["L", "M", "H"], &c).unwrap(), 0.5 / 3.0, 1e-15));
        assert_eq!(macro_f1(&["M", "M"], &["L", "L"], &c).unwrap(), 0.0);
        assert!(matches!(macro_f1(&["L"], &["L", "M"], &c), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn cdf_examples() {
        for df in [1.0, 3.5, 40.0] {
            assert_eq!(dist_cdf(Distribution::StudentT(df), 0.0).unwrap(), 0.5);
            assert_eq!(dist_cdf(Distribution::FisherF(df, 2.0), 0.0).unwrap(), 0.0);
        }
        assert!(close(dist_cdf(Distribution::ChiSquared(1.0), 3.841).unwrap(), 0.95, 1e-4));
        assert!(matches!(dist_cdf(Distribution::ChiSquared(0.0), 1.0), Err(Error::NonPositiveDf(_))));
        assert!(matches!(dist_cdf(Distribution::FisherF(2.0, -1.0), 1.0), Err(Error::NonPositiveDf(_))));
    }

    #[test]
    fn stars() {
        assert_eq!(significance_stars(0.0005), "***");
        assert_eq!(significance_stars(0.004), "**");
        assert_eq!(significance_stars(0.03), "*");
        assert_eq!(significance_stars(0.05), "");
    }
}
