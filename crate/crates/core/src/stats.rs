//! Descriptive statistics, the paired t-test and Likert summaries.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::metrics::TrialMetrics;
use crate::sim::Condition;

pub const DEFAULT_ALPHA: f64 = 0.05;
/// Differences whose spread is below this, relative to the larger of 1 and
/// the largest magnitude in the data, count as exact ties.
pub const TIE_TOLERANCE: f64 = 1e-9;
const CF_TOLERANCE: f64 = 1e-10;
const CF_MAX_ITERATIONS: usize = 300;

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = LANCZOS[0];
    let t = x + LANCZOS_G + 0.5;
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Continued fraction for the incomplete beta function (modified Lentz).
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=CF_MAX_ITERATIONS {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < CF_TOLERANCE {
            break;
        }
    }
    h
}

/// Regularized incomplete beta function `I_x(a, b)`.
pub fn incomplete_beta(a: f64, b: f64, x: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::InvalidArgument(format!("beta parameters must be positive, got ({a}, {b})")));
    }
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::InvalidArgument(format!("x must lie in [0, 1], got {x}")));
    }
    if x == 0.0 || x == 1.0 {
        return Ok(x);
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    Ok(if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    })
}

/// Student-t cumulative distribution function.
pub fn student_t_cdf(t: f64, df: f64) -> Result<f64> {
    if !(df > 0.0) {
        return Err(Error::InvalidArgument(format!("degrees of freedom must be positive, got {df}")));
    }
    if t.is_nan() {
        return Err(Error::InvalidArgument("t is NaN".into()));
    }
    if t.is_infinite() {
        return Ok(if t > 0.0 { 1.0 } else { 0.0 });
    }
    let tail = 0.5 * incomplete_beta(df / 2.0, 0.5, df / (df + t * t))?;
    Ok(if t > 0.0 { 1.0 - tail } else { tail })
}

/// Two-sided p-value `P(|T| >= |t|)`.
pub fn two_sided_p(t: f64, df: f64) -> Result<f64> {
    if t.is_infinite() {
        return Ok(0.0);
    }
    incomplete_beta(df / 2.0, 0.5, df / (df + t * t))
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairedSample {
    pub values_a: Vec<f64>,
    pub values_b: Vec<f64>,
    pub labels: (String, String),
}

impl PairedSample {
    pub fn new(values_a: Vec<f64>, values_b: Vec<f64>, labels: (&str, &str)) -> Result<Self> {
        if values_a.len() != values_b.len() {
            return Err(Error::InvalidArgument(format!(
                "paired samples differ in length: {} vs {}",
                values_a.len(),
                values_b.len()
            )));
        }
        if values_a.len() < 2 {
            return Err(Error::InvalidArgument("at least 2 pairs required".into()));
        }
        if values_a.iter().chain(&values_b).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite value in paired sample".into()));
        }
        Ok(Self {
            values_a,
            values_b,
            labels: (labels.0.to_string(), labels.1.to_string()),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TestResult {
    pub t_statistic: f64,
    pub degrees_of_freedom: usize,
    /// Two-sided.
    pub p_value: f64,
    pub mean_difference: f64,
    pub sd_difference: f64,
    /// The differences have no spread beyond [`TIE_TOLERANCE`]. With zero
    /// mean `t = 0` and `p = 1`; otherwise `t` is infinite and `p = 0`.
    pub degenerate: bool,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sample_sd(xs: &[f64], m: f64) -> f64 {
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)).sqrt()
}

/// Paired t-test on `a - b`.
pub fn paired_t_test(s: &PairedSample) -> Result<TestResult> {
    let d: Vec<f64> = s.values_a.iter().zip(&s.values_b).map(|(a, b)| a - b).collect();
    let n = d.len();
    let m = mean(&d);
    let sd = sample_sd(&d, m);
    let df = n - 1;
    let scale = s
        .values_a
        .iter()
        .chain(&s.values_b)
        .fold(1.0f64, |acc, x| acc.max(x.abs()));
    let tie = TIE_TOLERANCE * scale;
    if sd <= tie {
        let zero_mean = m.abs() <= tie;
        return Ok(TestResult {
            t_statistic: if zero_mean { 0.0 } else { m.signum() * f64::INFINITY },
            degrees_of_freedom: df,
            p_value: if zero_mean { 1.0 } else { 0.0 },
            mean_difference: m,
            sd_difference: sd,
            degenerate: true,
        });
    }
    let t = m / (sd / (n as f64).sqrt());
    Ok(TestResult {
        t_statistic: t,
        degrees_of_freedom: df,
        p_value: two_sided_p(t, df as f64)?,
        mean_difference: m,
        sd_difference: sd,
        degenerate: false,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Description {
    pub n: usize,
    pub mean: f64,
    /// `None` for a single value.
    pub sd: Option<f64>,
    pub median: f64,
    pub min: f64,
    pub max: f64,
}

pub fn describe(xs: &[f64]) -> Result<Description> {
    if xs.is_empty() {
        return Err(Error::InvalidArgument("cannot describe an empty sample".into()));
    }
    if xs.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite value in sample".into()));
    }
    let m = mean(xs);
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    };
    Ok(Description {
        n,
        mean: m,
        sd: (n > 1).then(|| sample_sd(xs, m)),
        median,
        min: sorted[0],
        max: sorted[n - 1],
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LikertSummary {
    /// Lower central value when the count is even.
    pub median: u8,
    /// Responses at levels 1 through 5.
    pub counts: [usize; 5],
}

pub fn likert_summary(responses: &[i64]) -> Result<LikertSummary> {
    if responses.is_empty() {
        return Err(Error::InvalidArgument("no Likert responses".into()));
    }
    let mut counts = [0usize; 5];
    for &r in responses {
        if !(1..=5).contains(&r) {
            return Err(Error::InvalidArgument(format!("Likert response {r} outside 1..5")));
        }
        counts[(r - 1) as usize] += 1;
    }
    let target = (responses.len() + 1) / 2;
    let mut seen = 0;
    let mut median = 5;
    for (level, &c) in counts.iter().enumerate() {
        seen += c;
        if seen >= target {
            median = level as u8 + 1;
            break;
        }
    }
    Ok(LikertSummary { median, counts })
}

/// Whitespace-separated integer responses; `#` starts a comment line.
pub fn load_likert(path: impl AsRef<Path>) -> Result<Vec<i64>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        if !line.trim_start().starts_with('#') {
            for tok in line.split_whitespace() {
                out.push(
                    tok.parse()
                        .map_err(|_| Error::parse(offset, format!("bad Likert value '{tok}'")))?,
                );
            }
        }
        offset += line.len();
    }
    Ok(out)
}

/// Per-metric comparison between the two conditions.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricComparison {
    pub metric: &'static str,
    pub guided: Description,
    pub unguided: Description,
    pub test: TestResult,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Analysis {
    pub participants: Vec<String>,
    pub alpha: f64,
    pub comparisons: Vec<MetricComparison>,
    pub guided_breaches: usize,
    pub unguided_breaches: usize,
    /// Participants left out for lacking one of the two conditions.
    pub excluded: Vec<String>,
}

pub const METRIC_NAMES: [&str; 4] = ["deviation_mean_mm", "deviation_max_mm", "margin_min_mm", "time_s"];

fn metric_value(m: &TrialMetrics, name: &str) -> f64 {
    match name {
        "deviation_mean_mm" => m.deviation_mean,
        "deviation_max_mm" => m.deviation_max,
        "margin_min_mm" => m.margin_min,
        _ => m.completion_time,
    }
}

/// Pairs trials by participant (in order of first appearance) and compares conditions.
pub fn analyze(trials: &[TrialMetrics], alpha: f64) -> Result<Analysis> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let mut order: Vec<&str> = Vec::new();
    let mut by: BTreeMap<(&str, Condition), &TrialMetrics> = BTreeMap::new();
    for t in trials {
        if !order.contains(&t.participant.as_str()) {
            order.push(&t.participant);
        }
        if by.insert((&t.participant, t.condition), t).is_some() {
            return Err(Error::InvalidArgument(format!(
                "participant '{}' has two {} trials",
                t.participant, t.condition
            )));
        }
    }
    let (complete, excluded): (Vec<&str>, Vec<&str>) = order.iter().partition(|p| {
        by.contains_key(&(**p, Condition::Guided)) && by.contains_key(&(**p, Condition::Unguided))
    });
    if complete.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "{} complete participant(s), at least 2 required",
            complete.len()
        )));
    }
    let pick = |c: Condition, name: &str| -> Vec<f64> {
        complete.iter().map(|p| metric_value(by[&(*p, c)], name)).collect()
    };
    let comparisons = METRIC_NAMES
        .iter()
        .map(|&name| {
            let g = pick(Condition::Guided, name);
            let u = pick(Condition::Unguided, name);
            Ok(MetricComparison {
                metric: name,
                guided: describe(&g)?,
                unguided: describe(&u)?,
                test: paired_t_test(&PairedSample::new(g, u, ("guided", "unguided"))?)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let breaches = |c: Condition| complete.iter().filter(|p| by[&(**p, c)].breach).count();
    Ok(Analysis {
        participants: complete.iter().map(|s| s.to_string()).collect(),
        alpha,
        comparisons,
        guided_breaches: breaches(Condition::Guided),
        unguided_breaches: breaches(Condition::Unguided),
        excluded: excluded.iter().map(|s| s.to_string()).collect(),
    })
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_string(), |v| v.to_string())
}

impl Analysis {
    pub fn comparison(&self, metric: &str) -> Option<&MetricComparison> {
        self.comparisons.iter().find(|c| c.metric == metric)
    }

    pub fn report_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "participants {}", self.participants.len());
        let _ = writeln!(s, "trials {}", 2 * self.participants.len());
        let _ = writeln!(s, "alpha {}", self.alpha);
        if !self.excluded.is_empty() {
            let _ = writeln!(s, "excluded {}", self.excluded.join(" "));
        }
        let _ = writeln!(s, "breaches guided={} unguided={}", self.guided_breaches, self.unguided_breaches);
        for c in &self.comparisons {
            let _ = writeln!(s, "\n[{}]", c.metric);
            for (label, d) in [("guided", &c.guided), ("unguided", &c.unguided)] {
                let _ = writeln!(
                    s,
                    "{label} n={} mean={} sd={} median={} min={} max={}",
                    d.n,
                    d.mean,
                    opt(d.sd),
                    d.median,
                    d.min,
                    d.max
                );
            }
            let t = &c.test;
            let _ = writeln!(
                s,
                "paired t={} df={} p={} mean_difference={} sd_difference={} significant={}{}",
                t.t_statistic,
                t.degrees_of_freedom,
                t.p_value,
                t.mean_difference,
                t.sd_difference,
                if t.p_value < self.alpha { "yes" } else { "no" },
                if t.degenerate { " degenerate=yes" } else { "" }
            );
        }
        s
    }

    pub fn stats_csv(&self) -> String {
        let mut s = String::from(
            "metric,guided_mean,guided_sd,unguided_mean,unguided_sd,t,df,p,mean_difference,sd_difference,significant,degenerate\n",
        );
        for c in &self.comparisons {
            let t = &c.test;
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                c.metric,
                c.guided.mean,
                opt(c.guided.sd),
                c.unguided.mean,
                opt(c.unguided.sd),
                t.t_statistic,
                t.degrees_of_freedom,
                t.p_value,
                t.mean_difference,
                t.sd_difference,
                t.p_value < self.alpha,
                t.degenerate
            );
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ln_gamma_known_values() {
        assert!(ln_gamma(1.0).abs() < 1e-14);
        assert!(ln_gamma(2.0).abs() < 1e-14);
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-14);
        assert!((ln_gamma(10.0) - 362_880f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn t_cdf_matches_closed_forms() {
        for k in 0..100 {
            let t = -10.0 + 20.0 * k as f64 / 99.0;
            let cauchy = 0.5 + t.atan() / std::f64::consts::PI;
            assert!((student_t_cdf(t, 1.0).unwrap() - cauchy).abs() < 1e-10, "df1 t={t}");
            let two = 0.5 + t / (2.0 * (2.0 + t * t).sqrt());
            assert!((student_t_cdf(t, 2.0).unwrap() - two).abs() < 1e-10, "df2 t={t}");
        }
    }

    #[test]
    fn t_cdf_reference_points() {
        // two-sided 5% critical values
        assert!((two_sided_p(2.262_157_162_8, 9.0).unwrap() - 0.05).abs() < 1e-9);
        assert!((two_sided_p(12.706_204_736_2, 1.0).unwrap() - 0.05).abs() < 1e-9);
        assert_eq!(student_t_cdf(0.0, 5.0).unwrap(), 0.5);
    }

    #[test]
    fn paired_t_small_cases() {
        let s = PairedSample::new(vec![2.0, 3.0, 4.0], vec![1.0, 1.0, 1.0], ("a", "b")).unwrap();
        let r = paired_t_test(&s).unwrap();
        assert!((r.t_statistic - 3.4641).abs() < 1e-3);
        assert_eq!(r.degrees_of_freedom, 2);
        // closed form for df = 2
        let t = r.t_statistic;
        let p = 2.0 * (1.0 - (0.5 + t / (2.0 * (2.0 + t * t).sqrt())));
        assert!((r.p_value - p).abs() < 1e-10);
        assert!((r.p_value - 0.0742).abs() < 1e-3);

        let same = PairedSample::new(vec![1.0, 5.0, 2.0], vec![1.0, 5.0, 2.0], ("a", "b")).unwrap();
        let r = paired_t_test(&same).unwrap();
        assert_eq!((r.t_statistic, r.p_value), (0.0, 1.0));
        assert!(r.degenerate);

        let shifted = PairedSample::new(vec![2.0, 6.0, 3.0], vec![1.0, 5.0, 2.0], ("a", "b")).unwrap();
        let r = paired_t_test(&shifted).unwrap();
        assert!(r.degenerate && r.t_statistic.is_infinite());
        assert!(PairedSample::new(vec![1.0], vec![2.0], ("a", "b")).is_err());
        assert!(PairedSample::new(vec![1.0, 2.0], vec![2.0], ("a", "b")).is_err());
    }

    #[test]
    fn describe_cases() {
        let one = describe(&[5.0]).unwrap();
        assert_eq!(one.mean, 5.0);
        assert_eq!(one.sd, None);
        let two = describe(&[2.0, 4.0]).unwrap();
        assert_eq!(two.mean, 3.0);
        assert!((two.sd.unwrap() - 2f64.sqrt()).abs() < 1e-9);
        assert!(describe(&[]).is_err());
    }

    #[test]
    fn describe_matches_naive_two_pass() {
        let mut rng = crate::rng::seeded(3);
        use rand::Rng;
        for _ in 0..50 {
            let n = rng.random_range(2..200);
            let xs: Vec<f64> = (0..n).map(|_| rng.random_range(-100.0..100.0)).collect();
            let d = describe(&xs).unwrap();
            let mut m = 0.0;
            for x in &xs {
                m += x;
            }
            m /= n as f64;
            let mut ss = 0.0;
            for x in &xs {
                ss += (x - m) * (x - m);
            }
            let sd = (ss / (n as f64 - 1.0)).sqrt();
            assert!((d.mean - m).abs() <= 1e-12 * m.abs().max(1.0));
            assert!((d.sd.unwrap() - sd).abs() <= 1e-12 * sd);
        }
    }

    #[test]
    fn likert_cases() {
        assert_eq!(likert_summary(&[5, 5, 5]).unwrap().median, 5);
        assert_eq!(likert_summary(&[3, 4]).unwrap().median, 3);
        let s = likert_summary(&[2, 2, 4, 4, 5, 5, 5, 5, 5, 5]).unwrap();
        assert_eq!(s.median, 5);
        assert_eq!(s.counts, [0, 2, 0, 2, 6]);
        assert!(likert_summary(&[0]).is_err());
        assert!(likert_summary(&[6]).is_err());
        assert!(likert_summary(&[]).is_err());
    }

    #[test]
    fn likert_loader() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("likert.txt");
        std::fs::write(&p, "# confidence\n4 5\n3\n").unwrap();
        assert_eq!(load_likert(&p).unwrap(), vec![4, 5, 3]);
        std::fs::write(&p, "4 x\n").unwrap();
        assert!(load_likert(&p).is_err());
    }

    fn trial(p: &str, c: Condition, dev: f64, time: f64) -> TrialMetrics {
        TrialMetrics {
            participant: p.into(),
            condition: c,
            deviation_mean: dev,
            deviation_max: dev * 2.0,
            margin_min: 10.0 - dev,
            completion_time: time,
            breach: false,
        }
    }

    #[test]
    fn analysis_pairs_by_participant() {
        let trials = vec![
            trial("a", Condition::Unguided, 5.0, 50.0),
            trial("a", Condition::Guided, 2.0, 30.0),
            trial("b", Condition::Guided, 2.5, 33.0),
            trial("c", Condition::Guided, 1.0, 20.0),
            trial("b", Condition::Unguided, 4.0, 58.0),
        ];
        let a = analyze(&trials, 0.05).unwrap();
        assert_eq!(a.participants, vec!["a", "b"]);
        assert_eq!(a.excluded, vec!["c"]);
        let dev = a.comparison("deviation_mean_mm").unwrap();
        assert_eq!(dev.guided.mean, 2.25);
        assert_eq!(dev.test.mean_difference, -2.25);
        assert!(a.report_text().contains("excluded c"));
        assert_eq!(a.stats_csv().lines().count(), 5);
        assert!(analyze(&trials[..3], 0.05).is_err());
        assert!(analyze(&trials, 1.5).is_err());
    }

    proptest! {
        #[test]
        fn t_test_is_antisymmetric(
            pairs in prop::collection::vec((-50.0f64..50.0, -50.0f64..50.0), 2..30)
        ) {
            let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let ab = paired_t_test(&PairedSample::new(a.clone(), b.clone(), ("a", "b")).unwrap()).unwrap();
            let ba = paired_t_test(&PairedSample::new(b, a, ("b", "a")).unwrap()).unwrap();
            prop_assume!(!ab.degenerate);
            prop_assert!((ab.t_statistic + ba.t_statistic).abs() <= 1e-12 * ab.t_statistic.abs().max(1.0));
            prop_assert!((ab.p_value - ba.p_value).abs() < 1e-12);
        }

        #[test]
        fn t_test_ignores_common_shift(
            pairs in prop::collection::vec((-50.0f64..50.0, -50.0f64..50.0), 2..30),
            shift in -100.0f64..100.0
        ) {
            let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let base = paired_t_test(&PairedSample::new(a.clone(), b.clone(), ("a", "b")).unwrap()).unwrap();
            prop_assume!(!base.degenerate && base.sd_difference > 1e-3);
            let a2 = a.iter().map(|x| x + shift).collect();
            let b2 = b.iter().map(|x| x + shift).collect();
            let moved = paired_t_test(&PairedSample::new(a2, b2, ("a", "b")).unwrap()).unwrap();
            prop_assert!((base.t_statistic - moved.t_statistic).abs() <= 1e-9 * base.t_statistic.abs().max(1.0));
            prop_assert!((base.p_value - moved.p_value).abs() < 1e-9);
        }

        #[test]
        fn p_decreases_with_abs_t(df in 1usize..40) {
            let mut last = 1.0 + 1e-15;
            for k in 0..200 {
                let t = k as f64 * 0.05;
                let p = two_sided_p(t, df as f64).unwrap();
                prop_assert!(p <= last);
                prop_assert!(p > 0.0 && p <= 1.0);
                last = p;
            }
        }
    }
}
