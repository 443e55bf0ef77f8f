//! Self-contained hypothesis-testing toolkit: Kolmogorov–Smirnov tests,
//! chi-square tests, the Poisson dispersion index and the Holm step-down
//! correction, plus the [`TestReport`] container used by every verification
//! flow.
//!
//! p-values are asymptotic; the verification suites compensate with sample
//! sizes of 10^4 and larger.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma_ur;

use crate::{Error, Result};

/// Minimum sample size for the KS tests.
const KS_MIN_SAMPLES: usize = 50;
/// Minimum sample size for the dispersion index.
const DISPERSION_MIN_SAMPLES: usize = 100;
/// Expected-count floor for chi-square cells.
const CHI2_CELL_FLOOR: f64 = 5.0;

/// Survival function of the Kolmogorov distribution, `P(K > lambda)`.
///
/// Uses the Jacobi theta form for small arguments and the alternating series
/// for large ones (the two agree to more than ten digits near the switch).
fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        let t = (-std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda)).exp();
        let cdf = (2.0 * std::f64::consts::PI).sqrt() / lambda
            * (t + t.powi(9) + t.powi(25) + t.powi(49));
        (1.0 - cdf).clamp(0.0, 1.0)
    } else {
        let mut sum = 0.0;
        let mut sign = 1.0;
        for k in 1..=100u32 {
            let term = (-2.0 * (k as f64).powi(2) * lambda * lambda).exp();
            sum += sign * term;
            if term < 1e-18 {
                break;
            }
            sign = -sign;
        }
        (2.0 * sum).clamp(0.0, 1.0)
    }
}

fn sorted_copy(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_unstable_by(f64::total_cmp);
    v
}

/// Two-sample Kolmogorov–Smirnov test.
///
/// Returns `(D, p)` where `D = sup |F_a - F_b|` over the pooled sample
/// (right-continuous ECDFs, ties consumed jointly) and `p` comes from the
/// asymptotic Kolmogorov distribution at effective size
/// `n_a n_b / (n_a + n_b)`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    for s in [a, b] {
        if s.len() < KS_MIN_SAMPLES {
            return Err(Error::UndersizedSample {
                len: s.len(),
                required: KS_MIN_SAMPLES,
            });
        }
    }
    let xs = sorted_copy(a);
    let ys = sorted_copy(b);
    let (na, nb) = (xs.len() as f64, ys.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d = 0.0f64;
    while i < xs.len() || j < ys.len() {
        let next = match (xs.get(i), ys.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => break,
        };
        while i < xs.len() && xs[i] <= next {
            i += 1;
        }
        while j < ys.len() && ys[j] <= next {
            j += 1;
        }
        let diff = (i as f64 / na - j as f64 / nb).abs();
        if diff > d {
            d = diff;
        }
    }
    let n_eff = na * nb / (na + nb);
    let p = if d == 0.0 {
        1.0
    } else {
        kolmogorov_sf(d * n_eff.sqrt())
    };
    Ok((d, p))
}

/// One-sample Kolmogorov–Smirnov test against an analytic CDF.
pub fn ks_one_sample<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> Result<(f64, f64)> {
    if sample.len() < KS_MIN_SAMPLES {
        return Err(Error::UndersizedSample {
            len: sample.len(),
            required: KS_MIN_SAMPLES,
        });
    }
    let xs = sorted_copy(sample);
    let n = xs.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        let lo = (f - i as f64 / n).abs();
        let hi = ((i as f64 + 1.0) / n - f).abs();
        d = d.max(lo).max(hi);
    }
    let p = if d == 0.0 {
        1.0
    } else {
        kolmogorov_sf(d * n.sqrt())
    };
    Ok((d, p))
}

/// Pool cells left to right into groups whose expected mass reaches the
/// floor; a short leftover tail merges into the last closed group.
fn pool_cells(observed: &[f64], expected: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut obs_groups: Vec<f64> = Vec::new();
    let mut exp_groups: Vec<f64> = Vec::new();
    let mut acc_o = 0.0;
    let mut acc_e = 0.0;
    for (&o, &e) in observed.iter().zip(expected) {
        acc_o += o;
        acc_e += e;
        if acc_e >= CHI2_CELL_FLOOR {
            obs_groups.push(acc_o);
            exp_groups.push(acc_e);
            acc_o = 0.0;
            acc_e = 0.0;
        }
    }
    if acc_e > 0.0 || acc_o > 0.0 {
        if let (Some(o), Some(e)) = (obs_groups.last_mut(), exp_groups.last_mut()) {
            *o += acc_o;
            *e += acc_e;
        } else {
            obs_groups.push(acc_o);
            exp_groups.push(acc_e);
        }
    }
    (obs_groups, exp_groups)
}

/// Pearson chi-square goodness-of-fit test with automatic tail pooling so
/// every pooled cell has expected count at least 5. Degrees of freedom are
/// `cells - 1` after pooling.
pub fn chi_square_gof(observed: &[f64], expected: &[f64]) -> Result<(f64, f64)> {
    if observed.len() != expected.len() {
        return Err(Error::InvalidStatInput(format!(
            "observed ({}) and expected ({}) lengths differ",
            observed.len(),
            expected.len()
        )));
    }
    if expected.iter().any(|&e| e < 0.0) || observed.iter().any(|&o| o < 0.0) {
        return Err(Error::InvalidStatInput("negative count".into()));
    }
    if expected.iter().sum::<f64>() == 0.0 {
        return Err(Error::InvalidStatInput("all-zero expectation".into()));
    }
    let (obs, exp) = pool_cells(observed, expected);
    if obs.len() < 2 {
        return Err(Error::InvalidStatInput(
            "fewer than two cells after pooling".into(),
        ));
    }
    let stat: f64 = obs
        .iter()
        .zip(&exp)
        .map(|(&o, &e)| {
            let diff = o - e;
            diff * diff / e
        })
        .sum();
    let df = (obs.len() - 1) as f64;
    Ok((stat, chi_square_p(stat, df)))
}

/// Upper tail of the chi-square distribution with `df` degrees of freedom.
pub fn chi_square_p(stat: f64, df: f64) -> f64 {
    if stat <= 0.0 {
        return 1.0;
    }
    gamma_ur(df / 2.0, stat / 2.0).clamp(0.0, 1.0)
}

/// Chi-square test of independence on a contingency table (rows x columns of
/// counts). Expected cells come from the marginals; degrees of freedom are
/// `(r - 1)(c - 1)`. Callers are responsible for binning coarsely enough that
/// expected cells clear the floor of 5; a violated floor is an error.
pub fn chi_square_independence(table: &[Vec<f64>]) -> Result<(f64, f64)> {
    let rows = table.len();
    let cols = table.first().map_or(0, Vec::len);
    if rows < 2 || cols < 2 || table.iter().any(|r| r.len() != cols) {
        return Err(Error::InvalidStatInput(
            "contingency table must be rectangular with at least 2x2 cells".into(),
        ));
    }
    let row_tot: Vec<f64> = table.iter().map(|r| r.iter().sum()).collect();
    let col_tot: Vec<f64> = (0..cols).map(|j| table.iter().map(|r| r[j]).sum()).collect();
    let total: f64 = row_tot.iter().sum();
    if total == 0.0 {
        return Err(Error::InvalidStatInput("empty contingency table".into()));
    }
    let mut stat = 0.0;
    for i in 0..rows {
        for j in 0..cols {
            let e = row_tot[i] * col_tot[j] / total;
            if e < CHI2_CELL_FLOOR {
                return Err(Error::InvalidStatInput(format!(
                    "expected cell ({i},{j}) = {e:.2} below floor {CHI2_CELL_FLOOR}"
                )));
            }
            let diff = table[i][j] - e;
            stat += diff * diff / e;
        }
    }
    let df = ((rows - 1) * (cols - 1)) as f64;
    Ok((stat, chi_square_p(stat, df)))
}

/// Chi-square homogeneity test between two samples of nonnegative counts.
///
/// Builds the 2 x K table over count values, pooling the upper tail until
/// every expected cell reaches the floor of 5.
pub fn chi_square_homogeneity(a: &[u64], b: &[u64]) -> Result<(f64, f64)> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyInput("count sample".into()));
    }
    let max = a.iter().chain(b).copied().max().unwrap_or(0) as usize;
    let mut col_a = vec![0.0f64; max + 1];
    let mut col_b = vec![0.0f64; max + 1];
    for &v in a {
        col_a[v as usize] += 1.0;
    }
    for &v in b {
        col_b[v as usize] += 1.0;
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let total = na + nb;
    // Pool columns from the right until all four expected cells of each
    // remaining column clear the floor.
    let floor_total = CHI2_CELL_FLOOR * total / na.min(nb);
    let mut cols: Vec<(f64, f64)> = col_a.into_iter().zip(col_b).collect();
    loop {
        if cols.len() <= 2 {
            break;
        }
        let merged_ok = cols
            .iter()
            .all(|&(ca, cb)| ca + cb >= floor_total);
        if merged_ok {
            break;
        }
        // merge the rightmost under-floor column into its neighbor
        let idx = cols
            .iter()
            .rposition(|&(ca, cb)| ca + cb < floor_total)
            .unwrap();
        let (ca, cb) = cols.remove(idx);
        let tgt = if idx == 0 { 0 } else { idx - 1 };
        cols[tgt].0 += ca;
        cols[tgt].1 += cb;
    }
    if cols.len() < 2 {
        return Err(Error::InvalidStatInput(
            "count distributions too concentrated for a homogeneity test".into(),
        ));
    }
    let table: Vec<Vec<f64>> = vec![
        cols.iter().map(|&(ca, _)| ca).collect(),
        cols.iter().map(|&(_, cb)| cb).collect(),
    ];
    chi_square_independence(&table)
}

/// Sample mean and index of dispersion (variance over mean) of a count
/// sample. A constant sample has dispersion 0 by convention.
pub fn poisson_dispersion(counts: &[u64]) -> Result<(f64, f64)> {
    if counts.len() < DISPERSION_MIN_SAMPLES {
        return Err(Error::UndersizedSample {
            len: counts.len(),
            required: DISPERSION_MIN_SAMPLES,
        });
    }
    let n = counts.len() as f64;
    let mean = counts.iter().map(|&c| c as f64).sum::<f64>() / n;
    let ss = counts
        .iter()
        .map(|&c| {
            let d = c as f64 - mean;
            d * d
        })
        .sum::<f64>();
    let var = ss / (n - 1.0);
    let dispersion = if var == 0.0 { 0.0 } else { var / mean };
    Ok((mean, dispersion))
}

/// Holm step-down adjustment. Input order is preserved; adjusted values are
/// monotone over the sorted order and clipped at 1.
pub fn holm_adjust(p_values: &[f64]) -> Result<Vec<f64>> {
    if p_values.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
        return Err(Error::InvalidStatInput(
            "p-values must lie in [0, 1]".into(),
        ));
    }
    let m = p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| p_values[i].total_cmp(&p_values[j]));
    let mut adjusted = vec![0.0f64; m];
    let mut running = 0.0f64;
    for (rank, &idx) in order.iter().enumerate() {
        let scaled = ((m - rank) as f64 * p_values[idx]).min(1.0);
        running = running.max(scaled);
        adjusted[idx] = running;
    }
    Ok(adjusted)
}

/// One labelled test prior to adjustment.
#[derive(Debug, Clone)]
pub struct RawTest {
    pub label: String,
    pub statistic: f64,
    pub p: f64,
}

impl RawTest {
    pub fn new(label: impl Into<String>, statistic: f64, p: f64) -> Self {
        Self {
            label: label.into(),
            statistic,
            p,
        }
    }
}

/// One entry of a [`TestReport`].
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TestEntry {
    pub label: String,
    #[serde(rename = "stat")]
    pub statistic: f64,
    pub p: f64,
    pub p_adj: f64,
    pub reject: bool,
}

/// Holm-adjusted verdicts for a family of hypothesis tests.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TestReport {
    pub entries: Vec<TestEntry>,
    pub family_alpha: f64,
    #[serde(rename = "verdict")]
    pub overall_verdict: bool,
}

impl TestReport {
    /// Apply the Holm correction to a family of raw tests; an entry rejects
    /// when its adjusted p-value falls below the family alpha, and the
    /// overall verdict is true exactly when nothing rejects.
    pub fn from_raw(family_alpha: f64, tests: Vec<RawTest>) -> Result<Self> {
        let ps: Vec<f64> = tests.iter().map(|t| t.p).collect();
        let adjusted = holm_adjust(&ps)?;
        let entries: Vec<TestEntry> = tests
            .into_iter()
            .zip(&adjusted)
            .map(|(t, &p_adj)| TestEntry {
                label: t.label,
                statistic: t.statistic,
                p: t.p,
                p_adj,
                reject: p_adj < family_alpha,
            })
            .collect();
        let overall_verdict = entries.iter().all(|e| !e.reject);
        Ok(Self {
            entries,
            family_alpha,
            overall_verdict,
        })
    }

    /// Smallest adjusted p-value (1 for an empty family).
    pub fn min_adjusted_p(&self) -> f64 {
        self.entries
            .iter()
            .map(|e| e.p_adj)
            .fold(1.0f64, f64::min)
    }

    /// Merge several reports into one family, re-adjusting jointly.
    pub fn merge(family_alpha: f64, reports: Vec<TestReport>) -> Result<Self> {
        let raw: Vec<RawTest> = reports
            .into_iter()
            .flat_map(|r| {
                r.entries
                    .into_iter()
                    .map(|e| RawTest::new(e.label, e.statistic, e.p))
            })
            .collect();
        Self::from_raw(family_alpha, raw)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::{Distribution, Poisson};

    fn poisson_sample(lambda: f64, n: usize, seed: u64) -> Vec<u64> {
        let mut rng = crate::seed::rng_from(seed);
        let dist = Poisson::new(lambda).unwrap();
        (0..n).map(|_| dist.sample(&mut rng) as u64).collect()
    }

    fn poisson_pmf(lambda: f64, k_max: usize) -> Vec<f64> {
        let mut pmf = Vec::with_capacity(k_max + 1);
        let mut term = (-lambda).exp();
        pmf.push(term);
        for k in 1..=k_max {
            term *= lambda / k as f64;
            pmf.push(term);
        }
        pmf
    }

    #[test]
    fn ks_identical_sample_is_null() {
        let xs: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let (d, p) = ks_two_sample(&xs, &xs).unwrap();
        assert_eq!(d, 0.0);
        assert_eq!(p, 1.0);
    }

    #[test]
    fn ks_rejects_constant_vs_poisson() {
        // P(Poisson(1) > 0) = 1 - e^{-1} = 0.632: huge ECDF gap at 0
        let zeros = vec![0.0; 10_000];
        let pois: Vec<f64> = poisson_sample(1.0, 10_000, 11)
            .into_iter()
            .map(|c| c as f64)
            .collect();
        let (d, p) = ks_two_sample(&zeros, &pois).unwrap();
        assert!(d > 0.5, "d = {d}");
        assert!(p < 1e-6, "p = {p}");
    }

    #[test]
    fn ks_undersized_errors() {
        let xs = vec![0.0; 10];
        assert!(matches!(
            ks_two_sample(&xs, &xs),
            Err(Error::UndersizedSample { .. })
        ));
    }

    #[test]
    fn ks_self_calibrates_under_the_null() {
        // independent same-law samples: p should rarely be extreme
        let mut failures = 0;
        for rep in 0..20u64 {
            let mut rng = crate::seed::rng_from(1000 + rep);
            let a: Vec<f64> = (0..10_000).map(|_| rng.random::<f64>()).collect();
            let b: Vec<f64> = (0..10_000).map(|_| rng.random::<f64>()).collect();
            let (_, p) = ks_two_sample(&a, &b).unwrap();
            if p <= 0.001 {
                failures += 1;
            }
        }
        assert!(failures <= 1, "{failures} of 20 null KS runs were extreme");
    }

    #[test]
    fn ks_one_sample_tracks_uniform() {
        let mut rng = crate::seed::rng_from(5);
        let xs: Vec<f64> = (0..10_000).map(|_| rng.random::<f64>()).collect();
        let (_, p) = ks_one_sample(&xs, |x| x.clamp(0.0, 1.0)).unwrap();
        assert!(p > 0.01, "p = {p}");
        let (_, p_bad) = ks_one_sample(&xs, |x| (x * x).clamp(0.0, 1.0)).unwrap();
        assert!(p_bad < 1e-6, "p = {p_bad}");
    }

    #[test]
    fn chi_square_exact_match_is_null() {
        let obs = [10.0, 20.0, 30.0];
        let (stat, p) = chi_square_gof(&obs, &obs).unwrap();
        assert_eq!(stat, 0.0);
        assert_eq!(p, 1.0);
    }

    #[test]
    fn chi_square_accepts_matching_poisson_counts() {
        let n = 10_000usize;
        let sample = poisson_sample(2.0, n, 21);
        let k_max = *sample.iter().max().unwrap() as usize;
        let mut observed = vec![0.0; k_max + 1];
        for &c in &sample {
            observed[c as usize] += 1.0;
        }
        let pmf = poisson_pmf(2.0, k_max);
        let expected: Vec<f64> = pmf.iter().map(|&q| q * n as f64).collect();
        let (_, p) = chi_square_gof(&observed, &expected).unwrap();
        assert!(p > 0.01, "p = {p}");

        let pmf3 = poisson_pmf(3.0, k_max);
        let expected3: Vec<f64> = pmf3.iter().map(|&q| q * n as f64).collect();
        let (_, p3) = chi_square_gof(&observed, &expected3).unwrap();
        assert!(p3 < 1e-6, "p = {p3}");
    }

    #[test]
    fn chi_square_rejects_all_zero_expectation() {
        assert!(chi_square_gof(&[1.0, 2.0], &[0.0, 0.0]).is_err());
    }

    #[test]
    fn homogeneity_of_same_law_counts_passes() {
        let a = poisson_sample(2.0, 10_000, 31);
        let b = poisson_sample(2.0, 10_000, 32);
        let (_, p) = chi_square_homogeneity(&a, &b).unwrap();
        assert!(p > 0.01, "p = {p}");
        let c = poisson_sample(2.5, 10_000, 33);
        let (_, p_bad) = chi_square_homogeneity(&a, &c).unwrap();
        assert!(p_bad < 1e-6, "p = {p_bad}");
    }

    #[test]
    fn dispersion_of_constants_is_zero() {
        let counts = vec![3u64; 200];
        let (mean, disp) = poisson_dispersion(&counts).unwrap();
        assert_eq!(mean, 3.0);
        assert_eq!(disp, 0.0);
    }

    #[test]
    fn dispersion_of_poisson_is_near_one() {
        let counts = poisson_sample(2.0, 10_000, 41);
        let (mean, disp) = poisson_dispersion(&counts).unwrap();
        assert!((mean - 2.0).abs() < 3.0 * (2.0f64 / 10_000.0).sqrt());
        assert!((0.9..=1.1).contains(&disp), "dispersion = {disp}");
    }

    #[test]
    fn dispersion_of_geometric_is_near_two() {
        // geometric on {0,1,...} with p = 0.5: mean 1, variance 2
        let mut rng = crate::seed::rng_from(51);
        let counts: Vec<u64> = (0..10_000)
            .map(|_| {
                let mut c = 0u64;
                while rng.random::<f64>() < 0.5 {
                    c += 1;
                }
                c
            })
            .collect();
        let (_, disp) = poisson_dispersion(&counts).unwrap();
        assert!(disp > 1.5, "dispersion = {disp}");
    }

    #[test]
    fn holm_textbook_cases() {
        assert_eq!(holm_adjust(&[0.03]).unwrap(), vec![0.03]);
        assert_eq!(holm_adjust(&[0.01, 0.04]).unwrap(), vec![0.02, 0.04]);
        assert_eq!(holm_adjust(&[1.0, 1.0, 1.0]).unwrap(), vec![1.0, 1.0, 1.0]);
        assert!(holm_adjust(&[-0.1]).is_err());
        assert!(holm_adjust(&[1.1]).is_err());
    }

    #[test]
    fn report_verdict_follows_adjusted_rejections() {
        let report = TestReport::from_raw(
            0.01,
            vec![
                RawTest::new("a", 1.0, 0.5),
                RawTest::new("b", 2.0, 0.0001),
            ],
        )
        .unwrap();
        assert!(!report.overall_verdict);
        assert!(report.entries[1].reject);
        assert!(!report.entries[0].reject);
        assert!(report
            .entries
            .iter()
            .all(|e| e.p_adj >= e.p));
    }

    #[test]
    fn null_rejection_rate_is_controlled() {
        let mut rejections = 0;
        for trial in 0..200u64 {
            let mut rng = crate::seed::rng_from(9000 + trial);
            let a: Vec<f64> = (0..2000).map(|_| rng.random::<f64>()).collect();
            let b: Vec<f64> = (0..2000).map(|_| rng.random::<f64>()).collect();
            let (_, p) = ks_two_sample(&a, &b).unwrap();
            if p < 0.01 {
                rejections += 1;
            }
        }
        let rate = rejections as f64 / 200.0;
        assert!(rate <= 0.05, "null rejection rate {rate}");
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn ks_statistic_invariant_under_increasing_transform(
                a in proptest::collection::vec(-50.0f64..50.0, 60..120),
                b in proptest::collection::vec(-50.0f64..50.0, 60..120),
            ) {
                let transform = |x: f64| (x / 10.0).atan() * 3.0 + 7.0;
                let (d1, _) = ks_two_sample(&a, &b).unwrap();
                let ta: Vec<f64> = a.iter().map(|&x| transform(x)).collect();
                let tb: Vec<f64> = b.iter().map(|&x| transform(x)).collect();
                let (d2, _) = ks_two_sample(&ta, &tb).unwrap();
                prop_assert_eq!(d1, d2);
            }

            #[test]
            fn holm_dominates_raw_and_is_sorted_monotone(
                ps in proptest::collection::vec(0.0f64..=1.0, 1..20),
            ) {
                let adj = holm_adjust(&ps).unwrap();
                for (raw, a) in ps.iter().zip(&adj) {
                    prop_assert!(a >= raw);
                    prop_assert!(*a <= 1.0);
                }
                let mut order: Vec<usize> = (0..ps.len()).collect();
                order.sort_by(|&i, &j| ps[i].total_cmp(&ps[j]));
                let sorted_adj: Vec<f64> = order.iter().map(|&i| adj[i]).collect();
                for w in sorted_adj.windows(2) {
                    prop_assert!(w[0] <= w[1]);
                }
            }
        }
    }
}
