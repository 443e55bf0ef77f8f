//! Minimal continuous-time Markov chains on a finite state space and their
//! regeneration analogue: per-state segment pools, recursive gluing at rule
//! times, and an empirical stall detector standing in for the divergence of
//! the glue times.
//!
//! Event times are exact (no grid); the cemetery state is absorbing; a path
//! that exceeds its event budget before the horizon is sent to the cemetery
//! at the accumulated time with an explosion flag, matching minimal-chain
//! semantics.

use rand::Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::seed;
use crate::stats::{chi_square_independence, RawTest, TestReport};
use crate::{Error, Result};

/// Default per-path event budget before a path is declared exploded.
pub const DEFAULT_EVENT_BOUND: usize = 100_000;
/// Pilot size for the `P(T > 0)` check.
pub const PILOT_SIZE: usize = 1000;
/// Required positive fraction in the pilot.
pub const PILOT_MIN_POSITIVE: f64 = 0.01;
/// Segment-budget clamp, as in the Lévy construction.
pub const N_MAX_FLOOR: usize = 64;
pub const N_MAX_CEILING: usize = 100_000;

const STREAM_SEGMENT: u64 = 0xc301;
const STREAM_PILOT: u64 = 0xc302;
const STREAM_DIRECT: u64 = 0xc303;
const STREAM_CONCAT: u64 = 0xc304;

/// Conservative rate matrix with an optional sub-stochastic deficit: rows
/// sum to at most zero and the shortfall is the killing rate to the
/// cemetery.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RateMatrix {
    rates: Vec<Vec<f64>>,
}

/// Row-sum slack treated as zero when validating conservativeness.
const RATE_TOL: f64 = 1e-12;

impl RateMatrix {
    pub fn new(rates: Vec<Vec<f64>>) -> Result<Self> {
        let q = Self { rates };
        q.validate()?;
        Ok(q)
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.rates.len();
        if m == 0 {
            return Err(Error::InvalidRateMatrix("empty state space".into()));
        }
        for (i, row) in self.rates.iter().enumerate() {
            if row.len() != m {
                return Err(Error::InvalidRateMatrix(format!(
                    "row {i} has length {}, expected {m}",
                    row.len()
                )));
            }
            let mut sum = 0.0;
            for (j, &r) in row.iter().enumerate() {
                if !r.is_finite() {
                    return Err(Error::InvalidRateMatrix(format!(
                        "non-finite rate at ({i},{j})"
                    )));
                }
                if i != j && r < 0.0 {
                    return Err(Error::InvalidRateMatrix(format!(
                        "negative off-diagonal rate at ({i},{j})"
                    )));
                }
                sum += r;
            }
            if sum > RATE_TOL {
                return Err(Error::InvalidRateMatrix(format!(
                    "row {i} sums to {sum} > 0"
                )));
            }
        }
        Ok(())
    }

    pub fn n_states(&self) -> usize {
        self.rates.len()
    }

    pub fn rates(&self) -> &[Vec<f64>] {
        &self.rates
    }

    /// Total exit rate from a state.
    pub fn exit_rate(&self, state: usize) -> f64 {
        (-self.rates[state][state]).max(0.0)
    }

    /// Killing rate to the cemetery (the row deficit).
    pub fn deficit(&self, state: usize) -> f64 {
        (-self.rates[state].iter().sum::<f64>()).max(0.0)
    }
}

/// A chain state or the cemetery.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CtmcState {
    State(usize),
    Cemetery,
}

/// One transition event.
#[derive(Debug, Clone, PartialEq)]
pub struct CtmcEvent {
    pub time: f64,
    pub to: CtmcState,
}

/// One realization of the chain on `[0, horizon]`: right-continuous step
/// function semantics over the event list.
#[derive(Debug, Clone, PartialEq)]
pub struct CtmcPath {
    n_states: usize,
    initial: usize,
    events: Vec<CtmcEvent>,
    horizon: f64,
    lifetime: f64,
    exploded: bool,
}

impl CtmcPath {
    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn initial(&self) -> usize {
        self.initial
    }

    pub fn events(&self) -> &[CtmcEvent] {
        &self.events
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Absorption time in the cemetery (by deficit killing or explosion);
    /// infinite when the path stays alive.
    pub fn lifetime(&self) -> f64 {
        self.lifetime
    }

    pub fn exploded(&self) -> bool {
        self.exploded
    }

    /// Right-continuous evaluation at `t <= horizon`.
    pub fn state_at(&self, t: f64) -> Result<CtmcState> {
        if !(0.0..=self.horizon).contains(&t) {
            return Err(Error::BeyondHorizon {
                time: t,
                horizon: self.horizon,
            });
        }
        if t >= self.lifetime {
            return Ok(CtmcState::Cemetery);
        }
        let mut cur = CtmcState::State(self.initial);
        for ev in &self.events {
            if ev.time <= t {
                cur = ev.to;
            } else {
                break;
            }
        }
        Ok(cur)
    }
}

/// Gillespie simulation of the minimal chain from state `x` with the
/// default event budget.
pub fn simulate_ctmc(q: &RateMatrix, x: usize, horizon: f64, seed_value: u64) -> Result<CtmcPath> {
    simulate_ctmc_bounded(q, x, horizon, seed_value, DEFAULT_EVENT_BOUND)
}

/// Gillespie simulation with an explicit event budget: holding times are
/// exponential at the exit rate, targets are chosen proportionally to the
/// off-diagonal rates with the row deficit leading to the cemetery.
pub fn simulate_ctmc_bounded(
    q: &RateMatrix,
    x: usize,
    horizon: f64,
    seed_value: u64,
    max_events: usize,
) -> Result<CtmcPath> {
    q.validate()?;
    if x >= q.n_states() {
        return Err(Error::InvalidRateMatrix(format!(
            "initial state {x} outside 0..{}",
            q.n_states()
        )));
    }
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::InvalidGrid(format!(
            "horizon must be positive, got {horizon}"
        )));
    }
    let mut rng = seed::rng_from(seed_value);
    let mut events: Vec<CtmcEvent> = Vec::new();
    let mut t = 0.0f64;
    let mut cur = x;
    let mut lifetime = f64::INFINITY;
    let mut exploded = false;
    loop {
        let rate = q.exit_rate(cur);
        if rate <= 0.0 {
            break;
        }
        t += Exp::new(rate).expect("positive rate").sample(&mut rng);
        if t > horizon {
            break;
        }
        if events.len() >= max_events {
            // minimal-chain semantics: send the path to the cemetery at the
            // accumulated time and flag the explosion
            events.push(CtmcEvent {
                time: t,
                to: CtmcState::Cemetery,
            });
            lifetime = t;
            exploded = true;
            break;
        }
        let mut u = rng.random::<f64>() * rate;
        let mut target = CtmcState::Cemetery;
        for j in 0..q.n_states() {
            if j == cur {
                continue;
            }
            let r = q.rates()[cur][j];
            if u < r {
                target = CtmcState::State(j);
                break;
            }
            u -= r;
        }
        events.push(CtmcEvent { time: t, to: target });
        match target {
            CtmcState::State(j) => cur = j,
            CtmcState::Cemetery => {
                lifetime = t;
                break;
            }
        }
    }
    Ok(CtmcPath {
        n_states: q.n_states(),
        initial: x,
        events,
        horizon,
        lifetime,
        exploded,
    })
}

/// Stopping rules for the chain's event-time filtration: a deterministic
/// cap, the first jump, first entry into a state set, and minima thereof.
/// All supported rules are adapted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CtmcRule {
    #[serde(rename = "det")]
    Deterministic(f64),
    #[serde(rename = "first_jump")]
    FirstJump,
    #[serde(rename = "first_entry")]
    FirstEntry(Vec<usize>),
    #[serde(rename = "min")]
    MinOf(Box<CtmcRule>, Box<CtmcRule>),
}

impl CtmcRule {
    pub fn min_of(a: CtmcRule, b: CtmcRule) -> CtmcRule {
        CtmcRule::MinOf(Box::new(a), Box::new(b))
    }

    pub fn validate(&self, q: &RateMatrix) -> Result<()> {
        match self {
            CtmcRule::Deterministic(t) => {
                if !(*t >= 0.0) || !t.is_finite() {
                    return Err(Error::InvalidRule(format!("deterministic time {t}")));
                }
            }
            CtmcRule::FirstJump => {}
            CtmcRule::FirstEntry(set) => {
                if set.is_empty() {
                    return Err(Error::InvalidRule("empty first-entry state set".into()));
                }
                if let Some(&s) = set.iter().find(|&&s| s >= q.n_states()) {
                    return Err(Error::InvalidRule(format!(
                        "first-entry state {s} outside 0..{}",
                        q.n_states()
                    )));
                }
            }
            CtmcRule::MinOf(a, b) => {
                a.validate(q)?;
                b.validate(q)?;
            }
        }
        Ok(())
    }

    /// Exact rule time on a segment, or infinity when not attained within
    /// the observed window. First-entry counts time 0 when the segment
    /// starts inside the set; the first jump counts transitions to the
    /// cemetery as well.
    pub fn evaluate(&self, path: &CtmcPath) -> f64 {
        match self {
            CtmcRule::Deterministic(t) => {
                if *t <= path.horizon() {
                    *t
                } else {
                    f64::INFINITY
                }
            }
            CtmcRule::FirstJump => path
                .events()
                .first()
                .map_or(f64::INFINITY, |ev| ev.time),
            CtmcRule::FirstEntry(set) => {
                if set.contains(&path.initial()) {
                    return 0.0;
                }
                path.events()
                    .iter()
                    .find(|ev| matches!(ev.to, CtmcState::State(s) if set.contains(&s)))
                    .map_or(f64::INFINITY, |ev| ev.time)
            }
            CtmcRule::MinOf(a, b) => a.evaluate(path).min(b.evaluate(path)),
        }
    }
}

/// Outcome of the chain gluing.
#[derive(Debug, Clone)]
pub struct CtmcRegeneration {
    pub path: CtmcPath,
    /// Partial sums of consumed segments' rule times (exact reals here; no
    /// grid is involved).
    pub regeneration_times: Vec<f64>,
    pub segments_used: usize,
    /// The budget ran out before the partial sums reached the horizon: the
    /// empirical surrogate for a failure of the glue times to diverge.
    pub stalled: bool,
}

/// Glue per-state segments at their rule times: the segment for glue step
/// `k` starting at state `y` is drawn from the seed fan-out `(seed, y, k)`,
/// realizing independent per-state pools. A segment whose rule time is not
/// attained within the window is consumed without progress; death or
/// explosion before the cut absorbs the glued path.
pub fn concatenate_ctmc(
    q: &RateMatrix,
    rule: &CtmcRule,
    x: usize,
    horizon: f64,
    seed_value: u64,
    n_max: usize,
) -> Result<CtmcRegeneration> {
    q.validate()?;
    rule.validate(q)?;
    if n_max == 0 {
        return Err(Error::InvalidRule("segment budget n_max must be at least 1".into()));
    }
    if x >= q.n_states() {
        return Err(Error::InvalidRateMatrix(format!(
            "initial state {x} outside 0..{}",
            q.n_states()
        )));
    }

    let mut events: Vec<CtmcEvent> = Vec::new();
    let mut regeneration_times: Vec<f64> = Vec::new();
    let mut s = 0.0f64;
    let mut cur = x;
    let mut lifetime = f64::INFINITY;
    let mut exploded = false;
    let mut segments_used = 0usize;
    let mut absorbed = false;

    for k in 1..=n_max {
        if s >= horizon {
            break;
        }
        let seg = simulate_ctmc(
            q,
            cur,
            horizon,
            seed::derive(seed_value, &[STREAM_SEGMENT, cur as u64, k as u64]),
        )?;
        segments_used = k;
        let t_rule = rule.evaluate(&seg);

        if seg.lifetime().is_finite() && seg.lifetime() <= t_rule {
            for ev in seg.events() {
                let t = s + ev.time;
                if t <= horizon {
                    events.push(CtmcEvent { time: t, to: ev.to });
                }
            }
            if s + seg.lifetime() <= horizon {
                lifetime = s + seg.lifetime();
                exploded = seg.exploded();
            }
            absorbed = true;
            break;
        }
        if !t_rule.is_finite() {
            // rule not attained in this segment's window: no cut exists, so
            // no progress is possible from this copy
            continue;
        }
        for ev in seg.events() {
            if ev.time > t_rule {
                break;
            }
            let t = s + ev.time;
            if t <= horizon {
                events.push(CtmcEvent { time: t, to: ev.to });
            }
        }
        match seg.state_at(t_rule)? {
            CtmcState::State(y) => cur = y,
            CtmcState::Cemetery => unreachable!("death before the cut is handled above"),
        }
        s += t_rule;
        regeneration_times.push(s);
    }

    let stalled = !absorbed && s < horizon;
    Ok(CtmcRegeneration {
        path: CtmcPath {
            n_states: q.n_states(),
            initial: x,
            events,
            horizon,
            lifetime,
            exploded,
        },
        regeneration_times,
        segments_used,
        stalled,
    })
}

/// Pilot summary for the chain construction, from the initial state.
#[derive(Debug, Clone, Serialize)]
pub struct CtmcPilot {
    pub n: usize,
    pub positive_fraction: f64,
    pub median_t: f64,
    pub suggested_n_max: usize,
}

impl CtmcPilot {
    pub fn passes(&self) -> bool {
        self.positive_fraction >= PILOT_MIN_POSITIVE
    }
}

/// Measure `P(T > 0)` and a segment budget on pilot segments from `x`.
/// Unattained rule times count as the full horizon for the budget (they
/// consume a segment without progress, which the budget must absorb).
pub fn run_ctmc_pilot(
    q: &RateMatrix,
    rule: &CtmcRule,
    x: usize,
    horizon: f64,
    n_pilot: usize,
    seed_value: u64,
) -> Result<CtmcPilot> {
    q.validate()?;
    rule.validate(q)?;
    let mut ts: Vec<f64> = (0..n_pilot)
        .into_par_iter()
        .map(|i| -> Result<f64> {
            let seg = simulate_ctmc(
                q,
                x,
                horizon,
                seed::derive(seed_value, &[STREAM_PILOT, i as u64]),
            )?;
            Ok(rule.evaluate(&seg).min(horizon))
        })
        .collect::<Result<_>>()?;
    let positive = ts.iter().filter(|&&t| t > 0.0).count();
    ts.sort_by(f64::total_cmp);
    let median_t = ts[ts.len() / 2];
    let suggested_n_max = if median_t > 0.0 {
        ((10.0 * horizon / median_t).ceil() as usize).clamp(N_MAX_FLOOR, N_MAX_CEILING)
    } else {
        N_MAX_FLOOR
    };
    Ok(CtmcPilot {
        n: n_pilot,
        positive_fraction: positive as f64 / n_pilot as f64,
        median_t,
        suggested_n_max,
    })
}

/// Pilot with the 1% positivity gate.
pub fn ensure_ctmc_pilot(
    q: &RateMatrix,
    rule: &CtmcRule,
    x: usize,
    horizon: f64,
    seed_value: u64,
) -> Result<CtmcPilot> {
    let pilot = run_ctmc_pilot(q, rule, x, horizon, PILOT_SIZE, seed_value)?;
    if !pilot.passes() {
        return Err(Error::PilotFailed {
            positive_fraction: pilot.positive_fraction,
            required: PILOT_MIN_POSITIVE,
        });
    }
    Ok(pilot)
}

/// Empirical distribution of the state at time `t` over `E ∪ {cemetery}`
/// (the cemetery is the last entry).
pub fn state_marginal(paths: &[CtmcPath], t: f64) -> Result<Vec<f64>> {
    let Some(first) = paths.first() else {
        return Err(Error::EmptyInput("path collection".into()));
    };
    let m = first.n_states();
    if paths.iter().any(|p| p.n_states() != m) {
        return Err(Error::DimensionMismatch(
            "paths over different state spaces".into(),
        ));
    }
    let mut freq = vec![0.0f64; m + 1];
    for p in paths {
        match p.state_at(t)? {
            CtmcState::State(s) => freq[s] += 1.0,
            CtmcState::Cemetery => freq[m] += 1.0,
        }
    }
    let n = paths.len() as f64;
    for f in &mut freq {
        *f /= n;
    }
    Ok(freq)
}

/// Chi-square comparison of state occupancies at the given times between
/// glued and directly simulated chains from `x`, one Holm family.
pub fn ctmc_law_equality(
    q: &RateMatrix,
    rule: &CtmcRule,
    x: usize,
    horizon: f64,
    times: &[f64],
    n_paths: usize,
    seed_value: u64,
    alpha: f64,
) -> Result<TestReport> {
    let pilot = ensure_ctmc_pilot(q, rule, x, horizon, seed::derive(seed_value, &[STREAM_PILOT]))?;
    let n_max = pilot.suggested_n_max;
    let m = q.n_states();

    let count_states = |paths: &[CtmcPath], t: f64| -> Result<Vec<f64>> {
        let mut counts = vec![0.0f64; m + 1];
        for p in paths {
            match p.state_at(t)? {
                CtmcState::State(s) => counts[s] += 1.0,
                CtmcState::Cemetery => counts[m] += 1.0,
            }
        }
        Ok(counts)
    };

    let glued: Vec<CtmcPath> = (0..n_paths)
        .into_par_iter()
        .map(|i| {
            concatenate_ctmc(
                q,
                rule,
                x,
                horizon,
                seed::derive(seed_value, &[STREAM_CONCAT, i as u64]),
                n_max,
            )
            .map(|out| out.path)
        })
        .collect::<Result<_>>()?;
    let direct: Vec<CtmcPath> = (0..n_paths)
        .into_par_iter()
        .map(|i| {
            simulate_ctmc(
                q,
                x,
                horizon,
                seed::derive(seed_value, &[STREAM_DIRECT, i as u64]),
            )
        })
        .collect::<Result<_>>()?;

    let mut raw = Vec::new();
    for &t in times {
        let cy = count_states(&glued, t)?;
        let cx = count_states(&direct, t)?;
        let cols: Vec<(f64, f64)> = cy
            .iter()
            .zip(&cx)
            .filter(|(a, b)| **a + **b > 0.0)
            .map(|(a, b)| (*a, *b))
            .collect();
        let (stat, p) = if cols.len() < 2 {
            (0.0, 1.0)
        } else {
            let table = vec![
                cols.iter().map(|&(a, _)| a).collect::<Vec<f64>>(),
                cols.iter().map(|&(_, b)| b).collect::<Vec<f64>>(),
            ];
            chi_square_independence(&table)?
        };
        raw.push(RawTest::new(
            format!("state marginal chi2 t={t} from {x}"),
            stat,
            p,
        ));
    }
    TestReport::from_raw(alpha, raw)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flip_chain() -> RateMatrix {
        RateMatrix::new(vec![vec![-1.0, 1.0], vec![1.0, -1.0]]).unwrap()
    }

    fn three_state() -> RateMatrix {
        RateMatrix::new(vec![
            vec![-2.0, 1.0, 1.0],
            vec![1.0, -1.5, 0.5],
            vec![0.3, 0.2, -0.5],
        ])
        .unwrap()
    }

    #[test]
    fn rate_matrix_validation() {
        assert!(RateMatrix::new(vec![]).is_err());
        assert!(RateMatrix::new(vec![vec![-1.0, -0.5], vec![0.0, 0.0]]).is_err());
        // positive row sum
        assert!(RateMatrix::new(vec![vec![-1.0, 2.0], vec![0.0, 0.0]]).is_err());
        // deficit row is fine
        let q = RateMatrix::new(vec![vec![-1.7, 1.0], vec![1.0, -1.7]]).unwrap();
        assert_eq!(q.deficit(0), 0.7);
        assert_eq!(q.exit_rate(0), 1.7);
    }

    #[test]
    fn zero_generator_freezes_the_chain() {
        let q = RateMatrix::new(vec![vec![0.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let path = simulate_ctmc(&q, 1, 5.0, 7).unwrap();
        assert!(path.events().is_empty());
        assert_eq!(path.state_at(0.0).unwrap(), CtmcState::State(1));
        assert_eq!(path.state_at(5.0).unwrap(), CtmcState::State(1));
    }

    #[test]
    fn flip_chain_matches_the_matrix_exponential() {
        // P(X_1 = start) = (1 + e^{-2}) / 2 for the rate-1 flip chain
        let q = flip_chain();
        let n = 20_000;
        let mut same = 0usize;
        for i in 0..n {
            let path = simulate_ctmc(&q, 0, 1.0, seed::derive(42, &[i as u64])).unwrap();
            if path.state_at(1.0).unwrap() == CtmcState::State(0) {
                same += 1;
            }
        }
        let expected = (1.0 + (-2.0f64).exp()) / 2.0;
        let got = same as f64 / n as f64;
        assert!(
            (got - expected).abs() < 0.01,
            "P(X_1 = x) = {got}, expected {expected}"
        );
    }

    #[test]
    fn uniform_deficit_gives_exponential_lifetimes() {
        // deficit 0.7 in every state: zeta ~ Exp(0.7) exactly (no grid)
        let q = RateMatrix::new(vec![vec![-1.7, 1.0], vec![1.0, -1.7]]).unwrap();
        let lifetimes: Vec<f64> = (0..10_000)
            .filter_map(|i| {
                let p = simulate_ctmc(&q, 0, 60.0, seed::derive(11, &[i as u64])).unwrap();
                p.lifetime().is_finite().then(|| p.lifetime())
            })
            .collect();
        assert!(lifetimes.len() > 9900, "censoring should be negligible");
        let cdf = |t: f64| 1.0 - (-0.7 * t).exp();
        let (_, p) = crate::stats::ks_one_sample(&lifetimes, cdf).unwrap();
        assert!(p > 0.01, "lifetime KS p = {p}");
    }

    #[test]
    fn events_are_increasing_and_cemetery_absorbs() {
        let q = RateMatrix::new(vec![vec![-2.2, 1.0, 1.0], vec![1.0, -1.5, 0.5], vec![
            0.3, 0.2, -0.9,
        ]])
        .unwrap();
        for i in 0..500u64 {
            let path = simulate_ctmc(&q, (i % 3) as usize, 8.0, 900 + i).unwrap();
            let mut prev = 0.0;
            let mut dead = false;
            for ev in path.events() {
                assert!(ev.time > prev);
                assert!(!dead, "events after the cemetery");
                prev = ev.time;
                if ev.to == CtmcState::Cemetery {
                    dead = true;
                    assert_eq!(path.lifetime(), ev.time);
                }
            }
        }
    }

    #[test]
    fn explosion_budget_sends_paths_to_the_cemetery() {
        let fast = RateMatrix::new(vec![vec![-50.0, 50.0], vec![50.0, -50.0]]).unwrap();
        let path = simulate_ctmc_bounded(&fast, 0, 10.0, 3, 5).unwrap();
        assert!(path.exploded());
        assert!(path.lifetime().is_finite());
        assert_eq!(path.state_at(10.0).unwrap(), CtmcState::Cemetery);
    }

    #[test]
    fn rule_evaluation_on_event_lists() {
        let q = three_state();
        let path = simulate_ctmc(&q, 0, 8.0, 21).unwrap();
        let first = path.events().first().unwrap().time;
        assert_eq!(CtmcRule::FirstJump.evaluate(&path), first);
        assert_eq!(CtmcRule::Deterministic(1.0).evaluate(&path), 1.0);
        assert_eq!(
            CtmcRule::Deterministic(9.0).evaluate(&path),
            f64::INFINITY
        );
        assert_eq!(CtmcRule::FirstEntry(vec![0]).evaluate(&path), 0.0);
        let entry2 = CtmcRule::FirstEntry(vec![2]).evaluate(&path);
        if entry2.is_finite() {
            assert_eq!(path.state_at(entry2).unwrap(), CtmcState::State(2));
        }
        assert_eq!(
            CtmcRule::min_of(CtmcRule::FirstJump, CtmcRule::Deterministic(1.0))
                .evaluate(&path),
            first.min(1.0)
        );
        assert!(CtmcRule::FirstEntry(vec![7]).validate(&q).is_err());
        assert!(CtmcRule::FirstEntry(vec![]).validate(&q).is_err());
    }

    #[test]
    fn frozen_generator_with_positive_rule_keeps_the_path_constant() {
        let q = RateMatrix::new(vec![vec![0.0]]).unwrap();
        let out = concatenate_ctmc(&q, &CtmcRule::Deterministic(1.0), 0, 4.0, 5, 64).unwrap();
        assert!(!out.stalled);
        assert_eq!(out.regeneration_times, vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(out.path.state_at(3.5).unwrap(), CtmcState::State(0));
    }

    #[test]
    fn nearly_frozen_rates_trigger_the_stall_detector() {
        let sleepy = RateMatrix::new(vec![
            vec![-1e-6, 1e-6],
            vec![1e-6, -1e-6],
        ])
        .unwrap();
        let out = concatenate_ctmc(&sleepy, &CtmcRule::FirstJump, 0, 4.0, 5, 64).unwrap();
        assert!(out.stalled);
        assert_eq!(out.segments_used, 64);
        assert!(out.regeneration_times.is_empty());
    }

    #[test]
    fn glued_marginals_match_direct_simulation() {
        let q = three_state();
        let report = ctmc_law_equality(
            &q,
            &CtmcRule::Deterministic(1.0),
            0,
            4.0,
            &[0.5, 2.0],
            4000,
            17,
            0.01,
        )
        .unwrap();
        assert!(report.overall_verdict, "{report:?}");
    }

    #[test]
    fn state_marginal_point_masses() {
        let q = RateMatrix::new(vec![vec![0.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let paths: Vec<CtmcPath> = (0..10)
            .map(|i| simulate_ctmc(&q, 1, 2.0, i).unwrap())
            .collect();
        assert_eq!(state_marginal(&paths, 0.0).unwrap(), vec![0.0, 1.0, 0.0]);
        assert_eq!(state_marginal(&paths, 2.0).unwrap(), vec![0.0, 1.0, 0.0]);
        assert!(state_marginal(&[], 1.0).is_err());
    }

    #[test]
    fn rules_round_trip_through_json() {
        let rule = CtmcRule::min_of(
            CtmcRule::FirstEntry(vec![2]),
            CtmcRule::Deterministic(1.0),
        );
        let text = serde_json::to_string(&rule).unwrap();
        let back: CtmcRule = serde_json::from_str(&text).unwrap();
        assert_eq!(rule, back);
        let q: RateMatrix =
            serde_json::from_str("[[-2.0,1.0,1.0],[1.0,-1.5,0.5],[0.3,0.2,-0.5]]").unwrap();
        q.validate().unwrap();
        assert_eq!(q, three_state());
    }
}
