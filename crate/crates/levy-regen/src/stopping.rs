//! Random times computed from a path: a combinator tree of rules, each
//! flagged as a genuine stopping time of the grid filtration or as an
//! anticipating time, with an executable adaptedness check.
//!
//! Grid-filtration semantics: the information at node `k` consists of all
//! node values and all jump events with time `<= k*step`. Every rule
//! evaluates to a grid node or infinity, and for adapted rules the returned
//! time is a function of the path on `[0, returned value]` only.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::process::{simulate, LevyModel, SamplePath};
use crate::seed;
use crate::{Error, Result};

/// A random-time rule. The first five combinators are stopping times of the
/// grid filtration; the last three anticipate the future.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum StoppingRule {
    /// The constant time `t` (rounded up to the grid; infinity allowed).
    #[serde(rename = "det")]
    Deterministic(f64),
    /// First node at which the Euclidean norm reaches the radius.
    #[serde(rename = "first_exit")]
    FirstExit(f64),
    /// First jump event time, rounded up to the grid.
    #[serde(rename = "first_jump")]
    FirstJump,
    /// Minimum of two rules; adapted iff both children are.
    #[serde(rename = "min")]
    MinOf(Box<StoppingRule>, Box<StoppingRule>),
    /// A rule capped at `t` (the cap rounds down to the grid so the bound
    /// holds exactly); adapted iff the child is.
    #[serde(rename = "capped_at")]
    CappedAt(Box<StoppingRule>, f64),
    /// Anticipating: half of the first jump time, rounded down to the grid.
    #[serde(rename = "half_first_jump")]
    HalfFirstJump,
    /// Anticipating: the last zero-visit node in `[0, window]` (a node with
    /// value 0 or a sign change across the previous node). Dimension 1 only.
    #[serde(rename = "last_zero")]
    LastZero(f64),
    /// Anticipating: the first node attaining the minimum over
    /// `[0, window]`. Dimension 1 only.
    #[serde(rename = "infimum_time")]
    InfimumTime(f64),
}

impl StoppingRule {
    pub fn min_of(a: StoppingRule, b: StoppingRule) -> StoppingRule {
        StoppingRule::MinOf(Box::new(a), Box::new(b))
    }

    pub fn capped_at(rule: StoppingRule, t: f64) -> StoppingRule {
        StoppingRule::CappedAt(Box::new(rule), t)
    }

    /// Whether the rule is a stopping time of the grid filtration.
    /// Composite nodes are adapted exactly when all children are.
    pub fn is_adapted(&self) -> bool {
        match self {
            StoppingRule::Deterministic(_)
            | StoppingRule::FirstExit(_)
            | StoppingRule::FirstJump => true,
            StoppingRule::MinOf(a, b) => a.is_adapted() && b.is_adapted(),
            StoppingRule::CappedAt(a, _) => a.is_adapted(),
            StoppingRule::HalfFirstJump
            | StoppingRule::LastZero(_)
            | StoppingRule::InfimumTime(_) => false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            StoppingRule::Deterministic(t) => {
                if t.is_nan() || *t < 0.0 {
                    return Err(Error::InvalidRule(format!("deterministic time {t}")));
                }
            }
            StoppingRule::FirstExit(r) => {
                if !(*r > 0.0) || !r.is_finite() {
                    return Err(Error::InvalidRule(format!("first-exit radius {r}")));
                }
            }
            StoppingRule::FirstJump | StoppingRule::HalfFirstJump => {}
            StoppingRule::MinOf(a, b) => {
                a.validate()?;
                b.validate()?;
            }
            StoppingRule::CappedAt(a, t) => {
                if t.is_nan() || *t < 0.0 {
                    return Err(Error::InvalidRule(format!("cap time {t}")));
                }
                a.validate()?;
            }
            StoppingRule::LastZero(w) | StoppingRule::InfimumTime(w) => {
                if !(*w > 0.0) || !w.is_finite() {
                    return Err(Error::InvalidRule(format!("rule window {w}")));
                }
            }
        }
        Ok(())
    }

    /// An a priori upper bound on the rule value, used to size segment
    /// simulations: windowed and capped rules never exceed their window.
    pub fn horizon_bound(&self) -> f64 {
        match self {
            StoppingRule::Deterministic(t) => *t,
            StoppingRule::MinOf(a, b) => a.horizon_bound().min(b.horizon_bound()),
            StoppingRule::CappedAt(a, t) => a.horizon_bound().min(*t),
            StoppingRule::LastZero(w) | StoppingRule::InfimumTime(w) => *w,
            StoppingRule::FirstExit(_)
            | StoppingRule::FirstJump
            | StoppingRule::HalfFirstJump => f64::INFINITY,
        }
    }

    /// Evaluate the rule on a path. Returns a grid node (possibly beyond
    /// the horizon for a deterministic rule) or infinity when the rule time
    /// is not attained within the observed window.
    pub fn evaluate(&self, path: &SamplePath) -> Result<f64> {
        self.validate()?;
        self.eval_inner(path)
    }

    fn eval_inner(&self, path: &SamplePath) -> Result<f64> {
        let grid = path.grid();
        match self {
            StoppingRule::Deterministic(t) => Ok(grid.ceil_time(*t)),
            StoppingRule::FirstExit(radius) => {
                for k in 0..=path.n_nodes() {
                    match path.point_at_index(k) {
                        Some(x) => {
                            let norm2: f64 = x.iter().map(|c| c * c).sum();
                            if norm2.sqrt() >= *radius {
                                return Ok(grid.time(k));
                            }
                        }
                        None => break,
                    }
                }
                Ok(f64::INFINITY)
            }
            StoppingRule::FirstJump => Ok(path
                .jump_events()
                .first()
                .map_or(f64::INFINITY, |ev| grid.ceil_time(ev.time))),
            StoppingRule::MinOf(a, b) => Ok(a.eval_inner(path)?.min(b.eval_inner(path)?)),
            StoppingRule::CappedAt(a, t) => {
                Ok(a.eval_inner(path)?.min(grid.floor_time(*t)))
            }
            StoppingRule::HalfFirstJump => Ok(path
                .jump_events()
                .first()
                .map_or(f64::INFINITY, |ev| grid.floor_time(ev.time / 2.0))),
            StoppingRule::LastZero(window) => {
                let end = self.window_end(path, *window)?;
                let mut last: Option<usize> = None;
                let mut prev: Option<f64> = None;
                for k in 0..=end {
                    match path.point_at_index(k) {
                        Some(x) => {
                            let v = x[0];
                            if v == 0.0 || prev.is_some_and(|p| p * v < 0.0) {
                                last = Some(k);
                            }
                            prev = Some(v);
                        }
                        None => break,
                    }
                }
                Ok(grid.time(last.unwrap_or(0)))
            }
            StoppingRule::InfimumTime(window) => {
                let end = self.window_end(path, *window)?;
                let mut best: Option<(usize, f64)> = None;
                for k in 0..=end {
                    match path.point_at_index(k) {
                        Some(x) => {
                            let v = x[0];
                            if best.is_none_or(|(_, b)| v < b) {
                                best = Some((k, v));
                            }
                        }
                        None => break,
                    }
                }
                Ok(grid.time(best.map_or(0, |(k, _)| k)))
            }
        }
    }

    fn window_end(&self, path: &SamplePath, window: f64) -> Result<usize> {
        if path.d() != 1 {
            return Err(Error::InvalidRule(
                "windowed zero/infimum rules are defined in dimension 1".into(),
            ));
        }
        if window > path.horizon() {
            return Err(Error::WindowExceedsHorizon {
                window,
                horizon: path.horizon(),
            });
        }
        Ok(path.grid().floor_index(window) as usize)
    }
}

/// Largest node index up to which the two paths carry identical information
/// (equal node values and identical jump events up to that node), or `None`
/// when they disagree already at node 0.
fn agreement_prefix(a: &SamplePath, b: &SamplePath) -> Option<usize> {
    let grid = a.grid();
    let (ea, eb) = (a.jump_events(), b.jump_events());
    let (mut ia, mut ib) = (0usize, 0usize);
    let mut agreed = None;
    for k in 0..=a.n_nodes() {
        let t = grid.time(k);
        let sa = ia;
        while ia < ea.len() && ea[ia].time <= t {
            ia += 1;
        }
        let sb = ib;
        while ib < eb.len() && eb[ib].time <= t {
            ib += 1;
        }
        let events_match = ia - sa == ib - sb
            && ea[sa..ia]
                .iter()
                .zip(&eb[sb..ib])
                .all(|(x, y)| x.time == y.time && x.size == y.size);
        let values_match = match (a.point_at_index(k), b.point_at_index(k)) {
            (Some(x), Some(y)) => x == y,
            (None, None) => true,
            _ => false,
        };
        if events_match && values_match {
            agreed = Some(k);
        } else {
            break;
        }
    }
    agreed
}

/// Operational stopping-time check on one pair of paths: whenever the two
/// paths agree on `[0, t]` and the rule value on one of them is `<= t`, the
/// rule must return the same value on the other. Returns false exactly when
/// this pair witnesses a violation.
pub fn check_adapted(
    rule: &StoppingRule,
    path_a: &SamplePath,
    path_b: &SamplePath,
) -> Result<bool> {
    if path_a.grid() != path_b.grid() || path_a.d() != path_b.d() {
        return Err(Error::GridMismatch);
    }
    let Some(prefix) = agreement_prefix(path_a, path_b) else {
        return Ok(true);
    };
    let grid = path_a.grid();
    for (x, y) in [(path_a, path_b), (path_b, path_a)] {
        let tx = rule.evaluate(x)?;
        if !tx.is_finite() {
            continue;
        }
        let kx = grid.aligned_index(tx)?;
        if kx <= prefix as u64 {
            let ty = rule.evaluate(y)?;
            let same = ty.is_finite() && grid.aligned_index(ty)? == kx;
            if !same {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Outcome of the spliced-pair adaptedness harness.
#[derive(Debug, Clone, Serialize)]
pub struct AdaptednessReport {
    pub pairs: usize,
    pub violations: usize,
    pub first_violation_pair: Option<usize>,
}

impl AdaptednessReport {
    /// All pairs passed the stopping-time check.
    pub fn all_pass(&self) -> bool {
        self.violations == 0
    }
}

/// Run [`check_adapted`] over `n_pairs` generated pairs that agree on a
/// random prefix: each pair is an independent path together with a splice
/// of it and a second independent path at a uniform node. The model must be
/// unkilled.
pub fn adaptedness_harness(
    model: &LevyModel,
    rule: &StoppingRule,
    horizon: f64,
    step: f64,
    n_pairs: usize,
    master_seed: u64,
) -> Result<AdaptednessReport> {
    if model.is_killed() {
        return Err(Error::InvalidModel(
            "the adaptedness harness splices immortal paths; use an unkilled model".into(),
        ));
    }
    rule.validate()?;
    let results: Vec<bool> = (0..n_pairs)
        .into_par_iter()
        .map(|i| -> Result<bool> {
            let tag = i as u64;
            let a = simulate(model, horizon, step, seed::derive(master_seed, &[1, tag]))?;
            let fresh = simulate(model, horizon, step, seed::derive(master_seed, &[2, tag]))?;
            let mut rng = seed::rng(master_seed, &[3, tag]);
            let cut = rng.random_range(0..=a.n_nodes());
            let b = SamplePath::splice_prefix(&a, &fresh, cut)?;
            check_adapted(rule, &a, &b)
        })
        .collect::<Result<Vec<bool>>>()?;
    let violations = results.iter().filter(|ok| !**ok).count();
    let first_violation_pair = results.iter().position(|ok| !*ok);
    Ok(AdaptednessReport {
        pairs: n_pairs,
        violations,
        first_violation_pair,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::process::{AtomicJumpMeasure, JumpAtom, JumpEvent};

    const H: f64 = 0.00390625; // 2^-8

    /// Pure-jump path on [0, horizon] with unit jumps at the given times.
    fn unit_jump_path(step: f64, horizon: f64, jump_times: &[f64]) -> SamplePath {
        let grid = Grid::new(step, horizon).unwrap();
        let n = grid.n_nodes();
        let mut values = vec![0.0; n + 1];
        for &t in jump_times {
            let from = grid.ceil_index(t) as usize;
            for v in values.iter_mut().skip(from) {
                *v += 1.0;
            }
        }
        let events = jump_times
            .iter()
            .map(|&t| JumpEvent {
                time: t,
                size: vec![1.0],
            })
            .collect();
        SamplePath::from_parts(grid, 1, values, events, f64::INFINITY).unwrap()
    }

    fn zero_path(step: f64, horizon: f64) -> SamplePath {
        unit_jump_path(step, horizon, &[])
    }

    #[test]
    fn deterministic_rule_returns_its_time() {
        let path = zero_path(H, 4.0);
        let t = StoppingRule::Deterministic(1.0).evaluate(&path).unwrap();
        assert_eq!(t, 1.0);
        assert_eq!(
            StoppingRule::Deterministic(f64::INFINITY)
                .evaluate(&path)
                .unwrap(),
            f64::INFINITY
        );
    }

    #[test]
    fn first_jump_rounds_up_to_the_grid() {
        let path = unit_jump_path(H, 4.0, &[0.30]);
        let t = StoppingRule::FirstJump.evaluate(&path).unwrap();
        assert_eq!(t, 0.30078125);
        assert_eq!(
            StoppingRule::FirstJump
                .evaluate(&zero_path(H, 4.0))
                .unwrap(),
            f64::INFINITY
        );
    }

    #[test]
    fn min_with_deterministic_on_the_zero_path() {
        let rule = StoppingRule::min_of(
            StoppingRule::FirstExit(1.0),
            StoppingRule::Deterministic(1.0),
        );
        assert_eq!(rule.evaluate(&zero_path(H, 4.0)).unwrap(), 1.0);
    }

    #[test]
    fn min_with_infinite_deterministic_is_identity_and_cap_binds() {
        let model = LevyModel::brownian1(0.3, 1.0);
        for i in 0..50u64 {
            let path = simulate(&model, 2.0, 0.03125, 100 + i).unwrap();
            let base = StoppingRule::FirstExit(0.8);
            let with_inf = StoppingRule::min_of(
                base.clone(),
                StoppingRule::Deterministic(f64::INFINITY),
            );
            assert_eq!(
                base.evaluate(&path).unwrap(),
                with_inf.evaluate(&path).unwrap()
            );
            let capped = StoppingRule::capped_at(base.clone(), 0.5);
            assert!(capped.evaluate(&path).unwrap() <= 0.5);
        }
    }

    #[test]
    fn half_first_jump_rounds_down() {
        let path = unit_jump_path(H, 4.0, &[0.9]);
        let t = StoppingRule::HalfFirstJump.evaluate(&path).unwrap();
        assert_eq!(t, 0.44921875); // floor(0.45 / 2^-8) * 2^-8
    }

    #[test]
    fn last_zero_and_infimum_need_dimension_one_and_window_in_range() {
        let path = zero_path(H, 4.0);
        assert!(matches!(
            StoppingRule::LastZero(5.0).evaluate(&path),
            Err(Error::WindowExceedsHorizon { .. })
        ));
        // the zero path is at zero throughout: last zero is the window end
        assert_eq!(StoppingRule::LastZero(2.0).evaluate(&path).unwrap(), 2.0);
        assert_eq!(StoppingRule::InfimumTime(2.0).evaluate(&path).unwrap(), 0.0);
    }

    #[test]
    fn infimum_time_finds_the_running_minimum() {
        let grid = Grid::new(0.25, 1.0).unwrap();
        let values = vec![0.0, -1.0, -3.0, -2.0, -3.0];
        let path = SamplePath::from_parts(grid, 1, values, vec![], f64::INFINITY).unwrap();
        // first attaining node wins
        assert_eq!(StoppingRule::InfimumTime(1.0).evaluate(&path).unwrap(), 0.5);
        // 0 -> -1 is no sign change; the only zero visit is the origin
        assert_eq!(StoppingRule::LastZero(1.0).evaluate(&path).unwrap(), 0.0);

        let crossing = SamplePath::from_parts(
            Grid::new(0.25, 1.0).unwrap(),
            1,
            vec![0.0, 1.0, -1.0, 2.0, 3.0],
            vec![],
            f64::INFINITY,
        )
        .unwrap();
        // sign changes across nodes 2 and 3; the later one wins
        assert_eq!(
            StoppingRule::LastZero(1.0).evaluate(&crossing).unwrap(),
            0.75
        );
    }

    #[test]
    fn adapted_flags_follow_the_tree() {
        let adapted = StoppingRule::min_of(
            StoppingRule::FirstExit(1.0),
            StoppingRule::Deterministic(1.0),
        );
        assert!(adapted.is_adapted());
        let tainted = StoppingRule::min_of(
            StoppingRule::FirstExit(1.0),
            StoppingRule::HalfFirstJump,
        );
        assert!(!tainted.is_adapted());
        assert!(!StoppingRule::capped_at(StoppingRule::LastZero(1.0), 0.5).is_adapted());
    }

    #[test]
    fn explicit_half_jump_violation_from_the_splice_construction() {
        // two Poisson paths agreeing on [0, ~0.5): first jumps at 0.5, 0.9
        let a = unit_jump_path(H, 4.0, &[0.5]);
        let b = unit_jump_path(H, 4.0, &[0.9]);
        assert_eq!(StoppingRule::HalfFirstJump.evaluate(&a).unwrap(), 0.25);
        assert_eq!(
            StoppingRule::HalfFirstJump.evaluate(&b).unwrap(),
            0.44921875
        );
        assert!(!check_adapted(&StoppingRule::HalfFirstJump, &a, &b).unwrap());
        // the same pair is no witness against a genuine stopping time
        assert!(check_adapted(&StoppingRule::FirstJump, &a, &b).unwrap());
        assert!(check_adapted(&StoppingRule::Deterministic(1.0), &a, &b).unwrap());
    }

    #[test]
    fn check_adapted_requires_matching_grids() {
        let a = zero_path(H, 4.0);
        let b = zero_path(H, 2.0);
        assert!(matches!(
            check_adapted(&StoppingRule::FirstJump, &a, &b),
            Err(Error::GridMismatch)
        ));
    }

    #[test]
    fn harness_passes_adapted_and_catches_anticipating_rules() {
        let model = LevyModel::brownian1(0.0, 1.0)
            .with_jumps(
                AtomicJumpMeasure::new(vec![
                    JumpAtom {
                        x: vec![1.0],
                        mass: 1.0,
                    },
                    JumpAtom {
                        x: vec![-1.0],
                        mass: 1.0,
                    },
                ])
                .unwrap(),
            )
            .unwrap();
        let report = adaptedness_harness(
            &model,
            &StoppingRule::FirstExit(1.0),
            2.0,
            0.015625,
            1000,
            99,
        )
        .unwrap();
        assert!(report.all_pass(), "violations: {}", report.violations);

        let poisson = LevyModel::poisson(1.0).unwrap();
        let report = adaptedness_harness(
            &poisson,
            &StoppingRule::HalfFirstJump,
            2.0,
            0.015625,
            2000,
            99,
        )
        .unwrap();
        assert!(
            report.violations > 0,
            "expected a violating pair for half-first-jump"
        );
    }

    #[test]
    fn rules_serialize_as_json_combinator_trees() {
        let rule: StoppingRule =
            serde_json::from_str(r#"{"min":[{"first_exit":1.0},{"det":1.0}]}"#).unwrap();
        assert_eq!(
            rule,
            StoppingRule::min_of(
                StoppingRule::FirstExit(1.0),
                StoppingRule::Deterministic(1.0)
            )
        );
        let text = serde_json::to_string(&rule).unwrap();
        let back: StoppingRule = serde_json::from_str(&text).unwrap();
        assert_eq!(rule, back);
        let unit: StoppingRule = serde_json::from_str(r#""first_jump""#).unwrap();
        assert_eq!(unit, StoppingRule::FirstJump);
        let windowed: StoppingRule = serde_json::from_str(r#"{"last_zero":4.0}"#).unwrap();
        assert_eq!(windowed, StoppingRule::LastZero(4.0));
    }
}
