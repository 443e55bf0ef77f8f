//! The concatenation construction: glue i.i.d. segments, each observed up
//! to its stopping time, into one path whose law must equal that of the
//! underlying process; plus renewal counting, the strong-Markov diagnostics
//! and the law-equality test driver used throughout verification.
//!
//! Bookkeeping is exact: regeneration times are partial sums of per-segment
//! rule values accumulated on grid indices. A segment is simulated only as
//! far as the rule can possibly need (its intrinsic bound, capped at the
//! requested horizon); rules are implicitly capped at that segment horizon,
//! which preserves the stopping-time property.

use rayon::prelude::*;
use serde::Serialize;

use crate::grid::Grid;
use crate::process::{simulate, JumpEvent, LevyModel, SamplePath};
use crate::seed;
use crate::stats::{ks_two_sample, RawTest, TestReport};
use crate::stopping::StoppingRule;
use crate::{Error, Result};

/// Pilot size used before any regeneration run.
pub const PILOT_SIZE: usize = 1000;
/// Required fraction of pilot segments with `T > 0`.
pub const PILOT_MIN_POSITIVE: f64 = 0.01;
/// Lower bound for the segment budget.
pub const N_MAX_FLOOR: usize = 64;
/// Upper bound for the segment budget.
pub const N_MAX_CEILING: usize = 100_000;
/// Minimum surviving samples for the strong-Markov diagnostic.
const MARKOV_MIN_SURVIVORS: usize = 500;

const STREAM_SEGMENT: u64 = 0x5e01;
const STREAM_PILOT: u64 = 0x5e02;
const STREAM_RENEWAL: u64 = 0x5e03;
const STREAM_Y_PATH: u64 = 0x5e04;
const STREAM_X_PATH: u64 = 0x5e05;
const STREAM_MARKOV: u64 = 0x5e06;
const STREAM_MARKOV_FRESH: u64 = 0x5e07;

/// Result of gluing segments into one path.
#[derive(Debug, Clone)]
pub struct RegenerationOutput {
    /// The glued path over the requested horizon.
    pub path: SamplePath,
    /// Partial sums of the consumed segments' rule values (grid nodes; only
    /// the last may exceed the horizon). Zero-length segments repeat the
    /// previous value.
    pub regeneration_times: Vec<f64>,
    /// Segments consumed, including a final absorbing one.
    pub segments_used: usize,
    /// True when the budget ran out before the partial sums reached the
    /// horizon; the path tail past the last regeneration time is then held
    /// constant and is not law-faithful.
    pub stalled: bool,
}

/// Segment horizon needed to realize the rule within a target horizon: the
/// rule's intrinsic bound, rounded up to the grid, clamped to `[step,
/// horizon]`.
fn segment_horizon(rule: &StoppingRule, grid: &Grid) -> f64 {
    let bound = rule.horizon_bound();
    if !bound.is_finite() {
        return grid.horizon();
    }
    let idx = grid.ceil_index(bound).clamp(1, grid.n_nodes() as u64);
    idx as f64 * grid.step()
}

/// Rule value on a segment as a step count, capped at the segment horizon.
fn cut_index(rule: &StoppingRule, seg: &SamplePath) -> Result<u64> {
    let t = rule.evaluate(seg)?;
    let n = seg.n_nodes() as u64;
    if !t.is_finite() {
        return Ok(n);
    }
    Ok(seg.grid().aligned_index(t)?.min(n))
}

/// Glue i.i.d. segments of the model, each cut at its rule time, into one
/// path on `[0, horizon]`.
///
/// Per consumed segment `k`: a fresh path is simulated from the seed fan-out
/// `(seed, segment k)` and cut at its rule value (capped at the segment
/// horizon). If the segment dies at or before its cut, the glued path is
/// absorbed in the cemetery from that point on and construction stops;
/// otherwise the segment's increments and shifted jump events are appended
/// and the partial sum advances. Zero-length segments are consumed and add
/// nothing.
///
/// Callers are expected to have run the pilot check
/// ([`ensure_pilot`]) for the model/rule pair.
pub fn concatenate(
    model: &LevyModel,
    rule: &StoppingRule,
    horizon: f64,
    step: f64,
    seed_value: u64,
    n_max: usize,
) -> Result<RegenerationOutput> {
    if n_max == 0 {
        return Err(Error::InvalidRule("segment budget n_max must be at least 1".into()));
    }
    model.validate()?;
    rule.validate()?;
    let grid = Grid::new(step, horizon)?;
    let n = grid.n_nodes() as u64;
    let d = model.d;
    let seg_horizon = segment_horizon(rule, &grid);

    let mut values = vec![0.0; (grid.n_nodes() + 1) * d];
    let mut events: Vec<JumpEvent> = Vec::new();
    let mut regeneration_times: Vec<f64> = Vec::new();
    let mut offset = vec![0.0f64; d];
    let mut s_idx: u64 = 0;
    let mut lifetime = f64::INFINITY;
    let mut segments_used = 0usize;
    let mut absorbed = false;

    for k in 1..=n_max {
        if s_idx >= n {
            break;
        }
        let seg = simulate(
            model,
            seg_horizon,
            step,
            seed::derive(seed_value, &[STREAM_SEGMENT, k as u64]),
        )?;
        segments_used = k;
        let cut = cut_index(rule, &seg)?;
        let cut_time = cut as f64 * step;
        let s_time = s_idx as f64 * step;

        if seg.lifetime() <= cut_time {
            // the segment dies no later than its cut: the glued path is in
            // the cemetery from s + zeta onward
            for j in 1..=seg.n_nodes() as u64 {
                let target = s_idx + j;
                if target > n {
                    break;
                }
                match seg.point_at_index(j as usize) {
                    Some(p) => {
                        let row = target as usize * d;
                        for i in 0..d {
                            values[row + i] = offset[i] + p[i];
                        }
                    }
                    None => break,
                }
            }
            for ev in seg.jump_events() {
                let t = s_time + ev.time;
                if t <= grid.horizon() {
                    events.push(JumpEvent {
                        time: t,
                        size: ev.size.clone(),
                    });
                }
            }
            lifetime = s_time + seg.lifetime();
            absorbed = true;
            break;
        }

        for j in 1..=cut {
            let target = s_idx + j;
            if target > n {
                break;
            }
            let p = seg
                .point_at_index(j as usize)
                .expect("segment alive on [0, cut]");
            let row = target as usize * d;
            for i in 0..d {
                values[row + i] = offset[i] + p[i];
            }
        }
        for ev in seg.jump_events() {
            if ev.time > cut_time {
                break;
            }
            let t = s_time + ev.time;
            if t <= grid.horizon() {
                events.push(JumpEvent {
                    time: t,
                    size: ev.size.clone(),
                });
            }
        }
        if cut > 0 {
            let p = seg
                .point_at_index(cut as usize)
                .expect("segment alive at its cut");
            for i in 0..d {
                offset[i] += p[i];
            }
        }
        s_idx += cut;
        regeneration_times.push(s_idx as f64 * step);
    }

    let stalled = !absorbed && s_idx < n;
    if stalled {
        // hold the last glued value so the output is still a valid path
        for target in (s_idx + 1)..=n {
            let row = target as usize * d;
            values[row..row + d].copy_from_slice(&offset);
        }
    }
    let path = SamplePath::from_parts(grid, d, values, events, lifetime)?;
    Ok(RegenerationOutput {
        path,
        regeneration_times,
        segments_used,
        stalled,
    })
}

/// Outcome of the `P(T > 0) > 0` pilot.
#[derive(Debug, Clone, Serialize)]
pub struct PilotSummary {
    pub n: usize,
    pub positive_fraction: f64,
    /// Median rule value over the pilot (capped at the segment horizon).
    pub median_t: f64,
    /// `10 * horizon / median T`, clamped to `[64, 100000]`.
    pub suggested_n_max: usize,
}

impl PilotSummary {
    pub fn passes(&self) -> bool {
        self.positive_fraction >= PILOT_MIN_POSITIVE
    }
}

/// Measure the fraction of pilot segments with `T > 0` and derive the
/// segment budget for a target horizon.
pub fn run_pilot(
    model: &LevyModel,
    rule: &StoppingRule,
    horizon: f64,
    step: f64,
    n_pilot: usize,
    seed_value: u64,
) -> Result<PilotSummary> {
    model.validate()?;
    rule.validate()?;
    let grid = Grid::new(step, horizon)?;
    let seg_horizon = segment_horizon(rule, &grid);
    let mut ts: Vec<f64> = (0..n_pilot)
        .into_par_iter()
        .map(|i| -> Result<f64> {
            let seg = simulate(
                model,
                seg_horizon,
                step,
                seed::derive(seed_value, &[STREAM_PILOT, i as u64]),
            )?;
            Ok(cut_index(rule, &seg)? as f64 * step)
        })
        .collect::<Result<Vec<f64>>>()?;
    let positive = ts.iter().filter(|&&t| t > 0.0).count();
    ts.sort_by(f64::total_cmp);
    let median_t = ts[ts.len() / 2];
    let suggested_n_max = if median_t > 0.0 {
        ((10.0 * horizon / median_t).ceil() as usize).clamp(N_MAX_FLOOR, N_MAX_CEILING)
    } else {
        N_MAX_FLOOR
    };
    Ok(PilotSummary {
        n: n_pilot,
        positive_fraction: positive as f64 / n_pilot as f64,
        median_t,
        suggested_n_max,
    })
}

/// Run the pilot and fail unless at least 1% of segments have `T > 0`.
pub fn ensure_pilot(
    model: &LevyModel,
    rule: &StoppingRule,
    horizon: f64,
    step: f64,
    seed_value: u64,
) -> Result<PilotSummary> {
    let pilot = run_pilot(model, rule, horizon, step, PILOT_SIZE, seed_value)?;
    if !pilot.passes() {
        return Err(Error::PilotFailed {
            positive_fraction: pilot.positive_fraction,
            required: PILOT_MIN_POSITIVE,
        });
    }
    Ok(pilot)
}

/// Renewal counts and a split-half stability diagnostic.
#[derive(Debug, Clone, Serialize)]
pub struct RenewalSummary {
    pub counts: Vec<u64>,
    pub mean: f64,
    pub first_half_mean: f64,
    /// First-half mean within three standard errors of the full mean.
    pub stable: bool,
}

/// Draw `n_samples` independent copies of `N = #{k : S_k <= window}`, the
/// number of regeneration times in the window, with `S_k` the partial sums
/// of i.i.d. rule values. A rule value not attained within its segment
/// window ends the count: the remaining window is shorter than the segment
/// window, so the true partial sum already exceeds it.
pub fn renewal_count(
    model: &LevyModel,
    rule: &StoppingRule,
    window: f64,
    step: f64,
    n_samples: usize,
    seed_value: u64,
) -> Result<RenewalSummary> {
    ensure_pilot(model, rule, window, step, seed::derive(seed_value, &[STREAM_PILOT]))?;
    let grid = Grid::new(step, window)?;
    let window_idx = grid.n_nodes() as u64;
    let seg_horizon = segment_horizon(rule, &grid);
    let counts: Vec<u64> = (0..n_samples)
        .into_par_iter()
        .map(|i| -> Result<u64> {
            let mut s_idx: u64 = 0;
            let mut count = 0u64;
            for k in 1..=N_MAX_CEILING as u64 {
                let seg = simulate(
                    model,
                    seg_horizon,
                    step,
                    seed::derive(seed_value, &[STREAM_RENEWAL, i as u64, k]),
                )?;
                let t = rule.evaluate(&seg)?;
                if !t.is_finite() {
                    return Ok(count);
                }
                s_idx += seg.grid().aligned_index(t)?;
                if s_idx <= window_idx {
                    count += 1;
                } else {
                    return Ok(count);
                }
            }
            Err(Error::InvalidRule(
                "renewal counting exhausted its segment guard; rule values are \
                 effectively zero"
                    .into(),
            ))
        })
        .collect::<Result<Vec<u64>>>()?;
    let n = counts.len() as f64;
    let mean = counts.iter().map(|&c| c as f64).sum::<f64>() / n;
    let half = &counts[..counts.len() / 2];
    let first_half_mean = half.iter().map(|&c| c as f64).sum::<f64>() / half.len() as f64;
    let var = counts
        .iter()
        .map(|&c| {
            let d = c as f64 - mean;
            d * d
        })
        .sum::<f64>()
        / (n - 1.0);
    let se_half = (var / half.len() as f64).sqrt();
    let stable = (first_half_mean - mean).abs() <= 3.0 * se_half.max(f64::EPSILON);
    Ok(RenewalSummary {
        counts,
        mean,
        first_half_mean,
        stable,
    })
}

/// 2x2 survival comparison; p = 1 when neither side saw a death.
fn survival_test(alive_a: f64, dead_a: f64, alive_b: f64, dead_b: f64) -> (f64, f64) {
    if dead_a == 0.0 && dead_b == 0.0 {
        return (0.0, 1.0);
    }
    let n = alive_a + dead_a + alive_b + dead_b;
    let det = alive_a * dead_b - dead_a * alive_b;
    let denom = (alive_a + dead_a)
        * (alive_b + dead_b)
        * (alive_a + alive_b)
        * (dead_a + dead_b);
    if denom == 0.0 {
        // one margin empty: the tables are degenerate but unequal only if a
        // side is fully dead while the other is not
        let split = (dead_a == 0.0) != (dead_b == 0.0);
        return if split { (f64::INFINITY, 0.0) } else { (0.0, 1.0) };
    }
    let stat = n * det * det / denom;
    (stat, crate::stats::chi_square_p(stat, 1.0))
}

/// Law-equality comparison between concatenated and directly simulated
/// paths.
#[derive(Debug, Clone, Serialize)]
pub struct LawEqualityOutcome {
    pub report: TestReport,
    pub pilot: PilotSummary,
    /// Concatenated paths that exhausted their segment budget.
    pub stalled_paths: usize,
}

/// Marginals of one path at the requested times: `None` once dead.
fn marginals_at(path: &SamplePath, time_indices: &[usize]) -> Vec<Option<Vec<f64>>> {
    time_indices
        .iter()
        .map(|&k| path.point_at_index(k).map(<[f64]>::to_vec))
        .collect()
}

/// Compare marginal laws of the concatenated process against direct
/// simulation at the given times: per-coordinate two-sample KS conditioned
/// on survival plus a survival chi-square per time, Holm-adjusted as one
/// family at `alpha`.
pub fn law_equality_report(
    model: &LevyModel,
    rule: &StoppingRule,
    horizon: f64,
    step: f64,
    marginal_times: &[f64],
    n_paths: usize,
    seed_value: u64,
    alpha: f64,
) -> Result<LawEqualityOutcome> {
    let grid = Grid::new(step, horizon)?;
    let time_indices: Vec<usize> = marginal_times
        .iter()
        .map(|&t| grid.index_of(t))
        .collect::<Result<Vec<usize>>>()?;
    let pilot = ensure_pilot(
        model,
        rule,
        horizon,
        step,
        seed::derive(seed_value, &[STREAM_PILOT]),
    )?;
    let n_max = pilot.suggested_n_max;

    let glued: Vec<(Vec<Option<Vec<f64>>>, bool)> = (0..n_paths)
        .into_par_iter()
        .map(|i| -> Result<(Vec<Option<Vec<f64>>>, bool)> {
            let out = concatenate(
                model,
                rule,
                horizon,
                step,
                seed::derive(seed_value, &[STREAM_Y_PATH, i as u64]),
                n_max,
            )?;
            Ok((marginals_at(&out.path, &time_indices), out.stalled))
        })
        .collect::<Result<_>>()?;
    let direct: Vec<Vec<Option<Vec<f64>>>> = (0..n_paths)
        .into_par_iter()
        .map(|i| -> Result<Vec<Option<Vec<f64>>>> {
            let path = simulate(
                model,
                horizon,
                step,
                seed::derive(seed_value, &[STREAM_X_PATH, i as u64]),
            )?;
            Ok(marginals_at(&path, &time_indices))
        })
        .collect::<Result<_>>()?;
    let stalled_paths = glued.iter().filter(|(_, stalled)| *stalled).count();

    let d = model.d;
    let mut raw: Vec<RawTest> = Vec::new();
    for (ti, &t) in marginal_times.iter().enumerate() {
        let y_alive: Vec<&Vec<f64>> =
            glued.iter().filter_map(|(m, _)| m[ti].as_ref()).collect();
        let x_alive: Vec<&Vec<f64>> =
            direct.iter().filter_map(|m| m[ti].as_ref()).collect();
        let (stat, p) = survival_test(
            y_alive.len() as f64,
            (n_paths - y_alive.len()) as f64,
            x_alive.len() as f64,
            (n_paths - x_alive.len()) as f64,
        );
        raw.push(RawTest::new(format!("survival chi2 t={t}"), stat, p));
        for c in 0..d {
            let ys: Vec<f64> = y_alive.iter().map(|v| v[c]).collect();
            let xs: Vec<f64> = x_alive.iter().map(|v| v[c]).collect();
            let (stat, p) = ks_two_sample(&ys, &xs)?;
            raw.push(RawTest::new(
                format!("marginal ks t={t} coord {}", c + 1),
                stat,
                p,
            ));
        }
    }
    Ok(LawEqualityOutcome {
        report: TestReport::from_raw(alpha, raw)?,
        pilot,
        stalled_paths,
    })
}

/// Count segments whose rule value is at or past their lifetime, the
/// `P(S >= zeta) > 0` bound for killed processes.
pub fn killed_stopping_count(
    model: &LevyModel,
    rule: &StoppingRule,
    horizon: f64,
    step: f64,
    n_segments: usize,
    seed_value: u64,
) -> Result<usize> {
    let grid = Grid::new(step, horizon)?;
    let seg_horizon = segment_horizon(rule, &grid);
    let hits: Vec<bool> = (0..n_segments)
        .into_par_iter()
        .map(|i| -> Result<bool> {
            let seg = simulate(
                model,
                seg_horizon,
                step,
                seed::derive(seed_value, &[STREAM_SEGMENT, i as u64]),
            )?;
            let cut = cut_index(rule, &seg)? as f64 * step;
            Ok(seg.lifetime() <= cut)
        })
        .collect::<Result<_>>()?;
    Ok(hits.iter().filter(|h| **h).count())
}

/// Strong-Markov diagnostic at a rule time `T`: on survivors of `{T < zeta,
/// T + delta <= horizon}`, (a) per-coordinate KS between the post-`T`
/// increment over `delta` and a fresh increment over `delta`, and (b) a
/// chi-square independence test between quantile bins of the pre-`T` value
/// and of the post-`T` increment (first coordinate).
pub fn strong_markov_diagnostic(
    model: &LevyModel,
    rule: &StoppingRule,
    horizon: f64,
    step: f64,
    delta: f64,
    n_samples: usize,
    seed_value: u64,
    alpha: f64,
) -> Result<TestReport> {
    let grid = Grid::new(step, horizon)?;
    let delta_idx = grid.index_of(delta)?;
    if delta_idx == 0 {
        return Err(Error::InvalidRule("delta must be at least one step".into()));
    }
    let d = model.d;

    // (pre-T value, post-T increment) on the surviving event
    let post: Vec<(Vec<f64>, Vec<f64>)> = (0..n_samples)
        .into_par_iter()
        .map(|i| -> Result<Option<(Vec<f64>, Vec<f64>)>> {
            let path = simulate(
                model,
                horizon,
                step,
                seed::derive(seed_value, &[STREAM_MARKOV, i as u64]),
            )?;
            let t = rule.evaluate(&path)?;
            if !t.is_finite() {
                return Ok(None);
            }
            let t_idx = grid.aligned_index(t)? as usize;
            if t_idx + delta_idx > grid.n_nodes() {
                return Ok(None);
            }
            let Some(at_t) = path.point_at_index(t_idx) else {
                return Ok(None);
            };
            let at_t = at_t.to_vec();
            let Some(later) = path.point_at_index(t_idx + delta_idx) else {
                return Ok(None);
            };
            let incr: Vec<f64> = later.iter().zip(&at_t).map(|(a, b)| a - b).collect();
            Ok(Some((at_t, incr)))
        })
        .collect::<Result<Vec<Option<_>>>>()?
        .into_iter()
        .flatten()
        .collect();
    if post.len() < MARKOV_MIN_SURVIVORS {
        return Err(Error::InsufficientSurvivors {
            survivors: post.len(),
            required: MARKOV_MIN_SURVIVORS,
        });
    }

    let fresh: Vec<Vec<f64>> = (0..n_samples)
        .into_par_iter()
        .map(|i| -> Result<Option<Vec<f64>>> {
            let path = simulate(
                model,
                delta,
                step,
                seed::derive(seed_value, &[STREAM_MARKOV_FRESH, i as u64]),
            )?;
            Ok(path.point_at_index(delta_idx).map(<[f64]>::to_vec))
        })
        .collect::<Result<Vec<Option<_>>>>()?
        .into_iter()
        .flatten()
        .collect();

    let mut raw: Vec<RawTest> = Vec::new();
    for c in 0..d {
        let incr: Vec<f64> = post.iter().map(|(_, i)| i[c]).collect();
        let ref_incr: Vec<f64> = fresh.iter().map(|v| v[c]).collect();
        let (stat, p) = ks_two_sample(&incr, &ref_incr)?;
        raw.push(RawTest::new(
            format!("post-T increment ks coord {}", c + 1),
            stat,
            p,
        ));
    }
    let pre: Vec<f64> = post.iter().map(|(x, _)| x[0]).collect();
    let incr0: Vec<f64> = post.iter().map(|(_, i)| i[0]).collect();
    let (stat, p) = independence_from_quantile_bins(&pre, &incr0, 4)?;
    raw.push(RawTest::new("pre/post independence chi2", stat, p));

    TestReport::from_raw(alpha, raw)
}

/// Quantile-bin two variables jointly and run the independence chi-square.
fn independence_from_quantile_bins(a: &[f64], b: &[f64], bins: usize) -> Result<(f64, f64)> {
    let edges_a = quantile_edges(a, bins);
    let edges_b = quantile_edges(b, bins);
    let mut table = vec![vec![0.0f64; bins]; bins];
    for (&x, &y) in a.iter().zip(b) {
        table[bin_of(x, &edges_a)][bin_of(y, &edges_b)] += 1.0;
    }
    crate::stats::chi_square_independence(&table)
}

fn quantile_edges(xs: &[f64], bins: usize) -> Vec<f64> {
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    (1..bins)
        .map(|k| sorted[k * sorted.len() / bins])
        .collect()
}

fn bin_of(x: f64, edges: &[f64]) -> usize {
    edges.iter().take_while(|&&e| x >= e).count()
}
