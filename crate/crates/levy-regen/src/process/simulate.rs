use rand::Rng;
use rand_distr::{Distribution, Exp, Poisson, StandardNormal};

use crate::grid::Grid;
use crate::process::{JumpEvent, LevyModel, SamplePath};
use crate::seed;
use crate::Result;

/// Simulate one path of the model on the grid `0, step, ..., horizon`,
/// exactly in distribution at the nodes.
///
/// The construction is: an independent `Exp(kill_rate)` killing time rounded
/// up to the next grid node (infinite when the rate is 0); a compound
/// Poisson stream of exact jump times on `(0, horizon]` with atom sizes
/// drawn proportionally to their masses; and Gaussian node increments with
/// mean `pathwise_drift * step` and covariance `sigma * step`. Jumps at or
/// after the killing time are discarded. Identical inputs give a
/// bit-identical path.
pub fn simulate(model: &LevyModel, horizon: f64, step: f64, seed_value: u64) -> Result<SamplePath> {
    model.validate()?;
    let grid = Grid::new(step, horizon)?;
    let d = model.d;
    let n = grid.n_nodes();
    let mut rng = seed::rng_from(seed_value);

    // killing time first so the draw count downstream is well-defined
    let lifetime = if model.kill_rate > 0.0 {
        let e: f64 = Exp::new(model.kill_rate)
            .expect("validated positive rate")
            .sample(&mut rng);
        grid.ceil_time(e)
    } else {
        f64::INFINITY
    };

    let jump_events = sample_jumps(model, &grid, lifetime, &mut rng);

    let mut values = vec![0.0; (n + 1) * d];
    let drift = model.pathwise_drift();
    let drift_step: Vec<f64> = drift.iter().map(|g| g * step).collect();
    let has_drift = drift_step.iter().any(|&g| g != 0.0);
    let factor = model.sigma_factor()?;
    let sqrt_step = step.sqrt();

    let mut cur = vec![0.0f64; d];
    let mut z = vec![0.0f64; d];
    let mut ev_idx = 0usize;
    for k in 1..=n {
        let t = grid.time(k);
        if t >= lifetime {
            break;
        }
        if has_drift {
            for (c, g) in cur.iter_mut().zip(&drift_step) {
                *c += g;
            }
        }
        if let Some(a) = factor.as_deref() {
            for slot in z.iter_mut() {
                *slot = rng.sample::<f64, _>(StandardNormal);
            }
            for i in 0..d {
                let mut acc = 0.0;
                for (j, zj) in z.iter().enumerate() {
                    acc += a[i * d + j] * zj;
                }
                cur[i] += sqrt_step * acc;
            }
        }
        while ev_idx < jump_events.len() && jump_events[ev_idx].time <= t {
            for (c, s) in cur.iter_mut().zip(&jump_events[ev_idx].size) {
                *c += s;
            }
            ev_idx += 1;
        }
        values[k * d..(k + 1) * d].copy_from_slice(&cur);
    }

    SamplePath::from_parts(grid, d, values, jump_events, lifetime)
}

/// Exact compound Poisson jump stream on `(0, horizon]`, truncated at the
/// lifetime. Simultaneous draws (a measure-zero event) merge into one jump.
fn sample_jumps(
    model: &LevyModel,
    grid: &Grid,
    lifetime: f64,
    rng: &mut impl Rng,
) -> Vec<JumpEvent> {
    let lambda = model.jumps.total_mass();
    if lambda <= 0.0 {
        return Vec::new();
    }
    let horizon = grid.horizon();
    let count = Poisson::new(lambda * horizon)
        .expect("positive intensity")
        .sample(rng) as usize;
    let mut times: Vec<f64> = (0..count)
        .map(|_| horizon * (1.0 - rng.random::<f64>()))
        .collect();
    let atoms = model.jumps.atoms();
    let sizes: Vec<&[f64]> = (0..count)
        .map(|_| {
            let mut u = rng.random::<f64>() * lambda;
            let mut chosen = atoms.len() - 1;
            for (i, atom) in atoms.iter().enumerate() {
                if u < atom.mass {
                    chosen = i;
                    break;
                }
                u -= atom.mass;
            }
            atoms[chosen].x.as_slice()
        })
        .collect();
    let mut order: Vec<usize> = (0..count).collect();
    order.sort_by(|&i, &j| times[i].total_cmp(&times[j]));
    times.sort_by(f64::total_cmp);

    let mut events: Vec<JumpEvent> = Vec::with_capacity(count);
    for (&t, &i) in times.iter().zip(&order) {
        if t >= lifetime {
            break;
        }
        match events.last_mut() {
            Some(last) if last.time == t => {
                for (a, b) in last.size.iter_mut().zip(sizes[i]) {
                    *a += b;
                }
            }
            _ => events.push(JumpEvent {
                time: t,
                size: sizes[i].to_vec(),
            }),
        }
    }
    events
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::process::{AtomicJumpMeasure, PathValue};

    const H: f64 = 0.00390625; // 2^-8

    #[test]
    fn zero_model_gives_the_zero_path() {
        let path = simulate(&LevyModel::zero(1), 4.0, H, 42).unwrap();
        assert_eq!(path.lifetime(), f64::INFINITY);
        assert!(path.jump_events().is_empty());
        for k in 0..=path.n_nodes() {
            assert_eq!(path.value_at_index(k), PathValue::Point(vec![0.0]));
        }
    }

    #[test]
    fn identical_inputs_give_bit_identical_paths() {
        let model = LevyModel::brownian1(0.3, 1.0)
            .with_jumps(
                AtomicJumpMeasure::new(vec![
                    crate::process::JumpAtom {
                        x: vec![1.0],
                        mass: 1.0,
                    },
                    crate::process::JumpAtom {
                        x: vec![-1.0],
                        mass: 1.0,
                    },
                ])
                .unwrap(),
            )
            .unwrap()
            .with_kill_rate(0.7);
        let a = simulate(&model, 2.0, H, 7).unwrap();
        let b = simulate(&model, 2.0, H, 7).unwrap();
        assert_eq!(a, b);
        let c = simulate(&model, 2.0, H, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn invalid_inputs_error() {
        let model = LevyModel::zero(1);
        assert!(simulate(&model, 0.0, H, 1).is_err());
        assert!(simulate(&model, 4.0, -0.1, 1).is_err());
        assert!(simulate(&model, 4.1, 0.25, 1).is_err());
        let mut bad = LevyModel::zero(1);
        bad.kill_rate = -1.0;
        assert!(simulate(&bad, 4.0, H, 1).is_err());
    }

    #[test]
    fn jumps_are_reflected_at_the_next_node() {
        let model =
            LevyModel::compound_poisson(AtomicJumpMeasure::atom1(1.0, 0.5).unwrap()).unwrap();
        let path = simulate(&model, 8.0, 0.25, 3).unwrap();
        let mut running = 0.0;
        let mut ev = path.jump_events().iter().peekable();
        for k in 0..=path.n_nodes() {
            let t = path.grid().time(k);
            while let Some(e) = ev.peek() {
                if e.time <= t {
                    running += e.size[0];
                    ev.next();
                } else {
                    break;
                }
            }
            assert_eq!(path.point_at_index(k).unwrap()[0], running, "node {k}");
        }
    }

    #[test]
    fn absorption_holds_on_killed_paths() {
        let model = LevyModel::brownian1(0.0, 1.0).with_kill_rate(2.0);
        for s in 0..200u64 {
            let path = simulate(&model, 2.0, 0.125, 1000 + s).unwrap();
            for k in 0..=path.n_nodes() {
                let alive = path.grid().time(k) < path.lifetime();
                assert_eq!(path.point_at_index(k).is_some(), alive);
            }
            for ev in path.jump_events() {
                assert!(ev.time < path.lifetime());
            }
        }
    }
}
