//! Law-level algebra for reconciling two models that agree before their
//! stopping times: common jump component, compensation shift, convolution,
//! killing, and the "differ only modulo compound Poisson and killing"
//! verdict with exact reassembly.
//!
//! Atom locations compare bitwise (they are user-specified inputs, not
//! computed values); masses and drifts are reals compared at `1e-9`.

use std::collections::HashSet;

use serde::Serialize;

use crate::process::{AtomicJumpMeasure, JumpAtom, LevyModel, SamplePath};
use crate::{Error, Result};

/// Tolerance on derived reals in verdicts and reassembly checks.
pub const RECONCILE_TOL: f64 = 1e-9;

/// Greatest measure dominated by both inputs (atomwise minimum of masses at
/// bitwise-shared locations) together with the two residuals
/// `nu_i - common`. The smaller side of a shared atom drops out of its
/// residual exactly.
pub fn common_component(
    nu1: &AtomicJumpMeasure,
    nu2: &AtomicJumpMeasure,
) -> (AtomicJumpMeasure, AtomicJumpMeasure, AtomicJumpMeasure) {
    let mut common: Vec<JumpAtom> = Vec::new();
    let mut res1: Vec<JumpAtom> = Vec::new();
    let mut res2: Vec<JumpAtom> = Vec::new();
    for atom in nu1.atoms() {
        let other = nu2.mass_at(&atom.x);
        if other > 0.0 {
            let shared = atom.mass.min(other);
            common.push(JumpAtom {
                x: atom.x.clone(),
                mass: shared,
            });
            if atom.mass > shared {
                res1.push(JumpAtom {
                    x: atom.x.clone(),
                    mass: atom.mass - shared,
                });
            }
        } else {
            res1.push(atom.clone());
        }
    }
    for atom in nu2.atoms() {
        let other = nu1.mass_at(&atom.x);
        if other > 0.0 {
            let shared = atom.mass.min(other);
            if atom.mass > shared {
                res2.push(JumpAtom {
                    x: atom.x.clone(),
                    mass: atom.mass - shared,
                });
            }
        } else {
            res2.push(atom.clone());
        }
    }
    let build = |atoms: Vec<JumpAtom>| {
        AtomicJumpMeasure::new(atoms).expect("residual atoms inherit validity")
    };
    (build(common), build(res1), build(res2))
}

/// The compensation shift `L = ∫_{|x|<=1} x nu1(dx) - ∫_{|x|<=1} x nu2(dx)`
/// (closed unit ball; the finite-activity closed form of the paper's
/// vanishing-epsilon limit).
pub fn compensation_shift(nu1: &AtomicJumpMeasure, nu2: &AtomicJumpMeasure, d: usize) -> Vec<f64> {
    let m1 = nu1.unit_ball_moment(d);
    let m2 = nu2.unit_ball_moment(d);
    m1.iter().zip(&m2).map(|(a, b)| a - b).collect()
}

/// Convolution of two unkilled Lévy laws: componentwise sum of drifts and
/// covariances, atom-union of jump measures. Killed inputs are rejected.
pub fn convolve_laws(a: &LevyModel, b: &LevyModel) -> Result<LevyModel> {
    a.validate()?;
    b.validate()?;
    if a.d != b.d {
        return Err(Error::DimensionMismatch(format!(
            "convolution of laws in dimensions {} and {}",
            a.d, b.d
        )));
    }
    if a.kill_rate != 0.0 {
        return Err(Error::KilledInput(a.kill_rate));
    }
    if b.kill_rate != 0.0 {
        return Err(Error::KilledInput(b.kill_rate));
    }
    let gamma = a.gamma.iter().zip(&b.gamma).map(|(x, y)| x + y).collect();
    let sigma = a
        .sigma
        .iter()
        .zip(&b.sigma)
        .map(|(ra, rb)| ra.iter().zip(rb).map(|(x, y)| x + y).collect())
        .collect();
    let mut atoms = a.jumps.atoms().to_vec();
    atoms.extend(b.jumps.atoms().iter().cloned());
    Ok(LevyModel {
        d: a.d,
        gamma,
        sigma,
        jumps: AtomicJumpMeasure::new(atoms)?,
        kill_rate: 0.0,
    })
}

/// The killing operator: attach an independent exponential killing at rate
/// `q` to an unkilled law.
pub fn add_killing(a: &LevyModel, q: f64) -> Result<LevyModel> {
    a.validate()?;
    if a.kill_rate != 0.0 {
        return Err(Error::KilledInput(a.kill_rate));
    }
    if !(q >= 0.0) || !q.is_finite() {
        return Err(Error::InvalidModel(format!(
            "killing rate must be a finite nonnegative real, got {q}"
        )));
    }
    let mut killed = a.clone();
    killed.kill_rate = q;
    Ok(killed)
}

/// The law of a compound Poisson residual: the pure-jump process of the
/// measure, or the zero process when the measure is empty.
pub fn residual_law(measure: &AtomicJumpMeasure, d: usize) -> Result<LevyModel> {
    if measure.is_empty() {
        return Ok(LevyModel::zero(d));
    }
    measure.check_dim(d)?;
    LevyModel::compound_poisson(measure.clone())
}

/// Outcome of [`reconcile`]: whether the two models differ only by compound
/// Poisson components and killing, and the witnessing decomposition.
#[derive(Debug, Clone, Serialize)]
pub struct ReconciliationReport {
    pub equivalent_mod_cp_kill: bool,
    /// The shared unkilled law (meaningful when the verdict holds; computed
    /// from side `a` either way for diagnostics).
    pub common_law: LevyModel,
    pub residual_a: AtomicJumpMeasure,
    pub residual_b: AtomicJumpMeasure,
    pub kill_a: f64,
    pub kill_b: f64,
    /// Largest entrywise covariance difference.
    pub gaussian_mismatch: f64,
    /// Largest coordinate difference of the compensated drifts
    /// `gamma - ∫_{|x|<=1} x nu(dx)`.
    pub drift_mismatch: f64,
}

impl ReconciliationReport {
    fn reassemble(&self, residual: &AtomicJumpMeasure, kill: f64) -> Result<LevyModel> {
        let cp = residual_law(residual, self.common_law.d)?;
        add_killing(&convolve_laws(&self.common_law, &cp)?, kill)
    }

    /// `k_{q_a}(common ⋆ residual_a)`.
    pub fn reassemble_a(&self) -> Result<LevyModel> {
        self.reassemble(&self.residual_a.clone(), self.kill_a)
    }

    /// `k_{q_b}(common ⋆ residual_b)`.
    pub fn reassemble_b(&self) -> Result<LevyModel> {
        self.reassemble(&self.residual_b.clone(), self.kill_b)
    }
}

/// Decide whether two models differ only modulo compound Poisson components
/// and killing, and produce the decomposition.
///
/// The verdict holds exactly when the covariances agree and the compensated
/// drifts `gamma - ∫_{|x|<=1} x nu(dx)` agree (within `1e-9`): those are the
/// continuous parts after the compensation shift, and the remaining jump
/// difference splits into the two compound Poisson residuals.
pub fn reconcile(a: &LevyModel, b: &LevyModel) -> Result<ReconciliationReport> {
    a.validate()?;
    b.validate()?;
    if a.d != b.d {
        return Err(Error::DimensionMismatch(format!(
            "reconcile of models in dimensions {} and {}",
            a.d, b.d
        )));
    }
    let d = a.d;
    let (common, res_a, res_b) = common_component(&a.jumps, &b.jumps);
    let gaussian_mismatch = a
        .sigma
        .iter()
        .flatten()
        .zip(b.sigma.iter().flatten())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0f64, f64::max);
    let comp_a = a.pathwise_drift();
    let comp_b = b.pathwise_drift();
    let drift_mismatch = comp_a
        .iter()
        .zip(&comp_b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0f64, f64::max);
    let equivalent = gaussian_mismatch <= RECONCILE_TOL && drift_mismatch <= RECONCILE_TOL;

    let res_a_moment = res_a.unit_ball_moment(d);
    let common_law = LevyModel {
        d,
        gamma: a
            .gamma
            .iter()
            .zip(&res_a_moment)
            .map(|(g, m)| g - m)
            .collect(),
        sigma: a.sigma.clone(),
        jumps: common,
        kill_rate: 0.0,
    };
    Ok(ReconciliationReport {
        equivalent_mod_cp_kill: equivalent,
        common_law,
        residual_a: res_a,
        residual_b: res_b,
        kill_a: a.kill_rate,
        kill_b: b.kill_rate,
        gaussian_mismatch,
        drift_mismatch,
    })
}

/// Per-path jump counts and their dispersion summary.
#[derive(Debug, Clone, Serialize)]
pub struct JumpCountSummary {
    pub counts: Vec<u64>,
    pub mean: f64,
    pub variance: f64,
    /// Variance over mean; 0 for a constant sample.
    pub dispersion: f64,
}

/// Count, per path, the jump events with time in `(interval.0, interval.1]`
/// and size bitwise in `atom_subset`.
pub fn jump_count_statistics(
    paths: &[SamplePath],
    atom_subset: &[Vec<f64>],
    interval: (f64, f64),
) -> Result<JumpCountSummary> {
    let Some(first) = paths.first() else {
        return Err(Error::EmptyInput("path collection".into()));
    };
    if paths.iter().any(|p| p.grid() != first.grid() || p.d() != first.d()) {
        return Err(Error::GridMismatch);
    }
    let (t0, t1) = interval;
    if !(0.0 <= t0 && t0 < t1 && t1 <= first.horizon()) {
        return Err(Error::InvalidStatInput(format!(
            "interval ({t0}, {t1}] must sit inside [0, {}]",
            first.horizon()
        )));
    }
    let keys: HashSet<Vec<u64>> = atom_subset
        .iter()
        .map(|loc| {
            loc.iter()
                .map(|&c| (if c == 0.0 { 0.0f64 } else { c }).to_bits())
                .collect()
        })
        .collect();
    let in_subset = |size: &[f64]| {
        let key: Vec<u64> = size
            .iter()
            .map(|&c| (if c == 0.0 { 0.0f64 } else { c }).to_bits())
            .collect();
        keys.contains(&key)
    };
    let counts: Vec<u64> = paths
        .iter()
        .map(|p| {
            p.jump_events()
                .iter()
                .filter(|ev| ev.time > t0 && ev.time <= t1 && in_subset(&ev.size))
                .count() as u64
        })
        .collect();
    let n = counts.len() as f64;
    let mean = counts.iter().map(|&c| c as f64).sum::<f64>() / n;
    let variance = if counts.len() > 1 {
        counts
            .iter()
            .map(|&c| {
                let d = c as f64 - mean;
                d * d
            })
            .sum::<f64>()
            / (n - 1.0)
    } else {
        0.0
    };
    let dispersion = if variance == 0.0 { 0.0 } else { variance / mean };
    Ok(JumpCountSummary {
        counts,
        mean,
        variance,
        dispersion,
    })
}
