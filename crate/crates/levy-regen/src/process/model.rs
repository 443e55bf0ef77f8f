use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Symmetry / positive-semidefiniteness tolerance for covariance matrices.
const PSD_TOL: f64 = 1e-12;

/// One atom of a finite jump measure: a nonzero location and a positive
/// mass with units of 1/time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpAtom {
    pub x: Vec<f64>,
    pub mass: f64,
}

/// A finite atomic jump measure. Atoms are kept in a canonical coordinate
/// order and duplicate locations are merged, so measures compare
/// structurally. Locations compare bitwise (negative zero is normalized
/// away on construction).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(transparent)]
pub struct AtomicJumpMeasure {
    atoms: Vec<JumpAtom>,
}

fn canonical_location(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&c| if c == 0.0 { 0.0 } else { c }).collect()
}

fn location_cmp(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Equal => continue,
            other => return other,
        }
    }
    a.len().cmp(&b.len())
}

impl AtomicJumpMeasure {
    /// Build a measure from atoms, merging duplicate locations and sorting
    /// canonically.
    pub fn new(atoms: Vec<JumpAtom>) -> Result<Self> {
        let mut cleaned: Vec<JumpAtom> = Vec::with_capacity(atoms.len());
        for atom in atoms {
            if atom.x.is_empty() {
                return Err(Error::InvalidModel("jump atom with empty location".into()));
            }
            if atom.x.iter().any(|c| !c.is_finite()) {
                return Err(Error::InvalidModel("jump atom location not finite".into()));
            }
            if atom.x.iter().all(|&c| c == 0.0) {
                return Err(Error::InvalidModel("jump atom at the origin".into()));
            }
            if !(atom.mass > 0.0) || !atom.mass.is_finite() {
                return Err(Error::InvalidModel(format!(
                    "jump atom mass must be positive and finite, got {}",
                    atom.mass
                )));
            }
            cleaned.push(JumpAtom {
                x: canonical_location(&atom.x),
                mass: atom.mass,
            });
        }
        cleaned.sort_by(|a, b| location_cmp(&a.x, &b.x));
        let mut merged: Vec<JumpAtom> = Vec::with_capacity(cleaned.len());
        for atom in cleaned {
            match merged.last_mut() {
                Some(last) if last.x == atom.x => last.mass += atom.mass,
                _ => merged.push(atom),
            }
        }
        Ok(Self { atoms: merged })
    }

    pub fn empty() -> Self {
        Self { atoms: Vec::new() }
    }

    /// Single atom at scalar location `x` (dimension 1).
    pub fn atom1(x: f64, mass: f64) -> Result<Self> {
        Self::new(vec![JumpAtom { x: vec![x], mass }])
    }

    pub fn atoms(&self) -> &[JumpAtom] {
        &self.atoms
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    /// Total mass, the compound Poisson intensity.
    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.mass).sum()
    }

    /// Mass at a location, compared bitwise after negative-zero
    /// normalization; 0 when absent.
    pub fn mass_at(&self, location: &[f64]) -> f64 {
        let loc = canonical_location(location);
        self.atoms
            .iter()
            .find(|a| a.x == loc)
            .map_or(0.0, |a| a.mass)
    }

    /// `sum_{|x| <= 1} x * mass(x)` over the closed Euclidean unit ball, the
    /// compensation integral of the measure.
    pub fn unit_ball_moment(&self, d: usize) -> Vec<f64> {
        let mut acc = vec![0.0; d];
        for atom in &self.atoms {
            let norm2: f64 = atom.x.iter().map(|c| c * c).sum();
            if norm2 <= 1.0 {
                for (slot, &c) in acc.iter_mut().zip(&atom.x) {
                    *slot += c * atom.mass;
                }
            }
        }
        acc
    }

    /// Validate dimensions against a model dimension.
    pub fn check_dim(&self, d: usize) -> Result<()> {
        if let Some(bad) = self.atoms.iter().find(|a| a.x.len() != d) {
            return Err(Error::DimensionMismatch(format!(
                "jump atom of dimension {} in a model of dimension {d}",
                bad.x.len()
            )));
        }
        Ok(())
    }

    /// Atom masses equal within `tol`, locations exactly equal.
    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        self.atoms.len() == other.atoms.len()
            && self
                .atoms
                .iter()
                .zip(&other.atoms)
                .all(|(a, b)| a.x == b.x && (a.mass - b.mass).abs() <= tol)
    }
}

/// Characteristic data of a possibly-killed finite-activity Lévy process:
/// dimension, Lévy–Itô drift, Gaussian covariance, finite jump measure and
/// killing rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevyModel {
    pub d: usize,
    pub gamma: Vec<f64>,
    pub sigma: Vec<Vec<f64>>,
    pub jumps: AtomicJumpMeasure,
    pub kill_rate: f64,
}

impl LevyModel {
    /// The constant-zero process in dimension `d`.
    pub fn zero(d: usize) -> Self {
        Self {
            d,
            gamma: vec![0.0; d],
            sigma: vec![vec![0.0; d]; d],
            jumps: AtomicJumpMeasure::empty(),
            kill_rate: 0.0,
        }
    }

    /// One-dimensional Brownian motion with pathwise drift `drift` and
    /// variance rate `variance`.
    pub fn brownian1(drift: f64, variance: f64) -> Self {
        Self {
            d: 1,
            gamma: vec![drift],
            sigma: vec![vec![variance]],
            jumps: AtomicJumpMeasure::empty(),
            kill_rate: 0.0,
        }
    }

    /// The compound Poisson process of `measure`: pure jumps, no continuous
    /// motion. The drift field absorbs the unit-ball compensation so the
    /// path is exactly the sum of its jumps.
    pub fn compound_poisson(measure: AtomicJumpMeasure) -> Result<Self> {
        let d = measure
            .atoms()
            .first()
            .map(|a| a.x.len())
            .ok_or_else(|| Error::InvalidModel("compound Poisson of an empty measure needs a dimension; use LevyModel::zero".into()))?;
        measure.check_dim(d)?;
        let gamma = measure.unit_ball_moment(d);
        Ok(Self {
            d,
            gamma,
            sigma: vec![vec![0.0; d]; d],
            jumps: measure,
            kill_rate: 0.0,
        })
    }

    /// The standard Poisson counting process with the given rate (unit
    /// jumps in dimension 1).
    pub fn poisson(rate: f64) -> Result<Self> {
        Self::compound_poisson(AtomicJumpMeasure::atom1(1.0, rate)?)
    }

    /// Same model with the jump measure replaced.
    pub fn with_jumps(mut self, jumps: AtomicJumpMeasure) -> Result<Self> {
        jumps.check_dim(self.d)?;
        self.jumps = jumps;
        Ok(self)
    }

    /// Same model with the killing rate set directly (constructor-level
    /// convenience; the law operator lives in [`crate::decompose::add_killing`]).
    pub fn with_kill_rate(mut self, q: f64) -> Self {
        self.kill_rate = q;
        self
    }

    /// Drift of the continuous part: `gamma - ∫_{|x|<=1} x nu(dx)`.
    pub fn pathwise_drift(&self) -> Vec<f64> {
        let moment = self.jumps.unit_ball_moment(self.d);
        self.gamma
            .iter()
            .zip(&moment)
            .map(|(g, m)| g - m)
            .collect()
    }

    pub fn is_killed(&self) -> bool {
        self.kill_rate > 0.0
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::InvalidModel("dimension must be at least 1".into()));
        }
        if self.gamma.len() != self.d {
            return Err(Error::InvalidModel(format!(
                "gamma has length {}, expected {}",
                self.gamma.len(),
                self.d
            )));
        }
        if self.gamma.iter().any(|g| !g.is_finite()) {
            return Err(Error::InvalidModel("gamma not finite".into()));
        }
        if self.sigma.len() != self.d || self.sigma.iter().any(|row| row.len() != self.d) {
            return Err(Error::InvalidModel(format!(
                "sigma must be {0}x{0}",
                self.d
            )));
        }
        for i in 0..self.d {
            for j in 0..self.d {
                if !self.sigma[i][j].is_finite() {
                    return Err(Error::InvalidModel("sigma not finite".into()));
                }
                if (self.sigma[i][j] - self.sigma[j][i]).abs() > PSD_TOL {
                    return Err(Error::InvalidModel(format!(
                        "sigma not symmetric at ({i},{j})"
                    )));
                }
            }
        }
        if self.d > 0 {
            let m = DMatrix::from_fn(self.d, self.d, |i, j| {
                0.5 * (self.sigma[i][j] + self.sigma[j][i])
            });
            let eigen = m.symmetric_eigenvalues();
            if eigen.iter().any(|&l| l < -PSD_TOL) {
                return Err(Error::InvalidModel(
                    "sigma is not positive semidefinite".into(),
                ));
            }
        }
        if !(self.kill_rate >= 0.0) || !self.kill_rate.is_finite() {
            return Err(Error::InvalidModel(format!(
                "kill rate must be a finite nonnegative real, got {}",
                self.kill_rate
            )));
        }
        self.jumps.check_dim(self.d)?;
        Ok(())
    }

    /// A factor `A` with `A Aᵀ = sigma`, row-major; `None` when sigma is
    /// the zero matrix. Tiny negative eigenvalues within tolerance are
    /// clipped to zero.
    pub fn sigma_factor(&self) -> Result<Option<Vec<f64>>> {
        if self
            .sigma
            .iter()
            .all(|row| row.iter().all(|&v| v == 0.0))
        {
            return Ok(None);
        }
        let m = DMatrix::from_fn(self.d, self.d, |i, j| {
            0.5 * (self.sigma[i][j] + self.sigma[j][i])
        });
        let eigen = m.symmetric_eigen();
        if eigen.eigenvalues.iter().any(|&l| l < -PSD_TOL) {
            return Err(Error::InvalidModel(
                "sigma is not positive semidefinite".into(),
            ));
        }
        let d = self.d;
        let mut factor = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                factor[i * d + j] =
                    eigen.eigenvectors[(i, j)] * eigen.eigenvalues[j].max(0.0).sqrt();
            }
        }
        Ok(Some(factor))
    }

    /// Componentwise closeness: reals within `tol`, atom locations exact.
    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        self.d == other.d
            && self
                .gamma
                .iter()
                .zip(&other.gamma)
                .all(|(a, b)| (a - b).abs() <= tol)
            && self
                .sigma
                .iter()
                .flatten()
                .zip(other.sigma.iter().flatten())
                .all(|(a, b)| (a - b).abs() <= tol)
            && (self.kill_rate - other.kill_rate).abs() <= tol
            && self.jumps.approx_eq(&other.jumps, tol)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn measure_merges_and_sorts_atoms() {
        let m = AtomicJumpMeasure::new(vec![
            JumpAtom {
                x: vec![1.0],
                mass: 0.5,
            },
            JumpAtom {
                x: vec![-1.0],
                mass: 1.0,
            },
            JumpAtom {
                x: vec![1.0],
                mass: 0.5,
            },
        ])
        .unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m.mass_at(&[1.0]), 1.0);
        assert_eq!(m.mass_at(&[-1.0]), 1.0);
        assert_eq!(m.total_mass(), 2.0);
        assert_eq!(m.mass_at(&[2.0]), 0.0);
    }

    #[test]
    fn measure_rejects_bad_atoms() {
        assert!(AtomicJumpMeasure::atom1(0.0, 1.0).is_err());
        assert!(AtomicJumpMeasure::atom1(1.0, 0.0).is_err());
        assert!(AtomicJumpMeasure::atom1(1.0, -2.0).is_err());
        assert!(AtomicJumpMeasure::atom1(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn unit_ball_moment_truncates_at_the_closed_ball() {
        let m = AtomicJumpMeasure::new(vec![
            JumpAtom {
                x: vec![0.5],
                mass: 2.0,
            },
            JumpAtom {
                x: vec![1.0],
                mass: 3.0,
            },
            JumpAtom {
                x: vec![2.0],
                mass: 5.0,
            },
        ])
        .unwrap();
        // 0.5*2 + 1.0*3, the |x| = 2 atom excluded, |x| = 1 included
        assert_eq!(m.unit_ball_moment(1), vec![4.0]);
    }

    #[test]
    fn model_validation_catches_shape_and_psd_errors() {
        let mut m = LevyModel::brownian1(0.3, 1.0);
        m.validate().unwrap();
        m.sigma = vec![vec![-1.0]];
        assert!(m.validate().is_err());
        let mut asym = LevyModel::zero(2);
        asym.sigma = vec![vec![1.0, 0.5], vec![-0.5, 1.0]];
        assert!(asym.validate().is_err());
        let mut bad_kill = LevyModel::zero(1);
        bad_kill.kill_rate = -0.1;
        assert!(bad_kill.validate().is_err());
    }

    #[test]
    fn compound_poisson_compensates_the_drift() {
        let m = LevyModel::poisson(1.0).unwrap();
        assert_eq!(m.gamma, vec![1.0]);
        assert_eq!(m.pathwise_drift(), vec![0.0]);
        let big = LevyModel::compound_poisson(AtomicJumpMeasure::atom1(2.0, 5.0).unwrap())
            .unwrap();
        // atom outside the unit ball gets no compensation
        assert_eq!(big.gamma, vec![0.0]);
        assert_eq!(big.pathwise_drift(), vec![0.0]);
    }

    #[test]
    fn sigma_factor_reproduces_sigma() {
        let model = LevyModel {
            d: 2,
            gamma: vec![0.0, 0.0],
            sigma: vec![vec![2.0, 0.6], vec![0.6, 1.0]],
            jumps: AtomicJumpMeasure::empty(),
            kill_rate: 0.0,
        };
        let a = model.sigma_factor().unwrap().unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let mut s = 0.0;
                for k in 0..2 {
                    s += a[i * 2 + k] * a[j * 2 + k];
                }
                assert!((s - model.sigma[i][j]).abs() < 1e-12);
            }
        }
        assert!(LevyModel::zero(3).sigma_factor().unwrap().is_none());
    }

    #[test]
    fn model_json_round_trip_matches_schema() {
        let json = r#"{
            "d": 1,
            "gamma": [0.3],
            "sigma": [[1.0]],
            "jumps": [{"x": [1.0], "mass": 1.0}, {"x": [-1.0], "mass": 1.0}],
            "kill_rate": 0.7
        }"#;
        let model: LevyModel = serde_json::from_str(json).unwrap();
        model.validate().unwrap();
        assert_eq!(model.jumps.total_mass(), 2.0);
        let back = serde_json::to_string(&model).unwrap();
        let again: LevyModel = serde_json::from_str(&back).unwrap();
        assert_eq!(model, again);
    }
}
