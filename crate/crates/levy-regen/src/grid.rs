//! Time grid arithmetic.
//!
//! All paths live on the grid `0, h, 2h, ..., n*h`. Bookkeeping is done on
//! node indices so that partial sums of grid times are exact; conversions from
//! real times snap to a node when within a relative tolerance of `1e-9`.

use crate::{Error, Result};

/// Relative snap tolerance for real-time to node conversions.
const SNAP: f64 = 1e-9;

/// A uniform time grid `0, h, ..., n*h`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    step: f64,
    n_nodes: usize,
}

impl Grid {
    /// Grid with spacing `step` covering `[0, horizon]`; `horizon` must be a
    /// positive multiple of `step`.
    pub fn new(step: f64, horizon: f64) -> Result<Self> {
        if !(step > 0.0) || !step.is_finite() {
            return Err(Error::InvalidGrid(format!("step must be positive, got {step}")));
        }
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::InvalidGrid(format!(
                "horizon must be positive, got {horizon}"
            )));
        }
        let ratio = horizon / step;
        let n = ratio.round();
        if (ratio - n).abs() > SNAP * ratio.max(1.0) || n < 1.0 {
            return Err(Error::InvalidGrid(format!(
                "horizon {horizon} is not a positive multiple of step {step}"
            )));
        }
        Ok(Self {
            step,
            n_nodes: n as usize,
        })
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    /// Number of steps; the grid has `n_nodes + 1` nodes including time 0.
    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn horizon(&self) -> f64 {
        self.n_nodes as f64 * self.step
    }

    pub fn time(&self, index: usize) -> f64 {
        index as f64 * self.step
    }

    /// Node index of a grid-aligned time within the horizon.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let idx = self.aligned_index(t)?;
        if idx > self.n_nodes as u64 {
            return Err(Error::BeyondHorizon {
                time: t,
                horizon: self.horizon(),
            });
        }
        Ok(idx as usize)
    }

    /// Node index of a grid-aligned time, without the horizon bound.
    pub fn aligned_index(&self, t: f64) -> Result<u64> {
        if !t.is_finite() || t < 0.0 {
            return Err(Error::NotGridAligned {
                time: t,
                step: self.step,
            });
        }
        let ratio = t / self.step;
        let k = ratio.round();
        if (ratio - k).abs() > SNAP * ratio.max(1.0) {
            return Err(Error::NotGridAligned {
                time: t,
                step: self.step,
            });
        }
        Ok(k as u64)
    }

    /// Smallest node index `k` with `k*step >= t` (snapping near-node times).
    pub fn ceil_index(&self, t: f64) -> u64 {
        debug_assert!(t >= 0.0);
        let ratio = t / self.step;
        let near = ratio.round();
        if (ratio - near).abs() <= SNAP * ratio.max(1.0) {
            near as u64
        } else {
            ratio.ceil() as u64
        }
    }

    /// Largest node index `k` with `k*step <= t` (snapping near-node times).
    pub fn floor_index(&self, t: f64) -> u64 {
        debug_assert!(t >= 0.0);
        let ratio = t / self.step;
        let near = ratio.round();
        if (ratio - near).abs() <= SNAP * ratio.max(1.0) {
            near as u64
        } else {
            ratio.floor() as u64
        }
    }

    /// `t` rounded up to the grid, as a time. Infinite input stays infinite.
    pub fn ceil_time(&self, t: f64) -> f64 {
        if t.is_infinite() {
            return f64::INFINITY;
        }
        self.ceil_index(t) as f64 * self.step
    }

    /// `t` rounded down to the grid, as a time. Infinite input stays infinite.
    pub fn floor_time(&self, t: f64) -> f64 {
        if t.is_infinite() {
            return f64::INFINITY;
        }
        self.floor_index(t) as f64 * self.step
    }
}
