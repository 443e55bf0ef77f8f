use std::io::Write;

use crate::grid::Grid;
use crate::{Error, Result};

/// State of a path at one grid node: a point of R^d, the cemetery state
/// after killing, or the unobserved state outside an observation window.
#[derive(Debug, Clone, PartialEq)]
pub enum PathValue {
    Point(Vec<f64>),
    Cemetery,
    Unobserved,
}

impl PathValue {
    /// Increment addition; the cemetery and unobserved states absorb.
    pub fn plus(&self, delta: &[f64]) -> PathValue {
        match self {
            PathValue::Point(x) => {
                PathValue::Point(x.iter().zip(delta).map(|(a, b)| a + b).collect())
            }
            PathValue::Cemetery => PathValue::Cemetery,
            PathValue::Unobserved => PathValue::Unobserved,
        }
    }

    pub fn as_point(&self) -> Option<&[f64]> {
        match self {
            PathValue::Point(x) => Some(x),
            _ => None,
        }
    }

    pub fn is_cemetery(&self) -> bool {
        matches!(self, PathValue::Cemetery)
    }

    pub fn state_label(&self) -> &'static str {
        match self {
            PathValue::Point(_) => "POINT",
            PathValue::Cemetery => "CEMETERY",
            PathValue::Unobserved => "UNOBSERVED",
        }
    }
}

/// One jump of the path: an exact event time in `(0, horizon]` and the jump
/// size vector.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpEvent {
    pub time: f64,
    pub size: Vec<f64>,
}

/// One realization of a possibly-killed Lévy process on a grid.
///
/// Node values are stored densely; nodes at or beyond the lifetime read as
/// [`PathValue::Cemetery`] (their stored coordinates are zeroed so equal
/// inputs give bit-identical paths). Jump times are exact reals; every jump
/// happens strictly before the lifetime.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePath {
    grid: Grid,
    d: usize,
    values: Vec<f64>,
    jump_events: Vec<JumpEvent>,
    lifetime: f64,
}

impl SamplePath {
    /// Assemble a path from raw parts, checking the representation
    /// invariants (value shape, start at zero, event ordering, events
    /// before the lifetime, grid-aligned lifetime).
    pub fn from_parts(
        grid: Grid,
        d: usize,
        values: Vec<f64>,
        jump_events: Vec<JumpEvent>,
        lifetime: f64,
    ) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidPath("dimension must be at least 1".into()));
        }
        let expect = (grid.n_nodes() + 1) * d;
        if values.len() != expect {
            return Err(Error::InvalidPath(format!(
                "values length {} does not match {} nodes x dimension {d}",
                values.len(),
                grid.n_nodes() + 1
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidPath("non-finite node value".into()));
        }
        if lifetime.is_nan() || lifetime < 0.0 {
            return Err(Error::InvalidPath(format!("invalid lifetime {lifetime}")));
        }
        if lifetime.is_finite() {
            grid.aligned_index(lifetime)?;
        }
        if lifetime > 0.0 && values[..d].iter().any(|&v| v != 0.0) {
            return Err(Error::InvalidPath("path does not start at zero".into()));
        }
        let mut prev = 0.0;
        for ev in &jump_events {
            if !(ev.time > prev) {
                return Err(Error::InvalidPath(
                    "jump event times must be strictly increasing and positive".into(),
                ));
            }
            if ev.time > grid.horizon() {
                return Err(Error::InvalidPath("jump event beyond the horizon".into()));
            }
            if ev.time >= lifetime {
                return Err(Error::InvalidPath(
                    "jump event at or after the lifetime".into(),
                ));
            }
            if ev.size.len() != d {
                return Err(Error::InvalidPath("jump size of wrong dimension".into()));
            }
            prev = ev.time;
        }
        let mut path = Self {
            grid,
            d,
            values,
            jump_events,
            lifetime,
        };
        path.zero_dead_nodes();
        Ok(path)
    }

    fn zero_dead_nodes(&mut self) {
        let n = self.grid.n_nodes();
        for k in 0..=n {
            if self.grid.time(k) >= self.lifetime {
                let row = k * self.d;
                self.values[row..row + self.d].fill(0.0);
            }
        }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn step(&self) -> f64 {
        self.grid.step()
    }

    pub fn horizon(&self) -> f64 {
        self.grid.horizon()
    }

    pub fn n_nodes(&self) -> usize {
        self.grid.n_nodes()
    }

    /// Lifetime as a grid node (possibly beyond the horizon) or infinity.
    pub fn lifetime(&self) -> f64 {
        self.lifetime
    }

    pub fn jump_events(&self) -> &[JumpEvent] {
        &self.jump_events
    }

    pub fn is_alive_at_index(&self, index: usize) -> bool {
        self.grid.time(index) < self.lifetime
    }

    /// Coordinates at a node, `None` once the path is in the cemetery.
    pub fn point_at_index(&self, index: usize) -> Option<&[f64]> {
        if self.is_alive_at_index(index) {
            let row = index * self.d;
            Some(&self.values[row..row + self.d])
        } else {
            None
        }
    }

    pub fn value_at_index(&self, index: usize) -> PathValue {
        match self.point_at_index(index) {
            Some(x) => PathValue::Point(x.to_vec()),
            None => PathValue::Cemetery,
        }
    }

    /// Marginal of the path at a grid node within the horizon.
    pub fn marginal_at(&self, t: f64) -> Result<PathValue> {
        let idx = self.grid.index_of(t)?;
        Ok(self.value_at_index(idx))
    }

    /// Restrict to the observation window `[0, t]` (closed) or `[0, t)`
    /// (open); values outside the window become unobserved and jump events
    /// outside it are dropped (an event exactly at `t` survives only in the
    /// closed window).
    pub fn restrict(&self, t: f64, closed: bool) -> Result<Observation> {
        let window_end = self.grid.index_of(t)?;
        let events: Vec<JumpEvent> = self
            .jump_events
            .iter()
            .filter(|ev| if closed { ev.time <= t } else { ev.time < t })
            .cloned()
            .collect();
        Ok(Observation {
            grid: self.grid,
            d: self.d,
            window_end,
            closed,
            values: self.values[..(window_end + 1) * self.d].to_vec(),
            jump_events: events,
            lifetime: self.lifetime,
        })
    }

    /// Kill the path at a grid-aligned time: the lifetime becomes the
    /// minimum of the old lifetime and `kill_time` and absorption is
    /// re-established. An infinite `kill_time` leaves the path unchanged.
    pub fn apply_killing(&self, kill_time: f64) -> Result<SamplePath> {
        if kill_time.is_nan() || kill_time < 0.0 {
            return Err(Error::InvalidPath(format!(
                "invalid kill time {kill_time}"
            )));
        }
        if kill_time.is_finite() {
            self.grid.aligned_index(kill_time)?;
        }
        let lifetime = self.lifetime.min(kill_time);
        let mut killed = SamplePath {
            grid: self.grid,
            d: self.d,
            values: self.values.clone(),
            jump_events: self
                .jump_events
                .iter()
                .filter(|ev| ev.time < lifetime)
                .cloned()
                .collect(),
            lifetime,
        };
        killed.zero_dead_nodes();
        Ok(killed)
    }

    /// A path equal to `prefix` on nodes `0..=prefix_end` and following the
    /// increments (and jump events) of `suffix` afterwards. Both paths must
    /// share the grid and be immortal; the splice is the agreeing-prefix
    /// construction used by the adaptedness harness.
    pub fn splice_prefix(
        prefix: &SamplePath,
        suffix: &SamplePath,
        prefix_end: usize,
    ) -> Result<SamplePath> {
        if prefix.grid != suffix.grid || prefix.d != suffix.d {
            return Err(Error::GridMismatch);
        }
        if prefix.lifetime.is_finite() || suffix.lifetime.is_finite() {
            return Err(Error::InvalidPath(
                "splice_prefix is defined for immortal paths".into(),
            ));
        }
        let n = prefix.n_nodes();
        if prefix_end > n {
            return Err(Error::BeyondHorizon {
                time: prefix.grid.time(prefix_end),
                horizon: prefix.horizon(),
            });
        }
        let d = prefix.d;
        let cut = prefix.grid.time(prefix_end);
        let mut values = prefix.values[..(prefix_end + 1) * d].to_vec();
        values.reserve((n - prefix_end) * d);
        let base = &prefix.values[prefix_end * d..(prefix_end + 1) * d];
        let pivot = &suffix.values[prefix_end * d..(prefix_end + 1) * d];
        for k in prefix_end + 1..=n {
            let row = &suffix.values[k * d..(k + 1) * d];
            for i in 0..d {
                values.push(base[i] + (row[i] - pivot[i]));
            }
        }
        let mut events: Vec<JumpEvent> = prefix
            .jump_events
            .iter()
            .filter(|ev| ev.time <= cut)
            .cloned()
            .collect();
        events.extend(
            suffix
                .jump_events
                .iter()
                .filter(|ev| ev.time > cut)
                .cloned(),
        );
        SamplePath::from_parts(prefix.grid, d, values, events, f64::INFINITY)
    }

    /// CSV dump: `time,coordinate_1..coordinate_d,state` with empty
    /// coordinate fields for non-point states.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        write_csv_header(w, self.d)?;
        for k in 0..=self.n_nodes() {
            write_csv_row(w, self.grid.time(k), &self.value_at_index(k), self.d)?;
        }
        Ok(())
    }
}

/// A path restricted to an observation window; values outside the window
/// read as [`PathValue::Unobserved`].
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    grid: Grid,
    d: usize,
    window_end: usize,
    closed: bool,
    values: Vec<f64>,
    jump_events: Vec<JumpEvent>,
    lifetime: f64,
}

impl Observation {
    pub fn window_end(&self) -> f64 {
        self.grid.time(self.window_end)
    }

    pub fn closed(&self) -> bool {
        self.closed
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn lifetime(&self) -> f64 {
        self.lifetime
    }

    /// Jump events inside the window.
    pub fn jump_events(&self) -> &[JumpEvent] {
        &self.jump_events
    }

    /// Value at a grid node: unobserved outside the window (including the
    /// endpoint itself when the window is open), otherwise the underlying
    /// path value.
    pub fn value_at(&self, t: f64) -> Result<PathValue> {
        let idx = self.grid.index_of(t)?;
        let observed = if self.closed {
            idx <= self.window_end
        } else {
            idx < self.window_end
        };
        if !observed {
            return Ok(PathValue::Unobserved);
        }
        if self.grid.time(idx) >= self.lifetime {
            return Ok(PathValue::Cemetery);
        }
        let row = idx * self.d;
        Ok(PathValue::Point(self.values[row..row + self.d].to_vec()))
    }

    pub fn write_csv<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        write_csv_header(w, self.d)?;
        for k in 0..=self.grid.n_nodes() {
            let value = self
                .value_at(self.grid.time(k))
                .expect("grid node is aligned");
            write_csv_row(w, self.grid.time(k), &value, self.d)?;
        }
        Ok(())
    }
}

fn write_csv_header<W: Write>(w: &mut W, d: usize) -> std::io::Result<()> {
    write!(w, "time")?;
    for i in 1..=d {
        write!(w, ",coordinate_{i}")?;
    }
    writeln!(w, ",state")
}

fn write_csv_row<W: Write>(
    w: &mut W,
    time: f64,
    value: &PathValue,
    d: usize,
) -> std::io::Result<()> {
    write!(w, "{time}")?;
    match value.as_point() {
        Some(x) => {
            for c in x {
                write!(w, ",{c}")?;
            }
        }
        None => {
            for _ in 0..d {
                write!(w, ",")?;
            }
        }
    }
    writeln!(w, ",{}", value.state_label())
}
