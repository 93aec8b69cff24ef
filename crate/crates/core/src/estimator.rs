//! Online expected-detection estimates for the nodes of one sensor's
//! space-time search tree.
//!
//! A node `(cell, t)` is valued as
//!
//! ```text
//! survivors(cell, t) + κ · arrivals(P, t) + (1 − κ) · d̂(cell)
//! ```
//!
//! where `P` is the planning cell, `κ` the FOV overlap of `P` and `cell`,
//! `survivors` the currently observed targets still inside the FOV of
//! `cell` after `t` steps of straight-line motion, and `arrivals` the
//! expected number of new targets that entered the FOV of `P` during the
//! next `t` steps and have not escaped yet.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{fov_square, overlap_unchecked, CellIndex, GeometryError, Lattice, Vec2};
use crate::stats::{CellStats, StatsTable};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimateError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("time offset must be at least 1")]
    ZeroTime,
    #[error("horizon must be at least 1")]
    ZeroHorizon,
    #[error("cell {0} is not admissible")]
    NotAdmissible(CellIndex),
    #[error("cell {to} is {dist} cells from {from}, unreachable in {t} steps")]
    Unreachable {
        from: CellIndex,
        to: CellIndex,
        dist: usize,
        t: usize,
    },
}

/// A target seen by a sensor: where it is and how it moves per step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetObservation {
    pub position: Vec2,
    pub velocity: Vec2,
}

/// Observed targets still inside the FOV of `dest` after `t` steps.
pub fn surviving_count(
    observations: &[TargetObservation],
    dest: CellIndex,
    t: usize,
    lattice: &Lattice,
) -> Result<usize, EstimateError> {
    if t == 0 {
        return Err(EstimateError::ZeroTime);
    }
    let square = fov_square(dest, lattice)?;
    Ok(observations
        .iter()
        .filter(|o| square.contains(o.position + o.velocity * t as f64))
        .count())
}

/// Expected new arrivals still inside the FOV `t` steps from now:
/// `λ̂·t − Σ_j λ_j Σ_{s=1..t} P(te_j ≤ t − s)`.
pub fn statistical_term(stats: &CellStats, t: usize) -> f64 {
    let escaped: f64 = stats
        .per_source_rates
        .iter()
        .zip(&stats.per_source_cdfs)
        .filter_map(|(rate, cdf)| {
            let cdf = cdf.as_ref()?;
            let p: f64 = (1..=t)
                .map(|s| cdf.probability_unchecked((t - s) as f64))
                .sum();
            Some(rate * p)
        })
        .sum();
    stats.arrival_rate * t as f64 - escaped
}

fn admissible_stats(table: &StatsTable, cell: CellIndex) -> Result<&CellStats, EstimateError> {
    table.lattice().check(cell)?;
    table.get(cell).ok_or(EstimateError::NotAdmissible(cell))
}

fn check_reach(from: CellIndex, to: CellIndex, t: usize) -> Result<(), EstimateError> {
    if t == 0 {
        return Err(EstimateError::ZeroTime);
    }
    let dist = from.cheby(to);
    if dist > t {
        return Err(EstimateError::Unreachable { from, to, dist, t });
    }
    Ok(())
}

/// Expected detections at `to`, `t` steps ahead, for a sensor planning from
/// `from` with the given observations.
pub fn node_value(
    observations: &[TargetObservation],
    from: CellIndex,
    to: CellIndex,
    t: usize,
    table: &StatsTable,
) -> Result<f64, EstimateError> {
    let from_stats = admissible_stats(table, from)?;
    let to_stats = admissible_stats(table, to)?;
    check_reach(from, to, t)?;
    let lattice = table.lattice();
    let survivors = surviving_count(observations, to, t, lattice)? as f64;
    Ok(blend(
        survivors,
        statistical_term(from_stats, t),
        overlap_unchecked(from, to, lattice),
        to_stats.expected_detections,
    ))
}

fn blend(survivors: f64, arrivals: f64, kappa: f64, d_hat: f64) -> f64 {
    (survivors + kappa * arrivals + (1.0 - kappa) * d_hat).max(0.0)
}

/// Node values over the space-time cone of a planning round: every
/// admissible `cell` within Chebyshev distance `t` of the planning cell,
/// for `t = 1..=horizon`.
#[derive(Debug, Clone)]
pub struct ValueLattice {
    center: CellIndex,
    horizon: usize,
    values: Vec<f64>,
}

/// Undefined nodes compare equal to each other.
impl PartialEq for ValueLattice {
    fn eq(&self, other: &Self) -> bool {
        self.center == other.center
            && self.horizon == other.horizon
            && self
                .values
                .iter()
                .zip(&other.values)
                .all(|(a, b)| a == b || (a.is_nan() && b.is_nan()))
    }
}

impl ValueLattice {
    fn side(&self) -> usize {
        2 * self.horizon + 1
    }

    fn index(&self, cell: CellIndex, t: usize) -> Option<usize> {
        if t == 0 || t > self.horizon || cell.cheby(self.center) > t {
            return None;
        }
        let h = self.horizon as i64;
        let dc = cell.col as i64 - self.center.col as i64 + h;
        let dr = cell.row as i64 - self.center.row as i64 + h;
        let side = self.side();
        Some(((t - 1) * side + dr as usize) * side + dc as usize)
    }

    /// An empty lattice; every node starts undefined.
    pub fn empty(center: CellIndex, horizon: usize) -> Self {
        let side = 2 * horizon + 1;
        Self {
            center,
            horizon,
            values: vec![f64::NAN; horizon * side * side],
        }
    }

    pub fn center(&self) -> CellIndex {
        self.center
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn get(&self, cell: CellIndex, t: usize) -> Option<f64> {
        self.index(cell, t)
            .map(|i| self.values[i])
            .filter(|v| !v.is_nan())
    }

    /// Sets a node value. Panics if the node lies outside the cone.
    pub fn set(&mut self, cell: CellIndex, t: usize, value: f64) {
        let i = self
            .index(cell, t)
            .unwrap_or_else(|| panic!("node {cell}@{t} outside the planning cone"));
        self.values[i] = value;
    }

    /// Defined nodes as `(cell, t, value)`, ordered by `t`, then row, then column.
    pub fn iter(&self) -> impl Iterator<Item = (CellIndex, usize, f64)> + '_ {
        let side = self.side();
        let h = self.horizon as i64;
        self.values.iter().enumerate().filter_map(move |(i, &v)| {
            if v.is_nan() {
                return None;
            }
            let t = i / (side * side) + 1;
            let rem = i % (side * side);
            let cell = self
                .center
                .offset((rem % side) as i64 - h, (rem / side) as i64 - h)?;
            Some((cell, t, v))
        })
    }

    pub fn len(&self) -> usize {
        self.values.iter().filter(|v| !v.is_nan()).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Writes `cell_col,cell_row,t,value` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "cell_col,cell_row,t,value")?;
        for (c, t, v) in self.iter() {
            writeln!(w, "{},{},{},{}", c.col, c.row, t, v)?;
        }
        Ok(())
    }
}

pub fn build_value_lattice(
    sensor_cell: CellIndex,
    observations: &[TargetObservation],
    horizon: usize,
    table: &StatsTable,
) -> Result<ValueLattice, EstimateError> {
    if horizon == 0 {
        return Err(EstimateError::ZeroHorizon);
    }
    let from_stats = admissible_stats(table, sensor_cell)?;
    let lattice = table.lattice();
    let mut out = ValueLattice::empty(sensor_cell, horizon);
    for t in 1..=horizon {
        let arrivals = statistical_term(from_stats, t);
        let r = t as i64;
        for dr in -r..=r {
            for dc in -r..=r {
                let Some(cell) = sensor_cell.offset(dc, dr) else {
                    continue;
                };
                let Some(to_stats) = table.get(cell) else {
                    continue;
                };
                let survivors = surviving_count(observations, cell, t, lattice)? as f64;
                let v = blend(
                    survivors,
                    arrivals,
                    overlap_unchecked(sensor_cell, cell, lattice),
                    to_stats.expected_detections,
                );
                out.set(cell, t, v);
            }
        }
    }
    Ok(out)
}
