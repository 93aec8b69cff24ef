//! Offline per-cell statistics: arrival rates into each FOV square, escape
//! time distributions, expected escape times and expected detections of a
//! sensor parked at the cell.

use std::f64::consts::PI;

use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::{
    angular_span, chord_length, fov_square, AngularSpan, CellIndex, GeometryError, Lattice, Source,
};
use crate::scenario::{Fingerprint, QuadratureParams, Scenario};

pub mod cache;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("source cannot reach the FOV of cell {0}; no escape-time distribution exists")]
    Unreachable(CellIndex),
    #[error("invalid quadrature parameters: {0}")]
    BadQuadrature(String),
    #[error("escape time queried at negative duration {0}")]
    NegativeDuration(f64),
    #[error("scenario has no admissible cells")]
    NoAdmissibleCells,
    #[error("cell {0} is not admissible")]
    NotAdmissible(CellIndex),
}

/// Piecewise-linear CDF of the time a target spends inside one FOV square.
///
/// `knots` starts at `t_a` and ends at `t_b`; `cdf_values` starts at 0 and
/// ends at exactly 1. Knots sit on a uniform `bin_width` grid anchored at
/// `t_a`, with extra knots inside bins heavier than the configured mass cap.
#[derive(Debug, Clone, PartialEq)]
pub struct EscapeCdf {
    pub t_a: f64,
    pub t_b: f64,
    pub bin_width: f64,
    pub knots: Vec<f64>,
    pub cdf_values: Vec<f64>,
}

impl EscapeCdf {
    /// Builds the CDF from raw escape-time samples.
    pub fn from_samples(mut times: Vec<f64>, bin_width: f64, max_bin_mass: f64) -> Option<Self> {
        if times.is_empty() {
            return None;
        }
        times.sort_by(f64::total_cmp);
        let n = times.len();
        let t_a = times[0];
        let t_b = times[n - 1];
        if t_b <= t_a {
            return Some(Self {
                t_a,
                t_b,
                bin_width,
                knots: vec![t_a],
                cdf_values: vec![1.0],
            });
        }

        let n_bins = ((t_b - t_a) / bin_width).ceil().max(1.0) as usize;
        let mut edges: Vec<f64> = (0..n_bins)
            .map(|k| t_a + k as f64 * bin_width)
            .take_while(|&e| e < t_b)
            .collect();
        edges.push(t_b);

        let below = |x: f64| times.partition_point(|&t| t <= x);
        let per_knot = ((max_bin_mass * n as f64).floor() as usize).max(1);
        let mut knots = vec![t_a];
        let mut cdf_values = vec![0.0];
        for w in edges.windows(2) {
            let (lo, hi) = (w[0], w[1]);
            let (i0, i1) = (below(lo), below(hi));
            if (i1 - i0) as f64 > max_bin_mass * n as f64 {
                let mut m = i0 + per_knot;
                while m < i1 {
                    let x = times[m - 1];
                    if x > *knots.last().unwrap() && x < hi {
                        knots.push(x);
                        cdf_values.push(below(x) as f64 / n as f64);
                    }
                    m += per_knot;
                }
            }
            knots.push(hi);
            cdf_values.push(below(hi) as f64 / n as f64);
        }
        *cdf_values.last_mut().unwrap() = 1.0;
        Some(Self {
            t_a,
            t_b,
            bin_width,
            knots,
            cdf_values,
        })
    }

    /// `P(escape time <= tau)`.
    pub fn probability(&self, tau: f64) -> Result<f64, StatsError> {
        if tau < 0.0 || tau.is_nan() {
            return Err(StatsError::NegativeDuration(tau));
        }
        Ok(self.probability_unchecked(tau))
    }

    pub(crate) fn probability_unchecked(&self, tau: f64) -> f64 {
        if tau < self.t_a {
            return 0.0;
        }
        if tau >= self.t_b {
            return 1.0;
        }
        let i = self.knots.partition_point(|&k| k <= tau) - 1;
        let (x0, x1) = (self.knots[i], self.knots[i + 1]);
        let (f0, f1) = (self.cdf_values[i], self.cdf_values[i + 1]);
        f0 + (f1 - f0) * (tau - x0) / (x1 - x0)
    }

    /// Mean of the piecewise-linear distribution.
    pub fn mean(&self) -> f64 {
        if self.knots.len() < 2 {
            return self.t_a;
        }
        self.knots
            .windows(2)
            .zip(self.cdf_values.windows(2))
            .map(|(x, f)| (f[1] - f[0]) * 0.5 * (x[0] + x[1]))
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellStats {
    pub cell: CellIndex,
    /// Expected FOV entries per step, summed over sources.
    pub arrival_rate: f64,
    pub per_source_rates: Vec<f64>,
    /// `None` for sources that cannot reach this FOV.
    pub per_source_cdfs: Vec<Option<EscapeCdf>>,
    pub expected_escape_time: f64,
    /// Expected number of targets inside the FOV at any step.
    pub expected_detections: f64,
}

/// Rate at which targets from `source` enter the FOV span `span`.
pub fn rate_for_span(source: &Source, span: &AngularSpan) -> f64 {
    source.rate * span.theta / PI
}

pub fn per_source_rate(
    source: &Source,
    cell: CellIndex,
    lattice: &Lattice,
) -> Result<f64, StatsError> {
    let span = angular_span(source, &fov_square(cell, lattice)?)?;
    Ok(rate_for_span(source, &span))
}

fn check_quadrature(q: &QuadratureParams) -> Result<(), StatsError> {
    if q.quadrature_n < 2 {
        return Err(StatsError::BadQuadrature(format!(
            "quadrature_n must be at least 2, got {}",
            q.quadrature_n
        )));
    }
    if !(q.bin_width > 0.0) {
        return Err(StatsError::BadQuadrature(format!(
            "bin_width must be positive, got {}",
            q.bin_width
        )));
    }
    if !(q.max_bin_mass > 0.0 && q.max_bin_mass <= 1.0) {
        return Err(StatsError::BadQuadrature(format!(
            "max_bin_mass must lie in (0, 1], got {}",
            q.max_bin_mass
        )));
    }
    Ok(())
}

/// Escape-time CDF for targets from `source` crossing the FOV at `cell`,
/// by midpoint quadrature over the source's angular span.
pub fn build_escape_cdf(
    source: &Source,
    cell: CellIndex,
    lattice: &Lattice,
    speed: f64,
    quadrature: &QuadratureParams,
) -> Result<EscapeCdf, StatsError> {
    check_quadrature(quadrature)?;
    if !(speed > 0.0) {
        return Err(GeometryError::NonPositiveSpeed(speed).into());
    }
    let square = fov_square(cell, lattice)?;
    let span = angular_span(source, &square)?;
    if !span.is_reachable() {
        return Err(StatsError::Unreachable(cell));
    }
    cdf_over_span(source, &span, &square.rect(), speed, quadrature)
        .ok_or(StatsError::Unreachable(cell))
}

fn cdf_over_span(
    source: &Source,
    span: &AngularSpan,
    rect: &crate::geometry::Rect,
    speed: f64,
    q: &QuadratureParams,
) -> Option<EscapeCdf> {
    let n = q.quadrature_n;
    let times: Vec<f64> = (0..n)
        .filter_map(|i| {
            let angle = span.delta + span.theta * (i as f64 + 0.5) / n as f64;
            chord_length(source, angle, rect).map(|c| c / speed)
        })
        .collect();
    EscapeCdf::from_samples(times, q.bin_width, q.max_bin_mass)
}

pub fn compute_cell_stats(cell: CellIndex, scenario: &Scenario) -> Result<CellStats, StatsError> {
    let lattice = &scenario.lattice;
    if !lattice.is_admissible(cell) {
        return Err(StatsError::NotAdmissible(cell));
    }
    check_quadrature(&scenario.quadrature)?;
    if !(scenario.target_speed > 0.0) {
        return Err(GeometryError::NonPositiveSpeed(scenario.target_speed).into());
    }
    let square = fov_square(cell, lattice)?;
    let rect = square.rect();
    let mut per_source_rates = Vec::with_capacity(scenario.sources.len());
    let mut per_source_cdfs = Vec::with_capacity(scenario.sources.len());
    for source in &scenario.sources {
        let span = angular_span(source, &square)?;
        let cdf = if span.is_reachable() {
            cdf_over_span(
                source,
                &span,
                &rect,
                scenario.target_speed,
                &scenario.quadrature,
            )
        } else {
            None
        };
        per_source_rates.push(if cdf.is_some() {
            rate_for_span(source, &span)
        } else {
            0.0
        });
        per_source_cdfs.push(cdf);
    }

    let arrival_rate: f64 = per_source_rates.iter().sum();
    let expected_escape_time = if arrival_rate > 0.0 {
        per_source_rates
            .iter()
            .zip(&per_source_cdfs)
            .filter_map(|(r, c)| c.as_ref().map(|c| r / arrival_rate * c.mean()))
            .sum()
    } else {
        0.0
    };
    Ok(CellStats {
        cell,
        arrival_rate,
        per_source_rates,
        per_source_cdfs,
        expected_escape_time,
        expected_detections: arrival_rate * expected_escape_time,
    })
}

/// Statistics for every admissible cell of a scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct StatsTable {
    fingerprint: Fingerprint,
    lattice: Lattice,
    cells: Vec<CellStats>,
}

impl StatsTable {
    pub(crate) fn from_parts(
        fingerprint: Fingerprint,
        lattice: Lattice,
        cells: Vec<CellStats>,
    ) -> Self {
        Self {
            fingerprint,
            lattice,
            cells,
        }
    }

    pub fn fingerprint(&self) -> Fingerprint {
        self.fingerprint
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn cells(&self) -> &[CellStats] {
        &self.cells
    }

    pub fn get(&self, cell: CellIndex) -> Option<&CellStats> {
        self.lattice
            .admissible_ordinal(cell)
            .and_then(|i| self.cells.get(i))
    }

    /// (min, mean, max) of expected detections over all cells.
    pub fn detection_summary(&self) -> (f64, f64, f64) {
        let d = self.cells.iter().map(|c| c.expected_detections);
        let min = d.clone().fold(f64::INFINITY, f64::min);
        let max = d.clone().fold(f64::NEG_INFINITY, f64::max);
        let mean = d.sum::<f64>() / self.cells.len().max(1) as f64;
        (min, mean, max)
    }
}

pub fn precompute_all(scenario: &Scenario) -> Result<StatsTable, StatsError> {
    let lattice = &scenario.lattice;
    if lattice.admissible_count() == 0 {
        return Err(StatsError::NoAdmissibleCells);
    }
    let cells: Vec<CellIndex> = lattice.admissible_cells().collect();
    let stats = cells
        .par_iter()
        .map(|&c| compute_cell_stats(c, scenario))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(StatsTable::from_parts(
        scenario.fingerprint(),
        *lattice,
        stats,
    ))
}

/// Expected number of targets inside the zone at steady state.
pub fn expected_zone_population(scenario: &Scenario, quadrature_n: usize) -> f64 {
    let rect = scenario.lattice.zone().rect();
    scenario
        .sources
        .iter()
        .map(|s| {
            let dwell: f64 = (0..quadrature_n)
                .filter_map(|i| {
                    let angle = PI * (i as f64 + 0.5) / quadrature_n as f64;
                    chord_length(s, angle, &rect)
                })
                .sum::<f64>()
                / quadrature_n as f64
                / scenario.target_speed;
            s.rate * dwell
        })
        .sum()
}
