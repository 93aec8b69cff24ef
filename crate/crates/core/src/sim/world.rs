//! Targets, their straight-line motion, and per-step detection.

use serde::Serialize;

use crate::estimator::TargetObservation;
use crate::geometry::{fov_square, CellIndex, GeometryError, Lattice, Rect, Source, Square, Vec2};
use crate::sim::stream::SpawnEvent;

#[derive(Debug, Clone, PartialEq)]
pub struct TargetState {
    pub id: u64,
    pub position: Vec2,
    pub velocity: Vec2,
    pub spawned_at: u32,
    pub active: bool,
    pub entered_zone: bool,
    /// Steps moved since spawning.
    pub age: u32,
    /// Steps after which the target is past the zone for good.
    pub exit_after: f64,
}

/// Running totals for the spawn/deactivation bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct Population {
    pub spawned: u64,
    pub active: u64,
    pub deactivated: u64,
    pub discarded: u64,
}

impl Population {
    pub fn is_conserved(&self) -> bool {
        self.spawned == self.active + self.deactivated + self.discarded
    }
}

#[derive(Debug, Clone)]
pub struct World {
    zone: Rect,
    sources: Vec<Source>,
    targets: Vec<TargetState>,
    next_id: u64,
    spawned: u64,
    deactivated: u64,
    discarded: u64,
}

impl World {
    pub fn new(lattice: &Lattice, sources: &[Source]) -> Self {
        Self {
            zone: lattice.zone().rect(),
            sources: sources.to_vec(),
            targets: Vec::new(),
            next_id: 0,
            spawned: 0,
            deactivated: 0,
            discarded: 0,
        }
    }

    /// Launches one target per event; targets whose ray misses the zone are
    /// counted and dropped immediately.
    pub fn spawn(&mut self, events: &[SpawnEvent]) {
        for e in events {
            let src = &self.sources[e.source as usize];
            let velocity = src.facing.direction(e.angle) * e.speed;
            self.spawned += 1;
            let id = self.next_id;
            self.next_id += 1;
            match self.zone.ray_interval(src.position, velocity) {
                None => self.discarded += 1,
                Some((_, t_out)) => self.targets.push(TargetState {
                    id,
                    position: src.position,
                    velocity,
                    spawned_at: e.step,
                    active: true,
                    entered_zone: false,
                    age: 0,
                    exit_after: t_out,
                }),
            }
        }
    }

    /// Moves every target one step and retires those that left the zone or
    /// can no longer reach it.
    pub fn advance(&mut self) {
        let zone = self.zone;
        let mut retired = 0;
        self.targets.retain_mut(|t| {
            t.position = t.position + t.velocity;
            t.age += 1;
            if zone.contains(t.position) {
                t.entered_zone = true;
                true
            } else if t.entered_zone || t.age as f64 > t.exit_after {
                t.active = false;
                retired += 1;
                false
            } else {
                true
            }
        });
        self.deactivated += retired;
    }

    pub fn targets(&self) -> &[TargetState] {
        &self.targets
    }

    pub fn in_zone(&self) -> impl Iterator<Item = &TargetState> + '_ {
        self.targets
            .iter()
            .filter(|t| self.zone.contains(t.position))
    }

    pub fn population(&self) -> Population {
        Population {
            spawned: self.spawned,
            active: self.targets.len() as u64,
            deactivated: self.deactivated,
            discarded: self.discarded,
        }
    }
}

/// Who saw what during one step.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    /// Sensors seeing each in-zone target, in target order (`g` is `> 0`).
    pub multiplicity: Vec<u32>,
    /// `hist[k]`: in-zone targets seen by exactly `k` sensors.
    pub hist: Vec<usize>,
    /// Sensor-target pairs in view.
    pub pairs: usize,
    /// Targets inside each sensor's FOV.
    pub observations: Vec<Vec<TargetObservation>>,
}

/// Every in-zone target inside a sensor's FOV square is detected by it.
pub fn detect(
    lattice: &Lattice,
    sensor_cells: &[CellIndex],
    world: &World,
) -> Result<Detection, GeometryError> {
    let squares: Vec<Square> = sensor_cells
        .iter()
        .map(|&c| fov_square(c, lattice))
        .collect::<Result<_, _>>()?;
    let mut hist = vec![0usize; sensor_cells.len() + 1];
    let mut multiplicity = Vec::new();
    let mut observations = vec![Vec::new(); sensor_cells.len()];
    let mut pairs = 0;
    for t in world.in_zone() {
        let mut m = 0u32;
        for (s, sq) in squares.iter().enumerate() {
            if sq.contains(t.position) {
                m += 1;
                observations[s].push(TargetObservation {
                    position: t.position,
                    velocity: t.velocity,
                });
            }
        }
        pairs += m as usize;
        hist[m as usize] += 1;
        multiplicity.push(m);
    }
    Ok(Detection {
        multiplicity,
        hist,
        pairs,
        observations,
    })
}
