//! Depth-limited search over the nine-connected space-time tree and the
//! priority-ordered coordination round.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::estimator::{build_value_lattice, EstimateError, TargetObservation, ValueLattice};
use crate::geometry::{neighbors9, overlap_unchecked, CellIndex, Lattice};
use crate::stats::StatsTable;

pub type SensorId = usize;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("no reachable nodes from {start} within a horizon of {horizon}")]
    EmptyDomain { start: CellIndex, horizon: usize },
    #[error(transparent)]
    Estimate(#[from] EstimateError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MotionPlan {
    pub sensor: SensorId,
    pub start: CellIndex,
    /// Cell occupied at `t = 1..=T`.
    pub path: Vec<CellIndex>,
    pub node_values: Vec<f64>,
    pub objective: f64,
}

impl MotionPlan {
    pub fn horizon(&self) -> usize {
        self.path.len()
    }

    /// Cell occupied `t` steps after the start (`t >= 1`).
    pub fn cell_at(&self, t: usize) -> Option<CellIndex> {
        t.checked_sub(1).and_then(|i| self.path.get(i)).copied()
    }
}

/// Highest-value path through `values`, rooted at its planning cell.
///
/// Node values do not depend on the path taken, so stage-wise dynamic
/// programming finds the same optimum as enumerating all `9^T` paths. Ties
/// go to the lexicographically smallest move sequence in `MOVES` order.
pub fn best_path(
    sensor: SensorId,
    values: &ValueLattice,
    lattice: &Lattice,
) -> Result<MotionPlan, PlanError> {
    let start = values.center();
    let horizon = values.horizon();
    let empty = PlanError::EmptyDomain { start, horizon };
    if horizon == 0 || values.get(start, 1).is_none() {
        return Err(empty);
    }

    // best[t][node]: best total from (node, t) to the horizon, inclusive.
    let mut best = ValueLattice::empty(start, horizon);
    for (cell, t, v) in values.iter().filter(|n| n.1 == horizon) {
        best.set(cell, t, v);
    }
    for t in (1..horizon).rev() {
        for (cell, _, v) in values.iter().filter(|n| n.1 == t) {
            let tail = neighbors9(cell, lattice)
                .into_iter()
                .filter_map(|n| best.get(n, t + 1))
                .fold(f64::NEG_INFINITY, f64::max);
            if tail.is_finite() {
                best.set(cell, t, v + tail);
            }
        }
    }

    let mut path = Vec::with_capacity(horizon);
    let mut node_values = Vec::with_capacity(horizon);
    let mut here = start;
    for t in 1..=horizon {
        let mut choice: Option<(CellIndex, f64)> = None;
        for n in neighbors9(here, lattice) {
            if let Some(b) = best.get(n, t) {
                if choice.is_none_or(|(_, cb)| b > cb) {
                    choice = Some((n, b));
                }
            }
        }
        let (next, _) = choice.ok_or(empty.clone())?;
        path.push(next);
        node_values.push(values.get(next, t).ok_or(empty.clone())?);
        here = next;
    }
    let objective = node_values.iter().sum();
    Ok(MotionPlan {
        sensor,
        start,
        path,
        node_values,
        objective,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PriorityOrder {
    /// Sensor ids, highest priority first.
    pub order: Vec<SensorId>,
    /// Groups of sensors whose objectives tied; each group lists the
    /// randomly drawn order among them.
    pub tie_groups: Vec<Vec<SensorId>>,
}

/// Orders plans by objective, descending. Equal objectives are ordered by a
/// uniformly random permutation drawn from `rng`.
pub fn prioritize<R: Rng + ?Sized>(plans: &[MotionPlan], rng: &mut R) -> PriorityOrder {
    let mut idx: Vec<usize> = (0..plans.len()).collect();
    idx.shuffle(rng);
    idx.sort_by(|&a, &b| plans[b].objective.total_cmp(&plans[a].objective));
    let order: Vec<SensorId> = idx.iter().map(|&i| plans[i].sensor).collect();
    let tie_groups = idx
        .chunk_by(|&a, &b| plans[a].objective == plans[b].objective)
        .filter(|g| g.len() > 1)
        .map(|g| g.iter().map(|&i| plans[i].sensor).collect())
        .collect();
    PriorityOrder { order, tie_groups }
}

/// Scales each node by `1 − f` for every higher-priority sensor, where `f`
/// is the FOV overlap with that sensor's planned cell at the same step.
pub fn apply_overlap_penalty(
    values: &ValueLattice,
    higher: &[&MotionPlan],
    lattice: &Lattice,
) -> ValueLattice {
    let mut out = values.clone();
    for (cell, t, v) in values.iter() {
        let mut penalised = v;
        for plan in higher {
            if let Some(other) = plan.cell_at(t) {
                let f = overlap_unchecked(cell, other, lattice);
                penalised -= f * penalised;
            }
        }
        out.set(cell, t, penalised.max(0.0));
    }
    out
}

/// What one sensor brings to a planning round.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorInput {
    pub id: SensorId,
    pub cell: CellIndex,
    pub observations: Vec<TargetObservation>,
}

/// Per-sensor record of a coordination round.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanTrace {
    pub sensor: SensorId,
    /// 1 is the highest priority.
    pub priority: usize,
    pub path: Vec<CellIndex>,
    pub objective_before: f64,
    pub objective_after: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundOutcome {
    /// Final plans in sensor-id order (the order of the inputs).
    pub plans: Vec<MotionPlan>,
    pub priority: PriorityOrder,
    pub trace: Vec<PlanTrace>,
}

fn unconstrained(
    sensors: &[SensorInput],
    table: &StatsTable,
    horizon: usize,
) -> Result<Vec<(ValueLattice, MotionPlan)>, PlanError> {
    sensors
        .par_iter()
        .map(|s| {
            let values = build_value_lattice(s.cell, &s.observations, horizon, table)?;
            let plan = best_path(s.id, &values, table.lattice())?;
            Ok((values, plan))
        })
        .collect()
}

/// Every sensor plans for itself alone.
pub fn plan_independently(
    sensors: &[SensorInput],
    table: &StatsTable,
    horizon: usize,
) -> Result<Vec<MotionPlan>, PlanError> {
    Ok(unconstrained(sensors, table, horizon)?
        .into_iter()
        .map(|(_, p)| p)
        .collect())
}

/// One planning round with priority coordination.
///
/// Each sensor first plans alone. Plans are ranked by objective; the top
/// plan is fixed, and every lower-priority sensor re-plans on its own
/// values penalised against all finalised higher-priority plans.
pub fn coordinate_round<R: Rng + ?Sized>(
    sensors: &[SensorInput],
    table: &StatsTable,
    horizon: usize,
    rng: &mut R,
) -> Result<RoundOutcome, PlanError> {
    let initial = unconstrained(sensors, table, horizon)?;
    let plans: Vec<MotionPlan> = initial.iter().map(|(_, p)| p.clone()).collect();
    let priority = prioritize(&plans, rng);
    let slot_of = |id: SensorId| {
        sensors
            .iter()
            .position(|s| s.id == id)
            .expect("known sensor")
    };

    let mut finals: Vec<Option<MotionPlan>> = vec![None; sensors.len()];
    let mut fixed: Vec<usize> = Vec::with_capacity(sensors.len());
    let mut trace = Vec::with_capacity(sensors.len());
    for (rank, &id) in priority.order.iter().enumerate() {
        let slot = slot_of(id);
        let (values, first) = &initial[slot];
        let plan = if fixed.is_empty() {
            first.clone()
        } else {
            let higher: Vec<&MotionPlan> = fixed
                .iter()
                .map(|&i| finals[i].as_ref().expect("finalised"))
                .collect();
            let penalised = apply_overlap_penalty(values, &higher, table.lattice());
            best_path(id, &penalised, table.lattice())?
        };
        trace.push(PlanTrace {
            sensor: id,
            priority: rank + 1,
            path: plan.path.clone(),
            objective_before: first.objective,
            objective_after: plan.objective,
        });
        finals[slot] = Some(plan);
        fixed.push(slot);
    }
    Ok(RoundOutcome {
        plans: finals
            .into_iter()
            .map(|p| p.expect("every sensor planned"))
            .collect(),
        priority,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Vec2, Zone};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn lattice() -> Lattice {
        Lattice::new(
            Zone {
                origin: Vec2::default(),
                width: 400.0,
                height: 300.0,
            },
            10.0,
            80.0,
        )
        .unwrap()
    }

    fn random_values(
        rng: &mut ChaCha8Rng,
        center: CellIndex,
        horizon: usize,
        lat: &Lattice,
    ) -> ValueLattice {
        let mut v = ValueLattice::empty(center, horizon);
        for t in 1..=horizon {
            let r = t as i64;
            for dr in -r..=r {
                for dc in -r..=r {
                    if let Some(c) = center.offset(dc, dr).filter(|c| lat.is_admissible(*c)) {
                        v.set(c, t, rng.random_range(0.0..10.0));
                    }
                }
            }
        }
        v
    }

    /// Exhaustive enumeration of every space-time path; first best wins.
    fn brute_force(values: &ValueLattice, lat: &Lattice) -> (f64, Vec<CellIndex>) {
        fn go(
            values: &ValueLattice,
            lat: &Lattice,
            here: CellIndex,
            t: usize,
            acc: f64,
            path: &mut Vec<CellIndex>,
            best: &mut (f64, Vec<CellIndex>),
        ) {
            if t > values.horizon() {
                if acc > best.0 {
                    *best = (acc, path.clone());
                }
                return;
            }
            for n in neighbors9(here, lat) {
                if let Some(v) = values.get(n, t) {
                    path.push(n);
                    go(values, lat, n, t + 1, acc + v, path, best);
                    path.pop();
                }
            }
        }
        let mut best = (f64::NEG_INFINITY, Vec::new());
        go(
            values,
            lat,
            values.center(),
            1,
            0.0,
            &mut Vec::new(),
            &mut best,
        );
        best
    }

    #[test]
    fn single_step_is_argmax() {
        let lat = lattice();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let c = CellIndex::new(20, 15);
        let v = random_values(&mut rng, c, 1, &lat);
        let plan = best_path(0, &v, &lat).unwrap();
        let max = v.iter().map(|n| n.2).fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(plan.objective, max);
        assert_eq!(plan.path.len(), 1);
    }

    #[test]
    fn uniform_field_stays_put() {
        let lat = lattice();
        let c = CellIndex::new(20, 15);
        let mut v = ValueLattice::empty(c, 3);
        for t in 1..=3 {
            for dr in -(t as i64)..=t as i64 {
                for dc in -(t as i64)..=t as i64 {
                    v.set(c.offset(dc, dr).unwrap(), t, 2.5);
                }
            }
        }
        let plan = best_path(7, &v, &lat).unwrap();
        assert_eq!(plan.path, vec![c, c, c]);
        assert_eq!(plan.objective, 7.5);
        assert_eq!(plan.sensor, 7);
    }

    #[test]
    fn matches_exhaustive_enumeration() {
        let lat = lattice();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for i in 0..300 {
            // mix interior and boundary starts
            let c = if i % 3 == 0 {
                CellIndex::new(rng.random_range(4..7), rng.random_range(4..26))
            } else {
                CellIndex::new(rng.random_range(4..36), rng.random_range(4..26))
            };
            let horizon = 1 + i % 3;
            let v = random_values(&mut rng, c, horizon, &lat);
            let plan = best_path(0, &v, &lat).unwrap();
            let (obj, path) = brute_force(&v, &lat);
            assert_eq!(plan.objective, obj);
            assert_eq!(plan.path, path);
            assert!(plan.path[0].cheby(c) <= 1);
            assert!(plan.path.windows(2).all(|w| w[0].cheby(w[1]) <= 1));
        }
    }

    #[test]
    fn empty_domain_is_an_error() {
        let lat = lattice();
        let v = ValueLattice::empty(CellIndex::new(20, 15), 2);
        assert!(matches!(
            best_path(0, &v, &lat),
            Err(PlanError::EmptyDomain { .. })
        ));
    }

    fn plan_with(sensor: SensorId, objective: f64) -> MotionPlan {
        MotionPlan {
            sensor,
            start: CellIndex::new(10, 10),
            path: vec![CellIndex::new(10, 10)],
            node_values: vec![objective],
            objective,
        }
    }

    #[test]
    fn prioritize_sorts_descending() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let plans = vec![plan_with(0, 5.0), plan_with(1, 3.0), plan_with(2, 4.0)];
        let p = prioritize(&plans, &mut rng);
        assert_eq!(p.order, vec![0, 2, 1]);
        assert!(p.tie_groups.is_empty());
        let p = prioritize(&plans[..1], &mut rng);
        assert_eq!(p.order, vec![0]);
    }

    #[test]
    fn prioritize_breaks_ties_uniformly() {
        let plans = vec![plan_with(0, 1.0), plan_with(1, 1.0), plan_with(2, 1.0)];
        let mut counts = std::collections::HashMap::new();
        for seed in 0..1000 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = prioritize(&plans, &mut rng);
            assert_eq!(p.tie_groups, vec![p.order.clone()]);
            *counts.entry(p.order).or_insert(0usize) += 1;
        }
        assert_eq!(counts.len(), 6);
        assert!(counts.values().all(|&c| c > 100), "{counts:?}");
    }

    #[test]
    fn penalty_cases() {
        let lat = lattice();
        let c = CellIndex::new(20, 15);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let v = random_values(&mut rng, c, 2, &lat);
        let far = MotionPlan {
            sensor: 1,
            start: CellIndex::new(33, 24),
            path: vec![CellIndex::new(33, 24), CellIndex::new(33, 24)],
            node_values: vec![0.0, 0.0],
            objective: 0.0,
        };
        assert_eq!(apply_overlap_penalty(&v, &[&far], &lat), v);

        let same = MotionPlan {
            path: vec![c, c],
            ..far.clone()
        };
        let p = apply_overlap_penalty(&v, &[&same], &lat);
        assert_eq!(p.get(c, 1), Some(0.0));
        assert_eq!(p.get(c, 2), Some(0.0));

        // two sensors four columns away on either side: f = 0.5 each
        let left = MotionPlan {
            path: vec![CellIndex::new(16, 15), CellIndex::new(16, 15)],
            ..far.clone()
        };
        let right = MotionPlan {
            path: vec![CellIndex::new(24, 15), CellIndex::new(24, 15)],
            ..far.clone()
        };
        let p = apply_overlap_penalty(&v, &[&left, &right], &lat);
        let orig = v.get(c, 2).unwrap();
        let step1 = orig - 0.5 * orig;
        let step2 = step1 - 0.5 * step1;
        assert_eq!(p.get(c, 2), Some(step2));
        assert!((step2 - 0.25 * orig).abs() < 1e-12);
        for (cell, t, val) in p.iter() {
            assert!(val <= v.get(cell, t).unwrap());
            assert!(val >= 0.0);
        }
    }
}
