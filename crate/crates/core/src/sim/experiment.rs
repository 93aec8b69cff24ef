use std::io::{self, Write};

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use super::rng::{stream_rng, PLANNER_STREAM, WALK_STREAM_BASE};
use super::stream::{SpawnFeed, SpawnGenerator, SpawnStream, StreamError};
use super::world::{detect, Population, World};
use super::{ReplanCadence, Strategy};
use crate::estimator::TargetObservation;
use crate::geometry::{neighbors9, CellIndex, GeometryError, Lattice};
use crate::planner::{
    coordinate_round, plan_independently, MotionPlan, PlanError, SensorId, SensorInput,
};
use crate::scenario::{Fingerprint, Scenario};
use crate::stats::StatsTable;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("stats table was built for scenario {table}, the run uses scenario {scenario}")]
    FingerprintMismatch {
        table: Fingerprint,
        scenario: Fingerprint,
    },
    #[error(transparent)]
    Stream(#[from] StreamError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("sensor {sensor} starts at {cell}, which is not an admissible cell")]
    NotAdmissible { sensor: SensorId, cell: CellIndex },
    #[error("sensor {0} ran out of planned moves before replanning")]
    PlanExhausted(SensorId),
    #[error("invariant violated at step {step}: {what}")]
    Invariant { step: u32, what: String },
    #[error("invalid run parameters: {0}")]
    BadParams(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunParams {
    pub strategy: Strategy,
    pub horizon: usize,
    pub steps: u32,
    pub replan: ReplanCadence,
    pub seed: u64,
    /// Initial cell of each sensor; sensor ids are the indices.
    pub sensors: Vec<CellIndex>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensorState {
    pub id: SensorId,
    pub cell: CellIndex,
    pub plan: Option<MotionPlan>,
    /// Planned moves already executed.
    pub cursor: usize,
}

impl SensorState {
    pub fn new(id: SensorId, cell: CellIndex) -> Self {
        Self {
            id,
            cell,
            plan: None,
            cursor: 0,
        }
    }

    fn plan_done(&self) -> bool {
        self.plan
            .as_ref()
            .is_none_or(|p| self.cursor >= p.horizon())
    }

    fn assign(&mut self, plan: MotionPlan) {
        self.plan = Some(plan);
        self.cursor = 0;
    }
}

/// Moves one sensor for one step and returns its new cell.
pub fn sensor_step<R: Rng + ?Sized>(
    sensor: &mut SensorState,
    strategy: Strategy,
    lattice: &Lattice,
    rng: &mut R,
) -> Result<CellIndex, SimError> {
    let next = match strategy {
        Strategy::Stationary => sensor.cell,
        Strategy::RandomWalk => *neighbors9(sensor.cell, lattice)
            .choose(rng)
            .expect("an admissible cell always neighbours itself"),
        Strategy::Coordinated | Strategy::Uncoordinated => {
            let next = sensor
                .plan
                .as_ref()
                .and_then(|p| p.cell_at(sensor.cursor + 1))
                .ok_or(SimError::PlanExhausted(sensor.id))?;
            sensor.cursor += 1;
            next
        }
    };
    sensor.cell = next;
    Ok(next)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepMetrics {
    pub step: u32,
    pub in_zone: usize,
    pub detected_any: usize,
    pub undetected: usize,
    /// `hist[k]`: in-zone targets seen by exactly `k` sensors.
    pub hist: Vec<usize>,
    pub pairs: usize,
    /// Sensors seeing each in-zone target; `g = 1` where this is non-zero.
    pub multiplicity: Vec<u32>,
    pub population: Population,
    pub sensor_cells: Vec<CellIndex>,
}

impl StepMetrics {
    /// Targets seen by exactly `k` sensors (`k >= 1`).
    pub fn detected_exactly(&self, k: usize) -> usize {
        self.hist.get(k).copied().unwrap_or(0)
    }

    /// Targets seen by four or more sensors.
    pub fn detected_four_plus(&self) -> usize {
        self.hist.iter().skip(4).sum()
    }
}

/// One line of the JSONL step log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepLogRecord {
    pub step: u32,
    pub in_zone: usize,
    pub detected_any: usize,
    /// Index `k`: targets seen by exactly `k` sensors.
    pub multiplicity: Vec<usize>,
    pub sensor_cells: Vec<[usize; 2]>,
}

impl From<&StepMetrics> for StepLogRecord {
    fn from(m: &StepMetrics) -> Self {
        Self {
            step: m.step,
            in_zone: m.in_zone,
            detected_any: m.detected_any,
            multiplicity: m.hist.clone(),
            sensor_cells: m.sensor_cells.iter().map(|c| [c.col, c.row]).collect(),
        }
    }
}

/// One line of the JSONL plan trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanTraceRecord {
    pub step: u32,
    pub sensor: SensorId,
    /// 1 is the highest priority; absent for uncoordinated rounds.
    pub priority: Option<usize>,
    pub path: Vec<[usize; 2]>,
    pub objective_before: f64,
    pub objective_after: f64,
}

/// Per-sample averages over a run, in the column vocabulary of the
/// comparison tables.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentSummary {
    pub strategy: Strategy,
    /// Number of sensors.
    pub ns: usize,
    /// Target speed.
    pub tv: f64,
    pub steps: u32,
    pub seed: u64,
    /// Total detections: targets seen by at least one sensor, summed over steps.
    pub j: u64,
    /// Average detections per sample.
    pub ad: f64,
    /// Average undetected in-zone targets per sample.
    pub zd: f64,
    /// `ad / (ad + zd)`.
    pub af: f64,
    pub d1s: f64,
    pub d2s: f64,
    pub d3s: f64,
    pub d4s_plus: f64,
}

impl ExperimentSummary {
    pub fn from_steps(
        strategy: Strategy,
        tv: f64,
        seed: u64,
        ns: usize,
        steps: &[StepMetrics],
    ) -> Self {
        let n = steps.len().max(1) as f64;
        let total = |f: &dyn Fn(&StepMetrics) -> usize| steps.iter().map(f).sum::<usize>();
        let j = total(&|m| m.detected_any) as u64;
        let ad = j as f64 / n;
        let zd = total(&|m| m.undetected) as f64 / n;
        Self {
            strategy,
            ns,
            tv,
            steps: steps.len() as u32,
            seed,
            j,
            ad,
            zd,
            af: average_fraction(ad, zd),
            d1s: total(&|m| m.detected_exactly(1)) as f64 / n,
            d2s: total(&|m| m.detected_exactly(2)) as f64 / n,
            d3s: total(&|m| m.detected_exactly(3)) as f64 / n,
            d4s_plus: total(&|m| m.detected_four_plus()) as f64 / n,
        }
    }
}

/// Fraction of in-zone targets detected; 0 for an empty zone.
pub fn average_fraction(ad: f64, zd: f64) -> f64 {
    if ad + zd > 0.0 {
        ad / (ad + zd)
    } else {
        0.0
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub summary: ExperimentSummary,
    pub steps: Vec<StepMetrics>,
    /// Every spawn event of the run, whether drawn fresh or replayed.
    pub spawns: SpawnStream,
    pub plan_trace: Vec<PlanTraceRecord>,
}

impl ExperimentOutcome {
    pub fn write_step_log<W: Write>(&self, mut w: W) -> io::Result<()> {
        for m in &self.steps {
            serde_json::to_writer(&mut w, &StepLogRecord::from(m))?;
            w.write_all(b"\n")?;
        }
        w.flush()
    }

    pub fn write_plan_trace<W: Write>(&self, mut w: W) -> io::Result<()> {
        for r in &self.plan_trace {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        w.flush()
    }
}

fn check_step(step: u32, m: &StepMetrics) -> Result<(), SimError> {
    let fail = |what: String| Err(SimError::Invariant { step, what });
    if !m.population.is_conserved() {
        return fail(format!("population not conserved: {:?}", m.population));
    }
    if m.detected_any + m.undetected != m.in_zone {
        return fail(format!(
            "{} detected + {} undetected != {} in zone",
            m.detected_any, m.undetected, m.in_zone
        ));
    }
    let weighted: usize = m.hist.iter().enumerate().map(|(k, c)| k * c).sum();
    if weighted != m.pairs {
        return fail(format!(
            "multiplicity total {weighted} != {} pairs",
            m.pairs
        ));
    }
    Ok(())
}

/// Runs one experiment: each step spawns targets, advances them, moves the
/// sensors (replanning as the cadence requires) and records detections.
///
/// With `replay`, spawn events come from the recorded stream instead of
/// fresh draws. The outcome is a pure function of the arguments.
pub fn run_experiment(
    scenario: &Scenario,
    table: &StatsTable,
    params: &RunParams,
    replay: Option<&SpawnStream>,
) -> Result<ExperimentOutcome, SimError> {
    let fp = scenario.fingerprint();
    if table.fingerprint() != fp {
        return Err(SimError::FingerprintMismatch {
            table: table.fingerprint(),
            scenario: fp,
        });
    }
    if params.steps == 0 {
        return Err(SimError::BadParams("steps must be at least 1".into()));
    }
    if params.horizon == 0 {
        return Err(SimError::BadParams("horizon must be at least 1".into()));
    }
    let lattice = &scenario.lattice;
    for (id, &cell) in params.sensors.iter().enumerate() {
        if !lattice.is_admissible(cell) {
            return Err(SimError::NotAdmissible { sensor: id, cell });
        }
    }
    let mut feed = match replay {
        Some(stream) => {
            if stream.n_sources != scenario.sources.len() {
                return Err(StreamError::SourceCount {
                    expected: scenario.sources.len(),
                    found: stream.n_sources,
                }
                .into());
            }
            SpawnFeed::replay(stream)
        }
        None => SpawnFeed::Poisson(SpawnGenerator::new(
            params.seed,
            scenario.sources.len(),
            scenario.target_speed,
        )),
    };

    let mut world = World::new(lattice, &scenario.sources);
    let mut sensors: Vec<SensorState> = params
        .sensors
        .iter()
        .enumerate()
        .map(|(id, &c)| SensorState::new(id, c))
        .collect();
    let mut planner_rng = stream_rng(params.seed, PLANNER_STREAM);
    let mut walk_rngs: Vec<_> = (0..sensors.len())
        .map(|i| stream_rng(params.seed, WALK_STREAM_BASE + i as u64))
        .collect();
    let mut observations: Vec<Vec<TargetObservation>> = vec![Vec::new(); sensors.len()];
    let mut spawns = SpawnStream::new(scenario.sources.len());
    let mut plan_trace = Vec::new();
    let mut metrics = Vec::with_capacity(params.steps as usize);
    let mut events = Vec::new();

    for step in 0..params.steps {
        feed.events_for(step, &scenario.sources, &mut events);
        spawns.events.extend_from_slice(&events);
        world.spawn(&events);
        world.advance();

        if params.strategy.plans() {
            let due = match params.replan {
                ReplanCadence::EveryStep => true,
                ReplanCadence::EveryHorizon => sensors.iter().any(SensorState::plan_done),
            };
            if due && !sensors.is_empty() {
                let inputs: Vec<SensorInput> = sensors
                    .iter()
                    .map(|s| SensorInput {
                        id: s.id,
                        cell: s.cell,
                        observations: observations[s.id].clone(),
                    })
                    .collect();
                let cells = |p: &MotionPlan| p.path.iter().map(|c| [c.col, c.row]).collect();
                if params.strategy == Strategy::Coordinated {
                    let round = coordinate_round(&inputs, table, params.horizon, &mut planner_rng)?;
                    for t in &round.trace {
                        plan_trace.push(PlanTraceRecord {
                            step,
                            sensor: t.sensor,
                            priority: Some(t.priority),
                            path: t.path.iter().map(|c| [c.col, c.row]).collect(),
                            objective_before: t.objective_before,
                            objective_after: t.objective_after,
                        });
                    }
                    for (s, p) in sensors.iter_mut().zip(round.plans) {
                        s.assign(p);
                    }
                } else {
                    let plans = plan_independently(&inputs, table, params.horizon)?;
                    for (s, p) in sensors.iter_mut().zip(plans) {
                        plan_trace.push(PlanTraceRecord {
                            step,
                            sensor: s.id,
                            priority: None,
                            path: cells(&p),
                            objective_before: p.objective,
                            objective_after: p.objective,
                        });
                        s.assign(p);
                    }
                }
            }
        }
        for (s, rng) in sensors.iter_mut().zip(walk_rngs.iter_mut()) {
            sensor_step(s, params.strategy, lattice, rng)?;
        }

        let cells: Vec<CellIndex> = sensors.iter().map(|s| s.cell).collect();
        let d = detect(lattice, &cells, &world)?;
        let in_zone = d.multiplicity.len();
        let m = StepMetrics {
            step,
            in_zone,
            detected_any: in_zone - d.hist[0],
            undetected: d.hist[0],
            hist: d.hist,
            pairs: d.pairs,
            multiplicity: d.multiplicity,
            population: world.population(),
            sensor_cells: cells,
        };
        check_step(step, &m)?;
        observations = d.observations;
        metrics.push(m);
    }

    let summary = ExperimentSummary::from_steps(
        params.strategy,
        scenario.target_speed,
        params.seed,
        sensors.len(),
        &metrics,
    );
    Ok(ExperimentOutcome {
        summary,
        steps: metrics,
        spawns,
        plan_trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn average_fraction_of_reference_rows() {
        assert!((average_fraction(32.0, 22.0) - 0.593).abs() < 1e-3);
        assert!((average_fraction(20.4, 21.1) - 0.49).abs() < 5e-3);
        assert_eq!(average_fraction(0.0, 0.0), 0.0);
    }

    #[test]
    fn plan_exhaustion_is_reported() {
        let lat = Lattice::new(
            crate::geometry::Zone {
                origin: Default::default(),
                width: 200.0,
                height: 200.0,
            },
            10.0,
            40.0,
        )
        .unwrap();
        let mut s = SensorState::new(3, CellIndex::new(10, 10));
        let mut rng = stream_rng(0, 0);
        assert!(matches!(
            sensor_step(&mut s, Strategy::Coordinated, &lat, &mut rng),
            Err(SimError::PlanExhausted(3))
        ));
        s.assign(MotionPlan {
            sensor: 3,
            start: s.cell,
            path: vec![CellIndex::new(11, 10)],
            node_values: vec![1.0],
            objective: 1.0,
        });
        assert_eq!(
            sensor_step(&mut s, Strategy::Uncoordinated, &lat, &mut rng).unwrap(),
            CellIndex::new(11, 10)
        );
        assert!(s.plan_done());
        assert!(sensor_step(&mut s, Strategy::Uncoordinated, &lat, &mut rng).is_err());
        assert_eq!(
            sensor_step(&mut s, Strategy::Stationary, &lat, &mut rng).unwrap(),
            CellIndex::new(11, 10)
        );
    }

    #[test]
    fn random_walk_uses_all_nine_moves() {
        let lat = Lattice::new(
            crate::geometry::Zone {
                origin: Default::default(),
                width: 2000.0,
                height: 2000.0,
            },
            10.0,
            20.0,
        )
        .unwrap();
        let mut s = SensorState::new(0, CellIndex::new(100, 100));
        let mut rng = stream_rng(5, WALK_STREAM_BASE);
        let mut seen = [0usize; 9];
        for _ in 0..10_000 {
            let before = s.cell;
            let after = sensor_step(&mut s, Strategy::RandomWalk, &lat, &mut rng).unwrap();
            let d = (
                after.col as i64 - before.col as i64,
                after.row as i64 - before.row as i64,
            );
            let k = crate::geometry::MOVES.iter().position(|&m| m == d).unwrap();
            seen[k] += 1;
        }
        assert!(seen.iter().all(|&c| c > 0), "{seen:?}");
    }
}
