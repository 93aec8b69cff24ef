#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::OnceLock;

use tstep::config::{ResolvedScenario, ScenarioConfig};
use tstep::geometry::{Facing, Lattice, Source, Vec2, Zone};
use tstep::scenario::{QuadratureParams, Scenario};
use tstep::stats::{precompute_all, StatsTable};

pub fn default_scenario_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios/default.toml")
}

pub fn default_config() -> ScenarioConfig {
    ScenarioConfig::load(&default_scenario_path()).expect("shipped scenario parses")
}

pub fn default_resolved() -> &'static ResolvedScenario {
    static R: OnceLock<ResolvedScenario> = OnceLock::new();
    R.get_or_init(|| {
        default_config()
            .resolve()
            .expect("shipped scenario is valid")
    })
}

pub fn default_table() -> &'static StatsTable {
    static T: OnceLock<StatsTable> = OnceLock::new();
    T.get_or_init(|| precompute_all(&default_resolved().scenario).expect("precompute"))
}

/// A 200 x 160 zone with one source per side.
pub fn small_scenario(fov_side: f64, quadrature_n: usize) -> Scenario {
    let lattice = Lattice::new(
        Zone {
            origin: Vec2::default(),
            width: 200.0,
            height: 160.0,
        },
        10.0,
        fov_side,
    )
    .unwrap();
    let src = |x, y, facing| Source {
        position: Vec2::new(x, y),
        facing,
        rate: 0.3,
    };
    Scenario {
        lattice,
        sources: vec![
            src(100.0, -15.0, Facing::North),
            src(100.0, 175.0, Facing::South),
            src(-15.0, 80.0, Facing::East),
            src(215.0, 80.0, Facing::West),
        ],
        target_speed: 10.0,
        quadrature: QuadratureParams {
            quadrature_n,
            ..QuadratureParams::default()
        },
    }
}

pub fn small_table() -> &'static (Scenario, StatsTable) {
    static T: OnceLock<(Scenario, StatsTable)> = OnceLock::new();
    T.get_or_init(|| {
        let sc = small_scenario(40.0, 1024);
        let t = precompute_all(&sc).unwrap();
        (sc, t)
    })
}

use rand::Rng;
use tstep::estimator::{build_value_lattice, TargetObservation, ValueLattice};
use tstep::geometry::{neighbors9, overlap_fraction, CellIndex};
use tstep::planner::{coordinate_round, SensorInput};

/// Every path of `values.horizon()` moves from the planning cell, by plain
/// recursion over the nine-connected neighbourhood.
pub fn all_paths(values: &ValueLattice, lattice: &Lattice) -> Vec<Vec<CellIndex>> {
    fn rec(
        at: CellIndex,
        t: usize,
        values: &ValueLattice,
        lattice: &Lattice,
        cur: &mut Vec<CellIndex>,
        out: &mut Vec<Vec<CellIndex>>,
    ) {
        if t > values.horizon() {
            out.push(cur.clone());
            return;
        }
        for n in neighbors9(at, lattice) {
            if values.get(n, t).is_some() {
                cur.push(n);
                rec(n, t + 1, values, lattice, cur, out);
                cur.pop();
            }
        }
    }
    let mut out = Vec::new();
    rec(
        values.center(),
        1,
        values,
        lattice,
        &mut Vec::new(),
        &mut out,
    );
    out
}

pub fn path_sum(values: &ValueLattice, path: &[CellIndex]) -> f64 {
    path.iter()
        .enumerate()
        .fold(0.0, |acc, (i, &c)| acc + values.get(c, i + 1).unwrap())
}

pub fn brute_force_best(values: &ValueLattice, lattice: &Lattice) -> f64 {
    all_paths(values, lattice)
        .iter()
        .map(|p| path_sum(values, p))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// A random value lattice with a few exact ties and zeros mixed in.
pub fn random_value_lattice<R: Rng>(
    rng: &mut R,
    lattice: &Lattice,
    horizon: usize,
) -> ValueLattice {
    let (c0, c1) = lattice.admissible_cols();
    let (r0, r1) = lattice.admissible_rows();
    let center = CellIndex::new(rng.random_range(c0..=c1), rng.random_range(r0..=r1));
    let mut v = ValueLattice::empty(center, horizon);
    let h = horizon as i64;
    for t in 1..=horizon {
        for dr in -h..=h {
            for dc in -h..=h {
                let Some(c) = center.offset(dc, dr) else {
                    continue;
                };
                if c.cheby(center) <= t && lattice.is_admissible(c) {
                    let x = match rng.random_range(0..10) {
                        0 => 0.0,
                        1 => 1.0,
                        _ => rng.random::<f64>() * 5.0,
                    };
                    v.set(c, t, x);
                }
            }
        }
    }
    v
}

/// Targets near `cell`, moving at `speed` in random directions.
pub fn random_observations<R: Rng>(
    rng: &mut R,
    lattice: &Lattice,
    cell: CellIndex,
    n: usize,
    speed: f64,
) -> Vec<TargetObservation> {
    let c = lattice.cell_center(cell).unwrap();
    let r = lattice.fov_side();
    (0..n)
        .map(|_| {
            let a = rng.random::<f64>() * std::f64::consts::TAU;
            TargetObservation {
                position: Vec2::new(c.x + rng.random_range(-r..r), c.y + rng.random_range(-r..r)),
                velocity: Vec2::new(a.cos(), a.sin()) * speed,
            }
        })
        .collect()
}

/// One random two-sensor coordination instance and its joint-space optimum.
pub struct JointInstance {
    pub prioritized: f64,
    pub joint: f64,
}

/// Runs a coordination round for two nearby sensors, then searches all
/// pairs of paths for the best joint objective
/// `Σ_t vA(a_t) + vB(b_t)·(1 − κ(a_t, b_t))`, A being the sensor the round
/// ranked first.
pub fn joint_instance<R: Rng>(rng: &mut R, horizon: usize) -> JointInstance {
    let (sc, table) = small_table();
    let lat = &sc.lattice;
    let (c0, c1) = lat.admissible_cols();
    let (r0, r1) = lat.admissible_rows();
    let a = CellIndex::new(rng.random_range(c0..=c1), rng.random_range(r0..=r1));
    let b = loop {
        let dc = rng.random_range(-3i64..=3);
        let dr = rng.random_range(-3i64..=3);
        if let Some(b) = a.offset(dc, dr).filter(|&b| lat.is_admissible(b)) {
            break b;
        }
    };
    let inputs: Vec<SensorInput> = [a, b]
        .iter()
        .enumerate()
        .map(|(id, &cell)| {
            let n = rng.random_range(0..6);
            SensorInput {
                id,
                cell,
                observations: random_observations(rng, lat, cell, n, sc.target_speed),
            }
        })
        .collect();
    let round = coordinate_round(&inputs, table, horizon, rng).unwrap();
    let first = round.priority.order[0];
    let second = round.priority.order[1];
    let values: Vec<ValueLattice> = inputs
        .iter()
        .map(|s| build_value_lattice(s.cell, &s.observations, horizon, table).unwrap())
        .collect();
    let joint_value = |pa: &[CellIndex], pb: &[CellIndex]| {
        let mut total = 0.0;
        for t in 0..horizon {
            let k = overlap_fraction(pa[t], pb[t], lat).unwrap();
            total += values[first].get(pa[t], t + 1).unwrap();
            total += values[second].get(pb[t], t + 1).unwrap() * (1.0 - k);
        }
        total
    };
    let prioritized = joint_value(&round.plans[first].path, &round.plans[second].path);
    let pa = all_paths(&values[first], lat);
    let pb = all_paths(&values[second], lat);
    let mut joint = f64::NEG_INFINITY;
    for x in &pa {
        for y in &pb {
            joint = joint.max(joint_value(x, y));
        }
    }
    JointInstance { prioritized, joint }
}
