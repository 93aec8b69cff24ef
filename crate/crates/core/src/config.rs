//! Scenario files.
//!
//! A scenario is a TOML document. Lengths are in zone units, times in
//! simulation steps. Every section except `[[sources]]` may be omitted and
//! falls back to the defaults below; unknown keys are rejected.
//!
//! ```toml
//! [zone]
//! origin = [0.0, 0.0]     # lower-left corner
//! width = 400.0
//! height = 300.0
//!
//! [lattice]
//! cell_size = 10.0
//! fov_side = 80.0         # side of the square field of view
//!
//! [targets]
//! speed = 10.0            # units per step
//! arrival_rate = 0.3      # targets per step, for sources without `rate`
//!
//! [[sources]]
//! position = [100.0, -20.0]
//! facing = "north"        # half-plane the targets enter: north|south|east|west
//! # rate = 0.3
//!
//! [sensors]
//! count = 10
//! # initial_cells = [[12, 9], ...]   # [col, row]; default spreads sensors on a grid
//!
//! [run]
//! strategy = "t-step-coordinated"
//! horizon = 3             # planning depth T, steps
//! steps = 150
//! replan = "every-horizon"
//! seed = 1
//!
//! [stats]
//! quadrature_n = 4096     # takeoff angles per (cell, source)
//! bin_width = 0.1         # steps
//! max_bin_mass = 0.00390625
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{CellIndex, Facing, Lattice, Source, Vec2, Zone};
use crate::scenario::{QuadratureParams, Scenario};
use crate::sim::{ReplanCadence, RunParams, Strategy};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read scenario file {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed scenario: {0}")]
    Syntax(String),
    #[error("invalid `{key}`: {message}")]
    Invalid { key: String, message: String },
}

fn invalid(key: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZoneConfig {
    #[serde(default)]
    pub origin: [f64; 2],
    pub width: f64,
    pub height: f64,
}

impl Default for ZoneConfig {
    fn default() -> Self {
        Self {
            origin: [0.0, 0.0],
            width: 400.0,
            height: 300.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LatticeConfig {
    pub cell_size: f64,
    pub fov_side: f64,
}

impl Default for LatticeConfig {
    fn default() -> Self {
        Self {
            cell_size: 10.0,
            fov_side: 80.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TargetsConfig {
    pub speed: f64,
    pub arrival_rate: f64,
}

impl Default for TargetsConfig {
    fn default() -> Self {
        Self {
            speed: 10.0,
            arrival_rate: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    pub position: [f64; 2],
    pub facing: Facing,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SensorsConfig {
    pub count: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial_cells: Option<Vec<[usize; 2]>>,
}

impl Default for SensorsConfig {
    fn default() -> Self {
        Self {
            count: 10,
            initial_cells: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub strategy: Strategy,
    pub horizon: usize,
    pub steps: u32,
    pub replan: ReplanCadence,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::Coordinated,
            horizon: 3,
            steps: 150,
            replan: ReplanCadence::EveryHorizon,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StatsConfig {
    pub quadrature_n: usize,
    pub bin_width: f64,
    pub max_bin_mass: f64,
}

impl Default for StatsConfig {
    fn default() -> Self {
        let q = QuadratureParams::default();
        Self {
            quadrature_n: q.quadrature_n,
            bin_width: q.bin_width,
            max_bin_mass: q.max_bin_mass,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub zone: ZoneConfig,
    #[serde(default)]
    pub lattice: LatticeConfig,
    #[serde(default)]
    pub targets: TargetsConfig,
    pub sources: Vec<SourceConfig>,
    #[serde(default)]
    pub sensors: SensorsConfig,
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default)]
    pub stats: StatsConfig,
}

/// A checked scenario: the static world plus everything a run needs.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedScenario {
    pub scenario: Scenario,
    pub run: RunParams,
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Syntax(e.to_string().trim_end().to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario config always serialises")
    }

    /// The same config with every default written out: source rates and
    /// initial sensor cells included.
    pub fn with_defaults(&self) -> Result<Self, ConfigError> {
        let resolved = self.resolve()?;
        let mut out = self.clone();
        for s in &mut out.sources {
            s.rate.get_or_insert(self.targets.arrival_rate);
        }
        out.sensors.initial_cells = Some(
            resolved
                .run
                .sensors
                .iter()
                .map(|c| [c.col, c.row])
                .collect(),
        );
        Ok(out)
    }

    pub fn resolve(&self) -> Result<ResolvedScenario, ConfigError> {
        let z = &self.zone;
        for (key, v) in [("zone.width", z.width), ("zone.height", z.height)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(key, format!("must be a positive length, got {v}")));
            }
        }
        if !z.origin.iter().all(|v| v.is_finite()) {
            return Err(invalid("zone.origin", "must be finite"));
        }
        let l = &self.lattice;
        if !(l.cell_size.is_finite() && l.cell_size > 0.0) {
            return Err(invalid(
                "lattice.cell_size",
                format!("must be a positive length, got {}", l.cell_size),
            ));
        }
        if !(l.fov_side.is_finite() && l.fov_side >= l.cell_size) {
            return Err(invalid(
                "lattice.fov_side",
                format!(
                    "`lattice.fov_side` ({}) must be at least `lattice.cell_size` ({})",
                    l.fov_side, l.cell_size
                ),
            ));
        }
        let zone = Zone {
            origin: Vec2::new(z.origin[0], z.origin[1]),
            width: z.width,
            height: z.height,
        };
        let lattice = Lattice::new(zone, l.cell_size, l.fov_side)
            .map_err(|e| invalid("lattice.cell_size", e.to_string()))?;
        if lattice.admissible_count() == 0 {
            return Err(invalid(
                "lattice.fov_side",
                format!("a {} FOV square fits nowhere inside the zone", l.fov_side),
            ));
        }

        let t = &self.targets;
        if !(t.speed.is_finite() && t.speed > 0.0) {
            return Err(invalid(
                "targets.speed",
                format!("must be positive, got {}", t.speed),
            ));
        }
        if !(t.arrival_rate.is_finite() && t.arrival_rate >= 0.0) {
            return Err(invalid(
                "targets.arrival_rate",
                format!("must be non-negative, got {}", t.arrival_rate),
            ));
        }
        let mut sources = Vec::with_capacity(self.sources.len());
        for (i, s) in self.sources.iter().enumerate() {
            let position = Vec2::new(s.position[0], s.position[1]);
            let r = zone.rect();
            let strictly_outside = position.x < r.min.x
                || position.x > r.max.x
                || position.y < r.min.y
                || position.y > r.max.y;
            if !(position.x.is_finite() && position.y.is_finite()) || !strictly_outside {
                return Err(invalid(
                    format!("sources[{i}].position"),
                    "must lie strictly outside the zone",
                ));
            }
            let rate = s.rate.unwrap_or(t.arrival_rate);
            if !(rate.is_finite() && rate >= 0.0) {
                return Err(invalid(
                    format!("sources[{i}].rate"),
                    format!("must be non-negative, got {rate}"),
                ));
            }
            sources.push(Source {
                position,
                facing: s.facing,
                rate,
            });
        }

        let st = &self.stats;
        if st.quadrature_n < 2 {
            return Err(invalid("stats.quadrature_n", "must be at least 2"));
        }
        if !(st.bin_width.is_finite() && st.bin_width > 0.0) {
            return Err(invalid("stats.bin_width", "must be positive"));
        }
        if !(st.max_bin_mass > 0.0 && st.max_bin_mass <= 1.0) {
            return Err(invalid("stats.max_bin_mass", "must lie in (0, 1]"));
        }

        let run = &self.run;
        if run.horizon == 0 {
            return Err(invalid("run.horizon", "must be at least 1"));
        }
        if run.steps == 0 {
            return Err(invalid("run.steps", "must be at least 1"));
        }
        let sensors = match &self.sensors.initial_cells {
            None => lattice.spread_cells(self.sensors.count),
            Some(cells) => {
                if cells.len() != self.sensors.count {
                    return Err(invalid(
                        "sensors.initial_cells",
                        format!(
                            "lists {} cells but `sensors.count` is {}",
                            cells.len(),
                            self.sensors.count
                        ),
                    ));
                }
                let mut out = Vec::with_capacity(cells.len());
                for (i, &[col, row]) in cells.iter().enumerate() {
                    let c = CellIndex::new(col, row);
                    if !lattice.is_admissible(c) {
                        return Err(invalid(
                            format!("sensors.initial_cells[{i}]"),
                            format!("cell {c} is not admissible"),
                        ));
                    }
                    out.push(c);
                }
                out
            }
        };

        Ok(ResolvedScenario {
            scenario: Scenario {
                lattice,
                sources,
                target_speed: t.speed,
                quadrature: QuadratureParams {
                    quadrature_n: st.quadrature_n,
                    bin_width: st.bin_width,
                    max_bin_mass: st.max_bin_mass,
                },
            },
            run: RunParams {
                strategy: run.strategy,
                horizon: run.horizon,
                steps: run.steps,
                replan: run.replan,
                seed: run.seed,
                sensors,
            },
        })
    }
}
