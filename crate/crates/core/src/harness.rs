//! The commands behind the `tstep` binary: stats precomputation, single
//! runs, record/replay and paired strategy comparisons.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use crate::config::{ConfigError, ResolvedScenario};
use crate::scenario::Scenario;
use crate::sim::{
    run_experiment, ExperimentOutcome, ExperimentSummary, SimError, SpawnStream, Strategy,
    StreamError,
};
use crate::stats::cache::{self, CacheError};
use crate::stats::{expected_zone_population, precompute_all, StatsError, StatsTable};

/// Column header of every summary table.
pub const CSV_HEADER: &str = "EN,NS,AD,ZD,AF,D1S,D2S,D3S,TV";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("stats cache {path}: {source}")]
    Cache { path: PathBuf, source: CacheError },
    #[error("spawn stream {path}: {source}")]
    Stream { path: PathBuf, source: StreamError },
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

impl HarnessError {
    /// 1 usage, 2 configuration or validation, 3 runtime.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Usage(_) => 1,
            HarnessError::Config(_) | HarnessError::Stats(_) => 2,
            HarnessError::Cache { source, .. } => match source {
                CacheError::Stale { .. } => 2,
                _ => 3,
            },
            HarnessError::Stream { source, .. } => match source {
                StreamError::SourceCount { .. } => 2,
                _ => 3,
            },
            HarnessError::Sim(e) => match e {
                SimError::FingerprintMismatch { .. }
                | SimError::NotAdmissible { .. }
                | SimError::BadParams(_) => 2,
                SimError::Stream(StreamError::SourceCount { .. }) => 2,
                _ => 3,
            },
            HarnessError::Io { .. } => 3,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Where the stats table of a scenario is cached when no path is given.
pub fn default_cache_path(scenario: &Scenario) -> PathBuf {
    PathBuf::from(".tstep-cache").join(format!("{}.stats", scenario.fingerprint().short()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CacheStatus {
    /// Loaded from a cache built for this exact scenario.
    Hit,
    /// No cache existed; built and saved.
    Built,
    /// The cache belonged to another scenario; rebuilt and overwritten.
    Rebuilt,
}

impl CacheStatus {
    pub fn label(self) -> &'static str {
        match self {
            CacheStatus::Hit => "hit",
            CacheStatus::Built => "built",
            CacheStatus::Rebuilt => "rebuilt",
        }
    }
}

/// Loads the cached table for `scenario`, building and saving it on a miss.
/// A cache from another scenario is an error unless `rebuild_stale` is set.
pub fn load_or_build_stats(
    scenario: &Scenario,
    path: &Path,
    rebuild_stale: bool,
) -> Result<(StatsTable, CacheStatus), HarnessError> {
    let status = match cache::load(path, scenario.fingerprint()) {
        Ok(table) => return Ok((table, CacheStatus::Hit)),
        Err(CacheError::Io(e)) if e.kind() == io::ErrorKind::NotFound => CacheStatus::Built,
        Err(CacheError::Stale { .. }) if rebuild_stale => CacheStatus::Rebuilt,
        Err(source) => {
            return Err(HarnessError::Cache {
                path: path.to_path_buf(),
                source,
            })
        }
    };
    let table = precompute_all(scenario)?;
    cache::save(&table, path).map_err(io_err(path))?;
    Ok((table, status))
}

/// Builds (or reuses) the stats cache and writes a short report of the
/// expected-detection field followed by the fully resolved scenario.
pub fn cmd_precompute<W: Write>(
    config: &crate::config::ScenarioConfig,
    cache_path: Option<&Path>,
    mut out: W,
) -> Result<CacheStatus, HarnessError> {
    let resolved = config.resolve()?;
    let scenario = &resolved.scenario;
    let path = cache_path
        .map(Path::to_path_buf)
        .unwrap_or_else(|| default_cache_path(scenario));
    let (table, status) = load_or_build_stats(scenario, &path, true)?;
    let lat = &scenario.lattice;
    let (min, mean, max) = table.detection_summary();
    let mut s = String::new();
    let _ = writeln!(s, "fingerprint {}", table.fingerprint().to_hex());
    let _ = writeln!(s, "cache       {} ({})", path.display(), status.label());
    let _ = writeln!(
        s,
        "cells       {} admissible of {}x{}",
        lat.admissible_count(),
        lat.n_cols(),
        lat.n_rows()
    );
    let _ = writeln!(s, "sources     {}", scenario.sources.len());
    let _ = writeln!(s, "d_hat       min {min:.4} mean {mean:.4} max {max:.4}");
    let _ = writeln!(
        s,
        "population  {:.2} expected in zone",
        expected_zone_population(scenario, scenario.quadrature.quadrature_n)
    );
    let _ = writeln!(s);
    s.push_str(&config.with_defaults()?.to_toml());
    out.write_all(s.as_bytes())
        .map_err(io_err(Path::new("<output>")))?;
    Ok(status)
}

/// One summary row in `CSV_HEADER` column order.
pub fn csv_row(label: &str, s: &ExperimentSummary) -> String {
    format!(
        "{label},{},{:.3},{:.3},{:.4},{:.3},{:.3},{:.3},{}",
        s.ns, s.ad, s.zd, s.af, s.d1s, s.d2s, s.d3s, s.tv
    )
}

/// Optional outputs of a single run.
#[derive(Debug, Clone, Default)]
pub struct RunOutputs {
    pub record: Option<PathBuf>,
    pub replay: Option<PathBuf>,
    pub step_log: Option<PathBuf>,
    pub plan_trace: Option<PathBuf>,
}

fn write_with<F>(path: &Path, f: F) -> Result<(), HarnessError>
where
    F: FnOnce(BufWriter<File>) -> io::Result<()>,
{
    let file = File::create(path).map_err(io_err(path))?;
    f(BufWriter::new(file)).map_err(io_err(path))
}

/// Runs one experiment and writes its summary row as CSV.
pub fn cmd_run<W: Write>(
    resolved: &ResolvedScenario,
    table: &StatsTable,
    outputs: &RunOutputs,
    mut out: W,
) -> Result<ExperimentOutcome, HarnessError> {
    let replay = match &outputs.replay {
        Some(path) => Some(
            SpawnStream::load(path).map_err(|source| HarnessError::Stream {
                path: path.clone(),
                source,
            })?,
        ),
        None => None,
    };
    let outcome = run_experiment(&resolved.scenario, table, &resolved.run, replay.as_ref())?;
    if let Some(path) = &outputs.record {
        outcome.spawns.save(path).map_err(io_err(path))?;
    }
    if let Some(path) = &outputs.step_log {
        write_with(path, |w| outcome.write_step_log(w))?;
    }
    if let Some(path) = &outputs.plan_trace {
        write_with(path, |w| outcome.write_plan_trace(w))?;
    }
    let text = format!(
        "{CSV_HEADER}\n{}\n",
        csv_row(resolved.run.strategy.label(), &outcome.summary)
    );
    out.write_all(text.as_bytes())
        .map_err(io_err(Path::new("<output>")))?;
    Ok(outcome)
}

/// Mean and sample standard deviation.
fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub strategy: Strategy,
    pub ns: usize,
    pub tv: f64,
    /// Across-seed mean of each per-run metric.
    pub mean: ExperimentSummary,
    /// Across-seed standard deviation, same fields as `mean`.
    pub sd: ExperimentSummary,
}

/// Paired per-seed differences `strategy - base`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedDifference {
    pub strategy: Strategy,
    pub d_af: Vec<f64>,
    pub d_d2s: Vec<f64>,
}

impl PairedDifference {
    pub fn af(&self) -> (f64, f64) {
        mean_sd(&self.d_af)
    }

    pub fn d2s(&self) -> (f64, f64) {
        mean_sd(&self.d_d2s)
    }

    fn frac(xs: &[f64], pred: impl Fn(f64) -> bool) -> f64 {
        xs.iter().filter(|&&x| pred(x)).count() as f64 / xs.len().max(1) as f64
    }

    /// Fraction of seeds with `ΔAF > 0` and with `ΔAF < 0`.
    pub fn af_signs(&self) -> (f64, f64) {
        (
            Self::frac(&self.d_af, |x| x > 0.0),
            Self::frac(&self.d_af, |x| x < 0.0),
        )
    }

    /// Fraction of seeds with `ΔD2S > 0` and with `ΔD2S < 0`.
    pub fn d2s_signs(&self) -> (f64, f64) {
        (
            Self::frac(&self.d_d2s, |x| x > 0.0),
            Self::frac(&self.d_d2s, |x| x < 0.0),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub seeds: Vec<u64>,
    pub steps: u32,
    /// Strategies in report order; the first is the base.
    pub strategies: Vec<Strategy>,
    /// `runs[i][k]`: strategy `i`, seed `k`.
    pub runs: Vec<Vec<ExperimentSummary>>,
    pub rows: Vec<ReportRow>,
    /// One per non-base strategy; empty for a single strategy.
    pub differences: Vec<PairedDifference>,
    /// SHA-256 of the spawn stream every strategy consumed, per seed.
    pub stream_checksums: Vec<String>,
}

impl ComparisonReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{CSV_HEADER}");
        for r in &self.rows {
            let _ = writeln!(s, "{}", csv_row(r.strategy.label(), &r.mean));
        }
        if !self.differences.is_empty() {
            let base = self.strategies[0].label();
            let _ = writeln!(s);
            let _ = writeln!(
                s,
                "EN,BASE,dAF,dAF_SD,dAF_POS,dAF_NEG,dD2S,dD2S_SD,dD2S_POS,dD2S_NEG"
            );
            for d in &self.differences {
                let (af, af_sd) = d.af();
                let (d2, d2_sd) = d.d2s();
                let (af_pos, af_neg) = d.af_signs();
                let (d2_pos, d2_neg) = d.d2s_signs();
                let _ = writeln!(
                    s,
                    "{},{base},{af:.4},{af_sd:.4},{af_pos:.2},{af_neg:.2},{d2:.3},{d2_sd:.3},{d2_pos:.2},{d2_neg:.2}",
                    d.strategy.label()
                );
            }
        }
        if self.seeds.len() > 1 {
            let _ = writeln!(s);
            let _ = writeln!(s, "EN,AD_SD,ZD_SD,AF_SD,D1S_SD,D2S_SD,D3S_SD");
            for r in &self.rows {
                let m = &r.sd;
                let _ = writeln!(
                    s,
                    "{},{:.3},{:.3},{:.4},{:.3},{:.3},{:.3}",
                    r.strategy.label(),
                    m.ad,
                    m.zd,
                    m.af,
                    m.d1s,
                    m.d2s,
                    m.d3s
                );
            }
        }
        let _ = writeln!(s);
        let _ = writeln!(
            s,
            "# base {} | {} seeds | {} steps",
            self.strategies[0].label(),
            self.seeds.len(),
            self.steps
        );
        for (seed, sum) in self.seeds.iter().zip(&self.stream_checksums) {
            let _ = writeln!(s, "# seed {seed} stream sha256 {sum}");
        }
        s
    }
}

fn aggregate(strategy: Strategy, runs: &[ExperimentSummary]) -> ReportRow {
    let col = |f: fn(&ExperimentSummary) -> f64| mean_sd(&runs.iter().map(f).collect::<Vec<_>>());
    let (ad, ad_sd) = col(|r| r.ad);
    let (zd, zd_sd) = col(|r| r.zd);
    let (af, af_sd) = col(|r| r.af);
    let (d1, d1_sd) = col(|r| r.d1s);
    let (d2, d2_sd) = col(|r| r.d2s);
    let (d3, d3_sd) = col(|r| r.d3s);
    let (d4, d4_sd) = col(|r| r.d4s_plus);
    let (j, j_sd) = col(|r| r.j as f64);
    let first = &runs[0];
    let summary = |ad, zd, af, d1s, d2s, d3s, d4s_plus, j: f64| ExperimentSummary {
        strategy,
        ns: first.ns,
        tv: first.tv,
        steps: first.steps,
        seed: first.seed,
        j: j.round() as u64,
        ad,
        zd,
        af,
        d1s,
        d2s,
        d3s,
        d4s_plus,
    };
    ReportRow {
        strategy,
        ns: first.ns,
        tv: first.tv,
        mean: summary(ad, zd, af, d1, d2, d3, d4, j),
        sd: summary(ad_sd, zd_sd, af_sd, d1_sd, d2_sd, d3_sd, d4_sd, j_sd),
    }
}

/// Runs every strategy on every seed. Per seed, the first strategy draws
/// fresh spawns and records them; every other strategy replays that stream.
pub fn cmd_compare(
    resolved: &ResolvedScenario,
    table: &StatsTable,
    strategies: &[Strategy],
    seeds: &[u64],
) -> Result<ComparisonReport, HarnessError> {
    if strategies.is_empty() {
        return Err(HarnessError::Usage(
            "compare needs at least one strategy".into(),
        ));
    }
    if seeds.is_empty() {
        return Err(HarnessError::Usage(
            "compare needs at least one seed".into(),
        ));
    }
    let per_seed: Vec<(Vec<ExperimentSummary>, String)> = seeds
        .par_iter()
        .map(|&seed| -> Result<_, HarnessError> {
            let params = |strategy| {
                let mut p = resolved.run.clone();
                p.strategy = strategy;
                p.seed = seed;
                p
            };
            let base = run_experiment(&resolved.scenario, table, &params(strategies[0]), None)?;
            let checksum = base.spawns.checksum();
            let mut summaries = vec![base.summary];
            for &s in &strategies[1..] {
                let o = run_experiment(&resolved.scenario, table, &params(s), Some(&base.spawns))?;
                if o.spawns.checksum() != checksum {
                    return Err(SimError::Invariant {
                        step: 0,
                        what: format!("{s} did not consume the base spawn stream of seed {seed}"),
                    }
                    .into());
                }
                summaries.push(o.summary);
            }
            Ok((summaries, checksum))
        })
        .collect::<Result<_, _>>()?;

    let runs: Vec<Vec<ExperimentSummary>> = (0..strategies.len())
        .map(|i| per_seed.iter().map(|(s, _)| s[i].clone()).collect())
        .collect();
    let rows = strategies
        .iter()
        .zip(&runs)
        .map(|(&s, r)| aggregate(s, r))
        .collect();
    let differences = strategies
        .iter()
        .zip(&runs)
        .skip(1)
        .map(|(&s, r)| PairedDifference {
            strategy: s,
            d_af: r.iter().zip(&runs[0]).map(|(x, b)| x.af - b.af).collect(),
            d_d2s: r.iter().zip(&runs[0]).map(|(x, b)| x.d2s - b.d2s).collect(),
        })
        .collect();
    Ok(ComparisonReport {
        seeds: seeds.to_vec(),
        steps: resolved.run.steps,
        strategies: strategies.to_vec(),
        runs,
        rows,
        differences,
        stream_checksums: per_seed.into_iter().map(|(_, c)| c).collect(),
    })
}
