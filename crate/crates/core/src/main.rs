use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use tstep::config::{ResolvedScenario, ScenarioConfig};
use tstep::harness::{
    cmd_compare, cmd_precompute, cmd_run, default_cache_path, load_or_build_stats, HarnessError,
    RunOutputs,
};
use tstep::sim::{ReplanCadence, Strategy};
use tstep::stats::StatsTable;

/// Multi-sensor surveillance simulator with T-step-ahead planning.
#[derive(Debug, Parser)]
#[command(name = "tstep", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build the per-cell statistics cache and summarise it.
    Precompute {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Cache file to write (same as --stats-cache).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one experiment and print its summary row.
    Run {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[command(flatten)]
        overrides: Overrides,
        #[command(flatten)]
        outputs: OutputArgs,
        /// Record the spawn stream to this file.
        #[arg(long)]
        record: Option<PathBuf>,
        /// Replay spawns from a recorded stream instead of drawing them.
        #[arg(long)]
        replay: Option<PathBuf>,
    },
    /// Run one experiment on a recorded spawn stream.
    Replay {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[command(flatten)]
        overrides: Overrides,
        #[command(flatten)]
        outputs: OutputArgs,
        /// Recorded spawn stream.
        #[arg(long)]
        replay: PathBuf,
    },
    /// Compare strategies over several seeds on paired spawn streams.
    Compare {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[command(flatten)]
        overrides: Overrides,
        /// Comma-separated strategies; the first one records the streams.
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "t-step-coordinated,t-step-uncoordinated"
        )]
        strategies: Vec<Strategy>,
        /// Strategy whose runs record the spawn streams (default: first listed).
        #[arg(long)]
        base: Option<Strategy>,
        /// Number of seeds, counting up from --seed.
        #[arg(long, default_value_t = 20)]
        seeds: u64,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct ScenarioArgs {
    /// Scenario file (TOML).
    #[arg(long)]
    scenario: PathBuf,
    /// Stats cache file (default: .tstep-cache/<fingerprint>.stats).
    #[arg(long)]
    stats_cache: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct Overrides {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    strategy: Option<Strategy>,
    #[arg(long)]
    steps: Option<u32>,
    /// Planning depth T.
    #[arg(long)]
    horizon: Option<usize>,
    /// every-horizon or every-step.
    #[arg(long)]
    replan: Option<ReplanCadence>,
    /// Number of sensors; replaces the configured initial cells by an even spread.
    #[arg(long)]
    sensors: Option<usize>,
}

#[derive(Debug, Args)]
struct OutputArgs {
    /// Write the summary CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write a JSONL step log.
    #[arg(long)]
    step_log: Option<PathBuf>,
    /// Write a JSONL trace of every planning round.
    #[arg(long)]
    plan_trace: Option<PathBuf>,
}

fn load_config(
    args: &ScenarioArgs,
    overrides: Option<&Overrides>,
) -> Result<ScenarioConfig, HarnessError> {
    let mut config = ScenarioConfig::load(&args.scenario)?;
    if let Some(o) = overrides {
        let run = &mut config.run;
        if let Some(v) = o.seed {
            run.seed = v;
        }
        if let Some(v) = o.strategy {
            run.strategy = v;
        }
        if let Some(v) = o.steps {
            run.steps = v;
        }
        if let Some(v) = o.horizon {
            run.horizon = v;
        }
        if let Some(v) = o.replan {
            run.replan = v;
        }
        if let Some(n) = o.sensors {
            config.sensors.count = n;
            config.sensors.initial_cells = None;
        }
    }
    Ok(config)
}

fn stats_for(args: &ScenarioArgs, resolved: &ResolvedScenario) -> Result<StatsTable, HarnessError> {
    let path = args
        .stats_cache
        .clone()
        .unwrap_or_else(|| default_cache_path(&resolved.scenario));
    let (table, status) = load_or_build_stats(&resolved.scenario, &path, false)?;
    eprintln!("stats cache {} ({})", path.display(), status.label());
    Ok(table)
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>, HarnessError> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|source| {
            HarnessError::Io {
                path: p.to_path_buf(),
                source,
            }
        })?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Precompute { scenario, out } => {
            let config = load_config(&scenario, None)?;
            let path = out.or(scenario.stats_cache);
            cmd_precompute(&config, path.as_deref(), io::stdout().lock())?;
        }
        Command::Run {
            scenario,
            overrides,
            outputs,
            record,
            replay,
        } => {
            let resolved = load_config(&scenario, Some(&overrides))?.resolve()?;
            let table = stats_for(&scenario, &resolved)?;
            let opts = RunOutputs {
                record,
                replay,
                step_log: outputs.step_log,
                plan_trace: outputs.plan_trace,
            };
            cmd_run(&resolved, &table, &opts, output(outputs.out.as_deref())?)?;
        }
        Command::Replay {
            scenario,
            overrides,
            outputs,
            replay,
        } => {
            let resolved = load_config(&scenario, Some(&overrides))?.resolve()?;
            let table = stats_for(&scenario, &resolved)?;
            let opts = RunOutputs {
                record: None,
                replay: Some(replay),
                step_log: outputs.step_log,
                plan_trace: outputs.plan_trace,
            };
            cmd_run(&resolved, &table, &opts, output(outputs.out.as_deref())?)?;
        }
        Command::Compare {
            scenario,
            overrides,
            mut strategies,
            base,
            seeds,
            out,
        } => {
            let resolved = load_config(&scenario, Some(&overrides))?.resolve()?;
            if let Some(b) = base {
                strategies.retain(|&s| s != b);
                strategies.insert(0, b);
            }
            let table = stats_for(&scenario, &resolved)?;
            let first = resolved.run.seed;
            let seeds: Vec<u64> = (0..seeds).map(|k| first + k).collect();
            let report = cmd_compare(&resolved, &table, &strategies, &seeds)?;
            let mut w = output(out.as_deref())?;
            w.write_all(report.to_csv().as_bytes())
                .and_then(|_| w.flush())
                .map_err(|source| HarnessError::Io {
                    path: out.unwrap_or_else(|| "<stdout>".into()),
                    source,
                })?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
