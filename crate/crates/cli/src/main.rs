use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand, ValueEnum};

use fraclab::corpus::run_suite;
use fraclab::report::{counter_csv, emit_report, to_json_string, Format, ReportBundle};
use fraclab::scenario::{run_scenario, with_pool, RunOptions};
use fraclab_core::ineq_lab::{run_counterexample, CounterEngine, CounterFamily, CounterParams};

#[derive(Parser)]
#[command(name = "fraclab", version, about = "Grid checks of fractional Poincaré-Sobolev inequalities")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    /// Worker threads; overrides the scenario and the THREADS variable.
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Write zero run times so repeated runs are byte-identical.
    #[arg(long)]
    no_timing: bool,
}

impl Common {
    fn options(&self, force: bool, levels: Option<Vec<u32>>) -> RunOptions {
        RunOptions {
            threads: self.threads,
            seed: self.seed,
            force,
            timing: !self.no_timing,
            levels,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario file.
    Run {
        scenario: PathBuf,
        #[command(flatten)]
        common: Common,
        /// Lift the grid-size guards.
        #[arg(long)]
        force: bool,
    },
    /// Run a built-in suite.
    Suite {
        #[arg(value_enum)]
        name: SuiteName,
        #[command(flatten)]
        common: Common,
    },
    /// Tabulate a blow-up family over a range of truncation levels.
    Counterexample {
        #[arg(long)]
        family: CounterFamily,
        #[arg(long)]
        k_min: u32,
        #[arg(long)]
        k_max: u32,
        #[arg(long, value_enum, default_value = "radial")]
        engine: EngineKind,
        /// Grid depth for the grid engine.
        #[arg(long, default_value_t = 10)]
        depth: u32,
        #[arg(long, default_value_t = 2)]
        dim: usize,
        #[arg(long)]
        p: Option<f64>,
        #[arg(long)]
        q: Option<f64>,
        #[arg(long, default_value_t = 0.5)]
        delta: f64,
        #[arg(long, default_value_t = 0.5)]
        epsilon: f64,
        /// Allow p >= 1/(1-δ) in the fractional families.
        #[arg(long)]
        allow_large_p: bool,
        #[arg(long)]
        force: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Repeat a scenario's check at several depths.
    Converge {
        scenario: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        levels: Vec<u32>,
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        force: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SuiteName {
    Corpus,
}

#[derive(Clone, Copy, ValueEnum)]
enum EngineKind {
    Radial,
    Grid,
}

fn finish(bundle: &ReportBundle, common: &Common, default_out: Option<PathBuf>) -> Result<bool> {
    let out = common.out.clone().or(default_out);
    emit_report(bundle, common.format, out.as_deref())?;
    Ok(bundle.hard_failures() == 0)
}

fn execute(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run {
            scenario,
            common,
            force,
        } => {
            let text = std::fs::read_to_string(&scenario)?;
            let sc = fraclab::parse_scenario(&text)?;
            let bundle = run_scenario(&scenario, &common.options(force, None))?;
            finish(&bundle, &common, sc.output.map(PathBuf::from))
        }
        Command::Converge {
            scenario,
            levels,
            common,
            force,
        } => {
            let bundle = run_scenario(&scenario, &common.options(force, Some(levels)))?;
            finish(&bundle, &common, None)
        }
        Command::Suite { name, common } => match name {
            SuiteName::Corpus => {
                let opts = common.options(false, None);
                let suite = run_suite(&opts)?;
                finish(&suite.bundle(opts.seed.unwrap_or(0)), &common, None)
            }
        },
        Command::Counterexample {
            family,
            k_min,
            k_max,
            engine,
            depth,
            dim,
            p,
            q,
            delta,
            epsilon,
            allow_large_p,
            force,
            common,
        } => {
            let defaults = CounterParams::default();
            let classical_alpha = matches!(
                family,
                CounterFamily::AlphaClassical | CounterFamily::AlphaFractional
            );
            let prm = CounterParams {
                dim,
                p: p.unwrap_or(if classical_alpha { 1.0 } else { defaults.p }),
                q,
                delta,
                epsilon,
                allow_large_p,
                force,
            };
            let engine = match engine {
                EngineKind::Radial => CounterEngine::Radial,
                EngineKind::Grid => CounterEngine::Grid { depth },
            };
            let table = with_pool(common.threads, || {
                run_counterexample(family, k_min, k_max, &prm, engine)
            })??;
            let text = match common.format {
                Format::Csv => counter_csv(&table)?,
                Format::Json => to_json_string(&ReportBundle {
                    counterexamples: vec![table],
                    ..Default::default()
                })?,
            };
            match &common.out {
                Some(path) => std::fs::write(path, text)?,
                None => print!("{text}"),
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("one or more explicit-constant checks failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
