use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use siws::mitigation::Strategy;
use siws::report::{self, MitigationRequest};
use siws::scenario::{load_scenario, Scenario};
use siws::{Error, Result};

/// Simulate and analyze networked multi-virus epidemics with a shared resource.
#[derive(Parser)]
#[command(name = "siws", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Thresholds, coexistence certificate and equilibria as JSON.
    Analyze {
        scenario: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Integrate the scenario; writes <name>.csv, <name>.summary.json and optionally <name>.svg.
    Simulate {
        scenario: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Equilibria with multi-start uniqueness evidence as JSON.
    Equilibrium {
        scenario: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Plan new healing rates; writes <name>_<strategy>.plan.json and the derived scenario.
    Mitigate {
        scenario: PathBuf,
        #[arg(long, value_enum)]
        strategy: StrategyArg,
        /// Virus to eradicate by healing-rate boosting (one-based).
        #[arg(long, default_value_t = 2)]
        virus: usize,
        /// Uniform slack added to every boosted healing rate.
        #[arg(long, default_value_t = 0.0)]
        epsilon: f64,
        /// Relative slack above the vaccine bound.
        #[arg(long, default_value_t = siws::mitigation::DEFAULT_MARGIN)]
        margin: f64,
        /// Keep virus-2 rates that already exceed the vaccine bound.
        #[arg(long)]
        keep_satisfied: bool,
        /// Time at which the derived scenario switches to the new rates.
        #[arg(long, default_value_t = siws::stockholm::SWITCH_TIME)]
        event_time: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Analyze and simulate several scenarios concurrently; one JSON keyed by scenario name.
    Sweep {
        #[arg(required = true)]
        scenarios: Vec<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    /// Output file (analyze, equilibrium, sweep) or directory (simulate, mitigate).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the scenario horizon.
    #[arg(long)]
    t_end: Option<f64>,
    /// Override both integrator tolerances.
    #[arg(long)]
    tol: Option<f64>,
    /// Override the multi-start seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output formats; repeatable.
    #[arg(long, value_enum)]
    format: Vec<Format>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
    Svg,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    HealBoost,
    Vaccine,
}

impl Common {
    fn load(&self, path: &Path) -> Result<Scenario> {
        let mut s = load_scenario(path)?;
        if let Some(t) = self.t_end {
            s.t_end = t;
        }
        if let Some(tol) = self.tol {
            s.integrator.atol = tol;
            s.integrator.rtol = tol;
        }
        if let Some(seed) = self.seed {
            s.seed = seed;
        }
        s.validate()?;
        Ok(s)
    }

    fn json_only(&self) -> Result<()> {
        if self.format.iter().any(|f| *f != Format::Json) {
            return Err(Error::Validation("this command only writes json".into()));
        }
        Ok(())
    }

    fn out_dir(&self) -> Result<PathBuf> {
        let dir = self.out.clone().unwrap_or_else(|| PathBuf::from("."));
        std::fs::create_dir_all(&dir)?;
        Ok(dir)
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Analyze { scenario, common } => {
            common.json_only()?;
            let s = common.load(&scenario)?;
            emit(common.out.as_deref(), &report::to_json(&report::analyze(&s)?)?)
        }
        Command::Equilibrium { scenario, common } => {
            common.json_only()?;
            let s = common.load(&scenario)?;
            emit(common.out.as_deref(), &report::to_json(&report::equilibrium_report(&s, s.seed)?)?)
        }
        Command::Simulate { scenario, common } => {
            let s = common.load(&scenario)?;
            let formats =
                if common.format.is_empty() { vec![Format::Csv, Format::Json] } else { common.format.clone() };
            let dir = common.out_dir()?;
            let sim = report::simulate(&s)?;
            for f in formats {
                match f {
                    Format::Csv => std::fs::write(dir.join(format!("{}.csv", s.name)), sim.to_csv())?,
                    Format::Json => std::fs::write(
                        dir.join(format!("{}.summary.json", s.name)),
                        report::to_json(&sim.summary(&s.name))?,
                    )?,
                    Format::Svg => std::fs::write(dir.join(format!("{}.svg", s.name)), sim.to_svg(&s.name))?,
                }
            }
            Ok(())
        }
        Command::Mitigate { scenario, strategy, virus, epsilon, margin, keep_satisfied, event_time, common } => {
            common.json_only()?;
            let s = common.load(&scenario)?;
            if virus == 0 {
                return Err(Error::Validation("virus indices start at 1".into()));
            }
            let req = MitigationRequest {
                strategy: match strategy {
                    StrategyArg::HealBoost => Strategy::HealBoost,
                    StrategyArg::Vaccine => Strategy::VirusAsVaccine,
                },
                virus: virus - 1,
                epsilon,
                margin,
                keep_satisfied,
                event_time,
            };
            let (output, derived) = report::mitigate(&s, &req)?;
            let dir = common.out_dir()?;
            std::fs::write(dir.join(format!("{}.plan.json", derived.name)), report::to_json(&output)?)?;
            siws::scenario::save_scenario(&derived, &dir.join(format!("{}.toml", derived.name)))
        }
        Command::Sweep { scenarios, common } => {
            common.json_only()?;
            let loaded = scenarios.iter().map(|p| common.load(p)).collect::<Result<Vec<_>>>()?;
            emit(common.out.as_deref(), &report::to_json(&report::sweep(&loaded)?)?)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("siws: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
