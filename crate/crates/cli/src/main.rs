use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use nemflex::model::SystemState;
use nemflex::policies::PolicyKind;
use nemflex_cli::commands::{self, SynthSettings};
use nemflex_cli::{CliError, CliResult, LoadedConfig, RunConfig};

/// Battery and flexible-demand co-optimization under NEM tariffs with a demand charge.
#[derive(Parser, Debug)]
#[command(name = "nemflex", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Options shared by the commands that read a run configuration.
#[derive(clap::Args, Debug)]
struct ConfigArgs {
    /// Run configuration (TOML, or JSON with a .json extension); built-in defaults when omitted
    #[arg(long)]
    config: Option<PathBuf>,

    /// Overrides execution.seed
    #[arg(long)]
    seed: Option<u64>,

    /// Overrides execution.rollouts
    #[arg(long)]
    rollouts: Option<usize>,

    /// Use the literal +ρs deficit branch in the threshold policy
    #[arg(long)]
    strict_paper_threshold: bool,

    /// Scenario label; the first scenario when omitted
    #[arg(long)]
    scenario: Option<String>,
}

impl ConfigArgs {
    fn load(&self) -> CliResult<LoadedConfig> {
        let mut loaded = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => LoadedConfig::new(RunConfig::default())?,
        };
        let x = &mut loaded.config.execution;
        if let Some(s) = self.seed {
            x.seed = s;
        }
        if let Some(r) = self.rollouts {
            x.rollouts = r;
        }
        x.strict_paper_threshold |= self.strict_paper_threshold;
        loaded.config.validate()?;
        Ok(loaded)
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit a generation chain to an hourly CSV
    FitGen {
        csv: PathBuf,
        #[arg(long, default_value_t = 8)]
        levels: usize,
        #[arg(long, default_value_t = 1.0)]
        smoothing: f64,
        /// One transition matrix per hour of day
        #[arg(long)]
        per_step: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve the DP and write value and policy tables
    Solve {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Output directory
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the structural checks on solved tables
    Check { tables: PathBuf },
    /// Compare policies and the perfect-foresight oracle over the scenarios
    Compare {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Restrict to these policies (repeatable)
        #[arg(long = "policy")]
        policies: Vec<PolicyKind>,
        /// Output directory
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate one policy along one sampled generation path
    Trace {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        policy: PolicyKind,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve a deterministic instance (JSON) with perfect foresight
    Oracle {
        instance: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a synthetic hourly generation and demand CSV
    Synth {
        #[arg(long, default_value_t = 365)]
        days: usize,
        #[arg(long, default_value_t = 3.0)]
        solar_peak: f64,
        #[arg(long, default_value_t = 1.2)]
        demand_base: f64,
        #[arg(long, default_value_t = 0.3)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::FitGen { csv, levels, smoothing, per_step, out } => {
            let s = commands::fit_gen(&csv, levels, smoothing, per_step, &out)?;
            println!("readings: {}", s.readings);
            println!("levels: {:?}", s.chain.levels);
            let mode = if s.chain.is_per_step() { "per-step" } else { "homogeneous" };
            println!("transitions: {mode}");
            println!("wrote {}", out.display());
        }
        Command::Solve { cfg, out } => {
            let loaded = cfg.load()?;
            let s = commands::solve(&loaded, cfg.scenario.as_deref(), &out)?;
            println!("scenario: {}", s.scenario);
            println!("states: {}", s.states);
            println!("V0: {}", s.v0);
            println!("wrote {} and {}", s.tables_json.display(), s.tables_csv.display());
        }
        Command::Check { tables } => {
            let outcome = commands::check(&tables)?;
            for r in &outcome.reports {
                println!("{r}");
            }
            for s in &outcome.skipped {
                println!("skipped {s}");
            }
            if !outcome.passed() {
                let failed: Vec<&str> =
                    outcome.reports.iter().filter(|r| !r.passed()).map(|r| r.name.as_str()).collect();
                return Err(CliError::Invariant(format!("structural checks failed: {}", failed.join(", "))));
            }
        }
        Command::Compare { cfg, policies, out } => {
            let loaded = cfg.load()?;
            let selected = (!policies.is_empty()).then_some(policies.as_slice());
            let report = commands::compare(&loaded, selected, &out)?;
            println!("{:<32} {:<10} {:>12} {:>10} {:>9} {:>9}", "scenario", "policy", "mean", "ci", "gain%", "gap%");
            for r in &report.rows {
                let gain = r.gain_pct.map_or_else(|| "-".to_string(), |g| format!("{g:.2}"));
                println!(
                    "{:<32} {:<10} {:>12.4} {:>10.4} {:>9} {:>9.2}",
                    r.scenario, r.policy, r.mean, r.ci_half_width, gain, r.oracle_gap_pct
                );
            }
            println!("wrote {}", out.display());
        }
        Command::Trace { cfg, policy, out } => {
            let loaded = cfg.load()?;
            let seed = loaded.config.execution.seed;
            let tr = commands::trace(&loaded, policy, seed, cfg.scenario.as_deref(), &out)?;
            let SystemState { soc, peak, .. } = tr.final_state;
            println!("total reward: {}", tr.total_reward);
            println!("final soc: {soc}, peak: {peak}");
            println!("wrote {}", out.display());
        }
        Command::Oracle { instance, out } => {
            let s = commands::oracle(&instance, &out)?;
            println!("value: {}", s.value);
            println!("wrote {}", out.display());
        }
        Command::Synth { days, solar_peak, demand_base, noise, seed, out } => {
            let settings = SynthSettings { days, solar_peak_kw: solar_peak, demand_base_kw: demand_base, noise, seed };
            let n = commands::synth(&settings, &out)?;
            println!("wrote {n} readings to {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
