use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qnt_cli::{emit_plot_data, export_lp_file, run_scenario, CliError, ObjectiveChoice, Scenario, Task};
use qnt_core::ilp::{Capacity, ModelConfig, Objective, PathSemantics, SiteRule};
use qnt_core::qfi::IndirectMode;

/// Monitor placement and tomography studies for quantum networks.
#[derive(Parser)]
#[command(name = "qnt", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the placement program for one monitor count.
    Optimize(Common),
    /// Closed-form optimal plan for a star network.
    StarFast(Common),
    /// Evaluate a plan file, or solved plans, and report per-link bounds.
    Evaluate(Common),
    /// Simulate a plan and compare estimator MSE with the bound.
    MseStudy {
        #[command(flatten)]
        common: Common,
        #[arg(long, required = true)]
        seed: u64,
    },
    /// Solve for every monitor count in a range.
    SweepMonitors(Common),
    /// Write the placement program in LP format.
    ExportLp {
        #[command(flatten)]
        common: Common,
        /// Destination `.lp` file.
        #[arg(long)]
        lp: PathBuf,
    },
    /// Derive plot series from a report bundle.
    PlotData { dir: PathBuf },
    /// Run a scenario file.
    Run {
        scenario: PathBuf,
        /// Overrides the scenario's output directory.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    network: PathBuf,
    /// qf, qmf or both.
    #[arg(long)]
    objective: Option<ObjectiveChoice>,
    #[arg(long, short = 'm')]
    monitors: Option<usize>,
    #[arg(long)]
    monitors_to: Option<usize>,
    /// Uniform per-monitor load limit.
    #[arg(long, conflicts_with = "load_limits")]
    load_limit: Option<usize>,
    /// Per-monitor load limits, comma separated.
    #[arg(long, value_delimiter = ',')]
    load_limits: Option<Vec<usize>>,
    /// cross-term, lemma-form or chain-rule.
    #[arg(long)]
    mode: Option<IndirectMode>,
    /// learnable or strict-same-monitor.
    #[arg(long)]
    semantics: Option<PathSemantics>,
    /// auto, all or leaves.
    #[arg(long)]
    sites: Option<SiteRule>,
    /// Shots per probe, comma separated.
    #[arg(long, value_delimiter = ',')]
    shots: Vec<u64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    plan: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    node_limit: Option<u64>,
    #[arg(long)]
    time_limit_secs: Option<f64>,
    #[arg(long, default_value = "qnt-out")]
    output: PathBuf,
    #[arg(long)]
    name: Option<String>,
}

impl Common {
    fn load_limit(&self) -> Option<Capacity> {
        match (&self.load_limit, &self.load_limits) {
            (Some(l), _) => Some(Capacity::Uniform(*l)),
            (None, Some(list)) => Some(Capacity::PerMonitor(list.clone())),
            (None, None) => None,
        }
    }

    fn scenario(self, task: Task, seed: Option<u64>) -> Scenario {
        let load_limit = self.load_limit();
        let mut s = Scenario::new(self.name.unwrap_or_else(|| task.as_str().to_string()), self.network, task);
        s.objective = self.objective;
        s.monitors = self.monitors;
        s.monitors_to = self.monitors_to;
        s.load_limit = load_limit;
        s.mode = self.mode;
        s.semantics = self.semantics;
        s.sites = self.sites;
        s.shots = self.shots;
        s.trials = self.trials;
        s.seed = seed;
        s.plan = self.plan;
        s.threads = self.threads;
        s.node_limit = self.node_limit;
        s.time_limit_secs = self.time_limit_secs;
        s.output = Some(self.output);
        s
    }
}

fn run_and_report(s: Scenario) -> Result<(), CliError> {
    let out = s.output.clone().unwrap_or_else(|| PathBuf::from(format!("{}-out", s.name)));
    let report = run_scenario(&s, &out)?;
    for f in &report.files {
        println!("{}", out.join(f).display());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Optimize(c) => run_and_report(c.scenario(Task::Optimize, None)),
        Command::StarFast(c) => run_and_report(c.scenario(Task::StarFast, None)),
        Command::Evaluate(c) => run_and_report(c.scenario(Task::Evaluate, None)),
        Command::SweepMonitors(c) => run_and_report(c.scenario(Task::SweepMonitors, None)),
        Command::MseStudy { common, seed } => run_and_report(common.scenario(Task::MseStudy, Some(seed))),
        Command::ExportLp { common, lp } => {
            let objective = match common.objective.unwrap_or(ObjectiveChoice::Qf) {
                ObjectiveChoice::Qf => Objective::Qf,
                ObjectiveChoice::Qmf => Objective::Qmf,
                ObjectiveChoice::Both => return Err(CliError::Config("export-lp writes one formulation".into())),
            };
            let m = common
                .monitors
                .ok_or_else(|| CliError::Config("export-lp requires a monitor count".into()))?;
            let mut cfg = ModelConfig::new(m, objective);
            if objective == Objective::Qmf {
                cfg.capacity = common.load_limit();
            }
            cfg.mode = common.mode;
            if let Some(sem) = common.semantics {
                cfg.semantics = sem;
            }
            if let Some(sites) = common.sites {
                cfg.sites = sites;
            }
            export_lp_file(&common.network, &cfg, &lp)?;
            println!("{}", lp.display());
            Ok(())
        }
        Command::PlotData { dir } => {
            for f in emit_plot_data(&dir)? {
                println!("{}", dir.join(f).display());
            }
            Ok(())
        }
        Command::Run { scenario, output } => {
            let mut s = Scenario::from_file(&scenario)?;
            if output.is_some() {
                s.output = output;
            }
            run_and_report(s)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let doc = serde_json::json!({ "error": e.class(), "message": e.to_string() });
            eprintln!("{doc}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
