//! Scenario runner behind the `qnt` command.
//!
//! A run reads a network, produces one or more monitoring plans, evaluates
//! them and writes a report bundle: canonical plan documents, a metrics
//! document, tab-separated summaries and a log. `report.json` lists the
//! bundle and is written last.

mod plot;
mod scenario;

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;
use std::time::Duration;

use qnt_core::ilp::{
    build_model, evaluate_plan, export_lp, solve, Capacity, IlpError, ModelConfig, MonitoringPlan, Objective,
    PlanDocument, PlanStatus, SolveOptions,
};
use qnt_core::net::{NetError, Network, TopologyClass};
use qnt_core::qfi::IndirectMode;
use qnt_core::sim::{mse_study, SimError, StudyRow};
use qnt_core::star::{min_overhead, star_optimal_plan, StarError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use plot::{emit_plot_data, PLOT_FILES};
pub use scenario::{ObjectiveChoice, Scenario, Task};

pub(crate) use scenario::file_name;

pub const REPORT_FILE: &str = "report.json";
pub const METRICS_FILE: &str = "metrics.json";
pub const LOG_FILE: &str = "run.log";
pub const SUMMARY_FILE: &str = "summary.tsv";
pub const QCRB_FILE: &str = "qcrb.tsv";
pub const STUDY_FILE: &str = "study.tsv";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("no {REPORT_FILE} in `{0}`")]
    MissingReport(String),
    #[error("network: {0}")]
    Net(#[from] NetError),
    #[error("{context}: {source}")]
    Ilp { context: String, source: IlpError },
    #[error("{context}: {source}")]
    Star { context: String, source: StarError },
    #[error("{context}: {source}")]
    Sim { context: String, source: SimError },
}

impl CliError {
    pub(crate) fn io(path: &Path, source: io::Error) -> Self {
        CliError::Io {
            path: file_name(path),
            source,
        }
    }

    /// Machine-readable error class: the failing variant's name.
    pub fn class(&self) -> String {
        match self {
            CliError::Config(_) => "ConfigError".into(),
            CliError::Io { .. } => "IoError".into(),
            CliError::MissingReport(_) => "MissingReport".into(),
            CliError::Net(e) => variant(e),
            CliError::Ilp { source, .. } => ilp_class(source),
            CliError::Star { source, .. } => match source {
                StarError::Qfi(q) => variant(q),
                other => variant(other),
            },
            CliError::Sim { source, .. } => match source {
                SimError::Plan(e) => ilp_class(e),
                SimError::Qfi(q) => variant(q),
                other => variant(other),
            },
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            _ => 1,
        }
    }
}

fn ilp_class(e: &IlpError) -> String {
    match e {
        IlpError::Qfi(q) => variant(q),
        other => variant(other),
    }
}

fn variant(e: &impl std::fmt::Debug) -> String {
    let text = format!("{e:?}");
    text.split(|c: char| !c.is_alphanumeric()).next().unwrap_or_default().to_string()
}

/// Bundle manifest written as `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub name: String,
    pub task: Task,
    pub files: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkBound {
    pub link: String,
    pub qcrb: f64,
}

/// Evaluation of one emitted plan. Bounds are per probe shot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanSummary {
    pub file: String,
    pub formulation: Objective,
    pub monitors: usize,
    pub status: PlanStatus,
    pub mode: IndirectMode,
    pub trace: f64,
    pub matrix_trace: f64,
    pub inverse_trace: f64,
    pub max_load: usize,
    pub loads: Vec<usize>,
    pub direct: usize,
    pub indirect: usize,
    pub qcrb: Vec<LinkBound>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsDocument {
    pub name: String,
    pub task: Task,
    pub network: String,
    pub plans: Vec<PlanSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub study: Option<Vec<StudyRow>>,
}

impl MetricsDocument {
    pub fn plan(&self, formulation: Objective, monitors: usize) -> Option<&PlanSummary> {
        self.plans
            .iter()
            .find(|p| p.formulation == formulation && p.monitors == monitors)
    }
}

struct Bundle<'a> {
    dir: &'a Path,
    files: Vec<String>,
    log: String,
}

impl Bundle<'_> {
    fn write(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        let path = self.dir.join(name);
        fs::write(&path, contents).map_err(|e| CliError::io(&path, e))?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn line(&mut self, text: String) {
        self.log.push_str(&text);
        self.log.push('\n');
    }
}

pub fn load_network(path: &Path) -> Result<Network, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    Ok(Network::from_json(&text)?)
}

fn topology_name(net: &Network) -> &'static str {
    match net.classify() {
        TopologyClass::Star { .. } => "star",
        TopologyClass::Tree => "tree",
        TopologyClass::General => "general",
    }
}

fn model_config(s: &Scenario, m: usize, objective: Objective) -> ModelConfig {
    let mut cfg = ModelConfig::new(m, objective);
    if objective == Objective::Qmf {
        cfg.capacity = s.load_limit.clone();
    }
    cfg.mode = s.mode;
    if let Some(sem) = s.semantics {
        cfg.semantics = sem;
    }
    if let Some(sites) = s.sites {
        cfg.sites = sites;
    }
    cfg
}

fn solve_options(s: &Scenario) -> SolveOptions {
    SolveOptions {
        node_limit: s.node_limit,
        time_limit: s.time_limit_secs.map(Duration::from_secs_f64),
        threads: s.threads.unwrap_or(1),
    }
}

fn optimize(net: &Network, s: &Scenario, m: usize, objective: Objective, b: &mut Bundle) -> Result<MonitoringPlan, CliError> {
    let context = format!("{} m={m}", objective.as_str());
    let ilp = |source| CliError::Ilp {
        context: context.clone(),
        source,
    };
    let model = build_model(net, &model_config(s, m, objective)).map_err(ilp)?;
    match solve(&model, &solve_options(s)) {
        Ok(plan) => Ok(plan),
        Err(IlpError::BudgetExhausted {
            nodes,
            incumbent: Some(plan),
        }) => {
            b.line(format!("{context}: budget exhausted after {nodes} nodes, keeping best plan found"));
            Ok(*plan)
        }
        Err(e) => Err(ilp(e)),
    }
}

fn star_fast(net: &Network, s: &Scenario, m: usize, objective: Objective) -> Result<MonitoringPlan, CliError> {
    let l_star = match (objective, &s.load_limit) {
        (Objective::Qf, _) => None,
        (Objective::Qmf, Some(Capacity::Uniform(l))) => Some(*l),
        (Objective::Qmf, _) => Some(min_overhead(net.link_count(), m)),
    };
    star_optimal_plan(net, m, l_star).map_err(|source| CliError::Star {
        context: format!("{} m={m}", objective.as_str()),
        source,
    })
}

fn plan_file_name(plan: &MonitoringPlan) -> String {
    format!("plan_{}_m{:02}.json", plan.formulation.as_str(), plan.placements.len())
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("documents serialise");
    text.push('\n');
    text
}

fn summarise(net: &Network, mut plan: MonitoringPlan, b: &mut Bundle) -> Result<PlanSummary, CliError> {
    plan.canonicalize();
    let file = plan_file_name(&plan);
    let metrics = evaluate_plan(net, &plan, plan.mode).map_err(|source| CliError::Ilp {
        context: format!("evaluating {file}"),
        source,
    })?;
    b.write(&file, &to_json(&plan.to_document(net)))?;
    b.line(format!(
        "{file}: {} m={} status={} trace={:.12e} inverse_trace={:.12e} max_load={} direct={} indirect={}",
        plan.formulation.as_str(),
        plan.placements.len(),
        status_name(plan.status),
        metrics.trace,
        metrics.inverse_trace,
        metrics.max_load,
        plan.direct.len(),
        plan.indirect.len()
    ));
    Ok(PlanSummary {
        file,
        formulation: plan.formulation,
        monitors: plan.placements.len(),
        status: plan.status,
        mode: plan.mode,
        trace: metrics.trace,
        matrix_trace: metrics.matrix_trace,
        inverse_trace: metrics.inverse_trace,
        max_load: metrics.max_load,
        loads: metrics.loads,
        direct: plan.direct.len(),
        indirect: plan.indirect.len(),
        qcrb: metrics
            .qcrb
            .iter()
            .map(|&(l, q)| LinkBound {
                link: l.to_string(),
                qcrb: q,
            })
            .collect(),
    })
}

fn status_name(status: PlanStatus) -> &'static str {
    match status {
        PlanStatus::Optimal => "optimal",
        PlanStatus::BestEffort => "best-effort",
        PlanStatus::Constructed => "constructed",
    }
}

fn summary_tsv(plans: &[PlanSummary]) -> String {
    let mut out = String::from("formulation\tm\tstatus\ttrace\tmatrix_trace\tinverse_trace\tmax_load\n");
    for p in plans {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{:.12e}\t{:.12e}\t{:.12e}\t{}",
            p.formulation.as_str(),
            p.monitors,
            status_name(p.status),
            p.trace,
            p.matrix_trace,
            p.inverse_trace,
            p.max_load
        );
    }
    out
}

fn qcrb_tsv(plans: &[PlanSummary]) -> String {
    let mut out = String::from("formulation\tm\tlink\tqcrb\n");
    for p in plans {
        for b in &p.qcrb {
            let _ = writeln!(out, "{}\t{}\t{}\t{:.12e}", p.formulation.as_str(), p.monitors, b.link, b.qcrb);
        }
    }
    out
}

fn read_plan(net: &Network, path: &Path) -> Result<MonitoringPlan, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let doc: PlanDocument =
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", file_name(path))))?;
    doc.to_plan(net).map_err(|source| CliError::Ilp {
        context: file_name(path),
        source,
    })
}

fn monitor_range(s: &Scenario, net: &Network) -> std::ops::RangeInclusive<usize> {
    let first = s.monitors.unwrap_or(1);
    let last = s.monitors_to.unwrap_or(match s.task {
        Task::SweepMonitors => net.link_count().max(first),
        _ => first,
    });
    first..=last
}

/// Run `s`, writing the report bundle into `out`.
pub fn run_scenario(s: &Scenario, out: &Path) -> Result<Report, CliError> {
    s.validate()?;
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let net = load_network(&s.network)?;
    let mut b = Bundle {
        dir: out,
        files: Vec::new(),
        log: String::new(),
    };
    b.line(format!("scenario {} task {}", s.name, s.task.as_str()));
    b.line(format!(
        "network {}: {} nodes, {} links, {}",
        file_name(&s.network),
        net.node_count(),
        net.link_count(),
        topology_name(&net)
    ));

    let mut plans = Vec::new();
    let mut study = None;
    match s.task {
        Task::Optimize | Task::StarFast | Task::SweepMonitors | Task::Evaluate if s.plan.is_none() => {
            for m in monitor_range(s, &net) {
                for objective in s.objective_choice().objectives() {
                    let plan = if s.task == Task::StarFast {
                        star_fast(&net, s, m, objective)?
                    } else {
                        optimize(&net, s, m, objective, &mut b)?
                    };
                    plans.push(summarise(&net, plan, &mut b)?);
                }
            }
        }
        Task::Evaluate => {
            let plan = read_plan(&net, s.plan.as_deref().expect("checked by the guard above"))?;
            plans.push(summarise(&net, plan, &mut b)?);
        }
        Task::MseStudy => {
            let plan = match &s.plan {
                Some(p) => read_plan(&net, p)?,
                None => {
                    let m = s.monitors.expect("validated");
                    let objective = s.objective_choice().objectives()[0];
                    optimize(&net, s, m, objective, &mut b)?
                }
            };
            let seed = s.seed.expect("validated");
            let trials = s.trials.expect("validated");
            b.line(format!("study shots={:?} trials={trials} seed={seed}", s.shots));
            let run = || mse_study(&net, &plan, &s.shots, trials, seed);
            let table = match s.threads {
                Some(t) => rayon::ThreadPoolBuilder::new()
                    .num_threads(t)
                    .build()
                    .map_err(|e| CliError::Config(format!("cannot start {t} workers: {e}")))?
                    .install(run),
                None => run(),
            }
            .map_err(|source| CliError::Sim {
                context: "mse-study".into(),
                source,
            })?;
            plans.push(summarise(&net, plan, &mut b)?);
            b.write(STUDY_FILE, &table.to_tsv())?;
            study = Some(table.rows);
        }
        _ => unreachable!("plan files are rejected for this task during validation"),
    }

    b.write(SUMMARY_FILE, &summary_tsv(&plans))?;
    if s.task == Task::Evaluate {
        b.write(QCRB_FILE, &qcrb_tsv(&plans))?;
    }
    let metrics = MetricsDocument {
        name: s.name.clone(),
        task: s.task,
        network: file_name(&s.network),
        plans,
        study,
    };
    b.write(METRICS_FILE, &to_json(&metrics))?;
    let mut files = b.files.clone();
    files.push(LOG_FILE.to_string());
    files.sort();
    b.line(format!("wrote {} files", files.len() + 1));
    let log = std::mem::take(&mut b.log);
    b.write(LOG_FILE, &log)?;
    let report = Report {
        name: s.name.clone(),
        task: s.task,
        files,
    };
    let path = out.join(REPORT_FILE);
    fs::write(&path, to_json(&report)).map_err(|e| CliError::io(&path, e))?;
    Ok(report)
}

/// Write the integer program for `config` on the network at `network` in LP format.
pub fn export_lp_file(network: &Path, config: &ModelConfig, out: &Path) -> Result<(), CliError> {
    let net = load_network(network)?;
    let model = build_model(&net, config).map_err(|source| CliError::Ilp {
        context: "export-lp".into(),
        source,
    })?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(out, export_lp(&model)).map_err(|e| CliError::io(out, e))
}
