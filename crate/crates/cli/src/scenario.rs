use std::fs;
use std::path::{Path, PathBuf};

use qnt_core::ilp::{Capacity, Objective, PathSemantics, SiteRule};
use qnt_core::qfi::IndirectMode;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Optimize,
    StarFast,
    Evaluate,
    MseStudy,
    SweepMonitors,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Optimize => "optimize",
            Task::StarFast => "star-fast",
            Task::Evaluate => "evaluate",
            Task::MseStudy => "mse-study",
            Task::SweepMonitors => "sweep-monitors",
        }
    }

    pub fn is_stochastic(self) -> bool {
        matches!(self, Task::MseStudy)
    }
}

/// Which formulations a run covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectiveChoice {
    Qf,
    Qmf,
    Both,
}

impl ObjectiveChoice {
    pub fn objectives(self) -> Vec<Objective> {
        match self {
            ObjectiveChoice::Qf => vec![Objective::Qf],
            ObjectiveChoice::Qmf => vec![Objective::Qmf],
            ObjectiveChoice::Both => vec![Objective::Qf, Objective::Qmf],
        }
    }
}

impl std::str::FromStr for ObjectiveChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "qf" => Ok(ObjectiveChoice::Qf),
            "qmf" => Ok(ObjectiveChoice::Qmf),
            "both" => Ok(ObjectiveChoice::Both),
            other => Err(format!("unknown objective `{other}`")),
        }
    }
}

/// One run of the tool, as read from a JSON file or assembled from flags.
///
/// Relative paths in a scenario file are resolved against the file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub network: PathBuf,
    pub task: Task,
    #[serde(default)]
    pub objective: Option<ObjectiveChoice>,
    /// Monitor count, or the first count of a sweep.
    #[serde(default)]
    pub monitors: Option<usize>,
    /// Last monitor count of a sweep (inclusive).
    #[serde(default)]
    pub monitors_to: Option<usize>,
    #[serde(default)]
    pub load_limit: Option<Capacity>,
    #[serde(default)]
    pub mode: Option<IndirectMode>,
    #[serde(default)]
    pub semantics: Option<PathSemantics>,
    #[serde(default)]
    pub sites: Option<SiteRule>,
    #[serde(default)]
    pub shots: Vec<u64>,
    #[serde(default)]
    pub trials: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Existing plan document to evaluate or simulate instead of solving.
    #[serde(default)]
    pub plan: Option<PathBuf>,
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default)]
    pub node_limit: Option<u64>,
    #[serde(default)]
    pub time_limit_secs: Option<f64>,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl Scenario {
    pub fn new(name: impl Into<String>, network: impl Into<PathBuf>, task: Task) -> Self {
        Scenario {
            name: name.into(),
            network: network.into(),
            task,
            objective: None,
            monitors: None,
            monitors_to: None,
            load_limit: None,
            mode: None,
            semantics: None,
            sites: None,
            shots: Vec::new(),
            trials: None,
            seed: None,
            plan: None,
            threads: None,
            node_limit: None,
            time_limit_secs: None,
            output: None,
        }
    }

    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut s: Scenario = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", file_name(path))))?;
        let base = path.parent().unwrap_or(Path::new("."));
        s.network = base.join(&s.network);
        s.plan = s.plan.map(|p| base.join(p));
        s.output = s.output.map(|p| base.join(p));
        Ok(s)
    }

    pub fn objective_choice(&self) -> ObjectiveChoice {
        self.objective.unwrap_or(match self.task {
            Task::Evaluate | Task::SweepMonitors => ObjectiveChoice::Both,
            _ => ObjectiveChoice::Qf,
        })
    }

    /// Checks that do not need the network.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Config(msg));
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return bad(format!("scenario name `{}` is not a plain file name", self.name));
        }
        if !self.network.is_file() {
            return bad(format!("network file `{}` not found", file_name(&self.network)));
        }
        if let Some(p) = &self.plan {
            if !p.is_file() {
                return bad(format!("plan file `{}` not found", file_name(p)));
            }
        }
        if self.task.is_stochastic() && self.seed.is_none() {
            return bad(format!("{} requires a seed", self.task.as_str()));
        }
        if self.threads == Some(0) {
            return bad("threads must be at least 1".into());
        }
        if let Some(t) = self.time_limit_secs {
            if !(t.is_finite() && t > 0.0) {
                return bad(format!("time limit {t} must be positive"));
            }
        }
        if let (Some(a), Some(b)) = (self.monitors, self.monitors_to) {
            if b < a {
                return bad(format!("monitor range {a}..={b} is empty"));
            }
        }
        let needs_monitors = self.plan.is_none() && !matches!(self.task, Task::SweepMonitors);
        if needs_monitors && self.monitors.is_none() {
            return bad(format!("{} requires a monitor count", self.task.as_str()));
        }
        match self.task {
            Task::MseStudy => {
                if self.shots.is_empty() {
                    return bad("mse-study requires a non-empty shot grid".into());
                }
                if self.trials.unwrap_or(0) == 0 {
                    return bad("mse-study requires at least one trial".into());
                }
                if self.plan.is_none() && self.objective_choice() == ObjectiveChoice::Both {
                    return bad("mse-study simulates one plan; choose qf or qmf".into());
                }
            }
            Task::StarFast => {
                if matches!(self.load_limit, Some(Capacity::PerMonitor(_))) {
                    return bad("star-fast takes a single uniform load limit".into());
                }
                if self.mode.is_some_and(|m| m != IndirectMode::LemmaForm) {
                    return bad("star-fast scores indirect links in lemma form only".into());
                }
            }
            _ => {}
        }
        if self.plan.is_some() && matches!(self.task, Task::Optimize | Task::StarFast | Task::SweepMonitors) {
            return bad(format!("{} does not read a plan file", self.task.as_str()));
        }
        Ok(())
    }
}

pub(crate) fn file_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}
