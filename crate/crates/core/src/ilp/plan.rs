use serde::{Deserialize, Serialize};

use super::model::{IlpModel, Objective, VarKind};
use super::IlpError;
use crate::net::{LinkId, MonitorPath, Network, NodeId};
use crate::qfi::{assemble_qfim_over, direct_qfi, indirect_qfi, qcrb, IndirectMode, ProbeContribution};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DirectAssignment {
    pub link: LinkId,
    pub monitor: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndirectAssignment {
    pub link: LinkId,
    pub monitor: usize,
    pub path: MonitorPath,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlanStatus {
    /// Proven optimal by exhausting the search.
    Optimal,
    /// A search budget fired before optimality was proven.
    BestEffort,
    /// Built by the closed-form star construction.
    Constructed,
}

/// Monitor placement together with the measurement of every link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitoringPlan {
    pub formulation: Objective,
    pub mode: IndirectMode,
    /// Node hosting each monitor.
    pub placements: Vec<NodeId>,
    pub direct: Vec<DirectAssignment>,
    pub indirect: Vec<IndirectAssignment>,
    pub loads: Vec<usize>,
    pub capacities: Option<Vec<usize>>,
    /// Information-matrix trace as scored by `mode`.
    pub trace: f64,
    pub status: PlanStatus,
}

impl MonitoringPlan {
    pub fn max_load(&self) -> usize {
        self.loads.iter().copied().max().unwrap_or(0)
    }

    /// Monitor measuring `link` and whether it does so directly.
    pub fn assignment(&self, link: LinkId) -> Option<(usize, bool)> {
        self.direct
            .iter()
            .find(|d| d.link == link)
            .map(|d| (d.monitor, true))
            .or_else(|| {
                self.indirect
                    .iter()
                    .find(|a| a.link == link)
                    .map(|a| (a.monitor, false))
            })
    }

    /// Relabel monitors in ascending order of their nodes. Capacities move with their monitor.
    pub fn canonicalize(&mut self) {
        let mut order: Vec<usize> = (0..self.placements.len()).collect();
        order.sort_by_key(|&j| self.placements[j]);
        let mut relabel = vec![0; order.len()];
        for (new, &old) in order.iter().enumerate() {
            relabel[old] = new;
        }
        self.placements = order.iter().map(|&j| self.placements[j]).collect();
        self.loads = order.iter().map(|&j| self.loads[j]).collect();
        if let Some(caps) = &self.capacities {
            self.capacities = Some(order.iter().map(|&j| caps[j]).collect());
        }
        for d in &mut self.direct {
            d.monitor = relabel[d.monitor];
        }
        for a in &mut self.indirect {
            a.monitor = relabel[a.monitor];
        }
        self.direct.sort_by_key(|d| d.link);
        self.indirect.sort_by_key(|a| a.link);
    }

    pub fn indirect_of(&self, monitor: usize) -> Vec<LinkId> {
        self.indirect
            .iter()
            .filter(|a| a.monitor == monitor)
            .map(|a| a.link)
            .collect()
    }

    /// Structural consistency with `net`: every link measured once, direct
    /// measurements from an endpoint, paths starting at the monitor and ending
    /// at the target, loads matching assignments and capacities respected.
    pub fn validate(&self, net: &Network) -> Result<(), IlpError> {
        let bad = |msg: String| Err(IlpError::InconsistentPlan(msg));
        let m = self.placements.len();
        let mut seen = vec![0usize; net.link_count()];
        let mut loads = vec![0usize; m];
        let mut sorted = self.placements.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != m {
            return bad("two monitors share a node".into());
        }
        if sorted.iter().any(|k| k.0 >= net.node_count()) {
            return bad("monitor placed on unknown node".into());
        }
        for d in &self.direct {
            if d.link.0 >= net.link_count() || d.monitor >= m {
                return bad(format!("direct assignment {d:?} out of range"));
            }
            if !net.link(d.link).has_endpoint(self.placements[d.monitor]) {
                return bad(format!("link {} measured directly from a non-endpoint", d.link));
            }
            seen[d.link.0] += 1;
            loads[d.monitor] += 1;
        }
        for a in &self.indirect {
            if a.link.0 >= net.link_count() || a.monitor >= m {
                return bad(format!("indirect assignment of {} out of range", a.link));
            }
            if a.path.monitor != self.placements[a.monitor]
                || a.path.target != a.link
                || a.path.links.last() != Some(&a.link)
            {
                return bad(format!("path for {} does not join its monitor and target", a.link));
            }
            let mut at = a.path.monitor;
            for &l in &a.path.links {
                let link = net.link(l);
                if !link.has_endpoint(at) {
                    return bad(format!("path for {} is not contiguous", a.link));
                }
                at = link.other(at);
            }
            seen[a.link.0] += 1;
            loads[a.monitor] += 1;
        }
        if let Some(l) = seen.iter().position(|&c| c != 1) {
            return bad(format!("link e{l} measured {} times", seen[l]));
        }
        if loads != self.loads {
            return bad(format!("loads {:?} disagree with assignments {loads:?}", self.loads));
        }
        if let Some(caps) = &self.capacities {
            if caps.len() != m || loads.iter().zip(caps).any(|(l, c)| l > c) {
                return bad("load exceeds capacity".into());
            }
        }
        Ok(())
    }

    pub fn to_document(&self, net: &Network) -> PlanDocument {
        let name = |k: NodeId| net.name(k).to_string();
        let link_name = |l: LinkId| {
            let link = net.link(l);
            format!("{}-{}", net.name(link.a), net.name(link.b))
        };
        let mut assignments: Vec<AssignmentDocument> = self
            .direct
            .iter()
            .map(|d| AssignmentDocument {
                link: d.link.0,
                endpoints: link_name(d.link),
                monitor: d.monitor,
                kind: "direct".into(),
                path: vec![d.link.0],
            })
            .chain(self.indirect.iter().map(|a| AssignmentDocument {
                link: a.link.0,
                endpoints: link_name(a.link),
                monitor: a.monitor,
                kind: "indirect".into(),
                path: a.path.links.iter().map(|l| l.0).collect(),
            }))
            .collect();
        assignments.sort_by_key(|a| a.link);
        PlanDocument {
            formulation: self.formulation,
            mode: self.mode,
            status: self.status,
            monitors: self
                .placements
                .iter()
                .enumerate()
                .map(|(j, &k)| MonitorDocument {
                    monitor: j,
                    node: name(k),
                    load: self.loads[j],
                    capacity: self.capacities.as_ref().map(|c| c[j]),
                })
                .collect(),
            assignments,
            trace: self.trace,
            max_load: self.max_load(),
        }
    }
}

/// Serialised form of a plan with node names resolved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanDocument {
    pub formulation: Objective,
    pub mode: IndirectMode,
    pub status: PlanStatus,
    pub monitors: Vec<MonitorDocument>,
    pub assignments: Vec<AssignmentDocument>,
    pub trace: f64,
    pub max_load: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorDocument {
    pub monitor: usize,
    pub node: String,
    pub load: usize,
    pub capacity: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentDocument {
    pub link: usize,
    pub endpoints: String,
    pub monitor: usize,
    pub kind: String,
    pub path: Vec<usize>,
}

impl PlanDocument {
    /// Rebuild a plan from its document; paths are taken as written.
    pub fn to_plan(&self, net: &Network) -> Result<MonitoringPlan, IlpError> {
        let placements = self
            .monitors
            .iter()
            .map(|m| {
                net.node_id(&m.node)
                    .ok_or_else(|| IlpError::InconsistentPlan(format!("unknown node `{}`", m.node)))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let mut direct = Vec::new();
        let mut indirect = Vec::new();
        for a in &self.assignments {
            if a.monitor >= placements.len() {
                return Err(IlpError::InconsistentPlan(format!("unknown monitor {}", a.monitor)));
            }
            match a.kind.as_str() {
                "direct" => direct.push(DirectAssignment {
                    link: LinkId(a.link),
                    monitor: a.monitor,
                }),
                "indirect" => indirect.push(IndirectAssignment {
                    link: LinkId(a.link),
                    monitor: a.monitor,
                    path: MonitorPath {
                        monitor: placements[a.monitor],
                        target: LinkId(a.link),
                        links: a.path.iter().map(|&l| LinkId(l)).collect(),
                    },
                }),
                other => {
                    return Err(IlpError::InconsistentPlan(format!("unknown kind `{other}`")))
                }
            }
        }
        let capacities: Option<Vec<usize>> = self.monitors.iter().map(|m| m.capacity).collect();
        let plan = MonitoringPlan {
            formulation: self.formulation,
            mode: self.mode,
            placements,
            direct,
            indirect,
            loads: self.monitors.iter().map(|m| m.load).collect(),
            capacities,
            trace: self.trace,
            status: self.status,
        };
        plan.validate(net)?;
        Ok(plan)
    }
}

/// Trace score of a plan: direct QFI per direct link plus the indirect score under `mode`.
pub fn plan_objective(net: &Network, plan: &MonitoringPlan, mode: IndirectMode) -> Result<f64, IlpError> {
    let mut per_link = vec![0.0; net.link_count()];
    for d in &plan.direct {
        per_link[d.link.0] = direct_qfi(net.werner(d.link))?;
    }
    for a in &plan.indirect {
        let weights: Vec<f64> = a.path.links.iter().map(|&l| net.werner(l)).collect();
        per_link[a.link.0] = if weights.len() == 1 {
            direct_qfi(weights[0])?
        } else {
            indirect_qfi(&weights, weights.len() - 1, mode)?
        };
    }
    Ok(per_link.iter().sum())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanMetrics {
    /// Trace score under the requested indirect mode (the optimisation objective).
    pub trace: f64,
    /// Trace of the assembled information matrix.
    pub matrix_trace: f64,
    pub inverse_trace: f64,
    pub qcrb: Vec<(LinkId, f64)>,
    pub max_load: usize,
    pub loads: Vec<usize>,
}

/// Assemble the full information matrix of a plan (one shot per probe) and report its metrics.
pub fn evaluate_plan(net: &Network, plan: &MonitoringPlan, mode: IndirectMode) -> Result<PlanMetrics, IlpError> {
    plan.validate(net)?;
    let probes: Vec<ProbeContribution> = plan
        .direct
        .iter()
        .map(|d| MonitorPath {
            monitor: plan.placements[d.monitor],
            target: d.link,
            links: vec![d.link],
        })
        .chain(plan.indirect.iter().map(|a| a.path.clone()))
        .map(|path| ProbeContribution::new(net, path, 1))
        .collect();
    let params: Vec<LinkId> = net.link_ids().collect();
    let model = assemble_qfim_over(&params, &probes)?;
    let bounds = qcrb(&model)?;
    Ok(PlanMetrics {
        trace: plan_objective(net, plan, mode)?,
        matrix_trace: model.trace(),
        inverse_trace: bounds.inverse_trace,
        qcrb: bounds.per_link,
        max_load: plan.max_load(),
        loads: plan.loads.clone(),
    })
}

/// Variable assignment of `model` realising `plan`, for independent constraint checking.
pub fn plan_values(model: &IlpModel, plan: &MonitoringPlan) -> Result<Vec<f64>, IlpError> {
    let mut values = vec![0.0; model.variables().len()];
    let mut z_ones = Vec::new();
    let mut set = |kind: VarKind, v: f64| -> Result<(), IlpError> {
        let id = model
            .var(kind)
            .ok_or_else(|| IlpError::InconsistentPlan(format!("model has no variable {}", kind.name())))?;
        values[id] = v;
        Ok(())
    };
    if plan.placements.len() != model.monitors() {
        return Err(IlpError::InconsistentPlan("monitor count differs from model".into()));
    }
    for (j, &k) in plan.placements.iter().enumerate() {
        set(VarKind::Place { node: k.0, monitor: j }, 1.0)?;
    }
    for link in 0..model.network().link_count() {
        set(VarKind::Learnable { link }, 1.0)?;
    }
    for d in &plan.direct {
        set(VarKind::Direct { link: d.link.0, monitor: d.monitor }, 1.0)?;
        set(VarKind::Covered { link: d.link.0 }, 1.0)?;
    }
    for a in &plan.indirect {
        let (link, monitor) = (a.link.0, a.monitor);
        set(VarKind::Indirect { link, monitor }, 1.0)?;
        set(VarKind::Reach { link, monitor }, 1.0)?;
        let node = plan.placements[monitor].0;
        if let Some(z) = model.var(VarKind::IndirectAt { link, monitor, node }) {
            z_ones.push(z);
        }
    }
    if model.capacities().is_some() {
        for (j, &load) in plan.loads.iter().enumerate() {
            set(VarKind::Load { monitor: j }, load as f64)?;
        }
    }
    for z in z_ones {
        values[z] = 1.0;
    }
    Ok(values)
}
