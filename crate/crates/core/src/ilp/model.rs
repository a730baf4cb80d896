use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::IlpError;
use crate::net::{LinkId, MonitorPath, Network, NodeId, PathTable, TopologyClass};
use crate::qfi::{direct_qfi, indirect_qfi, IndirectMode};
use crate::star::min_overhead;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    /// Maximise the information-matrix trace.
    Qf,
    /// Maximise the trace subject to per-monitor load limits.
    Qmf,
}

impl Objective {
    pub fn as_str(self) -> &'static str {
        match self {
            Objective::Qf => "qf",
            Objective::Qmf => "qmf",
        }
    }
}

impl std::str::FromStr for Objective {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "qf" => Ok(Objective::Qf),
            "qmf" => Ok(Objective::Qmf),
            other => Err(format!("unknown objective `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PathSemantics {
    /// Links along an indirect probe path may be measured by any monitor.
    Learnable,
    /// Every link along an indirect probe path must be measured by the same monitor.
    StrictSameMonitor,
}

impl std::str::FromStr for PathSemantics {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "learnable" => Ok(PathSemantics::Learnable),
            "strict-same-monitor" | "strict" => Ok(PathSemantics::StrictSameMonitor),
            other => Err(format!("unknown path semantics `{other}`")),
        }
    }
}

/// Nodes that may host a monitor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SiteRule {
    /// Leaves for stars, every node otherwise.
    #[default]
    Auto,
    All,
    Leaves,
}

impl std::str::FromStr for SiteRule {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "auto" => Ok(SiteRule::Auto),
            "all" => Ok(SiteRule::All),
            "leaves" => Ok(SiteRule::Leaves),
            other => Err(format!("unknown site rule `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Capacity {
    Uniform(usize),
    PerMonitor(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub monitors: usize,
    pub objective: Objective,
    /// QMF load limit; `None` selects the smallest feasible uniform limit.
    pub capacity: Option<Capacity>,
    pub semantics: PathSemantics,
    /// `None` selects lemma form for stars and chain rule otherwise.
    pub mode: Option<IndirectMode>,
    pub sites: SiteRule,
}

impl ModelConfig {
    pub fn new(monitors: usize, objective: Objective) -> Self {
        ModelConfig {
            monitors,
            objective,
            capacity: None,
            semantics: PathSemantics::Learnable,
            mode: None,
            sites: SiteRule::Auto,
        }
    }

    pub fn with_capacity(mut self, capacity: Capacity) -> Self {
        self.capacity = Some(capacity);
        self
    }

    pub fn with_mode(mut self, mode: IndirectMode) -> Self {
        self.mode = Some(mode);
        self
    }

    pub fn with_semantics(mut self, semantics: PathSemantics) -> Self {
        self.semantics = semantics;
        self
    }

    pub fn with_sites(mut self, sites: SiteRule) -> Self {
        self.sites = sites;
        self
    }
}

pub fn default_mode(net: &Network) -> IndirectMode {
    match net.classify() {
        TopologyClass::Star { .. } => IndirectMode::LemmaForm,
        _ => IndirectMode::ChainRule,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VarKind {
    Direct { link: usize, monitor: usize },
    Indirect { link: usize, monitor: usize },
    Place { node: usize, monitor: usize },
    Learnable { link: usize },
    Reach { link: usize, monitor: usize },
    IndirectAt { link: usize, monitor: usize, node: usize },
    Covered { link: usize },
    Load { monitor: usize },
}

impl VarKind {
    pub fn name(&self) -> String {
        match *self {
            VarKind::Direct { link, monitor } => format!("x_{link}_{monitor}"),
            VarKind::Indirect { link, monitor } => format!("p_{link}_{monitor}"),
            VarKind::Place { node, monitor } => format!("m_{node}_{monitor}"),
            VarKind::Learnable { link } => format!("b_{link}"),
            VarKind::Reach { link, monitor } => format!("y_{link}_{monitor}"),
            VarKind::IndirectAt { link, monitor, node } => format!("z_{link}_{monitor}_{node}"),
            VarKind::Covered { link } => format!("d_{link}"),
            VarKind::Load { monitor } => format!("l_{monitor}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub kind: VarKind,
    pub lower: f64,
    pub upper: f64,
    pub integer: bool,
}

impl Variable {
    pub fn is_binary(&self) -> bool {
        self.integer && self.lower == 0.0 && self.upper == 1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub name: String,
    pub terms: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub constraint: String,
    pub lhs: f64,
    pub sense: Sense,
    pub rhs: f64,
}

/// Per-site view of the placement problem used by the solver.
#[derive(Debug, Clone)]
pub(crate) struct SiteData {
    pub node: NodeId,
    /// `true` where the site is an endpoint of the link.
    pub endpoint: Vec<bool>,
    /// Objective coefficient of measuring each link from this site.
    pub coef: Vec<f64>,
    /// Routing path from this site to each link.
    pub paths: Vec<Vec<LinkId>>,
}

/// Binary program for monitor placement plus the data needed to solve it.
#[derive(Debug, Clone)]
pub struct IlpModel {
    pub(crate) net: Network,
    pub(crate) config: ModelConfig,
    pub(crate) mode: IndirectMode,
    pub(crate) capacities: Option<Vec<usize>>,
    pub(crate) sites: Vec<SiteData>,
    pub(crate) paths: PathTable,
    variables: Vec<Variable>,
    constraints: Vec<Constraint>,
    objective: Vec<(usize, f64)>,
    lookup: HashMap<VarKind, usize>,
}

impl IlpModel {
    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn objective_terms(&self) -> &[(usize, f64)] {
        &self.objective
    }

    pub fn var(&self, kind: VarKind) -> Option<usize> {
        self.lookup.get(&kind).copied()
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn mode(&self) -> IndirectMode {
        self.mode
    }

    pub fn capacities(&self) -> Option<&[usize]> {
        self.capacities.as_deref()
    }

    pub fn monitors(&self) -> usize {
        self.config.monitors
    }

    pub fn site_nodes(&self) -> Vec<NodeId> {
        self.sites.iter().map(|s| s.node).collect()
    }

    /// Measurement path used when a monitor at `node` probes `link`.
    pub fn path(&self, node: NodeId, link: LinkId) -> &MonitorPath {
        self.paths.get(node, link)
    }

    pub fn objective_value(&self, values: &[f64]) -> f64 {
        self.objective.iter().map(|&(v, c)| c * values[v]).sum()
    }

    /// Every bound, integrality and row violated by `values`.
    pub fn violations(&self, values: &[f64]) -> Vec<Violation> {
        const TOL: f64 = 1e-9;
        let mut out = Vec::new();
        for (v, var) in self.variables.iter().enumerate() {
            let x = values[v];
            let fractional = var.integer && (x - x.round()).abs() > TOL;
            if x < var.lower - TOL || x > var.upper + TOL || fractional {
                out.push(Violation {
                    constraint: format!("bounds({})", var.kind.name()),
                    lhs: x,
                    sense: Sense::Eq,
                    rhs: x.clamp(var.lower, var.upper),
                });
            }
        }
        for c in &self.constraints {
            let lhs: f64 = c.terms.iter().map(|&(v, a)| a * values[v]).sum();
            let ok = match c.sense {
                Sense::Le => lhs <= c.rhs + TOL,
                Sense::Ge => lhs >= c.rhs - TOL,
                Sense::Eq => (lhs - c.rhs).abs() <= TOL,
            };
            if !ok {
                out.push(Violation {
                    constraint: c.name.clone(),
                    lhs,
                    sense: c.sense,
                    rhs: c.rhs,
                });
            }
        }
        out
    }
}

struct Builder {
    variables: Vec<Variable>,
    lookup: HashMap<VarKind, usize>,
    constraints: Vec<Constraint>,
}

impl Builder {
    fn add(&mut self, kind: VarKind, upper: f64) -> usize {
        let id = self.variables.len();
        self.variables.push(Variable {
            kind,
            lower: 0.0,
            upper,
            integer: true,
        });
        self.lookup.insert(kind, id);
        id
    }

    fn id(&self, kind: VarKind) -> usize {
        self.lookup[&kind]
    }

    fn row(&mut self, name: String, terms: Vec<(usize, f64)>, sense: Sense, rhs: f64) {
        // merge repeated variables
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(terms.len());
        for (v, a) in terms {
            match merged.iter_mut().find(|(u, _)| *u == v) {
                Some(t) => t.1 += a,
                None => merged.push((v, a)),
            }
        }
        merged.retain(|&(_, a)| a != 0.0);
        self.constraints.push(Constraint {
            name,
            terms: merged,
            sense,
            rhs,
        });
    }
}

fn resolve_sites(net: &Network, rule: SiteRule) -> Vec<NodeId> {
    let leaves_only = match rule {
        SiteRule::All => false,
        SiteRule::Leaves => true,
        SiteRule::Auto => matches!(net.classify(), TopologyClass::Star { .. }),
    };
    net.nodes()
        .filter(|&k| !leaves_only || net.degree(k) == 1)
        .collect()
}

fn resolve_capacities(
    net: &Network,
    config: &ModelConfig,
) -> Result<Option<Vec<usize>>, IlpError> {
    if config.objective == Objective::Qf {
        return Ok(None);
    }
    let links = net.link_count();
    let m = config.monitors;
    let minimum = min_overhead(links, m);
    let caps = match &config.capacity {
        None => vec![minimum; m],
        Some(Capacity::Uniform(c)) => {
            if *c < minimum {
                return Err(IlpError::CapacityInfeasible {
                    capacity: *c,
                    minimum,
                });
            }
            if *c > links {
                return Err(IlpError::InvalidCapacity(format!(
                    "load limit {c} exceeds the {links} links of the network"
                )));
            }
            vec![*c; m]
        }
        Some(Capacity::PerMonitor(list)) => {
            if list.len() != m {
                return Err(IlpError::InvalidCapacity(format!(
                    "{} capacities given for {m} monitors",
                    list.len()
                )));
            }
            list.clone()
        }
    };
    Ok(Some(caps))
}

/// Build the placement program for `net` under `config`.
pub fn build_model(net: &Network, config: &ModelConfig) -> Result<IlpModel, IlpError> {
    let m = config.monitors;
    if m == 0 {
        return Err(IlpError::NoMonitors);
    }
    let site_nodes = resolve_sites(net, config.sites);
    if m > net.node_count() || m > site_nodes.len() {
        return Err(IlpError::TooManyMonitors {
            requested: m,
            available: site_nodes.len().min(net.node_count()),
        });
    }
    let capacities = resolve_capacities(net, config)?;
    let mode = config.mode.unwrap_or_else(|| default_mode(net));
    let paths = PathTable::build(net);
    let n_links = net.link_count();
    let n_nodes = net.node_count();

    // coefficient of measuring link i from node k
    let mut coef = vec![vec![0.0; n_links]; n_nodes];
    for &k in &site_nodes {
        for i in net.link_ids() {
            let path = paths.get(k, i);
            coef[k.0][i.0] = if path.is_direct() {
                direct_qfi(net.werner(i))?
            } else {
                let weights: Vec<f64> = path.links.iter().map(|&l| net.werner(l)).collect();
                indirect_qfi(&weights, weights.len() - 1, mode)?
            };
        }
    }

    let sites: Vec<SiteData> = site_nodes
        .iter()
        .map(|&k| SiteData {
            node: k,
            endpoint: net.link_ids().map(|i| net.link(i).has_endpoint(k)).collect(),
            coef: coef[k.0].clone(),
            paths: net.link_ids().map(|i| paths.get(k, i).links.clone()).collect(),
        })
        .collect();

    let mut b = Builder {
        variables: Vec::new(),
        lookup: HashMap::new(),
        constraints: Vec::new(),
    };
    for link in 0..n_links {
        for monitor in 0..m {
            b.add(VarKind::Direct { link, monitor }, 1.0);
        }
    }
    for link in 0..n_links {
        for monitor in 0..m {
            b.add(VarKind::Indirect { link, monitor }, 1.0);
        }
    }
    for node in 0..n_nodes {
        for monitor in 0..m {
            b.add(VarKind::Place { node, monitor }, 1.0);
        }
    }
    for link in 0..n_links {
        b.add(VarKind::Learnable { link }, 1.0);
    }
    for link in 0..n_links {
        for monitor in 0..m {
            b.add(VarKind::Reach { link, monitor }, 1.0);
        }
    }
    let mut objective = Vec::new();
    for link in 0..n_links {
        for monitor in 0..m {
            for &k in &site_nodes {
                if paths.get(k, LinkId(link)).len() >= 2 {
                    let z = b.add(
                        VarKind::IndirectAt {
                            link,
                            monitor,
                            node: k.0,
                        },
                        1.0,
                    );
                    objective.push((z, coef[k.0][link]));
                }
            }
        }
    }
    for link in 0..n_links {
        b.add(VarKind::Covered { link }, 1.0);
    }
    if let Some(caps) = &capacities {
        for (monitor, &cap) in caps.iter().enumerate() {
            b.add(VarKind::Load { monitor }, cap as f64);
        }
    }
    for link in 0..n_links {
        for monitor in 0..m {
            let x = b.id(VarKind::Direct { link, monitor });
            objective.push((x, coef_direct(net, link)?));
        }
    }
    objective.sort_by_key(|&(v, _)| v);

    let x = |i: usize, j: usize| VarKind::Direct { link: i, monitor: j };
    let p = |i: usize, j: usize| VarKind::Indirect { link: i, monitor: j };
    let mk = |k: usize, j: usize| VarKind::Place { node: k, monitor: j };

    for i in 0..n_links {
        let link = *net.link(LinkId(i));
        let (ka, kb) = (link.a.0, link.b.0);
        // measured exactly once
        let terms = (0..m)
            .flat_map(|j| [(b.id(x(i, j)), 1.0), (b.id(p(i, j)), 1.0)])
            .collect();
        b.row(format!("once_{i}"), terms, Sense::Eq, 1.0);
        // direct only from an endpoint
        for j in 0..m {
            let terms = vec![(b.id(x(i, j)), 1.0), (b.id(mk(ka, j)), -1.0), (b.id(mk(kb, j)), -1.0)];
            b.row(format!("endpoint_{i}_{j}"), terms, Sense::Le, 0.0);
        }
        // sum_j x_ij = min(1, sum_j m_aj + m_bj)
        let d = b.id(VarKind::Covered { link: i });
        let mut terms: Vec<(usize, f64)> = (0..m).map(|j| (b.id(x(i, j)), 1.0)).collect();
        terms.push((d, -1.0));
        b.row(format!("covered_def_{i}"), terms, Sense::Eq, 0.0);
        for k in [ka, kb] {
            for j in 0..m {
                let terms = vec![(d, 1.0), (b.id(mk(k, j)), -1.0)];
                b.row(format!("covered_lb_{i}_{k}_{j}"), terms, Sense::Ge, 0.0);
            }
        }
        let mut terms = vec![(d, 1.0)];
        for j in 0..m {
            terms.push((b.id(mk(ka, j)), -1.0));
            terms.push((b.id(mk(kb, j)), -1.0));
        }
        b.row(format!("covered_ub_{i}"), terms, Sense::Le, 0.0);
    }

    match config.semantics {
        PathSemantics::Learnable => {
            for i in 0..n_links {
                let mut terms = vec![(b.id(VarKind::Learnable { link: i }), 2.0 * m as f64)];
                for j in 0..m {
                    terms.push((b.id(x(i, j)), -1.0));
                    terms.push((b.id(VarKind::Reach { link: i, monitor: j }), -1.0));
                }
                b.row(format!("learn_{i}"), terms, Sense::Ge, 0.0);
            }
            for i in 0..n_links {
                for j in 0..m {
                    for k in 0..n_nodes {
                        let path = &paths.get(NodeId(k), LinkId(i)).links;
                        let len = path.len() as f64;
                        let mut terms = vec![(b.id(VarKind::Reach { link: i, monitor: j }), len)];
                        for h in path {
                            terms.push((b.id(VarKind::Learnable { link: h.0 }), -1.0));
                        }
                        terms.push((b.id(p(i, j)), -len));
                        terms.push((b.id(mk(k, j)), len));
                        b.row(format!("reach_{i}_{j}_{k}"), terms, Sense::Le, len);
                    }
                }
            }
        }
        PathSemantics::StrictSameMonitor => {
            for i in 0..n_links {
                for j in 0..m {
                    for k in 0..n_nodes {
                        let path = &paths.get(NodeId(k), LinkId(i)).links;
                        let len = path.len() as f64;
                        let mut terms = vec![(b.id(p(i, j)), len)];
                        for h in path {
                            terms.push((b.id(x(h.0, j)), -1.0));
                            terms.push((b.id(p(h.0, j)), -1.0));
                        }
                        terms.push((b.id(mk(k, j)), len));
                        b.row(format!("strict_{i}_{j}_{k}"), terms, Sense::Le, len);
                    }
                }
            }
        }
    }
    for i in 0..n_links {
        b.row(
            format!("estimable_{i}"),
            vec![(b.id(VarKind::Learnable { link: i }), 1.0)],
            Sense::Eq,
            1.0,
        );
        for j in 0..m {
            let terms = vec![(b.id(p(i, j)), 1.0), (b.id(VarKind::Reach { link: i, monitor: j }), -1.0)];
            b.row(format!("couple_{i}_{j}"), terms, Sense::Le, 0.0);
        }
    }

    for j in 0..m {
        let terms = (0..n_nodes).map(|k| (b.id(mk(k, j)), 1.0)).collect();
        b.row(format!("place_{j}"), terms, Sense::Eq, 1.0);
    }
    for k in 0..n_nodes {
        let terms = (0..m).map(|j| (b.id(mk(k, j)), 1.0)).collect();
        b.row(format!("node_{k}"), terms, Sense::Le, 1.0);
        if !site_nodes.contains(&NodeId(k)) {
            let terms = (0..m).map(|j| (b.id(mk(k, j)), 1.0)).collect();
            b.row(format!("nosite_{k}"), terms, Sense::Eq, 0.0);
        }
    }

    // z = p AND m
    let z_keys: Vec<(usize, usize, usize, usize)> = b
        .variables
        .iter()
        .enumerate()
        .filter_map(|(id, v)| match v.kind {
            VarKind::IndirectAt { link, monitor, node } => Some((id, link, monitor, node)),
            _ => None,
        })
        .collect();
    for (z, i, j, k) in z_keys {
        let pv = b.id(p(i, j));
        let mv = b.id(mk(k, j));
        b.row(format!("z_p_{i}_{j}_{k}"), vec![(z, 1.0), (pv, -1.0)], Sense::Le, 0.0);
        b.row(format!("z_m_{i}_{j}_{k}"), vec![(z, 1.0), (mv, -1.0)], Sense::Le, 0.0);
        b.row(
            format!("z_and_{i}_{j}_{k}"),
            vec![(z, 1.0), (pv, -1.0), (mv, -1.0)],
            Sense::Ge,
            -1.0,
        );
    }

    if let Some(caps) = &capacities {
        for (j, &cap) in caps.iter().enumerate() {
            let l = b.id(VarKind::Load { monitor: j });
            let mut terms = vec![(l, 1.0)];
            for i in 0..n_links {
                terms.push((b.id(x(i, j)), -1.0));
                terms.push((b.id(p(i, j)), -1.0));
            }
            b.row(format!("load_def_{j}"), terms, Sense::Eq, 0.0);
            b.row(format!("cap_{j}"), vec![(l, 1.0)], Sense::Le, cap as f64);
        }
    }

    Ok(IlpModel {
        net: net.clone(),
        config: config.clone(),
        mode,
        capacities,
        sites,
        paths,
        variables: b.variables,
        constraints: b.constraints,
        objective,
        lookup: b.lookup,
    })
}

fn coef_direct(net: &Network, link: usize) -> Result<f64, IlpError> {
    Ok(direct_qfi(net.werner(LinkId(link)))?)
}
