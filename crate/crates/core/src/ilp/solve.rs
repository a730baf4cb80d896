//! Depth-first branch and bound over placements, then link assignments.
//!
//! Placements are enumerated as ascending node combinations (monitors are
//! interchangeable when capacities are uniform, so the labelling is canonical)
//! or as ordered tuples when capacities differ. For each placement every link
//! is assigned in index order; the options of a link follow variable order:
//! `x_{i,0..m}` before `p_{i,0..m}`. The bound is the running objective plus
//! the best attainable coefficient of every unassigned link. An incumbent is
//! only replaced by a strictly better leaf, so among equal optima the first
//! one in search order is returned.

use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::time::{Duration, Instant};

use rayon::prelude::*;

use super::model::{IlpModel, PathSemantics};
use super::plan::{DirectAssignment, IndirectAssignment, MonitoringPlan, PlanStatus};
use super::IlpError;
use crate::net::{LinkId, MonitorPath};

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    pub node_limit: Option<u64>,
    pub time_limit: Option<Duration>,
    /// Worker threads; 1 searches sequentially.
    pub threads: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            node_limit: None,
            time_limit: None,
            threads: 1,
        }
    }
}

fn tolerance(v: f64) -> f64 {
    1e-12 * v.abs().max(1.0)
}

fn improves(value: f64, incumbent: f64) -> bool {
    incumbent == f64::NEG_INFINITY || value > incumbent + tolerance(incumbent)
}

#[derive(Debug, Clone, Copy)]
struct Choice {
    monitor: usize,
    direct: bool,
    coef: f64,
}

#[derive(Debug, Clone)]
struct Leaf {
    value: f64,
    placement: Vec<usize>,
    choices: Vec<Choice>,
}

struct Budget {
    nodes: AtomicU64,
    node_limit: Option<u64>,
    deadline: Option<Instant>,
    aborted: AtomicBool,
}

impl Budget {
    fn tick(&self) -> bool {
        if self.aborted.load(Ordering::Relaxed) {
            return false;
        }
        let n = self.nodes.fetch_add(1, Ordering::Relaxed) + 1;
        let over_nodes = self.node_limit.is_some_and(|l| n > l);
        let over_time = n.is_multiple_of(1024) && self.deadline.is_some_and(|d| Instant::now() >= d);
        if over_nodes || over_time {
            self.aborted.store(true, Ordering::Relaxed);
            return false;
        }
        true
    }
}

/// Best objective seen by any worker, used only to discard strictly worse subtrees.
struct SharedBest(AtomicU64);

impl SharedBest {
    fn get(&self) -> f64 {
        f64::from_bits(self.0.load(Ordering::Relaxed))
    }

    fn offer(&self, v: f64) {
        let mut cur = self.0.load(Ordering::Relaxed);
        while v > f64::from_bits(cur) {
            match self
                .0
                .compare_exchange_weak(cur, v.to_bits(), Ordering::Relaxed, Ordering::Relaxed)
            {
                Ok(_) => break,
                Err(actual) => cur = actual,
            }
        }
    }
}

#[derive(Clone, Copy)]
struct Search<'a> {
    model: &'a IlpModel,
    n_links: usize,
    monitors: usize,
    strict: bool,
    budget: &'a Budget,
    shared: Option<&'a SharedBest>,
}

struct AssignState {
    options: Vec<Vec<Choice>>,
    suffix: Vec<f64>,
    paths: Vec<Vec<Vec<LinkId>>>,
    loads: Vec<usize>,
    choices: Vec<Choice>,
}

impl<'a> Search<'a> {
    fn prune(&self, bound: f64, incumbent: f64) -> bool {
        if incumbent > f64::NEG_INFINITY && bound <= incumbent + tolerance(incumbent) {
            return true;
        }
        match self.shared {
            Some(s) => {
                let best = s.get();
                bound < best - tolerance(best)
            }
            None => false,
        }
    }

    fn placement_options(&self, placement: &[usize]) -> AssignState {
        let sites: Vec<_> = placement.iter().map(|&s| &self.model.sites[s]).collect();
        let mut options = Vec::with_capacity(self.n_links);
        for i in 0..self.n_links {
            let direct: Vec<Choice> = sites
                .iter()
                .enumerate()
                .filter(|(_, s)| s.endpoint[i])
                .map(|(j, s)| Choice {
                    monitor: j,
                    direct: true,
                    coef: s.coef[i],
                })
                .collect();
            if direct.is_empty() {
                options.push(
                    sites
                        .iter()
                        .enumerate()
                        .map(|(j, s)| Choice {
                            monitor: j,
                            direct: false,
                            coef: s.coef[i],
                        })
                        .collect(),
                );
            } else {
                options.push(direct);
            }
        }
        let mut suffix = vec![0.0; self.n_links + 1];
        for i in (0..self.n_links).rev() {
            let best = options[i]
                .iter()
                .map(|c: &Choice| c.coef)
                .fold(f64::NEG_INFINITY, f64::max);
            suffix[i] = suffix[i + 1] + best;
        }
        AssignState {
            options,
            suffix,
            paths: sites.iter().map(|s| s.paths.clone()).collect(),
            loads: vec![0; self.monitors],
            choices: Vec::with_capacity(self.n_links),
        }
    }

    fn strict_ok(&self, st: &AssignState, i: usize, c: &Choice) -> bool {
        if !c.direct {
            for h in &st.paths[c.monitor][i] {
                if h.0 < i && st.choices[h.0].monitor != c.monitor {
                    return false;
                }
            }
        }
        // earlier indirect links routed through link i must share its monitor
        st.choices.iter().enumerate().all(|(prev, pc)| {
            pc.direct || pc.monitor == c.monitor || !st.paths[pc.monitor][prev].contains(&LinkId(i))
        })
    }

    fn assign(&self, st: &mut AssignState, i: usize, value: f64, incumbent: &mut f64, best: &mut Option<Vec<Choice>>) {
        if !self.budget.tick() {
            return;
        }
        if i == self.n_links {
            if improves(value, *incumbent) {
                *incumbent = value;
                *best = Some(st.choices.clone());
                if let Some(s) = self.shared {
                    s.offer(value);
                }
            }
            return;
        }
        if self.prune(value + st.suffix[i], *incumbent) {
            return;
        }
        if let Some(caps) = &self.model.capacities {
            let spare: usize = caps.iter().zip(&st.loads).map(|(c, l)| c.saturating_sub(*l)).sum();
            if spare < self.n_links - i {
                return;
            }
        }
        for k in 0..st.options[i].len() {
            let c = st.options[i][k];
            if let Some(caps) = &self.model.capacities {
                if st.loads[c.monitor] >= caps[c.monitor] {
                    continue;
                }
            }
            if self.strict && !self.strict_ok(st, i, &c) {
                continue;
            }
            st.loads[c.monitor] += 1;
            st.choices.push(c);
            self.assign(st, i + 1, value + c.coef, incumbent, best);
            st.choices.pop();
            st.loads[c.monitor] -= 1;
            if self.budget.aborted.load(Ordering::Relaxed) {
                return;
            }
        }
    }

    fn solve_placement(&self, placement: &[usize], incumbent: &mut f64) -> Option<Leaf> {
        let mut st = self.placement_options(placement);
        let mut best = None;
        self.assign(&mut st, 0, 0.0, incumbent, &mut best);
        best.map(|choices| Leaf {
            value: *incumbent,
            placement: placement.to_vec(),
            choices,
        })
    }

    /// Upper bound on any completion of a partial placement.
    fn placement_bound(&self, chosen: &[usize], remaining: &[usize]) -> f64 {
        (0..self.n_links)
            .map(|i| {
                chosen
                    .iter()
                    .chain(remaining)
                    .map(|&s| self.model.sites[s].coef[i])
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .sum()
    }

    fn uniform(&self) -> bool {
        match &self.model.capacities {
            None => true,
            Some(c) => c.windows(2).all(|w| w[0] == w[1]),
        }
    }

    fn placements_dfs(&self, chosen: &mut Vec<usize>, incumbent: &mut f64, best: &mut Option<Leaf>) {
        if self.budget.aborted.load(Ordering::Relaxed) {
            return;
        }
        if chosen.len() == self.monitors {
            if let Some(leaf) = self.solve_placement(chosen, incumbent) {
                *best = Some(leaf);
            }
            return;
        }
        let n_sites = self.model.sites.len();
        let candidates: Vec<usize> = if self.uniform() {
            let start = chosen.last().map_or(0, |&s| s + 1);
            let need = self.monitors - chosen.len();
            (start..n_sites.saturating_sub(need - 1)).collect()
        } else {
            (0..n_sites).filter(|s| !chosen.contains(s)).collect()
        };
        for s in candidates {
            if !self.budget.tick() {
                return;
            }
            chosen.push(s);
            let remaining: Vec<usize> = if self.uniform() {
                (s + 1..n_sites).collect()
            } else {
                (0..n_sites).filter(|t| !chosen.contains(t)).collect()
            };
            let complete = chosen.len() == self.monitors;
            let bound = if complete {
                self.placement_bound(chosen, &[])
            } else {
                self.placement_bound(chosen, &remaining)
            };
            if !self.prune(bound, *incumbent) {
                self.placements_dfs(chosen, incumbent, best);
            }
            chosen.pop();
        }
    }

    fn all_placements(&self, chosen: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if chosen.len() == self.monitors {
            out.push(chosen.clone());
            return;
        }
        let n_sites = self.model.sites.len();
        let candidates: Vec<usize> = if self.uniform() {
            let start = chosen.last().map_or(0, |&s| s + 1);
            (start..n_sites).collect()
        } else {
            (0..n_sites).filter(|s| !chosen.contains(s)).collect()
        };
        for s in candidates {
            chosen.push(s);
            self.all_placements(chosen, out);
            chosen.pop();
        }
    }

    fn leaf_plan(&self, leaf: &Leaf, status: PlanStatus) -> MonitoringPlan {
        let placements: Vec<_> = leaf.placement.iter().map(|&s| self.model.sites[s].node).collect();
        let mut direct = Vec::new();
        let mut indirect = Vec::new();
        let mut loads = vec![0; self.monitors];
        for (i, c) in leaf.choices.iter().enumerate() {
            loads[c.monitor] += 1;
            if c.direct {
                direct.push(DirectAssignment {
                    link: LinkId(i),
                    monitor: c.monitor,
                });
            } else {
                let site = &self.model.sites[leaf.placement[c.monitor]];
                indirect.push(IndirectAssignment {
                    link: LinkId(i),
                    monitor: c.monitor,
                    path: MonitorPath {
                        monitor: site.node,
                        target: LinkId(i),
                        links: site.paths[i].clone(),
                    },
                });
            }
        }
        MonitoringPlan {
            formulation: self.model.config.objective,
            mode: self.model.mode,
            placements,
            direct,
            indirect,
            loads,
            capacities: self.model.capacities.clone(),
            trace: leaf.choices.iter().map(|c| c.coef).sum(),
            status,
        }
    }
}

/// Solve `model` exactly, or report the incumbent if a budget fires first.
pub fn solve(model: &IlpModel, options: &SolveOptions) -> Result<MonitoringPlan, IlpError> {
    let budget = Budget {
        nodes: AtomicU64::new(0),
        node_limit: options.node_limit,
        deadline: options.time_limit.map(|t| Instant::now() + t),
        aborted: AtomicBool::new(false),
    };
    let shared = SharedBest(AtomicU64::new(f64::NEG_INFINITY.to_bits()));
    let strict = model.config.semantics == PathSemantics::StrictSameMonitor;
    let base = Search {
        model,
        n_links: model.net.link_count(),
        monitors: model.config.monitors,
        strict,
        budget: &budget,
        shared: None,
    };

    let best: Option<Leaf> = if options.threads <= 1 {
        let mut incumbent = f64::NEG_INFINITY;
        let mut best = None;
        base.placements_dfs(&mut Vec::new(), &mut incumbent, &mut best);
        best
    } else {
        let mut placements = Vec::new();
        base.all_placements(&mut Vec::new(), &mut placements);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(options.threads)
            .build()
            .map_err(|e| IlpError::WorkerPool(e.to_string()))?;
        let results: Vec<Option<Leaf>> = pool.install(|| {
            placements
                .par_iter()
                .map(|p| {
                    let search = Search {
                        shared: Some(&shared),
                        ..base
                    };
                    let mut incumbent = f64::NEG_INFINITY;
                    search.solve_placement(p, &mut incumbent)
                })
                .collect()
        });
        let max = results
            .iter()
            .flatten()
            .map(|l| l.value)
            .fold(f64::NEG_INFINITY, f64::max);
        results
            .into_iter()
            .flatten()
            .find(|l| l.value >= max - tolerance(max))
    };

    let nodes = budget.nodes.load(Ordering::Relaxed);
    if budget.aborted.load(Ordering::Relaxed) {
        return Err(IlpError::BudgetExhausted {
            nodes,
            incumbent: best.map(|l| Box::new(base.leaf_plan(&l, PlanStatus::BestEffort))),
        });
    }
    match best {
        Some(leaf) => Ok(base.leaf_plan(&leaf, PlanStatus::Optimal)),
        None => Err(IlpError::Infeasible),
    }
}
