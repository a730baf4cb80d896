//! Closed-form optimal monitoring for star networks.
//!
//! Links are sorted by decreasing Werner parameter (ties by lower index).
//! Monitor `j` sits on the leaf of the `j`-th best link and measures it
//! directly; the remaining `n - m` links are cut into consecutive blocks of
//! `L* - 1` in sorted order, block `j` being measured by monitor `j` through
//! the hub. Runtime is dominated by the sort.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ilp::{DirectAssignment, IndirectAssignment, MonitoringPlan, Objective, PlanStatus};
use crate::net::{LinkId, MonitorPath, Network, TopologyClass};
use crate::qfi::{direct_qfi, indirect_qfi, IndirectMode, QfiError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StarError {
    #[error("network is not a star")]
    NotAStar,
    #[error("{m} monitors on a star with {n} links")]
    InvalidMonitorCount { m: usize, n: usize },
    #[error("load limit {l_star} outside feasible range [{min}, {max}]")]
    OverheadOutOfRange { l_star: usize, min: usize, max: usize },
    #[error(
        "partition infeasible: n={n} m={m} L*={l_star} gives M*={m_star}, C_ind={c_ind}, C*={c_star}"
    )]
    PartitionInfeasible {
        n: usize,
        m: usize,
        l_star: usize,
        m_star: usize,
        c_ind: usize,
        c_star: usize,
    },
    #[error(transparent)]
    Qfi(#[from] QfiError),
}

/// Smallest per-monitor load that can cover `n` links with `m` monitors.
pub fn min_overhead(n: usize, m: usize) -> usize {
    if m == 0 {
        return n;
    }
    if m >= n {
        1
    } else {
        (n - m).div_ceil(m) + 1
    }
}

/// Inclusive range of admissible load limits for `n` links and `m` monitors.
pub fn feasible_overhead_range(n: usize, m: usize) -> Result<(usize, usize), StarError> {
    if m == 0 || m > n {
        return Err(StarError::InvalidMonitorCount { m, n });
    }
    Ok((min_overhead(n, m), n))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StarPartition {
    /// Links by decreasing Werner parameter.
    pub order: Vec<LinkId>,
    /// Monitors that carry indirect links (`M*`).
    pub m_star: usize,
    /// Indirect links per monitor (`C_ind = L* - 1`).
    pub c_ind: usize,
    /// Links measured indirectly (`C* = n - m`).
    pub c_star: usize,
    /// `sets[j]` is measured indirectly by the monitor on `order[j]`.
    pub sets: Vec<Vec<LinkId>>,
}

/// Sizes of the indirect sets for `n` links, `m` monitors and load limit `l_star`.
pub fn partition_sizes(n: usize, m: usize, l_star: usize) -> Result<Vec<usize>, StarError> {
    let (min, max) = feasible_overhead_range(n, m)?;
    if l_star < min || l_star > max {
        return Err(StarError::OverheadOutOfRange { l_star, min, max });
    }
    let m_star = n.div_ceil(l_star);
    let c_ind = l_star - 1;
    let c_star = n - m;
    let infeasible = StarError::PartitionInfeasible {
        n,
        m,
        l_star,
        m_star,
        c_ind,
        c_star,
    };
    if m_star > m || c_ind * (m_star - 1) > c_star || c_star > c_ind * m_star {
        return Err(infeasible);
    }
    let mut sizes = vec![c_ind; m_star - 1];
    sizes.push(c_star - c_ind * (m_star - 1));
    Ok(sizes)
}

fn sorted_links(werners: &[f64]) -> Vec<LinkId> {
    let mut order: Vec<LinkId> = (0..werners.len()).map(LinkId).collect();
    order.sort_by(|a, b| werners[b.0].total_cmp(&werners[a.0]).then(a.cmp(b)));
    order
}

pub fn star_partition(werners: &[f64], m: usize, l_star: usize) -> Result<StarPartition, StarError> {
    let n = werners.len();
    let sizes = partition_sizes(n, m, l_star)?;
    let order = sorted_links(werners);
    let mut sets = Vec::with_capacity(sizes.len());
    let mut next = m;
    for size in &sizes {
        sets.push(order[next..next + size].to_vec());
        next += size;
    }
    Ok(StarPartition {
        m_star: sizes.len(),
        c_ind: l_star - 1,
        c_star: n - m,
        order,
        sets,
    })
}

/// Optimal plan for a star. `l_star = None` places no load limit.
pub fn star_optimal_plan(net: &Network, m: usize, l_star: Option<usize>) -> Result<MonitoringPlan, StarError> {
    let hub = match net.classify() {
        TopologyClass::Star { hub } => hub,
        _ => return Err(StarError::NotAStar),
    };
    let n = net.link_count();
    let werners = net.werners();
    let limit = l_star.unwrap_or(n);
    let part = star_partition(&werners, m, limit)?;

    let leaf_of = |l: LinkId| net.link(l).other(hub);
    let placements: Vec<_> = part.order[..m].iter().map(|&l| leaf_of(l)).collect();
    let mut direct = Vec::with_capacity(m);
    let mut indirect = Vec::with_capacity(part.c_star);
    let mut loads = vec![1; m];
    let mut trace = 0.0;
    for (j, &link) in part.order[..m].iter().enumerate() {
        direct.push(DirectAssignment { link, monitor: j });
        trace += direct_qfi(werners[link.0])?;
    }
    for (j, set) in part.sets.iter().enumerate() {
        let own = part.order[j];
        for &target in set {
            indirect.push(IndirectAssignment {
                link: target,
                monitor: j,
                path: MonitorPath {
                    monitor: placements[j],
                    target,
                    links: vec![own, target],
                },
            });
            loads[j] += 1;
            trace += indirect_qfi(&[werners[own.0], werners[target.0]], 1, IndirectMode::LemmaForm)?;
        }
    }
    let mut plan = MonitoringPlan {
        formulation: if l_star.is_some() { Objective::Qmf } else { Objective::Qf },
        mode: IndirectMode::LemmaForm,
        placements,
        direct,
        indirect,
        loads,
        capacities: l_star.map(|l| vec![l; m]),
        trace,
        status: PlanStatus::Constructed,
    };
    plan.canonicalize();
    Ok(plan)
}
