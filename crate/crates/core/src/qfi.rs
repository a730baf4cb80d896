//! Quantum Fisher information of Werner-state probes.
//!
//! A probe distributed along a path is a Werner state `rho(W)` with
//! `W = prod w_l^2`. The QFI of `rho(W)` in `W` is `3 / ((1 + 3W)(1 - W))`,
//! and every probe contributes a rank-one block to the information matrix
//! over the link parameters on its path (chain rule through `W`).

use nalgebra::{DMatrix, Matrix4, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::net::{LinkId, MonitorPath, Network};

/// Eigenvalues below this are treated as PSD noise.
pub const PSD_TOLERANCE: f64 = 1e-10;
/// Relative eigenvalue threshold below which a direction is considered unestimable.
pub const SINGULAR_RELATIVE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QfiError {
    #[error("werner parameter {0} outside [0, 1)")]
    Domain(f64),
    #[error("lemma form is defined for two-link paths only, got {0} links")]
    ModeArityMismatch(usize),
    #[error("target position {target} outside path of {len} links")]
    TargetOutOfRange { target: usize, len: usize },
    #[error("no probes to assemble")]
    EmptyProbeSet,
    #[error("information matrix is singular; unestimable links: {links:?}")]
    SingularQfim { links: Vec<LinkId> },
}

/// How the information of an indirectly monitored link is scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IndirectMode {
    /// `12 w_t w_j prod_{l != t} w_l^2 prod_{l != j} w_l^2 / ((1+3W)(1-W))` with `j` the
    /// first (monitor-side) link of the path.
    CrossTerm,
    /// `12 w_c^2 w_t^4 / ((1 + 3 w_c^2 w_t^2)(1 - w_c^2 w_t^2))` for a two-link path with
    /// companion `c` and target `t`.
    LemmaForm,
    /// Diagonal QFI entry of the target parameter: `(dW/dw_t)^2 * 3 / ((1+3W)(1-W))`.
    ChainRule,
}

impl IndirectMode {
    pub fn as_str(self) -> &'static str {
        match self {
            IndirectMode::CrossTerm => "cross-term",
            IndirectMode::LemmaForm => "lemma-form",
            IndirectMode::ChainRule => "chain-rule",
        }
    }
}

impl std::str::FromStr for IndirectMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cross-term" => Ok(IndirectMode::CrossTerm),
            "lemma-form" => Ok(IndirectMode::LemmaForm),
            "chain-rule" => Ok(IndirectMode::ChainRule),
            other => Err(format!("unknown indirect mode `{other}`")),
        }
    }
}

fn check_domain(w: f64) -> Result<(), QfiError> {
    if (0.0..1.0).contains(&w) {
        Ok(())
    } else {
        Err(QfiError::Domain(w))
    }
}

/// QFI of `rho(W)` with respect to `W` itself.
pub fn werner_qfi(big_w: f64) -> Result<f64, QfiError> {
    check_domain(big_w)?;
    Ok(3.0 / ((1.0 + 3.0 * big_w) * (1.0 - big_w)))
}

/// QFI gained by directly monitoring a link with Werner parameter `w`.
pub fn direct_qfi(w: f64) -> Result<f64, QfiError> {
    check_domain(w)?;
    let w2 = w * w;
    Ok(12.0 * w2 / ((1.0 + 3.0 * w2) * (1.0 - w2)))
}

/// QFI attributed to the link at `target` when probing along `weights`.
pub fn indirect_qfi(weights: &[f64], target: usize, mode: IndirectMode) -> Result<f64, QfiError> {
    if target >= weights.len() {
        return Err(QfiError::TargetOutOfRange {
            target,
            len: weights.len(),
        });
    }
    for &w in weights {
        check_domain(w)?;
    }
    let big_w: f64 = weights.iter().map(|w| w * w).product();
    let denom = (1.0 + 3.0 * big_w) * (1.0 - big_w);
    let product_except = |skip: usize| -> f64 {
        weights
            .iter()
            .enumerate()
            .filter(|&(l, _)| l != skip)
            .map(|(_, w)| w * w)
            .product()
    };
    match mode {
        IndirectMode::LemmaForm => {
            if weights.len() != 2 {
                return Err(QfiError::ModeArityMismatch(weights.len()));
            }
            let wt = weights[target];
            let wc = weights[1 - target];
            Ok(12.0 * wc.powi(2) * wt.powi(4) / denom)
        }
        IndirectMode::CrossTerm => {
            let j = 0;
            let num = 12.0 * weights[target] * weights[j] * product_except(target) * product_except(j);
            Ok(num / denom)
        }
        IndirectMode::ChainRule => {
            let grad = 2.0 * weights[target] * product_except(target);
            Ok(grad * grad * 3.0 / denom)
        }
    }
}

/// Independent check of [`werner_qfi`]: QFI of the 4x4 density matrix `rho(W)` from its
/// spectral decomposition, `sum_{kl} 2 |<k|d rho|l>|^2 / (lambda_k + lambda_l)`.
pub fn werner_qfi_oracle(big_w: f64) -> Result<f64, QfiError> {
    check_domain(big_w)?;
    let mut bell = Matrix4::<f64>::zeros();
    for &(r, c) in &[(0, 0), (0, 3), (3, 0), (3, 3)] {
        bell[(r, c)] = 0.5;
    }
    let identity = Matrix4::<f64>::identity() / 4.0;
    let rho = bell * big_w + identity * (1.0 - big_w);
    let drho = bell - identity;

    let eig = SymmetricEigen::new(rho);
    let basis = eig.eigenvectors;
    let projected = basis.transpose() * drho * basis;
    let mut qfi = 0.0;
    for k in 0..4 {
        for l in 0..4 {
            let s = eig.eigenvalues[k] + eig.eigenvalues[l];
            if s > 1e-14 {
                qfi += 2.0 * projected[(k, l)].powi(2) / s;
            }
        }
    }
    Ok(qfi)
}

/// One probe path measured `samples` times, with `dW/dw_l` for every link on it.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeContribution {
    pub path: MonitorPath,
    pub samples: u64,
    pub big_w: f64,
    pub sensitivities: Vec<(LinkId, f64)>,
}

impl ProbeContribution {
    pub fn new(net: &Network, path: MonitorPath, samples: u64) -> Self {
        let big_w = net.path_product(&path);
        let sensitivities = path
            .links
            .iter()
            .enumerate()
            .map(|(pos, &l)| {
                let rest: f64 = path
                    .links
                    .iter()
                    .enumerate()
                    .filter(|&(q, _)| q != pos)
                    .map(|(_, &o)| net.werner(o).powi(2))
                    .product();
                (l, 2.0 * net.werner(l) * rest)
            })
            .collect();
        ProbeContribution {
            path,
            samples,
            big_w,
            sensitivities,
        }
    }

    pub fn fisher_weight(&self) -> f64 {
        self.samples as f64 * 3.0 / ((1.0 + 3.0 * self.big_w) * (1.0 - self.big_w))
    }
}

/// Symmetric information matrix over a set of link parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct QfimModel {
    params: Vec<LinkId>,
    matrix: DMatrix<f64>,
    provenance: Vec<(MonitorPath, u64)>,
}

impl QfimModel {
    pub fn parameters(&self) -> &[LinkId] {
        &self.params
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn provenance(&self) -> &[(MonitorPath, u64)] {
        &self.provenance
    }

    fn position(&self, link: LinkId) -> Option<usize> {
        self.params.binary_search(&link).ok()
    }

    /// Matrix entry for a pair of links; zero for links outside the parameter set.
    pub fn entry(&self, a: LinkId, b: LinkId) -> f64 {
        match (self.position(a), self.position(b)) {
            (Some(i), Some(j)) => self.matrix[(i, j)],
            _ => 0.0,
        }
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        SymmetricEigen::new(self.matrix.clone())
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn is_psd(&self) -> bool {
        self.min_eigenvalue() >= -PSD_TOLERANCE
    }

    pub fn is_symmetric(&self) -> bool {
        self.matrix == self.matrix.transpose()
    }

    pub fn scaled(&self, factor: f64) -> QfimModel {
        QfimModel {
            params: self.params.clone(),
            matrix: &self.matrix * factor,
            provenance: self.provenance.clone(),
        }
    }
}

pub fn assemble_qfim(probes: &[ProbeContribution]) -> Result<QfimModel, QfiError> {
    let mut params: Vec<LinkId> = probes
        .iter()
        .flat_map(|p| p.path.links.iter().copied())
        .collect();
    params.sort_unstable();
    params.dedup();
    assemble_qfim_over(&params, probes)
}

/// Assemble over an explicit parameter set; links on probe paths must belong to it.
pub fn assemble_qfim_over(params: &[LinkId], probes: &[ProbeContribution]) -> Result<QfimModel, QfiError> {
    if probes.is_empty() {
        return Err(QfiError::EmptyProbeSet);
    }
    let mut params = params.to_vec();
    params.sort_unstable();
    params.dedup();
    let n = params.len();
    let mut matrix = DMatrix::<f64>::zeros(n, n);
    for probe in probes {
        check_domain(probe.big_w)?;
        let weight = probe.fisher_weight();
        let idx: Vec<(usize, f64)> = probe
            .sensitivities
            .iter()
            .map(|&(l, s)| {
                let pos = params
                    .binary_search(&l)
                    .expect("probe link belongs to the parameter set");
                (pos, s)
            })
            .collect();
        for &(a, sa) in &idx {
            for &(b, sb) in &idx {
                matrix[(a, b)] += weight * (sa * sb);
            }
        }
    }
    Ok(QfimModel {
        params,
        matrix,
        provenance: probes.iter().map(|p| (p.path.clone(), p.samples)).collect(),
    })
}

/// Cramér–Rao lower bounds derived from an information matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Qcrb {
    pub per_link: Vec<(LinkId, f64)>,
    pub inverse_trace: f64,
}

impl Qcrb {
    pub fn bound(&self, link: LinkId) -> Option<f64> {
        self.per_link.iter().find(|(l, _)| *l == link).map(|&(_, b)| b)
    }

    /// Bounds for `samples` independent repetitions of every probe.
    pub fn scaled_by_samples(&self, samples: f64) -> Qcrb {
        Qcrb {
            per_link: self.per_link.iter().map(|&(l, b)| (l, b / samples)).collect(),
            inverse_trace: self.inverse_trace / samples,
        }
    }
}

pub fn qcrb(model: &QfimModel) -> Result<Qcrb, QfiError> {
    let eig = SymmetricEigen::new(model.matrix.clone());
    let max = eig.eigenvalues.iter().copied().fold(0.0_f64, f64::max);
    let threshold = SINGULAR_RELATIVE_TOLERANCE * max;
    let mut null_links = Vec::new();
    for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda <= threshold || max == 0.0 {
            for (pos, &link) in model.params.iter().enumerate() {
                if eig.eigenvectors[(pos, k)].abs() > 1e-6 && !null_links.contains(&link) {
                    null_links.push(link);
                }
            }
        }
    }
    if !null_links.is_empty() {
        null_links.sort_unstable();
        return Err(QfiError::SingularQfim { links: null_links });
    }
    let inverse = model
        .matrix
        .clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| QfiError::SingularQfim {
            links: model.params.clone(),
        })?;
    let per_link: Vec<(LinkId, f64)> = model
        .params
        .iter()
        .enumerate()
        .map(|(pos, &l)| (l, inverse[(pos, pos)]))
        .collect();
    let inverse_trace = per_link.iter().map(|&(_, b)| b).sum();
    Ok(Qcrb {
        per_link,
        inverse_trace,
    })
}
