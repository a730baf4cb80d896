//! Bell-measurement simulation, maximum-likelihood recovery of Werner
//! parameters and Monte-Carlo MSE studies.

use std::fmt::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ilp::{evaluate_plan, IlpError, MonitoringPlan};
use crate::net::{LinkId, MonitorPath, Network};
use crate::qfi::QfiError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("a probe needs at least one shot")]
    NoShots,
    #[error("record for {0} does not describe a single-link path")]
    NotDirect(LinkId),
    #[error("indirect record for {target} does not pass through {shared}")]
    MismatchedRecords { shared: LinkId, target: LinkId },
    #[error("link {shared} estimated at zero while {target} shows correlation; {target} is unidentifiable")]
    DegenerateLikelihood { shared: LinkId, target: LinkId },
    #[error("plan geometry not supported by the estimators: {0}")]
    UnsupportedGeometry(String),
    #[error("study needs a non-empty sample grid and at least one trial")]
    EmptyStudy,
    #[error(transparent)]
    Plan(#[from] IlpError),
    #[error(transparent)]
    Qfi(#[from] QfiError),
}

/// Bell outcome probabilities for a probe with path product `big_w`:
/// `[Φ00, Φ01, Φ10, Φ11]`.
pub fn outcome_probabilities(big_w: f64) -> [f64; 4] {
    let other = (1.0 - big_w) / 4.0;
    [(1.0 + 3.0 * big_w) / 4.0, other, other, other]
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeasurementRecord {
    pub path: MonitorPath,
    pub shots: u64,
    pub counts: [u64; 4],
    pub seed: u64,
}

impl MeasurementRecord {
    pub fn n00(&self) -> u64 {
        self.counts[0]
    }

    /// Empirical estimate of the path product, `(4 N00 - N) / (3 N)`.
    pub fn k(&self) -> f64 {
        let n = self.shots as f64;
        (4.0 * self.counts[0] as f64 - n) / (3.0 * n)
    }

    fn log_likelihood(&self, big_w: f64) -> f64 {
        let n00 = self.counts[0] as f64;
        let rest = (self.shots - self.counts[0]) as f64;
        let term = |count: f64, p: f64| if count == 0.0 { 0.0 } else { count * p.ln() };
        term(n00, (1.0 + 3.0 * big_w) / 4.0) + term(rest, (1.0 - big_w) / 4.0)
    }
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed of the random stream for one probe of one trial.
pub fn stream_seed(seed: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(splitmix(seed), |acc, &p| splitmix(acc ^ splitmix(p)))
}

/// Draw `shots` Bell outcomes on the probe state of `path`.
pub fn simulate_probe(net: &Network, path: &MonitorPath, shots: u64, seed: u64) -> Result<MeasurementRecord, SimError> {
    if shots == 0 {
        return Err(SimError::NoShots);
    }
    let probs = outcome_probabilities(net.path_product(path));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = [0u64; 4];
    let mut left = shots;
    let mut mass = 1.0;
    for (i, &p) in probs.iter().enumerate().take(3) {
        let q = (p / mass).clamp(0.0, 1.0);
        let draw = if left == 0 {
            0
        } else {
            Binomial::new(left, q).expect("probability in [0, 1]").sample(&mut rng)
        };
        counts[i] = draw;
        left -= draw;
        mass -= p;
    }
    counts[3] = left;
    Ok(MeasurementRecord {
        path: path.clone(),
        shots,
        counts,
        seed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationResult {
    pub links: Vec<LinkId>,
    pub estimates: Vec<f64>,
    pub clamped: Vec<bool>,
}

impl EstimationResult {
    pub fn estimate(&self, link: LinkId) -> Option<f64> {
        self.links.iter().position(|&l| l == link).map(|i| self.estimates[i])
    }

    pub fn any_clamped(&self) -> bool {
        self.clamped.iter().any(|&c| c)
    }

    pub fn squared_errors(&self, net: &Network) -> Vec<f64> {
        self.links
            .iter()
            .zip(&self.estimates)
            .map(|(&l, &w)| (w - net.werner(l)).powi(2))
            .collect()
    }
}

fn direct_link(rec: &MeasurementRecord) -> Result<LinkId, SimError> {
    match rec.path.links.as_slice() {
        [l] => Ok(*l),
        _ => Err(SimError::NotDirect(rec.path.target)),
    }
}

/// `ŵ = sqrt((4 N00 - N) / (3 N))`, clamped to `[0, 1]`.
pub fn mle_direct(rec: &MeasurementRecord) -> Result<EstimationResult, SimError> {
    let link = direct_link(rec)?;
    let k = rec.k();
    Ok(EstimationResult {
        links: vec![link],
        estimates: vec![k.clamp(0.0, 1.0).sqrt()],
        clamped: vec![!(0.0..=1.0).contains(&k)],
    })
}

fn indirect_targets(shared: LinkId, recs: &[MeasurementRecord]) -> Result<Vec<LinkId>, SimError> {
    recs.iter()
        .map(|r| match r.path.links.as_slice() {
            [a, b] if *a == shared => Ok(*b),
            [a, b] if *b == shared => Ok(*a),
            _ => Err(SimError::MismatchedRecords {
                shared,
                target: r.path.target,
            }),
        })
        .collect()
}

fn joint_log_likelihood(direct: &MeasurementRecord, indirect: &[MeasurementRecord], wi: f64, wj: &[f64]) -> f64 {
    direct.log_likelihood(wi * wi)
        + indirect
            .iter()
            .zip(wj)
            .map(|(r, &w)| r.log_likelihood(wi * wi * w * w))
            .sum::<f64>()
}

/// Joint estimate of the shared link `i` and every link `j` probed through it.
pub fn mle_indirect(direct: &MeasurementRecord, indirect: &[MeasurementRecord]) -> Result<EstimationResult, SimError> {
    let shared = direct_link(direct)?;
    let targets = indirect_targets(shared, indirect)?;
    let n_i = direct.shots as f64;
    let n00_i = direct.n00() as f64;
    let ks: Vec<f64> = indirect.iter().map(MeasurementRecord::k).collect();

    let mut c = 0.0;
    for (r, &k) in indirect.iter().zip(&ks) {
        if k <= 0.0 || k >= 1.0 {
            continue;
        }
        let n = r.shots as f64;
        let n00 = r.n00() as f64;
        c += 24.0 * n00 * k / (1.0 + 3.0 * k) - 8.0 * (n - n00) * k / (1.0 - k);
    }
    let a = -3.0 * c - 24.0 * n_i;
    let b = 24.0 * n00_i - 8.0 * (n_i - n00_i) + 2.0 * c;
    let disc = (b * b - 4.0 * a * c).max(0.0).sqrt();
    let mut roots = vec![(-b + disc) / (2.0 * a), (-b - disc) / (2.0 * a)];
    roots.retain(|x| (-1e-12..=1.0 + 1e-12).contains(x));
    let k_i = direct.k();
    let fallback = roots.is_empty();
    if fallback {
        roots.push(k_i.clamp(0.0, 1.0));
    }

    let finish = |x: f64| {
        let wi = x.clamp(0.0, 1.0).sqrt();
        let wj: Vec<f64> = ks
            .iter()
            .map(|&k| if wi > 0.0 { (k.max(0.0).sqrt() / wi).min(1.0) } else { 0.0 })
            .collect();
        (wi, wj)
    };
    let mut best: Option<(f64, f64, Vec<f64>)> = None;
    for &x in &roots {
        let (wi, wj) = finish(x);
        let ll = joint_log_likelihood(direct, indirect, wi, &wj);
        if best.as_ref().is_none_or(|(b, _, _)| ll > *b) {
            best = Some((ll, wi, wj));
        }
    }
    let (_, wi, wj) = best.expect("at least one candidate root");
    if wi == 0.0 {
        if let Some(pos) = ks.iter().position(|&k| k > 0.0) {
            return Err(SimError::DegenerateLikelihood {
                shared,
                target: targets[pos],
            });
        }
    }

    let mut links = vec![shared];
    let mut estimates = vec![wi];
    let mut clamped = vec![fallback || k_i < 0.0];
    for ((&t, &k), &w) in targets.iter().zip(&ks).zip(&wj) {
        links.push(t);
        estimates.push(w);
        clamped.push(k < 0.0 || (wi > 0.0 && k.sqrt() / wi > 1.0));
    }
    Ok(EstimationResult {
        links,
        estimates,
        clamped,
    })
}

/// Maximise a unimodal function on `[lo, hi]` by golden-section search.
fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - r * (hi - lo);
    let mut x2 = lo + r * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..200 {
        if hi - lo < 1e-14 {
            break;
        }
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + r * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - r * (hi - lo);
            f1 = f(x1);
        }
    }
    let mid = 0.5 * (lo + hi);
    [0.0_f64.max(lo), mid, hi.min(1.0)]
        .into_iter()
        .map(|x| (f(x), x))
        .fold((f64::NEG_INFINITY, mid), |acc, c| if c.0 > acc.0 { c } else { acc })
        .1
}

/// Dense grid refinement over `[lo, hi]`.
fn grid_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    const POINTS: usize = 64;
    let mut best = lo;
    while hi - lo > 1e-13 {
        let step = (hi - lo) / POINTS as f64;
        let mut best_val = f64::NEG_INFINITY;
        for s in 0..=POINTS {
            let x = lo + step * s as f64;
            let v = f(x);
            if v > best_val {
                best_val = v;
                best = x;
            }
        }
        lo = (best - step).max(lo);
        hi = (best + step).min(hi);
    }
    best
}

const ORACLE_BOUNDARY: f64 = 1e-6;

/// Numeric maximiser of the joint multinomial likelihood of a direct record
/// and any indirect records that share its link.
pub fn mle_numeric_oracle(records: &[MeasurementRecord]) -> Result<EstimationResult, SimError> {
    let (direct, indirect) = records
        .split_first()
        .ok_or_else(|| SimError::UnsupportedGeometry("no records".into()))?;
    let shared = direct_link(direct)?;
    let targets = indirect_targets(shared, indirect)?;
    let inner = |wi: f64, r: &MeasurementRecord| golden_max(|w| r.log_likelihood(wi * wi * w * w), 0.0, 1.0);
    let profile = |wi: f64| {
        let wj: Vec<f64> = indirect.iter().map(|r| inner(wi, r)).collect();
        joint_log_likelihood(direct, indirect, wi, &wj)
    };
    let wi = grid_max(profile, 0.0, 1.0);
    let mut links = vec![shared];
    let mut estimates = vec![wi];
    for (r, &t) in indirect.iter().zip(&targets) {
        links.push(t);
        estimates.push(inner(wi, r));
    }
    let clamped = estimates
        .iter()
        .map(|&w| !(ORACLE_BOUNDARY..=1.0 - ORACLE_BOUNDARY).contains(&w))
        .collect();
    Ok(EstimationResult {
        links,
        estimates,
        clamped,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub link: LinkId,
    pub shots: u64,
    pub mse: f64,
    pub qcrb: f64,
    pub trials: usize,
    pub clamp_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyTable {
    pub rows: Vec<StudyRow>,
}

impl StudyTable {
    pub fn row(&self, link: LinkId, shots: u64) -> Option<&StudyRow> {
        self.rows.iter().find(|r| r.link == link && r.shots == shots)
    }

    /// Tab-separated text with a header line.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("link\tN\tMSE\tQCRB\ttrials\tclamp_rate\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{}\t{}\t{:.9e}\t{:.9e}\t{}\t{:.6}",
                r.link, r.shots, r.mse, r.qcrb, r.trials, r.clamp_rate
            );
        }
        out
    }
}

/// Compensated sum; the result does not depend on how the input was produced.
pub fn neumaier_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Direct record for a shared link plus the indirect records routed through it.
struct EstimationGroup {
    direct: MonitorPath,
    indirect: Vec<MonitorPath>,
}

fn estimation_groups(net: &Network, plan: &MonitoringPlan) -> Result<Vec<EstimationGroup>, SimError> {
    let mut groups: Vec<EstimationGroup> = plan
        .direct
        .iter()
        .map(|d| EstimationGroup {
            direct: MonitorPath {
                monitor: plan.placements[d.monitor],
                target: d.link,
                links: vec![d.link],
            },
            indirect: Vec::new(),
        })
        .collect();
    for a in &plan.indirect {
        let first = match a.path.links.as_slice() {
            [first, _] => *first,
            _ => {
                return Err(SimError::UnsupportedGeometry(format!(
                    "{} is probed over {} links",
                    a.link,
                    a.path.len()
                )))
            }
        };
        let group = plan
            .direct
            .iter()
            .position(|d| d.link == first && d.monitor == a.monitor)
            .ok_or_else(|| {
                SimError::UnsupportedGeometry(format!(
                    "{} is probed through {} which its monitor does not measure directly",
                    a.link, first
                ))
            })?;
        groups[group].indirect.push(a.path.clone());
    }
    let _ = net;
    Ok(groups)
}

struct TrialOutcome {
    sq_errors: Vec<f64>,
    clamped: Vec<bool>,
}

/// Empirical MSE of the closed-form estimators against the per-link QCRB.
///
/// Every probe of the plan receives `N` shots. Trial `t` of grid point `g`
/// draws probe `p` from the stream `stream_seed(seed, [g, t, p])`.
pub fn mse_study(
    net: &Network,
    plan: &MonitoringPlan,
    n_grid: &[u64],
    trials: usize,
    seed: u64,
) -> Result<StudyTable, SimError> {
    if n_grid.is_empty() || trials == 0 {
        return Err(SimError::EmptyStudy);
    }
    if n_grid.contains(&0) {
        return Err(SimError::NoShots);
    }
    let metrics = evaluate_plan(net, plan, plan.mode)?;
    let groups = estimation_groups(net, plan)?;
    let order: Vec<LinkId> = groups
        .iter()
        .flat_map(|g| std::iter::once(g.direct.target).chain(g.indirect.iter().map(|p| p.target)))
        .collect();

    let mut rows = Vec::new();
    for (g_idx, &shots) in n_grid.iter().enumerate() {
        let outcomes: Vec<TrialOutcome> = (0..trials)
            .into_par_iter()
            .map(|t| run_trial(net, &groups, shots, seed, g_idx as u64, t as u64))
            .collect::<Result<_, _>>()?;
        let mut per_link: Vec<StudyRow> = order
            .iter()
            .enumerate()
            .map(|(pos, &link)| {
                let mse = neumaier_sum(outcomes.iter().map(|o| o.sq_errors[pos])) / trials as f64;
                let clamps = outcomes.iter().filter(|o| o.clamped[pos]).count();
                let per_shot = metrics
                    .qcrb
                    .iter()
                    .find(|(l, _)| *l == link)
                    .map(|&(_, b)| b)
                    .unwrap_or(f64::INFINITY);
                StudyRow {
                    link,
                    shots,
                    mse,
                    qcrb: per_shot / shots as f64,
                    trials,
                    clamp_rate: clamps as f64 / trials as f64,
                }
            })
            .collect();
        per_link.sort_by_key(|r| r.link);
        rows.extend(per_link);
    }
    Ok(StudyTable { rows })
}

fn run_trial(
    net: &Network,
    groups: &[EstimationGroup],
    shots: u64,
    seed: u64,
    grid_index: u64,
    trial: u64,
) -> Result<TrialOutcome, SimError> {
    let mut sq_errors = Vec::new();
    let mut clamped = Vec::new();
    let mut probe = 0u64;
    let mut draw = |path: &MonitorPath| {
        let s = stream_seed(seed, &[grid_index, trial, probe]);
        probe += 1;
        simulate_probe(net, path, shots, s)
    };
    for g in groups {
        let direct = draw(&g.direct)?;
        let indirect: Vec<MeasurementRecord> = g.indirect.iter().map(&mut draw).collect::<Result<_, _>>()?;
        let est = if indirect.is_empty() {
            mle_direct(&direct)?
        } else {
            mle_indirect(&direct, &indirect)?
        };
        sq_errors.extend(est.squared_errors(net));
        clamped.extend(est.clamped);
    }
    Ok(TrialOutcome { sq_errors, clamped })
}
