mod common;

use common::rng;
use qnt_core::ilp::{build_model, solve, ModelConfig, MonitoringPlan, Objective, SolveOptions};
use qnt_core::net::{LinkId, Network, NodeId};
use qnt_core::qfi::direct_qfi;
use qnt_core::sim::{
    mle_direct, mle_indirect, mle_numeric_oracle, mse_study, outcome_probabilities, simulate_probe, stream_seed,
    MeasurementRecord, SimError,
};
use qnt_core::star::star_optimal_plan;
use rand::RngExt;

fn all_direct(w: &[f64]) -> (Network, MonitoringPlan) {
    let net = Network::star(w).unwrap();
    let plan = star_optimal_plan(&net, w.len(), None).unwrap();
    (net, plan)
}

#[test]
fn uniform_outcomes_when_nothing_is_shared() {
    let net = Network::star(&[0.0, 0.5]).unwrap();
    let path = net.shortest_monitor_path(NodeId(1), LinkId(0));
    let n = 100_000u64;
    let rec = simulate_probe(&net, &path, n, 42).unwrap();
    let expected = n as f64 / 4.0;
    let chi2: f64 = rec.counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    // 99.9th percentile of chi-squared with three degrees of freedom
    assert!(chi2 < 16.27, "chi2 = {chi2}");
}

#[test]
fn mean_singlet_fraction() {
    let net = Network::star(&[0.9, 0.5]).unwrap();
    let path = net.shortest_monitor_path(NodeId(1), LinkId(0));
    let n = 1_000_000u64;
    let rec = simulate_probe(&net, &path, n, 3).unwrap();
    let p = outcome_probabilities(0.81)[0];
    assert!((p - 0.8575).abs() < 1e-15);
    let sd = (p * (1.0 - p) / n as f64).sqrt();
    assert!((rec.counts[0] as f64 / n as f64 - p).abs() < 5.0 * sd);
}

fn dataset(seed: u64, wi: f64, wj: &[f64], shots: u64) -> Vec<MeasurementRecord> {
    let mut w = vec![wi];
    w.extend_from_slice(wj);
    let net = Network::star(&w).unwrap();
    let leaf = NodeId(1);
    (0..w.len())
        .map(|l| {
            let path = net.shortest_monitor_path(leaf, LinkId(l));
            simulate_probe(&net, &path, shots, stream_seed(seed, &[l as u64])).unwrap()
        })
        .collect()
}

#[test]
fn closed_forms_agree_with_the_likelihood_oracle() {
    let mut r = rng(8);
    let mut compared = 0;
    for case in 0..60 {
        let wi = r.random_range(0.5..0.97);
        let count = r.random_range(0..4);
        let wj: Vec<f64> = (0..count).map(|_| r.random_range(0.3..0.95)).collect();
        let shots = [500, 2_000, 10_000][case % 3];
        let recs = dataset(case as u64, wi, &wj, shots);
        let closed = if recs.len() == 1 {
            mle_direct(&recs[0]).unwrap()
        } else {
            match mle_indirect(&recs[0], &recs[1..]) {
                Ok(e) => e,
                Err(SimError::DegenerateLikelihood { .. }) => continue,
                Err(e) => panic!("{e}"),
            }
        };
        let oracle = mle_numeric_oracle(&recs).unwrap();
        assert_eq!(closed.links, oracle.links);
        if closed.any_clamped() || oracle.any_clamped() {
            assert_eq!(closed.clamped, oracle.clamped, "case {case}");
            continue;
        }
        for (a, b) in closed.estimates.iter().zip(&oracle.estimates) {
            assert!((a - b).abs() < 1e-6, "case {case}: {a} vs {b}");
        }
        compared += 1;
    }
    assert!(compared > 30);
}

#[test]
fn noiseless_boundary_data() {
    let eps = 1e-6;
    let w = 1.0 - eps;
    let shots = 1000;
    let direct = MeasurementRecord {
        path: qnt_core::net::MonitorPath {
            monitor: NodeId(1),
            target: LinkId(0),
            links: vec![LinkId(0)],
        },
        shots,
        counts: [shots, 0, 0, 0],
        seed: 0,
    };
    let mut ind = direct.clone();
    ind.path.links = vec![LinkId(0), LinkId(1)];
    ind.path.target = LinkId(1);
    let e = mle_indirect(&direct, &[ind.clone()]).unwrap();
    assert!(e.estimates.iter().all(|&x| (x - w).abs() < 1e-5));
    let o = mle_numeric_oracle(&[direct, ind]).unwrap();
    assert!(o.estimates.iter().all(|&x| (x - w).abs() < 1e-5));
}

#[test]
fn clamped_cases_clamp_in_the_oracle_too() {
    let shots = 100;
    let mk = |links: Vec<usize>, n00: u64| MeasurementRecord {
        path: qnt_core::net::MonitorPath {
            monitor: NodeId(1),
            target: LinkId(*links.last().unwrap()),
            links: links.into_iter().map(LinkId).collect(),
        },
        shots,
        counts: [n00, shots - n00, 0, 0],
        seed: 0,
    };
    // k < 0 for the direct link
    let low = mk(vec![0], 10);
    assert_eq!(mle_direct(&low).unwrap().clamped, mle_numeric_oracle(&[low]).unwrap().clamped);
    // indirect record looks better than the shared link alone
    let recs = [mk(vec![0], 70), mk(vec![0, 1], 80)];
    let closed = mle_indirect(&recs[0], &recs[1..]).unwrap();
    let oracle = mle_numeric_oracle(&recs).unwrap();
    assert_eq!(closed.clamped, vec![false, true]);
    assert_eq!(closed.clamped, oracle.clamped);
    assert_eq!(closed.estimates[1], 1.0);
}

#[test]
fn mse_falls_with_more_shots() {
    let mut r = rng(21);
    let w: Vec<f64> = (0..4).map(|_| r.random_range(0.3..0.95)).collect();
    let (net, plan) = all_direct(&w);
    let table = mse_study(&net, &plan, &[1_000, 10_000, 100_000], 200, 5).unwrap();
    for l in net.link_ids() {
        let mse: Vec<f64> = [1_000, 10_000, 100_000].iter().map(|&n| table.row(l, n).unwrap().mse).collect();
        assert!(mse[0] > mse[1] && mse[1] > mse[2], "{l}: {mse:?}");
    }
}

#[test]
fn direct_estimation_is_efficient() {
    let w = [0.5, 0.7, 0.9, 0.95];
    let (net, plan) = all_direct(&w);
    let table = mse_study(&net, &plan, &[100_000], 1000, 11).unwrap();
    for row in &table.rows {
        let ratio = row.mse / row.qcrb;
        assert!((0.9..=1.5).contains(&ratio), "{}: ratio {ratio}", row.link);
    }
    let row = table.row(LinkId(2), 100_000).unwrap();
    let bound = 1.0 / direct_qfi(0.9).unwrap() / 1e5;
    assert!((row.qcrb - bound).abs() < 1e-15);
    assert!((row.mse - bound).abs() < 0.1 * bound);
}

#[test]
fn study_is_independent_of_worker_count() {
    let net = Network::star(&[0.9, 0.9, 0.9]).unwrap();
    let plan = solve(
        &build_model(&net, &ModelConfig::new(2, Objective::Qf)).unwrap(),
        &SolveOptions::default(),
    )
    .unwrap();
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| mse_study(&net, &plan, &[1_000, 5_000], 64, 9).unwrap())
    };
    let one = run(1);
    assert_eq!(one.to_tsv(), run(4).to_tsv());
    assert_eq!(one.rows.len(), 6);
    assert!(one.to_tsv().starts_with("link\tN\tMSE\tQCRB\ttrials\tclamp_rate\n"));
}

#[test]
fn study_rejects_long_paths() {
    let names = ["a", "b", "c", "d", "e", "f"];
    let links: Vec<(&str, &str, f64)> = names.windows(2).map(|p| (p[0], p[1], 0.9)).collect();
    let net = Network::new(&names, &links).unwrap();
    let plan = solve(
        &build_model(&net, &ModelConfig::new(1, Objective::Qf)).unwrap(),
        &SolveOptions::default(),
    )
    .unwrap();
    assert!(matches!(
        mse_study(&net, &plan, &[100], 2, 0),
        Err(SimError::UnsupportedGeometry(_))
    ));
    assert!(matches!(mse_study(&net, &plan, &[], 2, 0), Err(SimError::EmptyStudy)));
}
