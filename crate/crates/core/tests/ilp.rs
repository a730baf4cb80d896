mod common;

use common::{parse_lp, random_graph, random_tree, random_weights, rel_close, rng, BruteForce};
use proptest::prelude::*;
use qnt_core::ilp::{
    build_model, evaluate_plan, export_lp, plan_values, solve, Capacity, IlpError, ModelConfig, Objective,
    PathSemantics, PlanStatus, Sense, SiteRule, SolveOptions,
};
use qnt_core::net::{LinkId, Network, NodeId};
use qnt_core::qfi::{direct_qfi, indirect_qfi, IndirectMode};

fn solve_default(net: &Network, config: &ModelConfig) -> Result<qnt_core::ilp::MonitoringPlan, IlpError> {
    solve(&build_model(net, config)?, &SolveOptions::default())
}

fn hetero_star() -> Network {
    Network::star(&[0.81, 0.95, 0.72, 0.88, 0.67, 0.91, 0.76, 0.84, 0.79]).unwrap()
}

fn leaves(net: &Network) -> Vec<NodeId> {
    net.nodes().filter(|&k| net.degree(k) == 1).collect()
}

#[test]
fn uniform_star_single_monitor() {
    let net = Network::star(&[0.9, 0.9, 0.9]).unwrap();
    let plan = solve_default(&net, &ModelConfig::new(1, Objective::Qf)).unwrap();
    let lemma = indirect_qfi(&[0.9, 0.9], 1, IndirectMode::LemmaForm).unwrap();
    let expected = direct_qfi(0.9).unwrap() + 2.0 * lemma;
    assert!(rel_close(plan.trace, expected, 1e-12));
    assert_eq!(plan.status, PlanStatus::Optimal);

    // every single-monitor placement, including the hub, scored by hand
    let mut best = f64::NEG_INFINITY;
    for k in net.nodes() {
        let v: f64 = net
            .link_ids()
            .map(|l| {
                if net.link(l).has_endpoint(k) {
                    direct_qfi(0.9).unwrap()
                } else {
                    lemma
                }
            })
            .sum();
        if k != NodeId(0) {
            best = best.max(v);
        }
    }
    assert!(rel_close(best, expected, 1e-12));
}

#[test]
fn single_monitor_goes_to_best_leaf() {
    let net = hetero_star();
    let plan = solve_default(&net, &ModelConfig::new(1, Objective::Qf)).unwrap();
    let best = net.link(LinkId(1)).other(NodeId(0));
    assert_eq!(plan.placements, vec![best]);
    assert_eq!(plan.direct.len(), 1);
    assert_eq!(plan.direct[0].link, LinkId(1));
    assert_eq!(plan.indirect.len(), 8);
}

#[test]
fn qf_consolidates_on_best_monitor() {
    let net = hetero_star();
    let plan = solve_default(&net, &ModelConfig::new(2, Objective::Qf)).unwrap();
    let best_leaf = net.link(LinkId(1)).other(NodeId(0));
    let j = plan.placements.iter().position(|&k| k == best_leaf).unwrap();
    assert_eq!(plan.indirect_of(j).len(), 7);
}

#[test]
fn every_leaf_monitored_means_all_direct() {
    let net = hetero_star();
    for obj in [Objective::Qf, Objective::Qmf] {
        let plan = solve_default(&net, &ModelConfig::new(9, obj)).unwrap();
        assert_eq!(plan.direct.len(), 9);
        assert!(plan.indirect.is_empty());
    }
}

#[test]
fn minimal_load_limit_is_feasible() {
    let net = hetero_star();
    let cfg = ModelConfig::new(1, Objective::Qmf).with_capacity(Capacity::Uniform(9));
    let plan = solve_default(&net, &cfg).unwrap();
    assert_eq!(plan.max_load(), 9);
}

#[test]
fn capacity_errors() {
    let net = hetero_star();
    let low = ModelConfig::new(2, Objective::Qmf).with_capacity(Capacity::Uniform(4));
    assert_eq!(
        build_model(&net, &low).unwrap_err(),
        IlpError::CapacityInfeasible { capacity: 4, minimum: 5 }
    );
    let high = ModelConfig::new(2, Objective::Qmf).with_capacity(Capacity::Uniform(10));
    assert!(matches!(build_model(&net, &high), Err(IlpError::InvalidCapacity(_))));
    let short = ModelConfig::new(2, Objective::Qmf).with_capacity(Capacity::PerMonitor(vec![5]));
    assert!(matches!(build_model(&net, &short), Err(IlpError::InvalidCapacity(_))));
    assert!(matches!(
        build_model(&net, &ModelConfig::new(0, Objective::Qf)),
        Err(IlpError::NoMonitors)
    ));
    assert!(matches!(
        build_model(&net, &ModelConfig::new(10, Objective::Qf)),
        Err(IlpError::TooManyMonitors { .. })
    ));
}

#[test]
fn per_monitor_capacities_below_need_are_infeasible() {
    let net = Network::star(&[0.9, 0.8, 0.7]).unwrap();
    let cfg = ModelConfig::new(2, Objective::Qmf).with_capacity(Capacity::PerMonitor(vec![1, 1]));
    assert_eq!(solve_default(&net, &cfg).unwrap_err(), IlpError::Infeasible);
}

#[test]
fn heterogeneous_capacities_match_brute_force() {
    let net = Network::star(&[0.9, 0.8, 0.7, 0.6, 0.95]).unwrap();
    let caps = vec![1, 4];
    let cfg = ModelConfig::new(2, Objective::Qmf).with_capacity(Capacity::PerMonitor(caps.clone()));
    let plan = solve_default(&net, &cfg).unwrap();
    let oracle = BruteForce {
        net: &net,
        sites: leaves(&net),
        monitors: 2,
        capacities: Some(caps),
        strict: false,
        mode: IndirectMode::LemmaForm,
    }
    .optimum()
    .unwrap();
    assert!(rel_close(plan.trace, oracle, 1e-9));
    plan.validate(&net).unwrap();
}

#[test]
fn budget_exhaustion_reports_incumbent() {
    let net = hetero_star();
    let model = build_model(&net, &ModelConfig::new(3, Objective::Qf)).unwrap();
    let opts = SolveOptions {
        node_limit: Some(5),
        ..SolveOptions::default()
    };
    match solve(&model, &opts) {
        Err(IlpError::BudgetExhausted { nodes, incumbent }) => {
            assert!(nodes >= 5);
            if let Some(p) = incumbent {
                assert_eq!(p.status, PlanStatus::BestEffort);
                p.validate(&net).unwrap();
            }
        }
        other => panic!("expected budget exhaustion, got {other:?}"),
    }
}

#[test]
fn solved_plans_satisfy_every_row() {
    let mut r = rng(11);
    let nets = vec![hetero_star(), random_tree(&mut r, 7), random_graph(&mut r, 6, 2)];
    for net in &nets {
        for m in 1..=3 {
            for obj in [Objective::Qf, Objective::Qmf] {
                for sem in [PathSemantics::Learnable, PathSemantics::StrictSameMonitor] {
                    let model = build_model(net, &ModelConfig::new(m, obj).with_semantics(sem)).unwrap();
                    let plan = match solve(&model, &SolveOptions::default()) {
                        Ok(p) => p,
                        Err(IlpError::Infeasible) => continue,
                        Err(e) => panic!("{e}"),
                    };
                    plan.validate(net).unwrap();
                    let values = plan_values(&model, &plan).unwrap();
                    let bad = model.violations(&values);
                    assert!(bad.is_empty(), "{bad:?}");
                    assert!(rel_close(model.objective_value(&values), plan.trace, 1e-12));
                }
            }
        }
    }
}

#[test]
fn violations_are_detected() {
    let net = hetero_star();
    let model = build_model(&net, &ModelConfig::new(2, Objective::Qmf)).unwrap();
    let plan = solve(&model, &SolveOptions::default()).unwrap();
    let mut values = plan_values(&model, &plan).unwrap();
    let x = (0..values.len())
        .find(|&v| values[v] == 1.0 && model.variables()[v].kind.name().starts_with("x_"))
        .unwrap();
    values[x] = 0.0;
    assert!(model.violations(&values).iter().any(|v| v.constraint.starts_with("once_")));
}

#[test]
fn thread_count_does_not_change_the_plan() {
    let mut r = rng(5);
    let nets = vec![hetero_star(), random_tree(&mut r, 8), random_graph(&mut r, 7, 2)];
    for net in &nets {
        for m in 1..=3 {
            for obj in [Objective::Qf, Objective::Qmf] {
                let model = build_model(net, &ModelConfig::new(m, obj)).unwrap();
                let one = solve(&model, &SolveOptions::default()).unwrap();
                for threads in [2, 4] {
                    let many = solve(&model, &SolveOptions { threads, ..SolveOptions::default() }).unwrap();
                    assert_eq!(one, many);
                }
            }
        }
    }
}

#[test]
fn more_monitors_never_hurt_and_qf_dominates_qmf() {
    let mut r = rng(17);
    let net = random_tree(&mut r, 8);
    let mut last = f64::NEG_INFINITY;
    for m in 1..=5 {
        let qf = solve_default(&net, &ModelConfig::new(m, Objective::Qf)).unwrap();
        assert!(qf.trace >= last - 1e-12);
        last = qf.trace;
        let (min, max) = (qnt_core::star::min_overhead(net.link_count(), m), net.link_count());
        for l in min..=max {
            let cfg = ModelConfig::new(m, Objective::Qmf).with_capacity(Capacity::Uniform(l));
            let qmf = solve_default(&net, &cfg).unwrap();
            assert!(qf.trace >= qmf.trace - 1e-12);
            assert!(qmf.max_load() <= l);
        }
    }
}

#[test]
fn hub_is_a_site_only_when_asked() {
    let net = hetero_star();
    let auto = build_model(&net, &ModelConfig::new(1, Objective::Qf)).unwrap();
    assert!(!auto.site_nodes().contains(&NodeId(0)));
    let all = build_model(&net, &ModelConfig::new(1, Objective::Qf).with_sites(SiteRule::All)).unwrap();
    assert!(all.site_nodes().contains(&NodeId(0)));
    let plan = solve(&all, &SolveOptions::default()).unwrap();
    assert_eq!(plan.placements, vec![NodeId(0)]);
    assert!(plan.indirect.is_empty());
}

#[test]
fn lemma_form_rejected_on_long_paths() {
    let net = Network::new(&["a", "b", "c", "d"], &[("a", "b", 0.9), ("b", "c", 0.9), ("c", "d", 0.9)]).unwrap();
    let cfg = ModelConfig::new(1, Objective::Qf).with_mode(IndirectMode::LemmaForm);
    assert!(matches!(build_model(&net, &cfg), Err(IlpError::Qfi(_))));
}

#[test]
fn variable_counts() {
    let net = hetero_star();
    let (e, v, m) = (9, 10, 3);
    for obj in [Objective::Qf, Objective::Qmf] {
        let model = build_model(&net, &ModelConfig::new(m, obj)).unwrap();
        let vars = model.variables();
        let count = |p: &str| vars.iter().filter(|x| x.kind.name().starts_with(p)).count();
        assert_eq!(count("x_"), e * m);
        assert_eq!(count("p_"), e * m);
        assert_eq!(count("m_"), v * m);
        assert_eq!(count("b_"), e);
        assert_eq!(count("y_"), e * m);
        assert_eq!(count("d_"), e);
        assert_eq!(count("l_"), if obj == Objective::Qmf { m } else { 0 });
        assert!(model.objective_terms().iter().all(|&(_, c)| c.is_finite() && c >= 0.0));
        for var in vars {
            if var.kind.name().starts_with("l_") {
                assert_eq!((var.lower, var.upper), (0.0, 3.0));
            } else {
                assert!(var.is_binary());
            }
        }
    }
}

#[test]
fn lp_export_structure() {
    let net = hetero_star();
    let qf = export_lp(&build_model(&net, &ModelConfig::new(2, Objective::Qf)).unwrap());
    let qmf = export_lp(&build_model(&net, &ModelConfig::new(2, Objective::Qmf)).unwrap());
    for text in [&qf, &qmf] {
        assert!(text.contains("Maximize") && text.contains("Subject To") && text.contains("Binaries"));
        assert!(text.trim_end().ends_with("End"));
        let once = text.lines().filter(|l| l.trim_start().starts_with("once_") && l.ends_with("= 1")).count();
        assert_eq!(once, 9);
    }
    assert!(qmf.contains(" cap_0: ") && qmf.contains("Generals"));
    assert!(!qf.contains("cap_") && !qf.contains("Generals"));
}

#[test]
fn lp_round_trip() {
    let mut r = rng(3);
    let nets = vec![hetero_star(), random_tree(&mut r, 9), random_graph(&mut r, 8, 3)];
    for net in &nets {
        for (obj, sem) in [
            (Objective::Qf, PathSemantics::Learnable),
            (Objective::Qmf, PathSemantics::StrictSameMonitor),
        ] {
            let model = build_model(net, &ModelConfig::new(3, obj).with_semantics(sem)).unwrap();
            let lp = parse_lp(&export_lp(&model));
            assert_eq!(lp.variables().len(), model.variables().len());
            assert_eq!(lp.rows.len(), model.constraints().len());
            assert_eq!(lp.binaries.len() + lp.generals.len(), model.variables().len());
            let name = |v: usize| model.variables()[v].kind.name();
            for ((row_name, terms, op, rhs), c) in lp.rows.iter().zip(model.constraints()) {
                assert_eq!(row_name, &c.name);
                let want: Vec<(f64, String)> = c.terms.iter().map(|&(v, a)| (a, name(v))).collect();
                assert_eq!(terms, &want);
                let sense = match c.sense {
                    Sense::Le => "<=",
                    Sense::Ge => ">=",
                    Sense::Eq => "=",
                };
                assert_eq!(op, sense);
                assert_eq!(*rhs, c.rhs);
            }
            let obj: Vec<(f64, String)> = model.objective_terms().iter().map(|&(v, c)| (c, name(v))).collect();
            assert_eq!(lp.objective, obj);
        }
    }
}

#[test]
fn evaluated_all_direct_star() {
    let w = [0.9, 0.8, 0.7];
    let net = Network::star(&w).unwrap();
    let plan = solve_default(&net, &ModelConfig::new(3, Objective::Qf)).unwrap();
    let metrics = evaluate_plan(&net, &plan, IndirectMode::LemmaForm).unwrap();
    let expected: f64 = w.iter().map(|&x| 1.0 / direct_qfi(x).unwrap()).sum();
    assert!(rel_close(metrics.inverse_trace, expected, 1e-12));
}

#[test]
fn plan_document_round_trip() {
    let net = hetero_star();
    let plan = solve_default(&net, &ModelConfig::new(3, Objective::Qmf)).unwrap();
    let doc = plan.to_document(&net);
    let json = serde_json::to_string(&doc).unwrap();
    let back: qnt_core::ilp::PlanDocument = serde_json::from_str(&json).unwrap();
    assert_eq!(back.to_plan(&net).unwrap(), plan);
}

fn check_against_brute_force(net: &Network, m: usize, obj: Objective, strict: bool) {
    let sem = if strict {
        PathSemantics::StrictSameMonitor
    } else {
        PathSemantics::Learnable
    };
    let model = build_model(net, &ModelConfig::new(m, obj).with_semantics(sem)).unwrap();
    let oracle = BruteForce {
        net,
        sites: model.site_nodes(),
        monitors: m,
        capacities: model.capacities().map(|c| c.to_vec()),
        strict,
        mode: model.mode(),
    }
    .optimum();
    match (solve(&model, &SolveOptions::default()), oracle) {
        (Ok(plan), Some(best)) => assert!(rel_close(plan.trace, best, 1e-9), "{} vs {best}", plan.trace),
        (Err(IlpError::Infeasible), None) => {}
        (got, want) => panic!("solver {got:?} vs oracle {want:?}"),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn stars_match_exhaustive_search(seed in any::<u64>(), n in 2usize..=7, m_frac in 0.0f64..1.0, qmf in any::<bool>()) {
        let mut r = rng(seed);
        let net = Network::star(&random_weights(&mut r, n)).unwrap();
        let m = 1 + ((n - 1) as f64 * m_frac) as usize;
        let obj = if qmf { Objective::Qmf } else { Objective::Qf };
        check_against_brute_force(&net, m.min(3), obj, false);
    }

    #[test]
    fn small_graphs_match_exhaustive_search(
        seed in any::<u64>(),
        n in 3usize..=6,
        extra in 0usize..=2,
        m in 1usize..=2,
        qmf in any::<bool>(),
        strict in any::<bool>(),
    ) {
        let mut r = rng(seed);
        let net = random_graph(&mut r, n, extra);
        let obj = if qmf { Objective::Qmf } else { Objective::Qf };
        check_against_brute_force(&net, m, obj, strict);
    }
}
