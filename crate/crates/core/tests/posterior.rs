use std::collections::HashSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use trackuq_core::bayes::{exact_edge_probabilities, exact_posterior, mc_edge_probabilities, sni_edge_probabilities};
use trackuq_core::costs::{joint_log_likelihood, CostModel};
use trackuq_core::dbmc::{column_normalize, softmax_columns};
use trackuq_core::model::{
    enumerate_feasible, is_feasible, Detection, EdgeProbabilityMatrix, Frame, OracleLimit, ProbabilityKind,
};
use trackuq_core::perturb::{fp_assignment_ensemble, NoiseSpec};
use trackuq_core::solver::{solve_map, top_k};
use trackuq_core::synthetic::random_instance;

fn check_stochastic(p: &EdgeProbabilityMatrix) {
    for s in p.column_sums() {
        assert!((s - 1.0).abs() < 1e-9, "column sum {s}");
    }
    assert!(p.values().iter().all(|v| (0.0..=1.0).contains(v)));
}

/// Only holds for probabilities derived from assignments; softmax columns
/// are independent per daughter.
fn check_mother_mass(p: &EdgeProbabilityMatrix) {
    for mass in p.mother_mass() {
        assert!(mass <= 2.0 + 1e-9, "mother mass {mass}");
    }
}

#[test]
fn map_and_full_top_k_agree_with_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..60 {
        let (src, tgt, cm) = random_instance(&mut rng, 3, 4);
        let mut scores: Vec<f64> = enumerate_feasible(src.len(), tgt.len())
            .unwrap()
            .map(|a| joint_log_likelihood(&src, &tgt, &a, &cm).unwrap())
            .collect();
        scores.sort_by(|a, b| b.total_cmp(a));

        let map = solve_map(&src, &tgt, &cm).unwrap();
        assert!(is_feasible(&map.assignment).unwrap());
        assert!((map.log_score - scores[0]).abs() < 1e-9);

        let all = top_k(&src, &tgt, &cm, scores.len()).unwrap();
        assert_eq!(all.len(), scores.len());
        let distinct: HashSet<String> = all.iter().map(|s| s.assignment.canonical_text()).collect();
        assert_eq!(distinct.len(), all.len());
        for (s, expect) in all.iter().zip(&scores) {
            assert!((s.log_score - expect).abs() < 1e-9);
        }

        let exact = exact_edge_probabilities(&src, &tgt, &cm).unwrap();
        let sni = sni_edge_probabilities(&all).unwrap();
        assert!(sni.max_abs_diff(&exact) < 1e-9);
    }
}

#[test]
fn every_estimator_is_column_stochastic() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for trial in 0..40 {
        let (src, tgt, cm) = random_instance(&mut rng, 4, 4);
        if tgt.is_empty() {
            continue;
        }
        let exact = exact_edge_probabilities(&src, &tgt, &cm).unwrap();
        let sni = sni_edge_probabilities(&top_k(&src, &tgt, &cm, 5).unwrap()).unwrap();
        let noise = NoiseSpec::gaussian(0.1, trial, 8).unwrap();
        let fpa = fp_assignment_ensemble(&src, &tgt, &cm, &noise).unwrap();
        for joint in [&exact, &sni, &fpa] {
            assert_eq!(joint.kind(), ProbabilityKind::Joint);
            check_stochastic(joint);
            check_mother_mass(joint);
            let cond = column_normalize(joint).unwrap();
            check_stochastic(&cond);
            check_mother_mass(&cond);
        }
        let costs = cm.cost_matrix(&src, &tgt).unwrap();
        if !src.is_empty() {
            check_stochastic(&softmax_columns(&costs, false).unwrap());
        }
        check_stochastic(&softmax_columns(&costs, true).unwrap());
    }
}

/// Total variation between the truncated, renormalized posterior and the
/// exact one is `1 − Z_K / Z`, so it can only shrink as K grows.
#[test]
fn top_k_posterior_converges_monotonically() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let (src, tgt, cm) = random_instance(&mut rng, 3, 3);
        let posterior = exact_posterior(&src, &tgt, &cm, OracleLimit::default()).unwrap();
        let weight_of = |text: &str| {
            posterior
                .iter()
                .find(|p| p.assignment.canonical_text() == text)
                .map(|p| p.weight)
                .unwrap()
        };
        let all = top_k(&src, &tgt, &cm, posterior.len()).unwrap();
        let mut prev = f64::INFINITY;
        for k in 1..=all.len() {
            let kept: f64 = all[..k].iter().map(|s| weight_of(&s.assignment.canonical_text())).sum();
            let tv = 1.0 - kept;
            assert!(tv <= prev + 1e-12, "tv rose from {prev} to {tv} at k={k}");
            prev = tv;
        }
        assert!(prev.abs() < 1e-9);

        // the matrix-level error vanishes at full K as well
        let exact = exact_edge_probabilities(&src, &tgt, &cm).unwrap();
        assert!(sni_edge_probabilities(&all).unwrap().max_abs_diff(&exact) < 1e-9);
    }
}

#[test]
fn extreme_score_spreads_stay_finite() {
    let src = Frame::new(0, vec![Detection::point(0, [0.0, 0.0]), Detection::point(1, [1000.0, 0.0])]).unwrap();
    let tgt = Frame::new(1, vec![Detection::point(0, [0.5, 0.0]), Detection::point(1, [1000.0, 1.0])]).unwrap();
    let cm = CostModel::l2(1.0).unwrap().with_event_costs(1e6, 1e6).unwrap();
    let exact = exact_edge_probabilities(&src, &tgt, &cm).unwrap();
    assert!(exact.values().iter().all(|v| v.is_finite()));
    assert!((exact.get(Some(0), 0) - 1.0).abs() < 1e-12);
    let sni = sni_edge_probabilities(&top_k(&src, &tgt, &cm, 10).unwrap()).unwrap();
    assert!(sni.values().iter().all(|v| v.is_finite()));
    let sm = softmax_columns(&cm.cost_matrix(&src, &tgt).unwrap(), true).unwrap();
    assert!(sm.values().iter().all(|v| v.is_finite()));
    check_stochastic(&sm);
}

#[test]
fn monte_carlo_frequencies_of_identical_samples_are_indicators() {
    let (src, tgt, cm) = trackuq_core::synthetic::two_interpretations();
    let map = solve_map(&src, &tgt, &cm).unwrap().assignment;
    let p = mc_edge_probabilities(&vec![map.clone(); 5]).unwrap();
    for e in map.edges() {
        if let Some(j) = e.daughter() {
            assert_eq!(p.get(e.mother(), j), 1.0);
        }
    }
}
