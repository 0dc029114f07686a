use super::*;
use crate::laws::{AdditiveParams, FamilyParams, JointParams};
use crate::mixture::default_domain_names;
use crate::synthlab::{random_law, simplex_grid};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn additive(c: &[f64], gamma: &[f64]) -> LawParams {
    let p = AdditiveParams { e: 1.0, a: 50.0, b: 80.0, alpha: 0.3, beta: 0.3, c: c.to_vec(), gamma: gamma.to_vec() };
    LawParams::new(default_domain_names(c.len()), FamilyParams::Additive(p)).unwrap()
}

fn joint(c: &[f64], c_a: &[f64], c_b: &[f64]) -> LawParams {
    let k = c.len();
    let p = JointParams {
        e: 1.0,
        alpha: 0.3,
        beta: 0.3,
        c: c.to_vec(),
        gamma: vec![0.5; k],
        c_a: c_a.to_vec(),
        gamma_a: 1.0,
        c_b: c_b.to_vec(),
        gamma_b: 1.0,
    };
    LawParams::new(default_domain_names(k), FamilyParams::Joint(p)).unwrap()
}

fn solve(law: &LawParams, config: &OptimizeConfig) -> MixtureReport {
    mirror_descent(&[(law.clone(), 1.0)], 1e8, 1e10, config).unwrap()
}

fn named(laws: Vec<LawParams>) -> IndexMap<String, LawParams> {
    let names = laws[0].domain_names().to_vec();
    names.into_iter().zip(laws).collect()
}

/// Laws where target `j` depends almost only on domain `j`.
fn disjoint_laws(k: usize) -> IndexMap<String, LawParams> {
    named(
        (0..k)
            .map(|j| {
                let c: Vec<f64> = (0..k).map(|i| if i == j { 1.0 } else { 0.01 }).collect();
                additive(&c, &vec![1.0; k])
            })
            .collect(),
    )
}

#[test]
fn linear_mixture_term_goes_to_the_vertex() {
    let law = additive(&[2.0, 1.0], &[1.0, 1.0]);
    let report = solve(&law, &OptimizeConfig::default());
    assert!(report.h_star.weights()[0] > 1.0 - 1e-6, "{:?}", report.h_star);
    let exact = solve(&law, &OptimizeConfig { tol: 1e-16, ..OptimizeConfig::default() });
    assert_eq!(exact.h_star.weights(), &[1.0, 0.0]);
}

#[test]
fn symmetric_law_stays_uniform() {
    let report = solve(&additive(&[1.0, 1.0], &[0.5, 0.5]), &OptimizeConfig::default());
    assert_eq!(report.h_star.weights(), &[0.5, 0.5]);
    assert!(report.converged);
}

#[test]
fn square_root_law_matches_lagrange_and_grid_search() {
    let law = additive(&[4.0, 1.0], &[0.5, 0.5]);
    let report = solve(&law, &OptimizeConfig::default());
    let h = report.h_star.weights();
    assert!((h[0] - 16.0 / 17.0).abs() < 1e-6, "{h:?}");
    assert!((h[1] - 1.0 / 17.0).abs() < 1e-6);

    let (mut best, mut arg) = (f64::INFINITY, 0.0);
    for i in 0..=10_000 {
        let h1 = i as f64 * 1e-4;
        let v = law.eval(1e8, 1e10, &[h1, 1.0 - h1]).unwrap();
        if v < best {
            (best, arg) = (v, h1);
        }
    }
    assert!((arg - h[0]).abs() <= 1e-4, "{arg} vs {}", h[0]);
    assert!(report.objective_value <= best + 1e-12);
}

#[test]
fn mismatched_domains_are_rejected() {
    let a = additive(&[1.0, 1.0], &[0.5, 0.5]);
    let b = additive(&[1.0, 1.0, 1.0], &[0.5, 0.5, 0.5]);
    let err = mirror_descent(&[(a, 1.0), (b, 1.0)], 1e8, 1e10, &OptimizeConfig::default()).unwrap_err();
    assert_eq!(err.name(), "DomainMismatch");
}

#[test]
fn config_is_validated() {
    let law = additive(&[1.0, 2.0], &[0.5, 0.5]);
    for bad in [
        OptimizeConfig { eta: 0.0, ..OptimizeConfig::default() },
        OptimizeConfig { min_weight: 0.5, ..OptimizeConfig::default() },
    ] {
        let err = mirror_descent(&[(law.clone(), 1.0)], 1e8, 1e10, &bad).unwrap_err();
        assert_eq!(err.name(), "InvalidConfig");
    }
    assert_eq!(mirror_descent(&[(law.clone(), 0.0)], 1e8, 1e10, &OptimizeConfig::default()).unwrap_err().name(), "InvalidConfig");
    let corner = OptimizeConfig { h0: Some(vec![1.0, 0.0]), ..OptimizeConfig::default() };
    assert_eq!(mirror_descent(&[(law, 1.0)], 1e8, 1e10, &corner).unwrap_err().name(), "InvalidMixture");
}

#[test]
fn flooring_renormalizes_the_rest() {
    let mut h = vec![0.0, 0.3, 0.7];
    apply_floor(&mut h, 0.01);
    assert!((h[0] - 0.01).abs() < 1e-15 && (h[1] - 0.297).abs() < 1e-15 && (h[2] - 0.693).abs() < 1e-15);
    let mut h = vec![0.0, 0.005, 0.995];
    apply_floor(&mut h, 0.01);
    assert_eq!(h[0], 0.01);
    assert_eq!(h[1], 0.01);
    assert!((h[2] - 0.98).abs() < 1e-15);

    let law = additive(&[2.0, 1.0], &[1.0, 1.0]);
    let report = solve(&law, &OptimizeConfig { min_weight: 0.01, ..OptimizeConfig::default() });
    assert!(report.flooring_applied);
    assert!((report.h_star.weights()[1] - 0.01).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn iterates_stay_on_the_simplex_and_descend(seed in any::<u64>(), k in 2usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let law = random_law(crate::laws::Family::Joint, default_domain_names(k), &mut rng);
        let config = OptimizeConfig { record_trajectory: true, max_iter: 300, ..OptimizeConfig::default() };
        let report = solve(&law, &config);
        let trajectory = report.trajectory.unwrap();
        prop_assert_eq!(trajectory.len(), report.n_iter + 1);
        let mut last = f64::INFINITY;
        for h in &trajectory {
            prop_assert!(h.weights().iter().all(|w| *w >= 0.0));
            prop_assert!((h.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let v = law.eval(1e8, 1e10, h.weights()).unwrap();
            prop_assert!(v <= last);
            last = v;
        }
    }

    #[test]
    fn scaling_target_weights_keeps_the_argmin(seed in any::<u64>(), scale in 0.01f64..100.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_law(crate::laws::Family::Additive, default_domain_names(3), &mut rng);
        let b = random_law(crate::laws::Family::Additive, default_domain_names(3), &mut rng);
        let config = OptimizeConfig::default();
        let base = mirror_descent(&[(a.clone(), 0.3), (b.clone(), 0.7)], 1e8, 1e10, &config).unwrap();
        let scaled = mirror_descent(&[(a, 0.3 * scale), (b, 0.7 * scale)], 1e8, 1e10, &config).unwrap();
        let js = js_distance_weights(base.h_star.weights(), scaled.h_star.weights());
        prop_assert!(js < 1e-6, "{}", js);
    }

    #[test]
    fn additive_argmin_ignores_the_budget(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let law = random_law(crate::laws::Family::Additive, default_domain_names(4), &mut rng);
        let config = OptimizeConfig::default();
        let small = mirror_descent(&[(law.clone(), 1.0)], 1e8, 1e10, &config).unwrap();
        let large = mirror_descent(&[(law, 1.0)], 1e10, 1e12, &config).unwrap();
        let gap = small.h_star.weights().iter().zip(large.h_star.weights()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        prop_assert!(gap < config.tol * 10.0, "{}", gap);
    }

    #[test]
    fn zero_floor_is_the_identity(raw in prop::collection::vec(0.0f64..1.0, 1..8)) {
        let total: f64 = raw.iter().sum();
        prop_assume!(total > 0.0);
        let h: Vec<f64> = raw.iter().map(|x| x / total).collect();
        let mut floored = h.clone();
        apply_floor(&mut floored, 0.0);
        prop_assert_eq!(floored, h);
    }
}

#[test]
fn corners_of_disjoint_laws_are_vertices() {
    let laws = disjoint_laws(3);
    let corners = corner_profile(&laws, 1e8, 1e10, &OptimizeConfig::default()).unwrap();
    assert_eq!(corners.len(), 3);
    for (j, report) in corners.values().enumerate() {
        let vertex = MixtureVector::vertex(default_domain_names(3), j).unwrap();
        assert!(js_distance_weights(report.h_star.weights(), vertex.weights()) < 0.01);
    }
}

#[test]
fn corners_of_symmetric_laws_coincide() {
    let law = additive(&[1.0, 1.0, 1.0], &[0.5, 0.5, 0.5]);
    let laws = named(vec![law.clone(), law.clone(), law]);
    let corners = corner_profile(&laws, 1e8, 1e10, &OptimizeConfig::default()).unwrap();
    let first = corners[0].h_star.clone();
    assert!(corners.values().all(|r| r.h_star == first));
}

#[test]
fn fixed_points_at_vertices_and_symmetry() {
    let names = default_domain_names(3);
    let vertices: Vec<TargetWeights> =
        (0..3).map(|j| TargetWeights::new(vec![(names[j].clone(), 1.0)]).unwrap()).collect();
    for row in fixed_point_scan(&disjoint_laws(3), 1e8, 1e10, &vertices, &OptimizeConfig::default()).unwrap() {
        assert!(row.is_fixed_point, "{}", row.js);
    }

    let law = additive(&[1.0, 1.0, 1.0], &[0.5, 0.5, 0.5]);
    let symmetric = named(vec![law.clone(), law.clone(), law]);
    let uniform = TargetWeights::uniform(&names).unwrap();
    let rows = fixed_point_scan(&symmetric, 1e8, 1e10, &[uniform], &OptimizeConfig::default()).unwrap();
    assert!(rows[0].js < 1e-12);
    assert!(rows[0].is_fixed_point);
}

#[test]
fn asymmetric_joint_laws_have_no_interior_fixed_points() {
    let laws = named(vec![
        joint(&[6.0, 1.0, 2.0], &[300.0, 100.0, 50.0], &[400.0, 900.0, 200.0]),
        joint(&[1.0, 5.0, 1.5], &[100.0, 500.0, 150.0], &[700.0, 300.0, 300.0]),
        joint(&[2.0, 1.0, 4.0], &[200.0, 80.0, 600.0], &[300.0, 500.0, 250.0]),
    ]);
    let names = default_domain_names(3);
    let grid: Vec<TargetWeights> = simplex_grid(&names, 0.1, 0.1)
        .unwrap()
        .into_iter()
        .map(|m| TargetWeights::new(names.iter().cloned().zip(m.weights().iter().copied()).collect()).unwrap())
        .collect();
    let rows = fixed_point_scan(&laws, 1e8, 1e10, &grid, &OptimizeConfig::default()).unwrap();
    let min_js = rows.iter().map(|r| r.js).fold(f64::INFINITY, f64::min);
    assert!(min_js > FIXED_POINT_JS, "{min_js}");
}

#[test]
fn additive_asymptote_trace_is_constant() {
    let law = additive(&[3.0, 1.0, 2.0], &[0.5, 0.7, 0.3]);
    let laws = named(vec![law]);
    let w = TargetWeights::new(vec![("d0".into(), 1.0)]).unwrap();
    let schedule: Vec<(f64, f64)> = (0..5).map(|i| (1e7 * 10f64.powi(i), 1e9 * 10f64.powi(i))).collect();
    let trace = asymptote_trace(&laws, &w, &schedule, &OptimizeConfig::default()).unwrap();
    for r in &trace {
        assert!(js_distance_weights(r.h_star.weights(), trace[0].h_star.weights()) < 1e-6);
    }
}

#[test]
fn joint_asymptote_trace_approaches_the_limit_optimum() {
    let laws = named(vec![joint(&[1.0, 1.0, 1.0], &[2000.0, 50.0, 300.0], &[4000.0, 100.0, 900.0])]);
    let w = TargetWeights::new(vec![("d0".into(), 1.0)]).unwrap();
    let config = OptimizeConfig::default();
    let limit = asymptotic_optimum(&laws, &w, &config).unwrap();
    let schedule: Vec<(f64, f64)> = (0..12).map(|i| (1e6 * 100f64.powi(i), 2e7 * 100f64.powi(i))).collect();
    let trace = asymptote_trace(&laws, &w, &schedule, &config).unwrap();
    let distances: Vec<f64> =
        trace.iter().map(|r| js_distance_weights(r.h_star.weights(), limit.h_star.weights())).collect();
    assert!(distances.windows(2).all(|p| p[1] <= p[0] + 1e-9), "{distances:?}");
    assert!(distances[0] > 0.05, "{distances:?}");
    assert!(*distances.last().unwrap() < 1e-2, "{distances:?}");
}

#[test]
fn asymptote_schedule_must_grow() {
    let laws = named(vec![additive(&[1.0, 2.0], &[0.5, 0.5])]);
    let w = TargetWeights::new(vec![("d0".into(), 1.0)]).unwrap();
    let config = OptimizeConfig::default();
    assert_eq!(asymptote_trace(&laws, &w, &[(1e8, 1e9), (1e8, 1e9)], &config).unwrap_err().name(), "InvalidConfig");
    assert_eq!(asymptote_trace(&laws, &w, &[], &config).unwrap_err().name(), "InvalidConfig");
    let n_only = asymptote_trace(&laws, &w, &[(1e8, 1e9), (1e9, 1e9)], &config).unwrap();
    assert_eq!(n_only.len(), 2);
    let missing = TargetWeights::new(vec![("other".into(), 1.0)]).unwrap();
    assert_eq!(asymptote_trace(&laws, &missing, &[(1e8, 1e9)], &config).unwrap_err().name(), "DomainMismatch");
}
