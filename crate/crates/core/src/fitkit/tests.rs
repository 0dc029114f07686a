use super::*;
use crate::laws::{AdditiveParams, FamilyParams, Transform};
use crate::mixture::{default_domain_names, MixtureVector, RunRecord};
use crate::synthlab::{random_law, simplex_grid, synth_runs, DesignSpec, NoiseModel};
use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn additive_truth(k: usize) -> LawParams {
    let c = [2.0, 3.0, 4.0, 2.5][..k].to_vec();
    let gamma = [0.4, 0.7, 0.9, 0.5][..k].to_vec();
    let p = AdditiveParams { e: 1.8, a: 400.0, b: 410.0, alpha: 0.34, beta: 0.28, c, gamma };
    LawParams::new(default_domain_names(k), FamilyParams::Additive(p)).unwrap()
}

fn design(truth: LawParams, sizes: Vec<u64>, tokens: Vec<u64>, noise: NoiseModel) -> Dataset {
    let names = truth.domain_names().to_vec();
    let mut map = IndexMap::new();
    map.insert("t".to_string(), truth);
    let spec = DesignSpec {
        mixtures: simplex_grid(&names, 0.1, 0.1).unwrap(),
        domain_names: names,
        sizes,
        token_checkpoints: tokens,
        truth: map,
        noise,
        seed: 3,
    };
    synth_runs(&spec).unwrap()
}

fn small_data() -> Dataset {
    design(additive_truth(2), vec![20_000_000, 80_000_000], vec![1_000_000_000, 10_000_000_000], NoiseModel::None)
}

fn quick_config(seed: u64) -> FitConfig {
    FitConfig { n_restarts: 4, n_hops: 5, seed, ..FitConfig::default() }
}

#[test]
fn objective_vanishes_at_generating_parameters() {
    let truth = additive_truth(3);
    let data = design(truth.clone(), vec![20_000_000, 200_000_000], vec![1_000_000_000, 9_000_000_000], NoiseModel::None);
    let (value, grad) = fit_objective(Family::Additive, &truth.to_internal(), &data, "t", 1e-3).unwrap();
    assert!(value.abs() < 1e-14, "{value}");
    assert!(grad.iter().all(|g| g.abs() < 1e-14), "{grad:?}");
}

#[test]
fn single_offset_record_matches_huber_example() {
    let names = default_domain_names(1);
    let p = AdditiveParams { e: 1.0, a: 2.0, b: 3.0, alpha: 1.0, beta: 1.0, c: vec![1.0], gamma: vec![1.0] };
    let law = LawParams::new(names.clone(), FamilyParams::Additive(p)).unwrap();
    let h = MixtureVector::new(vec![1.0], names.clone()).unwrap();
    let predicted = law.eval(2.0, 3.0, &[1.0]).unwrap();
    let record = RunRecord::new("r", 2, 3, h, "t", predicted + 2e-3).unwrap();
    let data = Dataset::new(names, vec![record]).unwrap();
    let (value, _) = fit_objective(Family::Additive, &law.to_internal(), &data, "t", 1e-3).unwrap();
    assert!((value - 1.5e-6).abs() < 1e-15, "{value}");
}

#[test]
fn objective_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let data = design(
        additive_truth(3),
        vec![20_000_000, 200_000_000],
        vec![1_000_000_000, 9_000_000_000],
        NoiseModel::MultiplicativeLognormal { sigma: 0.01 },
    );
    for family in Family::ALL {
        for _ in 0..5 {
            let z = random_law(family, default_domain_names(3), &mut rng).to_internal();
            let (_, grad) = fit_objective(family, &z, &data, "t", 1e-3).unwrap();
            for i in 0..z.len() {
                let step = 1e-6 * z[i].abs().max(1.0);
                let mut plus = z.clone();
                let mut minus = z.clone();
                plus[i] += step;
                minus[i] -= step;
                let fp = fit_objective(family, &plus, &data, "t", 1e-3).unwrap().0;
                let fm = fit_objective(family, &minus, &data, "t", 1e-3).unwrap().0;
                let fd = (fp - fm) / (2.0 * step);
                let scale = grad[i].abs().max(fd.abs()).max(1e-6);
                assert!((grad[i] - fd).abs() / scale < 1e-4, "{family} coordinate {i}: {} vs {fd}", grad[i]);
            }
        }
    }
}

#[test]
fn objective_rejects_unknown_target_and_bad_shapes() {
    let data = small_data();
    let z = additive_truth(2).to_internal();
    assert_eq!(fit_objective(Family::Additive, &z, &data, "nope", 1e-3).unwrap_err().name(), "EmptyDataset");
    assert_eq!(fit_objective(Family::Additive, &z[1..], &data, "t", 1e-3).unwrap_err().name(), "ShapeMismatch");
}

#[test]
fn random_init_is_deterministic_and_inside_the_box() {
    let data = small_data();
    let min_loss = data.records().iter().map(|r| r.loss).fold(f64::INFINITY, f64::min);
    let a = random_init(Family::Joint, &data, "t", &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
    let b = random_init(Family::Joint, &data, "t", &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
    assert_eq!(a, b);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for family in [Family::Additive, Family::Joint, Family::Full, Family::Chinchilla] {
        let layout = family.layout(2);
        for _ in 0..1000 {
            let z = random_init(family, &data, "t", &mut rng).unwrap();
            let e = Transform::Log.to_natural(z[0]);
            assert!(e > 0.0 && e < min_loss);
            for (t, zi) in layout.iter().zip(&z) {
                let x = t.to_natural(*zi);
                if *t == Transform::Exponent {
                    assert!(x > 0.0 && x <= 5.0);
                    assert!((EXPONENT_LOW - 1e-12..=EXPONENT_HIGH + 1e-12).contains(&x));
                }
                if *t == Transform::Log {
                    assert!(x > 0.0);
                }
            }
            LawParams::from_internal(family, data.domain_names().to_vec(), &z).unwrap();
        }
    }
}

#[test]
fn mre_definition() {
    assert_eq!(mre(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
    assert!((mre(&[1.1], &[1.0]).unwrap() - 10.0).abs() < 1e-12);
    assert!((mre(&[0.9, 3.3], &[1.0, 3.0]).unwrap() - 10.0).abs() < 1e-12);
    assert_eq!(mre(&[1.0], &[1.0, 2.0]).unwrap_err().name(), "ShapeMismatch");
    assert_eq!(mre(&[], &[]).unwrap_err().name(), "ShapeMismatch");
    assert_eq!(mre(&[1.0], &[0.0]).unwrap_err().name(), "InvalidObservation");
    assert_eq!(mre(&[1.0], &[-1.0]).unwrap_err().name(), "InvalidObservation");
}

#[test]
fn config_validation() {
    assert!(FitConfig::default().validate().is_ok());
    for bad in [
        FitConfig { delta: 0.0, ..FitConfig::default() },
        FitConfig { n_restarts: 0, ..FitConfig::default() },
        FitConfig { hop_step: -1.0, ..FitConfig::default() },
        FitConfig { grad_tol: f64::NAN, ..FitConfig::default() },
    ] {
        assert_eq!(bad.validate().unwrap_err().name(), "InvalidConfig");
    }
}

#[test]
fn fit_is_deterministic_per_seed() {
    let data = small_data();
    let a = fit_law(Family::Additive, &data, "t", &quick_config(9)).unwrap();
    let b = fit_law(Family::Additive, &data, "t", &quick_config(9)).unwrap();
    assert_eq!(a, b);
    assert!(a.huber_value >= 0.0 && a.train_mre_percent >= 0.0);
    assert_eq!(a.n_points, data.len());
    assert_eq!(a.restarts_used, 4);
    assert_eq!(a.lbfgs_calls, 4 * 6);
}

#[test]
fn fit_needs_enough_records() {
    let data = small_data();
    let few = Dataset::new(data.domain_names().to_vec(), data.records()[..5].to_vec()).unwrap();
    let err = fit_law(Family::Joint, &few, "t", &quick_config(0)).unwrap_err();
    assert_eq!(err, Error::InsufficientData { have: 5, need: Family::Joint.dim(2) });
    assert_eq!(fit_law(Family::Additive, &data, "x", &quick_config(0)).unwrap_err().name(), "EmptyDataset");
}

#[test]
fn noiseless_fit_recovers_predictions() {
    let data = small_data();
    let config = FitConfig { n_restarts: 8, n_hops: 20, seed: 1, ..FitConfig::default() };
    let fit = fit_law(Family::Additive, &data, "t", &config).unwrap();
    assert!(fit.train_mre_percent < 0.05, "{}", fit.train_mre_percent);
    assert!((evaluate_mre(&fit.law, &data, "t").unwrap() - fit.train_mre_percent).abs() < 1e-9);
}

#[test]
fn warm_start_never_loses_to_the_embedded_law() {
    let data = small_data();
    let additive = fit_law(Family::Additive, &data, "t", &quick_config(2)).unwrap();
    let warm = additive.law.embed_up().unwrap();
    let joint = fit_law_warm(Family::Joint, &data, "t", &quick_config(2), &[warm]).unwrap();
    assert!(joint.huber_value <= additive.huber_value, "{} > {}", joint.huber_value, additive.huber_value);
    let wrong = fit_law_warm(Family::Full, &data, "t", &quick_config(2), &[additive.law.clone()]);
    assert_eq!(wrong.unwrap_err().name(), "InvalidConfig");
}

#[test]
fn basin_hop_is_no_worse_than_its_first_local_solve() {
    let data = small_data();
    let problem = FitProblem::new(Family::Additive, &data, "t", 1e-3).unwrap();
    let objective = |z: &[f64], g: &mut [f64]| problem.value_grad(z, g);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..3 {
        let z0 = sample_start(Family::Additive, 2, problem.min_loss(), &mut rng);
        let plain = lbfgs_minimize(&objective, &z0, 10, 500, 1e-9).unwrap();
        let hop = basin_hop(&objective, &z0, &quick_config(0).basin(), &mut ChaCha8Rng::seed_from_u64(rng.random()))
            .unwrap();
        assert!(hop.value <= plain.value);
    }
}

#[test]
fn traces_are_nonincreasing() {
    let data = small_data();
    let problem = FitProblem::new(Family::Additive, &data, "t", 1e-3).unwrap();
    let config = quick_config(0);
    let a = random_restart_trace(&problem, &config, 6, &mut crate::rng::substream(1, "t", 0));
    let b = basin_hop_trace(&problem, &config, 6, &mut crate::rng::substream(1, "t", 0));
    for t in [a, b] {
        assert_eq!(t.len(), 6);
        assert!(t.windows(2).all(|w| w[1] <= w[0]));
    }
}
