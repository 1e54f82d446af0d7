use tamed_spde::drift::DriftPolynomial;
use tamed_spde::fem1d::{discrete_spectrum, FemOperators, Mesh1D};
use tamed_spde::harness::{
    equilibration_study, moment_study, strong_rate_study, weak_rate_study, InitialCondition, Problem, Resolution,
    StudyConfig,
};
use tamed_spde::smoothing::{
    discrete_propagator, exact_semigroup, smoothing_constant, smoothing_error, PropagatorInput, SpectralFunction,
};

/// Spectral exponent at which every noise standard deviation underflows to zero.
const SILENT_NOISE: f64 = 1000.0;

fn tau_grid(ms: std::ops::RangeInclusive<u32>, level: u32) -> Vec<Resolution> {
    ms.map(|m| Resolution::new(m, level)).collect()
}

fn cheap(s: f64, samples: usize) -> StudyConfig {
    StudyConfig::new(Problem::allen_cahn(s), tau_grid(3..=5, 4), Resolution::new(8, 4), 1.0, samples, 17)
}

#[test]
fn noiseless_linear_study_measures_the_propagator_error() {
    let mut problem = Problem::allen_cahn(SILENT_NOISE);
    problem.drift = DriftPolynomial::new(vec![0.0, 0.0, 0.0, -1e-300], 1).unwrap();
    problem.initial = InitialCondition::Modes(vec![(1, 1.0), (2, -0.5)]);
    let cfg = StudyConfig::new(problem, tau_grid(3..=6, 5), Resolution::new(10, 5), 1.0, 2, 3);
    let r = strong_rate_study(&cfg).unwrap();
    let order = r.fitted_order().unwrap();
    assert!(order >= 1.0 - 0.05, "order {order}");
    assert!(r.rows.iter().all(|row| row.stderr < 1e-12 * row.error.max(1e-300) + 1e-300));
    assert!(!r.flags.iter().any(|f| f == "non-monotone"));
    assert!(r.metadata.crn);
}

#[test]
fn constant_observable_is_flagged() {
    let mut cfg = cheap(0.5005, 6);
    cfg.crn = false;
    let r = weak_rate_study(&cfg, &|_, _| 0.75).unwrap();
    assert!(r.rows.iter().all(|row| row.error <= 2.0 * row.stderr));
    assert!(r.fit.is_none());
    assert!(r.flags.iter().any(|f| f == "non-positive-error"));
    assert!(!r.pass);
}

#[test]
fn crn_flag_is_recorded_and_changes_error_bars() {
    let mut cfg = cheap(0.5005, 16);
    let obs = cfg.observable;
    let phi = move |ops: &FemOperators, x: &[f64]| obs.eval(ops, x);
    let independent = weak_rate_study(&cfg, &phi).unwrap();
    cfg.crn = true;
    let shared = weak_rate_study(&cfg, &phi).unwrap();
    assert!(!independent.metadata.crn);
    assert!(shared.metadata.crn);
    for (a, b) in independent.rows.iter().zip(&shared.rows) {
        assert!(b.stderr < a.stderr);
    }
}

#[test]
fn standard_errors_shrink_with_sample_count() {
    let small = strong_rate_study(&cheap(0.5005, 64)).unwrap();
    let large = strong_rate_study(&cheap(0.5005, 256)).unwrap();
    for (a, b) in small.rows.iter().zip(&large.rows) {
        let ratio = a.stderr / b.stderr;
        assert!((ratio / 2.0 - 1.0).abs() < 0.2, "ratio {ratio}");
    }
}

#[test]
fn reports_do_not_depend_on_worker_count() {
    let mut one = cheap(0.0, 12);
    one.workers = 1;
    let mut four = one.clone();
    four.workers = 4;
    let a = strong_rate_study(&one).unwrap();
    let b = strong_rate_study(&four).unwrap();
    assert_eq!(a.rows, b.rows);
    assert_eq!(a.fit, b.fit);
    let a = moment_study(&one, 1.0).unwrap();
    let b = moment_study(&four, 1.0).unwrap();
    assert_eq!(a.runs, b.runs);
}

#[test]
fn single_sample_equilibration_skips_agreement() {
    let mut cfg = cheap(0.5005, 1);
    cfg.grid = vec![Resolution::new(5, 4)];
    let obs = cfg.observable;
    let ics = [InitialCondition::Zero, InitialCondition::Modes(vec![(1, 2.0)])];
    let r = equilibration_study(&cfg, &ics, &move |ops, x| obs.eval(ops, x)).unwrap();
    assert_eq!(r.agreement, None);
    assert!(r.flags.iter().any(|f| f == "insufficient-samples"));
    assert_eq!(r.series.len(), 2);
    assert_eq!(r.series[0].mean.len(), r.times.len());
}

#[test]
fn identical_initial_conditions_give_identical_series() {
    let mut cfg = cheap(0.0, 4);
    cfg.grid = vec![Resolution::new(5, 4)];
    let obs = cfg.observable;
    let ic = InitialCondition::Modes(vec![(1, 2.0)]);
    let r = equilibration_study(&cfg, &[ic.clone(), ic], &move |ops, x| obs.eval(ops, x)).unwrap();
    assert_eq!(r.series[0].mean, r.series[1].mean);
    assert_eq!(r.max_pairwise_z, Some(0.0));
}

#[test]
fn silent_noise_from_rest_stays_at_rest() {
    let mut cfg = cheap(SILENT_NOISE, 3);
    cfg.grid = vec![Resolution::new(6, 4), Resolution::new(5, 4)];
    cfg.stride = 4;
    let r = moment_study(&cfg, 4.0).unwrap();
    for run in &r.runs {
        for s in [&run.l2_sq, &run.l4_pow4, &run.seminorm_sq] {
            assert!(s.mean.iter().all(|v| *v == 0.0));
        }
    }
}

#[test]
fn equilibration_requires_contraction() {
    let mut cfg = cheap(0.5005, 2);
    cfg.problem.drift = DriftPolynomial::new(vec![0.0, 20.0, 0.0, -1.0], 1).unwrap();
    cfg.grid = vec![Resolution::new(4, 4)];
    assert!(equilibration_study(&cfg, &[InitialCondition::Zero], &|_, _| 0.0).is_err());
}

#[test]
fn smooth_mode_is_resolved() {
    let ops = FemOperators::new(Mesh1D::dyadic(1.0, 7).unwrap()).unwrap();
    let v = SpectralFunction::mode(1.0, 1, 1.0).unwrap();
    let e = smoothing_error(&ops, 2f64.powi(-10), 1024, 2.0, &v).unwrap();
    assert!(e.error < 1e-3, "{}", e.error);
}

#[test]
fn smooth_data_error_falls_along_refinement() {
    let v = SpectralFunction::new(1.0, vec![1.0, 0.0, 0.3]).unwrap();
    let errors: Vec<f64> = (2..=6)
        .map(|k| {
            let ops = FemOperators::new(Mesh1D::dyadic(1.0, k + 1).unwrap()).unwrap();
            smoothing_error(&ops, 2f64.powi(-(k as i32) - 2), 1 << (k + 2), 2.0, &v).unwrap().error
        })
        .collect();
    assert!(errors.windows(2).all(|w| w[1] < w[0]), "{errors:?}");
}

#[test]
fn lp_errors_increase_with_p_on_unit_interval() {
    let ops = FemOperators::new(Mesh1D::dyadic(1.0, 5).unwrap()).unwrap();
    let v = SpectralFunction::rough(1.0, 256, 4).unwrap();
    let e: Vec<f64> = [2.0, 4.0, f64::INFINITY]
        .iter()
        .map(|&p| smoothing_error(&ops, 1.0 / 16.0, 8, p, &v).unwrap().error)
        .collect();
    assert!(e[0] <= e[1] && e[1] <= e[2], "{e:?}");
}

#[test]
fn discrete_propagator_contracts_and_scales_eigenvectors() {
    let ops = FemOperators::new(Mesh1D::dyadic(1.0, 4).unwrap()).unwrap();
    let spec = discrete_spectrum(&ops).unwrap();
    let tau = 0.3;
    for j in [0, 3, 14] {
        let e = &spec.modes[j];
        let got = discrete_propagator(&ops, tau, 5, PropagatorInput::Nodal(e)).unwrap();
        let factor = (1.0 + tau * spec.lambdas[j]).powi(-5);
        for (g, x) in got.iter().zip(e) {
            assert!((g - factor * x).abs() < 1e-10 * x.abs().max(1.0));
        }
    }
    let v = SpectralFunction::rough(1.0, 128, 9).unwrap();
    let p = discrete_propagator(&ops, tau, 0, PropagatorInput::Spectral(&v)).unwrap();
    let mut prev = ops.l2_norm(&p);
    for n in 1..6 {
        let now = ops.l2_norm(&discrete_propagator(&ops, tau, n, PropagatorInput::Spectral(&v)).unwrap());
        assert!(now <= prev);
        prev = now;
    }
}

#[test]
fn semigroup_is_a_contraction() {
    let v = SpectralFunction::rough(1.0, 64, 1).unwrap();
    let mut prev = v.l2_norm();
    for t in [0.001, 0.01, 0.1, 1.0] {
        let now = exact_semigroup(&v, t).unwrap().l2_norm();
        assert!(now <= prev);
        prev = now;
    }
}

#[test]
fn smoothing_constant_is_finite_and_uniform() {
    let v = SpectralFunction::rough(1.0, 512, 2).unwrap();
    let mut constants = Vec::new();
    for level in [4, 6] {
        let ops = FemOperators::new(Mesh1D::dyadic(1.0, level).unwrap()).unwrap();
        let grid: Vec<(f64, usize)> = [1e-3, 1e-2, 0.1].iter().flat_map(|&tau| [(tau, 1), (tau, 10), (tau, 100)]).collect();
        let c = smoothing_constant(&ops, &grid, 2.0, &v).unwrap();
        assert!(c.is_finite() && c > 0.0);
        constants.push(c);
    }
    assert!(constants[1] < 10.0 * constants[0]);
}
