use foha_core::coarray::{central_consecutive, fodca_with, CumulantForm, FormSelection, SensorArray};
use foha_core::designs::{optimize_foha, GeneratorKind, SearchMode};
use foha_core::music::{
    music_estimate, noise_subspace, noise_projection_norm, population_lag_vector, sample_cumulant,
    smoothed_matrix, virtual_lag_vector, LagAverager, VirtualLagVector, DEFAULT_GRID,
};
use foha_core::signal::{generate_snapshots, steering_matrix, trial_rng, Modulation, SimScenario, SnapshotMatrix, SourceConfig};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

fn noise_only(n: usize, k: usize, seed: u64) -> SnapshotMatrix {
    let mut rng = trial_rng(seed, 0);
    let sd = 0.5f64.sqrt();
    SnapshotMatrix::new(DMatrix::from_fn(n, k, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re, im) * sd
    }))
}

fn max_error(a: &VirtualLagVector, b: &VirtualLagVector) -> f64 {
    a.values().iter().zip(b.values()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

#[test]
fn covariance_law_of_large_numbers() {
    let p = SensorArray::new([0, 1, 4, 9]).unwrap();
    let angles = vec![-25.0, 40.0];
    let src = SourceConfig::new(angles.clone(), Modulation::Qpsk).unwrap();
    let sc = SimScenario::new(p.clone(), 0.0, 100_000, 11).unwrap();
    let r = generate_snapshots(&sc, &src).sample_covariance();
    let a = steering_matrix(&p, &angles);
    let expect = &a * a.adjoint() + DMatrix::identity(4, 4) * Complex64::from(sc.noise_variance());
    let err = (r - expect).iter().map(|v| v.norm()).fold(0.0, f64::max);
    assert!(err < 0.05, "{err}");
}

#[test]
fn single_sensor_qpsk_cumulant() {
    let p = SensorArray::new([0]).unwrap();
    let src = SourceConfig::new(vec![0.0], Modulation::Qpsk).unwrap();
    let x = generate_snapshots(&SimScenario::new(p, f64::INFINITY, 100_000, 3).unwrap(), &src);
    for form in CumulantForm::ALL {
        let c = sample_cumulant(&x, [0; 4], form).unwrap();
        assert!((c - Complex64::new(-1.0, 0.0)).norm() < 0.05, "{form:?}: {c}");
    }
}

#[test]
fn bpsk_cumulant() {
    let p = SensorArray::new([0]).unwrap();
    let src = SourceConfig::new(vec![0.0], Modulation::Bpsk).unwrap();
    let x = generate_snapshots(&SimScenario::new(p, f64::INFINITY, 100_000, 4).unwrap(), &src);
    let c = sample_cumulant(&x, [0; 4], CumulantForm::SumDiff).unwrap();
    assert!((c - Complex64::new(-2.0, 0.0)).norm() < 0.05, "{c}");
}

#[test]
fn gaussian_noise_cumulant_vanishes() {
    let x = noise_only(1, 100_000, 5);
    for form in CumulantForm::ALL {
        assert!(sample_cumulant(&x, [0; 4], form).unwrap().norm() < 0.05);
    }
}

#[test]
fn gaussian_blindness_on_virtual_lags() {
    let d = optimize_foha(6, GeneratorKind::Na, SearchMode::Algorithm).unwrap();
    let x = noise_only(6, 100_000, 6);
    let z = virtual_lag_vector(&x, &d.positions, d.extent() as usize).unwrap();
    let worst = z.values().iter().map(|v| v.norm()).fold(0.0, f64::max);
    assert!(worst < 0.1, "{worst}");
}

#[test]
fn virtual_lags_converge_to_population() {
    let d = optimize_foha(9, GeneratorKind::Na, SearchMode::Algorithm).unwrap();
    let angles = vec![-17.0, 33.0];
    let src = SourceConfig::new(angles.clone(), Modulation::Qpsk).unwrap();
    let sc = SimScenario::new(d.positions.clone(), 20.0, 100_000, 8).unwrap();
    let u = d.extent() as usize;
    let z = virtual_lag_vector(&generate_snapshots(&sc, &src), &d.positions, u).unwrap();
    let pop = population_lag_vector(u, &angles, &src.cumulants());
    let err = max_error(&z, &pop);
    assert!(err < 0.1, "{err}");
    for v in 0..=u as i64 {
        assert_eq!(z.get(v), z.get(-v).conj());
    }
}

#[test]
fn halving_snapshots_inflates_error() {
    let d = optimize_foha(6, GeneratorKind::Na, SearchMode::Algorithm).unwrap();
    let u = d.extent() as usize;
    let avg = LagAverager::new(&d.positions, u, FormSelection::Both).unwrap();
    let angles = vec![-10.0, 25.0];
    let src = SourceConfig::new(angles.clone(), Modulation::Qpsk).unwrap();
    let pop = population_lag_vector(u, &angles, &src.cumulants());
    let mean_err = |k: usize| {
        let mut tot = 0.0;
        for s in 0..8 {
            let sc = SimScenario::new(d.positions.clone(), 10.0, k, 21).unwrap().with_stream(s);
            let z = avg.average(&generate_snapshots(&sc, &src)).unwrap();
            tot += z.values().iter().zip(pop.values()).map(|(a, b)| (a - b).norm()).sum::<f64>();
        }
        tot
    };
    let ratio = mean_err(2000) / mean_err(4000);
    let sqrt2 = 2f64.sqrt();
    assert!(ratio > sqrt2 / 2.0 && ratio < sqrt2 * 2.0, "{ratio}");
}

#[test]
fn both_forms_agree_on_population() {
    // Noise-free, long data: the two forms estimate the same lags.
    let d = optimize_foha(6, GeneratorKind::Cna, SearchMode::Algorithm).unwrap();
    let u = [FormSelection::SumDiffOnly, FormSelection::DiffSumOnly]
        .iter()
        .map(|&f| central_consecutive(&fodca_with(&d.positions, f).unwrap()).unwrap())
        .min()
        .unwrap() as usize;
    assert!(u > 0);
    let src = SourceConfig::new(vec![12.0], Modulation::Qpsk).unwrap();
    let x = generate_snapshots(&SimScenario::new(d.positions.clone(), f64::INFINITY, 20_000, 2).unwrap(), &src);
    let a = LagAverager::new(&d.positions, u, FormSelection::SumDiffOnly).unwrap();
    let b = LagAverager::new(&d.positions, u, FormSelection::DiffSumOnly).unwrap();
    let err = max_error(&a.average(&x).unwrap(), &b.average(&x).unwrap());
    assert!(err < 0.05, "{err}");
}

#[test]
fn more_sources_than_sensors() {
    let d = optimize_foha(9, GeneratorKind::Na, SearchMode::Algorithm).unwrap();
    let truth: Vec<f64> = (0..12).map(|i| -60.0 + 120.0 * i as f64 / 11.0).collect();
    let z = population_lag_vector(d.extent() as usize, &truth, &[-1.0; 12]);
    let r = smoothed_matrix(&z);
    let est = music_estimate(&r, 12, DEFAULT_GRID).unwrap();
    for (e, t) in est.angles_deg.iter().zip(&truth) {
        assert!((e - t).abs() < 0.1, "{e} vs {t}");
    }
    let en = noise_subspace(&r, 12).unwrap();
    for t in &truth {
        assert!(noise_projection_norm(&en, *t) < 1e-6);
    }
}
