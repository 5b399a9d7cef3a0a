//! Narrowband far-field snapshot simulation.
//!
//! Steering convention: `a_n(θ) = exp(-jπ p_n sin θ)` with positions in
//! half-wavelength units.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coarray::SensorArray;
use crate::metrics::{coupling_matrix, CouplingModel};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SignalError {
    #[error("at least one source is required")]
    NoSources,
    #[error("source angle {0}° outside (-90°, 90°)")]
    AngleOutOfRange(f64),
    #[error("duplicate source angle {0}°")]
    DuplicateAngle(f64),
    #[error("{powers} powers given for {sources} sources")]
    PowerCount { powers: usize, sources: usize },
    #[error("source power must be positive and finite, got {0}")]
    BadPower(f64),
    #[error("snapshot count must be at least 1")]
    NoSnapshots,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modulation {
    #[default]
    Qpsk,
    Bpsk,
}

/// Fourth-order cumulant `E|s|⁴ − |E s²|² − 2(E|s|²)²` of the unit-power
/// constellation.
pub fn source_kurtosis(m: Modulation) -> f64 {
    match m {
        Modulation::Qpsk => -1.0,
        Modulation::Bpsk => -2.0,
    }
}

impl Modulation {
    fn draw(self, rng: &mut impl Rng) -> Complex64 {
        match self {
            Modulation::Qpsk => {
                let re = if rng.random::<bool>() { FRAC_1_SQRT_2 } else { -FRAC_1_SQRT_2 };
                let im = if rng.random::<bool>() { FRAC_1_SQRT_2 } else { -FRAC_1_SQRT_2 };
                Complex64::new(re, im)
            }
            Modulation::Bpsk => Complex64::new(if rng.random::<bool>() { 1.0 } else { -1.0 }, 0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourceConfig {
    angles_deg: Vec<f64>,
    modulation: Modulation,
    powers: Vec<f64>,
}

impl SourceConfig {
    /// Unit-power sources.
    pub fn new(angles_deg: Vec<f64>, modulation: Modulation) -> Result<Self, SignalError> {
        let powers = vec![1.0; angles_deg.len()];
        Self::with_powers(angles_deg, modulation, powers)
    }

    pub fn with_powers(
        angles_deg: Vec<f64>,
        modulation: Modulation,
        powers: Vec<f64>,
    ) -> Result<Self, SignalError> {
        if angles_deg.is_empty() {
            return Err(SignalError::NoSources);
        }
        if powers.len() != angles_deg.len() {
            return Err(SignalError::PowerCount { powers: powers.len(), sources: angles_deg.len() });
        }
        for (i, &a) in angles_deg.iter().enumerate() {
            if !(a > -90.0 && a < 90.0) {
                return Err(SignalError::AngleOutOfRange(a));
            }
            if angles_deg[..i].contains(&a) {
                return Err(SignalError::DuplicateAngle(a));
            }
        }
        if let Some(&p) = powers.iter().find(|p| !(p.is_finite() && **p > 0.0)) {
            return Err(SignalError::BadPower(p));
        }
        Ok(Self { angles_deg, modulation, powers })
    }

    pub fn angles_deg(&self) -> &[f64] {
        &self.angles_deg
    }

    pub fn modulation(&self) -> Modulation {
        self.modulation
    }

    pub fn powers(&self) -> &[f64] {
        &self.powers
    }

    pub fn len(&self) -> usize {
        self.angles_deg.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles_deg.is_empty()
    }

    /// Per-source cumulant `c4 · power²`.
    pub fn cumulants(&self) -> Vec<f64> {
        let c4 = source_kurtosis(self.modulation);
        self.powers.iter().map(|p| c4 * p * p).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimScenario {
    pub array: SensorArray,
    /// Per-source SNR in dB; `f64::INFINITY` disables noise.
    pub snr_db: f64,
    pub snapshots: usize,
    pub coupling: Option<CouplingModel>,
    pub seed: u64,
    /// Independent ChaCha stream under the same seed, e.g. a trial index.
    pub stream: u64,
}

impl SimScenario {
    pub fn new(array: SensorArray, snr_db: f64, snapshots: usize, seed: u64) -> Result<Self, SignalError> {
        if snapshots == 0 {
            return Err(SignalError::NoSnapshots);
        }
        Ok(Self { array, snr_db, snapshots, coupling: None, seed, stream: 0 })
    }

    pub fn with_coupling(mut self, coupling: Option<CouplingModel>) -> Self {
        self.coupling = coupling;
        self
    }

    pub fn with_stream(mut self, stream: u64) -> Self {
        self.stream = stream;
        self
    }

    pub fn noise_variance(&self) -> f64 {
        10f64.powf(-self.snr_db / 10.0)
    }
}

/// Generator for trial `stream` under `seed`; streams never overlap, so a
/// trial's data does not depend on which other trials ran or in what order.
pub fn trial_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// `N × K` complex samples, one column per snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotMatrix {
    data: DMatrix<Complex64>,
}

impl SnapshotMatrix {
    pub fn new(data: DMatrix<Complex64>) -> Self {
        Self { data }
    }

    pub fn sensors(&self) -> usize {
        self.data.nrows()
    }

    pub fn snapshots(&self) -> usize {
        self.data.ncols()
    }

    pub fn data(&self) -> &DMatrix<Complex64> {
        &self.data
    }

    /// `(1/K) X Xᴴ`.
    pub fn sample_covariance(&self) -> DMatrix<Complex64> {
        self.data.clone() * self.data.adjoint() / Complex64::from(self.snapshots() as f64)
    }
}

pub fn steering_vector(p: &SensorArray, theta_deg: f64) -> DVector<Complex64> {
    let s = theta_deg.to_radians().sin();
    DVector::from_iterator(
        p.len(),
        p.positions().iter().map(|&x| Complex64::from_polar(1.0, -PI * x as f64 * s)),
    )
}

pub fn steering_matrix(p: &SensorArray, angles_deg: &[f64]) -> DMatrix<Complex64> {
    let cols: Vec<_> = angles_deg.iter().map(|&a| steering_vector(p, a)).collect();
    DMatrix::from_columns(&cols)
}

/// `X = C A S + V`.
pub fn generate_snapshots(scenario: &SimScenario, sources: &SourceConfig) -> SnapshotMatrix {
    let n = scenario.array.len();
    let k = scenario.snapshots;
    let d = sources.len();
    let mut rng = trial_rng(scenario.seed, scenario.stream);

    let amp: Vec<f64> = sources.powers().iter().map(|p| p.sqrt()).collect();
    let mut s = DMatrix::<Complex64>::zeros(d, k);
    for t in 0..k {
        for i in 0..d {
            s[(i, t)] = sources.modulation().draw(&mut rng) * amp[i];
        }
    }

    let a = steering_matrix(&scenario.array, sources.angles_deg());
    let mut x = match &scenario.coupling {
        Some(model) => coupling_matrix(&scenario.array, model) * a * s,
        None => a * s,
    };

    let var = scenario.noise_variance();
    if var > 0.0 {
        let sd = (var / 2.0).sqrt();
        for t in 0..k {
            for i in 0..n {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                x[(i, t)] += Complex64::new(re, im) * sd;
            }
        }
    }
    SnapshotMatrix::new(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn arr(p: &[i64]) -> SensorArray {
        SensorArray::new(p.iter().copied()).unwrap()
    }

    #[test]
    fn steering_examples() {
        let p = arr(&[0, 1, 3, 7]);
        assert!(steering_vector(&p, 0.0).iter().all(|v| *v == Complex64::new(1.0, 0.0)));
        let v = steering_vector(&arr(&[0, 1]), 90.0);
        assert_abs_diff_eq!(v[1].re, -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(v[1].im, 0.0, epsilon = 1e-15);
        for theta in [-70.0, -12.5, 33.0] {
            let a = steering_vector(&p, theta);
            let b = steering_vector(&p, -theta);
            for (x, y) in a.iter().zip(b.iter()) {
                assert_abs_diff_eq!(x.norm(), 1.0, epsilon = 1e-15);
                assert_abs_diff_eq!((x - y.conj()).norm(), 0.0, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn kurtosis_values() {
        assert_eq!(source_kurtosis(Modulation::Qpsk), -1.0);
        assert_eq!(source_kurtosis(Modulation::Bpsk), -2.0);
    }

    #[test]
    fn source_validation() {
        assert_eq!(SourceConfig::new(vec![], Modulation::Qpsk), Err(SignalError::NoSources));
        assert!(matches!(SourceConfig::new(vec![90.0], Modulation::Qpsk), Err(SignalError::AngleOutOfRange(_))));
        assert!(matches!(SourceConfig::new(vec![10.0, 10.0], Modulation::Qpsk), Err(SignalError::DuplicateAngle(_))));
        assert!(matches!(
            SourceConfig::with_powers(vec![10.0], Modulation::Qpsk, vec![0.0]),
            Err(SignalError::BadPower(_))
        ));
        assert!(SimScenario::new(arr(&[0, 1]), 0.0, 0, 1).is_err());
    }

    #[test]
    fn noiseless_single_source_broadside() {
        let sc = SimScenario::new(arr(&[0, 1, 4]), f64::INFINITY, 50, 3).unwrap();
        let src = SourceConfig::new(vec![0.0], Modulation::Qpsk).unwrap();
        let x = generate_snapshots(&sc, &src);
        assert_eq!((x.sensors(), x.snapshots()), (3, 50));
        for t in 0..50 {
            let s0 = x.data()[(0, t)];
            assert_abs_diff_eq!(s0.norm(), 1.0, epsilon = 1e-12);
            for i in 1..3 {
                assert_eq!(x.data()[(i, t)], s0);
            }
        }
    }

    #[test]
    fn deterministic_per_seed_and_stream() {
        let src = SourceConfig::new(vec![-20.0, 35.0], Modulation::Qpsk).unwrap();
        let sc = SimScenario::new(arr(&[0, 1, 4, 9]), 5.0, 64, 42).unwrap();
        let a = generate_snapshots(&sc, &src);
        assert_eq!(a, generate_snapshots(&sc, &src));
        assert_ne!(a, generate_snapshots(&sc.clone().with_stream(1), &src));
    }

    #[test]
    fn identity_coupling_is_transparent() {
        let src = SourceConfig::new(vec![12.0], Modulation::Bpsk).unwrap();
        let sc = SimScenario::new(arr(&[0, 2, 5]), 10.0, 32, 7).unwrap();
        let plain = generate_snapshots(&sc, &src);
        let coupled = generate_snapshots(&sc.with_coupling(Some(CouplingModel::identity())), &src);
        assert_eq!(plain, coupled);
    }
}
