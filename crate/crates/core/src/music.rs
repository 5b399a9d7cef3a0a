//! Fourth-order cumulant estimation and spatial-smoothing MUSIC on the
//! fourth-order difference co-array.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coarray::{self, CoarrayError, CumulantForm, FormSelection, Lag, SensorArray};
use crate::signal::SnapshotMatrix;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MusicError {
    #[error("cumulant estimation needs at least 2 snapshots, got {0}")]
    TooFewSnapshots(usize),
    #[error("sensor index {index} out of range for {sensors} sensors")]
    IndexOutOfRange { index: usize, sensors: usize },
    #[error("hole at lag {0}")]
    Hole(Lag),
    #[error("snapshot matrix has {got} sensors, array has {expected}")]
    SensorMismatch { got: usize, expected: usize },
    #[error("requested {sources} sources but the virtual array supports at most {max}")]
    TooManySources { sources: usize, max: usize },
    #[error("unresolved sources: found {found} of {wanted} peaks")]
    Unresolved { found: usize, wanted: usize },
    #[error("grid needs at least 3 points, got {0}")]
    GridTooSmall(usize),
    #[error("expected {expected} estimates per trial, got {got}")]
    SizeMismatch { expected: usize, got: usize },
    #[error("no trials")]
    NoTrials,
    #[error(transparent)]
    Coarray(#[from] CoarrayError),
}

fn check_snapshots(x: &SnapshotMatrix) -> Result<(), MusicError> {
    if x.snapshots() < 2 {
        Err(MusicError::TooFewSnapshots(x.snapshots()))
    } else {
        Ok(())
    }
}

fn check_indices(k: [usize; 4], n: usize) -> Result<(), MusicError> {
    match k.iter().find(|&&i| i >= n) {
        Some(&index) => Err(MusicError::IndexOutOfRange { index, sensors: n }),
        None => Ok(()),
    }
}

/// Sample fourth-order cumulant straight from the snapshots (0-based sensor
/// indices).
///
/// `SumDiff` is `cum(x₁, x₂, x₃*, x₄*)` and `DiffSum` is `cum(x₁, x₂*, x₃, x₄*)`.
pub fn sample_cumulant(x: &SnapshotMatrix, k: [usize; 4], form: CumulantForm) -> Result<Complex64, MusicError> {
    check_snapshots(x)?;
    check_indices(k, x.sensors())?;
    // Conjugation pattern per argument.
    let conj = match form {
        CumulantForm::SumDiff => [false, false, true, true],
        CumulantForm::DiffSum => [false, true, false, true],
    };
    let d = x.data();
    let args: Vec<Vec<Complex64>> = (0..4)
        .map(|j| {
            d.row(k[j])
                .iter()
                .map(|v| if conj[j] { v.conj() } else { *v })
                .collect()
        })
        .collect();
    let kk = x.snapshots() as f64;
    let mean2 = |i: usize, j: usize| {
        args[i].iter().zip(&args[j]).map(|(a, b)| a * b).sum::<Complex64>() / kk
    };
    let m4 = (0..x.snapshots())
        .map(|t| args[0][t] * args[1][t] * args[2][t] * args[3][t])
        .sum::<Complex64>()
        / kk;
    let (m12, m34, m13, m24, m14, m23) = (mean2(0, 1), mean2(2, 3), mean2(0, 2), mean2(1, 3), mean2(0, 3), mean2(1, 2));
    Ok(m4 - m12 * m34 - m13 * m24 - m14 * m23)
}

/// Second and fourth sample moments of one snapshot matrix.
///
/// `R = E[x xᴴ]`, `Q = E[x xᵀ]`, and `M[(a,b),(c,d)] = E[x_a x_b x_c* x_d*]`
/// over unordered pairs, so every cumulant is an O(1) lookup.
#[derive(Debug, Clone)]
pub struct MomentTable {
    n: usize,
    r: DMatrix<Complex64>,
    q: DMatrix<Complex64>,
    m4: DMatrix<Complex64>,
}

fn pair_index(n: usize, a: usize, b: usize) -> usize {
    let (a, b) = if a <= b { (a, b) } else { (b, a) };
    a * n - a * (a + 1) / 2 + b
}

impl MomentTable {
    pub fn new(x: &SnapshotMatrix) -> Result<Self, MusicError> {
        check_snapshots(x)?;
        let n = x.sensors();
        let k = x.snapshots();
        let d = x.data();
        let inv_k = Complex64::from(1.0 / k as f64);

        let pairs = n * (n + 1) / 2;
        let mut y = DMatrix::<Complex64>::zeros(pairs, k);
        for a in 0..n {
            for b in a..n {
                let p = pair_index(n, a, b);
                for t in 0..k {
                    y[(p, t)] = d[(a, t)] * d[(b, t)];
                }
            }
        }
        let m4 = &y * y.adjoint() * inv_k;
        let r = d * d.adjoint() * inv_k;
        let q = d * d.transpose() * inv_k;
        Ok(Self { n, r, q, m4 })
    }

    pub fn sensors(&self) -> usize {
        self.n
    }

    fn m(&self, a: usize, b: usize, c: usize, d: usize) -> Complex64 {
        self.m4[(pair_index(self.n, a, b), pair_index(self.n, c, d))]
    }

    /// Same value as [`sample_cumulant`] up to rounding.
    pub fn cumulant(&self, k: [usize; 4], form: CumulantForm) -> Complex64 {
        let [a, b, c, d] = k;
        let (r, q) = (&self.r, &self.q);
        match form {
            CumulantForm::SumDiff => {
                self.m(a, b, c, d) - q[(a, b)] * q[(c, d)].conj() - r[(a, c)] * r[(b, d)] - r[(a, d)] * r[(b, c)]
            }
            CumulantForm::DiffSum => {
                self.m(a, c, b, d) - r[(a, b)] * r[(c, d)] - q[(a, c)] * q[(b, d)].conj() - r[(a, d)] * r[(c, b)]
            }
        }
    }
}

/// Virtual-array samples `z[u]` for `u ∈ {-U..U}`.
#[derive(Debug, Clone, PartialEq)]
pub struct VirtualLagVector {
    extent: usize,
    z: Vec<Complex64>,
}

impl VirtualLagVector {
    /// `values` holds `z[-U], …, z[U]`.
    pub fn new(values: Vec<Complex64>) -> Self {
        assert!(values.len() % 2 == 1, "lag vector length must be odd");
        Self { extent: values.len() / 2, z: values }
    }

    pub fn extent(&self) -> usize {
        self.extent
    }

    pub fn get(&self, u: Lag) -> Complex64 {
        self.z[(u + self.extent as i64) as usize]
    }

    pub fn values(&self) -> &[Complex64] {
        &self.z
    }

    /// `z[u] ← (z[u] + conj(z[-u])) / 2`.
    pub fn symmetrize(&mut self) {
        let len = self.z.len();
        let orig = self.z.clone();
        for i in 0..len {
            self.z[i] = (orig[i] + orig[len - 1 - i].conj()) * 0.5;
        }
    }
}

/// Noise-free `z[u] = Σ_i c4_i exp(-jπ u sin θ_i)`.
pub fn population_lag_vector(extent: usize, angles_deg: &[f64], c4: &[f64]) -> VirtualLagVector {
    assert_eq!(angles_deg.len(), c4.len());
    let u = extent as i64;
    let z = (-u..=u)
        .map(|lag| {
            angles_deg
                .iter()
                .zip(c4)
                .map(|(a, c)| Complex64::from_polar(*c, -PI * lag as f64 * a.to_radians().sin()))
                .sum()
        })
        .collect();
    VirtualLagVector::new(z)
}

/// Precomputed lag-to-quadruple map for one array and extent, reusable
/// across trials.
#[derive(Debug, Clone)]
pub struct LagAverager {
    n: usize,
    extent: usize,
    groups: Vec<Vec<([usize; 4], CumulantForm)>>,
}

impl LagAverager {
    pub fn new(p: &SensorArray, extent: usize, forms: FormSelection) -> Result<Self, MusicError> {
        let prov = coarray::fodca_provenance(p, forms)?;
        let u = extent as i64;
        let mut groups = Vec::with_capacity(2 * extent + 1);
        for lag in -u..=u {
            match prov.get(&lag) {
                Some(qs) => groups.push(qs.iter().map(|q| (q.k, q.form)).collect()),
                None => return Err(MusicError::Hole(lag)),
            }
        }
        Ok(Self { n: p.len(), extent, groups })
    }

    pub fn extent(&self) -> usize {
        self.extent
    }

    /// Equal-weight mean per lag, then Hermitian symmetrization.
    pub fn average(&self, x: &SnapshotMatrix) -> Result<VirtualLagVector, MusicError> {
        if x.sensors() != self.n {
            return Err(MusicError::SensorMismatch { got: x.sensors(), expected: self.n });
        }
        let table = MomentTable::new(x)?;
        let z = self
            .groups
            .iter()
            .map(|g| g.iter().map(|&(k, f)| table.cumulant(k, f)).sum::<Complex64>() / g.len() as f64)
            .collect();
        let mut v = VirtualLagVector::new(z);
        v.symmetrize();
        Ok(v)
    }
}

/// Virtual-array samples from data over both cumulant forms.
pub fn virtual_lag_vector(x: &SnapshotMatrix, p: &SensorArray, extent: usize) -> Result<VirtualLagVector, MusicError> {
    LagAverager::new(p, extent, FormSelection::Both)?.average(x)
}

/// `(U+1)×(U+1)` windows whose row `m` samples lag `m - i`, so that a
/// source at `θ` contributes the virtual steering `exp(-jπ m sin θ)`.
fn window_matrix(z: &VirtualLagVector) -> DMatrix<Complex64> {
    let u = z.extent();
    DMatrix::from_fn(u + 1, u + 1, |m, i| z.get(m as i64 - i as i64))
}

/// Spatially smoothed covariance `(1/(U+1)) Σ_i z_i z_iᴴ`.
pub fn smoothed_matrix(z: &VirtualLagVector) -> DMatrix<Complex64> {
    let w = window_matrix(z);
    let scale = Complex64::from(1.0 / (z.extent() + 1) as f64);
    &w * w.adjoint() * scale
}

/// Direct Toeplitz augmentation `R[m, n] = z[m - n]`.
pub fn toeplitz_matrix(z: &VirtualLagVector) -> DMatrix<Complex64> {
    window_matrix(z)
}

pub const DEFAULT_GRID: usize = 4001;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoaResult {
    /// Ascending.
    pub angles_deg: Vec<f64>,
    /// Pseudo-spectrum on the uniform `sin θ` grid over `[-1, 1]`.
    pub spectrum: Vec<f64>,
}

/// Uniform `sin θ` value of grid point `g`.
pub fn grid_sin(g: usize, grid_size: usize) -> f64 {
    -1.0 + 2.0 * g as f64 / (grid_size - 1) as f64
}

/// Noise subspace: eigenvectors past the `d` largest-magnitude eigenvalues.
pub fn noise_subspace(r: &DMatrix<Complex64>, d: usize) -> Result<DMatrix<Complex64>, MusicError> {
    let m = r.nrows();
    if d >= m {
        return Err(MusicError::TooManySources { sources: d, max: m.saturating_sub(1) });
    }
    let eig = SymmetricEigen::new(r.clone());
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].abs().total_cmp(&eig.eigenvalues[a].abs()));
    let cols: Vec<_> = order[d..].iter().map(|&i| eig.eigenvectors.column(i).into_owned()).collect();
    Ok(DMatrix::from_columns(&cols))
}

/// `‖E_nᴴ a(θ)‖` with virtual steering `a_m = exp(-jπ m sin θ)`.
pub fn noise_projection_norm(en: &DMatrix<Complex64>, theta_deg: f64) -> f64 {
    let s = theta_deg.to_radians().sin();
    let a = DVector::from_fn(en.nrows(), |m, _| Complex64::from_polar(1.0, -PI * m as f64 * s));
    (en.adjoint() * a).norm()
}

/// `1/‖E_nᴴ a‖²` over the grid.
///
/// With `L = G - 1` and `s_g = -1 + 2g/L`, `a_m(s_g) = (-1)^m e^{-j2πmg/L}`,
/// so each noise eigenvector costs one length-`L` FFT.
pub fn music_spectrum(en: &DMatrix<Complex64>, grid_size: usize) -> Result<Vec<f64>, MusicError> {
    if grid_size < 3 {
        return Err(MusicError::GridTooSmall(grid_size));
    }
    let l = grid_size - 1;
    let fft = FftPlanner::<f64>::new().plan_fft_forward(l);
    let mut denom = vec![0.0; l];
    let mut buf = vec![Complex64::default(); l];
    for col in en.column_iter() {
        buf.fill(Complex64::default());
        for (m, e) in col.iter().enumerate() {
            let w = if m % 2 == 0 { e.conj() } else { -e.conj() };
            buf[m % l] += w;
        }
        fft.process(&mut buf);
        for (acc, v) in denom.iter_mut().zip(&buf) {
            *acc += v.norm_sqr();
        }
    }
    let mut spec: Vec<f64> = denom.iter().map(|d| 1.0 / d.max(f64::MIN_POSITIVE)).collect();
    spec.push(spec[0]);
    Ok(spec)
}

/// Interior local maxima, strongest first, refined by a parabola through
/// the log-spectrum; returned as `sin θ`.
pub fn spectrum_peaks(spectrum: &[f64], max_peaks: usize) -> Vec<f64> {
    let g = spectrum.len();
    let mut idx: Vec<usize> = (1..g.saturating_sub(1))
        .filter(|&i| spectrum[i] > spectrum[i - 1] && spectrum[i] >= spectrum[i + 1])
        .collect();
    idx.sort_by(|&a, &b| spectrum[b].total_cmp(&spectrum[a]).then(a.cmp(&b)));
    idx.truncate(max_peaks);
    idx.iter()
        .map(|&i| {
            let (l, c, r) = (spectrum[i - 1].ln(), spectrum[i].ln(), spectrum[i + 1].ln());
            let den = l - 2.0 * c + r;
            let off = if den < 0.0 { (0.5 * (l - r) / den).clamp(-0.5, 0.5) } else { 0.0 };
            grid_sin(i, g) + off * 2.0 / (g - 1) as f64
        })
        .collect()
}

fn sin_to_deg(s: f64) -> f64 {
    s.clamp(-1.0, 1.0).asin().to_degrees()
}

/// MUSIC on a (smoothed) virtual covariance for `d` sources.
pub fn music_estimate(r: &DMatrix<Complex64>, d: usize, grid_size: usize) -> Result<DoaResult, MusicError> {
    let en = noise_subspace(r, d)?;
    let spectrum = music_spectrum(&en, grid_size)?;
    let peaks = spectrum_peaks(&spectrum, d);
    if peaks.len() < d {
        return Err(MusicError::Unresolved { found: peaks.len(), wanted: d });
    }
    let mut angles_deg: Vec<f64> = peaks.into_iter().map(sin_to_deg).collect();
    angles_deg.sort_by(f64::total_cmp);
    Ok(DoaResult { angles_deg, spectrum })
}

/// MUSIC estimates for a simulation trial with known truth.
///
/// Returns sorted estimates and whether all sources were resolved; when
/// fewer peaks than sources are found, each true angle takes its nearest
/// detected peak.
pub fn music_trial(r: &DMatrix<Complex64>, truth_deg: &[f64], grid_size: usize) -> Result<(Vec<f64>, bool), MusicError> {
    let d = truth_deg.len();
    let en = noise_subspace(r, d)?;
    let spectrum = music_spectrum(&en, grid_size)?;
    let peaks = spectrum_peaks(&spectrum, d);
    if peaks.len() < d {
        return Ok((nearest_peak_estimates(&spectrum, truth_deg), false));
    }
    let mut angles: Vec<f64> = peaks.into_iter().map(sin_to_deg).collect();
    angles.sort_by(f64::total_cmp);
    Ok((angles, true))
}

/// Estimates for a trial where fewer than `truth.len()` peaks were found:
/// each true angle takes its nearest detected peak.
pub fn nearest_peak_estimates(spectrum: &[f64], truth_deg: &[f64]) -> Vec<f64> {
    let found: Vec<f64> = spectrum_peaks(spectrum, truth_deg.len()).into_iter().map(sin_to_deg).collect();
    let fallback = {
        let g = (0..spectrum.len()).max_by(|&a, &b| spectrum[a].total_cmp(&spectrum[b])).unwrap_or(0);
        sin_to_deg(grid_sin(g, spectrum.len().max(2)))
    };
    let mut out: Vec<f64> = truth_deg
        .iter()
        .map(|t| {
            found
                .iter()
                .copied()
                .min_by(|a, b| (a - t).abs().total_cmp(&(b - t).abs()))
                .unwrap_or(fallback)
        })
        .collect();
    out.sort_by(f64::total_cmp);
    out
}

/// Root-mean-square error in degrees, pairing sorted estimates with sorted
/// truth.
pub fn rmse(trials: &[Vec<f64>], truth_deg: &[f64]) -> Result<f64, MusicError> {
    if trials.is_empty() {
        return Err(MusicError::NoTrials);
    }
    let mut truth = truth_deg.to_vec();
    truth.sort_by(f64::total_cmp);
    let mut sum = 0.0;
    for est in trials {
        if est.len() != truth.len() {
            return Err(MusicError::SizeMismatch { expected: truth.len(), got: est.len() });
        }
        let mut e = est.clone();
        e.sort_by(f64::total_cmp);
        sum += e.iter().zip(&truth).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
    }
    Ok((sum / (trials.len() * truth.len()) as f64).sqrt())
}
