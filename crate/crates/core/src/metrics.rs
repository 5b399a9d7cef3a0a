//! Fourth-order redundancy and mutual-coupling leakage.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coarray::SensorArray;
use crate::designs::FohaDesign;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("coupling model needs c_0 = 1")]
    LeadingCoefficient,
    #[error("coupling magnitudes must strictly decrease (violated at c_{index})")]
    NotDecreasing { index: usize },
    #[error("coupling limit B must be at least 1")]
    ZeroLimit,
    #[error("matrix must be square (got {rows}×{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("leakage undefined for a zero matrix")]
    ZeroMatrix,
    #[error("sensor count must be at least 1")]
    NoSensors,
    #[error("design is not certified hole-free")]
    Uncertified,
    #[error("redundancy below proven lower bound (R4 = {r4}, L4 = {l4})")]
    BelowLowerBound { r4: f64, l4: f64 },
}

/// Banded coupling coefficients `c_0 = 1, c_1, …, c_B`.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingModel {
    c: Vec<Complex64>,
}

impl CouplingModel {
    pub fn new(c: Vec<Complex64>) -> Result<Self, MetricsError> {
        if c.first() != Some(&Complex64::new(1.0, 0.0)) {
            return Err(MetricsError::LeadingCoefficient);
        }
        for l in 1..c.len() {
            if c[l].norm() >= c[l - 1].norm() {
                return Err(MetricsError::NotDecreasing { index: l });
            }
        }
        Ok(Self { c })
    }

    /// No coupling: `C = I`.
    pub fn identity() -> Self {
        Self { c: vec![Complex64::new(1.0, 0.0)] }
    }

    pub fn limit(&self) -> usize {
        self.c.len() - 1
    }

    pub fn coefficients(&self) -> &[Complex64] {
        &self.c
    }

    /// Coefficient for sensor separation `d`; zero beyond `B`.
    pub fn coefficient(&self, d: u64) -> Complex64 {
        self.c.get(d as usize).copied().unwrap_or_default()
    }

    /// Same coefficients cut at a smaller limit.
    pub fn truncated(&self, b: usize) -> Self {
        Self { c: self.c[..=b.min(self.limit())].to_vec() }
    }
}

/// `c_1 = 0.3 e^{jπ/3}`, `c_l = c_1 e^{-j(l-1)π/8} / l`.
pub fn reference_coupling_model(b: usize) -> Result<CouplingModel, MetricsError> {
    if b == 0 {
        return Err(MetricsError::ZeroLimit);
    }
    let c1 = Complex64::from_polar(0.3, PI / 3.0);
    let mut c = vec![Complex64::new(1.0, 0.0), c1];
    for l in 2..=b {
        c.push(c1 * Complex64::from_polar(1.0, -((l - 1) as f64) * PI / 8.0) / l as f64);
    }
    CouplingModel::new(c)
}

/// Complex symmetric banded Toeplitz coupling matrix.
pub fn coupling_matrix(p: &SensorArray, model: &CouplingModel) -> DMatrix<Complex64> {
    let pos = p.positions();
    DMatrix::from_fn(pos.len(), pos.len(), |i, j| model.coefficient(pos[i].abs_diff(pos[j])))
}

/// Off-diagonal Frobenius energy over total Frobenius energy.
pub fn coupling_leakage(c: &DMatrix<Complex64>) -> Result<f64, MetricsError> {
    if !c.is_square() {
        return Err(MetricsError::NotSquare { rows: c.nrows(), cols: c.ncols() });
    }
    let total = c.norm();
    if total == 0.0 {
        return Err(MetricsError::ZeroMatrix);
    }
    Ok(off_diagonal_norm(c) / total)
}

fn off_diagonal_norm(c: &DMatrix<Complex64>) -> f64 {
    let mut s = 0.0;
    for j in 0..c.ncols() {
        for i in 0..c.nrows() {
            if i != j {
                s += c[(i, j)].norm_sqr();
            }
        }
    }
    s.sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeakageDecomposition {
    /// Leakage of the full coupling matrix.
    pub l_direct: f64,
    /// Block-diagonal closed form `off·L1 / sqrt(off² + L1²(N2 + N3))`.
    pub l_prop: f64,
    /// The same expression with `N2² + N3²` in place of `N2 + N3`.
    pub l_prop_printed: f64,
    /// Leakage of the generator's own coupling matrix.
    pub l1: f64,
    /// Whether the coupling matrix is block diagonal with identity blocks
    /// for `A2` and `A3`, so that `l_prop` applies.
    pub valid: bool,
}

/// Generator-based leakage decomposition of a FOHA.
pub fn leakage_decomposition(design: &FohaDesign, model: &CouplingModel) -> LeakageDecomposition {
    let c1 = coupling_matrix(&design.a1, model);
    let off = off_diagonal_norm(&c1);
    let l1 = if off == 0.0 { 0.0 } else { off / c1.norm() };
    let l_direct = coupling_leakage(&coupling_matrix(&design.positions, model))
        .expect("coupling matrices have a unit diagonal");

    let n2 = design.params.n2 as f64;
    let n3 = design.params.n3 as f64;
    let closed = |blocks: f64| {
        if off == 0.0 {
            0.0
        } else {
            off * l1 / (off * off + l1 * l1 * blocks).sqrt()
        }
    };

    LeakageDecomposition {
        l_direct,
        l_prop: closed(n2 + n3),
        l_prop_printed: closed(n2 * n2 + n3 * n3),
        l1,
        valid: block_diagonal(design, model.limit() as i64),
    }
}

fn block_diagonal(design: &FohaDesign, b: i64) -> bool {
    let gap12 = design.a2.min().unwrap_or(0) - design.a1.max().unwrap_or(0);
    let gap23 = design.a3.min().unwrap_or(0) - design.a2.max().unwrap_or(0);
    b < gap12 && b < gap23 && b < design.params.eta1 && b < design.params.eta2
}

/// One-sided upper bound on the number of distinct fourth-order lags of any
/// `N`-sensor array: `(N⁴ − 2N³ + 7N² − 6N) / 8`.
pub fn max_fodca_size(n: u64) -> Result<u64, MetricsError> {
    if n == 0 {
        return Err(MetricsError::NoSensors);
    }
    let num = n.pow(4) + 7 * n * n - 2 * n.pow(3) - 6 * n;
    assert_eq!(num % 8, 0, "numerator divisible by 8 for every integer N");
    Ok(num / 8)
}

/// Lower bound on the fourth-order redundancy of an `N`-sensor array.
pub fn redundancy_lower_bound(n: u64) -> f64 {
    let n = n as f64;
    (1.0 + 2.0 / (3.0 * PI)) * (n - 1.0) * (n * n - n + 6.0) / (n * (n + 1.0) * (n + 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RedundancyReport {
    pub k4_tilde: u64,
    #[serde(rename = "U4")]
    pub u4: u64,
    #[serde(rename = "R4")]
    pub r4: f64,
    #[serde(rename = "L4")]
    pub l4: f64,
}

/// Redundancy for `n` sensors with one-sided consecutive extent `u4`.
pub fn redundancy_from_extent(n: u64, u4: u64) -> Result<RedundancyReport, MetricsError> {
    let k4_tilde = max_fodca_size(n)?;
    let r4 = k4_tilde as f64 / u4 as f64;
    let l4 = redundancy_lower_bound(n);
    if r4 <= l4 {
        return Err(MetricsError::BelowLowerBound { r4, l4 });
    }
    Ok(RedundancyReport { k4_tilde, u4, r4, l4 })
}

pub fn redundancy(design: &FohaDesign) -> Result<RedundancyReport, MetricsError> {
    if !design.is_certified() {
        return Err(MetricsError::Uncertified);
    }
    redundancy_from_extent(design.n() as u64, design.extent())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::designs::{build_foha_cna, build_foha_na};
    use approx::assert_abs_diff_eq;

    fn arr(p: &[i64]) -> SensorArray {
        SensorArray::new(p.iter().copied()).unwrap()
    }

    #[test]
    fn reference_model_values() {
        let m = reference_coupling_model(1).unwrap();
        assert_eq!(m.limit(), 1);
        assert_abs_diff_eq!(m.coefficient(1).norm(), 0.3, epsilon = 1e-15);
        assert_abs_diff_eq!(m.coefficient(1).arg(), PI / 3.0, epsilon = 1e-15);
        let m = reference_coupling_model(100).unwrap();
        assert_abs_diff_eq!(m.coefficient(2).norm(), 0.15, epsilon = 1e-15);
        assert_eq!(m.coefficient(101), Complex64::default());
        assert!(reference_coupling_model(0).is_err());
    }

    #[test]
    fn model_validation() {
        let one = Complex64::new(1.0, 0.0);
        assert!(CouplingModel::new(vec![Complex64::new(0.5, 0.0)]).is_err());
        assert!(CouplingModel::new(vec![one, Complex64::new(0.2, 0.0), Complex64::new(0.0, 0.2)]).is_err());
        assert!(CouplingModel::new(vec![one, Complex64::new(0.2, 0.0)]).is_ok());
    }

    #[test]
    fn coupling_matrix_examples() {
        let m = reference_coupling_model(100).unwrap();
        let c = coupling_matrix(&arr(&[0]), &m);
        assert_eq!(c, DMatrix::from_element(1, 1, Complex64::new(1.0, 0.0)));
        let c = coupling_matrix(&arr(&[0, 1]), &m);
        assert_eq!(c[(0, 1)], m.coefficient(1));
        assert_eq!(c[(1, 0)], m.coefficient(1));
        let c = coupling_matrix(&arr(&[0, 200]), &m);
        assert_eq!(c, DMatrix::identity(2, 2));
    }

    #[test]
    fn coupling_matrix_is_symmetric_not_hermitian() {
        let m = reference_coupling_model(100).unwrap();
        let c = coupling_matrix(&arr(&[0, 1, 3, 7]), &m);
        assert_eq!(c, c.transpose());
        assert_ne!(c, c.adjoint());
    }

    #[test]
    fn leakage_examples() {
        assert_eq!(coupling_leakage(&DMatrix::identity(3, 3)).unwrap(), 0.0);
        let m = reference_coupling_model(100).unwrap();
        let l = coupling_leakage(&coupling_matrix(&arr(&[0, 1]), &m)).unwrap();
        assert_abs_diff_eq!(l, 0.3 * 2f64.sqrt() / 2.18f64.sqrt(), epsilon = 1e-14);
        assert_abs_diff_eq!(l, 0.28735, epsilon = 1e-5);
        assert_eq!(coupling_leakage(&DMatrix::zeros(2, 2)), Err(MetricsError::ZeroMatrix));
        assert!(matches!(
            coupling_leakage(&DMatrix::zeros(2, 3)),
            Err(MetricsError::NotSquare { .. })
        ));
    }

    #[test]
    fn decomposition_without_coupling() {
        let d = build_foha_na(3, 2, 2, 2).unwrap();
        let r = leakage_decomposition(&d, &CouplingModel::identity());
        assert_eq!((r.l1, r.l_prop, r.l_direct), (0.0, 0.0, 0.0));
    }

    #[test]
    fn decomposition_in_validity_region() {
        let d = build_foha_na(3, 2, 2, 2).unwrap();
        let m = reference_coupling_model(10).unwrap();
        let r = leakage_decomposition(&d, &m);
        assert!(r.valid);
        assert_abs_diff_eq!(r.l_direct, r.l_prop, epsilon = 1e-12);
        assert!(r.l_prop < r.l1);
        // N2 = N3 = 2 separates the two expressions.
        assert!((r.l_prop_printed - r.l_direct).abs() > 1e-3);
    }

    #[test]
    fn decomposition_outside_validity_region() {
        let d = build_foha_na(3, 2, 2, 2).unwrap();
        let r = leakage_decomposition(&d, &reference_coupling_model(100).unwrap());
        assert!(!r.valid);
        assert!(r.l_direct > 0.0 && r.l_direct < 1.0);
    }

    #[test]
    fn max_fodca_size_examples() {
        assert_eq!(max_fodca_size(1).unwrap(), 0);
        assert_eq!(max_fodca_size(2).unwrap(), 2);
        assert_eq!(max_fodca_size(9).unwrap(), 702);
        assert!(max_fodca_size(0).is_err());
    }

    #[test]
    fn redundancy_examples() {
        let cna = redundancy(&build_foha_cna(1, 3, 2, 2).unwrap()).unwrap();
        assert_abs_diff_eq!(cna.r4, 702.0 / 206.0, epsilon = 1e-12);
        assert_abs_diff_eq!(cna.l4, 0.8405, epsilon = 1e-4);
        let na = redundancy(&build_foha_na(3, 2, 2, 2).unwrap()).unwrap();
        assert_abs_diff_eq!(na.r4, 702.0 / 198.0, epsilon = 1e-12);
        assert_abs_diff_eq!(redundancy_lower_bound(2), 0.5388, epsilon = 1e-4);
    }

    #[test]
    fn redundancy_rejects_violation() {
        assert!(matches!(
            redundancy_from_extent(9, 10_000),
            Err(MetricsError::BelowLowerBound { .. })
        ));
    }
}
