//! Fourth-order hierarchical array (FOHA) construction.
//!
//! A FOHA is the union of three subarrays: a generator `A1` (nested or
//! concatenated nested array) followed by two uniform sparse subarrays
//! `A2 = {δ1 + η1·i}` and `A3 = {δ2 + η2·i}` whose offsets and spacings are
//! chosen so that the fourth-order difference co-array is hole-free on
//! `[-E, E]`.

use std::cmp::Reverse;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coarray::{self, CoarrayError, Lag, SensorArray};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DesignError {
    #[error("segment sizes must be at least 1 (got M1 = {m1}, M2 = {m2})")]
    ZeroSegment { m1: usize, m2: usize },
    #[error("subarray sensor counts must be at least 1 (got N2 = {n2}, N3 = {n3})")]
    ZeroSubarray { n2: usize, n3: usize },
    #[error("generator violates the hole-free conditions ({0:?})")]
    GeneratorViolatesConditions(HoleFreeConditions),
    #[error("infeasible generator size N1 = {n1} for N = {n} sensors")]
    InfeasibleSplit { n: usize, n1: usize },
    #[error("{kind} design needs at least {min} sensors, got {n}")]
    TooFewSensors {
        kind: GeneratorKind,
        n: usize,
        min: usize,
    },
    #[error("subarrays overlap or are out of order")]
    Overlap,
    #[error("operation not defined for {0} designs")]
    UnsupportedKind(GeneratorKind),
    #[error(transparent)]
    Coarray(#[from] CoarrayError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeneratorKind {
    Na,
    Cna,
    Custom,
}

impl GeneratorKind {
    /// Smallest total sensor count for which the optimizer can place a
    /// generator plus one sensor in each sparse subarray.
    pub fn min_sensors(self) -> Option<usize> {
        match self {
            GeneratorKind::Na => Some(4),
            GeneratorKind::Cna => Some(5),
            GeneratorKind::Custom => None,
        }
    }

    fn min_generator(self) -> usize {
        match self {
            GeneratorKind::Na => 2,
            _ => 3,
        }
    }
}

impl fmt::Display for GeneratorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GeneratorKind::Na => "na",
            GeneratorKind::Cna => "cna",
            GeneratorKind::Custom => "custom",
        })
    }
}

impl std::str::FromStr for GeneratorKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "na" => Ok(GeneratorKind::Na),
            "cna" => Ok(GeneratorKind::Cna),
            "custom" => Ok(GeneratorKind::Custom),
            other => Err(format!("unknown generator kind '{other}' (expected na or cna)")),
        }
    }
}

/// Full parameterization of a FOHA.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FohaParams {
    pub kind: GeneratorKind,
    pub n1: usize,
    pub n2: usize,
    pub n3: usize,
    /// Generator segment sizes; `None` for custom generators.
    pub m1: Option<usize>,
    pub m2: Option<usize>,
    pub delta1: i64,
    pub eta1: i64,
    pub delta2: i64,
    pub eta2: i64,
    pub lambda1: i64,
    pub lambda2: i64,
    pub lambda3: i64,
    pub lambda4: i64,
    /// One-sided consecutive extent `E`.
    pub extent: i64,
}

impl FohaParams {
    pub fn n(&self) -> usize {
        self.n1 + self.n2 + self.n3
    }

    pub fn dofs(&self) -> u64 {
        2 * self.extent as u64 + 1
    }

    /// Largest sensor position.
    pub fn aperture(&self) -> i64 {
        self.delta2 + self.eta2 * (self.n3 as i64 - 1)
    }
}

/// How hole-freeness of `[-E, E]` was established.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Certification {
    /// Closed-form NA/CNA construction, hole-free by design.
    ByConstruction,
    /// Brute-force co-array enumeration found no hole.
    Verified,
    /// Brute-force enumeration found these holes in `[-E, E]`.
    HolesFound(Vec<Lag>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FohaDesign {
    pub params: FohaParams,
    pub a1: SensorArray,
    pub a2: SensorArray,
    pub a3: SensorArray,
    pub positions: SensorArray,
    pub certification: Certification,
}

impl FohaDesign {
    fn assemble(
        params: FohaParams,
        a1: SensorArray,
        certification: Certification,
    ) -> Result<Self, DesignError> {
        let a2 = arithmetic(params.delta1, params.eta1, params.n2)?;
        let a3 = arithmetic(params.delta2, params.eta2, params.n3)?;
        let ordered = a1.max() < a2.min() && a2.max() < a3.min();
        if !ordered {
            return Err(DesignError::Overlap);
        }
        let positions = SensorArray::disjoint_union(&[&a1, &a2, &a3])
            .map_err(|_| DesignError::Overlap)?;
        Ok(Self {
            params,
            a1,
            a2,
            a3,
            positions,
            certification,
        })
    }

    pub fn n(&self) -> usize {
        self.positions.len()
    }

    pub fn extent(&self) -> u64 {
        self.params.extent as u64
    }

    pub fn dofs(&self) -> u64 {
        self.params.dofs()
    }

    pub fn is_certified(&self) -> bool {
        !matches!(self.certification, Certification::HolesFound(_))
    }

    /// Brute-force holes of the fourth-order co-array inside `[-E, E]`.
    pub fn verify_hole_free(&self) -> Vec<Lag> {
        let f = coarray::fodca(&self.positions).expect("designs are non-empty");
        coarray::holes(&f, self.extent())
    }

    /// Sensor positions of subarray `j` (1, 2 or 3).
    pub fn subarray(&self, j: usize) -> &SensorArray {
        match j {
            1 => &self.a1,
            2 => &self.a2,
            3 => &self.a3,
            _ => panic!("subarray index {j} out of range"),
        }
    }

    pub fn document(&self) -> DesignDocument {
        let p = &self.params;
        DesignDocument {
            kind: p.kind,
            n: self.n(),
            n1: p.n1,
            n2: p.n2,
            n3: p.n3,
            m1: p.m1,
            m2: p.m2,
            delta1: p.delta1,
            eta1: p.eta1,
            delta2: p.delta2,
            eta2: p.eta2,
            extent: p.extent,
            dofs: p.dofs(),
            positions: self.positions.positions().to_vec(),
        }
    }
}

/// Canonical JSON form of a design.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DesignDocument {
    pub kind: GeneratorKind,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "N1")]
    pub n1: usize,
    #[serde(rename = "N2")]
    pub n2: usize,
    #[serde(rename = "N3")]
    pub n3: usize,
    #[serde(rename = "M1")]
    pub m1: Option<usize>,
    #[serde(rename = "M2")]
    pub m2: Option<usize>,
    pub delta1: i64,
    pub eta1: i64,
    pub delta2: i64,
    pub eta2: i64,
    #[serde(rename = "E")]
    pub extent: i64,
    pub dofs: u64,
    pub positions: Vec<i64>,
}

fn arithmetic(first: i64, step: i64, count: usize) -> Result<SensorArray, CoarrayError> {
    SensorArray::new((0..count as i64).map(|i| first + step * i))
}

fn check_segments(m1: usize, m2: usize) -> Result<(), DesignError> {
    if m1 == 0 || m2 == 0 {
        Err(DesignError::ZeroSegment { m1, m2 })
    } else {
        Ok(())
    }
}

/// Nested array `{0 : M1-1} ∪ {2M1-1 : M1 : M1(M2+1)-1}`.
pub fn nested_array(m1: usize, m2: usize) -> Result<SensorArray, DesignError> {
    check_segments(m1, m2)?;
    let (m1, m2) = (m1 as i64, m2 as i64);
    let dense = 0..m1;
    let sparse = (0..m2).map(|i| 2 * m1 - 1 + m1 * i);
    Ok(SensorArray::new(dense.chain(sparse))?)
}

/// Concatenated nested array: `M1` dense sensors, `M2` sensors at spacing
/// `M1 + 1`, then another `M1` dense sensors.
pub fn cna_array(m1: usize, m2: usize) -> Result<SensorArray, DesignError> {
    check_segments(m1, m2)?;
    let (m1, m2) = (m1 as i64, m2 as i64);
    let mid_last = m1 + (m1 + 1) * (m2 - 1);
    let first = 0..m1;
    let middle = (0..m2).map(|i| m1 + (m1 + 1) * i);
    let last = (1..=m1).map(|i| mid_last + i);
    Ok(SensorArray::new(first.chain(middle).chain(last))?)
}

/// `(λ1, λ2)`: the consecutive extents `{0..λ1} ⊆ Σ2(A1)` and
/// `{-λ2..λ2} ⊆ Δ2(A1)`.
pub fn lambda_extents(a1: &SensorArray) -> Result<(i64, i64), DesignError> {
    let s = coarray::sum2(a1)?;
    let d = coarray::diff2(a1)?;
    let min2 = 2 * a1.min().unwrap_or(0);
    let mut l1 = -1;
    // Only an array starting at 0 can cover 0 in its sum co-array.
    if min2 == 0 {
        l1 = 0;
        while s.contains(l1 + 1) {
            l1 += 1;
        }
    }
    let l2 = coarray::central_consecutive(&d)? as i64;
    Ok((l1.max(0), l2))
}

/// The three sufficient hole-free conditions on a generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HoleFreeConditions {
    /// `λ1 ≥ max(A1)`
    pub cond_i: bool,
    /// `λ2 ≥ max(A1)`
    pub cond_ii: bool,
    /// `λ2 ≥ λ1 / 2`
    pub cond_iii: bool,
}

impl HoleFreeConditions {
    pub fn all(&self) -> bool {
        self.cond_i && self.cond_ii && self.cond_iii
    }
}

pub fn check_holefree_conditions(a1: &SensorArray) -> Result<HoleFreeConditions, DesignError> {
    let (l1, l2) = lambda_extents(a1)?;
    let max = a1.max().unwrap_or(0);
    Ok(HoleFreeConditions {
        cond_i: l1 >= max,
        cond_ii: l2 >= max,
        cond_iii: 2 * l2 >= l1,
    })
}

fn check_counts(n2: usize, n3: usize) -> Result<(), DesignError> {
    if n2 == 0 || n3 == 0 {
        Err(DesignError::ZeroSubarray { n2, n3 })
    } else {
        Ok(())
    }
}

fn na_params(m1: usize, m2: usize, n2: usize, n3: usize) -> FohaParams {
    let (m1i, m2i, n2i, n3i) = (m1 as i64, m2 as i64, n2 as i64, n3 as i64);
    let mm = m1i * m2i;
    let delta1 = 2 * mm + 3 * m1i - 2;
    let eta1 = mm + 2 * m1i - 1;
    let delta2 = (3 * n2i + 4) * mm + (6 * n2i + 4) * m1i - (3 * n2i + 3);
    let eta2 = (2 * n2i + 3) * mm + (4 * n2i + 3) * m1i - (2 * n2i + 2);
    let lambda1 = mm + 2 * m1i - 2;
    let lambda2 = mm + m1i - 1;
    let lambda3 = delta1 + eta1 * (n2i - 1);
    FohaParams {
        kind: GeneratorKind::Na,
        n1: m1 + m2,
        n2,
        n3,
        m1: Some(m1),
        m2: Some(m2),
        delta1,
        eta1,
        delta2,
        eta2,
        lambda1,
        lambda2,
        lambda3,
        lambda4: lambda3 + lambda2,
        extent: delta2 + eta2 * (n3i - 1) + lambda3,
    }
}

fn cna_params(m1: usize, m2: usize, n2: usize, n3: usize) -> FohaParams {
    let (m1i, m2i, n2i, n3i) = (m1 as i64, m2 as i64, n2 as i64, n3 as i64);
    let q = (m1i + 1) * (m2i - 1);
    let delta1 = 6 * m1i + 3 * q + 1;
    let eta1 = 4 * m1i + 2 * q + 1;
    let delta2 = (12 * n2i + 8) * m1i + (6 * n2i + 4) * q + 3 * n2i + 1;
    let eta2 = (8 * n2i + 6) * m1i + (4 * n2i + 3) * q + 2 * n2i + 1;
    let lambda1 = 4 * m1i + 2 * q;
    let lambda2 = 2 * m1i + q;
    let lambda3 = delta1 + eta1 * (n2i - 1);
    FohaParams {
        kind: GeneratorKind::Cna,
        n1: 2 * m1 + m2,
        n2,
        n3,
        m1: Some(m1),
        m2: Some(m2),
        delta1,
        eta1,
        delta2,
        eta2,
        lambda1,
        lambda2,
        lambda3,
        lambda4: lambda3 + lambda2,
        extent: delta2 + eta2 * (n3i - 1) + lambda3,
    }
}

fn kind_params(kind: GeneratorKind, m1: usize, m2: usize, n2: usize, n3: usize) -> FohaParams {
    match kind {
        GeneratorKind::Na => na_params(m1, m2, n2, n3),
        GeneratorKind::Cna => cna_params(m1, m2, n2, n3),
        GeneratorKind::Custom => unreachable!("custom generators have no closed form"),
    }
}

/// FOHA with a nested-array generator.
pub fn build_foha_na(m1: usize, m2: usize, n2: usize, n3: usize) -> Result<FohaDesign, DesignError> {
    check_counts(n2, n3)?;
    let a1 = nested_array(m1, m2)?;
    FohaDesign::assemble(na_params(m1, m2, n2, n3), a1, Certification::ByConstruction)
}

/// FOHA with a concatenated-nested-array generator.
pub fn build_foha_cna(m1: usize, m2: usize, n2: usize, n3: usize) -> Result<FohaDesign, DesignError> {
    check_counts(n2, n3)?;
    let a1 = cna_array(m1, m2)?;
    FohaDesign::assemble(cna_params(m1, m2, n2, n3), a1, Certification::ByConstruction)
}

fn build_kind(
    kind: GeneratorKind,
    m1: usize,
    m2: usize,
    n2: usize,
    n3: usize,
) -> Result<FohaDesign, DesignError> {
    match kind {
        GeneratorKind::Na => build_foha_na(m1, m2, n2, n3),
        GeneratorKind::Cna => build_foha_cna(m1, m2, n2, n3),
        GeneratorKind::Custom => Err(DesignError::UnsupportedKind(kind)),
    }
}

/// FOHA around an arbitrary generator that satisfies the hole-free
/// conditions. `λ3 = max(A2)` and `λ4 = λ3 + λ2`; the half-integer term in
/// `δ2` is rounded up. The result is certified by brute force.
pub fn build_foha_general(a1: &SensorArray, n2: usize, n3: usize) -> Result<FohaDesign, DesignError> {
    check_counts(n2, n3)?;
    let conds = check_holefree_conditions(a1)?;
    if !conds.all() {
        return Err(DesignError::GeneratorViolatesConditions(conds));
    }
    let (lambda1, lambda2) = lambda_extents(a1)?;
    let max_a1 = a1.max().unwrap_or(0);
    let (n2i, n3i) = (n2 as i64, n3 as i64);

    let delta1 = max_a1 + lambda1 + 1;
    let eta1 = lambda1 + 1;
    let lambda3 = delta1 + eta1 * (n2i - 1);
    let lambda4 = lambda3 + lambda2;
    // ceil((1/2 + N2) λ1)
    let half_term = ((2 * n2i + 1) * lambda1 + 1) / 2;
    let delta2 = half_term + lambda3 + lambda4 + n2i + 1;
    let eta2 = lambda3 + lambda4 + 1;
    let extent = delta2 + eta2 * (n3i - 1) + lambda3;

    let params = FohaParams {
        kind: GeneratorKind::Custom,
        n1: a1.len(),
        n2,
        n3,
        m1: None,
        m2: None,
        delta1,
        eta1,
        delta2,
        eta2,
        lambda1,
        lambda2,
        lambda3,
        lambda4,
        extent,
    };
    let mut design = FohaDesign::assemble(params, a1.clone(), Certification::Verified)?;
    let holes = design.verify_hole_free();
    if !holes.is_empty() {
        design.certification = Certification::HolesFound(holes);
    }
    Ok(design)
}

/// Sensor split for a fixed generator size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Split {
    pub n1: usize,
    pub n2: usize,
    pub n3: usize,
    pub m1: usize,
    pub m2: usize,
    /// Unrounded stationary point for `N3`.
    pub n3_formula: f64,
    /// Unrounded printed expression for `N2`; it does not in general satisfy
    /// `N2 + N3 = N - N1` and is kept for reference only.
    pub n2_formula: f64,
    pub dofs: u64,
    pub aperture: i64,
}

fn na_n3_formula(n: f64, n1: f64) -> (f64, f64) {
    let den = 0.5 * n1 * n1 + 4.0 * n1 - 4.0;
    let n3 = (-0.25 * n1.powi(3) + (n / 4.0 - 15.0 / 8.0) * n1 * n1 + (2.0 * n + 1.5) * n1
        - 2.0 * n)
        / den;
    let n2 = (-0.25 * n1.powi(3) + (n / 4.0 - 17.0 / 8.0) * n1 * n1 + (2.0 * n + 2.5) * n1
        + 2.0 * n)
        / den;
    (n3, n2)
}

fn cna_n3_formula(n: f64, n1: f64) -> (f64, f64) {
    let den = n1 * n1 + 6.0 * n1 - 3.0;
    let n3 = (-0.5 * n1.powi(3) + (n / 2.0 - 25.0 / 8.0) * n1 * n1 + (3.0 * n + 0.75) * n1
        - 1.5 * n
        - 0.125)
        / den;
    let n2 = (-0.5 * n1.powi(3) + (n / 2.0 - 23.0 / 8.0) * n1 * n1 + (3.0 * n + 2.25) * n1
        - 1.5 * n
        + 0.125)
        / den;
    (n3, n2)
}

/// Generator segment sizes suggested by the closed forms.
fn preferred_segments(kind: GeneratorKind, n1: usize) -> Option<(usize, usize)> {
    match kind {
        GeneratorKind::Na => Some((n1.div_ceil(2), n1 / 2)).filter(|&(a, b)| a >= 1 && b >= 1),
        GeneratorKind::Cna => {
            let m1 = (((n1 as f64) - 1.0) / 4.0).round().max(1.0) as usize;
            // M2 is tied to M1 by the sensor count 2·M1 + M2 = N1.
            (n1 > 2 * m1).then(|| (m1, n1 - 2 * m1))
        }
        GeneratorKind::Custom => None,
    }
}

/// All `(M1, M2)` with the right generator size, closed-form choice first.
fn segment_candidates(kind: GeneratorKind, n1: usize) -> Vec<(usize, usize)> {
    let mut out: Vec<(usize, usize)> = preferred_segments(kind, n1).into_iter().collect();
    for m1 in 1..n1 {
        let m2 = match kind {
            GeneratorKind::Na => n1 - m1,
            _ if n1 > 2 * m1 => n1 - 2 * m1,
            _ => continue,
        };
        if m2 >= 1 && !out.contains(&(m1, m2)) {
            out.push((m1, m2));
        }
    }
    out
}

fn split(kind: GeneratorKind, n: usize, n1: usize) -> Result<Split, DesignError> {
    if n1 < kind.min_generator() || n1 + 2 > n {
        return Err(DesignError::InfeasibleSplit { n, n1 });
    }
    let (n3_formula, n2_formula) = match kind {
        GeneratorKind::Na => na_n3_formula(n as f64, n1 as f64),
        GeneratorKind::Cna => cna_n3_formula(n as f64, n1 as f64),
        GeneratorKind::Custom => return Err(DesignError::UnsupportedKind(kind)),
    };
    let room = (n - n1 - 1) as i64;
    let centre = n3_formula.round() as i64;
    let mut n3s: Vec<usize> = (centre - 1..=centre + 1)
        .map(|v| v.clamp(1, room) as usize)
        .collect();
    n3s.sort_unstable();
    n3s.dedup();

    let mut best: Option<(Reverse<u64>, i64, usize, usize, Split)> = None;
    for (rank, &(m1, m2)) in segment_candidates(kind, n1).iter().enumerate() {
        for &n3 in &n3s {
            let n2 = n - n1 - n3;
            let p = kind_params(kind, m1, m2, n2, n3);
            let s = Split {
                n1,
                n2,
                n3,
                m1,
                m2,
                n3_formula,
                n2_formula,
                dofs: p.dofs(),
                aperture: p.aperture(),
            };
            let key = (Reverse(s.dofs), s.aperture, rank, n3, s);
            if best.as_ref().is_none_or(|b| (key.0, key.1, key.2, key.3) < (b.0, b.1, b.2, b.3)) {
                best = Some(key);
            }
        }
    }
    best.map(|b| b.4).ok_or(DesignError::InfeasibleSplit { n, n1 })
}

/// Best `(N2, N3)` split of the FOHA(NA) for a given generator size.
///
/// `N3` is taken from its stationary-point formula, `N2 = N - N1 - N3`, and
/// the neighbours `N3 ± 1` are evaluated as well; generator segment sizes
/// around the closed-form choice are searched in the same pass.
pub fn split_na(n: usize, n1: usize) -> Result<Split, DesignError> {
    split(GeneratorKind::Na, n, n1)
}

/// Best `(N2, N3)` split of the FOHA(CNA) for a given generator size.
pub fn split_cna(n: usize, n1: usize) -> Result<Split, DesignError> {
    split(GeneratorKind::Cna, n, n1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SearchMode {
    /// Loop over `N1` with the closed-form split and neighbourhood repair.
    #[default]
    Algorithm,
    /// Enumerate every `(N1, N2, N3, M1, M2)`.
    Exhaustive,
}

/// Ordering key: more DOFs, then smaller aperture, then smaller `N1`.
type RankKey = (Reverse<u64>, i64, usize, usize, usize);

fn rank_key(p: &FohaParams) -> RankKey {
    (
        Reverse(p.dofs()),
        p.aperture(),
        p.n1,
        p.m1.unwrap_or(0),
        p.n3,
    )
}

/// Highest-DOF design of the given kind with `n` sensors.
pub fn optimize_foha(n: usize, kind: GeneratorKind, mode: SearchMode) -> Result<FohaDesign, DesignError> {
    let min = kind.min_sensors().ok_or(DesignError::UnsupportedKind(kind))?;
    if n < min {
        return Err(DesignError::TooFewSensors { kind, n, min });
    }
    let n1_range: Vec<usize> = (kind.min_generator()..=n - 2).collect();

    let candidates: Vec<FohaParams> = match mode {
        SearchMode::Algorithm => n1_range
            .par_iter()
            .filter_map(|&n1| split(kind, n, n1).ok())
            .map(|s| kind_params(kind, s.m1, s.m2, s.n2, s.n3))
            .collect(),
        SearchMode::Exhaustive => n1_range
            .par_iter()
            .flat_map_iter(|&n1| {
                segment_candidates(kind, n1).into_iter().flat_map(move |(m1, m2)| {
                    (1..n - n1).map(move |n2| kind_params(kind, m1, m2, n2, n - n1 - n2))
                })
            })
            .collect(),
    };

    let best = candidates
        .into_iter()
        .min_by_key(rank_key)
        .ok_or(DesignError::TooFewSensors { kind, n, min })?;
    build_kind(
        kind,
        best.m1.expect("closed-form kind"),
        best.m2.expect("closed-form kind"),
        best.n2,
        best.n3,
    )
}
