//! Integer-set algebra for physical arrays and their co-arrays.
//!
//! Positions and lags are exact `i64` values in units of the half-wavelength
//! spacing. Every operation here is a pure function of its inputs.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// An integer co-array lag.
pub type Lag = i64;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CoarrayError {
    #[error("empty geometry")]
    EmptyGeometry,
    #[error("negative sensor position {0}")]
    NegativePosition(i64),
    #[error("duplicate sensor position {0}")]
    DuplicatePosition(i64),
    #[error("lag set lacks origin")]
    MissingOrigin,
    #[error("cross sum takes 2 or 3 operands, got {0}")]
    OperandCount(usize),
    #[error("cross sum got {operands} operands but {signs} signs")]
    SignCount { operands: usize, signs: usize },
}

/// Sorted set of distinct, non-negative sensor positions.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<i64>", into = "Vec<i64>")]
pub struct SensorArray {
    positions: Vec<i64>,
}

impl SensorArray {
    /// Builds an array from positions in any order. Duplicates and negative
    /// positions are rejected.
    pub fn new(positions: impl IntoIterator<Item = i64>) -> Result<Self, CoarrayError> {
        let mut positions: Vec<i64> = positions.into_iter().collect();
        positions.sort_unstable();
        if let Some(&p) = positions.iter().find(|&&p| p < 0) {
            return Err(CoarrayError::NegativePosition(p));
        }
        if let Some(w) = positions.windows(2).find(|w| w[0] == w[1]) {
            return Err(CoarrayError::DuplicatePosition(w[0]));
        }
        Ok(Self { positions })
    }

    pub fn positions(&self) -> &[i64] {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn min(&self) -> Option<i64> {
        self.positions.first().copied()
    }

    pub fn max(&self) -> Option<i64> {
        self.positions.last().copied()
    }

    /// Largest position, i.e. the physical aperture when the array starts at 0.
    pub fn aperture(&self) -> i64 {
        self.max().unwrap_or(0) - self.min().unwrap_or(0)
    }

    pub fn contains(&self, p: i64) -> bool {
        self.positions.binary_search(&p).is_ok()
    }

    /// Union of several arrays; fails if any position is shared.
    pub fn disjoint_union(parts: &[&SensorArray]) -> Result<Self, CoarrayError> {
        Self::new(parts.iter().flat_map(|a| a.positions.iter().copied()))
    }

    fn require_non_empty(&self) -> Result<(), CoarrayError> {
        if self.is_empty() {
            Err(CoarrayError::EmptyGeometry)
        } else {
            Ok(())
        }
    }
}

impl TryFrom<Vec<i64>> for SensorArray {
    type Error = CoarrayError;

    fn try_from(value: Vec<i64>) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<SensorArray> for Vec<i64> {
    fn from(value: SensorArray) -> Self {
        value.positions
    }
}

impl fmt::Display for SensorArray {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, p) in self.positions.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{p}")?;
        }
        write!(f, "}}")
    }
}

/// The two circular fourth-order cumulant forms and the lag each produces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CumulantForm {
    /// `cum(x1, x2, x3*, x4*)`, lag `(p1 + p2) - (p3 + p4)`.
    SumDiff,
    /// `cum(x1, x2*, x3, x4*)`, lag `(p1 - p2) + (p3 - p4)`.
    DiffSum,
}

impl CumulantForm {
    pub const ALL: [CumulantForm; 2] = [CumulantForm::SumDiff, CumulantForm::DiffSum];

    pub fn lag(self, p: [i64; 4]) -> Lag {
        match self {
            CumulantForm::SumDiff => (p[0] + p[1]) - (p[2] + p[3]),
            CumulantForm::DiffSum => (p[0] - p[1]) + (p[2] - p[3]),
        }
    }
}

/// Which FODCA forms to include. `Both` is the full co-array; the single-form
/// variants exist for ablation against single-form constructions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FormSelection {
    #[default]
    Both,
    SumDiffOnly,
    DiffSumOnly,
}

impl FormSelection {
    pub fn forms(self) -> &'static [CumulantForm] {
        match self {
            FormSelection::Both => &CumulantForm::ALL,
            FormSelection::SumDiffOnly => &CumulantForm::ALL[..1],
            FormSelection::DiffSumOnly => &CumulantForm::ALL[1..],
        }
    }
}

/// Sensor index quadruple (0-based) plus the cumulant form that maps it to a lag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Quadruple {
    pub k: [usize; 4],
    pub form: CumulantForm,
}

/// Lag -> generating quadruples.
pub type Provenance = BTreeMap<Lag, Vec<Quadruple>>;

/// A set of integer lags with per-lag multiplicity.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LagSet {
    counts: BTreeMap<Lag, u64>,
}

impl LagSet {
    pub fn from_counts(counts: BTreeMap<Lag, u64>) -> Self {
        debug_assert!(counts.values().all(|&c| c >= 1));
        Self { counts }
    }

    /// Each lag with multiplicity one.
    pub fn from_lags(lags: impl IntoIterator<Item = Lag>) -> Self {
        let mut counts = BTreeMap::new();
        for u in lags {
            counts.insert(u, 1);
        }
        Self { counts }
    }

    fn add(&mut self, lag: Lag, n: u64) {
        *self.counts.entry(lag).or_insert(0) += n;
    }

    pub fn contains(&self, lag: Lag) -> bool {
        self.counts.contains_key(&lag)
    }

    /// Number of generating tuples for `lag`, zero if absent.
    pub fn multiplicity(&self, lag: Lag) -> u64 {
        self.counts.get(&lag).copied().unwrap_or(0)
    }

    pub fn counts(&self) -> &BTreeMap<Lag, u64> {
        &self.counts
    }

    /// Distinct lags, ascending.
    pub fn lags(&self) -> Vec<Lag> {
        self.counts.keys().copied().collect()
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn min(&self) -> Option<Lag> {
        self.counts.keys().next().copied()
    }

    pub fn max(&self) -> Option<Lag> {
        self.counts.keys().next_back().copied()
    }

    pub fn total_multiplicity(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn is_subset_of(&self, other: &LagSet) -> bool {
        self.counts.keys().all(|u| other.contains(*u))
    }

    pub fn is_symmetric(&self) -> bool {
        self.counts.keys().all(|u| self.contains(-u))
    }
}

/// Second-order difference co-array `{m - n}`.
pub fn diff2(p: &SensorArray) -> Result<LagSet, CoarrayError> {
    cross_sum(&[p.positions(), p.positions()], &[Sign::Plus, Sign::Minus])
}

/// Second-order sum co-array `{m + n}`.
pub fn sum2(p: &SensorArray) -> Result<LagSet, CoarrayError> {
    cross_sum(&[p.positions(), p.positions()], &[Sign::Plus, Sign::Plus])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    fn apply(self, v: i64) -> i64 {
        match self {
            Sign::Plus => v,
            Sign::Minus => -v,
        }
    }
}

/// Signed cross sum of two or three operand sets, counting every ordered tuple.
///
/// `[+, +]` is the sum co-array, `[+, -]` the difference co-array,
/// `[+, +, -]` and `[+, -, -]` the two third-order difference co-arrays.
pub fn cross_sum(operands: &[&[i64]], signs: &[Sign]) -> Result<LagSet, CoarrayError> {
    if !(2..=3).contains(&operands.len()) {
        return Err(CoarrayError::OperandCount(operands.len()));
    }
    if signs.len() != operands.len() {
        return Err(CoarrayError::SignCount {
            operands: operands.len(),
            signs: signs.len(),
        });
    }
    if operands.iter().any(|o| o.is_empty()) {
        return Err(CoarrayError::EmptyGeometry);
    }

    let mut acc: BTreeMap<Lag, u64> = BTreeMap::new();
    acc.insert(0, 1);
    for (set, &sign) in operands.iter().zip(signs) {
        let mut next = BTreeMap::new();
        for (&base, &n) in &acc {
            for &v in set.iter() {
                *next.entry(base + sign.apply(v)).or_insert(0) += n;
            }
        }
        acc = next;
    }
    Ok(LagSet::from_counts(acc))
}

/// Histogram of ordered pair sums (`plus`) or differences (`!plus`).
fn pair_histogram(p: &[i64], plus: bool) -> BTreeMap<i64, u64> {
    let mut h = BTreeMap::new();
    for &a in p {
        for &b in p {
            *h.entry(if plus { a + b } else { a - b }).or_insert(0) += 1;
        }
    }
    h
}

/// Fourth-order difference co-array over both cumulant forms.
pub fn fodca(p: &SensorArray) -> Result<LagSet, CoarrayError> {
    fodca_with(p, FormSelection::Both)
}

/// Fourth-order difference co-array restricted to the selected forms.
///
/// Multiplicities count ordered index quadruples, so the full co-array carries
/// a total multiplicity of `2 N^4`.
pub fn fodca_with(p: &SensorArray, forms: FormSelection) -> Result<LagSet, CoarrayError> {
    p.require_non_empty()?;
    let mut out = LagSet::default();
    for &form in forms.forms() {
        // SumDiff: s1 - s2 over pair sums; DiffSum: d1 + d2 over pair differences.
        let hist = pair_histogram(p.positions(), form == CumulantForm::SumDiff);
        for (&x, &nx) in &hist {
            for (&y, &ny) in &hist {
                let lag = match form {
                    CumulantForm::SumDiff => x - y,
                    CumulantForm::DiffSum => x + y,
                };
                out.add(lag, nx * ny);
            }
        }
    }
    Ok(out)
}

/// Lag-to-quadruple index for the selected forms. This is `O(N^4)` in memory
/// and is only built when a cumulant estimator needs it.
pub fn fodca_provenance(p: &SensorArray, forms: FormSelection) -> Result<Provenance, CoarrayError> {
    p.require_non_empty()?;
    let pos = p.positions();
    let n = pos.len();
    let mut prov: Provenance = BTreeMap::new();
    for &form in forms.forms() {
        for k1 in 0..n {
            for k2 in 0..n {
                for k3 in 0..n {
                    for k4 in 0..n {
                        let k = [k1, k2, k3, k4];
                        let lag = form.lag([pos[k1], pos[k2], pos[k3], pos[k4]]);
                        prov.entry(lag).or_default().push(Quadruple { k, form });
                    }
                }
            }
        }
    }
    Ok(prov)
}

/// Largest `U` such that every lag in `[-U, U]` is present.
pub fn central_consecutive(l: &LagSet) -> Result<u64, CoarrayError> {
    if !l.contains(0) {
        return Err(CoarrayError::MissingOrigin);
    }
    let mut u: i64 = 0;
    while l.contains(u + 1) && l.contains(-(u + 1)) {
        u += 1;
    }
    Ok(u as u64)
}

/// Lags in `[-bound, bound]` that are missing from `l`, ascending.
pub fn holes(l: &LagSet, bound: u64) -> Vec<Lag> {
    let b = bound as i64;
    (-b..=b).filter(|u| !l.contains(*u)).collect()
}
