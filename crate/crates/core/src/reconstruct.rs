//! Exact LCM machinery and signal-reconstruction feasibility.
//!
//! Positions are in units of half a wavelength, so the wavelength is 2.

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};
use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::coarray::SensorArray;
use crate::designs::{FohaDesign, GeneratorKind};

const WAVELENGTH: i64 = 2;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ReconstructError {
    #[error("lcm of two zero operands is undefined")]
    ZeroOperands,
    #[error("non-positive term {0} in lcm sequence")]
    NonPositiveTerm(i64),
    #[error("all sensor positions are zero")]
    AllZero,
    #[error("reconstruction coefficients need an NA or CNA generator, got {0}")]
    UnsupportedKind(GeneratorKind),
    #[error("division denominator is zero")]
    ZeroDenominator,
}

/// Reduced fraction with a positive denominator.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Rational {
    num: BigInt,
    den: BigInt,
}

impl Rational {
    pub fn new(num: impl Into<BigInt>, den: impl Into<BigInt>) -> Result<Self, ReconstructError> {
        let (mut num, mut den) = (num.into(), den.into());
        if den.is_zero() {
            return Err(ReconstructError::ZeroDenominator);
        }
        if den.is_negative() {
            num = -num;
            den = -den;
        }
        let g = num.gcd(&den);
        Ok(Self { num: num / &g, den: den / &g })
    }

    pub fn integer(v: impl Into<BigInt>) -> Self {
        Self { num: v.into(), den: BigInt::one() }
    }

    pub fn num(&self) -> &BigInt {
        &self.num
    }

    pub fn den(&self) -> &BigInt {
        &self.den
    }

    /// `lcm(a/b, c/d) = lcm(a, c) / gcd(b, d)` for reduced fractions.
    pub fn lcm(&self, other: &Self) -> Self {
        let num = self.num.lcm(&other.num);
        let den = self.den.gcd(&other.den);
        Self::new(num, den).expect("gcd of positive denominators is positive")
    }

    /// `self ≥ k` for an integer `k`.
    pub fn at_least(&self, k: i64) -> bool {
        self.num >= &self.den * k
    }
}

impl std::fmt::Display for Rational {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.den.is_one() {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

impl Serialize for Rational {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// `lcm(β1, β1 + β2)`.
pub fn lcm_pair(b1: i64, b2: i64) -> Result<BigInt, ReconstructError> {
    let (a, b) = (BigInt::from(b1), BigInt::from(b1) + b2);
    if a.is_zero() && b.is_zero() {
        return Err(ReconstructError::ZeroOperands);
    }
    Ok(a.lcm(&b))
}

/// Left fold of the standard lcm; the empty list gives 1.
pub fn lcm_multi<'a>(values: impl IntoIterator<Item = &'a BigInt>) -> BigInt {
    values.into_iter().fold(BigInt::one(), |acc, v| acc.lcm(v))
}

/// lcm of `first, first + step, …` over `count` terms; 1 when `count` is 0.
pub fn lcm_seq(first: i64, step: i64, count: usize) -> Result<BigInt, ReconstructError> {
    let mut acc = BigInt::one();
    for i in 0..count as i64 {
        let t = first + step * i;
        if t <= 0 {
            return Err(ReconstructError::NonPositiveTerm(t));
        }
        acc = acc.lcm(&BigInt::from(t));
    }
    Ok(acc)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Feasibility {
    pub feasible: bool,
    pub lcm_value: Rational,
}

/// Rational lcm of `λ/p` over the non-zero positions; reconstruction is
/// possible iff it is at least `λ`. With `λ = 2` this holds exactly when the
/// non-zero positions are coprime.
pub fn check_reconstruction(p: &SensorArray) -> Result<Feasibility, ReconstructError> {
    let mut acc: Option<Rational> = None;
    for &x in p.positions().iter().filter(|&&x| x != 0) {
        let r = Rational::new(WAVELENGTH, x)?;
        acc = Some(match acc {
            None => r,
            Some(a) => a.lcm(&r),
        });
    }
    let lcm_value = acc.ok_or(ReconstructError::AllZero)?;
    Ok(Feasibility { feasible: lcm_value.at_least(WAVELENGTH), lcm_value })
}

fn decimal<S: Serializer>(v: &BigInt, s: S) -> Result<S::Ok, S::Error> {
    s.collect_str(v)
}

fn decimals<S: Serializer>(v: &[BigInt], s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(v.iter().map(|x| x.to_string()))
}

/// Feasibility plus the integer sampling factors of each subarray.
///
/// Big integers serialize as decimal strings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ReconstructionReport {
    pub feasible: bool,
    pub lcm_value: Rational,
    #[serde(serialize_with = "decimal")]
    pub eps1: BigInt,
    #[serde(serialize_with = "decimal")]
    pub eps2: BigInt,
    #[serde(serialize_with = "decimal")]
    pub eps3: BigInt,
    #[serde(serialize_with = "decimal")]
    pub k_min: BigInt,
    /// `c_n = k_min · p_n / ε_j` for sensor `n` in subarray `j`, in sensor order.
    #[serde(serialize_with = "decimals")]
    pub coefficients: Vec<BigInt>,
}

fn generator_eps(design: &FohaDesign) -> Result<BigInt, ReconstructError> {
    let p = &design.params;
    let (m1, m2) = match (p.kind, p.m1, p.m2) {
        (GeneratorKind::Na | GeneratorKind::Cna, Some(m1), Some(m2)) => (m1 as i64, m2 as i64),
        _ => return Err(ReconstructError::UnsupportedKind(p.kind)),
    };
    // Dense segment 1..M1-1 (0 excluded).
    let zeta1 = lcm_seq(1, 1, (m1 - 1) as usize)?;
    if p.kind == GeneratorKind::Na {
        let zeta2 = lcm_seq(2 * m1 - 1, m1, m2 as usize)?;
        return Ok(zeta1.lcm(&zeta2));
    }
    let q = (m1 + 1) * (m2 - 1);
    let zeta3 = lcm_seq(m1, m1 + 1, m2 as usize)?;
    let zeta4 = lcm_seq(m1 + q + 1, 1, m1 as usize)?;
    Ok(zeta1.lcm(&zeta3).lcm(&zeta4))
}

pub fn foha_reconstruction(design: &FohaDesign) -> Result<ReconstructionReport, ReconstructError> {
    let eps1 = generator_eps(design)?;
    let p = &design.params;
    let eps2 = lcm_seq(p.delta1, p.eta1, p.n2)?;
    let eps3 = lcm_seq(p.delta2, p.eta2, p.n3)?;
    // Smallest integer k ≥ 2·lcm(ε1, ε2, ε3)/λ.
    let k_min: BigInt = Integer::div_ceil(&(lcm_multi([&eps1, &eps2, &eps3]) * 2), &BigInt::from(WAVELENGTH));

    let mut coefficients = Vec::with_capacity(design.n());
    for (sub, eps) in [(&design.a1, &eps1), (&design.a2, &eps2), (&design.a3, &eps3)] {
        for &x in sub.positions() {
            let (c, r) = (&k_min * x).div_rem(eps);
            assert!(r.is_zero(), "k_min is a multiple of every subarray lcm");
            coefficients.push(c);
        }
    }

    let f = check_reconstruction(&design.positions)?;
    Ok(ReconstructionReport {
        feasible: f.feasible,
        lcm_value: f.lcm_value,
        eps1,
        eps2,
        eps3,
        k_min,
        coefficients,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::designs::{build_foha_cna, build_foha_general, build_foha_na};

    fn big(v: i64) -> BigInt {
        BigInt::from(v)
    }

    fn arr(p: &[i64]) -> SensorArray {
        SensorArray::new(p.iter().copied()).unwrap()
    }

    #[test]
    fn rational_reduces() {
        let r = Rational::new(4, -6).unwrap();
        assert_eq!((r.num(), r.den()), (&big(-2), &big(3)));
        assert!(Rational::new(1, 0).is_err());
        assert_eq!(Rational::new(1, 1).unwrap().lcm(&Rational::new(1, 2).unwrap()), Rational::integer(1));
        assert_eq!(Rational::new(2, 3).unwrap().lcm(&Rational::new(1, 2).unwrap()).to_string(), "2");
    }

    #[test]
    fn lcm_pair_examples() {
        assert_eq!(lcm_pair(4, 2).unwrap(), big(12));
        assert_eq!(lcm_pair(1, 0).unwrap(), big(1));
        assert_eq!(lcm_pair(6, 4).unwrap(), big(30));
        assert_eq!(lcm_pair(0, 0), Err(ReconstructError::ZeroOperands));
    }

    #[test]
    fn lcm_seq_examples() {
        assert_eq!(lcm_seq(1, 1, 4).unwrap(), big(12));
        assert_eq!(lcm_seq(2, 3, 3).unwrap(), big(40));
        assert_eq!(lcm_seq(5, 3, 2).unwrap(), big(40));
        assert_eq!(lcm_seq(7, 3, 0).unwrap(), big(1));
        assert_eq!(lcm_seq(2, -1, 3), Err(ReconstructError::NonPositiveTerm(0)));
    }

    #[test]
    fn lcm_multi_folds() {
        let v = [big(4), big(6), big(10)];
        assert_eq!(lcm_multi(&v), big(60));
        assert_eq!(lcm_multi(&[]), big(1));
    }

    #[test]
    fn check_reconstruction_examples() {
        let f = check_reconstruction(&arr(&[0, 2, 4])).unwrap();
        assert!(!f.feasible);
        assert_eq!(f.lcm_value, Rational::integer(1));
        let f = check_reconstruction(&arr(&[0, 1])).unwrap();
        assert!(f.feasible);
        assert_eq!(f.lcm_value, Rational::integer(2));
        assert_eq!(check_reconstruction(&arr(&[0])), Err(ReconstructError::AllZero));
    }

    #[test]
    fn na_nine_report() {
        let r = foha_reconstruction(&build_foha_na(3, 2, 2, 2).unwrap()).unwrap();
        assert!(r.feasible);
        assert_eq!(r.eps1, big(40));
        assert_eq!(r.eps2, big(570));
        assert_eq!(r.eps3, big(5544));
        assert_eq!(r.k_min, big(526_680));
        assert_eq!(r.coefficients.len(), 9);
        assert_eq!(r.coefficients[1], big(526_680 / 40));
    }

    #[test]
    fn cna_nine_report() {
        let d = build_foha_cna(1, 3, 2, 2).unwrap();
        let r = foha_reconstruction(&d).unwrap();
        assert_eq!(r.eps1, big(30));
        assert_eq!(r.eps2, big(19 * 32));
        assert_eq!(r.eps3, lcm_multi(&[big(103), big(174)]));
        assert!(r.feasible);
    }

    #[test]
    fn coefficient_identity() {
        let d = build_foha_na(2, 3, 3, 2).unwrap();
        let r = foha_reconstruction(&d).unwrap();
        let eps = [&r.eps1, &r.eps2, &r.eps3];
        let mut idx = 0;
        for j in 1..=3 {
            for &x in d.subarray(j).positions() {
                assert_eq!(&r.coefficients[idx] * eps[j - 1], &r.k_min * x);
                idx += 1;
            }
        }
    }

    #[test]
    fn custom_generator_rejected() {
        let d = build_foha_general(&arr(&[0, 1]), 1, 1).unwrap();
        assert_eq!(
            foha_reconstruction(&d),
            Err(ReconstructError::UnsupportedKind(GeneratorKind::Custom))
        );
    }

    #[test]
    fn report_serializes_big_integers_as_strings() {
        let r = foha_reconstruction(&build_foha_na(3, 2, 2, 2).unwrap()).unwrap();
        let v = serde_json::to_value(&r).unwrap();
        assert_eq!(v["k_min"], "526680");
        assert_eq!(v["eps1"], "40");
        assert_eq!(v["lcm_value"], "2");
        assert!(v["coefficients"].is_array());
    }
}
