use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, ToPrimitive};
use serde::{Deserialize, Serialize};
use std::ops::RangeInclusive;

use super::CalculusError;

fn check_domain(k: u64, n: u64) -> Result<u64, CalculusError> {
    if 2 * k + n <= 3 {
        return Err(CalculusError::DomainError { k, n });
    }
    Ok(2 * k + n - 3)
}

/// `C(k, n) = 1 + 2/(2k + n - 3)`, exactly.
pub fn c_const(k: u64, n: u64) -> Result<BigRational, CalculusError> {
    let d = check_domain(k, n)?;
    Ok(BigRational::new(BigInt::from(d + 2), BigInt::from(d)))
}

/// `B(k, N, n) = prod_{l=1}^{N} C(k + 2l, n)`, exactly.
pub fn b_const(k: u64, big_n: u64, n: u64) -> Result<BigRational, CalculusError> {
    check_domain(k, n)?;
    let mut b = BigRational::one();
    for l in 1..=big_n {
        b *= c_const(k + 2 * l, n)?;
    }
    Ok(b)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantsEntry {
    pub k: u64,
    #[serde(rename = "N")]
    pub big_n: u64,
    pub n: u64,
    /// Exact value as `p/q`.
    pub c: String,
    pub c_value: f64,
    pub b: String,
    pub b_value: f64,
    /// `sqrt(1 + 4N/(2k + n - 3))`.
    pub bound: f64,
    pub bound_holds: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantsTable {
    pub entries: Vec<ConstantsEntry>,
}

pub fn constants(
    k_range: RangeInclusive<u64>,
    n_prod_range: RangeInclusive<u64>,
    n_range: RangeInclusive<u64>,
) -> Result<ConstantsTable, CalculusError> {
    let mut entries = Vec::new();
    for n in n_range {
        for k in k_range.clone() {
            let c = c_const(k, n)?;
            let d0 = 2 * k + n - 3;
            let mut b = BigRational::one();
            for big_n in 0..=*n_prod_range.end() {
                if big_n > 0 {
                    b *= c_const(k + 2 * big_n, n)?;
                }
                if !n_prod_range.contains(&big_n) {
                    continue;
                }
                entries.push(ConstantsEntry {
                    k,
                    big_n,
                    n,
                    c: format!("{}/{}", c.numer(), c.denom()),
                    c_value: c.to_f64().unwrap_or(f64::NAN),
                    b: format!("{}/{}", b.numer(), b.denom()),
                    b_value: b.to_f64().unwrap_or(f64::NAN),
                    bound: (1.0 + 4.0 * big_n as f64 / d0 as f64).sqrt(),
                    bound_holds: bound_holds(b.numer().magnitude(), b.denom().magnitude(), d0, big_n),
                });
            }
        }
    }
    Ok(ConstantsTable { entries })
}

/// `p/q <= sqrt(1 + 4N/d0)` decided exactly as `p^2 d0 <= q^2 (d0 + 4N)`.
fn bound_holds(p: &BigUint, q: &BigUint, d0: u64, big_n: u64) -> bool {
    p * p * BigUint::from(d0) <= q * q * BigUint::from(d0 + 4 * big_n)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProdEstSummary {
    pub entries_checked: usize,
    pub violations: Vec<(u64, u64, u64)>,
}

impl ProdEstSummary {
    pub fn holds(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks `B(k,N,n) <= sqrt(1 + 4N/(2k+n-3))` in exact arithmetic over the ranges.
///
/// The product is carried as an unreduced fraction, which is exact and
/// avoids a gcd per factor.
pub fn prodest_check(
    k_range: RangeInclusive<u64>,
    n_prod_range: RangeInclusive<u64>,
    n_range: RangeInclusive<u64>,
) -> Result<ProdEstSummary, CalculusError> {
    let mut checked = 0;
    let mut violations = Vec::new();
    for n in n_range {
        for k in k_range.clone() {
            let d0 = check_domain(k, n)?;
            let mut p = BigUint::one();
            let mut q = BigUint::one();
            for big_n in 0..=*n_prod_range.end() {
                if big_n > 0 {
                    let d = 2 * (k + 2 * big_n) + n - 3;
                    p *= d + 2;
                    q *= d;
                }
                if n_prod_range.contains(&big_n) {
                    checked += 1;
                    if !bound_holds(&p, &q, d0, big_n) {
                        violations.push((k, big_n, n));
                    }
                }
            }
        }
    }
    Ok(ProdEstSummary { entries_checked: checked, violations })
}
