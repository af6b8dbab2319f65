//! The sign matrices `V(n)`: for `m = 2p + 1` columns, the `n = 2^m` rows
//! enumerate every `±1` pattern of length `m` in binary-counting order.
//!
//! Row `i` has entry `j` equal to `+1` when bit `m - 1 - j` of `i` is clear
//! and `-1` otherwise, so row 0 is all `+1` and the last row all `-1`. The
//! matrix is never stored; every operation streams rows from this encoding.

use num_bigint::BigUint;

use crate::error::{Error, Result};
use crate::exact::{binomial, log2_biguint, pow2};

/// Default limit on materialized output: `2^20` rows.
pub const MATERIALIZE_CAP_LOG2: u32 = 20;
/// Largest `m` for which streaming enumeration of all rows is attempted.
pub const STREAM_CAP_LOG2: u32 = 30;
/// Default largest `p` for the column-orthogonality sweep.
pub const ORTHOGONALITY_P_CAP: u32 = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SignMatrixSpec {
    p: u32,
}

impl SignMatrixSpec {
    pub fn new(p: u32) -> Result<Self> {
        if p == 0 {
            return Err(Error::InvalidParameter("p must be a positive integer".into()));
        }
        if p > (u32::MAX - 1) / 2 {
            return Err(Error::InvalidParameter(format!("p = {p} is too large")));
        }
        Ok(Self { p })
    }

    pub fn p(&self) -> u32 {
        self.p
    }

    /// Column count `2p + 1`.
    pub fn m(&self) -> u32 {
        2 * self.p + 1
    }

    /// `log2` of the row count; the row count itself is `2^m`.
    pub fn rows_log2(&self) -> u32 {
        self.m()
    }

    /// Row count when it fits in a `u64`.
    pub fn rows(&self) -> Option<u64> {
        1u64.checked_shl(self.m())
    }

    pub fn rows_big(&self) -> BigUint {
        pow2(self.m() as u64)
    }

    fn check_row(&self, i: u64) -> Result<()> {
        match self.rows() {
            Some(n) if i >= n => Err(Error::IndexOutOfRange {
                index: i,
                bound: n.to_string(),
            }),
            _ => Ok(()),
        }
    }

    fn enumerable(&self, cap_log2: u32) -> Result<u64> {
        if self.m() > cap_log2 {
            return Err(Error::CapExceeded {
                what: format!("enumerating 2^{} rows (p = {})", self.m(), self.p),
                cap: format!("2^{cap_log2} rows"),
            });
        }
        Ok(1u64 << self.m())
    }

    /// `true` when entry `(i, j)` is `-1`.
    #[inline]
    pub(crate) fn negative_at(&self, i: u64, j: u32) -> bool {
        let shift = self.m() - 1 - j;
        shift < 64 && (i >> shift) & 1 == 1
    }
}

/// A vector with every entry exactly `+1` or `-1`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SignVector(Vec<i8>);

impl SignVector {
    pub fn new(entries: Vec<i8>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidParameter("sign vector must be non-empty".into()));
        }
        if let Some(bad) = entries.iter().find(|&&e| e != 1 && e != -1) {
            return Err(Error::InvalidParameter(format!(
                "sign vector entry {bad} is not ±1"
            )));
        }
        Ok(Self(entries))
    }

    pub fn ones(len: usize) -> Self {
        Self(vec![1; len])
    }

    /// Sign vector whose entry `j` is `-1` iff bit `len - 1 - j` of `bits`
    /// is set (the row encoding of [`row`]).
    pub fn from_bits(bits: u64, len: u32) -> Self {
        Self(
            (0..len)
                .map(|j| {
                    let shift = len - 1 - j;
                    if shift < 64 && (bits >> shift) & 1 == 1 {
                        -1
                    } else {
                        1
                    }
                })
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[i8] {
        &self.0
    }

    pub fn iter(&self) -> impl Iterator<Item = i8> + '_ {
        self.0.iter().copied()
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.0.iter().map(|&s| s as f64).collect()
    }

    /// Inverse of [`SignVector::from_bits`]; `None` beyond 64 entries.
    pub fn to_bits(&self) -> Option<u64> {
        if self.0.len() > 64 {
            return None;
        }
        Some(
            self.0
                .iter()
                .fold(0u64, |acc, &s| (acc << 1) | u64::from(s == -1)),
        )
    }
}

/// Row `i` of `V(n)`.
pub fn row(spec: &SignMatrixSpec, i: u64) -> Result<SignVector> {
    spec.check_row(i)?;
    Ok(SignVector::from_bits(i, spec.m()))
}

/// Entrywise `ℓ1` norm: every entry has modulus one, so this is `m · 2^m`.
pub fn entrywise_l1(spec: &SignMatrixSpec) -> BigUint {
    spec.rows_big() * spec.m()
}

/// `2 Σ_{h=0}^{p} C(m, h)(m − 2h)`: rows with `h` negative entries contribute
/// `|m − 2h|` each against the all-ones vector, and the sum is symmetric in
/// `h ↔ m − h`.
pub fn opnorm_inf1_binomial_sum(spec: &SignMatrixSpec) -> BigUint {
    let m = spec.m() as u64;
    let half: BigUint = (0..=spec.p() as u64)
        .map(|h| binomial(m, h) * (m - 2 * h))
        .sum();
    half * 2u32
}

/// `2(p + 1) C(m, p + 1)`, the telescoped form of the binomial sum.
pub fn opnorm_inf1_central(spec: &SignMatrixSpec) -> BigUint {
    let p = spec.p() as u64;
    binomial(spec.m() as u64, p + 1) * (2 * (p + 1))
}

/// Exact `(∞,1)` operator norm of `V(n)`. Both closed forms are evaluated and
/// must agree.
pub fn opnorm_inf1_closed(spec: &SignMatrixSpec) -> BigUint {
    let sum = opnorm_inf1_binomial_sum(spec);
    let central = opnorm_inf1_central(spec);
    assert_eq!(
        sum, central,
        "closed forms for the (∞,1) norm disagree at p = {}",
        spec.p()
    );
    sum
}

/// A positive quantity carried in log space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogValue {
    pub log2: f64,
    /// `2^log2` when it is a finite f64.
    pub value: Option<f64>,
}

impl LogValue {
    pub fn from_log2(log2: f64) -> Self {
        let v = log2.exp2();
        Self {
            log2,
            value: (v.is_finite() && v > 0.0).then_some(v),
        }
    }

    pub fn from_biguint(x: &BigUint) -> Self {
        Self::from_log2(log2_biguint(x))
    }

    /// `self / other`, computed in log space.
    pub fn ratio_to(&self, other: &LogValue) -> f64 {
        (self.log2 - other.log2).exp2()
    }
}

/// Normal-approximation value `2 · 2^m · sqrt(p/π)` of the `(∞,1)` norm.
pub fn opnorm_inf1_asymptotic(spec: &SignMatrixSpec) -> LogValue {
    let p = spec.p() as f64;
    LogValue::from_log2(1.0 + spec.m() as f64 + 0.5 * (p / std::f64::consts::PI).log2())
}

/// Relative error `closed / asymptotic − 1`, evaluated in log space.
pub fn asymptotic_relative_error(spec: &SignMatrixSpec) -> f64 {
    let exact = LogValue::from_biguint(&opnorm_inf1_closed(spec));
    exact.ratio_to(&opnorm_inf1_asymptotic(spec)) - 1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ApplyOptions {
    pub materialize: bool,
    pub cap_log2: u32,
}

impl Default for ApplyOptions {
    fn default() -> Self {
        Self {
            materialize: false,
            cap_log2: MATERIALIZE_CAP_LOG2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApplyOutput {
    /// `‖V u‖₁`
    pub l1: f64,
    /// `V u` in row order, when requested.
    pub output: Option<Vec<f64>>,
}

/// Streams `V u` row by row and returns its `ℓ1` norm. Accepts any real `u`;
/// for `u` in the sign cube the result is the exact operator norm.
pub fn apply(spec: &SignMatrixSpec, u: &[f64], opts: ApplyOptions) -> Result<ApplyOutput> {
    let m = spec.m() as usize;
    if u.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: u.len(),
        });
    }
    let n = if opts.materialize {
        spec.enumerable(opts.cap_log2)?
    } else {
        spec.enumerable(STREAM_CAP_LOG2)?
    };
    let mut output = opts.materialize.then(|| Vec::with_capacity(n as usize));
    let mut l1 = 0.0;
    for i in 0..n {
        let y: f64 = u
            .iter()
            .enumerate()
            .map(|(j, &uj)| if spec.negative_at(i, j as u32) { -uj } else { uj })
            .sum();
        l1 += y.abs();
        if let Some(out) = output.as_mut() {
            out.push(y);
        }
    }
    Ok(ApplyOutput { l1, output })
}

/// Exact `‖V u‖₁` for a sign vector, using `row_i · u = m − 2·popcount(i ⊕ u)`.
pub fn apply_signs(spec: &SignMatrixSpec, u: &SignVector) -> Result<u64> {
    let m = spec.m();
    if u.len() != m as usize {
        return Err(Error::DimensionMismatch {
            expected: m as usize,
            got: u.len(),
        });
    }
    let n = spec.enumerable(STREAM_CAP_LOG2)?;
    let bits = u.to_bits().expect("m <= 30 here");
    Ok((0..n)
        .map(|i| (m as i64 - 2 * (i ^ bits).count_ones() as i64).unsigned_abs())
        .sum())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OrthogonalityReport {
    pub passed: bool,
    /// Largest `|(VᵀV)_{jk}|` with `j ≠ k`.
    pub max_off_diagonal: u64,
    /// Diagonal of `VᵀV`; each entry should be `2^m`.
    pub diagonal: Vec<u64>,
}

/// Checks `VᵀV = 2^m I` exactly by streaming every row. `p_cap` defaults to
/// [`ORTHOGONALITY_P_CAP`].
pub fn orthogonality_check(
    spec: &SignMatrixSpec,
    p_cap: Option<u32>,
) -> Result<OrthogonalityReport> {
    let cap = p_cap.unwrap_or(ORTHOGONALITY_P_CAP);
    if spec.p() > cap {
        return Err(Error::CapExceeded {
            what: format!("orthogonality sweep at p = {}", spec.p()),
            cap: format!("p = {cap}"),
        });
    }
    let m = spec.m() as usize;
    let n = spec.enumerable(STREAM_CAP_LOG2)?;
    let mut gram = vec![0i64; m * m];
    let mut signs = vec![0i64; m];
    for i in 0..n {
        for (j, s) in signs.iter_mut().enumerate() {
            *s = if spec.negative_at(i, j as u32) { -1 } else { 1 };
        }
        for j in 0..m {
            for k in j..m {
                gram[j * m + k] += signs[j] * signs[k];
            }
        }
    }
    let diagonal: Vec<u64> = (0..m).map(|j| gram[j * m + j] as u64).collect();
    let max_off_diagonal = (0..m)
        .flat_map(|j| (j + 1..m).map(move |k| (j, k)))
        .map(|(j, k)| gram[j * m + k].unsigned_abs())
        .max()
        .unwrap_or(0);
    let passed = max_off_diagonal == 0 && diagonal.iter().all(|&d| d == n);
    Ok(OrthogonalityReport {
        passed,
        max_off_diagonal,
        diagonal,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashSet;

    fn spec(p: u32) -> SignMatrixSpec {
        SignMatrixSpec::new(p).unwrap()
    }

    /// Independent enumeration of the sign cube by recursive extension,
    /// in lexicographic order with `+1 < -1`.
    fn cube(len: usize) -> Vec<Vec<i64>> {
        if len == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for tail in cube(len - 1) {
            for s in [1, -1] {
                let mut v = vec![s];
                v.extend(&tail);
                out.push(v);
            }
        }
        out.sort_by(|a, b| {
            let key = |v: &Vec<i64>| v.iter().map(|&s| i64::from(s < 0)).collect::<Vec<_>>();
            key(a).cmp(&key(b))
        });
        out
    }

    fn brute_opnorm(p: u32) -> i64 {
        let m = (2 * p + 1) as usize;
        let rows = cube(m);
        cube(m)
            .iter()
            .map(|u| {
                rows.iter()
                    .map(|r| r.iter().zip(u).map(|(a, b)| a * b).sum::<i64>().abs())
                    .sum::<i64>()
            })
            .max()
            .unwrap()
    }

    #[test]
    fn rows_match_the_listed_matrix_for_p1() {
        let s = spec(1);
        assert_eq!(row(&s, 0).unwrap().as_slice(), &[1, 1, 1]);
        assert_eq!(row(&s, 7).unwrap().as_slice(), &[-1, -1, -1]);
        assert_eq!(row(&s, 2).unwrap().as_slice(), &[1, -1, 1]);
        let listed: Vec<Vec<i64>> = (0..8)
            .map(|i| row(&s, i).unwrap().iter().map(i64::from).collect())
            .collect();
        assert_eq!(listed, cube(3));
    }

    #[test]
    fn row_index_out_of_range() {
        assert!(matches!(
            row(&spec(1), 8),
            Err(Error::IndexOutOfRange { index: 8, .. })
        ));
        assert!(row(&spec(40), u64::MAX).is_ok());
    }

    #[test]
    fn zero_p_is_rejected() {
        assert!(SignMatrixSpec::new(0).is_err());
    }

    #[test]
    fn entrywise_l1_values() {
        assert_eq!(entrywise_l1(&spec(1)), BigUint::from(24u32));
        let dense: i64 = cube(5).iter().flatten().map(|x| x.abs()).sum();
        assert_eq!(dense, 160);
        assert_eq!(entrywise_l1(&spec(2)), BigUint::from(160u32));
        assert_eq!(entrywise_l1(&spec(30)), pow2(61) * 61u32);
    }

    #[test]
    fn closed_form_matches_brute_force() {
        assert_eq!(brute_opnorm(1), 12);
        assert_eq!(brute_opnorm(2), 60);
        assert_eq!(opnorm_inf1_closed(&spec(1)), BigUint::from(12u32));
        assert_eq!(opnorm_inf1_closed(&spec(2)), BigUint::from(60u32));
        assert_eq!(opnorm_inf1_central(&spec(1)), BigUint::from(2u32 * 2 * 3));
    }

    #[test]
    fn asymptotic_values() {
        let a = opnorm_inf1_asymptotic(&spec(1));
        let direct = 2.0 * 8.0 * (1.0 / std::f64::consts::PI).sqrt();
        assert!((a.value.unwrap() - direct).abs() < 1e-12);
        assert!((a.value.unwrap() - 9.027).abs() < 1e-3);
        let e50 = asymptotic_relative_error(&spec(50));
        let e10 = asymptotic_relative_error(&spec(10));
        assert!(e50.abs() < 0.05);
        assert!(e50.abs() < e10.abs());
    }

    #[test]
    fn asymptotic_beyond_f64_range_keeps_log() {
        let a = opnorm_inf1_asymptotic(&spec(600));
        assert!(a.value.is_none());
        assert!(a.log2 > 1200.0);
    }

    #[test]
    fn apply_examples() {
        let s = spec(1);
        let o = apply(&s, &[1.0, 1.0, 1.0], ApplyOptions::default()).unwrap();
        assert_eq!(o.l1, 12.0);
        assert_eq!(apply(&s, &[1.0, -1.0, 1.0], ApplyOptions::default()).unwrap().l1, 12.0);
        assert_eq!(apply(&s, &[0.0; 3], ApplyOptions::default()).unwrap().l1, 0.0);
    }

    #[test]
    fn apply_materializes_rows_in_order() {
        let s = spec(1);
        let o = apply(
            &s,
            &[1.0, 2.0, 4.0],
            ApplyOptions {
                materialize: true,
                ..Default::default()
            },
        )
        .unwrap();
        let out = o.output.unwrap();
        assert_eq!(out, vec![7.0, -1.0, 3.0, -5.0, 5.0, -3.0, 1.0, -7.0]);
    }

    #[test]
    fn apply_errors() {
        let s = spec(1);
        assert!(matches!(
            apply(&s, &[1.0; 2], ApplyOptions::default()),
            Err(Error::DimensionMismatch { expected: 3, got: 2 })
        ));
        let big = spec(10);
        let opts = ApplyOptions {
            materialize: true,
            cap_log2: 20,
        };
        assert!(matches!(
            apply(&big, &[1.0; 21], opts),
            Err(Error::CapExceeded { .. })
        ));
    }

    #[test]
    fn orthogonality_small_cases() {
        for (p, n) in [(1, 8u64), (2, 32), (3, 128)] {
            let r = orthogonality_check(&spec(p), None).unwrap();
            assert!(r.passed);
            assert_eq!(r.max_off_diagonal, 0);
            assert!(r.diagonal.iter().all(|&d| d == n));
        }
        assert!(orthogonality_check(&spec(13), None).is_err());
        assert!(orthogonality_check(&spec(3), Some(2)).is_err());
    }

    #[test]
    fn rows_are_a_bijection_onto_the_cube() {
        for p in 1..=4 {
            let s = spec(p);
            let set: HashSet<Vec<i8>> = (0..s.rows().unwrap())
                .map(|i| row(&s, i).unwrap().as_slice().to_vec())
                .collect();
            assert_eq!(set.len() as u64, s.rows().unwrap());
            let cube_set: HashSet<Vec<i8>> = cube(s.m() as usize)
                .into_iter()
                .map(|v| v.into_iter().map(|x| x as i8).collect())
                .collect();
            assert_eq!(set, cube_set);
        }
    }

    #[test]
    fn norm_is_invariant_over_sign_vectors() {
        for p in 1..=4 {
            let s = spec(p);
            let closed = opnorm_inf1_closed(&s);
            for bits in 0..(1u64 << s.m()) {
                let u = SignVector::from_bits(bits, s.m());
                assert_eq!(BigUint::from(apply_signs(&s, &u).unwrap()), closed);
            }
        }
    }

    #[test]
    fn norm_ordering_up_to_p64() {
        for p in 1..=64 {
            let s = spec(p);
            assert!(opnorm_inf1_closed(&s) <= entrywise_l1(&s));
        }
    }

    #[test]
    fn ratio_law_for_large_p() {
        for p in [30, 40, 64, 100] {
            let s = spec(p);
            let r = LogValue::from_biguint(&opnorm_inf1_closed(&s))
                .ratio_to(&LogValue::from_biguint(&entrywise_l1(&s)));
            let scaled = r * (std::f64::consts::PI * p as f64).sqrt();
            assert!((0.9..=1.1).contains(&scaled), "p = {p}: {scaled}");
        }
    }

    #[test]
    fn sign_vector_validation() {
        assert!(SignVector::new(vec![1, 0, -1]).is_err());
        assert!(SignVector::new(vec![]).is_err());
        let v = SignVector::new(vec![1, -1, -1]).unwrap();
        assert_eq!(v.to_bits(), Some(0b011));
        assert_eq!(SignVector::from_bits(0b011, 3), v);
    }

    proptest! {
        #[test]
        fn vertices_dominate_the_unit_ball(
            p in 1u32..=2,
            u in proptest::collection::vec(-1.0f64..=1.0, 5),
        ) {
            let s = spec(p);
            let u = &u[..s.m() as usize];
            let v = apply(&s, u, ApplyOptions::default()).unwrap().l1;
            let closed = opnorm_inf1_closed(&s);
            prop_assert!(v <= crate::exact::biguint_to_f64(&closed).unwrap() + 1e-9);
        }
    }
}
