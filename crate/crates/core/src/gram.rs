//! The Gram matrices `M(n) = V(n) V(n)ᵀ`.
//!
//! With the row encoding of [`crate::sign_matrix`], `v(i)·v(j)` counts agreeing
//! minus disagreeing positions, so `M_ij = m − 2·popcount(i ⊕ j)`. Every
//! entry is available in `O(1)` without storing `V`.

use nalgebra::DMatrix;
use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::Zero;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::exact::{log2_biguint, pow2, ratio as big_ratio};
use crate::finite_norms::DenseMatrix;
use crate::sign_matrix::{self, SignMatrixSpec, MATERIALIZE_CAP_LOG2, STREAM_CAP_LOG2};

/// Largest `p` for which the numeric maximization over the sphere runs.
pub const NUMERIC_MSTAR_P_CAP: u32 = 3;
/// Largest `log2 n` for which `M(n)` is materialized densely.
pub const DENSE_CAP_LOG2: u32 = 12;
/// Default `p` limit for the streamed identity check.
pub const PARSEVAL_P_CAP: u32 = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GramSpec {
    base: SignMatrixSpec,
}

impl GramSpec {
    pub fn new(base: SignMatrixSpec) -> Self {
        Self { base }
    }

    pub fn from_p(p: u32) -> Result<Self> {
        Ok(Self::new(SignMatrixSpec::new(p)?))
    }

    pub fn base(&self) -> &SignMatrixSpec {
        &self.base
    }

    pub fn p(&self) -> u32 {
        self.base.p()
    }

    pub fn m(&self) -> u32 {
        self.base.m()
    }

    /// Matrix size `n = 2^m`, when it fits in a `u64`.
    pub fn n(&self) -> Option<u64> {
        self.base.rows()
    }

    fn check_index(&self, i: u64) -> Result<()> {
        match self.n() {
            Some(n) if i >= n => Err(Error::IndexOutOfRange {
                index: i,
                bound: n.to_string(),
            }),
            _ => Ok(()),
        }
    }

    fn size_within(&self, cap_log2: u32) -> Result<usize> {
        if self.m() > cap_log2 {
            return Err(Error::CapExceeded {
                what: format!("a Gram matrix of size 2^{}", self.m()),
                cap: format!("2^{cap_log2}"),
            });
        }
        Ok(1usize << self.m())
    }
}

#[inline]
pub(crate) fn popcount_entry(m: u32, i: u64, j: u64) -> i64 {
    m as i64 - 2 * (i ^ j).count_ones() as i64
}

pub fn entry(g: &GramSpec, i: u64, j: u64) -> Result<i64> {
    g.check_index(i)?;
    g.check_index(j)?;
    Ok(popcount_entry(g.m(), i, j))
}

/// Dense `M(n)` for `n ≤ 2^12`.
pub fn to_dense(g: &GramSpec) -> Result<DenseMatrix> {
    let n = g.size_within(DENSE_CAP_LOG2)?;
    DenseMatrix::from_fn(n, n, |i, j| {
        BigRational::from_integer(BigInt::from(popcount_entry(g.m(), i as u64, j as u64)))
    })
}

/// `‖M(n)‖₁ = n · ‖V(n)‖_{∞,1}`: row `i` of `M` is `V v(i)` and every sign
/// vector attains the `(∞,1)` norm of `V`.
pub fn l1_closed(g: &GramSpec) -> BigUint {
    pow2(g.m() as u64) * sign_matrix::opnorm_inf1_closed(g.base())
}

/// `‖M(n)‖_{∞,1} = n²`.
pub fn opnorm_inf1_value(g: &GramSpec) -> BigUint {
    pow2(2 * g.m() as u64)
}

/// `M u` computed as `V (Vᵀ u)` in two streaming passes.
pub fn apply(g: &GramSpec, u: &[f64]) -> Result<Vec<f64>> {
    let n = g.size_within(MATERIALIZE_CAP_LOG2)?;
    if u.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: u.len(),
        });
    }
    let m = g.m();
    let base = g.base();
    let mut w = vec![0.0; m as usize];
    for (i, &ui) in u.iter().enumerate() {
        for (j, wj) in w.iter_mut().enumerate() {
            if base.negative_at(i as u64, j as u32) {
                *wj -= ui;
            } else {
                *wj += ui;
            }
        }
    }
    Ok((0..n as u64)
        .map(|i| {
            w.iter()
                .enumerate()
                .map(|(j, &wj)| if base.negative_at(i, j as u32) { -wj } else { wj })
                .sum()
        })
        .collect())
}

/// Column `j` of `V(n)` as a float vector.
pub fn v_column(g: &GramSpec, j: u32) -> Result<Vec<f64>> {
    if j >= g.m() {
        return Err(Error::IndexOutOfRange {
            index: j as u64,
            bound: g.m().to_string(),
        });
    }
    let n = g.size_within(MATERIALIZE_CAP_LOG2)?;
    Ok((0..n as u64)
        .map(|i| if g.base().negative_at(i, j) { -1.0 } else { 1.0 })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct NumericMaximum {
    /// Best `n · Σ_b |aᵀb|` found.
    pub value: f64,
    pub argmax: Vec<f64>,
    /// `‖argmax‖₂`; the maximum sits on the unit sphere.
    pub argmax_norm: f64,
    pub restarts: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MStarReport {
    /// `n²`.
    pub exact: BigUint,
    /// Present for `p ≤ 3`.
    pub numeric: Option<NumericMaximum>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AscentOptions {
    pub restarts: usize,
    pub iterations: usize,
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for AscentOptions {
    fn default() -> Self {
        Self {
            restarts: 32,
            iterations: 500,
            tolerance: 1e-10,
            seed: 0x5eed,
        }
    }
}

/// `n · Σ_{b ∈ U_m} |aᵀb| = n ‖V a‖₁`.
pub fn mstar_objective(g: &GramSpec, a: &[f64]) -> Result<f64> {
    let n = g.size_within(STREAM_CAP_LOG2)? as f64;
    Ok(n * sign_matrix::apply(g.base(), a, Default::default())?.l1)
}

fn objective_and_gradient(g: &GramSpec, a: &[f64]) -> (f64, Vec<f64>) {
    let base = g.base();
    let n = 1u64 << g.m();
    let mut value = 0.0;
    let mut grad = vec![0.0; a.len()];
    for i in 0..n {
        let sign = |j: usize| if base.negative_at(i, j as u32) { -1.0 } else { 1.0 };
        let y: f64 = a.iter().enumerate().map(|(j, &aj)| sign(j) * aj).sum();
        value += y.abs();
        let s = y.signum();
        if y != 0.0 {
            for (j, gj) in grad.iter_mut().enumerate() {
                *gj += s * sign(j);
            }
        }
    }
    let nf = n as f64;
    (nf * value, grad.into_iter().map(|x| nf * x).collect())
}

fn project_to_ball(a: &mut [f64]) {
    let norm = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 1.0 {
        a.iter_mut().for_each(|x| *x /= norm);
    }
}

/// Projected gradient ascent of `n · Σ_b |aᵀb|` over the unit ball, started
/// strictly inside it.
pub fn mstar_numeric(g: &GramSpec, opts: AscentOptions) -> Result<NumericMaximum> {
    if g.p() > NUMERIC_MSTAR_P_CAP {
        return Err(Error::CapExceeded {
            what: format!("numeric maximization at p = {}", g.p()),
            cap: format!("p = {NUMERIC_MSTAR_P_CAP}"),
        });
    }
    let m = g.m() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut best: Option<(f64, Vec<f64>)> = None;
    for _ in 0..opts.restarts {
        let mut a: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
        let norm = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
        let radius: f64 = rng.random_range(0.1..0.5);
        a.iter_mut().for_each(|x| *x *= radius / norm);

        let (mut value, mut grad) = objective_and_gradient(g, &a);
        let mut step = 1.0;
        for _ in 0..opts.iterations {
            if step < opts.tolerance {
                break;
            }
            let gnorm = grad.iter().map(|x| x * x).sum::<f64>().sqrt();
            if gnorm == 0.0 {
                break;
            }
            let mut trial: Vec<f64> = a
                .iter()
                .zip(&grad)
                .map(|(x, d)| x + step * d / gnorm)
                .collect();
            project_to_ball(&mut trial);
            let (tv, tg) = objective_and_gradient(g, &trial);
            if tv > value {
                a = trial;
                value = tv;
                grad = tg;
            } else {
                step /= 2.0;
            }
        }
        if best.as_ref().is_none_or(|(b, _)| value > *b) {
            best = Some((value, a));
        }
    }
    let (value, argmax) = best.ok_or_else(|| Error::InvalidParameter("restarts must be positive".into()))?;
    let argmax_norm = argmax.iter().map(|x| x * x).sum::<f64>().sqrt();
    Ok(NumericMaximum {
        value,
        argmax,
        argmax_norm,
        restarts: opts.restarts,
    })
}

/// `n · max_{‖a‖₂ ≤ 1} ‖V a‖₁ = n²`, with the numeric maximizer for `p ≤ 3`.
pub fn mstar_value(g: &GramSpec, opts: AscentOptions) -> Result<MStarReport> {
    let numeric = if g.p() <= NUMERIC_MSTAR_P_CAP {
        Some(mstar_numeric(g, opts)?)
    } else {
        None
    };
    Ok(MStarReport {
        exact: opnorm_inf1_value(g),
        numeric,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParsevalCheck {
    /// `Σ_{b ∈ U_m} (aᵀb)²`
    pub lhs: f64,
    /// `2^m ‖a‖₂²`
    pub rhs: f64,
    pub relative_error: f64,
    pub passed: bool,
}

pub const PARSEVAL_TOLERANCE: f64 = 1e-12;

fn parseval_cap(g: &GramSpec, a_len: usize) -> Result<u64> {
    if g.p() > PARSEVAL_P_CAP {
        return Err(Error::CapExceeded {
            what: format!("streaming 2^{} sign vectors", g.m()),
            cap: format!("p = {PARSEVAL_P_CAP}"),
        });
    }
    if a_len != g.m() as usize {
        return Err(Error::DimensionMismatch {
            expected: g.m() as usize,
            got: a_len,
        });
    }
    Ok(1u64 << g.m())
}

pub fn parseval_identity_check(g: &GramSpec, a: &[f64]) -> Result<ParsevalCheck> {
    let n = parseval_cap(g, a.len())?;
    let base = g.base();
    let lhs: f64 = (0..n)
        .map(|i| {
            let d: f64 = a
                .iter()
                .enumerate()
                .map(|(j, &x)| if base.negative_at(i, j as u32) { -x } else { x })
                .sum();
            d * d
        })
        .sum();
    let rhs = n as f64 * a.iter().map(|x| x * x).sum::<f64>();
    let relative_error = if rhs == 0.0 {
        lhs.abs()
    } else {
        (lhs - rhs).abs() / rhs
    };
    Ok(ParsevalCheck {
        lhs,
        rhs,
        relative_error,
        passed: relative_error <= PARSEVAL_TOLERANCE,
    })
}

/// Both sides of the identity in exact arithmetic.
pub fn parseval_identity_exact(
    g: &GramSpec,
    a: &[BigRational],
) -> Result<(BigRational, BigRational)> {
    let n = parseval_cap(g, a.len())?;
    let base = g.base();
    let mut lhs = BigRational::zero();
    for i in 0..n {
        let d = a.iter().enumerate().fold(BigRational::zero(), |acc, (j, x)| {
            if base.negative_at(i, j as u32) {
                acc - x
            } else {
                acc + x
            }
        });
        lhs += &d * &d;
    }
    let norm2 = a.iter().fold(BigRational::zero(), |acc, x| acc + x * x);
    let rhs = norm2 * BigRational::from_integer(BigInt::from(n));
    Ok((lhs, rhs))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GramRatio {
    /// `‖M‖_{∞,1} / ‖M‖₁`
    pub exact: BigRational,
    pub value: f64,
    /// `sqrt(π / 4p)`
    pub asymptotic: f64,
    /// `value / asymptotic − 1`
    pub relative_deviation: f64,
}

pub fn ratio(g: &GramSpec) -> GramRatio {
    let num = opnorm_inf1_value(g);
    let den = l1_closed(g);
    let value = (log2_biguint(&num) - log2_biguint(&den)).exp2();
    let asymptotic = (std::f64::consts::PI / (4.0 * g.p() as f64)).sqrt();
    GramRatio {
        exact: big_ratio(&num, &den),
        value,
        asymptotic,
        relative_deviation: value / asymptotic - 1.0,
    }
}

/// Eigenvalues of the dense `M(n)` in ascending order.
pub fn eigenvalues(g: &GramSpec) -> Result<Vec<f64>> {
    let n = g.size_within(DENSE_CAP_LOG2)?;
    let m = g.m();
    let dense = DMatrix::from_fn(n, n, |i, j| popcount_entry(m, i as u64, j as u64) as f64);
    let mut ev: Vec<f64> = dense.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    Ok(ev)
}
