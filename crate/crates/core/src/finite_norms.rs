//! Exact norms of explicit finite matrices.
//!
//! The `(∞,1)` norm `max_{‖u‖∞ ≤ 1} ‖Mu‖₁` is a maximum of a convex function
//! over the hypercube, so it is attained at a vertex `u ∈ {±1}^cols`. The
//! brute-force routine here enumerates those vertices in Gray-code order and
//! is the oracle every closed form in the crate is checked against.

use std::fmt;
use std::ops::{AddAssign, SubAssign};

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};
use crate::exact::rational_to_f64;
use crate::sign_matrix::SignVector;

/// Largest number of (non-zero) columns the vertex enumeration accepts.
pub const ENUMERATION_CAP_COLS: usize = 24;

/// Row-major matrix of exact rationals.
#[derive(Clone, PartialEq, Eq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<BigRational>,
}

impl fmt::Debug for DenseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "DenseMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            let row: Vec<String> = (0..self.cols).map(|j| self.get(i, j).to_string()).collect();
            writeln!(f, "  [{}]", row.join(", "))?;
        }
        write!(f, "]")
    }
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, entries: Vec<BigRational>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidParameter("matrix dimensions must be positive".into()));
        }
        if rows * cols != entries.len() {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                got: entries.len(),
            });
        }
        Ok(Self {
            rows,
            cols,
            entries,
        })
    }

    pub fn from_i64(rows: usize, cols: usize, entries: &[i64]) -> Result<Self> {
        Self::new(
            rows,
            cols,
            entries
                .iter()
                .map(|&x| BigRational::from_integer(BigInt::from(x)))
                .collect(),
        )
    }

    /// Exact rational image of a float matrix; fails on non-finite entries.
    pub fn from_f64(rows: usize, cols: usize, entries: &[f64]) -> Result<Self> {
        let exact = entries
            .iter()
            .map(|&x| {
                BigRational::from_float(x)
                    .ok_or_else(|| Error::InvalidParameter(format!("non-finite entry {x}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(rows, cols, exact)
    }

    pub fn from_fn(
        rows: usize,
        cols: usize,
        mut f: impl FnMut(usize, usize) -> BigRational,
    ) -> Result<Self> {
        let mut entries = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                entries.push(f(i, j));
            }
        }
        Self::new(rows, cols, entries)
    }

    pub fn identity(k: usize) -> Result<Self> {
        Self::from_fn(k, k, |i, j| {
            if i == j {
                BigRational::one()
            } else {
                BigRational::zero()
            }
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> &BigRational {
        &self.entries[i * self.cols + j]
    }

    pub fn entries(&self) -> &[BigRational] {
        &self.entries
    }

    /// Row-major float view. Entries too large for f64 become infinite.
    pub fn to_f64(&self) -> Vec<f64> {
        self.entries
            .iter()
            .map(|x| rational_to_f64(x).unwrap_or(f64::INFINITY))
            .collect()
    }

    pub fn scaled(&self, alpha: &BigRational) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            entries: self.entries.iter().map(|x| x * alpha).collect(),
        }
    }

    pub fn is_symmetric(&self) -> bool {
        self.is_square()
            && (0..self.rows).all(|i| (i + 1..self.cols).all(|j| self.get(i, j) == self.get(j, i)))
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(Zero::is_zero)
    }

    /// `diag(0, M)`: one leading zero row and column.
    pub fn embed_after_zero(&self) -> Self {
        let (r, c) = (self.rows + 1, self.cols + 1);
        Self::from_fn(r, c, |i, j| {
            if i == 0 || j == 0 {
                BigRational::zero()
            } else {
                self.get(i - 1, j - 1).clone()
            }
        })
        .expect("dimensions are positive")
    }

    /// `diag(self, other)`.
    pub fn block_diag(&self, other: &DenseMatrix) -> Self {
        let (r, c) = (self.rows + other.rows, self.cols + other.cols);
        Self::from_fn(r, c, |i, j| match (i < self.rows, j < self.cols) {
            (true, true) => self.get(i, j).clone(),
            (false, false) => other.get(i - self.rows, j - self.cols).clone(),
            _ => BigRational::zero(),
        })
        .expect("dimensions are positive")
    }

    /// `M u` for a sign vector, exactly.
    pub fn apply_signs(&self, u: &SignVector) -> Result<Vec<BigRational>> {
        if u.len() != self.cols {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                got: u.len(),
            });
        }
        Ok((0..self.rows)
            .map(|i| {
                u.iter()
                    .enumerate()
                    .fold(BigRational::zero(), |acc, (j, s)| {
                        if s > 0 {
                            acc + self.get(i, j)
                        } else {
                            acc - self.get(i, j)
                        }
                    })
            })
            .collect())
    }

    /// `‖M u‖₁` in floating point for an arbitrary real `u`.
    pub fn apply_l1_f64(&self, u: &[f64]) -> Result<f64> {
        if u.len() != self.cols {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                got: u.len(),
            });
        }
        let a = self.to_f64();
        Ok((0..self.rows)
            .map(|i| {
                a[i * self.cols..(i + 1) * self.cols]
                    .iter()
                    .zip(u)
                    .map(|(x, y)| x * y)
                    .sum::<f64>()
                    .abs()
            })
            .sum())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NormMethod {
    ClosedForm,
    VertexEnumeration,
    Asymptotic,
}

impl NormMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            NormMethod::ClosedForm => "closed_form",
            NormMethod::VertexEnumeration => "vertex_enumeration",
            NormMethod::Asymptotic => "asymptotic",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormReport {
    pub l1_entrywise: BigRational,
    pub opnorm_inf1: BigRational,
    pub witness_u: SignVector,
    pub method: NormMethod,
}

impl NormReport {
    pub fn ratio(&self) -> Option<BigRational> {
        (!self.l1_entrywise.is_zero()).then(|| &self.opnorm_inf1 / &self.l1_entrywise)
    }
}

/// Sum of the moduli of all entries.
pub fn l1_entrywise(m: &DenseMatrix) -> BigRational {
    m.entries
        .iter()
        .fold(BigRational::zero(), |acc, x| acc + x.abs())
}

/// Integer image `D · M` of a rational matrix, with `D` the lcm of the
/// denominators.
struct IntegerImage {
    scale: BigInt,
    entries: Vec<BigInt>,
}

fn integer_image(m: &DenseMatrix) -> IntegerImage {
    let scale = m
        .entries
        .iter()
        .fold(BigInt::one(), |acc, x| acc.lcm(x.denom()));
    let entries = m
        .entries
        .iter()
        .map(|x| x.numer() * (&scale / x.denom()))
        .collect();
    IntegerImage { scale, entries }
}

trait Accumulator:
    Clone + Ord + Signed + for<'a> AddAssign<&'a Self> + for<'a> SubAssign<&'a Self>
{
}
impl<T> Accumulator for T where
    T: Clone + Ord + Signed + for<'a> AddAssign<&'a T> + for<'a> SubAssign<&'a T>
{
}

/// Gray-code walk over the sign patterns of the active columns, with the
/// first active column pinned to `+1`. Returns the maximum and the Gray state
/// (bit `b` set = active column `b + 1` negated) of its first occurrence.
fn gray_walk<T: Accumulator>(
    rows: usize,
    cols: usize,
    entries: &[T],
    active: &[usize],
) -> (T, u64) {
    let col = |i: usize, j: usize| &entries[i * cols + j];
    let mut y: Vec<T> = (0..rows)
        .map(|i| {
            let mut acc = T::zero();
            for &j in active {
                acc += col(i, j);
            }
            acc
        })
        .collect();
    let total = |y: &[T]| {
        let mut s = T::zero();
        for v in y {
            s += &v.abs();
        }
        s
    };
    let mut best = total(&y);
    let mut best_state = 0u64;
    let mut state = 0u64;
    let free = active.len().saturating_sub(1);
    let steps = 1u64 << free;
    for g in 1..steps {
        let bit = g.trailing_zeros() as usize;
        let j = active[bit + 1];
        let now_negative = state >> bit & 1 == 0;
        state ^= 1 << bit;
        for (i, yi) in y.iter_mut().enumerate() {
            // flipping u_j moves y by ∓2 M_ij
            let d = col(i, j);
            if now_negative {
                *yi -= d;
                *yi -= d;
            } else {
                *yi += d;
                *yi += d;
            }
        }
        let v = total(&y);
        if v > best {
            best = v;
            best_state = state;
        }
    }
    (best, best_state)
}

fn witness_from_state(cols: usize, active: &[usize], state: u64) -> SignVector {
    let mut u = vec![1i8; cols];
    for (b, &j) in active.iter().enumerate().skip(1) {
        if state >> (b - 1) & 1 == 1 {
            u[j] = -1;
        }
    }
    SignVector::new(u).expect("entries are ±1")
}

/// Exact `(∞,1)` norm by vertex enumeration.
///
/// All-zero columns are skipped and the first remaining column is pinned to
/// `+1` (`u` and `-u` give the same value), so `2^(c-1)` vertices are visited
/// for `c` non-zero columns, each in `O(rows)`. On ties the earliest Gray-code
/// state wins. Skipped columns get `+1` in the witness.
pub fn opnorm_inf1_bruteforce(m: &DenseMatrix) -> Result<NormReport> {
    let image = integer_image(m);
    let active: Vec<usize> = (0..m.cols)
        .filter(|&j| (0..m.rows).any(|i| !image.entries[i * m.cols + j].is_zero()))
        .collect();
    if active.len() > ENUMERATION_CAP_COLS {
        return Err(Error::Budget(format!(
            "vertex enumeration over {} non-zero columns exceeds the cap of {} (2^{} vertices)",
            active.len(),
            ENUMERATION_CAP_COLS,
            ENUMERATION_CAP_COLS
        )));
    }
    let l1 = l1_entrywise(m);
    if active.is_empty() {
        return Ok(NormReport {
            l1_entrywise: l1,
            opnorm_inf1: BigRational::zero(),
            witness_u: SignVector::ones(m.cols),
            method: NormMethod::VertexEnumeration,
        });
    }
    // Σ|D·M_ij| bounds every partial sum the walk produces.
    let bound: BigInt = image.entries.iter().map(|x| x.abs()).sum();
    let (best, state) = if bound.bits() < 120 {
        let small: Vec<i128> = image
            .entries
            .iter()
            .map(|x| x.to_i128().expect("bounded by the l1 mass"))
            .collect();
        let (b, s) = gray_walk(m.rows, m.cols, &small, &active);
        (BigInt::from(b), s)
    } else {
        gray_walk(m.rows, m.cols, &image.entries, &active)
    };
    Ok(NormReport {
        l1_entrywise: l1,
        opnorm_inf1: BigRational::new(best, image.scale),
        witness_u: witness_from_state(m.cols, &active, state),
        method: NormMethod::VertexEnumeration,
    })
}

/// Reference enumeration: every `u ∈ {±1}^cols` in binary order, `Mu`
/// recomputed from scratch. Exponentially slower; used to check the Gray walk.
pub fn opnorm_inf1_naive(m: &DenseMatrix) -> Result<NormReport> {
    if m.cols > ENUMERATION_CAP_COLS {
        return Err(Error::Budget(format!(
            "naive enumeration over {} columns exceeds the cap of {}",
            m.cols, ENUMERATION_CAP_COLS
        )));
    }
    let image = integer_image(m);
    let mut best: Option<(BigInt, SignVector)> = None;
    for bits in 0..(1u64 << m.cols) {
        let u = SignVector::from_bits(bits, m.cols as u32);
        let v: BigInt = (0..m.rows)
            .map(|i| {
                u.iter()
                    .enumerate()
                    .map(|(j, s)| &image.entries[i * m.cols + j] * s)
                    .sum::<BigInt>()
                    .abs()
            })
            .sum();
        if best.as_ref().is_none_or(|(b, _)| v > *b) {
            best = Some((v, u));
        }
    }
    let (value, witness_u) = best.expect("at least one vertex");
    Ok(NormReport {
        l1_entrywise: l1_entrywise(m),
        opnorm_inf1: BigRational::new(value, image.scale),
        witness_u,
        method: NormMethod::VertexEnumeration,
    })
}

/// `‖M‖_{∞,1} / ‖M‖₁`.
pub fn norm_ratio(m: &DenseMatrix) -> Result<BigRational> {
    if m.is_zero() {
        return Err(Error::Domain("norm ratio of the zero matrix is undefined".into()));
    }
    let r = opnorm_inf1_bruteforce(m)?;
    Ok(r.opnorm_inf1 / r.l1_entrywise)
}
