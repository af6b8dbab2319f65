//! Infinite kernel matrices accessed lazily by 1-based index.
//!
//! Two block-diagonal operators are provided alongside two reference kernels:
//!
//! * [`counterexample_v`]: blocks `V(n)/(p m n)`, rectangular, not symmetric.
//!   Block `p` has entrywise mass `1/p`, so the masses add up to the harmonic
//!   series while the `(∞,1)` contributions decay like `p^{-3/2}`.
//! * [`counterexample_s`]: blocks `S_h = M(n)/(h ‖M(n)‖₁)` with
//!   `n = 2^{2p(h)+1}`. Symmetric and positive semidefinite, entrywise mass
//!   `1/h` per block.
//! * [`stable_spline`]: `K_ij = α^{max(i,j)}`, absolutely summable.
//! * [`constant_kernel`]: `K_ij = c`, not stable.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::exact::{biguint_to_f64, rational_to_f64};
use crate::finite_norms::DenseMatrix;
use crate::gram::{self, popcount_entry, GramSpec};
use crate::sign_matrix::{self, SignMatrixSpec};

/// Largest finite section materialized densely.
pub const SECTION_CAP: usize = 4096;
/// Default relative tolerance for [`psd_check`].
pub const PSD_TOLERANCE: f64 = 1e-8;
/// Largest block index with closed-form data available (`m = 2p + 1` must
/// stay a valid `u32`).
const MAX_BLOCK_P: u64 = 1 << 30;

/// Lazily evaluated entries of an infinite matrix, indices starting at 1.
pub trait InfiniteMatrix: Send + Sync + fmt::Debug {
    fn entry(&self, i: u64, j: u64) -> f64;

    /// Exact value, for kernels with rational entries.
    fn entry_exact(&self, _i: u64, _j: u64) -> Option<BigRational> {
        None
    }

    /// Upper bound on `Σ |K_ij|` over all pairs with `max(i, j) > t`.
    fn l1_tail_bound(&self, _t: u64) -> Option<f64> {
        None
    }

    /// `Σ_{i,j} |K_ij|` when known in closed form.
    fn l1_total(&self) -> Option<f64> {
        None
    }
}

/// How the block scale parameter `p` grows with the block index `h`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum PChoice {
    /// `p(h) = h`
    #[default]
    Linear,
    /// `p(h) = h²`
    Quadratic,
}

impl PChoice {
    pub fn as_str(&self) -> &'static str {
        match self {
            PChoice::Linear => "h",
            PChoice::Quadratic => "h^2",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BlockShape {
    /// `n(p) × m(p)` blocks `V(n)/(p m n)`.
    SignMatrix,
    /// `n(p) × n(p)` blocks `M(n)/(h ‖M(n)‖₁)`.
    Gram,
}

/// Block layout of a block-diagonal infinite matrix. Block indices start at 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BlockSchedule {
    shape: BlockShape,
    p_choice: PChoice,
}

impl BlockSchedule {
    pub fn new(shape: BlockShape, p_choice: PChoice) -> Self {
        Self { shape, p_choice }
    }

    pub fn shape(&self) -> BlockShape {
        self.shape
    }

    pub fn p_choice(&self) -> PChoice {
        self.p_choice
    }

    pub fn p_of_h(&self, h: u64) -> Result<u32> {
        if h == 0 {
            return Err(Error::InvalidParameter("block indices start at 1".into()));
        }
        let p = match self.p_choice {
            PChoice::Linear => Some(h),
            PChoice::Quadratic => h.checked_mul(h),
        };
        match p {
            Some(p) if p <= MAX_BLOCK_P => Ok(p as u32),
            _ => Err(Error::InvalidParameter(format!("block {h} is beyond the supported range"))),
        }
    }

    pub fn sign_spec(&self, h: u64) -> Result<SignMatrixSpec> {
        SignMatrixSpec::new(self.p_of_h(h)?)
    }

    /// Row count `n(p(h)) = 2^{2p(h)+1}`, when it fits in a `u64`.
    pub fn block_rows(&self, h: u64) -> Option<u64> {
        self.sign_spec(h).ok()?.rows()
    }

    pub fn block_cols(&self, h: u64) -> Option<u64> {
        let spec = self.sign_spec(h).ok()?;
        match self.shape {
            BlockShape::SignMatrix => Some(spec.m() as u64),
            BlockShape::Gram => spec.rows(),
        }
    }

    /// Exact multiplier applied to the integer block.
    pub fn block_scale(&self, h: u64) -> Result<BigRational> {
        let spec = self.sign_spec(h)?;
        let den = match self.shape {
            BlockShape::SignMatrix => {
                BigInt::from(spec.rows_big()) * spec.m() * spec.p()
            }
            BlockShape::Gram => BigInt::from(gram::l1_closed(&GramSpec::new(spec))) * h,
        };
        Ok(BigRational::new(BigInt::one(), den))
    }

    /// Entrywise `ℓ1` mass of block `h`: the scale times the integer block's mass.
    pub fn block_l1_mass(&self, h: u64) -> Result<BigRational> {
        let spec = self.sign_spec(h)?;
        let raw = match self.shape {
            BlockShape::SignMatrix => sign_matrix::entrywise_l1(&spec),
            BlockShape::Gram => gram::l1_closed(&GramSpec::new(spec)),
        };
        Ok(self.block_scale(h)? * BigRational::from_integer(raw.into()))
    }

    /// `(∞,1)` norm of block `h` from the closed forms.
    pub fn block_opnorm(&self, h: u64) -> Result<BigRational> {
        let spec = self.sign_spec(h)?;
        let raw = match self.shape {
            BlockShape::SignMatrix => sign_matrix::opnorm_inf1_closed(&spec),
            BlockShape::Gram => gram::opnorm_inf1_value(&GramSpec::new(spec)),
        };
        Ok(self.block_scale(h)? * BigRational::from_integer(raw.into()))
    }

    fn offset(&self, h: u64, size: impl Fn(u64) -> Option<u64>) -> Option<u64> {
        (1..h).try_fold(0u64, |acc, k| acc.checked_add(size(k)?))
    }

    /// Number of rows before block `h`.
    pub fn row_offset(&self, h: u64) -> Option<u64> {
        self.offset(h, |k| self.block_rows(k))
    }

    pub fn col_offset(&self, h: u64) -> Option<u64> {
        self.offset(h, |k| self.block_cols(k))
    }

    fn locate(&self, index: u64, size: impl Fn(u64) -> Option<u64>) -> Option<(u64, u64)> {
        if index == 0 {
            return None;
        }
        let mut start = 0u64;
        let mut h = 1u64;
        loop {
            match size(h).and_then(|len| start.checked_add(len)) {
                Some(end) if index > end => {
                    start = end;
                    h += 1;
                }
                // the block is wider than the u64 range left, so it holds `index`
                _ => return Some((h, index - 1 - start)),
            }
        }
    }

    /// Global 1-based row → (block, 0-based local row).
    pub fn locate_row(&self, i: u64) -> Option<(u64, u64)> {
        self.locate(i, |k| self.block_rows(k))
    }

    pub fn locate_col(&self, j: u64) -> Option<(u64, u64)> {
        self.locate(j, |k| self.block_cols(k))
    }

    pub fn global_row(&self, h: u64, local: u64) -> Option<u64> {
        if local >= self.block_rows(h)? {
            return None;
        }
        self.row_offset(h)?.checked_add(local + 1)
    }

    pub fn global_col(&self, h: u64, local: u64) -> Option<u64> {
        if local >= self.block_cols(h)? {
            return None;
        }
        self.col_offset(h)?.checked_add(local + 1)
    }

    /// Rows `1..=T` where `T` closes block `h`.
    pub fn row_boundary(&self, h: u64) -> Option<u64> {
        self.row_offset(h + 1)
    }
}

#[derive(Debug)]
struct BlockDiagonal {
    schedule: BlockSchedule,
    scales: Vec<(BigRational, f64)>,
}

impl BlockDiagonal {
    fn new(schedule: BlockSchedule) -> Self {
        // blocks whose first row is addressable by a u64 index
        let mut scales = Vec::new();
        let mut h = 1;
        while schedule.row_offset(h).is_some() && schedule.col_offset(h).is_some() {
            let s = schedule.block_scale(h).expect("reachable block");
            let f = rational_to_f64(&s).unwrap_or(0.0);
            scales.push((s, f));
            h += 1;
        }
        Self { schedule, scales }
    }

    /// `(block, local row, local col)` of a non-zero position, or `None`.
    fn position(&self, i: u64, j: u64) -> Option<(u64, u64, u64)> {
        let (h, li) = self.schedule.locate_row(i)?;
        let lj = (j - 1).checked_sub(self.schedule.col_offset(h)?)?;
        // a block too wide for u64 bounds contains every remaining column
        let inside = self.schedule.block_cols(h).is_none_or(|c| lj < c);
        inside.then_some((h, li, lj))
    }

    /// Integer entry of the unscaled block.
    fn raw(&self, h: u64, li: u64, lj: u64) -> i64 {
        let spec = self.schedule.sign_spec(h).expect("located block");
        match self.schedule.shape {
            BlockShape::SignMatrix => {
                if spec.negative_at(li, lj as u32) {
                    -1
                } else {
                    1
                }
            }
            BlockShape::Gram => popcount_entry(spec.m(), li, lj),
        }
    }
}

impl InfiniteMatrix for BlockDiagonal {
    fn entry(&self, i: u64, j: u64) -> f64 {
        match self.position(i, j) {
            Some((h, li, lj)) => self.raw(h, li, lj) as f64 * self.scales[(h - 1) as usize].1,
            None => 0.0,
        }
    }

    fn entry_exact(&self, i: u64, j: u64) -> Option<BigRational> {
        Some(match self.position(i, j) {
            Some((h, li, lj)) => {
                &self.scales[(h - 1) as usize].0 * BigInt::from(self.raw(h, li, lj))
            }
            None => BigRational::zero(),
        })
    }
}

#[derive(Debug)]
struct StableSpline {
    alpha: f64,
}

impl InfiniteMatrix for StableSpline {
    fn entry(&self, i: u64, j: u64) -> f64 {
        let k = i.max(j);
        if k > i32::MAX as u64 {
            0.0
        } else {
            self.alpha.powi(k as i32)
        }
    }

    fn l1_tail_bound(&self, t: u64) -> Option<f64> {
        // Σ_{k>t} α^k (2k − 1): the shell max(i, j) = k holds 2k − 1 entries.
        let a = self.alpha;
        let t = t as f64;
        Some(a.powf(t + 1.0) * ((2.0 * t + 1.0) / (1.0 - a) + 2.0 * a / ((1.0 - a) * (1.0 - a))))
    }

    fn l1_total(&self) -> Option<f64> {
        let a = self.alpha;
        Some(a * (1.0 + a) / ((1.0 - a) * (1.0 - a)))
    }
}

#[derive(Debug)]
struct Constant {
    c: f64,
    exact: BigRational,
}

impl InfiniteMatrix for Constant {
    fn entry(&self, _i: u64, _j: u64) -> f64 {
        self.c
    }

    fn entry_exact(&self, _i: u64, _j: u64) -> Option<BigRational> {
        Some(self.exact.clone())
    }
}

struct FnKernel<F>(F);

impl<F> fmt::Debug for FnKernel<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("FnKernel")
    }
}

impl<F> InfiniteMatrix for FnKernel<F>
where
    F: Fn(u64, u64) -> f64 + Send + Sync,
{
    fn entry(&self, i: u64, j: u64) -> f64 {
        (self.0)(i, j)
    }
}

/// A named infinite matrix with its structural metadata.
#[derive(Debug, Clone)]
pub struct KernelHandle {
    name: String,
    params: Vec<(String, String)>,
    symmetric: bool,
    psd_by_construction: bool,
    schedule: Option<BlockSchedule>,
    matrix: Arc<dyn InfiniteMatrix>,
}

impl KernelHandle {
    /// Wraps an arbitrary entry function.
    pub fn from_fn<F>(name: impl Into<String>, symmetric: bool, psd_by_construction: bool, f: F) -> Self
    where
        F: Fn(u64, u64) -> f64 + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            params: Vec::new(),
            symmetric,
            psd_by_construction,
            schedule: None,
            matrix: Arc::new(FnKernel(f)),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn params(&self) -> &[(String, String)] {
        &self.params
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn psd_by_construction(&self) -> bool {
        self.psd_by_construction
    }

    pub fn block_schedule(&self) -> Option<&BlockSchedule> {
        self.schedule.as_ref()
    }

    fn check(i: u64, j: u64) -> Result<()> {
        if i == 0 || j == 0 {
            return Err(Error::IndexOutOfRange {
                index: 0,
                bound: "kernel indices start at 1".into(),
            });
        }
        Ok(())
    }

    pub fn entry(&self, i: u64, j: u64) -> Result<f64> {
        Self::check(i, j)?;
        Ok(self.matrix.entry(i, j))
    }

    pub fn entry_exact(&self, i: u64, j: u64) -> Result<Option<BigRational>> {
        Self::check(i, j)?;
        Ok(self.matrix.entry_exact(i, j))
    }

    pub fn has_exact_entries(&self) -> bool {
        self.matrix.entry_exact(1, 1).is_some()
    }

    pub fn l1_tail_bound(&self, t: u64) -> Option<f64> {
        self.matrix.l1_tail_bound(t)
    }

    pub fn l1_total(&self) -> Option<f64> {
        self.matrix.l1_total()
    }

    /// 1-based columns `lo..hi` that can be non-zero in row `i`, within `1..=t`.
    pub(crate) fn row_support(&self, i: u64, t: u64) -> (u64, u64) {
        if let Some(s) = &self.schedule {
            if let Some((h, _)) = s.locate_row(i) {
                let lo = s.col_offset(h).map_or(u64::MAX, |o| o + 1);
                let hi = match (s.col_offset(h), s.block_cols(h)) {
                    (Some(o), Some(c)) => o.saturating_add(c),
                    _ => u64::MAX,
                };
                return (lo, hi.min(t));
            }
        }
        (1, t)
    }
}

/// Block-diagonal operator with blocks `V(n(p))/(p m n)`; default `p(h) = h`.
pub fn counterexample_v(p_choice: PChoice) -> KernelHandle {
    let schedule = BlockSchedule::new(BlockShape::SignMatrix, p_choice);
    KernelHandle {
        name: "counterexample-v".into(),
        params: vec![("p_of_h".into(), p_choice.as_str().into())],
        symmetric: false,
        psd_by_construction: false,
        schedule: Some(schedule),
        matrix: Arc::new(BlockDiagonal::new(schedule)),
    }
}

/// Symmetric positive semidefinite block-diagonal kernel with blocks
/// `M(n)/(h ‖M(n)‖₁)`, `n = 2^{2p(h)+1}`.
pub fn counterexample_s(p_choice: PChoice) -> KernelHandle {
    let schedule = BlockSchedule::new(BlockShape::Gram, p_choice);
    KernelHandle {
        name: "counterexample-s".into(),
        params: vec![("p_of_h".into(), p_choice.as_str().into())],
        symmetric: true,
        psd_by_construction: true,
        schedule: Some(schedule),
        matrix: Arc::new(BlockDiagonal::new(schedule)),
    }
}

/// `K_ij = α^{max(i,j)}` for `0 < α < 1`.
pub fn stable_spline(alpha: f64) -> Result<KernelHandle> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "stable spline needs 0 < alpha < 1, got {alpha}"
        )));
    }
    Ok(KernelHandle {
        name: "stable-spline".into(),
        params: vec![("alpha".into(), alpha.to_string())],
        symmetric: true,
        psd_by_construction: true,
        schedule: None,
        matrix: Arc::new(StableSpline { alpha }),
    })
}

/// `K_ij = c` for `c > 0`.
pub fn constant_kernel(c: f64) -> Result<KernelHandle> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "constant kernel needs a finite c > 0, got {c}"
        )));
    }
    let exact = BigRational::from_float(c).expect("finite");
    Ok(KernelHandle {
        name: "constant".into(),
        params: vec![("c".into(), c.to_string())],
        symmetric: true,
        psd_by_construction: true,
        schedule: None,
        matrix: Arc::new(Constant { c, exact }),
    })
}

/// Leading `T × T` block of a kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteSection {
    size: usize,
    matrix: DenseMatrix,
    declared_symmetric: bool,
}

impl FiniteSection {
    /// Wraps an explicit square matrix, declared symmetric.
    pub fn from_matrix(matrix: DenseMatrix) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::DimensionMismatch {
                expected: matrix.rows(),
                got: matrix.cols(),
            });
        }
        Ok(Self {
            size: matrix.rows(),
            matrix,
            declared_symmetric: true,
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.matrix
    }

    pub fn declared_symmetric(&self) -> bool {
        self.declared_symmetric
    }
}

/// First `T` rows and columns; exact entries where the kernel has them,
/// otherwise the exact image of the float entries.
pub fn finite_section(k: &KernelHandle, t: usize) -> Result<FiniteSection> {
    if t == 0 {
        return Err(Error::InvalidParameter("section size must be at least 1".into()));
    }
    if t > SECTION_CAP {
        return Err(Error::CapExceeded {
            what: format!("a {t}×{t} dense section"),
            cap: SECTION_CAP.to_string(),
        });
    }
    let mut err = None;
    let matrix = DenseMatrix::from_fn(t, t, |i, j| {
        let (i, j) = (i as u64 + 1, j as u64 + 1);
        match k.matrix.entry_exact(i, j) {
            Some(x) => x,
            None => {
                let v = k.matrix.entry(i, j);
                BigRational::from_float(v).unwrap_or_else(|| {
                    err = Some(Error::Domain(format!("non-finite entry at ({i}, {j})")));
                    BigRational::zero()
                })
            }
        }
    })?;
    if let Some(e) = err {
        return Err(e);
    }
    Ok(FiniteSection {
        size: t,
        matrix,
        declared_symmetric: k.symmetric,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsdReport {
    pub passed: bool,
    pub min_eigenvalue: f64,
    /// Largest eigenvalue modulus.
    pub spectral_scale: f64,
}

/// Passes iff `λ_min ≥ −tol · max(1, spectral scale)`. Refuses sections not
/// declared symmetric, and sections whose symmetry fails re-verification.
pub fn psd_check(s: &FiniteSection, tol: f64) -> Result<PsdReport> {
    if !s.declared_symmetric {
        return Err(Error::Contract(
            "psd_check needs a section of a symmetric kernel".into(),
        ));
    }
    if !s.matrix.is_symmetric() {
        return Err(Error::Contract("section is not symmetric".into()));
    }
    let n = s.size;
    let values = s.matrix.to_f64();
    let dense = DMatrix::from_row_slice(n, n, &values);
    let ev = dense.symmetric_eigenvalues();
    let min_eigenvalue = ev.iter().copied().fold(f64::INFINITY, f64::min);
    let spectral_scale = ev.iter().map(|x| x.abs()).fold(0.0, f64::max);
    Ok(PsdReport {
        passed: min_eigenvalue >= -tol * spectral_scale.max(1.0),
        min_eigenvalue,
        spectral_scale,
    })
}

/// Float view of the `(∞,1)` norm of block `h` for reporting.
pub fn block_opnorm_f64(schedule: &BlockSchedule, h: u64) -> Option<f64> {
    rational_to_f64(&schedule.block_opnorm(h).ok()?)
}

/// `n(p(h))` as a float, if representable.
pub fn block_size_f64(schedule: &BlockSchedule, h: u64) -> Option<f64> {
    biguint_to_f64(&schedule.sign_spec(h).ok()?.rows_big())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::{frac, int};
    use crate::finite_norms::{l1_entrywise, opnorm_inf1_bruteforce};

    fn harmonic(t: u64) -> BigRational {
        (1..=t).fold(BigRational::zero(), |acc, h| acc + frac(1, h as i64))
    }

    #[test]
    fn counterexample_v_entries() {
        let k = counterexample_v(PChoice::Linear);
        assert!(!k.is_symmetric());
        assert_eq!(k.entry_exact(1, 1).unwrap().unwrap(), frac(1, 24));
        assert_eq!(k.entry(1, 1).unwrap(), 1.0 / 24.0);
        // row 8 of block 1 is all −1
        assert_eq!(k.entry_exact(8, 3).unwrap().unwrap(), frac(-1, 24));
        // block 2 starts at row 9, column 4 with scale 1/(2·5·32)
        assert_eq!(k.entry_exact(9, 4).unwrap().unwrap(), frac(1, 320));
        assert_eq!(k.entry(9, 1).unwrap(), 0.0);
        assert_eq!(k.entry(1, 4).unwrap(), 0.0);
        let s = k.block_schedule().unwrap();
        assert_eq!(s.block_l1_mass(1).unwrap(), int(1));
        for p in 1..=10u64 {
            assert_eq!(s.block_l1_mass(p).unwrap(), frac(1, p as i64));
        }
    }

    #[test]
    fn counterexample_v_block_mass_from_entries() {
        let k = counterexample_v(PChoice::Linear);
        let s = k.block_schedule().unwrap();
        for h in 1..=2 {
            let (r0, c0) = (s.row_offset(h).unwrap(), s.col_offset(h).unwrap());
            let mass = (1..=s.block_rows(h).unwrap())
                .flat_map(|i| (1..=s.block_cols(h).unwrap()).map(move |j| (i, j)))
                .fold(BigRational::zero(), |acc, (i, j)| {
                    acc + num_traits::Signed::abs(&k.entry_exact(r0 + i, c0 + j).unwrap().unwrap())
                });
            assert_eq!(mass, s.block_l1_mass(h).unwrap());
        }
    }

    #[test]
    fn counterexample_v_block_opnorm() {
        let s = BlockSchedule::new(BlockShape::SignMatrix, PChoice::Linear);
        for p in 1..=10u64 {
            let spec = SignMatrixSpec::new(p as u32).unwrap();
            let expected = BigRational::new(
                sign_matrix::opnorm_inf1_closed(&spec).into(),
                BigInt::from(spec.rows_big()) * spec.m() * p,
            );
            assert_eq!(s.block_opnorm(p).unwrap(), expected);
        }
        for p in [30u64, 40] {
            let v = block_opnorm_f64(&s, p).unwrap();
            let target = 1.0 / (p as f64 * (std::f64::consts::PI * p as f64).sqrt());
            assert!((v / target - 1.0).abs() < 0.1);
        }
    }

    #[test]
    fn counterexample_s_entries() {
        let k = counterexample_s(PChoice::Linear);
        assert!(k.is_symmetric() && k.psd_by_construction());
        assert_eq!(k.entry_exact(1, 1).unwrap().unwrap(), frac(1, 32));
        assert_eq!(k.entry(1, 9).unwrap(), 0.0);
        assert_eq!(k.entry_exact(1, 9).unwrap().unwrap(), int(0));
        // block 2 diagonal: 5/(2·1920)
        assert_eq!(k.entry_exact(9, 9).unwrap().unwrap(), frac(5, 3840));
        let s = k.block_schedule().unwrap();
        for h in 1..=10u64 {
            assert_eq!(s.block_l1_mass(h).unwrap(), frac(1, h as i64));
        }
    }

    #[test]
    fn counterexample_s_quadratic_schedule() {
        let k = counterexample_s(PChoice::Quadratic);
        let s = k.block_schedule().unwrap();
        assert_eq!(s.p_of_h(2).unwrap(), 4);
        assert_eq!(s.block_rows(2), Some(512));
        assert_eq!(s.block_l1_mass(3).unwrap(), frac(1, 3));
        // entry (9, 9) is the diagonal of M(512) = 9, scaled by 1/(2 ‖M‖₁)
        let l1 = gram::l1_closed(&GramSpec::from_p(4).unwrap());
        assert_eq!(
            k.entry_exact(9, 9).unwrap().unwrap(),
            BigRational::new(BigInt::from(9), BigInt::from(l1) * 2)
        );
    }

    #[test]
    fn harmonic_mass_of_counterexample_s() {
        let s = BlockSchedule::new(BlockShape::Gram, PChoice::Linear);
        let mut cumulative = BigRational::zero();
        for t in 1..=20u64 {
            cumulative += s.block_l1_mass(t).unwrap();
            assert_eq!(cumulative, harmonic(t));
        }
        assert_eq!(harmonic(10), frac(7381, 2520));
    }

    #[test]
    fn counterexample_s_opnorm_increments_are_dominated() {
        let s = BlockSchedule::new(BlockShape::Gram, PChoice::Linear);
        let mut total = 0.0;
        let mut prev = f64::INFINITY;
        for h in 1..=40u64 {
            let inc = s.block_opnorm(h).unwrap();
            // n / (h W) with W = ‖M‖₁ / n
            let spec = SignMatrixSpec::new(h as u32).unwrap();
            let w = sign_matrix::opnorm_inf1_closed(&spec);
            assert_eq!(inc, BigRational::new(spec.rows_big().into(), BigInt::from(w) * h));
            let v = rational_to_f64(&inc).unwrap();
            assert!(v < prev);
            assert!(v <= 1.0 / (h as f64 * (h as f64).sqrt()));
            prev = v;
            total += v;
        }
        assert!(total < 2.613); // ζ(3/2)
    }

    #[test]
    fn block_mapping_is_a_bijection() {
        for k in [counterexample_v(PChoice::Linear), counterexample_s(PChoice::Linear), counterexample_s(PChoice::Quadratic)] {
            let s = *k.block_schedule().unwrap();
            for i in 1..=5000u64 {
                let (h, l) = s.locate_row(i).unwrap();
                assert_eq!(s.global_row(h, l), Some(i));
                let (h, l) = s.locate_col(i).unwrap();
                assert_eq!(s.global_col(h, l), Some(i));
            }
            assert!(s.locate_row(0).is_none());
        }
    }

    #[test]
    fn very_large_indices_resolve() {
        let s = BlockSchedule::new(BlockShape::Gram, PChoice::Linear);
        let (h, _) = s.locate_row(u64::MAX).unwrap();
        assert!(h >= 30);
        let k = counterexample_s(PChoice::Linear);
        assert!(k.entry(u64::MAX, u64::MAX).unwrap() > 0.0);
    }

    #[test]
    fn stable_spline_entries_and_mass() {
        let k = stable_spline(0.5).unwrap();
        assert_eq!(k.entry(2, 3).unwrap(), 0.125);
        for (i, j) in (1..=100u64).map(|x| (x * 7 % 31 + 1, x * 13 % 17 + 1)) {
            assert_eq!(k.entry(i, j).unwrap(), k.entry(j, i).unwrap());
        }
        // partial sums of α^k (2k − 1)
        let partial: f64 = (1..200).map(|k| 0.5f64.powi(k) * (2 * k - 1) as f64).sum();
        assert!((partial - 3.0).abs() < 1e-12);
        assert!((k.l1_total().unwrap() - 3.0).abs() < 1e-12);
        let k9 = stable_spline(0.9).unwrap();
        assert!((k9.l1_total().unwrap() - 171.0).abs() < 1e-9);
        for t in [0u64, 5, 50, 200] {
            let partial: f64 = (1..=t as i32).map(|k| 0.9f64.powi(k) * (2 * k - 1) as f64).sum();
            assert!((partial + k9.l1_tail_bound(t).unwrap() - 171.0).abs() < 1e-9);
        }
        assert!(stable_spline(1.0).is_err());
        assert!(stable_spline(0.0).is_err());
    }

    #[test]
    fn constant_kernel_entries() {
        let k = constant_kernel(2.5).unwrap();
        assert_eq!(k.entry(5, 7).unwrap(), 2.5);
        assert!(constant_kernel(0.0).is_err());
        let sec = finite_section(&constant_kernel(1.0).unwrap(), 3).unwrap();
        assert_eq!(l1_entrywise(sec.matrix()), int(9));
        let r = psd_check(&sec, PSD_TOLERANCE).unwrap();
        assert!(r.passed);
        assert!(r.min_eigenvalue.abs() < 1e-12);
        let u = vec![1.0; 3];
        assert_eq!(sec.matrix().apply_l1_f64(&u).unwrap(), 9.0);
    }

    #[test]
    fn zero_index_is_rejected() {
        let k = stable_spline(0.5).unwrap();
        assert!(k.entry(0, 1).is_err());
    }

    #[test]
    fn sections() {
        let s = finite_section(&counterexample_s(PChoice::Linear), 8).unwrap();
        let m8 = gram::to_dense(&GramSpec::from_p(1).unwrap()).unwrap();
        assert_eq!(s.matrix(), &m8.scaled(&frac(1, 96)));

        let s = finite_section(&stable_spline(0.5).unwrap(), 2).unwrap();
        assert_eq!(
            s.matrix(),
            &DenseMatrix::new(2, 2, vec![frac(1, 2), frac(1, 4), frac(1, 4), frac(1, 4)]).unwrap()
        );

        let k = constant_kernel(3.0).unwrap();
        let s = finite_section(&k, 1).unwrap();
        assert_eq!(s.matrix().get(0, 0), &int(3));

        assert!(finite_section(&k, 0).is_err());
        assert!(matches!(finite_section(&k, 4097), Err(Error::CapExceeded { .. })));
    }

    #[test]
    fn psd_checks() {
        let ks = counterexample_s(PChoice::Linear);
        for t in [8, 40, 168] {
            let r = psd_check(&finite_section(&ks, t).unwrap(), PSD_TOLERANCE).unwrap();
            assert!(r.passed, "T = {t}: {r:?}");
        }
        let r = psd_check(&finite_section(&stable_spline(0.9).unwrap(), 16).unwrap(), PSD_TOLERANCE).unwrap();
        assert!(r.passed);

        let bad = FiniteSection::from_matrix(DenseMatrix::from_i64(2, 2, &[1, 2, 2, 1]).unwrap()).unwrap();
        let r = psd_check(&bad, PSD_TOLERANCE).unwrap();
        assert!(!r.passed);
        assert!((r.min_eigenvalue + 1.0).abs() < 1e-12);

        let v = finite_section(&counterexample_v(PChoice::Linear), 8).unwrap();
        assert!(matches!(psd_check(&v, PSD_TOLERANCE), Err(Error::Contract(_))));
        let asym = FiniteSection::from_matrix(DenseMatrix::from_i64(2, 2, &[1, 2, 0, 1]).unwrap()).unwrap();
        assert!(matches!(psd_check(&asym, PSD_TOLERANCE), Err(Error::Contract(_))));
    }

    #[test]
    fn custom_kernels() {
        let k = KernelHandle::from_fn("diag", true, true, |i, j| if i == j { 1.0 / (i * i) as f64 } else { 0.0 });
        assert_eq!(k.entry(2, 2).unwrap(), 0.25);
        assert!(!k.has_exact_entries());
        let s = finite_section(&k, 4).unwrap();
        assert!(psd_check(&s, PSD_TOLERANCE).unwrap().passed);
    }

    #[test]
    fn section_of_first_block_has_closed_form_norm() {
        let ks = counterexample_s(PChoice::Linear);
        let s = finite_section(&ks, 8).unwrap();
        let r = opnorm_inf1_bruteforce(s.matrix()).unwrap();
        assert_eq!(r.opnorm_inf1, ks.block_schedule().unwrap().block_opnorm(1).unwrap());
        assert_eq!(r.opnorm_inf1, frac(2, 3));
    }
}
