//! Upper bounds on `λ(k)`, the smallest ratio `‖M‖_{∞,1} / ‖M‖₁` over
//! non-zero `k × k` positive semidefinite matrices.
//!
//! Nothing here computes `λ(k)` exactly. Every record is an upper bound
//! backed by a concrete witness matrix whose ratio can be re-verified.

use nalgebra::DMatrix;
use num_bigint::BigUint;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::exact::{binomial, frac, int, pow2, rational_to_f64};
use crate::finite_norms::{norm_ratio, opnorm_inf1_bruteforce, DenseMatrix};
use crate::gram::{self, GramSpec};

/// Largest size handled by [`lambda_upper_search`].
pub const SEARCH_K_CAP: usize = 12;
pub const DEFAULT_SAMPLES: usize = 10_000;
pub const DEFAULT_SEED: u64 = 20_240_601;
pub const EQUICORRELATION_STEPS: u32 = 200;
/// Random factors are standard normals rounded to this many units, so every
/// sample `A Aᵀ` is an exact integer matrix.
const RANDOM_FACTOR_SCALE: f64 = 256.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SearchMethod {
    Exhaustive,
    FamilyScan,
    RandomSearch,
    GramEmbedding,
    Fig1Curve,
}

impl SearchMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            SearchMethod::Exhaustive => "exhaustive",
            SearchMethod::FamilyScan => "family_scan",
            SearchMethod::RandomSearch => "random_search",
            SearchMethod::GramEmbedding => "gram_embedding",
            SearchMethod::Fig1Curve => "fig1_curve",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum WitnessFamily {
    /// `(1 − ρ) I + ρ J`
    Equicorrelation { rho: BigRational },
    /// `A Aᵀ` for the sample drawn with this index.
    RandomGram { seed: u64, sample: usize },
    /// `M(2^{2p+1})` after leading zero rows/columns.
    GramEmbedding { p: u32 },
    /// Any of the above after `padding` leading zero rows/columns.
    ZeroPadded { padding: usize, inner: Box<WitnessFamily> },
}

impl WitnessFamily {
    pub fn describe(&self) -> String {
        match self {
            WitnessFamily::Equicorrelation { rho } => format!("equicorrelation(rho={rho})"),
            WitnessFamily::RandomGram { seed, sample } => {
                format!("random_gram(seed={seed},sample={sample})")
            }
            WitnessFamily::GramEmbedding { p } => format!("gram(p={p})"),
            WitnessFamily::ZeroPadded { padding, inner } => {
                format!("zero_padded({padding},{})", inner.describe())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Witness {
    pub family: WitnessFamily,
    /// Explicit matrix, kept for sizes up to the search cap.
    pub matrix: Option<DenseMatrix>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LambdaBoundRecord {
    pub k: u64,
    /// `λ(k) ≤ upper_bound`.
    pub upper_bound: BigRational,
    pub witness: Witness,
    pub method: SearchMethod,
}

impl LambdaBoundRecord {
    pub fn value(&self) -> f64 {
        rational_to_f64(&self.upper_bound).unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchOptions {
    pub samples: usize,
    pub seed: u64,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            samples: DEFAULT_SAMPLES,
            seed: DEFAULT_SEED,
        }
    }
}

pub fn equicorrelation(k: usize, rho: &BigRational) -> Result<DenseMatrix> {
    DenseMatrix::from_fn(k, k, |i, j| if i == j { int(1) } else { rho.clone() })
}

/// Eigenvalues of the equicorrelation matrix are `1 − ρ` and `1 + (k − 1)ρ`.
fn equicorrelation_is_psd(k: usize, rho: &BigRational) -> bool {
    *rho <= int(1) && int(1) + rho * int(k as i64 - 1) >= BigRational::zero()
}

fn padded_gram(p: u32, k: usize) -> Result<DenseMatrix> {
    let g = GramSpec::from_p(p)?;
    let n = g.n().expect("small p") as usize;
    if n > k {
        return Err(Error::InvalidParameter(format!("M({n}) does not fit in size {k}")));
    }
    let offset = k - n;
    DenseMatrix::from_fn(k, k, |i, j| {
        if i < offset || j < offset {
            BigRational::zero()
        } else {
            int(gram::popcount_entry(g.m(), (i - offset) as u64, (j - offset) as u64))
        }
    })
}

fn random_gram(k: usize, seed: u64, sample: usize) -> Result<DenseMatrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(sample as u64);
    let a: Vec<i64> = (0..k * k)
        .map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            (z * RANDOM_FACTOR_SCALE).round() as i64
        })
        .collect();
    let mut m = vec![0i64; k * k];
    for i in 0..k {
        for j in 0..k {
            m[i * k + j] = (0..k).map(|t| a[i * k + t] * a[j * k + t]).sum();
        }
    }
    DenseMatrix::from_i64(k, k, &m)
}

struct Candidate {
    ratio: BigRational,
    family: WitnessFamily,
    matrix: DenseMatrix,
    method: SearchMethod,
}

fn better(best: Option<Candidate>, c: Candidate) -> Option<Candidate> {
    match best {
        Some(b) if b.ratio <= c.ratio => Some(b),
        _ => Some(c),
    }
}

fn scan_equicorrelation(k: usize) -> Result<Option<Candidate>> {
    if k < 2 {
        return Ok(None);
    }
    let lo = frac(-1, k as i64 - 1);
    let width = int(1) - &lo;
    let mut best = None;
    for s in 0..=EQUICORRELATION_STEPS {
        let rho = &lo + &width * frac(s as i64, EQUICORRELATION_STEPS as i64);
        if !equicorrelation_is_psd(k, &rho) {
            continue;
        }
        let m = equicorrelation(k, &rho)?;
        let ratio = norm_ratio(&m)?;
        best = better(
            best,
            Candidate {
                ratio,
                family: WitnessFamily::Equicorrelation { rho },
                matrix: m,
                method: SearchMethod::FamilyScan,
            },
        );
    }
    Ok(best)
}

fn scan_random(k: usize, opts: SearchOptions) -> Result<Option<Candidate>> {
    let best = (0..opts.samples)
        .into_par_iter()
        .map(|sample| -> Result<Option<(BigRational, usize)>> {
            let m = random_gram(k, opts.seed, sample)?;
            if m.is_zero() {
                return Ok(None);
            }
            Ok(Some((norm_ratio(&m)?, sample)))
        })
        .try_reduce(
            || None,
            |a, b| {
                Ok(match (a, b) {
                    (Some(x), Some(y)) => Some(if (&y.0, y.1) < (&x.0, x.1) { y } else { x }),
                    (x, None) => x,
                    (None, y) => y,
                })
            },
        )?;
    best.map(|(ratio, sample)| {
        Ok(Candidate {
            ratio,
            family: WitnessFamily::RandomGram {
                seed: opts.seed,
                sample,
            },
            matrix: random_gram(k, opts.seed, sample)?,
            method: SearchMethod::RandomSearch,
        })
    })
    .transpose()
}

fn verify_witness(m: &DenseMatrix, bound: &BigRational) -> Result<()> {
    if !m.is_symmetric() {
        return Err(Error::InternalConsistency("witness is not symmetric".into()));
    }
    let n = m.rows();
    let dense = DMatrix::from_row_slice(n, n, &m.to_f64());
    let ev = dense.symmetric_eigenvalues();
    let scale = ev.iter().map(|x| x.abs()).fold(1.0, f64::max);
    if ev.iter().any(|&x| x < -1e-8 * scale) {
        return Err(Error::InternalConsistency("witness is not PSD".into()));
    }
    let r = norm_ratio(m)?;
    let diff = rational_to_f64(&(&r - bound)).unwrap_or(f64::INFINITY);
    if diff.abs() > 1e-10 {
        return Err(Error::InternalConsistency(format!(
            "witness ratio {r} does not reproduce the bound {bound}"
        )));
    }
    if *bound < BigRational::zero() || *bound > int(1) {
        return Err(Error::InternalConsistency(format!("bound {bound} outside [0, 1]")));
    }
    Ok(())
}

/// Smallest ratio found over random PSD samples, the equicorrelation family
/// and (for `k ≥ 8`) the embedded Gram matrix `M(8)`. Deterministic in the
/// seed.
///
/// For `k ≤ 2` no PSD matrix has ratio below 1: choosing `u₁u₂ = sign(M₁₂)`
/// aligns every term. Those records are tagged [`SearchMethod::Exhaustive`].
pub fn lambda_upper_search(k: usize, opts: SearchOptions) -> Result<LambdaBoundRecord> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    if k > SEARCH_K_CAP {
        return Err(Error::Budget(format!(
            "lambda_upper_search is capped at k = {SEARCH_K_CAP}; use gram_embedding_bound for k = {k}"
        )));
    }
    let mut best = scan_equicorrelation(k)?;
    if k >= 8 {
        let matrix = padded_gram(1, k)?;
        let ratio = norm_ratio(&matrix)?;
        let family = if k > 8 {
            WitnessFamily::ZeroPadded {
                padding: k - 8,
                inner: Box::new(WitnessFamily::GramEmbedding { p: 1 }),
            }
        } else {
            WitnessFamily::GramEmbedding { p: 1 }
        };
        best = better(
            best,
            Candidate {
                ratio,
                family,
                matrix,
                method: SearchMethod::GramEmbedding,
            },
        );
    }
    if let Some(c) = scan_random(k, opts)? {
        best = better(best, c);
    }
    let best = best.ok_or_else(|| Error::Budget("no candidate was evaluated".into()))?;
    let mut method = best.method;
    if k <= 2 {
        if best.ratio != int(1) {
            return Err(Error::InternalConsistency(format!(
                "found ratio {} < 1 at k = {k}",
                best.ratio
            )));
        }
        method = SearchMethod::Exhaustive;
    }
    verify_witness(&best.matrix, &best.ratio)?;
    Ok(LambdaBoundRecord {
        k: k as u64,
        upper_bound: best.ratio,
        witness: Witness {
            family: best.family,
            matrix: Some(best.matrix),
        },
        method,
    })
}

/// Carries a bound from `k` to `k + 1` through `diag(0, M)`, checking that
/// both norms are unchanged.
pub fn embedding_monotonicity(r: &LambdaBoundRecord) -> Result<LambdaBoundRecord> {
    let m = match &r.witness.matrix {
        Some(m) => m.clone(),
        None => materialize(&r.witness.family, r.k as usize)?,
    };
    let padded = m.embed_after_zero();
    let before = opnorm_inf1_bruteforce(&m)?;
    let after = opnorm_inf1_bruteforce(&padded)?;
    if before.opnorm_inf1 != after.opnorm_inf1 || before.l1_entrywise != after.l1_entrywise {
        return Err(Error::InternalConsistency(
            "zero padding changed a norm".into(),
        ));
    }
    let family = match &r.witness.family {
        WitnessFamily::ZeroPadded { padding, inner } => WitnessFamily::ZeroPadded {
            padding: padding + 1,
            inner: inner.clone(),
        },
        other => WitnessFamily::ZeroPadded {
            padding: 1,
            inner: Box::new(other.clone()),
        },
    };
    Ok(LambdaBoundRecord {
        k: r.k + 1,
        upper_bound: r.upper_bound.clone(),
        witness: Witness {
            family,
            matrix: Some(padded),
        },
        method: r.method,
    })
}

fn materialize(family: &WitnessFamily, k: usize) -> Result<DenseMatrix> {
    match family {
        WitnessFamily::Equicorrelation { rho } => equicorrelation(k, rho),
        WitnessFamily::GramEmbedding { p } => padded_gram(*p, k),
        WitnessFamily::ZeroPadded { padding, inner } => {
            let mut m = materialize(inner, k - padding)?;
            for _ in 0..*padding {
                m = m.embed_after_zero();
            }
            Ok(m)
        }
        WitnessFamily::RandomGram { .. } => Err(Error::InvalidParameter(
            "random witnesses must carry their matrix".into(),
        )),
    }
}

/// Bound for any `k ≥ 8` from the largest `M(2^{2p+1})` fitting in `k`.
pub fn gram_embedding_bound(k: u64) -> Result<LambdaBoundRecord> {
    if k < 8 {
        return Err(Error::InvalidParameter(format!("no Gram block fits in size {k}")));
    }
    let p = (63 - k.leading_zeros() - 1) / 2;
    let g = GramSpec::from_p(p)?;
    let n = g.n().expect("n <= k");
    let matrix = if k as usize <= SEARCH_K_CAP {
        Some(padded_gram(p, k as usize)?)
    } else {
        None
    };
    let family = WitnessFamily::GramEmbedding { p };
    let family = if k > n {
        WitnessFamily::ZeroPadded {
            padding: (k - n) as usize,
            inner: Box::new(family),
        }
    } else {
        family
    };
    Ok(LambdaBoundRecord {
        k,
        upper_bound: gram::ratio(&g).exact,
        witness: Witness { family, matrix },
        method: SearchMethod::GramEmbedding,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fig1Row {
    pub p: u32,
    /// `n(p) = 2^{2p+1}`
    pub n: BigUint,
    /// `sqrt(π) / sqrt(2 log2 n(p) − 2)`
    pub bound: f64,
    pub gram_ratio: BigRational,
    pub gram_ratio_value: f64,
}

impl Fig1Row {
    pub fn dominates_gram_ratio(&self) -> bool {
        self.gram_ratio_value <= self.bound
    }
}

pub fn fig1_bound(p: u32) -> f64 {
    let log2_n = (2 * p + 1) as f64;
    std::f64::consts::PI.sqrt() / (2.0 * log2_n - 2.0).sqrt()
}

/// One row per `p = 1..=p_max`; the curve is constant on `[n(p), n(p+1))`.
pub fn fig1_curve(p_max: u32) -> Result<Vec<Fig1Row>> {
    if p_max == 0 {
        return Err(Error::InvalidParameter("p_max must be at least 1".into()));
    }
    (1..=p_max)
        .map(|p| {
            let g = GramSpec::from_p(p)?;
            let r = gram::ratio(&g);
            Ok(Fig1Row {
                p,
                n: pow2(g.m() as u64),
                bound: fig1_bound(p),
                gram_ratio: r.exact,
                gram_ratio_value: r.value,
            })
        })
        .collect()
}

/// First `p₀` such that the curve dominates the exact Gram ratio for every
/// `p` in `p₀..=p_max`.
pub fn fig1_dominance_start(rows: &[Fig1Row]) -> Option<u32> {
    let mut start = None;
    for r in rows {
        if r.dominates_gram_ratio() {
            start.get_or_insert(r.p);
        } else {
            start = None;
        }
    }
    start
}

#[derive(Debug, Clone, PartialEq)]
pub struct VanishingReport {
    /// `(p, exact Gram ratio at n(p), float value)`
    pub rows: Vec<(u32, BigRational, f64)>,
    pub monotone_non_increasing: bool,
    pub first_below_tenth: u32,
    pub first_below_hundredth: u32,
}

/// Smallest `p` whose exact Gram ratio `2^m / (2(p+1) C(m, p+1))` is below
/// `eps`. The binomial is updated incrementally, so large answers are cheap.
pub fn first_p_below(eps: &BigRational) -> Result<u32> {
    if !eps.is_positive() {
        return Err(Error::InvalidParameter("threshold must be positive".into()));
    }
    let a = eps.numer().magnitude().clone();
    let b = eps.denom().magnitude().clone();
    let mut p: u64 = 1;
    let mut central = binomial(3, 2);
    loop {
        let m = 2 * p + 1;
        let opnorm = &central * (2 * (p + 1));
        if (BigUint::one() << m) * &b < &a * &opnorm {
            return Ok(p as u32);
        }
        // C(2p+3, p+2) = C(2p+1, p+1) (2p+3)(2p+2) / ((p+2)(p+1))
        central = central * ((2 * p + 3) * (2 * p + 2)) / ((p + 2) * (p + 1));
        p += 1;
        if p > u32::MAX as u64 / 2 {
            return Err(Error::Budget("threshold too small".into()));
        }
    }
}

/// Tabulates the Gram-family bounds `λ(n(p)) ≤ ratio(p)` and locates the
/// first `p` below `0.1` and `0.01`.
pub fn lambda_vanishes_evidence(p_max: u32) -> Result<VanishingReport> {
    if p_max < 3 {
        return Err(Error::InvalidParameter("p_max must be at least 3".into()));
    }
    let rows: Vec<(u32, BigRational, f64)> = (1..=p_max)
        .map(|p| {
            let r = gram::ratio(&GramSpec::from_p(p)?);
            Ok((p, r.exact, r.value))
        })
        .collect::<Result<_>>()?;
    let monotone_non_increasing = rows.windows(2).all(|w| w[1].1 <= w[0].1);
    Ok(VanishingReport {
        rows,
        monotone_non_increasing,
        first_below_tenth: first_p_below(&frac(1, 10))?,
        first_below_hundredth: first_p_below(&frac(1, 100))?,
    })
}
