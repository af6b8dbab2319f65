//! Finite-horizon diagnostics for the stability condition
//! `Σ_i |Σ_j K_ij u_j| < ∞ for every bounded u`.
//!
//! Finite truncations cannot decide stability in general. What they can do:
//! one test input with divergent output certifies instability, a closed-form
//! tail bound certifies absolute summability, and for block-diagonal kernels
//! the exact block norms show a divergent entrywise mass next to a summable
//! operator norm. Anything else is reported as inconclusive.

use std::sync::OnceLock;

use num_rational::BigRational;
use num_traits::{Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::exact::rational_to_f64;
use crate::finite_norms::{l1_entrywise, opnorm_inf1_bruteforce, DenseMatrix};
use crate::kernels::{counterexample_s, counterexample_v, finite_section, KernelHandle, PChoice};

/// Largest truncation evaluated by brute-force vertex enumeration.
pub const BRUTE_FORCE_T_CAP: u64 = 20;
/// Largest truncation for exact rational probe sums.
pub const EXACT_PROBE_T_CAP: u64 = 512;
/// Largest truncation for witness probes on block kernels.
pub const WITNESS_T_CAP: u64 = 4096;
/// Minimum `R²` for accepting a growth fit.
pub const FIT_R2_THRESHOLD: f64 = 0.99;
/// Minimum number of sample points for a growth fit.
pub const FIT_MIN_POINTS: usize = 5;
/// Smallest power-law exponent labelled polynomial divergence.
pub const POLY_EXPONENT_MIN: f64 = 0.5;
/// Relative last-step increment below which a sequence looks convergent.
pub const CONVERGENCE_TOLERANCE: f64 = 1e-3;
/// Relative tail mass accepted as a summability certificate.
pub const TAIL_CERTIFICATE_TOLERANCE: f64 = 1e-6;
pub const DEFAULT_SEED: u64 = 0x5eed_0001;

/// Bounded test sequence `u` with `‖u‖∞ = 1`.
#[derive(Debug, Clone, PartialEq)]
pub enum TestInput {
    AllOnes,
    /// `u_j = (−1)^{j+1}`
    Alternating,
    /// Independent uniform signs from a seeded generator.
    SignPattern { seed: u64 },
    Explicit(Vec<f64>),
}

impl TestInput {
    pub fn label(&self) -> String {
        match self {
            TestInput::AllOnes => "all_ones".into(),
            TestInput::Alternating => "alternating".into(),
            TestInput::SignPattern { seed } => format!("sign_pattern({seed})"),
            TestInput::Explicit(_) => "explicit".into(),
        }
    }

    /// First `len` entries.
    pub fn values(&self, len: usize) -> Result<Vec<f64>> {
        match self {
            TestInput::AllOnes => Ok(vec![1.0; len]),
            TestInput::Alternating => Ok((0..len).map(|j| if j % 2 == 0 { 1.0 } else { -1.0 }).collect()),
            TestInput::SignPattern { seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                Ok((0..len).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect())
            }
            TestInput::Explicit(v) => {
                if v.len() < len {
                    return Err(Error::DimensionMismatch {
                        expected: len,
                        got: v.len(),
                    });
                }
                if v.iter().any(|x| x.is_nan() || x.abs() > 1.0) {
                    return Err(Error::InvalidParameter("test input entries must lie in [-1, 1]".into()));
                }
                if !v.iter().any(|x| x.abs() == 1.0) {
                    return Err(Error::InvalidParameter("test input must have sup norm 1".into()));
                }
                Ok(v[..len].to_vec())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbePoint {
    /// Truncation size `T` or block count `t`.
    pub index: u64,
    pub value: f64,
    pub exact: Option<BigRational>,
}

impl ProbePoint {
    fn exact(index: u64, x: BigRational) -> Self {
        Self {
            index,
            value: rational_to_f64(&x).unwrap_or(f64::INFINITY),
            exact: Some(x),
        }
    }

    fn float(index: u64, value: f64) -> Self {
        Self {
            index,
            value,
            exact: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum IndexKind {
    Truncation,
    Block,
}

impl IndexKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            IndexKind::Truncation => "T",
            IndexKind::Block => "block",
        }
    }
}

fn check_increasing(t_list: &[u64]) -> Result<()> {
    if t_list.is_empty() || t_list[0] == 0 || t_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter(
            "truncations must be positive and strictly increasing".into(),
        ));
    }
    Ok(())
}

/// `g(T) = Σ_{i≤T} |Σ_{j≤T} K_ij u_j|` for each `T`. A single input whose
/// `g` diverges certifies instability; bounded `g` along sampled inputs
/// proves nothing.
pub fn witness_probe(k: &KernelHandle, u: &TestInput, t_list: &[u64]) -> Result<Vec<ProbePoint>> {
    check_increasing(t_list)?;
    let t_max = *t_list.last().unwrap();
    let values = u.values(t_max as usize)?;
    let exact_input: Option<Vec<BigRational>> = values.iter().map(|&x| BigRational::from_float(x)).collect();
    let exact_ok = k.has_exact_entries() && exact_input.is_some();
    t_list
        .iter()
        .map(|&t| {
            if exact_ok && t <= EXACT_PROBE_T_CAP {
                let u = exact_input.as_ref().unwrap();
                let mut g = BigRational::zero();
                for i in 1..=t {
                    let (lo, hi) = k.row_support(i, t);
                    let mut s = BigRational::zero();
                    for j in lo..=hi {
                        let e = k.entry_exact(i, j)?.expect("exact kernel");
                        if !e.is_zero() {
                            s += e * &u[(j - 1) as usize];
                        }
                    }
                    g += s.abs();
                }
                Ok(ProbePoint::exact(t, g))
            } else {
                let mut g = 0.0;
                for i in 1..=t {
                    let (lo, hi) = k.row_support(i, t);
                    let s: f64 = (lo..=hi).map(|j| k.entry(i, j).unwrap() * values[(j - 1) as usize]).sum();
                    g += s.abs();
                }
                Ok(ProbePoint::float(t, g))
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GrowthClass {
    ApparentlyConvergent,
    HarmonicLike,
    PolynomiallyDivergent,
    Inconclusive,
}

impl GrowthClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            GrowthClass::ApparentlyConvergent => "apparently_convergent",
            GrowthClass::HarmonicLike => "harmonic_like",
            GrowthClass::PolynomiallyDivergent => "polynomially_divergent",
            GrowthClass::Inconclusive => "inconclusive",
        }
    }

    pub fn is_divergent(&self) -> bool {
        matches!(self, GrowthClass::HarmonicLike | GrowthClass::PolynomiallyDivergent)
    }
}

/// Least-squares line `y ≈ slope · x + intercept` with its `R²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

pub fn fit_line(x: &[f64], y: &[f64]) -> Option<LineFit> {
    let n = x.len();
    if n < 2 || n != y.len() {
        return None;
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Some(LineFit {
        slope,
        intercept: my - slope * mx,
        r2,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrowthFit {
    pub class: GrowthClass,
    /// `ln y` against `ln x`.
    pub power: Option<LineFit>,
    /// `y` against `ln x`.
    pub log: Option<LineFit>,
}

/// Labels a non-decreasing sequence sampled at increasing `x`. In order:
/// fewer than [`FIT_MIN_POINTS`] positive samples → inconclusive; a power
/// law with exponent ≥ [`POLY_EXPONENT_MIN`] and `R² ≥ 0.99` → polynomial
/// divergence; a relative last increment below [`CONVERGENCE_TOLERANCE`] →
/// apparently convergent; a logarithmic fit with `R² ≥ 0.99` and positive
/// slope → harmonic-like; otherwise inconclusive.
pub fn classify_growth(points: &[ProbePoint]) -> GrowthFit {
    let positive: Vec<&ProbePoint> = points.iter().filter(|p| p.value > 0.0 && p.value.is_finite()).collect();
    let lx: Vec<f64> = positive.iter().map(|p| (p.index as f64).ln()).collect();
    let ly: Vec<f64> = positive.iter().map(|p| p.value.ln()).collect();
    let y: Vec<f64> = positive.iter().map(|p| p.value).collect();
    let power = fit_line(&lx, &ly);
    let log = fit_line(&lx, &y);
    let settled = y.len() >= 2 && {
        let n = y.len();
        (y[n - 1] - y[n - 2]).abs() <= CONVERGENCE_TOLERANCE * y[n - 1].abs()
    };
    let class = if positive.len() < FIT_MIN_POINTS {
        GrowthClass::Inconclusive
    } else if power.is_some_and(|f| f.r2 >= FIT_R2_THRESHOLD && f.slope >= POLY_EXPONENT_MIN) {
        GrowthClass::PolynomiallyDivergent
    } else if settled {
        GrowthClass::ApparentlyConvergent
    } else if log.is_some_and(|f| f.r2 >= FIT_R2_THRESHOLD && f.slope > 0.0) {
        GrowthClass::HarmonicLike
    } else {
        GrowthClass::Inconclusive
    };
    GrowthFit { class, power, log }
}

/// Sampling grid for [`summability_probe`] and [`opnorm_growth`].
#[derive(Debug, Clone, PartialEq)]
pub enum ProbeGrid {
    Truncations(Vec<u64>),
    /// Blocks `1..=t`; needs a block schedule.
    Blocks(u64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummabilityProbe {
    pub kind: IndexKind,
    /// Cumulative entrywise masses.
    pub points: Vec<ProbePoint>,
    pub fit: GrowthFit,
}

fn section_mass(k: &KernelHandle, t: u64) -> Result<ProbePoint> {
    if k.has_exact_entries() && t <= EXACT_PROBE_T_CAP {
        let mut s = BigRational::zero();
        for i in 1..=t {
            let (lo, hi) = k.row_support(i, t);
            for j in lo..=hi {
                s += k.entry_exact(i, j)?.expect("exact kernel").abs();
            }
        }
        Ok(ProbePoint::exact(t, s))
    } else {
        let mut s = 0.0;
        for i in 1..=t {
            let (lo, hi) = k.row_support(i, t);
            s += (lo..=hi).map(|j| k.entry(i, j).unwrap().abs()).sum::<f64>();
        }
        Ok(ProbePoint::float(t, s))
    }
}

/// Cumulative entrywise `ℓ1` masses, exact per block when the kernel has a
/// block schedule and the grid is by blocks.
pub fn summability_probe(k: &KernelHandle, grid: &ProbeGrid) -> Result<SummabilityProbe> {
    let (kind, points) = match grid {
        ProbeGrid::Truncations(ts) => {
            check_increasing(ts)?;
            (
                IndexKind::Truncation,
                ts.iter().map(|&t| section_mass(k, t)).collect::<Result<Vec<_>>>()?,
            )
        }
        ProbeGrid::Blocks(t) => {
            let s = k
                .block_schedule()
                .ok_or_else(|| Error::InvalidParameter(format!("{} has no block schedule", k.name())))?;
            let mut acc = BigRational::zero();
            let mut pts = Vec::new();
            for h in 1..=*t {
                acc += s.block_l1_mass(h)?;
                pts.push(ProbePoint::exact(h, acc.clone()));
            }
            (IndexKind::Block, pts)
        }
    };
    let fit = classify_growth(&points);
    Ok(SummabilityProbe { kind, points, fit })
}

fn additivity_case(blocks: &[DenseMatrix]) -> Result<()> {
    let whole = blocks[1..].iter().fold(blocks[0].clone(), |acc, b| acc.block_diag(b));
    let total = opnorm_inf1_bruteforce(&whole)?;
    let mut opnorm = BigRational::zero();
    let mut l1 = BigRational::zero();
    for b in blocks {
        let r = opnorm_inf1_bruteforce(b)?;
        opnorm += r.opnorm_inf1;
        l1 += r.l1_entrywise;
    }
    if total.opnorm_inf1 != opnorm || total.l1_entrywise != l1 {
        return Err(Error::InternalConsistency(
            "block-diagonal additivity of the norms failed on a dense case".into(),
        ));
    }
    Ok(())
}

fn run_additivity_checks() -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0xadd1);
    for _ in 0..12 {
        let count = rng.random_range(2..=4);
        let blocks: Vec<DenseMatrix> = (0..count)
            .map(|_| {
                let r = rng.random_range(1..=5);
                let c = rng.random_range(1..=4);
                let e: Vec<i64> = (0..r * c).map(|_| rng.random_range(-6..=6)).collect();
                DenseMatrix::from_i64(r, c, &e)
            })
            .collect::<Result<_>>()?;
        additivity_case(&blocks)?;
    }
    // counterexample sections against the structural values
    let v = counterexample_v(PChoice::Linear);
    let sv = v.block_schedule().unwrap();
    let dense = finite_section(&v, 40)?;
    let r = opnorm_inf1_bruteforce(dense.matrix())?;
    if r.opnorm_inf1 != sv.block_opnorm(1)? + sv.block_opnorm(2)?
        || l1_entrywise(dense.matrix()) != sv.block_l1_mass(1)? + sv.block_l1_mass(2)?
    {
        return Err(Error::InternalConsistency(
            "the 40×40 section of counterexample-v does not match its block norms".into(),
        ));
    }
    let s = counterexample_s(PChoice::Linear);
    let ss = s.block_schedule().unwrap();
    let dense = finite_section(&s, 8)?;
    if opnorm_inf1_bruteforce(dense.matrix())?.opnorm_inf1 != ss.block_opnorm(1)? {
        return Err(Error::InternalConsistency(
            "the 8×8 section of counterexample-s does not match its block norm".into(),
        ));
    }
    Ok(())
}

/// Verifies, once per process, that both norms add over diagonal blocks on
/// dense cases before any structural shortcut is used.
pub fn verify_block_additivity() -> Result<()> {
    static CHECKED: OnceLock<Result<()>> = OnceLock::new();
    CHECKED.get_or_init(run_additivity_checks).clone()
}

/// `‖K_T‖_{∞,1}` at each requested point: brute force for `T ≤ 20`, sums of
/// closed-form block norms at block boundaries (or for a block grid).
pub fn opnorm_growth(k: &KernelHandle, grid: &ProbeGrid) -> Result<Vec<ProbePoint>> {
    match grid {
        ProbeGrid::Blocks(t) => {
            let s = k
                .block_schedule()
                .ok_or_else(|| Error::InvalidParameter(format!("{} has no block schedule", k.name())))?;
            verify_block_additivity()?;
            let mut acc = BigRational::zero();
            (1..=*t)
                .map(|h| {
                    acc += s.block_opnorm(h)?;
                    Ok(ProbePoint::exact(h, acc.clone()))
                })
                .collect()
        }
        ProbeGrid::Truncations(ts) => {
            check_increasing(ts)?;
            ts.iter()
                .map(|&t| {
                    if t <= BRUTE_FORCE_T_CAP {
                        let sec = finite_section(k, t as usize)?;
                        return Ok(ProbePoint::exact(t, opnorm_inf1_bruteforce(sec.matrix())?.opnorm_inf1));
                    }
                    let boundary_block = k.block_schedule().and_then(|s| {
                        (1..=64u64).find(|&h| s.row_boundary(h) == Some(t)).map(|h| (s, h))
                    });
                    match boundary_block {
                        Some((s, h)) => {
                            verify_block_additivity()?;
                            let mut acc = BigRational::zero();
                            for b in 1..=h {
                                acc += s.block_opnorm(b)?;
                            }
                            Ok(ProbePoint::exact(t, acc))
                        }
                        None => Err(Error::Budget(format!(
                            "‖K_T‖_(∞,1) at T = {t}: above the brute-force cap of {BRUTE_FORCE_T_CAP} and not a block boundary"
                        ))),
                    }
                })
                .collect()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Verdict {
    SummableCertificate,
    BoundedNonsummableStructural,
    DivergentWitness,
    Inconclusive,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::SummableCertificate => "summable_certificate",
            Verdict::BoundedNonsummableStructural => "bounded_nonsummable_structural",
            Verdict::DivergentWitness => "divergent_witness",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WitnessSeries {
    pub input: String,
    pub points: Vec<ProbePoint>,
    pub fit: GrowthFit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub kernel: String,
    pub params: Vec<(String, String)>,
    pub l1_kind: IndexKind,
    pub l1_partial: Vec<ProbePoint>,
    pub l1_fit: GrowthFit,
    pub opnorm_kind: IndexKind,
    pub opnorm_partial: Vec<ProbePoint>,
    pub witness_growth: Vec<WitnessSeries>,
    /// Upper bound on the entrywise mass outside the largest truncation.
    pub tail_bound: Option<f64>,
    /// Power-law fit of the block operator-norm increments.
    pub increment_fit: Option<LineFit>,
    pub verdict: Verdict,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReportDepth {
    /// Largest truncation for kernels without a block schedule.
    pub t_max: u64,
    /// Number of blocks for block-diagonal kernels.
    pub blocks: u64,
    pub seed: u64,
}

impl Default for ReportDepth {
    fn default() -> Self {
        Self {
            t_max: 800,
            blocks: 10,
            seed: DEFAULT_SEED,
        }
    }
}

/// `t_max / 32, t_max / 16, …, t_max`, deduplicated.
pub fn geometric_grid(t_max: u64) -> Vec<u64> {
    let mut g: Vec<u64> = (0..6).rev().map(|s| (t_max >> s).max(1)).collect();
    g.dedup();
    g
}

fn increment_decay_fit(points: &[ProbePoint]) -> Option<LineFit> {
    let mut prev = BigRational::zero();
    let mut lx = Vec::new();
    let mut ly = Vec::new();
    for p in points {
        let x = p.exact.clone()?;
        let d = rational_to_f64(&(&x - &prev))?;
        prev = x;
        if d > 0.0 {
            lx.push((p.index as f64).ln());
            ly.push(d.ln());
        }
    }
    if lx.len() < FIT_MIN_POINTS {
        return None;
    }
    fit_line(&lx, &ly)
}

const DECIDABILITY_NOTE: &str = "finite truncations cannot decide stability in general: a divergent witness certifies instability and a tail bound certifies summability, anything else is evidence only";

/// Runs the summability, operator-norm and witness probes and applies the
/// verdict rules in order: tail certificate, divergent witness, divergent
/// mass with summable block norms, otherwise inconclusive.
pub fn stability_report(k: &KernelHandle, depth: ReportDepth) -> Result<StabilityReport> {
    let mut notes = vec![DECIDABILITY_NOTE.to_string()];
    let inputs = [
        TestInput::AllOnes,
        TestInput::Alternating,
        TestInput::SignPattern { seed: depth.seed },
    ];

    let (l1, opnorm_kind, opnorm_partial, witness_grid) = if let Some(s) = k.block_schedule() {
        if depth.blocks == 0 {
            return Err(Error::InvalidParameter("blocks must be at least 1".into()));
        }
        let l1 = summability_probe(k, &ProbeGrid::Blocks(depth.blocks))?;
        let opnorm = opnorm_growth(k, &ProbeGrid::Blocks(depth.blocks))?;
        let grid: Vec<u64> = (1..=depth.blocks)
            .map_while(|h| s.row_boundary(h).filter(|&t| t <= WITNESS_T_CAP))
            .collect();
        (l1, IndexKind::Block, opnorm, grid)
    } else {
        if depth.t_max == 0 {
            return Err(Error::InvalidParameter("T must be at least 1".into()));
        }
        let grid = geometric_grid(depth.t_max);
        let l1 = summability_probe(k, &ProbeGrid::Truncations(grid.clone()))?;
        let small: Vec<u64> = [1u64, 2, 4, 8, 16, BRUTE_FORCE_T_CAP]
            .into_iter()
            .filter(|&t| t <= depth.t_max)
            .collect();
        let opnorm = opnorm_growth(k, &ProbeGrid::Truncations(small))?;
        (l1, IndexKind::Truncation, opnorm, grid)
    };

    let witness_growth = if witness_grid.is_empty() {
        Vec::new()
    } else {
        inputs
            .iter()
            .map(|u| {
                let points = witness_probe(k, u, &witness_grid)?;
                let fit = classify_growth(&points);
                Ok(WitnessSeries {
                    input: u.label(),
                    points,
                    fit,
                })
            })
            .collect::<Result<Vec<_>>>()?
    };

    let t_last = l1.points.last().map(|p| p.index).unwrap_or(0);
    let tail_bound = match l1.kind {
        IndexKind::Truncation => k.l1_tail_bound(t_last),
        IndexKind::Block => None,
    };
    let increment_fit = match opnorm_kind {
        IndexKind::Block => increment_decay_fit(&opnorm_partial),
        IndexKind::Truncation => None,
    };

    let partial_mass = l1.points.last().map(|p| p.value).unwrap_or(0.0);
    let verdict = if let Some(tail) = tail_bound.filter(|&b| b <= TAIL_CERTIFICATE_TOLERANCE * partial_mass.max(1.0)) {
        notes.push(format!(
            "entrywise mass beyond T = {t_last} is at most {tail:e}, so the kernel is absolutely summable"
        ));
        Verdict::SummableCertificate
    } else if let Some(w) = witness_growth
        .iter()
        .find(|w| w.fit.class == GrowthClass::PolynomiallyDivergent)
    {
        notes.push(format!(
            "test input {} gives g(T) growing like T^{:.3}",
            w.input,
            w.fit.power.map(|f| f.slope).unwrap_or(f64::NAN)
        ));
        Verdict::DivergentWitness
    } else if l1.kind == IndexKind::Block
        && l1.fit.class.is_divergent()
        && increment_fit.is_some_and(|f| f.r2 >= FIT_R2_THRESHOLD && f.slope < -1.0)
    {
        notes.push(format!(
            "block masses grow {} while block operator norms decay like h^{:.3}",
            l1.fit.class.as_str(),
            increment_fit.unwrap().slope
        ));
        Verdict::BoundedNonsummableStructural
    } else {
        Verdict::Inconclusive
    };

    Ok(StabilityReport {
        kernel: k.name().to_string(),
        params: k.params().to_vec(),
        l1_kind: l1.kind,
        l1_partial: l1.points,
        l1_fit: l1.fit,
        opnorm_kind,
        opnorm_partial,
        witness_growth,
        tail_bound,
        increment_fit,
        verdict,
        notes,
    })
}

#[cfg(test)]
fn harmonic(t: u64) -> BigRational {
    (1..=t).fold(BigRational::zero(), |acc, h| acc + BigRational::new(num_bigint::BigInt::from(1), num_bigint::BigInt::from(h)))
}
