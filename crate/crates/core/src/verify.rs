//! Desk-scale check registry. Each check reproduces one stated result on
//! small instances with the exact oracles of this crate and reports one line.

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::exact::{frac, int, rational_to_f64, rational_string};
use crate::finite_norms::{l1_entrywise, opnorm_inf1_bruteforce, DenseMatrix};
use crate::gram::{self, AscentOptions, GramSpec};
use crate::kernels::{counterexample_s, counterexample_v, finite_section, psd_check, PChoice, PSD_TOLERANCE};
use crate::lambda_bounds::{self, SearchOptions};
use crate::sign_matrix::{self, SignMatrixSpec, SignVector};
use crate::stability::{self, ReportDepth, Verdict};

/// Replaceable entry points, so a harness can corrupt one and watch the
/// matching check fail.
#[derive(Debug, Clone, Copy)]
pub struct VerifyHooks {
    pub opnorm_inf1_closed: fn(&SignMatrixSpec) -> BigUint,
}

impl Default for VerifyHooks {
    fn default() -> Self {
        Self {
            opnorm_inf1_closed: sign_matrix::opnorm_inf1_closed,
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct VerifyOptions {
    pub fail_fast: bool,
    pub hooks: VerifyHooks,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckLine {
    /// Result name followed by the checked instances, e.g. `Lemma 3 (p=1,2)`.
    pub label: String,
    pub passed: bool,
    /// Reason for a failure.
    pub detail: Option<String>,
}

impl std::fmt::Display for CheckLine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.label, if self.passed { "PASS" } else { "FAIL" })?;
        if let Some(d) = &self.detail {
            write!(f, " ({d})")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifySummary {
    pub lines: Vec<CheckLine>,
    /// Checks skipped after a failure under `fail_fast`.
    pub skipped: usize,
}

impl VerifySummary {
    pub fn passed(&self) -> bool {
        self.skipped == 0 && self.lines.iter().all(|l| l.passed)
    }

    pub fn first_failure(&self) -> Option<&CheckLine> {
        self.lines.iter().find(|l| !l.passed)
    }
}

type Outcome = Result<std::result::Result<(), String>>;

struct Check {
    label: &'static str,
    run: fn(&Ctx) -> Outcome,
}

struct Ctx {
    hooks: VerifyHooks,
    seed: u64,
}

const DEFAULT_SEED: u64 = 0x7e51f1;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn dense_v(spec: &SignMatrixSpec) -> Result<DenseMatrix> {
    let n = spec.rows().expect("small p") as usize;
    let m = spec.m() as usize;
    let rows: Vec<SignVector> = (0..n as u64).map(|i| sign_matrix::row(spec, i)).collect::<Result<_>>()?;
    DenseMatrix::from_fn(n, m, |i, j| int(rows[i].as_slice()[j] as i64))
}

fn ordered(m: &DenseMatrix) -> Result<bool> {
    let r = opnorm_inf1_bruteforce(m)?;
    Ok(r.opnorm_inf1 <= l1_entrywise(m))
}

fn vertex_optimality(ctx: &Ctx) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
    for p in 1..=2 {
        let spec = SignMatrixSpec::new(p)?;
        let bound = sign_matrix::opnorm_inf1_closed(&spec).to_f64().unwrap();
        for _ in 0..200 {
            let mut u: Vec<f64> = (0..spec.m()).map(|_| rng.random_range(-1.0..=1.0)).collect();
            let k = rng.random_range(0..u.len());
            u[k] = if rng.random::<bool>() { 1.0 } else { -1.0 };
            let y = sign_matrix::apply(&spec, &u, Default::default())?.l1;
            if y > bound * (1.0 + 1e-12) {
                return Ok(Err(format!("p={p}: ‖Vu‖₁ = {y} exceeds {bound}")));
            }
        }
    }
    Ok(Ok(()))
}

fn invariance(_: &Ctx) -> Outcome {
    for p in 1..=4 {
        let spec = SignMatrixSpec::new(p)?;
        let m = spec.m();
        let first = sign_matrix::apply_signs(&spec, &SignVector::from_bits(0, m))?;
        for bits in 1..(1u64 << m) {
            let v = sign_matrix::apply_signs(&spec, &SignVector::from_bits(bits, m))?;
            if v != first {
                return Ok(Err(format!("p={p}: {v} differs from {first}")));
            }
        }
    }
    Ok(Ok(()))
}

fn closed_form(ctx: &Ctx) -> Outcome {
    for (p, expected) in [(1u32, 12u64), (2, 60)] {
        let spec = SignMatrixSpec::new(p)?;
        let closed = (ctx.hooks.opnorm_inf1_closed)(&spec);
        let v = dense_v(&spec)?;
        let brute = opnorm_inf1_bruteforce(&v)?;
        let closed_r = BigRational::from_integer(BigInt::from(closed.clone()));
        if closed_r != brute.opnorm_inf1 || closed != BigUint::from(expected) {
            return Ok(Err(format!(
                "p={p}: closed form {closed}, vertex enumeration {}",
                rational_string(&brute.opnorm_inf1)
            )));
        }
        if brute.l1_entrywise != int((spec.m() as i64) << spec.m()) {
            return Ok(Err(format!("p={p}: entrywise norm mismatch")));
        }
    }
    Ok(Ok(()))
}

fn asymptotics(_: &Ctx) -> Outcome {
    let e10 = sign_matrix::asymptotic_relative_error(&SignMatrixSpec::new(10)?);
    let e50 = sign_matrix::asymptotic_relative_error(&SignMatrixSpec::new(50)?);
    Ok(ensure(e50 <= 0.05 && e50 < e10, || {
        format!("relative errors {e10:.4} at p=10 and {e50:.4} at p=50")
    }))
}

fn lambda_properties(ctx: &Ctx) -> Outcome {
    let opts = SearchOptions {
        samples: 500,
        seed: ctx.seed,
    };
    for k in 1..=4usize {
        let r = lambda_bounds::lambda_upper_search(k, opts)?;
        if r.upper_bound < BigRational::zero() || r.upper_bound > BigRational::one() {
            return Ok(Err(format!("k={k}: bound {} outside [0,1]", rational_string(&r.upper_bound))));
        }
        if k <= 2 && r.upper_bound != BigRational::one() {
            return Ok(Err(format!("k={k}: expected 1")));
        }
        if k == 3 && r.upper_bound > frac(2, 3) {
            return Ok(Err("k=3: bound above 2/3".into()));
        }
        let next = lambda_bounds::embedding_monotonicity(&r)?;
        if next.upper_bound != r.upper_bound {
            return Ok(Err(format!("k={k}: zero padding changed the ratio")));
        }
        if let Some(w) = &r.witness.matrix {
            if !ordered(w)? {
                return Ok(Err(format!("k={k}: ordering violated")));
            }
        }
    }
    Ok(Ok(()))
}

fn orthogonality(_: &Ctx) -> Outcome {
    for p in 1..=3 {
        let r = sign_matrix::orthogonality_check(&SignMatrixSpec::new(p)?, None)?;
        if !r.passed || r.max_off_diagonal != 0 {
            return Ok(Err(format!("p={p}: off-diagonal deviation {}", r.max_off_diagonal)));
        }
    }
    Ok(Ok(()))
}

fn mstar_dominates(ctx: &Ctx) -> Outcome {
    let g = GramSpec::from_p(1)?;
    let brute = opnorm_inf1_bruteforce(&gram::to_dense(&g)?)?;
    let opts = AscentOptions {
        seed: ctx.seed,
        ..Default::default()
    };
    let star = gram::mstar_value(&g, opts)?;
    let star_r = BigRational::from_integer(BigInt::from(star.exact));
    Ok(ensure(brute.opnorm_inf1 <= star_r, || "brute-force value exceeds the dual bound".into()))
}

fn boundary_maximum(ctx: &Ctx) -> Outcome {
    for p in 1..=3 {
        let g = GramSpec::from_p(p)?;
        let opts = AscentOptions {
            seed: ctx.seed,
            ..Default::default()
        };
        let r = gram::mstar_value(&g, opts)?;
        let n2 = r.exact.to_f64().unwrap();
        let num = r.numeric.expect("numeric path below its cap");
        if num.value < 0.999 * n2 || (num.argmax_norm - 1.0).abs() > 1e-6 {
            return Ok(Err(format!(
                "p={p}: ascent reached {} of {n2} at norm {}",
                num.value, num.argmax_norm
            )));
        }
    }
    Ok(Ok(()))
}

fn parseval(ctx: &Ctx) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
    for p in 1..=2 {
        let g = GramSpec::from_p(p)?;
        for _ in 0..100 {
            let a: Vec<f64> = (0..g.m()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let c = gram::parseval_identity_check(&g, &a)?;
            if !c.passed {
                return Ok(Err(format!("p={p}: relative error {:e}", c.relative_error)));
            }
        }
        let a: Vec<BigRational> = (0..g.m() as i64).map(|j| frac(j - 2, j + 3)).collect();
        let (lhs, rhs) = gram::parseval_identity_exact(&g, &a)?;
        if lhs != rhs {
            return Ok(Err(format!("p={p}: exact sides differ")));
        }
    }
    Ok(Ok(()))
}

fn gram_ratio(_: &Ctx) -> Outcome {
    let mut prev: Option<BigRational> = None;
    for p in 1..=10 {
        let g = GramSpec::from_p(p)?;
        let opv = sign_matrix::opnorm_inf1_closed(g.base());
        if gram::l1_closed(&g) != opv << g.m() {
            return Ok(Err(format!("p={p}: ‖M‖₁ differs from n‖V‖")));
        }
        let r = gram::ratio(&g).exact;
        if p == 1 && r != frac(2, 3) {
            return Ok(Err(format!("p=1: ratio {}", rational_string(&r))));
        }
        if prev.as_ref().is_some_and(|q| r >= *q) {
            return Ok(Err(format!("p={p}: ratio not decreasing")));
        }
        prev = Some(r);
    }
    let r = gram::ratio(&GramSpec::from_p(50)?);
    Ok(ensure(r.relative_deviation.abs() <= 0.05, || {
        format!("p=50: deviation {:.4}", r.relative_deviation)
    }))
}

fn gram_norm(_: &Ctx) -> Outcome {
    let g = GramSpec::from_p(1)?;
    let dense = gram::to_dense(&g)?;
    let brute = opnorm_inf1_bruteforce(&dense)?;
    if brute.opnorm_inf1 != int(64) || gram::opnorm_inf1_value(&g) != BigUint::from(64u32) {
        return Ok(Err(format!("‖M(8)‖ = {}", rational_string(&brute.opnorm_inf1))));
    }
    for j in 0..g.m() {
        let col: Vec<i8> = gram::v_column(&g, j)?.iter().map(|&x| x as i8).collect();
        let y = dense.apply_signs(&SignVector::new(col)?)?;
        let l1 = y.iter().fold(BigRational::zero(), |acc, x| acc + num_traits::Signed::abs(x));
        if l1 != int(64) {
            return Ok(Err(format!("column {j} gives {}", rational_string(&l1))));
        }
    }
    Ok(ensure(brute.opnorm_inf1 <= brute.l1_entrywise, || "ordering violated".into()))
}

fn fig1(_: &Ctx) -> Outcome {
    let rows = lambda_bounds::fig1_curve(20)?;
    if rows.windows(2).any(|w| w[1].bound >= w[0].bound) {
        return Ok(Err("bound not strictly decreasing".into()));
    }
    if (rows[0].bound - 0.886227).abs() > 1e-5 || (rows[1].bound - 0.626657).abs() > 1e-5 {
        return Ok(Err("bound values at p=1,2".into()));
    }
    Ok(ensure(rows.iter().all(|r| r.dominates_gram_ratio()), || {
        "gram ratio above the bound".into()
    }))
}

fn counterexample_one(_: &Ctx) -> Outcome {
    let k = counterexample_v(PChoice::Linear);
    let s = k.block_schedule().unwrap();
    for p in 1..=10u64 {
        if s.block_l1_mass(p)? != frac(1, p as i64) {
            return Ok(Err(format!("block {p}: mass differs from 1/{p}")));
        }
        let spec = SignMatrixSpec::new(p as u32)?;
        let expected = BigRational::new(
            BigInt::from(sign_matrix::opnorm_inf1_closed(&spec)),
            BigInt::from(p * spec.m() as u64) << spec.m(),
        );
        if s.block_opnorm(p)? != expected {
            return Ok(Err(format!("block {p}: operator norm mismatch")));
        }
    }
    let v = rational_to_f64(&s.block_opnorm(30)?).unwrap();
    let asym = 1.0 / (30.0 * (std::f64::consts::PI * 30.0).sqrt());
    if (v / asym - 1.0).abs() > 0.1 {
        return Ok(Err(format!("block 30: {v} vs {asym}")));
    }
    Ok(ensure(ordered(finite_section(&k, 40)?.matrix())?, || "ordering violated".into()))
}

fn counterexample_two(_: &Ctx) -> Outcome {
    let k = counterexample_s(PChoice::Linear);
    let s = k.block_schedule().unwrap();
    let mut mass = BigRational::zero();
    let mut incs = Vec::new();
    for h in 1..=10 {
        mass += s.block_l1_mass(h)?;
        incs.push(rational_to_f64(&s.block_opnorm(h)?).unwrap());
    }
    if mass != frac(7381, 2520) {
        return Ok(Err(format!("ℓ1 mass {}", rational_string(&mass))));
    }
    for h in 5..10usize {
        let want = (h as f64 / (h + 1) as f64).powf(1.5);
        let got = incs[h] / incs[h - 1];
        if (got / want - 1.0).abs() > 0.15 {
            return Ok(Err(format!("increment ratio {got:.4} at h={h}, expected {want:.4}")));
        }
    }
    for t in [8, 40] {
        if !psd_check(&finite_section(&k, t)?, PSD_TOLERANCE)?.passed {
            return Ok(Err(format!("section {t} not PSD")));
        }
    }
    let r = stability::stability_report(&k, ReportDepth::default())?;
    Ok(ensure(r.verdict == Verdict::BoundedNonsummableStructural, || {
        format!("verdict {}", r.verdict.as_str())
    }))
}

fn diagnostics(_: &Ctx) -> Outcome {
    let spline = crate::kernels::stable_spline(0.9)?;
    let r = stability::stability_report(&spline, ReportDepth::default())?;
    if r.verdict != Verdict::SummableCertificate {
        return Ok(Err(format!("stable spline verdict {}", r.verdict.as_str())));
    }
    let c = crate::kernels::constant_kernel(1.0)?;
    let r = stability::stability_report(&c, ReportDepth { t_max: 100, ..Default::default() })?;
    Ok(ensure(r.verdict == Verdict::DivergentWitness, || {
        format!("constant kernel verdict {}", r.verdict.as_str())
    }))
}

const CHECKS: &[Check] = &[
    Check { label: "Lemma 1 (p=1,2; 200 random u)", run: vertex_optimality },
    Check { label: "Lemma 2 (p=1..4; all sign vectors)", run: invariance },
    Check { label: "Lemma 3 (p=1,2)", run: closed_form },
    Check { label: "Lemma 4 (p=10,50)", run: asymptotics },
    Check { label: "Lemma 5 (k=1..4)", run: lambda_properties },
    Check { label: "Lemma 6 (p=1,2,3)", run: orthogonality },
    Check { label: "Lemma 7 (p=1)", run: mstar_dominates },
    Check { label: "Lemma 8 (p=1,2,3; 32 restarts)", run: boundary_maximum },
    Check { label: "Lemma 9 (p=1,2; 100 random a)", run: parseval },
    Check { label: "Lemma 10 (p=1..10,50)", run: gram_ratio },
    Check { label: "Theorem M_n = n^2 (p=1)", run: gram_norm },
    Check { label: "Fig. 1 (p=1..20)", run: fig1 },
    Check { label: "Counterexample 1 (blocks 1..10,30)", run: counterexample_one },
    Check { label: "Counterexample 2 (blocks 1..10)", run: counterexample_two },
    Check { label: "Stability diagnostics (spline, constant)", run: diagnostics },
];

/// Runs every check in order. Errors raised by a check count as failures.
pub fn run(opts: VerifyOptions) -> VerifySummary {
    let ctx = Ctx {
        hooks: opts.hooks,
        seed: opts.seed.unwrap_or(DEFAULT_SEED),
    };
    let mut lines = Vec::new();
    for (idx, c) in CHECKS.iter().enumerate() {
        let (passed, detail) = match (c.run)(&ctx) {
            Ok(Ok(())) => (true, None),
            Ok(Err(msg)) => (false, Some(msg)),
            Err(e) => (false, Some(e.to_string())),
        };
        lines.push(CheckLine {
            label: c.label.to_string(),
            passed,
            detail,
        });
        if !passed && opts.fail_fast {
            return VerifySummary {
                lines,
                skipped: CHECKS.len() - idx - 1,
            };
        }
    }
    VerifySummary { lines, skipped: 0 }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn broken(spec: &SignMatrixSpec) -> BigUint {
        sign_matrix::opnorm_inf1_closed(spec) + 1u32
    }

    #[test]
    fn default_run_passes() {
        let s = run(VerifyOptions::default());
        for l in &s.lines {
            assert!(l.passed, "{l}");
        }
        assert_eq!(s.lines[2].to_string(), "Lemma 3 (p=1,2): PASS");
    }

    #[test]
    fn corrupted_closed_form_fails_its_check() {
        let hooks = VerifyHooks {
            opnorm_inf1_closed: broken,
        };
        let s = run(VerifyOptions {
            hooks,
            ..Default::default()
        });
        assert!(!s.passed());
        let f = s.first_failure().unwrap();
        assert!(f.label.starts_with("Lemma 3"));
        assert_eq!(s.lines.len(), CHECKS.len());

        let s = run(VerifyOptions {
            hooks,
            fail_fast: true,
            ..Default::default()
        });
        assert_eq!(s.lines.len(), 3);
        assert_eq!(s.skipped, CHECKS.len() - 3);
    }
}
