//! Exact-arithmetic helpers shared by the closed forms: binomials, powers of
//! two, base-2 logarithms of big integers and rational/float conversions.

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

/// `C(n, k)` in arbitrary precision.
pub fn binomial(n: u64, k: u64) -> BigUint {
    if k > n {
        return BigUint::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigUint::one();
    for i in 0..k {
        // acc * (n - i) is divisible by (i + 1) at every step
        acc *= n - i;
        acc /= i + 1;
    }
    acc
}

pub fn pow2(exp: u64) -> BigUint {
    BigUint::one() << exp
}

/// Base-2 logarithm of a positive big integer, accurate to f64 precision
/// regardless of magnitude.
pub fn log2_biguint(x: &BigUint) -> f64 {
    assert!(!x.is_zero(), "log2 of zero");
    let bits = x.bits();
    if bits <= 64 {
        return (x.to_u64().unwrap() as f64).log2();
    }
    let shift = bits - 64;
    let top = (x >> shift).to_u64().unwrap();
    (top as f64).log2() + shift as f64
}

pub fn log2_rational(x: &BigRational) -> f64 {
    assert!(x.is_positive(), "log2 of a non-positive rational");
    let num = x.numer().magnitude();
    let den = x.denom().magnitude();
    log2_biguint(num) - log2_biguint(den)
}

/// Float value of a rational computed in log space, so ratios of huge
/// integers stay accurate. Returns `None` when the result is not a finite
/// normal f64.
pub fn rational_to_f64(x: &BigRational) -> Option<f64> {
    if x.is_zero() {
        return Some(0.0);
    }
    if let (Some(n), Some(d)) = (x.numer().to_f64(), x.denom().to_f64()) {
        if n.is_finite() && d.is_finite() && n.abs() < 9.0e15 && d < 9.0e15 {
            return Some(n / d);
        }
    }
    let v = log2_rational(&x.abs()).exp2();
    if !v.is_finite() || v == 0.0 {
        return None;
    }
    Some(if x.is_negative() { -v } else { v })
}

pub fn biguint_to_f64(x: &BigUint) -> Option<f64> {
    let v = x.to_f64()?;
    v.is_finite().then_some(v)
}

pub fn ratio(num: &BigUint, den: &BigUint) -> BigRational {
    BigRational::new(BigInt::from(num.clone()), BigInt::from(den.clone()))
}

pub fn int(x: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(x))
}

pub fn frac(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

/// Exact rational image of a finite float.
pub fn rational_from_f64(x: f64) -> Option<BigRational> {
    BigRational::from_float(x)
}

/// `num/den` rendering used by the CLI's `--exact` output.
pub fn rational_string(x: &BigRational) -> String {
    if x.is_integer() {
        x.numer().to_string()
    } else {
        format!("{}/{}", x.numer(), x.denom())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binomial_small_values() {
        assert_eq!(binomial(3, 2), BigUint::from(3u32));
        assert_eq!(binomial(5, 0), BigUint::one());
        assert_eq!(binomial(5, 6), BigUint::zero());
        assert_eq!(binomial(10, 5), BigUint::from(252u32));
    }

    #[test]
    fn binomial_beyond_u64() {
        // C(101, 51) overflows 64 bits
        let c = binomial(101, 51);
        assert!(c.bits() > 64);
        // Pascal's rule
        assert_eq!(c, binomial(100, 50) + binomial(100, 51));
    }

    #[test]
    fn log2_large_powers() {
        assert_eq!(log2_biguint(&pow2(200)), 200.0);
        let x = pow2(150) * 3u32;
        assert!((log2_biguint(&x) - (150.0 + 3f64.log2())).abs() < 1e-12);
    }

    #[test]
    fn rational_float_view_of_huge_ratio() {
        let r = ratio(&(pow2(300) * 2u32), &(pow2(300) * 3u32));
        assert!((rational_to_f64(&r).unwrap() - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn rational_rendering() {
        assert_eq!(rational_string(&frac(7381, 2520)), "7381/2520");
        assert_eq!(rational_string(&int(12)), "12");
    }
}
