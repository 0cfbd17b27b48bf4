//! Coefficient backends.
//!
//! Two scalar types implement [`Coeff`]: [`GaussQ`], an exact Gaussian
//! rational kept in lowest terms, and [`CF64`], a complex double. Series and
//! matrices are generic over the backend, so one computation cannot mix them.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

/// Which coefficient backend a value or series uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Exact,
    Float,
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Backend::Exact => write!(f, "exact"),
            Backend::Float => write!(f, "float"),
        }
    }
}

/// Default zero threshold of the float backend.
pub const DEFAULT_FLOAT_TOL: f64 = 1e-12;

/// Scalar field operations shared by both backends.
pub trait Coeff: Clone + PartialEq + fmt::Debug + fmt::Display + Send + Sync + 'static {
    const BACKEND: Backend;

    fn zero() -> Self;
    fn one() -> Self;
    fn from_i64(v: i64) -> Self;
    /// `num/den`; panics if `den == 0`.
    fn from_ratio(num: i64, den: i64) -> Self;
    fn from_rationals(re: &BigRational, im: &BigRational) -> Self;
    /// Float input; the exact backend converts the binary value exactly.
    fn from_c64(z: Complex64) -> Self;

    /// Exact zero test.
    fn is_zero(&self) -> bool;
    /// Zero test against a threshold. The exact backend ignores `tol`.
    fn is_negligible(&self, tol: f64) -> bool;

    fn add(&self, o: &Self) -> Self;
    fn sub(&self, o: &Self) -> Self;
    fn mul(&self, o: &Self) -> Self;
    fn neg(&self) -> Self;
    fn inv(&self) -> Option<Self>;
    fn conj(&self) -> Self;

    fn div(&self, o: &Self) -> Option<Self> {
        o.inv().map(|i| self.mul(&i))
    }
    fn add_assign(&mut self, o: &Self) {
        *self = self.add(o);
    }
    fn mul_add_assign(&mut self, a: &Self, b: &Self) {
        *self = self.add(&a.mul(b));
    }
    fn scale_i64(&self, k: i64) -> Self {
        self.mul(&Self::from_i64(k))
    }

    fn to_c64(&self) -> Complex64;
    fn modulus_f64(&self) -> f64 {
        self.to_c64().norm()
    }
    /// Exact `|z|^2`, available on the exact backend only.
    fn norm_sqr_exact(&self) -> Option<BigRational>;
    /// Exact `|z|` when it is rational (exact backend only).
    fn abs_exact(&self) -> Option<BigRational> {
        self.norm_sqr_exact().and_then(|n| rational_sqrt(&n))
    }
    fn is_real(&self) -> bool;

    /// Integer power; `None` for a negative power of zero.
    fn powi(&self, e: i64) -> Option<Self> {
        let base = if e < 0 { self.inv()? } else { self.clone() };
        let mut e = e.unsigned_abs();
        let mut acc = Self::one();
        let mut b = base;
        while e > 0 {
            if e & 1 == 1 {
                acc = acc.mul(&b);
            }
            e >>= 1;
            if e > 0 {
                b = b.mul(&b);
            }
        }
        Some(acc)
    }

    /// JSON rendering of the real and imaginary parts.
    fn to_json_parts(&self) -> (serde_json::Value, serde_json::Value);
    fn from_json_parts(re: &serde_json::Value, im: &serde_json::Value) -> Result<Self, String>;
}

/// Orders two scalars by modulus, exactly when both are exact.
pub fn cmp_modulus<K: Coeff>(a: &K, b: &K) -> Ordering {
    match (a.norm_sqr_exact(), b.norm_sqr_exact()) {
        (Some(x), Some(y)) => x.cmp(&y),
        _ => a
            .modulus_f64()
            .partial_cmp(&b.modulus_f64())
            .unwrap_or(Ordering::Equal),
    }
}

/// Square root of a non-negative rational when it is itself rational.
pub fn rational_sqrt(q: &BigRational) -> Option<BigRational> {
    if q.is_negative() {
        return None;
    }
    let n = q.numer().sqrt();
    let d = q.denom().sqrt();
    if &(&n * &n) == q.numer() && &(&d * &d) == q.denom() {
        Some(BigRational::new(n, d))
    } else {
        None
    }
}

/// Parses `"p/q"`, `"p"` or a JSON integer into a rational.
pub fn parse_rational(v: &serde_json::Value) -> Result<BigRational, String> {
    match v {
        serde_json::Value::String(s) => {
            let t = s.trim();
            if t.contains('.') || t.contains('e') || t.contains('E') {
                return Err(format!("rational \"{s}\" must be decimal-free p/q"));
            }
            BigRational::from_str(t).map_err(|e| format!("bad rational \"{s}\": {e}"))
        }
        serde_json::Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                Ok(BigRational::from_integer(BigInt::from(i)))
            } else {
                Err(format!(
                    "non-integer number {n} for an exact coefficient; use \"p/q\""
                ))
            }
        }
        serde_json::Value::Null => Ok(BigRational::zero()),
        other => Err(format!("expected rational string, found {other}")),
    }
}

/// Canonical text of a rational: `p` for integers, `p/q` otherwise.
pub fn render_rational(q: &BigRational) -> String {
    if q.denom().is_one() {
        q.numer().to_string()
    } else {
        format!("{}/{}", q.numer(), q.denom())
    }
}

fn rat_to_f64(q: &BigRational) -> f64 {
    q.to_f64().unwrap_or(f64::NAN)
}

/// Exact binary value of a float.
pub fn f64_to_rat(x: f64) -> BigRational {
    BigRational::from_float(x).unwrap_or_else(BigRational::zero)
}

// ---------------------------------------------------------------------------

/// Exact Gaussian rational `re + i·im`, both parts in lowest terms.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct GaussQ {
    pub re: BigRational,
    pub im: BigRational,
}

impl GaussQ {
    pub fn new(re: BigRational, im: BigRational) -> Self {
        GaussQ { re, im }
    }
    pub fn real(re: BigRational) -> Self {
        GaussQ {
            re,
            im: BigRational::zero(),
        }
    }
    pub fn from_parts(re_num: i64, re_den: i64, im_num: i64, im_den: i64) -> Self {
        GaussQ {
            re: BigRational::new(re_num.into(), re_den.into()),
            im: BigRational::new(im_num.into(), im_den.into()),
        }
    }
    pub fn i() -> Self {
        GaussQ {
            re: BigRational::zero(),
            im: BigRational::one(),
        }
    }
}

impl fmt::Display for GaussQ {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.im.is_zero() {
            write!(f, "{}", render_rational(&self.re))
        } else if self.re.is_zero() {
            write!(f, "{}i", render_rational(&self.im))
        } else if self.im.is_negative() {
            write!(
                f,
                "({}-{}i)",
                render_rational(&self.re),
                render_rational(&-self.im.clone())
            )
        } else {
            write!(
                f,
                "({}+{}i)",
                render_rational(&self.re),
                render_rational(&self.im)
            )
        }
    }
}

impl Coeff for GaussQ {
    const BACKEND: Backend = Backend::Exact;

    fn zero() -> Self {
        GaussQ {
            re: BigRational::zero(),
            im: BigRational::zero(),
        }
    }
    fn one() -> Self {
        GaussQ {
            re: BigRational::one(),
            im: BigRational::zero(),
        }
    }
    fn from_i64(v: i64) -> Self {
        GaussQ::real(BigRational::from_integer(v.into()))
    }
    fn from_ratio(num: i64, den: i64) -> Self {
        GaussQ::real(BigRational::new(num.into(), den.into()))
    }
    fn from_rationals(re: &BigRational, im: &BigRational) -> Self {
        GaussQ {
            re: re.clone(),
            im: im.clone(),
        }
    }
    fn from_c64(z: Complex64) -> Self {
        GaussQ {
            re: f64_to_rat(z.re),
            im: f64_to_rat(z.im),
        }
    }
    fn is_zero(&self) -> bool {
        self.re.is_zero() && self.im.is_zero()
    }
    fn is_negligible(&self, _tol: f64) -> bool {
        self.is_zero()
    }
    fn add(&self, o: &Self) -> Self {
        let re = if o.re.is_zero() {
            self.re.clone()
        } else {
            &self.re + &o.re
        };
        let im = if o.im.is_zero() {
            self.im.clone()
        } else if self.im.is_zero() {
            o.im.clone()
        } else {
            &self.im + &o.im
        };
        GaussQ { re, im }
    }
    fn sub(&self, o: &Self) -> Self {
        let re = if o.re.is_zero() {
            self.re.clone()
        } else {
            &self.re - &o.re
        };
        let im = if o.im.is_zero() {
            self.im.clone()
        } else if self.im.is_zero() {
            -o.im.clone()
        } else {
            &self.im - &o.im
        };
        GaussQ { re, im }
    }
    fn mul(&self, o: &Self) -> Self {
        match (self.im.is_zero(), o.im.is_zero()) {
            (true, true) => GaussQ::real(&self.re * &o.re),
            (true, false) => GaussQ {
                re: &self.re * &o.re,
                im: &self.re * &o.im,
            },
            (false, true) => GaussQ {
                re: &self.re * &o.re,
                im: &self.im * &o.re,
            },
            (false, false) => GaussQ {
                re: &self.re * &o.re - &self.im * &o.im,
                im: &self.re * &o.im + &self.im * &o.re,
            },
        }
    }
    fn neg(&self) -> Self {
        GaussQ {
            re: -self.re.clone(),
            im: -self.im.clone(),
        }
    }
    fn inv(&self) -> Option<Self> {
        if self.is_zero() {
            return None;
        }
        if self.im.is_zero() {
            return Some(GaussQ::real(self.re.recip()));
        }
        let n = &self.re * &self.re + &self.im * &self.im;
        Some(GaussQ {
            re: &self.re / &n,
            im: -(&self.im / &n),
        })
    }
    fn conj(&self) -> Self {
        GaussQ {
            re: self.re.clone(),
            im: -self.im.clone(),
        }
    }
    fn add_assign(&mut self, o: &Self) {
        if !o.re.is_zero() {
            self.re += &o.re;
        }
        if !o.im.is_zero() {
            self.im += &o.im;
        }
    }
    fn mul_add_assign(&mut self, a: &Self, b: &Self) {
        if a.im.is_zero() && b.im.is_zero() {
            self.re += &a.re * &b.re;
        } else {
            let p = a.mul(b);
            self.add_assign(&p);
        }
    }
    fn to_c64(&self) -> Complex64 {
        Complex64::new(rat_to_f64(&self.re), rat_to_f64(&self.im))
    }
    fn norm_sqr_exact(&self) -> Option<BigRational> {
        Some(&self.re * &self.re + &self.im * &self.im)
    }
    fn abs_exact(&self) -> Option<BigRational> {
        if self.im.is_zero() {
            Some(self.re.abs())
        } else if self.re.is_zero() {
            Some(self.im.abs())
        } else {
            rational_sqrt(&self.norm_sqr_exact()?)
        }
    }
    fn is_real(&self) -> bool {
        self.im.is_zero()
    }
    fn to_json_parts(&self) -> (serde_json::Value, serde_json::Value) {
        (
            serde_json::Value::String(render_rational(&self.re)),
            serde_json::Value::String(render_rational(&self.im)),
        )
    }
    fn from_json_parts(re: &serde_json::Value, im: &serde_json::Value) -> Result<Self, String> {
        Ok(GaussQ {
            re: parse_rational(re)?,
            im: parse_rational(im)?,
        })
    }
}

// ---------------------------------------------------------------------------

/// Complex double coefficient.
#[derive(Clone, Copy, PartialEq, Debug)]
pub struct CF64(pub Complex64);

impl CF64 {
    pub fn new(re: f64, im: f64) -> Self {
        CF64(Complex64::new(re, im))
    }
}

impl fmt::Display for CF64 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.im == 0.0 {
            write!(f, "{}", self.0.re)
        } else {
            write!(f, "({}{:+}i)", self.0.re, self.0.im)
        }
    }
}

fn json_f64(x: f64) -> serde_json::Value {
    serde_json::Number::from_f64(x)
        .map(serde_json::Value::Number)
        .unwrap_or(serde_json::Value::Null)
}

fn parse_f64(v: &serde_json::Value) -> Result<f64, String> {
    match v {
        serde_json::Value::Number(n) => n.as_f64().ok_or_else(|| format!("bad number {n}")),
        serde_json::Value::String(s) => {
            if let Ok(x) = s.trim().parse::<f64>() {
                Ok(x)
            } else {
                BigRational::from_str(s.trim())
                    .map(|q| rat_to_f64(&q))
                    .map_err(|_| format!("bad float \"{s}\""))
            }
        }
        serde_json::Value::Null => Ok(0.0),
        other => Err(format!("expected number, found {other}")),
    }
}

impl Coeff for CF64 {
    const BACKEND: Backend = Backend::Float;

    fn zero() -> Self {
        CF64::new(0.0, 0.0)
    }
    fn one() -> Self {
        CF64::new(1.0, 0.0)
    }
    fn from_i64(v: i64) -> Self {
        CF64::new(v as f64, 0.0)
    }
    fn from_ratio(num: i64, den: i64) -> Self {
        assert!(den != 0, "zero denominator");
        CF64::new(num as f64 / den as f64, 0.0)
    }
    fn from_rationals(re: &BigRational, im: &BigRational) -> Self {
        CF64::new(rat_to_f64(re), rat_to_f64(im))
    }
    fn from_c64(z: Complex64) -> Self {
        CF64(z)
    }
    fn is_zero(&self) -> bool {
        self.0.re == 0.0 && self.0.im == 0.0
    }
    fn is_negligible(&self, tol: f64) -> bool {
        self.0.norm() <= tol
    }
    fn add(&self, o: &Self) -> Self {
        CF64(self.0 + o.0)
    }
    fn sub(&self, o: &Self) -> Self {
        CF64(self.0 - o.0)
    }
    fn mul(&self, o: &Self) -> Self {
        CF64(self.0 * o.0)
    }
    fn neg(&self) -> Self {
        CF64(-self.0)
    }
    fn inv(&self) -> Option<Self> {
        if self.is_zero() {
            None
        } else {
            Some(CF64(self.0.inv()))
        }
    }
    fn conj(&self) -> Self {
        CF64(self.0.conj())
    }
    fn add_assign(&mut self, o: &Self) {
        self.0 += o.0;
    }
    fn mul_add_assign(&mut self, a: &Self, b: &Self) {
        self.0 += a.0 * b.0;
    }
    fn to_c64(&self) -> Complex64 {
        self.0
    }
    fn norm_sqr_exact(&self) -> Option<BigRational> {
        None
    }
    fn abs_exact(&self) -> Option<BigRational> {
        None
    }
    fn is_real(&self) -> bool {
        self.0.im == 0.0
    }
    fn to_json_parts(&self) -> (serde_json::Value, serde_json::Value) {
        (json_f64(self.0.re), json_f64(self.0.im))
    }
    fn from_json_parts(re: &serde_json::Value, im: &serde_json::Value) -> Result<Self, String> {
        Ok(CF64::new(parse_f64(re)?, parse_f64(im)?))
    }
}

/// Rational approximation of a modulus: exact when available, else the
/// exact binary value of the float modulus.
pub fn modulus_rational<K: Coeff>(z: &K) -> BigRational {
    z.abs_exact().unwrap_or_else(|| f64_to_rat(z.modulus_f64()))
}

/// `lo <= sqrt(n) <= hi` with `hi - lo <= 2^-bits / denom(n)`; equal when
/// the root is rational.
pub fn sqrt_bounds(n: &BigRational, bits: u32) -> (BigRational, BigRational) {
    if let Some(r) = rational_sqrt(n) {
        return (r.clone(), r);
    }
    let scale = BigInt::one() << bits;
    let s = (n.numer() * n.denom() * &scale * &scale).sqrt();
    let den = n.denom() * &scale;
    (
        BigRational::new(s.clone(), den.clone()),
        BigRational::new(s + 1, den),
    )
}

/// Rational bounds on `|z|`: certified on the exact backend, a few ulps
/// around the float modulus otherwise.
pub fn modulus_bounds<K: Coeff>(z: &K, bits: u32) -> (BigRational, BigRational) {
    match z.norm_sqr_exact() {
        Some(n) => sqrt_bounds(&n, bits),
        None => {
            let m = z.modulus_f64();
            let e = m * 4.0 * f64::EPSILON;
            (f64_to_rat((m - e).max(0.0)), f64_to_rat(m + e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_lowest_terms_and_inverse() {
        let a = GaussQ::from_parts(2, 4, 3, 9);
        assert_eq!(a.re, BigRational::new(1.into(), 2.into()));
        assert_eq!(a.im, BigRational::new(1.into(), 3.into()));
        let p = a.mul(&a.inv().unwrap());
        assert_eq!(p, GaussQ::one());
    }

    #[test]
    fn rational_text_round_trip() {
        let q = BigRational::new((-7).into(), 4.into());
        let s = render_rational(&q);
        assert_eq!(s, "-7/4");
        assert_eq!(parse_rational(&serde_json::Value::String(s)).unwrap(), q);
        assert!(parse_rational(&serde_json::json!("0.5")).is_err());
    }

    #[test]
    fn exact_modulus_of_pythagorean_point() {
        let z = GaussQ::from_parts(3, 5, 4, 5);
        assert_eq!(z.abs_exact(), Some(BigRational::one()));
        assert_eq!(GaussQ::from_parts(1, 1, 1, 1).abs_exact(), None);
    }

    #[test]
    fn powers() {
        let h = GaussQ::from_ratio(1, 2);
        assert_eq!(h.powi(-3).unwrap(), GaussQ::from_i64(8));
        assert_eq!(GaussQ::zero().powi(-1), None);
        let w = CF64::new(0.0, 1.0).powi(4).unwrap();
        assert!((w.0 - Complex64::new(1.0, 0.0)).norm() < 1e-15);
    }
}
