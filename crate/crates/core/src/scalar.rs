//! Exact scalars: rationals, the real quadratic field `Q(sqrt d)` and its
//! complexification, plus a small [`Scalar`] abstraction that lets the
//! downstream modules run either exactly or in `f64`.
//!
//! `d` is taken as given and is not reduced to its squarefree part. When `d`
//! is a perfect square every value is folded into its rational part at
//! construction, so `b == 0` always holds for such fields.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_integer::{Integer, Roots};
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub type Rational = BigRational;

/// Number of significant digits used when rendering floats in reports.
pub const REPORT_DIGITS: usize = 18;

pub fn rat(n: i64, d: i64) -> Rational {
    Rational::new(BigInt::from(n), BigInt::from(d))
}

pub fn int(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

/// Parses `p`, `p/q` or a finite decimal such as `-0.25`.
pub fn parse_rational(s: &str) -> Result<Rational> {
    let s = s.trim();
    let bad = || Error::Config(format!("not a rational number: {s:?}"));
    if let Some((p, q)) = s.split_once('/') {
        let p: BigInt = p.trim().parse().map_err(|_| bad())?;
        let q: BigInt = q.trim().parse().map_err(|_| bad())?;
        if q.is_zero() {
            return Err(bad());
        }
        return Ok(Rational::new(p, q));
    }
    if let Some((whole, frac)) = s.split_once('.') {
        if frac.is_empty() || !frac.chars().all(|c| c.is_ascii_digit()) {
            return Err(bad());
        }
        let negative = whole.trim_start().starts_with('-');
        let whole: BigInt = match whole {
            "" | "-" | "+" => BigInt::zero(),
            w => w.parse().map_err(|_| bad())?,
        };
        let scale = BigInt::from(10u32).pow(frac.len() as u32);
        let frac: BigInt = frac.parse().map_err(|_| bad())?;
        let mut value = Rational::from_integer(whole.abs()) + Rational::new(frac, scale);
        if negative {
            value = -value;
        }
        return Ok(value);
    }
    let p: BigInt = s.parse().map_err(|_| bad())?;
    Ok(Rational::from_integer(p))
}

fn perfect_square_root(n: &BigInt) -> Option<BigInt> {
    if n.is_negative() {
        return None;
    }
    let r = n.sqrt();
    (&r * &r == *n).then_some(r)
}

/// Nonnegative rational square root, when it exists.
pub fn rational_sqrt(r: &Rational) -> Option<Rational> {
    let n = perfect_square_root(r.numer())?;
    let d = perfect_square_root(r.denom())?;
    Some(Rational::new(n, d))
}

fn sign_of(r: &Rational) -> Ordering {
    if r.is_zero() {
        Ordering::Equal
    } else if r.is_positive() {
        Ordering::Greater
    } else {
        Ordering::Less
    }
}

/// An element `a + b*sqrt(d)` of `Q(sqrt d)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct QuadNumber {
    a: Rational,
    b: Rational,
    d: u64,
}

impl QuadNumber {
    pub fn new(a: Rational, b: Rational, d: u64) -> Result<Self> {
        if d == 0 {
            return Err(Error::Domain("radicand must be positive".into()));
        }
        Ok(Self::normalized(a, b, d))
    }

    fn normalized(a: Rational, b: Rational, d: u64) -> Self {
        let k = d.sqrt();
        if k * k == d && !b.is_zero() {
            let a = a + b * int(k as i64);
            return QuadNumber { a, b: Rational::zero(), d };
        }
        QuadNumber { a, b, d }
    }

    pub fn from_rational(a: Rational, d: u64) -> Self {
        assert!(d > 0, "radicand must be positive");
        QuadNumber { a, b: Rational::zero(), d }
    }

    pub fn from_int(n: i64, d: u64) -> Self {
        Self::from_rational(int(n), d)
    }

    pub fn zero(d: u64) -> Self {
        Self::from_int(0, d)
    }

    pub fn one(d: u64) -> Self {
        Self::from_int(1, d)
    }

    /// `sqrt(d)` itself.
    pub fn sqrt_d(d: u64) -> Self {
        Self::normalized(Rational::zero(), Rational::one(), d)
    }

    pub fn a(&self) -> &Rational {
        &self.a
    }

    pub fn b(&self) -> &Rational {
        &self.b
    }

    pub fn d(&self) -> u64 {
        self.d
    }

    pub fn is_zero(&self) -> bool {
        self.a.is_zero() && self.b.is_zero()
    }

    /// The rational value, if the irrational part vanishes.
    pub fn as_rational(&self) -> Option<&Rational> {
        self.b.is_zero().then_some(&self.a)
    }

    pub fn is_integer(&self) -> bool {
        self.b.is_zero() && self.a.is_integer()
    }

    pub fn conjugate(&self) -> Self {
        QuadNumber { a: self.a.clone(), b: -self.b.clone(), d: self.d }
    }

    /// `a^2 - d b^2`, the product with the Galois conjugate.
    pub fn field_norm(&self) -> Rational {
        &self.a * &self.a - &self.b * &self.b * int(self.d as i64)
    }

    /// Exact sign, by rational sign analysis and one squaring.
    pub fn signum(&self) -> Ordering {
        let sa = sign_of(&self.a);
        let sb = sign_of(&self.b);
        match (sa, sb) {
            (_, Ordering::Equal) => sa,
            (Ordering::Equal, _) => sb,
            _ if sa == sb => sa,
            _ => {
                let a2 = &self.a * &self.a;
                let b2d = &self.b * &self.b * int(self.d as i64);
                if a2 > b2d {
                    sa
                } else {
                    sb
                }
            }
        }
    }

    pub fn abs(&self) -> Self {
        if self.signum() == Ordering::Less {
            -self
        } else {
            self.clone()
        }
    }

    fn check(&self, other: &Self) -> Result<()> {
        if self.d == other.d {
            Ok(())
        } else {
            Err(Error::RadicandMismatch(self.d, other.d))
        }
    }

    pub fn checked_add(&self, other: &Self) -> Result<Self> {
        self.check(other)?;
        Ok(Self::normalized(&self.a + &other.a, &self.b + &other.b, self.d))
    }

    pub fn checked_sub(&self, other: &Self) -> Result<Self> {
        self.check(other)?;
        Ok(Self::normalized(&self.a - &other.a, &self.b - &other.b, self.d))
    }

    pub fn checked_mul(&self, other: &Self) -> Result<Self> {
        self.check(other)?;
        let d = int(self.d as i64);
        let a = &self.a * &other.a + &self.b * &other.b * d;
        let b = &self.a * &other.b + &self.b * &other.a;
        Ok(Self::normalized(a, b, self.d))
    }

    pub fn inv(&self) -> Result<Self> {
        let n = self.field_norm();
        if n.is_zero() {
            return Err(Error::DivisionByZero);
        }
        Ok(Self::normalized(&self.a / &n, -(&self.b / &n), self.d))
    }

    pub fn checked_div(&self, other: &Self) -> Result<Self> {
        self.check(other)?;
        self.checked_mul(&other.inv()?)
    }

    pub fn scale(&self, k: &Rational) -> Self {
        QuadNumber { a: &self.a * k, b: &self.b * k, d: self.d }
    }

    /// Nonnegative square root inside the same field.
    ///
    /// `Ok(None)` means the value is not a square in `Q(sqrt d)`.
    pub fn try_sqrt(&self) -> Result<Option<Self>> {
        if self.signum() == Ordering::Less {
            return Err(Error::Domain(format!("square root of negative value {self}")));
        }
        let d = int(self.d as i64);
        if self.b.is_zero() {
            if let Some(r) = rational_sqrt(&self.a) {
                return Ok(Some(Self::from_rational(r, self.d)));
            }
            // c*sqrt(d) with c^2 d = a
            return Ok(rational_sqrt(&(&self.a / &d)).map(|c| Self::normalized(Rational::zero(), c, self.d)));
        }
        // (u + v sqrt d)^2 = a + b sqrt d  <=>  u^2 + d v^2 = a, 2uv = b
        let disc = &self.a * &self.a - &self.b * &self.b * &d;
        let Some(root) = rational_sqrt(&disc) else {
            return Ok(None);
        };
        let two = int(2);
        for u2 in [(&self.a + &root) / &two, (&self.a - &root) / &two] {
            let Some(u) = rational_sqrt(&u2) else { continue };
            if u.is_zero() {
                continue;
            }
            let v = &self.b / (&two * &u);
            for cand in [Self::normalized(u.clone(), v.clone(), self.d), Self::normalized(-u.clone(), -v.clone(), self.d)] {
                if cand.signum() != Ordering::Less && &cand * &cand == *self {
                    return Ok(Some(cand));
                }
            }
        }
        Ok(None)
    }

    /// `floor(self)` computed exactly.
    pub fn floor(&self) -> BigInt {
        let mut t = self.a.floor().to_integer();
        if !self.b.is_zero() {
            let n = self.b.numer();
            let m = self.b.denom();
            let s = (n * n * BigInt::from(self.d)).sqrt();
            let fb = if n.is_negative() { -s.div_floor(m) - 1 } else { s.div_floor(m) };
            t += fb;
        }
        loop {
            let below = self - &Self::from_rational(Rational::from_integer(t.clone()), self.d);
            if below.signum() == Ordering::Less {
                t -= 1;
                continue;
            }
            let above = below - Self::one(self.d);
            if above.signum() != Ordering::Less {
                t += 1;
                continue;
            }
            return t;
        }
    }

    /// `|self| * base^k` rounded to the nearest integer (ties to even).
    fn round_scaled_abs(&self, base: u32, k: i64) -> BigInt {
        let factor = if k >= 0 {
            Rational::from_integer(BigInt::from(base).pow(k as u32))
        } else {
            Rational::new(BigInt::one(), BigInt::from(base).pow((-k) as u32))
        };
        let z = self.abs().scale(&factor);
        let m = z.floor();
        let frac = z - Self::from_rational(Rational::from_integer(m.clone()) + rat(1, 2), self.d);
        match frac.signum() {
            Ordering::Greater => m + 1,
            Ordering::Equal if m.is_odd() => m + 1,
            _ => m,
        }
    }

    /// Finds `k` and `m` with `m = round(|x| base^k)` having exactly `digits` digits in `base`.
    fn normalize_scaled(&self, base: u32, digits: u64) -> (BigInt, i64) {
        let digit_count = |m: &BigInt| -> u64 {
            if m.is_zero() {
                0
            } else if base == 2 {
                m.bits()
            } else {
                m.to_str_radix(base).len() as u64
            }
        };
        let rough = self.rough_f64().abs();
        let mut k: i64 = if rough.is_finite() && rough > 0.0 {
            (digits as f64 - 1.0 - rough.log(base as f64)).floor() as i64
        } else {
            0
        };
        let mut step: i64 = 64;
        loop {
            let m = self.round_scaled_abs(base, k);
            let n = digit_count(&m);
            if n == 0 {
                k += step;
                step *= 2;
                continue;
            }
            match n.cmp(&digits) {
                Ordering::Less => k += (digits - n) as i64,
                Ordering::Greater => {
                    // rounding up to base^digits lands on digits+1 digits
                    if n == digits + 1 && m == BigInt::from(base).pow(digits as u32) {
                        return (BigInt::from(base).pow(digits as u32 - 1), k - 1);
                    }
                    k -= (n - digits) as i64;
                }
                Ordering::Equal => return (m, k),
            }
        }
    }

    fn rough_f64(&self) -> f64 {
        self.a.to_f64().unwrap_or(0.0) + self.b.to_f64().unwrap_or(0.0) * (self.d as f64).sqrt()
    }

    /// Correctly rounded (to nearest) binary approximation with `precision_bits` significant bits.
    pub fn approx(&self, precision_bits: u32) -> BigFloat {
        if self.is_zero() {
            return BigFloat { mantissa: BigInt::zero(), exponent: 0 };
        }
        let (m, k) = self.normalize_scaled(2, precision_bits as u64);
        let mantissa = if self.signum() == Ordering::Less { -m } else { m };
        BigFloat { mantissa, exponent: -k }
    }

    pub fn to_f64(&self) -> f64 {
        self.approx(53).to_f64()
    }

    /// Scientific notation with `digits` significant digits, e.g. `1.41421356237309505e0`.
    pub fn to_decimal_string(&self, digits: usize) -> String {
        let digits = digits.max(1);
        if self.is_zero() {
            return format_scientific(false, &"0".repeat(digits), 0);
        }
        let (m, k) = self.normalize_scaled(10, digits as u64);
        let exp10 = digits as i64 - 1 - k;
        format_scientific(self.signum() == Ordering::Less, &m.to_string(), exp10)
    }
}

fn format_scientific(negative: bool, digits: &str, exp10: i64) -> String {
    let sign = if negative { "-" } else { "" };
    let (head, tail) = digits.split_at(1);
    if tail.is_empty() {
        format!("{sign}{head}e{exp10}")
    } else {
        format!("{sign}{head}.{tail}e{exp10}")
    }
}

/// Renders an `f64` the same way exact values are rendered in reports.
pub fn format_f64(x: f64) -> String {
    format!("{:.*e}", REPORT_DIGITS - 1, x)
}

impl fmt::Display for QuadNumber {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.b.is_zero() {
            write!(f, "{}", self.a)
        } else if self.a.is_zero() {
            write!(f, "{}*sqrt({})", self.b, self.d)
        } else {
            write!(f, "{} + {}*sqrt({})", self.a, self.b, self.d)
        }
    }
}

impl PartialOrd for QuadNumber {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        self.checked_sub(other).ok().map(|x| x.signum())
    }
}

macro_rules! forward_binop {
    ($tr:ident, $method:ident, $checked:ident) => {
        impl<'a> $tr<&'a QuadNumber> for &'a QuadNumber {
            type Output = QuadNumber;
            fn $method(self, rhs: &'a QuadNumber) -> QuadNumber {
                self.$checked(rhs).unwrap_or_else(|e| panic!("{e}"))
            }
        }
        impl $tr<QuadNumber> for QuadNumber {
            type Output = QuadNumber;
            fn $method(self, rhs: QuadNumber) -> QuadNumber {
                (&self).$method(&rhs)
            }
        }
        impl<'a> $tr<&'a QuadNumber> for QuadNumber {
            type Output = QuadNumber;
            fn $method(self, rhs: &'a QuadNumber) -> QuadNumber {
                (&self).$method(rhs)
            }
        }
    };
}

forward_binop!(Add, add, checked_add);
forward_binop!(Sub, sub, checked_sub);
forward_binop!(Mul, mul, checked_mul);
forward_binop!(Div, div, checked_div);

impl Neg for QuadNumber {
    type Output = QuadNumber;
    fn neg(self) -> QuadNumber {
        QuadNumber { a: -self.a, b: -self.b, d: self.d }
    }
}

impl Neg for &QuadNumber {
    type Output = QuadNumber;
    fn neg(self) -> QuadNumber {
        -(self.clone())
    }
}

/// Serializes a rational as the string `p/q`.
pub fn serialize_rational<S: Serializer>(r: &Rational, serializer: S) -> std::result::Result<S::Ok, S::Error> {
    serializer.collect_str(r)
}

#[derive(Serialize, Deserialize)]
struct QuadRepr {
    a: String,
    b: String,
    d: u64,
}

impl Serialize for QuadNumber {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        QuadRepr { a: self.a.to_string(), b: self.b.to_string(), d: self.d }.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for QuadNumber {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let repr = QuadRepr::deserialize(deserializer)?;
        let a = parse_rational(&repr.a).map_err(serde::de::Error::custom)?;
        let b = parse_rational(&repr.b).map_err(serde::de::Error::custom)?;
        QuadNumber::new(a, b, repr.d).map_err(serde::de::Error::custom)
    }
}

/// `mantissa * 2^exponent`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BigFloat {
    pub mantissa: BigInt,
    pub exponent: i64,
}

impl BigFloat {
    pub fn to_f64(&self) -> f64 {
        if self.mantissa.is_zero() {
            return 0.0;
        }
        // keep at most 64 mantissa bits so the conversion below is exact
        let bits = self.mantissa.bits() as i64;
        let (m, e) = if bits > 64 {
            let shift = bits - 64;
            (&self.mantissa >> shift as usize, self.exponent + shift)
        } else {
            (self.mantissa.clone(), self.exponent)
        };
        let m = m.to_f64().unwrap_or(f64::NAN);
        if e > i32::MAX as i64 {
            return m * f64::INFINITY;
        }
        if e < i32::MIN as i64 {
            return 0.0 * m;
        }
        // split so intermediate powers stay finite
        let e = e as i32;
        let half = e / 2;
        m * 2f64.powi(half) * 2f64.powi(e - half)
    }
}

/// Field operations needed by the mode-generic algorithms.
///
/// Implemented exactly by [`QuadNumber`] and approximately by `f64`. The
/// context carries whatever a constant needs to be built (the radicand for
/// quadratic numbers, nothing for floats).
pub trait Scalar:
    Clone
    + fmt::Debug
    + PartialEq
    + Send
    + Sync
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
{
    type Ctx: Copy + fmt::Debug + PartialEq + Send + Sync;

    const EXACT: bool;

    fn ctx(&self) -> Self::Ctx;
    fn from_rational(ctx: Self::Ctx, r: &Rational) -> Self;
    fn signum(&self) -> Ordering;
    fn inv(&self) -> Option<Self>;
    /// Nonnegative square root, `None` when negative or not representable.
    fn sqrt(&self) -> Option<Self>;
    fn to_f64(&self) -> f64;
    fn to_json(&self) -> serde_json::Value;

    fn from_int(ctx: Self::Ctx, n: i64) -> Self {
        Self::from_rational(ctx, &int(n))
    }

    fn zero(ctx: Self::Ctx) -> Self {
        Self::from_int(ctx, 0)
    }

    fn one(ctx: Self::Ctx) -> Self {
        Self::from_int(ctx, 1)
    }

    fn is_zero(&self) -> bool {
        self.signum() == Ordering::Equal
    }

    fn abs(&self) -> Self {
        if self.signum() == Ordering::Less {
            -self.clone()
        } else {
            self.clone()
        }
    }

    fn cmp_to(&self, other: &Self) -> Ordering {
        (self.clone() - other.clone()).signum()
    }

    /// Zero test: exact equality for exact scalars, `|x| <= tol * scale` for floats.
    fn negligible(&self, tol: f64, scale: f64) -> bool {
        if Self::EXACT {
            self.is_zero()
        } else {
            self.to_f64().abs() <= tol * scale
        }
    }
}

impl Scalar for QuadNumber {
    type Ctx = u64;
    const EXACT: bool = true;

    fn ctx(&self) -> u64 {
        self.d
    }

    fn from_rational(ctx: u64, r: &Rational) -> Self {
        QuadNumber::from_rational(r.clone(), ctx)
    }

    fn signum(&self) -> Ordering {
        QuadNumber::signum(self)
    }

    fn inv(&self) -> Option<Self> {
        QuadNumber::inv(self).ok()
    }

    fn sqrt(&self) -> Option<Self> {
        self.try_sqrt().ok().flatten()
    }

    fn to_f64(&self) -> f64 {
        QuadNumber::to_f64(self)
    }

    fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("quadratic numbers serialize")
    }
}

impl Scalar for f64 {
    type Ctx = ();
    const EXACT: bool = false;

    fn ctx(&self) {}

    fn from_rational(_: (), r: &Rational) -> Self {
        r.to_f64().unwrap_or(f64::NAN)
    }

    fn signum(&self) -> Ordering {
        self.partial_cmp(&0.0).unwrap_or(Ordering::Equal)
    }

    fn inv(&self) -> Option<Self> {
        (*self != 0.0).then(|| 1.0 / self)
    }

    fn sqrt(&self) -> Option<Self> {
        (*self >= 0.0).then(|| f64::sqrt(*self))
    }

    fn to_f64(&self) -> f64 {
        *self
    }

    fn to_json(&self) -> serde_json::Value {
        serde_json::Value::String(format_f64(*self))
    }
}

/// A complex number with components in a [`Scalar`] field.
#[derive(Clone, Debug, PartialEq)]
pub struct Complex<S> {
    pub re: S,
    pub im: S,
}

pub type QuadComplex = Complex<QuadNumber>;

impl<S: Scalar> Complex<S> {
    pub fn new(re: S, im: S) -> Self {
        Complex { re, im }
    }

    pub fn zero(ctx: S::Ctx) -> Self {
        Complex { re: S::zero(ctx), im: S::zero(ctx) }
    }

    pub fn real(re: S) -> Self {
        let im = S::zero(re.ctx());
        Complex { re, im }
    }

    pub fn conj(&self) -> Self {
        Complex { re: self.re.clone(), im: -self.im.clone() }
    }

    pub fn norm_square(&self) -> S {
        self.re.clone() * self.re.clone() + self.im.clone() * self.im.clone()
    }

    pub fn is_zero(&self) -> bool {
        self.re.is_zero() && self.im.is_zero()
    }

    pub fn scale(&self, k: &S) -> Self {
        Complex { re: self.re.clone() * k.clone(), im: self.im.clone() * k.clone() }
    }

    pub fn checked_div(&self, other: &Self) -> Option<Self> {
        let n = other.norm_square().inv()?;
        Some((self.clone() * other.conj()).scale(&n))
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({ "re": self.re.to_json(), "im": self.im.to_json() })
    }
}

impl<S: Scalar> Add for Complex<S> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Complex { re: self.re + rhs.re, im: self.im + rhs.im }
    }
}

impl<S: Scalar> Sub for Complex<S> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Complex { re: self.re - rhs.re, im: self.im - rhs.im }
    }
}

impl<S: Scalar> Mul for Complex<S> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        let re = self.re.clone() * rhs.re.clone() - self.im.clone() * rhs.im.clone();
        let im = self.re * rhs.im + self.im * rhs.re;
        Complex { re, im }
    }
}

impl<S: Scalar> Neg for Complex<S> {
    type Output = Self;
    fn neg(self) -> Self {
        Complex { re: -self.re, im: -self.im }
    }
}

pub fn norm_square(z: &QuadComplex) -> QuadNumber {
    z.norm_square()
}
