//! The lax point `(B0, alpha0)` attached to a slope `mu`, exact values of
//! `Z_{alpha0}`, the masses of the family `delta_l = e^{lH} delta0`, the
//! Euler-form functional and the irrationality certificate separating masses
//! from integer-valued functionals.
//!
//! Hom-dimension sums are not computable from lattice data. Only `chi` and the
//! fact that such functionals take integer values are used here.

use num_bigint::BigInt;
use num_traits::Zero;
use rayon::prelude::*;
use serde::Serialize;

use crate::arith;
use crate::charge::{eval_z, eval_z_closed, omega_from_bw, spherical_wall_hits, BWParams, OmegaVector};
use crate::error::{Error, Result};
use crate::lattice::{MukaiVector, NSLattice, SphericalClass};
use crate::scalar::{int, QuadComplex, QuadNumber, Rational};
use crate::spherical::{delta_mu_plus, slope, SearchBox};

pub const DEFAULT_SEARCH_LIMIT: u64 = 1_000_000;

#[derive(Clone, Debug, PartialEq)]
pub struct LaxPoint {
    pub delta0: SphericalClass,
    pub b0: Vec<Rational>,
    pub alpha0: QuadNumber,
    pub d: u64,
    pub mu: Rational,
}

impl LaxPoint {
    pub fn r0(&self) -> i64 {
        self.delta0.vector().r
    }

    pub fn params(&self) -> BWParams<QuadNumber> {
        BWParams { b: self.b0.clone(), alpha: self.alpha0.clone() }
    }

    pub fn omega(&self, lat: &NSLattice) -> OmegaVector<QuadNumber> {
        omega_from_bw(lat, &self.params())
    }

    /// `a = r0^2 d`.
    pub fn a(&self) -> u64 {
        (self.r0() * self.r0()) as u64 * self.d
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "delta0": self.delta0.vector(),
            "r0": self.r0(),
            "B0": self.b0.iter().map(|b| b.to_string()).collect::<Vec<_>>(),
            "alpha0": self.alpha0,
            "alpha0_decimal": self.alpha0.to_decimal_string(crate::scalar::REPORT_DIGITS),
            "d": self.d,
            "mu": self.mu.to_string(),
        })
    }
}

pub fn build_lax_point(lat: &NSLattice, mu: &Rational, bx: &SearchBox) -> Result<LaxPoint> {
    let (classes, r0) = delta_mu_plus(lat, mu, bx);
    let r0 = r0.ok_or_else(|| Error::NoSphericalClass { mu: mu.to_string(), search_box: bx.to_string() })?;
    let delta0 = classes
        .into_iter()
        .filter(|c| c.vector().r == r0)
        .min_by(|x, y| (&x.vector().divisor, x.vector().s).cmp(&(&y.vector().divisor, y.vector().s)))
        .expect("minimal rank is attained");
    let d = lat.d();
    let b0: Vec<Rational> = delta0.vector().divisor.iter().map(|&x| Rational::new(x.into(), r0.into())).collect();
    // 1 / (r0 sqrt d) = sqrt d / (r0 d)
    let alpha0 = QuadNumber::new(Rational::zero(), Rational::new(1.into(), (r0 * d as i64).into()), d)?;
    let lp = LaxPoint { delta0, b0, alpha0, d, mu: mu.clone() };
    lp.check(lat)?;
    Ok(lp)
}

impl LaxPoint {
    fn check(&self, lat: &NSLattice) -> Result<()> {
        let v = self.delta0.vector();
        if v.r <= 0 || slope(lat, v).as_ref() != Some(&self.mu) {
            return Err(Error::Invariant(format!("{v} does not have slope {}", self.mu)));
        }
        let bh = self
            .b0
            .iter()
            .zip(lat.gram())
            .fold(Rational::zero(), |acc, (b, row)| acc + b * int(row.iter().zip(lat.ample()).map(|(g, h)| g * h).sum()));
        if bh != self.mu {
            return Err(Error::Invariant(format!("B0.H = {bh} differs from mu = {}", self.mu)));
        }
        if !eval_z(lat, &self.omega(lat), v).is_zero() {
            return Err(Error::Invariant(format!("Z_alpha0 does not vanish on {v}")));
        }
        Ok(())
    }
}

/// `(r0^2 Re Z, r0^2 sqrt(d) Im Z)` when both are integers.
pub fn discreteness_coordinates(lp: &LaxPoint, z: &QuadComplex) -> Option<(BigInt, BigInt)> {
    let r2 = int(lp.r0() * lp.r0());
    let re = z.re.scale(&r2);
    let im = (z.im.clone() * QuadNumber::sqrt_d(lp.d)).scale(&r2);
    let as_int = |q: &QuadNumber| q.is_integer().then(|| q.a().to_integer());
    Some((as_int(&re)?, as_int(&im)?))
}

/// Exact `Z_{alpha0}(v)`; fails if the value is off the lattice `r0^-2 (Z + d^-1/2 Z)`.
pub fn z_alpha0(lat: &NSLattice, lp: &LaxPoint, v: &MukaiVector) -> Result<QuadComplex> {
    lat.check_dim(v)?;
    let z = eval_z_closed(lat, &lp.params(), v);
    if discreteness_coordinates(lp, &z).is_none() {
        return Err(Error::Invariant(format!("Z_alpha0({v}) = {} + {} i is not discrete", z.re, z.im)));
    }
    Ok(z)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FamilyRow {
    pub ell: i64,
    pub delta: MukaiVector,
    #[serde(skip)]
    pub z: QuadComplex,
    pub squared_mass: QuadNumber,
}

/// `d l^2 (r0^2 d l^2 + 4)`.
pub fn family_mass_formula(lp: &LaxPoint, ell: i64) -> BigInt {
    let d = BigInt::from(lp.d);
    let l2 = BigInt::from(ell) * ell;
    let r2 = BigInt::from(lp.r0()) * lp.r0();
    &d * &l2 * (r2 * &d * &l2 + 4)
}

/// Squared masses of `e^{lH} delta0` for `l_min <= l <= l_max`, computed from the
/// closed formula and from `|Z_{alpha0}|^2`; the two must agree.
pub fn family_masses(lat: &NSLattice, lp: &LaxPoint, l_min: i64, l_max: i64) -> Result<Vec<FamilyRow>> {
    if l_min > l_max {
        return Err(Error::Domain(format!("empty range {l_min}..={l_max}")));
    }
    (l_min..=l_max)
        .into_par_iter()
        .map(|ell| {
            let delta = lat.tensor_line_bundle(ell, lp.delta0.vector());
            let z = z_alpha0(lat, lp, &delta)?;
            let m2 = z.norm_square();
            let formula = QuadNumber::from_rational(Rational::from_integer(family_mass_formula(lp, ell)), lp.d);
            if m2 != formula {
                return Err(Error::Invariant(format!("|Z(delta_{ell})|^2 = {m2} but the closed formula gives {formula}")));
            }
            Ok(FamilyRow { ell, delta, z, squared_mass: m2 })
        })
        .collect()
}

/// `chi(A, E) = -<v(A), v(E)>`.
pub fn chi_functional(lat: &NSLattice, a_class: &SphericalClass, v: &MukaiVector) -> i64 {
    -lat.pair(a_class.vector(), v)
}

/// Spherical classes in the box with `Z_{alpha0} = 0`. These span part of the
/// kernel of `Z_{alpha0}`; nothing is claimed about realizing objects.
pub fn kernel_classes(lat: &NSLattice, lp: &LaxPoint, bx: &SearchBox) -> Vec<SphericalClass> {
    spherical_wall_hits(lat, &lp.omega(lat), bx, 0.0)
}

/// For `f(x) = a x^2 + 4`: `p` prime, `p = 1 (mod 4)`, `p > max(a, 4)`,
/// `p` does not divide `f(l0)` and `p` divides `f(l1)` exactly once.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct IrrationalityCertificate {
    pub a: u64,
    pub p: u64,
    pub l0: u64,
    pub l1: u64,
    pub val_l0: u32,
    pub val_l1: u32,
}

fn f_value(a: u64, x: u64) -> BigInt {
    BigInt::from(a) * x * x + 4
}

impl IrrationalityCertificate {
    /// Checks every condition by trial division and direct remainders.
    pub fn verify(&self) -> Result<()> {
        let fail = |what: &str| Err(Error::Invariant(format!("certificate {self:?}: {what}")));
        let p = self.p;
        if p < 2 || (2..).take_while(|k: &u64| k * k <= p).any(|k| p % k == 0) {
            return fail("p is not prime");
        }
        if p % 4 != 1 {
            return fail("p is not 1 mod 4");
        }
        if p <= self.a.max(4) {
            return fail("p is too small");
        }
        if self.l0 == 0 || self.l1 == 0 {
            return fail("l0 and l1 must be positive");
        }
        let pb = BigInt::from(p);
        let f0 = f_value(self.a, self.l0);
        let f1 = f_value(self.a, self.l1);
        if (&f0 % &pb).is_zero() || self.val_l0 != 0 {
            return fail("p divides f(l0)");
        }
        if !(&f1 % &pb).is_zero() || (&f1 % (&pb * &pb)).is_zero() || self.val_l1 != 1 {
            return fail("p does not divide f(l1) exactly once");
        }
        Ok(())
    }
}

/// Residue class `x mod q` such that every prime `p` in it satisfies
/// `(-a / p) = 1`: `x = 1` modulo 4 (modulo 8 if the squarefree part is even)
/// and modulo every odd prime factor of the squarefree part.
fn progression(a: u64) -> (u64, u64) {
    let (_, b) = arith::squarefree_split(a);
    let mut congruences = vec![if b % 2 == 0 { (1, 8) } else { (1, 4) }];
    congruences.extend(arith::prime_factors(b).into_iter().filter(|&q| q != 2).map(|q| (1, q)));
    arith::crt(&congruences).expect("moduli are coprime")
}

pub fn irrationality_certificate(a: u64, search_limit: u64) -> Result<IrrationalityCertificate> {
    if a == 0 {
        return Err(Error::Domain("a must be positive".into()));
    }
    let (x, q) = progression(a);
    let floor = a.max(4);
    let p = (0..search_limit)
        .into_par_iter()
        .map(|k| x as u128 + k as u128 * q as u128)
        .find_first(|&n| n <= u64::MAX as u128 && n as u64 > floor && arith::is_prime(n as u64) && arith::legendre(-(a as i64), n as u64) == 1)
        .ok_or(Error::SearchLimitExceeded(search_limit))? as u64;

    let a_inv = arith::inv_mod(a % p, p).expect("p exceeds a");
    let target = arith::mul_mod(p - 4 % p, a_inv, p);
    let mut l1 = arith::sqrt_mod(target, p).ok_or_else(|| Error::Invariant(format!("-4/{a} is not a square mod {p}")))?;
    let p2 = BigInt::from(p) * p;
    if (f_value(a, l1) % &p2).is_zero() {
        l1 += p;
    }
    let pb = BigInt::from(p);
    let l0 = (1..).find(|&x| !(f_value(a, x) % &pb).is_zero()).expect("f has at most two roots mod p");
    let cert = IrrationalityCertificate {
        a,
        p,
        l0,
        l1,
        val_l0: arith::valuation(&f_value(a, l0), p),
        val_l1: arith::valuation(&f_value(a, l1), p),
    };
    cert.verify()?;
    Ok(cert)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SeparationReport {
    pub certificate: IrrationalityCertificate,
    pub delta_l0: MukaiVector,
    pub delta_l1: MukaiVector,
    pub squared_mass_l0: String,
    pub squared_mass_l1: String,
    pub squared_mass_ratio: String,
    pub valuation: i64,
    pub ratio_irrational: bool,
    pub chi_l0: i64,
    pub chi_l1: i64,
    pub conclusion: String,
}

/// Compares the mass ratio `m(delta_l1) / m(delta_l0)`, whose square has odd
/// `p`-adic valuation, with ratios of integer-valued functionals.
pub fn separate_from_hom_functionals(lat: &NSLattice, lp: &LaxPoint, search_limit: u64) -> Result<SeparationReport> {
    let cert = irrationality_certificate(lp.a(), search_limit)?;
    let (l0, l1) = (cert.l0 as i64, cert.l1 as i64);
    let family_row = |ell: i64| -> Result<(MukaiVector, BigInt)> {
        let delta = lat.tensor_line_bundle(ell, lp.delta0.vector());
        let m2 = z_alpha0(lat, lp, &delta)?.norm_square();
        let formula = family_mass_formula(lp, ell);
        if m2 != QuadNumber::from_rational(Rational::from_integer(formula.clone()), lp.d) {
            return Err(Error::Invariant(format!("mass mismatch at l = {ell}")));
        }
        Ok((delta, formula))
    };
    let (delta_l0, m0) = family_row(l0)?;
    let (delta_l1, m1) = family_row(l1)?;
    let ratio = Rational::new(m1.clone(), m0.clone());
    let valuation = arith::valuation(ratio.numer(), cert.p) as i64 - arith::valuation(ratio.denom(), cert.p) as i64;
    let ratio_irrational = valuation % 2 != 0;
    let chi_l0 = chi_functional(lat, &lp.delta0, &delta_l0);
    let chi_l1 = chi_functional(lat, &lp.delta0, &delta_l1);
    let conclusion = if ratio_irrational {
        format!(
            "m(delta_{l1})^2 / m(delta_{l0})^2 has odd {}-adic valuation, so the mass ratio is irrational; \
             functionals counting Ext dimensions from a fixed object take integer values and have rational ratios, \
             so none of them equals the mass function at alpha0",
            cert.p
        )
    } else {
        "valuation is even; no separation obtained".into()
    };
    Ok(SeparationReport {
        certificate: cert,
        delta_l0,
        delta_l1,
        squared_mass_l0: m0.to_string(),
        squared_mass_l1: m1.to_string(),
        squared_mass_ratio: ratio.to_string(),
        valuation,
        ratio_irrational,
        chi_l0,
        chi_l1,
        conclusion,
    })
}

/// `f(l) = a l^2 + 4` for the lax point's `a`.
pub fn f_of(lp: &LaxPoint, ell: u64) -> BigInt {
    f_value(lp.a(), ell)
}
