//! Central charges `Z = <Omega, ->` on the Mukai lattice, the family
//! `Z_{B, alpha H}`, membership in the positive component, spherical walls
//! and numerical walls along an `alpha`-line.

use std::cmp::Ordering;

use num_traits::{Signed, Zero};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::{MukaiVector, NSLattice, SphericalClass, SphericalNormBasis};
use crate::scalar::{int, rat, Complex, QuadNumber, Rational, Scalar};
use crate::spherical::{enumerate_spherical, SearchBox};

/// Default relative tolerance for float-mode zero tests.
pub const FLOAT_TOL: f64 = 1e-9;

/// A real vector `(r, D, s)` of the Mukai lattice tensored with a scalar field.
#[derive(Clone, Debug, PartialEq)]
pub struct RealVector<S> {
    pub r: S,
    pub divisor: Vec<S>,
    pub s: S,
}

impl<S: Scalar> RealVector<S> {
    pub fn from_lattice(ctx: S::Ctx, v: &MukaiVector) -> Self {
        RealVector {
            r: S::from_int(ctx, v.r),
            divisor: v.divisor.iter().map(|&x| S::from_int(ctx, x)).collect(),
            s: S::from_int(ctx, v.s),
        }
    }
}

/// `<x, y>` for real vectors.
pub fn real_pairing<S: Scalar>(lat: &NSLattice, x: &RealVector<S>, y: &RealVector<S>) -> S {
    let ctx = x.r.ctx();
    let mut acc = S::zero(ctx);
    for (i, row) in lat.gram().iter().enumerate() {
        for (j, &g) in row.iter().enumerate() {
            if g != 0 {
                acc = acc + x.divisor[i].clone() * y.divisor[j].clone() * S::from_int(ctx, g);
            }
        }
    }
    acc - x.s.clone() * y.r.clone() - y.s.clone() * x.r.clone()
}

/// A complexified Mukai vector.
#[derive(Clone, Debug, PartialEq)]
pub struct OmegaVector<S> {
    pub r: Complex<S>,
    pub divisor: Vec<Complex<S>>,
    pub s: Complex<S>,
}

impl<S: Scalar> OmegaVector<S> {
    pub fn ctx(&self) -> S::Ctx {
        self.r.re.ctx()
    }

    pub fn re(&self) -> RealVector<S> {
        RealVector { r: self.r.re.clone(), divisor: self.divisor.iter().map(|z| z.re.clone()).collect(), s: self.s.re.clone() }
    }

    pub fn im(&self) -> RealVector<S> {
        RealVector { r: self.r.im.clone(), divisor: self.divisor.iter().map(|z| z.im.clone()).collect(), s: self.s.im.clone() }
    }

    pub fn from_parts(re: RealVector<S>, im: RealVector<S>) -> Self {
        OmegaVector {
            r: Complex::new(re.r, im.r),
            divisor: re.divisor.into_iter().zip(im.divisor).map(|(a, b)| Complex::new(a, b)).collect(),
            s: Complex::new(re.s, im.s),
        }
    }

    pub fn conj(&self) -> Self {
        OmegaVector { r: self.r.conj(), divisor: self.divisor.iter().map(Complex::conj).collect(), s: self.s.conj() }
    }

    /// Multiplication by a complex scalar (the `C`-action on charges).
    pub fn rotate(&self, k: &Complex<S>) -> Self {
        OmegaVector {
            r: self.r.clone() * k.clone(),
            divisor: self.divisor.iter().map(|z| z.clone() * k.clone()).collect(),
            s: self.s.clone() * k.clone(),
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "r": self.r.to_json(),
            "D": self.divisor.iter().map(Complex::to_json).collect::<Vec<_>>(),
            "s": self.s.to_json(),
        })
    }
}

/// `(B, alpha)` with `omega = alpha H`.
#[derive(Clone, Debug, PartialEq)]
pub struct BWParams<S> {
    pub b: Vec<Rational>,
    pub alpha: S,
}

impl<S: Scalar> BWParams<S> {
    pub fn new(lat: &NSLattice, b: Vec<Rational>, alpha: S) -> Result<Self> {
        if b.len() != lat.rank() {
            return Err(Error::Dimension { expected: lat.rank(), got: b.len() });
        }
        if alpha.signum() != Ordering::Greater {
            return Err(Error::Domain("alpha must be positive".into()));
        }
        Ok(BWParams { b, alpha })
    }
}

fn rational_dot(lat: &NSLattice, x: &[Rational], y: &[Rational]) -> Rational {
    let mut acc = Rational::zero();
    for (i, row) in lat.gram().iter().enumerate() {
        for (j, &g) in row.iter().enumerate() {
            if g != 0 {
                acc += &x[i] * &y[j] * int(g);
            }
        }
    }
    acc
}

fn rational_dot_int(lat: &NSLattice, x: &[Rational], y: &[i64]) -> Rational {
    let yq: Vec<Rational> = y.iter().map(|&v| int(v)).collect();
    rational_dot(lat, x, &yq)
}

/// `exp(B + i alpha H) = (1, B + i alpha H, (B^2 - alpha^2 H^2)/2 + i alpha B.H)`.
pub fn omega_from_bw<S: Scalar>(lat: &NSLattice, p: &BWParams<S>) -> OmegaVector<S> {
    let ctx = p.alpha.ctx();
    let q = |r: &Rational| S::from_rational(ctx, r);
    let b2 = rational_dot(lat, &p.b, &p.b);
    let bh = rational_dot_int(lat, &p.b, lat.ample());
    let alpha2 = p.alpha.clone() * p.alpha.clone();
    let d = S::from_int(ctx, lat.d() as i64);
    OmegaVector {
        r: Complex::real(S::one(ctx)),
        divisor: p
            .b
            .iter()
            .zip(lat.ample())
            .map(|(b, &h)| Complex::new(q(b), p.alpha.clone() * S::from_int(ctx, h)))
            .collect(),
        s: Complex::new(q(&(b2 * rat(1, 2))) - alpha2 * d, p.alpha.clone() * q(&bh)),
    }
}

/// `Z(v) = <Omega, v>`.
pub fn eval_z<S: Scalar>(lat: &NSLattice, omega: &OmegaVector<S>, v: &MukaiVector) -> Complex<S> {
    let ctx = omega.ctx();
    let mut acc = Complex::zero(ctx);
    for (i, row) in lat.gram().iter().enumerate() {
        let gd: i64 = row.iter().zip(&v.divisor).map(|(g, x)| g * x).sum();
        if gd != 0 {
            acc = acc + omega.divisor[i].scale(&S::from_int(ctx, gd));
        }
    }
    acc - omega.s.scale(&S::from_int(ctx, v.r)) - omega.r.scale(&S::from_int(ctx, v.s))
}

/// `Z_{B,alpha}(v) = B.D - s - r B^2/2 + r d alpha^2 + i alpha (D - r B).H`, evaluated
/// directly from the parameters.
pub fn eval_z_closed<S: Scalar>(lat: &NSLattice, p: &BWParams<S>, v: &MukaiVector) -> Complex<S> {
    let ctx = p.alpha.ctx();
    let b_d = rational_dot_int(lat, &p.b, &v.divisor);
    let b2 = rational_dot(lat, &p.b, &p.b);
    let bh = rational_dot_int(lat, &p.b, lat.ample());
    let r = int(v.r);
    let real_rational = b_d - int(v.s) - &r * b2 * rat(1, 2);
    let alpha2 = p.alpha.clone() * p.alpha.clone();
    let re = S::from_rational(ctx, &real_rational) + S::from_int(ctx, v.r * lat.d() as i64) * alpha2;
    let im_rational = int(lat.dot_h(&v.divisor)) - r * bh;
    Complex::new(re, p.alpha.clone() * S::from_rational(ctx, &im_rational))
}

fn reference_plane<S: Scalar>(lat: &NSLattice, ctx: S::Ctx) -> (RealVector<S>, RealVector<S>) {
    // exp(iH) = (1, iH, -d)
    let rho = lat.rank();
    let x0 = RealVector::from_lattice(ctx, &MukaiVector::new(1, vec![0; rho], -(lat.d() as i64)));
    let y0 = RealVector::from_lattice(ctx, &MukaiVector::new(0, lat.ample().to_vec(), 0));
    (x0, y0)
}

/// Gram matrix `[[<X,X>, <X,Y>], [<X,Y>, <Y,Y>]]` of `X = Re Omega`, `Y = Im Omega`.
pub fn plane_gram<S: Scalar>(lat: &NSLattice, omega: &OmegaVector<S>) -> [[S; 2]; 2] {
    let (x, y) = (omega.re(), omega.im());
    let xy = real_pairing(lat, &x, &y);
    [[real_pairing(lat, &x, &x), xy.clone()], [xy, real_pairing(lat, &y, &y)]]
}

/// Determinant of the pairings between `(Re, Im)` of `omega` and of `exp(iH)`.
pub fn orientation<S: Scalar>(lat: &NSLattice, omega: &OmegaVector<S>) -> S {
    let (x, y) = (omega.re(), omega.im());
    let (x0, y0) = reference_plane(lat, omega.ctx());
    real_pairing(lat, &x, &x0) * real_pairing(lat, &y, &y0) - real_pairing(lat, &x, &y0) * real_pairing(lat, &y, &x0)
}

/// `Re Omega, Im Omega` span a positive definite plane oriented like `exp(iH)`.
pub fn in_p_plus<S: Scalar>(lat: &NSLattice, omega: &OmegaVector<S>) -> bool {
    let g = plane_gram(lat, omega);
    let det = g[0][0].clone() * g[1][1].clone() - g[0][1].clone() * g[1][0].clone();
    g[0][0].signum() == Ordering::Greater && det.signum() == Ordering::Greater && orientation(lat, omega).signum() == Ordering::Greater
}

/// Spherical classes in the box on which `Z` vanishes (`|Z| <= tol * max(1, |v|_inf)` for floats).
pub fn spherical_wall_hits<S: Scalar>(lat: &NSLattice, omega: &OmegaVector<S>, bx: &SearchBox, tol: f64) -> Vec<SphericalClass> {
    enumerate_spherical(lat, bx)
        .into_par_iter()
        .filter(|c| {
            let z = eval_z(lat, omega, c.vector());
            let scale = (c.vector().sup_norm() as f64).max(1.0);
            z.re.negligible(tol, scale) && z.im.negligible(tol, scale)
        })
        .collect()
}

/// Real part and imaginary part divided by `alpha` of `Z_{B0,alpha}(v)`:
/// `Re = c_v + r_v d alpha^2` with `c_v = B0.D - s - r B0^2/2`, `Im / alpha = I_v = (D - r B0).H`.
#[derive(Clone, Debug, PartialEq)]
pub struct AlphaLineData {
    pub c: Rational,
    pub r: i64,
    pub i: Rational,
}

pub fn alpha_line_data(lat: &NSLattice, b0: &[Rational], v: &MukaiVector) -> AlphaLineData {
    let b2 = rational_dot(lat, b0, b0);
    let bh = rational_dot_int(lat, b0, lat.ample());
    let c = rational_dot_int(lat, b0, &v.divisor) - int(v.s) - int(v.r) * b2 * rat(1, 2);
    let i = int(lat.dot_h(&v.divisor)) - int(v.r) * bh;
    AlphaLineData { c, r: v.r, i }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Wall {
    /// `alpha^2`, always rational.
    #[serde(serialize_with = "crate::scalar::serialize_rational")]
    pub alpha_squared: Rational,
    /// `alpha` itself when it lies in `Q(sqrt d)`.
    pub alpha: Option<QuadNumber>,
    /// Lexicographically sorted candidate subclasses producing this wall.
    pub witnesses: Vec<MukaiVector>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WallScan {
    pub walls: Vec<Wall>,
    /// Candidates whose charge stays aligned with `delta` for every `alpha`.
    pub aligned: Vec<MukaiVector>,
    pub candidates: usize,
}

enum Alignment {
    Never,
    Always,
    At(Rational),
}

/// Solves `d alpha^2 (I_w r_delta - I_delta r_w) + (I_w c_delta - I_delta c_w) = 0`.
fn alignment(d: u64, delta: &AlphaLineData, w: &AlphaLineData) -> Alignment {
    let lead = int(d as i64) * (&w.i * int(delta.r) - &delta.i * int(w.r));
    let constant = &w.i * &delta.c - &delta.i * &w.c;
    if lead.is_zero() {
        return if constant.is_zero() { Alignment::Always } else { Alignment::Never };
    }
    Alignment::At(-constant / lead)
}

/// Numerical walls for `delta` on the line `{Z_{B0, alpha H} : alpha > alpha_min}`.
///
/// Candidates `w` range over the box with `w != 0`, `w != delta`, `w^2 >= -2` and
/// `(delta - w)^2 >= -2`.
pub fn wall_scan_alpha(lat: &NSLattice, b0: &[Rational], delta: &MukaiVector, alpha_min: &QuadNumber, bx: &SearchBox) -> Result<WallScan> {
    if alpha_min.signum() != Ordering::Greater {
        return Err(Error::Domain("alpha_min must be positive".into()));
    }
    if b0.len() != lat.rank() {
        return Err(Error::Dimension { expected: lat.rank(), got: b0.len() });
    }
    lat.check_dim(delta)?;
    let alpha_min_sq = alpha_min * alpha_min;
    let dd = alpha_line_data(lat, b0, delta);
    let candidates: Vec<MukaiVector> = bx
        .vectors(lat.rank())
        .into_par_iter()
        .filter(|w| {
            let rest = delta.sub(w);
            !w.is_zero() && !rest.is_zero() && lat.square(w) >= -2 && lat.square(&rest) >= -2
        })
        .collect();
    let outcomes: Vec<(MukaiVector, Alignment)> = candidates
        .par_iter()
        .map(|w| (w.clone(), alignment(lat.d(), &dd, &alpha_line_data(lat, b0, w))))
        .collect();

    let mut aligned = Vec::new();
    let mut roots: Vec<(Rational, MukaiVector)> = Vec::new();
    for (w, outcome) in outcomes {
        match outcome {
            Alignment::Never => {}
            Alignment::Always => aligned.push(w),
            Alignment::At(a2) => {
                if a2.is_positive() && QuadNumber::from_rational(a2.clone(), alpha_min.d()) > alpha_min_sq {
                    roots.push((a2, w));
                }
            }
        }
    }
    roots.sort();
    let mut walls: Vec<Wall> = Vec::new();
    for (a2, w) in roots {
        match walls.last_mut() {
            Some(last) if last.alpha_squared == a2 => last.witnesses.push(w),
            _ => {
                let alpha = QuadNumber::from_rational(a2.clone(), lat.d()).try_sqrt().ok().flatten();
                walls.push(Wall { alpha_squared: a2, alpha, witnesses: vec![w] });
            }
        }
    }
    Ok(WallScan { walls, aligned, candidates: candidates.len() })
}

/// Box-relative lower bound for the support constant: the largest
/// `||v|| / |Z(v)|` over massive spherical classes, kept squared so the
/// comparison stays inside the scalar field.
#[derive(Clone, Debug, PartialEq)]
pub struct SupportEstimate<S> {
    pub ratio_squared: S,
    pub witness: SphericalClass,
    pub value: f64,
    pub massive_classes: usize,
}

pub fn support_constant<S: Scalar>(
    lat: &NSLattice,
    basis: &SphericalNormBasis,
    omega: &OmegaVector<S>,
    bx: &SearchBox,
    tol: f64,
) -> Result<SupportEstimate<S>> {
    basis.validate(lat)?;
    let ctx = omega.ctx();
    let ratios: Vec<(S, SphericalClass)> = enumerate_spherical(lat, bx)
        .into_par_iter()
        .filter_map(|c| {
            let z = eval_z(lat, omega, c.vector());
            let scale = (c.vector().sup_norm() as f64).max(1.0);
            if z.re.negligible(tol, scale) && z.im.negligible(tol, scale) {
                return None;
            }
            let n = S::from_int(ctx, basis.norm(lat, c.vector()));
            let ratio = n.clone() * n * z.norm_square().inv()?;
            Some((ratio, c))
        })
        .collect();
    let massive_classes = ratios.len();
    let mut best: Option<(S, SphericalClass)> = None;
    for (ratio, c) in ratios {
        let better = match &best {
            None => true,
            Some((b, _)) => ratio.cmp_to(b) == Ordering::Greater,
        };
        if better {
            best = Some((ratio, c));
        }
    }
    let (ratio_squared, witness) = best.ok_or(Error::EmptySupport)?;
    let value = ratio_squared.to_f64().sqrt();
    Ok(SupportEstimate { ratio_squared, witness, value, massive_classes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::MukaiVector;
    use proptest::prelude::*;

    fn mv(r: i64, d: &[i64], s: i64) -> MukaiVector {
        MukaiVector::new(r, d.to_vec(), s)
    }

    fn exact(n: i64, d: u64) -> QuadNumber {
        QuadNumber::from_int(n, d)
    }

    fn c(re: i64, im: i64, d: u64) -> Complex<QuadNumber> {
        Complex::new(exact(re, d), exact(im, d))
    }

    #[test]
    fn omega_examples() {
        let lat = NSLattice::rank_one(1);
        let o = omega_from_bw(&lat, &BWParams::new(&lat, vec![int(0)], exact(1, 1)).unwrap());
        assert_eq!(o, OmegaVector { r: c(1, 0, 1), divisor: vec![c(0, 1, 1)], s: c(-1, 0, 1) });
        let o = omega_from_bw(&lat, &BWParams::new(&lat, vec![int(1)], exact(1, 1)).unwrap());
        assert_eq!(o, OmegaVector { r: c(1, 0, 1), divisor: vec![c(1, 1, 1)], s: c(0, 2, 1) });
        for a in 1..5 {
            let o = omega_from_bw(&NSLattice::rank_one(3), &BWParams::new(&NSLattice::rank_one(3), vec![int(0)], exact(a, 3)).unwrap());
            assert_eq!(o.s.re, exact(-a * a * 3, 3));
        }
        assert!(BWParams::new(&lat, vec![int(0)], exact(0, 1)).is_err());
    }

    #[test]
    fn eval_examples() {
        let lat = NSLattice::rank_one(1);
        let p = BWParams::new(&lat, vec![rat(1, 3)], exact(2, 1)).unwrap();
        let o = omega_from_bw(&lat, &p);
        assert_eq!(eval_z(&lat, &o, &mv(0, &[0], 1)), c(-1, 0, 1));
        let p = BWParams::new(&lat, vec![int(0)], exact(1, 1)).unwrap();
        let o = omega_from_bw(&lat, &p);
        assert_eq!(eval_z(&lat, &o, &mv(1, &[0], 1)), c(0, 0, 1));
        assert_eq!(eval_z(&lat, &o, &mv(1, &[0], -1)), c(2, 0, 1));
    }

    #[test]
    fn positive_component_examples() {
        let lat = NSLattice::rank_one(1);
        let o = omega_from_bw(&lat, &BWParams::new(&lat, vec![int(0)], exact(1, 1)).unwrap());
        let g = plane_gram(&lat, &o);
        assert_eq!(g, [[exact(2, 1), exact(0, 1)], [exact(0, 1), exact(2, 1)]]);
        assert!(in_p_plus(&lat, &o));
        assert!(!in_p_plus(&lat, &o.conj()));
        let flat = OmegaVector::from_parts(o.re(), RealVector::from_lattice(1, &MukaiVector::zero(1)));
        assert!(!in_p_plus(&lat, &flat));
    }

    #[test]
    fn wall_hits_examples() {
        let lat = NSLattice::rank_one(1);
        let bx = SearchBox::new(8, 8, 80);
        let o = omega_from_bw(&lat, &BWParams::new(&lat, vec![int(0)], exact(1, 1)).unwrap());
        let hits = spherical_wall_hits(&lat, &o, &bx, FLOAT_TOL);
        assert!(hits.iter().any(|h| h.vector() == &mv(1, &[0], 1)));
        let o = omega_from_bw(&lat, &BWParams::new(&lat, vec![int(0)], exact(2, 1)).unwrap());
        assert!(spherical_wall_hits(&lat, &o, &bx, FLOAT_TOL).is_empty());
        let pf = BWParams::new(&lat, vec![int(0)], 1.0f64).unwrap();
        let mut of = omega_from_bw(&lat, &pf);
        // irrational B shift
        of.divisor[0].re = std::f64::consts::PI / 7.0;
        of.s.re = of.divisor[0].re * of.divisor[0].re - 1.0;
        of.s.im = 2.0 * of.divisor[0].re;
        assert!(spherical_wall_hits(&lat, &of, &bx, FLOAT_TOL).is_empty());
    }

    #[test]
    fn wall_scan_degenerate_candidates() {
        let lat = NSLattice::rank_one(1);
        let b0 = vec![int(0)];
        let delta = mv(1, &[0], -1);
        let w = mv(1, &[0], 1);
        let dd = alpha_line_data(&lat, &b0, &delta);
        let wd = alpha_line_data(&lat, &b0, &w);
        assert!(dd.i.is_zero() && wd.i.is_zero());
        assert!(matches!(alignment(lat.d(), &dd, &wd), Alignment::Always));
        let scan = wall_scan_alpha(&lat, &b0, &delta, &exact(1, 1), &SearchBox::new(1, 1, 2)).unwrap();
        assert!(scan.aligned.contains(&w));
        assert!(!scan.aligned.contains(&delta));
        assert!(wall_scan_alpha(&lat, &b0, &delta, &exact(0, 1), &SearchBox::new(1, 1, 2)).is_err());
    }

    #[test]
    fn support_constant_examples() {
        let lat = NSLattice::rank_one(1);
        let delta0 = SphericalClass::new(&lat, mv(1, &[0], 1)).unwrap();
        let basis = SphericalNormBasis::new(&lat, delta0).unwrap();
        let o = omega_from_bw(&lat, &BWParams::new(&lat, vec![int(0)], exact(1, 1)).unwrap());
        assert_eq!(support_constant(&lat, &basis, &o, &SearchBox::new(1, 0, 1), FLOAT_TOL).unwrap_err(), Error::EmptySupport);
        let small = support_constant(&lat, &basis, &o, &SearchBox::new(2, 2, 10), FLOAT_TOL).unwrap();
        let large = support_constant(&lat, &basis, &o, &SearchBox::new(4, 4, 40), FLOAT_TOL).unwrap();
        assert!(large.ratio_squared >= small.ratio_squared);
        assert!(small.value > 0.0 && small.value.is_finite());
    }

    fn params() -> impl Strategy<Value = (i64, i64, i64, i64)> {
        (-9i64..9, 1i64..6, 1i64..9, 1i64..6)
    }

    proptest! {
        #[test]
        fn closed_form_matches_pairing((bn, bd, an, ad) in params(), r in -5i64..5, x in -5i64..5, y in -5i64..5, s in -9i64..9) {
            let lat = NSLattice::new("u", vec![vec![2, 1], vec![1, -2]], vec![1, 0]).unwrap();
            let d = lat.d();
            let alpha = QuadNumber::from_rational(rat(an, ad), d);
            let p = BWParams::new(&lat, vec![rat(bn, bd), rat(-bn, bd + 1)], alpha).unwrap();
            let o = omega_from_bw(&lat, &p);
            let v = mv(r, &[x, y], s);
            prop_assert_eq!(eval_z(&lat, &o, &v), eval_z_closed(&lat, &p, &v));
            let w = mv(s, &[y, r], x);
            prop_assert_eq!(eval_z(&lat, &o, &v.add(&w)), eval_z(&lat, &o, &v) + eval_z(&lat, &o, &w));
            prop_assert_eq!(eval_z(&lat, &o, &v.scale(3)), eval_z(&lat, &o, &v).scale(&exact(3, d)));
            prop_assert!(in_p_plus(&lat, &o));
            prop_assert!(!in_p_plus(&lat, &o.conj()));
        }

        #[test]
        fn irrational_alpha_stays_in_component(bn in -9i64..9, bd in 1i64..6, r0 in 1i64..4) {
            let lat = NSLattice::rank_one(2);
            let alpha = QuadNumber::sqrt_d(2).inv().unwrap().scale(&rat(1, r0));
            let p = BWParams::new(&lat, vec![rat(bn, bd)], alpha).unwrap();
            let o = omega_from_bw(&lat, &p);
            prop_assert!(in_p_plus(&lat, &o));
            prop_assert!(!in_p_plus(&lat, &o.conj()));
        }
    }
}
