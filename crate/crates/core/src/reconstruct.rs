//! Recovering a central charge, up to the `C`-action, from the masses of the
//! good-basis classes `v_i` and their companions `w_ij = v_j + <v_i, v_j> v_i`.
//!
//! Writing `Z(v_i) = a_i + i b_i` after the gauge `Z(v_1) = 1`, the squared
//! masses give `a_i^2 + b_i^2 = M_i` and, through `|Z(w_ij)|^2`, the real inner
//! products `a_i a_j + b_i b_j`. Row `i = 1` fixes every `a_j`; the `b_j` are then
//! determined up to one global sign, which is the choice between `Z` and its
//! conjugate. Only the conjugate lying in the positive component is returned.
//!
//! Phases, slicings and semistable objects are out of reach here: the output
//! is a linear functional on the lattice and nothing more.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use num_traits::Zero;
use rayon::prelude::*;
use serde::Serialize;

use crate::charge::{eval_z, in_p_plus, OmegaVector, RealVector};
use crate::error::{Error, Result};
use crate::lattice::{MukaiVector, NSLattice};
use crate::scalar::{int, Complex, Rational, Scalar};
use crate::spherical::{companion_classes, GoodBasis};

/// Source of squared masses `|Z(v)|^2`, known only up to a global positive factor.
pub trait MassOracle<S>: Sync {
    fn squared_mass(&self, v: &MukaiVector) -> Result<S>;
}

impl<S, F> MassOracle<S> for F
where
    F: Fn(&MukaiVector) -> Result<S> + Sync,
{
    fn squared_mass(&self, v: &MukaiVector) -> Result<S> {
        self(v)
    }
}

/// Squared masses read off a known charge.
pub struct ChargeOracle<'a, S> {
    lat: &'a NSLattice,
    omega: OmegaVector<S>,
    factor: S,
}

impl<'a, S: Scalar> ChargeOracle<'a, S> {
    pub fn new(lat: &'a NSLattice, omega: OmegaVector<S>) -> Self {
        let factor = S::one(omega.ctx());
        ChargeOracle { lat, omega, factor }
    }

    /// Multiplies every answer by `factor` (must be positive).
    pub fn scaled(mut self, factor: S) -> Self {
        self.factor = factor;
        self
    }
}

impl<S: Scalar> MassOracle<S> for ChargeOracle<'_, S> {
    fn squared_mass(&self, v: &MukaiVector) -> Result<S> {
        Ok(eval_z(self.lat, &self.omega, v).norm_square() * self.factor.clone())
    }
}

/// A finite table of squared masses; `v` and `-v` share an entry.
#[derive(Clone, Debug, Default)]
pub struct MassTable<S> {
    entries: BTreeMap<MukaiVector, S>,
}

impl<S: Scalar> MassTable<S> {
    pub fn new() -> Self {
        MassTable { entries: BTreeMap::new() }
    }

    pub fn insert(&mut self, v: MukaiVector, m2: S) {
        self.entries.insert(v, m2);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl<S: Scalar> MassOracle<S> for MassTable<S> {
    fn squared_mass(&self, v: &MukaiVector) -> Result<S> {
        self.entries
            .get(v)
            .or_else(|| self.entries.get(&v.neg()))
            .cloned()
            .ok_or_else(|| Error::MissingMass(v.clone()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    /// The pivot `b` was taken positive.
    PivotPositive,
    /// The conjugate: pivot `b` negative.
    PivotNegative,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReconstructedCharge<S> {
    /// `Z(v_i) = a_i + i b_i` in the gauge `Z(v_1) = 1`.
    pub coefficients: Vec<Complex<S>>,
    pub omega: OmegaVector<S>,
    pub residual: S,
    pub branch: Branch,
    /// Index (0-based) of the pivot class used to fix the `b_j`.
    pub pivot: usize,
}

/// `(M_ij - M_j - c^2 M_i) / (2c) = a_i a_j + b_i b_j`.
pub fn cross_terms<S: Scalar>(c_ij: i64, m_i: &S, m_j: &S, m_ij: &S) -> Result<S> {
    if c_ij == 0 {
        return Err(Error::DivisionByZero);
    }
    let ctx = m_i.ctx();
    let c = S::from_int(ctx, c_ij);
    let inv = S::from_rational(ctx, &Rational::new(1.into(), (2 * c_ij).into()));
    Ok((m_ij.clone() - m_j.clone() - c.clone() * c * m_i.clone()) * inv)
}

/// Probed masses, normalized so that `M_1 = 1`.
struct Probe<S> {
    diag: Vec<S>,
    pairs: Vec<Vec<Option<S>>>,
    scale: f64,
}

fn probe<S: Scalar + Send>(lat: &NSLattice, basis: &GoodBasis, oracle: &dyn MassOracle<S>, tol: f64) -> Result<Probe<S>> {
    let n = basis.len();
    let companions = companion_classes(lat, basis)?;
    let mut queries: Vec<MukaiVector> = basis.vectors.iter().map(|v| v.vector().clone()).collect();
    queries.extend(companions.iter().map(|(_, w)| w.vector().clone()));
    let answers: Vec<S> = queries.par_iter().map(|v| oracle.squared_mass(v)).collect::<Result<_>>()?;
    for (v, m) in queries.iter().zip(&answers) {
        if m.signum() == Ordering::Less {
            return Err(Error::InconsistentMasses(format!("negative squared mass for {v}")));
        }
    }
    let raw_scale = answers.iter().map(|m| m.to_f64().abs()).fold(1.0f64, f64::max);
    let m1 = answers[0].clone();
    if m1.negligible(tol, raw_scale) {
        return Err(Error::DegenerateCharge("Z(v_1) vanishes, the gauge Z(v_1) = 1 is unavailable".into()));
    }
    let inv = m1.inv().ok_or_else(|| Error::DegenerateCharge("Z(v_1) vanishes".into()))?;
    let normalized: Vec<S> = answers.into_iter().map(|m| m * inv.clone()).collect();
    let diag = normalized[..n].to_vec();
    let mut pairs = vec![vec![None; n]; n];
    for (k, ((i, j), _)) in companions.iter().enumerate() {
        let c = basis.pair_matrix[*i][*j];
        let cross = cross_terms(c, &diag[*i], &diag[*j], &normalized[n + k])?;
        pairs[*i][*j] = Some(cross.clone());
        pairs[*j][*i] = Some(cross);
    }
    let scale = diag.iter().map(|m| m.to_f64().abs()).fold(1.0f64, f64::max);
    Ok(Probe { diag, pairs, scale })
}

fn residual_of<S: Scalar>(probe: &Probe<S>, coefficients: &[Complex<S>]) -> S {
    let ctx = coefficients[0].re.ctx();
    let n = coefficients.len();
    let mut worst = S::zero(ctx);
    let mut consider = |x: S| {
        let x = x.abs();
        if x.cmp_to(&worst) == Ordering::Greater {
            worst = x;
        }
    };
    for i in 0..n {
        let zi = &coefficients[i];
        consider(zi.norm_square() - probe.diag[i].clone());
        for j in i + 1..n {
            let zj = &coefficients[j];
            let inner = zi.re.clone() * zj.re.clone() + zi.im.clone() * zj.im.clone();
            if let Some(cross) = &probe.pairs[i][j] {
                consider(inner - cross.clone());
            }
        }
    }
    worst
}

/// Inverse over `Q` of the matrix whose rows are the functionals `<v_i, ->`.
fn pairing_inverse(lat: &NSLattice, basis: &GoodBasis) -> Result<Vec<Vec<Rational>>> {
    let n = basis.len();
    let mut m: Vec<Vec<Rational>> = basis
        .vectors
        .iter()
        .map(|v| {
            let mut row: Vec<Rational> = lat.pairing_row(v.vector()).into_iter().map(int).collect();
            row.resize(2 * n, Rational::zero());
            row
        })
        .collect();
    for (i, row) in m.iter_mut().enumerate() {
        for k in 0..n {
            row[n + k] = int((i == k) as i64);
        }
    }
    for c in 0..n {
        let p = (c..n).find(|&i| !m[i][c].is_zero()).ok_or_else(|| Error::Basis("good basis is singular".into()))?;
        m.swap(c, p);
        let pivot = m[c][c].clone();
        for k in 0..2 * n {
            m[c][k] = &m[c][k] / &pivot;
        }
        for i in 0..n {
            if i != c && !m[i][c].is_zero() {
                let f = m[i][c].clone();
                for k in 0..2 * n {
                    let v = &f * &m[c][k];
                    m[i][k] -= v;
                }
            }
        }
    }
    Ok(m.into_iter().map(|row| row[n..].to_vec()).collect())
}

/// `Omega` with `<Omega, v_i> = z_i`.
pub fn omega_from_values<S: Scalar>(lat: &NSLattice, basis: &GoodBasis, values: &[Complex<S>]) -> Result<OmegaVector<S>> {
    let inv = pairing_inverse(lat, basis)?;
    let ctx = values[0].re.ctx();
    let solve = |part: &dyn Fn(&Complex<S>) -> S| -> Vec<S> {
        inv.iter()
            .map(|row| {
                row.iter()
                    .zip(values)
                    .filter(|(q, _)| !q.is_zero())
                    .fold(S::zero(ctx), |acc, (q, z)| acc + S::from_rational(ctx, q) * part(z))
            })
            .collect()
    };
    let re = solve(&|z| z.re.clone());
    let im = solve(&|z| z.im.clone());
    let to_real = |c: Vec<S>| {
        let k = c.len();
        RealVector { r: c[0].clone(), divisor: c[1..k - 1].to_vec(), s: c[k - 1].clone() }
    };
    Ok(OmegaVector::from_parts(to_real(re), to_real(im)))
}

/// Reconstructs `Z / Z(v_1)` from squared masses.
///
/// `tol` is ignored for exact scalars; for floats it is relative to the largest
/// normalized squared mass.
pub fn reconstruct<S: Scalar + Send>(lat: &NSLattice, basis: &GoodBasis, oracle: &dyn MassOracle<S>, tol: f64) -> Result<ReconstructedCharge<S>> {
    basis.validate(lat)?;
    let n = basis.len();
    let probe = probe(lat, basis, oracle, tol)?;
    let ctx = probe.diag[0].ctx();

    let mut a = vec![S::one(ctx)];
    for j in 1..n {
        a.push(probe.pairs[0][j].clone().expect("row one is probed"));
    }
    let mut b2 = vec![S::zero(ctx)];
    for j in 1..n {
        let v = probe.diag[j].clone() - a[j].clone() * a[j].clone();
        if v.signum() == Ordering::Less && !v.negligible(tol, probe.scale) {
            return Err(Error::InconsistentMasses(format!("b_{}^2 = {:e} < 0", j + 1, v.to_f64())));
        }
        b2.push(if v.signum() == Ordering::Less { S::zero(ctx) } else { v });
    }
    if b2.iter().all(|v| v.negligible(tol, probe.scale)) {
        return Err(Error::DegenerateCharge("all imaginary parts vanish, the charge is real".into()));
    }
    let mut pivot = 1;
    for j in 2..n {
        if b2[j].cmp_to(&b2[pivot]) == Ordering::Greater {
            pivot = j;
        }
    }
    let b_pivot = b2[pivot].sqrt().ok_or_else(|| Error::NoExactRoot(format!("{:?}", b2[pivot])))?;
    let b_pivot_inv = b_pivot.inv().ok_or(Error::DivisionByZero)?;
    let mut b = vec![S::zero(ctx); n];
    for j in 1..n {
        b[j] = if j == pivot {
            b_pivot.clone()
        } else {
            let cross = probe.pairs[pivot][j].clone().expect("all pairs are probed");
            (cross - a[pivot].clone() * a[j].clone()) * b_pivot_inv.clone()
        };
    }

    let coefficients: Vec<Complex<S>> = a.into_iter().zip(b).map(|(x, y)| Complex::new(x, y)).collect();
    let residual = residual_of(&probe, &coefficients);
    if !residual.negligible(tol, probe.scale) {
        return Err(Error::InconsistentMasses(format!("{:e}", residual.to_f64())));
    }

    let direct = omega_from_values(lat, basis, &coefficients)?;
    if in_p_plus(lat, &direct) {
        return Ok(ReconstructedCharge { coefficients, omega: direct, residual, branch: Branch::PivotPositive, pivot });
    }
    let conjugate: Vec<Complex<S>> = coefficients.iter().map(Complex::conj).collect();
    let omega = direct.conj();
    if in_p_plus(lat, &omega) {
        return Ok(ReconstructedCharge { coefficients: conjugate, omega, residual, branch: Branch::PivotNegative, pivot });
    }
    Err(Error::NoOrientation)
}

/// Largest deviation of `charge` from the squared-mass equations of `oracle`.
pub fn residual<S: Scalar + Send>(lat: &NSLattice, basis: &GoodBasis, oracle: &dyn MassOracle<S>, charge: &ReconstructedCharge<S>, tol: f64) -> Result<S> {
    let probe = probe(lat, basis, oracle, tol)?;
    Ok(residual_of(&probe, &charge.coefficients))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::charge::{omega_from_bw, BWParams};
    use crate::scalar::{rat, QuadNumber};
    use crate::spherical::{good_basis, SearchBox};

    fn q(n: i64) -> QuadNumber {
        QuadNumber::from_int(n, 1)
    }

    #[test]
    fn cross_term_examples() {
        // Z_i = 1, Z_j = i, c = -3
        assert_eq!(cross_terms(-3, &q(1), &q(1), &q(10)).unwrap(), q(0));
        assert_eq!(cross_terms(1, &q(1), &q(1), &q(4)).unwrap(), q(1));
        // Z_j = -c Z_i with c = 2, M_i = 3: M_j = 12, M_ij = 0
        assert_eq!(cross_terms(2, &q(3), &q(12), &q(0)).unwrap(), q(-6));
        assert_eq!(cross_terms(0, &q(1), &q(1), &q(1)).unwrap_err(), Error::DivisionByZero);
    }

    fn setup(alpha: i64) -> (NSLattice, GoodBasis, OmegaVector<QuadNumber>) {
        let lat = NSLattice::rank_one(1);
        let basis = good_basis(&lat, &SearchBox::new(8, 8, 40)).unwrap();
        let omega = omega_from_bw(&lat, &BWParams::new(&lat, vec![rat(0, 1)], q(alpha)).unwrap());
        (lat, basis, omega)
    }

    #[test]
    fn round_trip_rank_one() {
        let (lat, basis, omega) = setup(2);
        let got = reconstruct(&lat, &basis, &ChargeOracle::new(&lat, omega.clone()), 0.0).unwrap();
        let z1 = eval_z(&lat, &omega, basis.vector(0));
        for (i, c) in got.coefficients.iter().enumerate() {
            let expected = eval_z(&lat, &omega, basis.vector(i)).checked_div(&z1).unwrap();
            assert_eq!(c, &expected);
        }
        assert!(got.residual.is_zero());
        let z1_inv = Complex::real(q(1)).checked_div(&z1).unwrap();
        assert_eq!(got.omega, omega.rotate(&z1_inv));
    }

    #[test]
    fn gauge_and_conjugation() {
        let (lat, basis, omega) = setup(3);
        let base = reconstruct(&lat, &basis, &ChargeOracle::new(&lat, omega.clone()), 0.0).unwrap();
        let scaled = reconstruct(&lat, &basis, &ChargeOracle::new(&lat, omega.clone()).scaled(QuadNumber::from_rational(rat(49, 9), 1)), 0.0).unwrap();
        assert_eq!(scaled.coefficients, base.coefficients);
        let conj = reconstruct(&lat, &basis, &ChargeOracle::new(&lat, omega.conj()), 0.0).unwrap();
        assert_eq!(conj.coefficients, base.coefficients);
        assert!(in_p_plus(&lat, &conj.omega));
        // an already gauged charge is a fixed point
        let again = reconstruct(&lat, &basis, &ChargeOracle::new(&lat, base.omega.clone()), 0.0).unwrap();
        assert_eq!(again.coefficients, base.coefficients);
        assert_eq!(again.omega, base.omega);
    }

    #[test]
    fn perturbed_oracle_is_detected() {
        let (lat, basis, omega) = setup(2);
        let clean = ChargeOracle::new(&lat, omega.clone());
        let charge = reconstruct(&lat, &basis, &clean, 0.0).unwrap();
        let companions = companion_classes(&lat, &basis).unwrap();
        let target = companions.get(1, 2).vector().clone();
        let eps = QuadNumber::from_rational(rat(1, 100), 1);
        let m1 = clean.squared_mass(basis.vector(0)).unwrap();
        let perturbed = |v: &MukaiVector| -> Result<QuadNumber> {
            let m = clean.squared_mass(v)?;
            Ok(if *v == target { m + eps.clone() } else { m })
        };
        let r = residual(&lat, &basis, &perturbed, &charge, 0.0).unwrap();
        let c = basis.pair_matrix[1][2].abs();
        let bound = (eps.clone() / m1).scale(&rat(1, 2 * c));
        assert!(r >= bound, "{r} < {bound}");
        assert!(matches!(reconstruct(&lat, &basis, &perturbed, 0.0), Err(Error::InconsistentMasses(_))));
    }

    #[test]
    fn float_round_trip() {
        let lat = NSLattice::rank_one(2);
        let basis = good_basis(&lat, &SearchBox::new(8, 8, 40)).unwrap();
        let omega = omega_from_bw(&lat, &BWParams::new(&lat, vec![rat(1, 3)], 0.7f64).unwrap());
        let got = reconstruct(&lat, &basis, &ChargeOracle::new(&lat, omega.clone()), 1e-9).unwrap();
        assert!(got.residual.abs() <= 1e-9);
        let z1 = eval_z(&lat, &omega, basis.vector(0));
        for (i, c) in got.coefficients.iter().enumerate() {
            let e = eval_z(&lat, &omega, basis.vector(i)).checked_div(&z1).unwrap();
            assert!((c.re - e.re).abs() < 1e-9 && (c.im - e.im).abs() < 1e-9);
        }
    }

    #[test]
    fn degenerate_and_missing() {
        let (lat, basis, _) = setup(2);
        // Z(v_1) = 0 at B = 0, alpha = 1
        let (_, _, lax) = setup(1);
        assert!(matches!(reconstruct(&lat, &basis, &ChargeOracle::new(&lat, lax), 0.0), Err(Error::DegenerateCharge(_))));
        // real charge: Im Omega = 0
        let real: OmegaVector<QuadNumber> = OmegaVector::from_parts(
            RealVector::from_lattice(1, &MukaiVector::new(1, vec![0], -3)),
            RealVector::from_lattice(1, &MukaiVector::zero(1)),
        );
        assert!(matches!(reconstruct(&lat, &basis, &ChargeOracle::new(&lat, real), 0.0), Err(Error::DegenerateCharge(_))));
        let table: MassTable<QuadNumber> = MassTable::new();
        assert!(matches!(reconstruct(&lat, &basis, &table, 0.0), Err(Error::MissingMass(_))));
    }

    #[test]
    fn table_oracle_uses_either_sign() {
        let (lat, basis, omega) = setup(2);
        let oracle = ChargeOracle::new(&lat, omega);
        let mut table = MassTable::new();
        for v in &basis.vectors {
            table.insert(v.vector().clone(), oracle.squared_mass(v.vector()).unwrap());
        }
        for (_, w) in companion_classes(&lat, &basis).unwrap().iter() {
            table.insert(w.vector().neg(), oracle.squared_mass(w.vector()).unwrap());
        }
        let a = reconstruct(&lat, &basis, &table, 0.0).unwrap();
        let b = reconstruct(&lat, &basis, &oracle, 0.0).unwrap();
        assert_eq!(a, b);
    }
}
