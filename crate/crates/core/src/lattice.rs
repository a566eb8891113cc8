//! The Mukai lattice `Z + NS(X) + Z` of a K3 surface.
//!
//! NS coordinates are taken with respect to whatever integral basis the Gram
//! matrix is written in. Ampleness of `H` is not checked geometrically; only
//! `H^2 > 0` and even is enforced.

use std::fmt;

use num_integer::Integer;
use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{int, Rational};

/// Integral Néron–Severi lattice with a distinguished class `H`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NSLattice {
    name: String,
    gram: Vec<Vec<i64>>,
    h: Vec<i64>,
    d: u64,
}

/// Config-file shape: `{"name": str, "gram": [[int]], "H": [int]}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LatticeConfig {
    #[serde(default)]
    pub name: String,
    pub gram: Vec<Vec<i64>>,
    #[serde(rename = "H")]
    pub h: Vec<i64>,
}

impl NSLattice {
    pub fn new(name: impl Into<String>, gram: Vec<Vec<i64>>, h: Vec<i64>) -> Result<Self> {
        let rho = gram.len();
        if rho == 0 {
            return Err(Error::Lattice("empty Gram matrix".into()));
        }
        if gram.iter().any(|row| row.len() != rho) {
            return Err(Error::Lattice("Gram matrix is not square".into()));
        }
        for i in 0..rho {
            for j in 0..i {
                if gram[i][j] != gram[j][i] {
                    return Err(Error::Lattice(format!("Gram matrix is not symmetric at ({i}, {j})")));
                }
            }
        }
        if h.len() != rho {
            return Err(Error::Lattice(format!("H has {} coordinates, expected {rho}", h.len())));
        }
        let (pos, neg, zero) = signature(&gram);
        if zero > 0 || pos != 1 || neg != rho - 1 {
            return Err(Error::Lattice(format!(
                "signature is ({pos}, {neg}) with {zero} null directions, expected (1, {})",
                rho - 1
            )));
        }
        let h2 = quad_form(&gram, &h, &h);
        if h2 <= 0 || h2 % 2 != 0 {
            return Err(Error::Lattice(format!("H^2 = {h2} must be positive and even")));
        }
        Ok(NSLattice { name: name.into(), gram, h, d: (h2 / 2) as u64 })
    }

    pub fn from_config(cfg: LatticeConfig) -> Result<Self> {
        Self::new(cfg.name, cfg.gram, cfg.h)
    }

    /// Picard-rank-one lattice `Z H` with `H^2 = 2d`.
    pub fn rank_one(d: u64) -> Self {
        Self::new(format!("rank1-d{d}"), vec![vec![2 * d as i64]], vec![1]).expect("valid rank one lattice")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn gram(&self) -> &[Vec<i64>] {
        &self.gram
    }

    pub fn ample(&self) -> &[i64] {
        &self.h
    }

    pub fn rank(&self) -> usize {
        self.gram.len()
    }

    /// `d = H^2 / 2`.
    pub fn d(&self) -> u64 {
        self.d
    }

    /// Intersection product on NS.
    pub fn dot(&self, x: &[i64], y: &[i64]) -> i64 {
        quad_form(&self.gram, x, y)
    }

    pub fn dot_h(&self, x: &[i64]) -> i64 {
        self.dot(x, &self.h)
    }

    pub fn check_dim(&self, v: &MukaiVector) -> Result<()> {
        if v.divisor.len() == self.rank() {
            Ok(())
        } else {
            Err(Error::Dimension { expected: self.rank(), got: v.divisor.len() })
        }
    }

    /// `<u, v> = D_u.D_v - s_u r_v - s_v r_u`.
    pub fn pairing(&self, u: &MukaiVector, v: &MukaiVector) -> Result<i64> {
        self.check_dim(u)?;
        self.check_dim(v)?;
        Ok(self.pair(u, v))
    }

    pub(crate) fn pair(&self, u: &MukaiVector, v: &MukaiVector) -> i64 {
        self.dot(&u.divisor, &v.divisor) - u.s * v.r - v.s * u.r
    }

    pub fn square(&self, v: &MukaiVector) -> i64 {
        self.pair(v, v)
    }

    pub fn is_spherical(&self, v: &MukaiVector) -> bool {
        v.divisor.len() == self.rank() && self.square(v) == -2
    }

    /// Coefficients `c` of the functional `w -> <v, w>` in Mukai coordinates
    /// `(r, D_1..D_rho, s)`.
    pub fn pairing_row(&self, v: &MukaiVector) -> Vec<i64> {
        let mut row = Vec::with_capacity(self.rank() + 2);
        row.push(-v.s);
        for j in 0..self.rank() {
            row.push((0..self.rank()).map(|i| v.divisor[i] * self.gram[i][j]).sum());
        }
        row.push(-v.r);
        row
    }

    /// Reflection in a spherical class: `v + <v, delta> delta`.
    pub fn reflect(&self, delta: &SphericalClass, v: &MukaiVector) -> MukaiVector {
        let c = self.pair(v, delta.vector());
        v.add(&delta.vector().scale(c))
    }

    /// Multiplication by `exp(l H)`: `(r, D + l r H, s + l H.D + d l^2 r)`.
    pub fn tensor_line_bundle(&self, ell: i64, v: &MukaiVector) -> MukaiVector {
        let d = self.d as i64;
        let divisor = v.divisor.iter().zip(&self.h).map(|(x, h)| x + ell * v.r * h).collect();
        MukaiVector { r: v.r, divisor, s: v.s + ell * self.dot_h(&v.divisor) + d * ell * ell * v.r }
    }

    /// `v(O(D)) = (1, D, D^2/2 + 1)`; requires `D^2` even.
    pub fn line_bundle_vector(&self, divisor: &[i64]) -> Result<MukaiVector> {
        let d2 = self.dot(divisor, divisor);
        if d2 % 2 != 0 {
            return Err(Error::Basis(format!("D^2 = {d2} is odd, v(O(D)) is not integral")));
        }
        Ok(MukaiVector::new(1, divisor.to_vec(), d2 / 2 + 1))
    }

    pub fn config(&self) -> LatticeConfig {
        LatticeConfig { name: self.name.clone(), gram: self.gram.clone(), h: self.h.clone() }
    }
}

fn quad_form(gram: &[Vec<i64>], x: &[i64], y: &[i64]) -> i64 {
    let mut acc = 0;
    for (i, row) in gram.iter().enumerate() {
        if x[i] == 0 {
            continue;
        }
        let inner: i64 = row.iter().zip(y).map(|(g, b)| g * b).sum();
        acc += x[i] * inner;
    }
    acc
}

/// `(positive, negative, zero)` counts of a symmetric integer matrix, by
/// congruence diagonalization over `Q`.
pub fn signature(gram: &[Vec<i64>]) -> (usize, usize, usize) {
    let n = gram.len();
    let mut m: Vec<Vec<Rational>> = gram.iter().map(|r| r.iter().map(|&x| int(x)).collect()).collect();
    let (mut pos, mut neg, mut zero) = (0, 0, 0);
    let mut k = 0;
    while k < n {
        if m[k][k].is_zero() {
            // bring a nonzero diagonal entry to position k, or create one
            if let Some(j) = (k + 1..n).find(|&j| !m[j][j].is_zero()) {
                m.swap(k, j);
                for row in m.iter_mut() {
                    row.swap(k, j);
                }
            } else if let Some(j) = (k + 1..n).find(|&j| !m[k][j].is_zero()) {
                // e_k <- e_k + e_j gives diagonal 2 m[k][j] != 0
                for c in 0..n {
                    let v = m[j][c].clone();
                    m[k][c] += v;
                }
                for r in 0..n {
                    let v = m[r][j].clone();
                    m[r][k] += v;
                }
            } else {
                zero += 1;
                k += 1;
                continue;
            }
        }
        let pivot = m[k][k].clone();
        if pivot.is_positive() {
            pos += 1;
        } else {
            neg += 1;
        }
        for i in k + 1..n {
            if m[i][k].is_zero() {
                continue;
            }
            let f = &m[i][k] / &pivot;
            for c in k..n {
                let v = &f * &m[k][c];
                m[i][c] -= v;
            }
            for r in k..n {
                let v = &f * &m[r][k];
                m[r][i] -= v;
            }
        }
        k += 1;
    }
    (pos, neg, zero)
}

/// A Mukai vector `(r, D, s)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MukaiVector {
    pub r: i64,
    #[serde(rename = "D")]
    pub divisor: Vec<i64>,
    pub s: i64,
}

impl MukaiVector {
    pub fn new(r: i64, divisor: Vec<i64>, s: i64) -> Self {
        MukaiVector { r, divisor, s }
    }

    pub fn zero(rho: usize) -> Self {
        MukaiVector { r: 0, divisor: vec![0; rho], s: 0 }
    }

    pub fn is_zero(&self) -> bool {
        self.r == 0 && self.s == 0 && self.divisor.iter().all(|&x| x == 0)
    }

    pub fn add(&self, other: &Self) -> Self {
        MukaiVector {
            r: self.r + other.r,
            divisor: self.divisor.iter().zip(&other.divisor).map(|(a, b)| a + b).collect(),
            s: self.s + other.s,
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(-1))
    }

    pub fn scale(&self, k: i64) -> Self {
        MukaiVector { r: k * self.r, divisor: self.divisor.iter().map(|x| k * x).collect(), s: k * self.s }
    }

    pub fn neg(&self) -> Self {
        self.scale(-1)
    }

    /// Coordinates `(r, D_1, .., D_rho, s)`.
    pub fn coords(&self) -> Vec<i64> {
        let mut c = Vec::with_capacity(self.divisor.len() + 2);
        c.push(self.r);
        c.extend_from_slice(&self.divisor);
        c.push(self.s);
        c
    }

    pub fn from_coords(c: &[i64]) -> Self {
        let n = c.len();
        MukaiVector { r: c[0], divisor: c[1..n - 1].to_vec(), s: c[n - 1] }
    }

    /// Largest absolute coordinate.
    pub fn sup_norm(&self) -> i64 {
        self.coords().into_iter().map(i64::abs).max().unwrap_or(0)
    }

    /// Parses `r,D_1,...,D_rho,s`.
    pub fn parse(text: &str, rho: usize) -> Result<Self> {
        let parts: std::result::Result<Vec<i64>, _> = text.split(',').map(|p| p.trim().parse::<i64>()).collect();
        let parts = parts.map_err(|_| Error::Config(format!("bad Mukai vector {text:?}")))?;
        if parts.len() != rho + 2 {
            return Err(Error::Dimension { expected: rho + 2, got: parts.len() });
        }
        Ok(Self::from_coords(&parts))
    }
}

impl fmt::Display for MukaiVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let d: Vec<String> = self.divisor.iter().map(|x| x.to_string()).collect();
        write!(f, "({}, [{}], {})", self.r, d.join(", "), self.s)
    }
}

/// A Mukai vector of square `-2`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(transparent)]
pub struct SphericalClass(MukaiVector);

impl SphericalClass {
    pub fn new(lat: &NSLattice, v: MukaiVector) -> Result<Self> {
        lat.check_dim(&v)?;
        let sq = lat.square(&v);
        if sq != -2 {
            return Err(Error::Domain(format!("{v} has square {sq}, not -2")));
        }
        Ok(SphericalClass(v))
    }

    pub fn vector(&self) -> &MukaiVector {
        &self.0
    }

    pub fn into_vector(self) -> MukaiVector {
        self.0
    }

    pub(crate) fn new_unchecked(v: MukaiVector) -> Self {
        SphericalClass(v)
    }
}

impl fmt::Display for SphericalClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Basis for the norm `||v|| = |<v_1, v>| + sum_i |<w_i, v>|` with `v_1` spherical
/// and the `w_i` spanning `v_1^perp`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SphericalNormBasis {
    pub v1: SphericalClass,
    pub complement: Vec<MukaiVector>,
}

impl SphericalNormBasis {
    /// Builds the complement by solving `<v_1, w> = 0` over `Q`.
    ///
    /// The pivot is the last coordinate with a nonzero coefficient; each free
    /// coordinate contributes one primitive integral kernel vector.
    pub fn new(lat: &NSLattice, v1: SphericalClass) -> Result<Self> {
        let row = lat.pairing_row(v1.vector());
        let n = row.len();
        let pivot = (0..n).rev().find(|&j| row[j] != 0).ok_or_else(|| Error::Basis("zero functional".into()))?;
        let mut complement = Vec::with_capacity(n - 1);
        for j in (0..n).filter(|&j| j != pivot) {
            // e_j - (c_j / c_p) e_p, scaled by c_p / gcd
            let g = row[pivot].gcd(&row[j]);
            let mut w = vec![0i64; n];
            w[j] = row[pivot] / g;
            w[pivot] = -row[j] / g;
            if w.iter().find(|&&x| x != 0).is_some_and(|x| x.is_negative()) {
                w.iter_mut().for_each(|x| *x = -*x);
            }
            complement.push(MukaiVector::from_coords(&w));
        }
        let basis = Self { v1, complement };
        basis.validate(lat)?;
        Ok(basis)
    }

    pub fn validate(&self, lat: &NSLattice) -> Result<()> {
        let n = lat.rank() + 2;
        if self.complement.len() != n - 1 {
            return Err(Error::Basis(format!("complement has {} vectors, expected {}", self.complement.len(), n - 1)));
        }
        for w in &self.complement {
            lat.check_dim(w)?;
            if lat.pair(self.v1.vector(), w) != 0 {
                return Err(Error::Basis(format!("{w} is not orthogonal to {}", self.v1)));
            }
        }
        let mut rows: Vec<Vec<i64>> = vec![self.v1.vector().coords()];
        rows.extend(self.complement.iter().map(|w| w.coords()));
        if rank(&rows) != n {
            return Err(Error::Basis("norm basis is rank deficient".into()));
        }
        Ok(())
    }

    pub fn norm(&self, lat: &NSLattice, v: &MukaiVector) -> i64 {
        let head = lat.pair(self.v1.vector(), v).abs();
        head + self.complement.iter().map(|w| lat.pair(w, v).abs()).sum::<i64>()
    }
}

/// `||v||` with respect to a [`SphericalNormBasis`].
pub fn spherical_norm(lat: &NSLattice, basis: &SphericalNormBasis, v: &MukaiVector) -> Result<i64> {
    lat.check_dim(v)?;
    basis.validate(lat)?;
    Ok(basis.norm(lat, v))
}

/// Rank over `Q` of a list of integer row vectors.
pub fn rank(rows: &[Vec<i64>]) -> usize {
    let mut m: Vec<Vec<Rational>> = rows.iter().map(|r| r.iter().map(|&x| int(x)).collect()).collect();
    let cols = m.first().map_or(0, Vec::len);
    let mut rank = 0;
    for c in 0..cols {
        let Some(p) = (rank..m.len()).find(|&i| !m[i][c].is_zero()) else { continue };
        m.swap(rank, p);
        for i in 0..m.len() {
            if i != rank && !m[i][c].is_zero() {
                let f = &m[i][c] / &m[rank][c];
                for k in c..cols {
                    let v = &f * &m[rank][k];
                    m[i][k] -= v;
                }
            }
        }
        rank += 1;
    }
    rank
}
