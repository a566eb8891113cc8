//! Spherical classes in finite boxes, the slope sets `Delta^+_mu` and the
//! good spherical basis used by the mass reconstruction.
//!
//! Every set computed here is only complete relative to its [`SearchBox`].

use std::fmt;

use num_traits::Signed;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{rank, MukaiVector, NSLattice, SphericalClass};
use crate::scalar::Rational;

/// Truncation bounds: `|r| <= r_max`, `|D_i| <= d_bound`, `|s| <= s_bound`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SearchBox {
    pub r_max: u32,
    pub d_bound: u32,
    pub s_bound: u32,
}

impl SearchBox {
    pub fn new(r_max: u32, d_bound: u32, s_bound: u32) -> Self {
        SearchBox { r_max, d_bound, s_bound }
    }

    /// Parses `R,D,S`.
    pub fn parse(text: &str) -> Result<Self> {
        let parts: Vec<&str> = text.split(',').map(str::trim).collect();
        let bad = || Error::Config(format!("box must be R,D,S with nonnegative integers, got {text:?}"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let p = |s: &str| s.parse::<u32>().map_err(|_| bad());
        Ok(SearchBox::new(p(parts[0])?, p(parts[1])?, p(parts[2])?))
    }

    pub fn contains(&self, v: &MukaiVector) -> bool {
        v.r.unsigned_abs() <= self.r_max as u64
            && v.s.unsigned_abs() <= self.s_bound as u64
            && v.divisor.iter().all(|x| x.unsigned_abs() <= self.d_bound as u64)
    }

    /// All NS coordinate vectors with sup-norm at most `d_bound`, lexicographic.
    pub fn divisors(&self, rho: usize) -> Vec<Vec<i64>> {
        let b = self.d_bound as i64;
        let mut out = vec![Vec::with_capacity(rho)];
        for _ in 0..rho {
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    (-b..=b).map(move |x| {
                        let mut p = prefix.clone();
                        p.push(x);
                        p
                    })
                })
                .collect();
        }
        out
    }

    /// Every lattice vector in the box, lexicographic.
    pub fn vectors(&self, rho: usize) -> Vec<MukaiVector> {
        let divisors = self.divisors(rho);
        let (r, s) = (self.r_max as i64, self.s_bound as i64);
        let mut out = Vec::with_capacity((2 * r as usize + 1) * divisors.len() * (2 * s as usize + 1));
        for r in -r..=r {
            for d in &divisors {
                for s in -s..=s {
                    out.push(MukaiVector::new(r, d.clone(), s));
                }
            }
        }
        out
    }
}

impl fmt::Display for SearchBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{}", self.r_max, self.d_bound, self.s_bound)
    }
}

/// All spherical classes in the box, in lexicographic order on `(r, D, s)`.
///
/// For `r != 0` the last coordinate is forced to `s = (D^2 + 2) / (2r)`; for
/// `r = 0` the constraint is `D^2 = -2` and `s` ranges over the box.
pub fn enumerate_spherical(lat: &NSLattice, bx: &SearchBox) -> Vec<SphericalClass> {
    let divisors = bx.divisors(lat.rank());
    let r_max = bx.r_max as i64;
    let s_bound = bx.s_bound as i64;
    let slices: Vec<Vec<SphericalClass>> = (-r_max..=r_max)
        .into_par_iter()
        .map(|r| {
            let mut found = Vec::new();
            for d in &divisors {
                let d2 = lat.dot(d, d);
                if r == 0 {
                    if d2 == -2 {
                        found.extend((-s_bound..=s_bound).map(|s| SphericalClass::new_unchecked(MukaiVector::new(0, d.clone(), s))));
                    }
                    continue;
                }
                let num = d2 + 2;
                if num % (2 * r) == 0 {
                    let s = num / (2 * r);
                    if s.abs() <= s_bound {
                        found.push(SphericalClass::new_unchecked(MukaiVector::new(r, d.clone(), s)));
                    }
                }
            }
            found
        })
        .collect();
    // slices arrive in r order and are sorted within, so the concatenation is canonical
    slices.into_iter().flatten().collect()
}

/// `mu_H(v) = H.D / r` for `r != 0`.
pub fn slope(lat: &NSLattice, v: &MukaiVector) -> Option<Rational> {
    (v.r != 0).then(|| Rational::new(lat.dot_h(&v.divisor).into(), v.r.into()))
}

/// `Delta^+_mu` within the box and its minimal rank `r_0` (box-relative).
pub fn delta_mu_plus(lat: &NSLattice, mu: &Rational, bx: &SearchBox) -> (Vec<SphericalClass>, Option<i64>) {
    let classes: Vec<SphericalClass> = enumerate_spherical(lat, bx)
        .into_iter()
        .filter(|c| c.vector().r > 0 && slope(lat, c.vector()).as_ref() == Some(mu))
        .collect();
    let r0 = classes.iter().map(|c| c.vector().r).min();
    (classes, r0)
}

/// Spherical classes `v_1..v_{rho+2}` that form a basis and pair nontrivially
/// with each other.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct GoodBasis {
    pub vectors: Vec<SphericalClass>,
    pub pair_matrix: Vec<Vec<i64>>,
}

impl GoodBasis {
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn vector(&self, i: usize) -> &MukaiVector {
        self.vectors[i].vector()
    }

    fn from_vectors(lat: &NSLattice, vectors: Vec<MukaiVector>) -> Result<Self> {
        let n = vectors.len();
        let pair_matrix = (0..n).map(|i| (0..n).map(|j| lat.pair(&vectors[i], &vectors[j])).collect()).collect();
        let vectors = vectors.into_iter().map(|v| SphericalClass::new(lat, v)).collect::<Result<Vec<_>>>()?;
        let basis = GoodBasis { vectors, pair_matrix };
        basis.validate(lat)?;
        Ok(basis)
    }

    pub fn validate(&self, lat: &NSLattice) -> Result<()> {
        let n = lat.rank() + 2;
        if self.vectors.len() != n {
            return Err(Error::Basis(format!("good basis has {} vectors, expected {n}", self.vectors.len())));
        }
        for (i, v) in self.vectors.iter().enumerate() {
            if !lat.is_spherical(v.vector()) {
                return Err(Error::Basis(format!("v_{} = {v} is not spherical", i + 1)));
            }
            for j in 0..n {
                if i != j && self.pair_matrix[i][j] == 0 {
                    return Err(Error::Basis(format!("<v_{}, v_{}> = 0", i + 1, j + 1)));
                }
            }
        }
        let rows: Vec<Vec<i64>> = self.vectors.iter().map(|v| v.vector().coords()).collect();
        if rank(&rows) != n {
            return Err(Error::Basis("good basis vectors are linearly dependent".into()));
        }
        Ok(())
    }
}

/// Orthogonal splitting `NS_Q = <H> + <D_1> + ... + <D_{rho-1}>` by
/// Gram–Schmidt inside `H^perp` (negative definite, so no isotropic pivots),
/// returned as primitive integral vectors.
fn orthogonal_complement_of_h(lat: &NSLattice) -> Vec<Vec<i64>> {
    let rho = lat.rank();
    let h: Vec<Rational> = lat.ample().iter().map(|&x| Rational::from_integer(x.into())).collect();
    let dot = |x: &[Rational], y: &[Rational]| -> Rational {
        let mut acc = Rational::from_integer(0.into());
        for i in 0..rho {
            for j in 0..rho {
                acc += &x[i] * &y[j] * Rational::from_integer(lat.gram()[i][j].into());
            }
        }
        acc
    };
    let mut chosen: Vec<Vec<Rational>> = vec![h];
    let mut out = Vec::new();
    for k in 0..rho {
        if chosen.len() == rho {
            break;
        }
        let mut e: Vec<Rational> = (0..rho).map(|i| Rational::from_integer(((i == k) as i64).into())).collect();
        for c in &chosen {
            let f = dot(&e, c) / dot(c, c);
            for i in 0..rho {
                e[i] -= &f * &c[i];
            }
        }
        if e.iter().all(num_traits::Zero::is_zero) {
            continue;
        }
        out.push(primitive_integral(&e));
        chosen.push(e);
    }
    out
}

fn primitive_integral(v: &[Rational]) -> Vec<i64> {
    use num_integer::Integer;
    let lcm = v.iter().fold(num_bigint::BigInt::from(1), |acc, x| acc.lcm(x.denom()));
    let ints: Vec<num_bigint::BigInt> = v.iter().map(|x| (x * Rational::from_integer(lcm.clone())).to_integer()).collect();
    let g = ints.iter().fold(num_bigint::BigInt::from(0), |acc, x| acc.gcd(x));
    let mut out: Vec<i64> = ints.iter().map(|x| i64::try_from(x / &g).expect("coordinates fit in i64")).collect();
    if out.iter().find(|&&x| x != 0).is_some_and(|x| x.is_negative()) {
        out.iter_mut().for_each(|x| *x = -*x);
    }
    out
}

/// `{v(O(D_1)), .., v(O(D_{rho-1})), v(O_X), v(O(-H)), v(O(2H))}` with `H.D_i = 0`,
/// `D_i.D_j = 0` and `D_i^2 < -4`.
///
/// Each `D_i` is the smallest multiple of the primitive Gram–Schmidt vector
/// with `D_i^2 < -4`, `D_i^2` even and all basis pairings nonzero.
pub fn good_basis(lat: &NSLattice, bx: &SearchBox) -> Result<GoodBasis> {
    let rho = lat.rank();
    let h = lat.ample().to_vec();
    let zero = vec![0i64; rho];
    let neg_h: Vec<i64> = h.iter().map(|x| -x).collect();
    let two_h: Vec<i64> = h.iter().map(|x| 2 * x).collect();
    let tail = vec![lat.line_bundle_vector(&zero)?, lat.line_bundle_vector(&neg_h)?, lat.line_bundle_vector(&two_h)?];

    let mut head: Vec<MukaiVector> = Vec::new();
    for base in orthogonal_complement_of_h(lat) {
        let mut k = 1i64;
        let chosen = loop {
            let d: Vec<i64> = base.iter().map(|x| k * x).collect();
            let d2 = lat.dot(&d, &d);
            if d2 < -4 && d2 % 2 == 0 {
                let v = lat.line_bundle_vector(&d)?;
                let clashes = head.iter().chain(&tail).any(|w| lat.pair(&v, w) == 0);
                if !clashes {
                    break v;
                }
            }
            k += 1;
            if k > 64 {
                return Err(Error::Basis(format!("no admissible multiple of {base:?}")));
            }
        };
        head.push(chosen);
    }
    if head.len() != rho - 1 {
        return Err(Error::Lattice("orthogonal splitting did not produce rho - 1 classes".into()));
    }
    head.extend(tail);
    if let Some(v) = head.iter().find(|v| !bx.contains(v)) {
        return Err(Error::BoxTooSmall(format!("{v} lies outside box {bx}")));
    }
    GoodBasis::from_vectors(lat, head)
}

/// `w_ij = v_j + <v_i, v_j> v_i` for `i < j`, looked up symmetrically.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CompanionTable {
    n: usize,
    entries: Vec<((usize, usize), SphericalClass)>,
}

impl CompanionTable {
    /// The companion for the unordered pair `{i, j}` (stored as `w_{min,max}`).
    pub fn get(&self, i: usize, j: usize) -> &SphericalClass {
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        let idx = a * (2 * self.n - a - 1) / 2 + (b - a - 1);
        &self.entries[idx].1
    }

    pub fn iter(&self) -> impl Iterator<Item = &((usize, usize), SphericalClass)> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

pub fn companion_classes(lat: &NSLattice, basis: &GoodBasis) -> Result<CompanionTable> {
    let n = basis.len();
    let mut entries = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            let c = basis.pair_matrix[i][j];
            if c == 0 {
                return Err(Error::Basis(format!("<v_{}, v_{}> = 0", i + 1, j + 1)));
            }
            let w = basis.vector(j).add(&basis.vector(i).scale(c));
            entries.push(((i, j), SphericalClass::new(lat, w).map_err(|e| Error::Invariant(e.to_string()))?));
        }
    }
    Ok(CompanionTable { n, entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{int, rat};

    fn mv(r: i64, d: &[i64], s: i64) -> MukaiVector {
        MukaiVector::new(r, d.to_vec(), s)
    }

    fn vecs(cs: &[SphericalClass]) -> Vec<MukaiVector> {
        cs.iter().map(|c| c.vector().clone()).collect()
    }

    fn brute(lat: &NSLattice, bx: &SearchBox) -> Vec<MukaiVector> {
        bx.vectors(lat.rank()).into_iter().filter(|v| lat.square(v) == -2).collect()
    }

    #[test]
    fn enumeration_examples() {
        let lat = NSLattice::rank_one(1);
        let found = vecs(&enumerate_spherical(&lat, &SearchBox::new(1, 0, 1)));
        assert_eq!(found, vec![mv(-1, &[0], -1), mv(1, &[0], 1)]);
        assert!(enumerate_spherical(&lat, &SearchBox::new(0, 0, 7)).is_empty());
        assert!(vecs(&enumerate_spherical(&lat, &SearchBox::new(2, 1, 5))).contains(&mv(2, &[1], 1)));
    }

    #[test]
    fn enumeration_matches_triple_loop() {
        let lats = [
            NSLattice::rank_one(1),
            NSLattice::rank_one(3),
            NSLattice::new("u", vec![vec![2, 0], vec![0, -2]], vec![1, 0]).unwrap(),
        ];
        for lat in &lats {
            for bx in [SearchBox::new(3, 2, 9), SearchBox::new(1, 3, 20), SearchBox::new(4, 1, 4)] {
                assert_eq!(vecs(&enumerate_spherical(lat, &bx)), brute(lat, &bx), "{} {bx}", lat.name());
            }
        }
    }

    #[test]
    fn delta_plus_examples() {
        let lat = NSLattice::rank_one(1);
        let (c, r0) = delta_mu_plus(&lat, &int(0), &SearchBox::new(8, 8, 40));
        assert_eq!(vecs(&c), vec![mv(1, &[0], 1)]);
        assert_eq!(r0, Some(1));
        let (c, r0) = delta_mu_plus(&lat, &int(1), &SearchBox::new(8, 8, 40));
        assert_eq!(vecs(&c), vec![mv(2, &[1], 1)]);
        assert_eq!(r0, Some(2));
        let (c, r0) = delta_mu_plus(&lat, &rat(1, 3), &SearchBox::new(12, 8, 40));
        assert!(c.is_empty());
        assert_eq!(r0, None);
    }

    #[test]
    fn good_basis_rank_one() {
        let lat = NSLattice::rank_one(1);
        let b = good_basis(&lat, &SearchBox::new(8, 8, 40)).unwrap();
        assert_eq!(vecs(&b.vectors), vec![mv(1, &[0], 1), mv(1, &[-1], 2), mv(1, &[2], 5)]);
        assert_eq!(b.pair_matrix[0][1], -3);
        assert_eq!(b.pair_matrix[0][2], -6);
        assert_eq!(b.pair_matrix[1][2], -11);
        assert!(matches!(good_basis(&lat, &SearchBox::new(1, 1, 40)), Err(Error::BoxTooSmall(_))));

        let lat = NSLattice::rank_one(3);
        let b = good_basis(&lat, &SearchBox::new(8, 8, 40)).unwrap();
        assert_eq!(vecs(&b.vectors), vec![mv(1, &[0], 1), mv(1, &[-1], 4), mv(1, &[2], 13)]);
    }

    #[test]
    fn good_basis_higher_rank() {
        let lats = [
            NSLattice::new("u", vec![vec![2, 0], vec![0, -4]], vec![1, 0]).unwrap(),
            NSLattice::new("hyp", vec![vec![0, 1], vec![1, 0]], vec![1, 1]).unwrap(),
            NSLattice::new("r3", vec![vec![4, 1, 0], vec![1, -2, 0], vec![0, 0, -2]], vec![1, 0, 0]).unwrap(),
        ];
        for lat in &lats {
            let b = good_basis(lat, &SearchBox::new(8, 40, 400)).unwrap();
            b.validate(lat).unwrap();
            let t = companion_classes(lat, &b).unwrap();
            assert!(t.iter().all(|(_, w)| lat.is_spherical(w.vector())));
        }
    }

    #[test]
    fn companions() {
        let lat = NSLattice::rank_one(1);
        let b = good_basis(&lat, &SearchBox::new(8, 8, 40)).unwrap();
        let t = companion_classes(&lat, &b).unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(t.get(0, 1).vector(), &mv(-2, &[-1], -1));
        assert_eq!(t.get(1, 0), t.get(0, 1));
        for &((i, j), ref w) in t.iter() {
            assert!(lat.is_spherical(w.vector()));
            let c = b.pair_matrix[i][j];
            assert_eq!(lat.pair(b.vector(i), w.vector()), -c);
        }
    }

    #[test]
    fn zero_pairing_is_rejected() {
        let lat = NSLattice::rank_one(1);
        let mut b = good_basis(&lat, &SearchBox::new(8, 8, 40)).unwrap();
        b.pair_matrix[0][1] = 0;
        assert!(matches!(companion_classes(&lat, &b), Err(Error::Basis(_))));
    }
}
