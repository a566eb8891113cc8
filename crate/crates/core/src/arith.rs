//! Small-integer number theory: factorization, primality, Legendre symbols,
//! modular square roots and the Chinese remainder theorem.

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{Signed, Zero};

pub fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

pub fn pow_mod(mut base: u64, mut exp: u64, m: u64) -> u64 {
    let mut acc = 1 % m;
    base %= m;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod(acc, base, m);
        }
        base = mul_mod(base, base, m);
        exp >>= 1;
    }
    acc
}

/// Deterministic Miller–Rabin for all `u64`.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    const WITNESSES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    for &p in &WITNESSES {
        if n % p == 0 {
            return n == p;
        }
    }
    let mut d = n - 1;
    let mut s = 0;
    while d % 2 == 0 {
        d /= 2;
        s += 1;
    }
    'witness: for &a in &WITNESSES {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Distinct prime factors in increasing order.
pub fn prime_factors(mut n: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut p = 2;
    while p * p <= n {
        if n % p == 0 {
            out.push(p);
            while n % p == 0 {
                n /= p;
            }
        }
        p += if p == 2 { 1 } else { 2 };
    }
    if n > 1 {
        out.push(n);
    }
    out
}

/// `a = m^2 b` with `b` squarefree.
pub fn squarefree_split(a: u64) -> (u64, u64) {
    assert!(a > 0);
    let (mut m, mut b) = (1u64, 1u64);
    let mut n = a;
    let mut p = 2;
    while p * p <= n {
        let mut e = 0;
        while n % p == 0 {
            n /= p;
            e += 1;
        }
        m *= p.pow(e / 2);
        if e % 2 == 1 {
            b *= p;
        }
        p += if p == 2 { 1 } else { 2 };
    }
    (m, b * n)
}

/// Legendre symbol `(a / p)` for an odd prime `p`, via Euler's criterion.
pub fn legendre(a: i64, p: u64) -> i32 {
    let r = a.rem_euclid(p as i64) as u64;
    if r == 0 {
        return 0;
    }
    if pow_mod(r, (p - 1) / 2, p) == 1 {
        1
    } else {
        -1
    }
}

pub fn inv_mod(a: u64, m: u64) -> Option<u64> {
    let g = (a as i128).extended_gcd(&(m as i128));
    (g.gcd == 1).then(|| g.x.rem_euclid(m as i128) as u64)
}

/// Tonelli–Shanks. Returns the smaller of the two roots of `x^2 = n (mod p)`.
pub fn sqrt_mod(n: u64, p: u64) -> Option<u64> {
    let n = n % p;
    if n == 0 {
        return Some(0);
    }
    if p == 2 {
        return Some(n);
    }
    if legendre(n as i64, p) != 1 {
        return None;
    }
    let mut q = p - 1;
    let mut s = 0;
    while q % 2 == 0 {
        q /= 2;
        s += 1;
    }
    let mut z = 2;
    while legendre(z as i64, p) != -1 {
        z += 1;
    }
    let mut m = s;
    let mut c = pow_mod(z, q, p);
    let mut t = pow_mod(n, q, p);
    let mut r = pow_mod(n, q.div_ceil(2), p);
    while t != 1 {
        let mut i = 0;
        let mut t2 = t;
        while t2 != 1 {
            t2 = mul_mod(t2, t2, p);
            i += 1;
        }
        let b = pow_mod(c, 1 << (m - i - 1), p);
        m = i;
        c = mul_mod(b, b, p);
        t = mul_mod(t, c, p);
        r = mul_mod(r, b, p);
    }
    Some(r.min(p - r))
}

/// Solves `x = r_i (mod m_i)` for pairwise coprime moduli; returns `(x, prod m_i)`.
pub fn crt(congruences: &[(u64, u64)]) -> Option<(u64, u64)> {
    let mut x: u64 = 0;
    let mut modulus: u64 = 1;
    for &(r, m) in congruences {
        if modulus.gcd(&m) != 1 {
            return None;
        }
        // x + modulus * k = r (mod m)
        let inv = inv_mod(modulus % m, m)?;
        let diff = (r % m + m - x % m) % m;
        let k = mul_mod(diff, inv, m);
        x += modulus * k;
        modulus *= m;
        x %= modulus;
    }
    Some((x, modulus))
}

/// Exponent of `p` in a nonzero integer.
pub fn valuation(n: &BigInt, p: u64) -> u32 {
    assert!(!n.is_zero(), "valuation of zero");
    let p = BigInt::from(p);
    let mut n = n.abs();
    let mut v = 0;
    loop {
        let (q, r) = n.div_rem(&p);
        if !r.is_zero() {
            return v;
        }
        n = q;
        v += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trial_prime(n: u64) -> bool {
        n >= 2 && (2..).take_while(|k| k * k <= n).all(|k| n % k != 0)
    }

    #[test]
    fn primality_agrees_with_trial_division() {
        for n in 0..5000u64 {
            assert_eq!(is_prime(n), trial_prime(n), "{n}");
        }
        assert!(is_prime(1_000_000_007));
        assert!(!is_prime(3_215_031_751)); // strong pseudoprime to bases 2, 3, 5, 7
    }

    #[test]
    fn factor_helpers() {
        assert_eq!(prime_factors(360), vec![2, 3, 5]);
        assert_eq!(squarefree_split(1), (1, 1));
        assert_eq!(squarefree_split(12), (2, 3));
        assert_eq!(squarefree_split(50), (5, 2));
        assert_eq!(squarefree_split(49), (7, 1));
    }

    #[test]
    fn modular_roots() {
        for p in [5u64, 13, 17, 41, 97, 113, 65537] {
            for n in 1..p.min(200) {
                match sqrt_mod(n, p) {
                    Some(x) => {
                        assert_eq!(mul_mod(x, x, p), n);
                        assert!(x <= p - x);
                    }
                    None => assert!((1..p).all(|x| mul_mod(x, x, p) != n)),
                }
            }
        }
        assert_eq!(sqrt_mod(3, 13), Some(4));
        assert_eq!(legendre(-1, 13), 1);
        assert_eq!(legendre(-1, 7), -1);
    }

    #[test]
    fn chinese_remainder() {
        assert_eq!(crt(&[(2, 3), (3, 5), (2, 7)]), Some((23, 105)));
        assert_eq!(crt(&[(1, 4), (2, 3)]), Some((5, 12)));
        assert_eq!(crt(&[(1, 4), (1, 6)]), None);
        assert_eq!(inv_mod(3, 13), Some(9));
    }

    #[test]
    fn valuations() {
        assert_eq!(valuation(&BigInt::from(20), 5), 1);
        assert_eq!(valuation(&BigInt::from(-250), 5), 3);
        assert_eq!(valuation(&BigInt::from(8), 5), 0);
    }
}
