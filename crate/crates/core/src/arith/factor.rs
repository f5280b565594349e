//! 64-bit factorization: trial division by sieved primes, a deterministic
//! Miller–Rabin test, and Brent's variant of Pollard rho for what is left.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use super::sieve::sieve_primes;
use crate::error::{Error, Result};

/// Trial division stops at primes above this bound.
pub const TRIAL_DIVISION_LIMIT: u64 = 1_000_000;

/// After trial division passes this prime the cofactor is tested for
/// primality once, so random inputs rarely need the full prime table.
const EARLY_PRIMALITY_CHECK: u64 = 4096;

pub(crate) fn trial_primes() -> &'static [u64] {
    static PRIMES: OnceLock<Vec<u64>> = OnceLock::new();
    PRIMES.get_or_init(|| sieve_primes(TRIAL_DIVISION_LIMIT))
}

/// Prime-power factorization of `n ≥ 1`; primes strictly increasing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Factorization {
    pub n: u64,
    pub factors: Vec<(u64, u32)>,
}

impl Factorization {
    /// Ω(n): prime factors counted with multiplicity.
    pub fn big_omega(&self) -> u32 {
        self.factors.iter().map(|f| f.1).sum()
    }

    /// ω(n): distinct prime factors.
    pub fn small_omega(&self) -> u32 {
        self.factors.len() as u32
    }

    /// Product of `p^e`, or `None` on overflow.
    pub fn product(&self) -> Option<u64> {
        self.factors
            .iter()
            .try_fold(1u64, |acc, &(p, e)| acc.checked_mul(p.checked_pow(e)?))
    }
}

#[inline]
fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

fn pow_mod(mut base: u64, mut exp: u64, m: u64) -> u64 {
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

/// Deterministic primality test for all 64-bit integers.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    for p in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
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
    // Bases proven sufficient below 2^64 (Jim Sinclair).
    'witness: for a in [2u64, 325, 9375, 28178, 450775, 9780504, 1795265022] {
        let a = a % n;
        if a == 0 {
            continue;
        }
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

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Nontrivial divisor of an odd composite `n` (Brent's cycle finding).
fn pollard_brent(n: u64) -> u64 {
    const BATCH: u64 = 128;
    for c in 1u64.. {
        let f = |x: u64| (mul_mod(x, x, n) + c) % n;
        let (mut x, mut y, mut ys) = (2u64, 2u64, 2u64);
        let mut q = 1u64;
        let mut g = 1u64;
        let mut r = 1u64;
        while g == 1 {
            x = y;
            for _ in 0..r {
                y = f(y);
            }
            let mut k = 0;
            while k < r && g == 1 {
                ys = y;
                for _ in 0..BATCH.min(r - k) {
                    y = f(y);
                    q = mul_mod(q, x.abs_diff(y), n);
                }
                g = gcd(q, n);
                k += BATCH;
            }
            r *= 2;
        }
        if g == n {
            // Batch overshot: retrace one step at a time.
            loop {
                ys = f(ys);
                g = gcd(x.abs_diff(ys), n);
                if g > 1 {
                    break;
                }
            }
        }
        if g != n {
            return g;
        }
    }
    unreachable!()
}

fn split_into(n: u64, out: &mut Vec<u64>) {
    if n == 1 {
        return;
    }
    if is_prime(n) {
        out.push(n);
        return;
    }
    let d = pollard_brent(n);
    split_into(d, out);
    split_into(n / d, out);
}

/// Complete factorization of `n ≥ 1`; `factor(1)` has no factors.
pub fn factor(n: u64) -> Result<Factorization> {
    if n == 0 {
        return Err(Error::Domain("cannot factor 0".into()));
    }
    let mut m = n;
    let mut factors: Vec<(u64, u32)> = Vec::new();
    if m % 2 == 0 {
        let e = m.trailing_zeros();
        m >>= e;
        factors.push((2, e));
    }
    let mut checked_primality = false;
    for &p in &trial_primes()[1..] {
        if p.saturating_mul(p) > m {
            break;
        }
        if !checked_primality && p > EARLY_PRIMALITY_CHECK {
            checked_primality = true;
            if is_prime(m) {
                break;
            }
        }
        if m % p == 0 {
            let mut e = 0;
            while m % p == 0 {
                m /= p;
                e += 1;
            }
            factors.push((p, e));
        }
    }
    if m > 1 {
        let mut rest = Vec::new();
        split_into(m, &mut rest);
        rest.sort_unstable();
        for p in rest {
            match factors.last_mut() {
                Some(last) if last.0 == p => last.1 += 1,
                _ => factors.push((p, 1)),
            }
        }
    }
    Ok(Factorization { n, factors })
}

/// Ω(n) for `n ≥ 1`.
pub fn big_omega(n: u64) -> Result<u32> {
    Ok(factor(n)?.big_omega())
}

/// ω(n) for `n ≥ 1`.
pub fn small_omega(n: u64) -> Result<u32> {
    Ok(factor(n)?.small_omega())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use rand::Rng;

    fn brute_force(mut n: u64) -> Vec<(u64, u32)> {
        let mut out = Vec::new();
        let mut d = 2;
        while d * d <= n {
            if n % d == 0 {
                let mut e = 0;
                while n % d == 0 {
                    n /= d;
                    e += 1;
                }
                out.push((d, e));
            }
            d += 1;
        }
        if n > 1 {
            out.push((n, 1));
        }
        out
    }

    #[test]
    fn examples() {
        assert_eq!(factor(12).unwrap().factors, vec![(2, 2), (3, 1)]);
        assert!(factor(1).unwrap().factors.is_empty());
        assert_eq!(factor(600_851_475_143).unwrap().factors, brute_force(600_851_475_143));
        assert_eq!(factor(600_851_475_143).unwrap().factors, vec![(71, 1), (839, 1), (1471, 1), (6857, 1)]);
        assert!(factor(0).is_err());
    }

    #[test]
    fn omega_examples() {
        assert_eq!((big_omega(12).unwrap(), small_omega(12).unwrap()), (3, 2));
        assert_eq!((big_omega(1).unwrap(), small_omega(1).unwrap()), (0, 0));
        assert_eq!((big_omega(1024).unwrap(), small_omega(1024).unwrap()), (10, 1));
    }

    #[test]
    fn primality() {
        let small: Vec<u64> = (0..200).filter(|&n| is_prime(n)).collect();
        assert_eq!(small, crate::arith::sieve_primes(200));
        assert!(is_prime(18_446_744_073_709_551_557)); // largest 64-bit prime
        assert!(!is_prime(3_215_031_751)); // strong pseudoprime to 2, 3, 5, 7
        assert!(!is_prime(u64::MAX));
    }

    #[test]
    fn hard_inputs() {
        let cases: [(u64, Vec<(u64, u32)>); 4] = [
            (1_000_000_007 * 998_244_353, vec![(998_244_353, 1), (1_000_000_007, 1)]),
            (4_294_967_291 * 4_294_967_279, vec![(4_294_967_279, 1), (4_294_967_291, 1)]),
            (999_983u64.pow(3), vec![(999_983, 3)]),
            ((1u64 << 63) - 1, vec![(7, 2), (73, 1), (127, 1), (337, 1), (92_737, 1), (649_657, 1)]),
        ];
        for (n, expected) in cases {
            assert_eq!(factor(n).unwrap().factors, expected, "{n}");
        }
    }

    #[test]
    fn random_reconstruction_matches_brute_force() {
        let mut rng = stream_rng(17, 0);
        for _ in 0..2000 {
            let n = rng.gen_range(1..=10_000_000u64);
            assert_eq!(factor(n).unwrap().factors, brute_force(n));
        }
    }
}
