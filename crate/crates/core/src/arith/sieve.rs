use crate::error::{Error, Result};

/// Largest limit accepted by [`SpfTable`].
pub const SPF_MAX_LIMIT: u64 = 1 << 31;

/// All primes `≤ limit` by an odd-only sieve of Eratosthenes.
pub fn sieve_primes(limit: u64) -> Vec<u64> {
    if limit < 2 {
        return Vec::new();
    }
    let limit = limit as usize;
    // composite[i] marks 2i + 1.
    let half = (limit - 1) / 2 + 1;
    let mut composite = vec![false; half];
    let mut i = 1;
    while (2 * i + 1) * (2 * i + 1) <= limit {
        if !composite[i] {
            let p = 2 * i + 1;
            let mut j = p * p / 2;
            while j < half {
                composite[j] = true;
                j += p;
            }
        }
        i += 1;
    }
    let mut primes = Vec::with_capacity(estimate_prime_count(limit));
    primes.push(2);
    primes.extend((1..half).filter(|&i| !composite[i]).map(|i| (2 * i + 1) as u64));
    primes
}

fn estimate_prime_count(limit: usize) -> usize {
    let x = limit.max(3) as f64;
    (1.26 * x / x.ln()) as usize + 16
}

/// Smallest-prime-factor table for `2..=limit`.
#[derive(Debug, Clone)]
pub struct SpfTable {
    limit: u64,
    spf: Vec<u32>,
}

impl SpfTable {
    pub fn new(limit: u64) -> Result<Self> {
        if limit > SPF_MAX_LIMIT {
            return Err(Error::Capacity(format!("SPF table limit {limit} exceeds {SPF_MAX_LIMIT}")));
        }
        let n = limit as usize;
        let mut spf = vec![0u32; n + 1];
        for i in 2..=n {
            if spf[i] == 0 {
                spf[i] = i as u32;
                if let Some(start) = i.checked_mul(i) {
                    let mut j = start;
                    while j <= n {
                        if spf[j] == 0 {
                            spf[j] = i as u32;
                        }
                        j += i;
                    }
                }
            }
        }
        Ok(SpfTable { limit, spf })
    }

    pub fn limit(&self) -> u64 {
        self.limit
    }

    /// Least prime dividing `m`, for `2 ≤ m ≤ limit`.
    pub fn smallest(&self, m: u64) -> u64 {
        self.spf[m as usize] as u64
    }

    pub fn is_prime(&self, m: u64) -> bool {
        m >= 2 && m <= self.limit && self.smallest(m) == m
    }

    /// Prime-power factorization of `1 ≤ m ≤ limit`, primes increasing.
    pub fn factor(&self, mut m: u64) -> Vec<(u64, u32)> {
        assert!(m >= 1 && m <= self.limit, "{m} outside SPF table range");
        let mut out = Vec::new();
        while m > 1 {
            let p = self.smallest(m);
            let mut e = 0;
            while m % p == 0 {
                m /= p;
                e += 1;
            }
            out.push((p, e));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Segmented sieve written independently of `sieve_primes`.
    fn segmented_count(limit: u64) -> usize {
        let root = (limit as f64).sqrt() as u64 + 1;
        let mut base = Vec::new();
        let mut is_p = vec![true; root as usize + 1];
        for i in 2..=root as usize {
            if is_p[i] {
                base.push(i as u64);
                let mut j = i * i;
                while j <= root as usize {
                    is_p[j] = false;
                    j += i;
                }
            }
        }
        let mut count = 0;
        let seg = 1 << 15;
        let mut lo = 2u64;
        while lo <= limit {
            let hi = (lo + seg - 1).min(limit);
            let mut mark = vec![true; (hi - lo + 1) as usize];
            for &p in &base {
                if p * p > hi {
                    break;
                }
                let start = (p * p).max(lo.div_ceil(p) * p);
                let mut j = start;
                while j <= hi {
                    mark[(j - lo) as usize] = false;
                    j += p;
                }
            }
            count += mark.iter().filter(|&&b| b).count();
            lo = hi + 1;
        }
        count
    }

    #[test]
    fn small_sieves() {
        assert_eq!(sieve_primes(10), vec![2, 3, 5, 7]);
        assert_eq!(sieve_primes(2), vec![2]);
        assert_eq!(sieve_primes(3), vec![2, 3]);
        assert!(sieve_primes(1).is_empty());
        assert!(sieve_primes(0).is_empty());
    }

    #[test]
    fn prime_count_to_a_million() {
        let primes = sieve_primes(1_000_000);
        assert_eq!(primes.len(), 78_498);
        assert_eq!(segmented_count(1_000_000), 78_498);
    }

    #[test]
    fn spf_matches_definition() {
        let t = SpfTable::new(10_000).unwrap();
        for m in 2..=10_000u64 {
            let p = t.smallest(m);
            assert_eq!(m % p, 0);
            assert!((2..p).all(|d| m % d != 0), "{m}");
        }
        assert_eq!(t.factor(360), vec![(2, 3), (3, 2), (5, 1)]);
        assert!(t.factor(1).is_empty());
        assert!(SpfTable::new(SPF_MAX_LIMIT + 1).is_err());
    }
}
