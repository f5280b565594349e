//! Prime sieves, factorization, Mertens sums, Ω/ω statistics and the
//! Selberg–Delange main terms for `ν_j(x)`.

mod euler;
mod factor;
mod sieve;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pdcore::WeightedMultiset;

pub use euler::{
    kappa, kappa_truncated, lambda_fn, lambda_truncated, selberg_approx, selberg_constant_c,
    selberg_constant_truncated, stirling_poisson_ratio, PoissonIndex, theta_prime, SelbergMode, SelbergWindow,
    EULER_PRODUCT_LIMIT, SELBERG_C_LIMIT,
};
pub use factor::{big_omega, factor, is_prime, small_omega, Factorization, TRIAL_DIVISION_LIMIT};
pub use sieve::{sieve_primes, SpfTable, SPF_MAX_LIMIT};

/// Whether prime factors are counted with (Ω) or without (ω) multiplicity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OmegaMode {
    BigOmega,
    SmallOmega,
}

impl OmegaMode {
    pub fn count(self, factors: &[(u64, u32)]) -> u32 {
        match self {
            OmegaMode::BigOmega => factors.iter().map(|f| f.1).sum(),
            OmegaMode::SmallOmega => factors.len() as u32,
        }
    }
}

impl std::str::FromStr for OmegaMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "big-omega" => Ok(OmegaMode::BigOmega),
            "small-omega" => Ok(OmegaMode::SmallOmega),
            other => Err(Error::Parse(format!("unknown mode {other:?} (expected big-omega or small-omega)"))),
        }
    }
}

/// `Σ_{p ≤ x} 1/p`.
pub fn mertens_sum(x: u64) -> Result<f64> {
    if x < 2 {
        return Err(Error::Domain(format!("mertens_sum needs x >= 2, got {x}")));
    }
    Ok(sieve_primes(x).iter().map(|&p| 1.0 / p as f64).sum())
}

/// Multiset `{log p / log n}` of the prime factors of `m ≤ n`, with
/// exponents as multiplicities (Ω mode) or multiplicity one (ω mode).
pub fn scaled_spectrum(n: u64, m: u64, mode: OmegaMode) -> Result<WeightedMultiset> {
    if n < 2 {
        return Err(Error::Domain(format!("scale n must be >= 2, got {n}")));
    }
    if m == 0 || m > n {
        return Err(Error::Domain(format!("need 1 <= N <= n, got N = {m}, n = {n}")));
    }
    Ok(spectrum_from_factors(&factor(m)?.factors, n, mode))
}

pub(crate) fn spectrum_from_factors(factors: &[(u64, u32)], n: u64, mode: OmegaMode) -> WeightedMultiset {
    let ln_n = (n as f64).ln();
    let entries = factors.iter().map(|&(p, e)| {
        let mult = match mode {
            OmegaMode::BigOmega => e,
            OmegaMode::SmallOmega => 1,
        };
        (((p as f64).ln() / ln_n).min(1.0), mult)
    });
    WeightedMultiset::new(entries).expect("log p / log n lies in (0, 1]")
}

/// Exact counts `#{m ≤ x : Ω(m) = j}` (or ω) for every `j`; `m = 1`
/// contributes to `j = 0`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountTable {
    pub x: u64,
    pub mode: OmegaMode,
    pub counts: Vec<u64>,
}

const COUNT_CHUNK: u64 = 1 << 16;

impl CountTable {
    pub fn build(spf: &SpfTable, x: u64, mode: OmegaMode) -> Result<Self> {
        if x == 0 {
            return Err(Error::Domain("count table needs x >= 1".into()));
        }
        if x > spf.limit() {
            return Err(Error::Capacity(format!("x = {x} exceeds SPF table limit {}", spf.limit())));
        }
        let chunks = x.div_ceil(COUNT_CHUNK);
        let partials: Vec<Vec<u64>> = (0..chunks)
            .into_par_iter()
            .map(|c| {
                let lo = c * COUNT_CHUNK + 1;
                let hi = ((c + 1) * COUNT_CHUNK).min(x);
                let mut counts = vec![0u64; 64];
                for m in lo..=hi {
                    counts[omega_via_spf(spf, m, mode) as usize] += 1;
                }
                counts
            })
            .collect();
        let mut counts = vec![0u64; 64];
        for part in partials {
            for (c, p) in counts.iter_mut().zip(part) {
                *c += p;
            }
        }
        while counts.len() > 1 && *counts.last().unwrap() == 0 {
            counts.pop();
        }
        Ok(CountTable { x, mode, counts })
    }

    /// `ν_j(x)` (or `ν°_j(x)`).
    pub fn get(&self, j: usize) -> u64 {
        self.counts.get(j).copied().unwrap_or(0)
    }
}

fn omega_via_spf(spf: &SpfTable, mut m: u64, mode: OmegaMode) -> u32 {
    let mut count = 0;
    while m > 1 {
        let p = spf.smallest(m);
        let mut e = 0;
        while m % p == 0 {
            m /= p;
            e += 1;
        }
        count += match mode {
            OmegaMode::BigOmega => e,
            OmegaMode::SmallOmega => 1,
        };
    }
    count
}

/// Exact `ν_j(x)` by enumeration; builds a table of size `x`.
pub fn nu_count(x: u64, j: usize, mode: OmegaMode) -> Result<u64> {
    let spf = SpfTable::new(x)?;
    Ok(CountTable::build(&spf, x, mode)?.get(j))
}
