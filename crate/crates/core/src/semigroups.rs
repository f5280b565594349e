//! Normed arithmetic semigroups with integer norms, presented by the number
//! of elements and of primes of each norm.
//!
//! Five instances are provided: the positive integers, integers that are
//! sums of two squares (θ = 1/2), ideals of the Gaussian integers (θ = 1),
//! the semigroup freely generated by two copies of the rational primes
//! (θ = 2), and integers whose prime factors lie in fixed residue classes
//! (θ = |R|/φ(q)). An element is its norm plus the multiset of its prime
//! factors; experiments only ever look at prime norms.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::arith::{factor, sieve_primes, SpfTable};
use crate::error::{Error, Result};
use crate::pdcore::{Theta, WeightedMultiset};
use crate::rng::{stream_rng, StreamRng};

/// Largest norm for which a cumulative weight table is built.
pub const WEIGHT_TABLE_CAP: u64 = 100_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SemigroupKind {
    Integers,
    TwoSquares,
    GaussianIdeals,
    DoubledPrimes,
    ApPrimes { modulus: u64, residues: Vec<u64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemigroupSpec {
    pub name: String,
    pub kind: SemigroupKind,
    pub theta: Theta,
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

fn euler_phi(q: u64) -> u64 {
    match factor(q) {
        Ok(f) => f.factors.iter().fold(q, |acc, &(p, _)| acc / p * (p - 1)),
        Err(_) => 0,
    }
}

impl SemigroupSpec {
    pub fn new(kind: SemigroupKind) -> Result<Self> {
        let (name, theta) = match &kind {
            SemigroupKind::Integers => ("integers".to_string(), 1.0),
            SemigroupKind::TwoSquares => ("two-squares".to_string(), 0.5),
            SemigroupKind::GaussianIdeals => ("gaussian-ideals".to_string(), 1.0),
            SemigroupKind::DoubledPrimes => ("doubled-primes".to_string(), 2.0),
            SemigroupKind::ApPrimes { modulus, residues } => {
                let q = *modulus;
                if q == 0 {
                    return Err(Error::Parameter("ap-primes modulus must be positive".into()));
                }
                if residues.is_empty() {
                    return Err(Error::Parameter("ap-primes needs at least one residue".into()));
                }
                for (i, &r) in residues.iter().enumerate() {
                    if r >= q {
                        return Err(Error::Parameter(format!("residue {r} is not reduced modulo {q}")));
                    }
                    if gcd(r, q) != 1 {
                        return Err(Error::Parameter(format!("residue {r} is not coprime to {q}")));
                    }
                    if residues[..i].contains(&r) {
                        return Err(Error::Parameter(format!("residue {r} repeated")));
                    }
                }
                let parts: Vec<String> = residues.iter().map(|r| r.to_string()).collect();
                (format!("ap-primes:q={q},r={}", parts.join("|")), residues.len() as f64 / euler_phi(q) as f64)
            }
        };
        Ok(SemigroupSpec { name, kind, theta: Theta::new(theta)? })
    }

    fn allows_prime(&self, p: u64) -> bool {
        match &self.kind {
            SemigroupKind::ApPrimes { modulus, residues } => residues.contains(&(p % modulus)),
            _ => true,
        }
    }

    /// Number of elements of norm `p^a`; element weights are multiplicative.
    pub fn prime_power_weight(&self, p: u64, a: u32) -> u64 {
        if a == 0 {
            return 1;
        }
        match &self.kind {
            SemigroupKind::Integers => 1,
            SemigroupKind::TwoSquares => u64::from(p % 4 != 3 || a % 2 == 0),
            SemigroupKind::GaussianIdeals => match p % 4 {
                1 => a as u64 + 1,
                3 => u64::from(a % 2 == 0),
                _ => 1,
            },
            SemigroupKind::DoubledPrimes => a as u64 + 1,
            SemigroupKind::ApPrimes { .. } => u64::from(self.allows_prime(p)),
        }
    }

    /// Number of elements of norm exactly `m ≥ 1`.
    pub fn element_weight(&self, m: u64) -> Result<u64> {
        Ok(factor(m)?.factors.iter().map(|&(p, a)| self.prime_power_weight(p, a)).product())
    }

    /// Semigroup primes lying over the rational prime `p`, as
    /// `(norm exponent e, count)`: each has norm `p^e`.
    fn primes_over(&self, p: u64) -> &'static [(u32, u32)] {
        match &self.kind {
            SemigroupKind::Integers => &[(1, 1)],
            SemigroupKind::TwoSquares => {
                if p % 4 == 3 {
                    &[(2, 1)]
                } else {
                    &[(1, 1)]
                }
            }
            SemigroupKind::GaussianIdeals => match p % 4 {
                1 => &[(1, 2)],
                3 => &[(2, 1)],
                _ => &[(1, 1)],
            },
            SemigroupKind::DoubledPrimes => &[(1, 2)],
            SemigroupKind::ApPrimes { .. } => {
                if self.allows_prime(p) {
                    &[(1, 1)]
                } else {
                    &[]
                }
            }
        }
    }

    /// Number of semigroup primes of norm exactly `m`.
    pub fn prime_weight(&self, m: u64) -> Result<u64> {
        let f = factor(m)?;
        if f.factors.len() != 1 {
            return Ok(0);
        }
        let (p, a) = f.factors[0];
        Ok(self.primes_over(p).iter().filter(|&&(e, _)| e == a).map(|&(_, c)| c as u64).sum())
    }

    /// `(norm, number of primes of that norm)` for all prime norms `≤ x`,
    /// sorted by norm.
    pub fn prime_norms_up_to(&self, x: u64) -> Vec<(u64, u32)> {
        let mut out = Vec::new();
        for p in sieve_primes(x) {
            for &(e, count) in self.primes_over(p) {
                if let Some(norm) = p.checked_pow(e).filter(|&nm| nm <= x) {
                    out.push((norm, count));
                }
            }
        }
        out.sort_unstable();
        out
    }
}

impl fmt::Display for SemigroupSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

/// Parses `integers`, `two-squares`, `gaussian-ideals`, `doubled-primes`
/// and `ap-primes:q=Q,r=R1|R2|...`.
impl FromStr for SemigroupSpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        make_semigroup(s)
    }
}

pub fn make_semigroup(name: &str) -> Result<SemigroupSpec> {
    let kind = match name.trim() {
        "integers" => SemigroupKind::Integers,
        "two-squares" => SemigroupKind::TwoSquares,
        "gaussian-ideals" => SemigroupKind::GaussianIdeals,
        "doubled-primes" => SemigroupKind::DoubledPrimes,
        other => {
            let params = other
                .strip_prefix("ap-primes:")
                .ok_or_else(|| Error::Parameter(format!("unknown semigroup {other:?}")))?;
            let mut modulus = None;
            let mut residues = None;
            for kv in params.split(',') {
                let (k, v) = kv
                    .split_once('=')
                    .ok_or_else(|| Error::Parse(format!("expected key=value in {kv:?}")))?;
                match k.trim() {
                    "q" => modulus = Some(v.trim().parse::<u64>().map_err(|_| Error::Parse(format!("bad modulus {v:?}")))?),
                    "r" => {
                        residues = Some(
                            v.split('|')
                                .map(|r| r.trim().parse::<u64>().map_err(|_| Error::Parse(format!("bad residue {r:?}"))))
                                .collect::<Result<Vec<_>>>()?,
                        )
                    }
                    key => return Err(Error::Parse(format!("unknown ap-primes parameter {key:?}"))),
                }
            }
            SemigroupKind::ApPrimes {
                modulus: modulus.ok_or_else(|| Error::Parse("ap-primes needs q=".into()))?,
                residues: residues.ok_or_else(|| Error::Parse("ap-primes needs r=".into()))?,
            }
        }
    };
    SemigroupSpec::new(kind)
}

/// Prefix sums of element weights up to `n`, with the SPF table used to
/// build them kept for decomposing sampled norms.
#[derive(Debug, Clone)]
pub struct WeightTable {
    spec: SemigroupSpec,
    n: u64,
    prefix: Vec<u64>,
    spf: SpfTable,
}

impl WeightTable {
    pub fn build(spec: &SemigroupSpec, n: u64) -> Result<Self> {
        if n < 1 {
            return Err(Error::Domain("weight table needs n >= 1".into()));
        }
        if n > WEIGHT_TABLE_CAP {
            return Err(Error::Capacity(format!("weight table for n = {n} exceeds cap {WEIGHT_TABLE_CAP}")));
        }
        let spf = SpfTable::new(n)?;
        let len = n as usize + 1;
        let mut weight = vec![0u32; len];
        weight[1] = 1;
        for m in 2..len {
            let p = spf.smallest(m as u64);
            let mut rest = m as u64;
            let mut a = 0;
            while rest % p == 0 {
                rest /= p;
                a += 1;
            }
            weight[m] = weight[rest as usize] * spec.prime_power_weight(p, a) as u32;
        }
        let mut prefix = Vec::with_capacity(len);
        let mut acc = 0u64;
        prefix.push(0);
        for &w in &weight[1..] {
            acc += w as u64;
            prefix.push(acc);
        }
        Ok(WeightTable { spec: spec.clone(), n, prefix, spf })
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn spec(&self) -> &SemigroupSpec {
        &self.spec
    }

    /// `ν_S(x)` for `x ≤ n`.
    pub fn nu(&self, x: u64) -> u64 {
        self.prefix[x.min(self.n) as usize]
    }

    /// Element weight at norm `m ≤ n`.
    pub fn weight(&self, m: u64) -> u64 {
        self.prefix[m as usize] - self.prefix[m as usize - 1]
    }

    /// Norm drawn with probability `weight(m) / ν_S(n)`.
    pub fn sample_norm<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        let total = self.prefix[self.n as usize];
        let r = rng.gen_range(0..total);
        self.prefix.partition_point(|&c| c <= r) as u64
    }
}

/// One prime power `𝔭^e` in an element's factorization. `label` tells
/// apart distinct primes of equal norm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PrimePower {
    pub norm: u64,
    pub label: u8,
    pub exponent: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SemigroupElement {
    pub norm: u64,
    pub factors: Vec<PrimePower>,
}

impl SemigroupElement {
    /// Multiset of prime norms: `(norm, multiplicity)` sorted by norm.
    pub fn prime_norms(&self) -> Vec<(u64, u32)> {
        let mut out: Vec<(u64, u32)> = Vec::new();
        for f in &self.factors {
            match out.iter_mut().find(|(nm, _)| *nm == f.norm) {
                Some(slot) => slot.1 += f.exponent,
                None => out.push((f.norm, f.exponent)),
            }
        }
        out.sort_unstable();
        out
    }
}

/// Uniform element of norm `m`: each rational prime power `p^a` of `m` is
/// split independently and uniformly among its admissible decompositions.
pub fn random_element_of_norm<R: Rng + ?Sized>(
    spec: &SemigroupSpec,
    factors: &[(u64, u32)],
    rng: &mut R,
) -> Result<SemigroupElement> {
    let mut norm = 1u64;
    let mut out = Vec::new();
    for &(p, a) in factors {
        norm *= p.pow(a);
        if spec.prime_power_weight(p, a) == 0 {
            return Err(Error::Domain(format!("no element of {} has norm divisible exactly by {p}^{a}", spec.name)));
        }
        match spec.primes_over(p) {
            [(1, 1)] => out.push(PrimePower { norm: p, label: 0, exponent: a }),
            [(2, 1)] => out.push(PrimePower { norm: p * p, label: 0, exponent: a / 2 }),
            [(1, 2)] => {
                let first = rng.gen_range(0..=a);
                for (label, e) in [(0u8, first), (1u8, a - first)] {
                    if e > 0 {
                        out.push(PrimePower { norm: p, label, exponent: e });
                    }
                }
            }
            _ => unreachable!("weight checked above"),
        }
    }
    Ok(SemigroupElement { norm, factors: out })
}

/// Uniform sampler over elements of norm `≤ n`.
#[derive(Debug, Clone)]
pub enum ElementSampler {
    /// Ordinary integers need no table: the norm is uniform on `[1, n]`.
    Integers { spec: SemigroupSpec, n: u64 },
    Table(WeightTable),
}

impl ElementSampler {
    pub fn new(spec: &SemigroupSpec, n: u64) -> Result<Self> {
        if n < 2 {
            return Err(Error::Domain(format!("sampling needs n >= 2, got {n}")));
        }
        if spec.kind == SemigroupKind::Integers {
            Ok(ElementSampler::Integers { spec: spec.clone(), n })
        } else {
            Ok(ElementSampler::Table(WeightTable::build(spec, n)?))
        }
    }

    pub fn n(&self) -> u64 {
        match self {
            ElementSampler::Integers { n, .. } => *n,
            ElementSampler::Table(t) => t.n,
        }
    }

    pub fn spec(&self) -> &SemigroupSpec {
        match self {
            ElementSampler::Integers { spec, .. } => spec,
            ElementSampler::Table(t) => &t.spec,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<SemigroupElement> {
        match self {
            ElementSampler::Integers { spec, n } => {
                let m = rng.gen_range(1..=*n);
                random_element_of_norm(spec, &factor(m)?.factors, rng)
            }
            ElementSampler::Table(t) => {
                let m = t.sample_norm(rng);
                random_element_of_norm(&t.spec, &t.spf.factor(m), rng)
            }
        }
    }
}

/// One uniform element of norm `≤ n`, deterministic in `seed`.
pub fn sample_uniform_element(spec: &SemigroupSpec, n: u64, seed: u64) -> Result<SemigroupElement> {
    ElementSampler::new(spec, n)?.sample(&mut stream_rng(seed, 0))
}

/// `{log|𝔭| / log n}` over the prime factors of `e`, with multiplicity.
pub fn element_spectrum(e: &SemigroupElement, n: u64) -> Result<WeightedMultiset> {
    if n < 2 {
        return Err(Error::Domain(format!("scale n must be >= 2, got {n}")));
    }
    if e.norm > n {
        return Err(Error::Domain(format!("element norm {} exceeds n = {n}", e.norm)));
    }
    let ln_n = (n as f64).ln();
    WeightedMultiset::new(e.prime_norms().into_iter().map(|(nm, m)| (((nm as f64).ln() / ln_n).min(1.0), m)))
}

/// `ν_S(x)`, the number of elements of norm `≤ x`.
pub fn nu_count_semigroup(spec: &SemigroupSpec, x: u64) -> Result<u64> {
    if x < 1 {
        return Err(Error::Domain("nu_count_semigroup needs x >= 1".into()));
    }
    if spec.kind == SemigroupKind::Integers {
        return Ok(x);
    }
    Ok(WeightTable::build(spec, x)?.nu(x))
}

/// `π_S(x)`, the number of primes of norm `≤ x`.
pub fn pi_count_semigroup(spec: &SemigroupSpec, x: u64) -> Result<u64> {
    if x < 1 {
        return Err(Error::Domain("pi_count_semigroup needs x >= 1".into()));
    }
    Ok(spec.prime_norms_up_to(x).iter().map(|&(_, c)| c as u64).sum())
}

/// `(Σ_{|𝔭| ≤ x} 1/|𝔭|, that sum - θ ln ln x)`; the second entry
/// estimates the constant `B_S`.
pub fn semigroup_mertens(spec: &SemigroupSpec, x: u64) -> Result<(f64, f64)> {
    if x < 3 {
        return Err(Error::Domain(format!("semigroup_mertens needs x >= 3, got {x}")));
    }
    let sum: f64 = spec.prime_norms_up_to(x).iter().map(|&(nm, c)| c as f64 / nm as f64).sum();
    Ok((sum, sum - spec.theta.value() * (x as f64).ln().ln()))
}

/// Draws `count` elements on one stream; used by tests and small tools.
pub fn sample_elements(sampler: &ElementSampler, count: usize, rng: &mut StreamRng) -> Result<Vec<SemigroupElement>> {
    (0..count).map(|_| sampler.sample(rng)).collect()
}
