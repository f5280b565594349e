//! GEM and Poisson–Dirichlet samplers, ranking, size-biased permutation,
//! Dickman's function and the density of the Poisson-process total.
//!
//! GEM(θ) is generated by stick breaking with `V_i = U_i^{1/θ}`:
//! `G_1 = 1 - V_1`, `G_j = V_1 ⋯ V_{j-1} (1 - V_j)`. Ranking the GEM pieces
//! gives PD(θ); a size-biased permutation of PD(θ) gives GEM(θ) back.

use std::sync::OnceLock;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{open_unit, stream_rng};
use crate::special::{gamma, EULER_GAMMA};

/// Default truncation for [`sample_pd`]: stop once the unbroken stick is
/// shorter than this.
pub const DEFAULT_TAIL_EPSILON: f64 = 1e-12;

/// Largest argument accepted by [`dickman_rho`].
pub const DICKMAN_MAX_U: f64 = 64.0;

/// Poisson–Dirichlet / GEM parameter θ > 0.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Theta(f64);

impl Theta {
    pub fn new(value: f64) -> Result<Self> {
        if value.is_finite() && value > 0.0 {
            Ok(Theta(value))
        } else {
            Err(Error::Parameter(format!("theta must be positive and finite, got {value}")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Theta {
    type Error = Error;
    fn try_from(v: f64) -> Result<Self> {
        Theta::new(v)
    }
}

impl From<Theta> for f64 {
    fn from(t: Theta) -> f64 {
        t.0
    }
}

/// First `k` coordinates of a GEM(θ) draw.
#[derive(Debug, Clone, PartialEq)]
pub struct GemSequence {
    pub theta: Theta,
    pub values: Vec<f64>,
    /// `ln(V_1 ⋯ V_j)` after each piece: the log of the unbroken stick, so
    /// prefix sums are exactly `1 - exp(log_residuals[j])`.
    pub log_residuals: Vec<f64>,
}

impl GemSequence {
    /// Stick remaining after the last returned piece.
    pub fn residual(&self) -> f64 {
        self.log_residuals.last().map_or(1.0, |l| l.exp())
    }
}

/// Non-increasing sequence in [0, 1] with implicit zero padding.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RankedSpectrum {
    values: Vec<f64>,
    total: f64,
}

impl RankedSpectrum {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Sum of the stored values.
    pub fn total(&self) -> f64 {
        self.total
    }

    /// `i`-th largest value, 1-based; zero past the stored prefix.
    pub fn get(&self, i: usize) -> f64 {
        assert!(i >= 1, "spectrum coordinates are 1-based");
        self.values.get(i - 1).copied().unwrap_or(0.0)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// First `k` coordinates, zero-padded.
    pub fn top(&self, k: usize) -> Vec<f64> {
        (1..=k).map(|i| self.get(i)).collect()
    }
}

/// Finite multiset of values in (0, 1] with positive integer multiplicities.
///
/// Entries are kept sorted by decreasing value with no repeated values.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct WeightedMultiset {
    entries: Vec<(f64, u32)>,
    total: f64,
}

impl WeightedMultiset {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Builds a multiset, merging repeated values and dropping zero
    /// multiplicities.
    pub fn new<I>(entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (f64, u32)>,
    {
        let mut raw: Vec<(f64, u32)> = Vec::new();
        for (value, mult) in entries {
            if !(value > 0.0 && value <= 1.0) {
                return Err(Error::Domain(format!("multiset value {value} outside (0, 1]")));
            }
            if mult > 0 {
                raw.push((value, mult));
            }
        }
        raw.sort_by(|a, b| b.0.total_cmp(&a.0));
        let mut merged: Vec<(f64, u32)> = Vec::with_capacity(raw.len());
        for (value, mult) in raw {
            match merged.last_mut() {
                Some(last) if last.0 == value => last.1 += mult,
                _ => merged.push((value, mult)),
            }
        }
        let total = merged.iter().map(|&(v, m)| v * m as f64).sum();
        Ok(WeightedMultiset { entries: merged, total })
    }

    /// Multiset with every value of multiplicity one.
    pub fn from_values(values: &[f64]) -> Result<Self> {
        Self::new(values.iter().map(|&v| (v, 1)))
    }

    pub fn entries(&self) -> &[(f64, u32)] {
        &self.entries
    }

    /// `Σ multiplicity · value`.
    pub fn total(&self) -> f64 {
        self.total
    }

    /// Number of elements counted with multiplicity.
    pub fn cardinality(&self) -> u64 {
        self.entries.iter().map(|e| e.1 as u64).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Values repeated by multiplicity, ranked.
    pub fn ranked(&self) -> RankedSpectrum {
        let values: Vec<f64> = self
            .entries
            .iter()
            .flat_map(|&(v, m)| std::iter::repeat(v).take(m as usize))
            .collect();
        RankedSpectrum { total: self.total, values }
    }

    /// Largest value, or 0 for the empty multiset.
    pub fn max_value(&self) -> f64 {
        self.entries.first().map_or(0.0, |e| e.0)
    }
}

/// GEM(θ) prefix of length `k` from an explicit generator.
pub fn sample_gem_with<R: Rng + ?Sized>(theta: Theta, k: usize, rng: &mut R) -> Result<GemSequence> {
    if k == 0 {
        return Err(Error::Parameter("k must be at least 1".into()));
    }
    let inv_theta = 1.0 / theta.value();
    let mut values = Vec::with_capacity(k);
    let mut log_residuals = Vec::with_capacity(k);
    let mut log_residual = 0.0f64;
    for _ in 0..k {
        // ln V = ln(U)/θ; 1 - V computed as -expm1 keeps small pieces accurate.
        let log_v = open_unit(rng).ln() * inv_theta;
        let piece = log_residual.exp() * -log_v.exp_m1();
        log_residual += log_v;
        values.push(piece);
        log_residuals.push(log_residual);
    }
    Ok(GemSequence { theta, values, log_residuals })
}

/// GEM(θ) prefix of length `k`, deterministic in `seed`.
pub fn sample_gem(theta: Theta, k: usize, seed: u64) -> Result<GemSequence> {
    sample_gem_with(theta, k, &mut stream_rng(seed, 0))
}

/// Joint density of `(G_1, …, G_k)` under GEM(θ).
///
/// Zero off the open set where every coordinate is in (0,1), the total is
/// below one and the coordinates are pairwise distinct.
pub fn gem_density(theta: Theta, xs: &[f64]) -> f64 {
    if xs.is_empty() || !in_gem_domain(xs) {
        return 0.0;
    }
    let th = theta.value();
    let mut partial = 0.0;
    let mut denom = 1.0;
    for (j, &x) in xs.iter().enumerate() {
        if j > 0 {
            denom *= 1.0 - partial;
        }
        partial += x;
    }
    th.powi(xs.len() as i32) * (1.0 - partial).powf(th - 1.0) / denom
}

fn in_gem_domain(xs: &[f64]) -> bool {
    let mut sum = 0.0;
    for &x in xs {
        if !(x > 0.0 && x < 1.0) {
            return false;
        }
        sum += x;
    }
    if !(sum > 0.0 && sum < 1.0) {
        return false;
    }
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.windows(2).all(|w| w[0] != w[1])
}

/// Sorts nonnegative values into non-increasing order, dropping zeros into
/// the implicit padding.
pub fn rank(values: &[f64]) -> Result<RankedSpectrum> {
    let mut kept = Vec::with_capacity(values.len());
    for &v in values {
        if v.is_nan() || v < 0.0 {
            return Err(Error::Domain(format!("cannot rank negative or NaN value {v}")));
        }
        if v > 0.0 {
            kept.push(v);
        }
    }
    kept.sort_by(|a, b| b.total_cmp(a));
    let total = kept.iter().sum();
    Ok(RankedSpectrum { values: kept, total })
}

/// All stick-breaking pieces of a GEM(θ) draw, generated until the unbroken
/// remainder is below `tail_epsilon`. Pieces come in GEM order.
pub fn pd_atoms_with<R: Rng + ?Sized>(theta: Theta, tail_epsilon: f64, rng: &mut R) -> Result<Vec<f64>> {
    check_tail_epsilon(tail_epsilon)?;
    let inv_theta = 1.0 / theta.value();
    let log_eps = tail_epsilon.ln();
    let mut atoms = Vec::new();
    let mut log_residual = 0.0f64;
    while log_residual >= log_eps {
        let log_v = open_unit(rng).ln() * inv_theta;
        atoms.push(log_residual.exp() * -log_v.exp_m1());
        log_residual += log_v;
    }
    Ok(atoms)
}

fn check_tail_epsilon(eps: f64) -> Result<()> {
    if eps > 0.0 && eps < 1.0 {
        Ok(())
    } else {
        Err(Error::Parameter(format!("tail_epsilon must lie in (0, 1), got {eps}")))
    }
}

/// Top `k` coordinates of a PD(θ) draw.
///
/// The stick is broken until the remainder drops below `tail_epsilon`; the
/// returned prefix is the exact top-`k` whenever the `k`-th value is at
/// least `tail_epsilon`, since no unbroken piece can exceed the remainder.
pub fn sample_pd_with<R: Rng + ?Sized>(
    theta: Theta,
    k: usize,
    tail_epsilon: f64,
    rng: &mut R,
) -> Result<RankedSpectrum> {
    if k == 0 {
        return Err(Error::Parameter("k must be at least 1".into()));
    }
    let mut atoms = pd_atoms_with(theta, tail_epsilon, rng)?;
    if atoms.len() > k {
        atoms.select_nth_unstable_by(k - 1, |a, b| b.total_cmp(a));
        atoms.truncate(k);
    }
    rank(&atoms)
}

/// Top `k` coordinates of PD(θ), deterministic in `seed`.
pub fn sample_pd(theta: Theta, k: usize, tail_epsilon: f64, seed: u64) -> Result<RankedSpectrum> {
    sample_pd_with(theta, k, tail_epsilon, &mut stream_rng(seed, 0))
}

/// Size-biased ordering of the first `k` picks from `a`, without
/// replacement, zero-padded once the multiset is exhausted.
pub fn size_biased_permutation_with<R: Rng + ?Sized>(a: &WeightedMultiset, k: usize, rng: &mut R) -> Vec<f64> {
    let mut remaining: Vec<(f64, u32)> = a.entries.clone();
    let mut mass = a.total;
    let mut out = Vec::with_capacity(k);
    while out.len() < k && !remaining.is_empty() {
        let target = rng.gen::<f64>() * mass;
        let mut acc = 0.0;
        let mut chosen = remaining.len() - 1;
        for (i, &(v, m)) in remaining.iter().enumerate() {
            acc += v * m as f64;
            if target < acc {
                chosen = i;
                break;
            }
        }
        let value = remaining[chosen].0;
        out.push(value);
        remaining[chosen].1 -= 1;
        if remaining[chosen].1 == 0 {
            remaining.remove(chosen);
            // Recompute rather than subtract so round-off cannot accumulate.
            mass = remaining.iter().map(|&(v, m)| v * m as f64).sum();
        } else {
            mass -= value;
        }
    }
    out.resize(k, 0.0);
    out
}

pub fn size_biased_permutation(a: &WeightedMultiset, k: usize, seed: u64) -> Vec<f64> {
    size_biased_permutation_with(a, k, &mut stream_rng(seed, 0))
}

/// Dickman's function ρ(u) for `0 ≤ u ≤ 64`.
pub fn dickman_rho(u: f64) -> Result<f64> {
    if u.is_nan() || u < 0.0 {
        return Err(Error::Domain(format!("dickman_rho needs u >= 0, got {u}")));
    }
    if u > DICKMAN_MAX_U {
        return Err(Error::Domain(format!("dickman_rho is tabulated up to u = {DICKMAN_MAX_U}, got {u}")));
    }
    if u <= 1.0 {
        return Ok(1.0);
    }
    Ok(DickmanTable::get().eval(u))
}

const DICKMAN_STEPS: usize = 1024;
const DICKMAN_STENCIL: usize = 8;

struct DickmanTable {
    /// ρ at `i / DICKMAN_STEPS`, Richardson-extrapolated.
    grid: Vec<f64>,
}

impl DickmanTable {
    fn get() -> &'static DickmanTable {
        static TABLE: OnceLock<DickmanTable> = OnceLock::new();
        TABLE.get_or_init(|| {
            let max_u = DICKMAN_MAX_U as usize;
            let coarse = dickman_trapezoid(DICKMAN_STEPS, max_u);
            let fine = dickman_trapezoid(2 * DICKMAN_STEPS, max_u);
            let grid = coarse
                .iter()
                .enumerate()
                .map(|(i, &c)| (4.0 * fine[2 * i] - c) / 3.0)
                .collect();
            DickmanTable { grid }
        })
    }

    fn eval(&self, u: f64) -> f64 {
        let n = DICKMAN_STEPS;
        let pos = u * n as f64;
        let idx = pos.round();
        if (pos - idx).abs() < 1e-9 {
            return self.grid[idx as usize];
        }
        // Lagrange stencil kept inside one unit segment, where ρ is smooth.
        let seg = (u.ceil() as usize - 1) * n;
        let seg_end = seg + n;
        let centre = pos.floor() as usize;
        let start = centre
            .saturating_sub(DICKMAN_STENCIL / 2 - 1)
            .clamp(seg, seg_end + 1 - DICKMAN_STENCIL);
        let h = 1.0 / n as f64;
        let mut value = 0.0;
        for i in start..start + DICKMAN_STENCIL {
            let xi = i as f64 * h;
            let mut basis = 1.0;
            for j in start..start + DICKMAN_STENCIL {
                if j != i {
                    let xj = j as f64 * h;
                    basis *= (u - xj) / (xi - xj);
                }
            }
            value += basis * self.grid[i];
        }
        value
    }
}

/// Trapezoid integration of `u ρ'(u) = -ρ(u - 1)` on a grid with
/// `steps` points per unit.
fn dickman_trapezoid(steps: usize, max_u: usize) -> Vec<f64> {
    let h = 1.0 / steps as f64;
    let len = max_u * steps + 1;
    let mut rho = vec![1.0; len];
    for i in steps + 1..len {
        let u1 = i as f64 * h;
        let u0 = u1 - h;
        let slope1 = rho[i - steps] / u1;
        let slope0 = rho[i - 1 - steps] / u0;
        rho[i] = rho[i - 1] - 0.5 * h * (slope0 + slope1);
    }
    rho
}

/// Density of the total `T` of the Poisson process with intensity
/// `θ dx/x`, restricted to `(0, 1]`: `e^{-γθ} t^{θ-1} / Γ(θ)`.
pub fn pd_total_sum_density(theta: Theta, t: f64) -> Result<f64> {
    if !(t > 0.0 && t <= 1.0) {
        return Err(Error::Domain(format!("total-sum density is defined on (0, 1], got t = {t}")));
    }
    let th = theta.value();
    Ok((-EULER_GAMMA * th).exp() * t.powf(th - 1.0) / gamma(th))
}
