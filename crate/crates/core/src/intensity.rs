//! Interval families, empirical multi-intensities `E ∏ |A ∩ I_i|`, the
//! analytic lower bounds they are compared with, and the Poisson-process
//! and Poisson–Dirichlet multi-intensity densities.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pdcore::{pd_atoms_with, Theta, WeightedMultiset, DEFAULT_TAIL_EPSILON};
use crate::rng::{stream_rng, StreamRng};
use crate::special::box_integral;

/// Multiset of scaled log prime factors `log p / log n`.
pub type ScaledFactorMultiset = WeightedMultiset;

/// Gauss–Legendre nodes per axis for box integrals.
pub const BOX_QUADRATURE_ORDER: usize = 32;

/// Closed interval `[a, b]` with `0 < a ≤ b ≤ 1`. A point interval
/// `[a, a]` is allowed and counts atoms equal to `a`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub a: f64,
    pub b: f64,
}

impl Interval {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if a > 0.0 && a <= b && b <= 1.0 {
            Ok(Interval { a, b })
        } else {
            Err(Error::Domain(format!("interval [{a}, {b}] must satisfy 0 < a <= b <= 1")))
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.a <= x && x <= self.b
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.a, self.b)
    }
}

/// Ordered family of pairwise-disjoint closed intervals in (0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalFamily {
    intervals: Vec<Interval>,
    sum_b_lt_1: bool,
}

impl IntervalFamily {
    /// Disjointness is strict: intervals may not share an endpoint.
    pub fn new(intervals: Vec<Interval>) -> Result<Self> {
        if intervals.is_empty() {
            return Err(Error::Domain("interval family must not be empty".into()));
        }
        for (i, x) in intervals.iter().enumerate() {
            for y in &intervals[i + 1..] {
                if !(x.b < y.a || y.b < x.a) {
                    return Err(Error::Domain(format!("intervals [{x}] and [{y}] are not disjoint")));
                }
            }
        }
        let sum_b: f64 = intervals.iter().map(|i| i.b).sum();
        Ok(IntervalFamily { intervals, sum_b_lt_1: sum_b < 1.0 })
    }

    pub fn from_pairs(pairs: &[(f64, f64)]) -> Result<Self> {
        let intervals = pairs.iter().map(|&(a, b)| Interval::new(a, b)).collect::<Result<Vec<_>>>()?;
        Self::new(intervals)
    }

    pub fn intervals(&self) -> &[Interval] {
        &self.intervals
    }

    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    /// Whether `b_1 + ⋯ + b_k < 1`.
    pub fn sum_b_lt_1(&self) -> bool {
        self.sum_b_lt_1
    }

    pub fn sum_a(&self) -> f64 {
        self.intervals.iter().map(|i| i.a).sum()
    }

    pub fn sum_b(&self) -> f64 {
        self.intervals.iter().map(|i| i.b).sum()
    }

    fn require_sum_b_lt_1(&self) -> Result<()> {
        if self.sum_b_lt_1 {
            Ok(())
        } else {
            Err(Error::Hypothesis(format!("sum of right endpoints is {} (must be < 1)", self.sum_b())))
        }
    }
}

impl fmt::Display for IntervalFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.intervals.iter().map(|i| i.to_string()).collect();
        f.write_str(&parts.join(","))
    }
}

/// Parses `"a:b,a:b,..."`.
impl FromStr for IntervalFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut intervals = Vec::new();
        for part in s.split(',') {
            let part = part.trim();
            let (a, b) = part
                .split_once(':')
                .ok_or_else(|| Error::Parse(format!("interval {part:?} is not of the form a:b")))?;
            let a: f64 = a.trim().parse().map_err(|_| Error::Parse(format!("bad left endpoint in {part:?}")))?;
            let b: f64 = b.trim().parse().map_err(|_| Error::Parse(format!("bad right endpoint in {part:?}")))?;
            intervals.push(Interval::new(a, b)?);
        }
        IntervalFamily::new(intervals)
    }
}

/// `|A ∩ [a, b]|` counted with multiplicity, endpoints inclusive.
pub fn count_in_interval(a: &ScaledFactorMultiset, interval: Interval) -> u64 {
    a.entries().iter().filter(|(v, _)| interval.contains(*v)).map(|&(_, m)| m as u64).sum()
}

/// `∏_i |A ∩ I_i|`.
pub fn interval_count_product(a: &ScaledFactorMultiset, family: &IntervalFamily) -> u64 {
    family.intervals.iter().map(|&i| count_in_interval(a, i)).product()
}

/// Mergeable running moments of a scalar statistic.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MomentAccumulator {
    pub count: u64,
    pub sum: f64,
    pub sum_sq: f64,
}

impl MomentAccumulator {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        self.sum += x;
        self.sum_sq += x * x;
    }

    pub fn merge(&mut self, other: &MomentAccumulator) {
        self.count += other.count;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
    }

    pub fn mean(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.sum / self.count as f64
        }
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            return 0.0;
        }
        let n = self.count as f64;
        let mean = self.sum / n;
        ((self.sum_sq - n * mean * mean) / (n - 1.0)).max(0.0)
    }

    pub fn std_error(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.variance() / self.count as f64).sqrt()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntensityEstimate {
    pub intervals: IntervalFamily,
    pub sample_count: u64,
    pub mean_product: f64,
    pub std_error: f64,
}

impl IntensityEstimate {
    pub fn from_moments(intervals: IntervalFamily, moments: &MomentAccumulator) -> Result<Self> {
        if moments.count == 0 {
            return Err(Error::Usage("intensity estimate needs at least one sample".into()));
        }
        Ok(IntensityEstimate {
            intervals,
            sample_count: moments.count,
            mean_product: moments.mean(),
            std_error: moments.std_error(),
        })
    }

    pub const CSV_HEADER: &'static str = "k,intervals,samples,mean,stderr,bound_log,bound_ratio";

    /// One CSV row; the bounds are blank when `Σ b_i ≥ 1`.
    pub fn csv_row(&self) -> String {
        let bound = |form| theta1_bound(&self.intervals, form).map(fmt_sig9).unwrap_or_default();
        format!(
            "{},\"{}\",{},{},{},{},{}",
            self.intervals.len(),
            self.intervals,
            self.sample_count,
            fmt_sig9(self.mean_product),
            fmt_sig9(self.std_error),
            bound(BoundForm::Log),
            bound(BoundForm::Ratio),
        )
    }
}

/// Mean over samples of `∏_i |A ∩ I_i|` with its standard error.
pub fn empirical_multi_intensity<'a, I>(samples: I, family: &IntervalFamily) -> Result<IntensityEstimate>
where
    I: IntoIterator<Item = &'a ScaledFactorMultiset>,
{
    let mut acc = MomentAccumulator::default();
    for a in samples {
        acc.push(interval_count_product(a, family) as f64);
    }
    IntensityEstimate::from_moments(family.clone(), &acc)
}

/// Per-interval factor of the lower bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundForm {
    /// `(b - a) / b`
    Ratio,
    /// `ln(b / a)`
    Log,
}

impl BoundForm {
    fn term(self, i: &Interval) -> f64 {
        match self {
            BoundForm::Ratio => (i.b - i.a) / i.b,
            BoundForm::Log => (i.b / i.a).ln(),
        }
    }
}

/// `∏ (b_i - a_i)/b_i` or `∏ ln(b_i/a_i)`; requires `Σ b_i < 1`.
pub fn theta1_bound(family: &IntervalFamily, form: BoundForm) -> Result<f64> {
    family.require_sum_b_lt_1()?;
    Ok(family.intervals.iter().map(|i| form.term(i)).product())
}

/// `θ^k / ((1 - Σa)^α (1 - Σb)^β) · ∏ term_i` with `α + β = 1 - θ`.
pub fn theta_bound(family: &IntervalFamily, theta: Theta, alpha: f64, beta: f64, form: BoundForm) -> Result<f64> {
    let th = theta.value();
    if ((alpha + beta) - (1.0 - th)).abs() > 1e-12 {
        return Err(Error::Hypothesis(format!("alpha + beta = {} but 1 - theta = {}", alpha + beta, 1.0 - th)));
    }
    let product = theta1_bound(family, form)?;
    let k = family.len() as i32;
    let denom = (1.0 - family.sum_a()).powf(alpha) * (1.0 - family.sum_b()).powf(beta);
    Ok(th.powi(k) / denom * product)
}

fn require_distinct_unit(xs: &[f64]) -> Result<()> {
    if xs.is_empty() {
        return Err(Error::Domain("density needs at least one coordinate".into()));
    }
    for (i, &x) in xs.iter().enumerate() {
        if !(x > 0.0 && x <= 1.0) {
            return Err(Error::Domain(format!("coordinate {x} outside (0, 1]")));
        }
        if xs[..i].contains(&x) {
            return Err(Error::Domain(format!("repeated coordinate {x}")));
        }
    }
    Ok(())
}

/// Multi-intensity density `θ^k / (x_1 ⋯ x_k)` of the Poisson process with
/// intensity `θ dx/x`.
pub fn pp_multi_intensity_density(theta: Theta, xs: &[f64]) -> Result<f64> {
    require_distinct_unit(xs)?;
    let prod: f64 = xs.iter().product();
    Ok(theta.value().powi(xs.len() as i32) / prod)
}

/// Multi-intensity density of PD(θ): `θ^k (1-t)^{θ-1} / (x_1 ⋯ x_k)` for
/// `t = Σ x_i < 1`, zero for `t > 1`, undefined at `t = 1`.
pub fn pd_multi_intensity_density(theta: Theta, xs: &[f64]) -> Result<f64> {
    require_distinct_unit(xs)?;
    let t: f64 = xs.iter().sum();
    if t == 1.0 {
        return Err(Error::Domain("PD multi-intensity density is undefined at x_1 + ... + x_k = 1".into()));
    }
    if t > 1.0 {
        return Ok(0.0);
    }
    let th = theta.value();
    let prod: f64 = xs.iter().product();
    Ok(th.powi(xs.len() as i32) * (1.0 - t).powf(th - 1.0) / prod)
}

/// `∫_box` of the PD(θ) multi-intensity density by tensor Gauss–Legendre.
pub fn pd_box_intensity(theta: Theta, family: &IntervalFamily) -> f64 {
    let bounds: Vec<(f64, f64)> = family.intervals.iter().map(|i| (i.a, i.b)).collect();
    if family.sum_a() >= 1.0 {
        return 0.0;
    }
    box_integral(&bounds, BOX_QUADRATURE_ORDER, |xs| pd_multi_intensity_density(theta, xs).unwrap_or(0.0))
}

/// Source of random multisets for [`characterization_check`].
pub trait SpectrumSource: Sync {
    fn draw(&self, rng: &mut StreamRng) -> Result<ScaledFactorMultiset>;
}

/// All atoms of a PD(θ) draw above the truncation level.
#[derive(Debug, Clone, Copy)]
pub struct PdSource {
    pub theta: Theta,
    pub tail_epsilon: f64,
}

impl PdSource {
    pub fn new(theta: Theta) -> Self {
        PdSource { theta, tail_epsilon: DEFAULT_TAIL_EPSILON }
    }
}

impl SpectrumSource for PdSource {
    fn draw(&self, rng: &mut StreamRng) -> Result<ScaledFactorMultiset> {
        let atoms = pd_atoms_with(self.theta, self.tail_epsilon, rng)?;
        WeightedMultiset::from_values(&atoms)
    }
}

/// Samples handled by one random stream in sharded estimators.
pub const SHARD_SIZE: u64 = 4096;

/// Comparison of one box against the PD(θ) prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxCheck {
    pub estimate: IntensityEstimate,
    pub predicted: f64,
    pub z_score: f64,
}

/// Empirical multi-intensity of `sampler` on each box against the
/// integrated PD(θ) multi-intensity density.
///
/// Shards of [`SHARD_SIZE`] draws use stream id = shard index, so the
/// result does not depend on the thread count.
pub fn characterization_check<S: SpectrumSource>(
    sampler: &S,
    theta: Theta,
    boxes: &[IntervalFamily],
    samples: u64,
    seed: u64,
) -> Result<Vec<BoxCheck>> {
    if samples == 0 {
        return Err(Error::Usage("characterization check needs at least one sample".into()));
    }
    let shards = samples.div_ceil(SHARD_SIZE);
    let partials: Vec<Vec<MomentAccumulator>> = (0..shards)
        .into_par_iter()
        .map(|shard| {
            let mut rng = stream_rng(seed, shard);
            let n = SHARD_SIZE.min(samples - shard * SHARD_SIZE);
            let mut acc = vec![MomentAccumulator::default(); boxes.len()];
            for _ in 0..n {
                let a = sampler.draw(&mut rng)?;
                for (family, slot) in boxes.iter().zip(acc.iter_mut()) {
                    slot.push(interval_count_product(&a, family) as f64);
                }
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let mut totals = vec![MomentAccumulator::default(); boxes.len()];
    for part in &partials {
        for (t, p) in totals.iter_mut().zip(part) {
            t.merge(p);
        }
    }
    boxes
        .iter()
        .zip(&totals)
        .map(|(family, acc)| {
            let estimate = IntensityEstimate::from_moments(family.clone(), acc)?;
            let predicted = pd_box_intensity(theta, family);
            let z_score = if estimate.std_error > 0.0 {
                (estimate.mean_product - predicted) / estimate.std_error
            } else if estimate.mean_product == predicted {
                0.0
            } else {
                f64::INFINITY
            };
            Ok(BoxCheck { estimate, predicted, z_score })
        })
        .collect()
}

/// Formats with nine significant digits, `.` as decimal separator.
pub fn fmt_sig9(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let exp = x.abs().log10().floor() as i32;
    if (-5..15).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        let s = format!("{x:.decimals$}");
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        format!("{x:.8e}")
    }
}
