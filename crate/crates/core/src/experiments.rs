//! Monte Carlo experiments: Billingsley-type limits over semigroups,
//! conditioned Ω/ω ensembles, an Erdős–Kac check and PD characterization
//! checks, together with PD reference CDFs, KS distances and report
//! serialization.
//!
//! Every experiment splits its samples into shards of [`SHARD_SIZE`]; shard
//! `s` draws from stream `s` of the configured seed and shard accumulators
//! are merged in shard order. Reports are therefore identical for any
//! number of worker threads.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::{Arc, Mutex, OnceLock};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arith::{factor, sieve_primes, spectrum_from_factors, OmegaMode};
use crate::error::{Error, Result};
use crate::intensity::{
    characterization_check, fmt_sig9, interval_count_product, pd_box_intensity, theta_bound, BoundForm,
    IntervalFamily, MomentAccumulator, PdSource, SHARD_SIZE,
};
use crate::pdcore::{dickman_rho, pd_atoms_with, Theta, WeightedMultiset, DEFAULT_TAIL_EPSILON, DICKMAN_MAX_U};
use crate::rng::stream_rng;
use crate::semigroups::{element_spectrum, make_semigroup, ElementSampler, SemigroupKind, SemigroupSpec};
use crate::special::normal_cdf;

/// Default spacing of the L_1 CDF grid.
pub const DEFAULT_GRID_STEP: f64 = 0.05;
/// PD draws behind every Monte Carlo reference.
pub const REFERENCE_DRAWS: u64 = 1_000_000;
/// Seed of the PD reference draws.
pub const REFERENCE_SEED: u64 = 20_240_917;
/// Number of top coordinates whose reference means are stored.
pub const REFERENCE_TOPK: usize = 10;
/// Draws tried before a conditioned ensemble is declared infeasible.
pub const PROBE_DRAWS: u64 = 1_000_000;
/// Floating-point slack on the `total ≤ 1` check.
pub const TOTAL_SLACK: f64 = 1e-12;

const PROBE_STREAM: u64 = u64::MAX;
const Z_GRID_MIN: f64 = -3.0;
const Z_GRID_STEP: f64 = 0.25;
const Z_GRID_POINTS: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Billingsley,
    Conditioned,
    ErdosKac,
    Intensity,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub semigroup: SemigroupSpec,
    /// Norm cap.
    pub n: u64,
    pub samples: u64,
    pub topk: usize,
    pub intervals: Option<IntervalFamily>,
    pub mode: Option<OmegaMode>,
    pub tau: Option<f64>,
    /// PD parameter for intensity runs.
    pub theta: Option<Theta>,
    pub seed: u64,
    pub grid_step: f64,
    /// Worker threads, 0 for the available parallelism. Left out of the
    /// serialized report, which does not depend on it.
    #[serde(skip)]
    pub workers: usize,
    /// Directory for PD reference files; `None` keeps references in memory.
    #[serde(skip)]
    pub reference_cache: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Desk-scale defaults: integers, `n = 10^7`, `10^5` samples.
    pub fn new(kind: ExperimentKind) -> Self {
        ExperimentConfig {
            kind,
            semigroup: make_semigroup("integers").expect("built-in semigroup"),
            n: 10_000_000,
            samples: 100_000,
            topk: 3,
            intervals: None,
            mode: None,
            tau: None,
            theta: None,
            seed: 0,
            grid_step: DEFAULT_GRID_STEP,
            workers: 0,
            reference_cache: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(Error::Parameter("samples must be at least 1".into()));
        }
        if self.topk == 0 {
            return Err(Error::Parameter("topk must be at least 1".into()));
        }
        if self.n < 3 {
            return Err(Error::Parameter(format!("n must be at least 3, got {}", self.n)));
        }
        if let Some(tau) = self.tau {
            if !(tau.is_finite() && tau > 0.0) {
                return Err(Error::Parameter(format!("tau must be positive, got {tau}")));
            }
        }
        if !(self.grid_step > 0.0 && self.grid_step < 1.0) {
            return Err(Error::Parameter(format!("grid step must lie in (0, 1), got {}", self.grid_step)));
        }
        match self.kind {
            ExperimentKind::Conditioned => {
                if self.mode.is_none() || self.tau.is_none() {
                    return Err(Error::Usage("conditioned runs need both mode and tau".into()));
                }
                self.require_integers()
            }
            ExperimentKind::ErdosKac => self.require_integers(),
            ExperimentKind::Intensity => {
                if self.theta.is_none() || self.intervals.is_none() {
                    return Err(Error::Usage("intensity runs need theta and intervals".into()));
                }
                Ok(())
            }
            ExperimentKind::Billingsley => Ok(()),
        }
    }

    fn require_integers(&self) -> Result<()> {
        if self.semigroup.kind != SemigroupKind::Integers {
            return Err(Error::Usage(format!(
                "{:?} experiments are defined for the integers only, not {}",
                self.kind, self.semigroup.name
            )));
        }
        Ok(())
    }
}

/// One named result. `abs_error` is `|empirical - reference|` whenever a
/// reference is present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Statistic {
    pub name: String,
    pub empirical: f64,
    pub reference: Option<f64>,
    pub abs_error: Option<f64>,
    pub std_error: Option<f64>,
}

impl Statistic {
    pub fn new(name: impl Into<String>, empirical: f64) -> Self {
        Statistic { name: name.into(), empirical, reference: None, abs_error: None, std_error: None }
    }

    pub fn with_reference(mut self, reference: f64) -> Self {
        self.reference = Some(reference);
        self.abs_error = Some((self.empirical - reference).abs());
        self
    }

    pub fn with_std_error(mut self, se: f64) -> Self {
        self.std_error = Some(se);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CdfRow {
    pub x: f64,
    pub empirical_cdf: f64,
    pub reference_cdf: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    /// Parameter of the PD law the run is compared with, if any.
    pub theta: Option<f64>,
    pub statistics: Vec<Statistic>,
    pub cdf_grid: Vec<CdfRow>,
    pub warnings: Vec<String>,
}

impl ExperimentReport {
    fn new(config: &ExperimentConfig, theta: Option<f64>) -> Self {
        ExperimentReport { config: config.clone(), theta, statistics: Vec::new(), cdf_grid: Vec::new(), warnings: Vec::new() }
    }

    pub fn statistic(&self, name: &str) -> Option<&Statistic> {
        self.statistics.iter().find(|s| s.name == name)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub const STATS_CSV_HEADER: &'static str = "statistic,empirical,reference,abs_error,std_error";
    pub const CDF_CSV_HEADER: &'static str = "x,empirical_cdf,reference_cdf";

    pub fn stats_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(fmt_sig9).unwrap_or_default();
        let mut out = format!("{}\n", Self::STATS_CSV_HEADER);
        for s in &self.statistics {
            let name = if s.name.contains(',') { format!("\"{}\"", s.name) } else { s.name.clone() };
            let _ = writeln!(
                out,
                "{name},{},{},{},{}",
                fmt_sig9(s.empirical),
                opt(s.reference),
                opt(s.abs_error),
                opt(s.std_error)
            );
        }
        out
    }

    pub fn cdf_csv(&self) -> String {
        let mut out = format!("{}\n", Self::CDF_CSV_HEADER);
        for r in &self.cdf_grid {
            let _ = writeln!(out, "{},{},{}", fmt_sig9(r.x), fmt_sig9(r.empirical_cdf), fmt_sig9(r.reference_cdf));
        }
        out
    }

    /// Writes the report. CSV output goes to `path` plus a sibling
    /// `<stem>_cdf.<ext>` holding the CDF grid. Returns the files written.
    pub fn write(&self, path: &Path, format: ReportFormat) -> Result<Vec<PathBuf>> {
        match format {
            ReportFormat::Json => {
                fs::write(path, self.to_json()? + "\n")?;
                Ok(vec![path.to_path_buf()])
            }
            ReportFormat::Csv => {
                fs::write(path, self.stats_csv())?;
                let cdf_path = cdf_sibling(path);
                fs::write(&cdf_path, self.cdf_csv())?;
                Ok(vec![path.to_path_buf(), cdf_path])
            }
        }
    }
}

/// `out.csv` → `out_cdf.csv`.
pub fn cdf_sibling(path: &Path) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}_cdf.{}", ext.to_string_lossy()),
        None => format!("{stem}_cdf"),
    };
    path.with_file_name(name)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(Error::Parse(format!("unknown format {other:?} (expected csv or json)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub sample_count: u64,
}

/// Largest absolute gap between two CDFs tabulated on the same grid.
pub fn ks_statistic(empirical: &[(f64, f64)], reference: &[(f64, f64)], sample_count: u64) -> Result<KsResult> {
    if empirical.len() != reference.len() || empirical.iter().zip(reference).any(|(e, r)| e.0 != r.0) {
        return Err(Error::Usage("KS distance needs both CDFs on the same grid".into()));
    }
    for cdf in [empirical, reference] {
        if cdf.iter().any(|&(_, v)| !(0.0..=1.0).contains(&v)) {
            return Err(Error::Domain("CDF values must lie in [0, 1]".into()));
        }
        if cdf.windows(2).any(|w| w[1].1 < w[0].1) {
            return Err(Error::Domain("CDF values must be non-decreasing".into()));
        }
    }
    let statistic = empirical.iter().zip(reference).map(|(e, r)| (e.1 - r.1).abs()).fold(0.0, f64::max);
    Ok(KsResult { statistic, sample_count })
}

/// Grid `{step, 2·step, …} ∩ (0, 1)`, rounded to 12 decimals.
pub fn cdf_grid(step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && step < 1.0) {
        return Err(Error::Parameter(format!("grid step must lie in (0, 1), got {step}")));
    }
    Ok((1..)
        .map(|i| (i as f64 * step * 1e12).round() / 1e12)
        .take_while(|&x| x < 1.0 - 1e-9)
        .collect())
}

fn check_grid(grid: &[f64]) -> Result<()> {
    match grid.iter().find(|&&x| !(x > 0.0 && x <= 1.0)) {
        Some(x) => Err(Error::Domain(format!("grid point {x} outside (0, 1]"))),
        None => Ok(()),
    }
}

/// Sorted L_1 values and top-coordinate moments of the reference PD draws.
struct PdMonteCarlo {
    l1_sorted: Vec<f64>,
    top: Vec<MomentAccumulator>,
}

fn pd_monte_carlo(theta: Theta) -> Result<Arc<PdMonteCarlo>> {
    static MEMO: OnceLock<Mutex<HashMap<u64, Arc<PdMonteCarlo>>>> = OnceLock::new();
    let memo = MEMO.get_or_init(Default::default);
    let key = theta.value().to_bits();
    if let Some(hit) = memo.lock().unwrap().get(&key) {
        return Ok(hit.clone());
    }
    let shards = REFERENCE_DRAWS.div_ceil(SHARD_SIZE);
    let parts: Vec<(Vec<f64>, Vec<MomentAccumulator>)> = (0..shards)
        .into_par_iter()
        .map(|shard| {
            let mut rng = stream_rng(REFERENCE_SEED, shard);
            let count = SHARD_SIZE.min(REFERENCE_DRAWS - shard * SHARD_SIZE);
            let mut l1 = Vec::with_capacity(count as usize);
            let mut top = vec![MomentAccumulator::default(); REFERENCE_TOPK];
            for _ in 0..count {
                let mut atoms = pd_atoms_with(theta, DEFAULT_TAIL_EPSILON, &mut rng)?;
                if atoms.len() > REFERENCE_TOPK {
                    atoms.select_nth_unstable_by(REFERENCE_TOPK - 1, |a, b| b.total_cmp(a));
                    atoms.truncate(REFERENCE_TOPK);
                }
                atoms.sort_by(|a, b| b.total_cmp(a));
                for (i, slot) in top.iter_mut().enumerate() {
                    slot.push(atoms.get(i).copied().unwrap_or(0.0));
                }
                l1.push(atoms[0]);
            }
            Ok((l1, top))
        })
        .collect::<Result<_>>()?;
    let mut l1_sorted = Vec::with_capacity(REFERENCE_DRAWS as usize);
    let mut top = vec![MomentAccumulator::default(); REFERENCE_TOPK];
    for (l1, t) in parts {
        l1_sorted.extend(l1);
        for (acc, p) in top.iter_mut().zip(&t) {
            acc.merge(p);
        }
    }
    l1_sorted.sort_by(f64::total_cmp);
    let mc = Arc::new(PdMonteCarlo { l1_sorted, top });
    memo.lock().unwrap().insert(key, mc.clone());
    Ok(mc)
}

/// `P(L_1 ≤ x)` under PD(θ) on `grid`.
///
/// For θ = 1 this is `ρ(1/x)` with Dickman's ρ; otherwise it is the
/// empirical CDF of [`REFERENCE_DRAWS`] PD draws on a pinned seed.
pub fn reference_l1_cdf(theta: Theta, grid: &[f64]) -> Result<Vec<f64>> {
    check_grid(grid)?;
    if theta.value() == 1.0 {
        return grid
            .iter()
            .map(|&x| {
                let u = 1.0 / x;
                if u > DICKMAN_MAX_U {
                    Ok(0.0)
                } else {
                    dickman_rho(u)
                }
            })
            .collect();
    }
    let mc = pd_monte_carlo(theta)?;
    let n = mc.l1_sorted.len() as f64;
    Ok(grid.iter().map(|&x| mc.l1_sorted.partition_point(|&v| v <= x) as f64 / n).collect())
}

/// Reference data for one PD(θ) law: L_1 CDF on a grid and the means of
/// the top coordinates with their standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct PdReference {
    pub theta: Theta,
    pub draws: u64,
    pub grid_step: f64,
    pub seed: u64,
    pub grid: Vec<f64>,
    pub cdf: Vec<f64>,
    pub means: Vec<(f64, f64)>,
}

impl PdReference {
    pub fn compute(theta: Theta, grid_step: f64) -> Result<Self> {
        let grid = cdf_grid(grid_step)?;
        let cdf = reference_l1_cdf(theta, &grid)?;
        let means = pd_monte_carlo(theta)?.top.iter().map(|m| (m.mean(), m.std_error())).collect();
        Ok(PdReference { theta, draws: REFERENCE_DRAWS, grid_step, seed: REFERENCE_SEED, grid, cdf, means })
    }

    /// Loads the reference from `dir` when a file with matching header is
    /// there, otherwise computes it and writes the file.
    pub fn cached(theta: Theta, grid_step: f64, dir: Option<&Path>) -> Result<Self> {
        let Some(dir) = dir else {
            return Self::compute(theta, grid_step);
        };
        let path = dir.join(format!("pd-theta{}-step{}.csv", theta.value(), grid_step));
        if let Ok(text) = fs::read_to_string(&path) {
            if let Ok(r) = Self::parse(&text) {
                if r.theta == theta && r.grid_step == grid_step && r.draws == REFERENCE_DRAWS && r.seed == REFERENCE_SEED {
                    return Ok(r);
                }
            }
        }
        let r = Self::compute(theta, grid_step)?;
        fs::create_dir_all(dir)?;
        fs::write(&path, r.to_file_string())?;
        Ok(r)
    }

    /// Mean of `L_i` (1-based) with its standard error.
    pub fn mean(&self, i: usize) -> Option<(f64, f64)> {
        self.means.get(i.checked_sub(1)?).copied()
    }

    /// Plain-text cache format: a `theta,draws,grid_step,seed` header and
    /// its values, then `x,cdf` rows, then `rank,mean,std_error` rows.
    pub fn to_file_string(&self) -> String {
        let mut out = String::from("theta,draws,grid_step,seed\n");
        let _ = writeln!(out, "{},{},{},{}", self.theta.value(), self.draws, self.grid_step, self.seed);
        out.push_str("x,cdf\n");
        for (x, c) in self.grid.iter().zip(&self.cdf) {
            let _ = writeln!(out, "{x},{c}");
        }
        out.push_str("rank,mean,std_error\n");
        for (i, (m, se)) in self.means.iter().enumerate() {
            let _ = writeln!(out, "{},{m},{se}", i + 1);
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let bad = |what: &str| Error::Parse(format!("reference file: {what}"));
        let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad(&format!("bad number {s:?}")));
        let mut lines = text.lines();
        if lines.next() != Some("theta,draws,grid_step,seed") {
            return Err(bad("missing header"));
        }
        let head: Vec<&str> = lines.next().ok_or_else(|| bad("missing header values"))?.split(',').collect();
        if head.len() != 4 {
            return Err(bad("header needs four values"));
        }
        let theta = Theta::new(num(head[0])?)?;
        let draws = head[1].parse().map_err(|_| bad("draws"))?;
        let grid_step = num(head[2])?;
        let seed = head[3].parse().map_err(|_| bad("seed"))?;
        if lines.next() != Some("x,cdf") {
            return Err(bad("missing x,cdf section"));
        }
        let (mut grid, mut cdf, mut means) = (Vec::new(), Vec::new(), Vec::new());
        let mut in_means = false;
        for line in lines {
            if line == "rank,mean,std_error" {
                in_means = true;
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            match (in_means, cols.as_slice()) {
                (false, [x, c]) => {
                    grid.push(num(x)?);
                    cdf.push(num(c)?);
                }
                (true, [_, m, se]) => means.push((num(m)?, num(se)?)),
                _ => return Err(bad(&format!("unexpected line {line:?}"))),
            }
        }
        Ok(PdReference { theta, draws, grid_step, seed, grid, cdf, means })
    }
}

fn thread_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Usage(format!("cannot start worker pool: {e}")))
}

/// Runs `f(shard, count)` for every shard and returns the results in shard
/// order.
fn run_shards<A, F>(samples: u64, f: F) -> Result<Vec<A>>
where
    A: Send,
    F: Fn(u64, u64) -> Result<A> + Sync + Send,
{
    let shards = samples.div_ceil(SHARD_SIZE);
    (0..shards)
        .into_par_iter()
        .map(|s| f(s, SHARD_SIZE.min(samples - s * SHARD_SIZE)))
        .collect()
}

/// Per-shard statistics of sampled spectra.
#[derive(Debug, Clone)]
struct SpectrumAcc {
    /// `cell[i]` counts samples with `grid[i-1] < L_1 ≤ grid[i]`.
    cells: Vec<u64>,
    top: Vec<MomentAccumulator>,
    product: MomentAccumulator,
    max_total: f64,
    count: u64,
}

impl SpectrumAcc {
    fn new(grid_len: usize, topk: usize) -> Self {
        SpectrumAcc {
            cells: vec![0; grid_len],
            top: vec![MomentAccumulator::default(); topk],
            product: MomentAccumulator::default(),
            max_total: 0.0,
            count: 0,
        }
    }

    fn push(&mut self, a: &WeightedMultiset, grid: &[f64], family: Option<&IntervalFamily>) -> Result<()> {
        if a.total() > 1.0 + TOTAL_SLACK {
            return Err(Error::Invariant(format!("spectrum total {} exceeds 1", a.total())));
        }
        let ranked = a.ranked();
        let l1 = ranked.get(1);
        let idx = grid.partition_point(|&x| x < l1);
        if idx < grid.len() {
            self.cells[idx] += 1;
        }
        for (i, slot) in self.top.iter_mut().enumerate() {
            slot.push(ranked.get(i + 1));
        }
        if let Some(f) = family {
            self.product.push(interval_count_product(a, f) as f64);
        }
        self.max_total = self.max_total.max(a.total());
        self.count += 1;
        Ok(())
    }

    fn merge(&mut self, other: &SpectrumAcc) {
        for (c, o) in self.cells.iter_mut().zip(&other.cells) {
            *c += o;
        }
        for (t, o) in self.top.iter_mut().zip(&other.top) {
            t.merge(o);
        }
        self.product.merge(&other.product);
        self.max_total = self.max_total.max(other.max_total);
        self.count += other.count;
    }

    fn empirical_cdf(&self) -> Vec<f64> {
        let mut running = 0u64;
        self.cells
            .iter()
            .map(|&c| {
                running += c;
                running as f64 / self.count as f64
            })
            .collect()
    }
}

fn merge_all(parts: Vec<SpectrumAcc>, grid_len: usize, topk: usize) -> SpectrumAcc {
    let mut total = SpectrumAcc::new(grid_len, topk);
    for p in &parts {
        total.merge(p);
    }
    total
}

/// Adds the L_i means, KS distance, CDF grid and max total to `report`.
fn report_spectra(report: &mut ExperimentReport, acc: &SpectrumAcc, reference: &PdReference) -> Result<()> {
    for (i, m) in acc.top.iter().enumerate() {
        let mut s = Statistic::new(format!("mean_L{}", i + 1), m.mean()).with_std_error(m.std_error());
        if let Some((r, _)) = reference.mean(i + 1) {
            s = s.with_reference(r);
        }
        report.statistics.push(s);
    }
    let emp = acc.empirical_cdf();
    let e: Vec<(f64, f64)> = reference.grid.iter().copied().zip(emp.iter().copied()).collect();
    let r: Vec<(f64, f64)> = reference.grid.iter().copied().zip(reference.cdf.iter().copied()).collect();
    let ks = ks_statistic(&e, &r, acc.count)?;
    report.statistics.push(Statistic::new("ks_L1", ks.statistic));
    report.statistics.push(Statistic::new("max_total", acc.max_total));
    report.cdf_grid = e
        .iter()
        .zip(&r)
        .map(|(&(x, empirical_cdf), &(_, reference_cdf))| CdfRow { x, empirical_cdf, reference_cdf })
        .collect();
    Ok(())
}

/// Uniform elements of norm `≤ n` in the configured semigroup, compared
/// with PD(θ) for the semigroup's θ.
pub fn run_billingsley(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let theta = config.semigroup.theta;
    let family = config.intervals.as_ref();
    if let Some(f) = family {
        if !f.sum_b_lt_1() {
            return Err(Error::Hypothesis(format!("intervals {f} have b_1 + ... + b_k >= 1")));
        }
    }
    let pool = thread_pool(config.workers)?;
    pool.install(|| {
        let sampler = ElementSampler::new(&config.semigroup, config.n)?;
        let reference = PdReference::cached(theta, config.grid_step, config.reference_cache.as_deref())?;
        let grid = &reference.grid;
        let parts = run_shards(config.samples, |shard, count| {
            let mut rng = stream_rng(config.seed, shard);
            let mut acc = SpectrumAcc::new(grid.len(), config.topk);
            for _ in 0..count {
                let e = sampler.sample(&mut rng)?;
                acc.push(&element_spectrum(&e, config.n)?, grid, family)?;
            }
            Ok(acc)
        })?;
        let acc = merge_all(parts, grid.len(), config.topk);
        let mut report = ExperimentReport::new(config, Some(theta.value()));
        report_spectra(&mut report, &acc, &reference)?;
        if let Some(f) = family {
            let mean = acc.product.mean();
            let se = acc.product.std_error();
            report.statistics.push(
                Statistic::new(format!("intensity[{f}]"), mean)
                    .with_reference(pd_box_intensity(theta, f))
                    .with_std_error(se),
            );
            let bound = theta_bound(f, theta, 1.0 - theta.value(), 0.0, BoundForm::Log)?;
            report
                .statistics
                .push(Statistic::new(format!("intensity_bound[{f}]"), mean).with_reference(bound).with_std_error(se));
        }
        Ok(report)
    })
}

/// `g(n) = max(1, round(τ ln ln n))`.
pub fn conditioned_target(n: u64, tau: f64) -> u32 {
    ((tau * (n as f64).ln().ln()).round() as u32).max(1)
}

/// PD parameter of the conditioned limit: `min(τ, 2)` with multiplicity,
/// `τ` without.
pub fn conditioned_theta(mode: OmegaMode, tau: f64) -> Result<Theta> {
    match mode {
        OmegaMode::BigOmega => Theta::new(tau.min(2.0)),
        OmegaMode::SmallOmega => Theta::new(tau),
    }
}

/// Integers `m ≤ n` conditioned on `Ω(m) = g(n)` (or `ω`), by rejection.
pub fn run_conditioned(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let mode = config.mode.expect("validated");
    let tau = config.tau.expect("validated");
    let n = config.n;
    let g = conditioned_target(n, tau);
    let max_g = 63 - n.leading_zeros();
    if g > max_g {
        return Err(Error::Infeasible(format!("g(n) = {g} exceeds log2(n) = {max_g} for n = {n}")));
    }
    let theta = conditioned_theta(mode, tau)?;
    let accept = |m: u64| -> Result<Option<Vec<(u64, u32)>>> {
        let f = factor(m)?.factors;
        Ok((mode.count(&f) == g).then_some(f))
    };

    let mut probe = stream_rng(config.seed, PROBE_STREAM);
    let mut probe_draws = 0u64;
    loop {
        if probe_draws == PROBE_DRAWS {
            return Err(Error::Infeasible(format!(
                "no m <= {n} with {mode:?} = {g} in {PROBE_DRAWS} draws (acceptance rate below 1e-6)"
            )));
        }
        probe_draws += 1;
        if accept(probe.gen_range(1..=n))?.is_some() {
            break;
        }
    }

    let pool = thread_pool(config.workers)?;
    pool.install(|| {
        let reference = PdReference::cached(theta, config.grid_step, config.reference_cache.as_deref())?;
        let pd1 = PdReference::cached(Theta::new(1.0)?, config.grid_step, config.reference_cache.as_deref())?;
        let grid = &reference.grid;
        let parts = run_shards(config.samples, |shard, quota| {
            let mut rng = stream_rng(config.seed, shard);
            let mut acc = SpectrumAcc::new(grid.len(), config.topk);
            let mut draws = 0u64;
            while acc.count < quota {
                draws += 1;
                if let Some(f) = accept(rng.gen_range(1..=n))? {
                    acc.push(&spectrum_from_factors(&f, n, mode), grid, None)?;
                }
            }
            Ok((acc, draws))
        })?;
        let draws: u64 = parts.iter().map(|p| p.1).sum();
        let acc = merge_all(parts.into_iter().map(|p| p.0).collect(), grid.len(), config.topk);
        let mut report = ExperimentReport::new(config, Some(theta.value()));
        if mode == OmegaMode::BigOmega && tau == 2.0 {
            report.warnings.push("tau = 2 is excluded by the limit theorem; PD(2) is used as the reference".into());
        }
        report_spectra(&mut report, &acc, &reference)?;
        let l1 = acc.top[0];
        if let Some((m, _)) = pd1.mean(1) {
            report
                .statistics
                .push(Statistic::new("mean_L1_vs_pd1", l1.mean()).with_reference(m).with_std_error(l1.std_error()));
        }
        report.statistics.push(Statistic::new("g", g as f64));
        report.statistics.push(Statistic::new("acceptance_rate", acc.count as f64 / draws as f64));
        report.statistics.push(Statistic::new("draws", draws as f64));
        Ok(report)
    })
}

/// Grid of z values for the Erdős–Kac comparison.
pub fn z_grid() -> Vec<f64> {
    (0..Z_GRID_POINTS).map(|i| Z_GRID_MIN + i as f64 * Z_GRID_STEP).collect()
}

/// z-scores `(Ω(N) - ln ln n)/√(ln ln n)` of uniform `N ≤ n` against the
/// standard normal.
pub fn run_erdos_kac(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let mode = config.mode.unwrap_or(OmegaMode::BigOmega);
    let n = config.n;
    let pool = thread_pool(config.workers)?;
    let parts = pool.install(|| {
        run_shards(config.samples, |shard, count| {
            let mut rng = stream_rng(config.seed, shard);
            let mut hist = vec![0u64; 64];
            for _ in 0..count {
                let f = factor(rng.gen_range(1..=n))?.factors;
                hist[mode.count(&f) as usize] += 1;
            }
            Ok(hist)
        })
    })?;
    let mut hist = vec![0u64; 64];
    for part in parts {
        for (h, p) in hist.iter_mut().zip(part) {
            *h += p;
        }
    }
    let total = config.samples as f64;
    let mu = (n as f64).ln().ln();
    let sd = mu.sqrt();
    let mut z = MomentAccumulator::default();
    let mut omega = MomentAccumulator::default();
    for (j, &c) in hist.iter().enumerate() {
        let zj = (j as f64 - mu) / sd;
        z.count += c;
        z.sum += c as f64 * zj;
        z.sum_sq += c as f64 * zj * zj;
        omega.count += c;
        omega.sum += c as f64 * j as f64;
        omega.sum_sq += c as f64 * (j * j) as f64;
    }
    let mut running = 0u64;
    let median = hist
        .iter()
        .position(|&c| {
            running += c;
            2 * running >= config.samples
        })
        .unwrap_or(0);

    let grid = z_grid();
    let emp: Vec<(f64, f64)> = grid
        .iter()
        .map(|&zx| {
            let below: u64 = hist.iter().enumerate().filter(|(j, _)| (*j as f64 - mu) / sd <= zx).map(|p| *p.1).sum();
            (zx, below as f64 / total)
        })
        .collect();
    let reference: Vec<(f64, f64)> = grid.iter().map(|&zx| (zx, normal_cdf(zx))).collect();
    let ks = ks_statistic(&emp, &reference, config.samples)?;

    let mut report = ExperimentReport::new(config, None);
    report.statistics = vec![
        Statistic::new("mean_z", z.mean()).with_reference(0.0).with_std_error(z.std_error()),
        Statistic::new("var_z", z.variance()).with_reference(1.0),
        Statistic::new("mean_omega", omega.mean()).with_reference(mu).with_std_error(omega.std_error()),
        Statistic::new("var_omega", omega.variance()),
        Statistic::new("median_omega", median as f64),
        Statistic::new("ks_normal", ks.statistic),
    ];
    report.cdf_grid = emp
        .iter()
        .zip(&reference)
        .map(|(&(x, e), &(_, r))| CdfRow { x, empirical_cdf: e, reference_cdf: r })
        .collect();
    Ok(report)
}

/// Empirical PD(θ) multi-intensities on each configured interval and on
/// the whole family, against the integrated multi-intensity density.
pub fn run_intensity(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let theta = config.theta.expect("validated");
    let family = config.intervals.clone().expect("validated");
    let mut boxes: Vec<IntervalFamily> =
        family.intervals().iter().map(|&i| IntervalFamily::new(vec![i])).collect::<Result<_>>()?;
    if family.len() > 1 {
        boxes.push(family.clone());
    }
    let pool = thread_pool(config.workers)?;
    let checks =
        pool.install(|| characterization_check(&PdSource::new(theta), theta, &boxes, config.samples, config.seed))?;
    let mut report = ExperimentReport::new(config, Some(theta.value()));
    if !family.sum_b_lt_1() {
        report.warnings.push(format!("intervals {family} have b_1 + ... + b_k >= 1; bound rows omitted"));
    }
    for check in &checks {
        let f = &check.estimate.intervals;
        report.statistics.push(
            Statistic::new(format!("intensity[{f}]"), check.estimate.mean_product)
                .with_reference(check.predicted)
                .with_std_error(check.estimate.std_error),
        );
        report.statistics.push(Statistic::new(format!("z[{f}]"), check.z_score));
        if f.sum_b_lt_1() {
            let bound = theta_bound(f, theta, 1.0 - theta.value(), 0.0, BoundForm::Log)?;
            report
                .statistics
                .push(Statistic::new(format!("intensity_bound[{f}]"), check.estimate.mean_product).with_reference(bound));
        }
    }
    Ok(report)
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    match config.kind {
        ExperimentKind::Billingsley => run_billingsley(config),
        ExperimentKind::Conditioned => run_conditioned(config),
        ExperimentKind::ErdosKac => run_erdos_kac(config),
        ExperimentKind::Intensity => run_intensity(config),
    }
}

/// Outcome of [`multiformula_audit`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditReport {
    pub checked: u64,
    /// Integers where `∏|A ∩ I_i|` (with multiplicity) differs from the
    /// number of distinct-position factor tuples landing in the boxes.
    pub multiset_mismatches: u64,
    /// Integers where `∏|A° ∩ I_i|` differs from the number of prime tuples
    /// `(q_1, …, q_k)` from the boxes with `q_1 ⋯ q_k | N`.
    pub set_mismatches: u64,
}

/// Brute-force check of the product identity for `count` uniform
/// integers `N ≤ n`.
pub fn multiformula_audit(n: u64, count: u64, family: &IntervalFamily, seed: u64) -> Result<AuditReport> {
    if n < 2 {
        return Err(Error::Domain(format!("audit needs n >= 2, got {n}")));
    }
    let ln_n = (n as f64).ln();
    let scaled = |p: u64| ((p as f64).ln() / ln_n).min(1.0);
    let b_max = family.intervals().iter().map(|i| i.b).fold(0.0, f64::max);
    let limit = (((n as f64).powf(b_max)).ceil() as u64).saturating_add(1).min(n);
    let primes = sieve_primes(limit);
    let boxes: Vec<Vec<u64>> =
        family.intervals().iter().map(|i| primes.iter().copied().filter(|&p| i.contains(scaled(p))).collect()).collect();

    let mut rng = stream_rng(seed, 0);
    let mut report = AuditReport { checked: 0, multiset_mismatches: 0, set_mismatches: 0 };
    for _ in 0..count {
        let m = rng.gen_range(1..=n);
        let f = factor(m)?.factors;

        let set_lhs = interval_count_product(&spectrum_from_factors(&f, n, OmegaMode::SmallOmega), family);
        if set_lhs != dividing_tuples(&boxes, m, 1) {
            report.set_mismatches += 1;
        }

        let positions: Vec<u64> = f.iter().flat_map(|&(p, e)| std::iter::repeat(p).take(e as usize)).collect();
        let multi_lhs = interval_count_product(&spectrum_from_factors(&f, n, OmegaMode::BigOmega), family);
        let mut used = vec![false; positions.len()];
        if multi_lhs != position_tuples(family, &positions, &scaled, &mut used, 0, m, 1) {
            report.multiset_mismatches += 1;
        }
        report.checked += 1;
    }
    Ok(report)
}

/// Number of tuples `(q_1, …, q_k) ∈ boxes[0] × ⋯` with `q_1 ⋯ q_k | m`.
fn dividing_tuples(boxes: &[Vec<u64>], m: u64, prefix: u64) -> u64 {
    let Some((first, rest)) = boxes.split_first() else {
        return 1;
    };
    first
        .iter()
        .filter_map(|&q| prefix.checked_mul(q).filter(|&p| m % p == 0))
        .map(|p| dividing_tuples(rest, m, p))
        .sum()
}

/// Number of ordered tuples of distinct positions of `positions` whose
/// `i`-th prime lies in the `i`-th interval and whose product divides `m`.
fn position_tuples(
    family: &IntervalFamily,
    positions: &[u64],
    scaled: &dyn Fn(u64) -> f64,
    used: &mut [bool],
    depth: usize,
    m: u64,
    prefix: u64,
) -> u64 {
    let Some(interval) = family.intervals().get(depth) else {
        return u64::from(m % prefix == 0);
    };
    let mut total = 0;
    for i in 0..positions.len() {
        if used[i] || !interval.contains(scaled(positions[i])) {
            continue;
        }
        used[i] = true;
        total += position_tuples(family, positions, scaled, used, depth + 1, m, prefix * positions[i]);
        used[i] = false;
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairs(xs: &[f64], ys: &[f64]) -> Vec<(f64, f64)> {
        xs.iter().copied().zip(ys.iter().copied()).collect()
    }

    #[test]
    fn ks_examples() {
        let grid = [0.25, 0.5, 0.75];
        let a = pairs(&grid, &[0.1, 0.4, 0.9]);
        assert_eq!(ks_statistic(&a, &a, 10).unwrap().statistic, 0.0);
        let shifted = pairs(&grid, &[0.2, 0.5, 1.0]);
        assert!((ks_statistic(&a, &shifted, 10).unwrap().statistic - 0.1).abs() < 1e-15);
        let one = ks_statistic(&[(0.5, 0.3)], &[(0.5, 0.5)], 1).unwrap();
        assert!((one.statistic - 0.2).abs() < 1e-15);
        assert!(ks_statistic(&a, &pairs(&[0.25, 0.5, 0.8], &[0.1, 0.4, 0.9]), 1).is_err());
        assert!(ks_statistic(&a, &pairs(&grid, &[0.5, 0.4, 0.9]), 1).is_err());
        assert!(ks_statistic(&a, &pairs(&grid, &[0.1, 0.4, 1.5]), 1).is_err());
    }

    #[test]
    fn grid_layout() {
        let g = cdf_grid(0.05).unwrap();
        assert_eq!(g.len(), 19);
        assert_eq!(g[0], 0.05);
        assert_eq!(g[2], 0.15);
        assert_eq!(g[18], 0.95);
        assert!(cdf_grid(0.0).is_err());
        assert_eq!(z_grid().first(), Some(&-3.0));
        assert_eq!(z_grid().last(), Some(&3.0));
    }

    #[test]
    fn dickman_reference_points() {
        let th = Theta::new(1.0).unwrap();
        let v = reference_l1_cdf(th, &[1.0 / 3.0, 0.5, 1.0]).unwrap();
        assert!((v[2] - 1.0).abs() < 1e-12);
        assert!((v[1] - (1.0 - 2f64.ln())).abs() < 1e-7);
        assert!((v[0] - 0.048_608_388).abs() < 1e-6);
        assert!(reference_l1_cdf(th, &[0.0]).is_err());
        assert!(reference_l1_cdf(th, &[1.5]).is_err());
    }

    #[test]
    fn reference_file_round_trip() {
        let r = PdReference {
            theta: Theta::new(0.5).unwrap(),
            draws: 10,
            grid_step: 0.5,
            seed: 3,
            grid: vec![0.5],
            cdf: vec![0.123_456_789_012_345_67],
            means: vec![(0.7, 0.01), (0.2, 0.003)],
        };
        assert_eq!(PdReference::parse(&r.to_file_string()).unwrap(), r);
        assert!(PdReference::parse("theta\n").is_err());
    }

    #[test]
    fn config_validation() {
        let mut c = ExperimentConfig::new(ExperimentKind::Billingsley);
        assert!(c.validate().is_ok());
        c.n = 2;
        assert!(matches!(c.validate(), Err(Error::Parameter(_))));
        let mut c = ExperimentConfig::new(ExperimentKind::Conditioned);
        assert!(matches!(c.validate(), Err(Error::Usage(_))));
        c.mode = Some(OmegaMode::BigOmega);
        c.tau = Some(-1.0);
        assert!(matches!(c.validate(), Err(Error::Parameter(_))));
        c.tau = Some(1.0);
        c.semigroup = make_semigroup("two-squares").unwrap();
        assert!(matches!(c.validate(), Err(Error::Usage(_))));
    }

    #[test]
    fn conditioned_parameters() {
        assert_eq!(conditioned_target(1_000_000_000, 3.0), 9);
        assert_eq!(conditioned_target(100, 0.1), 1);
        assert_eq!(conditioned_theta(OmegaMode::BigOmega, 3.0).unwrap().value(), 2.0);
        assert_eq!(conditioned_theta(OmegaMode::SmallOmega, 0.5).unwrap().value(), 0.5);
    }

    #[test]
    fn sibling_paths() {
        assert_eq!(cdf_sibling(Path::new("out/run.csv")), PathBuf::from("out/run_cdf.csv"));
        assert_eq!(cdf_sibling(Path::new("run")), PathBuf::from("run_cdf"));
    }

    #[test]
    fn small_audit_is_exact() {
        let f = IntervalFamily::from_pairs(&[(0.15, 0.25), (0.3, 0.45)]).unwrap();
        let r = multiformula_audit(10_000, 200, &f, 5).unwrap();
        assert_eq!(r, AuditReport { checked: 200, multiset_mismatches: 0, set_mismatches: 0 });
    }
}
