//! Acceptance suite. Runs every criterion at its pinned scale and
//! tolerance, prints one PASS/FAIL line per criterion and exits non-zero
//! if any criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use rayon::prelude::*;

use pdlimit::arith::{
    kappa, lambda_fn, mertens_sum, selberg_approx, selberg_constant_c, CountTable, OmegaMode, SelbergMode,
    SelbergWindow, SpfTable,
};
use pdlimit::experiments::{
    multiformula_audit, run_experiment, ExperimentConfig, ExperimentKind, ExperimentReport, PdReference,
};
use pdlimit::intensity::{characterization_check, IntervalFamily, PdSource, SHARD_SIZE};
use pdlimit::pdcore::{
    dickman_rho, gem_density, pd_atoms_with, sample_gem_with, sample_pd_with, size_biased_permutation_with, Theta,
    WeightedMultiset, DEFAULT_TAIL_EPSILON,
};
use pdlimit::rng::stream_rng;
use pdlimit::semigroups::{make_semigroup, nu_count_semigroup, pi_count_semigroup, WeightTable};
use pdlimit::special::gauss_legendre;
use pdlimit::Result;

type Outcome = Result<(bool, String)>;

fn theta(v: f64) -> Theta {
    Theta::new(v).unwrap()
}

fn family(pairs: &[(f64, f64)]) -> IntervalFamily {
    IntervalFamily::from_pairs(pairs).unwrap()
}

/// Kolmogorov–Smirnov distance between raw samples and a continuous CDF
/// given at the sorted sample points.
fn ks_raw(sorted: &[f64], cdf_at: &[f64]) -> f64 {
    let n = sorted.len() as f64;
    cdf_at
        .iter()
        .enumerate()
        .map(|(i, &f)| (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs()))
        .fold(0.0, f64::max)
}

/// `∫_lo^hi f` with a fixed 16-node Gauss–Legendre rule.
fn gl16(lo: f64, hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    let half = 0.5 * (hi - lo);
    let mid = 0.5 * (hi + lo);
    gauss_legendre(16).iter().map(|&(x, w)| w * half * f(mid + half * x)).sum()
}

/// Draws `count` values with `draw`, sharded over streams of `seed`.
fn sharded<F>(count: u64, seed: u64, draw: F) -> Vec<f64>
where
    F: Fn(&mut pdlimit::rng::StreamRng) -> f64 + Sync,
{
    (0..count.div_ceil(SHARD_SIZE))
        .into_par_iter()
        .flat_map_iter(|s| {
            let mut rng = stream_rng(seed, s);
            let n = SHARD_SIZE.min(count - s * SHARD_SIZE);
            (0..n).map(|_| draw(&mut rng)).collect::<Vec<_>>()
        })
        .collect()
}

fn stat(report: &ExperimentReport, name: &str) -> f64 {
    report.statistic(name).unwrap_or_else(|| panic!("missing statistic {name}")).empirical
}

fn billingsley(semigroup: &str, n: u64, samples: u64, intervals: Option<IntervalFamily>) -> Result<ExperimentReport> {
    let mut c = ExperimentConfig::new(ExperimentKind::Billingsley);
    c.semigroup = make_semigroup(semigroup)?;
    c.n = n;
    c.samples = samples;
    c.seed = 1;
    c.intervals = intervals;
    run_experiment(&c)
}

fn c1_selberg_constant() -> Outcome {
    let start = Instant::now();
    let c = selberg_constant_c();
    let secs = start.elapsed().as_secs_f64();
    let err = (c - 0.378_694).abs();
    Ok((err < 1e-4 && secs < 30.0, format!("C = {c:.7}, |C - 0.378694| = {err:.2e}, {secs:.2} s")))
}

fn c2_kappa_lambda() -> Outcome {
    let vals = [kappa(0.0)?, kappa(1.0)?, lambda_fn(0.0)?, lambda_fn(1.0)?];
    let worst = vals.iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max);
    Ok((worst < 1e-8, format!("kappa(0), kappa(1), lambda(0), lambda(1) max |v - 1| = {worst:.2e}")))
}

fn c3_gem() -> Outcome {
    let mut g1 = sharded(100_000, 3, |rng| sample_gem_with(theta(1.0), 1, rng).unwrap().values[0]);
    g1.sort_by(f64::total_cmp);
    let ks = ks_raw(&g1, &g1);

    // Integrate over the simplex with x1 = s, x2 = (1-s)t and t = 1 - w^2
    // so the (1 - x1 - x2)^(θ-1) edge singularity is smoothed out.
    let nodes = gauss_legendre(64);
    let unit = |f: &dyn Fn(f64) -> f64| nodes.iter().map(|&(x, w)| 0.5 * w * f(0.5 * (x + 1.0))).sum::<f64>();
    let mut worst: f64 = 0.0;
    for th in [0.5, 1.0, 2.0] {
        let t = theta(th);
        let k1 = unit(&|w: f64| 2.0 * w * gem_density(t, &[1.0 - w * w]));
        let k2 = unit(&|ws: f64| {
            let s = 1.0 - ws * ws;
            2.0 * ws * (1.0 - s) * unit(&|wt: f64| 2.0 * wt * gem_density(t, &[s, (1.0 - s) * (1.0 - wt * wt)]))
        });
        worst = worst.max((k1 - 1.0).abs()).max((k2 - 1.0).abs());
    }
    Ok((ks < 0.02 && worst < 1e-3, format!("KS(G_1, U(0,1)) = {ks:.4}; max |∫f - 1| over k=1,2 = {worst:.2e}")))
}

fn c4_size_biased_round_trip() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut detail = Vec::new();
    for th in [0.5, 1.0, 2.0] {
        let t = theta(th);
        let mut first = sharded(100_000, 4, |rng| {
            let atoms = pd_atoms_with(t, DEFAULT_TAIL_EPSILON, rng).unwrap();
            let a = WeightedMultiset::from_values(&atoms).unwrap();
            size_biased_permutation_with(&a, 1, rng)[0]
        });
        first.sort_by(f64::total_cmp);
        let mut cdf = Vec::with_capacity(first.len());
        let (mut x0, mut acc) = (0.0, 0.0);
        for &x in &first {
            acc += gl16(x0, x, |u| gem_density(t, &[u]));
            cdf.push(acc);
            x0 = x;
        }
        let ks = ks_raw(&first, &cdf);
        worst = worst.max(ks);
        detail.push(format!("θ={th}: {ks:.4}"));
    }
    Ok((worst < 0.02, format!("KS(first size-biased pick, GEM marginal) {}", detail.join(", "))))
}

fn c5_pd1_dickman() -> Outcome {
    let l1 = sharded(1_000_000, 5, |rng| sample_pd_with(theta(1.0), 1, DEFAULT_TAIL_EPSILON, rng).unwrap().get(1));
    let mut sorted = l1;
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut ks: f64 = 0.0;
    for i in 1..20 {
        let x = i as f64 * 0.05;
        let emp = sorted.partition_point(|&v| v <= x) as f64 / n;
        ks = ks.max((emp - dickman_rho(1.0 / x)?).abs());
    }
    Ok((ks < 0.01, format!("grid KS(PD(1) L_1, rho(1/x)) = {ks:.4} over 10^6 draws")))
}

fn c6_pd_multi_intensity() -> Outcome {
    let one = family(&[(0.2, 0.4)]);
    let two = family(&[(0.2, 0.4), (0.5, 0.6)]);
    let pd1 = characterization_check(&PdSource::new(theta(1.0)), theta(1.0), &[one.clone(), two], 1_000_000, 6)?;
    let pd2 = characterization_check(&PdSource::new(theta(2.0)), theta(2.0), &[one], 1_000_000, 6)?;
    let e1 = pd1[0].estimate.mean_product;
    let e2 = pd1[1].estimate.mean_product;
    let e3 = pd2[0].estimate.mean_product;
    let t1 = 2f64.ln();
    let t2 = 2f64.ln() * 1.2f64.ln();
    let t3 = 2.0 * (2f64.ln() - 0.2);
    let ok = (e1 - t1).abs() < 0.01 && (e2 - t2).abs() < 0.01 && (e3 - t3).abs() < 0.02;
    Ok((
        ok,
        format!(
            "PD(1) [0.2,0.4]: {e1:.4} vs {t1:.4}; PD(1) [0.2,0.4]x[0.5,0.6]: {e2:.4} vs {t2:.4}; PD(2) [0.2,0.4]: {e3:.4} vs {t3:.4}"
        ),
    ))
}

fn c7_classic_billingsley() -> Outcome {
    let big = billingsley("integers", 10_000_000, 100_000, Some(family(&[(0.2, 0.4)])))?;
    let small = billingsley("integers", 10_000, 100_000, None)?;
    let max_total = stat(&big, "max_total").max(stat(&small, "max_total"));
    let ks_big = stat(&big, "ks_L1");
    let ks_small = stat(&small, "ks_L1");
    let intensity = stat(&big, "intensity[0.2:0.4]");
    let a = max_total <= 1.0 + pdlimit::experiments::TOTAL_SLACK;
    let b = ks_big < 0.05;
    let c = (intensity - 2f64.ln()).abs() < 0.05;
    let d = ks_big < ks_small;
    Ok((
        a && b && c && d,
        format!(
            "(a) max total {max_total:.9} {}; (b) KS {ks_big:.4} {}; (c) E|A∩[0.2,0.4]| = {intensity:.4}, |err| {:.4} {}; (d) KS 10^7 {ks_big:.4} < 10^4 {ks_small:.4} {}",
            ok(a),
            ok(b),
            (intensity - 2f64.ln()).abs(),
            ok(c),
            ok(d)
        ),
    ))
}

fn c8_mertens() -> Outcome {
    let b6 = mertens_sum(1_000_000)? - 1e6f64.ln().ln();
    let b7 = mertens_sum(10_000_000)? - 1e7f64.ln().ln();
    let d = (b6 - b7).abs();
    Ok((d < 0.01, format!("B(10^6) = {b6:.6}, B(10^7) = {b7:.6}, |diff| = {d:.2e}")))
}

fn c9_semigroup_counts() -> Outcome {
    let two = make_semigroup("two-squares")?;
    let gauss = make_semigroup("gaussian-ideals")?;
    let doubled = make_semigroup("doubled-primes")?;
    let small = nu_count_semigroup(&two, 10)? == 7 && pi_count_semigroup(&two, 10)? == 3;
    let g5 = nu_count_semigroup(&gauss, 5)? == 5;

    const X: i64 = 10_000;
    let mut lattice = vec![0u64; X as usize + 1];
    let r = (X as f64).sqrt() as i64 + 1;
    for a in -r..=r {
        for b in -r..=r {
            let norm = a * a + b * b;
            if norm > 0 && norm <= X {
                lattice[norm as usize] += 1;
            }
        }
    }
    let table = WeightTable::build(&gauss, X as u64)?;
    let mut running = 0;
    let mut lattice_ok = true;
    for x in 1..=X as u64 {
        running += lattice[x as usize];
        lattice_ok &= running % 4 == 0 && table.nu(x) == running / 4;
    }

    const D: usize = 1_000_000;
    let mut divisors = vec![0u64; D + 1];
    for i in 1..=D {
        for j in (i..=D).step_by(i) {
            divisors[j] += 1;
        }
    }
    let table = WeightTable::build(&doubled, D as u64)?;
    let mut running = 0;
    let mut divisor_ok = true;
    for x in 1..=D {
        running += divisors[x];
        divisor_ok &= table.nu(x as u64) == running;
    }
    Ok((
        small && g5 && lattice_ok && divisor_ok,
        format!(
            "two-squares nu(10)=7, pi(10)=3 {}; gaussian nu(5)=5 {}; lattice to 10^4 {}; sum d(m) to 10^6 {}",
            ok(small),
            ok(g5),
            ok(lattice_ok),
            ok(divisor_ok)
        ),
    ))
}

fn c10_growth() -> Outcome {
    let g = nu_count_semigroup(&make_semigroup("gaussian-ideals")?, 1_000_000)? as f64 / (std::f64::consts::FRAC_PI_4 * 1e6);
    let p = pi_count_semigroup(&make_semigroup("two-squares")?, 10_000_000)? as f64 * 1e7f64.ln() / 1e7;
    let ok_all = (g - 1.0).abs() < 0.005 && (p - 0.5).abs() < 0.05;
    Ok((ok_all, format!("gaussian nu(10^6)/(pi/4 10^6) = {g:.5}; two-squares pi(10^7) ln(10^7)/10^7 = {p:.4}")))
}

fn c11_semigroup_billingsley() -> Outcome {
    let two_big = stat(&billingsley("two-squares", 10_000_000, 100_000, None)?, "ks_L1");
    let two_small = stat(&billingsley("two-squares", 10_000, 100_000, None)?, "ks_L1");
    let doubled = stat(&billingsley("doubled-primes", 10_000_000, 100_000, None)?, "ks_L1");
    let a = two_big < 0.07;
    let b = two_big < two_small;
    let c = doubled < 0.07;
    Ok((
        a && b && c,
        format!(
            "two-squares KS vs PD(1/2) {two_big:.4} {}; shrinking from 10^4 ({two_small:.4}) {}; doubled-primes KS vs PD(2) {doubled:.4} {}",
            ok(a),
            ok(b),
            ok(c)
        ),
    ))
}

fn c12_selberg_trend() -> Outcome {
    let xs = [10_000u64, 100_000, 1_000_000];
    let spf = SpfTable::new(1_000_000)?;
    let window = SelbergWindow::default();
    let mut tables = Vec::new();
    for &x in &xs {
        tables.push((
            CountTable::build(&spf, x, OmegaMode::BigOmega)?,
            CountTable::build(&spf, x, OmegaMode::SmallOmega)?,
        ));
    }
    let rel = |i: usize, j: u32, mode: SelbergMode| -> Option<f64> {
        let (big, small) = &tables[i];
        let exact = match mode.omega_mode() {
            OmegaMode::BigOmega => big.get(j as usize),
            OmegaMode::SmallOmega => small.get(j as usize),
        };
        let main = selberg_approx(xs[i], j, mode, &window).ok()?;
        (exact > 0).then(|| (main - exact as f64).abs() / exact as f64)
    };
    let mut all_ok = true;
    let mut lines = Vec::new();
    for (label, mode) in [("Omega small-j", SelbergMode::BigOmegaSmallJ), ("omega", SelbergMode::SmallOmega)] {
        for j in 1..=16u32 {
            let errs: Vec<f64> = (0..xs.len()).filter_map(|i| rel(i, j, mode)).collect();
            if errs.len() < 2 {
                continue;
            }
            let dec = errs.windows(2).all(|w| w[1] < w[0]);
            all_ok &= dec;
            let shown: Vec<String> = errs.iter().map(|e| format!("{e:.3}")).collect();
            lines.push(format!("{label} j={j} [{}]{}", shown.join(" "), if dec { "" } else { " not decreasing" }));
        }
    }
    let large_j: Vec<(u32, f64)> = (0..xs.len())
        .filter_map(|i| {
            let j = (3.0 * (xs[i] as f64).ln().ln()).ceil() as u32;
            rel(i, j, SelbergMode::BigOmegaLargeJ).map(|e| (j, e))
        })
        .collect();
    let dec = large_j.len() == xs.len() && large_j.windows(2).all(|w| w[1].1 < w[0].1);
    all_ok &= dec;
    let shown: Vec<String> = large_j.iter().map(|(j, e)| format!("j={j}:{e:.3}")).collect();
    lines.push(format!("Omega large-j [{}]{}", shown.join(" "), if dec { "" } else { " not decreasing" }));
    Ok((all_ok, lines.join("; ")))
}

fn c13_conditioned() -> Outcome {
    let mut c = ExperimentConfig::new(ExperimentKind::Conditioned);
    c.n = 1_000_000_000;
    c.samples = 10_000;
    c.seed = 13;
    c.mode = Some(OmegaMode::BigOmega);
    c.tau = Some(3.0);
    let big = run_experiment(&c)?;
    c.mode = Some(OmegaMode::SmallOmega);
    c.tau = Some(0.5);
    let small = run_experiment(&c)?;

    let pd1 = PdReference::compute(theta(1.0), 0.05)?.mean(1).unwrap();
    let pd2 = PdReference::compute(theta(2.0), 0.05)?.mean(1).unwrap();
    let l1 = big.statistic("mean_L1").unwrap();
    let (m, se) = (l1.empirical, l1.std_error.unwrap());
    let z2 = (m - pd2.0) / (se * se + pd2.1 * pd2.1).sqrt();
    let z1 = (pd1.0 - m) / (se * se + pd1.1 * pd1.1).sqrt();
    let s1 = small.statistic("mean_L1").unwrap();
    let zs = (s1.empirical - pd1.0) / (s1.std_error.unwrap().powi(2) + pd1.1 * pd1.1).sqrt();
    let a = z2.abs() <= 3.0;
    let b = z1 > 3.0;
    let cc = zs > 3.0;
    Ok((
        a && b && cc,
        format!(
            "Omega tau=3: E[L_1] = {m:.4} ± {se:.4}, z vs PD(2) {:.4} = {z2:.1} {}, below PD(1) {:.4} by z = {z1:.1} {}; omega tau=0.5: E[L_1] = {:.4}, above PD(1) by z = {zs:.1} {}",
            pd2.0,
            ok(a),
            pd1.0,
            ok(b),
            s1.empirical,
            ok(cc)
        ),
    ))
}

fn c14_audit() -> Outcome {
    let r = multiformula_audit(1_000_000, 1_000, &family(&[(0.15, 0.25), (0.3, 0.45)]), 14)?;
    Ok((
        r.checked == 1_000 && r.multiset_mismatches == 0 && r.set_mismatches == 0,
        format!(
            "{} integers, {} multiset mismatches, {} set mismatches",
            r.checked, r.multiset_mismatches, r.set_mismatches
        ),
    ))
}

fn c15_determinism() -> Outcome {
    let mut configs = Vec::new();
    for sg in ["integers", "two-squares", "doubled-primes"] {
        let mut c = ExperimentConfig::new(ExperimentKind::Billingsley);
        c.semigroup = make_semigroup(sg)?;
        c.n = 1_000_000;
        c.samples = 20_000;
        c.intervals = Some(family(&[(0.2, 0.4)]));
        configs.push(c);
    }
    let mut c = ExperimentConfig::new(ExperimentKind::Conditioned);
    c.n = 1_000_000;
    c.samples = 10_000;
    c.mode = Some(OmegaMode::BigOmega);
    c.tau = Some(3.0);
    configs.push(c);
    let mut c = ExperimentConfig::new(ExperimentKind::ErdosKac);
    c.n = 100_000_000;
    c.samples = 20_000;
    configs.push(c);
    let mut c = ExperimentConfig::new(ExperimentKind::Intensity);
    c.theta = Some(theta(0.5));
    c.samples = 20_000;
    c.intervals = Some(family(&[(0.1, 0.3), (0.4, 0.5)]));
    configs.push(c);

    let mut differing = Vec::new();
    for c in &mut configs {
        c.seed = 15;
        let mut outputs = Vec::new();
        for workers in [1, 3, 8] {
            c.workers = workers;
            outputs.push(run_experiment(c)?.to_json()?);
        }
        if outputs.windows(2).any(|w| w[0] != w[1]) {
            differing.push(format!("{:?}/{}", c.kind, c.semigroup.name));
        }
    }
    Ok((
        differing.is_empty(),
        format!("{} configurations x workers {{1, 3, 8}}; differing: {:?}", configs.len(), differing),
    ))
}

fn ok(b: bool) -> &'static str {
    if b {
        "ok"
    } else {
        "FAILED"
    }
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 15] = [
        ("Selberg constant", c1_selberg_constant),
        ("kappa/lambda special values", c2_kappa_lambda),
        ("GEM correctness", c3_gem),
        ("PD size-biased round trip", c4_size_biased_round_trip),
        ("PD(1) vs Dickman", c5_pd1_dickman),
        ("PD multi-intensity", c6_pd_multi_intensity),
        ("classic Billingsley", c7_classic_billingsley),
        ("Mertens stability", c8_mertens),
        ("semigroup exact counts", c9_semigroup_counts),
        ("growth laws", c10_growth),
        ("semigroup Billingsley", c11_semigroup_billingsley),
        ("Selberg main terms", c12_selberg_trend),
        ("conditioned ensembles", c13_conditioned),
        ("product identity audit", c14_audit),
        ("determinism", c15_determinism),
    ];
    let mut passed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (pass, detail) = match run() {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        passed += pass as usize;
        println!(
            "criterion {:>2} {} {name}: {detail} ({:.1} s)",
            i + 1,
            if pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {passed} of {} criteria passed", criteria.len());
    if passed == criteria.len() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
