use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use pdlimit::arith::{mertens_sum, nu_count, selberg_approx, OmegaMode, SelbergMode, SelbergWindow};
use pdlimit::experiments::{run_experiment, ExperimentConfig, ExperimentKind, ExperimentReport, ReportFormat};
use pdlimit::intensity::{fmt_sig9, IntervalFamily};
use pdlimit::pdcore::{dickman_rho, sample_gem_with, sample_pd_with, Theta, DEFAULT_TAIL_EPSILON, DICKMAN_MAX_U};
use pdlimit::rng::stream_rng;
use pdlimit::semigroups::{semigroup_mertens, SemigroupKind, SemigroupSpec};
use pdlimit::{Error, Result};

/// Poisson–Dirichlet samplers and Monte Carlo checks of Billingsley-type
/// limit theorems. The seed defaults to 0 everywhere.
#[derive(Parser, Debug)]
#[command(name = "pdlimit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw GEM(θ) prefixes or PD(θ) top coordinates.
    Sample(SampleArgs),
    /// Evaluate Dickman's ρ at a point or on a grid.
    Dickman(DickmanArgs),
    /// Sum of reciprocal prime norms and the Mertens constant estimate.
    Mertens(MertensArgs),
    /// Selberg–Delange main term for ν_j(x), optionally with the exact count.
    Selberg(SelbergArgs),
    /// Largest-prime-factor statistics of uniform semigroup elements.
    Billingsley(BillingsleyArgs),
    /// Integers conditioned on an unusual number of prime factors.
    Conditioned(ConditionedArgs),
    /// Normalized Ω(N) against the standard normal.
    ErdosKac(ErdosKacArgs),
    /// PD(θ) multi-intensities against the integrated density.
    Intensity(IntensityArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Process {
    Gem,
    Pd,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Csv,
    Json,
}

impl From<Format> for ReportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => ReportFormat::Csv,
            Format::Json => ReportFormat::Json,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Mode {
    BigOmega,
    SmallOmega,
}

impl From<Mode> for OmegaMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::BigOmega => OmegaMode::BigOmega,
            Mode::SmallOmega => OmegaMode::SmallOmega,
        }
    }
}

#[derive(Args, Debug)]
struct Output {
    /// Write here instead of stdout. CSV reports also write `<stem>_cdf.<ext>`.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads; 0 uses every available core.
    #[arg(long, default_value_t = 0)]
    workers: usize,
    #[arg(long, default_value_t = 0.05, value_parser = parse_unit_open)]
    grid_step: f64,
    /// Directory for PD reference files.
    #[arg(long)]
    reference_cache: Option<PathBuf>,
    #[command(flatten)]
    output: Output,
}

#[derive(Args, Debug)]
struct SampleArgs {
    #[arg(long, value_enum)]
    process: Process,
    #[arg(long, value_parser = parse_theta)]
    theta: Theta,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..=1_000_000))]
    k: u64,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    count: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_TAIL_EPSILON, value_parser = parse_unit_open)]
    tail_epsilon: f64,
    #[command(flatten)]
    output: Output,
}

#[derive(Args, Debug)]
#[group(required = true, multiple = false)]
struct DickmanInput {
    #[arg(long, value_parser = parse_dickman_u)]
    u: Option<f64>,
    /// `A:B:STEP`
    #[arg(long, value_parser = parse_grid)]
    grid: Option<(f64, f64, f64)>,
}

#[derive(Args, Debug)]
struct DickmanArgs {
    #[command(flatten)]
    input: DickmanInput,
    #[command(flatten)]
    output: Output,
}

#[derive(Args, Debug)]
struct MertensArgs {
    #[arg(long, value_parser = clap::value_parser!(u64).range(3..))]
    limit: u64,
    #[arg(long, default_value = "integers", value_parser = parse_semigroup)]
    semigroup: SemigroupSpec,
    #[command(flatten)]
    output: Output,
}

#[derive(Args, Debug)]
struct SelbergArgs {
    #[arg(long, value_parser = clap::value_parser!(u64).range(3..))]
    x: u64,
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    j: u32,
    #[arg(long, value_enum)]
    mode: Mode,
    /// Also count ν_j(x) exactly.
    #[arg(long)]
    exact: bool,
    #[command(flatten)]
    output: Output,
}

#[derive(Args, Debug)]
struct BillingsleyArgs {
    #[arg(long, default_value = "integers", value_parser = parse_semigroup)]
    semigroup: SemigroupSpec,
    #[arg(long, default_value_t = 10_000_000, value_parser = clap::value_parser!(u64).range(3..))]
    n: u64,
    #[arg(long, default_value_t = 100_000, value_parser = clap::value_parser!(u64).range(1..))]
    samples: u64,
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u64).range(1..=64))]
    topk: u64,
    /// Comma-separated `a:b` pairs.
    #[arg(long, value_parser = parse_intervals)]
    intervals: Option<IntervalFamily>,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Args, Debug)]
struct ConditionedArgs {
    #[arg(long, value_enum)]
    mode: Mode,
    #[arg(long, value_parser = parse_positive)]
    tau: f64,
    #[arg(long, default_value_t = 10_000_000, value_parser = clap::value_parser!(u64).range(3..))]
    n: u64,
    #[arg(long, default_value_t = 10_000, value_parser = clap::value_parser!(u64).range(1..))]
    samples: u64,
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u64).range(1..=64))]
    topk: u64,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Args, Debug)]
struct ErdosKacArgs {
    #[arg(long, default_value_t = 100_000_000, value_parser = clap::value_parser!(u64).range(3..))]
    n: u64,
    #[arg(long, default_value_t = 100_000, value_parser = clap::value_parser!(u64).range(1..))]
    samples: u64,
    #[arg(long, value_enum, default_value = "big-omega")]
    mode: Mode,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Args, Debug)]
struct IntensityArgs {
    #[arg(long, value_parser = parse_theta)]
    theta: Theta,
    #[arg(long, default_value_t = 100_000, value_parser = clap::value_parser!(u64).range(1..))]
    samples: u64,
    #[arg(long, value_parser = parse_intervals)]
    intervals: IntervalFamily,
    #[command(flatten)]
    run: RunArgs,
}

fn parse_theta(s: &str) -> std::result::Result<Theta, String> {
    let v: f64 = s.parse().map_err(|_| format!("{s:?} is not a number"))?;
    Theta::new(v).map_err(|e| e.to_string())
}

fn parse_positive(s: &str) -> std::result::Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() && v > 0.0 => Ok(v),
        _ => Err(format!("{s:?} is not a positive number")),
    }
}

fn parse_unit_open(s: &str) -> std::result::Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v < 1.0 => Ok(v),
        _ => Err(format!("{s:?} is not in (0, 1)")),
    }
}

fn parse_dickman_u(s: &str) -> std::result::Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if (0.0..=DICKMAN_MAX_U).contains(&v) => Ok(v),
        _ => Err(format!("{s:?} is not in [0, {DICKMAN_MAX_U}]")),
    }
}

fn parse_grid(s: &str) -> std::result::Result<(f64, f64, f64), String> {
    let parts: Vec<f64> = s
        .split(':')
        .map(|p| p.trim().parse::<f64>().map_err(|_| format!("bad number {p:?} in grid")))
        .collect::<std::result::Result<_, _>>()?;
    match parts[..] {
        [a, b, step] if a >= 0.0 && b >= a && b <= DICKMAN_MAX_U && step > 0.0 => Ok((a, b, step)),
        _ => Err(format!("grid must be A:B:STEP with 0 <= A <= B <= {DICKMAN_MAX_U} and STEP > 0")),
    }
}

fn parse_intervals(s: &str) -> std::result::Result<IntervalFamily, String> {
    s.parse::<IntervalFamily>().map_err(|e| e.to_string())
}

fn parse_semigroup(s: &str) -> std::result::Result<SemigroupSpec, String> {
    s.parse::<SemigroupSpec>().map_err(|e| e.to_string())
}

fn emit(text: &str, output: Option<&Path>) -> Result<()> {
    match output {
        Some(path) => Ok(std::fs::write(path, text)?),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn emit_rows(header: &str, rows: &[Vec<String>], out: &Output) -> Result<()> {
    let text = match out.format {
        Format::Csv => {
            let mut t = format!("{header}\n");
            for r in rows {
                t.push_str(&r.join(","));
                t.push('\n');
            }
            t
        }
        Format::Json => {
            let keys: Vec<&str> = header.split(',').collect();
            let objects: Vec<serde_json::Map<String, serde_json::Value>> = rows
                .iter()
                .map(|r| keys.iter().map(|k| k.to_string()).zip(r.iter().map(|v| json_value(v))).collect())
                .collect();
            serde_json::to_string_pretty(&objects)? + "\n"
        }
    };
    emit(&text, out.output.as_deref())
}

fn json_value(v: &str) -> serde_json::Value {
    match v.parse::<f64>() {
        Ok(x) if x.is_finite() => serde_json::json!(x),
        _ => serde_json::Value::String(v.to_string()),
    }
}

fn emit_report(report: &ExperimentReport, out: &Output) -> Result<()> {
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    match &out.output {
        Some(path) => report.write(path, out.format.into()).map(|_| ()),
        None => match out.format {
            Format::Json => emit(&(report.to_json()? + "\n"), None),
            Format::Csv => emit(&format!("{}\n{}", report.stats_csv(), report.cdf_csv()), None),
        },
    }
}

fn run_config(kind: ExperimentKind, run: &RunArgs, fill: impl FnOnce(&mut ExperimentConfig)) -> Result<()> {
    let mut config = ExperimentConfig::new(kind);
    config.seed = run.seed;
    config.workers = run.workers;
    config.grid_step = run.grid_step;
    config.reference_cache = run.reference_cache.clone();
    fill(&mut config);
    let report = run_experiment(&config)?;
    emit_report(&report, &run.output)
}

fn sample(a: &SampleArgs) -> Result<()> {
    let k = a.k as usize;
    let mut rows = Vec::with_capacity(a.count as usize);
    for draw in 0..a.count {
        let mut rng = stream_rng(a.seed, draw);
        let values = match a.process {
            Process::Gem => sample_gem_with(a.theta, k, &mut rng)?.values,
            Process::Pd => sample_pd_with(a.theta, k, a.tail_epsilon, &mut rng)?.top(k),
        };
        let mut row = vec![draw.to_string()];
        row.extend(values.into_iter().map(fmt_sig9));
        rows.push(row);
    }
    let mut header = String::from("draw");
    for i in 1..=k {
        let _ = write!(header, ",v{i}");
    }
    emit_rows(&header, &rows, &a.output)
}

fn dickman(a: &DickmanArgs) -> Result<()> {
    if let Some(u) = a.input.u {
        let value = fmt_sig9(dickman_rho(u)?);
        return match a.output.format {
            Format::Csv => emit(&format!("{value}\n"), a.output.output.as_deref()),
            Format::Json => emit_rows("u,rho", &[vec![fmt_sig9(u), value]], &a.output),
        };
    }
    let (lo, hi, step) = a.input.grid.expect("clap requires --u or --grid");
    let rows = (0..)
        .map(|i| lo + i as f64 * step)
        .take_while(|&u| u <= hi + 1e-9 * step)
        .map(|u| Ok(vec![fmt_sig9(u), fmt_sig9(dickman_rho(u.min(hi))?)]))
        .collect::<Result<Vec<_>>>()?;
    emit_rows("u,rho", &rows, &a.output)
}

fn mertens(a: &MertensArgs) -> Result<()> {
    let (sum, b) = if a.semigroup.kind == SemigroupKind::Integers {
        let s = mertens_sum(a.limit)?;
        (s, s - (a.limit as f64).ln().ln())
    } else {
        semigroup_mertens(&a.semigroup, a.limit)?
    };
    let row = vec![a.semigroup.name.clone(), a.limit.to_string(), fmt_sig9(sum), fmt_sig9(b)];
    emit_rows("semigroup,x,sum,b_estimate", &[row], &a.output)
}

fn selberg(a: &SelbergArgs) -> Result<()> {
    let window = SelbergWindow::default();
    let mode = match a.mode {
        Mode::SmallOmega => SelbergMode::SmallOmega,
        Mode::BigOmega => window.big_omega_mode(a.x, a.j).ok_or_else(|| {
            Error::Hypothesis(format!("j = {} lies outside both Omega formula windows at x = {}", a.j, a.x))
        })?,
    };
    let main = selberg_approx(a.x, a.j, mode, &window)?;
    let mode_name = serde_json::to_value(mode)?.as_str().unwrap_or_default().to_string();
    let mut header = String::from("x,j,formula,main_term");
    let mut row = vec![a.x.to_string(), a.j.to_string(), mode_name, fmt_sig9(main)];
    if a.exact {
        let exact = nu_count(a.x, a.j as usize, a.mode.into())?;
        header.push_str(",exact,rel_error");
        row.push(exact.to_string());
        row.push(fmt_sig9((main - exact as f64).abs() / exact as f64));
    }
    emit_rows(&header, &[row], &a.output)
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Sample(a) => sample(&a),
        Command::Dickman(a) => dickman(&a),
        Command::Mertens(a) => mertens(&a),
        Command::Selberg(a) => selberg(&a),
        Command::Billingsley(a) => run_config(ExperimentKind::Billingsley, &a.run, |c| {
            c.semigroup = a.semigroup.clone();
            c.n = a.n;
            c.samples = a.samples;
            c.topk = a.topk as usize;
            c.intervals = a.intervals.clone();
        }),
        Command::Conditioned(a) => run_config(ExperimentKind::Conditioned, &a.run, |c| {
            c.mode = Some(a.mode.into());
            c.tau = Some(a.tau);
            c.n = a.n;
            c.samples = a.samples;
            c.topk = a.topk as usize;
        }),
        Command::ErdosKac(a) => run_config(ExperimentKind::ErdosKac, &a.run, |c| {
            c.n = a.n;
            c.samples = a.samples;
            c.mode = Some(a.mode.into());
        }),
        Command::Intensity(a) => run_config(ExperimentKind::Intensity, &a.run, |c| {
            c.theta = Some(a.theta);
            c.samples = a.samples;
            c.intervals = Some(a.intervals.clone());
        }),
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Usage(_) | Error::Parameter(_) | Error::Domain(_) | Error::Parse(_) => 2,
        Error::Hypothesis(_) => 3,
        Error::Capacity(_) | Error::Infeasible(_) => 4,
        Error::Invariant(_) | Error::Io(_) | Error::Json(_) => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
