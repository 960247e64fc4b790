use std::f64::consts::PI;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use basilar::combtone::{interval_from_fraction, predict, table1, table1_csv, table1_text, verify_period, IntervalRatio};
use basilar::energy::{energy_field, log_grid, time_grid, EnergyField, FieldOptions, DEFAULT_T_SAMPLES, DEFAULT_XI_POINTS};
use basilar::modal::{odd_modes, DEFAULT_N_MAX};
use basilar::oracle::random_tuple_suite;
use basilar::params::builtin_parameter_sets;
use basilar::peaks::{self, note_name, DEFAULT_TOLERANCE_CENTS};
use basilar::signal::{from_wav, sawtooth, sine, TwoTone, WavOptions};
use basilar::{Forcing, PeriodicSignal, StringBank};
use clap::{Args, Parser, Subcommand, ValueEnum};

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERIC: u8 = 3;
const ORACLE_TOLERANCE: f64 = 1e-6;

#[derive(Parser)]
#[command(name = "basilar", version, about = "Damped string-bank model of the basilar membrane")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample the energy field E(xi, t) and write it out
    Simulate(SimulateArgs),
    /// List the peaks of E(., t) with harmonic/sub-harmonic labels
    Peaks(PeaksArgs),
    /// Combination-tone predictions for k1/k0 = u/w
    Combtone(CombtoneArgs),
    /// Regenerate the table of natural intervals within an octave
    Table1(Table1Args),
    /// Compare closed forms against RK4 on seeded random tuples
    OracleCheck(OracleArgs),
}

#[derive(Args, Clone)]
struct FieldArgs {
    /// Built-in parameter set id or path to a parameter file
    #[arg(long, default_value = "modified_a03")]
    params: String,
    /// sine:HZ[:AMP[:PHASE]] | sawtooth:HZ:N | twotone:U/W:K0HZ | wav:PATH | json:PATH
    #[arg(long)]
    signal: String,
    /// Lowest string frequency [Hz]; defaults to the bottom of the bank
    #[arg(long)]
    xi_min_hz: Option<f64>,
    /// Highest string frequency [Hz]; defaults to the top of the bank
    #[arg(long)]
    xi_max_hz: Option<f64>,
    /// Log-spaced points on the string axis
    #[arg(long, default_value_t = DEFAULT_XI_POINTS)]
    points: usize,
    /// Samples over one period of the energy
    #[arg(long, default_value_t = DEFAULT_T_SAMPLES)]
    t_samples: usize,
    /// Sum the odd modes up to this index
    #[arg(long, default_value_t = DEFAULT_N_MAX)]
    n_max: u32,
    /// Explicit comma-separated modes, overriding --n-max
    #[arg(long, value_delimiter = ',')]
    modes: Option<Vec<u32>>,
    /// Worker threads for the grid
    #[arg(long, env = "BASILAR_WORKERS")]
    workers: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FieldFormat {
    Csv,
    Json,
    Bin,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    field: FieldArgs,
    /// Keep the per-mode layers E_n in the output
    #[arg(long)]
    per_mode: bool,
    #[arg(long, value_enum, default_value = "csv")]
    format: FieldFormat,
    /// Output file; standard output when omitted
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum TableFormat {
    Text,
    Csv,
}

#[derive(Args)]
struct PeaksArgs {
    /// Previously written field (.csv or .bin); otherwise computed from the flags below
    #[arg(long, conflicts_with = "signal")]
    field: Option<PathBuf>,
    #[arg(long)]
    params: Option<String>,
    #[arg(long)]
    signal: Option<String>,
    #[arg(long)]
    xi_min_hz: Option<f64>,
    #[arg(long)]
    xi_max_hz: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_XI_POINTS)]
    points: usize,
    #[arg(long, default_value_t = DEFAULT_N_MAX)]
    n_max: u32,
    #[arg(long, value_delimiter = ',')]
    modes: Option<Vec<u32>>,
    #[arg(long, env = "BASILAR_WORKERS")]
    workers: Option<usize>,
    /// Reference fundamental [Hz] for classification
    #[arg(long)]
    fundamental_hz: f64,
    /// Time sample of the field to scan
    #[arg(long, default_value_t = 0)]
    t_index: usize,
    /// Minimum prominence as a fraction of the global maximum
    #[arg(long, default_value_t = 1e-3)]
    prominence: f64,
    #[arg(long, default_value_t = DEFAULT_TOLERANCE_CENTS)]
    tolerance_cents: f64,
    #[arg(long, value_enum, default_value = "text")]
    format: TableFormat,
}

#[derive(Args)]
struct CombtoneArgs {
    u: u64,
    w: u64,
    /// Lower tone [Hz]
    k0_hz: f64,
    /// Check the predicted period of E by sampling
    #[arg(long, requires = "xi")]
    verify: bool,
    /// String frequency for --verify [Hz]
    #[arg(long)]
    xi: Option<f64>,
    #[arg(long, default_value = "modified_a03")]
    params: String,
    #[arg(long, default_value_t = DEFAULT_N_MAX)]
    n_max: u32,
}

#[derive(Args)]
struct Table1Args {
    /// Lower note of every interval
    #[arg(long, default_value = "C4")]
    k0_note: String,
    #[arg(long, value_enum, default_value = "text")]
    format: TableFormat,
}

#[derive(Args)]
struct OracleArgs {
    /// Parameter sets to check; all built-in sets when omitted
    #[arg(long)]
    params: Vec<String>,
    /// Random tuples per parameter set
    #[arg(long, default_value_t = 20)]
    count: usize,
    /// PRNG seed; drawn at random (and printed) when omitted
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, env = "BASILAR_WORKERS")]
    workers: Option<usize>,
}

/// Failure class, mapped onto the exit code.
enum Failure {
    Config(anyhow::Error),
    Numeric(anyhow::Error),
}

type Outcome<T> = Result<T, Failure>;

trait Classify<T> {
    fn config(self) -> Outcome<T>;
    fn numeric(self) -> Outcome<T>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn config(self) -> Outcome<T> {
        self.map_err(|e| Failure::Config(e.into()))
    }

    fn numeric(self) -> Outcome<T> {
        self.map_err(|e| Failure::Numeric(e.into()))
    }
}

enum SignalChoice {
    Periodic(PeriodicSignal),
    TwoTone(TwoTone, IntervalRatio),
}

impl SignalChoice {
    fn forcing(&self) -> &dyn Forcing {
        match self {
            Self::Periodic(s) => s,
            Self::TwoTone(t, _) => t,
        }
    }

    /// Period of the energy, over which time samples are taken.
    fn energy_period(&self) -> f64 {
        match self {
            Self::Periodic(s) => s.energy_period(),
            Self::TwoTone(t, iv) => predict(*iv, t.k0).period_seconds(),
        }
    }
}

fn parse_f64(text: &str, what: &str) -> anyhow::Result<f64> {
    text.parse().with_context(|| format!("invalid {what} '{text}'"))
}

fn parse_signal(spec: &str) -> anyhow::Result<SignalChoice> {
    let (kind, rest) = spec.split_once(':').ok_or_else(|| anyhow!("signal '{spec}' lacks a kind prefix"))?;
    let parts: Vec<&str> = rest.split(':').collect();
    Ok(match kind {
        "sine" => {
            let hz = parse_f64(parts[0], "frequency")?;
            let amp = parts.get(1).map_or(Ok(1.0), |a| parse_f64(a, "amplitude"))?;
            let phase = parts.get(2).map_or(Ok(0.0), |p| parse_f64(p, "phase"))?;
            if parts.len() > 3 {
                bail!("sine takes at most HZ:AMP:PHASE");
            }
            SignalChoice::Periodic(sine(hz, amp, phase)?)
        }
        "sawtooth" => {
            let [hz, n] = parts[..] else {
                bail!("sawtooth expects sawtooth:HZ:N");
            };
            let n = n.parse().with_context(|| format!("invalid harmonic count '{n}'"))?;
            SignalChoice::Periodic(sawtooth(parse_f64(hz, "frequency")?, n)?)
        }
        "twotone" => {
            let [ratio, k0] = parts[..] else {
                bail!("twotone expects twotone:U/W:K0HZ");
            };
            let (u, w) = ratio.split_once('/').ok_or_else(|| anyhow!("interval '{ratio}' must be U/W with integers"))?;
            let u: u64 = u.parse().with_context(|| format!("invalid integer '{u}'"))?;
            let w: u64 = w.parse().with_context(|| format!("invalid integer '{w}'"))?;
            let iv = reduced_interval(u, w)?;
            let k0 = 2.0 * PI * parse_f64(k0, "frequency")?;
            SignalChoice::TwoTone(TwoTone::from_ratio(iv.u, iv.w, k0)?, iv)
        }
        "wav" => SignalChoice::Periodic(from_wav(rest, &WavOptions::default())?),
        "json" => {
            let text = std::fs::read_to_string(rest).with_context(|| format!("reading {rest}"))?;
            SignalChoice::Periodic(serde_json::from_str(&text).with_context(|| format!("parsing {rest}"))?)
        }
        other => bail!("unknown signal kind '{other}'"),
    })
}

fn reduced_interval(u: u64, w: u64) -> anyhow::Result<IntervalRatio> {
    let iv = interval_from_fraction(u, w)?;
    if let Some((u0, w0)) = iv.reduced_from {
        eprintln!("warning: {u0}/{w0} is not in lowest terms; using {}/{}", iv.u, iv.w);
    }
    Ok(iv)
}

struct FieldRequest<'a> {
    params: &'a str,
    signal: &'a str,
    xi_min_hz: Option<f64>,
    xi_max_hz: Option<f64>,
    points: usize,
    t_samples: usize,
    n_max: u32,
    modes: Option<Vec<u32>>,
    workers: Option<usize>,
    per_mode: bool,
}

fn compute_field(req: FieldRequest) -> Outcome<EnergyField> {
    let bank = StringBank::resolve(req.params).config()?;
    let signal = parse_signal(req.signal).config()?;
    let (lo, hi) = bank.band_hz();
    let lo = req.xi_min_hz.unwrap_or(lo);
    let hi = req.xi_max_hz.unwrap_or(hi);
    if !(lo > 0.0 && hi > lo) {
        return Err(Failure::Config(anyhow!("string range must satisfy 0 < min < max, got [{lo}, {hi}] Hz")));
    }
    if req.points < 3 || req.t_samples == 0 {
        return Err(Failure::Config(anyhow!("need at least 3 grid points and 1 time sample")));
    }
    let modes = req.modes.unwrap_or_else(|| odd_modes(req.n_max));
    if modes.is_empty() || modes.contains(&0) {
        return Err(Failure::Config(anyhow!("modes must be positive integers")));
    }
    let xi = log_grid(2.0 * PI * lo, 2.0 * PI * hi, req.points);
    let t = time_grid(signal.energy_period(), req.t_samples);
    let options = FieldOptions {
        modes,
        keep_per_mode: req.per_mode,
        workers: req.workers,
    };
    let field = energy_field(&bank, signal.forcing(), &xi, &t, &options).numeric()?;
    if field.total.iter().any(|v| !v.is_finite()) {
        return Err(Failure::Numeric(anyhow!("energy field contains non-finite values")));
    }
    Ok(field)
}

fn output(path: Option<&Path>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn simulate(args: SimulateArgs) -> Outcome<()> {
    let f = &args.field;
    let field = compute_field(FieldRequest {
        params: &f.params,
        signal: &f.signal,
        xi_min_hz: f.xi_min_hz,
        xi_max_hz: f.xi_max_hz,
        points: f.points,
        t_samples: f.t_samples,
        n_max: f.n_max,
        modes: f.modes.clone(),
        workers: f.workers,
        per_mode: args.per_mode,
    })?;
    let mut out = output(args.out.as_deref()).config()?;
    match args.format {
        FieldFormat::Csv => field.write_csv(&mut out).config()?,
        FieldFormat::Json => serde_json::to_writer(&mut out, &field).config()?,
        FieldFormat::Bin => field.write_binary(&mut out).config()?,
    }
    out.flush().config()?;

    let meta = &field.metadata;
    eprintln!(
        "{} x {} samples, params {}, {}, modes {:?}",
        field.xi_axis.len(),
        field.t_axis.len(),
        meta.params_id,
        meta.signal,
        meta.modes
    );
    match &meta.truncation {
        Some(tr) => match (tr.max_absolute, tr.max_relative) {
            (Some(abs), Some(rel)) => eprintln!("truncation bound beyond n = {}: {abs:e} J ({rel:e} relative)", tr.n_max),
            _ => eprintln!("truncation bound unavailable: raise n_max or the lowest string frequency"),
        },
        None => eprintln!("truncation bound not computed for an explicit mode list"),
    }
    Ok(())
}

fn read_field(path: &Path) -> anyhow::Result<EnergyField> {
    let mut bytes = Vec::new();
    File::open(path)
        .with_context(|| format!("opening {}", path.display()))?
        .read_to_end(&mut bytes)?;
    let field = if bytes.starts_with(b"BSLRFLD") {
        EnergyField::read_binary(bytes.as_slice())?
    } else if bytes.starts_with(b"{") {
        serde_json::from_slice(&bytes)?
    } else {
        EnergyField::read_csv(BufReader::new(bytes.as_slice()))?
    };
    Ok(field)
}

fn list_peaks(args: PeaksArgs) -> Outcome<()> {
    let field = match (&args.field, &args.signal) {
        (Some(path), _) => read_field(path).config()?,
        (None, Some(signal)) => compute_field(FieldRequest {
            params: args.params.as_deref().unwrap_or("modified_a03"),
            signal,
            xi_min_hz: args.xi_min_hz,
            xi_max_hz: args.xi_max_hz,
            points: args.points,
            t_samples: 1,
            n_max: args.n_max,
            modes: args.modes.clone(),
            workers: args.workers,
            per_mode: false,
        })?,
        (None, None) => return Err(Failure::Config(anyhow!("give either --field or --signal"))),
    };
    if args.t_index >= field.t_axis.len() {
        return Err(Failure::Config(anyhow!(
            "--t-index {} out of range (field has {} time samples)",
            args.t_index,
            field.t_axis.len()
        )));
    }
    if !(args.fundamental_hz > 0.0) {
        return Err(Failure::Config(anyhow!("--fundamental-hz must be positive")));
    }
    let mut found = peaks::find_peaks(&field, args.t_index, args.prominence);
    peaks::classify_peaks(&mut found, args.fundamental_hz, args.tolerance_cents);
    let mut out = output(None).config()?;
    match args.format {
        TableFormat::Text => out.write_all(peaks::format_table(&found).as_bytes()).config()?,
        TableFormat::Csv => peaks::write_csv(&found, &mut out).config()?,
    }
    out.flush().config()
}

fn combtone(args: CombtoneArgs) -> Outcome<()> {
    let iv = reduced_interval(args.u, args.w).config()?;
    if !(args.k0_hz > 0.0) {
        return Err(Failure::Config(anyhow!("k0 must be positive")));
    }
    let k0 = 2.0 * PI * args.k0_hz;
    let pred = predict(iv, k0);
    if args.verify {
        let bank = StringBank::resolve(&args.params).config()?;
        let xi_hz = args.xi.expect("clap enforces --xi with --verify");
        let tones = TwoTone::from_ratio(iv.u, iv.w, k0).config()?;
        let report = verify_period(&bank, &tones, &iv, 2.0 * PI * xi_hz, args.n_max).numeric()?;
        let json = serde_json::json!({ "prediction": pred, "verification": report });
        println!("{}", serde_json::to_string_pretty(&json).config()?);
        if !report.degenerate && !report.measured_ok {
            return Err(Failure::Numeric(anyhow!("energy is not periodic with the predicted period")));
        }
        return Ok(());
    }
    println!("interval {}/{}  p/q = {}  q = {}  h = {}", iv.u, iv.w, iv.p_over_q(), iv.q, iv.h);
    println!("k0 = {} Hz  k1 = {} Hz", args.k0_hz, args.k0_hz * iv.u as f64 / iv.w as f64);
    for (label, ratio, freq) in [
        ("helmholtz", pred.helmholtz, pred.helmholtz_freq()),
        ("lagrange", pred.lagrange, pred.lagrange_freq()),
        ("ours", pred.ours, pred.ours_freq()),
    ] {
        let hz = freq / (2.0 * PI);
        println!("{label:<10} {:>6} k0 = {hz:>10.4} Hz  {}", ratio.to_string(), note_name(hz));
    }
    println!("period     {:.6e} s", pred.period_seconds());
    Ok(())
}

fn print_table1(args: Table1Args) -> Outcome<()> {
    let rows = table1(&args.k0_note).config()?;
    let text = match args.format {
        TableFormat::Text => table1_text(&rows),
        TableFormat::Csv => table1_csv(&rows),
    };
    print!("{text}");
    Ok(())
}

fn oracle_check(args: OracleArgs) -> Outcome<()> {
    let seed = args.seed.unwrap_or_else(rand::random);
    println!("seed {seed}");
    let ids: Vec<String> = if args.params.is_empty() {
        builtin_parameter_sets().keys().map(|s| s.to_string()).collect()
    } else {
        args.params.clone()
    };
    let run = || -> Outcome<usize> {
        let mut failures = 0;
        for id in &ids {
            let bank = StringBank::resolve(id).config()?;
            let checks = random_tuple_suite(&bank, args.count, seed).numeric()?;
            for c in &checks {
                let cmp = &c.comparison;
                let ok = cmp.max_rel_deviation < ORACLE_TOLERANCE;
                failures += usize::from(!ok);
                println!(
                    "{} {id} xi={:.3} Hz k={:.3} Hz n={} deviation={:.3e} window=[{:.4}, {:.4}] s",
                    if ok { "PASS" } else { "FAIL" },
                    cmp.xi / (2.0 * PI),
                    c.drive_hz,
                    cmp.n,
                    cmp.max_rel_deviation,
                    cmp.t_start,
                    cmp.t_end
                );
            }
        }
        Ok(failures)
    };
    let failures = match args.workers {
        Some(n) => rayon_pool(n).config()?.install(run)?,
        None => run()?,
    };
    if failures > 0 {
        return Err(Failure::Numeric(anyhow!("{failures} oracle comparison(s) exceeded {ORACLE_TOLERANCE:e}")));
    }
    println!("all comparisons within {ORACLE_TOLERANCE:e}");
    Ok(())
}

fn rayon_pool(workers: usize) -> anyhow::Result<basilar::energy::WorkerPool> {
    Ok(basilar::energy::worker_pool(workers)?)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Peaks(a) => list_peaks(a),
        Command::Combtone(a) => combtone(a),
        Command::Table1(a) => print_table1(a),
        Command::OracleCheck(a) => oracle_check(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Numeric(e)) => {
            eprintln!("numeric failure: {e:#}");
            ExitCode::from(EXIT_NUMERIC)
        }
    }
}
