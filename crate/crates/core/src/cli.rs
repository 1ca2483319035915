//! Command-line front end.
//!
//! Exit codes: 0 success, 1 reference checks failed (`validate
//! --reference`), 2 bad invocation or configuration, 3 numerical failure.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::criteria::{correlation_report, evaluate_criteria, optimal_gains_for_state, GainTriple};
use crate::error::{Error, Result};
use crate::gaussian::Quadrature;
use crate::homodyne::export::{write_estimates_csv, write_trace_batch};
use crate::homodyne::{labels_for, sample_shots, synthesize_traces, MeasurementSession};
use crate::network::{run_pipeline, ExperimentSpec, Stage};
use crate::report::{format_table, ledger, reference_checks, write_ledger_csv, Reference};
use crate::sweep::{sweep, write_sweep_csv, Axis, GainMode, SweepSpec};

const REFERENCE_JSON: &str = include_str!("../data/reference_measurements.json");

#[derive(Debug, Parser)]
#[command(
    name = "qnet",
    version,
    about = "Three-node continuous-variable memory network simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print criterion values for a config as JSON.
    Criteria(CriteriaArgs),
    /// Write a closed-form criterion grid as CSV.
    Sweep(SweepArgs),
    /// Run the Monte Carlo measurement and print a JSON report.
    Mc(McArgs),
    /// Compare model correlation variances with the bundled measurements.
    Report(ReportArgs),
    /// Check a config file.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
struct ConfigArg {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
}

/// `released`, `atomic`, `input` or `all`.
#[derive(Debug, Clone, Copy, PartialEq)]
enum StageSel {
    One(Stage),
    All,
}

impl std::str::FromStr for StageSel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "all" {
            Ok(StageSel::All)
        } else {
            s.parse().map(StageSel::One)
        }
    }
}

impl StageSel {
    fn stages(self) -> Vec<Stage> {
        match self {
            StageSel::One(s) => vec![s],
            StageSel::All => Stage::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Args)]
struct CriteriaArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[arg(long, default_value = "released")]
    stage: StageSel,
    /// `optimal`, one gain for all criteria, or `g1,g2,g3`.
    #[arg(long, default_value = "optimal")]
    gains: String,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long)]
    stage: Stage,
    /// `min:max:steps`
    #[arg(long, default_value = "0:1.2:121")]
    r: Axis,
    /// `min:max:steps`
    #[arg(long, default_value = "0:1:101")]
    eta: Axis,
    /// `optimal` or a fixed gain.
    #[arg(long, default_value = "optimal")]
    gain: GainMode,
    #[arg(long, default_value_t = 0.0)]
    t_ns: f64,
    /// Output file; stdout if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct McArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[arg(long, default_value = "released")]
    stage: StageSel,
    #[arg(long)]
    shots: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write per-shot normalized estimates; `.x.csv`/`.p.csv` per stage.
    #[arg(long)]
    shots_csv: Option<PathBuf>,
    /// Write X-basis homodyne records of each selected stage in binary form.
    #[arg(long)]
    traces: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Also write the ledger CSV here.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Also compare against the bundled reference operating point.
    #[arg(long)]
    reference: bool,
}

fn load_spec(path: &Path) -> Result<ExperimentSpec> {
    ExperimentSpec::from_json(&std::fs::read_to_string(path)?)
}

fn reference() -> Result<Reference> {
    Reference::from_json(REFERENCE_JSON)
}

fn parse_gains(text: &str) -> Result<Option<GainTriple>> {
    if text == "optimal" {
        return Ok(None);
    }
    let parsed: std::result::Result<Vec<f64>, _> =
        text.split(',').map(|v| v.trim().parse::<f64>()).collect();
    match parsed.as_deref() {
        Ok([g]) => Ok(Some(GainTriple::uniform(*g))),
        Ok([a, b, c]) => Ok(Some(GainTriple::from_array([*a, *b, *c]))),
        _ => Err(Error::Settings(format!(
            "gains '{text}' must be 'optimal', g or g1,g2,g3"
        ))),
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_json<T: serde::Serialize>(path: Option<&Path>, value: &T) -> Result<()> {
    let mut w = output(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn criteria_cmd(args: &CriteriaArgs) -> Result<i32> {
    let spec = load_spec(&args.config.config)?;
    let fixed = parse_gains(&args.gains)?;
    let pipeline = run_pipeline(&spec)?;
    let results = args
        .stage
        .stages()
        .into_iter()
        .map(|stage| {
            let state = pipeline.stage(stage).state();
            let gains = match fixed {
                Some(g) => g,
                None => optimal_gains_for_state(state)?,
            };
            evaluate_criteria(state, gains, stage)
        })
        .collect::<Result<Vec<_>>>()?;
    match args.stage {
        StageSel::One(_) => write_json(None, &results[0])?,
        StageSel::All => write_json(None, &results)?,
    }
    Ok(0)
}

fn sweep_cmd(args: &SweepArgs) -> Result<i32> {
    let spec = SweepSpec {
        stage: args.stage,
        r_range: args.r,
        eta_range: args.eta,
        t_ns: args.t_ns,
        gain_mode: args.gain,
    };
    let cells = sweep(&spec)?;
    let mut w = output(args.out.as_deref())?;
    write_sweep_csv(&mut w, &cells)?;
    w.flush()?;
    Ok(0)
}

fn mc_cmd(args: &McArgs) -> Result<i32> {
    let mut spec = load_spec(&args.config.config)?;
    if let Some(n) = args.shots {
        spec.mc.shots = n;
    }
    if let Some(s) = args.seed {
        spec.mc.seed = s;
    }
    spec.validate()?;
    let session = MeasurementSession::new(&spec)?;
    let stages = args.stage.stages();
    let reports = stages
        .iter()
        .map(|&s| session.estimate(s))
        .collect::<Result<Vec<_>>>()?;
    match args.stage {
        StageSel::One(_) => write_json(args.out.as_deref(), &reports[0])?,
        StageSel::All => write_json(args.out.as_deref(), &reports)?,
    }
    for &stage in &stages {
        if let Some(base) = &args.shots_csv {
            let shots = session.shots(stage)?;
            for (basis, m) in [(Quadrature::X, &shots.x), (Quadrature::P, &shots.p)] {
                let name = format!(".{stage}.{}.csv", basis.to_string().to_lowercase());
                let f = BufWriter::new(File::create(with_suffix(base, &name))?);
                write_estimates_csv(f, &labels_for(&[basis; 3]), m)?;
            }
        }
        if let Some(base) = &args.traces {
            let state = session.pipeline().stage(stage).state();
            let basis = [Quadrature::X; 3];
            let shots = sample_shots(state, &basis, &spec.mc, 0x200)?;
            let batch = synthesize_traces(&shots, &labels_for(&basis), &spec.mc, 0x200)?;
            write_trace_batch(&batch, &with_suffix(base, &format!(".{stage}.bin")))?;
        }
    }
    Ok(0)
}

fn report_cmd(args: &ReportArgs) -> Result<i32> {
    let spec = load_spec(&args.config.config)?;
    let reference = reference()?;
    let rows = correlation_report(&spec)?;
    let table = format_table(&rows, &reference, spec.eta_read.0[0])?;
    let mut out = io::stdout().lock();
    out.write_all(table.as_bytes())?;
    if let Some(path) = &args.csv {
        write_ledger_csv(
            BufWriter::new(File::create(path)?),
            &ledger(&spec, &reference)?,
        )?;
    }
    Ok(0)
}

fn validate_cmd(args: &ValidateArgs) -> Result<i32> {
    let spec = load_spec(&args.config.config)?;
    let pipeline = run_pipeline(&spec)?;
    for stage in Stage::ALL {
        pipeline.stage(stage).state().check_physical()?;
    }
    let mut out = io::stdout().lock();
    writeln!(out, "config ok: {}", args.config.config.display())?;
    if !args.reference {
        return Ok(0);
    }
    let checks = reference_checks(&spec, &reference()?)?;
    for c in &checks {
        writeln!(
            out,
            "{} {:<28} model {:>10.5}  target {:>8.4} ± {:.4}",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.model,
            c.target,
            c.tolerance
        )?;
    }
    Ok(if checks.iter().all(|c| c.pass) { 0 } else { 1 })
}

/// Runs the CLI on `argv` (including the program name) and returns the
/// process exit code.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = match &cli.command {
        Command::Criteria(a) => criteria_cmd(a),
        Command::Sweep(a) => sweep_cmd(a),
        Command::Mc(a) => mc_cmd(a),
        Command::Report(a) => report_cmd(a),
        Command::Validate(a) => validate_cmd(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                3
            } else {
                2
            }
        }
    }
}
