use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mbirs::channel::{watts_to_dbm, UserPlacement};
use mbirs::circuit::{self, ElementCircuit};
use mbirs::harness::{
    self, audit_trial, run_pipeline, summarize, write_results_csv, write_summary_csv, Baseline,
    Preset, Settings, SweepKind,
};
use mbirs::Error;

#[derive(Parser)]
#[command(name = "mbirs", version, about = "Multi-band frequency-selective IRS simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Total power versus SINR target for each baseline.
    SweepSinr {
        #[command(flatten)]
        common: Common,
        /// SINR targets in dB.
        #[arg(long, value_delimiter = ',')]
        points: Option<Vec<f64>>,
    },
    /// Total power versus number of IRS elements for each baseline.
    SweepElements {
        #[command(flatten)]
        common: Common,
        /// Element counts.
        #[arg(long, value_delimiter = ',')]
        points: Option<Vec<usize>>,
    },
    /// Reflection phase and amplitude over the capacitance range.
    CircuitSweep {
        /// Carrier frequencies in GHz.
        #[arg(long, value_delimiter = ',', default_value = "1.885,2.345,2.605")]
        bands_ghz: Vec<f64>,
        #[arg(long, default_value_t = circuit::DEFAULT_SAMPLES)]
        samples: usize,
        #[arg(long)]
        c_min_pf: Option<f64>,
        #[arg(long)]
        c_max_pf: Option<f64>,
        /// Print the derived band status table as JSON instead of the sweep.
        #[arg(long)]
        table: bool,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// One trial of one baseline, reported as JSON.
    SingleRun {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "multi-band-selection")]
        baseline: String,
        #[arg(long, default_value_t = 0)]
        trial: usize,
    },
}

#[derive(Args)]
struct Common {
    /// TOML settings file; command-line flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = parse_preset)]
    preset: Option<Preset>,
    #[arg(long, value_delimiter = ',')]
    bands_ghz: Option<Vec<f64>>,
    #[arg(long)]
    n_tx: Option<usize>,
    /// Users per band.
    #[arg(long)]
    users: Option<usize>,
    #[arg(long)]
    elements: Option<usize>,
    /// SINR target (dB) where it is not the swept variable.
    #[arg(long)]
    sinr_db: Option<f64>,
    #[arg(long)]
    noise_dbm: Option<f64>,
    #[arg(long, value_parser = parse_placement)]
    placement: Option<UserPlacement>,
    #[arg(long, value_delimiter = ',')]
    baselines: Option<Vec<String>>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    /// One-based band served by the certain-band baseline.
    #[arg(long)]
    certain_band: Option<usize>,
    /// Assignment before the search: shortfall, none or a one-based band.
    #[arg(long)]
    incumbent: Option<String>,
    /// Repeat the assignment search until a pass changes nothing.
    #[arg(long)]
    repeat_search: bool,
    /// Per-trial CSV (stdout when omitted).
    #[arg(long)]
    output: Option<PathBuf>,
    /// Aggregated CSV.
    #[arg(long)]
    summary: Option<PathBuf>,
}

fn parse_preset(s: &str) -> Result<Preset, String> {
    match s {
        "desk" => Ok(Preset::Desk),
        "full-scale" => Ok(Preset::FullScale),
        _ => Err(format!("unknown preset {s:?} (desk, full-scale)")),
    }
}

fn parse_placement(s: &str) -> Result<UserPlacement, String> {
    match s {
        "disc" => Ok(UserPlacement::Disc),
        "circle" => Ok(UserPlacement::Circle),
        "fixed" => Ok(UserPlacement::Fixed),
        _ => Err(format!("unknown placement {s:?} (disc, circle, fixed)")),
    }
}

enum Failure {
    Config(String),
    AllInfeasible,
    Other(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::Toml(_) | Error::Domain(_) | Error::Dimension(_) => {
                Failure::Config(e.to_string())
            }
            other => Failure::Other(other.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Other(e.to_string())
    }
}

fn settings(common: &Common) -> Result<Settings, Failure> {
    let file = match &common.config {
        Some(p) => Settings::from_file(p)?,
        None => Settings::default(),
    };
    let baselines = common
        .baselines
        .as_ref()
        .map(|v| v.iter().map(|s| s.parse::<Baseline>()).collect::<Result<Vec<_>, _>>())
        .transpose()?;
    let cli = Settings {
        preset: common.preset,
        bands_ghz: common.bands_ghz.clone(),
        n_tx: common.n_tx,
        users: common.users,
        elements: common.elements,
        sinr_db: common.sinr_db,
        noise_dbm: common.noise_dbm,
        placement: common.placement,
        baselines,
        seed: common.seed,
        trials: common.trials,
        certain_band: common.certain_band,
        incumbent: common.incumbent.clone(),
        repeat_search: common.repeat_search.then_some(true),
        output: common.output.clone(),
        ..Default::default()
    };
    Ok(file.overlay(cli))
}

fn sweep(common: &Common, kind: SweepKind, s: Settings) -> Result<(), Failure> {
    // With an output path the harness streams the CSV itself.
    let to_stdout = s.output.is_none();
    let config = s.build(kind)?;
    let rows = harness::run_experiment(&config)?;
    if to_stdout {
        write_results_csv(io::stdout().lock(), &rows)?;
    }
    let summary = summarize(&rows);
    if let Some(path) = &common.summary {
        write_summary_csv(std::fs::File::create(path)?, &summary)?;
    }
    let mut err = io::stderr().lock();
    for r in &summary {
        writeln!(
            err,
            "{:<22} {}={:<6} mean {:>9.3} dBm  outage {:.2}",
            r.baseline.id(),
            r.sweep_variable,
            r.sweep_value,
            r.mean_power_dbm,
            r.outage_rate
        )?;
    }
    if rows.iter().all(|r| !r.feasible) {
        return Err(Failure::AllInfeasible);
    }
    Ok(())
}

fn circuit_sweep(
    bands_ghz: &[f64],
    samples: usize,
    c_min_pf: Option<f64>,
    c_max_pf: Option<f64>,
    table: bool,
    output: Option<PathBuf>,
) -> Result<(), Failure> {
    let preset = ElementCircuit::varactor_preset();
    let c_min = c_min_pf.map_or(preset.c_min, |c| c * 1e-12);
    let c_max = c_max_pf.map_or(preset.c_max, |c| c * 1e-12);
    let el = ElementCircuit::new(preset.l1, preset.l2, preset.r, preset.z0, c_min, c_max)?;
    let bands: Vec<f64> = bands_ghz.iter().map(|f| f * 1e9).collect();
    let mut out: Box<dyn Write> = match output {
        Some(p) => Box::new(std::fs::File::create(p)?),
        None => Box::new(io::stdout().lock()),
    };
    if table {
        let t = circuit::derive_status_table_sampled(
            &el,
            &bands,
            circuit::DEFAULT_TUNABLE_DEG,
            circuit::DEFAULT_FIXED_DEG,
            samples,
        )?;
        serde_json::to_writer_pretty(&mut out, &t).map_err(Error::from)?;
        writeln!(out)?;
    } else {
        let rows = circuit::sweep(&el, &bands, samples)?;
        circuit::write_sweep_csv(out, &bands, &rows)?;
    }
    Ok(())
}

fn single_run(common: &Common, baseline: &str, trial: usize) -> Result<(), Failure> {
    let mut s = settings(common)?;
    s.output = None;
    let sinr = s.sinr_db.unwrap_or(mbirs::channel::DEFAULT_SINR_DB);
    s.sweep_sinr_db = Some(vec![sinr]);
    let mut config = s.build(SweepKind::Sinr)?;
    let baseline: Baseline = baseline.parse()?;
    config.baselines = vec![baseline];
    let r = run_pipeline(&config, baseline, 0, trial)?;
    let margin = audit_trial(&config, &r)?;
    let report = serde_json::json!({
        "baseline": baseline.id(),
        "trial": trial,
        "seed": r.seed,
        "sinr_db": sinr,
        "feasible": r.feasible,
        "total_power_w": r.feasible.then_some(r.total_power),
        "total_power_dbm": r.feasible.then(|| r.total_power_dbm()),
        "band_powers_dbm": r.band_powers.iter().map(|&p| watts_to_dbm(p)).collect::<Vec<_>>(),
        "indicator": r.indicator,
        "outer_iterations": r.outer_iterations,
        "min_sinr_margin": margin,
        "wall_ms": r.wall_ms,
    });
    println!("{}", serde_json::to_string_pretty(&report).map_err(Error::from)?);
    if !r.feasible {
        return Err(Failure::AllInfeasible);
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::SweepSinr { common, points } => {
            let mut s = settings(&common)?;
            if points.is_some() {
                s.sweep_sinr_db = points;
            }
            sweep(&common, SweepKind::Sinr, s)
        }
        Command::SweepElements { common, points } => {
            let mut s = settings(&common)?;
            if points.is_some() {
                s.sweep_elements = points;
            }
            sweep(&common, SweepKind::Elements, s)
        }
        Command::CircuitSweep { bands_ghz, samples, c_min_pf, c_max_pf, table, output } => {
            circuit_sweep(&bands_ghz, samples, c_min_pf, c_max_pf, table, output)
        }
        Command::SingleRun { common, baseline, trial } => single_run(&common, &baseline, trial),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::AllInfeasible) => {
            eprintln!("error: every trial was infeasible");
            ExitCode::from(3)
        }
        Err(Failure::Other(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
