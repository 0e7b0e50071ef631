//! Experiment orchestration: the per-band alternation, the full
//! assignment pipeline, the comparison baselines and Monte Carlo sweeps.
//!
//! Every trial derives its seed from the experiment seed and the trial index
//! only, so all sweep points and baselines of one trial see the same channel
//! realisation.

use std::fmt;
use std::io::Write;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::allocator::{
    coordinate_search, total_power_objective, FixedPhase, IndicatorMatrix, InitialIncumbent,
    SearchOptions,
};
use crate::channel::{
    band_sinrs, generate, watts_to_dbm, ChannelSet, PathLossExponents, Scenario,
    UserPlacement, DEFAULT_NOISE_DBM, DEFAULT_SINR_DB,
};
use crate::linalg::{phases_of, unit_vector};
use crate::phaseopt::{build_objective, optimize_phases, PhaseOptions, PhaseVector};
use crate::txbf::{solve_power_min, BandBeamformers, BeamformerSet, SolveReport, SolveStatus};
use crate::{CVec, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Baseline {
    /// Every band gets its own unconstrained reflection vector.
    Ideal,
    /// Per-band alternation, element assignment search, final re-solve.
    MultiBandSelection,
    /// All elements serve one band; the others see identity reflection.
    CertainBand,
    /// Independent uniform random phases per band.
    RandomIrs,
    /// Reflected path removed.
    NoIrs,
}

impl Baseline {
    pub const ALL: [Baseline; 5] = [
        Baseline::Ideal,
        Baseline::MultiBandSelection,
        Baseline::CertainBand,
        Baseline::RandomIrs,
        Baseline::NoIrs,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Baseline::Ideal => "ideal",
            Baseline::MultiBandSelection => "multi-band-selection",
            Baseline::CertainBand => "certain-band",
            Baseline::RandomIrs => "random-irs",
            Baseline::NoIrs => "no-irs",
        }
    }

    pub fn uses_irs(self) -> bool {
        self != Baseline::NoIrs
    }
}

impl fmt::Display for Baseline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Baseline {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Baseline::ALL
            .into_iter()
            .find(|b| b.id() == s)
            .ok_or_else(|| Error::Config(format!("unknown baseline {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Sweep {
    SinrDb(Vec<f64>),
    Elements(Vec<usize>),
}

impl Sweep {
    pub fn variable(&self) -> &'static str {
        match self {
            Sweep::SinrDb(_) => "sinr_db",
            Sweep::Elements(_) => "elements",
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Sweep::SinrDb(v) => v.len(),
            Sweep::Elements(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn value(&self, point: usize) -> f64 {
        match self {
            Sweep::SinrDb(v) => v[point],
            Sweep::Elements(v) => v[point] as f64,
        }
    }

    /// The scenario at sweep point `point`.
    pub fn apply(&self, scenario: &Scenario, point: usize) -> Scenario {
        let mut s = scenario.clone();
        match self {
            Sweep::SinrDb(v) => s.set_sinr_db(v[point]),
            Sweep::Elements(v) => s.n_elements = v[point],
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlternationOptions {
    /// Relative power change below which the alternation stops.
    pub tol: f64,
    pub max_outer: usize,
    pub phase: PhaseOptions,
}

impl Default for AlternationOptions {
    fn default() -> Self {
        Self { tol: 1e-4, max_outer: 30, phase: PhaseOptions::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub baselines: Vec<Baseline>,
    pub sweep: Sweep,
    pub n_trials: usize,
    pub seed: u64,
    /// Zero-based band served by the certain-band baseline.
    pub certain_band: usize,
    pub incumbent: InitialIncumbent,
    pub repeat_search: bool,
    pub alternation: AlternationOptions,
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(scenario: Scenario, sweep: Sweep) -> Self {
        Self {
            scenario,
            baselines: Baseline::ALL.to_vec(),
            sweep,
            n_trials: 50,
            seed: 1,
            certain_band: 0,
            incumbent: InitialIncumbent::default(),
            repeat_search: false,
            alternation: AlternationOptions::default(),
            output: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_trials == 0 {
            return Err(Error::Config("n_trials must be at least 1".into()));
        }
        if self.sweep.is_empty() {
            return Err(Error::Config("sweep has no points".into()));
        }
        if self.baselines.is_empty() {
            return Err(Error::Config("no baselines selected".into()));
        }
        let s = self.scenario.n_bands();
        if self.certain_band >= s {
            return Err(Error::Config(format!(
                "certain band {} out of range for {s} bands",
                self.certain_band + 1
            )));
        }
        if let InitialIncumbent::Band(b) = self.incumbent {
            if b >= s {
                return Err(Error::Config(format!("incumbent band {} out of range", b + 1)));
            }
        }
        if self.alternation.tol.is_nan() || self.alternation.tol <= 0.0 || self.alternation.max_outer == 0 {
            return Err(Error::Config("alternation needs tol > 0 and max_outer >= 1".into()));
        }
        for p in 0..self.sweep.len() {
            if let Sweep::SinrDb(v) = &self.sweep {
                if !v[p].is_finite() {
                    return Err(Error::Config("SINR targets must be finite".into()));
                }
            }
            self.sweep.apply(&self.scenario, p).validate()?;
        }
        Ok(())
    }

    /// Scenario of one trial at one sweep point.
    pub fn trial_scenario(&self, point: usize, trial: usize) -> Scenario {
        let mut s = self.sweep.apply(&self.scenario, point);
        s.rng_seed = trial_seed(self.seed, trial);
        s
    }

    fn search_options(&self) -> SearchOptions {
        SearchOptions { init: self.incumbent, repeat: self.repeat_search, fixed: FixedPhase::Zero }
    }
}

/// Seed of trial `trial`, independent of sweep point and baseline.
pub fn trial_seed(seed: u64, trial: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    rng.next_u64()
}

pub const INIT_PHASES: u64 = 1;
pub const RANDOM_PHASES: u64 = 2;

/// Uniform phases in `[0, 2pi)` for `band`, drawn from a stream disjoint
/// from the channel streams. Longer vectors extend shorter ones.
pub fn random_phases(seed: u64, purpose: u64, band: usize, n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((purpose << 56) | band as u64);
    (0..n).map(|_| rng.random::<f64>() * std::f64::consts::TAU).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlternationResult {
    /// IRS phases `theta` (the diagonal is `e^{j theta}`).
    pub phases: Vec<f64>,
    pub beamformers: BandBeamformers,
    pub report: SolveReport,
    /// Band power after the initial solve and after every accepted round.
    pub trace: Vec<f64>,
    pub outer_iterations: usize,
    pub converged: bool,
}

fn is_infeasible(report: &SolveReport) -> bool {
    report.status == SolveStatus::Infeasible
}

/// Alternates the beamformer solve and the phase optimisation for one band
/// with an unconstrained reflection vector.
///
/// A round whose power does not improve is discarded and ends the
/// alternation, so the trace is non-increasing.
pub fn run_single_band_alternation(
    band: usize,
    channels: &ChannelSet,
    scenario: &Scenario,
    opts: &AlternationOptions,
    init_phases: &[f64],
) -> Result<AlternationResult> {
    let bc = channels
        .bands
        .get(band)
        .ok_or_else(|| Error::Dimension(format!("band {band} out of range")))?;
    if init_phases.len() != bc.n_elements() {
        return Err(Error::Dimension(format!(
            "{} initial phases for {} elements",
            init_phases.len(),
            bc.n_elements()
        )));
    }
    let targets = &scenario.sinr_targets[band];
    let noise = &scenario.noise_power[band];
    let solve = |diag: &CVec| -> Result<(BandBeamformers, SolveReport)> {
        solve_power_min(&bc.effective(diag)?, targets, noise)
    };

    let mut diag = unit_vector(init_phases);
    let (mut bf, mut report) = solve(&diag)?;
    if is_infeasible(&report) {
        return Err(Error::Infeasible(format!("band {band}: initial beamformer solve")));
    }
    let mut trace = vec![bf.power];
    let mut outer = 0;
    let mut converged = false;
    while outer < opts.max_outer {
        outer += 1;
        let obj = build_objective(&bc.h_r, &bc.g, &bc.h_d, &bf.w, targets, noise)?;
        let start = PhaseVector::new(diag.conjugate())?;
        let res = optimize_phases(&obj, &start, &opts.phase)?;
        let next_diag = res.phases.as_vec().conjugate();
        let (next_bf, next_report) = solve(&next_diag)?;
        if is_infeasible(&next_report) || next_bf.power > bf.power {
            converged = true;
            break;
        }
        let change = (bf.power - next_bf.power) / bf.power;
        diag = next_diag;
        bf = next_bf;
        report = next_report;
        trace.push(bf.power);
        if change < opts.tol {
            converged = true;
            break;
        }
    }
    Ok(AlternationResult {
        phases: phases_of(&diag),
        beamformers: bf,
        report,
        trace,
        outer_iterations: outer,
        converged,
    })
}

/// Beamformers and reflection diagonals of a solved trial. `diagonals` is
/// `None` when the reflected path is excluded.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialSolution {
    pub beamformers: BeamformerSet,
    pub diagonals: Option<Vec<CVec>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub baseline: Baseline,
    pub sweep_variable: &'static str,
    pub sweep_value: f64,
    pub point: usize,
    pub trial: usize,
    pub seed: u64,
    pub feasible: bool,
    /// Watts; `NaN` when infeasible.
    pub total_power: f64,
    pub band_powers: Vec<f64>,
    pub outer_iterations: usize,
    pub wall_ms: f64,
    /// Status string of the final assignment, where one was searched or
    /// fixed.
    pub indicator: Option<String>,
    pub solution: Option<TrialSolution>,
}

impl TrialResult {
    pub fn total_power_dbm(&self) -> f64 {
        watts_to_dbm(self.total_power)
    }
}

struct Solved {
    feasible: bool,
    bands: Vec<BandBeamformers>,
    diagonals: Option<Vec<CVec>>,
    outer_iterations: usize,
    indicator: Option<String>,
}

impl Solved {
    fn infeasible(outer_iterations: usize) -> Self {
        Self { feasible: false, bands: Vec::new(), diagonals: None, outer_iterations, indicator: None }
    }
}

fn alternate_all(
    channels: &ChannelSet,
    scenario: &Scenario,
    opts: &AlternationOptions,
    bands: impl Iterator<Item = usize>,
) -> Result<Vec<(usize, AlternationResult)>> {
    bands
        .map(|s| {
            let init = random_phases(scenario.rng_seed, INIT_PHASES, s, scenario.n_elements);
            run_single_band_alternation(s, channels, scenario, opts, &init).map(|r| (s, r))
        })
        .collect()
}

fn solve_diagonals(channels: &ChannelSet, scenario: &Scenario, diagonals: Vec<CVec>) -> Result<Solved> {
    let mut bands = Vec::with_capacity(diagonals.len());
    for (s, diag) in diagonals.iter().enumerate() {
        let eff = channels.bands[s].effective(diag)?;
        let (bf, report) = solve_power_min(&eff, &scenario.sinr_targets[s], &scenario.noise_power[s])?;
        if is_infeasible(&report) {
            return Ok(Solved::infeasible(0));
        }
        bands.push(bf);
    }
    Ok(Solved { feasible: true, bands, diagonals: Some(diagonals), outer_iterations: 0, indicator: None })
}

fn solve_baseline(
    config: &ExperimentConfig,
    baseline: Baseline,
    channels: &ChannelSet,
    scenario: &Scenario,
) -> Result<Solved> {
    let opts = &config.alternation;
    let s = scenario.n_bands();
    let m = scenario.n_elements;
    let seed = scenario.rng_seed;
    let alternated = |bands: Vec<usize>| match alternate_all(channels, scenario, opts, bands.into_iter()) {
        Ok(v) => Ok(Some(v)),
        Err(Error::Infeasible(_)) => Ok(None),
        Err(e) => Err(e),
    };
    match baseline {
        Baseline::Ideal => {
            let Some(runs) = alternated((0..s).collect())? else { return Ok(Solved::infeasible(0)) };
            let outer = runs.iter().map(|(_, r)| r.outer_iterations).sum();
            let diagonals = runs.iter().map(|(_, r)| unit_vector(&r.phases)).collect();
            let bands = runs.into_iter().map(|(_, r)| r.beamformers).collect();
            Ok(Solved { feasible: true, bands, diagonals: Some(diagonals), outer_iterations: outer, indicator: None })
        }
        Baseline::MultiBandSelection => {
            let Some(runs) = alternated((0..s).collect())? else { return Ok(Solved::infeasible(0)) };
            let outer = runs.iter().map(|(_, r)| r.outer_iterations).sum();
            let ideal: Vec<Vec<f64>> = runs.iter().map(|(_, r)| r.phases.clone()).collect();
            let bfs: Vec<BandBeamformers> = runs.into_iter().map(|(_, r)| r.beamformers).collect();
            let search = coordinate_search(&ideal, &bfs, channels, scenario, &config.search_options())?;
            let last = total_power_objective(&search.indicator, &ideal, channels, scenario, &FixedPhase::Zero)?;
            if !last.feasible {
                return Ok(Solved::infeasible(outer));
            }
            Ok(Solved {
                feasible: true,
                bands: last.bands,
                diagonals: Some(last.diagonals),
                outer_iterations: outer,
                indicator: Some(search.indicator.status_string()),
            })
        }
        Baseline::CertainBand => {
            let c = config.certain_band;
            let Some(runs) = alternated(vec![c])? else { return Ok(Solved::infeasible(0)) };
            let (_, run) = &runs[0];
            let mut ideal = vec![vec![0.0; m]; s];
            ideal[c] = run.phases.clone();
            let indicator = IndicatorMatrix::uniform(s, m, Some(c))?;
            let eval = total_power_objective(&indicator, &ideal, channels, scenario, &FixedPhase::Zero)?;
            if !eval.feasible {
                return Ok(Solved::infeasible(run.outer_iterations));
            }
            Ok(Solved {
                feasible: true,
                bands: eval.bands,
                diagonals: Some(eval.diagonals),
                outer_iterations: run.outer_iterations,
                indicator: Some(indicator.status_string()),
            })
        }
        Baseline::RandomIrs => {
            let diagonals = (0..s).map(|b| unit_vector(&random_phases(seed, RANDOM_PHASES, b, m))).collect();
            solve_diagonals(channels, scenario, diagonals)
        }
        Baseline::NoIrs => {
            let mut bands = Vec::with_capacity(s);
            for (b, bc) in channels.bands.iter().enumerate() {
                let (bf, report) =
                    solve_power_min(&bc.direct_only(), &scenario.sinr_targets[b], &scenario.noise_power[b])?;
                if is_infeasible(&report) {
                    return Ok(Solved::infeasible(0));
                }
                bands.push(bf);
            }
            Ok(Solved { feasible: true, bands, diagonals: None, outer_iterations: 0, indicator: None })
        }
    }
}

/// Runs one baseline on one trial at one sweep point. Infeasible trials come
/// back with `feasible == false` rather than as an error.
pub fn run_pipeline(
    config: &ExperimentConfig,
    baseline: Baseline,
    point: usize,
    trial: usize,
) -> Result<TrialResult> {
    let started = Instant::now();
    let scenario = config.trial_scenario(point, trial);
    let channels = generate(&scenario)?;
    let solved = solve_baseline(config, baseline, &channels, &scenario)?;
    let band_powers: Vec<f64> = solved.bands.iter().map(|b| b.power).collect();
    let total_power = if solved.feasible { band_powers.iter().sum() } else { f64::NAN };
    let solution = solved.feasible.then(|| TrialSolution {
        beamformers: BeamformerSet::new(solved.bands),
        diagonals: solved.diagonals,
    });
    Ok(TrialResult {
        baseline,
        sweep_variable: config.sweep.variable(),
        sweep_value: config.sweep.value(point),
        point,
        trial,
        seed: scenario.rng_seed,
        feasible: solved.feasible,
        total_power,
        band_powers,
        outer_iterations: solved.outer_iterations,
        wall_ms: started.elapsed().as_secs_f64() * 1e3,
        indicator: solved.indicator,
        solution,
    })
}

/// Smallest `SINR_k - gamma_k` (linear) over every user of a feasible trial,
/// recomputed from the stored beamformers and reflection diagonals on freshly
/// generated channels. `None` for infeasible trials.
pub fn audit_trial(config: &ExperimentConfig, result: &TrialResult) -> Result<Option<f64>> {
    let Some(sol) = &result.solution else { return Ok(None) };
    let scenario = config.trial_scenario(result.point, result.trial);
    let channels = generate(&scenario)?;
    let mut worst = f64::INFINITY;
    for (s, bc) in channels.bands.iter().enumerate() {
        let eff = match &sol.diagonals {
            Some(d) => bc.effective(&d[s])?,
            None => bc.direct_only(),
        };
        let sinrs = band_sinrs(&eff, &sol.beamformers.bands[s].w, &scenario.noise_power[s]);
        for (a, g) in sinrs.iter().zip(&scenario.sinr_targets[s]) {
            worst = worst.min(a - g);
        }
    }
    Ok(Some(worst))
}

pub const CSV_HEADER: [&str; 9] = [
    "baseline",
    "sweep_variable",
    "sweep_value",
    "trial",
    "seed",
    "total_power_dbm",
    "outage",
    "outer_iterations",
    "wall_ms",
];

fn csv_record(r: &TrialResult) -> [String; 9] {
    [
        r.baseline.id().to_string(),
        r.sweep_variable.to_string(),
        r.sweep_value.to_string(),
        r.trial.to_string(),
        r.seed.to_string(),
        if r.feasible { r.total_power_dbm().to_string() } else { String::new() },
        u8::from(!r.feasible).to_string(),
        r.outer_iterations.to_string(),
        format!("{:.3}", r.wall_ms),
    ]
}

pub fn write_results_csv<W: Write>(out: W, rows: &[TrialResult]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record(csv_record(r))?;
    }
    w.flush()?;
    Ok(())
}

/// Runs one sweep point: every baseline and trial, in parallel, sorted by
/// baseline (config order) then trial.
pub fn run_point(config: &ExperimentConfig, point: usize) -> Result<Vec<TrialResult>> {
    let jobs: Vec<(usize, Baseline, usize)> = config
        .baselines
        .iter()
        .enumerate()
        .flat_map(|(i, &b)| (0..config.n_trials).map(move |t| (i, b, t)))
        .collect();
    let mut rows = jobs
        .par_iter()
        .map(|&(i, b, t)| run_pipeline(config, b, point, t).map(|r| (i, r)))
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by_key(|(i, r)| (*i, r.trial));
    Ok(rows.into_iter().map(|(_, r)| r).collect())
}

/// Runs every sweep point. When `config.output` is set the CSV is written
/// point by point and flushed, so an interrupted run keeps finished points.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<TrialResult>> {
    config.validate()?;
    let mut writer = match &config.output {
        Some(path) => {
            let mut w = csv::Writer::from_path(path)?;
            w.write_record(CSV_HEADER)?;
            w.flush()?;
            Some(w)
        }
        None => None,
    };
    let mut all = Vec::new();
    for point in 0..config.sweep.len() {
        let rows = run_point(config, point)?;
        if let Some(w) = writer.as_mut() {
            for r in &rows {
                w.write_record(csv_record(r))?;
            }
            w.flush()?;
        }
        all.extend(rows);
    }
    Ok(all)
}

/// Aggregate of one baseline at one sweep point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub baseline: Baseline,
    pub sweep_variable: &'static str,
    pub sweep_value: f64,
    pub trials: usize,
    pub feasible: usize,
    /// Mean of the feasible powers in watts; `NaN` if none.
    pub mean_power_w: f64,
    pub mean_power_dbm: f64,
    pub median_power_dbm: f64,
    pub outage_rate: f64,
    pub mean_wall_ms: f64,
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Groups results by (sweep point, baseline), in order of first appearance.
pub fn summarize(rows: &[TrialResult]) -> Vec<SummaryRow> {
    let mut keys: Vec<(usize, Baseline)> = Vec::new();
    for r in rows {
        if !keys.contains(&(r.point, r.baseline)) {
            keys.push((r.point, r.baseline));
        }
    }
    keys.into_iter()
        .map(|(point, baseline)| {
            let group: Vec<&TrialResult> =
                rows.iter().filter(|r| r.point == point && r.baseline == baseline).collect();
            let powers: Vec<f64> = group.iter().filter(|r| r.feasible).map(|r| r.total_power).collect();
            let mean = if powers.is_empty() {
                f64::NAN
            } else {
                powers.iter().sum::<f64>() / powers.len() as f64
            };
            SummaryRow {
                baseline,
                sweep_variable: group[0].sweep_variable,
                sweep_value: group[0].sweep_value,
                trials: group.len(),
                feasible: powers.len(),
                mean_power_w: mean,
                mean_power_dbm: watts_to_dbm(mean),
                median_power_dbm: median(powers.iter().map(|&p| watts_to_dbm(p)).collect()),
                outage_rate: (group.len() - powers.len()) as f64 / group.len() as f64,
                mean_wall_ms: group.iter().map(|r| r.wall_ms).sum::<f64>() / group.len() as f64,
            }
        })
        .collect()
}

pub fn write_summary_csv<W: Write>(out: W, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "baseline",
        "sweep_variable",
        "sweep_value",
        "trials",
        "feasible",
        "mean_power_dbm",
        "median_power_dbm",
        "outage_rate",
        "mean_wall_ms",
    ])?;
    for r in rows {
        w.write_record([
            r.baseline.id().to_string(),
            r.sweep_variable.to_string(),
            r.sweep_value.to_string(),
            r.trials.to_string(),
            r.feasible.to_string(),
            format!("{:.4}", r.mean_power_dbm),
            format!("{:.4}", r.median_power_dbm),
            format!("{:.4}", r.outage_rate),
            format!("{:.3}", r.mean_wall_ms),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    #[default]
    Desk,
    FullScale,
}

impl Preset {
    pub fn scenario(self) -> Scenario {
        match self {
            Preset::Desk => Scenario::desk(),
            Preset::FullScale => Scenario::full_scale(),
        }
    }
}

/// Experiment settings as read from a TOML file or the command line. Every
/// field is optional; [`Settings::overlay`] lets later sources win and
/// [`Settings::build`] fills the remaining defaults.
///
/// ```toml
/// preset = "desk"            # or "full-scale"
/// bands_ghz = [1.885, 2.345]
/// n_tx = 4
/// users = 2
/// elements = 16
/// sinr_db = 5.0              # fixed target for element sweeps
/// noise_dbm = -80.0
/// placement = "disc"         # "circle" | "fixed"
/// baselines = ["ideal", "multi-band-selection", "certain-band", "random-irs", "no-irs"]
/// seed = 1
/// trials = 50
/// certain_band = 1           # one-based
/// incumbent = "shortfall"    # "none" or a one-based band number
/// repeat_search = false
/// sweep_sinr_db = [0.0, 2.0, 4.0, 6.0]
/// sweep_elements = [8, 16, 32]
/// tol = 1e-4
/// max_outer = 30
/// ```
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    pub preset: Option<Preset>,
    pub bands_ghz: Option<Vec<f64>>,
    pub n_tx: Option<usize>,
    pub users: Option<usize>,
    pub elements: Option<usize>,
    pub sinr_db: Option<f64>,
    pub noise_dbm: Option<f64>,
    pub placement: Option<UserPlacement>,
    pub bs_irs_distance: Option<f64>,
    pub bs_user_distance: Option<f64>,
    pub irs_user_distance: Option<f64>,
    pub reference_loss_db: Option<f64>,
    pub pathloss_exponents: Option<PathLossExponents>,
    pub baselines: Option<Vec<Baseline>>,
    pub seed: Option<u64>,
    pub trials: Option<usize>,
    pub certain_band: Option<usize>,
    pub incumbent: Option<String>,
    pub repeat_search: Option<bool>,
    pub sweep_sinr_db: Option<Vec<f64>>,
    pub sweep_elements: Option<Vec<usize>>,
    pub tol: Option<f64>,
    pub max_outer: Option<usize>,
    pub output: Option<PathBuf>,
}

macro_rules! overlay_fields {
    ($base:ident, $top:ident, $($f:ident),*) => {
        $( if $top.$f.is_some() { $base.$f = $top.$f; } )*
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepKind {
    Sinr,
    Elements,
}

pub const DEFAULT_SWEEP_SINR_DB: [f64; 4] = [0.0, 2.0, 4.0, 6.0];
pub const DEFAULT_SWEEP_ELEMENTS: [usize; 3] = [8, 16, 32];

pub fn parse_incumbent(text: &str) -> Result<InitialIncumbent> {
    match text {
        "shortfall" | "largest-shortfall" => Ok(InitialIncumbent::LargestShortfall),
        "none" => Ok(InitialIncumbent::None),
        n => match n.parse::<usize>() {
            Ok(b) if b >= 1 => Ok(InitialIncumbent::Band(b - 1)),
            _ => Err(Error::Config(format!("bad incumbent {text:?}"))),
        },
    }
}

impl Settings {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Fields set in `top` replace those in `self`.
    pub fn overlay(mut self, top: Settings) -> Self {
        overlay_fields!(
            self, top, preset, bands_ghz, n_tx, users, elements, sinr_db, noise_dbm, placement,
            bs_irs_distance, bs_user_distance, irs_user_distance, reference_loss_db,
            pathloss_exponents, baselines, seed, trials, certain_band, incumbent, repeat_search,
            sweep_sinr_db, sweep_elements, tol, max_outer, output
        );
        self
    }

    pub fn scenario(&self) -> Result<Scenario> {
        let mut s = self.preset.unwrap_or_default().scenario();
        if let Some(b) = &self.bands_ghz {
            s.bands_hz = b.iter().map(|f| f * 1e9).collect();
            let users = s.users_per_band[0];
            s.users_per_band = vec![users; s.bands_hz.len()];
        }
        s.set_users(self.users.unwrap_or(s.users_per_band[0]));
        if let Some(v) = self.n_tx {
            s.n_tx = v;
        }
        if let Some(v) = self.elements {
            s.n_elements = v;
        }
        s.set_sinr_db(self.sinr_db.unwrap_or(DEFAULT_SINR_DB));
        s.set_noise_dbm(self.noise_dbm.unwrap_or(DEFAULT_NOISE_DBM));
        if let Some(v) = self.placement {
            s.user_placement = v;
        }
        if let Some(v) = self.bs_irs_distance {
            s.bs_irs_distance = v;
        }
        if let Some(v) = self.bs_user_distance {
            s.bs_user_distance = v;
        }
        if let Some(v) = self.irs_user_distance {
            s.irs_user_distance = v;
        }
        if let Some(v) = self.reference_loss_db {
            s.reference_loss_db = v;
        }
        if let Some(v) = self.pathloss_exponents {
            s.pathloss_exponents = v;
        }
        if let Some(seed) = self.seed {
            s.rng_seed = seed;
        }
        s.validate()?;
        Ok(s)
    }

    pub fn build(&self, kind: SweepKind) -> Result<ExperimentConfig> {
        let scenario = self.scenario()?;
        let sweep = match kind {
            SweepKind::Sinr => Sweep::SinrDb(
                self.sweep_sinr_db.clone().unwrap_or_else(|| DEFAULT_SWEEP_SINR_DB.to_vec()),
            ),
            SweepKind::Elements => Sweep::Elements(
                self.sweep_elements.clone().unwrap_or_else(|| DEFAULT_SWEEP_ELEMENTS.to_vec()),
            ),
        };
        let mut config = ExperimentConfig::new(scenario, sweep);
        if let Some(b) = &self.baselines {
            config.baselines = b.clone();
        }
        if let Some(v) = self.seed {
            config.seed = v;
        }
        if let Some(v) = self.trials {
            config.n_trials = v;
        }
        if let Some(v) = self.certain_band {
            if v == 0 {
                return Err(Error::Config("certain_band is one-based".into()));
            }
            config.certain_band = v - 1;
        }
        if let Some(v) = &self.incumbent {
            config.incumbent = parse_incumbent(v)?;
        }
        if let Some(v) = self.repeat_search {
            config.repeat_search = v;
        }
        if let Some(v) = self.tol {
            config.alternation.tol = v;
        }
        if let Some(v) = self.max_outer {
            config.alternation.max_outer = v;
        }
        config.output = self.output.clone();
        config.validate()?;
        Ok(config)
    }
}
