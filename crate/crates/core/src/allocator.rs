//! Element-to-band assignment under the frequency-selective constraint.
//!
//! An element can track an arbitrary phase for at most one band. Bands it
//! does not serve see a fixed reflection (phase zero by default). The
//! assignment is searched one element at a time with every other element
//! held fixed.

use serde::{Deserialize, Serialize};

use crate::channel::{band_sinrs, ChannelSet, Scenario};
use crate::circuit::{reflection, BandStatusTable, ElementCircuit};
use crate::linalg::unit_vector;
use crate::txbf::{solve_power_min, BandBeamformers, SolveReport};
use crate::{CVec, Error, Result, C64};

/// Binary `S x M` indicator stored column-wise as the served band of every
/// element, which makes the at-most-one-band constraint structural.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct IndicatorMatrix {
    n_bands: usize,
    serves: Vec<Option<usize>>,
}

impl IndicatorMatrix {
    pub fn none(n_bands: usize, n_elements: usize) -> Self {
        Self { n_bands, serves: vec![None; n_elements] }
    }

    pub fn uniform(n_bands: usize, n_elements: usize, band: Option<usize>) -> Result<Self> {
        let mut a = Self::none(n_bands, n_elements);
        for m in 0..n_elements {
            a.set(m, band)?;
        }
        Ok(a)
    }

    /// From explicit statuses (`None` = serve no band).
    pub fn from_statuses(n_bands: usize, serves: Vec<Option<usize>>) -> Result<Self> {
        if let Some(bad) = serves.iter().flatten().find(|&&s| s >= n_bands) {
            return Err(Error::Domain(format!("band {bad} out of range for {n_bands} bands")));
        }
        Ok(Self { n_bands, serves })
    }

    /// From a dense binary matrix given as rows (one per band).
    pub fn from_rows(rows: &[Vec<u8>]) -> Result<Self> {
        let n_bands = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != m) {
            return Err(Error::Dimension("indicator rows differ in length".into()));
        }
        let mut serves = vec![None; m];
        for (element, slot) in serves.iter_mut().enumerate() {
            let mut count = 0;
            for (band, row) in rows.iter().enumerate() {
                match row[element] {
                    0 => {}
                    1 => {
                        count += 1;
                        *slot = Some(band);
                    }
                    v => return Err(Error::Domain(format!("indicator entry {v} is not binary"))),
                }
            }
            if count > 1 {
                return Err(Error::Sparsity { element, count });
            }
        }
        Ok(Self { n_bands, serves })
    }

    pub fn n_bands(&self) -> usize {
        self.n_bands
    }

    pub fn n_elements(&self) -> usize {
        self.serves.len()
    }

    pub fn status(&self, element: usize) -> Option<usize> {
        self.serves[element]
    }

    pub fn statuses(&self) -> &[Option<usize>] {
        &self.serves
    }

    pub fn set(&mut self, element: usize, band: Option<usize>) -> Result<()> {
        if let Some(b) = band {
            if b >= self.n_bands {
                return Err(Error::Domain(format!("band {b} out of range for {} bands", self.n_bands)));
            }
        }
        self.serves[element] = band;
        Ok(())
    }

    /// Row `s` of the matrix: which elements serve band `s`.
    pub fn row(&self, band: usize) -> Vec<u8> {
        self.serves.iter().map(|&x| u8::from(x == Some(band))).collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<u8>> {
        (0..self.n_bands).map(|s| self.row(s)).collect()
    }

    /// One symbol per element: `0` for none, `1..S` for the served band.
    /// With ten or more bands the symbols are separated by `.`.
    pub fn status_string(&self) -> String {
        let sym = |x: &Option<usize>| x.map_or(0, |b| b + 1).to_string();
        let parts: Vec<String> = self.serves.iter().map(sym).collect();
        if self.n_bands < 10 {
            parts.concat()
        } else {
            parts.join(".")
        }
    }

    pub fn parse_status_string(n_bands: usize, text: &str) -> Result<Self> {
        let symbols: Vec<&str> = if n_bands < 10 {
            text.split("").filter(|s| !s.is_empty()).collect()
        } else {
            text.split('.').collect()
        };
        let serves = symbols
            .iter()
            .map(|s| {
                let v: usize = s
                    .parse()
                    .map_err(|_| Error::Domain(format!("bad status symbol {s:?}")))?;
                Ok(v.checked_sub(1))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_statuses(n_bands, serves)
    }
}

/// Reflection seen by a band at an element that does not serve it.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum FixedPhase {
    /// `e^{j0} = 1`.
    #[default]
    Zero,
    /// Phases taken from the element circuit: `phase[status][band]`, where
    /// status `0` is "serve none" and status `s + 1` is "serve band `s`".
    Circuit(Vec<Vec<f64>>),
}

impl FixedPhase {
    /// Evaluates the circuit at the midpoint of each status interval of
    /// `table`. Band `s` uses its first tunable interval; "serve none" uses
    /// the first no-tuning interval.
    pub fn from_table(circuit: &ElementCircuit, table: &BandStatusTable) -> Result<Self> {
        let mut intervals = Vec::with_capacity(table.bands.len() + 1);
        let none = table
            .no_tuning()
            .next()
            .ok_or_else(|| Error::Domain("status table has no no-tuning interval".into()))?;
        intervals.push(none.interval);
        for band in 0..table.bands.len() {
            let st = table
                .tunable_for(band)
                .next()
                .ok_or_else(|| Error::Domain(format!("band {band} has no tunable interval")))?;
            intervals.push(st.interval);
        }
        let phases = intervals
            .iter()
            .map(|iv| {
                let c = 0.5 * (iv.lo + iv.hi);
                table
                    .bands
                    .iter()
                    .map(|&f| reflection(circuit, c, f).map(|r| r.phase))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::Circuit(phases))
    }

    fn phase(&self, status: Option<usize>, band: usize) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::Circuit(table) => table[status.map_or(0, |s| s + 1)][band],
        }
    }
}

/// Practical phases `theta_s .* a_s` (plus fixed values for unserved
/// entries) for every band.
pub fn practical_phases(
    ideal: &[Vec<f64>],
    indicator: &IndicatorMatrix,
    fixed: &FixedPhase,
) -> Result<Vec<Vec<f64>>> {
    if ideal.len() != indicator.n_bands() {
        return Err(Error::Dimension(format!(
            "{} phase vectors for {} bands",
            ideal.len(),
            indicator.n_bands()
        )));
    }
    if ideal.iter().any(|t| t.len() != indicator.n_elements()) {
        return Err(Error::Dimension("phase vector length differs from element count".into()));
    }
    Ok(ideal
        .iter()
        .enumerate()
        .map(|(s, theta)| {
            theta
                .iter()
                .enumerate()
                .map(|(m, &t)| {
                    let status = indicator.status(m);
                    if status == Some(s) {
                        t
                    } else {
                        fixed.phase(status, s)
                    }
                })
                .collect()
        })
        .collect())
}

/// Diagonals of the practical reflection matrices of every band.
pub fn apply_indicator(
    ideal: &[Vec<f64>],
    indicator: &IndicatorMatrix,
    fixed: &FixedPhase,
) -> Result<Vec<CVec>> {
    Ok(practical_phases(ideal, indicator, fixed)?.iter().map(|p| unit_vector(p)).collect())
}

/// Power-minimising beamformers of one band for a given reflection diagonal.
pub fn solve_band(
    channels: &ChannelSet,
    scenario: &Scenario,
    band: usize,
    diagonal: &CVec,
) -> Result<(BandBeamformers, SolveReport)> {
    let eff = channels.bands[band].effective(diagonal)?;
    solve_power_min(&eff, &scenario.sinr_targets[band], &scenario.noise_power[band])
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerEvaluation {
    /// Sum over bands; infinite when any band is infeasible.
    pub total_power: f64,
    pub feasible: bool,
    pub bands: Vec<BandBeamformers>,
    pub reports: Vec<SolveReport>,
    pub diagonals: Vec<CVec>,
}

/// Applies the indicator, re-solves every band and sums the powers.
pub fn total_power_objective(
    indicator: &IndicatorMatrix,
    ideal: &[Vec<f64>],
    channels: &ChannelSet,
    scenario: &Scenario,
    fixed: &FixedPhase,
) -> Result<PowerEvaluation> {
    let diagonals = apply_indicator(ideal, indicator, fixed)?;
    let mut bands = Vec::with_capacity(diagonals.len());
    let mut reports = Vec::with_capacity(diagonals.len());
    for (s, diag) in diagonals.iter().enumerate() {
        let (bf, report) = solve_band(channels, scenario, s, diag)?;
        bands.push(bf);
        reports.push(report);
    }
    let feasible = reports.iter().all(|r| r.status != crate::txbf::SolveStatus::Infeasible);
    let total_power = if feasible { bands.iter().map(|b| b.power).sum() } else { f64::INFINITY };
    Ok(PowerEvaluation { total_power, feasible, bands, reports, diagonals })
}

/// State of every element before the search starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "band")]
pub enum InitialIncumbent {
    /// Every element serves the band whose ideal beamformers fall furthest
    /// short of their targets under identity reflection; "none" when no band
    /// falls short.
    #[default]
    LargestShortfall,
    Band(usize),
    None,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SearchOptions {
    pub init: InitialIncumbent,
    /// Keep sweeping until a full pass changes nothing (single pass if false).
    pub repeat: bool,
    pub fixed: FixedPhase,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SearchEvent {
    /// No status of the element was feasible; the incumbent was kept.
    NoFeasibleStatus { pass: usize, element: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    pub indicator: IndicatorMatrix,
    pub total_power: f64,
    pub feasible: bool,
    pub passes: usize,
    /// Number of single-band beamformer solves performed.
    pub band_solves: usize,
    pub events: Vec<SearchEvent>,
}

/// `sum_k max(0, 1 - SINR_k / gamma_k)` of beamformers `w` under identity
/// reflection.
pub fn identity_shortfall(
    channels: &ChannelSet,
    scenario: &Scenario,
    band: usize,
    w: &BandBeamformers,
) -> Result<f64> {
    let m = channels.bands[band].n_elements();
    let eff = channels.bands[band].effective(&CVec::from_element(m, C64::new(1.0, 0.0)))?;
    let sinrs = band_sinrs(&eff, &w.w, &scenario.noise_power[band]);
    Ok(sinrs
        .iter()
        .zip(&scenario.sinr_targets[band])
        .map(|(a, g)| (1.0 - a / g).max(0.0))
        .sum())
}

fn initial_indicator(
    init: InitialIncumbent,
    beamformers: &[BandBeamformers],
    channels: &ChannelSet,
    scenario: &Scenario,
) -> Result<IndicatorMatrix> {
    let s = scenario.n_bands();
    let m = scenario.n_elements;
    let band = match init {
        InitialIncumbent::None => None,
        InitialIncumbent::Band(b) => Some(b),
        InitialIncumbent::LargestShortfall => {
            let mut best: Option<(usize, f64)> = None;
            for (b, w) in beamformers.iter().enumerate() {
                let short = identity_shortfall(channels, scenario, b, w)?;
                if short > 1e-9 && best.is_none_or(|(_, v)| short > v) {
                    best = Some((b, short));
                }
            }
            best.map(|(b, _)| b)
        }
    };
    IndicatorMatrix::uniform(s, m, band)
}

#[derive(Clone)]
struct BandState {
    power: f64,
    feasible: bool,
}

impl BandState {
    fn solve(
        channels: &ChannelSet,
        scenario: &Scenario,
        band: usize,
        ideal: &[Vec<f64>],
        indicator: &IndicatorMatrix,
        fixed: &FixedPhase,
    ) -> Result<Self> {
        let phases: Vec<f64> = ideal[band]
            .iter()
            .enumerate()
            .map(|(m, &t)| {
                let st = indicator.status(m);
                if st == Some(band) {
                    t
                } else {
                    fixed.phase(st, band)
                }
            })
            .collect();
        let (bf, report) = solve_band(channels, scenario, band, &unit_vector(&phases))?;
        let feasible = report.status != crate::txbf::SolveStatus::Infeasible;
        Ok(Self { power: bf.power, feasible })
    }
}

fn total(states: &[BandState]) -> (f64, bool) {
    let feasible = states.iter().all(|b| b.feasible);
    let power = if feasible { states.iter().map(|b| b.power).sum() } else { f64::INFINITY };
    (power, feasible)
}

/// Per-element coordinate search over the `S + 1` statuses.
///
/// Candidates are visited incumbent first, then bands in index order, then
/// "none"; a candidate replaces the best so far only when it is feasible and
/// strictly cheaper (relative margin `1e-12`), which realises the tie-break.
pub fn coordinate_search(
    ideal: &[Vec<f64>],
    beamformers: &[BandBeamformers],
    channels: &ChannelSet,
    scenario: &Scenario,
    opts: &SearchOptions,
) -> Result<SearchOutcome> {
    let s = scenario.n_bands();
    let m = scenario.n_elements;
    if ideal.len() != s || beamformers.len() != s || channels.bands.len() != s {
        return Err(Error::Dimension(format!(
            "{s} bands but {} phase vectors, {} beamformer sets, {} channel sets",
            ideal.len(),
            beamformers.len(),
            channels.bands.len()
        )));
    }
    if let InitialIncumbent::Band(b) = opts.init {
        if b >= s {
            return Err(Error::Domain(format!("initial band {b} out of range")));
        }
    }
    let mut indicator = initial_indicator(opts.init, beamformers, channels, scenario)?;
    let mut states = (0..s)
        .map(|b| BandState::solve(channels, scenario, b, ideal, &indicator, &opts.fixed))
        .collect::<Result<Vec<_>>>()?;
    let mut band_solves = s;
    let mut events = Vec::new();
    let mut passes = 0;

    loop {
        passes += 1;
        let mut changed = false;
        for element in 0..m {
            let incumbent = indicator.status(element);
            let (inc_power, inc_feasible) = total(&states);
            let mut best: Option<(Option<usize>, f64, Vec<BandState>)> =
                inc_feasible.then(|| (incumbent, inc_power, states.clone()));
            let candidates = (0..s).map(Some).chain(std::iter::once(None));
            for cand in candidates.filter(|&c| c != incumbent) {
                let mut trial = indicator.clone();
                trial.set(element, cand)?;
                let mut trial_states = states.clone();
                // Only the bands whose diagonal entry changes need a re-solve.
                for (b, state) in trial_states.iter_mut().enumerate() {
                    let touched = incumbent == Some(b)
                        || cand == Some(b)
                        || opts.fixed.phase(incumbent, b) != opts.fixed.phase(cand, b);
                    if touched {
                        *state = BandState::solve(channels, scenario, b, ideal, &trial, &opts.fixed)?;
                        band_solves += 1;
                    }
                }
                let (power, feasible) = total(&trial_states);
                if !feasible {
                    continue;
                }
                let better = match &best {
                    None => true,
                    Some((_, p, _)) => power < p * (1.0 - 1e-12),
                };
                if better {
                    best = Some((cand, power, trial_states));
                }
            }
            match best {
                Some((status, _, st)) => {
                    if status != incumbent {
                        changed = true;
                    }
                    indicator.set(element, status)?;
                    states = st;
                }
                None => events.push(SearchEvent::NoFeasibleStatus { pass: passes, element }),
            }
        }
        if !opts.repeat || !changed || passes >= m * (s + 1) {
            break;
        }
    }
    let (total_power, feasible) = total(&states);
    Ok(SearchOutcome { indicator, total_power, feasible, passes, band_solves, events })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn close(a: C64, b: C64) -> bool {
        (a - b).norm() < 1e-12
    }

    #[test]
    fn all_zero_indicator_gives_identity() {
        let a = IndicatorMatrix::none(2, 3);
        let diags = apply_indicator(&[vec![0.3; 3], vec![1.1; 3]], &a, &FixedPhase::Zero).unwrap();
        for d in diags {
            assert!(d.iter().all(|&z| z == C64::new(1.0, 0.0)));
        }
    }

    #[test]
    fn full_rows_give_ideal_matrix() {
        let theta = vec![0.2, 1.7, 4.0];
        let a = IndicatorMatrix::uniform(1, 3, Some(0)).unwrap();
        let diag = &apply_indicator(&[theta.clone()], &a, &FixedPhase::Zero).unwrap()[0];
        for (z, t) in diag.iter().zip(&theta) {
            assert!(close(*z, C64::from_polar(1.0, *t)));
        }
    }

    #[test]
    fn two_band_substitution() {
        let a = IndicatorMatrix::from_rows(&[vec![1, 0], vec![0, 1]]).unwrap();
        let diags = apply_indicator(&[vec![FRAC_PI_2, PI], vec![PI, FRAC_PI_2]], &a, &FixedPhase::Zero).unwrap();
        let j = C64::new(0.0, 1.0);
        let one = C64::new(1.0, 0.0);
        assert!(close(diags[0][0], j) && diags[0][1] == one);
        assert!(diags[1][0] == one && close(diags[1][1], j));
    }

    #[test]
    fn sparsity_violation_is_rejected() {
        let err = IndicatorMatrix::from_rows(&[vec![1, 1], vec![0, 1]]).unwrap_err();
        assert!(matches!(err, Error::Sparsity { element: 1, count: 2 }));
        assert!(IndicatorMatrix::from_rows(&[vec![2]]).is_err());
        assert!(IndicatorMatrix::from_statuses(2, vec![Some(2)]).is_err());
    }

    #[test]
    fn status_string_roundtrip() {
        let a = IndicatorMatrix::from_statuses(3, vec![None, Some(0), Some(2), None]).unwrap();
        assert_eq!(a.status_string(), "0130");
        assert_eq!(IndicatorMatrix::parse_status_string(3, "0130").unwrap(), a);
        assert_eq!(IndicatorMatrix::from_rows(&a.to_rows()).unwrap(), a);
        let wide = IndicatorMatrix::from_statuses(12, vec![Some(11), None]).unwrap();
        assert_eq!(wide.status_string(), "12.0");
        assert_eq!(IndicatorMatrix::parse_status_string(12, "12.0").unwrap(), wide);
    }

    #[test]
    fn circuit_fixed_phases_come_from_the_table() {
        let circuit = ElementCircuit::varactor_preset();
        let bands = [1.885e9, 2.345e9, 2.605e9];
        let table = crate::circuit::derive_status_table(&circuit, &bands, crate::circuit::DEFAULT_TUNABLE_DEG, crate::circuit::DEFAULT_FIXED_DEG).unwrap();
        let fixed = FixedPhase::from_table(&circuit, &table).unwrap();
        let a = IndicatorMatrix::from_statuses(3, vec![None, Some(1)]).unwrap();
        let p = practical_phases(&[vec![9.0; 2], vec![9.0; 2], vec![9.0; 2]], &a, &fixed).unwrap();
        assert_eq!(p[1][1], 9.0);
        let FixedPhase::Circuit(table) = &fixed else { unreachable!() };
        // Element 0 serves none, element 1 serves band 1.
        assert_eq!(p[0][0], table[0][0]);
        assert_eq!(p[0][1], table[2][0]);
        assert_ne!(p[0][0], 0.0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn apply_is_idempotent(statuses in proptest::collection::vec(0usize..4, 1..8), seed in 0u64..1000) {
                let s = 3;
                let m = statuses.len();
                let a = IndicatorMatrix::from_statuses(s, statuses.iter().map(|&x| x.checked_sub(1)).collect()).unwrap();
                let ideal: Vec<Vec<f64>> = (0..s)
                    .map(|b| (0..m).map(|i| ((seed + 7 * b as u64 + i as u64) % 13) as f64 * 0.5).collect())
                    .collect();
                let once = practical_phases(&ideal, &a, &FixedPhase::Zero).unwrap();
                let twice = practical_phases(&once, &a, &FixedPhase::Zero).unwrap();
                prop_assert_eq!(once, twice);
            }
        }
    }
}
