//! Equivalent-circuit model of a varactor-tuned reflecting element.
//!
//! An element is a parallel resonator: inductance `L1` in parallel with a
//! series `L2`-`C`-`R` branch. The element reflects an incident wave with
//! coefficient `(Z - Z0) / (Z + Z0)`, so a single capacitance setting gives a
//! different phase at every carrier frequency. Sweeping the capacitance over
//! its range and measuring, per band, how much phase each sub-range can reach
//! yields the band status table: capacitance ranges in which the element is
//! tunable for exactly one band while looking (almost) fixed to the others.

use std::f64::consts::{PI, TAU};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::{Error, Result, C64};

/// Default number of capacitance samples per sweep.
pub const DEFAULT_SAMPLES: usize = 1001;
/// Default minimum span (degrees) for a band to count as tunable.
pub const DEFAULT_TUNABLE_DEG: f64 = 180.0;
/// Default maximum span (degrees) for a band to count as fixed.
pub const DEFAULT_FIXED_DEG: f64 = 60.0;

/// Free-space wave impedance in ohms.
pub const FREE_SPACE_OHMS: f64 = 377.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElementCircuit {
    pub l1: f64,
    pub l2: f64,
    pub r: f64,
    pub z0: f64,
    pub c_min: f64,
    pub c_max: f64,
}

impl ElementCircuit {
    pub fn new(l1: f64, l2: f64, r: f64, z0: f64, c_min: f64, c_max: f64) -> Result<Self> {
        let circuit = Self { l1, l2, r, z0, c_min, c_max };
        circuit.validate()?;
        Ok(circuit)
    }

    /// SMV1231-style varactor element: 2.5 nH / 0.7 nH / 1 ohm, tuned over
    /// 0.5 pF to 2.6 pF.
    pub fn varactor_preset() -> Self {
        Self {
            l1: 2.5e-9,
            l2: 0.7e-9,
            r: 1.0,
            z0: FREE_SPACE_OHMS,
            c_min: 0.5e-12,
            c_max: 2.6e-12,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.l1, self.l2, self.r, self.z0, self.c_min, self.c_max]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Domain("circuit parameters must be finite".into()));
        }
        if self.l1 <= 0.0 || self.l2 <= 0.0 {
            return Err(Error::Domain("inductances must be positive".into()));
        }
        if self.r < 0.0 {
            return Err(Error::Domain("resistance must be non-negative".into()));
        }
        if self.z0 <= 0.0 {
            return Err(Error::Domain("reference impedance must be positive".into()));
        }
        if !(self.c_min > 0.0 && self.c_min < self.c_max) {
            return Err(Error::Domain(format!(
                "capacitance range must satisfy 0 < c_min < c_max (got {:e}, {:e})",
                self.c_min, self.c_max
            )));
        }
        Ok(())
    }

    pub fn range(&self) -> CapInterval {
        CapInterval { lo: self.c_min, hi: self.c_max }
    }

    pub fn impedance(&self, c: f64, f: f64) -> Result<C64> {
        impedance(self, c, f)
    }

    pub fn reflection(&self, c: f64, f: f64) -> Result<ReflectionResponse> {
        reflection(self, c, f)
    }
}

/// Closed capacitance interval `[lo, hi]` in farads.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapInterval {
    pub lo: f64,
    pub hi: f64,
}

impl CapInterval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::Domain(format!("invalid capacitance interval [{lo:e}, {hi:e}]")));
        }
        Ok(Self { lo, hi })
    }

    pub fn contains(&self, other: &CapInterval) -> bool {
        self.lo <= other.lo && other.hi <= self.hi
    }

    pub fn intersects(&self, other: &CapInterval) -> bool {
        self.lo <= other.hi && other.lo <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReflectionResponse {
    /// Radians in `[0, 2pi)`.
    pub phase: f64,
    pub amplitude: f64,
}

impl ReflectionResponse {
    pub fn to_complex(&self) -> C64 {
        C64::from_polar(self.amplitude, self.phase)
    }
}

fn check_point(c: f64, f: f64) -> Result<()> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::Domain(format!("capacitance must be positive, got {c:e}")));
    }
    if !(f > 0.0 && f.is_finite()) {
        return Err(Error::Domain(format!("frequency must be positive, got {f:e}")));
    }
    Ok(())
}

/// Impedance of the `L1 || (L2 + C + R)` resonator at capacitance `c` and
/// frequency `f`.
pub fn impedance(circuit: &ElementCircuit, c: f64, f: f64) -> Result<C64> {
    check_point(c, f)?;
    let omega = TAU * f;
    let j = C64::i();
    let z_l1 = j * (omega * circuit.l1);
    let z_series = j * (omega * circuit.l2) + C64::new(1.0, 0.0) / (j * (omega * c)) + circuit.r;
    let denom = z_l1 + z_series;
    if denom.norm() == 0.0 {
        // Parallel resonance of a lossless element: the impedance is infinite.
        return Err(Error::Degenerate(0.0));
    }
    Ok(z_l1 * z_series / denom)
}

/// `(Z - Z0) / (Z + Z0)`, failing when the denominator vanishes.
pub fn reflection_coefficient(z: C64, z0: f64) -> Result<C64> {
    let denom = z + z0;
    let scale = z.norm().max(z0);
    if !denom.norm().is_finite() || denom.norm() <= 1e-14 * scale {
        return Err(Error::Degenerate(denom.norm()));
    }
    Ok((z - z0) / denom)
}

pub fn reflection(circuit: &ElementCircuit, c: f64, f: f64) -> Result<ReflectionResponse> {
    let phi = match impedance(circuit, c, f) {
        Ok(z) => reflection_coefficient(z, circuit.z0)?,
        // Open circuit reflects with coefficient +1.
        Err(Error::Degenerate(_)) => C64::new(1.0, 0.0),
        Err(e) => return Err(e),
    };
    let amplitude = if circuit.r == 0.0 {
        // A purely reactive load reflects everything; pin it against rounding.
        1.0
    } else {
        phi.norm().min(1.0)
    };
    Ok(ReflectionResponse { phase: wrap_phase(phi.arg()), amplitude })
}

/// Wraps an angle into `[0, 2pi)`.
pub fn wrap_phase(angle: f64) -> f64 {
    let w = angle.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// Length in radians of the smallest arc covering every angle in `phases`.
fn covering_arc(phases: &[f64]) -> f64 {
    if phases.len() < 2 {
        return 0.0;
    }
    let mut sorted: Vec<f64> = phases.iter().map(|&p| wrap_phase(p)).collect();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let mut largest_gap = sorted[0] + TAU - sorted[sorted.len() - 1];
    for pair in sorted.windows(2) {
        largest_gap = largest_gap.max(pair[1] - pair[0]);
    }
    (TAU - largest_gap).max(0.0)
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 || lo == hi {
        return vec![lo; n.max(1)];
    }
    let step = (hi - lo) / (n - 1) as f64;
    (0..n)
        .map(|i| if i == n - 1 { hi } else { lo + step * i as f64 })
        .collect()
}

/// Angular extent, in degrees, of the reflection phase at frequency `f` as the
/// capacitance runs over `interval` (sampled uniformly at `n_samples` points).
pub fn phase_span(
    circuit: &ElementCircuit,
    interval: CapInterval,
    f: f64,
    n_samples: usize,
) -> Result<f64> {
    if n_samples < 2 {
        return Err(Error::Domain("phase_span needs at least two samples".into()));
    }
    let range = circuit.range();
    let slack = 1e-9 * range.hi;
    if interval.lo < range.lo - slack || interval.hi > range.hi + slack || interval.lo > interval.hi {
        return Err(Error::Domain(format!(
            "interval [{:e}, {:e}] outside the tuning range [{:e}, {:e}]",
            interval.lo, interval.hi, range.lo, range.hi
        )));
    }
    if interval.lo == interval.hi {
        reflection(circuit, interval.lo, f)?;
        return Ok(0.0);
    }
    let phases = linspace(interval.lo, interval.hi, n_samples)
        .into_iter()
        .map(|c| reflection(circuit, c, f).map(|r| r.phase))
        .collect::<Result<Vec<_>>>()?;
    Ok(covering_arc(&phases).to_degrees())
}

/// One capacitance range of the status table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandStatus {
    pub interval: CapInterval,
    /// Index into [`BandStatusTable::bands`] of the band this range tunes, or
    /// `None` for the no-tuning status.
    pub tunable_band: Option<usize>,
    /// Per band: circular-mean phase (radians) over the range, or `None` for
    /// the tunable band.
    pub fixed_phases: Vec<Option<f64>>,
    /// Per band phase span over the range, degrees.
    pub spans_deg: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandStatusTable {
    /// Carrier frequencies in hertz, strictly increasing.
    pub bands: Vec<f64>,
    /// Qualifying statuses ordered by capacitance.
    pub statuses: Vec<BandStatus>,
    /// Ranges that neither tune a single band nor hold every band fixed.
    pub mixed: Vec<CapInterval>,
}

impl BandStatusTable {
    pub fn is_empty(&self) -> bool {
        self.statuses.is_empty()
    }

    pub fn tunable_for(&self, band: usize) -> impl Iterator<Item = &BandStatus> {
        self.statuses.iter().filter(move |s| s.tunable_band == Some(band))
    }

    pub fn no_tuning(&self) -> impl Iterator<Item = &BandStatus> {
        self.statuses.iter().filter(|s| s.tunable_band.is_none())
    }
}

/// Running min/max of unwrapped phases over a growing index window.
#[derive(Clone, Copy)]
struct Extent {
    min: f64,
    max: f64,
}

impl Extent {
    fn at(v: f64) -> Self {
        Self { min: v, max: v }
    }

    fn with(self, v: f64) -> Self {
        Self { min: self.min.min(v), max: self.max.max(v) }
    }

    fn span_deg(self) -> f64 {
        (self.max - self.min).min(TAU).to_degrees()
    }
}

struct Sweep {
    caps: Vec<f64>,
    /// Per band, phases (radians in `[0, 2pi)`).
    phases: Vec<Vec<f64>>,
    /// Per band, phases unwrapped along the capacitance axis.
    unwrapped: Vec<Vec<f64>>,
}

impl Sweep {
    fn new(circuit: &ElementCircuit, bands: &[f64], n: usize) -> Result<Self> {
        let caps = linspace(circuit.c_min, circuit.c_max, n);
        let mut phases = Vec::with_capacity(bands.len());
        let mut unwrapped = Vec::with_capacity(bands.len());
        for &f in bands {
            let p = caps
                .iter()
                .map(|&c| reflection(circuit, c, f).map(|r| r.phase))
                .collect::<Result<Vec<_>>>()?;
            let mut u = Vec::with_capacity(n);
            u.push(p[0]);
            for i in 1..n {
                let step = (p[i] - p[i - 1] + PI).rem_euclid(TAU) - PI;
                u.push(u[i - 1] + step);
            }
            phases.push(p);
            unwrapped.push(u);
        }
        Ok(Self { caps, phases, unwrapped })
    }

    fn n_bands(&self) -> usize {
        self.phases.len()
    }

    fn span_deg(&self, band: usize, lo: usize, hi: usize) -> f64 {
        let u = &self.unwrapped[band][lo..=hi];
        let (min, max) = u
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        (max - min).min(TAU).to_degrees()
    }

    fn status(&self, lo: usize, hi: usize, tunable: Option<usize>) -> BandStatus {
        let spans_deg = (0..self.n_bands()).map(|b| self.span_deg(b, lo, hi)).collect();
        let fixed_phases = (0..self.n_bands())
            .map(|b| {
                if Some(b) == tunable {
                    return None;
                }
                let sum = self.phases[b][lo..=hi]
                    .iter()
                    .fold(C64::new(0.0, 0.0), |acc, &p| acc + C64::from_polar(1.0, p));
                Some(wrap_phase(sum.arg()))
            })
            .collect();
        BandStatus {
            interval: CapInterval { lo: self.caps[lo], hi: self.caps[hi] },
            tunable_band: tunable,
            fixed_phases,
            spans_deg,
        }
    }

    /// Grows a window around `band`'s steepest phase transition as long as
    /// every other band stays under `fixed_deg`, taking at each step the side
    /// that widens `band`'s own span the most.
    fn grow_tunable(&self, band: usize, fixed_deg: f64) -> Option<(usize, usize)> {
        let n = self.caps.len();
        let u = &self.unwrapped[band];
        let pivot = (0..n - 1)
            .max_by(|&a, &b| {
                let da = (u[a + 1] - u[a]).abs();
                let db = (u[b + 1] - u[b]).abs();
                da.total_cmp(&db).then(b.cmp(&a))
            })?;
        let (mut lo, mut hi) = (pivot, pivot + 1);
        let mut ext: Vec<Extent> = self
            .unwrapped
            .iter()
            .map(|ub| Extent::at(ub[lo]).with(ub[hi]))
            .collect();
        let others_fixed = |ext: &[Extent]| {
            ext.iter()
                .enumerate()
                .all(|(b, e)| b == band || e.span_deg() < fixed_deg)
        };
        if !others_fixed(&ext) {
            return None;
        }
        loop {
            let extended = |idx: usize| -> Vec<Extent> {
                ext.iter()
                    .zip(&self.unwrapped)
                    .map(|(e, ub)| e.with(ub[idx]))
                    .collect()
            };
            let left = (lo > 0).then(|| extended(lo - 1)).filter(|e| others_fixed(e));
            let right = (hi + 1 < n).then(|| extended(hi + 1)).filter(|e| others_fixed(e));
            match (left, right) {
                (None, None) => break,
                (Some(l), None) => {
                    lo -= 1;
                    ext = l;
                }
                (None, Some(r)) => {
                    hi += 1;
                    ext = r;
                }
                (Some(l), Some(r)) => {
                    if r[band].span_deg() > l[band].span_deg() {
                        hi += 1;
                        ext = r;
                    } else {
                        lo -= 1;
                        ext = l;
                    }
                }
            }
        }
        Some((lo, hi))
    }

    /// Maximal runs inside `[lo, hi]` on which every band stays under
    /// `fixed_deg`.
    fn quiet_runs(&self, lo: usize, hi: usize, fixed_deg: f64) -> Vec<(usize, usize)> {
        let mut runs = Vec::new();
        let mut start = lo;
        while start <= hi {
            let mut ext: Vec<Extent> =
                self.unwrapped.iter().map(|ub| Extent::at(ub[start])).collect();
            let mut end = start;
            while end < hi {
                let next: Vec<Extent> = ext
                    .iter()
                    .zip(&self.unwrapped)
                    .map(|(e, ub)| e.with(ub[end + 1]))
                    .collect();
                if next.iter().all(|e| e.span_deg() < fixed_deg) {
                    ext = next;
                    end += 1;
                } else {
                    break;
                }
            }
            if end > start {
                runs.push((start, end));
            }
            start = end + 1;
        }
        runs
    }
}

/// Derives the band status table with [`DEFAULT_SAMPLES`] samples.
pub fn derive_status_table(
    circuit: &ElementCircuit,
    bands: &[f64],
    tunable_threshold_deg: f64,
    fixed_threshold_deg: f64,
) -> Result<BandStatusTable> {
    derive_status_table_sampled(
        circuit,
        bands,
        tunable_threshold_deg,
        fixed_threshold_deg,
        DEFAULT_SAMPLES,
    )
}

/// Partitions the tuning range into single-band tunable ranges, no-tuning
/// ranges and left-over mixed ranges.
///
/// For each band the window around its steepest transition is grown while all
/// other bands stay below `fixed_threshold_deg`; windows of neighbouring bands
/// that overlap are split at the midpoint of the overlap, and a window is kept
/// only if its own span still exceeds `tunable_threshold_deg`. The gaps between
/// tunable windows are then scanned for maximal runs where every band stays
/// below `fixed_threshold_deg`.
pub fn derive_status_table_sampled(
    circuit: &ElementCircuit,
    bands: &[f64],
    tunable_threshold_deg: f64,
    fixed_threshold_deg: f64,
    n_samples: usize,
) -> Result<BandStatusTable> {
    circuit.validate()?;
    if bands.is_empty() {
        return Err(Error::Domain("band list is empty".into()));
    }
    if bands.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Domain("bands must be strictly increasing".into()));
    }
    if !(tunable_threshold_deg > fixed_threshold_deg && fixed_threshold_deg > 0.0) {
        return Err(Error::Domain(
            "thresholds must satisfy tunable > fixed > 0".into(),
        ));
    }
    if n_samples < 3 {
        return Err(Error::Domain("status derivation needs at least three samples".into()));
    }
    let sweep = Sweep::new(circuit, bands, n_samples)?;

    let mut windows: Vec<(usize, usize, usize)> = (0..bands.len())
        .filter_map(|b| sweep.grow_tunable(b, fixed_threshold_deg).map(|(lo, hi)| (lo, hi, b)))
        .collect();
    windows.sort_by_key(|&(lo, hi, _)| (lo, hi));

    // Overlapping neighbours share the overlap at its midpoint. A window fully
    // swallowed by its neighbour collapses and is dropped below.
    for i in 1..windows.len() {
        let (prev, next) = windows.split_at_mut(i);
        let a = prev.last_mut().unwrap();
        let b = &mut next[0];
        if a.1 >= b.0 {
            let mid = (a.1 + b.0) / 2;
            a.1 = mid.max(a.0);
            b.0 = (mid + 1).min(b.1).max(a.1 + 1);
        }
    }
    let windows: Vec<(usize, usize, usize)> = windows
        .into_iter()
        .filter(|&(lo, hi, b)| hi > lo && sweep.span_deg(b, lo, hi) > tunable_threshold_deg)
        .filter(|&(lo, hi, b)| {
            (0..bands.len()).all(|o| o == b || sweep.span_deg(o, lo, hi) < fixed_threshold_deg)
        })
        .collect();

    let mut statuses = Vec::new();
    let mut mixed = Vec::new();
    let mut cursor = 0usize;
    let last = n_samples - 1;
    let mut fill_gap = |lo: usize, hi: usize, statuses: &mut Vec<BandStatus>| {
        let mut at = lo;
        for (a, b) in sweep.quiet_runs(lo, hi, fixed_threshold_deg) {
            if a > at {
                mixed.push(CapInterval { lo: sweep.caps[at], hi: sweep.caps[a - 1] });
            }
            statuses.push(sweep.status(a, b, None));
            at = b + 1;
        }
        if at <= hi {
            mixed.push(CapInterval { lo: sweep.caps[at], hi: sweep.caps[hi] });
        }
    };
    for &(lo, hi, band) in &windows {
        if lo > cursor {
            fill_gap(cursor, lo - 1, &mut statuses);
        }
        statuses.push(sweep.status(lo, hi, Some(band)));
        cursor = hi + 1;
    }
    if cursor <= last {
        fill_gap(cursor, last, &mut statuses);
    }
    statuses.sort_by(|a, b| a.interval.lo.total_cmp(&b.interval.lo));

    Ok(BandStatusTable { bands: bands.to_vec(), statuses, mixed })
}

/// One row of a capacitance sweep: per band phase (radians) and amplitude.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub capacitance: f64,
    pub phases: Vec<f64>,
    pub amplitudes: Vec<f64>,
}

pub fn sweep(circuit: &ElementCircuit, bands: &[f64], n_samples: usize) -> Result<Vec<SweepRow>> {
    circuit.validate()?;
    if n_samples < 2 {
        return Err(Error::Domain("sweep needs at least two samples".into()));
    }
    linspace(circuit.c_min, circuit.c_max, n_samples)
        .into_iter()
        .map(|c| {
            let responses = bands
                .iter()
                .map(|&f| reflection(circuit, c, f))
                .collect::<Result<Vec<_>>>()?;
            Ok(SweepRow {
                capacitance: c,
                phases: responses.iter().map(|r| r.phase).collect(),
                amplitudes: responses.iter().map(|r| r.amplitude).collect(),
            })
        })
        .collect()
}

/// Writes sweep rows as CSV: `capacitance_pf`, then `phase_deg_<f GHz>` and
/// `amplitude_<f GHz>` for every band.
pub fn write_sweep_csv<W: Write>(out: W, bands: &[f64], rows: &[SweepRow]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    let mut header = vec!["capacitance_pf".to_string()];
    header.extend(bands.iter().map(|f| format!("phase_deg_{:.3}ghz", f / 1e9)));
    header.extend(bands.iter().map(|f| format!("amplitude_{:.3}ghz", f / 1e9)));
    wtr.write_record(&header)?;
    for row in rows {
        let mut rec = vec![format!("{:.6}", row.capacitance * 1e12)];
        rec.extend(row.phases.iter().map(|p| format!("{:.6}", p.to_degrees())));
        rec.extend(row.amplitudes.iter().map(|a| format!("{a:.9}")));
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}
