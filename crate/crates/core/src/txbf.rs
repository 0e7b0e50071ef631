//! SINR-constrained transmit power minimisation for one band.
//!
//! Solves
//!
//! ```text
//! min  sum_k ||w_k||^2
//! s.t. |h_k^H w_k|^2 / (sum_{j != k} |h_k^H w_j|^2 + sigma_k^2) >= gamma_k
//! ```
//!
//! through uplink-downlink duality. The dual (virtual uplink) powers satisfy
//! the fixed point
//!
//! ```text
//! lambda_k = gamma_k / (h_k^H (I + sum_{j != k} lambda_j h_j h_j^H)^{-1} h_k)
//! ```
//!
//! a standard interference function, so the monotone iteration from
//! `lambda = 0` converges exactly when the targets are feasible. The optimal beam directions are the MMSE receivers
//! `(I + sum_j lambda_j h_j h_j^H)^{-1} h_k`; the downlink powers then follow
//! from the linear system that makes every SINR constraint tight. At the
//! optimum the dual objective `sum_k lambda_k sigma_k^2` equals the transmit
//! power, which is what the divergence cap is measured against.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::channel::band_sinrs;
use crate::linalg::solve_real;
use crate::{CMat, CVec, Error, Result, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub status: SolveStatus,
    pub iterations: usize,
    pub achieved_sinrs: Vec<f64>,
    /// Final relative change of the dual variables.
    pub residual: f64,
}

impl SolveReport {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// The iteration is declared divergent once the dual objective exceeds
    /// `cap_factor * max(gamma) * sum_k sigma_k^2 / ||h_k||^2`.
    pub cap_factor: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 200, cap_factor: 1e6 }
    }
}

/// Beamformers of one band (columns of `w`) with their power.
#[derive(Debug, Clone, PartialEq)]
pub struct BandBeamformers {
    pub w: CMat,
    pub power: f64,
}

impl BandBeamformers {
    pub fn new(w: CMat) -> Self {
        let power = w.norm_squared();
        Self { w, power }
    }
}

/// Beamformers of every band.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamformerSet {
    pub bands: Vec<BandBeamformers>,
    pub total_power: f64,
}

impl BeamformerSet {
    pub fn new(bands: Vec<BandBeamformers>) -> Self {
        let total_power = bands.iter().map(|b| b.power).sum();
        Self { bands, total_power }
    }

    /// Recomputes `sum_s sum_k ||w_{k,s}||^2` from the stored matrices.
    pub fn recomputed_power(&self) -> f64 {
        self.bands.iter().map(|b| b.w.norm_squared()).sum()
    }
}

fn check_inputs(channels: &[CVec], targets: &[f64], noise: &[f64]) -> Result<usize> {
    let k = channels.len();
    if k == 0 {
        return Err(Error::Dimension("at least one user is required".into()));
    }
    if targets.len() != k || noise.len() != k {
        return Err(Error::Dimension(format!(
            "{k} channels but {} targets and {} noise powers",
            targets.len(),
            noise.len()
        )));
    }
    let nt = channels[0].len();
    if nt == 0 || channels.iter().any(|h| h.len() != nt) {
        return Err(Error::Dimension("channels must share a non-zero length".into()));
    }
    if targets.iter().any(|&g| !(g > 0.0 && g.is_finite())) {
        return Err(Error::Domain("SINR targets must be positive".into()));
    }
    if noise.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
        return Err(Error::Domain("noise powers must be positive".into()));
    }
    Ok(nt)
}

/// `(I + sum_j lambda_j h_j h_j^H)`.
fn dual_covariance(channels: &[CVec], lambda: &[f64]) -> CMat {
    let nt = channels[0].len();
    let mut cov = CMat::identity(nt, nt);
    for (h, &l) in channels.iter().zip(lambda) {
        cov.gerc(C64::new(l, 0.0), h, h, C64::new(1.0, 0.0));
    }
    cov
}

/// MMSE directions `cov^{-1} h_k`, unit norm.
fn directions(channels: &[CVec], cov: CMat) -> Option<Vec<CVec>> {
    let chol = cov.cholesky()?;
    channels
        .iter()
        .map(|h| {
            let u = chol.solve(h);
            let n = u.norm();
            (n > 0.0 && n.is_finite()).then(|| u / C64::new(n, 0.0))
        })
        .collect()
}

/// Downlink powers that make every SINR constraint tight for fixed unit
/// directions.
fn tight_powers(channels: &[CVec], dirs: &[CVec], targets: &[f64], noise: &[f64]) -> Option<Vec<f64>> {
    let k = channels.len();
    let mut f = DMatrix::<f64>::zeros(k, k);
    for (i, h) in channels.iter().enumerate() {
        for (j, u) in dirs.iter().enumerate() {
            let gain = h.dotc(u).norm_sqr();
            f[(i, j)] = if i == j { gain / targets[i] } else { -gain };
        }
    }
    let p = solve_real(f, &DVector::from_column_slice(noise))?;
    p.iter().all(|&v| v > 0.0).then(|| p.iter().copied().collect())
}

fn infeasible(k: usize, nt: usize, iterations: usize, residual: f64) -> (CMat, SolveReport) {
    (
        CMat::zeros(nt, k),
        SolveReport {
            status: SolveStatus::Infeasible,
            iterations,
            achieved_sinrs: vec![0.0; k],
            residual,
        },
    )
}

pub fn solve_power_min(
    channels: &[CVec],
    targets: &[f64],
    noise: &[f64],
) -> Result<(BandBeamformers, SolveReport)> {
    solve_power_min_with(channels, targets, noise, &SolverOptions::default())
}

/// Minimum-power beamformers meeting every SINR target. Each returned column
/// is rotated so that `h_k^H w_k` is real and non-negative.
pub fn solve_power_min_with(
    channels: &[CVec],
    targets: &[f64],
    noise: &[f64],
    opts: &SolverOptions,
) -> Result<(BandBeamformers, SolveReport)> {
    let nt = check_inputs(channels, targets, noise)?;
    let k = channels.len();
    let gains: Vec<f64> = channels.iter().map(|h| h.norm_squared()).collect();
    if gains.iter().any(|&g| !(g > 0.0 && g.is_finite())) {
        let (w, report) = infeasible(k, nt, 0, f64::NAN);
        return Ok((BandBeamformers::new(w), report));
    }
    let max_target = targets.iter().copied().fold(0.0, f64::max);
    let cap = opts.cap_factor
        * max_target
        * noise.iter().zip(&gains).map(|(s, g)| s / g).sum::<f64>();

    let mut lambda = vec![0.0; k];
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iter {
        iterations += 1;
        let mut next = Vec::with_capacity(k);
        for (i, (h, &g)) in channels.iter().zip(targets).enumerate() {
            let mut cov = CMat::identity(nt, nt);
            for (j, (hj, &l)) in channels.iter().zip(&lambda).enumerate() {
                if j != i {
                    cov.gerc(C64::new(l, 0.0), hj, hj, C64::new(1.0, 0.0));
                }
            }
            let Some(chol) = cov.cholesky() else {
                let (w, report) = infeasible(k, nt, iterations, residual);
                return Ok((BandBeamformers::new(w), report));
            };
            let q = h.dotc(&chol.solve(h)).re;
            next.push(g / q);
        }
        residual = next
            .iter()
            .zip(&lambda)
            .map(|(&n, &o)| (n - o).abs() / n.abs().max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max);
        lambda = next;
        let dual_objective: f64 = lambda.iter().zip(noise).map(|(l, s)| l * s).sum();
        if !dual_objective.is_finite() || dual_objective > cap {
            let (w, report) = infeasible(k, nt, iterations, residual);
            return Ok((BandBeamformers::new(w), report));
        }
        if residual <= opts.tol {
            converged = true;
            break;
        }
    }

    let dirs = directions(channels, dual_covariance(channels, &lambda));
    let powers = dirs
        .as_ref()
        .and_then(|d| tight_powers(channels, d, targets, noise));
    let (Some(dirs), Some(powers)) = (dirs, powers) else {
        let (w, report) = infeasible(k, nt, iterations, residual);
        return Ok((BandBeamformers::new(w), report));
    };

    let mut w = CMat::zeros(nt, k);
    for (j, (u, p)) in dirs.iter().zip(&powers).enumerate() {
        let col = u * C64::new(p.sqrt(), 0.0);
        let inner = channels[j].dotc(&col);
        let rot = if inner.norm() > 0.0 { inner.conj() / inner.norm() } else { C64::new(1.0, 0.0) };
        w.set_column(j, &(col * rot));
    }
    let achieved_sinrs = band_sinrs(channels, &w, noise);
    let meets = achieved_sinrs.iter().zip(targets).all(|(&a, &g)| a >= g - 1e-6);
    let status = match (converged, meets) {
        (true, true) => SolveStatus::Optimal,
        (false, true) => SolveStatus::MaxIterations,
        (_, false) => SolveStatus::Infeasible,
    };
    if status == SolveStatus::Infeasible {
        let (w, report) = infeasible(k, nt, iterations, residual);
        return Ok((BandBeamformers::new(w), report));
    }
    Ok((BandBeamformers::new(w), SolveReport { status, iterations, achieved_sinrs, residual }))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Feasibility {
    pub feasible: bool,
    /// `min_k (achieved_k / target_k) - 1`; `-1` when infeasible.
    pub margin: f64,
}

pub fn feasibility_check(channels: &[CVec], targets: &[f64], noise: &[f64]) -> Result<Feasibility> {
    let (_, report) = solve_power_min(channels, targets, noise)?;
    let feasible = report.is_optimal();
    let margin = if feasible {
        report
            .achieved_sinrs
            .iter()
            .zip(targets)
            .map(|(a, g)| a / g)
            .fold(f64::INFINITY, f64::min)
            - 1.0
    } else {
        -1.0
    };
    Ok(Feasibility { feasible, margin })
}
