#![allow(dead_code)]

pub mod socp;

use mbirs::channel::complex_normal;
use mbirs::{CMat, CVec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn cvec(rng: &mut ChaCha8Rng, n: usize) -> CVec {
    CVec::from_iterator(n, (0..n).map(|_| complex_normal(rng)))
}

pub fn cmat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> CMat {
    CMat::from_fn(r, c, |_, _| complex_normal(rng))
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

/// Minimum of `f` over every phase vector of length `m` on a uniform grid of
/// `levels` phases per element. Returns `(value, phases)`.
pub fn grid_min(m: usize, levels: usize, f: impl Fn(&CVec) -> f64) -> (f64, Vec<f64>) {
    let step = std::f64::consts::TAU / levels as f64;
    let total = levels.pow(m as u32);
    let mut best = (f64::INFINITY, Vec::new());
    let mut v = CVec::zeros(m);
    let mut phases = vec![0.0; m];
    for idx in 0..total {
        let mut rest = idx;
        for i in 0..m {
            phases[i] = (rest % levels) as f64 * step;
            v[i] = mbirs::C64::from_polar(1.0, phases[i]);
            rest /= levels;
        }
        let val = f(&v);
        if val < best.0 {
            best = (val, phases.clone());
        }
    }
    best
}

/// Cheapest feasible element-to-band assignment by brute force over all
/// `(S + 1)^M` assignments. Unserved entries reflect with phase zero.
pub fn exhaustive_assignment(
    ideal: &[Vec<f64>],
    channels: &mbirs::channel::ChannelSet,
    scenario: &mbirs::channel::Scenario,
) -> Option<(Vec<Option<usize>>, f64)> {
    use mbirs::channel::combined_channel;
    use mbirs::txbf::{solve_power_min, SolveStatus};
    let s = ideal.len();
    let m = ideal[0].len();
    let mut best: Option<(Vec<Option<usize>>, f64)> = None;
    for idx in 0..(s + 1).pow(m as u32) {
        let mut rest = idx;
        let assignment: Vec<Option<usize>> = (0..m)
            .map(|_| {
                let d = rest % (s + 1);
                rest /= s + 1;
                d.checked_sub(1)
            })
            .collect();
        let mut total = 0.0;
        let mut feasible = true;
        for band in 0..s {
            let diag = CVec::from_iterator(
                m,
                (0..m).map(|e| {
                    let phase = if assignment[e] == Some(band) { ideal[band][e] } else { 0.0 };
                    mbirs::C64::from_polar(1.0, phase)
                }),
            );
            let bc = &channels.bands[band];
            let hs: Vec<CVec> = bc
                .h_r
                .iter()
                .zip(&bc.h_d)
                .map(|(hr, hd)| combined_channel(hr, &diag, &bc.g, hd).unwrap())
                .collect();
            let (bf, rep) =
                solve_power_min(&hs, &scenario.sinr_targets[band], &scenario.noise_power[band]).unwrap();
            if rep.status == SolveStatus::Infeasible {
                feasible = false;
                break;
            }
            total += bf.power;
        }
        if feasible && best.as_ref().is_none_or(|(_, p)| total < *p) {
            best = Some((assignment, total));
        }
    }
    best
}
