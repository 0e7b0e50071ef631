//! Scenario description, seeded channel generation and the effective-channel /
//! SINR algebra.
//!
//! # Seeding
//!
//! Every random vector is drawn from its own ChaCha8 stream: the generator is
//! keyed with `ChaCha8Rng::seed_from_u64(rng_seed)` and then moved to stream
//! `(band + 1) << 32 | link << 24 | index` (see [`stream_id`]). Circularly
//! symmetric Gaussian entries are `(x + j y) / sqrt(2)` with `x`, `y` taken in
//! that order from `StandardNormal`. Because each vector owns its stream, a
//! scenario with more elements or users extends the draws of a smaller one
//! instead of reshuffling them.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::{CMat, CVec, Error, Result, C64};

/// Converts decibels to a linear power ratio.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

pub fn watts_to_dbm(w: f64) -> f64 {
    linear_to_db(w) + 30.0
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    db_to_linear(dbm - 30.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathLossExponents {
    pub bs_irs: f64,
    pub irs_user: f64,
    pub bs_user: f64,
}

/// How users are placed around the surface.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UserPlacement {
    /// Uniform on a disc of radius `irs_user_distance` centred at the IRS.
    Disc,
    /// Uniform on the circle of radius `irs_user_distance` around the IRS.
    Circle,
    /// No geometry: use `bs_user_distance` and `irs_user_distance` as given.
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    /// Carrier frequency of each band (one base station per band), hertz.
    pub bands_hz: Vec<f64>,
    pub n_tx: usize,
    pub users_per_band: Vec<usize>,
    pub n_elements: usize,
    pub bs_irs_distance: f64,
    pub bs_user_distance: f64,
    pub irs_user_distance: f64,
    pub pathloss_exponents: PathLossExponents,
    /// Attenuation at 1 m, dB.
    pub reference_loss_db: f64,
    /// Per band, per user noise power in watts.
    pub noise_power: Vec<Vec<f64>>,
    /// Per band, per user SINR target (linear).
    pub sinr_targets: Vec<Vec<f64>>,
    pub user_placement: UserPlacement,
    pub rng_seed: u64,
}

pub const DEFAULT_NOISE_DBM: f64 = -80.0;
pub const DEFAULT_SINR_DB: f64 = 5.0;

impl Scenario {
    /// Builds a scenario with uniform noise and SINR targets and the default
    /// 50 m / 2 m geometry.
    pub fn uniform(
        bands_hz: Vec<f64>,
        n_tx: usize,
        users: usize,
        n_elements: usize,
        sinr_db: f64,
        noise_dbm: f64,
        rng_seed: u64,
    ) -> Self {
        let s = bands_hz.len();
        Self {
            bands_hz,
            n_tx,
            users_per_band: vec![users; s],
            n_elements,
            bs_irs_distance: 50.0,
            bs_user_distance: 50.0,
            irs_user_distance: 2.0,
            pathloss_exponents: PathLossExponents { bs_irs: 2.5, irs_user: 2.8, bs_user: 3.5 },
            reference_loss_db: 30.0,
            noise_power: vec![vec![dbm_to_watts(noise_dbm); users]; s],
            sinr_targets: vec![vec![db_to_linear(sinr_db); users]; s],
            user_placement: UserPlacement::Disc,
            rng_seed,
        }
    }

    /// CI-scale preset: 2 bands, 4 antennas, 2 users per band, 16 elements.
    pub fn desk() -> Self {
        Self::uniform(vec![1.885e9, 2.345e9], 4, 2, 16, DEFAULT_SINR_DB, DEFAULT_NOISE_DBM, 1)
    }

    /// Full-scale preset: 3 bands, 16 antennas, 4 users per band, 64 elements.
    pub fn full_scale() -> Self {
        Self::uniform(
            vec![1.885e9, 2.345e9, 2.605e9],
            16,
            4,
            64,
            DEFAULT_SINR_DB,
            DEFAULT_NOISE_DBM,
            1,
        )
    }

    pub fn n_bands(&self) -> usize {
        self.bands_hz.len()
    }

    /// Replaces every SINR target with `db`.
    pub fn set_sinr_db(&mut self, db: f64) {
        let v = db_to_linear(db);
        self.sinr_targets = self.users_per_band.iter().map(|&k| vec![v; k]).collect();
    }

    /// Changes the number of users of every band, keeping the first band's
    /// first-user noise and target as the new uniform value.
    pub fn set_users(&mut self, users: usize) {
        let noise = self.noise_power.first().and_then(|v| v.first()).copied().unwrap_or(1e-11);
        let target = self.sinr_targets.first().and_then(|v| v.first()).copied().unwrap_or(1.0);
        self.users_per_band = vec![users; self.n_bands()];
        self.noise_power = vec![vec![noise; users]; self.n_bands()];
        self.sinr_targets = vec![vec![target; users]; self.n_bands()];
    }

    pub fn set_noise_dbm(&mut self, dbm: f64) {
        let v = dbm_to_watts(dbm);
        self.noise_power = self.users_per_band.iter().map(|&k| vec![v; k]).collect();
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        let s = self.n_bands();
        if s == 0 {
            return bad("at least one band is required");
        }
        if self.bands_hz.iter().any(|&f| !(f > 0.0 && f.is_finite())) {
            return bad("band frequencies must be positive");
        }
        if self.n_tx == 0 || self.n_elements == 0 {
            return bad("n_tx and n_elements must be at least 1");
        }
        if self.users_per_band.len() != s || self.users_per_band.contains(&0) {
            return bad("users_per_band needs one positive count per band");
        }
        let dists = [self.bs_irs_distance, self.bs_user_distance, self.irs_user_distance];
        if dists.iter().any(|&d| !(d > 0.0 && d.is_finite())) {
            return bad("distances must be positive");
        }
        let e = self.pathloss_exponents;
        if [e.bs_irs, e.irs_user, e.bs_user].iter().any(|x| !x.is_finite()) {
            return bad("path-loss exponents must be finite");
        }
        if !self.reference_loss_db.is_finite() {
            return bad("reference loss must be finite");
        }
        for (name, table) in [("noise_power", &self.noise_power), ("sinr_targets", &self.sinr_targets)] {
            if table.len() != s || table.iter().zip(&self.users_per_band).any(|(v, &k)| v.len() != k) {
                return Err(Error::Config(format!("{name} must have one entry per user")));
            }
            if table.iter().flatten().any(|&x| !(x > 0.0 && x.is_finite())) {
                return Err(Error::Config(format!("{name} entries must be positive")));
            }
        }
        Ok(())
    }
}

/// Linear-scale power loss over `distance` metres. Distances below the 1 m
/// reference are clamped to it.
pub fn path_loss(reference_loss_db: f64, distance: f64, exponent: f64) -> f64 {
    db_to_linear(-reference_loss_db) * distance.max(1.0).powf(-exponent)
}

/// Channels of one band. `h_r[k]` and `h_d[k]` are column vectors; user `k`
/// sees the row `h_r[k]^H diag(theta) G + h_d[k]^H`.
#[derive(Debug, Clone, PartialEq)]
pub struct BandChannels {
    pub g: CMat,
    pub h_r: Vec<CVec>,
    pub h_d: Vec<CVec>,
}

impl BandChannels {
    pub fn n_users(&self) -> usize {
        self.h_r.len()
    }

    pub fn n_elements(&self) -> usize {
        self.g.nrows()
    }

    pub fn n_tx(&self) -> usize {
        self.g.ncols()
    }

    /// Effective channels of every user for the given diagonal.
    pub fn effective(&self, theta: &CVec) -> Result<Vec<CVec>> {
        self.h_r
            .iter()
            .zip(&self.h_d)
            .map(|(hr, hd)| combined_channel(hr, theta, &self.g, hd))
            .collect()
    }

    /// Channels with the reflected path removed.
    pub fn direct_only(&self) -> Vec<CVec> {
        self.h_d.clone()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    pub bands: Vec<BandChannels>,
}

#[derive(Clone, Copy)]
#[repr(u64)]
enum Link {
    BsIrs = 1,
    IrsUser = 2,
    BsUser = 3,
    Position = 4,
}

/// Stream number of the vector `index` of `link` in `band`.
fn stream_id(band: usize, link: Link, index: usize) -> u64 {
    ((band as u64 + 1) << 32) | ((link as u64) << 24) | index as u64
}

fn stream(seed: u64, band: usize, link: Link, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id(band, link, index));
    rng
}

/// A `CN(0, 1)` draw.
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

fn fading_vector(rng: &mut ChaCha8Rng, n: usize, amplitude: f64) -> CVec {
    CVec::from_iterator(n, (0..n).map(|_| complex_normal(rng) * amplitude))
}

/// User positions relative to the IRS plus the resulting `(BS-user,
/// IRS-user)` distances. The BS sits at the origin and the IRS at
/// `(bs_irs_distance, 0)`.
pub fn user_distances(scenario: &Scenario, band: usize, user: usize) -> (f64, f64) {
    let radius = scenario.irs_user_distance;
    let offset = match scenario.user_placement {
        UserPlacement::Fixed => return (scenario.bs_user_distance, scenario.irs_user_distance),
        UserPlacement::Disc => {
            let mut rng = stream(scenario.rng_seed, band, Link::Position, user);
            let angle: f64 = rng.random::<f64>() * TAU;
            let r = radius * rng.random::<f64>().sqrt();
            (r * angle.cos(), r * angle.sin())
        }
        UserPlacement::Circle => {
            let mut rng = stream(scenario.rng_seed, band, Link::Position, user);
            let angle: f64 = rng.random::<f64>() * TAU;
            (radius * angle.cos(), radius * angle.sin())
        }
    };
    let x = scenario.bs_irs_distance + offset.0;
    let y = offset.1;
    ((x * x + y * y).sqrt(), offset.0.hypot(offset.1))
}

/// Draws one Rayleigh-faded realisation of every channel in the scenario.
pub fn generate(scenario: &Scenario) -> Result<ChannelSet> {
    scenario.validate()?;
    let m = scenario.n_elements;
    let nt = scenario.n_tx;
    let e = scenario.pathloss_exponents;
    let seed = scenario.rng_seed;
    let g_amp = path_loss(scenario.reference_loss_db, scenario.bs_irs_distance, e.bs_irs).sqrt();
    let bands = (0..scenario.n_bands())
        .map(|s| {
            let mut g = CMat::zeros(m, nt);
            for row in 0..m {
                let mut rng = stream(seed, s, Link::BsIrs, row);
                for col in 0..nt {
                    g[(row, col)] = complex_normal(&mut rng) * g_amp;
                }
            }
            let (h_r, h_d) = (0..scenario.users_per_band[s])
                .map(|k| {
                    let (d_bu, d_iu) = user_distances(scenario, s, k);
                    let r_amp = path_loss(scenario.reference_loss_db, d_iu, e.irs_user).sqrt();
                    let d_amp = path_loss(scenario.reference_loss_db, d_bu, e.bs_user).sqrt();
                    let hr = fading_vector(&mut stream(seed, s, Link::IrsUser, k), m, r_amp);
                    let hd = fading_vector(&mut stream(seed, s, Link::BsUser, k), nt, d_amp);
                    (hr, hd)
                })
                .unzip();
            BandChannels { g, h_r, h_d }
        })
        .collect();
    Ok(ChannelSet { bands })
}

/// Returns `h` with `h^H = h_r^H diag(theta) G + h_d^H`.
pub fn combined_channel(h_r: &CVec, theta: &CVec, g: &CMat, h_d: &CVec) -> Result<CVec> {
    let m = g.nrows();
    if h_r.len() != m || theta.len() != m || h_d.len() != g.ncols() {
        return Err(Error::Dimension(format!(
            "h_r {} / theta {} / G {}x{} / h_d {}",
            h_r.len(),
            theta.len(),
            g.nrows(),
            g.ncols(),
            h_d.len()
        )));
    }
    // (h_r^H diag(theta) G)^H = G^H diag(conj theta) h_r
    let weighted = CVec::from_iterator(m, h_r.iter().zip(theta.iter()).map(|(h, t)| h * t.conj()));
    Ok(g.ad_mul(&weighted) + h_d)
}

/// `|h^H w|^2 / (sum_j |h^H w_j|^2 + noise)`.
pub fn sinr(h: &CVec, w: &CVec, interferers: &[&CVec], noise: f64) -> f64 {
    let signal = h.dotc(w).norm_sqr();
    let interference: f64 = interferers.iter().map(|wj| h.dotc(wj).norm_sqr()).sum();
    signal / (interference + noise)
}

/// SINR of every user of a band whose beamformers are the columns of `w`.
pub fn band_sinrs(channels: &[CVec], w: &CMat, noise: &[f64]) -> Vec<f64> {
    let cols: Vec<CVec> = w.column_iter().map(|c| c.into_owned()).collect();
    channels
        .iter()
        .enumerate()
        .map(|(k, h)| {
            let others: Vec<&CVec> =
                cols.iter().enumerate().filter(|&(j, _)| j != k).map(|(_, c)| c).collect();
            sinr(h, &cols[k], &others, noise[k])
        })
        .collect()
}

#[derive(Serialize, Deserialize)]
struct BandDoc {
    rows: usize,
    cols: usize,
    /// Row-major `[re, im]` pairs of `G`.
    g: Vec<[f64; 2]>,
    h_r: Vec<Vec<[f64; 2]>>,
    h_d: Vec<Vec<[f64; 2]>>,
}

#[derive(Serialize, Deserialize)]
struct ChannelDoc {
    format: String,
    bands: Vec<BandDoc>,
}

const CHANNEL_FORMAT: &str = "mbirs-channels/1";

fn pairs(v: &CVec) -> Vec<[f64; 2]> {
    v.iter().map(|z| [z.re, z.im]).collect()
}

fn from_pairs(p: &[[f64; 2]]) -> CVec {
    CVec::from_iterator(p.len(), p.iter().map(|&[re, im]| C64::new(re, im)))
}

impl ChannelSet {
    /// JSON document: `{"format": "mbirs-channels/1", "bands": [{"rows", "cols",
    /// "g", "h_r", "h_d"}]}` with every complex number as `[re, im]` and `g`
    /// stored row-major.
    pub fn to_json(&self) -> Result<String> {
        let doc = ChannelDoc {
            format: CHANNEL_FORMAT.into(),
            bands: self
                .bands
                .iter()
                .map(|b| BandDoc {
                    rows: b.g.nrows(),
                    cols: b.g.ncols(),
                    g: b.g.transpose().iter().map(|z| [z.re, z.im]).collect(),
                    h_r: b.h_r.iter().map(pairs).collect(),
                    h_d: b.h_d.iter().map(pairs).collect(),
                })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ChannelDoc = serde_json::from_str(text)?;
        if doc.format != CHANNEL_FORMAT {
            return Err(Error::Config(format!("unknown channel format {:?}", doc.format)));
        }
        let bands = doc
            .bands
            .into_iter()
            .map(|b| {
                if b.g.len() != b.rows * b.cols {
                    return Err(Error::Dimension("G entry count".into()));
                }
                let g = CMat::from_row_iterator(
                    b.rows,
                    b.cols,
                    b.g.iter().map(|&[re, im]| C64::new(re, im)),
                );
                let h_r: Vec<CVec> = b.h_r.iter().map(|p| from_pairs(p)).collect();
                let h_d: Vec<CVec> = b.h_d.iter().map(|p| from_pairs(p)).collect();
                if h_r.len() != h_d.len()
                    || h_r.iter().any(|h| h.len() != b.rows)
                    || h_d.iter().any(|h| h.len() != b.cols)
                {
                    return Err(Error::Dimension("user channel lengths".into()));
                }
                Ok(BandChannels { g, h_r, h_d })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { bands })
    }
}
