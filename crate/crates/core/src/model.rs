//! Physical scenario: user drop, extended Saleh-Valenzuela channels on a
//! half-wavelength ULA, and path loss folded into a noise-normalised `H`.
//!
//! Powers elsewhere in the crate are linear milliwatts. The receiver noise
//! is unit variance, so each channel column carries the amplitude gain
//! `10^(-(gamma_k + noise_power_dbm) / 20)` on top of the small-scale
//! fading. A power `p_k` in mW then yields a per-antenna SNR of
//! `p_k * |h_mk|^2` directly.

use std::f64::consts::PI;

use nalgebra::DVector;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cexp_j, CMat, CVec};

/// Per-user maximum transmit power: one value for all users or one per user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PowerLimit {
    Uniform(f64),
    PerUser(Vec<f64>),
}

impl PowerLimit {
    pub fn dbm(&self, k: usize) -> f64 {
        match self {
            PowerLimit::Uniform(v) => *v,
            PowerLimit::PerUser(v) => v[k],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemConfig {
    /// Base-station antennas `M`.
    pub num_antennas: usize,
    /// RF chains `S`.
    pub num_rf_chains: usize,
    /// Candidate users `K`.
    pub num_users: usize,
    /// Users to schedule `N`.
    pub num_scheduled: usize,
    pub cell_radius_m: f64,
    pub min_distance_m: f64,
    pub bandwidth_hz: f64,
    pub noise_density_dbm_hz: f64,
    pub p_max_dbm: PowerLimit,
    pub d_min: u32,
    pub d_max: u32,
    pub d_avg: f64,
    pub cluster_count: usize,
    pub rays_per_cluster: usize,
    /// Standard deviation of the Laplacian ray spread around a cluster centre.
    pub angular_spread_deg: f64,
    pub shadowing_std_db: f64,
    /// Channel seed for single-realization runs; sweeps derive their own.
    pub rng_seed: u64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        SystemConfig {
            num_antennas: 96,
            num_rf_chains: 32,
            num_users: 40,
            num_scheduled: 16,
            cell_radius_m: 500.0,
            min_distance_m: 10.0,
            bandwidth_hz: 10e6,
            noise_density_dbm_hz: -174.0,
            p_max_dbm: PowerLimit::Uniform(10.0),
            d_min: 1,
            d_max: 8,
            d_avg: 3.0,
            cluster_count: 5,
            rays_per_cluster: 10,
            angular_spread_deg: 7.5,
            shadowing_std_db: 1.0,
            rng_seed: 0,
        }
    }
}

impl SystemConfig {
    /// The desk-scale scenario (`M=16, S=8, K=10, N=4`) used by the shipped
    /// experiment files and the acceptance suite.
    pub fn desk() -> Self {
        SystemConfig {
            num_antennas: 16,
            num_rf_chains: 8,
            num_users: 10,
            num_scheduled: 4,
            cell_radius_m: 100.0,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (m, s, k, n) = (
            self.num_antennas,
            self.num_rf_chains,
            self.num_users,
            self.num_scheduled,
        );
        if m == 0 || s == 0 || k == 0 || n == 0 {
            return Err(Error::invalid("M, S, K and N must all be at least 1"));
        }
        if !(n <= s && s <= m) {
            return Err(Error::invalid(format!(
                "require N <= S <= M, got N={n}, S={s}, M={m}"
            )));
        }
        if n > k {
            return Err(Error::invalid(format!(
                "cannot schedule N={n} out of K={k} users"
            )));
        }
        let (lo, hi, avg) = (self.d_min as f64, self.d_max as f64, self.d_avg);
        if !(self.d_min >= 1 && lo <= avg && avg <= hi) {
            return Err(Error::invalid(format!(
                "require 1 <= d_min <= d_avg <= d_max, got {lo}, {avg}, {hi}"
            )));
        }
        let positive = [
            ("cell_radius_m", self.cell_radius_m),
            ("min_distance_m", self.min_distance_m),
            ("bandwidth_hz", self.bandwidth_hz),
            ("angular_spread_deg", self.angular_spread_deg),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.shadowing_std_db >= 0.0 && self.shadowing_std_db.is_finite()) {
            return Err(Error::invalid("shadowing_std_db must be non-negative"));
        }
        if self.min_distance_m >= self.cell_radius_m {
            return Err(Error::invalid("min_distance_m must be below cell_radius_m"));
        }
        if self.cluster_count == 0 || self.rays_per_cluster == 0 {
            return Err(Error::invalid("cluster_count and rays_per_cluster must be >= 1"));
        }
        match &self.p_max_dbm {
            PowerLimit::Uniform(v) if !v.is_finite() => {
                return Err(Error::invalid("p_max_dbm must be finite"))
            }
            PowerLimit::PerUser(v) if v.len() != k => {
                return Err(Error::invalid(format!(
                    "p_max_dbm has {} entries, expected K={k}",
                    v.len()
                )))
            }
            PowerLimit::PerUser(v) if v.iter().any(|x| !x.is_finite()) => {
                return Err(Error::invalid("p_max_dbm entries must be finite"))
            }
            _ => {}
        }
        Ok(())
    }

    /// Thermal noise power over the band, in dBm.
    pub fn noise_power_dbm(&self) -> f64 {
        self.noise_density_dbm_hz + 10.0 * self.bandwidth_hz.log10()
    }

    /// Per-user power ceilings in linear mW.
    pub fn p_max_mw(&self) -> Vec<f64> {
        (0..self.num_users)
            .map(|k| 10f64.powf(self.p_max_dbm.dbm(k) / 10.0))
            .collect()
    }

    /// Total bit budget `S * d_avg`.
    pub fn bit_budget(&self) -> f64 {
        self.num_rf_chains as f64 * self.d_avg
    }
}

/// Noise-normalised channels plus the large-scale metadata used to build them.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    /// `M x K`, column `k` is `h_k`.
    pub h: CMat,
    pub distances_m: Vec<f64>,
    pub path_loss_db: Vec<f64>,
    pub shadowing_db: Vec<f64>,
    pub seed: u64,
}

impl ChannelSet {
    /// Wrap a raw channel matrix (no geometry). Mostly useful in tests.
    pub fn from_matrix(h: CMat) -> Self {
        let k = h.ncols();
        ChannelSet {
            h,
            distances_m: vec![0.0; k],
            path_loss_db: vec![0.0; k],
            shadowing_db: vec![0.0; k],
            seed: 0,
        }
    }

    pub fn num_antennas(&self) -> usize {
        self.h.nrows()
    }

    pub fn num_users(&self) -> usize {
        self.h.ncols()
    }
}

/// ULA response with half-wavelength spacing, normalised to unit norm.
pub fn steering_vector(theta: f64, m: usize) -> CVec {
    let scale = 1.0 / (m as f64).sqrt();
    let phase = PI * theta.sin();
    DVector::from_iterator(m, (0..m).map(|i| cexp_j(phase * i as f64) * scale))
}

/// Large-scale path loss `72 + 29.2 log10(mu) + psi` in dB.
pub fn path_loss_db(mu: f64, psi: f64) -> Result<f64> {
    if !(mu > 0.0) {
        return Err(Error::invalid(format!("distance must be positive, got {mu}")));
    }
    Ok(72.0 + 29.2 * mu.log10() + psi)
}

/// Sum of rays `sqrt(M / L) * sum_l alpha_l a(theta_l)` with `L = gains.len()`.
pub fn sv_fast_fading(gains: &[Complex64], angles: &[f64], m: usize) -> CVec {
    assert_eq!(gains.len(), angles.len(), "one gain per ray");
    let mut h = CVec::zeros(m);
    for (&g, &theta) in gains.iter().zip(angles) {
        h += steering_vector(theta, m) * g;
    }
    h * Complex64::from((m as f64 / gains.len() as f64).sqrt())
}

/// Laplacian sample with the given standard deviation.
fn laplace<R: Rng + ?Sized>(rng: &mut R, std: f64) -> f64 {
    let b = std / 2f64.sqrt();
    let u: f64 = rng.random::<f64>() - 0.5;
    -b * u.signum() * (1.0 - 2.0 * u.abs()).max(f64::MIN_POSITIVE).ln()
}

fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Draw the ray gains and angles of one user's clustered channel.
pub fn draw_rays<R: Rng + ?Sized>(rng: &mut R, config: &SystemConfig) -> (Vec<Complex64>, Vec<f64>) {
    let n_rays = config.cluster_count * config.rays_per_cluster;
    let spread = config.angular_spread_deg.to_radians();
    let mut gains = Vec::with_capacity(n_rays);
    let mut angles = Vec::with_capacity(n_rays);
    for _ in 0..config.cluster_count {
        let centre = rng.random_range(-PI / 2.0..=PI / 2.0);
        for _ in 0..config.rays_per_cluster {
            angles.push(centre + laplace(rng, spread));
            gains.push(complex_gaussian(rng));
        }
    }
    (gains, angles)
}

/// Small-scale fading vector before large-scale scaling; `E||h||^2 = M`.
pub fn draw_fast_fading<R: Rng + ?Sized>(rng: &mut R, config: &SystemConfig) -> CVec {
    let (gains, angles) = draw_rays(rng, config);
    sv_fast_fading(&gains, &angles, config.num_antennas)
}

/// Build a seeded scenario. Identical `(config, seed)` gives identical output.
pub fn generate_channels(config: &SystemConfig, seed: u64) -> Result<ChannelSet> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (m, k) = (config.num_antennas, config.num_users);
    let noise_dbm = config.noise_power_dbm();
    let shadow = Normal::new(0.0, config.shadowing_std_db)
        .map_err(|e| Error::invalid(format!("shadowing distribution: {e}")))?;

    let r0 = config.min_distance_m;
    let r1 = config.cell_radius_m;
    let mut h = CMat::zeros(m, k);
    let mut distances = Vec::with_capacity(k);
    let mut losses = Vec::with_capacity(k);
    let mut shadows = Vec::with_capacity(k);
    for user in 0..k {
        // uniform over the annulus r0 <= r <= r1
        let u: f64 = rng.random();
        let mu = (r0 * r0 + u * (r1 * r1 - r0 * r0)).sqrt();
        let psi = shadow.sample(&mut rng);
        let gamma = path_loss_db(mu, psi)?;
        let amplitude = 10f64.powf(-(gamma + noise_dbm) / 20.0);
        let fading = draw_fast_fading(&mut rng, config);
        h.set_column(user, &(fading * Complex64::from(amplitude)));
        distances.push(mu);
        losses.push(gamma);
        shadows.push(psi);
    }
    Ok(ChannelSet {
        h,
        distances_m: distances,
        path_loss_db: losses,
        shadowing_db: shadows,
        seed,
    })
}
