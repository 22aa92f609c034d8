//! Comparison schemes built on the same block engine as P-BSCA.
//!
//! - SA: the Ky Fan penalty is replaced by an iteratively reweighted
//!   quadratic surrogate of `||p||_q^q`.
//! - UA: bits frozen at `d_avg` on every chain.
//! - RS: a uniformly random `N`-subset with all other powers pinned at zero.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ChannelSet, SystemConfig};
use crate::solver::{solve_with, EngineOptions, PowerRegularizer, ScheduleResult, SolverConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scheme {
    #[serde(rename = "PBSCA")]
    Pbsca,
    #[serde(rename = "SA")]
    Sa,
    #[serde(rename = "UA")]
    Ua,
    #[serde(rename = "RS")]
    Rs,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [Scheme::Pbsca, Scheme::Sa, Scheme::Ua, Scheme::Rs];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Pbsca => "PBSCA",
            Scheme::Sa => "SA",
            Scheme::Ua => "UA",
            Scheme::Rs => "RS",
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "PBSCA" | "P-BSCA" => Ok(Scheme::Pbsca),
            "SA" => Ok(Scheme::Sa),
            "UA" => Ok(Scheme::Ua),
            "RS" => Ok(Scheme::Rs),
            other => Err(Error::invalid(format!("unknown scheme '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchmarkConfig {
    pub sa_p_exponent: f64,
    pub sa_smoothing: f64,
    /// Weights are refreshed every this many inner iterations.
    pub sa_reweight_iters: usize,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            sa_p_exponent: 0.5,
            sa_smoothing: 1e-2,
            sa_reweight_iters: 1,
        }
    }
}

impl BenchmarkConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sa_p_exponent > 0.0 && self.sa_p_exponent <= 1.0) {
            return Err(Error::invalid("sa_p_exponent must lie in (0, 1]"));
        }
        if !(self.sa_smoothing > 0.0) {
            return Err(Error::invalid("sa_smoothing must be positive"));
        }
        if self.sa_reweight_iters == 0 {
            return Err(Error::invalid("sa_reweight_iters must be at least 1"));
        }
        Ok(())
    }
}

pub fn solve_sa(
    channels: &ChannelSet,
    sys: &SystemConfig,
    cfg: &SolverConfig,
    bench: &BenchmarkConfig,
) -> Result<ScheduleResult> {
    bench.validate()?;
    let opts = EngineOptions {
        regularizer: PowerRegularizer::Reweighted {
            exponent: bench.sa_p_exponent,
            smoothing: bench.sa_smoothing,
            period: bench.sa_reweight_iters,
        },
        adapt_bits: true,
    };
    solve_with(channels, sys, cfg, &opts)
}

pub fn solve_ua(channels: &ChannelSet, sys: &SystemConfig, cfg: &SolverConfig) -> Result<ScheduleResult> {
    if sys.d_avg.fract() != 0.0 {
        return Err(Error::invalid(format!(
            "uniform allocation needs an integer d_avg, got {}",
            sys.d_avg
        )));
    }
    let opts = EngineOptions {
        regularizer: PowerRegularizer::KyFan,
        adapt_bits: false,
    };
    solve_with(channels, sys, cfg, &opts)
}

/// Draw `N` of `K` users uniformly from `seed`.
pub fn random_support(k: usize, n: usize, seed: u64) -> Vec<bool> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mask = vec![false; k];
    for i in sample(&mut rng, k, n.min(k)) {
        mask[i] = true;
    }
    mask
}

pub fn solve_rs(
    channels: &ChannelSet,
    sys: &SystemConfig,
    cfg: &SolverConfig,
    seed: u64,
) -> Result<ScheduleResult> {
    let mask = random_support(sys.num_users, sys.num_scheduled, seed);
    let opts = EngineOptions {
        regularizer: PowerRegularizer::FixedSupport(mask),
        adapt_bits: true,
    };
    solve_with(channels, sys, cfg, &opts)
}

/// Dispatch on `scheme`; `seed` only matters for RS.
pub fn solve_scheme(
    scheme: Scheme,
    channels: &ChannelSet,
    sys: &SystemConfig,
    cfg: &SolverConfig,
    bench: &BenchmarkConfig,
    seed: u64,
) -> Result<ScheduleResult> {
    match scheme {
        Scheme::Pbsca => crate::solver::pbsca_solve(channels, sys, cfg),
        Scheme::Sa => solve_sa(channels, sys, cfg, bench),
        Scheme::Ua => solve_ua(channels, sys, cfg),
        Scheme::Rs => solve_rs(channels, sys, cfg, seed),
    }
}
