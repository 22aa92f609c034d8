#![allow(dead_code)]

use num_complex::Complex64;
use pbsca::linalg::CMat;
use pbsca::objective::{AuxiliaryVariables, SolverVariables};
use pbsca::{generate_channels, ChannelSet, SystemConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn tiny_system() -> SystemConfig {
    SystemConfig {
        num_antennas: 4,
        num_rf_chains: 2,
        num_users: 2,
        num_scheduled: 1,
        cell_radius_m: 60.0,
        d_avg: 3.0,
        ..SystemConfig::desk()
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_cmat<R: Rng>(rng: &mut R, r: usize, c: usize) -> CMat {
    CMat::from_fn(r, c, |_, _| {
        Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    })
}

/// Random interior point of the feasible set for `sys`.
pub fn random_vars(sys: &SystemConfig, seed: u64) -> SolverVariables {
    let mut r = rng(seed.wrapping_mul(7919).wrapping_add(13));
    let (m, s, k) = (sys.num_antennas, sys.num_rf_chains, sys.num_users);
    let p_max = sys.p_max_mw();
    let lo = sys.d_min as f64;
    let hi = sys.d_max as f64;
    SolverVariables {
        p: (0..k).map(|i| r.random_range(0.1..1.0) * p_max[i]).collect(),
        phi: (0..m * s).map(|_| r.random_range(0.3..6.0)).collect(),
        d: (0..s).map(|_| r.random_range(lo + 0.2..(hi - 0.2).max(lo + 0.3))).collect(),
        v: random_cmat(&mut r, s, k),
        f: random_cmat(&mut r, s, s),
    }
}

pub fn random_aux(k: usize, seed: u64) -> AuxiliaryVariables {
    let mut r = rng(seed ^ 0xa5a5);
    AuxiliaryVariables {
        eta: (0..k).map(|_| r.random_range(0.0..3.0)).collect(),
        nu: (0..k)
            .map(|_| Complex64::new(r.random_range(-0.5..0.5), r.random_range(-0.5..0.5)))
            .collect(),
    }
}

pub fn instance(sys: &SystemConfig, seed: u64) -> (ChannelSet, SolverVariables) {
    (generate_channels(sys, seed).unwrap(), random_vars(sys, seed))
}

pub fn central_diff<F: FnMut(&[f64]) -> f64>(x: &[f64], h: f64, mut f: F) -> Vec<f64> {
    let mut work = x.to_vec();
    (0..x.len())
        .map(|i| {
            work[i] = x[i] + h;
            let up = f(&work);
            work[i] = x[i] - h;
            let down = f(&work);
            work[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

pub fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&diff) / norm(b).max(1e-300)
}

/// Central differences of `f` with respect to the real and imaginary parts
/// of every entry of `m`.
pub fn complex_matrix_fd<F: FnMut(&CMat) -> f64>(m: &CMat, h: f64, mut f: F) -> Vec<f64> {
    let mut work = m.clone();
    let mut out = Vec::new();
    for idx in 0..m.len() {
        for dir in [Complex64::new(h, 0.0), Complex64::new(0.0, h)] {
            work[idx] = m[idx] + dir;
            let up = f(&work);
            work[idx] = m[idx] - dir;
            let down = f(&work);
            work[idx] = m[idx];
            out.push((up - down) / (2.0 * h));
        }
    }
    out
}

/// Maximise `c1 sqrt(p) - a p - q p^2` on `[0, p_max]` by golden-section
/// search. Points are compared through the exact difference
/// `(x1 - x2) (c1 / (sqrt x1 + sqrt x2) - a - q (x1 + x2))`, which keeps
/// resolution down to round-off instead of `sqrt(eps)`.
pub fn golden_section_power(c1: f64, a: f64, q: f64, p_max: f64) -> f64 {
    let diff = |x1: f64, x2: f64| -> f64 {
        let s = x1.sqrt() + x2.sqrt();
        let slope = if s > 0.0 { c1 / s } else { 0.0 };
        (x1 - x2) * (slope - a - q * (x1 + x2))
    };
    let g = (5.0f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (0.0, p_max);
    for _ in 0..400 {
        let x1 = hi - g * (hi - lo);
        let x2 = lo + g * (hi - lo);
        if diff(x1, x2) < 0.0 {
            lo = x1;
        } else {
            hi = x2;
        }
    }
    let x = 0.5 * (lo + hi);
    // endpoints win ties against the interior estimate
    if diff(0.0, x) >= 0.0 {
        0.0
    } else if diff(p_max, x) >= 0.0 {
        p_max
    } else {
        x
    }
}

/// Surrogate of the bit block: `g.(x - c) - tau |x - c|^2`.
pub fn bit_surrogate(x: &[f64], c: &[f64], g: &[f64], tau: f64) -> f64 {
    x.iter()
        .zip(c)
        .zip(g)
        .map(|((xi, ci), gi)| gi * (xi - ci) - tau * (xi - ci).powi(2))
        .sum()
}

/// Brute-force maximiser of the bit surrogate over
/// `{lo <= x <= hi, sum x <= budget}` for `len <= 4`.
///
/// The first `S - 1` coordinates are scanned on successively finer grids
/// ending at spacing `step`; the objective is concave, so the optimum stays
/// near each pass's winner. The last coordinate is optimised exactly given
/// the others.
pub fn brute_force_bits(c: &[f64], g: &[f64], tau: f64, lo: f64, hi: f64, budget: f64, step: f64) -> Vec<f64> {
    let s = c.len();
    let last = |prefix: &[f64]| -> Option<f64> {
        let room = budget - prefix.iter().sum::<f64>();
        if room < lo {
            return None;
        }
        Some((c[s - 1] + g[s - 1] / (2.0 * tau)).clamp(lo, hi.min(room)))
    };
    let search = |ranges: &[(f64, f64)], h: f64| -> Vec<f64> {
        let counts: Vec<usize> = ranges.iter().map(|(a, b)| ((b - a) / h).round() as usize + 1).collect();
        let total: usize = counts.iter().product();
        let mut best = (f64::NEG_INFINITY, Vec::new());
        let mut prefix = vec![0.0; s - 1];
        for flat in 0..total.max(1) {
            let mut rem = flat;
            for (j, &n) in counts.iter().enumerate() {
                prefix[j] = (ranges[j].0 + (rem % n) as f64 * h).min(ranges[j].1);
                rem /= n;
            }
            if let Some(xl) = last(&prefix) {
                let mut x = prefix.clone();
                x.push(xl);
                let val = bit_surrogate(&x, c, g, tau);
                if val > best.0 {
                    best = (val, x);
                }
            }
        }
        best.1
    };
    if s == 1 {
        return search(&[], step);
    }
    // coarse-to-fine: each pass scans 3 coarse cells either side of the
    // previous winner
    let mut ranges: Vec<(f64, f64)> = vec![(lo, hi); s - 1];
    let mut best = Vec::new();
    for h in [0.05, 0.005, step] {
        best = search(&ranges, h);
        ranges = best[..s - 1]
            .iter()
            .map(|&x| ((x - 3.0 * h).max(lo), (x + 3.0 * h).min(hi)))
            .collect();
    }
    best
}
