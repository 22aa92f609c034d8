//! Additive quantization noise model (AQNM) for the per-chain ADCs, and the
//! threshold rounding that maps a relaxed bit allocation back to integers.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::CMat;

/// `pi * sqrt(3) / 2`, the AQNM distortion constant.
pub const ZETA_SCALE: f64 = PI * 1.732_050_807_568_877_2 / 2.0;

/// Normalised quantization error `zeta(d) = (pi sqrt(3) / 2) 4^(-d)`.
///
/// Non-integer `d` is allowed; `d = +inf` gives an ideal (noise-free) ADC.
pub fn quant_error(d: f64) -> Result<f64> {
    if d.is_nan() || d < 0.0 {
        return Err(Error::invalid(format!("bit count must be >= 0, got {d}")));
    }
    Ok(zeta_unchecked(d))
}

#[inline]
pub(crate) fn zeta_unchecked(d: f64) -> f64 {
    ZETA_SCALE * 4f64.powf(-d)
}

/// Quantization gain `rho = 1 - zeta`.
pub fn quant_gain(d: f64) -> Result<f64> {
    quant_error(d).map(|z| 1.0 - z)
}

/// Per-chain AQNM parameters for a bit vector.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizationState {
    pub d: Vec<f64>,
    pub zeta: Vec<f64>,
    pub rho: Vec<f64>,
}

impl QuantizationState {
    pub fn new(d: &[f64]) -> Result<Self> {
        let zeta = d.iter().map(|&x| quant_error(x)).collect::<Result<Vec<_>>>()?;
        Ok(Self::from_parts(d.to_vec(), zeta))
    }

    /// Build directly from distortion factors (bypasses the bit mapping).
    pub fn from_zeta(zeta: &[f64]) -> Self {
        let d = zeta
            .iter()
            .map(|&z| if z > 0.0 { (ZETA_SCALE / z).log(4.0) } else { f64::INFINITY })
            .collect();
        Self::from_parts(d, zeta.to_vec())
    }

    fn from_parts(d: Vec<f64>, zeta: Vec<f64>) -> Self {
        let rho = zeta.iter().map(|z| 1.0 - z).collect();
        QuantizationState { d, zeta, rho }
    }

    pub fn len(&self) -> usize {
        self.d.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d.is_empty()
    }
}

/// Diagonal of `C_q = D_rho D_zeta diag(Phi^H H P H^H Phi + Phi^H Phi)`.
pub fn quant_noise_diag(phi: &CMat, h: &CMat, p: &[f64], q: &QuantizationState) -> Result<Vec<f64>> {
    let (m, s) = phi.shape();
    if h.nrows() != m {
        return Err(Error::invalid(format!(
            "Phi has {m} rows but H has {}",
            h.nrows()
        )));
    }
    if h.ncols() != p.len() {
        return Err(Error::invalid(format!(
            "H has {} columns but {} powers were given",
            h.ncols(),
            p.len()
        )));
    }
    if q.len() != s {
        return Err(Error::invalid(format!(
            "Phi has {s} columns but {} bit entries were given",
            q.len()
        )));
    }
    if p.iter().any(|&x| !(x >= 0.0)) {
        return Err(Error::invalid("powers must be non-negative"));
    }
    let g = phi.adjoint() * h;
    Ok((0..s)
        .map(|i| {
            let signal: f64 = (0..p.len()).map(|l| p[l] * g[(i, l)].norm_sqr()).sum();
            let gain: f64 = phi.column(i).norm_squared();
            q.rho[i] * q.zeta[i] * (signal + gain)
        })
        .collect())
}

/// Densify a diagonal into an `S x S` matrix.
pub fn diag_to_dense(diag: &[f64]) -> CMat {
    let n = diag.len();
    let mut out = CMat::zeros(n, n);
    for (i, &v) in diag.iter().enumerate() {
        out[(i, i)] = Complex64::from(v);
    }
    out
}

/// Dense quantization-noise covariance for bit vector `d`.
pub fn quant_noise_cov(phi: &CMat, h: &CMat, p: &[f64], d: &[f64]) -> Result<CMat> {
    let q = QuantizationState::new(d)?;
    quant_noise_diag(phi, h, p, &q).map(|diag| diag_to_dense(&diag))
}

#[inline]
fn rounded_at(d_star: &[f64], eps: f64) -> impl Iterator<Item = f64> + '_ {
    d_star.iter().map(move |&x| {
        let fl = x.floor();
        if x - fl <= eps {
            fl
        } else {
            x.ceil()
        }
    })
}

/// Threshold rounding of a relaxed allocation.
///
/// Entry `s` is floored when its fractional part is at most `eps` and ceiled
/// otherwise. The total is non-increasing in `eps`, and only changes when
/// `eps` crosses a fractional part, so the smallest feasible `eps` is one of
/// `{0} U {frac(d_s)}` and is located by bisection over that sorted set.
/// Results are clamped to `[d_min, d_max]` before the budget check.
pub fn round_bits(d_star: &[f64], d_avg: f64, d_min: u32, d_max: u32) -> Result<Vec<u32>> {
    if d_min > d_max {
        return Err(Error::invalid("d_min must not exceed d_max"));
    }
    for &x in d_star {
        if !x.is_finite() || x < d_min as f64 || x > d_max as f64 {
            return Err(Error::invalid(format!(
                "relaxed bit {x} outside [{d_min}, {d_max}]"
            )));
        }
    }
    // absorbs round-off in S * d_avg for non-representable averages
    let budget = d_star.len() as f64 * d_avg + 1e-9;
    let (lo, hi) = (d_min as f64, d_max as f64);
    let total = |eps: f64| -> f64 { rounded_at(d_star, eps).map(|x| x.clamp(lo, hi)).sum() };

    let mut candidates: Vec<f64> = std::iter::once(0.0)
        .chain(d_star.iter().map(|x| x - x.floor()))
        .collect();
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();

    // all floors: the largest candidate floors every entry
    let last = *candidates.last().expect("candidate set contains 0");
    if total(last) > budget {
        return Err(Error::Infeasible(format!(
            "sum of floors exceeds budget {budget}"
        )));
    }
    // smallest index with total(candidates[idx]) <= budget
    let (mut left, mut right) = (0usize, candidates.len() - 1);
    while left < right {
        let mid = (left + right) / 2;
        if total(candidates[mid]) <= budget {
            right = mid;
        } else {
            left = mid + 1;
        }
    }
    let eps = candidates[left];
    Ok(rounded_at(d_star, eps)
        .map(|x| x.clamp(lo, hi) as u32)
        .collect())
}
