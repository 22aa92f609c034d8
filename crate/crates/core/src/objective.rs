//! Physical objective (SINR, per-user rate, sum rate) and the
//! fractional-programming surrogate `sum_k f_k(xi, eta, nu)` with its
//! analytic gradients in the bit and phase blocks.
//!
//! Notation used throughout: `G = Phi^H H`, `b_l = D_rho G e_l`, the
//! effective per-user combiner `u_k = F v_k`, `w_k = D_rho u_k` and the
//! cross gains `e_kl = u_k^H b_l`. With these,
//!
//! ```text
//! omega_k = sum_l p_l |e_kl|^2 + ||Phi w_k||^2 + sum_s |u_sk|^2 [C_q]_ss
//! ```
//!
//! The surrogate is the natural-log Lagrangian-dual/quadratic transform
//! expressed in bits:
//!
//! ```text
//! f_k = log2(1 + eta_k)
//!     + (2 Re{sqrt(p_k (1 + eta_k)) conj(nu_k) e_kk} - eta_k - |nu_k|^2 omega_k) / ln 2
//! ```
//!
//! so that `eta_k = SINR_k` together with the closed-form `nu_k` is the
//! joint maximiser and the maximum equals `log2(1 + SINR_k)`.

use std::f64::consts::{LN_2, LOG2_E};

use num_complex::Complex64;

use crate::linalg::{cexp_j, CMat};
use crate::model::{ChannelSet, SystemConfig};
use crate::quantizer::{zeta_unchecked, QuantizationState};

/// Optimisation block `xi = (p, phi, d, v, f)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverVariables {
    /// Transmit powers in linear mW, length `K`.
    pub p: Vec<f64>,
    /// Analog phases, length `M * S`; entry `s * M + m` drives `Phi(m, s)`.
    pub phi: Vec<f64>,
    /// Relaxed bit allocation, length `S`.
    pub d: Vec<f64>,
    /// `S x K`, column `k` is the receive beamformer `v_k`.
    pub v: CMat,
    /// `S x S` digital combiner `F`.
    pub f: CMat,
}

/// Fractional-programming auxiliaries.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxiliaryVariables {
    pub eta: Vec<f64>,
    pub nu: Vec<Complex64>,
}

impl AuxiliaryVariables {
    pub fn zeros(k: usize) -> Self {
        AuxiliaryVariables {
            eta: vec![0.0; k],
            nu: vec![Complex64::new(0.0, 0.0); k],
        }
    }
}

/// Column `s` of the DFT-like beam grid: beam `s` points at
/// `sin(theta_s) = -1 + (2s + 1) / S`.
fn grid_phases(m: usize, s: usize) -> Vec<f64> {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut phi = Vec::with_capacity(m * s);
    for col in 0..s {
        let sin_theta = -1.0 + (2 * col + 1) as f64 / s as f64;
        for row in 0..m {
            phi.push((std::f64::consts::PI * row as f64 * sin_theta).rem_euclid(two_pi));
        }
    }
    phi
}

impl SolverVariables {
    /// Feasible starting point: full power, grid analog beams, uniform bits
    /// at `d_avg`, identity `F` and matched-filter `v_k = D_rho Phi^H h_k`.
    pub fn initial(config: &SystemConfig, channels: &ChannelSet) -> Self {
        let (m, s, k) = (config.num_antennas, config.num_rf_chains, config.num_users);
        assert_eq!(channels.num_antennas(), m, "channel/antenna mismatch");
        assert_eq!(channels.num_users(), k, "channel/user mismatch");
        let phi = grid_phases(m, s);
        let d_avg = config.d_avg.clamp(config.d_min as f64, config.d_max as f64);
        let d = vec![d_avg; s];
        let rho: Vec<f64> = d.iter().map(|&x| 1.0 - zeta_unchecked(x)).collect();
        let phi_mat = assemble_phi(&phi, m, s);
        let mut v = phi_mat.adjoint() * &channels.h;
        for (row, r) in rho.iter().enumerate() {
            v.row_mut(row).scale_mut(*r);
        }
        SolverVariables {
            p: config.p_max_mw(),
            phi,
            d,
            v,
            f: CMat::identity(s, s),
        }
    }

    pub fn num_users(&self) -> usize {
        self.p.len()
    }

    pub fn num_rf_chains(&self) -> usize {
        self.d.len()
    }
}

/// Unit-modulus analog combiner with `Phi(m, s) = exp(j phi[s * M + m])`.
pub fn assemble_phi(phi: &[f64], m: usize, s: usize) -> CMat {
    assert_eq!(phi.len(), m * s, "phase vector must have M*S entries");
    CMat::from_fn(m, s, |row, col| cexp_j(phi[col * m + row]))
}

/// All intermediate quantities of one forward evaluation at a fixed `xi`.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub phi: CMat,
    pub quant: QuantizationState,
    /// `Phi^H H`, `S x K`.
    pub g: CMat,
    /// `D_rho Phi^H H`, `S x K`.
    pub b: CMat,
    /// `F V`, `S x K`.
    pub u: CMat,
    /// `D_rho F V`, `S x K`.
    pub w: CMat,
    /// `e[(k, l)] = u_k^H b_l`.
    pub e: CMat,
    /// Post-combining thermal noise `||Phi w_k||^2`.
    pub noise: Vec<f64>,
    /// Per-chain input power `sum_l p_l |g_sl|^2 + ||phi_s||^2`.
    pub chain_power: Vec<f64>,
    /// Diagonal of `C_q`.
    pub cq: Vec<f64>,
    /// `u_k^H C_q u_k`.
    pub quant_noise: Vec<f64>,
    pub omega: Vec<f64>,
    pub p: Vec<f64>,
}

impl Evaluation {
    pub fn new(vars: &SolverVariables, channels: &ChannelSet) -> Self {
        let quant = QuantizationState {
            d: vars.d.clone(),
            zeta: vars.d.iter().map(|&x| zeta_unchecked(x)).collect(),
            rho: vars.d.iter().map(|&x| 1.0 - zeta_unchecked(x)).collect(),
        };
        Self::with_quantization(vars, channels, quant)
    }

    /// Evaluate with an explicit quantizer state; `vars.d` is ignored.
    pub fn with_quantization(
        vars: &SolverVariables,
        channels: &ChannelSet,
        quant: QuantizationState,
    ) -> Self {
        let (m, k) = channels.h.shape();
        let s = quant.len();
        assert_eq!(vars.p.len(), k, "one power per user");
        assert_eq!(vars.v.shape(), (s, k), "v must be S x K");
        assert_eq!(vars.f.shape(), (s, s), "F must be S x S");

        let phi = assemble_phi(&vars.phi, m, s);
        let g = phi.adjoint() * &channels.h;
        let mut b = g.clone();
        let u = &vars.f * &vars.v;
        let mut w = u.clone();
        for (row, &r) in quant.rho.iter().enumerate() {
            b.row_mut(row).scale_mut(r);
            w.row_mut(row).scale_mut(r);
        }
        let e = u.adjoint() * &b;
        let phi_w = &phi * &w;
        let noise: Vec<f64> = (0..k).map(|j| phi_w.column(j).norm_squared()).collect();
        let chain_power: Vec<f64> = (0..s)
            .map(|row| {
                let sig: f64 = (0..k).map(|l| vars.p[l] * g[(row, l)].norm_sqr()).sum();
                sig + phi.column(row).norm_squared()
            })
            .collect();
        let cq: Vec<f64> = (0..s)
            .map(|row| quant.rho[row] * quant.zeta[row] * chain_power[row])
            .collect();
        let quant_noise: Vec<f64> = (0..k)
            .map(|j| (0..s).map(|row| u[(row, j)].norm_sqr() * cq[row]).sum())
            .collect();
        let omega = (0..k)
            .map(|j| {
                let total: f64 = (0..k).map(|l| vars.p[l] * e[(j, l)].norm_sqr()).sum();
                total + noise[j] + quant_noise[j]
            })
            .collect();
        Evaluation {
            phi,
            quant,
            g,
            b,
            u,
            w,
            e,
            noise,
            chain_power,
            cq,
            quant_noise,
            omega,
            p: vars.p.clone(),
        }
    }

    pub fn num_users(&self) -> usize {
        self.p.len()
    }

    /// `v_k^H F^H D_rho Phi^H h_k`.
    pub fn signal_amplitude(&self, k: usize) -> Complex64 {
        self.e[(k, k)]
    }

    /// Denominator of the SINR: interference from `l != k`, noise and
    /// quantization noise, summed term by term.
    pub fn interference_plus_noise(&self, k: usize) -> f64 {
        let interference: f64 = (0..self.num_users())
            .filter(|&l| l != k)
            .map(|l| self.p[l] * self.e[(k, l)].norm_sqr())
            .sum();
        interference + self.noise[k] + self.quant_noise[k]
    }

    pub fn sinr(&self, k: usize) -> f64 {
        let signal = self.p[k] * self.signal_amplitude(k).norm_sqr();
        if signal == 0.0 {
            return 0.0;
        }
        let den = self.interference_plus_noise(k);
        if den > 0.0 {
            signal / den
        } else {
            0.0
        }
    }

    pub fn rates(&self) -> Vec<f64> {
        (0..self.num_users()).map(|k| (1.0 + self.sinr(k)).log2()).collect()
    }

    pub fn sum_rate(&self) -> f64 {
        self.rates().iter().sum()
    }

    /// Per-user surrogate `f_k`.
    pub fn fp_term(&self, aux: &AuxiliaryVariables, k: usize) -> f64 {
        let eta = aux.eta[k];
        let nu = aux.nu[k];
        let c = (self.p[k] * (1.0 + eta)).sqrt();
        let cross = 2.0 * c * (nu.conj() * self.signal_amplitude(k)).re;
        (1.0 + eta).log2() + (cross - eta - nu.norm_sqr() * self.omega[k]) * LOG2_E
    }

    pub fn fp_objective(&self, aux: &AuxiliaryVariables) -> f64 {
        (0..self.num_users()).map(|k| self.fp_term(aux, k)).sum()
    }

    /// `Q = sum_l p_l b_l b_l^H + D_rho Phi^H Phi D_rho + C_q`.
    pub fn common_quadratic(&self) -> CMat {
        let s = self.quant.len();
        let mut q = CMat::zeros(s, s);
        for (l, &pl) in self.p.iter().enumerate() {
            let bl = self.b.column(l);
            q += (bl * bl.adjoint()).scale(pl);
        }
        let mut gram = self.phi.adjoint() * &self.phi;
        for i in 0..s {
            for j in 0..s {
                gram[(i, j)] *= self.quant.rho[i] * self.quant.rho[j];
            }
        }
        q += gram;
        for i in 0..s {
            q[(i, i)] += Complex64::from(self.cq[i]);
        }
        q
    }

    /// Gradient of `sum_k f_k` with respect to the relaxed bits, with
    /// `eta, nu, F, v, p, phi` held fixed.
    pub fn grad_d(&self, aux: &AuxiliaryVariables) -> Vec<f64> {
        let s = self.quant.len();
        let k_users = self.num_users();
        let ln4 = 2.0 * LN_2;
        let gram_w = self.phi.adjoint() * (&self.phi * &self.w);
        (0..s)
            .map(|row| {
                let zeta = self.quant.zeta[row];
                let mut d_rho = 0.0;
                let mut d_rho_zeta = 0.0;
                for k in 0..k_users {
                    let nu = aux.nu[k];
                    let nu2 = nu.norm_sqr();
                    let c = (self.p[k] * (1.0 + aux.eta[k])).sqrt();
                    let uc = self.u[(row, k)].conj();
                    d_rho += 2.0 * c * (nu.conj() * uc * self.g[(row, k)]).re;
                    if nu2 == 0.0 {
                        continue;
                    }
                    let interference: f64 = (0..k_users)
                        .map(|l| {
                            2.0 * self.p[l] * (self.e[(k, l)].conj() * uc * self.g[(row, l)]).re
                        })
                        .sum();
                    let noise = 2.0 * (uc * gram_w[(row, k)]).re;
                    d_rho -= nu2 * (interference + noise);
                    d_rho_zeta -= nu2 * self.u[(row, k)].norm_sqr() * self.chain_power[row];
                }
                // d rho / dd = ln4 zeta, d (rho zeta) / dd = ln4 zeta (2 zeta - 1)
                ln4 * zeta * (d_rho + d_rho_zeta * (2.0 * zeta - 1.0)) * LOG2_E
            })
            .collect()
    }

    /// Gradient of `sum_k f_k` with respect to the analog phases (layout as
    /// [`SolverVariables::phi`]).
    pub fn grad_phi(&self, aux: &AuxiliaryVariables, channels: &ChannelSet) -> Vec<f64> {
        let (m, s) = self.phi.shape();
        let k_users = self.num_users();
        let h = &channels.h;
        // Wirtinger gradient with respect to conj(Phi); d/dtheta = 2 Im{G conj(Phi)}
        let mut coeff = CMat::zeros(k_users, k_users);
        let mut nu2 = vec![0.0; k_users];
        for k in 0..k_users {
            let nu = aux.nu[k];
            nu2[k] = nu.norm_sqr();
            let c = (self.p[k] * (1.0 + aux.eta[k])).sqrt();
            coeff[(k, k)] += nu.conj() * c;
            for l in 0..k_users {
                coeff[(l, k)] -= self.e[(k, l)].conj() * (self.p[l] * nu2[k]);
            }
        }
        let w_adj = self.w.adjoint();
        let mut grad = h * coeff * &w_adj;

        let mut w_scaled = self.w.clone();
        for (k, &n2) in nu2.iter().enumerate() {
            w_scaled.column_mut(k).scale_mut(n2);
        }
        grad -= &self.phi * (w_scaled * &w_adj);

        let mut hp = h.clone();
        for (l, &pl) in self.p.iter().enumerate() {
            hp.column_mut(l).scale_mut(pl);
        }
        let mut power_term = hp * h.adjoint() * &self.phi + &self.phi;
        for row in 0..s {
            let r: f64 = (0..k_users)
                .map(|k| nu2[k] * self.u[(row, k)].norm_sqr())
                .sum::<f64>()
                * self.quant.rho[row]
                * self.quant.zeta[row];
            power_term.column_mut(row).scale_mut(r);
        }
        grad -= power_term;

        let mut out = vec![0.0; m * s];
        for col in 0..s {
            for row in 0..m {
                out[col * m + row] =
                    2.0 * (grad[(row, col)] * self.phi[(row, col)].conj()).im * LOG2_E;
            }
        }
        out
    }

    /// Sensitivity `W[(j, l)] = d omega_j / d p_l`.
    pub fn omega_power_sensitivity(&self) -> CMat {
        let k_users = self.num_users();
        let s = self.quant.len();
        CMat::from_fn(k_users, k_users, |j, l| {
            let quant: f64 = (0..s)
                .map(|row| {
                    self.u[(row, j)].norm_sqr()
                        * self.quant.rho[row]
                        * self.quant.zeta[row]
                        * self.g[(row, l)].norm_sqr()
                })
                .sum();
            Complex64::from(self.e[(j, l)].norm_sqr() + quant)
        })
    }
}

pub fn sinr(vars: &SolverVariables, channels: &ChannelSet, k: usize) -> f64 {
    Evaluation::new(vars, channels).sinr(k)
}

pub fn sum_rate(vars: &SolverVariables, channels: &ChannelSet) -> f64 {
    Evaluation::new(vars, channels).sum_rate()
}

pub fn omega(vars: &SolverVariables, channels: &ChannelSet, k: usize) -> f64 {
    Evaluation::new(vars, channels).omega[k]
}

pub fn fp_objective(vars: &SolverVariables, aux: &AuxiliaryVariables, channels: &ChannelSet) -> f64 {
    Evaluation::new(vars, channels).fp_objective(aux)
}

pub fn common_quadratic(vars: &SolverVariables, channels: &ChannelSet) -> CMat {
    Evaluation::new(vars, channels).common_quadratic()
}

pub fn grad_d(vars: &SolverVariables, aux: &AuxiliaryVariables, channels: &ChannelSet) -> Vec<f64> {
    Evaluation::new(vars, channels).grad_d(aux)
}

pub fn grad_phi(vars: &SolverVariables, aux: &AuxiliaryVariables, channels: &ChannelSet) -> Vec<f64> {
    Evaluation::new(vars, channels).grad_phi(aux, channels)
}

/// Closed-form auxiliaries at `xi`: `eta = SINR`, then `nu` from the
/// quadratic transform.
pub fn optimal_auxiliaries(eval: &Evaluation) -> AuxiliaryVariables {
    let k_users = eval.num_users();
    let eta: Vec<f64> = (0..k_users).map(|k| eval.sinr(k)).collect();
    let nu = (0..k_users)
        .map(|k| {
            let om = eval.omega[k];
            if om > 0.0 {
                eval.signal_amplitude(k) * ((eval.p[k] * (1.0 + eta[k])).sqrt() / om)
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
        .collect();
    AuxiliaryVariables { eta, nu }
}
