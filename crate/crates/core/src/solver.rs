//! Penalty block successive concave approximation.
//!
//! The outer loop grows the cardinality penalty weight `lambda`; the inner
//! loop sweeps the blocks in the order `(eta, nu)`, `F`, `v`, `d`, `phi`,
//! `p`. Every block either maximises the objective exactly (`eta/nu`, `F`,
//! `v`), maximises a minorant (`p`, via the DC split of the Ky Fan
//! penalty), or is a proximal-gradient step that is only accepted when it
//! does not decrease the objective (`d`, `phi`; the proximal weight is
//! grown on rejection).

use std::f64::consts::LOG2_E;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kyfan::{kyfan_subgradient_balanced, magnitude_order, penalty_value, PenaltySchedule};
use crate::linalg::{hermitian_pinv, CMat, PINV_REL_TOL};
use crate::model::{ChannelSet, SystemConfig};
use crate::objective::{optimal_auxiliaries, AuxiliaryVariables, Evaluation, SolverVariables};
use crate::quantizer::round_bits;

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub penalty: PenaltySchedule,
    /// Maximum inner iterations `I`.
    pub max_inner: usize,
    /// Relative change of the penalised objective that ends an inner loop.
    pub inner_tol: f64,
    pub tau_d: f64,
    pub tau_phi: f64,
    pub tau_p: f64,
    /// Multiplier applied to `tau_d` / `tau_phi` when a step is rejected.
    pub tau_growth: f64,
    pub max_backtracks: usize,
    /// Floor for `tau_d` / `tau_phi`. Each step accepted without
    /// backtracking divides the weight by `tau_growth` down to this floor;
    /// setting it equal to the initial weights keeps them fixed.
    pub tau_min: f64,
    /// Powers at or below this are treated as zero when extracting the schedule.
    pub power_floor: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            penalty: PenaltySchedule::default(),
            max_inner: 50,
            inner_tol: 1e-5,
            tau_d: 1.0,
            tau_phi: 1.0,
            tau_p: 1.0,
            tau_growth: 2.0,
            max_backtracks: 20,
            tau_min: 1e-3,
            power_floor: 1e-6,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        self.penalty.validate()?;
        let positive = [
            ("inner_tol", self.inner_tol),
            ("tau_d", self.tau_d),
            ("tau_phi", self.tau_phi),
            ("tau_p", self.tau_p),
            ("power_floor", self.power_floor),
            ("tau_min", self.tau_min),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.tau_growth > 1.0) {
            return Err(Error::invalid("tau_growth must exceed 1"));
        }
        if self.tau_min > self.tau_d.min(self.tau_phi) {
            return Err(Error::invalid("tau_min must not exceed tau_d or tau_phi"));
        }
        if self.max_inner == 0 {
            return Err(Error::invalid("max_inner must be at least 1"));
        }
        Ok(())
    }
}

impl SolverConfig {
    /// Proximal weight for the next sweep after `step`.
    pub fn next_tau(&self, step: &ProximalStep) -> f64 {
        if step.accepted && step.backtracks == 0 {
            (step.tau / self.tau_growth).max(self.tau_min)
        } else {
            step.tau
        }
    }
}

/// One inner iteration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    /// Global inner-iteration counter across all outer iterations.
    pub iter: usize,
    pub outer: usize,
    pub inner: usize,
    pub lambda: f64,
    /// `sum_k f_k` at the end of the iteration.
    pub fp_objective: f64,
    /// `sum_k f_k - lambda * penalty` (or the benchmark's own regulariser).
    pub penalized_objective: f64,
    pub sum_rate: f64,
    pub penalty_value: f64,
    /// Penalised objective before the sweep and after each of the six
    /// blocks `(eta, nu)`, `F`, `v`, `d`, `phi`, `p`.
    pub block_objectives: [f64; 7],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OuterRow {
    pub outer: usize,
    pub lambda: f64,
    pub inner_iterations: usize,
    pub penalty_value: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SolveTrace {
    pub rows: Vec<TraceRow>,
    pub outer: Vec<OuterRow>,
    /// Degenerate events, e.g. a skipped `F` update.
    pub events: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleResult {
    /// Exactly `N` user indices in ascending order.
    pub scheduled_users: Vec<usize>,
    pub p: Vec<f64>,
    pub phi: Vec<f64>,
    pub d_integer: Vec<u32>,
    pub v: CMat,
    pub f: CMat,
    /// Per-user rates in bits/s/Hz (zero for unscheduled users).
    pub user_rates: Vec<f64>,
    pub sum_rate: f64,
    pub converged: bool,
    /// Fewer than `N` users had positive power and the schedule was padded.
    pub padded: bool,
    pub trace: SolveTrace,
}

impl ScheduleResult {
    /// Verify the schedule against the problem constraints.
    pub fn check_feasible(&self, sys: &SystemConfig) -> Result<()> {
        let n = sys.num_scheduled;
        if self.scheduled_users.len() != n {
            return Err(Error::Infeasible(format!(
                "{} users scheduled, expected {n}",
                self.scheduled_users.len()
            )));
        }
        let total: u32 = self.d_integer.iter().sum();
        if total as f64 > sys.bit_budget() + 1e-9 {
            return Err(Error::Infeasible(format!(
                "bit total {total} exceeds budget {}",
                sys.bit_budget()
            )));
        }
        if self
            .d_integer
            .iter()
            .any(|&d| d < sys.d_min || d > sys.d_max)
        {
            return Err(Error::Infeasible("bit allocation outside [d_min, d_max]".into()));
        }
        let p_max = sys.p_max_mw();
        for (k, &pk) in self.p.iter().enumerate() {
            let scheduled = self.scheduled_users.contains(&k);
            if !scheduled && pk != 0.0 {
                return Err(Error::Infeasible(format!("unscheduled user {k} has power {pk}")));
            }
            if !(0.0..=p_max[k]).contains(&pk) {
                return Err(Error::Infeasible(format!("power of user {k} outside box")));
            }
        }
        if self.phi.iter().any(|x| !(0.0..=TWO_PI).contains(x)) {
            return Err(Error::Infeasible("phase outside [0, 2pi]".into()));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Auxiliary blocks

pub fn update_eta(vars: &SolverVariables, channels: &ChannelSet) -> Vec<f64> {
    let ev = Evaluation::new(vars, channels);
    (0..vars.num_users()).map(|k| ev.sinr(k)).collect()
}

pub fn update_nu(vars: &SolverVariables, eta: &[f64], channels: &ChannelSet) -> Vec<Complex64> {
    let ev = Evaluation::new(vars, channels);
    nu_from(&ev, eta)
}

fn nu_from(ev: &Evaluation, eta: &[f64]) -> Vec<Complex64> {
    (0..ev.num_users())
        .map(|k| {
            let om = ev.omega[k];
            if om > 0.0 {
                ev.signal_amplitude(k) * ((ev.p[k] * (1.0 + eta[k])).sqrt() / om)
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Combiner blocks

/// Outcome of the digital-combiner update.
#[derive(Debug, Clone, PartialEq)]
pub enum FUpdate {
    Solved(CMat),
    /// `Q` could not be factorised; the caller keeps the previous `F`.
    Degenerate,
}

fn user_weight(ev: &Evaluation, aux: &AuxiliaryVariables, k: usize) -> f64 {
    (ev.p[k] * (1.0 + aux.eta[k])).sqrt()
}

/// Stationary point of `sum_k f_k` in `F`: `Q F V = A` with
/// `A = sum_k c_k conj(nu_k) b_k v_k^H` and `V = sum_k |nu_k|^2 v_k v_k^H`,
/// solved as `F = Q^{-1} A V^+` (minimum-norm when `V` is rank deficient).
pub fn update_f(vars: &SolverVariables, aux: &AuxiliaryVariables, channels: &ChannelSet) -> FUpdate {
    let ev = Evaluation::new(vars, channels);
    update_f_eval(&ev, vars, aux)
}

fn update_f_eval(ev: &Evaluation, vars: &SolverVariables, aux: &AuxiliaryVariables) -> FUpdate {
    let s = vars.num_rf_chains();
    let mut a = CMat::zeros(s, s);
    let mut vv = CMat::zeros(s, s);
    for k in 0..vars.num_users() {
        let nu = aux.nu[k];
        if nu.norm_sqr() == 0.0 {
            continue;
        }
        let vk = vars.v.column(k);
        let bk = ev.b.column(k);
        a += (bk * vk.adjoint()) * (nu.conj() * user_weight(ev, aux, k));
        vv += (vk * vk.adjoint()).scale(nu.norm_sqr());
    }
    let q = ev.common_quadratic();
    let Some(chol) = q.cholesky() else {
        return FUpdate::Degenerate;
    };
    let f = chol.solve(&(a * hermitian_pinv(&vv, PINV_REL_TOL)));
    if f.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        FUpdate::Solved(f)
    } else {
        FUpdate::Degenerate
    }
}

/// Per-user maximiser of `f_k` in `v_k`:
/// `v_k = (c_k / nu_k) (F^H Q F)^+ F^H b_k`; users with `nu_k = 0` keep `v_k`.
pub fn update_v(vars: &SolverVariables, aux: &AuxiliaryVariables, channels: &ChannelSet) -> CMat {
    let ev = Evaluation::new(vars, channels);
    update_v_eval(&ev, vars, aux)
}

fn update_v_eval(ev: &Evaluation, vars: &SolverVariables, aux: &AuxiliaryVariables) -> CMat {
    let q = ev.common_quadratic();
    let fh = vars.f.adjoint();
    let gram = &fh * &q * &vars.f;
    let gram_pinv = hermitian_pinv(&gram, PINV_REL_TOL);
    let proj = &gram_pinv * &fh * &ev.b;
    let mut v = vars.v.clone();
    for k in 0..vars.num_users() {
        let nu = aux.nu[k];
        if nu.norm_sqr() == 0.0 {
            continue;
        }
        let scale = Complex64::from(user_weight(ev, aux, k)) / nu;
        v.set_column(k, &(proj.column(k) * scale));
    }
    v
}

// ---------------------------------------------------------------------------
// Bit block

/// Maximise `g^T (x - c) - tau ||x - c||^2` over `lo <= x <= hi`,
/// `sum x <= budget`.
///
/// KKT: `x_s(mu) = clamp(c_s + (g_s - mu) / (2 tau))` with the budget
/// multiplier `mu >= 0` found by bisection on the monotone `sum x(mu)`.
pub fn solve_box_budget_qp(
    center: &[f64],
    grad: &[f64],
    tau: f64,
    lo: f64,
    hi: f64,
    budget: f64,
) -> Vec<f64> {
    let at = |mu: f64| -> Vec<f64> {
        center
            .iter()
            .zip(grad)
            .map(|(&c, &g)| (c + (g - mu) / (2.0 * tau)).clamp(lo, hi))
            .collect()
    };
    let unconstrained = at(0.0);
    if unconstrained.iter().sum::<f64>() <= budget {
        return unconstrained;
    }
    // every coordinate sits at `lo` once mu exceeds this
    let mut mu_hi = center
        .iter()
        .zip(grad)
        .map(|(&c, &g)| g + 2.0 * tau * (c - lo))
        .fold(0.0_f64, f64::max)
        + 1.0;
    let mut mu_lo = 0.0;
    while at(mu_hi).iter().sum::<f64>() > budget {
        // only reachable when S * lo > budget, which validation rules out
        mu_hi *= 2.0;
        if !mu_hi.is_finite() {
            break;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (mu_lo + mu_hi);
        if mid <= mu_lo || mid >= mu_hi {
            break;
        }
        if at(mid).iter().sum::<f64>() > budget {
            mu_lo = mid;
        } else {
            mu_hi = mid;
        }
    }
    at(mu_hi)
}

/// Result of a backtracked proximal step.
#[derive(Debug, Clone, PartialEq)]
pub struct ProximalStep {
    pub value: Vec<f64>,
    /// Proximal weight of the accepted step (or the last one tried).
    pub tau: f64,
    pub accepted: bool,
    pub backtracks: usize,
}

fn backtrack<F, E>(
    start: &[f64],
    tau0: f64,
    cfg: &SolverConfig,
    baseline: f64,
    mut propose: F,
    mut evaluate: E,
) -> ProximalStep
where
    F: FnMut(f64) -> Vec<f64>,
    E: FnMut(&[f64]) -> f64,
{
    let mut tau = tau0;
    for attempt in 0..=cfg.max_backtracks {
        let cand = propose(tau);
        if cand.as_slice() == start {
            return ProximalStep {
                value: cand,
                tau,
                accepted: true,
                backtracks: attempt,
            };
        }
        if evaluate(&cand) >= baseline {
            return ProximalStep {
                value: cand,
                tau,
                accepted: true,
                backtracks: attempt,
            };
        }
        tau *= cfg.tau_growth;
    }
    ProximalStep {
        value: start.to_vec(),
        tau,
        accepted: false,
        backtracks: cfg.max_backtracks,
    }
}

/// Proximal linearised step on the relaxed bits under the box and budget
/// constraints, with `tau_d` backtracking on ascent failure.
pub fn update_d(
    vars: &SolverVariables,
    aux: &AuxiliaryVariables,
    channels: &ChannelSet,
    sys: &SystemConfig,
    cfg: &SolverConfig,
) -> ProximalStep {
    let ev = Evaluation::new(vars, channels);
    update_d_eval(&ev, vars, aux, channels, sys, cfg, cfg.tau_d)
}

fn update_d_eval(
    ev: &Evaluation,
    vars: &SolverVariables,
    aux: &AuxiliaryVariables,
    channels: &ChannelSet,
    sys: &SystemConfig,
    cfg: &SolverConfig,
    tau: f64,
) -> ProximalStep {
    let grad = ev.grad_d(aux);
    let baseline = ev.fp_objective(aux);
    let (lo, hi) = (sys.d_min as f64, sys.d_max as f64);
    let budget = sys.bit_budget();
    let mut trial = vars.clone();
    backtrack(
        &vars.d,
        tau,
        cfg,
        baseline,
        |tau| solve_box_budget_qp(&vars.d, &grad, tau, lo, hi, budget),
        |cand| {
            trial.d.copy_from_slice(cand);
            Evaluation::new(&trial, channels).fp_objective(aux)
        },
    )
}

/// Projected gradient step `P[phi + grad / tau_phi]` onto `[0, 2pi]^{MS}`,
/// with `tau_phi` backtracking on ascent failure.
pub fn update_phi(
    vars: &SolverVariables,
    aux: &AuxiliaryVariables,
    channels: &ChannelSet,
    cfg: &SolverConfig,
) -> ProximalStep {
    let ev = Evaluation::new(vars, channels);
    update_phi_eval(&ev, vars, aux, channels, cfg, cfg.tau_phi)
}

pub fn project_phases(phi: &[f64], grad: &[f64], tau: f64) -> Vec<f64> {
    phi.iter()
        .zip(grad)
        .map(|(&x, &g)| (x + g / tau).clamp(0.0, TWO_PI))
        .collect()
}

fn update_phi_eval(
    ev: &Evaluation,
    vars: &SolverVariables,
    aux: &AuxiliaryVariables,
    channels: &ChannelSet,
    cfg: &SolverConfig,
    tau: f64,
) -> ProximalStep {
    let grad = ev.grad_phi(aux, channels);
    let baseline = ev.fp_objective(aux);
    let mut trial = vars.clone();
    backtrack(
        &vars.phi,
        tau,
        cfg,
        baseline,
        |tau| project_phases(&vars.phi, &grad, tau),
        |cand| {
            trial.phi.copy_from_slice(cand);
            Evaluation::new(&trial, channels).fp_objective(aux)
        },
    )
}

// ---------------------------------------------------------------------------
// Power block

/// One separable power subproblem:
/// `max_{0 <= p <= p_max} sqrt_coeff * sqrt(p) - lin_coeff * p - quad_coeff * p^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerCoordinate {
    pub sqrt_coeff: f64,
    pub lin_coeff: f64,
    pub quad_coeff: f64,
    pub p_max: f64,
}

impl PowerCoordinate {
    pub fn value(&self, p: f64) -> f64 {
        self.sqrt_coeff * p.sqrt() - self.lin_coeff * p - self.quad_coeff * p * p
    }

    /// Global maximiser on the box.
    ///
    /// In `u = sqrt(p)` the objective is `c1 u - a u^2 - q u^4` with
    /// derivative `c1 - 2 a u - 4 q u^3`. That derivative is increasing up
    /// to `u_c = sqrt(max(0, -a) / (6 q))` and decreasing after, so the
    /// objective is convex on `[0, u_c]` and concave beyond: the maximum is
    /// at an endpoint or at the single root of the derivative on the
    /// concave stretch, found by bisection.
    pub fn maximize(&self) -> f64 {
        let (c1, a, q) = (self.sqrt_coeff, self.lin_coeff, self.quad_coeff);
        let u_max = self.p_max.max(0.0).sqrt();
        if u_max == 0.0 {
            return 0.0;
        }
        let deriv = |u: f64| c1 - 2.0 * a * u - 4.0 * q * u * u * u;
        let u_c = if q > 0.0 {
            ((-a).max(0.0) / (6.0 * q)).sqrt().min(u_max)
        } else if a < 0.0 {
            u_max
        } else {
            0.0
        };
        let mut candidates = vec![0.0, self.p_max];
        let (mut lo, mut hi) = (u_c, u_max);
        if deriv(lo) > 0.0 && deriv(hi) < 0.0 {
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if deriv(mid) > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let u = 0.5 * (lo + hi);
            candidates.push((u * u).min(self.p_max));
        }
        let mut best = candidates[0];
        let mut best_val = self.value(best);
        for &c in &candidates[1..] {
            let v = self.value(c);
            if v > best_val {
                best = c;
                best_val = v;
            }
        }
        best
    }
}

/// Per-user penalty shaping for the power block. The regulariser subtracted
/// from `sum f_k` is `sum_k lin[k] p_k + quad[k] p_k^2` after the DC
/// linearisation; `pinned[k]` forces `p_k = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerShaping {
    pub lin: Vec<f64>,
    pub quad: Vec<f64>,
    pub pinned: Vec<bool>,
}

impl PowerShaping {
    /// Linearised Ky Fan penalty: `lambda (1 - s_k)` with `s` the balanced
    /// subgradient of `||p^i||_N`, so the linearisation is a global lower
    /// bound even at the tied all-`p_max` start.
    pub fn kyfan(p: &[f64], n: usize, lambda: f64) -> Self {
        let sub = kyfan_subgradient_balanced(p, n);
        PowerShaping {
            lin: sub.iter().map(|s| lambda * (1.0 - s)).collect(),
            quad: vec![0.0; p.len()],
            pinned: vec![false; p.len()],
        }
    }

    pub fn none(k: usize) -> Self {
        PowerShaping {
            lin: vec![0.0; k],
            quad: vec![0.0; k],
            pinned: vec![false; k],
        }
    }
}

/// Build the separable subproblems of the power block around `vars.p`.
pub fn power_coordinates(
    ev: &Evaluation,
    aux: &AuxiliaryVariables,
    shaping: &PowerShaping,
    p_max: &[f64],
    tau_p: f64,
) -> Vec<PowerCoordinate> {
    let k_users = ev.num_users();
    let sens = ev.omega_power_sensitivity();
    (0..k_users)
        .map(|k| {
            let sqrt_coeff =
                2.0 * (1.0 + aux.eta[k]).sqrt() * (aux.nu[k].conj() * ev.signal_amplitude(k)).re * LOG2_E;
            let drain: f64 = (0..k_users)
                .map(|j| aux.nu[j].norm_sqr() * sens[(j, k)].re)
                .sum::<f64>()
                * LOG2_E;
            // -tau (p - p_i)^2 = -tau p^2 + 2 tau p_i p + const
            PowerCoordinate {
                sqrt_coeff,
                lin_coeff: drain + shaping.lin[k] - 2.0 * tau_p * ev.p[k],
                quad_coeff: tau_p + shaping.quad[k],
                p_max: p_max[k],
            }
        })
        .collect()
}

/// DC-linearised power update for the Ky Fan penalty with weight `lambda`.
pub fn update_p(
    vars: &SolverVariables,
    aux: &AuxiliaryVariables,
    channels: &ChannelSet,
    lambda: f64,
    sys: &SystemConfig,
    cfg: &SolverConfig,
) -> Vec<f64> {
    let ev = Evaluation::new(vars, channels);
    let shaping = PowerShaping::kyfan(&vars.p, sys.num_scheduled, lambda);
    update_p_shaped(&ev, aux, &shaping, &sys.p_max_mw(), cfg.tau_p)
}

pub fn update_p_shaped(
    ev: &Evaluation,
    aux: &AuxiliaryVariables,
    shaping: &PowerShaping,
    p_max: &[f64],
    tau_p: f64,
) -> Vec<f64> {
    power_coordinates(ev, aux, shaping, p_max, tau_p)
        .iter()
        .zip(&shaping.pinned)
        .map(|(c, &pin)| if pin { 0.0 } else { c.maximize() })
        .collect()
}

// ---------------------------------------------------------------------------
// Driver

/// How the power block is regularised; selects P-BSCA or a benchmark.
#[derive(Debug, Clone, PartialEq)]
pub enum PowerRegularizer {
    /// `lambda (||p||_1 - ||p||_N)`, DC-linearised.
    KyFan,
    /// `lambda sum_k w_k p_k^2` with `w_k = (q/2) (p_k^2 + eps^2)^(q/2 - 1)`
    /// re-computed every `period` inner iterations.
    Reweighted {
        exponent: f64,
        smoothing: f64,
        period: usize,
    },
    /// No penalty; users outside the support are pinned at zero power.
    FixedSupport(Vec<bool>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineOptions {
    pub regularizer: PowerRegularizer,
    /// `false` freezes the bits at their initial value (uniform `d_avg`).
    pub adapt_bits: bool,
}

impl EngineOptions {
    pub fn pbsca() -> Self {
        EngineOptions {
            regularizer: PowerRegularizer::KyFan,
            adapt_bits: true,
        }
    }
}

pub fn reweighted_weights(p: &[f64], exponent: f64, smoothing: f64) -> Vec<f64> {
    p.iter()
        .map(|&x| 0.5 * exponent * (x * x + smoothing * smoothing).powf(0.5 * exponent - 1.0))
        .collect()
}

fn shaping_for(
    reg: &PowerRegularizer,
    p: &[f64],
    n: usize,
    lambda: f64,
    weights: &[f64],
) -> PowerShaping {
    match reg {
        PowerRegularizer::KyFan => PowerShaping::kyfan(p, n, lambda),
        PowerRegularizer::Reweighted { .. } => PowerShaping {
            lin: vec![0.0; p.len()],
            quad: weights.iter().map(|w| lambda * w).collect(),
            pinned: vec![false; p.len()],
        },
        PowerRegularizer::FixedSupport(mask) => {
            let mut s = PowerShaping::none(p.len());
            s.pinned = mask.iter().map(|&m| !m).collect();
            s
        }
    }
}

/// Regulariser value subtracted from `sum f_k`.
fn regularizer_value(reg: &PowerRegularizer, p: &[f64], n: usize, lambda: f64, weights: &[f64]) -> f64 {
    match reg {
        PowerRegularizer::KyFan => lambda * penalty_value(p, n),
        PowerRegularizer::Reweighted { .. } => {
            lambda * weights.iter().zip(p).map(|(w, x)| w * x * x).sum::<f64>()
        }
        PowerRegularizer::FixedSupport(_) => 0.0,
    }
}

/// Run the penalty loop with the given power regulariser, then extract the
/// schedule.
pub fn solve_with(
    channels: &ChannelSet,
    sys: &SystemConfig,
    cfg: &SolverConfig,
    opts: &EngineOptions,
) -> Result<ScheduleResult> {
    sys.validate()?;
    cfg.validate()?;
    if channels.num_antennas() != sys.num_antennas || channels.num_users() != sys.num_users {
        return Err(Error::invalid(format!(
            "channel set is {}x{}, config expects {}x{}",
            channels.num_antennas(),
            channels.num_users(),
            sys.num_antennas,
            sys.num_users
        )));
    }
    let n = sys.num_scheduled;
    let k_users = sys.num_users;
    let p_max = sys.p_max_mw();

    let mut vars = SolverVariables::initial(sys, channels);
    if let PowerRegularizer::FixedSupport(mask) = &opts.regularizer {
        if mask.len() != k_users {
            return Err(Error::invalid("support mask must have K entries"));
        }
        for (p, &keep) in vars.p.iter_mut().zip(mask) {
            if !keep {
                *p = 0.0;
            }
        }
    }
    let mut aux = AuxiliaryVariables::zeros(k_users);
    let mut trace = SolveTrace::default();
    let mut best: Option<(f64, SolverVariables)> = None;
    let mut converged = false;
    let mut iter = 0usize;
    let mut weights = vec![0.0; k_users];
    let mut tau_d = cfg.tau_d;
    let mut tau_phi = cfg.tau_phi;

    for outer in 0..cfg.penalty.max_outer {
        let lambda = cfg.penalty.lambda_at(outer);
        let mut prev_obj: Option<f64> = None;
        let mut inner_done = 0;
        for inner in 0..cfg.max_inner {
            if let PowerRegularizer::Reweighted {
                exponent,
                smoothing,
                period,
            } = opts.regularizer
            {
                if inner % period.max(1) == 0 {
                    weights = reweighted_weights(&vars.p, exponent, smoothing);
                }
            }
            let shaping = shaping_for(&opts.regularizer, &vars.p, n, lambda, &weights);
            let reg = |p: &[f64]| regularizer_value(&opts.regularizer, p, n, lambda, &weights);
            let mut blocks = [0.0; 7];

            let ev = Evaluation::new(&vars, channels);
            blocks[0] = ev.fp_objective(&aux) - reg(&vars.p);

            // exact blocks: a candidate that loses to round-off is dropped
            let fresh = optimal_auxiliaries(&ev);
            let mut fp = ev.fp_objective(&aux);
            let fp_fresh = ev.fp_objective(&fresh);
            if fp_fresh >= fp {
                aux = fresh;
                fp = fp_fresh;
            }
            blocks[1] = fp - reg(&vars.p);

            match update_f_eval(&ev, &vars, &aux) {
                FUpdate::Solved(f) if f.iter().any(|z| z.norm_sqr() > 0.0) => {
                    let mut trial = vars.clone();
                    trial.f = f;
                    let ev_f = Evaluation::new(&trial, channels);
                    let fp_f = ev_f.fp_objective(&aux);
                    if fp_f >= fp {
                        vars = trial;
                        fp = fp_f;
                    }
                }
                _ => trace
                    .events
                    .push(format!("outer {outer} inner {inner}: F update skipped")),
            }
            let ev = Evaluation::new(&vars, channels);
            blocks[2] = fp - reg(&vars.p);

            let mut trial = vars.clone();
            trial.v = update_v_eval(&ev, &vars, &aux);
            let ev_v = Evaluation::new(&trial, channels);
            let fp_v = ev_v.fp_objective(&aux);
            let mut ev = if fp_v >= fp {
                vars = trial;
                fp = fp_v;
                ev_v
            } else {
                ev
            };
            blocks[3] = fp - reg(&vars.p);

            if opts.adapt_bits {
                let step = update_d_eval(&ev, &vars, &aux, channels, sys, cfg, tau_d);
                tau_d = cfg.next_tau(&step);
                if step.value != vars.d {
                    vars.d = step.value;
                    ev = Evaluation::new(&vars, channels);
                }
            }
            blocks[4] = ev.fp_objective(&aux) - reg(&vars.p);

            let step = update_phi_eval(&ev, &vars, &aux, channels, cfg, tau_phi);
            tau_phi = cfg.next_tau(&step);
            if step.value != vars.phi {
                vars.phi = step.value;
                ev = Evaluation::new(&vars, channels);
            }
            blocks[5] = ev.fp_objective(&aux) - reg(&vars.p);

            vars.p = update_p_shaped(&ev, &aux, &shaping, &p_max, cfg.tau_p);
            let ev = Evaluation::new(&vars, channels);
            let fp = ev.fp_objective(&aux);
            let obj = fp - reg(&vars.p);
            blocks[6] = obj;

            trace.rows.push(TraceRow {
                iter,
                outer,
                inner,
                lambda,
                fp_objective: fp,
                penalized_objective: obj,
                sum_rate: ev.sum_rate(),
                penalty_value: penalty_value(&vars.p, n),
                block_objectives: blocks,
            });
            iter += 1;
            inner_done = inner + 1;

            if let Some(prev) = prev_obj {
                if (obj - prev).abs() <= cfg.inner_tol * prev.abs().max(1.0) {
                    break;
                }
            }
            prev_obj = Some(obj);
        }
        let violation = penalty_value(&vars.p, n);
        trace.outer.push(OuterRow {
            outer,
            lambda,
            inner_iterations: inner_done,
            penalty_value: violation,
        });
        if best.as_ref().is_none_or(|(v, _)| violation <= *v) {
            best = Some((violation, vars.clone()));
        }
        if violation < cfg.penalty.beta {
            converged = true;
            break;
        }
    }

    let final_vars = if converged {
        vars
    } else {
        best.map(|(_, v)| v).unwrap_or(vars)
    };
    let mut result = finalize_schedule(&final_vars, channels, sys, cfg)?;
    result.converged = converged;
    result.trace.events.append(&mut trace.events);
    result.trace.rows = trace.rows;
    result.trace.outer = trace.outer;
    Ok(result)
}

/// P-BSCA on one scenario.
pub fn pbsca_solve(channels: &ChannelSet, sys: &SystemConfig, cfg: &SolverConfig) -> Result<ScheduleResult> {
    solve_with(channels, sys, cfg, &EngineOptions::pbsca())
}

/// Pick the `N` strongest users, round the bits and refresh `(eta, nu, F, v)`
/// once with the support, bits and phases frozen.
pub fn finalize_schedule(
    vars: &SolverVariables,
    channels: &ChannelSet,
    sys: &SystemConfig,
    cfg: &SolverConfig,
) -> Result<ScheduleResult> {
    let n = sys.num_scheduled;
    let order = magnitude_order(&vars.p);
    let mut chosen: Vec<usize> = order.iter().copied().take(n).collect();
    let active = chosen.iter().filter(|&&k| vars.p[k] > cfg.power_floor).count();
    let padded = active < n;

    let mut out = vars.clone();
    out.p = vec![0.0; vars.num_users()];
    for &k in &chosen {
        out.p[k] = if vars.p[k] > cfg.power_floor {
            vars.p[k]
        } else {
            cfg.power_floor
        };
    }
    chosen.sort_unstable();

    let relaxed: Vec<f64> = vars
        .d
        .iter()
        .map(|&x| x.clamp(sys.d_min as f64, sys.d_max as f64))
        .collect();
    let d_integer = round_bits(&relaxed, sys.d_avg, sys.d_min, sys.d_max)?;
    out.d = d_integer.iter().map(|&x| x as f64).collect();

    let mut events = Vec::new();
    if padded {
        events.push(format!("schedule padded: only {active} users above power floor"));
    }
    let ev = Evaluation::new(&out, channels);
    let aux = optimal_auxiliaries(&ev);
    match update_f_eval(&ev, &out, &aux) {
        FUpdate::Solved(f) if f.iter().any(|z| z.norm_sqr() > 0.0) => out.f = f,
        _ => events.push("finalize: F update skipped".into()),
    }
    let ev = Evaluation::new(&out, channels);
    out.v = update_v_eval(&ev, &out, &aux);

    let ev = Evaluation::new(&out, channels);
    let mut user_rates = ev.rates();
    for (k, r) in user_rates.iter_mut().enumerate() {
        if !chosen.contains(&k) {
            *r = 0.0;
        }
    }
    let sum_rate = user_rates.iter().sum();
    Ok(ScheduleResult {
        scheduled_users: chosen,
        p: out.p,
        phi: out.phi,
        d_integer,
        v: out.v,
        f: out.f,
        user_rates,
        sum_rate,
        converged: false,
        padded,
        trace: SolveTrace {
            events,
            ..Default::default()
        },
    })
}
