//! Quick numerical self-checks run by `pbsca selftest`.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::kyfan::penalty_value;
use crate::linalg::CMat;
use crate::model::{generate_channels, ChannelSet, SystemConfig};
use crate::objective::{optimal_auxiliaries, AuxiliaryVariables, Evaluation, SolverVariables};
use crate::quantizer::round_bits;
use crate::solver::PowerCoordinate;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn tiny_system() -> SystemConfig {
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

fn random_cmat<R: Rng>(rng: &mut R, r: usize, c: usize) -> CMat {
    CMat::from_fn(r, c, |_, _| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
}

/// Random interior point with random auxiliaries.
fn random_point(seed: u64) -> Result<(SystemConfig, ChannelSet, SolverVariables, AuxiliaryVariables)> {
    let sys = tiny_system();
    let channels = generate_channels(&sys, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let (m, s, k) = (sys.num_antennas, sys.num_rf_chains, sys.num_users);
    let p_max = sys.p_max_mw();
    let vars = SolverVariables {
        p: (0..k).map(|i| rng.random_range(0.1..1.0) * p_max[i]).collect(),
        phi: (0..m * s).map(|_| rng.random_range(0.5..5.5)).collect(),
        d: (0..s).map(|_| rng.random_range(1.5..6.0)).collect(),
        v: random_cmat(&mut rng, s, k),
        f: random_cmat(&mut rng, s, s),
    };
    let aux = AuxiliaryVariables {
        eta: (0..k).map(|_| rng.random_range(0.0..3.0)).collect(),
        nu: (0..k)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect(),
    };
    Ok((sys, channels, vars, aux))
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt().max(1e-12);
    num / den
}

fn central_diff<F: FnMut(&[f64]) -> f64>(x: &[f64], h: f64, mut f: F) -> Vec<f64> {
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

fn fp_tightness() -> Result<Check> {
    let mut worst = 0.0f64;
    for seed in 0..10 {
        let (_, ch, vars, _) = random_point(seed)?;
        let ev = Evaluation::new(&vars, &ch);
        let aux = optimal_auxiliaries(&ev);
        worst = worst.max((ev.fp_objective(&aux) - ev.sum_rate()).abs());
    }
    Ok(Check {
        name: "fp_tightness",
        passed: worst < 1e-6,
        detail: format!("max |sum f - sum r| = {worst:.3e}"),
    })
}

fn gradients() -> Result<Check> {
    let mut worst = 0.0f64;
    for seed in 0..10 {
        let (_, ch, vars, aux) = random_point(seed)?;
        let ev = Evaluation::new(&vars, &ch);
        let mut trial = vars.clone();
        let fd_d = central_diff(&vars.d, 1e-6, |d| {
            trial.d.copy_from_slice(d);
            Evaluation::new(&trial, &ch).fp_objective(&aux)
        });
        worst = worst.max(rel_err(&ev.grad_d(&aux), &fd_d));
        let mut trial = vars.clone();
        let fd_phi = central_diff(&vars.phi, 1e-6, |phi| {
            trial.phi.copy_from_slice(phi);
            Evaluation::new(&trial, &ch).fp_objective(&aux)
        });
        worst = worst.max(rel_err(&ev.grad_phi(&aux, &ch), &fd_phi));
    }
    Ok(Check {
        name: "gradients",
        passed: worst < 1e-4,
        detail: format!("max relative error vs central differences = {worst:.3e}"),
    })
}

fn golden_section<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64) -> f64 {
    let g = (5.0f64.sqrt() - 1.0) / 2.0;
    for _ in 0..300 {
        let x1 = b - g * (b - a);
        let x2 = a + g * (b - a);
        if f(x1) < f(x2) {
            a = x1;
        } else {
            b = x2;
        }
    }
    0.5 * (a + b)
}

fn power_coordinates() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let c = PowerCoordinate {
            sqrt_coeff: rng.random_range(0.0..5.0),
            lin_coeff: rng.random_range(-2.0..2.0),
            quad_coeff: rng.random_range(0.1..2.0),
            p_max: rng.random_range(0.1..10.0),
        };
        let reference = golden_section(|p| c.value(p), 0.0, c.p_max);
        let got = c.maximize();
        // compare objective values; the argmax of a flat optimum is ill-posed
        worst = worst.max(c.value(reference) - c.value(got));
    }
    Check {
        name: "power_coordinate",
        passed: worst <= 1e-12,
        detail: format!("max objective shortfall vs golden section = {worst:.3e}"),
    }
}

fn rounding() -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut mismatches = 0;
    for _ in 0..200 {
        let s = rng.random_range(1..=6usize);
        let (lo, hi) = (1u32, 8u32);
        let d: Vec<f64> = (0..s).map(|_| rng.random_range(1.0..=8.0)).collect();
        // a relaxed point that meets its own budget, plus some slack
        let d_avg = (d.iter().sum::<f64>() / s as f64 + rng.random_range(0.0..0.5)).min(8.0);
        let got = round_bits(&d, d_avg, lo, hi)?;
        // exhaustive scan over the breakpoints
        let mut eps: Vec<f64> = d.iter().map(|x| x - x.floor()).collect();
        eps.push(0.0);
        eps.sort_by(f64::total_cmp);
        let expect = eps
            .iter()
            .map(|&e| {
                d.iter()
                    .map(|&x| {
                        let r = if x - x.floor() > e { x.ceil() } else { x.floor() };
                        (r as u32).clamp(lo, hi)
                    })
                    .collect::<Vec<u32>>()
            })
            .find(|r| r.iter().sum::<u32>() as f64 <= s as f64 * d_avg + 1e-9);
        if expect.as_ref() != Some(&got) {
            mismatches += 1;
        }
    }
    Ok(Check {
        name: "round_bits",
        passed: mismatches == 0,
        detail: format!("{mismatches} of 200 cases differ from exhaustive scan"),
    })
}

fn kyfan_identity() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut wrong = 0;
    for _ in 0..1000 {
        let k = 10;
        let n = rng.random_range(1..=k);
        let nnz = rng.random_range(0..=k);
        let mut p = vec![0.0; k];
        for x in p.iter_mut().take(nnz) {
            *x = rng.random_range(0.01..10.0);
        }
        let zero = penalty_value(&p, n) == 0.0;
        if zero != (nnz <= n) {
            wrong += 1;
        }
    }
    Check {
        name: "kyfan_identity",
        passed: wrong == 0,
        detail: format!("{wrong} of 1000 vectors violate the identity"),
    }
}

pub fn run_selftest() -> Result<Vec<Check>> {
    Ok(vec![
        fp_tightness()?,
        gradients()?,
        power_coordinates(),
        rounding()?,
        kyfan_identity(),
    ])
}
