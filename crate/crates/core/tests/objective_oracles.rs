mod common;

use common::*;
use pbsca::objective::{fp_objective, grad_d, grad_phi, optimal_auxiliaries, Evaluation};
use pbsca::solver::{update_eta, update_nu};
use pbsca::{AuxiliaryVariables, SystemConfig};

#[test]
fn fp_is_tight_after_auxiliary_update() {
    let sys = SystemConfig::desk();
    for seed in 0..20 {
        let (ch, vars) = instance(&sys, seed);
        let eta = update_eta(&vars, &ch);
        let nu = update_nu(&vars, &eta, &ch);
        let aux = AuxiliaryVariables { eta, nu };
        let ev = Evaluation::new(&vars, &ch);
        assert!((ev.fp_objective(&aux) - ev.sum_rate()).abs() < 1e-6, "seed {seed}");
        let rates = ev.rates();
        for k in 0..sys.num_users {
            assert!((ev.fp_term(&aux, k) - rates[k]).abs() < 1e-8);
        }
    }
}

#[test]
fn eta_is_stationary_at_fresh_nu() {
    let sys = tiny_system();
    for seed in 0..10 {
        let (ch, vars) = instance(&sys, seed);
        let ev = Evaluation::new(&vars, &ch);
        let aux = optimal_auxiliaries(&ev);
        for k in 0..sys.num_users {
            let h = 1e-6 * (1.0 + aux.eta[k]);
            let at = |x: f64| {
                let mut a = aux.clone();
                a.eta[k] = x;
                ev.fp_term(&a, k)
            };
            let slope = (at(aux.eta[k] + h) - at(aux.eta[k] - h)) / (2.0 * h);
            assert!(slope.abs() < 1e-8, "seed {seed} user {k}: {slope:e}");
        }
    }
}

#[test]
fn nu_is_stationary() {
    let sys = tiny_system();
    for seed in 0..10 {
        let (ch, vars) = instance(&sys, seed);
        let ev = Evaluation::new(&vars, &ch);
        let eta = random_aux(sys.num_users, seed).eta;
        let nu = update_nu(&vars, &eta, &ch);
        let base = AuxiliaryVariables { eta, nu };
        for k in 0..sys.num_users {
            for dir in [num_complex::Complex64::new(1.0, 0.0), num_complex::Complex64::new(0.0, 1.0)] {
                let h = 1e-6;
                let at = |t: f64| {
                    let mut a = base.clone();
                    a.nu[k] += dir * t;
                    ev.fp_term(&a, k)
                };
                let slope = (at(h) - at(-h)) / (2.0 * h);
                assert!(slope.abs() < 1e-6, "seed {seed} user {k}: {slope:e}");
            }
        }
    }
}

#[test]
fn zero_power_gives_zero_auxiliaries() {
    let sys = tiny_system();
    let (ch, mut vars) = instance(&sys, 3);
    vars.p = vec![0.0; sys.num_users];
    let eta = update_eta(&vars, &ch);
    assert!(eta.iter().all(|&x| x == 0.0));
    let nu = update_nu(&vars, &eta, &ch);
    assert!(nu.iter().all(|z| z.norm() == 0.0));
}

#[test]
fn analytic_gradients_match_central_differences() {
    let sys = tiny_system();
    for seed in 0..20 {
        let (ch, vars) = instance(&sys, seed);
        let aux = random_aux(sys.num_users, seed);

        let mut trial = vars.clone();
        let fd = central_diff(&vars.d, 1e-6, |d| {
            trial.d.copy_from_slice(d);
            fp_objective(&trial, &aux, &ch)
        });
        let err = rel_err(&grad_d(&vars, &aux, &ch), &fd);
        assert!(err < 1e-4, "grad_d seed {seed}: {err:e}");

        let mut trial = vars.clone();
        let fd = central_diff(&vars.phi, 1e-6, |phi| {
            trial.phi.copy_from_slice(phi);
            fp_objective(&trial, &aux, &ch)
        });
        let err = rel_err(&grad_phi(&vars, &aux, &ch), &fd);
        assert!(err < 1e-4, "grad_phi seed {seed}: {err:e}");
    }
}

#[test]
fn gradients_at_desk_scale() {
    let sys = SystemConfig::desk();
    for seed in 0..3 {
        let (ch, vars) = instance(&sys, seed);
        let aux = optimal_auxiliaries(&Evaluation::new(&vars, &ch));
        let mut trial = vars.clone();
        let fd = central_diff(&vars.d, 1e-6, |d| {
            trial.d.copy_from_slice(d);
            fp_objective(&trial, &aux, &ch)
        });
        assert!(rel_err(&grad_d(&vars, &aux, &ch), &fd) < 1e-4);
        let mut trial = vars.clone();
        let fd = central_diff(&vars.phi, 1e-6, |phi| {
            trial.phi.copy_from_slice(phi);
            fp_objective(&trial, &aux, &ch)
        });
        assert!(rel_err(&grad_phi(&vars, &aux, &ch), &fd) < 1e-4);
    }
}
