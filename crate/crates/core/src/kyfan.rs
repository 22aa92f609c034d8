//! Ky Fan n-norm of a vector and the cardinality penalty built on it.
//!
//! `||p||_0 <= N` holds exactly when `||p||_1 - ||p||_N = 0`, which turns the
//! scheduling constraint into a difference of two convex functions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Outer-loop penalty schedule `lambda^{t+1} = alpha lambda^t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PenaltySchedule {
    pub lambda0: f64,
    pub alpha: f64,
    /// Stop once the penalty value drops below this.
    pub beta: f64,
    /// Maximum outer iterations `T`.
    pub max_outer: usize,
}

impl Default for PenaltySchedule {
    fn default() -> Self {
        PenaltySchedule {
            lambda0: 1e-3,
            alpha: 1.8,
            beta: 1e-3,
            max_outer: 30,
        }
    }
}

impl PenaltySchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda0 > 0.0 && self.alpha > 1.0 && self.beta > 0.0 && self.max_outer >= 1) {
            return Err(Error::invalid(
                "penalty schedule needs lambda0 > 0, alpha > 1, beta > 0, T >= 1",
            ));
        }
        Ok(())
    }

    pub fn lambda_at(&self, outer: usize) -> f64 {
        self.lambda0 * self.alpha.powi(outer as i32)
    }
}

/// Indices sorted by descending `|p|`, ties by ascending index.
pub fn magnitude_order(p: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..p.len()).collect();
    idx.sort_by(|&a, &b| p[b].abs().total_cmp(&p[a].abs()).then(a.cmp(&b)));
    idx
}

/// Sum of the `n` largest absolute values.
pub fn kyfan_norm(p: &[f64], n: usize) -> Result<f64> {
    if n > p.len() {
        return Err(Error::invalid(format!(
            "Ky Fan order {n} exceeds vector length {}",
            p.len()
        )));
    }
    Ok(magnitude_order(p).iter().take(n).map(|&i| p[i].abs()).sum())
}

/// `||p||_1 - ||p||_N`, i.e. the mass outside the `N` largest entries.
///
/// Computed as the sum of the `K - N` smallest magnitudes so that an
/// `N`-sparse vector gives exactly `0.0`.
pub fn penalty_value(p: &[f64], n: usize) -> f64 {
    let order = magnitude_order(p);
    order.iter().skip(n).map(|&i| p[i].abs()).sum()
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Subgradient of `||p||_N`: `sgn(p_j)` where `|p_j|` reaches the `N`-th
/// largest magnitude, else 0. Ties at the threshold are all included.
pub fn kyfan_subgradient(p: &[f64], n: usize) -> Vec<f64> {
    if n == 0 || p.is_empty() {
        return vec![0.0; p.len()];
    }
    let order = magnitude_order(p);
    let threshold = p[order[n.min(p.len()) - 1]].abs();
    p.iter()
        .map(|&x| if x.abs() >= threshold { sign(x) } else { 0.0 })
        .collect()
}

/// Centre of the subdifferential of `||p||_N`: entries strictly above the
/// `N`-th magnitude get `sgn(p_j)`, the entries tied at it share the
/// remaining weight equally. Unlike the tie-inclusive rule this is always a
/// valid subgradient, and it favours no index at ties.
pub fn kyfan_subgradient_balanced(p: &[f64], n: usize) -> Vec<f64> {
    if n == 0 || p.is_empty() {
        return vec![0.0; p.len()];
    }
    let n = n.min(p.len());
    let order = magnitude_order(p);
    let threshold = p[order[n - 1]].abs();
    if threshold == 0.0 {
        return p.iter().map(|&x| sign(x)).collect();
    }
    let above = p.iter().filter(|x| x.abs() > threshold).count();
    let tied = p.iter().filter(|x| x.abs() == threshold).count();
    let share = (n - above) as f64 / tied as f64;
    p.iter()
        .map(|&x| {
            if x.abs() > threshold {
                sign(x)
            } else if x.abs() == threshold {
                share * sign(x)
            } else {
                0.0
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn norm_examples() {
        assert_eq!(kyfan_norm(&[3.0, 1.0, 2.0], 2).unwrap(), 5.0);
        assert_eq!(kyfan_norm(&[3.0, -1.0, 2.0], 3).unwrap(), 6.0);
        assert_eq!(kyfan_norm(&[3.0, 1.0, 2.0], 0).unwrap(), 0.0);
        assert!(matches!(kyfan_norm(&[1.0], 2), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn penalty_examples() {
        assert_eq!(penalty_value(&[3.0, 1.0, 2.0], 2), 1.0);
        assert_eq!(penalty_value(&[0.0, 4.0, 0.0, 1.0], 2), 0.0);
        assert_eq!(penalty_value(&[1.0; 4], 4), 0.0);
    }

    #[test]
    fn subgradient_examples() {
        assert_eq!(kyfan_subgradient(&[3.0, 1.0, 2.0], 2), vec![1.0, 0.0, 1.0]);
        assert_eq!(kyfan_subgradient(&[5.0, 5.0, 5.0], 1), vec![1.0, 1.0, 1.0]);
        assert_eq!(kyfan_subgradient(&[0.0, 0.0, 0.0], 1), vec![0.0, 0.0, 0.0]);
        assert_eq!(kyfan_subgradient(&[-3.0, 1.0, 2.0], 1), vec![-1.0, 0.0, 0.0]);
    }

    #[test]
    fn balanced_subgradient_examples() {
        assert_eq!(kyfan_subgradient_balanced(&[3.0, 1.0, 2.0], 2), vec![1.0, 0.0, 1.0]);
        assert_eq!(kyfan_subgradient_balanced(&[4.0; 4], 2), vec![0.5; 4]);
        assert_eq!(kyfan_subgradient_balanced(&[5.0, 2.0, 2.0, 1.0], 2), vec![1.0, 0.5, 0.5, 0.0]);
        assert_eq!(kyfan_subgradient_balanced(&[0.0, 3.0, 0.0], 2), vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn order_breaks_ties_by_index() {
        assert_eq!(magnitude_order(&[1.0, 2.0, 2.0, -2.0]), vec![1, 2, 3, 0]);
    }

    #[test]
    fn schedule_growth() {
        let s = PenaltySchedule::default();
        assert!((s.lambda_at(2) - 1e-3 * 1.8 * 1.8).abs() < 1e-15);
        assert!(s.validate().is_ok());
        assert!(PenaltySchedule { alpha: 1.0, ..s.clone() }.validate().is_err());
    }

    proptest! {
        #[test]
        fn norm_is_homogeneous_and_subadditive(
            a in proptest::collection::vec(-10.0f64..10.0, 6),
            b in proptest::collection::vec(-10.0f64..10.0, 6),
            t in -5.0f64..5.0,
            n in 0usize..=6,
        ) {
            let scaled: Vec<f64> = a.iter().map(|x| t * x).collect();
            let lhs = kyfan_norm(&scaled, n).unwrap();
            prop_assert!((lhs - t.abs() * kyfan_norm(&a, n).unwrap()).abs() < 1e-10);
            let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
            prop_assert!(
                kyfan_norm(&sum, n).unwrap()
                    <= kyfan_norm(&a, n).unwrap() + kyfan_norm(&b, n).unwrap() + 1e-10
            );
        }

        #[test]
        fn subgradient_inequality(
            p in proptest::collection::vec(-10.0f64..10.0, 7),
            q in proptest::collection::vec(-10.0f64..10.0, 7),
            n in 1usize..=7,
        ) {
            let g = kyfan_subgradient(&p, n);
            let inner: f64 = g.iter().zip(q.iter().zip(&p)).map(|(gi, (qi, pi))| gi * (qi - pi)).sum();
            let order = magnitude_order(&p);
            let tie = n < p.len() && p[order[n - 1]].abs() == p[order[n]].abs();
            prop_assume!(!tie);
            prop_assert!(kyfan_norm(&q, n).unwrap() >= kyfan_norm(&p, n).unwrap() + inner - 1e-10);
        }

        #[test]
        fn balanced_subgradient_inequality_with_ties(
            base in proptest::collection::vec(0u8..3, 7),
            q in proptest::collection::vec(-10.0f64..10.0, 7),
            n in 1usize..=7,
        ) {
            let p: Vec<f64> = base.iter().map(|&b| b as f64).collect();
            let g = kyfan_subgradient_balanced(&p, n);
            let inner: f64 = g.iter().zip(q.iter().zip(&p)).map(|(gi, (qi, pi))| gi * (qi - pi)).sum();
            prop_assert!(kyfan_norm(&q, n).unwrap() >= kyfan_norm(&p, n).unwrap() + inner - 1e-10);
        }
    }
}
