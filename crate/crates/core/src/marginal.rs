//! Marginal response-pattern probabilities for both models and analytic
//! first/second derivatives of the compensatory marginal log-likelihood with
//! respect to item parameters.
//!
//! For a pattern `y` the marginal probability is
//! `p(y) = sum_l w_l * prod_i p(y_i | gamma_l)` over the quadrature grid.
//! Writing `pi_l` for the normalized posterior point weights, the derivative
//! of `ln p_c(y)` in a single item parameter `theta` of item h is the
//! posterior-expected complete-data score, and the second derivative adds the
//! posterior variance of that score:
//!
//! ```text
//! d ln p / d theta   = E_pi[s_l]
//! d2 ln p / d theta2 = E_pi[s'_l] + Var_pi[s_l]
//! ```
//!
//! with `s_l = (y_h - sigma_hl) x_l`, `s'_l = -sigma_hl (1 - sigma_hl) x_l^2`,
//! where `x_l = 1` for the intercept and `x_l = gamma_{l,s}` for a loading.
//! Both closed forms are gated by finite-difference oracles in the tests.

use crate::error::{Error, Result};
use crate::model::{CompParams, ItemBank};
use crate::numeric::{log1mexp, log_sigmoid, logsumexp, sigmoid};
use crate::quadrature::QuadratureGrid;

/// Patterns whose marginal log-probability falls below this cannot be
/// represented in linear space; the per-pattern API refuses them.
pub const LOG_UNDERFLOW: f64 = -700.0;

/// Per-pattern scratch: conditional log-likelihood at every grid point and
/// the normalized posterior point weights.
#[derive(Debug, Clone)]
pub struct PatternWorkspace {
    /// `ln prod_i p(y_i | gamma_l)` per grid point.
    pub cond_loglik: Vec<f64>,
    /// Posterior point weights; non-negative, sum to 1.
    pub posterior: Vec<f64>,
    /// `ln p(y)`.
    pub log_marginal: f64,
}

impl PatternWorkspace {
    /// Workspace for a compensatory pattern.
    pub fn compensatory(y: &[u8], params: &CompParams, grid: &QuadratureGrid) -> Result<Self> {
        if y.len() != params.items.len() {
            return Err(Error::DimensionMismatch {
                expected: params.items.len(),
                actual: y.len(),
                what: "pattern length vs item count",
            });
        }
        let mut cond = vec![0.0; grid.len()];
        for (i, p) in params.items.iter().enumerate() {
            let yi = y[i];
            for (l, c) in cond.iter_mut().enumerate() {
                let eta = crate::model::linear_predictor(&p.alpha, p.beta, grid.point(l));
                *c += if yi == 1 { log_sigmoid(eta) } else { log_sigmoid(-eta) };
            }
        }
        Self::from_cond_loglik(cond, grid)
    }

    /// Workspace for a non-compensatory pattern.
    pub fn noncompensatory(y: &[u8], bank: &ItemBank, grid: &QuadratureGrid) -> Result<Self> {
        if y.len() != bank.items.len() {
            return Err(Error::DimensionMismatch {
                expected: bank.items.len(),
                actual: y.len(),
                what: "pattern length vs item count",
            });
        }
        let mut cond = vec![0.0; grid.len()];
        for (i, item) in bank.items.iter().enumerate() {
            let yi = y[i];
            for (l, c) in cond.iter_mut().enumerate() {
                let z = grid.point(l);
                let mut lp1 = 0.0;
                for (dim, a, b) in item.required() {
                    lp1 += log_sigmoid(a * (z[dim] - b));
                }
                *c += if yi == 1 { lp1 } else { log1mexp(lp1) };
            }
        }
        Self::from_cond_loglik(cond, grid)
    }

    fn from_cond_loglik(cond: Vec<f64>, grid: &QuadratureGrid) -> Result<Self> {
        let joint: Vec<f64> = cond
            .iter()
            .enumerate()
            .map(|(l, &c)| c + grid.weight(l).ln())
            .collect();
        let log_marginal = logsumexp(&joint);
        if !log_marginal.is_finite() || log_marginal < LOG_UNDERFLOW {
            return Err(Error::Underflow { log_prob: log_marginal });
        }
        let posterior: Vec<f64> = joint.iter().map(|&j| (j - log_marginal).exp()).collect();
        Ok(PatternWorkspace { cond_loglik: cond, posterior, log_marginal })
    }

    /// d ln p / d beta_h given the item's response and per-point sigmoids.
    pub fn score_beta(&self, y_h: u8, sigma_h: &[f64]) -> f64 {
        let y = y_h as f64;
        self.posterior
            .iter()
            .zip(sigma_h)
            .map(|(&pi, &s)| pi * (y - s))
            .sum()
    }

    /// d ln p / d alpha_{h,dim}.
    pub fn score_alpha(&self, y_h: u8, sigma_h: &[f64], grid: &QuadratureGrid, dim: usize) -> f64 {
        let y = y_h as f64;
        let mut acc = 0.0;
        for (l, (&pi, &s)) in self.posterior.iter().zip(sigma_h).enumerate() {
            acc += pi * (y - s) * grid.point(l)[dim];
        }
        acc
    }

    /// d2 ln p / d beta_h^2.
    pub fn hessian_beta(&self, y_h: u8, sigma_h: &[f64]) -> f64 {
        let y = y_h as f64;
        let mut e_s = 0.0;
        let mut e_s2 = 0.0;
        let mut e_curv = 0.0;
        for (&pi, &s) in self.posterior.iter().zip(sigma_h) {
            let u = y - s;
            e_s += pi * u;
            e_s2 += pi * u * u;
            e_curv -= pi * s * (1.0 - s);
        }
        e_curv + (e_s2 - e_s * e_s)
    }

    /// d2 ln p / d alpha_{h,dim}^2.
    pub fn hessian_alpha(&self, y_h: u8, sigma_h: &[f64], grid: &QuadratureGrid, dim: usize) -> f64 {
        let y = y_h as f64;
        let mut e_s = 0.0;
        let mut e_s2 = 0.0;
        let mut e_curv = 0.0;
        for (l, (&pi, &s)) in self.posterior.iter().zip(sigma_h).enumerate() {
            let x = grid.point(l)[dim];
            let u = (y - s) * x;
            e_s += pi * u;
            e_s2 += pi * u * u;
            e_curv -= pi * s * (1.0 - s) * x * x;
        }
        e_curv + (e_s2 - e_s * e_s)
    }
}

/// Sigmoid of item h's linear predictor at every grid point.
pub fn item_sigmas(params: &CompParams, grid: &QuadratureGrid, h: usize) -> Vec<f64> {
    let p = &params.items[h];
    (0..grid.len())
        .map(|l| sigmoid(crate::model::linear_predictor(&p.alpha, p.beta, grid.point(l))))
        .collect()
}

/// ln p_c(y) under the compensatory model (quadrature approximation).
pub fn log_marginal_prob_compensatory(
    y: &[u8],
    params: &CompParams,
    grid: &QuadratureGrid,
) -> Result<f64> {
    if y.is_empty() && params.items.is_empty() {
        return Ok(0.0);
    }
    Ok(PatternWorkspace::compensatory(y, params, grid)?.log_marginal)
}

/// p_c(y): marginal probability of a compensatory response pattern.
pub fn marginal_prob_compensatory(
    y: &[u8],
    params: &CompParams,
    grid: &QuadratureGrid,
) -> Result<f64> {
    Ok(log_marginal_prob_compensatory(y, params, grid)?.exp())
}

/// p_n(y): marginal probability of a non-compensatory response pattern.
pub fn marginal_prob_noncompensatory(
    y: &[u8],
    bank: &ItemBank,
    grid: &QuadratureGrid,
) -> Result<f64> {
    if y.is_empty() && bank.items.is_empty() {
        return Ok(1.0);
    }
    Ok(PatternWorkspace::noncompensatory(y, bank, grid)?.log_marginal.exp())
}

fn check_item_index(params: &CompParams, h: usize) -> Result<()> {
    if h >= params.items.len() {
        return Err(Error::invalid(format!(
            "item index {h} out of range (M = {})",
            params.items.len()
        )));
    }
    Ok(())
}

fn check_dim_index(params: &CompParams, grid: &QuadratureGrid, dim: usize) -> Result<()> {
    if dim >= params.k() || dim >= grid.k() {
        return Err(Error::invalid(format!(
            "skill dimension {dim} out of range (K = {})",
            params.k()
        )));
    }
    Ok(())
}

/// Analytic d ln p_c(y) / d beta_h.
pub fn score_beta(y: &[u8], params: &CompParams, grid: &QuadratureGrid, h: usize) -> Result<f64> {
    check_item_index(params, h)?;
    let ws = PatternWorkspace::compensatory(y, params, grid)?;
    Ok(ws.score_beta(y[h], &item_sigmas(params, grid, h)))
}

/// Analytic d ln p_c(y) / d alpha_{h,dim} (`dim` is 0-based).
pub fn score_alpha(
    y: &[u8],
    params: &CompParams,
    grid: &QuadratureGrid,
    h: usize,
    dim: usize,
) -> Result<f64> {
    check_item_index(params, h)?;
    check_dim_index(params, grid, dim)?;
    let ws = PatternWorkspace::compensatory(y, params, grid)?;
    Ok(ws.score_alpha(y[h], &item_sigmas(params, grid, h), grid, dim))
}

/// Analytic d2 ln p_c(y) / d beta_h^2.
pub fn hessian_beta(y: &[u8], params: &CompParams, grid: &QuadratureGrid, h: usize) -> Result<f64> {
    check_item_index(params, h)?;
    let ws = PatternWorkspace::compensatory(y, params, grid)?;
    Ok(ws.hessian_beta(y[h], &item_sigmas(params, grid, h)))
}

/// Analytic d2 ln p_c(y) / d alpha_{h,dim}^2.
pub fn hessian_alpha(
    y: &[u8],
    params: &CompParams,
    grid: &QuadratureGrid,
    h: usize,
    dim: usize,
) -> Result<f64> {
    check_item_index(params, h)?;
    check_dim_index(params, grid, dim)?;
    let ws = PatternWorkspace::compensatory(y, params, grid)?;
    Ok(ws.hessian_alpha(y[h], &item_sigmas(params, grid, h), grid, dim))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Item, ItemParams};
    use approx::assert_abs_diff_eq;

    fn params(items: Vec<(Vec<f64>, f64)>) -> CompParams {
        CompParams {
            items: items
                .into_iter()
                .map(|(alpha, beta)| ItemParams { alpha, beta })
                .collect(),
        }
    }

    #[test]
    fn single_flat_item_has_half_probability() {
        let grid = QuadratureGrid::build(2, 9).unwrap();
        let p = params(vec![(vec![0.0, 0.0], 0.0)]);
        assert_abs_diff_eq!(
            marginal_prob_compensatory(&[1], &p, &grid).unwrap(),
            0.5,
            epsilon = 1e-12
        );
    }

    #[test]
    fn single_symmetric_noncompensatory_item_has_half_probability() {
        let grid = QuadratureGrid::build(1, 21).unwrap();
        let bank = ItemBank::new(1, vec![Item::new(0, vec![1], vec![1.0], vec![0.0]).unwrap()])
            .unwrap();
        assert_abs_diff_eq!(
            marginal_prob_noncompensatory(&[1], &bank, &grid).unwrap(),
            0.5,
            epsilon = 1e-10
        );
    }

    #[test]
    fn empty_pattern_has_probability_one() {
        let grid = QuadratureGrid::build(1, 5).unwrap();
        let p = CompParams { items: vec![] };
        assert_abs_diff_eq!(marginal_prob_compensatory(&[], &p, &grid).unwrap(), 1.0);
        let bank = ItemBank { k: 1, items: vec![] };
        assert_abs_diff_eq!(marginal_prob_noncompensatory(&[], &bank, &grid).unwrap(), 1.0);
    }

    fn all_patterns(m: usize) -> impl Iterator<Item = Vec<u8>> {
        (0u32..(1 << m)).map(move |bits| (0..m).map(|i| ((bits >> i) & 1) as u8).collect())
    }

    #[test]
    fn compensatory_patterns_sum_to_one() {
        let grid = QuadratureGrid::build(2, 15).unwrap();
        let p = params(vec![
            (vec![1.2, 0.4], 0.3),
            (vec![0.7, 1.5], -0.8),
            (vec![0.9, 0.9], 1.1),
        ]);
        let total: f64 = all_patterns(3)
            .map(|y| marginal_prob_compensatory(&y, &p, &grid).unwrap())
            .sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn noncompensatory_patterns_sum_to_one() {
        let grid = QuadratureGrid::build(2, 15).unwrap();
        let bank = ItemBank::new(
            2,
            vec![
                Item::new(0, vec![1], vec![1.3], vec![-0.4]).unwrap(),
                Item::new(1, vec![2], vec![0.8], vec![0.9]).unwrap(),
                Item::new(2, vec![1, 2], vec![1.1, 1.6], vec![0.2, -0.7]).unwrap(),
            ],
        )
        .unwrap();
        let total: f64 = all_patterns(3)
            .map(|y| marginal_prob_noncompensatory(&y, &bank, &grid).unwrap())
            .sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn posterior_weights_sum_to_one() {
        let grid = QuadratureGrid::build(2, 11).unwrap();
        let p = params(vec![(vec![1.0, 0.5], 0.2), (vec![0.3, 1.4], -1.0)]);
        for y in all_patterns(2) {
            let ws = PatternWorkspace::compensatory(&y, &p, &grid).unwrap();
            let sum: f64 = ws.posterior.iter().sum();
            assert_abs_diff_eq!(sum, 1.0, epsilon = 1e-10);
            assert!(ws.posterior.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn score_beta_flat_item_is_half() {
        let grid = QuadratureGrid::build(2, 9).unwrap();
        let p = params(vec![(vec![0.0, 0.0], 0.0)]);
        assert_abs_diff_eq!(score_beta(&[1], &p, &grid, 0).unwrap(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn score_alpha_flat_item_is_zero_by_symmetry() {
        let grid = QuadratureGrid::build(2, 9).unwrap();
        let p = params(vec![(vec![0.0, 0.0], 0.0)]);
        assert_abs_diff_eq!(
            score_alpha(&[1], &p, &grid, 0, 0).unwrap(),
            0.0,
            epsilon = 1e-10
        );
    }

    #[test]
    fn flipping_item_negates_score() {
        let grid = QuadratureGrid::build(2, 11).unwrap();
        let p = params(vec![(vec![1.1, 0.6], 0.4), (vec![0.5, 1.3], -0.2)]);
        let mut flipped = p.clone();
        flipped.items[0].beta = -flipped.items[0].beta;
        for a in flipped.items[0].alpha.iter_mut() {
            *a = -*a;
        }
        let s = score_beta(&[1, 0], &p, &grid, 0).unwrap();
        let s_f = score_beta(&[0, 0], &flipped, &grid, 0).unwrap();
        assert_abs_diff_eq!(s, -s_f, epsilon = 1e-12);
    }

    #[test]
    fn hessian_beta_single_flat_item() {
        // One grid-constant item: the posterior score variance vanishes and
        // the curvature is the plain logistic -sigma(0)(1-sigma(0)).
        let grid = QuadratureGrid::build(2, 9).unwrap();
        let p = params(vec![(vec![0.0, 0.0], 0.0)]);
        assert_abs_diff_eq!(
            hessian_beta(&[1], &p, &grid, 0).unwrap(),
            -0.25,
            epsilon = 1e-12
        );
    }

    fn fd_log_marginal(
        y: &[u8],
        params: &CompParams,
        grid: &QuadratureGrid,
        h: usize,
        dim: Option<usize>,
        delta: f64,
    ) -> (f64, f64) {
        // returns (first, second) central finite differences
        let eval = |shift: f64| {
            let mut p = params.clone();
            match dim {
                None => p.items[h].beta += shift,
                Some(d) => p.items[h].alpha[d] += shift,
            }
            log_marginal_prob_compensatory(y, &p, grid).unwrap()
        };
        let up = eval(delta);
        let mid = eval(0.0);
        let down = eval(-delta);
        ((up - down) / (2.0 * delta), (up - 2.0 * mid + down) / (delta * delta))
    }

    #[test]
    fn derivatives_match_finite_differences_smoke() {
        let grid = QuadratureGrid::build(2, 15).unwrap();
        let p = params(vec![
            (vec![1.4, 0.3], 0.7),
            (vec![0.6, 1.8], -0.9),
            (vec![1.0, 1.0], 0.0),
        ]);
        let y = [1u8, 0, 1];
        for h in 0..3 {
            let (fd_s, fd_h) = fd_log_marginal(&y, &p, &grid, h, None, 1e-5);
            assert_abs_diff_eq!(score_beta(&y, &p, &grid, h).unwrap(), fd_s, epsilon = 1e-8);
            let (_, fd_h2) = fd_log_marginal(&y, &p, &grid, h, None, 1e-4);
            let _ = fd_h;
            assert_abs_diff_eq!(hessian_beta(&y, &p, &grid, h).unwrap(), fd_h2, epsilon = 1e-6);
            for dim in 0..2 {
                let (fd_s, _) = fd_log_marginal(&y, &p, &grid, h, Some(dim), 1e-5);
                assert_abs_diff_eq!(
                    score_alpha(&y, &p, &grid, h, dim).unwrap(),
                    fd_s,
                    epsilon = 1e-8
                );
                let (_, fd_h2) = fd_log_marginal(&y, &p, &grid, h, Some(dim), 1e-4);
                assert_abs_diff_eq!(
                    hessian_alpha(&y, &p, &grid, h, dim).unwrap(),
                    fd_h2,
                    epsilon = 1e-6
                );
            }
        }
    }

    #[test]
    fn underflow_is_reported_not_zeroed() {
        let grid = QuadratureGrid::build(1, 5).unwrap();
        let p = params(vec![(vec![0.0], -800.0)]);
        let err = marginal_prob_compensatory(&[1], &p, &grid).unwrap_err();
        assert!(matches!(err, Error::Underflow { .. }));
        let err = score_beta(&[1], &p, &grid, 0).unwrap_err();
        assert!(matches!(err, Error::Underflow { .. }));
    }

    #[test]
    fn index_checks() {
        let grid = QuadratureGrid::build(2, 5).unwrap();
        let p = params(vec![(vec![1.0, 1.0], 0.0)]);
        assert!(score_beta(&[1], &p, &grid, 1).is_err());
        assert!(score_alpha(&[1], &p, &grid, 0, 2).is_err());
        assert!(matches!(
            marginal_prob_compensatory(&[1, 0], &p, &grid),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
