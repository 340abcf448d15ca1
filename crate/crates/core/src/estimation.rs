//! Marginal maximum likelihood estimation of the compensatory model.
//!
//! `fit_compensatory_em` runs the classic marginal EM: the E-step spreads
//! each learner over the quadrature grid by posterior weight, the M-step
//! solves one weighted logistic regression per item on the expected counts
//! `r_il = sum_j y_ij pi_jl`, `n_l = sum_j pi_jl`.
//!
//! Rotational indeterminacy is resolved by a confirmatory loading structure
//! (per-item masks of free loadings), with loadings initialized at +1 and
//! intercepts at 0.
//!
//! The per-learner reductions are accumulated in fixed-point integers, so
//! fitted estimates are bit-identical under learner permutation and under
//! any parallel chunking of the E-step.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::RngFactory;
use crate::error::{Error, Result};
use crate::model::{CompParams, ItemBank, ItemParams, ResponseMatrix};
use crate::numeric::{
    fx_log, fx_unit, log_sigmoid, sigmoid, softplus, solve_small, unfx_log, unfx_unit,
};
use crate::quadrature::QuadratureGrid;

/// Grid points per dimension that keep EM tractable while passing the
/// quadrature exactness checks.
pub fn default_points_per_dim(k: usize) -> usize {
    match k {
        1 => 41,
        2 => 21,
        _ => 11,
    }
}

/// Posterior contributions below exp(-45) relative to a learner's best grid
/// point are dropped; they are orders of magnitude under f64 resolution of
/// the accumulated counts.
const LOG_PRUNE: f64 = -45.0;

/// Identifies a single scalar item parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParamId {
    Beta { item: usize },
    Alpha { item: usize, dim: usize },
}

impl ParamId {
    pub fn item(&self) -> usize {
        match *self {
            ParamId::Beta { item } => item,
            ParamId::Alpha { item, .. } => item,
        }
    }

    pub fn is_discrimination(&self) -> bool {
        matches!(self, ParamId::Alpha { .. })
    }
}

impl std::fmt::Display for ParamId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match *self {
            ParamId::Beta { item } => write!(f, "beta[{item}]"),
            ParamId::Alpha { item, dim } => write!(f, "alpha[{item}][{dim}]"),
        }
    }
}

/// Settings for one EM fit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitConfig {
    pub max_em_iterations: usize,
    /// EM stops when the largest absolute parameter change falls below this.
    pub em_tolerance: f64,
    /// Per-item Newton tolerance inside the M-step.
    pub inner_newton_tolerance: f64,
    pub points_per_dim: usize,
    /// Per item, which loadings are free; absent loadings are pinned at 0.
    pub loading_structure: Vec<Vec<bool>>,
    pub seed: u64,
}

impl FitConfig {
    /// Confirmatory structure read off a generating bank: every item loads
    /// exactly on its required skills.
    pub fn for_bank(bank: &ItemBank, seed: u64) -> Self {
        let masks = bank
            .items
            .iter()
            .map(|item| {
                let mut mask = vec![false; bank.k];
                for (dim, _, _) in item.required() {
                    mask[dim] = true;
                }
                mask
            })
            .collect();
        FitConfig {
            max_em_iterations: 500,
            em_tolerance: 1e-4,
            inner_newton_tolerance: 1e-8,
            points_per_dim: default_points_per_dim(bank.k),
            loading_structure: masks,
            seed,
        }
    }

    /// All loadings free on every item.
    pub fn full_loading(m: usize, k: usize, seed: u64) -> Self {
        FitConfig {
            max_em_iterations: 500,
            em_tolerance: 1e-4,
            inner_newton_tolerance: 1e-8,
            points_per_dim: default_points_per_dim(k),
            loading_structure: vec![vec![true; k]; m],
            seed,
        }
    }

    pub fn validate(&self, k: usize, m: usize) -> Result<()> {
        if self.em_tolerance <= 0.0 || self.inner_newton_tolerance <= 0.0 {
            return Err(Error::invalid("tolerances must be positive"));
        }
        if self.max_em_iterations == 0 {
            return Err(Error::invalid("max_em_iterations must be at least 1"));
        }
        if self.loading_structure.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                actual: self.loading_structure.len(),
                what: "loading structure vs item count",
            });
        }
        if self.loading_structure.iter().any(|mask| mask.len() != k) {
            return Err(Error::invalid("every loading mask must have length K"));
        }
        Ok(())
    }
}

/// Output of `fit_compensatory_em`. Serializes as
/// `{items: [...], loglik_trace: [...], converged, iterations}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitResult {
    #[serde(flatten)]
    pub params: CompParams,
    /// Marginal log-likelihood at the start of each EM cycle plus once more
    /// at the returned parameters; non-decreasing up to 1e-8 slack.
    pub loglik_trace: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

// ---------------------------------------------------------------------------
// Shared tables
// ---------------------------------------------------------------------------

/// Per-item, per-grid-point response log-probabilities under the current
/// compensatory parameters.
pub(crate) struct CompTables {
    /// ln p(y=0 | gamma_l), M x L row-major.
    pub lp0: Vec<f64>,
    /// ln p(y=1) - ln p(y=0), M x L.
    pub diff: Vec<f64>,
    /// column sums of lp0 over items, length L.
    pub base: Vec<f64>,
    /// sigmoid of the linear predictor, M x L.
    pub sigma: Vec<f64>,
}

pub(crate) fn comp_tables(params: &CompParams, grid: &QuadratureGrid) -> CompTables {
    let m = params.items.len();
    let l = grid.len();
    let mut lp0 = vec![0.0; m * l];
    let mut diff = vec![0.0; m * l];
    let mut sigma = vec![0.0; m * l];
    lp0.par_chunks_mut(l)
        .zip(diff.par_chunks_mut(l))
        .zip(sigma.par_chunks_mut(l))
        .enumerate()
        .for_each(|(i, ((lp0_i, diff_i), sigma_i))| {
            let p = &params.items[i];
            for li in 0..l {
                let eta = crate::model::linear_predictor(&p.alpha, p.beta, grid.point(li));
                let l1 = log_sigmoid(eta);
                let l0 = log_sigmoid(-eta);
                lp0_i[li] = l0;
                diff_i[li] = l1 - l0;
                sigma_i[li] = sigmoid(eta);
            }
        });
    let mut base = vec![0.0; l];
    for i in 0..m {
        for (b, v) in base.iter_mut().zip(&lp0[i * l..(i + 1) * l]) {
            *b += v;
        }
    }
    CompTables { lp0, diff, base, sigma }
}

/// Column indices of correct responses, CSR layout.
pub(crate) struct OnesCsr {
    idx: Vec<u32>,
    ptr: Vec<usize>,
}

impl OnesCsr {
    pub(crate) fn build(y: &ResponseMatrix) -> Self {
        let n = y.n_learners();
        let mut idx = Vec::new();
        let mut ptr = Vec::with_capacity(n + 1);
        ptr.push(0);
        for j in 0..n {
            for (i, &v) in y.row(j).iter().enumerate() {
                if v == 1 {
                    idx.push(i as u32);
                }
            }
            ptr.push(idx.len());
        }
        OnesCsr { idx, ptr }
    }

    #[inline]
    pub(crate) fn row(&self, j: usize) -> &[u32] {
        &self.idx[self.ptr[j]..self.ptr[j + 1]]
    }
}

/// Fill `out` with the conditional pattern log-likelihood of learner `j` at
/// every grid point.
#[inline]
pub(crate) fn pattern_loglik(
    out: &mut [f64],
    ones: &[u32],
    tables: &CompTables,
    l: usize,
) {
    out.copy_from_slice(&tables.base);
    for &i in ones {
        let row = &tables.diff[i as usize * l..(i as usize + 1) * l];
        for (o, v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
}

// ---------------------------------------------------------------------------
// E-step
// ---------------------------------------------------------------------------

struct EStep {
    /// expected correct counts per item and grid point, M x L
    r: Vec<f64>,
    /// expected learner mass per grid point, L
    n: Vec<f64>,
    /// marginal log-likelihood of the sample
    loglik: f64,
}

fn e_step(
    csr: &OnesCsr,
    n_learners: usize,
    m: usize,
    tables: &CompTables,
    grid: &QuadratureGrid,
) -> EStep {
    let l = grid.len();
    let weights = grid.weights();
    const CHUNK: usize = 256;

    struct Partial {
        r: Vec<i128>,
        n: Vec<i128>,
        ll: i128,
    }

    let chunk_bounds: Vec<(usize, usize)> = (0..n_learners)
        .step_by(CHUNK)
        .map(|s| (s, (s + CHUNK).min(n_learners)))
        .collect();

    let partials: Vec<Partial> = chunk_bounds
        .par_iter()
        .map(|&(start, end)| {
            let mut part = Partial { r: vec![0i128; m * l], n: vec![0i128; l], ll: 0 };
            let mut acc = vec![0.0f64; l];
            let mut sparse_idx: Vec<u32> = Vec::with_capacity(l);
            let mut sparse_fx: Vec<i128> = Vec::with_capacity(l);
            for j in start..end {
                let ones = csr.row(j);
                pattern_loglik(&mut acc, ones, tables, l);
                let max = acc.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mut total = 0.0;
                sparse_idx.clear();
                sparse_fx.clear();
                // first pass: unnormalized posterior mass per point
                for (li, a) in acc.iter_mut().enumerate() {
                    let t = *a - max;
                    if t >= LOG_PRUNE {
                        let v = weights[li] * t.exp();
                        total += v;
                        *a = v;
                        sparse_idx.push(li as u32);
                    } else {
                        *a = 0.0;
                    }
                }
                part.ll += fx_log(max + total.ln());
                let inv = 1.0 / total;
                for &li in &sparse_idx {
                    let f = fx_unit(acc[li as usize] * inv);
                    part.n[li as usize] += f;
                    sparse_fx.push(f);
                }
                for &i in ones {
                    let row = &mut part.r[i as usize * l..(i as usize + 1) * l];
                    for (&li, &f) in sparse_idx.iter().zip(&sparse_fx) {
                        row[li as usize] += f;
                    }
                }
            }
            part
        })
        .collect();

    // reduce in chunk order; i128 addition is exactly associative so the
    // result is independent of both learner order and parallel scheduling
    let mut r_fx = vec![0i128; m * l];
    let mut n_fx = vec![0i128; l];
    let mut ll_fx = 0i128;
    for part in &partials {
        for (dst, src) in r_fx.iter_mut().zip(&part.r) {
            *dst += src;
        }
        for (dst, src) in n_fx.iter_mut().zip(&part.n) {
            *dst += src;
        }
        ll_fx += part.ll;
    }
    EStep {
        r: r_fx.into_iter().map(unfx_unit).collect(),
        n: n_fx.into_iter().map(unfx_unit).collect(),
        loglik: unfx_log(ll_fx),
    }
}

// ---------------------------------------------------------------------------
// M-step
// ---------------------------------------------------------------------------

/// Weighted logistic regression of expected counts on the grid points.
fn m_step_item(
    r_i: &[f64],
    n_l: &[f64],
    grid: &QuadratureGrid,
    mask: &[bool],
    current: &ItemParams,
    tol: f64,
    item: usize,
) -> Result<ItemParams> {
    let dims: Vec<usize> = mask
        .iter()
        .enumerate()
        .filter_map(|(d, &f)| f.then_some(d))
        .collect();
    let d = dims.len() + 1; // free loadings plus intercept
    let l = grid.len();

    let mut x: Vec<f64> = dims.iter().map(|&dim| current.alpha[dim]).collect();
    x.push(current.beta);

    let objective = |x: &[f64]| -> f64 {
        let mut f = 0.0;
        for li in 0..l {
            let p = grid.point(li);
            let mut eta = x[d - 1];
            for (t, &dim) in dims.iter().enumerate() {
                eta += x[t] * p[dim];
            }
            f += r_i[li] * eta - n_l[li] * softplus(eta);
        }
        f
    };

    let mut f_cur = objective(&x);
    for _ in 0..50 {
        let mut grad = vec![0.0; d];
        let mut neg_hess = vec![0.0; d * d];
        for li in 0..l {
            let p = grid.point(li);
            let mut eta = x[d - 1];
            for (t, &dim) in dims.iter().enumerate() {
                eta += x[t] * p[dim];
            }
            let s = sigmoid(eta);
            let resid = r_i[li] - n_l[li] * s;
            let w = n_l[li] * s * (1.0 - s);
            for t in 0..d {
                let xt = if t == d - 1 { 1.0 } else { p[dims[t]] };
                grad[t] += resid * xt;
                for u in t..d {
                    let xu = if u == d - 1 { 1.0 } else { p[dims[u]] };
                    neg_hess[t * d + u] += w * xt * xu;
                }
            }
        }
        for t in 0..d {
            for u in 0..t {
                neg_hess[t * d + u] = neg_hess[u * d + t];
            }
        }
        let mut a = neg_hess;
        let mut b = grad.clone();
        let mut step = solve_small(&mut a, &mut b, d).ok_or_else(|| {
            Error::numerical(format!("singular M-step Hessian for item {item}"))
        })?;
        // damp oversized steps; an accepted overshoot can strand Newton in a
        // flat region it cannot leave
        let inf = step.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        if inf > 2.0 {
            for v in step.iter_mut() {
                *v *= 2.0 / inf;
            }
        }

        // step halving until the expected-counts objective does not decrease
        let mut scale = 1.0;
        let mut halvings = 0;
        let (x_new, f_new) = loop {
            let cand: Vec<f64> = x.iter().zip(&step).map(|(&xi, &s)| xi + scale * s).collect();
            let f_cand = objective(&cand);
            if f_cand.is_finite() && f_cand >= f_cur - 1e-12 * (1.0 + f_cur.abs()) {
                break (cand, f_cand);
            }
            halvings += 1;
            if halvings > 50 {
                return Err(Error::numerical(format!(
                    "M-step Newton diverged for item {item} after 50 halvings"
                )));
            }
            scale *= 0.5;
        };
        let delta = x_new
            .iter()
            .zip(&x)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        x = x_new;
        f_cur = f_new;
        if delta < tol {
            break;
        }
    }

    // a marginal 2PL slope can lack a finite maximizer at small n
    // (latent-scale separation); refuse to walk out to infinity
    if x.iter().any(|v| v.abs() > 40.0) {
        return Err(Error::numerical(format!(
            "item {item} parameters diverged (|value| > 40); the marginal MLE \
             has no finite optimum at this sample size"
        )));
    }

    let mut alpha = vec![0.0; current.alpha.len()];
    for (t, &dim) in dims.iter().enumerate() {
        alpha[dim] = x[t];
    }
    Ok(ItemParams { alpha, beta: x[d - 1] })
}

// ---------------------------------------------------------------------------
// EM driver
// ---------------------------------------------------------------------------

/// Fit the compensatory model by marginal maximum likelihood.
pub fn fit_compensatory_em(
    y: &ResponseMatrix,
    k: usize,
    config: &FitConfig,
) -> Result<FitResult> {
    let n = y.n_learners();
    let m = y.n_items();
    config.validate(k, m)?;
    if n == 0 {
        return Err(Error::invalid("no learners in response matrix"));
    }
    for i in 0..m {
        let count: usize = (0..n).map(|j| y.get(j, i) as usize).sum();
        if count == 0 || count == n {
            return Err(Error::DegenerateItem { item: i, all_ones: count == n });
        }
    }

    let grid = QuadratureGrid::build(k, config.points_per_dim)?;
    let csr = OnesCsr::build(y);

    let mut params = CompParams {
        items: config
            .loading_structure
            .iter()
            .map(|mask| ItemParams {
                alpha: mask.iter().map(|&f| if f { 1.0 } else { 0.0 }).collect(),
                beta: 0.0,
            })
            .collect(),
    };

    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    loop {
        let tables = comp_tables(&params, &grid);
        let es = e_step(&csr, n, m, &tables, &grid);
        trace.push(es.loglik);
        if converged || iterations >= config.max_em_iterations {
            break;
        }

        let new_items: Vec<Result<ItemParams>> = (0..m)
            .into_par_iter()
            .map(|i| {
                m_step_item(
                    &es.r[i * grid.len()..(i + 1) * grid.len()],
                    &es.n,
                    &grid,
                    &config.loading_structure[i],
                    &params.items[i],
                    config.inner_newton_tolerance,
                    i,
                )
            })
            .collect();
        let mut delta = 0.0f64;
        let mut items = Vec::with_capacity(m);
        for (i, res) in new_items.into_iter().enumerate() {
            let new = res?;
            let old = &params.items[i];
            delta = delta.max((new.beta - old.beta).abs());
            for (a, b) in new.alpha.iter().zip(&old.alpha) {
                delta = delta.max((a - b).abs());
            }
            items.push(new);
        }
        params = CompParams { items };
        iterations += 1;
        if delta < config.em_tolerance {
            converged = true;
        }
    }

    Ok(FitResult { params, loglik_trace: trace, converged, iterations })
}

// ---------------------------------------------------------------------------
// MAP skill estimation
// ---------------------------------------------------------------------------

/// Posterior-mode skills for one response pattern under fitted parameters.
///
/// The objective (logistic log-likelihood plus standard-normal log-prior) is
/// strictly concave, so damped Newton from the prior mode converges to the
/// unique maximizer; the returned point has gradient norm at most 1e-8.
pub fn map_skills(y: &[u8], params: &CompParams) -> Result<Vec<f64>> {
    if y.len() != params.items.len() {
        return Err(Error::DimensionMismatch {
            expected: params.items.len(),
            actual: y.len(),
            what: "pattern length vs item count",
        });
    }
    let k = params.k();
    let mut gamma = vec![0.0; k];
    if k == 0 {
        return Ok(gamma);
    }

    let objective = |g: &[f64]| -> f64 {
        let mut f = 0.0;
        for (i, p) in params.items.iter().enumerate() {
            let eta = crate::model::linear_predictor(&p.alpha, p.beta, g);
            f += y[i] as f64 * eta - softplus(eta);
        }
        f - 0.5 * g.iter().map(|v| v * v).sum::<f64>()
    };

    let mut f_cur = objective(&gamma);
    for _ in 0..200 {
        // gradient and negative Hessian (I + sum sigma(1-sigma) alpha alpha')
        let mut grad: Vec<f64> = gamma.iter().map(|&g| -g).collect();
        let mut neg_hess = vec![0.0; k * k];
        for d in 0..k {
            neg_hess[d * k + d] = 1.0;
        }
        for (i, p) in params.items.iter().enumerate() {
            let eta = crate::model::linear_predictor(&p.alpha, p.beta, &gamma);
            let s = sigmoid(eta);
            let resid = y[i] as f64 - s;
            let w = s * (1.0 - s);
            for d in 0..k {
                grad[d] += resid * p.alpha[d];
                for e in d..k {
                    neg_hess[d * k + e] += w * p.alpha[d] * p.alpha[e];
                }
            }
        }
        for d in 0..k {
            for e in 0..d {
                neg_hess[d * k + e] = neg_hess[e * k + d];
            }
        }
        let gnorm = grad.iter().map(|v| v * v).sum::<f64>().sqrt();
        if gnorm <= 1e-10 {
            break;
        }
        let mut a = neg_hess;
        let mut b = grad.clone();
        let step = solve_small(&mut a, &mut b, k)
            .ok_or_else(|| Error::numerical("singular Hessian in MAP iteration".to_string()))?;
        let mut scale = 1.0;
        loop {
            let cand: Vec<f64> = gamma.iter().zip(&step).map(|(&g, &s)| g + scale * s).collect();
            let f_cand = objective(&cand);
            if f_cand >= f_cur - 1e-14 {
                gamma = cand;
                f_cur = f_cand;
                break;
            }
            scale *= 0.5;
            if scale < 1e-12 {
                // concavity makes this effectively unreachable for finite input
                return Err(Error::numerical("MAP step-halving stalled".to_string()));
            }
        }
    }
    Ok(gamma)
}

/// MAP skills for every learner, in parallel.
pub fn map_skills_all(y: &ResponseMatrix, params: &CompParams) -> Result<Vec<Vec<f64>>> {
    (0..y.n_learners())
        .into_par_iter()
        .map(|j| map_skills(y.row(j), params))
        .collect()
}

// ---------------------------------------------------------------------------
// One-parameter refinement
// ---------------------------------------------------------------------------

const REFINE_THETA_LIMIT: f64 = 60.0;
const REFINE_TOL: f64 = 1e-8;

/// Per-item machinery for optimizing one scalar parameter of item `h` while
/// everything else stays fixed. `a[j*L + l] = w_l exp(base_jl - m_j)` where
/// `base` excludes item h's factor, so a score evaluation at a new theta only
/// needs the item's fresh sigmoids and one pass over the rows.
struct ItemRefiner<'g> {
    grid: &'g QuadratureGrid,
    a: Vec<f64>,
    y_col: Vec<u8>,
    /// linear predictor of item h at every grid point, under current params
    eta: Vec<f64>,
}

impl<'g> ItemRefiner<'g> {
    fn new(
        y: &ResponseMatrix,
        params: &CompParams,
        grid: &'g QuadratureGrid,
        tables: &CompTables,
        full: &[f64],
        h: usize,
    ) -> Self {
        let l = grid.len();
        let n = y.n_learners();
        let p = &params.items[h];
        let eta: Vec<f64> = (0..l)
            .map(|li| crate::model::linear_predictor(&p.alpha, p.beta, grid.point(li)))
            .collect();
        let lp0_h = &tables.lp0[h * l..(h + 1) * l];
        let diff_h = &tables.diff[h * l..(h + 1) * l];
        let weights = grid.weights();

        let mut a = vec![0.0; n * l];
        let y_col: Vec<u8> = (0..n).map(|j| y.get(j, h)).collect();
        a.par_chunks_mut(l).enumerate().for_each(|(j, row)| {
            let yh = y_col[j];
            let full_row = &full[j * l..(j + 1) * l];
            let mut max = f64::NEG_INFINITY;
            for li in 0..l {
                let mut base = full_row[li] - lp0_h[li];
                if yh == 1 {
                    base -= diff_h[li];
                }
                let v = base + weights[li].ln();
                row[li] = v;
                if v > max {
                    max = v;
                }
            }
            for v in row.iter_mut() {
                *v = (*v - max).exp();
            }
        });
        ItemRefiner { grid, a, y_col, eta }
    }

    /// Dataset score and curvature in the target parameter at offset `theta`,
    /// where the item's predictor is `eta_base + theta * x_l`.
    fn score_and_hessian(&self, target: &ParamId, cur: f64, theta: f64) -> (f64, f64) {
        let l = self.grid.len();
        let dim = match *target {
            ParamId::Beta { .. } => None,
            ParamId::Alpha { dim, .. } => Some(dim),
        };
        // per-point tables for both response values
        let mut q = vec![0.0; 2 * l];
        let mut qs = vec![0.0; 2 * l];
        let mut qs2 = vec![0.0; 2 * l];
        let mut qsp = vec![0.0; 2 * l];
        for li in 0..l {
            let x = dim.map_or(1.0, |d| self.grid.point(li)[d]);
            let eta = self.eta[li] + (theta - cur) * x;
            let s = sigmoid(eta);
            let v = s * (1.0 - s);
            // y = 0 block
            q[li] = 1.0 - s;
            qs[li] = -v * x;
            qs2[li] = (1.0 - s) * s * s * x * x;
            qsp[li] = -(1.0 - s) * v * x * x;
            // y = 1 block
            q[l + li] = s;
            qs[l + li] = v * x;
            qs2[l + li] = s * (1.0 - s) * (1.0 - s) * x * x;
            qsp[l + li] = -s * v * x * x;
        }

        let n = self.y_col.len();
        const CHUNK: usize = 1024;
        let bounds: Vec<(usize, usize)> = (0..n)
            .step_by(CHUNK)
            .map(|s| (s, (s + CHUNK).min(n)))
            .collect();
        let partials: Vec<(f64, f64)> = bounds
            .par_iter()
            .map(|&(start, end)| {
                let mut score = 0.0;
                let mut hess = 0.0;
                for j in start..end {
                    let off = self.y_col[j] as usize * l;
                    let row = &self.a[j * l..(j + 1) * l];
                    let (mut d0, mut d1, mut d2, mut d3) = (0.0, 0.0, 0.0, 0.0);
                    for li in 0..l {
                        let w = row[li];
                        d0 += w * q[off + li];
                        d1 += w * qs[off + li];
                        d2 += w * qs2[off + li];
                        d3 += w * qsp[off + li];
                    }
                    let es = d1 / d0;
                    score += es;
                    hess += d3 / d0 + d2 / d0 - es * es;
                }
                (score, hess)
            })
            .collect();
        let mut score = 0.0;
        let mut hess = 0.0;
        for (s, h) in partials {
            score += s;
            hess += h;
        }
        (score, hess)
    }

    /// Maximize the marginal log-likelihood over the single target parameter
    /// by bracketing the score's sign change and running safeguarded Newton.
    fn refine(&self, target: &ParamId, cur: f64, init: f64) -> Result<f64> {
        let eval = |t: f64| self.score_and_hessian(target, cur, t);

        let (s_init, _) = eval(init);
        if s_init == 0.0 {
            return Ok(init);
        }
        // walk in the ascent direction until the score changes sign
        let mut lo;
        let mut hi;
        if s_init > 0.0 {
            lo = init;
            hi = init;
            let mut step = 0.25;
            loop {
                hi += step;
                if hi > REFINE_THETA_LIMIT {
                    return Err(Error::Bracketing(format!(
                        "{target}: no score sign change up to {REFINE_THETA_LIMIT}"
                    )));
                }
                let (s, _) = eval(hi);
                if s <= 0.0 {
                    break;
                }
                lo = hi;
                step *= 2.0;
            }
        } else {
            hi = init;
            lo = init;
            let mut step = 0.25;
            loop {
                lo -= step;
                if lo < -REFINE_THETA_LIMIT {
                    return Err(Error::Bracketing(format!(
                        "{target}: no score sign change down to -{REFINE_THETA_LIMIT}"
                    )));
                }
                let (s, _) = eval(lo);
                if s >= 0.0 {
                    break;
                }
                hi = lo;
                step *= 2.0;
            }
        }

        // safeguarded Newton on the score within [lo, hi]
        let mut x = 0.5 * (lo + hi);
        for _ in 0..200 {
            let (s, h) = eval(x);
            if s > 0.0 {
                lo = x;
            } else {
                hi = x;
            }
            let newton = if h < 0.0 { x - s / h } else { f64::NAN };
            let next = if newton.is_finite() && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            let dx = (next - x).abs();
            x = next;
            if dx <= REFINE_TOL || (hi - lo) <= REFINE_TOL {
                break;
            }
        }
        Ok(x)
    }
}

fn current_value(params: &CompParams, target: &ParamId) -> f64 {
    match *target {
        ParamId::Beta { item } => params.items[item].beta,
        ParamId::Alpha { item, dim } => params.items[item].alpha[dim],
    }
}

/// Conditional pattern log-likelihood of every learner at every grid point.
pub(crate) fn full_loglik_matrix(
    csr: &OnesCsr,
    n: usize,
    tables: &CompTables,
    l: usize,
) -> Vec<f64> {
    let mut full = vec![0.0; n * l];
    full.par_chunks_mut(l).enumerate().for_each(|(j, row)| {
        pattern_loglik(row, csr.row(j), tables, l);
    });
    full
}

/// Maximize the marginal log-likelihood over one parameter, all others held
/// at their current values, starting from a uniform draw on
/// [current - 1, current + 1].
pub fn refine_one_parameter(
    y: &ResponseMatrix,
    params: &CompParams,
    target: ParamId,
    config: &FitConfig,
) -> Result<f64> {
    if target.item() >= params.items.len() {
        return Err(Error::invalid(format!("{target}: item index out of range")));
    }
    let grid = QuadratureGrid::build(params.k(), config.points_per_dim)?;
    let tables = comp_tables(params, &grid);
    let csr = OnesCsr::build(y);
    let full = full_loglik_matrix(&csr, y.n_learners(), &tables, grid.len());
    let refiner = ItemRefiner::new(y, params, &grid, &tables, &full, target.item());

    let cur = current_value(params, &target);
    let mut rng = RngFactory::from_seed(config.seed).rng(&format!("refine/{target}"));
    let init = cur + (rng.random::<f64>() * 2.0 - 1.0);
    refiner.refine(&target, cur, init)
}

/// Refine every free parameter independently from the same starting fit and
/// return the updated parameter set.
pub fn refine_all_parameters(
    y: &ResponseMatrix,
    params: &CompParams,
    config: &FitConfig,
) -> Result<CompParams> {
    let m = params.items.len();
    config.validate(params.k(), m)?;
    let grid = QuadratureGrid::build(params.k(), config.points_per_dim)?;
    let tables = comp_tables(params, &grid);
    let csr = OnesCsr::build(y);
    let full = full_loglik_matrix(&csr, y.n_learners(), &tables, grid.len());
    let factory = RngFactory::from_seed(config.seed);

    let items: Vec<Result<ItemParams>> = (0..m)
        .into_par_iter()
        .map(|h| {
            let refiner = ItemRefiner::new(y, params, &grid, &tables, &full, h);
            let mut refined = params.items[h].clone();
            let mut targets = vec![ParamId::Beta { item: h }];
            for (dim, &free) in config.loading_structure[h].iter().enumerate() {
                if free {
                    targets.push(ParamId::Alpha { item: h, dim });
                }
            }
            for target in targets {
                let cur = current_value(params, &target);
                let mut rng = factory.rng(&format!("refine/{target}"));
                let init = cur + (rng.random::<f64>() * 2.0 - 1.0);
                let value = refiner.refine(&target, cur, init)?;
                match target {
                    ParamId::Beta { .. } => refined.beta = value,
                    ParamId::Alpha { dim, .. } => refined.alpha[dim] = value,
                }
            }
            Ok(refined)
        })
        .collect();

    let mut out = Vec::with_capacity(m);
    for item in items {
        out.push(item?);
    }
    Ok(CompParams { items: out })
}
