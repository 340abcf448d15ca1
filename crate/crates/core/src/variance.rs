//! Sandwich asymptotic variances of the misspecified item-parameter MLE.
//!
//! For each scalar item parameter theta the per-parameter information
//! scalars are estimated under the data-generating distribution:
//!
//! ```text
//! I(theta*) = -E[ d2 ln p_c(y) / d theta^2 ]     (at theta = theta*)
//! J(theta*) =  E[ (d ln p_c(y) / d theta)^2 ]
//! ```
//!
//! The misspecification-aware asymptotic variance of `sqrt(n)(theta_hat -
//! theta*)` is the sandwich `I^-1 J I^-1`; ignoring misspecification gives
//! the naive `I^-1`. Both are validated against the experimental variance
//! `n * Var(theta_hat)` over replicated fits.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::{sample_learners, sample_responses, RngFactory};
use crate::error::{Error, Result};
use crate::estimation::{
    comp_tables, fit_compensatory_em, refine_all_parameters, FitConfig, ParamId,
};
use crate::model::{prob_noncompensatory, CompParams, ItemBank};
use crate::numeric::{sample_variance, sigmoid};
use crate::quadrature::QuadratureGrid;

/// Canonical parameter order of a bank's confirmatory fit: per item, the
/// intercept followed by the loadings on its required skills.
pub fn param_ids(bank: &ItemBank) -> Vec<ParamId> {
    let mut ids = Vec::new();
    for (item, it) in bank.items.iter().enumerate() {
        ids.push(ParamId::Beta { item });
        for (dim, _, _) in it.required() {
            ids.push(ParamId::Alpha { item, dim });
        }
    }
    ids
}

/// Parameter order for an arbitrary loading structure.
pub fn param_ids_from_masks(masks: &[Vec<bool>]) -> Vec<ParamId> {
    let mut ids = Vec::new();
    for (item, mask) in masks.iter().enumerate() {
        ids.push(ParamId::Beta { item });
        for (dim, &free) in mask.iter().enumerate() {
            if free {
                ids.push(ParamId::Alpha { item, dim });
            }
        }
    }
    ids
}

pub fn param_value(params: &CompParams, id: &ParamId) -> f64 {
    match *id {
        ParamId::Beta { item } => params.items[item].beta,
        ParamId::Alpha { item, dim } => params.items[item].alpha[dim],
    }
}

/// Distribution the Monte Carlo expectations are taken under.
pub enum Generator<'a> {
    /// Responses from the non-compensatory truth (the misspecified setting).
    NonCompensatory(&'a ItemBank),
    /// Responses from the compensatory model itself (the correctly specified
    /// baseline that validates the harness through I = J).
    Compensatory(&'a CompParams),
}

impl Generator<'_> {
    fn k(&self) -> usize {
        match self {
            Generator::NonCompensatory(bank) => bank.k,
            Generator::Compensatory(params) => params.k(),
        }
    }

    fn n_items(&self) -> usize {
        match self {
            Generator::NonCompensatory(bank) => bank.len(),
            Generator::Compensatory(params) => params.len(),
        }
    }

    fn sample_pattern(&self, rng: &mut ChaCha8Rng, z: &mut Vec<f64>, y: &mut Vec<u8>) {
        let k = self.k();
        z.clear();
        for _ in 0..k {
            z.push(rng.sample(StandardNormal));
        }
        y.clear();
        match self {
            Generator::NonCompensatory(bank) => {
                for item in &bank.items {
                    let p = prob_noncompensatory(item, z).expect("validated bank");
                    y.push(u8::from(rng.random::<f64>() < p));
                }
            }
            Generator::Compensatory(params) => {
                for p in &params.items {
                    let prob = sigmoid(crate::model::linear_predictor(&p.alpha, p.beta, z));
                    y.push(u8::from(rng.random::<f64>() < prob));
                }
            }
        }
    }
}

/// Monte Carlo estimates of I and J for one parameter, with standard errors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamInfo {
    pub id: ParamId,
    pub i: f64,
    pub j: f64,
    pub i_se: f64,
    pub j_se: f64,
}

const LOG_PRUNE: f64 = -45.0;

/// Estimate I(theta*) and J(theta*) for every listed parameter by sampling
/// `sample_size` response patterns from the generator (substream per draw).
pub fn info_scalars(
    generator: &Generator,
    params: &CompParams,
    ids: &[ParamId],
    grid: &QuadratureGrid,
    sample_size: usize,
    rng_base: &ChaCha8Rng,
) -> Result<Vec<ParamInfo>> {
    if sample_size < 2 {
        return Err(Error::invalid("info_scalars needs at least 2 samples"));
    }
    if generator.n_items() != params.items.len() {
        return Err(Error::DimensionMismatch {
            expected: generator.n_items(),
            actual: params.items.len(),
            what: "generator items vs fitted parameters",
        });
    }
    let l = grid.len();
    let m = params.items.len();
    let tables = comp_tables(params, grid);
    let weights = grid.weights();
    let p = ids.len();

    struct Partial {
        hess_sum: Vec<f64>,
        hess_sq: Vec<f64>,
        score_sq: Vec<f64>,
        score_quad: Vec<f64>,
    }

    const CHUNK: usize = 128;
    let bounds: Vec<(usize, usize)> = (0..sample_size)
        .step_by(CHUNK)
        .map(|s| (s, (s + CHUNK).min(sample_size)))
        .collect();

    let partials: Vec<Partial> = bounds
        .par_iter()
        .map(|&(start, end)| {
            let mut part = Partial {
                hess_sum: vec![0.0; p],
                hess_sq: vec![0.0; p],
                score_sq: vec![0.0; p],
                score_quad: vec![0.0; p],
            };
            let mut z = Vec::new();
            let mut y: Vec<u8> = Vec::new();
            let mut acc = vec![0.0; l];
            let mut post_idx: Vec<u32> = Vec::with_capacity(l);
            let mut post_val: Vec<f64> = Vec::with_capacity(l);
            for s in start..end {
                let mut rng = rng_base.clone();
                rng.set_stream(s as u64);
                generator.sample_pattern(&mut rng, &mut z, &mut y);

                // conditional log-likelihood over the grid
                acc.copy_from_slice(&tables.base);
                for (i, &yi) in y.iter().enumerate() {
                    if yi == 1 {
                        let row = &tables.diff[i * l..(i + 1) * l];
                        for (a, v) in acc.iter_mut().zip(row) {
                            *a += v;
                        }
                    }
                }
                let max = acc.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                post_idx.clear();
                post_val.clear();
                let mut total = 0.0;
                for (li, &a) in acc.iter().enumerate() {
                    let t = a - max;
                    if t >= LOG_PRUNE {
                        let v = weights[li] * t.exp();
                        total += v;
                        post_idx.push(li as u32);
                        post_val.push(v);
                    }
                }
                let inv = 1.0 / total;
                for v in post_val.iter_mut() {
                    *v *= inv;
                }

                for (t, id) in ids.iter().enumerate() {
                    let (item, dim) = match *id {
                        ParamId::Beta { item } => (item, None),
                        ParamId::Alpha { item, dim } => (item, Some(dim)),
                    };
                    debug_assert!(item < m);
                    let sig = &tables.sigma[item * l..(item + 1) * l];
                    let yh = y[item] as f64;
                    let mut e_s = 0.0;
                    let mut e_s2 = 0.0;
                    let mut e_curv = 0.0;
                    for (&li, &pi) in post_idx.iter().zip(&post_val) {
                        let li = li as usize;
                        let sv = sig[li];
                        let x = dim.map_or(1.0, |d| grid.point(li)[d]);
                        let u = (yh - sv) * x;
                        e_s += pi * u;
                        e_s2 += pi * u * u;
                        e_curv -= pi * sv * (1.0 - sv) * x * x;
                    }
                    let score = e_s;
                    let hess = e_curv + (e_s2 - e_s * e_s);
                    part.hess_sum[t] += hess;
                    part.hess_sq[t] += hess * hess;
                    let s2 = score * score;
                    part.score_sq[t] += s2;
                    part.score_quad[t] += s2 * s2;
                }
            }
            part
        })
        .collect();

    let mut hess_sum = vec![0.0; p];
    let mut hess_sq = vec![0.0; p];
    let mut score_sq = vec![0.0; p];
    let mut score_quad = vec![0.0; p];
    for part in &partials {
        for t in 0..p {
            hess_sum[t] += part.hess_sum[t];
            hess_sq[t] += part.hess_sq[t];
            score_sq[t] += part.score_sq[t];
            score_quad[t] += part.score_quad[t];
        }
    }

    let s = sample_size as f64;
    let mut out = Vec::with_capacity(p);
    for (t, id) in ids.iter().enumerate() {
        let mean_h = hess_sum[t] / s;
        let var_h = (hess_sq[t] / s - mean_h * mean_h).max(0.0);
        let mean_j = score_sq[t] / s;
        let var_j = (score_quad[t] / s - mean_j * mean_j).max(0.0);
        let i = -mean_h;
        if i <= 0.0 {
            return Err(Error::IllConditioned { param: id.to_string(), value: i });
        }
        out.push(ParamInfo {
            id: *id,
            i,
            j: mean_j,
            i_se: (var_h / s).sqrt(),
            j_se: (var_j / s).sqrt(),
        });
    }
    Ok(out)
}

/// Sandwich asymptotic variance `J / I^2`.
pub fn sandwich_variance(i: f64, j: f64) -> Result<f64> {
    if i == 0.0 {
        return Err(Error::numerical("sandwich variance undefined at I = 0".to_string()));
    }
    // (j / i) / i collapses to exactly 1/i when j == i
    Ok(j / i / i)
}

/// Naive asymptotic variance `1 / I` (correct-specification formula).
pub fn naive_variance(i: f64) -> Result<f64> {
    if i == 0.0 {
        return Err(Error::numerical("naive variance undefined at I = 0".to_string()));
    }
    Ok(1.0 / i)
}

/// Proxy for the pseudo-true compensatory parameters: the EM fit to a large
/// sample drawn from the non-compensatory truth (substreams
/// `pseudo/learners` and `pseudo/responses` of `factory`).
pub fn pseudo_true_params(
    bank: &ItemBank,
    n_big: usize,
    config: &FitConfig,
    factory: &RngFactory,
) -> Result<CompParams> {
    let skills = sample_learners(n_big, bank.k, &factory.rng("pseudo/learners"))?;
    let y = sample_responses(bank, &skills, &factory.rng("pseudo/responses"))?;
    let fit = fit_compensatory_em(&y, bank.k, config)?;
    let mut params = fit.params;
    crate::bias::align_to_anchors(&mut params, bank);
    Ok(params)
}

/// Replicated-fit design.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplicationPlan {
    /// Learners per replicate.
    pub n: usize,
    /// Number of replicates.
    pub replicates: usize,
    /// Polish every parameter with a one-dimensional optimization after EM.
    pub refinement: bool,
    pub seed: u64,
}

impl ReplicationPlan {
    pub fn validate(&self) -> Result<()> {
        if self.n < 100 {
            return Err(Error::invalid("replication plan needs n >= 100"));
        }
        if self.replicates < 2 {
            return Err(Error::invalid("replication plan needs at least 2 replicates"));
        }
        Ok(())
    }
}

/// Experimental asymptotic variances from replicated fits.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentalVariance {
    pub ids: Vec<ParamId>,
    /// `n * Var(theta_hat)` per parameter, over successful replicates.
    pub variances: Vec<f64>,
    /// Per-replicate estimates (successful replicates only), replicate-major.
    pub estimates: Vec<Vec<f64>>,
    pub dropped: usize,
    /// Error messages of the dropped replicates.
    pub failures: Vec<String>,
}

/// One replicate: sample n learners, fit EM, then (when refining) polish
/// every parameter by one-dimensional optimization around the reference
/// parameters; returns the parameter vector in `ids` order.
///
/// With refinement on, each parameter is optimized with all other parameters
/// held at the reference values. That is the estimator the per-parameter
/// scalar I and J describe; the raw joint EM coordinates fluctuate with the
/// full-matrix variance instead, which is systematically wider whenever item
/// parameters are correlated.
pub(crate) fn replicate_estimates(
    bank: &ItemBank,
    n: usize,
    rep: &RngFactory,
    config: &FitConfig,
    ids: &[ParamId],
    reference: Option<&CompParams>,
) -> Result<Vec<f64>> {
    let skills = sample_learners(n, bank.k, &rep.rng("learners"))?;
    let y = sample_responses(bank, &skills, &rep.rng("responses"))?;
    let fit = fit_compensatory_em(&y, bank.k, config)?;
    let mut params = fit.params;
    crate::bias::align_to_anchors(&mut params, bank);
    let params = if let Some(reference) = reference {
        let mut cfg = config.clone();
        cfg.seed = rep.rng("refine-seed").random::<u64>();
        refine_all_parameters(&y, reference, &cfg)?
    } else {
        params
    };
    Ok(ids.iter().map(|id| param_value(&params, id)).collect())
}

/// Run the replication plan and return `n * Var(theta_hat)` per parameter.
///
/// `reference` is the pseudo-true parameter proxy the one-parameter
/// refinement pins the remaining parameters to (used when
/// `plan.refinement` is set).
///
/// Failed replicates are dropped and counted; more than 5% failures aborts
/// the experiment.
pub fn experimental_variance(
    bank: &ItemBank,
    plan: &ReplicationPlan,
    config: &FitConfig,
    reference: &CompParams,
) -> Result<ExperimentalVariance> {
    plan.validate()?;
    let ids = param_ids(bank);
    let root = RngFactory::from_seed(plan.seed);

    let results: Vec<Result<Vec<f64>>> = (0..plan.replicates)
        .into_par_iter()
        .map(|r| {
            let rep = root.child(&format!("replicate/{r}"));
            replicate_estimates(
                bank,
                plan.n,
                &rep,
                config,
                &ids,
                plan.refinement.then_some(reference),
            )
        })
        .collect();

    let mut estimates = Vec::with_capacity(plan.replicates);
    let mut failures = Vec::new();
    for res in results {
        match res {
            Ok(est) => estimates.push(est),
            Err(e) => failures.push(e.to_string()),
        }
    }
    let dropped = failures.len();
    if dropped * 20 > plan.replicates || estimates.len() < 2 {
        return Err(Error::TooManyDrops {
            dropped,
            total: plan.replicates,
            first: failures.first().cloned().unwrap_or_default(),
        });
    }

    let variances = (0..ids.len())
        .map(|t| {
            let col: Vec<f64> = estimates.iter().map(|e| e[t]).collect();
            plan.n as f64 * sample_variance(&col)
        })
        .collect();
    Ok(ExperimentalVariance { ids, variances, estimates, dropped, failures })
}

/// Mean absolute error and mean absolute percentage error of `a` against the
/// reference `b` (MAPE in percent, `b` in the denominator).
pub fn compare_variances(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: b.len(),
            actual: a.len(),
            what: "variance vectors",
        });
    }
    if a.is_empty() {
        return Err(Error::invalid("nothing to compare"));
    }
    let mut mae = 0.0;
    let mut mape = 0.0;
    for (idx, (&x, &r)) in a.iter().zip(b).enumerate() {
        if r == 0.0 {
            return Err(Error::UndefinedMape(idx));
        }
        mae += (x - r).abs();
        mape += ((x - r) / r).abs();
    }
    let n = a.len() as f64;
    Ok((mae / n, 100.0 * mape / n))
}

/// Sample skewness of a replicate column (normality diagnostics).
pub fn skewness(xs: &[f64]) -> f64 {
    crate::numeric::skewness(xs)
}

/// Unbiased per-parameter sample variances of replicate-major estimates.
pub fn sample_variances_of(estimates: &[Vec<f64>]) -> Vec<f64> {
    let p = estimates.first().map_or(0, |e| e.len());
    (0..p)
        .map(|t| {
            let col: Vec<f64> = estimates.iter().map(|e| e[t]).collect();
            sample_variance(&col)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Report assembly
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VarianceEntry {
    pub param: ParamId,
    pub pseudo_true: f64,
    pub i: f64,
    pub j: f64,
    pub sandwich: f64,
    pub naive: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub experimental: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FamilySummary {
    pub family: String,
    pub mae: f64,
    pub mape_percent: f64,
}

/// Per-parameter variances plus family-level MAE/MAPE summaries.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VarianceReport {
    pub entries: Vec<VarianceEntry>,
    /// Sandwich against the experimental reference, per parameter family.
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub sandwich_vs_experimental: Vec<FamilySummary>,
    /// Sandwich against the naive reference, per parameter family.
    pub sandwich_vs_naive: Vec<FamilySummary>,
}

impl VarianceReport {
    pub fn build(
        pseudo_true: &CompParams,
        infos: &[ParamInfo],
        experimental: Option<&ExperimentalVariance>,
    ) -> Result<Self> {
        if let Some(exp) = experimental {
            if exp.ids.len() != infos.len() {
                return Err(Error::DimensionMismatch {
                    expected: infos.len(),
                    actual: exp.ids.len(),
                    what: "experimental vs info parameter count",
                });
            }
        }
        let mut entries = Vec::with_capacity(infos.len());
        for (t, info) in infos.iter().enumerate() {
            entries.push(VarianceEntry {
                param: info.id,
                pseudo_true: param_value(pseudo_true, &info.id),
                i: info.i,
                j: info.j,
                sandwich: sandwich_variance(info.i, info.j)?,
                naive: naive_variance(info.i)?,
                experimental: experimental.map(|e| e.variances[t]),
            });
        }

        let families = [("difficulty", false), ("discrimination", true)];
        let mut vs_naive = Vec::new();
        let mut vs_exp = Vec::new();
        for (name, disc) in families {
            let subset: Vec<&VarianceEntry> = entries
                .iter()
                .filter(|e| e.param.is_discrimination() == disc)
                .collect();
            if subset.is_empty() {
                continue;
            }
            let sandwich: Vec<f64> = subset.iter().map(|e| e.sandwich).collect();
            let naive: Vec<f64> = subset.iter().map(|e| e.naive).collect();
            let (mae, mape) = compare_variances(&sandwich, &naive)?;
            vs_naive.push(FamilySummary { family: name.to_string(), mae, mape_percent: mape });
            if experimental.is_some() {
                let exp: Vec<f64> = subset.iter().map(|e| e.experimental.unwrap()).collect();
                let (mae, mape) = compare_variances(&sandwich, &exp)?;
                vs_exp.push(FamilySummary { family: name.to_string(), mae, mape_percent: mape });
            }
        }
        Ok(VarianceReport {
            entries,
            sandwich_vs_experimental: vs_exp,
            sandwich_vs_naive: vs_naive,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{make_variance_design, DesignSpec};
    use crate::model::ItemParams;
    use approx::assert_abs_diff_eq;

    #[test]
    fn sandwich_and_naive_arithmetic() {
        assert_abs_diff_eq!(sandwich_variance(2.0, 1.0).unwrap(), 0.25);
        assert_abs_diff_eq!(naive_variance(2.0).unwrap(), 0.5);
        assert_abs_diff_eq!(sandwich_variance(0.25, 0.5).unwrap(), 8.0);
        // information equality: sandwich collapses to naive
        for &i in &[0.3, 1.0, 4.2] {
            assert_eq!(
                sandwich_variance(i, i).unwrap(),
                naive_variance(i).unwrap()
            );
        }
        assert!(sandwich_variance(0.0, 1.0).is_err());
        assert!(naive_variance(0.0).is_err());
    }

    #[test]
    fn compare_variances_examples() {
        let (mae, mape) = compare_variances(&[1.0, 2.0], &[1.0, 2.0]).unwrap();
        assert_eq!((mae, mape), (0.0, 0.0));
        let (mae, mape) = compare_variances(&[2.0, 2.0], &[1.0, 4.0]).unwrap();
        assert_abs_diff_eq!(mae, 1.5);
        assert_abs_diff_eq!(mape, 75.0);
        assert!(matches!(
            compare_variances(&[1.0], &[0.0]),
            Err(Error::UndefinedMape(0))
        ));
    }

    #[test]
    fn parameter_inventory_matches_designs() {
        let f = RngFactory::from_seed(1);
        let bank2 =
            make_variance_design(&DesignSpec::variance(2).unwrap(), &mut f.rng("d2")).unwrap();
        let ids2 = param_ids(&bank2);
        let betas = ids2.iter().filter(|id| !id.is_discrimination()).count();
        let alphas = ids2.iter().filter(|id| id.is_discrimination()).count();
        assert_eq!(betas, 50);
        assert_eq!(alphas, 10 + 10 + 2 * 30);
        assert_eq!(ids2.len(), 130);

        let bank3 =
            make_variance_design(&DesignSpec::variance(3).unwrap(), &mut f.rng("d3")).unwrap();
        let ids3 = param_ids(&bank3);
        assert_eq!(ids3.iter().filter(|id| !id.is_discrimination()).count(), 50);
        assert_eq!(
            ids3.iter().filter(|id| id.is_discrimination()).count(),
            15 + 2 * 15 + 3 * 20
        );
        assert_eq!(ids3.len(), 155);
    }

    #[test]
    fn info_estimates_are_consistent_when_sample_size_doubles() {
        let params = CompParams {
            items: vec![
                ItemParams { alpha: vec![1.1], beta: 0.3 },
                ItemParams { alpha: vec![0.8], beta: -0.6 },
                ItemParams { alpha: vec![1.4], beta: 0.9 },
            ],
        };
        let ids = param_ids_from_masks(&[vec![true], vec![true], vec![true]]);
        let grid = QuadratureGrid::build(1, 21).unwrap();
        let gen = Generator::Compensatory(&params);
        let f = RngFactory::from_seed(17);
        let small = info_scalars(&gen, &params, &ids, &grid, 4000, &f.rng("a")).unwrap();
        let large = info_scalars(&gen, &params, &ids, &grid, 8000, &f.rng("b")).unwrap();
        for (s, l) in small.iter().zip(&large) {
            let band = 2.0 * (s.i_se * s.i_se + l.i_se * l.i_se).sqrt();
            assert!((s.i - l.i).abs() <= band, "I moved {} vs {} (band {band})", s.i, l.i);
            let band = 2.0 * (s.j_se * s.j_se + l.j_se * l.j_se).sqrt();
            assert!((s.j - l.j).abs() <= band, "J moved {} vs {} (band {band})", s.j, l.j);
        }
    }

    #[test]
    fn identical_replicate_seeds_give_zero_variance() {
        let f = RngFactory::from_seed(5);
        let bank =
            make_variance_design(&DesignSpec::variance(2).unwrap(), &mut f.rng("design")).unwrap();
        let mut config = FitConfig::for_bank(&bank, 0);
        config.points_per_dim = 11;
        config.max_em_iterations = 30;
        let ids = param_ids(&bank);
        let rep = RngFactory::from_seed(77).child("replicate/0");
        let a = replicate_estimates(&bank, 400, &rep, &config, &ids, None).unwrap();
        let b = replicate_estimates(&bank, 400, &rep, &config, &ids, None).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
        // the degenerate two-replicate variance is exactly 0
        for t in 0..ids.len() {
            let col = [a[t], b[t]];
            assert_eq!(400.0 * sample_variance(&col), 0.0);
        }
    }

    #[test]
    fn replication_plan_validation() {
        assert!(ReplicationPlan { n: 50, replicates: 10, refinement: false, seed: 0 }
            .validate()
            .is_err());
        assert!(ReplicationPlan { n: 200, replicates: 1, refinement: false, seed: 0 }
            .validate()
            .is_err());
        assert!(ReplicationPlan { n: 200, replicates: 2, refinement: true, seed: 0 }
            .validate()
            .is_ok());
    }

    #[test]
    fn report_families_and_shape() {
        let params = CompParams {
            items: vec![
                ItemParams { alpha: vec![1.0], beta: 0.1 },
                ItemParams { alpha: vec![0.9], beta: -0.4 },
            ],
        };
        let infos = vec![
            ParamInfo { id: ParamId::Beta { item: 0 }, i: 0.2, j: 0.21, i_se: 0.0, j_se: 0.0 },
            ParamInfo {
                id: ParamId::Alpha { item: 0, dim: 0 },
                i: 0.1,
                j: 0.12,
                i_se: 0.0,
                j_se: 0.0,
            },
            ParamInfo { id: ParamId::Beta { item: 1 }, i: 0.25, j: 0.25, i_se: 0.0, j_se: 0.0 },
            ParamInfo {
                id: ParamId::Alpha { item: 1, dim: 0 },
                i: 0.15,
                j: 0.14,
                i_se: 0.0,
                j_se: 0.0,
            },
        ];
        let report = VarianceReport::build(&params, &infos, None).unwrap();
        assert_eq!(report.entries.len(), 4);
        assert_eq!(report.sandwich_vs_naive.len(), 2);
        assert!(report.sandwich_vs_experimental.is_empty());
        assert_abs_diff_eq!(report.entries[0].sandwich, 0.21 / 0.04, epsilon = 1e-12);
        assert_abs_diff_eq!(report.entries[0].naive, 5.0, epsilon = 1e-12);
        let json = serde_json::to_string(&report).unwrap();
        assert!(json.contains("\"sandwich_vs_naive\""));
        assert!(!json.contains("sandwich_vs_experimental"));
    }
}
