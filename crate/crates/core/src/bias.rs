//! Gradient-based analysis of the difference between estimated and true
//! skills under misspecification.
//!
//! When compensatory parameters are fitted to non-compensatory data, the
//! gradient of the learner's log-posterior evaluated at the true skills
//! approximates the direction from the true skills to the MAP estimate:
//!
//! ```text
//! g(z) = sum_i (y_i - sigma(alpha_i' z + beta_i)) alpha_i - z
//! ```
//!
//! and its expectation over responses replaces `y_i` with the true model's
//! correct probability, giving the expected direction field
//! `sum_i (p_n,i(z) - p_c,i(z)) alpha_i (- z with the prior term)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{prob_noncompensatory, CompParams, ItemBank, SkillMatrix};
use crate::numeric::{pearson, sigmoid};

/// Upper quartile of the standard normal; region bins use the theoretical
/// quartiles (-q, 0, q) so the 16 regions hold roughly equal counts.
pub const NORMAL_QUARTILE: f64 = 0.674489750196082;

/// One learner's worth of bias diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BiasSample {
    /// z*: the skills that generated the responses.
    pub true_skills: Vec<f64>,
    /// gamma*: MAP estimate under the fitted compensatory parameters.
    pub estimated_skills: Vec<f64>,
    /// Gradient of the compensatory log-posterior at z*.
    pub gradient: Vec<f64>,
    /// gamma* - z*.
    pub difference: Vec<f64>,
}

/// 4 x 4 grid of cell means over the quartile regions of (skill 1, skill 2).
///
/// `means[b1][b2]` is the mean over learners whose skill 1 falls in bin `b1`
/// and skill 2 in bin `b2`, bins ascending: (-inf,-q], (-q,0], (0,q], (q,inf).
/// Cells without samples report `None` rather than NaN.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegionTable {
    pub means: [[Option<f64>; 4]; 4],
    pub counts: [[usize; 4]; 4],
}

impl RegionTable {
    pub fn cell(&self, bin1: usize, bin2: usize) -> Option<f64> {
        self.means[bin1][bin2]
    }

    /// Bin labels in ascending order.
    pub fn bin_labels() -> [&'static str; 4] {
        ["(-inf..-0.674]", "(-0.674..0]", "(0..0.674]", "(0.674..inf)"]
    }

    /// Bin edges as (lo, hi) pairs, infinities included.
    pub fn bin_edges() -> [(f64, f64); 4] {
        [
            (f64::NEG_INFINITY, -NORMAL_QUARTILE),
            (-NORMAL_QUARTILE, 0.0),
            (0.0, NORMAL_QUARTILE),
            (NORMAL_QUARTILE, f64::INFINITY),
        ]
    }
}

/// Quartile bin of a scalar skill (bins ascending, upper edge inclusive).
pub fn quartile_bin(x: f64) -> usize {
    if x <= -NORMAL_QUARTILE {
        0
    } else if x <= 0.0 {
        1
    } else if x <= NORMAL_QUARTILE {
        2
    } else {
        3
    }
}

/// Gradient of the learner log-posterior (log-likelihood plus standard-normal
/// log-prior) at skills `z`, under fitted compensatory parameters.
pub fn gradient_at_true_skills(z: &[f64], y: &[u8], params: &CompParams) -> Result<Vec<f64>> {
    if y.len() != params.items.len() {
        return Err(Error::DimensionMismatch {
            expected: params.items.len(),
            actual: y.len(),
            what: "pattern length vs item count",
        });
    }
    if !params.items.is_empty() && z.len() != params.k() {
        return Err(Error::DimensionMismatch {
            expected: params.k(),
            actual: z.len(),
            what: "skill vector vs K",
        });
    }
    let mut g: Vec<f64> = z.iter().map(|&v| -v).collect();
    for (i, p) in params.items.iter().enumerate() {
        let eta = crate::model::linear_predictor(&p.alpha, p.beta, z);
        let resid = y[i] as f64 - sigmoid(eta);
        for (gd, &a) in g.iter_mut().zip(&p.alpha) {
            *gd += resid * a;
        }
    }
    Ok(g)
}

/// Expected gradient over responses at skills `z`:
/// `sum_i (p_n,i(z) - p_c,i(z)) alpha_i`, minus `z` when `include_prior`.
pub fn expected_gradient(
    z: &[f64],
    bank: &ItemBank,
    params: &CompParams,
    include_prior: bool,
) -> Result<Vec<f64>> {
    if bank.items.len() != params.items.len() {
        return Err(Error::DimensionMismatch {
            expected: bank.items.len(),
            actual: params.items.len(),
            what: "bank vs fitted parameter item count",
        });
    }
    let k = z.len();
    let mut g = vec![0.0; k];
    if include_prior {
        for (gd, &v) in g.iter_mut().zip(z) {
            *gd -= v;
        }
    }
    for (item, p) in bank.items.iter().zip(&params.items) {
        let pn = prob_noncompensatory(item, z)?;
        let pc = sigmoid(crate::model::linear_predictor(&p.alpha, p.beta, z));
        let diff = pn - pc;
        for (gd, &a) in g.iter_mut().zip(&p.alpha) {
            *gd += diff * a;
        }
    }
    Ok(g)
}

/// Mean of each value column over the 16 quartile regions of the first two
/// skills; one table per value column.
pub fn quartile_region_summary(
    values: &SkillMatrix,
    skills: &SkillMatrix,
) -> Result<Vec<RegionTable>> {
    if values.n() != skills.n() {
        return Err(Error::DimensionMismatch {
            expected: skills.n(),
            actual: values.n(),
            what: "value rows vs skill rows",
        });
    }
    if skills.k() < 2 {
        return Err(Error::invalid("region summary needs at least two skill dimensions"));
    }
    let kv = values.k();
    let mut sums = vec![[[0.0f64; 4]; 4]; kv];
    let mut counts = [[0usize; 4]; 4];
    for j in 0..skills.n() {
        let s = skills.row(j);
        let b1 = quartile_bin(s[0]);
        let b2 = quartile_bin(s[1]);
        counts[b1][b2] += 1;
        let v = values.row(j);
        for (d, sum) in sums.iter_mut().enumerate() {
            sum[b1][b2] += v[d];
        }
    }
    Ok((0..kv)
        .map(|d| {
            let mut means = [[None; 4]; 4];
            for b1 in 0..4 {
                for b2 in 0..4 {
                    if counts[b1][b2] > 0 {
                        means[b1][b2] = Some(sums[d][b1][b2] / counts[b1][b2] as f64);
                    }
                }
            }
            RegionTable { means, counts }
        })
        .collect())
}

/// Per-skill Pearson correlation between the gradient and the actual
/// difference of estimated and true skills.
pub fn gradient_difference_correlation(samples: &[BiasSample]) -> Result<Vec<f64>> {
    if samples.len() < 2 {
        return Err(Error::invalid("correlation needs at least two samples"));
    }
    let k = samples[0].gradient.len();
    (0..k)
        .map(|d| {
            let g: Vec<f64> = samples.iter().map(|s| s.gradient[d]).collect();
            let diff: Vec<f64> = samples.iter().map(|s| s.difference[d]).collect();
            pearson(&g, &diff).ok_or_else(|| {
                Error::UndefinedCorrelation(format!("zero variance in skill {d}"))
            })
        })
        .collect()
}

/// One node of the expected-gradient raster.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FieldPoint {
    pub z1: f64,
    pub z2: f64,
    pub g1: f64,
    pub g2: f64,
}

/// Evaluate the expected gradient on a regular `resolution x resolution` grid
/// over [-extent, extent]^2 (row-major over z1, then z2).
pub fn expected_gradient_field(
    bank: &ItemBank,
    params: &CompParams,
    extent: f64,
    resolution: usize,
    include_prior: bool,
) -> Result<Vec<FieldPoint>> {
    if resolution < 2 || !(extent > 0.0) {
        return Err(Error::invalid("field needs resolution >= 2 and positive extent"));
    }
    let axis = crate::numeric::linspace(-extent, extent, resolution);
    let nodes: Vec<(f64, f64)> = axis
        .iter()
        .flat_map(|&z1| axis.iter().map(move |&z2| (z1, z2)))
        .collect();
    nodes
        .par_iter()
        .map(|&(z1, z2)| {
            let g = expected_gradient(&[z1, z2], bank, params, include_prior)?;
            Ok(FieldPoint { z1, z2, g1: g[0], g2: g[1] })
        })
        .collect()
}

/// Flip fitted loading signs so that single-skill anchor items load
/// positively, making the fitted dimensions comparable with the generating
/// skills. Returns which dimensions were flipped.
pub fn align_to_anchors(params: &mut CompParams, bank: &ItemBank) -> Vec<bool> {
    let k = params.k();
    let mut flips = vec![false; k];
    for dim in 0..k {
        let mut anchor_sum = 0.0;
        for (item, p) in bank.items.iter().zip(&params.items) {
            if item.skills.len() == 1 && item.skills[0] == dim + 1 {
                anchor_sum += p.alpha[dim];
            }
        }
        if anchor_sum < 0.0 {
            flips[dim] = true;
            for p in params.items.iter_mut() {
                p.alpha[dim] = -p.alpha[dim];
            }
        }
    }
    flips
}
