//! Item response functions for both model families, item parameter types,
//! half-probability points, and the four-case item taxonomy.
//!
//! Two families are supported:
//! * compensatory 2PL: `P(y=1) = sigmoid(alpha' gamma + beta)` — a strong
//!   skill can offset a weak one;
//! * non-compensatory: `P(y=1) = prod_k sigmoid(a_k (z_k - b_k))` over the
//!   item's required skills — every required skill must clear its threshold.
//!
//! All probabilities are computed through softplus/log1p forms so that EM,
//! which evaluates them billions of times, never overflows.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{log_sigmoid, logit, sigmoid};

/// Latent skill vector (length K).
pub type SkillVector = Vec<f64>;

/// Non-compensatory item. Parameters are stored sparsely: only the skills the
/// item requires carry a discrimination/difficulty pair; absent skills
/// contribute a constant factor 1 to the response probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Item {
    pub id: usize,
    /// Required skills as 1-based indices, strictly increasing.
    pub skills: Vec<usize>,
    /// Discrimination per required skill, positive.
    pub a: Vec<f64>,
    /// Difficulty per required skill.
    pub b: Vec<f64>,
}

impl Item {
    pub fn new(id: usize, skills: Vec<usize>, a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        if skills.is_empty() {
            return Err(Error::invalid(format!("item {id}: requires no skills")));
        }
        if skills.len() != a.len() || skills.len() != b.len() {
            return Err(Error::invalid(format!(
                "item {id}: skills/a/b lengths differ ({}, {}, {})",
                skills.len(),
                a.len(),
                b.len()
            )));
        }
        if skills.windows(2).any(|w| w[0] >= w[1]) || skills[0] == 0 {
            return Err(Error::invalid(format!(
                "item {id}: skill indices must be strictly increasing and 1-based"
            )));
        }
        if a.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::invalid(format!(
                "item {id}: discriminations must be positive and finite"
            )));
        }
        if b.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("item {id}: difficulties must be finite")));
        }
        Ok(Item { id, skills, a, b })
    }

    /// Iterate `(dim, a, b)` over required skills with `dim` 0-based.
    pub fn required(&self) -> impl Iterator<Item = (usize, f64, f64)> + '_ {
        self.skills
            .iter()
            .zip(self.a.iter().zip(self.b.iter()))
            .map(|(&s, (&a, &b))| (s - 1, a, b))
    }
}

/// A set of non-compensatory items over K skills; the data-generating model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemBank {
    #[serde(rename = "K")]
    pub k: usize,
    pub items: Vec<Item>,
}

impl ItemBank {
    pub fn new(k: usize, items: Vec<Item>) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("number of skills must be positive"));
        }
        if items.is_empty() {
            return Err(Error::invalid("item bank must contain at least one item"));
        }
        for item in &items {
            if let Some(&max) = item.skills.last() {
                if max > k {
                    return Err(Error::invalid(format!(
                        "item {}: skill index {max} exceeds K={k}",
                        item.id
                    )));
                }
            }
        }
        Ok(ItemBank { k, items })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Validate an already-deserialized bank (JSON input path).
    pub fn validate(&self) -> Result<()> {
        let items: Vec<Item> = self.items.clone();
        for it in &items {
            Item::new(it.id, it.skills.clone(), it.a.clone(), it.b.clone())?;
        }
        ItemBank::new(self.k, items).map(|_| ())
    }
}

/// Fitted compensatory item parameters: one K-vector of loadings and one
/// intercept per item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemParams {
    pub alpha: Vec<f64>,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompParams {
    pub items: Vec<ItemParams>,
}

impl CompParams {
    pub fn new(items: Vec<ItemParams>) -> Result<Self> {
        let params = CompParams { items };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if self.items.is_empty() {
            return Err(Error::invalid("CompParams must contain at least one item"));
        }
        let k = self.items[0].alpha.len();
        for (i, p) in self.items.iter().enumerate() {
            if p.alpha.len() != k {
                return Err(Error::DimensionMismatch {
                    expected: k,
                    actual: p.alpha.len(),
                    what: "alpha length across items",
                });
            }
            if p.alpha.iter().any(|v| !v.is_finite()) || !p.beta.is_finite() {
                return Err(Error::invalid(format!("item {i}: non-finite parameter")));
            }
        }
        Ok(())
    }

    pub fn k(&self) -> usize {
        self.items.first().map_or(0, |p| p.alpha.len())
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// N x M binary test results; row j is learner j, column i is item i.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseMatrix {
    n_learners: usize,
    n_items: usize,
    data: Vec<u8>,
}

impl ResponseMatrix {
    pub fn new(n_learners: usize, n_items: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != n_learners * n_items {
            return Err(Error::DimensionMismatch {
                expected: n_learners * n_items,
                actual: data.len(),
                what: "response matrix buffer",
            });
        }
        if data.iter().any(|&v| v > 1) {
            return Err(Error::invalid("response entries must be 0 or 1"));
        }
        Ok(ResponseMatrix { n_learners, n_items, data })
    }

    pub fn n_learners(&self) -> usize {
        self.n_learners
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn row(&self, j: usize) -> &[u8] {
        &self.data[j * self.n_items..(j + 1) * self.n_items]
    }

    pub fn get(&self, learner: usize, item: usize) -> u8 {
        self.data[learner * self.n_items + item]
    }

    /// Parse from headerless CSV, one learner per row, 0/1 entries.
    pub fn read_csv<R: std::io::BufRead>(reader: R) -> Result<Self> {
        let mut data = Vec::new();
        let mut n_items = None;
        let mut rows = 0usize;
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut count = 0usize;
            for field in line.split(',') {
                match field.trim() {
                    "0" => data.push(0),
                    "1" => data.push(1),
                    other => {
                        return Err(Error::invalid(format!(
                            "line {}: invalid response entry {other:?}",
                            lineno + 1
                        )))
                    }
                }
                count += 1;
            }
            match n_items {
                None => n_items = Some(count),
                Some(m) if m != count => {
                    return Err(Error::invalid(format!(
                        "line {}: expected {m} columns, got {count}",
                        lineno + 1
                    )))
                }
                _ => {}
            }
            rows += 1;
        }
        let n_items = n_items.ok_or_else(|| Error::invalid("empty response CSV"))?;
        ResponseMatrix::new(rows, n_items, data)
    }

    pub fn write_csv<W: std::io::Write>(&self, mut writer: W) -> Result<()> {
        let mut line = String::with_capacity(2 * self.n_items);
        for j in 0..self.n_learners {
            line.clear();
            for (i, &v) in self.row(j).iter().enumerate() {
                if i > 0 {
                    line.push(',');
                }
                line.push(if v == 1 { '1' } else { '0' });
            }
            line.push('\n');
            writer.write_all(line.as_bytes())?;
        }
        Ok(())
    }
}

/// Dense N x K matrix of skill vectors, one learner per row.
#[derive(Debug, Clone, PartialEq)]
pub struct SkillMatrix {
    n: usize,
    k: usize,
    data: Vec<f64>,
}

impl SkillMatrix {
    pub fn new(n: usize, k: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * k {
            return Err(Error::DimensionMismatch {
                expected: n * k,
                actual: data.len(),
                what: "skill matrix buffer",
            });
        }
        Ok(SkillMatrix { n, k, data })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.data[j * self.k..(j + 1) * self.k]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

// ---------------------------------------------------------------------------
// Response functions
// ---------------------------------------------------------------------------

/// Linear predictor of the compensatory model.
#[inline]
pub(crate) fn linear_predictor(alpha: &[f64], beta: f64, gamma: &[f64]) -> f64 {
    let mut eta = beta;
    for (&a, &g) in alpha.iter().zip(gamma) {
        eta += a * g;
    }
    eta
}

/// P(y=1) under the compensatory model: sigmoid(alpha' gamma + beta).
pub fn prob_compensatory(alpha: &[f64], beta: f64, gamma: &[f64]) -> Result<f64> {
    if alpha.len() != gamma.len() {
        return Err(Error::DimensionMismatch {
            expected: alpha.len(),
            actual: gamma.len(),
            what: "alpha vs gamma length",
        });
    }
    Ok(sigmoid(linear_predictor(alpha, beta, gamma)))
}

/// P(y=1) under the non-compensatory model: product of per-required-skill
/// logistic factors. Skills the item does not require contribute factor 1.
pub fn prob_noncompensatory(item: &Item, z: &[f64]) -> Result<f64> {
    if let Some(&max) = item.skills.last() {
        if max > z.len() {
            return Err(Error::DimensionMismatch {
                expected: max,
                actual: z.len(),
                what: "skill vector shorter than item's skill indices",
            });
        }
    }
    let mut p = 1.0;
    for (dim, a, b) in item.required() {
        p *= sigmoid(a * (z[dim] - b));
    }
    Ok(p)
}

/// log P(y) of a single compensatory response:
/// `y * eta - softplus(eta)` in overflow-safe form.
pub fn response_logprob_compensatory(y: u8, alpha: &[f64], beta: f64, gamma: &[f64]) -> Result<f64> {
    if alpha.len() != gamma.len() {
        return Err(Error::DimensionMismatch {
            expected: alpha.len(),
            actual: gamma.len(),
            what: "alpha vs gamma length",
        });
    }
    let eta = linear_predictor(alpha, beta, gamma);
    Ok(if y == 1 { log_sigmoid(eta) } else { log_sigmoid(-eta) })
}

/// The skill point at which the item's correct probability is exactly 0.5,
/// reported over the item's required skills (in `item.skills` order).
///
/// With d required skills each factor must contribute 0.5^(1/d), so
/// `z05_k = b_k + logit(0.5^(1/d)) / a_k`. For d = 2 this is the
/// `b + logit(sqrt(0.5)) / a` form; for d = 1 it reduces to `b`.
pub fn half_probability_point(item: &Item) -> Vec<f64> {
    let d = item.skills.len() as f64;
    let c = logit(0.5f64.powf(1.0 / d));
    item.a
        .iter()
        .zip(item.b.iter())
        .map(|(&a, &b)| b + c / a)
        .collect()
}

/// Two-skill item taxonomy by the sign pattern of the half-probability point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ItemCase {
    /// z1 < 0, z2 > 0: mainly underestimates skill 2.
    Case1,
    /// z1 > 0, z2 < 0: mainly underestimates skill 1.
    Case2,
    /// both positive: balanced under/overestimation.
    Case3,
    /// both negative: balanced under/overestimation.
    Case4,
}

impl ItemCase {
    pub fn index(self) -> u8 {
        match self {
            ItemCase::Case1 => 1,
            ItemCase::Case2 => 2,
            ItemCase::Case3 => 3,
            ItemCase::Case4 => 4,
        }
    }
}

/// Classify a two-skill half-probability point into cases 1-4.
///
/// A component that is exactly zero counts as positive, which breaks ties
/// toward cases 2 and 3.
pub fn classify_item_case(z05: &[f64]) -> Result<ItemCase> {
    if z05.len() != 2 {
        return Err(Error::invalid(format!(
            "case classification needs a two-skill half-probability point, got length {}",
            z05.len()
        )));
    }
    let pos1 = z05[0] >= 0.0;
    let pos2 = z05[1] >= 0.0;
    Ok(match (pos1, pos2) {
        (false, true) => ItemCase::Case1,
        (true, false) => ItemCase::Case2,
        (true, true) => ItemCase::Case3,
        (false, false) => ItemCase::Case4,
    })
}

/// Classify an item that requires exactly skills 1 and 2.
pub fn item_case(item: &Item) -> Result<ItemCase> {
    if item.skills != [1, 2] {
        return Err(Error::invalid(format!(
            "item {}: case taxonomy is defined for items requiring exactly skills 1 and 2",
            item.id
        )));
    }
    classify_item_case(&half_probability_point(item))
}
