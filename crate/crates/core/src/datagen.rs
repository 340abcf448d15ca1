//! Simulation designs and samplers: the bias-study bank (120 items with a
//! half-probability lattice), the variance-study banks (K = 2 or 3), and
//! seeded sampling of learners and responses from the non-compensatory truth.
//!
//! All randomness flows from a single root seed through named substreams, so
//! every artifact is a pure function of (design, seed) regardless of thread
//! scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal, StandardNormal};
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{prob_noncompensatory, Item, ItemBank, ResponseMatrix, SkillMatrix};
use crate::numeric::{linspace, logit};

/// Splittable deterministic RNG: a root key plus named substreams.
///
/// `child`/`rng` derive independent generators by hashing the parent key with
/// the stream name; `stream_rng` additionally selects one of the generator's
/// 2^64 counter streams, which gives cheap per-learner and per-replicate
/// substreams that are safe to draw from in parallel.
#[derive(Debug, Clone)]
pub struct RngFactory {
    key: [u8; 32],
}

impl RngFactory {
    pub fn from_seed(seed: u64) -> Self {
        let mut h = Sha256::new();
        h.update(b"mirt-rng-root");
        h.update(seed.to_le_bytes());
        RngFactory { key: h.finalize().into() }
    }

    pub fn child(&self, name: &str) -> Self {
        let mut h = Sha256::new();
        h.update(self.key);
        h.update([0x1f]);
        h.update(name.as_bytes());
        RngFactory { key: h.finalize().into() }
    }

    pub fn rng(&self, name: &str) -> ChaCha8Rng {
        ChaCha8Rng::from_seed(self.child(name).key)
    }

    pub fn stream_rng(&self, name: &str, idx: u64) -> ChaCha8Rng {
        let mut rng = self.rng(name);
        rng.set_stream(idx);
        rng
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DesignKind {
    Bias,
    Variance,
}

/// Parameters of a simulation design.
#[derive(Debug, Clone)]
pub struct DesignSpec {
    pub kind: DesignKind,
    pub k: usize,
    /// Location and scale of ln(a) for item discriminations.
    pub disc_log_location: f64,
    pub disc_log_scale: f64,
    /// Bias design only: the 2-skill half-probability points form a
    /// `lattice_side` x `lattice_side` grid over [-extent, extent]^2.
    pub lattice_extent: f64,
    pub lattice_side: usize,
}

impl DesignSpec {
    /// The bias-study design: K=2, 10 + 10 single-skill items and 100
    /// two-skill items on a 10 x 10 half-probability lattice.
    pub fn bias() -> Self {
        DesignSpec {
            kind: DesignKind::Bias,
            k: 2,
            disc_log_location: 0.2,
            disc_log_scale: 0.2,
            lattice_extent: 2.0,
            lattice_side: 10,
        }
    }

    /// The variance-study design: 50 items for K = 2 or 3.
    pub fn variance(k: usize) -> Result<Self> {
        if !(k == 2 || k == 3) {
            return Err(Error::invalid(format!(
                "variance design supports K = 2 or 3, got {k}"
            )));
        }
        Ok(DesignSpec {
            kind: DesignKind::Variance,
            k,
            disc_log_location: 0.2,
            disc_log_scale: 0.2,
            lattice_extent: 0.0,
            lattice_side: 0,
        })
    }

    fn lognormal(&self) -> Result<LogNormal<f64>> {
        LogNormal::new(self.disc_log_location, self.disc_log_scale)
            .map_err(|e| Error::invalid(format!("bad discrimination distribution: {e}")))
    }
}

/// Build the bias-study item bank.
///
/// Single-skill difficulties are evenly spaced on [-2.5, 2.5]. Each two-skill
/// item is constructed backwards from its lattice half-probability point:
/// after sampling `a`, `b_k = z05_k - logit(sqrt(0.5)) / a_k`, which makes
/// `half_probability_point` reproduce the lattice exactly and distributes the
/// items equally over cases 1-4.
pub fn make_bias_design(spec: &DesignSpec, rng: &mut ChaCha8Rng) -> Result<ItemBank> {
    if spec.kind != DesignKind::Bias || spec.k != 2 {
        return Err(Error::invalid("make_bias_design requires a bias design with K = 2"));
    }
    if spec.lattice_side < 2 || spec.lattice_extent <= 0.0 {
        return Err(Error::invalid("bias design needs a non-degenerate lattice"));
    }
    let lognorm = spec.lognormal()?;
    let mut items = Vec::with_capacity(20 + spec.lattice_side * spec.lattice_side);
    let mut id = 0usize;

    for skill in 1..=2usize {
        for b in linspace(-2.5, 2.5, 10) {
            let a = lognorm.sample(rng);
            items.push(Item::new(id, vec![skill], vec![a], vec![b])?);
            id += 1;
        }
    }

    let c = logit(0.5f64.sqrt());
    let grid = linspace(-spec.lattice_extent, spec.lattice_extent, spec.lattice_side);
    for &z1 in &grid {
        for &z2 in &grid {
            let a1 = lognorm.sample(rng);
            let a2 = lognorm.sample(rng);
            let b1 = z1 - c / a1;
            let b2 = z2 - c / a2;
            items.push(Item::new(id, vec![1, 2], vec![a1, a2], vec![b1, b2])?);
            id += 1;
        }
    }
    ItemBank::new(2, items)
}

/// Build the variance-study item bank (50 items, K = 2 or 3).
pub fn make_variance_design(spec: &DesignSpec, rng: &mut ChaCha8Rng) -> Result<ItemBank> {
    if spec.kind != DesignKind::Variance {
        return Err(Error::invalid("make_variance_design requires a variance design"));
    }
    let lognorm = spec.lognormal()?;
    let normal = |mu: f64, sd: f64| Normal::new(mu, sd).expect("valid normal");
    let mut items = Vec::with_capacity(50);
    let mut id = 0usize;

    match spec.k {
        2 => {
            for skill in 1..=2usize {
                for b in linspace(-3.0, 3.0, 10) {
                    let a = lognorm.sample(rng);
                    items.push(Item::new(id, vec![skill], vec![a], vec![b])?);
                    id += 1;
                }
            }
            let pair_b = normal(-1.0, 1.5);
            for _ in 0..30 {
                let a1 = lognorm.sample(rng);
                let a2 = lognorm.sample(rng);
                let b1 = pair_b.sample(rng);
                let b2 = pair_b.sample(rng);
                items.push(Item::new(id, vec![1, 2], vec![a1, a2], vec![b1, b2])?);
                id += 1;
            }
        }
        3 => {
            for skill in 1..=3usize {
                for b in linspace(-2.0, 2.0, 5) {
                    let a = lognorm.sample(rng);
                    items.push(Item::new(id, vec![skill], vec![a], vec![b])?);
                    id += 1;
                }
            }
            let pair_b = normal(-1.0, 1.5);
            for &(s1, s2) in &[(1usize, 2usize), (1, 3), (2, 3)] {
                for _ in 0..5 {
                    let a1 = lognorm.sample(rng);
                    let a2 = lognorm.sample(rng);
                    let b1 = pair_b.sample(rng);
                    let b2 = pair_b.sample(rng);
                    items.push(Item::new(id, vec![s1, s2], vec![a1, a2], vec![b1, b2])?);
                    id += 1;
                }
            }
            let triple_b = normal(-1.5, 1.5);
            for _ in 0..20 {
                let a: Vec<f64> = (0..3).map(|_| lognorm.sample(rng)).collect();
                let b: Vec<f64> = (0..3).map(|_| triple_b.sample(rng)).collect();
                items.push(Item::new(id, vec![1, 2, 3], a, b)?);
                id += 1;
            }
        }
        k => return Err(Error::invalid(format!("variance design supports K = 2 or 3, got {k}"))),
    }
    ItemBank::new(spec.k, items)
}

/// Draw N i.i.d. standard-normal skill vectors using per-learner substreams
/// of `base` (learner j draws from counter stream j).
pub fn sample_learners(n: usize, k: usize, base: &ChaCha8Rng) -> Result<SkillMatrix> {
    if n == 0 || k == 0 {
        return Err(Error::invalid("sample_learners needs n >= 1 and k >= 1"));
    }
    let mut data = vec![0.0; n * k];
    data.par_chunks_mut(k).enumerate().for_each(|(j, row)| {
        let mut rng = base.clone();
        rng.set_stream(j as u64);
        for v in row.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
    });
    SkillMatrix::new(n, k, data)
}

/// Bernoulli responses from the non-compensatory model, one substream of
/// `base` per learner.
pub fn sample_responses(
    bank: &ItemBank,
    skills: &SkillMatrix,
    base: &ChaCha8Rng,
) -> Result<ResponseMatrix> {
    if skills.k() != bank.k {
        return Err(Error::DimensionMismatch {
            expected: bank.k,
            actual: skills.k(),
            what: "skill matrix width vs bank K",
        });
    }
    let m = bank.len();
    let n = skills.n();
    // probabilities only depend on required skills, validated by the bank
    let mut data = vec![0u8; n * m];
    data.par_chunks_mut(m).enumerate().for_each(|(j, row)| {
        let mut rng = base.clone();
        rng.set_stream(j as u64);
        let z = skills.row(j);
        for (i, item) in bank.items.iter().enumerate() {
            let p = prob_noncompensatory(item, z).expect("bank validated against K");
            let u: f64 = rng.random();
            row[i] = u8::from(u < p);
        }
    });
    ResponseMatrix::new(n, m, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{half_probability_point, item_case, ItemCase};
    use crate::quadrature::QuadratureGrid;
    use approx::assert_abs_diff_eq;
    use std::collections::HashMap;

    #[test]
    fn substreams_are_deterministic_and_distinct() {
        let f = RngFactory::from_seed(42);
        let mut a = f.rng("design");
        let mut b = f.rng("design");
        let mut c = f.rng("learners");
        let x: u64 = a.random();
        assert_eq!(x, b.random::<u64>());
        assert_ne!(x, c.random::<u64>());
        let mut s0 = f.stream_rng("learners", 0);
        let mut s1 = f.stream_rng("learners", 1);
        assert_ne!(s0.random::<u64>(), s1.random::<u64>());
    }

    #[test]
    fn bias_design_has_expected_layout() {
        let f = RngFactory::from_seed(7);
        let spec = DesignSpec::bias();
        let bank = make_bias_design(&spec, &mut f.rng("design")).unwrap();
        assert_eq!(bank.len(), 120);
        assert_eq!(bank.k, 2);
        assert_eq!(bank.items.iter().filter(|it| it.skills == [1]).count(), 10);
        assert_eq!(bank.items.iter().filter(|it| it.skills == [2]).count(), 10);

        // each case appears exactly 25 times among the two-skill items
        let mut counts: HashMap<ItemCase, usize> = HashMap::new();
        for it in bank.items.iter().filter(|it| it.skills.len() == 2) {
            *counts.entry(item_case(it).unwrap()).or_default() += 1;
        }
        for case in [ItemCase::Case1, ItemCase::Case2, ItemCase::Case3, ItemCase::Case4] {
            assert_eq!(counts[&case], 25, "case {case:?}");
        }
    }

    #[test]
    fn bias_design_lattice_roundtrips_through_half_probability() {
        let f = RngFactory::from_seed(11);
        let spec = DesignSpec::bias();
        let bank = make_bias_design(&spec, &mut f.rng("design")).unwrap();
        let grid = linspace(-spec.lattice_extent, spec.lattice_extent, spec.lattice_side);
        let mut idx = 0usize;
        for it in bank.items.iter().filter(|it| it.skills.len() == 2) {
            let (i1, i2) = (idx / spec.lattice_side, idx % spec.lattice_side);
            let z05 = half_probability_point(it);
            assert_abs_diff_eq!(z05[0], grid[i1], epsilon = 1e-12);
            assert_abs_diff_eq!(z05[1], grid[i2], epsilon = 1e-12);
            idx += 1;
        }
        assert_eq!(idx, 100);
    }

    #[test]
    fn discriminations_follow_the_log_normal_location() {
        let f = RngFactory::from_seed(3);
        let mut rng = f.rng("lognormal-check");
        let spec = DesignSpec::bias();
        let dist = LogNormal::new(spec.disc_log_location, spec.disc_log_scale).unwrap();
        let n = 10_000;
        let mean_ln: f64 = (0..n).map(|_| dist.sample(&mut rng).ln()).sum::<f64>() / n as f64;
        assert_abs_diff_eq!(mean_ln, 0.2, epsilon = 0.01);
        // all positive by construction of the designs
        let bank = make_bias_design(&spec, &mut f.rng("design")).unwrap();
        assert!(bank.items.iter().all(|it| it.a.iter().all(|&a| a > 0.0)));
    }

    #[test]
    fn variance_design_counts() {
        let f = RngFactory::from_seed(5);
        let bank2 =
            make_variance_design(&DesignSpec::variance(2).unwrap(), &mut f.rng("design")).unwrap();
        assert_eq!(bank2.len(), 50);
        assert_eq!(bank2.items.iter().filter(|it| it.skills.len() == 1).count(), 20);
        assert_eq!(bank2.items.iter().filter(|it| it.skills.len() == 2).count(), 30);

        let bank3 =
            make_variance_design(&DesignSpec::variance(3).unwrap(), &mut f.rng("design")).unwrap();
        assert_eq!(bank3.len(), 50);
        assert_eq!(bank3.items.iter().filter(|it| it.skills.len() == 1).count(), 15);
        assert_eq!(bank3.items.iter().filter(|it| it.skills.len() == 2).count(), 15);
        assert_eq!(bank3.items.iter().filter(|it| it.skills.len() == 3).count(), 20);

        assert!(DesignSpec::variance(4).is_err());
        assert!(DesignSpec::variance(1).is_err());
    }

    #[test]
    fn same_seed_reproduces_everything() {
        let build = || {
            let f = RngFactory::from_seed(99);
            let spec = DesignSpec::variance(2).unwrap();
            let bank = make_variance_design(&spec, &mut f.rng("design")).unwrap();
            let skills = sample_learners(50, 2, &f.rng("learners")).unwrap();
            let resp = sample_responses(&bank, &skills, &f.rng("responses")).unwrap();
            (bank, skills, resp)
        };
        let (b1, s1, r1) = build();
        let (b2, s2, r2) = build();
        assert_eq!(b1, b2);
        assert_eq!(s1, s2);
        assert_eq!(r1, r2);
    }

    #[test]
    fn learner_moments_match_standard_normal() {
        let f = RngFactory::from_seed(123);
        let n = 1_000_000usize;
        let skills = sample_learners(n, 2, &f.rng("learners")).unwrap();
        for d in 0..2 {
            let mut sum = 0.0;
            let mut sumsq = 0.0;
            for j in 0..n {
                let v = skills.row(j)[d];
                sum += v;
                sumsq += v * v;
            }
            let mean = sum / n as f64;
            let var = sumsq / n as f64 - mean * mean;
            assert_abs_diff_eq!(mean, 0.0, epsilon = 0.004);
            assert_abs_diff_eq!(var, 1.0, epsilon = 0.006);
        }
    }

    #[test]
    fn response_rates_match_quadrature_expectation() {
        let f = RngFactory::from_seed(2024);
        let spec = DesignSpec::variance(2).unwrap();
        let bank = make_variance_design(&spec, &mut f.rng("design")).unwrap();
        let n = 200_000usize;
        let skills = sample_learners(n, 2, &f.rng("learners")).unwrap();
        let resp = sample_responses(&bank, &skills, &f.rng("responses")).unwrap();
        let grid = QuadratureGrid::build(2, 21).unwrap();
        for (i, item) in bank.items.iter().enumerate().step_by(7) {
            let expected = grid
                .integrate(|z| prob_noncompensatory(item, z).unwrap())
                .unwrap();
            let rate = (0..n).map(|j| resp.get(j, i) as u64).sum::<u64>() as f64 / n as f64;
            // 3-sigma Monte Carlo band plus a little quadrature slack
            let band = 3.0 * (expected * (1.0 - expected) / n as f64).sqrt() + 1e-3;
            assert!(
                (rate - expected).abs() <= band,
                "item {i}: rate {rate} vs expected {expected}"
            );
        }
    }

    #[test]
    fn saturated_item_always_correct() {
        let f = RngFactory::from_seed(1);
        let bank = ItemBank::new(
            1,
            vec![Item::new(0, vec![1], vec![50.0], vec![-10.0]).unwrap()],
        )
        .unwrap();
        let skills = sample_learners(500, 1, &f.rng("learners")).unwrap();
        let resp = sample_responses(&bank, &skills, &f.rng("responses")).unwrap();
        assert!((0..500).all(|j| resp.get(j, 0) == 1));
    }
}
