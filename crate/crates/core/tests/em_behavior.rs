//! Behavioral tests of the EM fit and the one-parameter refinement at
//! simulation scale.

use mirt_core::datagen::*;
use mirt_core::estimation::*;
use mirt_core::variance::{param_ids, param_value, sample_variances_of};

#[test]
fn anchored_fit_is_insensitive_to_the_config_seed() {
    let f = RngFactory::from_seed(60);
    let spec = DesignSpec::variance(2).unwrap();
    let bank = make_variance_design(&spec, &mut f.rng("design")).unwrap();
    let skills = sample_learners(3000, 2, &f.rng("learners")).unwrap();
    let y = sample_responses(&bank, &skills, &f.rng("responses")).unwrap();

    let mut c1 = FitConfig::for_bank(&bank, 1);
    c1.points_per_dim = 11;
    let mut c2 = c1.clone();
    c2.seed = 999;
    let a = fit_compensatory_em(&y, 2, &c1).unwrap();
    let b = fit_compensatory_em(&y, 2, &c2).unwrap();
    let mut mae = 0.0;
    let mut count = 0;
    for (pa, pb) in a.params.items.iter().zip(&b.params.items) {
        mae += (pa.beta - pb.beta).abs();
        count += 1;
        for (x, y) in pa.alpha.iter().zip(&pb.alpha) {
            mae += (x - y).abs();
            count += 1;
        }
    }
    assert!(mae / count as f64 <= 1e-3);
}

#[test]
fn refinement_against_reference_reduces_replicate_variance() {
    // With a loose EM tolerance the raw joint estimates carry both
    // termination noise and full-matrix coupling; the one-parameter polish
    // against a fixed reference tightens them.
    let f = RngFactory::from_seed(61);
    let spec = DesignSpec::variance(2).unwrap();
    let bank = make_variance_design(&spec, &mut f.rng("design")).unwrap();
    let ids = param_ids(&bank);

    let mut config = FitConfig::for_bank(&bank, 7);
    config.points_per_dim = 11;
    config.em_tolerance = 1e-2; // deliberately premature termination

    // reference from one larger fit
    let reference = {
        let skills = sample_learners(20_000, 2, &f.rng("ref/learners")).unwrap();
        let y = sample_responses(&bank, &skills, &f.rng("ref/responses")).unwrap();
        let mut tight = config.clone();
        tight.em_tolerance = 1e-4;
        let mut fitted = fit_compensatory_em(&y, 2, &tight).unwrap().params;
        mirt_core::bias::align_to_anchors(&mut fitted, &bank);
        fitted
    };

    let reps = 14usize;
    let n = 800usize;
    let mut raw: Vec<Vec<f64>> = Vec::new();
    let mut refined: Vec<Vec<f64>> = Vec::new();
    for r in 0..reps {
        let rep = f.child(&format!("replicate/{r}"));
        let skills = sample_learners(n, 2, &rep.rng("learners")).unwrap();
        let y = sample_responses(&bank, &skills, &rep.rng("responses")).unwrap();
        let fit = match fit_compensatory_em(&y, 2, &config) {
            Ok(fit) => fit,
            Err(_) => continue, // rare small-n divergence
        };
        let mut params = fit.params;
        mirt_core::bias::align_to_anchors(&mut params, &bank);
        raw.push(ids.iter().map(|id| param_value(&params, id)).collect());
        let mut cfg = config.clone();
        cfg.seed = r as u64;
        let polished = refine_all_parameters(&y, &reference, &cfg).unwrap();
        refined.push(ids.iter().map(|id| param_value(&polished, id)).collect());
    }
    assert!(raw.len() >= 10, "too many dropped replicates");

    let raw_var = sample_variances_of(&raw);
    let ref_var = sample_variances_of(&refined);
    let improved = raw_var
        .iter()
        .zip(&ref_var)
        .filter(|(r, p)| p < r)
        .count();
    // the polish should tighten a clear majority of parameters
    assert!(
        improved * 3 >= ids.len() * 2,
        "refinement tightened only {improved} of {} parameters",
        ids.len()
    );
}

#[test]
#[ignore = "full-size misspecified fit (N = 1,000,000); run with --ignored"]
fn misspecified_fit_at_scale_orders_case1_loadings() {
    let f = RngFactory::from_seed(62);
    let spec = DesignSpec::bias();
    let bank = make_bias_design(&spec, &mut f.rng("design")).unwrap();
    let skills = sample_learners(1_000_000, 2, &f.rng("learners")).unwrap();
    let y = sample_responses(&bank, &skills, &f.rng("responses")).unwrap();
    let config = FitConfig::for_bank(&bank, 0);
    let fit = fit_compensatory_em(&y, 2, &config).unwrap();
    let mut params = fit.params;
    mirt_core::bias::align_to_anchors(&mut params, &bank);

    for (item, p) in bank.items.iter().zip(&params.items) {
        if item.skills.len() != 2 {
            continue;
        }
        if mirt_core::model::item_case(item).unwrap() == mirt_core::model::ItemCase::Case1 {
            assert!(
                p.alpha[0] < p.alpha[1],
                "case-1 item {} fitted with alpha1 >= alpha2",
                item.id
            );
        }
    }
}
