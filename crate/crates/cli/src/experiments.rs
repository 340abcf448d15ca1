//! The five subcommand pipelines. Each returns the computed summaries along
//! with the list of files written, and removes partial outputs when a stage
//! fails.

use std::path::{Path, PathBuf};

use mirt_core::bias::{
    align_to_anchors, expected_gradient_field, gradient_at_true_skills,
    gradient_difference_correlation, quartile_region_summary, BiasSample, FieldPoint, RegionTable,
};
use mirt_core::datagen::{
    make_bias_design, make_variance_design, sample_learners, sample_responses, DesignSpec,
    RngFactory,
};
use mirt_core::estimation::{fit_compensatory_em, map_skills_all, FitConfig, FitResult};
use mirt_core::model::{CompParams, ItemBank, ResponseMatrix, SkillMatrix};
use mirt_core::quadrature::QuadratureGrid;
use mirt_core::variance::{
    experimental_variance, info_scalars, param_ids, pseudo_true_params, ExperimentalVariance,
    Generator, ReplicationPlan, VarianceReport,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{DesignChoice, RunConfig};
use crate::output::{fmt_g9, Manifest, OutputDir};
use crate::{CliError, CliResult, StageExt};

fn build_bank(cfg: &RunConfig, factory: &RngFactory) -> CliResult<ItemBank> {
    match cfg.design {
        DesignChoice::Bias => {
            if cfg.k != 2 {
                return Err(CliError::config("design", "the bias design requires k = 2"));
            }
            let mut spec = DesignSpec::bias();
            spec.lattice_extent = cfg.lattice_extent;
            make_bias_design(&spec, &mut factory.rng("design")).stage("design")
        }
        DesignChoice::Variance => {
            let spec = DesignSpec::variance(cfg.k).stage("design")?;
            make_variance_design(&spec, &mut factory.rng("design")).stage("design")
        }
    }
}

fn fit_config_for(bank: &ItemBank, cfg: &RunConfig) -> FitConfig {
    let mut c = FitConfig::for_bank(bank, cfg.seed);
    c.points_per_dim = cfg.quad_points_for(bank.k);
    c.em_tolerance = cfg.em_tolerance;
    c.max_em_iterations = cfg.max_em_iterations;
    c
}

fn read_file(path: &Path, what: &str) -> CliResult<Vec<u8>> {
    std::fs::read(path)
        .map_err(|e| CliError::io(what, format!("cannot read {}: {e}", path.display())))
}

fn read_bank(path: &Path) -> CliResult<(ItemBank, Vec<u8>)> {
    let bytes = read_file(path, "input")?;
    let bank: ItemBank = serde_json::from_slice(&bytes)
        .map_err(|e| CliError::config("input", format!("bad bank JSON {}: {e}", path.display())))?;
    bank.validate().stage("input")?;
    Ok((bank, bytes))
}

fn read_responses(path: &Path) -> CliResult<(ResponseMatrix, Vec<u8>)> {
    let bytes = read_file(path, "input")?;
    let resp = ResponseMatrix::read_csv(std::io::Cursor::new(&bytes))
        .map_err(|e| CliError::config("input", format!("bad responses {}: {e}", path.display())))?;
    Ok((resp, bytes))
}

fn read_fit(path: &Path) -> CliResult<(FitResult, Vec<u8>)> {
    let bytes = read_file(path, "input")?;
    let fit: FitResult = serde_json::from_slice(&bytes).map_err(|e| {
        CliError::config("input", format!("bad parameter JSON {}: {e}", path.display()))
    })?;
    fit.params.validate().stage("input")?;
    Ok((fit, bytes))
}

fn require<'a>(opt: &'a Option<PathBuf>, flag: &str) -> CliResult<&'a PathBuf> {
    opt.as_ref()
        .ok_or_else(|| CliError::config("config", format!("missing required --{flag}")))
}

// ---------------------------------------------------------------------------
// generate
// ---------------------------------------------------------------------------

pub fn run_generate(cfg: &RunConfig) -> CliResult<Vec<PathBuf>> {
    cfg.validate()?;
    let factory = RngFactory::from_seed(cfg.seed);
    let bank = build_bank(cfg, &factory)?;
    let skills = sample_learners(cfg.n, bank.k, &factory.rng("learners")).stage("sample")?;
    let responses = sample_responses(&bank, &skills, &factory.rng("responses")).stage("sample")?;

    let mut out = OutputDir::create(&cfg.out)?;
    let bank_json = serde_json::to_vec_pretty(&bank)
        .map_err(|e| CliError::io("output", e.to_string()))?;
    out.write_bytes("bank.json", &bank_json)?;
    let mut resp_csv = Vec::new();
    responses
        .write_csv(&mut resp_csv)
        .stage("output")?;
    out.write_bytes("responses.csv", &resp_csv)?;

    let manifest = Manifest::new("generate", cfg.seed, cfg.as_map("generate"))
        .with_input("bank.json", &bank_json)
        .with_input("responses.csv", &resp_csv);
    out.write_json("meta.json", &manifest)?;
    Ok(out.commit())
}

// ---------------------------------------------------------------------------
// fit
// ---------------------------------------------------------------------------

pub fn run_fit(cfg: &RunConfig) -> CliResult<Vec<PathBuf>> {
    cfg.validate()?;
    let (bank, bank_bytes) = read_bank(require(&cfg.bank, "bank")?)?;
    let (responses, resp_bytes) = read_responses(require(&cfg.responses, "responses")?)?;
    let config = fit_config_for(&bank, cfg);
    let mut fit = fit_compensatory_em(&responses, bank.k, &config).stage("fit")?;
    align_to_anchors(&mut fit.params, &bank);

    let mut out = OutputDir::create(&cfg.out)?;
    out.write_json("fit.json", &fit)?;
    let manifest = Manifest::new("fit", cfg.seed, cfg.as_map("fit"))
        .with_input("bank", &bank_bytes)
        .with_input("responses", &resp_bytes);
    out.write_json("manifest.json", &manifest)?;
    Ok(out.commit())
}

// ---------------------------------------------------------------------------
// skills
// ---------------------------------------------------------------------------

pub fn run_skills(cfg: &RunConfig) -> CliResult<Vec<PathBuf>> {
    cfg.validate()?;
    let (fit, fit_bytes) = read_fit(require(&cfg.params, "params")?)?;
    let (responses, resp_bytes) = read_responses(require(&cfg.responses, "responses")?)?;
    let estimates = map_skills_all(&responses, &fit.params).stage("map")?;

    let k = fit.params.k();
    let header: String = (1..=k)
        .map(|d| format!("skill{d}"))
        .collect::<Vec<_>>()
        .join(",");
    let mut out = OutputDir::create(&cfg.out)?;
    out.write_csv(
        "skills.csv",
        &header,
        estimates.iter().map(|row| {
            row.iter().map(|&v| fmt_g9(v)).collect::<Vec<_>>().join(",")
        }),
    )?;
    let manifest = Manifest::new("skills", cfg.seed, cfg.as_map("skills"))
        .with_input("params", &fit_bytes)
        .with_input("responses", &resp_bytes);
    out.write_json("manifest.json", &manifest)?;
    Ok(out.commit())
}

// ---------------------------------------------------------------------------
// bias experiment
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize)]
struct CorrelationSummary {
    n: usize,
    pearson_r: Vec<f64>,
}

/// Everything the bias study produces, kept in memory for callers that want
/// to assert on it (the files are already on disk).
pub struct BiasOutcome {
    pub bank: ItemBank,
    pub fit: FitResult,
    pub correlations: Vec<f64>,
    /// Region tables of the difference (estimated - true), per skill.
    pub diff_tables: Vec<RegionTable>,
    /// Region tables of the gradient, per skill.
    pub grad_tables: Vec<RegionTable>,
    pub files: Vec<PathBuf>,
}

fn region_rows(table: &RegionTable) -> Vec<String> {
    let labels = RegionTable::bin_labels();
    let mut rows = Vec::with_capacity(16);
    for b1 in 0..4 {
        for b2 in 0..4 {
            let mean = table
                .cell(b1, b2)
                .map(|m| fmt_g9(m))
                .unwrap_or_default();
            rows.push(format!(
                "{b1},{b2},{},{},{mean},{}",
                labels[b1], labels[b2], table.counts[b1][b2]
            ));
        }
    }
    rows
}

const REGION_HEADER: &str = "skill1_bin,skill2_bin,skill1_range,skill2_range,mean,count";

fn field_rows(field: &[FieldPoint]) -> Vec<String> {
    field
        .iter()
        .map(|p| {
            format!(
                "{},{},{},{}",
                fmt_g9(p.z1),
                fmt_g9(p.z2),
                fmt_g9(p.g1),
                fmt_g9(p.g2)
            )
        })
        .collect()
}

pub fn run_bias_experiment(cfg: &RunConfig) -> CliResult<BiasOutcome> {
    cfg.validate()?;
    if cfg.k != 2 {
        return Err(CliError::config("design", "the bias study requires k = 2"));
    }
    let factory = RngFactory::from_seed(cfg.seed);
    let mut spec = DesignSpec::bias();
    spec.lattice_extent = cfg.lattice_extent;
    let bank = make_bias_design(&spec, &mut factory.rng("design")).stage("design")?;

    let true_skills = sample_learners(cfg.n, 2, &factory.rng("learners")).stage("sample")?;
    let responses = sample_responses(&bank, &true_skills, &factory.rng("responses"))
        .stage("sample")?;

    let config = fit_config_for(&bank, cfg);
    let mut fit = fit_compensatory_em(&responses, 2, &config).stage("fit")?;
    align_to_anchors(&mut fit.params, &bank);
    let params = fit.params.clone();

    let n = cfg.n;
    let samples: Vec<BiasSample> = (0..n)
        .into_par_iter()
        .map(|j| {
            let z = true_skills.row(j);
            let y = responses.row(j);
            let estimated = mirt_core::estimation::map_skills(y, &params)?;
            let gradient = gradient_at_true_skills(z, y, &params)?;
            let difference: Vec<f64> =
                estimated.iter().zip(z).map(|(e, t)| e - t).collect();
            Ok(BiasSample {
                true_skills: z.to_vec(),
                estimated_skills: estimated,
                gradient,
                difference,
            })
        })
        .collect::<mirt_core::Result<Vec<_>>>()
        .stage("map")?;

    let correlations = gradient_difference_correlation(&samples).stage("correlation")?;

    let flat = |f: fn(&BiasSample) -> &Vec<f64>| -> Vec<f64> {
        samples.iter().flat_map(|s| f(s).iter().copied()).collect()
    };
    let diff_matrix = SkillMatrix::new(n, 2, flat(|s| &s.difference)).stage("summaries")?;
    let grad_matrix = SkillMatrix::new(n, 2, flat(|s| &s.gradient)).stage("summaries")?;
    let diff_tables = quartile_region_summary(&diff_matrix, &true_skills).stage("summaries")?;
    let grad_tables = quartile_region_summary(&grad_matrix, &true_skills).stage("summaries")?;

    let field_prior = expected_gradient_field(
        &bank,
        &params,
        cfg.field_extent,
        cfg.field_resolution,
        true,
    )
    .stage("field")?;
    let field_noprior = expected_gradient_field(
        &bank,
        &params,
        cfg.field_extent,
        cfg.field_resolution,
        false,
    )
    .stage("field")?;

    let mut out = OutputDir::create(&cfg.out)?;
    out.write_json("bank.json", &bank)?;
    out.write_json("fit.json", &fit)?;
    out.write_csv(
        "scatter.csv",
        "g1,g2,d1,d2",
        samples.iter().map(|s| {
            format!(
                "{},{},{},{}",
                fmt_g9(s.gradient[0]),
                fmt_g9(s.gradient[1]),
                fmt_g9(s.difference[0]),
                fmt_g9(s.difference[1])
            )
        }),
    )?;
    out.write_csv("region_difference_skill1.csv", REGION_HEADER, region_rows(&diff_tables[0]))?;
    out.write_csv("region_difference_skill2.csv", REGION_HEADER, region_rows(&diff_tables[1]))?;
    out.write_csv("region_gradient_skill1.csv", REGION_HEADER, region_rows(&grad_tables[0]))?;
    out.write_csv("region_gradient_skill2.csv", REGION_HEADER, region_rows(&grad_tables[1]))?;
    out.write_csv("field_with_prior.csv", "z1,z2,g1,g2", field_rows(&field_prior))?;
    out.write_csv("field_without_prior.csv", "z1,z2,g1,g2", field_rows(&field_noprior))?;
    out.write_json(
        "correlation.json",
        &CorrelationSummary { n, pearson_r: correlations.clone() },
    )?;
    out.write_json("manifest.json", &Manifest::new("bias", cfg.seed, cfg.as_map("bias")))?;
    let files = out.commit();

    Ok(BiasOutcome { bank, fit, correlations, diff_tables, grad_tables, files })
}

// ---------------------------------------------------------------------------
// variance experiment
// ---------------------------------------------------------------------------

pub struct VarianceOutcome {
    pub bank: ItemBank,
    pub pseudo_true: CompParams,
    pub report: VarianceReport,
    pub experimental: ExperimentalVariance,
    pub files: Vec<PathBuf>,
}

pub fn run_variance_experiment(cfg: &RunConfig) -> CliResult<VarianceOutcome> {
    cfg.validate()?;
    let factory = RngFactory::from_seed(cfg.seed);
    let spec = DesignSpec::variance(cfg.k).stage("design")?;
    let bank = make_variance_design(&spec, &mut factory.rng("design")).stage("design")?;
    let config = fit_config_for(&bank, cfg);

    let pseudo = pseudo_true_params(&bank, cfg.n_big, &config, &factory).stage("pseudo-true")?;

    let ids = param_ids(&bank);
    let grid = QuadratureGrid::build(bank.k, config.points_per_dim).stage("information")?;
    let infos = info_scalars(
        &Generator::NonCompensatory(&bank),
        &pseudo,
        &ids,
        &grid,
        cfg.info_samples,
        &factory.rng("info"),
    )
    .stage("information")?;

    let plan = ReplicationPlan {
        n: cfg.rep_n,
        replicates: cfg.replicates,
        refinement: cfg.refine,
        seed: cfg.seed,
    };
    let experimental =
        experimental_variance(&bank, &plan, &config, &pseudo).stage("replicates")?;
    let report = VarianceReport::build(&pseudo, &infos, Some(&experimental)).stage("report")?;

    let mut out = OutputDir::create(&cfg.out)?;
    out.write_json("bank.json", &bank)?;
    out.write_json("pseudo_true.json", &pseudo)?;
    out.write_json("report.json", &report)?;

    let family_rows = |summaries: &[mirt_core::variance::FamilySummary]| -> Vec<String> {
        summaries
            .iter()
            .map(|s| format!("{},{},{}", s.family, fmt_g9(s.mae), fmt_g9(s.mape_percent)))
            .collect()
    };
    out.write_csv(
        "table_sandwich_vs_experimental.csv",
        "family,mae,mape_percent",
        family_rows(&report.sandwich_vs_experimental),
    )?;
    out.write_csv(
        "table_sandwich_vs_naive.csv",
        "family,mae,mape_percent",
        family_rows(&report.sandwich_vs_naive),
    )?;
    out.write_csv(
        "scatter_sandwich_vs_experimental.csv",
        "param,family,sandwich,experimental",
        report.entries.iter().map(|e| {
            format!(
                "{},{},{},{}",
                e.param,
                if e.param.is_discrimination() { "discrimination" } else { "difficulty" },
                fmt_g9(e.sandwich),
                fmt_g9(e.experimental.unwrap_or(f64::NAN))
            )
        }),
    )?;
    out.write_csv(
        "scatter_sandwich_vs_naive.csv",
        "param,family,sandwich,naive",
        report.entries.iter().map(|e| {
            format!(
                "{},{},{},{}",
                e.param,
                if e.param.is_discrimination() { "discrimination" } else { "difficulty" },
                fmt_g9(e.sandwich),
                fmt_g9(e.naive)
            )
        }),
    )?;
    out.write_json(
        "manifest.json",
        &Manifest::new("variance", cfg.seed, cfg.as_map("variance")),
    )?;
    let files = out.commit();

    Ok(VarianceOutcome { bank, pseudo_true: pseudo, report, experimental, files })
}
