use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mirt_cli::config::{DesignChoice, Preset, RunConfig};
use mirt_cli::experiments;
use mirt_cli::CliResult;

#[derive(Parser)]
#[command(
    name = "mirt",
    version,
    about = "Compensatory/non-compensatory MIRT simulation and misspecification analysis"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args)]
struct Common {
    /// Plain-text config file (one `key = value` per line, `#` comments)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Root seed; all randomness derives from it
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Scale preset: desk | paper
    #[arg(long)]
    preset: Option<String>,
    /// Number of skills (2 or 3)
    #[arg(long)]
    k: Option<usize>,
    /// Quadrature points per dimension
    #[arg(long = "quad-points")]
    quad_points: Option<usize>,
    /// Worker threads (0 = automatic)
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate an item bank and simulated responses
    Generate {
        #[command(flatten)]
        common: Common,
        /// Which design: bias | variance
        #[arg(long)]
        design: Option<String>,
        /// Number of learners
        #[arg(long)]
        n: Option<usize>,
    },
    /// Fit the compensatory model to a response matrix
    Fit {
        #[command(flatten)]
        common: Common,
        /// Item bank JSON (supplies the loading structure)
        #[arg(long)]
        bank: Option<PathBuf>,
        /// Headerless 0/1 response CSV
        #[arg(long)]
        responses: Option<PathBuf>,
    },
    /// MAP skill estimates under fitted parameters
    Skills {
        #[command(flatten)]
        common: Common,
        /// Fitted parameters JSON (output of `fit`)
        #[arg(long)]
        params: Option<PathBuf>,
        /// Headerless 0/1 response CSV
        #[arg(long)]
        responses: Option<PathBuf>,
    },
    /// Run the skill-difference study (gradient vs actual difference)
    Bias {
        #[command(flatten)]
        common: Common,
        /// Number of learners
        #[arg(long)]
        n: Option<usize>,
        /// Half-width of the expected-gradient raster
        #[arg(long = "field-extent")]
        field_extent: Option<f64>,
        /// Raster resolution per axis
        #[arg(long = "field-resolution")]
        field_resolution: Option<usize>,
    },
    /// Run the asymptotic-variance study (sandwich vs naive vs experimental)
    Variance {
        #[command(flatten)]
        common: Common,
        /// Sample size of the pseudo-true fit
        #[arg(long = "n-big")]
        n_big: Option<usize>,
        /// Monte Carlo draws for the information scalars
        #[arg(long = "info-samples")]
        info_samples: Option<usize>,
        /// Learners per replicate
        #[arg(long = "rep-n")]
        rep_n: Option<usize>,
        /// Number of replicates
        #[arg(long)]
        replicates: Option<usize>,
        /// Polish every parameter with one-dimensional optimization
        #[arg(long)]
        refine: Option<bool>,
    },
}

fn resolve(common: &Common) -> CliResult<RunConfig> {
    let mut cfg = RunConfig::desk_defaults();
    if let Some(path) = &common.config {
        cfg.apply_file(path)?;
    }
    if let Some(preset) = &common.preset {
        cfg.apply_preset(Preset::parse(preset)?);
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.out = out.clone();
    }
    if let Some(k) = common.k {
        cfg.k = k;
    }
    if let Some(q) = common.quad_points {
        cfg.quad_points = Some(q);
    }
    if let Some(t) = common.threads {
        cfg.threads = t;
    }
    Ok(cfg)
}

fn set_threads(cfg: &RunConfig) {
    if cfg.threads > 0 {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build_global();
    }
}

fn run(cli: Cli) -> CliResult<Vec<PathBuf>> {
    match cli.command {
        Cmd::Generate { common, design, n } => {
            let mut cfg = resolve(&common)?;
            if let Some(d) = design {
                cfg.design = DesignChoice::parse(&d)?;
            }
            if let Some(n) = n {
                cfg.n = n;
            }
            set_threads(&cfg);
            experiments::run_generate(&cfg)
        }
        Cmd::Fit { common, bank, responses } => {
            let mut cfg = resolve(&common)?;
            if bank.is_some() {
                cfg.bank = bank;
            }
            if responses.is_some() {
                cfg.responses = responses;
            }
            set_threads(&cfg);
            experiments::run_fit(&cfg)
        }
        Cmd::Skills { common, params, responses } => {
            let mut cfg = resolve(&common)?;
            if params.is_some() {
                cfg.params = params;
            }
            if responses.is_some() {
                cfg.responses = responses;
            }
            set_threads(&cfg);
            experiments::run_skills(&cfg)
        }
        Cmd::Bias { common, n, field_extent, field_resolution } => {
            let mut cfg = resolve(&common)?;
            if let Some(n) = n {
                cfg.n = n;
            }
            if let Some(e) = field_extent {
                cfg.field_extent = e;
            }
            if let Some(r) = field_resolution {
                cfg.field_resolution = r;
            }
            set_threads(&cfg);
            experiments::run_bias_experiment(&cfg).map(|o| o.files)
        }
        Cmd::Variance { common, n_big, info_samples, rep_n, replicates, refine } => {
            let mut cfg = resolve(&common)?;
            if let Some(v) = n_big {
                cfg.n_big = v;
            }
            if let Some(v) = info_samples {
                cfg.info_samples = v;
            }
            if let Some(v) = rep_n {
                cfg.rep_n = v;
            }
            if let Some(v) = replicates {
                cfg.replicates = v;
            }
            if let Some(v) = refine {
                cfg.refine = v;
            }
            set_threads(&cfg);
            experiments::run_variance_experiment(&cfg).map(|o| o.files)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(files) => {
            for f in files {
                println!("wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_config_file() {
        use std::io::Write;
        let mut file = tempfile::NamedTempFile::new().unwrap();
        writeln!(file, "seed = 5").unwrap();
        writeln!(file, "n = 123").unwrap();
        file.flush().unwrap();
        let common = Common {
            config: Some(file.path().to_path_buf()),
            seed: Some(9),
            out: None,
            preset: None,
            k: None,
            quad_points: Some(7),
            threads: None,
        };
        let cfg = resolve(&common).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.n, 123);
        assert_eq!(cfg.quad_points, Some(7));
    }
}
