//! Run configuration: desk/paper presets, plain-text config files
//! (`key = value`, `#` comments), and CLI flag overrides.
//!
//! Precedence, lowest to highest: desk defaults, preset, config file, flags.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Desk,
    Paper,
}

impl Preset {
    pub fn parse(s: &str) -> CliResult<Self> {
        match s {
            "desk" => Ok(Preset::Desk),
            "paper" => Ok(Preset::Paper),
            other => Err(CliError::config("config", format!("unknown preset {other:?}"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Preset::Desk => "desk",
            Preset::Paper => "paper",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DesignChoice {
    Bias,
    Variance,
}

impl DesignChoice {
    pub fn parse(s: &str) -> CliResult<Self> {
        match s {
            "bias" => Ok(DesignChoice::Bias),
            "variance" => Ok(DesignChoice::Variance),
            other => Err(CliError::config("config", format!("unknown design {other:?}"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            DesignChoice::Bias => "bias",
            DesignChoice::Variance => "variance",
        }
    }
}

/// Fully resolved run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub preset: Preset,
    pub k: usize,
    /// Quadrature points per dimension; None picks the per-K default.
    pub quad_points: Option<usize>,
    /// Rayon thread count; 0 leaves the default pool.
    pub threads: usize,
    pub design: DesignChoice,
    /// Learners for `generate` and the bias study.
    pub n: usize,
    /// Sample size of the pseudo-true fit.
    pub n_big: usize,
    /// Monte Carlo draws for the information scalars.
    pub info_samples: usize,
    /// Learners per replicate in the variance study.
    pub rep_n: usize,
    pub replicates: usize,
    pub refine: bool,
    pub em_tolerance: f64,
    pub max_em_iterations: usize,
    pub lattice_extent: f64,
    pub field_extent: f64,
    pub field_resolution: usize,
    pub bank: Option<PathBuf>,
    pub responses: Option<PathBuf>,
    pub params: Option<PathBuf>,
}

impl RunConfig {
    pub fn desk_defaults() -> Self {
        RunConfig {
            seed: 42,
            out: PathBuf::from("out"),
            preset: Preset::Desk,
            k: 2,
            quad_points: None,
            threads: 0,
            design: DesignChoice::Bias,
            n: 100_000,
            n_big: 200_000,
            info_samples: 20_000,
            rep_n: 2_000,
            replicates: 200,
            refine: true,
            em_tolerance: 1e-4,
            max_em_iterations: 500,
            lattice_extent: 2.0,
            field_extent: 3.0,
            field_resolution: 50,
            bank: None,
            responses: None,
            params: None,
        }
    }

    pub fn apply_preset(&mut self, preset: Preset) {
        self.preset = preset;
        match preset {
            Preset::Desk => {
                self.n = 100_000;
                self.n_big = 200_000;
                self.info_samples = 20_000;
                self.rep_n = 2_000;
                self.replicates = 200;
            }
            Preset::Paper => {
                self.n = 1_000_000;
                self.n_big = 1_000_000;
                self.info_samples = 100_000;
                self.rep_n = 10_000;
                self.replicates = 30_000;
            }
        }
    }

    fn set_key(&mut self, key: &str, value: &str) -> CliResult<()> {
        let bad = |what: &str| {
            CliError::config("config", format!("invalid value {value:?} for key {what}"))
        };
        match key {
            "seed" => self.seed = value.parse().map_err(|_| bad("seed"))?,
            "out" => self.out = PathBuf::from(value),
            "k" => self.k = value.parse().map_err(|_| bad("k"))?,
            "quad_points" => {
                self.quad_points = Some(value.parse().map_err(|_| bad("quad_points"))?)
            }
            "threads" => self.threads = value.parse().map_err(|_| bad("threads"))?,
            "design" => self.design = DesignChoice::parse(value)?,
            "n" => self.n = value.parse().map_err(|_| bad("n"))?,
            "n_big" => self.n_big = value.parse().map_err(|_| bad("n_big"))?,
            "info_samples" => {
                self.info_samples = value.parse().map_err(|_| bad("info_samples"))?
            }
            "rep_n" => self.rep_n = value.parse().map_err(|_| bad("rep_n"))?,
            "replicates" => self.replicates = value.parse().map_err(|_| bad("replicates"))?,
            "refine" => {
                self.refine = match value {
                    "true" | "1" | "on" => true,
                    "false" | "0" | "off" => false,
                    _ => return Err(bad("refine")),
                }
            }
            "em_tolerance" => {
                self.em_tolerance = value.parse().map_err(|_| bad("em_tolerance"))?
            }
            "max_em_iterations" => {
                self.max_em_iterations =
                    value.parse().map_err(|_| bad("max_em_iterations"))?
            }
            "lattice_extent" => {
                self.lattice_extent = value.parse().map_err(|_| bad("lattice_extent"))?
            }
            "field_extent" => {
                self.field_extent = value.parse().map_err(|_| bad("field_extent"))?
            }
            "field_resolution" => {
                self.field_resolution =
                    value.parse().map_err(|_| bad("field_resolution"))?
            }
            "bank" => self.bank = Some(PathBuf::from(value)),
            "responses" => self.responses = Some(PathBuf::from(value)),
            "params" => self.params = Some(PathBuf::from(value)),
            other => {
                return Err(CliError::config(
                    "config",
                    format!("unknown config key {other:?}"),
                ))
            }
        }
        Ok(())
    }

    /// Apply `key = value` pairs from a config file (preset key first, so
    /// file keys can override the preset they select).
    pub fn apply_file(&mut self, path: &Path) -> CliResult<()> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::config("config", format!("cannot read {}: {e}", path.display()))
        })?;
        let mut pairs = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::config(
                    "config",
                    format!("{}:{}: expected key = value", path.display(), lineno + 1),
                )
            })?;
            pairs.push((key.trim().to_string(), value.trim().to_string()));
        }
        if let Some((_, v)) = pairs.iter().find(|(k, _)| k == "preset") {
            self.apply_preset(Preset::parse(v)?);
        }
        for (k, v) in pairs.iter().filter(|(k, _)| k != "preset") {
            self.set_key(k, v)?;
        }
        Ok(())
    }

    pub fn validate(&self) -> CliResult<()> {
        if !(self.k == 2 || self.k == 3) {
            return Err(CliError::config(
                "config",
                format!("k must be 2 or 3, got {}", self.k),
            ));
        }
        if let Some(q) = self.quad_points {
            if q < 2 {
                return Err(CliError::config("config", "quad_points must be at least 2"));
            }
        }
        if self.em_tolerance <= 0.0 {
            return Err(CliError::config("config", "em_tolerance must be positive"));
        }
        if self.field_resolution < 2 {
            return Err(CliError::config("config", "field_resolution must be at least 2"));
        }
        Ok(())
    }

    pub fn quad_points_for(&self, k: usize) -> usize {
        self.quad_points
            .unwrap_or_else(|| mirt_core::estimation::default_points_per_dim(k))
    }

    /// Canonical key/value view, used for the manifest and its hash.
    pub fn as_map(&self, subcommand: &str) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        m.insert("subcommand".into(), subcommand.to_string());
        m.insert("seed".into(), self.seed.to_string());
        m.insert("preset".into(), self.preset.name().to_string());
        m.insert("k".into(), self.k.to_string());
        m.insert(
            "quad_points".into(),
            self.quad_points_for(self.k).to_string(),
        );
        m.insert("design".into(), self.design.name().to_string());
        m.insert("n".into(), self.n.to_string());
        m.insert("n_big".into(), self.n_big.to_string());
        m.insert("info_samples".into(), self.info_samples.to_string());
        m.insert("rep_n".into(), self.rep_n.to_string());
        m.insert("replicates".into(), self.replicates.to_string());
        m.insert("refine".into(), self.refine.to_string());
        m.insert("em_tolerance".into(), format!("{:e}", self.em_tolerance));
        m.insert(
            "max_em_iterations".into(),
            self.max_em_iterations.to_string(),
        );
        m.insert("lattice_extent".into(), format!("{:e}", self.lattice_extent));
        m.insert("field_extent".into(), format!("{:e}", self.field_extent));
        m.insert(
            "field_resolution".into(),
            self.field_resolution.to_string(),
        );
        if let Some(p) = &self.bank {
            m.insert("bank".into(), p.display().to_string());
        }
        if let Some(p) = &self.responses {
            m.insert("responses".into(), p.display().to_string());
        }
        if let Some(p) = &self.params {
            m.insert("params".into(), p.display().to_string());
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn presets_set_sample_sizes() {
        let mut cfg = RunConfig::desk_defaults();
        cfg.apply_preset(Preset::Paper);
        assert_eq!(cfg.n, 1_000_000);
        assert_eq!(cfg.replicates, 30_000);
        cfg.apply_preset(Preset::Desk);
        assert_eq!(cfg.rep_n, 2_000);
        assert_eq!(cfg.replicates, 200);
    }

    #[test]
    fn config_file_parsing_and_overrides() {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        writeln!(file, "# comment line").unwrap();
        writeln!(file, "preset = paper").unwrap();
        writeln!(file, "seed = 7   # inline comment").unwrap();
        writeln!(file, "replicates = 12").unwrap();
        writeln!(file, "refine = off").unwrap();
        file.flush().unwrap();

        let mut cfg = RunConfig::desk_defaults();
        cfg.apply_file(file.path()).unwrap();
        assert_eq!(cfg.preset, Preset::Paper);
        assert_eq!(cfg.seed, 7);
        // file key wins over the preset it selected
        assert_eq!(cfg.replicates, 12);
        assert_eq!(cfg.n, 1_000_000);
        assert!(!cfg.refine);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_config_errors() {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        writeln!(file, "frobnicate = 3").unwrap();
        file.flush().unwrap();
        let mut cfg = RunConfig::desk_defaults();
        let err = cfg.apply_file(file.path()).unwrap_err();
        assert_eq!(err.exit_code(), crate::EXIT_CONFIG);

        let mut file = tempfile::NamedTempFile::new().unwrap();
        writeln!(file, "seed = notanumber").unwrap();
        file.flush().unwrap();
        assert!(cfg.apply_file(file.path()).is_err());
    }

    #[test]
    fn k_validation() {
        let mut cfg = RunConfig::desk_defaults();
        cfg.k = 4;
        let err = cfg.validate().unwrap_err();
        assert_eq!(err.exit_code(), crate::EXIT_CONFIG);
        assert!(err.message.contains("k must be 2 or 3"));
    }
}
