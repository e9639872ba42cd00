//! Run configuration: a sectioned key = value document with defaults,
//! schema checking (unknown keys rejected, ranges enforced) and snapshot
//! serialization. CLI flags override file values override defaults.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use shapecorr::driver::{DriverConfig, RigidMode};
use shapecorr::embedding::ChannelWeights;
use shapecorr::error::{Error, Result};
use shapecorr::spectral::Smoothing;

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub driver: DriverConfig,
    pub hks_times: usize,
    pub seed: u64,
    pub threads: usize,
    pub one_based: bool,
    pub cache_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            driver: DriverConfig::default(),
            hks_times: 16,
            seed: 0,
            threads: 0,
            one_based: false,
            cache_dir: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let body = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = RunConfig::default();
        let mut section = String::new();
        for (ln, line) in body.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            if line.starts_with('[') && line.ends_with(']') {
                section = line[1..line.len() - 1].trim().to_string();
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("{}:{}: expected key = value", path.display(), ln + 1))
            })?;
            let full_key = if section.is_empty() {
                key.trim().to_string()
            } else {
                format!("{section}.{}", key.trim())
            };
            config.set(&full_key, value.trim())?;
        }
        Ok(config)
    }

    /// Apply one `section.key = value` override.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |what: &str| Error::Config(format!("bad value {value:?} for {what}"));
        let parse_f64 = |v: &str, what: &str| v.parse::<f64>().map_err(|_| bad(what));
        let parse_usize = |v: &str, what: &str| v.parse::<usize>().map_err(|_| bad(what));
        let parse_bool = |v: &str, what: &str| match v {
            "true" | "1" | "yes" => Ok(true),
            "false" | "0" | "no" => Ok(false),
            _ => Err(bad(what)),
        };
        let positive = |x: f64, what: &str| {
            if x > 0.0 {
                Ok(x)
            } else {
                Err(Error::Config(format!("{what} must be positive, got {x}")))
            }
        };
        let nonneg = |x: f64, what: &str| {
            if x >= 0.0 {
                Ok(x)
            } else {
                Err(Error::Config(format!("{what} must be nonnegative, got {x}")))
            }
        };

        let p = &mut self.driver.params;
        match key {
            "pipeline.sigma" => p.sigma = positive(parse_f64(value, key)?, key)?,
            "pipeline.k_init" => {
                p.k_init = parse_usize(value, key)?;
                if p.k_init < 2 {
                    return Err(Error::Config("pipeline.k_init must be >= 2".to_string()));
                }
            }
            "pipeline.k_max" => p.k_max = parse_usize(value, key)?,
            "pipeline.steps" => {
                p.steps = parse_usize(value, key)?;
                if p.steps < 2 {
                    return Err(Error::Config("pipeline.steps must be >= 2".to_string()));
                }
            }
            "pipeline.lambda_feat" => p.lambda_feat = nonneg(parse_f64(value, key)?, key)?,
            "pipeline.lambda_arap" => p.lambda_arap = nonneg(parse_f64(value, key)?, key)?,
            "pipeline.passes_per_level" => p.passes_per_level = parse_usize(value, key)?.max(1),
            "pipeline.inner_iterations" => p.inner_iterations = parse_usize(value, key)?.max(1),
            "pipeline.feature_every_level" => p.feature_every_level = parse_bool(value, key)?,
            "pipeline.smoothing" => {
                p.smoothing = match value {
                    "shell" => Smoothing::Shell,
                    "spectral" | "truncation" => Smoothing::HardTruncation,
                    _ => return Err(bad(key)),
                }
            }
            "pipeline.w_spectral" => {
                p.weights = ChannelWeights {
                    spectral: nonneg(parse_f64(value, key)?, key)?,
                    ..p.weights
                }
            }
            "pipeline.w_coords" => {
                p.weights = ChannelWeights {
                    coords: nonneg(parse_f64(value, key)?, key)?,
                    ..p.weights
                }
            }
            "pipeline.w_normals" => {
                p.weights = ChannelWeights {
                    normals: nonneg(parse_f64(value, key)?, key)?,
                    ..p.weights
                }
            }
            "pipeline.spectral_damping" => {
                p.weights = ChannelWeights {
                    spectral_damping: parse_bool(value, key)?,
                    ..p.weights
                }
            }
            "descriptors.hks_times" => {
                self.hks_times = parse_usize(value, key)?;
                self.driver.hks_times = self.hks_times;
            }
            "mcmc.k_max_surr" => self.driver.surrogate.k_max_surr = parse_usize(value, key)?.max(2),
            "mcmc.vertex_budget" => {
                self.driver.surrogate.vertex_budget = parse_usize(value, key)?.max(4)
            }
            "mcmc.n_prop" => self.driver.surrogate.n_prop = parse_usize(value, key)?.max(1),
            "mcmc.sigma_match_sq" => {
                self.driver.surrogate.sigma_match_sq = positive(parse_f64(value, key)?, key)?
            }
            "mcmc.surrogate_steps" => {
                self.driver.surrogate.surrogate_steps = parse_usize(value, key)?.max(2)
            }
            "mcmc.proposal_scale" => {
                self.driver.surrogate.proposal_scale = positive(parse_f64(value, key)?, key)?
            }
            "mcmc.extra_random_rotations" => {
                self.driver.surrogate.extra_random_rotations = parse_usize(value, key)?
            }
            "mcmc.use_mcmc" => self.driver.use_mcmc = parse_bool(value, key)?,
            "mcmc.rigid_mode" => {
                self.driver.rigid_mode = match value {
                    "search" => RigidMode::Search,
                    "random" => RigidMode::Random,
                    "identity" => RigidMode::Identity,
                    _ => return Err(bad(key)),
                }
            }
            "run.seed" => {
                self.seed = value.parse::<u64>().map_err(|_| bad(key))?;
                self.driver.seed = self.seed;
            }
            "run.threads" => self.threads = parse_usize(value, key)?,
            "run.one_based" => self.one_based = parse_bool(value, key)?,
            "run.cache_dir" => {
                self.cache_dir = if value.is_empty() {
                    None
                } else {
                    Some(PathBuf::from(value))
                };
                self.driver.cache_dir = self.cache_dir.clone();
            }
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Pick up the cache directory from the environment unless the config
    /// already set one.
    pub fn apply_env(&mut self) {
        if self.cache_dir.is_none() {
            if let Ok(dir) = std::env::var("SHAPECORR_CACHE_DIR") {
                if !dir.is_empty() {
                    self.cache_dir = Some(PathBuf::from(dir));
                    self.driver.cache_dir = self.cache_dir.clone();
                }
            }
        }
    }

    /// Serialize the effective configuration; written next to every result.
    pub fn to_document(&self) -> String {
        let p = &self.driver.params;
        let s = &self.driver.surrogate;
        let mut out = String::new();
        let _ = writeln!(out, "[pipeline]");
        let _ = writeln!(out, "sigma = {}", p.sigma);
        let _ = writeln!(out, "k_init = {}", p.k_init);
        let _ = writeln!(out, "k_max = {}", p.k_max);
        let _ = writeln!(out, "steps = {}", p.steps);
        let _ = writeln!(out, "lambda_feat = {}", p.lambda_feat);
        let _ = writeln!(out, "lambda_arap = {}", p.lambda_arap);
        let _ = writeln!(out, "passes_per_level = {}", p.passes_per_level);
        let _ = writeln!(out, "inner_iterations = {}", p.inner_iterations);
        let _ = writeln!(out, "feature_every_level = {}", p.feature_every_level);
        let _ = writeln!(
            out,
            "smoothing = {}",
            match p.smoothing {
                Smoothing::Shell => "shell",
                Smoothing::HardTruncation => "truncation",
            }
        );
        let _ = writeln!(out, "w_spectral = {}", p.weights.spectral);
        let _ = writeln!(out, "w_coords = {}", p.weights.coords);
        let _ = writeln!(out, "w_normals = {}", p.weights.normals);
        let _ = writeln!(out, "spectral_damping = {}", p.weights.spectral_damping);
        let _ = writeln!(out);
        let _ = writeln!(out, "[descriptors]");
        let _ = writeln!(out, "hks_times = {}", self.hks_times);
        let _ = writeln!(out);
        let _ = writeln!(out, "[mcmc]");
        let _ = writeln!(out, "k_max_surr = {}", s.k_max_surr);
        let _ = writeln!(out, "vertex_budget = {}", s.vertex_budget);
        let _ = writeln!(out, "n_prop = {}", s.n_prop);
        let _ = writeln!(out, "sigma_match_sq = {}", s.sigma_match_sq);
        let _ = writeln!(out, "surrogate_steps = {}", s.surrogate_steps);
        let _ = writeln!(out, "proposal_scale = {}", s.proposal_scale);
        let _ = writeln!(out, "extra_random_rotations = {}", s.extra_random_rotations);
        let _ = writeln!(out, "use_mcmc = {}", self.driver.use_mcmc);
        let _ = writeln!(
            out,
            "rigid_mode = {}",
            match self.driver.rigid_mode {
                RigidMode::Search => "search",
                RigidMode::Random => "random",
                RigidMode::Identity => "identity",
            }
        );
        let _ = writeln!(out);
        let _ = writeln!(out, "[run]");
        let _ = writeln!(out, "seed = {}", self.seed);
        let _ = writeln!(out, "threads = {}", self.threads);
        let _ = writeln!(out, "one_based = {}", self.one_based);
        let _ = writeln!(
            out,
            "cache_dir = {}",
            self.cache_dir.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
        );
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_document() {
        let config = RunConfig::default();
        let doc = config.to_document();
        let mut p = std::env::temp_dir();
        p.push(format!("shapecorr-config-{}.ini", std::process::id()));
        std::fs::write(&p, &doc).unwrap();
        let loaded = RunConfig::load(&p).unwrap();
        assert_eq!(loaded.to_document(), doc);
        std::fs::remove_file(&p).ok();
    }

    #[test]
    fn unknown_keys_rejected() {
        let mut config = RunConfig::default();
        assert!(config.set("pipeline.bogus", "1").is_err());
        assert!(config.set("nonsense", "1").is_err());
    }

    #[test]
    fn out_of_range_rejected() {
        let mut config = RunConfig::default();
        assert!(config.set("pipeline.sigma", "-1").is_err());
        assert!(config.set("pipeline.sigma", "0").is_err());
        assert!(config.set("pipeline.steps", "1").is_err());
        assert!(config.set("pipeline.lambda_arap", "-0.5").is_err());
        assert!(config.set("mcmc.rigid_mode", "sideways").is_err());
        assert!(config.set("pipeline.sigma", "0.7").is_ok());
    }
}
