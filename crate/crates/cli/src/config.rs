//! Run configuration, read from TOML.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use ravenbench::pipeline::{EvalConfig, Substrate, DEFAULT_REPS};
use ravenbench::psychfit::{GridConfig, PerturbSchedule, GUESS_RATE};
use ravenbench::register::RegisterConfig;
use ravenbench::simpanel::PanelConfig;
use serde::{Deserialize, Serialize};

use crate::failure::{CliResult, Classify, Failure};

fn default_items() -> usize {
    12
}

fn default_reps() -> usize {
    DEFAULT_REPS
}

fn default_alpha() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_items")]
    pub items: usize,
    #[serde(default = "default_reps")]
    pub reps: usize,
    /// Relative paths resolve against the config file's directory.
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    /// Thread count; defaults to the available parallelism. Never affects output bytes.
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    pub substrate: Substrate,
    #[serde(default)]
    pub perturb: PerturbSchedule,
    #[serde(default)]
    pub register: RegisterConfig,
    #[serde(default)]
    pub panel: PanelConfig,
    #[serde(default)]
    pub psych: GridConfig,
}

impl RunConfig {
    /// Parses and validates a config file, returning it with its raw bytes.
    pub fn load(path: &Path) -> CliResult<(RunConfig, Vec<u8>)> {
        let bytes = std::fs::read(path)
            .with_context(|| format!("reading config {}", path.display()))
            .or_config()?;
        let text = std::str::from_utf8(&bytes)
            .context("config is not UTF-8")
            .or_config()?;
        let mut cfg: RunConfig = toml::from_str(text)
            .with_context(|| format!("parsing config {}", path.display()))
            .or_config()?;
        cfg.validate().map_err(Failure::config)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(out) = &cfg.out_dir {
            if out.is_relative() {
                cfg.out_dir = Some(base.join(out));
            }
        }
        if let Substrate::External { command, .. } = &mut cfg.substrate {
            let program = Path::new(&command[0]);
            if program.is_relative() && command[0].contains('/') {
                command[0] = base.join(program).to_string_lossy().into_owned();
            }
        }
        Ok((cfg, bytes))
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.items == 0 {
            bail!("items must be at least 1");
        }
        if self.reps == 0 {
            bail!("reps must be at least 1");
        }
        if self.workers == Some(0) {
            bail!("workers must be at least 1");
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            bail!("alpha must lie in (0, 1), got {}", self.alpha);
        }
        let (s_lo, s_hi) = self.perturb.sigma_range;
        if !(0.0 <= s_lo && s_lo <= s_hi) {
            bail!("perturb.sigma_range must satisfy 0 <= lo <= hi");
        }
        let (b_lo, b_hi) = self.perturb.brightness_range;
        if !(b_lo <= b_hi && b_lo >= -255.0 && b_hi <= 255.0) {
            bail!("perturb.brightness_range must be ordered and within ±255");
        }
        let g = &self.psych;
        if g.m_nodes < 2 || g.s_nodes < 2 || g.lambda_nodes < 1 {
            bail!("psych grid needs at least 2 nodes for m and s and 1 for lambda");
        }
        if !(g.m_range.0 < g.m_range.1) || !(0.0 < g.s_range.0 && g.s_range.0 < g.s_range.1) {
            bail!("psych ranges must be increasing with a positive width range");
        }
        if !(0.0..1.0 - GUESS_RATE).contains(&g.lambda_max) {
            bail!("psych.lambda_max must lie in [0, {})", 1.0 - GUESS_RATE);
        }
        if self.panel.nmi_bins < 2 {
            bail!("panel.nmi_bins must be at least 2");
        }
        if let Substrate::External { command, timeout_secs } = &self.substrate {
            if command.is_empty() || command[0].is_empty() {
                bail!("external substrate needs a non-empty command");
            }
            if !(timeout_secs.is_finite() && *timeout_secs > 0.0) {
                bail!("external timeout_secs must be positive");
            }
        }
        Ok(())
    }

    pub fn eval_config(&self) -> EvalConfig {
        EvalConfig {
            reps: self.reps,
            seed: self.seed,
            perturb: self.perturb,
            register: self.register,
            panel: self.panel,
        }
    }
}
