//! The TOML run configuration.
//!
//! ```toml
//! seed = 7
//!
//! [kernel]
//! family = "gaussian"
//! c = 1.0
//!
//! [target]
//! family = "gaussian"
//! m = 0.036
//! sigma = 0.14
//!
//! [divergence]
//! kind = "mmd_semi_explicit_u"
//!
//! [cem]
//! samples = 200
//!
//! [backtest]
//! estimation_window = 1260
//!
//! [experiment]
//! repetitions = 15
//!
//! [optimize]
//! bandwidth = "sample_sd"
//! ```
//!
//! `[kernel]` and `[target]` fill the divergence section when it does not
//! name its own.

use std::path::Path;

use mindiv_core::backtest::BacktestConfig;
use mindiv_core::experiments::ExperimentConfig;
use mindiv_core::{Bandwidth, CemConfig, DivergenceConfig, DivergenceKind, KernelSpec, TargetSpec};
use serde::Deserialize;

use crate::CliError;

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizeSection {
    #[serde(default)]
    pub bandwidth: Bandwidth,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub kernel: Option<KernelSpec>,
    pub target: Option<TargetSpec>,
    pub divergence: Option<toml::Table>,
    pub cem: Option<CemConfig>,
    pub backtest: Option<BacktestConfig>,
    pub experiment: Option<ExperimentConfig>,
    pub optimize: Option<OptimizeSection>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }

    /// The divergence section completed from `[kernel]` and `[target]`, with
    /// `kind` overriding the configured estimator.
    pub fn divergence(&self, kind: Option<DivergenceKind>) -> Result<DivergenceConfig, CliError> {
        let mut table = self.divergence.clone().unwrap_or_default();
        if let Some(kind) = kind {
            table.insert("kind".into(), encode(&kind)?);
        }
        if !table.contains_key("kernel") {
            if let Some(kernel) = &self.kernel {
                table.insert("kernel".into(), encode(kernel)?);
            }
        }
        if !table.contains_key("target") {
            let target = self
                .target
                .ok_or_else(|| CliError::Usage("no target: add a [target] section".into()))?;
            table.insert("target".into(), encode(&target)?);
        }
        if !table.contains_key("kind") {
            return Err(CliError::Usage("no estimator: set [divergence] kind or pass --kind".into()));
        }
        let cfg: DivergenceConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e| CliError::Usage(format!("[divergence]: {e}")))?;
        if cfg.kind.needs_kernel() && cfg.kernel.is_none() {
            return Err(CliError::Usage(format!("{:?} needs a [kernel] section", cfg.kind)));
        }
        Ok(cfg)
    }

    pub fn kernel_and_target(&self) -> Result<(KernelSpec, TargetSpec), CliError> {
        let from_divergence = |key: &str| self.divergence.as_ref().and_then(|t| t.get(key)).cloned();
        let kernel = match self.kernel {
            Some(k) => k,
            None => from_divergence("kernel")
                .ok_or_else(|| CliError::Usage("no kernel: add a [kernel] section".into()))?
                .try_into()
                .map_err(|e| CliError::Usage(format!("kernel: {e}")))?,
        };
        let target = match self.target {
            Some(t) => t,
            None => from_divergence("target")
                .ok_or_else(|| CliError::Usage("no target: add a [target] section".into()))?
                .try_into()
                .map_err(|e| CliError::Usage(format!("target: {e}")))?,
        };
        Ok((kernel, target))
    }

    /// The CEM section with the seed resolved.
    pub fn cem(&self, seed: u64) -> CemConfig {
        CemConfig { seed, ..self.cem.clone().unwrap_or_default() }
    }

    /// `--seed` wins over the file's `seed`, which defaults to 0.
    pub fn seed(&self, flag: Option<u64>) -> u64 {
        flag.or(self.seed).unwrap_or(0)
    }
}

fn encode<T: serde::Serialize>(value: &T) -> Result<toml::Value, CliError> {
    toml::Value::try_from(value).map_err(|e| CliError::Usage(e.to_string()))
}
