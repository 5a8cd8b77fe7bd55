//! TOML run configuration.
//!
//! ```toml
//! horizon_t = 20.0
//!
//! [market]
//! mu = 0.04
//! r = 0.0
//! sigma = 0.2
//!
//! [endowment]
//! rho = -0.5
//! mu_c = [[0.0, 0.02]]      # [[t, value], ...], right-continuous
//! sigma_c = [[0.0, 0.13]]
//!
//! [utility]
//! gamma = -1.0
//!
//! [constraint]              # optional, default [-5, 5]
//! pi_lo = -5.0
//! pi_hi = 5.0
//! ```
//!
//! Optional `[grid]`, `[scheme]` and `[sim]` tables override the numerical
//! defaults. Unknown keys are rejected, and every error names the key path.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hjb::{GridConfig, SchemeConfig};
use crate::model::{ConstraintSet, EndowmentParams, MarketParams, ModelParams, UtilityParams};
use crate::montecarlo::SimConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub market: MarketParams,
    pub endowment: EndowmentParams,
    pub utility: UtilityParams,
    #[serde(default)]
    pub constraint: ConstraintSet,
    pub horizon_t: f64,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub scheme: SchemeConfig,
    #[serde(default)]
    pub sim: SimConfig,
}

impl RunConfig {
    /// The reference parameters with default numerics.
    pub fn reference() -> Self {
        let p = ModelParams::reference_example();
        RunConfig {
            market: p.market,
            endowment: p.endowment,
            utility: p.utility,
            constraint: p.constraint,
            horizon_t: p.horizon_t,
            grid: GridConfig::default(),
            scheme: SchemeConfig::default(),
            sim: SimConfig::default(),
        }
    }

    pub fn model(&self) -> ModelParams {
        ModelParams {
            market: self.market,
            endowment: self.endowment.clone(),
            utility: self.utility,
            constraint: self.constraint,
            horizon_t: self.horizon_t,
        }
    }

    pub fn set_model(&mut self, params: &ModelParams) {
        self.market = params.market;
        self.endowment = params.endowment.clone();
        self.utility = params.utility;
        self.constraint = params.constraint;
        self.horizon_t = params.horizon_t;
    }

    pub fn validate(&self) -> Result<()> {
        self.model().validate()?;
        self.sim.validate()
    }

    pub fn from_toml_str(text: &str, origin: &str) -> Result<Self> {
        let de = toml::Deserializer::new(text);
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|err| {
            let path = err.path().to_string();
            let message = err.inner().message().trim().to_string();
            let path = match missing_field(&message) {
                Some(field) if path == "." => field.to_string(),
                Some(field) => format!("{path}.{field}"),
                None => path,
            };
            Error::Config {
                path,
                message: format!("{message} (in {origin})"),
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_toml_str(&text, &path.display().to_string())
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }
}

fn missing_field(message: &str) -> Option<&str> {
    message
        .strip_prefix("missing field `")
        .and_then(|rest| rest.split('`').next())
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
horizon_t = 20.0

[market]
mu = 0.04
r = 0.0
sigma = 0.2

[endowment]
rho = -0.5
mu_c = [[0.0, 0.02]]
sigma_c = [[0.0, 0.13]]

[utility]
gamma = -1.0
"#;

    #[test]
    fn sample_parses_to_reference() {
        let cfg = RunConfig::from_toml_str(SAMPLE, "sample").unwrap();
        assert_eq!(cfg, RunConfig::reference());
        assert_eq!(cfg.model(), ModelParams::reference_example());
    }

    #[test]
    fn toml_roundtrip() {
        let mut cfg = RunConfig::reference();
        cfg.grid.nz = 123;
        cfg.sim.seed = 9;
        let back = RunConfig::from_toml_str(&cfg.to_toml_string(), "rt").unwrap();
        assert_eq!(cfg, back);
    }

    fn config_error_path(text: &str) -> String {
        match RunConfig::from_toml_str(text, "t") {
            Err(Error::Config { path, .. }) => path,
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn missing_key_is_named() {
        let text = SAMPLE.replace("gamma = -1.0", "");
        assert_eq!(config_error_path(&text), "utility.gamma");
        let text = SAMPLE.replace("horizon_t = 20.0", "");
        assert_eq!(config_error_path(&text), "horizon_t");
    }

    #[test]
    fn wrong_type_and_unknown_keys_are_named() {
        let text = SAMPLE.replace("sigma = 0.2", "sigma = \"high\"");
        assert_eq!(config_error_path(&text), "market.sigma");
        let text = format!("{SAMPLE}\n[grid]\nnz = 10\nwidth = 3\n");
        assert_eq!(config_error_path(&text), "grid.width");
    }

    #[test]
    fn invalid_values_are_rejected() {
        let text = SAMPLE.replace("gamma = -1.0", "gamma = 0.0");
        let err = RunConfig::from_toml_str(&text, "t").unwrap_err();
        assert!(err.is_config_error());
        assert!(err.to_string().contains("utility.gamma"));
    }
}
