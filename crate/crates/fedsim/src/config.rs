//! Config-file handling: TOML documents that map one-to-one onto
//! [`FederationConfig`] and [`ScenarioConfig`].
//!
//! Unknown keys are rejected, type mismatches are reported with the full
//! key path, and rendering then parsing a config recovers it exactly.
//! One representational limit: TOML integers are signed 64-bit, so seeds
//! in config files must fit in `0..=i64::MAX`; the full unsigned range
//! remains available programmatically and in derived seeds.

use std::path::Path;

use serde::{de::DeserializeOwned, Serialize};

use crate::error::{Error, Result};
use crate::experiment::{FederationConfig, ScenarioConfig};

fn parse<T: DeserializeOwned>(text: &str, what: &str) -> Result<T> {
    toml::from_str(text).map_err(|e| {
        // The toml display form quotes the offending line, so the error
        // always names the key it is complaining about.
        Error::Config(format!("invalid {what}: {e}"))
    })
}

fn render<T: Serialize>(value: &T, what: &str) -> Result<String> {
    toml::to_string_pretty(value)
        .map_err(|e| Error::Config(format!("cannot render {what}: {e}")))
}

/// Parses a single-federation config document.
pub fn parse_run_config(text: &str) -> Result<FederationConfig> {
    let cfg: FederationConfig = parse(text, "run config")?;
    cfg.validate()?;
    Ok(cfg)
}

/// Parses a scenario-grid config document.
pub fn parse_scenario_config(text: &str) -> Result<ScenarioConfig> {
    let cfg: ScenarioConfig = parse(text, "scenario config")?;
    cfg.validate()?;
    Ok(cfg)
}

/// Renders a federation config back to TOML.
pub fn render_run_config(cfg: &FederationConfig) -> Result<String> {
    render(cfg, "run config")
}

/// Renders a scenario config back to TOML.
pub fn render_scenario_config(cfg: &ScenarioConfig) -> Result<String> {
    render(cfg, "scenario config")
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Reads and parses a federation config file.
pub fn load_run_config(path: &Path) -> Result<FederationConfig> {
    parse_run_config(&read(path)?)
}

/// Reads and parses a scenario config file.
pub fn load_scenario_config(path: &Path) -> Result<ScenarioConfig> {
    parse_scenario_config(&read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::tests_support::tiny_config;
    use crate::experiment::StateMode;
    use crate::shapley::{ShapleyMode, UtilityKind};
    use crate::strategies::StrategyKind;

    fn tiny_scenario() -> ScenarioConfig {
        ScenarioConfig {
            id: "demo".into(),
            base: tiny_config(),
            alphas: vec![1.0, 10.0],
            epochs: vec![1, 2],
            seeds: vec![7, 8, 9],
            fedrandom_runs: 4,
        }
    }

    #[test]
    fn run_config_round_trips_exactly() {
        let mut cfg = tiny_config();
        cfg.strategy = StrategyKind::FedYogi;
        cfg.hyper.server_lr = Some(0.05);
        cfg.shapley.mode = ShapleyMode::Mc;
        cfg.shapley.utility = UtilityKind::NegLoss;
        cfg.fedrandom_state = StateMode::Reset;
        cfg.choice_seed = Some(1234);
        let text = render_run_config(&cfg).unwrap();
        let back = parse_run_config(&text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn scenario_config_round_trips_exactly() {
        let scenario = tiny_scenario();
        let text = render_scenario_config(&scenario).unwrap();
        let back = parse_scenario_config(&text).unwrap();
        assert_eq!(back, scenario);
    }

    #[test]
    fn unknown_keys_are_rejected_by_name() {
        let mut text = render_run_config(&tiny_config()).unwrap();
        text.push_str("\nbogus_knob = 3\n");
        let err = parse_run_config(&text).unwrap_err();
        assert!(err.to_string().contains("bogus_knob"), "{err}");
    }

    #[test]
    fn type_errors_name_the_offending_key() {
        let text = render_run_config(&tiny_config()).unwrap();
        let broken = text.replace("rounds = 3", "rounds = \"three\"");
        assert_ne!(text, broken);
        let err = parse_run_config(&broken).unwrap_err();
        assert!(err.to_string().contains("rounds"), "{err}");
    }

    #[test]
    fn semantic_validation_runs_after_parsing() {
        let text = render_run_config(&tiny_config()).unwrap();
        let broken = text.replace("rounds = 3", "rounds = 0");
        let err = parse_run_config(&broken).unwrap_err();
        assert!(err.to_string().contains("rounds"), "{err}");
    }

    #[test]
    fn float_fields_keep_their_bits_through_toml() {
        let mut cfg = tiny_config();
        cfg.local.learning_rate = 0.1 + 0.2; // not exactly representable as 0.3
        cfg.partition.alpha = 1.0 / 3.0;
        cfg.val_frac = 0.1;
        let back = parse_run_config(&render_run_config(&cfg).unwrap()).unwrap();
        assert_eq!(
            back.local.learning_rate.to_bits(),
            cfg.local.learning_rate.to_bits()
        );
        assert_eq!(back.partition.alpha.to_bits(), cfg.partition.alpha.to_bits());
        assert_eq!(back.val_frac.to_bits(), cfg.val_frac.to_bits());
    }

    #[test]
    fn missing_files_error_with_the_path() {
        let err = load_run_config(Path::new("/nonexistent/cfg.toml")).unwrap_err();
        assert!(err.to_string().contains("cfg.toml"), "{err}");
    }
}
