//! Experiment config files (JSON).

use std::path::{Path, PathBuf};

use mixflow_core::rl::{Profile, TrainConfig};
use mixflow_core::sim::{ScenarioConfig, INFLOW_CONFIGS};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InflowSet {
    /// The 16 studied configurations.
    Table,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Inflows {
    Named(InflowSet),
    List(Vec<(f64, f64)>),
}

/// Training settings; unset fields come from the profile.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub learning_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_o: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_updates: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint_interval: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Start from this checkpoint instead of a fresh initialization.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init_checkpoint: Option<PathBuf>,
}

/// Everything a command needs besides its flags.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    #[serde(default)]
    pub profile: Profile,
    pub scenario: ScenarioConfig,
    /// Inflow configurations; defaults to the scenario's own `(f_h, f_v)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inflows: Option<Inflows>,
    /// Controller as `NAME[:ARGS]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub controller: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
    /// Oracle table written by `oracle-search`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seeds: Option<usize>,
    #[serde(default)]
    pub train: TrainOverrides,
}

impl ExperimentSpec {
    pub fn new(scenario: ScenarioConfig) -> Self {
        ExperimentSpec {
            profile: Profile::Desk,
            scenario,
            inflows: None,
            controller: None,
            checkpoint: None,
            oracle: None,
            seeds: None,
            train: TrainOverrides::default(),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let spec: ExperimentSpec = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            CliError::Config(format!("at `{path}`: {}", e.into_inner()))
        })?;
        spec.scenario.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Inflow configurations in config order.
    pub fn inflow_list(&self) -> Vec<(f64, f64)> {
        match &self.inflows {
            None => vec![(self.scenario.f_h, self.scenario.f_v)],
            Some(Inflows::Named(InflowSet::Table)) => INFLOW_CONFIGS.to_vec(),
            Some(Inflows::List(list)) => list.clone(),
        }
    }

    /// One scenario per inflow configuration.
    pub fn scenarios(&self) -> Vec<ScenarioConfig> {
        self.inflow_list()
            .into_iter()
            .map(|(f_h, f_v)| ScenarioConfig {
                f_h,
                f_v,
                ..self.scenario.clone()
            })
            .collect()
    }

    pub fn train_config(&self) -> TrainConfig {
        let mut c = TrainConfig::profile(self.profile);
        let o = &self.train;
        macro_rules! apply {
            ($($f:ident),*) => { $( if let Some(v) = o.$f { c.$f = v; } )* };
        }
        apply!(
            gamma,
            learning_rate,
            lambda_o,
            lambda_c,
            batch_size,
            horizon,
            max_updates,
            checkpoint_interval,
            seed
        );
        c
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "scenario": {
            "network": { "topology": "two_way", "rows": 2, "cols": 1 },
            "f_h": 700, "f_v": 700, "penetration": 0.333
        }
    }"#;

    #[test]
    fn minimal_config_uses_defaults() {
        let spec = ExperimentSpec::parse(MINIMAL).unwrap();
        assert_eq!(spec.profile, Profile::Desk);
        assert_eq!(spec.scenario.delta_t, 0.5);
        assert_eq!(spec.scenario.horizon, 2000);
        assert_eq!(spec.inflow_list(), [(700.0, 700.0)]);
        assert_eq!(spec.train_config(), TrainConfig::profile(Profile::Desk));
    }

    #[test]
    fn unknown_key_is_named() {
        let text = MINIMAL.replace("\"penetration\"", "\"penetraton\"");
        let err = ExperimentSpec::parse(&text).unwrap_err().to_string();
        assert!(err.contains("penetraton"), "{err}");
    }

    #[test]
    fn bad_value_names_its_path() {
        let text = MINIMAL.replace("\"rows\": 2", "\"rows\": \"two\"");
        let err = ExperimentSpec::parse(&text).unwrap_err().to_string();
        assert!(err.contains("scenario.network.rows"), "{err}");
    }

    #[test]
    fn table_inflows() {
        let text = MINIMAL.replacen('{', "{ \"inflows\": \"table\",", 1);
        assert_eq!(ExperimentSpec::parse(&text).unwrap().scenarios().len(), 16);
    }

    #[test]
    fn overrides_apply_over_profile() {
        let text = MINIMAL.replacen('{', "{ \"profile\": \"paper\", \"train\": { \"max_updates\": 3 },", 1);
        let c = ExperimentSpec::parse(&text).unwrap().train_config();
        assert_eq!((c.batch_size, c.horizon, c.max_updates), (640, 2000, 3));
    }

    #[test]
    fn round_trip() {
        let mut spec = ExperimentSpec::parse(MINIMAL).unwrap();
        spec.inflows = Some(Inflows::List(vec![(400.0, 850.0), (1000.0, 550.0)]));
        spec.controller = Some("max-pressure:6".into());
        spec.train.batch_size = Some(16);
        spec.scenario.control =
            mixflow_core::sim::IntersectionControl::Signal(mixflow_core::baselines::SignalPlan::new(30.0, 20.0));
        assert_eq!(ExperimentSpec::parse(&spec.to_json()).unwrap(), spec);
    }
}
