//! Run configuration: one `[model]` table plus a list of `[[experiment]]`
//! tables, each tagged by `kind` and carrying a `label` that names its
//! output files. Unknown keys anywhere in the file are errors.

use anyhow::{bail, Context, Result};
use boolmodel::experiments::{
    BracketConfig, ChainTailConfig, ConfinedCrossingConfig, CrossingConfig, MomentSweepConfig,
};
use boolmodel::{ModelParams, RadiusDistribution};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Seed for the whole run; `--seed` overrides it.
    pub master_seed: u64,
    pub model: ModelSection,
    #[serde(rename = "experiment")]
    pub experiments: Vec<ExperimentEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub dimension: u32,
    pub intensity: f64,
    pub radius: RadiusDistribution,
}

/// One experiment to run. `label` must be unique per run; it becomes the
/// stem of the experiment's CSV files.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentEntry {
    pub label: String,
    #[serde(flatten)]
    pub kind: ExperimentKind,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExperimentKind {
    ChainTail(ChainTailConfig),
    CrossingDecay(CrossingConfig),
    MomentSweep(MomentSweepConfig),
    BracketThreshold(BracketConfig),
    ConfinedCrossing(ConfinedCrossingConfig),
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::ChainTail(_) => "chain_tail",
            ExperimentKind::CrossingDecay(_) => "crossing_decay",
            ExperimentKind::MomentSweep(_) => "moment_sweep",
            ExperimentKind::BracketThreshold(_) => "bracket_threshold",
            ExperimentKind::ConfinedCrossing(_) => "confined_crossing",
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in config {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let config: RunConfig = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<()> {
        // Surfaces dimension, intensity, and radius-law problems, including
        // laws whose d-th moment diverges (the occupied set is then all of
        // space almost surely and no experiment is meaningful).
        self.model_params()?;
        if self.experiments.is_empty() {
            bail!("config lists no experiments");
        }
        let mut seen = HashSet::new();
        for entry in &self.experiments {
            let label = &entry.label;
            if label.is_empty()
                || !label
                    .chars()
                    .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_' || c == '-')
            {
                bail!(
                    "label {label:?} must be nonempty lowercase ascii \
                     (letters, digits, '_', '-'); it names output files"
                );
            }
            if !seen.insert(label.clone()) {
                bail!("duplicate experiment label {label:?}");
            }
        }
        Ok(())
    }

    pub fn model_params(&self) -> Result<ModelParams> {
        Ok(ModelParams::new(
            self.model.dimension,
            self.model.intensity,
            self.model.radius.clone(),
        )?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        master_seed = 7

        [model]
        dimension = 2
        intensity = 0.15
        [model.radius]
        kind = "constant"
        value = 1.0

        [[experiment]]
        label = "tail"
        kind = "chain_tail"
        replicates = 100
    "#;

    #[test]
    fn minimal_config_parses() {
        let config = RunConfig::parse(MINIMAL).unwrap();
        assert_eq!(config.master_seed, 7);
        assert_eq!(config.experiments.len(), 1);
        assert_eq!(config.experiments[0].kind.name(), "chain_tail");
    }

    #[test]
    fn unknown_top_level_key_is_rejected() {
        let text = format!("{MINIMAL}\nbogus = 1\n");
        assert!(RunConfig::parse(&text).is_err());
    }

    #[test]
    fn unknown_experiment_key_is_rejected() {
        let text = MINIMAL.replace("replicates = 100", "replicates = 100\nbogus = 1");
        let err = RunConfig::parse(&text).unwrap_err();
        assert!(format!("{err:#}").contains("bogus"), "{err:#}");
    }

    #[test]
    fn unknown_radius_key_is_rejected() {
        let text = MINIMAL.replace("value = 1.0", "value = 1.0\nbogus = 2.0");
        assert!(RunConfig::parse(&text).is_err());
    }

    #[test]
    fn unknown_kind_is_rejected() {
        let text = MINIMAL.replace("kind = \"chain_tail\"", "kind = \"sorcery\"");
        assert!(RunConfig::parse(&text).is_err());
    }

    #[test]
    fn space_filling_law_is_rejected_with_the_reason() {
        let text = MINIMAL.replace(
            "kind = \"constant\"\n        value = 1.0",
            "kind = \"pareto\"\n        scale = 1.0\n        exponent = 1.5",
        );
        let err = RunConfig::parse(&text).unwrap_err();
        let msg = format!("{err:#}");
        assert!(msg.contains("covers all of"), "{msg}");
    }

    #[test]
    fn duplicate_labels_are_rejected() {
        let text = format!(
            "{MINIMAL}\n[[experiment]]\nlabel = \"tail\"\nkind = \"confined_crossing\"\nalphas = [1.0]\nreplicates = 1\n"
        );
        let err = RunConfig::parse(&text).unwrap_err();
        assert!(format!("{err:#}").contains("duplicate"), "{err:#}");
    }

    #[test]
    fn bad_labels_are_rejected() {
        let text = MINIMAL.replace("label = \"tail\"", "label = \"Tail Fit\"");
        assert!(RunConfig::parse(&text).is_err());
    }

    #[test]
    fn policy_table_round_trips() {
        let text = format!(
            "{MINIMAL}\n[experiment.policy]\ninitial_radius = 6.0\nmax_doublings = 4\nvolume_samples = 100\nchain_cap = 16\n"
        );
        let config = RunConfig::parse(&text).unwrap();
        match &config.experiments[0].kind {
            ExperimentKind::ChainTail(c) => {
                assert_eq!(c.policy.initial_radius, 6.0);
                assert_eq!(c.policy.chain_cap, 16);
            }
            other => panic!("wrong kind {other:?}"),
        }
        // The echo must parse back to the same experiments.
        let echoed = toml::to_string(&config).unwrap();
        let again = RunConfig::parse(&echoed).unwrap();
        assert_eq!(again.master_seed, config.master_seed);
        assert_eq!(again.experiments.len(), config.experiments.len());
    }
}
