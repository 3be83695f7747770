use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use propsynth::audit::AuditConfig;
use propsynth::evolve::{
    EvolveConfig, MutationConfig, MutationWeights, Objective, PropertyMutation,
};
use propsynth::graph::{CatalogConfig, OpKind, SizeDistribution};
use propsynth::par::Execution;
use propsynth::synth::SynthConfig;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    #[default]
    Greedy,
    Stochastic,
    Enumerative,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvaluatorChoice {
    /// Closed-form FLOP and parameter counts plus the surrogate accuracy.
    #[default]
    Static,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthesisSection {
    pub algorithm: Algorithm,
    pub compress: bool,
    pub max_steps: usize,
    pub extra_steps: usize,
    pub max_evaluations: u64,
    pub execution: Execution,
}

impl Default for SynthesisSection {
    fn default() -> Self {
        let s = SynthConfig::default();
        Self {
            algorithm: Algorithm::Greedy,
            compress: s.compress,
            max_steps: s.max_steps,
            extra_steps: s.extra_steps,
            max_evaluations: propsynth::synth::SynthesisLimits::default().max_evaluations,
            execution: s.execution,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MutationSection {
    pub depth_keep: f64,
    pub depth_step: u32,
    pub shape_drop: f64,
    pub pairing_drop: f64,
    pub share_prob: f64,
    pub weights: MutationWeights,
    pub selection_mean: f64,
    pub resamples: usize,
}

impl Default for MutationSection {
    fn default() -> Self {
        let p = PropertyMutation::default();
        let m = MutationConfig::default();
        Self {
            depth_keep: p.depth_keep,
            depth_step: p.depth_step,
            shape_drop: p.shape_drop,
            pairing_drop: p.pairing_drop,
            share_prob: m.share_prob,
            weights: m.weights,
            selection_mean: m.size.mean,
            resamples: m.resamples,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolutionSection {
    pub trials: usize,
    pub k_percent: f64,
    pub primary: Objective,
    pub secondaries: Vec<Objective>,
}

impl Default for EvolutionSection {
    fn default() -> Self {
        let e = EvolveConfig::default();
        Self {
            trials: e.trials,
            k_percent: e.k_percent,
            primary: e.primary,
            secondaries: e.secondaries,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleSection {
    pub ranks: Vec<usize>,
    pub chains: usize,
    pub max_chain_len: usize,
    pub covering_samples: usize,
    pub epsilon: u32,
    /// Check exactly these op kinds' default instances; an empty list checks nothing.
    pub only_kinds: Option<Vec<String>>,
}

impl Default for OracleSection {
    fn default() -> Self {
        let a = AuditConfig::default();
        Self {
            ranks: a.ranks,
            chains: a.chains,
            max_chain_len: a.max_chain_len,
            covering_samples: a.covering_samples,
            epsilon: a.epsilon,
            only_kinds: None,
        }
    }
}

/// Everything a command may read from `--config`. Unknown keys are rejected.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub evaluator: EvaluatorChoice,
    pub catalog: CatalogConfig,
    pub synthesis: SynthesisSection,
    pub mutation: MutationSection,
    pub evolution: EvolutionSection,
    pub oracle: OracleSection,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let cfg: RunConfig = match path {
            None => RunConfig::default(),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading config {}", p.display()))?;
                toml::from_str(&text).with_context(|| format!("parsing config {}", p.display()))?
            }
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.mutation;
        for (name, p) in [
            ("mutation.depth_keep", m.depth_keep),
            ("mutation.shape_drop", m.shape_drop),
            ("mutation.pairing_drop", m.pairing_drop),
            ("mutation.share_prob", m.share_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                bail!("{name} = {p} is not a probability");
            }
        }
        self.evolve_config()
            .validate()
            .map_err(anyhow::Error::msg)?;
        Ok(())
    }

    /// The seed from the flag, else from the config; commands that sample require one.
    pub fn seed(&self, flag: Option<u64>) -> Result<u64> {
        match flag.or(self.seed) {
            Some(s) => Ok(s),
            None => bail!("a seed is required: pass --seed or set `seed` in the config"),
        }
    }

    pub fn synth_config(&self) -> SynthConfig {
        SynthConfig {
            catalog: self.catalog.clone(),
            compress: self.synthesis.compress,
            extra_steps: self.synthesis.extra_steps,
            max_steps: self.synthesis.max_steps,
            execution: self.synthesis.execution,
        }
    }

    pub fn evolve_config(&self) -> EvolveConfig {
        let m = &self.mutation;
        EvolveConfig {
            trials: self.evolution.trials,
            k_percent: self.evolution.k_percent,
            primary: self.evolution.primary,
            secondaries: self.evolution.secondaries.clone(),
            mutation: MutationConfig {
                weights: m.weights,
                share_prob: m.share_prob,
                property: PropertyMutation {
                    depth_keep: m.depth_keep,
                    depth_step: m.depth_step,
                    shape_drop: m.shape_drop,
                    pairing_drop: m.pairing_drop,
                },
                size: SizeDistribution {
                    mean: m.selection_mean,
                },
                resamples: m.resamples,
                synth: self.synth_config(),
            },
        }
    }

    pub fn audit_config(&self, seed: u64, corrupt: Option<OpKind>) -> Result<AuditConfig> {
        let o = &self.oracle;
        let kinds = match &o.only_kinds {
            None => None,
            Some(names) => Some(
                names
                    .iter()
                    .map(|k| OpKind::parse(k).with_context(|| format!("unknown op kind `{k}`")))
                    .collect::<Result<Vec<_>>>()?,
            ),
        };
        Ok(AuditConfig {
            catalog: self.catalog.clone(),
            kinds,
            ranks: o.ranks.clone(),
            chains: o.chains,
            max_chain_len: o.max_chain_len,
            chain_rank: 3,
            covering_samples: o.covering_samples,
            epsilon: o.epsilon,
            seed,
            execution: self.synthesis.execution,
            corrupt,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = RunConfig::default();
        let text = toml::to_string(&cfg).unwrap();
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn rejects_bad_probabilities_and_keys() {
        let bad: RunConfig = toml::from_str("[mutation]\nshare_prob = 1.5\n").unwrap();
        assert!(bad.validate().is_err());
        assert!(toml::from_str::<RunConfig>("bogus = 1\n").is_err());
    }
}
