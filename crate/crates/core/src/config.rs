//! Experiment configuration: one TOML file with `[channels]`, `[sampler]`,
//! `[arch]`, `[solver]` and `[predict]` sections, overridable through
//! `SALNET_<SECTION>_<KEY>` environment variables.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::channels::ChannelConfig;
use crate::cnn::{ArchPreset, Init, LayerSpec, NetworkModel, Shape, SolverConfig};
use crate::error::{Error, Result};
use crate::sampler::SamplerConfig;

pub const ENV_PREFIX: &str = "SALNET_";
const SECTIONS: [&str; 5] = ["channels", "sampler", "arch", "solver", "predict"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelsSection {
    pub config: ChannelConfig,
}

impl Default for ChannelsSection {
    fn default() -> Self {
        ChannelsSection { config: ChannelConfig::K4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerSection {
    pub seed: u64,
    pub patch_size: usize,
    pub epsilon: f64,
    pub depth: usize,
    pub max_salient_per_frame: usize,
    pub nonsalient_per_frame: usize,
    pub sigma_px: Option<f64>,
    pub balance: bool,
}

impl Default for SamplerSection {
    fn default() -> Self {
        Self::from_params(0, &SamplerConfig::default())
    }
}

impl SamplerSection {
    pub fn from_params(seed: u64, p: &SamplerConfig) -> Self {
        SamplerSection {
            seed,
            patch_size: p.patch_size,
            epsilon: p.epsilon,
            depth: p.depth,
            max_salient_per_frame: p.max_salient_per_frame,
            nonsalient_per_frame: p.nonsalient_per_frame,
            sigma_px: p.sigma_px,
            balance: p.balance,
        }
    }

    pub fn params(&self) -> SamplerConfig {
        SamplerConfig {
            patch_size: self.patch_size,
            epsilon: self.epsilon,
            depth: self.depth,
            max_salient_per_frame: self.max_salient_per_frame,
            nonsalient_per_frame: self.nonsalient_per_frame,
            sigma_px: self.sigma_px,
            balance: self.balance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArchSection {
    pub preset: ArchPreset,
    /// Explicit layer list; overrides `preset` when present.
    pub layers: Option<Vec<LayerSpec>>,
    pub init: Init,
    pub init_seed: u64,
}

impl Default for ArchSection {
    fn default() -> Self {
        ArchSection {
            preset: ArchPreset::Caffenet,
            layers: None,
            init: Init::default(),
            init_seed: 0,
        }
    }
}

impl ArchSection {
    pub fn layers_for(&self, patch_size: usize) -> Vec<LayerSpec> {
        self.layers.clone().unwrap_or_else(|| self.preset.layers(patch_size))
    }

    /// A freshly initialized model for `channels`-deep `t×t` patches.
    pub fn build_model(&self, channels: usize, patch_size: usize) -> Result<NetworkModel> {
        NetworkModel::initialized(
            Shape::new(channels, patch_size, patch_size),
            self.layers_for(patch_size),
            self.init,
            self.init_seed,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictSection {
    /// Patch size for dense prediction; defaults to the model input size.
    pub patch_size: Option<usize>,
    /// Also write an 8-bit PGM next to every FMAP map.
    pub write_pgm: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub channels: ChannelsSection,
    pub sampler: SamplerSection,
    pub arch: ArchSection,
    pub solver: SolverConfig,
    pub predict: PredictSection,
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let table: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Self::from_table(table)
    }

    fn from_table(table: toml::Table) -> Result<Self> {
        let cfg: PipelineConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.solver.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("configuration serializes")
    }
}

/// Reads `path` (or defaults) and applies `SALNET_<SECTION>_<KEY>` overrides
/// from `env`. Values parse as TOML scalars, falling back to bare strings.
pub fn load_config<I>(path: Option<&Path>, env: I) -> Result<PipelineConfig>
where
    I: IntoIterator<Item = (String, String)>,
{
    let mut table: toml::Table = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
        }
        None => toml::Table::new(),
    };
    let mut overrides: Vec<(String, String)> = env.into_iter().filter(|(k, _)| k.starts_with(ENV_PREFIX)).collect();
    overrides.sort();
    for (key, raw) in overrides {
        let rest = key[ENV_PREFIX.len()..].to_ascii_lowercase();
        let Some((section, field)) = rest.split_once('_') else {
            continue;
        };
        if !SECTIONS.contains(&section) || field.is_empty() {
            continue;
        }
        let value = parse_scalar(&raw);
        let entry = table
            .entry(section.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        match entry {
            toml::Value::Table(t) => {
                t.insert(field.to_string(), value);
            }
            _ => return Err(Error::Config(format!("[{section}] is not a table"))),
        }
    }
    PipelineConfig::from_table(table)
}

fn parse_scalar(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cnn::Strategy;

    #[test]
    fn sections_parse() {
        let cfg = PipelineConfig::from_toml(
            r#"
            [channels]
            config = "8k"
            [sampler]
            patch_size = 24
            seed = 9
            [arch]
            preset = "compact"
            init = { scheme = "msra" }
            [solver]
            batch_size = 16
            strategy = "fixed_chunk"
            [predict]
            write_pgm = true
            "#,
        )
        .unwrap();
        assert_eq!(cfg.channels.config, ChannelConfig::K8);
        assert_eq!(cfg.sampler.patch_size, 24);
        assert_eq!(cfg.sampler.seed, 9);
        assert_eq!(cfg.sampler.epsilon, 0.04);
        assert_eq!(cfg.arch.preset, ArchPreset::Compact);
        assert_eq!(cfg.arch.init, Init::Msra);
        assert_eq!(cfg.solver.batch_size, 16);
        assert_eq!(cfg.solver.strategy, Strategy::FixedChunk);
        assert!(cfg.predict.write_pgm);
    }

    #[test]
    fn defaults_round_trip() {
        let cfg = PipelineConfig::default();
        assert_eq!(PipelineConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn environment_overrides_file() {
        let env = vec![
            ("SALNET_SOLVER_LEARNING_RATE".to_string(), "0.5".to_string()),
            ("SALNET_CHANNELS_CONFIG".to_string(), "3k".to_string()),
            ("SALNET_SAMPLER_SIGMA_PX".to_string(), "4.5".to_string()),
            ("HOME".to_string(), "/x".to_string()),
        ];
        let cfg = load_config(None, env).unwrap();
        assert_eq!(cfg.solver.learning_rate, 0.5);
        assert_eq!(cfg.channels.config, ChannelConfig::K3);
        assert_eq!(cfg.sampler.sigma_px, Some(4.5));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(PipelineConfig::from_toml("[solver]\nlearning_rat = 1.0").is_err());
        assert!(PipelineConfig::from_toml("[solver]\nbatch_size = 0").is_err());
    }
}
