//! Experiment configuration: a TOML file describing the data source, split,
//! model kind, and hyperparameters. Every artifact a run writes embeds the
//! hash of this config plus the seed, so outputs are traceable to inputs.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::mtldnn::HyperConfig;
use crate::nl::TieSpec;
use crate::search::{SearchSpace, Selection};
use crate::synth::DgpSpec;
use crate::{Error, Real, Result};

/// The model grid: the multitask network, its two boundary configurations,
/// and the four classical baselines.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Mtldnn,
    DnnSpt,
    DnnJoint,
    NlC,
    NlNc,
    MnlSpt,
    MnlJoint,
}

impl ModelKind {
    pub const ALL: [ModelKind; 7] = [
        ModelKind::Mtldnn,
        ModelKind::DnnSpt,
        ModelKind::DnnJoint,
        ModelKind::NlC,
        ModelKind::NlNc,
        ModelKind::MnlSpt,
        ModelKind::MnlJoint,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ModelKind::Mtldnn => "mtldnn",
            ModelKind::DnnSpt => "dnn-spt",
            ModelKind::DnnJoint => "dnn-joint",
            ModelKind::NlC => "nl-c",
            ModelKind::NlNc => "nl-nc",
            ModelKind::MnlSpt => "mnl-spt",
            ModelKind::MnlJoint => "mnl-joint",
        }
    }

    pub fn is_network(&self) -> bool {
        matches!(self, ModelKind::Mtldnn | ModelKind::DnnSpt | ModelKind::DnnJoint)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSource {
    pub path: PathBuf,
    pub features: Vec<String>,
    #[serde(default)]
    pub av_specific: Vec<String>,
    pub k_r: usize,
    pub k_s: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSource {
    pub spec: DgpSpec,
    pub n_rp: usize,
    pub n_sp: usize,
    pub seed: u64,
}

/// Exactly one of `csv` / `synth` must be present.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub csv: Option<CsvSource>,
    pub synth: Option<SynthSource>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    /// Training fraction, strictly inside (0, 1).
    pub ratio: Real,
    pub seed: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchConfig {
    pub space: SearchSpace,
    pub n_draws: usize,
    pub seed: u64,
    #[serde(default = "default_selection")]
    pub selection: Selection,
    #[serde(default = "default_top_k")]
    pub top_k: usize,
}

fn default_selection() -> Selection {
    Selection::TestRisk
}

fn default_top_k() -> usize {
    10
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub hyper: Option<HyperConfig>,
    pub search: Option<SearchConfig>,
    #[serde(default)]
    pub ties: Vec<TieSpec>,
}

/// Settings for the `compare` subcommand: one search drives the network
/// columns, the ties drive the constrained nested-logit column.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareConfig {
    pub search: SearchConfig,
    pub ties: Vec<TieSpec>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataConfig,
    pub split: SplitConfig,
    /// Standardize features with train-split statistics before fitting.
    #[serde(default = "default_true")]
    pub standardize: bool,
    pub model: ModelConfig,
    pub compare: Option<CompareConfig>,
    pub out_dir: Option<PathBuf>,
}

fn default_true() -> bool {
    true
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let config: ExperimentConfig = toml::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.data.csv, &self.data.synth) {
            (Some(_), Some(_)) => {
                return Err(Error::Config(
                    "data: give either csv or synth, not both".into(),
                ))
            }
            (None, None) => {
                return Err(Error::Config("data: either csv or synth is required".into()))
            }
            _ => {}
        }
        if let Some(csv) = &self.data.csv {
            if csv.features.is_empty() {
                return Err(Error::Config("data.csv.features is empty".into()));
            }
            if csv.k_r == 0 || csv.k_s < csv.k_r {
                return Err(Error::Config(
                    "data.csv: need 0 < k_r <= k_s".into(),
                ));
            }
        }
        if let Some(synth) = &self.data.synth {
            synth.spec.validate()?;
            if synth.n_rp + synth.n_sp == 0 {
                return Err(Error::Config("data.synth: no observations requested".into()));
            }
        }
        if !(self.split.ratio > 0.0 && self.split.ratio < 1.0) {
            return Err(Error::Config(format!(
                "split.ratio must lie in (0, 1), got {}",
                self.split.ratio
            )));
        }

        let m = &self.model;
        if !m.ties.is_empty() && m.kind != ModelKind::NlC {
            return Err(Error::Config(format!(
                "model.ties only applies to nl-c, not {}",
                m.kind.as_str()
            )));
        }
        if m.kind == ModelKind::NlC && m.ties.is_empty() {
            return Err(Error::Config("nl-c requires at least one tie".into()));
        }
        if m.kind.is_network() {
            if m.hyper.is_none() && m.search.is_none() {
                return Err(Error::Config(format!(
                    "{} needs model.hyper or model.search",
                    m.kind.as_str()
                )));
            }
        } else if m.hyper.is_some() || m.search.is_some() {
            return Err(Error::Config(format!(
                "model.hyper/model.search do not apply to {}",
                m.kind.as_str()
            )));
        }
        if let Some(h) = &m.hyper {
            h.validate()?;
            match m.kind {
                ModelKind::DnnSpt if h.m1 != 0 || h.lambda3 != 0.0 => {
                    return Err(Error::Config(
                        "dnn-spt requires m1 = 0 and lambda3 = 0".into(),
                    ))
                }
                ModelKind::DnnJoint if h.m2 != 0 => {
                    return Err(Error::Config("dnn-joint requires m2 = 0".into()))
                }
                _ => {}
            }
        }
        if let Some(s) = &m.search {
            validate_search(s, "model.search")?;
        }
        if let Some(c) = &self.compare {
            validate_search(&c.search, "compare.search")?;
            if c.ties.is_empty() {
                return Err(Error::Config(
                    "compare.ties must name at least one tied coefficient".into(),
                ));
            }
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form; stable across reruns and
    /// embedded in every artifact this config produces.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn validate_search(s: &SearchConfig, field: &str) -> Result<()> {
    s.space.validate()?;
    if s.n_draws == 0 {
        return Err(Error::Config(format!("{field}.n_draws must be positive")));
    }
    if s.top_k == 0 {
        return Err(Error::Config(format!("{field}.top_k must be positive")));
    }
    Ok(())
}
