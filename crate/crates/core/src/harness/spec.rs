//! Experiment specifications, read from and written to TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::attention::{RelaxMode, RelaxationConfig};
use crate::error::{invalid, Result};
use crate::harness::tasks::{SequenceTaskSpec, ToyTranslateSpec};
use crate::harness::window_classify::{WindowModelConfig, WindowTaskSpec, WindowTrainConfig};
use crate::training::TrainConfig;
use crate::transformer::ModelConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    Copy,
    Reverse,
    ToyTranslate,
    WindowClassify,
}

impl TaskKind {
    pub fn is_sequence(self) -> bool {
        !matches!(self, TaskKind::WindowClassify)
    }
}

/// Which attention layers a relaxation setting applies to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RelaxSite {
    None,
    #[serde(rename = "self")]
    SelfAttn,
    Cross,
    Both,
}

impl RelaxSite {
    pub fn as_str(self) -> &'static str {
        match self {
            RelaxSite::None => "none",
            RelaxSite::SelfAttn => "self",
            RelaxSite::Cross => "cross",
            RelaxSite::Both => "both",
        }
    }
}

/// One row of the relaxation grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelaxSetting {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub site: RelaxSite,
    #[serde(default)]
    pub gamma: f64,
    /// Variance of the fuzzy γ distribution; 0 means fixed γ.
    #[serde(default)]
    pub sigma2: f64,
    #[serde(default = "matched")]
    pub mode: RelaxMode,
}

fn matched() -> RelaxMode {
    RelaxMode::Matched
}

impl RelaxSetting {
    pub fn baseline() -> Self {
        Self {
            name: Some("baseline".into()),
            site: RelaxSite::None,
            gamma: 0.0,
            sigma2: 0.0,
            mode: RelaxMode::Off,
        }
    }

    pub fn at(site: RelaxSite, gamma: f64, mode: RelaxMode) -> Self {
        Self {
            name: None,
            site,
            gamma,
            sigma2: 0.0,
            mode,
        }
    }

    pub fn label(&self) -> String {
        match &self.name {
            Some(n) => n.clone(),
            None if self.site == RelaxSite::None => "baseline".into(),
            None if self.sigma2 > 0.0 => format!(
                "{}-g{}-s2{}-{}",
                self.site.as_str(),
                self.gamma,
                self.sigma2,
                mode_str(self.mode)
            ),
            None => format!("{}-g{}-{}", self.site.as_str(), self.gamma, mode_str(self.mode)),
        }
    }

    /// The relaxation config for one site.
    pub fn config(&self) -> RelaxationConfig {
        if self.site == RelaxSite::None {
            return RelaxationConfig::off();
        }
        RelaxationConfig {
            gamma0: self.gamma,
            sigma2: self.sigma2,
            mode: self.mode,
            fuzzy: self.sigma2 > 0.0,
        }
    }

    /// `(self-attention, cross-attention)` configs.
    pub fn configs(&self) -> (RelaxationConfig, RelaxationConfig) {
        let on = self.config();
        let off = RelaxationConfig::off();
        match self.site {
            RelaxSite::None => (off, off),
            RelaxSite::SelfAttn => (on, off),
            RelaxSite::Cross => (off, on),
            RelaxSite::Both => (on, on),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.config().validate()
    }
}

fn mode_str(mode: RelaxMode) -> &'static str {
    match mode {
        RelaxMode::Off => "off",
        RelaxMode::TrainOnly => "train-only",
        RelaxMode::Matched => "matched",
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LmCorpus {
    InDomain,
    Extended,
}

impl LmCorpus {
    pub fn as_str(self) -> &'static str {
        match self {
            LmCorpus::InDomain => "in-domain",
            LmCorpus::Extended => "extended",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LmSpec {
    pub corpora: Vec<LmCorpus>,
    pub k: f64,
    pub lambdas: Vec<f64>,
}

impl Default for LmSpec {
    fn default() -> Self {
        Self {
            corpora: vec![LmCorpus::InDomain, LmCorpus::Extended],
            k: 0.1,
            lambdas: vec![0.05, 0.1, 0.15, 0.2],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecodeSpec {
    pub beam: usize,
    pub eos_margin: f64,
    pub length_norm: bool,
    /// Hypotheses may run this many tokens past the source length.
    pub extra_len: usize,
}

impl Default for DecodeSpec {
    fn default() -> Self {
        Self {
            beam: 4,
            eos_margin: 0.0,
            length_norm: true,
            extra_len: 4,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskData {
    pub sequence: SequenceTaskSpec,
    pub toy_translate: ToyTranslateSpec,
    pub window: WindowTaskSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    pub task: TaskKind,
    pub seeds: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub data: TaskData,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub window_model: WindowModelConfig,
    #[serde(default)]
    pub window_train: WindowTrainConfig,
    #[serde(default)]
    pub decode: DecodeSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lm: Option<LmSpec>,
    pub relax: Vec<RelaxSetting>,
}

impl ExperimentSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// Every field, defaults included.
    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// SHA-256 of the materialized TOML, hex encoded.
    pub fn config_hash(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.to_toml()?.as_bytes())))
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(invalid("experiment name must be a non-empty path component"));
        }
        if self.seeds.is_empty() {
            return Err(invalid("seed list is empty"));
        }
        if self.relax.is_empty() {
            return Err(invalid("relaxation grid is empty"));
        }
        let mut labels: Vec<String> = self.relax.iter().map(RelaxSetting::label).collect();
        labels.sort();
        if labels.windows(2).any(|w| w[0] == w[1]) {
            return Err(invalid("relaxation settings must have distinct labels"));
        }
        for r in &self.relax {
            r.validate()?;
            if self.task == TaskKind::WindowClassify && matches!(r.site, RelaxSite::Cross | RelaxSite::Both) {
                return Err(invalid("window classification has no cross attention"));
            }
        }
        if let Some(lm) = &self.lm {
            if lm.corpora.is_empty() || lm.lambdas.is_empty() {
                return Err(invalid("LM corpora and λ grid must be non-empty"));
            }
            if lm.lambdas.iter().any(|l| !(*l >= 0.0)) {
                return Err(invalid("λ values must be non-negative"));
            }
            if !(lm.k > 0.0) {
                return Err(invalid("LM smoothing k must be positive"));
            }
            if !self.task.is_sequence() {
                return Err(invalid("LM fusion applies to sequence tasks only"));
            }
        }
        if self.decode.beam == 0 {
            return Err(invalid("beam must be at least 1"));
        }
        self.train.validate()
    }

    /// Small defaults for a given task; useful as a starting point.
    pub fn preset(name: &str, task: TaskKind) -> Self {
        Self {
            name: name.into(),
            task,
            seeds: vec![0],
            output_dir: None,
            data: TaskData::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            window_model: WindowModelConfig::default(),
            window_train: WindowTrainConfig::default(),
            decode: DecodeSpec::default(),
            lm: None,
            relax: vec![RelaxSetting::baseline()],
        }
    }
}
