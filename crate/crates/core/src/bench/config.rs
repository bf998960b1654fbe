use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{BenchError, Result};
use crate::corpus::{InteractionFormat, SplitStrategy};
use crate::earlyfusion::{CcaSplit, FusionOperator, FusionStage};
use crate::latefusion::{AggregationRule, MissingRank, WeightSchedule, DEFAULT_RRF_K};
use crate::metrics::{ColdRateMode, DEFAULT_K};
use crate::models::{HyperParams, ModelFamily};
use crate::textprep::{MetadataFormat, Modality};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Run directory name; derived from the model and config hash when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    /// Base for every relative path in the file.
    #[serde(default = "default_root")]
    pub root_path: PathBuf,
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub modality: ModalityConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fusion: Option<FusionConfig>,
    pub model: ModelConfig,
    #[serde(default, alias = "experiment")]
    pub runtime: RuntimeConfig,
    #[serde(default)]
    pub evaluation: EvaluationConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_root() -> PathBuf {
    PathBuf::from(".")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    #[serde(default = "default_dataset_name")]
    pub name: String,
    #[serde(default = "default_format")]
    pub format: InteractionFormat,
    pub path: PathBuf,
    /// Item titles, genres and tags; enables text views and calibration.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metadata: Option<PathBuf>,
    #[serde(default = "default_metadata_format")]
    pub metadata_format: MetadataFormat,
}

fn default_dataset_name() -> String {
    "custom".into()
}

fn default_format() -> InteractionFormat {
    InteractionFormat::Tsv
}

fn default_metadata_format() -> MetadataFormat {
    MetadataFormat::Tsv
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitConfig {
    pub strategy: SplitStrategy,
    pub test_ratio: f64,
    /// 0 disables k-core filtering.
    pub k_core: usize,
    pub simulate_cold_start: bool,
    pub cold_fraction: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            strategy: SplitStrategy::Random,
            test_ratio: 0.2,
            k_core: 0,
            simulate_cold_start: false,
            cold_fraction: 0.2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AudioVariant {
    Blf,
    #[serde(alias = "i_ivec")]
    IVec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VisualVariant {
    Cnn,
    Avf,
}

impl AudioVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            AudioVariant::Blf => "blf",
            AudioVariant::IVec => "i_vec",
        }
    }
}

impl VisualVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            VisualVariant::Cnn => "cnn",
            VisualVariant::Avf => "avf",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModalityConfig {
    /// Synopsis provider used when `augmentation` is on.
    pub llm: String,
    pub augmentation: bool,
    /// Substitute the plain text view when the provider fails.
    pub fallback: bool,
    pub text_variant: String,
    pub audio_variant: AudioVariant,
    pub visual_variant: VisualVariant,
    /// Defaults to every modality with an embeddings entry.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub enabled: Option<Vec<Modality>>,
    /// Embedding table path per modality. `{variant}` expands to the
    /// modality's variant and `{mode}` to `A` or `NA`.
    pub embeddings: BTreeMap<Modality, String>,
    pub normalize: bool,
}

impl Default for ModalityConfig {
    fn default() -> Self {
        Self {
            llm: "stub".into(),
            augmentation: false,
            fallback: true,
            text_variant: "st".into(),
            audio_variant: AudioVariant::Blf,
            visual_variant: VisualVariant::Cnn,
            enabled: None,
            embeddings: BTreeMap::new(),
            normalize: true,
        }
    }
}

impl ModalityConfig {
    pub const PROVIDERS: [&'static str; 1] = ["stub"];

    pub fn enabled_modalities(&self) -> Vec<Modality> {
        let mut m = self.enabled.clone().unwrap_or_else(|| self.embeddings.keys().copied().collect());
        m.sort();
        m.dedup();
        m
    }

    pub fn variant(&self, modality: Modality) -> &str {
        match modality {
            Modality::Audio => self.audio_variant.as_str(),
            Modality::Visual => self.visual_variant.as_str(),
            Modality::Text => &self.text_variant,
        }
    }

    pub fn text_mode(&self) -> &'static str {
        if self.augmentation {
            "A"
        } else {
            "NA"
        }
    }

    /// The configured table path for `modality` with placeholders expanded.
    pub fn embedding_path(&self, modality: Modality) -> Option<String> {
        self.embeddings.get(&modality).map(|t| {
            t.replace("{variant}", self.variant(modality))
                .replace("{mode}", self.text_mode())
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorName {
    Concat,
    Pca,
    Cca,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionStageName {
    Early,
    Mid,
    Late,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionConfig {
    /// Feature operator; in the late stage it prepares content features.
    #[serde(default = "default_operator")]
    pub operator: OperatorName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default = "default_stage")]
    pub stage: FusionStageName,
    #[serde(default)]
    pub cca_split: CcaSplit,
    /// Backbones whose lists are merged in the late stage.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub systems: Vec<ModelFamily>,
    #[serde(default = "default_rule")]
    pub rule: AggregationRule,
    #[serde(default = "default_rrf_k")]
    pub rrf_k: u32,
    #[serde(default = "default_weights")]
    pub weights: WeightSchedule,
    #[serde(default)]
    pub missing_rank: MissingRank,
}

fn default_operator() -> OperatorName {
    OperatorName::Concat
}

fn default_stage() -> FusionStageName {
    FusionStageName::Early
}

fn default_rule() -> AggregationRule {
    AggregationRule::Rrf
}

fn default_rrf_k() -> u32 {
    DEFAULT_RRF_K
}

fn default_weights() -> WeightSchedule {
    WeightSchedule::Uniform
}

impl FusionConfig {
    /// The feature operator with its parameter, once validated.
    pub fn feature_operator(&self) -> FusionOperator {
        match self.operator {
            OperatorName::Concat => FusionOperator::Concat,
            OperatorName::Pca => FusionOperator::Pca { rho: self.rho.unwrap_or(1.0) },
            OperatorName::Cca => FusionOperator::Cca { k: self.k.unwrap_or(1) },
        }
    }

    /// Stage at which content features are fused.
    pub fn feature_stage(&self) -> FusionStage {
        match self.stage {
            FusionStageName::Mid => FusionStage::Mid,
            _ => FusionStage::Early,
        }
    }
}

/// Model-selection criterion, written `ndcg@K` or `recall@K`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Objective {
    Ndcg(usize),
    Recall(usize),
}

impl Default for Objective {
    fn default() -> Self {
        Objective::Ndcg(DEFAULT_K)
    }
}

impl Objective {
    pub fn k(self) -> usize {
        match self {
            Objective::Ndcg(k) | Objective::Recall(k) => k,
        }
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Objective::Ndcg(k) => write!(f, "ndcg@{k}"),
            Objective::Recall(k) => write!(f, "recall@{k}"),
        }
    }
}

impl FromStr for Objective {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let bad = || format!("objective {s:?} must be ndcg@K or recall@K with K >= 1");
        let (name, k) = s.split_once('@').ok_or_else(bad)?;
        let k: usize = k.parse().ok().filter(|&k| k > 0).ok_or_else(bad)?;
        match name {
            "ndcg" => Ok(Objective::Ndcg(k)),
            "recall" => Ok(Objective::Recall(k)),
            _ => Err(bad()),
        }
    }
}

impl TryFrom<String> for Objective {
    type Error = String;

    fn try_from(s: String) -> std::result::Result<Self, String> {
        s.parse()
    }
}

impl From<Objective> for String {
    fn from(o: Objective) -> String {
        o.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub family: ModelFamily,
    /// Overrides of the family defaults, by hyper-parameter name.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub hyperparams: BTreeMap<String, f64>,
    /// Candidate values per hyper-parameter, enumerated in file order.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<IndexMap<String, Vec<f64>>>,
    #[serde(default)]
    pub objective: Objective,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RuntimeConfig {
    pub seed: u64,
    /// Global epoch count; a model-level `epochs` takes precedence.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epochs: Option<usize>,
    /// One training epoch everywhere.
    pub fast_prototype: bool,
    pub parallel_hpo: bool,
    pub workers: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub use_gpu: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gpu_id: Option<i64>,
}

impl Default for RuntimeConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            epochs: None,
            fast_prototype: false,
            parallel_hpo: false,
            workers: 1,
            use_gpu: None,
            gpu_id: None,
        }
    }
}

impl RuntimeConfig {
    /// Grid-search worker threads.
    pub fn hpo_workers(&self) -> usize {
        if self.parallel_hpo {
            self.workers.max(1)
        } else {
            1
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvaluationConfig {
    pub k: usize,
    pub cold_mode: ColdRateMode,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            k: DEFAULT_K,
            cold_mode: ColdRateMode::Item,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("outputs") }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum LoadMode {
    /// Unknown keys are errors.
    #[default]
    Strict,
    /// Unknown keys are reported as warnings.
    Lax,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub warnings: Vec<String>,
}

/// Reads and validates a YAML config. A relative `root_path` is taken
/// relative to the file's directory.
pub fn load_config(path: impl AsRef<Path>, mode: LoadMode) -> Result<LoadedConfig> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(BenchError::ConfigNotFound(path.display().to_string()));
    }
    let text = fs::read_to_string(path).map_err(super::io_error(path))?;
    let mut loaded = parse_config(&text, mode)?;
    if loaded.config.root_path.is_relative() {
        let dir = path.parent().unwrap_or(Path::new(""));
        loaded.config.root_path = dir.join(&loaded.config.root_path);
    }
    Ok(loaded)
}

/// Parses and validates YAML text; relative paths are left as written.
pub fn parse_config(text: &str, mode: LoadMode) -> Result<LoadedConfig> {
    let mut value: serde_yaml::Value =
        serde_yaml::from_str(text).map_err(|e| BenchError::Config(e.to_string()))?;
    // `model: mf` is shorthand for `model: {family: mf}`
    if let Some(map) = value.as_mapping_mut() {
        if let Some(m) = map.get_mut("model") {
            if m.is_string() {
                let mut inner = serde_yaml::Mapping::new();
                inner.insert("family".into(), m.clone());
                *m = serde_yaml::Value::Mapping(inner);
            }
        }
    }
    let mut unknown = Vec::new();
    let mut track = |p: serde_ignored::Path<'_>| unknown.push(p.to_string());
    let de = serde_ignored::Deserializer::new(value, &mut track);
    let config: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let at = e.path().to_string();
        let inner = e.into_inner();
        if at == "." {
            BenchError::Config(inner.to_string())
        } else {
            BenchError::Config(format!("{at}: {inner}"))
        }
    })?;
    let mut warnings = Vec::new();
    if !unknown.is_empty() {
        match mode {
            LoadMode::Strict => {
                return Err(BenchError::Config(format!("unknown keys: {}", unknown.join(", "))))
            }
            LoadMode::Lax => warnings.extend(unknown.iter().map(|k| format!("ignoring unknown key {k}"))),
        }
    }
    warnings.extend(config.validate()?);
    Ok(LoadedConfig { config, warnings })
}

fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(BenchError::Config(msg.into()))
}

impl ExperimentConfig {
    /// Checks cross-field constraints and returns non-fatal warnings.
    pub fn validate(&self) -> Result<Vec<String>> {
        let mut warnings = Vec::new();
        let s = &self.split;
        if !(s.test_ratio > 0.0 && s.test_ratio < 1.0) {
            return invalid(format!("split.test_ratio must lie in (0, 1), got {}", s.test_ratio));
        }
        if s.simulate_cold_start && !(s.cold_fraction > 0.0 && s.cold_fraction < 1.0) {
            return invalid(format!("split.cold_fraction must lie in (0, 1), got {}", s.cold_fraction));
        }
        if self.evaluation.k == 0 {
            return invalid("evaluation.k must be positive");
        }
        if self.runtime.workers == 0 {
            return invalid("runtime.workers must be positive");
        }
        if self.runtime.epochs == Some(0) {
            return invalid("runtime.epochs must be positive");
        }
        if self.runtime.use_gpu.is_some() || self.runtime.gpu_id.is_some() {
            warnings.push("runtime.use_gpu and runtime.gpu_id are ignored; training runs on the CPU".into());
        }
        let m = &self.modality;
        if m.augmentation && !ModalityConfig::PROVIDERS.contains(&m.llm.as_str()) {
            return invalid(format!(
                "modality.llm: provider {:?} is not available, expected one of {:?}",
                m.llm,
                ModalityConfig::PROVIDERS
            ));
        }
        if m.augmentation && self.dataset.metadata.is_none() {
            return invalid("modality.augmentation requires dataset.metadata");
        }
        for modality in m.enabled_modalities() {
            if !m.embeddings.contains_key(&modality) {
                return invalid(format!("modality.embeddings has no entry for enabled modality {modality}"));
            }
        }

        let mut scratch = self.base_hyper(self.model.family);
        for (name, &v) in &self.model.hyperparams {
            scratch
                .set(name, v)
                .map_err(|e| BenchError::Config(format!("model.hyperparams.{name}: {e}")))?;
        }
        scratch.validate().map_err(|e| BenchError::Config(format!("model.hyperparams: {e}")))?;
        if let Some(grid) = &self.model.grid {
            if grid.is_empty() {
                return invalid("model.grid must name at least one hyper-parameter");
            }
            for (name, values) in grid {
                if values.is_empty() {
                    return invalid(format!("model.grid.{name} has no candidate values"));
                }
                for &v in values {
                    scratch
                        .set(name, v)
                        .map_err(|e| BenchError::Config(format!("model.grid.{name}: {e}")))?;
                }
            }
        }

        let families = self.systems();
        if let Some(f) = &self.fusion {
            match f.operator {
                OperatorName::Pca => match f.rho {
                    Some(r) if r > 0.0 && r <= 1.0 => {}
                    Some(r) => return invalid(format!("fusion.rho must lie in (0, 1], got {r}")),
                    None => return invalid("fusion.operator pca requires fusion.rho"),
                },
                OperatorName::Cca => match f.k {
                    Some(k) if k > 0 => {}
                    Some(_) => return invalid("fusion.k must be positive"),
                    None => return invalid("fusion.operator cca requires fusion.k"),
                },
                OperatorName::Concat => {}
            }
            if f.stage == FusionStageName::Late {
                if f.systems.len() < 2 {
                    return invalid("fusion.stage late requires at least two fusion.systems");
                }
                if let WeightSchedule::Explicit { weights } = &f.weights {
                    if weights.len() != f.systems.len() {
                        return invalid(format!(
                            "fusion.weights lists {} weights for {} systems",
                            weights.len(),
                            f.systems.len()
                        ));
                    }
                }
            } else if !f.systems.is_empty() {
                warnings.push("fusion.systems is only used by the late stage".into());
            }
            if families.iter().all(|f| !f.uses_features()) {
                warnings.push(format!(
                    "fusion block ignored: {} does not use item features",
                    self.model.family
                ));
            }
        }
        for fam in &families {
            if fam.uses_features() && m.enabled_modalities().is_empty() {
                return invalid(format!("model {fam} needs at least one enabled modality with embeddings"));
            }
        }
        Ok(warnings)
    }

    /// Backbones trained by this run: the late-fusion systems, or the model.
    pub fn systems(&self) -> Vec<ModelFamily> {
        match &self.fusion {
            Some(f) if f.stage == FusionStageName::Late => f.systems.clone(),
            _ => vec![self.model.family],
        }
    }

    pub fn is_late(&self) -> bool {
        matches!(&self.fusion, Some(f) if f.stage == FusionStageName::Late)
    }

    /// Family defaults, then the global epoch count, then model-level
    /// overrides (which apply only to the configured model family), then
    /// fast-prototype mode.
    pub fn base_hyper(&self, family: ModelFamily) -> HyperParams {
        let mut hp = HyperParams::default_for(family);
        hp.seed = self.runtime.seed;
        if let Some(e) = self.runtime.epochs {
            hp.epochs = e;
        }
        if family == self.model.family {
            for (name, &v) in &self.model.hyperparams {
                // bad names and values are rejected by validate
                let _ = hp.set(name, v);
            }
        }
        if self.runtime.fast_prototype {
            hp.epochs = 1;
        }
        hp
    }

    pub fn resolve(&self, p: impl AsRef<Path>) -> PathBuf {
        let p = p.as_ref();
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root_path.join(p)
        }
    }

    pub fn to_yaml(&self) -> String {
        serde_yaml::to_string(self).expect("configs always serialize")
    }

    /// SHA-256 over the canonical form of every field that can change a
    /// result. Worker counts, accelerator keys, the run name and the output
    /// directory are excluded.
    pub fn config_hash(&self) -> String {
        let mut c = self.clone();
        c.name = None;
        c.runtime.workers = 1;
        c.runtime.parallel_hpo = false;
        c.runtime.use_gpu = None;
        c.runtime.gpu_id = None;
        c.output = OutputConfig::default();
        let canonical = serde_json::to_string(&c).expect("configs always serialize");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    /// Explicit run name, or `<model>-<hash prefix>`.
    pub fn run_name(&self) -> String {
        self.name.clone().unwrap_or_else(|| {
            let label = self.systems().iter().map(|f| f.as_str()).collect::<Vec<_>>().join("+");
            format!("{label}-{}", &self.config_hash()[..12])
        })
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.output.dir).join(self.run_name())
    }
}
