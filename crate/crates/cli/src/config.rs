//! Experiment configuration, read from TOML.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use fec_core::corrector::{Endpoint, EvidenceFillParams, LabelFilter};
use fec_core::dataset::Split;
use fec_core::lm::LmConfig;
use fec_core::maskers::{MaskStrategy, MaskerConfig};
use fec_core::retrieval::{EvidenceMode, RetrieveParams, DEFAULT_WINDOW};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const SEED_ENV: &str = "FEC_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorrectorKind {
    Copy,
    EvidenceFill,
    LmFill,
    External,
}

impl CorrectorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CorrectorKind::Copy => "copy",
            CorrectorKind::EvidenceFill => "evidence-fill",
            CorrectorKind::LmFill => "lm-fill",
            CorrectorKind::External => "external",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub dataset: PathBuf,
    pub corpus: PathBuf,
    /// Split that is masked, corrected and scored.
    pub eval_split: Split,
    /// Split used for training pairs.
    pub train_split: Split,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig { dataset: PathBuf::from("claims.jsonl"), corpus: PathBuf::from("corpus.jsonl"), eval_split: Split::Test, train_split: Split::Train }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrievalConfig {
    pub window: usize,
    pub k: usize,
    pub page_fanout: usize,
    pub evidence: EvidenceMode,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        let p = RetrieveParams::default();
        RetrievalConfig { window: DEFAULT_WINDOW, k: p.k, page_fanout: p.page_fanout, evidence: EvidenceMode::Retrieved }
    }
}

impl RetrievalConfig {
    pub fn params(&self) -> RetrieveParams {
        RetrieveParams { k: self.k, page_fanout: self.page_fanout }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaskingConfig {
    pub strategy: MaskStrategy,
    /// Masker used to build training pairs; when set, the corrector is tuned on them.
    pub train_strategy: Option<MaskStrategy>,
    pub mask_ratio: f64,
    pub lime_samples: usize,
    pub lime_features: usize,
    pub kernel_width: Option<f64>,
    pub ridge: f64,
}

impl Default for MaskingConfig {
    fn default() -> Self {
        let m = MaskerConfig::default();
        MaskingConfig {
            strategy: m.strategy,
            train_strategy: None,
            mask_ratio: m.mask_ratio,
            lime_samples: m.lime_samples,
            lime_features: m.lime_features,
            kernel_width: m.kernel_width,
            ridge: m.ridge,
        }
    }
}

impl MaskingConfig {
    pub fn masker(&self, strategy: MaskStrategy, seed: u64) -> MaskerConfig {
        MaskerConfig {
            strategy,
            mask_ratio: self.mask_ratio,
            lime_samples: self.lime_samples,
            lime_features: self.lime_features,
            kernel_width: self.kernel_width,
            ridge: self.ridge,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorrectorConfig {
    pub kind: CorrectorKind,
    pub beam: usize,
    pub max_span: usize,
    pub lambda: f64,
    /// `tcp://host:port` or `cmd:program args`, for the external corrector.
    pub endpoint: Option<String>,
    pub timeout_secs: f64,
}

impl Default for CorrectorConfig {
    fn default() -> Self {
        let p = EvidenceFillParams::default();
        CorrectorConfig { kind: CorrectorKind::EvidenceFill, beam: p.beam, max_span: p.max_span, lambda: p.lambda, endpoint: None, timeout_secs: 30.0 }
    }
}

impl CorrectorConfig {
    pub fn fill_params(&self, lambda: f64) -> EvidenceFillParams {
        EvidenceFillParams { beam: self.beam, max_span: self.max_span, lambda }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub labels: LabelFilter,
    /// Candidate fluency weights tried when tuning on training pairs.
    pub lambda_grid: Vec<f64>,
    /// Training pairs used for tuning (the first ones in id order).
    pub tune_limit: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig { labels: LabelFilter::SupportsOnly, lambda_grid: vec![0.25, 0.5, 0.75], tune_limit: 200 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub retrieval: RetrievalConfig,
    #[serde(default)]
    pub lm: LmConfig,
    #[serde(default)]
    pub masking: MaskingConfig,
    #[serde(default)]
    pub corrector: CorrectorConfig,
    #[serde(default)]
    pub training: TrainingConfig,
    /// Relative paths resolve against this directory (the config file's).
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_output() -> PathBuf {
    PathBuf::from("run")
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            output_dir: default_output(),
            data: DataConfig::default(),
            retrieval: RetrievalConfig::default(),
            lm: LmConfig::default(),
            masking: MaskingConfig::default(),
            corrector: CorrectorConfig::default(),
            training: TrainingConfig::default(),
            base_dir: PathBuf::from("."),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, base_dir: &Path) -> anyhow::Result<Self> {
        let mut cfg: ExperimentConfig = toml::from_str(text).context("invalid config")?;
        cfg.base_dir = base_dir.to_path_buf();
        Ok(cfg)
    }

    /// Read a config file and apply the seed override from the environment.
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let base = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        let mut cfg = Self::from_toml(&text, base)?;
        cfg.apply_env()?;
        Ok(cfg)
    }

    pub fn apply_env(&mut self) -> anyhow::Result<()> {
        if let Ok(s) = std::env::var(SEED_ENV) {
            self.seed = s.trim().parse().with_context(|| format!("{SEED_ENV}={s:?} is not an unsigned integer"))?;
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn dataset_path(&self) -> PathBuf {
        self.resolve(&self.data.dataset)
    }

    pub fn corpus_path(&self) -> PathBuf {
        self.resolve(&self.data.corpus)
    }

    pub fn output_path(&self) -> PathBuf {
        self.resolve(&self.output_dir)
    }

    /// SHA-256 of the canonical JSON form; paths are hashed as written.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }

    pub fn endpoint(&self) -> anyhow::Result<Endpoint> {
        match &self.corrector.endpoint {
            Some(e) => e.parse().map_err(|m: String| anyhow::anyhow!(m)),
            None => bail!("corrector kind external needs corrector.endpoint"),
        }
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        for (what, p) in [("dataset", self.dataset_path()), ("corpus", self.corpus_path())] {
            if !p.is_file() {
                bail!("{what} file {} does not exist", p.display());
            }
        }
        if self.retrieval.window == 0 || self.retrieval.k == 0 || self.retrieval.page_fanout == 0 {
            bail!("retrieval window, k and page_fanout must be positive");
        }
        self.masking.masker(self.masking.strategy, self.seed).validate()?;
        if !(0.0..=1.0).contains(&self.corrector.lambda) || self.training.lambda_grid.iter().any(|l| !(0.0..=1.0).contains(l)) {
            bail!("lambda values must lie in [0, 1]");
        }
        if self.corrector.kind == CorrectorKind::External {
            self.endpoint()?;
        }
        if !(self.corrector.timeout_secs > 0.0) {
            bail!("corrector.timeout_secs must be positive");
        }
        if self.masking.strategy == MaskStrategy::WhiteBox || self.masking.train_strategy == Some(MaskStrategy::WhiteBox) {
            bail!("the white-box masker is not available in this build");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = ExperimentConfig::default();
        let back = ExperimentConfig::from_toml(&cfg.to_toml(), Path::new(".")).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
    }

    #[test]
    fn pinned_defaults() {
        let cfg = ExperimentConfig::default();
        assert_eq!((cfg.retrieval.window, cfg.retrieval.k, cfg.retrieval.page_fanout), (50, 2, 5));
        assert_eq!(cfg.masking.mask_ratio, 0.5);
        assert_eq!(cfg.masking.lime_features, 6);
        assert_eq!((cfg.corrector.beam, cfg.corrector.max_span, cfg.corrector.lambda), (8, 6, 0.5));
    }

    #[test]
    fn partial_file_fills_defaults() {
        let cfg = ExperimentConfig::from_toml("seed = 9\n[masking]\nstrategy = \"random\"\n", Path::new("/x")).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.masking.strategy, MaskStrategy::Random);
        assert_eq!(cfg.retrieval.k, 2);
        assert_eq!(cfg.dataset_path(), PathBuf::from("/x/claims.jsonl"));
        assert!(ExperimentConfig::from_toml("bogus = 1\n", Path::new(".")).is_err());
    }
}
