//! Experiment configuration: one JSON file, overridden by command-line
//! flags, over built-in defaults. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use isodr_core::corpus::SynthParams;
use isodr_core::flows::{FlowArch, FlowTrainConfig, GlowConfig, NiceConfig};
use isodr_core::scenario::ScenarioParams;
use isodr_core::scoring::{check_configuration, Granularity, ScorerKind};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::provenance::sha256_hex;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Scorer {
    Colbert,
    Repbert,
}

impl Scorer {
    pub fn kind(self) -> ScorerKind {
        match self {
            Scorer::Colbert => ScorerKind::ColBert,
            Scorer::Repbert => ScorerKind::RepBert,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scorer::Colbert => "colbert",
            Scorer::Repbert => "repbert",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Post {
    None,
    Whiten,
    Nice,
    Glow,
}

impl Post {
    pub fn name(self) -> &'static str {
        match self {
            Post::None => "none",
            Post::Whiten => "whiten",
            Post::Nice => "nice",
            Post::Glow => "glow",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum GranularityArg {
    TokenWise,
    SequenceWise,
}

impl GranularityArg {
    pub fn granularity(self) -> Granularity {
        match self {
            GranularityArg::TokenWise => Granularity::TokenWise,
            GranularityArg::SequenceWise => Granularity::SequenceWise,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WhiteningSection {
    pub eps_rel: f64,
}

impl Default for WhiteningSection {
    fn default() -> Self {
        Self { eps_rel: isodr_core::whitening::DEFAULT_EPS_REL }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NiceSection {
    pub couplings: usize,
    pub hidden_layers: usize,
    pub hidden_width: usize,
}

impl Default for NiceSection {
    fn default() -> Self {
        let c = NiceConfig::default();
        Self { couplings: c.couplings, hidden_layers: c.hidden_layers, hidden_width: c.hidden_width }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GlowSection {
    pub levels: usize,
    pub depth: usize,
    pub hidden_layers: usize,
    pub hidden_width: usize,
}

impl Default for GlowSection {
    fn default() -> Self {
        let c = GlowConfig::default();
        Self { levels: c.levels, depth: c.depth, hidden_layers: c.hidden_layers, hidden_width: c.hidden_width }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub shuffle: bool,
}

impl Default for TrainSection {
    fn default() -> Self {
        let c = FlowTrainConfig::default();
        Self { learning_rate: c.learning_rate, batch_size: c.batch_size, epochs: c.epochs, shuffle: c.shuffle }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeasureSection {
    /// Rows per batch; `None` measures the whole matrix at once.
    pub batch_size: Option<usize>,
    pub outlier_factor: f64,
    /// Sampled cosine pairs; `None` picks exact or sampled by size.
    pub cosine_pairs: Option<usize>,
}

impl Default for MeasureSection {
    fn default() -> Self {
        Self { batch_size: None, outlier_factor: isodr_core::isotropy::DEFAULT_OUTLIER_FACTOR, cosine_pairs: None }
    }
}

/// Generator settings; axis scales are spaced linearly from
/// `axis_scale_min` to `axis_scale_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub n_queries: usize,
    pub n_docs: usize,
    pub tokens_per_query: usize,
    pub tokens_per_doc: usize,
    pub dim: usize,
    pub offset_magnitude: f64,
    pub axis_scale_min: f64,
    pub axis_scale_max: f64,
    pub outlier_dims: usize,
    pub outlier_scale: f64,
}

impl Default for SynthSection {
    fn default() -> Self {
        Self {
            n_queries: 256,
            n_docs: 384,
            tokens_per_query: 4,
            tokens_per_doc: 8,
            dim: 64,
            offset_magnitude: 10.0,
            axis_scale_min: 0.1,
            axis_scale_max: 1.0,
            outlier_dims: 4,
            outlier_scale: 20.0,
        }
    }
}

impl SynthSection {
    pub fn params(&self, seed: u64) -> SynthParams {
        let axis_scales = (0..self.dim)
            .map(|j| {
                let t = if self.dim > 1 { j as f64 / (self.dim - 1) as f64 } else { 0.0 };
                self.axis_scale_min + t * (self.axis_scale_max - self.axis_scale_min)
            })
            .collect();
        SynthParams {
            n_queries: self.n_queries,
            n_docs: self.n_docs,
            tokens_per_query: self.tokens_per_query,
            tokens_per_doc: self.tokens_per_doc,
            dim: self.dim,
            offset_magnitude: self.offset_magnitude,
            axis_scales,
            outlier_dims: self.outlier_dims,
            outlier_scale: self.outlier_scale,
            seed,
        }
    }
}

/// Designed re-ranking scenario. When `target_seed` is set, the `scenario`
/// command also builds a shifted target corpus from that seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSection {
    pub n_queries: usize,
    pub n_docs: usize,
    pub candidates_per_query: usize,
    pub dim: usize,
    pub dominant_dims: usize,
    pub offset_magnitude: f64,
    pub dominant_noise: f64,
    pub signal_scale: f64,
    pub token_noise: f64,
    pub query_tokens: usize,
    pub doc_tokens: usize,
    pub offset_shift: f64,
    pub axis_rescale: f64,
    pub target_seed: Option<u64>,
    pub target_offset_shift: f64,
    pub target_axis_rescale: f64,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        let p = ScenarioParams::default();
        let t = ScenarioParams::shifted(0);
        Self {
            n_queries: p.n_queries,
            n_docs: p.n_docs,
            candidates_per_query: p.candidates_per_query,
            dim: p.dim,
            dominant_dims: p.dominant_dims,
            offset_magnitude: p.offset_magnitude,
            dominant_noise: p.dominant_noise,
            signal_scale: p.signal_scale,
            token_noise: p.token_noise,
            query_tokens: p.query_tokens,
            doc_tokens: p.doc_tokens,
            offset_shift: p.offset_shift,
            axis_rescale: p.axis_rescale,
            target_seed: None,
            target_offset_shift: t.offset_shift,
            target_axis_rescale: t.axis_rescale,
        }
    }
}

impl ScenarioSection {
    pub fn params(&self, seed: u64) -> ScenarioParams {
        ScenarioParams {
            n_queries: self.n_queries,
            n_docs: self.n_docs,
            candidates_per_query: self.candidates_per_query,
            dim: self.dim,
            dominant_dims: self.dominant_dims,
            offset_magnitude: self.offset_magnitude,
            dominant_noise: self.dominant_noise,
            signal_scale: self.signal_scale,
            token_noise: self.token_noise,
            query_tokens: self.query_tokens,
            doc_tokens: self.doc_tokens,
            offset_shift: self.offset_shift,
            axis_rescale: self.axis_rescale,
            seed,
        }
    }

    pub fn target_params(&self) -> Option<ScenarioParams> {
        self.target_seed.map(|seed| ScenarioParams {
            offset_shift: self.target_offset_shift,
            axis_rescale: self.target_axis_rescale,
            ..self.params(seed)
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub source_corpus: Option<PathBuf>,
    /// Defaults to `source_corpus` (in-distribution).
    pub target_corpus: Option<PathBuf>,
    pub qrels: Option<PathBuf>,
    pub candidates: Option<PathBuf>,
    pub scorer: Scorer,
    pub post: Post,
    pub granularity: GranularityArg,
    /// Fit one transform on query rows and another on document rows.
    pub separate_fits: bool,
    pub whitening: WhiteningSection,
    pub nice: NiceSection,
    pub glow: GlowSection,
    pub train: TrainSection,
    pub measure: MeasureSection,
    pub synth: SynthSection,
    pub scenario: ScenarioSection,
    pub seed: u64,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            source_corpus: None,
            target_corpus: None,
            qrels: None,
            candidates: None,
            scorer: Scorer::Repbert,
            post: Post::None,
            granularity: GranularityArg::TokenWise,
            separate_fits: false,
            whitening: WhiteningSection::default(),
            nice: NiceSection::default(),
            glow: GlowSection::default(),
            train: TrainSection::default(),
            measure: MeasureSection::default(),
            synth: SynthSection::default(),
            scenario: ScenarioSection::default(),
            seed: 0,
            output_dir: PathBuf::from("out"),
        }
    }
}

fn required<'a>(v: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
    v.as_deref().ok_or_else(|| CliError::Config(format!("{key} is not set (config key or flag)")))
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Canonical JSON of the effective configuration.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn sha256(&self) -> String {
        sha256_hex(self.canonical_json().as_bytes())
    }

    /// Cross-field checks that must pass before any work starts.
    pub fn validate(&self) -> Result<()> {
        check_configuration(self.scorer.kind(), self.granularity.granularity())?;
        Ok(())
    }

    pub fn source(&self) -> Result<&Path> {
        required(&self.source_corpus, "source_corpus")
    }

    pub fn target(&self) -> Result<&Path> {
        match &self.target_corpus {
            Some(p) => Ok(p),
            None => self.source(),
        }
    }

    /// True when the target is a different file from the source.
    pub fn is_ood(&self) -> Result<bool> {
        Ok(self.target()? != self.source()?)
    }

    pub fn qrels_path(&self) -> Result<&Path> {
        required(&self.qrels, "qrels")
    }

    pub fn candidates_path(&self) -> Result<&Path> {
        required(&self.candidates, "candidates")
    }

    pub fn flow_arch(&self) -> Result<FlowArch> {
        match self.post {
            Post::Nice => Ok(FlowArch::Nice(NiceConfig {
                couplings: self.nice.couplings,
                hidden_layers: self.nice.hidden_layers,
                hidden_width: self.nice.hidden_width,
            })),
            Post::Glow => Ok(FlowArch::Glow(GlowConfig {
                levels: self.glow.levels,
                depth: self.glow.depth,
                hidden_layers: self.glow.hidden_layers,
                hidden_width: self.glow.hidden_width,
            })),
            other => Err(CliError::Config(format!("post '{}' is not a flow", other.name()))),
        }
    }

    pub fn train_config(&self) -> FlowTrainConfig {
        FlowTrainConfig {
            learning_rate: self.train.learning_rate,
            batch_size: self.train.batch_size,
            epochs: self.train.epochs,
            shuffle: self.train.shuffle,
            seed: self.seed,
            ..FlowTrainConfig::default()
        }
    }

    /// Run tag: scorer, post-processor, config hash prefix and seed.
    pub fn run_tag(&self) -> String {
        format!("isodr-{}-{}-{}-s{}", self.scorer.name(), self.post.name(), &self.sha256()[..12], self.seed)
    }
}
