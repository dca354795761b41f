//! Pipeline configuration: one TOML file, overridable per key from the
//! environment as `ASA__section__key=value`.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::backend::HttpGenerator;
use crate::error::{AsaError, Result};
use crate::features::{AblationToggles, Backends};
use crate::grammar::{load_few_shot, GecBackend, RuleGec, ServiceGec};
use crate::model::ModelConfig;
use crate::relevance::{
    ConceptImageTextEmbedder, ContextualEncoderBackend, HashedContextualEncoder, HashedTextEmbedder,
    HttpContextualEncoder, HttpImageTextEmbedder, HttpTextEmbedder, ImageTextEmbeddingBackend,
    NormalizerScope, QrProjection, TextEmbeddingBackend,
};
use crate::splitting::{Splitter, SplitterBackend};
use crate::syntax::RuleAnnotator;
use crate::traineval::TrainConfig;

pub const ENV_PREFIX: &str = "ASA__";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub manifest: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub generate: GenerateConfig,
    pub splits: SplitConfig,
    pub splitter: SplitterConfig,
    pub relevance: RelevanceConfig,
    pub grammar: GrammarConfig,
    pub syntax: SyntaxConfig,
    pub asr: AsrConfig,
    pub extract: ExtractConfig,
    pub features: AblationToggles,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            manifest: None,
            output_dir: PathBuf::from("asa-out"),
            seed: 0,
            generate: GenerateConfig::default(),
            splits: SplitConfig::default(),
            splitter: SplitterConfig::default(),
            relevance: RelevanceConfig::default(),
            grammar: GrammarConfig::default(),
            syntax: SyntaxConfig::default(),
            asr: AsrConfig::default(),
            extract: ExtractConfig::default(),
            features: AblationToggles::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateConfig {
    /// Where `asa generate` writes the corpus when no manifest path is given.
    pub dir: PathBuf,
    pub question_sets: usize,
    pub responses_per_set: usize,
    pub audio: bool,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        GenerateConfig {
            dir: PathBuf::from("corpus"),
            question_sets: 8,
            responses_per_set: 5,
            audio: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    /// Held-out question set; chosen from the seed when absent.
    pub unknown_set: Option<String>,
    pub ratios: (f64, f64, f64),
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            unknown_set: None,
            ratios: (0.8, 0.1, 0.1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitterKind {
    Llm,
    #[default]
    Fallback,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitterConfig {
    pub backend: SplitterKind,
    pub endpoint: Option<String>,
    pub strict: bool,
}

/// Backends are `hashed`/`concept` (built-in) or an `http(s)://` endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RelevanceConfig {
    pub text_backend: String,
    pub image_backend: String,
    pub qr_backend: String,
    /// Embedding widths of HTTP backends.
    pub text_dim: usize,
    pub image_dim: usize,
    pub qr_token_dim: usize,
    pub image_relevance: bool,
    pub normalizer_scope: NormalizerScope,
    pub qr_projection_seed: u64,
}

impl Default for RelevanceConfig {
    fn default() -> Self {
        RelevanceConfig {
            text_backend: "hashed".into(),
            image_backend: "concept".into(),
            qr_backend: "hashed".into(),
            text_dim: 384,
            image_dim: 512,
            qr_token_dim: 768,
            image_relevance: true,
            normalizer_scope: NormalizerScope::PerQuestion,
            qr_projection_seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GecKind {
    Service,
    #[default]
    Rules,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GrammarConfig {
    pub backend: GecKind,
    pub endpoint: Option<String>,
    pub few_shot: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntaxConfig {
    pub backend: String,
}

impl Default for SyntaxConfig {
    fn default() -> Self {
        SyntaxConfig {
            backend: "rules".into(),
        }
    }
}

/// Only manifest-supplied timestamps are supported.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AsrConfig {
    pub backend: String,
}

impl Default for AsrConfig {
    fn default() -> Self {
        AsrConfig {
            backend: "manifest".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractConfig {
    pub workers: usize,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        ExtractConfig { workers: 4 }
    }
}

fn parse_env_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Applies `ASA__a__b=value` as `a.b = value`; values parse as TOML and
/// fall back to plain strings.
pub fn apply_env_overrides(
    table: &mut toml::Table,
    vars: impl IntoIterator<Item = (String, String)>,
) -> Result<()> {
    let mut vars: Vec<(String, String)> = vars
        .into_iter()
        .filter(|(k, _)| k.starts_with(ENV_PREFIX))
        .collect();
    vars.sort();
    for (key, raw) in vars {
        let path: Vec<String> = key[ENV_PREFIX.len()..]
            .split("__")
            .map(|s| s.to_lowercase())
            .collect();
        if path.iter().any(String::is_empty) {
            return Err(AsaError::Config(format!("malformed override variable {key}")));
        }
        let (last, parents) = path.split_last().unwrap();
        let mut t = &mut *table;
        for p in parents {
            let entry = t
                .entry(p.clone())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()));
            t = entry
                .as_table_mut()
                .ok_or_else(|| AsaError::Config(format!("{key}: {p} is not a section")))?;
        }
        t.insert(last.clone(), parse_env_value(&raw));
    }
    Ok(())
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl PipelineConfig {
    /// Reads the file (if any), applies environment overrides, rejects
    /// unknown keys and resolves relative paths against the file's directory.
    pub fn load(path: Option<&Path>, env: impl IntoIterator<Item = (String, String)>) -> Result<Self> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| match e.kind() {
                    std::io::ErrorKind::NotFound => AsaError::MissingFile(p.to_path_buf()),
                    _ => AsaError::io(p, e),
                })?;
                text.parse::<toml::Table>()
                    .map_err(|e| AsaError::Config(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        apply_env_overrides(&mut table, env)?;
        let mut cfg: PipelineConfig = serde_path_to_error::deserialize(toml::Value::Table(table)).map_err(
            |e: serde_path_to_error::Error<toml::de::Error>| {
                let path = e.path().to_string();
                let msg = e.into_inner().message().to_string();
                match path.as_str() {
                    "." => AsaError::Config(msg),
                    _ => AsaError::Config(format!("{path}: {msg}")),
                }
            },
        )?;
        if let Some(base) = path.and_then(Path::parent) {
            if let Some(m) = &mut cfg.manifest {
                resolve(base, m);
            }
            resolve(base, &mut cfg.output_dir);
            resolve(base, &mut cfg.generate.dir);
            if let Some(f) = &mut cfg.grammar.few_shot {
                resolve(base, f);
            }
        }
        Ok(cfg)
    }

    /// Sets the top-level seed and the model and training seeds.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.model.seed = seed;
        self.train.seed = seed;
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.manifest
            .clone()
            .unwrap_or_else(|| self.generate.dir.join("manifest.jsonl"))
    }

    /// Checks values and that referenced files exist. `needs_manifest` is
    /// false for `generate`, which creates it.
    pub fn validate(&self, needs_manifest: bool) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        let (a, b, c) = self.splits.ratios;
        if (a + b + c - 1.0).abs() > 1e-9 || a < 0.0 || b < 0.0 || c < 0.0 {
            return Err(AsaError::Config(
                "splits.ratios must be non-negative and sum to 1".into(),
            ));
        }
        if self.extract.workers == 0 {
            return Err(AsaError::Config("extract.workers must be at least 1".into()));
        }
        if self.syntax.backend != "rules" {
            return Err(AsaError::Config(format!(
                "syntax.backend {:?} is not available; use \"rules\"",
                self.syntax.backend
            )));
        }
        if self.asr.backend != "manifest" {
            return Err(AsaError::Config(format!(
                "asr.backend {:?} is not available; supply word timestamps in the manifest",
                self.asr.backend
            )));
        }
        if self.splitter.backend == SplitterKind::Llm && self.splitter.endpoint.is_none() {
            return Err(AsaError::Config(
                "splitter.backend = \"llm\" needs splitter.endpoint".into(),
            ));
        }
        if self.grammar.backend == GecKind::Service {
            if self.grammar.endpoint.is_none() {
                return Err(AsaError::Config(
                    "grammar.backend = \"service\" needs grammar.endpoint".into(),
                ));
            }
            if let Some(f) = &self.grammar.few_shot {
                if !f.is_file() {
                    return Err(AsaError::MissingFile(f.clone()));
                }
            }
        }
        for (key, v) in [
            ("relevance.text_backend", &self.relevance.text_backend),
            ("relevance.image_backend", &self.relevance.image_backend),
            ("relevance.qr_backend", &self.relevance.qr_backend),
        ] {
            let builtin = matches!(
                (key, v.as_str()),
                (_, "hashed") | ("relevance.image_backend", "concept")
            );
            if !builtin && !is_url(v) {
                return Err(AsaError::Config(format!(
                    "{key} {v:?} is neither a built-in backend nor an http(s) URL"
                )));
            }
        }
        if needs_manifest {
            let m = self.manifest_path();
            if !m.is_file() {
                return Err(AsaError::MissingFile(m));
            }
        }
        Ok(())
    }

    /// Constructs the configured backends.
    pub fn backends(&self) -> Result<Backends> {
        let r = &self.relevance;
        let splitter = match self.splitter.backend {
            SplitterKind::Fallback => Splitter::Fallback,
            SplitterKind::Llm => {
                let url = self.splitter.endpoint.as_deref().unwrap_or_default();
                Splitter::Model(
                    SplitterBackend::new(Arc::new(HttpGenerator::new(url))).strict(self.splitter.strict),
                )
            }
        };
        let text: Arc<dyn TextEmbeddingBackend> = if is_url(&r.text_backend) {
            Arc::new(HttpTextEmbedder {
                base: r.text_backend.clone(),
                dim: r.text_dim,
            })
        } else {
            Arc::new(HashedTextEmbedder::default())
        };
        let image: Arc<dyn ImageTextEmbeddingBackend> = if is_url(&r.image_backend) {
            Arc::new(HttpImageTextEmbedder {
                base: r.image_backend.clone(),
                dim: r.image_dim,
            })
        } else {
            Arc::new(ConceptImageTextEmbedder::default())
        };
        let contextual: Arc<dyn ContextualEncoderBackend> = if is_url(&r.qr_backend) {
            Arc::new(HttpContextualEncoder {
                base: r.qr_backend.clone(),
                dim: r.qr_token_dim,
            })
        } else {
            Arc::new(HashedContextualEncoder::default())
        };
        let gec: Arc<dyn GecBackend> = match self.grammar.backend {
            GecKind::Rules => Arc::new(RuleGec),
            GecKind::Service => {
                let few_shot = match &self.grammar.few_shot {
                    Some(p) => load_few_shot(p)?,
                    None => Vec::new(),
                };
                let url = self.grammar.endpoint.as_deref().unwrap_or_default();
                Arc::new(ServiceGec::new(Arc::new(HttpGenerator::new(url)), few_shot))
            }
        };
        let splitter_desc = match self.splitter.backend {
            SplitterKind::Fallback => "fallback".to_string(),
            SplitterKind::Llm => format!(
                "llm:{}:{}",
                self.splitter.endpoint.as_deref().unwrap_or_default(),
                if self.splitter.strict { "strict" } else { "lenient" }
            ),
        };
        let gec_desc = match self.grammar.backend {
            GecKind::Rules => "rules".to_string(),
            GecKind::Service => format!("service:{}", self.grammar.endpoint.as_deref().unwrap_or_default()),
        };
        let fingerprint = format!(
            "splitter={splitter_desc};text={};image={};qr={};gec={gec_desc};syntax={};qr_seed={}",
            r.text_backend, r.image_backend, r.qr_backend, self.syntax.backend, r.qr_projection_seed
        );
        Ok(Backends {
            splitter,
            text,
            image,
            projection: QrProjection::new(2 * contextual.token_dim(), r.qr_projection_seed),
            contextual,
            gec,
            annotator: Arc::new(RuleAnnotator),
            image_relevance: r.image_relevance,
            fingerprint,
        })
    }
}

fn is_url(s: &str) -> bool {
    s.starts_with("http://") || s.starts_with("https://")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
        pairs
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect()
    }

    #[test]
    fn defaults_match_the_documented_values() {
        let c = PipelineConfig::load(None, env(&[])).unwrap();
        assert_eq!(c.train.epochs, 32);
        assert_eq!(c.train.batch_size, 32);
        assert_eq!(c.train.learning_rate, 1e-5);
        assert_eq!(c.model.hidden_dim, 256);
        assert_eq!(c.splits.ratios, (0.8, 0.1, 0.1));
    }

    #[test]
    fn unknown_keys_are_named() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(&p, "[train]\nepochz = 3\n").unwrap();
        let e = PipelineConfig::load(Some(&p), env(&[])).unwrap_err();
        assert!(matches!(&e, AsaError::Config(m) if m.contains("epochz")), "{e}");
        assert_eq!(e.exit_code(), 1);
    }

    #[test]
    fn environment_overrides_file_values() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(
            &p,
            "output_dir = \"out\"\n[train]\nepochs = 3\ntarget = \"relevance\"\n",
        )
        .unwrap();
        let c = PipelineConfig::load(
            Some(&p),
            env(&[
                ("ASA__train__epochs", "7"),
                ("ASA__relevance__qr_backend", "http://localhost:9/x"),
                ("ASA__features__grammar", "false"),
                ("OTHER", "1"),
            ]),
        )
        .unwrap();
        assert_eq!(c.train.epochs, 7);
        assert_eq!(c.train.target, crate::corpus::ScoreTarget::Relevance);
        assert_eq!(c.relevance.qr_backend, "http://localhost:9/x");
        assert!(!c.features.grammar);
        assert_eq!(c.output_dir, dir.path().join("out"));
    }

    #[test]
    fn validation_rejects_bad_values() {
        let mut c = PipelineConfig::default();
        c.model.n_heads = 3;
        assert!(matches!(c.validate(false), Err(AsaError::Config(_))));
        let mut c = PipelineConfig::default();
        c.relevance.text_backend = "sbert".into();
        assert!(matches!(c.validate(false), Err(AsaError::Config(m)) if m.contains("text_backend")));
        let c = PipelineConfig {
            manifest: Some("/nonexistent/m.jsonl".into()),
            ..Default::default()
        };
        assert!(matches!(c.validate(true), Err(AsaError::MissingFile(_))));
    }

    #[test]
    fn default_backends_are_the_rule_doubles() {
        let b = PipelineConfig::default().backends().unwrap();
        assert_eq!(b.fingerprint, Backends::rule_doubles(0).fingerprint);
    }
}
