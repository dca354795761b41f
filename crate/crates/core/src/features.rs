//! Feature extraction and assembly.
//!
//! Extraction turns one response into [`RawFeatures`]: backend outputs that
//! do not depend on anything fitted (raw similarities, the question–response
//! sequence, syntactic annotations, grammar edit labels, delivery vectors).
//! Raw features are cached on disk keyed by a content hash.
//!
//! A [`FeatureAssembler`] is fitted on the training split (similarity
//! normalizers, error taxonomy, syntax schema, delivery scaling) and turns
//! raw features into a [`FeatureBundle`] under a set of [`AblationToggles`].

use std::path::{Path, PathBuf};
use std::sync::Arc;

use ndarray::{concatenate, Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::container::Container;
use crate::corpus::{Manifest, QuestionSet, ResponseRecord, MAX_QUESTIONS};
use crate::delivery::{self, DELIVERY_DIM};
use crate::error::{AsaError, Result};
use crate::grammar::{self, coarse_label, freeze_taxonomy, ErrorTaxonomy, GecBackend, RuleGec, GRAMMAR_DIM};
use crate::model::{FeatureBundle, Stream};
use crate::relevance::{
    self, fit_normalizer_scoped, ConceptImageTextEmbedder, ContextualEncoderBackend, HashedContextualEncoder,
    HashedTextEmbedder, ImageTextEmbeddingBackend, NormalizerScope, QrProjection, RawSimilarity,
    SimilarityNormalizer, TextEmbeddingBackend, QR_DIM,
};
use crate::splitting::Splitter;
use crate::syntax::{RuleAnnotator, SyntacticAnnotationBackend, SyntaxSchema, TokenAnnotation};

pub const FEATURES_KIND: &str = "features";

/// Everything extraction needs, already constructed.
#[derive(Clone)]
pub struct Backends {
    pub splitter: Splitter,
    pub text: Arc<dyn TextEmbeddingBackend>,
    pub image: Arc<dyn ImageTextEmbeddingBackend>,
    pub contextual: Arc<dyn ContextualEncoderBackend>,
    pub gec: Arc<dyn GecBackend>,
    pub annotator: Arc<dyn SyntacticAnnotationBackend>,
    pub projection: QrProjection,
    /// Compute image–response similarities (requires readable images).
    pub image_relevance: bool,
    /// Identifies the backend selection; part of every content hash.
    pub fingerprint: String,
}

impl std::fmt::Debug for Backends {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Backends")
            .field("fingerprint", &self.fingerprint)
            .finish_non_exhaustive()
    }
}

impl Backends {
    /// Deterministic local stand-ins for every model backend.
    pub fn rule_doubles(projection_seed: u64) -> Self {
        let contextual = HashedContextualEncoder::default();
        Backends {
            splitter: Splitter::Fallback,
            text: Arc::new(HashedTextEmbedder::default()),
            image: Arc::new(ConceptImageTextEmbedder::default()),
            contextual: Arc::new(contextual),
            gec: Arc::new(RuleGec),
            annotator: Arc::new(RuleAnnotator),
            projection: QrProjection::new(2 * contextual.dim, projection_seed),
            image_relevance: true,
            fingerprint: format!("splitter=fallback;text=hashed;image=concept;qr=hashed;gec=rules;syntax=rules;qr_seed={projection_seed}"),
        }
    }
}

/// Per-response extraction output, before any fitted transform.
#[derive(Debug, Clone, PartialEq)]
pub struct RawFeatures {
    pub response_id: String,
    pub content_hash: String,
    pub transcript: String,
    /// Per question: exemplar segment vs response segment.
    pub er_split: Vec<RawSimilarity>,
    /// Per question: whole exemplar vs whole response.
    pub er_whole: Vec<RawSimilarity>,
    pub ir_split: Vec<RawSimilarity>,
    pub ir_whole: Vec<RawSimilarity>,
    pub image_checked: bool,
    /// Question–response rows for every answered question, in question order.
    pub qr_split: Array2<f64>,
    /// All questions against the whole response.
    pub qr_whole: Array2<f64>,
    pub annotations: Vec<TokenAnnotation>,
    pub grammar_labels: Vec<String>,
    /// W×14.
    pub delivery: Array2<f64>,
    pub acoustic: bool,
}

#[derive(Serialize, Deserialize)]
struct RawMeta {
    response_id: String,
    content_hash: String,
    transcript: String,
    er_split: Vec<RawSimilarity>,
    er_whole: Vec<RawSimilarity>,
    ir_split: Vec<RawSimilarity>,
    ir_whole: Vec<RawSimilarity>,
    image_checked: bool,
    annotations: Vec<TokenAnnotation>,
    grammar_labels: Vec<String>,
    acoustic: bool,
}

impl RawFeatures {
    pub fn to_container(&self) -> Container {
        let meta = RawMeta {
            response_id: self.response_id.clone(),
            content_hash: self.content_hash.clone(),
            transcript: self.transcript.clone(),
            er_split: self.er_split.clone(),
            er_whole: self.er_whole.clone(),
            ir_split: self.ir_split.clone(),
            ir_whole: self.ir_whole.clone(),
            image_checked: self.image_checked,
            annotations: self.annotations.clone(),
            grammar_labels: self.grammar_labels.clone(),
            acoustic: self.acoustic,
        };
        let mut c = Container::new(
            FEATURES_KIND,
            serde_json::to_value(meta).expect("meta serializes"),
        );
        c.insert2("qr_split", &self.qr_split);
        c.insert2("qr_whole", &self.qr_whole);
        c.insert2("delivery", &self.delivery);
        c
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        let m: RawMeta = serde_json::from_value(c.meta.clone())?;
        Ok(RawFeatures {
            response_id: m.response_id,
            content_hash: m.content_hash,
            transcript: m.transcript,
            er_split: m.er_split,
            er_whole: m.er_whole,
            ir_split: m.ir_split,
            ir_whole: m.ir_whole,
            image_checked: m.image_checked,
            qr_split: c.get2("qr_split")?,
            qr_whole: c.get2("qr_whole")?,
            annotations: m.annotations,
            grammar_labels: m.grammar_labels,
            delivery: c.get2("delivery")?,
            acoustic: m.acoustic,
        })
    }
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => AsaError::MissingFile(path.to_path_buf()),
        _ => AsaError::io(path, e),
    })
}

/// SHA-256 over the backend fingerprint, the question set, the response
/// record and the bytes of every file extraction reads.
pub fn content_hash(b: &Backends, qs: &QuestionSet, r: &ResponseRecord) -> Result<String> {
    let mut h = Sha256::new();
    let mut field = |bytes: &[u8]| {
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(bytes);
    };
    field(b.fingerprint.as_bytes());
    field(format!("image_relevance={}", b.image_relevance).as_bytes());
    field(&serde_json::to_vec(&(
        &qs.questions,
        &qs.exemplar_text,
        &qs.exemplar_segments,
    ))?);
    field(&serde_json::to_vec(&(&r.id, &r.transcript, &r.word_timestamps))?);
    if let Some(a) = &r.audio_ref {
        field(&read_bytes(a)?);
    }
    if b.image_relevance {
        field(&read_bytes(&qs.image_ref)?);
    }
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

fn qr_rows(b: &Backends, question: &str, response: &str) -> Result<Array2<f64>> {
    relevance::question_response_features(b.contextual.as_ref(), &b.projection, question, response)
}

fn stack(rows: Vec<Array2<f64>>, width: usize) -> Array2<f64> {
    if rows.is_empty() {
        return Array2::zeros((0, width));
    }
    let views: Vec<_> = rows.iter().map(|r| r.view()).collect();
    concatenate(Axis(0), &views).expect("equal widths")
}

pub fn extract_raw(b: &Backends, qs: &QuestionSet, r: &ResponseRecord) -> Result<RawFeatures> {
    let content_hash = content_hash(b, qs, r)?;
    let k = qs.k();
    if k > MAX_QUESTIONS {
        return Err(AsaError::Input(format!(
            "{} has {k} questions; at most {MAX_QUESTIONS}",
            qs.id
        )));
    }
    let response = b.splitter.split(&qs.questions, &r.transcript)?;
    let exemplar = match &qs.exemplar_segments {
        Some(segs) => segs.clone(),
        None => b.splitter.split(&qs.questions, &qs.exemplar_text)?.segments,
    };

    let mut er_split = Vec::with_capacity(k);
    for (e, seg) in exemplar.iter().zip(&response.segments) {
        let e = if e.trim().is_empty() { &qs.exemplar_text } else { e };
        er_split.push(relevance::exemplar_response_similarity(b.text.as_ref(), e, seg)?);
    }
    let er_all = relevance::exemplar_response_similarity(b.text.as_ref(), &qs.exemplar_text, &r.transcript)?;
    let er_whole = vec![er_all; k];

    let (ir_split, ir_whole) = if b.image_relevance {
        let img = relevance::load_image(&qs.image_ref)?;
        let mut split = Vec::with_capacity(k);
        for seg in &response.segments {
            split.push(relevance::image_response_similarity(b.image.as_ref(), &img, seg)?);
        }
        let all = relevance::image_response_similarity(b.image.as_ref(), &img, &r.transcript)?;
        (split, vec![all; k])
    } else {
        (vec![None; k], vec![None; k])
    };

    let mut rows = Vec::new();
    for (q, seg) in qs.questions.iter().zip(&response.segments) {
        if !seg.trim().is_empty() {
            rows.push(qr_rows(b, q, seg)?);
        }
    }
    let qr_split = stack(rows, QR_DIM);
    let qr_whole = qr_rows(b, &qs.questions.join(" "), &r.transcript)?;

    let empty = r.transcript.trim().is_empty();
    let annotations = if empty {
        Vec::new()
    } else {
        b.annotator.annotate(&r.transcript)?
    };
    let grammar_labels = if empty {
        Vec::new()
    } else {
        grammar::analyze(b.gec.as_ref(), b.annotator.as_ref(), &r.transcript)?.labels()
    };

    let (delivery, acoustic) = match (&r.word_timestamps, &r.audio_ref) {
        (Some(w), _) if w.is_empty() => (Array2::zeros((0, DELIVERY_DIM)), false),
        (Some(w), Some(a)) => {
            let d = delivery::delivery_features(&delivery::read_wav(a)?, w)?;
            (d.vectors, d.acoustic)
        }
        (Some(w), None) => {
            let d = delivery::delivery_features_from_transcript(w)?;
            (d.vectors, d.acoustic)
        }
        (None, _) => {
            return Err(AsaError::Input(format!(
                "{} has no word timestamps and no transcription backend is configured",
                r.id
            )))
        }
    };

    Ok(RawFeatures {
        response_id: r.id.clone(),
        content_hash,
        transcript: r.transcript.clone(),
        er_split,
        er_whole,
        ir_split,
        ir_whole,
        image_checked: b.image_relevance,
        qr_split,
        qr_whole,
        annotations,
        grammar_labels,
        delivery,
        acoustic,
    })
}

/// One `.asac` file per response under a directory.
#[derive(Debug, Clone)]
pub struct FeatureStore {
    pub dir: PathBuf,
}

impl FeatureStore {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        FeatureStore { dir: dir.into() }
    }

    pub fn path(&self, id: &str) -> PathBuf {
        self.dir.join(format!("{id}.asac"))
    }

    pub fn save(&self, raw: &RawFeatures) -> Result<()> {
        raw.to_container().save(&self.path(&raw.response_id))
    }

    pub fn load(&self, id: &str) -> Result<RawFeatures> {
        let p = self.path(id);
        if !p.is_file() {
            return Err(AsaError::MissingFile(p));
        }
        RawFeatures::from_container(&Container::load(&p, FEATURES_KIND)?)
    }

    pub fn load_all(&self, ids: &[String]) -> Result<Vec<RawFeatures>> {
        ids.iter().map(|id| self.load(id)).collect()
    }

    fn stored_hash(&self, id: &str) -> Option<String> {
        let c = Container::load(&self.path(id), FEATURES_KIND).ok()?;
        c.meta.get("content_hash")?.as_str().map(str::to_string)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractFailure {
    pub response_id: String,
    pub error: String,
    pub exit_code: i32,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractReport {
    pub computed: Vec<String>,
    pub cached: Vec<String>,
    pub failures: Vec<ExtractFailure>,
}

enum Outcome {
    Computed,
    Cached,
}

fn extract_one(b: &Backends, store: &FeatureStore, m: &Manifest, r: &ResponseRecord) -> Result<Outcome> {
    let qs = m.question_set(&r.question_set_id).ok_or_else(|| {
        AsaError::Referential(format!(
            "response {} cites unknown question set {:?}",
            r.id, r.question_set_id
        ))
    })?;
    let hash = content_hash(b, qs, r)?;
    if store.stored_hash(&r.id).as_deref() == Some(hash.as_str()) {
        return Ok(Outcome::Cached);
    }
    store.save(&extract_raw(b, qs, r)?)?;
    Ok(Outcome::Computed)
}

/// Extracts every response on a pool of `workers` threads. Responses whose
/// stored content hash matches are skipped; failures are collected, not
/// propagated.
pub fn extract_all(
    b: &Backends,
    manifest: &Manifest,
    store: &FeatureStore,
    workers: usize,
) -> Result<ExtractReport> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| AsaError::Config(format!("worker pool: {e}")))?;
    let outcomes: Vec<(String, Result<Outcome>)> = pool.install(|| {
        manifest
            .responses
            .par_iter()
            .map(|r| (r.id.clone(), extract_one(b, store, manifest, r)))
            .collect()
    });
    let mut report = ExtractReport::default();
    for (id, o) in outcomes {
        match o {
            Ok(Outcome::Computed) => report.computed.push(id),
            Ok(Outcome::Cached) => report.cached.push(id),
            Err(e) => {
                log::warn!("extraction failed for {id}: {e}");
                report.failures.push(ExtractFailure {
                    response_id: id,
                    exit_code: e.exit_code(),
                    error: e.to_string(),
                })
            }
        }
    }
    Ok(report)
}

/// Switches for the ablation grid. Every field defaults to the full system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationToggles {
    /// Per-question segments; off compares whole response and exemplar.
    pub response_splitting: bool,
    pub exemplar_response: bool,
    pub image_response: bool,
    /// Off zeroes both similarity vectors.
    pub multifaceted: bool,
    /// Off zeroes the grammar vector.
    pub grammar: bool,
    /// Off feeds raw counts instead of per-word frequencies.
    pub grammar_normalized: bool,
    /// Off collapses labels to operation:category.
    pub fine_grained_taxonomy: bool,
}

impl Default for AblationToggles {
    fn default() -> Self {
        AblationToggles {
            response_splitting: true,
            exemplar_response: true,
            image_response: true,
            multifaceted: true,
            grammar: true,
            grammar_normalized: true,
            fine_grained_taxonomy: true,
        }
    }
}

impl AblationToggles {
    /// Names of the fields whose values differ.
    pub fn diff(&self, other: &Self) -> Vec<String> {
        let a = serde_json::to_value(self).expect("toggles serialize");
        let b = serde_json::to_value(other).expect("toggles serialize");
        let (a, b) = (a.as_object().unwrap(), b.as_object().unwrap());
        a.iter()
            .filter(|(k, v)| b.get(*k) != Some(v))
            .map(|(k, _)| k.clone())
            .collect()
    }
}

/// Per-dimension z-scoring of delivery rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeliveryScaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl DeliveryScaler {
    /// Acoustic dimensions are fitted only on responses that have audio.
    pub fn fit(train: &[RawFeatures]) -> Self {
        let mut sum = [0.0; DELIVERY_DIM];
        let mut sq = [0.0; DELIVERY_DIM];
        let mut n = [0usize; DELIVERY_DIM];
        for r in train {
            for row in r.delivery.rows() {
                for (j, &v) in row.iter().enumerate() {
                    if r.acoustic || !delivery::ACOUSTIC_DIMS.contains(&j) {
                        sum[j] += v;
                        sq[j] += v * v;
                        n[j] += 1;
                    }
                }
            }
        }
        let mut mean = vec![0.0; DELIVERY_DIM];
        let mut std = vec![1.0; DELIVERY_DIM];
        for j in 0..DELIVERY_DIM {
            if n[j] > 0 {
                mean[j] = sum[j] / n[j] as f64;
                let var = (sq[j] / n[j] as f64 - mean[j] * mean[j]).max(0.0);
                if var.sqrt() > 1e-9 {
                    std[j] = var.sqrt();
                }
            }
        }
        DeliveryScaler { mean, std }
    }

    /// Zero-filled acoustic dimensions stay at 0, i.e. at the training mean.
    pub fn apply(&self, rows: &Array2<f64>, acoustic: bool) -> Array2<f64> {
        let mut out = rows.clone();
        for mut row in out.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = if !acoustic && delivery::ACOUSTIC_DIMS.contains(&j) {
                    0.0
                } else {
                    (*v - self.mean[j]) / self.std[j]
                };
            }
        }
        out
    }
}

/// Everything fitted on the training split that assembly needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureAssembler {
    pub toggles: AblationToggles,
    pub normalizer_scope: NormalizerScope,
    pub er_normalizer: Option<SimilarityNormalizer>,
    pub ir_normalizer: Option<SimilarityNormalizer>,
    pub taxonomy: ErrorTaxonomy,
    pub syntax_schema: SyntaxSchema,
    pub delivery_scaler: DeliveryScaler,
}

fn by_question(
    train: &[RawFeatures],
    pick: impl Fn(&RawFeatures) -> Vec<RawSimilarity>,
) -> Vec<Vec<RawSimilarity>> {
    let mut out = vec![Vec::new(); MAX_QUESTIONS];
    for r in train {
        for (i, s) in pick(r).into_iter().enumerate() {
            out[i].push(s);
        }
    }
    out
}

impl FeatureAssembler {
    pub fn fit(train: &[RawFeatures], toggles: AblationToggles, scope: NormalizerScope) -> Result<Self> {
        if train.is_empty() {
            return Err(AsaError::InsufficientData(
                "no training features to fit on".into(),
            ));
        }
        let split = toggles.response_splitting;
        let er_pick = |r: &RawFeatures| {
            if split {
                r.er_split.clone()
            } else {
                r.er_whole.clone()
            }
        };
        let ir_pick = |r: &RawFeatures| {
            if split {
                r.ir_split.clone()
            } else {
                r.ir_whole.clone()
            }
        };
        let relevance_on = toggles.multifaceted;
        let er_normalizer = if relevance_on && toggles.exemplar_response {
            Some(fit_normalizer_scoped(&by_question(train, er_pick), scope)?)
        } else {
            None
        };
        let ir_normalizer = if relevance_on && toggles.image_response {
            if let Some(r) = train.iter().find(|r| !r.image_checked) {
                return Err(AsaError::Config(format!(
                    "image-response features are enabled but {} was extracted without images",
                    r.response_id
                )));
            }
            Some(fit_normalizer_scoped(&by_question(train, ir_pick), scope)?)
        } else {
            None
        };
        let labels: Vec<String> = train
            .iter()
            .flat_map(|r| r.grammar_labels.iter())
            .map(|l| Self::label_for(toggles, l))
            .collect();
        let taxonomy = freeze_taxonomy(labels.iter().map(String::as_str), GRAMMAR_DIM)?;
        let syntax_schema = SyntaxSchema::freeze(train.iter().flat_map(|r| r.annotations.iter()));
        Ok(FeatureAssembler {
            toggles,
            normalizer_scope: scope,
            er_normalizer,
            ir_normalizer,
            taxonomy,
            syntax_schema,
            delivery_scaler: DeliveryScaler::fit(train),
        })
    }

    fn label_for(toggles: AblationToggles, label: &str) -> String {
        if toggles.fine_grained_taxonomy {
            label.to_string()
        } else {
            coarse_label(label)
        }
    }

    fn slots(normalizer: Option<&SimilarityNormalizer>, sims: &[RawSimilarity]) -> Result<Vec<f64>> {
        match normalizer {
            Some(n) => Ok(n.normalize_slots(sims)?.to_vec()),
            None => Ok(vec![0.0; MAX_QUESTIONS]),
        }
    }

    /// The grammar vector: frequencies (or counts) over the frozen taxonomy.
    pub fn grammar_vector(&self, raw: &RawFeatures) -> Result<Vec<f64>> {
        if !self.toggles.grammar || raw.transcript.trim().is_empty() {
            return Ok(vec![0.0; GRAMMAR_DIM]);
        }
        let labels: Vec<String> = raw
            .grammar_labels
            .iter()
            .map(|l| Self::label_for(self.toggles, l))
            .collect();
        let g = grammar::grammar_features(
            &self.taxonomy,
            &self.taxonomy.map_labels(&labels),
            &raw.transcript,
        )?;
        Ok(if self.toggles.grammar_normalized {
            g.freqs
        } else {
            g.counts.iter().map(|&c| c as f64).collect()
        })
    }

    pub fn assemble(&self, raw: &RawFeatures) -> Result<FeatureBundle> {
        let t = self.toggles;
        let (er_raw, ir_raw, qr) = if t.response_splitting {
            (&raw.er_split, &raw.ir_split, &raw.qr_split)
        } else {
            (&raw.er_whole, &raw.ir_whole, &raw.qr_whole)
        };
        if t.image_response && t.multifaceted && !raw.image_checked {
            return Err(AsaError::Config(format!(
                "image-response features are enabled but {} was extracted without images",
                raw.response_id
            )));
        }
        let er = Self::slots(self.er_normalizer.as_ref(), er_raw)?;
        let ir = Self::slots(self.ir_normalizer.as_ref(), ir_raw)?;
        Ok(FeatureBundle {
            qr: Stream::new(qr.clone()),
            syntax: Stream::new(self.syntax_schema.encode(&raw.annotations).vectors),
            delivery: Stream::new(self.delivery_scaler.apply(&raw.delivery, raw.acoustic)),
            er,
            ir,
            grammar: self.grammar_vector(raw)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::load_manifest;
    use crate::synthetic::{generate_synthetic_corpus, SyntheticSpec};

    fn corpus(audio: bool) -> (tempfile::TempDir, Manifest) {
        let dir = tempfile::tempdir().unwrap();
        let spec = SyntheticSpec {
            question_sets: 2,
            audio,
            ..Default::default()
        };
        let c = generate_synthetic_corpus(dir.path(), &spec).unwrap();
        let m = load_manifest(&c.manifest_path).unwrap();
        (dir, m)
    }

    #[test]
    fn raw_features_round_trip_through_the_store() {
        let (dir, m) = corpus(true);
        let b = Backends::rule_doubles(7);
        let r = &m.responses[0];
        let raw = extract_raw(&b, m.question_set(&r.question_set_id).unwrap(), r).unwrap();
        assert_eq!(raw.qr_whole.ncols(), QR_DIM);
        assert_eq!(
            raw.delivery.dim(),
            (crate::text::word_count(&r.transcript), DELIVERY_DIM)
        );
        assert!(raw.acoustic);
        let store = FeatureStore::new(dir.path().join("f"));
        store.save(&raw).unwrap();
        assert_eq!(store.load(&r.id).unwrap(), raw);
    }

    #[test]
    fn extraction_is_idempotent_and_hash_sensitive() {
        let (dir, mut m) = corpus(false);
        let b = Backends::rule_doubles(0);
        let store = FeatureStore::new(dir.path().join("f"));
        let first = extract_all(&b, &m, &store, 2).unwrap();
        assert_eq!(first.computed.len(), 10);
        assert!(first.failures.is_empty());
        let again = extract_all(&b, &m, &store, 2).unwrap();
        assert_eq!((again.computed.len(), again.cached.len()), (0, 10));
        m.responses[3].transcript.push_str(" I like dogs.");
        let third = extract_all(&b, &m, &store, 1).unwrap();
        assert_eq!(third.computed, vec![m.responses[3].id.clone()]);
    }

    #[test]
    fn missing_image_is_reported_per_response() {
        let (dir, m) = corpus(false);
        std::fs::remove_file(&m.question_sets[0].image_ref).unwrap();
        let store = FeatureStore::new(dir.path().join("f"));
        let rep = extract_all(&Backends::rule_doubles(0), &m, &store, 2).unwrap();
        assert_eq!(rep.failures.len(), 5);
        assert!(rep.failures[0].error.contains("missing file"));
        assert_eq!(rep.computed.len(), 5);
    }

    fn fitted(toggles: AblationToggles) -> (Vec<RawFeatures>, FeatureAssembler) {
        let (_d, m) = corpus(true);
        let b = Backends::rule_doubles(0);
        let raws: Vec<RawFeatures> = m
            .responses
            .iter()
            .map(|r| extract_raw(&b, m.question_set(&r.question_set_id).unwrap(), r).unwrap())
            .collect();
        let a = FeatureAssembler::fit(&raws, toggles, NormalizerScope::PerQuestion).unwrap();
        (raws, a)
    }

    #[test]
    fn assembled_bundles_have_the_model_widths() {
        let (raws, a) = fitted(AblationToggles::default());
        let cfg = crate::model::ModelConfig::default();
        for r in &raws {
            let x = a.assemble(r).unwrap();
            x.check(&cfg).unwrap();
            assert_eq!(
                [
                    x.qr.data.ncols(),
                    x.er.len(),
                    x.ir.len(),
                    x.syntax.data.ncols(),
                    x.grammar.len(),
                    x.delivery.data.ncols()
                ],
                [256, 4, 4, 247, 265, 14]
            );
            for v in x.er.iter().chain(&x.ir) {
                assert!(*v == 0.0 || (0.01..=1.0).contains(v));
            }
        }
    }

    #[test]
    fn toggles_change_only_their_stream() {
        let base = AblationToggles::default();
        let (raws, full) = fitted(base);
        let r = raws.iter().find(|r| !r.grammar_labels.is_empty()).unwrap();
        let x = full.assemble(r).unwrap();

        let off = FeatureAssembler {
            toggles: AblationToggles {
                grammar: false,
                ..base
            },
            ..full.clone()
        };
        let y = off.assemble(r).unwrap();
        assert!(y.grammar.iter().all(|&v| v == 0.0));
        assert_eq!((&x.er, &x.ir, &x.qr), (&y.er, &y.ir, &y.qr));

        let counts = FeatureAssembler {
            toggles: AblationToggles {
                grammar_normalized: false,
                ..base
            },
            ..full.clone()
        };
        let z = counts.assemble(r).unwrap();
        let wc = crate::text::word_count(&r.transcript) as f64;
        for (f, c) in x.grammar.iter().zip(&z.grammar) {
            assert!((f * wc - c).abs() < 1e-9);
        }
        assert_eq!(z.grammar.iter().sum::<f64>(), r.grammar_labels.len() as f64);

        let (_, nomf) = fitted(AblationToggles {
            multifaceted: false,
            ..base
        });
        let w = nomf.assemble(r).unwrap();
        assert!(w.er.iter().chain(&w.ir).all(|&v| v == 0.0));
        assert_eq!(w.grammar, x.grammar);
    }

    #[test]
    fn toggle_diff_names_fields() {
        let a = AblationToggles::default();
        assert!(a.diff(&a).is_empty());
        let b = AblationToggles { grammar: false, ..a };
        assert_eq!(a.diff(&b), vec!["grammar".to_string()]);
    }
}
