//! Relevance feature streams: exemplar–response and image–response cosine
//! similarities with per-question min–max normalization, and the
//! question–response contextual embedding sequence.
//!
//! Embedding models are behind three traits so a hosted encoder and the
//! deterministic hashed encoders in this module are interchangeable.

use std::path::Path;
use std::time::Duration;

use base64::Engine;
use image::DynamicImage;
use ndarray::{s, Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::corpus::MAX_QUESTIONS;
use crate::error::{AsaError, Result};
use crate::{lexicon, scene, text};

pub const QR_DIM: usize = 256;
pub const NORM_FLOOR: f64 = 0.01;

pub trait TextEmbeddingBackend: Send + Sync {
    fn embedding_dim(&self) -> usize;
    fn embed(&self, text: &str) -> Result<Vec<f64>>;
}

pub trait ImageTextEmbeddingBackend: Send + Sync {
    fn joint_dim(&self) -> usize;
    fn embed_image(&self, image: &DynamicImage) -> Result<Vec<f64>>;
    fn embed_text(&self, text: &str) -> Result<Vec<f64>>;
}

/// Summary vector plus one vector per token (`tokens` is M × token_dim).
#[derive(Debug, Clone, PartialEq)]
pub struct ContextualEncoding {
    pub summary: Array1<f64>,
    pub tokens: Array2<f64>,
}

pub trait ContextualEncoderBackend: Send + Sync {
    fn token_dim(&self) -> usize;
    fn encode(&self, text: &str) -> Result<ContextualEncoding>;
}

/// Cosine similarity; 0 when either vector has zero norm.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

/// `None` marks "no response" for that question.
pub type RawSimilarity = Option<f64>;

fn check_dims(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(AsaError::Embedding(format!(
            "embedding dimensions differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

pub fn exemplar_response_similarity(
    backend: &dyn TextEmbeddingBackend,
    exemplar: &str,
    response: &str,
) -> Result<RawSimilarity> {
    if exemplar.trim().is_empty() {
        return Err(AsaError::Input("exemplar segment is empty".into()));
    }
    if response.trim().is_empty() {
        return Ok(None);
    }
    let e = backend.embed(exemplar)?;
    let r = backend.embed(response)?;
    check_dims(&e, &r)?;
    Ok(Some(cosine(&e, &r)))
}

pub fn image_response_similarity(
    backend: &dyn ImageTextEmbeddingBackend,
    image: &DynamicImage,
    response: &str,
) -> Result<RawSimilarity> {
    if response.trim().is_empty() {
        return Ok(None);
    }
    let i = backend.embed_image(image)?;
    let t = backend.embed_text(response)?;
    check_dims(&i, &t)?;
    Ok(Some(cosine(&i, &t)))
}

pub fn load_image(path: &Path) -> Result<DynamicImage> {
    image::open(path).map_err(|e| AsaError::Media(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuestionStats {
    pub min: f64,
    pub max: f64,
    pub constant: bool,
}

/// Per-question min–max statistics fitted on training similarities.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SimilarityNormalizer {
    pub per_question: Vec<Option<QuestionStats>>,
}

/// Fits one (min, max) per question index; no-response entries are ignored.
pub fn fit_normalizer(raw_sims: &[Vec<RawSimilarity>]) -> Result<SimilarityNormalizer> {
    let mut per_question = Vec::with_capacity(raw_sims.len());
    for (i, sims) in raw_sims.iter().enumerate() {
        per_question.push(Some(fit_stats(sims).ok_or_else(|| {
            AsaError::Fit(format!("question {i} has no non-empty responses"))
        })?));
    }
    Ok(SimilarityNormalizer { per_question })
}

fn fit_stats(sims: &[RawSimilarity]) -> Option<QuestionStats> {
    let values: Vec<f64> = sims.iter().flatten().copied().filter(|v| v.is_finite()).collect();
    if values.is_empty() {
        return None;
    }
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Some(QuestionStats {
        min,
        max,
        constant: max <= min,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizerScope {
    #[default]
    PerQuestion,
    Global,
}

/// Pipeline fit: per-question statistics (or one pooled statistic under
/// [`NormalizerScope::Global`]); question indices without any response fall
/// back to the pooled statistics so sparse corpora still normalize.
pub fn fit_normalizer_scoped(
    raw_sims: &[Vec<RawSimilarity>],
    scope: NormalizerScope,
) -> Result<SimilarityNormalizer> {
    let pooled: Vec<RawSimilarity> = raw_sims.iter().flatten().copied().collect();
    let global =
        fit_stats(&pooled).ok_or_else(|| AsaError::Fit("no non-empty responses for any question".into()))?;
    let per_question = raw_sims
        .iter()
        .map(|sims| match scope {
            NormalizerScope::Global => Some(global),
            NormalizerScope::PerQuestion => Some(fit_stats(sims).unwrap_or(global)),
        })
        .collect();
    Ok(SimilarityNormalizer { per_question })
}

impl SimilarityNormalizer {
    /// No response maps to 0; otherwise `0.01 + 0.99·clip((sim − min)/(max − min), 0, 1)`,
    /// and 1.0 for questions whose fitted range is degenerate.
    pub fn normalize(&self, question_index: usize, sim: RawSimilarity) -> Result<f64> {
        let stats = self
            .per_question
            .get(question_index)
            .copied()
            .flatten()
            .ok_or(AsaError::Lookup(question_index))?;
        let Some(sim) = sim else {
            return Ok(0.0);
        };
        if stats.constant {
            return Ok(1.0);
        }
        let t = ((sim - stats.min) / (stats.max - stats.min)).clamp(0.0, 1.0);
        // NaN input clamps to NaN; treat it as the lowest score
        let t = if t.is_nan() { 0.0 } else { t };
        Ok(NORM_FLOOR + (1.0 - NORM_FLOOR) * t)
    }

    /// Normalizes a response's per-question similarities into the fixed
    /// four-slot vector; unused slots stay 0.
    pub fn normalize_slots(&self, sims: &[RawSimilarity]) -> Result<[f64; MAX_QUESTIONS]> {
        if sims.len() > MAX_QUESTIONS {
            return Err(AsaError::Input(format!(
                "{} questions exceed the {MAX_QUESTIONS} relevance slots",
                sims.len()
            )));
        }
        let mut out = [0.0; MAX_QUESTIONS];
        for (i, s) in sims.iter().enumerate() {
            out[i] = self.normalize(i, *s)?;
        }
        Ok(out)
    }
}

/// Row i is `concat(summary, tokens[i])`.
pub fn concat_summary_tokens(enc: &ContextualEncoding) -> Array2<f64> {
    let (m, d) = enc.tokens.dim();
    let sd = enc.summary.len();
    let mut out = Array2::zeros((m, sd + d));
    for i in 0..m {
        out.slice_mut(s![i, ..sd]).assign(&enc.summary);
        out.slice_mut(s![i, sd..]).assign(&enc.tokens.row(i));
    }
    out
}

/// Fixed random projection from the concatenated width to [`QR_DIM`].
#[derive(Debug, Clone, PartialEq)]
pub struct QrProjection {
    pub seed: u64,
    pub matrix: Array2<f64>,
}

impl QrProjection {
    pub fn new(input_dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / (input_dim as f64).sqrt();
        let matrix = Array2::from_shape_fn((input_dim, QR_DIM), |_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z * scale
        });
        QrProjection { seed, matrix }
    }
}

/// The question–response sequence: M rows of width 256.
pub fn question_response_features(
    backend: &dyn ContextualEncoderBackend,
    projection: &QrProjection,
    question: &str,
    response: &str,
) -> Result<Array2<f64>> {
    let q = backend.encode(question)?;
    let r = backend.encode(response)?;
    let enc = ContextualEncoding {
        summary: q.summary,
        tokens: r.tokens,
    };
    let concat = concat_summary_tokens(&enc);
    if concat.ncols() != projection.matrix.nrows() {
        return Err(AsaError::Embedding(format!(
            "concatenated width {} does not match projection input {}",
            concat.ncols(),
            projection.matrix.nrows()
        )));
    }
    Ok(concat.dot(&projection.matrix))
}

/// FNV-1a; stable across platforms and releases.
pub fn stable_hash(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Unit-variance pseudo-random vector keyed by a word.
pub fn word_vector(word: &str, dim: usize) -> Array1<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(stable_hash(word));
    let scale = 1.0 / (dim as f64).sqrt();
    Array1::from_shape_fn(dim, |_| {
        let z: f64 = StandardNormal.sample(&mut rng);
        z * scale
    })
}

fn l2_normalized(mut v: Array1<f64>) -> Array1<f64> {
    let n = v.dot(&v).sqrt();
    if n > 0.0 {
        v /= n;
    }
    v
}

fn lemma(word: &str) -> String {
    lexicon::lookup(word).lemma.to_lowercase()
}

/// Bag-of-lemmas sentence encoder over hashed word vectors.
#[derive(Debug, Clone, Copy)]
pub struct HashedTextEmbedder {
    pub dim: usize,
}

impl Default for HashedTextEmbedder {
    fn default() -> Self {
        HashedTextEmbedder { dim: 128 }
    }
}

impl TextEmbeddingBackend for HashedTextEmbedder {
    fn embedding_dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>> {
        let mut words = text::content_words(text);
        if words.is_empty() {
            words = text::folded_tokens(text)
                .into_iter()
                .filter(|t| !text::is_punct(t))
                .collect();
        }
        let mut v = Array1::zeros(self.dim);
        for w in &words {
            v += &word_vector(&lemma(w), self.dim);
        }
        Ok(l2_normalized(v).to_vec())
    }
}

/// Joint image/text encoder over the scene catalog: an image is the set of
/// catalog objects whose colour it shows, a text is the set of catalog
/// objects it names.
#[derive(Debug, Clone, Copy)]
pub struct ConceptImageTextEmbedder {
    pub dim: usize,
    pub min_fraction: f64,
}

impl Default for ConceptImageTextEmbedder {
    fn default() -> Self {
        ConceptImageTextEmbedder {
            dim: 64,
            min_fraction: 0.005,
        }
    }
}

impl ConceptImageTextEmbedder {
    fn concepts_vector<'a>(&self, concepts: impl Iterator<Item = &'a str>) -> Vec<f64> {
        let mut v = Array1::zeros(self.dim);
        for c in concepts {
            v += &word_vector(&format!("concept:{c}"), self.dim);
        }
        l2_normalized(v).to_vec()
    }
}

impl ImageTextEmbeddingBackend for ConceptImageTextEmbedder {
    fn joint_dim(&self) -> usize {
        self.dim
    }

    fn embed_image(&self, image: &DynamicImage) -> Result<Vec<f64>> {
        let rgb = image.to_rgb8();
        if rgb.width() == 0 || rgb.height() == 0 {
            return Err(AsaError::Media("empty image".into()));
        }
        let found = scene::detect_objects(rgb.pixels().map(|p| p.0), self.min_fraction);
        Ok(self.concepts_vector(found.into_iter()))
    }

    fn embed_text(&self, text: &str) -> Result<Vec<f64>> {
        let lemmas: Vec<String> = text::folded_tokens(text).iter().map(|w| lemma(w)).collect();
        let named = scene::CATALOG
            .iter()
            .filter(|o| lemmas.iter().any(|l| l == o.name))
            .map(|o| o.name);
        Ok(self.concepts_vector(named))
    }
}

/// Token encoder: hashed word vectors mixed with their neighbours plus a
/// small positional signal; the summary is the normalized token mean.
#[derive(Debug, Clone, Copy)]
pub struct HashedContextualEncoder {
    pub dim: usize,
}

impl Default for HashedContextualEncoder {
    fn default() -> Self {
        HashedContextualEncoder { dim: 128 }
    }
}

pub const PAD_TOKEN: &str = "[PAD]";

impl ContextualEncoderBackend for HashedContextualEncoder {
    fn token_dim(&self) -> usize {
        self.dim
    }

    fn encode(&self, text: &str) -> Result<ContextualEncoding> {
        let mut toks = text::folded_tokens(text);
        if toks.is_empty() {
            toks.push(PAD_TOKEN.to_string());
        }
        let base: Vec<Array1<f64>> = toks.iter().map(|t| word_vector(t, self.dim)).collect();
        let m = toks.len();
        let mut tokens = Array2::zeros((m, self.dim));
        for i in 0..m {
            let mut v = base[i].clone();
            if i > 0 {
                v.scaled_add(0.5, &base[i - 1]);
            }
            if i + 1 < m {
                v.scaled_add(0.5, &base[i + 1]);
            }
            for j in 0..self.dim {
                let freq = 1.0 / 10000f64.powf((2 * (j / 2)) as f64 / self.dim as f64);
                let angle = i as f64 * freq;
                v[j] += 0.1 * if j % 2 == 0 { angle.sin() } else { angle.cos() };
            }
            tokens.row_mut(i).assign(&v);
        }
        let summary = l2_normalized(tokens.mean_axis(ndarray::Axis(0)).unwrap());
        Ok(ContextualEncoding { summary, tokens })
    }
}

fn http_agent(timeout: Duration) -> ureq::Agent {
    ureq::Agent::config_builder()
        .timeout_global(Some(timeout))
        .build()
        .into()
}

fn post_json(url: &str, body: &serde_json::Value) -> Result<serde_json::Value> {
    let mut resp = http_agent(Duration::from_secs(60))
        .post(url)
        .send_json(body)
        .map_err(|e| AsaError::Transport(format!("{url}: {e}")))?;
    resp.body_mut()
        .read_json()
        .map_err(|e| AsaError::Embedding(format!("{url}: bad response body: {e}")))
}

fn vector_field(v: &serde_json::Value, field: &str) -> Result<Vec<f64>> {
    serde_json::from_value(v.get(field).cloned().unwrap_or_default())
        .map_err(|e| AsaError::Embedding(format!("field {field:?}: {e}")))
}

/// `POST <base>/embed {"text": ...} -> {"embedding": [...]}`
#[derive(Debug, Clone)]
pub struct HttpTextEmbedder {
    pub base: String,
    pub dim: usize,
}

impl TextEmbeddingBackend for HttpTextEmbedder {
    fn embedding_dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>> {
        let v = post_json(
            &format!("{}/embed", self.base.trim_end_matches('/')),
            &serde_json::json!({ "text": text }),
        )?;
        vector_field(&v, "embedding")
    }
}

/// `POST <base>/embed_text {"text": ...}` and
/// `POST <base>/embed_image {"image_png_base64": ...}`, both answering
/// `{"embedding": [...]}`.
#[derive(Debug, Clone)]
pub struct HttpImageTextEmbedder {
    pub base: String,
    pub dim: usize,
}

impl ImageTextEmbeddingBackend for HttpImageTextEmbedder {
    fn joint_dim(&self) -> usize {
        self.dim
    }

    fn embed_image(&self, image: &DynamicImage) -> Result<Vec<f64>> {
        let mut png = Vec::new();
        image
            .write_to(&mut std::io::Cursor::new(&mut png), image::ImageFormat::Png)
            .map_err(|e| AsaError::Media(e.to_string()))?;
        let b64 = base64::engine::general_purpose::STANDARD.encode(png);
        let v = post_json(
            &format!("{}/embed_image", self.base.trim_end_matches('/')),
            &serde_json::json!({ "image_png_base64": b64 }),
        )?;
        vector_field(&v, "embedding")
    }

    fn embed_text(&self, text: &str) -> Result<Vec<f64>> {
        let v = post_json(
            &format!("{}/embed_text", self.base.trim_end_matches('/')),
            &serde_json::json!({ "text": text }),
        )?;
        vector_field(&v, "embedding")
    }
}

/// `POST <base>/encode {"text": ...} -> {"summary": [...], "tokens": [[...], ...]}`
#[derive(Debug, Clone)]
pub struct HttpContextualEncoder {
    pub base: String,
    pub dim: usize,
}

impl ContextualEncoderBackend for HttpContextualEncoder {
    fn token_dim(&self) -> usize {
        self.dim
    }

    fn encode(&self, text: &str) -> Result<ContextualEncoding> {
        let v = post_json(
            &format!("{}/encode", self.base.trim_end_matches('/')),
            &serde_json::json!({ "text": text }),
        )?;
        let summary = Array1::from(vector_field(&v, "summary")?);
        let rows: Vec<Vec<f64>> = serde_json::from_value(v.get("tokens").cloned().unwrap_or_default())
            .map_err(|e| AsaError::Embedding(format!("field \"tokens\": {e}")))?;
        let m = rows.len();
        if m == 0 || rows.iter().any(|r| r.len() != self.dim) || summary.len() != self.dim {
            return Err(AsaError::Embedding(format!(
                "encoder returned {m} tokens with inconsistent widths (expected {})",
                self.dim
            )));
        }
        let tokens = Array2::from_shape_vec((m, self.dim), rows.into_iter().flatten().collect())
            .map_err(|e| AsaError::Embedding(e.to_string()))?;
        Ok(ContextualEncoding { summary, tokens })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    /// Returns fixed vectors keyed by text.
    struct Stub(Vec<(&'static str, Vec<f64>)>);

    impl TextEmbeddingBackend for Stub {
        fn embedding_dim(&self) -> usize {
            self.0[0].1.len()
        }
        fn embed(&self, text: &str) -> Result<Vec<f64>> {
            Ok(self.0.iter().find(|(k, _)| *k == text).unwrap().1.clone())
        }
    }

    impl ImageTextEmbeddingBackend for Stub {
        fn joint_dim(&self) -> usize {
            self.0[0].1.len()
        }
        fn embed_image(&self, _image: &DynamicImage) -> Result<Vec<f64>> {
            Ok(self.0.iter().find(|(k, _)| *k == "<image>").unwrap().1.clone())
        }
        fn embed_text(&self, text: &str) -> Result<Vec<f64>> {
            TextEmbeddingBackend::embed(self, text)
        }
    }

    fn blank() -> DynamicImage {
        DynamicImage::new_rgb8(4, 4)
    }

    #[test]
    fn exemplar_similarity_examples() {
        let h = HashedTextEmbedder::default();
        let same = exemplar_response_similarity(&h, "The dog runs fast.", "The dog runs fast.")
            .unwrap()
            .unwrap();
        assert_abs_diff_eq!(same, 1.0, epsilon = 1e-6);
        let stub = Stub(vec![
            ("e", vec![1.0, 0.0]),
            ("r", vec![0.0, 1.0]),
            ("d", vec![1.0, 1.0]),
        ]);
        assert_abs_diff_eq!(
            exemplar_response_similarity(&stub, "e", "r").unwrap().unwrap(),
            0.0
        );
        assert_abs_diff_eq!(
            exemplar_response_similarity(&stub, "d", "e").unwrap().unwrap(),
            std::f64::consts::FRAC_1_SQRT_2,
            epsilon = 1e-12
        );
        assert_eq!(exemplar_response_similarity(&stub, "e", "  ").unwrap(), None);
    }

    #[test]
    fn image_similarity_examples() {
        let eq = Stub(vec![("<image>", vec![0.3, 0.4]), ("r", vec![0.3, 0.4])]);
        assert_abs_diff_eq!(
            image_response_similarity(&eq, &blank(), "r").unwrap().unwrap(),
            1.0,
            epsilon = 1e-12
        );
        let anti = Stub(vec![("<image>", vec![1.0, -2.0]), ("r", vec![-1.0, 2.0])]);
        assert_abs_diff_eq!(
            image_response_similarity(&anti, &blank(), "r").unwrap().unwrap(),
            -1.0,
            epsilon = 1e-12
        );
        let tilted = Stub(vec![("<image>", vec![3.0, 4.0]), ("r", vec![4.0, 3.0])]);
        assert_abs_diff_eq!(
            image_response_similarity(&tilted, &blank(), "r")
                .unwrap()
                .unwrap(),
            0.96,
            epsilon = 1e-6
        );
        assert_eq!(image_response_similarity(&tilted, &blank(), "").unwrap(), None);
    }

    #[test]
    fn undecodable_image_is_media_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.png");
        std::fs::write(&p, b"not a png").unwrap();
        assert!(matches!(load_image(&p), Err(AsaError::Media(_))));
    }

    #[test]
    fn concept_embedder_links_image_and_text() {
        let mut img = image::RgbImage::from_pixel(20, 20, image::Rgb([255, 255, 255]));
        for x in 0..10 {
            for y in 0..10 {
                img.put_pixel(x, y, image::Rgb(scene::object("dog").unwrap().rgb));
            }
        }
        let img = DynamicImage::ImageRgb8(img);
        let b = ConceptImageTextEmbedder::default();
        let on = image_response_similarity(&b, &img, "The dogs play.")
            .unwrap()
            .unwrap();
        let off = image_response_similarity(&b, &img, "A car drives.")
            .unwrap()
            .unwrap();
        assert_abs_diff_eq!(on, 1.0, epsilon = 1e-9);
        assert!(off < 0.5);
    }

    #[test]
    fn fit_examples() {
        let n = fit_normalizer(&[vec![Some(0.2), Some(0.5), None, Some(0.8)]]).unwrap();
        let s = n.per_question[0].unwrap();
        assert_eq!((s.min, s.max, s.constant), (0.2, 0.8, false));
        let c = fit_normalizer(&[vec![Some(0.4), Some(0.4)]]).unwrap();
        assert!(c.per_question[0].unwrap().constant);
        assert_eq!(c.normalize(0, Some(-3.0)).unwrap(), 1.0);
        let two = fit_normalizer(&[vec![Some(0.0), Some(1.0)], vec![Some(0.5), Some(0.7)]]).unwrap();
        assert_eq!(two.per_question.len(), 2);
        assert_eq!(two.per_question[1].unwrap().max, 0.7);
        assert!(matches!(
            fit_normalizer(&[vec![None, None]]),
            Err(AsaError::Fit(_))
        ));
    }

    #[test]
    fn normalize_examples() {
        let n = fit_normalizer(&[vec![Some(0.2), Some(0.8)]]).unwrap();
        assert_abs_diff_eq!(n.normalize(0, Some(0.2)).unwrap(), 0.01, epsilon = 1e-12);
        assert_abs_diff_eq!(n.normalize(0, Some(0.8)).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(n.normalize(0, Some(0.5)).unwrap(), 0.505, epsilon = 1e-9);
        assert_eq!(n.normalize(0, None).unwrap(), 0.0);
        assert_eq!(n.normalize(0, Some(-9.0)).unwrap(), 0.01);
        assert!(matches!(n.normalize(3, Some(0.5)), Err(AsaError::Lookup(3))));
    }

    #[test]
    fn scoped_fit_falls_back_to_pool() {
        let raw = vec![vec![Some(0.1), Some(0.9)], vec![None]];
        let n = fit_normalizer_scoped(&raw, NormalizerScope::PerQuestion).unwrap();
        assert_eq!(n.per_question[1], n.per_question[0]);
        let g = fit_normalizer_scoped(&[vec![Some(0.1)], vec![Some(0.9)]], NormalizerScope::Global).unwrap();
        assert_eq!(g.per_question[0].unwrap().max, 0.9);
        let slots = g.normalize_slots(&[Some(0.9), None]).unwrap();
        assert_eq!(slots, [1.0, 0.0, 0.0, 0.0]);
    }

    struct FixedEncoder;

    impl ContextualEncoderBackend for FixedEncoder {
        fn token_dim(&self) -> usize {
            2
        }
        fn encode(&self, text: &str) -> Result<ContextualEncoding> {
            let m = text.split_whitespace().count().max(1);
            let base = if text.starts_with('Q') { 10.0 } else { 0.0 };
            Ok(ContextualEncoding {
                summary: Array1::from(vec![base + 1.0, base + 2.0]),
                tokens: Array2::from_shape_fn((m, 2), |(i, j)| base + (i * 2 + j) as f64),
            })
        }
    }

    #[test]
    fn concat_is_summary_then_token() {
        let enc = FixedEncoder.encode("a b c").unwrap();
        let q = FixedEncoder.encode("Q").unwrap();
        let c = concat_summary_tokens(&ContextualEncoding {
            summary: q.summary,
            tokens: enc.tokens,
        });
        assert_eq!(c.dim(), (3, 4));
        assert_eq!(c.row(0).to_vec(), vec![11.0, 12.0, 0.0, 1.0]);
        assert_eq!(c.row(2).to_vec(), vec![11.0, 12.0, 4.0, 5.0]);
    }

    #[test]
    fn qr_features_shape_and_question_dependence() {
        let enc = HashedContextualEncoder::default();
        let proj = QrProjection::new(2 * enc.dim, 11);
        let resp = "the dog runs in the park today";
        let a = question_response_features(&enc, &proj, "What is in the picture?", resp).unwrap();
        assert_eq!(a.dim(), (7, QR_DIM));
        let b = question_response_features(&enc, &proj, "What happens next?", resp).unwrap();
        // response halves agree before projection; only the summary half moved
        let ra = enc.encode(resp).unwrap();
        let qa = enc.encode("What is in the picture?").unwrap();
        let qb = enc.encode("What happens next?").unwrap();
        let ca = concat_summary_tokens(&ContextualEncoding {
            summary: qa.summary,
            tokens: ra.tokens.clone(),
        });
        let cb = concat_summary_tokens(&ContextualEncoding {
            summary: qb.summary,
            tokens: ra.tokens,
        });
        assert_eq!(ca.slice(s![.., enc.dim..]), cb.slice(s![.., enc.dim..]));
        assert_ne!(ca.slice(s![.., ..enc.dim]), cb.slice(s![.., ..enc.dim]));
        assert_ne!(a, b);
        let empty = question_response_features(&enc, &proj, "Q?", "").unwrap();
        assert_eq!(empty.nrows(), 1);
    }

    #[test]
    fn http_embedders_round_trip() {
        let (url, _rx) = crate::backend::mock::serve(3, |body| {
            let v: serde_json::Value = serde_json::from_str(body).unwrap();
            if v.get("image_png_base64").is_some() {
                r#"{"embedding":[3.0,4.0]}"#.to_string()
            } else if v["text"] == "tokens please" {
                r#"{"summary":[1.0,0.0],"tokens":[[1.0,2.0],[3.0,4.0]]}"#.to_string()
            } else {
                r#"{"embedding":[4.0,3.0]}"#.to_string()
            }
        });
        let it = HttpImageTextEmbedder {
            base: url.clone(),
            dim: 2,
        };
        let sim = image_response_similarity(&it, &blank(), "words")
            .unwrap()
            .unwrap();
        assert_abs_diff_eq!(sim, 0.96, epsilon = 1e-9);
        let ce = HttpContextualEncoder { base: url, dim: 2 };
        let enc = ce.encode("tokens please").unwrap();
        assert_eq!(enc.tokens.dim(), (2, 2));
    }
}
