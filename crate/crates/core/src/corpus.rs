//! Data model for question sets and responses, the line-delimited manifest
//! format, and corpus splitting.
//!
//! # Manifest format
//!
//! A manifest is a UTF-8 file with one JSON object per line. Blank lines are
//! ignored. Every object carries a `kind` field:
//!
//! ```text
//! {"kind":"question_set","id":"S1","questions":["What do you see?"],
//!  "exemplar_text":"I see a dog.","exemplar_segments":["I see a dog."],
//!  "image_ref":"images/S1.png"}
//! {"kind":"response","id":"S1-R001","question_set_id":"S1",
//!  "audio_ref":"audio/S1-R001.wav","transcript":"I see dog.",
//!  "word_timestamps":[["I",0.10,0.25],["see",0.25,0.52],["dog.",0.52,0.90]],
//!  "scores":{"holistic":3,"relevance":4,"language_use":2}}
//! ```
//!
//! `exemplar_segments`, `audio_ref` and `word_timestamps` are optional.
//! File references are relative to the manifest's directory.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{AsaError, Result};

/// Largest question count per set; the exemplar and image relevance streams
/// have one slot per question.
pub const MAX_QUESTIONS: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionSet {
    pub id: String,
    pub questions: Vec<String>,
    pub exemplar_text: String,
    /// Exemplar already split per question; bypasses the splitter when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exemplar_segments: Option<Vec<String>>,
    pub image_ref: PathBuf,
}

impl QuestionSet {
    pub fn k(&self) -> usize {
        self.questions.len()
    }
}

/// One aligned word: (token, start seconds, end seconds).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordTimestamp(pub String, pub f64, pub f64);

impl WordTimestamp {
    pub fn token(&self) -> &str {
        &self.0
    }
    pub fn start(&self) -> f64 {
        self.1
    }
    pub fn end(&self) -> f64 {
        self.2
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreLabel {
    #[serde(default)]
    pub holistic: Option<u8>,
    #[serde(default)]
    pub relevance: Option<u8>,
    #[serde(default)]
    pub language_use: Option<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreTarget {
    Holistic,
    Relevance,
    LanguageUse,
}

impl ScoreTarget {
    pub fn as_str(self) -> &'static str {
        match self {
            ScoreTarget::Holistic => "holistic",
            ScoreTarget::Relevance => "relevance",
            ScoreTarget::LanguageUse => "language_use",
        }
    }
}

impl ScoreLabel {
    pub fn get(&self, target: ScoreTarget) -> Option<u8> {
        match target {
            ScoreTarget::Holistic => self.holistic,
            ScoreTarget::Relevance => self.relevance,
            ScoreTarget::LanguageUse => self.language_use,
        }
    }

    fn validate(&self) -> std::result::Result<(), String> {
        for (name, v) in [
            ("holistic", self.holistic),
            ("relevance", self.relevance),
            ("language_use", self.language_use),
        ] {
            if let Some(s) = v {
                if !(1..=5).contains(&s) {
                    return Err(format!("{name} score {s} outside 1..=5"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseRecord {
    pub id: String,
    pub question_set_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audio_ref: Option<PathBuf>,
    pub transcript: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub word_timestamps: Option<Vec<WordTimestamp>>,
    #[serde(default)]
    pub scores: ScoreLabel,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum ManifestLine {
    QuestionSet(QuestionSet),
    Response(ResponseRecord),
}

/// A loaded manifest with file references resolved to absolute paths.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub root: PathBuf,
    pub question_sets: Vec<QuestionSet>,
    pub responses: Vec<ResponseRecord>,
}

impl Manifest {
    pub fn question_set(&self, id: &str) -> Option<&QuestionSet> {
        self.question_sets.iter().find(|q| q.id == id)
    }

    pub fn response(&self, id: &str) -> Option<&ResponseRecord> {
        self.responses.iter().find(|r| r.id == id)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LoadOptions {
    /// Fail when a question set's image file is missing. Audio references are
    /// always checked.
    pub check_images: bool,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions { check_images: true }
    }
}

/// Loads and validates a manifest, checking every referenced file.
pub fn load_manifest(path: &Path) -> Result<Manifest> {
    load_manifest_with(path, LoadOptions::default())
}

pub fn load_manifest_with(path: &Path, opts: LoadOptions) -> Result<Manifest> {
    let file = fs::File::open(path).map_err(|e| AsaError::io(path, e))?;
    let root = path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    let mut question_sets = Vec::new();
    let mut responses = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| AsaError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: ManifestLine = serde_json::from_str(&line).map_err(|e| AsaError::ManifestParse {
            line: i + 1,
            record: record_hint(&line),
            message: e.to_string(),
        })?;
        match parsed {
            ManifestLine::QuestionSet(mut q) => {
                q.image_ref = root.join(&q.image_ref);
                question_sets.push(q);
            }
            ManifestLine::Response(mut r) => {
                r.audio_ref = r.audio_ref.map(|a| root.join(a));
                responses.push(r);
            }
        }
    }
    let manifest = Manifest {
        root,
        question_sets,
        responses,
    };
    validate(&manifest, opts)?;
    Ok(manifest)
}

fn record_hint(line: &str) -> String {
    serde_json::from_str::<serde_json::Value>(line)
        .ok()
        .and_then(|v| v.get("id").and_then(|id| id.as_str().map(str::to_string)))
        .unwrap_or_else(|| "<unidentified record>".to_string())
}

fn invalid(record: &str, message: impl Into<String>) -> AsaError {
    AsaError::InvalidRecord {
        record: record.to_string(),
        message: message.into(),
    }
}

fn validate(m: &Manifest, opts: LoadOptions) -> Result<()> {
    let mut set_ids = HashSet::new();
    for q in &m.question_sets {
        if !set_ids.insert(q.id.as_str()) {
            return Err(invalid(&q.id, "duplicate question set id"));
        }
        if q.questions.is_empty() {
            return Err(invalid(&q.id, "question set has no questions"));
        }
        if q.questions.len() > MAX_QUESTIONS {
            return Err(invalid(
                &q.id,
                format!(
                    "{} questions; at most {MAX_QUESTIONS} are supported",
                    q.questions.len()
                ),
            ));
        }
        if let Some(segs) = &q.exemplar_segments {
            if segs.len() != q.questions.len() {
                return Err(invalid(
                    &q.id,
                    "exemplar_segments length differs from question count",
                ));
            }
        }
        if opts.check_images && !q.image_ref.is_file() {
            return Err(AsaError::MissingFile(q.image_ref.clone()));
        }
    }
    let mut response_ids = HashSet::new();
    for r in &m.responses {
        if !response_ids.insert(r.id.as_str()) {
            return Err(invalid(&r.id, "duplicate response id"));
        }
        if !set_ids.contains(r.question_set_id.as_str()) {
            return Err(AsaError::Referential(format!(
                "response {} cites unknown question set {:?}",
                r.id, r.question_set_id
            )));
        }
        r.scores.validate().map_err(|msg| invalid(&r.id, msg))?;
        if let Some(ts) = &r.word_timestamps {
            validate_timestamps(ts).map_err(|msg| invalid(&r.id, msg))?;
        }
        if let Some(a) = &r.audio_ref {
            if !a.is_file() {
                return Err(AsaError::MissingFile(a.clone()));
            }
        }
    }
    Ok(())
}

/// Timestamps must be well-formed intervals, in order, without overlap.
pub fn validate_timestamps(ts: &[WordTimestamp]) -> std::result::Result<(), String> {
    let mut prev_end = f64::NEG_INFINITY;
    for (i, w) in ts.iter().enumerate() {
        if !(w.start().is_finite() && w.end().is_finite()) || w.start() < 0.0 {
            return Err(format!("timestamp {i} is not a finite non-negative time"));
        }
        if w.end() < w.start() {
            return Err(format!("timestamp {i} ends before it starts"));
        }
        if w.start() < prev_end - 1e-9 {
            return Err(format!("timestamp {i} overlaps its predecessor"));
        }
        prev_end = w.end();
    }
    Ok(())
}

/// Writes a manifest; paths are written relative to `root` when possible.
pub fn write_manifest(path: &Path, manifest: &Manifest) -> Result<()> {
    let rel = |p: &Path| -> PathBuf {
        p.strip_prefix(&manifest.root)
            .map(Path::to_path_buf)
            .unwrap_or_else(|_| p.to_path_buf())
    };
    let mut out = Vec::new();
    for q in &manifest.question_sets {
        let mut q = q.clone();
        q.image_ref = rel(&q.image_ref);
        serde_json::to_writer(&mut out, &ManifestLine::QuestionSet(q))?;
        out.push(b'\n');
    }
    for r in &manifest.responses {
        let mut r = r.clone();
        r.audio_ref = r.audio_ref.as_deref().map(rel);
        serde_json::to_writer(&mut out, &ManifestLine::Response(r))?;
        out.push(b'\n');
    }
    let mut f = fs::File::create(path).map_err(|e| AsaError::io(path, e))?;
    f.write_all(&out).map_err(|e| AsaError::io(path, e))?;
    Ok(())
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusSplit {
    pub train: Vec<String>,
    pub dev: Vec<String>,
    pub known_test: Vec<String>,
    pub unknown_test: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitName {
    Train,
    Dev,
    KnownTest,
    UnknownTest,
}

impl SplitName {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitName::Train => "train",
            SplitName::Dev => "dev",
            SplitName::KnownTest => "known_test",
            SplitName::UnknownTest => "unknown_test",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "train" => Some(SplitName::Train),
            "dev" => Some(SplitName::Dev),
            "known_test" => Some(SplitName::KnownTest),
            "unknown_test" => Some(SplitName::UnknownTest),
            _ => None,
        }
    }
}

impl CorpusSplit {
    pub fn get(&self, name: SplitName) -> &[String] {
        match name {
            SplitName::Train => &self.train,
            SplitName::Dev => &self.dev,
            SplitName::KnownTest => &self.known_test,
            SplitName::UnknownTest => &self.unknown_test,
        }
    }
}

/// Holds out every response of `unknown_set_id`, then shuffles the rest under
/// `seed` and partitions them: `floor(train·n)` train, `floor(dev·n)` dev,
/// remainder known-test.
pub fn make_splits(
    records: &[ResponseRecord],
    unknown_set_id: &str,
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<CorpusSplit> {
    let (tr, dv, te) = ratios;
    if (tr + dv + te - 1.0).abs() > 1e-9 || tr < 0.0 || dv < 0.0 || te < 0.0 {
        return Err(AsaError::Input(format!(
            "split ratios {ratios:?} must be non-negative and sum to 1"
        )));
    }
    let mut unknown_test = Vec::new();
    let mut rest = Vec::new();
    for r in records {
        if r.question_set_id == unknown_set_id {
            unknown_test.push(r.id.clone());
        } else {
            rest.push(r.id.clone());
        }
    }
    if rest.len() < 3 {
        return Err(AsaError::InsufficientData(format!(
            "{} responses outside the unknown set {unknown_set_id:?}; need at least 3",
            rest.len()
        )));
    }
    rest.sort();
    unknown_test.sort();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rest.shuffle(&mut rng);
    let n = rest.len();
    let n_train = (tr * n as f64 + 1e-9).floor() as usize;
    let n_dev = (dv * n as f64 + 1e-9).floor() as usize;
    let known_test = rest.split_off(n_train + n_dev);
    let dev = rest.split_off(n_train);
    Ok(CorpusSplit {
        train: rest,
        dev,
        known_test,
        unknown_test,
    })
}

/// Picks the held-out question set deterministically from `seed`.
pub fn choose_unknown_set(manifest: &Manifest, seed: u64) -> Option<String> {
    let mut ids: Vec<&str> = manifest.question_sets.iter().map(|q| q.id.as_str()).collect();
    ids.sort();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5e75);
    ids.choose(&mut rng).map(|s| s.to_string())
}

/// Counts responses per question set, ordered by set id.
pub fn responses_per_set(manifest: &Manifest) -> BTreeMap<String, usize> {
    let mut m = BTreeMap::new();
    for r in &manifest.responses {
        *m.entry(r.question_set_id.clone()).or_insert(0) += 1;
    }
    m
}
