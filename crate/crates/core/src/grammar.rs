//! Grammar-error features.
//!
//! A correction backend rewrites the transcript, [`align_edits`] aligns raw
//! and corrected tokens with a unit-cost edit distance and merges runs of the
//! same operation into spans, [`classify_edit`] assigns each span a
//! fine-grained type (`R:VERB:TENSE`, `M:DET`, `U:ADV`, ...) and
//! [`grammar_features`] turns the labels into per-type frequencies normalized
//! by the raw word count.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::backend::{GenerationRequest, TextGenerator};
use crate::error::{AsaError, Result};
use crate::lexicon;
use crate::syntax::{SyntacticAnnotationBackend, TokenAnnotation};
use crate::text;

pub const GRAMMAR_DIM: usize = 265;
pub const OTHER: &str = "OTHER";

pub trait GecBackend: Send + Sync {
    fn correct_text(&self, raw: &str) -> Result<String>;
}

/// Runs the backend and enforces the non-empty contract.
pub fn correct(backend: &dyn GecBackend, raw_text: &str) -> Result<String> {
    if raw_text.trim().is_empty() {
        return Err(AsaError::Input("cannot correct an empty transcript".into()));
    }
    let out = backend.correct_text(raw_text)?;
    if out.trim().is_empty() {
        return Err(AsaError::Correction("backend returned empty text".into()));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FewShotExample {
    pub raw: String,
    pub corrected: String,
}

/// Reads `{"raw": ..., "corrected": ...}` lines.
pub fn load_few_shot(path: &Path) -> Result<Vec<FewShotExample>> {
    let s = std::fs::read_to_string(path).map_err(|e| AsaError::io(path, e))?;
    s.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(AsaError::from))
        .collect()
}

/// Correction through a text-generation service with in-context examples.
#[derive(Clone)]
pub struct ServiceGec {
    generator: Arc<dyn TextGenerator>,
    pub few_shot: Vec<FewShotExample>,
    pub max_tokens: u32,
}

impl ServiceGec {
    pub fn new(generator: Arc<dyn TextGenerator>, few_shot: Vec<FewShotExample>) -> Self {
        ServiceGec {
            generator,
            few_shot,
            max_tokens: 1024,
        }
    }

    pub fn prompt(&self, raw: &str) -> String {
        let mut p = String::from(
            "Correct the grammatical errors in the transcript of a spoken answer. Change as little as possible and output only the corrected text.\n\n",
        );
        for ex in &self.few_shot {
            let _ = write!(p, "Input: {}\nOutput: {}\n\n", ex.raw, ex.corrected);
        }
        let _ = write!(p, "Input: {raw}\nOutput:");
        p
    }
}

impl GecBackend for ServiceGec {
    fn correct_text(&self, raw: &str) -> Result<String> {
        let out = self
            .generator
            .generate(&GenerationRequest::greedy(self.prompt(raw), self.max_tokens))?;
        Ok(out.trim().to_string())
    }
}

/// Deterministic rule-based corrector covering agreement, tense, article,
/// inflection, preposition and duplication errors over the built-in lexicon.
#[derive(Debug, Clone, Copy, Default)]
pub struct RuleGec;

/// Over-regularized or wrong inflections and their corrections.
pub const INFLECTION_FIXES: &[(&str, &str)] = &[
    ("goed", "went"),
    ("runned", "ran"),
    ("eated", "ate"),
    ("catched", "caught"),
    ("throwed", "threw"),
    ("flied", "flew"),
    ("sitted", "sat"),
    ("swimmed", "swam"),
    ("buyed", "bought"),
    ("bringed", "brought"),
    ("childs", "children"),
    ("mans", "men"),
    ("womans", "women"),
    ("mouses", "mice"),
    ("leafs", "leaves"),
];

const THIRD_SINGULAR: &[&str] = &["he", "she", "it"];
const NON_THIRD: &[&str] = &["i", "you", "we", "they"];
const SINGULAR_DETS: &[&str] = &[
    "the", "a", "an", "this", "that", "my", "his", "her", "its", "your", "our", "their",
];

fn match_case(template: &str, word: &str) -> String {
    if template.chars().next().is_some_and(|c| c.is_uppercase()) {
        let mut c = word.chars();
        match c.next() {
            Some(f) => f.to_uppercase().collect::<String>() + c.as_str(),
            None => String::new(),
        }
    } else {
        word.to_string()
    }
}

fn starts_with_vowel_sound(w: &str) -> bool {
    w.chars()
        .next()
        .is_some_and(|c| matches!(c.to_ascii_lowercase(), 'a' | 'e' | 'i' | 'o' | 'u'))
}

fn is_verb_lemma(w: &str) -> bool {
    lexicon::verb_forms(w).is_some()
}

fn is_third_singular_verb(w: &str) -> Option<&'static str> {
    lexicon::VERBS.iter().find(|v| v.1 == w).map(|v| v.0)
}

fn sentence_has_past_marker(tokens: &[String], i: usize) -> bool {
    let is_end = |t: &str| matches!(t, "." | "!" | "?");
    let mut s = i;
    while s > 0 && !is_end(&tokens[s - 1]) {
        s -= 1;
    }
    let mut e = i;
    while e < tokens.len() && !is_end(&tokens[e]) {
        e += 1;
    }
    tokens[s..e]
        .iter()
        .any(|t| t.eq_ignore_ascii_case("yesterday") || t.eq_ignore_ascii_case("last"))
}

/// Joins tokens with spaces, attaching closing punctuation to the left.
pub fn detokenize(tokens: &[String]) -> String {
    let mut out = String::new();
    for t in tokens {
        let attach = matches!(t.as_str(), "." | "," | "!" | "?" | ";" | ":");
        if !out.is_empty() && !attach {
            out.push(' ');
        }
        out.push_str(t);
    }
    out
}

impl RuleGec {
    /// Applies every rule left to right; returns the tokens and whether
    /// anything changed.
    pub fn correct_tokens(&self, input: &[String]) -> (Vec<String>, bool) {
        let mut t: Vec<String> = input.to_vec();
        let mut changed = false;
        let mut i = 0;
        while i < t.len() {
            let low = t[i].to_lowercase();
            let prev = if i > 0 {
                t[i - 1].to_lowercase()
            } else {
                String::new()
            };
            let prev2 = if i > 1 {
                t[i - 2].to_lowercase()
            } else {
                String::new()
            };
            let next = t.get(i + 1).map(|s| s.to_lowercase()).unwrap_or_default();

            // duplicated word: "the the"
            if i > 0 && low == prev && !text::is_punct(&low) {
                t.remove(i);
                changed = true;
                continue;
            }
            // "more bigger" → "bigger"
            if low == "more"
                && lexicon::ADJECTIVES
                    .iter()
                    .any(|a| a.1 == next && !a.1.contains(' '))
            {
                t.remove(i);
                changed = true;
                continue;
            }
            if let Some(&(_, fix)) = INFLECTION_FIXES.iter().find(|(bad, _)| *bad == low) {
                t[i] = match_case(&t[i], fix);
                changed = true;
                i += 1;
                continue;
            }
            // article form
            if (low == "a" && starts_with_vowel_sound(&next))
                || (low == "an"
                    && !next.is_empty()
                    && !starts_with_vowel_sound(&next)
                    && next.chars().all(char::is_alphabetic))
            {
                let fixed = if low == "a" { "an" } else { "a" };
                t[i] = match_case(&t[i], fixed);
                changed = true;
                i += 1;
                continue;
            }
            // "there is dog" → "there is a dog"
            if prev2 == "there" && prev == "is" {
                let e = lexicon::lookup(&low);
                let noun_next = e.pos == "NOUN" && e.feats.contains(&("Number", "Sing"));
                let adj_then_noun = e.pos == "ADJ" && lexicon::lookup(&next).pos == "NOUN";
                if noun_next || adj_then_noun {
                    let art = if starts_with_vowel_sound(&low) { "an" } else { "a" };
                    t.insert(i, art.to_string());
                    changed = true;
                    i += 2;
                    continue;
                }
            }
            // "listen music" → "listen to music"
            if lexicon::lookup(&low).lemma == "listen"
                && !next.is_empty()
                && next != "to"
                && !text::is_punct(&next)
            {
                t.insert(i + 1, "to".to_string());
                changed = true;
                i += 2;
                continue;
            }
            // "two dog" → "two dogs"
            if matches!(prev.as_str(), "two" | "three" | "many" | "these" | "those") {
                if let Some(pl) = lexicon::noun_plural(&low) {
                    if pl != low {
                        t[i] = match_case(&t[i], pl);
                        changed = true;
                        i += 1;
                        continue;
                    }
                }
            }
            // verb tense and agreement
            let base_lemma = if is_verb_lemma(&low) {
                Some(low.clone())
            } else {
                None
            };
            let s3_lemma = is_third_singular_verb(&low);
            let after_modal = matches!(
                prev.as_str(),
                "will" | "can" | "would" | "did" | "to" | "does" | "do" | "not"
            );
            let past_context = sentence_has_past_marker(&t, i);
            if !after_modal && !lexicon::lookup(&prev).pos.eq("DET") {
                if past_context {
                    if let Some(lemma) = base_lemma.as_deref().or(s3_lemma) {
                        if subject_before(&t, i).is_some() {
                            let past = lexicon::verb_forms(lemma).unwrap().2;
                            t[i] = match_case(&t[i], past);
                            changed = true;
                            i += 1;
                            continue;
                        }
                    }
                } else if let Some(lemma) = &base_lemma {
                    if subject_before(&t, i) == Some(Agreement::ThirdSingular) {
                        let s3 = lexicon::verb_forms(lemma).unwrap().1;
                        t[i] = match_case(&t[i], s3);
                        changed = true;
                        i += 1;
                        continue;
                    }
                } else if let Some(lemma) = s3_lemma {
                    if subject_before(&t, i) == Some(Agreement::Other) {
                        t[i] = match_case(&t[i], lemma);
                        changed = true;
                        i += 1;
                        continue;
                    }
                }
            }
            i += 1;
        }
        (t, changed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Agreement {
    ThirdSingular,
    Other,
}

/// Agreement class of a subject immediately before position `i`: a pronoun,
/// or a noun optionally preceded by a determiner and adjectives.
fn subject_before(t: &[String], i: usize) -> Option<Agreement> {
    if i == 0 {
        return None;
    }
    let prev = t[i - 1].to_lowercase();
    if THIRD_SINGULAR.contains(&prev.as_str()) {
        return Some(Agreement::ThirdSingular);
    }
    if NON_THIRD.contains(&prev.as_str()) {
        return Some(Agreement::Other);
    }
    let e = lexicon::lookup(&prev);
    if e.pos != "NOUN" && e.pos != "PROPN" {
        return None;
    }
    // a noun right after a verb or preposition is an object, not a subject
    let mut j = i - 1;
    while j > 0 && matches!(lexicon::lookup(&t[j - 1]).pos, "ADJ") {
        j -= 1;
    }
    if j > 0 {
        let before = lexicon::lookup(&t[j - 1]);
        let det = before.pos == "DET" || before.feats.contains(&("Poss", "Yes"));
        let starts_clause = matches!(before.pos, "PUNCT" | "CCONJ" | "SCONJ");
        if det {
            // coordinated subjects ("the boy and the girl") are left alone
            if j > 1 && matches!(lexicon::lookup(&t[j - 2]).pos, "VERB" | "ADP" | "CCONJ") {
                return None;
            }
        } else if !starts_clause {
            return None;
        }
        if det
            && !SINGULAR_DETS.contains(&t[j - 1].to_lowercase().as_str())
            && !matches!(t[j - 1].to_lowercase().as_str(), "these" | "those" | "some")
        {
            return None;
        }
    }
    if e.feats.contains(&("Number", "Plur")) {
        Some(Agreement::Other)
    } else {
        Some(Agreement::ThirdSingular)
    }
}

impl GecBackend for RuleGec {
    fn correct_text(&self, raw: &str) -> Result<String> {
        let tokens = text::tokenize(raw);
        let (fixed, changed) = self.correct_tokens(&tokens);
        Ok(if changed {
            detokenize(&fixed)
        } else {
            raw.to_string()
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EditOp {
    Insert,
    Delete,
    Substitute,
}

impl EditOp {
    pub fn prefix(self) -> &'static str {
        match self {
            EditOp::Insert => "M",
            EditOp::Delete => "U",
            EditOp::Substitute => "R",
        }
    }
}

/// Half-open token intervals into the raw and corrected token lists.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditSpan {
    pub raw_range: (usize, usize),
    pub corr_range: (usize, usize),
    pub operation: EditOp,
    #[serde(default)]
    pub error_type: Option<String>,
}

impl EditSpan {
    /// Number of unit token edits the span stands for.
    pub fn cost(&self) -> usize {
        let r = self.raw_range.1 - self.raw_range.0;
        let c = self.corr_range.1 - self.corr_range.0;
        r.max(c)
    }
}

pub fn edit_cost(edits: &[EditSpan]) -> usize {
    edits.iter().map(EditSpan::cost).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Step {
    Match,
    Sub,
    Del,
    Ins,
}

fn fold_eq(a: &str, b: &str) -> bool {
    a == b || a.to_lowercase() == b.to_lowercase()
}

/// Minimal unit-cost token edit sequence (match 0; insert, delete,
/// substitute 1). Ties prefer the diagonal, then deletion.
fn edit_steps(raw: &[String], corr: &[String]) -> Vec<Step> {
    let n = raw.len();
    let m = corr.len();
    let mut d = vec![vec![0usize; m + 1]; n + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for (j, cell) in d[0].iter_mut().enumerate() {
        *cell = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let sub = d[i - 1][j - 1] + usize::from(!fold_eq(&raw[i - 1], &corr[j - 1]));
            d[i][j] = sub.min(d[i - 1][j] + 1).min(d[i][j - 1] + 1);
        }
    }
    let mut steps = Vec::with_capacity(n.max(m));
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        if i > 0 && j > 0 {
            let eq = fold_eq(&raw[i - 1], &corr[j - 1]);
            if d[i][j] == d[i - 1][j - 1] + usize::from(!eq) {
                steps.push(if eq { Step::Match } else { Step::Sub });
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && d[i][j] == d[i - 1][j] + 1 {
            steps.push(Step::Del);
            i -= 1;
        } else {
            steps.push(Step::Ins);
            j -= 1;
        }
    }
    steps.reverse();
    steps
}

/// Aligns the token lists and merges adjacent token edits of the same
/// operation into maximal spans. Equality is case-insensitive.
pub fn align_edits(raw_tokens: &[String], corr_tokens: &[String]) -> Vec<EditSpan> {
    let mut spans: Vec<EditSpan> = Vec::new();
    let (mut i, mut j) = (0usize, 0usize);
    let mut last: Option<Step> = None;
    for step in edit_steps(raw_tokens, corr_tokens) {
        let op = match step {
            Step::Match => None,
            Step::Sub => Some(EditOp::Substitute),
            Step::Del => Some(EditOp::Delete),
            Step::Ins => Some(EditOp::Insert),
        };
        let (di, dj) = match step {
            Step::Match | Step::Sub => (1, 1),
            Step::Del => (1, 0),
            Step::Ins => (0, 1),
        };
        if let Some(op) = op {
            match spans.last_mut() {
                Some(s) if last == Some(step) && s.operation == op => {
                    s.raw_range.1 += di;
                    s.corr_range.1 += dj;
                }
                _ => spans.push(EditSpan {
                    raw_range: (i, i + di),
                    corr_range: (j, j + dj),
                    operation: op,
                    error_type: None,
                }),
            }
        }
        last = Some(step);
        i += di;
        j += dj;
    }
    spans
}

fn category(pos: &str) -> Option<&'static str> {
    Some(match pos {
        "ADJ" => "ADJ",
        "ADP" => "PREP",
        "ADV" => "ADV",
        "AUX" | "VERB" => "VERB",
        "CCONJ" | "SCONJ" => "CONJ",
        "DET" => "DET",
        "NOUN" | "PROPN" => "NOUN",
        "NUM" => "NUM",
        "PART" => "PART",
        "PRON" => "PRON",
        "PUNCT" => "PUNCT",
        _ => return None,
    })
}

/// Tense with bare and finite present forms both counted as present;
/// non-finite forms carry none.
fn tense(t: &TokenAnnotation) -> Option<&str> {
    match t.feat("Tense") {
        Some(v) => Some(v),
        None if matches!(t.feat("VerbForm"), Some("Inf") | Some("Fin")) => Some("Pres"),
        None => None,
    }
}

fn shared_category(anns: &[TokenAnnotation]) -> Option<&'static str> {
    let first = category(&anns.first()?.pos)?;
    anns.iter()
        .all(|a| category(&a.pos) == Some(first))
        .then_some(first)
}

/// Labels an edit as `<op>:<category>[:<refinement>]`, or [`OTHER`] when no
/// rule applies. Categories come from the corrected side (the raw side for
/// unnecessary tokens); same-lemma replacements are refined by morphology.
pub fn classify_edit(edit: &EditSpan, raw_ann: &[TokenAnnotation], corr_ann: &[TokenAnnotation]) -> String {
    let raw = &raw_ann[edit.raw_range.0..edit.raw_range.1];
    let corr = &corr_ann[edit.corr_range.0..edit.corr_range.1];
    let op = edit.operation.prefix();
    match edit.operation {
        EditOp::Insert => shared_category(corr).map_or(OTHER.to_string(), |c| format!("{op}:{c}")),
        EditOp::Delete => shared_category(raw).map_or(OTHER.to_string(), |c| format!("{op}:{c}")),
        EditOp::Substitute => {
            if raw.len() == 1 && corr.len() == 1 {
                let (r, c) = (&raw[0], &corr[0]);
                if let Some(cat) = category(&c.pos) {
                    let irregular = !lexicon::is_known(&r.text)
                        && matches!(cat, "VERB" | "NOUN" | "ADJ")
                        && r.text.to_lowercase().starts_with(&c.lemma.to_lowercase());
                    if irregular {
                        return format!("{op}:{cat}:INFL");
                    }
                    if r.lemma.eq_ignore_ascii_case(&c.lemma) && cat != "PUNCT" {
                        return format!("{op}:{}", refine(cat, r, c));
                    }
                }
            }
            shared_category(corr).map_or(OTHER.to_string(), |c| format!("{op}:{c}"))
        }
    }
}

fn refine(cat: &str, r: &TokenAnnotation, c: &TokenAnnotation) -> String {
    match cat {
        "VERB" => {
            if tense(r).is_some() && tense(c).is_some() && tense(r) != tense(c) {
                "VERB:TENSE".into()
            } else if r.feat("Number") != c.feat("Number") || r.feat("Person") != c.feat("Person") {
                "VERB:SVA".into()
            } else if r.feat("VerbForm") != c.feat("VerbForm") {
                "VERB:FORM".into()
            } else {
                "MORPH".into()
            }
        }
        "NOUN" if r.feat("Number") != c.feat("Number") => "NOUN:NUM".into(),
        "ADJ" if r.feat("Degree") != c.feat("Degree") => "ADJ:FORM".into(),
        "DET" => "DET:FORM".into(),
        _ => "MORPH".into(),
    }
}

/// Ordered error types: the `capacity − 1` most frequent training labels,
/// then [`OTHER`]. Feature vectors always have `capacity` entries; slots past
/// the label list stay zero.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorTaxonomy {
    pub labels: Vec<String>,
    pub capacity: usize,
}

impl ErrorTaxonomy {
    pub fn index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// Index of `label`, or of [`OTHER`] for labels outside the taxonomy.
    pub fn index_or_other(&self, label: &str) -> usize {
        self.index(label)
            .or_else(|| self.index(OTHER))
            .expect("taxonomy always holds OTHER")
    }

    /// Maps labels outside the taxonomy onto [`OTHER`].
    pub fn map_labels(&self, labels: &[String]) -> Vec<String> {
        labels
            .iter()
            .map(|l| self.labels[self.index_or_other(l)].clone())
            .collect()
    }
}

pub fn freeze_taxonomy<'a>(
    training_labels: impl IntoIterator<Item = &'a str>,
    capacity: usize,
) -> Result<ErrorTaxonomy> {
    if capacity == 0 {
        return Err(AsaError::Input("taxonomy capacity must be at least 1".into()));
    }
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for l in training_labels {
        if l != OTHER {
            *counts.entry(l).or_insert(0) += 1;
        }
    }
    let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let mut labels: Vec<String> = ranked
        .into_iter()
        .take(capacity - 1)
        .map(|(l, _)| l.to_string())
        .collect();
    labels.push(OTHER.to_string());
    Ok(ErrorTaxonomy { labels, capacity })
}

/// Drops morphological refinements: `R:VERB:TENSE` → `R:VERB`. This is the
/// coarse scheme the fine-grained types refine.
pub fn coarse_label(label: &str) -> String {
    let mut parts = label.splitn(3, ':');
    match (parts.next(), parts.next()) {
        (Some(op), Some(cat)) => format!("{op}:{cat}"),
        _ => label.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrammarFeatureVector {
    /// `counts[k] / word_count`, length = taxonomy capacity.
    pub freqs: Vec<f64>,
    pub counts: Vec<u32>,
    pub word_count: usize,
}

/// Counts labels per taxonomy slot and divides by the whitespace word count
/// of the raw text.
pub fn grammar_features(
    taxonomy: &ErrorTaxonomy,
    labels: &[String],
    raw_text: &str,
) -> Result<GrammarFeatureVector> {
    let word_count = text::word_count(raw_text);
    if word_count == 0 {
        return Err(AsaError::Input("raw text has no words".into()));
    }
    let mut counts = vec![0u32; taxonomy.capacity];
    for l in labels {
        let k = taxonomy.index(l).ok_or_else(|| AsaError::Taxonomy(l.clone()))?;
        counts[k] += 1;
    }
    let freqs = counts.iter().map(|&c| c as f64 / word_count as f64).collect();
    Ok(GrammarFeatureVector {
        freqs,
        counts,
        word_count,
    })
}

/// Everything the grammar stage derives from one transcript.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrammarAnalysis {
    pub raw_text: String,
    pub corrected_text: String,
    pub raw_tokens: Vec<String>,
    pub corr_tokens: Vec<String>,
    pub edits: Vec<EditSpan>,
}

impl GrammarAnalysis {
    pub fn labels(&self) -> Vec<String> {
        self.edits
            .iter()
            .map(|e| e.error_type.clone().unwrap_or_else(|| OTHER.to_string()))
            .collect()
    }

    pub fn word_count(&self) -> usize {
        text::word_count(&self.raw_text)
    }

    /// M2 block: the raw sentence, then one line per edit with token span,
    /// type and correction (`-NONE-` for deletions).
    pub fn to_m2(&self) -> String {
        let mut out = format!("S {}\n", self.raw_tokens.join(" "));
        for e in &self.edits {
            let corr = &self.corr_tokens[e.corr_range.0..e.corr_range.1];
            let corr = if corr.is_empty() {
                "-NONE-".to_string()
            } else {
                corr.join(" ")
            };
            let _ = writeln!(
                out,
                "A {} {}|||{}|||{}|||REQUIRED|||-NONE-|||0",
                e.raw_range.0,
                e.raw_range.1,
                e.error_type.as_deref().unwrap_or(OTHER),
                corr
            );
        }
        out
    }
}

/// Correct, align and classify one transcript.
pub fn analyze(
    gec: &dyn GecBackend,
    annotator: &dyn SyntacticAnnotationBackend,
    raw_text: &str,
) -> Result<GrammarAnalysis> {
    let corrected_text = correct(gec, raw_text)?;
    let raw_tokens = text::tokenize(raw_text);
    let corr_tokens = text::tokenize(&corrected_text);
    let raw_ann = annotator.annotate_tokens(&raw_tokens)?;
    let corr_ann = annotator.annotate_tokens(&corr_tokens)?;
    let mut edits = align_edits(&raw_tokens, &corr_tokens);
    for e in &mut edits {
        e.error_type = Some(classify_edit(e, &raw_ann, &corr_ann));
    }
    Ok(GrammarAnalysis {
        raw_text: raw_text.to_string(),
        corrected_text,
        raw_tokens,
        corr_tokens,
        edits,
    })
}
