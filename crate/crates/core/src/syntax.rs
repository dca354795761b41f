//! Per-token syntactic features: one-hot part of speech, one-hot dependency
//! relation and multi-hot morphology, 247 dimensions per token.
//!
//! Layout of a token vector:
//!
//! | block       | slots                                   |
//! |-------------|-----------------------------------------|
//! | POS         | 17 universal tags + UNK = 18             |
//! | dependency  | 41 relations + UNK = 42                  |
//! | morphology  | 186 `Feature=Value` pairs + UNK = 187     |
//!
//! The morphology inventory is frozen from training annotations (most
//! frequent pairs first) and persisted with the model as a [`SyntaxSchema`].

use std::collections::BTreeMap;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{AsaError, Result};
use crate::lexicon;
use crate::text;

pub const SYNTAX_DIM: usize = 247;

pub const UPOS: &[&str] = &[
    "ADJ", "ADP", "ADV", "AUX", "CCONJ", "DET", "INTJ", "NOUN", "NUM", "PART", "PRON", "PROPN", "PUNCT",
    "SCONJ", "SYM", "VERB", "X",
];

pub const DEPRELS: &[&str] = &[
    "acl",
    "advcl",
    "advmod",
    "amod",
    "appos",
    "aux",
    "case",
    "cc",
    "ccomp",
    "clf",
    "compound",
    "conj",
    "cop",
    "csubj",
    "dep",
    "det",
    "discourse",
    "dislocated",
    "expl",
    "fixed",
    "flat",
    "goeswith",
    "iobj",
    "list",
    "mark",
    "nmod",
    "nsubj",
    "nummod",
    "obj",
    "obl",
    "orphan",
    "parataxis",
    "punct",
    "reparandum",
    "root",
    "vocative",
    "xcomp",
    "nmod:poss",
    "compound:prt",
    "acl:relcl",
    "obl:tmod",
];

const MORPH_SLOTS: usize = SYNTAX_DIM - (UPOS.len() + 1) - (DEPRELS.len() + 1) - 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenAnnotation {
    pub text: String,
    pub pos: String,
    pub lemma: String,
    /// 1-based head index; 0 for the sentence root.
    pub head: usize,
    pub dep: String,
    pub feats: Vec<(String, String)>,
}

impl TokenAnnotation {
    pub fn feat(&self, key: &str) -> Option<&str> {
        self.feats.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }
}

pub trait SyntacticAnnotationBackend: Send + Sync {
    /// Annotates an already tokenized sequence, one annotation per token.
    fn annotate_tokens(&self, tokens: &[String]) -> Result<Vec<TokenAnnotation>>;

    fn annotate(&self, text: &str) -> Result<Vec<TokenAnnotation>> {
        self.annotate_tokens(&text::tokenize(text))
    }
}

/// Lexicon tagger with a heuristic dependency labeller.
#[derive(Debug, Clone, Copy, Default)]
pub struct RuleAnnotator;

fn is_nominal(pos: &str) -> bool {
    matches!(pos, "NOUN" | "PROPN" | "PRON" | "NUM")
}

impl SyntacticAnnotationBackend for RuleAnnotator {
    fn annotate_tokens(&self, tokens: &[String]) -> Result<Vec<TokenAnnotation>> {
        let mut out: Vec<TokenAnnotation> = tokens
            .iter()
            .map(|t| {
                let e = lexicon::lookup(t);
                TokenAnnotation {
                    text: t.clone(),
                    pos: e.pos.to_string(),
                    lemma: e.lemma,
                    head: 0,
                    dep: String::new(),
                    feats: e
                        .feats
                        .iter()
                        .map(|(k, v)| (k.to_string(), v.to_string()))
                        .collect(),
                }
            })
            .collect();
        // "to" before a verb is an infinitive marker
        for i in 0..out.len() {
            if out[i].text.eq_ignore_ascii_case("to") && out.get(i + 1).is_some_and(|n| n.pos == "VERB") {
                out[i].pos = "PART".into();
            }
        }
        let mut start = 0;
        while start < out.len() {
            let mut end = start;
            while end < out.len() {
                let terminal = matches!(out[end].text.as_str(), "." | "!" | "?");
                end += 1;
                if terminal {
                    break;
                }
            }
            label_sentence(&mut out, start, end);
            start = end;
        }
        Ok(out)
    }
}

fn label_sentence(a: &mut [TokenAnnotation], start: usize, end: usize) {
    let find =
        |a: &[TokenAnnotation], pred: &dyn Fn(&TokenAnnotation) -> bool| (start..end).find(|&i| pred(&a[i]));
    let root = find(a, &|t| t.pos == "VERB")
        .or_else(|| find(a, &|t| t.pos == "AUX"))
        .or_else(|| find(a, &|t| is_nominal(&t.pos) || t.pos == "ADJ"))
        .unwrap_or(start);
    let has_verb = find(a, &|t| t.pos == "VERB").is_some();
    let next_nominal = |a: &[TokenAnnotation], from: usize, within: usize| {
        (from + 1..end.min(from + 1 + within))
            .find(|&j| matches!(a[j].pos.as_str(), "NOUN" | "PROPN" | "PRON" | "NUM"))
    };
    let mut seen_subject = false;
    let mut seen_object = false;
    for i in start..end {
        let h1 = |j: usize| j + 1;
        let (dep, head): (&str, usize) = if i == root {
            ("root", 0)
        } else {
            let pos = a[i].pos.clone();
            match pos.as_str() {
                "PUNCT" => ("punct", h1(root)),
                "DET" => match next_nominal(a, i, 3) {
                    Some(n) => ("det", h1(n)),
                    None => ("det", h1(root)),
                },
                "NUM" if next_nominal(a, i, 2).is_some() => ("nummod", h1(next_nominal(a, i, 2).unwrap())),
                "ADJ" => match next_nominal(a, i, 2) {
                    Some(n) if a[n].pos != "PRON" => ("amod", h1(n)),
                    _ => ("xcomp", h1(root)),
                },
                "ADP" => match next_nominal(a, i, 3) {
                    Some(n) => ("case", h1(n)),
                    None => ("compound:prt", h1(root)),
                },
                "AUX" => {
                    if !has_verb {
                        ("cop", h1(root))
                    } else {
                        ("aux", h1(root))
                    }
                }
                "PART" => {
                    if a[i].text.eq_ignore_ascii_case("to") {
                        ("mark", h1((i + 1).min(end - 1)))
                    } else {
                        ("advmod", h1(root))
                    }
                }
                "ADV" => ("advmod", h1(root)),
                "CCONJ" => ("cc", h1((i + 1).min(end - 1))),
                "SCONJ" => ("mark", h1(root)),
                "INTJ" => ("discourse", h1(root)),
                "VERB" => {
                    let prev = (start..i).rev().find(|&j| a[j].pos != "ADV");
                    match prev.map(|j| a[j].pos.as_str()) {
                        Some("CCONJ") => ("conj", h1(root)),
                        Some("PART") => ("xcomp", h1(root)),
                        _ => ("advcl", h1(root)),
                    }
                }
                "PRON" | "NOUN" | "PROPN" | "NUM" => {
                    let prev = (start..i)
                        .rev()
                        .find(|&j| !matches!(a[j].pos.as_str(), "DET" | "ADJ" | "NUM"));
                    let after_adp = prev.is_some_and(|j| a[j].pos == "ADP");
                    if a[i].feat("Poss") == Some("Yes") {
                        match next_nominal(a, i, 3) {
                            Some(n) => ("nmod:poss", h1(n)),
                            None => ("nmod", h1(root)),
                        }
                    } else if a[i].text.eq_ignore_ascii_case("there") && i < root {
                        ("expl", h1(root))
                    } else if after_adp {
                        ("obl", h1(root))
                    } else if i < root && !seen_subject {
                        seen_subject = true;
                        ("nsubj", h1(root))
                    } else if i > root && !seen_object {
                        seen_object = true;
                        ("obj", h1(root))
                    } else {
                        ("conj", h1(root))
                    }
                }
                _ => ("dep", h1(root)),
            }
        };
        a[i].dep = dep.to_string();
        a[i].head = head;
    }
}

/// Label → index maps for the three blocks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntaxSchema {
    pub pos: Vec<String>,
    pub dep: Vec<String>,
    /// `Feature=Value` strings, at most the morphology slot count.
    pub morph: Vec<String>,
}

impl Default for SyntaxSchema {
    /// Universal inventories with an empty morphology ranking.
    fn default() -> Self {
        SyntaxSchema {
            pos: UPOS.iter().map(|s| s.to_string()).collect(),
            dep: DEPRELS.iter().map(|s| s.to_string()).collect(),
            morph: Vec::new(),
        }
    }
}

impl SyntaxSchema {
    pub const MORPH_SLOTS: usize = MORPH_SLOTS;

    pub fn dim(&self) -> usize {
        SYNTAX_DIM
    }

    fn pos_offset(&self) -> usize {
        0
    }
    fn dep_offset(&self) -> usize {
        UPOS.len() + 1
    }
    fn morph_offset(&self) -> usize {
        UPOS.len() + 1 + DEPRELS.len() + 1
    }

    /// Index of the POS slot for `label`, or of POS UNK.
    pub fn pos_index(&self, label: &str) -> usize {
        self.pos_offset() + self.pos.iter().position(|p| p == label).unwrap_or(UPOS.len())
    }

    pub fn dep_index(&self, label: &str) -> usize {
        self.dep_offset() + self.dep.iter().position(|p| p == label).unwrap_or(DEPRELS.len())
    }

    pub fn morph_index(&self, pair: &str) -> usize {
        self.morph_offset() + self.morph.iter().position(|p| p == pair).unwrap_or(MORPH_SLOTS)
    }

    pub fn encode_token(&self, t: &TokenAnnotation) -> Vec<f64> {
        let mut v = vec![0.0; SYNTAX_DIM];
        v[self.pos_index(&t.pos)] = 1.0;
        v[self.dep_index(&t.dep)] = 1.0;
        for (k, val) in &t.feats {
            v[self.morph_index(&format!("{k}={val}"))] = 1.0;
        }
        v
    }

    /// The row used for an empty transcript: POS UNK and dependency UNK.
    pub fn padding_row(&self) -> Vec<f64> {
        let mut v = vec![0.0; SYNTAX_DIM];
        v[self.pos_offset() + UPOS.len()] = 1.0;
        v[self.dep_offset() + DEPRELS.len()] = 1.0;
        v
    }

    pub fn encode(&self, annotations: &[TokenAnnotation]) -> SyntaxSequence {
        if annotations.is_empty() {
            return SyntaxSequence {
                vectors: Array2::from_shape_vec((1, SYNTAX_DIM), self.padding_row()).unwrap(),
            };
        }
        let flat: Vec<f64> = annotations.iter().flat_map(|t| self.encode_token(t)).collect();
        SyntaxSequence {
            vectors: Array2::from_shape_vec((annotations.len(), SYNTAX_DIM), flat).unwrap(),
        }
    }

    /// Ranks `Feature=Value` pairs by training frequency (ties by name) and
    /// keeps as many as there are morphology slots.
    pub fn freeze<'a>(training: impl IntoIterator<Item = &'a TokenAnnotation>) -> Self {
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for t in training {
            for (k, v) in &t.feats {
                *counts.entry(format!("{k}={v}")).or_insert(0) += 1;
            }
        }
        let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        ranked.truncate(MORPH_SLOTS);
        SyntaxSchema {
            morph: ranked.into_iter().map(|(p, _)| p).collect(),
            ..SyntaxSchema::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntaxSequence {
    /// L × 247.
    pub vectors: Array2<f64>,
}

pub fn syntax_features(
    backend: &dyn SyntacticAnnotationBackend,
    schema: &SyntaxSchema,
    transcript: &str,
) -> Result<SyntaxSequence> {
    if transcript.trim().is_empty() {
        return Err(AsaError::Input("transcript is empty".into()));
    }
    let tokens = text::tokenize(transcript);
    let ann = backend.annotate_tokens(&tokens)?;
    if ann.len() != tokens.len() {
        return Err(AsaError::Annotation(format!(
            "backend returned {} annotations for {} tokens",
            ann.len(),
            tokens.len()
        )));
    }
    Ok(schema.encode(&ann))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::s;

    #[test]
    fn block_sizes_add_up() {
        assert_eq!(UPOS.len() + 1 + DEPRELS.len() + 1 + MORPH_SLOTS + 1, SYNTAX_DIM);
        assert_eq!(MORPH_SLOTS, 186);
    }

    #[test]
    fn dogs_run() {
        let seq = syntax_features(&RuleAnnotator, &SyntaxSchema::default(), "dogs run").unwrap();
        assert_eq!(seq.vectors.dim(), (2, 247));
        let schema = SyntaxSchema::default();
        for row in seq.vectors.rows() {
            assert_eq!(row.slice(s![0..18]).sum(), 1.0);
            assert_eq!(row.slice(s![18..60]).sum(), 1.0);
        }
        assert_eq!(seq.vectors[[0, schema.pos_index("NOUN")]], 1.0);
        assert_eq!(seq.vectors[[1, schema.pos_index("VERB")]], 1.0);
        assert_eq!(seq.vectors[[0, schema.dep_index("nsubj")]], 1.0);
        assert_eq!(seq.vectors[[1, schema.dep_index("root")]], 1.0);
    }

    #[test]
    fn lone_punctuation() {
        let schema = SyntaxSchema::default();
        let seq = syntax_features(&RuleAnnotator, &schema, "?").unwrap();
        assert_eq!(seq.vectors.dim(), (1, 247));
        assert_eq!(seq.vectors[[0, schema.pos_index("PUNCT")]], 1.0);
    }

    struct Fixed;

    impl SyntacticAnnotationBackend for Fixed {
        fn annotate_tokens(&self, tokens: &[String]) -> Result<Vec<TokenAnnotation>> {
            Ok(tokens
                .iter()
                .map(|t| TokenAnnotation {
                    text: t.clone(),
                    pos: "VERB".into(),
                    lemma: t.clone(),
                    head: 0,
                    dep: "made-up".into(),
                    feats: vec![("Tense".into(), "Past".into()), ("Weird".into(), "Yes".into())],
                })
                .collect())
        }
    }

    #[test]
    fn fixed_backend_exact_pattern() {
        let schema = SyntaxSchema {
            morph: vec!["Number=Sing".into(), "Tense=Past".into()],
            ..SyntaxSchema::default()
        };
        let seq = syntax_features(&Fixed, &schema, "walked").unwrap();
        let mut expected = vec![0.0; 247];
        expected[15] = 1.0; // VERB is the 16th universal tag
        expected[18 + 41] = 1.0; // dependency UNK
        expected[60 + 1] = 1.0; // Tense=Past, second morphology slot
        expected[60 + 186] = 1.0; // Weird=Yes → morphology UNK
        assert_eq!(seq.vectors.row(0).to_vec(), expected);
    }

    #[test]
    fn freeze_ranks_by_frequency() {
        let ann = RuleAnnotator
            .annotate("The dogs run. The dog runs. He ran.")
            .unwrap();
        let schema = SyntaxSchema::freeze(&ann);
        assert!(schema.morph.len() <= SyntaxSchema::MORPH_SLOTS);
        let counts = |p: &str| {
            ann.iter()
                .filter(|t| t.feats.iter().any(|(k, v)| format!("{k}={v}") == p))
                .count()
        };
        for w in schema.morph.windows(2) {
            assert!(counts(&w[0]) >= counts(&w[1]));
        }
    }

    #[test]
    fn empty_transcript_rejected_but_padding_encodes() {
        assert!(syntax_features(&RuleAnnotator, &SyntaxSchema::default(), " ").is_err());
        let pad = SyntaxSchema::default().encode(&[]);
        assert_eq!(pad.vectors.dim(), (1, 247));
        assert_eq!(pad.vectors.row(0).sum(), 2.0);
    }

    #[test]
    fn heads_are_in_range() {
        let ann = RuleAnnotator
            .annotate("There is a big dog in the park. My friend wants to play with it and we run!")
            .unwrap();
        for t in &ann {
            assert!(t.head <= ann.len());
            assert!(!t.dep.is_empty());
        }
        assert_eq!(ann[0].dep, "expl");
        assert_eq!(ann.iter().filter(|t| t.dep == "root").count(), 2);
    }
}
