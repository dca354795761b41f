//! Response splitting: turns one consolidated answer into one segment per
//! question.
//!
//! The primary path sends an extraction prompt to an instruction-following
//! model and parses its reply. [`fallback_split`] is a deterministic lexical
//! splitter used when no model is configured, and
//! [`LexicalSplitGenerator`] wraps it behind the same text-generation contract
//! so the prompt/parse path can run without a model.
//!
//! # Prompt layout and escaping
//!
//! Questions are listed one per line as `[[Q<n>]] <question>`; the answer sits
//! between `<<<` and `>>>` lines. The model must reply with one
//! `[[Q<n>]] <text>` line per question, writing `NO_ANSWER` when the answer
//! does not address that question.
//!
//! Question and answer text is escaped before insertion so it can never forge
//! a delimiter: `\` becomes `\\`, `[` becomes `\[`, `<` becomes `\<`,
//! `>` becomes `\>` and a newline becomes `\n`. [`unescape`] reverses this.

use std::collections::BTreeSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::backend::{GenerationRequest, TextGenerator};
use crate::error::{AsaError, Result};
use crate::lexicon;
use crate::text;

pub const PROMPT_SCAFFOLD: &str = "You are a helpful assistant. You are given several questions and a single consolidated answer. The answer contains the information needed to respond to each question. Your task: For each question below, please provide the relevant text from the answer. Only output what is found in the answer; do not add, rephrase or invent anything.";

const FORMAT_INSTRUCTIONS: &str = "Format instructions:
- For every question, output exactly one line of the form [[Q<n>]] <text>, where <n> is the question number.
- <text> must be copied verbatim from the answer. If the answer does not address the question, write [[Q<n>]] NO_ANSWER.
- Output the lines in question order and nothing else.";

const REINFORCEMENT: &str =
    "IMPORTANT: your previous reply could not be parsed. Reply with exactly one [[Q<n>]] line per question, numbered from 1, and no other text.";

pub const NO_ANSWER: &str = "NO_ANSWER";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitSource {
    Response,
    Exemplar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitAlignment {
    pub source: SplitSource,
    pub segments: Vec<String>,
    pub grounded: Vec<bool>,
}

impl SplitAlignment {
    /// Wraps segments that were authored per question (pre-split exemplars).
    pub fn presplit(source: SplitSource, segments: Vec<String>) -> Self {
        let grounded = vec![true; segments.len()];
        SplitAlignment {
            source,
            segments,
            grounded,
        }
    }

    pub fn k(&self) -> usize {
        self.segments.len()
    }
}

pub fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '[' => out.push_str("\\["),
            '<' => out.push_str("\\<"),
            '>' => out.push_str("\\>"),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    out
}

pub fn unescape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c == '\\' {
            match chars.next() {
                Some('n') => out.push('\n'),
                Some(other) => out.push(other),
                None => out.push('\\'),
            }
        } else {
            out.push(c);
        }
    }
    out
}

pub fn build_prompt(questions: &[String], answer_text: &str) -> String {
    let mut p = String::new();
    p.push_str(PROMPT_SCAFFOLD);
    p.push_str("\n\n");
    p.push_str(FORMAT_INSTRUCTIONS);
    p.push_str("\n\nQuestions:\n");
    for (i, q) in questions.iter().enumerate() {
        p.push_str(&format!("[[Q{}]] {}\n", i + 1, escape(q)));
    }
    p.push_str("\nAnswer:\n<<<\n");
    p.push_str(&escape(answer_text));
    p.push_str("\n>>>\n");
    p
}

/// Recovers questions and answer from a prompt made by [`build_prompt`].
pub fn parse_prompt(prompt: &str) -> Option<(Vec<String>, String)> {
    let q_start = prompt.find("\nQuestions:\n")? + "\nQuestions:\n".len();
    let a_marker = prompt.find("\nAnswer:\n<<<\n")?;
    let questions_block = &prompt[q_start..a_marker];
    let mut questions = Vec::new();
    for (i, line) in questions_block.lines().filter(|l| !l.is_empty()).enumerate() {
        let tag = format!("[[Q{}]] ", i + 1);
        questions.push(unescape(line.strip_prefix(&tag)?));
    }
    let a_start = a_marker + "\nAnswer:\n<<<\n".len();
    let a_end = prompt[a_start..].find("\n>>>")? + a_start;
    Some((questions, unescape(&prompt[a_start..a_end])))
}

/// Parses a reply into exactly `k` segments. Text before the first marker is
/// ignored; anything else that deviates from the format is an error.
pub fn parse_reply(reply: &str, k: usize) -> std::result::Result<Vec<String>, String> {
    let mut markers = Vec::new();
    let bytes = reply.as_bytes();
    let mut i = 0;
    while let Some(pos) = reply[i..].find("[[Q") {
        let at = i + pos;
        let digits_start = at + 3;
        let mut j = digits_start;
        while j < bytes.len() && bytes[j].is_ascii_digit() {
            j += 1;
        }
        if j > digits_start && reply[j..].starts_with("]]") {
            let n: usize = reply[digits_start..j]
                .parse()
                .map_err(|_| "bad question number".to_string())?;
            markers.push((at, j + 2, n));
            i = j + 2;
        } else {
            i = digits_start;
        }
    }
    if markers.len() != k {
        return Err(format!("expected {k} question markers, found {}", markers.len()));
    }
    let mut segments = Vec::with_capacity(k);
    for (idx, &(_, body_start, n)) in markers.iter().enumerate() {
        if n != idx + 1 {
            return Err(format!("marker {} out of order (found Q{n})", idx + 1));
        }
        let body_end = markers.get(idx + 1).map_or(reply.len(), |m| m.0);
        let body = unescape(reply[body_start..body_end].trim());
        if body == NO_ANSWER {
            segments.push(String::new());
        } else {
            segments.push(body);
        }
    }
    Ok(segments)
}

/// True when the segment, or else every sentence of it, occurs contiguously
/// in the source after whitespace and case folding. Empty segments are
/// vacuously grounded.
pub fn is_grounded(segment: &str, source: &str) -> bool {
    let seg = text::fold(segment);
    if seg.is_empty() {
        return true;
    }
    let src = text::fold(source);
    if src.contains(&seg) {
        return true;
    }
    text::sentences(segment)
        .iter()
        .all(|s| src.contains(&text::fold(s)))
}

/// Model-backed splitter.
#[derive(Clone)]
pub struct SplitterBackend {
    generator: Arc<dyn TextGenerator>,
    pub max_tokens: u32,
    /// Replace ungrounded segments with the empty string.
    pub strict: bool,
}

impl std::fmt::Debug for SplitterBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SplitterBackend")
            .field("max_tokens", &self.max_tokens)
            .field("strict", &self.strict)
            .finish_non_exhaustive()
    }
}

impl SplitterBackend {
    pub fn new(generator: Arc<dyn TextGenerator>) -> Self {
        SplitterBackend {
            generator,
            max_tokens: 1024,
            strict: false,
        }
    }

    pub fn strict(mut self, strict: bool) -> Self {
        self.strict = strict;
        self
    }
}

pub fn split_response(
    backend: &SplitterBackend,
    questions: &[String],
    answer_text: &str,
) -> Result<SplitAlignment> {
    if questions.is_empty() {
        return Err(AsaError::Input("no questions to split against".into()));
    }
    let k = questions.len();
    if answer_text.trim().is_empty() {
        return Ok(SplitAlignment::presplit(
            SplitSource::Response,
            vec![String::new(); k],
        ));
    }
    let prompt = build_prompt(questions, answer_text);
    let first = backend
        .generator
        .generate(&GenerationRequest::greedy(prompt.clone(), backend.max_tokens))?;
    let segments = match parse_reply(&first, k) {
        Ok(s) => s,
        Err(_) => {
            let retry_prompt = format!("{prompt}\n{REINFORCEMENT}\n");
            let second = backend
                .generator
                .generate(&GenerationRequest::greedy(retry_prompt, backend.max_tokens))?;
            parse_reply(&second, k).map_err(|message| AsaError::Splitting {
                message,
                raw: second.clone(),
            })?
        }
    };
    let grounded: Vec<bool> = segments.iter().map(|s| is_grounded(s, answer_text)).collect();
    let segments = if backend.strict {
        segments
            .into_iter()
            .zip(&grounded)
            .map(|(s, &g)| if g { s } else { String::new() })
            .collect()
    } else {
        segments
    };
    Ok(SplitAlignment {
        source: SplitSource::Response,
        segments,
        grounded,
    })
}

/// Question words that signal which kind of answer sentence belongs to a
/// question, paired with the answer-side words they attract.
const CUES: &[(&[&str], &[&str])] = &[
    (
        &["picture", "see", "describe", "image", "show", "shows"],
        &["see", "there", "picture", "shows", "can"],
    ),
    (
        &["next", "happen", "happens", "after", "future"],
        &["then", "next", "will", "soon", "later", "after", "going"],
    ),
    (
        &["ever", "your", "experience", "yourself", "usually"],
        &["i", "my", "me", "we", "our", "usually", "ever"],
    ),
    (&["why", "reason"], &["because", "so", "reason"]),
    (
        &["where"],
        &["in", "on", "at", "near", "under", "behind", "beside"],
    ),
    (
        &["weather"],
        &[
            "sunny", "rain", "raining", "rainy", "cloudy", "hot", "cold", "windy",
        ],
    ),
];

fn lemma_set(s: &str) -> BTreeSet<String> {
    text::content_words(s)
        .iter()
        .map(|w| lexicon::lookup(w).lemma.to_lowercase())
        .collect()
}

fn cue_set(question: &str) -> BTreeSet<&'static str> {
    let words: BTreeSet<String> = text::folded_tokens(question).into_iter().collect();
    CUES.iter()
        .filter(|(triggers, _)| triggers.iter().any(|t| words.contains(*t)))
        .flat_map(|(_, attracts)| attracts.iter().copied())
        .collect()
}

/// Lexical overlap between a sentence and a question: shared content lemmas
/// plus answer cues attracted by the question's wording.
pub fn overlap_score(sentence: &str, question: &str) -> usize {
    let shared = lemma_set(sentence).intersection(&lemma_set(question)).count();
    let tokens: BTreeSet<String> = text::folded_tokens(sentence).into_iter().collect();
    let cued = cue_set(question).iter().filter(|c| tokens.contains(**c)).count();
    shared + cued
}

/// Deterministic splitter: each sentence goes to the question with the
/// highest [`overlap_score`], the earlier question winning ties; sentences
/// are concatenated per question in answer order.
pub fn fallback_split(questions: &[String], answer_text: &str) -> SplitAlignment {
    let k = questions.len();
    let mut per_question: Vec<Vec<String>> = vec![Vec::new(); k];
    if k > 0 {
        for sentence in text::sentences(answer_text) {
            let mut best = 0;
            let mut best_score = overlap_score(&sentence, &questions[0]);
            for (j, q) in questions.iter().enumerate().skip(1) {
                let s = overlap_score(&sentence, q);
                if s > best_score {
                    best = j;
                    best_score = s;
                }
            }
            per_question[best].push(sentence);
        }
    }
    let segments: Vec<String> = per_question.into_iter().map(|v| v.join(" ")).collect();
    let grounded = segments.iter().map(|s| is_grounded(s, answer_text)).collect();
    SplitAlignment {
        source: SplitSource::Response,
        segments,
        grounded,
    }
}

/// Local stand-in for an extraction model: reads the questions and answer
/// back out of the prompt and replies in the expected format using
/// [`fallback_split`].
#[derive(Debug, Clone, Copy, Default)]
pub struct LexicalSplitGenerator;

impl TextGenerator for LexicalSplitGenerator {
    fn generate(&self, request: &GenerationRequest) -> Result<String> {
        let (questions, answer) = parse_prompt(&request.prompt)
            .ok_or_else(|| AsaError::Transport("prompt not in the splitter layout".into()))?;
        let split = fallback_split(&questions, &answer);
        let mut out = String::new();
        for (i, seg) in split.segments.iter().enumerate() {
            let body = if seg.is_empty() {
                NO_ANSWER.to_string()
            } else {
                escape(seg)
            };
            out.push_str(&format!("[[Q{}]] {}\n", i + 1, body));
        }
        Ok(out)
    }
}

/// Either a model-backed or the deterministic lexical splitter.
#[derive(Debug, Clone)]
pub enum Splitter {
    Model(SplitterBackend),
    Fallback,
}

impl Splitter {
    pub fn split(&self, questions: &[String], answer_text: &str) -> Result<SplitAlignment> {
        match self {
            Splitter::Model(b) => split_response(b, questions, answer_text),
            Splitter::Fallback => Ok(fallback_split(questions, answer_text)),
        }
    }

    pub fn split_as(
        &self,
        source: SplitSource,
        questions: &[String],
        answer_text: &str,
    ) -> Result<SplitAlignment> {
        let mut a = self.split(questions, answer_text)?;
        a.source = source;
        Ok(a)
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Mutex;

    use super::*;

    fn qs(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    /// Replays canned replies in order.
    struct Scripted(Mutex<Vec<String>>);

    impl TextGenerator for Scripted {
        fn generate(&self, _r: &GenerationRequest) -> Result<String> {
            let mut v = self.0.lock().unwrap();
            if v.is_empty() {
                return Err(AsaError::Transport("script exhausted".into()));
            }
            Ok(v.remove(0))
        }
    }

    fn scripted(replies: &[&str]) -> SplitterBackend {
        SplitterBackend::new(Arc::new(Scripted(Mutex::new(
            replies.iter().map(|s| s.to_string()).collect(),
        ))))
    }

    #[test]
    fn prompt_contains_scaffold_and_questions() {
        let p = build_prompt(&qs(&["Who?", "Why?"]), "A. B.");
        assert!(p.contains("Only output what is found in the answer"));
        assert!(p.starts_with("You are a helpful assistant."));
        assert!(p.contains("[[Q1]] Who?\n"));
        assert!(p.contains("[[Q2]] Why?\n"));
        assert!(p.contains("<<<\nA. B.\n>>>"));
    }

    #[test]
    fn single_question_prompt_has_one_slot() {
        let p = build_prompt(&qs(&["Only one?"]), "Yes.");
        assert!(p.contains("[[Q1]] Only one?"));
        assert!(!p.contains("[[Q2]]"));
    }

    #[test]
    fn delimiters_in_questions_are_escaped() {
        let questions = qs(&["What is [[Q2]] here?", "Line\nbreak <<< >>> \\ done"]);
        let answer = "Answer with [[Q1]] inside.\n>>>\nstill answer";
        let p = build_prompt(&questions, answer);
        assert!(!p.contains("What is [[Q2]]"));
        assert_eq!(
            p.matches("[[Q").count(),
            2 + FORMAT_INSTRUCTIONS.matches("[[Q").count()
        );
        let (q2, a2) = parse_prompt(&p).unwrap();
        assert_eq!(q2, questions);
        assert_eq!(a2, answer);
    }

    #[test]
    fn faithful_backend_split() {
        let questions = qs(&["What is in the picture?", "What happens next?"]);
        let answer = "A dog runs. Then it rains.";
        let oracle = fallback_split(&questions, answer);
        assert_eq!(oracle.segments, vec!["A dog runs.", "Then it rains."]);
        let backend = SplitterBackend::new(Arc::new(LexicalSplitGenerator));
        let got = split_response(&backend, &questions, answer).unwrap();
        assert_eq!(got.segments, oracle.segments);
        assert_eq!(got.grounded, vec![true, true]);
    }

    #[test]
    fn unanswered_question_is_empty_and_grounded() {
        let b = scripted(&["[[Q1]] A dog runs.\n[[Q2]] NO_ANSWER"]);
        let got = split_response(&b, &qs(&["a?", "b?"]), "A dog runs.").unwrap();
        assert_eq!(got.segments, vec!["A dog runs.", ""]);
        assert_eq!(got.grounded, vec![true, true]);
    }

    #[test]
    fn wrong_segment_count_fails_after_one_retry() {
        let three = "[[Q1]] a\n[[Q2]] b\n[[Q3]] c";
        let b = scripted(&[three, three]);
        match split_response(&b, &qs(&["a?", "b?"]), "a b c") {
            Err(AsaError::Splitting { raw, .. }) => assert_eq!(raw, three),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn retry_recovers_from_one_bad_reply() {
        let b = scripted(&["sorry, I cannot", "Sure!\n[[Q1]] x.\n[[Q2]] y."]);
        let got = split_response(&b, &qs(&["a?", "b?"]), "x. y.").unwrap();
        assert_eq!(got.segments, vec!["x.", "y."]);
    }

    #[test]
    fn hallucinated_segment_flagged_and_stripped_in_strict_mode() {
        let reply = "[[Q1]] A dog runs.\n[[Q2]] A cat sleeps.";
        let lenient = split_response(&scripted(&[reply]), &qs(&["a?", "b?"]), "A dog runs.").unwrap();
        assert_eq!(lenient.grounded, vec![true, false]);
        assert_eq!(lenient.segments[1], "A cat sleeps.");
        let strict = split_response(
            &scripted(&[reply]).strict(true),
            &qs(&["a?", "b?"]),
            "A dog runs.",
        )
        .unwrap();
        assert_eq!(strict.segments[1], "");
        assert_eq!(strict.grounded, vec![true, false]);
    }

    #[test]
    fn transport_failure_propagates() {
        let b = scripted(&[]);
        assert!(matches!(
            split_response(&b, &qs(&["a?"]), "text"),
            Err(AsaError::Transport(_))
        ));
    }

    #[test]
    fn http_backend_split() {
        let (url, _rx) = crate::backend::mock::serve(1, |body| {
            let req: GenerationRequest = serde_json::from_str(body).unwrap();
            let reply = LexicalSplitGenerator.generate(&req).unwrap();
            serde_json::json!({ "text": reply }).to_string()
        });
        let b = SplitterBackend::new(Arc::new(crate::backend::HttpGenerator::new(&url)));
        let got = split_response(
            &b,
            &qs(&["What is in the picture?", "What happens next?"]),
            "A dog runs. Then it rains.",
        )
        .unwrap();
        assert_eq!(got.segments, vec!["A dog runs.", "Then it rains."]);
    }

    #[test]
    fn keyword_routing_matches_brute_force_overlap() {
        let questions = qs(&[
            "What is the dog doing?",
            "What color is the car?",
            "Why is the boy happy?",
        ]);
        let answer = "The boy is happy because he has a kite. The car is blue. The dog chases a ball.";
        let got = fallback_split(&questions, answer);
        // brute force: score every (sentence, question) pair, first max wins
        let mut expected = vec![Vec::new(); 3];
        for s in text::sentences(answer) {
            let scores: Vec<usize> = questions.iter().map(|q| overlap_score(&s, q)).collect();
            let max = *scores.iter().max().unwrap();
            let j = scores.iter().position(|&x| x == max).unwrap();
            expected[j].push(s);
        }
        let expected: Vec<String> = expected.into_iter().map(|v| v.join(" ")).collect();
        assert_eq!(got.segments, expected);
        assert_eq!(
            got.segments,
            vec![
                "The dog chases a ball.",
                "The car is blue.",
                "The boy is happy because he has a kite."
            ]
        );
    }

    #[test]
    fn empty_answer_gives_empty_segments() {
        let got = fallback_split(&qs(&["a?", "b?", "c?"]), "");
        assert_eq!(got.segments, vec!["", "", ""]);
        assert!(got.grounded.iter().all(|&g| g));
    }

    #[test]
    fn single_sentence_lands_once() {
        let got = fallback_split(&qs(&["a?", "b?", "c?"]), "Just one sentence here.");
        assert_eq!(got.segments.iter().filter(|s| !s.is_empty()).count(), 1);
    }
}
