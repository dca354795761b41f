//! Seeded synthetic corpus with planted score signal.
//!
//! Each question set shows three catalog objects drawn as coloured shapes
//! and asks three or four questions, the last of which is about the
//! speaker rather than the picture. Every response carries holistic,
//! relevance and language-use scores, and the text and audio are built so
//! that the scores are recoverable:
//!
//! - relevance controls how many questions get an on-topic answer and how
//!   much detail it has; low scores add an off-topic sentence;
//! - language use controls how many grammar errors are planted, each one an
//!   error that [`RuleGec`](crate::grammar::RuleGec) undoes exactly;
//! - the holistic score controls speaking rate, sentence pauses and
//!   hesitations in the timestamps and the synthesized audio.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{write_manifest, Manifest, QuestionSet, ResponseRecord, ScoreLabel, WordTimestamp};
use crate::delivery::{write_wav, Audio};
use crate::error::{AsaError, Result};
use crate::grammar::INFLECTION_FIXES;
use crate::scene::{SceneObject, Shape, CATALOG};
use crate::{lexicon, text};

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub question_sets: usize,
    pub responses_per_set: usize,
    pub seed: u64,
    pub sample_rate: u32,
    /// Write WAV files; without audio only timestamps are recorded.
    pub audio: bool,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            question_sets: 8,
            responses_per_set: 5,
            seed: 0,
            sample_rate: 16_000,
            audio: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub manifest_path: PathBuf,
    pub manifest: Manifest,
    /// The error-free text each response was derived from.
    pub clean_transcripts: BTreeMap<String, String>,
}

type Sentence = Vec<String>;

fn sentence(s: &str) -> Sentence {
    text::tokenize(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Corruption {
    /// 3rd-person singular verb to its base form.
    Agreement,
    /// "a" before a consonant to "an".
    Article,
    /// Drop the article after "there is".
    MissingArticle,
    /// Repeat the token.
    Duplicate,
    /// Past tense verb to its base form.
    Tense,
    /// Irregular form to an over-regularized one.
    Overregularize,
    /// Drop "to" after "listen".
    MissingPreposition,
    /// Plural noun after a numeral to singular.
    Number,
    /// Insert "more" before a comparative.
    DoubleComparative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Site {
    sentence: usize,
    token: usize,
    kind: Corruption,
}

#[derive(Debug, Clone, Default)]
struct Answer {
    sentences: Vec<Sentence>,
    /// Sites refer to `sentences` indices.
    sites: Vec<Site>,
}

impl Answer {
    fn push(&mut self, s: &str, sites: &[(&str, Corruption)]) {
        let toks = sentence(s);
        let si = self.sentences.len();
        for &(word, kind) in sites {
            let token = toks
                .iter()
                .rposition(|t| t == word)
                .unwrap_or_else(|| panic!("{word:?} not in {s:?}"));
            self.sites.push(Site {
                sentence: si,
                token,
                kind,
            });
        }
        self.sentences.push(toks);
    }
}

fn apply(tokens: &mut Sentence, token: usize, kind: Corruption) {
    let w = tokens[token].to_lowercase();
    match kind {
        Corruption::Agreement => {
            let v = lexicon::VERBS.iter().find(|v| v.1 == w).expect("3sg verb");
            tokens[token] = v.0.to_string();
        }
        Corruption::Article => tokens[token] = "an".into(),
        Corruption::MissingArticle | Corruption::MissingPreposition => {
            tokens.remove(token);
        }
        Corruption::Duplicate => {
            let t = tokens[token].clone();
            tokens.insert(token, t);
        }
        Corruption::Tense => {
            let v = lexicon::VERBS.iter().find(|v| v.2 == w).expect("past verb");
            tokens[token] = v.0.to_string();
        }
        Corruption::Overregularize => {
            let (bad, _) = INFLECTION_FIXES
                .iter()
                .find(|(_, good)| *good == w)
                .expect("irregular form");
            tokens[token] = bad.to_string();
        }
        Corruption::Number => {
            let n = lexicon::NOUNS.iter().find(|n| n.1 == w).expect("plural noun");
            tokens[token] = n.0.to_string();
        }
        Corruption::DoubleComparative => tokens.insert(token, "more".into()),
    }
}

fn detok(sentences: &[Sentence]) -> String {
    sentences
        .iter()
        .map(|s| crate::grammar::detokenize(s))
        .collect::<Vec<_>>()
        .join(" ")
}

const PERSONAL: &[(&str, &str, &str)] = &[
    (
        "What did you do last weekend?",
        "Last weekend I went to the park with my family.",
        "Last weekend I went to the river with my friends.",
    ),
    (
        "What do you usually do after school?",
        "I usually listen to music with my two friends.",
        "After school I usually read books at home.",
    ),
    (
        "What did you do yesterday?",
        "Yesterday I ate an apple and played with the children.",
        "Yesterday I walked to school with my friend.",
    ),
];

const OFF_TOPIC: &[&str] = &[
    "I like to eat apples.",
    "My brother is very tall.",
    "It was cold in the morning.",
    "My friend wants a new bike.",
];

struct Scene {
    objects: [&'static SceneObject; 3],
    personal: usize,
    k: usize,
}

impl Scene {
    fn questions(&self) -> Vec<String> {
        let [a, _, _] = self.objects;
        let mut q = vec![
            "What can you see in the picture?".to_string(),
            format!("What is the {} doing?", a.name),
        ];
        if self.k == 4 {
            q.push("What will happen next?".into());
        }
        q.push(PERSONAL[self.personal].0.to_string());
        q
    }

    /// Answer to question `qi`; `detail` adds the optional second sentence.
    fn answer(&self, qi: usize, detail: bool) -> Answer {
        use Corruption::*;
        let [a, b, c] = self.objects;
        let mut ans = Answer::default();
        let personal = qi + 1 == self.k;
        if personal {
            match self.personal {
                0 => ans.push(PERSONAL[0].1, &[("went", Tense)]),
                1 => ans.push(PERSONAL[1].1, &[("to", MissingPreposition), ("friends", Number)]),
                _ => ans.push(PERSONAL[2].1, &[("ate", Tense), ("children", Overregularize)]),
            }
            return ans;
        }
        match qi {
            0 => {
                ans.push(
                    &format!("I can see a {} and a {}.", a.name, b.name),
                    &[("a", Article)],
                );
                if detail {
                    ans.push(&format!("There is a {} too.", c.name), &[("a", MissingArticle)]);
                }
            }
            1 => {
                let verb = a.activity.split_whitespace().next().unwrap();
                ans.push(&format!("The {} {}.", a.name, a.activity), &[(verb, Agreement)]);
                if detail {
                    ans.push(
                        &format!("The {} is bigger than the {}.", a.name, b.name),
                        &[("bigger", DoubleComparative)],
                    );
                }
            }
            _ => {
                ans.push(
                    &format!("Then the {} will play with the {}.", a.name, b.name),
                    &[("the", Duplicate)],
                );
            }
        }
        ans
    }

    fn exemplar(&self) -> Vec<String> {
        (0..self.k)
            .map(|qi| {
                if qi + 1 == self.k {
                    PERSONAL[self.personal].2.to_string()
                } else {
                    detok(&self.answer(qi, true).sentences)
                }
            })
            .collect()
    }
}

fn draw_scene(objects: &[&SceneObject]) -> RgbImage {
    let (w, h) = (160u32, 120u32);
    let mut img = RgbImage::from_pixel(w, h, Rgb([255, 255, 255]));
    for (slot, o) in objects.iter().enumerate() {
        let cx = 30 + 50 * slot as i64;
        let cy = 60i64;
        for y in 0..h as i64 {
            for x in 0..w as i64 {
                let (dx, dy) = (x - cx, y - cy);
                let inside = match o.shape {
                    Shape::Disc => dx * dx + dy * dy <= 16 * 16,
                    Shape::Box => dx.abs() <= 15 && dy.abs() <= 15,
                    Shape::Triangle => (-16..=16).contains(&dy) && 2 * dx.abs() <= dy + 16,
                };
                if inside {
                    img.put_pixel(x as u32, y as u32, Rgb(o.rgb));
                }
            }
        }
    }
    img
}

struct Delivery {
    rate: f64,
    sentence_pause: f64,
    hesitation: f64,
}

fn delivery_for(score: u8) -> Delivery {
    let i = (score.clamp(1, 5) - 1) as usize;
    Delivery {
        rate: [1.6, 1.4, 1.25, 1.1, 1.0][i],
        sentence_pause: [0.95, 0.7, 0.45, 0.25, 0.12][i],
        hesitation: [0.25, 0.15, 0.08, 0.03, 0.0][i],
    }
}

fn timestamps(transcript: &str, score: u8, rng: &mut ChaCha8Rng) -> Vec<WordTimestamp> {
    let d = delivery_for(score);
    let mut t = 0.2;
    let mut out = Vec::new();
    let mut prev_sentence_end = false;
    for (i, w) in transcript.split_whitespace().enumerate() {
        if i > 0 {
            t += if prev_sentence_end {
                d.sentence_pause * rng.random_range(0.85..1.15)
            } else if rng.random::<f64>() < d.hesitation {
                rng.random_range(0.55..0.9)
            } else {
                rng.random_range(0.02..0.06)
            };
        }
        let syl = text::syllable_count(w).max(1) as f64;
        let dur = (0.16 + 0.08 * syl) * d.rate * rng.random_range(0.9..1.1);
        let (s, e) = (round_ms(t), round_ms(t + dur));
        out.push(WordTimestamp(w.to_string(), s, e));
        t = e;
        prev_sentence_end = w.ends_with(['.', '!', '?']);
    }
    out
}

fn round_ms(t: f64) -> f64 {
    (t * 1000.0).round() / 1000.0
}

/// Harmonic tones with a falling contour for each word, near-silence
/// between words.
fn synthesize(words: &[WordTimestamp], base_hz: f64, sr: u32, rng: &mut ChaCha8Rng) -> Audio {
    let total = words.last().map_or(0.5, |w| w.end() + 0.2);
    let n = (total * sr as f64).ceil() as usize;
    let mut samples: Vec<f64> = (0..n).map(|_| 1e-3 * rng.random_range(-1.0..1.0)).collect();
    for w in words {
        let (s, e) = (
            (w.start() * sr as f64) as usize,
            ((w.end() * sr as f64) as usize).min(n),
        );
        let len = (e - s).max(1) as f64;
        let hz0 = base_hz * rng.random_range(0.95..1.1);
        let amp = rng.random_range(0.25..0.4);
        let mut phase = 0.0;
        for (j, x) in samples[s..e].iter_mut().enumerate() {
            let frac = j as f64 / len;
            let hz = hz0 * (1.0 - 0.1 * frac);
            phase += 2.0 * std::f64::consts::PI * hz / sr as f64;
            let env =
                (j as f64 / (0.01 * sr as f64)).min(1.0) * ((len - j as f64) / (0.01 * sr as f64)).min(1.0);
            *x += amp * env * (phase.sin() + 0.4 * (2.0 * phase).sin() + 0.2 * (3.0 * phase).sin()) / 1.6;
        }
    }
    Audio::new(samples, sr)
}

fn jitter(score: u8, rng: &mut ChaCha8Rng) -> u8 {
    let d: i32 = *[-1, 0, 0, 1].choose(rng).unwrap();
    (score as i32 + d).clamp(1, 5) as u8
}

/// Writes images, audio and `manifest.jsonl` under `dir`.
pub fn generate_synthetic_corpus(dir: &Path, spec: &SyntheticSpec) -> Result<SyntheticCorpus> {
    if spec.question_sets == 0 || spec.responses_per_set == 0 {
        return Err(AsaError::Input(
            "synthetic corpus needs at least one set and response".into(),
        ));
    }
    let mk = |p: &Path| std::fs::create_dir_all(p).map_err(|e| AsaError::io(p, e));
    mk(&dir.join("images"))?;
    if spec.audio {
        mk(&dir.join("audio"))?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut question_sets = Vec::new();
    let mut responses = Vec::new();
    let mut clean_transcripts = BTreeMap::new();

    for si in 0..spec.question_sets {
        let set_id = format!("S{:02}", si + 1);
        let mut picked: Vec<&'static SceneObject> = CATALOG.iter().collect();
        picked.shuffle(&mut rng);
        let scene = Scene {
            objects: [picked[0], picked[1], picked[2]],
            personal: rng.random_range(0..PERSONAL.len()),
            k: if si % 2 == 0 { 4 } else { 3 },
        };
        let image_ref = dir.join("images").join(format!("{set_id}.png"));
        draw_scene(&scene.objects)
            .save(&image_ref)
            .map_err(|e| AsaError::Media(format!("{}: {e}", image_ref.display())))?;
        let segments = scene.exemplar();
        let questions = scene.questions();
        question_sets.push(QuestionSet {
            id: set_id.clone(),
            questions,
            exemplar_text: segments.join(" "),
            exemplar_segments: Some(segments),
            image_ref,
        });

        let mut scores: Vec<u8> = (0..spec.responses_per_set).map(|i| (i % 5) as u8 + 1).collect();
        scores.shuffle(&mut rng);
        for (ri, &holistic) in scores.iter().enumerate() {
            let id = format!("{set_id}-R{:02}", ri + 1);
            let relevance = jitter(holistic, &mut rng);
            let language_use = jitter(holistic, &mut rng);
            let (clean, corrupted) = compose(&scene, relevance, language_use, &mut rng);
            let words = timestamps(&corrupted, holistic, &mut rng);
            let audio_ref = if spec.audio {
                let path = dir.join("audio").join(format!("{id}.wav"));
                let base_hz = rng.random_range(110.0..230.0);
                write_wav(&path, &synthesize(&words, base_hz, spec.sample_rate, &mut rng))?;
                Some(path)
            } else {
                None
            };
            clean_transcripts.insert(id.clone(), clean);
            responses.push(ResponseRecord {
                id,
                question_set_id: set_id.clone(),
                audio_ref,
                transcript: corrupted,
                word_timestamps: Some(words),
                scores: ScoreLabel {
                    holistic: Some(holistic),
                    relevance: Some(relevance),
                    language_use: Some(language_use),
                },
            });
        }
    }
    let manifest = Manifest {
        root: dir.to_path_buf(),
        question_sets,
        responses,
    };
    let manifest_path = dir.join("manifest.jsonl");
    write_manifest(&manifest_path, &manifest)?;
    Ok(SyntheticCorpus {
        manifest_path,
        manifest,
        clean_transcripts,
    })
}

/// Builds the clean and the error-planted transcript.
fn compose(scene: &Scene, relevance: u8, language_use: u8, rng: &mut ChaCha8Rng) -> (String, String) {
    let k = scene.k;
    let unanswered = match relevance {
        5 | 4 => 0,
        3 => 1,
        2 => 2,
        _ => k - 1,
    }
    .min(k - 1);
    let mut skip: Vec<usize> = (1..k).collect();
    skip.shuffle(rng);
    skip.truncate(unanswered);
    let detail = relevance == 5;

    let mut answer = Answer::default();
    for qi in 0..k {
        if skip.contains(&qi) {
            continue;
        }
        let a = scene.answer(qi, detail);
        let base = answer.sentences.len();
        answer.sentences.extend(a.sentences);
        answer.sites.extend(a.sites.into_iter().map(|s| Site {
            sentence: s.sentence + base,
            ..s
        }));
    }
    if relevance <= 3 {
        let pos = rng.random_range(0..=answer.sentences.len());
        answer
            .sentences
            .insert(pos, sentence(OFF_TOPIC.choose(rng).unwrap()));
        for s in &mut answer.sites {
            if s.sentence >= pos {
                s.sentence += 1;
            }
        }
    }
    let clean = detok(&answer.sentences);

    let n_errors = [5usize, 3, 2, 1, 0][(language_use.clamp(1, 5) - 1) as usize];
    let mut sites = answer.sites.clone();
    sites.shuffle(rng);
    sites.truncate(n_errors);
    // later tokens first so earlier indices stay valid
    sites.sort_by_key(|s| std::cmp::Reverse((s.sentence, s.token)));
    let mut corrupted = answer.sentences;
    for s in sites {
        let kind = if s.kind == Corruption::Tense && rng.random::<bool>() {
            Corruption::Overregularize
        } else {
            s.kind
        };
        apply(&mut corrupted[s.sentence], s.token, kind);
    }
    (clean, detok(&corrupted))
}
