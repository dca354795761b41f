//! Per-word delivery features.
//!
//! Frames are 40 ms long with a 10 ms hop. Each frame gets an RMS level and,
//! when voiced, an autocorrelation pitch estimate searched over 75–500 Hz.
//! A word's vector summarizes the frames whose centre falls inside it and
//! adds timing measures taken from the word timestamps.
//!
//! | dim | feature |
//! |-----|---------|
//! | 0 | pitch mean (Hz) |
//! | 1 | pitch std (Hz) |
//! | 2 | pitch slope (Hz/s) |
//! | 3 | intensity mean (dBFS) |
//! | 4 | intensity std (dB) |
//! | 5 | word duration (s) |
//! | 6 | preceding pause (s) |
//! | 7 | long pause flag (pause > 0.5 s) |
//! | 8 | speech rate over ±2 words (words/s) |
//! | 9 | articulation rate over ±2 words (syllables/s of speech) |
//! | 10 | voiced fraction |
//! | 11 | energy peak (dBFS) |
//! | 12 | normalized word position |
//! | 13 | silence ratio over ±2 words |

use std::path::Path;

use ndarray::Array2;

use crate::corpus::{validate_timestamps, WordTimestamp};
use crate::error::{AsaError, Result};
use crate::text;

pub const DELIVERY_DIM: usize = 14;
pub const HOP_S: f64 = 0.010;
pub const WINDOW_S: f64 = 0.040;
pub const MIN_PITCH_HZ: f64 = 75.0;
pub const MAX_PITCH_HZ: f64 = 500.0;
/// Minimum normalized autocorrelation peak for a frame to count as voiced.
pub const VOICING_THRESHOLD: f64 = 0.5;
/// Frames more than this many dB below the loudest frame are silent.
pub const SILENCE_DB: f64 = 40.0;
pub const LONG_PAUSE_S: f64 = 0.5;
pub const DB_FLOOR: f64 = -100.0;
const WINDOW_WORDS: usize = 2;

/// Dimensions that need audio; zero in transcript-only mode.
pub const ACOUSTIC_DIMS: [usize; 7] = [0, 1, 2, 3, 4, 10, 11];

#[derive(Debug, Clone, PartialEq)]
pub struct Audio {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Audio {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Self {
        Audio { samples, sample_rate }
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Reads a PCM or float WAV file, averaging channels to mono.
pub fn read_wav(path: &Path) -> Result<Audio> {
    let media = |e: hound::Error| AsaError::Media(format!("{}: {e}", path.display()));
    let mut reader = hound::WavReader::open(path).map_err(media)?;
    let spec = reader.spec();
    let channels = spec.channels.max(1) as usize;
    let interleaved: Vec<f64> = match spec.sample_format {
        hound::SampleFormat::Float => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()
            .map_err(media)?,
        hound::SampleFormat::Int => {
            let scale = (1i64 << (spec.bits_per_sample - 1)) as f64;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f64 / scale))
                .collect::<std::result::Result<_, _>>()
                .map_err(media)?
        }
    };
    let samples = interleaved
        .chunks(channels)
        .map(|c| c.iter().sum::<f64>() / channels as f64)
        .collect();
    Ok(Audio::new(samples, spec.sample_rate))
}

/// Writes 16-bit mono PCM, clipping to [-1, 1].
pub fn write_wav(path: &Path, audio: &Audio) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: audio.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let media = |e: hound::Error| AsaError::Media(format!("{}: {e}", path.display()));
    let mut w = hound::WavWriter::create(path, spec).map_err(media)?;
    for &s in &audio.samples {
        w.write_sample((s.clamp(-1.0, 1.0) * i16::MAX as f64).round() as i16)
            .map_err(media)?;
    }
    w.finalize().map_err(media)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame {
    /// Centre time in seconds.
    pub time: f64,
    pub rms: f64,
    /// Pitch in Hz for voiced frames.
    pub pitch: Option<f64>,
}

fn to_db(rms: f64) -> f64 {
    if rms > 0.0 {
        (20.0 * rms.log10()).max(DB_FLOOR)
    } else {
        DB_FLOOR
    }
}

/// Normalized autocorrelation pitch estimate of one frame. Picks the
/// shortest lag whose peak reaches 90 % of the best peak, which avoids
/// octave-down errors, and refines it by parabolic interpolation.
pub fn frame_pitch(frame: &[f64], sample_rate: u32) -> Option<f64> {
    let sr = sample_rate as f64;
    let min_lag = (sr / MAX_PITCH_HZ).floor().max(1.0) as usize;
    let max_lag = ((sr / MIN_PITCH_HZ).ceil() as usize).min(frame.len().saturating_sub(2));
    if max_lag <= min_lag + 1 {
        return None;
    }
    let mean = frame.iter().sum::<f64>() / frame.len() as f64;
    let x: Vec<f64> = frame.iter().map(|v| v - mean).collect();
    let n = x.len();
    let corr = |lag: usize| -> f64 {
        let (mut xy, mut xx, mut yy) = (0.0, 0.0, 0.0);
        for i in 0..n - lag {
            xy += x[i] * x[i + lag];
            xx += x[i] * x[i];
            yy += x[i + lag] * x[i + lag];
        }
        if xx <= 0.0 || yy <= 0.0 {
            0.0
        } else {
            xy / (xx * yy).sqrt()
        }
    };
    let r: Vec<f64> = (min_lag - 1..=max_lag + 1).map(corr).collect();
    let at = |lag: usize| r[lag + 1 - min_lag];
    let peaks: Vec<usize> = (min_lag..=max_lag)
        .filter(|&l| at(l) >= at(l - 1) && at(l) >= at(l + 1) && at(l) > 0.0)
        .collect();
    let best = peaks.iter().map(|&l| at(l)).fold(f64::MIN, f64::max);
    if peaks.is_empty() || best < VOICING_THRESHOLD {
        return None;
    }
    let lag = *peaks.iter().find(|&&l| at(l) >= 0.9 * best)?;
    let (a, b, c) = (at(lag - 1), at(lag), at(lag + 1));
    let denom = a - 2.0 * b + c;
    let shift = if denom.abs() > 1e-12 {
        (0.5 * (a - c) / denom).clamp(-0.5, 0.5)
    } else {
        0.0
    };
    Some(sr / (lag as f64 + shift))
}

/// Frame-level RMS and pitch. Frames quieter than [`SILENCE_DB`] below the
/// loudest frame are never voiced.
pub fn analyze_frames(audio: &Audio) -> Result<Vec<Frame>> {
    let sr = audio.sample_rate as f64;
    let win = (WINDOW_S * sr).round() as usize;
    let hop = (HOP_S * sr).round() as usize;
    if audio.sample_rate == 0 || hop == 0 || audio.samples.len() < win {
        return Err(AsaError::Media(
            "audio is shorter than one analysis window".into(),
        ));
    }
    let mut frames: Vec<Frame> = (0..=(audio.samples.len() - win) / hop)
        .map(|k| {
            let s = &audio.samples[k * hop..k * hop + win];
            let rms = (s.iter().map(|v| v * v).sum::<f64>() / win as f64).sqrt();
            Frame {
                time: (k * hop) as f64 / sr + WINDOW_S / 2.0,
                rms,
                pitch: None,
            }
        })
        .collect();
    let loudest = frames.iter().map(|f| f.rms).fold(0.0, f64::max);
    if loudest <= 0.0 || !loudest.is_finite() {
        return Err(AsaError::Media("audio is silent".into()));
    }
    let floor = loudest * 10f64.powf(-SILENCE_DB / 20.0);
    for (k, f) in frames.iter_mut().enumerate() {
        if f.rms >= floor {
            f.pitch = frame_pitch(&audio.samples[k * hop..k * hop + win], audio.sample_rate);
        }
    }
    Ok(frames)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeliveryFeatures {
    /// W×14, one row per word.
    pub vectors: Array2<f64>,
    /// False when acoustic dimensions were zero-filled.
    pub acoustic: bool,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (0.0, 0.0);
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64;
    (m, var.sqrt())
}

fn slope(points: &[(f64, f64)]) -> f64 {
    if points.len() < 2 {
        return 0.0;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx > 0.0 {
        sxy / sxx
    } else {
        0.0
    }
}

fn timing_features(words: &[WordTimestamp], out: &mut Array2<f64>) {
    let w = words.len();
    for (i, word) in words.iter().enumerate() {
        let prev_end = if i == 0 { 0.0 } else { words[i - 1].end() };
        let pause = (word.start() - prev_end).max(0.0);
        let lo = i.saturating_sub(WINDOW_WORDS);
        let hi = (i + WINDOW_WORDS).min(w - 1);
        let win = &words[lo..=hi];
        let span = win[win.len() - 1].end() - win[0].start();
        let spoken: f64 = win.iter().map(|x| x.end() - x.start()).sum();
        let syllables: usize = win.iter().map(|x| text::syllable_count(x.token())).sum();
        let mut row = out.row_mut(i);
        row[5] = word.end() - word.start();
        row[6] = pause;
        row[7] = if pause > LONG_PAUSE_S { 1.0 } else { 0.0 };
        row[8] = if span > 0.0 { win.len() as f64 / span } else { 0.0 };
        row[9] = if spoken > 0.0 {
            syllables as f64 / spoken
        } else {
            0.0
        };
        row[12] = if w > 1 { i as f64 / (w - 1) as f64 } else { 0.0 };
        row[13] = if span > 0.0 {
            ((span - spoken) / span).clamp(0.0, 1.0)
        } else {
            0.0
        };
    }
}

fn check_words(words: &[WordTimestamp]) -> Result<()> {
    validate_timestamps(words).map_err(AsaError::Alignment)
}

/// Full acoustic and timing features. Words too short to contain a frame
/// centre use the nearest frame.
pub fn delivery_features(audio: &Audio, words: &[WordTimestamp]) -> Result<DeliveryFeatures> {
    check_words(words)?;
    let duration = audio.duration();
    if let Some(last) = words.last() {
        if last.end() > duration + HOP_S {
            return Err(AsaError::Alignment(format!(
                "word ends at {:.3}s but audio lasts {:.3}s",
                last.end(),
                duration
            )));
        }
    }
    let frames = analyze_frames(audio)?;
    let mut out = Array2::zeros((words.len(), DELIVERY_DIM));
    timing_features(words, &mut out);
    for (i, word) in words.iter().enumerate() {
        let mut inside: Vec<&Frame> = frames
            .iter()
            .filter(|f| f.time >= word.start() && f.time < word.end())
            .collect();
        if inside.is_empty() {
            let mid = 0.5 * (word.start() + word.end());
            let nearest = frames
                .iter()
                .min_by(|a, b| (a.time - mid).abs().total_cmp(&(b.time - mid).abs()))
                .expect("at least one frame");
            inside.push(nearest);
        }
        let pitches: Vec<(f64, f64)> = inside
            .iter()
            .filter_map(|f| f.pitch.map(|p| (f.time, p)))
            .collect();
        let hz: Vec<f64> = pitches.iter().map(|p| p.1).collect();
        let (pm, ps) = mean_std(&hz);
        let db: Vec<f64> = inside.iter().map(|f| to_db(f.rms)).collect();
        let (im, is) = mean_std(&db);
        let mut row = out.row_mut(i);
        row[0] = pm;
        row[1] = ps;
        row[2] = slope(&pitches);
        row[3] = im;
        row[4] = is;
        row[10] = pitches.len() as f64 / inside.len() as f64;
        row[11] = db.iter().copied().fold(DB_FLOOR, f64::max);
    }
    Ok(DeliveryFeatures {
        vectors: out,
        acoustic: true,
    })
}

/// Timing-only features with the acoustic dimensions zero-filled.
pub fn delivery_features_from_transcript(words: &[WordTimestamp]) -> Result<DeliveryFeatures> {
    check_words(words)?;
    let mut out = Array2::zeros((words.len(), DELIVERY_DIM));
    timing_features(words, &mut out);
    Ok(DeliveryFeatures {
        vectors: out,
        acoustic: false,
    })
}

/// Synthesis helpers for tests and the synthetic corpus.
pub mod synth {
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// A harmonic-rich voiced tone with a fundamental of `hz`.
    pub fn tone(hz: f64, seconds: f64, amplitude: f64, sample_rate: u32) -> Vec<f64> {
        let n = (seconds * sample_rate as f64).round() as usize;
        (0..n)
            .map(|i| {
                let t = i as f64 / sample_rate as f64;
                let ph = 2.0 * std::f64::consts::PI * hz * t;
                amplitude * (ph.sin() + 0.4 * (2.0 * ph).sin() + 0.2 * (3.0 * ph).sin()) / 1.6
            })
            .collect()
    }

    pub fn sine(hz: f64, seconds: f64, amplitude: f64, sample_rate: u32) -> Vec<f64> {
        let n = (seconds * sample_rate as f64).round() as usize;
        (0..n)
            .map(|i| amplitude * (2.0 * std::f64::consts::PI * hz * i as f64 / sample_rate as f64).sin())
            .collect()
    }

    pub fn silence(seconds: f64, sample_rate: u32) -> Vec<f64> {
        vec![0.0; (seconds * sample_rate as f64).round() as usize]
    }

    pub fn white_noise(seconds: f64, amplitude: f64, sample_rate: u32, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = (seconds * sample_rate as f64).round() as usize;
        (0..n).map(|_| amplitude * rng.random_range(-1.0..1.0)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::synth::*;
    use super::*;

    const SR: u32 = 16_000;

    fn ts(words: &[(&str, f64, f64)]) -> Vec<WordTimestamp> {
        words
            .iter()
            .map(|&(w, s, e)| WordTimestamp(w.into(), s, e))
            .collect()
    }

    #[test]
    fn pure_tone_pitch_and_duration() {
        let mut s = silence(0.2, SR);
        s.extend(sine(200.0, 0.5, 0.5, SR));
        s.extend(silence(0.2, SR));
        let a = Audio::new(s, SR);
        let f = delivery_features(&a, &ts(&[("ah", 0.2, 0.7)])).unwrap();
        let row = f.vectors.row(0);
        assert!((row[0] - 200.0).abs() <= 5.0, "pitch {}", row[0]);
        assert!((row[5] - 0.5).abs() <= 0.01);
        assert!(row[10] > 0.9);
        assert!(row[1] < 2.0);
    }

    #[test]
    fn tones_across_the_band() {
        for hz in [90.0, 150.0, 240.0, 410.0] {
            let a = Audio::new(tone(hz, 0.3, 0.3, SR), SR);
            let f = delivery_features(&a, &ts(&[("x", 0.0, 0.3)])).unwrap();
            let p = f.vectors[[0, 0]];
            assert!((p - hz).abs() / hz < 0.02, "{hz}: {p}");
        }
    }

    #[test]
    fn constructed_gap_is_a_long_pause() {
        let mut s = tone(180.0, 0.4, 0.4, SR);
        s.extend(silence(0.8, SR));
        s.extend(tone(180.0, 0.4, 0.4, SR));
        let a = Audio::new(s, SR);
        let f = delivery_features(&a, &ts(&[("one", 0.0, 0.4), ("two", 1.2, 1.6)])).unwrap();
        assert!((f.vectors[[1, 6]] - 0.8).abs() <= 0.02);
        assert_eq!(f.vectors[[1, 7]], 1.0);
        assert_eq!(f.vectors[[0, 7]], 0.0);
        let sr = f.vectors[[1, 13]];
        assert!((sr - 0.8 / 1.6).abs() < 1e-9);
    }

    #[test]
    fn white_noise_is_unvoiced() {
        let a = Audio::new(white_noise(0.5, 0.5, SR, 7), SR);
        let f = delivery_features(&a, &ts(&[("sh", 0.0, 0.5)])).unwrap();
        assert!(f.vectors[[0, 10]] < 0.1, "{}", f.vectors[[0, 10]]);
    }

    #[test]
    fn amplitude_scaling_moves_only_intensity() {
        let mut s = tone(220.0, 0.3, 0.2, SR);
        s.extend(silence(0.3, SR));
        s.extend(tone(160.0, 0.3, 0.2, SR));
        let words = ts(&[("a", 0.0, 0.3), ("b", 0.6, 0.9)]);
        let base = delivery_features(&Audio::new(s.clone(), SR), &words).unwrap();
        let loud: Vec<f64> = s.iter().map(|v| v * 3.0).collect();
        let scaled = delivery_features(&Audio::new(loud, SR), &words).unwrap();
        let shift = 20.0 * 3f64.log10();
        for i in 0..2 {
            for d in 0..DELIVERY_DIM {
                let (a, b) = (base.vectors[[i, d]], scaled.vectors[[i, d]]);
                match d {
                    3 | 11 => assert!((b - a - shift).abs() < 1e-6, "dim {d}"),
                    _ => assert!((a - b).abs() < 1e-6, "dim {d}: {a} vs {b}"),
                }
            }
        }
    }

    #[test]
    fn error_cases() {
        let a = Audio::new(tone(200.0, 1.0, 0.3, SR), SR);
        assert!(matches!(
            delivery_features(&a, &ts(&[("x", 0.0, 2.0)])),
            Err(AsaError::Alignment(_))
        ));
        assert!(matches!(
            delivery_features(&a, &ts(&[("x", 0.5, 0.6), ("y", 0.2, 0.3)])),
            Err(AsaError::Alignment(_))
        ));
        let quiet = Audio::new(silence(1.0, SR), SR);
        assert!(matches!(
            delivery_features(&quiet, &ts(&[("x", 0.0, 0.5)])),
            Err(AsaError::Media(_))
        ));
        assert!(matches!(
            delivery_features(&Audio::new(vec![], SR), &[]),
            Err(AsaError::Media(_))
        ));
    }

    #[test]
    fn transcript_mode() {
        let words = ts(&[
            ("the", 0.0, 0.3),
            ("dog", 0.3, 0.6),
            ("runs", 0.6, 0.9),
            ("in", 0.9, 1.2),
            ("the", 1.2, 1.5),
        ]);
        let f = delivery_features_from_transcript(&words).unwrap();
        assert!(!f.acoustic);
        assert_eq!(f.vectors.dim(), (5, DELIVERY_DIM));
        for i in 0..5 {
            for d in ACOUSTIC_DIMS {
                assert_eq!(f.vectors[[i, d]], 0.0);
            }
            assert!((f.vectors[[i, 5]] - 0.3).abs() < 1e-12);
            assert_eq!(f.vectors[[i, 6]], 0.0);
        }
        assert_eq!(f.vectors[[4, 12]], 1.0);
        let five_in_two = ts(&[
            ("a", 0.0, 0.2),
            ("b", 0.4, 0.6),
            ("c", 0.8, 1.0),
            ("d", 1.2, 1.4),
            ("e", 1.8, 2.0),
        ]);
        let f = delivery_features_from_transcript(&five_in_two).unwrap();
        assert!((f.vectors[[2, 8]] - 2.5).abs() < 1e-12);
    }

    #[test]
    fn time_conservation() {
        let mut s = silence(0.1, SR);
        s.extend(tone(200.0, 0.3, 0.3, SR));
        s.extend(silence(0.25, SR));
        s.extend(tone(200.0, 0.35, 0.3, SR));
        let a = Audio::new(s, SR);
        let f = delivery_features(&a, &ts(&[("a", 0.1, 0.4), ("b", 0.65, 1.0)])).unwrap();
        let total: f64 = (0..2).map(|i| f.vectors[[i, 5]] + f.vectors[[i, 6]]).sum();
        assert!(total <= a.duration() + HOP_S);
    }

    #[test]
    fn wav_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.wav");
        let a = Audio::new(tone(200.0, 0.2, 0.5, SR), SR);
        write_wav(&p, &a).unwrap();
        let b = read_wav(&p).unwrap();
        assert_eq!(b.sample_rate, SR);
        assert_eq!(b.samples.len(), a.samples.len());
        assert!(a
            .samples
            .iter()
            .zip(&b.samples)
            .all(|(x, y)| (x - y).abs() < 1e-4));
        assert!(matches!(
            read_wav(&dir.path().join("missing.wav")),
            Err(AsaError::Media(_))
        ));
    }
}
