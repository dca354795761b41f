//! Training loop, metrics, checkpoints and the ablation harness.

use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::container::Container;
use crate::corpus::ScoreTarget;
use crate::error::{AsaError, Result};
use crate::features::{AblationToggles, FeatureAssembler};
use crate::grammar::{align_edits, edit_cost};
use crate::model::{AdamW, AdamWConfig, FeatureBundle, Grads, Model, ModelConfig};

pub const CHECKPOINT_KIND: &str = "checkpoint";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub seed: u64,
    pub target: ScoreTarget,
    /// Stop once training accuracy reaches this value.
    pub stop_at_train_accuracy: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 32,
            batch_size: 32,
            learning_rate: 1e-5,
            weight_decay: 0.01,
            seed: 0,
            target: ScoreTarget::Holistic,
            stop_at_train_accuracy: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(AsaError::Config("train.batch_size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(AsaError::Config("train.learning_rate must be positive".into()));
        }
        if self.weight_decay < 0.0 {
            return Err(AsaError::Config("train.weight_decay must be non-negative".into()));
        }
        Ok(())
    }

    fn optimizer(&self) -> AdamWConfig {
        AdamWConfig {
            lr: self.learning_rate,
            weight_decay: self.weight_decay,
            ..AdamWConfig::default()
        }
    }
}

fn check_pair(preds: &[u8], golds: &[u8]) -> Result<()> {
    if preds.len() != golds.len() {
        return Err(AsaError::Input(format!(
            "{} predictions for {} gold scores",
            preds.len(),
            golds.len()
        )));
    }
    if preds.is_empty() {
        return Err(AsaError::Input("no predictions to score".into()));
    }
    Ok(())
}

pub fn accuracy(preds: &[u8], golds: &[u8]) -> Result<f64> {
    check_pair(preds, golds)?;
    let hits = preds.iter().zip(golds).filter(|(p, g)| p == g).count();
    Ok(hits as f64 / preds.len() as f64)
}

/// Accuracy after mapping every score to "4 or above".
pub fn binary_accuracy(preds: &[u8], golds: &[u8]) -> Result<f64> {
    check_pair(preds, golds)?;
    if let Some(s) = preds.iter().chain(golds).find(|s| !(1..=5).contains(*s)) {
        return Err(AsaError::Input(format!("score {s} outside 1..=5")));
    }
    let hits = preds
        .iter()
        .zip(golds)
        .filter(|(p, g)| (**p >= 4) == (**g >= 4))
        .count();
    Ok(hits as f64 / preds.len() as f64)
}

/// (S + D + I) / |reference|; case-insensitive token equality.
pub fn word_error_rate(reference: &[String], hypothesis: &[String]) -> Result<f64> {
    if reference.is_empty() {
        return Err(AsaError::Input("reference transcript is empty".into()));
    }
    Ok(edit_cost(&align_edits(reference, hypothesis)) as f64 / reference.len() as f64)
}

/// Most frequent score, ties to the lower score.
pub fn majority_class(golds: &[u8]) -> Option<u8> {
    (1..=5u8)
        .rev()
        .max_by_key(|s| golds.iter().filter(|g| *g == s).count())
        .filter(|_| !golds.is_empty())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub id: String,
    pub bundle: FeatureBundle,
    pub gold: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub dev_accuracy: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the best dev epoch (the last epoch without dev data).
    pub model: Model,
    /// 0 means the initialization was kept.
    pub best_epoch: usize,
    pub best_dev_accuracy: Option<f64>,
    pub log: Vec<EpochLog>,
}

pub fn predict_all(model: &Model, examples: &[Example]) -> Result<Vec<u8>> {
    examples
        .par_iter()
        .map(|e| model.predict(&e.bundle).map(|p| p.score))
        .collect()
}

fn golds(examples: &[Example]) -> Vec<u8> {
    examples.iter().map(|e| e.gold).collect()
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Mini-batch AdamW over `train`, keeping the parameters of the epoch with
/// the best dev accuracy (earliest on ties). Gradients of a batch are
/// computed in parallel and summed in example order, so results do not
/// depend on the thread count.
pub fn train(
    mut model: Model,
    train: &[Example],
    dev: &[Example],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(AsaError::InsufficientData("training split is empty".into()));
    }
    let mut opt = AdamW::new(cfg.optimizer(), &model.params);
    let mut best = (model.params.clone(), 0usize, None::<f64>);
    if !dev.is_empty() {
        best.2 = Some(accuracy(&predict_all(&model, dev)?, &golds(dev))?);
    }
    let use_dropout = model.config.dropout > 0.0;
    let mut log = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut rng_for(cfg.seed, epoch as u64));
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let results: Vec<Result<(f64, Grads)>> = batch
                .par_iter()
                .map(|&i| {
                    let mut rng = rng_for(
                        cfg.seed ^ 0x9e37_79b9_7f4a_7c15,
                        ((epoch as u64) << 32) | i as u64,
                    );
                    let ex = &train[i];
                    model.loss_and_grads(&ex.bundle, ex.gold, use_dropout.then_some(&mut rng))
                })
                .collect();
            let mut grads = Grads::empty(model.params.len());
            for (&i, r) in batch.iter().zip(results) {
                let (loss, g) = r?;
                if !loss.is_finite() {
                    return Err(AsaError::Numeric {
                        layer: "loss".into(),
                        message: format!("loss {loss} on {} in epoch {epoch}", train[i].id),
                    });
                }
                loss_sum += loss;
                grads.accumulate(&g);
            }
            grads.scale(1.0 / batch.len() as f64);
            opt.step(&mut model.params, &grads);
        }
        let train_accuracy = accuracy(&predict_all(&model, train)?, &golds(train))?;
        let dev_accuracy = if dev.is_empty() {
            None
        } else {
            Some(accuracy(&predict_all(&model, dev)?, &golds(dev))?)
        };
        let entry = EpochLog {
            epoch,
            train_loss: loss_sum / train.len() as f64,
            train_accuracy,
            dev_accuracy,
        };
        log::info!(
            "epoch {epoch}: loss {:.4} train acc {:.3} dev acc {:?}",
            entry.train_loss,
            train_accuracy,
            dev_accuracy
        );
        log.push(entry);
        let improved = match (dev_accuracy, best.2) {
            (Some(d), Some(b)) => d > b,
            _ => true,
        };
        if improved {
            best = (model.params.clone(), epoch, dev_accuracy);
        }
        if cfg.stop_at_train_accuracy.is_some_and(|t| train_accuracy >= t) {
            break;
        }
    }
    model.params = best.0;
    Ok(TrainOutcome {
        model,
        best_epoch: best.1,
        best_dev_accuracy: best.2,
        log,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub split: String,
    pub target: ScoreTarget,
    pub n: usize,
    pub accuracy: f64,
    pub binary_accuracy: f64,
    /// `confusion[gold - 1][pred - 1]`.
    pub confusion: [[usize; 5]; 5],
    pub predictions: Vec<(String, u8, u8)>,
}

impl EvalReport {
    pub fn to_table(&self) -> String {
        let mut s = format!(
            "split {} ({} responses, target {})\naccuracy        {:.4}\nbinary accuracy {:.4}\n\ngold\\pred    1    2    3    4    5\n",
            self.split,
            self.n,
            self.target.as_str(),
            self.accuracy,
            self.binary_accuracy
        );
        for (g, row) in self.confusion.iter().enumerate() {
            s.push_str(&format!("{:>9}", g + 1));
            for c in row {
                s.push_str(&format!("{c:>5}"));
            }
            s.push('\n');
        }
        s
    }
}

pub fn evaluate(model: &Model, examples: &[Example], split: &str, target: ScoreTarget) -> Result<EvalReport> {
    if examples.is_empty() {
        return Err(AsaError::Input(format!("split {split} has no scored responses")));
    }
    let preds = predict_all(model, examples)?;
    let gold = golds(examples);
    let mut confusion = [[0usize; 5]; 5];
    for (p, g) in preds.iter().zip(&gold) {
        confusion[*g as usize - 1][*p as usize - 1] += 1;
    }
    Ok(EvalReport {
        split: split.to_string(),
        target,
        n: examples.len(),
        accuracy: accuracy(&preds, &gold)?,
        binary_accuracy: binary_accuracy(&preds, &gold)?,
        confusion,
        predictions: examples
            .iter()
            .zip(&preds)
            .map(|(e, p)| (e.id.clone(), e.gold, *p))
            .collect(),
    })
}

/// A trained model plus everything needed to turn raw features into its
/// inputs.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: Model,
    pub assembler: FeatureAssembler,
    pub train: TrainConfig,
    /// Backend fingerprint of the feature store it was trained on.
    pub features_fingerprint: String,
}

#[derive(Serialize, Deserialize)]
struct CheckpointMeta {
    model: ModelConfig,
    assembler: FeatureAssembler,
    train: TrainConfig,
    features_fingerprint: String,
    param_names: Vec<String>,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let meta = CheckpointMeta {
            model: self.model.config.clone(),
            assembler: self.assembler.clone(),
            train: self.train.clone(),
            features_fingerprint: self.features_fingerprint.clone(),
            param_names: self.model.params.names().to_vec(),
        };
        let mut c = Container::new(CHECKPOINT_KIND, serde_json::to_value(meta)?);
        for (name, v) in self.model.params.names().iter().zip(self.model.params.values()) {
            c.insert2(format!("param/{name}"), v);
        }
        c.save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let c = Container::load(path, CHECKPOINT_KIND)?;
        let meta: CheckpointMeta = serde_json::from_value(c.meta.clone())?;
        let named: Vec<(String, Array2<f64>)> = meta
            .param_names
            .iter()
            .map(|n| Ok((n.clone(), c.get2(&format!("param/{n}"))?)))
            .collect::<Result<_>>()?;
        Ok(Checkpoint {
            model: Model::from_params(meta.model, named)?,
            assembler: meta.assembler,
            train: meta.train,
            features_fingerprint: meta.features_fingerprint,
        })
    }

    /// Fails when the feature store was produced by different backends.
    pub fn check_features(&self, fingerprint: &str) -> Result<()> {
        if self.features_fingerprint == fingerprint {
            return Ok(());
        }
        let ours: Vec<&str> = self.features_fingerprint.split(';').collect();
        let theirs: Vec<&str> = fingerprint.split(';').collect();
        let diverging: Vec<String> = ours
            .iter()
            .filter(|p| !theirs.contains(p))
            .map(|p| p.split('=').next().unwrap_or(p).to_string())
            .collect();
        Err(AsaError::Compatibility(format!(
            "feature store backends differ from the checkpoint's in: {}",
            if diverging.is_empty() {
                "backend list".to_string()
            } else {
                diverging.join(", ")
            }
        )))
    }
}

/// One labelled configuration of an ablation grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationCell {
    pub name: String,
    pub target: ScoreTarget,
    pub toggles: AblationToggles,
}

impl AblationCell {
    /// Toggle names that differ from the full system.
    pub fn changes(&self) -> Vec<String> {
        AblationToggles::default().diff(&self.toggles)
    }
}

pub const GRIDS: [&str; 3] = ["grammar", "relevance", "holistic"];

/// The named grids: error-type features on language use, relevance
/// components on relevance, and component removal on the holistic score.
pub fn ablation_grid(name: &str) -> Option<Vec<AblationCell>> {
    let full = AblationToggles::default();
    let cell = |name: &str, target, toggles| AblationCell {
        name: name.to_string(),
        target,
        toggles,
    };
    match name {
        "grammar" => {
            let t = ScoreTarget::LanguageUse;
            let coarse = AblationToggles {
                fine_grained_taxonomy: false,
                ..full
            };
            Some(vec![
                cell("normalized, fine-grained", t, full),
                cell("normalized, coarse", t, coarse),
                cell(
                    "w/o normalized",
                    t,
                    AblationToggles {
                        grammar_normalized: false,
                        ..full
                    },
                ),
                cell(
                    "w/o normalized, coarse",
                    t,
                    AblationToggles {
                        grammar_normalized: false,
                        ..coarse
                    },
                ),
            ])
        }
        "relevance" => {
            let t = ScoreTarget::Relevance;
            let mut cells = Vec::new();
            for split in [false, true] {
                let base = AblationToggles {
                    response_splitting: split,
                    ..full
                };
                let prefix = if split { "" } else { "w/o response-splitting, " };
                cells.push(cell(
                    &format!("{prefix}only exemplar-response"),
                    t,
                    AblationToggles {
                        image_response: false,
                        ..base
                    },
                ));
                cells.push(cell(
                    &format!("{prefix}only image-response"),
                    t,
                    AblationToggles {
                        exemplar_response: false,
                        ..base
                    },
                ));
                let both = if split {
                    "full".to_string()
                } else {
                    format!("{prefix}exemplar-response + image-response")
                };
                cells.push(cell(&both, t, base));
            }
            Some(cells)
        }
        "holistic" => {
            let t = ScoreTarget::Holistic;
            Some(vec![
                cell("full", t, full),
                cell(
                    "w/o Grammar",
                    t,
                    AblationToggles {
                        grammar: false,
                        ..full
                    },
                ),
                cell(
                    "w/o Multifaceted",
                    t,
                    AblationToggles {
                        multifaceted: false,
                        ..full
                    },
                ),
            ])
        }
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub cell: AblationCell,
    pub reports: Vec<EvalReport>,
    pub error: Option<String>,
}

/// Runs every cell; a failing cell is recorded and the grid continues.
pub fn run_ablation<F>(cells: &[AblationCell], mut run: F) -> Vec<AblationRow>
where
    F: FnMut(&AblationCell) -> Result<Vec<EvalReport>>,
{
    cells
        .iter()
        .map(|c| match run(c) {
            Ok(reports) => AblationRow {
                cell: c.clone(),
                reports,
                error: None,
            },
            Err(e) => {
                log::warn!("ablation cell {:?} failed: {e}", c.name);
                AblationRow {
                    cell: c.clone(),
                    reports: Vec::new(),
                    error: Some(e.to_string()),
                }
            }
        })
        .collect()
}

/// One line per cell with accuracy and binary accuracy for each split.
pub fn ablation_table(rows: &[AblationRow]) -> String {
    let splits: Vec<String> = rows
        .iter()
        .flat_map(|r| r.reports.iter().map(|e| e.split.clone()))
        .fold(Vec::new(), |mut acc, s| {
            if !acc.contains(&s) {
                acc.push(s);
            }
            acc
        });
    let width = rows.iter().map(|r| r.cell.name.len()).max().unwrap_or(4).max(4);
    let mut out = format!("{:width$}", "cell");
    for s in &splits {
        out.push_str(&format!("  {:>16} {:>8}", format!("{s} acc"), "bin acc"));
    }
    out.push('\n');
    for r in rows {
        out.push_str(&format!("{:width$}", r.cell.name));
        if let Some(e) = &r.error {
            out.push_str(&format!("  failed: {e}\n"));
            continue;
        }
        for s in &splits {
            match r.reports.iter().find(|e| &e.split == s) {
                Some(e) => out.push_str(&format!("  {:>16.4} {:>8.4}", e.accuracy, e.binary_accuracy)),
                None => out.push_str(&format!("  {:>16} {:>8}", "-", "-")),
            }
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Stream;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn metric_examples() {
        assert_eq!(accuracy(&[3, 4, 5, 2], &[4, 4, 5, 1]).unwrap(), 0.5);
        assert_eq!(binary_accuracy(&[3, 4, 5, 2], &[4, 4, 5, 1]).unwrap(), 0.75);
        assert_eq!(binary_accuracy(&[3, 3], &[4, 4]).unwrap(), 0.0);
        assert_eq!(accuracy(&[1, 2], &[2, 1]).unwrap(), 0.0);
        assert!(matches!(accuracy(&[1], &[1, 2]), Err(AsaError::Input(_))));
        assert!(matches!(binary_accuracy(&[6], &[1]), Err(AsaError::Input(_))));
    }

    #[test]
    fn wer_examples() {
        assert_eq!(word_error_rate(&toks("a b c"), &toks("a b c")).unwrap(), 0.0);
        let w = word_error_rate(&toks("the cat sat"), &toks("the cat sit")).unwrap();
        assert!((w - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(
            word_error_rate(&toks("hi"), &toks("oh hi there you")).unwrap(),
            3.0
        );
        assert!(matches!(
            word_error_rate(&[], &toks("x")),
            Err(AsaError::Input(_))
        ));
    }

    #[test]
    fn majority_ties_go_low() {
        assert_eq!(majority_class(&[5, 5, 2, 2, 3]), Some(2));
        assert_eq!(majority_class(&[]), None);
    }

    fn example(c: &ModelConfig, id: usize, gold: u8) -> Example {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(id as u64);
        let mut m = |r: usize, d: usize| Array2::from_shape_fn((r, d), |_| rng.random_range(-1.0..1.0));
        Example {
            id: format!("r{id}"),
            bundle: FeatureBundle {
                qr: Stream::new(m(3, c.qr_dim)),
                syntax: Stream::new(m(4, c.syntax_dim)),
                delivery: Stream::new(m(2, c.delivery_dim)),
                er: vec![0.1 * gold as f64; c.er_dim],
                ir: vec![0.0; c.ir_dim],
                grammar: vec![0.0; c.grammar_dim],
            },
            gold,
        }
    }

    #[test]
    fn tiny_model_fits_and_training_is_reproducible() {
        let c = ModelConfig::tiny();
        let data: Vec<Example> = (0..10).map(|i| example(&c, i, (i % 5) as u8 + 1)).collect();
        let cfg = TrainConfig {
            epochs: 150,
            batch_size: 4,
            learning_rate: 1e-2,
            stop_at_train_accuracy: Some(1.0),
            ..Default::default()
        };
        let a = train(Model::new(c.clone()).unwrap(), &data, &data[..3], &cfg).unwrap();
        let b = train(Model::new(c.clone()).unwrap(), &data, &data[..3], &cfg).unwrap();
        assert_eq!(a.log, b.log);
        assert_eq!(a.log.last().unwrap().train_accuracy, 1.0);
    }

    #[test]
    fn zero_epochs_keeps_the_initialization() {
        let c = ModelConfig::tiny();
        let data: Vec<Example> = (0..3).map(|i| example(&c, i, 3)).collect();
        let init = Model::new(c).unwrap();
        let cfg = TrainConfig {
            epochs: 0,
            ..Default::default()
        };
        let out = train(init.clone(), &data, &data, &cfg).unwrap();
        assert_eq!(out.model.params.values(), init.params.values());
        assert_eq!(out.best_epoch, 0);
    }

    #[test]
    fn evaluation_report_counts() {
        let c = ModelConfig::tiny();
        let data: Vec<Example> = (0..5).map(|i| example(&c, i, (i % 5) as u8 + 1)).collect();
        let m = Model::new(c).unwrap();
        let r = evaluate(&m, &data, "dev", ScoreTarget::Holistic).unwrap();
        for (g, row) in r.confusion.iter().enumerate() {
            assert_eq!(
                row.iter().sum::<usize>(),
                data.iter().filter(|e| e.gold as usize == g + 1).count()
            );
        }
        assert!(r.binary_accuracy >= r.accuracy);
        assert!(matches!(
            evaluate(&m, &[], "dev", ScoreTarget::Holistic),
            Err(AsaError::Input(_))
        ));
        assert_eq!(r, evaluate(&m, &data, "dev", ScoreTarget::Holistic).unwrap());
    }

    #[test]
    fn grids_are_labelled_single_toggle_changes() {
        for g in GRIDS {
            let cells = ablation_grid(g).unwrap();
            let mut names: Vec<&str> = cells.iter().map(|c| c.name.as_str()).collect();
            names.sort();
            names.dedup();
            assert_eq!(names.len(), cells.len(), "{g}");
        }
        let h = ablation_grid("holistic").unwrap();
        assert_eq!(h[1].changes(), vec!["grammar"]);
        assert_eq!(h[2].changes(), vec!["multifaceted"]);
        assert!(ablation_grid("nope").is_none());
    }

    #[test]
    fn failing_cells_do_not_stop_the_grid() {
        let cells = ablation_grid("holistic").unwrap();
        let rows = run_ablation(&cells, |c| {
            if c.name == "w/o Grammar" {
                Err(AsaError::Input("boom".into()))
            } else {
                Ok(vec![])
            }
        });
        assert_eq!(rows.len(), 3);
        assert!(rows[1].error.as_deref().unwrap().contains("boom"));
        assert!(rows[2].error.is_none());
        assert!(ablation_table(&rows).contains("failed"));
    }
}
