//! The five commands as library functions: generate, extract, train, eval,
//! ablate. Every artifact lands under `output_dir`:
//!
//! ```text
//! features/<response id>.asac   raw features, one container per response
//! features/FINGERPRINT          backend selection the store was built with
//! extract_report.json
//! splits.json
//! checkpoint.asac
//! train_log.jsonl
//! reports/<split>.json, reports/<split>.txt
//! ablation/<grid>.json, ablation/<grid>.txt
//! ```

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::PipelineConfig;
use crate::corpus::{
    choose_unknown_set, load_manifest_with, make_splits, CorpusSplit, LoadOptions, Manifest, ScoreTarget,
    SplitName,
};
use crate::error::{AsaError, Result};
use crate::features::{extract_all, AblationToggles, ExtractReport, FeatureAssembler, FeatureStore};
use crate::model::Model;
use crate::synthetic::{generate_synthetic_corpus, SyntheticCorpus, SyntheticSpec};
use crate::traineval::{
    ablation_grid, ablation_table, evaluate, run_ablation, train, AblationRow, Checkpoint, EvalReport,
    Example, TrainConfig, TrainOutcome,
};

#[derive(Debug, Clone)]
pub struct OutputLayout {
    pub root: PathBuf,
}

impl OutputLayout {
    pub fn features(&self) -> PathBuf {
        self.root.join("features")
    }
    pub fn fingerprint(&self) -> PathBuf {
        self.features().join("FINGERPRINT")
    }
    pub fn extract_report(&self) -> PathBuf {
        self.root.join("extract_report.json")
    }
    pub fn splits(&self) -> PathBuf {
        self.root.join("splits.json")
    }
    pub fn checkpoint(&self) -> PathBuf {
        self.root.join("checkpoint.asac")
    }
    pub fn train_log(&self) -> PathBuf {
        self.root.join("train_log.jsonl")
    }
    pub fn report(&self, split: SplitName, ext: &str) -> PathBuf {
        self.root
            .join("reports")
            .join(format!("{}.{ext}", split.as_str()))
    }
    pub fn ablation(&self, grid: &str, ext: &str) -> PathBuf {
        self.root.join("ablation").join(format!("{grid}.{ext}"))
    }
}

pub fn layout(cfg: &PipelineConfig) -> OutputLayout {
    OutputLayout {
        root: cfg.output_dir.clone(),
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(d) = path.parent() {
        std::fs::create_dir_all(d).map_err(|e| AsaError::io(d, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| AsaError::io(path, e))
}

fn write_json(path: &Path, v: &impl Serialize) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(v)?;
    bytes.push(b'\n');
    write_file(path, &bytes)
}

fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => AsaError::MissingFile(path.to_path_buf()),
        _ => AsaError::io(path, e),
    })
}

/// Images are checked per response during extraction, so a missing picture
/// fails only the responses that need it.
fn load_manifest(cfg: &PipelineConfig) -> Result<Manifest> {
    load_manifest_with(&cfg.manifest_path(), LoadOptions { check_images: false })
}

/// Writes the synthetic corpus next to the configured manifest path.
pub fn cmd_generate(cfg: &PipelineConfig) -> Result<SyntheticCorpus> {
    cfg.validate(false)?;
    let manifest = cfg.manifest_path();
    let dir = manifest
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    let spec = SyntheticSpec {
        question_sets: cfg.generate.question_sets,
        responses_per_set: cfg.generate.responses_per_set,
        seed: cfg.seed,
        audio: cfg.generate.audio,
        ..Default::default()
    };
    let mut corpus = generate_synthetic_corpus(&dir, &spec)?;
    if corpus.manifest_path != manifest {
        std::fs::rename(&corpus.manifest_path, &manifest).map_err(|e| AsaError::io(&manifest, e))?;
        corpus.manifest_path = manifest;
    }
    Ok(corpus)
}

/// Extracts raw features for every response. Per-response failures are
/// listed in the report rather than aborting the run.
pub fn cmd_extract(cfg: &PipelineConfig) -> Result<ExtractReport> {
    cfg.validate(true)?;
    let manifest = load_manifest(cfg)?;
    let backends = cfg.backends()?;
    let out = layout(cfg);
    let store = FeatureStore::new(out.features());
    write_file(&out.fingerprint(), backends.fingerprint.as_bytes())?;
    let report = extract_all(&backends, &manifest, &store, cfg.extract.workers)?;
    write_json(&out.extract_report(), &report)?;
    Ok(report)
}

pub fn corpus_splits(cfg: &PipelineConfig, manifest: &Manifest) -> Result<CorpusSplit> {
    let unknown = match &cfg.splits.unknown_set {
        Some(id) => {
            if manifest.question_set(id).is_none() {
                return Err(AsaError::Config(format!(
                    "splits.unknown_set {id:?} is not a question set"
                )));
            }
            id.clone()
        }
        None => choose_unknown_set(manifest, cfg.seed)
            .ok_or_else(|| AsaError::InsufficientData("manifest has no question sets".into()))?,
    };
    make_splits(&manifest.responses, &unknown, cfg.splits.ratios, cfg.seed)
}

/// Bundles for the responses of `ids` that carry a `target` score.
pub fn examples(
    assembler: &FeatureAssembler,
    store: &FeatureStore,
    manifest: &Manifest,
    ids: &[String],
    target: ScoreTarget,
) -> Result<Vec<Example>> {
    let mut out = Vec::with_capacity(ids.len());
    for id in ids {
        let r = manifest
            .response(id)
            .ok_or_else(|| AsaError::Referential(format!("split lists unknown response {id}")))?;
        let Some(gold) = r.scores.get(target) else {
            continue;
        };
        out.push(Example {
            id: id.clone(),
            bundle: assembler.assemble(&store.load(id)?)?,
            gold,
        });
    }
    Ok(out)
}

/// Loaded manifest, splits and feature store shared by train and ablate.
pub struct Prepared {
    pub manifest: Manifest,
    pub split: CorpusSplit,
    pub store: FeatureStore,
    pub fingerprint: String,
}

pub fn prepare(cfg: &PipelineConfig) -> Result<Prepared> {
    cfg.validate(true)?;
    let manifest = load_manifest(cfg)?;
    let split = corpus_splits(cfg, &manifest)?;
    let out = layout(cfg);
    let fingerprint = read_to_string(&out.fingerprint())?;
    Ok(Prepared {
        manifest,
        split,
        store: FeatureStore::new(out.features()),
        fingerprint,
    })
}

/// Fits the assembler on the training split and trains one model.
pub fn train_cell(
    cfg: &PipelineConfig,
    p: &Prepared,
    toggles: AblationToggles,
    target: ScoreTarget,
) -> Result<(Checkpoint, TrainOutcome)> {
    let train_raw = p.store.load_all(&p.split.train)?;
    let assembler = FeatureAssembler::fit(&train_raw, toggles, cfg.relevance.normalizer_scope)?;
    let train_ex = examples(&assembler, &p.store, &p.manifest, &p.split.train, target)?;
    let dev_ex = examples(&assembler, &p.store, &p.manifest, &p.split.dev, target)?;
    let train_cfg = TrainConfig {
        target,
        ..cfg.train.clone()
    };
    let outcome = train(Model::new(cfg.model.clone())?, &train_ex, &dev_ex, &train_cfg)?;
    let checkpoint = Checkpoint {
        model: outcome.model.clone(),
        assembler,
        train: train_cfg,
        features_fingerprint: p.fingerprint.clone(),
    };
    Ok((checkpoint, outcome))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainSummary {
    pub checkpoint: PathBuf,
    pub target: ScoreTarget,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_dev_accuracy: Option<f64>,
    pub n_train: usize,
    pub n_dev: usize,
}

pub fn cmd_train(cfg: &PipelineConfig) -> Result<TrainSummary> {
    let p = prepare(cfg)?;
    let out = layout(cfg);
    write_json(&out.splits(), &p.split)?;
    let (ckpt, outcome) = train_cell(cfg, &p, cfg.features, cfg.train.target)?;
    ckpt.save(&out.checkpoint())?;
    let mut log = Vec::new();
    for e in &outcome.log {
        serde_json::to_writer(&mut log, e)?;
        log.push(b'\n');
    }
    write_file(&out.train_log(), &log)?;
    Ok(TrainSummary {
        checkpoint: out.checkpoint(),
        target: cfg.train.target,
        epochs_run: outcome.log.len(),
        best_epoch: outcome.best_epoch,
        best_dev_accuracy: outcome.best_dev_accuracy,
        n_train: p.split.train.len(),
        n_dev: p.split.dev.len(),
    })
}

/// Evaluates a checkpoint (default: the one `train` wrote) on one split,
/// using the splits recorded at training time when present.
pub fn cmd_eval(cfg: &PipelineConfig, checkpoint: Option<&Path>, split: SplitName) -> Result<EvalReport> {
    cfg.validate(true)?;
    let out = layout(cfg);
    let ckpt_path = checkpoint
        .map(Path::to_path_buf)
        .unwrap_or_else(|| out.checkpoint());
    let ckpt = Checkpoint::load(&ckpt_path)?;
    ckpt.check_features(&read_to_string(&out.fingerprint())?)?;
    let manifest = load_manifest(cfg)?;
    let splits = match out.splits().is_file() {
        true => serde_json::from_str(&read_to_string(&out.splits())?)?,
        false => corpus_splits(cfg, &manifest)?,
    };
    let store = FeatureStore::new(out.features());
    let target = ckpt.train.target;
    let ex = examples(&ckpt.assembler, &store, &manifest, splits.get(split), target)?;
    let report = evaluate(&ckpt.model, &ex, split.as_str(), target)?;
    write_json(&out.report(split, "json"), &report)?;
    write_file(&out.report(split, "txt"), report.to_table().as_bytes())?;
    Ok(report)
}

const EVAL_SPLITS: [SplitName; 3] = [SplitName::Dev, SplitName::KnownTest, SplitName::UnknownTest];

/// Trains and evaluates every cell of a named grid on dev, known-test and
/// unknown-test.
pub fn cmd_ablate(cfg: &PipelineConfig, grid: &str) -> Result<Vec<AblationRow>> {
    let cells = ablation_grid(grid).ok_or_else(|| {
        AsaError::Config(format!(
            "unknown ablation grid {grid:?}; choose one of {}",
            crate::traineval::GRIDS.join(", ")
        ))
    })?;
    let p = prepare(cfg)?;
    let rows = run_ablation(&cells, |cell| {
        let (ckpt, _) = train_cell(cfg, &p, cell.toggles, cell.target)?;
        let mut reports = Vec::new();
        for s in EVAL_SPLITS {
            let ex = examples(
                &ckpt.assembler,
                &p.store,
                &p.manifest,
                p.split.get(s),
                cell.target,
            )?;
            if !ex.is_empty() {
                reports.push(evaluate(&ckpt.model, &ex, s.as_str(), cell.target)?);
            }
        }
        Ok(reports)
    });
    let out = layout(cfg);
    write_json(&out.ablation(grid, "json"), &rows)?;
    write_file(&out.ablation(grid, "txt"), ablation_table(&rows).as_bytes())?;
    Ok(rows)
}
