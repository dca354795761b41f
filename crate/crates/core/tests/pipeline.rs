use std::path::Path;

use asa::config::PipelineConfig;
use asa::corpus::{ScoreTarget, SplitName};
use asa::model::ModelConfig;
use asa::pipeline::{self, layout};
use asa::traineval::Checkpoint;
use asa::AsaError;

fn small_config(root: &Path) -> PipelineConfig {
    let mut cfg = PipelineConfig::default();
    cfg.generate.dir = root.join("corpus");
    cfg.output_dir = root.join("out");
    cfg.generate.audio = false;
    cfg.model = ModelConfig::tiny();
    cfg.train.epochs = 2;
    cfg.train.batch_size = 8;
    cfg
}

fn extracted(root: &Path) -> PipelineConfig {
    let cfg = small_config(root);
    pipeline::cmd_generate(&cfg).unwrap();
    let r = pipeline::cmd_extract(&cfg).unwrap();
    assert!(r.failures.is_empty(), "{:?}", r.failures);
    cfg
}

#[test]
fn extraction_writes_one_bundle_per_response_and_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    pipeline::cmd_generate(&cfg).unwrap();
    let first = pipeline::cmd_extract(&cfg).unwrap();
    assert_eq!(first.computed.len(), 40);
    let stored = std::fs::read_dir(layout(&cfg).features())
        .unwrap()
        .filter(|e| {
            e.as_ref()
                .unwrap()
                .path()
                .extension()
                .is_some_and(|x| x == "asac")
        })
        .count();
    assert_eq!(stored, 40);
    let again = pipeline::cmd_extract(&cfg).unwrap();
    assert!(again.computed.is_empty());
    assert_eq!(again.cached.len(), 40);
}

#[test]
fn missing_image_fails_only_its_responses() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let corpus = pipeline::cmd_generate(&cfg).unwrap();
    let qs = &corpus.manifest.question_sets[0];
    std::fs::remove_file(&qs.image_ref).unwrap();
    let r = pipeline::cmd_extract(&cfg).unwrap();
    assert_eq!(r.computed.len(), 35);
    assert_eq!(r.failures.len(), 5);
    assert!(r.failures.iter().all(|f| f.response_id.starts_with(&qs.id)));
    let written = std::fs::read_to_string(layout(&cfg).extract_report()).unwrap();
    assert!(written.contains(&r.failures[0].response_id));
}

#[test]
fn checkpoint_reloads_with_identical_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = extracted(dir.path());
    let summary = pipeline::cmd_train(&cfg).unwrap();
    assert!(summary.checkpoint.is_file());
    assert!(layout(&cfg).train_log().is_file());
    let first = pipeline::cmd_eval(&cfg, None, SplitName::KnownTest).unwrap();
    let ckpt = Checkpoint::load(&summary.checkpoint).unwrap();
    let copy = dir.path().join("copy.asac");
    ckpt.save(&copy).unwrap();
    let second = pipeline::cmd_eval(&cfg, Some(&copy), SplitName::KnownTest).unwrap();
    assert_eq!(first, second);
    assert_eq!(
        std::fs::read(&summary.checkpoint).unwrap(),
        std::fs::read(&copy).unwrap()
    );
}

#[test]
fn retargeted_head_labels_its_reports() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = extracted(dir.path());
    cfg.train.target = ScoreTarget::Relevance;
    pipeline::cmd_train(&cfg).unwrap();
    let report = pipeline::cmd_eval(&cfg, None, SplitName::Dev).unwrap();
    assert_eq!(report.target, ScoreTarget::Relevance);
    assert!(report.to_table().contains("relevance"));
}

#[test]
fn features_from_other_backends_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = extracted(dir.path());
    pipeline::cmd_train(&cfg).unwrap();
    std::fs::write(layout(&cfg).fingerprint(), "splitter=llm;text=other").unwrap();
    let err = pipeline::cmd_eval(&cfg, None, SplitName::Dev).unwrap_err();
    assert!(matches!(err, AsaError::Compatibility(_)), "{err}");
    assert!(err.to_string().contains("splitter"), "{err}");
    assert_eq!(err.exit_code(), 1);
}

#[test]
fn evaluating_an_empty_split_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = extracted(dir.path());
    cfg.splits.ratios = (0.8, 0.2, 0.0);
    pipeline::cmd_train(&cfg).unwrap();
    let err = pipeline::cmd_eval(&cfg, None, SplitName::KnownTest).unwrap_err();
    assert!(matches!(err, AsaError::Input(_)), "{err}");
}

#[test]
fn training_requires_extracted_features() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    pipeline::cmd_generate(&cfg).unwrap();
    let err = pipeline::cmd_train(&cfg).unwrap_err();
    assert!(matches!(err, AsaError::MissingFile(_)), "{err}");
}

#[test]
fn identical_ablation_cells_give_identical_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = extracted(dir.path());
    let p = pipeline::prepare(&cfg).unwrap();
    let cells = asa::traineval::ablation_grid("holistic").unwrap();
    let full = cells.iter().find(|c| c.name == "full").unwrap().clone();
    let twin = asa::traineval::AblationCell {
        name: "full again".into(),
        ..full.clone()
    };
    let rows = asa::traineval::run_ablation(&[full, twin], |cell| {
        let (ckpt, _) = pipeline::train_cell(&cfg, &p, cell.toggles, cell.target)?;
        let ex = pipeline::examples(&ckpt.assembler, &p.store, &p.manifest, &p.split.dev, cell.target)?;
        Ok(vec![asa::traineval::evaluate(
            &ckpt.model,
            &ex,
            "dev",
            cell.target,
        )?])
    });
    assert_eq!(rows[0].reports, rows[1].reports);
}

#[test]
fn unknown_grid_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let err = pipeline::cmd_ablate(&cfg, "everything").unwrap_err();
    assert!(matches!(err, AsaError::Config(_)), "{err}");
}
