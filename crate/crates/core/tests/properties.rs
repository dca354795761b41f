use std::collections::BTreeSet;

use proptest::prelude::*;

use asa::container::Container;
use asa::corpus::{make_splits, ResponseRecord};
use asa::grammar::{align_edits, edit_cost, freeze_taxonomy, grammar_features, GRAMMAR_DIM};
use asa::relevance::fit_normalizer;
use asa::text::tokenize;
use asa::traineval::{accuracy, binary_accuracy, word_error_rate};

fn tokens() -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec(
        prop::sample::select(vec!["a", "the", "cat", "Cat", "go", "went", "."]),
        0..10,
    )
    .prop_map(|v| v.into_iter().map(String::from).collect())
}

fn scores(n: usize) -> impl Strategy<Value = Vec<u8>> {
    prop::collection::vec(1u8..=5, n)
}

fn record(id: String, set: &str) -> ResponseRecord {
    ResponseRecord {
        id,
        question_set_id: set.to_string(),
        audio_ref: None,
        transcript: "hello".into(),
        word_timestamps: None,
        scores: Default::default(),
    }
}

proptest! {
    #[test]
    fn binary_accuracy_dominates_accuracy((p, g) in (1usize..30).prop_flat_map(|n| (scores(n), scores(n)))) {
        prop_assert!(binary_accuracy(&p, &g).unwrap() >= accuracy(&p, &g).unwrap());
    }

    #[test]
    fn edit_cost_is_symmetric_and_bounded(a in tokens(), b in tokens()) {
        let ab = edit_cost(&align_edits(&a, &b));
        prop_assert_eq!(ab, edit_cost(&align_edits(&b, &a)));
        prop_assert!(ab <= a.len().max(b.len()));
        prop_assert!(ab >= a.len().abs_diff(b.len()));
    }

    #[test]
    fn edit_spans_are_ordered_and_disjoint(a in tokens(), b in tokens()) {
        let edits = align_edits(&a, &b);
        for w in edits.windows(2) {
            prop_assert!(w[0].raw_range.1 <= w[1].raw_range.0);
            prop_assert!(w[0].corr_range.1 <= w[1].corr_range.0);
        }
    }

    #[test]
    fn wer_is_zero_only_for_identical(a in tokens(), b in tokens()) {
        prop_assume!(!a.is_empty());
        let folded = |v: &[String]| v.iter().map(|t| t.to_lowercase()).collect::<Vec<_>>();
        let wer = word_error_rate(&a, &b).unwrap();
        prop_assert_eq!(wer == 0.0, folded(&a) == folded(&b));
    }

    #[test]
    fn grammar_frequencies_times_words_are_counts(labels in prop::collection::vec(
        prop::sample::select(vec!["R:VERB:SVA", "M:DET", "U:DET", "R:NOUN:NUM", "OTHER"]), 0..12),
        words in 1usize..30,
    ) {
        let labels: Vec<String> = labels.into_iter().map(String::from).collect();
        let taxonomy = freeze_taxonomy(labels.iter().map(String::as_str), GRAMMAR_DIM).unwrap();
        let text = vec!["w"; words].join(" ");
        let v = grammar_features(&taxonomy, &labels, &text).unwrap();
        prop_assert_eq!(v.freqs.len(), GRAMMAR_DIM);
        prop_assert_eq!(v.counts.iter().sum::<u32>() as usize, labels.len());
        for (f, c) in v.freqs.iter().zip(&v.counts) {
            prop_assert_eq!(*f, *c as f64 / words as f64);
        }
    }

    #[test]
    fn normalized_values_stay_in_range(
        train in prop::collection::vec(prop::option::of(-1.0f64..1.0), 1..10),
        x in prop::option::of(-3.0f64..3.0),
    ) {
        prop_assume!(train.iter().any(Option::is_some));
        let n = fit_normalizer(&[train]).unwrap();
        let y = n.normalize(0, x).unwrap();
        prop_assert!(y == 0.0 || (0.01..=1.0).contains(&y));
        prop_assert_eq!(y == 0.0, x.is_none());
    }

    #[test]
    fn splits_partition_the_corpus(sets in 2usize..6, per_set in 2usize..6, seed in any::<u64>()) {
        prop_assume!((sets - 1) * per_set >= 3);
        let records: Vec<ResponseRecord> = (0..sets)
            .flat_map(|s| (0..per_set).map(move |r| record(format!("S{s}-R{r}"), &format!("S{s}"))))
            .collect();
        let split = make_splits(&records, "S0", (0.8, 0.1, 0.1), seed).unwrap();
        let all: Vec<&String> = split.train.iter().chain(&split.dev).chain(&split.known_test)
            .chain(&split.unknown_test).collect();
        let unique: BTreeSet<&String> = all.iter().copied().collect();
        prop_assert_eq!(all.len(), records.len());
        prop_assert_eq!(unique.len(), records.len());
        prop_assert_eq!(split.unknown_test.len(), per_set);
        prop_assert!(split.unknown_test.iter().all(|id| id.starts_with("S0-")));
        prop_assert_eq!(split, make_splits(&records, "S0", (0.8, 0.1, 0.1), seed).unwrap());
    }

    #[test]
    fn containers_round_trip(values in prop::collection::vec(-1e6f64..1e6, 0..50), note in ".{0,20}") {
        let mut c = Container::new("test", serde_json::json!({ "note": note }));
        c.insert_vec("v", &values);
        let back = Container::from_bytes(&c.to_bytes()).unwrap();
        prop_assert_eq!(back.get_vec("v").unwrap(), values);
        prop_assert_eq!(&back.meta["note"], &serde_json::json!(note));
    }

    #[test]
    fn tokenization_keeps_every_non_space_character(s in "[a-zA-Z',.!? -]{0,40}") {
        let joined: String = tokenize(&s).concat();
        let expected: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        prop_assert_eq!(joined, expected);
    }
}

#[test]
fn wer_exceeds_one_when_insertions_dominate() {
    let r: Vec<String> = vec!["hi".into()];
    let h: Vec<String> = ["well", "hi", "there", "friend"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    assert_eq!(word_error_rate(&r, &h).unwrap(), 3.0);
}
