//! Invariants of the similarity metric, the gate, edit replay and proposal
//! normalization over generated inputs.

use cadgen::corpus::{EmbeddingTable, Label};
use cadgen::filter::{gate, mover_score, mover_value};
use cadgen::generator::{apply_edits, CounterfactualCandidate, EditKind, EditOp, Method};
use cadgen::proposer::{Proposal, ProposalSet};
use proptest::prelude::*;

const VOCAB: &[&str] = &[
    "the", "movie", "film", "good", "bad", "great", "awful", "plot", "acting", "was", "is", "not", "very", "boring",
    "superb", ".", ",", "!",
];

/// Embeddings for all but the last three vocabulary words, so some tokens
/// are out of vocabulary.
fn table(vectors: &[Vec<f32>], idf: &[f64]) -> EmbeddingTable {
    let mut t = EmbeddingTable::new(4);
    for (w, v) in VOCAB.iter().zip(vectors).take(VOCAB.len() - 3) {
        t.insert(*w, v);
    }
    let docs: Vec<_> = VOCAB
        .iter()
        .zip(idf)
        .enumerate()
        .flat_map(|(i, (w, &n))| {
            (0..(n as usize).max(1)).map(move |j| cadgen::corpus::LabeledDocument::new(format!("{i}-{j}"), *w, Label::Pos))
        })
        .collect();
    t.fit_idf(&cadgen::corpus::LabeledDataset::new("idf", docs).unwrap());
    t
}

fn arb_table() -> impl Strategy<Value = EmbeddingTable> {
    (
        prop::collection::vec(prop::collection::vec(-1.0f32..1.0, 4), VOCAB.len()),
        prop::collection::vec(1.0f64..6.0, VOCAB.len()),
    )
        .prop_map(|(v, idf)| table(&v, &idf))
}

fn arb_tokens() -> impl Strategy<Value = Vec<&'static str>> {
    prop::collection::vec(prop::sample::select(VOCAB), 1..14)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn mover_identity_is_one(emb in arb_table(), a in arb_tokens()) {
        prop_assert_eq!(mover_value(&a, &a, &emb).unwrap(), 1.0);
    }

    #[test]
    fn mover_is_symmetric_and_bounded(emb in arb_table(), a in arb_tokens(), b in arb_tokens()) {
        let ab = mover_value(&a, &b, &emb).unwrap();
        let ba = mover_value(&b, &a, &emb).unwrap();
        prop_assert!((ab - ba).abs() <= 1e-12, "{} vs {}", ab, ba);
        prop_assert!((0.0..=1.0).contains(&ab), "{}", ab);
    }

    #[test]
    fn mover_score_agrees_with_value(emb in arb_table(), a in arb_tokens(), b in arb_tokens()) {
        let s = mover_score(&a, &b, &emb).unwrap();
        prop_assert_eq!(s.value, mover_value(&a, &b, &emb).unwrap());
        prop_assert_eq!(s.alignments.len(), a.len());
        prop_assert!(s.alignments.iter().all(|al| (0.0..=1.0).contains(&al.similarity)));
    }

    #[test]
    fn gate_is_monotone_in_threshold(
        scores in prop::collection::vec((prop::option::of(0.0f64..=1.0), any::<bool>()), 0..40),
        t1 in 0.0f64..=1.0,
        t2 in 0.0f64..=1.0,
    ) {
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        let cands: Vec<CounterfactualCandidate> = scores
            .iter()
            .enumerate()
            .map(|(i, &(similarity, flipped))| CounterfactualCandidate {
                source_id: i.to_string(),
                method: Method::RepCt,
                text: String::new(),
                label: Label::Neg,
                flipped,
                edits: Vec::new(),
                similarity,
            })
            .collect();
        let (acc_lo, rej_lo) = gate(cands.clone(), lo);
        let (acc_hi, rej_hi) = gate(cands.clone(), hi);
        prop_assert_eq!(acc_lo.len() + rej_lo.len(), cands.len());
        prop_assert_eq!(acc_hi.len() + rej_hi.len(), cands.len());
        let lo_ids: std::collections::HashSet<_> = acc_lo.iter().map(|c| c.source_id.clone()).collect();
        prop_assert!(acc_hi.iter().all(|c| lo_ids.contains(&c.source_id)));
        prop_assert!(acc_hi.iter().all(|c| c.flipped && c.similarity.unwrap() >= hi));
    }

    #[test]
    fn edits_reconstruct_expected_text(
        words in prop::collection::vec(prop::sample::select(VOCAB), 1..16),
        ops in prop::collection::vec(0u8..3, 16),
        reps in prop::collection::vec(prop::sample::select(VOCAB), 16),
        reverse in any::<bool>(),
    ) {
        let source = words.join(" ");
        let mut edits = Vec::new();
        let mut expected = Vec::new();
        let mut at = 0;
        for (i, w) in words.iter().enumerate() {
            let span = (at, at + w.len());
            at += w.len() + 1;
            match ops[i] {
                0 => expected.push(w.to_string()),
                1 => {
                    edits.push(EditOp { kind: EditKind::Replace, span, original: w.to_string(), replacement: reps[i].to_string() });
                    expected.push(reps[i].to_string());
                }
                _ => edits.push(EditOp { kind: EditKind::Remove, span, original: w.to_string(), replacement: String::new() }),
            }
        }
        if reverse {
            edits.reverse();
        }
        prop_assert_eq!(apply_edits(&source, &edits).unwrap(), expected.join(" "));
    }

    #[test]
    fn overlapping_edits_are_rejected(words in prop::collection::vec(prop::sample::select(VOCAB), 1..8)) {
        let source = words.join(" ");
        let w = words[0];
        let e = EditOp { kind: EditKind::Replace, span: (0, w.len()), original: w.to_string(), replacement: "x".into() };
        prop_assert!(apply_edits(&source, &[e.clone(), e]).is_err());
    }

    #[test]
    fn proposal_sets_are_sorted_unique_and_capped(
        raw in prop::collection::vec((prop::sample::select(VOCAB), prop_oneof![-5.0f64..5.0, Just(f64::NAN)]), 0..30),
        k in 1usize..10,
    ) {
        let input: Vec<Proposal> = raw.iter().map(|(w, s)| Proposal { word: w.to_string(), score: *s }).collect();
        let set = ProposalSet::from_scored(input, k);
        prop_assert!(set.len() <= k);
        prop_assert!(set.candidates.iter().all(|p| p.score.is_finite()));
        prop_assert!(set.candidates.windows(2).all(|w| w[0].score >= w[1].score));
        let unique: std::collections::HashSet<_> = set.words().collect();
        prop_assert_eq!(unique.len(), set.len());
        for p in &set.candidates {
            let best = raw.iter().filter(|(w, s)| *w == p.word && s.is_finite()).map(|(_, s)| *s).fold(f64::MIN, f64::max);
            prop_assert_eq!(p.score, best);
        }
    }
}
