//! Acceptance suite: one PASS/FAIL line per criterion, tolerances pinned
//! below. Runs the full pipeline on the bundled corpora, so it is slow in
//! unoptimized builds.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use cadgen::attribution::{importance_exact, importance_in, CandidateTerm, SampleCount, SamplerConfig, TermKind};
use cadgen::augment_eval::{accuracy, sensitivity_probe, TrainTag, ARM_ABOVE, ARM_BELOW};
use cadgen::classifier::{load_model, train, Classifier, LinearModel};
use cadgen::config::{AblationThreshold, PipelineConfig};
use cadgen::corpus::{load_dataset, EmbeddingTable, Label, LabeledDataset, LabeledDocument};
use cadgen::filter::{gate, mover_value};
use cadgen::generator::{CounterfactualCandidate, Method};
use cadgen::pipeline::{read_candidates, Run, ACCEPTED, AUGMENTED, CANDIDATES};
use cadgen::synth::DECOY;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Reference accuracies (percent) for the linear classifier.
const REF_O_O: f64 = 80.0;
const REF_CF_O: f64 = 58.3;
const REF_CF_CF: f64 = 91.2;
const REF_O_CF: f64 = 51.0;
const MATRIX_TOL: f64 = 5.0;
const MATRIX_BUDGET: Duration = Duration::from_secs(300);
const AC_CF_MARGIN: f64 = 20.0;

const MC_INSTANCES: usize = 200;
const MC_SAMPLES: usize = 2000;
const MC_STD_ERRORS: f64 = 4.0;
const MC_MIN_RATE: f64 = 0.95;
const KEEP_PROB: f64 = 0.7;

const FUZZ_PAIRS: usize = 10_000;
const SYMMETRY_TOL: f64 = 1e-12;

const PLANTED_MARGIN: f64 = 10.0;

struct Outcome {
    name: &'static str,
    pass: bool,
    detail: String,
}

type Check = Result<(bool, String), String>;

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

/// Default config with every path anchored at the workspace root.
fn config(out: &Path) -> PipelineConfig {
    let mut c = PipelineConfig::default();
    let r = root();
    let p = &mut c.paths;
    p.train = r.join(&p.train);
    for o in [&mut p.train_cf, &mut p.test, &mut p.test_cf, &mut p.embeddings] {
        *o = o.as_ref().map(|x| r.join(x));
    }
    p.lexicon_positive = r.join(&p.lexicon_positive);
    p.lexicon_negative = r.join(&p.lexicon_negative);
    p.antonyms = r.join(&p.antonyms);
    p.ood = p.ood.iter().map(|x| r.join(x)).collect();
    p.output_dir = out.to_path_buf();
    c
}

fn pct(x: f64) -> f64 {
    100.0 * x
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut files = BTreeMap::new();
    for e in fs::read_dir(dir).expect("output dir") {
        let e = e.expect("dir entry");
        if e.path().is_file() {
            files.insert(e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).expect("artifact"));
        }
    }
    files
}

/// State shared by the criteria that need a full pipeline run.
struct FullRun {
    run: Run,
    elapsed: Duration,
    matrix: cadgen::augment_eval::EvalMatrix,
}

fn full_run(out: &Path) -> Result<FullRun, String> {
    let mut cfg = config(out);
    cfg.eval.ablation_threshold = AblationThreshold::Median;
    let run = Run::new(cfg).map_err(|e| e.to_string())?;
    let t = Instant::now();
    let matrix = run.pipeline().map_err(|e| e.to_string())?;
    Ok(FullRun {
        run,
        elapsed: t.elapsed(),
        matrix,
    })
}

fn matrix_reproduction(f: &FullRun) -> Check {
    let m = &f.matrix;
    let cell = |tag, on_o: bool| {
        let r = m.row(tag).expect("row");
        pct(if on_o { r.on_o.mean } else { r.on_cf.mean })
    };
    let cells = [
        ("O/O", cell(TrainTag::O, true), REF_O_O),
        ("CF/O", cell(TrainTag::Cf, true), REF_CF_O),
        ("CF/CF", cell(TrainTag::Cf, false), REF_CF_CF),
        ("O/CF", cell(TrainTag::O, false), REF_O_CF),
    ];
    let mut pass = f.elapsed < MATRIX_BUDGET;
    let mut detail = Vec::new();
    for (name, got, want) in cells {
        let ok = (got - want).abs() <= MATRIX_TOL;
        pass &= ok;
        detail.push(format!("{name} {got:.1} (ref {want}{})", if ok { "" } else { ", out of range" }));
    }
    detail.push(format!("{} seeds, {:.0}s (budget {}s)", m.seeds.len(), f.elapsed.as_secs_f64(), MATRIX_BUDGET.as_secs()));
    Ok((pass, detail.join(", ")))
}

fn augmentation_benefit(f: &FullRun) -> Check {
    let row = |tag| f.matrix.row(tag).expect("row");
    let (o, ac) = (row(TrainTag::O), row(TrainTag::Ac));
    let (oo, ocf, aco, accf) = (pct(o.on_o.mean), pct(o.on_cf.mean), pct(ac.on_o.mean), pct(ac.on_cf.mean));
    let pass = aco >= oo && accf >= ocf + AC_CF_MARGIN;
    Ok((
        pass,
        format!("AC/O {aco:.1} vs O/O {oo:.1}; AC/CF {accf:.1} vs O/CF {ocf:.1} + {AC_CF_MARGIN}"),
    ))
}

fn threshold_ordering(f: &FullRun) -> Check {
    let r = f.run.ablate().map_err(|e| e.to_string())?;
    // the first test set is the in-domain original test split
    let above = r.row(ARM_ABOVE).ok_or("no above arm")?.cells[0].mean;
    let below = r.row(ARM_BELOW).ok_or("no below arm")?.cells[0].mean;
    Ok((
        r.per_arm > 0 && above > below,
        format!(
            "median threshold {:.4}, {} per arm, in-domain {:.2} above vs {:.2} below",
            r.threshold,
            r.per_arm,
            pct(above),
            pct(below)
        ),
    ))
}

fn flip_guarantee(f: &FullRun) -> Check {
    let model = load_model(f.run.config.paths.model_path()).map_err(|e| e.to_string())?;
    let cands = read_candidates(&f.run.path(CANDIDATES)).map_err(|e| e.to_string())?;
    let accepted = read_candidates(&f.run.path(ACCEPTED)).map_err(|e| e.to_string())?;
    let threshold = f.run.config.filter.threshold;
    let mut flipped = 0;
    let mut bad_flip = 0;
    for c in cands.iter().filter(|c| c.flipped) {
        flipped += 1;
        if model.predict_text(&c.text).map_err(|e| e.to_string())?.label != c.label {
            bad_flip += 1;
        }
    }
    let bad_gate = accepted
        .iter()
        .filter(|c| !c.flipped || c.similarity.is_none_or(|s| s < threshold))
        .count();
    Ok((
        flipped > 0 && bad_flip == 0 && bad_gate == 0,
        format!(
            "{flipped} flipped candidates, {bad_flip} do not re-classify; {} accepted, {bad_gate} below {threshold}",
            accepted.len()
        ),
    ))
}

fn determinism(f: &FullRun) -> Check {
    let first = snapshot(&f.run.out);
    let again = Run::new(f.run.config.clone()).map_err(|e| e.to_string())?;
    again.pipeline().map_err(|e| e.to_string())?;
    again.ablate().map_err(|e| e.to_string())?;
    let second = snapshot(&again.out);
    let differing: Vec<&String> = first
        .keys()
        .chain(second.keys())
        .collect::<HashSet<_>>()
        .into_iter()
        .filter(|k| first.get(*k) != second.get(*k))
        .collect();
    Ok((
        differing.is_empty() && first.contains_key(AUGMENTED),
        if differing.is_empty() {
            format!("{} artifacts byte-identical", first.len())
        } else {
            format!("differing: {differing:?}")
        },
    ))
}

fn random_instance(rng: &mut ChaCha8Rng, vocab: &[&'static str]) -> (LinearModel, LabeledDocument, CandidateTerm) {
    let weights: Vec<(&str, f64)> = vocab.iter().map(|&w| (w, rng.random_range(-2.5..2.5))).collect();
    let model = LinearModel::unigram(&weights, rng.random_range(-0.5..0.5));
    let len = rng.random_range(2..=10);
    let words: Vec<&str> = (0..len).map(|_| vocab[rng.random_range(0..vocab.len())]).collect();
    let pos = rng.random_range(0..len);
    let label = if rng.random_bool(0.5) { Label::Pos } else { Label::Neg };
    let doc = LabeledDocument::new("mc", words.join(" "), label);
    let term = CandidateTerm {
        kind: TermKind::SentimentWord,
        sentence: 0,
        start: pos,
        end: pos + 1,
        surface: words[pos].to_string(),
    };
    (model, doc, term)
}

/// Sum over keep-masks of the context, written out per mask.
fn hand_sum(model: &LinearModel, term: &str, context: &[&str], label: Label, q: f64) -> f64 {
    let k = context.len();
    let mut phi = 0.0;
    for mask in 0u32..(1 << k) {
        let kept: Vec<&str> = (0..k).filter(|b| mask >> b & 1 == 1).map(|b| context[b]).collect();
        let mut base = vec![term];
        base.extend(&kept);
        let b = model.label_score(&base.join(" "), label).expect("score");
        let m = model.label_score(&kept.join(" "), label).expect("score");
        let n = kept.len() as i32;
        phi += q.powi(n) * (1.0 - q).powi(k as i32 - n) * ((b - m) / b);
    }
    phi
}

fn estimator_correctness() -> Check {
    let vocab = ["good", "bad", "film", "plot", "dull", "superb", "cast", "story", "awful", "fine", "long", "score"];
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut within = 0;
    for i in 0..MC_INSTANCES {
        let (model, doc, term) = random_instance(&mut rng, &vocab);
        let exact = importance_exact(&model, &doc, &term, KEEP_PROB).map_err(|e| e.to_string())?;
        let cfg = SamplerConfig {
            num_samples: SampleCount::Fixed(MC_SAMPLES),
            keep_prob: KEEP_PROB,
            seed: i as u64,
        };
        let mc = importance_in(&model, &doc.sentence_lowers(), &doc.id, doc.label, &term, &cfg).map_err(|e| e.to_string())?;
        let err = (mc.phi - exact.phi).abs();
        if err <= MC_STD_ERRORS * mc.std_error || err <= 1e-12 {
            within += 1;
        }
    }
    let rate = within as f64 / MC_INSTANCES as f64;

    // term first, then the context words; the hand sum enumerates the same
    // masks in the same order
    let model = LinearModel::unigram(&[("good", 1.3), ("film", 0.4), ("plot", -0.6), ("dull", -1.1)], 0.1);
    let mut hand_ok = 0;
    let fixtures: [&[&str]; 4] = [&[], &["film"], &["film", "plot"], &["film", "plot", "dull"]];
    for ctx in fixtures {
        for label in [Label::Pos, Label::Neg] {
            let mut words = vec!["good"];
            words.extend(ctx);
            let doc = LabeledDocument::new("h", words.join(" "), label);
            let term = CandidateTerm {
                kind: TermKind::SentimentWord,
                sentence: 0,
                start: 0,
                end: 1,
                surface: "good".into(),
            };
            let got = importance_exact(&model, &doc, &term, KEEP_PROB).map_err(|e| e.to_string())?.phi;
            if got.to_bits() == hand_sum(&model, "good", ctx, label, KEEP_PROB).to_bits() {
                hand_ok += 1;
            }
        }
    }
    let hand_total = fixtures.len() * 2;
    Ok((
        rate >= MC_MIN_RATE && hand_ok == hand_total,
        format!(
            "{within}/{MC_INSTANCES} within {MC_STD_ERRORS} SE at N={MC_SAMPLES} (need {:.0}%); {hand_ok}/{hand_total} hand sums exact",
            100.0 * MC_MIN_RATE
        ),
    ))
}

fn metric_properties() -> Check {
    let vocab: Vec<String> = (0..40).map(|i| format!("w{i}")).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut emb = EmbeddingTable::new(8);
    // the last ten words stay out of vocabulary
    for w in &vocab[..30] {
        let v: Vec<f32> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        emb.insert(w.as_str(), &v);
    }
    let docs = (0..50)
        .map(|i| {
            let text: Vec<&str> = (0..6).map(|_| vocab[rng.random_range(0..vocab.len())].as_str()).collect();
            LabeledDocument::new(i.to_string(), text.join(" "), Label::Pos)
        })
        .collect();
    emb.fit_idf(&LabeledDataset::new("idf", docs).map_err(|e| e.to_string())?);
    let seq = |rng: &mut ChaCha8Rng| -> Vec<&str> {
        let n = rng.random_range(1..=20);
        (0..n).map(|_| vocab[rng.random_range(0..vocab.len())].as_str()).collect()
    };
    let (mut identity, mut symmetry, mut bounds) = (0, 0.0f64, 0);
    for _ in 0..FUZZ_PAIRS {
        let a = seq(&mut rng);
        let b = seq(&mut rng);
        let ab = mover_value(&a, &b, &emb).map_err(|e| e.to_string())?;
        let ba = mover_value(&b, &a, &emb).map_err(|e| e.to_string())?;
        if mover_value(&a, &a, &emb).map_err(|e| e.to_string())? == 1.0 {
            identity += 1;
        }
        symmetry = symmetry.max((ab - ba).abs());
        if (0.0..=1.0).contains(&ab) {
            bounds += 1;
        }
    }
    let cands: Vec<CounterfactualCandidate> = (0..500)
        .map(|i| CounterfactualCandidate {
            source_id: i.to_string(),
            method: Method::RepCt,
            text: String::new(),
            label: Label::Pos,
            flipped: rng.random_bool(0.8),
            edits: Vec::new(),
            similarity: rng.random_bool(0.95).then(|| rng.random_range(0.0..=1.0)),
        })
        .collect();
    let mut monotone = true;
    let mut prev: Option<HashSet<String>> = None;
    for step in 0..=100 {
        let (acc, _) = gate(cands.clone(), step as f64 / 100.0);
        let ids: HashSet<String> = acc.into_iter().map(|c| c.source_id).collect();
        if let Some(p) = &prev {
            monotone &= ids.is_subset(p);
        }
        prev = Some(ids);
    }
    Ok((
        identity == FUZZ_PAIRS && symmetry <= SYMMETRY_TOL && bounds == FUZZ_PAIRS && monotone,
        format!(
            "identity {identity}/{FUZZ_PAIRS}, max asymmetry {symmetry:.1e}, bounded {bounds}/{FUZZ_PAIRS}, gate monotone {monotone}"
        ),
    ))
}

fn planted_robustness(out: &Path) -> Check {
    let data = root().join("data/planted");
    let mut cfg = config(out);
    cfg.paths.train = data.join("train.jsonl");
    cfg.paths.test = Some(data.join("test.jsonl"));
    cfg.paths.train_cf = None;
    cfg.paths.test_cf = None;
    cfg.paths.ood = Vec::new();
    let run = Run::new(cfg).map_err(|e| e.to_string())?;
    let s = |e: cadgen::pipeline::PipelineError| e.to_string();
    run.train().map_err(s)?;
    run.attribute().map_err(s)?;
    run.generate().map_err(s)?;
    run.filter().map_err(s)?;
    run.augment().map_err(s)?;
    let c = &run.config;
    let o_set = load_dataset(&c.paths.train).map_err(|e| e.to_string())?;
    let ac_set = load_dataset(run.path(AUGMENTED)).map_err(|e| e.to_string())?;
    let reversed = load_dataset(data.join("reversed.jsonl")).map_err(|e| e.to_string())?;
    let test = load_dataset(data.join("test.jsonl")).map_err(|e| e.to_string())?;
    let (mut acc_o, mut acc_ac) = (0.0, 0.0);
    for &seed in &c.eval.seeds {
        let o = train(&o_set, &c.trainer, seed).map_err(|e| e.to_string())?;
        let ac = train(&ac_set, &c.trainer, seed).map_err(|e| e.to_string())?;
        acc_o += accuracy(&o, &reversed).map_err(|e| e.to_string())?;
        acc_ac += accuracy(&ac, &reversed).map_err(|e| e.to_string())?;
    }
    let n = c.eval.seeds.len() as f64;
    let (acc_o, acc_ac) = (pct(acc_o / n), pct(acc_ac / n));
    let o = train(&o_set, &c.trainer, c.seed).map_err(|e| e.to_string())?;
    let ac = train(&ac_set, &c.trainer, c.seed).map_err(|e| e.to_string())?;
    let probe = sensitivity_probe(&o, &ac, &[DECOY.to_string()], &test, &c.sampler, c.eval.probe_max_occurrences)
        .map_err(|e| e.to_string())?;
    let row = probe.row(DECOY).ok_or("decoy never occurs in the test split")?;
    Ok((
        acc_ac >= acc_o + PLANTED_MARGIN && row.magnitude_b < row.magnitude_a,
        format!(
            "reversed-correlation accuracy AC {acc_ac:.1} vs O {acc_o:.1} (+{PLANTED_MARGIN} needed); |phi({DECOY})| {:.4} -> {:.4} over {} occurrences",
            row.magnitude_a, row.magnitude_b, row.occurrences
        ),
    ))
}

fn record(outcomes: &mut Vec<Outcome>, name: &'static str, check: Check) {
    let (pass, detail) = match check {
        Ok(x) => x,
        Err(e) => (false, format!("error: {e}")),
    };
    println!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    outcomes.push(Outcome { name, pass, detail });
}

fn main() -> ExitCode {
    let tmp = tempfile::tempdir().expect("temp dir");
    let mut outcomes = Vec::new();
    record(&mut outcomes, "estimator-correctness", estimator_correctness());
    record(&mut outcomes, "metric-properties", metric_properties());
    match full_run(&tmp.path().join("imdb")) {
        Ok(f) => {
            record(&mut outcomes, "matrix-reproduction", matrix_reproduction(&f));
            record(&mut outcomes, "augmentation-benefit", augmentation_benefit(&f));
            record(&mut outcomes, "threshold-ablation-ordering", threshold_ordering(&f));
            record(&mut outcomes, "flip-guarantee", flip_guarantee(&f));
            record(&mut outcomes, "pipeline-determinism", determinism(&f));
        }
        Err(e) => {
            for name in [
                "matrix-reproduction",
                "augmentation-benefit",
                "threshold-ablation-ordering",
                "flip-guarantee",
                "pipeline-determinism",
            ] {
                record(&mut outcomes, name, Err(e.clone()));
            }
        }
    }
    record(&mut outcomes, "planted-decoy-robustness", planted_robustness(&tmp.path().join("planted")));
    let failed: Vec<&str> = outcomes.iter().filter(|o| !o.pass).map(|o| o.name).collect();
    println!(
        "acceptance: {} passed, {} failed{}",
        outcomes.len() - failed.len(),
        failed.len(),
        if failed.is_empty() { String::new() } else { format!(" ({})", failed.join(", ")) }
    );
    debug_assert!(outcomes.iter().all(|o| !o.detail.is_empty()));
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
