//! Acceptance suite. Each criterion runs in isolation and prints one
//! PASS/FAIL line; the process exits nonzero if any failed.
//!
//! Run with `cargo test -p kbalign-cli --test acceptance`.

#[path = "../../core/tests/oracle/mod.rs"]
mod oracle;

use std::collections::{BTreeMap, HashMap};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Duration, Instant};

use kbalign_core::candgen::{
    bm25_search, build_index, char_tfidf_search, Bm25Params, CandidateList, CharTfidfIndex, Field,
};
use kbalign_core::corpus::{
    build_alignment_dataset, read_concepts, read_entities, AliasTerm, AlignmentRecord, Concept, Cui, DatasetOptions,
    LangTag, Qid, WikiEntity,
};
use kbalign_core::eval::{normalized_recall_at_k, recall_at_k, QueryRun, RunResult, DEFAULT_KS};
use kbalign_core::pipeline::{build_all_pairs, generate_candidates, rerank_all, CandidateSource};
use kbalign_core::rerank::{
    mean_loss_and_gradient, objective, train_scorer, training_groups, FeatureVector, QueryGroup, TrainOptions,
    N_FEATURES,
};
use kbalign_service::{
    export_alignments, record_decision, replay_bytes, AppState, Catalog, Decision, DecisionLog, QueueState, Verdict,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn fixture(name: &str) -> PathBuf {
    workspace_root().join("fixtures/mini").join(name)
}

fn within(elapsed: Duration, limit_secs: u64) {
    assert!(
        elapsed < Duration::from_secs(limit_secs),
        "took {:.2}s, limit {limit_secs}s",
        elapsed.as_secs_f64()
    );
}

fn en(text: &str) -> AliasTerm {
    AliasTerm::new(text, LangTag::EN).unwrap()
}

fn concept_of(terms: &[&str]) -> Concept {
    Concept::new("C0017168".parse().unwrap(), terms.iter().map(|t| en(t)).collect(), None).unwrap()
}

// ---------------------------------------------------------------- metrics

fn run_from_ranks(ranks: &[Option<usize>]) -> RunResult {
    let queries = ranks
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let gold = Qid::new(1_000_000 + i as u64);
            let depth = r.unwrap_or(0).max(64);
            let mut ranked: Vec<Qid> = (1..=depth as u64).map(Qid::new).collect();
            if let Some(r) = r {
                ranked[r - 1] = gold;
            }
            QueryRun {
                cui: format!("C{i:07}").parse().unwrap(),
                gold,
                ranked,
            }
        })
        .collect();
    RunResult {
        method: "bm25".into(),
        queries,
    }
}

fn metric_oracle() {
    let start = Instant::now();
    let worked = [
        Some(1),
        Some(1),
        Some(1),
        Some(3),
        Some(5),
        Some(9),
        Some(20),
        Some(70),
        None,
        None,
    ];
    let run = run_from_ranks(&worked);
    assert_eq!(recall_at_k(&run, &[1]).unwrap()[&1], 0.3);
    assert_eq!(normalized_recall_at_k(&run, &[1]).unwrap()[&1], 0.375);

    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..200 {
        let n = rng.gen_range(1..80);
        let ranks: Vec<Option<usize>> = (0..n)
            .map(|_| rng.gen_bool(0.8).then(|| rng.gen_range(1..100)))
            .collect();
        let run = run_from_ranks(&ranks);
        let r = recall_at_k(&run, &DEFAULT_KS).unwrap();
        for k in DEFAULT_KS {
            assert_eq!(r[&k], oracle::recall(&ranks, k), "R@{k} for {ranks:?}");
        }
        if ranks.iter().any(Option::is_some) {
            let nr = normalized_recall_at_k(&run, &DEFAULT_KS).unwrap();
            for k in DEFAULT_KS {
                assert_eq!(nr[&k], oracle::normalized_recall(&ranks, k), "nR@{k} for {ranks:?}");
            }
        }
    }
    within(start.elapsed(), 5);
}

// ---------------------------------------------------------------- bm25

const WORDS: &[&str] = &[
    "acid",
    "reflux",
    "gerd",
    "disease",
    "heart",
    "attack",
    "müller",
    "band",
    "oesofagus",
    "reflujo",
    "chronic",
    "syndrome",
    "kidney",
    "failure",
    "stone",
    "renal",
    "心臓",
    "病",
];

fn random_phrase(rng: &mut ChaCha8Rng) -> String {
    let n = rng.gen_range(1..4);
    (0..n)
        .map(|_| *WORDS.choose(rng).unwrap())
        .collect::<Vec<_>>()
        .join(" ")
}

fn random_entity(rng: &mut ChaCha8Rng, qid: u64) -> WikiEntity {
    let title = random_phrase(rng);
    let aliases = (0..rng.gen_range(0..4)).map(|_| en(&random_phrase(rng))).collect();
    let text = rng.gen_bool(0.5).then(|| random_phrase(rng));
    WikiEntity::new(Qid::new(qid), &title, aliases, text, None).unwrap()
}

fn bm25_correctness() {
    let start = Instant::now();
    let docs = [
        WikiEntity::new(Qid::new(1), "GERD", vec![], None, None).unwrap(),
        WikiEntity::new(Qid::new(2), "Acid reflux", vec![], None, None).unwrap(),
        WikiEntity::new(Qid::new(3), "Acid trip music", vec![], None, None).unwrap(),
    ];
    let index = build_index(&docs, &[Field::Aliases]).unwrap();
    let got = bm25_search(&index, &concept_of(&["gerd"]), 64, &Bm25Params::default()).unwrap();
    assert_eq!(got.candidates[0].qid, Qid::new(1));
    assert!(
        (got.candidates[0].score - 1.2330).abs() < 1e-4,
        "{}",
        got.candidates[0].score
    );

    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut qids: Vec<u64> = (1..=100).map(|i| i * 37 % 1009).collect();
    qids.shuffle(&mut rng);
    let docs: Vec<WikiEntity> = qids.iter().map(|&q| random_entity(&mut rng, q)).collect();
    let index = build_index(&docs, &Field::ALL).unwrap();
    for _ in 0..50 {
        let terms: Vec<String> = (0..rng.gen_range(1..4)).map(|_| random_phrase(&mut rng)).collect();
        let refs: Vec<&str> = terms.iter().map(String::as_str).collect();
        let q = concept_of(&refs);
        let got = bm25_search(&index, &q, 100, &Bm25Params::default()).unwrap();
        let expected = oracle::bm25(&docs, &["title", "text", "aliases"], &q, 1.2, 0.75);
        let got_qids: Vec<Qid> = got.qids().collect();
        let expected_qids: Vec<Qid> = expected.iter().map(|(q, _)| *q).collect();
        assert_eq!(got_qids, expected_qids, "ranking for {terms:?}");
        for (c, (_, s)) in got.candidates.iter().zip(&expected) {
            assert!((c.score - s).abs() <= 1e-9, "{} vs {s}", c.score);
        }
    }
    within(start.elapsed(), 5);
}

// ---------------------------------------------------------------- char tf-idf

fn char_tfidf() {
    let ents = [
        WikiEntity::new(
            Qid::new(1),
            "GERD",
            vec![en("Gastroesophageal reflux disease")],
            None,
            None,
        )
        .unwrap(),
        WikiEntity::new(Qid::new(2), "Gerd Müller", vec![], None, None).unwrap(),
        WikiEntity::new(Qid::new(3), "Acid", vec![en("Acid (band)")], None, None).unwrap(),
    ];
    let index = CharTfidfIndex::build(&ents, 1, 5).unwrap();
    let v = index.concept_vector(&concept_of(&["GERD", "Gastroesophageal reflux disease"]));
    assert!((v.cosine(&v) - 1.0).abs() < 1e-9);
    let same = char_tfidf_search(
        &ents,
        &concept_of(&["GERD", "Gastroesophageal reflux disease"]),
        3,
        1,
        5,
    )
    .unwrap();
    assert_eq!(same.candidates[0].qid, Qid::new(1));
    assert!((same.candidates[0].score - 1.0).abs() < 1e-9);

    let gord = concept_of(&["GORD"]);
    let got = char_tfidf_search(&ents, &gord, 3, 1, 5).unwrap();
    let expected = oracle::char_tfidf(&ents, &gord, 1, 5);
    let score = |list: &[(Qid, f64)], q: u64| list.iter().find(|(x, _)| *x == Qid::new(q)).map(|(_, s)| *s);
    let got_pairs: Vec<(Qid, f64)> = got.candidates.iter().map(|c| (c.qid, c.score)).collect();
    let gerd = score(&got_pairs, 1).expect("GERD not retrieved for GORD");
    assert!(gerd > 0.0 && gerd < 1.0);
    assert!((gerd - score(&expected, 1).unwrap()).abs() < 1e-9);
    for (q, s) in &got_pairs {
        assert!((s - score(&expected, q.number()).unwrap()).abs() < 1e-9);
    }
}

// ---------------------------------------------------------------- loss

fn random_group(rng: &mut ChaCha8Rng, i: usize) -> QueryGroup {
    let n_neg = rng.gen_range(0..6);
    let mut fv = || FeatureVector(std::array::from_fn(|_| rng.gen_range(0.0..1.0)));
    let positive = fv();
    QueryGroup {
        cui: format!("C{i:07}").parse().unwrap(),
        positive,
        negatives: (0..n_neg).map(|_| fv()).collect(),
    }
}

fn loss_gradient() {
    assert!((objective(0.9, &[0.1, 0.1]) - 0.316082).abs() < 1e-6);
    assert!((objective(0.5, &[0.5]) - 1.386294).abs() < 1e-6);

    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for instance in 0..50 {
        let groups: Vec<QueryGroup> = (0..rng.gen_range(1..6)).map(|i| random_group(&mut rng, i)).collect();
        let params: [f64; N_FEATURES + 1] = std::array::from_fn(|_| rng.gen_range(-2.0..2.0));
        let (loss, grad) = mean_loss_and_gradient(&params, &groups);
        let og: Vec<(Vec<f64>, Vec<Vec<f64>>)> = groups
            .iter()
            .map(|g| {
                (
                    g.positive.0.to_vec(),
                    g.negatives.iter().map(|x| x.0.to_vec()).collect(),
                )
            })
            .collect();
        assert!((loss - oracle::mean_group_loss(&params, &og)).abs() < 1e-9);
        let numeric = oracle::numeric_gradient(|p| oracle::mean_group_loss(p, &og), &params, 1e-5);
        for (a, n) in grad.iter().zip(&numeric) {
            let rel = (a - n).abs() / a.abs().max(n.abs()).max(1e-6);
            assert!(rel < 1e-4, "instance {instance}: analytic {a} numeric {n}");
        }
    }
}

// ---------------------------------------------------------------- rerank lift

fn gold_map(records: &[AlignmentRecord]) -> HashMap<Cui, Qid> {
    records.iter().map(|r| (r.cui.clone(), r.qid)).collect()
}

fn rerank_lift() {
    let start = Instant::now();
    let concepts = read_concepts(&fixture("concepts.jsonl")).unwrap();
    let entities = read_entities(&fixture("entities.jsonl")).unwrap();
    let dataset = build_alignment_dataset(&concepts, &entities, &DatasetOptions::default()).unwrap();
    let index = build_index(&entities, &Field::ALL).unwrap();
    let source = CandidateSource::Bm25 {
        index: &index,
        params: Bm25Params::default(),
    };

    let candidates_for = |records: &[AlignmentRecord]| {
        let queries: Vec<Concept> = records.iter().map(AlignmentRecord::concept).collect();
        let lists = generate_candidates(&source, &queries, 64).unwrap();
        let pairs = build_all_pairs(&queries, &lists, &entities, Some(&gold_map(records))).unwrap();
        (lists, pairs)
    };

    let (_, train_pairs) = candidates_for(&dataset.train.records);
    let opts = TrainOptions::default();
    let (groups, _) = training_groups(&train_pairs, &opts).unwrap();
    let model = train_scorer(&groups, &opts).unwrap();

    let test = &dataset.test.records;
    let (bm25_lists, test_pairs) = candidates_for(test);
    let reranked: Vec<CandidateList> = rerank_all(&model, &bm25_lists, &test_pairs).unwrap();
    let before = RunResult::from_candidates("bm25", &bm25_lists, test).unwrap();
    let after = RunResult::from_candidates("rerank", &reranked, test).unwrap();
    let r_before = recall_at_k(&before, &[1, 64]).unwrap();
    let r_after = recall_at_k(&after, &[1, 64]).unwrap();
    println!(
        "    test queries {}: bm25 R@1 {:.4} R@64 {:.4}; rerank R@1 {:.4} R@64 {:.4}",
        test.len(),
        r_before[&1],
        r_before[&64],
        r_after[&1],
        r_after[&64]
    );
    assert!(
        r_after[&1] - r_before[&1] >= 0.10,
        "lift {:.4}",
        r_after[&1] - r_before[&1]
    );
    assert_eq!(r_after[&64], r_before[&64]);
    within(start.elapsed(), 60);
}

// ---------------------------------------------------------------- determinism

fn kbalign(args: &[&str]) {
    let out = Command::new(env!("CARGO_BIN_EXE_kbalign"))
        .args(["--quiet", "--seed", "13"])
        .args(args)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "kbalign {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

/// Runs the whole pipeline on the fixture into `dir`.
fn pipeline(dir: &Path) {
    let c = fixture("concepts.jsonl");
    let e = fixture("entities.jsonl");
    let (c, e) = (c.to_str().unwrap(), e.to_str().unwrap());
    let p = |name: &str| dir.join(name).to_str().unwrap().to_string();
    kbalign(&[
        "build-dataset",
        "--concepts",
        c,
        "--entities",
        e,
        "--out-dir",
        &p("data"),
    ]);
    kbalign(&["build-index", "--entities", e, "--out", &p("index.bin")]);
    for split in ["train", "test"] {
        let split_file = p(&format!("data/{split}.jsonl"));
        let cands = p(&format!("{split}_candidates.jsonl"));
        let pairs = p(&format!("{split}_pairs.jsonl"));
        kbalign(&[
            "candidates",
            "--split",
            &split_file,
            "--index",
            &p("index.bin"),
            "--out",
            &cands,
        ]);
        kbalign(&[
            "pairs",
            "--candidates",
            &cands,
            "--split",
            &split_file,
            "--entities",
            e,
            "--out",
            &pairs,
        ]);
    }
    kbalign(&["train", "--pairs", &p("train_pairs.jsonl"), "--out", &p("model.json")]);
    kbalign(&[
        "rerank",
        "--candidates",
        &p("test_candidates.jsonl"),
        "--pairs",
        &p("test_pairs.jsonl"),
        "--model",
        &p("model.json"),
        "--out",
        &p("test_reranked.jsonl"),
    ]);
    kbalign(&[
        "eval",
        "--gold",
        &p("data/test.jsonl"),
        "--run",
        &p("test_candidates.jsonl"),
        "--run",
        &p("test_reranked.jsonl"),
        "--out-dir",
        &p("metrics"),
    ]);
    kbalign(&[
        "align-all",
        "--concepts",
        &p("data/unaligned.jsonl"),
        "--entities",
        e,
        "--index",
        &p("index.bin"),
        "--model",
        &p("model.json"),
        "--k",
        "10",
        "--out",
        &p("align_all.jsonl"),
    ]);
}

fn end_to_end_determinism() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    pipeline(a.path());
    pipeline(b.path());
    for name in [
        "data/train.jsonl",
        "data/test.jsonl",
        "index.bin",
        "train_candidates.jsonl",
        "test_candidates.jsonl",
        "model.json",
        "test_reranked.jsonl",
        "metrics/metrics.json",
        "metrics/recall_curve.csv",
        "align_all.jsonl",
    ] {
        let x = std::fs::read(a.path().join(name)).unwrap();
        let y = std::fs::read(b.path().join(name)).unwrap();
        assert!(!x.is_empty(), "{name} is empty");
        assert!(x == y, "{name} differs between runs");
    }
}

// ---------------------------------------------------------------- service

/// Independent fold of the raw log lines: cui -> Some(qid) for an accept,
/// None for none_of_these.
fn oracle_resolutions(lines: &[serde_json::Value]) -> BTreeMap<String, Option<String>> {
    let mut state: BTreeMap<String, Option<String>> = BTreeMap::new();
    for l in lines {
        let cui = l["cui"].as_str().unwrap().to_string();
        let qid = l["qid"].as_str().map(str::to_string);
        match l["verdict"].as_str().unwrap() {
            "accept" => {
                state.insert(cui, qid);
            }
            "none_of_these" => {
                state.insert(cui, None);
            }
            "reject" if state.get(&cui).is_some_and(|cur| cur.is_some() && *cur == qid) => {
                state.remove(&cui);
            }
            _ => {}
        }
    }
    state
}

fn state_as_map(state: &QueueState) -> BTreeMap<String, Option<String>> {
    state
        .resolutions()
        .iter()
        .map(|(cui, r)| {
            let qid = match r {
                kbalign_service::Resolution::Accept { qid } => Some(qid.to_string()),
                kbalign_service::Resolution::NoneOfThese => None,
            };
            (cui.to_string(), qid)
        })
        .collect()
}

fn random_decision(rng: &mut ChaCha8Rng, catalog: &Catalog, cuis: &[Cui], t: u64) -> Decision {
    let cui = cuis.choose(rng).unwrap().clone();
    let entry = catalog.get(&cui).unwrap();
    let verdict = *entry.allowed_verdicts().choose(rng).unwrap();
    let qid = match verdict {
        Verdict::Accept | Verdict::Reject => {
            // favour the top candidates so rejects often hit an accept
            let top = entry.candidates.len().min(3);
            Some(entry.candidates[rng.gen_range(0..top)].qid)
        }
        _ => None,
    };
    Decision {
        cui,
        qid,
        verdict,
        annotator: format!("r{}", rng.gen_range(1..4)),
        timestamp: 1_700_000_000 + t,
    }
}

fn service_crash_safety() {
    let dir = tempfile::tempdir().unwrap();
    let concepts = read_concepts(&fixture("concepts.jsonl")).unwrap();
    let entities = read_entities(&fixture("entities.jsonl")).unwrap();
    let index = build_index(&entities, &Field::ALL).unwrap();
    let source = CandidateSource::Bm25 {
        index: &index,
        params: Bm25Params::default(),
    };
    let lists = generate_candidates(&source, &concepts, 8).unwrap();
    let catalog = Catalog::new(&concepts, &entities, &lists).unwrap();
    let cuis: Vec<Cui> = catalog.entries().map(|e| e.concept.cui.clone()).collect();
    let log_path = dir.path().join("decisions.jsonl");
    let state = AppState {
        catalog,
        queue: RwLock::new(QueueState::default()),
        log: Mutex::new(DecisionLog::open(&log_path).unwrap()),
        metrics: None,
        static_dir: None,
    };
    let state = Arc::new(state);

    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut snapshots = vec![QueueState::default()];
    for t in 0..1000 {
        let d = random_decision(&mut rng, &state.catalog, &cuis, t);
        record_decision(&state, &d).unwrap();
        snapshots.push(state.queue.read().unwrap().clone());
    }
    let bytes = std::fs::read(&log_path).unwrap();
    let ends: Vec<usize> = bytes
        .iter()
        .enumerate()
        .filter(|(_, b)| **b == b'\n')
        .map(|(i, _)| i + 1)
        .collect();
    assert_eq!(ends.len(), 1000);

    // every complete-line prefix, and every prefix torn inside the next line
    let mut starts = vec![0];
    starts.extend(&ends[..999]);
    for (n, (&start, &end)) in starts.iter().zip(&ends).enumerate() {
        let replay = replay_bytes(&bytes[..start], &state.catalog);
        assert_eq!(replay.skipped, 0);
        assert_eq!(
            QueueState::from_decisions(&replay.decisions),
            snapshots[n],
            "prefix of {n} lines"
        );
        let cut = rng.gen_range(start + 1..end - 1);
        let torn = replay_bytes(&bytes[..cut], &state.catalog);
        assert_eq!(
            QueueState::from_decisions(&torn.decisions),
            snapshots[n],
            "torn after {n} lines"
        );
        // only the newline missing: the record itself is whole and counts
        let whole = replay_bytes(&bytes[..end - 1], &state.catalog);
        assert_eq!(QueueState::from_decisions(&whole.decisions), snapshots[n + 1]);
    }
    let full = replay_bytes(&bytes, &state.catalog);
    let live = state.queue.read().unwrap().clone();
    assert_eq!(QueueState::from_decisions(&full.decisions), live);

    let lines: Vec<serde_json::Value> = bytes
        .split(|b| *b == b'\n')
        .filter(|l| !l.is_empty())
        .map(|l| serde_json::from_slice(l).unwrap())
        .collect();
    let expected = oracle_resolutions(&lines);
    assert_eq!(state_as_map(&live), expected);

    let exported = export_alignments(&state.catalog, &live);
    let titles: HashMap<Qid, &str> = entities.iter().map(|e| (e.qid, e.title.as_str())).collect();
    let expected_export: Vec<(String, String)> = expected
        .iter()
        .filter_map(|(c, q)| q.clone().map(|q| (c.clone(), q)))
        .collect();
    let got_export: Vec<(String, String)> = exported
        .iter()
        .map(|r| (r.cui.to_string(), r.qid.to_string()))
        .collect();
    assert_eq!(got_export, expected_export);
    assert!(!exported.is_empty());
    for r in &exported {
        assert_eq!(r.wiki_title, titles[&r.qid]);
    }

    // a reopened log keeps appending after the last line
    drop(state);
    let reloaded = QueueState::from_decisions(
        &replay_bytes(
            &std::fs::read(&log_path).unwrap(),
            &Catalog::new(&concepts, &entities, &lists).unwrap(),
        )
        .decisions,
    );
    assert_eq!(reloaded, live);
}

// ---------------------------------------------------------------- driver

fn main() -> ExitCode {
    let criteria: [(&str, fn()); 7] = [
        ("metric oracle", metric_oracle),
        ("bm25 correctness", bm25_correctness),
        ("char tf-idf", char_tfidf),
        ("loss and gradient", loss_gradient),
        ("rerank lifts R@1", rerank_lift),
        ("end-to-end determinism", end_to_end_determinism),
        ("service crash safety", service_crash_safety),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(()) => println!("PASS {name} ({secs:.2}s)"),
            Err(e) => {
                failed += 1;
                let msg = e
                    .downcast_ref::<String>()
                    .map(String::as_str)
                    .or_else(|| e.downcast_ref::<&str>().copied())
                    .unwrap_or("panic");
                println!("FAIL {name} ({secs:.2}s): {msg}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
