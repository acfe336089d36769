use std::collections::{HashMap, HashSet};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};

use anyhow::Context;
use kbalign_core::candgen::{
    build_index, read_candidates, Bm25Params, CandidateList, CandidateRow, CharTfidfIndex, Field, InvertedIndex,
    DEFAULT_K,
};
use kbalign_core::corpus::{
    build_alignment_dataset, extract_wikidata_entities, read_alignments, read_concepts, read_entities,
    write_jsonl_file, AlignmentRecord, Concept, Cui, DatasetOptions, LangTag, Qid, WikiEntity, DEFAULT_RATIOS,
};
use kbalign_core::eval::{evaluate_run, RunResult, DEFAULT_KS};
use kbalign_core::pipeline::{build_all_pairs, generate_candidates, rerank_all, CandidateSource};
use kbalign_core::rerank::{
    export_pairs, import_scores, read_pairs, train_scorer, training_groups, ScorerModel, TrainOptions,
};
use tracing::{info, warn};

use crate::config::FileConfig;
use crate::{
    usage, AlignAllArgs, CandidatesArgs, Command, DatasetArgs, EvalArgs, ExtractArgs, Failure, IndexArgs, IngestArgs,
    MethodArg, PairsArgs, QueryArgs, RerankArgs, ServeArgs, TrainArgs,
};

type Outcome = Result<(), Failure>;

pub fn run(command: Command, cfg: &FileConfig, seed: u64) -> Outcome {
    match command {
        Command::Ingest(a) => ingest(a),
        Command::ExtractWikidata(a) => extract(a, cfg),
        Command::BuildDataset(a) => build_dataset(a, cfg, seed),
        Command::BuildIndex(a) => index(a, cfg),
        Command::Candidates(a) => candidates(a, cfg),
        Command::Pairs(a) => pairs(a, cfg),
        Command::Train(a) => train(a, cfg, seed),
        Command::Rerank(a) => rerank(a, cfg),
        Command::Eval(a) => eval(a, cfg),
        Command::AlignAll(a) => align_all(a, cfg),
        Command::Serve(a) => serve(a, cfg),
    }
}

/// Flag, else config value, else a usage error naming the flag.
fn required(flag: Option<PathBuf>, cfg: &Option<PathBuf>, name: &str) -> Result<PathBuf, Failure> {
    flag.or_else(|| cfg.clone())
        .ok_or_else(|| usage(format!("--{name} is required (or set it in the config file)")))
}

/// Like [`required`], and the file must exist.
fn input(flag: Option<PathBuf>, cfg: &Option<PathBuf>, name: &str) -> Result<PathBuf, Failure> {
    let path = required(flag, cfg, name)?;
    check_exists(&path)?;
    Ok(path)
}

fn optional_input(flag: Option<PathBuf>, cfg: &Option<PathBuf>) -> Result<Option<PathBuf>, Failure> {
    let path = flag.or_else(|| cfg.clone());
    if let Some(p) = &path {
        check_exists(p)?;
    }
    Ok(path)
}

fn check_exists(path: &Path) -> Outcome {
    if path.exists() {
        Ok(())
    } else {
        Err(usage(format!("input {} does not exist", path.display())))
    }
}

fn ensure_parent(path: &Path) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}

fn write_out<T: serde::Serialize>(path: &Path, items: impl IntoIterator<Item = T>) -> anyhow::Result<()> {
    ensure_parent(path)?;
    write_jsonl_file(path, items).with_context(|| format!("writing {}", path.display()))
}

fn load_concepts(path: &Path) -> anyhow::Result<Vec<Concept>> {
    read_concepts(path).with_context(|| format!("reading {}", path.display()))
}

fn load_entities(path: &Path) -> anyhow::Result<Vec<WikiEntity>> {
    read_entities(path).with_context(|| format!("reading {}", path.display()))
}

fn load_alignments(path: &Path) -> anyhow::Result<Vec<AlignmentRecord>> {
    read_alignments(path).with_context(|| format!("reading {}", path.display()))
}

fn load_candidates(path: &Path) -> anyhow::Result<Vec<CandidateList>> {
    read_candidates(path).with_context(|| format!("reading {}", path.display()))
}

fn parse_fields(names: &[String], cfg: &Option<Vec<String>>) -> Result<Vec<Field>, Failure> {
    let names: Vec<String> = if names.is_empty() {
        cfg.clone().unwrap_or_default()
    } else {
        names.to_vec()
    };
    if names.is_empty() {
        return Ok(Field::ALL.to_vec());
    }
    names
        .iter()
        .map(|n| n.parse::<Field>().map_err(|_| usage(format!("unknown field {n:?}"))))
        .collect()
}

fn positive_k(k: usize) -> Result<usize, Failure> {
    if k == 0 {
        Err(usage("k must be at least 1"))
    } else {
        Ok(k)
    }
}

/// Queries plus the gold link of each, when the source provides one.
struct Queries {
    concepts: Vec<Concept>,
    gold: Option<HashMap<Cui, Qid>>,
}

fn load_queries(q: QueryArgs, cfg: &FileConfig) -> Result<Queries, Failure> {
    if let Some(path) = optional_input(q.split, &None)? {
        let records = load_alignments(&path)?;
        return Ok(Queries {
            concepts: records.iter().map(AlignmentRecord::concept).collect(),
            gold: Some(records.iter().map(|r| (r.cui.clone(), r.qid)).collect()),
        });
    }
    let path = match q.concepts.or_else(|| cfg.paths.concepts.clone()) {
        Some(p) => p,
        None => match &cfg.paths.split {
            Some(split) => {
                return load_queries(
                    QueryArgs {
                        concepts: None,
                        split: Some(split.clone()),
                    },
                    cfg,
                )
            }
            None => return Err(usage("--concepts or --split is required")),
        },
    };
    check_exists(&path)?;
    Ok(Queries {
        concepts: load_concepts(&path)?,
        gold: None,
    })
}

fn ingest(a: IngestArgs) -> Outcome {
    if a.concepts.is_none() && a.entities.is_none() {
        return Err(usage("give --concepts, --entities or both"));
    }
    if let Some(p) = a.concepts {
        check_exists(&p)?;
        let concepts = load_concepts(&p)?;
        write_out(&a.out_dir.join("concepts.jsonl"), &concepts)?;
        info!(count = concepts.len(), "concepts");
    }
    if let Some(p) = a.entities {
        check_exists(&p)?;
        let entities = load_entities(&p)?;
        let linked = entities.iter().filter(|e| e.umls_cui.is_some()).count();
        write_out(&a.out_dir.join("entities.jsonl"), &entities)?;
        info!(count = entities.len(), linked, "entities");
    }
    Ok(())
}

fn extract(a: ExtractArgs, cfg: &FileConfig) -> Outcome {
    let dump = required(a.dump, &cfg.paths.dump, "dump")?;
    let out = required(a.out, &cfg.paths.entities, "out")?;
    let languages: Vec<LangTag> = if a.languages.is_empty() {
        LangTag::all_supported().collect()
    } else {
        a.languages
            .iter()
            .map(|l| {
                l.parse::<LangTag>()
                    .map_err(|_| usage(format!("unsupported language {l:?}")))
            })
            .collect::<Result<_, _>>()?
    };
    let reader: Box<dyn BufRead> = if dump.as_os_str() == "-" {
        Box::new(BufReader::new(std::io::stdin()))
    } else {
        check_exists(&dump)?;
        Box::new(BufReader::new(
            std::fs::File::open(&dump).with_context(|| format!("opening {}", dump.display()))?,
        ))
    };
    ensure_parent(&out)?;
    let mut w = BufWriter::new(std::fs::File::create(&out).with_context(|| format!("creating {}", out.display()))?);
    let mut it = extract_wikidata_entities(reader, languages, &a.cui_property);
    for entity in it.by_ref() {
        let entity = entity.context("reading dump")?;
        serde_json::to_writer(&mut w, &entity)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    let s = it.stats();
    info!(
        records = s.records,
        emitted = s.emitted,
        without_sitelink = s.without_sitelink,
        malformed = s.malformed,
        invalid_cui = s.invalid_cui,
        "extraction finished"
    );
    Ok(())
}

fn build_dataset(a: DatasetArgs, cfg: &FileConfig, seed: u64) -> Outcome {
    let concepts = load_concepts(&input(a.concepts, &cfg.paths.concepts, "concepts")?)?;
    let entities = load_entities(&input(a.entities, &cfg.paths.entities, "entities")?)?;
    let out_dir = required(a.out_dir, &cfg.paths.dataset_dir, "out-dir")?;
    let ratios = match a.ratios.or_else(|| cfg.dataset.ratios.map(|r| r.to_vec())) {
        Some(r) => (r[0], r[1], r[2]),
        None => DEFAULT_RATIOS,
    };
    let (r1, r2, r3) = ratios;
    if [r1, r2, r3].iter().any(|r| !(*r >= 0.0)) || ((r1 + r2 + r3) - 1.0).abs() > 1e-9 {
        return Err(usage("ratios must be non-negative and sum to 1"));
    }
    let restrict_to = match optional_input(a.restrict_to, &cfg.dataset.restrict_to)? {
        Some(p) => {
            let text = std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
            let cuis = text
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .map(|l| {
                    l.parse::<Cui>()
                        .with_context(|| format!("{}: bad cui {l:?}", p.display()))
                })
                .collect::<anyhow::Result<HashSet<_>>>()?;
            Some(cuis)
        }
        None => None,
    };
    let options = DatasetOptions {
        ratios,
        seed,
        restrict_to,
    };
    let ds = build_alignment_dataset(&concepts, &entities, &options)?;
    write_out(&out_dir.join("alignments.jsonl"), ds.all_records())?;
    for split in ds.splits() {
        write_out(&out_dir.join(split.name.file_name()), &split.records)?;
    }
    write_out(&out_dir.join("unaligned.jsonl"), &ds.unaligned)?;
    info!(
        train = ds.train.records.len(),
        valid = ds.valid.records.len(),
        test = ds.test.records.len(),
        unaligned = ds.unaligned.len(),
        conflicts = ds.conflicts,
        "dataset written"
    );
    Ok(())
}

fn index(a: IndexArgs, cfg: &FileConfig) -> Outcome {
    let entities = load_entities(&input(a.entities, &cfg.paths.entities, "entities")?)?;
    let out = required(a.out, &cfg.paths.index, "out")?;
    let fields = parse_fields(&a.fields, &cfg.fields)?;
    let index = build_index(&entities, &fields)?;
    ensure_parent(&out)?;
    index.save(&out).with_context(|| format!("writing {}", out.display()))?;
    info!(docs = index.n_docs(), "index written");
    Ok(())
}

fn bm25_params(k1: Option<f64>, b: Option<f64>, cfg: &FileConfig) -> Result<Bm25Params, Failure> {
    let d = Bm25Params::default();
    let p = Bm25Params {
        k1: k1.or(cfg.bm25.k1).unwrap_or(d.k1),
        b: b.or(cfg.bm25.b).unwrap_or(d.b),
    };
    if !(p.k1 >= 0.0 && (0.0..=1.0).contains(&p.b)) {
        return Err(usage("bm25 needs k1 >= 0 and b in [0, 1]"));
    }
    Ok(p)
}

fn candidates(a: CandidatesArgs, cfg: &FileConfig) -> Outcome {
    let k = positive_k(a.k.or(cfg.k).unwrap_or(DEFAULT_K))?;
    let out = required(a.out, &cfg.paths.candidates, "out")?;
    let queries = load_queries(a.queries, cfg)?;
    let lists = match a.method {
        MethodArg::Bm25 => {
            let params = bm25_params(a.k1, a.b, cfg)?;
            let index = match optional_input(a.index, &cfg.paths.index)? {
                Some(p) => InvertedIndex::load(&p).with_context(|| format!("reading {}", p.display()))?,
                None => {
                    let entities = load_entities(&input(a.entities, &cfg.paths.entities, "entities")?)?;
                    build_index(&entities, &parse_fields(&a.fields, &cfg.fields)?)?
                }
            };
            generate_candidates(&CandidateSource::Bm25 { index: &index, params }, &queries.concepts, k)?
        }
        MethodArg::CharTfidf => {
            let n_min = a.ngram_min.or(cfg.ngram.min).unwrap_or(1);
            let n_max = a.ngram_max.or(cfg.ngram.max).unwrap_or(5);
            if n_min == 0 || n_min > n_max {
                return Err(usage("n-gram bounds need 1 <= min <= max"));
            }
            let entities = load_entities(&input(a.entities, &cfg.paths.entities, "entities")?)?;
            let index = CharTfidfIndex::build(&entities, n_min, n_max)?;
            generate_candidates(&CandidateSource::CharTfidf(&index), &queries.concepts, k)?
        }
    };
    write_out(&out, lists.iter().map(CandidateList::to_row))?;
    info!(queries = lists.len(), k, "candidates written");
    Ok(())
}

fn pairs(a: PairsArgs, cfg: &FileConfig) -> Outcome {
    let lists = load_candidates(&input(a.candidates, &cfg.paths.candidates, "candidates")?)?;
    let queries = load_queries(a.queries, cfg)?;
    let entities = load_entities(&input(a.entities, &cfg.paths.entities, "entities")?)?;
    let out = required(a.out, &cfg.paths.pairs, "out")?;
    let gold = match optional_input(a.gold, &cfg.paths.gold)? {
        Some(p) => Some(load_alignments(&p)?.into_iter().map(|r| (r.cui, r.qid)).collect()),
        None => queries.gold,
    };
    let pairs = build_all_pairs(&queries.concepts, &lists, &entities, gold.as_ref())?;
    ensure_parent(&out)?;
    export_pairs(&pairs, &out).with_context(|| format!("writing {}", out.display()))?;
    info!(
        pairs = pairs.len(),
        lists = lists.len(),
        labelled = gold.is_some(),
        "pairs written"
    );
    Ok(())
}

fn train(a: TrainArgs, cfg: &FileConfig, seed: u64) -> Outcome {
    let path = input(a.pairs, &cfg.paths.pairs, "pairs")?;
    let out = required(a.out, &cfg.paths.model, "out")?;
    let d = TrainOptions::default();
    let options = TrainOptions {
        epochs: a.epochs.or(cfg.train.epochs).unwrap_or(d.epochs),
        learning_rate: a.learning_rate.or(cfg.train.learning_rate).unwrap_or(d.learning_rate),
        seed,
        negatives_per_group: a.negatives_per_group.or(cfg.train.negatives_per_group),
    };
    if options.epochs == 0 || !(options.learning_rate > 0.0) {
        return Err(usage("epochs and learning rate must be positive"));
    }
    let pairs = read_pairs(&path).with_context(|| format!("reading {}", path.display()))?;
    if pairs.iter().all(|p| p.label.is_none()) {
        return Err(Failure::Data(anyhow::anyhow!(
            "{} has no labelled pairs",
            path.display()
        )));
    }
    let (groups, skipped) = training_groups(&pairs, &options)?;
    if skipped > 0 {
        warn!(
            skipped,
            "concepts without a retrieved gold entity are left out of training"
        );
    }
    let model = train_scorer(&groups, &options)?;
    ensure_parent(&out)?;
    model.save(&out).with_context(|| format!("writing {}", out.display()))?;
    info!(
        groups = groups.len(),
        final_loss = model.training_meta.final_loss,
        "model written"
    );
    Ok(())
}

fn rerank(a: RerankArgs, cfg: &FileConfig) -> Outcome {
    let lists = load_candidates(&input(a.candidates, &cfg.paths.candidates, "candidates")?)?;
    let pairs_path = input(a.pairs, &cfg.paths.pairs, "pairs")?;
    let pairs = read_pairs(&pairs_path).with_context(|| format!("reading {}", pairs_path.display()))?;
    let out = required(a.out, &cfg.paths.reranked, "out")?;
    let reranked = match (a.model, a.scores) {
        (Some(m), None) => {
            check_exists(&m)?;
            let model = ScorerModel::load(&m).with_context(|| format!("reading {}", m.display()))?;
            rerank_all(&model, &lists, &pairs)?
        }
        (None, Some(s)) => {
            check_exists(&s)?;
            let scores = import_scores(&s).with_context(|| format!("reading {}", s.display()))?;
            rerank_all(&scores, &lists, &pairs)?
        }
        _ => match (&cfg.paths.model, &cfg.paths.scores) {
            (Some(m), _) => {
                check_exists(m)?;
                rerank_all(&ScorerModel::load(m)?, &lists, &pairs)?
            }
            (None, Some(s)) => {
                check_exists(s)?;
                rerank_all(&import_scores(s)?, &lists, &pairs)?
            }
            (None, None) => return Err(usage("--model or --scores is required")),
        },
    };
    write_out(&out, reranked.iter().map(CandidateList::to_row))?;
    info!(lists = reranked.len(), "reranked candidates written");
    Ok(())
}

fn eval(a: EvalArgs, cfg: &FileConfig) -> Outcome {
    let gold = load_alignments(&input(a.gold, &cfg.paths.gold, "gold")?)?;
    let out_dir = required(a.out_dir, &cfg.paths.metrics_dir, "out-dir")?;
    let runs = if a.runs.is_empty() {
        [&cfg.paths.candidates, &cfg.paths.reranked]
            .into_iter()
            .flatten()
            .cloned()
            .collect()
    } else {
        a.runs
    };
    if runs.is_empty() {
        return Err(usage("at least one --run is required"));
    }
    let ks = if a.ks.is_empty() { DEFAULT_KS.to_vec() } else { a.ks };
    let mut results = Vec::new();
    for path in &runs {
        check_exists(path)?;
        let lists = load_candidates(path)?;
        let method = lists.first().map_or("empty", |l| l.method.name());
        results.push(RunResult::from_candidates(method, &lists, &gold)?);
    }
    let metrics = match evaluate_run(&results, &ks, &out_dir) {
        Err(e @ kbalign_core::Error::InvalidArgument(_)) => return Err(usage(e.to_string())),
        other => other?,
    };
    for m in &metrics {
        let r1 = m.recall_at.values().next().copied().unwrap_or(0.0);
        info!(method = %m.method, queries = m.n_queries, retrieved = m.n_gold_retrieved, first_k_recall = r1, "evaluated");
    }
    Ok(())
}

fn align_all(a: AlignAllArgs, cfg: &FileConfig) -> Outcome {
    let k = positive_k(a.k)?;
    let pool = positive_k(a.pool.or(cfg.k).unwrap_or(DEFAULT_K))?.max(k);
    let concepts = load_concepts(&input(a.concepts, &cfg.paths.concepts, "concepts")?)?;
    let entities = load_entities(&input(a.entities, &cfg.paths.entities, "entities")?)?;
    let out = required(a.out, &cfg.paths.align_all, "out")?;
    let index = match optional_input(a.index, &cfg.paths.index)? {
        Some(p) => InvertedIndex::load(&p).with_context(|| format!("reading {}", p.display()))?,
        None => build_index(&entities, &parse_fields(&[], &cfg.fields)?)?,
    };
    let params = bm25_params(None, None, cfg)?;
    let mut lists = generate_candidates(&CandidateSource::Bm25 { index: &index, params }, &concepts, pool)?;
    if let Some(m) = optional_input(a.model, &cfg.paths.model)? {
        let model = ScorerModel::load(&m).with_context(|| format!("reading {}", m.display()))?;
        let pairs = build_all_pairs(&concepts, &lists, &entities, None)?;
        lists = rerank_all(&model, &lists, &pairs)?;
    }
    let titles: HashMap<Qid, &str> = entities.iter().map(|e| (e.qid, e.title.as_str())).collect();
    let rows = lists.into_iter().map(|mut list| {
        list.candidates.truncate(k);
        let mut row: CandidateRow = list.to_row();
        for c in &mut row.candidates {
            c.title = titles.get(&c.qid).map(|t| t.to_string());
        }
        row
    });
    write_out(&out, rows)?;
    info!(concepts = concepts.len(), k, "ranked pool written");
    Ok(())
}

fn serve(a: ServeArgs, cfg: &FileConfig) -> Outcome {
    let host = a
        .host
        .or_else(|| cfg.serve.host.clone())
        .unwrap_or_else(|| "127.0.0.1".into());
    let ip: IpAddr = host.parse().map_err(|_| usage(format!("bad host {host:?}")))?;
    let port = a.port.or(cfg.serve.port).unwrap_or(kbalign_service::DEFAULT_PORT);
    let config = kbalign_service::ServiceConfig {
        candidates: input(a.candidates, &cfg.paths.reranked, "candidates")?,
        concepts: input(a.concepts, &cfg.paths.concepts, "concepts")?,
        entities: input(a.entities, &cfg.paths.entities, "entities")?,
        decisions: required(a.decisions, &cfg.paths.decisions, "decisions")?,
        metrics: optional_input(a.metrics, &None)?,
        static_dir: optional_input(a.static_dir, &cfg.paths.static_dir)?,
        addr: SocketAddr::new(ip, port),
    };
    ensure_parent(&config.decisions)?;
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(kbalign_service::serve(config))?;
    Ok(())
}
