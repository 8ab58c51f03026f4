//! End-to-end orchestration with per-stage memoization.
//!
//! Each stage writes its outputs into the output directory together with a
//! hash of everything that determines them (its parameters and the hashes
//! of the stages it reads). A stage whose stored hash matches and whose
//! outputs all exist is skipped.

use std::collections::{BTreeMap, BTreeSet};
use std::error::Error as StdError;
use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classify::{balance, evaluate_rows, split_dataset, train_logreg, ConfusionMatrix, LogRegConfig, LogRegModel};
use crate::docembed::{preprocess, read_documents, tag_documents, train_dbow, train_dmm, write_documents, DocConfig, DocModel};
use crate::features::{
    assemble_table, author_profiles, cosine, load_features, nearest_neighbors, nearest_tags, read_profiles, save_features,
    similarity_correlations, write_profiles, FeatureInputs, FeatureMode, FeatureRow, SimilarityProfile,
};
use crate::hetgraph::{build_graph, project_author_degrees, HetGraph, NodeRef, NodeType};
use crate::project::pca_project_2d;
use crate::sampling::{forest_fire_sample, metapath_walks, ForestFireConfig, MetapathSchema, WalkConfig};
use crate::seed;
use crate::sgns::{load_embeddings, save_embeddings, train_skipgram, SamplingMode, SgnsConfig};
use crate::synth::{read_communities, read_labels};

type BoxError = Box<dyn StdError + Send + Sync>;

/// A failed stage and its cause.
#[derive(Debug)]
pub struct PipelineError {
    pub stage: String,
    pub source: BoxError,
}

impl std::fmt::Display for PipelineError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{}] {}", self.stage, self.source)
    }
}

impl StdError for PipelineError {
    fn source(&self) -> Option<&(dyn StdError + 'static)> {
        Some(self.source.as_ref())
    }
}

/// Flat pipeline configuration. Relative paths resolve against the config
/// file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Graph records (edge or submission lines).
    pub input: PathBuf,
    /// `author,label` CSV.
    pub labels: PathBuf,
    /// Optional `subreddit,community` CSV used to color the projection.
    pub communities: Option<PathBuf>,
    pub out_dir: PathBuf,
    /// Target subreddit token, e.g. `r:c0s0`.
    pub target: String,
    pub seed: u64,
    pub workers: usize,

    pub fire: bool,
    pub fire_burn_prob: f64,
    pub fire_target_size: usize,
    pub fire_max_restarts: usize,

    pub metapath: String,
    pub walks_per_start: usize,
    pub walk_length: usize,
    pub min_emit_length: usize,

    pub graph_dim: usize,
    pub graph_window: usize,
    pub graph_negatives: usize,
    pub graph_epochs: usize,
    pub graph_min_count: u64,
    pub graph_lr: f64,
    pub sampling_mode: String,

    pub doc_dim: usize,
    pub doc_window: usize,
    pub doc_negatives: usize,
    pub doc_min_count: u64,
    pub doc_epochs: usize,
    pub doc_lr: f64,
    pub infer_epochs: usize,

    pub include_stds: bool,
    pub test_fraction: f64,
    pub train_ratio: f64,
    /// Negatives per positive in the test set; 0 keeps the natural mix.
    pub test_ratio: f64,
    pub clf_lr: f64,
    pub clf_l2: f64,
    pub clf_max_iters: usize,
    pub clf_tol: f64,

    pub nn_k: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            input: "records.jsonl".into(),
            labels: "labels.csv".into(),
            communities: None,
            out_dir: "out".into(),
            target: "r:c0s0".into(),
            seed: 1,
            workers: 1,
            fire: false,
            fire_burn_prob: 0.7,
            fire_target_size: 10_000,
            fire_max_restarts: 100,
            metapath: "r,s,a,s,r".into(),
            walks_per_start: 200,
            walk_length: 50,
            min_emit_length: 2,
            graph_dim: 128,
            graph_window: 7,
            graph_negatives: 5,
            graph_epochs: 10,
            graph_min_count: 5,
            graph_lr: 0.025,
            sampling_mode: "mp2v".into(),
            doc_dim: 50,
            doc_window: 10,
            doc_negatives: 5,
            doc_min_count: 2,
            doc_epochs: 20,
            doc_lr: 0.025,
            infer_epochs: 50,
            include_stds: false,
            test_fraction: 0.3,
            train_ratio: 1.0,
            test_ratio: 1.0,
            clf_lr: 0.1,
            clf_l2: 1e-4,
            clf_max_iters: 5000,
            clf_tol: 1e-6,
            nn_k: 10,
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<PipelineConfig, toml::de::Error> {
        toml::from_str(text)
    }

    /// Loads a config file and resolves its relative paths.
    pub fn load(path: &Path) -> Result<PipelineConfig, PipelineError> {
        let text = fs::read_to_string(path).map_err(|e| stage_err("config", e))?;
        let mut cfg = PipelineConfig::from_toml(&text).map_err(|e| stage_err("config", e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve(base);
        Ok(cfg)
    }

    pub fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.input);
        fix(&mut self.labels);
        fix(&mut self.out_dir);
        if let Some(c) = &mut self.communities {
            fix(c);
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn walk_config(&self) -> WalkConfig {
        WalkConfig {
            walks_per_start: self.walks_per_start,
            walk_length: self.walk_length,
            min_emit_length: self.min_emit_length,
            rng_seed: seed::derive(self.seed, &[1]),
            workers: self.workers,
        }
    }

    pub fn sgns_config(&self) -> Result<SgnsConfig, String> {
        Ok(SgnsConfig {
            dim: self.graph_dim,
            window: self.graph_window,
            negatives: self.graph_negatives,
            epochs: self.graph_epochs,
            initial_lr: self.graph_lr,
            min_count: self.graph_min_count,
            mode: self.sampling_mode.parse::<SamplingMode>()?,
            rng_seed: seed::derive(self.seed, &[2]),
            workers: self.workers,
            ..SgnsConfig::default()
        })
    }

    pub fn doc_config(&self) -> DocConfig {
        DocConfig {
            dim: self.doc_dim,
            window: self.doc_window,
            negatives: self.doc_negatives,
            min_count: self.doc_min_count,
            epochs: self.doc_epochs,
            initial_lr: self.doc_lr,
            infer_epochs: self.infer_epochs,
            rng_seed: seed::derive(self.seed, &[3]),
            workers: self.workers,
            ..DocConfig::default()
        }
    }

    pub fn logreg_config(&self) -> LogRegConfig {
        LogRegConfig {
            lr: self.clf_lr,
            l2: self.clf_l2,
            max_iters: self.clf_max_iters,
            tol: self.clf_tol,
            rng_seed: self.seed,
        }
    }
}

/// File names inside the output directory.
pub mod files {
    pub const GRAPH: &str = "graph.bin";
    pub const DOCS: &str = "docs.jsonl";
    pub const INGEST: &str = "ingest.txt";
    pub const SAMPLE: &str = "sample.bin";
    pub const WALKS: &str = "walks.txt";
    pub const GRAPH_EMB: &str = "graph_emb.txt";
    pub const DBOW: &str = "dbow";
    pub const DMM: &str = "dmm";
    pub const PROFILES: &str = "profiles.csv";
    pub const GRAPH_SIM: &str = "graph_sim.csv";
    pub const REPORT: &str = "report.txt";
    pub const PROJECTION: &str = "projection.csv";
    pub const STAGE_DIR: &str = ".stages";

    pub fn features(mode: super::FeatureMode) -> String {
        format!("features_{mode}.csv")
    }

    pub fn train(mode: super::FeatureMode) -> String {
        format!("train_{mode}.csv")
    }

    pub fn test(mode: super::FeatureMode) -> String {
        format!("test_{mode}.csv")
    }

    pub fn model(mode: super::FeatureMode) -> String {
        format!("model_{mode}.txt")
    }

    pub fn metrics(mode: super::FeatureMode) -> String {
        format!("metrics_{mode}.txt")
    }
}

#[derive(Debug, Clone, Default)]
pub struct PipelineOutcome {
    pub executed: Vec<String>,
    pub skipped: Vec<String>,
    pub metrics: BTreeMap<FeatureMode, ConfusionMatrix>,
    /// Majority-class accuracy on the shared test set.
    pub baseline: f64,
    pub report: PathBuf,
}

fn stage_err<E: Into<BoxError>>(stage: &str, e: E) -> PipelineError {
    PipelineError {
        stage: stage.to_string(),
        source: e.into(),
    }
}

fn sha_hex(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

struct Runner<'a> {
    cfg: &'a PipelineConfig,
    out: PathBuf,
    outcome: PipelineOutcome,
}

impl Runner<'_> {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    /// Runs `body` unless the stage's stored hash equals `key` and all
    /// `outputs` exist. Returns the key for downstream stages.
    fn stage<F>(&mut self, name: &str, key: String, outputs: &[String], body: F) -> Result<String, PipelineError>
    where
        F: FnOnce(&Self) -> Result<(), BoxError>,
    {
        let key = sha_hex(&[name.as_bytes(), key.as_bytes()]);
        let marker = self.out.join(files::STAGE_DIR).join(format!("{name}.hash"));
        let fresh = fs::read_to_string(&marker).ok().as_deref() == Some(key.as_str())
            && outputs.iter().all(|o| self.path(o).exists());
        if fresh {
            log::info!("stage {name}: up to date, skipped");
            self.outcome.skipped.push(name.to_string());
            return Ok(key);
        }
        log::info!("stage {name}: running");
        let _ = fs::remove_file(&marker);
        body(self).map_err(|e| stage_err(name, e))?;
        fs::create_dir_all(marker.parent().unwrap()).map_err(|e| stage_err(name, e))?;
        fs::write(&marker, &key).map_err(|e| stage_err(name, e))?;
        self.outcome.executed.push(name.to_string());
        Ok(key)
    }
}

fn load_snapshot(path: &Path) -> Result<HetGraph, BoxError> {
    Ok(HetGraph::read_snapshot(BufReader::new(File::open(path)?))?)
}

fn save_snapshot(graph: &HetGraph, path: &Path) -> Result<(), BoxError> {
    let mut w = BufWriter::new(File::create(path)?);
    graph.write_snapshot(&mut w)?;
    w.flush()?;
    Ok(())
}

/// Tokenized documents grouped by author.
pub fn docs_by_author(path: &Path) -> Result<BTreeMap<String, Vec<Vec<String>>>, BoxError> {
    let mut out: BTreeMap<String, Vec<Vec<String>>> = BTreeMap::new();
    for d in read_documents(path)? {
        out.entry(d.author).or_default().push(preprocess(&d.text));
    }
    Ok(out)
}

/// Authors present in every mode's feature table.
fn common_authors(tables: &BTreeMap<FeatureMode, Vec<FeatureRow>>) -> BTreeSet<String> {
    let mut sets = tables.values().map(|rows| rows.iter().map(|r| r.author.clone()).collect::<BTreeSet<_>>());
    let first = sets.next().unwrap_or_default();
    sets.fold(first, |acc, s| acc.intersection(&s).cloned().collect())
}

/// Runs every stage, skipping those whose inputs and parameters are unchanged.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineOutcome, PipelineError> {
    let out = cfg.out_dir.clone();
    fs::create_dir_all(&out).map_err(|e| stage_err("setup", e))?;
    let mut r = Runner {
        cfg,
        out,
        outcome: PipelineOutcome::default(),
    };
    let schema: MetapathSchema = cfg.metapath.parse().map_err(|e| stage_err("config", e))?;
    let sgns_cfg = cfg.sgns_config().map_err(|e| stage_err("config", e))?;
    let doc_cfg = cfg.doc_config();

    // ingest
    let input_hash = {
        let bytes = fs::read(&cfg.input).map_err(|e| stage_err("ingest", format!("{}: {e}", cfg.input.display())))?;
        sha_hex(&[&bytes])
    };
    let k_ingest = r.stage(
        "ingest",
        input_hash,
        &[files::GRAPH.into(), files::DOCS.into(), files::INGEST.into()],
        |r| {
            let loaded = build_graph(BufReader::new(File::open(&r.cfg.input)?))?;
            save_snapshot(&loaded.graph, &r.path(files::GRAPH))?;
            write_documents(&r.path(files::DOCS), &loaded.documents)?;
            fs::write(
                r.path(files::INGEST),
                format!(
                    "nodes={}\nedges={}\ndocuments={}\nskipped={}\ndeleted={}\n",
                    loaded.graph.node_count(),
                    loaded.graph.edge_count(),
                    loaded.documents.len(),
                    loaded.skipped,
                    loaded.deleted
                ),
            )?;
            Ok(())
        },
    )?;

    // optional forest fire; walks read whichever graph this leaves
    let (graph_file, k_graph) = if cfg.fire {
        let key = format!(
            "{k_ingest}|{}|{}|{}|{}|{}",
            cfg.target, cfg.fire_burn_prob, cfg.fire_target_size, cfg.fire_max_restarts, cfg.seed
        );
        let k = r.stage("fire", key, &[files::SAMPLE.into()], |r| {
            let g = load_snapshot(&r.path(files::GRAPH))?;
            let start = NodeRef::parse_token(&r.cfg.target).ok_or_else(|| format!("bad target token {:?}", r.cfg.target))?;
            let sample = forest_fire_sample(
                &g,
                &ForestFireConfig {
                    burn_prob: r.cfg.fire_burn_prob,
                    target_size: r.cfg.fire_target_size,
                    max_restarts: r.cfg.fire_max_restarts,
                    seed_nodes: vec![start],
                    rng_seed: seed::derive(r.cfg.seed, &[0]),
                },
            )?;
            save_snapshot(&g.induced(&sample.burned), &r.path(files::SAMPLE))
        })?;
        (files::SAMPLE, k)
    } else {
        (files::GRAPH, k_ingest.clone())
    };

    let wc = cfg.walk_config();
    let k_walks = r.stage(
        "walks",
        format!("{k_graph}|{schema}|{}|{}|{}|{}", wc.walks_per_start, wc.walk_length, wc.min_emit_length, wc.rng_seed),
        &[files::WALKS.into()],
        |r| {
            let g = load_snapshot(&r.path(graph_file))?;
            let corpus = metapath_walks(&g, &schema, &wc, &r.path(files::WALKS))?;
            log::info!("walks: {} emitted, {} dropped", corpus.stats.emitted, corpus.stats.dropped);
            Ok(())
        },
    )?;

    let k_emb = r.stage("embed_graph", format!("{k_walks}|{sgns_cfg:?}"), &[files::GRAPH_EMB.into()], |r| {
        let trained = train_skipgram(&r.path(files::WALKS), &sgns_cfg)?;
        save_embeddings(&r.path(files::GRAPH_EMB), &trained.vocab, &trained.matrix)?;
        Ok(())
    })?;

    let k_docs = r.stage(
        "embed_docs",
        format!("{k_ingest}|{doc_cfg:?}"),
        &[format!("{}/model.txt", files::DBOW), format!("{}/model.txt", files::DMM)],
        |r| {
            let (docs, excluded) = tag_documents(&read_documents(&r.path(files::DOCS))?);
            log::info!("embed_docs: {} documents, {excluded} empty excluded", docs.len());
            train_dbow(&docs, &doc_cfg)?.save(&r.path(files::DBOW))?;
            train_dmm(&docs, &doc_cfg)?.save(&r.path(files::DMM))?;
            Ok(())
        },
    )?;

    let labels_hash = {
        let bytes = fs::read(&cfg.labels).map_err(|e| stage_err("profiles", format!("{}: {e}", cfg.labels.display())))?;
        sha_hex(&[&bytes])
    };
    let k_prof = r.stage(
        "profiles",
        format!("{k_docs}|{labels_hash}|{}|{}", cfg.target, cfg.seed),
        &[files::PROFILES.into()],
        |r| {
            let labels = read_labels(&r.cfg.labels)?;
            let by_author: BTreeMap<String, Vec<Vec<String>>> = docs_by_author(&r.path(files::DOCS))?
                .into_iter()
                .filter(|(a, _)| labels.contains_key(a))
                .collect();
            let dbow = DocModel::load(&r.path(files::DBOW))?;
            let dmm = DocModel::load(&r.path(files::DMM))?;
            let (profiles, excluded) =
                author_profiles(&dbow, &dmm, &by_author, &r.cfg.target, seed::derive(r.cfg.seed, &[4]), r.cfg.workers)?;
            log::info!("profiles: {} authors, {} without usable documents", profiles.len(), excluded.len());
            write_profiles(File::create(r.path(files::PROFILES))?, &profiles)?;
            Ok(())
        },
    )?;

    let mut feature_files: Vec<String> = FeatureMode::ALL.iter().map(|&m| files::features(m)).collect();
    feature_files.push(files::GRAPH_SIM.into());
    let k_feat = r.stage(
        "features",
        format!("{k_emb}|{k_prof}|{labels_hash}|{}|{}", cfg.include_stds, cfg.target),
        &feature_files,
        |r| {
            let labels = read_labels(&r.cfg.labels)?;
            let (vocab, emb) = load_embeddings(&r.path(files::GRAPH_EMB))?;
            let profiles: BTreeMap<String, SimilarityProfile> = read_profiles(File::open(r.path(files::PROFILES))?)?
                .into_iter()
                .map(|p| (p.author.name.clone(), p))
                .collect();
            let inputs = FeatureInputs {
                vocab: &vocab,
                emb: &emb,
                profiles: &profiles,
                labels: &labels,
                include_stds: r.cfg.include_stds,
            };
            for mode in FeatureMode::ALL {
                let (rows, dropped) = assemble_table(&inputs, mode);
                log::info!("features {mode}: {} rows, {dropped} dropped", rows.len());
                save_features(&r.path(&files::features(mode)), &rows, r.cfg.include_stds)?;
            }
            // graph-side similarity of each author to the target
            let target = vocab.id(&r.cfg.target);
            let mut w = BufWriter::new(File::create(r.path(files::GRAPH_SIM))?);
            writeln!(w, "author,graph_sim")?;
            if let Some(t) = target {
                for a in labels.keys() {
                    if let Some(id) = vocab.id(&NodeRef::author(a.as_str()).token()) {
                        writeln!(w, "{a},{}", cosine(emb.input(id), emb.input(t))?)?;
                    }
                }
            } else {
                log::warn!("target {} has no graph embedding; graph similarity unavailable", r.cfg.target);
            }
            w.flush()?;
            Ok(())
        },
    )?;

    let mut clf_files = Vec::new();
    for m in FeatureMode::ALL {
        clf_files.extend([files::model(m), files::metrics(m), files::train(m), files::test(m)]);
    }
    let lr_cfg = cfg.logreg_config();
    let k_clf = r.stage(
        "classify",
        format!("{k_feat}|{lr_cfg:?}|{}|{}|{}", cfg.test_fraction, cfg.train_ratio, cfg.test_ratio),
        &clf_files,
        |r| {
            let tables: BTreeMap<FeatureMode, Vec<FeatureRow>> = FeatureMode::ALL
                .iter()
                .map(|&m| load_features(&r.path(&files::features(m))).map(|rows| (m, rows)))
                .collect::<Result<_, _>>()?;
            let common = common_authors(&tables);
            // one split of the shared author set, reused by every mode
            let keys: Vec<FeatureRow> = tables[&FeatureMode::TextOnly]
                .iter()
                .filter(|row| common.contains(&row.author))
                .map(|row| FeatureRow {
                    values: Vec::new(),
                    ..row.clone()
                })
                .collect();
            let (train_keys, test_keys) = split_dataset(&keys, r.cfg.test_fraction, seed::derive(r.cfg.seed, &[5]))?;
            let train_keys = balance(&train_keys, r.cfg.train_ratio, seed::derive(r.cfg.seed, &[6]))?;
            let test_keys = if r.cfg.test_ratio > 0.0 {
                balance(&test_keys, r.cfg.test_ratio, seed::derive(r.cfg.seed, &[7]))?
            } else {
                test_keys
            };
            for (mode, rows) in &tables {
                let by_author: BTreeMap<&str, &FeatureRow> = rows.iter().map(|row| (row.author.as_str(), row)).collect();
                let pick = |keys: &[FeatureRow]| -> Vec<FeatureRow> { keys.iter().map(|k| by_author[k.author.as_str()].clone()).collect() };
                let (train, test) = (pick(&train_keys), pick(&test_keys));
                save_features(&r.path(&files::train(*mode)), &train, r.cfg.include_stds)?;
                save_features(&r.path(&files::test(*mode)), &test, r.cfg.include_stds)?;
                let model = train_logreg(&train, &lr_cfg)?;
                model.save(&r.path(&files::model(*mode)))?;
                let cm = evaluate_rows(&model, &test)?;
                fs::write(r.path(&files::metrics(*mode)), format!("mode={mode}\n{cm}"))?;
            }
            Ok(())
        },
    )?;

    // keyed on content, so moving the data directory does not rerun it
    let communities_hash = match &cfg.communities {
        Some(p) => sha_hex(&[&fs::read(p).map_err(|e| stage_err("report", format!("{}: {e}", p.display())))?]),
        None => String::new(),
    };
    r.stage(
        "report",
        format!("{k_clf}|{k_emb}|{k_docs}|{}|{communities_hash}", cfg.nn_k),
        &[files::REPORT.into(), files::PROJECTION.into()],
        |r| write_report(r.cfg, &r.out, graph_file, &r.outcome),
    )?;

    for mode in FeatureMode::ALL {
        let text = fs::read_to_string(r.path(&files::metrics(mode))).map_err(|e| stage_err("report", e))?;
        let cm = ConfusionMatrix::parse(&text).map_err(|e| stage_err("report", e))?;
        r.outcome.metrics.insert(mode, cm);
    }
    let test = load_features(&r.path(&files::test(FeatureMode::TextOnly))).map_err(|e| stage_err("report", e))?;
    let pos = test.iter().filter(|t| t.label).count();
    r.outcome.baseline = pos.max(test.len() - pos) as f64 / test.len().max(1) as f64;
    r.outcome.report = r.path(files::REPORT);
    Ok(r.outcome)
}

fn read_graph_sim(path: &Path) -> Result<BTreeMap<String, f64>, BoxError> {
    let mut out = BTreeMap::new();
    for line in fs::read_to_string(path)?.lines().skip(1) {
        if let Some((a, v)) = line.split_once(',') {
            out.insert(a.to_string(), v.parse()?);
        }
    }
    Ok(out)
}

fn write_report(cfg: &PipelineConfig, out: &Path, graph_file: &str, outcome: &PipelineOutcome) -> Result<(), BoxError> {
    let mut rep = String::new();
    writeln!(rep, "# pipeline report")?;
    writeln!(rep, "seed={}\ntarget={}", cfg.seed, cfg.target)?;
    writeln!(rep, "executed={}", outcome.executed.join(","))?;
    writeln!(rep, "skipped={}", outcome.skipped.join(","))?;
    rep.push_str(&fs::read_to_string(out.join(files::INGEST))?);

    let graph = load_snapshot(&out.join(graph_file))?;
    let deg = project_author_degrees(&graph);
    writeln!(rep, "\n## author projection degrees")?;
    writeln!(rep, "mean={:.4}\nstd={:.4}", deg.mean, deg.std_dev)?;
    writeln!(rep, "histogram(degree:count)={}", deg.histogram.iter().map(|(d, c)| format!("{d}:{c}")).collect::<Vec<_>>().join(" "))?;

    let (vocab, emb) = load_embeddings(&out.join(files::GRAPH_EMB))?;
    writeln!(rep, "\n## graph nearest subreddits of {}", cfg.target)?;
    match nearest_neighbors(&vocab, &emb, &cfg.target, cfg.nn_k, Some(NodeType::Subreddit)) {
        Ok(nn) => {
            for n in nn {
                writeln!(rep, "{:<24} {:.4}", n.token, n.similarity)?;
            }
        }
        Err(e) => writeln!(rep, "unavailable: {e}")?,
    }
    for variant in [files::DBOW, files::DMM] {
        let model = DocModel::load(&out.join(variant))?;
        writeln!(rep, "\n## {variant} nearest subreddit tags of {}", cfg.target)?;
        match nearest_tags(&model, &cfg.target, cfg.nn_k, Some("r:")) {
            Ok(nn) => {
                for n in nn {
                    writeln!(rep, "{:<24} {:.4}", n.token, n.similarity)?;
                }
            }
            Err(e) => writeln!(rep, "unavailable: {e}")?,
        }
    }

    writeln!(rep, "\n## similarity correlations")?;
    let graph_sim = read_graph_sim(&out.join(files::GRAPH_SIM))?;
    let profiles = read_profiles(File::open(out.join(files::PROFILES))?)?;
    let (mut g, mut b, mut m) = (Vec::new(), Vec::new(), Vec::new());
    for p in &profiles {
        if let Some(s) = graph_sim.get(&p.author.name) {
            g.push(*s);
            b.push(p.dbow_mean);
            m.push(p.dmm_mean);
        }
    }
    writeln!(rep, "authors={}", g.len())?;
    match similarity_correlations(&g, &b, &m) {
        Ok(c) => write!(rep, "{c}")?,
        Err(e) => writeln!(rep, "unavailable: {e}")?,
    }

    for mode in FeatureMode::ALL {
        let text = fs::read_to_string(out.join(files::metrics(mode)))?;
        let model = LogRegModel::load(&out.join(files::model(mode)))?;
        writeln!(rep, "\n## confusion matrix: {mode}")?;
        writeln!(rep, "features={}\niterations={}", model.weights.len(), model.iterations)?;
        for line in text.lines().filter(|l| !l.starts_with("mode=")) {
            writeln!(rep, "{line}")?;
        }
    }

    // subreddit projection
    let communities = match &cfg.communities {
        Some(p) => read_communities(p)?,
        None => BTreeMap::new(),
    };
    let subs: Vec<u32> = vocab.ids_of_type(NodeType::Subreddit).to_vec();
    let labels: Vec<String> = subs.iter().map(|&i| vocab.token(i).to_string()).collect();
    let rows: Vec<&[f64]> = subs.iter().map(|&i| emb.input(i)).collect();
    let groups: Vec<String> = labels
        .iter()
        .map(|t| {
            let name = t.trim_start_matches("r:");
            communities.get(name).map_or_else(|| "?".to_string(), |c| c.to_string())
        })
        .collect();
    writeln!(rep, "\n## projection")?;
    match pca_project_2d(&labels, &rows) {
        Ok(p) => {
            p.write_csv(File::create(out.join(files::PROJECTION))?, Some(&groups))?;
            writeln!(rep, "points={}\nvariance={:.6},{:.6}\nrank_deficient={}", labels.len(), p.variance.0, p.variance.1, p.rank_deficient)?;
        }
        Err(e) => {
            fs::write(out.join(files::PROJECTION), "label,x,y,group\n")?;
            writeln!(rep, "unavailable: {e}")?;
        }
    }
    fs::write(out.join(files::REPORT), rep)?;
    Ok(())
}
