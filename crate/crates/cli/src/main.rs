use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use hetembed::classify::{balance, evaluate_rows, train_logreg, LogRegConfig, LogRegModel};
use hetembed::docembed::{read_documents, tag_documents, train_dbow, train_dmm, DocConfig, DocModel};
use hetembed::features::{
    assemble_table, author_profiles, nearest_neighbors, save_features, write_profiles, FeatureInputs, FeatureMode,
    SimilarityProfile,
};
use hetembed::hetgraph::{build_graph, project_author_degrees, HetGraph, NodeRef, NodeType};
use hetembed::pipeline::{docs_by_author, run_pipeline, PipelineConfig};
use hetembed::project::pca_project_2d;
use hetembed::sampling::{benchmark_walks, forest_fire_sample, metapath_walks, ForestFireConfig, MetapathSchema, WalkConfig};
use hetembed::sgns::{load_embeddings, save_embeddings, train_skipgram, SamplingMode, SgnsConfig};
use hetembed::synth::{generate, read_labels, LabelRule, SynthConfig};

#[derive(Parser)]
#[command(name = "hetembed", version, about = "Heterogeneous graph and document embeddings for author prediction")]
struct Cli {
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a graph snapshot and document file from records.
    Ingest(IngestArgs),
    /// Subgraph sampling and metapath walks.
    #[command(subcommand)]
    Sample(SampleCmd),
    /// Train graph or document embeddings.
    #[command(subcommand)]
    Embed(EmbedCmd),
    /// Nearest neighbours of a token in a graph embedding.
    Neighbors(NeighborArgs),
    #[command(subcommand)]
    Features(FeaturesCmd),
    /// Logistic-regression training and evaluation.
    #[command(subcommand)]
    Clf(ClfCmd),
    /// 2-D PCA coordinates of embedding rows.
    Project(ProjectArgs),
    /// Generate a planted-structure dataset.
    Synth(SynthArgs),
    /// Run every stage from a config file.
    Pipeline(PipelineArgs),
    #[command(subcommand)]
    Bench(BenchCmd),
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Graph snapshot output.
    #[arg(long)]
    out: PathBuf,
    /// Document records output.
    #[arg(long)]
    docs: Option<PathBuf>,
}

#[derive(Subcommand)]
enum SampleCmd {
    /// Forest Fire sampling.
    Fire(FireArgs),
    /// Metapath-constrained random walks.
    Walks(WalkArgs),
}

#[derive(Args)]
struct FireArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long, default_value_t = 0.7)]
    burn_prob: f64,
    #[arg(long)]
    target_size: usize,
    #[arg(long, default_value_t = 100)]
    max_restarts: usize,
    /// Seed node token such as r:news; repeatable.
    #[arg(long = "seed-node")]
    seed_nodes: Vec<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct WalkArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long, default_value = "r,s,a,s,r")]
    metapath: String,
    #[arg(long, default_value_t = 1000)]
    walks_per_start: usize,
    #[arg(long, default_value_t = 100)]
    walk_length: usize,
    #[arg(long, default_value_t = 2)]
    min_length: usize,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum EmbedCmd {
    /// Skip-gram over a walk corpus.
    Graph(EmbedGraphArgs),
    /// Paragraph vectors over document records.
    Docs(EmbedDocsArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Mp2v,
    Mp2vpp,
}

#[derive(Args)]
struct EmbedGraphArgs {
    #[arg(long)]
    walks: PathBuf,
    #[arg(long, default_value_t = 128)]
    dim: usize,
    #[arg(long, default_value_t = 7)]
    window: usize,
    #[arg(long, default_value_t = 5)]
    negatives: usize,
    #[arg(long, default_value_t = 30)]
    epochs: usize,
    #[arg(long, default_value_t = 0.025)]
    lr: f64,
    #[arg(long, default_value_t = 5)]
    min_count: u64,
    #[arg(long, value_enum, default_value_t = ModeArg::Mp2v)]
    mode: ModeArg,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Dbow,
    Dmm,
}

#[derive(Args)]
struct EmbedDocsArgs {
    #[arg(long, value_enum)]
    variant: VariantArg,
    #[arg(long, default_value_t = 50)]
    dim: usize,
    #[arg(long, default_value_t = 10)]
    window: usize,
    #[arg(long, default_value_t = 5)]
    negatives: usize,
    #[arg(long, default_value_t = 2)]
    min_count: u64,
    #[arg(long, default_value_t = 20)]
    epochs: usize,
    #[arg(long, default_value_t = 50)]
    infer_epochs: usize,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long = "in")]
    input: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct NeighborArgs {
    #[arg(long)]
    emb: PathBuf,
    #[arg(long)]
    query: String,
    #[arg(long, default_value_t = 10)]
    k: usize,
    /// Restrict to one node type (author, submission, comment, subreddit).
    #[arg(long = "type")]
    kind: Option<NodeType>,
}

#[derive(Subcommand)]
enum FeaturesCmd {
    /// Assemble a per-author feature table.
    Build(FeaturesArgs),
}

#[derive(Args)]
struct FeaturesArgs {
    #[arg(long)]
    mode: FeatureMode,
    /// Target subreddit tag, e.g. r:news.
    #[arg(long)]
    target: String,
    #[arg(long)]
    graph_emb: Option<PathBuf>,
    #[arg(long)]
    dbow: Option<PathBuf>,
    #[arg(long)]
    dmm: Option<PathBuf>,
    #[arg(long)]
    docs: Option<PathBuf>,
    #[arg(long)]
    labels: PathBuf,
    /// Add the two similarity standard deviations to the text features.
    #[arg(long)]
    include_stds: bool,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Also write the similarity profiles here.
    #[arg(long)]
    profiles: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum ClfCmd {
    Train(ClfTrainArgs),
    Eval(ClfEvalArgs),
}

#[derive(Args)]
struct ClfTrainArgs {
    #[arg(long)]
    features: PathBuf,
    /// Negatives sampled per positive.
    #[arg(long, default_value_t = 1.0)]
    ratio: f64,
    #[arg(long, default_value_t = 0.1)]
    lr: f64,
    #[arg(long, default_value_t = 1e-4)]
    l2: f64,
    #[arg(long, default_value_t = 5000)]
    max_iters: usize,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ClfEvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ProjectArgs {
    #[arg(long)]
    emb: PathBuf,
    /// Project every token of this type.
    #[arg(long = "type")]
    kind: Option<NodeType>,
    /// Comma-separated tokens to project.
    #[arg(long, value_delimiter = ',')]
    tokens: Vec<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 3)]
    communities: usize,
    #[arg(long, default_value_t = 10)]
    subreddits_per_community: usize,
    #[arg(long, default_value_t = 200)]
    authors_per_community: usize,
    #[arg(long, default_value_t = 8)]
    submissions_per_author: usize,
    #[arg(long, default_value_t = 1)]
    comments_per_submission: usize,
    #[arg(long, default_value_t = 0.85)]
    p_in: f64,
    #[arg(long, default_value_t = 0)]
    target_community: usize,
    #[arg(long, default_value_t = 200)]
    topic_vocab_size: usize,
    #[arg(long, default_value_t = 300)]
    shared_vocab_size: usize,
    #[arg(long, default_value_t = 100)]
    words_per_doc: usize,
    #[arg(long, default_value_t = 0.5)]
    topic_word_share: f64,
    #[arg(long, default_value_t = 0.25)]
    text_noise: f64,
    #[arg(long, default_value_t = 0.5)]
    persona_fidelity: f64,
    #[arg(long, default_value_t = 0.3)]
    topic_routing: f64,
    #[arg(long, default_value = "graph_and_text")]
    label_rule: LabelRule,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PipelineArgs {
    #[arg(long)]
    config: PathBuf,
    /// Print the effective configuration and exit.
    #[arg(long)]
    print_config: bool,
}

#[derive(Subcommand)]
enum BenchCmd {
    /// Time walk generation.
    Walks(BenchArgs),
}

#[derive(Args)]
struct BenchArgs {
    /// Existing graph snapshot; otherwise a synthetic graph is generated.
    #[arg(long)]
    graph: Option<PathBuf>,
    /// Approximate node count of the generated graph.
    #[arg(long, default_value_t = 10_000)]
    nodes: usize,
    #[arg(long, default_value = "r,s,a,s,r")]
    metapath: String,
    #[arg(long, default_value_t = 10)]
    walks_per_start: usize,
    #[arg(long, default_value_t = 100)]
    walk_length: usize,
}

fn load_graph(path: &Path) -> Result<HetGraph> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(HetGraph::read_snapshot(BufReader::new(f))?)
}

fn save_graph(graph: &HetGraph, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    graph.write_snapshot(&mut w)?;
    w.flush()?;
    Ok(())
}

fn ingest(a: &IngestArgs) -> Result<()> {
    let f = File::open(&a.input).with_context(|| format!("opening {}", a.input.display()))?;
    let loaded = build_graph(BufReader::new(f))?;
    save_graph(&loaded.graph, &a.out)?;
    if let Some(d) = &a.docs {
        hetembed::docembed::write_documents(d, &loaded.documents)?;
    }
    let deg = project_author_degrees(&loaded.graph);
    println!("nodes={}", loaded.graph.node_count());
    println!("edges={}", loaded.graph.edge_count());
    for t in NodeType::ALL {
        println!("nodes.{t}={}", loaded.graph.count_of_type(t));
    }
    println!("documents={}\nskipped={}\ndeleted={}", loaded.documents.len(), loaded.skipped, loaded.deleted);
    println!("author_degree_mean={:.4}\nauthor_degree_std={:.4}", deg.mean, deg.std_dev);
    Ok(())
}

fn parse_node(token: &str) -> Result<NodeRef> {
    NodeRef::parse_token(token).ok_or_else(|| anyhow!("bad node token {token:?}; expected e.g. r:news"))
}

fn sample(cmd: &SampleCmd, seed: u64) -> Result<()> {
    match cmd {
        SampleCmd::Fire(a) => {
            let g = load_graph(&a.graph)?;
            let cfg = ForestFireConfig {
                burn_prob: a.burn_prob,
                target_size: a.target_size,
                max_restarts: a.max_restarts,
                seed_nodes: a.seed_nodes.iter().map(|s| parse_node(s)).collect::<Result<_>>()?,
                rng_seed: seed,
            };
            let s = forest_fire_sample(&g, &cfg)?;
            save_graph(&g.induced(&s.burned), &a.out)?;
            println!("burned={}\nrestarts={}\ncapped={}", s.burned.len(), s.restarts, s.capped);
            Ok(())
        }
        SampleCmd::Walks(a) => {
            let g = load_graph(&a.graph)?;
            let schema: MetapathSchema = a.metapath.parse()?;
            let cfg = WalkConfig {
                walks_per_start: a.walks_per_start,
                walk_length: a.walk_length,
                min_emit_length: a.min_length,
                rng_seed: seed,
                workers: a.workers,
            };
            let c = metapath_walks(&g, &schema, &cfg, &a.out)?;
            println!(
                "emitted={}\ntruncated={}\ndropped={}\nsteps={}",
                c.stats.emitted, c.stats.truncated, c.stats.dropped, c.stats.steps
            );
            Ok(())
        }
    }
}

fn embed(cmd: &EmbedCmd, seed: u64) -> Result<()> {
    match cmd {
        EmbedCmd::Graph(a) => {
            let cfg = SgnsConfig {
                dim: a.dim,
                window: a.window,
                negatives: a.negatives,
                epochs: a.epochs,
                initial_lr: a.lr,
                min_count: a.min_count,
                mode: match a.mode {
                    ModeArg::Mp2v => SamplingMode::Mp2v,
                    ModeArg::Mp2vpp => SamplingMode::Mp2vPp,
                },
                rng_seed: seed,
                workers: a.workers,
                ..SgnsConfig::default()
            };
            let t = train_skipgram(&a.walks, &cfg)?;
            save_embeddings(&a.out, &t.vocab, &t.matrix)?;
            println!("vocab={}\npairs_per_epoch={}", t.vocab.len(), t.pairs_per_epoch);
            for (i, l) in t.epoch_losses.iter().enumerate() {
                println!("epoch{}_loss={l:.6}", i + 1);
            }
        }
        EmbedCmd::Docs(a) => {
            let (docs, excluded) = tag_documents(&read_documents(&a.input)?);
            let cfg = DocConfig {
                dim: a.dim,
                window: a.window,
                negatives: a.negatives,
                min_count: a.min_count,
                epochs: a.epochs,
                infer_epochs: a.infer_epochs,
                rng_seed: seed,
                workers: a.workers,
                ..DocConfig::default()
            };
            let model = match a.variant {
                VariantArg::Dbow => train_dbow(&docs, &cfg)?,
                VariantArg::Dmm => train_dmm(&docs, &cfg)?,
            };
            model.save(&a.out)?;
            println!("documents={}\nexcluded={excluded}\nwords={}\ntags={}", docs.len(), model.words().len(), model.tags().len());
        }
    }
    Ok(())
}

fn neighbors(a: &NeighborArgs) -> Result<()> {
    let (vocab, emb) = load_embeddings(&a.emb)?;
    for n in nearest_neighbors(&vocab, &emb, &a.query, a.k, a.kind)? {
        println!("{}\t{:.6}", n.token, n.similarity);
    }
    Ok(())
}

fn features(a: &FeaturesArgs, seed: u64) -> Result<()> {
    let labels = read_labels(&a.labels).with_context(|| format!("reading {}", a.labels.display()))?;
    let (vocab, emb) = match &a.graph_emb {
        Some(p) => load_embeddings(p)?,
        None if a.mode.needs_graph() => bail!("--graph-emb is required for mode {}", a.mode),
        None => (hetembed::sgns::Vocab::default(), hetembed::sgns::EmbeddingMatrix::zeros(0, 1)),
    };
    let mut profiles: BTreeMap<String, SimilarityProfile> = BTreeMap::new();
    if a.mode.needs_text() {
        let (Some(dbow), Some(dmm), Some(docs)) = (&a.dbow, &a.dmm, &a.docs) else {
            bail!("--dbow, --dmm and --docs are required for mode {}", a.mode);
        };
        let (dbow, dmm) = (DocModel::load(dbow)?, DocModel::load(dmm)?);
        let by_author: BTreeMap<_, _> = docs_by_author(docs)
            .map_err(|e| anyhow!("{e}"))?
            .into_iter()
            .filter(|(k, _)| labels.contains_key(k))
            .collect();
        let (list, excluded) = author_profiles(&dbow, &dmm, &by_author, &a.target, seed, a.workers)?;
        if let Some(p) = &a.profiles {
            write_profiles(File::create(p)?, &list)?;
        }
        println!("profiles={}\nexcluded_authors={}", list.len(), excluded.len());
        profiles = list.into_iter().map(|p| (p.author.name.clone(), p)).collect();
    }
    let inputs = FeatureInputs {
        vocab: &vocab,
        emb: &emb,
        profiles: &profiles,
        labels: &labels,
        include_stds: a.include_stds,
    };
    let (rows, dropped) = assemble_table(&inputs, a.mode);
    save_features(&a.out, &rows, a.include_stds)?;
    println!("rows={}\ndropped={dropped}", rows.len());
    Ok(())
}

fn clf(cmd: &ClfCmd, seed: u64) -> Result<()> {
    match cmd {
        ClfCmd::Train(a) => {
            let rows = hetembed::features::load_features(&a.features)?;
            let train = balance(&rows, a.ratio, seed)?;
            let cfg = LogRegConfig {
                lr: a.lr,
                l2: a.l2,
                max_iters: a.max_iters,
                tol: a.tol,
                rng_seed: seed,
            };
            let model = train_logreg(&train, &cfg)?;
            model.save(&a.out)?;
            println!(
                "rows={}\niterations={}\nfinal_loss={}",
                train.len(),
                model.iterations,
                model.loss_history.last().copied().unwrap_or(f64::NAN)
            );
            Ok(())
        }
        ClfCmd::Eval(a) => {
            let mut model = LogRegModel::load(&a.model)?;
            if let Some(t) = a.threshold {
                model.threshold = t;
            }
            let rows = hetembed::features::load_features(&a.features)?;
            let cm = evaluate_rows(&model, &rows)?;
            let text = format!("mode={}\n{cm}", model.mode);
            fs::write(&a.out, &text)?;
            print!("{text}");
            Ok(())
        }
    }
}

fn project(a: &ProjectArgs) -> Result<()> {
    let (vocab, emb) = load_embeddings(&a.emb)?;
    let mut ids: Vec<u32> = match a.kind {
        Some(t) => vocab.ids_of_type(t).to_vec(),
        None => Vec::new(),
    };
    for t in &a.tokens {
        ids.push(vocab.id(t).ok_or_else(|| anyhow!("token {t:?} not in embedding"))?);
    }
    if ids.is_empty() {
        bail!("nothing to project; pass --type or --tokens");
    }
    let labels: Vec<String> = ids.iter().map(|&i| vocab.token(i).to_string()).collect();
    let rows: Vec<&[f64]> = ids.iter().map(|&i| emb.input(i)).collect();
    let p = pca_project_2d(&labels, &rows)?;
    p.write_csv(BufWriter::new(File::create(&a.out)?), None)?;
    println!("points={}\nrank_deficient={}", labels.len(), p.rank_deficient);
    Ok(())
}

fn synth(a: &SynthArgs, seed: u64) -> Result<()> {
    let cfg = SynthConfig {
        n_communities: a.communities,
        subreddits_per_community: a.subreddits_per_community,
        authors_per_community: a.authors_per_community,
        submissions_per_author: a.submissions_per_author,
        comments_per_submission: a.comments_per_submission,
        p_in: a.p_in,
        target_community: a.target_community,
        topic_vocab_size: a.topic_vocab_size,
        shared_vocab_size: a.shared_vocab_size,
        words_per_doc: a.words_per_doc,
        topic_word_share: a.topic_word_share,
        text_noise: a.text_noise,
        persona_fidelity: a.persona_fidelity,
        topic_routing: a.topic_routing,
        label_rule: a.label_rule,
        rng_seed: seed,
    };
    let ds = generate(&cfg)?;
    ds.write(&a.out)?;
    println!(
        "authors={}\npositives={}\nrecords={}\ntarget={}",
        ds.authors.len(),
        ds.authors.iter().filter(|t| t.label).count(),
        ds.records.len(),
        cfg.target_tag()
    );
    Ok(())
}

fn pipeline(a: &PipelineArgs) -> Result<()> {
    let cfg = PipelineConfig::load(&a.config)?;
    if a.print_config {
        print!("{}", cfg.to_toml());
        return Ok(());
    }
    let o = run_pipeline(&cfg)?;
    println!("executed={}\nskipped={}", o.executed.join(","), o.skipped.join(","));
    for (mode, cm) in &o.metrics {
        println!("accuracy.{mode}={:.4}", cm.accuracy);
    }
    println!("baseline={:.4}\nreport={}", o.baseline, o.report.display());
    Ok(())
}

fn bench(cmd: &BenchCmd, seed: u64) -> Result<()> {
    let BenchCmd::Walks(a) = cmd;
    let graph = match &a.graph {
        Some(p) => load_graph(p)?,
        None => {
            let ds = generate(&SynthConfig::with_node_budget(a.nodes, seed))?;
            let ing = hetembed::hetgraph::ingest_submission_records(&ds.records);
            hetembed::hetgraph::build_graph_from_edges(&ing.edges)?
        }
    };
    let cfg = WalkConfig {
        walks_per_start: a.walks_per_start,
        walk_length: a.walk_length,
        rng_seed: seed,
        ..WalkConfig::default()
    };
    print!("{}", benchmark_walks(&graph, &a.metapath.parse()?, &cfg)?);
    Ok(())
}

fn run(cli: &Cli) -> (&'static str, Result<()>) {
    let seed = cli.seed;
    match &cli.command {
        Command::Ingest(a) => ("ingest", ingest(a)),
        Command::Sample(c) => (
            match c {
                SampleCmd::Fire(_) => "sample fire",
                SampleCmd::Walks(_) => "sample walks",
            },
            sample(c, seed),
        ),
        Command::Embed(c) => (
            match c {
                EmbedCmd::Graph(_) => "embed graph",
                EmbedCmd::Docs(_) => "embed docs",
            },
            embed(c, seed),
        ),
        Command::Neighbors(a) => ("neighbors", neighbors(a)),
        Command::Features(FeaturesCmd::Build(a)) => ("features build", features(a, seed)),
        Command::Clf(c) => (
            match c {
                ClfCmd::Train(_) => "clf train",
                ClfCmd::Eval(_) => "clf eval",
            },
            clf(c, seed),
        ),
        Command::Project(a) => ("project", project(a)),
        Command::Synth(a) => ("synth", synth(a, seed)),
        Command::Pipeline(a) => ("pipeline", pipeline(a)),
        Command::Bench(c) => ("bench walks", bench(c, seed)),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (stage, result) = run(&cli);
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error [{stage}]: {e:#}");
            ExitCode::FAILURE
        }
    }
}
