//! Forest Fire subgraph sampling and metapath-guided random walks.

use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rand::Rng as _;
use thiserror::Error;

use crate::hetgraph::{GraphError, HetGraph, NodeRef, NodeType};
use crate::seed;

#[derive(Debug, Error)]
pub enum SamplingError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid metapath: {0}")]
    Schema(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone)]
pub struct ForestFireConfig {
    pub burn_prob: f64,
    pub target_size: usize,
    pub max_restarts: usize,
    pub seed_nodes: Vec<NodeRef>,
    pub rng_seed: u64,
}

impl ForestFireConfig {
    pub fn validate(&self) -> Result<(), SamplingError> {
        if !(0.0..=1.0).contains(&self.burn_prob) {
            return Err(SamplingError::Config(format!(
                "burn probability {} outside [0, 1]",
                self.burn_prob
            )));
        }
        if self.target_size < self.seed_nodes.len() {
            return Err(SamplingError::Config(format!(
                "target size {} smaller than {} seeds",
                self.target_size,
                self.seed_nodes.len()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FireSample {
    /// Burned node ids in burn order.
    pub burned: Vec<u32>,
    pub restarts: usize,
    /// Whether the requested size had to be capped at the node count.
    pub capped: bool,
}

impl FireSample {
    pub fn nodes<'g>(&self, graph: &'g HetGraph) -> Vec<&'g NodeRef> {
        let mut ids = self.burned.clone();
        ids.sort_unstable();
        ids.into_iter().map(|i| graph.node(i)).collect()
    }
}

/// Forest Fire sampling.
///
/// Seeds are burned first. Each round visits the nodes burned in the
/// previous round in burn order and burns every unburned neighbor (ascending
/// id) independently with `burn_prob`. When a round burns nothing, the fire
/// restarts from a uniformly chosen burned node, at most `max_restarts`
/// times. With `burn_prob == 1` this is breadth-first search.
pub fn forest_fire_sample(graph: &HetGraph, cfg: &ForestFireConfig) -> Result<FireSample, SamplingError> {
    cfg.validate()?;
    let mut seeds = Vec::with_capacity(cfg.seed_nodes.len());
    for s in &cfg.seed_nodes {
        seeds.push(graph.require(s)?);
    }
    let mut target = cfg.target_size;
    let mut capped = false;
    if target > graph.node_count() {
        log::warn!(
            "forest fire target {} exceeds graph size {}; capping",
            target,
            graph.node_count()
        );
        target = graph.node_count();
        capped = true;
    }

    let mut rng = seed::rng(cfg.rng_seed, &[0xf1]);
    let mut burned_mask = vec![false; graph.node_count()];
    let mut burned = Vec::with_capacity(target);
    let mut frontier = Vec::new();
    for s in seeds {
        if !burned_mask[s as usize] {
            burned_mask[s as usize] = true;
            burned.push(s);
            frontier.push(s);
        }
    }
    let mut restarts = 0;
    'fire: while burned.len() < target {
        let mut next = Vec::new();
        for &v in &frontier {
            for &u in graph.all_neighbor_ids(v) {
                if burned_mask[u as usize] {
                    continue;
                }
                if rng.gen::<f64>() < cfg.burn_prob {
                    burned_mask[u as usize] = true;
                    burned.push(u);
                    next.push(u);
                    if burned.len() >= target {
                        break 'fire;
                    }
                }
            }
        }
        if next.is_empty() {
            if restarts >= cfg.max_restarts || burned.is_empty() {
                break;
            }
            restarts += 1;
            next.push(burned[rng.gen_range(0..burned.len())]);
        }
        frontier = next;
    }
    Ok(FireSample {
        burned,
        restarts,
        capped,
    })
}

/// Ordered node-type pattern a walk cycles through.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MetapathSchema {
    sequence: Vec<NodeType>,
}

impl MetapathSchema {
    pub fn new(sequence: Vec<NodeType>) -> Result<Self, SamplingError> {
        if sequence.len() < 2 {
            return Err(SamplingError::Schema("needs at least two types".into()));
        }
        if sequence.first() != sequence.last() {
            return Err(SamplingError::Schema("first and last type must match".into()));
        }
        for w in sequence.windows(2) {
            if !NodeType::is_legal_edge(w[0], w[1]) {
                return Err(SamplingError::Schema(format!("{}-{} is not a graph edge", w[0], w[1])));
            }
        }
        Ok(MetapathSchema { sequence })
    }

    /// subreddit, submission, author, submission, subreddit
    pub fn subreddit_author() -> Self {
        use NodeType::*;
        Self::new(vec![Subreddit, Submission, Author, Submission, Subreddit]).unwrap()
    }

    pub fn sequence(&self) -> &[NodeType] {
        &self.sequence
    }

    pub fn start_type(&self) -> NodeType {
        self.sequence[0]
    }

    /// Type at position `i` of the infinite cyclic extension. The last slot of
    /// one cycle is the first slot of the next.
    #[inline]
    pub fn type_at(&self, i: usize) -> NodeType {
        self.sequence[i % (self.sequence.len() - 1)]
    }
}

impl FromStr for MetapathSchema {
    type Err = SamplingError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let seq = s
            .split(',')
            .map(|t| t.trim().parse::<NodeType>().map_err(SamplingError::Schema))
            .collect::<Result<Vec<_>, _>>()?;
        MetapathSchema::new(seq)
    }
}

impl std::fmt::Display for MetapathSchema {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tags: Vec<String> = self.sequence.iter().map(|t| t.tag().to_string()).collect();
        f.write_str(&tags.join(","))
    }
}

#[derive(Debug, Clone)]
pub struct WalkConfig {
    pub walks_per_start: usize,
    /// Maximum tokens per walk.
    pub walk_length: usize,
    pub min_emit_length: usize,
    pub rng_seed: u64,
    pub workers: usize,
}

impl Default for WalkConfig {
    fn default() -> Self {
        WalkConfig {
            walks_per_start: 1000,
            walk_length: 100,
            min_emit_length: 2,
            rng_seed: 0,
            workers: 1,
        }
    }
}

impl WalkConfig {
    pub fn validate(&self) -> Result<(), SamplingError> {
        if self.walks_per_start < 1 || self.walk_length < 2 || self.min_emit_length < 2 {
            return Err(SamplingError::Config(
                "walks_per_start >= 1, walk_length >= 2 and min_emit_length >= 2 required".into(),
            ));
        }
        Ok(())
    }
}

/// Uniform choice among the `required`-typed neighbors of `current`.
#[inline]
pub fn next_node<R: rand::Rng + ?Sized>(
    graph: &HetGraph,
    current: u32,
    required: NodeType,
    rng: &mut R,
) -> Option<u32> {
    let choices = graph.neighbor_ids(current, required);
    match choices.len() {
        0 => None,
        1 => Some(choices[0]),
        n => Some(choices[rng.gen_range(0..n)]),
    }
}

/// Counters for one walk-generation run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct WalkStats {
    /// Walks written, full length or truncated.
    pub emitted: u64,
    /// Written walks that stopped early at a dead end.
    pub truncated: u64,
    /// Walks shorter than the minimum emit length.
    pub dropped: u64,
    /// Transitions taken, including those of dropped walks.
    pub steps: u64,
}

impl WalkStats {
    fn merge(&mut self, o: WalkStats) {
        self.emitted += o.emitted;
        self.truncated += o.truncated;
        self.dropped += o.dropped;
        self.steps += o.steps;
    }
}

/// A walk corpus on disk.
#[derive(Debug, Clone)]
pub struct WalkCorpus {
    pub path: PathBuf,
    pub line_count: u64,
    pub stats: WalkStats,
}

/// Fills `walk` with one metapath walk from `start`.
pub fn walk_from<R: rand::Rng + ?Sized>(
    graph: &HetGraph,
    schema: &MetapathSchema,
    start: u32,
    max_len: usize,
    rng: &mut R,
    walk: &mut Vec<u32>,
) {
    walk.clear();
    walk.push(start);
    let mut current = start;
    while walk.len() < max_len {
        match next_node(graph, current, schema.type_at(walk.len()), rng) {
            Some(n) => {
                walk.push(n);
                current = n;
            }
            None => break,
        }
    }
}

/// Walk-time copy of the typed adjacency, laid out for locality.
///
/// Every node is one record `[graph id, end0, end1, end2, end3, neighbors..]`
/// in a single array, where `end_t` is the cumulative neighbor count up to
/// type `t` and neighbors are stored as record positions. Records are
/// ordered so each author is followed by the submissions it wrote, and
/// everything else comes after; the `s → a → s` part of a walk then mostly
/// stays within a few cache lines. Neighbor lists keep their original
/// order, so walks are identical to stepping the graph with [`next_node`].
#[derive(Debug, Clone)]
pub struct WalkIndex {
    records: Vec<u32>,
    /// Record position of each graph id.
    position: Vec<u32>,
}

const HEADER: usize = 5;

impl WalkIndex {
    pub fn new(graph: &HetGraph) -> Result<WalkIndex, SamplingError> {
        let n = graph.node_count();
        let adjacency: usize = (0..n as u32).map(|v| graph.degree(v)).sum();
        if HEADER * n + adjacency >= u32::MAX as usize {
            return Err(SamplingError::Config("graph too large for a 32-bit walk index".into()));
        }
        let mut order = Vec::with_capacity(n);
        let mut placed = vec![false; n];
        let mut place = |v: u32, order: &mut Vec<u32>| {
            if !std::mem::replace(&mut placed[v as usize], true) {
                order.push(v);
            }
        };
        for a in graph.ids_of_type(NodeType::Author) {
            place(a, &mut order);
            for &u in graph.neighbor_ids(a, NodeType::Submission) {
                place(u, &mut order);
            }
        }
        for v in 0..n as u32 {
            place(v, &mut order);
        }
        let mut position = vec![0u32; n];
        let mut next = 0usize;
        for &v in &order {
            position[v as usize] = next as u32;
            next += HEADER + graph.degree(v);
        }
        let mut records = Vec::with_capacity(next);
        for &v in &order {
            records.push(v);
            let mut end = 0u32;
            for t in NodeType::ALL {
                end += graph.neighbor_ids(v, t).len() as u32;
                records.push(end);
            }
            for t in NodeType::ALL {
                records.extend(graph.neighbor_ids(v, t).iter().map(|&u| position[u as usize]));
            }
        }
        Ok(WalkIndex { records, position })
    }

    /// Record position of a graph id.
    pub fn position_of(&self, id: u32) -> u32 {
        self.position[id as usize]
    }

    /// Graph id of the record at `pos`.
    pub fn id_at(&self, pos: u32) -> u32 {
        self.records[pos as usize]
    }

    /// [`next_node`] on record positions; consumes the random stream
    /// identically.
    #[inline]
    pub fn next_position<R: rand::Rng + ?Sized>(&self, current: u32, required: NodeType, rng: &mut R) -> Option<u32> {
        let p = current as usize;
        let t = required.index();
        let lo = if t == 0 { 0 } else { self.records[p + t] as usize };
        let hi = self.records[p + 1 + t] as usize;
        let list = p + HEADER;
        match hi - lo {
            0 => None,
            1 => Some(self.records[list + lo]),
            n => Some(self.records[list + lo + rng.gen_range(0..n)]),
        }
    }

    /// [`walk_from`] on record positions: `start` and the filled `walk` are
    /// positions.
    pub fn walk_from<R: rand::Rng + ?Sized>(
        &self,
        schema: &MetapathSchema,
        start: u32,
        max_len: usize,
        rng: &mut R,
        walk: &mut Vec<u32>,
    ) {
        walk.clear();
        walk.push(start);
        let mut current = start;
        while walk.len() < max_len {
            match self.next_position(current, schema.type_at(walk.len()), rng) {
                Some(n) => {
                    walk.push(n);
                    current = n;
                }
                None => break,
            }
        }
    }
}

/// Writes walks for the given start nodes. Each start node gets its own
/// random stream, so output does not depend on how starts are partitioned.
pub fn write_walks<W: Write>(
    graph: &HetGraph,
    schema: &MetapathSchema,
    cfg: &WalkConfig,
    starts: &[u32],
    out: &mut W,
) -> Result<WalkStats, SamplingError> {
    Ok(write_indexed(graph, &WalkIndex::new(graph)?, schema, cfg, starts, out)?)
}

fn write_indexed<W: Write>(
    graph: &HetGraph,
    index: &WalkIndex,
    schema: &MetapathSchema,
    cfg: &WalkConfig,
    starts: &[u32],
    out: &mut W,
) -> io::Result<WalkStats> {
    let mut stats = WalkStats::default();
    let mut walk = Vec::with_capacity(cfg.walk_length);
    let mut line = String::new();
    for &start in starts {
        let mut rng = seed::rng(cfg.rng_seed, &[start as u64]);
        for _ in 0..cfg.walks_per_start {
            index.walk_from(schema, index.position_of(start), cfg.walk_length, &mut rng, &mut walk);
            stats.steps += walk.len() as u64 - 1;
            if walk.len() < cfg.min_emit_length {
                stats.dropped += 1;
                continue;
            }
            stats.emitted += 1;
            if walk.len() < cfg.walk_length {
                stats.truncated += 1;
            }
            line.clear();
            for (i, &n) in walk.iter().enumerate() {
                if i > 0 {
                    line.push(' ');
                }
                let node = graph.node(index.id_at(n));
                line.push(node.kind.tag());
                line.push(':');
                line.push_str(&node.name);
            }
            line.push('\n');
            out.write_all(line.as_bytes())?;
        }
    }
    Ok(stats)
}

/// Generates the full walk corpus into `path`.
///
/// Start nodes are all nodes of the schema's first type, in id order. With
/// several workers the start list is split into contiguous chunks, each
/// written to a spill file and concatenated in order, so the corpus is
/// byte-identical to a single-worker run.
pub fn metapath_walks(
    graph: &HetGraph,
    schema: &MetapathSchema,
    cfg: &WalkConfig,
    path: &Path,
) -> Result<WalkCorpus, SamplingError> {
    cfg.validate()?;
    let starts: Vec<u32> = graph.ids_of_type(schema.start_type()).collect();
    let workers = cfg.workers.max(1).min(starts.len().max(1));
    let index = WalkIndex::new(graph)?;
    let index = &index;
    let mut stats = WalkStats::default();
    if workers == 1 {
        let mut out = BufWriter::new(File::create(path)?);
        stats = write_indexed(graph, index, schema, cfg, &starts, &mut out)?;
        out.flush()?;
    } else {
        let chunk = starts.len().div_ceil(workers);
        let parts: Vec<PathBuf> = (0..workers)
            .map(|k| {
                let mut p = path.as_os_str().to_owned();
                p.push(format!(".part{k}"));
                PathBuf::from(p)
            })
            .collect();
        let results: Vec<io::Result<WalkStats>> = std::thread::scope(|scope| {
            let handles: Vec<_> = starts
                .chunks(chunk)
                .zip(&parts)
                .map(|(chunk, part)| {
                    scope.spawn(move || -> io::Result<WalkStats> {
                        let mut out = BufWriter::new(File::create(part)?);
                        let s = write_indexed(graph, index, schema, cfg, chunk, &mut out)?;
                        out.flush()?;
                        Ok(s)
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("walk worker panicked")).collect()
        });
        for r in results {
            stats.merge(r?);
        }
        let mut out = BufWriter::new(File::create(path)?);
        for part in &parts {
            if part.exists() {
                io::copy(&mut File::open(part)?, &mut out)?;
                fs::remove_file(part)?;
            }
        }
        out.flush()?;
    }
    Ok(WalkCorpus {
        path: path.to_path_buf(),
        line_count: stats.emitted,
        stats,
    })
}

/// A defect found while checking a walk line against the graph and schema.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WalkViolation {
    #[error("bad token {0:?}")]
    BadToken(String),
    #[error("token {token} at position {position} should have type {expected}")]
    WrongType {
        token: String,
        position: usize,
        expected: NodeType,
    },
    #[error("{0} and {1} are not adjacent")]
    NotAnEdge(String, String),
    #[error("unknown node {0}")]
    UnknownNode(String),
}

/// Checks schema conformance and edge validity of one corpus line.
pub fn check_walk_line(graph: &HetGraph, schema: &MetapathSchema, line: &str) -> Result<usize, WalkViolation> {
    let mut prev: Option<u32> = None;
    let mut n = 0;
    for (i, tok) in line.split(' ').enumerate() {
        let node = NodeRef::parse_token(tok).ok_or_else(|| WalkViolation::BadToken(tok.to_string()))?;
        let expected = schema.type_at(i);
        if node.kind != expected {
            return Err(WalkViolation::WrongType {
                token: tok.to_string(),
                position: i,
                expected,
            });
        }
        let id = graph
            .id_of(&node)
            .ok_or_else(|| WalkViolation::UnknownNode(tok.to_string()))?;
        if let Some(p) = prev {
            if !graph.has_edge(p, id) {
                return Err(WalkViolation::NotAnEdge(graph.node(p).token(), tok.to_string()));
            }
        }
        prev = Some(id);
        n += 1;
    }
    Ok(n)
}

/// Counts violations over a whole corpus file; returns (lines, violations).
pub fn check_corpus(graph: &HetGraph, schema: &MetapathSchema, path: &Path) -> io::Result<(u64, u64)> {
    let mut lines = 0;
    let mut bad = 0;
    for line in BufReader::new(File::open(path)?).lines() {
        let line = line?;
        lines += 1;
        if check_walk_line(graph, schema, &line).is_err() {
            bad += 1;
        }
    }
    Ok((lines, bad))
}

/// Throughput measurement of a timed walk run.
#[derive(Debug, Clone)]
pub struct BenchReport {
    pub nodes: usize,
    pub edges: usize,
    pub walks: u64,
    pub steps: u64,
    pub seconds: f64,
    pub steps_per_sec: f64,
    /// Stepping only.
    pub ns_per_step: f64,
    /// Stepping plus formatting each walk as a corpus line.
    pub emit_ns_per_step: f64,
    /// Peak resident set size in KiB, where the platform reports it.
    pub peak_rss_kib: Option<u64>,
    pub notes: Vec<&'static str>,
}

impl std::fmt::Display for BenchReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "nodes = {}", self.nodes)?;
        writeln!(f, "edges = {}", self.edges)?;
        writeln!(f, "walks = {}", self.walks)?;
        writeln!(f, "steps = {}", self.steps)?;
        writeln!(f, "seconds = {:.6}", self.seconds)?;
        writeln!(f, "steps_per_sec = {:.1}", self.steps_per_sec)?;
        writeln!(f, "ns_per_step = {:.3}", self.ns_per_step)?;
        writeln!(f, "emit_ns_per_step = {:.3}", self.emit_ns_per_step)?;
        match self.peak_rss_kib {
            Some(k) => writeln!(f, "peak_rss_kib = {k}")?,
            None => writeln!(f, "peak_rss_kib = unavailable")?,
        }
        for n in &self.notes {
            writeln!(f, "# {n}")?;
        }
        Ok(())
    }
}

pub const COMPLEXITY_NOTES: [&str; 5] = [
    "neighbor storage O(|E|); typed neighbor lookup O(1) per step",
    "walk sampling O(starts * walks * walk_length)",
    "skip-gram training O(tokens * window * (negatives + 1) * dim * epochs)",
    "SBM inference O(V ln^2 V); hierarchical SBM O(V ln^2 V * blocks^2 * levels)",
    "walks are streamed to disk, so memory stays O(|V| + |E|) regardless of corpus size",
];

/// Times walk stepping alone, then the full path that formats each walk
/// as a corpus line into a sink.
pub fn benchmark_walks(graph: &HetGraph, schema: &MetapathSchema, cfg: &WalkConfig) -> Result<BenchReport, SamplingError> {
    cfg.validate()?;
    let starts: Vec<u32> = graph.ids_of_type(schema.start_type()).collect();
    let per_step = |seconds: f64, steps: u64| if steps == 0 { 0.0 } else { seconds * 1e9 / steps as f64 };

    let index = WalkIndex::new(graph)?;

    // stepping alone: same random streams as write_walks, nothing formatted
    let mut walk = Vec::with_capacity(cfg.walk_length);
    let (mut walks, mut steps) = (0u64, 0u64);
    let t0 = Instant::now();
    for &start in &starts {
        let mut rng = seed::rng(cfg.rng_seed, &[start as u64]);
        for _ in 0..cfg.walks_per_start {
            index.walk_from(schema, index.position_of(start), cfg.walk_length, &mut rng, &mut walk);
            steps += walk.len() as u64 - 1;
            walks += 1;
        }
    }
    let seconds = t0.elapsed().as_secs_f64();

    let t1 = Instant::now();
    let emitted = write_indexed(graph, &index, schema, cfg, &starts, &mut io::sink())?;
    let emit_ns_per_step = per_step(t1.elapsed().as_secs_f64(), emitted.steps);

    Ok(BenchReport {
        nodes: graph.node_count(),
        edges: graph.edge_count(),
        walks,
        steps,
        seconds,
        steps_per_sec: if seconds > 0.0 { steps as f64 / seconds } else { 0.0 },
        ns_per_step: per_step(seconds, steps),
        emit_ns_per_step,
        peak_rss_kib: peak_rss_kib(),
        notes: COMPLEXITY_NOTES.to_vec(),
    })
}

fn peak_rss_kib() -> Option<u64> {
    let status = fs::read_to_string("/proc/self/status").ok()?;
    status
        .lines()
        .find_map(|l| l.strip_prefix("VmHWM:"))
        .and_then(|v| v.trim().trim_end_matches("kB").trim().parse().ok())
}
