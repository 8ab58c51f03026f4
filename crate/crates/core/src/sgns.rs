//! Skip-gram with negative sampling over typed walk corpora.
//!
//! Two negative-sampling modes are supported. [`SamplingMode::Mp2v`] draws
//! negatives from one global unigram^power pool; [`SamplingMode::Mp2vPp`]
//! draws them only from tokens of the context token's node type, and
//! normalizes the exact softmax over that type as well.
//!
//! Parameters are `f64` so gradient checks against finite differences stay
//! meaningful at tight tolerances.

use std::collections::HashMap;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng as _;
use thiserror::Error;

use crate::hetgraph::{NodeRef, NodeType};
use crate::seed;

#[derive(Debug, Error)]
pub enum SgnsError {
    #[error("vocabulary is empty")]
    EmptyVocab,
    #[error("unknown token {0:?}")]
    UnknownToken(String),
    #[error("no negative-sampling pool for type {0}")]
    EmptyPool(NodeType),
    #[error("non-finite value during update (score {score}); learning rate too high?")]
    NonFinite { score: f64 },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SamplingMode {
    /// Global negative pool, type-agnostic normalization.
    Mp2v,
    /// Per-type negative pools and normalization.
    Mp2vPp,
}

impl FromStr for SamplingMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "mp2v" | "metapath2vec" => Ok(SamplingMode::Mp2v),
            "mp2vpp" | "mp2v_pp" | "mp2v++" | "metapath2vec++" => Ok(SamplingMode::Mp2vPp),
            other => Err(format!("unknown mode {other:?} (expected mp2v or mp2vpp)")),
        }
    }
}

impl std::fmt::Display for SamplingMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SamplingMode::Mp2v => "mp2v",
            SamplingMode::Mp2vPp => "mp2vpp",
        })
    }
}

/// Typed token vocabulary. Ids are ordered by descending count, then token.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Vocab {
    tokens: Vec<String>,
    counts: Vec<u64>,
    kinds: Vec<NodeType>,
    index: HashMap<String, u32>,
    total: u64,
    by_type: [Vec<u32>; 4],
}

impl Vocab {
    /// Builds a vocabulary from `(token, count)` pairs, dropping counts
    /// below `min_count`. Tokens must carry a type prefix.
    pub fn from_counts<I>(counts: I, min_count: u64) -> Result<Vocab, SgnsError>
    where
        I: IntoIterator<Item = (String, u64)>,
    {
        let mut entries: Vec<(String, u64)> = counts.into_iter().filter(|(_, c)| *c >= min_count).collect();
        entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let mut vocab = Vocab::default();
        for (tok, count) in entries {
            let node = NodeRef::parse_token(&tok).ok_or_else(|| SgnsError::Parse {
                line: 0,
                message: format!("untyped token {tok:?}"),
            })?;
            vocab.push(tok, count, node.kind);
        }
        Ok(vocab)
    }

    fn push(&mut self, tok: String, count: u64, kind: NodeType) {
        let id = self.tokens.len() as u32;
        self.index.insert(tok.clone(), id);
        self.tokens.push(tok);
        self.counts.push(count);
        self.kinds.push(kind);
        self.total += count;
        self.by_type[kind.index()].push(id);
    }

    pub fn build<R: BufRead>(reader: R, min_count: u64) -> Result<Vocab, SgnsError> {
        let mut counts: HashMap<String, u64> = HashMap::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            for tok in line.split_whitespace() {
                if NodeRef::parse_token(tok).is_none() {
                    return Err(SgnsError::Parse {
                        line: i + 1,
                        message: format!("malformed token {tok:?}"),
                    });
                }
                match counts.get_mut(tok) {
                    Some(c) => *c += 1,
                    None => {
                        counts.insert(tok.to_string(), 1);
                    }
                }
            }
        }
        Vocab::from_counts(counts, min_count)
    }

    pub fn build_from_file(path: &Path, min_count: u64) -> Result<Vocab, SgnsError> {
        Vocab::build(BufReader::new(File::open(path)?), min_count)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn require(&self, token: &str) -> Result<u32, SgnsError> {
        self.id(token).ok_or_else(|| SgnsError::UnknownToken(token.to_string()))
    }

    pub fn token(&self, id: u32) -> &str {
        &self.tokens[id as usize]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn count(&self, id: u32) -> u64 {
        self.counts[id as usize]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn kind(&self, id: u32) -> NodeType {
        self.kinds[id as usize]
    }

    pub fn total_count(&self) -> u64 {
        self.total
    }

    pub fn ids_of_type(&self, t: NodeType) -> &[u32] {
        &self.by_type[t.index()]
    }

    /// Names (without type prefix) of one type's tokens, in id order.
    pub fn names_of_type(&self, t: NodeType) -> Vec<&str> {
        self.ids_of_type(t).iter().map(|&i| &self.token(i)[2..]).collect()
    }
}

/// Input and output vector tables, row-major, one row per vocabulary id.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    dim: usize,
    input: Vec<f64>,
    output: Vec<f64>,
}

impl EmbeddingMatrix {
    pub fn zeros(rows: usize, dim: usize) -> Self {
        EmbeddingMatrix {
            dim,
            input: vec![0.0; rows * dim],
            output: vec![0.0; rows * dim],
        }
    }

    /// Inputs uniform in `[-0.5/dim, 0.5/dim]`, outputs zero.
    pub fn initialized(rows: usize, dim: usize, rng_seed: u64) -> Self {
        let mut rng = seed::rng(rng_seed, &[0x1417]);
        let half = 0.5 / dim as f64;
        let input = (0..rows * dim).map(|_| rng.gen_range(-half..=half)).collect();
        EmbeddingMatrix {
            dim,
            input,
            output: vec![0.0; rows * dim],
        }
    }

    pub fn from_input_rows(dim: usize, input: Vec<f64>) -> Self {
        assert_eq!(input.len() % dim.max(1), 0);
        let output = vec![0.0; input.len()];
        EmbeddingMatrix { dim, input, output }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> usize {
        self.input.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn input(&self, id: u32) -> &[f64] {
        let s = id as usize * self.dim;
        &self.input[s..s + self.dim]
    }

    pub fn input_mut(&mut self, id: u32) -> &mut [f64] {
        let s = id as usize * self.dim;
        &mut self.input[s..s + self.dim]
    }

    pub fn output(&self, id: u32) -> &[f64] {
        let s = id as usize * self.dim;
        &self.output[s..s + self.dim]
    }

    pub fn output_mut(&mut self, id: u32) -> &mut [f64] {
        let s = id as usize * self.dim;
        &mut self.output[s..s + self.dim]
    }

    pub fn input_table(&self) -> &[f64] {
        &self.input
    }

    pub fn output_table(&self) -> &[f64] {
        &self.output
    }

    pub fn is_finite(&self) -> bool {
        self.input.iter().chain(&self.output).all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone)]
struct Pool {
    ids: Vec<u32>,
    probs: Vec<f64>,
    dist: WeightedIndex<f64>,
}

impl Pool {
    fn new(ids: Vec<u32>, counts: &[u64], power: f64) -> Option<Pool> {
        if ids.is_empty() {
            return None;
        }
        let weights: Vec<f64> = ids.iter().map(|&i| (counts[i as usize] as f64).powf(power)).collect();
        let total: f64 = weights.iter().sum();
        if total <= 0.0 || !total.is_finite() {
            return None;
        }
        let probs = weights.iter().map(|w| w / total).collect();
        let dist = WeightedIndex::new(&weights).ok()?;
        Some(Pool { ids, probs, dist })
    }
}

/// Sampler drawing ids with probability proportional to `count^power`
/// within a pool: one global pool, or one pool per node type.
#[derive(Debug, Clone)]
pub struct NegativeTable {
    per_type: bool,
    pools: Vec<Option<Pool>>,
    /// Pool index and position of each id.
    slot: Vec<(usize, usize)>,
}

impl NegativeTable {
    pub fn build(vocab: &Vocab, power: f64, mode: SamplingMode) -> Result<NegativeTable, SgnsError> {
        if vocab.is_empty() {
            return Err(SgnsError::EmptyVocab);
        }
        match mode {
            SamplingMode::Mp2v => Self::global(vocab.counts(), power),
            SamplingMode::Mp2vPp => {
                let pools: Vec<Option<Pool>> = NodeType::ALL
                    .iter()
                    .map(|&t| Pool::new(vocab.ids_of_type(t).to_vec(), vocab.counts(), power))
                    .collect();
                Ok(Self::from_pools(true, pools, vocab.len()))
            }
        }
    }

    /// A single pool over all ids of `counts`.
    pub fn global(counts: &[u64], power: f64) -> Result<NegativeTable, SgnsError> {
        let pool = Pool::new((0..counts.len() as u32).collect(), counts, power).ok_or(SgnsError::EmptyVocab)?;
        Ok(Self::from_pools(false, vec![Some(pool)], counts.len()))
    }

    fn from_pools(per_type: bool, pools: Vec<Option<Pool>>, n: usize) -> Self {
        let mut slot = vec![(usize::MAX, 0); n];
        for (p, pool) in pools.iter().enumerate() {
            if let Some(pool) = pool {
                for (k, &id) in pool.ids.iter().enumerate() {
                    slot[id as usize] = (p, k);
                }
            }
        }
        NegativeTable { per_type, pools, slot }
    }

    pub fn is_per_type(&self) -> bool {
        self.per_type
    }

    fn pool_for(&self, kind: NodeType) -> Result<&Pool, SgnsError> {
        let idx = if self.per_type { kind.index() } else { 0 };
        self.pools[idx].as_ref().ok_or(SgnsError::EmptyPool(kind))
    }

    /// Draws one negative for a context token of type `kind`.
    #[inline]
    pub fn sample<R: rand::Rng + ?Sized>(&self, kind: NodeType, rng: &mut R) -> Result<u32, SgnsError> {
        let pool = self.pool_for(kind)?;
        Ok(pool.ids[pool.dist.sample(rng)])
    }

    /// Sampling probability of `id` within its pool.
    pub fn probability(&self, id: u32) -> f64 {
        let (p, k) = self.slot[id as usize];
        self.pools.get(p).and_then(|x| x.as_ref()).map_or(0.0, |pool| pool.probs[k])
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `-ln σ(x)`, computed without overflow.
#[inline]
pub(crate) fn neg_log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        (-x).exp().ln_1p()
    } else {
        -x + x.exp().ln_1p()
    }
}

/// Loss and gradient coefficients of one negative-sampling term set.
///
/// Returns `-ln σ(o_pos·h) - Σ ln σ(-o_neg·h)`. Afterwards `scratch.coef`
/// holds `σ(o·h) - label` per target (positive first) and `scratch.grad`
/// holds the gradient with respect to `h`.
pub(crate) fn ns_loss_grad(
    input: &[f64],
    outputs: &[f64],
    positive: u32,
    negatives: &[u32],
    scratch: &mut Scratch,
) -> Result<f64, SgnsError> {
    let dim = input.len();
    scratch.grad.clear();
    scratch.grad.resize(dim, 0.0);
    scratch.coef.clear();
    let mut loss = 0.0;
    for (k, &target) in std::iter::once(&positive).chain(negatives).enumerate() {
        let row = &outputs[target as usize * dim..(target as usize + 1) * dim];
        let score = dot(input, row);
        if !score.is_finite() {
            return Err(SgnsError::NonFinite { score });
        }
        let (label, term) = if k == 0 {
            (1.0, neg_log_sigmoid(score))
        } else {
            (0.0, neg_log_sigmoid(-score))
        };
        loss += term;
        let g = sigmoid(score) - label;
        scratch.coef.push(g);
        for (acc, o) in scratch.grad.iter_mut().zip(row) {
            *acc += g * o;
        }
    }
    Ok(loss)
}

/// `o -= lr·g·h` for every target scored by the last [`ns_loss_grad`].
pub(crate) fn ns_update_outputs(
    input: &[f64],
    outputs: &mut [f64],
    positive: u32,
    negatives: &[u32],
    lr: f64,
    scratch: &Scratch,
) {
    let dim = input.len();
    for (k, &target) in std::iter::once(&positive).chain(negatives).enumerate() {
        let step = lr * scratch.coef[k];
        if step == 0.0 {
            continue;
        }
        let row = &mut outputs[target as usize * dim..(target as usize + 1) * dim];
        for (o, h) in row.iter_mut().zip(input) {
            *o -= step * h;
        }
    }
}

/// One full negative-sampling SGD step: scores from pre-update values, then
/// output rows, then the input vector.
pub(crate) fn ns_step(
    input: &mut [f64],
    outputs: &mut [f64],
    positive: u32,
    negatives: &[u32],
    lr: f64,
    scratch: &mut Scratch,
) -> Result<f64, SgnsError> {
    let loss = ns_loss_grad(input, outputs, positive, negatives, scratch)?;
    ns_update_outputs(input, outputs, positive, negatives, lr, scratch);
    for (h, g) in input.iter_mut().zip(&scratch.grad) {
        *h -= lr * g;
    }
    Ok(loss)
}

/// Reusable buffers for [`ns_step`].
#[derive(Debug, Default)]
pub(crate) struct Scratch {
    pub(crate) grad: Vec<f64>,
    pub(crate) coef: Vec<f64>,
}

/// Applies one SGNS update for `(center, context)` with the given negatives
/// and returns the loss before the update.
pub fn sgns_pair_update(
    emb: &mut EmbeddingMatrix,
    center: u32,
    context: u32,
    negatives: &[u32],
    lr: f64,
) -> Result<f64, SgnsError> {
    let dim = emb.dim;
    let EmbeddingMatrix { input, output, .. } = emb;
    let row = &mut input[center as usize * dim..(center as usize + 1) * dim];
    ns_step(row, output, context, negatives, lr, &mut Scratch::default())
}

/// Exact softmax `p(c | v)` over the full vocabulary (or over `c`'s type in
/// [`SamplingMode::Mp2vPp`]).
pub fn softmax_prob(vocab: &Vocab, emb: &EmbeddingMatrix, v: &str, c: &str, mode: SamplingMode) -> Result<f64, SgnsError> {
    let vi = vocab.require(v)?;
    let ci = vocab.require(c)?;
    let h = emb.input(vi);
    let pool: Vec<u32> = match mode {
        SamplingMode::Mp2v => (0..vocab.len() as u32).collect(),
        SamplingMode::Mp2vPp => vocab.ids_of_type(vocab.kind(ci)).to_vec(),
    };
    let scores: Vec<f64> = pool.iter().map(|&u| dot(h, emb.output(u))).collect();
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let denom: f64 = scores.iter().map(|s| (s - max).exp()).sum();
    Ok((dot(h, emb.output(ci)) - max).exp() / denom)
}

#[derive(Debug, Clone)]
pub struct SgnsConfig {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub initial_lr: f64,
    pub min_lr: f64,
    pub min_count: u64,
    pub mode: SamplingMode,
    pub unigram_power: f64,
    pub rng_seed: u64,
    pub workers: usize,
}

impl Default for SgnsConfig {
    fn default() -> Self {
        SgnsConfig {
            dim: 128,
            window: 7,
            negatives: 5,
            epochs: 30,
            initial_lr: 0.025,
            min_lr: 0.0001,
            min_count: 5,
            mode: SamplingMode::Mp2v,
            unigram_power: 0.75,
            rng_seed: 1,
            workers: 1,
        }
    }
}

impl SgnsConfig {
    pub fn validate(&self) -> Result<(), SgnsError> {
        if self.dim < 1 || self.window < 1 || self.negatives < 1 {
            return Err(SgnsError::Config("dim, window and negatives must be >= 1".into()));
        }
        if !(self.initial_lr > self.min_lr && self.min_lr >= 0.0) {
            return Err(SgnsError::Config("need initial_lr > min_lr >= 0".into()));
        }
        Ok(())
    }
}

/// Trained graph embedding with its vocabulary and per-epoch mean loss.
#[derive(Debug, Clone)]
pub struct TrainedEmbedding {
    pub vocab: Vocab,
    pub matrix: EmbeddingMatrix,
    pub epoch_losses: Vec<f64>,
    pub pairs_per_epoch: u64,
}

/// Number of (center, context) pairs a line of `n` tokens yields.
pub fn pairs_in_line(n: usize, window: usize) -> u64 {
    (0..n)
        .map(|i| (i.min(window) + (n - 1 - i).min(window)) as u64)
        .sum()
}

/// Linear learning-rate decay by progress fraction.
#[inline]
pub(crate) fn decayed_lr(initial: f64, min: f64, done: u64, total: u64) -> f64 {
    if total == 0 {
        return initial;
    }
    (initial - (initial - min) * (done as f64 / total as f64)).max(min)
}

/// Raw view of a parameter table shared by hogwild workers.
#[derive(Clone, Copy)]
pub(crate) struct SharedTable {
    ptr: *mut f64,
    len: usize,
}

// SAFETY: workers write rows concurrently without synchronization. Lost or
// torn updates are accepted by the hogwild training contract; the table
// outlives every worker because workers run inside a scoped thread block.
unsafe impl Send for SharedTable {}
unsafe impl Sync for SharedTable {}

impl SharedTable {
    pub(crate) fn new(data: &mut [f64]) -> Self {
        SharedTable {
            ptr: data.as_mut_ptr(),
            len: data.len(),
        }
    }

    /// # Safety
    /// The backing table must be alive; callers accept racy updates.
    #[allow(clippy::mut_from_ref)]
    pub(crate) unsafe fn all(&self) -> &mut [f64] {
        std::slice::from_raw_parts_mut(self.ptr, self.len)
    }

    /// # Safety
    /// As [`SharedTable::all`].
    #[allow(clippy::mut_from_ref)]
    pub(crate) unsafe fn row(&self, id: u32, dim: usize) -> &mut [f64] {
        std::slice::from_raw_parts_mut(self.ptr.add(id as usize * dim), dim)
    }
}

struct EpochCtx<'a> {
    vocab: &'a Vocab,
    table: &'a NegativeTable,
    cfg: &'a SgnsConfig,
    input: SharedTable,
    output: SharedTable,
    done: &'a AtomicU64,
    total: u64,
}

fn encode_line(vocab: &Vocab, line: &str, ids: &mut Vec<u32>) {
    ids.clear();
    ids.extend(line.split_whitespace().filter_map(|t| vocab.id(t)));
}

fn train_worker(ctx: &EpochCtx<'_>, corpus: &Path, epoch: usize, worker: usize, workers: usize) -> Result<(f64, u64), SgnsError> {
    let cfg = ctx.cfg;
    let dim = cfg.dim;
    let mut rng = seed::rng(cfg.rng_seed, &[epoch as u64, worker as u64]);
    let mut scratch = Scratch::default();
    let mut negs = Vec::with_capacity(cfg.negatives);
    let mut ids = Vec::new();
    let mut loss = 0.0;
    let mut pairs = 0u64;
    let reader = BufReader::new(File::open(corpus)?);
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if i % workers != worker {
            continue;
        }
        encode_line(ctx.vocab, &line, &mut ids);
        let n = ids.len();
        let mut line_pairs = 0u64;
        for i in 0..n {
            let lo = i.saturating_sub(cfg.window);
            let hi = (i + cfg.window).min(n - 1);
            let lr = decayed_lr(cfg.initial_lr, cfg.min_lr, ctx.done.load(Ordering::Relaxed) + line_pairs, ctx.total);
            for j in lo..=hi {
                if j == i {
                    continue;
                }
                let (center, context) = (ids[i], ids[j]);
                let kind = ctx.vocab.kind(context);
                negs.clear();
                for _ in 0..cfg.negatives {
                    let n = ctx.table.sample(kind, &mut rng)?;
                    if n != context {
                        negs.push(n);
                    }
                }
                // SAFETY: see SharedTable; input and output tables never alias.
                let step = unsafe {
                    ns_step(ctx.input.row(center, dim), ctx.output.all(), context, &negs, lr, &mut scratch)
                };
                loss += step?;
                line_pairs += 1;
            }
        }
        ctx.done.fetch_add(line_pairs, Ordering::Relaxed);
        pairs += line_pairs;
    }
    Ok((loss, pairs))
}

/// Trains skip-gram embeddings by streaming the corpus file once per epoch.
///
/// Out-of-vocabulary tokens are removed from each line before windowing.
/// The learning rate decays linearly over the total pair count of all
/// epochs. With `workers == 1` the result is fully deterministic.
pub fn train_skipgram(corpus: &Path, cfg: &SgnsConfig) -> Result<TrainedEmbedding, SgnsError> {
    cfg.validate()?;
    let vocab = Vocab::build_from_file(corpus, cfg.min_count)?;
    if vocab.is_empty() {
        return Err(SgnsError::EmptyVocab);
    }
    let table = NegativeTable::build(&vocab, cfg.unigram_power, cfg.mode)?;
    let mut matrix = EmbeddingMatrix::initialized(vocab.len(), cfg.dim, cfg.rng_seed);

    let mut pairs_per_epoch = 0u64;
    let mut ids = Vec::new();
    for line in BufReader::new(File::open(corpus)?).lines() {
        encode_line(&vocab, &line?, &mut ids);
        pairs_per_epoch += pairs_in_line(ids.len(), cfg.window);
    }
    let total = pairs_per_epoch * cfg.epochs as u64;
    let done = AtomicU64::new(0);
    let workers = cfg.workers.max(1);
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let dim = cfg.dim;
    {
        let EmbeddingMatrix { input, output, .. } = &mut matrix;
        let ctx = EpochCtx {
            vocab: &vocab,
            table: &table,
            cfg,
            input: SharedTable::new(input),
            output: SharedTable::new(output),
            done: &done,
            total,
        };
        for epoch in 0..cfg.epochs {
            let results: Vec<Result<(f64, u64), SgnsError>> = if workers == 1 {
                vec![train_worker(&ctx, corpus, epoch, 0, 1)]
            } else {
                std::thread::scope(|s| {
                    let handles: Vec<_> = (0..workers)
                        .map(|w| {
                            let ctx = &ctx;
                            s.spawn(move || train_worker(ctx, corpus, epoch, w, workers))
                        })
                        .collect();
                    handles.into_iter().map(|h| h.join().expect("training worker panicked")).collect()
                })
            };
            let (mut loss, mut pairs) = (0.0, 0u64);
            for r in results {
                let (l, p) = r?;
                loss += l;
                pairs += p;
            }
            let mean = if pairs == 0 { 0.0 } else { loss / pairs as f64 };
            log::debug!("epoch {epoch}: mean loss {mean:.5} over {pairs} pairs (dim {dim})");
            epoch_losses.push(mean);
        }
    }
    if !matrix.is_finite() {
        return Err(SgnsError::NonFinite { score: f64::NAN });
    }
    Ok(TrainedEmbedding {
        vocab,
        matrix,
        epoch_losses,
        pairs_per_epoch,
    })
}

/// Writes input vectors as `<n> <dim>` followed by `<token> v1 .. vD` lines.
pub fn write_embeddings<W: Write>(mut w: W, vocab: &Vocab, emb: &EmbeddingMatrix) -> io::Result<()> {
    writeln!(w, "{} {}", vocab.len(), emb.dim())?;
    for id in 0..vocab.len() as u32 {
        w.write_all(vocab.token(id).as_bytes())?;
        for v in emb.input(id) {
            write!(w, " {v}")?;
        }
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn save_embeddings(path: &Path, vocab: &Vocab, emb: &EmbeddingMatrix) -> Result<(), SgnsError> {
    write_embeddings(BufWriter::new(File::create(path)?), vocab, emb)?;
    Ok(())
}

/// Reads an embedding file. Counts are not stored, so every loaded token
/// gets count 0; output vectors are zero.
pub fn read_embeddings<R: BufRead>(reader: R) -> Result<(Vocab, EmbeddingMatrix), SgnsError> {
    let perr = |line: usize, message: String| SgnsError::Parse { line, message };
    let mut lines = reader.lines();
    let header = lines.next().ok_or_else(|| perr(1, "missing header".into()))??;
    let mut parts = header.split_whitespace();
    let (Some(n), Some(d), None) = (parts.next(), parts.next(), parts.next()) else {
        return Err(perr(1, format!("bad header {header:?}")));
    };
    let n: usize = n.parse().map_err(|_| perr(1, format!("bad row count {n:?}")))?;
    let dim: usize = d.parse().map_err(|_| perr(1, format!("bad dimension {d:?}")))?;
    if dim == 0 {
        return Err(perr(1, "dimension must be >= 1".into()));
    }
    let mut vocab = Vocab::default();
    let mut values = Vec::with_capacity(n * dim);
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        let line = line?;
        if line.is_empty() {
            continue;
        }
        if vocab.len() == n {
            return Err(perr(line_no, format!("more than {n} rows")));
        }
        let mut fields = line.split(' ');
        let tok = fields.next().unwrap_or_default();
        let node = NodeRef::parse_token(tok).ok_or_else(|| perr(line_no, format!("bad token {tok:?}")))?;
        if vocab.id(tok).is_some() {
            return Err(perr(line_no, format!("duplicate token {tok:?}")));
        }
        let before = values.len();
        for f in fields {
            values.push(f.parse::<f64>().map_err(|_| perr(line_no, format!("bad value {f:?}")))?);
        }
        if values.len() - before != dim {
            return Err(perr(line_no, format!("expected {dim} values, found {}", values.len() - before)));
        }
        vocab.push(tok.to_string(), 0, node.kind);
    }
    if vocab.len() != n {
        return Err(perr(n + 1, format!("header promises {n} rows, found {}", vocab.len())));
    }
    Ok((vocab, EmbeddingMatrix::from_input_rows(dim, values)))
}

pub fn load_embeddings(path: &Path) -> Result<(Vocab, EmbeddingMatrix), SgnsError> {
    read_embeddings(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn vocab_of(text: &str, min: u64) -> Vocab {
        Vocab::build(Cursor::new(text), min).unwrap()
    }

    #[test]
    fn vocab_counts_and_threshold() {
        let text = "a:x a:y\na:x a:y\na:x a:y\n";
        let v = vocab_of(text, 1);
        assert_eq!(v.len(), 2);
        assert_eq!(v.count(v.id("a:x").unwrap()), 3);
        assert_eq!(v.count(v.id("a:y").unwrap()), 3);
        assert!(vocab_of(text, 4).is_empty());
        assert!(vocab_of("", 1).is_empty());

        let v = vocab_of("r:r1 s:p1", 1);
        assert_eq!(v.names_of_type(NodeType::Subreddit), ["r1"]);
        assert_eq!(v.names_of_type(NodeType::Submission), ["p1"]);
        assert!(v.ids_of_type(NodeType::Author).is_empty());
    }

    #[test]
    fn vocab_rejects_untyped_token() {
        match Vocab::build(Cursor::new("a:x\nbogus"), 1) {
            Err(SgnsError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn negative_table_probabilities() {
        let v = Vocab::from_counts([("a:a".to_string(), 1), ("a:b".to_string(), 16)], 1).unwrap();
        let t = NegativeTable::build(&v, 0.75, SamplingMode::Mp2v).unwrap();
        assert!((t.probability(v.id("a:a").unwrap()) - 1.0 / 9.0).abs() < 1e-12);
        assert!((t.probability(v.id("a:b").unwrap()) - 8.0 / 9.0).abs() < 1e-12);

        let t = NegativeTable::build(&v, 1.0, SamplingMode::Mp2v).unwrap();
        assert!((t.probability(v.id("a:a").unwrap()) - 1.0 / 17.0).abs() < 1e-12);

        let single = Vocab::from_counts([("r:x".to_string(), 3)], 1).unwrap();
        let t = NegativeTable::build(&single, 0.75, SamplingMode::Mp2v).unwrap();
        let mut rng = seed::rng(3, &[]);
        assert!((0..50).all(|_| t.sample(NodeType::Author, &mut rng).unwrap() == 0));
    }

    #[test]
    fn per_type_pools() {
        let v = Vocab::from_counts(
            [("a:x".to_string(), 2), ("a:y".to_string(), 2), ("r:z".to_string(), 5)],
            1,
        )
        .unwrap();
        let t = NegativeTable::build(&v, 0.75, SamplingMode::Mp2vPp).unwrap();
        assert!((t.probability(v.id("r:z").unwrap()) - 1.0).abs() < 1e-12);
        assert!((t.probability(v.id("a:x").unwrap()) - 0.5).abs() < 1e-12);
        assert!(matches!(t.sample(NodeType::Comment, &mut seed::rng(0, &[])), Err(SgnsError::EmptyPool(_))));
        assert!(NegativeTable::build(&Vocab::default(), 0.75, SamplingMode::Mp2v).is_err());
    }

    #[test]
    fn softmax_at_zero_is_uniform() {
        let v = Vocab::from_counts([("a:a".into(), 1), ("a:b".into(), 1), ("a:c".into(), 1)], 1).unwrap();
        let e = EmbeddingMatrix::zeros(3, 4);
        for x in ["a:a", "a:b", "a:c"] {
            let p = softmax_prob(&v, &e, "a:a", x, SamplingMode::Mp2v).unwrap();
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
        assert!(softmax_prob(&v, &e, "a:a", "a:q", SamplingMode::Mp2v).is_err());
    }

    #[test]
    fn softmax_hand_value() {
        let v = Vocab::from_counts([("a:a".into(), 3), ("a:b".into(), 2), ("a:c".into(), 1)], 1).unwrap();
        let mut e = EmbeddingMatrix::zeros(3, 2);
        e.output_mut(0).copy_from_slice(&[1.0, 0.0]);
        e.output_mut(1).copy_from_slice(&[0.0, 1.0]);
        e.input_mut(0).copy_from_slice(&[1.0, 0.0]);
        let p = softmax_prob(&v, &e, "a:a", "a:a", SamplingMode::Mp2v).unwrap();
        let expect = std::f64::consts::E / (std::f64::consts::E + 2.0);
        assert!((p - expect).abs() < 1e-15);
        assert!((p - 0.5761).abs() < 1e-4);
    }

    #[test]
    fn zero_vectors_loss_and_noop() {
        let mut e = EmbeddingMatrix::zeros(7, 4);
        let before = e.clone();
        let loss = sgns_pair_update(&mut e, 0, 1, &[2, 3, 4, 5, 6], 0.1).unwrap();
        assert!((loss - 6.0 * std::f64::consts::LN_2).abs() < 1e-12);
        assert_eq!(e, before);
    }

    #[test]
    fn saturated_context_term_vanishes() {
        assert!(neg_log_sigmoid(800.0) < 1e-300);
        assert!((neg_log_sigmoid(-800.0) - 800.0).abs() < 1e-9);
        let mut e = EmbeddingMatrix::zeros(2, 1);
        e.input_mut(0)[0] = 1e3;
        e.output_mut(1)[0] = 1e3;
        let loss = sgns_pair_update(&mut e, 0, 1, &[], 1e-9).unwrap();
        assert!(loss < 1e-300);
    }

    #[test]
    fn non_finite_is_reported() {
        let mut e = EmbeddingMatrix::zeros(2, 1);
        e.input_mut(0)[0] = f64::INFINITY;
        e.output_mut(1)[0] = 1.0;
        assert!(matches!(sgns_pair_update(&mut e, 0, 1, &[], 0.1), Err(SgnsError::NonFinite { .. })));
    }

    #[test]
    fn pair_count() {
        assert_eq!(pairs_in_line(0, 3), 0);
        assert_eq!(pairs_in_line(1, 3), 0);
        assert_eq!(pairs_in_line(2, 3), 2);
        // brute force
        let (n, w) = (9usize, 2usize);
        let brute = (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .filter(|&(i, j)| i != j && i.abs_diff(j) <= w)
            .count() as u64;
        assert_eq!(pairs_in_line(n, w), brute);
    }

    #[test]
    fn embedding_file_errors() {
        let bad = "2 4\na:x 1 2 3 4\na:y 1 2 3 4\na:z 1 2 3 4\n";
        assert!(matches!(read_embeddings(Cursor::new(bad)), Err(SgnsError::Parse { .. })));
        let ragged = "2 2\na:x 1 2\na:y 1\n";
        assert!(read_embeddings(Cursor::new(ragged)).is_err());
        let short = "3 2\na:x 1 2\n";
        assert!(read_embeddings(Cursor::new(short)).is_err());
        let mut buf = Vec::new();
        write_embeddings(&mut buf, &Vocab::default(), &EmbeddingMatrix::zeros(0, 5)).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "0 5\n");
        let (v, e) = read_embeddings(Cursor::new(buf)).unwrap();
        assert!(v.is_empty());
        assert_eq!(e.dim(), 5);
    }
}
