//! Text preprocessing and paragraph-vector training (DBOW and DMM).
//!
//! Both variants share the negative-sampling kernel of [`crate::sgns`].
//! DBOW predicts each word of a document from each of the document's tag
//! vectors. DMM predicts the word at each position from the average of the
//! tag vectors and the input vectors of the surrounding words.
//!
//! DMM updates follow the word2vec CBOW-mean convention: every averaged
//! constituent receives the full input-side step, not `1/count` of it. The
//! exact gradient (which does carry the `1/count`) is exposed through
//! [`dmm_loss_grad`]; applying it literally leaves tag vectors almost frozen
//! at typical window sizes.

use std::collections::{BTreeSet, HashMap};
use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};

use thiserror::Error;

use crate::hetgraph::DocumentRecord;
use crate::seed;
use crate::sgns::{decayed_lr, ns_loss_grad, ns_step, ns_update_outputs, NegativeTable, Scratch, SgnsError, SharedTable};

pub const NUM_TOKEN: &str = "<num>";
pub const URL_TOKEN: &str = "<www>";

#[derive(Debug, Error)]
pub enum DocError {
    #[error("no in-vocabulary words after min_count filtering")]
    EmptyVocab,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Sgns(#[from] SgnsError),
    #[error("model file line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

fn is_url(tok: &str) -> bool {
    tok.starts_with("http://") || tok.starts_with("https://") || tok.starts_with("www.")
}

fn is_number(tok: &str) -> bool {
    tok.bytes().any(|b| b.is_ascii_digit()) && tok.bytes().all(|b| b.is_ascii_digit() || b.is_ascii_punctuation())
}

fn trim_edges(tok: &str) -> &str {
    tok.trim_matches(|c: char| !c.is_ascii_alphanumeric())
}

/// Tokenizes raw text.
///
/// Text is folded to lowercase ASCII and split on whitespace. URLs become
/// `<www>`, tokens made only of digits and punctuation become `<num>`,
/// slash-joined words are split, and punctuation is stripped from token
/// edges.
pub fn preprocess(text: &str) -> Vec<String> {
    let folded = deunicode::deunicode(text).to_ascii_lowercase();
    let mut out = Vec::new();
    for raw in folded.split_whitespace() {
        let bare = raw.trim_matches(|c: char| !c.is_ascii_alphanumeric() && c != '<' && c != '>');
        if bare == NUM_TOKEN || bare == URL_TOKEN {
            out.push(bare.to_string());
            continue;
        }
        let tok = trim_edges(raw);
        if is_url(tok) {
            out.push(URL_TOKEN.to_string());
            continue;
        }
        for part in tok.split('/') {
            let part = trim_edges(part);
            if part.is_empty() {
                continue;
            }
            if is_url(part) {
                out.push(URL_TOKEN.to_string());
            } else if is_number(part) {
                out.push(NUM_TOKEN.to_string());
            } else {
                out.push(part.to_string());
            }
        }
    }
    out
}

/// Word tokens plus tag strings (`d:<id>`, `a:<author>`, `r:<subreddit>`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaggedDocument {
    pub tokens: Vec<String>,
    pub tags: Vec<String>,
}

/// Preprocesses documents and attaches document, author and subreddit tags.
/// Returns the tagged documents and the number excluded for having no tokens.
pub fn tag_documents(records: &[DocumentRecord]) -> (Vec<TaggedDocument>, usize) {
    let mut docs = Vec::with_capacity(records.len());
    let mut excluded = 0;
    for r in records {
        let tokens = preprocess(&r.text);
        if tokens.is_empty() {
            excluded += 1;
            continue;
        }
        docs.push(TaggedDocument {
            tokens,
            tags: vec![format!("d:{}", r.id), format!("a:{}", r.author), format!("r:{}", r.subreddit)],
        });
    }
    (docs, excluded)
}

/// Reads line-delimited `{"id","author","subreddit","text"}` records.
pub fn read_documents(path: &Path) -> Result<Vec<DocumentRecord>, DocError> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| DocError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn write_documents(path: &Path, docs: &[DocumentRecord]) -> Result<(), DocError> {
    let mut w = BufWriter::new(File::create(path)?);
    for d in docs {
        serde_json::to_writer(&mut w, d).map_err(io::Error::from)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Word vocabulary; ids ordered by descending count, then word.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WordVocab {
    words: Vec<String>,
    counts: Vec<u64>,
    index: HashMap<String, u32>,
}

impl WordVocab {
    pub fn build<'a, I>(docs: I, min_count: u64) -> WordVocab
    where
        I: IntoIterator<Item = &'a TaggedDocument>,
    {
        let mut counts: HashMap<&str, u64> = HashMap::new();
        for d in docs {
            for t in &d.tokens {
                *counts.entry(t.as_str()).or_insert(0) += 1;
            }
        }
        let mut entries: Vec<(&str, u64)> = counts.into_iter().filter(|&(_, c)| c >= min_count).collect();
        entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        Self::from_entries(entries.into_iter().map(|(w, c)| (w.to_string(), c)))
    }

    fn from_entries<I: IntoIterator<Item = (String, u64)>>(entries: I) -> WordVocab {
        let mut v = WordVocab::default();
        for (w, c) in entries {
            v.index.insert(w.clone(), v.words.len() as u32);
            v.words.push(w);
            v.counts.push(c);
        }
        v
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn id(&self, word: &str) -> Option<u32> {
        self.index.get(word).copied()
    }

    pub fn word(&self, id: u32) -> &str {
        &self.words[id as usize]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn encode(&self, tokens: &[String]) -> Vec<u32> {
        tokens.iter().filter_map(|t| self.id(t)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DocVariant {
    Dbow,
    Dmm,
}

impl FromStr for DocVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "dbow" => Ok(DocVariant::Dbow),
            "dmm" | "dm" => Ok(DocVariant::Dmm),
            other => Err(format!("unknown doc variant {other:?} (expected dbow or dmm)")),
        }
    }
}

impl std::fmt::Display for DocVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DocVariant::Dbow => "dbow",
            DocVariant::Dmm => "dmm",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DocConfig {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub min_count: u64,
    pub epochs: usize,
    pub initial_lr: f64,
    pub min_lr: f64,
    pub unigram_power: f64,
    pub infer_epochs: usize,
    pub rng_seed: u64,
    pub workers: usize,
}

impl Default for DocConfig {
    fn default() -> Self {
        DocConfig {
            dim: 50,
            window: 10,
            negatives: 5,
            min_count: 2,
            epochs: 20,
            initial_lr: 0.025,
            min_lr: 0.0001,
            unigram_power: 0.75,
            infer_epochs: 50,
            rng_seed: 1,
            workers: 1,
        }
    }
}

impl DocConfig {
    pub fn validate(&self) -> Result<(), DocError> {
        if self.dim < 1 || self.window < 1 || self.negatives < 1 {
            return Err(DocError::Config("dim, window and negatives must be >= 1".into()));
        }
        if !(self.initial_lr > self.min_lr && self.min_lr >= 0.0) {
            return Err(DocError::Config("need initial_lr > min_lr >= 0".into()));
        }
        Ok(())
    }
}

/// A trained paragraph-vector model.
#[derive(Debug, Clone)]
pub struct DocModel {
    pub variant: DocVariant,
    pub config: DocConfig,
    words: WordVocab,
    tags: Vec<String>,
    tag_index: HashMap<String, u32>,
    tag_vectors: Vec<f64>,
    /// Empty for DBOW.
    word_input: Vec<f64>,
    word_output: Vec<f64>,
    negatives: NegativeTable,
    pub epoch_losses: Vec<f64>,
}

fn uniform_rows<R: rand::Rng>(rows: usize, dim: usize, rng: &mut R) -> Vec<f64> {
    let half = 0.5 / dim as f64;
    (0..rows * dim).map(|_| rng.gen_range(-half..=half)).collect()
}

impl DocModel {
    pub fn dim(&self) -> usize {
        self.config.dim
    }

    pub fn words(&self) -> &WordVocab {
        &self.words
    }

    pub fn tags(&self) -> &[String] {
        &self.tags
    }

    pub fn tag_id(&self, tag: &str) -> Option<u32> {
        self.tag_index.get(tag).copied()
    }

    pub fn tag_vector(&self, tag: &str) -> Option<&[f64]> {
        self.tag_id(tag).map(|i| self.tag_row(i))
    }

    pub fn tag_row(&self, id: u32) -> &[f64] {
        let d = self.dim();
        &self.tag_vectors[id as usize * d..(id as usize + 1) * d]
    }

    pub fn tag_table(&self) -> &[f64] {
        &self.tag_vectors
    }

    pub fn word_input(&self, word: &str) -> Option<&[f64]> {
        let d = self.dim();
        let id = self.words.id(word)? as usize;
        self.word_input.get(id * d..(id + 1) * d)
    }

    pub fn word_output(&self, word: &str) -> Option<&[f64]> {
        let d = self.dim();
        let id = self.words.id(word)? as usize;
        self.word_output.get(id * d..(id + 1) * d)
    }

    pub fn is_finite(&self) -> bool {
        self.tag_vectors
            .iter()
            .chain(&self.word_input)
            .chain(&self.word_output)
            .all(|v| v.is_finite())
    }

    fn new_untrained(variant: DocVariant, config: DocConfig, words: WordVocab, tags: Vec<String>) -> Result<Self, DocError> {
        let dim = config.dim;
        let mut rng = seed::rng(config.rng_seed, &[0xd0c]);
        let tag_vectors = uniform_rows(tags.len(), dim, &mut rng);
        let word_input = match variant {
            DocVariant::Dbow => Vec::new(),
            DocVariant::Dmm => uniform_rows(words.len(), dim, &mut rng),
        };
        let word_output = vec![0.0; words.len() * dim];
        let negatives = NegativeTable::global(words.counts(), config.unigram_power)?;
        let tag_index = tags.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
        Ok(DocModel {
            variant,
            config,
            words,
            tags,
            tag_index,
            tag_vectors,
            word_input,
            word_output,
            negatives,
            epoch_losses: Vec::new(),
        })
    }
}

pub fn train_dbow(docs: &[TaggedDocument], cfg: &DocConfig) -> Result<DocModel, DocError> {
    train_doc_model(docs, cfg, DocVariant::Dbow)
}

pub fn train_dmm(docs: &[TaggedDocument], cfg: &DocConfig) -> Result<DocModel, DocError> {
    train_doc_model(docs, cfg, DocVariant::Dmm)
}

struct Encoded {
    words: Vec<u32>,
    tags: Vec<u32>,
}

struct DocCtx<'a> {
    variant: DocVariant,
    cfg: &'a DocConfig,
    table: &'a NegativeTable,
    tags: SharedTable,
    word_in: SharedTable,
    word_out: SharedTable,
    done: &'a AtomicU64,
    total: u64,
}

/// Averages tag rows and context-word input rows into `h`.
fn mean_context(tag_rows: &[&[f64]], word_rows: &[&[f64]], h: &mut [f64]) -> f64 {
    h.iter_mut().for_each(|x| *x = 0.0);
    for row in tag_rows.iter().chain(word_rows) {
        for (a, b) in h.iter_mut().zip(row.iter()) {
            *a += b;
        }
    }
    let n = (tag_rows.len() + word_rows.len()) as f64;
    h.iter_mut().for_each(|x| *x /= n);
    n
}

/// Loss and input-side step `-lr·∂L/∂h` for one DMM position. `h` holds the
/// context mean; the caller adds `delta` to every constituent and, when
/// training, applies the output update from `scratch`.
fn dmm_position(
    h: &[f64],
    delta: &mut [f64],
    outputs: &[f64],
    target: u32,
    negs: &[u32],
    lr: f64,
    scratch: &mut Scratch,
) -> Result<f64, DocError> {
    let loss = ns_loss_grad(h, outputs, target, negs, scratch)?;
    for (d, g) in delta.iter_mut().zip(&scratch.grad) {
        *d = -lr * g;
    }
    Ok(loss)
}

fn draw_negatives<R: rand::Rng>(table: &NegativeTable, positive: u32, n: usize, rng: &mut R, out: &mut Vec<u32>) -> Result<(), DocError> {
    out.clear();
    for _ in 0..n {
        // word pools are untyped; the kind argument is ignored by a global table
        let id = table.sample(crate::hetgraph::NodeType::Author, rng)?;
        if id != positive {
            out.push(id);
        }
    }
    Ok(())
}

fn doc_worker(ctx: &DocCtx<'_>, docs: &[Encoded], epoch: usize, worker: usize, workers: usize) -> Result<(f64, u64), DocError> {
    let cfg = ctx.cfg;
    let dim = cfg.dim;
    let mut rng = seed::rng(cfg.rng_seed, &[0xe9, epoch as u64, worker as u64]);
    let mut scratch = Scratch::default();
    let mut negs = Vec::with_capacity(cfg.negatives);
    let mut h = vec![0.0; dim];
    let mut delta = vec![0.0; dim];
    let (mut loss, mut events) = (0.0, 0u64);
    for (di, doc) in docs.iter().enumerate() {
        if di % workers != worker {
            continue;
        }
        let n = doc.words.len();
        for i in 0..n {
            let lr = decayed_lr(cfg.initial_lr, cfg.min_lr, ctx.done.fetch_add(1, Ordering::Relaxed), ctx.total);
            let target = doc.words[i];
            match ctx.variant {
                DocVariant::Dbow => {
                    for &t in &doc.tags {
                        draw_negatives(ctx.table, target, cfg.negatives, &mut rng, &mut negs)?;
                        // SAFETY: tag and word-output tables are distinct allocations.
                        loss += unsafe { ns_step(ctx.tags.row(t, dim), ctx.word_out.all(), target, &negs, lr, &mut scratch)? };
                        events += 1;
                    }
                }
                DocVariant::Dmm => {
                    let lo = i.saturating_sub(cfg.window);
                    let hi = (i + cfg.window).min(n - 1);
                    // SAFETY: rows are only read here; racy reads are tolerated.
                    unsafe {
                        let tag_rows: Vec<&[f64]> = doc.tags.iter().map(|&t| &*ctx.tags.row(t, dim)).collect();
                        let word_rows: Vec<&[f64]> = (lo..=hi)
                            .filter(|&j| j != i)
                            .map(|j| &*ctx.word_in.row(doc.words[j], dim))
                            .collect();
                        mean_context(&tag_rows, &word_rows, &mut h);
                    }
                    draw_negatives(ctx.table, target, cfg.negatives, &mut rng, &mut negs)?;
                    // SAFETY: see SharedTable.
                    unsafe {
                        let out = ctx.word_out.all();
                        loss += dmm_position(&h, &mut delta, out, target, &negs, lr, &mut scratch)?;
                        ns_update_outputs(&h, out, target, &negs, lr, &scratch);
                    }
                    events += 1;
                    unsafe {
                        for &t in &doc.tags {
                            for (x, s) in ctx.tags.row(t, dim).iter_mut().zip(&delta) {
                                *x += s;
                            }
                        }
                        for j in (lo..=hi).filter(|&j| j != i) {
                            for (x, s) in ctx.word_in.row(doc.words[j], dim).iter_mut().zip(&delta) {
                                *x += s;
                            }
                        }
                    }
                }
            }
        }
    }
    Ok((loss, events))
}

fn train_doc_model(docs: &[TaggedDocument], cfg: &DocConfig, variant: DocVariant) -> Result<DocModel, DocError> {
    cfg.validate()?;
    let words = WordVocab::build(docs, cfg.min_count);
    if words.is_empty() {
        return Err(DocError::EmptyVocab);
    }
    let tags: Vec<String> = docs
        .iter()
        .flat_map(|d| d.tags.iter().cloned())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut model = DocModel::new_untrained(variant, cfg.clone(), words, tags)?;
    let encoded: Vec<Encoded> = docs
        .iter()
        .map(|d| Encoded {
            words: model.words.encode(&d.tokens),
            tags: d.tags.iter().map(|t| model.tag_index[t]).collect(),
        })
        .collect();
    let per_epoch: u64 = encoded.iter().map(|e| e.words.len() as u64).sum();
    let total = per_epoch * cfg.epochs as u64;
    let done = AtomicU64::new(0);
    let workers = cfg.workers.max(1);
    let table = model.negatives.clone();
    let mut losses = Vec::with_capacity(cfg.epochs);
    {
        let ctx = DocCtx {
            variant,
            cfg,
            table: &table,
            tags: SharedTable::new(&mut model.tag_vectors),
            word_in: SharedTable::new(&mut model.word_input),
            word_out: SharedTable::new(&mut model.word_output),
            done: &done,
            total,
        };
        for epoch in 0..cfg.epochs {
            let results: Vec<Result<(f64, u64), DocError>> = if workers == 1 {
                vec![doc_worker(&ctx, &encoded, epoch, 0, 1)]
            } else {
                std::thread::scope(|s| {
                    let handles: Vec<_> = (0..workers)
                        .map(|w| {
                            let (ctx, encoded) = (&ctx, &encoded);
                            s.spawn(move || doc_worker(ctx, encoded, epoch, w, workers))
                        })
                        .collect();
                    handles.into_iter().map(|h| h.join().expect("doc worker panicked")).collect()
                })
            };
            let (mut loss, mut events) = (0.0, 0u64);
            for r in results {
                let (l, e) = r?;
                loss += l;
                events += e;
            }
            losses.push(if events == 0 { 0.0 } else { loss / events as f64 });
        }
    }
    model.epoch_losses = losses;
    if !model.is_finite() {
        return Err(DocError::Sgns(SgnsError::NonFinite { score: f64::NAN }));
    }
    Ok(model)
}

/// Outcome of inferring a vector for unseen text.
#[derive(Debug, Clone, PartialEq)]
pub struct Inferred {
    pub vector: Vec<f64>,
    /// Number of tokens that were in the model vocabulary.
    pub in_vocab: usize,
}

/// Learns a fresh tag vector for `tokens` with all word tables frozen.
pub fn infer_vector(model: &DocModel, tokens: &[String], infer_epochs: usize, rng_seed: u64) -> Inferred {
    let cfg = &model.config;
    let dim = cfg.dim;
    let mut rng = seed::rng(rng_seed, &[0x1f]);
    let mut vector = uniform_rows(1, dim, &mut rng);
    let ids = model.words.encode(tokens);
    if ids.is_empty() {
        log::warn!("no in-vocabulary tokens; returning the initialization vector");
        return Inferred { vector, in_vocab: 0 };
    }
    let mut scratch = Scratch::default();
    let mut negs = Vec::with_capacity(cfg.negatives);
    let mut h = vec![0.0; dim];
    let mut delta = vec![0.0; dim];
    let total = (ids.len() * infer_epochs) as u64;
    let mut done = 0u64;
    for _ in 0..infer_epochs {
        for i in 0..ids.len() {
            let lr = decayed_lr(cfg.initial_lr, cfg.min_lr, done, total);
            done += 1;
            let target = ids[i];
            if draw_negatives(&model.negatives, target, cfg.negatives, &mut rng, &mut negs).is_err() {
                continue;
            }
            match model.variant {
                DocVariant::Dbow => {
                    if ns_loss_grad(&vector, &model.word_output, target, &negs, &mut scratch).is_ok() {
                        for (v, g) in vector.iter_mut().zip(&scratch.grad) {
                            *v -= lr * g;
                        }
                    }
                }
                DocVariant::Dmm => {
                    let lo = i.saturating_sub(cfg.window);
                    let hi = (i + cfg.window).min(ids.len() - 1);
                    let word_rows: Vec<&[f64]> = (lo..=hi)
                        .filter(|&j| j != i)
                        .map(|j| &model.word_input[ids[j] as usize * dim..(ids[j] as usize + 1) * dim])
                        .collect();
                    mean_context(&[&vector], &word_rows, &mut h);
                    if dmm_position(&h, &mut delta, &model.word_output, target, &negs, lr, &mut scratch).is_ok() {
                        for (v, d) in vector.iter_mut().zip(&delta) {
                            *v += d;
                        }
                    }
                }
            }
        }
    }
    Inferred {
        vector,
        in_vocab: ids.len(),
    }
}

/// DBOW half first.
pub fn concat_doc_vectors(dbow: &[f64], dmm: &[f64]) -> Vec<f64> {
    let mut v = Vec::with_capacity(dbow.len() + dmm.len());
    v.extend_from_slice(dbow);
    v.extend_from_slice(dmm);
    v
}

const MODEL_FILE: &str = "model.txt";

fn write_rows<W: Write>(w: &mut W, header: &str, names: &[String], table: &[f64], dim: usize) -> io::Result<()> {
    let rows = if dim == 0 { 0 } else { table.len() / dim };
    writeln!(w, "{header} {rows} {dim}")?;
    for r in 0..rows {
        w.write_all(names[r].as_bytes())?;
        for v in &table[r * dim..(r + 1) * dim] {
            write!(w, " {v}")?;
        }
        w.write_all(b"\n")?;
    }
    Ok(())
}

impl DocModel {
    /// Writes the sectioned text model (`VOCAB`, `WORDS-IN`, `WORDS-OUT`,
    /// `TAGS`) to `model.txt` inside `dir`.
    pub fn save(&self, dir: &Path) -> Result<(), DocError> {
        fs::create_dir_all(dir)?;
        let mut w = BufWriter::new(File::create(dir.join(MODEL_FILE))?);
        self.write(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn write<W: Write>(&self, w: &mut W) -> io::Result<()> {
        let c = &self.config;
        writeln!(w, "DOCMODEL {} {}", self.variant, c.dim)?;
        writeln!(
            w,
            "CONFIG window={} negatives={} min_count={} epochs={} initial_lr={} min_lr={} unigram_power={} infer_epochs={} seed={}",
            c.window, c.negatives, c.min_count, c.epochs, c.initial_lr, c.min_lr, c.unigram_power, c.infer_epochs, c.rng_seed
        )?;
        writeln!(w, "VOCAB {}", self.words.len())?;
        for (word, count) in self.words.words.iter().zip(&self.words.counts) {
            writeln!(w, "{word} {count}")?;
        }
        write_rows(w, "WORDS-IN", &self.words.words, &self.word_input, c.dim)?;
        write_rows(w, "WORDS-OUT", &self.words.words, &self.word_output, c.dim)?;
        write_rows(w, "TAGS", &self.tags, &self.tag_vectors, c.dim)
    }

    pub fn load(dir: &Path) -> Result<DocModel, DocError> {
        DocModel::read(BufReader::new(File::open(dir.join(MODEL_FILE))?))
    }

    pub fn read<R: BufRead>(reader: R) -> Result<DocModel, DocError> {
        let mut lines = reader.lines().enumerate().map(|(i, l)| (i + 1, l));
        let mut next = |what: &str| -> Result<(usize, String), DocError> {
            match lines.next() {
                Some((n, l)) => Ok((n, l?)),
                None => Err(DocError::Parse {
                    line: 0,
                    message: format!("unexpected end of file, expected {what}"),
                }),
            }
        };
        let perr = |line: usize, message: String| DocError::Parse { line, message };

        let (n, head) = next("header")?;
        let parts: Vec<&str> = head.split(' ').collect();
        if parts.len() != 3 || parts[0] != "DOCMODEL" {
            return Err(perr(n, format!("bad header {head:?}")));
        }
        let variant: DocVariant = parts[1].parse().map_err(|e| perr(n, e))?;
        let dim: usize = parts[2].parse().map_err(|_| perr(n, "bad dimension".into()))?;

        let (n, conf) = next("CONFIG")?;
        let mut config = DocConfig {
            dim,
            ..DocConfig::default()
        };
        let body = conf.strip_prefix("CONFIG ").ok_or_else(|| perr(n, "expected CONFIG".into()))?;
        for kv in body.split(' ') {
            let (k, v) = kv.split_once('=').ok_or_else(|| perr(n, format!("bad entry {kv:?}")))?;
            let bad = |_| perr(n, format!("bad value for {k}"));
            match k {
                "window" => config.window = v.parse().map_err(bad)?,
                "negatives" => config.negatives = v.parse().map_err(bad)?,
                "min_count" => config.min_count = v.parse().map_err(bad)?,
                "epochs" => config.epochs = v.parse().map_err(bad)?,
                "infer_epochs" => config.infer_epochs = v.parse().map_err(bad)?,
                "seed" => config.rng_seed = v.parse().map_err(bad)?,
                "initial_lr" => config.initial_lr = v.parse().map_err(|_| perr(n, "bad initial_lr".into()))?,
                "min_lr" => config.min_lr = v.parse().map_err(|_| perr(n, "bad min_lr".into()))?,
                "unigram_power" => config.unigram_power = v.parse().map_err(|_| perr(n, "bad unigram_power".into()))?,
                _ => return Err(perr(n, format!("unknown config key {k}"))),
            }
        }

        let (n, vh) = next("VOCAB")?;
        let nv: usize = vh
            .strip_prefix("VOCAB ")
            .and_then(|x| x.parse().ok())
            .ok_or_else(|| perr(n, "expected VOCAB <n>".into()))?;
        let mut entries = Vec::with_capacity(nv);
        for _ in 0..nv {
            let (n, l) = next("vocab entry")?;
            let (w, c) = l.rsplit_once(' ').ok_or_else(|| perr(n, "bad vocab entry".into()))?;
            entries.push((w.to_string(), c.parse().map_err(|_| perr(n, "bad count".into()))?));
        }
        let words = WordVocab::from_entries(entries);

        let mut section = |name: &str| -> Result<(Vec<String>, Vec<f64>), DocError> {
            let (n, h) = next(name)?;
            let p: Vec<&str> = h.split(' ').collect();
            if p.len() != 3 || p[0] != name {
                return Err(perr(n, format!("expected {name} header, found {h:?}")));
            }
            let rows: usize = p[1].parse().map_err(|_| perr(n, "bad row count".into()))?;
            if p[2] != dim.to_string() {
                return Err(perr(n, "section dimension mismatch".into()));
            }
            let mut names = Vec::with_capacity(rows);
            let mut vals = Vec::with_capacity(rows * dim);
            for _ in 0..rows {
                let (n, l) = next("row")?;
                let mut f = l.split(' ');
                names.push(f.next().unwrap_or_default().to_string());
                let before = vals.len();
                for x in f {
                    vals.push(x.parse::<f64>().map_err(|_| perr(n, format!("bad value {x:?}")))?);
                }
                if vals.len() - before != dim {
                    return Err(perr(n, "ragged row".into()));
                }
            }
            Ok((names, vals))
        };
        let (in_names, word_input) = section("WORDS-IN")?;
        let (out_names, word_output) = section("WORDS-OUT")?;
        let (tags, tag_vectors) = section("TAGS")?;
        if out_names != words.words || (!in_names.is_empty() && in_names != words.words) {
            return Err(perr(0, "word sections disagree with VOCAB".into()));
        }
        if (variant == DocVariant::Dmm) == in_names.is_empty() && !words.is_empty() {
            return Err(perr(0, "WORDS-IN presence does not match variant".into()));
        }
        let mut model = DocModel::new_untrained(variant, config, words, tags)?;
        model.tag_vectors = tag_vectors;
        model.word_input = word_input;
        model.word_output = word_output;
        Ok(model)
    }
}

/// DMM loss at one position and its exact gradient with respect to each
/// averaged constituent (identical for all of them: `∂L/∂h / count`).
pub fn dmm_loss_grad(tag_rows: &[Vec<f64>], word_rows: &[Vec<f64>], outputs: &[f64], target: u32, negs: &[u32]) -> Result<(f64, Vec<f64>), DocError> {
    let dim = tag_rows.iter().chain(word_rows).next().map_or(0, |r| r.len());
    let t: Vec<&[f64]> = tag_rows.iter().map(|r| r.as_slice()).collect();
    let w: Vec<&[f64]> = word_rows.iter().map(|r| r.as_slice()).collect();
    let mut h = vec![0.0; dim];
    let count = mean_context(&t, &w, &mut h);
    let mut scratch = Scratch::default();
    let loss = ns_loss_grad(&h, outputs, target, negs, &mut scratch)?;
    Ok((loss, scratch.grad.iter().map(|g| g / count).collect()))
}

/// One DMM training step on explicit rows, as the trainer applies it.
/// Returns the pre-update loss.
pub fn dmm_step(tag_rows: &mut [Vec<f64>], word_rows: &mut [Vec<f64>], outputs: &mut [f64], target: u32, negs: &[u32], lr: f64) -> Result<f64, DocError> {
    let dim = tag_rows.iter().chain(word_rows.iter()).next().map_or(0, |r| r.len());
    let mut h = vec![0.0; dim];
    {
        let t: Vec<&[f64]> = tag_rows.iter().map(|r| r.as_slice()).collect();
        let w: Vec<&[f64]> = word_rows.iter().map(|r| r.as_slice()).collect();
        mean_context(&t, &w, &mut h);
    }
    let mut delta = vec![0.0; dim];
    let mut scratch = Scratch::default();
    let loss = dmm_position(&h, &mut delta, outputs, target, negs, lr, &mut scratch)?;
    ns_update_outputs(&h, outputs, target, negs, lr, &scratch);
    for row in tag_rows.iter_mut().chain(word_rows.iter_mut()) {
        for (x, d) in row.iter_mut().zip(&delta) {
            *x += d;
        }
    }
    Ok(loss)
}
