//! Similarity queries, author-level similarity profiles, correlation
//! diagnostics and classifier feature tables.

use std::collections::BTreeMap;
use std::fmt;
use std::io;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use crate::docembed::{infer_vector, DocModel};
use crate::hetgraph::{NodeRef, NodeType};
use crate::seed;
use crate::sgns::{EmbeddingMatrix, Vocab};

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("vector length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("author {0} has no non-empty documents")]
    NoDocuments(String),
    #[error("correlation undefined: column {0:?} is constant")]
    ConstantColumn(String),
    #[error("correlation needs at least 2 rows of equal length")]
    TooFewRows,
    #[error("feature file: {0}")]
    Format(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Cosine similarity plus a flag set when either vector has zero norm (the
/// similarity is then 0).
pub fn cosine_flagged(a: &[f64], b: &[f64]) -> Result<(f64, bool), FeatureError> {
    if a.len() != b.len() {
        return Err(FeatureError::LengthMismatch(a.len(), b.len()));
    }
    let (na, nb) = (dot(a, a).sqrt(), dot(b, b).sqrt());
    if na == 0.0 || nb == 0.0 {
        return Ok((0.0, true));
    }
    Ok((dot(a, b) / (na * nb), false))
}

pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64, FeatureError> {
    cosine_flagged(a, b).map(|(c, _)| c)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Neighbor {
    pub id: u32,
    pub token: String,
    pub similarity: f64,
}

/// Exact top-k scan over the rows of `table` (row `i` = id `i`). Ties go to
/// the lower id.
pub fn rank_rows<F>(table: &[f64], dim: usize, query: u32, k: usize, mut keep: F) -> Vec<(u32, f64)>
where
    F: FnMut(u32) -> bool,
{
    let q = &table[query as usize * dim..(query as usize + 1) * dim];
    let rows = table.len() / dim.max(1);
    let mut scored: Vec<(u32, f64)> = (0..rows as u32)
        .filter(|&i| i != query && keep(i))
        .map(|i| {
            let r = &table[i as usize * dim..(i as usize + 1) * dim];
            (i, cosine(q, r).unwrap_or(0.0))
        })
        .collect();
    // similarity descending, then id ascending
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored.truncate(k);
    scored
}

/// Nearest neighbours of `query` by input-vector cosine, optionally limited
/// to one node type.
pub fn nearest_neighbors(
    vocab: &Vocab,
    emb: &EmbeddingMatrix,
    query: &str,
    k: usize,
    type_filter: Option<NodeType>,
) -> Result<Vec<Neighbor>, FeatureError> {
    let q = vocab.id(query).ok_or_else(|| FeatureError::NotFound(query.to_string()))?;
    let ranked = rank_rows(emb.input_table(), emb.dim(), q, k, |i| type_filter.map_or(true, |t| vocab.kind(i) == t));
    Ok(ranked
        .into_iter()
        .map(|(id, similarity)| Neighbor {
            id,
            token: vocab.token(id).to_string(),
            similarity,
        })
        .collect())
}

/// Nearest tags of a document model (tags sorted, ids = positions), limited
/// to tags sharing `prefix` when given (e.g. `"r:"`).
pub fn nearest_tags(model: &DocModel, query: &str, k: usize, prefix: Option<&str>) -> Result<Vec<Neighbor>, FeatureError> {
    let q = model.tag_id(query).ok_or_else(|| FeatureError::NotFound(query.to_string()))?;
    let tags = model.tags();
    let ranked = rank_rows(model.tag_table(), model.dim(), q, k, |i| {
        prefix.map_or(true, |p| tags[i as usize].starts_with(p))
    });
    Ok(ranked
        .into_iter()
        .map(|(id, similarity)| Neighbor {
            id,
            token: tags[id as usize].clone(),
            similarity,
        })
        .collect())
}

/// Mean and population standard deviation. The values are summed in sorted
/// order so the result does not depend on input order.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityProfile {
    pub author: NodeRef,
    pub dbow_mean: f64,
    pub dbow_std: f64,
    pub dmm_mean: f64,
    pub dmm_std: f64,
    pub n_submissions: usize,
}

fn doc_seed(base: u64, tokens: &[String]) -> u64 {
    seed::derive(base, &[seed::hash_str(&tokens.join(" "))])
}

/// Infers DBOW and DMM vectors for each of an author's documents and
/// summarizes their cosine to `target_tag`.
///
/// Each document's inference seed depends only on `rng_seed` and the
/// document's tokens, so the profile is independent of document order.
pub fn author_target_similarity(
    dbow: &DocModel,
    dmm: &DocModel,
    author: &NodeRef,
    docs: &[Vec<String>],
    target_tag: &str,
    rng_seed: u64,
) -> Result<SimilarityProfile, FeatureError> {
    let t_dbow = dbow
        .tag_vector(target_tag)
        .ok_or_else(|| FeatureError::NotFound(format!("{target_tag} in DBOW model")))?;
    let t_dmm = dmm
        .tag_vector(target_tag)
        .ok_or_else(|| FeatureError::NotFound(format!("{target_tag} in DMM model")))?;
    let (mut s_dbow, mut s_dmm) = (Vec::new(), Vec::new());
    for doc in docs.iter().filter(|d| !d.is_empty()) {
        let s = doc_seed(rng_seed, doc);
        let v = infer_vector(dbow, doc, dbow.config.infer_epochs, s);
        s_dbow.push(cosine(&v.vector, t_dbow)?);
        let v = infer_vector(dmm, doc, dmm.config.infer_epochs, s);
        s_dmm.push(cosine(&v.vector, t_dmm)?);
    }
    if s_dbow.is_empty() {
        return Err(FeatureError::NoDocuments(author.to_string()));
    }
    Ok(profile_from_similarities(author.clone(), &s_dbow, &s_dmm))
}

pub fn profile_from_similarities(author: NodeRef, dbow: &[f64], dmm: &[f64]) -> SimilarityProfile {
    let (dbow_mean, dbow_std) = mean_std(dbow);
    let (dmm_mean, dmm_std) = mean_std(dmm);
    SimilarityProfile {
        author,
        dbow_mean,
        dbow_std,
        dmm_mean,
        dmm_std,
        n_submissions: dbow.len(),
    }
}

/// Profiles for many authors, split across `workers` threads. Authors with
/// no usable documents are skipped and returned separately.
pub fn author_profiles(
    dbow: &DocModel,
    dmm: &DocModel,
    docs_by_author: &BTreeMap<String, Vec<Vec<String>>>,
    target_tag: &str,
    rng_seed: u64,
    workers: usize,
) -> Result<(Vec<SimilarityProfile>, Vec<String>), FeatureError> {
    let entries: Vec<(&String, &Vec<Vec<String>>)> = docs_by_author.iter().collect();
    let chunk = entries.len().div_ceil(workers.max(1)).max(1);
    let run = |part: &[(&String, &Vec<Vec<String>>)]| -> Vec<Result<SimilarityProfile, FeatureError>> {
        part.iter()
            .map(|(name, docs)| {
                let s = seed::derive(rng_seed, &[seed::hash_str(name)]);
                author_target_similarity(dbow, dmm, &NodeRef::author(name.as_str()), docs, target_tag, s)
            })
            .collect()
    };
    let results: Vec<Result<SimilarityProfile, FeatureError>> = if workers <= 1 {
        run(&entries)
    } else {
        std::thread::scope(|s| {
            let handles: Vec<_> = entries.chunks(chunk).map(|part| s.spawn(move || run(part))).collect();
            handles
                .into_iter()
                .flat_map(|h| h.join().expect("profile worker panicked"))
                .collect()
        })
    };
    let (mut profiles, mut excluded) = (Vec::new(), Vec::new());
    for r in results {
        match r {
            Ok(p) => profiles.push(p),
            Err(FeatureError::NoDocuments(a)) => excluded.push(a),
            Err(e) => return Err(e),
        }
    }
    Ok((profiles, excluded))
}

pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    pub names: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

impl CorrelationMatrix {
    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        let i = self.names.iter().position(|n| n == a)?;
        let j = self.names.iter().position(|n| n == b)?;
        Some(self.values[i][j])
    }
}

impl fmt::Display for CorrelationMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:>12}", "")?;
        for n in &self.names {
            write!(f, " {n:>12}")?;
        }
        writeln!(f)?;
        for (n, row) in self.names.iter().zip(&self.values) {
            write!(f, "{n:>12}")?;
            for v in row {
                write!(f, " {v:>12.4}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// Pairwise Pearson correlations; symmetric with an exact unit diagonal.
pub fn pearson_matrix(columns: &[(String, Vec<f64>)]) -> Result<CorrelationMatrix, FeatureError> {
    let n = columns.first().map_or(0, |c| c.1.len());
    if n < 2 || columns.iter().any(|c| c.1.len() != n) {
        return Err(FeatureError::TooFewRows);
    }
    for (name, col) in columns {
        if col.iter().all(|v| *v == col[0]) {
            return Err(FeatureError::ConstantColumn(name.clone()));
        }
    }
    let k = columns.len();
    let mut values = vec![vec![1.0; k]; k];
    for i in 0..k {
        for j in i + 1..k {
            let r = pearson(&columns[i].1, &columns[j].1).ok_or_else(|| FeatureError::ConstantColumn(columns[j].0.clone()))?;
            values[i][j] = r;
            values[j][i] = r;
        }
    }
    Ok(CorrelationMatrix {
        names: columns.iter().map(|c| c.0.clone()).collect(),
        values,
    })
}

/// The similarity diagnostic table: graph similarity, both document
/// similarities and their elementwise mean (`d2v_mean`).
pub fn similarity_correlations(graph_sim: &[f64], dbow_mean: &[f64], dmm_mean: &[f64]) -> Result<CorrelationMatrix, FeatureError> {
    let d2v: Vec<f64> = dbow_mean.iter().zip(dmm_mean).map(|(a, b)| (a + b) / 2.0).collect();
    pearson_matrix(&[
        ("graph_sim".to_string(), graph_sim.to_vec()),
        ("dbow_mean".to_string(), dbow_mean.to_vec()),
        ("dmm_mean".to_string(), dmm_mean.to_vec()),
        ("d2v_mean".to_string(), d2v),
    ])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FeatureMode {
    GraphOnly,
    TextOnly,
    Integrated,
}

impl FeatureMode {
    pub const ALL: [FeatureMode; 3] = [FeatureMode::GraphOnly, FeatureMode::TextOnly, FeatureMode::Integrated];

    pub fn needs_graph(self) -> bool {
        self != FeatureMode::TextOnly
    }

    pub fn needs_text(self) -> bool {
        self != FeatureMode::GraphOnly
    }

    pub fn name(self) -> &'static str {
        match self {
            FeatureMode::GraphOnly => "graph_only",
            FeatureMode::TextOnly => "text_only",
            FeatureMode::Integrated => "integrated",
        }
    }
}

impl fmt::Display for FeatureMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FeatureMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "graph" | "graph_only" => Ok(FeatureMode::GraphOnly),
            "text" | "text_only" => Ok(FeatureMode::TextOnly),
            "integrated" | "both" => Ok(FeatureMode::Integrated),
            other => Err(format!("unknown feature mode {other:?} (expected graph, text or integrated)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub author: String,
    pub mode: FeatureMode,
    pub values: Vec<f64>,
    pub label: bool,
}

/// Builds one feature row. Returns `None` when the mode needs an input the
/// author lacks (the author is dropped).
pub fn assemble_features(
    author: &str,
    graph: Option<&[f64]>,
    profile: Option<&SimilarityProfile>,
    mode: FeatureMode,
    include_stds: bool,
    label: bool,
) -> Option<FeatureRow> {
    let mut values = Vec::new();
    if mode.needs_graph() {
        values.extend_from_slice(graph?);
    }
    if mode.needs_text() {
        let p = profile?;
        values.push(p.dbow_mean);
        values.push(p.dmm_mean);
        if include_stds {
            values.push(p.dbow_std);
            values.push(p.dmm_std);
        }
    }
    Some(FeatureRow {
        author: author.to_string(),
        mode,
        values,
        label,
    })
}

/// Inputs for a feature table: per-author graph vectors, profiles and labels.
pub struct FeatureInputs<'a> {
    pub vocab: &'a Vocab,
    pub emb: &'a EmbeddingMatrix,
    pub profiles: &'a BTreeMap<String, SimilarityProfile>,
    pub labels: &'a BTreeMap<String, bool>,
    pub include_stds: bool,
}

/// Feature rows for every labeled author, in author order, plus the number of
/// authors dropped for missing inputs.
pub fn assemble_table(inputs: &FeatureInputs<'_>, mode: FeatureMode) -> (Vec<FeatureRow>, usize) {
    let mut rows = Vec::new();
    let mut dropped = 0;
    for (author, &label) in inputs.labels {
        let graph = inputs
            .vocab
            .id(&NodeRef::author(author.as_str()).token())
            .map(|id| inputs.emb.input(id));
        match assemble_features(author, graph, inputs.profiles.get(author), mode, inputs.include_stds, label) {
            Some(r) => rows.push(r),
            None => dropped += 1,
        }
    }
    if dropped > 0 {
        log::info!("{mode}: dropped {dropped} authors without required inputs");
    }
    (rows, dropped)
}

fn value_columns(mode: FeatureMode, graph_dim: usize, include_stds: bool) -> Vec<String> {
    let mut cols = Vec::new();
    if mode.needs_graph() {
        cols.extend((0..graph_dim).map(|i| format!("g{i}")));
    }
    if mode.needs_text() {
        cols.push("dbow_mean".into());
        cols.push("dmm_mean".into());
        if include_stds {
            cols.push("dbow_std".into());
            cols.push("dmm_std".into());
        }
    }
    cols
}

/// Writes rows as CSV: `author`, value columns, `label` last. All rows must
/// share one mode; `include_stds` must match how they were assembled.
pub fn write_features<W: io::Write>(w: W, rows: &[FeatureRow], include_stds: bool) -> Result<(), FeatureError> {
    let mut out = csv::Writer::from_writer(w);
    let (mode, len) = rows.first().map_or((FeatureMode::GraphOnly, 0), |r| (r.mode, r.values.len()));
    let text = if !mode.needs_text() { 0 } else if include_stds { 4 } else { 2 };
    let cols = value_columns(mode, len.saturating_sub(text), include_stds);
    out.write_record(std::iter::once("author").chain(cols.iter().map(String::as_str)).chain(std::iter::once("label")))?;
    for r in rows {
        if r.mode != mode || r.values.len() != cols.len() {
            return Err(FeatureError::Format(format!("row for {} does not match the table layout", r.author)));
        }
        let mut rec = vec![r.author.clone()];
        rec.extend(r.values.iter().map(|v| v.to_string()));
        rec.push(u8::from(r.label).to_string());
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

pub fn save_features(path: &Path, rows: &[FeatureRow], include_stds: bool) -> Result<(), FeatureError> {
    write_features(std::fs::File::create(path)?, rows, include_stds)
}

/// Reads a feature CSV; the mode is recovered from the column names.
pub fn read_features<R: io::Read>(r: R) -> Result<Vec<FeatureRow>, FeatureError> {
    let mut rdr = csv::Reader::from_reader(r);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header.first().map(String::as_str) != Some("author") || header.last().map(String::as_str) != Some("label") {
        return Err(FeatureError::Format("header must start with author and end with label".into()));
    }
    let cols = &header[1..header.len() - 1];
    let graph = cols.iter().any(|c| c.starts_with('g'));
    let text = cols.iter().any(|c| c == "dbow_mean");
    let mode = match (graph, text) {
        (true, true) => FeatureMode::Integrated,
        (false, true) => FeatureMode::TextOnly,
        _ => FeatureMode::GraphOnly,
    };
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let bad = |what: &str| FeatureError::Format(format!("row {}: {what}", i + 2));
        let values = rec
            .iter()
            .skip(1)
            .take(cols.len())
            .map(|v| v.parse::<f64>().map_err(|_| bad("bad number")))
            .collect::<Result<Vec<_>, _>>()?;
        let label = match rec.get(header.len() - 1) {
            Some("1") => true,
            Some("0") => false,
            _ => return Err(bad("label must be 0 or 1")),
        };
        rows.push(FeatureRow {
            author: rec[0].to_string(),
            mode,
            values,
            label,
        });
    }
    Ok(rows)
}

pub fn load_features(path: &Path) -> Result<Vec<FeatureRow>, FeatureError> {
    read_features(std::fs::File::open(path)?)
}

/// Profile CSV: author, dbow_mean, dbow_std, dmm_mean, dmm_std, n.
pub fn write_profiles<W: io::Write>(w: W, profiles: &[SimilarityProfile]) -> Result<(), FeatureError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["author", "dbow_mean", "dbow_std", "dmm_mean", "dmm_std", "n"])?;
    for p in profiles {
        out.write_record([
            p.author.name.clone(),
            p.dbow_mean.to_string(),
            p.dbow_std.to_string(),
            p.dmm_mean.to_string(),
            p.dmm_std.to_string(),
            p.n_submissions.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_profiles<R: io::Read>(r: R) -> Result<Vec<SimilarityProfile>, FeatureError> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != 6 {
            return Err(FeatureError::Format(format!("profile row {} has {} fields", i + 2, rec.len())));
        }
        let num = |k: usize| -> Result<f64, FeatureError> {
            rec[k]
                .parse()
                .map_err(|_| FeatureError::Format(format!("profile row {}: bad number", i + 2)))
        };
        out.push(SimilarityProfile {
            author: NodeRef::author(&rec[0]),
            dbow_mean: num(1)?,
            dbow_std: num(2)?,
            dmm_mean: num(3)?,
            dmm_std: num(4)?,
            n_submissions: rec[5]
                .parse()
                .map_err(|_| FeatureError::Format(format!("profile row {}: bad count", i + 2)))?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!((cosine(&[1.0, 2.0], &[2.0, 4.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((cosine(&[3.0, 4.0], &[4.0, 3.0]).unwrap() - 0.96).abs() < 1e-15);
        assert_eq!(cosine_flagged(&[0.0, 0.0], &[1.0, 1.0]).unwrap(), (0.0, true));
        assert!(matches!(cosine(&[1.0], &[1.0, 2.0]), Err(FeatureError::LengthMismatch(1, 2))));
    }

    #[test]
    fn profile_hand_values() {
        let p = profile_from_similarities(NodeRef::author("a"), &[0.2, 0.4, 0.6], &[0.5]);
        assert!((p.dbow_mean - 0.4).abs() < 1e-12);
        assert!((p.dbow_std - (0.08f64 / 3.0).sqrt()).abs() < 1e-12);
        assert!((p.dbow_std - 0.1633).abs() < 1e-4);
        assert_eq!(p.dmm_std, 0.0);
        assert_eq!(p.n_submissions, 3);
    }

    #[test]
    fn pearson_examples() {
        let m = pearson_matrix(&[
            ("x".into(), vec![1.0, 2.0, 3.0]),
            ("y".into(), vec![2.0, 4.0, 6.0]),
            ("z".into(), vec![3.0, 2.0, 1.0]),
        ])
        .unwrap();
        assert!((m.get("x", "y").unwrap() - 1.0).abs() < 1e-15);
        assert!((m.get("x", "z").unwrap() + 1.0).abs() < 1e-15);
        assert_eq!(m.get("z", "z"), Some(1.0));
        let err = pearson_matrix(&[("x".into(), vec![1.0, 2.0]), ("c".into(), vec![5.0, 5.0])]).unwrap_err();
        assert!(matches!(err, FeatureError::ConstantColumn(ref c) if c == "c"));
        let m = similarity_correlations(&[0.1, 0.5, 0.2], &[1.0, 2.0, 4.0], &[1.0, 3.0, 3.0]).unwrap();
        assert_eq!(m.names, ["graph_sim", "dbow_mean", "dmm_mean", "d2v_mean"]);
    }

    fn profile(dbow: f64, dmm: f64) -> SimilarityProfile {
        profile_from_similarities(NodeRef::author("a"), &[dbow], &[dmm])
    }

    #[test]
    fn feature_lengths_and_order() {
        let g = [1.0, 2.0, 3.0, 4.0];
        let p = profile(0.3, 0.7);
        let r = assemble_features("a", Some(&g), Some(&p), FeatureMode::Integrated, false, true).unwrap();
        assert_eq!(r.values, vec![1.0, 2.0, 3.0, 4.0, 0.3, 0.7]);
        let r = assemble_features("a", None, Some(&p), FeatureMode::TextOnly, false, true).unwrap();
        assert_eq!(r.values.len(), 2);
        let r = assemble_features("a", None, Some(&p), FeatureMode::TextOnly, true, true).unwrap();
        assert_eq!(r.values.len(), 4);
        assert_eq!(assemble_features("a", Some(&[0.0; 128]), None, FeatureMode::GraphOnly, false, false).unwrap().values.len(), 128);
        assert!(assemble_features("a", None, Some(&p), FeatureMode::Integrated, false, true).is_none());
    }

    #[test]
    fn feature_csv_round_trip() {
        let p = profile(0.25, -0.5);
        for (mode, stds) in [(FeatureMode::GraphOnly, false), (FeatureMode::TextOnly, true), (FeatureMode::Integrated, false)] {
            let rows: Vec<FeatureRow> = ["a1", "a2"]
                .iter()
                .enumerate()
                .map(|(i, a)| assemble_features(a, Some(&[0.1 * i as f64, 1.0 / 3.0]), Some(&p), mode, stds, i == 0).unwrap())
                .collect();
            let mut buf = Vec::new();
            write_features(&mut buf, &rows, stds).unwrap();
            let text = String::from_utf8(buf.clone()).unwrap();
            assert!(text.lines().next().unwrap().ends_with(",label"));
            assert_eq!(read_features(&buf[..]).unwrap(), rows);
        }
        let mut buf = Vec::new();
        write_profiles(&mut buf, &[p.clone()]).unwrap();
        assert_eq!(read_profiles(&buf[..]).unwrap(), vec![p]);
    }
}
