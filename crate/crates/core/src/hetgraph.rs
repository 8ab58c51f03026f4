//! Typed heterogeneous graph of authors, submissions, comments and subreddits.
//!
//! The graph is built once from line-delimited JSON records and is immutable
//! afterwards. Node ids are dense and assigned by sorting on `(type, name)`,
//! so the same multiset of records always yields the same ids regardless of
//! input order. Adjacency is stored CSR-style with each node's neighbors
//! partitioned by [`NodeType`] and sorted by id.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{self, BufRead, Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

/// Author name that marks a removed account.
pub const DELETED_AUTHOR: &str = "[deleted]";

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: schema-illegal edge {src_type}-{dst_type}")]
    IllegalEdge {
        line: usize,
        src_type: NodeType,
        dst_type: NodeType,
    },
    #[error("unknown node {0}")]
    NotFound(NodeRef),
    #[error("bad snapshot: {0}")]
    Snapshot(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeType {
    Author,
    Submission,
    Comment,
    Subreddit,
}

impl NodeType {
    pub const ALL: [NodeType; 4] = [
        NodeType::Author,
        NodeType::Submission,
        NodeType::Comment,
        NodeType::Subreddit,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// One-letter prefix used in walk tokens (`a:`, `s:`, `c:`, `r:`).
    pub fn tag(self) -> char {
        match self {
            NodeType::Author => 'a',
            NodeType::Submission => 's',
            NodeType::Comment => 'c',
            NodeType::Subreddit => 'r',
        }
    }

    pub fn from_tag(tag: &str) -> Option<NodeType> {
        match tag {
            "a" => Some(NodeType::Author),
            "s" => Some(NodeType::Submission),
            "c" => Some(NodeType::Comment),
            "r" => Some(NodeType::Subreddit),
            _ => None,
        }
    }

    fn from_u8(v: u8) -> Option<NodeType> {
        NodeType::ALL.get(v as usize).copied()
    }

    /// Whether an edge between the two types exists in the schema.
    pub fn is_legal_edge(a: NodeType, b: NodeType) -> bool {
        use NodeType::*;
        matches!(
            (a, b),
            (Author, Submission)
                | (Submission, Author)
                | (Author, Comment)
                | (Comment, Author)
                | (Comment, Submission)
                | (Submission, Comment)
                | (Submission, Subreddit)
                | (Subreddit, Submission)
        )
    }
}

impl fmt::Display for NodeType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            NodeType::Author => "author",
            NodeType::Submission => "submission",
            NodeType::Comment => "comment",
            NodeType::Subreddit => "subreddit",
        };
        f.write_str(s)
    }
}

impl FromStr for NodeType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "author" | "a" => Ok(NodeType::Author),
            "submission" | "s" => Ok(NodeType::Submission),
            "comment" | "c" => Ok(NodeType::Comment),
            "subreddit" | "r" => Ok(NodeType::Subreddit),
            other => Err(format!("unknown node type {other:?}")),
        }
    }
}

/// A node identified by its type and a name unique within that type.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeRef {
    pub kind: NodeType,
    pub name: String,
}

impl NodeRef {
    pub fn new(kind: NodeType, name: impl Into<String>) -> Self {
        NodeRef {
            kind,
            name: name.into(),
        }
    }

    pub fn author(name: impl Into<String>) -> Self {
        Self::new(NodeType::Author, name)
    }

    pub fn submission(name: impl Into<String>) -> Self {
        Self::new(NodeType::Submission, name)
    }

    pub fn comment(name: impl Into<String>) -> Self {
        Self::new(NodeType::Comment, name)
    }

    pub fn subreddit(name: impl Into<String>) -> Self {
        Self::new(NodeType::Subreddit, name)
    }

    /// Walk-corpus token form, e.g. `r:askreddit`.
    pub fn token(&self) -> String {
        format!("{}:{}", self.kind.tag(), self.name)
    }

    /// Parses a typed token such as `a:alice`.
    pub fn parse_token(token: &str) -> Option<NodeRef> {
        let (tag, name) = token.split_once(':')?;
        if name.is_empty() {
            return None;
        }
        Some(NodeRef::new(NodeType::from_tag(tag)?, name))
    }
}

impl fmt::Display for NodeRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.kind.tag(), self.name)
    }
}

/// One undirected edge between two typed endpoints.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub src: String,
    pub src_type: NodeType,
    pub dst: String,
    pub dst_type: NodeType,
    /// Kept as an opaque payload; the graph itself is static.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<String>,
}

impl EdgeRecord {
    pub fn new(src: &NodeRef, dst: &NodeRef) -> Self {
        EdgeRecord {
            src: src.name.clone(),
            src_type: src.kind,
            dst: dst.name.clone(),
            dst_type: dst.kind,
            timestamp: None,
        }
    }

    pub fn endpoints(&self) -> (NodeRef, NodeRef) {
        (
            NodeRef::new(self.src_type, self.src.clone()),
            NodeRef::new(self.dst_type, self.dst.clone()),
        )
    }
}

/// Submission (or comment, when `parent` is set) in the flat record form.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmissionRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub author: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subreddit: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<String>,
}

/// Submission text routed to the document embedder.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentRecord {
    pub id: String,
    pub author: String,
    pub subreddit: String,
    pub text: String,
}

/// A parsed graph-record line.
#[derive(Debug, Clone, PartialEq)]
pub enum GraphRecord {
    Edge(EdgeRecord),
    Submission(SubmissionRecord),
}

impl GraphRecord {
    /// Parses one JSON line; `line` is 1-based and only used in errors.
    pub fn parse(text: &str, line: usize) -> Result<GraphRecord, GraphError> {
        let perr = |message: String| GraphError::Parse { line, message };
        let value: Value = serde_json::from_str(text).map_err(|e| perr(e.to_string()))?;
        let obj: &Map<String, Value> = value
            .as_object()
            .ok_or_else(|| perr("record is not an object".into()))?;
        if obj.values().any(|v| v.is_object() || v.is_array()) {
            return Err(perr("record must be a flat key/value object".into()));
        }
        if obj.contains_key("src") || obj.contains_key("dst") {
            let edge: EdgeRecord =
                serde_json::from_value(value.clone()).map_err(|e| perr(e.to_string()))?;
            Ok(GraphRecord::Edge(edge))
        } else {
            let mut rec = SubmissionRecord::default();
            for (key, v) in obj {
                let s = match v {
                    Value::Null => continue,
                    Value::String(s) => s.clone(),
                    other => other.to_string(),
                };
                match key.as_str() {
                    "id" => rec.id = Some(s),
                    "author" => rec.author = Some(s),
                    "subreddit" => rec.subreddit = Some(s),
                    "text" | "body" | "selftext" => rec.text = Some(s),
                    "parent" | "parent_id" => rec.parent = Some(s),
                    "timestamp" | "created_utc" => rec.timestamp = Some(s),
                    _ => {}
                }
            }
            Ok(GraphRecord::Submission(rec))
        }
    }
}

/// Result of expanding submission-style records into edges.
#[derive(Debug, Clone, Default)]
pub struct Ingested {
    pub edges: Vec<EdgeRecord>,
    pub documents: Vec<DocumentRecord>,
    /// Records missing a required field.
    pub skipped: usize,
    /// Records whose author is the deleted-account sentinel.
    pub deleted: usize,
}

impl Ingested {
    pub fn push(&mut self, rec: &SubmissionRecord) {
        let (Some(id), Some(author)) = (non_empty(&rec.id), non_empty(&rec.author)) else {
            log::warn!("skipping record without id/author: {rec:?}");
            self.skipped += 1;
            return;
        };
        if author == DELETED_AUTHOR {
            self.deleted += 1;
            return;
        }
        let author_ref = NodeRef::author(author);
        if let Some(parent) = non_empty(&rec.parent) {
            let comment = NodeRef::comment(id);
            let mut e1 = EdgeRecord::new(&author_ref, &comment);
            let mut e2 = EdgeRecord::new(&comment, &NodeRef::submission(parent));
            e1.timestamp = rec.timestamp.clone();
            e2.timestamp = rec.timestamp.clone();
            self.edges.push(e1);
            self.edges.push(e2);
            return;
        }
        let Some(subreddit) = non_empty(&rec.subreddit) else {
            log::warn!("skipping submission {id} without subreddit");
            self.skipped += 1;
            return;
        };
        let submission = NodeRef::submission(id);
        let mut e1 = EdgeRecord::new(&author_ref, &submission);
        let mut e2 = EdgeRecord::new(&submission, &NodeRef::subreddit(subreddit));
        e1.timestamp = rec.timestamp.clone();
        e2.timestamp = rec.timestamp.clone();
        self.edges.push(e1);
        self.edges.push(e2);
        if let Some(text) = &rec.text {
            self.documents.push(DocumentRecord {
                id: id.to_string(),
                author: author.to_string(),
                subreddit: subreddit.to_string(),
                text: text.clone(),
            });
        }
    }
}

fn non_empty(v: &Option<String>) -> Option<&str> {
    v.as_deref().filter(|s| !s.is_empty())
}

/// Expands submission and comment records into schema edges plus documents.
pub fn ingest_submission_records<'a, I>(records: I) -> Ingested
where
    I: IntoIterator<Item = &'a SubmissionRecord>,
{
    let mut out = Ingested::default();
    for rec in records {
        out.push(rec);
    }
    out
}

/// Accumulates edges; [`GraphBuilder::finish`] canonicalizes ids.
#[derive(Debug, Default)]
pub struct GraphBuilder {
    index: HashMap<NodeRef, u32>,
    nodes: Vec<NodeRef>,
    edges: Vec<(u32, u32)>,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    fn intern(&mut self, node: NodeRef) -> u32 {
        if let Some(&id) = self.index.get(&node) {
            return id;
        }
        let id = self.nodes.len() as u32;
        self.nodes.push(node.clone());
        self.index.insert(node, id);
        id
    }

    pub fn add_node(&mut self, node: NodeRef) {
        self.intern(node);
    }

    /// Adds an undirected edge. `line` is reported on schema violations.
    pub fn add_edge(&mut self, a: NodeRef, b: NodeRef, line: usize) -> Result<(), GraphError> {
        if !NodeType::is_legal_edge(a.kind, b.kind) {
            return Err(GraphError::IllegalEdge {
                line,
                src_type: a.kind,
                dst_type: b.kind,
            });
        }
        let ia = self.intern(a);
        let ib = self.intern(b);
        self.edges.push((ia.min(ib), ia.max(ib)));
        Ok(())
    }

    pub fn finish(self) -> HetGraph {
        let GraphBuilder {
            nodes, mut edges, ..
        } = self;
        let mut order: Vec<u32> = (0..nodes.len() as u32).collect();
        order.sort_by(|&a, &b| nodes[a as usize].cmp(&nodes[b as usize]));
        let mut remap = vec![0u32; nodes.len()];
        for (new, &old) in order.iter().enumerate() {
            remap[old as usize] = new as u32;
        }
        let mut sorted_nodes: Vec<NodeRef> = order.iter().map(|&o| nodes[o as usize].clone()).collect();
        sorted_nodes.shrink_to_fit();

        for e in edges.iter_mut() {
            let (a, b) = (remap[e.0 as usize], remap[e.1 as usize]);
            *e = (a.min(b), a.max(b));
        }
        edges.sort_unstable();
        edges.dedup();

        let n = sorted_nodes.len();
        let mut lists: Vec<Vec<u32>> = vec![Vec::new(); n];
        for &(a, b) in &edges {
            lists[a as usize].push(b);
            lists[b as usize].push(a);
        }
        let mut offsets = Vec::with_capacity(n * 4 + 1);
        let mut targets = Vec::with_capacity(edges.len() * 2);
        offsets.push(0usize);
        for list in lists.iter_mut() {
            list.sort_unstable();
            // ids are sorted by (type, name), so a sorted list is already grouped by type
            let mut cursor = 0;
            for t in NodeType::ALL {
                while cursor < list.len() && sorted_nodes[list[cursor] as usize].kind == t {
                    targets.push(list[cursor]);
                    cursor += 1;
                }
                offsets.push(targets.len());
            }
        }
        HetGraph::from_parts(sorted_nodes, offsets, targets, edges.len())
    }
}

/// Immutable heterogeneous graph with type-partitioned adjacency.
#[derive(Debug, Clone, PartialEq)]
pub struct HetGraph {
    nodes: Vec<NodeRef>,
    index: HashMap<NodeRef, u32>,
    /// `offsets[4 * v + t] .. offsets[4 * v + t + 1]` indexes `targets`.
    offsets: Vec<usize>,
    targets: Vec<u32>,
    edge_count: usize,
    type_ranges: [(u32, u32); 4],
}

impl HetGraph {
    fn from_parts(nodes: Vec<NodeRef>, offsets: Vec<usize>, targets: Vec<u32>, edge_count: usize) -> Self {
        let index = nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), i as u32))
            .collect();
        let mut type_ranges = [(0u32, 0u32); 4];
        for t in NodeType::ALL {
            let lo = nodes.partition_point(|n| n.kind < t) as u32;
            let hi = nodes.partition_point(|n| n.kind <= t) as u32;
            type_ranges[t.index()] = (lo, hi);
        }
        HetGraph {
            nodes,
            index,
            offsets,
            targets,
            edge_count,
            type_ranges,
        }
    }

    pub fn empty() -> Self {
        GraphBuilder::new().finish()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn nodes(&self) -> &[NodeRef] {
        &self.nodes
    }

    pub fn node(&self, id: u32) -> &NodeRef {
        &self.nodes[id as usize]
    }

    pub fn kind(&self, id: u32) -> NodeType {
        self.nodes[id as usize].kind
    }

    pub fn id_of(&self, node: &NodeRef) -> Option<u32> {
        self.index.get(node).copied()
    }

    pub fn require(&self, node: &NodeRef) -> Result<u32, GraphError> {
        self.id_of(node).ok_or_else(|| GraphError::NotFound(node.clone()))
    }

    /// Ids of all nodes of one type, a contiguous ascending range.
    pub fn ids_of_type(&self, t: NodeType) -> std::ops::Range<u32> {
        let (lo, hi) = self.type_ranges[t.index()];
        lo..hi
    }

    pub fn count_of_type(&self, t: NodeType) -> usize {
        self.ids_of_type(t).len()
    }

    /// Type-`t` neighbors of node `id`, sorted by id.
    #[inline]
    pub fn neighbor_ids(&self, id: u32, t: NodeType) -> &[u32] {
        let base = id as usize * 4 + t.index();
        &self.targets[self.offsets[base]..self.offsets[base + 1]]
    }

    /// All neighbors of `id`, sorted by id.
    pub fn all_neighbor_ids(&self, id: u32) -> &[u32] {
        let base = id as usize * 4;
        &self.targets[self.offsets[base]..self.offsets[base + 4]]
    }

    pub fn degree(&self, id: u32) -> usize {
        self.all_neighbor_ids(id).len()
    }

    pub fn neighbors(&self, node: &NodeRef, t: NodeType) -> Result<Vec<&NodeRef>, GraphError> {
        let id = self.require(node)?;
        Ok(self.neighbor_ids(id, t).iter().map(|&n| self.node(n)).collect())
    }

    pub fn has_edge(&self, a: u32, b: u32) -> bool {
        self.neighbor_ids(a, self.kind(b)).binary_search(&b).is_ok()
    }

    /// Canonical edge list `(lo, hi)` sorted ascending.
    pub fn edges(&self) -> Vec<(u32, u32)> {
        let mut out = Vec::with_capacity(self.edge_count);
        for v in 0..self.nodes.len() as u32 {
            out.extend(self.all_neighbor_ids(v).iter().filter(|&&u| u > v).map(|&u| (v, u)));
        }
        out
    }

    /// Subgraph induced by `keep` (node ids of this graph).
    pub fn induced(&self, keep: &[u32]) -> HetGraph {
        let mut mask = vec![false; self.nodes.len()];
        for &k in keep {
            mask[k as usize] = true;
        }
        let mut builder = GraphBuilder::new();
        for &k in keep {
            builder.add_node(self.node(k).clone());
        }
        for (a, b) in self.edges() {
            if mask[a as usize] && mask[b as usize] {
                builder
                    .add_edge(self.node(a).clone(), self.node(b).clone(), 0)
                    .expect("edges of a valid graph are schema-legal");
            }
        }
        builder.finish()
    }

    pub fn write_snapshot<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(SNAPSHOT_MAGIC)?;
        w.write_all(&SNAPSHOT_VERSION.to_le_bytes())?;
        w.write_all(&(self.nodes.len() as u64).to_le_bytes())?;
        w.write_all(&(self.edge_count as u64).to_le_bytes())?;
        w.write_all(&(self.targets.len() as u64).to_le_bytes())?;
        for n in &self.nodes {
            w.write_all(&[n.kind as u8])?;
            w.write_all(&(n.name.len() as u32).to_le_bytes())?;
            w.write_all(n.name.as_bytes())?;
        }
        for &o in &self.offsets {
            w.write_all(&(o as u64).to_le_bytes())?;
        }
        for &t in &self.targets {
            w.write_all(&t.to_le_bytes())?;
        }
        w.flush()
    }

    pub fn read_snapshot<R: Read>(mut r: R) -> Result<HetGraph, GraphError> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != SNAPSHOT_MAGIC {
            return Err(GraphError::Snapshot("bad magic".into()));
        }
        let version = read_u32(&mut r)?;
        if version != SNAPSHOT_VERSION {
            return Err(GraphError::Snapshot(format!("unsupported version {version}")));
        }
        let n = read_u64(&mut r)? as usize;
        let edge_count = read_u64(&mut r)? as usize;
        let n_targets = read_u64(&mut r)? as usize;
        if n_targets != edge_count * 2 {
            return Err(GraphError::Snapshot("target count does not match edge count".into()));
        }
        let mut nodes = Vec::with_capacity(n);
        for _ in 0..n {
            let mut kind = [0u8; 1];
            r.read_exact(&mut kind)?;
            let kind = NodeType::from_u8(kind[0])
                .ok_or_else(|| GraphError::Snapshot(format!("bad node type {}", kind[0])))?;
            let len = read_u32(&mut r)? as usize;
            let mut buf = vec![0u8; len];
            r.read_exact(&mut buf)?;
            let name = String::from_utf8(buf).map_err(|e| GraphError::Snapshot(e.to_string()))?;
            nodes.push(NodeRef::new(kind, name));
        }
        if nodes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(GraphError::Snapshot("node table is not canonically sorted".into()));
        }
        let mut offsets = Vec::with_capacity(n * 4 + 1);
        for _ in 0..n * 4 + 1 {
            offsets.push(read_u64(&mut r)? as usize);
        }
        if offsets.windows(2).any(|w| w[0] > w[1]) || offsets.last() != Some(&n_targets) {
            return Err(GraphError::Snapshot("corrupt adjacency offsets".into()));
        }
        let mut targets = Vec::with_capacity(n_targets);
        for _ in 0..n_targets {
            let t = read_u32(&mut r)?;
            if t as usize >= n {
                return Err(GraphError::Snapshot(format!("neighbor id {t} out of range")));
            }
            targets.push(t);
        }
        Ok(HetGraph::from_parts(nodes, offsets, targets, edge_count))
    }
}

const SNAPSHOT_MAGIC: &[u8; 8] = b"HETGRAPH";
const SNAPSHOT_VERSION: u32 = 1;

fn read_u32<R: Read>(r: &mut R) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

/// Everything read from a graph-record stream.
#[derive(Debug)]
pub struct LoadedGraph {
    pub graph: HetGraph,
    pub documents: Vec<DocumentRecord>,
    pub skipped: usize,
    pub deleted: usize,
}

/// Builds a graph from line-delimited records (edge or submission form).
/// Blank lines are ignored.
pub fn build_graph<R: BufRead>(reader: R) -> Result<LoadedGraph, GraphError> {
    let mut builder = GraphBuilder::new();
    let mut ingested = Ingested::default();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match GraphRecord::parse(&line, line_no)? {
            GraphRecord::Edge(e) => {
                let (a, b) = e.endpoints();
                builder.add_edge(a, b, line_no)?;
            }
            GraphRecord::Submission(rec) => {
                let before = ingested.edges.len();
                ingested.push(&rec);
                for e in &ingested.edges[before..] {
                    let (a, b) = e.endpoints();
                    builder.add_edge(a, b, line_no)?;
                }
            }
        }
    }
    Ok(LoadedGraph {
        graph: builder.finish(),
        documents: ingested.documents,
        skipped: ingested.skipped,
        deleted: ingested.deleted,
    })
}

/// Builds a graph directly from edge records.
pub fn build_graph_from_edges<'a, I>(edges: I) -> Result<HetGraph, GraphError>
where
    I: IntoIterator<Item = &'a EdgeRecord>,
{
    let mut builder = GraphBuilder::new();
    for (i, e) in edges.into_iter().enumerate() {
        let (a, b) = e.endpoints();
        builder.add_edge(a, b, i + 1)?;
    }
    Ok(builder.finish())
}

#[derive(Debug, Clone, PartialEq)]
pub struct DegreeStats {
    pub mean: f64,
    pub std_dev: f64,
    pub histogram: BTreeMap<usize, usize>,
}

/// Per-author degrees of the author one-mode projection.
///
/// Two authors are tied when they touched a common submission, either by
/// posting it or by commenting on it.
pub fn projected_author_degrees(graph: &HetGraph) -> Vec<usize> {
    let authors = graph.ids_of_type(NodeType::Author);
    let subs = graph.ids_of_type(NodeType::Submission);
    // authors touching each submission, directly or through comments
    let mut touching: Vec<Vec<u32>> = vec![Vec::new(); subs.len()];
    for s in subs.clone() {
        let list = &mut touching[(s - subs.start) as usize];
        list.extend_from_slice(graph.neighbor_ids(s, NodeType::Author));
        for &c in graph.neighbor_ids(s, NodeType::Comment) {
            list.extend_from_slice(graph.neighbor_ids(c, NodeType::Author));
        }
        list.sort_unstable();
        list.dedup();
    }
    let mut degrees = Vec::with_capacity(authors.len());
    let mut seen = vec![u32::MAX; graph.node_count()];
    for a in authors {
        let mut deg = 0;
        let mut visit = |s: u32| {
            for &other in &touching[(s - subs.start) as usize] {
                if other != a && seen[other as usize] != a {
                    seen[other as usize] = a;
                    deg += 1;
                }
            }
        };
        for &s in graph.neighbor_ids(a, NodeType::Submission) {
            visit(s);
        }
        for &c in graph.neighbor_ids(a, NodeType::Comment) {
            for &s in graph.neighbor_ids(c, NodeType::Submission) {
                visit(s);
            }
        }
        degrees.push(deg);
    }
    degrees
}

pub fn project_author_degrees(graph: &HetGraph) -> DegreeStats {
    degree_stats(&projected_author_degrees(graph))
}

pub fn degree_stats(degrees: &[usize]) -> DegreeStats {
    let mut histogram = BTreeMap::new();
    for &d in degrees {
        *histogram.entry(d).or_insert(0) += 1;
    }
    if degrees.is_empty() {
        return DegreeStats {
            mean: 0.0,
            std_dev: 0.0,
            histogram,
        };
    }
    let n = degrees.len() as f64;
    let mean = degrees.iter().map(|&d| d as f64).sum::<f64>() / n;
    let var = degrees.iter().map(|&d| (d as f64 - mean).powi(2)).sum::<f64>() / n;
    DegreeStats {
        mean,
        std_dev: var.sqrt(),
        histogram,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn edge(a: NodeRef, b: NodeRef) -> EdgeRecord {
        EdgeRecord::new(&a, &b)
    }

    #[test]
    fn empty_stream_gives_empty_graph() {
        let loaded = build_graph(io::Cursor::new("")).unwrap();
        assert_eq!(loaded.graph.node_count(), 0);
        assert_eq!(loaded.graph.edge_count(), 0);
    }

    #[test]
    fn single_edge_and_duplicates() {
        let line = r#"{"src":"p1","src_type":"submission","dst":"r1","dst_type":"subreddit"}"#;
        let g = build_graph(io::Cursor::new(line)).unwrap().graph;
        assert_eq!((g.node_count(), g.edge_count()), (2, 1));
        let n = g.neighbors(&NodeRef::submission("p1"), NodeType::Subreddit).unwrap();
        assert_eq!(n, vec![&NodeRef::subreddit("r1")]);

        let three = format!("{line}\n{line}\n{line}\n");
        let g = build_graph(io::Cursor::new(three)).unwrap().graph;
        assert_eq!((g.node_count(), g.edge_count()), (2, 1));
    }

    #[test]
    fn illegal_edge_reports_line() {
        let text = concat!(
            r#"{"src":"p1","src_type":"submission","dst":"r1","dst_type":"subreddit"}"#,
            "\n",
            r#"{"src":"a1","src_type":"author","dst":"a2","dst_type":"author"}"#
        );
        match build_graph(io::Cursor::new(text)) {
            Err(GraphError::IllegalEdge { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected illegal edge, got {other:?}"),
        }
    }

    #[test]
    fn malformed_line_is_parse_error() {
        let err = build_graph(io::Cursor::new("{\"src\": \n")).unwrap_err();
        assert!(matches!(err, GraphError::Parse { line: 1, .. }));
        let err = build_graph(io::Cursor::new("[1,2]")).unwrap_err();
        assert!(matches!(err, GraphError::Parse { .. }));
    }

    #[test]
    fn ingest_expands_records() {
        let sub = SubmissionRecord {
            id: Some("p1".into()),
            author: Some("a1".into()),
            subreddit: Some("r1".into()),
            text: Some("hello".into()),
            ..Default::default()
        };
        let com = SubmissionRecord {
            id: Some("c1".into()),
            author: Some("a2".into()),
            parent: Some("p1".into()),
            ..Default::default()
        };
        let missing = SubmissionRecord {
            id: Some("p9".into()),
            subreddit: Some("r1".into()),
            ..Default::default()
        };
        let deleted = SubmissionRecord {
            id: Some("p8".into()),
            author: Some(DELETED_AUTHOR.into()),
            subreddit: Some("r1".into()),
            ..Default::default()
        };
        let out = ingest_submission_records([&sub, &com, &missing, &deleted]);
        assert_eq!(
            out.edges,
            vec![
                edge(NodeRef::author("a1"), NodeRef::submission("p1")),
                edge(NodeRef::submission("p1"), NodeRef::subreddit("r1")),
                edge(NodeRef::author("a2"), NodeRef::comment("c1")),
                edge(NodeRef::comment("c1"), NodeRef::submission("p1")),
            ]
        );
        assert_eq!(out.skipped, 1);
        assert_eq!(out.deleted, 1);
        assert_eq!(out.documents.len(), 1);
        assert_eq!(out.documents[0].subreddit, "r1");
    }

    #[test]
    fn star_neighbors() {
        let edges: Vec<_> = (1..=3)
            .map(|i| edge(NodeRef::subreddit("r1"), NodeRef::submission(format!("p{i}"))))
            .collect();
        let g = build_graph_from_edges(&edges).unwrap();
        let r1 = NodeRef::subreddit("r1");
        let subs: Vec<_> = g
            .neighbors(&r1, NodeType::Submission)
            .unwrap()
            .into_iter()
            .map(|n| n.name.as_str())
            .collect();
        assert_eq!(subs, ["p1", "p2", "p3"]);
        assert!(g.neighbors(&r1, NodeType::Author).unwrap().is_empty());
        assert_eq!(
            g.neighbors(&NodeRef::submission("p1"), NodeType::Subreddit).unwrap(),
            vec![&r1]
        );
        assert!(matches!(
            g.neighbors(&NodeRef::subreddit("nope"), NodeType::Author),
            Err(GraphError::NotFound(_))
        ));
    }

    #[test]
    fn projected_degrees_small_cases() {
        let g = build_graph_from_edges(&[
            edge(NodeRef::author("a1"), NodeRef::submission("p1")),
            edge(NodeRef::author("a2"), NodeRef::submission("p1")),
        ])
        .unwrap();
        let s = project_author_degrees(&g);
        assert_eq!(s.mean, 1.0);
        assert_eq!(s.std_dev, 0.0);

        let mut b = GraphBuilder::new();
        b.add_node(NodeRef::author("lonely"));
        let s = project_author_degrees(&b.finish());
        assert_eq!(s.mean, 0.0);
        assert_eq!(s.histogram.get(&0), Some(&1));

        let g = build_graph_from_edges(&[
            edge(NodeRef::author("a1"), NodeRef::submission("p1")),
            edge(NodeRef::author("a2"), NodeRef::submission("p1")),
            edge(NodeRef::author("a2"), NodeRef::submission("p2")),
            edge(NodeRef::author("a3"), NodeRef::submission("p2")),
        ])
        .unwrap();
        assert_eq!(projected_author_degrees(&g), vec![1, 2, 1]);
        assert!((project_author_degrees(&g).mean - 4.0 / 3.0).abs() < 1e-15);

        let s = project_author_degrees(&HetGraph::empty());
        assert_eq!(s.mean, 0.0);
        assert!(s.histogram.is_empty());
    }

    #[test]
    fn comment_links_count_in_projection() {
        let g = build_graph_from_edges(&[
            edge(NodeRef::author("a1"), NodeRef::submission("p1")),
            edge(NodeRef::author("a2"), NodeRef::comment("c1")),
            edge(NodeRef::comment("c1"), NodeRef::submission("p1")),
        ])
        .unwrap();
        assert_eq!(projected_author_degrees(&g), vec![1, 1]);
    }

    #[test]
    fn snapshot_rejects_garbage() {
        assert!(HetGraph::read_snapshot(io::Cursor::new(b"NOTAGRAPH...".to_vec())).is_err());
    }

    #[test]
    fn token_round_trip() {
        let n = NodeRef::subreddit("SuicideWatch");
        assert_eq!(NodeRef::parse_token(&n.token()), Some(n));
        assert_eq!(NodeRef::parse_token("x:foo"), None);
        assert_eq!(NodeRef::parse_token("a:"), None);
    }
}
