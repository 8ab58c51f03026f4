//! Planted-structure synthetic datasets.
//!
//! Authors belong to communities, each owning a block of subreddits. Every
//! author also has a persona topic: their own community's topic with
//! probability `persona_fidelity`, otherwise a uniformly chosen other topic.
//! Graph structure therefore reveals community membership and text reveals
//! the persona, and the default label (target community AND mostly
//! target-topic text) needs both.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng as _;
use thiserror::Error;

use crate::docembed::TaggedDocument;
use crate::hetgraph::{NodeRef, SubmissionRecord};
use crate::seed;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthetic config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelRule {
    GraphAndText,
    GraphOnly,
    TextOnly,
}

impl FromStr for LabelRule {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "graph_and_text" => Ok(LabelRule::GraphAndText),
            "graph_only" => Ok(LabelRule::GraphOnly),
            "text_only" => Ok(LabelRule::TextOnly),
            _ => Err(format!("unknown label rule {s:?}")),
        }
    }
}

impl fmt::Display for LabelRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LabelRule::GraphAndText => "graph_and_text",
            LabelRule::GraphOnly => "graph_only",
            LabelRule::TextOnly => "text_only",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_communities: usize,
    pub subreddits_per_community: usize,
    pub authors_per_community: usize,
    pub submissions_per_author: usize,
    /// Comments attached to each submission by other authors.
    pub comments_per_submission: usize,
    /// Probability a submission (or comment) stays inside the author's community.
    pub p_in: f64,
    pub target_community: usize,
    pub topic_vocab_size: usize,
    pub shared_vocab_size: usize,
    pub words_per_doc: usize,
    /// Fraction of each document's words drawn from its topic vocabulary.
    pub topic_word_share: f64,
    /// Probability a document uses a random other topic than the persona's.
    pub text_noise: f64,
    /// Probability an author's persona topic is their community's topic.
    pub persona_fidelity: f64,
    /// Probability a document on topic `t` is posted to subreddit `s{t}` of
    /// the chosen community rather than a uniform one. This is what gives
    /// subreddits a topical profile.
    pub topic_routing: f64,
    pub label_rule: LabelRule,
    pub rng_seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_communities: 3,
            subreddits_per_community: 10,
            authors_per_community: 200,
            submissions_per_author: 8,
            comments_per_submission: 1,
            p_in: 0.85,
            target_community: 0,
            topic_vocab_size: 200,
            shared_vocab_size: 300,
            words_per_doc: 100,
            topic_word_share: 0.5,
            text_noise: 0.25,
            persona_fidelity: 0.5,
            topic_routing: 0.3,
            label_rule: LabelRule::GraphAndText,
            rng_seed: 1,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::Config(m.to_string()));
        for (name, p) in [
            ("p_in", self.p_in),
            ("text_noise", self.text_noise),
            ("persona_fidelity", self.persona_fidelity),
            ("topic_routing", self.topic_routing),
            ("topic_word_share", self.topic_word_share),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(&format!("{name} must be in [0, 1]"));
            }
        }
        if self.n_communities < 1
            || self.subreddits_per_community < 1
            || self.authors_per_community < 1
            || self.submissions_per_author < 1
            || self.words_per_doc < 1
        {
            return bad("community, subreddit, author, submission and word counts must be >= 1");
        }
        if self.target_community >= self.n_communities {
            return bad("target_community must be < n_communities");
        }
        if self.topic_vocab_size < 1 && self.topic_word_share > 0.0 {
            return bad("topic_vocab_size must be >= 1 when topic words are used");
        }
        if self.shared_vocab_size < 1 && self.topic_word_share < 1.0 {
            return bad("shared_vocab_size must be >= 1 when shared words are used");
        }
        if self.n_communities * self.authors_per_community < 2 && self.comments_per_submission > 0 {
            return bad("comments need at least two authors");
        }
        Ok(())
    }

    /// Number of text topics: one per community, but at least two so that
    /// personas and noise always have somewhere else to go.
    pub fn n_topics(&self) -> usize {
        self.n_communities.max(2)
    }

    pub fn target_subreddit(&self) -> String {
        subreddit_name(self.target_community, 0)
    }

    pub fn target_tag(&self) -> String {
        NodeRef::subreddit(self.target_subreddit()).token()
    }

    /// A config whose graph has roughly `nodes` nodes at a fixed per-author
    /// activity, so the average degree does not depend on size.
    pub fn with_node_budget(nodes: usize, rng_seed: u64) -> SynthConfig {
        let base = SynthConfig::default();
        let per_author = 1 + base.submissions_per_author * (1 + base.comments_per_submission);
        let authors = (nodes / per_author).max(base.n_communities);
        SynthConfig {
            authors_per_community: authors / base.n_communities,
            subreddits_per_community: (authors / (base.n_communities * 20)).max(1),
            rng_seed,
            ..base
        }
    }
}

pub fn subreddit_name(community: usize, k: usize) -> String {
    format!("c{community}s{k}")
}

pub fn author_name(community: usize, k: usize) -> String {
    format!("u{community}_{k}")
}

pub fn topic_word(topic: usize, k: usize) -> String {
    format!("t{topic}w{k}")
}

pub fn shared_word(k: usize) -> String {
    format!("sw{k}")
}

/// Ground truth for one author.
#[derive(Debug, Clone, PartialEq)]
pub struct AuthorTruth {
    pub author: String,
    pub community: usize,
    pub persona_topic: usize,
    pub target_topic_docs: usize,
    pub n_docs: usize,
    pub label: bool,
}

#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub config: SynthConfig,
    pub records: Vec<SubmissionRecord>,
    pub authors: Vec<AuthorTruth>,
    pub subreddit_community: BTreeMap<String, usize>,
}

fn other_than<R: rand::Rng>(n: usize, not: usize, rng: &mut R) -> usize {
    debug_assert!(n >= 2);
    let k = rng.gen_range(0..n - 1);
    if k >= not {
        k + 1
    } else {
        k
    }
}

fn document<R: rand::Rng>(cfg: &SynthConfig, topic: usize, rng: &mut R) -> String {
    let words: Vec<String> = (0..cfg.words_per_doc)
        .map(|_| {
            if rng.gen::<f64>() < cfg.topic_word_share {
                topic_word(topic, rng.gen_range(0..cfg.topic_vocab_size))
            } else {
                shared_word(rng.gen_range(0..cfg.shared_vocab_size))
            }
        })
        .collect();
    words.join(" ")
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthDataset, SynthError> {
    cfg.validate()?;
    let mut rng = seed::rng(cfg.rng_seed, &[0x5e7]);
    let nc = cfg.n_communities;
    let target_topic = cfg.target_community;
    let mut subreddit_community = BTreeMap::new();
    for c in 0..nc {
        for k in 0..cfg.subreddits_per_community {
            subreddit_community.insert(subreddit_name(c, k), c);
        }
    }
    let pick_community = |own: usize, rng: &mut seed::Rng| {
        if nc == 1 || rng.gen::<f64>() < cfg.p_in {
            own
        } else {
            other_than(nc, own, rng)
        }
    };
    let all_authors: Vec<(usize, String)> = (0..nc)
        .flat_map(|c| (0..cfg.authors_per_community).map(move |k| (c, author_name(c, k))))
        .collect();
    let by_community: Vec<Vec<&str>> = (0..nc)
        .map(|c| all_authors.iter().filter(|a| a.0 == c).map(|a| a.1.as_str()).collect())
        .collect();

    let mut records = Vec::new();
    let mut authors = Vec::with_capacity(all_authors.len());
    let mut next_post = 0usize;
    for (me, (c, name)) in all_authors.iter().enumerate() {
        let persona = if rng.gen::<f64>() < cfg.persona_fidelity {
            *c
        } else {
            other_than(cfg.n_topics(), *c, &mut rng)
        };
        let mut on_target = 0;
        for _ in 0..cfg.submissions_per_author {
            let topic = if rng.gen::<f64>() < cfg.text_noise {
                other_than(cfg.n_topics(), persona, &mut rng)
            } else {
                persona
            };
            let community = pick_community(*c, &mut rng);
            let slot = if topic < cfg.subreddits_per_community && rng.gen::<f64>() < cfg.topic_routing {
                topic
            } else {
                rng.gen_range(0..cfg.subreddits_per_community)
            };
            let sub = subreddit_name(community, slot);
            on_target += usize::from(topic == target_topic);
            let id = format!("p{next_post}");
            next_post += 1;
            records.push(SubmissionRecord {
                id: Some(id.clone()),
                author: Some(name.clone()),
                subreddit: Some(sub),
                text: Some(document(cfg, topic, &mut rng)),
                parent: None,
                timestamp: None,
            });
            for j in 0..cfg.comments_per_submission {
                // commenters come from the subreddit's community with probability p_in
                let pool = &by_community[pick_community(community, &mut rng)];
                let mut who = *pool.choose(&mut rng).expect("non-empty community");
                if who == name {
                    // never comment on one's own post
                    who = &all_authors[other_than(all_authors.len(), me, &mut rng)].1;
                }
                records.push(SubmissionRecord {
                    id: Some(format!("{id}c{j}")),
                    author: Some(who.to_string()),
                    subreddit: None,
                    text: None,
                    parent: Some(id.clone()),
                    timestamp: None,
                });
            }
        }
        let in_target = *c == cfg.target_community;
        let mostly_target = 2 * on_target > cfg.submissions_per_author;
        let label = match cfg.label_rule {
            LabelRule::GraphAndText => in_target && mostly_target,
            LabelRule::GraphOnly => in_target,
            LabelRule::TextOnly => mostly_target,
        };
        authors.push(AuthorTruth {
            author: name.clone(),
            community: *c,
            persona_topic: persona,
            target_topic_docs: on_target,
            n_docs: cfg.submissions_per_author,
            label,
        });
    }
    Ok(SynthDataset {
        config: cfg.clone(),
        records,
        authors,
        subreddit_community,
    })
}

pub const RECORDS_FILE: &str = "records.jsonl";
pub const LABELS_FILE: &str = "labels.csv";
pub const COMMUNITIES_FILE: &str = "communities.csv";
pub const CONFIG_FILE: &str = "pipeline.toml";

impl SynthDataset {
    pub fn labels(&self) -> BTreeMap<String, bool> {
        self.authors.iter().map(|a| (a.author.clone(), a.label)).collect()
    }

    /// Writes records, labels, subreddit communities and a starter pipeline
    /// config into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), SynthError> {
        fs::create_dir_all(dir)?;
        let mut w = BufWriter::new(File::create(dir.join(RECORDS_FILE))?);
        for r in &self.records {
            serde_json::to_writer(&mut w, r).map_err(io::Error::from)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        let mut w = BufWriter::new(File::create(dir.join(LABELS_FILE))?);
        writeln!(w, "author,label,community,persona_topic,target_topic_docs,n_docs")?;
        for a in &self.authors {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                a.author,
                u8::from(a.label),
                a.community,
                a.persona_topic,
                a.target_topic_docs,
                a.n_docs
            )?;
        }
        w.flush()?;
        let mut w = BufWriter::new(File::create(dir.join(COMMUNITIES_FILE))?);
        writeln!(w, "subreddit,community")?;
        for (s, c) in &self.subreddit_community {
            writeln!(w, "{s},{c}")?;
        }
        w.flush()?;
        // A one-word DMM window: with bag-of-words text the surrounding words
        // already predict the topic and wider windows leave tags uninformative.
        // The graph signal here is a handful of communities, so a small
        // embedding suffices; the 3:1 training ratio keeps each single view
        // from trading positives against half-matching negatives, and a half-size
        // test split keeps the accuracy estimates from swinging by whole rows.
        fs::write(
            dir.join(CONFIG_FILE),
            format!(
                "# generated by synth; paths are relative to this file\n\
                 input = \"{RECORDS_FILE}\"\n\
                 labels = \"{LABELS_FILE}\"\n\
                 communities = \"{COMMUNITIES_FILE}\"\n\
                 target = \"{}\"\n\
                 seed = {}\n\
                 doc_window = 1\n\
                 graph_dim = 16\n\
                 train_ratio = 3.0\n\
                 test_fraction = 0.5\n",
                self.config.target_tag(),
                self.config.rng_seed
            ),
        )?;
        Ok(())
    }
}

/// Reads `author,label,...` CSV (extra columns ignored).
pub fn read_labels(path: &Path) -> io::Result<BTreeMap<String, bool>> {
    let text = fs::read_to_string(path)?;
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let mut f = line.split(',');
        let (Some(a), Some(l)) = (f.next(), f.next()) else {
            return Err(io::Error::new(io::ErrorKind::InvalidData, format!("labels line {}: too few fields", i + 1)));
        };
        let label = match l.trim() {
            "1" | "true" => true,
            "0" | "false" => false,
            _ => return Err(io::Error::new(io::ErrorKind::InvalidData, format!("labels line {}: bad label", i + 1))),
        };
        out.insert(a.trim().to_string(), label);
    }
    Ok(out)
}

pub fn read_communities(path: &Path) -> io::Result<BTreeMap<String, usize>> {
    let text = fs::read_to_string(path)?;
    let mut out = BTreeMap::new();
    for line in text.lines().skip(1).filter(|l| !l.trim().is_empty()) {
        if let Some((s, c)) = line.split_once(',') {
            if let Ok(c) = c.trim().parse() {
                out.insert(s.trim().to_string(), c);
            }
        }
    }
    Ok(out)
}

/// Two-topic tagged corpus: `per_topic` documents per topic with disjoint
/// topic words plus shared filler. Returns documents with their topic.
pub fn two_topic_corpus(per_topic: usize, topic_vocab: usize, shared_vocab: usize, words_per_doc: usize, rng_seed: u64) -> Vec<(TaggedDocument, usize)> {
    let cfg = SynthConfig {
        topic_vocab_size: topic_vocab,
        shared_vocab_size: shared_vocab,
        words_per_doc,
        ..SynthConfig::default()
    };
    let mut rng = seed::rng(rng_seed, &[0x2]);
    let mut out = Vec::with_capacity(2 * per_topic);
    for i in 0..2 * per_topic {
        let topic = i % 2;
        let text = document(&cfg, topic, &mut rng);
        out.push((
            TaggedDocument {
                tokens: text.split(' ').map(str::to_string).collect(),
                tags: vec![format!("d:{i}")],
            },
            topic,
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_labeled() {
        let cfg = SynthConfig {
            authors_per_community: 20,
            ..Default::default()
        };
        let a = generate(&cfg).unwrap();
        let b = generate(&cfg).unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(a.authors, b.authors);
        assert_eq!(a.authors.len(), 60);
        assert_eq!(a.records.len(), 60 * 8 * 2);
        for t in &a.authors {
            assert_eq!(t.label, t.community == 0 && 2 * t.target_topic_docs > t.n_docs);
        }
        assert!(a.authors.iter().any(|t| t.label));
    }

    #[test]
    fn noiseless_limit_is_pure() {
        let cfg = SynthConfig {
            authors_per_community: 10,
            p_in: 1.0,
            text_noise: 0.0,
            persona_fidelity: 1.0,
            ..Default::default()
        };
        let d = generate(&cfg).unwrap();
        for r in d.records.iter().filter(|r| r.parent.is_none()) {
            let author = r.author.as_ref().unwrap();
            let c: usize = author[1..author.find('_').unwrap()].parse().unwrap();
            assert_eq!(d.subreddit_community[r.subreddit.as_ref().unwrap()], c);
            assert!(r.text.as_ref().unwrap().split(' ').all(|w| w.starts_with("sw") || w.starts_with(&format!("t{c}w"))));
        }
    }

    #[test]
    fn config_guards() {
        assert!(generate(&SynthConfig { target_community: 3, ..Default::default() }).is_err());
        assert!(generate(&SynthConfig { p_in: 1.5, ..Default::default() }).is_err());
        assert!(generate(&SynthConfig { topic_vocab_size: 0, ..Default::default() }).is_err());
        let one = generate(&SynthConfig {
            n_communities: 1,
            target_community: 0,
            authors_per_community: 5,
            ..Default::default()
        })
        .unwrap();
        assert_eq!(one.subreddit_community.len(), 10);
    }

    #[test]
    fn node_budget_scales_authors() {
        let small = SynthConfig::with_node_budget(10_000, 1);
        let big = SynthConfig::with_node_budget(100_000, 1);
        assert!(big.authors_per_community >= 9 * small.authors_per_community);
    }
}
