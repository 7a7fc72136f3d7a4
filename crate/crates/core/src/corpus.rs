//! Data model for tweets, lexicons, and gold annotations, plus mention
//! candidate generation and a synthetic corpus generator for desk-scale
//! experiments.
//!
//! A mention candidate is any token n-gram whose surface form is a lexicon
//! key; matching runs across the whole token sequence with no sentence or
//! punctuation boundaries. Candidates are ordered by (end, start) ascending;
//! that ordering is what the non-overlapping decoder expects.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netembed::{GraphBuilder, SocialGraph};
use crate::{EmbeddingTable, TableKind};

/// Author identifier.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UserId(pub String);

/// Knowledge-base entity identifier. The special Nil label ("not an entity")
/// is represented as `Option::<EntityId>::None` throughout, never as an id.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EntityId(pub String);

impl UserId {
    pub fn new(s: impl Into<String>) -> Self {
        UserId(s.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl EntityId {
    pub fn new(s: impl Into<String>) -> Self {
        EntityId(s.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Human-readable name derived from the id: underscores become spaces.
    /// Used by the default feature extractor's exact-name-match feature.
    pub fn canonical_name(&self) -> String {
        self.0.replace('_', " ").to_lowercase()
    }
}

impl fmt::Display for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Half-open token interval `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    /// Token-interval intersection non-empty. Boundary-touching spans such as
    /// `[0,2)` and `[2,3)` do not overlap.
    pub fn overlaps(&self, other: &Span) -> bool {
        self.start < other.end && other.start < self.end
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{})", self.start, self.end)
    }
}

/// A gold (or predicted) entity link: a span plus the entity it names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "(usize, usize, String)", into = "(usize, usize, String)")]
pub struct Annotation {
    pub span: Span,
    pub entity: EntityId,
}

impl Annotation {
    pub fn new(start: usize, end: usize, entity: impl Into<String>) -> Self {
        Annotation {
            span: Span::new(start, end),
            entity: EntityId::new(entity),
        }
    }
}

impl From<(usize, usize, String)> for Annotation {
    fn from((start, end, entity): (usize, usize, String)) -> Self {
        Annotation {
            span: Span::new(start, end),
            entity: EntityId(entity),
        }
    }
}

impl From<Annotation> for (usize, usize, String) {
    fn from(a: Annotation) -> Self {
        (a.span.start, a.span.end, a.entity.0)
    }
}

/// A tokenized message with its author and gold annotations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tweet {
    pub id: String,
    pub author: UserId,
    pub tokens: Vec<String>,
    pub gold: Vec<Annotation>,
}

impl Tweet {
    pub fn validate(&self) -> Result<()> {
        if !self.gold.is_empty() && self.tokens.is_empty() {
            return Err(Error::Validation(format!(
                "tweet {}: annotated tweet has no tokens",
                self.id
            )));
        }
        for a in &self.gold {
            if a.span.start >= a.span.end {
                return Err(Error::Validation(format!(
                    "tweet {}: empty gold span {}",
                    self.id, a.span
                )));
            }
            if a.span.end > self.tokens.len() {
                return Err(Error::Validation(format!(
                    "tweet {}: gold span {} exceeds {} tokens",
                    self.id,
                    a.span,
                    self.tokens.len()
                )));
            }
            if a.entity.as_str().is_empty() {
                return Err(Error::Validation(format!(
                    "tweet {}: gold span {} has empty entity id",
                    self.id, a.span
                )));
            }
        }
        let mut spans: Vec<Span> = self.gold.iter().map(|a| a.span).collect();
        spans.sort_by_key(|s| (s.start, s.end));
        for pair in spans.windows(2) {
            if pair[0].overlaps(&pair[1]) {
                return Err(Error::Validation(format!(
                    "tweet {}: overlapping gold spans {} and {}",
                    self.id, pair[0], pair[1]
                )));
            }
        }
        Ok(())
    }
}

/// Whitespace tokenization with lowercasing.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(|t| t.to_lowercase()).collect()
}

/// Surface form -> entity candidates with prior statistics.
///
/// Candidate lists keep lexicon order: non-increasing prior, insertion order
/// on ties. That order defines the "lexicon rank" used for tie-breaking.
#[derive(Debug, Clone, Default)]
pub struct Lexicon {
    entries: HashMap<String, Vec<(EntityId, f64)>>,
    max_ngram: usize,
}

impl Lexicon {
    pub fn new() -> Self {
        Lexicon::default()
    }

    /// Appends a candidate to a surface form. Surfaces are normalized to
    /// lowercase; priors must be in \[0,1\] and non-increasing per surface.
    pub fn insert(&mut self, surface: &str, entity: EntityId, prior: f64) -> Result<()> {
        let surface = surface.trim().to_lowercase();
        if surface.is_empty() {
            return Err(Error::Validation("empty lexicon surface form".into()));
        }
        if !(0.0..=1.0).contains(&prior) {
            return Err(Error::Validation(format!(
                "prior {prior} for surface {surface:?} outside [0,1]"
            )));
        }
        let ngram = surface.split_whitespace().count();
        let list = self.entries.entry(surface.clone()).or_default();
        if let Some((_, last)) = list.last() {
            if *last < prior {
                return Err(Error::Validation(format!(
                    "surface {surface:?}: priors not descending ({last} then {prior})"
                )));
            }
        }
        if list.iter().any(|(e, _)| *e == entity) {
            return Err(Error::Validation(format!(
                "surface {surface:?}: duplicate candidate {entity}"
            )));
        }
        list.push((entity, prior));
        self.max_ngram = self.max_ngram.max(ngram);
        Ok(())
    }

    pub fn candidates(&self, surface: &str) -> Option<&[(EntityId, f64)]> {
        self.entries.get(surface).map(|v| v.as_slice())
    }

    pub fn prior(&self, surface: &str, entity: &EntityId) -> Option<f64> {
        self.entries
            .get(surface)?
            .iter()
            .find(|(e, _)| e == entity)
            .map(|(_, p)| *p)
    }

    /// Longest surface form in tokens; candidate generation scans n-grams up
    /// to this length.
    pub fn max_ngram(&self) -> usize {
        self.max_ngram
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn load(path: &Path) -> Result<Lexicon> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let reader = BufReader::new(file);
        let mut lexicon = Lexicon::new();
        let mut prev_surface: Option<String> = None;
        let mut closed: HashSet<String> = HashSet::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let lineno = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(Error::parse(
                    path,
                    lineno,
                    format!("expected 3 tab-separated fields, got {}", fields.len()),
                ));
            }
            let surface = fields[0].trim().to_lowercase();
            let prior: f64 = fields[2]
                .trim()
                .parse()
                .map_err(|_| Error::parse(path, lineno, format!("bad prior {:?}", fields[2])))?;
            if prev_surface.as_deref() != Some(surface.as_str()) {
                if let Some(prev) = prev_surface.take() {
                    closed.insert(prev);
                }
                if closed.contains(&surface) {
                    return Err(Error::parse(
                        path,
                        lineno,
                        format!("rows for surface {surface:?} are not contiguous"),
                    ));
                }
                prev_surface = Some(surface.clone());
            }
            lexicon
                .insert(&surface, EntityId::new(fields[1].trim()), prior)
                .map_err(|e| Error::parse(path, lineno, e.to_string()))?;
        }
        Ok(lexicon)
    }

    /// Writes surfaces in sorted order so equal lexicons serialize to equal
    /// bytes.
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let mut surfaces: Vec<&String> = self.entries.keys().collect();
        surfaces.sort();
        for surface in surfaces {
            for (entity, prior) in &self.entries[surface] {
                writeln!(w, "{surface}\t{entity}\t{prior}").map_err(|e| Error::io(path, e))?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// A lexicon-matched n-gram span: the atomic decision unit of the linker.
/// `index` is the position in (end, start) sort order. The Nil label is
/// always available implicitly and never stored in `candidates`.
#[derive(Debug, Clone, PartialEq)]
pub struct MentionCandidate {
    pub index: usize,
    pub span: Span,
    pub surface: String,
    pub candidates: Vec<EntityId>,
    pub words: Vec<String>,
}

/// Scans all n-grams (1 <= n <= lexicon max) and returns lexicon matches
/// sorted by end index ascending, ties broken by start ascending; `index`
/// follows that order. This is the ordering the decoder's DP requires.
pub fn generate_candidates(tweet: &Tweet, lexicon: &Lexicon) -> Vec<MentionCandidate> {
    let tokens = &tweet.tokens;
    let mut out = Vec::new();
    if tokens.is_empty() || lexicon.is_empty() {
        return out;
    }
    let max_n = lexicon.max_ngram().min(tokens.len());
    for end in 1..=tokens.len() {
        // n descending gives start ascending within a fixed end index.
        for n in (1..=max_n.min(end)).rev() {
            let start = end - n;
            let surface = tokens[start..end].join(" ");
            if let Some(cands) = lexicon.candidates(&surface) {
                out.push(MentionCandidate {
                    index: out.len(),
                    span: Span::new(start, end),
                    surface,
                    candidates: cands.iter().map(|(e, _)| e.clone()).collect(),
                    words: tokens[start..end].to_vec(),
                });
            }
        }
    }
    out
}

/// Loads a line-delimited corpus, validating every record.
pub fn load_corpus(path: &Path) -> Result<Vec<Tweet>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut tweets = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut tweet: Tweet =
            serde_json::from_str(&line).map_err(|e| Error::parse(path, lineno, e.to_string()))?;
        for t in tweet.tokens.iter_mut() {
            *t = t.to_lowercase();
        }
        tweet
            .validate()
            .map_err(|e| Error::parse(path, lineno, e.to_string()))?;
        tweets.push(tweet);
    }
    Ok(tweets)
}

pub fn save_corpus(tweets: &[Tweet], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for tweet in tweets {
        let line = serde_json::to_string(tweet)
            .map_err(|e| Error::Validation(format!("serialize tweet {}: {e}", tweet.id)))?;
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Configuration for the synthetic corpus generator.
///
/// Users are assigned round-robin to communities; each community prefers a
/// disjoint subset of the entities. A fraction `ambiguity` of the entity
/// groups share one surface form across all communities, so those mentions
/// can only be resolved from the author's community.
#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub users: usize,
    pub entities: usize,
    pub communities: usize,
    pub tweets_per_user: usize,
    /// Fraction in \[0,1\] of entity groups whose surface form is ambiguous.
    pub ambiguity: f64,
    /// Maximum mentions per tweet (actual count is 1..=max).
    pub mentions_per_tweet: usize,
    pub filler_vocab: usize,
    pub word_dim: usize,
    pub entity_dim: usize,
    /// Within-community edge probability of the planted-partition graph.
    pub p_in: f64,
    /// Cross-community edge probability.
    pub p_out: f64,
    /// Noise scale around each community centroid in entity embeddings.
    pub entity_noise: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            users: 40,
            entities: 24,
            communities: 2,
            tweets_per_user: 20,
            ambiguity: 0.5,
            mentions_per_tweet: 2,
            filler_vocab: 50,
            word_dim: 50,
            entity_dim: 50,
            p_in: 0.3,
            p_out: 0.02,
            entity_noise: 0.3,
        }
    }
}

/// Everything the generator produces: corpus, lexicon, author graph, and
/// frozen word/entity embedding tables. User embeddings are trained
/// separately from the graph.
#[derive(Debug, Clone)]
pub struct SynthData {
    pub tweets: Vec<Tweet>,
    pub lexicon: Lexicon,
    pub graph: SocialGraph,
    pub words: EmbeddingTable,
    pub entities: EmbeddingTable,
}

struct SynthEntity {
    id: EntityId,
    community: usize,
    surface_tokens: Vec<String>,
}

/// Deterministic under `seed`; see `SynthConfig` for the planted structure.
pub fn generate_synthetic(config: &SynthConfig, seed: u64) -> Result<SynthData> {
    if config.users == 0 {
        return Err(Error::Config(
            "synthetic corpus needs at least 1 user".into(),
        ));
    }
    if config.entities == 0 {
        return Err(Error::Config(
            "synthetic corpus needs at least 1 entity".into(),
        ));
    }
    if config.communities == 0 || config.communities > config.entities {
        return Err(Error::Config(format!(
            "community count {} must be in 1..={}",
            config.communities, config.entities
        )));
    }
    if !(0.0..=1.0).contains(&config.ambiguity) {
        return Err(Error::Config(format!(
            "ambiguity {} outside [0,1]",
            config.ambiguity
        )));
    }
    for (name, p) in [("p_in", config.p_in), ("p_out", config.p_out)] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Config(format!("{name} {p} outside [0,1]")));
        }
    }
    if config.mentions_per_tweet == 0 || config.tweets_per_user == 0 {
        return Err(Error::Config(
            "tweets_per_user and mentions_per_tweet must be positive".into(),
        ));
    }
    if config.word_dim == 0 || config.entity_dim == 0 {
        return Err(Error::Config("embedding dims must be positive".into()));
    }

    let mut rng = StdRng::seed_from_u64(seed);
    let n_comm = config.communities;

    // Entity layout: the first `n_amb * n_comm` entities form ambiguous
    // groups (one member per community, one shared surface); the rest get
    // unique surfaces. Some unique surfaces carry a "shared" prefix token
    // that is itself a surface, which plants overlapping candidates.
    let max_groups = config.entities / n_comm;
    let n_amb = (config.ambiguity * max_groups as f64).round() as usize;
    let mut entities: Vec<SynthEntity> = Vec::with_capacity(config.entities);
    for g in 0..n_amb {
        for c in 0..n_comm {
            entities.push(SynthEntity {
                id: EntityId::new(format!("amb{g}_c{c}")),
                community: c,
                surface_tokens: vec![format!("amb{g}")],
            });
        }
    }
    let first_unamb = entities.len();
    let mut idx = first_unamb;
    while idx < config.entities {
        let j = idx - first_unamb;
        let community = idx % n_comm;
        let (id, surface_tokens) = if j == 0 {
            (EntityId::new("shared"), vec!["shared".to_string()])
        } else if j.is_multiple_of(3) {
            (
                EntityId::new(format!("shared_name{idx}")),
                vec!["shared".to_string(), format!("name{idx}")],
            )
        } else {
            (
                EntityId::new(format!("name{idx}")),
                vec![format!("name{idx}")],
            )
        };
        entities.push(SynthEntity {
            id,
            community,
            surface_tokens,
        });
        idx += 1;
    }

    // Lexicon: ambiguous surfaces split the prior mass evenly, so priors
    // alone cannot resolve them.
    let mut lexicon = Lexicon::new();
    for g in 0..n_amb {
        let surface = format!("amb{g}");
        let prior = 1.0 / n_comm as f64;
        for c in 0..n_comm {
            lexicon.insert(&surface, entities[g * n_comm + c].id.clone(), prior)?;
        }
    }
    for e in &entities[first_unamb..] {
        lexicon.insert(&e.surface_tokens.join(" "), e.id.clone(), 1.0)?;
    }

    // Community entity pools.
    let mut pools: Vec<Vec<usize>> = vec![Vec::new(); n_comm];
    for (i, e) in entities.iter().enumerate() {
        pools[e.community].push(i);
    }
    for (c, pool) in pools.iter().enumerate() {
        if pool.is_empty() {
            return Err(Error::Config(format!(
                "community {c} has no entities; lower the community count"
            )));
        }
    }

    // Planted-partition author graph.
    let user_ids: Vec<UserId> = (0..config.users)
        .map(|k| UserId::new(format!("u{k}")))
        .collect();
    let mut builder = GraphBuilder::new();
    for u in &user_ids {
        builder.add_node(u.clone());
    }
    for i in 0..config.users {
        for j in (i + 1)..config.users {
            let p = if i % n_comm == j % n_comm {
                config.p_in
            } else {
                config.p_out
            };
            if p > 0.0 && rng.gen_bool(p) {
                builder.add_edge(user_ids[i].clone(), user_ids[j].clone(), 1.0);
            }
        }
    }
    let graph = builder.build();

    // Tweets: fillers around each mention keep gold spans non-overlapping by
    // construction.
    let mut tweets = Vec::with_capacity(config.users * config.tweets_per_user);
    let mut seq = 0usize;
    for (k, user) in user_ids.iter().enumerate() {
        let community = k % n_comm;
        let pool = &pools[community];
        for _ in 0..config.tweets_per_user {
            let mut tokens: Vec<String> = Vec::new();
            let mut gold = Vec::new();
            let n_mentions = rng.gen_range(1..=config.mentions_per_tweet);
            for _ in 0..rng.gen_range(1..=2usize) {
                tokens.push(format!("w{}", rng.gen_range(0..config.filler_vocab)));
            }
            for _ in 0..n_mentions {
                let entity = &entities[pool[rng.gen_range(0..pool.len())]];
                let start = tokens.len();
                tokens.extend(entity.surface_tokens.iter().cloned());
                gold.push(Annotation {
                    span: Span::new(start, tokens.len()),
                    entity: entity.id.clone(),
                });
                for _ in 0..rng.gen_range(1..=2usize) {
                    tokens.push(format!("w{}", rng.gen_range(0..config.filler_vocab)));
                }
            }
            let tweet = Tweet {
                id: format!("t{seq}"),
                author: user.clone(),
                tokens,
                gold,
            };
            debug_assert!(tweet.validate().is_ok());
            tweets.push(tweet);
            seq += 1;
        }
    }

    // Word vectors: fillers first, then surface tokens in entity order.
    let mut words = EmbeddingTable::new(TableKind::Word, config.word_dim);
    let mut seen: HashSet<String> = HashSet::new();
    let mut vocab: Vec<String> = Vec::new();
    for j in 0..config.filler_vocab {
        let w = format!("w{j}");
        if seen.insert(w.clone()) {
            vocab.push(w);
        }
    }
    for e in &entities {
        for t in &e.surface_tokens {
            if seen.insert(t.clone()) {
                vocab.push(t.clone());
            }
        }
    }
    for w in vocab {
        let v: Vec<f64> = (0..config.word_dim)
            .map(|_| rng.gen_range(-0.5..0.5))
            .collect();
        words.push(&w, v)?;
    }

    // Entity vectors: community centroid plus noise, so entities of one
    // community occupy one region of the space.
    let centroids: Vec<Vec<f64>> = (0..n_comm)
        .map(|_| {
            (0..config.entity_dim)
                .map(|_| rng.gen_range(-1.0..1.0))
                .collect()
        })
        .collect();
    let mut entity_table = EmbeddingTable::new(TableKind::Entity, config.entity_dim);
    for e in &entities {
        let v: Vec<f64> = centroids[e.community]
            .iter()
            .map(|c| c + config.entity_noise * rng.gen_range(-1.0..1.0))
            .collect();
        entity_table.push(e.id.as_str(), v)?;
    }

    Ok(SynthData {
        tweets,
        lexicon,
        graph,
        words,
        entities: entity_table,
    })
}
