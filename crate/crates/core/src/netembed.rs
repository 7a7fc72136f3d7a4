//! Undirected weighted author graphs and a second-order-proximity network
//! embedding trainer with negative sampling.
//!
//! The trainer keeps separate vertex and context vectors and returns the
//! vertex vectors: two nodes that share many neighbors see the same context
//! rows and therefore end up close, even if they are not themselves linked.
//! Edges are sampled proportionally to weight via an alias table, negatives
//! from a noise distribution proportional to the weighted out-degree raised
//! to 3/4, and the learning rate decays linearly from `initial_lr` to
//! `initial_lr / 100`.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::corpus::UserId;
use crate::error::{Error, Result};
use crate::linalg::dot;
use crate::{EmbeddingTable, TableKind};

/// Undirected weighted author graph. No self-loops; parallel edges are
/// merged by summing weights.
#[derive(Debug, Clone)]
pub struct SocialGraph {
    ids: Vec<UserId>,
    index: HashMap<UserId, usize>,
    adj: Vec<Vec<(usize, f64)>>,
    /// Canonical edge list, each undirected edge once with `a < b`.
    edges: Vec<(usize, usize, f64)>,
    skipped_self_loops: usize,
}

impl SocialGraph {
    pub fn node_count(&self) -> usize {
        self.ids.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn node_ids(&self) -> &[UserId] {
        &self.ids
    }

    pub fn node_index(&self, id: &UserId) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn edges(&self) -> &[(usize, usize, f64)] {
        &self.edges
    }

    pub fn neighbors(&self, node: usize) -> &[(usize, f64)] {
        &self.adj[node]
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        let (s, l) = if self.adj[a].len() <= self.adj[b].len() {
            (a, b)
        } else {
            (b, a)
        };
        self.adj[s].iter().any(|&(n, _)| n == l)
    }

    pub fn weighted_degree(&self, node: usize) -> f64 {
        self.adj[node].iter().map(|(_, w)| w).sum()
    }

    /// Self-loops dropped while building (kept for diagnostics).
    pub fn skipped_self_loops(&self) -> usize {
        self.skipped_self_loops
    }

    /// Writes the edge-list format, one `<a> <b> <weight>` per line.
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for &(a, b, weight) in &self.edges {
            writeln!(w, "{} {} {}", self.ids[a], self.ids[b], weight)
                .map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Accumulates nodes and edges, symmetrizing and merging duplicates.
#[derive(Debug, Default)]
pub struct GraphBuilder {
    ids: Vec<UserId>,
    index: HashMap<UserId, usize>,
    weights: HashMap<(usize, usize), f64>,
    skipped_self_loops: usize,
}

impl GraphBuilder {
    pub fn new() -> Self {
        GraphBuilder::default()
    }

    pub fn add_node(&mut self, id: UserId) -> usize {
        if let Some(&i) = self.index.get(&id) {
            return i;
        }
        let i = self.ids.len();
        self.index.insert(id.clone(), i);
        self.ids.push(id);
        i
    }

    /// Adds an undirected edge; duplicate edges (in either direction) sum
    /// their weights. Self-loops are skipped. Returns false when skipped.
    pub fn add_edge(&mut self, a: UserId, b: UserId, weight: f64) -> bool {
        if a == b {
            self.skipped_self_loops += 1;
            return false;
        }
        let ia = self.add_node(a);
        let ib = self.add_node(b);
        let key = (ia.min(ib), ia.max(ib));
        *self.weights.entry(key).or_insert(0.0) += weight;
        true
    }

    pub fn build(self) -> SocialGraph {
        let mut edges: Vec<(usize, usize, f64)> = self
            .weights
            .into_iter()
            .map(|((a, b), w)| (a, b, w))
            .collect();
        edges.sort_by_key(|&(a, b, _)| (a, b));
        let mut adj = vec![Vec::new(); self.ids.len()];
        for &(a, b, w) in &edges {
            adj[a].push((b, w));
            adj[b].push((a, w));
        }
        SocialGraph {
            ids: self.ids,
            index: self.index,
            adj,
            edges,
            skipped_self_loops: self.skipped_self_loops,
        }
    }
}

/// Loads an edge list: `<user_a> <user_b> [weight]` per line, weight
/// defaulting to 1. Self-loops are skipped; malformed lines are errors.
pub fn load_graph(path: &Path) -> Result<SocialGraph> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut builder = GraphBuilder::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() < 2 || fields.len() > 3 {
            return Err(Error::parse(
                path,
                lineno,
                format!("expected '<a> <b> [weight]', got {} fields", fields.len()),
            ));
        }
        let weight = if fields.len() == 3 {
            let w: f64 = fields[2]
                .parse()
                .map_err(|_| Error::parse(path, lineno, format!("bad weight {:?}", fields[2])))?;
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::parse(
                    path,
                    lineno,
                    format!("weight {w} must be positive"),
                ));
            }
            w
        } else {
            1.0
        };
        builder.add_edge(UserId::new(fields[0]), UserId::new(fields[1]), weight);
    }
    Ok(builder.build())
}

/// Hyperparameters for `train_line2`.
#[derive(Debug, Clone)]
pub struct NetEmbedConfig {
    pub dim: usize,
    pub negative_samples: usize,
    /// 0 means auto: 1000 * edge count, capped at `MAX_AUTO_SAMPLES`.
    pub total_samples: usize,
    pub initial_lr: f64,
    pub seed: u64,
    /// 1 = deterministic; >1 = lock-free parallel updates, results are
    /// seed-irreproducible by contract.
    pub threads: usize,
}

pub const MAX_AUTO_SAMPLES: usize = 10_000_000;

impl Default for NetEmbedConfig {
    fn default() -> Self {
        NetEmbedConfig {
            dim: 100,
            negative_samples: 5,
            total_samples: 0,
            initial_lr: 0.025,
            seed: 42,
            threads: 1,
        }
    }
}

impl NetEmbedConfig {
    fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Config("embedding dim must be positive".into()));
        }
        if self.negative_samples == 0 {
            return Err(Error::Config("need at least 1 negative sample".into()));
        }
        if !(self.initial_lr.is_finite() && self.initial_lr > 0.0) {
            return Err(Error::Config(format!(
                "initial_lr {} must be positive",
                self.initial_lr
            )));
        }
        if self.threads == 0 {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        Ok(())
    }

    pub fn effective_samples(&self, n_edges: usize) -> usize {
        if self.total_samples > 0 {
            self.total_samples
        } else {
            (1000 * n_edges).min(MAX_AUTO_SAMPLES)
        }
    }
}

/// O(1) sampling from a fixed discrete distribution (Vose alias method).
pub(crate) struct AliasTable {
    prob: Vec<f64>,
    alias: Vec<usize>,
}

impl AliasTable {
    pub(crate) fn new(weights: &[f64]) -> AliasTable {
        assert!(!weights.is_empty(), "alias table needs at least one weight");
        let total: f64 = weights.iter().sum();
        assert!(total > 0.0, "alias table needs positive total weight");
        let n = weights.len();
        let mut scaled: Vec<f64> = weights.iter().map(|w| w * n as f64 / total).collect();
        let mut small: Vec<usize> = Vec::new();
        let mut large: Vec<usize> = Vec::new();
        for (i, &s) in scaled.iter().enumerate() {
            if s < 1.0 {
                small.push(i);
            } else {
                large.push(i);
            }
        }
        let mut prob = vec![1.0; n];
        let mut alias = vec![0usize; n];
        while let (Some(s), Some(l)) = (small.pop(), large.pop()) {
            prob[s] = scaled[s];
            alias[s] = l;
            scaled[l] -= 1.0 - scaled[s];
            if scaled[l] < 1.0 {
                small.push(l);
            } else {
                large.push(l);
            }
        }
        // Leftovers are 1.0 up to rounding.
        AliasTable { prob, alias }
    }

    pub(crate) fn sample(&self, rng: &mut impl Rng) -> usize {
        let i = rng.gen_range(0..self.prob.len());
        if rng.gen::<f64>() < self.prob[i] {
            i
        } else {
            self.alias[i]
        }
    }
}

// Logits are clamped to [-6, 6] before the sigmoid; a documented
// approximation that also guards against overflow.
fn sigmoid6(x: f64) -> f64 {
    let x = x.clamp(-6.0, 6.0);
    1.0 / (1.0 + (-x).exp())
}

struct SamplingSetup {
    directed: Vec<(usize, usize)>,
    edge_alias: AliasTable,
    noise_alias: AliasTable,
}

fn sampling_setup(graph: &SocialGraph) -> SamplingSetup {
    let mut directed = Vec::with_capacity(graph.edge_count() * 2);
    let mut edge_weights = Vec::with_capacity(graph.edge_count() * 2);
    for &(a, b, w) in graph.edges() {
        directed.push((a, b));
        edge_weights.push(w);
        directed.push((b, a));
        edge_weights.push(w);
    }
    let noise_weights: Vec<f64> = (0..graph.node_count())
        .map(|i| graph.weighted_degree(i).powf(0.75))
        .collect();
    SamplingSetup {
        directed,
        edge_alias: AliasTable::new(&edge_weights),
        noise_alias: AliasTable::new(&noise_weights),
    }
}

/// Trains user vectors from the graph; deterministic when
/// `config.threads == 1`. Errors on an empty edge set.
pub fn train_line2(graph: &SocialGraph, config: &NetEmbedConfig) -> Result<EmbeddingTable> {
    config.validate()?;
    if graph.edge_count() == 0 {
        return Err(Error::Validation(
            "cannot train embeddings on a graph with no edges".into(),
        ));
    }
    let dim = config.dim;
    let n = graph.node_count();
    let setup = sampling_setup(graph);
    let total = config.effective_samples(graph.edge_count());

    let mut rng = StdRng::seed_from_u64(config.seed);
    let bound = 0.5 / dim as f64;
    let init: Vec<f64> = (0..n * dim).map(|_| rng.gen_range(-bound..bound)).collect();

    let vertices = if config.threads <= 1 {
        train_single(&setup, init, n, dim, total, config, rng)
    } else {
        train_parallel(&setup, init, n, dim, total, config)
    };

    let mut table = EmbeddingTable::new(TableKind::User, dim);
    for (i, id) in graph.node_ids().iter().enumerate() {
        table.push(id.as_str(), vertices[i * dim..(i + 1) * dim].to_vec())?;
    }
    Ok(table)
}

fn train_single(
    setup: &SamplingSetup,
    mut vertices: Vec<f64>,
    n: usize,
    dim: usize,
    total: usize,
    config: &NetEmbedConfig,
    mut rng: StdRng,
) -> Vec<f64> {
    let mut contexts = vec![0.0; n * dim];
    let mut update = vec![0.0; dim];
    for s in 0..total {
        let lr = config.initial_lr * (1.0 - 0.99 * s as f64 / total as f64);
        let (u, v) = setup.directed[setup.edge_alias.sample(&mut rng)];
        update.iter_mut().for_each(|x| *x = 0.0);
        for k in 0..=config.negative_samples {
            let (target, label) = if k == 0 {
                (v, 1.0)
            } else {
                (setup.noise_alias.sample(&mut rng), 0.0)
            };
            let vu = &vertices[u * dim..(u + 1) * dim];
            let ctx = &mut contexts[target * dim..(target + 1) * dim];
            let g = (label - sigmoid6(dot(vu, ctx))) * lr;
            for i in 0..dim {
                update[i] += g * ctx[i];
                ctx[i] += g * vu[i];
            }
        }
        let vu = &mut vertices[u * dim..(u + 1) * dim];
        for i in 0..dim {
            vu[i] += update[i];
        }
    }
    vertices
}

// Lock-free parallel variant: rows are shared as atomics and updated with
// plain load/store pairs, so concurrent updates may overwrite each other.
// Tolerated by contract; results are not reproducible across runs.
fn train_parallel(
    setup: &SamplingSetup,
    init: Vec<f64>,
    n: usize,
    dim: usize,
    total: usize,
    config: &NetEmbedConfig,
) -> Vec<f64> {
    let vertices: Vec<AtomicU64> = init
        .into_iter()
        .map(|v| AtomicU64::new(v.to_bits()))
        .collect();
    let contexts: Vec<AtomicU64> = (0..n * dim)
        .map(|_| AtomicU64::new(0.0f64.to_bits()))
        .collect();
    let threads = config.threads;
    let per_thread = total.div_ceil(threads);

    std::thread::scope(|scope| {
        for tid in 0..threads {
            let vertices = &vertices;
            let contexts = &contexts;
            scope.spawn(move || {
                let mut rng = StdRng::seed_from_u64(config.seed.wrapping_add(1 + tid as u64));
                let mut update = vec![0.0; dim];
                let mut vu = vec![0.0; dim];
                for s in 0..per_thread {
                    let lr = config.initial_lr * (1.0 - 0.99 * s as f64 / per_thread as f64);
                    let (u, v) = setup.directed[setup.edge_alias.sample(&mut rng)];
                    for i in 0..dim {
                        vu[i] = f64::from_bits(vertices[u * dim + i].load(Ordering::Relaxed));
                        update[i] = 0.0;
                    }
                    for k in 0..=config.negative_samples {
                        let (target, label) = if k == 0 {
                            (v, 1.0)
                        } else {
                            (setup.noise_alias.sample(&mut rng), 0.0)
                        };
                        let base = target * dim;
                        let mut x = 0.0;
                        for i in 0..dim {
                            x += vu[i] * f64::from_bits(contexts[base + i].load(Ordering::Relaxed));
                        }
                        let g = (label - sigmoid6(x)) * lr;
                        for i in 0..dim {
                            let c = f64::from_bits(contexts[base + i].load(Ordering::Relaxed));
                            update[i] += g * c;
                            contexts[base + i].store((c + g * vu[i]).to_bits(), Ordering::Relaxed);
                        }
                    }
                    let base = u * dim;
                    for i in 0..dim {
                        let cur = f64::from_bits(vertices[base + i].load(Ordering::Relaxed));
                        vertices[base + i].store((cur + update[i]).to_bits(), Ordering::Relaxed);
                    }
                }
            });
        }
    });

    vertices
        .into_iter()
        .map(|a| f64::from_bits(a.into_inner()))
        .collect()
}
