//! Entity-driven similarity between users, averaged over connected versus
//! disconnected pairs of an author graph.
//!
//! Each user is reduced to the set of entities they have mentioned; the
//! similarity of two users is the cosine of the binary incidence vectors,
//! which for sets A and B is `|A ∩ B| / sqrt(|A| * |B|)`. The metric is
//! name-level: it assumes every id names one entity.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::corpus::{EntityId, Tweet, UserId};
use crate::error::{Error, Result};
use crate::netembed::SocialGraph;

/// The set of entities one user has mentioned.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserEntityProfile {
    pub user: UserId,
    pub entities: HashSet<EntityId>,
}

impl UserEntityProfile {
    pub fn new(user: UserId) -> Self {
        UserEntityProfile {
            user,
            entities: HashSet::new(),
        }
    }
}

/// Cosine similarity of binary incidence vectors; 0 when either set is
/// empty.
pub fn entity_similarity(a: &UserEntityProfile, b: &UserEntityProfile) -> f64 {
    if a.entities.is_empty() || b.entities.is_empty() {
        return 0.0;
    }
    let (small, large) = if a.entities.len() <= b.entities.len() {
        (&a.entities, &b.entities)
    } else {
        (&b.entities, &a.entities)
    };
    let common = small.iter().filter(|e| large.contains(*e)).count();
    common as f64 / ((a.entities.len() as f64).sqrt() * (b.entities.len() as f64).sqrt())
}

/// Builds one profile per author from gold annotations.
pub fn profiles_from_corpus(tweets: &[Tweet]) -> Vec<UserEntityProfile> {
    let mut order: Vec<UserId> = Vec::new();
    let mut by_user: HashMap<UserId, HashSet<EntityId>> = HashMap::new();
    for tweet in tweets {
        if !by_user.contains_key(&tweet.author) {
            order.push(tweet.author.clone());
        }
        let set = by_user.entry(tweet.author.clone()).or_default();
        for ann in &tweet.gold {
            set.insert(ann.entity.clone());
        }
    }
    order
        .into_iter()
        .map(|user| {
            let entities = by_user.remove(&user).unwrap_or_default();
            UserEntityProfile { user, entities }
        })
        .collect()
}

/// Controls the exact-vs-sampled disconnected-pair mean.
#[derive(Debug, Clone)]
pub struct HomophilyConfig {
    /// Exact enumeration of disconnected pairs up to this node count.
    pub exact_threshold: usize,
    /// Pairs sampled uniformly when above the threshold.
    pub sample_pairs: usize,
    pub seed: u64,
}

impl Default for HomophilyConfig {
    fn default() -> Self {
        HomophilyConfig {
            exact_threshold: 3000,
            sample_pairs: 1_000_000,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone)]
pub struct HomophilyReport {
    /// Mean entity-driven similarity over edges.
    pub sim_connected: f64,
    /// Mean over unordered non-adjacent distinct pairs (exact or sampled).
    pub sim_disconnected: f64,
    pub connected_pairs: usize,
    /// Pairs that entered the disconnected mean.
    pub disconnected_pairs: usize,
    pub sampled: bool,
    /// Graph nodes with no profile; they score as empty sets.
    pub missing_profiles: usize,
}

impl HomophilyReport {
    pub fn ratio(&self) -> f64 {
        if self.sim_disconnected == 0.0 {
            f64::INFINITY
        } else {
            self.sim_connected / self.sim_disconnected
        }
    }
}

/// Computes the connected and disconnected similarity means over the graph.
/// Errors when the graph has no edges (the connected mean would be
/// undefined).
pub fn homophily_report(
    graph: &SocialGraph,
    profiles: &[UserEntityProfile],
    config: &HomophilyConfig,
) -> Result<HomophilyReport> {
    if graph.edge_count() == 0 {
        return Err(Error::Validation(
            "homophily report needs a graph with at least one edge".into(),
        ));
    }
    let by_user: HashMap<&UserId, &UserEntityProfile> =
        profiles.iter().map(|p| (&p.user, p)).collect();
    let mut missing = 0usize;
    let node_profiles: Vec<UserEntityProfile> = graph
        .node_ids()
        .iter()
        .map(|id| match by_user.get(id) {
            Some(p) => (*p).clone(),
            None => {
                missing += 1;
                UserEntityProfile::new(id.clone())
            }
        })
        .collect();

    let mut connected_sum = 0.0;
    for &(a, b, _) in graph.edges() {
        connected_sum += entity_similarity(&node_profiles[a], &node_profiles[b]);
    }
    let sim_connected = connected_sum / graph.edge_count() as f64;

    let n = graph.node_count();
    let (disconnected_sum, disconnected_pairs, sampled) = if n <= config.exact_threshold {
        let mut sum = 0.0;
        let mut count = 0usize;
        for a in 0..n {
            for b in (a + 1)..n {
                if graph.has_edge(a, b) {
                    continue;
                }
                sum += entity_similarity(&node_profiles[a], &node_profiles[b]);
                count += 1;
            }
        }
        (sum, count, false)
    } else {
        let mut rng = StdRng::seed_from_u64(config.seed);
        let mut sum = 0.0;
        let mut count = 0usize;
        let mut attempts = 0usize;
        let max_attempts = config.sample_pairs.saturating_mul(20);
        while count < config.sample_pairs && attempts < max_attempts {
            attempts += 1;
            let a = rng.gen_range(0..n);
            let b = rng.gen_range(0..n);
            if a == b || graph.has_edge(a, b) {
                continue;
            }
            sum += entity_similarity(&node_profiles[a], &node_profiles[b]);
            count += 1;
        }
        (sum, count, true)
    };
    if disconnected_pairs == 0 {
        return Err(Error::Validation(
            "graph has no disconnected pairs to average over".into(),
        ));
    }

    Ok(HomophilyReport {
        sim_connected,
        sim_disconnected: disconnected_sum / disconnected_pairs as f64,
        connected_pairs: graph.edge_count(),
        disconnected_pairs,
        sampled,
        missing_profiles: missing,
    })
}

/// Loads `<user_id>\t<entity_id>` incidence lines into profiles.
pub fn load_profiles(path: &Path) -> Result<Vec<UserEntityProfile>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut order: Vec<UserId> = Vec::new();
    let mut by_user: HashMap<UserId, HashSet<EntityId>> = HashMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 2 {
            return Err(Error::parse(
                path,
                idx + 1,
                format!("expected '<user> <entity>', got {} fields", fields.len()),
            ));
        }
        let user = UserId::new(fields[0]);
        if !by_user.contains_key(&user) {
            order.push(user.clone());
        }
        by_user
            .entry(user)
            .or_default()
            .insert(EntityId::new(fields[1]));
    }
    Ok(order
        .into_iter()
        .map(|user| {
            let entities = by_user.remove(&user).unwrap_or_default();
            UserEntityProfile { user, entities }
        })
        .collect())
}

pub fn save_profiles(profiles: &[UserEntityProfile], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for p in profiles {
        let mut entities: Vec<&EntityId> = p.entities.iter().collect();
        entities.sort();
        for e in entities {
            writeln!(w, "{}\t{}", p.user, e).map_err(|e| Error::io(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netembed::GraphBuilder;
    use proptest::prelude::*;

    fn profile(user: &str, entities: &[&str]) -> UserEntityProfile {
        UserEntityProfile {
            user: UserId::new(user),
            entities: entities.iter().map(|e| EntityId::new(*e)).collect(),
        }
    }

    #[test]
    fn identical_nonempty_sets_score_one() {
        let a = profile("a", &["e1", "e2"]);
        let b = profile("b", &["e1", "e2"]);
        assert!((entity_similarity(&a, &b) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn disjoint_sets_score_zero() {
        let a = profile("a", &["e1"]);
        let b = profile("b", &["e2"]);
        assert_eq!(entity_similarity(&a, &b), 0.0);
    }

    #[test]
    fn overlap_example_matches_formula() {
        let a = profile("a", &["e1", "e2"]);
        let b = profile("b", &["e2", "e3", "e4"]);
        let expected = 1.0 / (2.0f64 * 3.0).sqrt();
        assert!((entity_similarity(&a, &b) - expected).abs() < 1e-12);
        assert!((expected - 0.4082).abs() < 5e-5);
    }

    #[test]
    fn empty_profile_scores_zero() {
        let a = profile("a", &[]);
        let b = profile("b", &["e1"]);
        assert_eq!(entity_similarity(&a, &b), 0.0);
        assert_eq!(entity_similarity(&a, &a), 0.0);
    }

    proptest! {
        #[test]
        fn similarity_symmetric_and_bounded(
            xs in proptest::collection::hash_set(0u8..12, 0..8),
            ys in proptest::collection::hash_set(0u8..12, 0..8),
        ) {
            let a = UserEntityProfile {
                user: UserId::new("a"),
                entities: xs.iter().map(|e| EntityId::new(format!("e{e}"))).collect(),
            };
            let b = UserEntityProfile {
                user: UserId::new("b"),
                entities: ys.iter().map(|e| EntityId::new(format!("e{e}"))).collect(),
            };
            let s = entity_similarity(&a, &b);
            prop_assert!((0.0..=1.0 + 1e-12).contains(&s));
            prop_assert_eq!(s, entity_similarity(&b, &a));
        }
    }

    #[test]
    fn clique_plus_isolate_report() {
        let mut b = GraphBuilder::new();
        b.add_edge(UserId::new("a"), UserId::new("b"), 1.0);
        b.add_node(UserId::new("c"));
        let graph = b.build();
        let profiles = vec![
            profile("a", &["e1", "e2"]),
            profile("b", &["e1", "e2"]),
            profile("c", &["e9"]),
        ];
        let report = homophily_report(&graph, &profiles, &HomophilyConfig::default()).unwrap();
        assert!((report.sim_connected - 1.0).abs() < 1e-12);
        assert_eq!(report.sim_disconnected, 0.0);
        assert_eq!(report.connected_pairs, 1);
        assert_eq!(report.disconnected_pairs, 2);
        assert!(!report.sampled);
        assert_eq!(report.missing_profiles, 0);
    }

    #[test]
    fn identical_profiles_flatten_the_signal() {
        let mut b = GraphBuilder::new();
        b.add_edge(UserId::new("a"), UserId::new("b"), 1.0);
        b.add_node(UserId::new("c"));
        let graph = b.build();
        let profiles = vec![
            profile("a", &["e1"]),
            profile("b", &["e1"]),
            profile("c", &["e1"]),
        ];
        let report = homophily_report(&graph, &profiles, &HomophilyConfig::default()).unwrap();
        assert!((report.sim_connected - 1.0).abs() < 1e-12);
        assert!((report.sim_disconnected - 1.0).abs() < 1e-12);
    }

    #[test]
    fn missing_profiles_counted_as_empty() {
        let mut b = GraphBuilder::new();
        b.add_edge(UserId::new("a"), UserId::new("b"), 1.0);
        b.add_node(UserId::new("c"));
        let graph = b.build();
        let profiles = vec![profile("a", &["e1"]), profile("c", &["e1"])];
        let report = homophily_report(&graph, &profiles, &HomophilyConfig::default()).unwrap();
        assert_eq!(report.missing_profiles, 1);
        assert_eq!(report.sim_connected, 0.0);
    }

    #[test]
    fn complete_graph_has_no_disconnected_pairs() {
        let mut b = GraphBuilder::new();
        b.add_edge(UserId::new("a"), UserId::new("b"), 1.0);
        let graph = b.build();
        let profiles = vec![profile("a", &["e1"]), profile("b", &["e1"])];
        assert!(homophily_report(&graph, &profiles, &HomophilyConfig::default()).is_err());
    }

    #[test]
    fn no_edges_is_an_error() {
        let mut b = GraphBuilder::new();
        b.add_node(UserId::new("a"));
        b.add_node(UserId::new("b"));
        let graph = b.build();
        assert!(homophily_report(&graph, &[], &HomophilyConfig::default()).is_err());
    }

    #[test]
    fn sampled_mean_tracks_exact_mean() {
        let mut b = GraphBuilder::new();
        for i in 0..30 {
            b.add_edge(
                UserId::new(format!("u{i}")),
                UserId::new(format!("u{}", (i + 1) % 30)),
                1.0,
            );
        }
        let graph = b.build();
        let profiles: Vec<UserEntityProfile> = (0..30)
            .map(|i| profile(&format!("u{i}"), &[&format!("e{}", i % 3), "e9"]))
            .collect();
        let exact = homophily_report(&graph, &profiles, &HomophilyConfig::default()).unwrap();
        let sampled_config = HomophilyConfig {
            exact_threshold: 10,
            sample_pairs: 60_000,
            seed: 9,
        };
        let sampled = homophily_report(&graph, &profiles, &sampled_config).unwrap();
        assert!(sampled.sampled);
        assert!(
            (exact.sim_disconnected - sampled.sim_disconnected).abs() < 0.01,
            "exact {} vs sampled {}",
            exact.sim_disconnected,
            sampled.sim_disconnected
        );
        assert_eq!(exact.sim_connected, sampled.sim_connected);
    }

    // Brute-force monotonicity: dropping the lowest-similarity edges can
    // only raise the connected mean.
    #[test]
    fn removing_dissimilar_edges_raises_connected_mean() {
        let mut edges = vec![
            ("u0", "u1", 1.0),
            ("u1", "u2", 1.0),
            ("u2", "u3", 1.0),
            ("u3", "u0", 1.0),
            ("u0", "u2", 1.0),
        ];
        let profiles = vec![
            profile("u0", &["e1", "e2"]),
            profile("u1", &["e1"]),
            profile("u2", &["e7"]),
            profile("u3", &["e1", "e7"]),
        ];
        let build = |edges: &[(&str, &str, f64)]| {
            let mut b = GraphBuilder::new();
            for p in &profiles {
                b.add_node(p.user.clone());
            }
            for (a, c, w) in edges {
                b.add_edge(UserId::new(*a), UserId::new(*c), *w);
            }
            b.build()
        };
        let full = build(&edges);
        let report_full = homophily_report(&full, &profiles, &HomophilyConfig::default()).unwrap();
        // Drop edges whose endpoint similarity is below the connected mean.
        let by_user: HashMap<&str, &UserEntityProfile> =
            profiles.iter().map(|p| (p.user.as_str(), p)).collect();
        edges.retain(|(a, b, _)| {
            entity_similarity(by_user[a], by_user[b]) >= report_full.sim_connected
        });
        let pruned = build(&edges);
        let report_pruned =
            homophily_report(&pruned, &profiles, &HomophilyConfig::default()).unwrap();
        assert!(report_pruned.sim_connected >= report_full.sim_connected - 1e-12);
    }

    #[test]
    fn profiles_save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("profiles.tsv");
        let profiles = vec![profile("a", &["e2", "e1"]), profile("b", &["e3"])];
        save_profiles(&profiles, &path).unwrap();
        let loaded = load_profiles(&path).unwrap();
        assert_eq!(loaded, profiles);
    }

    #[test]
    fn profiles_from_corpus_collects_gold_entities() {
        use crate::corpus::{Annotation, Tweet};
        let tweets = vec![
            Tweet {
                id: "t0".into(),
                author: UserId::new("u1"),
                tokens: vec!["a".into(), "b".into()],
                gold: vec![Annotation::new(0, 1, "e1")],
            },
            Tweet {
                id: "t1".into(),
                author: UserId::new("u1"),
                tokens: vec!["c".into()],
                gold: vec![Annotation::new(0, 1, "e2")],
            },
            Tweet {
                id: "t2".into(),
                author: UserId::new("u2"),
                tokens: vec!["d".into()],
                gold: vec![],
            },
        ];
        let profiles = profiles_from_corpus(&tweets);
        assert_eq!(profiles.len(), 2);
        assert_eq!(profiles[0].user, UserId::new("u1"));
        assert_eq!(profiles[0].entities.len(), 2);
        assert!(profiles[1].entities.is_empty());
    }
}
