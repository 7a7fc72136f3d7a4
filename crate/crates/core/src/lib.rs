//! Structured entity linking for short social-media texts.
//!
//! The pipeline: lexicon n-gram matching proposes mention candidates; each
//! candidate is scored against its entity candidates (and Nil) by an MLP
//! over surface features plus bilinear couplings of user, mention, and
//! entity vectors; a non-overlapping Viterbi variant picks the best
//! consistent assignment per message; training minimizes a structured hinge
//! loss through loss-augmented decoding and SGD. Supporting machinery:
//! a second-order-proximity network-embedding trainer for user vectors, an
//! entity-homophily analyzer, a synthetic corpus generator, and an
//! evaluation harness with bootstrap significance testing.

pub mod corpus;
pub mod embeddings;
pub mod error;
pub mod eval;
pub mod homophily;
pub mod inference;
pub mod linalg;
pub mod netembed;
pub mod scorer;
pub mod training;

pub use corpus::{
    generate_candidates, generate_synthetic, load_corpus, save_corpus, tokenize, Annotation,
    EntityId, Lexicon, MentionCandidate, Span, SynthConfig, SynthData, Tweet, UserId,
};
pub use embeddings::{mention_vector, EmbeddingTable, TableKind};
pub use error::{Error, Result};
pub use eval::{
    bootstrap_compare, evaluate, load_links, match_and_count, prf1, save_links,
    BootstrapComparison, LinkingResult, TweetLinks,
};
pub use homophily::{
    entity_similarity, homophily_report, load_profiles, profiles_from_corpus, save_profiles,
    HomophilyConfig, HomophilyReport, UserEntityProfile,
};
pub use inference::{
    brute_force_decode, brute_force_scores, decode, decode_loss_augmented, decode_scores,
    link_corpus, prev_index, Assignment, CandidateScores,
};
pub use netembed::{load_graph, train_line2, GraphBuilder, NetEmbedConfig, SocialGraph};
pub use scorer::{DefaultFeatures, FeatureExtractor, Gradients, Model};
pub use training::{gold_assignment, sgd_step, train, tweet_loss, TrainConfig, TrainState};
