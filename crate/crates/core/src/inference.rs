//! Exact MAP decoding over non-overlapping entity assignments.
//!
//! Candidates arrive sorted by (end, start). Each candidate either takes its
//! best-scoring entity or Nil; because there are no pairwise terms between
//! entities, the DP only needs `prev(t)` — the latest earlier candidate whose
//! span ends at or before this one starts. Choosing an entity at `t` forces
//! Nil on every candidate strictly between `prev(t)` and `t` (they all
//! overlap `t`), while choosing Nil imposes no span constraint, so the Nil
//! branch chains to the immediately preceding candidate even when the two
//! overlap.
//!
//! Ties break toward Nil, then toward the lowest-index entity in lexicon
//! order; the brute-force oracle enumerates in an order that realizes the
//! same preference, so decoder and oracle agree on assignments, not just
//! scores.

use crate::corpus::{
    generate_candidates, Annotation, EntityId, Lexicon, MentionCandidate, Span, Tweet, UserId,
};
use crate::error::{Error, Result};
use crate::eval::TweetLinks;
use crate::scorer::Model;

/// Labels for a sorted candidate list; `None` is Nil. Valid assignments give
/// non-Nil labels only to pairwise non-overlapping spans.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub labels: Vec<Option<EntityId>>,
}

impl Assignment {
    pub fn nil(len: usize) -> Assignment {
        Assignment {
            labels: vec![None; len],
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Non-Nil decisions as (span, entity) annotations, in candidate order.
    pub fn links(&self, candidates: &[MentionCandidate]) -> Vec<Annotation> {
        self.labels
            .iter()
            .zip(candidates)
            .filter_map(|(label, cand)| {
                label.as_ref().map(|entity| Annotation {
                    span: cand.span,
                    entity: entity.clone(),
                })
            })
            .collect()
    }

    /// Labels drawn from each candidate's list and non-Nil spans pairwise
    /// non-overlapping.
    pub fn is_valid(&self, candidates: &[MentionCandidate]) -> bool {
        if self.labels.len() != candidates.len() {
            return false;
        }
        let mut spans: Vec<Span> = Vec::new();
        for (label, cand) in self.labels.iter().zip(candidates) {
            if let Some(entity) = label {
                if !cand.candidates.contains(entity) {
                    return false;
                }
                if spans.iter().any(|s| s.overlaps(&cand.span)) {
                    return false;
                }
                spans.push(cand.span);
            }
        }
        true
    }
}

/// Per-candidate label scores: `nil[t]` and `entity[t][k]` for the k-th
/// entity in lexicon order.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateScores {
    pub nil: Vec<f64>,
    pub entity: Vec<Vec<f64>>,
}

impl CandidateScores {
    pub fn len(&self) -> usize {
        self.nil.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nil.is_empty()
    }

    /// Adds `weight` to every label that disagrees with `gold` (the
    /// decomposable weighted Hamming term).
    pub fn augmented(&self, gold: &[Option<usize>], weight: f64) -> CandidateScores {
        assert_eq!(gold.len(), self.len());
        let nil = self
            .nil
            .iter()
            .zip(gold)
            .map(|(s, g)| if g.is_some() { s + weight } else { *s })
            .collect();
        let entity = self
            .entity
            .iter()
            .zip(gold)
            .map(|(scores, g)| {
                scores
                    .iter()
                    .enumerate()
                    .map(|(k, s)| if *g == Some(k) { *s } else { s + weight })
                    .collect()
            })
            .collect();
        CandidateScores { nil, entity }
    }
}

/// Builds the score table the decoder consumes: one Nil score and one score
/// per entity candidate, all via `Model::score_g`.
pub fn score_table(
    model: &Model,
    tweet: &Tweet,
    candidates: &[MentionCandidate],
    user: &UserId,
) -> Result<CandidateScores> {
    let mut nil = Vec::with_capacity(candidates.len());
    let mut entity = Vec::with_capacity(candidates.len());
    for cand in candidates {
        nil.push(model.score_g(tweet, cand, None, user)?);
        let scores: Result<Vec<f64>> = cand
            .candidates
            .iter()
            .map(|e| model.score_g(tweet, cand, Some(e), user))
            .collect();
        entity.push(scores?);
    }
    Ok(CandidateScores { nil, entity })
}

/// Index of the latest candidate before `t` whose span ends at or before
/// `t`'s start. Candidates must be sorted by (end, start).
pub fn prev_index(candidates: &[MentionCandidate], t: usize) -> Option<usize> {
    prev_index_spans(&candidates.iter().map(|c| c.span).collect::<Vec<_>>(), t)
}

fn prev_index_spans(spans: &[Span], t: usize) -> Option<usize> {
    let start = spans[t].start;
    // Ends are non-decreasing in sort order, so the candidates with
    // end <= start form a prefix.
    let mut lo = 0usize;
    let mut hi = t;
    while lo < hi {
        let mid = (lo + hi) / 2;
        if spans[mid].end <= start {
            lo = mid + 1;
        } else {
            hi = mid;
        }
    }
    if lo > 0 {
        Some(lo - 1)
    } else {
        None
    }
}

fn debug_assert_sorted(spans: &[Span]) {
    debug_assert!(
        spans
            .windows(2)
            .all(|w| (w[0].end, w[0].start) <= (w[1].end, w[1].start)),
        "candidates must be sorted by (end, start)"
    );
}

/// Sum of the scores a label vector selects, in ascending candidate order.
/// Decoder and oracle both report this sum, so agreeing assignments yield
/// bit-identical scores.
fn assignment_score(labels: &[Option<usize>], scores: &CandidateScores) -> f64 {
    let mut total = 0.0;
    for (t, label) in labels.iter().enumerate() {
        total += match label {
            Some(k) => scores.entity[t][*k],
            None => scores.nil[t],
        };
    }
    total
}

/// DP over the non-overlapping structure. Returns the argmax label vector
/// (indices into each candidate's entity list) and its score. Empty input
/// decodes to an empty assignment with score 0.
pub fn decode_scores(spans: &[Span], scores: &CandidateScores) -> (Vec<Option<usize>>, f64) {
    let t_count = spans.len();
    assert_eq!(scores.len(), t_count);
    debug_assert_sorted(spans);
    if t_count == 0 {
        return (Vec::new(), 0.0);
    }

    // Best non-Nil label per candidate; Nil-only candidates keep None.
    let best: Vec<Option<usize>> = scores
        .entity
        .iter()
        .map(|list| {
            let mut best: Option<usize> = None;
            for (k, s) in list.iter().enumerate() {
                // Strict > keeps the lowest lexicon rank on ties.
                if best.is_none_or(|b| *s > list[b]) {
                    best = Some(k);
                }
            }
            best
        })
        .collect();
    let prev: Vec<Option<usize>> = (0..t_count).map(|t| prev_index_spans(spans, t)).collect();

    // a[i] = best score over the first i candidates.
    let mut a = vec![0.0; t_count + 1];
    let mut take_entity = vec![false; t_count];
    for t in 0..t_count {
        let psi_nil = scores.nil[t] + a[t];
        let psi_entity = best[t].map(|k| {
            let mut s = scores.entity[t][k];
            let from = prev[t].map_or(0, |p| p + 1);
            for between in from..t {
                s += scores.nil[between];
            }
            s + prev[t].map_or(0.0, |p| a[p + 1])
        });
        match psi_entity {
            // Ties prefer Nil.
            Some(pe) if pe > psi_nil => {
                a[t + 1] = pe;
                take_entity[t] = true;
            }
            _ => {
                a[t + 1] = psi_nil;
            }
        }
    }

    let mut labels: Vec<Option<usize>> = vec![None; t_count];
    let mut t = t_count;
    while t > 0 {
        let cur = t - 1;
        if take_entity[cur] {
            labels[cur] = best[cur];
            t = prev[cur].map_or(0, |p| p + 1);
        } else {
            t = cur;
        }
    }

    let score = assignment_score(&labels, scores);
    (labels, score)
}

pub const BRUTE_FORCE_LIMIT: u128 = 1_000_000;

/// Exhaustive oracle: enumerates every valid label vector and maximizes the
/// score, with the decoder's tie-breaking (assignments are visited so that
/// Nil at later candidates, then lower entity ranks, come first, and only a
/// strictly better score replaces the incumbent). Errors when the label
/// space exceeds `BRUTE_FORCE_LIMIT`.
pub fn brute_force_scores(
    spans: &[Span],
    scores: &CandidateScores,
) -> Result<(Vec<Option<usize>>, f64)> {
    let t_count = spans.len();
    assert_eq!(scores.len(), t_count);
    debug_assert_sorted(spans);
    let mut space: u128 = 1;
    for list in &scores.entity {
        space = space.saturating_mul(list.len() as u128 + 1);
        if space > BRUTE_FORCE_LIMIT {
            return Err(Error::SearchSpace(space, BRUTE_FORCE_LIMIT));
        }
    }

    struct Search<'a> {
        spans: &'a [Span],
        scores: &'a CandidateScores,
        labels: Vec<Option<usize>>,
        chosen: Vec<Span>,
        best: Option<(f64, Vec<Option<usize>>)>,
    }

    impl Search<'_> {
        // Digits run from the last candidate down, Nil before entities, so
        // the first maximal assignment found matches the DP preference.
        fn recurse(&mut self, t: isize, acc: f64) {
            if t < 0 {
                if self.best.as_ref().is_none_or(|(b, _)| acc > *b) {
                    self.best = Some((acc, self.labels.clone()));
                }
                return;
            }
            let t = t as usize;
            self.labels[t] = None;
            self.recurse(t as isize - 1, acc + self.scores.nil[t]);
            let span = self.spans[t];
            if self.chosen.iter().all(|s| !s.overlaps(&span)) {
                self.chosen.push(span);
                for k in 0..self.scores.entity[t].len() {
                    self.labels[t] = Some(k);
                    self.recurse(t as isize - 1, acc + self.scores.entity[t][k]);
                }
                self.chosen.pop();
                self.labels[t] = None;
            }
        }
    }

    let mut search = Search {
        spans,
        scores,
        labels: vec![None; t_count],
        chosen: Vec::new(),
        best: None,
    };
    search.recurse(t_count as isize - 1, 0.0);
    let (_, labels) = search.best.expect("all-Nil is always valid");
    let score = assignment_score(&labels, scores);
    Ok((labels, score))
}

/// Number of valid label vectors an exhaustive search visits.
pub fn valid_assignment_count(spans: &[Span], entity_counts: &[usize]) -> u128 {
    fn recurse(spans: &[Span], counts: &[usize], t: isize, chosen: &mut Vec<Span>) -> u128 {
        if t < 0 {
            return 1;
        }
        let t = t as usize;
        let mut total = recurse(spans, counts, t as isize - 1, chosen);
        let span = spans[t];
        if chosen.iter().all(|s| !s.overlaps(&span)) {
            chosen.push(span);
            total += counts[t] as u128 * recurse(spans, counts, t as isize - 1, chosen);
            chosen.pop();
        }
        total
    }
    assert_eq!(spans.len(), entity_counts.len());
    recurse(
        spans,
        entity_counts,
        spans.len() as isize - 1,
        &mut Vec::new(),
    )
}

fn indices_to_assignment(
    labels: Vec<Option<usize>>,
    candidates: &[MentionCandidate],
) -> Assignment {
    Assignment {
        labels: labels
            .into_iter()
            .zip(candidates)
            .map(|(k, cand)| k.map(|k| cand.candidates[k].clone()))
            .collect(),
    }
}

/// Maps entity labels to positions in each candidate's list; errors when a
/// label is not among the candidate's entities.
pub fn gold_to_indices(
    candidates: &[MentionCandidate],
    gold: &Assignment,
) -> Result<Vec<Option<usize>>> {
    if gold.labels.len() != candidates.len() {
        return Err(Error::Dimension(format!(
            "gold assignment has {} labels for {} candidates",
            gold.labels.len(),
            candidates.len()
        )));
    }
    gold.labels
        .iter()
        .zip(candidates)
        .map(|(label, cand)| match label {
            None => Ok(None),
            Some(entity) => cand
                .candidates
                .iter()
                .position(|e| e == entity)
                .map(Some)
                .ok_or_else(|| {
                    Error::Validation(format!(
                        "gold entity {entity} not among candidates of {:?}",
                        cand.surface
                    ))
                }),
        })
        .collect()
}

/// MAP decoding of one tweet's candidates under the model.
pub fn decode(
    model: &Model,
    tweet: &Tweet,
    candidates: &[MentionCandidate],
    user: &UserId,
) -> Result<(Assignment, f64)> {
    let scores = score_table(model, tweet, candidates, user)?;
    let spans: Vec<Span> = candidates.iter().map(|c| c.span).collect();
    let (labels, score) = decode_scores(&spans, &scores);
    Ok((indices_to_assignment(labels, candidates), score))
}

/// Loss-augmented decoding: the same DP over scores inflated by
/// `hamming_weight` on every label disagreeing with `gold`. Returns the
/// argmax of (weighted Hamming distance + score).
pub fn decode_loss_augmented(
    model: &Model,
    tweet: &Tweet,
    candidates: &[MentionCandidate],
    user: &UserId,
    gold: &Assignment,
    hamming_weight: f64,
) -> Result<(Assignment, f64)> {
    let gold_idx = gold_to_indices(candidates, gold)?;
    let scores = score_table(model, tweet, candidates, user)?.augmented(&gold_idx, hamming_weight);
    let spans: Vec<Span> = candidates.iter().map(|c| c.span).collect();
    let (labels, score) = decode_scores(&spans, &scores);
    Ok((indices_to_assignment(labels, candidates), score))
}

/// Decodes every tweet in a corpus to its predicted links. Scoring is pure,
/// so `threads > 1` fans the tweets out over scoped threads with identical
/// results.
pub fn link_corpus(
    model: &Model,
    tweets: &[Tweet],
    lexicon: &Lexicon,
    threads: usize,
) -> Result<Vec<TweetLinks>> {
    let link_one = |tweet: &Tweet| -> Result<TweetLinks> {
        let candidates = generate_candidates(tweet, lexicon);
        let (assignment, _) = decode(model, tweet, &candidates, &tweet.author)?;
        Ok(TweetLinks {
            id: tweet.id.clone(),
            links: assignment.links(&candidates),
        })
    };
    if threads <= 1 || tweets.len() < 2 {
        return tweets.iter().map(link_one).collect();
    }
    let chunk = tweets.len().div_ceil(threads);
    std::thread::scope(|scope| {
        let handles: Vec<_> = tweets
            .chunks(chunk)
            .map(|part| scope.spawn(move || part.iter().map(link_one).collect::<Result<Vec<_>>>()))
            .collect();
        let mut out = Vec::with_capacity(tweets.len());
        for handle in handles {
            out.extend(handle.join().expect("linking worker panicked")?);
        }
        Ok(out)
    })
}

/// Exhaustive-search twin of `decode` / `decode_loss_augmented` for
/// equivalence testing.
pub fn brute_force_decode(
    model: &Model,
    tweet: &Tweet,
    candidates: &[MentionCandidate],
    user: &UserId,
    augment: Option<(&Assignment, f64)>,
) -> Result<(Assignment, f64)> {
    let mut scores = score_table(model, tweet, candidates, user)?;
    if let Some((gold, weight)) = augment {
        let gold_idx = gold_to_indices(candidates, gold)?;
        scores = scores.augmented(&gold_idx, weight);
    }
    let spans: Vec<Span> = candidates.iter().map(|c| c.span).collect();
    let (labels, score) = brute_force_scores(&spans, &scores)?;
    Ok((indices_to_assignment(labels, candidates), score))
}
