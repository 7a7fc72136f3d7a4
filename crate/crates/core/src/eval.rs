//! End-to-end linking metrics and bootstrap significance testing.
//!
//! A predicted (span, entity) is correct when some still-unmatched gold item
//! carries the same entity id and a token-overlapping span; matching is
//! greedy over predictions in start order, one gold per prediction.
//! Precision/recall/F1 are micro-averaged over pooled counts.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::corpus::{Annotation, Tweet};
use crate::error::{Error, Result};

/// One tweet's predicted links, keyed by tweet id. Also the on-disk record
/// of the `link` output format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TweetLinks {
    pub id: String,
    pub links: Vec<Annotation>,
}

pub fn save_links(links: &[TweetLinks], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for record in links {
        let line = serde_json::to_string(record)
            .map_err(|e| Error::Validation(format!("serialize links for {}: {e}", record.id)))?;
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_links(path: &Path) -> Result<Vec<TweetLinks>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: TweetLinks =
            serde_json::from_str(&line).map_err(|e| Error::parse(path, idx + 1, e.to_string()))?;
        out.push(record);
    }
    Ok(out)
}

/// Greedy one-to-one matching of predictions against gold. Returns
/// (n_pred, n_gold, n_correct). Overlapping predictions violate the decoder
/// contract and are rejected.
pub fn match_and_count(
    predicted: &[Annotation],
    gold: &[Annotation],
) -> Result<(usize, usize, usize)> {
    let mut preds: Vec<&Annotation> = predicted.iter().collect();
    preds.sort_by_key(|a| (a.span.start, a.span.end));
    for pair in preds.windows(2) {
        if pair[0].span.overlaps(&pair[1].span) {
            return Err(Error::Validation(format!(
                "overlapping predictions {} and {}",
                pair[0].span, pair[1].span
            )));
        }
    }
    let mut gold_sorted: Vec<&Annotation> = gold.iter().collect();
    gold_sorted.sort_by_key(|a| (a.span.start, a.span.end));
    let mut matched = vec![false; gold_sorted.len()];
    let mut correct = 0usize;
    for pred in &preds {
        for (i, g) in gold_sorted.iter().enumerate() {
            if !matched[i] && g.entity == pred.entity && g.span.overlaps(&pred.span) {
                matched[i] = true;
                correct += 1;
                break;
            }
        }
    }
    Ok((predicted.len(), gold.len(), correct))
}

/// Micro precision/recall/F1 with the degenerate-count conventions:
/// 0 when the respective denominator is 0.
pub fn prf1(n_pred: usize, n_gold: usize, n_correct: usize) -> (f64, f64, f64) {
    let p = if n_pred == 0 {
        0.0
    } else {
        n_correct as f64 / n_pred as f64
    };
    let r = if n_gold == 0 {
        0.0
    } else {
        n_correct as f64 / n_gold as f64
    };
    let f1 = if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    };
    (p, r, f1)
}

/// Per-tweet counts plus pooled totals for one system on one tweet set.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkingResult {
    ids: Vec<String>,
    per_tweet: Vec<(usize, usize, usize)>,
}

impl LinkingResult {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn per_tweet(&self) -> &[(usize, usize, usize)] {
        &self.per_tweet
    }

    pub fn totals(&self) -> (usize, usize, usize) {
        let mut t = (0, 0, 0);
        for &(p, g, c) in &self.per_tweet {
            t.0 += p;
            t.1 += g;
            t.2 += c;
        }
        t
    }

    pub fn prf1(&self) -> (f64, f64, f64) {
        let (p, g, c) = self.totals();
        prf1(p, g, c)
    }
}

/// Scores predictions against a gold corpus; the prediction set must cover
/// exactly the corpus tweet ids.
pub fn evaluate(gold: &[Tweet], predictions: &[TweetLinks]) -> Result<LinkingResult> {
    let mut by_id: HashMap<&str, &TweetLinks> = HashMap::new();
    for record in predictions {
        if by_id.insert(record.id.as_str(), record).is_some() {
            return Err(Error::Validation(format!(
                "duplicate prediction record for tweet {}",
                record.id
            )));
        }
    }
    if predictions.len() != gold.len() {
        return Err(Error::Validation(format!(
            "prediction file covers {} tweets, gold corpus has {}",
            predictions.len(),
            gold.len()
        )));
    }
    let mut ids = Vec::with_capacity(gold.len());
    let mut per_tweet = Vec::with_capacity(gold.len());
    for tweet in gold {
        let record = by_id.remove(tweet.id.as_str()).ok_or_else(|| {
            Error::Validation(format!("no prediction record for tweet {}", tweet.id))
        })?;
        per_tweet.push(match_and_count(&record.links, &tweet.gold)?);
        ids.push(tweet.id.clone());
    }
    Ok(LinkingResult { ids, per_tweet })
}

#[derive(Debug, Clone)]
pub struct BootstrapComparison {
    pub t_statistic: f64,
    pub p_value: f64,
    /// (F1 of A, F1 of B) per bootstrap sample.
    pub samples: Vec<(f64, f64)>,
}

/// Paired bootstrap test: resamples tweets with replacement (shared indices
/// across the two systems), computes micro F1 per sample per system, and
/// runs a two-tailed paired t-test on the per-sample F1 differences with
/// `n_samples - 1` degrees of freedom. All-zero differences give p = 1 by
/// convention.
pub fn bootstrap_compare(
    a: &LinkingResult,
    b: &LinkingResult,
    n_samples: usize,
    seed: u64,
) -> Result<BootstrapComparison> {
    if a.ids != b.ids {
        return Err(Error::Validation(
            "bootstrap comparison needs both systems evaluated on the identical tweet set".into(),
        ));
    }
    if a.is_empty() {
        return Err(Error::Validation(
            "cannot bootstrap an empty tweet set".into(),
        ));
    }
    if n_samples < 2 {
        return Err(Error::Config("need at least 2 bootstrap samples".into()));
    }
    let n = a.len();
    let mut rng = StdRng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let mut ta = (0usize, 0usize, 0usize);
        let mut tb = (0usize, 0usize, 0usize);
        for _ in 0..n {
            let i = rng.gen_range(0..n);
            let (p, g, c) = a.per_tweet[i];
            ta = (ta.0 + p, ta.1 + g, ta.2 + c);
            let (p, g, c) = b.per_tweet[i];
            tb = (tb.0 + p, tb.1 + g, tb.2 + c);
        }
        let (_, _, f1a) = prf1(ta.0, ta.1, ta.2);
        let (_, _, f1b) = prf1(tb.0, tb.1, tb.2);
        samples.push((f1a, f1b));
    }
    let diffs: Vec<f64> = samples.iter().map(|(x, y)| x - y).collect();
    let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
    let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (diffs.len() - 1) as f64;
    let sd = var.sqrt();
    let (t_statistic, p_value) = if sd == 0.0 {
        if mean == 0.0 {
            (0.0, 1.0)
        } else {
            (f64::INFINITY * mean.signum(), 0.0)
        }
    } else {
        let t = mean / (sd / (n_samples as f64).sqrt());
        let dist = StudentsT::new(0.0, 1.0, (n_samples - 1) as f64)
            .expect("valid t distribution parameters");
        (t, 2.0 * (1.0 - dist.cdf(t.abs())))
    };
    Ok(BootstrapComparison {
        t_statistic,
        p_value,
        samples,
    })
}
