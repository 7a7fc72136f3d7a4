//! Max-margin training: structured hinge loss via loss-augmented decoding,
//! per-tweet SGD updates, decoupled L2 decay on the composition matrices,
//! and early stopping on development F1.
//!
//! The loss for one tweet is the augmented optimum minus the gold score; it
//! is zero exactly when the gold structure wins the augmented decode.
//! Updates follow the subgradient: add the gradient of the gold score,
//! subtract the gradient of the augmented argmax's score. Embedding tables
//! are frozen throughout.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::SeedableRng;

use crate::corpus::{generate_candidates, Lexicon, MentionCandidate, Tweet, UserId};
use crate::error::{Error, Result};
use crate::eval::{evaluate, TweetLinks};
use crate::inference::{decode_loss_augmented, link_corpus, Assignment};
use crate::scorer::{Gradients, Model};

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub hamming_weight: f64,
    /// Decoupled L2 decay on the two composition matrices.
    pub l2_comp: f64,
    /// Optional decay on the MLP parameters; 0 disables it.
    pub l2_mlp: f64,
    pub max_epochs: usize,
    /// Dev evaluations without improvement before stopping; 0 disables.
    pub patience: usize,
    /// Evaluate the dev set every this many epochs.
    pub eval_every: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.01,
            hamming_weight: 0.2,
            l2_comp: 0.005,
            l2_mlp: 0.0,
            max_epochs: 1000,
            patience: 50,
            eval_every: 1,
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config(format!(
                "learning_rate {} must be positive",
                self.learning_rate
            )));
        }
        if !(self.hamming_weight.is_finite() && self.hamming_weight >= 0.0) {
            return Err(Error::Config(format!(
                "hamming_weight {} must be non-negative",
                self.hamming_weight
            )));
        }
        for (name, v) in [("l2_comp", self.l2_comp), ("l2_mlp", self.l2_mlp)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{name} {v} must be non-negative")));
            }
        }
        if self.eval_every == 0 {
            return Err(Error::Config("eval_every must be at least 1".into()));
        }
        Ok(())
    }

    /// Applies one `key=value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |e: &dyn std::fmt::Display| {
            Error::Config(format!("bad value {value:?} for {key}: {e}"))
        };
        match key {
            "learning_rate" => self.learning_rate = value.parse().map_err(|e| bad(&e))?,
            "hamming_weight" => self.hamming_weight = value.parse().map_err(|e| bad(&e))?,
            "l2_comp" => self.l2_comp = value.parse().map_err(|e| bad(&e))?,
            "l2_mlp" => self.l2_mlp = value.parse().map_err(|e| bad(&e))?,
            "max_epochs" => self.max_epochs = value.parse().map_err(|e| bad(&e))?,
            "patience" => self.patience = value.parse().map_err(|e| bad(&e))?,
            "eval_every" => self.eval_every = value.parse().map_err(|e| bad(&e))?,
            "seed" => self.seed = value.parse().map_err(|e| bad(&e))?,
            other => return Err(Error::Config(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Reads a flat `key=value` file (one per line, `#` comments).
    pub fn from_file(path: &Path) -> Result<TrainConfig> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut config = TrainConfig::default();
        for (idx, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::parse(path, idx + 1, format!("expected key=value, got {line:?}"))
            })?;
            config
                .set(key.trim(), value.trim())
                .map_err(|e| Error::parse(path, idx + 1, e.to_string()))?;
        }
        config.validate()?;
        Ok(config)
    }
}

/// Gold labels over the candidate list, or None when some gold annotation
/// has no candidate with its exact span and entity (no feasible gold
/// structure; such tweets are skipped during training but still count
/// against recall in evaluation).
pub fn gold_assignment(tweet: &Tweet, candidates: &[MentionCandidate]) -> Option<Assignment> {
    let mut labels = vec![None; candidates.len()];
    for ann in &tweet.gold {
        let t = candidates
            .iter()
            .position(|c| c.span == ann.span && c.candidates.contains(&ann.entity))?;
        labels[t] = Some(ann.entity.clone());
    }
    Some(Assignment { labels })
}

/// Structured hinge loss of one tweet and the augmented argmax that attains
/// it. Non-negative up to floating-point noise; exactly zero when the
/// argmax is the gold structure.
pub fn tweet_loss(
    model: &Model,
    tweet: &Tweet,
    candidates: &[MentionCandidate],
    user: &UserId,
    gold: &Assignment,
    config: &TrainConfig,
) -> Result<(f64, Assignment)> {
    let (augmented_argmax, augmented_score) =
        decode_loss_augmented(model, tweet, candidates, user, gold, config.hamming_weight)?;
    let gold_score = model.score_message(tweet, candidates, gold)?;
    Ok((augmented_score - gold_score, augmented_argmax))
}

/// One SGD update: subgradient step when the hinge is active, then L2 decay
/// on the composition matrices (and optionally the MLP). Returns the loss
/// before the update.
pub fn sgd_step(
    model: &mut Model,
    tweet: &Tweet,
    candidates: &[MentionCandidate],
    user: &UserId,
    gold: &Assignment,
    config: &TrainConfig,
) -> Result<f64> {
    let (loss, augmented_argmax) = tweet_loss(model, tweet, candidates, user, gold, config)?;
    if loss > 0.0 {
        let mut grads = Gradients::zeros(model);
        model.backward_into(tweet, candidates, &augmented_argmax, 1.0, &mut grads)?;
        model.backward_into(tweet, candidates, gold, -1.0, &mut grads)?;
        model.apply_gradients(&grads, -config.learning_rate);
    }
    if config.l2_comp > 0.0 {
        model.decay_composition(1.0 - config.learning_rate * config.l2_comp);
    }
    if config.l2_mlp > 0.0 {
        model.decay_mlp(1.0 - config.learning_rate * config.l2_mlp);
    }
    Ok(loss)
}

/// Dev metrics at one evaluation point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DevMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_loss: f64,
    pub dev: Option<DevMetrics>,
}

/// Outcome of a training run: the best snapshot by dev F1 plus traces.
pub struct TrainState {
    pub model: Model,
    pub best_dev_f1: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub loss_trace: Vec<f64>,
    pub log: Vec<EpochLog>,
}

fn dev_metrics(model: &Model, dev: &[Tweet], lexicon: &Lexicon) -> Result<DevMetrics> {
    let links: Vec<TweetLinks> = link_corpus(model, dev, lexicon, 1)?;
    let result = evaluate(dev, &links)?;
    let (p, r, f1) = result.prf1();
    Ok(DevMetrics {
        precision: p,
        recall: r,
        f1,
    })
}

/// Runs the training loop: shuffled per-tweet SGD epochs, periodic dev
/// evaluation, best-snapshot tracking, early stopping on patience.
pub fn train(
    model: Model,
    train_tweets: &[Tweet],
    dev_tweets: &[Tweet],
    lexicon: &Lexicon,
    config: &TrainConfig,
) -> Result<TrainState> {
    config.validate()?;
    if train_tweets.is_empty() {
        return Err(Error::Validation("training corpus is empty".into()));
    }

    struct Instance<'t> {
        tweet: &'t Tweet,
        candidates: Vec<MentionCandidate>,
        gold: Assignment,
    }

    let mut instances = Vec::new();
    let mut skipped = 0usize;
    for tweet in train_tweets {
        let candidates = generate_candidates(tweet, lexicon);
        match gold_assignment(tweet, &candidates) {
            Some(gold) => instances.push(Instance {
                tweet,
                candidates,
                gold,
            }),
            None => skipped += 1,
        }
    }
    if instances.is_empty() {
        return Err(Error::Validation(format!(
            "no trainable tweets: all {skipped} tweets have gold structures \
             unreachable from the lexicon"
        )));
    }

    let mut rng = StdRng::seed_from_u64(config.seed);
    let mut current = model.clone();
    let mut state = TrainState {
        model,
        best_dev_f1: f64::NEG_INFINITY,
        best_epoch: 0,
        epochs_run: 0,
        loss_trace: Vec::new(),
        log: Vec::new(),
    };
    let mut order: Vec<usize> = (0..instances.len()).collect();
    let mut stall = 0usize;

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut total_loss = 0.0;
        for &i in &order {
            let inst = &instances[i];
            total_loss += sgd_step(
                &mut current,
                inst.tweet,
                &inst.candidates,
                &inst.tweet.author,
                &inst.gold,
                config,
            )?;
        }
        let mean_loss = total_loss / instances.len() as f64;
        state.loss_trace.push(mean_loss);
        state.epochs_run = epoch;

        let mut entry = EpochLog {
            epoch,
            mean_loss,
            dev: None,
        };
        if epoch % config.eval_every == 0 {
            let metrics = dev_metrics(&current, dev_tweets, lexicon)?;
            entry.dev = Some(metrics);
            if metrics.f1 > state.best_dev_f1 {
                state.best_dev_f1 = metrics.f1;
                state.best_epoch = epoch;
                state.model = current.clone();
                stall = 0;
            } else {
                stall += 1;
            }
        }
        state.log.push(entry);
        if config.patience > 0 && stall >= config.patience {
            break;
        }
    }
    Ok(state)
}
