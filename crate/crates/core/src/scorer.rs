//! Per-candidate scoring and its gradients.
//!
//! A candidate labeled `y` scores `g = g1 + g2`: `g1` is an MLP over surface
//! features, `beta^T tanh(W phi + b) + b_out`; `g2` couples the frozen user,
//! mention, and entity vectors through two bilinear forms,
//! `v_u^T W_ue v_e + v_m^T W_me v_e`. The Nil label has no entity vector and
//! scores `g2 = 0` exactly; the feature extractor sees Nil through an
//! indicator feature. Message scores sum per-candidate scores with no
//! pairwise terms.
//!
//! Embedding tables never receive gradients; only the MLP parameters and the
//! two composition matrices are learnable.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use rand::rngs::StdRng;
use rand::SeedableRng;

use crate::corpus::{EntityId, Lexicon, MentionCandidate, Tweet, UserId};
use crate::embeddings::{mention_vector, EmbeddingTable, TableKind};
use crate::error::{Error, Result};
use crate::inference::Assignment;
use crate::linalg::{axpy, dot, Mat};

/// Maps (tweet, candidate, label) to a fixed-length feature vector.
/// Implementations must be deterministic and produce finite values.
pub trait FeatureExtractor: Send + Sync {
    fn dim(&self) -> usize;
    fn extract(
        &self,
        tweet: &Tweet,
        candidate: &MentionCandidate,
        label: Option<&EntityId>,
    ) -> Vec<f64>;
}

/// Default surface features. Richer extractors can be plugged in through the
/// trait; this set only needs the lexicon:
///
/// 0. lexicon prior of (surface, entity), 0 for Nil
/// 1. ln of the candidate-list length
/// 2. mention token count
/// 3. surface equals the entity's canonical name (id with `_` as space)
/// 4. Nil indicator
/// 5. bias
#[derive(Debug, Clone)]
pub struct DefaultFeatures {
    lexicon: Lexicon,
}

impl DefaultFeatures {
    pub const DIM: usize = 6;

    pub fn new(lexicon: Lexicon) -> Self {
        DefaultFeatures { lexicon }
    }
}

impl FeatureExtractor for DefaultFeatures {
    fn dim(&self) -> usize {
        Self::DIM
    }

    fn extract(
        &self,
        _tweet: &Tweet,
        candidate: &MentionCandidate,
        label: Option<&EntityId>,
    ) -> Vec<f64> {
        let mut phi = vec![0.0; Self::DIM];
        if let Some(entity) = label {
            phi[0] = self
                .lexicon
                .prior(&candidate.surface, entity)
                .unwrap_or(0.0);
            if candidate.surface == entity.canonical_name() {
                phi[3] = 1.0;
            }
        } else {
            phi[4] = 1.0;
        }
        phi[1] = (candidate.candidates.len() as f64).ln();
        phi[2] = candidate.span.len() as f64;
        phi[5] = 1.0;
        phi
    }
}

/// MLP parameters: hidden layer `W` (M x D) and bias `b`, output weights
/// `beta` and bias `b_out`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub w: Mat,
    pub b: Vec<f64>,
    pub beta: Vec<f64>,
    pub b_out: f64,
}

/// Bilinear composition matrices: user-entity (Du x De) and mention-entity
/// (Dw x De).
#[derive(Debug, Clone, PartialEq)]
pub struct CompositionParams {
    pub w_ue: Mat,
    pub w_me: Mat,
}

/// All learnable parameters plus the frozen embedding tables and the feature
/// extractor. Disabled bilinear terms contribute exactly 0 and receive no
/// gradient.
#[derive(Clone)]
pub struct Model {
    pub mlp: MlpParams,
    pub comp: CompositionParams,
    pub users: Arc<EmbeddingTable>,
    pub words: Arc<EmbeddingTable>,
    pub entities: Arc<EmbeddingTable>,
    pub features: Arc<dyn FeatureExtractor>,
    pub use_user_entity: bool,
    pub use_mention_entity: bool,
}

impl Model {
    /// Fresh model with Xavier-uniform matrices and zero biases.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        features: Arc<dyn FeatureExtractor>,
        users: Arc<EmbeddingTable>,
        words: Arc<EmbeddingTable>,
        entities: Arc<EmbeddingTable>,
        hidden: usize,
        use_user_entity: bool,
        use_mention_entity: bool,
        seed: u64,
    ) -> Result<Model> {
        if hidden == 0 {
            return Err(Error::Config("hidden size must be positive".into()));
        }
        if users.kind() != TableKind::User
            || words.kind() != TableKind::Word
            || entities.kind() != TableKind::Entity
        {
            return Err(Error::Config(
                "embedding tables passed in wrong order".into(),
            ));
        }
        let d = features.dim();
        if d == 0 {
            return Err(Error::Config("feature extractor has zero dim".into()));
        }
        let mut rng = StdRng::seed_from_u64(seed);
        let w = Mat::xavier(hidden, d, &mut rng);
        let beta = Mat::xavier(hidden, 1, &mut rng).data().to_vec();
        let w_ue = Mat::xavier(users.dim(), entities.dim(), &mut rng);
        let w_me = Mat::xavier(words.dim(), entities.dim(), &mut rng);
        Ok(Model {
            mlp: MlpParams {
                w,
                b: vec![0.0; hidden],
                beta,
                b_out: 0.0,
            },
            comp: CompositionParams { w_ue, w_me },
            users,
            words,
            entities,
            features,
            use_user_entity,
            use_mention_entity,
        })
    }

    pub fn hidden(&self) -> usize {
        self.mlp.b.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.mlp.w.cols()
    }

    fn hidden_layer(&self, phi: &[f64]) -> Result<Vec<f64>> {
        if phi.len() != self.feature_dim() {
            return Err(Error::Dimension(format!(
                "feature vector has length {}, model expects {}",
                phi.len(),
                self.feature_dim()
            )));
        }
        let mut h = self.mlp.w.matvec(phi);
        for (hi, bi) in h.iter_mut().zip(&self.mlp.b) {
            *hi = (*hi + bi).tanh();
        }
        Ok(h)
    }

    /// Surface-feature score `beta^T tanh(W phi + b) + b_out`.
    pub fn score_g1(
        &self,
        tweet: &Tweet,
        candidate: &MentionCandidate,
        label: Option<&EntityId>,
    ) -> Result<f64> {
        let phi = self.features.extract(tweet, candidate, label);
        let h = self.hidden_layer(&phi)?;
        Ok(dot(&self.mlp.beta, &h) + self.mlp.b_out)
    }

    /// Composition score; exactly 0 for Nil and for disabled terms. Unknown
    /// users/entities/words resolve to zero vectors, which zero out the
    /// affected term.
    pub fn score_g2(
        &self,
        _tweet: &Tweet,
        candidate: &MentionCandidate,
        label: Option<&EntityId>,
        user: &UserId,
    ) -> f64 {
        let entity = match label {
            Some(e) => e,
            None => return 0.0,
        };
        let v_e = self.entities.vector(entity.as_str());
        let mut score = 0.0;
        if self.use_user_entity {
            let v_u = self.users.vector(user.as_str());
            score += self.comp.w_ue.bilinear(v_u, v_e);
        }
        if self.use_mention_entity {
            let v_m = mention_vector(candidate, &self.words);
            score += self.comp.w_me.bilinear(&v_m, v_e);
        }
        score
    }

    /// `g = g1 + g2`.
    pub fn score_g(
        &self,
        tweet: &Tweet,
        candidate: &MentionCandidate,
        label: Option<&EntityId>,
        user: &UserId,
    ) -> Result<f64> {
        Ok(self.score_g1(tweet, candidate, label)? + self.score_g2(tweet, candidate, label, user))
    }

    /// Message score: the sum of per-candidate scores for `assignment`, in
    /// candidate order. No pairwise terms.
    pub fn score_message(
        &self,
        tweet: &Tweet,
        candidates: &[MentionCandidate],
        assignment: &Assignment,
    ) -> Result<f64> {
        if assignment.labels.len() != candidates.len() {
            return Err(Error::Dimension(format!(
                "assignment has {} labels for {} candidates",
                assignment.labels.len(),
                candidates.len()
            )));
        }
        let mut total = 0.0;
        for (cand, label) in candidates.iter().zip(&assignment.labels) {
            total += self.score_g(tweet, cand, label.as_ref(), &tweet.author)?;
        }
        Ok(total)
    }

    /// Gradients of `score_message` scaled by `upstream_weight`, accumulated
    /// into `grads`. Embedding tables are frozen and receive nothing.
    pub fn backward_into(
        &self,
        tweet: &Tweet,
        candidates: &[MentionCandidate],
        assignment: &Assignment,
        upstream_weight: f64,
        grads: &mut Gradients,
    ) -> Result<()> {
        if assignment.labels.len() != candidates.len() {
            return Err(Error::Dimension(format!(
                "assignment has {} labels for {} candidates",
                assignment.labels.len(),
                candidates.len()
            )));
        }
        if upstream_weight == 0.0 {
            return Ok(());
        }
        for (cand, label) in candidates.iter().zip(&assignment.labels) {
            let phi = self.features.extract(tweet, cand, label.as_ref());
            let h = self.hidden_layer(&phi)?;
            // d g1 / d beta = h, d g1 / d b_out = 1
            axpy(&mut grads.beta, &h, upstream_weight);
            grads.b_out += upstream_weight;
            // d g1 / d z_i = beta_i (1 - h_i^2); dW = dz phi^T, db = dz
            let dz: Vec<f64> = self
                .mlp
                .beta
                .iter()
                .zip(&h)
                .map(|(bi, hi)| upstream_weight * bi * (1.0 - hi * hi))
                .collect();
            grads.mlp_w.add_outer(&dz, &phi, 1.0);
            axpy(&mut grads.mlp_b, &dz, 1.0);

            if let Some(entity) = label {
                let v_e = self.entities.vector(entity.as_str());
                if self.use_user_entity {
                    let v_u = self.users.vector(tweet.author.as_str());
                    grads.w_ue.add_outer(v_u, v_e, upstream_weight);
                }
                if self.use_mention_entity {
                    let v_m = mention_vector(cand, &self.words);
                    grads.w_me.add_outer(&v_m, v_e, upstream_weight);
                }
            }
        }
        Ok(())
    }

    /// Allocating wrapper around `backward_into`.
    pub fn backward(
        &self,
        tweet: &Tweet,
        candidates: &[MentionCandidate],
        assignment: &Assignment,
        upstream_weight: f64,
    ) -> Result<Gradients> {
        let mut grads = Gradients::zeros(self);
        self.backward_into(tweet, candidates, assignment, upstream_weight, &mut grads)?;
        Ok(grads)
    }

    /// `theta += scale * grad` for every learnable parameter.
    pub fn apply_gradients(&mut self, grads: &Gradients, scale: f64) {
        self.mlp.w.add_scaled(&grads.mlp_w, scale);
        axpy(&mut self.mlp.b, &grads.mlp_b, scale);
        axpy(&mut self.mlp.beta, &grads.beta, scale);
        self.mlp.b_out += scale * grads.b_out;
        self.comp.w_ue.add_scaled(&grads.w_ue, scale);
        self.comp.w_me.add_scaled(&grads.w_me, scale);
    }

    /// Multiplies both composition matrices by `factor` (decoupled L2
    /// decay).
    pub fn decay_composition(&mut self, factor: f64) {
        self.comp.w_ue.scale(factor);
        self.comp.w_me.scale(factor);
    }

    /// Multiplies the MLP parameters by `factor`; off by default in
    /// training.
    pub fn decay_mlp(&mut self, factor: f64) {
        self.mlp.w.scale(factor);
        for v in self.mlp.b.iter_mut() {
            *v *= factor;
        }
        for v in self.mlp.beta.iter_mut() {
            *v *= factor;
        }
        self.mlp.b_out *= factor;
    }

    /// Serializes dims, flags, parameters, and the three embedding tables to
    /// a single text file (see the repo README for the exact layout).
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        writeln!(w, "linker-model 1").map_err(io)?;
        writeln!(
            w,
            "dims {} {} {} {} {}",
            self.feature_dim(),
            self.hidden(),
            self.users.dim(),
            self.words.dim(),
            self.entities.dim()
        )
        .map_err(io)?;
        writeln!(
            w,
            "flags {} {}",
            self.use_user_entity as u8, self.use_mention_entity as u8
        )
        .map_err(io)?;
        write_param(&mut w, path, "mlp_w", &self.mlp.w)?;
        write_param(&mut w, path, "mlp_b", &row_mat(&self.mlp.b))?;
        write_param(&mut w, path, "beta", &row_mat(&self.mlp.beta))?;
        write_param(&mut w, path, "b_out", &row_mat(&[self.mlp.b_out]))?;
        write_param(&mut w, path, "w_ue", &self.comp.w_ue)?;
        write_param(&mut w, path, "w_me", &self.comp.w_me)?;
        for table in [&self.users, &self.words, &self.entities] {
            writeln!(w, "table {} {} {}", table.kind(), table.len(), table.dim()).map_err(io)?;
            for id in table.ids() {
                write!(w, "{id}").map_err(io)?;
                for v in table.vector(id) {
                    write!(w, " {v}").map_err(io)?;
                }
                writeln!(w).map_err(io)?;
            }
        }
        w.flush().map_err(io)
    }

    /// Loads a model saved by `save`. The feature extractor is not
    /// serialized; the caller supplies one whose dim must match the header.
    pub fn load(path: &Path, features: Arc<dyn FeatureExtractor>) -> Result<Model> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = Lines::new(BufReader::new(file), path);
        let magic = lines.next_line()?;
        if magic.trim() != "linker-model 1" {
            return Err(lines.err("expected header 'linker-model 1'"));
        }
        let dims = lines.fields("dims", 5)?;
        let (d, m) = (dims[0], dims[1]);
        let (du, dw, de) = (dims[2], dims[3], dims[4]);
        let flags = lines.fields("flags", 2)?;
        if features.dim() != d {
            return Err(Error::Dimension(format!(
                "model expects feature dim {d}, extractor provides {}",
                features.dim()
            )));
        }
        let w = lines.param("mlp_w", m, d)?;
        let b = lines.param("mlp_b", 1, m)?.data().to_vec();
        let beta = lines.param("beta", 1, m)?.data().to_vec();
        let b_out = lines.param("b_out", 1, 1)?.get(0, 0);
        let w_ue = lines.param("w_ue", du, de)?;
        let w_me = lines.param("w_me", dw, de)?;
        let users = lines.table(TableKind::User, du)?;
        let words = lines.table(TableKind::Word, dw)?;
        let entities = lines.table(TableKind::Entity, de)?;
        Ok(Model {
            mlp: MlpParams { w, b, beta, b_out },
            comp: CompositionParams { w_ue, w_me },
            users: Arc::new(users),
            words: Arc::new(words),
            entities: Arc::new(entities),
            features,
            use_user_entity: flags[0] != 0,
            use_mention_entity: flags[1] != 0,
        })
    }
}

/// Gradient accumulator, one slot per learnable parameter block.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub mlp_w: Mat,
    pub mlp_b: Vec<f64>,
    pub beta: Vec<f64>,
    pub b_out: f64,
    pub w_ue: Mat,
    pub w_me: Mat,
}

impl Gradients {
    pub fn zeros(model: &Model) -> Gradients {
        Gradients {
            mlp_w: Mat::zeros(model.mlp.w.rows(), model.mlp.w.cols()),
            mlp_b: vec![0.0; model.mlp.b.len()],
            beta: vec![0.0; model.mlp.beta.len()],
            b_out: 0.0,
            w_ue: Mat::zeros(model.comp.w_ue.rows(), model.comp.w_ue.cols()),
            w_me: Mat::zeros(model.comp.w_me.rows(), model.comp.w_me.cols()),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.mlp_w.data().iter().all(|v| *v == 0.0)
            && self.mlp_b.iter().all(|v| *v == 0.0)
            && self.beta.iter().all(|v| *v == 0.0)
            && self.b_out == 0.0
            && self.w_ue.data().iter().all(|v| *v == 0.0)
            && self.w_me.data().iter().all(|v| *v == 0.0)
    }
}

fn row_mat(v: &[f64]) -> Mat {
    Mat::from_vec(1, v.len(), v.to_vec())
}

fn write_param(w: &mut impl Write, path: &Path, name: &str, mat: &Mat) -> Result<()> {
    let io = |e| Error::io(path, e);
    writeln!(w, "param {name} {} {}", mat.rows(), mat.cols()).map_err(io)?;
    for r in 0..mat.rows() {
        write!(w, "{r}").map_err(io)?;
        for v in mat.row(r) {
            write!(w, " {v}").map_err(io)?;
        }
        writeln!(w).map_err(io)?;
    }
    Ok(())
}

/// Line-oriented reader with position tracking for model files.
struct Lines<'p> {
    inner: std::io::Lines<BufReader<File>>,
    path: &'p Path,
    lineno: usize,
}

impl<'p> Lines<'p> {
    fn new(reader: BufReader<File>, path: &'p Path) -> Self {
        Lines {
            inner: reader.lines(),
            path,
            lineno: 0,
        }
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::parse(self.path, self.lineno, msg)
    }

    fn next_line(&mut self) -> Result<String> {
        self.lineno += 1;
        match self.inner.next() {
            Some(Ok(line)) => Ok(line),
            Some(Err(e)) => Err(Error::io(self.path, e)),
            None => Err(self.err("unexpected end of file")),
        }
    }

    /// Reads a line `"<keyword> <n0> <n1> ..."` with `count` numbers.
    fn fields(&mut self, keyword: &str, count: usize) -> Result<Vec<usize>> {
        let line = self.next_line()?;
        let mut parts = line.split_whitespace();
        if parts.next() != Some(keyword) {
            return Err(self.err(format!("expected '{keyword}' line")));
        }
        let values: Vec<usize> = parts
            .map(|p| p.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| self.err(format!("bad integer in '{keyword}' line: {e}")))?;
        if values.len() != count {
            return Err(self.err(format!(
                "'{keyword}' line has {} values, expected {count}",
                values.len()
            )));
        }
        Ok(values)
    }

    fn row_values(&mut self, cols: usize) -> Result<Vec<f64>> {
        let line = self.next_line()?;
        let mut parts = line.split_whitespace();
        parts
            .next()
            .ok_or_else(|| self.err("missing row id".to_string()))?;
        let values: Vec<f64> = parts
            .map(|p| p.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| self.err(format!("bad float: {e}")))?;
        if values.len() != cols {
            return Err(self.err(format!("row has {} values, expected {cols}", values.len())));
        }
        Ok(values)
    }

    fn param(&mut self, name: &str, rows: usize, cols: usize) -> Result<Mat> {
        let line = self.next_line()?;
        let expected = format!("param {name} {rows} {cols}");
        if line.trim() != expected {
            return Err(self.err(format!("expected '{expected}', got '{line}'")));
        }
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            data.extend(self.row_values(cols)?);
        }
        Ok(Mat::from_vec(rows, cols, data))
    }

    fn table(&mut self, kind: TableKind, dim: usize) -> Result<EmbeddingTable> {
        let line = self.next_line()?;
        let mut parts = line.split_whitespace();
        if (parts.next(), parts.next()) != (Some("table"), Some(kind.as_str())) {
            return Err(self.err(format!("expected 'table {kind}' header")));
        }
        let count: usize = parts
            .next()
            .and_then(|p| p.parse().ok())
            .ok_or_else(|| self.err("bad table count"))?;
        let file_dim: usize = parts
            .next()
            .and_then(|p| p.parse().ok())
            .ok_or_else(|| self.err("bad table dim"))?;
        if file_dim != dim {
            return Err(self.err(format!("table dim {file_dim} contradicts header dim {dim}")));
        }
        let mut table = EmbeddingTable::new(kind, dim);
        for _ in 0..count {
            let line = self.next_line()?;
            let mut parts = line.split_whitespace();
            let id = parts.next().ok_or_else(|| self.err("missing id"))?;
            let values: Vec<f64> = parts
                .map(|p| p.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| self.err(format!("bad float: {e}")))?;
            let id = id.to_string();
            table
                .push(&id, values)
                .map_err(|e| self.err(e.to_string()))?;
        }
        Ok(table)
    }
}
