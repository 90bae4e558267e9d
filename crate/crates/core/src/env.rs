//! The rumor detector, which plays the environment.
//!
//! The detector encodes a source post and its comments, adds each retained
//! comment's stance vector to that comment's representation, fuses the
//! comments by attention and classifies veracity. Its output probability on
//! the true class, shifted by 1/r, is the reward seen by the agent.

use rand::Rng;

use crate::autodiff::{Graph, Var};
use crate::config::TrainConfig;
use crate::data::{Stance, Thread};
use crate::error::{Error, Result};
use crate::params::{self, Parameters};
use crate::tensor::{Tensor, TensorError};
use crate::text::{self, Vocab, PAD};

/// A thread converted to fixed-size id arrays.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub source: Vec<usize>,
    /// `max_comments` id rows; empty slots are all PAD.
    pub comments: Vec<Vec<usize>>,
    /// Weak stance index per slot (0 for empty slots).
    pub stances: Vec<usize>,
    pub mask: Vec<bool>,
    pub label: usize,
    pub corrupted: Vec<Option<bool>>,
}

impl Sample {
    /// Keeps the earliest `max_comments` comments and pads the rest.
    pub fn from_thread(t: &Thread, vocab: &Vocab, max_len: usize, max_comments: usize) -> Self {
        let mut comments = vec![vec![PAD; max_len]; max_comments];
        let mut stances = vec![0; max_comments];
        let mut mask = vec![false; max_comments];
        let mut corrupted = vec![None; max_comments];
        for (slot, c) in t.comments.iter().take(max_comments).enumerate() {
            comments[slot] = vocab.encode(&c.text, max_len);
            stances[slot] = c.stance.index();
            mask[slot] = true;
            corrupted[slot] = c.corrupted;
        }
        Self { source: vocab.encode(&t.source, max_len), comments, stances, mask, label: t.veracity.index(), corrupted }
    }

    pub fn real_comments(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Action vector retaining every real comment's stance.
    pub fn retain_all(&self) -> Vec<u8> {
        self.mask.iter().map(|&m| u8::from(m)).collect()
    }
}

/// Detector parameters (θ1).
#[derive(Clone, Debug, PartialEq)]
pub struct EnvParams {
    pub kernel_sizes: Vec<usize>,
    /// V×d_w word vectors; row 0 is PAD.
    pub embedding: Tensor,
    /// One k×h×d_w bank per kernel size.
    pub kernels: Vec<Tensor>,
    /// 4×d, one row per stance class.
    pub stance: Tensor,
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
    pub w3: Tensor,
    pub b3: Tensor,
    pub w4: Tensor,
    pub b4: Tensor,
}

impl Parameters for EnvParams {
    fn named(&self) -> Vec<(String, &Tensor)> {
        let mut out = vec![("embedding".to_string(), &self.embedding)];
        for (h, k) in self.kernel_sizes.iter().zip(&self.kernels) {
            out.push((format!("conv.h{h}"), k));
        }
        out.extend([
            ("stance".to_string(), &self.stance),
            ("attn.w1".to_string(), &self.w1),
            ("attn.b1".to_string(), &self.b1),
            ("attn.w2".to_string(), &self.w2),
            ("attn.b2".to_string(), &self.b2),
            ("cls.w3".to_string(), &self.w3),
            ("cls.b3".to_string(), &self.b3),
            ("cls.w4".to_string(), &self.w4),
            ("cls.b4".to_string(), &self.b4),
        ]);
        out
    }

    fn named_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out = vec![("embedding".to_string(), &mut self.embedding)];
        for (h, k) in self.kernel_sizes.iter().zip(self.kernels.iter_mut()) {
            out.push((format!("conv.h{h}"), k));
        }
        out.extend([
            ("stance".to_string(), &mut self.stance),
            ("attn.w1".to_string(), &mut self.w1),
            ("attn.b1".to_string(), &mut self.b1),
            ("attn.w2".to_string(), &mut self.w2),
            ("attn.b2".to_string(), &mut self.b2),
            ("cls.w3".to_string(), &mut self.w3),
            ("cls.b3".to_string(), &mut self.b3),
            ("cls.w4".to_string(), &mut self.w4),
            ("cls.b4".to_string(), &mut self.b4),
        ]);
        out
    }
}

impl EnvParams {
    /// Glorot-uniform matrices, N(0, 0.1²) stance vectors, zero biases
    /// except the attention output bias b2 = 1, which keeps every α_n inside
    /// the active region of its ReLU at the start of training. `embedding`
    /// replaces the random word vectors when given.
    pub fn init<R: Rng>(cfg: &TrainConfig, vocab_len: usize, embedding: Option<Tensor>, rng: &mut R) -> Self {
        let (d, dw, r) = (cfg.d, cfg.d_w, cfg.classes);
        let nk = cfg.kernels_per_size();
        let random_table = text::random_embeddings(rng, vocab_len, dw);
        let embedding = embedding.unwrap_or(random_table);
        let kernels = cfg.kernel_sizes.iter().map(|&h| params::glorot(rng, &[nk, h, dw], h * dw, h * nk)).collect();
        Self {
            kernel_sizes: cfg.kernel_sizes.clone(),
            embedding,
            kernels,
            stance: params::normal(rng, &[Stance::ALL.len(), d], 0.1),
            w1: params::glorot(rng, &[4 * d, d], 4 * d, d),
            b1: Tensor::zeros(&[d]),
            w2: params::glorot(rng, &[d, 1], d, 1),
            b2: Tensor::filled(&[1], 1.0),
            w3: params::glorot(rng, &[2 * d, d], 2 * d, d),
            b3: Tensor::zeros(&[d]),
            w4: params::glorot(rng, &[d, r], d, r),
            b4: Tensor::zeros(&[r]),
        }
    }

    pub fn d(&self) -> usize {
        self.stance.cols()
    }

    pub fn classes(&self) -> usize {
        self.b4.len()
    }

    pub fn register(&self, g: &mut Graph, trainable: bool) -> EnvVars {
        let mut leaf = |t: &Tensor| g.leaf(t.clone(), trainable);
        EnvVars {
            embedding: leaf(&self.embedding),
            kernels: self.kernels.iter().map(&mut leaf).collect(),
            stance: leaf(&self.stance),
            w1: leaf(&self.w1),
            b1: leaf(&self.b1),
            w2: leaf(&self.w2),
            b2: leaf(&self.b2),
            w3: leaf(&self.w3),
            b3: leaf(&self.b3),
            w4: leaf(&self.w4),
            b4: leaf(&self.b4),
        }
    }

    /// Base representations t (1×d) and C (N×d) as plain values.
    pub fn encode_values(&self, sample: &Sample) -> Result<(Tensor, Tensor)> {
        let mut g = Graph::new();
        let vars = self.register(&mut g, false);
        let (t, c) = encode_sample(&mut g, &vars, sample)?;
        Ok((g.value(t).clone(), g.value(c).clone()))
    }

    /// Class probabilities for fixed base representations and actions.
    pub fn probabilities(&self, t: &Tensor, c: &Tensor, sample: &Sample, actions: &[u8]) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let vars = self.register(&mut g, false);
        let tv = g.constant(t.clone());
        let cv = g.constant(c.clone());
        let p = detect(&mut g, &vars, tv, cv, sample, actions)?;
        Ok(g.value(p).data().to_vec())
    }
}

/// Graph handles of [`EnvParams`], in [`Parameters::named`] order via [`EnvVars::all`].
#[derive(Clone, Debug)]
pub struct EnvVars {
    pub embedding: Var,
    pub kernels: Vec<Var>,
    pub stance: Var,
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
    pub w3: Var,
    pub b3: Var,
    pub w4: Var,
    pub b4: Var,
}

impl EnvVars {
    pub fn all(&self) -> Vec<Var> {
        let mut out = vec![self.embedding];
        out.extend(&self.kernels);
        out.extend([self.stance, self.w1, self.b1, self.w2, self.b2, self.w3, self.b3, self.w4, self.b4]);
        out
    }
}

/// Encodes the source (1×d) and all comment slots (N×d). Empty slots are
/// zero rows without running the encoder.
pub fn encode_sample(g: &mut Graph, vars: &EnvVars, sample: &Sample) -> std::result::Result<(Var, Var), TensorError> {
    let t = text::encode_text(g, vars.embedding, &vars.kernels, &sample.source)?;
    let d = g.value(t).cols();
    let mut rows = Vec::with_capacity(sample.comments.len());
    for (ids, &real) in sample.comments.iter().zip(&sample.mask) {
        let row =
            if real { text::encode_text(g, vars.embedding, &vars.kernels, ids)? } else { g.constant(Tensor::zeros(&[1, d])) };
        rows.push(row);
    }
    let c = g.concat_rows(&rows)?;
    Ok((t, c))
}

fn check_actions(actions: &[u8], mask: &[bool]) -> Result<()> {
    if actions.len() != mask.len() {
        return Err(Error::validation("actions", format!("{} actions for {} comment slots", actions.len(), mask.len())));
    }
    for (n, (&a, &m)) in actions.iter().zip(mask).enumerate() {
        if a > 1 {
            return Err(Error::validation(format!("actions[{n}]"), format!("action {a} is not 0 or 1")));
        }
        if a == 1 && !m {
            return Err(Error::validation(format!("actions[{n}]"), "padding slot must carry action 0"));
        }
    }
    Ok(())
}

/// c̃_n = c_n + A_n·S[stance_n].
pub fn apply_actions(g: &mut Graph, c: Var, stance_table: Var, stances: &[usize], actions: &[u8], mask: &[bool]) -> Result<Var> {
    check_actions(actions, mask)?;
    if actions.iter().all(|&a| a == 0) {
        return Ok(c);
    }
    let rows = g.gather_rows(stance_table, stances)?;
    let factors: Vec<f64> = actions.iter().map(|&a| f64::from(a)).collect();
    let shifted = g.scale_rows(rows, &factors)?;
    Ok(g.add(c, shifted)?)
}

/// Value-level [`apply_actions`].
pub fn apply_actions_values(
    c: &Tensor,
    stance_table: &Tensor,
    stances: &[usize],
    actions: &[u8],
    mask: &[bool],
) -> Result<Tensor> {
    let mut g = Graph::new();
    let cv = g.constant(c.clone());
    let sv = g.constant(stance_table.clone());
    let out = apply_actions(&mut g, cv, sv, stances, actions, mask)?;
    Ok(g.value(out).clone())
}

/// Attention fusion. Returns the fused comment vector c̄ (1×d) and the
/// N×1 attention weights α, which are zero on padding slots.
pub fn attend(g: &mut Graph, vars: &EnvVars, t: Var, c_mod: Var, mask: &[bool]) -> std::result::Result<(Var, Var), TensorError> {
    let n = mask.len();
    let tiled = g.gather_rows(t, &vec![0; n])?;
    let diff = g.sub(tiled, c_mod)?;
    let prod = g.mul(tiled, c_mod)?;
    let features = g.concat_cols(&[tiled, c_mod, diff, prod])?;
    let z1 = g.matmul(features, vars.w1)?;
    let z1 = g.add_bias(z1, vars.b1)?;
    let z1 = g.relu(z1)?;
    let a = g.matmul(z1, vars.w2)?;
    let a = g.add_bias(a, vars.b2)?;
    let a = g.relu(a)?;
    let keep: Vec<f64> = mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect();
    let alpha = g.scale_rows(a, &keep)?;
    let alpha_t = g.transpose(alpha)?;
    let fused = g.matmul(alpha_t, c_mod)?;
    Ok((fused, alpha))
}

/// softmax(ReLU([t, c̄]·W3 + b3)·W4 + b4) as a 1×r row.
pub fn classify(g: &mut Graph, vars: &EnvVars, t: Var, fused: Var) -> std::result::Result<Var, TensorError> {
    let x = g.concat_cols(&[t, fused])?;
    let z2 = g.matmul(x, vars.w3)?;
    let z2 = g.add_bias(z2, vars.b3)?;
    let z2 = g.relu(z2)?;
    let logits = g.matmul(z2, vars.w4)?;
    let logits = g.add_bias(logits, vars.b4)?;
    g.softmax_rows(logits)
}

/// Full detector pass on base representations under `actions`.
pub fn detect(g: &mut Graph, vars: &EnvVars, t: Var, c: Var, sample: &Sample, actions: &[u8]) -> Result<Var> {
    let c_mod = apply_actions(g, c, vars.stance, &sample.stances, actions, &sample.mask)?;
    let (fused, _) = attend(g, vars, t, c_mod, &sample.mask)?;
    Ok(classify(g, vars, t, fused)?)
}

/// Mean cross-entropy over the batch plus (λ/2)·Σ‖θ1‖².
pub fn env_loss(g: &mut Graph, probs: &[Var], labels: &[usize], params: &[Var], lambda: f64) -> Result<Var> {
    if probs.is_empty() || probs.len() != labels.len() {
        return Err(Error::validation("batch", format!("{} predictions, {} labels", probs.len(), labels.len())));
    }
    let r = g.value(probs[0]).cols();
    let stacked = g.concat_rows(probs)?;
    let flat: Vec<usize> = labels.iter().enumerate().map(|(i, &y)| i * r + y).collect();
    let picked = g.pick(stacked, &flat)?;
    if let Some(i) = g.value(picked).data().iter().position(|&p| p <= 0.0) {
        return Err(Error::Numeric(format!("probability of the true class is zero for batch item {i}")));
    }
    let logs = g.ln(picked)?;
    let weights = vec![-1.0 / labels.len() as f64; labels.len()];
    let mut loss = g.weighted_sum(logs, &weights)?;
    if lambda > 0.0 {
        let mut squares = Vec::with_capacity(params.len());
        for &p in params {
            squares.push(g.sum_squares(p)?);
        }
        let total = g.concat_rows(&squares)?;
        let total = g.sum(total)?;
        let penalty = g.scale(total, lambda / 2.0)?;
        loss = g.add(loss, penalty)?;
    }
    Ok(loss)
}

/// R = p(true class) − 1/r.
pub fn reward(probs: &[f64], label: usize) -> f64 {
    probs[label] - 1.0 / probs.len() as f64
}
