//! Alternating optimization of the detector and the policy.
//!
//! Each epoch walks the shuffled training set in mini-batches. Even batches
//! train the detector on the policy's greedy decisions; odd batches run
//! episodes that train the policy against the frozen detector. After every
//! epoch both learning rates decay and validation metrics are recorded; the
//! parameters with the best validation accuracy are kept.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::agent::{self, AgentParams};
use crate::autodiff::Graph;
use crate::config::{Ablation, TrainConfig};
use crate::data::{self, Split, Thread};
use crate::env::{self, EnvParams, Sample};
use crate::error::{Error, Result};
use crate::metrics::{argmax, Confusion};
use crate::optim::{Adam, Direction};
use crate::params::{ParamGrads, Parameters};
use crate::rng;
use crate::tensor::Tensor;
use crate::text::Vocab;

/// Threads, their split, and their fixed-size encodings.
#[derive(Clone, Debug)]
pub struct Corpus {
    pub threads: Vec<Thread>,
    pub split: Split,
    pub vocab: Vocab,
    pub samples: Vec<Sample>,
}

impl Corpus {
    /// Splits with `cfg.seed` and builds the vocabulary from training
    /// threads only.
    pub fn prepare(threads: Vec<Thread>, cfg: &TrainConfig) -> Result<Self> {
        let split = data::split(&threads, cfg.seed)?;
        let texts = split.train.iter().flat_map(|&i| {
            std::iter::once(threads[i].source.as_str()).chain(threads[i].comments.iter().map(|c| c.text.as_str()))
        });
        let vocab = Vocab::build(texts, cfg.min_count);
        let samples = threads.iter().map(|t| Sample::from_thread(t, &vocab, cfg.max_len, cfg.max_comments)).collect();
        Ok(Self { threads, split, vocab, samples })
    }

    pub fn select(&self, idx: &[usize]) -> Vec<&Sample> {
        idx.iter().map(|&i| &self.samples[i]).collect()
    }
}

/// Everything needed to make predictions.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub vocab: Vocab,
    pub env: EnvParams,
    pub agent: AgentParams,
}

impl Model {
    /// Seeded initialization: detector first, then policy, from one stream.
    pub fn init(cfg: &TrainConfig, vocab: Vocab, embedding: Option<Tensor>) -> Self {
        let mut r = rng::stream(cfg.seed, rng::INIT);
        let env = EnvParams::init(cfg, vocab.len(), embedding, &mut r);
        let agent = AgentParams::init(cfg, &mut r);
        Self { vocab, env, agent }
    }

    /// The actions the detector sees for `sample`.
    pub fn actions(&self, cfg: &TrainConfig, t: &Tensor, c: &Tensor, sample: &Sample) -> Result<Vec<u8>> {
        match cfg.ablation {
            Ablation::NoPolicy => Ok(sample.retain_all()),
            _ => agent::decide(&self.agent, &self.env, cfg.policy_input, t, c, sample),
        }
    }

    /// Class probabilities under the model's own decisions.
    pub fn predict(&self, cfg: &TrainConfig, sample: &Sample) -> Result<Vec<f64>> {
        let (t, c) = self.env.encode_values(sample)?;
        let actions = self.actions(cfg, &t, &c, sample)?;
        self.env.probabilities(&t, &c, sample, &actions)
    }
}

/// One line of the training history.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub epoch: usize,
    pub split: String,
    pub loss: f64,
    pub accuracy: f64,
    pub f1_nr: f64,
    pub f1_fr: f64,
    pub f1_tr: f64,
    pub f1_ur: f64,
    pub macro_f1: f64,
}

impl HistoryRow {
    pub fn new(epoch: usize, split: &str, loss: f64, confusion: &Confusion) -> Self {
        let f1 = confusion.f1_per_class();
        Self {
            epoch,
            split: split.to_string(),
            loss,
            accuracy: confusion.accuracy(),
            f1_nr: f1[0],
            f1_fr: f1[1],
            f1_tr: f1[2],
            f1_ur: f1[3],
            macro_f1: confusion.macro_f1(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("history rows always serialize")
    }
}

/// Metrics on a set of samples.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    /// Mean cross-entropy, without the l2 term.
    pub loss: f64,
    pub confusion: Confusion,
}

impl Evaluation {
    pub fn accuracy(&self) -> f64 {
        self.confusion.accuracy()
    }

    pub fn row(&self, epoch: usize, split: &str) -> HistoryRow {
        HistoryRow::new(epoch, split, self.loss, &self.confusion)
    }
}

pub fn evaluate(model: &Model, cfg: &TrainConfig, samples: &[&Sample]) -> Result<Evaluation> {
    if samples.is_empty() {
        return Err(Error::validation("split", "cannot evaluate an empty split"));
    }
    let mut loss = 0.0;
    let mut labels = Vec::with_capacity(samples.len());
    let mut preds = Vec::with_capacity(samples.len());
    for s in samples {
        let p = model.predict(cfg, s)?;
        loss -= p[s.label].ln();
        labels.push(s.label);
        preds.push(argmax(&p));
    }
    if !loss.is_finite() {
        return Err(Error::Numeric("evaluation loss is not finite".into()));
    }
    Ok(Evaluation { loss: loss / samples.len() as f64, confusion: Confusion::from_pairs(&labels, &preds) })
}

/// Range of every reward produced during policy episodes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RewardStats {
    pub count: usize,
    pub min: f64,
    pub max: f64,
}

impl Default for RewardStats {
    fn default() -> Self {
        Self { count: 0, min: f64::INFINITY, max: f64::NEG_INFINITY }
    }
}

impl RewardStats {
    fn record(&mut self, r: f64) {
        self.count += 1;
        self.min = self.min.min(r);
        self.max = self.max.max(r);
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the best validation accuracy.
    pub model: Model,
    pub best_epoch: usize,
    pub best_val: Evaluation,
    pub test: Evaluation,
    pub history: Vec<HistoryRow>,
    pub rewards: RewardStats,
    pub detector_steps: u64,
    pub policy_steps: u64,
    /// Per epoch: (detector batches, policy batches). Policy batches count
    /// under no_pl too, where they do nothing.
    pub schedule: Vec<(usize, usize)>,
}

/// Loss and θ1 gradients of one detector mini-batch; the policy decides
/// actions from the same forward pass.
fn detector_batch(model: &Model, cfg: &TrainConfig, batch: &[&Sample]) -> Result<(f64, ParamGrads, Vec<usize>)> {
    let mut g = Graph::new();
    let vars = model.env.register(&mut g, true);
    let mut probs = Vec::with_capacity(batch.len());
    for s in batch {
        let (t, c) = env::encode_sample(&mut g, &vars, s)?;
        let actions = model.actions(cfg, g.value(t), g.value(c), s)?;
        probs.push(env::detect(&mut g, &vars, t, c, s, &actions)?);
    }
    let labels: Vec<usize> = batch.iter().map(|s| s.label).collect();
    let all = vars.all();
    let loss = env::env_loss(&mut g, &probs, &labels, &all, cfg.lambda)?;
    let preds = probs.iter().map(|&p| argmax(g.value(p).data())).collect();
    let value = g.scalar_value(loss);
    if cfg.ablation == Ablation::NoDetector {
        return Ok((value, ParamGrads::zeros_like(&model.env), preds));
    }
    let grads = g.backward(loss)?;
    let named = model.env.named();
    let buffers = all.iter().zip(&named).map(|(&v, (_, p))| grads.get_or_zeros(v, p.len())).collect();
    Ok((value, ParamGrads(buffers), preds))
}

/// Trains on `corpus` and reports every history row to `observe` as it is
/// produced, together with the parameters at that point.
pub fn train(
    cfg: &TrainConfig,
    corpus: &Corpus,
    embedding: Option<Tensor>,
    observe: &mut dyn FnMut(&HistoryRow, &Model),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut model = Model::init(cfg, corpus.vocab.clone(), embedding);
    let mut env_opt = Adam::new(cfg.lr, Direction::Descent);
    let mut agent_opt = Adam::new(cfg.policy_lr, Direction::Ascent);
    let mut shuffle_rng = rng::stream(cfg.seed, rng::SHUFFLE);
    let mut agent_rng = rng::stream(cfg.seed, rng::AGENT);
    let val = corpus.select(&corpus.split.val);
    let mut order = corpus.split.train.clone();
    let mut history = Vec::new();
    let mut rewards = RewardStats::default();
    let mut best: Option<(usize, Evaluation, Model)> = None;
    let mut schedule = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut loss_batches = 0;
        let mut labels = Vec::new();
        let mut preds = Vec::new();
        let mut policy_batches = 0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch = corpus.select(chunk);
            if b % 2 == 0 {
                let (loss, grads, p) = detector_batch(&model, cfg, &batch)?;
                if cfg.ablation != Ablation::NoDetector {
                    env_opt.step(&mut model.env, &grads)?;
                }
                loss_sum += loss;
                loss_batches += 1;
                labels.extend(batch.iter().map(|s| s.label));
                preds.extend(p);
            } else {
                policy_batches += 1;
                if cfg.ablation == Ablation::NoPolicy {
                    continue;
                }
                for s in batch {
                    let trace = agent::run_episode(&mut model.agent, &mut agent_opt, &model.env, s, cfg, &mut agent_rng)?;
                    trace.rewards.iter().for_each(|&r| rewards.record(r));
                }
            }
        }
        schedule.push((loss_batches, policy_batches));
        env_opt.lr *= cfg.lr_decay;
        agent_opt.lr *= cfg.lr_decay;

        let train_loss = if loss_batches > 0 { loss_sum / loss_batches as f64 } else { 0.0 };
        let train_row = HistoryRow::new(epoch, "train", train_loss, &Confusion::from_pairs(&labels, &preds));
        observe(&train_row, &model);
        history.push(train_row);
        let eval = evaluate(&model, cfg, &val)?;
        let val_row = eval.row(epoch, "val");
        observe(&val_row, &model);
        history.push(val_row);
        if best.as_ref().is_none_or(|(_, b, _)| eval.accuracy() > b.accuracy()) {
            best = Some((epoch, eval, model.clone()));
        }
    }

    let (best_epoch, best_val, best_model) = match best {
        Some(b) => b,
        None => (0, evaluate(&model, cfg, &val)?, model),
    };
    let test = evaluate(&best_model, cfg, &corpus.select(&corpus.split.test))?;
    let test_row = test.row(best_epoch, "test");
    observe(&test_row, &best_model);
    history.push(test_row);
    Ok(TrainOutcome {
        model: best_model,
        best_epoch,
        best_val,
        test,
        history,
        rewards,
        detector_steps: env_opt.steps(),
        policy_steps: agent_opt.steps(),
        schedule,
    })
}

/// JSON lines, one [`HistoryRow`] per line.
pub fn history_text(rows: &[HistoryRow]) -> String {
    rows.iter().map(|r| r.to_json() + "\n").collect()
}
