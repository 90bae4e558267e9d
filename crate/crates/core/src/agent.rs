//! The stance-selection policy and its REINFORCE update.
//!
//! For every real comment the policy decides whether the detector sees that
//! comment's weak stance label (retain = 1) or not (remove = 0). A
//! bidirectional LSTM reads the comment representations in thread order,
//! and a two-layer head maps [t, h_n] to a distribution over the two actions.

use rand::Rng;

use crate::autodiff::{Graph, Var};
use crate::config::{PolicyInput, ReturnMode, TrainConfig};
use crate::env::{self, EnvParams, Sample};
use crate::error::{Error, Result};
use crate::optim::Adam;
use crate::params::{self, ParamGrads, Parameters};
use crate::tensor::{Tensor, TensorError};

pub const REMOVE: u8 = 0;
pub const RETAIN: u8 = 1;

/// One LSTM direction. Gate blocks are ordered [input, forget, cell, output].
#[derive(Clone, Debug, PartialEq)]
pub struct LstmParams {
    pub wx: Tensor,
    pub wh: Tensor,
    pub b: Tensor,
}

impl LstmParams {
    /// Glorot-uniform weights, forget-gate bias 1, other biases 0.
    pub fn init<R: Rng>(input: usize, hidden: usize, rng: &mut R) -> Self {
        let mut b = Tensor::zeros(&[4 * hidden]);
        b.data_mut()[hidden..2 * hidden].fill(1.0);
        Self {
            wx: params::glorot(rng, &[input, 4 * hidden], input, 4 * hidden),
            wh: params::glorot(rng, &[hidden, 4 * hidden], hidden, 4 * hidden),
            b,
        }
    }

    pub fn hidden(&self) -> usize {
        self.wh.rows()
    }
}

/// Policy parameters (θ2).
#[derive(Clone, Debug, PartialEq)]
pub struct AgentParams {
    pub fwd: LstmParams,
    pub bwd: LstmParams,
    pub w5: Tensor,
    pub b5: Tensor,
    pub w6: Tensor,
    pub b6: Tensor,
}

impl Parameters for AgentParams {
    fn named(&self) -> Vec<(String, &Tensor)> {
        vec![
            ("lstm.fwd.wx".into(), &self.fwd.wx),
            ("lstm.fwd.wh".into(), &self.fwd.wh),
            ("lstm.fwd.b".into(), &self.fwd.b),
            ("lstm.bwd.wx".into(), &self.bwd.wx),
            ("lstm.bwd.wh".into(), &self.bwd.wh),
            ("lstm.bwd.b".into(), &self.bwd.b),
            ("policy.w5".into(), &self.w5),
            ("policy.b5".into(), &self.b5),
            ("policy.w6".into(), &self.w6),
            ("policy.b6".into(), &self.b6),
        ]
    }

    fn named_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        vec![
            ("lstm.fwd.wx".into(), &mut self.fwd.wx),
            ("lstm.fwd.wh".into(), &mut self.fwd.wh),
            ("lstm.fwd.b".into(), &mut self.fwd.b),
            ("lstm.bwd.wx".into(), &mut self.bwd.wx),
            ("lstm.bwd.wh".into(), &mut self.bwd.wh),
            ("lstm.bwd.b".into(), &mut self.bwd.b),
            ("policy.w5".into(), &mut self.w5),
            ("policy.b5".into(), &mut self.b5),
            ("policy.w6".into(), &mut self.w6),
            ("policy.b6".into(), &mut self.b6),
        ]
    }
}

struct LstmVars {
    wx: Var,
    wh: Var,
    b: Var,
}

/// Graph handles of [`AgentParams`], in [`Parameters::named`] order via [`AgentVars::all`].
pub struct AgentVars {
    fwd: LstmVars,
    bwd: LstmVars,
    w5: Var,
    b5: Var,
    w6: Var,
    b6: Var,
}

impl AgentVars {
    pub fn all(&self) -> Vec<Var> {
        vec![self.fwd.wx, self.fwd.wh, self.fwd.b, self.bwd.wx, self.bwd.wh, self.bwd.b, self.w5, self.b5, self.w6, self.b6]
    }
}

impl AgentParams {
    pub fn init<R: Rng>(cfg: &TrainConfig, rng: &mut R) -> Self {
        let (d, h) = (cfg.d, cfg.lstm_hidden);
        Self {
            fwd: LstmParams::init(d, h, rng),
            bwd: LstmParams::init(d, h, rng),
            w5: params::glorot(rng, &[2 * d, d], 2 * d, d),
            b5: Tensor::zeros(&[d]),
            w6: params::glorot(rng, &[d, 2], d, 2),
            b6: Tensor::zeros(&[2]),
        }
    }

    pub fn register(&self, g: &mut Graph, trainable: bool) -> AgentVars {
        let mut leaf = |t: &Tensor| g.leaf(t.clone(), trainable);
        let mut lstm = |p: &LstmParams| LstmVars { wx: leaf(&p.wx), wh: leaf(&p.wh), b: leaf(&p.b) };
        let fwd = lstm(&self.fwd);
        let bwd = lstm(&self.bwd);
        AgentVars {
            fwd,
            bwd,
            w5: g.leaf(self.w5.clone(), trainable),
            b5: g.leaf(self.b5.clone(), trainable),
            w6: g.leaf(self.w6.clone(), trainable),
            b6: g.leaf(self.b6.clone(), trainable),
        }
    }

    /// N×2 action probabilities for a policy state, as plain values.
    pub fn probabilities(&self, t: &Tensor, state: &Tensor, mask: &[bool]) -> Result<Tensor> {
        let mut g = Graph::new();
        let vars = self.register(&mut g, false);
        let tv = g.constant(t.clone());
        let sv = g.constant(state.clone());
        let p = policy_probs(&mut g, &vars, tv, sv, mask)?;
        Ok(g.value(p).clone())
    }
}

/// Runs one direction over the rows of `x` in `order`; returns one 1×h
/// hidden row per visited position, in visiting order.
fn lstm_pass(g: &mut Graph, p: &LstmVars, x: Var, order: &[usize]) -> std::result::Result<Vec<Var>, TensorError> {
    let h_size = g.value(p.wh).rows();
    let xw = g.matmul(x, p.wx)?;
    let mut h = g.constant(Tensor::zeros(&[1, h_size]));
    let mut c = g.constant(Tensor::zeros(&[1, h_size]));
    let mut out = Vec::with_capacity(order.len());
    for &step in order {
        let xs = g.gather_rows(xw, &[step])?;
        let hs = g.matmul(h, p.wh)?;
        let z = g.add(xs, hs)?;
        let z = g.add_bias(z, p.b)?;
        let if_pre = g.slice_cols(z, 0, 2 * h_size)?;
        let if_gates = g.sigmoid(if_pre)?;
        let i = g.slice_cols(if_gates, 0, h_size)?;
        let f = g.slice_cols(if_gates, h_size, 2 * h_size)?;
        let cell_pre = g.slice_cols(z, 2 * h_size, 3 * h_size)?;
        let cell = g.tanh(cell_pre)?;
        let o_pre = g.slice_cols(z, 3 * h_size, 4 * h_size)?;
        let o = g.sigmoid(o_pre)?;
        let keep = g.mul(f, c)?;
        let write = g.mul(i, cell)?;
        c = g.add(keep, write)?;
        let squashed = g.tanh(c)?;
        h = g.mul(o, squashed)?;
        out.push(h);
    }
    Ok(out)
}

/// Bidirectional LSTM over the real rows of `x` (N×d). Padding rows of the
/// N×2h output are zero and the padding rows of `x` are never read.
pub fn bilstm(g: &mut Graph, vars: &AgentVars, x: Var, mask: &[bool]) -> std::result::Result<Var, TensorError> {
    let real: Vec<usize> = (0..mask.len()).filter(|&n| mask[n]).collect();
    let h = g.value(vars.fwd.wh).rows();
    if real.is_empty() {
        return Ok(g.constant(Tensor::zeros(&[mask.len(), 2 * h])));
    }
    let xr = g.gather_rows(x, &real)?;
    let forward_order: Vec<usize> = (0..real.len()).collect();
    let backward_order: Vec<usize> = forward_order.iter().rev().copied().collect();
    let fwd = lstm_pass(g, &vars.fwd, xr, &forward_order)?;
    let mut bwd = lstm_pass(g, &vars.bwd, xr, &backward_order)?;
    bwd.reverse();
    let fwd = g.concat_rows(&fwd)?;
    let bwd = g.concat_rows(&bwd)?;
    let both = g.concat_cols(&[fwd, bwd])?;
    let zero = g.constant(Tensor::zeros(&[1, 2 * h]));
    let padded = g.concat_rows(&[both, zero])?;
    let mut rank = 0;
    let scatter: Vec<usize> = mask
        .iter()
        .map(|&m| {
            if m {
                rank += 1;
                rank - 1
            } else {
                real.len()
            }
        })
        .collect();
    g.gather_rows(padded, &scatter)
}

/// softmax(ReLU([T, H]·W5 + b5)·W6 + b6), N×2 over {remove, retain}.
pub fn policy_probs(g: &mut Graph, vars: &AgentVars, t: Var, state: Var, mask: &[bool]) -> std::result::Result<Var, TensorError> {
    let hidden = bilstm(g, vars, state, mask)?;
    let tiled = g.gather_rows(t, &vec![0; mask.len()])?;
    let x = g.concat_cols(&[tiled, hidden])?;
    let z3 = g.matmul(x, vars.w5)?;
    let z3 = g.add_bias(z3, vars.b5)?;
    let z3 = g.relu(z3)?;
    let logits = g.matmul(z3, vars.w6)?;
    let logits = g.add_bias(logits, vars.b6)?;
    g.softmax_rows(logits)
}

/// One categorical draw per real row; padding rows get [`REMOVE`].
pub fn sample_actions<R: Rng>(probs: &Tensor, mask: &[bool], rng: &mut R) -> Vec<u8> {
    mask.iter()
        .enumerate()
        .map(|(n, &m)| {
            if !m {
                return REMOVE;
            }
            let u: f64 = rng.gen();
            if u < probs.at(n, 0) {
                REMOVE
            } else {
                RETAIN
            }
        })
        .collect()
}

/// Row-wise argmax; ties go to [`REMOVE`].
pub fn greedy_actions(probs: &Tensor, mask: &[bool]) -> Vec<u8> {
    mask.iter().enumerate().map(|(n, &m)| u8::from(m && probs.at(n, 1) > probs.at(n, 0))).collect()
}

/// Discounted returns for per-step rewards, computed right to left.
///
/// `Literal`: R̃_k = R_k·Σ_{j=0}^{K−k−1} γ^j.
/// `ReturnToGo`: R̃_k = Σ_{j≥k} γ^{j−k}·R_j.
pub fn compute_returns(rewards: &[f64], gamma: f64, mode: ReturnMode) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for k in (0..rewards.len()).rev() {
        match mode {
            ReturnMode::Literal => {
                acc = 1.0 + gamma * acc;
                out[k] = rewards[k] * acc;
            }
            ReturnMode::ReturnToGo => {
                acc = rewards[k] + gamma * acc;
                out[k] = acc;
            }
        }
    }
    out
}

/// The state the policy reads at a step.
///
/// `Candidate`: every real comment carries its weak stance vector, so the
/// policy sees what retaining each label would add. `CurrentState`: the
/// detector's state under the previous step's actions (none at step 0).
pub fn policy_state(
    input: PolicyInput,
    c: &Tensor,
    stance_table: &Tensor,
    sample: &Sample,
    previous: Option<&[u8]>,
) -> Result<Tensor> {
    let actions = match (input, previous) {
        (PolicyInput::Candidate, _) => sample.retain_all(),
        (PolicyInput::CurrentState, Some(prev)) => prev.to_vec(),
        (PolicyInput::CurrentState, None) => vec![REMOVE; sample.mask.len()],
    };
    env::apply_actions_values(c, stance_table, &sample.stances, &actions, &sample.mask)
}

/// Deterministic actions for evaluation and detector training: the argmax
/// of the first-step policy distribution.
pub fn decide(
    agent: &AgentParams,
    env: &EnvParams,
    input: PolicyInput,
    t: &Tensor,
    c: &Tensor,
    sample: &Sample,
) -> Result<Vec<u8>> {
    let state = policy_state(input, c, &env.stance, sample, None)?;
    let probs = agent.probabilities(t, &state, &sample.mask)?;
    Ok(greedy_actions(&probs, &sample.mask))
}

/// log P(actions) under `probs`; padding rows contribute nothing.
pub fn action_log_prob(probs: &Tensor, mask: &[bool], actions: &[u8]) -> f64 {
    (0..mask.len()).filter(|&n| mask[n]).map(|n| probs.at(n, usize::from(actions[n])).ln()).sum()
}

/// What happened during one K-step episode on one thread.
#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeTrace {
    pub states: Vec<Tensor>,
    pub actions: Vec<Vec<u8>>,
    /// Σ_n log P(a_n) over real rows, under the policy that sampled the step.
    pub log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub returns: Vec<f64>,
    /// Number of Adam steps actually applied.
    pub updates: usize,
}

/// Σ_n R̃·log P(a_n) over real rows, as a scalar node.
pub fn policy_surrogate(
    g: &mut Graph,
    vars: &AgentVars,
    t: Var,
    state: Var,
    mask: &[bool],
    actions: &[u8],
    ret: f64,
) -> Result<Var> {
    let real: Vec<usize> = (0..mask.len()).filter(|&n| mask[n]).collect();
    if real.is_empty() {
        return Err(Error::validation("mask", "surrogate needs at least one real comment"));
    }
    let probs = policy_probs(g, vars, t, state, mask)?;
    let flat: Vec<usize> = real.iter().map(|&n| 2 * n + usize::from(actions[n])).collect();
    let picked = g.pick(probs, &flat)?;
    let logs = g.ln(picked)?;
    Ok(g.weighted_sum(logs, &vec![ret; real.len()])?)
}

/// Value and θ2-gradient of the surrogate for one recorded step.
pub fn surrogate_grads(
    agent: &AgentParams,
    t: &Tensor,
    state: &Tensor,
    mask: &[bool],
    actions: &[u8],
    ret: f64,
    fault: Option<crate::autodiff::Fault>,
) -> Result<(f64, ParamGrads)> {
    let mut g = Graph::with_fault(fault);
    let vars = agent.register(&mut g, true);
    let tv = g.constant(t.clone());
    let sv = g.constant(state.clone());
    let obj = policy_surrogate(&mut g, &vars, tv, sv, mask, actions, ret)?;
    let grads = g.backward(obj)?;
    let named = agent.named();
    let out = vars.all().iter().zip(&named).map(|(&v, (_, p))| grads.get_or_zeros(v, p.len())).collect();
    Ok((g.scalar_value(obj), ParamGrads(out)))
}

/// Runs K steps on one thread with θ1 frozen, then applies one Adam ascent
/// step per recorded step, each on a graph rebuilt with the current θ2.
/// Steps whose return is zero, and threads without real comments, leave θ2
/// untouched.
pub fn run_episode<R: Rng>(
    agent: &mut AgentParams,
    adam: &mut Adam,
    env: &EnvParams,
    sample: &Sample,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<EpisodeTrace> {
    let (t, c) = env.encode_values(sample)?;
    let mut states = Vec::with_capacity(cfg.episodes);
    let mut actions: Vec<Vec<u8>> = Vec::with_capacity(cfg.episodes);
    let mut log_probs = Vec::with_capacity(cfg.episodes);
    let mut rewards = Vec::with_capacity(cfg.episodes);
    // Under candidate input the state, and so the distribution, is the same at every step.
    let mut fixed: Option<(Tensor, Tensor)> = None;
    for _ in 0..cfg.episodes {
        let (state, probs) = match &fixed {
            Some(sp) => sp.clone(),
            None => {
                let state = policy_state(cfg.policy_input, &c, &env.stance, sample, actions.last().map(Vec::as_slice))?;
                let probs = agent.probabilities(&t, &state, &sample.mask)?;
                if cfg.policy_input == PolicyInput::Candidate {
                    fixed = Some((state.clone(), probs.clone()));
                }
                (state, probs)
            }
        };
        let a = sample_actions(&probs, &sample.mask, rng);
        log_probs.push(action_log_prob(&probs, &sample.mask, &a));
        let p = env.probabilities(&t, &c, sample, &a)?;
        rewards.push(env::reward(&p, sample.label));
        states.push(state);
        actions.push(a);
    }
    let returns = compute_returns(&rewards, cfg.gamma, cfg.return_mode);
    let mut updates = 0;
    if sample.real_comments() > 0 {
        for k in 0..cfg.episodes {
            if returns[k] == 0.0 {
                continue;
            }
            let (_, grads) = surrogate_grads(agent, &t, &states[k], &sample.mask, &actions[k], returns[k], None)?;
            adam.step(agent, &grads)?;
            updates += 1;
        }
    }
    Ok(EpisodeTrace { states, actions, log_probs, rewards, returns, updates })
}
