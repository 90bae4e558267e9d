//! How often the trained policy retains corrupted versus intact weak labels.

use serde::Serialize;

use crate::agent::{self, RETAIN};
use crate::config::{Ablation, TrainConfig};
use crate::env::Sample;
use crate::error::{Error, Result};
use crate::rng;
use crate::train::Model;

/// How a decision is read off the policy distribution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AuditMode {
    /// Retain iff P(retain) > P(remove), as in evaluation.
    Greedy,
    /// One categorical draw per comment from the audit stream of `seed`.
    Sampled { seed: u64 },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct AuditReport {
    pub clean_total: usize,
    pub clean_retained: usize,
    pub corrupted_total: usize,
    pub corrupted_retained: usize,
    /// Σ P(retain) over the same comments, independent of the mode.
    pub clean_retain_prob: f64,
    pub corrupted_retain_prob: f64,
}

impl AuditReport {
    /// None when no intact comment was seen.
    pub fn clean_rate(&self) -> Option<f64> {
        rate(self.clean_retained as f64, self.clean_total)
    }

    /// None when no corrupted comment was seen, e.g. a corpus without noise.
    pub fn corrupted_rate(&self) -> Option<f64> {
        rate(self.corrupted_retained as f64, self.corrupted_total)
    }

    /// Retain rate on intact labels minus retain rate on corrupted ones.
    pub fn gap(&self) -> Option<f64> {
        Some(self.clean_rate()? - self.corrupted_rate()?)
    }

    pub fn clean_mean_prob(&self) -> Option<f64> {
        rate(self.clean_retain_prob, self.clean_total)
    }

    pub fn corrupted_mean_prob(&self) -> Option<f64> {
        rate(self.corrupted_retain_prob, self.corrupted_total)
    }
}

fn rate(k: f64, n: usize) -> Option<f64> {
    (n > 0).then(|| k / n as f64)
}

/// Tallies decisions over every real comment with a known corruption flag.
/// Comments without a flag are skipped.
pub fn audit(model: &Model, cfg: &TrainConfig, samples: &[&Sample], mode: AuditMode) -> Result<AuditReport> {
    if cfg.ablation == Ablation::NoPolicy {
        return Err(Error::validation("ablation", "no_pl has no policy to audit"));
    }
    let mut draws = match mode {
        AuditMode::Sampled { seed } => Some(rng::stream(seed, rng::AUDIT)),
        AuditMode::Greedy => None,
    };
    let mut report = AuditReport::default();
    for s in samples {
        let (t, c) = model.env.encode_values(s)?;
        let state = agent::policy_state(cfg.policy_input, &c, &model.env.stance, s, None)?;
        let probs = model.agent.probabilities(&t, &state, &s.mask)?;
        let actions = match draws.as_mut() {
            Some(r) => agent::sample_actions(&probs, &s.mask, r),
            None => agent::greedy_actions(&probs, &s.mask),
        };
        for (n, flag) in s.corrupted.iter().enumerate() {
            if !s.mask[n] {
                continue;
            }
            let retained = usize::from(actions[n] == RETAIN);
            let p = probs.at(n, usize::from(RETAIN));
            match flag {
                Some(true) => {
                    report.corrupted_total += 1;
                    report.corrupted_retained += retained;
                    report.corrupted_retain_prob += p;
                }
                Some(false) => {
                    report.clean_total += 1;
                    report.clean_retained += retained;
                    report.clean_retain_prob += p;
                }
                None => {}
            }
        }
    }
    if report.clean_total + report.corrupted_total == 0 {
        return Err(Error::validation("comments", "no comment carries a corruption flag"));
    }
    Ok(report)
}
