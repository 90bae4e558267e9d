//! Central finite-difference check of reverse-mode gradients.

use std::fmt;

use crate::agent::{self, AgentParams};
use crate::autodiff::{Fault, Graph};
use crate::config::TrainConfig;
use crate::data::{self, SynthConfig};
use crate::env::{self, EnvParams, Sample};
use crate::error::{Error, Result};
use crate::params::{ParamGrads, Parameters};
use crate::text::Vocab;
use crate::train::Model;

pub const DEFAULT_STEP: f64 = 1e-5;
pub const DEFAULT_TOL: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq)]
pub struct GroupReport {
    pub name: String,
    pub entries: usize,
    pub max_rel_error: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradcheckReport {
    pub label: String,
    pub h: f64,
    pub tol: f64,
    pub groups: Vec<GroupReport>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.groups.iter().all(|g| g.max_rel_error < self.tol)
    }

    pub fn failures(&self) -> Vec<&GroupReport> {
        self.groups.iter().filter(|g| g.max_rel_error >= self.tol).collect()
    }

    pub fn max_rel_error(&self) -> f64 {
        self.groups.iter().map(|g| g.max_rel_error).fold(0.0, f64::max)
    }
}

impl fmt::Display for GradcheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "gradcheck {} (h={:e}, tol={:e})", self.label, self.h, self.tol)?;
        for g in &self.groups {
            let verdict = if g.max_rel_error < self.tol { "ok" } else { "FAIL" };
            writeln!(f, "  {:<16} entries={:<6} max_rel_error={:.3e} {verdict}", g.name, g.entries, g.max_rel_error)?;
        }
        write!(f, "  result: {}", if self.passed() { "PASS" } else { "FAIL" })
    }
}

/// |a − b| / max(1, |a|, |b|)
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / 1f64.max(analytic.abs()).max(numeric.abs())
}

/// Compares `grad(params)` against (f(x+h) − f(x−h)) / 2h for every entry
/// of every parameter, reporting the worst relative error per parameter.
pub fn gradcheck<P, L, G>(label: &str, params: &P, h: f64, tol: f64, loss: L, grad: G) -> Result<GradcheckReport>
where
    P: Parameters + Clone,
    L: Fn(&P) -> Result<f64>,
    G: Fn(&P) -> Result<ParamGrads>,
{
    if h <= 0.0 {
        return Err(Error::validation("h", "finite-difference step must be positive"));
    }
    let analytic = grad(params)?;
    let mut probe = params.clone();
    let mut groups = Vec::new();
    let names: Vec<(String, usize)> = params.named().iter().map(|(n, t)| (n.clone(), t.len())).collect();
    if analytic.0.len() != names.len() {
        return Err(Error::Numeric(format!("{} gradient buffers for {} parameters", analytic.0.len(), names.len())));
    }
    for (p, (name, len)) in names.iter().enumerate() {
        let mut worst: f64 = 0.0;
        for j in 0..*len {
            let original = probe.named()[p].1.data()[j];
            set_entry(&mut probe, p, j, original + h);
            let up = loss(&probe)?;
            set_entry(&mut probe, p, j, original - h);
            let down = loss(&probe)?;
            set_entry(&mut probe, p, j, original);
            let numeric = (up - down) / (2.0 * h);
            worst = worst.max(relative_error(analytic.0[p][j], numeric));
        }
        groups.push(GroupReport { name: name.clone(), entries: *len, max_rel_error: worst });
    }
    Ok(GradcheckReport { label: label.to_string(), h, tol, groups })
}

fn set_entry<P: Parameters>(params: &mut P, p: usize, j: usize, value: f64) {
    params.named_mut()[p].1.data_mut()[j] = value;
}

/// Checks both models end to end on a tiny configuration: the detector's
/// batch loss over every θ1 group and the policy surrogate over every θ2
/// group. `fault` swaps in a broken backward rule.
pub fn check_models(seed: u64, h: f64, tol: f64, fault: Option<Fault>) -> Result<(GradcheckReport, GradcheckReport)> {
    let cfg = TrainConfig { seed, ..TrainConfig::tiny() };
    let synth =
        SynthConfig { threads: 2, comments_per_thread: 2, vocab_size: 20, tokens_per_text: 6, seed, ..SynthConfig::default() };
    let threads = data::generate(&synth)?;
    // 18 named tokens plus PAD and UNK; the two left out read as UNK.
    let vocab = Vocab::from_tokens(synth.vocabulary().into_iter().take(18));
    let samples: Vec<Sample> = threads.iter().map(|t| Sample::from_thread(t, &vocab, cfg.max_len, cfg.max_comments)).collect();
    let actions = [vec![1, 0, 0], vec![1, 1, 0]];
    let model = Model::init(&cfg, vocab, None);

    let detector_loss = |p: &EnvParams| -> Result<(f64, ParamGrads)> {
        let mut g = Graph::with_fault(fault);
        let vars = p.register(&mut g, true);
        let mut probs = Vec::new();
        for (s, a) in samples.iter().zip(&actions) {
            let (t, c) = env::encode_sample(&mut g, &vars, s)?;
            probs.push(env::detect(&mut g, &vars, t, c, s, a)?);
        }
        let labels: Vec<usize> = samples.iter().map(|s| s.label).collect();
        let all = vars.all();
        let loss = env::env_loss(&mut g, &probs, &labels, &all, cfg.lambda)?;
        let grads = g.backward(loss)?;
        let named = p.named();
        let buffers = all.iter().zip(&named).map(|(&v, (_, t))| grads.get_or_zeros(v, t.len())).collect();
        Ok((g.scalar_value(loss), ParamGrads(buffers)))
    };
    let env_report =
        gradcheck("detector loss", &model.env, h, tol, |p| detector_loss(p).map(|r| r.0), |p| detector_loss(p).map(|r| r.1))?;

    let sample = &samples[0];
    let (t, c) = model.env.encode_values(sample)?;
    let state = agent::policy_state(cfg.policy_input, &c, &model.env.stance, sample, None)?;
    let ret = 0.6;
    let surrogate = |p: &AgentParams| agent::surrogate_grads(p, &t, &state, &sample.mask, &actions[0], ret, fault);
    let agent_report =
        gradcheck("policy surrogate", &model.agent, h, tol, |p| surrogate(p).map(|r| r.0), |p| surrogate(p).map(|r| r.1))?;
    Ok((env_report, agent_report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    #[derive(Clone)]
    struct One(Tensor);

    impl Parameters for One {
        fn named(&self) -> Vec<(String, &Tensor)> {
            vec![("x".into(), &self.0)]
        }
        fn named_mut(&mut self) -> Vec<(String, &mut Tensor)> {
            vec![("x".into(), &mut self.0)]
        }
    }

    #[test]
    fn quadratic_matches_analytic() {
        let p = One(Tensor::vector(vec![3.0]).unwrap());
        let half_sq = |p: &One| Ok(0.5 * p.0.data()[0].powi(2));
        let report = gradcheck("quad", &p, DEFAULT_STEP, 1e-8, half_sq, |p| Ok(ParamGrads(vec![vec![p.0.data()[0]]]))).unwrap();
        assert!(report.passed(), "{report}");
        assert!(report.max_rel_error() < 1e-8);
    }

    #[test]
    fn constant_loss_has_zero_gradient() {
        let p = One(Tensor::vector(vec![1.0, -2.0]).unwrap());
        let report =
            gradcheck("const", &p, DEFAULT_STEP, DEFAULT_TOL, |_| Ok(7.0), |_| Ok(ParamGrads(vec![vec![0.0, 0.0]]))).unwrap();
        assert_eq!(report.max_rel_error(), 0.0);
    }

    #[test]
    fn wrong_gradient_fails_and_names_the_group() {
        let p = One(Tensor::vector(vec![3.0]).unwrap());
        let report =
            gradcheck("bad", &p, DEFAULT_STEP, DEFAULT_TOL, |p| Ok(p.0.data()[0].powi(2)), |_| Ok(ParamGrads(vec![vec![1.0]])))
                .unwrap();
        assert!(!report.passed());
        assert_eq!(report.failures()[0].name, "x");
        assert!(report.to_string().contains("FAIL"));
    }

    #[test]
    fn relative_error_floor_is_one() {
        assert_eq!(relative_error(1e-9, 0.0), 1e-9);
        assert_eq!(relative_error(200.0, 100.0), 0.5);
    }

    #[test]
    fn both_models_pass_on_tiny_config() {
        let (env, agent) = check_models(1, DEFAULT_STEP, DEFAULT_TOL, None).unwrap();
        assert!(env.passed(), "{env}");
        assert!(agent.passed(), "{agent}");
        assert_eq!(env.groups.len(), 1 + 3 + 9);
        assert_eq!(agent.groups.len(), 10);
    }

    #[test]
    fn injected_faults_are_caught() {
        let (env, _) = check_models(1, DEFAULT_STEP, DEFAULT_TOL, Some(Fault::ReluPassThrough)).unwrap();
        assert!(!env.passed(), "{env}");
        let (_, agent) = check_models(1, DEFAULT_STEP, DEFAULT_TOL, Some(Fault::SigmoidIdentity)).unwrap();
        assert!(!agent.passed(), "{agent}");
    }
}
