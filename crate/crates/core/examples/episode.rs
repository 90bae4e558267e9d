//! One policy episode on one thread: sampled actions, rewards, returns under
//! both return modes, and the number of policy updates applied.
//!
//!     cargo run --release --example episode

use srlf::agent;
use srlf::config::{ReturnMode, TrainConfig};
use srlf::data::{self, SynthConfig};
use srlf::optim::{Adam, Direction};
use srlf::rng;
use srlf::train::{Corpus, Model};

fn main() -> srlf::Result<()> {
    let threads = data::generate(&SynthConfig { threads: 40, seed: 4, ..SynthConfig::default() })?;
    let cfg = TrainConfig { episodes: 5, ..TrainConfig::desk() };
    let corpus = Corpus::prepare(threads, &cfg)?;
    let mut model = Model::init(&cfg, corpus.vocab.clone(), None);
    let sample = &corpus.samples[corpus.split.train[0]];
    println!("thread label {}, weak stances {:?}, corrupted {:?}", sample.label, sample.stances, sample.corrupted);

    let mut adam = Adam::new(cfg.policy_lr, Direction::Ascent);
    let trace = agent::run_episode(&mut model.agent, &mut adam, &model.env, sample, &cfg, &mut rng::stream(4, rng::AGENT))?;
    for (k, (a, r)) in trace.actions.iter().zip(&trace.rewards).enumerate() {
        println!("step {k}: actions {a:?} log P {:+.3} reward {r:+.4} return {:+.4}", trace.log_probs[k], trace.returns[k]);
    }
    let to_go = agent::compute_returns(&trace.rewards, cfg.gamma, ReturnMode::ReturnToGo);
    println!("return-to-go alternative: {:?}", to_go.iter().map(|x| format!("{x:+.4}")).collect::<Vec<_>>());
    println!("{} policy updates applied", trace.updates);
    Ok(())
}
