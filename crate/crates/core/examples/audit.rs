//! Which weak stance labels does the policy keep? Compares retain rates on
//! intact and corrupted labels before and after training.
//!
//!     cargo run --release --example audit

use srlf::audit::{self, AuditMode, AuditReport};
use srlf::config::TrainConfig;
use srlf::data::{self, SynthConfig};
use srlf::train::{self, Corpus, Model};

fn show(label: &str, r: &AuditReport) {
    let f = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.3}"));
    println!(
        "{label:<18} retain clean {} corrupted {} gap {} | mean P(retain) clean {} corrupted {}",
        f(r.clean_rate()),
        f(r.corrupted_rate()),
        f(r.gap()),
        f(r.clean_mean_prob()),
        f(r.corrupted_mean_prob())
    );
}

fn main() -> srlf::Result<()> {
    let threads = data::generate(&SynthConfig { threads: 400, noise: 0.4, seed: 1, ..SynthConfig::default() })?;
    let cfg = TrainConfig { epochs: 6, ..TrainConfig::desk() };
    let corpus = Corpus::prepare(threads, &cfg)?;
    let test = corpus.select(&corpus.split.test);

    let untrained = Model::init(&cfg, corpus.vocab.clone(), None);
    show("untrained, greedy", &audit::audit(&untrained, &cfg, &test, AuditMode::Greedy)?);
    show("untrained, sampled", &audit::audit(&untrained, &cfg, &test, AuditMode::Sampled { seed: 1 })?);

    let out = train::train(&cfg, &corpus, None, &mut |_, _| {})?;
    show("trained, greedy", &audit::audit(&out.model, &cfg, &test, AuditMode::Greedy)?);
    show("trained, sampled", &audit::audit(&out.model, &cfg, &test, AuditMode::Sampled { seed: 1 })?);
    Ok(())
}
