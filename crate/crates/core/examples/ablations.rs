//! Full training against the two ablations: no policy (every stance kept)
//! and no detector loss (detector frozen at initialization).
//!
//!     cargo run --release --example ablations

use srlf::config::{Ablation, TrainConfig};
use srlf::data::{self, SynthConfig};
use srlf::train::{self, Corpus};

fn main() -> srlf::Result<()> {
    let threads = data::generate(&SynthConfig { threads: 400, seed: 2, ..SynthConfig::default() })?;
    for ablation in [Ablation::Full, Ablation::NoPolicy, Ablation::NoDetector] {
        let cfg = TrainConfig { ablation, seed: 2, epochs: 8, ..TrainConfig::desk() };
        let corpus = Corpus::prepare(threads.clone(), &cfg)?;
        let out = train::train(&cfg, &corpus, None, &mut |_, _| {})?;
        println!(
            "{:<6} test accuracy {:.3}, macro F1 {:.3} (detector steps {}, policy steps {})",
            ablation.to_string(),
            out.test.accuracy(),
            out.test.confusion.macro_f1(),
            out.detector_steps,
            out.policy_steps
        );
    }
    Ok(())
}
