//! Trains detector and policy together on a synthetic corpus and prints the
//! per-epoch history, then saves and reloads the checkpoint.
//!
//!     cargo run --release --example train

use srlf::checkpoint;
use srlf::config::{RunConfig, TrainConfig};
use srlf::data::{self, SynthConfig};
use srlf::train::{self, Corpus};

fn main() -> srlf::Result<()> {
    let threads = data::generate(&SynthConfig { threads: 400, seed: 1, ..SynthConfig::default() })?;
    let cfg = TrainConfig { epochs: 6, ..TrainConfig::desk() };
    let corpus = Corpus::prepare(threads, &cfg)?;

    let outcome = train::train(&cfg, &corpus, None, &mut |row, _| {
        println!(
            "epoch {:>2} {:<5} loss {:.4} acc {:.3} macro F1 {:.3}",
            row.epoch, row.split, row.loss, row.accuracy, row.macro_f1
        );
    })?;
    println!(
        "kept epoch {}; {} detector steps, {} policy steps, rewards in [{:.3}, {:.3}]",
        outcome.best_epoch, outcome.detector_steps, outcome.policy_steps, outcome.rewards.min, outcome.rewards.max
    );

    let run = RunConfig { train: cfg, ..RunConfig::default() };
    let bytes = checkpoint::to_bytes(&run, &outcome.model)?;
    let (_, restored) = checkpoint::from_bytes(&bytes)?;
    assert_eq!(restored, outcome.model);
    println!("checkpoint: {} bytes, reload is exact", bytes.len());
    Ok(())
}
