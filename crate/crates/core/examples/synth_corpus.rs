//! Generates a synthetic corpus with corrupted weak stance labels and shows
//! what a thread looks like, how often labels are corrupted, and the split.
//!
//!     cargo run --release --example synth_corpus

use srlf::data::{self, SynthConfig, Veracity};

fn main() -> srlf::Result<()> {
    let cfg = SynthConfig { threads: 400, noise: 0.4, seed: 1, ..SynthConfig::default() };
    let threads = data::generate(&cfg)?;

    let first = &threads[0];
    println!("{} [{}] {}", first.id, first.veracity.as_str(), first.source);
    for c in &first.comments {
        let flag = if c.corrupted == Some(true) { "corrupted" } else { "" };
        println!("  {:<8} {:<9} {}", c.stance.as_str(), flag, c.text);
    }

    let comments: Vec<_> = threads.iter().flat_map(|t| &t.comments).collect();
    let corrupted = comments.iter().filter(|c| c.corrupted == Some(true)).count();
    println!("\n{} comments, {:.3} corrupted (noise {})", comments.len(), corrupted as f64 / comments.len() as f64, cfg.noise);
    for v in Veracity::ALL {
        println!("  {}: {} threads", v.as_str(), threads.iter().filter(|t| t.veracity == v).count());
    }

    let split = data::split(&threads, 1)?;
    println!("split: train {}, val {}, test {}", split.train.len(), split.val.len(), split.test.len());
    Ok(())
}
