//! One training run per discount factor, printed as TSV.
//!
//!     cargo run --release --example sweep

use srlf::config::TrainConfig;
use srlf::data::{self, SynthConfig};
use srlf::sweep::{self, SweepParam, TSV_HEADER};

fn main() -> srlf::Result<()> {
    let threads = data::generate(&SynthConfig { threads: 200, seed: 3, ..SynthConfig::default() })?;
    let cfg = TrainConfig { epochs: 4, seed: 3, ..TrainConfig::desk() };
    let rows = sweep::sweep(&cfg, threads, SweepParam::Gamma, &[0.1, 0.5, 0.9, 0.99], false)?;
    println!("{TSV_HEADER}");
    for r in rows {
        println!("{}", r.to_tsv());
    }
    Ok(())
}
