//! Builds a vocabulary, encodes a few comments with a randomly initialized
//! convolutional encoder, and prints the resulting representations.
//!
//!     cargo run --release --example encode_text

use srlf::autodiff::Graph;
use srlf::config::TrainConfig;
use srlf::env::EnvParams;
use srlf::rng;
use srlf::text::{self, Vocab};

fn main() -> srlf::Result<()> {
    let texts = ["Not trusting BBC on this one", "confirmed by the police", "is this real??", ""];
    let vocab = Vocab::build(texts.iter().copied(), 1);
    println!("vocabulary of {} tokens: {:?}", vocab.len(), vocab.tokens());

    let cfg = TrainConfig { d: 6, d_w: 8, max_len: 8, ..TrainConfig::tiny() };
    let params = EnvParams::init(&cfg, vocab.len(), None, &mut rng::stream(1, rng::INIT));
    let mut g = Graph::new();
    let vars = params.register(&mut g, false);
    for t in texts {
        let ids = vocab.encode(t, cfg.max_len);
        let v = text::encode_text(&mut g, vars.embedding, &vars.kernels, &ids)?;
        let row: Vec<String> = g.value(v).data().iter().map(|x| format!("{x:+.3}")).collect();
        println!("{t:?}\n  ids {ids:?}\n  vec [{}]", row.join(" "));
    }
    Ok(())
}
