//! Finite-difference check of both models, then the same check with a
//! deliberately broken ReLU backward rule.
//!
//!     cargo run --release --example gradcheck

use srlf::autodiff::Fault;
use srlf::gradcheck::{check_models, DEFAULT_STEP, DEFAULT_TOL};

fn main() -> srlf::Result<()> {
    let (env, agent) = check_models(1, DEFAULT_STEP, DEFAULT_TOL, None)?;
    println!("{env}\n{agent}");

    let (env, _) = check_models(1, DEFAULT_STEP, DEFAULT_TOL, Some(Fault::ReluPassThrough))?;
    println!("with a broken ReLU rule:");
    for group in env.failures() {
        println!("  caught {} (max relative error {:.2e})", group.name, group.max_rel_error);
    }
    Ok(())
}
