//! One training run per value of a single hyperparameter.

use std::fmt;
use std::str::FromStr;

use crate::config::TrainConfig;
use crate::data::Thread;
use crate::error::{Error, Result};
use crate::train::{self, Corpus};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepParam {
    Gamma,
    Lambda,
}

impl SweepParam {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepParam::Gamma => "gamma",
            SweepParam::Lambda => "lambda",
        }
    }

    fn apply(self, cfg: &mut TrainConfig, value: f64) {
        match self {
            SweepParam::Gamma => cfg.gamma = value,
            SweepParam::Lambda => cfg.lambda = value,
        }
    }
}

impl FromStr for SweepParam {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "gamma" => Ok(SweepParam::Gamma),
            "lambda" => Ok(SweepParam::Lambda),
            _ => Err(format!("cannot sweep {s:?}, expected gamma or lambda")),
        }
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub param: SweepParam,
    pub value: f64,
    pub best_epoch: usize,
    pub val_accuracy: f64,
    pub test_accuracy: f64,
    pub test_macro_f1: f64,
}

pub const TSV_HEADER: &str = "param\tvalue\tbest_epoch\tval_accuracy\ttest_accuracy\ttest_macro_f1";

impl SweepRow {
    pub fn to_tsv(&self) -> String {
        format!(
            "{}\t{:?}\t{}\t{:.6}\t{:.6}\t{:.6}",
            self.param, self.value, self.best_epoch, self.val_accuracy, self.test_accuracy, self.test_macro_f1
        )
    }
}

fn run_one(base: &TrainConfig, corpus: &Corpus, param: SweepParam, value: f64) -> Result<SweepRow> {
    let mut cfg = base.clone();
    param.apply(&mut cfg, value);
    let out = train::train(&cfg, corpus, None, &mut |_, _| {})?;
    Ok(SweepRow {
        param,
        value,
        best_epoch: out.best_epoch,
        val_accuracy: out.best_val.accuracy(),
        test_accuracy: out.test.accuracy(),
        test_macro_f1: out.test.confusion.macro_f1(),
    })
}

/// Rows come back in the order of `values`. With `parallel`, every value
/// trains on its own OS thread; results are identical either way.
pub fn sweep(
    base: &TrainConfig,
    threads: Vec<Thread>,
    param: SweepParam,
    values: &[f64],
    parallel: bool,
) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(Error::validation("values", "sweep needs at least one value"));
    }
    let corpus = Corpus::prepare(threads, base)?;
    if !parallel {
        return values.iter().map(|&v| run_one(base, &corpus, param, v)).collect();
    }
    std::thread::scope(|s| {
        let handles: Vec<_> = values
            .iter()
            .map(|&v| {
                s.spawn({
                    let corpus = &corpus;
                    move || run_one(base, corpus, param, v)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("sweep worker panicked")).collect()
    })
}
