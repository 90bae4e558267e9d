//! Training configuration and the flat `key = value` run-config format.
//!
//! ```text
//! # comment
//! d = 48
//! gamma = 0.95
//! ablation = full
//! ```
//!
//! Every key is listed in [`KEYS`]; unknown keys and bad values are all
//! reported together.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReturnMode {
    /// R̃_k = R_k·Σ_{j<K−k} γ^j: the step's own reward, geometrically weighted.
    Literal,
    /// R̃_k = Σ_{j≥k} γ^{j−k} R_j.
    ReturnToGo,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Ablation {
    Full,
    /// No policy objective: θ2 frozen, every real comment keeps its stance.
    NoPolicy,
    /// No detector loss: θ1 frozen at initialization.
    NoDetector,
}

/// What the policy network reads for each comment.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PolicyInput {
    /// c_n + S[weak stance of n]: the comment as it would enter the detector
    /// if its stance were retained.
    Candidate,
    /// The detector's current modified matrix, which at the first step is
    /// the plain comment matrix.
    CurrentState,
}

macro_rules! keyword_enum {
    ($ty:ident, $( $variant:ident => $text:literal ),+ $(,)?) => {
        impl $ty {
            pub fn as_str(self) -> &'static str {
                match self { $( $ty::$variant => $text ),+ }
            }
        }
        impl FromStr for $ty {
            type Err = String;
            fn from_str(s: &str) -> std::result::Result<Self, String> {
                match s {
                    $( $text => Ok($ty::$variant), )+
                    _ => Err(format!("unknown value {s:?}, expected one of: {}", [$($text),+].join(", "))),
                }
            }
        }
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }
    };
}

keyword_enum!(ReturnMode, Literal => "literal", ReturnToGo => "return_to_go");
keyword_enum!(Ablation, Full => "full", NoPolicy => "no_pl", NoDetector => "no_dl");
keyword_enum!(PolicyInput, Candidate => "candidate", CurrentState => "current_state");

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    /// Text representation width.
    pub d: usize,
    /// Word embedding width.
    pub d_w: usize,
    /// Tokens per text after padding/truncation.
    pub max_len: usize,
    /// Comment slots per thread.
    pub max_comments: usize,
    pub kernel_sizes: Vec<usize>,
    pub lstm_hidden: usize,
    pub classes: usize,
    pub episodes: usize,
    pub gamma: f64,
    pub lambda: f64,
    pub lr: f64,
    /// Adam learning rate of the policy.
    pub policy_lr: f64,
    pub lr_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub min_count: usize,
    pub return_mode: ReturnMode,
    pub ablation: Ablation,
    pub policy_input: PolicyInput,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl TrainConfig {
    /// Small model that trains on a synthetic corpus in well under a minute.
    pub fn desk() -> Self {
        Self {
            d: 48,
            d_w: 48,
            max_len: 20,
            max_comments: 8,
            kernel_sizes: vec![3, 4, 5],
            lstm_hidden: 24,
            classes: 4,
            episodes: 10,
            gamma: 0.95,
            lambda: 1e-5,
            lr: 1e-3,
            policy_lr: 1e-3,
            lr_decay: 0.95,
            batch_size: 16,
            epochs: 12,
            min_count: 1,
            return_mode: ReturnMode::Literal,
            ablation: Ablation::Full,
            policy_input: PolicyInput::Candidate,
            seed: 1,
        }
    }

    /// The full-size model: 100 kernels per size, 300-wide vectors,
    /// 50-token texts, batch 64.
    pub fn large() -> Self {
        Self { d: 300, d_w: 300, max_len: 50, max_comments: 50, lstm_hidden: 150, batch_size: 64, epochs: 30, ..Self::desk() }
    }

    /// Gradient-check size: d = d_w = 6, L = 8, N = 3, K = 2.
    pub fn tiny() -> Self {
        Self { d: 6, d_w: 6, max_len: 8, max_comments: 3, lstm_hidden: 3, episodes: 2, batch_size: 2, epochs: 1, ..Self::desk() }
    }

    pub fn kernels_per_size(&self) -> usize {
        self.d / self.kernel_sizes.len().max(1)
    }

    pub fn validate(&self) -> Result<()> {
        let mut p = Vec::new();
        for (name, v) in [
            ("d", self.d),
            ("d_w", self.d_w),
            ("max_len", self.max_len),
            ("max_comments", self.max_comments),
            ("lstm_hidden", self.lstm_hidden),
            ("episodes", self.episodes),
            ("batch_size", self.batch_size),
            ("min_count", self.min_count),
        ] {
            if v == 0 {
                p.push(format!("{name} must be positive"));
            }
        }
        if self.kernel_sizes.is_empty() || self.kernel_sizes.contains(&0) {
            p.push("kernel_sizes must be a non-empty list of positive sizes".into());
        } else {
            if !self.d.is_multiple_of(self.kernel_sizes.len()) {
                p.push(format!("d = {} is not divisible by the number of kernel sizes ({})", self.d, self.kernel_sizes.len()));
            }
            let widest = self.kernel_sizes.iter().max().copied().unwrap_or(0);
            if self.max_len < widest {
                p.push(format!("max_len = {} is shorter than the widest kernel ({widest})", self.max_len));
            }
        }
        if self.classes != 4 {
            p.push(format!("classes must be 4 (NR, FR, TR, UR), got {}", self.classes));
        }
        if self.lstm_hidden * 2 != self.d {
            p.push(format!(
                "lstm_hidden must be d/2 so the bidirectional output has width d (d = {}, lstm_hidden = {})",
                self.d, self.lstm_hidden
            ));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            p.push(format!("gamma must lie in [0,1], got {}", self.gamma));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            p.push(format!("lambda must be non-negative, got {}", self.lambda));
        }
        for (name, v) in [("lr", self.lr), ("policy_lr", self.policy_lr)] {
            if !(v > 0.0 && v.is_finite()) {
                p.push(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            p.push(format!("lr_decay must lie in (0,1], got {}", self.lr_decay));
        }
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(p))
        }
    }
}

/// Every accepted key with a one-line description.
pub const KEYS: &[(&str, &str)] = &[
    ("preset", "desk | large | tiny; applied before every other key"),
    ("d", "text representation width"),
    ("d_w", "word embedding width"),
    ("max_len", "tokens per text after padding/truncation"),
    ("max_comments", "comment slots per thread"),
    ("kernel_sizes", "comma-separated convolution widths"),
    ("lstm_hidden", "hidden size of each LSTM direction (d/2)"),
    ("classes", "number of veracity classes (4)"),
    ("episodes", "agent interaction steps per sample"),
    ("gamma", "discount factor in [0,1]"),
    ("lambda", "l2 factor on detector parameters"),
    ("lr", "initial Adam learning rate of the detector"),
    ("policy_lr", "initial Adam learning rate of the policy"),
    ("lr_decay", "learning-rate factor applied after every epoch"),
    ("batch_size", "threads per mini-batch"),
    ("epochs", "training epochs"),
    ("min_count", "minimum token frequency for the vocabulary"),
    ("return_mode", "literal | return_to_go"),
    ("ablation", "full | no_pl | no_dl"),
    ("policy_input", "candidate | current_state"),
    ("seed", "seed for initialization, shuffling, sampling and splitting"),
    ("data", "thread file (JSON lines)"),
    ("embeddings", "optional pretrained embedding file"),
    ("out", "output directory"),
];

/// Training configuration plus file locations.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub data: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

fn parse_value<T: FromStr>(key: &str, value: &str, problems: &mut Vec<String>) -> Option<T>
where
    T::Err: fmt::Display,
{
    match value.parse::<T>() {
        Ok(v) => Some(v),
        Err(e) => {
            problems.push(format!("{key}: cannot parse {value:?}: {e}"));
            None
        }
    }
}

impl RunConfig {
    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        let mut problems = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            match line.split_once('=') {
                Some((k, v)) => pairs.push((k.trim().to_string(), v.trim().to_string())),
                None => problems.push(format!("line {}: expected key = value, got {line:?}", i + 1)),
            }
        }
        let mut cfg = Self::default();
        cfg.apply(&pairs, &mut problems);
        if problems.is_empty() {
            cfg.train.validate()?;
            Ok(cfg)
        } else {
            Err(Error::Config(problems))
        }
    }

    /// Applies overrides on top of this config, then validates.
    pub fn with_overrides(mut self, pairs: &[(String, String)]) -> Result<Self> {
        let mut problems = Vec::new();
        self.apply(pairs, &mut problems);
        if let Err(Error::Config(more)) = self.train.validate() {
            problems.extend(more);
        }
        if problems.is_empty() {
            Ok(self)
        } else {
            Err(Error::Config(problems))
        }
    }

    fn apply(&mut self, pairs: &[(String, String)], problems: &mut Vec<String>) {
        if let Some((_, preset)) = pairs.iter().rev().find(|(k, _)| k == "preset") {
            match preset.as_str() {
                "desk" => self.train = TrainConfig::desk(),
                "large" => self.train = TrainConfig::large(),
                "tiny" => self.train = TrainConfig::tiny(),
                other => problems.push(format!("preset: unknown preset {other:?} (desk, large, tiny)")),
            }
        }
        let t = &mut self.train;
        for (key, value) in pairs {
            let v = value.as_str();
            let k = key.as_str();
            macro_rules! set {
                ($field:expr) => {
                    if let Some(x) = parse_value(k, v, problems) {
                        $field = x;
                    }
                };
            }
            match k {
                "preset" => {}
                "d" => set!(t.d),
                "d_w" => set!(t.d_w),
                "max_len" => set!(t.max_len),
                "max_comments" => set!(t.max_comments),
                "kernel_sizes" => {
                    let sizes: std::result::Result<Vec<usize>, _> = v.split(',').map(|s| s.trim().parse::<usize>()).collect();
                    match sizes {
                        Ok(s) => t.kernel_sizes = s,
                        Err(e) => problems.push(format!("kernel_sizes: cannot parse {v:?}: {e}")),
                    }
                }
                "lstm_hidden" => set!(t.lstm_hidden),
                "classes" => set!(t.classes),
                "episodes" => set!(t.episodes),
                "gamma" => set!(t.gamma),
                "lambda" => set!(t.lambda),
                "lr" => set!(t.lr),
                "policy_lr" => set!(t.policy_lr),
                "lr_decay" => set!(t.lr_decay),
                "batch_size" => set!(t.batch_size),
                "epochs" => set!(t.epochs),
                "min_count" => set!(t.min_count),
                "return_mode" => set!(t.return_mode),
                "ablation" => set!(t.ablation),
                "policy_input" => set!(t.policy_input),
                "seed" => set!(t.seed),
                "data" => self.data = Some(PathBuf::from(v)),
                "embeddings" => self.embeddings = (!v.is_empty()).then(|| PathBuf::from(v)),
                "out" => self.out = Some(PathBuf::from(v)),
                _ => problems.push(format!("unknown key {k:?}")),
            }
        }
    }

    /// Canonical `key = value` text; parsing it yields this config back.
    pub fn to_text(&self) -> String {
        let t = &self.train;
        let sizes: Vec<String> = t.kernel_sizes.iter().map(ToString::to_string).collect();
        let mut lines = vec![
            format!("d = {}", t.d),
            format!("d_w = {}", t.d_w),
            format!("max_len = {}", t.max_len),
            format!("max_comments = {}", t.max_comments),
            format!("kernel_sizes = {}", sizes.join(",")),
            format!("lstm_hidden = {}", t.lstm_hidden),
            format!("classes = {}", t.classes),
            format!("episodes = {}", t.episodes),
            format!("gamma = {:?}", t.gamma),
            format!("lambda = {:?}", t.lambda),
            format!("lr = {:?}", t.lr),
            format!("policy_lr = {:?}", t.policy_lr),
            format!("lr_decay = {:?}", t.lr_decay),
            format!("batch_size = {}", t.batch_size),
            format!("epochs = {}", t.epochs),
            format!("min_count = {}", t.min_count),
            format!("return_mode = {}", t.return_mode),
            format!("ablation = {}", t.ablation),
            format!("policy_input = {}", t.policy_input),
            format!("seed = {}", t.seed),
        ];
        for (key, path) in [("data", &self.data), ("embeddings", &self.embeddings), ("out", &self.out)] {
            if let Some(p) = path {
                lines.push(format!("{key} = {}", p.display()));
            }
        }
        lines.join("\n") + "\n"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        TrainConfig::desk().validate().unwrap();
        TrainConfig::large().validate().unwrap();
        TrainConfig::tiny().validate().unwrap();
        assert_eq!(TrainConfig::large().kernels_per_size(), 100);
        assert_eq!(TrainConfig::desk().kernels_per_size(), 16);
    }

    #[test]
    fn parse_and_echo_round_trip() {
        let cfg =
            RunConfig::parse("# run\nd = 12\nlstm_hidden = 6\nd_w=8\ngamma = 0.5 # discount\nablation = no_dl\ndata = x.jsonl\n")
                .unwrap();
        assert_eq!(cfg.train.d, 12);
        assert_eq!(cfg.train.gamma, 0.5);
        assert_eq!(cfg.train.ablation, Ablation::NoDetector);
        assert_eq!(cfg.data, Some(PathBuf::from("x.jsonl")));
        assert_eq!(RunConfig::parse(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn every_problem_is_reported() {
        let err = RunConfig::parse("bogus = 1\ngamma = 2\nd = x\nno equals sign\n").unwrap_err();
        let Error::Config(p) = err else { panic!("{err:?}") };
        assert_eq!(p.len(), 3, "{p:?}");
        let err = RunConfig::default().with_overrides(&[("gamma".into(), "1.5".into()), ("d".into(), "50".into())]).unwrap_err();
        let Error::Config(p) = err else { panic!() };
        // gamma range, d divisibility, lstm width
        assert_eq!(p.len(), 3, "{p:?}");
    }

    #[test]
    fn preset_applies_first() {
        let cfg = RunConfig::parse("epochs = 2\npreset = tiny\n").unwrap();
        assert_eq!(cfg.train.d, 6);
        assert_eq!(cfg.train.epochs, 2);
    }

    #[test]
    fn every_key_is_documented() {
        let text =
            RunConfig { data: Some("a".into()), embeddings: Some("b".into()), out: Some("c".into()), ..RunConfig::default() }
                .to_text();
        for line in text.lines() {
            let key = line.split('=').next().unwrap().trim();
            assert!(KEYS.iter().any(|(k, _)| *k == key), "{key}");
        }
    }
}
