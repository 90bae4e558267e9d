//! Threads with weak stance labels: file I/O, stratified splitting and the
//! synthetic corpus generator.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Stance {
    Support,
    Deny,
    Query,
    Comment,
}

impl Stance {
    pub const ALL: [Stance; 4] = [Stance::Support, Stance::Deny, Stance::Query, Stance::Comment];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Stance::Support => "support",
            Stance::Deny => "deny",
            Stance::Query => "query",
            Stance::Comment => "comment",
        }
    }
}

impl FromStr for Stance {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| format!("unknown stance {s:?} (expected support|deny|query|comment)"))
    }
}

impl fmt::Display for Stance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Rumor veracity classes, in the column order used by every metric.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Veracity {
    NonRumor,
    False,
    True,
    Unverified,
}

impl Veracity {
    pub const ALL: [Veracity; 4] = [Veracity::NonRumor, Veracity::False, Veracity::True, Veracity::Unverified];
    pub const COUNT: usize = 4;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Veracity::NonRumor => "NR",
            Veracity::False => "FR",
            Veracity::True => "TR",
            Veracity::Unverified => "UR",
        }
    }
}

impl FromStr for Veracity {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Self::ALL.into_iter().find(|v| v.as_str() == s).ok_or_else(|| format!("unknown veracity {s:?} (expected NR|FR|TR|UR)"))
    }
}

impl fmt::Display for Veracity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Comment {
    pub text: String,
    pub stance: Stance,
    /// Known only for synthetic corpora: whether `stance` was corrupted.
    pub corrupted: Option<bool>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Thread {
    pub id: String,
    pub source: String,
    pub veracity: Veracity,
    /// In posting order.
    pub comments: Vec<Comment>,
}

#[derive(Serialize, Deserialize)]
struct RawComment {
    text: String,
    stance: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    corrupted: Option<bool>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawThread {
    id: String,
    source: String,
    label: String,
    comments: Vec<RawComment>,
}

fn parse_thread(line: &str, line_no: usize) -> Result<Thread> {
    let raw: RawThread = serde_json::from_str(line).map_err(|e| Error::Parse { line: line_no, msg: e.to_string() })?;
    let veracity = raw.label.parse().map_err(|msg| Error::validation("label", format!("line {line_no}: {msg}")))?;
    let comments = raw
        .comments
        .into_iter()
        .enumerate()
        .map(|(i, c)| {
            let stance = c
                .stance
                .parse()
                .map_err(|msg| Error::validation(format!("comments[{i}].stance"), format!("line {line_no}: {msg}")))?;
            Ok(Comment { text: c.text, stance, corrupted: c.corrupted })
        })
        .collect::<Result<_>>()?;
    Ok(Thread { id: raw.id, source: raw.source, veracity, comments })
}

/// Reads JSON-lines threads. Blank lines are skipped.
pub fn read_threads<B: BufRead>(reader: B) -> Result<Vec<Thread>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse_thread(&line, i + 1)?);
    }
    Ok(out)
}

pub fn load_threads(path: &std::path::Path) -> Result<Vec<Thread>> {
    let file = std::fs::File::open(path)?;
    read_threads(std::io::BufReader::new(file))
}

pub fn thread_to_json(t: &Thread) -> String {
    let raw = RawThread {
        id: t.id.clone(),
        source: t.source.clone(),
        label: t.veracity.as_str().to_string(),
        comments: t
            .comments
            .iter()
            .map(|c| RawComment { text: c.text.clone(), stance: c.stance.as_str().to_string(), corrupted: c.corrupted })
            .collect(),
    };
    serde_json::to_string(&raw).expect("thread serializes")
}

pub fn write_threads<W: Write>(mut out: W, threads: &[Thread]) -> Result<()> {
    for t in threads {
        writeln!(out, "{}", thread_to_json(t))?;
    }
    Ok(())
}

/// Index sets of a train/validation/test partition.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    pub fn select<'a>(threads: &'a [Thread], idx: &[usize]) -> Vec<&'a Thread> {
        idx.iter().map(|&i| &threads[i]).collect()
    }
}

pub const MIN_SPLIT_THREADS: usize = 8;

/// Seeded stratified split: ⌊n/10⌋ validation, then the rest 3:1 into
/// train:test with ⌊rest/4⌋ test.
///
/// Each class is shuffled, then all threads are ordered by their relative
/// rank inside their class, so every prefix of the order holds the classes
/// in close to global proportion. Validation takes the first block of that
/// order, test the next, train the remainder.
pub fn split(threads: &[Thread], seed: u64) -> Result<Split> {
    let n = threads.len();
    if n < MIN_SPLIT_THREADS {
        return Err(Error::validation("threads", format!("need at least {MIN_SPLIT_THREADS} threads to split, got {n}")));
    }
    let n_val = n / 10;
    let n_test = (n - n_val) / 4;
    let mut r = rng::stream(seed, rng::SPLIT);
    let mut keyed: Vec<(f64, usize, usize)> = Vec::with_capacity(n);
    for class in Veracity::ALL {
        let mut members: Vec<usize> = (0..n).filter(|&i| threads[i].veracity == class).collect();
        members.shuffle(&mut r);
        let size = members.len() as f64;
        for (rank, &i) in members.iter().enumerate() {
            keyed.push(((rank as f64 + 0.5) / size, class.index(), i));
        }
    }
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let order: Vec<usize> = keyed.into_iter().map(|(_, _, i)| i).collect();
    Ok(Split {
        val: order[..n_val].to_vec(),
        test: order[n_val..n_val + n_test].to_vec(),
        train: order[n_val + n_test..].to_vec(),
    })
}

/// Synthetic corpus parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub threads: usize,
    pub comments_per_thread: usize,
    pub vocab_size: usize,
    pub tokens_per_text: usize,
    /// Probability that a token comes from a signature set rather than the
    /// background.
    pub signal: f64,
    /// Probability that a comment's observed stance is replaced by a
    /// different one.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self { threads: 400, comments_per_thread: 8, vocab_size: 200, tokens_per_text: 12, signal: 0.9, noise: 0.4, seed: 1 }
    }
}

/// Stance distribution of comments under each veracity class, indexed by
/// [`Stance`] order (support, deny, query, comment).
pub fn stance_profile(v: Veracity) -> [f64; 4] {
    match v {
        Veracity::NonRumor => [0.1, 0.1, 0.1, 0.7],
        Veracity::False => [0.1, 0.45, 0.3, 0.15],
        Veracity::True => [0.6, 0.1, 0.1, 0.2],
        Veracity::Unverified => [0.1, 0.1, 0.5, 0.3],
    }
}

/// Token layout of a synthetic vocabulary of size V with g = max(1, V/20):
/// ids [0, 4g) are stance signatures (g per stance), [4g, 8g) are source
/// signatures (2g per class pair: NR/TR share one block, FR/UR the other),
/// and [8g, V) is background.
#[derive(Clone, Copy, Debug)]
struct TokenLayout {
    group: usize,
    vocab: usize,
}

impl TokenLayout {
    fn new(vocab: usize) -> Self {
        Self { group: (vocab / 20).max(1), vocab }
    }

    fn stance_block(&self, s: Stance) -> (usize, usize) {
        (s.index() * self.group, self.group)
    }

    fn source_block(&self, v: Veracity) -> (usize, usize) {
        let pair = match v {
            Veracity::NonRumor | Veracity::True => 0,
            Veracity::False | Veracity::Unverified => 1,
        };
        (4 * self.group + pair * 2 * self.group, 2 * self.group)
    }

    fn background(&self) -> (usize, usize) {
        (8 * self.group, self.vocab - 8 * self.group)
    }
}

fn draw_text<R: Rng>(r: &mut R, layout: &TokenLayout, signature: (usize, usize), cfg: &SynthConfig) -> String {
    let background = layout.background();
    (0..cfg.tokens_per_text)
        .map(|_| {
            let (start, len) = if r.gen_bool(cfg.signal) { signature } else { background };
            format!("w{}", start + r.gen_range(0..len))
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn draw_categorical<R: Rng>(r: &mut R, probs: &[f64]) -> usize {
    let u: f64 = r.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.threads == 0 {
            problems.push("threads must be positive".to_string());
        }
        if self.comments_per_thread == 0 {
            problems.push("comments_per_thread must be positive".to_string());
        }
        if self.tokens_per_text == 0 {
            problems.push("tokens_per_text must be positive".to_string());
        }
        if self.vocab_size < 20 {
            problems.push(format!("vocab_size must be at least 20, got {}", self.vocab_size));
        }
        if !(0.0..=1.0).contains(&self.signal) {
            problems.push(format!("signal must lie in [0,1], got {}", self.signal));
        }
        if !(0.0..=1.0).contains(&self.noise) {
            problems.push(format!("noise must lie in [0,1], got {}", self.noise));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }

    /// The tokens a generated corpus can use, in id order.
    pub fn vocabulary(&self) -> Vec<String> {
        (0..self.vocab_size).map(|i| format!("w{i}")).collect()
    }
}

/// Generates one thread from its own substream, so a corpus is the same
/// whether threads are produced serially or in parallel.
pub fn generate_thread(cfg: &SynthConfig, index: usize) -> Thread {
    let layout = TokenLayout::new(cfg.vocab_size);
    let mut r = rng::substream(cfg.seed, rng::SYNTH, index as u64);
    let veracity = Veracity::ALL[r.gen_range(0..Veracity::COUNT)];
    let source = draw_text(&mut r, &layout, layout.source_block(veracity), cfg);
    let profile = stance_profile(veracity);
    let comments = (0..cfg.comments_per_thread)
        .map(|_| {
            let truth = Stance::ALL[draw_categorical(&mut r, &profile)];
            let text = draw_text(&mut r, &layout, layout.stance_block(truth), cfg);
            let corrupted = r.gen_bool(cfg.noise);
            let stance = if corrupted {
                let others: Vec<Stance> = Stance::ALL.into_iter().filter(|&s| s != truth).collect();
                others[r.gen_range(0..others.len())]
            } else {
                truth
            };
            Comment { text, stance, corrupted: Some(corrupted) }
        })
        .collect();
    Thread { id: format!("synth-{}-{index:05}", cfg.seed), source, veracity, comments }
}

pub fn generate(cfg: &SynthConfig) -> Result<Vec<Thread>> {
    cfg.validate()?;
    Ok((0..cfg.threads).map(|i| generate_thread(cfg, i)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(threads: usize, noise: f64) -> SynthConfig {
        SynthConfig { threads, noise, ..SynthConfig::default() }
    }

    #[test]
    fn label_strings_round_trip() {
        for s in Stance::ALL {
            assert_eq!(s.as_str().parse::<Stance>().unwrap(), s);
        }
        for v in Veracity::ALL {
            assert_eq!(v.as_str().parse::<Veracity>().unwrap(), v);
        }
        assert!("agree".parse::<Stance>().is_err());
    }

    #[test]
    fn empty_file_gives_no_threads() {
        assert!(read_threads("".as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn unknown_stance_names_the_field() {
        let line = r#"{"id":"1","source":"s","label":"TR","comments":[{"text":"x","stance":"agree"}]}"#;
        match read_threads(line.as_bytes()) {
            Err(Error::Validation { field, msg }) => {
                assert_eq!(field, "comments[0].stance");
                assert!(msg.contains("line 1"), "{msg}");
            }
            other => panic!("{other:?}"),
        }
        let bad_label = r#"{"id":"1","source":"s","label":"XX","comments":[]}"#;
        assert!(matches!(read_threads(bad_label.as_bytes()), Err(Error::Validation { field, .. }) if field == "label"));
    }

    #[test]
    fn malformed_record_reports_line() {
        let text = "\n{\"id\":\"1\",\"source\":\"s\",\"label\":\"TR\",\"comments\":[]}\n{not json\n";
        match read_threads(text.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn write_then_read_is_identity() {
        let threads = generate(&cfg(20, 0.5)).unwrap();
        let mut buf = Vec::new();
        write_threads(&mut buf, &threads).unwrap();
        assert_eq!(read_threads(buf.as_slice()).unwrap(), threads);

        let plain = Thread {
            id: "a\"b".into(),
            source: "Ünïcode  text".into(),
            veracity: Veracity::Unverified,
            comments: vec![Comment { text: String::new(), stance: Stance::Query, corrupted: None }],
        };
        let line = thread_to_json(&plain);
        assert!(!line.contains("corrupted"));
        assert_eq!(read_threads(line.as_bytes()).unwrap(), vec![plain]);
    }

    #[test]
    fn split_sizes_and_partition() {
        let threads = generate(&cfg(1000, 0.4)).unwrap();
        let s = split(&threads, 3).unwrap();
        assert_eq!((s.val.len(), s.train.len(), s.test.len()), (100, 675, 225));
        let mut all: Vec<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..1000).collect::<Vec<_>>());
        assert_eq!(s, split(&threads, 3).unwrap());
        assert_ne!(s, split(&threads, 4).unwrap());
        assert!(split(&threads[..7], 3).is_err());
    }

    #[test]
    fn split_is_stratified() {
        let threads = generate(&cfg(400, 0.4)).unwrap();
        let s = split(&threads, 11).unwrap();
        let freq =
            |idx: &[usize], c: Veracity| idx.iter().filter(|&&i| threads[i].veracity == c).count() as f64 / idx.len() as f64;
        let all: Vec<usize> = (0..threads.len()).collect();
        for c in Veracity::ALL {
            let global = freq(&all, c);
            for part in [&s.train, &s.val, &s.test] {
                assert!((freq(part, c) - global).abs() <= 0.05, "{c}: {} vs {global}", freq(part, c));
            }
        }
    }

    #[test]
    fn noise_extremes() {
        let clean = generate(&cfg(50, 0.0)).unwrap();
        assert!(clean.iter().flat_map(|t| &t.comments).all(|c| c.corrupted == Some(false)));
        let dirty = generate(&cfg(50, 1.0)).unwrap();
        assert!(dirty.iter().flat_map(|t| &t.comments).all(|c| c.corrupted == Some(true)));
    }

    #[test]
    fn corrupted_label_differs_from_text_stance() {
        // With signal 1 every comment token is a signature token of its true stance.
        let c = SynthConfig { signal: 1.0, noise: 1.0, threads: 30, ..SynthConfig::default() };
        let layout = TokenLayout::new(c.vocab_size);
        for t in generate(&c).unwrap() {
            for cm in &t.comments {
                let first: usize = cm.text.split(' ').next().unwrap()[1..].parse().unwrap();
                let truth = Stance::from_index(first / layout.group).unwrap();
                assert_ne!(truth, cm.stance);
            }
        }
    }

    #[test]
    fn generation_is_a_pure_function_of_config() {
        let a = generate(&cfg(30, 0.4)).unwrap();
        assert_eq!(a, generate(&cfg(30, 0.4)).unwrap());
        let serial: Vec<Thread> = (0..30).map(|i| generate_thread(&cfg(30, 0.4), i)).collect();
        let mut reversed: Vec<Thread> = (0..30).rev().map(|i| generate_thread(&cfg(30, 0.4), i)).collect();
        reversed.reverse();
        assert_eq!(serial, reversed);
        assert_eq!(a, serial);
    }

    #[test]
    fn classes_are_balanced_within_three_sigma() {
        let threads = generate(&cfg(4000, 0.4)).unwrap();
        let sigma = (4000.0f64 * 0.25 * 0.75).sqrt();
        for c in Veracity::ALL {
            let n = threads.iter().filter(|t| t.veracity == c).count() as f64;
            assert!((n - 1000.0).abs() <= 3.0 * sigma, "{c}: {n}");
        }
    }

    #[test]
    fn invalid_config_lists_every_problem() {
        let bad = SynthConfig { threads: 0, signal: 2.0, noise: -0.1, ..SynthConfig::default() };
        match generate(&bad) {
            Err(Error::Config(p)) => assert_eq!(p.len(), 3),
            other => panic!("{other:?}"),
        }
    }
}
