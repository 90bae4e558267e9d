//! Binary model checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "SRLFCKPT" u32 version
//! u32 len, config text (key = value lines)
//! u32 count, then count × (u32 len, token bytes)       vocabulary, PAD and UNK first
//! u32 count, then count × parameter:
//!     u32 len, name bytes, u32 ndim, ndim × u64 extent, values as f64
//! ```
//!
//! Detector parameters come first, then policy parameters, each in
//! [`Parameters::named`] order. The output directory is not stored, so equal
//! models trained into different directories produce equal bytes.

use std::io::{Read, Write};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::params::Parameters;
use crate::text::{Vocab, PAD_TOKEN, UNK_TOKEN};
use crate::train::Model;

const MAGIC: &[u8; 8] = b"SRLFCKPT";
const VERSION: u32 = 1;

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Checkpoint(format!("length {v} does not fit in u32")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn put_str(out: &mut Vec<u8>, s: &str) -> Result<()> {
    put_u32(out, s.len())?;
    out.extend_from_slice(s.as_bytes());
    Ok(())
}

pub fn to_bytes(config: &RunConfig, model: &Model) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let stored = RunConfig { out: None, ..config.clone() };
    put_str(&mut out, &stored.to_text())?;
    put_u32(&mut out, model.vocab.len())?;
    for tok in model.vocab.tokens() {
        put_str(&mut out, tok)?;
    }
    let mut named = model.env.named();
    named.extend(model.agent.named());
    put_u32(&mut out, named.len())?;
    for (name, t) in named {
        put_str(&mut out, &name)?;
        put_u32(&mut out, t.shape().len())?;
        for &e in t.shape() {
            out.extend_from_slice(&(e as u64).to_le_bytes());
        }
        for &v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn save<W: Write>(mut w: W, config: &RunConfig, model: &Model) -> Result<()> {
    w.write_all(&to_bytes(config, model)?)?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint(format!("truncated at byte {} (wanted {n} more)", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }

    fn u64(&mut self) -> Result<usize> {
        let v = u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes"));
        usize::try_from(v).map_err(|_| Error::Checkpoint(format!("extent {v} too large")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::Checkpoint("string is not UTF-8".into()))
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<(RunConfig, Model)> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(8)? != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint (bad magic)".into()));
    }
    let version = c.u32()?;
    if version != VERSION as usize {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let config = RunConfig::parse(&c.string()?)?;
    let count = c.u32()?;
    let mut tokens = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        tokens.push(c.string()?);
    }
    if tokens.len() < 2 || tokens[0] != PAD_TOKEN || tokens[1] != UNK_TOKEN {
        return Err(Error::Checkpoint("vocabulary must start with the PAD and UNK tokens".into()));
    }
    let vocab = Vocab::from_tokens(tokens.into_iter().skip(2));
    let mut model = Model::init(&config.train, vocab, None);

    let stored = c.u32()?;
    let mut slots = model.env.named_mut();
    slots.extend(model.agent.named_mut());
    if stored != slots.len() {
        return Err(Error::Checkpoint(format!("{stored} parameters stored, model has {}", slots.len())));
    }
    for (name, tensor) in slots {
        let got = c.string()?;
        if got != name {
            return Err(Error::Checkpoint(format!("expected parameter {name}, found {got}")));
        }
        let ndim = c.u32()?;
        let shape = (0..ndim).map(|_| c.u64()).collect::<Result<Vec<_>>>()?;
        if shape != tensor.shape() {
            return Err(Error::Checkpoint(format!("{name}: stored shape {shape:?}, expected {:?}", tensor.shape())));
        }
        for v in tensor.data_mut() {
            *v = c.f64()?;
        }
        if !tensor.is_finite() {
            return Err(Error::Checkpoint(format!("{name} holds non-finite values")));
        }
    }
    if c.pos != bytes.len() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - c.pos)));
    }
    Ok((config, model))
}

pub fn load<R: Read>(mut r: R) -> Result<(RunConfig, Model)> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::TrainConfig;

    fn fixture() -> (RunConfig, Model) {
        let cfg = RunConfig { train: TrainConfig::tiny(), ..RunConfig::default() };
        let model = Model::init(&cfg.train, Vocab::from_tokens(["a", "b", "c"]), None);
        (cfg, model)
    }

    #[test]
    fn round_trip_is_exact() {
        let (mut cfg, model) = fixture();
        cfg.data = Some("threads.jsonl".into());
        let bytes = to_bytes(&cfg, &model).unwrap();
        let (cfg2, model2) = from_bytes(&bytes).unwrap();
        assert_eq!(cfg2, cfg);
        assert_eq!(model2, model);
        assert_eq!(to_bytes(&cfg2, &model2).unwrap(), bytes);

        let elsewhere = RunConfig { out: Some("runs/b".into()), ..cfg };
        assert_eq!(to_bytes(&elsewhere, &model).unwrap(), bytes);
    }

    #[test]
    fn corrupt_input_is_rejected() {
        let (cfg, model) = fixture();
        let bytes = to_bytes(&cfg, &model).unwrap();
        assert!(from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(from_bytes(&extra).is_err());
        let mut bad = bytes;
        bad[0] = b'X';
        assert!(matches!(from_bytes(&bad), Err(Error::Checkpoint(_))));
    }
}
