//! `APRM` checkpoint files.
//!
//! Layout (little-endian): magic, then the config block
//! `input_dim u64, n_hidden u64, hidden_dims[n] u64, activation u64, K u64,
//! M u64, m[M] u64, dropout f64, lambda f64`, then every tensor in
//! declaration order (hidden layers, FC_0, FC_1..FC_M; weight then bias)
//! as f32.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{init_params, Activation, ModelConfig, ModelParams};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"APRM";

pub fn write_checkpoint<W: Write>(params: &ModelParams, mut w: W) -> Result<()> {
    let c = &params.config;
    let mut buf = CHECKPOINT_MAGIC.to_vec();
    let mut put = |v: u64| buf.extend_from_slice(&v.to_le_bytes());
    put(c.input_dim as u64);
    put(c.hidden_dims.len() as u64);
    c.hidden_dims.iter().for_each(|&h| put(h as u64));
    put(c.activation.code());
    put(c.num_identities as u64);
    put(c.attribute_class_counts.len() as u64);
    c.attribute_class_counts.iter().for_each(|&m| put(m as u64));
    buf.extend_from_slice(&c.dropout_rate.to_le_bytes());
    buf.extend_from_slice(&c.lambda.to_le_bytes());
    for t in params.layers.tensors() {
        for &v in t {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    w.flush()?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl Cursor<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        let end = self.at + N;
        let s = self
            .bytes
            .get(self.at..end)
            .ok_or_else(|| Error::Checkpoint("truncated".into()))?;
        self.at = end;
        Ok(s.try_into().expect("length checked"))
    }

    fn u64(&mut self) -> Result<u64> {
        self.take::<8>().map(u64::from_le_bytes)
    }

    fn usize(&mut self, what: &str) -> Result<usize> {
        let v = self.u64()?;
        if v > (1 << 32) {
            return Err(Error::Checkpoint(format!("implausible {what}: {v}")));
        }
        Ok(v as usize)
    }

    fn f64(&mut self) -> Result<f64> {
        self.take::<8>().map(f64::from_le_bytes)
    }
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<ModelParams> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let mut cur = Cursor {
        bytes: &bytes,
        at: 0,
    };
    if &cur.take::<4>()? != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let input_dim = cur.usize("input_dim")?;
    let n_hidden = cur.usize("hidden layer count")?;
    let hidden_dims = (0..n_hidden)
        .map(|_| cur.usize("hidden width"))
        .collect::<Result<Vec<_>>>()?;
    let act = cur.u64()?;
    let activation = Activation::from_code(act)
        .ok_or_else(|| Error::Checkpoint(format!("unknown activation code {act}")))?;
    let num_identities = cur.usize("K")?;
    let m = cur.usize("M")?;
    let attribute_class_counts = (0..m)
        .map(|_| cur.usize("class count"))
        .collect::<Result<Vec<_>>>()?;
    let dropout_rate = cur.f64()?;
    let lambda = cur.f64()?;
    let config = ModelConfig {
        input_dim,
        hidden_dims,
        activation,
        num_identities,
        attribute_class_counts,
        dropout_rate,
        lambda,
    };
    let mut params = init_params(&config, 0).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let expected = params.layers.num_params() * 4;
    if bytes.len() - cur.at != expected {
        return Err(Error::Checkpoint(format!(
            "expected {expected} parameter bytes, found {}",
            bytes.len() - cur.at
        )));
    }
    for t in params.layers.tensors_mut() {
        for v in t.iter_mut() {
            let x = f32::from_le_bytes(cur.take::<4>()?);
            if !x.is_finite() {
                return Err(Error::Checkpoint("non-finite parameter".into()));
            }
            *v = f64::from(x);
        }
    }
    Ok(params)
}

pub fn save_checkpoint(params: &ModelParams, path: &Path) -> Result<()> {
    write_checkpoint(params, BufWriter::new(File::create(path)?))
}

pub fn load_checkpoint(path: &Path) -> Result<ModelParams> {
    read_checkpoint(BufReader::new(File::open(path)?))
}
