use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"APRE";

/// Row-major `rows × dim` matrix of f32 features.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    rows: usize,
    dim: usize,
    data: Vec<f32>,
}

impl EmbeddingMatrix {
    pub fn new(rows: usize, dim: usize, data: Vec<f32>) -> Result<Self> {
        if rows.checked_mul(dim) != Some(data.len()) {
            return Err(Error::Shape {
                expected: format!("{rows}x{dim} = {} values", rows.saturating_mul(dim)),
                found: format!("{} values", data.len()),
            });
        }
        // Non-empty data implies dim > 0 after the shape check.
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row: pos / dim });
        }
        Ok(Self { rows, dim, data })
    }

    pub fn from_rows<R: AsRef<[f32]>>(dim: usize, rows: &[R]) -> Result<Self> {
        let mut data = Vec::with_capacity(rows.len() * dim);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != dim {
                return Err(Error::Shape {
                    expected: format!("row {i} of length {dim}"),
                    found: r.len().to_string(),
                });
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), dim, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// New matrix made of the given rows, in order.
    pub fn select(&self, indices: &[usize]) -> EmbeddingMatrix {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        EmbeddingMatrix {
            rows: indices.len(),
            dim: self.dim,
            data,
        }
    }

    /// Appends the rows of `other` below this matrix.
    pub fn append(&mut self, other: &EmbeddingMatrix) -> Result<()> {
        if other.dim != self.dim {
            return Err(Error::Shape {
                expected: format!("dim {}", self.dim),
                found: format!("dim {}", other.dim),
            });
        }
        self.data.extend_from_slice(&other.data);
        self.rows += other.rows;
        Ok(())
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&(self.rows as u64).to_le_bytes())?;
        w.write_all(&(self.dim as u64).to_le_bytes())?;
        for v in &self.data {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)
            .map_err(|_| Error::Embedding("truncated header".into()))?;
        if &magic != MAGIC {
            return Err(Error::Embedding(format!("bad magic {magic:?}")));
        }
        let mut word = [0u8; 8];
        r.read_exact(&mut word)
            .map_err(|_| Error::Embedding("truncated header".into()))?;
        let rows = u64::from_le_bytes(word) as usize;
        r.read_exact(&mut word)
            .map_err(|_| Error::Embedding("truncated header".into()))?;
        let dim = u64::from_le_bytes(word) as usize;
        let n = rows
            .checked_mul(dim)
            .ok_or_else(|| Error::Embedding("shape overflows".into()))?;
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if bytes.len() != n * 4 {
            return Err(Error::Shape {
                expected: format!("{n} f32 values after header"),
                found: format!("{} bytes", bytes.len()),
            });
        }
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Self::new(rows, dim, data)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_to(BufWriter::new(File::create(path)?))
    }
}

/// Loads an `APRE` file and checks its declared shape against expectations.
pub fn load_embeddings(
    path: &Path,
    expected_rows: Option<usize>,
    expected_dim: Option<usize>,
) -> Result<EmbeddingMatrix> {
    let m = EmbeddingMatrix::read_from(BufReader::new(File::open(path)?))?;
    if expected_rows.is_some_and(|r| r != m.rows) || expected_dim.is_some_and(|d| d != m.dim) {
        return Err(Error::Shape {
            expected: format!(
                "{}x{}",
                expected_rows.map_or("*".into(), |r| r.to_string()),
                expected_dim.map_or("*".into(), |d| d.to_string())
            ),
            found: format!("{}x{}", m.rows, m.dim),
        });
    }
    Ok(m)
}
