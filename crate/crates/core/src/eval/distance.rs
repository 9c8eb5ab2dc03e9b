//! Blocked Euclidean distance kernel.
//!
//! Uses `‖a−b‖² = ‖a‖² + ‖b‖² − 2a·b` with f64 accumulation over f32 inputs.
//! Each output element is produced by the same sequence of operations
//! whatever the tile size or worker count, so results are reproducible
//! bit-for-bit.

use crate::dataset::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::par::Exec;

pub const DEFAULT_TILE: usize = 256;

/// Row-major `rows × cols` distances.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f32>,
}

impl DistanceMatrix {
    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f32 {
        self.data[i * self.cols + j]
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn widen(m: &EmbeddingMatrix) -> Vec<f64> {
    m.data().iter().map(|&v| f64::from(v)).collect()
}

pub fn pairwise_distances(
    queries: &EmbeddingMatrix,
    gallery: &EmbeddingMatrix,
) -> Result<DistanceMatrix> {
    pairwise_distances_with(queries, gallery, DEFAULT_TILE, Exec::default())
}

pub fn pairwise_distances_with(
    queries: &EmbeddingMatrix,
    gallery: &EmbeddingMatrix,
    tile: usize,
    exec: Exec,
) -> Result<DistanceMatrix> {
    if queries.dim() != gallery.dim() {
        return Err(Error::Shape {
            expected: format!("gallery dim {}", queries.dim()),
            found: gallery.dim().to_string(),
        });
    }
    let dim = queries.dim();
    let tile = tile.max(1);
    let (nq, ng) = (queries.rows(), gallery.rows());
    let q = widen(queries);
    let g = widen(gallery);
    fn row(m: &[f64], dim: usize, i: usize) -> &[f64] {
        &m[i * dim..(i + 1) * dim]
    }
    let q_norm: Vec<f64> = (0..nq)
        .map(|i| dot(row(&q, dim, i), row(&q, dim, i)))
        .collect();
    let g_norm: Vec<f64> = (0..ng)
        .map(|j| dot(row(&g, dim, j), row(&g, dim, j)))
        .collect();

    let mut data = vec![0f32; nq * ng];
    if ng > 0 {
        exec.for_each_chunk(&mut data, tile * ng, |t, out| {
            let q0 = t * tile;
            let rows = out.len() / ng;
            for g0 in (0..ng).step_by(tile) {
                let g1 = (g0 + tile).min(ng);
                for r in 0..rows {
                    let qi = q0 + r;
                    let qv = row(&q, dim, qi);
                    let dst = &mut out[r * ng..(r + 1) * ng];
                    for j in g0..g1 {
                        let d2 = q_norm[qi] + g_norm[j] - 2.0 * dot(qv, row(&g, dim, j));
                        dst[j] = d2.max(0.0).sqrt() as f32;
                    }
                }
            }
        });
    }
    Ok(DistanceMatrix {
        rows: nq,
        cols: ng,
        data,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn naive(a: &[f32], b: &[f32]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (f64::from(*x) - f64::from(*y)).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    fn random(rows: usize, dim: usize, seed: u64) -> EmbeddingMatrix {
        let mut rng = crate::seed::rng(seed);
        let data = (0..rows * dim)
            .map(|_| rng.random_range(-1.0f32..1.0))
            .collect();
        EmbeddingMatrix::new(rows, dim, data).unwrap()
    }

    #[test]
    fn three_four_five() {
        let a = EmbeddingMatrix::new(1, 2, vec![0.0, 0.0]).unwrap();
        let b = EmbeddingMatrix::new(2, 2, vec![3.0, 4.0, 0.0, 0.0]).unwrap();
        let d = pairwise_distances(&a, &b).unwrap();
        assert_eq!(d.data, vec![5.0, 0.0]);
    }

    #[test]
    fn matches_naive_loop() {
        let q = random(20, 30, 1);
        let g = random(30, 30, 2);
        for tile in [1, 7, 256] {
            let d = pairwise_distances_with(&q, &g, tile, Exec::Sequential).unwrap();
            for i in 0..20 {
                for j in 0..30 {
                    let n = naive(q.row(i), g.row(j));
                    assert!((f64::from(d.get(i, j)) - n).abs() <= 1e-4 * n.max(1e-12));
                }
            }
        }
    }

    #[test]
    fn symmetric_zero_diagonal_triangle() {
        let x = random(25, 9, 3);
        let d = pairwise_distances_with(&x, &x, 8, Exec::Parallel).unwrap();
        for i in 0..25 {
            assert_eq!(d.get(i, i), 0.0);
            for j in 0..25 {
                assert_eq!(d.get(i, j), d.get(j, i));
                for k in 0..25 {
                    assert!(d.get(i, k) <= d.get(i, j) + d.get(j, k) + 1e-5);
                }
            }
        }
    }

    #[test]
    fn tiling_and_exec_do_not_change_bits() {
        let q = random(37, 13, 4);
        let g = random(41, 13, 5);
        let base = pairwise_distances_with(&q, &g, 256, Exec::Sequential).unwrap();
        for tile in [1, 5, 16] {
            assert_eq!(
                base,
                pairwise_distances_with(&q, &g, tile, Exec::Parallel).unwrap()
            );
        }
    }

    #[test]
    fn dim_mismatch() {
        assert!(pairwise_distances(&random(2, 3, 0), &random(2, 4, 0)).is_err());
    }
}
