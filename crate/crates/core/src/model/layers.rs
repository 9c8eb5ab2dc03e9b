use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Fully connected layer, `rows` outputs over `cols` inputs, weights row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub rows: usize,
    pub cols: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            weight: vec![0.0; rows * cols],
            bias: vec![0.0; rows],
        }
    }

    /// U(-1/sqrt(cols), 1/sqrt(cols)) weights, zero bias.
    pub fn uniform(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = 1.0 / (cols as f64).sqrt();
        Self {
            rows,
            cols,
            weight: (0..rows * cols)
                .map(|_| rng.random_range(-bound..bound))
                .collect(),
            bias: vec![0.0; rows],
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        self.weight
            .chunks_exact(self.cols)
            .zip(&self.bias)
            .map(|(row, b)| b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
            .collect()
    }

    /// Accumulates `dW += dy ⊗ x`, `db += dy`; returns `Wᵀ dy` when `want_input`.
    pub(crate) fn backprop(
        &self,
        x: &[f64],
        dy: &[f64],
        grad: &mut Dense,
        want_input: bool,
    ) -> Vec<f64> {
        let mut dx = if want_input {
            vec![0.0; self.cols]
        } else {
            Vec::new()
        };
        for (r, &g) in dy.iter().enumerate() {
            grad.bias[r] += g;
            if g == 0.0 {
                continue;
            }
            let w = &self.weight[r * self.cols..(r + 1) * self.cols];
            let gw = &mut grad.weight[r * self.cols..(r + 1) * self.cols];
            for (gwi, xi) in gw.iter_mut().zip(x) {
                *gwi += g * xi;
            }
            if want_input {
                for (d, wi) in dx.iter_mut().zip(w) {
                    *d += g * wi;
                }
            }
        }
        dx
    }
}

/// Every trainable tensor of the network, in checkpoint order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layers {
    pub hidden: Vec<Dense>,
    /// FC_0, the identity classifier.
    pub id_head: Dense,
    /// FC_1..FC_M, one classifier per attribute.
    pub attr_heads: Vec<Dense>,
}

impl Layers {
    pub fn zeros_like(&self) -> Self {
        let z = |d: &Dense| Dense::zeros(d.rows, d.cols);
        Self {
            hidden: self.hidden.iter().map(z).collect(),
            id_head: z(&self.id_head),
            attr_heads: self.attr_heads.iter().map(z).collect(),
        }
    }

    fn dense(&self) -> impl Iterator<Item = &Dense> {
        self.hidden
            .iter()
            .chain(std::iter::once(&self.id_head))
            .chain(&self.attr_heads)
    }

    fn dense_mut(&mut self) -> impl Iterator<Item = &mut Dense> {
        self.hidden
            .iter_mut()
            .chain(std::iter::once(&mut self.id_head))
            .chain(&mut self.attr_heads)
    }

    /// Weight and bias slices in declaration order.
    pub fn tensors(&self) -> Vec<&[f64]> {
        self.dense()
            .flat_map(|d| [d.weight.as_slice(), d.bias.as_slice()])
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.dense_mut()
            .flat_map(|d| [d.weight.as_mut_slice(), d.bias.as_mut_slice()])
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.dense()
            .flat_map(|d| d.weight.iter().chain(&d.bias))
            .copied()
    }

    /// `self += scale * other`, element-wise.
    pub fn add_scaled(&mut self, other: &Layers, scale: f64) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += scale * y;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|x| *x *= s);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(f64::is_finite)
    }

    pub fn same_shape(&self, other: &Layers) -> bool {
        let a = self.tensors();
        let b = other.tensors();
        a.len() == b.len() && a.iter().zip(&b).all(|(x, y)| x.len() == y.len())
    }
}
