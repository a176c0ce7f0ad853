use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::matrix::Matrix;
use crate::vocab::TokenId;

/// Embedding lookup followed by a linear projection to tag scores. Stands in
/// for a pretrained transformer encoder plus its token classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainableEncoder {
    /// vocab × dim
    pub embeddings: Matrix,
    /// dim × tags
    pub projection: Matrix,
    pub bias: Vec<f64>,
}

/// Gradients for one batch. Embedding rows are kept sparse.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EncoderGrads {
    pub embeddings: BTreeMap<TokenId, Vec<f64>>,
    pub projection: Option<Matrix>,
    pub bias: Vec<f64>,
}

impl TrainableEncoder {
    pub fn init(vocab_size: usize, dim: usize, num_tags: usize, rng: &mut impl Rng) -> Self {
        let normal = Normal::new(0.0, 0.1).expect("valid std");
        let embeddings = Matrix::from_vec(
            vocab_size,
            dim,
            (0..vocab_size * dim).map(|_| normal.sample(rng)).collect(),
        )
        .expect("sized");
        let bound = 1.0 / (dim as f64).sqrt();
        let uniform = Uniform::new_inclusive(-bound, bound).expect("valid bounds");
        let projection = Matrix::from_vec(dim, num_tags, (0..dim * num_tags).map(|_| uniform.sample(rng)).collect())
            .expect("sized");
        TrainableEncoder {
            embeddings,
            projection,
            bias: vec![0.0; num_tags],
        }
    }

    pub fn dim(&self) -> usize {
        self.embeddings.cols()
    }

    pub fn num_tags(&self) -> usize {
        self.projection.cols()
    }

    pub fn vocab_size(&self) -> usize {
        self.embeddings.rows()
    }

    /// Tag scores for a sequence of token ids, one row per id.
    pub fn forward(&self, ids: &[TokenId]) -> Matrix {
        let k = self.num_tags();
        let mut out = Matrix::zeros(ids.len(), k);
        for (i, &id) in ids.iter().enumerate() {
            let h = self.embeddings.row(id as usize);
            let row = out.row_mut(i);
            row.copy_from_slice(&self.bias);
            for (d, &hd) in h.iter().enumerate() {
                if hd == 0.0 {
                    continue;
                }
                for (r, w) in row.iter_mut().zip(self.projection.row(d)) {
                    *r += hd * w;
                }
            }
        }
        out
    }

    /// Accumulates parameter gradients given the loss gradient with respect
    /// to the emission scores produced by [`forward`](Self::forward).
    pub fn backward(&self, ids: &[TokenId], d_scores: &Matrix, grads: &mut EncoderGrads) {
        let (dim, k) = (self.dim(), self.num_tags());
        let proj = grads.projection.get_or_insert_with(|| Matrix::zeros(dim, k));
        if grads.bias.is_empty() {
            grads.bias = vec![0.0; k];
        }
        for (i, &id) in ids.iter().enumerate() {
            let g = d_scores.row(i);
            for (b, gj) in grads.bias.iter_mut().zip(g) {
                *b += gj;
            }
            let h = self.embeddings.row(id as usize);
            let d_h = grads.embeddings.entry(id).or_insert_with(|| vec![0.0; dim]);
            for d in 0..dim {
                let w = self.projection.row(d);
                let mut acc = 0.0;
                for j in 0..k {
                    proj[(d, j)] += h[d] * g[j];
                    acc += w[j] * g[j];
                }
                d_h[d] += acc;
            }
        }
    }
}
