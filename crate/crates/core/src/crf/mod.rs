//! Linear-chain CRF with explicit start and end states.
//!
//! For emissions `P` (n × K) and transitions `A` ((K+2) × (K+2), where row
//! and column `K` is the start state and `K+1` the end state), a tag path
//! `y` scores
//!
//! ```text
//! s(y) = A[start, y_1] + sum_{i<n} A[y_i, y_{i+1}] + A[y_n, end] + sum_i P[i, y_i]
//! ```
//!
//! Everything runs in log space; `n` reaches several hundred positions.

pub mod oracle;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{log_sum_exp, Matrix};

/// Additive penalty used for forbidden transitions. Finite so gradients and
/// sums stay finite.
pub const FORBIDDEN: f64 = -10_000.0;

pub type TagPath = Vec<usize>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionMatrix {
    num_tags: usize,
    scores: Matrix,
}

impl TransitionMatrix {
    /// All-zero (uniform) transitions over `num_tags` tags.
    pub fn zeros(num_tags: usize) -> Self {
        TransitionMatrix {
            num_tags,
            scores: Matrix::zeros(num_tags + 2, num_tags + 2),
        }
    }

    pub fn from_matrix(scores: Matrix) -> Result<Self> {
        if scores.rows() != scores.cols() || scores.rows() < 3 {
            return Err(Error::shape(format!(
                "transition matrix must be square with at least one tag, got {}x{}",
                scores.rows(),
                scores.cols()
            )));
        }
        if !scores.is_finite() {
            return Err(Error::shape("transition matrix has non-finite entries"));
        }
        Ok(TransitionMatrix {
            num_tags: scores.rows() - 2,
            scores,
        })
    }

    pub fn num_tags(&self) -> usize {
        self.num_tags
    }

    pub fn start(&self) -> usize {
        self.num_tags
    }

    pub fn end(&self) -> usize {
        self.num_tags + 1
    }

    pub fn matrix(&self) -> &Matrix {
        &self.scores
    }

    pub fn matrix_mut(&mut self) -> &mut Matrix {
        &mut self.scores
    }

    #[inline]
    pub fn get(&self, from: usize, to: usize) -> f64 {
        self.scores[(from, to)]
    }

    pub fn set(&mut self, from: usize, to: usize, value: f64) {
        self.scores[(from, to)] = value;
    }

    fn check(&self, emissions: &Matrix) -> Result<()> {
        if emissions.rows() == 0 {
            return Err(Error::shape("emission matrix has no rows"));
        }
        if emissions.cols() != self.num_tags {
            return Err(Error::shape(format!(
                "emissions have {} tag columns, transitions expect {}",
                emissions.cols(),
                self.num_tags
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    /// Same shape as the transition matrix.
    pub transitions: Matrix,
    /// Same shape as the emission matrix.
    pub emissions: Matrix,
}

fn check_path(a: &TransitionMatrix, p: &Matrix, y: &[usize]) -> Result<()> {
    a.check(p)?;
    if y.len() != p.rows() {
        return Err(Error::shape(format!(
            "tag path has length {}, emissions have {} rows",
            y.len(),
            p.rows()
        )));
    }
    if let Some(&bad) = y.iter().find(|&&t| t >= a.num_tags) {
        return Err(Error::shape(format!("tag index {bad} out of range")));
    }
    Ok(())
}

pub fn path_score(a: &TransitionMatrix, p: &Matrix, y: &[usize]) -> Result<f64> {
    check_path(a, p, y)?;
    let n = y.len();
    let mut score = a.get(a.start(), y[0]) + a.get(y[n - 1], a.end());
    for i in 0..n {
        score += p[(i, y[i])];
        if i + 1 < n {
            score += a.get(y[i], y[i + 1]);
        }
    }
    Ok(score)
}

/// Forward log-potentials: `alpha[i][j]` is the log-sum of scores of all
/// prefixes ending in tag `j` at position `i`, emissions included.
fn forward(a: &TransitionMatrix, p: &Matrix) -> Matrix {
    let (n, k) = (p.rows(), p.cols());
    let mut alpha = Matrix::zeros(n, k);
    for j in 0..k {
        alpha[(0, j)] = a.get(a.start(), j) + p[(0, j)];
    }
    for i in 1..n {
        for j in 0..k {
            let prev = alpha.row(i - 1);
            alpha[(i, j)] = log_sum_exp((0..k).map(|t| prev[t] + a.get(t, j))) + p[(i, j)];
        }
    }
    alpha
}

/// Backward log-potentials: `beta[i][j]` is the log-sum of scores of all
/// suffixes after tag `j` at position `i`, the end transition included.
fn backward(a: &TransitionMatrix, p: &Matrix) -> Matrix {
    let (n, k) = (p.rows(), p.cols());
    let mut beta = Matrix::zeros(n, k);
    for j in 0..k {
        beta[(n - 1, j)] = a.get(j, a.end());
    }
    for i in (0..n - 1).rev() {
        for j in 0..k {
            let next = beta.row(i + 1);
            beta[(i, j)] = log_sum_exp((0..k).map(|t| a.get(j, t) + p[(i + 1, t)] + next[t]));
        }
    }
    beta
}

fn partition_from_forward(a: &TransitionMatrix, alpha: &Matrix) -> f64 {
    let last = alpha.rows() - 1;
    log_sum_exp((0..alpha.cols()).map(|j| alpha[(last, j)] + a.get(j, a.end())))
}

/// `log sum_y exp(s(y))` by the forward recursion.
pub fn log_partition(a: &TransitionMatrix, p: &Matrix) -> Result<f64> {
    a.check(p)?;
    Ok(partition_from_forward(a, &forward(a, p)))
}

/// The same quantity computed by the backward recursion; used to cross-check
/// the forward pass.
pub fn log_partition_backward(a: &TransitionMatrix, p: &Matrix) -> Result<f64> {
    a.check(p)?;
    let beta = backward(a, p);
    Ok(log_sum_exp(
        (0..p.cols()).map(|j| a.get(a.start(), j) + p[(0, j)] + beta[(0, j)]),
    ))
}

/// Per-position tag posteriors, n × K.
pub fn marginals(a: &TransitionMatrix, p: &Matrix) -> Result<Matrix> {
    a.check(p)?;
    let alpha = forward(a, p);
    let beta = backward(a, p);
    let log_z = partition_from_forward(a, &alpha);
    let mut mu = Matrix::zeros(p.rows(), p.cols());
    for i in 0..p.rows() {
        for j in 0..p.cols() {
            mu[(i, j)] = (alpha[(i, j)] + beta[(i, j)] - log_z).exp();
        }
    }
    Ok(mu)
}

/// `log p(y | x) = s(y) - log Z` together with its gradient with respect to
/// every transition and emission entry (observed minus expected counts).
pub fn log_likelihood(a: &TransitionMatrix, p: &Matrix, y: &[usize]) -> Result<(f64, Gradients)> {
    let score = path_score(a, p, y)?;
    let (n, k) = (p.rows(), p.cols());
    let alpha = forward(a, p);
    let beta = backward(a, p);
    let log_z = partition_from_forward(a, &alpha);

    let mut d_a = Matrix::zeros(k + 2, k + 2);
    let mut d_p = Matrix::zeros(n, k);

    // observed counts
    d_a[(a.start(), y[0])] += 1.0;
    d_a[(y[n - 1], a.end())] += 1.0;
    for i in 0..n {
        d_p[(i, y[i])] += 1.0;
        if i + 1 < n {
            d_a[(y[i], y[i + 1])] += 1.0;
        }
    }

    // expected counts
    for i in 0..n {
        for j in 0..k {
            let mu = (alpha[(i, j)] + beta[(i, j)] - log_z).exp();
            d_p[(i, j)] -= mu;
            if i == 0 {
                d_a[(a.start(), j)] -= mu;
            }
            if i == n - 1 {
                d_a[(j, a.end())] -= mu;
            }
        }
    }
    for i in 0..n.saturating_sub(1) {
        for from in 0..k {
            let left = alpha[(i, from)] - log_z;
            for to in 0..k {
                let xi = (left + a.get(from, to) + p[(i + 1, to)] + beta[(i + 1, to)]).exp();
                d_a[(from, to)] -= xi;
            }
        }
    }

    Ok((
        score - log_z,
        Gradients {
            transitions: d_a,
            emissions: d_p,
        },
    ))
}

/// Highest-scoring path and its score. Ties go to the lowest tag index, both
/// for the final tag and for every back-pointer.
pub fn viterbi_decode(a: &TransitionMatrix, p: &Matrix) -> Result<(TagPath, f64)> {
    a.check(p)?;
    let (n, k) = (p.rows(), p.cols());
    let mut delta = Matrix::zeros(n, k);
    let mut back = vec![0usize; n * k];
    for j in 0..k {
        delta[(0, j)] = a.get(a.start(), j) + p[(0, j)];
    }
    for i in 1..n {
        for j in 0..k {
            let mut best = f64::NEG_INFINITY;
            let mut arg = 0;
            for t in 0..k {
                let s = delta[(i - 1, t)] + a.get(t, j);
                if s > best {
                    best = s;
                    arg = t;
                }
            }
            delta[(i, j)] = best + p[(i, j)];
            back[i * k + j] = arg;
        }
    }
    let mut best = f64::NEG_INFINITY;
    let mut last = 0;
    for j in 0..k {
        let s = delta[(n - 1, j)] + a.get(j, a.end());
        if s > best {
            best = s;
            last = j;
        }
    }
    let mut path = vec![0; n];
    path[n - 1] = last;
    for i in (1..n).rev() {
        path[i - 1] = back[i * k + path[i]];
    }
    Ok((path, best))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_instance(rng: &mut ChaCha8Rng, n: usize, k: usize, range: f64) -> (TransitionMatrix, Matrix) {
        let mut a = TransitionMatrix::zeros(k);
        for v in a.matrix_mut().as_mut_slice() {
            *v = rng.random_range(-range..range);
        }
        let p = Matrix::from_vec(n, k, (0..n * k).map(|_| rng.random_range(-range..range)).collect()).unwrap();
        (a, p)
    }

    #[test]
    fn single_position_single_tag() {
        let mut a = TransitionMatrix::zeros(1);
        a.set(a.start(), 0, 0.25);
        a.set(0, a.end(), -1.5);
        let p = Matrix::from_vec(1, 1, vec![2.0]).unwrap();
        assert_eq!(path_score(&a, &p, &[0]).unwrap(), 0.25 - 1.5 + 2.0);
        assert!((log_partition(&a, &p).unwrap() - 0.75).abs() < 1e-15);
    }

    #[test]
    fn zero_parameters_score_zero() {
        let a = TransitionMatrix::zeros(3);
        let p = Matrix::zeros(4, 3);
        for y in [[0, 0, 0, 0], [2, 1, 0, 2], [1, 1, 2, 0]] {
            assert_eq!(path_score(&a, &p, &y).unwrap(), 0.0);
        }
    }

    #[test]
    fn path_score_term_by_term() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (a, p) = random_instance(&mut rng, 4, 3, 2.0);
        let y = [2, 0, 0, 1];
        let s = a.start();
        let e = a.end();
        let expected = a.get(s, 2) + p[(0, 2)] + a.get(2, 0) + p[(1, 0)] + a.get(0, 0) + p[(2, 0)]
            + a.get(0, 1) + p[(3, 1)] + a.get(1, e);
        assert!((path_score(&a, &p, &y).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn single_tag_partition_is_path_score() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in 1..6 {
            let (a, p) = random_instance(&mut rng, n, 1, 3.0);
            let y = vec![0; n];
            let s = path_score(&a, &p, &y).unwrap();
            assert!((log_partition(&a, &p).unwrap() - s).abs() < 1e-12);
            let (ll, g) = log_likelihood(&a, &p, &y).unwrap();
            assert!(ll.abs() < 1e-12);
            assert!(g.transitions.as_slice().iter().all(|v| v.abs() < 1e-12));
            assert!(g.emissions.as_slice().iter().all(|v| v.abs() < 1e-12));
        }
    }

    #[test]
    fn two_path_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (a, p) = random_instance(&mut rng, 1, 2, 3.0);
        let s0 = a.get(a.start(), 0) + p[(0, 0)] + a.get(0, a.end());
        let s1 = a.get(a.start(), 1) + p[(0, 1)] + a.get(1, a.end());
        let closed = (s0.exp() + s1.exp()).ln();
        assert!((log_partition(&a, &p).unwrap() - closed).abs() < 1e-12);
    }

    #[test]
    fn forward_backward_agree_on_long_sequences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (a, p) = random_instance(&mut rng, 512, 21, 10.0);
        let f = log_partition(&a, &p).unwrap();
        let b = log_partition_backward(&a, &p).unwrap();
        assert!(f.is_finite());
        assert!(((f - b) / f).abs() < 1e-10, "{f} vs {b}");
    }

    #[test]
    fn marginals_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (a, p) = random_instance(&mut rng, 6, 4, 5.0);
        let mu = marginals(&a, &p).unwrap();
        for i in 0..6 {
            let s: f64 = mu.row(i).iter().sum();
            assert!((s - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn viterbi_decoupled_positions() {
        let a = TransitionMatrix::zeros(3);
        let p = Matrix::from_rows(&[vec![0.1, 0.9, 0.2], vec![1.0, 1.0, 0.0], vec![-1.0, -2.0, 3.0]]).unwrap();
        let (path, score) = viterbi_decode(&a, &p).unwrap();
        assert_eq!(path, [1, 0, 2]);
        assert!((score - 4.9).abs() < 1e-12);
    }

    #[test]
    fn viterbi_forced_start() {
        let mut a = TransitionMatrix::zeros(3);
        a.set(a.start(), 0, f64::NEG_INFINITY);
        a.set(a.start(), 1, f64::NEG_INFINITY);
        let p = Matrix::from_rows(&[vec![5.0, 5.0, 0.0], vec![0.0, 0.0, 0.0]]).unwrap();
        let (path, _) = viterbi_decode(&a, &p).unwrap();
        assert_eq!(path[0], 2);
    }

    #[test]
    fn shape_errors() {
        let a = TransitionMatrix::zeros(3);
        assert!(log_partition(&a, &Matrix::zeros(2, 4)).is_err());
        assert!(log_partition(&a, &Matrix::zeros(0, 3)).is_err());
        assert!(path_score(&a, &Matrix::zeros(2, 3), &[0]).is_err());
        assert!(path_score(&a, &Matrix::zeros(1, 3), &[3]).is_err());
        assert!(viterbi_decode(&a, &Matrix::zeros(2, 2)).is_err());
        assert!(TransitionMatrix::from_matrix(Matrix::zeros(3, 4)).is_err());
    }
}
