//! Exhaustive enumeration over all `K^n` tag paths. Test-only in spirit:
//! every quantity is recomputed from the raw matrices without touching the
//! dynamic programs in the parent module.

use super::{TagPath, TransitionMatrix};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const MAX_PATHS: u128 = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct Enumeration {
    pub log_partition: f64,
    /// Lexicographically first path among those with the maximal score.
    pub best_path: TagPath,
    pub best_score: f64,
    pub paths: usize,
}

fn direct_score(a: &TransitionMatrix, p: &Matrix, y: &[usize]) -> f64 {
    let k = p.cols();
    let mut prev = k; // start state
    let mut total = 0.0;
    for (i, &t) in y.iter().enumerate() {
        total += a.matrix()[(prev, t)];
        total += p[(i, t)];
        prev = t;
    }
    total + a.matrix()[(prev, k + 1)]
}

/// Visits every path in lexicographic order (position 0 most significant).
pub fn for_each_path(n: usize, k: usize, mut f: impl FnMut(&[usize])) {
    let mut y = vec![0usize; n];
    loop {
        f(&y);
        let mut pos = n;
        loop {
            if pos == 0 {
                return;
            }
            pos -= 1;
            y[pos] += 1;
            if y[pos] < k {
                break;
            }
            y[pos] = 0;
        }
    }
}

pub fn brute_force(a: &TransitionMatrix, p: &Matrix) -> Result<Enumeration> {
    let (n, k) = (p.rows(), p.cols());
    if n == 0 || k != a.num_tags() {
        return Err(Error::shape(format!(
            "oracle needs n >= 1 and matching tag counts, got n={n}, K={k}, transitions for {}",
            a.num_tags()
        )));
    }
    let count = (k as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
    if count > MAX_PATHS {
        return Err(Error::TooLarge {
            what: "number of tag paths",
            len: count,
            limit: MAX_PATHS,
        });
    }

    let mut scores = Vec::with_capacity(count as usize);
    let mut best_score = f64::NEG_INFINITY;
    let mut best_path = vec![0; n];
    for_each_path(n, k, |y| {
        let s = direct_score(a, p, y);
        if s > best_score {
            best_score = s;
            best_path.copy_from_slice(y);
        }
        scores.push(s);
    });
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_partition = max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
    Ok(Enumeration {
        log_partition,
        best_path,
        best_score,
        paths: scores.len(),
    })
}

/// Scores of every path, in enumeration order.
pub fn all_scores(a: &TransitionMatrix, p: &Matrix) -> Vec<(TagPath, f64)> {
    let mut out = Vec::new();
    for_each_path(p.rows(), p.cols(), |y| out.push((y.to_vec(), direct_score(a, p, y))));
    out
}
