//! Overlapping fixed-stride windows over a sub-token sequence, and the
//! max-context rule that picks, for each position, the window in which it
//! sits closest to the centre.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpanConfig {
    /// Maximum span length in content sub-tokens (framing tokens excluded).
    pub max_len: usize,
    pub stride: usize,
}

impl SpanConfig {
    pub fn new(max_len: usize, stride: usize) -> Result<Self> {
        let cfg = SpanConfig { max_len, stride };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.stride == 0 || self.stride > self.max_len {
            return Err(Error::Config(format!(
                "span config needs 0 < stride <= max_len, got max_len={} stride={}",
                self.max_len, self.stride
            )));
        }
        Ok(())
    }

    /// Upper bound on how many spans cover any single position.
    pub fn max_overlap(&self) -> usize {
        self.max_len.div_ceil(self.stride)
    }
}

impl Default for SpanConfig {
    fn default() -> Self {
        SpanConfig {
            max_len: 512,
            stride: 128,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    /// Positions whose final prediction comes from this span; empty until
    /// [`assign_max_context`] runs.
    pub max_context: Range<usize>,
}

impl Span {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }

    pub fn range(&self) -> Range<usize> {
        self.start..self.end
    }

    /// Context available to position `i` inside this span: the smaller of
    /// its left and right neighbour counts.
    pub fn context_score(&self, i: usize) -> usize {
        debug_assert!(self.start <= i && i < self.end);
        (i - self.start).min(self.end - 1 - i)
    }
}

/// Windows starting at 0, D, 2D, ... each of length `min(S, doc_len - start)`;
/// generation stops at the first window that reaches the document end.
pub fn split_spans(doc_len: usize, cfg: &SpanConfig) -> Vec<Span> {
    debug_assert!(cfg.validate().is_ok());
    let mut spans = Vec::new();
    let mut start = 0;
    while start < doc_len {
        let end = (start + cfg.max_len).min(doc_len);
        spans.push(Span {
            start,
            end,
            max_context: start..start,
        });
        if end == doc_len {
            break;
        }
        start += cfg.stride;
    }
    spans
}

/// Assigns each position to the covering span that maximises
/// `min(i - start, end - 1 - i)`, the earliest span winning ties, and stores
/// the resulting ranges on the spans.
pub fn assign_max_context(spans: &[Span], doc_len: usize) -> Result<Vec<Span>> {
    let mut owner = vec![usize::MAX; doc_len];
    let mut best = vec![0usize; doc_len];
    for (k, span) in spans.iter().enumerate() {
        if span.end > doc_len || span.start >= span.end {
            return Err(Error::shape(format!(
                "span [{}, {}) invalid for document of length {doc_len}",
                span.start, span.end
            )));
        }
        for i in span.range() {
            let score = span.context_score(i);
            if owner[i] == usize::MAX || score > best[i] {
                owner[i] = k;
                best[i] = score;
            }
        }
    }
    if let Some(i) = owner.iter().position(|&o| o == usize::MAX) {
        return Err(Error::shape(format!("position {i} not covered by any span")));
    }

    let mut out: Vec<Span> = spans.to_vec();
    let mut i = 0;
    for (k, span) in out.iter_mut().enumerate() {
        let begin = i;
        while i < doc_len && owner[i] == k {
            i += 1;
        }
        // an empty range sits at the boundary so ranges stay ordered
        span.max_context = begin..i;
    }
    if i != doc_len {
        return Err(Error::shape(format!(
            "max-context assignment is not contiguous at position {i}"
        )));
    }
    Ok(out)
}

/// Stitches per-span predictions into one sequence, each position taken
/// from its max-context span.
pub fn merge_predictions<T: Clone>(spans: &[Span], per_span: &[Vec<T>]) -> Result<Vec<T>> {
    if spans.len() != per_span.len() {
        return Err(Error::shape(format!(
            "{} spans but {} prediction sequences",
            spans.len(),
            per_span.len()
        )));
    }
    let mut out = Vec::new();
    for (k, (span, tags)) in spans.iter().zip(per_span).enumerate() {
        if tags.len() != span.len() {
            return Err(Error::shape(format!(
                "span {k} has length {} but {} predictions",
                span.len(),
                tags.len()
            )));
        }
        if span.max_context.start != out.len() {
            return Err(Error::shape(format!(
                "span {k} max-context starts at {} but {} positions are merged",
                span.max_context.start,
                out.len()
            )));
        }
        let lo = span.max_context.start - span.start;
        let hi = span.max_context.end - span.start;
        out.extend_from_slice(&tags[lo..hi]);
    }
    Ok(out)
}

/// Convenience: split then assign.
pub fn plan_spans(doc_len: usize, cfg: &SpanConfig) -> Vec<Span> {
    let spans = split_spans(doc_len, cfg);
    assign_max_context(&spans, doc_len).expect("spans from split_spans cover the document")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bounds(spans: &[Span]) -> Vec<(usize, usize)> {
        spans.iter().map(|s| (s.start, s.end)).collect()
    }

    fn ranges(spans: &[Span]) -> Vec<Range<usize>> {
        spans.iter().map(|s| s.max_context.clone()).collect()
    }

    fn cfg(s: usize, d: usize) -> SpanConfig {
        SpanConfig::new(s, d).unwrap()
    }

    /// Per-token argmax over all spans, written independently of the
    /// assignment loop above.
    fn oracle_owner(spans: &[(usize, usize)], i: usize) -> usize {
        let mut best: Option<(usize, usize)> = None;
        for (k, &(s, e)) in spans.iter().enumerate() {
            if s <= i && i < e {
                let score = std::cmp::min(i - s, e - 1 - i);
                if best.is_none_or(|(_, b)| score > b) {
                    best = Some((k, score));
                }
            }
        }
        best.unwrap().0
    }

    #[test]
    fn split_examples() {
        assert_eq!(bounds(&split_spans(10, &cfg(6, 3))), [(0, 6), (3, 9), (6, 10)]);
        assert_eq!(bounds(&split_spans(4, &cfg(6, 3))), [(0, 4)]);
        assert_eq!(bounds(&split_spans(512, &cfg(512, 128))), [(0, 512)]);
        assert!(split_spans(0, &cfg(6, 3)).is_empty());
    }

    #[test]
    fn config_validation() {
        assert!(SpanConfig::new(4, 0).is_err());
        assert!(SpanConfig::new(4, 5).is_err());
        assert_eq!(cfg(512, 128).max_overlap(), 4);
    }

    #[test]
    fn max_context_examples() {
        let spans = split_spans(10, &cfg(6, 3));
        let assigned = assign_max_context(&spans, 10).unwrap();
        assert_eq!(ranges(&assigned), [0..5, 5..8, 8..10]);
        let b = bounds(&spans);
        let owners: Vec<usize> = (0..10).map(|i| oracle_owner(&b, i)).collect();
        assert_eq!(owners, [0, 0, 0, 0, 0, 1, 1, 1, 2, 2]);

        let single = assign_max_context(&split_spans(7, &cfg(8, 2)), 7).unwrap();
        assert_eq!(ranges(&single), vec![0..7]);

        let two = vec![
            Span { start: 0, end: 4, max_context: 0..0 },
            Span { start: 2, end: 6, max_context: 0..0 },
        ];
        assert_eq!(ranges(&assign_max_context(&two, 6).unwrap()), [0..3, 3..6]);
    }

    #[test]
    fn merge_examples() {
        let spans = plan_spans(10, &cfg(6, 3));
        let per_span = vec![vec!['A'; 6], vec!['B'; 6], vec!['C'; 4]];
        let merged = merge_predictions(&spans, &per_span).unwrap();
        assert_eq!(merged.iter().collect::<String>(), "AAAAABBBCC");

        let one = plan_spans(3, &cfg(6, 3));
        assert_eq!(merge_predictions(&one, &[vec![1, 2, 3]]).unwrap(), [1, 2, 3]);

        let bad = vec![vec!['A'; 6], vec!['B'; 5], vec!['C'; 4]];
        assert!(merge_predictions(&spans, &bad).is_err());
        assert!(merge_predictions(&spans, &per_span[..2]).is_err());
    }

    #[test]
    fn stride_one_assignment() {
        let spans = plan_spans(8, &cfg(6, 1));
        assert_eq!(bounds(&spans), [(0, 6), (1, 7), (2, 8)]);
        assert_eq!(ranges(&spans), [0..4, 4..5, 5..8]);
    }
}
