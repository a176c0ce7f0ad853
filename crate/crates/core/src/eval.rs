//! Entity-level exact-match scoring in the style of the CoNLL `conlleval`
//! script, plus a document-level percentile bootstrap for comparing two
//! systems.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::BufRead;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conll::{read_columns, ColumnDocument};
use crate::error::{Error, Result};
use crate::tagscheme::{decode, decode_lenient, filter_invalid, Entity, TagSet};

pub const MIN_RESAMPLES: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Counts {
    pub correct: usize,
    pub predicted: usize,
    pub gold: usize,
}

impl Counts {
    fn add(&mut self, other: Counts) {
        self.correct += other.correct;
        self.predicted += other.predicted;
        self.gold += other.gold;
    }

    /// Zero when nothing was predicted.
    pub fn precision(&self) -> f64 {
        ratio(self.correct, self.predicted)
    }

    /// Zero when there is no gold entity.
    pub fn recall(&self) -> f64 {
        ratio(self.correct, self.gold)
    }

    pub fn f1(&self) -> f64 {
        f1(self.precision(), self.recall())
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Gold entities of this class.
    pub support: usize,
    pub counts: Counts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub per_class: BTreeMap<String, ClassScores>,
    pub counts: Counts,
    /// Token-level totals, present when scoring tag files.
    pub tokens: Option<(usize, usize)>,
}

impl EvalResult {
    fn from_counts(counts: Counts, per_class: BTreeMap<String, Counts>, tokens: Option<(usize, usize)>) -> Self {
        let per_class = per_class
            .into_iter()
            .map(|(class, c)| {
                (
                    class,
                    ClassScores {
                        precision: c.precision(),
                        recall: c.recall(),
                        f1: c.f1(),
                        support: c.gold,
                        counts: c,
                    },
                )
            })
            .collect();
        EvalResult {
            precision: counts.precision(),
            recall: counts.recall(),
            f1: counts.f1(),
            per_class,
            counts,
            tokens,
        }
    }

    /// Report in the layout printed by `conlleval`.
    pub fn conlleval_report(&self, per_class: bool) -> String {
        let c = self.counts;
        let (tokens, correct_tags) = self.tokens.unwrap_or((0, 0));
        let mut out = String::new();
        let _ = writeln!(
            out,
            "processed {tokens} tokens with {} phrases; found: {} phrases; correct: {}.",
            c.gold, c.predicted, c.correct
        );
        if tokens > 0 || self.tokens.is_none() {
            let (p, r, f) = percentages(c);
            let acc = if tokens > 0 { 100.0 * correct_tags as f64 / tokens as f64 } else { 0.0 };
            let _ = writeln!(out, "accuracy: {acc:6.2}%; precision: {p:6.2}%; recall: {r:6.2}%; FB1: {f:6.2}");
        }
        if per_class {
            for (class, s) in &self.per_class {
                let (p, r, f) = percentages(s.counts);
                let _ = writeln!(
                    out,
                    "{class:>17}: precision: {p:6.2}%; recall: {r:6.2}%; FB1: {f:6.2}  {}",
                    s.counts.predicted
                );
            }
        }
        out
    }
}

/// Percent values computed in the order the reference script uses.
fn percentages(c: Counts) -> (f64, f64, f64) {
    let p = if c.predicted > 0 { 100.0 * c.correct as f64 / c.predicted as f64 } else { 0.0 };
    let r = if c.gold > 0 { 100.0 * c.correct as f64 / c.gold as f64 } else { 0.0 };
    let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
    (p, r, f)
}

fn document_counts(gold: &[Entity], pred: &[Entity], per_class: &mut BTreeMap<String, Counts>) -> Counts {
    let gold_set: BTreeSet<&Entity> = gold.iter().collect();
    let pred_set: BTreeSet<&Entity> = pred.iter().collect();
    let mut total = Counts::default();
    for e in &gold_set {
        per_class.entry(e.class.clone()).or_default().gold += 1;
        total.gold += 1;
    }
    for e in &pred_set {
        let entry = per_class.entry(e.class.clone()).or_default();
        entry.predicted += 1;
        total.predicted += 1;
        if gold_set.contains(e) {
            entry.correct += 1;
            total.correct += 1;
        }
    }
    total
}

/// Micro-averaged exact-match scores over aligned documents.
pub fn evaluate(gold: &[Vec<Entity>], pred: &[Vec<Entity>]) -> Result<EvalResult> {
    if gold.len() != pred.len() {
        return Err(Error::Data(format!(
            "gold has {} documents, predictions have {}",
            gold.len(),
            pred.len()
        )));
    }
    let mut per_class = BTreeMap::new();
    let mut total = Counts::default();
    for (g, p) in gold.iter().zip(pred) {
        total.add(document_counts(g, p, &mut per_class));
    }
    Ok(EvalResult::from_counts(total, per_class, None))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScoreOptions {
    /// Repair invalid IOB2 transitions in the prediction column before
    /// extracting entities. When off, chunks are read exactly as the
    /// reference script reads them.
    pub filter_pred: bool,
}

impl Default for ScoreOptions {
    fn default() -> Self {
        ScoreOptions { filter_pred: true }
    }
}

/// Gold and predicted entities for each document of a scored tag file.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredFile {
    pub gold: Vec<Vec<Entity>>,
    pub pred: Vec<Vec<Entity>>,
    pub result: EvalResult,
}

fn split_tag(tag: &str, line: usize) -> Result<Option<(char, &str)>> {
    if tag == "O" {
        return Ok(None);
    }
    match tag.split_once('-') {
        Some(("B", class)) if !class.is_empty() => Ok(Some(('B', class))),
        Some(("I", class)) if !class.is_empty() => Ok(Some(('I', class))),
        _ => Err(Error::parse(line, format!("tag {tag:?} is not O, B-<class> or I-<class>"))),
    }
}

/// Scores documents whose last two columns are the gold and predicted tags.
pub fn score_documents(docs: &[ColumnDocument], opts: ScoreOptions) -> Result<ScoredFile> {
    let mut classes = BTreeSet::new();
    for doc in docs {
        for (row, &line) in doc.rows.iter().zip(&doc.lines) {
            if row.len() < 2 {
                return Err(Error::parse(line, "need at least gold and predicted tag columns"));
            }
            for tag in &row[row.len() - 2..] {
                if let Some((_, class)) = split_tag(tag, line)? {
                    classes.insert(class.to_string());
                }
            }
        }
    }
    let ts = TagSet::new(classes.iter().cloned()).map_err(|e| Error::Data(e.to_string()))?;

    let mut gold_all = Vec::with_capacity(docs.len());
    let mut pred_all = Vec::with_capacity(docs.len());
    let mut tokens = 0;
    let mut correct_tags = 0;
    for doc in docs {
        let gold = ts.parse_sequence(&doc.last_column(1))?;
        let mut pred = ts.parse_sequence(&doc.last_column(0))?;
        if opts.filter_pred {
            pred = filter_invalid(&pred, &ts);
        }
        tokens += gold.len();
        correct_tags += gold.iter().zip(&pred).filter(|(g, p)| g == p).count();
        gold_all.push(decode_lenient(&gold, &ts));
        pred_all.push(if opts.filter_pred {
            decode(&pred, &ts)?
        } else {
            decode_lenient(&pred, &ts)
        });
    }
    let mut result = evaluate(&gold_all, &pred_all)?;
    result.tokens = Some((tokens, correct_tags));
    Ok(ScoredFile {
        gold: gold_all,
        pred: pred_all,
        result,
    })
}

/// Reads a `token<TAB>gold<TAB>pred` file (extra leading columns allowed,
/// consistent per file) and scores it.
pub fn evaluate_conll(reader: impl BufRead, opts: ScoreOptions) -> Result<ScoredFile> {
    let docs = read_columns(reader, None)?;
    let width = docs.first().and_then(|d| d.rows.first()).map(Vec::len);
    for doc in &docs {
        for (row, &line) in doc.rows.iter().zip(&doc.lines) {
            if Some(row.len()) != width {
                return Err(Error::parse(
                    line,
                    format!("expected {} columns, found {}", width.unwrap_or(0), row.len()),
                ));
            }
        }
    }
    score_documents(&docs, opts)
}

pub fn evaluate_conll_file(path: impl AsRef<std::path::Path>, opts: ScoreOptions) -> Result<ScoredFile> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    evaluate_conll(std::io::BufReader::new(file), opts)
}

/// Joins separate gold and prediction files (`token<TAB>tag` each) into
/// three-column documents, checking that tokens line up.
pub fn join_gold_pred(gold: &[ColumnDocument], pred: &[ColumnDocument]) -> Result<Vec<ColumnDocument>> {
    if gold.len() != pred.len() {
        return Err(Error::Data(format!(
            "gold has {} documents, predictions have {}",
            gold.len(),
            pred.len()
        )));
    }
    let mut out = Vec::with_capacity(gold.len());
    for (d, (g, p)) in gold.iter().zip(pred).enumerate() {
        if g.len() != p.len() {
            return Err(Error::Data(format!(
                "document {d}: gold has {} tokens, predictions have {}",
                g.len(),
                p.len()
            )));
        }
        let mut doc = ColumnDocument::default();
        for ((gr, pr), &line) in g.rows.iter().zip(&p.rows).zip(&p.lines) {
            if gr[0] != pr[0] {
                return Err(Error::parse(
                    line,
                    format!("token {:?} does not match gold token {:?}", pr[0], gr[0]),
                ));
            }
            doc.rows.push(vec![
                gr[0].clone(),
                gr[gr.len() - 1].clone(),
                pr[pr.len() - 1].clone(),
            ]);
            doc.lines.push(line);
        }
        out.push(doc);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapReport {
    /// F1(A) - F1(B) on the full document set.
    pub f1_delta: f64,
    /// 2.5th and 97.5th percentiles of the resampled differences.
    pub ci_low: f64,
    pub ci_high: f64,
    pub resamples: usize,
    pub seed: u64,
    pub f1_a: f64,
    pub f1_b: f64,
    /// Resampling unit.
    pub unit: String,
    /// Per-resample differences in resample order.
    #[serde(skip)]
    pub samples: Vec<f64>,
}

impl BootstrapReport {
    /// Whether the interval excludes zero.
    pub fn significant(&self) -> bool {
        self.ci_low > 0.0 || self.ci_high < 0.0
    }
}

/// Document indices drawn for resample `r`. Each resample has its own
/// ChaCha stream, so results do not depend on evaluation order.
pub fn resample_indices(n_docs: usize, seed: u64, r: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(r as u64);
    (0..n_docs).map(|_| rng.random_range(0..n_docs)).collect()
}

/// Linear-interpolation percentile of sorted data, `q` in `[0, 1]`.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

pub fn bootstrap_compare(
    gold: &[Vec<Entity>],
    pred_a: &[Vec<Entity>],
    pred_b: &[Vec<Entity>],
    resamples: usize,
    seed: u64,
) -> Result<BootstrapReport> {
    let n = gold.len();
    if n < 2 {
        return Err(Error::Data(format!("bootstrap needs at least 2 documents, got {n}")));
    }
    if pred_a.len() != n || pred_b.len() != n {
        return Err(Error::Data("bootstrap inputs have different document counts".into()));
    }
    if resamples < MIN_RESAMPLES {
        return Err(Error::Config(format!(
            "bootstrap needs at least {MIN_RESAMPLES} resamples, got {resamples}"
        )));
    }
    let mut scratch = BTreeMap::new();
    let per_doc: Vec<(Counts, Counts)> = (0..n)
        .map(|d| {
            (
                document_counts(&gold[d], &pred_a[d], &mut scratch),
                document_counts(&gold[d], &pred_b[d], &mut scratch),
            )
        })
        .collect();
    let total = |idx: &mut dyn Iterator<Item = usize>| {
        let (mut a, mut b) = (Counts::default(), Counts::default());
        for d in idx {
            a.add(per_doc[d].0);
            b.add(per_doc[d].1);
        }
        (a.f1(), b.f1())
    };
    let (f1_a, f1_b) = total(&mut (0..n));

    let samples: Vec<f64> = (0..resamples)
        .into_par_iter()
        .map(|r| {
            let idx = resample_indices(n, seed, r);
            let (a, b) = total(&mut idx.into_iter());
            a - b
        })
        .collect();
    let mut sorted = samples.clone();
    sorted.sort_by(f64::total_cmp);
    Ok(BootstrapReport {
        f1_delta: f1_a - f1_b,
        ci_low: percentile(&sorted, 0.025),
        ci_high: percentile(&sorted, 0.975),
        resamples,
        seed,
        f1_a,
        f1_b,
        unit: "document".to_string(),
        samples,
    })
}
