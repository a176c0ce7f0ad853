use std::ops::Range;

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{emissions_for_span, lr_schedule, DocumentInput, EmissionModel, EncoderGrads, TaggerModel};
use super::{TrainConfig, TrainingDocument, SHUFFLE_STREAM};
use crate::crf::log_likelihood;
use crate::error::{Error, Result};
use crate::eval::evaluate;
use crate::matrix::{log_sum_exp, Matrix};
use crate::tagscheme::decode_lenient;
use crate::vocab::TokenId;
use crate::windowing::{plan_spans, Span};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean loss of every batch, in update order.
    pub step_losses: Vec<f64>,
    /// Mean batch loss per epoch.
    pub epoch_losses: Vec<f64>,
    /// Entity-level micro F1 on the development documents after each epoch;
    /// empty without a development set.
    pub dev_f1: Vec<f64>,
    pub examples: usize,
    pub total_steps: usize,
}

struct Example {
    doc: usize,
    span: Span,
    words: Range<usize>,
}

#[derive(Default)]
struct Momentum {
    embeddings: Option<Matrix>,
    projection: Option<Matrix>,
    bias: Vec<f64>,
    transitions: Option<Matrix>,
}

pub(crate) fn check_document(model: &TaggerModel, doc: &TrainingDocument) -> Result<()> {
    let n = doc.input.tokens.num_words();
    if doc.gold.len() != n {
        return Err(Error::Misaligned {
            doc: doc.input.id.clone(),
            reason: format!("{} gold tags for {n} pre-tokens", doc.gold.len()),
        });
    }
    if let Some(&bad) = doc.gold.iter().find(|&&t| t >= model.tagset.len()) {
        return Err(Error::Misaligned {
            doc: doc.input.id.clone(),
            reason: format!("gold tag index {bad} outside the tag set"),
        });
    }
    model.check_input(&doc.input)
}

fn build_examples(model: &TaggerModel, data: &[TrainingDocument]) -> Result<Vec<Example>> {
    let mut out = Vec::new();
    for (d, doc) in data.iter().enumerate() {
        check_document(model, doc)?;
        for span in plan_spans(doc.input.tokens.num_sub_tokens(), &model.span) {
            let words = doc.input.tokens.words_in(span.start, span.end);
            if !words.is_empty() {
                out.push(Example { doc: d, span, words });
            }
        }
    }
    Ok(out)
}

fn span_ids(doc: &DocumentInput, span: &Span) -> Vec<TokenId> {
    doc.tokens.sub_tokens[span.start..span.end]
        .iter()
        .filter(|s| s.is_first)
        .map(|s| s.id)
        .collect()
}

/// Trains in place. See [`train_with_dev`].
pub fn train(model: &mut TaggerModel, data: &[TrainingDocument], cfg: &TrainConfig) -> Result<TrainReport> {
    train_with_dev(model, data, &[], cfg)
}

/// Every window of every document is one example. Examples are shuffled each
/// epoch by a generator seeded from `cfg.seed`; the last batch of an epoch may
/// be short. CRF batches minimise the mean negative log-likelihood; softmax
/// batches minimise cross entropy averaged with `O` positions weighted by
/// `cfg.o_tag_loss_weight`.
pub fn train_with_dev(
    model: &mut TaggerModel,
    data: &[TrainingDocument],
    dev: &[TrainingDocument],
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    model.check()?;
    if model.head() != cfg.head {
        return Err(Error::Config(format!(
            "config asks for a {:?} head but the model has {:?}",
            cfg.head,
            model.head()
        )));
    }
    if matches!(model.emission, EmissionModel::External) && model.transitions.is_none() {
        return Err(Error::Config("external emissions with a softmax head leave nothing to train".into()));
    }
    if data.is_empty() {
        return Err(Error::Data("training set is empty".into()));
    }
    for doc in dev {
        check_document(model, doc)?;
    }
    let examples = build_examples(model, data)?;
    if examples.is_empty() {
        return Err(Error::Data("training documents contain no tokens".into()));
    }
    let batches_per_epoch = examples.len().div_ceil(cfg.batch_size);
    let total_steps = cfg.epochs * batches_per_epoch;
    info!(
        "training on {} examples from {} documents, {} steps",
        examples.len(),
        data.len(),
        total_steps
    );

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(SHUFFLE_STREAM);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut momentum = Momentum::default();
    let mut report = TrainReport {
        step_losses: Vec::with_capacity(total_steps),
        epoch_losses: Vec::with_capacity(cfg.epochs),
        dev_f1: Vec::new(),
        examples: examples.len(),
        total_steps,
    };
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let batch: Vec<&Example> = batch.iter().map(|&i| &examples[i]).collect();
            let loss = train_step(model, data, &batch, cfg, step, total_steps, &mut momentum)?;
            report.step_losses.push(loss);
            epoch_loss += loss;
            step += 1;
        }
        epoch_loss /= batches_per_epoch as f64;
        report.epoch_losses.push(epoch_loss);
        if dev.is_empty() {
            debug!("epoch {}: loss {epoch_loss:.6}", epoch + 1);
        } else {
            let f1 = dev_f1(model, dev)?;
            report.dev_f1.push(f1);
            info!("epoch {}: loss {epoch_loss:.6}, dev F1 {:.4}", epoch + 1, f1);
        }
    }
    Ok(report)
}

fn dev_f1(model: &TaggerModel, dev: &[TrainingDocument]) -> Result<f64> {
    let inputs: Vec<DocumentInput> = dev.iter().map(|d| d.input.clone()).collect();
    let preds = model.predict_all(&inputs)?;
    let gold: Vec<_> = dev.iter().map(|d| decode_lenient(&d.gold, &model.tagset)).collect();
    let pred: Vec<_> = preds.into_iter().map(|p| p.entities).collect();
    Ok(evaluate(&gold, &pred)?.f1)
}

/// Weighted softmax cross entropy over the rows of `scores`. Returns the
/// weighted loss sum, the weight sum, and the unnormalised score gradient.
pub(crate) fn weighted_cross_entropy(
    scores: &Matrix,
    gold: &[usize],
    outside: usize,
    o_weight: f64,
) -> (f64, f64, Matrix) {
    let mut grad = Matrix::zeros(scores.rows(), scores.cols());
    let (mut loss, mut weight) = (0.0, 0.0);
    for (i, &y) in gold.iter().enumerate() {
        let row = scores.row(i);
        let lse = log_sum_exp(row.iter().copied());
        let w = if y == outside { o_weight } else { 1.0 };
        loss += w * (lse - row[y]);
        weight += w;
        for (j, g) in grad.row_mut(i).iter_mut().enumerate() {
            *g = w * ((row[j] - lse).exp() - if j == y { 1.0 } else { 0.0 });
        }
    }
    (loss, weight, grad)
}

fn train_step(
    model: &mut TaggerModel,
    data: &[TrainingDocument],
    batch: &[&Example],
    cfg: &TrainConfig,
    step: usize,
    total_steps: usize,
    momentum: &mut Momentum,
) -> Result<f64> {
    let k = model.tagset.len();
    let outside = model.tagset.outside();
    let mut enc_grads = EncoderGrads::default();
    let mut trans_grad = model.transitions.as_ref().map(|_| Matrix::zeros(k + 2, k + 2));
    let mut loss = 0.0;
    let mut norm = 0.0;

    for ex in batch {
        let doc = &data[ex.doc];
        let emissions = emissions_for_span(model, &doc.input, &ex.span)?;
        let gold = &doc.gold[ex.words.clone()];
        let d_emissions = match &model.transitions {
            Some(a) => {
                let (ll, g) = log_likelihood(a, &emissions, gold)?;
                loss -= ll;
                norm += 1.0;
                trans_grad.as_mut().expect("crf head").add_scaled(&g.transitions, -1.0);
                let mut d = g.emissions;
                d.map_inplace(|v| -v);
                d
            }
            None => {
                let (l, w, d) = weighted_cross_entropy(&emissions, gold, outside, cfg.o_tag_loss_weight);
                loss += l;
                norm += w;
                d
            }
        };
        if let EmissionModel::Trainable(enc) = &model.emission {
            enc.backward(&span_ids(&doc.input, &ex.span), &d_emissions, &mut enc_grads);
        }
    }
    if norm == 0.0 {
        return Ok(0.0);
    }
    let scale = 1.0 / norm;
    let lr_enc = lr_schedule(step, total_steps, cfg.lr_encoder, cfg.warmup_fraction);
    let lr_head = lr_schedule(step, total_steps, cfg.lr_head, cfg.warmup_fraction);
    let mu = cfg.momentum;

    if let (Some(a), Some(g)) = (model.transitions.as_mut(), trans_grad.as_mut()) {
        g.map_inplace(|v| v * scale);
        descend(a.matrix_mut(), g, &mut momentum.transitions, lr_head, mu);
    }
    if let EmissionModel::Trainable(enc) = &mut model.emission {
        let decay = |lr: f64| 1.0 - lr * cfg.weight_decay;
        enc.embeddings.map_inplace(|v| v * decay(lr_enc));
        enc.projection.map_inplace(|v| v * decay(lr_head));
        if let Some(mut g) = enc_grads.projection.take() {
            g.map_inplace(|v| v * scale);
            descend(&mut enc.projection, &g, &mut momentum.projection, lr_head, mu);
        }
        if mu > 0.0 {
            let dim = enc.dim();
            let vel = momentum
                .embeddings
                .get_or_insert_with(|| Matrix::zeros(enc.vocab_size(), dim));
            vel.map_inplace(|v| v * mu);
            for (&id, g) in &enc_grads.embeddings {
                for (v, gd) in vel.row_mut(id as usize).iter_mut().zip(g) {
                    *v += gd * scale;
                }
            }
            enc.embeddings.add_scaled(vel, -lr_enc);
        } else {
            for (&id, g) in &enc_grads.embeddings {
                for (p, gd) in enc.embeddings.row_mut(id as usize).iter_mut().zip(g) {
                    *p -= lr_enc * gd * scale;
                }
            }
        }
        if !enc_grads.bias.is_empty() {
            if momentum.bias.is_empty() {
                momentum.bias = vec![0.0; enc.bias.len()];
            }
            for ((b, v), g) in enc.bias.iter_mut().zip(momentum.bias.iter_mut()).zip(&enc_grads.bias) {
                *v = mu * *v + g * scale;
                *b -= lr_head * *v;
            }
        }
    }
    Ok(loss * scale)
}

fn descend(param: &mut Matrix, grad: &Matrix, velocity: &mut Option<Matrix>, lr: f64, mu: f64) {
    if mu > 0.0 {
        let v = velocity.get_or_insert_with(|| Matrix::zeros(grad.rows(), grad.cols()));
        v.map_inplace(|x| x * mu);
        v.add_scaled(grad, 1.0);
        param.add_scaled(v, -lr);
    } else {
        param.add_scaled(grad, -lr);
    }
}
