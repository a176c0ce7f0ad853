use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use seqtag_core::conll::{read_columns_file, ColumnDocument};
use seqtag_core::eval::{bootstrap_compare, join_gold_pred, score_documents, ScoreOptions};
use seqtag_core::harem::{export_conll, parse_harem, resolve_all, Scenario};
use seqtag_core::tagger::{train_with_dev, DocumentInput, ExternalEmissions, TaggerModel, TrainingDocument};
use seqtag_core::vocab::{
    convert_sentencepiece_vocab, default_punctuation_set, is_punctuation, pre_tokenize, wordpiece_tokenize_with,
    Normalization, TokenizerConfig,
};
use seqtag_core::windowing::plan_spans;
use seqtag_core::{TagSet, Vocabulary};

use crate::config::{derive_seed, PipelineConfig, CONFIG_ENV};
use crate::io::{io_error, read_bytes, read_text_documents, write_atomic, write_string};
use crate::{
    Cli, CliResult, Command, ConvertVocabArgs, EvaluateArgs, Failure, InputFormat, NormalizationArg, PredictArgs,
    PreprocessHaremArgs, SplitSpansArgs, TokenizeArgs, TrainArgs,
};

pub fn run(cli: Cli) -> CliResult {
    let config_path = cli
        .config
        .clone()
        .or_else(|| std::env::var_os(CONFIG_ENV).map(PathBuf::from));
    let mut cfg = match &config_path {
        Some(p) => {
            info!("config file {}", p.display());
            PipelineConfig::load(p)?
        }
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    match cli.command {
        Command::ConvertVocab(a) => convert_vocab(&cfg, a),
        Command::Tokenize(a) => tokenize(cfg, a),
        Command::SplitSpans(a) => split_spans(cfg, a),
        Command::PreprocessHarem(a) => preprocess_harem(&cfg, a),
        Command::Train(a) => train(cfg, a),
        Command::Predict(a) => predict(cfg, a),
        Command::Evaluate(a) => evaluate(cfg, a),
    }
}

fn log_run(cfg: &PipelineConfig) {
    info!("config sha256={} seed={}", cfg.hash(), cfg.seed);
}

fn required(value: Option<PathBuf>, what: &str) -> CliResult<PathBuf> {
    value.ok_or_else(|| Failure::Usage(format!("missing {what}: pass it as a flag or set it in the config file")))
}

/// Refuses to write over any input file.
fn ensure_distinct(output: &Path, inputs: &[&Path]) -> CliResult {
    let canon = |p: &Path| std::fs::canonicalize(p).ok();
    if let Some(out) = canon(output) {
        if inputs.iter().any(|i| canon(i).as_ref() == Some(&out)) {
            return Err(Failure::Usage(format!("output {} would overwrite an input", output.display())));
        }
    }
    Ok(())
}

fn convert_vocab(cfg: &PipelineConfig, a: ConvertVocabArgs) -> CliResult {
    log_run(cfg);
    let mut inputs = vec![a.input.as_path()];
    inputs.extend(a.punctuation_from.as_deref());
    ensure_distinct(&a.output, &inputs)?;
    let text = String::from_utf8(read_bytes(&a.input)?)
        .map_err(|_| Failure::Data(format!("{}: not UTF-8", a.input.display())))?;
    let pieces: Vec<&str> = text
        .lines()
        .map(|l| l.split('\t').next().unwrap_or(""))
        .filter(|p| !p.is_empty())
        .collect();
    let punctuation = match &a.punctuation_from {
        Some(p) => {
            let v = Vocabulary::load(p)?;
            v.tokens()
                .iter()
                .filter_map(|t| {
                    let mut cs = t.chars();
                    match (cs.next(), cs.next()) {
                        (Some(c), None) if is_punctuation(c) => Some(c),
                        _ => None,
                    }
                })
                .collect()
        }
        None => default_punctuation_set(),
    };
    let conv = convert_sentencepiece_vocab(&pieces, &punctuation);
    info!(
        "{} pieces -> {} tokens, {} rejected",
        pieces.len(),
        conv.vocab.len(),
        conv.rejected.len()
    );
    write_atomic(&a.output, |w| conv.vocab.write_to(w).map_err(io_error(&a.output)))?;
    if let Some(path) = &a.rejected {
        write_atomic(path, |w| {
            for (i, piece, reason) in &conv.rejected {
                writeln!(w, "{i}\t{piece}\t{reason}").map_err(io_error(path))?;
            }
            Ok(())
        })?;
    }
    Ok(())
}

fn tokenize(cfg: PipelineConfig, a: TokenizeArgs) -> CliResult {
    log_run(&cfg);
    let vocab_path = required(a.vocab.or(cfg.paths.vocab), "--vocab")?;
    ensure_distinct(&a.output, &[&a.input, &vocab_path])?;
    let vocab = Vocabulary::load(&vocab_path)?;
    let mut tcfg = TokenizerConfig {
        normalization: match a.normalize {
            NormalizationArg::None => Normalization::None,
            NormalizationArg::Nfc => Normalization::Nfc,
        },
        ..TokenizerConfig::default()
    };
    if let Some(m) = a.max_word_chars {
        tcfg.max_word_chars = m;
    }
    let docs = read_text_documents(&a.input)?;
    write_atomic(&a.output, |w| {
        for text in &docs {
            let tok = wordpiece_tokenize_with(&vocab, &pre_tokenize(text), &tcfg);
            for s in &tok.sub_tokens {
                let word = &tok.pre_tokens[s.word];
                let piece = vocab.token(s.id).expect("id from this vocabulary");
                writeln!(w, "{piece}\t{}\t{}\t{}\t{}", s.id, s.word, word.char_start, word.char_end)
                    .map_err(io_error(&a.output))?;
            }
            writeln!(w).map_err(io_error(&a.output))?;
        }
        Ok(())
    })
}

fn split_spans(mut cfg: PipelineConfig, a: SplitSpansArgs) -> CliResult {
    if let Some(s) = a.max_len {
        cfg.span.max_len = s;
    }
    if let Some(d) = a.stride {
        cfg.span.stride = d;
    }
    cfg.span.validate()?;
    log_run(&cfg);
    let lengths: Vec<usize> = match (&a.input, a.doc_len) {
        (Some(p), _) => {
            if let Some(out) = &a.output {
                ensure_distinct(out, &[p])?;
            }
            read_columns_file(p, Some(5))?.iter().map(ColumnDocument::len).collect()
        }
        (None, Some(n)) => vec![n],
        (None, None) => return Err(Failure::Usage("pass --input or --doc-len".into())),
    };
    let mut text = String::new();
    for (d, &len) in lengths.iter().enumerate() {
        for (i, sp) in plan_spans(len, &cfg.span).iter().enumerate() {
            text.push_str(&format!(
                "{d}\t{i}\t{}\t{}\t{}\t{}\n",
                sp.start, sp.end, sp.max_context.start, sp.max_context.end
            ));
        }
    }
    match &a.output {
        Some(p) => write_string(p, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn preprocess_harem(cfg: &PipelineConfig, a: PreprocessHaremArgs) -> CliResult {
    log_run(cfg);
    for out in [Some(&a.output), a.stats.as_ref(), a.report.as_ref()].into_iter().flatten() {
        ensure_distinct(out, &[&a.input])?;
    }
    let scenario = Scenario::new(a.scenario.into());
    let ts = scenario.tagset();
    let raw = parse_harem(&read_bytes(&a.input)?)?;
    let resolved = resolve_all(&raw, &scenario);
    let export = export_conll(&resolved, &ts)?;
    write_atomic(&a.output, |w| export.write_conll(w, &ts).map_err(io_error(&a.output)))?;
    let table = export.stats.table();
    eprint!("{table}");
    if let Some(p) = &a.stats {
        write_string(p, &format!("{table}\n{}", export.stats.key_values()))?;
    }
    if let Some(p) = &a.report {
        let mut text = export.warnings.join("\n");
        if !text.is_empty() {
            text.push('\n');
        }
        write_string(p, &text)?;
    }
    Ok(())
}

struct TaggedDoc {
    words: Vec<String>,
    tags: Vec<String>,
}

fn read_tagged(path: &Path) -> CliResult<Vec<TaggedDoc>> {
    read_columns_file(path, None)?
        .into_iter()
        .map(|d| {
            if let Some((row, line)) = d.rows.iter().zip(&d.lines).find(|(r, _)| r.len() < 2) {
                return Err(Failure::Data(format!(
                    "{}:{line}: expected a token and a tag, found {row:?}",
                    path.display()
                )));
            }
            Ok(TaggedDoc {
                words: d.rows.iter().map(|r| r[0].clone()).collect(),
                tags: d.rows.iter().map(|r| r[r.len() - 1].clone()).collect(),
            })
        })
        .collect()
}

fn infer_tagset(docs: &[TaggedDoc]) -> CliResult<TagSet> {
    let mut classes = BTreeSet::new();
    for d in docs {
        for t in &d.tags {
            if let Some((_, class)) = t.split_once('-') {
                classes.insert(class.to_string());
            }
        }
    }
    if classes.is_empty() {
        return Err(Failure::Data("training data has no entity tags".into()));
    }
    Ok(TagSet::new(classes)?)
}

/// Document ids are 1-based positions in the file.
fn doc_id(i: usize) -> String {
    (i + 1).to_string()
}

fn attach_external(input: &mut DocumentInput, ext: Option<&ExternalEmissions>) -> CliResult {
    if let Some(e) = ext {
        let m = e.get(&input.id).ok_or_else(|| {
            Failure::Data(format!("document {}: no emission scores in the external file", input.id))
        })?;
        input.external = Some(m.clone());
    }
    Ok(())
}

fn training_docs(
    model: &TaggerModel,
    docs: &[TaggedDoc],
    ext: Option<&ExternalEmissions>,
) -> CliResult<Vec<TrainingDocument>> {
    docs.iter()
        .enumerate()
        .map(|(i, d)| {
            let mut t = model.training_document(doc_id(i), &d.words, &d.tags)?;
            attach_external(&mut t.input, ext)?;
            Ok(t)
        })
        .collect()
}

fn train(mut cfg: PipelineConfig, a: TrainArgs) -> CliResult {
    let p = &mut cfg.paths;
    p.train = a.train.or(p.train.take());
    p.dev = a.dev.or(p.dev.take());
    p.vocab = a.vocab.or(p.vocab.take());
    p.model = a.out.or(p.model.take());
    p.report = a.report.or(p.report.take());
    if let Some(e) = a.emissions {
        p.train_emissions = Some(e);
        cfg.train.external = true;
    }
    cfg.paths.dev_emissions = a.dev_emissions.or(cfg.paths.dev_emissions.take());
    if let Some(h) = a.head {
        cfg.train.head = Some(h.into());
    }
    if let Some(e) = a.epochs {
        cfg.train.epochs = Some(e);
    }
    cfg.span.validate()?;
    let tcfg = cfg.train_config()?;
    log_run(&cfg);
    info!("training seed {}", tcfg.seed);

    let train_path = required(cfg.paths.train.clone(), "--train")?;
    let vocab_path = required(cfg.paths.vocab.clone(), "--vocab")?;
    let model_path = required(cfg.paths.model.clone(), "--out")?;
    let mut inputs = vec![train_path.as_path(), vocab_path.as_path()];
    inputs.extend(cfg.paths.dev.as_deref());
    inputs.extend(cfg.paths.train_emissions.as_deref());
    ensure_distinct(&model_path, &inputs)?;

    let vocab = Vocabulary::load(&vocab_path)?;
    let train_docs = read_tagged(&train_path)?;
    let ts = match cfg.tagset()? {
        Some(ts) => ts,
        None => infer_tagset(&train_docs)?,
    };
    info!("tag set: {}", ts.names().join(" "));

    let (model, ext) = if cfg.train.external {
        let path = required(cfg.paths.train_emissions.clone(), "--emissions")?;
        let ext = ExternalEmissions::load(&path)?.aligned_to(&ts)?;
        (TaggerModel::init_external(vocab, ts, cfg.span, tcfg.head)?, Some(ext))
    } else {
        (TaggerModel::init_trainable(vocab, ts, cfg.span, &tcfg)?, None)
    };
    let mut model = model;
    let mut data = training_docs(&model, &train_docs, ext.as_ref())?;

    let dev = match &cfg.paths.dev {
        Some(path) => {
            let dev_ext = match &cfg.paths.dev_emissions {
                Some(p) => Some(ExternalEmissions::load(p)?.aligned_to(&model.tagset)?),
                None if cfg.train.external => {
                    return Err(Failure::Usage("a dev file with external emissions needs --dev-emissions".into()))
                }
                None => None,
            };
            training_docs(&model, &read_tagged(path)?, dev_ext.as_ref())?
        }
        None if cfg.tagging.dev_fraction > 0.0 => {
            let (rest, dev) = split_dev(data, cfg.tagging.dev_fraction, derive_seed(cfg.seed, "dev-split"));
            data = rest;
            dev
        }
        None => Vec::new(),
    };
    info!("{} training documents, {} dev documents", data.len(), dev.len());

    let report = train_with_dev(&mut model, &data, &dev, &tcfg)?;
    if let Some(loss) = report.epoch_losses.last() {
        eprintln!("final epoch loss {loss:.6}");
    }
    if let Some(f1) = report.dev_f1.last() {
        eprintln!("dev F1 {:.2}", 100.0 * f1);
    }
    write_atomic(&model_path, |w| Ok(model.write_checkpoint(w)?))?;
    if let Some(p) = &cfg.paths.report {
        let json = serde_json::json!({
            "config_sha256": cfg.hash(),
            "seed": cfg.seed,
            "train_seed": tcfg.seed,
            "train_documents": data.len(),
            "dev_documents": dev.len(),
            "report": report,
        });
        write_string(p, &format!("{json:#}\n"))?;
    }
    Ok(())
}

/// Seeded document-level split; both parts keep file order.
fn split_dev(
    docs: Vec<TrainingDocument>,
    fraction: f64,
    seed: u64,
) -> (Vec<TrainingDocument>, Vec<TrainingDocument>) {
    let n = docs.len();
    let n_dev = ((n as f64 * fraction).round() as usize).clamp(usize::from(n > 1), n.saturating_sub(1));
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let dev_set: BTreeSet<usize> = idx[..n_dev].iter().copied().collect();
    let (mut rest, mut dev) = (Vec::new(), Vec::new());
    for (i, d) in docs.into_iter().enumerate() {
        if dev_set.contains(&i) {
            dev.push(d);
        } else {
            rest.push(d);
        }
    }
    (rest, dev)
}

fn predict(cfg: PipelineConfig, a: PredictArgs) -> CliResult {
    let model_path = required(a.model.or(cfg.paths.model.clone()), "--model")?;
    log_run(&cfg);
    let mut inputs = vec![a.input.as_path(), model_path.as_path()];
    inputs.extend(a.emissions.as_deref());
    ensure_distinct(&a.output, &inputs)?;
    let model = TaggerModel::load(&model_path)?;
    let ext = match &a.emissions {
        Some(p) => Some(ExternalEmissions::load(p)?.aligned_to(&model.tagset)?),
        None => None,
    };
    let mut docs: Vec<DocumentInput> = match a.format {
        InputFormat::Conll => read_columns_file(&a.input, None)?
            .iter()
            .enumerate()
            .map(|(i, d)| model.input_from_words(doc_id(i), &d.column(0)))
            .collect(),
        InputFormat::Text => read_text_documents(&a.input)?
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let mut input = model.input_from_words(doc_id(i), &[] as &[&str]);
                input.tokens = model.tokenize(t);
                input
            })
            .collect(),
    };
    for d in &mut docs {
        attach_external(d, ext.as_ref())?;
    }
    let preds = model.predict_all(&docs)?;
    write_atomic(&a.output, |w| {
        for (doc, pred) in docs.iter().zip(&preds) {
            for (word, &tag) in doc.tokens.pre_tokens.iter().zip(&pred.tags) {
                writeln!(w, "{}\t{}", word.text, model.tagset.name(tag)).map_err(io_error(&a.output))?;
            }
            writeln!(w).map_err(io_error(&a.output))?;
        }
        Ok(())
    })?;
    info!("tagged {} documents", docs.len());
    Ok(())
}

fn evaluate(cfg: PipelineConfig, a: EvaluateArgs) -> CliResult {
    log_run(&cfg);
    if let Some(out) = &a.output {
        let mut inputs = vec![a.gold.as_path()];
        inputs.extend(a.pred.as_deref());
        inputs.extend(a.bootstrap.as_deref());
        ensure_distinct(out, &inputs)?;
    }
    let opts = ScoreOptions {
        filter_pred: cfg.eval.filter_pred && !a.no_filter,
    };
    let gold = read_columns_file(&a.gold, None)?;
    let joined = match &a.pred {
        Some(p) => join_gold_pred(&gold, &read_columns_file(p, None)?)?,
        None => {
            if let Some(d) = gold.iter().find(|d| d.rows.iter().any(|r| r.len() < 3)) {
                let line = d.lines[0];
                return Err(Failure::Data(format!(
                    "{}:{line}: without --pred the file needs token, gold and predicted columns",
                    a.gold.display()
                )));
            }
            gold.clone()
        }
    };
    let scored = score_documents(&joined, opts)?;
    let mut report = scored.result.conlleval_report(a.per_class || cfg.eval.per_class);
    if let Some(other) = &a.bootstrap {
        let joined_b = join_gold_pred(&gold, &read_columns_file(other, None)?)?;
        let scored_b = score_documents(&joined_b, opts)?;
        let resamples = a.resamples.unwrap_or(cfg.eval.resamples);
        let seed = cfg.eval.seed.unwrap_or_else(|| derive_seed(cfg.seed, "bootstrap"));
        let b = bootstrap_compare(&scored.gold, &scored.pred, &scored_b.pred, resamples, seed)?;
        report.push_str(&format!(
            "bootstrap: FB1 {:.2} vs {:.2}; difference {:.2}; 95% interval [{:.2}, {:.2}]; {} {} resamples, seed {}; {}\n",
            100.0 * b.f1_a,
            100.0 * b.f1_b,
            100.0 * b.f1_delta,
            100.0 * b.ci_low,
            100.0 * b.ci_high,
            b.resamples,
            b.unit,
            b.seed,
            if b.significant() { "significant" } else { "not significant" },
        ));
    }
    print!("{report}");
    if let Some(out) = &a.output {
        write_string(out, &report)?;
    }
    Ok(())
}
