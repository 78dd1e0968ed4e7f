use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use hti::baseline;
use hti::corpus::{ingest_reviews, read_records, split_dataset, Corpus, CorpusStats, Split, SplitRatios};
use hti::evaluator::{
    self, bench_csv, benchmark_complexity, export_attention_trace, run_ablation, BenchOptions, MetricsReport,
};
use hti::model::Variant;
use hti::trainer::{fit, init_model, search_lambda, HyperParams, StopReason};
use hti::{HtiError, HtiModel, Result, Scalar};
use log::{info, warn};
use serde_json::json;

use crate::config::RunConfig;

/// Writes `text` to `out`, or to stdout when no path is given.
fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => {
            fs::write(p, text)?;
            info!("wrote {}", p.display());
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            if !text.ends_with('\n') {
                stdout.write_all(b"\n")?;
            }
        }
    }
    Ok(())
}

/// Explicit path, else `name` inside the configured output directory.
fn output_path(explicit: Option<&Path>, config: &RunConfig, name: &str) -> Option<PathBuf> {
    explicit
        .map(Path::to_path_buf)
        .or_else(|| config.output_dir.as_ref().map(|d| d.join(name)))
}

fn load_corpus(config: &RunConfig) -> Result<Corpus> {
    let path = config.require(&config.corpus, "corpus")?;
    let corpus = Corpus::load(path)?;
    let padding = config.padding(corpus.padding);
    Ok(corpus.with_padding(padding))
}

/// Three significant figures.
fn sig3(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let digits = (2 - x.abs().log10().floor() as i32).max(0) as usize;
    format!("{x:.digits$}")
}

pub fn stats_table(s: &CorpusStats) -> String {
    let header = [
        "#user",
        "#item",
        "#rating",
        "#doc/user",
        "#doc/item",
        "#word/doc",
        "density",
    ];
    let row = [
        s.users.to_string(),
        s.items.to_string(),
        s.ratings.to_string(),
        format!("{:.2}", s.docs_per_user),
        format!("{:.2}", s.docs_per_item),
        format!("{:.2}", s.words_per_doc),
        sig3(s.density),
    ];
    let width: Vec<usize> = header.iter().zip(&row).map(|(h, r)| h.len().max(r.len())).collect();
    let line = |cells: &[String]| {
        cells
            .iter()
            .zip(&width)
            .map(|(c, w)| format!("{c:>w$}"))
            .collect::<Vec<_>>()
            .join("  ")
    };
    let header: Vec<String> = header.iter().map(|h| h.to_string()).collect();
    format!(
        "{}\n{}\nsplits: train {} / val {} / test {}; vocabulary {}; padding m={} n={} p={}\n",
        line(&header),
        line(&row),
        s.train,
        s.val,
        s.test,
        s.vocabulary,
        s.padding.max_user_reviews,
        s.padding.max_item_reviews,
        s.padding.max_review_len
    )
}

pub fn ingest(config: &RunConfig, out: &Path, stats_out: Option<&Path>) -> Result<()> {
    let input = config.require(&config.input, "input")?;
    let batch = read_records(std::io::BufReader::new(fs::File::open(input)?))?;
    if batch.skipped > 0 {
        warn!("skipped {} malformed lines", batch.skipped);
    }
    let corpus = ingest_reviews(batch.records, &config.preprocess()?)?;
    let padding = config.padding(corpus.padding);
    let corpus = corpus.with_padding(padding);
    corpus.save(out)?;
    info!("wrote {}", out.display());
    let stats = corpus.stats();
    if let Some(p) = stats_out {
        fs::write(p, serde_json::to_string_pretty(&stats)? + "\n")?;
    }
    emit(None, &stats_table(&stats))
}

fn train_typed<S: Scalar>(config: &RunConfig, corpus: &Corpus, log_path: Option<&Path>) -> Result<()> {
    let checkpoint = config.require(&config.checkpoint, "checkpoint")?;
    let mut hp = config.hyperparams();
    let mut lambda_scores = None;
    if config.search_lambda {
        let (best, scores) = search_lambda::<S>(corpus, &hp, &config.lambda_grid)?;
        info!("selected lambda {best:e}");
        hp.lambda = best;
        lambda_scores = Some(scores);
    }
    let mut log_file = match output_path(log_path, config, "train_log.ndjson") {
        Some(p) => Some(std::io::BufWriter::new(fs::File::create(p)?)),
        None => None,
    };
    let mut write_err = None;
    let model = init_model::<S>(corpus, &hp)?;
    let outcome = fit(model, corpus, &hp, &mut |record| {
        if let Some(f) = log_file.as_mut() {
            let line = serde_json::to_string(record).expect("epoch record serializes");
            if let Err(e) = writeln!(f, "{line}").and_then(|_| f.flush()) {
                write_err.get_or_insert(e);
            }
        }
    })?;
    if let Some(e) = write_err {
        return Err(e.into());
    }
    let summary = json!({
        "hyperparams": hp,
        "best_epoch": outcome.log.best_epoch,
        "best_val_mae": outcome.log.best_val_mae,
        "epochs_run": outcome.log.epochs.len(),
        "stop": outcome.log.stop,
        "lambda_scores": lambda_scores,
    });
    outcome.model.save_checkpoint(checkpoint, summary.clone())?;
    info!("wrote {}", checkpoint.display());
    emit(None, &serde_json::to_string_pretty(&summary)?)?;
    if let StopReason::Diverged(why) = outcome.log.stop {
        return Err(HtiError::numerical(format!(
            "training diverged ({why}); checkpoint holds epoch {}",
            outcome.log.best_epoch
        )));
    }
    Ok(())
}

pub fn train(config: &RunConfig, log: Option<&Path>) -> Result<()> {
    let corpus = load_corpus(config)?;
    match config.dtype.as_str() {
        "f64" => train_typed::<f64>(config, &corpus, log),
        _ => train_typed::<f32>(config, &corpus, log),
    }
}

enum AnyModel {
    F32(HtiModel<f32>),
    F64(HtiModel<f64>),
}

fn load_model(config: &RunConfig) -> Result<AnyModel> {
    let path = config.require(&config.checkpoint, "checkpoint")?;
    let (model, header) = HtiModel::<f64>::load_checkpoint(path)?;
    // f32 values survive the round trip through f64 exactly
    Ok(if header.dtype == "f32" {
        AnyModel::F32(model.cast())
    } else {
        AnyModel::F64(model)
    })
}

fn check_compatible<S: Scalar>(model: &HtiModel<S>, corpus: &Corpus) -> Result<()> {
    let c = &model.config;
    if c.n_users != corpus.n_users() || c.n_items != corpus.n_items() || c.vocab_size != corpus.vocabulary.len() {
        return Err(HtiError::data(
            "checkpoint was trained on a different corpus (user, item or vocabulary counts differ)",
        ));
    }
    Ok(())
}

fn parse_split(name: &str) -> Result<Split> {
    match name {
        "train" => Ok(Split::Train),
        "val" => Ok(Split::Val),
        "test" => Ok(Split::Test),
        other => Err(HtiError::config(format!("unknown split '{other}'"))),
    }
}

pub fn evaluate(config: &RunConfig, split: &str, out: Option<&Path>) -> Result<()> {
    let corpus = load_corpus(config)?;
    let split = parse_split(split)?;
    let report = match load_model(config)? {
        AnyModel::F32(m) => {
            check_compatible(&m, &corpus)?;
            evaluator::evaluate(&m, &corpus, split)?
        }
        AnyModel::F64(m) => {
            check_compatible(&m, &corpus)?;
            evaluator::evaluate(&m, &corpus, split)?
        }
    };
    emit(
        output_path(out, config, "metrics.json").as_deref(),
        &(report.to_json()? + "\n"),
    )
}

/// Re-splits when the configured training ratio differs from the corpus.
fn with_train_ratio(corpus: Corpus, config: &RunConfig) -> Result<Corpus> {
    let n = corpus.interactions.len();
    let ratios = SplitRatios::with_train(config.train_ratio);
    let n_test = ((ratios.test * n as f64).round() as usize).max(1);
    let n_val = ((ratios.val * n as f64).round() as usize).max(1);
    let expected = ((ratios.train * n as f64).round() as usize).min(n.saturating_sub(n_val + n_test));
    if corpus.split_indices(Split::Train).len() == expected {
        return Ok(corpus);
    }
    info!("re-splitting with train ratio {}", config.train_ratio);
    let seed = corpus.seed;
    let resplit = split_dataset(corpus, ratios, seed)?;
    let padding = config.padding(resplit.padding);
    Ok(resplit.with_padding(padding))
}

fn ablate_typed<S: Scalar>(
    corpus: &Corpus,
    hp: &HyperParams,
    variants: &[Variant],
    seeds: &[u64],
) -> Result<Vec<MetricsReport>> {
    variants
        .iter()
        .map(|&v| {
            let mut report = run_ablation::<S>(v, corpus, hp, seeds)?;
            info!("{v}: MAE {:.4} RMSE {:.4}", report.mae, report.rmse);
            report.name = v.name().to_string();
            Ok(report)
        })
        .collect()
}

pub fn ablate(config: &RunConfig, variants: &[String], with_baseline: bool, out: Option<&Path>) -> Result<()> {
    let variants: Vec<Variant> = variants
        .iter()
        .map(|v| {
            v.parse()
                .map_err(|_| HtiError::config(format!("unknown variant '{v}'")))
        })
        .collect::<Result<_>>()?;
    let corpus = with_train_ratio(load_corpus(config)?, config)?;
    let hp = config.hyperparams();
    let mut reports = match config.dtype.as_str() {
        "f64" => ablate_typed::<f64>(&corpus, &hp, &variants, &config.seeds)?,
        _ => ablate_typed::<f32>(&corpus, &hp, &variants, &config.seeds)?,
    };
    if with_baseline {
        reports.push(baseline::fit_and_evaluate(&corpus)?);
    }
    let text = serde_json::to_string_pretty(&json!({
        "train_ratio": config.train_ratio,
        "seeds": config.seeds,
        "reports": reports,
    }))?;
    emit(output_path(out, config, "ablation.json").as_deref(), &(text + "\n"))
}

fn parse_pair(pair: &[String]) -> Result<(String, String)> {
    let mut user = None;
    let mut item = None;
    for p in pair {
        if let Some(u) = p.strip_prefix("u:") {
            user = Some(u.to_string());
        } else if let Some(i) = p.strip_prefix("i:") {
            item = Some(i.to_string());
        }
    }
    match (user, item) {
        (Some(u), Some(i)) => Ok((u, i)),
        _ => Err(HtiError::config("--pair expects `u:<user id> i:<item id>`")),
    }
}

pub fn explain(config: &RunConfig, pair: &[String], top: usize, out: Option<&Path>) -> Result<()> {
    let (user, item) = parse_pair(pair)?;
    let corpus = load_corpus(config)?;
    let trace = match load_model(config)? {
        AnyModel::F32(m) => {
            check_compatible(&m, &corpus)?;
            export_attention_trace(&m, &corpus, &user, &item, top)?
        }
        AnyModel::F64(m) => {
            check_compatible(&m, &corpus)?;
            export_attention_trace(&m, &corpus, &user, &item, top)?
        }
    };
    emit(
        output_path(out, config, "trace.json").as_deref(),
        &(trace.to_json()? + "\n"),
    )
}

pub fn bench(config: &RunConfig, sizes: Vec<usize>, ks: Vec<usize>, repeats: usize, out: Option<&Path>) -> Result<()> {
    let opts = BenchOptions {
        sizes,
        ks,
        repeats,
        seed: config.seed,
        ..BenchOptions::default()
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| HtiError::config(e.to_string()))?;
    let report = pool.install(|| benchmark_complexity(&opts))?;
    for (what, fit) in [
        ("distance stage", &report.distance_fit),
        ("interaction module", &report.module_fit),
    ] {
        info!(
            "{what}: fit against [{}] deviates at most {:.1}%",
            fit.features.join(", "),
            fit.max_relative_deviation * 100.0
        );
    }
    emit(
        output_path(out, config, "bench.csv").as_deref(),
        &bench_csv(&report.rows),
    )
}
