use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use revex::config::PipelineConfig;
use revex::corpus::TrainingCorpus;
use revex::error::{Error, Result};
use revex::io::{write_atomic, write_bytes_atomic, SCHEMA_VERSION};
use revex::pipeline::{self, TrainSettings};
use revex::svm::LinearModel;
use revex::synth;
use revex::text::Document;

#[derive(Parser)]
#[command(name = "revex", version, about = "Distantly supervised data-element extraction for systematic reviews")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    alpha: Option<f64>,
    #[arg(long, global = true)]
    beta: Option<f64>,
    #[arg(long, global = true)]
    element_kind: Option<String>,
    /// Cross-validation metric for model selection (recall or accuracy).
    #[arg(long, global = true)]
    metric: Option<String>,
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Label reference sentences against review values and write a corpus.
    BuildCorpus {
        #[arg(long)]
        reviews: Option<PathBuf>,
        /// Directory of `<reference_id>.txt` files.
        #[arg(long)]
        articles: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        min_match_floor: Option<f64>,
    },
    /// Train a model at a fixed C, or at the C chosen by grid search.
    Train {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long = "c", value_name = "C", conflicts_with = "grid")]
        c: Option<f64>,
        #[arg(long)]
        grid: bool,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Where the grid-search trace goes (default: next to the model).
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        weighting: Option<String>,
        #[arg(long)]
        binary_features: bool,
    },
    /// Run the cross-validated grid search over C and report the best value.
    SelectModel {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        weighting: Option<String>,
        #[arg(long)]
        binary_features: bool,
    },
    /// List the sentences a model marks positive in each article.
    Extract {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Article files or directories of `.txt` files.
        articles: Vec<PathBuf>,
    },
    /// Score predictions against gold sentence indices.
    Evaluate {
        #[arg(long)]
        predictions: Option<PathBuf>,
        #[arg(long)]
        gold: Option<PathBuf>,
        /// JSON report; the text table is written beside it as `.txt`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic reviews/articles/gold data set.
    Synth {
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        n_reviews: Option<usize>,
        #[arg(long)]
        refs_per_review: Option<usize>,
        #[arg(long)]
        sentences_per_article: Option<usize>,
        #[arg(long)]
        vocabulary_size: Option<usize>,
        #[arg(long)]
        paraphrase_noise: Option<f64>,
        #[arg(long)]
        test_articles: Option<usize>,
    },
    /// Print an article's numbered sentences.
    Annotate { article: PathBuf },
}

fn required(value: Option<PathBuf>, fallback: &Option<PathBuf>, what: &str) -> Result<PathBuf> {
    value
        .or_else(|| fallback.clone())
        .ok_or_else(|| Error::Usage(format!("no {what} path given (flag or [paths] in the config)")))
}

fn load_config(g: &Global) -> Result<PipelineConfig> {
    let mut config = match &g.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = g.seed {
        config.seed = seed;
    }
    if let Some(alpha) = g.alpha {
        config.alpha = alpha;
    }
    if let Some(beta) = g.beta {
        config.beta = beta;
    }
    if let Some(kind) = &g.element_kind {
        config.element_kind = kind.clone();
    }
    if let Some(metric) = &g.metric {
        config.grid.metric = metric.clone();
    }
    Ok(config)
}

/// `target` relative to `base_dir` when it lives there, else as given.
fn relative_to(target: &Path, base_dir: &Path) -> String {
    target
        .strip_prefix(base_dir)
        .unwrap_or(target)
        .to_string_lossy()
        .into_owned()
}

#[derive(Serialize)]
struct Selection<'a> {
    schema_version: u32,
    seed: u64,
    metric: &'a str,
    #[serde(rename = "best_C", serialize_with = "revex::g17::serialize")]
    best_c: f64,
    #[serde(serialize_with = "revex::g17::serialize")]
    best_mean: f64,
    evaluations: usize,
    trace_path: Option<String>,
}

fn run(cli: Cli) -> Result<()> {
    let mut config = load_config(&cli.global)?;
    match cli.command {
        Command::BuildCorpus {
            reviews,
            articles,
            out,
            min_match_floor,
        } => {
            if let Some(f) = min_match_floor {
                config.min_match_floor = f;
            }
            config.validate()?;
            let reviews = required(reviews, &config.paths.reviews, "reviews")?;
            let articles = required(articles, &config.paths.articles, "articles")?;
            let out = required(out, &config.paths.corpus, "corpus output")?;
            let build = pipeline::build_corpus(
                &reviews,
                &articles,
                config.rules(),
                &config.element_kind,
                config.seed,
            )?;
            build.corpus.write(&out)?;
            print!("{}", build.summary_text());
        }
        Command::Train {
            corpus,
            c,
            grid,
            out,
            trace,
            weighting,
            binary_features,
        } => {
            if let Some(w) = weighting {
                config.weighting = w;
            }
            config.binary_features |= binary_features;
            if let Some(c) = c {
                config.c = c;
            }
            config.validate()?;
            let corpus_path = required(corpus, &config.paths.corpus, "corpus")?;
            let out = required(out, &config.paths.model, "model output")?;
            let corpus = TrainingCorpus::read(&corpus_path)?;
            let data = pipeline::training_data(&corpus, config.binary_features)?;
            let mut trace_path = None;
            if grid {
                let search = pipeline::select_model(&data, &config.grid(), &config.weighting)?;
                let trace = trace
                    .or_else(|| config.paths.trace.clone())
                    .unwrap_or_else(|| out.with_extension("trace.jsonl"));
                search.write_trace(&trace)?;
                log::info!("grid search chose C={} (mean {})", search.best_c, search.best_mean);
                config.c = search.best_c;
                let model_dir = out.parent().unwrap_or(Path::new(""));
                trace_path = Some(relative_to(&trace, model_dir));
            }
            let mut model = pipeline::train_model(
                &corpus,
                data,
                &TrainSettings {
                    c: config.c,
                    weighting: &config.weighting,
                    tolerance: config.tolerance,
                    max_iterations: config.max_iterations,
                    seed: config.seed,
                },
            )?;
            model.trace_path = trace_path;
            model.write(&out)?;
            let report = model.report.as_ref().expect("fresh model has a report");
            println!(
                "C={} objective={} iterations={} converged={}",
                model.c, report.objective,
                report.iterations,
                report.converged
            );
        }
        Command::SelectModel {
            corpus,
            trace,
            out,
            weighting,
            binary_features,
        } => {
            if let Some(w) = weighting {
                config.weighting = w;
            }
            config.binary_features |= binary_features;
            config.validate()?;
            let corpus = TrainingCorpus::read(&required(corpus, &config.paths.corpus, "corpus")?)?;
            let data = pipeline::training_data(&corpus, config.binary_features)?;
            let grid = config.grid();
            let search = pipeline::select_model(&data, &grid, &config.weighting)?;
            let trace = trace.or_else(|| config.paths.trace.clone());
            match &trace {
                Some(path) => search.write_trace(path)?,
                None => print!("{}", search.trace_jsonl()),
            }
            if let Some(out) = out {
                let model_dir = out.parent().unwrap_or(Path::new(""));
                write_atomic(
                    &out,
                    &Selection {
                        schema_version: SCHEMA_VERSION,
                        seed: config.seed,
                        metric: &grid.metric,
                        best_c: search.best_c,
                        best_mean: search.best_mean,
                        evaluations: search.trace.len(),
                        trace_path: trace.as_deref().map(|t| relative_to(t, model_dir)),
                    },
                )?;
            }
            println!(
                "best C={} mean {}={} after {} evaluations",
                search.best_c, grid.metric, search.best_mean,
                search.trace.len()
            );
        }
        Command::Extract {
            model,
            out,
            articles,
        } => {
            let model = LinearModel::read(&required(model, &config.paths.model, "model")?)?;
            let inputs = if articles.is_empty() {
                vec![required(None, &config.paths.articles, "articles")?]
            } else {
                articles
            };
            let mut files = Vec::new();
            for input in inputs {
                if input.is_dir() {
                    files.extend(pipeline::article_files(&input)?);
                } else {
                    files.push(input);
                }
            }
            let predictions = pipeline::extract(&model, &files, model.seed)?;
            if let Some(out) = out.or_else(|| config.paths.predictions.clone()) {
                write_atomic(&out, &predictions)?;
            }
            print!("{}", predictions.to_text());
        }
        Command::Evaluate {
            predictions,
            gold,
            out,
        } => {
            let predictions = required(predictions, &config.paths.predictions, "predictions")?;
            let gold = required(gold, &config.paths.gold, "gold")?;
            let report = pipeline::evaluate_files(&predictions, &gold)?;
            let table = report.to_table();
            if let Some(out) = out.or_else(|| config.paths.report.clone()) {
                report.write(&out)?;
                write_bytes_atomic(&out.with_extension("txt"), table.as_bytes())?;
            }
            print!("{table}");
        }
        Command::Synth {
            out,
            n_reviews,
            refs_per_review,
            sentences_per_article,
            vocabulary_size,
            paraphrase_noise,
            test_articles,
        } => {
            let mut spec = config.synth();
            let overrides = [
                (n_reviews, &mut spec.n_reviews),
                (refs_per_review, &mut spec.refs_per_review),
                (sentences_per_article, &mut spec.sentences_per_article),
                (vocabulary_size, &mut spec.vocabulary_size),
                (test_articles, &mut spec.n_test_articles),
            ];
            for (value, slot) in overrides {
                if let Some(v) = value {
                    *slot = v;
                }
            }
            if let Some(noise) = paraphrase_noise {
                spec.paraphrase_noise = noise;
            }
            let out = required(out, &config.paths.synth_dir, "synth output")?;
            let data = synth::generate(&spec)?;
            synth::write(&data, &spec, &out)?;
            println!(
                "wrote {} review records, {} articles and {} held-out articles to {}",
                data.records.len(),
                data.articles.len(),
                data.test_articles.len(),
                out.display()
            );
        }
        Command::Annotate { article } => {
            print!("{}", pipeline::annotate(&Document::from_file(&article)?));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let level = if cli.global.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    match std::panic::catch_unwind(|| run(cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
        Err(_) => ExitCode::from(3),
    }
}
