use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context as _, Result};
use attrib_core::corpus::{dataset_stats, load_corpus, load_dataset, Corpus, CorpusMapping, DatasetMapping};
use attrib_core::exec::Executor;
use attrib_core::fusion::FusionMethod;
use attrib_core::harness::{
    self, correlate_with_annotations, evaluate_retrieval, load_report, render_report, ExperimentConfig, Experiment,
    GatewaySection, ReportFormat,
};
use attrib_core::pipelines::Scenario;
use attrib_core::retrieval::{trec, Bm25Params, Index};
use attrib_core::text::Analyzer;
use attrib_core::Error;
use clap::{Args, Parser, Subcommand};

/// Attributed information-seeking benchmark harness.
#[derive(Parser)]
#[command(name = "attrib", version)]
struct Cli {
    /// More log output (repeat for debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build and save a BM25 index.
    Index {
        #[command(subcommand)]
        action: IndexAction,
    },
    /// Run one scenario over a dataset and score it.
    Run(RunArgs),
    /// Score existing outputs.
    Eval {
        #[command(subcommand)]
        target: EvalTarget,
    },
    /// Run an RTG scenario for several supporting-document counts.
    SweepK {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        ks: Vec<usize>,
        #[arg(long)]
        scenario: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        mock: bool,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Correlate citation metrics on gold answers with human labels.
    Correlate {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        mock: bool,
    },
    /// Render a finished run's report.
    Report {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long, default_value = "table")]
        format: String,
    },
    /// Dataset statistics.
    Stats {
        #[command(flatten)]
        data: DataArgs,
    },
}

#[derive(Subcommand)]
enum IndexAction {
    Build {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = Bm25Params::default().k1)]
        k1: f64,
        #[arg(long, default_value_t = Bm25Params::default().b)]
        b: f64,
        #[arg(long, default_value = "docid")]
        id_field: String,
        #[arg(long, default_value = "text")]
        text_field: String,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    scenario: Option<String>,
    /// Supporting documents for RTG.
    #[arg(long)]
    k: Option<usize>,
    /// Generated subqueries for rtg-query-gen.
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    fusion: Option<String>,
    #[arg(long)]
    mock: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum EvalTarget {
    /// Score a predictions file against a dataset.
    Answers {
        #[arg(long)]
        pred: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        mock: bool,
    },
    /// P/R/nDCG of TREC runs; several runs add a MAX row.
    Retrieval {
        #[arg(long = "run", required = true)]
        runs: Vec<PathBuf>,
        #[arg(long)]
        qrels: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = [1usize, 10])]
        cutoffs: Vec<usize>,
        #[arg(long, default_value = "table")]
        format: String,
    },
}

#[derive(Args)]
struct DataArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Passages; inline gold passage text is used when omitted.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// TOML with dataset field names (bare, or a config's `[dataset.fields]`).
    #[arg(long)]
    mapping: Option<PathBuf>,
}

impl DataArgs {
    fn mapping(&self) -> Result<DatasetMapping> {
        let Some(path) = &self.mapping else {
            return Ok(DatasetMapping::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let value: toml::Value = toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let fields = value
            .get("dataset")
            .and_then(|d| d.get("fields"))
            .cloned()
            .unwrap_or(value);
        Ok(fields
            .try_into()
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?)
    }

    fn load(&self) -> Result<(attrib_core::corpus::Dataset, Corpus)> {
        let dataset = load_dataset(&self.dataset, &self.mapping()?)?;
        let mut corpus = match &self.corpus {
            Some(p) => load_corpus(p, &CorpusMapping::default())?,
            None => Corpus::default(),
        };
        corpus.extend_missing(dataset.inline_passages());
        Ok((dataset, corpus))
    }
}

fn gateway(mock: bool) -> Result<attrib_core::modelio::Gateway> {
    Ok(GatewaySection {
        mock,
        ..Default::default()
    }
    .build()?)
}

fn load_config(path: &Path) -> Result<ExperimentConfig> {
    ExperimentConfig::load(path).map_err(|e| match e {
        Error::Io { .. } => Error::Config(e.to_string()).into(),
        other => other.into(),
    })
}

fn executor(threads: Option<usize>, config: Option<&ExperimentConfig>) -> Executor {
    let n = threads.or(config.map(|c| c.harness.parallelism)).unwrap_or(1);
    Executor::with_threads(n)
}

fn out_dir(flag: Option<PathBuf>, config: &ExperimentConfig) -> Result<PathBuf> {
    flag.or_else(|| config.harness.out.clone())
        .ok_or_else(|| Error::Config("no output directory: pass --out or set harness.out".into()).into())
}

fn write_out(dir: &Path, name: &str, contents: &str) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    std::fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
}

fn run(args: RunArgs) -> Result<ExitCode> {
    let mut config = load_config(&args.config)?;
    if let Some(s) = &args.scenario {
        config.scenario.scenario = s.parse::<Scenario>()?;
    }
    if let Some(k) = args.k {
        config.scenario.k_docs = k;
    }
    if let Some(m) = args.m {
        config.scenario.m_subqueries = m;
    }
    if let Some(f) = &args.fusion {
        config.scenario.fusion = f.parse::<FusionMethod>()?;
    }
    if let Some(seed) = args.seed {
        config.scenario.seed = Some(seed);
    }
    if args.mock {
        config.gateway.mock = true;
    }
    if let Some(t) = args.threads {
        config.harness.parallelism = t.max(1);
    }
    let out = out_dir(args.out, &config)?;
    config.harness.out = Some(out.clone());
    let exec = executor(None, Some(&config));
    let report = harness::run_experiment(&config, &out, &exec)?;
    print!("{}", render_report(&report, ReportFormat::Table));
    log::info!("wrote {}", out.display());
    Ok(if report.metadata.failed { ExitCode::from(1) } else { ExitCode::SUCCESS })
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Index {
            action:
                IndexAction::Build {
                    corpus,
                    out,
                    k1,
                    b,
                    id_field,
                    text_field,
                },
        } => {
            let mapping = CorpusMapping {
                id: id_field,
                text: text_field,
                ..Default::default()
            };
            let corpus = load_corpus(&corpus, &mapping)?;
            let index = Index::build(&corpus, &Analyzer::default(), Bm25Params { k1, b })?;
            std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            index.save(&out.join("index.json"))?;
            println!("indexed {} passages into {}", index.n_docs(), out.display());
        }
        Command::Run(args) => return run(args),
        Command::Eval {
            target: EvalTarget::Answers { pred, data, out, mock },
        } => {
            let preds = harness::read_predictions(&pred)?;
            let (dataset, corpus) = data.load()?;
            let output = harness::evaluate_predictions(
                &preds,
                &dataset.queries,
                &corpus,
                &gateway(mock)?,
                &Executor::with_threads(4),
            )?;
            output.write(&out)?;
            print!("{}", render_report(&output.report, ReportFormat::Table));
            if output.report.metadata.failed {
                return Ok(ExitCode::from(1));
            }
        }
        Command::Eval {
            target:
                EvalTarget::Retrieval {
                    runs,
                    qrels,
                    cutoffs,
                    format,
                },
        } => {
            let format: ReportFormat = format.parse()?;
            let qrels = trec::read_qrels(&qrels)?;
            let runs = runs
                .iter()
                .map(|p| {
                    let name = p.file_stem().map_or_else(|| p.display().to_string(), |s| s.to_string_lossy().into_owned());
                    Ok((name, trec::read_run(p)?))
                })
                .collect::<Result<Vec<_>>>()?;
            let table = evaluate_retrieval(&runs, &qrels, &cutoffs)?;
            for d in &table.diagnostics {
                log::warn!("{d}");
            }
            match format {
                ReportFormat::Table => print!("{}", table.to_text()),
                ReportFormat::Csv => print!("{}", table.to_csv()),
                ReportFormat::Json => println!("{}", serde_json::to_string_pretty(&table)?),
            }
        }
        Command::SweepK {
            config,
            ks,
            scenario,
            out,
            mock,
            threads,
        } => {
            let mut config = load_config(&config)?;
            if let Some(s) = &scenario {
                config.scenario.scenario = s.parse::<Scenario>()?;
            }
            if mock {
                config.gateway.mock = true;
            }
            let out = out_dir(out, &config)?;
            let exec = executor(threads, Some(&config));
            let experiment = Experiment::load(config)?;
            let rows = harness::sweep_k(&experiment, &ks, &out, &exec)?;
            print!("{}", harness::sweep_csv(&rows));
            if rows.iter().any(|(_, r)| r.metadata.failed) {
                return Ok(ExitCode::from(1));
            }
        }
        Command::Correlate { data, out, mock } => {
            let (dataset, corpus) = data.load()?;
            let table = correlate_with_annotations(&dataset.queries, &corpus, &gateway(mock)?)?;
            let json = serde_json::to_string_pretty(&table)? + "\n";
            if let Some(out) = out {
                write_out(&out, "correlation.json", &json)?;
            }
            for row in &table.rows {
                match row.pearson {
                    Some(r) => println!("{:<14} {r:>7.4}  (n={})", row.metric, row.n),
                    None => println!("{:<14} {:>7}  (n={})", row.metric, "skipped", row.n),
                }
            }
        }
        Command::Report { dir, format } => {
            let format: ReportFormat = format.parse()?;
            let report = load_report(&dir)?;
            print!("{}", render_report(&report, format));
        }
        Command::Stats { data } => {
            let dataset = load_dataset(&data.dataset, &data.mapping()?)?;
            println!("{}", serde_json::to_string_pretty(&dataset_stats(&dataset.queries))?);
            if !dataset.dropped_citations.is_empty() {
                log::warn!("{} citation markers dropped while parsing", dataset.dropped_citations.len());
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            let bad_config = e
                .chain()
                .any(|c| matches!(c.downcast_ref::<Error>(), Some(Error::Config(_))));
            if bad_config {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
