use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tokio::sync::mpsc;
use tokio_util::sync::CancellationToken;

use sqlion::collab::{
    agent_run, analyzer_run, broker_serve, AgentCore, AgentStats, AnalyzerCore, Blocklist,
    LogSource, NodeConfig,
};
use sqlion::dataset::{
    build_dataset, corpus_to_log_lines, dedupe, generate_corpus, read_corpus, read_dataset,
    write_corpus, write_dataset, CorpusKind, CorpusSpec,
};
use sqlion::features::{build_dictionary, frequency_analysis, FrequencyMode, TokenDictionary};
use sqlion::labeler::{verdict_from_level, BlockThreshold};
use sqlion::ml::{
    classify_bytes, evaluate, read_model, split, train_nb, train_tree, write_model, ModelKind,
    TrainedModel, DEFAULT_ALPHA, DEFAULT_MAX_DEPTH,
};
use sqlion::Error;

#[derive(Debug, Parser)]
#[command(
    name = "sqlion",
    version,
    about = "Collaborative SQL-injection detection"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a seeded synthetic query corpus.
    GenCorpus(GenCorpusArgs),
    /// Rank alphabetic words or symbol runs by frequency.
    Freq(FreqArgs),
    /// Build a 50-pattern dictionary from a malicious corpus.
    BuildDict(BuildDictArgs),
    /// Count and rule-label two corpora into a dataset file.
    BuildDataset(BuildDatasetArgs),
    /// Train a classifier and report held-out performance.
    Train(TrainArgs),
    /// Evaluate a saved model on the held-out split of a dataset.
    Eval(EvalArgs),
    /// Classify one query.
    Classify(ClassifyArgs),
    /// Run the pub/sub broker.
    Broker(BrokerArgs),
    /// Run a client agent that reports an access log and enforces blocks.
    Agent(AgentArgs),
    /// Run an analyzer that classifies routed queries.
    Analyzer(AnalyzerArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum KindArg {
    Malicious,
    Legitimate,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CorpusFormat {
    /// One percent-encoded query per line.
    Corpus,
    /// Apache combined access-log lines.
    Log,
}

#[derive(Debug, Args)]
struct GenCorpusArgs {
    #[arg(long, value_enum)]
    kind: KindArg,
    #[arg(long)]
    count: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long, value_enum, default_value = "corpus")]
    format: CorpusFormat,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FreqMode {
    Words,
    Symbols,
}

#[derive(Debug, Args)]
struct FreqArgs {
    #[arg(long, required = true)]
    corpus: Vec<PathBuf>,
    #[arg(long, value_enum)]
    mode: FreqMode,
    #[arg(long, default_value_t = 50)]
    top: usize,
}

#[derive(Debug, Args)]
struct BuildDictArgs {
    /// Malicious corpus to rank patterns from. Omit with --default.
    #[arg(long, required_unless_present = "default")]
    corpus: Vec<PathBuf>,
    /// Write the built-in dictionary instead.
    #[arg(long, conflicts_with = "corpus")]
    default: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct BuildDatasetArgs {
    #[arg(long)]
    malicious: PathBuf,
    #[arg(long)]
    legitimate: PathBuf,
    /// Dictionary file; the built-in dictionary when omitted.
    #[arg(long)]
    dict: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Drop repeated query texts within each corpus.
    #[arg(long)]
    dedupe: bool,
    /// Label every legitimate row 1 instead of running the rules on it.
    #[arg(long)]
    legit_level1: bool,
}

#[derive(Debug, Args)]
struct SplitArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 0.3)]
    test_fraction: f64,
    #[arg(long, default_value = "3")]
    threshold: BlockThreshold,
    /// Also write the metrics as CSV.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    split: SplitArgs,
    #[arg(long, value_parser = parse_model_kind)]
    model_kind: ModelKind,
    #[arg(long)]
    out: PathBuf,
    /// Laplace smoothing for naive Bayes.
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    alpha: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_DEPTH)]
    max_depth: usize,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[command(flatten)]
    split: SplitArgs,
    #[arg(long)]
    model: PathBuf,
}

#[derive(Debug, Args)]
struct ClassifyArgs {
    #[arg(long)]
    query: String,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    dict: PathBuf,
    #[arg(long, default_value = "3")]
    threshold: BlockThreshold,
}

#[derive(Debug, Args)]
struct BrokerArgs {
    #[arg(long)]
    listen: String,
}

#[derive(Debug, Args)]
struct NodeArgs {
    #[arg(long, env = "SQLION_BROKER")]
    broker: String,
    #[arg(long, default_value = "3")]
    threshold: BlockThreshold,
    /// Node name announced to the broker.
    #[arg(long)]
    name: Option<String>,
    /// Give up after this many failed connection attempts (default: never).
    #[arg(long)]
    max_attempts: Option<u32>,
}

#[derive(Debug, Args)]
struct AgentArgs {
    #[command(flatten)]
    node: NodeArgs,
    /// Access log to tail; `-` reads standard input.
    #[arg(long)]
    log: PathBuf,
    /// Keep polling the log for appended lines.
    #[arg(long)]
    follow: bool,
    /// Seconds a block stays effective (default: forever).
    #[arg(long)]
    block_ttl: Option<i64>,
}

#[derive(Debug, Args)]
struct AnalyzerArgs {
    #[command(flatten)]
    node: NodeArgs,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    dict: PathBuf,
}

fn parse_model_kind(s: &str) -> Result<ModelKind, String> {
    s.parse()
}

/// A failure with its exit code: 1 usage, 2 data/format, 3 network.
#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            message: message.into(),
        }
    }

    fn network(message: impl Into<String>) -> Self {
        Self {
            code: 3,
            message: message.into(),
        }
    }

    /// Attributes a library error to the file it came from.
    fn at(path: &Path, e: Error) -> Self {
        match e {
            Error::Io { .. } => Self::from(e),
            Error::InvalidArgument(m) => Self::usage(m),
            Error::Network(m) => Self::network(m),
            other => Self {
                code: 2,
                message: format!("{}: {other}", path.display()),
            },
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidArgument(_) => 1,
            Error::Network(_) => 3,
            _ => 2,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn open(path: &Path) -> CliResult<Box<dyn BufRead>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(Box::new(BufReader::new(f)))
}

/// Creates `path` and runs `write` against it, flushing at the end.
fn write_file(
    path: &Path,
    write: impl FnOnce(&mut BufWriter<File>) -> sqlion::Result<()>,
) -> CliResult {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    write(&mut w).map_err(|e| match e {
        Error::Stream(io) => Failure::from(Error::io(path, io)),
        other => Failure::at(path, other),
    })?;
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn load_corpus(path: &Path) -> CliResult<Vec<sqlion::normalize::RawQuery>> {
    read_corpus(open(path)?, &path.display().to_string()).map_err(|e| Failure::at(path, e))
}

fn load_dict(path: Option<&Path>) -> CliResult<TokenDictionary> {
    match path {
        None => Ok(TokenDictionary::default_dictionary()),
        Some(p) => TokenDictionary::read_from(open(p)?).map_err(|e| Failure::at(p, e)),
    }
}

fn load_model(path: &Path) -> CliResult<TrainedModel> {
    read_model(open(path)?).map_err(|e| Failure::at(path, e))
}

fn load_dataset(path: &Path) -> CliResult<sqlion::ml::LabeledDataset> {
    read_dataset(open(path)?).map_err(|e| Failure::at(path, e))
}

fn check_fraction(f: f64) -> CliResult {
    if f > 0.0 && f < 1.0 {
        Ok(())
    } else {
        Err(Failure::usage(format!(
            "--test-fraction must be strictly between 0 and 1 (got {f})"
        )))
    }
}

fn gen_corpus(a: GenCorpusArgs) -> CliResult {
    let kind = match a.kind {
        KindArg::Malicious => CorpusKind::Malicious,
        KindArg::Legitimate => CorpusKind::Legitimate,
    };
    let queries = generate_corpus(&CorpusSpec {
        kind,
        count: a.count,
        seed: a.seed,
    });
    match a.format {
        CorpusFormat::Corpus => write_file(&a.out, |w| write_corpus(&queries, w)),
        CorpusFormat::Log => write_file(&a.out, |w| {
            for line in corpus_to_log_lines(&queries, a.seed) {
                writeln!(w, "{line}")?;
            }
            Ok(())
        }),
    }?;
    eprintln!("wrote {} queries to {}", queries.len(), a.out.display());
    Ok(())
}

fn load_corpora(paths: &[PathBuf]) -> CliResult<Vec<sqlion::normalize::RawQuery>> {
    let mut all = Vec::new();
    for p in paths {
        all.extend(load_corpus(p)?);
    }
    Ok(all)
}

fn freq(a: FreqArgs) -> CliResult {
    let corpus = load_corpora(&a.corpus)?;
    let mode = match a.mode {
        FreqMode::Words => FrequencyMode::AlphabeticWords,
        FreqMode::Symbols => FrequencyMode::SingleSymbols,
    };
    let report = frequency_analysis(&corpus, mode);
    let mut out = io::stdout().lock();
    let _ = writeln!(out, "token,count");
    for (token, count) in report.top(a.top) {
        let _ = writeln!(out, "{},{count}", token.escape_debug());
    }
    Ok(())
}

fn build_dict(a: BuildDictArgs) -> CliResult {
    let dict = if a.default {
        TokenDictionary::default_dictionary()
    } else {
        let corpus = load_corpora(&a.corpus)?;
        let words = frequency_analysis(&corpus, FrequencyMode::AlphabeticWords);
        let symbols = frequency_analysis(&corpus, FrequencyMode::SingleSymbols);
        build_dictionary(&words, &symbols).map_err(|e| Failure::at(&a.corpus[0], e))?
    };
    write_file(&a.out, |w| dict.write_to(w))
}

fn build_dataset_cmd(a: BuildDatasetArgs) -> CliResult {
    let mut mal = load_corpus(&a.malicious)?;
    let mut leg = load_corpus(&a.legitimate)?;
    if a.dedupe {
        mal = dedupe(mal);
        leg = dedupe(leg);
    }
    let dict = load_dict(a.dict.as_deref())?;
    let data = build_dataset(&mal, &leg, &dict, a.legit_level1);
    write_file(&a.out, |w| write_dataset(&data, w))?;
    let counts = data.class_counts();
    eprintln!(
        "wrote {} rows to {} (levels 1-4: {} {} {} {})",
        data.len(),
        a.out.display(),
        counts[0],
        counts[1],
        counts[2],
        counts[3]
    );
    Ok(())
}

fn report(s: &SplitArgs, model: &TrainedModel, test: &sqlion::ml::LabeledDataset) -> CliResult {
    let report = evaluate(model, test, s.threshold, s.seed).map_err(|e| Failure::at(&s.data, e))?;
    print!("{report}");
    if let Some(path) = &s.report {
        write_file(path, |w| Ok(report.write_csv(w)?))?;
    }
    Ok(())
}

fn train(a: TrainArgs) -> CliResult {
    check_fraction(a.split.test_fraction)?;
    let data = load_dataset(&a.split.data)?;
    let (train, test) = split(&data, a.split.test_fraction, a.split.seed)
        .map_err(|e| Failure::at(&a.split.data, e))?;
    let model: TrainedModel = match a.model_kind {
        ModelKind::NaiveBayes => {
            if !(a.alpha > 0.0 && a.alpha.is_finite()) {
                return Err(Failure::usage(format!(
                    "--alpha must be positive (got {})",
                    a.alpha
                )));
            }
            train_nb(&train, a.alpha)
                .map_err(|e| Failure::at(&a.split.data, e))?
                .into()
        }
        ModelKind::Tree => {
            if a.max_depth == 0 || a.max_depth > DEFAULT_MAX_DEPTH {
                return Err(Failure::usage(format!(
                    "--max-depth must be between 1 and {DEFAULT_MAX_DEPTH} (got {})",
                    a.max_depth
                )));
            }
            train_tree(&train, a.max_depth)
                .map_err(|e| Failure::at(&a.split.data, e))?
                .into()
        }
    };
    write_file(&a.out, |w| write_model(&model, w))?;
    report(&a.split, &model, &test)
}

fn eval(a: EvalArgs) -> CliResult {
    check_fraction(a.split.test_fraction)?;
    let model = load_model(&a.model)?;
    let data = load_dataset(&a.split.data)?;
    let (_, test) = split(&data, a.split.test_fraction, a.split.seed)
        .map_err(|e| Failure::at(&a.split.data, e))?;
    report(&a.split, &model, &test)
}

fn classify(a: ClassifyArgs) -> CliResult {
    let model = load_model(&a.model)?;
    let dict = load_dict(Some(&a.dict))?;
    let p = classify_bytes(&model, &dict, a.query.as_bytes());
    println!(
        "level={} verdict={} confidence={:.4}",
        p.level,
        verdict_from_level(p.level, a.threshold),
        p.confidence
    );
    Ok(())
}

fn runtime() -> CliResult<tokio::runtime::Runtime> {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| Failure::network(format!("starting runtime: {e}")))
}

/// Cancelled on Ctrl-C.
fn interrupt_token(rt: &tokio::runtime::Runtime) -> CancellationToken {
    let token = CancellationToken::new();
    let t = token.clone();
    rt.spawn(async move {
        if tokio::signal::ctrl_c().await.is_ok() {
            t.cancel();
        }
    });
    token
}

fn broker(a: BrokerArgs) -> CliResult {
    let rt = runtime()?;
    let shutdown = interrupt_token(&rt);
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(&a.listen)
            .await
            .map_err(|e| Failure::network(format!("--listen {}: {e}", a.listen)))?;
        let addr = listener
            .local_addr()
            .map(|a| a.to_string())
            .unwrap_or_default();
        eprintln!("broker listening on {addr}");
        broker_serve(listener, shutdown)
            .await
            .map_err(|e| Failure::network(format!("broker on {}: {e}", a.listen)))
    })
}

fn node_config(n: &NodeArgs) -> NodeConfig {
    NodeConfig {
        broker: n.broker.clone(),
        max_attempts: n.max_attempts,
    }
}

fn agent(a: AgentArgs) -> CliResult {
    let source = if a.log.as_os_str() == "-" {
        LogSource::Stdin
    } else {
        File::open(&a.log).map_err(|e| Error::io(&a.log, e))?;
        LogSource::File {
            path: a.log.clone(),
            follow: a.follow,
        }
    };
    let name = a
        .node
        .name
        .clone()
        .unwrap_or_else(|| format!("agent-{}", std::process::id()));
    let blocklist = Arc::new(Blocklist::with_ttl(a.block_ttl));
    let core = AgentCore::new(name, a.node.threshold, blocklist.clone());
    let stats = core.stats().clone();
    let rt = runtime()?;
    let shutdown = interrupt_token(&rt);
    let result = rt.block_on(async {
        let (tx, rx) = mpsc::channel(1024);
        let tail = tokio::spawn(sqlion::collab::tail_log(source, tx, shutdown.clone()));
        let r = agent_run(node_config(&a.node), core, rx, shutdown.clone()).await;
        shutdown.cancel();
        if let Ok(Err(e)) = tail.await {
            return Err(Failure::at(&a.log, e));
        }
        r.map(|_| ()).map_err(Failure::from)
    });
    eprintln!(
        "sent={} dropped={} malformed={} blocks_applied={} blocks_ignored={}",
        AgentStats::get(&stats.sent),
        AgentStats::get(&stats.dropped),
        AgentStats::get(&stats.malformed),
        AgentStats::get(&stats.blocks_applied),
        AgentStats::get(&stats.blocks_ignored)
    );
    for e in blocklist.entries() {
        println!(
            "blocked {} issued_at={} reason={}",
            e.ip, e.issued_at, e.reason
        );
    }
    result
}

fn analyzer(a: AnalyzerArgs) -> CliResult {
    let model = load_model(&a.model)?;
    let dict = load_dict(Some(&a.dict))?;
    let name = a
        .node
        .name
        .clone()
        .unwrap_or_else(|| format!("analyzer-{}", std::process::id()));
    let core = AnalyzerCore::new(name, Arc::new(model), Arc::new(dict), a.node.threshold);
    let rt = runtime()?;
    let shutdown = interrupt_token(&rt);
    rt.block_on(analyzer_run(node_config(&a.node), core, shutdown))
        .map_err(Failure::from)
}

fn run(cli: Cli) -> CliResult {
    match cli.command {
        Command::GenCorpus(a) => gen_corpus(a),
        Command::Freq(a) => freq(a),
        Command::BuildDict(a) => build_dict(a),
        Command::BuildDataset(a) => build_dataset_cmd(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Classify(a) => classify(a),
        Command::Broker(a) => broker(a),
        Command::Agent(a) => agent(a),
        Command::Analyzer(a) => analyzer(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
