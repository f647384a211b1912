use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use recall_tree::diagnostics::ledger_snapshot;
use recall_tree::eval::synth::{self, Structure, SynthSpec};
use recall_tree::eval::{holdout_eval, predict_all, EvalReport, Tally};
use recall_tree::{
    load_model, read_dataset, save_model, stream_dataset, Error, Hyperparams,
    LabelMap, Model, OaaModel, RecallTree, RouterScale, RouterSign, SparseExample,
    StreamOptions,
};

const DEFAULT_SEED: u64 = 0;

#[derive(Parser)]
#[command(name = "recall-tree", version, about = "Online multiclass learning with recall trees")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model, print a report and write the model file.
    Train(TrainArgs),
    /// Print one predicted class per input example.
    Predict(PredictArgs),
    /// Holdout accuracy, work counters and entropy ledger of a saved model.
    Eval(EvalArgs),
    /// Per-node report of a saved tree.
    Inspect(InspectArgs),
    /// Write a synthetic dataset.
    Synth(SynthArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Algo {
    RecallTree,
    Oaa,
}

#[derive(Clone, Copy, ValueEnum)]
enum SignArg {
    Corrected,
    Literal,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScaleArg {
    Mass,
    Fraction,
}

#[derive(Args)]
struct InputArgs {
    /// Prepend the intercept feature 0:1 to every example. Use the same
    /// setting for training, prediction and evaluation.
    #[arg(long)]
    constant_feature: bool,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, value_enum, default_value = "recall-tree")]
    algo: Algo,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    model: PathBuf,
    /// Holdout file evaluated after training.
    #[arg(long)]
    test: Option<PathBuf>,
    /// Number of classes; inferred as max label + 1 when absent.
    #[arg(long)]
    classes: Option<u32>,
    /// Size of the raw feature index space; inferred as max index + 1 when absent.
    #[arg(long)]
    features: Option<u64>,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    passes: u32,
    /// Visit the training file in a random order; pass `p` uses seed + p.
    #[arg(long)]
    permute: bool,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Default: ceil(log2 K).
    #[arg(long)]
    max_depth: Option<u32>,
    /// Candidate classes per node. Default: ceil(4 log2 K).
    #[arg(long)]
    candidates: Option<u32>,
    #[arg(long, default_value_t = 1.0)]
    depth_penalty: f32,
    #[arg(long, default_value_t = 24)]
    bits: u32,
    #[arg(long, default_value_t = 1.0)]
    learning_rate: f32,
    #[arg(long)]
    no_path_features: bool,
    #[arg(long, default_value_t = 1.0)]
    bernstein_multiplier: f32,
    #[arg(long, value_enum, default_value = "corrected")]
    router_sign: SignArg,
    #[arg(long, value_enum, default_value = "mass")]
    router_scale: ScaleArg,
    /// Per-weight AdaGrad step sizes instead of a constant learning rate.
    #[arg(long)]
    adagrad: bool,
    /// Print the report as a header and a tab-separated row.
    #[arg(long)]
    tsv: bool,
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    #[command(flatten)]
    input: InputArgs,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Write predictions here instead of standard output.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Print class names from this file, one per line, instead of ids.
    #[arg(long)]
    label_names: Option<PathBuf>,
    /// Worker threads; 0 uses every core. Output order never changes.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    #[command(flatten)]
    input: InputArgs,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    tsv: bool,
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    #[command(flatten)]
    input: InputArgs,
}

#[derive(Args)]
struct InspectArgs {
    #[arg(long)]
    model: PathBuf,
    /// Dataset for the entropy ledger.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Only list nodes up to this depth.
    #[arg(long)]
    max_depth: Option<u32>,
    #[command(flatten)]
    input: InputArgs,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    structure: Structure,
    #[arg(long)]
    classes: u32,
    #[arg(long)]
    dimensions: u32,
    #[arg(long)]
    examples: usize,
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long, default_value_t = 1.0)]
    spread: f64,
    #[arg(long, default_value_t = 1.0)]
    zipf_exponent: f64,
    #[arg(long, default_value_t = 1000)]
    block_len: usize,
    #[arg(long)]
    out: PathBuf,
}

/// Exit codes; clap reports usage errors with 2 itself.
mod exit {
    pub const USAGE: u8 = 2;
    pub const IO: u8 = 3;
    pub const FORMAT: u8 = 4;
    pub const DATA: u8 = 5;
    pub const MODEL_STATE: u8 = 6;
}

enum Failure {
    Usage(String),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Lib(Error::Io(e))
    }
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => exit::USAGE,
            Failure::Lib(e) => match e {
                Error::Io(_) => exit::IO,
                Error::Format(_) | Error::Corrupt(_) | Error::ModelType { .. } => exit::FORMAT,
                Error::Parse { .. } | Error::Domain(_) => exit::DATA,
                Error::NotTrained => exit::MODEL_STATE,
            },
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(m) => write!(f, "usage error: {m}"),
            Failure::Lib(e) => write!(f, "{e}"),
        }
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn with_context(path: &Path, e: Error) -> Error {
    match e {
        Error::Io(io) => Error::Io(io::Error::new(io.kind(), format!("{}: {io}", path.display()))),
        other => other,
    }
}

fn stream_opts(input: &InputArgs, permute: bool, seed: u64) -> StreamOptions {
    StreamOptions {
        permute,
        seed,
        constant_feature: input.constant_feature,
    }
}

fn load(path: &Path) -> CliResult<Model> {
    load_model(path).map_err(|e| with_context(path, e).into())
}

fn read(path: &Path, opts: &StreamOptions) -> CliResult<Vec<SparseExample>> {
    read_dataset(path, opts).map_err(|e| with_context(path, e).into())
}

fn thread_pool(jobs: usize) -> CliResult<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Failure::Usage(format!("cannot start {jobs} worker threads: {e}")))
}

impl TrainArgs {
    fn hyperparams(&self, num_classes: u32) -> Hyperparams {
        let defaults = Hyperparams::for_classes(num_classes);
        Hyperparams {
            max_depth: self.max_depth.unwrap_or(defaults.max_depth),
            num_candidates: self.candidates.unwrap_or(defaults.num_candidates),
            depth_penalty: self.depth_penalty,
            bits: self.bits,
            learning_rate: self.learning_rate,
            path_features: !self.no_path_features,
            bernstein_multiplier: self.bernstein_multiplier,
            router_sign: match self.router_sign {
                SignArg::Corrected => RouterSign::Corrected,
                SignArg::Literal => RouterSign::Literal,
            },
            router_scale: match self.router_scale {
                ScaleArg::Mass => RouterScale::Mass,
                ScaleArg::Fraction => RouterScale::Fraction,
            },
            adagrad: self.adagrad,
        }
    }

    /// Class count and raw feature space, from flags or a pass over the data.
    fn shape(&self) -> CliResult<(u32, u64)> {
        if let (Some(k), Some(f)) = (self.classes, self.features) {
            return Ok((k, f));
        }
        let opts = stream_opts(&self.input, false, self.seed);
        let stream = stream_dataset(&self.data, &opts).map_err(|e| with_context(&self.data, e))?;
        let (mut max_label, mut max_index) = (None::<u32>, None::<u64>);
        for x in stream {
            let x = x?;
            max_label = max_label.max(Some(x.label));
            max_index = max_index.max(x.max_index());
        }
        let classes = match (self.classes, max_label) {
            (Some(k), _) => k,
            (None, Some(y)) => y + 1,
            (None, None) => {
                return Err(Failure::Usage(
                    "cannot infer the class count from an empty dataset; pass --classes".into(),
                ))
            }
        };
        let features = self.features.unwrap_or(max_index.map_or(1, |m| m + 1));
        Ok((classes, features))
    }
}

fn print_report(report: &EvalReport, tsv: bool) -> CliResult {
    let mut out = io::stdout().lock();
    if tsv {
        writeln!(out, "{}\n{}", report.tsv_header(), report.tsv_row())?;
    } else {
        write!(out, "{}", report.to_key_value())?;
    }
    out.flush()?;
    Ok(())
}

fn examples_seen(model: &Model) -> u64 {
    match model {
        Model::RecallTree(t) => t.examples_seen(),
        Model::Oaa(m) => m.examples_seen(),
    }
}

fn algo_name(model: &Model) -> String {
    model.kind().name().to_owned()
}

fn evaluate(model: &Model, test: &[SparseExample], report: &mut EvalReport) -> CliResult {
    if let Model::RecallTree(tree) = model {
        for x in test {
            check_features(tree, x)?;
        }
    }
    report.holdout = Some(holdout_eval(model, test)?);
    if let Model::RecallTree(tree) = model {
        if !test.is_empty() {
            report.ledger = Some(ledger_snapshot(tree, test)?.summary());
        }
    }
    Ok(())
}

/// Data features must stay below the tree's path-feature offset.
fn check_features(tree: &RecallTree, x: &SparseExample) -> CliResult {
    match x.max_index() {
        Some(i) if i >= tree.num_raw_features() => Err(Error::Domain(format!(
            "feature index {i} outside the model's raw feature space of {}",
            tree.num_raw_features()
        ))
        .into()),
        _ => Ok(()),
    }
}

fn cmd_train(args: &TrainArgs) -> CliResult {
    let usage = |e: Error| Failure::Usage(e.to_string());
    args.hyperparams(2).validate().map_err(usage)?;
    let (num_classes, num_features) = args.shape()?;
    if num_classes == 0 {
        return Err(Failure::Usage("--classes must be positive".into()));
    }
    let params = args.hyperparams(num_classes);
    params.validate().map_err(usage)?;
    let mut model = match args.algo {
        Algo::RecallTree => Model::RecallTree(RecallTree::new(num_classes, num_features, params)?),
        Algo::Oaa if args.adagrad => {
            Model::Oaa(OaaModel::with_adagrad(num_classes, args.bits, args.learning_rate)?)
        }
        Algo::Oaa => Model::Oaa(OaaModel::new(num_classes, args.bits, args.learning_rate)?),
    };
    let mut progressive = Tally::default();
    for pass in 0..args.passes {
        let opts = stream_opts(&args.input, args.permute, args.seed.wrapping_add(pass as u64));
        let stream = stream_dataset(&args.data, &opts).map_err(|e| with_context(&args.data, e))?;
        let mut tally = Tally::default();
        for x in stream {
            tally.progressive_step(&mut model, &x?)?;
        }
        if pass == 0 {
            progressive = tally;
        }
    }
    let mut report = EvalReport {
        algo: algo_name(&model),
        progressive: Some(progressive),
        examples_seen: examples_seen(&model),
        ..EvalReport::default()
    };
    if let Some(test) = &args.test {
        let test = read(test, &stream_opts(&args.input, false, args.seed))?;
        thread_pool(args.jobs)?.install(|| evaluate(&model, &test, &mut report))?;
    }
    match &model {
        Model::RecallTree(t) => save_model(t, &args.model),
        Model::Oaa(m) => save_model(m, &args.model),
    }
    .map_err(|e| with_context(&args.model, e))?;
    print_report(&report, args.tsv)
}

fn cmd_predict(args: &PredictArgs) -> CliResult {
    let model = load(&args.model)?;
    let names = args
        .label_names
        .as_ref()
        .map(|p| LabelMap::load(p).map_err(|e| with_context(p, e)))
        .transpose()?;
    let data = read(&args.data, &stream_opts(&args.input, false, DEFAULT_SEED))?;
    if let Model::RecallTree(tree) = &model {
        for x in &data {
            check_features(tree, x)?;
        }
    }
    let predictions = if data.is_empty() {
        Vec::new()
    } else {
        thread_pool(args.jobs)?.install(|| predict_all(&model, &data))?
    };
    let sink: Box<dyn Write> = match &args.output {
        Some(p) => Box::new(File::create(p).map_err(|e| with_context(p, e.into()))?),
        None => Box::new(io::stdout().lock()),
    };
    let mut out = BufWriter::new(sink);
    for class in predictions {
        match names.as_ref().and_then(|n| n.name(class)) {
            Some(name) => writeln!(out, "{name}")?,
            None => writeln!(out, "{class}")?,
        }
    }
    out.flush()?;
    Ok(())
}

fn cmd_eval(args: &EvalArgs) -> CliResult {
    let model = load(&args.model)?;
    let data = read(&args.data, &stream_opts(&args.input, false, DEFAULT_SEED))?;
    let mut report = EvalReport {
        algo: algo_name(&model),
        examples_seen: examples_seen(&model),
        ..EvalReport::default()
    };
    thread_pool(args.jobs)?.install(|| evaluate(&model, &data, &mut report))?;
    print_report(&report, args.tsv)
}

fn cmd_inspect(args: &InspectArgs) -> CliResult {
    let mut out = BufWriter::new(io::stdout().lock());
    let tree = match load(&args.model)? {
        Model::RecallTree(t) => t,
        Model::Oaa(m) => {
            writeln!(out, "algo=oaa classes={} examples_seen={}", m.num_classes(), m.examples_seen())?;
            out.flush()?;
            return Ok(());
        }
    };
    let p = tree.params();
    writeln!(
        out,
        "algo=recall-tree classes={} raw_features={} nodes={} examples_seen={} max_depth={} candidates={} depth_penalty={} bernstein_multiplier={} path_features={}",
        tree.num_classes(),
        tree.num_raw_features(),
        tree.nodes().len(),
        tree.examples_seen(),
        p.max_depth,
        p.num_candidates,
        p.depth_penalty,
        p.bernstein_multiplier,
        p.path_features,
    )?;
    for n in tree.nodes() {
        if args.max_depth.is_some_and(|d| n.depth > d) {
            continue;
        }
        let candidates: Vec<String> = n.candidates().iter().map(u32::to_string).collect();
        writeln!(
            out,
            "node={} depth={} parent={} children={} m={} recall={:.6} bound={:.6} candidates={}",
            n.id,
            n.depth,
            n.parent.map_or("-".into(), |p| p.to_string()),
            n.children.map_or("-".into(), |(l, r)| format!("{l},{r}")),
            n.total(),
            n.recall_hat(),
            tree.recall_bound(n.id),
            candidates.join(","),
        )?;
    }
    if let Some(path) = &args.data {
        let data = read(path, &stream_opts(&args.input, false, DEFAULT_SEED))?;
        for x in &data {
            check_features(&tree, x)?;
        }
        let ledger = ledger_snapshot(&tree, &data)?;
        let holds = ledger.error <= ledger.weighted_entropy + 1e-12;
        write!(out, "{}", ledger.to_text())?;
        writeln!(out, "error_le_weighted_entropy={holds}")?;
        if !holds {
            return Err(Error::Domain("ledger error exceeds weighted entropy".into()).into());
        }
    }
    out.flush()?;
    Ok(())
}

fn cmd_synth(args: &SynthArgs) -> CliResult {
    let spec = SynthSpec {
        noise: args.noise,
        seed: args.seed,
        spread: args.spread,
        zipf_exponent: args.zipf_exponent,
        block_len: args.block_len,
        ..SynthSpec::new(args.structure, args.classes, args.dimensions, args.examples)
    };
    spec.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let data = synth::generate(&spec)?;
    synth::write_dataset(&args.out, &data).map_err(|e| with_context(&args.out, e))?;
    let meta = spec.meta();
    eprintln!(
        "wrote {} examples, {} classes, raw features {} to {}",
        data.len(),
        meta.num_classes,
        meta.num_raw_features,
        args.out.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Inspect(a) => cmd_inspect(a),
        Command::Synth(a) => cmd_synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Lib(Error::Io(e))) if e.kind() == io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("recall-tree: {f}");
            ExitCode::from(f.code())
        }
    }
}
