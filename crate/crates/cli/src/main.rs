use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Mutex;

use clap::{Args, Parser, Subcommand};
use sat_core::bench::{self, AccuracyScope, ExperimentSpec};
use sat_core::data::{self, LabeledDataset};
use sat_core::init::initialize;
use sat_core::pipeline::SatHooks;
use sat_core::solver::IterRecord;
use sat_core::{run_sat, Error};

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_SOLVER: u8 = 3;
const EXIT_GATE: u8 = 4;

#[derive(Parser)]
#[command(name = "sat", version, about = "Smoothing-and-thresholding semi-supervised classification")]
struct Cli {
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset as CSV (features then label).
    Generate(GenerateArgs),
    /// Build (or load) a graph and classify one training split.
    Classify(ClassifyArgs),
    /// Run a repeated-trial experiment from a spec file.
    Bench(BenchArgs),
    /// Build a k-NN graph and write it to the binary cache format.
    Graph(GraphArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Dataset kind; only `three-moon` is generated.
    kind: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = data::THREE_MOON_NOISE)]
    noise: f64,
    #[arg(long)]
    out: PathBuf,
}

/// Flags shared by `classify` and `graph`; each maps onto a spec key.
#[derive(Args, Default)]
struct RunFlags {
    /// key=value file applied before the flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// `three-moon`, a `.csv` path, or `idx:IMAGES,LABELS[,IMAGES,LABELS]`.
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    data_seed: Option<u64>,
    #[arg(long)]
    label_column: Option<String>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, value_parser = ["rbf", "zmp", "cosine"])]
    weight: Option<String>,
    /// RBF denominator: weights are exp(-d^2 / denom).
    #[arg(long)]
    kernel_denom: Option<f64>,
    #[arg(long, value_parser = ["exact", "approximate"])]
    knn: Option<String>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    /// random | nearest | linear-ovr | file:PATH
    #[arg(long)]
    init: Option<String>,
    #[arg(long, group = "training")]
    train_file: Option<PathBuf>,
    #[arg(long, group = "training")]
    train_uniform: Option<usize>,
    #[arg(long, group = "training")]
    train_per_class: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_outer: Option<usize>,
    /// Relative-change tolerance of the inner solver.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    exact_laplacian_block: bool,
    #[arg(long)]
    graph_cache: Option<PathBuf>,
}

impl RunFlags {
    fn pairs(&self) -> Vec<(&'static str, String)> {
        let mut v = Vec::new();
        let mut put = |k: &'static str, s: Option<String>| {
            if let Some(s) = s {
                v.push((k, s));
            }
        };
        put("dataset", self.dataset.clone());
        put("data-seed", self.data_seed.map(|x| x.to_string()));
        put("label-column", self.label_column.clone());
        put("k", self.k.map(|x| x.to_string()));
        put("weight", self.weight.clone());
        put("kernel-denom", self.kernel_denom.map(|x| x.to_string()));
        put("knn", self.knn.clone());
        put("alpha", self.alpha.map(|x| x.to_string()));
        put("beta", self.beta.map(|x| x.to_string()));
        put("init", self.init.clone());
        put("train-file", self.train_file.as_ref().map(|p| p.display().to_string()));
        put("train-uniform", self.train_uniform.map(|x| x.to_string()));
        put("train-per-class", self.train_per_class.clone());
        put("seed", self.seed.map(|x| x.to_string()));
        put("max-outer", self.max_outer.map(|x| x.to_string()));
        put("tol", self.tol.map(|x| x.to_string()));
        put("exact-laplacian-block", self.exact_laplacian_block.then(|| "true".into()));
        put("graph-cache", self.graph_cache.as_ref().map(|p| p.display().to_string()));
        v
    }

    /// Defaults, then the config file, then flags.
    fn resolve(&self) -> Result<ExperimentSpec, Failure> {
        let mut spec = ExperimentSpec::default();
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
            spec.apply_text(&text, path.parent().unwrap_or(Path::new(".")))
                .map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
        }
        for (k, v) in self.pairs() {
            spec.set(k, &v, Path::new(".")).map_err(|m| Failure::usage(format!("--{k}: {m}")))?;
        }
        spec.validate().map_err(|e| Failure::usage(e.to_string()))?;
        Ok(spec)
    }
}

#[derive(Args)]
struct ClassifyArgs {
    #[command(flatten)]
    run: RunFlags,
    /// Predicted labels, one per line in node order.
    #[arg(long)]
    out: PathBuf,
    /// Line-delimited JSON run report.
    #[arg(long)]
    report: Option<PathBuf>,
    /// CSV of every inner solver iteration.
    #[arg(long)]
    diagnostics: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    spec: PathBuf,
    /// Line-delimited JSON report.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Convergence traces as CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Override a spec key, e.g. `--set kernel-denom=18`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct GraphArgs {
    #[command(flatten)]
    run: RunFlags,
    #[arg(long)]
    out: PathBuf,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    fn data(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_DATA,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::SolverStall { .. } => EXIT_SOLVER,
            _ => EXIT_DATA,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::data(e.to_string())
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}

fn generate(args: &GenerateArgs) -> Result<(), Failure> {
    if args.kind != "three-moon" {
        return Err(Failure::usage(format!("unknown dataset kind {:?} (three-moon)", args.kind)));
    }
    let ds = data::gen_three_moon_with_noise(args.seed, args.noise)?;
    data::write_csv(&ds, create(&args.out)?)?;
    eprintln!("wrote {} points to {}", ds.len(), args.out.display());
    Ok(())
}

fn load(spec: &ExperimentSpec) -> Result<LabeledDataset, Failure> {
    Ok(spec.dataset.load()?)
}

fn json_line<W: Write>(out: &mut W, value: serde_json::Value) -> io::Result<()> {
    writeln!(out, "{value}")
}

fn classify(args: &ClassifyArgs) -> Result<(), Failure> {
    let spec = args.run.resolve()?;
    let ds = load(&spec)?;
    let graph = bench::graph_with_cache(&ds, &spec.graph_config()?, spec.graph_cache.as_deref())?;
    let split = spec.split_for(&ds, spec.seed_base)?;
    let init = initialize(&spec.init.method(spec.seed_base), &ds.cloud, &split)?;
    if let Some(w) = &init.warning {
        eprintln!("warning: {w}");
    }

    let records: Mutex<Vec<(usize, IterRecord)>> = Mutex::new(Vec::new());
    let sink = |outer: usize, r: &IterRecord| records.lock().expect("diagnostics lock").push((outer, *r));
    let hooks = SatHooks {
        truth: Some(&ds.labels),
        diagnostics: if args.diagnostics.is_some() { Some(&sink) } else { None },
    };
    let outcome = run_sat(&graph, &split, &init.labels, &spec.sat_config(), hooks)?;

    let mut out = create(&args.out)?;
    for l in outcome.labels.labels() {
        writeln!(out, "{l}")?;
    }
    out.flush()?;

    let acc = bench::accuracy(&outcome.labels, &ds.labels, &split, AccuracyScope::All);
    let acc_test = bench::accuracy(&outcome.labels, &ds.labels, &split, AccuracyScope::TestOnly);
    if let Some(path) = &args.report {
        let mut r = create(path)?;
        json_line(
            &mut r,
            serde_json::json!({
                "record": "run",
                "version": env!("CARGO_PKG_VERSION"),
                "config": spec,
                "num_points": ds.len(),
                "num_classes": ds.num_classes,
                "num_train": split.num_train(),
                "init_accuracy": outcome.init_accuracy,
                "init_warning": init.warning,
                "corrected_rows": init.corrected_rows,
            }),
        )?;
        for rec in &outcome.history {
            let mut v = serde_json::to_value(rec).map_err(|e| Failure::data(e.to_string()))?;
            v["record"] = "outer".into();
            json_line(&mut r, v)?;
        }
        json_line(
            &mut r,
            serde_json::json!({
                "record": "result",
                "converged": outcome.converged,
                "truncated": outcome.truncated,
                "outer_iterations": outcome.outer_iterations(),
                "accuracy": acc,
                "accuracy_test": acc_test,
            }),
        )?;
        r.flush()?;
    }
    if let Some(path) = &args.diagnostics {
        let mut recs = records.into_inner().expect("diagnostics lock");
        recs.sort_by_key(|(o, r)| (*o, r.class, r.iter));
        let mut d = create(path)?;
        writeln!(d, "outer,class,iter,objective,residual,tau,sigma")?;
        for (o, r) in recs {
            writeln!(d, "{o},{},{},{},{},{},{}", r.class, r.iter, r.objective, r.residual, r.tau, r.sigma)?;
        }
        d.flush()?;
    }

    eprintln!(
        "sat {}: {} points, {} training; init accuracy {:.4}; accuracy {:.4} (test-only {:.4}) after {} outer iterations{}",
        env!("CARGO_PKG_VERSION"),
        ds.len(),
        split.num_train(),
        outcome.init_accuracy.unwrap_or(f64::NAN),
        acc,
        acc_test,
        outcome.outer_iterations(),
        if outcome.truncated { " (truncated)" } else { "" }
    );
    Ok(())
}

fn bench_cmd(args: &BenchArgs) -> Result<(), Failure> {
    let text = std::fs::read_to_string(&args.spec).map_err(|e| Failure::data(format!("{}: {e}", args.spec.display())))?;
    let base = args.spec.parent().unwrap_or(Path::new("."));
    let mut spec = ExperimentSpec::default();
    spec.apply_text(&text, base)
        .map_err(|e| Failure::data(format!("{}: {e}", args.spec.display())))?;
    for o in &args.overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| Failure::usage(format!("--set expects KEY=VALUE, got {o:?}")))?;
        spec.set(k.trim(), v.trim(), Path::new(".")).map_err(|m| Failure::usage(format!("--set {o}: {m}")))?;
    }
    spec.validate().map_err(|e| Failure::usage(e.to_string()))?;

    let report = bench::run_experiment(&spec)?;
    print!("{}", report.summary_table());
    if let Some(path) = &args.report {
        let mut w = create(path)?;
        report.write_jsonl(&mut w)?;
        w.flush()?;
    }
    if let Some(path) = &args.trace {
        let mut w = create(path)?;
        report.write_trace_csv(&mut w)?;
        w.flush()?;
    }
    if !report.passed() {
        return Err(Failure {
            code: EXIT_GATE,
            message: format!("experiment {} missed an acceptance gate", spec.name),
        });
    }
    Ok(())
}

fn graph_cmd(args: &GraphArgs) -> Result<(), Failure> {
    let spec = args.run.resolve()?;
    let ds = load(&spec)?;
    let graph = sat_core::build_graph(&ds.cloud, &spec.graph_config()?)?;
    sat_core::graph::cache::save(&graph, &args.out)?;
    eprintln!(
        "graph: {} nodes, k = {}, {} directed edges, max degree {:.4}; wrote {}",
        graph.n(),
        graph.k(),
        graph.num_directed_edges(),
        graph.max_degree(),
        args.out.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    }
    let result = match &cli.cmd {
        Command::Generate(a) => generate(a),
        Command::Classify(a) => classify(a),
        Command::Bench(a) => bench_cmd(a),
        Command::Graph(a) => graph_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
