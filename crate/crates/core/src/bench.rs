//! Repeated-trial accuracy experiments driven by key=value spec files.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::data::{self, LabelColumn, LabeledDataset, SamplingPlan};
use crate::error::{Error, Result};
use crate::graph::{self, build_graph, DataSplit, Graph, GraphConfig, KnnMode, WeightKind};
use crate::init::{initialize, InitMethod};
use crate::pipeline::{run_sat, LabelMatrix, SatConfig, SatHooks};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum AccuracyScope {
    #[default]
    All,
    TestOnly,
}

/// Fraction of correctly labeled points in `scope`. An empty scope counts as
/// fully correct.
pub fn accuracy(pred: &LabelMatrix, truth: &[usize], split: &DataSplit, scope: AccuracyScope) -> f64 {
    assert_eq!(pred.n(), truth.len(), "prediction and truth lengths differ");
    let labels = pred.labels();
    let (hits, total) = match scope {
        AccuracyScope::All => (labels.iter().zip(truth).filter(|(a, b)| a == b).count(), truth.len()),
        AccuracyScope::TestOnly => {
            let ids = split.test_ids();
            (ids.iter().filter(|&&i| labels[i] == truth[i]).count(), ids.len())
        }
    };
    if total == 0 {
        1.0
    } else {
        hits as f64 / total as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DatasetSource {
    ThreeMoon { seed: u64, noise: f64 },
    Csv { path: PathBuf, label_column: usize },
    Idx { pairs: Vec<(PathBuf, PathBuf)> },
}

impl DatasetSource {
    pub fn load(&self) -> Result<LabeledDataset> {
        match self {
            DatasetSource::ThreeMoon { seed, noise } => data::gen_three_moon_with_noise(*seed, *noise),
            DatasetSource::Csv { path, label_column } => {
                let col = if *label_column == usize::MAX {
                    LabelColumn::Last
                } else {
                    LabelColumn::Index(*label_column)
                };
                Ok(data::load_csv(path, col)?.dataset)
            }
            DatasetSource::Idx { pairs } => {
                let refs: Vec<(&Path, &Path)> = pairs.iter().map(|(a, b)| (a.as_path(), b.as_path())).collect();
                data::load_mnist_pairs(&refs)
            }
        }
    }
}

/// Initializer choice without a seed; trials supply their own.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitChoice {
    Random,
    NearestNeighbor,
    LinearOvr,
    File(PathBuf),
}

impl InitChoice {
    pub fn parse(s: &str) -> std::result::Result<Self, String> {
        match s {
            "random" => Ok(InitChoice::Random),
            "nearest" | "nearest-neighbor" => Ok(InitChoice::NearestNeighbor),
            "linear-ovr" | "svm" => Ok(InitChoice::LinearOvr),
            _ => match s.strip_prefix("file:") {
                Some(p) if !p.is_empty() => Ok(InitChoice::File(PathBuf::from(p))),
                _ => Err(format!("unknown initializer {s:?} (random|nearest|linear-ovr|file:PATH)")),
            },
        }
    }

    pub fn method(&self, seed: u64) -> InitMethod {
        match self {
            InitChoice::Random => InitMethod::Random { seed },
            InitChoice::NearestNeighbor => InitMethod::NearestNeighbor,
            InitChoice::LinearOvr => InitMethod::linear_ovr(seed),
            InitChoice::File(p) => InitMethod::External(p.clone()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainingPlan {
    Uniform(usize),
    PerClass(Vec<usize>),
    /// Explicit `id label` lines.
    File(PathBuf),
}

/// Thresholds checked after all trials.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Gates {
    pub min_mean_accuracy: Option<f64>,
    pub max_mean_outer: Option<f64>,
    pub max_outer: Option<usize>,
    pub max_trial_secs: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentSpec {
    pub name: String,
    pub dataset: DatasetSource,
    pub k: usize,
    pub weight: String,
    /// Raw RBF denominator `2ξ`.
    pub kernel_denom: f64,
    pub zmp_rank: usize,
    pub knn: String,
    pub alpha: f64,
    pub beta: f64,
    pub beta_growth: f64,
    pub max_outer: usize,
    pub tol: f64,
    pub max_inner: usize,
    pub exact_laplacian_block: bool,
    pub init: InitChoice,
    pub training: TrainingPlan,
    pub trials: usize,
    pub seed_base: u64,
    pub graph_cache: Option<PathBuf>,
    pub gates: Gates,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            name: "experiment".into(),
            dataset: DatasetSource::ThreeMoon {
                seed: 0,
                noise: data::THREE_MOON_NOISE,
            },
            k: 10,
            weight: "rbf".into(),
            kernel_denom: 6.0,
            zmp_rank: 7,
            knn: "exact".into(),
            alpha: 1.0,
            beta: 1e-2,
            beta_growth: 2.0,
            max_outer: 20,
            tol: 1e-6,
            max_inner: 300,
            exact_laplacian_block: false,
            init: InitChoice::LinearOvr,
            training: TrainingPlan::Uniform(75),
            trials: 1,
            seed_base: 0,
            graph_cache: None,
            gates: Gates::default(),
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> std::result::Result<T, String> {
    v.parse().map_err(|_| format!("invalid value {v:?} for {key}"))
}

fn parse_bool(key: &str, v: &str) -> std::result::Result<bool, String> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(format!("invalid boolean {v:?} for {key}")),
    }
}

/// Splits `a,b,c` into numbers.
pub fn parse_counts(key: &str, v: &str) -> std::result::Result<Vec<usize>, String> {
    v.split(',').map(|s| parse_num(key, s.trim())).collect()
}

impl ExperimentSpec {
    pub const KEYS: &'static [&'static str] = &[
        "name",
        "dataset",
        "data-seed",
        "noise",
        "data-path",
        "label-column",
        "idx-pairs",
        "k",
        "weight",
        "kernel-denom",
        "zmp-rank",
        "knn",
        "alpha",
        "beta",
        "beta-growth",
        "max-outer",
        "tol",
        "max-inner",
        "exact-laplacian-block",
        "init",
        "train-uniform",
        "train-per-class",
        "train-file",
        "trials",
        "seed",
        "graph-cache",
        "gate-min-accuracy",
        "gate-max-mean-outer",
        "gate-max-outer",
        "gate-max-trial-secs",
    ];

    /// Sets one key. `base` resolves relative paths. Underscores in keys are
    /// accepted as dashes.
    pub fn set(&mut self, key: &str, value: &str, base: &Path) -> std::result::Result<(), String> {
        let key = key.replace('_', "-");
        let key = key.as_str();
        let path = |v: &str| {
            let p = PathBuf::from(v);
            if p.is_absolute() {
                p
            } else {
                base.join(p)
            }
        };
        match key {
            "name" => self.name = value.to_owned(),
            "dataset" => {
                if let Some(pairs) = value.strip_prefix("idx:") {
                    self.dataset = DatasetSource::Idx { pairs: Vec::new() };
                    return self.set("idx-pairs", pairs, base);
                }
                self.dataset = match value {
                    "three-moon" | "threemoon" => DatasetSource::ThreeMoon {
                        seed: 0,
                        noise: data::THREE_MOON_NOISE,
                    },
                    "csv" => DatasetSource::Csv {
                        path: PathBuf::new(),
                        label_column: usize::MAX,
                    },
                    "idx" | "mnist" => DatasetSource::Idx { pairs: Vec::new() },
                    other => match other.strip_suffix(".csv") {
                        Some(_) => DatasetSource::Csv {
                            path: path(other),
                            label_column: usize::MAX,
                        },
                        None => return Err(format!("unknown dataset {other:?} (three-moon|PATH.csv|idx:IMAGES,LABELS,...)")),
                    },
                }
            }
            "data-seed" => match &mut self.dataset {
                DatasetSource::ThreeMoon { seed, .. } => *seed = parse_num(key, value)?,
                _ => return Err("data-seed applies to three-moon only".into()),
            },
            "noise" => match &mut self.dataset {
                DatasetSource::ThreeMoon { noise, .. } => *noise = parse_num(key, value)?,
                _ => return Err("noise applies to three-moon only".into()),
            },
            "data-path" => match &mut self.dataset {
                DatasetSource::Csv { path: p, .. } => *p = path(value),
                _ => return Err("data-path applies to csv datasets only".into()),
            },
            "label-column" => match &mut self.dataset {
                DatasetSource::Csv { label_column, .. } => {
                    *label_column = if value == "last" { usize::MAX } else { parse_num(key, value)? }
                }
                _ => return Err("label-column applies to csv datasets only".into()),
            },
            "idx-pairs" => match &mut self.dataset {
                DatasetSource::Idx { pairs } => {
                    let files: Vec<&str> = value.split(',').map(str::trim).collect();
                    if files.len() % 2 != 0 || files.is_empty() {
                        return Err("idx-pairs needs images,labels[,images,labels...]".into());
                    }
                    *pairs = files.chunks(2).map(|c| (path(c[0]), path(c[1]))).collect();
                }
                _ => return Err("idx-pairs applies to idx datasets only".into()),
            },
            "k" => self.k = parse_num(key, value)?,
            "weight" => match value {
                "rbf" | "zmp" | "cosine" => self.weight = value.to_owned(),
                _ => return Err(format!("unknown weight {value:?} (rbf|zmp|cosine)")),
            },
            "kernel-denom" => self.kernel_denom = parse_num(key, value)?,
            "zmp-rank" => self.zmp_rank = parse_num(key, value)?,
            "knn" => match value {
                "exact" | "approximate" => self.knn = value.to_owned(),
                _ => return Err(format!("unknown knn mode {value:?} (exact|approximate)")),
            },
            "alpha" => self.alpha = parse_num(key, value)?,
            "beta" => self.beta = parse_num(key, value)?,
            "beta-growth" => self.beta_growth = parse_num(key, value)?,
            "max-outer" => self.max_outer = parse_num(key, value)?,
            "tol" => self.tol = parse_num(key, value)?,
            "max-inner" => self.max_inner = parse_num(key, value)?,
            "exact-laplacian-block" => self.exact_laplacian_block = parse_bool(key, value)?,
            "init" => self.init = InitChoice::parse(value)?,
            "train-uniform" => self.training = TrainingPlan::Uniform(parse_num(key, value)?),
            "train-per-class" => self.training = TrainingPlan::PerClass(parse_counts(key, value)?),
            "train-file" => self.training = TrainingPlan::File(path(value)),
            "trials" => self.trials = parse_num(key, value)?,
            "seed" => self.seed_base = parse_num(key, value)?,
            "graph-cache" => self.graph_cache = Some(path(value)),
            "gate-min-accuracy" => self.gates.min_mean_accuracy = Some(parse_num(key, value)?),
            "gate-max-mean-outer" => self.gates.max_mean_outer = Some(parse_num(key, value)?),
            "gate-max-outer" => self.gates.max_outer = Some(parse_num(key, value)?),
            "gate-max-trial-secs" => self.gates.max_trial_secs = Some(parse_num(key, value)?),
            _ => return Err(format!("unknown key {key:?}")),
        }
        Ok(())
    }

    /// Parses `key = value` lines on top of the defaults. `#` starts a comment.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut spec = ExperimentSpec::default();
        spec.apply_text(text, base)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn apply_text(&mut self, text: &str, base: &Path) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(i + 1, None, format!("expected key = value, got {line:?}")))?;
            self.set(key.trim(), value.trim(), base)
                .map_err(|m| Error::parse(i + 1, None, m))?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::invalid("trials must be >= 1"));
        }
        if self.k < 2 {
            return Err(Error::invalid("k must be >= 2"));
        }
        if let DatasetSource::Idx { pairs } = &self.dataset {
            if pairs.is_empty() {
                return Err(Error::invalid("idx dataset needs idx-pairs"));
            }
        }
        if let DatasetSource::Csv { path, .. } = &self.dataset {
            if path.as_os_str().is_empty() {
                return Err(Error::invalid("csv dataset needs data-path"));
            }
        }
        self.weight_kind()?.validate()?;
        self.sat_config().validate()
    }

    pub fn weight_kind(&self) -> Result<WeightKind> {
        let w = match self.weight.as_str() {
            "rbf" => WeightKind::rbf_with_denominator(self.kernel_denom),
            "zmp" => WeightKind::ZelnikManorPerona {
                var_neighbor: self.zmp_rank,
            },
            "cosine" => WeightKind::Cosine,
            other => return Err(Error::invalid(format!("unknown weight {other:?}"))),
        };
        Ok(w)
    }

    pub fn graph_config(&self) -> Result<GraphConfig> {
        let mut cfg = GraphConfig::new(self.k, self.weight_kind()?);
        cfg.mode = if self.knn == "approximate" {
            KnnMode::Approximate
        } else {
            KnnMode::Exact
        };
        Ok(cfg)
    }

    pub fn sat_config(&self) -> SatConfig {
        let mut cfg = SatConfig::new(self.alpha, self.beta);
        cfg.beta_growth = self.beta_growth;
        cfg.max_outer_iters = self.max_outer;
        cfg.solver.rel_tol = self.tol;
        cfg.solver.max_iters = self.max_inner;
        cfg.solver.exact_laplacian_block = self.exact_laplacian_block;
        cfg
    }

    /// Training split for one trial seed.
    pub fn split_for(&self, ds: &LabeledDataset, seed: u64) -> Result<DataSplit> {
        match &self.training {
            TrainingPlan::Uniform(total) => data::sample_training(ds, &SamplingPlan::Uniform { total: *total, seed }),
            TrainingPlan::PerClass(counts) => data::sample_training(
                ds,
                &SamplingPlan::PerClass {
                    counts: counts.clone(),
                    seed,
                },
            ),
            TrainingPlan::File(path) => read_train_file(path, ds.len(), ds.num_classes),
        }
    }
}

/// Reads `id label` (whitespace or comma separated) lines.
pub fn read_train_file(path: &Path, n: usize, num_classes: usize) -> Result<DataSplit> {
    let text = std::fs::read_to_string(path)?;
    parse_train_list(&text, n, num_classes)
}

pub fn parse_train_list(text: &str, n: usize, num_classes: usize) -> Result<DataSplit> {
    let mut train = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parts: Vec<&str> = line.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty()).collect();
        if parts.len() != 2 {
            return Err(Error::parse(i + 1, None, "expected `id label`"));
        }
        let id = parts[0]
            .parse()
            .map_err(|_| Error::parse(i + 1, Some(1), format!("bad node id {:?}", parts[0])))?;
        let label = parts[1]
            .parse()
            .map_err(|_| Error::parse(i + 1, Some(2), format!("bad label {:?}", parts[1])))?;
        train.push((id, label));
    }
    DataSplit::new(n, num_classes, train)
}

/// Loads the graph from `cache` if it exists, otherwise builds it and writes
/// the cache.
pub fn graph_with_cache(ds: &LabeledDataset, cfg: &GraphConfig, cache: Option<&Path>) -> Result<Graph> {
    if let Some(path) = cache {
        if path.exists() {
            let g = graph::cache::load(path)?;
            if g.n() != ds.len() || g.k() != cfg.k {
                return Err(Error::Format(format!(
                    "cached graph {} has n = {}, k = {}; expected n = {}, k = {}",
                    path.display(),
                    g.n(),
                    g.k(),
                    ds.len(),
                    cfg.k
                )));
            }
            return Ok(g);
        }
    }
    let g = build_graph(&ds.cloud, cfg)?;
    if let Some(path) = cache {
        graph::cache::save(&g, path)?;
    }
    Ok(g)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TracePoint {
    pub iter: usize,
    pub accuracy: f64,
    pub label_changes: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct TrialResult {
    pub trial: usize,
    pub seed: u64,
    pub accuracy: f64,
    pub accuracy_test: f64,
    pub init_accuracy: f64,
    pub outer_iters: usize,
    pub converged: bool,
    pub truncated: bool,
    pub wall_secs: f64,
    /// Iteration 0 is the initialization.
    pub trace: Vec<TracePoint>,
    pub error: Option<String>,
}

impl TrialResult {
    /// Equality ignoring wall time.
    pub fn same_outcome(&self, other: &TrialResult) -> bool {
        self.seed == other.seed
            && self.accuracy == other.accuracy
            && self.accuracy_test == other.accuracy_test
            && self.init_accuracy == other.init_accuracy
            && self.outer_iters == other.outer_iters
            && self.converged == other.converged
            && self.trace == other.trace
            && self.error == other.error
    }

    fn failed(trial: usize, seed: u64, wall_secs: f64, e: &Error) -> Self {
        TrialResult {
            trial,
            seed,
            accuracy: 0.0,
            accuracy_test: 0.0,
            init_accuracy: 0.0,
            outer_iters: 0,
            converged: false,
            truncated: false,
            wall_secs,
            trace: Vec::new(),
            error: Some(e.to_string()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub trials: usize,
    pub failed: usize,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub mean_accuracy_test: f64,
    pub mean_outer: f64,
    pub max_outer: usize,
    pub mean_secs: f64,
    pub max_secs: f64,
    pub final_ge_init: usize,
}

impl Summary {
    /// Aggregates over all trials; failed trials count with accuracy 0.
    pub fn from_trials(trials: &[TrialResult]) -> Self {
        let n = trials.len() as f64;
        let mean = |f: &dyn Fn(&TrialResult) -> f64| trials.iter().map(f).sum::<f64>() / n;
        let mean_accuracy = mean(&|t| t.accuracy);
        let var = if trials.len() > 1 {
            trials.iter().map(|t| (t.accuracy - mean_accuracy).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Summary {
            trials: trials.len(),
            failed: trials.iter().filter(|t| t.error.is_some()).count(),
            mean_accuracy,
            std_accuracy: var.sqrt(),
            mean_accuracy_test: mean(&|t| t.accuracy_test),
            mean_outer: mean(&|t| t.outer_iters as f64),
            max_outer: trials.iter().map(|t| t.outer_iters).max().unwrap_or(0),
            mean_secs: mean(&|t| t.wall_secs),
            max_secs: trials.iter().map(|t| t.wall_secs).fold(0.0, f64::max),
            final_ge_init: trials
                .iter()
                .filter(|t| t.error.is_none() && t.accuracy >= t.init_accuracy)
                .count(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GateResult {
    pub gate: &'static str,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl Gates {
    pub fn check(&self, s: &Summary) -> Vec<GateResult> {
        let mut out = Vec::new();
        let mut push = |gate, value: f64, threshold: f64, passed: bool| {
            out.push(GateResult {
                gate,
                value,
                threshold,
                passed,
            })
        };
        if s.failed > 0 {
            push("no-failed-trials", s.failed as f64, 0.0, false);
        }
        if let Some(t) = self.min_mean_accuracy {
            push("min-mean-accuracy", s.mean_accuracy, t, s.mean_accuracy >= t);
        }
        if let Some(t) = self.max_mean_outer {
            push("max-mean-outer", s.mean_outer, t, s.mean_outer <= t);
        }
        if let Some(t) = self.max_outer {
            push("max-outer", s.max_outer as f64, t as f64, s.max_outer <= t);
        }
        if let Some(t) = self.max_trial_secs {
            push("max-trial-secs", s.max_secs, t, s.max_secs <= t);
        }
        out
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ExperimentReport {
    pub version: &'static str,
    pub spec: ExperimentSpec,
    pub num_points: usize,
    pub num_classes: usize,
    pub graph_secs: f64,
    pub trials: Vec<TrialResult>,
    pub summary: Summary,
    pub gates: Vec<GateResult>,
}

impl ExperimentReport {
    pub fn passed(&self) -> bool {
        self.gates.iter().all(|g| g.passed)
    }

    /// One JSON object per line: a header, each trial, the summary, each gate.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        let header = serde_json::json!({
            "record": "experiment",
            "version": self.version,
            "spec": self.spec,
            "num_points": self.num_points,
            "num_classes": self.num_classes,
            "graph_secs": self.graph_secs,
        });
        writeln!(out, "{header}")?;
        for t in &self.trials {
            let mut v = serde_json::to_value(t).map_err(|e| Error::Format(e.to_string()))?;
            v["record"] = "trial".into();
            writeln!(out, "{v}")?;
        }
        let mut v = serde_json::to_value(&self.summary).map_err(|e| Error::Format(e.to_string()))?;
        v["record"] = "summary".into();
        writeln!(out, "{v}")?;
        for g in &self.gates {
            let mut v = serde_json::to_value(g).map_err(|e| Error::Format(e.to_string()))?;
            v["record"] = "gate".into();
            writeln!(out, "{v}")?;
        }
        Ok(())
    }

    /// `trial,seed,iter,accuracy,label_changes` rows.
    pub fn write_trace_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "trial,seed,iter,accuracy,label_changes")?;
        for t in &self.trials {
            for p in &t.trace {
                writeln!(out, "{},{},{},{},{}", t.trial, t.seed, p.iter, p.accuracy, p.label_changes)?;
            }
        }
        Ok(())
    }

    pub fn summary_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "experiment {} (N = {}, K = {})", self.spec.name, self.num_points, self.num_classes);
        let _ = writeln!(s, "{:>5} {:>6} {:>9} {:>9} {:>9} {:>6} {:>8}", "trial", "seed", "init", "acc", "acc-test", "outer", "secs");
        for t in &self.trials {
            match &t.error {
                Some(e) => {
                    let _ = writeln!(s, "{:>5} {:>6} failed: {e}", t.trial, t.seed);
                }
                None => {
                    let _ = writeln!(
                        s,
                        "{:>5} {:>6} {:>9.4} {:>9.4} {:>9.4} {:>6} {:>8.3}",
                        t.trial, t.seed, t.init_accuracy, t.accuracy, t.accuracy_test, t.outer_iters, t.wall_secs
                    );
                }
            }
        }
        let m = &self.summary;
        let _ = writeln!(
            s,
            "mean accuracy {:.4} (std {:.4}, test-only {:.4}); mean outer {:.2} (max {}); mean {:.3} s/trial; graph {:.3} s",
            m.mean_accuracy, m.std_accuracy, m.mean_accuracy_test, m.mean_outer, m.max_outer, m.mean_secs, self.graph_secs
        );
        for g in &self.gates {
            let _ = writeln!(
                s,
                "gate {:<20} {} (value {:.4}, threshold {})",
                g.gate,
                if g.passed { "PASS" } else { "FAIL" },
                g.value,
                g.threshold
            );
        }
        s
    }
}

/// Runs one trial on a prebuilt graph.
pub fn run_trial(spec: &ExperimentSpec, ds: &LabeledDataset, graph: &Graph, trial: usize) -> TrialResult {
    let seed = spec.seed_base + trial as u64;
    let start = Instant::now();
    let run = || -> Result<TrialResult> {
        let split = spec.split_for(ds, seed)?;
        let init = initialize(&spec.init.method(seed), &ds.cloud, &split)?;
        let outcome = run_sat(
            graph,
            &split,
            &init.labels,
            &spec.sat_config(),
            SatHooks {
                truth: Some(&ds.labels),
                diagnostics: None,
            },
        )?;
        let init_accuracy = accuracy(&init.labels, &ds.labels, &split, AccuracyScope::All);
        let mut trace = vec![TracePoint {
            iter: 0,
            accuracy: init_accuracy,
            label_changes: 0,
        }];
        trace.extend(outcome.history.iter().map(|r| TracePoint {
            iter: r.iter,
            accuracy: r.accuracy.unwrap_or(f64::NAN),
            label_changes: r.label_changes,
        }));
        Ok(TrialResult {
            trial,
            seed,
            accuracy: accuracy(&outcome.labels, &ds.labels, &split, AccuracyScope::All),
            accuracy_test: accuracy(&outcome.labels, &ds.labels, &split, AccuracyScope::TestOnly),
            init_accuracy,
            outer_iters: outcome.outer_iterations(),
            converged: outcome.converged,
            truncated: outcome.truncated,
            wall_secs: start.elapsed().as_secs_f64(),
            trace,
            error: None,
        })
    };
    run().unwrap_or_else(|e| {
        log::error!("trial {trial} (seed {seed}) failed: {e}");
        TrialResult::failed(trial, seed, start.elapsed().as_secs_f64(), &e)
    })
}

/// Runs all trials of `spec` on an already loaded dataset.
pub fn run_experiment_on(spec: &ExperimentSpec, ds: &LabeledDataset) -> Result<ExperimentReport> {
    spec.validate()?;
    let start = Instant::now();
    let graph = graph_with_cache(ds, &spec.graph_config()?, spec.graph_cache.as_deref())?;
    let graph_secs = start.elapsed().as_secs_f64();
    log::info!("graph built in {graph_secs:.3} s");
    let trials: Vec<TrialResult> = (0..spec.trials)
        .into_par_iter()
        .map(|t| run_trial(spec, ds, &graph, t))
        .collect();
    let summary = Summary::from_trials(&trials);
    let gates = spec.gates.check(&summary);
    Ok(ExperimentReport {
        version: env!("CARGO_PKG_VERSION"),
        spec: spec.clone(),
        num_points: ds.len(),
        num_classes: ds.num_classes,
        graph_secs,
        trials,
        summary,
        gates,
    })
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    spec.validate()?;
    let ds = spec.dataset.load()?;
    run_experiment_on(spec, &ds)
}
