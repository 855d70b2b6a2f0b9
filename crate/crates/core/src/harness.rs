//! Benchmark orchestration: per-method pipelines, evaluation against the
//! planted labels, and mean ± std aggregation over trials.

use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoder::{EncoderConfig, EncoderKind, InitKind};
use crate::error::{Error, Result};
use crate::graph::{ssbm_generate, Graph, LabelVector, Mode, SsbmParams};
use crate::louvain::louvain;
use crate::metrics::{hard_modularity, nmi, overlap};
use crate::objective::{LossConfig, RegMode};
use crate::spectral::{bethe_hessian_cluster, bethe_hessian_embedding, RMode, SpectralEmbedding};
use crate::trainer::{train_on_graph, TrainConfig, TrainHistory};
use crate::{io, seed};

pub const SCHEMA: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    TrueLabels,
    BetheHessian,
    Louvain,
    GnnRandom,
    GnnBh,
    AttentionRandom,
    AttentionBh,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::TrueLabels,
        Method::BetheHessian,
        Method::Louvain,
        Method::GnnRandom,
        Method::GnnBh,
        Method::AttentionRandom,
        Method::AttentionBh,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::TrueLabels => "true-labels",
            Method::BetheHessian => "bethe-hessian",
            Method::Louvain => "louvain",
            Method::GnnRandom => "gnn-random",
            Method::GnnBh => "gnn-bh",
            Method::AttentionRandom => "attention-random",
            Method::AttentionBh => "attention-bh",
        }
    }

    fn stream(self) -> u64 {
        Method::ALL.iter().position(|&m| m == self).unwrap() as u64 + 100
    }

    /// Encoder and input kind for the neural methods.
    pub fn encoder(self) -> Option<(EncoderKind, InitKind)> {
        match self {
            Method::GnnRandom => Some((EncoderKind::Gcn, InitKind::Random)),
            Method::GnnBh => Some((EncoderKind::Gcn, InitKind::BetheHessian)),
            Method::AttentionRandom => Some((EncoderKind::Attention, InitKind::Random)),
            Method::AttentionBh => Some((EncoderKind::Attention, InitKind::BetheHessian)),
            _ => None,
        }
    }

    fn needs_spectral(self) -> bool {
        matches!(self, Method::BetheHessian | Method::GnnBh | Method::AttentionBh)
    }

    /// Louvain's community count is unconstrained, so overlap is undefined.
    pub fn reports_overlap(self) -> bool {
        self != Method::Louvain
    }

    /// Louvain only merges neighbors and cannot express disassortative blocks.
    pub fn applicable(self, mode: Mode) -> bool {
        !(self == Method::Louvain && mode == Mode::Disassociative)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown method `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Assoc,
    Disassoc,
}

impl Preset {
    pub fn params(self) -> SsbmParams {
        match self {
            Preset::Assoc => SsbmParams::associative(),
            Preset::Disassoc => SsbmParams::disassociative(),
        }
    }

    pub fn mode(self) -> Mode {
        match self {
            Preset::Assoc => Mode::Associative,
            Preset::Disassoc => Mode::Disassociative,
        }
    }
}

/// Knobs shared by every pipeline. Defaults follow the benchmark settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MethodOptions {
    pub lambda: f64,
    pub layers: usize,
    pub heads: usize,
    pub hidden: usize,
    pub restarts: usize,
    pub learning_rate: f64,
    pub max_steps: usize,
    pub patience: usize,
    pub r_mode: RMode,
    pub reg_mode: RegMode,
}

impl Default for MethodOptions {
    fn default() -> Self {
        MethodOptions {
            lambda: 0.5,
            layers: 2,
            heads: 3,
            hidden: 48,
            restarts: 3,
            learning_rate: 1e-3,
            max_steps: 300,
            patience: 30,
            r_mode: RMode::Standard,
            reg_mode: RegMode::Normalized,
        }
    }
}

impl MethodOptions {
    pub fn train_config(&self, method: Method, mode: Mode, k: usize, seed: u64) -> Option<TrainConfig> {
        let (kind, init) = method.encoder()?;
        let encoder = EncoderConfig {
            layers: self.layers,
            heads: self.heads,
            hidden: self.hidden,
            ..EncoderConfig::new(k, kind, init)
        };
        let loss = LossConfig { mode, lambda: self.lambda, clusters: k, reg_mode: self.reg_mode };
        Some(TrainConfig {
            learning_rate: self.learning_rate,
            max_steps: self.max_steps,
            patience: self.patience,
            restarts: self.restarts,
            ..TrainConfig::new(encoder, loss, seed)
        })
    }
}

/// Output of one clustering pipeline on one graph.
#[derive(Debug, Clone)]
pub struct MethodOutput {
    pub labels: LabelVector,
    /// Soft modularity of the returned assignment (neural methods only).
    pub soft_modularity: Option<f64>,
    pub r: Option<f64>,
    pub history: Option<TrainHistory>,
    pub runtime_secs: f64,
}

/// Runs `method` on `g`. `truth` is consulted only by the true-labels
/// pseudo-method; `spectral` is reused when given, computed otherwise.
pub fn run_method(
    g: &Graph,
    truth: Option<&LabelVector>,
    spectral: Option<&SpectralEmbedding>,
    method: Method,
    mode: Mode,
    k: usize,
    seed: u64,
    opts: &MethodOptions,
) -> Result<MethodOutput> {
    let started = Instant::now();
    let mseed = seed::derive(seed, method.stream());
    let owned;
    let spectral = match (spectral, method.needs_spectral() && method != Method::BetheHessian) {
        (Some(s), _) => Some(s),
        (None, true) => {
            owned = bethe_hessian_embedding(g, k, mode, opts.r_mode)?;
            Some(&owned)
        }
        (None, false) => None,
    };
    let mut out = MethodOutput { labels: LabelVector(vec![]), soft_modularity: None, r: None, history: None, runtime_secs: 0.0 };
    match method {
        Method::TrueLabels => {
            out.labels = truth
                .cloned()
                .ok_or_else(|| Error::InvalidParameter("true-labels needs ground truth".into()))?;
        }
        Method::BetheHessian => {
            let (labels, emb) = match spectral {
                Some(emb) => {
                    let km = crate::spectral::kmeans(&emb.vectors, k, seed::derive(mseed, seed::stream::KMEANS))?;
                    (km.labels, emb.clone())
                }
                None => bethe_hessian_cluster(g, k, mode, opts.r_mode, mseed)?,
            };
            out.labels = labels;
            out.r = Some(emb.r());
        }
        Method::Louvain => {
            out.labels = louvain(g, mseed)?.labels;
        }
        _ => {
            let cfg = opts.train_config(method, mode, k, mseed).expect("neural method");
            let trained = train_on_graph(g, spectral, &cfg)?;
            out.soft_modularity = Some(crate::objective::soft_modularity(g, &trained.assignment.0)?);
            out.r = spectral.map(|s| s.r());
            out.labels = trained.labels;
            out.history = Some(trained.history);
        }
    }
    out.runtime_secs = started.elapsed().as_secs_f64();
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Hard modularity of the predicted labels.
    pub modularity: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub overlap: Option<f64>,
    pub nmi: f64,
}

pub fn evaluate(g: &Graph, truth: &LabelVector, predicted: &LabelVector, k: usize, method: Method) -> Result<Metrics> {
    let overlap = if method.reports_overlap() {
        Some(overlap(truth, predicted, k)?)
    } else {
        None
    };
    Ok(Metrics { modularity: hard_modularity(g, predicted)?, overlap, nmi: nmi(truth, predicted)? })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub dataset: String,
    pub trial: usize,
    pub graph_seed: u64,
    pub method: Method,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metrics: Option<Metrics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub soft_modularity: Option<f64>,
    pub communities: usize,
    pub runtime_secs: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single trial.
    pub std: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Option<Stat> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Some(Stat { mean, std })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub applicable: bool,
    pub trials: usize,
    pub failed: usize,
    pub modularity: Option<Stat>,
    pub overlap: Option<Stat>,
    pub nmi: Option<Stat>,
    pub soft_modularity: Option<Stat>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSummary {
    pub schema: u32,
    pub dataset: String,
    pub params: SsbmParams,
    pub mode: Mode,
    pub trials: usize,
    pub master_seed: u64,
    pub options: MethodOptions,
    pub methods: Vec<MethodSummary>,
}

impl BenchmarkSummary {
    pub fn method(&self, m: Method) -> Option<&MethodSummary> {
        self.methods.iter().find(|s| s.method == m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub summary: BenchmarkSummary,
    pub results: Vec<TrialResult>,
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub dataset: String,
    pub params: SsbmParams,
    pub mode: Mode,
    pub methods: Vec<Method>,
    pub trials: usize,
    pub master_seed: u64,
    pub options: MethodOptions,
    /// Worker threads; `None` uses the global pool.
    pub threads: Option<usize>,
}

impl BenchConfig {
    pub fn preset(preset: Preset, methods: Vec<Method>, trials: usize, master_seed: u64) -> Self {
        BenchConfig {
            dataset: format!("{preset:?}").to_lowercase(),
            params: preset.params(),
            mode: preset.mode(),
            methods,
            trials,
            master_seed,
            options: MethodOptions::default(),
            threads: None,
        }
    }
}

/// Seed of trial `i`: `master + i`.
pub fn trial_seed(master: u64, trial: usize) -> u64 {
    master.wrapping_add(trial as u64)
}

fn run_trial(
    cfg: &BenchConfig,
    trial: usize,
    g: &Graph,
    truth: &LabelVector,
) -> Vec<TrialResult> {
    let gseed = trial_seed(cfg.master_seed, trial);
    let k = cfg.params.k;
    let spectral = if cfg.methods.iter().any(|m| m.needs_spectral()) {
        bethe_hessian_embedding(g, k, cfg.mode, cfg.options.r_mode).map_err(|e| e.to_string())
    } else {
        Err(String::new())
    };
    cfg.methods
        .iter()
        .filter(|m| m.applicable(cfg.mode))
        .map(|&method| {
            let mut result = TrialResult {
                dataset: cfg.dataset.clone(),
                trial,
                graph_seed: gseed,
                method,
                metrics: None,
                soft_modularity: None,
                communities: 0,
                runtime_secs: 0.0,
                error: None,
            };
            let outcome = match (&spectral, method.needs_spectral()) {
                (Err(e), true) => Err(Error::InvalidParameter(format!("spectral embedding failed: {e}"))),
                (s, _) => run_method(g, Some(truth), s.as_ref().ok(), method, cfg.mode, k, gseed, &cfg.options)
                    .and_then(|out| Ok((evaluate(g, truth, &out.labels, k, method)?, out))),
            };
            match outcome {
                Ok((metrics, out)) => {
                    result.metrics = Some(metrics);
                    result.soft_modularity = out.soft_modularity;
                    result.communities = out.labels.distinct();
                    result.runtime_secs = out.runtime_secs;
                }
                Err(e) => result.error = Some(e.to_string()),
            }
            result
        })
        .collect()
}

/// Generates `cfg.trials` graphs and runs every method on each.
pub fn bench(cfg: &BenchConfig) -> Result<BenchReport> {
    let graphs = (0..cfg.trials)
        .map(|i| ssbm_generate(&cfg.params, trial_seed(cfg.master_seed, i)))
        .collect::<Result<Vec<_>>>()?;
    bench_on(cfg, &graphs)
}

/// Runs the benchmark on pre-built `(graph, truth)` pairs.
pub fn bench_on(cfg: &BenchConfig, graphs: &[(Graph, LabelVector)]) -> Result<BenchReport> {
    if graphs.is_empty() {
        return Err(Error::InvalidParameter("benchmark needs at least one trial".into()));
    }
    let work = || -> Vec<Vec<TrialResult>> {
        graphs
            .par_iter()
            .enumerate()
            .map(|(i, (g, truth))| run_trial(cfg, i, g, truth))
            .collect()
    };
    let per_trial = match cfg.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t.max(1))
            .build()
            .map_err(|e| Error::InvalidParameter(e.to_string()))?
            .install(work),
        None => work(),
    };
    let results: Vec<TrialResult> = per_trial.into_iter().flatten().collect();
    let summary = summarize(cfg, graphs.len(), &results);
    Ok(BenchReport { summary, results })
}

pub fn summarize(cfg: &BenchConfig, trials: usize, results: &[TrialResult]) -> BenchmarkSummary {
    let methods = cfg
        .methods
        .iter()
        .map(|&method| {
            let rows: Vec<&TrialResult> = results.iter().filter(|r| r.method == method).collect();
            let ok: Vec<&Metrics> = rows.iter().filter_map(|r| r.metrics.as_ref()).collect();
            let pick = |f: &dyn Fn(&Metrics) -> Option<f64>| {
                Stat::of(&ok.iter().filter_map(|m| f(m)).collect::<Vec<_>>())
            };
            let soft: Vec<f64> = rows.iter().filter_map(|r| r.soft_modularity).collect();
            MethodSummary {
                method,
                applicable: method.applicable(cfg.mode),
                trials: ok.len(),
                failed: rows.len() - ok.len(),
                modularity: pick(&|m| Some(m.modularity)),
                overlap: pick(&|m| m.overlap),
                nmi: pick(&|m| Some(m.nmi)),
                soft_modularity: Stat::of(&soft),
            }
        })
        .collect();
    BenchmarkSummary {
        schema: SCHEMA,
        dataset: cfg.dataset.clone(),
        params: cfg.params,
        mode: cfg.mode,
        trials,
        master_seed: cfg.master_seed,
        options: cfg.options,
        methods,
    }
}

/// Aligned text table, one row per method.
pub fn render_table(summary: &BenchmarkSummary) -> String {
    let cell = |s: Option<Stat>| match s {
        Some(s) => format!("{:.3} ± {:.3}", s.mean, s.std),
        None => "N/A".to_string(),
    };
    let rows: Vec<[String; 5]> = summary
        .methods
        .iter()
        .map(|m| {
            let (q, o, i) = if m.applicable {
                (cell(m.modularity), cell(m.overlap), cell(m.nmi))
            } else {
                ("N/A".into(), "N/A".into(), "N/A".into())
            };
            [m.method.name().to_string(), q, o, i, format!("{}/{}", m.trials, m.trials + m.failed)]
        })
        .collect();
    let header = ["Algorithm", "Modularity", "Overlap", "NMI", "Trials"];
    let mut widths = header.map(|h| h.chars().count());
    for r in &rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let mut out = String::new();
    let line = |cells: &[String]| -> String {
        let padded: Vec<String> = cells
            .iter()
            .zip(widths)
            .map(|(c, w)| format!("{c}{}", " ".repeat(w - c.chars().count())))
            .collect();
        format!("| {} |", padded.join(" | "))
    };
    let p = &summary.params;
    writeln!(
        out,
        "{} (n={}, k={}, a={}, b={}), {} trials, seed {}",
        summary.dataset, p.n, p.k, p.a, p.b, summary.trials, summary.master_seed
    )
    .unwrap();
    writeln!(out, "{}", line(&header.map(String::from))).unwrap();
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    writeln!(out, "|-{}-|", rule.join("-|-")).unwrap();
    for r in &rows {
        writeln!(out, "{}", line(r)).unwrap();
    }
    out
}

/// Writes `graph_<i>.txt` and `labels_<i>.txt` for `count` trials.
pub fn generate_dataset(params: &SsbmParams, count: usize, master_seed: u64, dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io { path: dir.to_path_buf(), source })?;
    let mut written = Vec::with_capacity(2 * count);
    for i in 0..count {
        let (g, labels) = ssbm_generate(params, trial_seed(master_seed, i))?;
        let gp = dir.join(format!("graph_{i}.txt"));
        let lp = dir.join(format!("labels_{i}.txt"));
        io::write_graph(&gp, &g)?;
        io::write_labels(&lp, &labels)?;
        written.push(gp);
        written.push(lp);
    }
    Ok(written)
}

/// Loads `graph_<i>.txt` / `labels_<i>.txt` pairs for `i = 0, 1, …` until
/// the first missing index.
pub fn load_dataset(dir: &Path) -> Result<Vec<(Graph, LabelVector)>> {
    let mut out = Vec::new();
    loop {
        let i = out.len();
        let gp = dir.join(format!("graph_{i}.txt"));
        if !gp.exists() {
            break;
        }
        let g = io::read_graph(&gp)?;
        let labels = io::read_labels(&dir.join(format!("labels_{i}.txt")))?;
        if labels.len() != g.n() {
            return Err(Error::dims(g.n(), labels.len()));
        }
        out.push((g, labels));
    }
    if out.is_empty() {
        return Err(Error::InvalidParameter(format!("no graph_0.txt in {}", dir.display())));
    }
    Ok(out)
}

/// Result document of a single clustering run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    pub schema: u32,
    pub method: Method,
    pub mode: Mode,
    pub k: usize,
    pub seed: u64,
    pub options: MethodOptions,
    pub labels: LabelVector,
    pub communities: usize,
    pub modularity: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub soft_modularity: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
    pub runtime_secs: f64,
}

pub fn cluster(g: &Graph, method: Method, mode: Mode, k: usize, seed: u64, opts: &MethodOptions) -> Result<(ClusterReport, MethodOutput)> {
    if method == Method::TrueLabels {
        return Err(Error::InvalidParameter("true-labels is only available in benchmarks".into()));
    }
    let out = run_method(g, None, None, method, mode, k, seed, opts)?;
    let report = ClusterReport {
        schema: SCHEMA,
        method,
        mode,
        k,
        seed,
        options: *opts,
        labels: out.labels.clone(),
        communities: out.labels.distinct(),
        modularity: hard_modularity(g, &out.labels)?,
        soft_modularity: out.soft_modularity,
        r: out.r,
        runtime_secs: out.runtime_secs,
    };
    Ok((report, out))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema: u32,
    pub n: usize,
    pub overlap: Option<f64>,
    pub nmi: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub modularity: Option<f64>,
}

/// Compares two labelings; overlap is reported when both fit in `k` labels.
pub fn eval_labels(truth: &LabelVector, predicted: &LabelVector, k: Option<usize>, g: Option<&Graph>) -> Result<EvalReport> {
    if truth.len() != predicted.len() {
        return Err(Error::dims(truth.len(), predicted.len()));
    }
    let k = k.unwrap_or_else(|| truth.label_bound().max(predicted.label_bound()));
    let overlap = if truth.label_bound() <= k && predicted.label_bound() <= k {
        Some(overlap(truth, predicted, k)?)
    } else {
        None
    };
    Ok(EvalReport {
        schema: SCHEMA,
        n: truth.len(),
        overlap,
        nmi: nmi(truth, predicted)?,
        modularity: g.map(|g| hard_modularity(g, predicted)).transpose()?,
    })
}
