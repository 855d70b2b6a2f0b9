//! `commdet`: generate SSBM datasets, cluster graphs, evaluate labelings and
//! run the benchmark tables.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use commdet::harness::{self, BenchConfig, Method, MethodOptions, Preset};
use commdet::objective::RegMode;
use commdet::spectral::RMode;
use commdet::{io, Mode, SsbmParams};

#[derive(Parser)]
#[command(name = "commdet", version, about = "Community detection on stochastic block model graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate SSBM graphs and their planted labels.
    Gen(GenArgs),
    /// Cluster one graph file and print a JSON report.
    Cluster(ClusterArgs),
    /// Run methods over many generated graphs and summarize the metrics.
    Bench(BenchArgs),
    /// Compare two label files.
    Eval(EvalArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    Assoc,
    Disassoc,
}

impl From<PresetArg> for Preset {
    fn from(p: PresetArg) -> Self {
        match p {
            PresetArg::Assoc => Preset::Assoc,
            PresetArg::Disassoc => Preset::Disassoc,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Assoc,
    Disassoc,
}

#[derive(Clone, Copy, ValueEnum)]
enum RModeArg {
    Standard,
    Literal,
}

#[derive(Clone, Copy, ValueEnum)]
enum RegModeArg {
    Normalized,
    Literal,
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long, default_value_t = 0.5)]
    lambda: f64,
    #[arg(long, default_value_t = 2)]
    layers: usize,
    #[arg(long, default_value_t = 3)]
    heads: usize,
    #[arg(long, default_value_t = 48)]
    hidden: usize,
    #[arg(long, default_value_t = 3)]
    restarts: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 300)]
    max_steps: usize,
    #[arg(long, default_value_t = 30)]
    patience: usize,
    #[arg(long, value_enum, default_value = "standard")]
    r_mode: RModeArg,
    #[arg(long, value_enum, default_value = "normalized")]
    reg_mode: RegModeArg,
}

impl ModelArgs {
    fn options(&self) -> MethodOptions {
        MethodOptions {
            lambda: self.lambda,
            layers: self.layers,
            heads: self.heads,
            hidden: self.hidden,
            restarts: self.restarts,
            learning_rate: self.lr,
            max_steps: self.max_steps,
            patience: self.patience,
            r_mode: match self.r_mode {
                RModeArg::Standard => RMode::Standard,
                RModeArg::Literal => RMode::Literal,
            },
            reg_mode: match self.reg_mode {
                RegModeArg::Normalized => RegMode::Normalized,
                RegModeArg::Literal => RegMode::Literal,
            },
        }
    }
}

#[derive(Args)]
struct SsbmArgs {
    /// Benchmark parameter set; individual flags override it.
    #[arg(long, value_enum)]
    preset: Option<PresetArg>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    a: Option<f64>,
    #[arg(long)]
    b: Option<f64>,
}

impl SsbmArgs {
    fn params(&self) -> Result<SsbmParams> {
        let base = match self.preset {
            Some(p) => Preset::from(p).params(),
            None => {
                if self.n.is_none() || self.k.is_none() || self.a.is_none() || self.b.is_none() {
                    bail!("give --preset or all of --n --k --a --b");
                }
                SsbmParams { n: 0, k: 0, a: 0.0, b: 0.0 }
            }
        };
        Ok(SsbmParams::new(
            self.n.unwrap_or(base.n),
            self.k.unwrap_or(base.k),
            self.a.unwrap_or(base.a),
            self.b.unwrap_or(base.b),
        )?)
    }

    /// Explicit `a < b` means a disassortative model.
    fn mode(&self, params: &SsbmParams) -> Mode {
        match self.preset {
            Some(p) if self.a.is_none() && self.b.is_none() => Preset::from(p).mode(),
            _ if params.a < params.b => Mode::Disassociative,
            _ => Mode::Associative,
        }
    }
}

#[derive(Args)]
struct GenArgs {
    #[command(flatten)]
    ssbm: SsbmArgs,
    /// Number of graphs.
    #[arg(long, default_value_t = 1)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ClusterArgs {
    /// Edge-list file.
    graph: PathBuf,
    #[arg(long)]
    method: String,
    #[arg(long, value_enum, default_value = "assoc")]
    mode: ModeArg,
    /// Number of communities.
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    model: ModelArgs,
    /// Also write the labels, one per line.
    #[arg(long)]
    labels_out: Option<PathBuf>,
    /// Write the JSON report here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    ssbm: SsbmArgs,
    /// Comma-separated method names, or `all`.
    #[arg(long, default_value = "all")]
    methods: String,
    #[arg(long, default_value_t = 20)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Load `graph_<i>.txt` / `labels_<i>.txt` from this directory instead of generating.
    #[arg(long)]
    data: Option<PathBuf>,
    #[command(flatten)]
    model: ModelArgs,
    /// JSON file for the per-trial results and summary.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Reference labels.
    truth: PathBuf,
    /// Predicted labels.
    predicted: PathBuf,
    /// Graph, to also report the modularity of the prediction.
    #[arg(long)]
    graph: Option<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_methods(spec: &str) -> Result<Vec<Method>> {
    if spec == "all" {
        return Ok(Method::ALL.to_vec());
    }
    spec.split(',')
        .map(|s| s.trim().parse::<Method>().map_err(Into::into))
        .collect()
}

fn emit(json: String, out: Option<&PathBuf>) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, json + "\n").with_context(|| format!("writing {}", path.display())),
        None => {
            println!("{json}");
            Ok(())
        }
    }
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Gen(args) => {
            let params = args.ssbm.params()?;
            let files = harness::generate_dataset(&params, args.count, args.seed, &args.out)?;
            eprintln!("wrote {} files to {}", files.len(), args.out.display());
        }
        Command::Cluster(args) => {
            let method: Method = args.method.parse()?;
            let mode = match args.mode {
                ModeArg::Assoc => Mode::Associative,
                ModeArg::Disassoc => Mode::Disassociative,
            };
            let g = io::read_graph(&args.graph)?;
            let (report, _) = harness::cluster(&g, method, mode, args.k, args.seed, &args.model.options())?;
            if let Some(path) = &args.labels_out {
                io::write_labels(path, &report.labels)?;
            }
            emit(serde_json::to_string(&report)?, args.out.as_ref())?;
        }
        Command::Bench(args) => {
            let params = args.ssbm.params()?;
            let mode = args.ssbm.mode(&params);
            let dataset = match args.ssbm.preset {
                Some(PresetArg::Assoc) => "assoc".to_string(),
                Some(PresetArg::Disassoc) => "disassoc".to_string(),
                None => format!("ssbm-{}-{}-{}-{}", params.n, params.k, params.a, params.b),
            };
            let cfg = BenchConfig {
                dataset,
                params,
                mode,
                methods: parse_methods(&args.methods)?,
                trials: args.trials,
                master_seed: args.seed,
                options: args.model.options(),
                threads: args.threads,
            };
            if cfg.trials == 0 {
                bail!("--trials must be at least 1");
            }
            let report = match &args.data {
                Some(dir) => {
                    let mut graphs = harness::load_dataset(dir)?;
                    graphs.truncate(cfg.trials);
                    harness::bench_on(&cfg, &graphs)?
                }
                None => harness::bench(&cfg)?,
            };
            for r in report.results.iter().filter(|r| r.error.is_some()) {
                eprintln!("trial {} {}: {}", r.trial, r.method, r.error.as_deref().unwrap_or(""));
            }
            print!("{}", harness::render_table(&report.summary));
            if let Some(path) = &args.out {
                io::write_json(path, &report)?;
            }
        }
        Command::Eval(args) => {
            let truth = io::read_labels(&args.truth)?;
            let predicted = io::read_labels(&args.predicted)?;
            let g = args.graph.as_deref().map(io::read_graph).transpose()?;
            let report = harness::eval_labels(&truth, &predicted, args.k, g.as_ref())?;
            emit(serde_json::to_string(&report)?, args.out.as_ref())?;
        }
    }
    Ok(())
}
