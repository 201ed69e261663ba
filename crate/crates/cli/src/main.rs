use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, ValueEnum};
use log::info;

use hypergcn::experiment::{run_experiment, BatchMode, ExperimentConfig, PartitionerKind};
use hypergcn::graph_io::GraphFormat;
use hypergcn::runtime::Scheduler;

/// Partition a graph several ways, train a GCN on a simulated cluster with
/// each partition and report the communication it caused.
///
/// Log verbosity is read from HYPERGCN_LOG (error, warn, info, debug, trace).
#[derive(Debug, Parser)]
#[command(name = "hypergcn", version)]
struct Cli {
    /// Adjacency file.
    #[arg(long)]
    graph: PathBuf,

    /// Input format; guessed from the extension when omitted (.mtx is MatrixMarket).
    #[arg(long, value_enum)]
    format: Option<FormatArg>,

    /// Keep edge directions instead of symmetrizing.
    #[arg(long)]
    directed: bool,

    /// Name used in reports; defaults to the file stem.
    #[arg(long)]
    dataset: Option<String>,

    /// Number of simulated processors.
    #[arg(short = 'p', long = "procs", default_value_t = 4)]
    p: usize,

    /// Comma-separated partitioners; rp always runs as the baseline.
    #[arg(long, value_enum, value_delimiter = ',', default_value = "rp,gp,hp")]
    partitioner: Vec<PartitionerArg>,

    /// One part id per line, used by the `file` partitioner.
    #[arg(long)]
    partition_file: Option<PathBuf>,

    /// Allowed imbalance: parts may weigh up to (1 + epsilon) times the average.
    #[arg(long, default_value_t = 0.01)]
    epsilon: f64,

    #[arg(long, default_value_t = 2)]
    layers: usize,

    /// Comma-separated layer widths d_0..d_L; d_L is the number of classes.
    #[arg(long, value_delimiter = ',', default_value = "16,16,4")]
    dims: Vec<usize>,

    #[arg(long, default_value_t = 5)]
    epochs: usize,

    #[arg(long, value_enum, default_value_t = ModeArg::Full)]
    mode: ModeArg,

    /// Vertices per mini-batch (mini mode and shp).
    #[arg(long)]
    batch_size: Option<usize>,

    /// Mini-batches per epoch.
    #[arg(long, default_value_t = 1)]
    batches: usize,

    /// Sampled batches merged into the stochastic hypergraph.
    #[arg(long, default_value_t = 100)]
    shp_samples: usize,

    #[arg(long, default_value_t = 0.1)]
    learning_rate: f64,

    /// Seed for partitioning, features, labels, weights and sampling.
    #[arg(long)]
    seed: u64,

    #[arg(long, value_enum, default_value_t = SchedulerArg::Threaded)]
    scheduler: SchedulerArg,

    /// Also write each partition's communication plan.
    #[arg(long)]
    emit_plan: bool,

    /// Also write the hypergraph the hp partitioner used.
    #[arg(long)]
    emit_hypergraph: bool,

    /// Record wall-clock times (reports are then no longer reproducible).
    #[arg(long)]
    timings: bool,

    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    EdgeList,
    MatrixMarket,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PartitionerArg {
    Rp,
    Gp,
    Hp,
    Shp,
    File,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Full,
    Mini,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SchedulerArg {
    Threaded,
    Sequential,
}

impl Cli {
    fn into_config(self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::new(self.graph, self.p, self.dims, self.seed);
        if let Some(f) = self.format {
            cfg.format = match f {
                FormatArg::EdgeList => GraphFormat::EdgeList,
                FormatArg::MatrixMarket => GraphFormat::MatrixMarket,
            };
        }
        cfg.directed = self.directed;
        cfg.dataset = self.dataset;
        cfg.partitioners = self
            .partitioner
            .iter()
            .map(|k| match k {
                PartitionerArg::Rp => PartitionerKind::Rp,
                PartitionerArg::Gp => PartitionerKind::Gp,
                PartitionerArg::Hp => PartitionerKind::Hp,
                PartitionerArg::Shp => PartitionerKind::Shp,
                PartitionerArg::File => PartitionerKind::File,
            })
            .collect();
        cfg.partition_file = self.partition_file;
        cfg.epsilon = self.epsilon;
        cfg.layers = self.layers;
        cfg.epochs = self.epochs;
        cfg.mode = match (self.mode, self.batch_size) {
            (ModeArg::Full, _) => BatchMode::Full,
            (ModeArg::Mini, Some(batch_size)) => BatchMode::Mini {
                batch_size,
                batches: self.batches,
            },
            (ModeArg::Mini, None) => bail!("--mode mini requires --batch-size"),
        };
        cfg.shp_batches = self.shp_samples;
        cfg.learning_rate = self.learning_rate;
        cfg.scheduler = match self.scheduler {
            SchedulerArg::Threaded => Scheduler::Threaded,
            SchedulerArg::Sequential => Scheduler::Sequential,
        };
        cfg.emit_plan = self.emit_plan;
        cfg.emit_hypergraph = self.emit_hypergraph;
        cfg.timings = self.timings;
        cfg.out_dir = self.out;
        cfg.validate().context("invalid configuration")?;
        Ok(cfg)
    }
}

fn fmt_norm(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.3}"))
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("HYPERGCN_LOG", "warn")).init();
    let cfg = Cli::parse().into_config()?;
    info!("running {} on {}", cfg.dataset_name(), cfg.graph.display());
    let (report, files) = run_experiment(&cfg)?;

    println!(
        "{:<10} {:>10} {:>10} {:>10} {:>10} {:>10}",
        "partition", "avg_vol", "max_vol", "avg_msg", "max_msg", "imbalance"
    );
    for row in &report.comparison.rows {
        println!(
            "{:<10} {:>10} {:>10} {:>10} {:>10} {:>10.4}",
            row.partitioner,
            fmt_norm(row.avg_volume_norm),
            fmt_norm(row.max_volume_norm),
            fmt_norm(row.avg_msgs_norm),
            fmt_norm(row.max_msgs_norm),
            row.balance_ratio
        );
    }
    println!("report: {}", files.report.display());
    println!("table:  {}", files.csv.display());
    for plan in &files.plans {
        println!("plan:   {}", plan.display());
    }
    if let Some(h) = &files.hypergraph {
        println!("hypergraph: {}", h.display());
    }
    Ok(())
}
