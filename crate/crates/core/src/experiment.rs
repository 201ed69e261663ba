//! End-to-end experiment: load a graph, synthesize features and labels,
//! partition with every requested strategy, train on the simulated runtime
//! and write comparison reports.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, ResultExt};
use crate::gcn::{Activation, GcnModel, LabelSet};
use crate::graph_io::{load_graph, GraphFormat};
use crate::metrics::{compare, comparison_csv, Comparison, RunSummary};
use crate::models::io::{read_partition_file, write_hypergraph};
use crate::models::{
    build_bidirectional_hypergraph_model, build_graph_model, build_hypergraph_model, connectivity_cut,
    evaluate_graph_cut, Hypergraph, MiniBatchSpec, Partition,
};
use crate::partition::{
    partition_graph_fm, partition_hypergraph_fm, partition_stochastic, random_partition, PartitionConfig,
};
use crate::plan::{build_comm_plan, PlanSummary};
use crate::runtime::{train_epochs, DistProblem, EpochMetrics, Scheduler, TrainMode};
use crate::sparse::{transpose_sparse, DenseMatrix, SparseMatrix};

pub const SCHEMA_VERSION: u32 = 1;

const FEATURE_STREAM: u64 = 0x6665_6174;
const LABEL_STREAM: u64 = 0x6c61_6265;
const TRAIN_STREAM: u64 = 0x7472_6169;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionerKind {
    Rp,
    Gp,
    Hp,
    Shp,
    File,
}

impl PartitionerKind {
    pub fn name(self) -> &'static str {
        match self {
            PartitionerKind::Rp => "rp",
            PartitionerKind::Gp => "gp",
            PartitionerKind::Hp => "hp",
            PartitionerKind::Shp => "shp",
            PartitionerKind::File => "file",
        }
    }
}

impl FromStr for PartitionerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "rp" => Ok(PartitionerKind::Rp),
            "gp" => Ok(PartitionerKind::Gp),
            "hp" => Ok(PartitionerKind::Hp),
            "shp" => Ok(PartitionerKind::Shp),
            "file" => Ok(PartitionerKind::File),
            other => Err(Error::InvalidArgument(format!("unknown partitioner '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum BatchMode {
    Full,
    Mini { batch_size: usize, batches: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub graph: PathBuf,
    pub format: GraphFormat,
    pub directed: bool,
    /// Name used in reports; defaults to the file stem.
    pub dataset: Option<String>,
    pub p: usize,
    /// RP always runs as the baseline, whether listed or not.
    pub partitioners: Vec<PartitionerKind>,
    pub partition_file: Option<PathBuf>,
    pub epsilon: f64,
    pub layers: usize,
    /// `d_0 .. d_L`; `d_L` is the number of classes.
    pub dims: Vec<usize>,
    pub epochs: usize,
    pub mode: BatchMode,
    /// Batches merged into the stochastic hypergraph.
    pub shp_batches: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub scheduler: Scheduler,
    #[serde(skip)]
    pub out_dir: PathBuf,
    pub emit_plan: bool,
    pub emit_hypergraph: bool,
    /// Adds wall-clock times to the reports, which then differ between runs.
    pub timings: bool,
}

impl ExperimentConfig {
    pub fn new(graph: impl Into<PathBuf>, p: usize, dims: Vec<usize>, seed: u64) -> Self {
        let graph = graph.into();
        Self {
            format: GraphFormat::from_path(&graph),
            graph,
            directed: false,
            dataset: None,
            p,
            partitioners: vec![PartitionerKind::Rp, PartitionerKind::Gp, PartitionerKind::Hp],
            partition_file: None,
            epsilon: 0.01,
            layers: dims.len().saturating_sub(1),
            dims,
            epochs: 5,
            mode: BatchMode::Full,
            shp_batches: 100,
            learning_rate: 0.1,
            seed,
            scheduler: Scheduler::Threaded,
            out_dir: PathBuf::from("out"),
            emit_plan: false,
            emit_hypergraph: false,
            timings: false,
        }
    }

    /// Checks that need no graph.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.layers == 0 {
            return bad("need at least one layer".into());
        }
        if self.dims.len() != self.layers + 1 {
            return bad(format!(
                "{} layers need {} dims, got {}",
                self.layers,
                self.layers + 1,
                self.dims.len()
            ));
        }
        if self.dims.contains(&0) {
            return bad("dims must be positive".into());
        }
        if self.p == 0 {
            return bad("p must be at least 1".into());
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return bad(format!("invalid epsilon {}", self.epsilon));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("invalid learning rate {}", self.learning_rate));
        }
        let wants_file = self.partitioners.contains(&PartitionerKind::File);
        if wants_file != self.partition_file.is_some() {
            return bad("the file partitioner and --partition-file go together".into());
        }
        if let BatchMode::Mini { batch_size, batches } = self.mode {
            if batch_size == 0 || batches == 0 {
                return bad("mini-batch mode needs a positive batch size and batch count".into());
            }
        }
        if self.partitioners.contains(&PartitionerKind::Shp) {
            if !matches!(self.mode, BatchMode::Mini { .. }) {
                return bad("shp samples mini-batches; use --mode mini".into());
            }
            if self.shp_batches == 0 {
                return bad("shp needs at least one sampled batch".into());
            }
        }
        Ok(())
    }

    fn validate_for(&self, n: usize) -> Result<()> {
        if self.p > n {
            return Err(Error::InvalidArgument(format!("p = {} exceeds {n} vertices", self.p)));
        }
        if let BatchMode::Mini { batch_size, .. } = self.mode {
            if batch_size > n {
                return Err(Error::InvalidArgument(format!("batch size {batch_size} exceeds {n} vertices")));
            }
        }
        Ok(())
    }

    pub fn dataset_name(&self) -> String {
        self.dataset.clone().unwrap_or_else(|| {
            self.graph
                .file_stem()
                .map_or_else(|| "graph".to_string(), |s| s.to_string_lossy().into_owned())
        })
    }

    /// Partitioners to run, baseline first, without repeats.
    pub fn run_order(&self) -> Vec<PartitionerKind> {
        let mut order = vec![PartitionerKind::Rp];
        for &k in &self.partitioners {
            if !order.contains(&k) {
                order.push(k);
            }
        }
        order
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GraphInfo {
    pub n_vertices: usize,
    pub nnz: usize,
    pub directed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub partitioner: String,
    pub part_weights: Vec<u64>,
    pub balance_ratio: f64,
    /// Connectivity-1 cut of the column-net hypergraph of `A + I`.
    pub hypergraph_cut: u64,
    /// Edges of the symmetrized graph cut by the partition.
    pub graph_cut: u64,
    /// Forward plus backward words a full-batch epoch moves, from the model.
    pub predicted_words_per_epoch: u64,
    pub epochs: Vec<EpochMetrics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub runtime_secs: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub dataset: String,
    pub config: ExperimentConfig,
    pub graph: GraphInfo,
    pub runs: Vec<RunReport>,
    pub comparison: Comparison,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanDump {
    pub partitioner: String,
    pub forward: PlanSummary,
    /// Plan of the transposed operator; present for directed graphs.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub backward: Option<PlanSummary>,
}

/// Everything an experiment produced, before it is written out.
#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub report: ExperimentReport,
    pub plans: Vec<PlanDump>,
    pub hypergraph: Option<Hypergraph>,
}

/// Seeded standard-normal features.
pub fn synthetic_features(n: usize, d: usize, seed: u64) -> DenseMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ FEATURE_STREAM);
    let data = (0..n * d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    DenseMatrix::from_vec(n, d, data).expect("length matches shape")
}

/// A seeded 10% vertex subset (at least one vertex) with uniform classes.
pub fn synthetic_labels(n: usize, classes: usize, seed: u64) -> Result<LabelSet> {
    if n == 0 {
        return Err(Error::EmptyLabels);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ LABEL_STREAM);
    let count = n.div_ceil(10);
    let mut ids = index::sample(&mut rng, n, count).into_vec();
    ids.sort_unstable();
    let labels = ids.iter().map(|_| rng.random_range(0..classes)).collect();
    LabelSet::new(ids, labels, classes)
}

fn with_self_loops(a: &SparseMatrix) -> Result<SparseMatrix> {
    let mut coords: Vec<(usize, usize)> = a.iter().map(|(r, c, _)| (r, c)).collect();
    coords.extend((0..a.n_rows()).map(|i| (i, i)));
    SparseMatrix::from_pattern(a.n_rows(), a.n_cols(), &coords)
}

/// Runs the experiment on an already loaded adjacency.
pub fn execute(cfg: &ExperimentConfig, a: &SparseMatrix) -> Result<ExperimentOutput> {
    cfg.validate()?;
    if !a.is_square() {
        return Err(Error::NotSquare {
            rows: a.n_rows(),
            cols: a.n_cols(),
        });
    }
    let n = a.n_rows();
    cfg.validate_for(n)?;
    let layers = cfg.layers;
    let a_loop = with_self_loops(a)?;
    let directed = !a.is_structurally_symmetric();
    let forward_width: usize = cfg.dims[..layers].iter().sum();
    let backward_width: usize = cfg.dims[1..].iter().sum();
    let volume_model = build_bidirectional_hypergraph_model(a, forward_width as u64, backward_width as u64)?;
    let column_model = build_hypergraph_model(&a_loop)?;
    let weights = column_model.vertex_weight().to_vec();
    let graph_model = build_graph_model(&a_loop)?;
    // directed inputs are partitioned on the exact two-sided model
    let hp_model = if directed { &volume_model } else { &column_model };

    let features = synthetic_features(n, cfg.dims[0], cfg.seed);
    let labels = synthetic_labels(n, cfg.dims[layers], cfg.seed)?;
    let model = GcnModel::init(&cfg.dims, Activation::Relu, cfg.learning_rate, cfg.seed)?;
    let pcfg = PartitionConfig::new(cfg.p, cfg.seed).with_epsilon(cfg.epsilon);
    let mode = match cfg.mode {
        BatchMode::Full => TrainMode::FullBatch,
        BatchMode::Mini { batch_size, batches } => TrainMode::MiniBatch {
            batch_size,
            batches_per_epoch: batches,
            seed: cfg.seed ^ TRAIN_STREAM,
        },
    };

    let dataset = cfg.dataset_name();
    let mut runs = Vec::new();
    let mut summaries = Vec::new();
    let mut plans = Vec::new();
    for kind in cfg.run_order() {
        let name = kind.name();
        let pi: Partition = match kind {
            PartitionerKind::Rp => random_partition(&weights, &pcfg),
            PartitionerKind::Gp => partition_graph_fm(&graph_model, &pcfg),
            PartitionerKind::Hp => partition_hypergraph_fm(hp_model, &pcfg),
            PartitionerKind::Shp => {
                let BatchMode::Mini { batch_size, .. } = cfg.mode else { unreachable!("validated") };
                partition_stochastic(a, &MiniBatchSpec::new(batch_size), cfg.shp_batches, &pcfg)
            }
            PartitionerKind::File => {
                read_partition_file(cfg.partition_file.as_deref().unwrap(), cfg.p, &weights, cfg.epsilon)
            }
        }
        .context(format!("partitioner {name}"))?;

        if cfg.emit_plan {
            let forward = build_comm_plan(&a_loop, &pi)?.summary();
            let backward = if directed {
                Some(build_comm_plan(&transpose_sparse(&a_loop), &pi)?.summary())
            } else {
                None
            };
            plans.push(PlanDump {
                partitioner: name.into(),
                forward,
                backward,
            });
        }

        let problem = DistProblem {
            adjacency: a,
            features: &features,
            labels: &labels,
            partition: &pi,
        };
        let outcome = train_epochs(&model, &problem, mode, cfg.epochs, cfg.scheduler)
            .context(format!("training with the {name} partition"))?;
        let hypergraph_cut = connectivity_cut(&column_model, pi.assignment())?;
        let runtime = cfg.timings.then(|| outcome.wallclock_secs.iter().sum::<f64>());
        let mut summary = RunSummary::from_epochs(&dataset, name, &outcome.metrics, pi.balance_ratio(), hypergraph_cut);
        if let Some(t) = runtime {
            summary = summary.with_runtime(t);
        }
        summaries.push(summary);
        runs.push(RunReport {
            partitioner: name.into(),
            part_weights: pi.part_weights().to_vec(),
            balance_ratio: pi.balance_ratio(),
            hypergraph_cut,
            graph_cut: evaluate_graph_cut(&graph_model, &pi)?.cut_value,
            predicted_words_per_epoch: connectivity_cut(&volume_model, pi.assignment())?,
            epochs: outcome.metrics,
            runtime_secs: runtime,
        });
    }

    let comparison = compare(&summaries)?;
    let report = ExperimentReport {
        schema_version: SCHEMA_VERSION,
        dataset,
        config: cfg.clone(),
        graph: GraphInfo {
            n_vertices: n,
            nnz: a.nnz(),
            directed,
        },
        runs,
        comparison,
    };
    Ok(ExperimentOutput {
        report,
        plans,
        hypergraph: cfg.emit_hypergraph.then(|| hp_model.clone()),
    })
}

/// Paths of the files an experiment wrote.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WrittenFiles {
    pub report: PathBuf,
    pub csv: PathBuf,
    pub plans: Vec<PathBuf>,
    pub hypergraph: Option<PathBuf>,
}

pub fn write_outputs(out_dir: &Path, output: &ExperimentOutput) -> Result<WrittenFiles> {
    std::fs::create_dir_all(out_dir)?;
    let report = out_dir.join("report.json");
    let mut json = serde_json::to_string_pretty(&output.report)?;
    json.push('\n');
    std::fs::write(&report, json)?;
    let csv = out_dir.join("comparison.csv");
    std::fs::write(&csv, comparison_csv(&output.report.comparison)?)?;
    let mut plans = Vec::new();
    for dump in &output.plans {
        let path = out_dir.join(format!("plan_{}.json", dump.partitioner));
        let mut json = serde_json::to_string_pretty(dump)?;
        json.push('\n');
        std::fs::write(&path, json)?;
        plans.push(path);
    }
    let hypergraph = match &output.hypergraph {
        Some(h) => {
            let path = out_dir.join("hypergraph.txt");
            std::fs::write(&path, write_hypergraph(h))?;
            Some(path)
        }
        None => None,
    };
    Ok(WrittenFiles {
        report,
        csv,
        plans,
        hypergraph,
    })
}

/// Loads the graph, runs every partitioner and writes the reports.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<(ExperimentReport, WrittenFiles)> {
    cfg.validate()?;
    let a = load_graph(&cfg.graph, cfg.format, cfg.directed).context(format!("loading {}", cfg.graph.display()))?;
    let output = execute(cfg, &a)?;
    let files = write_outputs(&cfg.out_dir, &output).context(format!("writing to {}", cfg.out_dir.display()))?;
    Ok((output.report, files))
}
