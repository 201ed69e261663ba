//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails.

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hypergcn::experiment::{execute, write_outputs, BatchMode, ExperimentConfig, ExperimentReport, PartitionerKind};
use hypergcn::gcn::{feedforward, propagation_operators, train, Activation, GcnModel, LabelSet};
use hypergcn::models::sampling::batch_hypergraph;
use hypergcn::models::{
    build_graph_model, build_hypergraph_model, connectivity_cut, evaluate_hypergraph_cut, graph_model_vertex_volume,
    graph_model_volume, hoeffding_min_nets, predicted_total_volume, BatchSampler, Hypergraph, MiniBatchSpec, Partition,
};
use hypergcn::partition::{partition_hypergraph_fm, partition_stochastic, PartitionConfig};
use hypergcn::plan::{build_comm_plan, plan_volume};
use hypergcn::runtime::{
    gather_layer, parallel_feedforward, scatter, train_epochs, DistProblem, EpochMetrics, Scheduler, TrainMode,
};
use hypergcn::sparse::{DenseMatrix, SparseMatrix};

type Outcome = Result<String, String>;

/// (p, max messages one rank sent per exchange, max per ordered pair per exchange)
static EXCHANGES: Mutex<Vec<(usize, u64, u64)>> = Mutex::new(Vec::new());

fn record(p: usize, metrics: &[EpochMetrics]) {
    let mut log = EXCHANGES.lock().unwrap();
    for m in metrics {
        log.push((p, m.max_rank_msgs_per_exchange, m.max_pair_msgs_per_exchange));
    }
}

fn record_report(report: &ExperimentReport) {
    for run in &report.runs {
        record(report.config.p, &run.epochs);
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn ok<T>(r: hypergcn::Result<T>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

// ---------- instances ----------

fn random_graph(rng: &mut ChaCha8Rng, n: usize, density: f64, directed: bool) -> SparseMatrix {
    let mut coords = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i != j && (directed || i < j) && rng.random_bool(density) {
                coords.push((i, j));
                if !directed {
                    coords.push((j, i));
                }
            }
        }
    }
    SparseMatrix::from_pattern(n, n, &coords).unwrap()
}

fn grid(side: usize) -> SparseMatrix {
    let mut coords = Vec::new();
    for r in 0..side {
        for c in 0..side {
            let v = r * side + c;
            if c + 1 < side {
                coords.extend([(v, v + 1), (v + 1, v)]);
            }
            if r + 1 < side {
                coords.extend([(v, v + side), (v + side, v)]);
            }
        }
    }
    SparseMatrix::from_pattern(side * side, side * side, &coords).unwrap()
}

/// Two communities with identical internal wiring (the second a relabeled
/// copy of the first) joined by `bridges` random edges.
fn two_communities(seed: u64, half: usize, p_in: f64, bridges: usize) -> SparseMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 2 * half;
    let mut coords = Vec::new();
    for i in 0..half {
        for j in i + 1..half {
            if rng.random_bool(p_in) {
                coords.extend([(i, j), (j, i), (half + i, half + j), (half + j, half + i)]);
            }
        }
    }
    for _ in 0..bridges {
        let (i, j) = (rng.random_range(0..half), half + rng.random_range(0..half));
        coords.extend([(i, j), (j, i)]);
    }
    SparseMatrix::from_pattern(n, n, &coords).unwrap()
}

/// Points in the unit square joined when closer than `radius`.
fn geometric(seed: u64, n: usize, radius: f64) -> SparseMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pts: Vec<(f64, f64)> = (0..n).map(|_| (rng.random(), rng.random())).collect();
    let mut coords = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let (dx, dy) = (pts[i].0 - pts[j].0, pts[i].1 - pts[j].1);
            if dx * dx + dy * dy < radius * radius {
                coords.extend([(i, j), (j, i)]);
            }
        }
    }
    SparseMatrix::from_pattern(n, n, &coords).unwrap()
}

fn with_loops(a: &SparseMatrix) -> SparseMatrix {
    let mut coords: Vec<_> = a.iter().map(|(r, c, _)| (r, c)).collect();
    coords.extend((0..a.n_rows()).map(|i| (i, i)));
    SparseMatrix::from_pattern(a.n_rows(), a.n_cols(), &coords).unwrap()
}

fn random_features(rng: &mut ChaCha8Rng, n: usize, d: usize) -> DenseMatrix {
    DenseMatrix::from_vec(n, d, (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn random_labels(rng: &mut ChaCha8Rng, n: usize, classes: usize) -> LabelSet {
    let mut ids: Vec<usize> = (0..n).filter(|_| rng.random_bool(0.4)).collect();
    if ids.is_empty() {
        ids.push(0);
    }
    let labels = ids.iter().map(|_| rng.random_range(0..classes)).collect();
    LabelSet::new(ids, labels, classes).unwrap()
}

/// Arbitrary ownership with every part non-empty; balance is not the point.
fn loose_partition(weights: &[u64], p: usize, seed: u64) -> Partition {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = weights.len();
    let mut owner: Vec<usize> = (0..n).map(|v| if v < p { v } else { rng.random_range(0..p) }).collect();
    owner.rotate_left(rng.random_range(0..n));
    Partition::new(p, owner, weights, p as f64).unwrap()
}

fn balanced_within(pi: &Partition, weights: &[u64]) -> bool {
    // max W(V_m) <= 1.01 * W_avg, in integers
    let total: u64 = weights.iter().sum();
    let max = *pi.part_weights().iter().max().unwrap();
    100 * pi.p() as u64 * max <= 101 * total
}

// ---------- criteria ----------

fn serial_parallel_equivalence() -> Outcome {
    let ps = [1usize, 2, 4, 8];
    for i in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + i);
        let n = rng.random_range(16..=64);
        let layers = rng.random_range(1..=3);
        let dims: Vec<usize> = (0..=layers).map(|_| rng.random_range(2..=6)).collect();
        let p = ps[i as usize % 4];
        let directed = i % 3 == 2;
        let a = random_graph(&mut rng, n, 0.1, directed);
        let h0 = random_features(&mut rng, n, dims[0]);
        let labels = random_labels(&mut rng, n, dims[layers]);
        let model = ok(GcnModel::init(&dims, Activation::Relu, 0.3, i))?;
        let weights = vec![1; n];
        let pi = loose_partition(&weights, p, i);
        let epochs = 3;

        let (a_hat, a_back) = ok(propagation_operators(&a))?;
        let (serial, losses) = ok(train(&model, &a_hat, &a_back, &h0, &labels, epochs))?;
        let problem = DistProblem {
            adjacency: &a,
            features: &h0,
            labels: &labels,
            partition: &pi,
        };
        let out = ok(train_epochs(&model, &problem, TrainMode::FullBatch, epochs, Scheduler::Threaded))?;
        record(p, &out.metrics);

        for (k, (w, s)) in out.model.weights().iter().zip(serial.weights()).enumerate() {
            let rel = w.max_rel_diff(s, 1e-300);
            ensure(rel <= 1e-8, || format!("instance {i}: W{k} relative difference {rel:e}"))?;
        }
        for (e, (m, l)) in out.metrics.iter().zip(&losses).enumerate() {
            let rel = (m.loss - l).abs() / l.abs().max(1e-300);
            ensure(rel <= 1e-8, || format!("instance {i}: epoch {e} loss {} vs {l}", m.loss))?;
        }

        let expected = ok(feedforward(&serial, &a_hat, &h0))?.output().argmax_rows();
        let mut states = ok(scatter(&a_hat, &a_back, &h0, &labels, &pi, &out.model))?;
        let net = Scheduler::Threaded.network(p);
        ok(parallel_feedforward(&mut states, &net, Scheduler::Threaded))?;
        let got = ok(gather_layer(&states, layers))?.argmax_rows();
        ensure(got == expected, || format!("instance {i}: predictions differ"))?;
    }
    Ok("20 instances, p in {1,2,4,8}, L in 1..=3".into())
}

fn cut_equals_volume() -> Outcome {
    for i in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(2000 + i);
        let n = rng.random_range(20..=60);
        let layers = rng.random_range(1..=3);
        let dims: Vec<usize> = (0..=layers).map(|_| rng.random_range(1..=7)).collect();
        let p = [2, 4, 8][rng.random_range(0..3)];
        let a = random_graph(&mut rng, n, 0.12, false);
        let h0 = random_features(&mut rng, n, dims[0]);
        let labels = random_labels(&mut rng, n, dims[layers]);
        let model = ok(GcnModel::init(&dims, Activation::Relu, 0.1, i))?;
        let h = ok(build_hypergraph_model(&with_loops(&a)))?;
        let pi = if i % 2 == 0 {
            loose_partition(h.vertex_weight(), p, i)
        } else {
            ok(partition_hypergraph_fm(&h, &PartitionConfig::new(p, i).with_epsilon(0.1)))?
        };
        let problem = DistProblem {
            adjacency: &a,
            features: &h0,
            labels: &labels,
            partition: &pi,
        };
        let out = ok(train_epochs(&model, &problem, TrainMode::FullBatch, 2, Scheduler::Sequential))?;
        record(p, &out.metrics);

        let cut = ok(connectivity_cut(&h, pi.assignment()))?;
        let forward: u64 = dims[..layers].iter().map(|&d| d as u64).sum::<u64>() * cut;
        let backward: u64 = dims[1..].iter().map(|&d| d as u64).sum::<u64>() * cut;
        let predicted = ok(predicted_total_volume(&h, &pi, &dims))?;
        ensure(predicted == forward + backward, || format!("instance {i}: model prediction {predicted}"))?;
        for m in &out.metrics {
            ensure(m.forward_words == forward && m.backward_words == backward, || {
                format!(
                    "instance {i}: measured {}+{} words, cut predicts {forward}+{backward}",
                    m.forward_words, m.backward_words
                )
            })?;
            ensure(m.total_words == predicted, || format!("instance {i}: total words {}", m.total_words))?;
        }
    }
    Ok("20 undirected instances, exact integer match".into())
}

fn figure_instance() -> (SparseMatrix, Vec<usize>) {
    let rows: [&[usize]; 6] = [&[0, 1, 4], &[0, 1, 3, 5], &[2, 3], &[1, 2, 3, 4, 5], &[0, 3, 4], &[1, 3, 5]];
    let coords: Vec<_> = rows
        .iter()
        .enumerate()
        .flat_map(|(r, cols)| cols.iter().map(move |&c| (r, c)))
        .collect();
    (SparseMatrix::from_pattern(6, 6, &coords).unwrap(), vec![0, 0, 1, 1, 2, 2])
}

fn graph_model_overestimates() -> Outcome {
    let (a, owner) = figure_instance();
    let h = ok(build_hypergraph_model(&a))?;
    let g = ok(build_graph_model(&a))?;
    let pi = ok(Partition::new(3, owner.clone(), h.vertex_weight(), 1.0))?;
    let v4 = 3;
    let graph_v4 = graph_model_vertex_volume(&g, &pi, v4);
    let lambda_v4 = ok(evaluate_hypergraph_cut(&h, &pi))?.per_net_lambda[v4] as u64;
    let plan = ok(build_comm_plan(&a, &pi))?;
    let measured_v4 = (0..3).filter(|&to| plan.send(owner[v4], to).contains(&v4)).count() as u64;
    ensure(graph_v4 == 3, || format!("graph model charges v4 {graph_v4}"))?;
    ensure(lambda_v4 - 1 == 2 && measured_v4 == 2, || {
        format!("v4 hypergraph volume {} measured {measured_v4}", lambda_v4 - 1)
    })?;

    let mut strict = 0;
    for i in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(3000 + i);
        let n = rng.random_range(8..=40);
        let p = rng.random_range(2..=5);
        let a = with_loops(&random_graph(&mut rng, n, 0.15, i % 2 == 1));
        let h = ok(build_hypergraph_model(&a))?;
        let g = ok(build_graph_model(&a))?;
        let pi = loose_partition(h.vertex_weight(), p, i);
        let hyper = ok(connectivity_cut(&h, pi.assignment()))?;
        let graph = ok(graph_model_volume(&g, &pi))?;
        let measured = plan_volume(&ok(build_comm_plan(&a, &pi))?, 1).total_words;
        ensure(measured == hyper, || format!("instance {i}: plan moves {measured}, cut {hyper}"))?;
        ensure(hyper <= graph, || format!("instance {i}: hypergraph {hyper} > graph {graph}"))?;
        strict += usize::from(hyper < graph);
    }
    ensure(strict > 0, || "no strict witness among 50 instances".into())?;
    Ok(format!("v4: graph 3, hypergraph 2, measured 2; {strict}/50 strict"))
}

fn experiment_config(graph: &str, p: usize, seed: u64, partitioners: Vec<PartitionerKind>) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(PathBuf::from(graph), p, vec![4, 4, 2], seed);
    cfg.partitioners = partitioners;
    cfg.epochs = 1;
    cfg.scheduler = Scheduler::Sequential;
    cfg
}

fn balance_constraint() -> Outcome {
    use PartitionerKind::*;
    let mut checked = 0;
    let mut graphs: Vec<(String, SparseMatrix)> = vec![("grid24".into(), grid(24)), ("grid32".into(), grid(32))];
    for s in 0..3 {
        graphs.push((format!("communities{s}"), two_communities(40 + s, 160, 0.05, 25)));
        graphs.push((format!("geometric{s}"), geometric(50 + s, 400, 0.08)));
        let mut rng = ChaCha8Rng::seed_from_u64(60 + s);
        graphs.push((format!("random{s}"), random_graph(&mut rng, 300, 0.03, s == 1)));
    }
    for (name, a) in &graphs {
        let n = a.n_rows();
        for p in [2, 4, 8, 16] {
            let mut cfg = experiment_config(name, p, p as u64, vec![Rp, Gp, Hp, Shp]);
            cfg.mode = BatchMode::Mini {
                batch_size: n / 4,
                batches: 1,
            };
            cfg.shp_batches = 20;
            let out = execute(&cfg, a).map_err(|e| format!("{name} p={p}: {e}"))?;
            record_report(&out.report);
            let weights = ok(build_hypergraph_model(&with_loops(a)))?.vertex_weight().to_vec();
            let total: u64 = weights.iter().sum();
            for run in &out.report.runs {
                let max = *run.part_weights.iter().max().unwrap();
                ensure(run.part_weights.iter().sum::<u64>() == total, || format!("{name}: weights lost"))?;
                ensure(100 * p as u64 * max <= 101 * total, || {
                    format!("{name} p={p} {}: part weight {max} over 1.01 x {total}/{p}", run.partitioner)
                })?;
                checked += 1;
            }
        }
    }
    let (a, _) = figure_instance();
    let h = ok(build_hypergraph_model(&a))?;
    let pi = ok(partition_hypergraph_fm(&h, &PartitionConfig::new(2, 1)))?;
    ensure(balanced_within(&pi, h.vertex_weight()), || "six-vertex instance unbalanced".into())?;
    Ok(format!("{} partitions on {} graphs", checked + 1, graphs.len() + 1))
}

/// Exhaustive minimum connectivity cut over assignments meeting the cap.
fn brute_force(h: &Hypergraph, p: usize, epsilon: f64) -> Option<u64> {
    let n = h.n_vertices();
    let w = h.vertex_weight();
    let total: u64 = w.iter().sum();
    let cap = (1.0 + epsilon) * total as f64 / p as f64;
    let mut best = None;
    let mut assignment = vec![0usize; n];
    let count = p.pow(n as u32);
    for code in 0..count {
        let mut c = code;
        for slot in assignment.iter_mut() {
            *slot = c % p;
            c /= p;
        }
        let mut loads = vec![0u64; p];
        for (v, &part) in assignment.iter().enumerate() {
            loads[part] += w[v];
        }
        if loads.iter().any(|&l| l == 0 || l as f64 > cap) {
            continue;
        }
        let cut = connectivity_cut(h, &assignment).unwrap();
        best = Some(best.map_or(cut, |b: u64| b.min(cut)));
    }
    best
}

fn partitioner_quality() -> Outcome {
    use PartitionerKind::*;
    let mut worst_ratio: f64 = 0.0;
    let mut hp_not_above_gp = 0;
    let mut cases = 0;
    for p in [4usize, 8, 16] {
        for seed in 1..=3u64 {
            let graphs = [
                ("grid32", grid(32)),
                ("communities", two_communities(70 + seed, 128, 0.06, 3)),
            ];
            for (name, a) in &graphs {
                let cfg = experiment_config(name, p, seed, vec![Rp, Gp, Hp]);
                let out = execute(&cfg, a).map_err(|e| format!("{name} p={p} seed={seed}: {e}"))?;
                record_report(&out.report);
                let run = |k: &str| out.report.runs.iter().find(|r| r.partitioner == k).unwrap();
                let (rp, hp) = (&run("rp").epochs[0], &run("hp").epochs[0]);
                ensure(hp.total_words < rp.total_words, || {
                    format!("{name} p={p} seed={seed}: hp words {} >= rp {}", hp.total_words, rp.total_words)
                })?;
                ensure(hp.total_msgs < rp.total_msgs, || {
                    format!("{name} p={p} seed={seed}: hp msgs {} >= rp {}", hp.total_msgs, rp.total_msgs)
                })?;
                let gp = &run("gp").epochs[0];
                ensure(gp.total_words < rp.total_words, || {
                    format!("{name} p={p} seed={seed}: gp words {} >= rp {}", gp.total_words, rp.total_words)
                })?;
                hp_not_above_gp += usize::from(hp.total_words <= gp.total_words);
                worst_ratio = worst_ratio.max(hp.total_words as f64 / rp.total_words as f64);
                cases += 1;
            }
        }
    }

    let mut worst_gap = 0;
    for i in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(4000 + i);
        let n = rng.random_range(4..=10);
        let p = 2;
        let n_nets = rng.random_range(n..=2 * n);
        let nets: Vec<Vec<usize>> = (0..n_nets)
            .map(|_| {
                let size = rng.random_range(2..=4.min(n));
                let pins: BTreeSet<usize> = (0..size).map(|_| rng.random_range(0..n)).collect();
                pins.into_iter().collect()
            })
            .collect();
        let weights: Vec<u64> = (0..n).map(|_| rng.random_range(1..=3)).collect();
        let h = ok(Hypergraph::new(n, nets, weights))?;
        let epsilon = 0.25;
        let Some(optimum) = brute_force(&h, p, epsilon) else { continue };
        let pi = partition_hypergraph_fm(&h, &PartitionConfig::new(p, i).with_epsilon(epsilon))
            .map_err(|e| format!("small instance {i}: {e} (optimum {optimum} exists)"))?;
        let cut = ok(connectivity_cut(&h, pi.assignment()))?;
        ensure(cut <= optimum + 2, || format!("small instance {i}: fm {cut}, optimum {optimum}"))?;
        worst_gap = worst_gap.max(cut - optimum);
    }
    Ok(format!(
        "{cases} grid/community runs, worst hp/rp volume {worst_ratio:.3}, hp <= gp in {hp_not_above_gp}; \
         fm bisection worst gap {worst_gap} over brute force"
    ))
}

fn hoeffding_bound() -> Outcome {
    let a = ok(hoeffding_min_nets(2, 0.1, 0.5))?;
    let b = ok(hoeffding_min_nets(27, 0.1, 0.5))?;
    ensure(a == 70 && b == 46_857, || format!("got {a} and {b}"))?;
    let ps: Vec<usize> = (2..12).collect();
    let thetas: Vec<f64> = (1..=10).map(|i| 0.02 * i as f64).collect();
    let mut grid = vec![vec![0u64; thetas.len()]; ps.len()];
    for (i, &p) in ps.iter().enumerate() {
        for (j, &t) in thetas.iter().enumerate() {
            grid[i][j] = ok(hoeffding_min_nets(p, t, 0.1))?;
        }
    }
    for i in 0..ps.len() {
        for j in 0..thetas.len() {
            if i + 1 < ps.len() {
                ensure(grid[i + 1][j] >= grid[i][j], || format!("not increasing in p at {i},{j}"))?;
            }
            if j + 1 < thetas.len() {
                ensure(grid[i][j + 1] <= grid[i][j], || format!("not decreasing in theta at {i},{j}"))?;
            }
        }
    }
    let mut last = u64::MAX;
    for k in 1..=100 {
        let v = ok(hoeffding_min_nets(8, 0.1, k as f64 / 101.0))?;
        ensure(v <= last, || format!("not decreasing in delta at step {k}"))?;
        last = v;
    }
    Ok("70 and 46857; monotone on a 10x10 (p, theta) grid and 100 deltas".into())
}

fn shp_versus_hp() -> Outcome {
    let a = geometric(7, 256, 0.11);
    let n = a.n_rows();
    let p = 8;
    let spec = MiniBatchSpec::new(64);
    let cfg = PartitionConfig::new(p, 11);
    let h = ok(build_hypergraph_model(&with_loops(&a)))?;
    let hp = ok(partition_hypergraph_fm(&h, &cfg))?;
    let shp = ok(partition_stochastic(&a, &spec, 200, &cfg))?;
    ensure(balanced_within(&hp, h.vertex_weight()) && balanced_within(&shp, h.vertex_weight()), || {
        "unbalanced partition".into()
    })?;

    let mut held_out = ok(BatchSampler::new(spec, n, 0x5eed_0ff5))?;
    let (mut hp_total, mut shp_total) = (0u64, 0u64);
    for _ in 0..200 {
        let batch = held_out.next_batch();
        let bh = ok(batch_hypergraph(&a, &batch, vec![1; n]))?;
        hp_total += ok(connectivity_cut(&bh, hp.assignment()))?;
        shp_total += ok(connectivity_cut(&bh, shp.assignment()))?;
    }
    let (hp_mean, shp_mean) = (hp_total as f64 / 200.0, shp_total as f64 / 200.0);
    ensure(shp_total <= hp_total, || format!("shp {shp_mean:.2} > hp {hp_mean:.2} per batch"))?;
    Ok(format!("per-batch volume shp {shp_mean:.2} vs hp {hp_mean:.2}"))
}

fn message_ceiling() -> Outcome {
    use PartitionerKind::*;
    // a directed graph and a mini-batch run on top of everything recorded so far
    let mut rng = ChaCha8Rng::seed_from_u64(90);
    let directed = random_graph(&mut rng, 80, 0.08, true);
    let mut cfg = experiment_config("directed", 8, 3, vec![Rp, Hp]);
    cfg.mode = BatchMode::Mini {
        batch_size: 40,
        batches: 3,
    };
    record_report(&ok(execute(&cfg, &directed))?.report);
    cfg.mode = BatchMode::Full;
    record_report(&ok(execute(&cfg, &directed))?.report);

    let log = EXCHANGES.lock().unwrap();
    ensure(!log.is_empty(), || "no runs recorded".into())?;
    for &(p, per_rank, per_pair) in log.iter() {
        ensure(per_rank < p as u64, || format!("a rank sent {per_rank} messages in one exchange at p={p}"))?;
        ensure(per_pair <= 1, || format!("{per_pair} messages between one pair in one exchange"))?;
    }
    Ok(format!("{} epochs checked", log.len()))
}

fn determinism() -> Outcome {
    use PartitionerKind::*;
    let a = two_communities(5, 64, 0.1, 40);
    let mut cfg = experiment_config("communities", 4, 21, vec![Rp, Gp, Hp, Shp]);
    cfg.mode = BatchMode::Mini {
        batch_size: 40,
        batches: 2,
    };
    cfg.shp_batches = 30;
    cfg.epochs = 2;
    cfg.emit_plan = true;
    cfg.emit_hypergraph = true;
    cfg.scheduler = Scheduler::Threaded;

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut files = Vec::new();
    for i in 0..2 {
        let out = ok(execute(&cfg, &a))?;
        record_report(&out.report);
        let written = ok(write_outputs(&dir.path().join(format!("run{i}")), &out))?;
        let mut paths = vec![written.report, written.csv];
        paths.extend(written.plans);
        paths.extend(written.hypergraph);
        let bytes: Vec<Vec<u8>> = paths.iter().map(|p| std::fs::read(p).unwrap()).collect();
        files.push(bytes);
    }
    ensure(files[0] == files[1], || "rerun wrote different bytes".into())?;

    let threaded = ok(execute(&cfg, &a))?.report;
    cfg.scheduler = Scheduler::Sequential;
    let sequential = ok(execute(&cfg, &a))?.report;
    ensure(threaded.runs == sequential.runs && threaded.comparison == sequential.comparison, || {
        "schedulers disagree".into()
    })?;
    Ok(format!("{} output files identical; schedulers agree", files[0].len()))
}

fn main() {
    type Criterion = (&'static str, fn() -> Outcome, Option<u64>);
    let criteria: [Criterion; 9] = [
        ("1 serial/parallel equivalence", serial_parallel_equivalence, Some(30)),
        ("2 cut equals measured volume", cut_equals_volume, Some(10)),
        ("3 graph model overestimates", graph_model_overestimates, Some(5)),
        ("4 balance constraint", balance_constraint, None),
        ("5 partitioner quality", partitioner_quality, Some(60)),
        ("6 hoeffding bound", hoeffding_bound, None),
        ("7 shp vs hp on mini-batches", shp_versus_hp, Some(120)),
        ("8 message ceiling", message_ceiling, None),
        ("9 determinism", determinism, None),
    ];
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, run, budget) in criteria {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        let result = match (result, budget) {
            (Ok(_), Some(b)) if elapsed > Duration::from_secs(b) => Err(format!("took longer than {b} s")),
            (r, _) => r,
        };
        let secs = elapsed.as_secs_f64();
        match result {
            Ok(detail) => println!("PASS  {name} ({secs:.1} s): {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name} ({secs:.1} s): {why}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
