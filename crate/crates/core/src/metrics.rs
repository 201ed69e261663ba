//! Comparison tables: per-partitioner communication normalized to the
//! random baseline, geometric means across datasets and the HP/GP ratio.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::runtime::EpochMetrics;

/// Identifier of the random-partitioning baseline.
pub const BASELINE: &str = "rp";

/// Per-epoch averages of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub dataset: String,
    pub partitioner: String,
    pub avg_volume: f64,
    pub max_volume: f64,
    pub avg_msgs: f64,
    pub max_msgs: f64,
    pub balance_ratio: f64,
    /// Connectivity-1 cut of the partition on the column-net hypergraph.
    pub cut: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub runtime_secs: Option<f64>,
}

impl RunSummary {
    pub fn from_epochs(
        dataset: &str,
        partitioner: &str,
        epochs: &[EpochMetrics],
        balance_ratio: f64,
        cut: u64,
    ) -> Self {
        let mean = |f: &dyn Fn(&EpochMetrics) -> f64| {
            if epochs.is_empty() {
                0.0
            } else {
                epochs.iter().map(f).sum::<f64>() / epochs.len() as f64
            }
        };
        Self {
            dataset: dataset.to_string(),
            partitioner: partitioner.to_string(),
            avg_volume: mean(&|e| e.avg_words_per_proc),
            max_volume: mean(&|e| e.max_words_per_proc as f64),
            avg_msgs: mean(&|e| e.avg_msgs_per_proc),
            max_msgs: mean(&|e| e.max_msgs_per_proc as f64),
            balance_ratio,
            cut,
            runtime_secs: None,
        }
    }

    pub fn with_runtime(mut self, secs: f64) -> Self {
        self.runtime_secs = Some(secs);
        self
    }
}

/// One partitioner on one dataset. Normalized fields are `None` when the
/// baseline value is zero and this run's is not.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub dataset: String,
    pub partitioner: String,
    pub avg_volume_norm: Option<f64>,
    pub max_volume_norm: Option<f64>,
    pub avg_msgs_norm: Option<f64>,
    pub max_msgs_norm: Option<f64>,
    /// Simulated time relative to the baseline; informational.
    pub runtime_ratio: Option<f64>,
    pub balance_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
    /// Geometric mean over datasets, one row per partitioner, with dataset
    /// set to `"geomean"`.
    pub geomean: Vec<ComparisonRow>,
    /// Geometric-mean HP values divided by GP values, when both ran.
    pub hp_over_gp: Option<ComparisonRow>,
}

fn normalize(x: f64, base: f64) -> Option<f64> {
    if base == 0.0 {
        (x == 0.0).then_some(1.0)
    } else {
        Some(x / base)
    }
}

/// `exp(mean(ln x))`; `None` for an empty input.
pub fn geometric_mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    Some((values.iter().map(|v| v.ln()).sum::<f64>() / values.len() as f64).exp())
}

pub fn compare(runs: &[RunSummary]) -> Result<Comparison> {
    let mut by_dataset: BTreeMap<&str, Vec<&RunSummary>> = BTreeMap::new();
    for r in runs {
        by_dataset.entry(&r.dataset).or_default().push(r);
    }
    let mut rows = Vec::with_capacity(runs.len());
    for (dataset, group) in &by_dataset {
        let base = group
            .iter()
            .find(|r| r.partitioner == BASELINE)
            .ok_or_else(|| Error::MissingBaseline(dataset.to_string()))?;
        for r in group {
            let runtime_ratio = match (r.runtime_secs, base.runtime_secs) {
                (Some(t), Some(b)) if b > 0.0 => Some(t / b),
                _ => None,
            };
            rows.push(ComparisonRow {
                dataset: dataset.to_string(),
                partitioner: r.partitioner.clone(),
                avg_volume_norm: normalize(r.avg_volume, base.avg_volume),
                max_volume_norm: normalize(r.max_volume, base.max_volume),
                avg_msgs_norm: normalize(r.avg_msgs, base.avg_msgs),
                max_msgs_norm: normalize(r.max_msgs, base.max_msgs),
                runtime_ratio,
                balance_ratio: r.balance_ratio,
            });
        }
    }

    let mut partitioners: Vec<&str> = Vec::new();
    for r in runs {
        if !partitioners.contains(&r.partitioner.as_str()) {
            partitioners.push(&r.partitioner);
        }
    }
    let geomean: Vec<ComparisonRow> = partitioners
        .iter()
        .map(|&name| {
            let mine: Vec<&ComparisonRow> = rows.iter().filter(|r| r.partitioner == name).collect();
            let gm = |f: fn(&ComparisonRow) -> Option<f64>| {
                let vals: Option<Vec<f64>> = mine.iter().map(|r| f(r)).collect();
                vals.and_then(|v| geometric_mean(&v))
            };
            let balances: Vec<f64> = mine.iter().map(|r| r.balance_ratio).collect();
            ComparisonRow {
                dataset: "geomean".into(),
                partitioner: name.to_string(),
                avg_volume_norm: gm(|r| r.avg_volume_norm),
                max_volume_norm: gm(|r| r.max_volume_norm),
                avg_msgs_norm: gm(|r| r.avg_msgs_norm),
                max_msgs_norm: gm(|r| r.max_msgs_norm),
                runtime_ratio: gm(|r| r.runtime_ratio),
                balance_ratio: geometric_mean(&balances).unwrap_or(0.0),
            }
        })
        .collect();

    let find = |name: &str| geomean.iter().find(|r| r.partitioner == name);
    let hp_over_gp = match (find("hp"), find("gp")) {
        (Some(hp), Some(gp)) => {
            let ratio = |a: Option<f64>, b: Option<f64>| match (a, b) {
                (Some(a), Some(b)) => normalize(a, b),
                _ => None,
            };
            Some(ComparisonRow {
                dataset: "geomean".into(),
                partitioner: "hp/gp".into(),
                avg_volume_norm: ratio(hp.avg_volume_norm, gp.avg_volume_norm),
                max_volume_norm: ratio(hp.max_volume_norm, gp.max_volume_norm),
                avg_msgs_norm: ratio(hp.avg_msgs_norm, gp.avg_msgs_norm),
                max_msgs_norm: ratio(hp.max_msgs_norm, gp.max_msgs_norm),
                runtime_ratio: ratio(hp.runtime_ratio, gp.runtime_ratio),
                balance_ratio: hp.balance_ratio / gp.balance_ratio,
            })
        }
        _ => None,
    };
    Ok(Comparison {
        rows,
        geomean,
        hp_over_gp,
    })
}

/// CSV with header
/// `dataset,partitioner,avg_volume_norm,max_volume_norm,avg_msgs_norm,max_msgs_norm,runtime_ratio,balance_ratio`;
/// per-dataset rows, then geometric means, then the HP/GP row. Undefined
/// values are empty fields.
pub fn comparison_csv(cmp: &Comparison) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in cmp.rows.iter().chain(&cmp.geomean).chain(&cmp.hp_over_gp) {
        w.serialize(row).map_err(|e| Error::InvalidArgument(format!("csv: {e}")))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidArgument(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn run(dataset: &str, partitioner: &str, avg: f64, max: f64, msgs: f64) -> RunSummary {
        RunSummary {
            dataset: dataset.into(),
            partitioner: partitioner.into(),
            avg_volume: avg,
            max_volume: max,
            avg_msgs: msgs,
            max_msgs: msgs + 1.0,
            balance_ratio: 1.0,
            cut: 0,
            runtime_secs: None,
        }
    }

    #[test]
    fn normalizes_to_baseline() {
        let cmp = compare(&[run("g", "rp", 10.0, 20.0, 4.0), run("g", "hp", 5.0, 5.0, 2.0)]).unwrap();
        let hp = cmp.rows.iter().find(|r| r.partitioner == "hp").unwrap();
        assert_eq!(hp.avg_volume_norm, Some(0.5));
        assert_eq!(hp.max_volume_norm, Some(0.25));
        assert_eq!(hp.avg_msgs_norm, Some(0.5));
        let rp = cmp.rows.iter().find(|r| r.partitioner == "rp").unwrap();
        assert_eq!(
            (rp.avg_volume_norm, rp.max_volume_norm, rp.avg_msgs_norm, rp.max_msgs_norm),
            (Some(1.0), Some(1.0), Some(1.0), Some(1.0))
        );
        assert!(cmp.hp_over_gp.is_none());
    }

    #[test]
    fn identical_runs_normalize_to_one() {
        let runs: Vec<_> = ["rp", "gp", "hp"].iter().map(|p| run("g", p, 3.0, 4.0, 2.0)).collect();
        let cmp = compare(&runs).unwrap();
        for r in cmp.rows.iter().chain(&cmp.geomean) {
            assert_eq!(r.avg_volume_norm, Some(1.0));
            assert_eq!(r.max_msgs_norm, Some(1.0));
        }
        assert_eq!(cmp.hp_over_gp.unwrap().avg_volume_norm, Some(1.0));
    }

    #[test]
    fn geometric_mean_across_datasets() {
        let runs = vec![
            run("a", "rp", 4.0, 4.0, 1.0),
            run("a", "hp", 1.0, 1.0, 1.0),
            run("b", "rp", 2.0, 2.0, 1.0),
            run("b", "hp", 2.0, 2.0, 1.0),
        ];
        let cmp = compare(&runs).unwrap();
        let hp = cmp.geomean.iter().find(|r| r.partitioner == "hp").unwrap();
        assert!((hp.avg_volume_norm.unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn baseline_is_required() {
        let err = compare(&[run("g", "hp", 1.0, 1.0, 1.0)]).unwrap_err();
        assert!(matches!(err, Error::MissingBaseline(d) if d == "g"));
    }

    #[test]
    fn zero_baseline() {
        let cmp = compare(&[run("g", "rp", 0.0, 0.0, 0.0), run("g", "hp", 0.0, 1.0, 0.0)]).unwrap();
        let hp = &cmp.rows[1];
        assert_eq!(hp.avg_volume_norm, Some(1.0));
        assert_eq!(hp.max_volume_norm, None);
    }

    #[test]
    fn runtime_ratio_only_with_timings() {
        let cmp = compare(&[
            run("g", "rp", 1.0, 1.0, 1.0).with_runtime(2.0),
            run("g", "hp", 1.0, 1.0, 1.0).with_runtime(1.0),
        ])
        .unwrap();
        assert_eq!(cmp.rows[1].runtime_ratio, Some(0.5));
        let cmp = compare(&[run("g", "rp", 1.0, 1.0, 1.0), run("g", "hp", 1.0, 1.0, 1.0)]).unwrap();
        assert_eq!(cmp.rows[1].runtime_ratio, None);
    }

    #[test]
    fn csv_layout() {
        let cmp = compare(&[
            run("g", "rp", 2.0, 2.0, 2.0),
            run("g", "gp", 1.0, 2.0, 2.0),
            run("g", "hp", 1.0, 1.0, 1.0),
        ])
        .unwrap();
        let text = comparison_csv(&cmp).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(
            lines[0],
            "dataset,partitioner,avg_volume_norm,max_volume_norm,avg_msgs_norm,max_msgs_norm,runtime_ratio,balance_ratio"
        );
        assert_eq!(lines[1], "g,rp,1.0,1.0,1.0,1.0,,1.0");
        assert_eq!(lines.len(), 1 + 3 + 3 + 1);
        assert!(lines[7].starts_with("geomean,hp/gp,1.0,0.5,"));
    }

    proptest! {
        #[test]
        fn geometric_mean_is_order_free(mut xs in proptest::collection::vec(0.01f64..100.0, 1..20), seed in 0u64..1000) {
            let gm = geometric_mean(&xs).unwrap();
            let direct = (xs.iter().map(|x| x.ln()).sum::<f64>() / xs.len() as f64).exp();
            prop_assert!((gm - direct).abs() <= 1e-12 * direct.max(1.0));
            let k = (seed as usize) % xs.len();
            xs.rotate_left(k);
            xs.reverse();
            let again = geometric_mean(&xs).unwrap();
            prop_assert!((gm - again).abs() <= 1e-12 * gm.max(1.0));
        }
    }
}
