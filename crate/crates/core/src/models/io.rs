//! Line-oriented text formats for hypergraphs and partitions.
//!
//! Hypergraph:
//!
//! ```text
//! % comment lines start with '%' or '#'
//! <n_vertices> <n_nets>
//! <pins of net 0, 0-based, space separated>
//! ...
//! <pins of net n_nets-1>
//! [<weight of vertex 0> ... <weight of vertex n_vertices-1>]
//! ```
//!
//! The trailing weight line is optional; vertices default to unit weight.
//!
//! Partition: one part id per line, line `i` holding the part of vertex `i`.

use std::fmt::Write as _;
use std::path::Path;

use super::{Hypergraph, Partition};
use crate::error::{Error, Result};

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('%') && !l.starts_with('#'))
}

fn parse_numbers<T: std::str::FromStr>(line_no: usize, line: &str) -> Result<Vec<T>> {
    line.split_whitespace()
        .map(|tok| {
            tok.parse().map_err(|_| Error::Parse {
                line: line_no,
                msg: format!("invalid number '{tok}'"),
            })
        })
        .collect()
}

pub fn write_hypergraph(h: &Hypergraph) -> String {
    let mut out = String::new();
    writeln!(out, "{} {}", h.n_vertices(), h.n_nets()).unwrap();
    for pins in h.nets() {
        let line: Vec<String> = pins.iter().map(usize::to_string).collect();
        writeln!(out, "{}", line.join(" ")).unwrap();
    }
    let weights: Vec<String> = h.vertex_weight().iter().map(u64::to_string).collect();
    writeln!(out, "{}", weights.join(" ")).unwrap();
    out
}

pub fn read_hypergraph(text: &str) -> Result<Hypergraph> {
    let mut lines = content_lines(text);
    let (line_no, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        msg: "missing header".into(),
    })?;
    let header: Vec<usize> = parse_numbers(line_no, header)?;
    let [n_vertices, n_nets] = header[..] else {
        return Err(Error::Parse {
            line: line_no,
            msg: "header must be '<n_vertices> <n_nets>'".into(),
        });
    };
    let mut nets = Vec::with_capacity(n_nets);
    for j in 0..n_nets {
        let (line_no, line) = lines.next().ok_or(Error::Parse {
            line: line_no,
            msg: format!("expected {n_nets} nets, found {j}"),
        })?;
        let pins: Vec<usize> = parse_numbers(line_no, line)?;
        if let Some(&v) = pins.iter().find(|&&v| v >= n_vertices) {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("pin {v} out of range"),
            });
        }
        nets.push(pins);
    }
    let weights = match lines.next() {
        Some((line_no, line)) => {
            let w: Vec<u64> = parse_numbers(line_no, line)?;
            if w.len() != n_vertices {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("{} weights for {n_vertices} vertices", w.len()),
                });
            }
            if let Some((line_no, _)) = lines.next() {
                return Err(Error::Parse {
                    line: line_no,
                    msg: "unexpected trailing content".into(),
                });
            }
            w
        }
        None => vec![1; n_vertices],
    };
    Hypergraph::new(n_vertices, nets, weights)
}

pub fn write_partition(pi: &Partition) -> String {
    let mut out = String::with_capacity(pi.n_vertices() * 3);
    for &part in pi.assignment() {
        writeln!(out, "{part}").unwrap();
    }
    out
}

/// Parses a partition produced by an external tool. `p` is the expected
/// part count; every part must be non-empty.
pub fn read_partition(text: &str, p: usize, vertex_weight: &[u64], epsilon: f64) -> Result<Partition> {
    let mut assignment = Vec::with_capacity(vertex_weight.len());
    for (line_no, line) in content_lines(text) {
        let part: usize = line.parse().map_err(|_| Error::Parse {
            line: line_no,
            msg: format!("invalid part id '{line}'"),
        })?;
        if part >= p {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("part id {part} >= p = {p}"),
            });
        }
        assignment.push(part);
    }
    if assignment.len() != vertex_weight.len() {
        return Err(Error::Unassigned {
            vertex: assignment.len().min(vertex_weight.len()),
        });
    }
    Partition::new(p, assignment, vertex_weight, epsilon)
}

pub fn read_partition_file(path: &Path, p: usize, vertex_weight: &[u64], epsilon: f64) -> Result<Partition> {
    let text = std::fs::read_to_string(path)?;
    read_partition(&text, p, vertex_weight, epsilon)
}
