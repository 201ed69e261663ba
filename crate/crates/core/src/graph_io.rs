//! Adjacency readers and writers.
//!
//! Edge list: one `u v` pair per line, 0-based; further columns are ignored.
//! Lines starting with `#` or `%` are comments. An optional `n=<count>`
//! line before the first edge fixes the vertex count; otherwise it is one
//! more than the largest id.
//!
//! MatrixMarket: `coordinate` matrices with `pattern`, `real` or `integer`
//! fields and `general` or `symmetric` symmetry, 1-based. Values are
//! ignored.
//!
//! Every loaded matrix is a unit-valued pattern with duplicates collapsed.
//! Unless `directed` is set, the pattern is symmetrized.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphFormat {
    EdgeList,
    MatrixMarket,
}

impl FromStr for GraphFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "edge_list" | "edgelist" | "edges" => Ok(GraphFormat::EdgeList),
            "matrix_market" | "mtx" | "mm" => Ok(GraphFormat::MatrixMarket),
            other => Err(Error::InvalidArgument(format!("unknown graph format '{other}'"))),
        }
    }
}

impl GraphFormat {
    /// Guesses the format from a file extension.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("mtx") => GraphFormat::MatrixMarket,
            _ => GraphFormat::EdgeList,
        }
    }
}

pub fn load_graph(path: &Path, format: GraphFormat, directed: bool) -> Result<SparseMatrix> {
    let text = std::fs::read_to_string(path)?;
    parse_graph(&text, format, directed)
}

pub fn parse_graph(text: &str, format: GraphFormat, directed: bool) -> Result<SparseMatrix> {
    let (n, mut coords) = match format {
        GraphFormat::EdgeList => parse_edge_list(text)?,
        GraphFormat::MatrixMarket => parse_matrix_market(text)?,
    };
    if !directed {
        let mirrored: Vec<(usize, usize)> = coords.iter().map(|&(r, c)| (c, r)).collect();
        coords.extend(mirrored);
    }
    coords.sort_unstable();
    coords.dedup();
    SparseMatrix::from_pattern(n, n, &coords)
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

fn parse_index(line: usize, tok: &str) -> Result<usize> {
    tok.parse().map_err(|_| parse_err(line, format!("invalid vertex id '{tok}'")))
}

fn parse_edge_list(text: &str) -> Result<(usize, Vec<(usize, usize)>)> {
    let mut declared: Option<usize> = None;
    let mut coords = Vec::new();
    let mut max_id: Option<usize> = None;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with('%') {
            continue;
        }
        if let Some(rest) = line.strip_prefix("n=").or_else(|| line.strip_prefix("n =")) {
            if !coords.is_empty() || declared.is_some() {
                return Err(parse_err(line_no, "vertex count must precede the edges"));
            }
            let n = rest
                .trim()
                .parse()
                .map_err(|_| parse_err(line_no, format!("invalid vertex count '{}'", rest.trim())))?;
            declared = Some(n);
            continue;
        }
        let mut toks = line.split_whitespace();
        let (Some(u), Some(v)) = (toks.next(), toks.next()) else {
            return Err(parse_err(line_no, "expected two vertex ids"));
        };
        let (u, v) = (parse_index(line_no, u)?, parse_index(line_no, v)?);
        if let Some(n) = declared {
            if u >= n || v >= n {
                return Err(parse_err(line_no, format!("vertex id {} out of range for n={n}", u.max(v))));
            }
        }
        max_id = Some(max_id.map_or(u.max(v), |m| m.max(u).max(v)));
        coords.push((u, v));
    }
    let n = declared.unwrap_or_else(|| max_id.map_or(0, |m| m + 1));
    Ok((n, coords))
}

fn parse_matrix_market(text: &str) -> Result<(usize, Vec<(usize, usize)>)> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    let (_, banner) = lines.next().ok_or_else(|| parse_err(1, "empty file"))?;
    let words: Vec<String> = banner.split_whitespace().map(str::to_ascii_lowercase).collect();
    if words.len() != 5 || words[0] != "%%matrixmarket" || words[1] != "matrix" {
        return Err(parse_err(1, "missing '%%MatrixMarket matrix' banner"));
    }
    if words[2] != "coordinate" {
        return Err(parse_err(1, format!("unsupported layout '{}'", words[2])));
    }
    let has_value = match words[3].as_str() {
        "pattern" => false,
        "real" | "integer" => true,
        other => return Err(parse_err(1, format!("unsupported field '{other}'"))),
    };
    let symmetric = match words[4].as_str() {
        "general" => false,
        "symmetric" => true,
        other => return Err(parse_err(1, format!("unsupported symmetry '{other}'"))),
    };
    let mut content = lines.filter(|(_, l)| !l.is_empty() && !l.starts_with('%'));
    let (size_line, size) = content.next().ok_or_else(|| parse_err(2, "missing size line"))?;
    let dims: Vec<usize> = size
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| parse_err(size_line, format!("invalid size '{t}'"))))
        .collect::<Result<_>>()?;
    let [rows, cols, nnz] = dims[..] else {
        return Err(parse_err(size_line, "size line must be '<rows> <cols> <entries>'"));
    };
    if rows != cols {
        return Err(parse_err(size_line, format!("adjacency must be square, got {rows}x{cols}")));
    }
    let mut coords = Vec::with_capacity(if symmetric { 2 * nnz } else { nnz });
    let mut count = 0;
    for (line_no, line) in content {
        let toks: Vec<&str> = line.split_whitespace().collect();
        let expected = if has_value { 3 } else { 2 };
        if toks.len() != expected {
            return Err(parse_err(line_no, format!("expected {expected} fields")));
        }
        let (r, c) = (parse_index(line_no, toks[0])?, parse_index(line_no, toks[1])?);
        if r == 0 || c == 0 || r > rows || c > cols {
            return Err(parse_err(line_no, format!("entry ({r}, {c}) outside 1..={rows}")));
        }
        if has_value && toks[2].parse::<f64>().is_err() {
            return Err(parse_err(line_no, format!("invalid value '{}'", toks[2])));
        }
        coords.push((r - 1, c - 1));
        if symmetric && r != c {
            coords.push((c - 1, r - 1));
        }
        count += 1;
    }
    if count != nnz {
        return Err(parse_err(size_line, format!("declared {nnz} entries, found {count}")));
    }
    Ok((rows, coords))
}

/// Writes the pattern of `a` as a 1-based coordinate file. With `symmetric`,
/// only entries on or below the diagonal are written and `a` must be
/// structurally symmetric.
pub fn write_matrix_market(a: &SparseMatrix, symmetric: bool) -> Result<String> {
    if !a.is_square() {
        return Err(Error::NotSquare {
            rows: a.n_rows(),
            cols: a.n_cols(),
        });
    }
    if symmetric && !a.is_structurally_symmetric() {
        return Err(Error::InvalidArgument("matrix is not structurally symmetric".into()));
    }
    let entries: Vec<(usize, usize)> = a
        .iter()
        .map(|(r, c, _)| (r, c))
        .filter(|&(r, c)| !symmetric || r >= c)
        .collect();
    let mut out = String::new();
    let kind = if symmetric { "symmetric" } else { "general" };
    writeln!(out, "%%MatrixMarket matrix coordinate pattern {kind}").unwrap();
    writeln!(out, "{} {} {}", a.n_rows(), a.n_cols(), entries.len()).unwrap();
    for (r, c) in entries {
        writeln!(out, "{} {}", r + 1, c + 1).unwrap();
    }
    Ok(out)
}

/// Edge list with an `n=` header, one line per stored entry.
pub fn write_edge_list(a: &SparseMatrix) -> String {
    let mut out = format!("n={}\n", a.n_rows());
    for (r, c, _) in a.iter() {
        writeln!(out, "{r} {c}").unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairs(a: &SparseMatrix) -> Vec<(usize, usize)> {
        a.iter().map(|(r, c, _)| (r, c)).collect()
    }

    #[test]
    fn edge_list_examples() {
        let empty = parse_graph("# nothing\nn=3\n", GraphFormat::EdgeList, false).unwrap();
        assert_eq!((empty.n_rows(), empty.nnz()), (3, 0));
        let one = parse_graph("0 1\n", GraphFormat::EdgeList, false).unwrap();
        assert_eq!(pairs(&one), vec![(0, 1), (1, 0)]);
        assert!(one.values().iter().all(|&v| v == 1.0));
        let directed = parse_graph("0 1\n0 1\n2 0 0.5\n", GraphFormat::EdgeList, true).unwrap();
        assert_eq!(pairs(&directed), vec![(0, 1), (2, 0)]);
        assert_eq!(parse_graph("", GraphFormat::EdgeList, false).unwrap().n_rows(), 0);
    }

    #[test]
    fn edge_list_errors_name_the_line() {
        let bad = |t: &str| parse_graph(t, GraphFormat::EdgeList, false).unwrap_err();
        assert!(matches!(bad("0 1\n1 x\n"), Error::Parse { line: 2, .. }));
        assert!(matches!(bad("n=2\n\n0 2\n"), Error::Parse { line: 3, .. }));
        assert!(matches!(bad("0\n"), Error::Parse { line: 1, .. }));
        assert!(matches!(bad("0 1\nn=4\n"), Error::Parse { line: 2, .. }));
    }

    #[test]
    fn matrix_market_reads_symmetric_and_general() {
        let text = "%%MatrixMarket matrix coordinate pattern symmetric\n% c\n3 3 2\n2 1\n3 3\n";
        let a = parse_graph(text, GraphFormat::MatrixMarket, true).unwrap();
        assert_eq!(pairs(&a), vec![(0, 1), (1, 0), (2, 2)]);
        let text = "%%MatrixMarket matrix coordinate real general\n2 2 1\n1 2 3.5\n";
        let g = parse_graph(text, GraphFormat::MatrixMarket, true).unwrap();
        assert_eq!(pairs(&g), vec![(0, 1)]);
        let sym = parse_graph(text, GraphFormat::MatrixMarket, false).unwrap();
        assert_eq!(pairs(&sym), vec![(0, 1), (1, 0)]);
    }

    #[test]
    fn matrix_market_errors() {
        let bad = |t: &str| parse_graph(t, GraphFormat::MatrixMarket, false).unwrap_err();
        assert!(matches!(bad("3 3 1\n"), Error::Parse { line: 1, .. }));
        assert!(matches!(bad("%%MatrixMarket matrix array real general\n"), Error::Parse { line: 1, .. }));
        assert!(matches!(
            bad("%%MatrixMarket matrix coordinate pattern general\n2 2 1\n3 1\n"),
            Error::Parse { line: 3, .. }
        ));
        assert!(matches!(
            bad("%%MatrixMarket matrix coordinate pattern general\n2 2 2\n1 1\n"),
            Error::Parse { line: 2, .. }
        ));
        assert!(matches!(
            bad("%%MatrixMarket matrix coordinate pattern general\n2 3 0\n"),
            Error::Parse { line: 2, .. }
        ));
    }

    #[test]
    fn symmetric_pattern_round_trips() {
        let a = parse_graph("n=5\n0 1\n1 2\n3 3\n4 0\n", GraphFormat::EdgeList, false).unwrap();
        let text = write_matrix_market(&a, true).unwrap();
        let back = parse_graph(&text, GraphFormat::MatrixMarket, false).unwrap();
        assert_eq!(back, a);
        assert_eq!(write_matrix_market(&back, true).unwrap(), text);
        let general = write_matrix_market(&a, false).unwrap();
        assert_eq!(parse_graph(&general, GraphFormat::MatrixMarket, true).unwrap(), a);
        let edges = write_edge_list(&a);
        assert_eq!(parse_graph(&edges, GraphFormat::EdgeList, true).unwrap(), a);
    }

    #[test]
    fn symmetric_writer_rejects_directed_input() {
        let a = parse_graph("0 1\n", GraphFormat::EdgeList, true).unwrap();
        assert!(write_matrix_market(&a, true).is_err());
    }

    #[test]
    fn format_names() {
        assert_eq!("mtx".parse::<GraphFormat>().unwrap(), GraphFormat::MatrixMarket);
        assert_eq!("edge_list".parse::<GraphFormat>().unwrap(), GraphFormat::EdgeList);
        assert!("csv".parse::<GraphFormat>().is_err());
        assert_eq!(GraphFormat::from_path(Path::new("x/web.mtx")), GraphFormat::MatrixMarket);
    }
}
