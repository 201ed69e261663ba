//! Sparse (CSR) and dense (row-major) matrix kernels.
//!
//! Every reduction accumulates in ascending index order, so repeated runs
//! are bit-identical and kernels can be checked against naive loops exactly.

use std::fmt;

use crate::error::{Error, Result};

/// Compressed sparse row matrix with sorted, unique column indices per row
/// and no stored zeros.
#[derive(Clone, PartialEq)]
pub struct SparseMatrix {
    n_rows: usize,
    n_cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl fmt::Debug for SparseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "SparseMatrix({}x{}, nnz={})",
            self.n_rows,
            self.n_cols,
            self.nnz()
        )
    }
}

impl SparseMatrix {
    /// Builds a matrix from raw CSR arrays, validating every structural invariant.
    pub fn try_new(
        n_rows: usize,
        n_cols: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if row_offsets.len() != n_rows + 1 {
            return Err(Error::InvalidSparse(format!(
                "row_offsets has length {}, expected {}",
                row_offsets.len(),
                n_rows + 1
            )));
        }
        if row_offsets[0] != 0 || *row_offsets.last().unwrap() != col_indices.len() {
            return Err(Error::InvalidSparse(
                "row_offsets must start at 0 and end at nnz".into(),
            ));
        }
        if values.len() != col_indices.len() {
            return Err(Error::InvalidSparse(
                "values and col_indices differ in length".into(),
            ));
        }
        for r in 0..n_rows {
            let (lo, hi) = (row_offsets[r], row_offsets[r + 1]);
            if lo > hi {
                return Err(Error::InvalidSparse(format!(
                    "row_offsets decreases at row {r}"
                )));
            }
            let cols = &col_indices[lo..hi];
            if cols.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidSparse(format!(
                    "columns of row {r} are not strictly increasing"
                )));
            }
            if cols.last().is_some_and(|&c| c >= n_cols) {
                return Err(Error::InvalidSparse(format!(
                    "column index out of range in row {r}"
                )));
            }
        }
        if values.iter().any(|&v| v == 0.0 || !v.is_finite()) {
            return Err(Error::InvalidSparse(
                "explicit zero or non-finite value".into(),
            ));
        }
        Ok(Self {
            n_rows,
            n_cols,
            row_offsets,
            col_indices,
            values,
        })
    }

    /// Builds a matrix from (row, col, value) triplets. Duplicates are summed
    /// and entries that end up exactly zero are dropped.
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<Self> {
        let mut sorted: Vec<(usize, usize, f64)> = triplets.to_vec();
        for &(r, c, _) in &sorted {
            if r >= n_rows || c >= n_cols {
                return Err(Error::InvalidSparse(format!(
                    "entry ({r},{c}) outside {n_rows}x{n_cols}"
                )));
            }
        }
        sorted.sort_by_key(|e| (e.0, e.1));
        let mut row_offsets = vec![0usize; n_rows + 1];
        let mut col_indices = Vec::with_capacity(sorted.len());
        let mut values: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut rows: Vec<usize> = Vec::with_capacity(sorted.len());
        for (r, c, v) in sorted {
            if rows.last() == Some(&r) && col_indices.last() == Some(&c) {
                *values.last_mut().unwrap() += v;
            } else {
                rows.push(r);
                col_indices.push(c);
                values.push(v);
            }
        }
        let mut keep_cols = Vec::with_capacity(col_indices.len());
        let mut keep_vals = Vec::with_capacity(values.len());
        for ((r, c), v) in rows.into_iter().zip(col_indices).zip(values) {
            if v != 0.0 {
                row_offsets[r + 1] += 1;
                keep_cols.push(c);
                keep_vals.push(v);
            }
        }
        for r in 0..n_rows {
            row_offsets[r + 1] += row_offsets[r];
        }
        Self::try_new(n_rows, n_cols, row_offsets, keep_cols, keep_vals)
    }

    /// Unit-valued pattern matrix; duplicate coordinates collapse to one entry.
    pub fn from_pattern(n_rows: usize, n_cols: usize, coords: &[(usize, usize)]) -> Result<Self> {
        let mut coords = coords.to_vec();
        coords.sort_unstable();
        coords.dedup();
        let triplets: Vec<_> = coords.into_iter().map(|(r, c)| (r, c, 1.0)).collect();
        Self::from_triplets(n_rows, n_cols, &triplets)
    }

    pub fn identity(n: usize) -> Self {
        Self {
            n_rows: n,
            n_cols: n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            row_offsets: vec![0; n_rows + 1],
            col_indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.col_indices.len()
    }

    pub fn is_square(&self) -> bool {
        self.n_rows == self.n_cols
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Column indices of row `r`.
    pub fn row_cols(&self, r: usize) -> &[usize] {
        &self.col_indices[self.row_offsets[r]..self.row_offsets[r + 1]]
    }

    pub fn row_values(&self, r: usize) -> &[f64] {
        &self.values[self.row_offsets[r]..self.row_offsets[r + 1]]
    }

    pub fn row_nnz(&self, r: usize) -> usize {
        self.row_offsets[r + 1] - self.row_offsets[r]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let cols = self.row_cols(r);
        match cols.binary_search(&c) {
            Ok(k) => self.row_values(r)[k],
            Err(_) => 0.0,
        }
    }

    /// Iterates over all stored entries as `(row, col, value)` in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_rows).flat_map(move |r| {
            self.row_cols(r)
                .iter()
                .zip(self.row_values(r))
                .map(move |(&c, &v)| (r, c, v))
        })
    }

    pub fn has_full_diagonal(&self) -> bool {
        self.is_square() && (0..self.n_rows).all(|i| self.row_cols(i).binary_search(&i).is_ok())
    }

    pub fn is_structurally_symmetric(&self) -> bool {
        self.is_square() && self.iter().all(|(r, c, _)| self.row_cols(c).binary_search(&r).is_ok())
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.n_rows, self.n_cols);
        for (r, c, v) in self.iter() {
            out.set(r, c, v);
        }
        out
    }

    /// Keeps rows `rows` (in the given order) and only the columns for which
    /// `col_map` returns `Some(new_col)`. Column order within a row follows
    /// the new indices, which must preserve the relative order of the old ones.
    pub(crate) fn select(
        &self,
        rows: &[usize],
        n_cols: usize,
        col_map: impl Fn(usize) -> Option<usize>,
    ) -> SparseMatrix {
        let mut row_offsets = Vec::with_capacity(rows.len() + 1);
        row_offsets.push(0);
        let mut col_indices = Vec::new();
        let mut values = Vec::new();
        for &r in rows {
            for (&c, &v) in self.row_cols(r).iter().zip(self.row_values(r)) {
                if let Some(nc) = col_map(c) {
                    debug_assert!(col_indices.len() == *row_offsets.last().unwrap()
                        || *col_indices.last().unwrap() < nc);
                    col_indices.push(nc);
                    values.push(v);
                }
            }
            row_offsets.push(col_indices.len());
        }
        SparseMatrix {
            n_rows: rows.len(),
            n_cols,
            row_offsets,
            col_indices,
            values,
        }
    }
}

/// Dense row-major matrix of finite reals.
#[derive(Clone, PartialEq)]
pub struct DenseMatrix {
    n_rows: usize,
    n_cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for DenseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "DenseMatrix({}x{})", self.n_rows, self.n_cols)?;
        for r in 0..self.n_rows.min(8) {
            writeln!(f, "  {:?}", self.row(r))?;
        }
        Ok(())
    }
}

impl DenseMatrix {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            data: vec![0.0; n_rows * n_cols],
        }
    }

    pub fn filled(n_rows: usize, n_cols: usize, value: f64) -> Self {
        Self {
            n_rows,
            n_cols,
            data: vec![value; n_rows * n_cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_vec(n_rows: usize, n_cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n_rows * n_cols {
            return Err(Error::shape(
                "DenseMatrix::from_vec",
                format!("{} values for {n_rows}x{n_cols}", data.len()),
            ));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite dense entry".into()));
        }
        Ok(Self {
            n_rows,
            n_cols,
            data,
        })
    }

    /// Builds from nested rows; all rows must have equal length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_cols) {
            return Err(Error::shape("DenseMatrix::from_rows", "ragged rows"));
        }
        Self::from_vec(rows.len(), n_cols, rows.concat())
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_rows, self.n_cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.n_cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.n_cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.n_cols..(r + 1) * self.n_cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.n_cols..(r + 1) * self.n_cols]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.n_cols, self.n_rows);
        for r in 0..self.n_rows {
            for c in 0..self.n_cols {
                out.set(c, r, self.get(r, c));
            }
        }
        out
    }

    /// Index of the largest entry of each row; ties go to the lowest column.
    pub fn argmax_rows(&self) -> Vec<usize> {
        (0..self.n_rows)
            .map(|r| {
                let row = self.row(r);
                let mut best = 0;
                for (c, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = c;
                    }
                }
                best
            })
            .collect()
    }

    /// Rows picked by index, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let mut data = Vec::with_capacity(rows.len() * self.n_cols);
        for &r in rows {
            data.extend_from_slice(self.row(r));
        }
        Self {
            n_rows: rows.len(),
            n_cols: self.n_cols,
            data,
        }
    }

    /// In-place `self += other`.
    pub fn add_assign(&mut self, other: &DenseMatrix) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::shape(
                "add_assign",
                format!("{:?} vs {:?}", self.shape(), other.shape()),
            ));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    /// In-place `self -= scale * other`.
    pub fn sub_scaled(&mut self, scale: f64, other: &DenseMatrix) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::shape(
                "sub_scaled",
                format!("{:?} vs {:?}", self.shape(), other.shape()),
            ));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a -= scale * b;
        }
        Ok(())
    }

    pub fn max_abs_diff(&self, other: &DenseMatrix) -> f64 {
        assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Largest componentwise `|a-b| / max(|a|, |b|, floor)`.
    pub fn max_rel_diff(&self, other: &DenseMatrix, floor: f64) -> f64 {
        assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs() / a.abs().max(b.abs()).max(floor))
            .fold(0.0, f64::max)
    }
}

/// Rows of a matrix owned by one processor, tagged with their global ids.
#[derive(Debug, Clone, PartialEq)]
pub struct RowBlock<M> {
    global_row_ids: Vec<usize>,
    local: M,
}

impl<M> RowBlock<M> {
    pub fn global_row_ids(&self) -> &[usize] {
        &self.global_row_ids
    }

    pub fn local(&self) -> &M {
        &self.local
    }

    pub fn local_mut(&mut self) -> &mut M {
        &mut self.local
    }

    pub fn into_local(self) -> M {
        self.local
    }

    /// Local position of a global row id.
    pub fn position(&self, global_id: usize) -> Option<usize> {
        self.global_row_ids.binary_search(&global_id).ok()
    }
}

impl RowBlock<DenseMatrix> {
    pub fn new(global_row_ids: Vec<usize>, local: DenseMatrix) -> Result<Self> {
        check_ids(&global_row_ids, local.n_rows())?;
        Ok(Self {
            global_row_ids,
            local,
        })
    }

    /// Restricts a full matrix to the given sorted global rows.
    pub fn from_global(full: &DenseMatrix, global_row_ids: Vec<usize>) -> Result<Self> {
        if global_row_ids.last().is_some_and(|&r| r >= full.n_rows()) {
            return Err(Error::shape("RowBlock::from_global", "row id out of range"));
        }
        let local = full.select_rows(&global_row_ids);
        Self::new(global_row_ids, local)
    }
}

impl RowBlock<SparseMatrix> {
    pub fn new(global_row_ids: Vec<usize>, local: SparseMatrix) -> Result<Self> {
        check_ids(&global_row_ids, local.n_rows())?;
        Ok(Self {
            global_row_ids,
            local,
        })
    }

    pub fn from_global(full: &SparseMatrix, global_row_ids: Vec<usize>) -> Result<Self> {
        if global_row_ids.last().is_some_and(|&r| r >= full.n_rows()) {
            return Err(Error::shape("RowBlock::from_global", "row id out of range"));
        }
        let local = full.select(&global_row_ids, full.n_cols(), Some);
        Self::new(global_row_ids, local)
    }
}

fn check_ids(ids: &[usize], n_rows: usize) -> Result<()> {
    if ids.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument(
            "row block ids must be strictly increasing".into(),
        ));
    }
    if ids.len() != n_rows {
        return Err(Error::shape(
            "RowBlock",
            format!("{} ids for {} rows", ids.len(), n_rows),
        ));
    }
    Ok(())
}

/// `D^{-1/2} (A [+ I]) D^{-1/2}` with `D` the row sums of the (self-looped) matrix.
pub fn normalize_adjacency(a: &SparseMatrix, add_self_loops: bool) -> Result<SparseMatrix> {
    if !a.is_square() {
        return Err(Error::NotSquare {
            rows: a.n_rows(),
            cols: a.n_cols(),
        });
    }
    let n = a.n_rows();
    let tilde = if add_self_loops {
        let mut triplets: Vec<_> = a.iter().collect();
        triplets.extend((0..n).map(|i| (i, i, 1.0)));
        SparseMatrix::from_triplets(n, n, &triplets)?
    } else {
        a.clone()
    };
    let mut inv_sqrt = Vec::with_capacity(n);
    for i in 0..n {
        let degree: f64 = tilde.row_values(i).iter().sum();
        if degree <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "row {i} has non-positive degree {degree}"
            )));
        }
        inv_sqrt.push(1.0 / degree.sqrt());
    }
    let mut values = Vec::with_capacity(tilde.nnz());
    for (r, c, v) in tilde.iter() {
        // scale product first so symmetric inputs give bitwise symmetric output
        values.push(v * (inv_sqrt[r] * inv_sqrt[c]));
    }
    SparseMatrix::try_new(
        n,
        n,
        tilde.row_offsets.clone(),
        tilde.col_indices.clone(),
        values,
    )
}

/// Sparse-dense product `a * h`.
pub fn spmm(a: &SparseMatrix, h: &DenseMatrix) -> Result<DenseMatrix> {
    if a.n_cols() != h.n_rows() {
        return Err(Error::shape(
            "spmm",
            format!("{}x{} * {}x{}", a.n_rows(), a.n_cols(), h.n_rows(), h.n_cols()),
        ));
    }
    let d = h.n_cols();
    let mut out = DenseMatrix::zeros(a.n_rows(), d);
    for r in 0..a.n_rows() {
        let acc = &mut out.data[r * d..(r + 1) * d];
        for (&c, &v) in a.row_cols(r).iter().zip(a.row_values(r)) {
            for (o, &x) in acc.iter_mut().zip(h.row(c)) {
                *o += v * x;
            }
        }
    }
    Ok(out)
}

/// Accumulates `out += a * h` in place.
pub fn spmm_acc(a: &SparseMatrix, h: &DenseMatrix, out: &mut DenseMatrix) -> Result<()> {
    if a.n_cols() != h.n_rows() || out.shape() != (a.n_rows(), h.n_cols()) {
        return Err(Error::shape(
            "spmm_acc",
            format!(
                "{}x{} * {}x{} into {:?}",
                a.n_rows(),
                a.n_cols(),
                h.n_rows(),
                h.n_cols(),
                out.shape()
            ),
        ));
    }
    let d = h.n_cols();
    for r in 0..a.n_rows() {
        let acc = &mut out.data[r * d..(r + 1) * d];
        for (&c, &v) in a.row_cols(r).iter().zip(a.row_values(r)) {
            for (o, &x) in acc.iter_mut().zip(h.row(c)) {
                *o += v * x;
            }
        }
    }
    Ok(())
}

/// Dense product `x * y`.
pub fn dmm(x: &DenseMatrix, y: &DenseMatrix) -> Result<DenseMatrix> {
    if x.n_cols() != y.n_rows() {
        return Err(Error::shape(
            "dmm",
            format!("{:?} * {:?}", x.shape(), y.shape()),
        ));
    }
    let m = y.n_cols();
    let mut out = DenseMatrix::zeros(x.n_rows(), m);
    for i in 0..x.n_rows() {
        let acc = &mut out.data[i * m..(i + 1) * m];
        for (k, &xv) in x.row(i).iter().enumerate() {
            for (o, &yv) in acc.iter_mut().zip(y.row(k)) {
                *o += xv * yv;
            }
        }
    }
    Ok(out)
}

/// `x^T * y` without materializing the transpose.
pub fn dmm_tn(x: &DenseMatrix, y: &DenseMatrix) -> Result<DenseMatrix> {
    if x.n_rows() != y.n_rows() {
        return Err(Error::shape(
            "dmm_tn",
            format!("{:?}^T * {:?}", x.shape(), y.shape()),
        ));
    }
    let m = y.n_cols();
    let mut out = DenseMatrix::zeros(x.n_cols(), m);
    for i in 0..x.n_rows() {
        let yrow = y.row(i);
        for (a, &xv) in x.row(i).iter().enumerate() {
            let acc = &mut out.data[a * m..(a + 1) * m];
            for (o, &yv) in acc.iter_mut().zip(yrow) {
                *o += xv * yv;
            }
        }
    }
    Ok(out)
}

/// `x * y^T` without materializing the transpose.
pub fn dmm_nt(x: &DenseMatrix, y: &DenseMatrix) -> Result<DenseMatrix> {
    if x.n_cols() != y.n_cols() {
        return Err(Error::shape(
            "dmm_nt",
            format!("{:?} * {:?}^T", x.shape(), y.shape()),
        ));
    }
    let m = y.n_rows();
    let mut out = DenseMatrix::zeros(x.n_rows(), m);
    for i in 0..x.n_rows() {
        let xrow = x.row(i);
        for j in 0..m {
            let mut s = 0.0;
            for (&a, &b) in xrow.iter().zip(y.row(j)) {
                s += a * b;
            }
            out.data[i * m + j] = s;
        }
    }
    Ok(out)
}

pub fn hadamard(x: &DenseMatrix, y: &DenseMatrix) -> Result<DenseMatrix> {
    if x.shape() != y.shape() {
        return Err(Error::shape(
            "hadamard",
            format!("{:?} vs {:?}", x.shape(), y.shape()),
        ));
    }
    Ok(DenseMatrix {
        n_rows: x.n_rows,
        n_cols: x.n_cols,
        data: x.data.iter().zip(&y.data).map(|(a, b)| a * b).collect(),
    })
}

/// CSR of `a^T`, columns sorted within each row.
pub fn transpose_sparse(a: &SparseMatrix) -> SparseMatrix {
    let mut counts = vec![0usize; a.n_cols() + 1];
    for &c in a.col_indices() {
        counts[c + 1] += 1;
    }
    for c in 0..a.n_cols() {
        counts[c + 1] += counts[c];
    }
    let row_offsets = counts.clone();
    let mut next = counts;
    let mut col_indices = vec![0usize; a.nnz()];
    let mut values = vec![0.0; a.nnz()];
    // rows visited in ascending order, so each output row fills with sorted columns
    for (r, c, v) in a.iter() {
        let slot = next[c];
        col_indices[slot] = r;
        values[slot] = v;
        next[c] += 1;
    }
    SparseMatrix {
        n_rows: a.n_cols(),
        n_cols: a.n_rows(),
        row_offsets,
        col_indices,
        values,
    }
}

/// Copies the block rows for `wanted_global_ids`, in the requested order.
pub fn gather_rows(block: &RowBlock<DenseMatrix>, wanted_global_ids: &[usize]) -> Result<DenseMatrix> {
    let d = block.local.n_cols();
    let mut data = Vec::with_capacity(wanted_global_ids.len() * d);
    for &id in wanted_global_ids {
        let pos = block.position(id).ok_or(Error::NotOwned { id })?;
        data.extend_from_slice(block.local.row(pos));
    }
    Ok(DenseMatrix {
        n_rows: wanted_global_ids.len(),
        n_cols: d,
        data,
    })
}
