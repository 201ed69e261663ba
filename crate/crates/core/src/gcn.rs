//! Single-process GCN: feedforward, mean-NLL loss, backpropagation and
//! plain gradient-descent updates. The distributed runtime is checked
//! against this module.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::{
    dmm, dmm_nt, dmm_tn, hadamard, normalize_adjacency, spmm, transpose_sparse, DenseMatrix, SparseMatrix,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    /// The ReLU derivative at 0 is taken as 0.
    pub fn derivative(self, z: &DenseMatrix) -> DenseMatrix {
        match self {
            Activation::Relu => z.map(|v| if v > 0.0 { 1.0 } else { 0.0 }),
            Activation::Identity => DenseMatrix::filled(z.n_rows(), z.n_cols(), 1.0),
        }
    }

    pub fn forward(self, z: &DenseMatrix) -> DenseMatrix {
        match self {
            Activation::Relu => z.map(|v| v.max(0.0)),
            Activation::Identity => z.clone(),
        }
    }
}

pub fn relu_and_derivative(z: &DenseMatrix) -> (DenseMatrix, DenseMatrix) {
    (
        z.map(|v| if v > 0.0 { v } else { 0.0 }),
        z.map(|v| if v > 0.0 { 1.0 } else { 0.0 }),
    )
}

/// Layer weights `W^1..W^L`, activations and learning rate.
///
/// `activation` is applied after every hidden layer; the last layer uses
/// `output_activation` (identity unless overridden) and feeds the
/// log-softmax inside the loss.
#[derive(Debug, Clone, PartialEq)]
pub struct GcnModel {
    dims: Vec<usize>,
    weights: Vec<DenseMatrix>,
    activation: Activation,
    output_activation: Activation,
    learning_rate: f64,
}

impl GcnModel {
    pub fn new(weights: Vec<DenseMatrix>, activation: Activation, learning_rate: f64) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidArgument("model needs at least one layer".into()));
        }
        if !(learning_rate > 0.0 && learning_rate.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "learning rate must be positive and finite, got {learning_rate}"
            )));
        }
        let mut dims = vec![weights[0].n_rows()];
        for (k, w) in weights.iter().enumerate() {
            if w.n_rows() != *dims.last().unwrap() {
                return Err(Error::shape(
                    "GcnModel::new",
                    format!("layer {} expects {} inputs, got {}", k + 1, dims.last().unwrap(), w.n_rows()),
                ));
            }
            dims.push(w.n_cols());
        }
        Ok(Self {
            dims,
            weights,
            activation,
            output_activation: Activation::Identity,
            learning_rate,
        })
    }

    pub fn with_output_activation(mut self, activation: Activation) -> Self {
        self.output_activation = activation;
        self
    }

    /// Seeded uniform init in `[-1/sqrt(d_in), 1/sqrt(d_in)]` per layer.
    pub fn init(dims: &[usize], activation: Activation, learning_rate: f64, seed: u64) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "need at least two positive dims, got {dims:?}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weights = dims
            .windows(2)
            .map(|w| {
                let bound = 1.0 / (w[0] as f64).sqrt();
                let data = (0..w[0] * w[1]).map(|_| rng.random_range(-bound..=bound)).collect();
                DenseMatrix::from_vec(w[0], w[1], data)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(weights, activation, learning_rate)
    }

    pub fn layers(&self) -> usize {
        self.weights.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn weights(&self) -> &[DenseMatrix] {
        &self.weights
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn output_activation(&self) -> Activation {
        self.output_activation
    }

    /// Activation of layer `k` (1-based).
    pub fn layer_activation(&self, k: usize) -> Activation {
        if k == self.layers() {
            self.output_activation
        } else {
            self.activation
        }
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub(crate) fn weights_mut(&mut self) -> &mut [DenseMatrix] {
        &mut self.weights
    }
}

/// `z[k]` and `h[k]` for every layer; `z[0]` is an empty placeholder so both
/// lists index by layer number.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub z: Vec<DenseMatrix>,
    pub h: Vec<DenseMatrix>,
}

impl ForwardTrace {
    pub fn output(&self) -> &DenseMatrix {
        self.h.last().unwrap()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelSet {
    labeled_ids: Vec<usize>,
    labels: Vec<usize>,
    n_classes: usize,
}

impl LabelSet {
    pub fn new(labeled_ids: Vec<usize>, labels: Vec<usize>, n_classes: usize) -> Result<Self> {
        if labeled_ids.len() != labels.len() {
            return Err(Error::InvalidLabel("ids and labels differ in length".into()));
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(Error::InvalidLabel(format!("label {l} >= {n_classes} classes")));
        }
        let mut seen = labeled_ids.clone();
        seen.sort_unstable();
        if seen.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidLabel("duplicate labeled id".into()));
        }
        Ok(Self {
            labeled_ids,
            labels,
            n_classes,
        })
    }

    pub fn labeled_ids(&self) -> &[usize] {
        &self.labeled_ids
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn len(&self) -> usize {
        self.labeled_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labeled_ids.is_empty()
    }

    /// `(vertex, label)` pairs in ascending vertex order.
    pub fn sorted_pairs(&self) -> Vec<(usize, usize)> {
        let mut pairs: Vec<_> = self.labeled_ids.iter().copied().zip(self.labels.iter().copied()).collect();
        pairs.sort_unstable();
        pairs
    }
}

/// Negative log-softmax of `logits[label]` and its gradient w.r.t. the logits.
pub(crate) fn nll_row(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits.iter().map(|&v| (v - max).exp()).sum();
    let log_z = max + sum.ln();
    let loss = log_z - logits[label];
    let mut grad: Vec<f64> = logits.iter().map(|&v| (v - log_z).exp()).collect();
    grad[label] -= 1.0;
    (loss, grad)
}

/// Mean NLL over labeled rows and `d loss / d hL`; unlabeled rows get zero gradient.
pub fn nll_loss_and_grad(h_last: &DenseMatrix, labels: &LabelSet) -> Result<(f64, DenseMatrix)> {
    if labels.is_empty() {
        return Err(Error::EmptyLabels);
    }
    if h_last.n_cols() != labels.n_classes() {
        return Err(Error::shape(
            "nll_loss_and_grad",
            format!("{} outputs for {} classes", h_last.n_cols(), labels.n_classes()),
        ));
    }
    let count = labels.len() as f64;
    let mut grad = DenseMatrix::zeros(h_last.n_rows(), h_last.n_cols());
    let mut total = 0.0;
    for (id, label) in labels.sorted_pairs() {
        if id >= h_last.n_rows() {
            return Err(Error::InvalidLabel(format!("labeled id {id} out of range")));
        }
        let (loss, g) = nll_row(h_last.row(id), label);
        total += loss;
        for (o, v) in grad.row_mut(id).iter_mut().zip(g) {
            *o = v / count;
        }
    }
    Ok((total / count, grad))
}

/// Self-looped normalized adjacency and the matrix backpropagation
/// multiplies by: the same matrix when it is symmetric, its transpose
/// otherwise.
pub fn propagation_operators(a: &SparseMatrix) -> Result<(SparseMatrix, SparseMatrix)> {
    let a_hat = normalize_adjacency(a, true)?;
    let a_t = transpose_sparse(&a_hat);
    let a_back = if a_t == a_hat { a_hat.clone() } else { a_t };
    Ok((a_hat, a_back))
}

pub fn feedforward(model: &GcnModel, a_hat: &SparseMatrix, h0: &DenseMatrix) -> Result<ForwardTrace> {
    if !a_hat.is_square() || a_hat.n_rows() != h0.n_rows() {
        return Err(Error::shape(
            "feedforward",
            format!("adjacency {}x{} with features {:?}", a_hat.n_rows(), a_hat.n_cols(), h0.shape()),
        ));
    }
    if h0.n_cols() != model.dims()[0] {
        return Err(Error::shape(
            "feedforward",
            format!("features have {} columns, model expects {}", h0.n_cols(), model.dims()[0]),
        ));
    }
    let mut z = vec![DenseMatrix::zeros(0, 0)];
    let mut h = vec![h0.clone()];
    for (k, w) in model.weights().iter().enumerate() {
        let aggregated = spmm(a_hat, h.last().unwrap())?;
        let zk = dmm(&aggregated, w)?;
        h.push(model.layer_activation(k + 1).forward(&zk));
        z.push(zk);
    }
    Ok(ForwardTrace { z, h })
}

/// Per-layer weight gradients `ΔW^k` and node gradients `G^k` (index = layer).
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<DenseMatrix>,
    pub g: Vec<DenseMatrix>,
}

/// `a_back` is the normalized adjacency for undirected graphs and its
/// transpose for directed ones.
pub fn backprop(
    model: &GcnModel,
    a_back: &SparseMatrix,
    trace: &ForwardTrace,
    grad_output: &DenseMatrix,
) -> Result<Gradients> {
    let layers = model.layers();
    if trace.h.len() != layers + 1 || trace.z.len() != layers + 1 {
        return Err(Error::shape("backprop", "trace does not match model depth"));
    }
    if grad_output.shape() != trace.output().shape() {
        return Err(Error::shape(
            "backprop",
            format!("loss gradient {:?} vs output {:?}", grad_output.shape(), trace.output().shape()),
        ));
    }
    if a_back.n_cols() != grad_output.n_rows() {
        return Err(Error::shape("backprop", "adjacency does not match vertex count"));
    }
    let mut g = vec![DenseMatrix::zeros(0, 0); layers + 1];
    let mut dw = vec![DenseMatrix::zeros(0, 0); layers + 1];
    g[layers] = hadamard(grad_output, &model.layer_activation(layers).derivative(&trace.z[layers]))?;
    for k in (1..=layers).rev() {
        let ag = spmm(a_back, &g[k])?;
        dw[k] = dmm_tn(&trace.h[k - 1], &ag)?;
        if k > 1 {
            let s = dmm_nt(&ag, &model.weights()[k - 1])?;
            g[k - 1] = hadamard(&s, &model.layer_activation(k - 1).derivative(&trace.z[k - 1]))?;
        }
    }
    dw.remove(0);
    Ok(Gradients { weights: dw, g })
}

/// `W^k <- W^k - lr * ΔW^k` for every layer.
pub fn apply_update(model: &GcnModel, grads: &[DenseMatrix]) -> Result<GcnModel> {
    let mut next = model.clone();
    apply_update_in_place(&mut next, grads)?;
    Ok(next)
}

pub(crate) fn apply_update_in_place(model: &mut GcnModel, grads: &[DenseMatrix]) -> Result<()> {
    if grads.len() != model.layers() {
        return Err(Error::shape("apply_update", "gradient count differs from layer count"));
    }
    let lr = model.learning_rate();
    for (w, dw) in model.weights_mut().iter_mut().zip(grads) {
        w.sub_scaled(lr, dw)?;
    }
    Ok(())
}

/// Full-batch gradient-descent training; returns the final model and the
/// loss observed at the start of each epoch.
pub fn train(
    model: &GcnModel,
    a_hat: &SparseMatrix,
    a_back: &SparseMatrix,
    h0: &DenseMatrix,
    labels: &LabelSet,
    epochs: usize,
) -> Result<(GcnModel, Vec<f64>)> {
    let mut model = model.clone();
    let mut losses = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        let trace = feedforward(&model, a_hat, h0)?;
        let (loss, grad) = nll_loss_and_grad(trace.output(), labels)?;
        let grads = backprop(&model, a_back, &trace, &grad)?;
        apply_update_in_place(&mut model, &grads.weights)?;
        losses.push(loss);
    }
    Ok((model, losses))
}
