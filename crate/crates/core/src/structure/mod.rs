//! Causal structure learner: one masked causal layer per target variable
//! over the distilled signals, adjacency extraction, thresholding, and
//! the acyclicity functional.
//!
//! Each target variable gets an independent layer whose receptive field
//! is the full `(l_max+1) x n` window grid minus the target's own
//! contemporaneous cell (a variable cannot be its own instantaneous
//! parent). The full-grid layer is a masked two-layer perceptron with
//! `H` hidden channels; edge strengths are the per-cell L2 norms of the
//! first-layer weights, mirroring the weight-norm reduction of nonlinear
//! continuous structure learners.

use crate::data::{TemporalAdjacency, TemporalGraph};
use crate::error::{Result, TtcdError};
use crate::numeric::tape::{BoundParams, ParamSet, Tape, TensorId};
use crate::numeric::{trace_expm_gap, Array};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Layer geometry of the structure learner.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StructureKind {
    /// Full-grid masked perceptron per target (the primary design).
    FullGrid,
    /// Width-3 1-D kernels sliding over the flattened grid (the
    /// causal-conv1d ablation): adjacency is read from the masked
    /// position-resolved head weights instead of the shared kernel.
    Conv1d,
}

/// Nonnegative pruning threshold for weak causal links.
#[derive(Debug, Clone, Copy)]
pub struct ThresholdSpec {
    pub omega: f64,
}

impl ThresholdSpec {
    pub fn new(omega: f64) -> Result<Self> {
        if !(omega >= 0.0) {
            return Err(TtcdError::Config(format!(
                "threshold must be >= 0, got {omega}"
            )));
        }
        Ok(Self { omega })
    }
}

/// Per-variable causal layers over the window grid.
#[derive(Debug, Clone)]
pub struct StructureLearner {
    pub n_vars: usize,
    pub l_max: usize,
    /// Hidden channels per layer.
    pub hidden: usize,
    pub kind: StructureKind,
}

/// Tape handles for one structure forward pass.
pub struct StructureForward {
    /// (N_w, n) per-target predictions of the current-time values.
    pub predictions: TensorId,
    /// (n*(l_max+1), n) nonnegative adjacency (differentiable).
    pub adjacency: TensorId,
    /// (n, n) contemporaneous block of the adjacency.
    pub contemporaneous: TensorId,
}

impl StructureLearner {
    pub fn new(n_vars: usize, l_max: usize, hidden: usize, kind: StructureKind) -> Result<Self> {
        if n_vars < 1 || l_max < 1 || hidden < 1 {
            return Err(TtcdError::Config(
                "structure learner wants n_vars >= 1, l_max >= 1, hidden >= 1".into(),
            ));
        }
        Ok(Self {
            n_vars,
            l_max,
            hidden,
            kind,
        })
    }

    fn grid_cells(&self) -> usize {
        (self.l_max + 1) * self.n_vars
    }

    /// Flat grid index of target `k`'s own contemporaneous cell.
    fn masked_cell(&self, k: usize) -> usize {
        self.l_max * self.n_vars + k
    }

    /// Registers one layer per target. Masked weights start (and stay)
    /// exactly zero: the mask multiplies the weights on every forward
    /// pass, so masked cells receive zero gradient and zero updates.
    pub fn init_params(&self, params: &mut ParamSet, seed: u64) -> Result<()> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x517c));
        let m = self.grid_cells();
        let h = self.hidden;
        let normal = Normal::new(0.0, 0.1).expect("valid normal");
        for k in 0..self.n_vars {
            match self.kind {
                StructureKind::FullGrid => {
                    let mut w1 = vec![0.0; m * h];
                    for (i, v) in w1.iter_mut().enumerate() {
                        if i / h != self.masked_cell(k) {
                            *v = normal.sample(&mut rng);
                        }
                    }
                    params.insert(&format!("sl.t{k}.w1"), Array::from_vec(vec![m, h], w1)?)?;
                    params.insert(&format!("sl.t{k}.b1"), Array::zeros(&[h]))?;
                    params.insert(
                        &format!("sl.t{k}.w2"),
                        randn(&mut rng, &[h, 1], 1.0 / (h as f64).sqrt()),
                    )?;
                    params.insert(&format!("sl.t{k}.b2"), Array::zeros(&[1]))?;
                }
                StructureKind::Conv1d => {
                    params.insert(
                        &format!("sl.t{k}.conv.w"),
                        randn(&mut rng, &[3, 1, h], 0.1),
                    )?;
                    params.insert(&format!("sl.t{k}.conv.b"), Array::zeros(&[h]))?;
                    let mut head = vec![0.0; m * h];
                    for (i, v) in head.iter_mut().enumerate() {
                        if i / h != self.masked_cell(k) {
                            *v = normal.sample(&mut rng);
                        }
                    }
                    params.insert(
                        &format!("sl.t{k}.head.w"),
                        Array::from_vec(vec![m * h, 1], head)?,
                    )?;
                    params.insert(&format!("sl.t{k}.head.b"), Array::zeros(&[1]))?;
                }
            }
        }
        Ok(())
    }

    /// Mask of target `k` as an (M, 1) column: zero at the target's
    /// own contemporaneous cell, one elsewhere.
    fn mask_array(&self, k: usize) -> Array {
        let m = self.grid_cells();
        let mut data = vec![1.0; m];
        data[self.masked_cell(k)] = 0.0;
        Array::from_vec(vec![m, 1], data).expect("shape consistent")
    }

    /// Records predictions and the differentiable adjacency on the tape.
    /// `distilled` must be `(N_w, l_max+1, n)`.
    pub fn forward(
        &self,
        tape: &mut Tape,
        bp: &BoundParams,
        distilled: TensorId,
    ) -> Result<StructureForward> {
        let shape = tape.value(distilled).shape().to_vec();
        if shape.len() != 3 || shape[1] != self.l_max + 1 || shape[2] != self.n_vars {
            return Err(TtcdError::Shape(format!(
                "structure learner wants (N_w, {}, {}), got {:?}",
                self.l_max + 1,
                self.n_vars,
                shape
            )));
        }
        let nw = shape[0];
        let m = self.grid_cells();
        let flat = tape.reshape(distilled, vec![nw, m])?;

        let mut preds = Vec::with_capacity(self.n_vars);
        let mut adj_cols = Vec::with_capacity(self.n_vars);
        let mut cont_cols = Vec::with_capacity(self.n_vars);
        for k in 0..self.n_vars {
            let (pred, cell_norms) = match self.kind {
                StructureKind::FullGrid => self.full_grid_target(tape, bp, flat, k, nw)?,
                StructureKind::Conv1d => self.conv1d_target(tape, bp, flat, k, nw)?,
            };
            preds.push(pred);
            // (M,) -> (L, n) -> (n, L) -> (n*L,) column of the adjacency
            let grid = tape.reshape(cell_norms, vec![self.l_max + 1, self.n_vars])?;
            let cont_row = tape.slice_axis(grid, 0, self.l_max, 1)?;
            let cont_col = tape.reshape(cont_row, vec![self.n_vars])?;
            cont_cols.push(cont_col);
            let grid_t = tape.transpose_last2(grid)?;
            let col = tape.reshape(grid_t, vec![m])?;
            adj_cols.push(col);
        }
        let predictions = tape.stack_last(&preds)?;
        let adjacency = tape.stack_last(&adj_cols)?;
        let contemporaneous = tape.stack_last(&cont_cols)?;
        Ok(StructureForward {
            predictions,
            adjacency,
            contemporaneous,
        })
    }

    /// Masked two-layer perceptron; returns ((N_w,) prediction, (M,) cell norms).
    fn full_grid_target(
        &self,
        tape: &mut Tape,
        bp: &BoundParams,
        flat: TensorId,
        k: usize,
        nw: usize,
    ) -> Result<(TensorId, TensorId)> {
        let w1 = bp.id(&format!("sl.t{k}.w1"))?;
        let b1 = bp.id(&format!("sl.t{k}.b1"))?;
        let w2 = bp.id(&format!("sl.t{k}.w2"))?;
        let b2 = bp.id(&format!("sl.t{k}.b2"))?;
        let mask = tape.constant(self.mask_array(k));
        let w1m = tape.mul(w1, mask)?;
        let h = tape.matmul(flat, w1m)?;
        let h = tape.add(h, b1)?;
        let h = tape.relu(h)?;
        let y = tape.matmul(h, w2)?;
        let y = tape.add(y, b2)?;
        let pred = tape.reshape(y, vec![nw])?;
        let norms = tape.norm_last(w1m)?; // (M,)
        Ok((pred, norms))
    }

    /// Conv1d ablation: width-3 kernel over the flattened grid with a
    /// masked position-resolved head.
    fn conv1d_target(
        &self,
        tape: &mut Tape,
        bp: &BoundParams,
        flat: TensorId,
        k: usize,
        nw: usize,
    ) -> Result<(TensorId, TensorId)> {
        let m = self.grid_cells();
        let h = self.hidden;
        let cw = bp.id(&format!("sl.t{k}.conv.w"))?;
        let cb = bp.id(&format!("sl.t{k}.conv.b"))?;
        let hw = bp.id(&format!("sl.t{k}.head.w"))?;
        let hb = bp.id(&format!("sl.t{k}.head.b"))?;

        // zero the masked input cell so it cannot leak through the kernel
        let in_mask = {
            let mut data = vec![1.0; m];
            data[self.masked_cell(k)] = 0.0;
            tape.constant(Array::from_vec(vec![m], data)?)
        };
        let masked = tape.mul(flat, in_mask)?;
        let seq = tape.reshape(masked, vec![nw, m, 1])?;
        let conv = tape.conv1d_same(seq, cw, cb)?; // (N_w, M, H)
        let conv = tape.relu(conv)?;
        let hidden_flat = tape.reshape(conv, vec![nw, m * h])?;

        // mask the head rows of the target's own contemporaneous position
        let head_mask = {
            let mut data = vec![1.0; m * h];
            let cell = self.masked_cell(k);
            for v in data.iter_mut().skip(cell * h).take(h) {
                *v = 0.0;
            }
            tape.constant(Array::from_vec(vec![m * h, 1], data)?)
        };
        let hw_m = tape.mul(hw, head_mask)?;
        let y = tape.matmul(hidden_flat, hw_m)?;
        let y = tape.add(y, hb)?;
        let pred = tape.reshape(y, vec![nw])?;
        let head_grid = tape.reshape(hw_m, vec![m, h])?;
        let norms = tape.norm_last(head_grid)?;
        Ok((pred, norms))
    }

    /// Extracts the adjacency from the current parameter values
    /// (no tape): entry `[(i, j), k]` is the L2 norm of the first-layer
    /// weights connecting input cell `(i, j)` to target `k`.
    pub fn extract_adjacency(&self, params: &ParamSet) -> Result<TemporalAdjacency> {
        let n = self.n_vars;
        let m = self.grid_cells();
        let l = self.l_max + 1;
        let mut w = vec![0.0; m * n];
        for k in 0..n {
            let cell_norms = self.cell_norms(params, k)?;
            for (cell, norm) in cell_norms.iter().enumerate() {
                let (slot, var) = (cell / n, cell % n);
                let row = var * l + slot;
                w[row * n + k] = *norm;
            }
        }
        TemporalAdjacency::new(Array::from_vec(vec![m, n], w)?, n, self.l_max)
    }

    fn cell_norms(&self, params: &ParamSet, k: usize) -> Result<Vec<f64>> {
        let m = self.grid_cells();
        let h = self.hidden;
        let masked = self.masked_cell(k);
        let weights = match self.kind {
            StructureKind::FullGrid => params
                .get(&format!("sl.t{k}.w1"))
                .ok_or_else(|| TtcdError::Config(format!("missing layer for target {k}")))?,
            StructureKind::Conv1d => params
                .get(&format!("sl.t{k}.head.w"))
                .ok_or_else(|| TtcdError::Config(format!("missing layer for target {k}")))?,
        };
        if weights.len() != m * h {
            return Err(TtcdError::Shape(format!(
                "layer {k} weights have {} values, expected {}",
                weights.len(),
                m * h
            )));
        }
        let mut norms = Vec::with_capacity(m);
        for cell in 0..m {
            if cell == masked {
                norms.push(0.0);
                continue;
            }
            let row = &weights.data()[cell * h..(cell + 1) * h];
            norms.push(row.iter().map(|v| v * v).sum::<f64>().sqrt());
        }
        Ok(norms)
    }
}

fn randn(rng: &mut ChaCha8Rng, shape: &[usize], sd: f64) -> Array {
    let normal = Normal::new(0.0, sd).expect("valid normal");
    let n: usize = shape.iter().product();
    Array::from_vec(shape.to_vec(), (0..n).map(|_| normal.sample(rng)).collect())
        .expect("shape consistent")
}

/// Prunes weak links: keeps edges with weight strictly above `omega`.
/// Errors when the surviving contemporaneous subgraph is cyclic, which
/// signals that the acyclicity constraint did not converge; the caller
/// may raise the threshold.
pub fn threshold_graph(
    adj: &TemporalAdjacency,
    names: &[String],
    spec: ThresholdSpec,
) -> Result<TemporalGraph> {
    if names.len() != adj.n_vars {
        return Err(TtcdError::Shape(format!(
            "{} names for {} variables",
            names.len(),
            adj.n_vars
        )));
    }
    let mut edges = Vec::new();
    for src in 0..adj.n_vars {
        for lag in 0..=adj.l_max {
            for dst in 0..adj.n_vars {
                let w = adj.get(src, lag, dst);
                if w > spec.omega {
                    edges.push(crate::data::Edge {
                        src: names[src].clone(),
                        lag,
                        dst: names[dst].clone(),
                        weight: w,
                    });
                }
            }
        }
    }
    TemporalGraph::new(names.to_vec(), adj.l_max, edges).map_err(|e| match e {
        TtcdError::Domain(msg) if msg.contains("cycle") => TtcdError::Domain(format!(
            "acyclicity violated at threshold ω = {}: {msg}",
            spec.omega
        )),
        other => other,
    })
}

/// Acyclicity of the contemporaneous block:
/// `h(W^t) = tr(exp(W^t ⊙ W^t)) - n`.
pub fn acyclicity_value(adj: &TemporalAdjacency) -> Result<f64> {
    trace_expm_gap(&adj.contemporaneous_block())
}

/// Mean squared error between per-window true current-time values and
/// the per-target predictions.
pub fn tve_loss(predictions: &Array, targets: &Array) -> Result<f64> {
    if predictions.shape() != targets.shape() {
        return Err(TtcdError::Shape(format!(
            "tve loss shape mismatch: {:?} vs {:?}",
            predictions.shape(),
            targets.shape()
        )));
    }
    if predictions.is_empty() {
        return Err(TtcdError::Shape("empty predictions".into()));
    }
    let sum: f64 = predictions
        .data()
        .iter()
        .zip(targets.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sum / predictions.len() as f64)
}

/// `lambda * ||W||_1`.
pub fn sparsity_loss(w: &Array, lambda: f64) -> f64 {
    lambda * w.data().iter().map(|v| v.abs()).sum::<f64>()
}

/// Diagnostic linear form of the target-estimation loss: treats the
/// extracted adjacency as a linear predictor of the current-time values
/// from the flattened grid and returns the mean squared error.
pub fn tve_linear(distilled: &Array, targets: &Array, adj: &TemporalAdjacency) -> Result<f64> {
    let n = adj.n_vars;
    let l = adj.l_max + 1;
    if distilled.rank() != 3 || distilled.shape()[1] != l || distilled.shape()[2] != n {
        return Err(TtcdError::Shape(format!(
            "tve_linear wants (N_w, {l}, {n}) distilled, got {:?}",
            distilled.shape()
        )));
    }
    let nw = distilled.shape()[0];
    if targets.shape() != [nw, n] {
        return Err(TtcdError::Shape(format!(
            "tve_linear wants ({nw}, {n}) targets, got {:?}",
            targets.shape()
        )));
    }
    let mut sum = 0.0;
    for w in 0..nw {
        for k in 0..n {
            let mut fit = 0.0;
            for src in 0..n {
                for slot in 0..l {
                    let row = src * l + slot;
                    // grid layout is (slot, var)
                    let x = distilled.data()[(w * l + slot) * n + src];
                    fit += adj.weights.data()[row * n + k] * x;
                }
            }
            let e = targets.data()[w * n + k] - fit;
            sum += e * e;
        }
    }
    Ok(sum / (nw * n) as f64)
}
