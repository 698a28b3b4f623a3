//! Define-by-run gradient tape over dense arrays.
//!
//! A `Tape` records array operations during a forward pass and replays
//! them in reverse to produce gradients for every registered parameter.
//! Tapes are rebuilt each optimization step: the model graph is small and
//! static, so re-recording is cheaper than caching and keeps the contract
//! simple. A tape is single-owner while recording; independent tapes may
//! run concurrently.

use std::collections::HashMap;

use crate::error::{Result, TtcdError};
use crate::numeric::array::{broadcast_shapes, Array};
use crate::numeric::expm;
use crate::numeric::fft;

/// Handle to a tensor recorded on a tape.
pub type TensorId = usize;

/// Named collection of trainable parameter arrays, insertion-ordered.
#[derive(Debug, Clone, Default)]
pub struct ParamSet {
    names: Vec<String>,
    values: Vec<Array>,
    index: HashMap<String, usize>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a parameter; duplicate names are an error.
    pub fn insert(&mut self, name: &str, value: Array) -> Result<()> {
        if self.index.contains_key(name) {
            return Err(TtcdError::Config(format!("duplicate parameter '{name}'")));
        }
        self.index.insert(name.to_string(), self.values.len());
        self.names.push(name.to_string());
        self.values.push(value);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Array> {
        self.index.get(name).map(|&i| &self.values[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Array> {
        self.index.get(name).copied().map(move |i| &mut self.values[i])
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Iterates parameters in registration order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &Array)> {
        self.names.iter().map(move |n| {
            let i = self.index[n];
            (n.as_str(), &self.values[i])
        })
    }

    /// Iterates mutably in registration order.
    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Array)> {
        // names and values share ordering by construction
        self.names.iter().zip(self.values.iter_mut()).map(|(n, v)| (n.as_str(), v))
    }

    /// Total number of scalar coordinates across all parameters.
    pub fn coord_count(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }
}

/// Tape leaf ids for every parameter of a `ParamSet`.
#[derive(Debug, Clone)]
pub struct BoundParams {
    ids: HashMap<String, TensorId>,
}

impl BoundParams {
    /// Looks up the tape id of a bound parameter.
    pub fn id(&self, name: &str) -> Result<TensorId> {
        self.ids
            .get(name)
            .copied()
            .ok_or_else(|| TtcdError::Config(format!("unbound parameter '{name}'")))
    }
}

/// Gradients per parameter name, as produced by [`Tape::backward`].
#[derive(Debug, Clone)]
pub struct Gradients {
    by_name: HashMap<String, Array>,
}

impl Gradients {
    pub fn get(&self, name: &str) -> Option<&Array> {
        self.by_name.get(name)
    }
}

enum Op {
    Leaf,
    Add(TensorId, TensorId),
    Sub(TensorId, TensorId),
    Mul(TensorId, TensorId),
    Div(TensorId, TensorId),
    MulConst(TensorId, f64),
    Matmul(TensorId, TensorId),
    TransposeLast2(TensorId),
    Reshape(TensorId),
    Relu(TensorId),
    Exp(TensorId),
    Sigmoid(TensorId),
    Abs(TensorId),
    Sqrt(TensorId),
    SoftmaxLast(TensorId),
    LayerNorm {
        x: TensorId,
        gain: TensorId,
        bias: TensorId,
        eps: f64,
    },
    SumAll(TensorId),
    MeanAll(TensorId),
    SliceAxis {
        x: TensorId,
        axis: usize,
        start: usize,
        len: usize,
    },
    StackLast(Vec<TensorId>),
    ConcatLast(TensorId, TensorId),
    Conv1dSame {
        x: TensorId,
        w: TensorId,
        b: TensorId,
    },
    RfftRe(TensorId),
    RfftIm(TensorId),
    Irfft {
        re: TensorId,
        im: TensorId,
        length: usize,
    },
    NormLast(TensorId),
    TraceExpmGap {
        a: TensorId,
        exp_cache: Vec<f64>,
    },
}

struct Node {
    op: Op,
    value: Array,
    needs_grad: bool,
}

/// Records a forward pass; see module docs.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: Vec<(String, TensorId)>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, op: Op, value: Array) -> TensorId {
        let needs_grad = match &op {
            Op::Leaf => false, // params flip this in `param`
            other => op_inputs(other).iter().any(|&i| self.nodes[i].needs_grad),
        };
        self.nodes.push(Node {
            op,
            value,
            needs_grad,
        });
        self.nodes.len() - 1
    }

    /// Value of a recorded tensor.
    pub fn value(&self, id: TensorId) -> &Array {
        &self.nodes[id].value
    }

    /// Records a constant (no gradient is reported for it).
    pub fn constant(&mut self, value: Array) -> TensorId {
        self.push(Op::Leaf, value)
    }

    /// Records a named parameter leaf.
    pub fn param(&mut self, name: &str, value: Array) -> TensorId {
        let id = self.push(Op::Leaf, value);
        self.nodes[id].needs_grad = true;
        self.params.push((name.to_string(), id));
        id
    }

    /// Binds every parameter of a set as a leaf.
    pub fn bind_params(&mut self, params: &ParamSet) -> BoundParams {
        let mut ids = HashMap::new();
        for (name, value) in params.iter() {
            let id = self.param(name, value.clone());
            ids.insert(name.to_string(), id);
        }
        BoundParams { ids }
    }

    // ---- elementwise binaries (right-aligned broadcasting) ----

    pub fn add(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.binary(a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.binary(a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.binary(a, b, Op::Mul(a, b), |x, y| x * y)
    }

    pub fn div(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.binary(a, b, Op::Div(a, b), |x, y| x / y)
    }

    fn binary(
        &mut self,
        a: TensorId,
        b: TensorId,
        op: Op,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<TensorId> {
        let (va, vb) = (&self.nodes[a].value, &self.nodes[b].value);
        let out_shape = broadcast_shapes(va.shape(), vb.shape())?;
        let total: usize = out_shape.iter().product();
        let da = va.data();
        let db = vb.data();
        let out = if va.shape() == vb.shape() {
            (0..total).map(|i| f(da[i], db[i])).collect()
        } else {
            let sa = bcast_strides(va.shape(), &out_shape);
            let sb = bcast_strides(vb.shape(), &out_shape);
            let mut out = vec![0.0; total];
            for_each_bcast(&out_shape, &sa, &sb, |lin, oa, ob| {
                out[lin] = f(da[oa], db[ob]);
            });
            out
        };
        let value = Array::from_vec(out_shape, out)?;
        Ok(self.push(op, value))
    }

    /// Multiplies by a compile-time constant scalar.
    pub fn mul_const(&mut self, a: TensorId, c: f64) -> Result<TensorId> {
        let value = self.nodes[a].value.map(|v| v * c);
        Ok(self.push(Op::MulConst(a, c), value))
    }

    // ---- unaries ----

    pub fn relu(&mut self, a: TensorId) -> Result<TensorId> {
        let value = self.nodes[a].value.map(|v| v.max(0.0));
        Ok(self.push(Op::Relu(a), value))
    }

    pub fn exp(&mut self, a: TensorId) -> Result<TensorId> {
        let value = self.nodes[a].value.map(f64::exp);
        Ok(self.push(Op::Exp(a), value))
    }

    pub fn sigmoid(&mut self, a: TensorId) -> Result<TensorId> {
        let value = self.nodes[a].value.map(|v| 1.0 / (1.0 + (-v).exp()));
        Ok(self.push(Op::Sigmoid(a), value))
    }

    pub fn abs(&mut self, a: TensorId) -> Result<TensorId> {
        let value = self.nodes[a].value.map(f64::abs);
        Ok(self.push(Op::Abs(a), value))
    }

    pub fn sqrt(&mut self, a: TensorId) -> Result<TensorId> {
        let value = self.nodes[a].value.map(f64::sqrt);
        Ok(self.push(Op::Sqrt(a), value))
    }

    // ---- shape ----

    pub fn reshape(&mut self, a: TensorId, shape: Vec<usize>) -> Result<TensorId> {
        let value = self.nodes[a].value.reshape(shape)?;
        Ok(self.push(Op::Reshape(a), value))
    }

    pub fn transpose_last2(&mut self, a: TensorId) -> Result<TensorId> {
        let va = &self.nodes[a].value;
        if va.rank() < 2 {
            return Err(TtcdError::Shape(format!(
                "transpose_last2 wants rank >= 2, got {:?}",
                va.shape()
            )));
        }
        let value = transpose_last2_value(va);
        Ok(self.push(Op::TransposeLast2(a), value))
    }

    /// Slice `len` entries starting at `start` along `axis`.
    pub fn slice_axis(
        &mut self,
        a: TensorId,
        axis: usize,
        start: usize,
        len: usize,
    ) -> Result<TensorId> {
        let va = &self.nodes[a].value;
        if axis >= va.rank() || start + len > va.shape()[axis] {
            return Err(TtcdError::Shape(format!(
                "slice_axis({axis}, {start}, {len}) out of range for {:?}",
                va.shape()
            )));
        }
        let mut shape = va.shape().to_vec();
        shape[axis] = len;
        let (outer, axis_len, inner) = split_axis(va.shape(), axis);
        let mut out = vec![0.0; shape.iter().product()];
        let src = va.data();
        for o in 0..outer {
            for j in 0..len {
                let s = (o * axis_len + start + j) * inner;
                let d = (o * len + j) * inner;
                out[d..d + inner].copy_from_slice(&src[s..s + inner]);
            }
        }
        let value = Array::from_vec(shape, out)?;
        Ok(self.push(Op::SliceAxis { x: a, axis, start, len }, value))
    }

    /// Stacks same-shaped tensors along a new trailing axis.
    pub fn stack_last(&mut self, parts: &[TensorId]) -> Result<TensorId> {
        if parts.is_empty() {
            return Err(TtcdError::Shape("stack_last of zero tensors".into()));
        }
        let base = self.nodes[parts[0]].value.shape().to_vec();
        for &p in parts {
            if self.nodes[p].value.shape() != base.as_slice() {
                return Err(TtcdError::Shape(format!(
                    "stack_last shape mismatch: {:?} vs {:?}",
                    base,
                    self.nodes[p].value.shape()
                )));
            }
        }
        let n = parts.len();
        let m: usize = base.iter().product();
        let mut out = vec![0.0; m * n];
        for (k, &p) in parts.iter().enumerate() {
            let src = self.nodes[p].value.data();
            for i in 0..m {
                out[i * n + k] = src[i];
            }
        }
        let mut shape = base;
        shape.push(n);
        let value = Array::from_vec(shape, out)?;
        Ok(self.push(Op::StackLast(parts.to_vec()), value))
    }

    /// Concatenates along the last axis.
    pub fn concat_last(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let (va, vb) = (&self.nodes[a].value, &self.nodes[b].value);
        if va.rank() != vb.rank()
            || va.rank() == 0
            || va.shape()[..va.rank() - 1] != vb.shape()[..vb.rank() - 1]
        {
            return Err(TtcdError::Shape(format!(
                "concat_last mismatch: {:?} vs {:?}",
                va.shape(),
                vb.shape()
            )));
        }
        let d1 = *va.shape().last().unwrap();
        let d2 = *vb.shape().last().unwrap();
        let rows = va.len() / d1;
        let mut out = vec![0.0; rows * (d1 + d2)];
        for r in 0..rows {
            out[r * (d1 + d2)..r * (d1 + d2) + d1]
                .copy_from_slice(&va.data()[r * d1..(r + 1) * d1]);
            out[r * (d1 + d2) + d1..(r + 1) * (d1 + d2)]
                .copy_from_slice(&vb.data()[r * d2..(r + 1) * d2]);
        }
        let mut shape = va.shape().to_vec();
        *shape.last_mut().unwrap() = d1 + d2;
        let value = Array::from_vec(shape, out)?;
        Ok(self.push(Op::ConcatLast(a, b), value))
    }

    // ---- linear algebra ----

    /// Matrix product. Supports (m,k)x(k,p), (B,m,k)x(k,p) and
    /// (B,m,k)x(B,k,p).
    pub fn matmul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let (va, vb) = (&self.nodes[a].value, &self.nodes[b].value);
        let value = matmul_value(va, vb)?;
        Ok(self.push(Op::Matmul(a, b), value))
    }

    // ---- nonlinear blocks ----

    /// Numerically stable softmax along the last axis.
    pub fn softmax_last(&mut self, a: TensorId) -> Result<TensorId> {
        let va = &self.nodes[a].value;
        if va.rank() == 0 || *va.shape().last().unwrap() == 0 {
            return Err(TtcdError::Shape("softmax over empty axis".into()));
        }
        let d = *va.shape().last().unwrap();
        let mut out = va.data().to_vec();
        for row in out.chunks_mut(d) {
            softmax_row(row);
        }
        let value = Array::from_vec(va.shape().to_vec(), out)?;
        Ok(self.push(Op::SoftmaxLast(a), value))
    }

    /// Layer normalization over the last axis with learned gain/bias.
    pub fn layer_norm(
        &mut self,
        x: TensorId,
        gain: TensorId,
        bias: TensorId,
        eps: f64,
    ) -> Result<TensorId> {
        let vx = &self.nodes[x].value;
        let d = *vx.shape().last().ok_or_else(|| {
            TtcdError::Shape("layer_norm wants rank >= 1".into())
        })?;
        let vg = &self.nodes[gain].value;
        let vb = &self.nodes[bias].value;
        if vg.shape() != [d] || vb.shape() != [d] {
            return Err(TtcdError::Shape(format!(
                "layer_norm gain/bias must be [{d}], got {:?}/{:?}",
                vg.shape(),
                vb.shape()
            )));
        }
        let mut out = vec![0.0; vx.len()];
        let (g, b) = (vg.data(), vb.data());
        for (r, row) in vx.data().chunks(d).enumerate() {
            let mu = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / d as f64;
            let inv = 1.0 / (var + eps).sqrt();
            for j in 0..d {
                out[r * d + j] = g[j] * (row[j] - mu) * inv + b[j];
            }
        }
        let value = Array::from_vec(vx.shape().to_vec(), out)?;
        Ok(self.push(Op::LayerNorm { x, gain, bias, eps }, value))
    }

    // ---- reductions ----

    pub fn sum_all(&mut self, a: TensorId) -> Result<TensorId> {
        let s: f64 = self.nodes[a].value.data().iter().sum();
        Ok(self.push(Op::SumAll(a), Array::scalar(s)))
    }

    pub fn mean_all(&mut self, a: TensorId) -> Result<TensorId> {
        let va = &self.nodes[a].value;
        if va.is_empty() {
            return Err(TtcdError::Shape("mean of empty array".into()));
        }
        let s: f64 = va.data().iter().sum::<f64>() / va.len() as f64;
        Ok(self.push(Op::MeanAll(a), Array::scalar(s)))
    }

    /// L2 norm over the last axis: `(..., D) -> (...)`.
    pub fn norm_last(&mut self, a: TensorId) -> Result<TensorId> {
        let va = &self.nodes[a].value;
        if va.rank() == 0 {
            return Err(TtcdError::Shape("norm_last wants rank >= 1".into()));
        }
        let d = *va.shape().last().unwrap();
        let rows = va.len() / d.max(1);
        let mut out = vec![0.0; rows];
        for (r, row) in va.data().chunks(d).enumerate() {
            out[r] = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        }
        let shape = va.shape()[..va.rank() - 1].to_vec();
        let value = Array::from_vec(shape, out)?;
        Ok(self.push(Op::NormLast(a), value))
    }

    // ---- spectral ----

    /// Real part of the real FFT over the last axis.
    pub fn rfft_re(&mut self, a: TensorId) -> Result<TensorId> {
        let va = &self.nodes[a].value;
        let axis = va.rank().checked_sub(1).ok_or_else(|| {
            TtcdError::Shape("rfft_re wants rank >= 1".into())
        })?;
        let spec = fft::rfft(va, axis)?;
        let value = Array::from_vec(spec.shape.clone(), spec.re)?;
        Ok(self.push(Op::RfftRe(a), value))
    }

    /// Imaginary part of the real FFT over the last axis.
    pub fn rfft_im(&mut self, a: TensorId) -> Result<TensorId> {
        let va = &self.nodes[a].value;
        let axis = va.rank().checked_sub(1).ok_or_else(|| {
            TtcdError::Shape("rfft_im wants rank >= 1".into())
        })?;
        let spec = fft::rfft(va, axis)?;
        let value = Array::from_vec(spec.shape.clone(), spec.im)?;
        Ok(self.push(Op::RfftIm(a), value))
    }

    /// Inverse real FFT over the last axis back to `length` samples.
    pub fn irfft(&mut self, re: TensorId, im: TensorId, length: usize) -> Result<TensorId> {
        let (vre, vim) = (&self.nodes[re].value, &self.nodes[im].value);
        if vre.shape() != vim.shape() {
            return Err(TtcdError::Shape(format!(
                "irfft re/im shape mismatch: {:?} vs {:?}",
                vre.shape(),
                vim.shape()
            )));
        }
        let spec = fft::ComplexArray {
            shape: vre.shape().to_vec(),
            re: vre.data().to_vec(),
            im: vim.data().to_vec(),
        };
        let axis = vre.rank() - 1;
        let value = fft::irfft(&spec, length, axis)?;
        Ok(self.push(Op::Irfft { re, im, length }, value))
    }

    // ---- structured ----

    /// Same-padding 1-D convolution over the middle axis:
    /// x `(B, L, Cin)`, w `(kw, Cin, Cout)` (kw odd), b `(Cout)`.
    pub fn conv1d_same(&mut self, x: TensorId, w: TensorId, b: TensorId) -> Result<TensorId> {
        let (vx, vw, vb) = (
            &self.nodes[x].value,
            &self.nodes[w].value,
            &self.nodes[b].value,
        );
        if vx.rank() != 3 || vw.rank() != 3 || vb.rank() != 1 {
            return Err(TtcdError::Shape(format!(
                "conv1d_same wants x(B,L,Cin) w(kw,Cin,Cout) b(Cout), got {:?} {:?} {:?}",
                vx.shape(),
                vw.shape(),
                vb.shape()
            )));
        }
        let (bsz, l, cin) = (vx.shape()[0], vx.shape()[1], vx.shape()[2]);
        let (kw, wcin, cout) = (vw.shape()[0], vw.shape()[1], vw.shape()[2]);
        if wcin != cin || vb.shape()[0] != cout || kw % 2 == 0 {
            return Err(TtcdError::Shape(format!(
                "conv1d_same inconsistent shapes (kw must be odd): x {:?} w {:?} b {:?}",
                vx.shape(),
                vw.shape(),
                vb.shape()
            )));
        }
        let pad = kw / 2;
        let mut out = vec![0.0; bsz * l * cout];
        let (xd, wd, bd) = (vx.data(), vw.data(), vb.data());
        for bi in 0..bsz {
            for t in 0..l {
                for co in 0..cout {
                    let mut acc = bd[co];
                    for p in 0..kw {
                        let ti = t as isize + p as isize - pad as isize;
                        if ti < 0 || ti >= l as isize {
                            continue;
                        }
                        let xoff = (bi * l + ti as usize) * cin;
                        let woff = p * cin * cout + co;
                        for ci in 0..cin {
                            acc += xd[xoff + ci] * wd[woff + ci * cout];
                        }
                    }
                    out[(bi * l + t) * cout + co] = acc;
                }
            }
        }
        let value = Array::from_vec(vec![bsz, l, cout], out)?;
        Ok(self.push(Op::Conv1dSame { x, w, b }, value))
    }

    /// Differentiable acyclicity functional `tr(exp(A ⊙ A)) - n`.
    pub fn trace_expm_gap(&mut self, a: TensorId) -> Result<TensorId> {
        let va = &self.nodes[a].value;
        let (gap, exp_cache) = expm::trace_expm_gap_with_exp(va)?;
        Ok(self.push(Op::TraceExpmGap { a, exp_cache }, Array::scalar(gap)))
    }

    // ---- backward ----

    /// Backpropagates from a scalar loss; returns per-parameter gradients.
    /// Registered parameters untouched by the loss get exact-zero grads.
    pub fn backward(&self, loss: TensorId) -> Result<Gradients> {
        if self.nodes[loss].value.len() != 1 {
            return Err(TtcdError::Shape(format!(
                "backward wants a scalar loss, got shape {:?}",
                self.nodes[loss].value.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss] = Some(vec![1.0]);

        for id in (0..=loss).rev() {
            // constant subtrees feed no parameter; skip their backward work
            if !self.nodes[id].needs_grad {
                continue;
            }
            let go = match grads[id].take() {
                Some(g) => g,
                None => continue,
            };
            self.backward_node(id, &go, &mut grads)?;
            grads[id] = Some(go);
        }

        let mut by_name = HashMap::new();
        for (name, id) in &self.params {
            let shape = self.nodes[*id].value.shape().to_vec();
            let g = match &grads[*id] {
                Some(g) => Array::from_vec(shape, g.clone())?,
                None => Array::zeros(&shape),
            };
            by_name.insert(name.clone(), g);
        }
        Ok(Gradients { by_name })
    }

    fn accumulate(grads: &mut Vec<Option<Vec<f64>>>, id: TensorId, len: usize) -> &mut Vec<f64> {
        if grads[id].is_none() {
            grads[id] = Some(vec![0.0; len]);
        }
        grads[id].as_mut().unwrap()
    }

    #[allow(clippy::too_many_lines)]
    fn backward_node(
        &self,
        id: TensorId,
        go: &[f64],
        grads: &mut Vec<Option<Vec<f64>>>,
    ) -> Result<()> {
        let out_val = &self.nodes[id].value;
        match &self.nodes[id].op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.backward_binary(*a, *b, out_val, go, grads, |_, _, g| (g, g));
            }
            Op::Sub(a, b) => {
                self.backward_binary(*a, *b, out_val, go, grads, |_, _, g| (g, -g));
            }
            Op::Mul(a, b) => {
                self.backward_binary(*a, *b, out_val, go, grads, |x, y, g| (g * y, g * x));
            }
            Op::Div(a, b) => {
                self.backward_binary(*a, *b, out_val, go, grads, |x, y, g| {
                    (g / y, -g * x / (y * y))
                });
            }
            Op::MulConst(a, c) => {
                let ga = Self::accumulate(grads, *a, self.nodes[*a].value.len());
                for (gi, &g) in ga.iter_mut().zip(go) {
                    *gi += g * c;
                }
            }
            Op::Matmul(a, b) => self.backward_matmul(*a, *b, go, grads)?,
            Op::TransposeLast2(a) => {
                let got = transpose_last2_value(
                    &Array::from_vec(out_val.shape().to_vec(), go.to_vec())?,
                );
                let ga = Self::accumulate(grads, *a, self.nodes[*a].value.len());
                for (gi, &g) in ga.iter_mut().zip(got.data()) {
                    *gi += g;
                }
            }
            Op::Reshape(a) => {
                let ga = Self::accumulate(grads, *a, self.nodes[*a].value.len());
                for (gi, &g) in ga.iter_mut().zip(go) {
                    *gi += g;
                }
            }
            Op::Relu(a) => {
                let xv = self.nodes[*a].value.data();
                let ga = Self::accumulate(grads, *a, xv.len());
                for i in 0..xv.len() {
                    if xv[i] > 0.0 {
                        ga[i] += go[i];
                    }
                }
            }
            Op::Exp(a) => {
                let yv = out_val.data();
                let ga = Self::accumulate(grads, *a, yv.len());
                for i in 0..yv.len() {
                    ga[i] += go[i] * yv[i];
                }
            }
            Op::Sigmoid(a) => {
                let yv = out_val.data();
                let ga = Self::accumulate(grads, *a, yv.len());
                for i in 0..yv.len() {
                    ga[i] += go[i] * yv[i] * (1.0 - yv[i]);
                }
            }
            Op::Abs(a) => {
                let xv = self.nodes[*a].value.data();
                let ga = Self::accumulate(grads, *a, xv.len());
                for i in 0..xv.len() {
                    ga[i] += go[i] * xv[i].signum() * if xv[i] == 0.0 { 0.0 } else { 1.0 };
                }
            }
            Op::Sqrt(a) => {
                let yv = out_val.data();
                let ga = Self::accumulate(grads, *a, yv.len());
                for i in 0..yv.len() {
                    if yv[i] > 0.0 {
                        ga[i] += go[i] / (2.0 * yv[i]);
                    }
                }
            }
            Op::SoftmaxLast(a) => {
                let yv = out_val.data();
                let d = *out_val.shape().last().unwrap();
                let ga = Self::accumulate(grads, *a, yv.len());
                for r in 0..yv.len() / d {
                    let y = &yv[r * d..(r + 1) * d];
                    let g = &go[r * d..(r + 1) * d];
                    let dot: f64 = y.iter().zip(g).map(|(yi, gi)| yi * gi).sum();
                    for j in 0..d {
                        ga[r * d + j] += y[j] * (g[j] - dot);
                    }
                }
            }
            Op::LayerNorm { x, gain, bias, eps } => {
                self.backward_layer_norm(*x, *gain, *bias, *eps, go, grads);
            }
            Op::SumAll(a) => {
                let ga = Self::accumulate(grads, *a, self.nodes[*a].value.len());
                for gi in ga.iter_mut() {
                    *gi += go[0];
                }
            }
            Op::MeanAll(a) => {
                let n = self.nodes[*a].value.len() as f64;
                let ga = Self::accumulate(grads, *a, self.nodes[*a].value.len());
                for gi in ga.iter_mut() {
                    *gi += go[0] / n;
                }
            }
            Op::SliceAxis { x, axis, start, len } => {
                let xs = self.nodes[*x].value.shape().to_vec();
                let (outer, axis_len, inner) = split_axis(&xs, *axis);
                let ga = Self::accumulate(grads, *x, self.nodes[*x].value.len());
                for o in 0..outer {
                    for j in 0..*len {
                        let d = (o * axis_len + start + j) * inner;
                        let s = (o * len + j) * inner;
                        for i in 0..inner {
                            ga[d + i] += go[s + i];
                        }
                    }
                }
            }
            Op::StackLast(parts) => {
                let n = parts.len();
                let m = out_val.len() / n;
                for (k, &p) in parts.iter().enumerate() {
                    let gp = Self::accumulate(grads, p, self.nodes[p].value.len());
                    for i in 0..m {
                        gp[i] += go[i * n + k];
                    }
                }
            }
            Op::ConcatLast(a, b) => {
                let d1 = *self.nodes[*a].value.shape().last().unwrap();
                let d2 = *self.nodes[*b].value.shape().last().unwrap();
                let rows = out_val.len() / (d1 + d2);
                {
                    let ga = Self::accumulate(grads, *a, self.nodes[*a].value.len());
                    for r in 0..rows {
                        for j in 0..d1 {
                            ga[r * d1 + j] += go[r * (d1 + d2) + j];
                        }
                    }
                }
                let gb = Self::accumulate(grads, *b, self.nodes[*b].value.len());
                for r in 0..rows {
                    for j in 0..d2 {
                        gb[r * d2 + j] += go[r * (d1 + d2) + d1 + j];
                    }
                }
            }
            Op::Conv1dSame { x, w, b } => {
                self.backward_conv1d(*x, *w, *b, go, grads);
            }
            Op::RfftRe(a) => {
                let l = *self.nodes[*a].value.shape().last().unwrap();
                let bins = fft::rfft_bins(l);
                let (cos_t, _) = fft::dft_tables(l, bins);
                let ga = Self::accumulate(grads, *a, self.nodes[*a].value.len());
                let lanes = ga.len() / l;
                for lane in 0..lanes {
                    for t in 0..l {
                        let mut acc = 0.0;
                        for k in 0..bins {
                            acc += go[lane * bins + k] * cos_t[k * l + t];
                        }
                        ga[lane * l + t] += acc;
                    }
                }
            }
            Op::RfftIm(a) => {
                let l = *self.nodes[*a].value.shape().last().unwrap();
                let bins = fft::rfft_bins(l);
                let (_, sin_t) = fft::dft_tables(l, bins);
                let ga = Self::accumulate(grads, *a, self.nodes[*a].value.len());
                let lanes = ga.len() / l;
                for lane in 0..lanes {
                    for t in 0..l {
                        let mut acc = 0.0;
                        for k in 0..bins {
                            acc -= go[lane * bins + k] * sin_t[k * l + t];
                        }
                        ga[lane * l + t] += acc;
                    }
                }
            }
            Op::Irfft { re, im, length } => {
                let l = *length;
                let bins = fft::rfft_bins(l);
                let lanes = out_val.len() / l;
                let (cos_t, sin_t) = fft::dft_tables(l, bins);
                let weights: Vec<f64> = (0..bins)
                    .map(|k| fft::bin_weight(l, k) / l as f64)
                    .collect();
                {
                    let gre = Self::accumulate(grads, *re, self.nodes[*re].value.len());
                    for lane in 0..lanes {
                        for k in 0..bins {
                            let mut acc = 0.0;
                            for t in 0..l {
                                acc += go[lane * l + t] * cos_t[k * l + t];
                            }
                            gre[lane * bins + k] += acc * weights[k];
                        }
                    }
                }
                let gim = Self::accumulate(grads, *im, self.nodes[*im].value.len());
                for lane in 0..lanes {
                    for k in 0..bins {
                        let mut acc = 0.0;
                        for t in 0..l {
                            acc -= go[lane * l + t] * sin_t[k * l + t];
                        }
                        gim[lane * bins + k] += acc * weights[k];
                    }
                }
            }
            Op::NormLast(a) => {
                let xv = self.nodes[*a].value.data();
                let d = *self.nodes[*a].value.shape().last().unwrap();
                let yv = out_val.data();
                let ga = Self::accumulate(grads, *a, xv.len());
                for r in 0..yv.len() {
                    if yv[r] > 0.0 {
                        for j in 0..d {
                            ga[r * d + j] += go[r] * xv[r * d + j] / yv[r];
                        }
                    }
                }
            }
            Op::TraceExpmGap { a, exp_cache } => {
                let av = self.nodes[*a].value.data();
                let n = self.nodes[*a].value.shape()[0];
                let ga = Self::accumulate(grads, *a, av.len());
                for i in 0..n {
                    for j in 0..n {
                        ga[i * n + j] += go[0] * exp_cache[j * n + i] * 2.0 * av[i * n + j];
                    }
                }
            }
        }
        Ok(())
    }

    fn backward_binary(
        &self,
        a: TensorId,
        b: TensorId,
        out_val: &Array,
        go: &[f64],
        grads: &mut Vec<Option<Vec<f64>>>,
        df: impl Fn(f64, f64, f64) -> (f64, f64),
    ) {
        let (va, vb) = (&self.nodes[a].value, &self.nodes[b].value);
        let (da, db) = (va.data().to_vec(), vb.data().to_vec());
        if va.shape() == vb.shape() {
            {
                let ga = Self::accumulate(grads, a, da.len());
                for i in 0..da.len() {
                    ga[i] += df(da[i], db[i], go[i]).0;
                }
            }
            let gb = Self::accumulate(grads, b, db.len());
            for i in 0..db.len() {
                gb[i] += df(da[i], db[i], go[i]).1;
            }
        } else {
            let out_shape = out_val.shape().to_vec();
            let sa = bcast_strides(va.shape(), &out_shape);
            let sb = bcast_strides(vb.shape(), &out_shape);
            let mut ga = vec![0.0; da.len()];
            let mut gb = vec![0.0; db.len()];
            for_each_bcast(&out_shape, &sa, &sb, |lin, oa, ob| {
                let (dga, dgb) = df(da[oa], db[ob], go[lin]);
                ga[oa] += dga;
                gb[ob] += dgb;
            });
            {
                let dst = Self::accumulate(grads, a, da.len());
                for i in 0..da.len() {
                    dst[i] += ga[i];
                }
            }
            let dst = Self::accumulate(grads, b, db.len());
            for i in 0..db.len() {
                dst[i] += gb[i];
            }
        }
    }

    fn backward_matmul(
        &self,
        a: TensorId,
        b: TensorId,
        go: &[f64],
        grads: &mut Vec<Option<Vec<f64>>>,
    ) -> Result<()> {
        let (va, vb) = (&self.nodes[a].value, &self.nodes[b].value);
        let (ad, bd) = (va.data(), vb.data());
        match (va.rank(), vb.rank()) {
            (2, 2) => {
                let (m, k) = (va.shape()[0], va.shape()[1]);
                let p = vb.shape()[1];
                {
                    let ga = Self::accumulate(grads, a, ad.len());
                    mm_nt_acc(go, bd, m, p, k, ga);
                }
                let gb = Self::accumulate(grads, b, bd.len());
                mm_tn_acc(ad, go, m, k, p, gb);
            }
            (3, 2) => {
                let (bsz, m, k) = (va.shape()[0], va.shape()[1], va.shape()[2]);
                let p = vb.shape()[1];
                {
                    let ga = Self::accumulate(grads, a, ad.len());
                    for i in 0..bsz {
                        mm_nt_acc(
                            &go[i * m * p..(i + 1) * m * p],
                            bd,
                            m,
                            p,
                            k,
                            &mut ga[i * m * k..(i + 1) * m * k],
                        );
                    }
                }
                let gb = Self::accumulate(grads, b, bd.len());
                for i in 0..bsz {
                    mm_tn_acc(
                        &ad[i * m * k..(i + 1) * m * k],
                        &go[i * m * p..(i + 1) * m * p],
                        m,
                        k,
                        p,
                        gb,
                    );
                }
            }
            (3, 3) => {
                let (bsz, m, k) = (va.shape()[0], va.shape()[1], va.shape()[2]);
                let p = vb.shape()[2];
                {
                    let ga = Self::accumulate(grads, a, ad.len());
                    for i in 0..bsz {
                        mm_nt_acc(
                            &go[i * m * p..(i + 1) * m * p],
                            &bd[i * k * p..(i + 1) * k * p],
                            m,
                            p,
                            k,
                            &mut ga[i * m * k..(i + 1) * m * k],
                        );
                    }
                }
                let gb = Self::accumulate(grads, b, bd.len());
                for i in 0..bsz {
                    mm_tn_acc(
                        &ad[i * m * k..(i + 1) * m * k],
                        &go[i * m * p..(i + 1) * m * p],
                        m,
                        k,
                        p,
                        &mut gb[i * k * p..(i + 1) * k * p],
                    );
                }
            }
            _ => {
                return Err(TtcdError::Shape(format!(
                    "matmul backward: unsupported ranks {:?} x {:?}",
                    va.shape(),
                    vb.shape()
                )))
            }
        }
        Ok(())
    }

    fn backward_layer_norm(
        &self,
        x: TensorId,
        gain: TensorId,
        bias: TensorId,
        eps: f64,
        go: &[f64],
        grads: &mut Vec<Option<Vec<f64>>>,
    ) {
        let vx = &self.nodes[x].value;
        let d = *vx.shape().last().unwrap();
        let g = self.nodes[gain].value.data().to_vec();
        let xd = vx.data().to_vec();
        let rows = xd.len() / d;
        let mut gx = vec![0.0; xd.len()];
        let mut gg = vec![0.0; d];
        let mut gb = vec![0.0; d];
        for r in 0..rows {
            let row = &xd[r * d..(r + 1) * d];
            let gor = &go[r * d..(r + 1) * d];
            let mu = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / d as f64;
            let inv = 1.0 / (var + eps).sqrt();
            // xhat_j = (x_j - mu) * inv
            let mut sum_dxhat = 0.0;
            let mut sum_dxhat_xhat = 0.0;
            for j in 0..d {
                let xhat = (row[j] - mu) * inv;
                let dxhat = gor[j] * g[j];
                sum_dxhat += dxhat;
                sum_dxhat_xhat += dxhat * xhat;
                gg[j] += gor[j] * xhat;
                gb[j] += gor[j];
            }
            for j in 0..d {
                let xhat = (row[j] - mu) * inv;
                let dxhat = gor[j] * g[j];
                gx[r * d + j] +=
                    inv * (dxhat - sum_dxhat / d as f64 - xhat * sum_dxhat_xhat / d as f64);
            }
        }
        {
            let dst = Self::accumulate(grads, x, xd.len());
            for i in 0..xd.len() {
                dst[i] += gx[i];
            }
        }
        {
            let dst = Self::accumulate(grads, gain, d);
            for j in 0..d {
                dst[j] += gg[j];
            }
        }
        let dst = Self::accumulate(grads, bias, d);
        for j in 0..d {
            dst[j] += gb[j];
        }
    }

    fn backward_conv1d(
        &self,
        x: TensorId,
        w: TensorId,
        b: TensorId,
        go: &[f64],
        grads: &mut Vec<Option<Vec<f64>>>,
    ) {
        let vx = &self.nodes[x].value;
        let vw = &self.nodes[w].value;
        let (bsz, l, cin) = (vx.shape()[0], vx.shape()[1], vx.shape()[2]);
        let (kw, _, cout) = (vw.shape()[0], vw.shape()[1], vw.shape()[2]);
        let pad = kw / 2;
        let xd = vx.data().to_vec();
        let wd = vw.data().to_vec();
        let mut gx = vec![0.0; xd.len()];
        let mut gw = vec![0.0; wd.len()];
        let mut gb = vec![0.0; cout];
        for bi in 0..bsz {
            for t in 0..l {
                for co in 0..cout {
                    let g = go[(bi * l + t) * cout + co];
                    gb[co] += g;
                    for p in 0..kw {
                        let ti = t as isize + p as isize - pad as isize;
                        if ti < 0 || ti >= l as isize {
                            continue;
                        }
                        let xoff = (bi * l + ti as usize) * cin;
                        let woff = p * cin * cout + co;
                        for ci in 0..cin {
                            gx[xoff + ci] += g * wd[woff + ci * cout];
                            gw[woff + ci * cout] += g * xd[xoff + ci];
                        }
                    }
                }
            }
        }
        {
            let dst = Self::accumulate(grads, x, xd.len());
            for i in 0..xd.len() {
                dst[i] += gx[i];
            }
        }
        {
            let dst = Self::accumulate(grads, w, wd.len());
            for i in 0..wd.len() {
                dst[i] += gw[i];
            }
        }
        let dst = Self::accumulate(grads, b, cout);
        for i in 0..cout {
            dst[i] += gb[i];
        }
    }
}

/// In-place numerically stable softmax of one row.
pub(crate) fn softmax_row(row: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

fn transpose_last2_value(a: &Array) -> Array {
    let rank = a.rank();
    let (r, c) = (a.shape()[rank - 2], a.shape()[rank - 1]);
    let batch = a.len() / (r * c);
    let mut out = vec![0.0; a.len()];
    for bi in 0..batch {
        let off = bi * r * c;
        for i in 0..r {
            for j in 0..c {
                out[off + j * r + i] = a.data()[off + i * c + j];
            }
        }
    }
    let mut shape = a.shape().to_vec();
    shape.swap(rank - 2, rank - 1);
    Array::from_vec(shape, out).expect("transpose preserves count")
}

fn matmul_value(va: &Array, vb: &Array) -> Result<Array> {
    match (va.rank(), vb.rank()) {
        (2, 2) => {
            let (m, k) = (va.shape()[0], va.shape()[1]);
            let (k2, p) = (vb.shape()[0], vb.shape()[1]);
            if k != k2 {
                return Err(matmul_err(va, vb));
            }
            let mut out = vec![0.0; m * p];
            mm_acc(va.data(), vb.data(), m, k, p, &mut out);
            Array::from_vec(vec![m, p], out)
        }
        (3, 2) => {
            let (bsz, m, k) = (va.shape()[0], va.shape()[1], va.shape()[2]);
            let (k2, p) = (vb.shape()[0], vb.shape()[1]);
            if k != k2 {
                return Err(matmul_err(va, vb));
            }
            let mut out = vec![0.0; bsz * m * p];
            for i in 0..bsz {
                mm_acc(
                    &va.data()[i * m * k..(i + 1) * m * k],
                    vb.data(),
                    m,
                    k,
                    p,
                    &mut out[i * m * p..(i + 1) * m * p],
                );
            }
            Array::from_vec(vec![bsz, m, p], out)
        }
        (3, 3) => {
            let (bsz, m, k) = (va.shape()[0], va.shape()[1], va.shape()[2]);
            let (b2, k2, p) = (vb.shape()[0], vb.shape()[1], vb.shape()[2]);
            if k != k2 || bsz != b2 {
                return Err(matmul_err(va, vb));
            }
            let mut out = vec![0.0; bsz * m * p];
            for i in 0..bsz {
                mm_acc(
                    &va.data()[i * m * k..(i + 1) * m * k],
                    &vb.data()[i * k * p..(i + 1) * k * p],
                    m,
                    k,
                    p,
                    &mut out[i * m * p..(i + 1) * m * p],
                );
            }
            Array::from_vec(vec![bsz, m, p], out)
        }
        _ => Err(matmul_err(va, vb)),
    }
}

fn matmul_err(va: &Array, vb: &Array) -> TtcdError {
    TtcdError::Shape(format!(
        "matmul: incompatible shapes {:?} x {:?}",
        va.shape(),
        vb.shape()
    ))
}

/// out[m,p] += a[m,k] * b[k,p]
fn mm_acc(a: &[f64], b: &[f64], m: usize, k: usize, p: usize, out: &mut [f64]) {
    for i in 0..m {
        for kk in 0..k {
            let aik = a[i * k + kk];
            if aik == 0.0 {
                continue;
            }
            let brow = &b[kk * p..(kk + 1) * p];
            let orow = &mut out[i * p..(i + 1) * p];
            for j in 0..p {
                orow[j] += aik * brow[j];
            }
        }
    }
}

/// out[m,k] += a[m,p] * b[k,p]^T  (b accessed transposed)
fn mm_nt_acc(a: &[f64], b: &[f64], m: usize, p: usize, k: usize, out: &mut [f64]) {
    for i in 0..m {
        let arow = &a[i * p..(i + 1) * p];
        for kk in 0..k {
            let brow = &b[kk * p..(kk + 1) * p];
            // four independent accumulators so the FP adds pipeline
            let mut acc = [0.0f64; 4];
            let chunks = p / 4;
            for c in 0..chunks {
                let j = c * 4;
                acc[0] += arow[j] * brow[j];
                acc[1] += arow[j + 1] * brow[j + 1];
                acc[2] += arow[j + 2] * brow[j + 2];
                acc[3] += arow[j + 3] * brow[j + 3];
            }
            let mut tail = 0.0;
            for j in chunks * 4..p {
                tail += arow[j] * brow[j];
            }
            out[i * k + kk] += acc[0] + acc[1] + acc[2] + acc[3] + tail;
        }
    }
}

/// out[k,p] += a[m,k]^T * b[m,p]
fn mm_tn_acc(a: &[f64], b: &[f64], m: usize, k: usize, p: usize, out: &mut [f64]) {
    for i in 0..m {
        for kk in 0..k {
            let aik = a[i * k + kk];
            if aik == 0.0 {
                continue;
            }
            let brow = &b[i * p..(i + 1) * p];
            let orow = &mut out[kk * p..(kk + 1) * p];
            for j in 0..p {
                orow[j] += aik * brow[j];
            }
        }
    }
}

fn op_inputs(op: &Op) -> Vec<TensorId> {
    match op {
        Op::Leaf => vec![],
        Op::Add(a, b)
        | Op::Sub(a, b)
        | Op::Mul(a, b)
        | Op::Div(a, b)
        | Op::Matmul(a, b)
        | Op::ConcatLast(a, b) => vec![*a, *b],
        Op::MulConst(a, _)
        | Op::TransposeLast2(a)
        | Op::Reshape(a)
        | Op::Relu(a)
        | Op::Exp(a)
        | Op::Sigmoid(a)
        | Op::Abs(a)
        | Op::Sqrt(a)
        | Op::SoftmaxLast(a)
        | Op::SumAll(a)
        | Op::MeanAll(a)
        | Op::NormLast(a)
        | Op::RfftRe(a)
        | Op::RfftIm(a) => vec![*a],
        Op::SliceAxis { x, .. } => vec![*x],
        Op::StackLast(parts) => parts.clone(),
        Op::LayerNorm { x, gain, bias, .. } => vec![*x, *gain, *bias],
        Op::Conv1dSame { x, w, b } => vec![*x, *w, *b],
        Op::Irfft { re, im, .. } => vec![*re, *im],
        Op::TraceExpmGap { a, .. } => vec![*a],
    }
}

fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

/// Strides of `shape` right-aligned into `out_shape`, 0 on broadcast axes.
fn bcast_strides(shape: &[usize], out_shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![0usize; out_shape.len()];
    let offset = out_shape.len() - shape.len();
    let mut acc = 1usize;
    for i in (0..shape.len()).rev() {
        if shape[i] != 1 {
            strides[offset + i] = acc;
        }
        acc *= shape[i];
    }
    strides
}

/// Iterates an output shape, yielding (linear index, offset in a, offset in b).
fn for_each_bcast(
    out_shape: &[usize],
    sa: &[usize],
    sb: &[usize],
    mut f: impl FnMut(usize, usize, usize),
) {
    let rank = out_shape.len();
    if rank == 0 {
        f(0, 0, 0);
        return;
    }
    let total: usize = out_shape.iter().product();
    let mut idx = vec![0usize; rank];
    let (mut oa, mut ob) = (0usize, 0usize);
    for lin in 0..total {
        f(lin, oa, ob);
        // odometer increment
        for ax in (0..rank).rev() {
            idx[ax] += 1;
            oa += sa[ax];
            ob += sb[ax];
            if idx[ax] < out_shape[ax] {
                break;
            }
            oa -= sa[ax] * out_shape[ax];
            ob -= sb[ax] * out_shape[ax];
            idx[ax] = 0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn arr(shape: &[usize], data: &[f64]) -> Array {
        Array::from_vec(shape.to_vec(), data.to_vec()).unwrap()
    }

    /// Central-difference check of a scalar objective built by `f` against
    /// tape gradients, over every coordinate of every parameter.
    fn check<F>(params: &ParamSet, f: F) -> f64
    where
        F: Fn(&mut Tape, &BoundParams) -> TensorId,
    {
        let mut tape = Tape::new();
        let bound = tape.bind_params(params);
        let loss = f(&mut tape, &bound);
        let grads = tape.backward(loss).unwrap();
        let eps = 1e-6;
        let mut worst = 0.0f64;
        for (name, value) in params.iter() {
            for i in 0..value.len() {
                let eval = |delta: f64| {
                    let mut p2 = params.clone();
                    p2.get_mut(name).unwrap().data_mut()[i] += delta;
                    let mut t2 = Tape::new();
                    let b2 = t2.bind_params(&p2);
                    let l2 = f(&mut t2, &b2);
                    t2.value(l2).as_scalar().unwrap()
                };
                let fd = (eval(eps) - eval(-eps)) / (2.0 * eps);
                let an = grads.get(name).unwrap().data()[i];
                let rel = (an - fd).abs() / fd.abs().max(1.0);
                worst = worst.max(rel);
            }
        }
        worst
    }

    fn param_set(entries: &[(&str, Array)]) -> ParamSet {
        let mut p = ParamSet::new();
        for (n, a) in entries {
            p.insert(n, a.clone()).unwrap();
        }
        p
    }

    #[test]
    fn add_mul_with_broadcast_grads() {
        let p = param_set(&[
            ("a", arr(&[2, 3], &[0.1, -0.4, 0.7, 1.2, -0.3, 0.5])),
            ("b", arr(&[3], &[0.5, -1.5, 2.0])),
        ]);
        let worst = check(&p, |t, bp| {
            let a = bp.id("a").unwrap();
            let b = bp.id("b").unwrap();
            let s = t.add(a, b).unwrap();
            let m = t.mul(s, a).unwrap();
            t.sum_all(m).unwrap()
        });
        assert!(worst < 1e-8, "rel err {worst}");
    }

    #[test]
    fn div_grads() {
        let p = param_set(&[
            ("a", arr(&[4], &[0.3, -0.8, 1.4, 2.2])),
            ("b", arr(&[4], &[1.5, 2.0, -3.0, 0.7])),
        ]);
        let worst = check(&p, |t, bp| {
            let a = bp.id("a").unwrap();
            let b = bp.id("b").unwrap();
            let d = t.div(a, b).unwrap();
            t.sum_all(d).unwrap()
        });
        assert!(worst < 1e-7, "rel err {worst}");
    }

    #[test]
    fn matmul_all_rank_combos() {
        let p = param_set(&[
            ("a2", arr(&[2, 3], &[0.1, 0.2, -0.3, 0.4, 0.5, -0.6])),
            ("b2", arr(&[3, 2], &[1.0, -0.5, 0.3, 0.8, -1.2, 0.4])),
            (
                "a3",
                arr(&[2, 2, 3], &[0.1, 0.2, 0.3, -0.4, 0.5, 0.6, 0.7, -0.8, 0.9, 1.0, -1.1, 1.2]),
            ),
            (
                "b3",
                arr(&[2, 3, 2], &[0.5, 1.0, -1.5, 2.0, 2.5, -3.0, 0.2, 0.4, 0.6, -0.8, 1.0, 1.2]),
            ),
        ]);
        let worst = check(&p, |t, bp| {
            let a2 = bp.id("a2").unwrap();
            let b2 = bp.id("b2").unwrap();
            let a3 = bp.id("a3").unwrap();
            let b3 = bp.id("b3").unwrap();
            let m22 = t.matmul(a2, b2).unwrap();
            let m32 = t.matmul(a3, b2).unwrap();
            let m33 = t.matmul(a3, b3).unwrap();
            let s1 = t.sum_all(m22).unwrap();
            let s2 = t.sum_all(m32).unwrap();
            let s3 = t.sum_all(m33).unwrap();
            let t12 = t.add(s1, s2).unwrap();
            t.add(t12, s3).unwrap()
        });
        assert!(worst < 1e-7, "rel err {worst}");
    }

    #[test]
    fn softmax_layer_norm_and_unaries() {
        let p = param_set(&[
            ("x", arr(&[2, 4], &[0.5, -1.0, 2.0, 0.1, -0.4, 1.3, 0.9, -2.1])),
            ("g", arr(&[4], &[1.1, 0.9, 1.3, 0.7])),
            ("b", arr(&[4], &[0.1, -0.2, 0.05, 0.3])),
        ]);
        let worst = check(&p, |t, bp| {
            let x = bp.id("x").unwrap();
            let g = bp.id("g").unwrap();
            let b = bp.id("b").unwrap();
            let sm = t.softmax_last(x).unwrap();
            let ln = t.layer_norm(x, g, b, 1e-6).unwrap();
            let e = t.exp(sm).unwrap();
            let r = t.relu(ln).unwrap();
            let sg = t.sigmoid(x).unwrap();
            let s1 = t.sum_all(e).unwrap();
            let s2 = t.sum_all(r).unwrap();
            let s3 = t.sum_all(sg).unwrap();
            let a = t.add(s1, s2).unwrap();
            t.add(a, s3).unwrap()
        });
        assert!(worst < 1e-7, "rel err {worst}");
    }

    #[test]
    fn slice_stack_concat_transpose_grads() {
        let p = param_set(&[
            ("x", arr(&[2, 3, 2], &[0.1, 0.9, -0.5, 0.7, 1.1, -0.2, 0.4, 0.3, -0.8, 0.6, 0.2, 1.5])),
            ("y", arr(&[2, 2], &[0.3, -0.6, 1.2, 0.8])),
        ]);
        let worst = check(&p, |t, bp| {
            let x = bp.id("x").unwrap();
            let y = bp.id("y").unwrap();
            let sl = t.slice_axis(x, 1, 1, 2).unwrap(); // (2,2,2)
            let tr = t.transpose_last2(sl).unwrap(); // (2,2,2)
            let flat = t.reshape(tr, vec![2, 4]).unwrap();
            let cc = t.concat_last(flat, y).unwrap(); // (2,6)
            let c0 = t.slice_axis(cc, 1, 0, 3).unwrap();
            let c1 = t.slice_axis(cc, 1, 3, 3).unwrap();
            let mul = t.mul(c0, c1).unwrap();
            let r0 = t.reshape(mul, vec![6]).unwrap();
            let st = t.stack_last(&[r0, r0]).unwrap(); // (6,2)
            t.sum_all(st).unwrap()
        });
        assert!(worst < 1e-8, "rel err {worst}");
    }

    #[test]
    fn conv1d_grads() {
        let p = param_set(&[
            (
                "x",
                arr(&[1, 5, 2], &[0.2, -0.1, 0.5, 0.4, -0.6, 0.3, 0.8, -0.9, 0.1, 0.7]),
            ),
            (
                "w",
                arr(&[3, 2, 2], &[0.3, -0.2, 0.5, 0.1, -0.4, 0.7, 0.2, 0.6, -0.1, 0.9, 0.4, -0.3]),
            ),
            ("b", arr(&[2], &[0.05, -0.15])),
        ]);
        let worst = check(&p, |t, bp| {
            let x = bp.id("x").unwrap();
            let w = bp.id("w").unwrap();
            let b = bp.id("b").unwrap();
            let c = t.conv1d_same(x, w, b).unwrap();
            let sq = t.mul(c, c).unwrap();
            t.sum_all(sq).unwrap()
        });
        assert!(worst < 1e-7, "rel err {worst}");
    }

    #[test]
    fn fft_pair_grads() {
        let p = param_set(&[
            ("x", arr(&[2, 6], &[0.4, -0.3, 0.8, 0.2, -0.7, 0.5, 1.1, 0.6, -0.2, 0.9, 0.3, -1.0])),
            ("cre", arr(&[4], &[1.0, 0.8, 1.2, 0.9])),
            ("cim", arr(&[4], &[0.0, 0.2, -0.3, 0.1])),
        ]);
        let worst = check(&p, |t, bp| {
            let x = bp.id("x").unwrap();
            let cre = bp.id("cre").unwrap();
            let cim = bp.id("cim").unwrap();
            let re = t.rfft_re(x).unwrap();
            let im = t.rfft_im(x).unwrap();
            // complex multiply by (cre, cim) per bin
            let rr = t.mul(re, cre).unwrap();
            let ii = t.mul(im, cim).unwrap();
            let ri = t.mul(re, cim).unwrap();
            let ir = t.mul(im, cre).unwrap();
            let yre = t.sub(rr, ii).unwrap();
            let yim = t.add(ri, ir).unwrap();
            let back = t.irfft(yre, yim, 6).unwrap();
            let sq = t.mul(back, back).unwrap();
            t.sum_all(sq).unwrap()
        });
        assert!(worst < 1e-7, "rel err {worst}");
    }

    #[test]
    fn irfft_inverts_rfft_on_tape() {
        let x = arr(&[3, 8], &(0..24).map(|i| (i as f64 * 0.37).sin()).collect::<Vec<_>>());
        let mut tape = Tape::new();
        let xid = tape.constant(x.clone());
        let re = tape.rfft_re(xid).unwrap();
        let im = tape.rfft_im(xid).unwrap();
        let back = tape.irfft(re, im, 8).unwrap();
        for (a, b) in x.data().iter().zip(tape.value(back).data()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn trace_expm_gap_grad_on_tape() {
        let p = param_set(&[(
            "w",
            arr(&[3, 3], &[0.0, 0.8, -0.2, 0.3, 0.0, 0.5, -0.6, 0.1, 0.0]),
        )]);
        let worst = check(&p, |t, bp| {
            let w = bp.id("w").unwrap();
            t.trace_expm_gap(w).unwrap()
        });
        assert!(worst < 1e-7, "rel err {worst}");
    }

    #[test]
    fn norm_last_and_sqrt_abs_grads() {
        let p = param_set(&[("w", arr(&[3, 2], &[0.4, -0.7, 1.2, 0.3, -0.5, 0.9]))]);
        let worst = check(&p, |t, bp| {
            let w = bp.id("w").unwrap();
            let n = t.norm_last(w).unwrap(); // (3,)
            let a = t.abs(w).unwrap();
            let sq = t.mul(w, w).unwrap();
            let rt = t.sqrt(sq).unwrap();
            let s1 = t.sum_all(n).unwrap();
            let s2 = t.sum_all(a).unwrap();
            let s3 = t.sum_all(rt).unwrap();
            let u = t.add(s1, s2).unwrap();
            t.add(u, s3).unwrap()
        });
        assert!(worst < 1e-7, "rel err {worst}");
    }

    #[test]
    fn unused_params_get_zero_grads() {
        let p = param_set(&[
            ("used", arr(&[2], &[1.0, 2.0])),
            ("unused", arr(&[3], &[5.0, 6.0, 7.0])),
        ]);
        let mut tape = Tape::new();
        let bound = tape.bind_params(&p);
        let u = bound.id("used").unwrap();
        let loss = tape.sum_all(u).unwrap();
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get("used").unwrap().data(), &[1.0, 1.0]);
        assert_eq!(grads.get("unused").unwrap().data(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn fan_out_accumulates() {
        // f(x) = sum(x*x) + sum(x) -> grad 2x + 1
        let p = param_set(&[("x", arr(&[3], &[1.0, -2.0, 0.5]))]);
        let mut tape = Tape::new();
        let bound = tape.bind_params(&p);
        let x = bound.id("x").unwrap();
        let sq = tape.mul(x, x).unwrap();
        let s1 = tape.sum_all(sq).unwrap();
        let s2 = tape.sum_all(x).unwrap();
        let loss = tape.add(s1, s2).unwrap();
        let grads = tape.backward(loss).unwrap();
        let g = grads.get("x").unwrap().data();
        assert_eq!(g, &[3.0, -3.0, 2.0]);
    }

    #[test]
    fn backward_requires_scalar() {
        let p = param_set(&[("x", arr(&[3], &[1.0, 2.0, 3.0]))]);
        let mut tape = Tape::new();
        let bound = tape.bind_params(&p);
        let x = bound.id("x").unwrap();
        assert!(tape.backward(x).is_err());
    }
}
