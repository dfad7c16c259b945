//! The autodiff tape: forward ops, reverse-mode backward.
//!
//! Every op validates shapes with assertions; model-level code performs the
//! user-facing validation before touching the tape. All arrays are owned,
//! standard-layout, and retained until the tape is dropped, so the backward
//! pass can recompute cheap auxiliaries (means, sigmoids) from stored
//! values instead of caching them.

use ndarray::{ArcArray, Array2, ArrayD, ArrayViewD, Axis, Ix2, Ix3, Ix4, IxDyn};
use std::sync::Arc;

use super::params::{ParamId, ParamStore};
use super::Real;

/// Handle to a tensor on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Tx(pub usize);

enum Op {
    Leaf,
    Add(Tx, Tx),
    Sub(Tx, Tx),
    Mul(Tx, Tx),
    Scale(Tx, f64),
    AddScalar(Tx),
    /// 2D or batched-3D matrix product with optional transposes.
    MatMul { a: Tx, b: Tx, ta: bool, tb: bool },
    /// Softmax over the last axis.
    Softmax(Tx),
    Sigmoid(Tx),
    Silu(Tx),
    Gelu(Tx),
    /// Non-affine layer normalization over the last axis.
    LayerNorm { x: Tx, eps: f64 },
    /// `x: [N, C] + v: [C]` broadcast over rows.
    AddRow { x: Tx, v: Tx },
    /// `x: [N, C] * v: [C]` broadcast over rows.
    MulRow { x: Tx, v: Tx },
    /// `x: [N, C] * v: [N, 1]` broadcast over columns.
    MulCol { x: Tx, v: Tx },
    /// Row gather: `out[i, :] = x[idx[i], :]`.
    Gather { x: Tx, idx: Arc<Vec<usize>> },
    /// `[G*n, C] -> [G, C]` mean over consecutive groups of `n` rows.
    GroupMean { x: Tx, group: usize },
    ConcatRows(Vec<Tx>),
    ConcatCols(Vec<Tx>),
    SliceRows { x: Tx, start: usize, len: usize },
    SliceCols { x: Tx, start: usize, len: usize },
    Reshape { x: Tx },
    /// Permutation of a 3D tensor's axes.
    Permute3 { x: Tx, axes: [usize; 3] },
    MeanAll(Tx),
    /// Zero-padded "same" 3D convolution over `[T, H, W, Cin]` with weights
    /// `[kt*kh*kw*Cin, Cout]` (offset-major rows) and bias `[Cout]`.
    Conv3d { x: Tx, w: Tx, b: Tx, kt: usize, kh: usize, kw: usize },
}

struct Node<S: Real> {
    value: ArcArray<S, IxDyn>,
    op: Op,
    needs_grad: bool,
    param: Option<ParamId>,
}

pub struct Tape<S: Real> {
    nodes: Vec<Node<S>>,
}

/// Gradients produced by one backward pass.
pub struct Gradients<S: Real> {
    node_grads: Vec<Option<ArrayD<S>>>,
    /// `(param, grad)` for every trainable parameter leaf reached.
    pub params: Vec<(ParamId, ArrayD<S>)>,
}

impl<S: Real> Gradients<S> {
    /// Gradient w.r.t. an arbitrary tape tensor (present only if it needed one).
    pub fn wrt(&self, t: Tx) -> Option<&ArrayD<S>> {
        self.node_grads.get(t.0).and_then(|g| g.as_ref())
    }
}

impl<S: Real> Default for Tape<S> {
    fn default() -> Self {
        Self::new()
    }
}

fn standard<S: Real>(a: ArrayD<S>) -> ArcArray<S, IxDyn> {
    if a.is_standard_layout() {
        a.into_shared()
    } else {
        a.as_standard_layout().to_owned().into_shared()
    }
}

impl<S: Real> Tape<S> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, t: Tx) -> &ArcArray<S, IxDyn> {
        &self.nodes[t.0].value
    }

    pub fn shape(&self, t: Tx) -> &[usize] {
        self.nodes[t.0].value.shape()
    }

    fn push(&mut self, value: ArrayD<S>, op: Op, needs_grad: bool, param: Option<ParamId>) -> Tx {
        self.nodes.push(Node { value: standard(value), op, needs_grad, param });
        Tx(self.nodes.len() - 1)
    }

    fn ng(&self, t: Tx) -> bool {
        self.nodes[t.0].needs_grad
    }

    /// Constant input; never receives a gradient.
    pub fn input(&mut self, v: ArrayD<S>) -> Tx {
        self.push(v, Op::Leaf, false, None)
    }

    /// Gradient-requiring leaf that is not a parameter (tests, probes).
    pub fn var(&mut self, v: ArrayD<S>) -> Tx {
        self.push(v, Op::Leaf, true, None)
    }

    /// Parameter leaf; `trainable` decides whether backward reaches it.
    pub fn param(&mut self, store: &ParamStore<S>, id: ParamId, trainable: bool) -> Tx {
        let value = store.value(id).clone();
        self.nodes.push(Node { value, op: Op::Leaf, needs_grad: trainable, param: Some(id) });
        Tx(self.nodes.len() - 1)
    }

    // ---- elementwise ----

    pub fn add(&mut self, a: Tx, b: Tx) -> Tx {
        assert_eq!(self.shape(a), self.shape(b), "add shapes");
        let v = self.nodes[a.0].value.to_owned() + &self.nodes[b.0].value.view();
        let g = self.ng(a) || self.ng(b);
        self.push(v, Op::Add(a, b), g, None)
    }

    pub fn sub(&mut self, a: Tx, b: Tx) -> Tx {
        assert_eq!(self.shape(a), self.shape(b), "sub shapes");
        let v = self.nodes[a.0].value.to_owned() - &self.nodes[b.0].value.view();
        let g = self.ng(a) || self.ng(b);
        self.push(v, Op::Sub(a, b), g, None)
    }

    pub fn mul(&mut self, a: Tx, b: Tx) -> Tx {
        assert_eq!(self.shape(a), self.shape(b), "mul shapes");
        let v = self.nodes[a.0].value.to_owned() * &self.nodes[b.0].value.view();
        let g = self.ng(a) || self.ng(b);
        self.push(v, Op::Mul(a, b), g, None)
    }

    pub fn scale(&mut self, a: Tx, c: f64) -> Tx {
        let s = S::from_f64(c);
        let v = self.nodes[a.0].value.mapv(|x| x * s);
        let g = self.ng(a);
        self.push(v, Op::Scale(a, c), g, None)
    }

    pub fn add_scalar(&mut self, a: Tx, c: f64) -> Tx {
        let s = S::from_f64(c);
        let v = self.nodes[a.0].value.mapv(|x| x + s);
        let g = self.ng(a);
        self.push(v, Op::AddScalar(a), g, None)
    }

    // ---- activations ----

    pub fn sigmoid(&mut self, a: Tx) -> Tx {
        let one = S::one();
        let v = self.nodes[a.0].value.mapv(|x| one / (one + (-x).exp()));
        let g = self.ng(a);
        self.push(v, Op::Sigmoid(a), g, None)
    }

    pub fn silu(&mut self, a: Tx) -> Tx {
        let one = S::one();
        let v = self.nodes[a.0].value.mapv(|x| x / (one + (-x).exp()));
        let g = self.ng(a);
        self.push(v, Op::Silu(a), g, None)
    }

    pub fn gelu(&mut self, a: Tx) -> Tx {
        let v = self.nodes[a.0].value.mapv(gelu_fwd);
        let g = self.ng(a);
        self.push(v, Op::Gelu(a), g, None)
    }

    // ---- normalization / softmax ----

    pub fn layer_norm(&mut self, x: Tx, eps: f64) -> Tx {
        let v = layer_norm_fwd(&self.nodes[x.0].value.view(), S::from_f64(eps));
        let g = self.ng(x);
        self.push(v, Op::LayerNorm { x, eps }, g, None)
    }

    pub fn softmax(&mut self, x: Tx) -> Tx {
        let v = softmax_fwd(&self.nodes[x.0].value.view());
        let g = self.ng(x);
        self.push(v, Op::Softmax(x), g, None)
    }

    // ---- broadcasting ----

    pub fn add_row(&mut self, x: Tx, v: Tx) -> Tx {
        let (xs, vs) = (self.shape(x).to_vec(), self.shape(v).to_vec());
        assert_eq!(vs.len(), 1, "add_row vector must be 1-D");
        assert_eq!(*xs.last().unwrap(), vs[0], "add_row length");
        let val = self.nodes[x.0].value.to_owned() + &self.nodes[v.0].value.view();
        let g = self.ng(x) || self.ng(v);
        self.push(val, Op::AddRow { x, v }, g, None)
    }

    pub fn mul_row(&mut self, x: Tx, v: Tx) -> Tx {
        let (xs, vs) = (self.shape(x).to_vec(), self.shape(v).to_vec());
        assert_eq!(vs.len(), 1, "mul_row vector must be 1-D");
        assert_eq!(*xs.last().unwrap(), vs[0], "mul_row length");
        let val = self.nodes[x.0].value.to_owned() * &self.nodes[v.0].value.view();
        let g = self.ng(x) || self.ng(v);
        self.push(val, Op::MulRow { x, v }, g, None)
    }

    pub fn mul_col(&mut self, x: Tx, v: Tx) -> Tx {
        let xs = self.shape(x).to_vec();
        let vs = self.shape(v).to_vec();
        assert_eq!(xs.len(), 2, "mul_col x must be 2-D");
        assert_eq!(vs, vec![xs[0], 1], "mul_col v must be [N, 1]");
        let val = self.nodes[x.0].value.to_owned() * &self.nodes[v.0].value.view();
        let g = self.ng(x) || self.ng(v);
        self.push(val, Op::MulCol { x, v }, g, None)
    }

    // ---- structure ----

    pub fn gather(&mut self, x: Tx, idx: Arc<Vec<usize>>) -> Tx {
        let xs = self.shape(x).to_vec();
        assert_eq!(xs.len(), 2, "gather x must be 2-D");
        let x2 = self.view2(x);
        let mut out = Array2::zeros((idx.len(), xs[1]));
        for (i, &j) in idx.iter().enumerate() {
            out.row_mut(i).assign(&x2.row(j));
        }
        let g = self.ng(x);
        self.push(out.into_dyn(), Op::Gather { x, idx }, g, None)
    }

    pub fn group_mean(&mut self, x: Tx, group: usize) -> Tx {
        let xs = self.shape(x).to_vec();
        assert_eq!(xs.len(), 2, "group_mean x must be 2-D");
        assert!(group > 0 && xs[0] % group == 0, "group_mean rows {} % {group}", xs[0]);
        let x2 = self.view2(x);
        let out_rows = xs[0] / group;
        let inv = S::from_f64(1.0 / group as f64);
        let mut out = Array2::zeros((out_rows, xs[1]));
        for r in 0..out_rows {
            for i in 0..group {
                let row = x2.row(r * group + i);
                out.row_mut(r).zip_mut_with(&row, |o, &v| *o += v);
            }
            out.row_mut(r).mapv_inplace(|v| v * inv);
        }
        let g = self.ng(x);
        self.push(out.into_dyn(), Op::GroupMean { x, group }, g, None)
    }

    pub fn concat_rows(&mut self, parts: &[Tx]) -> Tx {
        assert!(!parts.is_empty());
        let cols = self.shape(parts[0])[1];
        let views: Vec<_> = parts.iter().map(|&p| self.view2(p)).collect();
        let total: usize = views.iter().map(|v| v.shape()[0]).sum();
        let mut out = Array2::zeros((total, cols));
        let mut r = 0;
        for v in &views {
            out.slice_mut(ndarray::s![r..r + v.shape()[0], ..]).assign(v);
            r += v.shape()[0];
        }
        let g = parts.iter().any(|&p| self.ng(p));
        self.push(out.into_dyn(), Op::ConcatRows(parts.to_vec()), g, None)
    }

    pub fn concat_cols(&mut self, parts: &[Tx]) -> Tx {
        assert!(!parts.is_empty());
        let rows = self.shape(parts[0])[0];
        let views: Vec<_> = parts.iter().map(|&p| self.view2(p)).collect();
        let total: usize = views.iter().map(|v| v.shape()[1]).sum();
        let mut out = Array2::zeros((rows, total));
        let mut c = 0;
        for v in &views {
            out.slice_mut(ndarray::s![.., c..c + v.shape()[1]]).assign(v);
            c += v.shape()[1];
        }
        let g = parts.iter().any(|&p| self.ng(p));
        self.push(out.into_dyn(), Op::ConcatCols(parts.to_vec()), g, None)
    }

    pub fn slice_rows(&mut self, x: Tx, start: usize, len: usize) -> Tx {
        let v = self.view2(x).slice(ndarray::s![start..start + len, ..]).to_owned();
        let g = self.ng(x);
        self.push(v.into_dyn(), Op::SliceRows { x, start, len }, g, None)
    }

    pub fn slice_cols(&mut self, x: Tx, start: usize, len: usize) -> Tx {
        let xs = self.shape(x).to_vec();
        let v: ArrayD<S> = if xs.len() == 1 {
            self.nodes[x.0]
                .value
                .view()
                .into_dimensionality::<ndarray::Ix1>()
                .unwrap()
                .slice(ndarray::s![start..start + len])
                .to_owned()
                .into_dyn()
        } else {
            self.view2(x).slice(ndarray::s![.., start..start + len]).to_owned().into_dyn()
        };
        let g = self.ng(x);
        self.push(v, Op::SliceCols { x, start, len }, g, None)
    }

    pub fn reshape(&mut self, x: Tx, shape: &[usize]) -> Tx {
        let n: usize = shape.iter().product();
        assert_eq!(n, self.nodes[x.0].value.len(), "reshape size");
        let v = self
            .nodes[x.0]
            .value
            .to_owned()
            .into_shape_with_order(IxDyn(shape))
            .expect("reshape");
        let g = self.ng(x);
        self.push(v, Op::Reshape { x }, g, None)
    }

    pub fn permute3(&mut self, x: Tx, axes: [usize; 3]) -> Tx {
        let v3 = self.nodes[x.0].value.view().into_dimensionality::<Ix3>().expect("permute3 3-D");
        let v = v3.permuted_axes(axes).to_owned().into_dyn();
        let g = self.ng(x);
        self.push(v, Op::Permute3 { x, axes }, g, None)
    }

    pub fn mean_all(&mut self, x: Tx) -> Tx {
        let n = self.nodes[x.0].value.len();
        let m: S = self.nodes[x.0].value.iter().copied().sum::<S>() / S::from_f64(n as f64);
        let v = ArrayD::from_elem(IxDyn(&[1]), m);
        let g = self.ng(x);
        self.push(v, Op::MeanAll(x), g, None)
    }

    // ---- linear algebra ----

    fn view2(&self, t: Tx) -> ndarray::ArrayView2<'_, S> {
        self.nodes[t.0].value.view().into_dimensionality::<Ix2>().expect("2-D view")
    }

    /// Matrix product; both operands 2-D, or both 3-D with equal batch dims.
    pub fn matmul(&mut self, a: Tx, b: Tx, ta: bool, tb: bool) -> Tx {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let g = self.ng(a) || self.ng(b);
        let v = match (sa.len(), sb.len()) {
            (2, 2) => {
                matmul2(&self.view2(a), &self.view2(b), ta, tb).into_dyn()
            }
            (3, 3) => {
                assert_eq!(sa[0], sb[0], "batched matmul batch dims");
                let a3 = self.nodes[a.0].value.view().into_dimensionality::<Ix3>().unwrap();
                let b3 = self.nodes[b.0].value.view().into_dimensionality::<Ix3>().unwrap();
                let first =
                    matmul2(&a3.index_axis(Axis(0), 0), &b3.index_axis(Axis(0), 0), ta, tb);
                let (m, n) = first.dim();
                let mut out = ndarray::Array3::zeros((sa[0], m, n));
                out.index_axis_mut(Axis(0), 0).assign(&first);
                for i in 1..sa[0] {
                    let r = matmul2(&a3.index_axis(Axis(0), i), &b3.index_axis(Axis(0), i), ta, tb);
                    out.index_axis_mut(Axis(0), i).assign(&r);
                }
                out.into_dyn()
            }
            _ => panic!("matmul needs both operands 2-D or both 3-D"),
        };
        self.push(v, Op::MatMul { a, b, ta, tb }, g, None)
    }

    pub fn conv3d(&mut self, x: Tx, w: Tx, b: Tx, kt: usize, kh: usize, kw: usize) -> Tx {
        assert!(kt % 2 == 1 && kh % 2 == 1 && kw % 2 == 1, "odd kernels only");
        let xs = self.shape(x).to_vec();
        assert_eq!(xs.len(), 4, "conv3d input must be [T, H, W, C]");
        let ws = self.shape(w).to_vec();
        let cin = xs[3];
        assert_eq!(ws[0], kt * kh * kw * cin, "conv3d weight rows");
        let cout = ws[1];
        assert_eq!(self.shape(b), &[cout], "conv3d bias");
        let x4 = self.nodes[x.0].value.view().into_dimensionality::<Ix4>().unwrap();
        let w2 = self.view2(w);
        let bias = self.nodes[b.0].value.view().into_dimensionality::<ndarray::Ix1>().unwrap();
        let v = conv3d_fwd(&x4, &w2, &bias, kt, kh, kw);
        let g = self.ng(x) || self.ng(w) || self.ng(b);
        self.push(v.into_dyn(), Op::Conv3d { x, w, b, kt, kh, kw }, g, None)
    }

    // ---- backward ----

    pub fn backward(&self, loss: Tx) -> Gradients<S> {
        let mut grads: Vec<Option<ArrayD<S>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(ArrayD::from_elem(self.nodes[loss.0].value.raw_dim(), S::one()));

        for id in (0..=loss.0).rev() {
            if !self.nodes[id].needs_grad {
                grads[id] = None;
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            self.backprop_node(id, &g, &mut grads);
            if self.nodes[id].param.is_some() || matches!(self.nodes[id].op, Op::Leaf) {
                grads[id] = Some(g); // keep leaf grads accessible
            }
        }

        let mut params = Vec::new();
        for (i, node) in self.nodes.iter().enumerate() {
            if let (Some(pid), true) = (node.param, node.needs_grad) {
                if let Some(g) = &grads[i] {
                    params.push((pid, g.clone()));
                }
            }
        }
        Gradients { node_grads: grads, params }
    }

    fn acc(&self, grads: &mut [Option<ArrayD<S>>], t: Tx, g: ArrayD<S>) {
        if !self.nodes[t.0].needs_grad {
            return;
        }
        match &mut grads[t.0] {
            Some(existing) => *existing += &g,
            slot @ None => *slot = Some(g),
        }
    }

    fn backprop_node(&self, id: usize, g: &ArrayD<S>, grads: &mut [Option<ArrayD<S>>]) {
        let node = &self.nodes[id];
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.acc(grads, *a, g.clone());
                self.acc(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.acc(grads, *a, g.clone());
                self.acc(grads, *b, g.mapv(|v| -v));
            }
            Op::Mul(a, b) => {
                if self.ng(*a) {
                    self.acc(grads, *a, g * &self.nodes[b.0].value.view());
                }
                if self.ng(*b) {
                    self.acc(grads, *b, g * &self.nodes[a.0].value.view());
                }
            }
            Op::Scale(a, c) => {
                let s = S::from_f64(*c);
                self.acc(grads, *a, g.mapv(|v| v * s));
            }
            Op::AddScalar(a) => self.acc(grads, *a, g.clone()),
            Op::Sigmoid(a) => {
                let one = S::one();
                let y = &node.value;
                self.acc(grads, *a, g * &y.mapv(|v| v * (one - v)).view());
            }
            Op::Silu(a) => {
                let one = S::one();
                let dx = self.nodes[a.0].value.mapv(|x| {
                    let s = one / (one + (-x).exp());
                    s * (one + x * (one - s))
                });
                self.acc(grads, *a, g * &dx.view());
            }
            Op::Gelu(a) => {
                let dx = self.nodes[a.0].value.mapv(gelu_grad);
                self.acc(grads, *a, g * &dx.view());
            }
            Op::LayerNorm { x, eps } => {
                if self.ng(*x) {
                    let gx = layer_norm_bwd(
                        &self.nodes[x.0].value.view(),
                        &node.value.view(),
                        g,
                        S::from_f64(*eps),
                    );
                    self.acc(grads, *x, gx);
                }
            }
            Op::Softmax(x) => {
                if self.ng(*x) {
                    self.acc(grads, *x, softmax_bwd(&node.value.view(), g));
                }
            }
            Op::AddRow { x, v } => {
                if self.ng(*x) {
                    self.acc(grads, *x, g.clone());
                }
                if self.ng(*v) {
                    let c = *self.shape(*v).first().unwrap();
                    let g2 = g.view().into_dimensionality::<Ix2>().expect("add_row grad 2-D");
                    let mut gv = ndarray::Array1::zeros(c);
                    for row in g2.rows() {
                        gv.zip_mut_with(&row, |o, &val| *o += val);
                    }
                    self.acc(grads, *v, gv.into_dyn());
                }
            }
            Op::MulRow { x, v } => {
                if self.ng(*x) {
                    self.acc(grads, *x, g * &self.nodes[v.0].value.view());
                }
                if self.ng(*v) {
                    let g2 = g.view().into_dimensionality::<Ix2>().expect("mul_row grad 2-D");
                    let x2 = self.view2(*x);
                    let c = x2.shape()[1];
                    let mut gv = ndarray::Array1::zeros(c);
                    for (grow, xrow) in g2.rows().into_iter().zip(x2.rows()) {
                        for j in 0..c {
                            gv[j] += grow[j] * xrow[j];
                        }
                    }
                    self.acc(grads, *v, gv.into_dyn());
                }
            }
            Op::MulCol { x, v } => {
                if self.ng(*x) {
                    self.acc(grads, *x, g * &self.nodes[v.0].value.view());
                }
                if self.ng(*v) {
                    let g2 = g.view().into_dimensionality::<Ix2>().unwrap();
                    let x2 = self.view2(*x);
                    let n = x2.shape()[0];
                    let mut gv = Array2::zeros((n, 1));
                    for i in 0..n {
                        let mut acc = S::zero();
                        for j in 0..x2.shape()[1] {
                            acc += g2[[i, j]] * x2[[i, j]];
                        }
                        gv[[i, 0]] = acc;
                    }
                    self.acc(grads, *v, gv.into_dyn());
                }
            }
            Op::Gather { x, idx } => {
                if self.ng(*x) {
                    let xs = self.shape(*x);
                    let g2 = g.view().into_dimensionality::<Ix2>().unwrap();
                    let mut gx = Array2::zeros((xs[0], xs[1]));
                    for (i, &j) in idx.iter().enumerate() {
                        gx.row_mut(j).zip_mut_with(&g2.row(i), |o, &v| *o += v);
                    }
                    self.acc(grads, *x, gx.into_dyn());
                }
            }
            Op::GroupMean { x, group } => {
                if self.ng(*x) {
                    let xs = self.shape(*x);
                    let g2 = g.view().into_dimensionality::<Ix2>().unwrap();
                    let inv = S::from_f64(1.0 / *group as f64);
                    let mut gx = Array2::zeros((xs[0], xs[1]));
                    for r in 0..g2.shape()[0] {
                        for i in 0..*group {
                            gx.row_mut(r * group + i)
                                .zip_mut_with(&g2.row(r), |o, &v| *o += v * inv);
                        }
                    }
                    self.acc(grads, *x, gx.into_dyn());
                }
            }
            Op::ConcatRows(parts) => {
                let g2 = g.view().into_dimensionality::<Ix2>().unwrap();
                let mut r = 0;
                for &p in parts {
                    let rows = self.shape(p)[0];
                    if self.ng(p) {
                        let gp = g2.slice(ndarray::s![r..r + rows, ..]).to_owned();
                        self.acc(grads, p, gp.into_dyn());
                    }
                    r += rows;
                }
            }
            Op::ConcatCols(parts) => {
                let g2 = g.view().into_dimensionality::<Ix2>().unwrap();
                let mut c = 0;
                for &p in parts {
                    let cols = self.shape(p)[1];
                    if self.ng(p) {
                        let gp = g2.slice(ndarray::s![.., c..c + cols]).to_owned();
                        self.acc(grads, p, gp.into_dyn());
                    }
                    c += cols;
                }
            }
            Op::SliceRows { x, start, len } => {
                if self.ng(*x) {
                    let xs = self.shape(*x);
                    let g2 = g.view().into_dimensionality::<Ix2>().unwrap();
                    let mut gx = Array2::zeros((xs[0], xs[1]));
                    gx.slice_mut(ndarray::s![*start..start + len, ..]).assign(&g2);
                    self.acc(grads, *x, gx.into_dyn());
                }
            }
            Op::SliceCols { x, start, len } => {
                if self.ng(*x) {
                    let xs = self.shape(*x).to_vec();
                    if xs.len() == 1 {
                        let g1 = g.view().into_dimensionality::<ndarray::Ix1>().unwrap();
                        let mut gx = ndarray::Array1::zeros(xs[0]);
                        gx.slice_mut(ndarray::s![*start..start + len]).assign(&g1);
                        self.acc(grads, *x, gx.into_dyn());
                    } else {
                        let g2 = g.view().into_dimensionality::<Ix2>().unwrap();
                        let mut gx = Array2::zeros((xs[0], xs[1]));
                        gx.slice_mut(ndarray::s![.., *start..start + len]).assign(&g2);
                        self.acc(grads, *x, gx.into_dyn());
                    }
                }
            }
            Op::Reshape { x } => {
                if self.ng(*x) {
                    let gx = g
                        .to_owned()
                        .into_shape_with_order(self.nodes[x.0].value.raw_dim())
                        .expect("reshape grad");
                    self.acc(grads, *x, gx);
                }
            }
            Op::Permute3 { x, axes } => {
                if self.ng(*x) {
                    let mut inv = [0usize; 3];
                    for (i, &a) in axes.iter().enumerate() {
                        inv[a] = i;
                    }
                    let g3 = g.view().into_dimensionality::<Ix3>().unwrap();
                    let gx = g3.permuted_axes(inv).to_owned();
                    self.acc(grads, *x, gx.into_dyn());
                }
            }
            Op::MeanAll(x) => {
                if self.ng(*x) {
                    let n = self.nodes[x.0].value.len();
                    let scale = g[[0]] / S::from_f64(n as f64);
                    let gx = ArrayD::from_elem(self.nodes[x.0].value.raw_dim(), scale);
                    self.acc(grads, *x, gx);
                }
            }
            Op::MatMul { a, b, ta, tb } => self.backprop_matmul(*a, *b, *ta, *tb, g, grads),
            Op::Conv3d { x, w, b, kt, kh, kw } => {
                self.backprop_conv3d(*x, *w, *b, *kt, *kh, *kw, g, grads)
            }
        }
    }

    fn backprop_matmul(
        &self,
        a: Tx,
        b: Tx,
        ta: bool,
        tb: bool,
        g: &ArrayD<S>,
        grads: &mut [Option<ArrayD<S>>],
    ) {
        // y = A' B' with A' = op_ta(A), B' = op_tb(B)
        // dA' = G B'^T, dB' = A'^T G; transposes map back through ta/tb.
        let dims = self.shape(a).len();
        if dims == 2 {
            let (av, bv) = (self.view2(a), self.view2(b));
            let g2 = g.view().into_dimensionality::<Ix2>().unwrap();
            if self.ng(a) {
                let ga = matmul_grad_a(&g2, &bv, ta, tb);
                self.acc(grads, a, ga.into_dyn());
            }
            if self.ng(b) {
                let gb = matmul_grad_b(&g2, &av, ta, tb);
                self.acc(grads, b, gb.into_dyn());
            }
        } else {
            let a3 = self.nodes[a.0].value.view().into_dimensionality::<Ix3>().unwrap();
            let b3 = self.nodes[b.0].value.view().into_dimensionality::<Ix3>().unwrap();
            let g3 = g.view().into_dimensionality::<Ix3>().unwrap();
            let bsz = a3.shape()[0];
            if self.ng(a) {
                let mut ga = ndarray::Array3::zeros(a3.raw_dim());
                for i in 0..bsz {
                    let gi = matmul_grad_a(&g3.index_axis(Axis(0), i), &b3.index_axis(Axis(0), i), ta, tb);
                    ga.index_axis_mut(Axis(0), i).assign(&gi);
                }
                self.acc(grads, a, ga.into_dyn());
            }
            if self.ng(b) {
                let mut gb = ndarray::Array3::zeros(b3.raw_dim());
                for i in 0..bsz {
                    let gi = matmul_grad_b(&g3.index_axis(Axis(0), i), &a3.index_axis(Axis(0), i), ta, tb);
                    gb.index_axis_mut(Axis(0), i).assign(&gi);
                }
                self.acc(grads, b, gb.into_dyn());
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn backprop_conv3d(
        &self,
        x: Tx,
        w: Tx,
        b: Tx,
        kt: usize,
        kh: usize,
        kw: usize,
        g: &ArrayD<S>,
        grads: &mut [Option<ArrayD<S>>],
    ) {
        let x4 = self.nodes[x.0].value.view().into_dimensionality::<Ix4>().unwrap();
        let w2 = self.view2(w);
        let g4 = g.view().into_dimensionality::<Ix4>().unwrap();
        let (gx, gw, gb) =
            conv3d_bwd(&x4, &w2, &g4, kt, kh, kw, self.ng(x), self.ng(w), self.ng(b));
        if let Some(gx) = gx {
            self.acc(grads, x, gx.into_dyn());
        }
        if let Some(gw) = gw {
            self.acc(grads, w, gw.into_dyn());
        }
        if let Some(gb) = gb {
            self.acc(grads, b, gb.into_dyn());
        }
    }
}

// ---- math kernels ----------------------------------------------------------

fn matmul2<S: Real>(
    a: &ndarray::ArrayView2<S>,
    b: &ndarray::ArrayView2<S>,
    ta: bool,
    tb: bool,
) -> Array2<S> {
    match (ta, tb) {
        (false, false) => a.dot(b),
        (true, false) => a.t().dot(b),
        (false, true) => a.dot(&b.t()),
        (true, true) => a.t().dot(&b.t()),
    }
}

/// d/dA of y = op_ta(A) op_tb(B) given dy; see backprop_matmul.
fn matmul_grad_a<S: Real>(
    g: &ndarray::ArrayView2<S>,
    b: &ndarray::ArrayView2<S>,
    ta: bool,
    tb: bool,
) -> Array2<S> {
    let da_prime_from = |g: &ndarray::ArrayView2<S>, b: &ndarray::ArrayView2<S>| {
        if tb {
            g.dot(b) // dA' = G (B^T)^T = G B
        } else {
            g.dot(&b.t())
        }
    };
    let d = da_prime_from(g, b);
    if ta {
        d.t().to_owned()
    } else {
        d
    }
}

fn matmul_grad_b<S: Real>(
    g: &ndarray::ArrayView2<S>,
    a: &ndarray::ArrayView2<S>,
    ta: bool,
    tb: bool,
) -> Array2<S> {
    let db_prime = if ta {
        a.dot(g) // A'^T G with A' = A^T
    } else {
        a.t().dot(g)
    };
    if tb {
        db_prime.t().to_owned()
    } else {
        db_prime
    }
}

fn gelu_fwd<S: Real>(x: S) -> S {
    let c = S::from_f64(0.797_884_560_802_865_4);
    let a = S::from_f64(0.044715);
    let half = S::from_f64(0.5);
    let u = c * (x + a * x * x * x);
    half * x * (S::one() + u.tanh())
}

fn gelu_grad<S: Real>(x: S) -> S {
    let c = S::from_f64(0.797_884_560_802_865_4);
    let a = S::from_f64(0.044715);
    let half = S::from_f64(0.5);
    let three = S::from_f64(3.0);
    let u = c * (x + a * x * x * x);
    let t = u.tanh();
    let sech2 = S::one() - t * t;
    half * (S::one() + t) + half * x * sech2 * c * (S::one() + three * a * x * x)
}

fn softmax_fwd<S: Real>(x: &ArrayViewD<S>) -> ArrayD<S> {
    let c = *x.shape().last().expect("softmax needs an axis");
    let mut out = x.to_owned();
    let flat = out.as_slice_mut().expect("softmax standard layout");
    for row in flat.chunks_mut(c) {
        let mut mx = row[0];
        for &v in row.iter() {
            if v > mx {
                mx = v;
            }
        }
        let mut sum = S::zero();
        for v in row.iter_mut() {
            *v = (*v - mx).exp();
            sum += *v;
        }
        let inv = S::one() / sum;
        for v in row.iter_mut() {
            *v *= inv;
        }
    }
    out
}

fn softmax_bwd<S: Real>(y: &ArrayViewD<S>, g: &ArrayD<S>) -> ArrayD<S> {
    let c = *y.shape().last().unwrap();
    let mut out = g.to_owned();
    let yv = y.to_owned();
    let ys = yv.as_slice().unwrap();
    let os = out.as_slice_mut().unwrap();
    for (orow, yrow) in os.chunks_mut(c).zip(ys.chunks(c)) {
        let mut dot = S::zero();
        for j in 0..c {
            dot += orow[j] * yrow[j];
        }
        for j in 0..c {
            orow[j] = yrow[j] * (orow[j] - dot);
        }
    }
    out
}

fn layer_norm_fwd<S: Real>(x: &ArrayViewD<S>, eps: S) -> ArrayD<S> {
    let c = *x.shape().last().expect("layer_norm needs an axis");
    let mut out = x.to_owned();
    let flat = out.as_slice_mut().expect("layer_norm standard layout");
    let inv_c = S::one() / S::from_f64(c as f64);
    for row in flat.chunks_mut(c) {
        let mut mean = S::zero();
        for &v in row.iter() {
            mean += v;
        }
        mean *= inv_c;
        let mut var = S::zero();
        for &v in row.iter() {
            let d = v - mean;
            var += d * d;
        }
        var *= inv_c;
        let r = S::one() / (var + eps).sqrt();
        for v in row.iter_mut() {
            *v = (*v - mean) * r;
        }
    }
    out
}

fn layer_norm_bwd<S: Real>(x: &ArrayViewD<S>, y: &ArrayViewD<S>, g: &ArrayD<S>, eps: S) -> ArrayD<S> {
    let c = *x.shape().last().unwrap();
    let inv_c = S::one() / S::from_f64(c as f64);
    let mut out = g.to_owned();
    let xv = x.to_owned();
    let xs = xv.as_slice().unwrap();
    let yv = y.to_owned();
    let ys = yv.as_slice().unwrap();
    let os = out.as_slice_mut().unwrap();
    for ((orow, xrow), yrow) in os.chunks_mut(c).zip(xs.chunks(c)).zip(ys.chunks(c)) {
        let mut mean = S::zero();
        for &v in xrow.iter() {
            mean += v;
        }
        mean *= inv_c;
        let mut var = S::zero();
        for &v in xrow.iter() {
            let d = v - mean;
            var += d * d;
        }
        var *= inv_c;
        let r = S::one() / (var + eps).sqrt();
        let mut gmean = S::zero();
        let mut gymean = S::zero();
        for j in 0..c {
            gmean += orow[j];
            gymean += orow[j] * yrow[j];
        }
        gmean *= inv_c;
        gymean *= inv_c;
        for j in 0..c {
            orow[j] = r * (orow[j] - gmean - yrow[j] * gymean);
        }
    }
    out
}

fn conv3d_fwd<S: Real>(
    x: &ndarray::ArrayView4<S>,
    w: &ndarray::ArrayView2<S>,
    bias: &ndarray::ArrayView1<S>,
    kt: usize,
    kh: usize,
    kw: usize,
) -> ndarray::Array4<S> {
    let (t, h, wd, cin) = x.dim();
    let cout = w.shape()[1];
    let mut y = ndarray::Array4::from_shape_fn((t, h, wd, cout), |(_, _, _, c)| bias[c]);
    let (pt, ph, pw) = (kt as isize / 2, kh as isize / 2, kw as isize / 2);
    for dt in 0..kt {
        for dh in 0..kh {
            for dw in 0..kw {
                let k = (dt * kh + dh) * kw + dw;
                let wk = w.slice(ndarray::s![k * cin..(k + 1) * cin, ..]);
                let (st, sh, sw) =
                    (dt as isize - pt, dh as isize - ph, dw as isize - pw);
                let (t0, t1) = overlap(st, t);
                let (h0, h1) = overlap(sh, h);
                let (w0, w1) = overlap(sw, wd);
                if t0 >= t1 || h0 >= h1 || w0 >= w1 {
                    continue;
                }
                let src = x.slice(ndarray::s![
                    (t0 as isize + st) as usize..(t1 as isize + st) as usize,
                    (h0 as isize + sh) as usize..(h1 as isize + sh) as usize,
                    (w0 as isize + sw) as usize..(w1 as isize + sw) as usize,
                    ..
                ]);
                let n = (t1 - t0) * (h1 - h0) * (w1 - w0);
                let src2 = src
                    .to_owned()
                    .into_shape_with_order((n, cin))
                    .expect("conv3d src reshape");
                let contrib = src2.dot(&wk);
                let mut dst = y.slice_mut(ndarray::s![t0..t1, h0..h1, w0..w1, ..]);
                let contrib4 = contrib
                    .into_shape_with_order((t1 - t0, h1 - h0, w1 - w0, cout))
                    .unwrap();
                dst += &contrib4;
            }
        }
    }
    y
}

/// Valid destination range [lo, hi) such that src = dst + shift stays in [0, n).
fn overlap(shift: isize, n: usize) -> (usize, usize) {
    let lo = (-shift).max(0) as usize;
    let hi = (n as isize - shift.max(0)) as usize;
    (lo.min(n), hi.min(n))
}

#[allow(clippy::too_many_arguments, clippy::type_complexity)]
fn conv3d_bwd<S: Real>(
    x: &ndarray::ArrayView4<S>,
    w: &ndarray::ArrayView2<S>,
    g: &ndarray::ArrayView4<S>,
    kt: usize,
    kh: usize,
    kw: usize,
    need_x: bool,
    need_w: bool,
    need_b: bool,
) -> (Option<ndarray::Array4<S>>, Option<Array2<S>>, Option<ArrayD<S>>) {
    let (t, h, wd, cin) = x.dim();
    let cout = w.shape()[1];
    let (pt, ph, pw) = (kt as isize / 2, kh as isize / 2, kw as isize / 2);

    let gb = if need_b {
        let mut gb = ndarray::Array1::zeros(cout);
        for v in g.rows() {
            gb.zip_mut_with(&v, |o, &x| *o += x);
        }
        Some(gb.into_dyn())
    } else {
        None
    };

    let mut gx = if need_x { Some(ndarray::Array4::zeros((t, h, wd, cin))) } else { None };
    let mut gw = if need_w { Some(Array2::zeros((kt * kh * kw * cin, cout))) } else { None };

    for dt in 0..kt {
        for dh in 0..kh {
            for dw in 0..kw {
                let k = (dt * kh + dh) * kw + dw;
                let (st, sh, sw) = (dt as isize - pt, dh as isize - ph, dw as isize - pw);
                let (t0, t1) = overlap(st, t);
                let (h0, h1) = overlap(sh, h);
                let (w0, w1) = overlap(sw, wd);
                if t0 >= t1 || h0 >= h1 || w0 >= w1 {
                    continue;
                }
                let n = (t1 - t0) * (h1 - h0) * (w1 - w0);
                let gdst = g
                    .slice(ndarray::s![t0..t1, h0..h1, w0..w1, ..])
                    .to_owned()
                    .into_shape_with_order((n, cout))
                    .unwrap();
                let (xs0, xs1) = ((t0 as isize + st) as usize, (t1 as isize + st) as usize);
                let (ys0, ys1) = ((h0 as isize + sh) as usize, (h1 as isize + sh) as usize);
                let (zs0, zs1) = ((w0 as isize + sw) as usize, (w1 as isize + sw) as usize);
                if let Some(gw) = gw.as_mut() {
                    let src2 = x
                        .slice(ndarray::s![xs0..xs1, ys0..ys1, zs0..zs1, ..])
                        .to_owned()
                        .into_shape_with_order((n, cin))
                        .unwrap();
                    let mut slot = gw.slice_mut(ndarray::s![k * cin..(k + 1) * cin, ..]);
                    slot += &src2.t().dot(&gdst);
                }
                if let Some(gx) = gx.as_mut() {
                    let wk = w.slice(ndarray::s![k * cin..(k + 1) * cin, ..]);
                    let gsrc = gdst.dot(&wk.t());
                    let gsrc4 = gsrc
                        .into_shape_with_order((t1 - t0, h1 - h0, w1 - w0, cin))
                        .unwrap();
                    let mut slot = gx.slice_mut(ndarray::s![xs0..xs1, ys0..ys1, zs0..zs1, ..]);
                    slot += &gsrc4;
                }
            }
        }
    }
    (gx, gw, gb)
}
