//! Two-layer graph convolution, fusion with the raw document embeddings, and
//! the softmax classifier, with hand-derived gradients.
//!
//! Forward pass for normalized adjacency `Â` and features `X`:
//!
//! ```text
//! AX  = Â X
//! pre = AX W0            act = σ(pre)
//! H   = (Â act) W1
//! Z   = λ H_doc FC_h + (1 − λ) X_doc FC_x
//! P   = softmax(Z)
//! ```

use ndarray::{s, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{check_finite, FeatureMatrix};
use crate::sparse::SparseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Activation {
    #[default]
    Relu,
    /// Linear encoder; used to check superposition in tests.
    Identity,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Identity => x,
        }
    }

    /// Subgradient; ReLU at exactly zero is taken as 0.
    fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncoderDims {
    pub emb_dim: usize,
    pub hidden: usize,
    pub out_dim: usize,
    pub n_classes: usize,
}

#[derive(Debug, Clone)]
pub struct EncoderParams {
    /// `emb_dim × hidden`
    pub w0: Array2<f64>,
    /// `hidden × out_dim`
    pub w1: Array2<f64>,
    /// `out_dim × n_classes`, applied to GCN document rows.
    pub fc_h: Array2<f64>,
    /// `emb_dim × n_classes`, applied to raw document embeddings.
    pub fc_x: Array2<f64>,
    pub lambda: f64,
    pub activation: Activation,
    version: u64,
}

fn glorot(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-limit..=limit))
}

impl EncoderParams {
    /// Glorot-uniform initialization from `seed`.
    pub fn init(dims: EncoderDims, lambda: f64, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::from_parts(
            glorot(&mut rng, dims.emb_dim, dims.hidden),
            glorot(&mut rng, dims.hidden, dims.out_dim),
            glorot(&mut rng, dims.out_dim, dims.n_classes),
            glorot(&mut rng, dims.emb_dim, dims.n_classes),
            lambda,
        )
    }

    pub fn from_parts(
        w0: Array2<f64>,
        w1: Array2<f64>,
        fc_h: Array2<f64>,
        fc_x: Array2<f64>,
        lambda: f64,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::Config(format!("lambda must be in [0, 1], got {lambda}")));
        }
        if w1.nrows() != w0.ncols() {
            return Err(Error::shape("W1 rows", w0.ncols(), w1.nrows()));
        }
        if fc_h.nrows() != w1.ncols() {
            return Err(Error::shape("FC_h rows", w1.ncols(), fc_h.nrows()));
        }
        if fc_x.nrows() != w0.nrows() {
            return Err(Error::shape("FC_x rows", w0.nrows(), fc_x.nrows()));
        }
        if fc_x.ncols() != fc_h.ncols() {
            return Err(Error::shape("FC_x columns", fc_h.ncols(), fc_x.ncols()));
        }
        Ok(Self {
            w0,
            w1,
            fc_h,
            fc_x,
            lambda,
            activation: Activation::Relu,
            version: 0,
        })
    }

    pub fn dims(&self) -> EncoderDims {
        EncoderDims {
            emb_dim: self.w0.nrows(),
            hidden: self.w0.ncols(),
            out_dim: self.w1.ncols(),
            n_classes: self.fc_h.ncols(),
        }
    }

    /// Incremented on every parameter update; traces from older versions
    /// are rejected by [`backward`].
    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn is_finite(&self) -> bool {
        [&self.w0, &self.w1, &self.fc_h, &self.fc_x]
            .iter()
            .all(|m| m.iter().all(|v| v.is_finite()))
    }

    /// Plain gradient-descent update.
    pub fn sgd_step(&mut self, grads: &Gradients, lr: f64) {
        self.w0.scaled_add(-lr, &grads.w0);
        self.w1.scaled_add(-lr, &grads.w1);
        self.fc_h.scaled_add(-lr, &grads.fc_h);
        self.fc_x.scaled_add(-lr, &grads.fc_x);
        self.version += 1;
    }
}

/// Equality ignores the update counter.
impl PartialEq for EncoderParams {
    fn eq(&self, other: &Self) -> bool {
        self.w0 == other.w0
            && self.w1 == other.w1
            && self.fc_h == other.fc_h
            && self.fc_x == other.fc_x
            && self.lambda == other.lambda
            && self.activation == other.activation
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w0: Array2<f64>,
    pub w1: Array2<f64>,
    pub fc_h: Array2<f64>,
    pub fc_x: Array2<f64>,
}

impl Gradients {
    pub fn zeros(dims: EncoderDims) -> Self {
        Self {
            w0: Array2::zeros((dims.emb_dim, dims.hidden)),
            w1: Array2::zeros((dims.hidden, dims.out_dim)),
            fc_h: Array2::zeros((dims.out_dim, dims.n_classes)),
            fc_x: Array2::zeros((dims.emb_dim, dims.n_classes)),
        }
    }

    pub fn accumulate(&mut self, other: &Gradients) {
        self.w0 += &other.w0;
        self.w1 += &other.w1;
        self.fc_h += &other.fc_h;
        self.fc_x += &other.fc_x;
    }

    pub fn is_zero(&self) -> bool {
        [&self.w0, &self.w1, &self.fc_h, &self.fc_x]
            .iter()
            .all(|m| m.iter().all(|&v| v == 0.0))
    }
}

/// Cached intermediates of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace<'a> {
    adjacency: &'a SparseMatrix,
    version: u64,
    pub n_word: usize,
    /// `Â X`
    pub ax: Array2<f64>,
    /// `Â X W0`
    pub pre: Array2<f64>,
    /// `σ(pre)`
    pub act: Array2<f64>,
    /// `Â act`
    pub a_act: Array2<f64>,
    /// Node representations `H`.
    pub h: Array2<f64>,
    pub x_doc: Array2<f64>,
    /// Fused document representations (class logits).
    pub z: Array2<f64>,
    /// Row-wise softmax of `z`.
    pub p: Array2<f64>,
}

impl ForwardTrace<'_> {
    pub fn h_doc(&self) -> ArrayView2<'_, f64> {
        self.h.slice(s![self.n_word.., ..])
    }
}

pub struct GcnOutput {
    pub ax: Array2<f64>,
    pub pre: Array2<f64>,
    pub act: Array2<f64>,
    pub a_act: Array2<f64>,
    pub h: Array2<f64>,
}

/// `H = Â σ(Â X W0) W1`.
pub fn gcn_forward(adjacency: &SparseMatrix, x: &FeatureMatrix, params: &EncoderParams) -> Result<GcnOutput> {
    if adjacency.dim() != x.data.nrows() {
        return Err(Error::shape("adjacency vs feature rows", x.data.nrows(), adjacency.dim()));
    }
    if x.dim() != params.w0.nrows() {
        return Err(Error::shape("feature dim vs W0 rows", params.w0.nrows(), x.dim()));
    }
    let ax = adjacency.mul_dense(&x.data)?;
    let pre = ax.dot(&params.w0);
    let act = pre.mapv(|v| params.activation.apply(v));
    let a_act = adjacency.mul_dense(&act)?;
    let h = a_act.dot(&params.w1);
    Ok(GcnOutput { ax, pre, act, a_act, h })
}

/// `Z = λ H_doc FC_h + (1 − λ) X_doc FC_x`.
pub fn fuse(h_doc: ArrayView2<'_, f64>, x_doc: ArrayView2<'_, f64>, params: &EncoderParams) -> Result<Array2<f64>> {
    if h_doc.nrows() != x_doc.nrows() {
        return Err(Error::shape("fusion rows", h_doc.nrows(), x_doc.nrows()));
    }
    if h_doc.ncols() != params.fc_h.nrows() {
        return Err(Error::shape("H_doc columns vs FC_h rows", params.fc_h.nrows(), h_doc.ncols()));
    }
    if x_doc.ncols() != params.fc_x.nrows() {
        return Err(Error::shape("X_doc columns vs FC_x rows", params.fc_x.nrows(), x_doc.ncols()));
    }
    let lambda = params.lambda;
    let mut z = h_doc.dot(&params.fc_h) * lambda;
    z.scaled_add(1.0 - lambda, &x_doc.dot(&params.fc_x));
    Ok(z)
}

/// Row-wise softmax with max subtraction.
pub fn classify(z: &Array2<f64>) -> Result<Array2<f64>> {
    check_finite(z.view(), "classifier logits")?;
    let mut p = z.clone();
    for mut row in p.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
    Ok(p)
}

/// Full forward pass on one graph.
pub fn forward<'a>(adjacency: &'a SparseMatrix, x: &FeatureMatrix, params: &EncoderParams) -> Result<ForwardTrace<'a>> {
    let GcnOutput { ax, pre, act, a_act, h } = gcn_forward(adjacency, x, params)?;
    let x_doc = x.doc_rows().to_owned();
    let z = fuse(h.slice(s![x.n_word.., ..]), x_doc.view(), params)?;
    let p = classify(&z)?;
    Ok(ForwardTrace {
        adjacency,
        version: params.version,
        n_word: x.n_word,
        ax,
        pre,
        act,
        a_act,
        h,
        x_doc,
        z,
        p,
    })
}

/// Pulls a gradient on softmax outputs back to the logits.
pub fn softmax_backward(p: &Array2<f64>, grad_p: &Array2<f64>) -> Array2<f64> {
    let inner = (p * grad_p).sum_axis(Axis(1)).insert_axis(Axis(1));
    p * &(grad_p - &inner)
}

/// Parameter gradients given upstream gradients on `Z` and/or `P`.
pub fn backward(
    params: &EncoderParams,
    trace: &ForwardTrace<'_>,
    grad_z: Option<&Array2<f64>>,
    grad_p: Option<&Array2<f64>>,
) -> Result<Gradients> {
    if trace.version != params.version {
        return Err(Error::StaleTrace {
            trace: trace.version,
            params: params.version,
        });
    }
    let mut dz = Array2::zeros(trace.z.raw_dim());
    for (name, g) in [("grad_z", grad_z), ("grad_p", grad_p)] {
        if let Some(g) = g {
            if g.dim() != trace.z.dim() {
                return Err(Error::shape(
                    if name == "grad_z" { "upstream grad on Z" } else { "upstream grad on P" },
                    format!("{:?}", trace.z.dim()),
                    format!("{:?}", g.dim()),
                ));
            }
        }
    }
    if let Some(g) = grad_z {
        dz += g;
    }
    if let Some(g) = grad_p {
        dz += &softmax_backward(&trace.p, g);
    }

    let lambda = params.lambda;
    let fc_h = trace.h_doc().t().dot(&dz) * lambda;
    let fc_x = trace.x_doc.t().dot(&dz) * (1.0 - lambda);

    let mut dh = Array2::zeros(trace.h.raw_dim());
    dh.slice_mut(s![trace.n_word.., ..])
        .assign(&(dz.dot(&params.fc_h.t()) * lambda));
    let w1 = trace.a_act.t().dot(&dh);

    let d_a_act = dh.dot(&params.w1.t());
    let mut d_pre = trace.adjacency.transpose_mul_dense(&d_a_act)?;
    d_pre.zip_mut_with(&trace.pre, |g, &x| *g *= params.activation.derivative(x));
    let w0 = trace.ax.t().dot(&d_pre);

    Ok(Gradients { w0, w1, fc_h, fc_x })
}
