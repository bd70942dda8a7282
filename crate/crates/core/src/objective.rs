//! Contrastive loss over two views with refined negatives, summed
//! cross-entropy over labeled documents, and their weighted combination.

use ndarray::{Array1, Array2, ArrayView1, Axis};

use crate::error::{Error, Result};
use crate::negatives::NegativeIndex;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossReport {
    pub contrastive: f64,
    pub cross_entropy: f64,
    pub combined: f64,
    pub beta: f64,
    pub tau: f64,
}

impl LossReport {
    pub fn new(cross_entropy: f64, contrastive: f64, beta: f64, tau: f64) -> Self {
        Self {
            contrastive,
            cross_entropy,
            combined: combine(cross_entropy, contrastive, beta),
            beta,
            tau,
        }
    }
}

pub fn combine(cross_entropy: f64, contrastive: f64, beta: f64) -> f64 {
    cross_entropy + beta * contrastive
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContrastiveOutput {
    pub loss: f64,
    pub grad_z1: Array2<f64>,
    pub grad_z2: Array2<f64>,
}

/// Unit rows and their norms.
fn unit_rows(z: &Array2<f64>) -> Result<(Array2<f64>, Array1<f64>)> {
    let norms = z.map_axis(Axis(1), |r| r.dot(&r).sqrt());
    if let Some(node) = norms.iter().position(|&n| n == 0.0 || !n.is_finite()) {
        return Err(Error::ZeroNorm { node });
    }
    let unit = z / &norms.view().insert_axis(Axis(1));
    Ok((unit, norms))
}

/// Gradient w.r.t. a raw row given the gradient w.r.t. its unit-normalized copy.
fn through_normalization(g_unit: ArrayView1<'_, f64>, unit: ArrayView1<'_, f64>, norm: f64) -> Array1<f64> {
    let radial = g_unit.dot(&unit);
    (&g_unit - &(&unit * radial)) / norm
}

/// Temperature-scaled cosine InfoNCE with the positive in the denominator.
///
/// For anchor `i` in view `a`, with `b` the other view:
///
/// ```text
/// ℓ = −ln( e^{s(z_i^a, z_i^b)/τ} / ( e^{s(z_i^a, z_i^b)/τ} + Σ_{j∈N(i)} Σ_{k∈{1,2}} e^{s(z_i^a, z_j^k)/τ} ) )
/// ```
///
/// and the result is the mean of `ℓ` over all anchors in both views.
pub fn contrastive_loss(
    z1: &Array2<f64>,
    z2: &Array2<f64>,
    index: &NegativeIndex,
    tau: f64,
) -> Result<ContrastiveOutput> {
    if !(tau > 0.0) {
        return Err(Error::Config(format!("temperature must be positive, got {tau}")));
    }
    if z1.dim() != z2.dim() {
        return Err(Error::shape("view representations", format!("{:?}", z1.dim()), format!("{:?}", z2.dim())));
    }
    let n = z1.nrows();
    if index.len() != n {
        return Err(Error::shape("negative index anchors", n, index.len()));
    }
    let (u1, n1) = unit_rows(z1)?;
    let (u2, n2) = unit_rows(z2)?;
    let units = [&u1, &u2];
    // sims[a][v][[i, j]] = s(z_i^a, z_j^v) / τ
    let sims = [0, 1].map(|a| [0, 1].map(|v| units[a].dot(&units[v].t()) / tau));
    // coef[a][v][[i, j]] = dL/dsims[a][v][[i, j]] · τ
    let mut coef = [0, 1].map(|_| [0, 1].map(|_| Array2::<f64>::zeros((n, n))));

    let scale = 1.0 / (2 * n) as f64;
    let mut total = 0.0;
    let mut logits = Vec::new();
    for i in 0..n {
        let negatives = index.negatives(i);
        if negatives.is_empty() {
            continue;
        }
        for a in 0..2 {
            let b = 1 - a;
            let positive = sims[a][b][[i, i]];
            logits.clear();
            logits.push(positive);
            for &j in negatives {
                logits.push(sims[a][0][[i, j]]);
                logits.push(sims[a][1][[i, j]]);
            }

            let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = logits.iter().map(|l| (l - max).exp()).sum();
            let log_denominator = max + sum.ln();
            total += log_denominator - positive;

            // dℓ/dlogit = softmax − onehot(positive).
            coef[a][b][[i, i]] += ((positive - log_denominator).exp() - 1.0) * scale;
            for &j in negatives {
                for v in 0..2 {
                    coef[a][v][[i, j]] += (sims[a][v][[i, j]] - log_denominator).exp() * scale;
                }
            }
        }
    }

    let mut g_unit = [Array2::<f64>::zeros(u1.raw_dim()), Array2::<f64>::zeros(u2.raw_dim())];
    for a in 0..2 {
        for v in 0..2 {
            let c = &coef[a][v] / tau;
            g_unit[a] += &c.dot(units[v]);
            g_unit[v] += &c.t().dot(units[a]);
        }
    }

    let mut grads = [Array2::<f64>::zeros(z1.raw_dim()), Array2::<f64>::zeros(z2.raw_dim())];
    for (v, norms) in [&n1, &n2].into_iter().enumerate() {
        for r in 0..n {
            let g = through_normalization(g_unit[v].row(r), units[v].row(r), norms[r]);
            grads[v].row_mut(r).assign(&g);
        }
    }
    let [grad_z1, grad_z2] = grads;
    Ok(ContrastiveOutput {
        loss: total * scale,
        grad_z1,
        grad_z2,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossEntropyOutput {
    pub loss: f64,
    /// Gradient w.r.t. the logits that produced `P` (zero on unmasked rows).
    pub grad_logits: Array2<f64>,
}

/// `−Σ_{i labeled} ln P[i, y_i]`, summed over masked documents.
pub fn cross_entropy_loss(p: &Array2<f64>, labels: &[Option<usize>], train_mask: &[bool]) -> Result<CrossEntropyOutput> {
    if labels.len() != p.nrows() || train_mask.len() != p.nrows() {
        return Err(Error::shape("labels vs probability rows", p.nrows(), labels.len()));
    }
    let mut loss = 0.0;
    let mut grad = Array2::zeros(p.raw_dim());
    for (i, (&label, &train)) in labels.iter().zip(train_mask).enumerate() {
        if !train {
            continue;
        }
        let y = label.ok_or_else(|| Error::Data(format!("document {i} is in the training mask but unlabeled")))?;
        if y >= p.ncols() {
            return Err(Error::Data(format!("label {y} of document {i} out of range for {} classes", p.ncols())));
        }
        loss -= p[[i, y]].ln();
        let mut row = grad.row_mut(i);
        row.assign(&p.row(i));
        row[y] -= 1.0;
    }
    Ok(CrossEntropyOutput { loss, grad_logits: grad })
}
