//! Scalar losses with analytic gradients.
//!
//! Every `*_grad` function returns the loss value together with the
//! gradient(s) with respect to its tensor arguments. Sums run sequentially
//! over flat indices so results do not depend on scheduling.

use super::tape::softmax_in_place;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Default temperature for the contrastive and alignment losses.
pub const DEFAULT_TEMPERATURE: f64 = 0.2;

/// Objective applied to a network output, used by `grad_check` and training.
#[derive(Debug, Clone, PartialEq)]
pub enum LossKind {
    /// Mean squared error against `target`.
    Reconstruction { target: Tensor },
    /// InfoNCE where the first half of the output rows are anchors and the
    /// second half their positives.
    Contrastive { temperature: f64 },
    Classification { labels: Vec<usize> },
    /// Symmetric alignment against a fixed label table.
    Alignment {
        table: Tensor,
        labels: Vec<usize>,
        temperature: f64,
    },
}

impl LossKind {
    /// Loss value and gradient with respect to `output`.
    pub fn evaluate(&self, output: &Tensor) -> Result<(f64, Tensor)> {
        match self {
            LossKind::Reconstruction { target } => reconstruction_grad(output, target),
            LossKind::Contrastive { temperature } => {
                let b = output.rows();
                if b % 2 != 0 {
                    return Err(Error::Shape(format!("contrastive output needs an even row count, got {b}")));
                }
                let anchors = output.slice_rows(0, b / 2);
                let positives = output.slice_rows(b / 2, b);
                let (loss, ga, gp) = contrastive_grad(&anchors, &positives, *temperature)?;
                Ok((loss, Tensor::vstack(&ga, &gp)?))
            }
            LossKind::Classification { labels } => classification_grad(output, labels),
            LossKind::Alignment {
                table,
                labels,
                temperature,
            } => {
                let (loss, ge, _) = alignment_grad(output, table, labels, *temperature)?;
                Ok((loss, ge))
            }
        }
    }

    pub fn value(&self, output: &Tensor) -> Result<f64> {
        self.evaluate(output).map(|(v, _)| v)
    }
}

fn check_same_shape(a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

fn check_temperature(t: f64) -> Result<()> {
    if !(t.is_finite() && t > 0.0) {
        return Err(Error::Domain(format!("temperature must be positive, got {t}")));
    }
    Ok(())
}

fn check_labels(labels: &[usize], rows: usize, classes: usize) -> Result<()> {
    if labels.len() != rows {
        return Err(Error::Shape(format!("{} labels for {rows} rows", labels.len())));
    }
    if let Some(&l) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::Domain(format!("label {l} outside [0, {classes})")));
    }
    Ok(())
}

pub fn loss_reconstruction(x_hat: &Tensor, x: &Tensor) -> Result<f64> {
    reconstruction_grad(x_hat, x).map(|(v, _)| v)
}

pub fn reconstruction_grad(x_hat: &Tensor, x: &Tensor) -> Result<(f64, Tensor)> {
    check_same_shape(x_hat, x)?;
    let size = x.len() as f64;
    let mut sum = 0.0;
    let mut grad = Vec::with_capacity(x.len());
    for (p, t) in x_hat.values().iter().zip(x.values()) {
        let d = p - t;
        sum += d * d;
        grad.push(2.0 * d / size);
    }
    Ok((sum / size, Tensor::from_parts(x.rows(), x.cols(), grad)))
}

pub fn loss_classification(logits: &Tensor, labels: &[usize]) -> Result<f64> {
    classification_grad(logits, labels).map(|(v, _)| v)
}

/// Mean cross-entropy. Gradient is `(softmax - onehot) / B`.
pub fn classification_grad(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    let (b, n) = (logits.rows(), logits.cols());
    check_labels(labels, b, n)?;
    let mut grad = logits.clone();
    let mut total = 0.0;
    for (r, &y) in labels.iter().enumerate() {
        let row = grad.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        total += lse - row[y];
        softmax_in_place(row);
        row[y] -= 1.0;
        for v in row.iter_mut() {
            *v /= b as f64;
        }
    }
    Ok((total / b as f64, grad))
}

/// Row-normalized copy and the original row norms.
fn normalize_rows(t: &Tensor, what: &str) -> Result<(Tensor, Vec<f64>)> {
    let mut out = t.clone();
    let mut norms = Vec::with_capacity(t.rows());
    for r in 0..t.rows() {
        let row = out.row_mut(r);
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::Numeric(format!("{what} row {r} has norm {norm}")));
        }
        for v in row.iter_mut() {
            *v /= norm;
        }
        norms.push(norm);
    }
    Ok((out, norms))
}

/// Pull a gradient with respect to normalized rows back to the raw rows.
fn through_normalization(g: &mut Tensor, unit: &Tensor, norms: &[f64]) {
    for (r, norm) in norms.iter().enumerate() {
        let u = unit.row(r);
        let dot: f64 = g.row(r).iter().zip(u).map(|(a, b)| a * b).sum();
        for (d, x) in g.row_mut(r).iter_mut().zip(u) {
            *d = (*d - x * dot) / norm;
        }
    }
}

/// `a (n x d) * b^T (m x d)`, the cosine similarity table for unit rows.
fn similarities(a: &Tensor, b: &Tensor) -> Tensor {
    let mut out = Vec::with_capacity(a.rows() * b.rows());
    for i in 0..a.rows() {
        for j in 0..b.rows() {
            out.push(a.row(i).iter().zip(b.row(j)).map(|(x, y)| x * y).sum());
        }
    }
    Tensor::from_parts(a.rows(), b.rows(), out)
}

/// Row cross-entropy of `logits` against `targets`; writes
/// `(softmax - onehot) * scale` into `dlogits`.
fn row_cross_entropy(logits: &Tensor, targets: &[usize], scale: f64, dlogits: &mut Tensor) -> f64 {
    let mut total = 0.0;
    for (r, &t) in targets.iter().enumerate() {
        let row = logits.row(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        total += lse - row[t];
        for (c, d) in dlogits.row_mut(r).iter_mut().enumerate() {
            let p = (row[c] - lse).exp();
            *d += scale * (p - if c == t { 1.0 } else { 0.0 });
        }
    }
    total
}

pub fn loss_contrastive(anchors: &Tensor, positives: &Tensor, temperature: f64) -> Result<f64> {
    contrastive_grad(anchors, positives, temperature).map(|(v, _, _)| v)
}

/// InfoNCE on cosine similarities. Row `i` of `positives` is the positive
/// for anchor `i`; the other positives are its negatives.
pub fn contrastive_grad(anchors: &Tensor, positives: &Tensor, temperature: f64) -> Result<(f64, Tensor, Tensor)> {
    check_temperature(temperature)?;
    check_same_shape(anchors, positives)?;
    let b = anchors.rows();
    let (ua, na) = normalize_rows(anchors, "anchor")?;
    let (up, np) = normalize_rows(positives, "positive")?;
    let mut logits = similarities(&ua, &up);
    for v in logits.values_mut() {
        *v /= temperature;
    }
    let targets: Vec<usize> = (0..b).collect();
    let mut ds = Tensor::zeros(b, b);
    let total = row_cross_entropy(&logits, &targets, 1.0 / (b as f64 * temperature), &mut ds);

    let mut ga = super::tensor::matmul(&ds, &up);
    let mut gp = super::tensor::matmul_tn(&ds, &ua);
    through_normalization(&mut ga, &ua, &na);
    through_normalization(&mut gp, &up, &np);
    Ok((total / b as f64, ga, gp))
}

pub fn loss_alignment(embeddings: &Tensor, label_table: &Tensor, labels: &[usize], temperature: f64) -> Result<f64> {
    alignment_grad(embeddings, label_table, labels, temperature).map(|(v, _, _)| v)
}

/// Symmetric alignment between embeddings and rows of a label table.
///
/// With cosine logits `L[i, c] = cos(e_i, t_c) / temperature`, the
/// image-to-label term is the cross-entropy of row `i` against `labels[i]`,
/// and the label-to-image term is the cross-entropy of column `labels[i]`
/// (over the batch) against image `i`. The loss is their mean. Returns the
/// value and the gradients for embeddings and table.
pub fn alignment_grad(
    embeddings: &Tensor,
    label_table: &Tensor,
    labels: &[usize],
    temperature: f64,
) -> Result<(f64, Tensor, Tensor)> {
    check_temperature(temperature)?;
    if embeddings.cols() != label_table.cols() {
        return Err(Error::Shape(format!(
            "embedding width {} vs label table width {}",
            embeddings.cols(),
            label_table.cols()
        )));
    }
    let (b, n) = (embeddings.rows(), label_table.rows());
    check_labels(labels, b, n)?;
    let (ue, ne) = normalize_rows(embeddings, "embedding")?;
    let (ut, nt) = normalize_rows(label_table, "label table")?;
    let mut logits = similarities(&ue, &ut);
    for v in logits.values_mut() {
        *v /= temperature;
    }
    let scale = 1.0 / (2.0 * b as f64 * temperature);

    let mut ds = Tensor::zeros(b, n);
    let image_to_label = row_cross_entropy(&logits, labels, scale, &mut ds);

    // label to image: row i of `cols` holds column labels[i] of the logits
    let mut cols = Tensor::zeros(b, b);
    for (i, &y) in labels.iter().enumerate() {
        for j in 0..b {
            cols.row_mut(i)[j] = logits.get(j, y);
        }
    }
    let targets: Vec<usize> = (0..b).collect();
    let mut dcols = Tensor::zeros(b, b);
    let label_to_image = row_cross_entropy(&cols, &targets, scale, &mut dcols);
    for (i, &y) in labels.iter().enumerate() {
        for j in 0..b {
            ds.row_mut(j)[y] += dcols.get(i, j);
        }
    }

    let mut ge = super::tensor::matmul(&ds, &ut);
    let mut gt = super::tensor::matmul_tn(&ds, &ue);
    through_normalization(&mut ge, &ue, &ne);
    through_normalization(&mut gt, &ut, &nt);
    let loss = (image_to_label + label_to_image) / (2.0 * b as f64);
    Ok((loss, ge, gt))
}
