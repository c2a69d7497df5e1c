use ndarray::{Array2, ArrayView2};
use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::mlp::{Gradients, MlpModel};
use crate::coalition::Coalition;
use crate::error::{Error, Result};
use crate::exact::round_half_up;

/// Max-subtracted softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / sum).collect()
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    logits.iter().map(|z| z - lse).collect()
}

/// Cross-entropy of `softmax(logits)` against `label`, and its gradient
/// `p − onehot(label)`.
pub fn softmax_cross_entropy(logits: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
    if logits.len() < 2 {
        return Err(Error::Argument("softmax needs at least 2 classes".into()));
    }
    if label >= logits.len() {
        return Err(Error::Argument(format!("label {label} with {} classes", logits.len())));
    }
    let logp = log_softmax(logits);
    let mut grad = softmax(logits);
    grad[label] -= 1.0;
    Ok((-logp[label], grad))
}

/// `Σ_c p_c ln p_c` of `p = softmax(logits)` and its gradient
/// `p_c (ln p_c − Σ p ln p)`.
pub fn negative_entropy(logits: &[f64]) -> Result<(f64, Vec<f64>)> {
    if logits.len() < 2 {
        return Err(Error::Argument("softmax needs at least 2 classes".into()));
    }
    let logp = log_softmax(logits);
    let p: Vec<f64> = logp.iter().map(|l| l.exp()).collect();
    let value: f64 = p.iter().zip(&logp).map(|(p, l)| p * l).sum();
    let grad = p.iter().zip(&logp).map(|(p, l)| p * (l - value)).collect();
    Ok((value, grad))
}

fn subset_sizes(n: usize, r1: f64, r2: f64) -> Result<(usize, usize)> {
    if !(0.0..=1.0).contains(&r1) || !(0.0..=1.0).contains(&r2) || r1 >= r2 {
        return Err(Error::Argument(format!("need 0 ≤ r1 < r2 ≤ 1, got ({r1}, {r2})")));
    }
    let (k1, k2) = (round_half_up(r1 * n as f64), round_half_up(r2 * n as f64));
    if k1 == k2 {
        return Err(Error::Argument(format!(
            "range ({r1}, {r2}) collapses to one subset size at n = {n}"
        )));
    }
    Ok((k1, k2))
}

/// `S1 ⊊ S2` with `|S1| = round(r1 n)`, `|S2| = round(r2 n)`; `S1` is
/// uniform among subsets of its size and `S2` adds a uniform extension.
pub fn sample_nested_subsets<R: Rng + ?Sized>(
    n: usize,
    r1: f64,
    r2: f64,
    rng: &mut R,
) -> Result<(Coalition, Coalition)> {
    if n == 0 || n > crate::coalition::MAX_VARIABLES {
        return Err(Error::Argument(format!("cannot sample subsets of {n} variables")));
    }
    let (k1, k2) = subset_sizes(n, r1, r2)?;
    let order = index::sample(rng, n, k2).into_vec();
    let s1 = Coalition::from_indices(n, &order[..k1])?;
    let s2 = Coalition::from_indices(n, &order)?;
    Ok((s1, s2))
}

fn masked_rows(x: &[f64], baseline: &[f64], subsets: impl Iterator<Item = Coalition>) -> Array2<f64> {
    let rows: Vec<Coalition> = subsets.collect();
    let mut out = Array2::zeros((rows.len(), x.len()));
    for (mut row, s) in out.rows_mut().into_iter().zip(&rows) {
        for (k, v) in row.iter_mut().enumerate() {
            *v = if s.contains(k) { x[k] } else { baseline[k] };
        }
    }
    out
}

/// `z(S2) − (r2/r1)·z(S1)` on raw logits; for `r1 = 0` the second term is
/// `z(∅)`.
pub fn delta_logits(
    model: &MlpModel,
    x: &[f64],
    baseline: &[f64],
    s1: Coalition,
    s2: Coalition,
    r1: f64,
    r2: f64,
) -> Result<Vec<f64>> {
    let n = model.input_dim();
    if x.len() != n || baseline.len() != n || s1.n() != n || s2.n() != n {
        return Err(Error::Dimension(format!("model expects {n} inputs")));
    }
    if !(0.0..=1.0).contains(&r1) || !(0.0..=1.0).contains(&r2) || r1 >= r2 {
        return Err(Error::Argument(format!("need 0 ≤ r1 < r2 ≤ 1, got ({r1}, {r2})")));
    }
    if !s1.is_subset_of(s2) || s1 == s2 {
        return Err(Error::Argument("need S1 ⊊ S2".into()));
    }
    let (first, ratio) = if r1 == 0.0 {
        (Coalition::empty(n), 1.0)
    } else {
        (s1, r2 / r1)
    };
    let z = model.forward(masked_rows(x, baseline, [s2, first].into_iter()).view())?;
    Ok((0..model.output_dim()).map(|c| z[[0, c]] - ratio * z[[1, c]]).collect())
}

/// A mini-batch in model input space.
#[derive(Clone, Copy)]
pub struct Batch<'a> {
    pub x: ArrayView2<'a, f64>,
    pub labels: &'a [usize],
    pub baseline: &'a [f64],
}

impl Batch<'_> {
    fn check(&self, model: &MlpModel) -> Result<()> {
        if self.x.ncols() != model.input_dim() || self.baseline.len() != model.input_dim() {
            return Err(Error::Dimension(format!("model expects {} inputs", model.input_dim())));
        }
        if self.labels.len() != self.x.nrows() || self.labels.is_empty() {
            return Err(Error::Dimension(
                "batch needs one label per row and at least one row".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OrderLoss {
    /// Cross-entropy on `softmax(Δv)`.
    Encourage,
    /// `Σ p ln p` on `p = softmax(Δv)`.
    Penalize,
}

/// Mean cross-entropy of the clean batch and its parameter gradients.
pub fn classification_loss(model: &MlpModel, batch: Batch) -> Result<(f64, Gradients)> {
    batch.check(model)?;
    let trace = model.forward_trace(batch.x)?;
    let k = batch.labels.len() as f64;
    let mut grad = Array2::zeros(trace.logits.raw_dim());
    let mut total = 0.0;
    for (r, &y) in batch.labels.iter().enumerate() {
        let row = trace.logits.row(r).to_vec();
        let (l, g) = softmax_cross_entropy(&row, y)?;
        total += l;
        for (c, gc) in g.into_iter().enumerate() {
            grad[[r, c]] = gc / k;
        }
    }
    let (grads, _) = model.backward(&trace, grad.view())?;
    Ok((total / k, grads))
}

/// Order loss for explicit `(S1, S2)` per row, using the realized ratio
/// `|S2| / |S1|` (`S1 = ∅` contributes `z(∅)` with ratio 1).
pub fn order_loss_with_subsets(
    model: &MlpModel,
    batch: Batch,
    subsets: &[(Coalition, Coalition)],
    kind: OrderLoss,
) -> Result<(f64, Gradients)> {
    batch.check(model)?;
    let k = batch.labels.len();
    if subsets.len() != k {
        return Err(Error::Dimension(format!("{} subset pairs for {k} rows", subsets.len())));
    }
    let n = model.input_dim();
    let mut input = Array2::zeros((2 * k, n));
    let mut ratios = Vec::with_capacity(k);
    for (r, &(s1, s2)) in subsets.iter().enumerate() {
        if s1.n() != n || s2.n() != n || !s1.is_subset_of(s2) || s1 == s2 {
            return Err(Error::Argument(format!("row {r}: need S1 ⊊ S2 over {n} variables")));
        }
        ratios.push(if s1.is_empty() {
            1.0
        } else {
            s2.size() as f64 / s1.size() as f64
        });
        let x = batch.x.row(r);
        for i in 0..n {
            input[[r, i]] = if s2.contains(i) { x[i] } else { batch.baseline[i] };
            input[[k + r, i]] = if s1.contains(i) { x[i] } else { batch.baseline[i] };
        }
    }
    let trace = model.forward_trace(input.view())?;
    let c = model.output_dim();
    let mut grad = Array2::zeros((2 * k, c));
    let mut total = 0.0;
    for r in 0..k {
        let delta: Vec<f64> = (0..c)
            .map(|j| trace.logits[[r, j]] - ratios[r] * trace.logits[[k + r, j]])
            .collect();
        let (l, g) = match kind {
            OrderLoss::Encourage => softmax_cross_entropy(&delta, batch.labels[r])?,
            OrderLoss::Penalize => negative_entropy(&delta)?,
        };
        total += l;
        for (j, gj) in g.into_iter().enumerate() {
            grad[[r, j]] = gj / k as f64;
            grad[[k + r, j]] = -ratios[r] * gj / k as f64;
        }
    }
    let (grads, _) = model.backward(&trace, grad.view())?;
    Ok((total / k as f64, grads))
}

fn sampled_order_loss<R: Rng + ?Sized>(
    model: &MlpModel,
    batch: Batch,
    r1: f64,
    r2: f64,
    rng: &mut R,
    kind: OrderLoss,
) -> Result<(f64, Gradients)> {
    let n = model.input_dim();
    let subsets = (0..batch.labels.len())
        .map(|_| sample_nested_subsets(n, r1, r2, rng))
        .collect::<Result<Vec<_>>>()?;
    order_loss_with_subsets(model, batch, &subsets, kind)
}

/// L+ with a fresh `(S1, S2)` per row.
pub fn loss_encourage<R: Rng + ?Sized>(
    model: &MlpModel,
    batch: Batch,
    r1: f64,
    r2: f64,
    rng: &mut R,
) -> Result<(f64, Gradients)> {
    sampled_order_loss(model, batch, r1, r2, rng, OrderLoss::Encourage)
}

/// L− with a fresh `(S1, S2)` per row.
pub fn loss_penalize<R: Rng + ?Sized>(
    model: &MlpModel,
    batch: Batch,
    r1: f64,
    r2: f64,
    rng: &mut R,
) -> Result<(f64, Gradients)> {
    sampled_order_loss(model, batch, r1, r2, rng, OrderLoss::Penalize)
}

/// Per-row cross-entropy and its gradient with respect to each input row.
pub fn input_gradients(model: &MlpModel, x: ArrayView2<f64>, labels: &[usize]) -> Result<(Vec<f64>, Array2<f64>)> {
    if labels.len() != x.nrows() {
        return Err(Error::Dimension("one label per row".into()));
    }
    let trace = model.forward_trace(x)?;
    let mut grad = Array2::zeros(trace.logits.raw_dim());
    let mut losses = Vec::with_capacity(labels.len());
    for (r, &y) in labels.iter().enumerate() {
        let (l, g) = softmax_cross_entropy(&trace.logits.row(r).to_vec(), y)?;
        losses.push(l);
        grad.row_mut(r).assign(&ndarray::Array1::from(g));
    }
    let (_, dx) = model.backward(&trace, grad.view())?;
    Ok((losses, dx))
}

/// Cross-entropy of one input and its gradient with respect to the input.
pub fn input_gradient(model: &MlpModel, x: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
    let input = Array2::from_shape_vec((1, x.len()), x.to_vec()).expect("one row");
    let trace = model.forward_trace(input.view())?;
    let (loss, g) = softmax_cross_entropy(&trace.logits.row(0).to_vec(), label)?;
    let g = Array2::from_shape_vec((1, g.len()), g).expect("one row");
    let (_, dx) = model.backward(&trace, g.view())?;
    Ok((loss, dx.row(0).to_vec()))
}
