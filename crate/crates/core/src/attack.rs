//! Untargeted L∞ PGD and adversarial accuracy.

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::neural::{input_gradients, MlpModel};
use crate::rng;

const STREAM_START: u64 = 0x7374_7274;
/// Rows attacked together in one batched forward/backward pass.
const ATTACK_CHUNK: usize = 64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttackConfig {
    /// L∞ radius in standardized feature units.
    pub epsilon: f64,
    pub steps: usize,
    pub alpha: f64,
    /// Per-feature `(min, max)` applied after the ball projection.
    pub clamp: Option<(Vec<f64>, Vec<f64>)>,
    /// Uniform start inside the ball, drawn from `seed` and the row index.
    pub random_start: bool,
    pub seed: u64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig {
            epsilon: 0.2,
            steps: 50,
            alpha: 0.01,
            clamp: None,
            random_start: false,
            seed: 0,
        }
    }
}

impl AttackConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Config(format!(
                "epsilon must be finite and ≥ 0, got {}",
                self.epsilon
            )));
        }
        if self.steps > 0 && !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config("step size must be positive".into()));
        }
        if let Some((lo, hi)) = &self.clamp {
            if lo.len() != n || hi.len() != n {
                return Err(Error::Dimension(format!("clamp bounds need {n} entries")));
            }
            if lo.iter().zip(hi).any(|(a, b)| !(a <= b)) {
                return Err(Error::Config("clamp needs min ≤ max per feature".into()));
            }
        }
        Ok(())
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Clamps `v` into `[x0 − ε, x0 + ε]` so that `|v − x0| ≤ ε` holds in
/// floating point, not just in exact arithmetic.
fn project(v: f64, x0: f64, eps: f64) -> f64 {
    let mut p = v.clamp(x0 - eps, x0 + eps);
    while p - x0 > eps {
        p = p.next_down();
    }
    while x0 - p > eps {
        p = p.next_up();
    }
    p
}

/// PGD on a batch of rows; rows never interact, `row_ids` key the
/// optional random starts.
fn attack_batch(
    model: &MlpModel,
    x0: ArrayView2<f64>,
    labels: &[usize],
    config: &AttackConfig,
    row_ids: &[u64],
) -> Result<Array2<f64>> {
    let eps = config.epsilon;
    let mut adv = x0.to_owned();
    if config.random_start && eps > 0.0 {
        for (mut row, (&id, orig)) in adv.rows_mut().into_iter().zip(row_ids.iter().zip(x0.rows())) {
            let mut r = rng::stream(config.seed, &[STREAM_START, id]);
            for (a, &o) in row.iter_mut().zip(orig.iter()) {
                *a = project(o + r.random_range(-eps..=eps), o, eps);
            }
        }
    }
    for step in 0..config.steps {
        let (_, grad) = input_gradients(model, adv.view(), labels)?;
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Numeric(format!("non-finite input gradient at PGD step {step}")));
        }
        ndarray::Zip::indexed(&mut adv)
            .and(&grad)
            .and(&x0)
            .for_each(|(_, k), a, &g, &o| {
                let mut v = project(*a + config.alpha * sign(g), o, eps);
                if let Some((lo, hi)) = &config.clamp {
                    v = v.clamp(lo[k], hi[k]);
                }
                *a = v;
            });
    }
    Ok(adv)
}

/// Ascends the classification loss by signed steps, projecting onto the
/// ε-ball around `x` (then the optional clamp) after every step.
pub fn pgd_untargeted(model: &MlpModel, x: &[f64], label: usize, config: &AttackConfig) -> Result<Vec<f64>> {
    if x.len() != model.input_dim() {
        return Err(Error::Dimension(format!(
            "model expects {} inputs, got {}",
            model.input_dim(),
            x.len()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Argument("input must be finite".into()));
    }
    if label >= model.output_dim() {
        return Err(Error::Argument(format!(
            "label {label} with {} classes",
            model.output_dim()
        )));
    }
    config.validate(x.len())?;
    let x0 = ArrayView2::from_shape((1, x.len()), x).expect("one row");
    Ok(attack_batch(model, x0, &[label], config, &[0])?.row(0).to_vec())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackReport {
    pub epsilon: f64,
    pub steps: usize,
    pub samples: usize,
    pub clean_accuracy: f64,
    pub adversarial_accuracy: f64,
}

/// Clean and post-attack accuracy over `rows`. Rows are attacked
/// independently; results do not depend on `exec`.
pub fn adversarial_accuracy(
    model: &MlpModel,
    data: &Dataset,
    rows: &[usize],
    config: &AttackConfig,
    exec: Exec,
) -> Result<AttackReport> {
    if rows.is_empty() {
        return Err(Error::Argument("attack over an empty split".into()));
    }
    config.validate(data.n())?;
    if model.input_dim() != data.n() {
        return Err(Error::Dimension("model and data widths differ".into()));
    }
    let chunks: Vec<&[usize]> = rows.chunks(ATTACK_CHUNK).collect();
    let outcomes = exec.try_map(&chunks, |chunk| {
        let (x, y) = data.gather(chunk);
        let ids: Vec<u64> = chunk.iter().map(|&r| r as u64).collect();
        let clean = model.predict(x.view())?;
        let adv = attack_batch(model, x.view(), &y, config, &ids)?;
        let robust = model.predict(adv.view())?;
        Ok::<_, Error>(
            (0..chunk.len())
                .map(|k| (clean[k] == y[k], robust[k] == y[k]))
                .collect::<Vec<_>>(),
        )
    })?;
    let outcomes: Vec<(bool, bool)> = outcomes.into_iter().flatten().collect();
    let total = rows.len() as f64;
    Ok(AttackReport {
        epsilon: config.epsilon,
        steps: config.steps,
        samples: rows.len(),
        clean_accuracy: outcomes.iter().filter(|o| o.0).count() as f64 / total,
        adversarial_accuracy: outcomes.iter().filter(|o| o.1).count() as f64 / total,
    })
}
