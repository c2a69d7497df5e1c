use log::debug;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::loss::{classification_loss, loss_encourage, loss_penalize, Batch};
use super::mlp::{Gradients, MlpModel};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng;

const STREAM_INIT: u64 = 0x696e_6974;
const STREAM_SHUFFLE: u64 = 0x7368_7566;
const STREAM_SUBSETS: u64 = 0x7375_6273;

/// Hidden-layer layouts, named by total layer count.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelPreset {
    /// Four hidden layers of width 100.
    #[serde(rename = "mlp-5")]
    Mlp5,
    /// Seven hidden layers of width 100.
    #[serde(rename = "mlp-8")]
    Mlp8,
}

impl ModelPreset {
    pub fn hidden(self) -> Vec<usize> {
        match self {
            ModelPreset::Mlp5 => vec![100; 4],
            ModelPreset::Mlp8 => vec![100; 7],
        }
    }
}

/// The four order-controlled model types plus the combined robustness
/// configuration.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DnnType {
    Normal,
    LowOrder,
    MiddleOrder,
    HighOrder,
    HighOrderRobustness,
}

impl DnnType {
    pub const ALL: [DnnType; 5] = [
        DnnType::Normal,
        DnnType::LowOrder,
        DnnType::MiddleOrder,
        DnnType::HighOrder,
        DnnType::HighOrderRobustness,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DnnType::Normal => "normal",
            DnnType::LowOrder => "low-order",
            DnnType::MiddleOrder => "middle-order",
            DnnType::HighOrder => "high-order",
            DnnType::HighOrderRobustness => "high-order-robustness",
        }
    }

    /// Sets λ1, λ2 and both ranges on `config`.
    pub fn apply(self, config: &mut TrainConfig) {
        let (l1, l2, enc, pen) = match self {
            DnnType::Normal => (0.0, 0.0, None, None),
            DnnType::LowOrder => (0.0, 1.0, None, Some((0.7, 1.0))),
            DnnType::MiddleOrder => (1.0, 0.0, Some((0.3, 0.7)), None),
            DnnType::HighOrder => (0.0, 1.0, None, Some((0.0, 0.5))),
            DnnType::HighOrderRobustness => (1.0, 1.0, Some((0.6, 1.0)), Some((0.0, 0.5))),
        };
        config.lambda1 = l1;
        config.lambda2 = l2;
        config.encourage = enc;
        config.penalize = pen;
    }
}

impl std::str::FromStr for DnnType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DnnType::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown model type {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub seed: u64,
    pub lambda1: f64,
    pub lambda2: f64,
    /// `(r1, r2)` for L+.
    pub encourage: Option<(f64, f64)>,
    /// `(r1′, r2′)` for L−.
    pub penalize: Option<(f64, f64)>,
    /// Global gradient-norm clip applied before the update.
    pub clip_norm: Option<f64>,
    /// Epochs (1-based) after which a copy of the model is kept.
    pub snapshot_epochs: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden: ModelPreset::Mlp5.hidden(),
            epochs: 40,
            batch_size: 64,
            learning_rate: 0.01,
            momentum: 0.9,
            seed: 0,
            lambda1: 0.0,
            lambda2: 0.0,
            encourage: None,
            penalize: None,
            clip_norm: Some(5.0),
            snapshot_epochs: Vec::new(),
        }
    }
}

fn check_range(name: &str, range: Option<(f64, f64)>) -> Result<(f64, f64)> {
    let (r1, r2) = range.ok_or_else(|| Error::Config(format!("{name} is active but has no range")))?;
    if !(0.0..=1.0).contains(&r1) || !(0.0..=1.0).contains(&r2) || r1 >= r2 {
        return Err(Error::Config(format!(
            "{name} range needs 0 ≤ r1 < r2 ≤ 1, got ({r1}, {r2})"
        )));
    }
    Ok((r1, r2))
}

impl TrainConfig {
    pub fn for_type(dnn: DnnType, preset: ModelPreset, seed: u64) -> Self {
        let mut c = TrainConfig {
            hidden: preset.hidden(),
            seed,
            ..TrainConfig::default()
        };
        dnn.apply(&mut c);
        c
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch size must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config("momentum must be in [0, 1)".into()));
        }
        if !(self.lambda1 >= 0.0 && self.lambda2 >= 0.0) {
            return Err(Error::Config("λ1, λ2 must be ≥ 0".into()));
        }
        if self.lambda1 > 0.0 {
            check_range("encourage", self.encourage)?;
        }
        if self.lambda2 > 0.0 {
            check_range("penalize", self.penalize)?;
        }
        if self.hidden.contains(&0) {
            return Err(Error::Config("hidden widths must be positive".into()));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                return Err(Error::Config("clip norm must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(serde_json::to_vec(self).expect("config serializes")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub classification_loss: f64,
    pub encourage_loss: f64,
    pub penalize_loss: f64,
    pub total_loss: f64,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: MlpModel,
    pub history: Vec<EpochRecord>,
    /// `(epoch, model)` for every requested snapshot epoch.
    pub snapshots: Vec<(usize, MlpModel)>,
}

/// Fraction of `rows` the model classifies correctly.
pub fn accuracy(model: &MlpModel, data: &Dataset, rows: &[usize]) -> Result<f64> {
    if rows.is_empty() {
        return Err(Error::Argument("accuracy over an empty split".into()));
    }
    let mut correct = 0usize;
    for chunk in rows.chunks(1024) {
        let (x, y) = data.gather(chunk);
        let pred = model.predict(x.view())?;
        correct += pred.iter().zip(&y).filter(|(p, t)| p == t).count();
    }
    Ok(correct as f64 / rows.len() as f64)
}

/// Mini-batch SGD with momentum on
/// `classification + λ1·L+ + λ2·L−`.
pub fn train(config: &TrainConfig, data: &Dataset) -> Result<TrainOutcome> {
    config.validate()?;
    let mut dims = vec![data.n()];
    dims.extend(&config.hidden);
    dims.push(data.num_classes);
    let mut model = MlpModel::init(&dims, &mut rng::stream(config.seed, &[STREAM_INIT]))?;
    let mut velocity = Gradients::zeros_like(&model);
    let mut history = Vec::with_capacity(config.epochs);
    let mut snapshots = Vec::new();
    let mut order = data.train.clone();

    for epoch in 1..=config.epochs {
        order.copy_from_slice(&data.train);
        order.shuffle(&mut rng::stream(config.seed, &[STREAM_SHUFFLE, epoch as u64]));
        let (mut sum_c, mut sum_e, mut sum_p, mut rows) = (0.0, 0.0, 0.0, 0usize);
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let (x, y) = data.gather(chunk);
            let batch = Batch {
                x: x.view(),
                labels: &y,
                baseline: &data.baseline,
            };
            let mut r = rng::stream(config.seed, &[STREAM_SUBSETS, epoch as u64, b as u64]);
            let (lc, mut grad) = classification_loss(&model, batch)?;
            let mut le = 0.0;
            let mut lp = 0.0;
            if config.lambda1 > 0.0 {
                let (r1, r2) = config.encourage.expect("validated");
                let (l, g) = loss_encourage(&model, batch, r1, r2, &mut r)?;
                grad.add_scaled(&g, config.lambda1);
                le = l;
            }
            if config.lambda2 > 0.0 {
                let (r1, r2) = config.penalize.expect("validated");
                let (l, g) = loss_penalize(&model, batch, r1, r2, &mut r)?;
                grad.add_scaled(&g, config.lambda2);
                lp = l;
            }
            let total = lc + config.lambda1 * le + config.lambda2 * lp;
            if !total.is_finite() || !grad.is_finite() {
                return Err(Error::Numeric(format!(
                    "training diverged at epoch {epoch}, batch {b}: loss {total}"
                )));
            }
            if let Some(clip) = config.clip_norm {
                let norm = grad.norm();
                if norm > clip {
                    grad.scale(clip / norm);
                }
            }
            velocity.scale(config.momentum);
            velocity.add_scaled(&grad, 1.0);
            model.apply(&velocity, -config.learning_rate);

            let k = chunk.len();
            sum_c += lc * k as f64;
            sum_e += le * k as f64;
            sum_p += lp * k as f64;
            rows += k;
        }
        let rec = EpochRecord {
            epoch,
            classification_loss: sum_c / rows as f64,
            encourage_loss: sum_e / rows as f64,
            penalize_loss: sum_p / rows as f64,
            total_loss: (sum_c + config.lambda1 * sum_e + config.lambda2 * sum_p) / rows as f64,
            train_accuracy: accuracy(&model, data, &data.train)?,
            test_accuracy: if data.test.is_empty() {
                f64::NAN
            } else {
                accuracy(&model, data, &data.test)?
            },
        };
        debug!(
            "epoch {epoch}: loss {:.4} (+ {:.4}, − {:.4}) train {:.3} test {:.3}",
            rec.classification_loss, rec.encourage_loss, rec.penalize_loss, rec.train_accuracy, rec.test_accuracy
        );
        history.push(rec);
        if config.snapshot_epochs.contains(&epoch) {
            snapshots.push((epoch, model.clone()));
        }
    }
    Ok(TrainOutcome {
        model,
        history,
        snapshots,
    })
}
