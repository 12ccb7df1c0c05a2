use serde::{Deserialize, Serialize};

use super::model::{argmax, FeatureBlockLayout, FusionModel, SparseVec};
use crate::dataset::ModalityCombo;
use crate::error::{Error, Result};
use crate::rng::{self, Purpose};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub max_epochs: usize,
    /// Epochs without a dev-accuracy improvement before stopping.
    pub patience: usize,
    pub l2: f64,
    pub seed: u64,
    /// `None` means full-batch.
    pub batch_size: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.1,
            max_epochs: 200,
            patience: 10,
            l2: 1e-4,
            seed: 0,
            batch_size: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate.is_finite()
            && self.learning_rate > 0.0
            && self.max_epochs > 0
            && self.patience > 0
            && self.l2.is_finite()
            && self.l2 >= 0.0
            && self.batch_size != Some(0);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "invalid training config {self:?}"
            )))
        }
    }
}

/// Labelled sparse rows sharing one feature space.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Examples {
    pub dim: usize,
    pub rows: Vec<SparseVec>,
    pub labels: Vec<usize>,
}

impl Examples {
    pub fn new(dim: usize) -> Self {
        Examples {
            dim,
            ..Default::default()
        }
    }

    pub fn from_dense(rows: &[Vec<f64>], labels: &[usize]) -> Self {
        Examples {
            dim: rows.first().map_or(0, Vec::len),
            rows: rows.iter().map(|r| SparseVec::from_dense(r)).collect(),
            labels: labels.to_vec(),
        }
    }

    pub fn push(&mut self, row: SparseVec, label: usize) {
        self.rows.push(row);
        self.labels.push(label);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_accuracy: f64,
    /// Best dev accuracy seen up to and including this epoch.
    pub best_dev_accuracy: f64,
}

/// Mean cross-entropy over `batch` and its gradient (no regularization).
fn cross_entropy_grad(
    model: &FusionModel,
    data: &Examples,
    batch: &[usize],
) -> (f64, Vec<Vec<f64>>, Vec<f64>) {
    let l = model.labels;
    let mut gw = vec![vec![0.0; model.layout.total()]; l];
    let mut gb = vec![0.0; l];
    let mut loss = 0.0;
    let scale = 1.0 / batch.len() as f64;
    for &n in batch {
        let x = data.rows[n].masked(&model.layout, model.combo);
        let z = model.logits_sparse(&x);
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        let y = data.labels[n];
        loss += lse - z.get(y).copied().unwrap_or(f64::NEG_INFINITY);
        for k in 0..l {
            let g = ((z[k] - lse).exp() - if k == y { 1.0 } else { 0.0 }) * scale;
            gb[k] += g;
            for (i, xi) in x.iter() {
                gw[k][i] += g * xi;
            }
        }
    }
    (loss * scale, gw, gb)
}

/// Full-batch objective `mean CE + (l2/2)·‖W‖²` and its gradient. The bias is
/// not regularized.
pub fn loss_and_gradient(
    model: &FusionModel,
    data: &Examples,
    l2: f64,
) -> (f64, Vec<Vec<f64>>, Vec<f64>) {
    let all: Vec<usize> = (0..data.len()).collect();
    let (mut loss, mut gw, gb) = cross_entropy_grad(model, data, &all);
    for (grow, wrow) in gw.iter_mut().zip(&model.weights) {
        for (g, w) in grow.iter_mut().zip(wrow) {
            loss += 0.5 * l2 * w * w;
            *g += l2 * w;
        }
    }
    (loss, gw, gb)
}

pub fn accuracy(model: &FusionModel, data: &Examples) -> f64 {
    if data.is_empty() {
        return 0.0;
    }
    let correct = data
        .rows
        .iter()
        .zip(&data.labels)
        .filter(|(x, &y)| argmax(&model.logits_sparse(x)) == y)
        .count();
    correct as f64 / data.len() as f64
}

pub fn train(
    train: &Examples,
    dev: &Examples,
    layout: FeatureBlockLayout,
    combo: ModalityCombo,
    labels: usize,
    config: &TrainConfig,
) -> Result<FusionModel> {
    train_with_history(train, dev, layout, combo, labels, config).map(|(m, _)| m)
}

/// Mini-batch gradient descent on the regularized cross-entropy.
///
/// The L2 term is applied as a proximal step `W ← (W − lr·∇CE) / (1 + lr·l2)`,
/// which has the same fixed points as plain gradient descent on the full
/// objective and stays stable for arbitrarily large `l2`. With a non-empty
/// dev set the parameters of the best-dev-accuracy epoch are returned and
/// training stops after `patience` epochs without improvement; otherwise the
/// final parameters are returned.
pub fn train_with_history(
    train: &Examples,
    dev: &Examples,
    layout: FeatureBlockLayout,
    combo: ModalityCombo,
    labels: usize,
    config: &TrainConfig,
) -> Result<(FusionModel, Vec<EpochStats>)> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyInput("training set"));
    }
    if train.dim != layout.total() || (!dev.is_empty() && dev.dim != layout.total()) {
        return Err(Error::FeatureLength {
            expected: layout.total(),
            found: train.dim,
        });
    }
    if labels == 0 {
        return Err(Error::InvalidConfig(
            "model needs at least one label".into(),
        ));
    }
    if let Some(&bad) = train.labels.iter().find(|&&y| y >= labels) {
        return Err(Error::InvalidConfig(format!(
            "training label {bad} out of range"
        )));
    }

    let n = train.len();
    let bs = config.batch_size.unwrap_or(n).clamp(1, n);
    let lr = config.learning_rate;
    let shrink = 1.0 / (1.0 + lr * config.l2);
    let mut model = FusionModel::zeros(layout, combo, labels);
    let mut best: Option<(f64, FusionModel)> = None;
    let mut since_best = 0;
    let mut history = Vec::new();
    let natural: Vec<usize> = (0..n).collect();

    for epoch in 0..config.max_epochs {
        let order = if bs < n {
            rng::shuffled(&natural, config.seed, Purpose::Batches, epoch as u64)
        } else {
            natural.clone()
        };
        let mut epoch_loss = 0.0;
        for batch in order.chunks(bs) {
            let (loss, gw, gb) = cross_entropy_grad(&model, train, batch);
            epoch_loss += loss * batch.len() as f64;
            for (wrow, grow) in model.weights.iter_mut().zip(&gw) {
                for (w, g) in wrow.iter_mut().zip(grow) {
                    *w = (*w - lr * g) * shrink;
                }
            }
            for (b, g) in model.bias.iter_mut().zip(&gb) {
                *b -= lr * g;
            }
        }
        let epoch_loss = epoch_loss / n as f64;
        let finite = epoch_loss.is_finite()
            && model
                .bias
                .iter()
                .chain(model.weights.iter().flatten())
                .all(|x| x.is_finite());
        if !finite {
            return Err(Error::Diverged { learning_rate: lr });
        }

        if dev.is_empty() {
            history.push(EpochStats {
                epoch,
                train_loss: epoch_loss,
                dev_accuracy: f64::NAN,
                best_dev_accuracy: f64::NAN,
            });
            continue;
        }
        let acc = accuracy(&model, dev);
        if best.as_ref().is_none_or(|(b, _)| acc > *b) {
            best = Some((acc, model.clone()));
            since_best = 0;
        } else {
            since_best += 1;
        }
        history.push(EpochStats {
            epoch,
            train_loss: epoch_loss,
            dev_accuracy: acc,
            best_dev_accuracy: best.as_ref().map_or(acc, |(b, _)| *b),
        });
        if since_best >= config.patience {
            break;
        }
    }
    Ok((best.map_or(model, |(_, m)| m), history))
}
