use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::loss::{accuracy, cross_entropy, cross_entropy_grad};
use super::model::{HeadKind, Model, ModelSpec};
use super::optim::{optimizer_step, OptState, OptimizerConfig};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::layers::{accumulate, Grads, Params};
use crate::linalg::RngState;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub optimizer: OptimizerConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    #[serde(default)]
    pub dropout_rate: f64,
    #[serde(default)]
    pub lambda_reg: f64,
    #[serde(default)]
    pub head: HeadKind,
    #[serde(default)]
    pub bias_in_head: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            optimizer: OptimizerConfig::adam(1e-3),
            epochs: 10,
            batch_size: 64,
            seed: 0,
            dropout_rate: 0.0,
            lambda_reg: 0.0,
            head: HeadKind::Softermax,
            bias_in_head: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.head == HeadKind::Softermax && self.bias_in_head {
            return Err(Error::Config(
                "a softermax head needs a bias-free output layer (bias_in_head = false)".into(),
            ));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.lambda_reg >= 0.0) || !self.lambda_reg.is_finite() {
            return Err(Error::Config(format!("lambda_reg must be >= 0, got {}", self.lambda_reg)));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!("dropout_rate {} outside [0, 1)", self.dropout_rate)));
        }
        let lr = match self.optimizer {
            OptimizerConfig::Sgd { lr, .. } | OptimizerConfig::Adam { lr, .. } => lr,
        };
        if !(lr > 0.0) || !lr.is_finite() {
            return Err(Error::Config(format!("learning rate must be positive, got {lr}")));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    /// Cross-entropy plus `λ·penalty`.
    pub loss: f64,
    pub cross_entropy: f64,
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    /// 0 is the untrained model.
    pub epoch: usize,
    /// Full training-set objective in inference mode.
    pub loss: f64,
    pub train_acc: f64,
    pub test_acc: f64,
    /// Mean minibatch objective seen during the epoch (absent for epoch 0).
    pub mean_batch_loss: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub seed: u64,
    pub config: TrainConfig,
    pub spec: ModelSpec,
    pub param_count: usize,
    pub epochs: Vec<EpochMetrics>,
    pub wall_clock_seconds: f64,
    pub model: Model,
}

impl TrainReport {
    pub fn final_metrics(&self) -> &EpochMetrics {
        self.epochs.last().expect("initial evaluation is always recorded")
    }
}

/// Fails with the name of the first tensor holding a non-finite entry.
pub fn check_finite(kind: &str, names: &[String], tensors: &Grads) -> Result<()> {
    for (name, t) in names.iter().zip(tensors) {
        if let Some(i) = t.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("{kind} of {name} (entry {i} is {})", t[i])));
        }
    }
    Ok(())
}

/// Inference-mode objective and accuracy on a dataset.
pub fn evaluate(model: &Model, data: &Dataset, lambda: f64) -> Result<Evaluation> {
    let probs = model.predict(&data.features)?;
    let ce = cross_entropy(&probs, &data.labels)?;
    let penalty = if lambda != 0.0 { model.regularizer(0.0).0 } else { 0.0 };
    Ok(Evaluation {
        loss: ce + lambda * penalty,
        cross_entropy: ce,
        accuracy: accuracy(&probs, &data.labels),
    })
}

pub fn train(
    spec: &ModelSpec,
    train_set: &Dataset,
    test_set: &Dataset,
    config: &TrainConfig,
    state: RngState,
) -> Result<TrainReport> {
    train_with(spec, train_set, test_set, config, state, &mut |_| {})
}

/// [`train`] with a callback invoked after every epoch's evaluation.
pub fn train_with(
    spec: &ModelSpec,
    train_set: &Dataset,
    test_set: &Dataset,
    config: &TrainConfig,
    state: RngState,
    on_epoch: &mut dyn FnMut(&EpochMetrics),
) -> Result<TrainReport> {
    config.validate()?;
    train_set.validate()?;
    test_set.validate()?;
    if train_set.is_empty() {
        return Err(Error::InsufficientData("empty training set".into()));
    }
    let classes = train_set.num_classes.max(test_set.num_classes);
    let started = Instant::now();
    let (mut model, mut state) = Model::build(
        spec,
        train_set.dim(),
        classes,
        config.head,
        config.bias_in_head,
        state,
    )?;
    let names = model.names();
    let mut opt = OptState::new(&model);
    let lambda = config.lambda_reg;

    let record = |model: &Model, epoch: usize, mean_batch_loss: Option<f64>| -> Result<EpochMetrics> {
        let tr = evaluate(model, train_set, lambda)?;
        let te = if test_set.is_empty() {
            0.0
        } else {
            evaluate(model, test_set, 0.0)?.accuracy
        };
        if !tr.loss.is_finite() {
            return Err(Error::NonFinite(format!("training loss after epoch {epoch}")));
        }
        Ok(EpochMetrics {
            epoch,
            loss: tr.loss,
            train_acc: tr.accuracy,
            test_acc: te,
            mean_batch_loss,
        })
    };

    let mut epochs = vec![record(&model, 0, None)?];
    on_epoch(&epochs[0]);
    for epoch in 1..=config.epochs {
        let (order, s) = state.permutation(train_set.len());
        state = s;
        let mut batch_losses = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let x = train_set.features.select_rows(chunk);
            let labels: Vec<usize> = chunk.iter().map(|&i| train_set.labels[i]).collect();
            let (probs, cache, s) = model.forward(&x, config.dropout_rate, state, true)?;
            state = s;
            let ce = cross_entropy(&probs, &labels)?;
            let upstream = cross_entropy_grad(&probs, &labels)?;
            let (mut grads, _) = model.backward(&cache, &upstream)?;
            let mut loss = ce;
            if lambda != 0.0 {
                let (penalty, reg) = model.regularizer(lambda);
                loss += lambda * penalty;
                accumulate(&mut grads, &reg);
            }
            if !loss.is_finite() {
                check_finite("gradient", &names, &grads)?;
                return Err(Error::NonFinite(format!("loss at epoch {epoch}, batch {batches}")));
            }
            check_finite("gradient", &names, &grads)?;
            optimizer_step(&mut model, &grads, &mut opt, &config.optimizer)?;
            batch_losses += loss;
            batches += 1;
        }
        let m = record(&model, epoch, Some(batch_losses / batches as f64))?;
        on_epoch(&m);
        epochs.push(m);
    }
    Ok(TrainReport {
        seed: config.seed,
        config: config.clone(),
        spec: spec.clone(),
        param_count: model.param_count(),
        epochs,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
        model,
    })
}

/// `epoch,loss,train_acc,test_acc` rows.
pub fn metrics_csv(metrics: &[EpochMetrics]) -> String {
    let mut out = String::from("epoch,loss,train_acc,test_acc\n");
    for m in metrics {
        out.push_str(&format!("{},{},{},{}\n", m.epoch, m.loss, m.train_acc, m.test_acc));
    }
    out
}
