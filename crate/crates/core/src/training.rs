//! Mini-batch Adam training with early stopping, and evaluation metrics.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::{LossChoice, SqlHyperParams};
use crate::model::{backward, forward, ModelParams};
use crate::types::SeriesWindow;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without improvement of the monitored metric before stopping.
    pub patience: usize,
    pub loss: LossChoice,
    pub hp: SqlHyperParams,
    /// Seeds both initialization and shuffling.
    pub seed: u64,
    pub adam_betas: (f64, f64),
    pub adam_eps: f64,
    /// Caps the number of optimizer steps per epoch; `None` uses every batch.
    pub max_batches_per_epoch: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            batch_size: 32,
            max_epochs: 10,
            patience: 3,
            loss: LossChoice::Sql,
            hp: SqlHyperParams::default(),
            seed: 0,
            adam_betas: (0.9, 0.999),
            adam_eps: 1e-8,
            max_batches_per_epoch: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::param(
                "learning_rate",
                format!("{} must be >= 0", self.learning_rate),
            ));
        }
        if self.batch_size == 0 {
            return Err(Error::param("batch_size", "must be positive"));
        }
        if self.max_epochs == 0 {
            return Err(Error::param("max_epochs", "must be positive"));
        }
        let (b1, b2) = self.adam_betas;
        if !((0.0..1.0).contains(&b1) && (0.0..1.0).contains(&b2)) {
            return Err(Error::param(
                "adam_betas",
                format!("({b1}, {b2}) not in [0,1)"),
            ));
        }
        if self.adam_eps <= 0.0 {
            return Err(Error::param("adam_eps", "must be > 0"));
        }
        if self.max_batches_per_epoch == Some(0) {
            return Err(Error::param("max_batches_per_epoch", "must be positive"));
        }
        self.hp.validate()
    }
}

/// First and second moment estimates for bias-corrected Adam.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
        }
    }
}

pub fn adam_step(
    params: &mut [f64],
    grad: &[f64],
    state: &mut AdamState,
    lr: f64,
    (b1, b2): (f64, f64),
    eps: f64,
) -> Result<()> {
    if grad.len() != params.len() || state.m.len() != params.len() {
        return Err(Error::shape("adam step", params.len(), grad.len()));
    }
    state.step += 1;
    let c1 = 1.0 - b1.powi(state.step as i32);
    let c2 = 1.0 - b2.powi(state.step as i32);
    for i in 0..params.len() {
        let g = grad[i];
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g;
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_mse: Option<f64>,
    pub val_mae: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    /// Validation MSE of the freshly initialized model.
    pub initial_val_mse: Option<f64>,
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
    pub stopped_early: bool,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub history: TrainHistory,
}

/// Loss and mean gradient over a batch. Each window contributes the mean of
/// its per-element loss, so the batch value is the mean over all elements.
pub fn batch_loss_and_grad(
    params: &ModelParams,
    batch: &[&SeriesWindow],
    loss: LossChoice,
    hp: &SqlHyperParams,
) -> Result<(f64, Vec<f64>)> {
    let mut grad = vec![0.0; params.len()];
    let mut total = 0.0;
    for w in batch {
        let trace = forward(params, &w.input)?;
        let report = loss.evaluate(&trace.prediction, w.target.as_slice(), hp)?;
        total += report.total;
        let g = backward(&trace, &report.grad_wrt_prediction, params)?;
        for (acc, gi) in grad.iter_mut().zip(&g) {
            *acc += gi;
        }
    }
    let scale = 1.0 / batch.len() as f64;
    grad.iter_mut().for_each(|g| *g *= scale);
    Ok((total * scale, grad))
}

/// Trains from `initial`, keeping the parameters of the best epoch.
///
/// The monitored metric is validation MSE, or the mean training loss when
/// `val` is empty.
pub fn train(
    initial: ModelParams,
    train_windows: &[SeriesWindow],
    val: &[SeriesWindow],
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if train_windows.is_empty() {
        return Err(Error::param("train_windows", "no training windows"));
    }
    let mut params = initial;
    let mut adam = AdamState::new(params.len());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..train_windows.len()).collect();

    let initial_val_mse = if val.is_empty() {
        None
    } else {
        Some(evaluate(&params, val)?.mse)
    };
    let mut best = (f64::INFINITY, params.clone(), 0);
    let mut epochs = Vec::new();
    let mut stale = 0;
    let mut stopped_early = false;

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            if config.max_batches_per_epoch.is_some_and(|cap| b >= cap) {
                break;
            }
            let batch: Vec<&SeriesWindow> = chunk.iter().map(|&i| &train_windows[i]).collect();
            let (loss, grad) = batch_loss_and_grad(&params, &batch, config.loss, &config.hp)?;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Divergence {
                    epoch,
                    batch: b,
                    loss,
                });
            }
            adam_step(
                params.as_flat_mut(),
                &grad,
                &mut adam,
                config.learning_rate,
                config.adam_betas,
                config.adam_eps,
            )?;
            loss_sum += loss;
            batches += 1;
        }
        if params.as_flat().iter().any(|p| !p.is_finite()) {
            return Err(Error::Divergence {
                epoch,
                batch: batches,
                loss: f64::NAN,
            });
        }
        let train_loss = loss_sum / batches as f64;
        let (val_mse, val_mae) = if val.is_empty() {
            (None, None)
        } else {
            let m = evaluate(&params, val)?;
            (Some(m.mse), Some(m.mae))
        };
        epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_mse,
            val_mae,
        });
        let monitored = val_mse.unwrap_or(train_loss);
        if !monitored.is_finite() {
            return Err(Error::Divergence {
                epoch,
                batch: batches,
                loss: monitored,
            });
        }
        if monitored < best.0 {
            best = (monitored, params.clone(), epoch);
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience && config.patience > 0 {
                stopped_early = epoch < config.max_epochs;
                break;
            }
        }
    }

    Ok(TrainOutcome {
        params: best.1,
        history: TrainHistory {
            initial_val_mse,
            epochs,
            best_epoch: best.2,
            stopped_early,
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub mse: f64,
    pub mae: f64,
    /// MSE at each forecast step, averaged over windows and variables.
    pub per_horizon_mse: Vec<f64>,
    pub windows: usize,
}

pub fn predict(params: &ModelParams, window: &SeriesWindow) -> Result<Vec<f64>> {
    Ok(forward(params, &window.input)?.prediction)
}

/// Error metrics in the units of the windows' targets.
pub fn evaluate(params: &ModelParams, windows: &[SeriesWindow]) -> Result<EvalMetrics> {
    if windows.is_empty() {
        return Err(Error::param("windows", "nothing to evaluate"));
    }
    let horizon = params.spec().horizon;
    let mut per_horizon = vec![0.0; horizon];
    let (mut se, mut ae, mut count) = (0.0, 0.0, 0usize);
    for w in windows {
        let pred = predict(params, w)?;
        let target = w.target.as_slice();
        if target.len() != pred.len() {
            return Err(Error::shape("evaluation target", pred.len(), target.len()));
        }
        for (i, (p, y)) in pred.iter().zip(target).enumerate() {
            let e = p - y;
            se += e * e;
            ae += e.abs();
            per_horizon[i % horizon] += e * e;
        }
        count += pred.len();
    }
    let per_step = (count / horizon) as f64;
    Ok(EvalMetrics {
        mse: se / count as f64,
        mae: ae / count as f64,
        per_horizon_mse: per_horizon.into_iter().map(|s| s / per_step).collect(),
        windows: windows.len(),
    })
}
