//! Smooth quadratic loss (SQL) family.
//!
//! For a prediction `x̂` and label `ŷ` with error `e = x̂ − ŷ`:
//!
//! * RQF: `e² / (e² + c)`, bounded in `[0, 1)`, gradient `2ce / (e² + c)²`
//! * MAE: `|e|`
//! * outlier regularization (OR): `β|x̂| + γx̂²`, applied to the prediction
//!   itself
//! * SQL: `α·RQF + (1 − α)·MAE + OR`
//!
//! Array losses reduce by the mean over every element, so values stay
//! comparable across horizons and variable counts. Subgradients use
//! `sign(0) = 0` at the MAE and L1 kinks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Kernel width `c`, blend `α`, and OR weights `β` (L1) and `γ` (L2).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SqlHyperParams {
    pub c: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for SqlHyperParams {
    fn default() -> Self {
        Self {
            c: 0.08,
            alpha: 0.2,
            beta: 0.05,
            gamma: 0.05,
        }
    }
}

impl SqlHyperParams {
    /// Setting tuned for the weekly influenza-like-illness data.
    pub fn ili() -> Self {
        Self {
            c: 100.0,
            alpha: 0.1,
            beta: 0.0005,
            gamma: 0.0001,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_c(self.c)?;
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::param(
                "alpha",
                format!("{} not in [0,1]", self.alpha),
            ));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::param("beta", format!("{} must be >= 0", self.beta)));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::param(
                "gamma",
                format!("{} must be >= 0", self.gamma),
            ));
        }
        Ok(())
    }
}

/// Which training objective to optimize.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossChoice {
    Sql,
    Mse,
    RqfOnly,
    MaeOnly,
}

impl LossChoice {
    pub fn evaluate(self, pred: &[f64], target: &[f64], hp: &SqlHyperParams) -> Result<LossReport> {
        match self {
            LossChoice::Sql => sql_loss(pred, target, hp),
            LossChoice::Mse => mse_loss(pred, target),
            LossChoice::RqfOnly => sql_loss(
                pred,
                target,
                &SqlHyperParams {
                    alpha: 1.0,
                    beta: 0.0,
                    gamma: 0.0,
                    ..*hp
                },
            ),
            LossChoice::MaeOnly => sql_loss(
                pred,
                target,
                &SqlHyperParams {
                    alpha: 0.0,
                    beta: 0.0,
                    gamma: 0.0,
                    ..*hp
                },
            ),
        }
    }
}

/// Loss value, its weighted parts, and `∂total/∂prediction`.
///
/// `or_l1_term` and `or_l2_term` already include `β` and `γ`; `rqf_term` and
/// `mae_term` are the unweighted means. `mse_term` is only set by
/// [`mse_loss`].
#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    pub total: f64,
    pub rqf_term: f64,
    pub mae_term: f64,
    pub or_l1_term: f64,
    pub or_l2_term: f64,
    pub mse_term: f64,
    pub grad_wrt_prediction: Vec<f64>,
}

fn check_c(c: f64) -> Result<()> {
    if c > 0.0 && c.is_finite() {
        Ok(())
    } else {
        Err(Error::param(
            "c",
            format!("kernel width must be > 0, got {c}"),
        ))
    }
}

fn check_shapes(pred: &[f64], target: &[f64]) -> Result<()> {
    if pred.len() != target.len() {
        return Err(Error::shape("loss inputs", pred.len(), target.len()));
    }
    if pred.is_empty() {
        return Err(Error::shape("loss inputs", "nonempty", 0));
    }
    Ok(())
}

#[inline]
fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[inline]
fn rqf_value(e: f64, c: f64) -> f64 {
    let e2 = e * e;
    e2 / (e2 + c)
}

#[inline]
fn rqf_derivative(e: f64, c: f64) -> f64 {
    let d = e * e + c;
    2.0 * c * e / (d * d)
}

pub fn rqf_loss(pred: f64, target: f64, c: f64) -> Result<f64> {
    check_c(c)?;
    Ok(rqf_value(pred - target, c))
}

/// Derivative of [`rqf_loss`] with respect to the prediction.
///
/// Odd in the error, with extrema at `|e| = sqrt(c / 3)`.
pub fn rqf_grad(pred: f64, target: f64, c: f64) -> Result<f64> {
    check_c(c)?;
    Ok(rqf_derivative(pred - target, c))
}

/// Error magnitude where `|rqf_grad|` peaks.
pub fn rqf_grad_peak(c: f64) -> f64 {
    (c / 3.0).sqrt()
}

/// Truncated Maclaurin series of the RQF loss:
/// `Σ_{i=1..n} (−1)^{i−1} e^{2i} / c^i`.
pub fn rqf_maclaurin(e: f64, c: f64, order: usize) -> Result<f64> {
    check_c(c)?;
    if order == 0 {
        return Err(Error::param("order", "truncation order must be >= 1"));
    }
    let r = e * e / c;
    let mut term = r;
    let mut sum = 0.0;
    for _ in 0..order {
        sum += term;
        term *= -r;
    }
    Ok(sum)
}

pub fn sql_loss(pred: &[f64], target: &[f64], hp: &SqlHyperParams) -> Result<LossReport> {
    check_shapes(pred, target)?;
    hp.validate()?;
    let SqlHyperParams {
        c,
        alpha,
        beta,
        gamma,
    } = *hp;
    let count = pred.len() as f64;
    let (mut rqf, mut mae, mut l1, mut l2) = (0.0, 0.0, 0.0, 0.0);
    let grad = pred
        .iter()
        .zip(target)
        .map(|(&x, &y)| {
            let e = x - y;
            rqf += rqf_value(e, c);
            mae += e.abs();
            l1 += x.abs();
            l2 += x * x;
            (alpha * rqf_derivative(e, c)
                + (1.0 - alpha) * sign(e)
                + beta * sign(x)
                + 2.0 * gamma * x)
                / count
        })
        .collect();
    let (rqf, mae) = (rqf / count, mae / count);
    let (or_l1, or_l2) = (beta * l1 / count, gamma * l2 / count);
    Ok(LossReport {
        total: alpha * rqf + (1.0 - alpha) * mae + or_l1 + or_l2,
        rqf_term: rqf,
        mae_term: mae,
        or_l1_term: or_l1,
        or_l2_term: or_l2,
        mse_term: 0.0,
        grad_wrt_prediction: grad,
    })
}

pub fn mse_loss(pred: &[f64], target: &[f64]) -> Result<LossReport> {
    check_shapes(pred, target)?;
    let count = pred.len() as f64;
    let mut sum = 0.0;
    let grad = pred
        .iter()
        .zip(target)
        .map(|(&x, &y)| {
            let e = x - y;
            sum += e * e;
            2.0 * e / count
        })
        .collect();
    let mse = sum / count;
    Ok(LossReport {
        total: mse,
        rqf_term: 0.0,
        mae_term: 0.0,
        or_l1_term: 0.0,
        or_l2_term: 0.0,
        mse_term: mse,
        grad_wrt_prediction: grad,
    })
}
