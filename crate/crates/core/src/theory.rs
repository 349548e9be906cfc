//! Monte-Carlo checks of the noise-robustness inequalities.
//!
//! The noise effect of a loss is `|f(noisy) − f(clean)| / |f(clean)|`, where
//! label noise moves the error `e = x̂ − y` to `e + ε`. The effects on loss
//! values are
//!
//! ```text
//! V_MSE = |2εe + ε²| / e²
//! V_RQF = c·|2εe + ε²| / (e²·((e + ε)² + c))
//! ```
//!
//! so `V_RQF / V_MSE = c / (c + (e + ε)²) ≤ 1` for any noise. The effects on
//! gradients (the `∂x̂/∂θ` factor cancels) are
//!
//! ```text
//! V_m = |ε / e|
//! V_r = |(e + ε)(e² + c)² − e((e + ε)² + c)²| / (|e|·((e + ε)² + c)²)
//! ```
//!
//! and `V_r ≤ V_m` whenever `|ε| ≥ 2|e|`. The proof splits that region four
//! ways by the sign of `ε` and of the bracket in the `V_r` numerator; the
//! sampler below hits all four. Everything is scalar and `e = 0` is never
//! sampled since the normalization divides by the noiseless loss.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative slack allowed when comparing two effects that are equal in exact
/// arithmetic (e.g. `e + ε = 0`, or `ε = −2e`).
pub const COMPARISON_SLACK: f64 = 1e-10;

const MAX_LISTED: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseEffectSample {
    pub e: f64,
    pub eps: f64,
    pub c: f64,
    pub v_mse: f64,
    pub v_rqf: f64,
    pub v_r: f64,
    pub v_m: f64,
}

/// Bracket `(e + ε)(e² + c)² − e((e + ε)² + c)²` from the `V_r` numerator.
pub fn gradient_bracket(e: f64, eps: f64, c: f64) -> f64 {
    let shifted = e + eps;
    let clean = e * e + c;
    let noisy = shifted * shifted + c;
    shifted * clean * clean - e * noisy * noisy
}

pub fn noise_effect(e: f64, eps: f64, c: f64) -> Result<NoiseEffectSample> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::param(
            "c",
            format!("kernel width must be > 0, got {c}"),
        ));
    }
    if e == 0.0 {
        return Err(Error::UndefinedNormalization);
    }
    let shifted = e + eps;
    let e2 = e * e;
    let change = (2.0 * eps * e + eps * eps).abs();
    let noisy = shifted * shifted + c;
    Ok(NoiseEffectSample {
        e,
        eps,
        c,
        v_mse: change / e2,
        v_rqf: c * change / (e2 * noisy),
        v_r: gradient_bracket(e, eps, c).abs() / (e.abs() * noisy * noisy),
        v_m: (eps / e).abs(),
    })
}

/// Sampling box: uniform `e` and `ε`, log-uniform `c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleRanges {
    pub e: (f64, f64),
    pub eps: (f64, f64),
    pub c: (f64, f64),
}

impl Default for SampleRanges {
    fn default() -> Self {
        Self {
            e: (-10.0, 10.0),
            eps: (-10.0, 10.0),
            c: (1e-4, 100.0),
        }
    }
}

impl SampleRanges {
    fn validate(&self) -> Result<()> {
        let ok = |(lo, hi): (f64, f64)| lo.is_finite() && hi.is_finite() && lo < hi;
        if !ok(self.e) || !ok(self.eps) || !ok(self.c) {
            return Err(Error::param(
                "sample ranges",
                "each range needs finite lo < hi",
            ));
        }
        if self.c.0 <= 0.0 {
            return Err(Error::param(
                "sample ranges",
                "c range must be strictly positive",
            ));
        }
        Ok(())
    }
}

fn sample_nonzero(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    loop {
        let v = rng.random_range(lo..hi);
        if v != 0.0 {
            return v;
        }
    }
}

fn sample_log(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    rng.random_range(lo.ln()..hi.ln()).exp()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossBoundReport {
    pub samples: usize,
    pub seed: u64,
    pub violations: usize,
    /// Largest observed `V_RQF / V_MSE` (never above one when the bound holds).
    pub worst_ratio: f64,
    /// Largest `|V_RQF / V_MSE − c / (c + (e + ε)²)|`.
    pub max_identity_error: f64,
    pub violating: Vec<NoiseEffectSample>,
}

/// Checks `V_RQF ≤ V_MSE` on `num_samples` random draws.
pub fn verify_loss_bound(
    num_samples: usize,
    seed: u64,
    ranges: SampleRanges,
) -> Result<LossBoundReport> {
    ranges.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = LossBoundReport {
        samples: num_samples,
        seed,
        violations: 0,
        worst_ratio: 0.0,
        max_identity_error: 0.0,
        violating: Vec::new(),
    };
    for _ in 0..num_samples {
        let e = sample_nonzero(&mut rng, ranges.e);
        let eps = rng.random_range(ranges.eps.0..ranges.eps.1);
        let c = sample_log(&mut rng, ranges.c);
        let s = noise_effect(e, eps, c)?;
        if s.v_rqf > s.v_mse * (1.0 + COMPARISON_SLACK) {
            report.violations += 1;
            if report.violating.len() < MAX_LISTED {
                report.violating.push(s);
            }
        }
        if s.v_mse > 0.0 {
            let ratio = s.v_rqf / s.v_mse;
            let shifted = e + eps;
            let identity = c / (c + shifted * shifted);
            report.worst_ratio = report.worst_ratio.max(ratio);
            report.max_identity_error = report.max_identity_error.max((ratio - identity).abs());
        }
    }
    Ok(report)
}

/// Which of the four sign cases of the gradient proof a sample falls in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProofCase {
    /// `ε ≥ 2|e|`, bracket ≥ 0
    A,
    /// `ε ≥ 2|e|`, bracket < 0
    B,
    /// `ε ≤ −2|e|`, bracket ≥ 0
    C,
    /// `ε ≤ −2|e|`, bracket < 0
    D,
}

pub fn proof_case(e: f64, eps: f64, c: f64) -> Option<ProofCase> {
    let nonneg = gradient_bracket(e, eps, c) >= 0.0;
    if eps >= 2.0 * e.abs() {
        Some(if nonneg { ProofCase::A } else { ProofCase::B })
    } else if eps <= -2.0 * e.abs() {
        Some(if nonneg { ProofCase::C } else { ProofCase::D })
    } else {
        None
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientBoundReport {
    pub samples: usize,
    pub seed: u64,
    pub violations: usize,
    /// Largest `(V_r − V_m) / V_m`; nonpositive when the bound holds.
    pub worst_margin: f64,
    /// Sample counts for cases A, B, C, D.
    pub strata: [usize; 4],
    pub violating: Vec<NoiseEffectSample>,
}

impl GradientBoundReport {
    pub fn all_strata_hit(&self) -> bool {
        self.strata.iter().all(|&n| n > 0)
    }
}

/// Checks `V_r ≤ V_m` on draws constrained to `|ε| ≥ 2|e|`.
///
/// Draws alternate between positive and negative noise. `e` is uniform on
/// `[−10, 10]`, `c` log-uniform on `[1e-4, 100]` and `|ε| − 2|e|` uniform on
/// `[0, 20]`.
pub fn verify_gradient_bound(num_samples: usize, seed: u64) -> Result<GradientBoundReport> {
    let ranges = SampleRanges::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = GradientBoundReport {
        samples: num_samples,
        seed,
        violations: 0,
        worst_margin: f64::NEG_INFINITY,
        strata: [0; 4],
        violating: Vec::new(),
    };
    for i in 0..num_samples {
        let e = sample_nonzero(&mut rng, ranges.e);
        let c = sample_log(&mut rng, ranges.c);
        let magnitude = 2.0 * e.abs() + rng.random_range(0.0..20.0);
        let eps = if i % 2 == 0 { magnitude } else { -magnitude };
        let s = noise_effect(e, eps, c)?;
        let case = proof_case(e, eps, c).expect("sampler enforces |eps| >= 2|e|");
        report.strata[case as usize] += 1;
        report.worst_margin = report.worst_margin.max((s.v_r - s.v_m) / s.v_m);
        if s.v_r > s.v_m * (1.0 + COMPARISON_SLACK) {
            report.violations += 1;
            if report.violating.len() < MAX_LISTED {
                report.violating.push(s);
            }
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutsideSearchReport {
    pub samples: usize,
    pub seed: u64,
    /// Draws with `|ε| < 2|e|` where `V_r > V_m`.
    pub exceedances: usize,
    pub examples: Vec<NoiseEffectSample>,
}

/// Random search below the `|ε| ≥ 2|e|` threshold for draws where the gradient
/// effect of RQF exceeds that of MSE.
pub fn search_outside_constraint(num_samples: usize, seed: u64) -> Result<OutsideSearchReport> {
    let ranges = SampleRanges::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = OutsideSearchReport {
        samples: num_samples,
        seed,
        exceedances: 0,
        examples: Vec::new(),
    };
    for _ in 0..num_samples {
        let e = sample_nonzero(&mut rng, ranges.e);
        let c = sample_log(&mut rng, ranges.c);
        let bound = 2.0 * e.abs();
        let eps = rng.random_range(-bound..bound);
        let s = noise_effect(e, eps, c)?;
        if s.v_r > s.v_m * (1.0 + COMPARISON_SLACK) {
            report.exceedances += 1;
            if report.examples.len() < MAX_LISTED {
                report.examples.push(s);
            }
        }
    }
    Ok(report)
}
