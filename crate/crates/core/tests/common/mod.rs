//! Test-only oracles shared by the integration suites: a straight-line
//! reference forward pass, central finite differences and a brute-force
//! patch slicer.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use timesql::losses::{mse_loss, sql_loss, SqlHyperParams};
use timesql::model::{backward, forward, ModelParams, ModelSpec};
use timesql::patching::{multi_patch, MultiScaleConfig, PatchScaleSpec};
use timesql::types::SeriesMatrix;

/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;
/// Relative agreement required between analytic and numeric derivatives.
pub const FD_REL_TOL: f64 = 1e-6;
/// Below this `|analytic| + |fd|` the central difference is dominated by
/// rounding (its noise is about 1e-11 for O(1) objectives), so the relative
/// test is taken against this floor instead.
pub const FD_RESOLUTION_FLOOR: f64 = 1e-4;

#[derive(Debug, Default, Clone, Copy)]
pub struct GradCheck {
    pub coords: usize,
    pub failures: usize,
    pub worst_rel: f64,
}

impl GradCheck {
    pub fn merge(&mut self, other: GradCheck) {
        self.coords += other.coords;
        self.failures += other.failures;
        self.worst_rel = self.worst_rel.max(other.worst_rel);
    }

    pub fn record(&mut self, analytic: f64, fd: f64) {
        let scale = (analytic.abs() + fd.abs()).max(FD_RESOLUTION_FLOOR);
        let rel = (analytic - fd).abs() / (scale + 1e-12);
        self.coords += 1;
        self.worst_rel = self.worst_rel.max(rel);
        if rel >= FD_REL_TOL {
            self.failures += 1;
        }
    }
}

/// Compares `analytic` with central differences of `f` around `x0`.
pub fn fd_check(analytic: &[f64], x0: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> GradCheck {
    let mut probe = x0.to_vec();
    let mut check = GradCheck::default();
    for i in 0..x0.len() {
        probe[i] = x0[i] + FD_STEP;
        let up = f(&probe);
        probe[i] = x0[i] - FD_STEP;
        let down = f(&probe);
        probe[i] = x0[i];
        check.record(analytic[i], (up - down) / (2.0 * FD_STEP));
    }
    check
}

pub fn random_window(rng: &mut ChaCha8Rng, n_vars: usize, len: usize) -> SeriesMatrix {
    let rows = (0..n_vars)
        .map(|_| {
            let level = rng.random_range(-5.0..5.0);
            let spread = rng.random_range(0.2..3.0);
            (0..len)
                .map(|_| level + spread * rng.random_range(-1.0..1.0))
                .collect()
        })
        .collect();
    SeriesMatrix::from_rows(rows).unwrap()
}

/// Reference forward written directly from the architecture description,
/// reading weights by name and indexing the raw window.
pub fn reference_forward(p: &ModelParams, x: &SeriesMatrix) -> Vec<f64> {
    let spec = p.spec();
    let (n_vars, l, t_out, h) = (spec.n_vars, spec.lookback, spec.horizon, spec.hidden);
    let mut out = vec![0.0; n_vars * t_out];
    for n in 0..n_vars {
        let row = x.row(n);
        let mean = row.iter().sum::<f64>() / l as f64;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / l as f64;
        let std = (var + 1e-5).sqrt();
        let (g, b) = if spec.revin_affine {
            (
                p.array("revin.scale").unwrap()[n],
                p.array("revin.shift").unwrap()[n],
            )
        } else {
            (1.0, 0.0)
        };
        let z: Vec<f64> = row.iter().map(|v| (v - mean) / std * g + b).collect();

        let mut feats = Vec::new();
        for (k, s) in spec.scales.scales.iter().enumerate() {
            let w = p.array(&format!("encoder{k}.layer0.weight")).unwrap();
            let bias = p.array(&format!("encoder{k}.layer0.bias")).unwrap();
            let mut start = 0;
            while start + s.patch_len <= l {
                for j in 0..h {
                    let mut acc = bias[j];
                    for q in 0..s.patch_len {
                        acc += w[j * s.patch_len + q] * z[start + q];
                    }
                    feats.push(if acc > 0.0 { acc } else { 0.0 });
                }
                start += s.stride;
            }
        }

        let layers = spec.head_hidden.len() + 1;
        let mut act = feats;
        for j in 0..layers {
            let w = p.array(&format!("head.layer{j}.weight")).unwrap();
            let bias = p.array(&format!("head.layer{j}.bias")).unwrap();
            let fan_in = act.len();
            let fan_out = bias.len();
            let mut next = vec![0.0; fan_out];
            for o in 0..fan_out {
                let mut acc = bias[o];
                for i in 0..fan_in {
                    acc += w[o * fan_in + i] * act[i];
                }
                next[o] = if j + 1 < layers { acc.max(0.0) } else { acc };
            }
            act = next;
        }
        for t in 0..t_out {
            let guard = if spec.revin_affine { 1e-10 } else { 0.0 };
            out[n * t_out + t] = (act[t] - b) / (g + guard) * std + mean;
        }
    }
    out
}

pub fn random_spec(rng: &mut ChaCha8Rng) -> ModelSpec {
    let lookback = rng.random_range(8..=20);
    let k = rng.random_range(1..=3);
    let scales = (0..k)
        .map(|_| {
            let p = rng.random_range(1..=lookback);
            PatchScaleSpec::new(p, rng.random_range(1..=4))
        })
        .collect();
    let head_hidden = if rng.random_bool(0.5) {
        vec![rng.random_range(2..=6)]
    } else {
        vec![]
    };
    ModelSpec {
        n_vars: rng.random_range(1..=3),
        lookback,
        horizon: rng.random_range(1..=5),
        scales: MultiScaleConfig::new(scales),
        hidden: rng.random_range(1..=4),
        encoder: Default::default(),
        head_hidden,
        revin: true,
        revin_affine: rng.random_bool(0.5),
    }
}

/// Smallest |pre-activation| over the ReLU units of a trace's model, via a
/// forward replay with the reference. Used to keep finite differences off the
/// ReLU kinks.
pub fn min_abs_preactivation(p: &ModelParams, x: &SeriesMatrix) -> f64 {
    let spec = p.spec();
    let mut min = f64::INFINITY;
    let l = spec.lookback;
    for n in 0..spec.n_vars {
        let row = x.row(n);
        let mean = row.iter().sum::<f64>() / l as f64;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / l as f64;
        let std = (var + 1e-5).sqrt();
        let (g, b) = if spec.revin_affine {
            (
                p.array("revin.scale").unwrap()[n],
                p.array("revin.shift").unwrap()[n],
            )
        } else {
            (1.0, 0.0)
        };
        let z: Vec<f64> = row.iter().map(|v| (v - mean) / std * g + b).collect();
        let mut feats = Vec::new();
        for (k, s) in spec.scales.scales.iter().enumerate() {
            let w = p.array(&format!("encoder{k}.layer0.weight")).unwrap();
            let bias = p.array(&format!("encoder{k}.layer0.bias")).unwrap();
            let mut start = 0;
            while start + s.patch_len <= l {
                for j in 0..spec.hidden {
                    let acc: f64 = bias[j]
                        + (0..s.patch_len)
                            .map(|q| w[j * s.patch_len + q] * z[start + q])
                            .sum::<f64>();
                    min = min.min(acc.abs());
                    feats.push(acc.max(0.0));
                }
                start += s.stride;
            }
        }
        if !spec.head_hidden.is_empty() {
            let w = p.array("head.layer0.weight").unwrap();
            let bias = p.array("head.layer0.bias").unwrap();
            for o in 0..bias.len() {
                let acc: f64 = bias[o]
                    + (0..feats.len())
                        .map(|i| w[o * feats.len() + i] * feats[i])
                        .sum::<f64>();
                min = min.min(acc.abs());
            }
        }
    }
    min
}

/// Checks the model backward pass on `configs` random architectures whose
/// ReLU pre-activations all sit at least 1e-3 away from the kink.
pub fn model_gradient_check(seed: u64, configs: usize) -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = GradCheck::default();
    let mut checked = 0;
    while checked < configs {
        let spec = random_spec(&mut rng);
        let p = ModelParams::init(&spec, rng.random()).unwrap();
        let x = random_window(&mut rng, spec.n_vars, spec.lookback);
        if min_abs_preactivation(&p, &x) < 1e-3 {
            continue;
        }
        let upstream: Vec<f64> = (0..spec.n_vars * spec.horizon)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let trace = forward(&p, &x).unwrap();
        let analytic = backward(&trace, &upstream, &p).unwrap();
        total.merge(fd_check(&analytic, p.as_flat(), |flat| {
            let q = ModelParams::unflatten(&spec, flat).unwrap();
            let pred = forward(&q, &x).unwrap().prediction;
            pred.iter().zip(&upstream).map(|(a, b)| a * b).sum()
        }));
        checked += 1;
    }
    total
}

/// Gradients of the blended loss (random hyperparameters) and of MSE on random
/// vectors. Coordinates within 1e-3 of an absolute-value kink, in either the
/// error or the prediction, are left out.
pub fn loss_gradient_check(seed: u64, configs: usize) -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = GradCheck::default();
    for _ in 0..configs {
        let len = rng.random_range(1..40);
        let pred: Vec<f64> = (0..len).map(|_| rng.random_range(-3.0..3.0)).collect();
        let target: Vec<f64> = (0..len).map(|_| rng.random_range(-3.0..3.0)).collect();
        let hp = SqlHyperParams {
            c: rng.random_range(0.01..10.0),
            alpha: rng.random_range(0.0..1.0),
            beta: rng.random_range(0.0..0.5),
            gamma: rng.random_range(0.0..0.5),
        };
        let sql = sql_loss(&pred, &target, &hp).unwrap();
        let mse = mse_loss(&pred, &target).unwrap();
        let sql_fd = fd_check(&sql.grad_wrt_prediction, &pred, |x| {
            sql_loss(x, &target, &hp).unwrap().total
        });
        let mse_fd = fd_check(&mse.grad_wrt_prediction, &pred, |x| {
            mse_loss(x, &target).unwrap().total
        });
        let near_kink = |i: usize| (pred[i] - target[i]).abs() < 1e-3 || pred[i].abs() < 1e-3;
        if (0..len).any(near_kink) {
            // only the MSE check is meaningful for this draw
            total.merge(mse_fd);
        } else {
            total.merge(sql_fd);
            total.merge(mse_fd);
        }
    }
    total
}

/// Every start position `s` with `s + patch_len <= len`, stepping by `stride`.
pub fn brute_force_patches(row: &[f64], patch_len: usize, stride: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    let mut s = 0;
    while s + patch_len <= row.len() {
        out.push(row[s..s + patch_len].to_vec());
        s += stride;
    }
    out
}

/// Compares `multi_patch` with the brute-force slicer for every
/// `lookback <= max_len`, `patch_len <= lookback` and `stride <= max_stride`.
/// Returns (cases, mismatching cases).
pub fn patching_oracle_sweep(max_len: usize, max_stride: usize) -> (usize, usize) {
    let (mut cases, mut bad) = (0, 0);
    for len in 1..=max_len {
        let rows: Vec<Vec<f64>> = (0..2)
            .map(|n| (0..len).map(|t| (100 * n + t) as f64).collect())
            .collect();
        let x = SeriesMatrix::from_rows(rows.clone()).unwrap();
        for patch_len in 1..=len {
            for stride in 1..=max_stride {
                cases += 1;
                let spec = PatchScaleSpec::new(patch_len, stride);
                let got = multi_patch(&x, &MultiScaleConfig::single(spec)).unwrap();
                let ok = rows.iter().enumerate().all(|(n, row)| {
                    let want = brute_force_patches(row, patch_len, stride);
                    want.len() == got[0].num_patches
                        && want
                            .iter()
                            .enumerate()
                            .all(|(i, p)| got[0].patch(n, i) == p.as_slice())
                });
                if !ok {
                    bad += 1;
                }
            }
        }
    }
    (cases, bad)
}
