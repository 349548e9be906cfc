//! Forward pass against a straight-line reference and backward pass against
//! central finite differences.

mod common;

use common::{random_spec, random_window, reference_forward};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use timesql::model::{forward, ModelParams, ModelSpec};
use timesql::patching::{MultiScaleConfig, PatchScaleSpec};

#[test]
fn forward_matches_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let fixed = ModelSpec {
        n_vars: 2,
        lookback: 16,
        horizon: 4,
        scales: MultiScaleConfig::new(vec![PatchScaleSpec::new(4, 2), PatchScaleSpec::new(8, 4)]),
        hidden: 3,
        encoder: Default::default(),
        head_hidden: vec![],
        revin: true,
        revin_affine: false,
    };
    for i in 0..30 {
        let spec = if i == 0 {
            fixed.clone()
        } else {
            random_spec(&mut rng)
        };
        let mut p = ModelParams::init(&spec, i).unwrap();
        if spec.revin_affine {
            // move the affine map away from identity
            let n = spec.n_vars;
            let len = p.len();
            for v in &mut p.as_flat_mut()[len - 2 * n..] {
                *v += rng.random_range(-0.5..0.5);
            }
        }
        let x = random_window(&mut rng, spec.n_vars, spec.lookback);
        let got = forward(&p, &x).unwrap().prediction;
        let want = reference_forward(&p, &x);
        for (a, b) in got.iter().zip(&want) {
            assert!(
                (a - b).abs() <= 1e-10 * (1.0 + b.abs()),
                "{a} vs {b} for {spec:?}"
            );
        }
    }
}

#[test]
fn backward_matches_central_differences() {
    let check = common::model_gradient_check(7, 25);
    assert_eq!(check.failures, 0, "{check:?}");
    assert!(check.coords > 1000);
}
