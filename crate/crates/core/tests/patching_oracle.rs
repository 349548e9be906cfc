//! Patch extraction against an independent slicer, plus patch counts of the
//! long-lookback and short-lookback scale sets.

mod common;

use common::patching_oracle_sweep;
use timesql::patching::{MultiScaleConfig, PatchScaleSpec};

#[test]
fn multi_patch_matches_brute_force() {
    let (cases, bad) = patching_oracle_sweep(64, 8);
    assert_eq!(cases, 8 * 64 * 65 / 2);
    assert_eq!(bad, 0);
}

#[test]
fn long_lookback_scale_counts() {
    let scales = MultiScaleConfig::new(vec![
        PatchScaleSpec::new(16, 8),
        PatchScaleSpec::new(48, 24),
        PatchScaleSpec::new(96, 48),
    ]);
    assert_eq!(scales.patch_counts(336).unwrap(), vec![41, 13, 6]);
}

#[test]
fn short_lookback_scale_counts() {
    let scales = MultiScaleConfig::new(vec![
        PatchScaleSpec::new(34, 2),
        PatchScaleSpec::new(68, 4),
        PatchScaleSpec::new(102, 12),
    ]);
    assert_eq!(scales.patch_counts(104).unwrap(), vec![36, 10, 1]);
}
