//! Single- and multi-scale patching.
//!
//! With 1-based patch index `i`, patch `(n, i)` covers input columns
//! `(i-1)*stride .. (i-1)*stride + patch_len` of variable `n`, and a window of
//! length `L` yields `floor((L - patch_len) / stride) + 1` patches. Internally
//! indices are 0-based. No end padding is added: trailing steps that cannot
//! fill a whole patch are dropped.
//!
//! Each scale produces its own patch count, so the per-scale count is carried
//! on the tensor rather than shared across scales.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::SeriesMatrix;

/// Patch length and sliding stride for one scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchScaleSpec {
    pub patch_len: usize,
    pub stride: usize,
}

impl PatchScaleSpec {
    pub const fn new(patch_len: usize, stride: usize) -> Self {
        Self { patch_len, stride }
    }

    /// Number of patches over a window of `lookback` steps.
    pub fn num_patches(&self, lookback: usize) -> Result<usize> {
        self.check(lookback)?;
        Ok((lookback - self.patch_len) / self.stride + 1)
    }

    fn check(&self, lookback: usize) -> Result<()> {
        if self.patch_len == 0 || self.stride == 0 {
            return Err(Error::param(
                "patch scale",
                format!(
                    "patch_len {} and stride {} must be >= 1",
                    self.patch_len, self.stride
                ),
            ));
        }
        if self.patch_len > lookback {
            return Err(Error::PatchLongerThanWindow {
                patch_len: self.patch_len,
                lookback,
            });
        }
        Ok(())
    }
}

/// Ordered list of patch scales.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MultiScaleConfig {
    pub scales: Vec<PatchScaleSpec>,
}

impl MultiScaleConfig {
    pub fn new(scales: Vec<PatchScaleSpec>) -> Self {
        Self { scales }
    }

    pub fn single(scale: PatchScaleSpec) -> Self {
        Self {
            scales: vec![scale],
        }
    }

    pub fn len(&self) -> usize {
        self.scales.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scales.is_empty()
    }

    /// Checks that every scale fits `lookback`; errors name the scale index.
    pub fn validate(&self, lookback: usize) -> Result<()> {
        if self.scales.is_empty() {
            return Err(Error::param(
                "scales",
                "at least one patch scale is required",
            ));
        }
        for (index, s) in self.scales.iter().enumerate() {
            s.check(lookback).map_err(|e| Error::Scale {
                index,
                source: Box::new(e),
            })?;
        }
        Ok(())
    }

    pub fn patch_counts(&self, lookback: usize) -> Result<Vec<usize>> {
        self.validate(lookback)?;
        self.scales
            .iter()
            .map(|s| s.num_patches(lookback))
            .collect()
    }
}

/// Patches of one scale, laid out `N × num_patches × patch_len`.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchTensor {
    patches: Vec<f64>,
    pub scale: PatchScaleSpec,
    pub n_vars: usize,
    pub num_patches: usize,
}

impl PatchTensor {
    /// Patch `i` (0-based) of variable `n`.
    pub fn patch(&self, n: usize, i: usize) -> &[f64] {
        let p = self.scale.patch_len;
        let start = (n * self.num_patches + i) * p;
        &self.patches[start..start + p]
    }

    /// All patches of variable `n`, concatenated.
    pub fn variable(&self, n: usize) -> &[f64] {
        let block = self.num_patches * self.scale.patch_len;
        &self.patches[n * block..(n + 1) * block]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.patches
    }
}

pub fn patch(input: &SeriesMatrix, scale: PatchScaleSpec) -> Result<PatchTensor> {
    patch_rows(input.rows(), input.n_vars(), input.len(), scale)
}

pub(crate) fn patch_rows<'a>(
    rows: impl Iterator<Item = &'a [f64]>,
    n_vars: usize,
    lookback: usize,
    scale: PatchScaleSpec,
) -> Result<PatchTensor> {
    let num_patches = scale.num_patches(lookback)?;
    let mut patches = Vec::with_capacity(n_vars * num_patches * scale.patch_len);
    for row in rows {
        for i in 0..num_patches {
            let start = i * scale.stride;
            patches.extend_from_slice(&row[start..start + scale.patch_len]);
        }
    }
    Ok(PatchTensor {
        patches,
        scale,
        n_vars,
        num_patches,
    })
}

/// Applies every scale of `config` in order.
pub fn multi_patch(input: &SeriesMatrix, config: &MultiScaleConfig) -> Result<Vec<PatchTensor>> {
    config.validate(input.len())?;
    config
        .scales
        .iter()
        .enumerate()
        .map(|(index, &s)| {
            patch(input, s).map_err(|e| Error::Scale {
                index,
                source: Box::new(e),
            })
        })
        .collect()
}
