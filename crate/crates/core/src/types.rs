//! Series containers, supervised windows and chronological splits.
//!
//! Everything is stored variables-first: a matrix with `N` variables and `L`
//! steps keeps each variable's history in one contiguous row.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A dense `N × len` block of finite values, one row per variable.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesMatrix {
    values: Vec<f64>,
    n_vars: usize,
    len: usize,
    variable_names: Vec<String>,
    interval_note: Option<String>,
}

impl SeriesMatrix {
    /// Builds a matrix from per-variable rows. Rows must be nonempty, equally
    /// long and finite.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let names = (0..rows.len()).map(|i| format!("var{i}")).collect();
        Self::from_rows_named(rows, names)
    }

    pub fn from_rows_named(rows: Vec<Vec<f64>>, variable_names: Vec<String>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::shape("series rows", "at least one variable", 0));
        }
        let len = rows[0].len();
        if len == 0 {
            return Err(Error::shape("series length", ">= 1 step", 0));
        }
        if variable_names.len() != rows.len() {
            return Err(Error::shape(
                "variable names",
                rows.len(),
                variable_names.len(),
            ));
        }
        let n_vars = rows.len();
        let mut values = Vec::with_capacity(n_vars * len);
        for (n, row) in rows.into_iter().enumerate() {
            if row.len() != len {
                return Err(Error::shape(format!("row {n} length"), len, row.len()));
            }
            values.extend(row);
        }
        Self::from_flat(values, n_vars, len).map(|m| m.with_names(variable_names))
    }

    /// Wraps a row-major buffer of `n_vars * len` values.
    pub fn from_flat(values: Vec<f64>, n_vars: usize, len: usize) -> Result<Self> {
        if n_vars == 0 || len == 0 {
            return Err(Error::shape(
                "series dims",
                "N >= 1 and len >= 1",
                format!("{n_vars}x{len}"),
            ));
        }
        if values.len() != n_vars * len {
            return Err(Error::shape("series buffer", n_vars * len, values.len()));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                variable: pos / len,
                step: pos % len,
            });
        }
        Ok(Self {
            values,
            n_vars,
            len,
            variable_names: (0..n_vars).map(|i| format!("var{i}")).collect(),
            interval_note: None,
        })
    }

    pub fn with_names(mut self, names: Vec<String>) -> Self {
        assert_eq!(names.len(), self.n_vars, "one name per variable");
        self.variable_names = names;
        self
    }

    pub fn with_interval_note(mut self, note: impl Into<String>) -> Self {
        self.interval_note = Some(note.into());
        self
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn row(&self, n: usize) -> &[f64] {
        &self.values[n * self.len..(n + 1) * self.len]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.len)
    }

    pub fn get(&self, n: usize, t: usize) -> f64 {
        self.values[n * self.len + t]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn variable_names(&self) -> &[String] {
        &self.variable_names
    }

    pub fn interval_note(&self) -> Option<&str> {
        self.interval_note.as_deref()
    }

    /// Copies the column range `cols` of every variable into a new matrix.
    pub fn columns(&self, cols: Range<usize>) -> SeriesMatrix {
        assert!(
            cols.start < cols.end && cols.end <= self.len,
            "column range out of bounds"
        );
        let width = cols.end - cols.start;
        let mut values = Vec::with_capacity(self.n_vars * width);
        for row in self.rows() {
            values.extend_from_slice(&row[cols.clone()]);
        }
        SeriesMatrix {
            values,
            n_vars: self.n_vars,
            len: width,
            variable_names: self.variable_names.clone(),
            interval_note: self.interval_note.clone(),
        }
    }

    /// Joins matrices with the same variables along time.
    pub fn concat_columns(parts: &[&SeriesMatrix]) -> Result<SeriesMatrix> {
        let first = parts
            .first()
            .ok_or_else(|| Error::shape("concat", "at least one part", 0))?;
        let n_vars = first.n_vars;
        let len: usize = parts.iter().map(|p| p.len).sum();
        let mut values = Vec::with_capacity(n_vars * len);
        for n in 0..n_vars {
            for p in parts {
                if p.n_vars != n_vars {
                    return Err(Error::shape("concat variables", n_vars, p.n_vars));
                }
                values.extend_from_slice(p.row(n));
            }
        }
        Ok(SeriesMatrix {
            values,
            n_vars,
            len,
            variable_names: first.variable_names.clone(),
            interval_note: first.interval_note.clone(),
        })
    }
}

/// One supervised example: `L` observed steps followed by `T` target steps.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesWindow {
    pub input: SeriesMatrix,
    pub target: SeriesMatrix,
    pub origin_index: usize,
}

impl SeriesWindow {
    pub fn lookback(&self) -> usize {
        self.input.len()
    }

    pub fn horizon(&self) -> usize {
        self.target.len()
    }

    pub fn n_vars(&self) -> usize {
        self.input.n_vars()
    }
}

/// Chronological train/validation/test fractions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub val_fraction: f64,
    pub test_fraction: f64,
}

impl SplitSpec {
    pub fn new(train: f64, val: f64, test: f64) -> Result<Self> {
        let spec = Self {
            train_fraction: train,
            val_fraction: val,
            test_fraction: test,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let Self {
            train_fraction: tr,
            val_fraction: va,
            test_fraction: te,
        } = *self;
        if !(tr > 0.0 && tr < 1.0) {
            return Err(Error::param("train_fraction", format!("{tr} not in (0,1)")));
        }
        if !(0.0..1.0).contains(&va) {
            return Err(Error::param("val_fraction", format!("{va} not in [0,1)")));
        }
        if !(te > 0.0 && te < 1.0) {
            return Err(Error::param("test_fraction", format!("{te} not in (0,1)")));
        }
        if ((tr + va + te) - 1.0).abs() > 1e-9 {
            return Err(Error::param(
                "split fractions",
                format!("sum to {} instead of 1", tr + va + te),
            ));
        }
        Ok(())
    }
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_fraction: 0.7,
            val_fraction: 0.1,
            test_fraction: 0.2,
        }
    }
}

/// Slides a window of `lookback + horizon` columns over the series.
///
/// Window `i` starts at column `i * stride`; the last window is the final one
/// that still fits entirely.
pub fn make_windows(
    series: &SeriesMatrix,
    lookback: usize,
    horizon: usize,
    stride: usize,
) -> Result<Vec<SeriesWindow>> {
    if lookback == 0 || horizon == 0 || stride == 0 {
        return Err(Error::param(
            "window",
            format!("lookback {lookback}, horizon {horizon}, stride {stride} must all be positive"),
        ));
    }
    let span = lookback + horizon;
    if series.len() < span {
        return Err(Error::InsufficientLength {
            required: span,
            actual: series.len(),
        });
    }
    let count = (series.len() - span) / stride + 1;
    Ok((0..count)
        .map(|i| {
            let o = i * stride;
            SeriesWindow {
                input: series.columns(o..o + lookback),
                target: series.columns(o + lookback..o + span),
                origin_index: o,
            }
        })
        .collect())
}

/// `floor(len * fraction)`, nudged up by a relative 1e-9 so that sums such as
/// `0.7 + 0.1 = 0.7999…` still land on the intended step.
fn boundary(len: usize, fraction: f64) -> usize {
    let x = len as f64 * fraction;
    ((x + 1e-9 * x.abs().max(1.0)).floor() as usize).min(len)
}

/// Cuts the series into contiguous train/val/test blocks at
/// `floor(len * cumulative_fraction)`.
pub fn split_series(
    series: &SeriesMatrix,
    spec: &SplitSpec,
) -> Result<(SeriesMatrix, Option<SeriesMatrix>, SeriesMatrix)> {
    spec.validate()?;
    let len = series.len();
    if len < 3 {
        return Err(Error::InsufficientLength {
            required: 3,
            actual: len,
        });
    }
    let b1 = boundary(len, spec.train_fraction);
    let b2 = boundary(len, spec.train_fraction + spec.val_fraction);
    if b1 == 0 {
        return Err(Error::DegenerateSplit {
            part: "train",
            fraction: spec.train_fraction,
        });
    }
    if spec.val_fraction > 0.0 && b2 == b1 {
        return Err(Error::DegenerateSplit {
            part: "val",
            fraction: spec.val_fraction,
        });
    }
    if b2 >= len {
        return Err(Error::DegenerateSplit {
            part: "test",
            fraction: spec.test_fraction,
        });
    }
    let val = (b2 > b1).then(|| series.columns(b1..b2));
    Ok((series.columns(0..b1), val, series.columns(b2..len)))
}
