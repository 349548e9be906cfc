//! Dataset sources: the noisy-sinusoid generator, CSV ingestion and summary
//! statistics.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::SeriesMatrix;

/// One sinusoidal variable: `amplitude · sin(2π·t / period + phase)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrigVariable {
    pub amplitude: f64,
    pub phase: f64,
    pub period: f64,
}

/// Generator settings. `t` is the integer sample index.
///
/// Gaussian noise with standard deviation `noise_std` is added to the first
/// `ceil(noisy_fraction · num_points)` steps; the remaining suffix is the
/// exact sinusoid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrigSpec {
    pub num_points: usize,
    pub variables: Vec<TrigVariable>,
    pub noise_std: f64,
    pub noisy_fraction: f64,
    pub rng_seed: u64,
}

impl TrigSpec {
    /// Ten variables with amplitudes 1, 2, 4, …, 18, phases 0, 0.2, …, 1.8 and
    /// periods 1, …, 10 over 20,000 points, the first 80% noisy.
    pub fn ten_variable_preset(noise_std: f64, rng_seed: u64) -> Self {
        let amplitudes = [1.0, 2.0, 4.0, 6.0, 8.0, 10.0, 12.0, 14.0, 16.0, 18.0];
        let variables = amplitudes
            .iter()
            .enumerate()
            .map(|(i, &amplitude)| TrigVariable {
                amplitude,
                phase: 0.2 * i as f64,
                period: (i + 1) as f64,
            })
            .collect();
        Self {
            num_points: 20_000,
            variables,
            noise_std,
            noisy_fraction: 0.8,
            rng_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_points == 0 {
            return Err(Error::param("num_points", "must be positive"));
        }
        if self.variables.is_empty() {
            return Err(Error::param(
                "variables",
                "at least one variable is required",
            ));
        }
        if let Some(v) = self
            .variables
            .iter()
            .find(|v| v.period.is_nan() || v.period <= 0.0)
        {
            return Err(Error::param("period", format!("{} must be > 0", v.period)));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::param(
                "noise_std",
                format!("{} must be >= 0", self.noise_std),
            ));
        }
        if !(0.0..=1.0).contains(&self.noisy_fraction) {
            return Err(Error::param(
                "noisy_fraction",
                format!("{} not in [0,1]", self.noisy_fraction),
            ));
        }
        Ok(())
    }

    /// First step of the noiseless suffix.
    pub fn clean_start(&self) -> usize {
        ((self.noisy_fraction * self.num_points as f64).ceil() as usize).min(self.num_points)
    }

    /// Noise-free value of variable `n` at step `t`.
    pub fn clean_value(&self, n: usize, t: usize) -> f64 {
        let v = &self.variables[n];
        v.amplitude * (std::f64::consts::TAU * t as f64 / v.period + v.phase).sin()
    }
}

/// Samples the series. Variable `n` draws its noise from ChaCha stream `n`
/// of the seed, so adding variables leaves existing ones unchanged.
pub fn generate_trig(spec: &TrigSpec) -> Result<SeriesMatrix> {
    spec.validate()?;
    let noisy_until = spec.clean_start();
    let noise = (spec.noise_std > 0.0)
        .then(|| Normal::new(0.0, spec.noise_std))
        .transpose()
        .map_err(|e| Error::param("noise_std", e.to_string()))?;
    let rows = (0..spec.variables.len())
        .map(|n| {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
            rng.set_stream(n as u64);
            (0..spec.num_points)
                .map(|t| {
                    let clean = spec.clean_value(n, t);
                    match &noise {
                        Some(dist) if t < noisy_until => clean + dist.sample(&mut rng),
                        _ => clean,
                    }
                })
                .collect()
        })
        .collect();
    let names = (0..spec.variables.len())
        .map(|n| format!("sin{n}"))
        .collect();
    SeriesMatrix::from_rows_named(rows, names)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvOptions {
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
    #[serde(default = "default_true")]
    pub has_header: bool,
    /// Column to drop before parsing, typically a timestamp. Requires a header.
    #[serde(default)]
    pub time_column: Option<String>,
}

fn default_delimiter() -> char {
    ','
}

fn default_true() -> bool {
    true
}

impl Default for CsvOptions {
    fn default() -> Self {
        Self {
            delimiter: ',',
            has_header: true,
            time_column: None,
        }
    }
}

/// Reads a one-row-per-timestep table into a variables-first matrix.
pub fn load_csv(path: &Path, options: &CsvOptions) -> Result<SeriesMatrix> {
    let parse_err = |line: u64, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    if !options.delimiter.is_ascii() {
        return Err(Error::param("delimiter", "must be an ASCII character"));
    }
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(options.delimiter as u8)
        .has_headers(options.has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)?;

    let headers: Option<Vec<String>> = if options.has_header {
        Some(reader.headers()?.iter().map(str::to_owned).collect())
    } else {
        None
    };
    let drop_index = match (&options.time_column, &headers) {
        (Some(name), Some(h)) => Some(
            h.iter()
                .position(|c| c == name)
                .ok_or_else(|| parse_err(1, format!("time column {name:?} not in header")))?,
        ),
        (Some(_), None) => {
            return Err(Error::param(
                "time_column",
                "dropping a named column needs a header",
            ))
        }
        _ => None,
    };

    let mut columns: Vec<Vec<f64>> = Vec::new();
    let mut width = headers.as_ref().map(Vec::len);
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let expected = *width.get_or_insert(record.len());
        if record.len() != expected {
            return Err(parse_err(
                line,
                format!("expected {expected} fields, found {}", record.len()),
            ));
        }
        if columns.is_empty() {
            columns = vec![Vec::new(); expected - usize::from(drop_index.is_some())];
        }
        let mut col = 0;
        for (j, cell) in record.iter().enumerate() {
            if Some(j) == drop_index {
                continue;
            }
            let value: f64 = cell.parse().map_err(|_| {
                parse_err(line, format!("column {}: non-numeric cell {cell:?}", j + 1))
            })?;
            if !value.is_finite() {
                return Err(parse_err(
                    line,
                    format!("column {}: non-finite value {cell:?}", j + 1),
                ));
            }
            columns[col].push(value);
            col += 1;
        }
    }
    if columns.is_empty() || columns[0].is_empty() {
        return Err(parse_err(1, "no data rows".into()));
    }
    let names = match headers {
        Some(h) => h
            .into_iter()
            .enumerate()
            .filter(|(j, _)| Some(*j) != drop_index)
            .map(|(_, name)| name)
            .collect(),
        None => (0..columns.len()).map(|i| format!("var{i}")).collect(),
    };
    SeriesMatrix::from_rows_named(columns, names)
}

/// Writes one row per timestep with a header of variable names. Values use
/// the shortest representation that parses back to the same `f64`.
pub fn write_csv(series: &SeriesMatrix, path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(File::create(path)?);
    writeln!(out, "{}", series.variable_names().join(","))?;
    for t in 0..series.len() {
        let row: Vec<String> = (0..series.n_vars())
            .map(|n| series.get(n, t).to_string())
            .collect();
        writeln!(out, "{}", row.join(","))?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableStats {
    pub name: String,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub num_features: usize,
    pub num_samples: usize,
    pub interval: Option<String>,
    pub variables: Vec<VariableStats>,
}

/// Per-variable mean, population std, min and max.
pub fn dataset_stats(series: &SeriesMatrix) -> DatasetStats {
    let len = series.len() as f64;
    let variables = series
        .rows()
        .zip(series.variable_names())
        .map(|(row, name)| {
            let mean = row.iter().sum::<f64>() / len;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / len;
            VariableStats {
                name: name.clone(),
                mean,
                std: var.sqrt(),
                min: row.iter().copied().fold(f64::INFINITY, f64::min),
                max: row.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            }
        })
        .collect();
    DatasetStats {
        num_features: series.n_vars(),
        num_samples: series.len(),
        interval: series.interval_note().map(str::to_owned),
        variables,
    }
}

/// Per-variable z-scoring with statistics fitted on one split and reused on
/// the others.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(series: &SeriesMatrix) -> Self {
        let stats = dataset_stats(series);
        Self {
            mean: stats.variables.iter().map(|v| v.mean).collect(),
            std: stats
                .variables
                .iter()
                .map(|v| if v.std > 0.0 { v.std } else { 1.0 })
                .collect(),
        }
    }

    pub fn transform(&self, series: &SeriesMatrix) -> Result<SeriesMatrix> {
        if series.n_vars() != self.mean.len() {
            return Err(Error::shape(
                "standardizer variables",
                self.mean.len(),
                series.n_vars(),
            ));
        }
        let values = series
            .rows()
            .enumerate()
            .flat_map(|(n, row)| row.iter().map(move |v| (v - self.mean[n]) / self.std[n]))
            .collect();
        Ok(
            SeriesMatrix::from_flat(values, series.n_vars(), series.len())?
                .with_names(series.variable_names().to_vec()),
        )
    }
}

/// Source of a dataset in an experiment config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetSource {
    Trig(TrigSpec),
    Csv {
        path: PathBuf,
        #[serde(default)]
        options: CsvOptions,
    },
}

impl DatasetSource {
    pub fn load(&self) -> Result<SeriesMatrix> {
        match self {
            DatasetSource::Trig(spec) => generate_trig(spec),
            DatasetSource::Csv { path, options } => load_csv(path, options),
        }
    }
}
