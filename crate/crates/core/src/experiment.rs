//! Config-driven experiment runs: the noisy-sinusoid suite, ablations,
//! single training runs and plot-ready exports.

use std::collections::HashSet;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::data::{DatasetSource, Standardizer, TrigSpec};
use crate::error::{Error, Result};
use crate::losses::{rqf_grad, rqf_loss, LossChoice};
use crate::model::{save_checkpoint, EncoderKind, ModelParams, ModelSpec};
use crate::patching::{MultiScaleConfig, PatchScaleSpec};
use crate::training::{evaluate, predict, train, EvalMetrics, TrainConfig, TrainHistory};
use crate::types::{make_windows, split_series, SeriesMatrix, SeriesWindow, SplitSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSection {
    pub hidden: usize,
    pub encoder: EncoderKind,
    pub head_hidden: Vec<usize>,
    pub revin: bool,
    pub revin_affine: bool,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            hidden: 16,
            encoder: EncoderKind::Mlp,
            head_hidden: Vec::new(),
            revin: true,
            revin_affine: false,
        }
    }
}

/// A named variant of the base config. Unset fields keep the base value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmSpec {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss: Option<LossChoice>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scales: Option<MultiScaleConfig>,
}

impl ArmSpec {
    pub fn named(name: &str) -> Self {
        Self {
            name: name.to_owned(),
            loss: None,
            alpha: None,
            beta: None,
            gamma: None,
            scales: None,
        }
    }

    pub fn with_loss(name: &str, loss: LossChoice) -> Self {
        Self {
            loss: Some(loss),
            ..Self::named(name)
        }
    }

    /// Full loss and the four single-deletion variants. Dropping the RQF
    /// term keeps MAE and the output penalties (`α = 0`); dropping MAE keeps
    /// RQF and the penalties (`α = 1`).
    pub fn loss_ablation_set() -> Vec<ArmSpec> {
        vec![
            Self::with_loss("sql", LossChoice::Sql),
            ArmSpec {
                alpha: Some(0.0),
                ..Self::with_loss("no_rqf", LossChoice::Sql)
            },
            ArmSpec {
                beta: Some(0.0),
                gamma: Some(0.0),
                ..Self::with_loss("no_or", LossChoice::Sql)
            },
            ArmSpec {
                alpha: Some(1.0),
                ..Self::with_loss("no_mae", LossChoice::Sql)
            },
            Self::with_loss("mse", LossChoice::Mse),
        ]
    }

    /// Base scales against only the first of them.
    pub fn scale_ablation_set(base: &MultiScaleConfig) -> Vec<ArmSpec> {
        vec![
            Self::named("multi_scale"),
            ArmSpec {
                scales: Some(MultiScaleConfig::single(base.scales[0])),
                ..Self::named("single_scale")
            },
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    pub split: SplitSpec,
    pub lookback: usize,
    pub horizon: usize,
    pub scales: MultiScaleConfig,
    pub model: ModelSection,
    pub train: TrainConfig,
    pub arms: Vec<ArmSpec>,
    pub output_dir: PathBuf,
    /// Z-score every variable with statistics of the training block before
    /// windowing; metrics are then in standardized units.
    pub standardize: bool,
    /// Offset between consecutive training windows.
    pub window_stride: usize,
    /// Offset between consecutive validation and test windows.
    pub eval_stride: usize,
    /// Noise levels of the simulation suite; replaces the generator's std.
    pub noise_stds: Vec<f64>,
    /// Each seed drives data noise, initialization and batch order.
    pub seeds: Vec<u64>,
    /// Horizon sweep for ablations; empty means only `horizon`.
    pub horizons: Vec<usize>,
}

impl Default for ExperimentConfig {
    /// Desk-scale noisy-sinusoid setup.
    fn default() -> Self {
        Self {
            dataset: DatasetSource::Trig(TrigSpec::ten_variable_preset(0.4, 0)),
            split: SplitSpec::default(),
            lookback: 64,
            horizon: 16,
            scales: MultiScaleConfig::new(vec![
                PatchScaleSpec::new(8, 4),
                PatchScaleSpec::new(16, 8),
                PatchScaleSpec::new(32, 16),
            ]),
            model: ModelSection::default(),
            train: TrainConfig {
                learning_rate: 1e-3,
                batch_size: 64,
                max_epochs: 30,
                patience: 5,
                max_batches_per_epoch: Some(60),
                ..TrainConfig::default()
            },
            arms: vec![
                ArmSpec::with_loss("rqf", LossChoice::RqfOnly),
                ArmSpec::with_loss("mse", LossChoice::Mse),
            ],
            output_dir: PathBuf::from("runs"),
            standardize: true,
            window_stride: 1,
            eval_stride: 16,
            noise_stds: vec![0.1, 0.4, 0.7, 1.0],
            seeds: vec![0, 1, 2],
            horizons: Vec::new(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let config_err = |msg: String| Error::Config(msg);
        self.split.validate()?;
        self.train.validate()?;
        if self.window_stride == 0 || self.eval_stride == 0 {
            return Err(config_err("window strides must be positive".into()));
        }
        if self.arms.is_empty() {
            return Err(config_err("at least one arm is required".into()));
        }
        let mut names = HashSet::new();
        for arm in &self.arms {
            if !names.insert(arm.name.as_str()) {
                return Err(config_err(format!("duplicate arm name {:?}", arm.name)));
            }
        }
        if self
            .noise_stds
            .iter()
            .any(|s| !(s.is_finite() && *s >= 0.0))
        {
            return Err(config_err("noise_stds must be finite and >= 0".into()));
        }
        for &horizon in self.sweep_horizons().iter() {
            for arm in &self.arms {
                let (spec, train) = self.resolve_arm(arm, 1, horizon);
                spec.validate()
                    .and_then(|_| train.validate())
                    .map_err(|e| {
                        config_err(format!("arm {:?}, horizon {horizon}: {e}", arm.name))
                    })?;
            }
        }
        Ok(())
    }

    pub fn sweep_horizons(&self) -> Vec<usize> {
        if self.horizons.is_empty() {
            vec![self.horizon]
        } else {
            self.horizons.clone()
        }
    }

    /// Model and training settings of one arm.
    pub fn resolve_arm(
        &self,
        arm: &ArmSpec,
        n_vars: usize,
        horizon: usize,
    ) -> (ModelSpec, TrainConfig) {
        let spec = ModelSpec {
            n_vars,
            lookback: self.lookback,
            horizon,
            scales: arm.scales.clone().unwrap_or_else(|| self.scales.clone()),
            hidden: self.model.hidden,
            encoder: self.model.encoder,
            head_hidden: self.model.head_hidden.clone(),
            revin: self.model.revin,
            revin_affine: self.model.revin_affine,
        };
        let mut train = self.train.clone();
        if let Some(loss) = arm.loss {
            train.loss = loss;
        }
        if let Some(a) = arm.alpha {
            train.hp.alpha = a;
        }
        if let Some(b) = arm.beta {
            train.hp.beta = b;
        }
        if let Some(g) = arm.gamma {
            train.hp.gamma = g;
        }
        (spec, train)
    }

    /// Dataset for one seed. Generated data takes its noise seed from `seed`
    /// and, when given, its std from `noise_std`.
    pub fn load_dataset(&self, seed: u64, noise_std: Option<f64>) -> Result<SeriesMatrix> {
        match &self.dataset {
            DatasetSource::Trig(spec) => {
                let spec = TrigSpec {
                    rng_seed: seed,
                    noise_std: noise_std.unwrap_or(spec.noise_std),
                    ..spec.clone()
                };
                DatasetSource::Trig(spec).load()
            }
            other => other.load(),
        }
    }
}

/// Reads a JSON config (or starts from the defaults) and applies dotted-path
/// overrides such as `train.learning_rate=0.01`.
pub fn load_config(
    path: Option<&Path>,
    overrides: &[(String, String)],
) -> Result<ExperimentConfig> {
    let mut value = match path {
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?;
            let parsed: ExperimentConfig = serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
            serde_json::to_value(parsed)?
        }
        None => serde_json::to_value(ExperimentConfig::default())?,
    };
    for (key, raw) in overrides {
        apply_override(&mut value, key, raw)?;
    }
    let config: ExperimentConfig = serde_json::from_value(value)
        .map_err(|e| Error::Config(format!("after overrides: {e}")))?;
    config.validate()?;
    Ok(config)
}

/// Sets the leaf at a dotted path. The value is parsed as JSON when possible
/// and taken as a string otherwise. Numeric segments index into arrays.
pub fn apply_override(root: &mut Value, key: &str, raw: &str) -> Result<()> {
    let unknown = || Error::Config(format!("unknown config field {key:?}"));
    let mut node = root;
    for part in key.split('.') {
        node = match node {
            Value::Object(map) => map.get_mut(part).ok_or_else(unknown)?,
            Value::Array(items) => {
                let i: usize = part.parse().map_err(|_| unknown())?;
                items.get_mut(i).ok_or_else(unknown)?
            }
            _ => return Err(unknown()),
        };
    }
    *node = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_owned()));
    Ok(())
}

/// Windows of one dataset, standardized if configured.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub n_vars: usize,
    pub train: Vec<SeriesWindow>,
    pub val: Vec<SeriesWindow>,
    pub test: Vec<SeriesWindow>,
    pub standardizer: Option<Standardizer>,
}

pub fn prepare_data(
    config: &ExperimentConfig,
    series: &SeriesMatrix,
    horizon: usize,
) -> Result<PreparedData> {
    let (train_s, val_s, test_s) = split_series(series, &config.split)?;
    let standardizer = config.standardize.then(|| Standardizer::fit(&train_s));
    let apply = |s: &SeriesMatrix| match &standardizer {
        Some(z) => z.transform(s),
        None => Ok(s.clone()),
    };
    let windows =
        |s: &SeriesMatrix, stride| make_windows(&apply(s)?, config.lookback, horizon, stride);
    Ok(PreparedData {
        n_vars: series.n_vars(),
        train: windows(&train_s, config.window_stride)?,
        val: match &val_s {
            Some(v) => windows(v, config.eval_stride)?,
            None => Vec::new(),
        },
        test: windows(&test_s, config.eval_stride)?,
        standardizer,
    })
}

#[derive(Debug, Clone)]
pub struct CellRun {
    pub params: ModelParams,
    pub history: TrainHistory,
    pub test: EvalMetrics,
}

/// Trains and tests one arm. All arms given the same seed start from the
/// same initialization and see batches in the same order.
pub fn run_cell(
    config: &ExperimentConfig,
    data: &PreparedData,
    arm: &ArmSpec,
    horizon: usize,
    seed: u64,
) -> Result<CellRun> {
    let (spec, mut train_cfg) = config.resolve_arm(arm, data.n_vars, horizon);
    train_cfg.seed = seed;
    let init = ModelParams::init(&spec, seed)?;
    let outcome = train(init, &data.train, &data.val, &train_cfg)?;
    let test = evaluate(&outcome.params, &data.test)?;
    Ok(CellRun {
        params: outcome.params,
        history: outcome.history,
        test,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellStatus {
    Ok,
    Diverged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationRow {
    pub std: f64,
    pub arm: String,
    pub seed: u64,
    pub test_mse: f64,
    pub test_mae: f64,
    pub status: CellStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub arm: String,
    pub horizon: usize,
    pub seed: u64,
    pub test_mse: f64,
    pub test_mae: f64,
    pub initial_val_mse: Option<f64>,
    pub status: CellStatus,
}

fn cell_result(result: Result<CellRun>) -> Result<(f64, f64, Option<f64>, CellStatus)> {
    match result {
        Ok(run) => Ok((
            run.test.mse,
            run.test.mae,
            run.history.initial_val_mse,
            CellStatus::Ok,
        )),
        Err(Error::Divergence { .. }) => Ok((f64::NAN, f64::NAN, None, CellStatus::Diverged)),
        Err(e) => Err(e),
    }
}

/// Noise std × seed × arm grid on generated data, tested on the clean suffix.
pub fn run_simulation_suite(config: &ExperimentConfig) -> Result<Vec<SimulationRow>> {
    config.validate()?;
    if !matches!(config.dataset, DatasetSource::Trig(_)) {
        return Err(Error::Config(
            "the simulation suite needs a generated dataset".into(),
        ));
    }
    if config.noise_stds.is_empty() || config.seeds.is_empty() {
        return Err(Error::Config(
            "noise_stds and seeds must be nonempty".into(),
        ));
    }
    let mut rows = Vec::new();
    for &std in &config.noise_stds {
        for &seed in &config.seeds {
            let series = config.load_dataset(seed, Some(std))?;
            let data = prepare_data(config, &series, config.horizon)?;
            for arm in &config.arms {
                let (test_mse, test_mae, _, status) =
                    cell_result(run_cell(config, &data, arm, config.horizon, seed))?;
                rows.push(SimulationRow {
                    std,
                    arm: arm.name.clone(),
                    seed,
                    test_mse,
                    test_mae,
                    status,
                });
            }
        }
    }
    Ok(rows)
}

/// Arm × horizon × seed grid on the configured dataset.
pub fn run_ablation(config: &ExperimentConfig) -> Result<Vec<AblationRow>> {
    config.validate()?;
    if config.seeds.is_empty() {
        return Err(Error::Config("seeds must be nonempty".into()));
    }
    let mut rows = Vec::new();
    for &seed in &config.seeds {
        let series = config.load_dataset(seed, None)?;
        for horizon in config.sweep_horizons() {
            let data = prepare_data(config, &series, horizon)?;
            for arm in &config.arms {
                let (test_mse, test_mae, initial_val_mse, status) =
                    cell_result(run_cell(config, &data, arm, horizon, seed))?;
                rows.push(AblationRow {
                    arm: arm.name.clone(),
                    horizon,
                    seed,
                    test_mse,
                    test_mae,
                    initial_val_mse,
                    status,
                });
            }
        }
    }
    Ok(rows)
}

pub fn all_diverged<'a>(statuses: impl IntoIterator<Item = &'a CellStatus>) -> bool {
    let mut any = false;
    for s in statuses {
        if *s == CellStatus::Ok {
            return false;
        }
        any = true;
    }
    any
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub config: ExperimentConfig,
    pub outputs: Vec<String>,
}

pub fn write_manifest(
    dir: &Path,
    command: &str,
    config: &ExperimentConfig,
    outputs: &[&str],
) -> Result<()> {
    let manifest = RunManifest {
        command: command.to_owned(),
        version: env!("CARGO_PKG_VERSION").to_owned(),
        config: config.clone(),
        outputs: outputs.iter().map(|s| s.to_string()).collect(),
    };
    write_json(&dir.join("manifest.json"), &manifest)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

pub fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Forecast of one test window in original units when the data was
/// standardized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionSample {
    pub origin_index: usize,
    pub variable_names: Vec<String>,
    /// Per variable, the lookback followed by the target steps.
    pub truth: Vec<Vec<f64>>,
    /// Per variable, `horizon` forecast steps.
    pub prediction: Vec<Vec<f64>>,
}

fn prediction_sample(
    params: &ModelParams,
    window: &SeriesWindow,
    names: &[String],
    standardizer: Option<&Standardizer>,
) -> Result<PredictionSample> {
    let pred = predict(params, window)?;
    let horizon = window.horizon();
    let unscale = |n: usize, v: f64| match standardizer {
        Some(z) => v * z.std[n] + z.mean[n],
        None => v,
    };
    let truth = (0..window.n_vars())
        .map(|n| {
            window
                .input
                .row(n)
                .iter()
                .chain(window.target.row(n))
                .map(|&v| unscale(n, v))
                .collect()
        })
        .collect();
    let prediction = pred
        .chunks_exact(horizon)
        .enumerate()
        .map(|(n, row)| row.iter().map(|&v| unscale(n, v)).collect())
        .collect();
    Ok(PredictionSample {
        origin_index: window.origin_index,
        variable_names: names.to_vec(),
        truth,
        prediction,
    })
}

#[derive(Debug, Clone)]
pub struct TrainRun {
    pub arm: String,
    pub run: CellRun,
    pub sample: PredictionSample,
    pub standardizer: Option<Standardizer>,
}

/// Trains the named arm (or the first) on the configured dataset.
pub fn run_training(config: &ExperimentConfig, arm: Option<&str>, seed: u64) -> Result<TrainRun> {
    config.validate()?;
    let arm = match arm {
        Some(name) => config
            .arms
            .iter()
            .find(|a| a.name == name)
            .ok_or_else(|| Error::Config(format!("no arm named {name:?}")))?,
        None => &config.arms[0],
    };
    let series = config.load_dataset(seed, None)?;
    let data = prepare_data(config, &series, config.horizon)?;
    let run = run_cell(config, &data, arm, config.horizon, seed)?;
    let sample = prediction_sample(
        &run.params,
        &data.test[0],
        series.variable_names(),
        data.standardizer.as_ref(),
    )?;
    Ok(TrainRun {
        arm: arm.name.clone(),
        run,
        sample,
        standardizer: data.standardizer,
    })
}

pub const HISTORY_FILE: &str = "history.jsonl";
pub const PREDICTION_FILE: &str = "prediction.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";

/// Writes history, metrics, checkpoint and the prediction sample to `dir`.
pub fn save_training_run(dir: &Path, config: &ExperimentConfig, run: &TrainRun) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut hist = std::io::BufWriter::new(File::create(dir.join(HISTORY_FILE))?);
    for rec in &run.run.history.epochs {
        writeln!(hist, "{}", serde_json::to_string(rec)?)?;
    }
    hist.flush()?;
    write_json(&dir.join("metrics.json"), &run.run.test)?;
    write_json(&dir.join("summary.json"), &run.run.history)?;
    write_json(&dir.join(PREDICTION_FILE), &run.sample)?;
    if let Some(z) = &run.standardizer {
        write_json(&dir.join("standardizer.json"), z)?;
    }
    save_checkpoint(&run.run.params, &dir.join(CHECKPOINT_FILE))?;
    write_manifest(
        dir,
        &format!("train --arm {}", run.arm),
        config,
        &[
            HISTORY_FILE,
            "metrics.json",
            "summary.json",
            PREDICTION_FILE,
            CHECKPOINT_FILE,
        ],
    )
}

/// Test metrics of a saved checkpoint on the configured dataset.
pub fn evaluate_checkpoint(
    config: &ExperimentConfig,
    checkpoint: &Path,
    seed: u64,
) -> Result<EvalMetrics> {
    let params = crate::model::load_checkpoint(checkpoint, None)?;
    let series = config.load_dataset(seed, None)?;
    let data = prepare_data(config, &series, params.spec().horizon)?;
    if params.spec().n_vars != data.n_vars || params.spec().lookback != config.lookback {
        return Err(Error::Config(format!(
            "checkpoint expects {} variables and lookback {}, config gives {} and {}",
            params.spec().n_vars,
            params.spec().lookback,
            data.n_vars,
            config.lookback
        )));
    }
    evaluate(&params, &data.test)
}

/// One point of a long-format plotting table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotRow {
    pub series_name: String,
    pub x: f64,
    pub y: f64,
}

/// RQF value and gradient against squared error and its gradient on an
/// evenly spaced error grid.
pub fn loss_curves(c: f64, lo: f64, hi: f64, points: usize) -> Result<Vec<PlotRow>> {
    if points < 2 || hi.is_nan() || lo.is_nan() || hi <= lo {
        return Err(Error::param(
            "loss curve grid",
            "need hi > lo and at least 2 points",
        ));
    }
    let mut rows = Vec::with_capacity(4 * points);
    for i in 0..points {
        let e = lo + (hi - lo) * i as f64 / (points - 1) as f64;
        for (name, y) in [
            ("rqf_loss", rqf_loss(e, 0.0, c)?),
            ("rqf_grad", rqf_grad(e, 0.0, c)?),
            ("mse_loss", e * e),
            ("mse_grad", 2.0 * e),
        ] {
            rows.push(PlotRow {
                series_name: name.to_owned(),
                x: e,
                y,
            });
        }
    }
    Ok(rows)
}

/// Plot rows for a saved training run: per-epoch curves and the forecast
/// sample, each variable's steps numbered from the window origin.
pub fn run_plot_rows(run_dir: &Path) -> Result<Vec<PlotRow>> {
    let hist_path = run_dir.join(HISTORY_FILE);
    if !hist_path.is_file() {
        return Err(Error::MissingRun(run_dir.to_path_buf()));
    }
    let mut rows = Vec::new();
    for line in BufReader::new(File::open(&hist_path)?).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: crate::training::EpochRecord = serde_json::from_str(&line)?;
        let x = rec.epoch as f64;
        rows.push(PlotRow {
            series_name: "train_loss".into(),
            x,
            y: rec.train_loss,
        });
        for (name, v) in [("val_mse", rec.val_mse), ("val_mae", rec.val_mae)] {
            if let Some(y) = v {
                rows.push(PlotRow {
                    series_name: name.into(),
                    x,
                    y,
                });
            }
        }
    }
    let pred_path = run_dir.join(PREDICTION_FILE);
    if pred_path.is_file() {
        let sample: PredictionSample = serde_json::from_str(&fs::read_to_string(pred_path)?)?;
        for (n, name) in sample.variable_names.iter().enumerate() {
            let offset = sample.truth[n].len() - sample.prediction[n].len();
            for (t, &y) in sample.truth[n].iter().enumerate() {
                rows.push(PlotRow {
                    series_name: format!("truth/{name}"),
                    x: t as f64,
                    y,
                });
            }
            for (t, &y) in sample.prediction[n].iter().enumerate() {
                rows.push(PlotRow {
                    series_name: format!("prediction/{name}"),
                    x: (offset + t) as f64,
                    y,
                });
            }
        }
    }
    Ok(rows)
}

/// Writes plot rows with a header; an empty table still gets the header.
pub fn write_plot_rows(path: &Path, rows: &[PlotRow]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)?;
    w.write_record(["series_name", "x", "y"])?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
