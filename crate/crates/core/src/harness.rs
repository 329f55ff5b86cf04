//! End-to-end experiment pipeline behind the `ibs` command.
//!
//! Every stage reads and writes plain files in an output directory, so the
//! stages can be run one at a time from the command line or chained by
//! [`run_pipeline`]. A single global seed fans out to per-stage seeds.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::attribution::{
    gradient_along_path, integrated_gradients_with, Attribution, IgOptions, TargetClass,
    DEFAULT_STEPS,
};
use crate::data::{
    generate_brain_with, generate_hypercube, generate_spiral, BrainLayout, BrainParams, Dataset,
    HypercubeParams,
};
use crate::error::{Error, Result};
use crate::ibs::{
    read_boundary_csv, sample_boundary, select_closest_point, select_farthest_baseline,
    select_optimal_baseline, write_boundary_csv, BaselineSelection, BoundarySample,
    BoundarySampling, SearchConfig,
};
use crate::nn::{train, Metrics, NetworkSpec, TrainConfig, TrainedModel};
use crate::oracle::{default_grid_resolution, grid_boundary, manifold_closeness};
use crate::seed;
use crate::svg::{self, LineSeries, ScatterSeries, PALETTE};

/// Environment variable naming the default output root.
pub const OUTPUT_ROOT_ENV: &str = "IBS_OUTPUT_ROOT";
pub const DEFAULT_OUTPUT_ROOT: &str = "ibs-output";
pub const DEFAULT_SEED: u64 = 8;
/// Components below `-SIGN_TOLERANCE` count as negative.
pub const SIGN_TOLERANCE: f64 = 1e-6;

pub const DATASET_FILE: &str = "dataset.csv";
pub const LAYOUT_IMAGE_FILE: &str = "layout.pgm";
pub const LAYOUT_SIDECAR_FILE: &str = "layout.json";
pub const MODEL_FILE: &str = "model.json";
pub const METRICS_FILE: &str = "metrics.json";
pub const BOUNDARY_FILE: &str = "boundary.csv";
pub const BOUNDARY_STATS_FILE: &str = "boundary.json";
pub const BOUNDARY_PLOT_FILE: &str = "boundary.svg";
pub const ORACLE_FILE: &str = "oracle.csv";
pub const VALIDATION_FILE: &str = "validation.json";
pub const ATTRIBUTION_DIR: &str = "attributions";
pub const REPORT_FILE: &str = "report.json";
pub const CONFIG_FILE: &str = "config.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    Custom,
    Spiral,
    ThreeFeature,
    Brain,
}

impl Preset {
    pub const ALL: [Preset; 4] = [Preset::Custom, Preset::Spiral, Preset::ThreeFeature, Preset::Brain];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Custom => "custom",
            Preset::Spiral => "spiral",
            Preset::ThreeFeature => "three-feature",
            Preset::Brain => "brain",
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| {
                Error::config(format!(
                    "unknown preset '{s}' (expected custom, spiral, three-feature or brain)"
                ))
            })
    }
}

/// Everything one experiment needs. Missing fields in a config file take
/// the preset's values; `train.seed` and `search.pool_seed` are replaced by
/// seeds derived from `seed`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub preset: Preset,
    pub seed: u64,
    pub n_samples: usize,
    /// Hypercube and brain presets.
    pub class_sep: f64,
    /// Spiral preset.
    pub noise_sigma: f64,
    pub turns: f64,
    /// Brain preset.
    pub smoothing_sigma: f64,
    pub hidden_layers: Vec<usize>,
    pub train: TrainConfig,
    pub search: SearchConfig,
    pub boundary_samples: usize,
    pub attribution_steps: usize,
    /// Test samples attributed by the full pipeline.
    pub attribution_samples: usize,
    pub manifold_quantile: f64,
    /// Grid cells per dimension; `None` picks 512 in 2-D and 96 in 3-D.
    pub grid_resolution: Option<usize>,
    pub output_dir: PathBuf,
}

pub fn default_output_root() -> PathBuf {
    std::env::var_os(OUTPUT_ROOT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_ROOT))
}

impl ExperimentConfig {
    pub fn preset(preset: Preset) -> Self {
        let mut cfg = Self {
            preset,
            seed: DEFAULT_SEED,
            n_samples: 2000,
            class_sep: 2.0,
            noise_sigma: 0.06,
            turns: 1.5,
            smoothing_sigma: 2.0,
            hidden_layers: vec![10; 5],
            train: TrainConfig::default(),
            search: SearchConfig::default(),
            boundary_samples: 1000,
            attribution_steps: DEFAULT_STEPS,
            attribution_samples: 100,
            manifold_quantile: 0.99,
            grid_resolution: None,
            output_dir: default_output_root().join(preset.name()),
        };
        match preset {
            Preset::Custom => {}
            Preset::Spiral => cfg.train.epochs = 300,
            Preset::ThreeFeature => cfg.class_sep = 2.5,
            Preset::Brain => {
                cfg.n_samples = 2500;
                cfg.class_sep = 5.0;
                cfg.train.learning_rate = 1e-4;
                cfg.train.weight_decay = 5e-6;
                cfg.boundary_samples = 200;
                cfg.attribution_samples = 10;
            }
        }
        cfg
    }

    /// Parses a JSON object, filling absent fields from its preset.
    pub fn from_json(text: &str) -> Result<Self> {
        let given: serde_json::Value = serde_json::from_str(text)?;
        let obj = given
            .as_object()
            .ok_or_else(|| Error::config("experiment config must be a JSON object"))?;
        let preset = match obj.get("preset") {
            Some(v) => serde_json::from_value::<Preset>(v.clone())
                .map_err(|e| Error::config(format!("bad preset: {e}")))?,
            None => Preset::Custom,
        };
        let mut merged = serde_json::to_value(Self::preset(preset))?;
        merge(&mut merged, &given);
        let cfg: Self = serde_json::from_value(merged)
            .map_err(|e| Error::config(format!("bad experiment config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_samples < 4 || !self.n_samples.is_multiple_of(2) {
            return Err(Error::config("n_samples must be even and at least 4"));
        }
        for (name, v) in [
            ("class_sep", self.class_sep),
            ("turns", self.turns),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(format!("{name} must be positive")));
            }
        }
        for (name, v) in [("noise_sigma", self.noise_sigma), ("smoothing_sigma", self.smoothing_sigma)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(format!("{name} must be non-negative")));
            }
        }
        if self.hidden_layers.is_empty() || self.hidden_layers.contains(&0) {
            return Err(Error::config("hidden_layers must be a non-empty list of positive sizes"));
        }
        self.train.validate()?;
        self.search.validate()?;
        if self.boundary_samples == 0 || self.attribution_steps == 0 {
            return Err(Error::config("boundary_samples and attribution_steps must be positive"));
        }
        if !(0.0..=1.0).contains(&self.manifold_quantile) {
            return Err(Error::config("manifold_quantile must lie in [0, 1]"));
        }
        if matches!(self.grid_resolution, Some(r) if r < 8) {
            return Err(Error::config("grid_resolution must be at least 8"));
        }
        Ok(())
    }

    pub fn data_seed(&self) -> u64 {
        seed::derive(self.seed, "data")
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig { seed: seed::derive(self.seed, "train"), ..self.train.clone() }
    }

    pub fn search_config(&self) -> SearchConfig {
        SearchConfig { pool_seed: seed::derive(self.seed, "boundary"), ..self.search.clone() }
    }

    pub fn attribution_seed(&self) -> u64 {
        seed::derive(self.seed, "attribute")
    }

    pub fn network_spec(&self, input_dim: usize) -> Result<NetworkSpec> {
        NetworkSpec::mlp(input_dim, &self.hidden_layers)
    }
}

fn merge(base: &mut serde_json::Value, over: &serde_json::Value) {
    match (base, over) {
        (serde_json::Value::Object(b), serde_json::Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (b, o) => *b = o.clone(),
    }
}

/// Builds the preset's dataset (and the layout for `brain`).
pub fn generate_dataset(cfg: &ExperimentConfig) -> Result<(Dataset, Option<BrainLayout>)> {
    let seed = cfg.data_seed();
    let hypercube = |dim: usize| HypercubeParams {
        n_samples: cfg.n_samples,
        n_features: dim,
        n_informative: dim,
        clusters_per_class: 2,
        class_sep: cfg.class_sep,
        seed,
    };
    let renamed = |mut ds: Dataset| {
        ds.name = cfg.preset.name().to_string();
        ds
    };
    Ok(match cfg.preset {
        Preset::Custom => (renamed(generate_hypercube(&hypercube(2))?), None),
        Preset::ThreeFeature => (renamed(generate_hypercube(&hypercube(3))?), None),
        Preset::Spiral => (generate_spiral(cfg.n_samples, cfg.noise_sigma, cfg.turns, seed)?, None),
        Preset::Brain => {
            let (ds, layout) = generate_brain_with(&BrainParams {
                n_samples: cfg.n_samples,
                class_sep: cfg.class_sep,
                smoothing_sigma: cfg.smoothing_sigma,
                seed,
                ..BrainParams::default()
            })?;
            (ds, Some(layout))
        }
    })
}

/// Files written by a command plus a one-line summary.
#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub summary: String,
    pub files: Vec<PathBuf>,
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    std::fs::write(path, s)?;
    Ok(())
}

pub fn cmd_generate(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome> {
    cfg.validate()?;
    std::fs::create_dir_all(out)?;
    let (ds, layout) = generate_dataset(cfg)?;
    let mut files = vec![out.join(DATASET_FILE)];
    ds.write_csv(&files[0])?;
    if let Some(layout) = layout {
        let (img, side) = (out.join(LAYOUT_IMAGE_FILE), out.join(LAYOUT_SIDECAR_FILE));
        layout.save(&img, &side)?;
        files.extend([img, side]);
    }
    let [c0, c1] = ds.class_counts();
    Ok(Outcome {
        summary: format!(
            "generated {}: {} samples x {} features (class 0: {c0}, class 1: {c1}), seed {}",
            ds.name,
            ds.len(),
            ds.n_features(),
            ds.seed
        ),
        files,
    })
}

/// Train split of `dataset` as used when `model` was trained.
pub fn training_split(model: &TrainedModel, dataset: &Dataset, split_fraction: f64) -> Result<Dataset> {
    let cfg = TrainConfig { seed: model.train_seed(), split_fraction, ..TrainConfig::default() };
    dataset.subset(&cfg.split(dataset.len()).train)
}

/// Held-out rows of `dataset` for `model`, in split order.
pub fn test_indices(model: &TrainedModel, dataset: &Dataset, split_fraction: f64) -> Vec<usize> {
    let cfg = TrainConfig { seed: model.train_seed(), split_fraction, ..TrainConfig::default() };
    cfg.split(dataset.len()).test
}

pub fn cmd_train(dataset_path: &Path, cfg: &ExperimentConfig, out: &Path) -> Result<(Outcome, Metrics)> {
    cfg.validate()?;
    let ds = Dataset::read_csv(dataset_path)?;
    std::fs::create_dir_all(out)?;
    let (model, metrics) = train(&cfg.network_spec(ds.n_features())?, &ds, &cfg.train_config())?;
    let files = vec![out.join(MODEL_FILE), out.join(METRICS_FILE)];
    model.save(&files[0])?;
    write_json(&metrics, &files[1])?;
    Ok((
        Outcome {
            summary: format!(
                "trained on {}: accuracy {:.4}, f1 {:.4} ({} train / {} test)",
                ds.name, metrics.accuracy, metrics.f1, metrics.n_train, metrics.n_test
            ),
            files,
        },
        metrics,
    ))
}

/// Convergence and manifold-closeness summary of a boundary run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryStats {
    pub attempted: usize,
    pub converged: usize,
    pub failures: usize,
    pub convergence_rate: f64,
    pub mean_steps: f64,
    pub manifold_quantile: f64,
    pub manifold_threshold: f64,
    pub manifold_fraction: f64,
}

fn boundary_stats(
    sampling: &BoundarySampling,
    train_split: &Dataset,
    quantile: f64,
) -> Result<BoundaryStats> {
    let mc = manifold_closeness(&sampling.points(), &train_split.features, quantile)?;
    let steps: usize = sampling.samples.iter().map(|s| s.steps_taken).sum();
    Ok(BoundaryStats {
        attempted: sampling.attempted,
        converged: sampling.samples.len(),
        failures: sampling.failures,
        convergence_rate: sampling.convergence_rate(),
        mean_steps: steps as f64 / sampling.samples.len().max(1) as f64,
        manifold_quantile: quantile,
        manifold_threshold: mc.threshold,
        manifold_fraction: mc.fraction_within,
    })
}

fn class_scatter(ds: &Dataset) -> Vec<ScatterSeries> {
    (0..2u8)
        .map(|c| {
            ScatterSeries::new(
                format!("class {c}"),
                PALETTE[c as usize],
                1.5,
                ds.features
                    .iter()
                    .zip(&ds.labels)
                    .filter(|(_, &l)| l == c)
                    .map(|(f, _)| (f[0], f[1]))
                    .collect(),
            )
        })
        .collect()
}

pub fn cmd_boundary(
    model_path: &Path,
    dataset_path: &Path,
    n: usize,
    cfg: &ExperimentConfig,
    out: &Path,
) -> Result<(Outcome, BoundaryStats)> {
    cfg.validate()?;
    let model = TrainedModel::load(model_path)?;
    let ds = Dataset::read_csv(dataset_path)?;
    Error::check_dim(model.input_dim(), ds.n_features())?;
    std::fs::create_dir_all(out)?;
    let train_split = training_split(&model, &ds, cfg.train.split_fraction)?;
    let sampling = sample_boundary(&model, &train_split, n, &cfg.search_config())?;
    let stats = boundary_stats(&sampling, &train_split, cfg.manifold_quantile)?;
    let mut files = vec![out.join(BOUNDARY_FILE), out.join(BOUNDARY_STATS_FILE)];
    write_boundary_csv(&sampling.samples, &files[0])?;
    write_json(&stats, &files[1])?;
    if ds.n_features() == 2 {
        let mut series = class_scatter(&train_split);
        series.push(ScatterSeries::new(
            "boundary",
            PALETTE[2],
            1.5,
            sampling.samples.iter().map(|s| (s.point[0], s.point[1])).collect(),
        ));
        let path = out.join(BOUNDARY_PLOT_FILE);
        std::fs::write(&path, svg::scatter(&format!("{} boundary samples", ds.name), &series))?;
        files.push(path);
    }
    Ok((
        Outcome {
            summary: format!(
                "boundary: {}/{} converged ({:.4}), mean steps {:.1}, manifold closeness {:.4} (threshold {:.6})",
                stats.converged,
                stats.attempted,
                stats.convergence_rate,
                stats.mean_steps,
                stats.manifold_fraction,
                stats.manifold_threshold
            ),
            files,
        },
        stats,
    ))
}

/// How the baseline for an attribution is chosen.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineMode {
    /// Closest boundary sample.
    Optimal,
    /// Farthest boundary sample.
    RandomDb,
    Zero,
    /// Uniform draw inside the data bounding box.
    Noise,
    CustomPoint(Vec<f64>),
}

impl BaselineMode {
    pub fn name(&self) -> &'static str {
        match self {
            BaselineMode::Optimal => "optimal",
            BaselineMode::RandomDb => "random-db",
            BaselineMode::Zero => "zero",
            BaselineMode::Noise => "noise",
            BaselineMode::CustomPoint(_) => "custom-point",
        }
    }

    /// Parses a mode name; `custom-point` needs `point`.
    pub fn parse(name: &str, point: Option<Vec<f64>>) -> Result<Self> {
        Ok(match name {
            "optimal" => BaselineMode::Optimal,
            "random-db" => BaselineMode::RandomDb,
            "zero" => BaselineMode::Zero,
            "noise" => BaselineMode::Noise,
            "custom-point" => BaselineMode::CustomPoint(
                point.ok_or_else(|| Error::config("custom-point mode needs a baseline point"))?,
            ),
            other => {
                return Err(Error::config(format!(
                    "unknown mode '{other}' (expected optimal, random-db, zero, noise or custom-point)"
                )))
            }
        })
    }
}

/// One attributed sample, as written to its JSON record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttributionRecord {
    pub sample_id: usize,
    pub label: u8,
    pub mode: String,
    pub target: TargetClass,
    pub prediction: f64,
    pub baseline_prediction: f64,
    pub selection: BaselineSelection,
    pub steps: usize,
    pub completeness_residual: f64,
    pub total: f64,
    /// Components below `-SIGN_TOLERANCE`.
    pub negative_components: usize,
    pub negative_fraction: f64,
    pub mixed_signs: bool,
    pub csv: String,
}

fn choose_baseline(
    mode: &BaselineMode,
    x: &[f64],
    id: usize,
    boundary: &[BoundarySample],
    model: &TrainedModel,
    ds: &Dataset,
    noise_seed: u64,
) -> Result<BaselineSelection> {
    match mode {
        BaselineMode::Optimal => select_optimal_baseline(x, boundary, model),
        BaselineMode::RandomDb => select_farthest_baseline(x, boundary, model),
        BaselineMode::Zero => select_closest_point(x, &[vec![0.0; x.len()]], model),
        BaselineMode::Noise => {
            let mut rng = seed::rng(seed::derive_indexed(noise_seed, id as u64));
            let point = ds
                .bounds()
                .into_iter()
                .map(|(lo, hi)| if hi > lo { rng.random_range(lo..hi) } else { lo })
                .collect();
            select_closest_point(x, &[point], model)
        }
        BaselineMode::CustomPoint(p) => select_closest_point(x, std::slice::from_ref(p), model),
    }
}

/// Features shown in per-feature plots: all of them when there are few,
/// otherwise the informative ones.
fn plotted_features(ds: &Dataset, limit: usize) -> Vec<usize> {
    if ds.n_features() <= 16 {
        (0..ds.n_features()).collect()
    } else {
        ds.informative_indices.iter().copied().take(limit).collect()
    }
}

#[allow(clippy::too_many_arguments)]
fn attribute_one(
    model: &TrainedModel,
    ds: &Dataset,
    id: usize,
    mode: &BaselineMode,
    boundary: &[BoundarySample],
    steps: usize,
    noise_seed: u64,
    dir: &Path,
    plots: bool,
) -> Result<(AttributionRecord, Attribution, Vec<PathBuf>)> {
    let x = &ds.features[id];
    let selection = choose_baseline(mode, x, id, boundary, model, ds, noise_seed)?;
    let prediction = model.predict_proba(x)?;
    let target = TargetClass::from_label(u8::from(prediction > 0.5));
    let options = IgOptions { steps, target, ..IgOptions::default() };
    let attr = integrated_gradients_with(model, x, &selection.baseline, &options)?;
    let stem = format!("sample_{id}_{}", mode.name());
    let csv_name = format!("{stem}.csv");
    let mut files = vec![dir.join(&csv_name), dir.join(format!("{stem}.json"))];
    attr.write_csv(&files[0])?;
    let record = AttributionRecord {
        sample_id: id,
        label: ds.labels[id],
        mode: mode.name().to_string(),
        target,
        prediction,
        baseline_prediction: model.predict_proba(&selection.baseline)?,
        steps,
        completeness_residual: attr.completeness_residual,
        total: attr.total(),
        negative_components: attr.values.iter().filter(|&&v| v < -SIGN_TOLERANCE).count(),
        negative_fraction: attr.negative_fraction(SIGN_TOLERANCE),
        mixed_signs: attr.has_mixed_signs(SIGN_TOLERANCE),
        csv: csv_name,
        selection,
    };
    write_json(&record, &files[1])?;
    if plots {
        files.extend(attribution_plots(model, ds, id, &record, &attr, boundary, dir, &stem)?);
    }
    Ok((record, attr, files))
}

#[allow(clippy::too_many_arguments)]
fn attribution_plots(
    model: &TrainedModel,
    ds: &Dataset,
    id: usize,
    record: &AttributionRecord,
    attr: &Attribution,
    boundary: &[BoundarySample],
    dir: &Path,
    stem: &str,
) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    let shown = plotted_features(ds, 8);
    let trace = gradient_along_path(model, &attr.baseline, &attr.input, 101)?;
    let mut lines: Vec<LineSeries> = shown
        .iter()
        .enumerate()
        .map(|(k, &j)| LineSeries {
            label: format!("grad f{j}"),
            color: PALETTE[k % PALETTE.len()].to_string(),
            ys: trace.gradients.iter().map(|g| g[j]).collect(),
        })
        .collect();
    lines.push(LineSeries {
        label: "f".into(),
        color: "#000000".into(),
        ys: trace.predictions.clone(),
    });
    let path = dir.join(format!("{stem}_path.svg"));
    std::fs::write(
        &path,
        svg::line(
            &format!("sample {id}, {} baseline: gradients along the path", record.mode),
            &trace.t_values,
            &lines,
            &record.selection.crossing_ts,
        ),
    )?;
    files.push(path);

    let cats: Vec<String> = shown.iter().map(|j| format!("f{j}")).collect();
    let pick = |v: &[f64]| shown.iter().map(|&j| v[j]).collect::<Vec<_>>();
    let bars = [
        ("IG", &attr.values),
        ("Delta", &attr.delta),
        ("CG", &attr.cumulated_gradients),
    ]
    .iter()
    .enumerate()
    .map(|(k, (label, v))| LineSeries {
        label: label.to_string(),
        color: PALETTE[k].to_string(),
        ys: pick(v),
    })
    .collect::<Vec<_>>();
    let path = dir.join(format!("{stem}_bars.svg"));
    std::fs::write(
        &path,
        svg::bars(&format!("sample {id}, {} baseline", record.mode), &cats, &bars),
    )?;
    files.push(path);

    if ds.n_features() == 2 {
        let mut series = class_scatter(ds);
        series.push(ScatterSeries::new(
            "boundary",
            PALETTE[2],
            1.0,
            boundary.iter().map(|s| (s.point[0], s.point[1])).collect(),
        ));
        series.push(ScatterSeries::new("sample", "#000000", 5.0, vec![(attr.input[0], attr.input[1])]));
        series.push(ScatterSeries::new(
            "baseline",
            PALETTE[3],
            5.0,
            vec![(attr.baseline[0], attr.baseline[1])],
        ));
        let path = dir.join(format!("{stem}_scatter.svg"));
        std::fs::write(&path, svg::scatter(&format!("sample {id}, {} baseline", record.mode), &series))?;
        files.push(path);
    }
    Ok(files)
}

/// Attributes the rows `ids` of the dataset. Records come back in `ids`
/// order.
#[allow(clippy::too_many_arguments)]
pub fn cmd_attribute(
    model_path: &Path,
    dataset_path: &Path,
    boundary_path: &Path,
    ids: &[usize],
    mode: &BaselineMode,
    cfg: &ExperimentConfig,
    out: &Path,
) -> Result<(Outcome, Vec<AttributionRecord>)> {
    cfg.validate()?;
    let model = TrainedModel::load(model_path)?;
    let ds = Dataset::read_csv(dataset_path)?;
    let boundary = read_boundary_csv(boundary_path)?;
    attribute_samples(&model, &ds, &boundary, ids, mode, cfg, out)
}

fn attribute_samples(
    model: &TrainedModel,
    ds: &Dataset,
    boundary: &[BoundarySample],
    ids: &[usize],
    mode: &BaselineMode,
    cfg: &ExperimentConfig,
    out: &Path,
) -> Result<(Outcome, Vec<AttributionRecord>)> {
    Error::check_dim(model.input_dim(), ds.n_features())?;
    if let Some(&bad) = ids.iter().find(|&&i| i >= ds.len()) {
        return Err(Error::config(format!(
            "unknown sample id {bad}: dataset has {} rows",
            ds.len()
        )));
    }
    if let BaselineMode::CustomPoint(p) = mode {
        Error::check_dim(model.input_dim(), p.len())?;
    }
    let dir = out.join(ATTRIBUTION_DIR);
    std::fs::create_dir_all(&dir)?;
    let noise_seed = seed::derive(cfg.attribution_seed(), "noise");
    let mut files = Vec::new();
    let mut records = Vec::new();
    for &id in ids {
        let (record, _, f) =
            attribute_one(model, ds, id, mode, boundary, cfg.attribution_steps, noise_seed, &dir, true)?;
        records.push(record);
        files.extend(f);
    }
    let clean = records.iter().filter(|r| r.negative_components == 0).count();
    let max_residual = records.iter().map(|r| r.completeness_residual).fold(0.0, f64::max);
    Ok((
        Outcome {
            summary: format!(
                "attributed {} samples with {} baselines: {clean} sign-consistent, max completeness residual {max_residual:.3e}",
                records.len(),
                mode.name()
            ),
            files,
        },
        records,
    ))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckStatus {
    Pass,
    Fail,
    Skipped,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub status: CheckStatus,
    pub value: Option<f64>,
    pub threshold: Option<f64>,
    pub detail: String,
}

impl Check {
    fn judged(name: &str, ok: bool, value: f64, threshold: f64, detail: String) -> Self {
        Self {
            name: name.into(),
            status: if ok { CheckStatus::Pass } else { CheckStatus::Fail },
            value: Some(value),
            threshold: Some(threshold),
            detail,
        }
    }

    fn skipped(name: &str, detail: impl Into<String>) -> Self {
        Self { name: name.into(), status: CheckStatus::Skipped, value: None, threshold: None, detail: detail.into() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != CheckStatus::Fail)
    }

    pub fn status(&self, name: &str) -> Option<CheckStatus> {
        self.checks.iter().find(|c| c.name == name).map(|c| c.status)
    }
}

/// Neutrality of every sample, agreement with the grid oracle (2-D/3-D
/// only) and manifold closeness (needs the training split).
pub fn validate_boundary(
    model: &TrainedModel,
    boundary: &[BoundarySample],
    train_split: Option<&Dataset>,
    cfg: &ExperimentConfig,
    oracle_out: Option<&Path>,
) -> Result<ValidationReport> {
    let dim = model.input_dim();
    for s in boundary {
        Error::check_dim(dim, s.point.len())?;
    }
    let mut checks = Vec::new();
    let eps = cfg.search.epsilon;

    let mut worst = 0.0f64;
    for s in boundary {
        worst = worst.max((model.predict_proba(&s.point)? - 0.5).abs());
    }
    checks.push(if boundary.is_empty() {
        Check { name: "neutrality".into(), status: CheckStatus::Fail, value: None, threshold: Some(eps), detail: "no boundary samples".into() }
    } else {
        Check::judged(
            "neutrality",
            worst <= eps,
            worst,
            eps,
            format!("max |f - 0.5| over {} samples", boundary.len()),
        )
    });

    if (2..=3).contains(&dim) && !boundary.is_empty() {
        let bounds = match train_split {
            Some(ds) => ds.expanded_bounds(0.1),
            None => {
                let pts: Vec<Vec<f64>> = boundary.iter().map(|s| s.point.clone()).collect();
                let tmp = Dataset::new("boundary", pts, (0..boundary.len()).map(|i| (i % 2) as u8).collect(), vec![], 0);
                match tmp {
                    Ok(d) => d.expanded_bounds(0.1),
                    Err(_) => boundary[0].point.iter().map(|&v| (v - 1.0, v + 1.0)).collect(),
                }
            }
        };
        let res = cfg.grid_resolution.unwrap_or_else(|| default_grid_resolution(dim));
        let oracle = grid_boundary(model, &bounds, res)?;
        if let Some(path) = oracle_out {
            oracle.write_csv(path)?;
        }
        let tol = 2.0 * oracle.max_spacing();
        let mut within = 0usize;
        let mut worst = 0.0f64;
        for s in boundary {
            let d = oracle.nearest_distance(&s.point);
            worst = worst.max(d);
            if d <= tol {
                within += 1;
            }
        }
        let frac = within as f64 / boundary.len() as f64;
        checks.push(Check::judged(
            "grid-agreement",
            within == boundary.len(),
            frac,
            1.0,
            format!(
                "{within}/{} samples within {tol:.3e} of {} oracle points (resolution {res}, worst {worst:.3e})",
                boundary.len(),
                oracle.boundary_points.len()
            ),
        ));
    } else if boundary.is_empty() {
        checks.push(Check::skipped("grid-agreement", "no boundary samples"));
    } else {
        checks.push(Check::skipped("grid-agreement", format!("{dim} features: grid oracle handles 2 or 3")));
    }

    match train_split {
        Some(ds) if !boundary.is_empty() => {
            let pts: Vec<Vec<f64>> = boundary.iter().map(|s| s.point.clone()).collect();
            let mc = manifold_closeness(&pts, &ds.features, cfg.manifold_quantile)?;
            checks.push(Check::judged(
                "manifold-closeness",
                mc.fraction_within >= 0.95,
                mc.fraction_within,
                0.95,
                format!(
                    "fraction with nearest-neighbour distance <= {:.4e} (training q{})",
                    mc.threshold,
                    cfg.manifold_quantile * 100.0
                ),
            ));
        }
        Some(_) => checks.push(Check::skipped("manifold-closeness", "no boundary samples")),
        None => checks.push(Check::skipped("manifold-closeness", "no dataset given")),
    }
    Ok(ValidationReport { checks })
}

pub fn cmd_validate(
    model_path: &Path,
    boundary_path: &Path,
    dataset_path: Option<&Path>,
    cfg: &ExperimentConfig,
    out: &Path,
) -> Result<(Outcome, ValidationReport)> {
    cfg.validate()?;
    let model = TrainedModel::load(model_path)?;
    let boundary = read_boundary_csv(boundary_path)?;
    let train_split = match dataset_path {
        Some(p) => Some(training_split(&model, &Dataset::read_csv(p)?, cfg.train.split_fraction)?),
        None => None,
    };
    std::fs::create_dir_all(out)?;
    let oracle_path = out.join(ORACLE_FILE);
    let report = validate_boundary(&model, &boundary, train_split.as_ref(), cfg, Some(&oracle_path))?;
    let mut files = vec![out.join(VALIDATION_FILE)];
    write_json(&report, &files[0])?;
    if report.status("grid-agreement") != Some(CheckStatus::Skipped) {
        files.push(oracle_path);
    }
    let summary = report
        .checks
        .iter()
        .map(|c| format!("{}: {:?}", c.name, c.status).to_lowercase())
        .collect::<Vec<_>>()
        .join(", ");
    Ok((Outcome { summary, files }, report))
}

/// Sign behaviour and completeness of a batch of attributions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttributionStats {
    pub mode: String,
    pub samples: usize,
    /// Fraction of samples with no component below `-SIGN_TOLERANCE`.
    pub sign_consistency_rate: f64,
    /// Negative components over all components.
    pub negative_component_fraction: f64,
    pub mixed_sign_rate: f64,
    pub max_completeness_residual: f64,
    pub mean_completeness_residual: f64,
    /// Crossing count -> number of samples.
    pub crossing_histogram: BTreeMap<usize, usize>,
}

pub fn attribution_stats(mode: &str, records: &[AttributionRecord], n_features: usize) -> AttributionStats {
    let n = records.len().max(1) as f64;
    let mut hist = BTreeMap::new();
    for r in records {
        *hist.entry(r.selection.crossings).or_insert(0) += 1;
    }
    let negatives: usize = records.iter().map(|r| r.negative_components).sum();
    AttributionStats {
        mode: mode.to_string(),
        samples: records.len(),
        sign_consistency_rate: records.iter().filter(|r| r.negative_components == 0).count() as f64 / n,
        negative_component_fraction: negatives as f64 / (n * n_features as f64),
        mixed_sign_rate: records.iter().filter(|r| r.mixed_signs).count() as f64 / n,
        max_completeness_residual: records.iter().map(|r| r.completeness_residual).fold(0.0, f64::max),
        mean_completeness_residual: records.iter().map(|r| r.completeness_residual).sum::<f64>() / n,
        crossing_histogram: hist,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub preset: Preset,
    pub seed: u64,
    pub metrics: Metrics,
    pub boundary: BoundaryStats,
    pub attributions: Vec<AttributionStats>,
    pub validation: ValidationReport,
    /// Paths relative to the output directory, sorted.
    pub files: Vec<String>,
}

/// Generate, train, sample the boundary, attribute test samples with the
/// optimal and the farthest boundary baselines, validate, and write
/// `report.json`.
pub fn run_pipeline(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let out = cfg.output_dir.as_path();
    std::fs::create_dir_all(out)?;
    let mut files = vec![out.join(CONFIG_FILE)];
    // the output location is not part of the experiment
    let mut recorded = serde_json::to_value(cfg)?;
    if let Some(obj) = recorded.as_object_mut() {
        obj.remove("output_dir");
    }
    write_json(&recorded, &files[0])?;

    let generated = cmd_generate(cfg, out)?;
    files.extend(generated.files);
    let dataset_path = out.join(DATASET_FILE);
    let (trained, metrics) = cmd_train(&dataset_path, cfg, out)?;
    files.extend(trained.files);
    let model_path = out.join(MODEL_FILE);
    let (bounded, stats) = cmd_boundary(&model_path, &dataset_path, cfg.boundary_samples, cfg, out)?;
    files.extend(bounded.files);

    let model = TrainedModel::load(&model_path)?;
    let ds = Dataset::read_csv(&dataset_path)?;
    let boundary = read_boundary_csv(out.join(BOUNDARY_FILE))?;
    let mut ids = test_indices(&model, &ds, cfg.train.split_fraction);
    ids.truncate(cfg.attribution_samples);
    let mut attributions = Vec::new();
    if !boundary.is_empty() {
        for mode in [BaselineMode::Optimal, BaselineMode::RandomDb] {
            let (o, records) = attribute_samples(&model, &ds, &boundary, &ids, &mode, cfg, out)?;
            files.extend(o.files);
            attributions.push(attribution_stats(mode.name(), &records, ds.n_features()));
        }
    }

    let (validated, validation) = cmd_validate(&model_path, &out.join(BOUNDARY_FILE), Some(&dataset_path), cfg, out)?;
    files.extend(validated.files);
    files.push(out.join(REPORT_FILE));

    let mut rel: Vec<String> = files
        .iter()
        .map(|p| {
            p.strip_prefix(out)
                .unwrap_or(p)
                .to_string_lossy()
                .replace('\\', "/")
        })
        .collect();
    rel.sort();
    rel.dedup();
    let report = ExperimentReport {
        preset: cfg.preset,
        seed: cfg.seed,
        metrics,
        boundary: stats,
        attributions,
        validation,
        files: rel,
    };
    write_json(&report, &out.join(REPORT_FILE))?;
    Ok(report)
}
