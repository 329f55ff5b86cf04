//! Integrated Gradients.
//!
//! `IG_i = (x_i - x'_i) * mean_t d g(x' + t (x - x')) / d x_i`, with the mean
//! taken over midpoint nodes `t_k = (k + 0.5) / steps`. The two factors are
//! kept apart: `delta = x - x'` and `cumulated_gradients` (the path mean of
//! the gradient). `g` is the probability of the target class by default.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::TrainedModel;

pub const DEFAULT_STEPS: usize = 128;

/// Class whose score is explained; class 0 uses `1 - f`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetClass {
    Zero,
    #[default]
    One,
}

impl TargetClass {
    pub fn from_label(label: u8) -> Self {
        if label == 0 {
            TargetClass::Zero
        } else {
            TargetClass::One
        }
    }

    fn sign(self) -> f64 {
        match self {
            TargetClass::Zero => -1.0,
            TargetClass::One => 1.0,
        }
    }
}

/// Which network output is integrated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputSpace {
    #[default]
    Probability,
    /// The pre-sigmoid logit.
    Logit,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IgOptions {
    pub steps: usize,
    pub target: TargetClass,
    pub output: OutputSpace,
}

impl Default for IgOptions {
    fn default() -> Self {
        Self {
            steps: DEFAULT_STEPS,
            target: TargetClass::One,
            output: OutputSpace::Probability,
        }
    }
}

impl IgOptions {
    pub fn with_steps(steps: usize) -> Self {
        Self { steps, ..Self::default() }
    }

    /// Explained score `g(x)`.
    pub fn score(&self, model: &TrainedModel, x: &[f64]) -> Result<f64> {
        Ok(match (self.output, self.target) {
            (OutputSpace::Probability, TargetClass::One) => model.predict_proba(x)?,
            (OutputSpace::Probability, TargetClass::Zero) => 1.0 - model.predict_proba(x)?,
            (OutputSpace::Logit, t) => t.sign() * model.logit(x)?,
        })
    }

    /// `grad g(x)`.
    pub fn gradient(&self, model: &TrainedModel, x: &[f64]) -> Result<Vec<f64>> {
        let mut g = match self.output {
            OutputSpace::Probability => model.input_gradient(x)?,
            OutputSpace::Logit => model.logit_gradient(x)?,
        };
        if self.target == TargetClass::Zero {
            g.iter_mut().for_each(|v| *v = -*v);
        }
        Ok(g)
    }
}

/// Per-feature IG values with their two factors.
///
/// `values[i] == delta[i] * cumulated_gradients[i]` holds bitwise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    pub input: Vec<f64>,
    pub baseline: Vec<f64>,
    pub values: Vec<f64>,
    pub delta: Vec<f64>,
    pub cumulated_gradients: Vec<f64>,
    pub steps: usize,
    /// `|sum(values) - (g(x) - g(x'))|`.
    pub completeness_residual: f64,
    pub target: TargetClass,
    pub output: OutputSpace,
}

impl Attribution {
    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Fraction of components below `-tol`.
    pub fn negative_fraction(&self, tol: f64) -> f64 {
        if self.values.is_empty() {
            return 0.0;
        }
        self.values.iter().filter(|&&v| v < -tol).count() as f64 / self.values.len() as f64
    }

    /// True when no component is below `-tol`.
    pub fn is_non_negative(&self, tol: f64) -> bool {
        self.values.iter().all(|&v| v >= -tol)
    }

    /// True when some component exceeds `tol` and another is below `-tol`.
    pub fn has_mixed_signs(&self, tol: f64) -> bool {
        self.values.iter().any(|&v| v > tol) && self.values.iter().any(|&v| v < -tol)
    }

    /// Rows `feature,delta,cg,value`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("feature,delta,cg,value\n");
        for (i, ((d, c), v)) in self
            .delta
            .iter()
            .zip(&self.cumulated_gradients)
            .zip(&self.values)
            .enumerate()
        {
            writeln!(out, "{i},{d},{c},{v}").unwrap();
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

/// IG of the class-1 probability with `steps` midpoint nodes.
pub fn integrated_gradients(
    model: &TrainedModel,
    x: &[f64],
    baseline: &[f64],
    steps: usize,
) -> Result<Attribution> {
    integrated_gradients_with(model, x, baseline, &IgOptions::with_steps(steps))
}

pub fn integrated_gradients_with(
    model: &TrainedModel,
    x: &[f64],
    baseline: &[f64],
    options: &IgOptions,
) -> Result<Attribution> {
    let n = model.input_dim();
    Error::check_dim(n, x.len())?;
    Error::check_dim(n, baseline.len())?;
    if options.steps == 0 {
        return Err(Error::config("integration needs at least one step"));
    }
    let delta: Vec<f64> = x.iter().zip(baseline).map(|(a, b)| a - b).collect();
    let mut sum = vec![0.0; n];
    let mut point = vec![0.0; n];
    for k in 0..options.steps {
        let t = (k as f64 + 0.5) / options.steps as f64;
        for ((p, b), d) in point.iter_mut().zip(baseline).zip(&delta) {
            *p = b + t * d;
        }
        for (s, g) in sum.iter_mut().zip(options.gradient(model, &point)?) {
            *s += g;
        }
    }
    let cumulated_gradients: Vec<f64> = sum.iter().map(|s| s / options.steps as f64).collect();
    let values: Vec<f64> = delta
        .iter()
        .zip(&cumulated_gradients)
        .map(|(d, c)| d * c)
        .collect();
    let gap = options.score(model, x)? - options.score(model, baseline)?;
    let completeness_residual = (values.iter().sum::<f64>() - gap).abs();
    Ok(Attribution {
        input: x.to_vec(),
        baseline: baseline.to_vec(),
        values,
        delta,
        cumulated_gradients,
        steps: options.steps,
        completeness_residual,
        target: options.target,
        output: options.output,
    })
}

/// Splits an attribution into its `(delta, cumulated_gradients)` factors.
pub fn decompose(attribution: &Attribution) -> (Vec<f64>, Vec<f64>) {
    (
        attribution.delta.clone(),
        attribution.cumulated_gradients.clone(),
    )
}

/// Gradients and predictions sampled along the straight baseline-to-input
/// path.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathTrace {
    /// Evenly spaced in `[0, 1]`, both endpoints included.
    pub t_values: Vec<f64>,
    pub gradients: Vec<Vec<f64>>,
    pub predictions: Vec<f64>,
}

/// Samples `f` and `grad f` at `resolution` evenly spaced points from
/// `baseline` (t = 0) to `x` (t = 1).
pub fn gradient_along_path(
    model: &TrainedModel,
    baseline: &[f64],
    x: &[f64],
    resolution: usize,
) -> Result<PathTrace> {
    let n = model.input_dim();
    Error::check_dim(n, x.len())?;
    Error::check_dim(n, baseline.len())?;
    if resolution < 2 {
        return Err(Error::config("path resolution must be at least 2"));
    }
    let mut trace = PathTrace {
        t_values: Vec::with_capacity(resolution),
        gradients: Vec::with_capacity(resolution),
        predictions: Vec::with_capacity(resolution),
    };
    for i in 0..resolution {
        let t = i as f64 / (resolution - 1) as f64;
        let point: Vec<f64> = baseline
            .iter()
            .zip(x)
            .map(|(b, xi)| b + t * (xi - b))
            .collect();
        let (p, g) = model.proba_and_gradient(&point)?;
        trace.t_values.push(t);
        trace.gradients.push(g);
        trace.predictions.push(p);
    }
    Ok(trace)
}
