//! Ground truth for validating boundary samples.
//!
//! Nothing here uses the search: the grid oracle brute-forces the 0.5 level
//! set on a regular lattice, crossings are counted by dense sampling of a
//! segment, linear models get their hyperplane in closed form, and the
//! manifold statistic compares nearest-neighbour distances against the
//! training set's own.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{dot, TrainedModel};

pub const DEFAULT_GRID_RESOLUTION_2D: usize = 512;
pub const DEFAULT_GRID_RESOLUTION_3D: usize = 96;
pub const DEFAULT_CROSSING_RESOLUTION: usize = 1024;
/// Width of the band around 0.5 ignored at the start of a path whose
/// baseline already sits on the boundary.
pub const DEFAULT_CROSSING_BAND: f64 = 1e-3;

/// Linear-interpolation roots of `f - 0.5` on every straddling grid edge.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridOracle {
    pub bounds: Vec<(f64, f64)>,
    /// Cells per dimension.
    pub resolution: usize,
    /// Cell size per dimension.
    pub spacing: Vec<f64>,
    pub boundary_points: Vec<Vec<f64>>,
}

impl GridOracle {
    pub fn max_spacing(&self) -> f64 {
        self.spacing.iter().copied().fold(0.0, f64::max)
    }

    pub fn cell_diagonal(&self) -> f64 {
        self.spacing.iter().map(|s| s * s).sum::<f64>().sqrt()
    }

    /// Distance from `p` to the closest boundary point (infinite when the
    /// oracle found none).
    pub fn nearest_distance(&self, p: &[f64]) -> f64 {
        self.boundary_points
            .iter()
            .map(|q| sq_dist(p, q))
            .fold(f64::INFINITY, f64::min)
            .sqrt()
    }

    pub fn to_csv(&self) -> String {
        let dim = self.bounds.len();
        let mut out = (0..dim).map(|j| format!("f{j}")).collect::<Vec<_>>().join(",");
        out.push('\n');
        for p in &self.boundary_points {
            let row: Vec<String> = p.iter().map(f64::to_string).collect();
            writeln!(out, "{}", row.join(",")).unwrap();
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

/// Default lattice size for a 2-D or 3-D model.
pub fn default_grid_resolution(dim: usize) -> usize {
    if dim == 3 {
        DEFAULT_GRID_RESOLUTION_3D
    } else {
        DEFAULT_GRID_RESOLUTION_2D
    }
}

/// Extracts the `f = 0.5` level set of a 2-D or 3-D model on a regular
/// grid of `resolution` cells per dimension spanning `bounds`.
pub fn grid_boundary(
    model: &TrainedModel,
    bounds: &[(f64, f64)],
    resolution: usize,
) -> Result<GridOracle> {
    let dim = model.input_dim();
    if !(2..=3).contains(&dim) {
        return Err(Error::UnsupportedDimension(dim));
    }
    Error::check_dim(dim, bounds.len())?;
    if resolution < 8 {
        return Err(Error::config("grid resolution must be at least 8"));
    }
    if bounds.iter().any(|&(lo, hi)| !(lo.is_finite() && hi.is_finite() && lo < hi)) {
        return Err(Error::config("grid bounds must be finite with min < max"));
    }
    let nodes = resolution + 1;
    let spacing: Vec<f64> = bounds
        .iter()
        .map(|&(lo, hi)| (hi - lo) / resolution as f64)
        .collect();
    let coord = |axis: usize, k: usize| bounds[axis].0 + k as f64 * spacing[axis];

    // node index = sum k_axis * nodes^axis
    let total = nodes.pow(dim as u32);
    let mut values = Vec::with_capacity(total);
    let mut point = vec![0.0; dim];
    let mut ks = vec![0usize; dim];
    for flat in 0..total {
        let mut rem = flat;
        for axis in 0..dim {
            ks[axis] = rem % nodes;
            rem /= nodes;
            point[axis] = coord(axis, ks[axis]);
        }
        values.push(model.predict_proba(&point)? - 0.5);
    }

    let mut boundary_points = Vec::new();
    let strides: Vec<usize> = (0..dim).map(|a| nodes.pow(a as u32)).collect();
    for flat in 0..total {
        let mut rem = flat;
        for k in ks.iter_mut() {
            *k = rem % nodes;
            rem /= nodes;
        }
        let va = values[flat];
        if va == 0.0 {
            boundary_points.push((0..dim).map(|a| coord(a, ks[a])).collect());
            continue;
        }
        for axis in 0..dim {
            if ks[axis] + 1 >= nodes {
                continue;
            }
            let vb = values[flat + strides[axis]];
            if vb == 0.0 || (va < 0.0) == (vb < 0.0) {
                continue;
            }
            let t = va / (va - vb);
            let p: Vec<f64> = (0..dim)
                .map(|a| {
                    let base = coord(a, ks[a]);
                    if a == axis {
                        base + t * spacing[a]
                    } else {
                        base
                    }
                })
                .collect();
            boundary_points.push(p);
        }
    }
    Ok(GridOracle {
        bounds: bounds.to_vec(),
        resolution,
        spacing,
        boundary_points,
    })
}

/// Sign changes of `f - 0.5` along a segment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossingReport {
    pub count: usize,
    /// Interpolated crossing positions, strictly increasing, in `(0, 1]`.
    pub crossing_ts: Vec<f64>,
    pub resolution: usize,
}

/// Counts boundary crossings on the segment from `baseline` (t = 0) to `x`
/// (t = 1), sampled at `t = i / resolution`.
///
/// When the baseline lies within [`DEFAULT_CROSSING_BAND`] of 0.5 the
/// initial stretch inside that band is skipped, so the baseline's own
/// boundary does not count.
pub fn count_crossings(
    model: &TrainedModel,
    baseline: &[f64],
    x: &[f64],
    resolution: usize,
) -> Result<CrossingReport> {
    count_crossings_with_band(model, baseline, x, resolution, DEFAULT_CROSSING_BAND)
}

pub fn count_crossings_with_band(
    model: &TrainedModel,
    baseline: &[f64],
    x: &[f64],
    resolution: usize,
    band: f64,
) -> Result<CrossingReport> {
    let n = model.input_dim();
    Error::check_dim(n, baseline.len())?;
    Error::check_dim(n, x.len())?;
    if resolution < 2 {
        return Err(Error::config("crossing resolution must be at least 2"));
    }
    let mut report = CrossingReport { count: 0, crossing_ts: Vec::new(), resolution };
    if baseline == x {
        return Ok(report);
    }
    let ts: Vec<f64> = (0..=resolution).map(|i| i as f64 / resolution as f64).collect();
    let values = ts
        .iter()
        .map(|&t| {
            let p: Vec<f64> = baseline.iter().zip(x).map(|(b, xi)| b + t * (xi - b)).collect();
            Ok(model.predict_proba(&p)? - 0.5)
        })
        .collect::<Result<Vec<f64>>>()?;

    let mut start = 0;
    if values[0].abs() <= band {
        while start < values.len() && values[start].abs() <= band {
            start += 1;
        }
        if start == values.len() {
            return Ok(report);
        }
    }
    let mut last_sign = 0.0f64;
    for i in start..values.len() {
        let v = values[i];
        if v == 0.0 {
            continue;
        }
        if last_sign != 0.0 && v.signum() != last_sign {
            let prev = values[i - 1];
            let t = if prev == 0.0 {
                ts[i - 1]
            } else {
                ts[i - 1] + (ts[i] - ts[i - 1]) * prev / (prev - v)
            };
            report.crossing_ts.push(t);
        }
        last_sign = v.signum();
    }
    report.count = report.crossing_ts.len();
    Ok(report)
}

/// `{x : w.x + b = 0}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyperplane {
    pub w: Vec<f64>,
    pub b: f64,
}

impl Hyperplane {
    pub fn signed_distance(&self, x: &[f64]) -> f64 {
        (dot(&self.w, x) + self.b) / dot(&self.w, &self.w).sqrt()
    }

    pub fn distance(&self, x: &[f64]) -> f64 {
        self.signed_distance(x).abs()
    }

    /// Orthogonal projection of `x` onto the plane.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        let s = (dot(&self.w, x) + self.b) / dot(&self.w, &self.w);
        x.iter().zip(&self.w).map(|(xi, wi)| xi - s * wi).collect()
    }
}

/// Decision boundary of a single-affine-layer logistic model.
pub fn analytic_hyperplane(model: &TrainedModel) -> Result<Hyperplane> {
    if model.spec().layer_sizes.len() != 2 {
        return Err(Error::UnsupportedModel(format!(
            "closed-form boundary needs one affine layer, model has {}",
            model.layers().len()
        )));
    }
    let layer = &model.layers()[0];
    if layer.weights().iter().all(|&w| w == 0.0) {
        return Err(Error::UnsupportedModel("all weights are zero: no boundary".into()));
    }
    Ok(Hyperplane {
        w: layer.weights().to_vec(),
        b: layer.biases()[0],
    })
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Squared distance, abandoning the sum once it exceeds `bound`.
fn sq_dist_bounded(a: &[f64], b: &[f64], bound: f64) -> f64 {
    let mut acc = 0.0;
    for (ca, cb) in a.chunks(32).zip(b.chunks(32)) {
        acc += sq_dist(ca, cb);
        if acc > bound {
            break;
        }
    }
    acc
}

/// Distance from every point to its nearest neighbour in `reference`.
pub fn nearest_distances(points: &[Vec<f64>], reference: &[Vec<f64>]) -> Vec<f64> {
    points
        .iter()
        .map(|p| {
            let mut best = f64::INFINITY;
            for r in reference {
                let d = sq_dist_bounded(p, r, best);
                if d < best {
                    best = d;
                }
            }
            best.sqrt()
        })
        .collect()
}

/// Leave-one-out nearest-neighbour distance within `reference`.
pub fn self_nearest_distances(reference: &[Vec<f64>]) -> Vec<f64> {
    let n = reference.len();
    let mut best = vec![f64::INFINITY; n];
    for i in 0..n {
        for j in i + 1..n {
            let bound = best[i].max(best[j]);
            let d = sq_dist_bounded(&reference[i], &reference[j], bound);
            if d < best[i] {
                best[i] = d;
            }
            if d < best[j] {
                best[j] = d;
            }
        }
    }
    best.into_iter().map(f64::sqrt).collect()
}

/// Linear-interpolation quantile; `q` in `[0, 1]`.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

/// How far generated points sit from the data they should live among.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifoldCloseness {
    pub quantile: f64,
    /// `quantile`-th percentile of the reference set's own NN distances.
    pub threshold: f64,
    /// Fraction of points whose NN distance is at most `threshold`.
    pub fraction_within: f64,
    pub distances: Vec<f64>,
}

pub fn manifold_closeness(
    points: &[Vec<f64>],
    reference: &[Vec<f64>],
    q: f64,
) -> Result<ManifoldCloseness> {
    if reference.len() < 2 {
        return Err(Error::DegenerateData("manifold check needs two reference points".into()));
    }
    let threshold = quantile(&self_nearest_distances(reference), q);
    let distances = nearest_distances(points, reference);
    let fraction_within = if distances.is_empty() {
        0.0
    } else {
        distances.iter().filter(|&&d| d <= threshold).count() as f64 / distances.len() as f64
    };
    Ok(ManifoldCloseness { quantile: q, threshold, fraction_within, distances })
}
