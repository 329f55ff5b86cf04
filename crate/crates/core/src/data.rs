//! Synthetic binary datasets.
//!
//! Every generator is a pure function of its arguments: the same parameters
//! and seed give the same bits.
//!
//! - [`generate_hypercube`]: Gaussian clusters sitting on hypercube vertices,
//!   with a random linear mix inside each cluster.
//! - [`generate_spiral`]: two interleaved Archimedean spirals.
//! - [`generate_brain`]: hypercube data scattered into an elliptic brain mask
//!   and blurred with a Gaussian filter.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

const DATASET_FORMAT: &str = "ibs-dataset";

/// Feature matrix with binary labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<u8>,
    /// Sorted indices of the features that carry class information.
    pub informative_indices: Vec<usize>,
    pub seed: u64,
}

impl Dataset {
    /// Checks shapes, labels and finiteness. Both classes must be present.
    pub fn new(
        name: impl Into<String>,
        features: Vec<Vec<f64>>,
        labels: Vec<u8>,
        informative_indices: Vec<usize>,
        seed: u64,
    ) -> Result<Self> {
        let ds = Self {
            name: name.into(),
            features,
            labels,
            informative_indices,
            seed,
        };
        ds.validate()?;
        Ok(ds)
    }

    fn validate(&self) -> Result<()> {
        if self.features.len() != self.labels.len() {
            return Err(Error::DegenerateData(format!(
                "{} feature rows but {} labels",
                self.features.len(),
                self.labels.len()
            )));
        }
        let dim = self.n_features();
        if dim == 0 {
            return Err(Error::DegenerateData("dataset has no features".into()));
        }
        for (i, row) in self.features.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::InputShape { expected: dim, got: row.len() });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::DegenerateData(format!("row {i} has a non-finite entry")));
            }
        }
        if self.labels.iter().any(|&l| l > 1) {
            return Err(Error::DegenerateData("labels must be 0 or 1".into()));
        }
        let counts = self.class_counts();
        if counts[0] == 0 || counts[1] == 0 {
            return Err(Error::DegenerateData("dataset contains a single class".into()));
        }
        if self.informative_indices.windows(2).any(|w| w[0] >= w[1])
            || self.informative_indices.iter().any(|&i| i >= dim)
        {
            return Err(Error::DegenerateData(
                "informative indices must be sorted, unique and in range".into(),
            ));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    pub fn class_counts(&self) -> [usize; 2] {
        let ones = self.labels.iter().filter(|&&l| l == 1).count();
        [self.labels.len() - ones, ones]
    }

    /// Rows `indices`, split by label into (class 0, class 1).
    pub fn class_pools(&self, indices: &[usize]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let mut pools = (Vec::new(), Vec::new());
        for &i in indices {
            let row = self.features[i].clone();
            if self.labels[i] == 0 {
                pools.0.push(row);
            } else {
                pools.1.push(row);
            }
        }
        pools
    }

    /// The rows `indices`, in that order, with the same metadata.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        Dataset::new(
            self.name.clone(),
            indices.iter().map(|&i| self.features[i].clone()).collect(),
            indices.iter().map(|&i| self.labels[i]).collect(),
            self.informative_indices.clone(),
            self.seed,
        )
    }

    /// Per-feature `(min, max)`.
    pub fn bounds(&self) -> Vec<(f64, f64)> {
        let mut b = vec![(f64::INFINITY, f64::NEG_INFINITY); self.n_features()];
        for row in &self.features {
            for (bj, &v) in b.iter_mut().zip(row) {
                bj.0 = bj.0.min(v);
                bj.1 = bj.1.max(v);
            }
        }
        b
    }

    /// Bounding box grown by `fraction` of its extent on every side.
    pub fn expanded_bounds(&self, fraction: f64) -> Vec<(f64, f64)> {
        self.bounds()
            .into_iter()
            .map(|(lo, hi)| {
                let pad = (hi - lo) * fraction;
                (lo - pad, hi + pad)
            })
            .collect()
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        let header = CsvHeader {
            format: DATASET_FORMAT.to_owned(),
            version: 1,
            name: self.name.clone(),
            seed: self.seed,
            n_samples: self.len(),
            n_features: self.n_features(),
            informative_indices: self.informative_indices.clone(),
        };
        writeln!(w, "# {}", serde_json::to_string(&header)?)?;
        let names: Vec<String> = (0..self.n_features()).map(|j| format!("f{j}")).collect();
        writeln!(w, "{},label", names.join(","))?;
        let mut line = String::new();
        for (row, label) in self.features.iter().zip(&self.labels) {
            line.clear();
            for v in row {
                // Display for f64 is the shortest string that round-trips.
                write!(line, "{v},").unwrap();
            }
            writeln!(line, "{label}").unwrap();
            w.write_all(line.as_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let reader = BufReader::new(std::fs::File::open(path)?);
        let mut header: Option<CsvHeader> = None;
        let mut features = Vec::new();
        let mut labels = Vec::new();
        let mut width: Option<usize> = None;
        let mut columns_seen = false;
        for (n, line) in reader.lines().enumerate() {
            let lineno = n + 1;
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(meta) = line.strip_prefix('#') {
                if lineno == 1 {
                    header = Some(serde_json::from_str(meta.trim()).map_err(|e| Error::Parse {
                        line: lineno,
                        message: format!("bad metadata comment: {e}"),
                    })?);
                }
                continue;
            }
            if !columns_seen && width.is_none() && line.ends_with("label") {
                columns_seen = true;
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() < 2 {
                return Err(Error::Parse {
                    line: lineno,
                    message: "expected at least one feature and a label".into(),
                });
            }
            if let Some(w) = width {
                if fields.len() != w {
                    return Err(Error::Parse {
                        line: lineno,
                        message: format!("expected {w} fields, found {}", fields.len()),
                    });
                }
            } else {
                width = Some(fields.len());
            }
            let (label_field, value_fields) = fields.split_last().unwrap();
            let row = value_fields
                .iter()
                .map(|f| {
                    f.trim()
                        .parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| Error::Parse {
                            line: lineno,
                            message: format!("invalid number {f:?}"),
                        })
                })
                .collect::<Result<Vec<_>>>()?;
            let label = match label_field.trim() {
                "0" => 0,
                "1" => 1,
                other => {
                    return Err(Error::Parse {
                        line: lineno,
                        message: format!("label must be 0 or 1, found {other:?}"),
                    })
                }
            };
            features.push(row);
            labels.push(label);
        }
        let header = header.unwrap_or_else(|| CsvHeader {
            format: DATASET_FORMAT.to_owned(),
            version: 1,
            name: "unnamed".into(),
            seed: 0,
            n_samples: labels.len(),
            n_features: width.map_or(0, |w| w - 1),
            informative_indices: Vec::new(),
        });
        if header.format != DATASET_FORMAT {
            return Err(Error::Parse {
                line: 1,
                message: format!("unknown dataset format {:?}", header.format),
            });
        }
        if header.n_samples != labels.len() {
            return Err(Error::Parse {
                line: 1,
                message: format!(
                    "metadata announces {} samples, file has {}",
                    header.n_samples,
                    labels.len()
                ),
            });
        }
        Self::new(header.name, features, labels, header.informative_indices, header.seed)
    }
}

#[derive(Serialize, Deserialize)]
struct CsvHeader {
    format: String,
    version: u32,
    name: String,
    seed: u64,
    n_samples: usize,
    n_features: usize,
    informative_indices: Vec<usize>,
}

/// Seeded train/test partition of `0..n`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    /// Shuffles `0..n` and keeps `round(n * train_fraction)` indices for
    /// training (at least one on each side when `n >= 2`).
    pub fn seeded(n: usize, train_fraction: f64, seed: u64) -> Self {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut seed::rng(seed));
        let mut k = (n as f64 * train_fraction).round() as usize;
        if n >= 2 {
            k = k.clamp(1, n - 1);
        }
        let test = order.split_off(k.min(n));
        Self { train: order, test }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HypercubeParams {
    pub n_samples: usize,
    pub n_features: usize,
    pub n_informative: usize,
    pub clusters_per_class: usize,
    /// Half the hypercube side length.
    pub class_sep: f64,
    pub seed: u64,
}

/// Gaussian clusters on distinct vertices of the `[-class_sep, class_sep]`
/// hypercube spanned by the informative features.
///
/// Each cluster draws standard-normal informative coordinates, mixes them
/// with its own random square matrix (N(0,1) entries) and shifts them to its
/// vertex. Clusters alternate classes and samples are dealt round-robin over
/// clusters, so row `i` has label `i % 2`. Informative features occupy the
/// leading columns; the rest is standard-normal noise.
pub fn generate_hypercube(p: &HypercubeParams) -> Result<Dataset> {
    if p.n_informative == 0 || p.n_informative > p.n_features {
        return Err(Error::config("need 1 <= n_informative <= n_features"));
    }
    if p.clusters_per_class == 0 {
        return Err(Error::config("clusters_per_class must be at least 1"));
    }
    let n_clusters = 2 * p.clusters_per_class;
    if p.n_informative < 64 && (n_clusters as u128) > (1u128 << p.n_informative) {
        return Err(Error::config(format!(
            "{n_clusters} clusters do not fit on the {} vertices of a {}-cube",
            1u128 << p.n_informative,
            p.n_informative
        )));
    }
    if p.n_samples < 2 {
        return Err(Error::config("need at least two samples"));
    }
    if !(p.class_sep.is_finite() && p.class_sep >= 0.0) {
        return Err(Error::config("class_sep must be finite and non-negative"));
    }

    let dim = p.n_informative;
    let mut rng = seed::rng(p.seed);
    let mut seen = HashSet::new();
    let mut vertices = Vec::with_capacity(n_clusters);
    while vertices.len() < n_clusters {
        let signs: Vec<bool> = (0..dim).map(|_| rng.random::<bool>()).collect();
        if seen.insert(signs.clone()) {
            vertices.push(
                signs
                    .into_iter()
                    .map(|s| if s { p.class_sep } else { -p.class_sep })
                    .collect::<Vec<f64>>(),
            );
        }
    }
    let mixers: Vec<Vec<f64>> = (0..n_clusters)
        .map(|_| (0..dim * dim).map(|_| rng.sample(StandardNormal)).collect())
        .collect();

    let mut features = Vec::with_capacity(p.n_samples);
    let mut labels = Vec::with_capacity(p.n_samples);
    let mut z = vec![0.0; dim];
    for i in 0..p.n_samples {
        let c = i % n_clusters;
        z.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
        let mut row = Vec::with_capacity(p.n_features);
        let mix = &mixers[c];
        for (r, &v) in vertices[c].iter().enumerate() {
            let mixed: f64 = mix[r * dim..(r + 1) * dim]
                .iter()
                .zip(&z)
                .map(|(a, b)| a * b)
                .sum();
            row.push(mixed + v);
        }
        for _ in dim..p.n_features {
            row.push(rng.sample(StandardNormal));
        }
        features.push(row);
        labels.push((c % 2) as u8);
    }
    Dataset::new(
        "hypercube",
        features,
        labels,
        (0..dim).collect(),
        p.seed,
    )
}

/// Two interleaved Archimedean spirals in the unit disc.
///
/// Arm 0 follows `r = theta / theta_max` for `theta` in `(0, 2 pi turns]`,
/// arm 1 is the same curve rotated by pi. Angles are spaced so points are
/// roughly uniform along the arc, and pairs `(2k, 2k+1)` share the same
/// angle, so radii are non-decreasing in the row index when the noise is
/// zero. Isotropic Gaussian noise with std `noise_sigma` is added to every
/// point.
pub fn generate_spiral(n_samples: usize, noise_sigma: f64, turns: f64, seed: u64) -> Result<Dataset> {
    if n_samples < 2 || !n_samples.is_multiple_of(2) {
        return Err(Error::config("spiral needs an even, positive number of samples"));
    }
    if !(turns > 0.0 && turns.is_finite()) {
        return Err(Error::config("turns must be positive"));
    }
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::config("noise_sigma must be non-negative"));
    }
    let per_arm = n_samples / 2;
    let theta_max = 2.0 * std::f64::consts::PI * turns;
    let mut rng = seed::rng(seed);
    let mut features = Vec::with_capacity(n_samples);
    let mut labels = Vec::with_capacity(n_samples);
    for k in 0..per_arm {
        let theta = theta_max * ((k as f64 + 0.5) / per_arm as f64).sqrt();
        let r = theta / theta_max;
        let (x, y) = (r * theta.cos(), r * theta.sin());
        for (label, (px, py)) in [(0u8, (x, y)), (1u8, (-x, -y))] {
            let nx: f64 = rng.sample(StandardNormal);
            let ny: f64 = rng.sample(StandardNormal);
            features.push(vec![px + noise_sigma * nx, py + noise_sigma * ny]);
            labels.push(label);
        }
    }
    Dataset::new("spiral", features, labels, vec![0, 1], seed)
}

/// Pixel geometry of the simulated brain view.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BrainLayout {
    pub height: usize,
    pub width: usize,
    /// Row-major, `height * width` entries.
    pub mask: Vec<bool>,
    /// Row-major image indices of the informative pixels, sorted.
    pub informative_pixels: Vec<usize>,
    pub smoothing_sigma: f64,
}

impl BrainLayout {
    /// Image indices of the masked pixels, in feature order.
    pub fn mask_pixels(&self) -> Vec<usize> {
        self.mask
            .iter()
            .enumerate()
            .filter_map(|(i, &m)| m.then_some(i))
            .collect()
    }

    pub fn n_mask_pixels(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Scatters one feature vector into a full image (zeros off-mask).
    pub fn to_image(&self, features: &[f64]) -> Result<Vec<f64>> {
        let pixels = self.mask_pixels();
        Error::check_dim(pixels.len(), features.len())?;
        let mut img = vec![0.0; self.height * self.width];
        for (&p, &v) in pixels.iter().zip(features) {
            img[p] = v;
        }
        Ok(img)
    }

    /// Writes the mask as a binary PGM (`P5`) image plus a JSON sidecar.
    pub fn save(&self, pgm: impl AsRef<Path>, sidecar: impl AsRef<Path>) -> Result<()> {
        let mut bytes = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        bytes.extend(self.mask.iter().map(|&m| if m { 255u8 } else { 0u8 }));
        std::fs::write(pgm.as_ref(), bytes)?;
        let side = LayoutSidecar {
            height: self.height,
            width: self.width,
            smoothing_sigma: self.smoothing_sigma,
            n_mask_pixels: self.n_mask_pixels(),
            informative_pixels: self.informative_pixels.clone(),
            mask_image: pgm
                .as_ref()
                .file_name()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default(),
        };
        let mut text = serde_json::to_string_pretty(&side)?;
        text.push('\n');
        std::fs::write(sidecar, text)?;
        Ok(())
    }

    pub fn load(pgm: impl AsRef<Path>, sidecar: impl AsRef<Path>) -> Result<Self> {
        let side: LayoutSidecar = serde_json::from_str(&std::fs::read_to_string(sidecar)?)?;
        let bytes = std::fs::read(pgm)?;
        let header = format!("P5\n{} {}\n255\n", side.width, side.height);
        let body = bytes
            .strip_prefix(header.as_bytes())
            .ok_or_else(|| Error::Parse { line: 1, message: "unexpected PGM header".into() })?;
        if body.len() != side.width * side.height {
            return Err(Error::Parse { line: 4, message: "PGM size mismatch".into() });
        }
        Ok(Self {
            height: side.height,
            width: side.width,
            mask: body.iter().map(|&b| b > 127).collect(),
            informative_pixels: side.informative_pixels,
            smoothing_sigma: side.smoothing_sigma,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct LayoutSidecar {
    height: usize,
    width: usize,
    smoothing_sigma: f64,
    n_mask_pixels: usize,
    informative_pixels: Vec<usize>,
    mask_image: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BrainParams {
    pub n_samples: usize,
    pub height: usize,
    pub width: usize,
    pub n_features: usize,
    pub n_informative: usize,
    pub clusters_per_class: usize,
    pub class_sep: f64,
    pub smoothing_sigma: f64,
    pub seed: u64,
}

impl Default for BrainParams {
    fn default() -> Self {
        Self {
            n_samples: 2500,
            height: 109,
            width: 91,
            n_features: 5290,
            n_informative: 53,
            clusters_per_class: 1,
            class_sep: 1.0,
            smoothing_sigma: 2.0,
            seed: 0,
        }
    }
}

/// Simulated brain views with default geometry (109x91, 5290 masked pixels,
/// 53 informative, sigma 2).
pub fn generate_brain(n_samples: usize, seed: u64) -> Result<(Dataset, BrainLayout)> {
    generate_brain_with(&BrainParams { n_samples, seed, ..BrainParams::default() })
}

pub fn generate_brain_with(p: &BrainParams) -> Result<(Dataset, BrainLayout)> {
    if !(p.smoothing_sigma >= 0.0 && p.smoothing_sigma.is_finite()) {
        return Err(Error::config("smoothing_sigma must be non-negative"));
    }
    let mask = elliptic_mask(p.height, p.width, p.n_features)?;
    let mask_pixels: Vec<usize> = mask
        .iter()
        .enumerate()
        .filter_map(|(i, &m)| m.then_some(i))
        .collect();

    let mut rng = seed::rng(seed::derive(p.seed, "brain-layout"));
    let mut informative_features = index::sample(&mut rng, p.n_features, p.n_informative).into_vec();
    informative_features.sort_unstable();

    let raw = generate_hypercube(&HypercubeParams {
        n_samples: p.n_samples,
        n_features: p.n_features,
        n_informative: p.n_informative,
        clusters_per_class: p.clusters_per_class,
        class_sep: p.class_sep,
        seed: seed::derive(p.seed, "brain-values"),
    })?;

    // Hypercube column j < n_informative goes to informative_features[j],
    // the noise columns fill the remaining masked positions in order.
    let mut placement = Vec::with_capacity(p.n_features);
    placement.extend_from_slice(&informative_features);
    let informative: HashSet<usize> = informative_features.iter().copied().collect();
    placement.extend((0..p.n_features).filter(|f| !informative.contains(f)));

    let layout = BrainLayout {
        height: p.height,
        width: p.width,
        mask,
        informative_pixels: informative_features.iter().map(|&f| mask_pixels[f]).collect(),
        smoothing_sigma: p.smoothing_sigma,
    };

    let kernel = gaussian_kernel(p.smoothing_sigma);
    let mut img = vec![0.0; p.height * p.width];
    let features = raw
        .features
        .iter()
        .map(|row| {
            img.iter_mut().for_each(|v| *v = 0.0);
            for (&f, &v) in placement.iter().zip(row) {
                img[mask_pixels[f]] = v;
            }
            let smooth = convolve_separable(&img, p.height, p.width, &kernel);
            mask_pixels.iter().map(|&px| smooth[px]).collect()
        })
        .collect();

    let dataset = Dataset::new("brain", features, raw.labels, informative_features, p.seed)?;
    Ok((dataset, layout))
}

/// An axis-aligned ellipse holding exactly `count` pixels of the grid.
///
/// Pixels are ranked by their normalized elliptic radius around a centre
/// nudged off the pixel lattice (so no two radii tie) and the `count`
/// innermost ones are kept, which is the ellipse grown until it holds
/// `count` pixels.
pub fn elliptic_mask(height: usize, width: usize, count: usize) -> Result<Vec<bool>> {
    if count == 0 || count > height * width {
        return Err(Error::config(format!(
            "cannot fit {count} pixels in a {height}x{width} grid"
        )));
    }
    let (cr, cc) = ((height as f64 - 1.0) / 2.0 + 0.25, (width as f64 - 1.0) / 2.0 + 0.125);
    let (a, b) = (height as f64 / 2.0, width as f64 / 2.0);
    let mut radii: Vec<(f64, usize)> = (0..height * width)
        .map(|i| {
            let (r, c) = ((i / width) as f64, (i % width) as f64);
            (((r - cr) / a).powi(2) + ((c - cc) / b).powi(2), i)
        })
        .collect();
    radii.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
    if count < radii.len() && radii[count - 1].0 == radii[count].0 {
        return Err(Error::config("elliptic mask has a tie at the requested size"));
    }
    let mut mask = vec![false; height * width];
    for &(_, i) in &radii[..count] {
        mask[i] = true;
    }
    Ok(mask)
}

/// Normalized 1-D Gaussian taps truncated at 4 sigma; `[1.0]` for sigma 0.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    if sigma == 0.0 {
        return vec![1.0];
    }
    let radius = (4.0 * sigma).ceil() as i64;
    let taps: Vec<f64> = (-radius..=radius)
        .map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / total).collect()
}

/// Separable convolution with zero padding.
pub fn convolve_separable(img: &[f64], height: usize, width: usize, kernel: &[f64]) -> Vec<f64> {
    if kernel.len() == 1 && kernel[0] == 1.0 {
        return img.to_vec();
    }
    let r = (kernel.len() / 2) as isize;
    let mut tmp = vec![0.0; img.len()];
    for row in 0..height {
        for col in 0..width {
            let mut acc = 0.0;
            for (k, &t) in kernel.iter().enumerate() {
                let c = col as isize + k as isize - r;
                if c >= 0 && (c as usize) < width {
                    acc += t * img[row * width + c as usize];
                }
            }
            tmp[row * width + col] = acc;
        }
    }
    let mut out = vec![0.0; img.len()];
    for row in 0..height {
        for col in 0..width {
            let mut acc = 0.0;
            for (k, &t) in kernel.iter().enumerate() {
                let rr = row as isize + k as isize - r;
                if rr >= 0 && (rr as usize) < height {
                    acc += t * tmp[rr as usize * width + col];
                }
            }
            out[row * width + col] = acc;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn custom_like(seed: u64) -> HypercubeParams {
        HypercubeParams {
            n_samples: 2000,
            n_features: 2,
            n_informative: 2,
            clusters_per_class: 2,
            class_sep: 2.0,
            seed,
        }
    }

    #[test]
    fn hypercube_is_deterministic_and_balanced() {
        let a = generate_hypercube(&custom_like(3)).unwrap();
        let b = generate_hypercube(&custom_like(3)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.class_counts(), [1000, 1000]);
        assert_ne!(a, generate_hypercube(&custom_like(4)).unwrap());
    }

    #[test]
    fn hypercube_rejects_too_many_clusters() {
        let p = HypercubeParams { clusters_per_class: 3, ..custom_like(0) };
        assert!(matches!(generate_hypercube(&p), Err(Error::Config(_))));
        let p = HypercubeParams { n_informative: 3, ..custom_like(0) };
        assert!(generate_hypercube(&p).is_err());
    }

    #[test]
    fn custom_preset_has_four_clusters() {
        let d = generate_hypercube(&custom_like(11)).unwrap();
        // rows with the same i % 4 belong to one cluster; their means sit on
        // four distinct vertices of the square
        let mut means = vec![[0.0f64; 2]; 4];
        for (i, row) in d.features.iter().enumerate() {
            means[i % 4][0] += row[0] / 500.0;
            means[i % 4][1] += row[1] / 500.0;
        }
        let mut corners: Vec<(i8, i8)> = means
            .iter()
            .map(|m| (m[0].signum() as i8, m[1].signum() as i8))
            .collect();
        corners.sort_unstable();
        corners.dedup();
        assert_eq!(corners.len(), 4);
        for m in &means {
            assert!((m[0].abs() - 2.0).abs() < 0.5 && (m[1].abs() - 2.0).abs() < 0.5);
        }
    }

    #[test]
    fn one_dimensional_blobs_are_ten_apart() {
        let d = generate_hypercube(&HypercubeParams {
            n_samples: 2000,
            n_features: 1,
            n_informative: 1,
            clusters_per_class: 1,
            class_sep: 5.0,
            seed: 5,
        })
        .unwrap();
        let mut sums = [0.0; 2];
        for (row, &l) in d.features.iter().zip(&d.labels) {
            sums[l as usize] += row[0];
        }
        let gap = (sums[0] / 1000.0 - sums[1] / 1000.0).abs();
        assert!((gap - 10.0).abs() <= 0.5, "gap {gap}");
    }

    #[test]
    fn spiral_symmetry_and_ordering() {
        let d = generate_spiral(400, 0.0, 1.5, 1).unwrap();
        for k in 0..200 {
            let (a, b) = (&d.features[2 * k], &d.features[2 * k + 1]);
            assert_eq!((d.labels[2 * k], d.labels[2 * k + 1]), (0, 1));
            assert_eq!((-a[0], -a[1]), (b[0], b[1]));
        }
        let radii: Vec<f64> = d.features.iter().map(|p| p[0].hypot(p[1])).collect();
        assert!(radii.windows(2).all(|w| w[0] <= w[1]));
        assert!(generate_spiral(401, 0.1, 1.5, 0).is_err());
        assert!(generate_spiral(400, 0.1, 0.0, 0).is_err());
    }

    #[test]
    fn mask_has_exact_count() {
        let mask = elliptic_mask(109, 91, 5290).unwrap();
        assert_eq!(mask.iter().filter(|&&m| m).count(), 5290);
        // border pixels stay outside
        assert!(!mask[0] && !mask[108 * 91 + 90]);
    }

    #[test]
    fn zero_sigma_is_identity() {
        let img: Vec<f64> = (0..20).map(|i| (i as f64).sin()).collect();
        let out = convolve_separable(&img, 4, 5, &gaussian_kernel(0.0));
        assert_eq!(out, img);
        let k = gaussian_kernel(2.0);
        assert_eq!(k.len(), 17);
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn unsmoothed_brain_is_plain_placement() {
        let p = BrainParams {
            n_samples: 6,
            smoothing_sigma: 0.0,
            seed: 9,
            ..BrainParams::default()
        };
        let (d, layout) = generate_brain_with(&p).unwrap();
        let raw = generate_hypercube(&HypercubeParams {
            n_samples: 6,
            n_features: 5290,
            n_informative: 53,
            clusters_per_class: 1,
            class_sep: 1.0,
            seed: seed::derive(9, "brain-values"),
        })
        .unwrap();
        for (row, raw_row) in d.features.iter().zip(&raw.features) {
            for (j, &f) in d.informative_indices.iter().enumerate() {
                assert_eq!(row[f], raw_row[j]);
            }
            let mut a = row.clone();
            let mut b = raw_row.clone();
            a.sort_by(f64::total_cmp);
            b.sort_by(f64::total_cmp);
            assert_eq!(a, b);
        }
        assert_eq!(layout.informative_pixels.len(), 53);
        assert!(layout.informative_pixels.iter().all(|&px| layout.mask[px]));
    }

    #[test]
    fn split_partitions_indices() {
        let s = Split::seeded(100, 0.85, 4);
        assert_eq!((s.train.len(), s.test.len()), (85, 15));
        let mut all: Vec<usize> = s.train.iter().chain(&s.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
        assert_eq!(s, Split::seeded(100, 0.85, 4));
    }

    #[test]
    fn csv_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let d = generate_spiral(20, 0.05, 1.5, 2).unwrap();
        d.write_csv(&path).unwrap();
        assert_eq!(Dataset::read_csv(&path).unwrap(), d);

        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines: Vec<&str> = text.lines().collect();
        lines[5] = "0.1,abc,1";
        std::fs::write(&path, lines.join("\n")).unwrap();
        match Dataset::read_csv(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 6),
            other => panic!("expected parse error, got {other:?}"),
        }
        lines[5] = "0.1,0.2,7";
        std::fs::write(&path, lines.join("\n")).unwrap();
        assert!(matches!(Dataset::read_csv(&path), Err(Error::Parse { line: 6, .. })));
    }

    #[test]
    fn single_class_is_rejected() {
        let r = Dataset::new("x", vec![vec![0.0], vec![1.0]], vec![1, 1], vec![], 0);
        assert!(matches!(r, Err(Error::DegenerateData(_))));
    }
}
