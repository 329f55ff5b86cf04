//! Informed Baseline Search.
//!
//! Starting from a data point, the candidate baseline is repeatedly pulled
//! toward a randomly drawn training sample of the class that is currently
//! losing, by a fraction `|f - 0.5| * gamma^step` of the way. The fraction
//! vanishes only at `f = 0.5`, so the walk stops exactly when it reaches the
//! decision boundary, and since every move is a convex step toward a data
//! point the walk stays inside the region spanned by the data.
//!
//! [`select_optimal_baseline`] then picks, for an input under analysis, the
//! closest boundary sample.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::{index, IndexedRandom, SliceRandom};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::{dot, TrainedModel};
use crate::oracle::{count_crossings, DEFAULT_CROSSING_RESOLUTION};
use crate::seed;

/// How target points are drawn.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PoolMode {
    /// Uniformly from the whole class pool.
    #[default]
    FullClass,
    /// Uniformly from `k` pool members fixed at the start of each search.
    Subsample(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    /// Halting tolerance on `|f - 0.5|`.
    pub epsilon: f64,
    pub max_steps: usize,
    /// Base of the step decay `gamma^step`, in `(0, 1]`.
    pub gamma: f64,
    pub pool_seed: u64,
    pub pool_mode: PoolMode,
    pub record_trace: bool,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-3,
            max_steps: 10_000,
            gamma: 0.999,
            pool_seed: 0,
            pool_mode: PoolMode::FullClass,
            record_trace: false,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon < 0.5) {
            return Err(Error::config("epsilon must lie in (0, 0.5)"));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::config("gamma must lie in (0, 1]"));
        }
        if self.max_steps == 0 || self.max_steps > i32::MAX as usize {
            return Err(Error::config("max_steps must be a positive 32-bit count"));
        }
        if self.pool_mode == PoolMode::Subsample(0) {
            return Err(Error::config("subsample size must be positive"));
        }
        Ok(())
    }
}

/// One iteration of a search, recorded before the move.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub point: Vec<f64>,
    pub prediction: f64,
    pub magnitude: f64,
    /// Class of the pool the target was drawn from.
    pub target_class: u8,
    /// Index of the target inside its class pool.
    pub target_index: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundarySample {
    pub point: Vec<f64>,
    pub prediction: f64,
    pub steps_taken: usize,
    /// Empty when the sample was read back from a boundary file.
    pub start: Vec<f64>,
    /// `|prediction - 0.5| <= epsilon`.
    pub converged: bool,
    pub trace: Option<Vec<TraceStep>>,
}

/// State of one search; shared by the sequential and lockstep drivers.
struct Search<'a> {
    pools: [&'a [Vec<f64>]; 2],
    /// Restriction of each pool under [`PoolMode::Subsample`].
    members: [Option<Vec<usize>>; 2],
    rng: seed::Rng,
    start: Vec<f64>,
    point: Vec<f64>,
    prediction: f64,
    step: usize,
    trace: Option<Vec<TraceStep>>,
}

impl<'a> Search<'a> {
    fn new(
        start: &[f64],
        pools: [&'a [Vec<f64>]; 2],
        config: &SearchConfig,
        stream_seed: u64,
    ) -> Self {
        let mut rng = seed::rng(stream_seed);
        let members = match config.pool_mode {
            PoolMode::FullClass => [None, None],
            PoolMode::Subsample(k) => {
                let mut pick = |len: usize| {
                    let mut idx = index::sample(&mut rng, len, k.min(len)).into_vec();
                    idx.sort_unstable();
                    Some(idx)
                };
                let m0 = pick(pools[0].len());
                let m1 = pick(pools[1].len());
                [m0, m1]
            }
        };
        Self {
            pools,
            members,
            rng,
            start: start.to_vec(),
            point: start.to_vec(),
            prediction: f64::NAN,
            step: 0,
            trace: config.record_trace.then(Vec::new),
        }
    }

    fn done(&self, config: &SearchConfig) -> bool {
        (self.prediction - 0.5).abs() <= config.epsilon || self.step >= config.max_steps
    }

    /// Moves toward a member of the losing class. The caller re-evaluates
    /// the prediction afterwards.
    fn advance(&mut self, config: &SearchConfig) {
        let losing = usize::from(self.prediction < 0.5);
        let target_index = match &self.members[losing] {
            None => self.rng.random_range(0..self.pools[losing].len()),
            Some(m) => *m.choose(&mut self.rng).unwrap(),
        };
        let target = &self.pools[losing][target_index];
        let magnitude = (self.prediction - 0.5).abs() * config.gamma.powi(self.step as i32);
        if let Some(trace) = &mut self.trace {
            trace.push(TraceStep {
                point: self.point.clone(),
                prediction: self.prediction,
                magnitude,
                target_class: losing as u8,
                target_index,
            });
        }
        for (p, t) in self.point.iter_mut().zip(target) {
            *p += (t - *p) * magnitude;
        }
        self.step += 1;
    }

    fn finish(self, config: &SearchConfig) -> BoundarySample {
        BoundarySample {
            converged: (self.prediction - 0.5).abs() <= config.epsilon,
            point: self.point,
            prediction: self.prediction,
            steps_taken: self.step,
            start: self.start,
            trace: self.trace,
        }
    }
}

fn check_inputs(
    model: &TrainedModel,
    starts: &[Vec<f64>],
    pool0: &[Vec<f64>],
    pool1: &[Vec<f64>],
    config: &SearchConfig,
) -> Result<()> {
    config.validate()?;
    if pool0.is_empty() || pool1.is_empty() {
        return Err(Error::config("both class pools must be non-empty"));
    }
    let n = model.input_dim();
    for row in starts.iter().chain(pool0).chain(pool1) {
        Error::check_dim(n, row.len())?;
    }
    Ok(())
}

/// Runs one search from `start`, drawing targets with an RNG seeded by
/// `config.pool_seed`.
///
/// Running out of steps is not an error: the sample comes back with
/// `converged == false`.
pub fn ibs_search(
    model: &TrainedModel,
    start: &[f64],
    pool0: &[Vec<f64>],
    pool1: &[Vec<f64>],
    config: &SearchConfig,
) -> Result<BoundarySample> {
    check_inputs(model, std::slice::from_ref(&start.to_vec()), pool0, pool1, config)?;
    let mut s = Search::new(start, [pool0, pool1], config, config.pool_seed);
    s.prediction = model.predict_proba(&s.point)?;
    while !s.done(config) {
        s.advance(config);
        s.prediction = model.predict_proba(&s.point)?;
    }
    Ok(s.finish(config))
}

/// Advances one search per start in lockstep, evaluating the model once per
/// step on the stacked candidates of all searches still running.
///
/// Search `i` uses the RNG stream `seeds[i]`; the result equals
/// `ibs_search` with `pool_seed = seeds[i]`.
pub fn ibs_search_batch(
    model: &TrainedModel,
    starts: &[Vec<f64>],
    pool0: &[Vec<f64>],
    pool1: &[Vec<f64>],
    config: &SearchConfig,
    seeds: &[u64],
) -> Result<Vec<BoundarySample>> {
    check_inputs(model, starts, pool0, pool1, config)?;
    if seeds.len() != starts.len() {
        return Err(Error::config("one RNG seed per start is required"));
    }
    let mut searches: Vec<Search> = starts
        .iter()
        .zip(seeds)
        .map(|(s, &sd)| Search::new(s, [pool0, pool1], config, sd))
        .collect();
    let mut active: Vec<usize> = (0..searches.len()).collect();
    let mut candidates: Vec<Vec<f64>> = starts.to_vec();
    loop {
        let predictions = model.predict_batch(&candidates)?;
        for (&i, p) in active.iter().zip(predictions) {
            searches[i].prediction = p;
        }
        active.retain(|&i| !searches[i].done(config));
        if active.is_empty() {
            break;
        }
        candidates.clear();
        for &i in &active {
            searches[i].advance(config);
            candidates.push(searches[i].point.clone());
        }
    }
    Ok(searches.into_iter().map(|s| s.finish(config)).collect())
}

/// Outcome of [`sample_boundary`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundarySampling {
    /// Converged samples only.
    pub samples: Vec<BoundarySample>,
    pub attempted: usize,
    pub failures: usize,
}

impl BoundarySampling {
    pub fn convergence_rate(&self) -> f64 {
        if self.attempted == 0 {
            0.0
        } else {
            self.samples.len() as f64 / self.attempted as f64
        }
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        self.samples.iter().map(|s| s.point.clone()).collect()
    }
}

/// Runs `n_samples` searches from training points of alternating classes,
/// with the class-split of `train` as target pools.
///
/// Starts are drawn without replacement per class (cycling once a class is
/// exhausted) and search `i` uses stream `derive_indexed(pool_seed, i)`.
pub fn sample_boundary(
    model: &TrainedModel,
    train: &Dataset,
    n_samples: usize,
    config: &SearchConfig,
) -> Result<BoundarySampling> {
    let all: Vec<usize> = (0..train.len()).collect();
    let (pool0, pool1) = train.class_pools(&all);
    if pool0.is_empty() || pool1.is_empty() {
        return Err(Error::DegenerateData("boundary sampling needs both classes".into()));
    }
    let mut rng = seed::rng(seed::derive(config.pool_seed, "starts"));
    let mut order0: Vec<usize> = (0..pool0.len()).collect();
    let mut order1: Vec<usize> = (0..pool1.len()).collect();
    order0.shuffle(&mut rng);
    order1.shuffle(&mut rng);
    let starts: Vec<Vec<f64>> = (0..n_samples)
        .map(|i| {
            let j = i / 2;
            if i % 2 == 0 {
                pool0[order0[j % order0.len()]].clone()
            } else {
                pool1[order1[j % order1.len()]].clone()
            }
        })
        .collect();
    let seeds: Vec<u64> = (0..n_samples as u64)
        .map(|i| seed::derive_indexed(config.pool_seed, i))
        .collect();
    let results = ibs_search_batch(model, &starts, &pool0, &pool1, config, &seeds)?;
    let attempted = results.len();
    let samples: Vec<BoundarySample> = results.into_iter().filter(|s| s.converged).collect();
    Ok(BoundarySampling {
        failures: attempted - samples.len(),
        attempted,
        samples,
    })
}

/// Boundary samples as CSV: `f0..fn,prediction,steps,converged`.
pub fn boundary_to_csv(samples: &[BoundarySample]) -> String {
    let dim = samples.first().map_or(0, |s| s.point.len());
    let mut out = String::new();
    for j in 0..dim {
        write!(out, "f{j},").unwrap();
    }
    out.push_str("prediction,steps,converged\n");
    for s in samples {
        for v in &s.point {
            write!(out, "{v},").unwrap();
        }
        writeln!(out, "{},{},{}", s.prediction, s.steps_taken, u8::from(s.converged)).unwrap();
    }
    out
}

pub fn write_boundary_csv(samples: &[BoundarySample], path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, boundary_to_csv(samples))?;
    Ok(())
}

pub fn read_boundary_csv(path: impl AsRef<Path>) -> Result<Vec<BoundarySample>> {
    let text = std::fs::read_to_string(path)?;
    let mut samples = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let lineno = n + 1;
        if lineno == 1 || line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse { line: lineno, message };
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() < 4 {
            return Err(parse_err("expected coordinates, prediction, steps, converged".into()));
        }
        let (coords, tail) = fields.split_at(fields.len() - 3);
        let point = coords
            .iter()
            .map(|f| f.parse::<f64>().map_err(|_| parse_err(format!("invalid number {f:?}"))))
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = samples.first() {
            let first: &BoundarySample = first;
            if first.point.len() != point.len() {
                return Err(parse_err("inconsistent number of coordinates".into()));
            }
        }
        let prediction = tail[0]
            .parse::<f64>()
            .map_err(|_| parse_err(format!("invalid prediction {:?}", tail[0])))?;
        let steps_taken = tail[1]
            .parse::<usize>()
            .map_err(|_| parse_err(format!("invalid step count {:?}", tail[1])))?;
        let converged = match tail[2] {
            "1" => true,
            "0" => false,
            other => return Err(parse_err(format!("invalid converged flag {other:?}"))),
        };
        samples.push(BoundarySample {
            point,
            prediction,
            steps_taken,
            start: Vec::new(),
            converged,
            trace: None,
        });
    }
    Ok(samples)
}

/// The baseline chosen for one input.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineSelection {
    pub baseline: Vec<f64>,
    /// Position of the baseline in the candidate list.
    pub index: usize,
    /// L2 distance to the input.
    pub distance: f64,
    /// Boundary crossings on the open baseline-to-input segment.
    pub crossings: usize,
    pub crossing_ts: Vec<f64>,
    /// Cosine between `grad f(baseline)` and `input - baseline`.
    pub orthogonality: f64,
    pub rank_pool_size: usize,
}

fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Cosine between `u` and `v`, 0 when either vanishes.
pub fn cosine(u: &[f64], v: &[f64]) -> f64 {
    let (nu, nv) = (dot(u, u).sqrt(), dot(v, v).sqrt());
    if nu == 0.0 || nv == 0.0 {
        0.0
    } else {
        (dot(u, v) / (nu * nv)).clamp(-1.0, 1.0)
    }
}

fn annotate(
    x: &[f64],
    model: &TrainedModel,
    baseline: &[f64],
    index: usize,
    pool: usize,
) -> Result<BaselineSelection> {
    let report = count_crossings(model, baseline, x, DEFAULT_CROSSING_RESOLUTION)?;
    let direction: Vec<f64> = x.iter().zip(baseline).map(|(a, b)| a - b).collect();
    let normal = model.input_gradient(baseline)?;
    Ok(BaselineSelection {
        baseline: baseline.to_vec(),
        index,
        distance: l2(x, baseline),
        crossings: report.count,
        crossing_ts: report.crossing_ts,
        orthogonality: cosine(&normal, &direction),
        rank_pool_size: pool,
    })
}

fn pick<F>(x: &[f64], points: &[&[f64]], better: F) -> usize
where
    F: Fn(f64, f64) -> bool,
{
    let mut best = 0;
    let mut best_d = l2(x, points[0]);
    for (i, p) in points.iter().enumerate().skip(1) {
        let d = l2(x, p);
        if better(d, best_d) {
            best = i;
            best_d = d;
        }
    }
    best
}

fn select_from(
    x: &[f64],
    points: &[&[f64]],
    model: &TrainedModel,
    farthest: bool,
) -> Result<BaselineSelection> {
    if points.is_empty() {
        return Err(Error::config("no boundary samples to choose a baseline from"));
    }
    let n = model.input_dim();
    Error::check_dim(n, x.len())?;
    for p in points {
        Error::check_dim(n, p.len())?;
    }
    let i = if farthest {
        pick(x, points, |d, best| d > best)
    } else {
        pick(x, points, |d, best| d < best)
    };
    annotate(x, model, points[i], i, points.len())
}

/// The boundary sample closest to `x` (ties go to the lowest index),
/// annotated with crossings and orthogonality.
pub fn select_optimal_baseline(
    x: &[f64],
    db_samples: &[BoundarySample],
    model: &TrainedModel,
) -> Result<BaselineSelection> {
    let points: Vec<&[f64]> = db_samples.iter().map(|s| s.point.as_slice()).collect();
    select_from(x, &points, model, false)
}

/// Same as [`select_optimal_baseline`] over bare points.
pub fn select_closest_point(
    x: &[f64],
    points: &[Vec<f64>],
    model: &TrainedModel,
) -> Result<BaselineSelection> {
    let points: Vec<&[f64]> = points.iter().map(Vec::as_slice).collect();
    select_from(x, &points, model, false)
}

/// The boundary sample farthest from `x`: a deliberately poor baseline.
pub fn select_farthest_baseline(
    x: &[f64],
    db_samples: &[BoundarySample],
    model: &TrainedModel,
) -> Result<BaselineSelection> {
    let points: Vec<&[f64]> = db_samples.iter().map(|s| s.point.as_slice()).collect();
    select_from(x, &points, model, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{logit_of, NetworkSpec};

    fn identity_logistic() -> TrainedModel {
        TrainedModel::from_parts(NetworkSpec::linear(1).unwrap(), vec![vec![1.0]], vec![vec![0.0]], 0)
            .unwrap()
    }

    #[test]
    fn start_on_boundary_returns_immediately() {
        let m = identity_logistic();
        let s = ibs_search(&m, &[0.0], &[vec![-1.0]], &[vec![1.0]], &SearchConfig::default())
            .unwrap();
        assert_eq!(s.steps_taken, 0);
        assert_eq!(s.point, vec![0.0]);
        assert!(s.converged);
    }

    #[test]
    fn one_dimensional_logistic_root() {
        let m = identity_logistic();
        let config = SearchConfig { record_trace: true, ..SearchConfig::default() };
        let s = ibs_search(&m, &[-1.0], &[vec![-1.0]], &[vec![1.0]], &config).unwrap();
        assert!(s.converged);
        let delta = logit_of(0.5 + config.epsilon);
        assert!(s.point[0].abs() <= delta, "{} > {delta}", s.point[0]);
        assert!((delta - 4.0 * config.epsilon).abs() < 1e-8);
        // first move: toward +1 by |logistic(-1) - 0.5| of the way
        let trace = s.trace.unwrap();
        assert_eq!(trace[0].target_class, 1);
        assert!((trace[0].magnitude - (0.5 - crate::nn::logistic(-1.0))).abs() < 1e-15);
    }

    #[test]
    fn empty_pool_is_a_configuration_error() {
        let m = identity_logistic();
        let r = ibs_search(&m, &[0.3], &[], &[vec![1.0]], &SearchConfig::default());
        assert!(matches!(r, Err(Error::Config(_))));
        assert!(select_optimal_baseline(&[0.0], &[], &m).is_err());
    }

    #[test]
    fn exhausted_search_is_reported_not_raised() {
        let m = identity_logistic();
        let config = SearchConfig { max_steps: 2, ..SearchConfig::default() };
        let s = ibs_search(&m, &[-5.0], &[vec![-5.0]], &[vec![5.0]], &config).unwrap();
        assert!(!s.converged);
        assert_eq!(s.steps_taken, 2);
    }

    #[test]
    fn bad_configs() {
        for c in [
            SearchConfig { gamma: 0.0, ..SearchConfig::default() },
            SearchConfig { gamma: 1.5, ..SearchConfig::default() },
            SearchConfig { epsilon: 0.5, ..SearchConfig::default() },
            SearchConfig { max_steps: 0, ..SearchConfig::default() },
            SearchConfig { pool_mode: PoolMode::Subsample(0), ..SearchConfig::default() },
        ] {
            assert!(c.validate().is_err());
        }
    }

    #[test]
    fn single_candidate_selection() {
        let m = identity_logistic();
        let db = vec![BoundarySample {
            point: vec![0.0],
            prediction: 0.5,
            steps_taken: 0,
            start: vec![0.0],
            converged: true,
            trace: None,
        }];
        let sel = select_optimal_baseline(&[2.0], &db, &m).unwrap();
        assert_eq!(sel.rank_pool_size, 1);
        assert_eq!(sel.baseline, vec![0.0]);
        assert_eq!(sel.distance, 2.0);
        assert_eq!(sel.crossings, 0);
        assert_eq!(sel.orthogonality, 1.0);
    }

    #[test]
    fn boundary_csv_round_trip() {
        let samples = vec![
            BoundarySample {
                point: vec![0.125, -3.5],
                prediction: 0.5004,
                steps_taken: 17,
                start: vec![],
                converged: true,
                trace: None,
            },
            BoundarySample {
                point: vec![1.0 / 3.0, 2.0],
                prediction: 0.2,
                steps_taken: 9,
                start: vec![],
                converged: false,
                trace: None,
            },
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.csv");
        write_boundary_csv(&samples, &path).unwrap();
        assert_eq!(read_boundary_csv(&path).unwrap(), samples);
        std::fs::write(&path, "f0,prediction,steps,converged\n0.1,0.5,x,1\n").unwrap();
        assert!(matches!(read_boundary_csv(&path), Err(Error::Parse { line: 2, .. })));
    }
}
