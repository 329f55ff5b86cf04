use std::sync::OnceLock;

use ibs_core::attribution::{gradient_along_path, integrated_gradients};
use ibs_core::data::generate_brain;
use ibs_core::harness::{generate_dataset, test_indices, training_split, ExperimentConfig, Preset};
use ibs_core::ibs::{sample_boundary, select_farthest_baseline, select_optimal_baseline, BoundarySampling, SearchConfig};
use ibs_core::nn::{logit_of, train, Metrics, NetworkSpec, TrainConfig};
use ibs_core::oracle::{analytic_hyperplane, grid_boundary};
use ibs_core::seed;
use ibs_core::{Dataset, Error, TrainedModel};
use rand::Rng;
use rand_distr::StandardNormal;

struct Fitted {
    cfg: ExperimentConfig,
    data: Dataset,
    model: TrainedModel,
    metrics: Metrics,
    train: Dataset,
}

fn fit(preset: Preset) -> Fitted {
    let cfg = ExperimentConfig::preset(preset);
    let (data, _) = generate_dataset(&cfg).unwrap();
    let spec = cfg.network_spec(data.n_features()).unwrap();
    let (model, metrics) = train(&spec, &data, &cfg.train_config()).unwrap();
    let train = training_split(&model, &data, cfg.train.split_fraction).unwrap();
    Fitted { cfg, data, model, metrics, train }
}

fn custom() -> &'static Fitted {
    static CELL: OnceLock<Fitted> = OnceLock::new();
    CELL.get_or_init(|| fit(Preset::Custom))
}

fn custom_boundary() -> &'static BoundarySampling {
    static CELL: OnceLock<BoundarySampling> = OnceLock::new();
    CELL.get_or_init(|| {
        let f = custom();
        sample_boundary(&f.model, &f.train, 500, &f.cfg.search_config()).unwrap()
    })
}

fn blobs(n: usize, margin_sigmas: f64, seed_value: u64) -> Dataset {
    let mut rng = seed::rng(seed_value);
    let mut features = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let label = (i % 2) as u8;
        let cx = if label == 1 { margin_sigmas / 2.0 } else { -margin_sigmas / 2.0 };
        let nx: f64 = rng.sample(StandardNormal);
        let ny: f64 = rng.sample(StandardNormal);
        features.push(vec![cx + nx, ny]);
        labels.push(label);
    }
    Dataset::new("blobs", features, labels, vec![0], seed_value).unwrap()
}

fn held_out(f: &Fitted) -> Vec<usize> {
    test_indices(&f.model, &f.data, f.cfg.train.split_fraction)
}

#[test]
fn well_separated_blobs_are_classified_perfectly() {
    let data = blobs(1000, 12.0, 3);
    let spec = NetworkSpec::five_by_ten(2).unwrap();
    let cfg = TrainConfig { epochs: 20, ..TrainConfig::default() };
    let (_, metrics) = train(&spec, &data, &cfg).unwrap();
    assert_eq!(metrics.accuracy, 1.0);
}

#[test]
fn training_is_deterministic() {
    let data = blobs(400, 4.0, 9);
    let spec = NetworkSpec::five_by_ten(2).unwrap();
    let cfg = TrainConfig { epochs: 3, ..TrainConfig::default() };
    let (a, ma) = train(&spec, &data, &cfg).unwrap();
    let (b, mb) = train(&spec, &data, &cfg).unwrap();
    assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    assert_eq!(ma, mb);
}

#[test]
fn single_class_data_is_rejected() {
    let mut data = blobs(100, 4.0, 1);
    data.labels.iter_mut().for_each(|l| *l = 1);
    let spec = NetworkSpec::five_by_ten(2).unwrap();
    let err = train(&spec, &data, &TrainConfig::default()).unwrap_err();
    assert!(matches!(err, Error::DegenerateData(_)));
}

#[test]
fn training_lowers_the_loss_on_every_preset_dataset() {
    let f = custom();
    assert!(f.metrics.train_loss_final < f.metrics.train_loss_initial);
    for preset in [Preset::Spiral, Preset::ThreeFeature] {
        let g = fit(preset);
        assert!(g.metrics.train_loss_final < g.metrics.train_loss_initial, "{preset}");
    }
}

#[test]
fn custom_boundary_sampling_converges() {
    let b = custom_boundary();
    assert_eq!(b.attempted, 500);
    assert!(b.convergence_rate() >= 0.99, "{}", b.convergence_rate());
    for s in &b.samples {
        assert!((custom().model.predict_proba(&s.point).unwrap() - 0.5).abs() <= 1e-3);
    }
}

#[test]
fn searches_on_a_fitted_linear_boundary_land_on_the_hyperplane() {
    let data = blobs(1000, 4.0, 21);
    let cfg = TrainConfig { epochs: 30, learning_rate: 1e-2, ..TrainConfig::default() };
    let (model, _) = train(&NetworkSpec::linear(2).unwrap(), &data, &cfg).unwrap();
    let plane = analytic_hyperplane(&model).unwrap();
    let norm = plane.w.iter().map(|v| v * v).sum::<f64>().sqrt();
    let config = SearchConfig::default();
    // |f - 1/2| <= eps  <=>  |w.x + b| <= logit(1/2 + eps)
    let tolerance = logit_of(0.5 + config.epsilon) / norm * (1.0 + 1e-9);
    let b = sample_boundary(&model, &data, 100, &config).unwrap();
    assert_eq!(b.samples.len(), 100);
    for s in &b.samples {
        assert!(plane.distance(&s.point) <= tolerance);
    }
}

#[test]
fn optimal_baselines_do_not_cross_and_far_ones_do() {
    let f = custom();
    let b = custom_boundary();
    let mut far_crossing = 0;
    let test = held_out(f);
    for &i in test.iter().take(40) {
        let x = &f.data.features[i];
        let near = select_optimal_baseline(x, &b.samples, &f.model).unwrap();
        assert_eq!(near.crossings, 0, "sample {i}");
        let far = select_farthest_baseline(x, &b.samples, &f.model).unwrap();
        assert!(far.distance >= near.distance);
        if far.crossings >= 1 {
            far_crossing += 1;
            // the prediction along the path passes 1/2 strictly inside (0, 1)
            let path = gradient_along_path(&f.model, &far.baseline, x, 256).unwrap();
            let side = |p: f64| p > 0.5;
            let end = side(path.predictions[255]);
            assert!(path.predictions[1..255].iter().any(|&p| side(p) != end));
        }
    }
    assert!(far_crossing >= 1);
}

#[test]
fn completeness_holds_for_the_zero_baseline() {
    let f = custom();
    let far = vec![0.0, 0.0];
    for &i in held_out(f).iter().take(20) {
        let x = &f.data.features[i];
        let a = integrated_gradients(&f.model, x, &far, 2048).unwrap();
        let expected = f.model.predict_proba(x).unwrap() - f.model.predict_proba(&far).unwrap();
        assert!((a.total() - expected).abs() <= 1e-3);
    }
}

#[test]
fn ibs_samples_sit_next_to_the_grid_boundary() {
    let f = custom();
    let grid = grid_boundary(&f.model, &f.train.expanded_bounds(0.1), 512).unwrap();
    let reach = 2.0 * grid.max_spacing();
    for s in &custom_boundary().samples {
        assert!(grid.nearest_distance(&s.point) <= reach);
    }
}

// Every oracle point brackets a sign change found by a probe ten times finer
// than the grid.
#[test]
fn grid_points_are_real_sign_changes() {
    let f = custom();
    let grid = grid_boundary(&f.model, &f.train.expanded_bounds(0.1), 128).unwrap();
    assert!(!grid.boundary_points.is_empty());
    let h = grid.max_spacing() / 10.0;
    for p in grid.boundary_points.iter().step_by(7) {
        let mut signs = [false; 2];
        for dx in -10..=10 {
            for dy in -10..=10 {
                let q = [p[0] + dx as f64 * h, p[1] + dy as f64 * h];
                let v = f.model.predict_proba(&q).unwrap() - 0.5;
                signs[usize::from(v > 0.0)] = true;
            }
        }
        assert!(signs[0] && signs[1], "no sign change around {p:?}");
    }
}

#[test]
fn three_dimensional_grid_agrees_with_ibs() {
    let f = fit(Preset::ThreeFeature);
    let grid = grid_boundary(&f.model, &f.train.expanded_bounds(0.1), 64).unwrap();
    let b = sample_boundary(&f.model, &f.train, 100, &f.cfg.search_config()).unwrap();
    let reach = 2.0 * grid.max_spacing();
    for s in &b.samples {
        assert!(grid.nearest_distance(&s.point) <= reach);
    }
}

#[test]
fn brain_mean_difference_peaks_near_informative_pixels() {
    let (data, layout) = generate_brain(2500, 4).unwrap();
    let n = data.n_features();
    let mut sums = [vec![0.0; n], vec![0.0; n]];
    for (row, &label) in data.features.iter().zip(&data.labels) {
        for (acc, v) in sums[usize::from(label)].iter_mut().zip(row) {
            *acc += v;
        }
    }
    let [c0, c1] = data.class_counts();
    let diff: Vec<f64> = (0..n).map(|j| (sums[1][j] / c1 as f64 - sums[0][j] / c0 as f64).abs()).collect();
    let peak = (0..n).max_by(|&a, &b| diff[a].total_cmp(&diff[b])).unwrap();
    let pixel = layout.mask_pixels()[peak];
    let (py, px) = ((pixel / layout.width) as f64, (pixel % layout.width) as f64);
    let nearest = layout
        .informative_pixels
        .iter()
        .map(|&q| (((q / layout.width) as f64 - py).powi(2) + ((q % layout.width) as f64 - px).powi(2)).sqrt())
        .fold(f64::INFINITY, f64::min);
    assert!(nearest <= 3.0 * layout.smoothing_sigma, "peak {nearest} px from informative pixels");
}
