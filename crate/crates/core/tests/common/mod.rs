//! Finite-difference oracle shared by the gradient tests.

use ibs_core::nn::{NetworkSpec, TrainedModel};
use rand::Rng;

pub const H: f64 = 1e-4;

pub fn random_model(rng: &mut impl Rng, input: usize, hidden: &[usize]) -> TrainedModel {
    let spec = NetworkSpec::mlp(input, hidden).unwrap();
    let mut weights = Vec::new();
    let mut biases = Vec::new();
    for w in spec.layer_sizes.windows(2) {
        let bound = (6.0 / w[0] as f64).sqrt();
        weights.push((0..w[0] * w[1]).map(|_| rng.random_range(-bound..bound)).collect());
        biases.push((0..w[1]).map(|_| rng.random_range(-0.5..0.5)).collect());
    }
    TrainedModel::from_parts(spec, weights, biases, 0).unwrap()
}

pub fn pattern(model: &TrainedModel, x: &[f64]) -> Vec<bool> {
    model
        .hidden_pre_activations(x)
        .unwrap()
        .concat()
        .into_iter()
        .map(|z| z > 0.0)
        .collect()
}

/// True when `x` is at least 1e-6 from every kink and the whole central
/// difference stencil shares x's activation pattern.
pub fn kink_free(model: &TrainedModel, x: &[f64]) -> bool {
    let pre = model.hidden_pre_activations(x).unwrap().concat();
    if pre.iter().any(|z| z.abs() < 1e-6) {
        return false;
    }
    let base = pattern(model, x);
    (0..x.len()).all(|j| {
        [H, -H].iter().all(|&s| {
            let mut y = x.to_vec();
            y[j] += s;
            pattern(model, &y) == base
        })
    })
}

pub fn central_difference(model: &TrainedModel, x: &[f64]) -> Vec<f64> {
    (0..x.len())
        .map(|j| {
            let (mut a, mut b) = (x.to_vec(), x.to_vec());
            a[j] += H;
            b[j] -= H;
            (model.predict_proba(&a).unwrap() - model.predict_proba(&b).unwrap()) / (2.0 * H)
        })
        .collect()
}

pub fn relative_error(g: &[f64], fd: &[f64]) -> f64 {
    let scale = g.iter().chain(fd).fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    g.iter().zip(fd).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())) / scale
}


pub struct Sweep {
    pub probes: usize,
    pub resampled: usize,
    pub worst: f64,
}

/// Relative error of the analytic gradient over `n` kink-free probes,
/// alternating random and freshly initialized 5x10 networks.
pub fn gradient_sweep(seed_value: u64, n: usize) -> Sweep {
    let mut rng = ibs_core::seed::rng(seed_value);
    let mut sweep = Sweep { probes: 0, resampled: 0, worst: 0.0 };
    while sweep.probes < n {
        let input = [2, 3, 5, 10][sweep.probes % 4];
        let model = if sweep.probes.is_multiple_of(2) {
            random_model(&mut rng, input, &[10; 5])
        } else {
            TrainedModel::initialize(&NetworkSpec::five_by_ten(input).unwrap(), rng.random()).unwrap()
        };
        let x: Vec<f64> = (0..input).map(|_| rng.random_range(-3.0..3.0)).collect();
        if !kink_free(&model, &x) {
            sweep.resampled += 1;
            continue;
        }
        let err = relative_error(&model.input_gradient(&x).unwrap(), &central_difference(&model, &x));
        sweep.worst = sweep.worst.max(err);
        sweep.probes += 1;
    }
    sweep
}
