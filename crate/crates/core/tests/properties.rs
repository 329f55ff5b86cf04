use ibs_core::attribution::{integrated_gradients, integrated_gradients_with, IgOptions, OutputSpace};
use ibs_core::ibs::{ibs_search, ibs_search_batch, select_optimal_baseline, BoundarySample, SearchConfig};
use ibs_core::nn::{NetworkSpec, TrainedModel};
use ibs_core::oracle::count_crossings;
use ibs_core::data::{generate_hypercube, generate_spiral, HypercubeParams};
use ibs_core::seed;
use proptest::prelude::*;
use rand::Rng;

fn mlp(seed_value: u64, input: usize) -> TrainedModel {
    let mut rng = seed::rng(seed_value);
    let spec = NetworkSpec::five_by_ten(input).unwrap();
    let mut weights = Vec::new();
    let mut biases = Vec::new();
    for w in spec.layer_sizes.windows(2) {
        let bound = (6.0 / w[0] as f64).sqrt();
        weights.push((0..w[0] * w[1]).map(|_| rng.random_range(-bound..bound)).collect());
        biases.push((0..w[1]).map(|_| rng.random_range(-0.3..0.3)).collect());
    }
    TrainedModel::from_parts(spec, weights, biases, seed_value).unwrap()
}

fn points(rng: &mut impl Rng, n: usize, dim: usize, scale: f64) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..dim).map(|_| rng.random_range(-scale..scale)).collect()).collect()
}

type Pools = (Vec<Vec<f64>>, Vec<Vec<f64>>);

/// Two pools on opposite sides of the model's boundary, drawn from a box.
fn class_pools(model: &TrainedModel, rng: &mut impl Rng, dim: usize) -> Option<Pools> {
    let mut p0 = Vec::new();
    let mut p1 = Vec::new();
    for x in points(rng, 400, dim, 3.0) {
        let p = model.predict_proba(&x).unwrap();
        if p < 0.45 {
            p0.push(x);
        } else if p > 0.55 {
            p1.push(x);
        }
    }
    (p0.len() >= 5 && p1.len() >= 5).then_some((p0, p1))
}

const STEP_LADDER: [usize; 6] = [32, 64, 128, 256, 512, 1024];

// Midpoint error on a ReLU path oscillates with the kink offsets, so single
// pairs are not monotone; the mean over many pairs is.
#[test]
fn mean_completeness_residual_shrinks_on_relu_networks() {
    let mut rng = seed::rng(77);
    let mut mean = [0.0; 6];
    for _ in 0..64 {
        let m = TrainedModel::initialize(&NetworkSpec::five_by_ten(2).unwrap(), rng.random()).unwrap();
        let x: Vec<f64> = (0..2).map(|_| rng.random_range(-3.0..3.0)).collect();
        let b: Vec<f64> = (0..2).map(|_| rng.random_range(-3.0..3.0)).collect();
        for (acc, &n) in mean.iter_mut().zip(&STEP_LADDER) {
            *acc += integrated_gradients(&m, &x, &b, n).unwrap().completeness_residual.abs() / 64.0;
        }
    }
    for pair in mean.windows(2) {
        assert!(pair[1] <= 1.1 * pair[0], "{mean:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn predictions_stay_in_unit_interval(s in any::<u64>(), x in prop::collection::vec(-1e6f64..1e6, 3)) {
        let p = mlp(s, 3).predict_proba(&x).unwrap();
        prop_assert!((0.0..=1.0).contains(&p));
    }

    #[test]
    fn ig_factorization_is_bitwise(s in any::<u64>(), x in prop::collection::vec(-3f64..3.0, 4),
                                  b in prop::collection::vec(-3f64..3.0, 4), steps in 1usize..64) {
        let a = integrated_gradients(&mlp(s, 4), &x, &b, steps).unwrap();
        for i in 0..4 {
            prop_assert_eq!(a.values[i].to_bits(), (a.delta[i] * a.cumulated_gradients[i]).to_bits());
        }
        let (d, c) = ibs_core::decompose(&a);
        prop_assert_eq!(d, a.delta.clone());
        prop_assert_eq!(c, a.cumulated_gradients.clone());
    }

    #[test]
    fn ig_is_antisymmetric_under_path_reversal(s in any::<u64>(), x in prop::collection::vec(-3f64..3.0, 3),
                                               b in prop::collection::vec(-3f64..3.0, 3)) {
        let m = mlp(s, 3);
        let fwd = integrated_gradients(&m, &x, &b, 64).unwrap();
        let back = integrated_gradients(&m, &b, &x, 64).unwrap();
        for (u, v) in fwd.values.iter().zip(&back.values) {
            prop_assert!((u + v).abs() <= 1e-12 * (1.0 + u.abs()));
        }
    }

    #[test]
    fn ignored_feature_gets_exactly_zero(s in any::<u64>(), x in prop::collection::vec(-3f64..3.0, 3),
                                         b in prop::collection::vec(-3f64..3.0, 3), dead in 0usize..3) {
        let m = mlp(s, 3);
        let mut weights: Vec<Vec<f64>> = m.layers().iter().map(|l| l.weights().to_vec()).collect();
        let biases: Vec<Vec<f64>> = m.layers().iter().map(|l| l.biases().to_vec()).collect();
        for row in weights[0].chunks_mut(3) {
            row[dead] = 0.0;
        }
        let m = TrainedModel::from_parts(m.spec().clone(), weights, biases, 0).unwrap();
        let a = integrated_gradients(&m, &x, &b, 32).unwrap();
        prop_assert_eq!(a.values[dead], 0.0);
    }

    #[test]
    fn linear_logit_ig_is_exact(w in prop::collection::vec(-3f64..3.0, 3), bias in -2f64..2.0,
                                x in prop::collection::vec(-3f64..3.0, 3), b in prop::collection::vec(-3f64..3.0, 3),
                                steps in 1usize..20) {
        let m = TrainedModel::from_parts(NetworkSpec::linear(3).unwrap(), vec![w.clone()], vec![vec![bias]], 0).unwrap();
        let opts = IgOptions { steps, output: OutputSpace::Logit, ..IgOptions::default() };
        let a = integrated_gradients_with(&m, &x, &b, &opts).unwrap();
        for i in 0..3 {
            let exact = (x[i] - b[i]) * w[i];
            prop_assert!((a.values[i] - exact).abs() <= 1e-13 * (1.0 + exact.abs()));
        }
    }

    #[test]
    fn search_invariants_hold(s in any::<u64>(), pool_seed in any::<u64>(), gamma in 0.9f64..=1.0) {
        let m = mlp(s, 2);
        let mut rng = seed::rng(s ^ 0x5eed);
        let Some((p0, p1)) = class_pools(&m, &mut rng, 2) else { return Ok(()) };
        let config = SearchConfig { gamma, pool_seed, max_steps: 2000, record_trace: true, ..SearchConfig::default() };
        let start = p0[0].clone();
        let r = ibs_search(&m, &start, &p0, &p1, &config).unwrap();
        prop_assert!(r.steps_taken <= config.max_steps);
        prop_assert_eq!(r.converged, (r.prediction - 0.5).abs() <= config.epsilon);
        prop_assert_eq!(r.prediction, m.predict_proba(&r.point).unwrap());
        let trace = r.trace.as_ref().unwrap();
        prop_assert_eq!(trace.len(), r.steps_taken);
        for (k, step) in trace.iter().enumerate() {
            prop_assert!(step.magnitude <= 0.5 * gamma.powi(k as i32));
            let losing = u8::from(step.prediction < 0.5);
            prop_assert_eq!(step.target_class, losing);
            let pool = if losing == 1 { &p1 } else { &p0 };
            prop_assert!(step.target_index < pool.len());
            // the next point lies on the segment towards the drawn target
            let next = trace.get(k + 1).map_or(&r.point, |n| &n.point);
            let target = &pool[step.target_index];
            for j in 0..2 {
                let expected = step.point[j] + (target[j] - step.point[j]) * step.magnitude;
                prop_assert_eq!(next[j], expected);
            }
        }
        // determinism
        prop_assert_eq!(&ibs_search(&m, &start, &p0, &p1, &config).unwrap(), &r);
    }

    #[test]
    fn batch_matches_sequential(s in any::<u64>()) {
        let m = mlp(s, 3);
        let mut rng = seed::rng(s.wrapping_add(1));
        let Some((p0, p1)) = class_pools(&m, &mut rng, 3) else { return Ok(()) };
        let starts: Vec<Vec<f64>> = p0.iter().take(4).chain(p1.iter().take(4)).cloned().collect();
        let seeds: Vec<u64> = (0..starts.len() as u64).map(|i| seed::derive_indexed(s, i)).collect();
        let config = SearchConfig { max_steps: 1500, record_trace: true, ..SearchConfig::default() };
        let batch = ibs_search_batch(&m, &starts, &p0, &p1, &config, &seeds).unwrap();
        for ((st, &sd), b) in starts.iter().zip(&seeds).zip(&batch) {
            let single = ibs_search(&m, st, &p0, &p1, &SearchConfig { pool_seed: sd, ..config.clone() }).unwrap();
            prop_assert_eq!(&single, b);
        }
    }

    #[test]
    fn singleton_pools_keep_the_search_on_the_segment(s in any::<u64>(), t in 0.0f64..=1.0) {
        let m = mlp(s, 3);
        let mut rng = seed::rng(s.wrapping_mul(3));
        let Some((p0, p1)) = class_pools(&m, &mut rng, 3) else { return Ok(()) };
        let (x0, x1) = (p0[0].clone(), p1[0].clone());
        let start: Vec<f64> = x0.iter().zip(&x1).map(|(a, b)| a + t * (b - a)).collect();
        let r = ibs_search(&m, &start, std::slice::from_ref(&x0), std::slice::from_ref(&x1), &SearchConfig::default()).unwrap();
        let d: Vec<f64> = x1.iter().zip(&x0).map(|(a, b)| a - b).collect();
        let v: Vec<f64> = r.point.iter().zip(&x0).map(|(a, b)| a - b).collect();
        let dd: f64 = d.iter().map(|a| a * a).sum();
        let proj = v.iter().zip(&d).map(|(a, b)| a * b).sum::<f64>() / dd;
        let off: f64 = v.iter().zip(&d).map(|(a, b)| (a - proj * b).powi(2)).sum::<f64>().sqrt();
        prop_assert!(off <= 1e-9, "distance from line {off:e}");
        prop_assert!((-1e-9..=1.0 + 1e-9).contains(&proj));
    }

    #[test]
    fn selection_is_the_closest_candidate(s in any::<u64>(), x in prop::collection::vec(-3f64..3.0, 2)) {
        let m = mlp(s, 2);
        let mut rng = seed::rng(s);
        let cands: Vec<BoundarySample> = points(&mut rng, 30, 2, 3.0)
            .into_iter()
            .map(|p| BoundarySample { prediction: 0.5, point: p, steps_taken: 0, start: vec![], converged: true, trace: None })
            .collect();
        let sel = select_optimal_baseline(&x, &cands, &m).unwrap();
        prop_assert_eq!(sel.rank_pool_size, 30);
        for c in &cands {
            let d = c.point.iter().zip(&x).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            prop_assert!(sel.distance <= d);
        }
        prop_assert!((-1.0..=1.0).contains(&sel.orthogonality));
    }

    #[test]
    fn crossings_are_sorted_and_stable_under_refinement(s in any::<u64>(), a in prop::collection::vec(-3f64..3.0, 2),
                                                       b in prop::collection::vec(-3f64..3.0, 2)) {
        let m = mlp(s, 2);
        let mut prev = 0;
        for res in [64, 128, 256, 512, 1024] {
            let r = count_crossings(&m, &a, &b, res).unwrap();
            prop_assert_eq!(r.count, r.crossing_ts.len());
            prop_assert!(r.crossing_ts.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(r.crossing_ts.iter().all(|&t| t > 0.0 && t <= 1.0));
            prop_assert!(r.count >= prev);
            prev = r.count;
        }
        let fa = m.predict_proba(&a).unwrap();
        let fb = m.predict_proba(&b).unwrap();
        if (fa < 0.499 && fb > 0.501) || (fa > 0.501 && fb < 0.499) {
            prop_assert_eq!(prev % 2, 1);
        }
    }

    #[test]
    fn identical_endpoints_give_zero_attribution(s in any::<u64>(), x in prop::collection::vec(-3f64..3.0, 3)) {
        let a = integrated_gradients(&mlp(s, 3), &x, &x, 16).unwrap();
        prop_assert!(a.values.iter().all(|&v| v == 0.0));
        prop_assert!(a.completeness_residual.abs() <= 1e-15);
    }

    #[test]
    fn completeness_residual_shrinks_on_smooth_models(w in prop::collection::vec(-3f64..3.0, 2), bias in -2f64..2.0,
                                                     x in prop::collection::vec(-3f64..3.0, 2),
                                                     b in prop::collection::vec(-3f64..3.0, 2)) {
        let m = TrainedModel::from_parts(NetworkSpec::linear(2).unwrap(), vec![w], vec![vec![bias]], 0).unwrap();
        let r: Vec<f64> = STEP_LADDER
            .iter()
            .map(|&n| integrated_gradients(&m, &x, &b, n).unwrap().completeness_residual.abs())
            .collect();
        for pair in r.windows(2) {
            prop_assert!(pair[1] <= 1.1 * pair[0] + 1e-15, "{r:?}");
        }
    }

    #[test]
    fn hypercube_is_pure_and_balanced(s in any::<u64>(), n in 20usize..200, sep in 0.5f64..3.0) {
        let p = HypercubeParams { n_samples: n, n_features: 4, n_informative: 2, clusters_per_class: 2, class_sep: sep, seed: s };
        let a = generate_hypercube(&p).unwrap();
        prop_assert_eq!(&a, &generate_hypercube(&p).unwrap());
        let [c0, c1] = a.class_counts();
        prop_assert_eq!(c0 + c1, n);
        prop_assert!(c0.abs_diff(c1) <= 1);
        prop_assert!(a.features.iter().flatten().all(|v| v.is_finite()));
    }

    #[test]
    fn spiral_is_pure_and_balanced(s in any::<u64>(), half in 10usize..150) {
        let n = 2 * half;
        let a = generate_spiral(n, 0.05, 1.5, s).unwrap();
        prop_assert_eq!(&a, &generate_spiral(n, 0.05, 1.5, s).unwrap());
        let [c0, c1] = a.class_counts();
        prop_assert!(c0.abs_diff(c1) <= 1);
        prop_assert_eq!(a.n_features(), 2);
    }
}
