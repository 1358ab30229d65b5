//! The batched trainer against the per-example reference update.

use eprop::learning::{ep_update, phase_pair, PhasePair};
use eprop::{init_params, InitScheme, LayerSpec, NetworkParams, NoiseModel, Trainer, UpdateConfig};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn batch(spec: &LayerSpec, size: usize, seed: u64) -> (Array2<f64>, Array2<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half = spec.raw_input_width();
    let mut inputs = Array2::zeros((size, spec.input_width()));
    let mut targets = Array2::zeros((size, spec.output_width()));
    for k in 0..size {
        for p in 0..half {
            let x = 3.0 * rng.random::<f64>();
            inputs[(k, p)] = x;
            inputs[(k, half + p)] = -x;
        }
        targets[(k, rng.random_range(0..spec.output_width()))] = 1.0;
    }
    (inputs, targets)
}

fn reference_step(
    params: &NetworkParams,
    inputs: &Array2<f64>,
    targets: &Array2<f64>,
    noise: &NoiseModel,
    cfg: &UpdateConfig,
    steps: usize,
    iteration: u64,
) -> NetworkParams {
    let pairs: Vec<PhasePair> = inputs
        .rows()
        .into_iter()
        .zip(targets.rows())
        .map(|(x, t)| phase_pair(params, x, &t.to_owned(), cfg.beta, steps).unwrap())
        .collect();
    ep_update(params, &pairs, noise, cfg, iteration, 0.0).unwrap()
}

fn max_rel_diff(a: &NetworkParams, b: &NetworkParams) -> f64 {
    let scale = a.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    a.iter()
        .zip(b.iter())
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
        / scale
}

fn compare(sizes: Vec<usize>, noise: NoiseModel, beta: f64, eta: f64, iterations: u64) {
    let spec = LayerSpec::new(sizes).unwrap();
    let params = init_params(&spec, 11, InitScheme::default()).unwrap();
    let cfg = UpdateConfig::new(eta, beta, 3).unwrap();
    let steps = 6;
    let mut trainer = Trainer::new(params.clone(), cfg, noise, steps);
    let mut reference = params;
    for it in 0..iterations {
        let (x, t) = batch(&spec, 3, 100 + it);
        trainer.step(x.view(), t.view()).unwrap();
        reference = reference_step(&reference, &x, &t, &noise, &cfg, steps, it);
        let d = max_rel_diff(&reference, trainer.params());
        assert!(d < 1e-12, "iteration {it}: relative difference {d:e}");
    }
    assert_eq!(trainer.iteration(), iterations);
}

#[test]
fn noiseless_batched_update_matches_reference() {
    compare(vec![6, 5, 3], NoiseModel::noiseless(), 0.5, 0.05, 5);
}

#[test]
fn deep_network_matches_reference() {
    compare(vec![4, 6, 5, 2], NoiseModel::noiseless(), 1.0, 0.1, 4);
}

#[test]
fn noisy_single_sample_update_matches_reference() {
    compare(vec![6, 5, 3], NoiseModel::new(1e-2, 1, 9).unwrap(), 0.5, 0.05, 5);
}

#[test]
fn noisy_multi_sample_update_matches_reference() {
    compare(vec![4, 6, 5, 2], NoiseModel::new(3e-2, 7, 2).unwrap(), 1.0, 0.02, 4);
}

#[test]
fn positivity_survives_aggressive_updates() {
    let spec = LayerSpec::new(vec![6, 5, 3]).unwrap();
    let params = init_params(&spec, 3, InitScheme::default()).unwrap();
    let cfg = UpdateConfig::new(5.0, 0.1, 2).unwrap();
    let mut trainer = Trainer::new(params, cfg, NoiseModel::new(0.05, 1, 4).unwrap(), 4).with_g_min(0.01);
    for it in 0..50 {
        let (x, t) = batch(&spec, 2, it);
        trainer.step(x.view(), t.view()).unwrap();
        assert!(trainer.params().min_conductance() >= 0.01);
    }
}

#[test]
fn update_is_a_descent_direction_on_average() {
    // with a small step the free-phase loss on a fixed batch goes down
    let spec = LayerSpec::new(vec![8, 6, 3]).unwrap();
    let params = init_params(&spec, 5, InitScheme::default()).unwrap();
    let (x, t) = batch(&spec, 4, 77);
    let loss = |p: &NetworkParams| -> f64 {
        x.rows()
            .into_iter()
            .zip(t.rows())
            .map(|(xi, ti)| {
                let pair = phase_pair(p, xi, &ti.to_owned(), 0.1, 200).unwrap();
                eprop::mse_loss(pair.free.state.output().view(), ti).unwrap()
            })
            .sum()
    };
    let before = loss(&params);
    let cfg = UpdateConfig::new(1e-3, 0.1, 4).unwrap();
    let mut trainer = Trainer::new(params, cfg, NoiseModel::noiseless(), 200);
    for _ in 0..20 {
        trainer.step(x.view(), t.view()).unwrap();
    }
    let after = loss(trainer.params());
    assert!(after < before, "loss {before} -> {after}");
}

#[test]
fn targets_shape_is_checked() {
    let spec = LayerSpec::new(vec![4, 3, 2]).unwrap();
    let params = init_params(&spec, 1, InitScheme::default()).unwrap();
    let mut trainer = Trainer::new(params, UpdateConfig::new(0.1, 1.0, 1).unwrap(), NoiseModel::noiseless(), 3);
    let x = Array2::zeros((1, 4));
    let t = Array2::zeros((1, 3));
    assert!(trainer.step(x.view(), t.view()).is_err());
}
