//! Equilibrium Propagation updates from noisy voltage measurements.
//!
//! The circuit settles deterministically; only the read-out is noisy. Each
//! attractor state is measured `N` times, `V_samp = V_att + sigma * xi`, and a
//! conductance moves by
//!
//! ```text
//! dg_ij = -(eta / 2 beta) * (E[(dV_ij^beta)^2] - E[(dV_ij^0)^2])
//! ```
//!
//! averaged over the batch. This is gradient descent on `0.5 * |y - t|^2`:
//! the pseudo-power derivative with respect to `g_ij` is `dV_ij^2 / 2`.
//!
//! Two routes compute the same update. [`ep_update`] works item by item from
//! explicit per-conductance expectations and is the reference. [`Trainer`]
//! expands the square, `(a - c)^2 = a^2 + c^2 - 2ac`, so that the cross terms
//! of a whole batch become one matrix product; it is what training runs on.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView2, Axis, Zip};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dynamics::{mse_loss, predictions, AttractorState, BatchState, Circuit};
use crate::error::{Error, Result};
use crate::netcore::{NetworkParams, NetworkState, RAIL_VOLTAGE};
use crate::rng::{domain, substream};

/// Gaussian measurement noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    /// Standard deviation of one measurement, in volts.
    pub sigma: f64,
    /// Measurements averaged per attractor state.
    pub samples: usize,
    pub seed: u64,
}

impl NoiseModel {
    pub fn new(sigma: f64, samples: usize, seed: u64) -> Result<Self> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "sigma must be finite and non-negative, got {sigma}"
            )));
        }
        if samples == 0 {
            return Err(Error::InvalidArgument("need at least one sample".into()));
        }
        Ok(Self {
            sigma,
            samples,
            seed,
        })
    }

    pub fn noiseless() -> Self {
        Self {
            sigma: 0.0,
            samples: 1,
            seed: 0,
        }
    }

    /// Samples actually drawn. Without noise every sample is the attractor
    /// itself, so one suffices and the mean is exact.
    pub fn effective_samples(&self) -> usize {
        if self.sigma == 0.0 {
            1
        } else {
            self.samples
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Phase {
    Free = 0,
    Nudged = 1,
}

/// Address of one measurement of one attractor state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DrawIndex {
    pub iteration: u64,
    pub item: u64,
    pub phase: Phase,
    pub sample: u64,
}

fn measurement_stream(noise: &NoiseModel, index: DrawIndex) -> rand_chacha::ChaCha8Rng {
    substream(
        noise.seed,
        &[
            domain::NOISE,
            index.iteration,
            index.item,
            index.phase as u64,
            index.sample,
        ],
    )
}

/// One noisy measurement of every node, inputs included. Draws run layer by
/// layer, node by node, from the stream addressed by `index`.
pub fn sample_state(att: &AttractorState, noise: &NoiseModel, index: DrawIndex) -> NetworkState {
    if noise.sigma == 0.0 {
        return att.state.clone();
    }
    let mut rng = measurement_stream(noise, index);
    let layers = att
        .state
        .layers()
        .iter()
        .map(|layer| {
            layer.mapv(|v| {
                let xi: f64 = StandardNormal.sample(&mut rng);
                v + noise.sigma * xi
            })
        })
        .collect();
    NetworkState::from_layers(layers)
}

/// Arrays shaped like the trainable parameters: one matrix per conductance
/// block and one vector per non-input layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrid {
    pub weights: Vec<Array2<f64>>,
    /// `biases[l - 1]` belongs to layer `l`.
    pub biases: Vec<Array1<f64>>,
}

impl ParamGrid {
    pub fn zeros_like(params: &NetworkParams) -> Self {
        Self {
            weights: params
                .all_weights()
                .iter()
                .map(|w| Array2::zeros(w.dim()))
                .collect(),
            biases: params
                .all_biases()
                .iter()
                .map(|b| Array1::zeros(b.len()))
                .collect(),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.weights
            .iter()
            .flat_map(|w| w.iter().copied())
            .chain(self.biases.iter().flat_map(|b| b.iter().copied()))
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.iter().collect()
    }

    fn zip_mut_with(&mut self, other: &ParamGrid, f: impl Fn(&mut f64, f64) + Copy) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            Zip::from(a).and(b).for_each(|x, &y| f(x, y));
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            Zip::from(a).and(b).for_each(|x, &y| f(x, y));
        }
    }
}

/// `E[(V_i - V_j)^2]` over `noise.samples` measurements of `att`, for every
/// conductance. Bias entries use the rail voltage, which is not measured.
pub fn squared_drop_expectation(
    att: &AttractorState,
    noise: &NoiseModel,
    iteration: u64,
    item: u64,
    phase: Phase,
) -> ParamGrid {
    let layers = att.state.layers();
    let mut out = ParamGrid {
        weights: layers
            .windows(2)
            .map(|w| Array2::zeros((w[0].len(), w[1].len())))
            .collect(),
        biases: layers[1..].iter().map(|l| Array1::zeros(l.len())).collect(),
    };
    let n = noise.effective_samples();
    for sample in 0..n {
        let index = DrawIndex {
            iteration,
            item,
            phase,
            sample: sample as u64,
        };
        let measured = sample_state(att, noise, index);
        for (l, acc) in out.weights.iter_mut().enumerate() {
            let lower = measured.layer(l);
            let upper = measured.layer(l + 1);
            for ((i, j), e) in acc.indexed_iter_mut() {
                let dv = lower[i] - upper[j];
                *e += dv * dv;
            }
        }
        for (k, acc) in out.biases.iter_mut().enumerate() {
            Zip::from(acc).and(measured.layer(k + 1)).for_each(|e, &v| {
                let dv = v - RAIL_VOLTAGE;
                *e += dv * dv;
            });
        }
    }
    let inv = 1.0 / n as f64;
    out.weights.iter_mut().for_each(|w| *w *= inv);
    out.biases.iter_mut().for_each(|b| *b *= inv);
    out
}

/// Learning rate, nudge strength and batch size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpdateConfig {
    pub eta: f64,
    pub beta: f64,
    pub batch_size: usize,
}

impl UpdateConfig {
    pub fn new(eta: f64, beta: f64, batch_size: usize) -> Result<Self> {
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::InvalidArgument(format!("eta must be positive, got {eta}")));
        }
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "beta must be positive, got {beta}"
            )));
        }
        if batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be at least 1".into()));
        }
        Ok(Self {
            eta,
            beta,
            batch_size,
        })
    }
}

/// Free and nudged attractors of one example.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasePair {
    pub free: AttractorState,
    pub nudged: AttractorState,
}

/// Batch-mean conductance change, before clipping. Item `k` of `pairs`
/// draws its noise at address `(iteration, k, phase, sample)`.
pub fn ep_delta(
    params: &NetworkParams,
    pairs: &[PhasePair],
    noise: &NoiseModel,
    cfg: &UpdateConfig,
    iteration: u64,
) -> Result<ParamGrid> {
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    for pair in pairs {
        pair.free.state.check_shape(params.spec())?;
        pair.nudged.state.check_shape(params.spec())?;
    }
    let mut delta = ParamGrid::zeros_like(params);
    for (k, pair) in pairs.iter().enumerate() {
        let nudged = squared_drop_expectation(&pair.nudged, noise, iteration, k as u64, Phase::Nudged);
        let free = squared_drop_expectation(&pair.free, noise, iteration, k as u64, Phase::Free);
        delta.zip_mut_with(&nudged, |d, e| *d += e);
        delta.zip_mut_with(&free, |d, e| *d -= e);
    }
    let scale = -cfg.eta / (2.0 * cfg.beta * pairs.len() as f64);
    delta.weights.iter_mut().for_each(|w| *w *= scale);
    delta.biases.iter_mut().for_each(|b| *b *= scale);
    Ok(delta)
}

/// Applies the batch-mean EP update and clips conductances at `g_min`.
pub fn ep_update(
    params: &NetworkParams,
    pairs: &[PhasePair],
    noise: &NoiseModel,
    cfg: &UpdateConfig,
    iteration: u64,
    g_min: f64,
) -> Result<NetworkParams> {
    let delta = ep_delta(params, pairs, noise, cfg, iteration)?;
    let mut next = params.clone();
    apply_delta(&mut next, &delta);
    crate::netcore::clip_params(next, g_min)
}

fn apply_delta(params: &mut NetworkParams, delta: &ParamGrid) {
    for (l, d) in delta.weights.iter().enumerate() {
        *params.weights_mut(l) += d;
    }
    for (k, d) in delta.biases.iter().enumerate() {
        *params.biases_mut(k + 1) += d;
    }
}

/// Same rule as `NetworkParams::clip_in_place`; NaN passes through so a
/// diverged update is still caught by the next relaxation.
fn clip(g: f64, g_min: f64) -> f64 {
    if g < g_min {
        g_min
    } else {
        g
    }
}

/// Loss and accuracy accumulated over training examples (free phase).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RunningMetrics {
    pub examples: u64,
    pub loss_sum: f64,
    pub correct: u64,
}

impl RunningMetrics {
    pub fn mean_loss(&self) -> f64 {
        if self.examples == 0 {
            0.0
        } else {
            self.loss_sum / self.examples as f64
        }
    }

    pub fn accuracy(&self) -> f64 {
        if self.examples == 0 {
            0.0
        } else {
            self.correct as f64 / self.examples as f64
        }
    }

    pub fn merge(&mut self, other: &RunningMetrics) {
        self.examples += other.examples;
        self.loss_sum += other.loss_sum;
        self.correct += other.correct;
    }
}

/// SGD loop state: parameters, hyperparameters and the update counter that
/// addresses the noise streams.
#[derive(Debug, Clone)]
pub struct Trainer {
    params: NetworkParams,
    cfg: UpdateConfig,
    noise: NoiseModel,
    steps: usize,
    g_min: f64,
    iteration: u64,
}

impl Trainer {
    pub fn new(
        params: NetworkParams,
        cfg: UpdateConfig,
        noise: NoiseModel,
        relaxation_steps: usize,
    ) -> Self {
        Self {
            params,
            cfg,
            noise,
            steps: relaxation_steps,
            g_min: 0.0,
            iteration: 0,
        }
    }

    pub fn with_g_min(mut self, g_min: f64) -> Self {
        self.g_min = g_min;
        self
    }

    pub fn params(&self) -> &NetworkParams {
        &self.params
    }

    pub fn into_params(self) -> NetworkParams {
        self.params
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn config(&self) -> &UpdateConfig {
        &self.cfg
    }

    pub fn noise(&self) -> &NoiseModel {
        &self.noise
    }

    /// Free relax from zero, nudged relax from the free attractor, then one
    /// update. Returns free-phase metrics for the batch.
    pub fn step(&mut self, inputs: ArrayView2<f64>, targets: ArrayView2<f64>) -> Result<RunningMetrics> {
        let spec = self.params.spec();
        if targets.dim() != (inputs.nrows(), spec.output_width()) {
            return Err(Error::ShapeMismatch(format!(
                "targets are {:?}, expected {:?}",
                targets.dim(),
                (inputs.nrows(), spec.output_width())
            )));
        }
        if inputs.nrows() == 0 {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        let (free, nudged) =
            Circuit::new(&self.params).relax_pair(inputs, self.cfg.beta, targets, self.steps)?;
        let (free, nudged) = (free.state, nudged.state);
        let metrics = batch_metrics(free.output(), targets)?;
        self.apply_batched_update(&free, &nudged);
        self.iteration += 1;
        Ok(metrics)
    }

    /// Stacks the measurements of every item and sample into
    /// `(batch * n, width)` matrices, one per layer.
    fn measure(&self, state: &BatchState, phase: Phase) -> Vec<Array2<f64>> {
        let n = self.noise.effective_samples();
        let batch = state.batch_size();
        let mut out: Vec<Array2<f64>> = state
            .layers
            .iter()
            .map(|l| Array2::zeros((batch * n, l.ncols())))
            .collect();
        for item in 0..batch {
            for sample in 0..n {
                let row = item * n + sample;
                if self.noise.sigma == 0.0 {
                    for (dst, src) in out.iter_mut().zip(&state.layers) {
                        dst.row_mut(row).assign(&src.row(item));
                    }
                    continue;
                }
                let index = DrawIndex {
                    iteration: self.iteration,
                    item: item as u64,
                    phase,
                    sample: sample as u64,
                };
                let mut rng = measurement_stream(&self.noise, index);
                for (dst, src) in out.iter_mut().zip(&state.layers) {
                    Zip::from(dst.row_mut(row)).and(src.row(item)).for_each(|d, &v| {
                        let xi: f64 = StandardNormal.sample(&mut rng);
                        *d = v + self.noise.sigma * xi;
                    });
                }
            }
        }
        out
    }

    /// Adds the batch-mean update to every block, then clips. The squared
    /// drop is expanded as `a^2 + c^2 - 2ac`, so each block update is one
    /// matrix product accumulated in place: the cross terms plus two rank-one
    /// rows carrying the per-node `a^2` and `c^2` sums.
    fn apply_batched_update(&mut self, free: &BatchState, nudged: &BatchState) {
        let n = self.noise.effective_samples() as f64;
        let batch = free.batch_size() as f64;
        let m_free = self.measure(free, Phase::Free);
        let m_nudged = self.measure(nudged, Phase::Nudged);

        // per-node sum over items and samples of V^2 (nudged minus free), / n
        let sq_diff: Vec<Array1<f64>> = m_free
            .iter()
            .zip(&m_nudged)
            .map(|(f, b)| (b.mapv(|v| v * v).sum_axis(Axis(0)) - f.mapv(|v| v * v).sum_axis(Axis(0))) / n)
            .collect();

        let scale = -self.cfg.eta / (2.0 * self.cfg.beta * batch);
        let g_min = self.g_min;
        let blocks = self.params.spec().num_layers() - 1;
        for l in 0..blocks {
            let rows = m_free[l].nrows();
            let k = 2 * rows + 2;
            // lower^T upper = -(2/n) sum(a c, nudged minus free) + a2_i + c2_j
            let mut lower = Array2::zeros((k, m_free[l].ncols()));
            lower.slice_mut(s![..rows, ..]).assign(&(&m_nudged[l] * (-2.0 / n)));
            lower.slice_mut(s![rows..2 * rows, ..]).assign(&(&m_free[l] * (2.0 / n)));
            lower.row_mut(2 * rows).assign(&sq_diff[l]);
            lower.row_mut(2 * rows + 1).fill(1.0);
            let mut upper = Array2::zeros((k, m_free[l + 1].ncols()));
            upper.slice_mut(s![..rows, ..]).assign(&m_nudged[l + 1]);
            upper.slice_mut(s![rows..2 * rows, ..]).assign(&m_free[l + 1]);
            upper.row_mut(2 * rows).fill(1.0);
            upper.row_mut(2 * rows + 1).assign(&sq_diff[l + 1]);
            let w = self.params.weights_mut(l);
            general_mat_mul(scale, &lower.t(), &upper, 1.0, w);
            w.mapv_inplace(|g| clip(g, g_min));
        }
        for l in 1..=blocks {
            let rail = |m: &Array2<f64>| {
                m.mapv(|v| (v - RAIL_VOLTAGE) * (v - RAIL_VOLTAGE))
                    .sum_axis(Axis(0))
            };
            let d = (rail(&m_nudged[l]) - rail(&m_free[l])) * (scale / n);
            Zip::from(self.params.biases_mut(l))
                .and(&d)
                .for_each(|g, &dg| *g = clip(*g + dg, g_min));
        }
    }

    /// Runs up to `iterations` updates, pulling batches from `batches`.
    /// Stops early if the stream ends.
    pub fn train<I>(&mut self, batches: &mut I, iterations: u64) -> Result<RunningMetrics>
    where
        I: Iterator<Item = crate::data::EncodedBatch>,
    {
        let mut metrics = RunningMetrics::default();
        for _ in 0..iterations {
            let Some(batch) = batches.next() else { break };
            let m = self.step(batch.inputs.view(), batch.targets.view())?;
            metrics.merge(&m);
        }
        Ok(metrics)
    }
}

/// Loss and argmax accuracy of a batch of outputs against one-hot targets.
pub fn batch_metrics(outputs: &Array2<f64>, targets: ArrayView2<f64>) -> Result<RunningMetrics> {
    let mut m = RunningMetrics::default();
    let predicted = predictions(outputs);
    let wanted = predictions(&targets.to_owned());
    for (k, (y, t)) in outputs.rows().into_iter().zip(targets.rows()).enumerate() {
        m.loss_sum += mse_loss(y, t)?;
        m.examples += 1;
        if predicted[k] == wanted[k] {
            m.correct += 1;
        }
    }
    Ok(m)
}

/// Relaxes both phases of one example the way [`Trainer::step`] does.
pub fn phase_pair(
    params: &NetworkParams,
    input: ndarray::ArrayView1<f64>,
    target: &Array1<f64>,
    beta: f64,
    steps: usize,
) -> Result<PhasePair> {
    use crate::dynamics::PhaseConfig;
    let circuit = Circuit::new(params);
    let zero = NetworkState::zeros(params.spec());
    let free = circuit.relax(input, &PhaseConfig::free(steps), &zero)?;
    let nudged = circuit.relax(
        input,
        &PhaseConfig::nudged(beta, steps, target.clone())?,
        &free.state,
    )?;
    Ok(PhasePair { free, nudged })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netcore::{init_params, InitScheme, LayerSpec};
    use ndarray::array;

    fn att(layers: Vec<Array1<f64>>) -> AttractorState {
        AttractorState {
            state: NetworkState::from_layers(layers),
            residual: 0.0,
        }
    }

    fn idx(sample: u64) -> DrawIndex {
        DrawIndex {
            iteration: 3,
            item: 1,
            phase: Phase::Free,
            sample,
        }
    }

    #[test]
    fn noise_model_validation() {
        assert!(NoiseModel::new(-1.0, 1, 0).is_err());
        assert!(NoiseModel::new(1.0, 0, 0).is_err());
        assert!(NoiseModel::new(f64::NAN, 1, 0).is_err());
        assert!(UpdateConfig::new(0.0, 1.0, 1).is_err());
        assert!(UpdateConfig::new(1.0, 0.0, 1).is_err());
        assert!(UpdateConfig::new(1.0, 1.0, 0).is_err());
    }

    #[test]
    fn zero_sigma_sampling_is_identity() {
        let a = att(vec![array![1.0, -2.0], array![0.3], array![0.25]]);
        let noise = NoiseModel::new(0.0, 5, 11).unwrap();
        assert_eq!(sample_state(&a, &noise, idx(0)), a.state);
    }

    #[test]
    fn sampling_is_addressed() {
        let a = att(vec![array![1.0, -2.0], array![0.3], array![0.25]]);
        let noise = NoiseModel::new(0.1, 1, 11).unwrap();
        assert_eq!(sample_state(&a, &noise, idx(0)), sample_state(&a, &noise, idx(0)));
        assert_ne!(sample_state(&a, &noise, idx(0)), sample_state(&a, &noise, idx(1)));
        // inputs are measured too
        assert_ne!(sample_state(&a, &noise, idx(0)).layer(0), a.state.layer(0));
    }

    #[test]
    fn zero_sigma_expectation_is_the_noiseless_square() {
        let a = att(vec![array![1.0, -2.0], array![0.3], array![0.25]]);
        for n in [1, 3, 17] {
            let noise = NoiseModel::new(0.0, n, 0).unwrap();
            let e = squared_drop_expectation(&a, &noise, 0, 0, Phase::Free);
            assert_eq!(e.weights[0][(0, 0)], (1.0f64 - 0.3).powi(2));
            assert_eq!(e.weights[0][(1, 0)], (-2.0f64 - 0.3).powi(2));
            assert_eq!(e.weights[1][(0, 0)], (0.3f64 - 0.25).powi(2));
            assert_eq!(e.biases[0][0], (0.3f64 - 1.0).powi(2));
            assert_eq!(e.biases[1][0], (0.25f64 - 1.0).powi(2));
        }
    }

    #[test]
    fn single_sample_expectation_is_one_draw() {
        let a = att(vec![array![1.0, -2.0], array![0.3], array![0.25]]);
        let noise = NoiseModel::new(0.2, 1, 5).unwrap();
        let e = squared_drop_expectation(&a, &noise, 4, 2, Phase::Nudged);
        let s = sample_state(
            &a,
            &noise,
            DrawIndex {
                iteration: 4,
                item: 2,
                phase: Phase::Nudged,
                sample: 0,
            },
        );
        assert_eq!(e.weights[0][(1, 0)], (s.layer(0)[1] - s.layer(1)[0]).powi(2));
        assert_eq!(e.biases[1][0], (s.layer(2)[0] - 1.0).powi(2));
    }

    #[test]
    fn hand_built_update() {
        // dV^beta = 2, dV^0 = 1 across the single input-hidden conductance
        let spec = LayerSpec::new(vec![2, 1, 1]).unwrap();
        let params = NetworkParams::from_parts(
            spec,
            vec![array![[10.0], [0.0]], array![[0.0]]],
            vec![array![0.0], array![0.0]],
        )
        .unwrap();
        let free = att(vec![array![1.0, 0.0], array![0.0], array![0.0]]);
        let nudged = att(vec![array![2.0, 0.0], array![0.0], array![0.0]]);
        let cfg = UpdateConfig::new(1.0, 0.5, 1).unwrap();
        let pairs = [PhasePair { free, nudged }];
        let d = ep_delta(&params, &pairs, &NoiseModel::noiseless(), &cfg, 0).unwrap();
        // -(1 / (2 * 0.5)) * (4 - 1)
        assert_eq!(d.weights[0][(0, 0)], -3.0);
        let next = ep_update(&params, &pairs, &NoiseModel::noiseless(), &cfg, 0, 0.0).unwrap();
        assert_eq!(next.weights(0)[(0, 0)], 7.0);
    }

    #[test]
    fn identical_phases_give_no_update() {
        let spec = LayerSpec::new(vec![4, 3, 2]).unwrap();
        let params = init_params(&spec, 2, InitScheme::default()).unwrap();
        let pair = phase_pair(&params, array![1.0, 0.2, -1.0, -0.2].view(), &array![1.0, 0.0], 0.5, 10).unwrap();
        let same = PhasePair {
            free: pair.free.clone(),
            nudged: pair.free.clone(),
        };
        let cfg = UpdateConfig::new(0.1, 0.5, 1).unwrap();
        let d = ep_delta(&params, &[same.clone()], &NoiseModel::noiseless(), &cfg, 0).unwrap();
        assert!(d.iter().all(|x| x == 0.0));
        let next = ep_update(&params, &[same], &NoiseModel::noiseless(), &cfg, 0, 0.0).unwrap();
        assert_eq!(next, params);
    }

    #[test]
    fn update_scales_with_eta_and_inverse_beta() {
        let spec = LayerSpec::new(vec![4, 3, 2]).unwrap();
        let params = init_params(&spec, 2, InitScheme::default()).unwrap();
        let pair = phase_pair(&params, array![1.0, 0.2, -1.0, -0.2].view(), &array![1.0, 0.0], 0.5, 10).unwrap();
        let noise = NoiseModel::noiseless();
        let base = ep_delta(&params, &[pair.clone()], &noise, &UpdateConfig::new(0.1, 0.5, 1).unwrap(), 0).unwrap();
        let eta2 = ep_delta(&params, &[pair.clone()], &noise, &UpdateConfig::new(0.2, 0.5, 1).unwrap(), 0).unwrap();
        let beta2 = ep_delta(&params, &[pair], &noise, &UpdateConfig::new(0.1, 1.0, 1).unwrap(), 0).unwrap();
        for ((b, e), h) in base.iter().zip(eta2.iter()).zip(beta2.iter()) {
            assert!((e - 2.0 * b).abs() <= 1e-15 * b.abs().max(1e-300));
            assert!((h - 0.5 * b).abs() <= 1e-15 * b.abs().max(1e-300));
        }
    }

    #[test]
    fn batch_order_does_not_matter_without_noise() {
        let spec = LayerSpec::new(vec![4, 3, 2]).unwrap();
        let params = init_params(&spec, 2, InitScheme::default()).unwrap();
        let p1 = phase_pair(&params, array![1.0, 0.2, -1.0, -0.2].view(), &array![1.0, 0.0], 0.5, 10).unwrap();
        let p2 = phase_pair(&params, array![0.1, 0.9, -0.1, -0.9].view(), &array![0.0, 1.0], 0.5, 10).unwrap();
        let cfg = UpdateConfig::new(0.1, 0.5, 2).unwrap();
        let noise = NoiseModel::noiseless();
        let ab = ep_delta(&params, &[p1.clone(), p2.clone()], &noise, &cfg, 0).unwrap();
        let ba = ep_delta(&params, &[p2, p1], &noise, &cfg, 0).unwrap();
        // summation order only: error bounded by rounding of the largest term
        let scale = ab.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        for (x, y) in ab.iter().zip(ba.iter()) {
            assert!((x - y).abs() <= 1e-13 * scale);
        }
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let spec = LayerSpec::new(vec![4, 3, 2]).unwrap();
        let params = init_params(&spec, 2, InitScheme::default()).unwrap();
        let wrong = att(vec![array![1.0, 0.0], array![0.0], array![0.0]]);
        let pairs = [PhasePair {
            free: wrong.clone(),
            nudged: wrong,
        }];
        let cfg = UpdateConfig::new(0.1, 0.5, 1).unwrap();
        assert!(ep_delta(&params, &pairs, &NoiseModel::noiseless(), &cfg, 0).is_err());
        assert!(ep_delta(&params, &[], &NoiseModel::noiseless(), &cfg, 0).is_err());
    }
}
