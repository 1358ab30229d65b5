//! Reference models for validation only.
//!
//! * A Hopfield-energy network with its gradient flow and EP weight update,
//!   written independently of the circuit code.
//! * Central finite-difference loss gradients of the circuit, re-relaxing to
//!   a tight residual for every perturbed parameter.

use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{mse_loss, AttractorState, BatchState, Circuit, PhaseConfig};
use crate::error::{Error, Result};
use crate::learning::{ep_delta, NoiseModel, PhasePair, UpdateConfig};
use crate::netcore::{init_params, InitScheme, LayerSpec, NetworkParams, NetworkState};
use crate::rng::substream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Identity,
    /// `clamp(u, 0, 1)`
    HardSigmoid,
}

impl Activation {
    pub fn apply(self, u: f64) -> f64 {
        match self {
            Activation::Identity => u,
            Activation::HardSigmoid => u.clamp(0.0, 1.0),
        }
    }

    pub fn derivative(self, u: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::HardSigmoid => {
                if u > 0.0 && u < 1.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Fully connected Hopfield network.
#[derive(Debug, Clone, PartialEq)]
pub struct HopfieldModel {
    pub weights: Array2<f64>,
    pub biases: Array1<f64>,
    pub activation: Activation,
    pub state: Array1<f64>,
}

impl HopfieldModel {
    pub fn new(
        weights: Array2<f64>,
        biases: Array1<f64>,
        activation: Activation,
        state: Array1<f64>,
    ) -> Result<Self> {
        let n = biases.len();
        if weights.dim() != (n, n) || state.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "weights {:?}, biases {}, state {}",
                weights.dim(),
                n,
                state.len()
            )));
        }
        let model = Self {
            weights,
            biases,
            activation,
            state,
        };
        model.check_weights()?;
        Ok(model)
    }

    fn check_weights(&self) -> Result<()> {
        let n = self.biases.len();
        for i in 0..n {
            if self.weights[(i, i)] != 0.0 {
                return Err(Error::InvalidArgument(format!("W[{i},{i}] is not zero")));
            }
            for j in 0..i {
                if self.weights[(i, j)] != self.weights[(j, i)] {
                    return Err(Error::InvalidArgument(format!("W is not symmetric at ({i},{j})")));
                }
            }
        }
        Ok(())
    }

    /// `dE/du` at `u`.
    pub fn energy_gradient(&self, u: ArrayView1<f64>) -> Array1<f64> {
        let rho = u.mapv(|x| self.activation.apply(x));
        let field = self.weights.dot(&rho) + &self.biases;
        Array1::from_shape_fn(u.len(), |i| u[i] - self.activation.derivative(u[i]) * field[i])
    }
}

/// `E = 1/2 sum u_i^2 - 1/2 sum_{i != j} W_ij rho_i rho_j - sum b_i rho_i`,
/// summed term by term.
pub fn hopfield_energy(model: &HopfieldModel) -> Result<f64> {
    model.check_weights()?;
    let u = &model.state;
    let rho: Vec<f64> = u.iter().map(|&x| model.activation.apply(x)).collect();
    let n = u.len();
    let mut e = 0.0;
    for i in 0..n {
        e += 0.5 * u[i] * u[i];
        e -= model.biases[i] * rho[i];
        for j in 0..n {
            if i != j {
                e -= 0.5 * model.weights[(i, j)] * rho[i] * rho[j];
            }
        }
    }
    Ok(e)
}

/// Output nodes and targets for a nudged Hopfield relaxation.
#[derive(Debug, Clone, PartialEq)]
pub struct HopfieldNudge<'a> {
    pub beta: f64,
    pub outputs: &'a [usize],
    pub targets: &'a [f64],
}

/// Explicit Euler on `du/dt = -dF/du`, `F = E + beta/2 sum_out (u_k - t_k)^2`,
/// starting from `model.state`, until `max |du/dt| < tol`. Clamped nodes are
/// held.
pub fn hopfield_relax(
    model: &HopfieldModel,
    clamped: &[usize],
    nudge: Option<&HopfieldNudge<'_>>,
    dt: f64,
    max_steps: usize,
    tol: f64,
) -> Result<Array1<f64>> {
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    if let Some(n) = nudge {
        if n.outputs.len() != n.targets.len() {
            return Err(Error::ShapeMismatch("outputs and targets differ in length".into()));
        }
    }
    let mut u = model.state.clone();
    let mut worst = f64::INFINITY;
    for _ in 0..=max_steps {
        let mut grad = model.energy_gradient(u.view());
        if let Some(n) = nudge {
            for (&k, &t) in n.outputs.iter().zip(n.targets) {
                grad[k] += n.beta * (u[k] - t);
            }
        }
        for &c in clamped {
            grad[c] = 0.0;
        }
        worst = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        if worst < tol {
            return Ok(u);
        }
        u.scaled_add(-dt, &grad);
    }
    Err(Error::NotConverged {
        steps: max_steps,
        residual: worst,
    })
}

/// EP weight update for the Hopfield model, derived from
/// `-eta/beta (dF/dW(u^beta) - dE/dW(u^0))` with `dE/dW_ij = -rho_i rho_j`:
/// `dW_ij = (eta / beta) (rho_i^b rho_j^b - rho_i^0 rho_j^0)`, zero diagonal.
pub fn hopfield_ep_update(
    free: ArrayView1<f64>,
    nudged: ArrayView1<f64>,
    eta: f64,
    beta: f64,
    activation: Activation,
) -> Result<Array2<f64>> {
    if free.len() != nudged.len() {
        return Err(Error::ShapeMismatch(format!(
            "free state has {} nodes, nudged state has {}",
            free.len(),
            nudged.len()
        )));
    }
    if !(beta > 0.0) {
        return Err(Error::InvalidArgument(format!("beta must be positive, got {beta}")));
    }
    let r0 = free.mapv(|x| activation.apply(x));
    let rb = nudged.mapv(|x| activation.apply(x));
    let n = free.len();
    Ok(Array2::from_shape_fn((n, n), |(i, j)| {
        if i == j {
            0.0
        } else {
            eta / beta * (rb[i] * rb[j] - r0[i] * r0[j])
        }
    }))
}

/// Central differences `(f(x + h e_k) - f(x - h e_k)) / 2h` for every `k`.
pub fn fd_gradient<F>(x: &[f64], h: f64, mut f: F) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("h must be positive, got {h}")));
    }
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for k in 0..x.len() {
        probe[k] = x[k] + h;
        let up = f(&probe)?;
        probe[k] = x[k] - h;
        let down = f(&probe)?;
        probe[k] = x[k];
        grad.push((up - down) / (2.0 * h));
    }
    Ok(grad)
}

/// Sweeps until the residual drops below `tol`.
pub fn relax_to_tolerance(
    params: &NetworkParams,
    input: ArrayView1<f64>,
    phase: &PhaseConfig,
    init: &NetworkState,
    tol: f64,
    max_steps: usize,
) -> Result<AttractorState> {
    const CHUNK: usize = 64;
    let circuit = Circuit::new(params);
    let mut start = BatchState::from_items(&[init])?;
    start.layers[0].row_mut(0).assign(&input);
    let targets = phase
        .targets()
        .map(|t| t.view().insert_axis(ndarray::Axis(0)).to_owned());
    let mut done = 0;
    loop {
        let out = circuit.relax_batch(
            &start,
            phase.beta(),
            targets.as_ref().map(|t| t.view()),
            CHUNK,
        )?;
        done += CHUNK;
        if out.residuals[0] < tol {
            return Ok(out.item(0));
        }
        if done >= max_steps {
            return Err(Error::NotConverged {
                steps: done,
                residual: out.residuals[0],
            });
        }
        start = out.state;
    }
}

/// Tolerances for fixed-point solves inside the finite-difference oracle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveTolerance {
    pub residual: f64,
    pub max_steps: usize,
}

impl Default for SolveTolerance {
    fn default() -> Self {
        Self {
            residual: 1e-10,
            max_steps: 200_000,
        }
    }
}

/// Loss at the free fixed point reached from zero.
pub fn fixed_point_loss(
    params: &NetworkParams,
    input: ArrayView1<f64>,
    target: ArrayView1<f64>,
    tol: SolveTolerance,
) -> Result<f64> {
    let zero = NetworkState::zeros(params.spec());
    let att = relax_to_tolerance(params, input, &PhaseConfig::free(0), &zero, tol.residual, tol.max_steps)?;
    mse_loss(att.state.output().view(), target)
}

/// Finite-difference gradient of the fixed-point loss with respect to every
/// conductance, in [`NetworkParams::iter`] order.
pub fn fd_loss_gradient(
    params: &NetworkParams,
    input: ArrayView1<f64>,
    target: ArrayView1<f64>,
    h: f64,
    tol: SolveTolerance,
) -> Result<Vec<f64>> {
    let mut probe = params.clone();
    fd_gradient(&params.to_flat(), h, |x| {
        probe.set_flat(x)?;
        fixed_point_loss(&probe, input, target, tol)
    })
}

/// EP update direction (`eta = 1`, no noise) at converged fixed points, in
/// [`NetworkParams::iter`] order. Approximates `-dL/dg` for small `beta`.
pub fn ep_direction(
    params: &NetworkParams,
    input: ArrayView1<f64>,
    target: &Array1<f64>,
    beta: f64,
    tol: SolveTolerance,
) -> Result<Vec<f64>> {
    let zero = NetworkState::zeros(params.spec());
    let free = relax_to_tolerance(params, input, &PhaseConfig::free(0), &zero, tol.residual, tol.max_steps)?;
    let nudged = relax_to_tolerance(
        params,
        input,
        &PhaseConfig::nudged(beta, 0, target.clone())?,
        &free.state,
        tol.residual,
        tol.max_steps,
    )?;
    let cfg = UpdateConfig::new(1.0, beta, 1)?;
    let delta = ep_delta(params, &[PhasePair { free, nudged }], &NoiseModel::noiseless(), &cfg, 0)?;
    Ok(delta.to_flat())
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot / (na * nb)
}

/// A small random circuit with one input and target.
#[derive(Debug, Clone)]
pub struct ToyInstance {
    pub params: NetworkParams,
    pub input: Array1<f64>,
    pub target: Array1<f64>,
}

/// Widths at most 8: doubled input of 2..=8, one or two hidden layers of
/// 1..=8, output of 1..=4. Inputs are `+-gamma x` with `x` in `[0,1]`,
/// `gamma` in `[1, 4]`; targets uniform in `[0, 1]`.
pub fn random_toy_instance(seed: u64) -> Result<ToyInstance> {
    let mut rng = substream(seed, &[0x70_79]);
    let raw = rng.random_range(1..=4usize);
    let mut sizes = vec![2 * raw];
    for _ in 0..rng.random_range(1..=2usize) {
        sizes.push(rng.random_range(1..=8usize));
    }
    sizes.push(rng.random_range(1..=4usize));
    let spec = LayerSpec::new(sizes)?;
    let params = init_params(&spec, rng.random(), InitScheme::GlorotPositive { scale: 1.0 })?;
    let gamma = rng.random_range(1.0..4.0);
    let x: Vec<f64> = (0..raw).map(|_| rng.random::<f64>()).collect();
    let input = Array1::from_iter(x.iter().map(|v| gamma * v).chain(x.iter().map(|v| -gamma * v)));
    let target = Array1::from_iter((0..spec.output_width()).map(|_| rng.random::<f64>()));
    Ok(ToyInstance {
        params,
        input,
        target,
    })
}

/// Outcome of comparing EP directions with finite-difference gradients over
/// many toy instances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityReport {
    pub beta: f64,
    pub threshold: f64,
    pub cosines: Vec<f64>,
}

impl FidelityReport {
    pub fn pass_fraction(&self) -> f64 {
        if self.cosines.is_empty() {
            return 0.0;
        }
        self.cosines.iter().filter(|&&c| c >= self.threshold).count() as f64 / self.cosines.len() as f64
    }
}

/// Cosine between the EP direction and `-grad L` for `instances` toy circuits
/// seeded `seed, seed + 1, ...`.
pub fn gradient_fidelity(instances: usize, beta: f64, seed: u64, h: f64) -> Result<FidelityReport> {
    let tol = SolveTolerance::default();
    let mut cosines = Vec::with_capacity(instances);
    for k in 0..instances as u64 {
        let toy = random_toy_instance(seed + k)?;
        let ep = ep_direction(&toy.params, toy.input.view(), &toy.target, beta, tol)?;
        let fd = fd_loss_gradient(&toy.params, toy.input.view(), toy.target.view(), h, tol)?;
        let neg: Vec<f64> = fd.iter().map(|g| -g).collect();
        cosines.push(cosine_similarity(&ep, &neg));
    }
    Ok(FidelityReport {
        beta,
        threshold: 0.9,
        cosines,
    })
}
