//! Free and nudged relaxation of the resistive network.
//!
//! One sweep updates every non-input node at once from the previous voltages:
//!
//! ```text
//! V_i <- relu((sum_j g_ij V_j + b_i * V_rail + I_i) / (sum_j g_ij + b_i))
//! ```
//!
//! where `I_i = beta * (t_i - V_i)` is injected at output nodes during the
//! nudged phase and zero elsewhere. The nudge is a current source, so it does
//! not load the denominator; its fixed points coincide with those of the
//! total energy `P + beta * L`.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};

use crate::error::{Error, Result};
use crate::netcore::{LayerSpec, NetworkParams, NetworkState, RAIL_VOLTAGE};

/// Nudge strength, target and sweep budget for one relaxation phase.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseConfig {
    beta: f64,
    steps: usize,
    targets: Option<Array1<f64>>,
}

impl PhaseConfig {
    pub fn free(steps: usize) -> Self {
        Self {
            beta: 0.0,
            steps,
            targets: None,
        }
    }

    /// A nudged phase. `beta == 0` collapses to the free phase.
    pub fn nudged(beta: f64, steps: usize, targets: Array1<f64>) -> Result<Self> {
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "beta must be finite and non-negative, got {beta}"
            )));
        }
        if beta == 0.0 {
            return Ok(Self::free(steps));
        }
        Ok(Self {
            beta,
            steps,
            targets: Some(targets),
        })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn targets(&self) -> Option<&Array1<f64>> {
        self.targets.as_ref()
    }

    pub fn is_free(&self) -> bool {
        self.targets.is_none()
    }
}

/// Network state at the end of a relaxation.
#[derive(Debug, Clone, PartialEq)]
pub struct AttractorState {
    pub state: NetworkState,
    /// Largest absolute voltage change over non-input nodes on the last sweep.
    pub residual: f64,
}

/// Voltages for a batch of examples: `layers[l]` is `(batch, n_l)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchState {
    pub layers: Vec<Array2<f64>>,
}

impl BatchState {
    /// Clamped inputs, zero everywhere else.
    pub fn clamped(spec: &LayerSpec, inputs: ArrayView2<f64>) -> Result<Self> {
        if inputs.ncols() != spec.input_width() {
            return Err(Error::ShapeMismatch(format!(
                "inputs have {} columns, input layer has {} nodes",
                inputs.ncols(),
                spec.input_width()
            )));
        }
        let batch = inputs.nrows();
        let mut layers: Vec<Array2<f64>> = spec
            .sizes()
            .iter()
            .map(|&n| Array2::zeros((batch, n)))
            .collect();
        layers[0].assign(&inputs);
        Ok(Self { layers })
    }

    pub fn batch_size(&self) -> usize {
        self.layers[0].nrows()
    }

    pub fn output(&self) -> &Array2<f64> {
        self.layers.last().expect("at least two layers")
    }

    /// Row `k` as a single-example state.
    pub fn item(&self, k: usize) -> NetworkState {
        NetworkState::from_layers(self.layers.iter().map(|l| l.row(k).to_owned()).collect())
    }

    pub fn from_items(items: &[&NetworkState]) -> Result<Self> {
        let first = items
            .first()
            .ok_or_else(|| Error::InvalidArgument("empty batch".into()))?;
        let mut layers = Vec::with_capacity(first.num_layers());
        for l in 0..first.num_layers() {
            let n = first.layer(l).len();
            let mut m = Array2::zeros((items.len(), n));
            for (k, s) in items.iter().enumerate() {
                if s.num_layers() != first.num_layers() || s.layer(l).len() != n {
                    return Err(Error::ShapeMismatch("batch items differ in shape".into()));
                }
                m.row_mut(k).assign(s.layer(l));
            }
            layers.push(m);
        }
        Ok(Self { layers })
    }
}

/// Relaxed batch: final voltages and per-item residuals.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchAttractor {
    pub state: BatchState,
    pub residuals: Vec<f64>,
}

impl BatchAttractor {
    pub fn item(&self, k: usize) -> AttractorState {
        AttractorState {
            state: self.state.item(k),
            residual: self.residuals[k],
        }
    }
}

/// Parameters plus the per-node conductance sums, which stay fixed while the
/// parameters do.
pub struct Circuit<'a> {
    params: &'a NetworkParams,
    /// `denominators[l]` for `l >= 1`; entry 0 is empty.
    denominators: Vec<Array1<f64>>,
}

impl<'a> Circuit<'a> {
    pub fn new(params: &'a NetworkParams) -> Self {
        let num_layers = params.spec().num_layers();
        let mut denominators = vec![Array1::zeros(0)];
        for l in 1..num_layers {
            let mut d = params.weights(l - 1).sum_axis(Axis(0));
            if l + 1 < num_layers {
                d += &params.weights(l).sum_axis(Axis(1));
            }
            d += params.biases(l);
            denominators.push(d);
        }
        Self {
            params,
            denominators,
        }
    }

    pub fn params(&self) -> &NetworkParams {
        self.params
    }

    /// Total conductance seen by each node of layer `l >= 1`.
    pub fn denominator(&self, l: usize) -> &Array1<f64> {
        &self.denominators[l]
    }

    /// Current flowing into layer 1 from the clamped inputs, `(batch, n_1)`.
    pub fn input_drive(&self, inputs: ArrayView2<f64>) -> Array2<f64> {
        inputs.dot(self.params.weights(0))
    }

    /// Relaxes a single example. `init` supplies the starting voltages of
    /// the non-input layers; its input layer is replaced by `input`.
    pub fn relax(
        &self,
        input: ArrayView1<f64>,
        phase: &PhaseConfig,
        init: &NetworkState,
    ) -> Result<AttractorState> {
        let spec = self.params.spec();
        init.check_shape(spec)?;
        if input.len() != spec.input_width() {
            return Err(Error::ShapeMismatch(format!(
                "input has {} values, input layer has {} nodes",
                input.len(),
                spec.input_width()
            )));
        }
        let mut start = BatchState::from_items(&[init])?;
        start.layers[0].row_mut(0).assign(&input);
        let targets = phase
            .targets()
            .map(|t| t.view().insert_axis(Axis(0)).to_owned());
        let out = self.relax_batch(
            &start,
            phase.beta(),
            targets.as_ref().map(|t| t.view()),
            phase.steps(),
        )?;
        Ok(out.item(0))
    }

    /// Relaxes a batch from `init` (whose layer 0 holds the clamped inputs).
    /// `targets` must be present iff `beta > 0`.
    pub fn relax_batch(
        &self,
        init: &BatchState,
        beta: f64,
        targets: Option<ArrayView2<f64>>,
        steps: usize,
    ) -> Result<BatchAttractor> {
        let spec = self.params.spec();
        let sizes = spec.sizes();
        let batch = init.batch_size();
        if init.layers.len() != sizes.len()
            || init
                .layers
                .iter()
                .zip(sizes)
                .any(|(m, &n)| m.dim() != (batch, n))
        {
            return Err(Error::ShapeMismatch(
                "batch state does not match the layer spec".into(),
            ));
        }
        let nudge = match (beta > 0.0, targets) {
            (false, _) => None,
            (true, Some(t)) => {
                if t.dim() != (batch, spec.output_width()) {
                    return Err(Error::ShapeMismatch(format!(
                        "targets are {:?}, expected {:?}",
                        t.dim(),
                        (batch, spec.output_width())
                    )));
                }
                Some((beta, t))
            }
            (true, None) => {
                return Err(Error::InvalidArgument(
                    "a nudged phase needs targets".into(),
                ))
            }
        };

        let drive = self.input_drive(init.layers[0].view());
        self.relax_driven(init, &drive, nudge, steps)
    }

    /// Free and nudged relaxation of the same batch, sharing the input drive.
    /// The nudged phase starts from the free attractor.
    pub fn relax_pair(
        &self,
        inputs: ArrayView2<f64>,
        beta: f64,
        targets: ArrayView2<f64>,
        steps: usize,
    ) -> Result<(BatchAttractor, BatchAttractor)> {
        let spec = self.params.spec();
        if targets.dim() != (inputs.nrows(), spec.output_width()) {
            return Err(Error::ShapeMismatch(format!(
                "targets are {:?}, expected {:?}",
                targets.dim(),
                (inputs.nrows(), spec.output_width())
            )));
        }
        let start = BatchState::clamped(spec, inputs)?;
        let drive = self.input_drive(start.layers[0].view());
        let free = self.relax_driven(&start, &drive, None, steps)?;
        let nudge = (beta > 0.0).then_some((beta, targets));
        let nudged = self.relax_driven(&free.state, &drive, nudge, steps)?;
        Ok((free, nudged))
    }

    fn relax_driven(
        &self,
        init: &BatchState,
        drive: &Array2<f64>,
        nudge: Option<(f64, ArrayView2<f64>)>,
        steps: usize,
    ) -> Result<BatchAttractor> {
        let mut state = init.clone();
        let mut residuals = vec![0.0; init.batch_size()];
        for _ in 0..steps {
            residuals = self.sweep(&mut state, drive, nudge)?;
        }
        Ok(BatchAttractor { state, residuals })
    }

    /// One synchronous sweep. Returns per-item max absolute change.
    fn sweep(
        &self,
        state: &mut BatchState,
        drive: &Array2<f64>,
        nudge: Option<(f64, ArrayView2<f64>)>,
    ) -> Result<Vec<f64>> {
        let num_layers = state.layers.len();
        let batch = state.batch_size();
        let mut next: Vec<Array2<f64>> = Vec::with_capacity(num_layers - 1);
        for l in 1..num_layers {
            let mut num = if l == 1 {
                drive.clone()
            } else {
                state.layers[l - 1].dot(self.params.weights(l - 1))
            };
            if l + 1 < num_layers {
                num += &state.layers[l + 1].dot(&self.params.weights(l).t());
            }
            num += &(self.params.biases(l) * RAIL_VOLTAGE);
            if l + 1 == num_layers {
                if let Some((beta, targets)) = nudge {
                    Zip::from(&mut num)
                        .and(targets)
                        .and(&state.layers[l])
                        .for_each(|n, &t, &v| *n += beta * (t - v));
                }
            }
            let denom = &self.denominators[l];
            Zip::from(num.rows_mut()).for_each(|mut row| {
                Zip::from(&mut row).and(denom).for_each(|v, &d| {
                    // a node with no conductance at all floats; read it as 0 V
                    *v = if d > 0.0 { (*v / d).max(0.0) } else { 0.0 };
                });
            });
            if let Some(((_, node), _)) = num.indexed_iter().find(|(_, v)| !v.is_finite()) {
                return Err(Error::Divergence { layer: l, node });
            }
            next.push(num);
        }
        let mut residuals = vec![0.0f64; batch];
        for (l, new) in (1..num_layers).zip(next) {
            for (k, (old_row, new_row)) in state.layers[l].rows().into_iter().zip(new.rows()).enumerate() {
                let delta = old_row
                    .iter()
                    .zip(new_row)
                    .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
                residuals[k] = residuals[k].max(delta);
            }
            state.layers[l] = new;
        }
        Ok(residuals)
    }
}

/// Relaxes one example from `init`.
pub fn relax(
    params: &NetworkParams,
    clamped_input: ArrayView1<f64>,
    phase: &PhaseConfig,
    init: &NetworkState,
) -> Result<AttractorState> {
    Circuit::new(params).relax(clamped_input, phase, init)
}

/// Half the squared error, `0.5 * sum (y - t)^2`.
pub fn mse_loss(output: ArrayView1<f64>, target: ArrayView1<f64>) -> Result<f64> {
    if output.len() != target.len() {
        return Err(Error::ShapeMismatch(format!(
            "output has {} values, target has {}",
            output.len(),
            target.len()
        )));
    }
    Ok(0.5
        * output
            .iter()
            .zip(target)
            .map(|(y, t)| (y - t) * (y - t))
            .sum::<f64>())
}

/// Half the power dissipated in every conductance, rail connections
/// included. Each physical conductance is counted once.
pub fn pseudo_power(params: &NetworkParams, state: &NetworkState) -> Result<f64> {
    state.check_shape(params.spec())?;
    let mut total = 0.0;
    for (l, w) in params.all_weights().iter().enumerate() {
        let lower = state.layer(l);
        let upper = state.layer(l + 1);
        for ((i, j), &g) in w.indexed_iter() {
            let dv = lower[i] - upper[j];
            total += g * dv * dv;
        }
    }
    for l in 1..params.spec().num_layers() {
        let v = state.layer(l);
        total += params
            .biases(l)
            .iter()
            .zip(v)
            .map(|(&b, &vi)| b * (vi - RAIL_VOLTAGE) * (vi - RAIL_VOLTAGE))
            .sum::<f64>();
    }
    Ok(0.5 * total)
}

/// Index of the largest output voltage per row (first wins on ties).
pub fn predictions(outputs: &Array2<f64>) -> Vec<usize> {
    outputs
        .rows()
        .into_iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (k, &v)| {
                    if v > best.1 {
                        (k, v)
                    } else {
                        best
                    }
                })
                .0
        })
        .collect()
}
