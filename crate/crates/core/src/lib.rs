//! Equilibrium Propagation on layered nonlinear resistive networks, with
//! noisy voltage measurements.
//!
//! A network is a stack of node layers joined by positive conductances, with
//! diode (ReLU) nodes and bias conductances to a +1 V rail. Training clamps
//! the doubled, amplified input, lets the circuit settle (free phase), nudges
//! the outputs toward the target and lets it settle again (nudged phase), then
//! moves each conductance by the change in the squared voltage drop across it.
//! Voltages are read through Gaussian measurement noise, optionally averaged
//! over several samples.
//!
//! - [`netcore`]: architecture, parameters, initialization, positivity
//! - [`checkpoint`]: binary parameter files
//! - [`dynamics`]: Millman relaxation, loss, pseudo-power
//! - [`learning`]: noisy sampling, EP updates, the SGD trainer
//! - [`uncertainty`]: sample-count planning
//! - [`data`]: IDX loading and input encoding
//! - [`harness`]: trials, sweeps, statistics, persistence
//! - [`oracle`]: reference Hopfield model and finite-difference gradients

pub mod checkpoint;
pub mod data;
pub mod dynamics;
pub mod error;
pub mod harness;
pub mod learning;
pub mod netcore;
pub mod oracle;
pub mod rng;
pub mod uncertainty;

pub use dynamics::{mse_loss, pseudo_power, relax, AttractorState, Circuit, PhaseConfig};
pub use error::{Error, Result};
pub use learning::{ep_update, sample_state, NoiseModel, Trainer, UpdateConfig};
pub use netcore::{clip_params, init_params, InitScheme, LayerSpec, NetworkParams, NetworkState};
