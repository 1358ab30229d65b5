//! Layered resistive network: architecture, conductances and node voltages.
//!
//! Layer `l` is connected to layer `l + 1` by a dense block of conductances,
//! stored once as an `n_l x n_{l+1}` matrix and read in both directions, so the
//! network is symmetric by construction. Every non-input node also has a bias
//! conductance to a fixed +1 V rail.

use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{domain, substream};

/// Voltage of the rail that bias conductances connect to.
pub const RAIL_VOLTAGE: f64 = 1.0;

/// Layer widths, input first. The input width is twice the raw data
/// dimension (each value is fed in with both signs).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct LayerSpec {
    sizes: Vec<usize>,
}

impl LayerSpec {
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::InvalidSpec(format!(
                "need at least 2 layers, got {}",
                sizes.len()
            )));
        }
        if let Some(pos) = sizes.iter().position(|&w| w == 0) {
            return Err(Error::InvalidSpec(format!("layer {pos} has zero width")));
        }
        if sizes[0] % 2 != 0 {
            return Err(Error::InvalidSpec(format!(
                "input width {} is not even; inputs are doubled",
                sizes[0]
            )));
        }
        Ok(Self { sizes })
    }

    /// Builds a spec from the raw input dimension, doubling it.
    pub fn from_raw_input(raw_input: usize, rest: &[usize]) -> Result<Self> {
        let mut sizes = Vec::with_capacity(rest.len() + 1);
        sizes.push(2 * raw_input);
        sizes.extend_from_slice(rest);
        Self::new(sizes)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn num_layers(&self) -> usize {
        self.sizes.len()
    }

    pub fn input_width(&self) -> usize {
        self.sizes[0]
    }

    pub fn raw_input_width(&self) -> usize {
        self.sizes[0] / 2
    }

    pub fn output_width(&self) -> usize {
        *self.sizes.last().expect("at least two layers")
    }

    /// Number of trainable conductances, biases included.
    pub fn num_params(&self) -> usize {
        let weights: usize = self.sizes.windows(2).map(|w| w[0] * w[1]).sum();
        let biases: usize = self.sizes[1..].iter().sum();
        weights + biases
    }
}

impl TryFrom<Vec<usize>> for LayerSpec {
    type Error = Error;

    fn try_from(sizes: Vec<usize>) -> Result<Self> {
        Self::new(sizes)
    }
}

impl From<LayerSpec> for Vec<usize> {
    fn from(spec: LayerSpec) -> Self {
        spec.sizes
    }
}

/// Conductance initialization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitScheme {
    /// Uniform on `(0, scale / sqrt(fan_in + fan_out)]` for each block; biases
    /// use the bound of their incoming block.
    GlorotPositive { scale: f64 },
    /// Every conductance and bias set to the same value.
    Constant { value: f64 },
}

impl Default for InitScheme {
    fn default() -> Self {
        InitScheme::GlorotPositive { scale: 1.0 }
    }
}

impl InitScheme {
    /// Upper bound of the uniform draw for the block between layers of the
    /// given widths.
    pub fn glorot_bound(scale: f64, fan_in: usize, fan_out: usize) -> f64 {
        scale / ((fan_in + fan_out) as f64).sqrt()
    }
}

/// Trainable conductances of a layered network.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    spec: LayerSpec,
    /// `weights[l]` has shape `(n_l, n_{l+1})`.
    weights: Vec<Array2<f64>>,
    /// `biases[l - 1]` belongs to layer `l`.
    biases: Vec<Array1<f64>>,
}

impl NetworkParams {
    /// All-zero parameters of the right shape.
    pub fn zeros(spec: &LayerSpec) -> Self {
        let sizes = spec.sizes();
        Self {
            spec: spec.clone(),
            weights: sizes
                .windows(2)
                .map(|w| Array2::zeros((w[0], w[1])))
                .collect(),
            biases: sizes[1..].iter().map(|&n| Array1::zeros(n)).collect(),
        }
    }

    pub fn from_parts(
        spec: LayerSpec,
        weights: Vec<Array2<f64>>,
        biases: Vec<Array1<f64>>,
    ) -> Result<Self> {
        let sizes = spec.sizes();
        if weights.len() != sizes.len() - 1 || biases.len() != sizes.len() - 1 {
            return Err(Error::ShapeMismatch(format!(
                "expected {} weight blocks and bias vectors, got {} and {}",
                sizes.len() - 1,
                weights.len(),
                biases.len()
            )));
        }
        for (l, w) in weights.iter().enumerate() {
            if w.dim() != (sizes[l], sizes[l + 1]) {
                return Err(Error::ShapeMismatch(format!(
                    "weight block {l} is {:?}, expected {:?}",
                    w.dim(),
                    (sizes[l], sizes[l + 1])
                )));
            }
        }
        for (k, b) in biases.iter().enumerate() {
            if b.len() != sizes[k + 1] {
                return Err(Error::ShapeMismatch(format!(
                    "bias vector of layer {} has {} entries, expected {}",
                    k + 1,
                    b.len(),
                    sizes[k + 1]
                )));
            }
        }
        Ok(Self {
            spec,
            weights,
            biases,
        })
    }

    pub fn spec(&self) -> &LayerSpec {
        &self.spec
    }

    /// Conductance block between layer `l` and `l + 1`.
    pub fn weights(&self, l: usize) -> &Array2<f64> {
        &self.weights[l]
    }

    pub fn weights_mut(&mut self, l: usize) -> &mut Array2<f64> {
        &mut self.weights[l]
    }

    pub fn all_weights(&self) -> &[Array2<f64>] {
        &self.weights
    }

    /// Bias conductances of layer `layer` (which must be `>= 1`).
    pub fn biases(&self, layer: usize) -> &Array1<f64> {
        &self.biases[layer - 1]
    }

    pub fn biases_mut(&mut self, layer: usize) -> &mut Array1<f64> {
        &mut self.biases[layer - 1]
    }

    pub fn all_biases(&self) -> &[Array1<f64>] {
        &self.biases
    }

    /// Conductance between node `a` and node `b`, each given as
    /// `(layer, index)`. `None` when the nodes are not in adjacent layers.
    /// Both argument orders read the same stored entry.
    pub fn conductance_between(&self, a: (usize, usize), b: (usize, usize)) -> Option<f64> {
        let (lo, hi) = if a.0 <= b.0 { (a, b) } else { (b, a) };
        if hi.0 != lo.0 + 1 || hi.0 >= self.spec.num_layers() {
            return None;
        }
        self.weights[lo.0].get((lo.1, hi.1)).copied()
    }

    /// Iterates every conductance, biases last.
    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.weights
            .iter()
            .flat_map(|w| w.iter().copied())
            .chain(self.biases.iter().flat_map(|b| b.iter().copied()))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.weights
            .iter_mut()
            .flat_map(|w| w.iter_mut())
            .chain(self.biases.iter_mut().flat_map(|b| b.iter_mut()))
    }

    pub fn min_conductance(&self) -> f64 {
        self.iter().fold(f64::INFINITY, f64::min)
    }

    /// Flattened copy, in `iter` order.
    pub fn to_flat(&self) -> Vec<f64> {
        self.iter().collect()
    }

    /// Overwrites every conductance from a flat slice in `iter` order.
    pub fn set_flat(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.spec.num_params() {
            return Err(Error::ShapeMismatch(format!(
                "flat parameter vector has {} entries, expected {}",
                values.len(),
                self.spec.num_params()
            )));
        }
        for (dst, &v) in self.iter_mut().zip(values) {
            *dst = v;
        }
        Ok(())
    }

    pub fn clip_in_place(&mut self, g_min: f64) {
        for g in self.iter_mut() {
            if *g < g_min {
                *g = g_min;
            }
        }
    }
}

/// Draws initial conductances. Pure in `(spec, seed, scheme)`.
pub fn init_params(spec: &LayerSpec, seed: u64, scheme: InitScheme) -> Result<NetworkParams> {
    let spec = LayerSpec::new(spec.sizes().to_vec())?;
    let mut params = NetworkParams::zeros(&spec);
    match scheme {
        InitScheme::GlorotPositive { scale } => {
            if !(scale > 0.0 && scale.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "init scale must be positive, got {scale}"
                )));
            }
            let sizes = spec.sizes().to_vec();
            for l in 0..sizes.len() - 1 {
                let bound = InitScheme::glorot_bound(scale, sizes[l], sizes[l + 1]);
                let mut rng = substream(seed, &[domain::INIT, l as u64, 0]);
                // 1 - U[0,1) lies in (0, 1]
                params.weights[l].mapv_inplace(|_| bound * (1.0 - rng.random::<f64>()));
                let mut rng = substream(seed, &[domain::INIT, l as u64, 1]);
                params.biases[l].mapv_inplace(|_| bound * (1.0 - rng.random::<f64>()));
            }
        }
        InitScheme::Constant { value } => {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "constant conductance must be positive, got {value}"
                )));
            }
            params.iter_mut().for_each(|g| *g = value);
        }
    }
    Ok(params)
}

/// Projects every conductance onto `[g_min, inf)`.
pub fn clip_params(mut params: NetworkParams, g_min: f64) -> Result<NetworkParams> {
    if !(g_min >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "g_min must be non-negative, got {g_min}"
        )));
    }
    params.clip_in_place(g_min);
    Ok(params)
}

/// Node voltages, one vector per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    layers: Vec<Array1<f64>>,
}

impl NetworkState {
    /// Zero voltages everywhere except the input layer, which is clamped to
    /// `input`.
    pub fn clamped(spec: &LayerSpec, input: &Array1<f64>) -> Result<Self> {
        if input.len() != spec.input_width() {
            return Err(Error::ShapeMismatch(format!(
                "input has {} values, input layer has {} nodes",
                input.len(),
                spec.input_width()
            )));
        }
        let mut layers: Vec<Array1<f64>> = spec.sizes().iter().map(|&n| Array1::zeros(n)).collect();
        layers[0].assign(input);
        Ok(Self { layers })
    }

    pub fn zeros(spec: &LayerSpec) -> Self {
        Self {
            layers: spec.sizes().iter().map(|&n| Array1::zeros(n)).collect(),
        }
    }

    pub fn from_layers(layers: Vec<Array1<f64>>) -> Self {
        Self { layers }
    }

    pub fn layer(&self, l: usize) -> &Array1<f64> {
        &self.layers[l]
    }

    pub fn layer_mut(&mut self, l: usize) -> &mut Array1<f64> {
        &mut self.layers[l]
    }

    pub fn layers(&self) -> &[Array1<f64>] {
        &self.layers
    }

    pub fn input(&self) -> &Array1<f64> {
        &self.layers[0]
    }

    pub fn output(&self) -> &Array1<f64> {
        self.layers.last().expect("at least two layers")
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub(crate) fn check_shape(&self, spec: &LayerSpec) -> Result<()> {
        let widths: Vec<usize> = self.layers.iter().map(|l| l.len()).collect();
        if widths != spec.sizes() {
            return Err(Error::ShapeMismatch(format!(
                "state widths {widths:?} do not match layer spec {:?}",
                spec.sizes()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> LayerSpec {
        LayerSpec::new(vec![4, 3, 2]).unwrap()
    }

    #[test]
    fn spec_validation() {
        assert!(LayerSpec::new(vec![4]).is_err());
        assert!(LayerSpec::new(vec![4, 0, 2]).is_err());
        assert!(LayerSpec::new(vec![3, 2]).is_err());
        let spec = LayerSpec::from_raw_input(784, &[1024, 10]).unwrap();
        assert_eq!(spec.sizes(), &[1568, 1024, 10]);
        assert_eq!(spec.raw_input_width(), 784);
        assert_eq!(toy().num_params(), 4 * 3 + 3 * 2 + 3 + 2);
    }

    #[test]
    fn spec_deserialization_validates() {
        assert!(serde_json::from_str::<LayerSpec>("[4,3,2]").is_ok());
        assert!(serde_json::from_str::<LayerSpec>("[4,0,2]").is_err());
    }

    #[test]
    fn init_is_deterministic() {
        let a = init_params(&toy(), 7, InitScheme::default()).unwrap();
        let b = init_params(&toy(), 7, InitScheme::default()).unwrap();
        assert_eq!(a, b);
        let c = init_params(&toy(), 8, InitScheme::default()).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn init_is_strictly_positive_and_bounded() {
        for seed in 0..20 {
            let p = init_params(&toy(), seed, InitScheme::default()).unwrap();
            assert!(p.min_conductance() > 0.0);
            let bound0 = InitScheme::glorot_bound(1.0, 4, 3);
            assert!(p.weights(0).iter().all(|&g| g <= bound0));
        }
    }

    #[test]
    fn init_mean_matches_uniform_mean_at_full_scale() {
        let spec = LayerSpec::new(vec![1568, 1024, 10]).unwrap();
        let p = init_params(&spec, 0, InitScheme::default()).unwrap();
        for l in 0..2 {
            let (fan_in, fan_out) = p.weights(l).dim();
            // uniform on (0, a] has mean a / 2
            let analytic = InitScheme::glorot_bound(1.0, fan_in, fan_out) / 2.0;
            let empirical = p.weights(l).mean().unwrap();
            assert!(
                (empirical - analytic).abs() <= 0.2 * analytic,
                "block {l}: {empirical} vs {analytic}"
            );
        }
    }

    #[test]
    fn clip_examples() {
        let mut p = init_params(&toy(), 1, InitScheme::Constant { value: 0.5 }).unwrap();
        p.weights_mut(0)[(0, 0)] = -0.2;
        let clipped = clip_params(p.clone(), 0.0).unwrap();
        assert_eq!(clipped.weights(0)[(0, 0)], 0.0);
        let untouched: Vec<f64> = clipped.iter().skip(1).collect();
        assert!(untouched.iter().all(|&g| g == 0.5));

        let pos = init_params(&toy(), 3, InitScheme::default()).unwrap();
        assert_eq!(clip_params(pos.clone(), 0.0).unwrap(), pos);

        let mut q = init_params(&toy(), 1, InitScheme::Constant { value: 0.5 }).unwrap();
        q.weights_mut(0)[(0, 0)] = -1.0;
        q.weights_mut(0)[(0, 1)] = 0.0;
        let q = clip_params(q, 1e-8).unwrap();
        assert_eq!(q.weights(0)[(0, 0)], 1e-8);
        assert_eq!(q.weights(0)[(0, 1)], 1e-8);
        assert_eq!(q.weights(0)[(0, 2)], 0.5);

        assert!(clip_params(pos, -1.0).is_err());
    }

    #[test]
    fn conductance_lookup_is_symmetric() {
        let p = init_params(&toy(), 5, InitScheme::default()).unwrap();
        for i in 0..4 {
            for j in 0..3 {
                let fwd = p.conductance_between((0, i), (1, j)).unwrap();
                let back = p.conductance_between((1, j), (0, i)).unwrap();
                assert_eq!(fwd.to_bits(), back.to_bits());
                assert_eq!(fwd, p.weights(0)[(i, j)]);
            }
        }
        assert_eq!(p.conductance_between((0, 0), (2, 0)), None);
        assert_eq!(p.conductance_between((1, 0), (1, 1)), None);
    }

    #[test]
    fn flat_round_trip() {
        let p = init_params(&toy(), 9, InitScheme::default()).unwrap();
        let mut q = NetworkParams::zeros(p.spec());
        q.set_flat(&p.to_flat()).unwrap();
        assert_eq!(p, q);
        assert!(q.set_flat(&[1.0]).is_err());
    }
}
