use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};

/// Activation applied to the final layer.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OutputSquash {
    Identity,
    /// `bound * tanh(z)`, keeping outputs inside `[-bound, bound]`.
    Tanh { bound: f64 },
}

impl OutputSquash {
    fn apply(self, z: f64) -> f64 {
        match self {
            OutputSquash::Identity => z,
            OutputSquash::Tanh { bound } => bound * z.tanh(),
        }
    }

    fn derivative(self, z: f64) -> f64 {
        match self {
            OutputSquash::Identity => 1.0,
            OutputSquash::Tanh { bound } => {
                let t = z.tanh();
                bound * (1.0 - t * t)
            }
        }
    }
}

/// Fully-connected network: ReLU between layers, configurable squash on the output.
///
/// Weights are stored `out x in` so that a batch `X` (rows are samples) maps to
/// `X W^T + b`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MlpRepr", into = "MlpRepr")]
pub struct Mlp {
    dims: Vec<usize>,
    pub(crate) weights: Vec<Array2<f64>>,
    pub(crate) biases: Vec<Array1<f64>>,
    squash: OutputSquash,
}

/// Activations recorded by [`Mlp::forward`] and consumed by [`Mlp::backward`].
#[derive(Clone, Debug)]
pub struct ForwardCache {
    dims: Vec<usize>,
    /// Input to each layer (post-activation of the previous one).
    inputs: Vec<Array2<f64>>,
    /// Pre-activation of each layer.
    pre: Vec<Array2<f64>>,
}

impl ForwardCache {
    pub fn layer_count(&self) -> usize {
        self.pre.len()
    }

    pub fn batch_size(&self) -> usize {
        self.inputs.first().map_or(0, |x| x.nrows())
    }
}

/// Parameter-shaped container; used both for gradients and optimizer moments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Gradients {
            weights: net.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            biases: net.biases.iter().map(|b| Array1::zeros(b.raw_dim())).collect(),
        }
    }

    /// Flat views of every tensor, in layer order, weight before bias.
    pub fn tensors(&self) -> impl Iterator<Item = &[f64]> {
        self.weights.iter().zip(&self.biases).flat_map(|(w, b)| {
            [
                w.as_slice().expect("standard layout"),
                b.as_slice().expect("standard layout"),
            ]
        })
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut [f64]> {
        self.weights
            .iter_mut()
            .zip(self.biases.iter_mut())
            .flat_map(|(w, b)| {
                [
                    w.as_slice_mut().expect("standard layout"),
                    b.as_slice_mut().expect("standard layout"),
                ]
            })
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().all(|t| t.iter().all(|v| v.is_finite()))
    }

    pub fn shapes_match(&self, net: &Mlp) -> bool {
        self.weights.len() == net.weights.len()
            && self.weights.iter().zip(&net.weights).all(|(a, b)| a.dim() == b.dim())
            && self.biases.iter().zip(&net.biases).all(|(a, b)| a.dim() == b.dim())
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= factor);
        }
    }
}

impl Mlp {
    /// Builds a network with weights drawn from `U(-1/sqrt(fan_in), 1/sqrt(fan_in))` and zero biases.
    pub fn new(dims: &[usize], squash: OutputSquash, seed: u64) -> Result<Self> {
        validate_dims(dims)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::with_capacity(dims.len() - 1);
        let mut biases = Vec::with_capacity(dims.len() - 1);
        for gap in dims.windows(2) {
            let (fan_in, fan_out) = (gap[0], gap[1]);
            let limit = 1.0 / (fan_in as f64).sqrt();
            let w = Array2::from_shape_simple_fn((fan_out, fan_in), || rng.gen_range(-limit..=limit));
            weights.push(w);
            biases.push(Array1::zeros(fan_out));
        }
        Ok(Mlp { dims: dims.to_vec(), weights, biases, squash })
    }

    /// Network with every parameter zero.
    pub fn zeros(dims: &[usize], squash: OutputSquash) -> Result<Self> {
        validate_dims(dims)?;
        let weights = dims.windows(2).map(|g| Array2::zeros((g[1], g[0]))).collect();
        let biases = dims.windows(2).map(|g| Array1::zeros(g[1])).collect();
        Ok(Mlp { dims: dims.to_vec(), weights, biases, squash })
    }

    /// Assembles a network from explicit parameters, checking the shape chain.
    pub fn from_parts(
        weights: Vec<Array2<f64>>,
        biases: Vec<Array1<f64>>,
        squash: OutputSquash,
    ) -> Result<Self> {
        if weights.is_empty() || weights.len() != biases.len() {
            return Err(shape_err!(
                "{} weight matrices but {} bias vectors",
                weights.len(),
                biases.len()
            ));
        }
        let mut dims = vec![weights[0].ncols()];
        for (i, (w, b)) in weights.iter().zip(&biases).enumerate() {
            if w.ncols() != *dims.last().unwrap() {
                return Err(shape_err!("layer {i} expects {} inputs, chain provides {}", w.ncols(), dims.last().unwrap()));
            }
            if b.len() != w.nrows() {
                return Err(shape_err!("layer {i} bias has {} entries for {} outputs", b.len(), w.nrows()));
            }
            dims.push(w.nrows());
        }
        validate_dims(&dims)?;
        Ok(Mlp {
            dims,
            weights: weights.into_iter().map(|w| w.as_standard_layout().into_owned()).collect(),
            biases,
            squash,
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn squash(&self) -> OutputSquash {
        self.squash
    }

    pub fn layer_count(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[Array2<f64>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Array1<f64>] {
        &self.biases
    }

    pub fn param_count(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>() + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    pub fn tensors(&self) -> impl Iterator<Item = &[f64]> {
        self.weights.iter().zip(&self.biases).flat_map(|(w, b)| {
            [
                w.as_slice().expect("standard layout"),
                b.as_slice().expect("standard layout"),
            ]
        })
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut [f64]> {
        self.weights
            .iter_mut()
            .zip(self.biases.iter_mut())
            .flat_map(|(w, b)| {
                [
                    w.as_slice_mut().expect("standard layout"),
                    b.as_slice_mut().expect("standard layout"),
                ]
            })
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().all(|t| t.iter().all(|v| v.is_finite()))
    }

    pub fn same_architecture(&self, other: &Mlp) -> bool {
        self.dims == other.dims && self.squash == other.squash
    }

    fn check_input(&self, input: &ArrayView2<f64>) -> Result<()> {
        if input.ncols() != self.input_dim() {
            return Err(shape_err!(
                "input width {} does not match network input {}",
                input.ncols(),
                self.input_dim()
            ));
        }
        Ok(())
    }

    /// Forward pass over a batch (one sample per row), keeping what backprop needs.
    pub fn forward(&self, input: ArrayView2<f64>) -> Result<(Array2<f64>, ForwardCache)> {
        self.check_input(&input)?;
        let last = self.layer_count() - 1;
        let mut inputs = Vec::with_capacity(self.layer_count());
        let mut pre = Vec::with_capacity(self.layer_count());
        let mut x = input.to_owned();
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = x.dot(&w.t());
            z += b;
            let act = if l == last {
                z.mapv(|v| self.squash.apply(v))
            } else {
                z.mapv(relu)
            };
            inputs.push(x);
            pre.push(z);
            x = act;
        }
        Ok((x, ForwardCache { dims: self.dims.clone(), inputs, pre }))
    }

    /// Forward pass without recording activations.
    pub fn predict(&self, input: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(&input)?;
        let last = self.layer_count() - 1;
        let mut x = input.to_owned();
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = x.dot(&w.t());
            z += b;
            if l == last {
                z.mapv_inplace(|v| self.squash.apply(v));
            } else {
                z.mapv_inplace(relu);
            }
            x = z;
        }
        Ok(x)
    }

    /// Single-sample convenience wrapper around [`Mlp::predict`].
    pub fn predict_one(&self, input: &[f64]) -> Result<Vec<f64>> {
        let view = ArrayView2::from_shape((1, input.len()), input).map_err(|e| shape_err!("{e}"))?;
        Ok(self.predict(view)?.into_raw_vec_and_offset().0)
    }

    /// Backpropagates `output_grad` (dL/dy, one row per sample).
    ///
    /// Parameter gradients are summed over the batch. The gradient with respect to the
    /// network input is returned alongside.
    pub fn backward(&self, cache: &ForwardCache, output_grad: ArrayView2<f64>) -> Result<(Gradients, Array2<f64>)> {
        if cache.dims != self.dims || cache.layer_count() != self.layer_count() {
            return Err(shape_err!("forward cache was recorded for dims {:?}, network has {:?}", cache.dims, self.dims));
        }
        let batch = cache.batch_size();
        if output_grad.dim() != (batch, self.output_dim()) {
            return Err(shape_err!(
                "output gradient is {:?}, expected ({batch}, {})",
                output_grad.dim(),
                self.output_dim()
            ));
        }
        let n = self.layer_count();
        let mut w_grads = Vec::with_capacity(n);
        let mut b_grads = Vec::with_capacity(n);

        let squash = self.squash;
        let mut delta = output_grad.to_owned();
        ndarray::Zip::from(&mut delta)
            .and(&cache.pre[n - 1])
            .for_each(|d, &z| *d *= squash.derivative(z));

        for l in (0..n).rev() {
            let gw = delta.t().dot(&cache.inputs[l]);
            w_grads.push(if gw.is_standard_layout() { gw } else { gw.as_standard_layout().into_owned() });
            b_grads.push(delta.sum_axis(Axis(0)));
            let mut upstream = delta.dot(&self.weights[l]);
            if l > 0 {
                ndarray::Zip::from(&mut upstream)
                    .and(&cache.pre[l - 1])
                    .for_each(|d, &z| {
                        if z <= 0.0 {
                            *d = 0.0;
                        }
                    });
            }
            delta = upstream;
        }
        w_grads.reverse();
        b_grads.reverse();
        Ok((Gradients { weights: w_grads, biases: b_grads }, delta))
    }
}

#[inline]
fn relu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

fn validate_dims(dims: &[usize]) -> Result<()> {
    if dims.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "a network needs at least an input and an output width, got {dims:?}"
        )));
    }
    if dims.contains(&0) {
        return Err(Error::InvalidArgument(format!("layer widths must be positive, got {dims:?}")));
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct MlpRepr {
    dims: Vec<usize>,
    squash: OutputSquash,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

impl From<Mlp> for MlpRepr {
    fn from(net: Mlp) -> Self {
        MlpRepr {
            dims: net.dims,
            squash: net.squash,
            weights: net.weights.into_iter().map(|w| w.into_raw_vec_and_offset().0).collect(),
            biases: net.biases.into_iter().map(|b| b.to_vec()).collect(),
        }
    }
}

impl TryFrom<MlpRepr> for Mlp {
    type Error = Error;

    fn try_from(repr: MlpRepr) -> Result<Self> {
        validate_dims(&repr.dims)?;
        let gaps = repr.dims.len() - 1;
        if repr.weights.len() != gaps || repr.biases.len() != gaps {
            return Err(shape_err!("parameter lists do not match dims {:?}", repr.dims));
        }
        let weights = repr
            .weights
            .into_iter()
            .zip(repr.dims.windows(2))
            .map(|(flat, g)| Array2::from_shape_vec((g[1], g[0]), flat).map_err(|e| shape_err!("{e}")))
            .collect::<Result<Vec<_>>>()?;
        let biases: Vec<Array1<f64>> = repr.biases.into_iter().map(Array1::from).collect();
        Mlp::from_parts(weights, biases, repr.squash)
    }
}

impl std::fmt::Display for OutputSquash {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            OutputSquash::Identity => write!(f, "identity"),
            OutputSquash::Tanh { bound } => write!(f, "tanh {bound}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn paper_sized_network_has_expected_shapes() {
        let net = Mlp::new(&[3, 256, 256, 256, 2], OutputSquash::Tanh { bound: 1.0 }, 7).unwrap();
        let shapes: Vec<_> = net.weights().iter().map(|w| w.dim()).collect();
        assert_eq!(shapes, vec![(256, 3), (256, 256), (256, 256), (2, 256)]);
        assert!(net.biases().iter().all(|b| b.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn smallest_network() {
        let net = Mlp::new(&[1, 1], OutputSquash::Identity, 0).unwrap();
        assert_eq!(net.weights()[0].dim(), (1, 1));
        assert_eq!(net.biases()[0][0], 0.0);
        assert!(net.weights()[0][[0, 0]].abs() <= 1.0);
    }

    #[test]
    fn init_is_deterministic() {
        let a = Mlp::new(&[4, 8, 3], OutputSquash::Identity, 11).unwrap();
        let b = Mlp::new(&[4, 8, 3], OutputSquash::Identity, 11).unwrap();
        let bits = |n: &Mlp| n.tensors().flatten().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn rejects_bad_dims() {
        assert!(matches!(Mlp::new(&[], OutputSquash::Identity, 0), Err(Error::InvalidArgument(_))));
        assert!(matches!(Mlp::new(&[3], OutputSquash::Identity, 0), Err(Error::InvalidArgument(_))));
        assert!(matches!(Mlp::new(&[3, 0, 2], OutputSquash::Identity, 0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn zero_network_outputs_zero() {
        let net = Mlp::zeros(&[3, 5, 2], OutputSquash::Identity).unwrap();
        let x = array![[1.0, -2.0, 3.0], [0.5, 0.5, 0.5]];
        assert!(net.predict(x.view()).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_scalar_network() {
        let net = Mlp::from_parts(vec![array![[1.0]]], vec![array![0.0]], OutputSquash::Identity).unwrap();
        for x in [0.0, 0.3, 2.5] {
            assert_eq!(net.predict_one(&[x]).unwrap(), vec![x]);
        }
        // no ReLU on the output layer
        assert_eq!(net.predict_one(&[-1.5]).unwrap(), vec![-1.5]);
    }

    #[test]
    fn width_mismatch_is_shape_error() {
        let net = Mlp::new(&[3, 4, 1], OutputSquash::Identity, 1).unwrap();
        let x = Array2::<f64>::zeros((2, 4));
        assert!(matches!(net.forward(x.view()), Err(Error::Shape(_))));
    }

    #[test]
    fn scalar_linear_gradients() {
        // y = w x with w = 0.7, x = 1.3
        let net = Mlp::from_parts(vec![array![[0.7]]], vec![array![0.0]], OutputSquash::Identity).unwrap();
        let x = array![[1.3]];
        let (_, cache) = net.forward(x.view()).unwrap();
        let (g, dx) = net.backward(&cache, array![[1.0]].view()).unwrap();
        assert_eq!(g.weights[0][[0, 0]], 1.3);
        assert_eq!(g.biases[0][0], 1.0);
        assert_eq!(dx[[0, 0]], 0.7);
    }

    #[test]
    fn zero_output_grad_gives_zero_gradients() {
        let net = Mlp::new(&[3, 6, 6, 2], OutputSquash::Tanh { bound: 1.0 }, 3).unwrap();
        let x = Array2::from_shape_fn((4, 3), |(i, j)| (i as f64 - j as f64) * 0.3);
        let (_, cache) = net.forward(x.view()).unwrap();
        let (g, dx) = net.backward(&cache, Array2::zeros((4, 2)).view()).unwrap();
        assert!(g.tensors().flatten().all(|&v| v == 0.0));
        assert!(dx.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn stale_cache_is_rejected() {
        let a = Mlp::new(&[3, 4, 2], OutputSquash::Identity, 1).unwrap();
        let b = Mlp::new(&[3, 5, 2], OutputSquash::Identity, 1).unwrap();
        let x = Array2::<f64>::zeros((2, 3));
        let (_, cache) = a.forward(x.view()).unwrap();
        assert!(matches!(b.backward(&cache, Array2::zeros((2, 2)).view()), Err(Error::Shape(_))));
        assert!(matches!(a.backward(&cache, Array2::zeros((3, 2)).view()), Err(Error::Shape(_))));
    }

    #[test]
    fn serde_round_trip_is_exact() {
        let net = Mlp::new(&[3, 7, 2], OutputSquash::Tanh { bound: 1.0 }, 5).unwrap();
        let json = serde_json::to_string(&net).unwrap();
        let back: Mlp = serde_json::from_str(&json).unwrap();
        assert_eq!(net, back);
    }
}
