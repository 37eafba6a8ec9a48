use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ParamVector;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative given the pre-activation `z` and the activation output `a`.
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
        }
    }
}

/// Layer sizes `(input, hidden.., output)`; hidden layers use `activation`,
/// the output layer is affine.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub layer_sizes: Vec<usize>,
    pub activation: Activation,
}

impl MlpSpec {
    pub fn new(layer_sizes: Vec<usize>, activation: Activation) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::InvalidArgument("an MLP needs at least input and output layers".into()));
        }
        if layer_sizes.contains(&0) {
            return Err(Error::InvalidArgument("layer sizes must be >= 1".into()));
        }
        Ok(MlpSpec {
            layer_sizes,
            activation,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().expect("validated spec")
    }

    pub fn num_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    pub fn param_count(&self) -> usize {
        self.layer_sizes.windows(2).map(|w| w[1] * w[0] + w[1]).sum()
    }

    /// `(weight offset, bias offset, fan_in, fan_out)` per layer. Weights are
    /// row-major `fan_out x fan_in`, followed by the bias.
    fn layout(&self) -> Vec<(usize, usize, usize, usize)> {
        let mut off = 0;
        self.layer_sizes
            .windows(2)
            .map(|w| {
                let (i, o) = (w[0], w[1]);
                let entry = (off, off + o * i, i, o);
                off += o * i + o;
                entry
            })
            .collect()
    }

    /// Uniform fan-in initialization: every weight and bias of a layer drawn
    /// from `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn init_params<R: Rng + ?Sized>(&self, rng: &mut R) -> ParamVector {
        let mut values = Vec::with_capacity(self.param_count());
        for w in self.layer_sizes.windows(2) {
            let bound = 1.0 / (w[0] as f64).sqrt();
            for _ in 0..w[0] * w[1] + w[1] {
                values.push(rng.gen_range(-bound..=bound));
            }
        }
        ParamVector::new(self.layer_sizes.clone(), values)
    }

    pub fn zero_params(&self) -> ParamVector {
        ParamVector::new(self.layer_sizes.clone(), vec![0.0; self.param_count()])
    }

    fn check_params(&self, params: &ParamVector) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                params.len()
            )));
        }
        Ok(())
    }
}

/// Intermediate values kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input to each layer (`inputs[0]` is the batch itself).
    inputs: Vec<Array2<f64>>,
    /// Pre-activations of each layer.
    pre: Vec<Array2<f64>>,
}

impl ForwardCache {
    /// Smallest `|pre-activation|` over hidden units; used to keep finite
    /// differences away from relu kinks.
    pub fn min_abs_hidden_preactivation(&self) -> f64 {
        let hidden = self.pre.len().saturating_sub(1);
        self.pre[..hidden]
            .iter()
            .flat_map(|z| z.iter().map(|v| v.abs()))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Gradient of `output . upstream` with respect to parameters and input.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub params: ParamVector,
    pub input: Vec<f64>,
}

/// A network: spec plus parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub spec: MlpSpec,
    pub params: ParamVector,
}

impl Mlp {
    pub fn new(spec: MlpSpec, params: ParamVector) -> Result<Self> {
        spec.check_params(&params)?;
        Ok(Mlp { spec, params })
    }

    fn weights(&self, w_off: usize, fan_in: usize, fan_out: usize) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((fan_out, fan_in), &self.params.values[w_off..w_off + fan_in * fan_out])
            .expect("layout matches spec")
    }

    fn bias(&self, b_off: usize, fan_out: usize) -> ArrayView1<'_, f64> {
        ArrayView1::from(&self.params.values[b_off..b_off + fan_out])
    }

    /// Batched forward pass; each row of `x` is one input.
    pub fn forward_batch(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        Ok(self.forward_cached(x)?.0)
    }

    pub fn forward_cached(&self, x: ArrayView2<'_, f64>) -> Result<(Array2<f64>, ForwardCache)> {
        if x.ncols() != self.spec.input_dim() {
            return Err(Error::Shape(format!(
                "input width {} but network expects {}",
                x.ncols(),
                self.spec.input_dim()
            )));
        }
        let layout = self.spec.layout();
        let last = layout.len() - 1;
        let mut inputs = Vec::with_capacity(layout.len());
        let mut pre = Vec::with_capacity(layout.len());
        let mut a = x.to_owned();
        for (l, &(w_off, b_off, fan_in, fan_out)) in layout.iter().enumerate() {
            let mut z = a.dot(&self.weights(w_off, fan_in, fan_out).t());
            z += &self.bias(b_off, fan_out);
            if z.iter().any(|v| !v.is_finite()) {
                return Err(Error::NumericOverflow { layer: l });
            }
            let next = if l == last {
                z.clone()
            } else {
                let act = self.spec.activation;
                z.mapv(|v| act.apply(v))
            };
            inputs.push(a);
            pre.push(z);
            a = next;
        }
        Ok((a, ForwardCache { inputs, pre }))
    }

    /// Reverse pass: given `d(loss)/d(output)` per row, returns the flat
    /// parameter gradient (summed over rows) and `d(loss)/d(input)`.
    pub fn backward_batch(
        &self,
        cache: &ForwardCache,
        upstream: ArrayView2<'_, f64>,
    ) -> Result<(ParamVector, Array2<f64>)> {
        let layout = self.spec.layout();
        let batch = cache.inputs[0].nrows();
        if upstream.dim() != (batch, self.spec.output_dim()) {
            return Err(Error::Shape(format!(
                "upstream gradient is {:?}, expected ({}, {})",
                upstream.dim(),
                batch,
                self.spec.output_dim()
            )));
        }
        let mut grad = vec![0.0; self.spec.param_count()];
        let mut dz = upstream.to_owned();
        for l in (0..layout.len()).rev() {
            let (w_off, b_off, fan_in, fan_out) = layout[l];
            let dw = dz.t().dot(&cache.inputs[l]);
            grad[w_off..w_off + fan_in * fan_out]
                .iter_mut()
                .zip(dw.iter())
                .for_each(|(g, v)| *g = *v);
            let db: Array1<f64> = dz.sum_axis(Axis(0));
            grad[b_off..b_off + fan_out].copy_from_slice(db.as_slice().expect("contiguous"));
            let mut da = dz.dot(&self.weights(w_off, fan_in, fan_out));
            if l > 0 {
                let act = self.spec.activation;
                ndarray::Zip::from(&mut da)
                    .and(&cache.pre[l - 1])
                    .and(&cache.inputs[l])
                    .for_each(|d, &z, &a| *d *= act.derivative(z, a));
            }
            dz = da;
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite { what: "parameter gradient" });
        }
        Ok((ParamVector::new(self.spec.layer_sizes.clone(), grad), dz))
    }
}

/// Forward pass on a single input vector.
pub fn forward(spec: &MlpSpec, params: &ParamVector, input: &[f64]) -> Result<Vec<f64>> {
    let net = Mlp::new(spec.clone(), params.clone())?;
    let x = ArrayView2::from_shape((1, input.len()), input).expect("row vector");
    Ok(net.forward_batch(x)?.into_raw_vec_and_offset().0)
}

/// Reverse-mode gradient of `forward(input) . upstream`.
pub fn backward(spec: &MlpSpec, params: &ParamVector, input: &[f64], upstream: &[f64]) -> Result<Gradients> {
    let net = Mlp::new(spec.clone(), params.clone())?;
    let x = ArrayView2::from_shape((1, input.len()), input).expect("row vector");
    let (_, cache) = net.forward_cached(x)?;
    let up = ArrayView2::from_shape((1, upstream.len()), upstream).expect("row vector");
    let (params, dx) = net.backward_batch(&cache, up)?;
    Ok(Gradients {
        params,
        input: dx.into_raw_vec_and_offset().0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{central_difference, relative_error};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Straight-loop forward pass written from the layer definition.
    fn naive_forward(spec: &MlpSpec, p: &[f64], input: &[f64]) -> Vec<f64> {
        let mut a = input.to_vec();
        let mut off = 0;
        let n_layers = spec.layer_sizes.len() - 1;
        for l in 0..n_layers {
            let (fi, fo) = (spec.layer_sizes[l], spec.layer_sizes[l + 1]);
            let w = &p[off..off + fi * fo];
            let b = &p[off + fi * fo..off + fi * fo + fo];
            off += fi * fo + fo;
            let mut out = vec![0.0; fo];
            for o in 0..fo {
                let mut acc = b[o];
                for i in 0..fi {
                    acc += w[o * fi + i] * a[i];
                }
                out[o] = if l + 1 == n_layers {
                    acc
                } else {
                    match spec.activation {
                        Activation::Relu => acc.max(0.0),
                        Activation::Tanh => acc.tanh(),
                    }
                };
            }
            a = out;
        }
        a
    }

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn random_input(r: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
        (0..d).map(|_| r.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn zero_net_gives_zero_output() {
        let spec = MlpSpec::new(vec![3, 3, 3], Activation::Relu).unwrap();
        let out = forward(&spec, &spec.zero_params(), &[0.3, -2.0, 5.0]).unwrap();
        assert_eq!(out, vec![0.0; 3]);
    }

    #[test]
    fn affine_single_layer() {
        let spec = MlpSpec::new(vec![2, 2], Activation::Tanh).unwrap();
        // W = [[1, 2], [3, 4]], b = [0.5, -1]
        let p = ParamVector::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0, 0.5, -1.0]);
        let out = forward(&spec, &p, &[1.0, -1.0]).unwrap();
        assert_eq!(out, vec![1.0 - 2.0 + 0.5, 3.0 - 4.0 - 1.0]);

        let g = backward(&spec, &p, &[1.0, -1.0], &[2.0, 3.0]).unwrap();
        // dW = upstream (outer) input, db = upstream, dx = W^T upstream
        assert_eq!(g.params.values, vec![2.0, -2.0, 3.0, -3.0, 2.0, 3.0]);
        assert_eq!(g.input, vec![2.0 * 1.0 + 3.0 * 3.0, 2.0 * 2.0 + 3.0 * 4.0]);
    }

    #[test]
    fn matches_naive_forward_on_experiment_shapes() {
        let mut r = rng(11);
        for sizes in [vec![60, 64, 64, 1], vec![50, 64, 64, 10], vec![60, 64, 1]] {
            for act in [Activation::Relu, Activation::Tanh] {
                let spec = MlpSpec::new(sizes.clone(), act).unwrap();
                let p = spec.init_params(&mut r);
                let x = random_input(&mut r, sizes[0]);
                let fast = forward(&spec, &p, &x).unwrap();
                let slow = naive_forward(&spec, &p.values, &x);
                for (a, b) in fast.iter().zip(&slow) {
                    assert!((a - b).abs() < 1e-12, "{a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn zero_upstream_zero_gradient() {
        let mut r = rng(3);
        let spec = MlpSpec::new(vec![4, 5, 2], Activation::Tanh).unwrap();
        let p = spec.init_params(&mut r);
        let g = backward(&spec, &p, &[0.1, 0.2, 0.3, 0.4], &[0.0, 0.0]).unwrap();
        assert!(g.params.values.iter().all(|&v| v == 0.0));
        assert!(g.input.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut r = rng(5);
        for act in [Activation::Relu, Activation::Tanh] {
            let spec = MlpSpec::new(vec![5, 7, 6, 3], act).unwrap();
            let p = spec.init_params(&mut r);
            let x = random_input(&mut r, 5);
            let up = random_input(&mut r, 3);
            let g = backward(&spec, &p, &x, &up).unwrap();
            let f = |q: &[f64]| {
                let out = forward(&spec, &ParamVector::new(p.shape.clone(), q.to_vec()), &x).unwrap();
                out.iter().zip(&up).map(|(a, b)| a * b).sum()
            };
            let fd = central_difference(f, &p.values, 1e-5);
            for (a, b) in g.params.values.iter().zip(&fd) {
                assert!(relative_error(*a, *b) < 1e-4, "{a} vs {b}");
            }
            let fx = |q: &[f64]| {
                let out = forward(&spec, &p, q).unwrap();
                out.iter().zip(&up).map(|(a, b)| a * b).sum()
            };
            let fdx = central_difference(fx, &x, 1e-5);
            for (a, b) in g.input.iter().zip(&fdx) {
                assert!(relative_error(*a, *b) < 1e-4, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn overflow_names_layer() {
        let spec = MlpSpec::new(vec![1, 1, 1], Activation::Relu).unwrap();
        let p = ParamVector::new(vec![1, 1, 1], vec![1e308, 0.0, 1e308, 0.0]);
        match forward(&spec, &p, &[10.0]) {
            Err(Error::NumericOverflow { layer }) => assert_eq!(layer, 0),
            other => panic!("expected overflow, got {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(MlpSpec::new(vec![3], Activation::Relu).is_err());
        assert!(MlpSpec::new(vec![3, 0, 1], Activation::Relu).is_err());
        let spec = MlpSpec::new(vec![2, 1], Activation::Relu).unwrap();
        assert!(forward(&spec, &ParamVector::new(vec![2, 1], vec![0.0; 2]), &[0.0, 0.0]).is_err());
        assert!(forward(&spec, &spec.zero_params(), &[0.0]).is_err());
    }
}
