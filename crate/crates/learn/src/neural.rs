//! Dense multilayer perceptrons with hand-written backpropagation, Adam and
//! soft target tracking. Batches are rows of an `ndarray` matrix.

use std::io::{Read, Write};

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;

use crate::error::NeuralError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative written in terms of the pre-activation `z` and output `y`.
    fn derivative(self, z: f64, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Identity => 1.0,
        }
    }

    fn code(self) -> u8 {
        match self {
            Activation::Relu => 0,
            Activation::Tanh => 1,
            Activation::Identity => 2,
        }
    }

    fn from_code(code: u8) -> Result<Self, NeuralError> {
        match code {
            0 => Ok(Activation::Relu),
            1 => Ok(Activation::Tanh),
            2 => Ok(Activation::Identity),
            other => Err(NeuralError::Checkpoint(format!("unknown activation code {other}"))),
        }
    }
}

/// Weight matrix is `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Layer {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self { weights: Array2::zeros((outputs, inputs)), bias: Array1::zeros(outputs) }
    }

    pub fn inputs(&self) -> usize {
        self.weights.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weights.nrows()
    }
}

/// Parameter gradients, laid out exactly like the network's layers.
pub type Gradients = Vec<Layer>;

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Layer>,
    hidden: Activation,
    output: Activation,
}

/// Intermediate values of one batched forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input to each layer; the last entry is the network output.
    activations: Vec<Array2<f64>>,
    pre_activations: Vec<Array2<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &Array2<f64> {
        self.activations.last().expect("cache holds the input at least")
    }
}

impl Mlp {
    /// Uniform `±1/√fan_in` initialization. `sizes` lists the input width,
    /// every hidden width, then the output width.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], hidden: Activation, output: Activation, rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "need at least input and output sizes");
        let layers = sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = 1.0 / (fan_in as f64).sqrt();
                Layer {
                    weights: Array2::from_shape_simple_fn((fan_out, fan_in), || rng.gen_range(-bound..=bound)),
                    bias: Array1::from_shape_simple_fn(fan_out, || rng.gen_range(-bound..=bound)),
                }
            })
            .collect();
        Self { layers, hidden, output }
    }

    pub fn from_layers(layers: Vec<Layer>, hidden: Activation, output: Activation) -> Result<Self, NeuralError> {
        if layers.is_empty() {
            return Err(NeuralError::Shape("network has no layers".into()));
        }
        for (k, pair) in layers.windows(2).enumerate() {
            if pair[0].outputs() != pair[1].inputs() {
                return Err(NeuralError::Shape(format!(
                    "layer {k} emits {} values but layer {} expects {}",
                    pair[0].outputs(),
                    k + 1,
                    pair[1].inputs()
                )));
            }
        }
        for (k, layer) in layers.iter().enumerate() {
            if layer.bias.len() != layer.outputs() {
                return Err(NeuralError::Shape(format!("layer {k} bias length mismatch")));
            }
        }
        Ok(Self { layers, hidden, output })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").outputs()
    }

    pub fn activations(&self) -> (Activation, Activation) {
        (self.hidden, self.output)
    }

    fn activation_of(&self, layer: usize) -> Activation {
        if layer + 1 == self.layers.len() {
            self.output
        } else {
            self.hidden
        }
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>, NeuralError> {
        let x = ArrayView2::from_shape((1, input.len()), input)
            .map_err(|e| NeuralError::Shape(e.to_string()))?;
        Ok(self.forward_batch(x)?.into_raw_vec())
    }

    pub fn forward_batch(&self, input: ArrayView2<f64>) -> Result<Array2<f64>, NeuralError> {
        self.check_input(input.ncols())?;
        let mut x = input.to_owned();
        for (k, layer) in self.layers.iter().enumerate() {
            let act = self.activation_of(k);
            let mut z = x.dot(&layer.weights.t());
            z += &layer.bias;
            z.mapv_inplace(|v| act.apply(v));
            x = z;
        }
        Ok(x)
    }

    pub fn forward_cached(&self, input: ArrayView2<f64>) -> Result<ForwardCache, NeuralError> {
        self.check_input(input.ncols())?;
        let mut activations = vec![input.to_owned()];
        let mut pre_activations = Vec::with_capacity(self.layers.len());
        for (k, layer) in self.layers.iter().enumerate() {
            let act = self.activation_of(k);
            let mut z = activations[k].dot(&layer.weights.t());
            z += &layer.bias;
            let y = z.mapv(|v| act.apply(v));
            pre_activations.push(z);
            activations.push(y);
        }
        Ok(ForwardCache { activations, pre_activations })
    }

    /// Gradients of `Σ_rows output_gradient · output` with respect to every
    /// parameter and to the input rows.
    pub fn backward(&self, cache: &ForwardCache, output_gradient: ArrayView2<f64>) -> (Gradients, Array2<f64>) {
        assert_eq!(output_gradient.dim(), cache.output().dim(), "output gradient shape");
        let mut grads: Vec<Layer> = Vec::with_capacity(self.layers.len());
        let mut upstream = output_gradient.to_owned();
        for k in (0..self.layers.len()).rev() {
            let act = self.activation_of(k);
            let mut delta = upstream;
            Zip::from(&mut delta)
                .and(&cache.pre_activations[k])
                .and(&cache.activations[k + 1])
                .for_each(|d, &z, &y| *d *= act.derivative(z, y));
            let weights = delta.t().dot(&cache.activations[k]);
            let bias = delta.sum_axis(Axis(0));
            upstream = delta.dot(&self.layers[k].weights);
            grads.push(Layer { weights, bias });
        }
        grads.reverse();
        (grads, upstream)
    }

    fn check_input(&self, got: usize) -> Result<(), NeuralError> {
        if got != self.input_dim() {
            return Err(NeuralError::DimensionMismatch { expected: self.input_dim(), got });
        }
        Ok(())
    }

    /// All parameters in checkpoint order: per layer, weights row-major then bias.
    pub fn flat_parameters(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(count_trainable_parameters(self));
        for layer in &self.layers {
            out.extend(layer.weights.iter());
            out.extend(layer.bias.iter());
        }
        out
    }

    pub fn set_flat_parameters(&mut self, values: &[f64]) -> Result<(), NeuralError> {
        let expected = count_trainable_parameters(self);
        if values.len() != expected {
            return Err(NeuralError::DimensionMismatch { expected, got: values.len() });
        }
        let mut it = values.iter().copied();
        for layer in &mut self.layers {
            layer.weights.iter_mut().for_each(|w| *w = it.next().expect("length checked"));
            layer.bias.iter_mut().for_each(|b| *b = it.next().expect("length checked"));
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| l.weights.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    /// Euclidean distance between two equally shaped networks' parameters.
    pub fn parameter_distance(&self, other: &Mlp) -> f64 {
        self.flat_parameters()
            .iter()
            .zip(other.flat_parameters())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

/// `Σ (in·out + out)` over layers.
pub fn count_trainable_parameters(net: &Mlp) -> usize {
    net.layers.iter().map(|l| l.inputs() * l.outputs() + l.outputs()).sum()
}

/// `θ′ ← τθ + (1−τ)θ′`, element by element.
pub fn soft_update(target: &mut Mlp, online: &Mlp, tau: f64) {
    assert_eq!(target.layers.len(), online.layers.len(), "network depth mismatch");
    for (t, o) in target.layers.iter_mut().zip(&online.layers) {
        Zip::from(&mut t.weights).and(&o.weights).for_each(|t, &o| *t = tau * o + (1.0 - tau) * *t);
        Zip::from(&mut t.bias).and(&o.bias).for_each(|t, &o| *t = tau * o + (1.0 - tau) * *t);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    first: Vec<Layer>,
    second: Vec<Layer>,
}

impl Adam {
    pub fn new(net: &Mlp, learning_rate: f64) -> Self {
        let zeros: Vec<Layer> = net.layers.iter().map(|l| Layer::zeros(l.inputs(), l.outputs())).collect();
        Self { learning_rate, beta1: 0.9, beta2: 0.999, epsilon: 1e-8, step: 0, first: zeros.clone(), second: zeros }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam descent step.
    pub fn step(&mut self, net: &mut Mlp, grads: &Gradients) {
        assert_eq!(grads.len(), net.layers.len(), "gradient depth mismatch");
        self.step += 1;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.epsilon);
        let c1 = 1.0 - b1.powi(self.step as i32);
        let c2 = 1.0 - b2.powi(self.step as i32);
        let lr = self.learning_rate;
        let update = |p: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        };
        for (k, layer) in net.layers.iter_mut().enumerate() {
            Zip::from(&mut layer.weights)
                .and(&mut self.first[k].weights)
                .and(&mut self.second[k].weights)
                .and(&grads[k].weights)
                .for_each(|p, m, v, &g| update(p, m, v, g));
            Zip::from(&mut layer.bias)
                .and(&mut self.first[k].bias)
                .and(&mut self.second[k].bias)
                .and(&grads[k].bias)
                .for_each(|p, m, v, &g| update(p, m, v, g));
        }
    }
}

const MAGIC: &[u8; 8] = b"SKYMLP\0\0";
const VERSION: u32 = 1;

impl Mlp {
    /// Versioned little-endian layout: magic, version, activation codes,
    /// layer count, dimension list, then every layer's weights (row-major)
    /// and bias as f64.
    pub fn write_to<W: Write>(&self, out: &mut W) -> Result<(), NeuralError> {
        out.write_all(MAGIC)?;
        out.write_all(&VERSION.to_le_bytes())?;
        out.write_all(&[self.hidden.code(), self.output.code()])?;
        out.write_all(&(self.layers.len() as u32).to_le_bytes())?;
        out.write_all(&(self.input_dim() as u64).to_le_bytes())?;
        for layer in &self.layers {
            out.write_all(&(layer.outputs() as u64).to_le_bytes())?;
        }
        for v in self.flat_parameters() {
            out.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(input: &mut R) -> Result<Self, NeuralError> {
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(NeuralError::Checkpoint("bad magic".into()));
        }
        let version = read_u32(input)?;
        if version != VERSION {
            return Err(NeuralError::Checkpoint(format!("unsupported version {version}")));
        }
        let mut codes = [0u8; 2];
        input.read_exact(&mut codes)?;
        let hidden = Activation::from_code(codes[0])?;
        let output = Activation::from_code(codes[1])?;
        let depth = read_u32(input)? as usize;
        if depth == 0 || depth > 64 {
            return Err(NeuralError::Checkpoint(format!("implausible layer count {depth}")));
        }
        let mut sizes = vec![read_u64(input)? as usize];
        for _ in 0..depth {
            sizes.push(read_u64(input)? as usize);
        }
        if sizes.iter().any(|&s| s == 0 || s > 1 << 20) {
            return Err(NeuralError::Checkpoint(format!("implausible layer sizes {sizes:?}")));
        }
        let layers: Vec<Layer> = sizes.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect();
        let mut net = Mlp::from_layers(layers, hidden, output)?;
        let mut values = vec![0.0; count_trainable_parameters(&net)];
        let mut buf = [0u8; 8];
        for v in values.iter_mut() {
            input.read_exact(&mut buf)?;
            *v = f64::from_le_bytes(buf);
        }
        net.set_flat_parameters(&values)?;
        Ok(net)
    }
}

fn read_u32<R: Read>(input: &mut R) -> Result<u32, NeuralError> {
    let mut buf = [0u8; 4];
    input.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64<R: Read>(input: &mut R) -> Result<u64, NeuralError> {
    let mut buf = [0u8; 8];
    input.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}
