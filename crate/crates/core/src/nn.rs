//! Feedforward networks with tanh hidden layers, a linear output head, MSE
//! loss and Adam. This is the competing model type of the partitioning loop.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Layer sizes, input through output. At least one hidden layer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    layer_sizes: Vec<usize>,
}

impl Architecture {
    pub fn new(layer_sizes: Vec<usize>) -> Result<Self> {
        if layer_sizes.len() < 3 {
            return Err(Error::InvalidArchitecture(format!(
                "need at least 3 layers (input, hidden, output), got {}",
                layer_sizes.len()
            )));
        }
        if layer_sizes.iter().any(|&s| s == 0) {
            return Err(Error::InvalidArchitecture(
                "every layer must have at least one unit".into(),
            ));
        }
        Ok(Self { layer_sizes })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    /// Number of weight layers (matrices), i.e. hidden layer count + 1.
    pub fn weight_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    /// Total trainable parameters: sum over layers of fan_in * fan_out + fan_out.
    pub fn param_count(&self) -> usize {
        self.layer_sizes
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }
}

/// Mini-batch training settings. Batch size 16 is the experiment default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
}

impl TrainConfig {
    pub fn new(batch_size: usize, epochs: usize) -> Result<Self> {
        if batch_size == 0 || epochs == 0 {
            return Err(Error::InvalidConfig(
                "batch_size and epochs must be >= 1".into(),
            ));
        }
        Ok(Self { batch_size, epochs })
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 16,
            epochs: 1,
        }
    }
}

/// Per-parameter Adam accumulators, shapes mirroring the network parameters.
#[derive(Debug, Clone, PartialEq)]
struct AdamState {
    m_weights: Vec<Vec<f64>>,
    v_weights: Vec<Vec<f64>>,
    m_biases: Vec<Vec<f64>>,
    v_biases: Vec<Vec<f64>>,
    step: u64,
}

impl AdamState {
    fn zeroed_like(weights: &[Vec<f64>], biases: &[Vec<f64>]) -> Self {
        Self {
            m_weights: weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            v_weights: weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            m_biases: biases.iter().map(|b| vec![0.0; b.len()]).collect(),
            v_biases: biases.iter().map(|b| vec![0.0; b.len()]).collect(),
            step: 0,
        }
    }
}

/// Parameter-shaped gradient buffers returned by [`Network::backward`].
#[derive(Debug, Clone)]
pub struct Gradients {
    pub d_weights: Vec<Vec<f64>>,
    pub d_biases: Vec<Vec<f64>>,
}

/// A feedforward net. Weight matrix of layer `l` is stored row-major with
/// shape `(fan_out, fan_in)`.
///
/// Each network owns its RNG, seeded at construction, so training (batch
/// shuffling) is deterministic per network and independent of any other
/// network being trained concurrently.
#[derive(Debug, Clone)]
pub struct Network {
    arch: Architecture,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
    adam: AdamState,
    learning_rate: f64,
    seed: u64,
    rng: ChaCha8Rng,
}

impl Network {
    /// Initializes weights uniformly in `(-1/sqrt(fan_in), 1/sqrt(fan_in))`
    /// and biases at zero. Deterministic given the seed.
    pub fn init(arch: Architecture, learning_rate: f64, seed: u64) -> Result<Self> {
        if !(learning_rate > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "learning rate must be positive, got {learning_rate}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for pair in arch.layer_sizes().windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            let w: Vec<f64> = (0..fan_in * fan_out)
                .map(|_| rng.random_range(-bound..bound))
                .collect();
            weights.push(w);
            biases.push(vec![0.0; fan_out]);
        }
        let adam = AdamState::zeroed_like(&weights, &biases);
        Ok(Self {
            arch,
            weights,
            biases,
            adam,
            learning_rate,
            seed,
            rng,
        })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn param_count(&self) -> usize {
        self.arch.param_count()
    }

    /// Forward pass: tanh on hidden layers, affine output. Pure.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.arch.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.arch.input_dim(),
                got: input.len(),
            });
        }
        let last = self.weights.len() - 1;
        let mut activation = input.to_vec();
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            activation = affine(w, b, &activation);
            if l != last {
                for v in &mut activation {
                    *v = v.tanh();
                }
            }
        }
        Ok(activation)
    }

    /// Forward pass keeping every layer's activation, for backprop.
    fn forward_trace(&self, input: &[f64]) -> Vec<Vec<f64>> {
        let last = self.weights.len() - 1;
        let mut activations = Vec::with_capacity(self.weights.len() + 1);
        activations.push(input.to_vec());
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = affine(w, b, activations.last().unwrap());
            if l != last {
                for v in &mut z {
                    *v = v.tanh();
                }
            }
            activations.push(z);
        }
        activations
    }

    /// Gradient of the batch MSE (mean over points, mean over output dims)
    /// with respect to all parameters.
    pub fn backward(&self, inputs: &[&[f64]], targets: &[&[f64]]) -> Result<Gradients> {
        if inputs.is_empty() || inputs.len() != targets.len() {
            return Err(Error::EmptyInput("backward needs aligned batches".into()));
        }
        let out_dim = self.arch.output_dim();
        let scale = 2.0 / (inputs.len() * out_dim) as f64;
        let mut grads = Gradients {
            d_weights: self.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            d_biases: self.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        };
        for (x, y) in inputs.iter().zip(targets) {
            if x.len() != self.arch.input_dim() {
                return Err(Error::DimensionMismatch {
                    expected: self.arch.input_dim(),
                    got: x.len(),
                });
            }
            if y.len() != out_dim {
                return Err(Error::DimensionMismatch {
                    expected: out_dim,
                    got: y.len(),
                });
            }
            let activations = self.forward_trace(x);
            // Output layer is linear, so delta there is the loss derivative.
            let mut delta: Vec<f64> = activations
                .last()
                .unwrap()
                .iter()
                .zip(*y)
                .map(|(p, t)| scale * (p - t))
                .collect();
            for l in (0..self.weights.len()).rev() {
                let prev = &activations[l];
                let (fan_in, fan_out) = self.layer_dims(l);
                let dw = &mut grads.d_weights[l];
                for o in 0..fan_out {
                    let row = o * fan_in;
                    for i in 0..fan_in {
                        dw[row + i] += delta[o] * prev[i];
                    }
                    grads.d_biases[l][o] += delta[o];
                }
                if l > 0 {
                    let w = &self.weights[l];
                    let mut next = vec![0.0; fan_in];
                    for o in 0..fan_out {
                        let row = o * fan_in;
                        for i in 0..fan_in {
                            next[i] += w[row + i] * delta[o];
                        }
                    }
                    // prev holds tanh activations of layer l.
                    for (n, a) in next.iter_mut().zip(prev) {
                        *n *= 1.0 - a * a;
                    }
                    delta = next;
                }
            }
        }
        Ok(grads)
    }

    /// One Adam update with bias correction. Zero gradients leave the
    /// parameters unchanged.
    pub fn adam_step(&mut self, grads: &Gradients) -> Result<()> {
        if grads.d_weights.len() != self.weights.len()
            || grads
                .d_weights
                .iter()
                .zip(&self.weights)
                .any(|(g, w)| g.len() != w.len())
            || grads
                .d_biases
                .iter()
                .zip(&self.biases)
                .any(|(g, b)| g.len() != b.len())
        {
            return Err(Error::InvalidConfig(
                "gradient shapes do not match parameters".into(),
            ));
        }
        self.adam.step += 1;
        let t = self.adam.step as i32;
        let corr1 = 1.0 - ADAM_BETA1.powi(t);
        let corr2 = 1.0 - ADAM_BETA2.powi(t);
        let lr = self.learning_rate;
        for l in 0..self.weights.len() {
            adam_update(
                &mut self.weights[l],
                &grads.d_weights[l],
                &mut self.adam.m_weights[l],
                &mut self.adam.v_weights[l],
                lr,
                corr1,
                corr2,
            );
            adam_update(
                &mut self.biases[l],
                &grads.d_biases[l],
                &mut self.adam.m_biases[l],
                &mut self.adam.v_biases[l],
                lr,
                corr1,
                corr2,
            );
        }
        Ok(())
    }

    /// One pass over `indices` of `data` in shuffled mini-batches. Returns the
    /// subset MSE after the pass. An empty subset is a no-op returning NaN.
    pub fn train_epoch(&mut self, data: &Dataset, indices: &[usize], cfg: &TrainConfig) -> Result<f64> {
        if indices.is_empty() {
            return Ok(f64::NAN);
        }
        let mut order = indices.to_vec();
        shuffle(&mut order, &mut self.rng);
        for batch in order.chunks(cfg.batch_size) {
            let xs: Vec<&[f64]> = batch.iter().map(|&i| data.features[i].as_slice()).collect();
            let ys: Vec<&[f64]> = batch.iter().map(|&i| data.labels[i].as_slice()).collect();
            let grads = self.backward(&xs, &ys)?;
            self.adam_step(&grads)?;
        }
        self.subset_loss(data, indices)
    }

    /// Runs `cfg.epochs` training epochs, returning the final subset loss.
    pub fn train(&mut self, data: &Dataset, indices: &[usize], cfg: &TrainConfig) -> Result<f64> {
        let mut loss = f64::NAN;
        for _ in 0..cfg.epochs {
            loss = self.train_epoch(data, indices, cfg)?;
        }
        Ok(loss)
    }

    /// MSE of this network over a subset of `data`.
    pub fn subset_loss(&self, data: &Dataset, indices: &[usize]) -> Result<f64> {
        let preds: Vec<Vec<f64>> = indices
            .iter()
            .map(|&i| self.forward(&data.features[i]))
            .collect::<Result<_>>()?;
        let targets: Vec<Vec<f64>> = indices.iter().map(|&i| data.labels[i].clone()).collect();
        mse_loss(&preds, &targets)
    }

    /// Squared error of this network on a single point, averaged over output
    /// dims. This is the per-point loss the competition ranks on.
    pub fn point_loss(&self, features: &[f64], labels: &[f64]) -> Result<f64> {
        let pred = self.forward(features)?;
        if pred.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: pred.len(),
                got: labels.len(),
            });
        }
        let sq: f64 = pred.iter().zip(labels).map(|(p, t)| (p - t) * (p - t)).sum();
        Ok(sq / labels.len() as f64)
    }

    fn layer_dims(&self, l: usize) -> (usize, usize) {
        let sizes = self.arch.layer_sizes();
        (sizes[l], sizes[l + 1])
    }

    /// JSON checkpoint: architecture, flat per-layer weights and biases,
    /// learning rate and seed. Optimizer and RNG state are not checkpointed;
    /// restoring yields a fresh-state network with the same parameters.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&NetworkDoc::from(self))?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let doc: NetworkDoc = serde_json::from_str(json)?;
        doc.into_network()
    }

    #[cfg(test)]
    pub(crate) fn set_params_for_test(&mut self, weights: Vec<Vec<f64>>, biases: Vec<Vec<f64>>) {
        self.weights = weights;
        self.biases = biases;
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Vec<f64>] {
        &self.biases
    }
}

/// Serialized form of a [`Network`].
#[derive(Serialize, Deserialize)]
pub struct NetworkDoc {
    pub layer_sizes: Vec<usize>,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    pub learning_rate: f64,
    pub seed: u64,
}

impl From<&Network> for NetworkDoc {
    fn from(net: &Network) -> Self {
        Self {
            layer_sizes: net.arch.layer_sizes().to_vec(),
            weights: net.weights.clone(),
            biases: net.biases.clone(),
            learning_rate: net.learning_rate,
            seed: net.seed,
        }
    }
}

impl NetworkDoc {
    pub fn into_network(self) -> Result<Network> {
        let arch = Architecture::new(self.layer_sizes)?;
        let mut net = Network::init(arch, self.learning_rate, self.seed)?;
        if self.weights.len() != net.weights.len()
            || self
                .weights
                .iter()
                .zip(&net.weights)
                .any(|(a, b)| a.len() != b.len())
            || self
                .biases
                .iter()
                .zip(&net.biases)
                .any(|(a, b)| a.len() != b.len())
        {
            return Err(Error::InvalidArchitecture(
                "checkpoint parameter shapes do not match architecture".into(),
            ));
        }
        net.weights = self.weights;
        net.biases = self.biases;
        Ok(net)
    }
}

impl Serialize for Network {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        NetworkDoc::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for Network {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let doc = NetworkDoc::deserialize(d)?;
        doc.into_network().map_err(serde::de::Error::custom)
    }
}

/// Mean over points of the mean-over-output-dims squared error.
pub fn mse_loss(predictions: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<f64> {
    if predictions.is_empty() || predictions.len() != targets.len() {
        return Err(Error::EmptyInput(
            "mse_loss needs non-empty aligned sequences".into(),
        ));
    }
    let mut total = 0.0;
    for (p, t) in predictions.iter().zip(targets) {
        if p.len() != t.len() || p.is_empty() {
            return Err(Error::DimensionMismatch {
                expected: t.len(),
                got: p.len(),
            });
        }
        let sq: f64 = p.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum();
        total += sq / p.len() as f64;
    }
    Ok(total / predictions.len() as f64)
}

fn affine(w: &[f64], b: &[f64], input: &[f64]) -> Vec<f64> {
    let fan_in = input.len();
    b.iter()
        .enumerate()
        .map(|(o, bias)| {
            let row = o * fan_in;
            let dot: f64 = w[row..row + fan_in]
                .iter()
                .zip(input)
                .map(|(wi, xi)| wi * xi)
                .sum();
            dot + bias
        })
        .collect()
}

fn adam_update(
    params: &mut [f64],
    grads: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    lr: f64,
    corr1: f64,
    corr2: f64,
) {
    for i in 0..params.len() {
        let g = grads[i];
        m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g;
        v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g * g;
        let m_hat = m[i] / corr1;
        let v_hat = v[i] / corr2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
    }
}

/// Fisher-Yates with the network's own RNG.
fn shuffle(order: &mut [usize], rng: &mut ChaCha8Rng) {
    for i in (1..order.len()).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
}
