//! Small fully connected network: rectified (or linear) hidden layers,
//! linear output, MSE loss, Adam updates.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Purpose};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    /// `out × in`.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub layers: Vec<Dense>,
    #[serde(default)]
    pub activation: Activation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Gaussian input noise (std) added per batch; zero for plain regression.
    pub input_noise: f64,
    pub max_restarts: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-3, epochs: 50, batch_size: 64, input_noise: 0.0, max_restarts: 3 }
    }
}

/// Per-layer gradients, same shapes as the network.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub bias: Vec<Array1<f64>>,
}

impl Network {
    /// He-initialized network with sizes `[in, hidden..., out]`.
    pub fn new(sizes: &[usize], activation: Activation, seed: u64) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::InvalidParameter(format!("bad layer sizes {sizes:?}")));
        }
        let mut rng = rng::stream(seed, Purpose::NetworkInit, 0);
        let layers = sizes
            .windows(2)
            .map(|w| {
                let std = (2.0 / w[0] as f64).sqrt();
                let dist = Normal::new(0.0, std).expect("positive std");
                Dense {
                    weights: Array2::from_shape_fn((w[1], w[0]), |_| dist.sample(&mut rng)),
                    bias: Array1::zeros(w[1]),
                }
            })
            .collect();
        Ok(Self { layers, activation })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weights.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").weights.nrows()
    }

    pub fn sizes(&self) -> Vec<usize> {
        std::iter::once(self.input_dim()).chain(self.layers.iter().map(|l| l.weights.nrows())).collect()
    }

    /// Activations of every layer, input first. Rows are samples.
    fn forward_all(&self, x: ArrayView2<'_, f64>) -> Vec<Array2<f64>> {
        let mut acts = vec![x.to_owned()];
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = acts[i].dot(&layer.weights.t()) + &layer.bias;
            if i < last && self.activation == Activation::Relu {
                z.mapv_inplace(|v| v.max(0.0));
            }
            acts.push(z);
        }
        acts
    }

    pub fn forward(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch { expected: self.input_dim(), got: x.ncols() });
        }
        Ok(self.forward_all(x).pop().expect("output layer"))
    }

    /// Mean of squared errors over samples and outputs.
    pub fn loss(&self, x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>) -> f64 {
        let out = self.forward_all(x).pop().expect("output layer");
        (&out - &y).mapv(|v| v * v).mean().unwrap_or(0.0)
    }

    /// Loss and its gradient by backpropagation.
    pub fn gradients(&self, x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>) -> (f64, Gradients) {
        let acts = self.forward_all(x);
        let out = acts.last().expect("output layer");
        let diff = out - &y;
        let count = diff.len() as f64;
        let loss = diff.mapv(|v| v * v).sum() / count;
        let mut delta = diff * (2.0 / count);
        let n = self.layers.len();
        let mut gw = vec![Array2::zeros((0, 0)); n];
        let mut gb = vec![Array1::zeros(0); n];
        for i in (0..n).rev() {
            gw[i] = delta.t().dot(&acts[i]);
            gb[i] = delta.sum_axis(Axis(0));
            if i > 0 {
                let mut back = delta.dot(&self.layers[i].weights);
                if self.activation == Activation::Relu {
                    back.zip_mut_with(&acts[i], |d, &a| {
                        if a <= 0.0 {
                            *d = 0.0;
                        }
                    });
                }
                delta = back;
            }
        }
        (loss, Gradients { weights: gw, bias: gb })
    }
}

struct Adam {
    m: Gradients,
    v: Gradients,
    t: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(net: &Network) -> Self {
        let zeros = Gradients {
            weights: net.layers.iter().map(|l| Array2::zeros(l.weights.dim())).collect(),
            bias: net.layers.iter().map(|l| Array1::zeros(l.bias.len())).collect(),
        };
        Self { m: zeros.clone(), v: zeros, t: 0 }
    }

    fn step(&mut self, net: &mut Network, g: &Gradients, lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        for (i, layer) in net.layers.iter_mut().enumerate() {
            update(&mut layer.weights, &mut self.m.weights[i], &mut self.v.weights[i], &g.weights[i], lr, c1, c2);
            update(&mut layer.bias, &mut self.m.bias[i], &mut self.v.bias[i], &g.bias[i], lr, c1, c2);
        }
    }
}

fn update<D: ndarray::Dimension>(
    p: &mut ndarray::Array<f64, D>,
    m: &mut ndarray::Array<f64, D>,
    v: &mut ndarray::Array<f64, D>,
    g: &ndarray::Array<f64, D>,
    lr: f64,
    c1: f64,
    c2: f64,
) {
    ndarray::Zip::from(p).and(m).and(v).and(g).for_each(|p, m, v, &g| {
        *m = Adam::B1 * *m + (1.0 - Adam::B1) * g;
        *v = Adam::B2 * *v + (1.0 - Adam::B2) * g * g;
        *p -= lr * (*m / c1) / ((*v / c2).sqrt() + Adam::EPS);
    });
}

/// Trains a fresh network of the given sizes. On a non-finite loss the run
/// restarts from the same initialization with half the step size.
pub fn train(
    sizes: &[usize],
    activation: Activation,
    x: ArrayView2<'_, f64>,
    y: ArrayView2<'_, f64>,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<(Network, f64)> {
    if x.nrows() != y.nrows() {
        return Err(Error::LengthMismatch(x.nrows(), y.nrows()));
    }
    if x.nrows() == 0 {
        return Err(Error::TooFewSamples { need: 1, got: 0 });
    }
    let init = Network::new(sizes, activation, seed)?;
    if x.ncols() != init.input_dim() || y.ncols() != init.output_dim() {
        return Err(Error::DimensionMismatch { expected: init.input_dim(), got: x.ncols() });
    }
    let mut lr = cfg.learning_rate;
    for attempt in 0..=cfg.max_restarts {
        if let Some(done) = run_epochs(init.clone(), x, y, cfg, lr, seed, attempt as u64) {
            return Ok(done);
        }
        log::warn!("training diverged; restarting with learning rate {}", lr / 2.0);
        lr /= 2.0;
    }
    Err(Error::NonFiniteLoss { restarts: cfg.max_restarts })
}

fn run_epochs(
    mut net: Network,
    x: ArrayView2<'_, f64>,
    y: ArrayView2<'_, f64>,
    cfg: &TrainConfig,
    lr: f64,
    seed: u64,
    attempt: u64,
) -> Option<(Network, f64)> {
    let n = x.nrows();
    let mut rng = rng::stream(seed, Purpose::NetworkTrain, attempt);
    let noise = Normal::new(0.0, cfg.input_noise.max(0.0)).expect("finite std");
    let mut adam = Adam::new(&net);
    let mut order: Vec<usize> = (0..n).collect();
    let batch = cfg.batch_size.max(1);
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch) {
            let mut xb = x.select(Axis(0), chunk);
            if cfg.input_noise > 0.0 {
                xb.mapv_inplace(|v| v + noise.sample(&mut rng));
            }
            let yb = y.select(Axis(0), chunk);
            let (loss, g) = net.gradients(xb.view(), yb.view());
            if !loss.is_finite() {
                return None;
            }
            adam.step(&mut net, &g, lr);
        }
    }
    let loss = net.loss(x, y);
    loss.is_finite().then_some((net, loss))
}
