//! Gated recurrent unit regressor trained by backpropagation through time.
//!
//! Per step: `z = σ(Wz x + Uz h + bz)`, `r = σ(Wr x + Ur h + br)`,
//! `c = tanh(Wh x + Uh (r⊙h) + bh)`, `h' = z⊙h + (1−z)⊙c`. A scalar head
//! `act(w·h_L + b)` reads the top layer's final state.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linear::standardize;

pub const LAYERS_GRID: [usize; 2] = [1, 2];
pub const HIDDEN_UNITS_GRID: [usize; 6] = [2, 4, 8, 16, 32, 64];
pub const DEFAULT_LOOKBACK: usize = 5;
pub const DEFAULT_EPOCHS: usize = 200;
pub const DEFAULT_BATCH_SIZE: usize = 32;
pub const DEFAULT_LEARNING_RATE: f64 = 1e-3;
const INIT_SCALE: f64 = 0.1;
const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Sigmoid,
    Relu,
    Identity,
}

impl Activation {
    pub fn apply(self, a: f64) -> f64 {
        match self {
            Activation::Sigmoid => sigmoid(a),
            Activation::Relu => a.max(0.0),
            Activation::Identity => a,
        }
    }

    fn derivative(self, a: f64) -> f64 {
        match self {
            Activation::Sigmoid => {
                let s = sigmoid(a);
                s * (1.0 - s)
            }
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }

    /// Pre-activation giving output `y`, clamped into the activation's range.
    fn inverse(self, y: f64) -> f64 {
        match self {
            Activation::Sigmoid => {
                let p = y.clamp(1e-6, 1.0 - 1e-6);
                (p / (1.0 - p)).ln()
            }
            Activation::Relu | Activation::Identity => y,
        }
    }
}

fn sigmoid(a: f64) -> f64 {
    1.0 / (1.0 + (-a).exp())
}

#[derive(Debug, Clone, PartialEq)]
pub struct GruLayer {
    pub w_z: Array2<f64>,
    pub u_z: Array2<f64>,
    pub b_z: Array1<f64>,
    pub w_r: Array2<f64>,
    pub u_r: Array2<f64>,
    pub b_r: Array1<f64>,
    pub w_h: Array2<f64>,
    pub u_h: Array2<f64>,
    pub b_h: Array1<f64>,
}

const LAYER_TENSORS: [&str; 9] = ["w_z", "u_z", "b_z", "w_r", "u_r", "b_r", "w_h", "u_h", "b_h"];

impl GruLayer {
    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        let w = || Array2::zeros((hidden, input_dim));
        let u = || Array2::zeros((hidden, hidden));
        let b = || Array1::zeros(hidden);
        Self {
            w_z: w(),
            u_z: u(),
            b_z: b(),
            w_r: w(),
            u_r: u(),
            b_r: b(),
            w_h: w(),
            u_h: u(),
            b_h: b(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w_z.ncols()
    }

    pub fn hidden(&self) -> usize {
        self.w_z.nrows()
    }

    fn tensors(&self) -> [(&'static str, Vec<usize>, &[f64]); 9] {
        fn m(a: &Array2<f64>) -> (Vec<usize>, &[f64]) {
            (a.shape().to_vec(), a.as_slice().expect("standard layout"))
        }
        fn v(a: &Array1<f64>) -> (Vec<usize>, &[f64]) {
            (a.shape().to_vec(), a.as_slice().expect("standard layout"))
        }
        let parts = [
            m(&self.w_z),
            m(&self.u_z),
            v(&self.b_z),
            m(&self.w_r),
            m(&self.u_r),
            v(&self.b_r),
            m(&self.w_h),
            m(&self.u_h),
            v(&self.b_h),
        ];
        let mut i = 0;
        parts.map(|(shape, data)| {
            let name = LAYER_TENSORS[i];
            i += 1;
            (name, shape, data)
        })
    }

    fn tensors_mut(&mut self) -> [&mut [f64]; 9] {
        [
            self.w_z.as_slice_mut().expect("standard layout"),
            self.u_z.as_slice_mut().expect("standard layout"),
            self.b_z.as_slice_mut().expect("standard layout"),
            self.w_r.as_slice_mut().expect("standard layout"),
            self.u_r.as_slice_mut().expect("standard layout"),
            self.b_r.as_slice_mut().expect("standard layout"),
            self.w_h.as_slice_mut().expect("standard layout"),
            self.u_h.as_slice_mut().expect("standard layout"),
            self.b_h.as_slice_mut().expect("standard layout"),
        ]
    }
}

/// Network weights. Serializes as a flat list of named tensors with shapes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "TensorManifest", try_from = "TensorManifest")]
pub struct GruParams {
    pub layers: Vec<GruLayer>,
    pub head_w: Array1<f64>,
    pub head_b: f64,
    pub activation: Activation,
}

impl GruParams {
    pub fn zeros(input_dim: usize, hidden: usize, n_layers: usize, activation: Activation) -> Self {
        let layers = (0..n_layers)
            .map(|l| GruLayer::zeros(if l == 0 { input_dim } else { hidden }, hidden))
            .collect();
        Self {
            layers,
            head_w: Array1::zeros(hidden),
            head_b: 0.0,
            activation,
        }
    }

    /// Uniform(−0.1, 0.1) weights, zero biases, zero head bias.
    pub fn init(input_dim: usize, hidden: usize, n_layers: usize, activation: Activation, rng: &mut impl Rng) -> Self {
        let mut p = Self::zeros(input_dim, hidden, n_layers, activation);
        for layer in &mut p.layers {
            let [w_z, u_z, _, w_r, u_r, _, w_h, u_h, _] = layer.tensors_mut();
            for t in [w_z, u_z, w_r, u_r, w_h, u_h] {
                t.iter_mut().for_each(|v| *v = rng.random_range(-INIT_SCALE..INIT_SCALE));
            }
        }
        p.head_w.iter_mut().for_each(|v| *v = rng.random_range(-INIT_SCALE..INIT_SCALE));
        p
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn hidden(&self) -> usize {
        self.head_w.len()
    }

    pub fn n_params(&self) -> usize {
        self.to_flat().len()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for layer in &self.layers {
            for (_, _, data) in layer.tensors() {
                out.extend_from_slice(data);
            }
        }
        out.extend(self.head_w.iter());
        out.push(self.head_b);
        out
    }

    pub fn assign_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.n_params(), "flat parameter length");
        let mut pos = 0;
        for layer in &mut self.layers {
            for t in layer.tensors_mut() {
                t.copy_from_slice(&flat[pos..pos + t.len()]);
                pos += t.len();
            }
        }
        let h = self.head_w.len();
        self.head_w.assign(&ArrayView1::from(&flat[pos..pos + h]));
        self.head_b = flat[pos + h];
    }

    fn check_shapes(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Validation(format!("GRU tensor manifest: {m}")));
        if self.layers.is_empty() {
            return bad("no layers".into());
        }
        let h = self.head_w.len();
        for (l, layer) in self.layers.iter().enumerate() {
            let i = if l == 0 { layer.input_dim() } else { h };
            for (name, shape, _) in layer.tensors() {
                let want = match name.as_bytes()[0] {
                    b'w' => vec![h, i],
                    b'u' => vec![h, h],
                    _ => vec![h],
                };
                if shape != want {
                    return bad(format!("layer{l}.{name} has shape {shape:?}, expected {want:?}"));
                }
            }
        }
        if self.to_flat().iter().any(|v| !v.is_finite()) {
            return bad("non-finite entry".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TensorManifest {
    pub activation: Activation,
    pub n_layers: usize,
    pub input_dim: usize,
    pub hidden_units: usize,
    pub tensors: Vec<NamedTensor>,
}

impl From<GruParams> for TensorManifest {
    fn from(p: GruParams) -> Self {
        let mut tensors = Vec::new();
        for (l, layer) in p.layers.iter().enumerate() {
            for (name, shape, data) in layer.tensors() {
                tensors.push(NamedTensor {
                    name: format!("layer{l}.{name}"),
                    shape,
                    data: data.to_vec(),
                });
            }
        }
        tensors.push(NamedTensor {
            name: "head.w".into(),
            shape: vec![p.hidden()],
            data: p.head_w.to_vec(),
        });
        tensors.push(NamedTensor {
            name: "head.b".into(),
            shape: vec![],
            data: vec![p.head_b],
        });
        TensorManifest {
            activation: p.activation,
            n_layers: p.layers.len(),
            input_dim: p.input_dim(),
            hidden_units: p.hidden(),
            tensors,
        }
    }
}

impl TryFrom<TensorManifest> for GruParams {
    type Error = Error;

    fn try_from(m: TensorManifest) -> Result<Self> {
        let mut p = GruParams::zeros(m.input_dim, m.hidden_units, m.n_layers, m.activation);
        let expected: Vec<String> = TensorManifest::from(p.clone()).tensors.into_iter().map(|t| t.name).collect();
        let got: Vec<&str> = m.tensors.iter().map(|t| t.name.as_str()).collect();
        if got != expected {
            return Err(Error::Validation(format!(
                "GRU tensor manifest names {got:?} do not match expected {expected:?}"
            )));
        }
        let flat: Vec<f64> = m.tensors.iter().flat_map(|t| t.data.iter().copied()).collect();
        let want = p.n_params();
        if flat.len() != want {
            return Err(Error::Dimension {
                expected: want,
                got: flat.len(),
            });
        }
        p.assign_flat(&flat);
        p.check_shapes()?;
        Ok(p)
    }
}

/// Per-step quantities kept for the backward pass.
#[derive(Debug, Clone)]
struct StepCache {
    x: Array1<f64>,
    h_prev: Array1<f64>,
    z: Array1<f64>,
    r: Array1<f64>,
    c: Array1<f64>,
}

#[derive(Debug, Clone)]
pub struct ForwardCache {
    steps: Vec<Vec<StepCache>>,
    final_hidden: Array1<f64>,
    pre_activation: f64,
}

impl ForwardCache {
    /// Hidden states per layer and step (after each update).
    pub fn hidden_states(&self) -> impl Iterator<Item = Array1<f64>> + '_ {
        self.steps.iter().flat_map(|layer| {
            layer.iter().map(|s| &s.z * &s.h_prev + &(1.0 - &s.z) * &s.c)
        })
    }
}

fn layer_step(layer: &GruLayer, x: &Array1<f64>, h: &Array1<f64>) -> StepCache {
    let z = (layer.w_z.dot(x) + layer.u_z.dot(h) + &layer.b_z).mapv(sigmoid);
    let r = (layer.w_r.dot(x) + layer.u_r.dot(h) + &layer.b_r).mapv(sigmoid);
    let c = (layer.w_h.dot(x) + layer.u_h.dot(&(&r * h)) + &layer.b_h).mapv(f64::tanh);
    StepCache {
        x: x.clone(),
        h_prev: h.clone(),
        z,
        r,
        c,
    }
}

/// Runs one sequence (rows are time steps, oldest first) from zero state.
pub fn gru_forward(params: &GruParams, sequence: ArrayView2<f64>) -> Result<(f64, ForwardCache)> {
    if sequence.ncols() != params.input_dim() {
        return Err(Error::Dimension {
            expected: params.input_dim(),
            got: sequence.ncols(),
        });
    }
    if sequence.nrows() == 0 {
        return Err(Error::InsufficientData("empty GRU input sequence".into()));
    }
    let hidden = params.hidden();
    let mut inputs: Vec<Array1<f64>> = sequence.rows().into_iter().map(|r| r.to_owned()).collect();
    let mut steps = Vec::with_capacity(params.layers.len());
    for layer in &params.layers {
        let mut h = Array1::zeros(hidden);
        let mut cache = Vec::with_capacity(inputs.len());
        let mut outputs = Vec::with_capacity(inputs.len());
        for x in &inputs {
            let step = layer_step(layer, x, &h);
            h = &step.z * &step.h_prev + &(1.0 - &step.z) * &step.c;
            outputs.push(h.clone());
            cache.push(step);
        }
        steps.push(cache);
        inputs = outputs;
    }
    let final_hidden = inputs.pop().expect("nonempty sequence");
    let pre_activation = params.head_w.dot(&final_hidden) + params.head_b;
    let pred = params.activation.apply(pre_activation);
    Ok((
        pred,
        ForwardCache {
            steps,
            final_hidden,
            pre_activation,
        },
    ))
}

/// Accumulates `dLoss/dparams` for one sequence given `dLoss/dprediction`.
fn backward_one(params: &GruParams, cache: &ForwardCache, d_pred: f64, grads: &mut GruParams) {
    let d_a = d_pred * params.activation.derivative(cache.pre_activation);
    grads.head_w.scaled_add(d_a, &cache.final_hidden);
    grads.head_b += d_a;

    let n_steps = cache.steps[0].len();
    let hidden = params.hidden();
    // Gradient flowing into each step's output of the current layer.
    let mut d_out: Vec<Array1<f64>> = vec![Array1::zeros(hidden); n_steps];
    d_out[n_steps - 1].scaled_add(d_a, &params.head_w);

    for l in (0..params.layers.len()).rev() {
        let layer = &params.layers[l];
        let g = &mut grads.layers[l];
        let mut d_in: Vec<Array1<f64>> = vec![Array1::zeros(layer.input_dim()); n_steps];
        let mut d_h = Array1::<f64>::zeros(hidden);
        for t in (0..n_steps).rev() {
            let st = &cache.steps[l][t];
            let dh_new = &d_h + &d_out[t];
            let d_z = &dh_new * &(&st.h_prev - &st.c);
            let da_z = &d_z * &(&st.z * &(1.0 - &st.z));
            let d_c = &dh_new * &(1.0 - &st.z);
            let da_c = &d_c * &(1.0 - &st.c * &st.c);
            let rh = &st.r * &st.h_prev;

            let mut dh_prev = &dh_new * &st.z;
            outer_add(&mut g.w_h, &da_c, &st.x);
            outer_add(&mut g.u_h, &da_c, &rh);
            g.b_h += &da_c;
            let d_rh = layer.u_h.t().dot(&da_c);
            let d_r = &d_rh * &st.h_prev;
            dh_prev += &(&d_rh * &st.r);
            let da_r = &d_r * &(&st.r * &(1.0 - &st.r));

            outer_add(&mut g.w_r, &da_r, &st.x);
            outer_add(&mut g.u_r, &da_r, &st.h_prev);
            g.b_r += &da_r;
            outer_add(&mut g.w_z, &da_z, &st.x);
            outer_add(&mut g.u_z, &da_z, &st.h_prev);
            g.b_z += &da_z;

            dh_prev += &layer.u_r.t().dot(&da_r);
            dh_prev += &layer.u_z.t().dot(&da_z);
            let dx = layer.w_h.t().dot(&da_c) + layer.w_r.t().dot(&da_r) + layer.w_z.t().dot(&da_z);
            d_in[t] = dx;
            d_h = dh_prev;
        }
        d_out = d_in;
    }
}

fn outer_add(m: &mut Array2<f64>, a: &Array1<f64>, b: &Array1<f64>) {
    for (i, &ai) in a.iter().enumerate() {
        if ai != 0.0 {
            m.row_mut(i).scaled_add(ai, b);
        }
    }
}

/// Mean squared error over the batch and its gradient.
pub fn gru_backward(params: &GruParams, sequences: &[ArrayView2<f64>], targets: &[f64]) -> Result<(f64, GruParams)> {
    if sequences.len() != targets.len() || sequences.is_empty() {
        return Err(Error::Validation(format!(
            "batch of {} sequences with {} targets",
            sequences.len(),
            targets.len()
        )));
    }
    let n = sequences.len() as f64;
    let mut grads = GruParams::zeros(params.input_dim(), params.hidden(), params.layers.len(), params.activation);
    let mut loss = 0.0;
    for (seq, &y) in sequences.iter().zip(targets) {
        let (pred, cache) = gru_forward(params, *seq)?;
        let err = pred - y;
        loss += err * err / n;
        backward_one(params, &cache, 2.0 * err / n, &mut grads);
    }
    Ok((loss, grads))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GruHyperparams {
    pub n_layers: usize,
    pub hidden_units: usize,
    pub activation: Activation,
    pub lookback: usize,
    pub epochs: usize,
    /// `None` trains full-batch.
    pub batch_size: Option<usize>,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for GruHyperparams {
    fn default() -> Self {
        Self {
            n_layers: 1,
            hidden_units: 8,
            activation: Activation::Sigmoid,
            lookback: DEFAULT_LOOKBACK,
            epochs: DEFAULT_EPOCHS,
            batch_size: Some(DEFAULT_BATCH_SIZE),
            learning_rate: DEFAULT_LEARNING_RATE,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub losses: Vec<f64>,
    pub final_grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GruModel {
    pub params: GruParams,
    pub lookback: usize,
    pub feature_means: Array1<f64>,
    pub feature_sds: Array1<f64>,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
    lr: f64,
}

impl Adam {
    fn new(n: usize, lr: f64) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            lr,
        }
    }

    fn step(&mut self, theta: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - ADAM_BETA1.powi(self.t);
        let c2 = 1.0 - ADAM_BETA2.powi(self.t);
        for i in 0..theta.len() {
            self.m[i] = ADAM_BETA1 * self.m[i] + (1.0 - ADAM_BETA1) * grad[i];
            self.v[i] = ADAM_BETA2 * self.v[i] + (1.0 - ADAM_BETA2) * grad[i] * grad[i];
            theta[i] -= self.lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + ADAM_EPS);
        }
    }
}

fn validate_hp(hp: &GruHyperparams) -> Result<()> {
    if hp.n_layers == 0 || hp.hidden_units == 0 || hp.lookback == 0 {
        return Err(Error::Config("GRU layers, hidden units and lookback must be positive".into()));
    }
    if hp.batch_size == Some(0) {
        return Err(Error::Config("GRU batch size must be positive".into()));
    }
    if !(hp.learning_rate > 0.0) {
        return Err(Error::Config("GRU learning rate must be positive".into()));
    }
    Ok(())
}

/// Trains on sliding windows of `lookback` rows; window ending at row t
/// predicts `y[t]`.
pub fn fit_gru(x: ArrayView2<f64>, y: ArrayView1<f64>, hp: &GruHyperparams) -> Result<(GruModel, TrainLog)> {
    validate_hp(hp)?;
    if x.nrows() != y.len() {
        return Err(Error::Validation(format!("X has {} rows but y has {}", x.nrows(), y.len())));
    }
    if x.nrows() < hp.lookback {
        return Err(Error::InsufficientData(format!(
            "{} rows cannot fill a lookback of {}",
            x.nrows(),
            hp.lookback
        )));
    }
    let std = standardize(x);
    let z = std.z;
    let ends: Vec<usize> = (hp.lookback - 1..x.nrows()).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
    let mut params = GruParams::init(x.ncols(), hp.hidden_units, hp.n_layers, hp.activation, &mut rng);
    let y_mean = y.sum() / y.len() as f64;
    params.head_b = hp.activation.inverse(y_mean);

    let mut adam = Adam::new(params.n_params(), hp.learning_rate);
    let batch = hp.batch_size.unwrap_or(ends.len()).min(ends.len());
    let mut order = ends.clone();
    let mut losses = Vec::with_capacity(hp.epochs);
    let mut final_grad_norm = 0.0;
    for epoch in 0..hp.epochs {
        if batch < ends.len() {
            order.shuffle(&mut rng);
        }
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(batch) {
            let seqs: Vec<ArrayView2<f64>> = chunk
                .iter()
                .map(|&t| z.slice(s![t + 1 - hp.lookback..=t, ..]))
                .collect();
            let targets: Vec<f64> = chunk.iter().map(|&t| y[t]).collect();
            let (loss, grads) = gru_backward(&params, &seqs, &targets)?;
            if !loss.is_finite() {
                return Err(Error::Diverged(format!(
                    "GRU loss became {loss} in epoch {}; gradients exploded, try a smaller learning rate",
                    epoch + 1
                )));
            }
            epoch_loss += loss * chunk.len() as f64;
            let g = grads.to_flat();
            final_grad_norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            let mut theta = params.to_flat();
            adam.step(&mut theta, &g);
            params.assign_flat(&theta);
        }
        losses.push(epoch_loss / ends.len() as f64);
    }
    Ok((
        GruModel {
            params,
            lookback: hp.lookback,
            feature_means: Array1::from(std.means),
            feature_sds: Array1::from(std.sds),
        },
        TrainLog {
            losses,
            final_grad_norm,
        },
    ))
}

impl GruModel {
    pub fn n_features(&self) -> usize {
        self.feature_means.len()
    }

    fn standardize_rows(&self, x: ArrayView2<f64>) -> Array2<f64> {
        (&x - &self.feature_means.view().insert_axis(Axis(0))) / &self.feature_sds.view().insert_axis(Axis(0))
    }

    /// Rows of `context` (at most `lookback − 1`, the most recent) followed by
    /// `x`, front-padded by repeating the earliest row so that row `i` of `x`
    /// owns the window `[i, i + lookback)` of the result.
    pub fn stack_history(&self, context: ArrayView2<f64>, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        let p = self.n_features();
        for cols in [x.ncols(), context.ncols()] {
            if cols != p {
                return Err(Error::Dimension { expected: p, got: cols });
            }
        }
        let keep = context.nrows().min(self.lookback - 1);
        let ctx = context.slice(s![context.nrows() - keep.., ..]);
        let pad = self.lookback - 1 - keep;
        let mut full = Array2::zeros((pad + keep + x.nrows(), p));
        if full.nrows() == 0 {
            return Ok(full);
        }
        let first = if keep > 0 { ctx.row(0) } else { x.row(0) };
        for i in 0..pad {
            full.row_mut(i).assign(&first);
        }
        full.slice_mut(s![pad..pad + keep, ..]).assign(&ctx);
        full.slice_mut(s![pad + keep.., ..]).assign(&x);
        Ok(full)
    }

    /// Prediction from exactly `lookback` raw rows, oldest first.
    pub fn predict_window(&self, window: ArrayView2<f64>) -> Result<f64> {
        if window.nrows() != self.lookback {
            return Err(Error::Validation(format!(
                "GRU window has {} rows, lookback is {}",
                window.nrows(),
                self.lookback
            )));
        }
        let z = self.standardize_rows(window);
        Ok(gru_forward(&self.params, z.view())?.0)
    }

    /// One prediction per row of `x`. Rows lacking a full lookback draw on
    /// `context` (rows immediately preceding `x`), then repeat the earliest
    /// available row.
    pub fn predict_with_context(&self, context: ArrayView2<f64>, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        if x.nrows() == 0 {
            return Ok(Array1::zeros(0));
        }
        let full = self.stack_history(context, x)?;
        let z = self.standardize_rows(full.view());
        (0..x.nrows())
            .map(|i| gru_forward(&self.params, z.slice(s![i..i + self.lookback, ..])).map(|(p, _)| p))
            .collect()
    }

    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        self.predict_with_context(Array2::zeros((0, self.n_features())).view(), x)
    }
}

/// Max relative error between analytic and central-difference gradients.
/// Relative error is `|a − n| / max(|a|, |n|, 1e-6)`.
pub fn gradient_check(params: &GruParams, sequences: &[ArrayView2<f64>], targets: &[f64], step: f64) -> Result<f64> {
    let (_, grads) = gru_backward(params, sequences, targets)?;
    let analytic = grads.to_flat();
    let theta = params.to_flat();
    let mut probe = params.clone();
    let mut worst: f64 = 0.0;
    let mut loss_at = |theta: &[f64]| -> Result<f64> {
        probe.assign_flat(theta);
        Ok(gru_backward(&probe, sequences, targets)?.0)
    };
    let mut shifted = theta.clone();
    for i in 0..theta.len() {
        shifted[i] = theta[i] + step;
        let up = loss_at(&shifted)?;
        shifted[i] = theta[i] - step;
        let down = loss_at(&shifted)?;
        shifted[i] = theta[i];
        let numeric = (up - down) / (2.0 * step);
        let denom = analytic[i].abs().max(numeric.abs()).max(1e-6);
        worst = worst.max((analytic[i] - numeric).abs() / denom);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn random_params(seed: u64, input: usize, hidden: usize, layers: usize, act: Activation) -> GruParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = GruParams::zeros(input, hidden, layers, act);
        let flat: Vec<f64> = (0..p.n_params()).map(|_| rng.random_range(-1.0..1.0)).collect();
        p.assign_flat(&flat);
        p
    }

    #[test]
    fn zero_weights_identity_head_predicts_zero() {
        let p = GruParams::zeros(3, 4, 2, Activation::Identity);
        let seq = array![[1.0, -2.0, 5.0], [0.3, 0.0, 9.0]];
        assert_eq!(gru_forward(&p, seq.view()).unwrap().0, 0.0);
    }

    #[test]
    fn scalar_hand_evaluation() {
        let mut p = GruParams::zeros(1, 1, 1, Activation::Identity);
        let l = &mut p.layers[0];
        l.w_z[[0, 0]] = 0.5;
        l.b_z[0] = 0.1;
        l.w_r[[0, 0]] = -0.3;
        l.w_h[[0, 0]] = 0.8;
        l.b_h[0] = -0.2;
        p.head_w[0] = 2.0;
        p.head_b = 0.25;
        let x: f64 = 1.5;
        let (pred, _) = gru_forward(&p, array![[x]].view()).unwrap();
        // h0 = 0 removes the reset gate and the recurrent terms.
        let z = 1.0 / (1.0 + (-(0.5 * x + 0.1)).exp());
        let c = (0.8 * x - 0.2).tanh();
        let h = (1.0 - z) * c;
        assert!((pred - (2.0 * h + 0.25)).abs() < 1e-15);
    }

    #[test]
    fn zero_recurrent_weights_forget_history_when_update_gate_closed() {
        // With U = 0 and b_z very negative, z ≈ 0 so h' ≈ c(x_t) alone.
        let mut p = random_params(3, 2, 3, 1, Activation::Identity);
        let l = &mut p.layers[0];
        l.u_z.fill(0.0);
        l.u_r.fill(0.0);
        l.u_h.fill(0.0);
        l.w_z.fill(0.0);
        l.b_z.fill(-1e3);
        let long = array![[0.4, -1.0], [2.0, 0.5], [-0.7, 1.1], [0.9, 0.2]];
        let short = long.slice(s![3.., ..]);
        let a = gru_forward(&p, long.view()).unwrap().0;
        let b = gru_forward(&p, short).unwrap().0;
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn hidden_states_bounded() {
        let p = random_params(5, 3, 4, 2, Activation::Relu);
        let seq = Array2::from_shape_fn((6, 3), |(i, j)| (i as f64 - 2.0) * 3.0 + j as f64);
        let (_, cache) = gru_forward(&p, seq.view()).unwrap();
        for h in cache.hidden_states() {
            assert!(h.iter().all(|v| v.abs() < 1.0));
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for (k, act) in [Activation::Identity, Activation::Sigmoid, Activation::Relu].into_iter().enumerate() {
            let p = random_params(k as u64, 2, 2, 1 + k % 2, act);
            let seqs: Vec<Array2<f64>> = (0..3)
                .map(|_| Array2::from_shape_fn((3, 2), |_| rng.random_range(-1.0..1.0)))
                .collect();
            let views: Vec<_> = seqs.iter().map(|s| s.view()).collect();
            let targets: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let err = gradient_check(&p, &views, &targets, 1e-5).unwrap();
            assert!(err < 1e-4, "{act:?}: {err}");
        }
    }

    #[test]
    fn zero_loss_batch_has_zero_gradient() {
        let p = random_params(2, 2, 2, 2, Activation::Identity);
        let seq = array![[0.1, 0.2], [0.3, -0.4]];
        let pred = gru_forward(&p, seq.view()).unwrap().0;
        let (loss, g) = gru_backward(&p, &[seq.view()], &[pred]).unwrap();
        assert_eq!(loss, 0.0);
        assert!(g.to_flat().iter().all(|v| *v == 0.0));
        let single = random_params(2, 2, 2, 1, Activation::Identity);
        let (_, g1) = gru_backward(&single, &[seq.view()], &[1.0]).unwrap();
        assert_eq!(g1.layers.len(), 1);
    }

    #[test]
    fn dimension_mismatch() {
        let p = GruParams::zeros(3, 2, 1, Activation::Identity);
        assert!(matches!(
            gru_forward(&p, array![[1.0, 2.0]].view()),
            Err(Error::Dimension { expected: 3, got: 2 })
        ));
    }

    #[test]
    fn manifest_round_trip() {
        let p = random_params(9, 3, 2, 2, Activation::Sigmoid);
        let json = serde_json::to_value(&p).unwrap();
        assert_eq!(json["tensors"][0]["name"], "layer0.w_z");
        assert_eq!(json["tensors"][0]["shape"], serde_json::json!([2, 3]));
        assert_eq!(json["tensors"][9]["shape"], serde_json::json!([2, 2]));
        let back: GruParams = serde_json::from_value(json.clone()).unwrap();
        assert_eq!(back, p);
        let mut broken = json;
        broken["tensors"][0]["data"] = serde_json::json!([1.0]);
        assert!(serde_json::from_value::<GruParams>(broken).is_err());
    }

    fn linear_data(n: usize) -> (Array2<f64>, Array1<f64>) {
        let x = Array2::from_shape_fn((n, 1), |(i, _)| ((i * 7) % 23) as f64 / 23.0);
        let y = x.column(0).to_owned();
        (x, y)
    }

    #[test]
    fn constant_target_converges() {
        let (x, _) = linear_data(40);
        let y = Array1::from_elem(40, 0.7);
        let hp = GruHyperparams { hidden_units: 2, activation: Activation::Identity, epochs: 60, lookback: 2, ..Default::default() };
        let (m, log) = fit_gru(x.view(), y.view(), &hp).unwrap();
        assert_eq!(log.losses.len(), 60);
        assert!(log.losses[59] < 1e-4);
        assert!((m.params.head_b - 0.7).abs() < 0.05);
    }

    #[test]
    fn learns_identity_target() {
        let (x, y) = linear_data(200);
        let hp = GruHyperparams {
            hidden_units: 4,
            activation: Activation::Identity,
            lookback: 3,
            learning_rate: 1e-2,
            ..Default::default()
        };
        let (m, log) = fit_gru(x.view(), y.view(), &hp).unwrap();
        assert_eq!(log.losses.len(), DEFAULT_EPOCHS);
        let pred = m.predict(x.view()).unwrap();
        let rmse = ((&pred - &y).mapv(|e| e * e).mean().unwrap()).sqrt();
        let nrmse = rmse / y.mapv(f64::abs).mean().unwrap();
        assert!(nrmse < 0.1, "{nrmse}");
    }

    #[test]
    fn training_is_deterministic() {
        let (x, y) = linear_data(50);
        let hp = GruHyperparams { epochs: 5, ..Default::default() };
        let a = fit_gru(x.view(), y.view(), &hp).unwrap();
        let b = fit_gru(x.view(), y.view(), &hp).unwrap();
        assert_eq!(a.1, b.1);
        assert_eq!(a.0, b.0);
    }

    #[test]
    fn exploding_learning_rate_reports_divergence() {
        let (x, _) = linear_data(40);
        let y = x.column(0).mapv(|v| v * 1e200);
        let hp = GruHyperparams { epochs: 3, activation: Activation::Identity, ..Default::default() };
        assert!(matches!(fit_gru(x.view(), y.view(), &hp), Err(Error::Diverged(_))));
    }

    #[test]
    fn context_supplies_history() {
        let (x, y) = linear_data(30);
        let hp = GruHyperparams { epochs: 2, lookback: 4, ..Default::default() };
        let (m, _) = fit_gru(x.view(), y.view(), &hp).unwrap();
        let all = m.predict(x.view()).unwrap();
        let tail = m.predict_with_context(x.slice(s![..20, ..]), x.slice(s![20.., ..])).unwrap();
        for i in 0..10 {
            assert_eq!(tail[i], all[20 + i]);
        }
    }
}
