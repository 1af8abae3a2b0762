//! Supervised classifiers that map a feature image to a symbol label: a
//! three-layer sigmoid network and a seven-layer convolutional network,
//! both trained by plain mini-batch gradient descent on cross-entropy.

use ndarray::{s, Array1, Array2, Array3, ArrayView1, ArrayView2, ArrayView3, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dbn::{FeatureImage, DBN_OUTPUT, IMAGE_SIDE};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::seed::derive_seed;

/// Probability clamp used by the cross-entropy loss.
pub const PROB_EPS: f64 = 1e-12;

/// Init gain for the convolutional network's sigmoid layers.
pub const CONV_INIT_GAIN: f64 = 4.0;

/// Hidden widths of the dense classifier.
pub const DENSE_HIDDEN: [usize; 2] = [300, 50];

/// Class probabilities and the decided label.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction<T> {
    pub class_probs: Vec<T>,
    pub label: usize,
}

impl<T: Scalar> Prediction<T> {
    pub fn from_probs(class_probs: Vec<T>) -> Self {
        let label = predict_label(&class_probs);
        Self { class_probs, label }
    }
}

/// Index of the largest value; ties resolve to the lowest index.
pub fn predict_label<T: Scalar>(probs: &[T]) -> usize {
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate().skip(1) {
        if p > probs[best] {
            best = i;
        }
    }
    best
}

/// Max-shifted softmax.
pub fn softmax<T: Scalar>(logits: ArrayView1<T>) -> Result<Array1<T>> {
    if logits.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical("non-finite logit".into()));
    }
    let mut z = logits.to_owned().insert_axis(Axis(0));
    softmax_rows(&mut z);
    Ok(z.remove_axis(Axis(0)))
}

fn softmax_rows<T: Scalar>(z: &mut Array2<T>) {
    for mut row in z.rows_mut() {
        let max = row.fold(T::neg_infinity(), |m, &x| m.max(x));
        row.mapv_inplace(|x| (x - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|x| x / sum);
    }
}

/// −Σ y·ln ŷ with ŷ floored at ε. For two classes this is the
/// binary cross-entropy −[y ln ŷ + (1−y) ln(1−ŷ)].
pub fn cross_entropy<T: Scalar>(y_true: ArrayView1<T>, y_pred: ArrayView1<T>) -> Result<T> {
    if y_true.len() != y_pred.len() {
        return Err(Error::dim("cross-entropy inputs", y_true.len(), y_pred.len()));
    }
    let tol = T::of(1e-9);
    let valid = |v: &ArrayView1<T>| {
        v.iter().all(|&p| p.is_finite() && p >= -tol && p <= T::one() + tol)
            && (v.sum() - T::one()).abs() <= T::of(1e-6)
    };
    if !valid(&y_true) || !valid(&y_pred) {
        return Err(Error::InvalidInput("cross-entropy needs probability vectors".into()));
    }
    let eps = T::of(PROB_EPS);
    let loss = y_true
        .iter()
        .zip(&y_pred)
        .filter(|(y, _)| **y > T::zero())
        .map(|(&y, &p)| -y * p.max(eps).ln())
        .sum::<T>();
    Ok(loss.max(T::zero()))
}

/// Batch-averaged cross-entropy of integer labels against row probabilities.
pub fn mean_cross_entropy<T: Scalar>(labels: &[usize], probs: ArrayView2<T>) -> T {
    let eps = T::of(PROB_EPS);
    let total: T = labels
        .iter()
        .zip(probs.rows())
        .map(|(&y, row)| -row[y].max(eps).ln())
        .sum();
    total / T::of(labels.len().max(1) as f64)
}

fn glorot<T: Scalar>(shape: (usize, usize), fan_in: usize, fan_out: usize, gain: f64, seed: u64) -> Array2<T> {
    let std = gain * (2.0 / (fan_in + fan_out) as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_simple_fn(shape, || {
        let z: f64 = StandardNormal.sample(&mut rng);
        T::of(std * z)
    })
}

fn sigmoid_grad_in_place<T: Scalar>(grad: &mut Array2<T>, act: &Array2<T>) {
    grad.zip_mut_with(act, |g, &a| *g *= a * (T::one() - a));
}

/// Gradient of mean cross-entropy with respect to softmax logits.
fn softmax_ce_delta<T: Scalar>(probs: &Array2<T>, labels: &[usize]) -> Array2<T> {
    let n = T::of(labels.len() as f64);
    let mut d = probs.clone();
    for (mut row, &y) in d.rows_mut().into_iter().zip(labels) {
        row[y] -= T::one();
    }
    d.mapv_inplace(|x| x / n);
    d
}

/// Fully connected layer z = x·Wᵀ + b with W of shape (out × in).
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer<T> {
    pub weights: Array2<T>,
    pub bias: Array1<T>,
}

impl<T: Scalar> DenseLayer<T> {
    pub fn random(inputs: usize, outputs: usize, seed: u64) -> Self {
        Self::random_with_gain(inputs, outputs, 1.0, seed)
    }

    /// Normal init with std `gain·√(2/(in+out))`.
    pub fn random_with_gain(inputs: usize, outputs: usize, gain: f64, seed: u64) -> Self {
        Self {
            weights: glorot((outputs, inputs), inputs, outputs, gain, seed),
            bias: Array1::zeros(outputs),
        }
    }

    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weights: Array2::zeros((outputs, inputs)),
            bias: Array1::zeros(outputs),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weights.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weights.nrows()
    }

    fn affine(&self, x: ArrayView2<T>) -> Array2<T> {
        x.dot(&self.weights.t()) + &self.bias
    }
}

/// Runs a sigmoid-hidden, softmax-output dense stack on a batch, keeping the
/// activation of every layer (input first, probabilities last).
fn dense_stack_forward<T: Scalar>(layers: &[DenseLayer<T>], x: Array2<T>) -> Vec<Array2<T>> {
    let mut acts = vec![x];
    for (i, layer) in layers.iter().enumerate() {
        let mut z = layer.affine(acts[i].view());
        if i + 1 == layers.len() {
            softmax_rows(&mut z);
        } else {
            z.mapv_inplace(T::sigmoid);
        }
        acts.push(z);
    }
    acts
}

/// Backpropagates a logit delta through the stack; returns the layer
/// gradients and the gradient with respect to the stack input.
fn dense_stack_backward<T: Scalar>(
    layers: &[DenseLayer<T>],
    acts: &[Array2<T>],
    mut delta: Array2<T>,
) -> (Vec<DenseLayer<T>>, Array2<T>) {
    let mut grads = Vec::with_capacity(layers.len());
    for i in (0..layers.len()).rev() {
        grads.push(DenseLayer {
            weights: delta.t().dot(&acts[i]),
            bias: delta.sum_axis(Axis(0)),
        });
        let mut prev = delta.dot(&layers[i].weights);
        if i > 0 {
            sigmoid_grad_in_place(&mut prev, &acts[i]);
        }
        delta = prev;
    }
    grads.reverse();
    (grads, delta)
}

/// Common interface of both classifiers, used by the shared training loop
/// and by gradient audits.
pub trait Classifier<T: Scalar>: Clone {
    fn input_dim(&self) -> usize;

    fn num_classes(&self) -> usize;

    /// Class probabilities, one row per input row.
    fn probabilities(&self, inputs: ArrayView2<T>) -> Result<Array2<T>>;

    /// Mean cross-entropy of the batch and its gradient, returned as a
    /// network of the same shape whose parameters hold the derivatives.
    fn loss_and_gradient(&self, inputs: ArrayView2<T>, labels: &[usize]) -> Result<(T, Self)>;

    /// Every trainable array, in a fixed order.
    fn param_slices(&self) -> Vec<&[T]>;

    fn param_slices_mut(&mut self) -> Vec<&mut [T]>;

    fn num_params(&self) -> usize {
        self.param_slices().iter().map(|s| s.len()).sum()
    }

    fn flat_params(&self) -> Vec<T> {
        self.param_slices().concat()
    }

    fn set_flat_params(&mut self, flat: &[T]) -> Result<()> {
        let total = self.num_params();
        if flat.len() != total {
            return Err(Error::dim("flat parameter vector", total, flat.len()));
        }
        let mut offset = 0;
        for p in self.param_slices_mut() {
            p.copy_from_slice(&flat[offset..offset + p.len()]);
            offset += p.len();
        }
        Ok(())
    }

    /// θ ← θ − lr·g.
    fn descend(&mut self, grad: &Self, lr: T) {
        let grads = grad.param_slices();
        for (p, g) in self.param_slices_mut().into_iter().zip(grads) {
            p.iter_mut().zip(g).for_each(|(p, &g)| *p -= lr * g);
        }
    }

    fn predict(&self, img: &FeatureImage<T>) -> Result<Prediction<T>> {
        let x = img.flat().insert_axis(Axis(0));
        let probs = self.probabilities(x)?;
        Ok(Prediction::from_probs(probs.row(0).to_vec()))
    }

    fn predict_labels(&self, inputs: ArrayView2<T>) -> Result<Vec<usize>> {
        let probs = self.probabilities(inputs)?;
        Ok(probs
            .rows()
            .into_iter()
            .map(|r| predict_label(r.as_slice().expect("row-major probabilities")))
            .collect())
    }

    /// Mean cross-entropy over a data set, evaluated in chunks.
    fn mean_loss(&self, inputs: ArrayView2<T>, labels: &[usize]) -> Result<T> {
        let mut total = T::zero();
        for (x, y) in inputs.axis_chunks_iter(Axis(0), 256).zip(labels.chunks(256)) {
            total += mean_cross_entropy(y, self.probabilities(x)?.view()) * T::of(y.len() as f64);
        }
        Ok(total / T::of(labels.len().max(1) as f64))
    }
}

fn check_batch<T>(inputs: &ArrayView2<T>, labels: &[usize], width: usize, classes: usize) -> Result<()> {
    if inputs.ncols() != width {
        return Err(Error::dim("classifier input width", width, inputs.ncols()));
    }
    if inputs.nrows() != labels.len() {
        return Err(Error::dim("labels per batch", inputs.nrows(), labels.len()));
    }
    if let Some(&y) = labels.iter().find(|&&y| y >= classes) {
        return Err(Error::InvalidInput(format!("label {y} outside {classes} classes")));
    }
    Ok(())
}

/// Sigmoid multilayer perceptron with a softmax output.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseNet<T> {
    pub layers: Vec<DenseLayer<T>>,
}

impl<T: Scalar> DenseNet<T> {
    /// Layers for widths such as `[784, 300, 50, M]`.
    pub fn new(widths: &[usize], seed: u64) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::Config(format!("bad dense widths {widths:?}")));
        }
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| DenseLayer::random(w[0], w[1], derive_seed(seed, i as u64)))
            .collect();
        Ok(Self { layers })
    }

    /// The 784 → 300 → 50 → M classifier.
    pub fn standard(num_classes: usize, seed: u64) -> Result<Self> {
        Self::new(&[DBN_OUTPUT, DENSE_HIDDEN[0], DENSE_HIDDEN[1], num_classes], seed)
    }

    pub fn from_layers(layers: Vec<DenseLayer<T>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("a dense net needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].outputs() != pair[1].inputs() {
                return Err(Error::dim("dense layer chain", pair[0].outputs(), pair[1].inputs()));
            }
        }
        for l in &layers {
            if l.bias.len() != l.outputs() {
                return Err(Error::dim("dense bias", l.outputs(), l.bias.len()));
            }
        }
        Ok(Self { layers })
    }

    pub fn widths(&self) -> Vec<usize> {
        std::iter::once(self.layers[0].inputs())
            .chain(self.layers.iter().map(|l| l.outputs()))
            .collect()
    }
}

impl<T: Scalar> Classifier<T> for DenseNet<T> {
    fn input_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    fn num_classes(&self) -> usize {
        self.layers.last().expect("non-empty").outputs()
    }

    fn probabilities(&self, inputs: ArrayView2<T>) -> Result<Array2<T>> {
        if inputs.ncols() != self.input_dim() {
            return Err(Error::dim("dense input width", self.input_dim(), inputs.ncols()));
        }
        Ok(dense_stack_forward(&self.layers, inputs.to_owned())
            .pop()
            .expect("output layer"))
    }

    fn loss_and_gradient(&self, inputs: ArrayView2<T>, labels: &[usize]) -> Result<(T, Self)> {
        check_batch(&inputs, labels, self.input_dim(), self.num_classes())?;
        let acts = dense_stack_forward(&self.layers, inputs.to_owned());
        let probs = acts.last().expect("output layer");
        let loss = mean_cross_entropy(labels, probs.view());
        let (layers, _) = dense_stack_backward(&self.layers, &acts, softmax_ce_delta(probs, labels));
        Ok((loss, Self { layers }))
    }

    fn param_slices(&self) -> Vec<&[T]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weights.as_slice().unwrap(), l.bias.as_slice().unwrap()])
            .collect()
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [T]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weights.as_slice_mut().unwrap(), l.bias.as_slice_mut().unwrap()])
            .collect()
    }
}

/// Forward pass of the dense classifier on one feature image.
pub fn dense_forward<T: Scalar>(net: &DenseNet<T>, img: &FeatureImage<T>) -> Result<Prediction<T>> {
    net.predict(img)
}

/// One convolution stage: `maps` kernels of `kernel × kernel`, sigmoid, and
/// an optional non-overlapping max-pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvStage {
    pub kernel: usize,
    pub maps: usize,
    pub pool: Option<usize>,
}

/// Layer chain of a [`ConvNet`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvGeometry {
    pub input_side: usize,
    /// Input is zero-padded (centered) to this side before the first stage.
    pub padded_side: usize,
    pub stages: Vec<ConvStage>,
    pub dense_widths: Vec<usize>,
    pub num_classes: usize,
}

/// Spatial bookkeeping of one stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct StageDims {
    channels: usize,
    side: usize,
    conv_side: usize,
    out_side: usize,
}

impl ConvGeometry {
    /// 28×28 padded to 32×32, conv 5×5×6, pool 2, conv 5×5×16, pool 2,
    /// conv 5×5×120, dense 84, dense M.
    pub fn standard(num_classes: usize) -> Self {
        Self {
            input_side: IMAGE_SIDE,
            padded_side: 32,
            stages: vec![
                ConvStage { kernel: 5, maps: 6, pool: Some(2) },
                ConvStage { kernel: 5, maps: 16, pool: Some(2) },
                ConvStage { kernel: 5, maps: 120, pool: None },
            ],
            dense_widths: vec![84],
            num_classes,
        }
    }

    fn dims(&self) -> Result<Vec<StageDims>> {
        if self.padded_side < self.input_side || !(self.padded_side - self.input_side).is_multiple_of(2) {
            return Err(Error::Config(format!(
                "cannot center a {0}×{0} input in a {1}×{1} frame",
                self.input_side, self.padded_side
            )));
        }
        if self.stages.is_empty() || self.num_classes < 2 || self.dense_widths.contains(&0) {
            return Err(Error::Config("conv net needs stages, hidden widths > 0 and ≥ 2 classes".into()));
        }
        let mut side = self.padded_side;
        let mut channels = 1;
        let mut out = Vec::new();
        for (i, st) in self.stages.iter().enumerate() {
            if st.kernel == 0 || st.maps == 0 || side < st.kernel {
                return Err(Error::Config(format!(
                    "stage {}: {side}×{side} input cannot take a {k}×{k} kernel",
                    i + 1,
                    k = st.kernel
                )));
            }
            let conv_side = side - st.kernel + 1;
            let out_side = match st.pool {
                Some(p) if p == 0 || !conv_side.is_multiple_of(p) => {
                    return Err(Error::Config(format!(
                        "stage {}: {conv_side}×{conv_side} map not divisible by pool {p}",
                        i + 1
                    )))
                }
                Some(p) => conv_side / p,
                None => conv_side,
            };
            out.push(StageDims { channels, side, conv_side, out_side });
            side = out_side;
            channels = st.maps;
        }
        Ok(out)
    }

    fn flat_features(&self) -> Result<usize> {
        let dims = self.dims()?;
        let last = dims.last().expect("stages");
        Ok(self.stages.last().expect("stages").maps * last.out_side * last.out_side)
    }
}

/// Convolution kernels stored as (maps × channels·k·k), rows in
/// (channel, ky, kx) order.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer<T> {
    pub kernels: Array2<T>,
    pub bias: Array1<T>,
    pub kernel: usize,
}

impl<T: Scalar> ConvLayer<T> {
    pub fn random(channels: usize, maps: usize, kernel: usize, seed: u64) -> Self {
        let k2 = kernel * kernel;
        Self {
            kernels: glorot((maps, channels * k2), channels * k2, maps * k2, CONV_INIT_GAIN, seed),
            bias: Array1::zeros(maps),
            kernel,
        }
    }

    pub fn channels(&self) -> usize {
        self.kernels.ncols() / (self.kernel * self.kernel)
    }

    pub fn maps(&self) -> usize {
        self.kernels.nrows()
    }

    /// Valid cross-correlation of one (C × H × W) input, before activation.
    pub fn correlate(&self, input: ArrayView3<T>) -> Result<Array3<T>> {
        let (c, h, w) = input.dim();
        if c != self.channels() {
            return Err(Error::dim("conv input channels", self.channels(), c));
        }
        if h != w || h < self.kernel {
            return Err(Error::InvalidInput(format!(
                "conv input must be square and at least {0}×{0}",
                self.kernel
            )));
        }
        let flat = input
            .to_owned()
            .into_shape_with_order((c, h * w))
            .expect("contiguous");
        let cols = im2col(flat.view(), 1, h, self.kernel);
        let out_side = h - self.kernel + 1;
        let z = self.kernels.dot(&cols) + self.bias.view().insert_axis(Axis(1));
        Ok(z.into_shape_with_order((self.maps(), out_side, out_side))
            .expect("maps × side × side"))
    }
}

/// Unfolds patches: input is (C, n·side²) with samples contiguous; output is
/// (C·k·k, n·out²).
fn im2col<T: Scalar>(input: ArrayView2<T>, n: usize, side: usize, k: usize) -> Array2<T> {
    let c = input.nrows();
    let out = side - k + 1;
    let mut cols = Array2::zeros((c * k * k, n * out * out));
    for ch in 0..c {
        let src = input.row(ch);
        for ky in 0..k {
            for kx in 0..k {
                let mut dst = cols.row_mut(ch * k * k + ky * k + kx);
                for s in 0..n {
                    let base = s * side * side;
                    let obase = s * out * out;
                    for oy in 0..out {
                        let row = base + (oy + ky) * side + kx;
                        let o = obase + oy * out;
                        for ox in 0..out {
                            dst[o + ox] = src[row + ox];
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Folds patch gradients back onto the input grid; inverse layout of
/// [`im2col`].
fn col2im<T: Scalar>(cols: ArrayView2<T>, c: usize, n: usize, side: usize, k: usize) -> Array2<T> {
    let out = side - k + 1;
    let mut grad = Array2::zeros((c, n * side * side));
    for ch in 0..c {
        let mut dst = grad.row_mut(ch);
        for ky in 0..k {
            for kx in 0..k {
                let src = cols.row(ch * k * k + ky * k + kx);
                for s in 0..n {
                    let base = s * side * side;
                    let obase = s * out * out;
                    for oy in 0..out {
                        let row = base + (oy + ky) * side + kx;
                        let o = obase + oy * out;
                        for ox in 0..out {
                            dst[row + ox] += src[o + ox];
                        }
                    }
                }
            }
        }
    }
    grad
}

/// Max over non-overlapping `window × window` blocks of every map in a
/// (C, n·side²) tensor. Returns the pooled tensor and, per output cell, the
/// flat input index of the winner (first maximum in row-major order).
fn pool_forward<T: Scalar>(input: ArrayView2<T>, n: usize, side: usize, window: usize) -> (Array2<T>, Vec<usize>) {
    let c = input.nrows();
    let out = side / window;
    let mut pooled = Array2::zeros((c, n * out * out));
    let mut argmax = vec![0usize; c * n * out * out];
    for ch in 0..c {
        let src = input.row(ch);
        for s in 0..n {
            for oy in 0..out {
                for ox in 0..out {
                    let mut best_idx = s * side * side + oy * window * side + ox * window;
                    for dy in 0..window {
                        for dx in 0..window {
                            let idx = s * side * side + (oy * window + dy) * side + ox * window + dx;
                            if src[idx] > src[best_idx] {
                                best_idx = idx;
                            }
                        }
                    }
                    let o = s * out * out + oy * out + ox;
                    pooled[[ch, o]] = src[best_idx];
                    argmax[ch * n * out * out + o] = best_idx;
                }
            }
        }
    }
    (pooled, argmax)
}

fn pool_backward<T: Scalar>(grad_out: ArrayView2<T>, argmax: &[usize], in_cols: usize) -> Array2<T> {
    let c = grad_out.nrows();
    let per = grad_out.ncols();
    let mut grad = Array2::zeros((c, in_cols));
    for ch in 0..c {
        for o in 0..per {
            grad[[ch, argmax[ch * per + o]]] += grad_out[[ch, o]];
        }
    }
    grad
}

/// Non-overlapping max-pool of a single square map.
pub fn max_pool<T: Scalar>(map: ArrayView2<T>, window: usize) -> Result<Array2<T>> {
    let (h, w) = map.dim();
    if window == 0 || h % window != 0 || w % window != 0 {
        return Err(Error::InvalidInput(format!(
            "{h}×{w} map is not divisible by pooling window {window}"
        )));
    }
    if h != w {
        return Err(Error::InvalidInput("max_pool expects a square map".into()));
    }
    let flat = map.to_owned().into_shape_with_order((1, h * w)).expect("contiguous");
    let (pooled, _) = pool_forward(flat.view(), 1, h, window);
    Ok(pooled
        .into_shape_with_order((h / window, w / window))
        .expect("pooled shape"))
}

/// Routes an upstream gradient through [`max_pool`]: each output cell's
/// gradient lands on the cell that won its window.
pub fn max_pool_backward<T: Scalar>(map: ArrayView2<T>, window: usize, grad_out: ArrayView2<T>) -> Result<Array2<T>> {
    let (h, w) = map.dim();
    max_pool(map, window)?;
    if grad_out.dim() != (h / window, w / window) {
        return Err(Error::dim("pool gradient side", h / window, grad_out.nrows()));
    }
    let flat = map.to_owned().into_shape_with_order((1, h * w)).expect("contiguous");
    let (_, argmax) = pool_forward(flat.view(), 1, h, window);
    let g = grad_out.to_owned().into_shape_with_order((1, grad_out.len())).expect("contiguous");
    Ok(pool_backward(g.view(), &argmax, h * w)
        .into_shape_with_order((h, w))
        .expect("input shape"))
}

/// Convolutional classifier: conv/pool stages with sigmoid activations
/// followed by a dense stack ending in softmax.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvNet<T> {
    pub geometry: ConvGeometry,
    pub convs: Vec<ConvLayer<T>>,
    pub dense: Vec<DenseLayer<T>>,
}

struct StageCache<T> {
    cols: Array2<T>,
    act: Array2<T>,
    argmax: Option<Vec<usize>>,
}

/// Per-stage caches and dense activations of one forward pass.
type ConvTrace<T> = (Vec<StageCache<T>>, Vec<Array2<T>>);

impl<T: Scalar> ConvNet<T> {
    /// Builds a seeded network; rejects any geometry whose layer chain does
    /// not fit together.
    pub fn new(geometry: ConvGeometry, seed: u64) -> Result<Self> {
        let dims = geometry.dims()?;
        let convs = geometry
            .stages
            .iter()
            .zip(&dims)
            .enumerate()
            .map(|(i, (st, d))| ConvLayer::random(d.channels, st.maps, st.kernel, derive_seed(seed, i as u64)))
            .collect();
        let mut widths = vec![geometry.flat_features()?];
        widths.extend(&geometry.dense_widths);
        widths.push(geometry.num_classes);
        let dense = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| DenseLayer::random_with_gain(w[0], w[1], CONV_INIT_GAIN, derive_seed(seed, 1000 + i as u64)))
            .collect();
        Ok(Self { geometry, convs, dense })
    }

    pub fn standard(num_classes: usize, seed: u64) -> Result<Self> {
        Self::new(ConvGeometry::standard(num_classes), seed)
    }

    /// Assembles a network from explicit parameters, checking every shape
    /// against the geometry.
    pub fn from_parts(geometry: ConvGeometry, convs: Vec<ConvLayer<T>>, dense: Vec<DenseLayer<T>>) -> Result<Self> {
        let reference = Self::new(geometry.clone(), 0)?;
        if convs.len() != reference.convs.len() || dense.len() != reference.dense.len() {
            return Err(Error::Malformed("conv net layer count does not match geometry".into()));
        }
        for (a, b) in convs.iter().zip(&reference.convs) {
            if a.kernels.dim() != b.kernels.dim() || a.bias.len() != b.bias.len() || a.kernel != b.kernel {
                return Err(Error::Malformed("conv layer shape does not match geometry".into()));
            }
        }
        for (a, b) in dense.iter().zip(&reference.dense) {
            if a.weights.dim() != b.weights.dim() || a.bias.len() != b.bias.len() {
                return Err(Error::Malformed("dense layer shape does not match geometry".into()));
            }
        }
        Ok(Self { geometry, convs, dense })
    }

    /// Zero-pads a batch of flattened square images to (1, n·padded²).
    fn pad(&self, inputs: ArrayView2<T>) -> Array2<T> {
        let (s_in, s_pad) = (self.geometry.input_side, self.geometry.padded_side);
        let off = (s_pad - s_in) / 2;
        let n = inputs.nrows();
        let mut out = Array2::zeros((1, n * s_pad * s_pad));
        for (s, img) in inputs.rows().into_iter().enumerate() {
            for y in 0..s_in {
                let dst = s * s_pad * s_pad + (y + off) * s_pad + off;
                out.slice_mut(s![0, dst..dst + s_in]).assign(&img.slice(s![y * s_in..(y + 1) * s_in]));
            }
        }
        out
    }

    fn forward_cached(&self, inputs: ArrayView2<T>) -> Result<ConvTrace<T>> {
        let side_in = self.geometry.input_side;
        if inputs.ncols() != side_in * side_in {
            return Err(Error::dim("conv input width", side_in * side_in, inputs.ncols()));
        }
        let n = inputs.nrows();
        let dims = self.geometry.dims()?;
        let mut x = self.pad(inputs);
        let mut caches = Vec::with_capacity(self.convs.len());
        for ((layer, st), d) in self.convs.iter().zip(&self.geometry.stages).zip(&dims) {
            let cols = im2col(x.view(), n, d.side, st.kernel);
            let mut act = layer.kernels.dot(&cols) + layer.bias.view().insert_axis(Axis(1));
            act.mapv_inplace(T::sigmoid);
            let (next, argmax) = match st.pool {
                Some(p) => {
                    let (pooled, idx) = pool_forward(act.view(), n, d.conv_side, p);
                    (pooled, Some(idx))
                }
                None => (act.clone(), None),
            };
            caches.push(StageCache { cols, act, argmax });
            x = next;
        }
        // (maps, n·s²) → (n, maps·s²)
        let last = dims.last().expect("stages");
        let per = last.out_side * last.out_side;
        let maps = x.nrows();
        let feats = Array2::from_shape_fn((n, maps * per), |(s, f)| x[[f / per, s * per + f % per]]);
        let acts = dense_stack_forward(&self.dense, feats);
        Ok((caches, acts))
    }
}

impl<T: Scalar> Classifier<T> for ConvNet<T> {
    fn input_dim(&self) -> usize {
        self.geometry.input_side * self.geometry.input_side
    }

    fn num_classes(&self) -> usize {
        self.geometry.num_classes
    }

    fn probabilities(&self, inputs: ArrayView2<T>) -> Result<Array2<T>> {
        let (_, mut acts) = self.forward_cached(inputs)?;
        Ok(acts.pop().expect("output layer"))
    }

    fn loss_and_gradient(&self, inputs: ArrayView2<T>, labels: &[usize]) -> Result<(T, Self)> {
        check_batch(&inputs, labels, self.input_dim(), self.num_classes())?;
        let n = inputs.nrows();
        let dims = self.geometry.dims()?;
        let (caches, acts) = self.forward_cached(inputs)?;
        let probs = acts.last().expect("output layer");
        let loss = mean_cross_entropy(labels, probs.view());
        let (dense, dfeat) = dense_stack_backward(&self.dense, &acts, softmax_ce_delta(probs, labels));

        let last = dims.last().expect("stages");
        let per = last.out_side * last.out_side;
        let maps = self.convs.last().expect("stages").maps();
        // (n, maps·s²) → (maps, n·s²); features entered the dense stack
        // through a sigmoid, applied below per stage
        let mut grad_x = Array2::from_shape_fn((maps, n * per), |(m, col)| dfeat[[col / per, m * per + col % per]]);

        let mut convs = Vec::with_capacity(self.convs.len());
        for i in (0..self.convs.len()).rev() {
            let (layer, d, cache) = (&self.convs[i], &dims[i], &caches[i]);
            let mut dz = match &cache.argmax {
                Some(idx) => pool_backward(grad_x.view(), idx, n * d.conv_side * d.conv_side),
                None => grad_x,
            };
            sigmoid_grad_in_place(&mut dz, &cache.act);
            convs.push(ConvLayer {
                kernels: dz.dot(&cache.cols.t()),
                bias: dz.sum_axis(Axis(1)),
                kernel: layer.kernel,
            });
            grad_x = if i > 0 {
                let dcols = layer.kernels.t().dot(&dz);
                col2im(dcols.view(), d.channels, n, d.side, layer.kernel)
            } else {
                Array2::zeros((0, 0))
            };
        }
        convs.reverse();
        Ok((
            loss,
            Self {
                geometry: self.geometry.clone(),
                convs,
                dense,
            },
        ))
    }

    fn param_slices(&self) -> Vec<&[T]> {
        let conv = self
            .convs
            .iter()
            .flat_map(|l| [l.kernels.as_slice().unwrap(), l.bias.as_slice().unwrap()]);
        let dense = self
            .dense
            .iter()
            .flat_map(|l| [l.weights.as_slice().unwrap(), l.bias.as_slice().unwrap()]);
        conv.chain(dense).collect()
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [T]> {
        let conv = self
            .convs
            .iter_mut()
            .flat_map(|l| [l.kernels.as_slice_mut().unwrap(), l.bias.as_slice_mut().unwrap()]);
        let dense = self
            .dense
            .iter_mut()
            .flat_map(|l| [l.weights.as_slice_mut().unwrap(), l.bias.as_slice_mut().unwrap()]);
        conv.chain(dense).collect()
    }
}

/// Forward pass of the convolutional classifier on one feature image.
pub fn conv_forward<T: Scalar>(net: &ConvNet<T>, img: &FeatureImage<T>) -> Result<Prediction<T>> {
    net.predict(img)
}

/// Gradient-descent hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierTrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub rng_seed: u64,
    /// Epochs without validation-loss improvement before stopping.
    pub early_stop_patience: usize,
}

impl Default for ClassifierTrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.5,
            epochs: 40,
            batch_size: 32,
            rng_seed: 0,
            early_stop_patience: 5,
        }
    }
}

impl ClassifierTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.early_stop_patience == 0 {
            return Err(Error::Config("batch_size and early_stop_patience must be positive".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::Config("learning rate must be finite and non-negative".into()));
        }
        Ok(())
    }
}

/// Inputs (one flattened image per row) with their labels.
#[derive(Debug, Clone, Copy)]
pub struct LabeledSet<'a, T> {
    pub inputs: ArrayView2<'a, T>,
    pub labels: &'a [usize],
}

impl<'a, T> LabeledSet<'a, T> {
    pub fn new(inputs: ArrayView2<'a, T>, labels: &'a [usize]) -> Result<Self> {
        if inputs.nrows() != labels.len() {
            return Err(Error::dim("labeled set", inputs.nrows(), labels.len()));
        }
        Ok(Self { inputs, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Per-epoch losses of a training run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    /// Epoch (1-based; 0 = initialization) whose parameters were kept.
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
}

/// Mini-batch gradient descent with early stopping on validation loss. The
/// network ends holding the parameters of the best validation epoch; on
/// divergence it is reset to that checkpoint and an error is returned.
pub fn train_classifier<T: Scalar, C: Classifier<T>>(
    net: &mut C,
    train: LabeledSet<'_, T>,
    val: LabeledSet<'_, T>,
    cfg: &ClassifierTrainConfig,
) -> Result<TrainHistory> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::InvalidInput("training and validation sets must be non-empty".into()));
    }
    check_batch(&train.inputs, train.labels, net.input_dim(), net.num_classes())?;
    check_batch(&val.inputs, val.labels, net.input_dim(), net.num_classes())?;

    let lr = T::of(cfg.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut best = net.clone();
    let mut history = TrainHistory {
        best_val_loss: net.mean_loss(val.inputs, val.labels)?.as_f64(),
        ..TrainHistory::default()
    };
    let mut stale = 0;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let x = train.inputs.select(Axis(0), chunk);
            let y: Vec<usize> = chunk.iter().map(|&i| train.labels[i]).collect();
            let (loss, grad) = net.loss_and_gradient(x.view(), &y)?;
            let finite = loss.is_finite() && grad.param_slices().iter().all(|s| s.iter().all(|g| g.is_finite()));
            if !finite {
                *net = best;
                return Err(Error::Diverged { epoch, batch: b });
            }
            net.descend(&grad, lr);
            if !net.param_slices().iter().all(|s| s.iter().all(|p| p.is_finite())) {
                *net = best;
                return Err(Error::Diverged { epoch, batch: b });
            }
            epoch_loss += loss.as_f64() * chunk.len() as f64;
        }
        let val_loss = net.mean_loss(val.inputs, val.labels)?.as_f64();
        if !val_loss.is_finite() {
            *net = best;
            return Err(Error::Diverged { epoch, batch: order.len().div_ceil(cfg.batch_size) });
        }
        history.train_loss.push(epoch_loss / train.len() as f64);
        history.val_loss.push(val_loss);
        if val_loss < history.best_val_loss {
            history.best_val_loss = val_loss;
            history.best_epoch = epoch;
            best = net.clone();
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.early_stop_patience {
                history.stopped_early = true;
                break;
            }
        }
    }
    *net = best;
    Ok(history)
}

pub fn train_dense<T: Scalar>(
    net: &mut DenseNet<T>,
    train: LabeledSet<'_, T>,
    val: LabeledSet<'_, T>,
    cfg: &ClassifierTrainConfig,
) -> Result<TrainHistory> {
    train_classifier(net, train, val, cfg)
}

pub fn train_conv<T: Scalar>(
    net: &mut ConvNet<T>,
    train: LabeledSet<'_, T>,
    val: LabeledSet<'_, T>,
    cfg: &ClassifierTrainConfig,
) -> Result<TrainHistory> {
    train_classifier(net, train, val, cfg)
}

/// Fraction of rows whose predicted label matches.
pub fn accuracy<T: Scalar, C: Classifier<T>>(net: &C, set: LabeledSet<'_, T>) -> Result<f64> {
    let pred = net.predict_labels(set.inputs)?;
    let hits = pred.iter().zip(set.labels).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / set.len().max(1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array3};
    use proptest::prelude::*;
    use rand::Rng;

    fn random_inputs(n: usize, width: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_simple_fn((n, width), || rng.random_range(0.0..1.0))
    }

    fn zero_image() -> FeatureImage<f64> {
        FeatureImage::from_flat(Array1::from_elem(DBN_OUTPUT, 0.25)).unwrap()
    }

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax(array![0.0, 0.0].view()).unwrap(), array![0.5, 0.5]);
        let p = softmax(array![2f64.ln(), 0.0].view()).unwrap();
        assert!((p[0] - 2.0 / 3.0).abs() < 1e-15 && (p[1] - 1.0 / 3.0).abs() < 1e-15);
        assert!(softmax(array![f64::NAN, 0.0].view()).is_err());
        let big = softmax(array![1000.0f64, 0.0].view()).unwrap();
        assert!(big[0] > 0.999 && big[0].is_finite());
    }

    #[test]
    fn cross_entropy_examples() {
        assert_eq!(cross_entropy(array![0.0, 1.0].view(), array![0.0, 1.0].view()).unwrap(), 0.0);
        let l = cross_entropy(array![0.0, 1.0].view(), array![0.5, 0.5].view()).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(cross_entropy(array![0.0, 1.0].view(), array![0.7, 0.7].view()).is_err());
        assert!(cross_entropy(array![1.0].view(), array![0.5, 0.5].view()).is_err());
    }

    #[test]
    fn softmax_ce_gradient_matches_finite_differences() {
        let z = array![0.3f64, -1.2, 2.0, 0.1];
        let y = array![0.0, 0.0, 1.0, 0.0];
        let p = softmax(z.view()).unwrap();
        let analytic = &p - &y;
        let h = 1e-6;
        for i in 0..4 {
            let mut zp = z.clone();
            zp[i] += h;
            let mut zm = z.clone();
            zm[i] -= h;
            let fd = (cross_entropy(y.view(), softmax(zp.view()).unwrap().view()).unwrap()
                - cross_entropy(y.view(), softmax(zm.view()).unwrap().view()).unwrap())
                / (2.0 * h);
            assert!((fd - analytic[i]).abs() < 1e-8, "{i}: {fd} vs {}", analytic[i]);
        }
    }

    #[test]
    fn argmax_tie_break() {
        assert_eq!(predict_label(&[0.9, 0.1]), 0);
        assert_eq!(predict_label(&[0.5, 0.5]), 0);
        assert_eq!(predict_label(&[0.2, 0.4, 0.4]), 1);
    }

    #[test]
    fn zero_dense_net_is_uniform() {
        let layers = vec![
            DenseLayer::zeros(DBN_OUTPUT, 300),
            DenseLayer::zeros(300, 50),
            DenseLayer::zeros(50, 4),
        ];
        let net = DenseNet::from_layers(layers).unwrap();
        let pred = dense_forward(&net, &zero_image()).unwrap();
        assert_eq!(pred.class_probs, vec![0.25; 4]);
        assert_eq!(pred.label, 0);
    }

    #[test]
    fn output_bias_shift_leaves_probs_unchanged() {
        let mut net = DenseNet::<f64>::standard(3, 1).unwrap();
        let img = FeatureImage::from_flat(random_inputs(1, DBN_OUTPUT, 2).row(0).to_owned()).unwrap();
        let before = dense_forward(&net, &img).unwrap();
        net.layers[2].bias += 7.5;
        let after = dense_forward(&net, &img).unwrap();
        for (a, b) in before.class_probs.iter().zip(&after.class_probs) {
            assert!((a - b).abs() < 1e-12);
        }

        let mut conv = ConvNet::<f64>::standard(3, 1).unwrap();
        let before = conv_forward(&conv, &img).unwrap();
        conv.dense[1].bias += -3.0;
        let after = conv_forward(&conv, &img).unwrap();
        for (a, b) in before.class_probs.iter().zip(&after.class_probs) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn dense_forward_matches_straight_line_evaluation() {
        let net = DenseNet::<f64>::new(&[6, 5, 4, 3], 3).unwrap();
        let x = random_inputs(1, 6, 4);
        let got = net.probabilities(x.view()).unwrap();
        let mut a: Vec<f64> = x.row(0).to_vec();
        for (li, layer) in net.layers.iter().enumerate() {
            let mut z = vec![0.0; layer.outputs()];
            for (j, zj) in z.iter_mut().enumerate() {
                *zj = layer.bias[j];
                for (k, ak) in a.iter().enumerate() {
                    *zj += layer.weights[[j, k]] * ak;
                }
            }
            a = if li + 1 < net.layers.len() {
                z.iter().map(|v| 1.0 / (1.0 + (-v).exp())).collect()
            } else {
                let m = z.iter().cloned().fold(f64::MIN, f64::max);
                let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
                let s: f64 = e.iter().sum();
                e.iter().map(|v| v / s).collect()
            };
        }
        for (g, e) in got.row(0).iter().zip(&a) {
            assert!((g - e).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_conv_net_is_uniform() {
        let mut net = ConvNet::<f64>::standard(2, 5).unwrap();
        for p in net.param_slices_mut() {
            p.fill(0.0);
        }
        let pred = conv_forward(&net, &zero_image()).unwrap();
        assert_eq!(pred.class_probs, vec![0.5, 0.5]);
    }

    #[test]
    fn conv_geometry_checks() {
        let dims = ConvGeometry::standard(2).dims().unwrap();
        let sides: Vec<(usize, usize)> = dims.iter().map(|d| (d.side, d.out_side)).collect();
        assert_eq!(sides, vec![(32, 14), (14, 5), (5, 1)]);

        let mut unpadded = ConvGeometry::standard(2);
        unpadded.padded_side = 28;
        assert!(ConvNet::<f64>::new(unpadded, 0).is_err());

        let mut bad_pool = ConvGeometry::standard(2);
        bad_pool.stages[0].pool = Some(5);
        assert!(ConvNet::<f64>::new(bad_pool, 0).is_err());
    }

    #[test]
    fn correlation_matches_nested_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let img = Array3::from_shape_simple_fn((1, 6, 6), || rng.random_range(-1.0..1.0));
        let layer = ConvLayer::<f64>::random(1, 2, 3, 13);
        let got = layer.correlate(img.view()).unwrap();
        for m in 0..2 {
            for y in 0..4 {
                for x in 0..4 {
                    let mut acc = layer.bias[m];
                    for ky in 0..3 {
                        for kx in 0..3 {
                            acc += layer.kernels[[m, ky * 3 + kx]] * img[[0, y + ky, x + kx]];
                        }
                    }
                    assert!((got[[m, y, x]] - acc).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn pooling_examples() {
        let c = Array2::from_elem((4, 4), 3.0f64);
        assert_eq!(max_pool(c.view(), 2).unwrap(), Array2::from_elem((2, 2), 3.0));
        assert_eq!(max_pool(array![[1.0, 2.0], [3.0, 4.0]].view(), 2).unwrap(), array![[4.0]]);
        assert!(max_pool(Array2::<f64>::zeros((3, 3)).view(), 2).is_err());
        // ties route to the first maximum in row-major order
        let g = max_pool_backward(array![[5.0, 5.0], [5.0, 1.0]].view(), 2, array![[2.0]].view()).unwrap();
        assert_eq!(g, array![[2.0, 0.0], [0.0, 0.0]]);
    }

    #[test]
    fn pooling_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let map = Array2::from_shape_simple_fn((4, 4), || rng.random_range(-1.0..1.0f64));
        let weights = Array2::from_shape_simple_fn((2, 2), || rng.random_range(-1.0..1.0f64));
        let f = |m: &Array2<f64>| (&max_pool(m.view(), 2).unwrap() * &weights).sum();
        let g = max_pool_backward(map.view(), 2, weights.view()).unwrap();
        let h = 1e-6;
        for i in 0..4 {
            for j in 0..4 {
                let mut p = map.clone();
                p[[i, j]] += h;
                let mut m = map.clone();
                m[[i, j]] -= h;
                let fd = (f(&p) - f(&m)) / (2.0 * h);
                assert!((fd - g[[i, j]]).abs() < 1e-8);
            }
        }
    }

    fn gradient_audit<C: Classifier<f64>>(net: &C, x: ArrayView2<f64>, y: &[usize]) -> f64 {
        let (_, grad) = net.loss_and_gradient(x, y).unwrap();
        let g = grad.flat_params();
        let base = net.flat_params();
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        let mut probe = net.clone();
        for i in 0..base.len() {
            let mut p = base.clone();
            p[i] += h;
            probe.set_flat_params(&p).unwrap();
            let lp = probe.mean_loss(x, y).unwrap();
            p[i] -= 2.0 * h;
            probe.set_flat_params(&p).unwrap();
            let lm = probe.mean_loss(x, y).unwrap();
            let fd = (lp - lm) / (2.0 * h);
            let rel = (fd - g[i]).abs() / fd.abs().max(g[i].abs()).max(1e-7);
            worst = worst.max(rel);
        }
        worst
    }

    #[test]
    fn dense_backprop_matches_finite_differences() {
        let net = DenseNet::<f64>::new(&[7, 5, 4, 3], 21).unwrap();
        let x = random_inputs(5, 7, 22);
        let rel = gradient_audit(&net, x.view(), &[0, 2, 1, 1, 2]);
        assert!(rel < 1e-5, "worst relative error {rel}");
    }

    #[test]
    fn conv_backprop_matches_finite_differences() {
        let geometry = ConvGeometry {
            input_side: 8,
            padded_side: 10,
            stages: vec![
                ConvStage { kernel: 3, maps: 2, pool: Some(2) },
                ConvStage { kernel: 3, maps: 2, pool: None },
            ],
            dense_widths: vec![3],
            num_classes: 2,
        };
        let net = ConvNet::<f64>::new(geometry, 5).unwrap();
        let x = random_inputs(3, 64, 6);
        let rel = gradient_audit(&net, x.view(), &[1, 0, 1]);
        assert!(rel < 1e-5, "worst relative error {rel}");
    }

    /// Noisy images whose left or right half is brighter, by label.
    fn toy_set(n: usize, width: usize, seed: u64) -> (Array2<f64>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let side = (width as f64).sqrt() as usize;
        let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
        let x = Array2::from_shape_fn((n, width), |(i, j)| {
            let bump = if (j % side < side / 2) == (labels[i] == 0) { 0.3 } else { 0.0 };
            (rng.random_range(0.0..0.6f64) + bump).min(1.0)
        });
        (x, labels)
    }

    #[test]
    fn zero_learning_rate_leaves_parameters() {
        let (x, y) = toy_set(20, DBN_OUTPUT, 1);
        let set = LabeledSet::new(x.view(), &y).unwrap();
        let cfg = ClassifierTrainConfig {
            learning_rate: 0.0,
            epochs: 3,
            ..ClassifierTrainConfig::default()
        };
        let mut dense = DenseNet::<f64>::standard(2, 1).unwrap();
        let before = dense.clone();
        train_dense(&mut dense, set, set, &cfg).unwrap();
        assert_eq!(dense, before);

        let mut conv = ConvNet::<f64>::standard(2, 1).unwrap();
        let before = conv.clone();
        train_conv(&mut conv, set, set, &cfg).unwrap();
        assert_eq!(conv, before);
    }

    #[test]
    fn dense_overfits_toy_set() {
        let (x, y) = toy_set(20, DBN_OUTPUT, 2);
        let set = LabeledSet::new(x.view(), &y).unwrap();
        let cfg = ClassifierTrainConfig {
            learning_rate: 0.5,
            epochs: 500,
            batch_size: 4,
            rng_seed: 3,
            early_stop_patience: 500,
        };
        let mut net = DenseNet::<f64>::standard(2, 4).unwrap();
        train_dense(&mut net, set, set, &cfg).unwrap();
        assert_eq!(accuracy(&net, set).unwrap(), 1.0);
    }

    #[test]
    fn conv_overfits_toy_set() {
        let (x, y) = toy_set(20, DBN_OUTPUT, 5);
        let set = LabeledSet::new(x.view(), &y).unwrap();
        let cfg = ClassifierTrainConfig {
            learning_rate: 0.5,
            epochs: 500,
            batch_size: 4,
            rng_seed: 3,
            early_stop_patience: 500,
        };
        let mut net = ConvNet::<f64>::standard(2, 4).unwrap();
        train_conv(&mut net, set, set, &cfg).unwrap();
        assert_eq!(accuracy(&net, set).unwrap(), 1.0);
    }

    #[test]
    fn training_is_deterministic() {
        let (x, y) = toy_set(24, 10, 8);
        let set = LabeledSet::new(x.view(), &y).unwrap();
        let cfg = ClassifierTrainConfig {
            epochs: 5,
            batch_size: 5,
            rng_seed: 9,
            ..ClassifierTrainConfig::default()
        };
        let run = || {
            let mut net = DenseNet::<f64>::new(&[10, 6, 2], 1).unwrap();
            let h = train_dense(&mut net, set, set, &cfg).unwrap();
            (net, h)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn divergence_restores_checkpoint() {
        let (x, y) = toy_set(8, 4, 8);
        let cfg = ClassifierTrainConfig {
            learning_rate: 1e300,
            epochs: 5,
            batch_size: 4,
            ..ClassifierTrainConfig::default()
        };
        let x = x.mapv(|v| v as f32);
        let set = LabeledSet::new(x.view(), &y).unwrap();
        let mut net = DenseNet::<f32>::new(&[4, 3, 2], 1).unwrap();
        let init = net.clone();
        let err = train_dense(&mut net, set, set, &cfg).unwrap_err();
        assert!(matches!(err, Error::Diverged { .. }), "{err}");
        assert_eq!(net, init);
    }

    #[test]
    fn label_agrees_with_argmax_of_probs() {
        let net = DenseNet::<f64>::new(&[DBN_OUTPUT, 20, 4], 2).unwrap();
        let x = random_inputs(10, DBN_OUTPUT, 3);
        let probs = net.probabilities(x.view()).unwrap();
        let labels = net.predict_labels(x.view()).unwrap();
        for (row, &l) in probs.rows().into_iter().zip(&labels) {
            let max = row.iter().cloned().fold(f64::MIN, f64::max);
            let first = row.iter().position(|&p| p == max).unwrap();
            assert_eq!(l, first);
        }
    }

    proptest! {
        #[test]
        fn softmax_sums_to_one(z in proptest::collection::vec(-50.0f64..50.0, 1..12), c in -100.0f64..100.0) {
            let p = softmax(Array1::from(z.clone()).view()).unwrap();
            prop_assert!((p.sum() - 1.0).abs() < 1e-9);
            prop_assert!(p.iter().all(|&x| x > 0.0));
            let shifted = softmax(Array1::from(z).mapv(|x| x + c).view()).unwrap();
            for (a, b) in p.iter().zip(&shifted) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn argmax_invariant_under_monotone_maps(z in proptest::collection::vec(-5.0f64..5.0, 2..8)) {
            let l = predict_label(&z);
            let t: Vec<f64> = z.iter().map(|&x| (x * 0.5).exp() + 3.0).collect();
            prop_assert_eq!(predict_label(&t), l);
        }
    }
}
