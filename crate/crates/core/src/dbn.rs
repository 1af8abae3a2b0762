//! Restricted Boltzmann machines and the deep belief network built by
//! stacking them.
//!
//! An RBM with visible units v, hidden units h, weights W (u_h × u_v),
//! visible bias b and hidden bias c has energy
//!
//! ```text
//! E(v, h) = -hᵀWv - bᵀv - cᵀh
//! ```
//!
//! and joint probability exp(-E)/Z. Layers are trained one at a time with
//! contrastive divergence; the trained stack maps a normalized 120-sample
//! frame to the 784 hidden activations of its last layer, viewed as a
//! 28×28 feature image.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::seed::derive_seed;

/// Frame width accepted by the feature extractor.
pub const DBN_INPUT: usize = 120;
/// Side of the square feature image.
pub const IMAGE_SIDE: usize = 28;
/// Number of pixels of a feature image, and width of the last DBN layer.
pub const DBN_OUTPUT: usize = IMAGE_SIDE * IMAGE_SIDE;
/// Standard deviation of the Gaussian weight initialization.
pub const INIT_STD: f64 = 0.01;
/// Enumeration limit for exact partition-function computations.
pub const MAX_EXACT_UNITS: usize = 24;

const RANGE_TOL: f64 = 1e-9;

/// One restricted Boltzmann machine.
#[derive(Debug, Clone, PartialEq)]
pub struct RbmLayer<T> {
    /// u_h × u_v
    pub weights: Array2<T>,
    pub visible_bias: Array1<T>,
    pub hidden_bias: Array1<T>,
}

/// Gradient (or update) with the same shapes as an [`RbmLayer`].
#[derive(Debug, Clone, PartialEq)]
pub struct RbmGradient<T> {
    pub weights: Array2<T>,
    pub visible_bias: Array1<T>,
    pub hidden_bias: Array1<T>,
}

impl<T: Scalar> RbmGradient<T> {
    /// Inner product with another gradient over all parameters.
    pub fn dot(&self, other: &Self) -> T {
        (&self.weights * &other.weights).sum()
            + self.visible_bias.dot(&other.visible_bias)
            + self.hidden_bias.dot(&other.hidden_bias)
    }

    pub fn flatten(&self) -> Vec<T> {
        self.weights
            .iter()
            .chain(&self.visible_bias)
            .chain(&self.hidden_bias)
            .copied()
            .collect()
    }
}

/// Contrastive-divergence training hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DbnTrainSpec {
    pub cd_steps: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub rng_seed: u64,
}

impl Default for DbnTrainSpec {
    fn default() -> Self {
        Self {
            cd_steps: 1,
            learning_rate: 0.05,
            epochs: 30,
            batch_size: 64,
            rng_seed: 0,
        }
    }
}

impl DbnTrainSpec {
    pub fn validate(&self) -> Result<()> {
        if self.cd_steps == 0 || self.batch_size == 0 {
            return Err(Error::Config("cd_steps and batch_size must be positive".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::Config("learning rate must be finite and non-negative".into()));
        }
        Ok(())
    }
}

fn check_finite<'a, T: Scalar>(values: impl IntoIterator<Item = &'a T>, what: &str) -> Result<()> {
    if values.into_iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numerical(format!("non-finite value in {what}")))
    }
}

fn check_unit_range<'a, T: Scalar>(values: impl IntoIterator<Item = &'a T>, what: &str) -> Result<()> {
    let lo = T::of(-RANGE_TOL);
    let hi = T::of(1.0 + RANGE_TOL);
    for &x in values {
        if !(x >= lo && x <= hi) {
            return Err(Error::InvalidInput(format!(
                "{what} entry {x} outside [0, 1]; normalize the input first"
            )));
        }
    }
    Ok(())
}

fn sigmoid_in_place<T: Scalar>(a: &mut Array2<T>) {
    a.mapv_inplace(T::sigmoid);
}

fn bernoulli<T: Scalar, R: Rng>(probs: &Array2<T>, rng: &mut R) -> Array2<T> {
    probs.mapv(|p| {
        if T::of(rng.random::<f64>()) < p {
            T::one()
        } else {
            T::zero()
        }
    })
}

fn unit_bits(index: usize, n: usize) -> Vec<f64> {
    (0..n).map(|i| ((index >> i) & 1) as f64).collect()
}

/// Streaming log-sum-exp accumulator.
#[derive(Default)]
struct LogSumExp {
    max: f64,
    scaled: f64,
}

impl LogSumExp {
    fn new() -> Self {
        Self {
            max: f64::NEG_INFINITY,
            scaled: 0.0,
        }
    }

    fn push(&mut self, x: f64) {
        if x > self.max {
            self.scaled = self.scaled * (self.max - x).exp() + 1.0;
            self.max = x;
        } else {
            self.scaled += (x - self.max).exp();
        }
    }

    fn value(&self) -> f64 {
        self.max + self.scaled.ln()
    }
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

impl<T: Scalar> RbmLayer<T> {
    pub fn new(weights: Array2<T>, visible_bias: Array1<T>, hidden_bias: Array1<T>) -> Result<Self> {
        let (u_h, u_v) = weights.dim();
        if u_h == 0 || u_v == 0 {
            return Err(Error::Config("RBM needs at least one visible and one hidden unit".into()));
        }
        if visible_bias.len() != u_v {
            return Err(Error::dim("visible bias", u_v, visible_bias.len()));
        }
        if hidden_bias.len() != u_h {
            return Err(Error::dim("hidden bias", u_h, hidden_bias.len()));
        }
        let layer = Self {
            weights,
            visible_bias,
            hidden_bias,
        };
        layer.check_finite()?;
        Ok(layer)
    }

    pub fn zeros(num_visible: usize, num_hidden: usize) -> Result<Self> {
        Self::new(
            Array2::zeros((num_hidden, num_visible)),
            Array1::zeros(num_visible),
            Array1::zeros(num_hidden),
        )
    }

    /// Weights i.i.d. N(0, std²), biases zero.
    pub fn random(num_visible: usize, num_hidden: usize, std: f64, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weights = Array2::from_shape_simple_fn((num_hidden, num_visible), || {
            let z: f64 = StandardNormal.sample(&mut rng);
            T::of(std * z)
        });
        Self::new(weights, Array1::zeros(num_visible), Array1::zeros(num_hidden))
    }

    pub fn num_visible(&self) -> usize {
        self.weights.ncols()
    }

    pub fn num_hidden(&self) -> usize {
        self.weights.nrows()
    }

    fn check_finite(&self) -> Result<()> {
        check_finite(&self.weights, "RBM weights")?;
        check_finite(&self.visible_bias, "RBM visible bias")?;
        check_finite(&self.hidden_bias, "RBM hidden bias")
    }

    fn check_visible(&self, v: &ArrayView1<T>) -> Result<()> {
        if v.len() != self.num_visible() {
            return Err(Error::dim("visible vector", self.num_visible(), v.len()));
        }
        Ok(())
    }

    fn check_hidden(&self, h: &ArrayView1<T>) -> Result<()> {
        if h.len() != self.num_hidden() {
            return Err(Error::dim("hidden vector", self.num_hidden(), h.len()));
        }
        Ok(())
    }

    /// E(v, h) = -hᵀWv - bᵀv - cᵀh.
    pub fn energy(&self, v: ArrayView1<T>, h: ArrayView1<T>) -> Result<T> {
        self.check_visible(&v)?;
        self.check_hidden(&h)?;
        check_finite(v, "visible vector")?;
        check_finite(h, "hidden vector")?;
        Ok(-h.dot(&self.weights.dot(&v)) - self.visible_bias.dot(&v) - self.hidden_bias.dot(&h))
    }

    fn check_enumerable(&self) -> Result<()> {
        let units = self.num_visible() + self.num_hidden();
        if units > MAX_EXACT_UNITS {
            return Err(Error::InvalidInput(format!(
                "{units} units exceed the exact-enumeration limit of {MAX_EXACT_UNITS}"
            )));
        }
        Ok(())
    }

    fn to_f64(&self) -> (Array2<f64>, Array1<f64>, Array1<f64>) {
        (
            self.weights.mapv(|x| x.as_f64()),
            self.visible_bias.mapv(|x| x.as_f64()),
            self.hidden_bias.mapv(|x| x.as_f64()),
        )
    }

    /// ln Z, enumerating every binary (v, h) configuration.
    pub fn log_partition_exact(&self) -> Result<f64> {
        self.check_enumerable()?;
        let (w, b, c) = self.to_f64();
        let (u_v, u_h) = (self.num_visible(), self.num_hidden());
        let mut acc = LogSumExp::new();
        for vi in 0..1usize << u_v {
            let v = Array1::from(unit_bits(vi, u_v));
            let field = &c + &w.dot(&v);
            let bv = b.dot(&v);
            for hi in 0..1usize << u_h {
                let hw: f64 = (0..u_h).filter(|j| (hi >> j) & 1 == 1).map(|j| field[j]).sum();
                acc.push(hw + bv);
            }
        }
        Ok(acc.value())
    }

    /// Partition function Z = Σ_{v,h} exp(-E(v,h)) over binary configurations.
    pub fn partition_exact(&self) -> Result<f64> {
        Ok(self.log_partition_exact()?.exp())
    }

    /// p(v, h) = exp(-E(v, h)) / Z.
    pub fn joint_prob(&self, v: ArrayView1<T>, h: ArrayView1<T>) -> Result<f64> {
        let e = self.energy(v, h)?.as_f64();
        Ok((-e - self.log_partition_exact()?).exp())
    }

    /// P(h_j = 1 | v) = σ(c_j + Σ_k W_jk v_k).
    pub fn hidden_activation(&self, v: ArrayView1<T>) -> Result<Array1<T>> {
        self.check_visible(&v)?;
        Ok((self.weights.dot(&v) + &self.hidden_bias).mapv(T::sigmoid))
    }

    /// P(v_k = 1 | h) = σ(b_k + Σ_j W_jk h_j).
    pub fn visible_activation(&self, h: ArrayView1<T>) -> Result<Array1<T>> {
        self.check_hidden(&h)?;
        Ok((self.weights.t().dot(&h) + &self.visible_bias).mapv(T::sigmoid))
    }

    /// Row-wise [`Self::hidden_activation`] for a batch (n × u_v → n × u_h).
    pub fn hidden_activation_batch(&self, v: ArrayView2<T>) -> Result<Array2<T>> {
        if v.ncols() != self.num_visible() {
            return Err(Error::dim("visible batch width", self.num_visible(), v.ncols()));
        }
        let mut a = v.dot(&self.weights.t()) + &self.hidden_bias;
        sigmoid_in_place(&mut a);
        Ok(a)
    }

    /// Row-wise [`Self::visible_activation`] for a batch (n × u_h → n × u_v).
    pub fn visible_activation_batch(&self, h: ArrayView2<T>) -> Result<Array2<T>> {
        if h.ncols() != self.num_hidden() {
            return Err(Error::dim("hidden batch width", self.num_hidden(), h.ncols()));
        }
        let mut a = h.dot(&self.weights) + &self.visible_bias;
        sigmoid_in_place(&mut a);
        Ok(a)
    }

    /// Mean squared error between each row and its mean-field reconstruction.
    pub fn reconstruction_error(&self, data: ArrayView2<T>) -> Result<f64> {
        let h = self.hidden_activation_batch(data)?;
        let r = self.visible_activation_batch(h.view())?;
        let diff = &r - &data;
        Ok(diff.iter().map(|d| d.as_f64().powi(2)).sum::<f64>() / diff.len().max(1) as f64)
    }

    /// Free energy F(v) = -bᵀv - Σ_j softplus(c_j + W_j·v).
    fn free_energy_f64(w: &Array2<f64>, b: &Array1<f64>, c: &Array1<f64>, v: &Array1<f64>) -> f64 {
        let field = c + &w.dot(v);
        -b.dot(v) - field.iter().map(|&x| softplus(x)).sum::<f64>()
    }

    /// Mean log marginal likelihood (1/m) Σ_j ln p(v_j) of the data rows.
    pub fn exact_log_likelihood(&self, data: ArrayView2<T>) -> Result<f64> {
        if data.ncols() != self.num_visible() {
            return Err(Error::dim("data width", self.num_visible(), data.ncols()));
        }
        if data.nrows() == 0 {
            return Err(Error::InvalidInput("empty data".into()));
        }
        let log_z = self.log_partition_exact()?;
        let (w, b, c) = self.to_f64();
        let total: f64 = data
            .rows()
            .into_iter()
            .map(|row| -Self::free_energy_f64(&w, &b, &c, &row.mapv(|x| x.as_f64())) - log_z)
            .sum();
        Ok(total / data.nrows() as f64)
    }

    /// Exact gradient of the mean negative log-likelihood with respect to
    /// (W, b, c): data statistics with h replaced by P(h | v), minus model
    /// expectations computed by enumerating every visible configuration.
    pub fn exact_nll_gradient(&self, data: ArrayView2<T>) -> Result<RbmGradient<f64>> {
        if data.ncols() != self.num_visible() {
            return Err(Error::dim("data width", self.num_visible(), data.ncols()));
        }
        if data.nrows() == 0 {
            return Err(Error::InvalidInput("empty data".into()));
        }
        let log_z = self.log_partition_exact()?;
        let (w, b, c) = self.to_f64();
        let (u_v, u_h) = (self.num_visible(), self.num_hidden());

        let mut pos_w = Array2::<f64>::zeros((u_h, u_v));
        let mut pos_b = Array1::<f64>::zeros(u_v);
        let mut pos_c = Array1::<f64>::zeros(u_h);
        for row in data.rows() {
            let v = row.mapv(|x| x.as_f64());
            let h = (&c + &w.dot(&v)).mapv(|x| 1.0 / (1.0 + (-x).exp()));
            pos_w += &outer(&h, &v);
            pos_b += &v;
            pos_c += &h;
        }
        let m = data.nrows() as f64;

        let mut neg_w = Array2::<f64>::zeros((u_h, u_v));
        let mut neg_b = Array1::<f64>::zeros(u_v);
        let mut neg_c = Array1::<f64>::zeros(u_h);
        for vi in 0..1usize << u_v {
            let v = Array1::from(unit_bits(vi, u_v));
            let p = (-Self::free_energy_f64(&w, &b, &c, &v) - log_z).exp();
            let h = (&c + &w.dot(&v)).mapv(|x| 1.0 / (1.0 + (-x).exp()));
            neg_w.scaled_add(p, &outer(&h, &v));
            neg_b.scaled_add(p, &v);
            neg_c.scaled_add(p, &h);
        }

        Ok(RbmGradient {
            weights: neg_w - pos_w / m,
            visible_bias: neg_b - pos_b / m,
            hidden_bias: neg_c - pos_c / m,
        })
    }

    /// One contrastive-divergence update on a batch, seeded from
    /// `spec.rng_seed`.
    pub fn cd_update(&self, batch: ArrayView2<T>, spec: &DbnTrainSpec) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
        let mut next = self.clone();
        next.cd_step(batch, spec.cd_steps, T::of(spec.learning_rate), &mut rng)?;
        Ok(next)
    }

    /// The CD-k estimate of the log-likelihood ascent direction for a batch.
    pub fn cd_direction<R: Rng>(
        &self,
        batch: ArrayView2<T>,
        cd_steps: usize,
        rng: &mut R,
    ) -> Result<RbmGradient<T>> {
        if batch.nrows() == 0 {
            return Err(Error::InvalidInput("empty CD batch".into()));
        }
        if cd_steps == 0 {
            return Err(Error::Config("cd_steps must be positive".into()));
        }
        check_unit_range(batch, "CD batch")?;
        let n = T::of(batch.nrows() as f64);

        let h0 = self.hidden_activation_batch(batch)?;
        let mut h_state = bernoulli(&h0, rng);
        let mut vk = Array2::zeros((0, 0));
        let mut hk = Array2::zeros((0, 0));
        for step in 0..cd_steps {
            vk = self.visible_activation_batch(h_state.view())?;
            hk = self.hidden_activation_batch(vk.view())?;
            if step + 1 < cd_steps {
                h_state = bernoulli(&hk, rng);
            }
        }

        let weights = (h0.t().dot(&batch) - hk.t().dot(&vk)) / n;
        let visible_bias = (&batch - &vk).sum_axis(Axis(0)) / n;
        let hidden_bias = (&h0 - &hk).sum_axis(Axis(0)) / n;
        Ok(RbmGradient {
            weights,
            visible_bias,
            hidden_bias,
        })
    }

    fn cd_step<R: Rng>(&mut self, batch: ArrayView2<T>, cd_steps: usize, lr: T, rng: &mut R) -> Result<()> {
        let d = self.cd_direction(batch, cd_steps, rng)?;
        self.weights.scaled_add(lr, &d.weights);
        self.visible_bias.scaled_add(lr, &d.visible_bias);
        self.hidden_bias.scaled_add(lr, &d.hidden_bias);
        self.check_finite().map_err(|_| {
            Error::Numerical(format!(
                "CD update produced non-finite parameters (learning rate {lr}, batch {} rows, \
                 max |dW| {})",
                batch.nrows(),
                d.weights.iter().fold(T::zero(), |m, x| m.max(x.abs()))
            ))
        })
    }
}

fn outer(a: &Array1<f64>, b: &Array1<f64>) -> Array2<f64> {
    let mut out = Array2::zeros((a.len(), b.len()));
    Zip::from(out.rows_mut()).and(a).for_each(|mut row, &x| row.assign(&(b * x)));
    out
}

/// A 28×28 image of hidden-unit activation probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureImage<T> {
    pub values: Array2<T>,
}

impl<T: Scalar> FeatureImage<T> {
    /// Reshapes 784 activations row-major into an image.
    pub fn from_flat(flat: Array1<T>) -> Result<Self> {
        if flat.len() != DBN_OUTPUT {
            return Err(Error::dim("feature image", DBN_OUTPUT, flat.len()));
        }
        check_unit_range(&flat, "feature image")?;
        let values = flat
            .into_shape_with_order((IMAGE_SIDE, IMAGE_SIDE))
            .expect("784 = 28 × 28");
        Ok(Self { values })
    }

    pub fn flat(&self) -> ArrayView1<'_, T> {
        self.values
            .as_slice()
            .map(ArrayView1::from)
            .expect("feature images are stored contiguously")
    }
}

/// A stack of RBMs whose widths chain together.
#[derive(Debug, Clone, PartialEq)]
pub struct DbnModel<T> {
    pub layers: Vec<RbmLayer<T>>,
}

impl<T: Scalar> DbnModel<T> {
    pub fn new(layers: Vec<RbmLayer<T>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("a DBN needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].num_hidden() != pair[1].num_visible() {
                return Err(Error::dim(
                    "DBN layer chain",
                    pair[0].num_hidden(),
                    pair[1].num_visible(),
                ));
            }
        }
        Ok(Self { layers })
    }

    /// Seeded random initialization for a geometry such as `[120, 500, 784]`.
    pub fn random(geometry: &[usize], seed: u64) -> Result<Self> {
        check_geometry(geometry)?;
        let layers = geometry
            .windows(2)
            .enumerate()
            .map(|(i, w)| RbmLayer::random(w[0], w[1], INIT_STD, init_seed(seed, i)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(layers)
    }

    pub fn geometry(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(|l| l.num_hidden()))
            .collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].num_visible()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty stack").num_hidden()
    }

    /// Deterministic upward pass through activation probabilities.
    pub fn forward(&self, frame: ArrayView1<T>) -> Result<Array1<T>> {
        if frame.len() != self.input_dim() {
            return Err(Error::dim("DBN input", self.input_dim(), frame.len()));
        }
        check_unit_range(frame, "frame")?;
        let mut x = frame.to_owned();
        for layer in &self.layers {
            x = layer.hidden_activation(x.view())?;
        }
        Ok(x)
    }

    /// Row-wise [`Self::forward`].
    pub fn forward_batch(&self, frames: ArrayView2<T>) -> Result<Array2<T>> {
        check_unit_range(frames, "frame")?;
        let mut x = self.layers[0].hidden_activation_batch(frames)?;
        for layer in &self.layers[1..] {
            x = layer.hidden_activation_batch(x.view())?;
        }
        Ok(x)
    }

    /// Maps one normalized frame to its feature image.
    pub fn extract_features(&self, frame: ArrayView1<T>) -> Result<FeatureImage<T>> {
        self.check_image_output()?;
        FeatureImage::from_flat(self.forward(frame)?)
    }

    /// Feature images for a batch of frames, one flattened image per row.
    pub fn extract_features_batch(&self, frames: ArrayView2<T>) -> Result<Array2<T>> {
        self.check_image_output()?;
        self.forward_batch(frames)
    }

    fn check_image_output(&self) -> Result<()> {
        if self.output_dim() != DBN_OUTPUT {
            return Err(Error::dim("DBN output (feature image)", DBN_OUTPUT, self.output_dim()));
        }
        Ok(())
    }
}

fn check_geometry(geometry: &[usize]) -> Result<()> {
    if geometry.len() < 2 || geometry.contains(&0) {
        return Err(Error::Config(format!(
            "DBN geometry {geometry:?} needs at least two positive widths"
        )));
    }
    Ok(())
}

fn init_seed(seed: u64, layer: usize) -> u64 {
    derive_seed(derive_seed(seed, layer as u64), 0)
}

fn train_seed(seed: u64, layer: usize) -> u64 {
    derive_seed(derive_seed(seed, layer as u64), 1)
}

/// Greedy layer-wise training: layer 1 learns the frames, every later layer
/// learns the hidden activations of the already trained layers below it.
pub fn train_dbn_greedy<T: Scalar>(
    frames: ArrayView2<T>,
    geometry: &[usize],
    spec: &DbnTrainSpec,
) -> Result<DbnModel<T>> {
    spec.validate()?;
    check_geometry(geometry)?;
    if frames.ncols() != geometry[0] {
        return Err(Error::dim("DBN geometry input width", frames.ncols(), geometry[0]));
    }
    if frames.nrows() == 0 {
        return Err(Error::InvalidInput("no training frames".into()));
    }
    check_unit_range(frames, "training frame")?;

    let mut model = DbnModel::random(geometry, spec.rng_seed)?;
    let lr = T::of(spec.learning_rate);
    let mut input = frames.to_owned();
    for (i, layer) in model.layers.iter_mut().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(train_seed(spec.rng_seed, i));
        let mut order: Vec<usize> = (0..input.nrows()).collect();
        for _ in 0..spec.epochs {
            order.shuffle(&mut rng);
            for chunk in order.chunks(spec.batch_size) {
                let batch = input.select(Axis(0), chunk);
                layer.cd_step(batch.view(), spec.cd_steps, lr, &mut rng)?;
            }
        }
        input = layer.hidden_activation_batch(input.view())?;
    }
    Ok(model)
}

/// Affine amplitude normalization fitted on the training split.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormStats<T> {
    pub min: T,
    pub max: T,
    /// CRC-32 of the little-endian samples the statistics were fitted on.
    pub source_crc: u32,
}

/// CRC-32 over the little-endian encoding of a frame matrix.
pub fn frames_crc<T: Scalar>(frames: ArrayView2<T>) -> u32 {
    let mut hasher = crc32fast::Hasher::new();
    let mut buf = Vec::with_capacity(T::BYTES * frames.ncols());
    for row in frames.rows() {
        buf.clear();
        row.iter().for_each(|x| x.write_le(&mut buf));
        hasher.update(&buf);
    }
    hasher.finalize()
}

impl<T: Scalar> NormStats<T> {
    pub fn fit(frames: ArrayView2<T>) -> Result<Self> {
        check_finite(frames, "frames")?;
        let first = *frames
            .iter()
            .next()
            .ok_or_else(|| Error::InvalidInput("cannot normalize an empty frame set".into()))?;
        let (min, max) = frames
            .iter()
            .fold((first, first), |(lo, hi), &x| (lo.min(x), hi.max(x)));
        if max == min {
            return Err(Error::InvalidInput(
                "degenerate signal: max equals min, cannot normalize".into(),
            ));
        }
        Ok(Self {
            min,
            max,
            source_crc: frames_crc(frames),
        })
    }

    /// (x - min)/(max - min), clamped to [0, 1].
    pub fn apply(&self, frames: ArrayView2<T>) -> Array2<T> {
        let span = self.max - self.min;
        frames.mapv(|x| ((x - self.min) / span).max(T::zero()).min(T::one()))
    }
}

/// Fits normalization statistics on `frames` and applies them.
pub fn normalize_frames<T: Scalar>(frames: ArrayView2<T>) -> Result<(Array2<T>, NormStats<T>)> {
    let stats = NormStats::fit(frames)?;
    Ok((stats.apply(frames), stats))
}
