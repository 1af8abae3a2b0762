//! PSK waveform generation, the Doppler + AWGN channel, and framing of the
//! received signal into labeled fixed-length vectors.

use std::f64::consts::PI;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Default frame length in samples.
pub const FRAME_LEN: usize = 120;
/// Default fractional overlap between consecutive frames.
pub const OVERLAP_FRAC: f64 = 0.2;

/// Smallest accepted Doppler scale factor.
pub const ALPHA_MIN: f64 = 0.25;
/// Largest accepted Doppler scale factor.
pub const ALPHA_MAX: f64 = 4.0;

/// Half-width, in input samples, of the windowed-sinc interpolation kernel.
const SINC_HALF_WIDTH: i64 = 16;

/// M-ary phase-shift keying with M in {2, 4, 8, 16}.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct PskScheme {
    order: usize,
}

impl PskScheme {
    pub const BPSK: PskScheme = PskScheme { order: 2 };
    pub const QPSK: PskScheme = PskScheme { order: 4 };
    pub const PSK8: PskScheme = PskScheme { order: 8 };
    pub const PSK16: PskScheme = PskScheme { order: 16 };

    pub fn new(order: usize) -> Result<Self> {
        match order {
            2 | 4 | 8 | 16 => Ok(Self { order }),
            _ => Err(Error::Config(format!(
                "PSK order must be one of 2, 4, 8, 16 (got {order})"
            ))),
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.order.trailing_zeros() as usize
    }

    /// Carrier phase of symbol `m`: 2πm/M.
    pub fn phase(&self, m: usize) -> f64 {
        2.0 * PI * m as f64 / self.order as f64
    }
}

impl TryFrom<usize> for PskScheme {
    type Error = Error;

    fn try_from(order: usize) -> Result<Self> {
        Self::new(order)
    }
}

impl From<PskScheme> for usize {
    fn from(s: PskScheme) -> usize {
        s.order
    }
}

impl std::fmt::Display for PskScheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}-PSK", self.order)
    }
}

/// Carrier, sampling rate and symbol duration of the modulator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModulationConfig {
    pub carrier_hz: f64,
    pub sample_rate_hz: f64,
    pub samples_per_symbol: usize,
}

impl Default for ModulationConfig {
    fn default() -> Self {
        Self {
            carrier_hz: 1000.0,
            sample_rate_hz: 8000.0,
            samples_per_symbol: 96,
        }
    }
}

impl ModulationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate_hz.is_finite() && self.sample_rate_hz > 0.0) {
            return Err(Error::Config("sample rate must be positive".into()));
        }
        if !(self.carrier_hz.is_finite() && self.carrier_hz > 0.0) {
            return Err(Error::Config("carrier must be positive".into()));
        }
        if self.carrier_hz >= self.sample_rate_hz / 2.0 {
            return Err(Error::Config(format!(
                "carrier {} Hz violates Nyquist for sample rate {} Hz",
                self.carrier_hz, self.sample_rate_hz
            )));
        }
        if self.samples_per_symbol < 2 {
            return Err(Error::Config("samples_per_symbol must be at least 2".into()));
        }
        if self.carrier_hz * self.symbol_duration() < 1.0 {
            return Err(Error::Config(
                "symbol must span at least one full carrier cycle".into(),
            ));
        }
        Ok(())
    }

    /// Symbol duration T in seconds.
    pub fn symbol_duration(&self) -> f64 {
        self.samples_per_symbol as f64 / self.sample_rate_hz
    }

    /// Per-sample SNR (dB) that corresponds to a per-bit Eb/N0 (dB) for a
    /// constant-envelope carrier: SNR = Eb/N0 · 2k / samples_per_symbol.
    pub fn snr_db_for_ebn0(&self, ebn0_db: f64, scheme: PskScheme) -> f64 {
        let k = scheme.bits_per_symbol() as f64;
        ebn0_db + 10.0 * (2.0 * k / self.samples_per_symbol as f64).log10()
    }
}

/// Uniformly sampled real passband signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform<T> {
    pub samples: Vec<T>,
    pub sample_rate_hz: f64,
}

impl<T: Scalar> Waveform<T> {
    pub fn new(samples: Vec<T>, sample_rate_hz: f64) -> Result<Self> {
        if let Some(i) = samples.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite sample at index {i}")));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Mean square amplitude.
    pub fn power(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(|x| x.as_f64().powi(2)).sum::<f64>() / self.samples.len() as f64
    }

    pub fn scaled(&self, k: T) -> Self {
        Self {
            samples: self.samples.iter().map(|&x| x * k).collect(),
            sample_rate_hz: self.sample_rate_hz,
        }
    }
}

/// Doppler scale and noise level of one transmission.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    pub doppler_alpha: f64,
    /// Per-sample signal power over noise variance, dB; `f64::INFINITY`
    /// disables the noise.
    pub snr_db: f64,
    pub rng_seed: u64,
}

impl ChannelConfig {
    pub fn validate(&self) -> Result<()> {
        check_alpha(self.doppler_alpha)?;
        if self.snr_db.is_nan() {
            return Err(Error::Config("snr_db is NaN".into()));
        }
        Ok(())
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha.is_finite() && (ALPHA_MIN..=ALPHA_MAX).contains(&alpha)) {
        return Err(Error::Config(format!(
            "Doppler factor {alpha} outside [{ALPHA_MIN}, {ALPHA_MAX}]"
        )));
    }
    Ok(())
}

/// Groups `bits` MSB-first into symbol indices.
pub fn map_bits_to_symbols(bits: &[u8], scheme: PskScheme) -> Result<Vec<usize>> {
    let k = scheme.bits_per_symbol();
    if !bits.len().is_multiple_of(k) {
        let pad = k - bits.len() % k;
        return Err(Error::InvalidInput(format!(
            "{} bits is not a multiple of {k} bits per symbol; pad with {pad} bit(s)",
            bits.len()
        )));
    }
    bits.chunks(k)
        .map(|group| {
            group.iter().try_fold(0usize, |acc, &b| match b {
                0 | 1 => Ok((acc << 1) | b as usize),
                _ => Err(Error::InvalidInput(format!("bit value {b} is not 0 or 1"))),
            })
        })
        .collect()
}

/// Expands symbol indices back into MSB-first bits.
pub fn symbols_to_bits(symbols: &[usize], scheme: PskScheme) -> Result<Vec<u8>> {
    let k = scheme.bits_per_symbol();
    let mut bits = Vec::with_capacity(symbols.len() * k);
    for &m in symbols {
        check_symbol(m, scheme)?;
        bits.extend((0..k).rev().map(|i| ((m >> i) & 1) as u8));
    }
    Ok(bits)
}

fn check_symbol(m: usize, scheme: PskScheme) -> Result<()> {
    if m >= scheme.order() {
        return Err(Error::InvalidInput(format!(
            "symbol {m} out of range for {scheme}"
        )));
    }
    Ok(())
}

/// Number of differing bits between two symbols under the natural binary map.
pub fn bit_errors(sent: usize, decided: usize) -> usize {
    (sent ^ decided).count_ones() as usize
}

/// One symbol period of carrier with phase θ_m, phase origin at the symbol
/// start.
pub fn symbol_template(m: usize, scheme: PskScheme, cfg: &ModulationConfig) -> Vec<f64> {
    let theta = scheme.phase(m);
    let w = 2.0 * PI * cfg.carrier_hz / cfg.sample_rate_hz;
    (0..cfg.samples_per_symbol)
        .map(|k| (w * k as f64 + theta).cos())
        .collect()
}

/// PSK modulator: symbol n occupies samples `[n·spS, (n+1)·spS)` and its
/// carrier phase restarts at each symbol boundary.
pub fn modulate_psk<T: Scalar>(
    symbols: &[usize],
    scheme: PskScheme,
    cfg: &ModulationConfig,
) -> Result<Waveform<T>> {
    cfg.validate()?;
    let templates: Vec<Vec<T>> = (0..scheme.order())
        .map(|m| symbol_template(m, scheme, cfg).into_iter().map(T::of).collect())
        .collect();
    let mut samples = Vec::with_capacity(symbols.len() * cfg.samples_per_symbol);
    for &m in symbols {
        check_symbol(m, scheme)?;
        samples.extend_from_slice(&templates[m]);
    }
    Ok(Waveform {
        samples,
        sample_rate_hz: cfg.sample_rate_hz,
    })
}

fn sinc_kernel(d: f64) -> f64 {
    let half = SINC_HALF_WIDTH as f64;
    if d.abs() >= half {
        return 0.0;
    }
    let window = 0.5 * (1.0 + (PI * d / half).cos());
    let sinc = if d == 0.0 { 1.0 } else { (PI * d).sin() / (PI * d) };
    sinc * window
}

/// Band-limited value of the sequence at fractional index `t`; samples
/// outside the sequence are zero.
fn interpolate(x: &[f64], t: f64) -> f64 {
    let base = t.floor();
    let i0 = base as i64;
    if t == base {
        return x.get(i0 as usize).copied().filter(|_| i0 >= 0).unwrap_or(0.0);
    }
    let lo = (i0 - SINC_HALF_WIDTH + 1).max(0);
    let hi = (i0 + SINC_HALF_WIDTH).min(x.len() as i64 - 1);
    (lo..=hi).map(|k| x[k as usize] * sinc_kernel(t - k as f64)).sum()
}

/// Time-scales the waveform: output sample j is x(α·j/f_s), evaluated by
/// Hann-windowed sinc interpolation with 16 taps per side.
pub fn apply_doppler<T: Scalar>(w: &Waveform<T>, alpha: f64) -> Result<Waveform<T>> {
    check_alpha(alpha)?;
    let x: Vec<f64> = w.samples.iter().map(|v| v.as_f64()).collect();
    let out_len = (w.len() as f64 / alpha).floor() as usize;
    let samples = (0..out_len)
        .map(|j| T::of(interpolate(&x, alpha * j as f64)))
        .collect();
    Ok(Waveform {
        samples,
        sample_rate_hz: w.sample_rate_hz,
    })
}

/// Adds white Gaussian noise of variance P/10^(snr_db/10), P being the mean
/// square of `w`. Deterministic per seed.
pub fn add_awgn<T: Scalar>(w: &Waveform<T>, snr_db: f64, seed: u64) -> Result<Waveform<T>> {
    if snr_db == f64::INFINITY {
        return Ok(w.clone());
    }
    if snr_db.is_nan() {
        return Err(Error::InvalidInput("snr_db is NaN".into()));
    }
    let power = w.power();
    if power == 0.0 {
        return Err(Error::InvalidInput(
            "zero-power input: SNR is undefined".into(),
        ));
    }
    let sigma = (power / 10f64.powf(snr_db / 10.0)).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = w
        .samples
        .iter()
        .map(|&x| {
            let n: f64 = StandardNormal.sample(&mut rng);
            x + T::of(sigma * n)
        })
        .collect();
    Ok(Waveform {
        samples,
        sample_rate_hz: w.sample_rate_hz,
    })
}

/// Doppler scaling followed by additive noise.
pub fn apply_channel<T: Scalar>(w: &Waveform<T>, ch: &ChannelConfig) -> Result<Waveform<T>> {
    ch.validate()?;
    let scaled = if ch.doppler_alpha == 1.0 {
        w.clone()
    } else {
        apply_doppler(w, ch.doppler_alpha)?
    };
    add_awgn(&scaled, ch.snr_db, ch.rng_seed)
}

/// Overlapping frames cut from a signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Frames<T> {
    pub data: Array2<T>,
    pub frame_len: usize,
    pub hop: usize,
}

impl<T> Frames<T> {
    pub fn num_frames(&self) -> usize {
        self.data.nrows()
    }

    pub fn overlap(&self) -> usize {
        self.frame_len - self.hop
    }
}

/// Hop size for a frame length and fractional overlap.
pub fn hop_for(frame_len: usize, overlap_frac: f64) -> Result<usize> {
    if !(0.0..1.0).contains(&overlap_frac) {
        return Err(Error::Config(format!(
            "overlap fraction {overlap_frac} outside [0, 1)"
        )));
    }
    let overlap = (overlap_frac * frame_len as f64).round() as usize;
    if overlap >= frame_len {
        return Err(Error::Config("overlap leaves no hop".into()));
    }
    Ok(frame_len - overlap)
}

/// Cuts `w` into frames of `frame_len` samples, consecutive frames sharing
/// `round(overlap_frac·frame_len)` samples. A trailing remainder shorter
/// than a frame is dropped.
pub fn frame_signal<T: Scalar>(
    w: &Waveform<T>,
    frame_len: usize,
    overlap_frac: f64,
) -> Result<Frames<T>> {
    if frame_len == 0 {
        return Err(Error::Config("frame length must be positive".into()));
    }
    let hop = hop_for(frame_len, overlap_frac)?;
    if w.len() < frame_len {
        return Err(Error::InvalidInput(format!(
            "signal of {} samples is shorter than one {frame_len}-sample frame",
            w.len()
        )));
    }
    let n = (w.len() - frame_len) / hop + 1;
    let data = Array2::from_shape_fn((n, frame_len), |(i, j)| w.samples[i * hop + j]);
    Ok(Frames {
        data,
        frame_len,
        hop,
    })
}

/// Frames paired with the symbol each one starts on.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameBatch<T> {
    pub frames: Array2<T>,
    pub labels: Vec<usize>,
    pub frame_len: usize,
    pub hop: usize,
}

impl<T: Scalar> FrameBatch<T> {
    pub fn new(frames: Array2<T>, labels: Vec<usize>, hop: usize) -> Result<Self> {
        if frames.nrows() != labels.len() {
            return Err(Error::dim("frame labels", frames.nrows(), labels.len()));
        }
        Ok(Self {
            frame_len: frames.ncols(),
            frames,
            labels,
            hop,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Labels frame i with symbol i. Requires the hop to equal the symbol length
/// so that every frame starts on a symbol boundary.
pub fn label_frames<T: Scalar>(
    frames: Frames<T>,
    symbols: &[usize],
    cfg: &ModulationConfig,
) -> Result<FrameBatch<T>> {
    if frames.hop != cfg.samples_per_symbol {
        return Err(Error::Config(format!(
            "frame hop {} does not match samples_per_symbol {}",
            frames.hop, cfg.samples_per_symbol
        )));
    }
    let lost = frames.overlap().div_ceil(frames.hop);
    let expected = symbols.len().saturating_sub(lost);
    if frames.num_frames() != expected {
        return Err(Error::dim("frames per symbol stream", expected, frames.num_frames()));
    }
    let labels = symbols[..expected].to_vec();
    FrameBatch::new(frames.data, labels, frames.hop)
}

/// Frames that start on each of the first `num_symbols` symbol boundaries of
/// a signal whose time axis was scaled by `alpha`: frame i starts at sample
/// round(i·spS/α). For α = 1 this coincides with [`frame_signal`] at
/// hop = spS.
pub fn frame_symbol_aligned<T: Scalar>(
    w: &Waveform<T>,
    num_symbols: usize,
    samples_per_symbol: usize,
    alpha: f64,
    frame_len: usize,
) -> Result<Array2<T>> {
    check_alpha(alpha)?;
    let start = |i: usize| (i as f64 * samples_per_symbol as f64 / alpha).round() as usize;
    if num_symbols > 0 && start(num_symbols - 1) + frame_len > w.len() {
        return Err(Error::InvalidInput(format!(
            "signal of {} samples too short for {num_symbols} aligned frames",
            w.len()
        )));
    }
    Ok(Array2::from_shape_fn((num_symbols, frame_len), |(i, j)| {
        w.samples[start(i) + j]
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg() -> ModulationConfig {
        ModulationConfig::default()
    }

    #[test]
    fn scheme_orders() {
        assert_eq!(PskScheme::new(8).unwrap().bits_per_symbol(), 3);
        assert_eq!(PskScheme::PSK16.bits_per_symbol(), 4);
        assert!(PskScheme::new(3).is_err());
        assert!(PskScheme::new(32).is_err());
    }

    #[test]
    fn bits_to_symbols_examples() {
        assert_eq!(map_bits_to_symbols(&[0], PskScheme::BPSK).unwrap(), vec![0]);
        assert_eq!(
            map_bits_to_symbols(&[1, 0, 1, 1], PskScheme::QPSK).unwrap(),
            vec![2, 3]
        );
        let err = map_bits_to_symbols(&[1, 0, 1], PskScheme::QPSK).unwrap_err();
        assert!(err.to_string().contains("pad with 1"));
    }

    #[test]
    fn bit_stream_roundtrip() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let bits: Vec<u8> = (0..1024).map(|_| rng.random_range(0..2u8)).collect();
        for scheme in [PskScheme::BPSK, PskScheme::QPSK, PskScheme::PSK16] {
            let syms = map_bits_to_symbols(&bits, scheme).unwrap();
            assert_eq!(symbols_to_bits(&syms, scheme).unwrap(), bits);
        }
    }

    #[test]
    fn modulate_symbol_zero_is_carrier() {
        let c = cfg();
        let w: Waveform<f64> = modulate_psk(&[0], PskScheme::BPSK, &c).unwrap();
        assert_eq!(w.len(), 96);
        for (k, &x) in w.samples.iter().enumerate() {
            let expect = (2.0 * PI * 1000.0 * k as f64 / 8000.0).cos();
            assert!((x - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn bpsk_symbols_are_negations() {
        let w: Waveform<f64> = modulate_psk(&[0, 1], PskScheme::BPSK, &cfg()).unwrap();
        for k in 0..96 {
            assert!((w.samples[k] + w.samples[96 + k]).abs() < 1e-12);
        }
    }

    #[test]
    fn qpsk_neighbours_orthogonal() {
        let w: Waveform<f64> = modulate_psk(&[0, 1], PskScheme::QPSK, &cfg()).unwrap();
        // 96 samples at 8 samples per cycle is 12 whole cycles
        let dot: f64 = (0..96).map(|k| w.samples[k] * w.samples[96 + k]).sum();
        assert!(dot.abs() < 1e-9, "inner product {dot}");
    }

    #[test]
    fn modulate_rejects_bad_symbol() {
        assert!(modulate_psk::<f64>(&[0, 4], PskScheme::QPSK, &cfg()).is_err());
    }

    #[test]
    fn config_guards() {
        let mut c = cfg();
        c.carrier_hz = 5000.0;
        assert!(c.validate().is_err());
        let mut c = cfg();
        c.samples_per_symbol = 1;
        assert!(c.validate().is_err());
        let mut c = cfg();
        c.samples_per_symbol = 4;
        assert!(c.validate().is_err());
    }

    #[test]
    fn doppler_identity() {
        let w: Waveform<f64> =
            modulate_psk(&[0, 1, 1, 0, 1], PskScheme::BPSK, &cfg()).unwrap();
        let out = apply_doppler(&w, 1.0).unwrap();
        assert_eq!(out, w);
    }

    #[test]
    fn doppler_length_and_bounds() {
        let w = Waveform::new(vec![1.0f64; 1000], 8000.0).unwrap();
        assert_eq!(apply_doppler(&w, 2.0).unwrap().len(), 500);
        assert_eq!(apply_doppler(&w, 0.5).unwrap().len(), 2000);
        assert_eq!(apply_doppler(&w, 1.5).unwrap().len(), 666);
        assert!(apply_doppler(&w, 0.2).is_err());
        assert!(apply_doppler(&w, 4.5).is_err());
    }

    #[test]
    fn awgn_disabled_and_deterministic() {
        let w: Waveform<f64> = modulate_psk(&[0, 1, 0], PskScheme::BPSK, &cfg()).unwrap();
        assert_eq!(add_awgn(&w, f64::INFINITY, 1).unwrap(), w);
        assert_eq!(add_awgn(&w, 3.0, 9).unwrap(), add_awgn(&w, 3.0, 9).unwrap());
        assert_ne!(add_awgn(&w, 3.0, 9).unwrap(), add_awgn(&w, 3.0, 10).unwrap());
    }

    #[test]
    fn awgn_rejects_silence() {
        let w = Waveform::new(vec![0.0f64; 10], 8000.0).unwrap();
        assert!(add_awgn(&w, 0.0, 1).is_err());
    }

    #[test]
    fn awgn_variance() {
        // unit-power input: alternating ±1
        let n = 1_000_000;
        let w = Waveform::new((0..n).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect(), 1.0)
            .unwrap();
        let noisy = add_awgn(&w, 0.0, 42).unwrap();
        let noise: Vec<f64> = noisy
            .samples
            .iter()
            .zip(&w.samples)
            .map(|(a, b)| a - b)
            .collect();
        let mean = noise.iter().sum::<f64>() / n as f64;
        let var = noise.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 3.0 / (n as f64).sqrt(), "mean {mean}");
        assert!((0.99..=1.01).contains(&var), "variance {var}");
    }

    #[test]
    fn frame_counts() {
        let w = |n: usize| Waveform::new(vec![0.5f64; n], 8000.0).unwrap();
        assert_eq!(frame_signal(&w(120), 120, 0.2).unwrap().num_frames(), 1);
        let f = frame_signal(&w(1080), 120, 0.2).unwrap();
        assert_eq!((f.num_frames(), f.hop), (11, 96));
        assert!(frame_signal(&w(119), 120, 0.2).is_err());
    }

    #[test]
    fn label_examples() {
        let c = cfg();
        let syms: Vec<usize> = (0..10).map(|i| i % 2).collect();
        let w: Waveform<f64> = modulate_psk(&syms, PskScheme::BPSK, &c).unwrap();
        let batch = label_frames(frame_signal(&w, 120, 0.2).unwrap(), &syms, &c).unwrap();
        assert_eq!(batch.len(), 9);
        assert_eq!(batch.labels, syms[..9].to_vec());

        let w: Waveform<f64> = modulate_psk(&[1, 0], PskScheme::BPSK, &c).unwrap();
        let batch = label_frames(frame_signal(&w, 120, 0.2).unwrap(), &[1, 0], &c).unwrap();
        assert_eq!(batch.labels, vec![1]);

        let w = Waveform::new(vec![0.5f64; 1000], 8000.0).unwrap();
        let frames = frame_signal(&w, 125, 0.2).unwrap();
        assert_eq!(frames.hop, 100);
        assert!(label_frames(frames, &[0; 10], &c).is_err());
    }

    #[test]
    fn aligned_frames_match_plain_framing() {
        let c = cfg();
        let syms = [0, 1, 1, 0, 1, 0];
        let w: Waveform<f64> = modulate_psk(&syms, PskScheme::BPSK, &c).unwrap();
        let plain = frame_signal(&w, 120, 0.2).unwrap();
        let aligned = frame_symbol_aligned(&w, 5, 96, 1.0, 120).unwrap();
        assert_eq!(plain.data, aligned);
        assert!(frame_symbol_aligned(&w, 6, 96, 1.0, 120).is_err());
    }

    #[test]
    fn ebn0_conversion() {
        let c = cfg();
        let snr = c.snr_db_for_ebn0(0.0, PskScheme::BPSK);
        assert!((snr - 10.0 * (2.0f64 / 96.0).log10()).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn symbol_roundtrip(order_idx in 0usize..4, syms in proptest::collection::vec(0usize..16, 0..64)) {
            let scheme = PskScheme::new([2, 4, 8, 16][order_idx]).unwrap();
            let syms: Vec<usize> = syms.into_iter().map(|s| s % scheme.order()).collect();
            let bits = symbols_to_bits(&syms, scheme).unwrap();
            prop_assert_eq!(map_bits_to_symbols(&bits, scheme).unwrap(), syms);
        }

        #[test]
        fn modulated_amplitude_bounded(syms in proptest::collection::vec(0usize..8, 1..16)) {
            let w: Waveform<f64> = modulate_psk(&syms, PskScheme::PSK8, &ModulationConfig::default()).unwrap();
            prop_assert!(w.samples.iter().all(|x| x.abs() <= 1.0 + 1e-12));
        }

        #[test]
        fn frame_count_formula(len in 1usize..2000, frame_len in 1usize..200, overlap in 0.0f64..0.9) {
            let w = Waveform::new((0..len).map(|i| i as f64).collect(), 1.0).unwrap();
            match frame_signal(&w, frame_len, overlap) {
                Ok(f) => {
                    let hop = frame_len - (overlap * frame_len as f64).round() as usize;
                    prop_assert_eq!(f.hop, hop);
                    prop_assert_eq!(f.num_frames(), (len - frame_len) / hop + 1);
                    for i in 0..f.num_frames() {
                        for j in 0..frame_len {
                            prop_assert_eq!(f.data[[i, j]], (i * hop + j) as f64);
                        }
                    }
                }
                Err(_) => prop_assert!(len < frame_len || (overlap * frame_len as f64).round() as usize >= frame_len),
            }
        }

        #[test]
        fn doppler_unit_alpha_identity(xs in proptest::collection::vec(-1.0f64..1.0, 1..300)) {
            let w = Waveform::new(xs, 8000.0).unwrap();
            let out = apply_doppler(&w, 1.0).unwrap();
            for (a, b) in out.samples.iter().zip(&w.samples) {
                prop_assert!((a - b).abs() <= 1e-9);
            }
        }
    }
}
