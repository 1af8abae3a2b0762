//! Quick built-in consistency checks against closed-form references.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::artifact::{decode_model, encode_model, ModelArtifact};
use super::pipeline::{ClassifierKind, ClassifierModel, Demodulator, FeatureScaler, TrainingMetadata};
use crate::baseline::{mle_demodulate, theoretical_ber_bpsk, MleConfig};
use crate::classify::{Classifier, ClassifierTrainConfig, DenseNet, TrainHistory};
use crate::dbn::{DbnModel, DbnTrainSpec, NormStats, RbmLayer};
use crate::error::Result;
use crate::sigproc::{add_awgn, apply_doppler, modulate_psk, ModulationConfig, PskScheme, Waveform};

/// Two-sided 99% normal quantile.
const Z99: f64 = 2.576;

/// Outcome of one check.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        Self { name, passed, detail }
    }
}

/// Runs every check with the given seed.
pub fn run_selftest(seed: u64) -> Result<Vec<Check>> {
    Ok(vec![
        mle_matches_analytic(seed)?,
        rbm_probabilities_sum_to_one(seed)?,
        dense_gradient_matches_differences(seed)?,
        doppler_moves_tone(),
        artifact_round_trips(seed)?,
    ])
}

fn mle_matches_analytic(seed: u64) -> Result<Check> {
    let cfg = ModulationConfig::default();
    let scheme = PskScheme::BPSK;
    let (bits, ebn0) = (20_000usize, 4.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sent: Vec<usize> = (0..bits).map(|_| rng.random_range(0..2)).collect();
    let clean = modulate_psk::<f64>(&sent, scheme, &cfg)?;
    let rx = add_awgn(&clean, cfg.snr_db_for_ebn0(ebn0, scheme), seed)?;
    let decided = mle_demodulate(&rx, &MleConfig { scheme, mod_cfg: cfg })?;
    let errors = sent.iter().zip(&decided).filter(|(a, b)| a != b).count() as f64;
    let p = theoretical_ber_bpsk(ebn0);
    let expected = p * bits as f64;
    let tol = Z99 * (expected * (1.0 - p)).sqrt();
    Ok(Check::new(
        "mle-vs-analytic",
        (errors - expected).abs() <= tol,
        format!("{errors} errors in {bits} bits at {ebn0} dB, expected {expected:.1} ± {tol:.1}"),
    ))
}

fn rbm_probabilities_sum_to_one(seed: u64) -> Result<Check> {
    let rbm = RbmLayer::<f64>::random(6, 5, 0.5, seed)?;
    let log_z = rbm.log_partition_exact()?;
    let mut total = 0.0;
    for vi in 0..1usize << 6 {
        let v = Array1::from_shape_fn(6, |k| ((vi >> k) & 1) as f64);
        for hi in 0..1usize << 5 {
            let h = Array1::from_shape_fn(5, |k| ((hi >> k) & 1) as f64);
            total += (-rbm.energy(v.view(), h.view())? - log_z).exp();
        }
    }
    Ok(Check::new(
        "rbm-partition",
        (total - 1.0).abs() < 1e-9,
        format!("sum of p(v, h) = {total:.15}"),
    ))
}

fn dense_gradient_matches_differences(seed: u64) -> Result<Check> {
    let net = DenseNet::<f64>::new(&[4, 5, 3], seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
    let x = Array2::from_shape_fn((3, 4), |_| rng.random_range(-1.0..1.0));
    let labels = [0, 2, 1];
    let (_, grad) = net.loss_and_gradient(x.view(), &labels)?;
    let analytic = grad.flat_params();
    let base = net.flat_params();
    let h = 1e-6;
    let mut worst = 0.0f64;
    let mut probe = net.clone();
    for i in 0..base.len() {
        let mut p = base.clone();
        p[i] = base[i] + h;
        probe.set_flat_params(&p)?;
        let up = probe.mean_loss(x.view(), &labels)?;
        p[i] = base[i] - h;
        probe.set_flat_params(&p)?;
        let down = probe.mean_loss(x.view(), &labels)?;
        let numeric = (up - down) / (2.0 * h);
        let rel = (numeric - analytic[i]).abs() / numeric.abs().max(analytic[i].abs()).max(1e-8);
        worst = worst.max(rel);
    }
    Ok(Check::new(
        "dense-gradient",
        worst < 1e-5,
        format!("worst relative error {worst:.2e} over {} parameters", base.len()),
    ))
}

fn doppler_moves_tone() -> Check {
    let (fs, f0, alpha, n) = (8000.0, 400.0, 1.1, 4096usize);
    let tone: Vec<f64> = (0..2 * n)
        .map(|k| (2.0 * std::f64::consts::PI * f0 * k as f64 / fs).cos())
        .collect();
    let out = Waveform::new(tone, fs).and_then(|w| apply_doppler(&w, alpha));
    let out = match out {
        Ok(w) => w,
        Err(e) => return Check::new("doppler-tone", false, e.to_string()),
    };
    let x = &out.samples[..n];
    let power = |bin: usize| {
        let (mut re, mut im) = (0.0, 0.0);
        for (k, v) in x.iter().enumerate() {
            let ph = 2.0 * std::f64::consts::PI * (bin * k) as f64 / n as f64;
            re += v * ph.cos();
            im -= v * ph.sin();
        }
        re * re + im * im
    };
    let bin_hz = fs / n as f64;
    let expected = alpha * f0 / bin_hz;
    // the peak is searched in a window wide enough to catch a wrong scaling
    let lo = (f0 * 0.5 / bin_hz) as usize;
    let hi = (f0 * 2.0 / bin_hz) as usize;
    let peak = (lo..hi).max_by(|&a, &b| power(a).total_cmp(&power(b))).unwrap_or(0);
    Check::new(
        "doppler-tone",
        (peak as f64 - expected).abs() <= 1.0,
        format!("peak bin {peak}, expected {expected:.2} ({} Hz tone, alpha {alpha})", f0),
    )
}

fn artifact_round_trips(seed: u64) -> Result<Check> {
    let dbn = DbnModel::<f32>::random(&[120, 20, 784], seed)?;
    let artifact = ModelArtifact::new(
        Demodulator {
            scheme: PskScheme::QPSK,
            mod_cfg: ModulationConfig::default(),
            norm: NormStats {
                min: -1.0,
                max: 1.0,
                source_crc: 7,
            },
            scaler: FeatureScaler::identity(784),
            dbn,
            classifier: ClassifierModel::Dense(DenseNet::standard(4, seed)?),
        },
        TrainingMetadata {
            seed,
            train_frames: 0,
            dbn_geometry: vec![120, 20, 784],
            dbn: DbnTrainSpec::default(),
            classifier_kind: ClassifierKind::Nn,
            classifier: ClassifierTrainConfig::default(),
            dbn_reconstruction_error: 0.0,
            history: TrainHistory::default(),
        },
    );
    let bytes = encode_model(&artifact)?;
    let same = decode_model::<f32>(&bytes)? == artifact;
    let truncated = decode_model::<f32>(&bytes[..bytes.len() - 1]).is_err();
    Ok(Check::new(
        "artifact-round-trip",
        same && truncated,
        format!("{} bytes, equal after reload: {same}, truncation rejected: {truncated}", bytes.len()),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_checks_pass() {
        for c in run_selftest(11).unwrap() {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }
}
