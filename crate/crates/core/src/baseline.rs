//! Coherent maximum-likelihood PSK detector and the analytic BPSK error
//! rate it should achieve.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::sigproc::{symbol_template, ModulationConfig, PskScheme, Waveform};

/// Detector assumptions: the modulation scheme and the nominal carrier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MleConfig {
    pub scheme: PskScheme,
    pub mod_cfg: ModulationConfig,
}

/// Correlation receiver with one template per symbol.
#[derive(Debug, Clone)]
pub struct MleDetector {
    templates: Vec<Vec<f64>>,
    samples_per_symbol: usize,
}

impl MleDetector {
    pub fn new(cfg: &MleConfig) -> Result<Self> {
        cfg.mod_cfg.validate()?;
        Ok(Self {
            templates: (0..cfg.scheme.order())
                .map(|m| symbol_template(m, cfg.scheme, &cfg.mod_cfg))
                .collect(),
            samples_per_symbol: cfg.mod_cfg.samples_per_symbol,
        })
    }

    /// Decides one symbol window; ties go to the lower index.
    pub fn decide<T: Scalar>(&self, window: &[T]) -> Result<usize> {
        if window.len() != self.samples_per_symbol {
            return Err(Error::dim("symbol window", self.samples_per_symbol, window.len()));
        }
        let mut best = (0, f64::NEG_INFINITY);
        for (m, t) in self.templates.iter().enumerate() {
            let corr: f64 = window.iter().zip(t).map(|(r, s)| r.as_f64() * s).sum();
            if corr > best.1 {
                best = (m, corr);
            }
        }
        Ok(best.0)
    }
}

/// Symbol-synchronous ML detection: each `samples_per_symbol` window is
/// correlated against the M carrier templates and the best match wins.
pub fn mle_demodulate<T: Scalar>(received: &Waveform<T>, cfg: &MleConfig) -> Result<Vec<usize>> {
    let spb = cfg.mod_cfg.samples_per_symbol;
    if !received.len().is_multiple_of(spb) {
        return Err(Error::InvalidInput(format!(
            "received length {} is not a multiple of {spb} samples per symbol",
            received.len()
        )));
    }
    let det = MleDetector::new(cfg)?;
    received.samples.chunks(spb).map(|w| det.decide(w)).collect()
}

/// Gaussian tail probability Q(x).
pub fn q_function(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

/// BPSK bit error rate in AWGN: Q(√(2·Eb/N0)).
pub fn theoretical_ber_bpsk(ebn0_db: f64) -> f64 {
    if ebn0_db == f64::NEG_INFINITY {
        return 0.5;
    }
    q_function((2.0 * 10f64.powf(ebn0_db / 10.0)).sqrt())
}

/// Eb/N0 (dB) at which BPSK reaches `ber`, by bisection on the analytic curve.
pub fn ebn0_for_bpsk_ber(ber: f64) -> f64 {
    if ber >= 0.5 {
        return f64::NEG_INFINITY;
    }
    if ber <= 0.0 {
        return f64::INFINITY;
    }
    let (mut lo, mut hi) = (-60.0, 30.0);
    if theoretical_ber_bpsk(hi) > ber {
        return f64::INFINITY;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if theoretical_ber_bpsk(mid) > ber {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sigproc::{add_awgn, apply_doppler, modulate_psk};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_symbols(n: usize, order: usize, seed: u64) -> Vec<usize> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random_range(0..order)).collect()
    }

    #[test]
    fn noiseless_detection_is_exact() {
        for order in [2, 4, 8, 16] {
            let scheme = PskScheme::new(order).unwrap();
            let cfg = MleConfig {
                scheme,
                mod_cfg: ModulationConfig::default(),
            };
            let syms = random_symbols(500, order, order as u64);
            let w: Waveform<f64> = modulate_psk(&syms, scheme, &cfg.mod_cfg).unwrap();
            assert_eq!(mle_demodulate(&w, &cfg).unwrap(), syms);
        }
    }

    #[test]
    fn rejects_partial_symbol() {
        let cfg = MleConfig {
            scheme: PskScheme::BPSK,
            mod_cfg: ModulationConfig::default(),
        };
        let w = Waveform::new(vec![0.0f64; 100], 8000.0).unwrap();
        assert!(mle_demodulate(&w, &cfg).is_err());
    }

    #[test]
    fn tie_goes_to_lower_index() {
        let cfg = MleConfig {
            scheme: PskScheme::QPSK,
            mod_cfg: ModulationConfig::default(),
        };
        let det = MleDetector::new(&cfg).unwrap();
        assert_eq!(det.decide(&[0.0f64; 96]).unwrap(), 0);
    }

    #[test]
    fn scale_invariant() {
        let cfg = MleConfig {
            scheme: PskScheme::PSK8,
            mod_cfg: ModulationConfig::default(),
        };
        let syms = random_symbols(300, 8, 2);
        let w: Waveform<f64> = modulate_psk(&syms, cfg.scheme, &cfg.mod_cfg).unwrap();
        let noisy = add_awgn(&w, -5.0, 3).unwrap();
        let base = mle_demodulate(&noisy, &cfg).unwrap();
        for k in [0.01, 0.5, 3.0, 1e4] {
            assert_eq!(mle_demodulate(&noisy.scaled(k), &cfg).unwrap(), base);
        }
    }

    #[test]
    fn analytic_ber_values() {
        assert_eq!(theoretical_ber_bpsk(f64::NEG_INFINITY), 0.5);
        // Q(√2) = 0.5·erfc(1)
        assert!((theoretical_ber_bpsk(0.0) - 0.078_649_603_525_143_2).abs() < 1e-12);
        assert!((theoretical_ber_bpsk(8.0) - 1.909e-4).abs() < 1e-6);
        let mut prev = 0.5;
        for i in -40..40 {
            let p = theoretical_ber_bpsk(i as f64 * 0.5);
            assert!(p < prev);
            prev = p;
        }
        assert!((ebn0_for_bpsk_ber(theoretical_ber_bpsk(4.0)) - 4.0).abs() < 1e-9);
    }

    #[test]
    fn doppler_mismatch_degrades_monotonically() {
        // one isolated symbol per transmission, detected with perfect timing
        let scheme = PskScheme::BPSK;
        let cfg = MleConfig {
            scheme,
            mod_cfg: ModulationConfig::default(),
        };
        let det = MleDetector::new(&cfg).unwrap();
        let syms = random_symbols(4000, 2, 5);
        let snr = cfg.mod_cfg.snr_db_for_ebn0(2.0, scheme);
        let mut errors = Vec::new();
        for alpha in [1.00, 1.01, 1.02, 1.05] {
            let mut e = 0;
            for (i, &s) in syms.iter().enumerate() {
                let w: Waveform<f64> = modulate_psk(&[s, 0], scheme, &cfg.mod_cfg).unwrap();
                let rx = add_awgn(&apply_doppler(&w, alpha).unwrap(), snr, i as u64).unwrap();
                e += usize::from(det.decide(&rx.samples[..96]).unwrap() != s);
            }
            errors.push(e);
        }
        assert!(errors.windows(2).all(|p| p[0] < p[1]), "{errors:?}");
    }
}
