//! Experiment configuration shared by dataset generation, training and the
//! three sweeps.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::classify::ClassifierTrainConfig;
use crate::dbn::{DbnTrainSpec, DBN_INPUT, DBN_OUTPUT};
use crate::error::{Error, Result};
use crate::sigproc::{ModulationConfig, PskScheme, ALPHA_MAX, ALPHA_MIN, FRAME_LEN, OVERLAP_FRAC};

/// Classifier step size on standardized DBN features.
pub const CLASSIFIER_LR: f64 = 0.05;

/// Smallest accepted data set, in symbol periods.
pub const MIN_DATASET_PERIODS: usize = 100;

/// Distribution of the received carrier; the Doppler factor of a burst is
/// the drawn carrier over the nominal one.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CarrierDistribution {
    /// Every burst arrives at the nominal carrier.
    #[default]
    Fixed,
    /// Normal draw, redrawn until it falls inside [min_hz, max_hz].
    TruncatedNormal {
        mean_hz: f64,
        std_hz: f64,
        min_hz: f64,
        max_hz: f64,
    },
}

impl CarrierDistribution {
    /// 1 kHz ± 250 Hz, clipped to [0.5, 2] kHz.
    pub fn varied() -> Self {
        Self::TruncatedNormal {
            mean_hz: 1000.0,
            std_hz: 250.0,
            min_hz: 500.0,
            max_hz: 2000.0,
        }
    }

    pub fn validate(&self, nominal_hz: f64) -> Result<()> {
        if let Self::TruncatedNormal {
            mean_hz,
            std_hz,
            min_hz,
            max_hz,
        } = *self
        {
            let ok = [mean_hz, std_hz, min_hz, max_hz].iter().all(|v| v.is_finite())
                && std_hz >= 0.0
                && min_hz <= mean_hz
                && mean_hz <= max_hz;
            if !ok {
                return Err(Error::Config(format!("bad carrier distribution {self:?}")));
            }
            for f in [min_hz, max_hz] {
                let alpha = f / nominal_hz;
                if !(ALPHA_MIN..=ALPHA_MAX).contains(&alpha) {
                    return Err(Error::Config(format!(
                        "carrier {f} Hz gives Doppler factor {alpha} outside [{ALPHA_MIN}, {ALPHA_MAX}]"
                    )));
                }
            }
        }
        Ok(())
    }

    /// One carrier draw in Hz.
    pub fn sample<R: Rng>(&self, nominal_hz: f64, rng: &mut R) -> f64 {
        match *self {
            Self::Fixed => nominal_hz,
            Self::TruncatedNormal {
                mean_hz,
                std_hz,
                min_hz,
                max_hz,
            } => {
                if std_hz == 0.0 {
                    return mean_hz;
                }
                let normal = Normal::new(mean_hz, std_hz).expect("validated std");
                loop {
                    let f = normal.sample(rng);
                    if (min_hz..=max_hz).contains(&f) {
                        return f;
                    }
                }
            }
        }
    }
}

/// Train / validation / test proportions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self {
            train: 0.5,
            val: 0.2,
            test: 0.3,
        }
    }
}

impl SplitFractions {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|p| !(p.is_finite() && *p > 0.0)) || ((parts.iter().sum::<f64>()) - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "split fractions must be positive and sum to 1 (got {parts:?})"
            )));
        }
        Ok(())
    }

    /// Split sizes for `n` items: rounded train and validation shares, the
    /// test split takes the remainder.
    pub fn sizes(&self, n: usize) -> [usize; 3] {
        let train = (self.train * n as f64).round() as usize;
        let val = ((self.val * n as f64).round() as usize).min(n - train);
        [train, val, n - train - val]
    }
}

/// Numeric precision of the experiment pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

/// Eb/N0 levels the learned demodulators are trained on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainingPolicy {
    /// One model per scheme on the uniform mixture of all grid levels.
    #[default]
    Mixture,
    /// One model per scheme and grid level, tested at that level only.
    PerLevel,
}

/// Every knob of dataset generation, training and the sweeps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Schemes covered by the sweeps.
    pub schemes: Vec<PskScheme>,
    pub modulation: ModulationConfig,
    /// Eb/N0 grid in dB.
    pub ebn0_db: Vec<f64>,
    pub training_policy: TrainingPolicy,
    /// Carrier distribution of the varied-carrier channel.
    pub doppler_carrier: CarrierDistribution,
    /// Data set size in symbol periods (one labeled frame each).
    pub dataset_size_periods: usize,
    pub split: SplitFractions,
    /// Symbols per independently generated transmission.
    pub burst_symbols: usize,
    pub frame_len: usize,
    pub overlap_frac: f64,
    pub dbn_geometry: Vec<usize>,
    pub dbn: DbnTrainSpec,
    pub dense: ClassifierTrainConfig,
    pub conv: ClassifierTrainConfig,
    /// Training-set sizes for the accuracy curve; empty means 500·2^k up
    /// to the full training split.
    pub train_size_ladder: Vec<usize>,
    pub precision: Precision,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            schemes: vec![PskScheme::BPSK, PskScheme::QPSK, PskScheme::PSK8],
            modulation: ModulationConfig::default(),
            ebn0_db: vec![0.0, 2.0, 4.0, 6.0, 8.0],
            training_policy: TrainingPolicy::Mixture,
            doppler_carrier: CarrierDistribution::varied(),
            dataset_size_periods: 8000,
            split: SplitFractions::default(),
            burst_symbols: 32,
            frame_len: FRAME_LEN,
            overlap_frac: OVERLAP_FRAC,
            dbn_geometry: vec![DBN_INPUT, 500, DBN_OUTPUT],
            dbn: DbnTrainSpec::default(),
            dense: ClassifierTrainConfig {
                learning_rate: CLASSIFIER_LR,
                ..ClassifierTrainConfig::default()
            },
            conv: ClassifierTrainConfig {
                learning_rate: CLASSIFIER_LR,
                ..ClassifierTrainConfig::default()
            },
            train_size_ladder: Vec::new(),
            precision: Precision::F32,
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.modulation.validate()?;
        self.split.validate()?;
        self.dbn.validate()?;
        self.dense.validate()?;
        self.conv.validate()?;
        self.doppler_carrier.validate(self.modulation.carrier_hz)?;
        if self.schemes.is_empty() {
            return Err(Error::Config("scheme list is empty".into()));
        }
        if self.ebn0_db.is_empty() || self.ebn0_db.iter().any(|s| s.is_nan()) {
            return Err(Error::Config("Eb/N0 list must be non-empty and free of NaN".into()));
        }
        if self.dataset_size_periods < MIN_DATASET_PERIODS {
            return Err(Error::Config(format!(
                "dataset_size_periods must be at least {MIN_DATASET_PERIODS} (got {})",
                self.dataset_size_periods
            )));
        }
        if self.burst_symbols == 0 {
            return Err(Error::Config("burst_symbols must be positive".into()));
        }
        let hop = crate::sigproc::hop_for(self.frame_len, self.overlap_frac)?;
        if hop != self.modulation.samples_per_symbol {
            return Err(Error::Config(format!(
                "frame hop {hop} must equal samples_per_symbol {}",
                self.modulation.samples_per_symbol
            )));
        }
        if self.dbn_geometry.first() != Some(&self.frame_len) || self.dbn_geometry.last() != Some(&DBN_OUTPUT) {
            return Err(Error::Config(format!(
                "DBN geometry {:?} must run from {} to {DBN_OUTPUT}",
                self.dbn_geometry, self.frame_len
            )));
        }
        let train = self.split.sizes(self.dataset_size_periods)[0];
        if let Some(&big) = self.train_size_ladder.iter().find(|&&s| s == 0 || s > train) {
            return Err(Error::Config(format!(
                "training size {big} outside 1..={train} (the training split)"
            )));
        }
        Ok(())
    }

    /// Training-set sizes of the accuracy curve, ascending.
    pub fn ladder(&self) -> Vec<usize> {
        let train = self.split.sizes(self.dataset_size_periods)[0];
        let mut sizes = if self.train_size_ladder.is_empty() {
            let mut v: Vec<usize> = (0..)
                .map(|k| 500usize << k)
                .take_while(|&s| s < train)
                .collect();
            v.push(train);
            v
        } else {
            self.train_size_ladder.clone()
        };
        sizes.sort_unstable();
        sizes.dedup();
        sizes
    }
}
