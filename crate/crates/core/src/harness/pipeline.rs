//! End-to-end demodulators: normalization, DBN feature extraction and a
//! classifier, plus training and BER evaluation on data set splits.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::dataset::{DatasetSplit, SplitPart};
use super::metrics::{count_bit_errors, BerPoint, Method};
use crate::baseline::{MleConfig, MleDetector};
use crate::classify::{Classifier, ConvNet, DenseNet, LabeledSet, TrainHistory};
use crate::dbn::{train_dbn_greedy, DbnModel, DbnTrainSpec, NormStats};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::seed::derive_path;
use crate::sigproc::{ModulationConfig, PskScheme};

const TRAIN_STREAM: u64 = 0x7a1;

/// Which classifier sits on top of the DBN.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassifierKind {
    Nn,
    Cnn,
}

impl ClassifierKind {
    pub fn method(self) -> Method {
        match self {
            ClassifierKind::Nn => Method::DbnNn,
            ClassifierKind::Cnn => Method::DbnCnn,
        }
    }
}

/// A trained classifier of either kind.
#[derive(Debug, Clone, PartialEq)]
pub enum ClassifierModel<T> {
    Dense(DenseNet<T>),
    Conv(ConvNet<T>),
}

impl<T: Scalar> ClassifierModel<T> {
    pub fn kind(&self) -> ClassifierKind {
        match self {
            ClassifierModel::Dense(_) => ClassifierKind::Nn,
            ClassifierModel::Conv(_) => ClassifierKind::Cnn,
        }
    }

    pub fn num_classes(&self) -> usize {
        match self {
            ClassifierModel::Dense(n) => n.num_classes(),
            ClassifierModel::Conv(n) => n.num_classes(),
        }
    }

    pub fn predict_labels(&self, features: ArrayView2<T>) -> Result<Vec<usize>> {
        match self {
            ClassifierModel::Dense(n) => n.predict_labels(features),
            ClassifierModel::Conv(n) => n.predict_labels(features),
        }
    }
}

/// Standard deviations below this are treated as this value.
pub const SCALE_FLOOR: f64 = 1e-6;

/// Per-feature standardization fitted on training features.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureScaler<T> {
    pub mean: Array1<T>,
    /// Reciprocal standard deviation.
    pub inv_std: Array1<T>,
}

impl<T: Scalar> FeatureScaler<T> {
    pub fn fit(features: ArrayView2<T>) -> Result<Self> {
        if features.nrows() == 0 {
            return Err(Error::InvalidInput("cannot fit a scaler on zero rows".into()));
        }
        let mean = features.mean_axis(Axis(0)).expect("non-empty");
        let inv_std = features
            .std_axis(Axis(0), T::zero())
            .mapv(|s| T::one() / s.max(T::of(SCALE_FLOOR)));
        Ok(Self { mean, inv_std })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            mean: Array1::zeros(dim),
            inv_std: Array1::ones(dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, features: ArrayView2<T>) -> Result<Array2<T>> {
        if features.ncols() != self.dim() {
            return Err(Error::dim("scaled feature width", self.dim(), features.ncols()));
        }
        Ok((&features - &self.mean) * &self.inv_std)
    }
}

/// Frame-in, symbol-out demodulator.
#[derive(Debug, Clone, PartialEq)]
pub struct Demodulator<T> {
    pub scheme: PskScheme,
    pub mod_cfg: ModulationConfig,
    pub norm: NormStats<T>,
    pub dbn: DbnModel<T>,
    pub scaler: FeatureScaler<T>,
    pub classifier: ClassifierModel<T>,
}

impl<T: Scalar> Demodulator<T> {
    pub fn method(&self) -> Method {
        self.classifier.kind().method()
    }

    /// Standardized 784-wide feature rows of raw received frames.
    pub fn features(&self, frames: ArrayView2<T>) -> Result<Array2<T>> {
        self.scaler
            .apply(self.dbn.extract_features_batch(self.norm.apply(frames).view())?.view())
    }

    /// Decided symbol of every raw received frame.
    pub fn demodulate(&self, frames: ArrayView2<T>) -> Result<Vec<usize>> {
        let mut out = Vec::with_capacity(frames.nrows());
        for chunk in frames.axis_chunks_iter(ndarray::Axis(0), 512) {
            out.extend(self.classifier.predict_labels(self.features(chunk)?.view())?);
        }
        Ok(out)
    }
}

/// Seeds and hyperparameters of one training run, with its outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub seed: u64,
    pub train_frames: usize,
    pub dbn_geometry: Vec<usize>,
    pub dbn: DbnTrainSpec,
    pub classifier_kind: ClassifierKind,
    pub classifier: crate::classify::ClassifierTrainConfig,
    pub dbn_reconstruction_error: f64,
    pub history: TrainHistory,
}

/// Stream seed of one training component.
fn component_seed(cfg: &ExperimentConfig, scheme: PskScheme, component: u64) -> u64 {
    derive_path(cfg.seed, &[TRAIN_STREAM, scheme.order() as u64, component])
}

/// Trains the DBN on the normalized `train` frames.
pub fn train_feature_extractor<T: Scalar>(
    cfg: &ExperimentConfig,
    split: &DatasetSplit<T>,
    train: &SplitPart<T>,
) -> Result<DbnModel<T>> {
    let spec = DbnTrainSpec {
        rng_seed: component_seed(cfg, split.scheme, 0),
        ..cfg.dbn
    };
    train_dbn_greedy(split.normalized(train).view(), &cfg.dbn_geometry, &spec)
}

/// Trains the classifiers named in `kinds` on DBN features of `train`,
/// early-stopping on the validation split. All kinds share one DBN.
pub fn train_demodulators<T: Scalar>(
    cfg: &ExperimentConfig,
    split: &DatasetSplit<T>,
    train: &SplitPart<T>,
    kinds: &[ClassifierKind],
) -> Result<Vec<(Demodulator<T>, TrainingMetadata)>> {
    if train.is_empty() {
        return Err(Error::InvalidInput("empty training set".into()));
    }
    let dbn = train_feature_extractor(cfg, split, train)?;
    let train_norm = split.normalized(train);
    let recon = dbn.layers[0].reconstruction_error(train_norm.view())?;
    let raw_x = dbn.extract_features_batch(train_norm.view())?;
    let scaler = FeatureScaler::fit(raw_x.view())?;
    let train_x = scaler.apply(raw_x.view())?;
    let val_x = scaler.apply(dbn.extract_features_batch(split.normalized(&split.val).view())?.view())?;
    let train_set = LabeledSet::new(train_x.view(), &train.batch.labels)?;
    let val_set = LabeledSet::new(val_x.view(), &split.val.batch.labels)?;
    let m = split.scheme.order();

    let mut out = Vec::with_capacity(kinds.len());
    for &kind in kinds {
        let (classifier, tcfg, history) = match kind {
            ClassifierKind::Nn => {
                let tcfg = crate::classify::ClassifierTrainConfig {
                    rng_seed: component_seed(cfg, split.scheme, 2),
                    ..cfg.dense
                };
                let mut net = DenseNet::standard(m, component_seed(cfg, split.scheme, 1))?;
                let h = crate::classify::train_dense(&mut net, train_set, val_set, &tcfg)?;
                (ClassifierModel::Dense(net), tcfg, h)
            }
            ClassifierKind::Cnn => {
                let tcfg = crate::classify::ClassifierTrainConfig {
                    rng_seed: component_seed(cfg, split.scheme, 4),
                    ..cfg.conv
                };
                let mut net = ConvNet::standard(m, component_seed(cfg, split.scheme, 3))?;
                let h = crate::classify::train_conv(&mut net, train_set, val_set, &tcfg)?;
                (ClassifierModel::Conv(net), tcfg, h)
            }
        };
        let meta = TrainingMetadata {
            seed: cfg.seed,
            train_frames: train.len(),
            dbn_geometry: dbn.geometry(),
            dbn: DbnTrainSpec {
                rng_seed: component_seed(cfg, split.scheme, 0),
                ..cfg.dbn
            },
            classifier_kind: kind,
            classifier: tcfg,
            dbn_reconstruction_error: recon,
            history,
        };
        let demod = Demodulator {
            scheme: split.scheme,
            mod_cfg: split.mod_cfg,
            norm: split.norm,
            dbn: dbn.clone(),
            scaler: scaler.clone(),
            classifier,
        };
        out.push((demod, meta));
    }
    Ok(out)
}

/// Coherent-correlator decisions on the first symbol period of each frame.
pub fn mle_decisions<T: Scalar>(part: &SplitPart<T>, scheme: PskScheme, mod_cfg: &ModulationConfig) -> Result<Vec<usize>> {
    let spb = mod_cfg.samples_per_symbol;
    if part.batch.frame_len < spb {
        return Err(Error::Config(format!(
            "frames of {} samples cannot hold a {spb}-sample symbol",
            part.batch.frame_len
        )));
    }
    let det = MleDetector::new(&MleConfig {
        scheme,
        mod_cfg: *mod_cfg,
    })?;
    part.batch
        .frames
        .rows()
        .into_iter()
        .map(|row| {
            let window: Vec<T> = row.iter().take(spb).copied().collect();
            det.decide(&window)
        })
        .collect()
}

/// Bit-error counts per Eb/N0 level of `part`.
pub fn ber_points<T: Scalar>(
    part: &SplitPart<T>,
    decided: &[usize],
    scheme: PskScheme,
    mod_cfg: &ModulationConfig,
) -> Result<Vec<BerPoint>> {
    if decided.len() != part.len() {
        return Err(Error::dim("decisions per frame", part.len(), decided.len()));
    }
    let mut groups: BTreeMap<u64, (f64, Vec<usize>, Vec<usize>)> = BTreeMap::new();
    for ((&e, &label), &d) in part.ebn0_db.iter().zip(&part.batch.labels).zip(decided) {
        let g = groups.entry(e.to_bits()).or_insert((e, Vec::new(), Vec::new()));
        g.1.push(label);
        g.2.push(d);
    }
    let k = scheme.bits_per_symbol() as u64;
    groups
        .into_values()
        .map(|(e, sent, dec)| {
            let errs = count_bit_errors(&sent, &dec)?;
            BerPoint::new(e, mod_cfg.snr_db_for_ebn0(e, scheme), errs, sent.len() as u64 * k)
        })
        .collect()
}

/// Fraction of frames whose decision matches the label.
pub fn symbol_accuracy(labels: &[usize], decided: &[usize]) -> (u64, u64) {
    let hits = labels.iter().zip(decided).filter(|(a, b)| a == b).count();
    (hits as u64, labels.len() as u64)
}
