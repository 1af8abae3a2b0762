//! The three experiments: BER against Eb/N0 on a fixed carrier, BER under a
//! randomized carrier, and test accuracy against training-set size.

use std::path::Path;

use super::config::{CarrierDistribution, ExperimentConfig, TrainingPolicy};
use super::dataset::{generate_dataset, DatasetSplit};
use super::metrics::{write_scatter_csv, AccuracyPoint, BerCurve, BerPoint, Method, ScatterRow};
use super::pipeline::{ber_points, mle_decisions, symbol_accuracy, train_demodulators, ClassifierKind};
use crate::dbn::DbnModel;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::sigproc::PskScheme;

pub const EXP_BER: &str = "ber";
pub const EXP_DOPPLER: &str = "doppler";
pub const CHANNEL_FIXED: &str = "fixed-carrier";
pub const CHANNEL_VARIED: &str = "varied-carrier";

const BOTH: [ClassifierKind; 2] = [ClassifierKind::Nn, ClassifierKind::Cnn];

/// Which learned demodulators an experiment trains.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Methods {
    pub nn: bool,
    pub cnn: bool,
}

impl Default for Methods {
    fn default() -> Self {
        Self { nn: true, cnn: true }
    }
}

impl Methods {
    fn kinds(&self) -> Vec<ClassifierKind> {
        BOTH.iter()
            .copied()
            .filter(|k| match k {
                ClassifierKind::Nn => self.nn,
                ClassifierKind::Cnn => self.cnn,
            })
            .collect()
    }
}

/// Trains on `train_on` and measures BER on the test split of `eval_on`.
fn learned_curves<T: Scalar>(
    cfg: &ExperimentConfig,
    train_on: &DatasetSplit<T>,
    eval_on: &DatasetSplit<T>,
    methods: Methods,
    experiment: &str,
    channel: &str,
) -> Result<Vec<BerCurve>> {
    let kinds = methods.kinds();
    let mut points: Vec<Vec<BerPoint>> = vec![Vec::new(); kinds.len()];
    let runs = match cfg.training_policy {
        TrainingPolicy::Mixture => vec![(train_on.clone(), eval_on.test.clone())],
        TrainingPolicy::PerLevel => cfg
            .ebn0_db
            .iter()
            .map(|&e| {
                let sub = DatasetSplit {
                    train: train_on.train.at_ebn0(e)?,
                    val: train_on.val.at_ebn0(e)?,
                    ..train_on.clone()
                };
                Ok((sub, eval_on.test.at_ebn0(e)?))
            })
            .collect::<Result<Vec<_>>>()?,
    };
    for (split, test) in runs {
        for (i, (demod, _)) in train_demodulators(cfg, &split, &split.train, &kinds)?.into_iter().enumerate() {
            let decided = demod.demodulate(test.batch.frames.view())?;
            points[i].extend(ber_points(&test, &decided, eval_on.scheme, &eval_on.mod_cfg)?);
        }
    }
    Ok(kinds
        .iter()
        .zip(points)
        .map(|(k, pts)| BerCurve::new(experiment, k.method(), eval_on.scheme, channel, pts))
        .collect())
}

fn mle_curve<T: Scalar>(data: &DatasetSplit<T>, experiment: &str, channel: &str) -> Result<BerCurve> {
    let decided = mle_decisions(&data.test, data.scheme, &data.mod_cfg)?;
    let pts = ber_points(&data.test, &decided, data.scheme, &data.mod_cfg)?;
    Ok(BerCurve::new(experiment, Method::Mle, data.scheme, channel, pts))
}

/// BER of the learned demodulators and the correlator on the fixed-carrier
/// channel, one model per scheme trained on the whole Eb/N0 mixture.
pub fn run_ber_sweep<T: Scalar>(cfg: &ExperimentConfig, methods: Methods) -> Result<Vec<BerCurve>> {
    cfg.validate()?;
    let mut curves = Vec::new();
    for &scheme in &cfg.schemes {
        curves.extend(ber_sweep_scheme::<T>(cfg, scheme, methods)?);
    }
    Ok(curves)
}

pub fn ber_sweep_scheme<T: Scalar>(cfg: &ExperimentConfig, scheme: PskScheme, methods: Methods) -> Result<Vec<BerCurve>> {
    let data: DatasetSplit<T> = generate_dataset(cfg, scheme, CarrierDistribution::Fixed)?;
    let mut curves = learned_curves(cfg, &data, &data, methods, EXP_BER, CHANNEL_FIXED)?;
    curves.push(mle_curve(&data, EXP_BER, CHANNEL_FIXED)?);
    Ok(curves)
}

/// Learned demodulators trained and tested on the randomized carrier; the
/// correlator on the same symbols and noise without Doppler, and, as an
/// extension, with it.
pub fn run_doppler_sweep<T: Scalar>(cfg: &ExperimentConfig, methods: Methods) -> Result<Vec<BerCurve>> {
    cfg.validate()?;
    let mut curves = Vec::new();
    for &scheme in &cfg.schemes {
        curves.extend(doppler_sweep_scheme::<T>(cfg, scheme, methods)?);
    }
    Ok(curves)
}

pub fn doppler_sweep_scheme<T: Scalar>(cfg: &ExperimentConfig, scheme: PskScheme, methods: Methods) -> Result<Vec<BerCurve>> {
    let varied: DatasetSplit<T> = generate_dataset(cfg, scheme, cfg.doppler_carrier)?;
    let fixed: DatasetSplit<T> = generate_dataset(cfg, scheme, CarrierDistribution::Fixed)?;
    let mut curves = learned_curves(cfg, &varied, &varied, methods, EXP_DOPPLER, CHANNEL_VARIED)?;
    curves.push(mle_curve(&fixed, EXP_DOPPLER, CHANNEL_FIXED)?);
    curves.push(mle_curve(&varied, EXP_DOPPLER, CHANNEL_VARIED)?);
    Ok(curves)
}

/// Test accuracy of both pipelines retrained (DBN included) on nested
/// prefixes of the training split; the test split is shared by all sizes.
pub fn run_accuracy_vs_trainsize<T: Scalar>(cfg: &ExperimentConfig, methods: Methods) -> Result<Vec<AccuracyPoint>> {
    cfg.validate()?;
    let mut rows = Vec::new();
    for &scheme in &cfg.schemes {
        rows.extend(accuracy_scheme::<T>(cfg, scheme, methods)?);
    }
    Ok(rows)
}

pub fn accuracy_scheme<T: Scalar>(cfg: &ExperimentConfig, scheme: PskScheme, methods: Methods) -> Result<Vec<AccuracyPoint>> {
    let data: DatasetSplit<T> = generate_dataset(cfg, scheme, CarrierDistribution::Fixed)?;
    let mut rows = Vec::new();
    for size in cfg.ladder() {
        let subset = data.train.head(size)?;
        for (demod, _) in train_demodulators(cfg, &data, &subset, &methods.kinds())? {
            let decided = demod.demodulate(data.test.batch.frames.view())?;
            let (correct, tested) = symbol_accuracy(&data.test.batch.labels, &decided);
            rows.push(AccuracyPoint {
                method: demod.method(),
                scheme,
                train_periods: size,
                correct,
                tested,
                accuracy: correct as f64 / tested as f64,
            });
        }
    }
    Ok(rows)
}

/// First three DBN features of every test frame, with its label and
/// received carrier.
pub fn feature_scatter<T: Scalar>(dbn: &DbnModel<T>, data: &DatasetSplit<T>) -> Result<Vec<ScatterRow>> {
    if dbn.output_dim() < 3 {
        return Err(Error::Config("scatter export needs at least three DBN features".into()));
    }
    let feats = dbn.forward_batch(data.normalized(&data.test).view())?;
    Ok(feats
        .rows()
        .into_iter()
        .enumerate()
        .map(|(i, f)| ScatterRow {
            features: [f[0].as_f64(), f[1].as_f64(), f[2].as_f64()],
            symbol_label: data.test.batch.labels[i],
            carrier_hz: data.test.carrier_hz[i],
        })
        .collect())
}

/// Writes [`feature_scatter`] rows as CSV.
pub fn export_feature_scatter<T: Scalar>(dbn: &DbnModel<T>, data: &DatasetSplit<T>, path: &Path) -> Result<usize> {
    let rows = feature_scatter(dbn, data)?;
    write_scatter_csv(path, &rows)?;
    Ok(rows.len())
}
