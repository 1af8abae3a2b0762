//! Bit-error counting, BER curves, horizontal dB offsets between curves and
//! the CSV tables written by the experiments.

use std::fmt;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sigproc::{bit_errors, PskScheme};

/// Demodulation method of a curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "DBN-NN")]
    DbnNn,
    #[serde(rename = "DBN-CNN")]
    DbnCnn,
    #[serde(rename = "MLE")]
    Mle,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::DbnNn => "DBN-NN",
            Method::DbnCnn => "DBN-CNN",
            Method::Mle => "MLE",
        })
    }
}

/// Raw error counts at one Eb/N0 level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BerPoint {
    pub ebn0_db: f64,
    /// Per-sample SNR matching `ebn0_db`.
    pub snr_db: f64,
    pub bit_errors: u64,
    pub bits_tested: u64,
    pub ber: f64,
}

impl BerPoint {
    pub fn new(ebn0_db: f64, snr_db: f64, bit_errors: u64, bits_tested: u64) -> Result<Self> {
        if bits_tested == 0 || bit_errors > bits_tested {
            return Err(Error::InvalidInput(format!(
                "{bit_errors} errors out of {bits_tested} bits is not a valid count"
            )));
        }
        Ok(Self {
            ebn0_db,
            snr_db,
            bit_errors,
            bits_tested,
            ber: bit_errors as f64 / bits_tested as f64,
        })
    }

    /// BER with zero counts replaced by half an error, for log-domain use.
    pub fn floored_ber(&self) -> f64 {
        if self.bit_errors == 0 {
            0.5 / self.bits_tested as f64
        } else {
            self.ber
        }
    }
}

/// A BER-versus-Eb/N0 series of one method on one scheme and channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BerCurve {
    pub experiment: String,
    pub method: Method,
    pub scheme: PskScheme,
    pub channel: String,
    pub points: Vec<BerPoint>,
}

impl BerCurve {
    /// Sorts the points by Eb/N0.
    pub fn new(experiment: &str, method: Method, scheme: PskScheme, channel: &str, mut points: Vec<BerPoint>) -> Self {
        points.sort_by(|a, b| a.ebn0_db.total_cmp(&b.ebn0_db));
        Self {
            experiment: experiment.to_string(),
            method,
            scheme,
            channel: channel.to_string(),
            points,
        }
    }

    pub fn point_at(&self, ebn0_db: f64) -> Option<&BerPoint> {
        self.points.iter().find(|p| p.ebn0_db == ebn0_db)
    }
}

/// Bit errors between sent and decided symbol streams under the natural
/// binary map.
pub fn count_bit_errors(sent: &[usize], decided: &[usize]) -> Result<u64> {
    if sent.len() != decided.len() {
        return Err(Error::dim("decided symbols", sent.len(), decided.len()));
    }
    Ok(sent.iter().zip(decided).map(|(&a, &b)| bit_errors(a, b) as u64).sum())
}

/// Eb/N0 at which a curve given as (Eb/N0, BER) pairs reaches `ber`, by
/// linear interpolation of ln BER; outside the measured range the nearest
/// segment is extended.
pub fn ebn0_at_ber(points: &[(f64, f64)], ber: f64) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| x.is_finite() && *y > 0.0)
        .map(|&(x, y)| (x, y.ln()))
        .collect();
    if pts.len() < 2 || ber.is_nan() || ber <= 0.0 {
        return None;
    }
    let target = ber.ln();
    let seg = pts
        .windows(2)
        .position(|w| (w[0].1 - target) * (w[1].1 - target) <= 0.0 && w[0].1 != w[1].1)
        .unwrap_or(if target > pts[0].1 { 0 } else { pts.len() - 2 });
    let (a, b) = (pts[seg], pts[seg + 1]);
    if a.1 == b.1 {
        return None;
    }
    Some(a.0 + (target - a.1) * (b.0 - a.0) / (b.1 - a.1))
}

/// Horizontal distance, in dB, from `reference` to `curve` at the curve's
/// point `ebn0_db`: positive when `curve` needs more Eb/N0 than the
/// reference for the same BER.
pub fn horizontal_offset_db(curve: &BerCurve, reference: &[(f64, f64)], ebn0_db: f64) -> Option<f64> {
    let p = curve.point_at(ebn0_db)?;
    Some(ebn0_db - ebn0_at_ber(reference, p.floored_ber())?)
}

/// (Eb/N0, floored BER) pairs of a measured curve.
pub fn curve_pairs(curve: &BerCurve) -> Vec<(f64, f64)> {
    curve.points.iter().map(|p| (p.ebn0_db, p.floored_ber())).collect()
}

pub const CURVE_HEADER: [&str; 9] = [
    "experiment",
    "method",
    "scheme",
    "channel",
    "ebn0_db",
    "snr_db",
    "bit_errors",
    "bits_tested",
    "ber",
];

pub const ACCURACY_HEADER: [&str; 6] = ["method", "scheme", "train_periods", "correct", "tested", "accuracy"];

pub const SCATTER_HEADER: [&str; 5] = ["feature1", "feature2", "feature3", "symbol_label", "carrier_hz"];

/// Test accuracy of one method trained on `train_periods` frames.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccuracyPoint {
    pub method: Method,
    pub scheme: PskScheme,
    pub train_periods: usize,
    pub correct: u64,
    pub tested: u64,
    pub accuracy: f64,
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    csv::Writer::from_path(path).map_err(csv_err)
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Io(std::io::Error::other(format!("{other:?}"))),
    }
}

fn finish<W: Write>(mut w: csv::Writer<W>) -> Result<()> {
    w.flush()?;
    Ok(())
}

pub fn write_curves_csv(path: &Path, curves: &[BerCurve]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(CURVE_HEADER).map_err(csv_err)?;
    for c in curves {
        for p in &c.points {
            w.write_record([
                c.experiment.clone(),
                c.method.to_string(),
                c.scheme.order().to_string(),
                c.channel.clone(),
                p.ebn0_db.to_string(),
                p.snr_db.to_string(),
                p.bit_errors.to_string(),
                p.bits_tested.to_string(),
                p.ber.to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    finish(w)
}

pub fn write_accuracy_csv(path: &Path, rows: &[AccuracyPoint]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(ACCURACY_HEADER).map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.method.to_string(),
            r.scheme.order().to_string(),
            r.train_periods.to_string(),
            r.correct.to_string(),
            r.tested.to_string(),
            r.accuracy.to_string(),
        ])
        .map_err(csv_err)?;
    }
    finish(w)
}

/// One scatter row: the first three DBN features of a frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScatterRow {
    pub features: [f64; 3],
    pub symbol_label: usize,
    pub carrier_hz: f64,
}

pub fn write_scatter_csv(path: &Path, rows: &[ScatterRow]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(SCATTER_HEADER).map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.features[0].to_string(),
            r.features[1].to_string(),
            r.features[2].to_string(),
            r.symbol_label.to_string(),
            r.carrier_hz.to_string(),
        ])
        .map_err(csv_err)?;
    }
    finish(w)
}
