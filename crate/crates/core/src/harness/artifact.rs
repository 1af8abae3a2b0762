//! Little-endian binary containers for trained demodulators and generated
//! data sets.
//!
//! Layout: 8 magic bytes, `u32` format version, `u8` scalar width, then
//! sections of `[u32 tag][u64 length][payload]`, then a CRC-32 of every
//! preceding byte.

use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::dataset::{DatasetSplit, SplitPart};
use super::pipeline::{ClassifierModel, Demodulator, FeatureScaler, TrainingMetadata};
use crate::classify::{Classifier, ConvGeometry, ConvNet, DenseNet};
use crate::dbn::{DbnModel, NormStats, RbmLayer};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::sigproc::{FrameBatch, ModulationConfig, PskScheme};

pub const MODEL_MAGIC: &[u8; 8] = b"SWACDM01";
pub const DATASET_MAGIC: &[u8; 8] = b"SWACDS01";
pub const FORMAT_VERSION: u32 = 1;

const HEADER_LEN: usize = 8 + 4 + 1;
const TRAILER_LEN: usize = 4;

const SEC_META: u32 = 1;
const SEC_NORM: u32 = 2;
const SEC_DBN: u32 = 3;
const SEC_DENSE: u32 = 4;
const SEC_CONV: u32 = 5;
const SEC_SCALER: u32 = 6;
const SEC_TRAIN: u32 = 10;
const SEC_VAL: u32 = 11;
const SEC_TEST: u32 = 12;

/// A trained demodulator with the record of how it was trained.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelArtifact<T> {
    pub version: u32,
    pub demodulator: Demodulator<T>,
    pub metadata: TrainingMetadata,
}

impl<T: Scalar> ModelArtifact<T> {
    pub fn new(demodulator: Demodulator<T>, metadata: TrainingMetadata) -> Self {
        Self {
            version: FORMAT_VERSION,
            demodulator,
            metadata,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct ModelMeta {
    scheme: PskScheme,
    mod_cfg: ModulationConfig,
    training: TrainingMetadata,
}

#[derive(Serialize, Deserialize)]
struct DatasetMeta {
    scheme: PskScheme,
    mod_cfg: ModulationConfig,
}

struct Encoder {
    buf: Vec<u8>,
}

impl Encoder {
    fn new(magic: &[u8; 8], tag: u8) -> Self {
        let mut buf = magic.to_vec();
        buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        buf.push(tag);
        Self { buf }
    }

    fn section(&mut self, tag: u32, payload: &[u8]) {
        self.buf.extend_from_slice(&tag.to_le_bytes());
        self.buf.extend_from_slice(&(payload.len() as u64).to_le_bytes());
        self.buf.extend_from_slice(payload);
    }

    fn finish(mut self) -> Vec<u8> {
        let crc = crc32fast::hash(&self.buf);
        self.buf.extend_from_slice(&crc.to_le_bytes());
        self.buf
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_scalars<'a, T: Scalar>(out: &mut Vec<u8>, values: impl IntoIterator<Item = &'a T>) {
    for &v in values {
        v.write_le(out);
    }
}

fn put_f64s(out: &mut Vec<u8>, values: &[f64]) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl<'a> Cursor<'a> {
    fn new(bytes: &'a [u8], what: &'static str) -> Self {
        Self { bytes, pos: 0, what }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Truncated(format!(
                "{} needs {n} more bytes at offset {}, {} left",
                self.what,
                self.pos,
                self.bytes.len() - self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn len(&mut self) -> Result<usize> {
        let v = self.u64()?;
        usize::try_from(v)
            .ok()
            .filter(|&n| n <= self.bytes.len())
            .ok_or_else(|| Error::Malformed(format!("{}: implausible length {v}", self.what)))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| self.overflow())?)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
    }

    fn scalars<T: Scalar>(&mut self, n: usize) -> Result<Vec<T>> {
        let raw = self.take(n.checked_mul(T::BYTES).ok_or_else(|| self.overflow())?)?;
        Ok(raw.chunks_exact(T::BYTES).map(T::read_le).collect())
    }

    fn fill<T: Scalar>(&mut self, dst: &mut [T]) -> Result<()> {
        let vals = self.scalars::<T>(dst.len())?;
        dst.copy_from_slice(&vals);
        Ok(())
    }

    fn matrix<T: Scalar>(&mut self, rows: usize, cols: usize) -> Result<Array2<T>> {
        let n = rows.checked_mul(cols).ok_or_else(|| self.overflow())?;
        Array2::from_shape_vec((rows, cols), self.scalars(n)?).map_err(|e| Error::Malformed(e.to_string()))
    }

    fn overflow(&self) -> Error {
        Error::Malformed(format!("{}: size overflow", self.what))
    }

    fn done(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::Malformed(format!(
                "{}: {} trailing bytes",
                self.what,
                self.bytes.len() - self.pos
            )));
        }
        Ok(())
    }
}

type Sections<'a> = Vec<(u32, &'a [u8])>;

/// Scalar width tag of a container, after checking magic, version and CRC.
fn open<'a>(bytes: &'a [u8], magic: &'static [u8; 8], what: &'static str) -> Result<(u8, Sections<'a>)> {
    if bytes.len() < HEADER_LEN + TRAILER_LEN {
        return Err(Error::Truncated(format!("{} bytes is shorter than a {what} header", bytes.len())));
    }
    if &bytes[..8] != magic {
        return Err(Error::BadMagic { expected: what });
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let body = &bytes[..bytes.len() - TRAILER_LEN];
    let stored = u32::from_le_bytes(bytes[bytes.len() - TRAILER_LEN..].try_into().expect("4 bytes"));
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(Error::Checksum { stored, computed });
    }
    let tag = bytes[12];
    let mut cur = Cursor::new(&body[HEADER_LEN..], what);
    let mut sections = Vec::new();
    while cur.pos < cur.bytes.len() {
        let id = cur.u32()?;
        let len = cur.len()?;
        sections.push((id, cur.take(len)?));
    }
    Ok((tag, sections))
}

fn check_tag<T: Scalar>(tag: u8) -> Result<()> {
    if tag != T::TAG {
        return Err(Error::ScalarMismatch {
            found: tag,
            expected: T::TAG,
        });
    }
    Ok(())
}

fn section<'a>(sections: &[(u32, &'a [u8])], id: u32, what: &'static str) -> Result<Cursor<'a>> {
    sections
        .iter()
        .find(|(t, _)| *t == id)
        .map(|(_, b)| Cursor::new(b, what))
        .ok_or_else(|| Error::Malformed(format!("missing {what} section")))
}

fn json<S: Serialize>(v: &S) -> Result<Vec<u8>> {
    serde_json::to_vec(v).map_err(|e| Error::Malformed(e.to_string()))
}

fn from_json<'a, D: Deserialize<'a>>(bytes: &'a [u8]) -> Result<D> {
    serde_json::from_slice(bytes).map_err(|e| Error::Malformed(format!("metadata: {e}")))
}

fn encode_norm<T: Scalar>(n: &NormStats<T>) -> Vec<u8> {
    let mut out = Vec::new();
    put_scalars(&mut out, [&n.min, &n.max]);
    put_u32(&mut out, n.source_crc);
    out
}

fn decode_norm<T: Scalar>(mut c: Cursor<'_>) -> Result<NormStats<T>> {
    let v = c.scalars::<T>(2)?;
    let source_crc = c.u32()?;
    c.done()?;
    if !(v[0].is_finite() && v[1].is_finite() && v[1] > v[0]) {
        return Err(Error::Malformed("normalization range".into()));
    }
    Ok(NormStats {
        min: v[0],
        max: v[1],
        source_crc,
    })
}

fn encode_dbn<T: Scalar>(m: &DbnModel<T>) -> Vec<u8> {
    let mut out = Vec::new();
    put_u32(&mut out, m.layers.len() as u32);
    for l in &m.layers {
        put_u64(&mut out, l.num_visible() as u64);
        put_u64(&mut out, l.num_hidden() as u64);
        put_scalars(&mut out, l.weights.iter());
        put_scalars(&mut out, l.visible_bias.iter());
        put_scalars(&mut out, l.hidden_bias.iter());
    }
    out
}

fn decode_dbn<T: Scalar>(mut c: Cursor<'_>) -> Result<DbnModel<T>> {
    let n = c.u32()? as usize;
    let mut layers = Vec::with_capacity(n.min(64));
    for _ in 0..n {
        let (v, h) = (c.len()?, c.len()?);
        let w = c.matrix(h, v)?;
        let b = c.scalars(v)?.into();
        let hb = c.scalars(h)?.into();
        layers.push(RbmLayer::new(w, b, hb).map_err(|e| Error::Malformed(e.to_string()))?);
    }
    c.done()?;
    DbnModel::new(layers).map_err(|e| Error::Malformed(e.to_string()))
}

fn encode_scaler<T: Scalar>(s: &FeatureScaler<T>) -> Vec<u8> {
    let mut out = Vec::new();
    put_u64(&mut out, s.dim() as u64);
    put_scalars(&mut out, s.mean.iter());
    put_scalars(&mut out, s.inv_std.iter());
    out
}

fn decode_scaler<T: Scalar>(mut c: Cursor<'_>) -> Result<FeatureScaler<T>> {
    let n = c.len()?;
    let mean = c.scalars::<T>(n)?;
    let inv_std = c.scalars::<T>(n)?;
    c.done()?;
    if mean.iter().chain(&inv_std).any(|v| !v.is_finite()) {
        return Err(Error::Malformed("non-finite feature scaler".into()));
    }
    Ok(FeatureScaler {
        mean: mean.into(),
        inv_std: inv_std.into(),
    })
}

fn encode_params<T: Scalar, C: Classifier<T>>(out: &mut Vec<u8>, net: &C) {
    for s in net.param_slices() {
        put_scalars(out, s.iter());
    }
}

fn decode_params<T: Scalar, C: Classifier<T>>(c: &mut Cursor<'_>, net: &mut C) -> Result<()> {
    for s in net.param_slices_mut() {
        c.fill(s)?;
    }
    Ok(())
}

fn encode_classifier<T: Scalar>(m: &ClassifierModel<T>) -> Result<(u32, Vec<u8>)> {
    let mut out = Vec::new();
    match m {
        ClassifierModel::Dense(net) => {
            let widths = net.widths();
            put_u32(&mut out, widths.len() as u32);
            widths.iter().for_each(|&w| put_u64(&mut out, w as u64));
            encode_params(&mut out, net);
            Ok((SEC_DENSE, out))
        }
        ClassifierModel::Conv(net) => {
            let g = json(&net.geometry)?;
            put_u64(&mut out, g.len() as u64);
            out.extend_from_slice(&g);
            encode_params(&mut out, net);
            Ok((SEC_CONV, out))
        }
    }
}

fn decode_classifier<T: Scalar>(sections: &[(u32, &[u8])]) -> Result<ClassifierModel<T>> {
    let malformed = |e: Error| Error::Malformed(e.to_string());
    if let Ok(mut c) = section(sections, SEC_DENSE, "dense classifier") {
        let n = c.u32()? as usize;
        let widths = (0..n).map(|_| c.len()).collect::<Result<Vec<_>>>()?;
        let mut net = DenseNet::new(&widths, 0).map_err(malformed)?;
        decode_params(&mut c, &mut net)?;
        c.done()?;
        return Ok(ClassifierModel::Dense(net));
    }
    let mut c = section(sections, SEC_CONV, "classifier")?;
    let len = c.len()?;
    let geometry: ConvGeometry = from_json(c.take(len)?)?;
    let mut net = ConvNet::new(geometry, 0).map_err(malformed)?;
    decode_params(&mut c, &mut net)?;
    c.done()?;
    Ok(ClassifierModel::Conv(net))
}

fn check_finite<T: Scalar, C: Classifier<T>>(net: &C) -> Result<()> {
    if net.param_slices().iter().all(|s| s.iter().all(|v| v.is_finite())) {
        Ok(())
    } else {
        Err(Error::Malformed("non-finite classifier parameter".into()))
    }
}

/// Serializes a model artifact to bytes.
pub fn encode_model<T: Scalar>(a: &ModelArtifact<T>) -> Result<Vec<u8>> {
    let d = &a.demodulator;
    let mut enc = Encoder::new(MODEL_MAGIC, T::TAG);
    enc.section(
        SEC_META,
        &json(&ModelMeta {
            scheme: d.scheme,
            mod_cfg: d.mod_cfg,
            training: a.metadata.clone(),
        })?,
    );
    enc.section(SEC_NORM, &encode_norm(&d.norm));
    enc.section(SEC_DBN, &encode_dbn(&d.dbn));
    enc.section(SEC_SCALER, &encode_scaler(&d.scaler));
    let (tag, payload) = encode_classifier(&d.classifier)?;
    enc.section(tag, &payload);
    Ok(enc.finish())
}

/// Parses a model artifact. Checks run in order: size, magic, version,
/// checksum, scalar width, then section contents.
pub fn decode_model<T: Scalar>(bytes: &[u8]) -> Result<ModelArtifact<T>> {
    let (tag, sections) = open(bytes, MODEL_MAGIC, "model artifact")?;
    check_tag::<T>(tag)?;
    let meta: ModelMeta = from_json(section(&sections, SEC_META, "metadata")?.bytes)?;
    let norm = decode_norm(section(&sections, SEC_NORM, "normalization")?)?;
    let dbn = decode_dbn(section(&sections, SEC_DBN, "DBN")?)?;
    let scaler = decode_scaler(section(&sections, SEC_SCALER, "feature scaler")?)?;
    if scaler.dim() != dbn.output_dim() {
        return Err(Error::Malformed(format!(
            "scaler width {} for {} DBN features",
            scaler.dim(),
            dbn.output_dim()
        )));
    }
    let classifier = decode_classifier(&sections)?;
    match &classifier {
        ClassifierModel::Dense(n) => check_finite(n)?,
        ClassifierModel::Conv(n) => check_finite(n)?,
    }
    if classifier.num_classes() != meta.scheme.order() {
        return Err(Error::Malformed(format!(
            "classifier has {} outputs for {}",
            classifier.num_classes(),
            meta.scheme
        )));
    }
    Ok(ModelArtifact {
        version: FORMAT_VERSION,
        demodulator: Demodulator {
            scheme: meta.scheme,
            mod_cfg: meta.mod_cfg,
            norm,
            dbn,
            scaler,
            classifier,
        },
        metadata: meta.training,
    })
}

pub fn save_model<T: Scalar>(a: &ModelArtifact<T>, path: &Path) -> Result<()> {
    std::fs::write(path, encode_model(a)?)?;
    Ok(())
}

pub fn load_model<T: Scalar>(path: &Path) -> Result<ModelArtifact<T>> {
    decode_model(&std::fs::read(path)?)
}

/// Scalar width (4 or 8) stored in a model or data set file header.
pub fn stored_scalar_width(path: &Path) -> Result<u8> {
    let bytes = std::fs::read(path)?;
    if bytes.len() < HEADER_LEN {
        return Err(Error::Truncated(format!("{} bytes is shorter than a header", bytes.len())));
    }
    if &bytes[..8] != MODEL_MAGIC && &bytes[..8] != DATASET_MAGIC {
        return Err(Error::BadMagic {
            expected: "model artifact or data set",
        });
    }
    Ok(bytes[12])
}

fn encode_part<T: Scalar>(p: &SplitPart<T>) -> Vec<u8> {
    let mut out = Vec::new();
    put_u64(&mut out, p.len() as u64);
    put_u64(&mut out, p.batch.frame_len as u64);
    put_u64(&mut out, p.batch.hop as u64);
    put_scalars(&mut out, p.batch.frames.iter());
    p.batch.labels.iter().for_each(|&l| put_u32(&mut out, l as u32));
    put_f64s(&mut out, &p.ebn0_db);
    put_f64s(&mut out, &p.carrier_hz);
    out
}

fn decode_part<T: Scalar>(mut c: Cursor<'_>, order: usize) -> Result<SplitPart<T>> {
    let (n, len, hop) = (c.len()?, c.len()?, c.len()?);
    let frames = c.matrix(n, len)?;
    let labels = (0..n).map(|_| c.u32().map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
    if labels.iter().any(|&l| l >= order) {
        return Err(Error::Malformed("label outside the symbol alphabet".into()));
    }
    let ebn0 = c.f64s(n)?;
    let carrier = c.f64s(n)?;
    c.done()?;
    let batch = FrameBatch::new(frames, labels, hop).map_err(|e| Error::Malformed(e.to_string()))?;
    SplitPart::new(batch, ebn0, carrier).map_err(|e| Error::Malformed(e.to_string()))
}

pub fn encode_dataset<T: Scalar>(d: &DatasetSplit<T>) -> Result<Vec<u8>> {
    let mut enc = Encoder::new(DATASET_MAGIC, T::TAG);
    enc.section(
        SEC_META,
        &json(&DatasetMeta {
            scheme: d.scheme,
            mod_cfg: d.mod_cfg,
        })?,
    );
    enc.section(SEC_NORM, &encode_norm(&d.norm));
    for (tag, part) in [(SEC_TRAIN, &d.train), (SEC_VAL, &d.val), (SEC_TEST, &d.test)] {
        enc.section(tag, &encode_part(part));
    }
    Ok(enc.finish())
}

pub fn decode_dataset<T: Scalar>(bytes: &[u8]) -> Result<DatasetSplit<T>> {
    let (tag, sections) = open(bytes, DATASET_MAGIC, "data set")?;
    check_tag::<T>(tag)?;
    let meta: DatasetMeta = from_json(section(&sections, SEC_META, "metadata")?.bytes)?;
    let m = meta.scheme.order();
    Ok(DatasetSplit {
        scheme: meta.scheme,
        mod_cfg: meta.mod_cfg,
        norm: decode_norm(section(&sections, SEC_NORM, "normalization")?)?,
        train: decode_part(section(&sections, SEC_TRAIN, "training split")?, m)?,
        val: decode_part(section(&sections, SEC_VAL, "validation split")?, m)?,
        test: decode_part(section(&sections, SEC_TEST, "test split")?, m)?,
    })
}

pub fn save_dataset<T: Scalar>(d: &DatasetSplit<T>, path: &Path) -> Result<()> {
    std::fs::write(path, encode_dataset(d)?)?;
    Ok(())
}

pub fn load_dataset<T: Scalar>(path: &Path) -> Result<DatasetSplit<T>> {
    decode_dataset(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::{ClassifierTrainConfig, TrainHistory};
    use crate::dbn::DbnTrainSpec;
    use crate::harness::config::{CarrierDistribution, ExperimentConfig};
    use crate::harness::dataset::generate_dataset;
    use crate::harness::pipeline::ClassifierKind;
    use ndarray::Array1;

    fn artifact(conv: bool) -> ModelArtifact<f64> {
        let scheme = PskScheme::QPSK;
        let classifier = if conv {
            ClassifierModel::Conv(ConvNet::standard(4, 3).unwrap())
        } else {
            ClassifierModel::Dense(DenseNet::standard(4, 3).unwrap())
        };
        ModelArtifact::new(
            Demodulator {
                scheme,
                mod_cfg: ModulationConfig::default(),
                norm: NormStats {
                    min: -2.5,
                    max: 2.25,
                    source_crc: 0xdead_beef,
                },
                dbn: DbnModel::random(&[120, 30, 784], 4).unwrap(),
                scaler: FeatureScaler {
                    mean: Array1::linspace(0.0, 1.0, 784),
                    inv_std: Array1::from_elem(784, 3.5),
                },
                classifier,
            },
            TrainingMetadata {
                seed: 9,
                train_frames: 100,
                dbn_geometry: vec![120, 30, 784],
                dbn: DbnTrainSpec::default(),
                classifier_kind: if conv { ClassifierKind::Cnn } else { ClassifierKind::Nn },
                classifier: ClassifierTrainConfig::default(),
                dbn_reconstruction_error: 0.125,
                history: TrainHistory::default(),
            },
        )
    }

    #[test]
    fn model_round_trip() {
        for conv in [false, true] {
            let a = artifact(conv);
            let bytes = encode_model(&a).unwrap();
            assert_eq!(&bytes[..8], MODEL_MAGIC);
            assert_eq!(decode_model::<f64>(&bytes).unwrap(), a);
        }
    }

    #[test]
    fn rejections_are_distinct() {
        let bytes = encode_model(&artifact(false)).unwrap();
        assert!(matches!(decode_model::<f64>(&bytes[..bytes.len() - 10]), Err(Error::Checksum { .. })));
        assert!(matches!(decode_model::<f64>(&bytes[..6]), Err(Error::Truncated(_))));
        let mut old = bytes.clone();
        old[8] = 0;
        assert!(matches!(
            decode_model::<f64>(&old),
            Err(Error::VersionMismatch { found: 0, expected: 1 })
        ));
        let mut flipped = bytes.clone();
        flipped[200] ^= 0x10;
        assert!(matches!(decode_model::<f64>(&flipped), Err(Error::Checksum { .. })));
        let mut magic = bytes.clone();
        magic[0] = b'X';
        assert!(matches!(decode_model::<f64>(&magic), Err(Error::BadMagic { .. })));
        assert!(matches!(decode_model::<f32>(&bytes), Err(Error::ScalarMismatch { found: 8, expected: 4 })));
        assert!(matches!(decode_dataset::<f64>(&bytes), Err(Error::BadMagic { .. })));
    }

    #[test]
    fn dataset_round_trip() {
        let cfg = ExperimentConfig {
            dataset_size_periods: 100,
            ..ExperimentConfig::default()
        };
        let d: DatasetSplit<f32> = generate_dataset(&cfg, PskScheme::PSK8, CarrierDistribution::varied()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.bin");
        save_dataset(&d, &path).unwrap();
        assert_eq!(stored_scalar_width(&path).unwrap(), 4);
        assert_eq!(load_dataset::<f32>(&path).unwrap(), d);
    }
}
