//! Labeled frame data sets: random symbol bursts sent through the channel,
//! framed, labeled and split into contiguous train / validation / test
//! blocks.

use ndarray::{s, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{CarrierDistribution, ExperimentConfig};
use crate::dbn::NormStats;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::seed::{derive_path, derive_seed};
use crate::sigproc::{add_awgn, apply_doppler, frame_symbol_aligned, hop_for, modulate_psk, FrameBatch, ModulationConfig, PskScheme};

const DATASET_STREAM: u64 = 0xda7a;
const SYMBOL_STREAM: u64 = 0;
const CARRIER_STREAM: u64 = 1;
const NOISE_STREAM: u64 = 2;

/// Frames of one split with the channel conditions each was received under.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitPart<T> {
    /// Received (unnormalized) frames and their symbol labels.
    pub batch: FrameBatch<T>,
    pub ebn0_db: Vec<f64>,
    pub carrier_hz: Vec<f64>,
}

impl<T: Scalar> SplitPart<T> {
    pub fn new(batch: FrameBatch<T>, ebn0_db: Vec<f64>, carrier_hz: Vec<f64>) -> Result<Self> {
        if ebn0_db.len() != batch.len() || carrier_hz.len() != batch.len() {
            return Err(Error::dim("per-frame metadata", batch.len(), ebn0_db.len().min(carrier_hz.len())));
        }
        Ok(Self {
            batch,
            ebn0_db,
            carrier_hz,
        })
    }

    pub fn len(&self) -> usize {
        self.batch.len()
    }

    pub fn is_empty(&self) -> bool {
        self.batch.is_empty()
    }

    /// The first `n` frames.
    pub fn head(&self, n: usize) -> Result<Self> {
        if n > self.len() {
            return Err(Error::InvalidInput(format!(
                "subset of {n} frames requested from a split of {}",
                self.len()
            )));
        }
        let batch = FrameBatch::new(
            self.batch.frames.slice(s![..n, ..]).to_owned(),
            self.batch.labels[..n].to_vec(),
            self.batch.hop,
        )?;
        Self::new(batch, self.ebn0_db[..n].to_vec(), self.carrier_hz[..n].to_vec())
    }

    /// Frames received at one Eb/N0 level.
    pub fn at_ebn0(&self, ebn0_db: f64) -> Result<Self> {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| self.ebn0_db[i] == ebn0_db).collect();
        let batch = FrameBatch::new(
            self.batch.frames.select(Axis(0), &idx),
            idx.iter().map(|&i| self.batch.labels[i]).collect(),
            self.batch.hop,
        )?;
        Self::new(
            batch,
            idx.iter().map(|&i| self.ebn0_db[i]).collect(),
            idx.iter().map(|&i| self.carrier_hz[i]).collect(),
        )
    }

    fn concat(parts: Vec<Self>, frame_len: usize, hop: usize) -> Result<Self> {
        let n: usize = parts.iter().map(|p| p.len()).sum();
        let mut frames = Array2::zeros((n, frame_len));
        let (mut labels, mut ebn0, mut carrier) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
        let mut row = 0;
        for p in parts {
            frames.slice_mut(s![row..row + p.len(), ..]).assign(&p.batch.frames);
            row += p.len();
            labels.extend(p.batch.labels);
            ebn0.extend(p.ebn0_db);
            carrier.extend(p.carrier_hz);
        }
        Self::new(FrameBatch::new(frames, labels, hop)?, ebn0, carrier)
    }
}

/// Train, validation and test frames plus the normalization fitted on the
/// training block.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit<T> {
    pub scheme: PskScheme,
    pub mod_cfg: ModulationConfig,
    pub train: SplitPart<T>,
    pub val: SplitPart<T>,
    pub test: SplitPart<T>,
    pub norm: NormStats<T>,
}

impl<T: Scalar> DatasetSplit<T> {
    pub fn parts(&self) -> [&SplitPart<T>; 3] {
        [&self.train, &self.val, &self.test]
    }

    /// Normalized frames of a split.
    pub fn normalized(&self, part: &SplitPart<T>) -> Array2<T> {
        self.norm.apply(part.batch.frames.view())
    }
}

/// One transmission: `symbols` labeled frames received at one carrier and
/// one noise level.
pub fn generate_burst<T: Scalar>(
    scheme: PskScheme,
    mod_cfg: &ModulationConfig,
    frame_len: usize,
    symbols: usize,
    ebn0_db: f64,
    carrier: CarrierDistribution,
    seed: u64,
) -> Result<SplitPart<T>> {
    let spb = mod_cfg.samples_per_symbol;
    let mut carrier_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, CARRIER_STREAM));
    let carrier_hz = carrier.sample(mod_cfg.carrier_hz, &mut carrier_rng);
    let alpha = carrier_hz / mod_cfg.carrier_hz;
    // trailing symbols so the last labeled frame sits inside real signal
    let lookahead = (frame_len as f64 * alpha / spb as f64).ceil() as usize + 2;
    let mut sym_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, SYMBOL_STREAM));
    let stream: Vec<usize> = (0..symbols + lookahead)
        .map(|_| sym_rng.random_range(0..scheme.order()))
        .collect();
    let clean = modulate_psk::<T>(&stream, scheme, mod_cfg)?;
    let scaled = if alpha == 1.0 { clean } else { apply_doppler(&clean, alpha)? };
    let snr_db = mod_cfg.snr_db_for_ebn0(ebn0_db, scheme);
    let rx = add_awgn(&scaled, snr_db, derive_seed(seed, NOISE_STREAM))?;
    let frames = frame_symbol_aligned(&rx, symbols, spb, alpha, frame_len)?;
    SplitPart::new(
        FrameBatch::new(frames, stream[..symbols].to_vec(), spb)?,
        vec![ebn0_db; symbols],
        vec![carrier_hz; symbols],
    )
}

/// Generates the data set of one scheme. Bursts are produced in order and
/// the first blocks form the training split, then validation, then test, so
/// no two splits share a transmission. Burst `b` uses the Eb/N0 level
/// `grid[b mod len]`. Normalization is fitted on the training block only.
pub fn generate_dataset<T: Scalar>(
    cfg: &ExperimentConfig,
    scheme: PskScheme,
    carrier: CarrierDistribution,
) -> Result<DatasetSplit<T>> {
    cfg.validate()?;
    carrier.validate(cfg.modulation.carrier_hz)?;
    let hop = hop_for(cfg.frame_len, cfg.overlap_frac)?;
    let base = derive_path(cfg.seed, &[DATASET_STREAM, scheme.order() as u64]);
    let sizes = cfg.split.sizes(cfg.dataset_size_periods);
    let mut burst = 0u64;
    let mut splits = Vec::with_capacity(3);
    for size in sizes {
        let mut parts = Vec::new();
        let mut remaining = size;
        while remaining > 0 {
            let n = remaining.min(cfg.burst_symbols);
            let ebn0 = cfg.ebn0_db[burst as usize % cfg.ebn0_db.len()];
            parts.push(generate_burst(
                scheme,
                &cfg.modulation,
                cfg.frame_len,
                n,
                ebn0,
                carrier,
                derive_seed(base, burst),
            )?);
            remaining -= n;
            burst += 1;
        }
        splits.push(SplitPart::concat(parts, cfg.frame_len, hop)?);
    }
    let test = splits.pop().expect("three splits");
    let val = splits.pop().expect("three splits");
    let train = splits.pop().expect("three splits");
    let norm = NormStats::fit(train.batch.frames.view())?;
    Ok(DatasetSplit {
        scheme,
        mod_cfg: cfg.modulation,
        train,
        val,
        test,
        norm,
    })
}
