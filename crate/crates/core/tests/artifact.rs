use ndarray::Array1;
use proptest::prelude::*;
use swac_demod::classify::{ClassifierTrainConfig, ConvGeometry, ConvNet, ConvStage, DenseNet, TrainHistory};
use swac_demod::dbn::{DbnModel, DbnTrainSpec, NormStats};
use swac_demod::harness::artifact::{decode_model, encode_model};
use swac_demod::harness::{ClassifierKind, ClassifierModel, Demodulator, FeatureScaler, ModelArtifact, TrainingMetadata};
use swac_demod::{Error, ModulationConfig, PskScheme};

fn artifact(seed: u64, order: usize, hidden: usize, conv: bool) -> ModelArtifact<f32> {
    let classifier = if conv {
        let geometry = ConvGeometry {
            input_side: 28,
            padded_side: 28,
            stages: vec![ConvStage { kernel: 5, maps: 2, pool: Some(4) }],
            dense_widths: vec![6],
            num_classes: order,
        };
        ClassifierModel::Conv(ConvNet::new(geometry, seed).unwrap())
    } else {
        ClassifierModel::Dense(DenseNet::new(&[784, hidden, order], seed).unwrap())
    };
    ModelArtifact::new(
        Demodulator {
            scheme: PskScheme::new(order).unwrap(),
            mod_cfg: ModulationConfig::default(),
            norm: NormStats { min: -3.0, max: 2.5, source_crc: seed as u32 },
            dbn: DbnModel::random(&[120, hidden, 784], seed).unwrap(),
            scaler: FeatureScaler {
                mean: Array1::from_elem(784, 0.5),
                inv_std: Array1::from_elem(784, 1.0 + seed as f32 % 7.0),
            },
            classifier,
        },
        TrainingMetadata {
            seed,
            train_frames: hidden * 10,
            dbn_geometry: vec![120, hidden, 784],
            dbn: DbnTrainSpec { rng_seed: seed, ..DbnTrainSpec::default() },
            classifier_kind: if conv { ClassifierKind::Cnn } else { ClassifierKind::Nn },
            classifier: ClassifierTrainConfig::default(),
            dbn_reconstruction_error: 1.0 / (1.0 + seed as f64),
            history: TrainHistory {
                train_loss: vec![0.7, 0.1 / 3.0],
                val_loss: vec![0.69, 0.2 / 3.0],
                best_epoch: 1,
                best_val_loss: 0.2 / 3.0,
                stopped_early: false,
            },
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn round_trip_is_exact(seed in any::<u64>(), order in prop::sample::select(vec![2usize, 4, 8, 16]), hidden in 1usize..12, conv in any::<bool>()) {
        let a = artifact(seed, order, hidden, conv);
        let bytes = encode_model(&a).unwrap();
        prop_assert_eq!(decode_model::<f32>(&bytes).unwrap(), a);
    }

    #[test]
    fn damaged_files_are_rejected(seed in any::<u64>(), cut in 0.0f64..1.0, pos in 0.0f64..1.0, bit in 0u8..8) {
        let bytes = encode_model(&artifact(seed, 4, 3, false)).unwrap();
        let n = ((bytes.len() - 1) as f64 * cut) as usize;
        prop_assert!(decode_model::<f32>(&bytes[..n]).is_err());
        let mut flipped = bytes.clone();
        let i = ((bytes.len() - 1) as f64 * pos) as usize;
        flipped[i] ^= 1 << bit;
        prop_assert!(decode_model::<f32>(&flipped).is_err());
    }
}

#[test]
fn truncation_past_header_is_a_checksum_failure() {
    let bytes = encode_model(&artifact(1, 2, 4, false)).unwrap();
    assert!(matches!(decode_model::<f32>(&bytes[..bytes.len() / 2]), Err(Error::Checksum { .. })));
    assert!(matches!(decode_model::<f32>(&bytes[..5]), Err(Error::Truncated(_))));
}

#[test]
fn newer_version_is_a_version_mismatch() {
    let mut bytes = encode_model(&artifact(1, 2, 4, true)).unwrap();
    bytes[8..12].copy_from_slice(&2u32.to_le_bytes());
    assert!(matches!(
        decode_model::<f32>(&bytes),
        Err(Error::VersionMismatch { found: 2, expected: 1 })
    ));
}
