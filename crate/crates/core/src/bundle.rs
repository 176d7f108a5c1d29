//! On-disk container for trained models.
//!
//! A bundle file carries everything [`crate::trainer::ModelBundle`]
//! holds: the training recipe, the class order, the training curve,
//! the dataset fingerprint the run pinned, and every parameter tensor.
//! Layout:
//!
//! ```text
//! magic  "MODRECMB"
//! u16    format major   (readers reject unknown majors)
//! u16    format minor
//! u32    header length; that many bytes of JSON (configs, curve,
//!        fingerprint, tensor manifest)
//! blocks raw little-endian f64 tensors, in manifest order
//! footer "FTR0" + 32-byte sha-256 of every byte above
//! ```
//!
//! Tensor order is the parameter-visit order — the same order the
//! optimizer keys its moments by — so a round trip is bit-exact and
//! needs no per-tensor framing beyond the manifest.

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::Digest;

use crate::binio::{hex, read_f64s, read_u16, read_u32, HashingReader, HashingWriter, FOOTER_MAGIC};
use crate::classifier::{build_cnn, CnnConfig};
use crate::correction::CorrectionModule;
use crate::error::{Error, Result};
use crate::frame::Scheme;
use crate::nn::ParamSet;
use crate::rng::{derived_rng, stream};
use crate::trainer::{CascadeModel, EpochStats, ModelBundle, TrainConfig};

pub const BUNDLE_MAGIC: &[u8; 8] = b"MODRECMB";
pub const FORMAT_MAJOR: u16 = 1;
pub const FORMAT_MINOR: u16 = 0;

// ---------------------------------------------------------------------------

/// One tensor's name and element count, in storage order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    len: usize,
}

/// Everything but the raw tensors, serialized as the JSON header.
#[derive(Debug, Serialize, Deserialize)]
struct Header {
    train_config: TrainConfig,
    cnn_config: CnnConfig,
    dataset_fingerprint: String,
    schemes: Vec<Scheme>,
    curve: Vec<EpochStats>,
    best_epoch: usize,
    manifest: Vec<TensorEntry>,
}

fn manifest_of(model: &mut CascadeModel) -> Vec<TensorEntry> {
    let mut manifest = Vec::new();
    model.visit(&mut |name, data, _| {
        manifest.push(TensorEntry {
            name: name.to_string(),
            len: data.len(),
        });
    });
    manifest
}

/// Writes a bundle file. Takes the bundle mutably because the
/// parameter-visit API — the single source of tensor order — is a
/// mutable traversal; the bundle's contents are not changed.
pub fn save_bundle(bundle: &mut ModelBundle, path: &Path) -> Result<()> {
    let header = Header {
        train_config: bundle.train_config.clone(),
        cnn_config: bundle.model.cnn.config().clone(),
        dataset_fingerprint: bundle.dataset_fingerprint.clone(),
        schemes: bundle.schemes.clone(),
        curve: bundle.curve.clone(),
        best_epoch: bundle.best_epoch,
        manifest: manifest_of(&mut bundle.model),
    };
    let file = std::fs::File::create(path)?;
    let mut w = HashingWriter::new(BufWriter::new(file));
    w.write_all(BUNDLE_MAGIC)?;
    w.write_all(&FORMAT_MAJOR.to_le_bytes())?;
    w.write_all(&FORMAT_MINOR.to_le_bytes())?;
    let header_bytes = serde_json::to_vec(&header)?;
    w.write_all(&(header_bytes.len() as u32).to_le_bytes())?;
    w.write_all(&header_bytes)?;
    let mut io_err = None;
    bundle.model.visit(&mut |_, data, _| {
        if io_err.is_none() {
            if let Err(e) = crate::binio::write_f64s(&mut w, data.iter().copied()) {
                io_err = Some(e);
            }
        }
    });
    if let Some(e) = io_err {
        return Err(e.into());
    }
    let digest = w.hasher.finalize();
    let mut inner = w.inner;
    inner.write_all(FOOTER_MAGIC)?;
    inner.write_all(&digest)?;
    inner.flush()?;
    Ok(())
}

/// Reads and verifies a bundle: magic, version, manifest-vs-model
/// agreement, and the footer hash must all line up.
pub fn load_bundle(path: &Path) -> Result<ModelBundle> {
    let show = path.display().to_string();
    let file = std::fs::File::open(path)?;
    let mut r = HashingReader::new(BufReader::new(file));

    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != BUNDLE_MAGIC {
        return Err(Error::Format {
            path: show,
            detail: "bad magic - not a model bundle".into(),
        });
    }
    let major = read_u16(&mut r)?;
    let minor = read_u16(&mut r)?;
    if major != FORMAT_MAJOR {
        return Err(Error::UnsupportedVersion {
            kind: "bundle",
            major,
            minor,
            supported: FORMAT_MAJOR,
        });
    }
    let header_len = read_u32(&mut r)? as usize;
    let mut header_bytes = vec![0u8; header_len];
    r.read_exact(&mut header_bytes)?;
    let header: Header = serde_json::from_slice(&header_bytes)?;

    // Rebuild the architecture the header describes, then overwrite
    // every tensor from the stored blocks.
    let mut init_rng = derived_rng(0, &[stream::INIT]);
    let correction = CorrectionModule::new(
        header.cnn_config.input_len,
        header.train_config.k,
        header.train_config.ablation,
        &mut init_rng,
    );
    let cnn = build_cnn(&header.cnn_config, 0)?;
    let mut model = CascadeModel { correction, cnn };

    let expected = manifest_of(&mut model);
    if expected != header.manifest {
        return Err(Error::Format {
            path: show,
            detail: format!(
                "manifest does not match the declared architecture \
                 (stored {} tensors, architecture has {})",
                header.manifest.len(),
                expected.len()
            ),
        });
    }
    let mut read_err: Option<Error> = None;
    model.visit(&mut |_, data, _| {
        if read_err.is_none() {
            if let Err(e) = read_f64s(&mut r, data) {
                read_err = Some(e);
            }
        }
    });
    if let Some(e) = read_err {
        return Err(e);
    }

    let actual = hex(&r.hasher.clone().finalize());
    let mut footer = [0u8; 4];
    r.read_exact(&mut footer)?;
    if &footer != FOOTER_MAGIC {
        return Err(Error::Format {
            path: show,
            detail: "missing footer - file truncated?".into(),
        });
    }
    let mut stored_digest = [0u8; 32];
    r.read_exact(&mut stored_digest)?;
    let stored = hex(&stored_digest);
    if stored != actual {
        return Err(Error::Integrity {
            path: show,
            stored,
            actual,
        });
    }

    Ok(ModelBundle {
        train_config: header.train_config,
        dataset_fingerprint: header.dataset_fingerprint,
        schemes: header.schemes,
        curve: header.curve,
        best_epoch: header.best_epoch,
        model,
    })
}

// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correction::Ablation;
    use crate::dataset::{generate, GenConfig};
    use crate::trainer::train;

    fn trained_bundle(ablation: Ablation) -> ModelBundle {
        let config = GenConfig {
            schemes: vec![Scheme::Bpsk, Scheme::Qpsk],
            snrs_db: vec![10.0],
            frames_per_cell: 10,
            seed: 40,
            store_truth: false,
            ..GenConfig::default()
        };
        let dataset = generate(&config).unwrap();
        let train_config = TrainConfig {
            epochs: 2,
            batch_size: 8,
            ablation,
            ..TrainConfig::default()
        };
        train(&train_config, &dataset).unwrap()
    }

    fn params_of(model: &mut CascadeModel) -> Vec<f64> {
        let mut all = Vec::new();
        model.visit(&mut |_, d, _| all.extend_from_slice(d));
        all
    }

    #[test]
    fn test_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.mrb");
        let mut bundle = trained_bundle(Ablation::Both);
        save_bundle(&mut bundle, &path).unwrap();
        let mut loaded = load_bundle(&path).unwrap();
        assert_eq!(loaded.train_config, bundle.train_config);
        assert_eq!(loaded.schemes, bundle.schemes);
        assert_eq!(loaded.curve, bundle.curve);
        assert_eq!(loaded.best_epoch, bundle.best_epoch);
        assert_eq!(
            params_of(&mut loaded.model),
            params_of(&mut bundle.model),
            "every tensor must survive the round trip bit-exactly"
        );
        assert_eq!(loaded.dataset_fingerprint, bundle.dataset_fingerprint);
    }

    #[test]
    fn test_round_trip_preserves_predictions() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.mrb");
        let mut bundle = trained_bundle(Ablation::Both);
        save_bundle(&mut bundle, &path).unwrap();
        let mut loaded = load_bundle(&path).unwrap();
        let iq: Vec<f64> = (0..2 * crate::FRAME_LEN)
            .map(|i| ((i * 37 % 100) as f64) / 100.0 - 0.5)
            .collect();
        assert_eq!(
            bundle.model.predict(&iq),
            loaded.model.predict(&iq),
            "a loaded model must classify exactly like the saved one"
        );
    }

    #[test]
    fn test_bypass_bundle_stores_no_estimator_tensors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("baseline.mrb");
        let mut bundle = trained_bundle(Ablation::None);
        save_bundle(&mut bundle, &path).unwrap();
        let loaded = load_bundle(&path).unwrap();
        assert!(
            loaded.model.correction.estimator.is_none(),
            "bypass bundles must rebuild without an estimator"
        );
        let manifest = manifest_of(&mut bundle.model);
        assert!(
            manifest.iter().all(|t| !t.name.starts_with("fcn.")),
            "bypass manifests must carry no estimator tensors"
        );
    }

    #[test]
    fn test_body_corruption_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.mrb");
        let mut bundle = trained_bundle(Ablation::Both);
        save_bundle(&mut bundle, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x01;
        std::fs::write(&path, &bytes).unwrap();
        match load_bundle(&path) {
            Err(Error::Integrity { .. }) => {}
            other => panic!("flipped body byte must fail integrity, got {other:?}"),
        }
    }

    #[test]
    fn test_unknown_major_version_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.mrb");
        let mut bundle = trained_bundle(Ablation::Both);
        save_bundle(&mut bundle, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[8] = 99; // major version low byte
        std::fs::write(&path, &bytes).unwrap();
        match load_bundle(&path) {
            Err(Error::UnsupportedVersion { kind, major, .. }) => {
                assert_eq!(kind, "bundle");
                assert_eq!(major, 99);
            }
            other => panic!("future major version must be rejected, got {other:?}"),
        }
    }

    #[test]
    fn test_truncated_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.mrb");
        let mut bundle = trained_bundle(Ablation::Both);
        save_bundle(&mut bundle, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 40]).unwrap();
        assert!(
            load_bundle(&path).is_err(),
            "a truncated bundle must not load"
        );
    }

    #[test]
    fn test_wrong_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("not-a-bundle.bin");
        std::fs::write(&path, b"DEFINITELY NOT A BUNDLE FILE").unwrap();
        match load_bundle(&path) {
            Err(Error::Format { detail, .. }) => {
                assert!(detail.contains("magic"), "error must name the magic check")
            }
            other => panic!("foreign file must be rejected, got {other:?}"),
        }
    }
}
