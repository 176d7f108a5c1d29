//! Dataset synthesis and the on-disk container.
//!
//! Generation walks the (scheme × SNR) grid and synthesizes
//! `frames_per_cell` frames per cell, each from an independently
//! derived seed, so the result is byte-identical no matter how the
//! work is scheduled. The container is a little-endian binary file:
//!
//! ```text
//! magic  "MODRECDS"
//! u16    format major   (readers reject unknown majors)
//! u16    format minor
//! u32    header length; that many bytes of JSON GenConfig
//! u64    record count
//! records: label u8, snr_db f64, 128 I f64, 128 Q f64,
//!          then (if store_truth) the impairment trace block:
//!          cfo_hz[128], phase_rad[128], sro_hz[128],
//!          u32 tap count, taps (re, im) f64 pairs, noise_seed u64
//! footer "FTR0" + 32-byte sha-256 of every byte above
//! ```
//!
//! The sha-256 doubles as the dataset fingerprint: it is computed by
//! the same encoder whether the dataset is written to disk or only
//! held in memory, so a training run can pin exactly which data it
//! saw without requiring a file to exist.

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::Digest;

use crate::binio::{
    hex, read_f64, read_f64s, read_u16, read_u32, read_u64, write_f64s, HashingReader,
    HashingWriter,
};
use crate::channel::{apply_channel, ChannelParams, ImpairmentTrace};
use crate::error::{Error, Result};
use crate::frame::{ComplexSample, IQFrame, Scheme, FRAME_LEN};
use crate::modulation::{modulate, required_bits, DEFAULT_ROLLOFF, DEFAULT_SPS};
use crate::rng::{derive_seed, derived_rng, stream};

pub use crate::binio::FOOTER_MAGIC;

pub const DATASET_MAGIC: &[u8; 8] = b"MODRECDS";
pub const FORMAT_MAJOR: u16 = 1;
pub const FORMAT_MINOR: u16 = 0;

// ---------------------------------------------------------------------------
// Configuration

/// Full recipe for a synthetic dataset. Serialized verbatim into the
/// file header, so a loaded dataset knows exactly how it was made.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub schemes: Vec<Scheme>,
    pub snrs_db: Vec<f64>,
    pub frames_per_cell: usize,
    pub seed: u64,
    /// Retain per-frame impairment ground truth (diagnostics only —
    /// the trainer cannot see it even when present).
    pub store_truth: bool,
    pub sps: usize,
    pub rolloff: f64,
    pub channel: ChannelParams,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            schemes: Scheme::ALL.to_vec(),
            snrs_db: (-10..=9).map(|i| (2 * i) as f64).collect(),
            frames_per_cell: 100,
            seed: 0,
            store_truth: false,
            sps: DEFAULT_SPS,
            rolloff: DEFAULT_ROLLOFF,
            channel: ChannelParams::default(),
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.schemes.is_empty() {
            return Err(Error::InvalidParam("no schemes selected".into()));
        }
        let mut seen = [false; Scheme::ALL.len()];
        for s in &self.schemes {
            if std::mem::replace(&mut seen[s.index()], true) {
                return Err(Error::InvalidParam(format!("scheme {s} listed twice")));
            }
        }
        if self.snrs_db.is_empty() {
            return Err(Error::InvalidParam("empty SNR grid".into()));
        }
        if !self.snrs_db.iter().all(|s| s.is_finite()) {
            return Err(Error::InvalidParam("SNR grid must be finite".into()));
        }
        if self.frames_per_cell == 0 {
            return Err(Error::InvalidParam("frames_per_cell must be >= 1".into()));
        }
        if self.sps < 2 {
            return Err(Error::InvalidParam("sps must be >= 2".into()));
        }
        if !(self.rolloff > 0.0 && self.rolloff <= 1.0) {
            return Err(Error::InvalidParam("rolloff must be in (0, 1]".into()));
        }
        self.channel.validate()
    }

    pub fn total_frames(&self) -> usize {
        self.schemes.len() * self.snrs_db.len() * self.frames_per_cell
    }
}

// ---------------------------------------------------------------------------
// Records

/// One labeled, channel-distorted frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub scheme: Scheme,
    pub snr_db: f64,
    pub frame: IQFrame,
    /// Present only when the dataset was generated with truth storage.
    pub truth: Option<ImpairmentTrace>,
}

/// A generated or loaded dataset, with its content fingerprint.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub config: GenConfig,
    pub examples: Vec<Example>,
    fingerprint: String,
}

impl Dataset {
    /// Hex sha-256 over the encoded header and records.
    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    /// Per-(scheme, SNR) example counts in grid order.
    pub fn cell_counts(&self) -> Vec<(Scheme, f64, usize)> {
        let mut cells = Vec::new();
        for &scheme in &self.config.schemes {
            for &snr in &self.config.snrs_db {
                let count = self
                    .examples
                    .iter()
                    .filter(|e| e.scheme == scheme && e.snr_db == snr)
                    .count();
                cells.push((scheme, snr, count));
            }
        }
        cells
    }
}

// ---------------------------------------------------------------------------
// Generation

/// Synthesizes one frame: seed-derived payload bits, pulse shaping,
/// then the full impairment chain at the cell's SNR.
fn synthesize(config: &GenConfig, scheme: Scheme, snr_db: f64, frame_seed: u64) -> Result<Example> {
    let mut bits_rng = derived_rng(frame_seed, &[stream::BITS]);
    let n_bits = required_bits(scheme, config.sps);
    let bits: Vec<bool> = (0..n_bits).map(|_| rand::Rng::gen(&mut bits_rng)).collect();
    let clean = modulate(
        scheme,
        &bits,
        config.sps,
        config.rolloff,
        config.channel.sample_rate,
        frame_seed,
    )?;
    let mut params = config.channel.clone();
    params.snr_db = snr_db;
    let (distorted, truth) = apply_channel(&clean, &params, frame_seed)?;
    Ok(Example {
        scheme,
        snr_db,
        frame: distorted,
        truth: config.store_truth.then_some(truth),
    })
}

/// Generates the full grid. Each frame's seed is derived from the
/// master seed and the frame's global index alone, so the output is
/// independent of thread count and schedule.
pub fn generate(config: &GenConfig) -> Result<Dataset> {
    config.validate()?;
    let cells: Vec<(Scheme, f64)> = config
        .schemes
        .iter()
        .flat_map(|&s| config.snrs_db.iter().map(move |&snr| (s, snr)))
        .collect();
    let per_cell = config.frames_per_cell;
    let examples: Vec<Example> = cells
        .par_iter()
        .enumerate()
        .flat_map_iter(|(cell_idx, &(scheme, snr))| {
            (0..per_cell).map(move |j| {
                let global = cell_idx * per_cell + j;
                let frame_seed = derive_seed(config.seed, &[global as u64]);
                synthesize(config, scheme, snr, frame_seed)
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let fingerprint = fingerprint_of(config, &examples)?;
    Ok(Dataset {
        config: config.clone(),
        examples,
        fingerprint,
    })
}

// ---------------------------------------------------------------------------
// Encoding

/// Encodes header and records (everything the fingerprint covers).
fn encode_body(config: &GenConfig, examples: &[Example], w: &mut impl Write) -> Result<()> {
    w.write_all(DATASET_MAGIC)?;
    w.write_all(&FORMAT_MAJOR.to_le_bytes())?;
    w.write_all(&FORMAT_MINOR.to_le_bytes())?;
    let header = serde_json::to_vec(config)?;
    w.write_all(&(header.len() as u32).to_le_bytes())?;
    w.write_all(&header)?;
    w.write_all(&(examples.len() as u64).to_le_bytes())?;
    for ex in examples {
        w.write_all(&[ex.scheme.index() as u8])?;
        w.write_all(&ex.snr_db.to_le_bytes())?;
        write_f64s(w, ex.frame.samples().iter().map(|s| s.re))?;
        write_f64s(w, ex.frame.samples().iter().map(|s| s.im))?;
        if config.store_truth {
            let truth = ex.truth.as_ref().ok_or_else(|| {
                Error::InvalidParam("truth-storing dataset holds a truthless example".into())
            })?;
            write_f64s(w, truth.cfo_hz.iter().copied())?;
            write_f64s(w, truth.phase_rad.iter().copied())?;
            write_f64s(w, truth.sro_hz.iter().copied())?;
            w.write_all(&(truth.fading_taps.len() as u32).to_le_bytes())?;
            for tap in &truth.fading_taps {
                w.write_all(&tap.re.to_le_bytes())?;
                w.write_all(&tap.im.to_le_bytes())?;
            }
            w.write_all(&truth.noise_seed.to_le_bytes())?;
        }
    }
    Ok(())
}

/// Fingerprint of a dataset without touching the filesystem.
fn fingerprint_of(config: &GenConfig, examples: &[Example]) -> Result<String> {
    let mut w = HashingWriter::new(std::io::sink());
    encode_body(config, examples, &mut w)?;
    Ok(hex(&w.hasher.finalize()))
}

impl Dataset {
    /// Writes the container, footer hash included.
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut w = HashingWriter::new(BufWriter::new(file));
        encode_body(&self.config, &self.examples, &mut w)?;
        let digest = w.hasher.finalize();
        let mut inner = w.inner;
        inner.write_all(FOOTER_MAGIC)?;
        inner.write_all(&digest)?;
        inner.flush()?;
        Ok(())
    }

    /// Reads and verifies a container: magic, version, record count,
    /// and the footer hash must all line up.
    pub fn load(path: &Path) -> Result<Dataset> {
        let show = path.display().to_string();
        let file = std::fs::File::open(path)?;
        let mut r = HashingReader::new(BufReader::new(file));

        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != DATASET_MAGIC {
            return Err(Error::Format {
                path: show,
                detail: "bad magic - not a dataset file".into(),
            });
        }
        let major = read_u16(&mut r)?;
        let minor = read_u16(&mut r)?;
        if major != FORMAT_MAJOR {
            return Err(Error::UnsupportedVersion {
                kind: "dataset",
                major,
                minor,
                supported: FORMAT_MAJOR,
            });
        }
        let header_len = read_u32(&mut r)? as usize;
        let mut header = vec![0u8; header_len];
        r.read_exact(&mut header)?;
        let config: GenConfig = serde_json::from_slice(&header)?;
        let count = read_u64(&mut r)? as usize;
        let expected = config.total_frames();
        if count != expected {
            return Err(Error::Format {
                path: show,
                detail: format!("header promises {expected} records, file has {count}"),
            });
        }
        let mut examples = Vec::with_capacity(count);
        for _ in 0..count {
            let mut label = [0u8; 1];
            r.read_exact(&mut label)?;
            let scheme = Scheme::from_index(label[0] as usize).map_err(|_| Error::Format {
                path: show.clone(),
                detail: format!("record carries unknown label {}", label[0]),
            })?;
            let snr_db = read_f64(&mut r)?;
            let mut re = [0.0; FRAME_LEN];
            let mut im = [0.0; FRAME_LEN];
            read_f64s(&mut r, &mut re)?;
            read_f64s(&mut r, &mut im)?;
            let samples: Vec<ComplexSample> = re
                .iter()
                .zip(&im)
                .map(|(&i, &q)| ComplexSample::new(i, q))
                .collect();
            let frame = IQFrame::new(samples, config.channel.sample_rate).map_err(|e| {
                Error::Format {
                    path: show.clone(),
                    detail: format!("record holds an invalid frame: {e}"),
                }
            })?;
            let truth = if config.store_truth {
                let mut cfo_hz = vec![0.0; FRAME_LEN];
                let mut phase_rad = vec![0.0; FRAME_LEN];
                let mut sro_hz = vec![0.0; FRAME_LEN];
                read_f64s(&mut r, &mut cfo_hz)?;
                read_f64s(&mut r, &mut phase_rad)?;
                read_f64s(&mut r, &mut sro_hz)?;
                let n_taps = read_u32(&mut r)? as usize;
                if n_taps > 1024 {
                    return Err(Error::Format {
                        path: show.clone(),
                        detail: format!("implausible fading tap count {n_taps}"),
                    });
                }
                let mut fading_taps = Vec::with_capacity(n_taps);
                for _ in 0..n_taps {
                    let re = read_f64(&mut r)?;
                    let im = read_f64(&mut r)?;
                    fading_taps.push(ComplexSample::new(re, im));
                }
                let noise_seed = read_u64(&mut r)?;
                Some(ImpairmentTrace {
                    cfo_hz,
                    phase_rad,
                    sro_hz,
                    fading_taps,
                    noise_seed,
                })
            } else {
                None
            };
            examples.push(Example {
                scheme,
                snr_db,
                frame,
                truth,
            });
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
        Ok(Dataset {
            config,
            examples,
            fingerprint: actual,
        })
    }
}

// ---------------------------------------------------------------------------
