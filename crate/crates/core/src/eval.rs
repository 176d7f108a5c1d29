//! Evaluation artifacts: accuracy-vs-SNR tables, confusion matrices,
//! correction histograms, ablation gain tables, and their CSV/JSON
//! exports.
//!
//! `evaluate` re-derives the bundle's test split from the seeds stored
//! in its training config, so the caller hands over the *whole*
//! dataset and membership stays consistent with training by
//! construction. The dataset fingerprint is checked first; evaluating
//! against data the model never pinned is refused unless explicitly
//! forced.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::binio::hex;
use crate::channel::ImpairmentTrace;
use crate::classifier::SnrRegime;
use crate::correction::{derotate, Ablation};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::frame::{IQFrame, Scheme};
use crate::trainer::{argmax, split_dataset, ModelBundle};

/// Reference standard deviation (Hz) that a well-converged frequency
/// estimator's corrections are expected to approach on this channel
/// profile; reports print the measured value alongside it.
pub const OMEGA_STD_REFERENCE_HZ: f64 = 0.01131;

/// Bin count for correction histograms.
pub const HISTOGRAM_BINS: usize = 61;

// ---------------------------------------------------------------------------
// Confusion matrix

/// Prediction-vs-truth counts; `counts[i][j]` = examples of true class
/// `i` predicted as class `j`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub n_classes: usize,
    pub counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    pub fn new(n_classes: usize) -> Self {
        Self {
            n_classes,
            counts: vec![vec![0; n_classes]; n_classes],
        }
    }

    /// Builds a matrix from parallel prediction/label sequences.
    pub fn from_pairs(predictions: &[usize], labels: &[usize], n_classes: usize) -> Result<Self> {
        if predictions.len() != labels.len() {
            return Err(Error::InvalidParam(format!(
                "got {} predictions for {} labels",
                predictions.len(),
                labels.len()
            )));
        }
        let mut m = Self::new(n_classes);
        for (&pred, &truth) in predictions.iter().zip(labels) {
            m.record(truth, pred)?;
        }
        Ok(m)
    }

    pub fn record(&mut self, truth: usize, pred: usize) -> Result<()> {
        if truth >= self.n_classes || pred >= self.n_classes {
            return Err(Error::InvalidParam(format!(
                "class pair ({truth}, {pred}) out of range for {} classes",
                self.n_classes
            )));
        }
        self.counts[truth][pred] += 1;
        Ok(())
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn accuracy(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        let hits: usize = (0..self.n_classes).map(|i| self.counts[i][i]).sum();
        hits as f64 / total as f64
    }

    /// Rows rescaled to sum to 1; empty rows stay all-zero.
    pub fn row_normalized(&self) -> Vec<Vec<f64>> {
        self.counts
            .iter()
            .map(|row| {
                let total: usize = row.iter().sum();
                if total == 0 {
                    vec![0.0; self.n_classes]
                } else {
                    row.iter().map(|&c| c as f64 / total as f64).collect()
                }
            })
            .collect()
    }

    /// Fraction of the two classes' examples that land in each other's
    /// column — the named cross-confusion diagnostic.
    pub fn cross_fraction(&self, a: usize, b: usize) -> f64 {
        let cross = self.counts[a][b] + self.counts[b][a];
        let pool: usize = self.counts[a].iter().sum::<usize>() + self.counts[b].iter().sum::<usize>();
        if pool == 0 {
            0.0
        } else {
            cross as f64 / pool as f64
        }
    }
}

// ---------------------------------------------------------------------------
// Histograms

/// Fixed-width histogram with explicit edges; values outside the span
/// are clamped into the first/last bin so counts always sum to n.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub mean: f64,
    pub std: f64,
}

/// Uniform histogram over `[center - 3*std, center + 3*std]` with
/// [`HISTOGRAM_BINS`] bins, centered on the empirical mean.
pub fn histogram(values: &[f64]) -> Histogram {
    let n = values.len();
    let mean = if n == 0 {
        0.0
    } else {
        values.iter().sum::<f64>() / n as f64
    };
    let var = if n == 0 {
        0.0
    } else {
        values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64
    };
    let std = var.sqrt();
    // A degenerate spread still needs a nonzero span to bin into.
    let half_span = if std > 0.0 { 3.0 * std } else { 1e-12 };
    let lo = mean - half_span;
    let width = 2.0 * half_span / HISTOGRAM_BINS as f64;
    let edges: Vec<f64> = (0..=HISTOGRAM_BINS)
        .map(|i| lo + width * i as f64)
        .collect();
    let mut counts = vec![0usize; HISTOGRAM_BINS];
    for &v in values {
        let raw = ((v - lo) / width).floor();
        let bin = (raw.max(0.0) as usize).min(HISTOGRAM_BINS - 1);
        counts[bin] += 1;
    }
    Histogram {
        edges,
        counts,
        mean,
        std,
    }
}

/// Applied-correction statistics: frequency in Hz, phase in degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionStats {
    /// Frequency corrections, converted to Hz.
    pub omega_hist: Histogram,
    /// Phase corrections, reduced to [0, 360) degrees.
    pub phi_hist: Histogram,
    pub omega_std_hz: f64,
    /// Printed next to the measured value for comparison.
    pub omega_std_reference_hz: f64,
}

// ---------------------------------------------------------------------------
// The report

/// Accuracy over one SNR cell of the test split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnrAccuracy {
    pub snr_db: f64,
    pub n: usize,
    pub accuracy: f64,
}

/// Per-SNR accuracy difference between a corrected model and its
/// bypass comparator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnrGain {
    pub snr_db: f64,
    pub corrected: f64,
    pub baseline: f64,
    pub gain: f64,
}

/// Everything one evaluation produces. Serializes whole as the JSON
/// export; the CSV export flattens selected tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub dataset_fingerprint: String,
    /// Hash of the bundle's training config — ties the report to the
    /// exact recipe without embedding every field twice.
    pub config_hash: String,
    pub regime: SnrRegime,
    pub ablation: Ablation,
    pub schemes: Vec<Scheme>,
    /// 1 / n_classes, the random-guess floor annotated in exports.
    pub chance_level: f64,
    pub n_test: usize,
    pub overall_accuracy: f64,
    pub per_snr: Vec<SnrAccuracy>,
    pub confusion_counts: ConfusionMatrix,
    pub confusion_normalized: Vec<Vec<f64>>,
    /// Cross-confusion between the two densest QAM constellations,
    /// present when both are in the class set.
    pub qam16_qam64_cross_fraction: Option<f64>,
    /// Absent for bypass models (nothing applies corrections).
    pub correction: Option<CorrectionStats>,
    /// Filled by the ablation flow, absent for single-model runs.
    pub gain_vs_baseline: Option<Vec<SnrGain>>,
}

pub const REPORT_SCHEMA_VERSION: u32 = 1;

fn config_hash(bundle: &ModelBundle) -> Result<String> {
    let bytes = serde_json::to_vec(&bundle.train_config)?;
    Ok(hex(&Sha256::digest(&bytes)))
}

// ---------------------------------------------------------------------------
// Evaluation

/// How a prediction is produced for one test frame.
enum Predictor<'a> {
    /// The bundle's own forward pass.
    Model,
    /// Truth-derived derotation replaces the estimator's output on the
    /// corrected channels of an otherwise-identical cascade.
    TruthOffsets(&'a dyn Fn(usize) -> (f64, f64)),
}

/// Evaluates the bundle on its pinned dataset's test split.
pub fn evaluate(bundle: &mut ModelBundle, dataset: &Dataset) -> Result<EvalReport> {
    check_fingerprint(bundle, dataset)?;
    evaluate_unchecked(bundle, dataset)
}

/// Fingerprint-mismatch gate, separated so a CLI `--force` can skip it.
pub fn check_fingerprint(bundle: &ModelBundle, dataset: &Dataset) -> Result<()> {
    if bundle.dataset_fingerprint != dataset.fingerprint() {
        return Err(Error::FingerprintMismatch {
            expected: bundle.dataset_fingerprint.clone(),
            actual: dataset.fingerprint().to_string(),
        });
    }
    Ok(())
}

/// [`evaluate`] minus the fingerprint gate.
pub fn evaluate_unchecked(bundle: &mut ModelBundle, dataset: &Dataset) -> Result<EvalReport> {
    run_eval(bundle, dataset, Predictor::Model)
}

/// Evaluates the cascade with its estimator short-circuited by
/// impairment truth: each frame's corrected channels are derotated by
/// the trace-derived constant offsets (mean CFO and initial phase)
/// instead of the estimator's output. The dataset must store truth.
pub fn evaluate_truth_corrected(bundle: &mut ModelBundle, dataset: &Dataset) -> Result<EvalReport> {
    check_fingerprint(bundle, dataset)?;
    if bundle.model.correction.estimator.is_none() {
        return Err(Error::InvalidParam(
            "truth-corrected evaluation needs a corrected cascade, not a bypass model".into(),
        ));
    }
    let fs = dataset.config.channel.sample_rate;
    let splits = split_dataset(
        &dataset.examples,
        bundle.train_config.fractions,
        bundle.train_config.split_seed,
    )?;
    let offsets: BTreeMap<usize, (f64, f64)> = splits
        .test
        .iter()
        .map(|&i| {
            let trace = dataset.examples[i].truth.as_ref().ok_or_else(|| {
                Error::InvalidParam(
                    "truth-corrected evaluation needs a dataset generated with truth storage"
                        .into(),
                )
            })?;
            Ok((i, trace_offsets(trace, fs)))
        })
        .collect::<Result<_>>()?;
    let lookup = move |i: usize| offsets[&i];
    run_eval(bundle, dataset, Predictor::TruthOffsets(&lookup))
}

/// Constant-offset summary of a trace: mean CFO as rad/sample, and the
/// phase at the frame's first sample.
fn trace_offsets(trace: &ImpairmentTrace, sample_rate: f64) -> (f64, f64) {
    let mean_cfo_hz = trace.cfo_hz.iter().sum::<f64>() / trace.cfo_hz.len().max(1) as f64;
    let omega = 2.0 * std::f64::consts::PI * mean_cfo_hz / sample_rate;
    let phi = trace.phase_rad.first().copied().unwrap_or(0.0);
    (omega, phi)
}

/// Builds the correction-module output stack with externally supplied
/// offsets on every corrected block.
fn stack_with_offsets(frame: &IQFrame, out_channels: usize, omega: f64, phi: f64) -> Vec<f64> {
    let len = frame.samples().len();
    let mut stack = vec![0.0; out_channels * len];
    frame.write_iq_concat(&mut stack[..2 * len]);
    let corrected = derotate(frame, omega, phi);
    let k_blocks = out_channels / 2 - 1;
    for k in 0..k_blocks {
        let base = (2 + 2 * k) * len;
        corrected.write_iq_concat(&mut stack[base..base + 2 * len]);
    }
    stack
}

fn run_eval(
    bundle: &mut ModelBundle,
    dataset: &Dataset,
    predictor: Predictor<'_>,
) -> Result<EvalReport> {
    let config = &bundle.train_config;
    let splits = split_dataset(&dataset.examples, config.fractions, config.split_seed)?;
    let schemes = bundle.schemes.clone();
    let n_classes = schemes.len();
    let mut confusion = ConfusionMatrix::new(n_classes);
    let mut by_snr: BTreeMap<u64, (usize, usize)> = BTreeMap::new();
    let mut omegas_hz = Vec::new();
    let mut phis_deg = Vec::new();
    let fs = dataset.config.channel.sample_rate;
    let mut n_test = 0usize;

    for &i in &splits.test {
        let ex = &dataset.examples[i];
        if !config.regime.contains(ex.snr_db) {
            continue;
        }
        let class = schemes
            .iter()
            .position(|s| *s == ex.scheme)
            .ok_or_else(|| {
                Error::InvalidParam(format!(
                    "test example scheme {} missing from the bundle's class set",
                    ex.scheme
                ))
            })?;
        let probs = match &predictor {
            Predictor::Model => {
                let probs = bundle.model.predict(&ex.frame.iq_concat());
                for &(omega, phi) in bundle.model.correction.applied_offsets() {
                    omegas_hz.push(omega * fs / (2.0 * std::f64::consts::PI));
                    phis_deg.push((phi.to_degrees()).rem_euclid(360.0));
                }
                probs
            }
            Predictor::TruthOffsets(lookup) => {
                let (omega, phi) = lookup(i);
                omegas_hz.push(omega * fs / (2.0 * std::f64::consts::PI));
                phis_deg.push((phi.to_degrees()).rem_euclid(360.0));
                let stack = stack_with_offsets(
                    &ex.frame,
                    bundle.model.correction.out_channels(),
                    omega,
                    phi,
                );
                bundle.model.cnn.classify(&stack)
            }
        };
        let pred = argmax(&probs);
        confusion.record(class, pred)?;
        let cell = by_snr.entry(ex.snr_db.to_bits()).or_insert((0, 0));
        cell.1 += 1;
        if pred == class {
            cell.0 += 1;
        }
        n_test += 1;
    }

    if n_test == 0 {
        return Err(Error::SplitFailed(format!(
            "test split holds no examples in the {} regime",
            config.regime
        )));
    }

    let mut per_snr: Vec<SnrAccuracy> = by_snr
        .into_iter()
        .map(|(bits, (correct, n))| SnrAccuracy {
            snr_db: f64::from_bits(bits),
            n,
            accuracy: correct as f64 / n as f64,
        })
        .collect();
    per_snr.sort_by(|a, b| a.snr_db.partial_cmp(&b.snr_db).expect("finite SNR grid"));

    let qam_cross = match (
        schemes.iter().position(|s| *s == Scheme::Qam16),
        schemes.iter().position(|s| *s == Scheme::Qam64),
    ) {
        (Some(a), Some(b)) => Some(confusion.cross_fraction(a, b)),
        _ => None,
    };
    let correction = if omegas_hz.is_empty() {
        None
    } else {
        let omega_hist = histogram(&omegas_hz);
        let omega_std_hz = omega_hist.std;
        Some(CorrectionStats {
            omega_hist,
            phi_hist: histogram(&phis_deg),
            omega_std_hz,
            omega_std_reference_hz: OMEGA_STD_REFERENCE_HZ,
        })
    };

    Ok(EvalReport {
        schema_version: REPORT_SCHEMA_VERSION,
        dataset_fingerprint: dataset.fingerprint().to_string(),
        config_hash: config_hash(bundle)?,
        regime: bundle.train_config.regime,
        ablation: bundle.train_config.ablation,
        schemes,
        chance_level: 1.0 / n_classes as f64,
        n_test,
        overall_accuracy: confusion.accuracy(),
        per_snr,
        confusion_normalized: confusion.row_normalized(),
        confusion_counts: confusion,
        qam16_qam64_cross_fraction: qam_cross,
        correction,
        gain_vs_baseline: None,
    })
}

// ---------------------------------------------------------------------------
// Gains

/// Per-SNR accuracy differences, joined on the exact SNR grid.
pub fn gain_table(corrected: &EvalReport, baseline: &EvalReport) -> Result<Vec<SnrGain>> {
    if corrected.per_snr.len() != baseline.per_snr.len() {
        return Err(Error::InvalidParam(format!(
            "SNR grids differ: {} vs {} rows",
            corrected.per_snr.len(),
            baseline.per_snr.len()
        )));
    }
    corrected
        .per_snr
        .iter()
        .zip(&baseline.per_snr)
        .map(|(c, b)| {
            if c.snr_db != b.snr_db {
                return Err(Error::InvalidParam(format!(
                    "SNR grids differ: {} vs {}",
                    c.snr_db, b.snr_db
                )));
            }
            Ok(SnrGain {
                snr_db: c.snr_db,
                corrected: c.accuracy,
                baseline: b.accuracy,
                gain: c.accuracy - b.accuracy,
            })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Export

/// Writes the whole report as one JSON document.
pub fn export_json(report: &EvalReport, path: &Path) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut file, report)?;
    file.write_all(b"\n")?;
    Ok(())
}

/// Reads back a JSON report.
pub fn load_json(path: &Path) -> Result<EvalReport> {
    let file = std::fs::File::open(path)?;
    Ok(serde_json::from_reader(file)?)
}

/// Writes the spreadsheet-ready tables:
/// `accuracy_vs_snr.csv`, `confusion_counts.csv`,
/// `confusion_normalized.csv`, and (for corrected models)
/// `omega_histogram.csv` / `phi_histogram.csv`. Returns the file names
/// written. Numbers use the shortest exact decimal form, so identical
/// reports export byte-identically.
pub fn export_csv(report: &EvalReport, dir: &Path) -> Result<Vec<String>> {
    let mut written = Vec::new();

    let mut acc = String::from("snr_db,n,accuracy,chance_level\n");
    for row in &report.per_snr {
        acc.push_str(&format!(
            "{},{},{},{}\n",
            row.snr_db, row.n, row.accuracy, report.chance_level
        ));
    }
    written.push(write_file(dir, "accuracy_vs_snr.csv", &acc)?);

    let names: Vec<&str> = report.schemes.iter().map(|s| s.name()).collect();
    let mut counts = format!("true_class,{}\n", names.join(","));
    for (i, row) in report.confusion_counts.counts.iter().enumerate() {
        let cells: Vec<String> = row.iter().map(|c| c.to_string()).collect();
        counts.push_str(&format!("{},{}\n", names[i], cells.join(",")));
    }
    written.push(write_file(dir, "confusion_counts.csv", &counts)?);

    let mut norm = format!("true_class,{}\n", names.join(","));
    for (i, row) in report.confusion_normalized.iter().enumerate() {
        let cells: Vec<String> = row.iter().map(|c| c.to_string()).collect();
        norm.push_str(&format!("{},{}\n", names[i], cells.join(",")));
    }
    written.push(write_file(dir, "confusion_normalized.csv", &norm)?);

    if let Some(stats) = &report.correction {
        for (name, hist) in [
            ("omega_histogram.csv", &stats.omega_hist),
            ("phi_histogram.csv", &stats.phi_hist),
        ] {
            let mut body = String::from("bin_lo,bin_hi,count\n");
            for (i, count) in hist.counts.iter().enumerate() {
                body.push_str(&format!("{},{},{count}\n", hist.edges[i], hist.edges[i + 1]));
            }
            written.push(write_file(dir, name, &body)?);
        }
    }

    if let Some(gains) = &report.gain_vs_baseline {
        let mut body = String::from("snr_db,corrected,baseline,gain\n");
        for g in gains {
            body.push_str(&format!(
                "{},{},{},{}\n",
                g.snr_db, g.corrected, g.baseline, g.gain
            ));
        }
        written.push(write_file(dir, "gain_vs_snr.csv", &body)?);
    }

    Ok(written)
}

fn write_file(dir: &Path, name: &str, body: &str) -> Result<String> {
    std::fs::write(dir.join(name), body)?;
    Ok(name.to_string())
}

// ---------------------------------------------------------------------------
