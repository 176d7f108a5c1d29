//! End-to-end training of the correction + classifier cascade (and the
//! no-correction baseline) from modulation labels alone.
//!
//! The trainer never sees impairment ground truth: training items are
//! built from `(frame, class, snr)` only, so a dataset's optional
//! truth records are unreachable from any training code path by
//! construction. Runs are deterministic per config — batch order,
//! parameter init, and split membership all derive from explicit
//! seeds, and one run's gradient accumulation is strictly sequential.

use serde::{Deserialize, Serialize};

use crate::classifier::{build_cnn, BaselineArch, Cnn, CnnConfig, SnrRegime};
use crate::correction::{Ablation, CorrectionModule};
use crate::dataset::{Dataset, Example};
use crate::error::{Error, Result};
use crate::frame::{Scheme, FRAME_LEN};
use crate::nn::{softmax_xent, zero_grads, Adam, ParamSet};
use crate::rng::{derive_seed, derived_rng, stream};

// ---------------------------------------------------------------------------
// Configuration

/// Train / validation / test proportions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl SplitFractions {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(Error::InvalidParam(
                "split fractions must lie in [0, 1]".into(),
            ));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParam(format!(
                "split fractions must sum to 1, got {sum}"
            )));
        }
        if self.train <= 0.0 {
            return Err(Error::InvalidParam("train fraction must be > 0".into()));
        }
        Ok(())
    }
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self {
            train: 0.6,
            val: 0.2,
            test: 0.2,
        }
    }
}

/// One training run's recipe. `seed` drives parameter init and batch
/// shuffling; `split_seed` drives split membership and is kept
/// separate so paired runs can share identical splits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub regime: SnrRegime,
    pub ablation: Ablation,
    /// Offset pairs the estimator predicts (ignored in bypass mode).
    pub k: usize,
    /// Conv depth rule for the bypass-mode comparator.
    pub baseline_arch: BaselineArch,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub patience: usize,
    pub seed: u64,
    pub split_seed: u64,
    pub fractions: SplitFractions,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            regime: SnrRegime::NonNegative,
            ablation: Ablation::Both,
            k: 1,
            baseline_arch: BaselineArch::Published,
            epochs: 100,
            batch_size: 128,
            lr: 1e-3,
            patience: 10,
            seed: 0,
            split_seed: 0,
            fractions: SplitFractions::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidParam("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidParam("batch_size must be >= 1".into()));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::InvalidParam("lr must be positive".into()));
        }
        if self.k == 0 && self.ablation.uses_estimator() {
            return Err(Error::InvalidParam("k must be >= 1".into()));
        }
        self.fractions.validate()
    }

    /// Conv depth for this run's classifier.
    pub fn conv_layers(&self) -> usize {
        if self.ablation.uses_estimator() {
            self.regime.conv_layers()
        } else {
            self.baseline_arch.conv_layers(self.regime)
        }
    }
}

// ---------------------------------------------------------------------------
// Stratified splitting

/// Index sets into the original example list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Splits {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Deterministic stratified split: every (scheme, SNR) cell is
/// shuffled by a cell-specific derived seed and cut into the three
/// fractions by largest-remainder apportionment, so each cell lands
/// within one example of its exact share.
pub fn split_dataset(
    examples: &[Example],
    fractions: SplitFractions,
    seed: u64,
) -> Result<Splits> {
    fractions.validate()?;
    if examples.is_empty() {
        return Err(Error::SplitFailed("no examples to split".into()));
    }
    use std::collections::BTreeMap;
    let mut cells: BTreeMap<(usize, u64), Vec<usize>> = BTreeMap::new();
    for (i, ex) in examples.iter().enumerate() {
        cells
            .entry((ex.scheme.index(), ex.snr_db.to_bits()))
            .or_default()
            .push(i);
    }
    let mut splits = Splits {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
    };
    for ((scheme_idx, snr_bits), mut members) in cells {
        let mut rng = derived_rng(seed, &[stream::SPLIT, scheme_idx as u64, snr_bits]);
        rand::seq::SliceRandom::shuffle(&mut members[..], &mut rng);
        let counts = apportion(members.len(), fractions);
        let (a, b) = (counts[0], counts[0] + counts[1]);
        splits.train.extend_from_slice(&members[..a]);
        splits.val.extend_from_slice(&members[a..b]);
        splits.test.extend_from_slice(&members[b..]);
    }
    Ok(splits)
}

/// Largest-remainder apportionment of `n` into three parts; ties break
/// toward the earlier (train-first) part.
fn apportion(n: usize, fractions: SplitFractions) -> [usize; 3] {
    let exact = [
        n as f64 * fractions.train,
        n as f64 * fractions.val,
        n as f64 * fractions.test,
    ];
    let mut counts = [0usize; 3];
    let mut remainders = [(0.0f64, 0usize); 3];
    let mut assigned = 0;
    for (i, &e) in exact.iter().enumerate() {
        counts[i] = e.floor() as usize;
        assigned += counts[i];
        remainders[i] = (e - e.floor(), i);
    }
    remainders.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .expect("remainders are finite")
            .then(a.1.cmp(&b.1))
    });
    for &(_, i) in remainders.iter().take(n - assigned) {
        counts[i] += 1;
    }
    counts
}

// ---------------------------------------------------------------------------
// The cascade

/// Correction module feeding a classifier; the unit that trains,
/// checkpoints, and serializes as one set of parameters.
#[derive(Debug, Clone)]
pub struct CascadeModel {
    pub correction: CorrectionModule,
    pub cnn: Cnn,
}

impl CascadeModel {
    /// Softmax class probabilities for one `[I | Q]` frame.
    pub fn predict(&mut self, iq: &[f64]) -> Vec<f64> {
        let stack = self.correction.forward(iq);
        self.cnn.classify(stack)
    }

    /// Forward + backward for one example; accumulates gradients
    /// scaled by `weight` and returns the example's loss.
    fn accumulate(&mut self, iq: &[f64], class: usize, weight: f64) -> f64 {
        let stack = self.correction.forward(iq);
        let logits = self.cnn.forward(stack).to_vec();
        let (loss, mut dlogits) = softmax_xent(&logits, class);
        for d in &mut dlogits {
            *d *= weight;
        }
        let dstack = self.cnn.backward(&dlogits);
        self.correction.backward(&dstack);
        loss
    }
}

impl ParamSet for CascadeModel {
    fn visit(&mut self, f: &mut dyn FnMut(&str, &mut [f64], &mut [f64])) {
        self.correction.visit(f);
        self.cnn.visit(&mut |name, d, g| f(&format!("cnn.{name}"), d, g));
    }
}

/// Builds the cascade a config describes: bypass or corrected front
/// end, and the matching classifier width and depth.
pub fn build_model(config: &TrainConfig, n_classes: usize) -> Result<CascadeModel> {
    config.validate()?;
    if n_classes < 2 {
        return Err(Error::InvalidParam("need at least two classes".into()));
    }
    let mut front_rng = derived_rng(config.seed, &[stream::INIT, 0]);
    let correction = CorrectionModule::new(FRAME_LEN, config.k, config.ablation, &mut front_rng);
    let cnn_config = CnnConfig {
        conv_layers: config.conv_layers(),
        input_len: FRAME_LEN,
        in_channels: correction.out_channels(),
        n_classes,
        ..CnnConfig::for_regime(config.regime, correction.out_channels(), n_classes)
    };
    let cnn = build_cnn(&cnn_config, derive_seed(config.seed, &[stream::INIT, 1]))?;
    Ok(CascadeModel { correction, cnn })
}

// ---------------------------------------------------------------------------
// Training

/// One epoch's summary, recorded into the bundle's training curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_accuracy: f64,
}

/// A trained model plus everything needed to evaluate or audit it.
#[derive(Debug, Clone)]
pub struct ModelBundle {
    pub train_config: TrainConfig,
    pub dataset_fingerprint: String,
    /// Class order: position in this list is the class index.
    pub schemes: Vec<Scheme>,
    pub curve: Vec<EpochStats>,
    pub best_epoch: usize,
    pub model: CascadeModel,
}

/// Frame + label, the trainer's entire view of an example.
/// Impairment truth is absent at the type level.
struct Item {
    iq: Vec<f64>,
    class: usize,
}

fn items_for(dataset: &Dataset, indices: &[usize], regime: SnrRegime) -> Result<Vec<Item>> {
    let schemes = &dataset.config.schemes;
    indices
        .iter()
        .filter(|&&i| regime.contains(dataset.examples[i].snr_db))
        .map(|&i| {
            let ex = &dataset.examples[i];
            let class = schemes
                .iter()
                .position(|s| *s == ex.scheme)
                .ok_or_else(|| {
                    Error::InvalidParam(format!(
                        "example scheme {} missing from dataset scheme list",
                        ex.scheme
                    ))
                })?;
            Ok(Item {
                iq: ex.frame.iq_concat(),
                class,
            })
        })
        .collect()
}

fn accuracy_over(model: &mut CascadeModel, items: &[Item]) -> f64 {
    if items.is_empty() {
        return 0.0;
    }
    let correct = items
        .iter()
        .filter(|item| {
            let probs = model.predict(&item.iq);
            argmax(&probs) == item.class
        })
        .count();
    correct as f64 / items.len() as f64
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Trains one model end-to-end on the dataset's regime slice.
///
/// The split is stratified over the full dataset, then filtered to the
/// regime, so every run with the same `split_seed` sees the same
/// membership regardless of ablation or regime. Checkpointing keeps
/// the parameters from the best-validation-accuracy epoch (strict
/// improvement); `patience` epochs without improvement stop the run.
pub fn train(config: &TrainConfig, dataset: &Dataset) -> Result<ModelBundle> {
    config.validate()?;
    let splits = split_dataset(&dataset.examples, config.fractions, config.split_seed)?;
    let train_items = items_for(dataset, &splits.train, config.regime)?;
    let val_items = items_for(dataset, &splits.val, config.regime)?;
    if train_items.is_empty() {
        return Err(Error::SplitFailed(format!(
            "no training examples in the {} regime",
            config.regime
        )));
    }
    let n_classes = dataset.config.schemes.len();
    let mut model = build_model(config, n_classes)?;
    let mut adam = Adam::new(config.lr);
    let mut curve = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, CascadeModel)> = None;
    let mut stale_epochs = 0usize;
    let mut order: Vec<usize> = (0..train_items.len()).collect();

    for epoch in 0..config.epochs {
        let mut rng = derived_rng(config.seed, &[stream::SHUFFLE, epoch as u64]);
        rand::seq::SliceRandom::shuffle(&mut order[..], &mut rng);
        let mut loss_sum = 0.0;
        for (batch_idx, batch) in order.chunks(config.batch_size).enumerate() {
            zero_grads(&mut model);
            let weight = 1.0 / batch.len() as f64;
            let mut batch_loss = 0.0;
            for &i in batch {
                let item = &train_items[i];
                batch_loss += model.accumulate(&item.iq, item.class, weight);
            }
            batch_loss *= weight;
            if !batch_loss.is_finite() {
                return Err(Error::Divergence(format!(
                    "non-finite loss {batch_loss} at epoch {epoch}, batch {batch_idx}"
                )));
            }
            loss_sum += batch_loss * batch.len() as f64;
            adam.step(&mut model);
        }
        let train_loss = loss_sum / train_items.len() as f64;
        let val_accuracy = accuracy_over(&mut model, &val_items);
        curve.push(EpochStats {
            epoch,
            train_loss,
            val_accuracy,
        });
        let improved = best
            .as_ref()
            .map(|(best_acc, _, _)| val_accuracy > *best_acc)
            .unwrap_or(true);
        if improved {
            best = Some((val_accuracy, epoch, model.clone()));
            stale_epochs = 0;
        } else {
            stale_epochs += 1;
            if stale_epochs >= config.patience {
                break;
            }
        }
    }
    let (_, best_epoch, best_model) = best.expect("at least one epoch ran");
    Ok(ModelBundle {
        train_config: config.clone(),
        dataset_fingerprint: dataset.fingerprint().to_string(),
        schemes: dataset.config.schemes.clone(),
        curve,
        best_epoch,
        model: best_model,
    })
}

// ---------------------------------------------------------------------------
// The ablation matrix

/// One trained cell of the ablation matrix.
#[derive(Debug)]
pub struct MatrixCell {
    pub regime: SnrRegime,
    pub ablation: Ablation,
    pub bundle: ModelBundle,
}

/// Trains {bypass, freq_only, phase_only, both} for every regime the
/// dataset covers, all sharing the base config's seeds so comparisons
/// are paired: identical splits, identical init streams per cell
/// position.
pub fn train_matrix(base: &TrainConfig, dataset: &Dataset) -> Result<Vec<MatrixCell>> {
    let mut cells = Vec::new();
    for regime in SnrRegime::ALL {
        let covered = dataset
            .examples
            .iter()
            .any(|e| regime.contains(e.snr_db));
        if !covered {
            continue;
        }
        for ablation in Ablation::ALL {
            let config = TrainConfig {
                regime,
                ablation,
                ..base.clone()
            };
            let bundle = train(&config, dataset)?;
            cells.push(MatrixCell {
                regime,
                ablation,
                bundle,
            });
        }
    }
    if cells.is_empty() {
        return Err(Error::SplitFailed(
            "dataset covers no SNR regime at all".into(),
        ));
    }
    Ok(cells)
}

// ---------------------------------------------------------------------------
