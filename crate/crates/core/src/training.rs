//! Mini-batch training with seeded shuffling, early stopping on validation
//! loss, best-checkpoint restoration, and repeated-selection evaluation.

use crate::error::{Error, Result};
use crate::metrics::{accuracy, auc_from_scores, confusion, precision_f1, recall};
use crate::models::Model;
use crate::nn::bce_loss;
use crate::optim::{Adam, AdamConfig};
use crate::preprocess::WindowedDataset;
use crate::tensor::Tensor3;
use crate::RngState;
use std::time::Instant;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Epochs without validation-loss improvement before stopping.
    pub patience: usize,
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            batch_size: 32,
            learning_rate: 1e-3,
            patience: 5,
            validation_fraction: 0.2,
            seed: 42,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument {
                what: "batch_size",
                details: "must be at least 1".into(),
            });
        }
        if self.epochs == 0 {
            return Err(Error::InvalidArgument {
                what: "epochs",
                details: "must be at least 1".into(),
            });
        }
        if !(0.0..1.0).contains(&self.validation_fraction) || self.validation_fraction == 0.0 {
            return Err(Error::InvalidArgument {
                what: "validation_fraction",
                details: format!("{} outside (0, 1)", self.validation_fraction),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    pub stopped_epoch: usize,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    /// Set when training aborted on a non-finite loss; the returned model
    /// holds the last good checkpoint.
    pub diverged: Option<String>,
}

impl TrainReport {
    /// Deterministic CSV: epoch, train_loss, val_loss, val_acc.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss,val_acc\n");
        for e in &self.epochs {
            out.push_str(&format!(
                "{},{},{},{}\n",
                e.epoch, e.train_loss, e.val_loss, e.val_accuracy
            ));
        }
        out
    }
}

/// Stratified split into (train, validation). Both classes keep their
/// proportions when present; a single-class dataset splits unstratified
/// with a warning. Deterministic under `seed`.
pub fn split(
    dataset: &WindowedDataset,
    fraction: f64,
    seed: u64,
) -> Result<(WindowedDataset, WindowedDataset)> {
    if dataset.is_empty() {
        return Err(Error::EmptyInput("split: empty dataset"));
    }
    if !(0.0..1.0).contains(&fraction) || fraction == 0.0 {
        return Err(Error::InvalidArgument {
            what: "validation fraction",
            details: format!("{fraction} outside (0, 1)"),
        });
    }
    let mut rng = RngState::new(seed).derive("split");
    let positives: Vec<usize> =
        (0..dataset.len()).filter(|&i| dataset.labels[i] == 1).collect();
    let negatives: Vec<usize> =
        (0..dataset.len()).filter(|&i| dataset.labels[i] == 0).collect();
    if positives.is_empty() || negatives.is_empty() {
        log::warn!("split: single-class dataset, falling back to an unstratified split");
    }

    let mut val_indices = Vec::new();
    for group in [&positives, &negatives] {
        if group.is_empty() {
            continue;
        }
        let mut shuffled = group.clone();
        rng.shuffle(&mut shuffled);
        let take = ((group.len() as f64) * fraction).round() as usize;
        val_indices.extend_from_slice(&shuffled[..take.min(group.len())]);
    }
    if val_indices.is_empty() {
        // Tiny datasets still owe one validation window.
        val_indices.push(0);
    }
    val_indices.sort_unstable();
    val_indices.dedup();
    let train_indices: Vec<usize> =
        (0..dataset.len()).filter(|i| val_indices.binary_search(i).is_err()).collect();
    if train_indices.is_empty() {
        return Err(Error::InvalidArgument {
            what: "validation fraction",
            details: "leaves no training windows".into(),
        });
    }
    Ok((dataset.subset(&train_indices), dataset.subset(&val_indices)))
}

/// Stacks the given windows into a (n, rows, cols) tensor.
pub fn batch_tensor(dataset: &WindowedDataset, indices: &[usize]) -> Result<Tensor3> {
    let stride = dataset.rows * dataset.cols;
    let mut data = Vec::with_capacity(indices.len() * stride);
    for &i in indices {
        data.extend_from_slice(dataset.window(i));
    }
    Tensor3::from_vec(indices.len(), dataset.rows, dataset.cols, data)
}

fn mean_loss_over(
    model: &mut Model,
    dataset: &WindowedDataset,
    batch_size: usize,
) -> Result<(f64, f64)> {
    let indices: Vec<usize> = (0..dataset.len()).collect();
    let mut loss_sum = 0.0;
    let mut correct = 0usize;
    for chunk in indices.chunks(batch_size) {
        let batch = batch_tensor(dataset, chunk)?;
        let labels: Vec<u8> = chunk.iter().map(|&i| dataset.labels[i]).collect();
        let scores = model.forward(&batch, false)?;
        let lg = bce_loss(&scores, &labels)?;
        loss_sum += lg.loss * chunk.len() as f64;
        correct += scores
            .iter()
            .zip(&labels)
            .filter(|(&s, &y)| u8::from(s >= 0.5) == y)
            .count();
    }
    let n = dataset.len() as f64;
    Ok((loss_sum / n, correct as f64 / n))
}

type ParamValues = Vec<(Vec<f64>, Vec<f64>)>;

fn snapshot(model: &Model) -> ParamValues {
    model.params().iter().map(|p| (p.weights.clone(), p.bias.clone())).collect()
}

fn restore(model: &mut Model, snap: &ParamValues) {
    for (p, (w, b)) in model.params_mut().iter_mut().zip(snap) {
        p.weights.copy_from_slice(w);
        p.bias.copy_from_slice(b);
    }
}

/// Trains in place: seeded shuffles, batches of `cfg.batch_size` (final
/// partial batch included), Adam updates, early stopping on validation loss
/// with `cfg.patience`, and restoration of the best-validation parameters.
pub fn train(
    model: &mut Model,
    dataset: &WindowedDataset,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    if dataset.rows != model.config().window || dataset.cols != model.config().features {
        return Err(Error::DimensionMismatch {
            op: "train",
            axis: "window",
            expected: model.config().window,
            got: dataset.rows,
        });
    }
    let (train_set, val_set) = split(dataset, cfg.validation_fraction, cfg.seed)?;
    let mut shuffle_rng = RngState::new(cfg.seed).derive("epoch-shuffle");
    let mut adam = Adam::new(AdamConfig::with_learning_rate(cfg.learning_rate));

    let mut report = TrainReport {
        epochs: Vec::new(),
        stopped_epoch: 0,
        best_epoch: 0,
        best_val_loss: f64::INFINITY,
        diverged: None,
    };
    let mut best = snapshot(model);
    let mut since_best = 0usize;

    'epochs: for epoch in 1..=cfg.epochs {
        let started = Instant::now();
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        shuffle_rng.shuffle(&mut order);

        let mut loss_sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch = batch_tensor(&train_set, chunk)?;
            let labels: Vec<u8> = chunk.iter().map(|&i| train_set.labels[i]).collect();
            model.zero_grads();
            let scores = model.forward(&batch, true)?;
            let lg = bce_loss(&scores, &labels)?;
            if !lg.loss.is_finite() {
                report.diverged =
                    Some(format!("non-finite training loss at epoch {epoch}"));
                log::error!("{}", report.diverged.as_deref().unwrap_or_default());
                break 'epochs;
            }
            loss_sum += lg.loss * chunk.len() as f64;
            model.backward(&lg.score_grads)?;
            adam.step(&mut model.params_mut())?;
        }
        let train_loss = loss_sum / train_set.len() as f64;
        let (val_loss, val_accuracy) = mean_loss_over(model, &val_set, cfg.batch_size)?;
        if !val_loss.is_finite() {
            report.diverged = Some(format!("non-finite validation loss at epoch {epoch}"));
            log::error!("{}", report.diverged.as_deref().unwrap_or_default());
            break 'epochs;
        }
        report.epochs.push(EpochStats {
            epoch,
            train_loss,
            val_loss,
            val_accuracy,
            wall_seconds: started.elapsed().as_secs_f64(),
        });
        report.stopped_epoch = epoch;

        if val_loss < report.best_val_loss {
            report.best_val_loss = val_loss;
            report.best_epoch = epoch;
            best = snapshot(model);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }
    restore(model, &best);
    Ok(report)
}

/// Deterministic inference over the whole dataset, in order.
pub fn evaluate(model: &mut Model, dataset: &WindowedDataset) -> Result<(Vec<f64>, Vec<u8>)> {
    if dataset.is_empty() {
        return Err(Error::EmptyInput("evaluate: empty dataset"));
    }
    let indices: Vec<usize> = (0..dataset.len()).collect();
    let mut scores = Vec::with_capacity(dataset.len());
    for chunk in indices.chunks(model.config().batch_size.max(1)) {
        let batch = batch_tensor(dataset, chunk)?;
        scores.extend(model.forward(&batch, false)?);
    }
    Ok((scores, dataset.labels.clone()))
}

/// One row of summary metrics at threshold 0.5.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRow {
    pub accuracy: f64,
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
    pub auc: f64,
}

impl MetricsRow {
    pub fn mean(rows: &[MetricsRow]) -> MetricsRow {
        let n = rows.len() as f64;
        MetricsRow {
            accuracy: rows.iter().map(|r| r.accuracy).sum::<f64>() / n,
            recall: rows.iter().map(|r| r.recall).sum::<f64>() / n,
            precision: rows.iter().map(|r| r.precision).sum::<f64>() / n,
            f1: rows.iter().map(|r| r.f1).sum::<f64>() / n,
            auc: rows.iter().map(|r| r.auc).sum::<f64>() / n,
        }
    }
}

/// Computes the summary row for one (scores, labels) pairing.
pub fn metrics_row(scores: &[f64], labels: &[u8], threshold: f64) -> Result<MetricsRow> {
    let c = confusion(scores, labels, threshold)?;
    let (precision, f1) = precision_f1(&c)?;
    Ok(MetricsRow {
        accuracy: accuracy(&c)?,
        recall: recall(&c)?,
        precision,
        f1,
        auc: auc_from_scores(scores, labels)?,
    })
}

/// Repeated random re-selection of evaluation windows: each repetition
/// draws a stratified `fraction` of the dataset (all of it at 1.0), scores
/// it, and summarizes; the caller averages the rows. One repetition at
/// fraction 1.0 equals a single full evaluation.
pub fn eval_repeated(
    model: &mut Model,
    dataset: &WindowedDataset,
    reps: usize,
    fraction: f64,
    threshold: f64,
    seed: u64,
) -> Result<Vec<MetricsRow>> {
    if reps == 0 {
        return Err(Error::InvalidArgument {
            what: "repetitions",
            details: "must be at least 1".into(),
        });
    }
    if !(0.0..=1.0).contains(&fraction) || fraction == 0.0 {
        return Err(Error::InvalidArgument {
            what: "selection fraction",
            details: format!("{fraction} outside (0, 1]"),
        });
    }
    if dataset.is_empty() {
        return Err(Error::EmptyInput("eval_repeated: empty dataset"));
    }
    let (all_scores, all_labels) = evaluate(model, dataset)?;
    let positives: Vec<usize> =
        (0..dataset.len()).filter(|&i| all_labels[i] == 1).collect();
    let negatives: Vec<usize> =
        (0..dataset.len()).filter(|&i| all_labels[i] == 0).collect();

    let mut rng = RngState::new(seed).derive("eval-reps");
    let mut rows = Vec::with_capacity(reps);
    for _ in 0..reps {
        let mut picked = Vec::new();
        for group in [&positives, &negatives] {
            if group.is_empty() {
                continue;
            }
            let take = if fraction >= 1.0 {
                group.len()
            } else {
                (((group.len() as f64) * fraction).round() as usize).clamp(1, group.len())
            };
            for idx in rng.sample_indices(group.len(), take) {
                picked.push(group[idx]);
            }
        }
        picked.sort_unstable();
        let scores: Vec<f64> = picked.iter().map(|&i| all_scores[i]).collect();
        let labels: Vec<u8> = picked.iter().map(|&i| all_labels[i]).collect();
        rows.push(metrics_row(&scores, &labels, threshold)?);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{Architecture, AttackPreset, ModelConfig};
    use crate::preprocess::{FeatureSchema, Provenance};

    /// Tiny synthetic windowed dataset with a constant shift on the first
    /// `shifted` features of abnormal windows.
    fn toy_dataset(n: usize, rows: usize, cols: usize, positive_every: usize) -> WindowedDataset {
        let mut rng = RngState::new(1234);
        let mut data = Vec::with_capacity(n * rows * cols);
        let mut labels = Vec::with_capacity(n);
        for w in 0..n {
            let abnormal = w % positive_every == 0;
            labels.push(u8::from(abnormal));
            for _ in 0..rows {
                for c in 0..cols {
                    let mut v = rng.normal();
                    if abnormal && c < 3 {
                        v += 5.0;
                    }
                    data.push(v);
                }
            }
        }
        WindowedDataset {
            rows,
            cols,
            data,
            labels,
            schema: toy_schema(cols),
            provenance: Provenance { source: "toy".into(), seed: 0 },
        }
    }

    fn toy_schema(_cols: usize) -> FeatureSchema {
        FeatureSchema { columns: Vec::new(), protocols: vec!["TCP".into()], hash_buckets: 2 }
    }

    fn tiny_config() -> ModelConfig {
        ModelConfig {
            architecture: Architecture::Cnn,
            attack_preset: AttackPreset::Dos,
            window: 6,
            features: 5,
            cnn_filters: 4,
            cnn_kernel: 3,
            pool_size: 2,
            head_size: 2,
            head_number: 1,
            ff_dim: 4,
            transformer_blocks: 1,
            mlp_hidden: 4,
            dropout_rate: 0.1,
            batch_size: 8,
            lstm_hidden: 3,
            seed: 7,
        }
    }

    #[test]
    fn stratified_split_keeps_proportions() {
        let ds = toy_dataset(100, 4, 5, 2); // 50/50
        let (train, val) = split(&ds, 0.2, 9).unwrap();
        assert_eq!(train.len(), 80);
        assert_eq!(val.len(), 20);
        assert_eq!(val.labels.iter().filter(|&&l| l == 1).count(), 10);
        assert_eq!(train.labels.iter().filter(|&&l| l == 1).count(), 40);
    }

    #[test]
    fn split_is_deterministic_and_partitions() {
        let ds = toy_dataset(30, 4, 5, 3);
        let (t1, v1) = split(&ds, 0.2, 5).unwrap();
        let (t2, v2) = split(&ds, 0.2, 5).unwrap();
        assert_eq!(t1, t2);
        assert_eq!(v1, v2);
        assert_eq!(t1.len() + v1.len(), ds.len());
    }

    #[test]
    fn split_ten_windows_eight_two() {
        let ds = toy_dataset(10, 4, 5, 2);
        let (train, val) = split(&ds, 0.2, 0).unwrap();
        assert_eq!((train.len(), val.len()), (8, 2));
    }

    #[test]
    fn zero_learning_rate_is_a_fixed_point() {
        let ds = toy_dataset(24, 6, 5, 3);
        let mut model = Model::build(tiny_config()).unwrap();
        let before: Vec<Vec<f64>> = model.params().iter().map(|p| p.weights.clone()).collect();
        let cfg = TrainConfig {
            epochs: 3,
            batch_size: 8,
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        train(&mut model, &ds, &cfg).unwrap();
        let after: Vec<Vec<f64>> = model.params().iter().map(|p| p.weights.clone()).collect();
        assert_eq!(before, after);
    }

    #[test]
    fn separable_data_trains_to_high_accuracy() {
        // Oracle for separability: a logistic regression on window means
        // reaches ≥0.99 on this construction; the model must too.
        let ds = toy_dataset(60, 6, 5, 2);
        assert!(logistic_oracle_accuracy(&ds) >= 0.99);

        let mut model = Model::build(tiny_config()).unwrap();
        let cfg = TrainConfig { epochs: 10, batch_size: 8, ..TrainConfig::default() };
        let report = train(&mut model, &ds, &cfg).unwrap();
        assert!(report.diverged.is_none());
        let (scores, labels) = evaluate(&mut model, &ds).unwrap();
        let c = confusion(&scores, &labels, 0.5).unwrap();
        let acc = accuracy(&c).unwrap();
        assert!(acc >= 0.99, "train accuracy {acc}");
        // Loss decreased over training.
        assert!(report.epochs.last().unwrap().train_loss < report.epochs[0].train_loss);
    }

    /// Plain logistic regression on per-window feature means, trained by
    /// gradient descent; independent of the model stack.
    fn logistic_oracle_accuracy(ds: &WindowedDataset) -> f64 {
        let n = ds.len();
        let d = ds.cols;
        let means: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let w = ds.window(i);
                (0..d)
                    .map(|c| (0..ds.rows).map(|r| w[r * d + c]).sum::<f64>() / ds.rows as f64)
                    .collect()
            })
            .collect();
        let mut weights = vec![0.0; d + 1];
        for _ in 0..500 {
            let mut grad = vec![0.0; d + 1];
            for (x, &y) in means.iter().zip(&ds.labels) {
                let z: f64 =
                    weights[d] + x.iter().zip(&weights[..d]).map(|(a, b)| a * b).sum::<f64>();
                let p = 1.0 / (1.0 + (-z).exp());
                let e = p - f64::from(y);
                for (g, xi) in grad.iter_mut().zip(x) {
                    *g += e * xi;
                }
                grad[d] += e;
            }
            for (w, g) in weights.iter_mut().zip(&grad) {
                *w -= 0.1 * g / n as f64;
            }
        }
        let correct = means
            .iter()
            .zip(&ds.labels)
            .filter(|(x, &y)| {
                let z: f64 =
                    weights[d] + x.iter().zip(&weights[..d]).map(|(a, b)| a * b).sum::<f64>();
                u8::from(z >= 0.0) == y
            })
            .count();
        correct as f64 / n as f64
    }

    #[test]
    fn same_seed_bitwise_identical_reports() {
        let ds = toy_dataset(40, 6, 5, 4);
        let cfg = TrainConfig { epochs: 4, batch_size: 8, ..TrainConfig::default() };
        let mut m1 = Model::build(tiny_config()).unwrap();
        let mut m2 = Model::build(tiny_config()).unwrap();
        let r1 = train(&mut m1, &ds, &cfg).unwrap();
        let r2 = train(&mut m2, &ds, &cfg).unwrap();
        assert_eq!(r1.to_csv(), r2.to_csv());
        for (a, b) in r1.epochs.iter().zip(&r2.epochs) {
            assert_eq!(a.train_loss.to_bits(), b.train_loss.to_bits());
            assert_eq!(a.val_loss.to_bits(), b.val_loss.to_bits());
        }
    }

    #[test]
    fn evaluation_is_deterministic_and_rejects_empty() {
        let ds = toy_dataset(20, 6, 5, 4);
        let mut model = Model::build(tiny_config()).unwrap();
        let (s1, l1) = evaluate(&mut model, &ds).unwrap();
        let (s2, _) = evaluate(&mut model, &ds).unwrap();
        assert_eq!(s1, s2);
        assert_eq!(l1, ds.labels);

        let empty = ds.subset(&[]);
        assert_eq!(evaluate(&mut model, &empty).unwrap_err().category(), "empty-input");
    }

    #[test]
    fn one_repetition_at_full_fraction_equals_single_evaluation() {
        let ds = toy_dataset(30, 6, 5, 3);
        let mut model = Model::build(tiny_config()).unwrap();
        let rows = eval_repeated(&mut model, &ds, 1, 1.0, 0.5, 3).unwrap();
        assert_eq!(rows.len(), 1);
        let (scores, labels) = evaluate(&mut model, &ds).unwrap();
        let single = metrics_row(&scores, &labels, 0.5).unwrap();
        assert_eq!(rows[0], single);
        assert_eq!(MetricsRow::mean(&rows), single);
    }

    #[test]
    fn checkpoint_round_trip_preserves_scores() {
        let dir = tempfile::tempdir().unwrap();
        let ds = toy_dataset(30, 6, 5, 3);
        let mut model = Model::build(tiny_config()).unwrap();
        let cfg = TrainConfig { epochs: 3, batch_size: 8, ..TrainConfig::default() };
        train(&mut model, &ds, &cfg).unwrap();
        let (before, _) = evaluate(&mut model, &ds).unwrap();
        let path = dir.path().join("m.ckpt");
        model.save(&path).unwrap();
        let mut loaded = Model::load(&path).unwrap();
        let (after, _) = evaluate(&mut loaded, &ds).unwrap();
        for (a, b) in before.iter().zip(&after) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
