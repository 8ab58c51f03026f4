//! Train/test splitting, balanced subsampling, logistic regression and
//! confusion-matrix evaluation.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io;
use std::path::Path;

use rand::seq::SliceRandom;
use thiserror::Error;

use crate::features::{FeatureMode, FeatureRow};
use crate::seed;

#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error("class {0} has no rows")]
    EmptyClass(u8),
    #[error("split leaves a class with no training or test rows (fraction {0})")]
    DegenerateSplit(f64),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("feature length mismatch: model expects {expected}, row has {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("loss became non-finite at iteration {0}; learning rate too high")]
    NonFinite(usize),
    #[error("{0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

fn shuffled<T: Clone>(items: &[T], rng: &mut seed::Rng) -> Vec<T> {
    let mut v = items.to_vec();
    v.shuffle(rng);
    v
}

/// Stratified split: each class contributes `round(fraction · n_class)` test
/// rows. Every class must keep at least one row on each side.
pub fn split_dataset(rows: &[FeatureRow], test_fraction: f64, rng_seed: u64) -> Result<(Vec<FeatureRow>, Vec<FeatureRow>), ClassifyError> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(ClassifyError::Config("test fraction must be in (0, 1)".into()));
    }
    let mut rng = seed::rng(rng_seed, &[0x5b1]);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for label in [true, false] {
        let class: Vec<FeatureRow> = rows.iter().filter(|r| r.label == label).cloned().collect();
        if class.is_empty() {
            return Err(ClassifyError::EmptyClass(label as u8));
        }
        let n_test = (test_fraction * class.len() as f64).round() as usize;
        if n_test == 0 || n_test == class.len() {
            return Err(ClassifyError::DegenerateSplit(test_fraction));
        }
        let class = shuffled(&class, &mut rng);
        test.extend_from_slice(&class[..n_test]);
        train.extend_from_slice(&class[n_test..]);
    }
    Ok((shuffled(&train, &mut rng), shuffled(&test, &mut rng)))
}

/// Keeps every positive and `ceil(ratio · |pos|)` uniformly drawn negatives
/// (capped at `|neg|`), shuffled together.
pub fn balanced_subsample(pos: &[FeatureRow], neg: &[FeatureRow], ratio: f64, rng_seed: u64) -> Result<Vec<FeatureRow>, ClassifyError> {
    if pos.is_empty() {
        return Err(ClassifyError::EmptyClass(1));
    }
    if neg.is_empty() {
        return Err(ClassifyError::EmptyClass(0));
    }
    if !(ratio > 0.0 && ratio.is_finite()) {
        return Err(ClassifyError::Config("ratio must be positive".into()));
    }
    // the epsilon keeps e.g. 1.12 · 4060 = 4547.2000000001 from rounding up twice
    let want = (ratio * pos.len() as f64 - 1e-9).ceil() as usize;
    if want > neg.len() {
        log::warn!("requested {want} negatives but only {} available; keeping all", neg.len());
    }
    let mut rng = seed::rng(rng_seed, &[0xba1]);
    let mut out = pos.to_vec();
    out.extend(neg.choose_multiple(&mut rng, want.min(neg.len())).cloned());
    out.shuffle(&mut rng);
    Ok(out)
}

/// Partitions rows by label and balances them.
pub fn balance(rows: &[FeatureRow], ratio: f64, rng_seed: u64) -> Result<Vec<FeatureRow>, ClassifyError> {
    let (pos, neg): (Vec<FeatureRow>, Vec<FeatureRow>) = rows.iter().cloned().partition(|r| r.label);
    balanced_subsample(&pos, &neg, ratio, rng_seed)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogRegConfig {
    pub lr: f64,
    pub l2: f64,
    pub max_iters: usize,
    pub tol: f64,
    pub rng_seed: u64,
}

impl Default for LogRegConfig {
    fn default() -> Self {
        LogRegConfig {
            lr: 0.1,
            l2: 1e-4,
            max_iters: 5000,
            tol: 1e-6,
            rng_seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogRegModel {
    pub mode: FeatureMode,
    pub weights: Vec<f64>,
    pub bias: f64,
    /// Per-feature training mean and scale used to standardize inputs.
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    pub lr: f64,
    pub l2: f64,
    pub iterations: usize,
    pub rng_seed: u64,
    pub threshold: f64,
    pub loss_history: Vec<f64>,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Mean log-loss plus `(l2/2)·‖w‖²` and its gradient with respect to
/// `(w, b)`, on already standardized rows.
pub fn logreg_loss_grad(x: &[Vec<f64>], y: &[bool], w: &[f64], b: f64, l2: f64) -> (f64, Vec<f64>, f64) {
    let n = x.len() as f64;
    let mut loss = 0.0;
    let mut gw = vec![0.0; w.len()];
    let mut gb = 0.0;
    for (row, &label) in x.iter().zip(y) {
        let z = row.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() + b;
        // -[y ln σ(z) + (1-y) ln(1-σ(z))] = softplus(z) - y·z
        loss += softplus(z) - if label { z } else { 0.0 };
        let r = sigmoid(z) - f64::from(u8::from(label));
        for (g, a) in gw.iter_mut().zip(row) {
            *g += r * a;
        }
        gb += r;
    }
    loss /= n;
    gb /= n;
    for (g, wi) in gw.iter_mut().zip(w) {
        *g = *g / n + l2 * wi;
    }
    loss += 0.5 * l2 * w.iter().map(|v| v * v).sum::<f64>();
    (loss, gw, gb)
}

fn standardizer(rows: &[FeatureRow]) -> (Vec<f64>, Vec<f64>) {
    let d = rows[0].values.len();
    let n = rows.len() as f64;
    let mut mean = vec![0.0; d];
    for r in rows {
        for (m, v) in mean.iter_mut().zip(&r.values) {
            *m += v / n;
        }
    }
    let mut scale = vec![0.0; d];
    for r in rows {
        for ((s, v), m) in scale.iter_mut().zip(&r.values).zip(&mean) {
            *s += (v - m) * (v - m) / n;
        }
    }
    for s in &mut scale {
        *s = if *s > 0.0 { s.sqrt() } else { 1.0 };
    }
    (mean, scale)
}

fn standardize(values: &[f64], mean: &[f64], scale: &[f64]) -> Vec<f64> {
    values.iter().zip(mean).zip(scale).map(|((v, m), s)| (v - m) / s).collect()
}

/// Full-batch gradient descent from zero weights on standardized features.
/// Stops after `max_iters` or once the gradient max-norm drops below `tol`.
pub fn train_logreg(rows: &[FeatureRow], cfg: &LogRegConfig) -> Result<LogRegModel, ClassifyError> {
    if !(cfg.lr > 0.0) || cfg.l2 < 0.0 {
        return Err(ClassifyError::Config("need lr > 0 and l2 >= 0".into()));
    }
    for label in [true, false] {
        if !rows.iter().any(|r| r.label == label) {
            return Err(ClassifyError::EmptyClass(label as u8));
        }
    }
    let d = rows[0].values.len();
    if let Some(r) = rows.iter().find(|r| r.values.len() != d) {
        return Err(ClassifyError::LengthMismatch {
            expected: d,
            found: r.values.len(),
        });
    }
    let (mean, scale) = standardizer(rows);
    let x: Vec<Vec<f64>> = rows.iter().map(|r| standardize(&r.values, &mean, &scale)).collect();
    let y: Vec<bool> = rows.iter().map(|r| r.label).collect();
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut history = Vec::new();
    let mut iterations = 0;
    while iterations < cfg.max_iters {
        let (loss, gw, gb) = logreg_loss_grad(&x, &y, &w, b, cfg.l2);
        if !loss.is_finite() {
            return Err(ClassifyError::NonFinite(iterations));
        }
        history.push(loss);
        let gmax = gw.iter().fold(gb.abs(), |m, g| m.max(g.abs()));
        if gmax < cfg.tol {
            break;
        }
        for (wi, g) in w.iter_mut().zip(&gw) {
            *wi -= cfg.lr * g;
        }
        b -= cfg.lr * gb;
        iterations += 1;
    }
    if !w.iter().all(|v| v.is_finite()) || !b.is_finite() {
        return Err(ClassifyError::NonFinite(iterations));
    }
    Ok(LogRegModel {
        mode: rows[0].mode,
        weights: w,
        bias: b,
        mean,
        scale,
        lr: cfg.lr,
        l2: cfg.l2,
        iterations,
        rng_seed: cfg.rng_seed,
        threshold: 0.5,
        loss_history: history,
    })
}

impl LogRegModel {
    pub fn probability(&self, values: &[f64]) -> Result<f64, ClassifyError> {
        if values.len() != self.weights.len() {
            return Err(ClassifyError::LengthMismatch {
                expected: self.weights.len(),
                found: values.len(),
            });
        }
        let x = standardize(values, &self.mean, &self.scale);
        Ok(sigmoid(x.iter().zip(&self.weights).map(|(a, b)| a * b).sum::<f64>() + self.bias))
    }
}

/// `(probability, label)` per row; label is `probability >= threshold`.
pub fn predict(model: &LogRegModel, rows: &[FeatureRow]) -> Result<Vec<(f64, bool)>, ClassifyError> {
    rows.iter()
        .map(|r| model.probability(&r.values).map(|p| (p, p >= model.threshold)))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfusionMatrix {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    /// FP / (FP + TN).
    pub fpr_actual: f64,
    pub fnr: f64,
    /// FP / (FP + TP), i.e. 1 − precision.
    pub fdr: f64,
    /// Names of rates whose denominator was zero; those are reported as 0.
    pub undefined: Vec<&'static str>,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn from_counts(tp: usize, fp: usize, tn: usize, fn_: usize) -> ConfusionMatrix {
        let mut undefined = Vec::new();
        let mut rate = |name: &'static str, num: usize, den: usize| {
            if den == 0 {
                undefined.push(name);
                0.0
            } else {
                num as f64 / den as f64
            }
        };
        let accuracy = rate("accuracy", tp + tn, tp + tn + fp + fn_);
        let precision = rate("precision", tp, tp + fp);
        let recall = rate("recall", tp, tp + fn_);
        let fpr_actual = rate("fpr_actual", fp, fp + tn);
        let fdr = rate("fdr", fp, fp + tp);
        let fnr = if tp + fn_ == 0 {
            undefined.push("fnr");
            0.0
        } else {
            1.0 - recall
        };
        ConfusionMatrix {
            tp,
            fp,
            tn,
            fn_,
            accuracy,
            precision,
            recall,
            fpr_actual,
            fnr,
            fdr,
            undefined,
        }
    }

    /// Parses the text written by `Display`.
    pub fn parse(text: &str) -> Result<ConfusionMatrix, ClassifyError> {
        let kv = parse_kv(text);
        let get = |k: &str| -> Result<usize, ClassifyError> {
            kv.get(k)
                .ok_or_else(|| ClassifyError::Parse(format!("missing {k}")))?
                .parse()
                .map_err(|_| ClassifyError::Parse(format!("bad {k}")))
        };
        Ok(ConfusionMatrix::from_counts(get("tp")?, get("fp")?, get("tn")?, get("fn")?))
    }
}

impl fmt::Display for ConfusionMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "tp={}\nfp={}\ntn={}\nfn={}", self.tp, self.fp, self.tn, self.fn_)?;
        writeln!(f, "accuracy={}\nprecision={}\nrecall={}", self.accuracy, self.precision, self.recall)?;
        writeln!(f, "fpr_actual={}\nfnr={}\nfdr={}", self.fpr_actual, self.fnr, self.fdr)?;
        writeln!(f, "undefined={}", self.undefined.join(","))?;
        writeln!(f, "{:>10} {:>10} {:>10}", "", "pred_pos", "pred_neg")?;
        writeln!(f, "{:>10} {:>10} {:>10}", "actual_pos", self.tp, self.fn_)?;
        writeln!(f, "{:>10} {:>10} {:>10}", "actual_neg", self.fp, self.tn)
    }
}

pub fn evaluate(predictions: &[bool], truths: &[bool]) -> Result<ConfusionMatrix, ClassifyError> {
    if predictions.len() != truths.len() || truths.is_empty() {
        return Err(ClassifyError::LengthMismatch {
            expected: truths.len(),
            found: predictions.len(),
        });
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for (&p, &t) in predictions.iter().zip(truths) {
        match (p, t) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    Ok(ConfusionMatrix::from_counts(tp, fp, tn, fn_))
}

/// Predicts `rows` and scores them against their labels.
pub fn evaluate_rows(model: &LogRegModel, rows: &[FeatureRow]) -> Result<ConfusionMatrix, ClassifyError> {
    let preds: Vec<bool> = predict(model, rows)?.into_iter().map(|(_, l)| l).collect();
    let truths: Vec<bool> = rows.iter().map(|r| r.label).collect();
    evaluate(&preds, &truths)
}

fn parse_kv(text: &str) -> BTreeMap<&str, &str> {
    text.lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.trim(), v.trim()))
        .collect()
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl fmt::Display for LogRegModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "mode={}", self.mode)?;
        writeln!(f, "bias={}", self.bias)?;
        writeln!(f, "weights={}", join(&self.weights))?;
        writeln!(f, "mean={}", join(&self.mean))?;
        writeln!(f, "scale={}", join(&self.scale))?;
        writeln!(f, "threshold={}", self.threshold)?;
        writeln!(f, "lr={}\nl2={}\niterations={}\nseed={}", self.lr, self.l2, self.iterations, self.rng_seed)?;
        writeln!(f, "final_loss={}", self.loss_history.last().copied().unwrap_or(f64::NAN))
    }
}

impl LogRegModel {
    pub fn parse(text: &str) -> Result<LogRegModel, ClassifyError> {
        let kv = parse_kv(text);
        let get = |k: &str| kv.get(k).copied().ok_or_else(|| ClassifyError::Parse(format!("model file missing {k}")));
        let num = |k: &str| -> Result<f64, ClassifyError> { get(k)?.parse().map_err(|_| ClassifyError::Parse(format!("bad {k}"))) };
        let vec = |k: &str| -> Result<Vec<f64>, ClassifyError> {
            let s = get(k)?;
            if s.is_empty() {
                return Ok(Vec::new());
            }
            s.split(',')
                .map(|x| x.parse().map_err(|_| ClassifyError::Parse(format!("bad value in {k}"))))
                .collect()
        };
        let weights = vec("weights")?;
        let (mean, scale) = (vec("mean")?, vec("scale")?);
        if mean.len() != weights.len() || scale.len() != weights.len() {
            return Err(ClassifyError::Parse("weights, mean and scale differ in length".into()));
        }
        Ok(LogRegModel {
            mode: get("mode")?.parse().map_err(ClassifyError::Parse)?,
            weights,
            bias: num("bias")?,
            mean,
            scale,
            lr: num("lr")?,
            l2: num("l2")?,
            iterations: num("iterations")? as usize,
            rng_seed: get("seed")?.parse().map_err(|_| ClassifyError::Parse("bad seed".into()))?,
            threshold: num("threshold")?,
            loss_history: Vec::new(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), ClassifyError> {
        fs::write(path, self.to_string())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<LogRegModel, ClassifyError> {
        LogRegModel::parse(&fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(v: Vec<f64>, label: bool) -> FeatureRow {
        FeatureRow {
            author: String::new(),
            mode: FeatureMode::GraphOnly,
            values: v,
            label,
        }
    }

    #[test]
    fn confusion_hand_counts() {
        let m = evaluate(&[true, false, false, true], &[true, true, false, false]).unwrap();
        assert_eq!((m.tp, m.fn_, m.tn, m.fp), (1, 1, 1, 1));
        assert_eq!((m.accuracy, m.precision, m.recall), (0.5, 0.5, 0.5));
        let m = evaluate(&[true, false], &[true, false]).unwrap();
        assert_eq!((m.accuracy, m.fnr), (1.0, 0.0));
        let m = evaluate(&[false, false], &[true, true]).unwrap();
        assert_eq!((m.recall, m.precision), (0.0, 0.0));
        assert!(m.undefined.contains(&"precision"));
        assert!(evaluate(&[true], &[true, false]).is_err());
        assert_eq!(ConfusionMatrix::parse(&m.to_string()).unwrap(), m);
    }

    #[test]
    fn subsample_counts() {
        let pos: Vec<_> = (0..10).map(|i| row(vec![i as f64], true)).collect();
        let neg: Vec<_> = (0..1000).map(|i| row(vec![i as f64], false)).collect();
        let s = balanced_subsample(&pos, &neg, 1.0, 3).unwrap();
        assert_eq!(s.iter().filter(|r| r.label).count(), 10);
        assert_eq!(s.iter().filter(|r| !r.label).count(), 10);
        let s = balanced_subsample(&pos, &neg[..3], 1.0, 3).unwrap();
        assert_eq!(s.len(), 13);
        let pos: Vec<_> = (0..4060).map(|i| row(vec![i as f64], true)).collect();
        let neg: Vec<_> = (0..9000).map(|i| row(vec![i as f64], false)).collect();
        let s = balanced_subsample(&pos, &neg, 1.12, 3).unwrap();
        assert_eq!(s.len() - 4060, 4548);
        assert!(balanced_subsample(&[], &neg, 1.0, 3).is_err());
    }

    #[test]
    fn split_is_stratified_and_guarded() {
        let rows: Vec<_> = (0..100).map(|i| row(vec![i as f64], i < 30)).collect();
        let (train, test) = split_dataset(&rows, 0.2, 9).unwrap();
        assert_eq!((train.len(), test.len()), (80, 20));
        assert_eq!(test.iter().filter(|r| r.label).count(), 6);
        assert_eq!(split_dataset(&rows, 0.2, 9).unwrap(), (train, test));
        let small: Vec<_> = (0..10).map(|i| row(vec![i as f64], i % 2 == 0)).collect();
        assert!(split_dataset(&small, 0.999, 1).is_err());
        let one_class: Vec<_> = (0..10).map(|i| row(vec![i as f64], true)).collect();
        assert!(matches!(split_dataset(&one_class, 0.5, 1), Err(ClassifyError::EmptyClass(0))));
    }

    #[test]
    fn separable_and_prediction_basics() {
        let rows: Vec<_> = (0..50).flat_map(|_| [row(vec![-1.0], false), row(vec![1.0], true)]).collect();
        let m = train_logreg(&rows, &LogRegConfig::default()).unwrap();
        assert_eq!(evaluate_rows(&m, &rows).unwrap().accuracy, 1.0);
        let zero = LogRegModel {
            weights: vec![0.0, 0.0],
            bias: 0.0,
            mean: vec![0.0; 2],
            scale: vec![1.0; 2],
            ..m.clone()
        };
        assert_eq!(zero.probability(&[3.0, -7.0]).unwrap(), 0.5);
        assert!(zero.probability(&[1.0]).is_err());
        let one = LogRegModel {
            weights: vec![1.0],
            bias: 0.0,
            mean: vec![2.0],
            scale: vec![1.0],
            ..m.clone()
        };
        assert_eq!(one.probability(&[2.0]).unwrap(), 0.5);
        assert!(one.probability(&[3.0]).unwrap() > one.probability(&[2.5]).unwrap());
        let same: Vec<_> = (0..5).map(|i| row(vec![i as f64], true)).collect();
        assert!(train_logreg(&same, &LogRegConfig::default()).is_err());
        let back = LogRegModel::parse(&m.to_string()).unwrap();
        assert_eq!(back.weights, m.weights);
        assert_eq!(back.bias, m.bias);
        assert_eq!(back.mode, m.mode);
    }
}
