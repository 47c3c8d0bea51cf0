//! Evaluation harness: labelling, under-sampling, stratified
//! cross-validation, method-to-class projection and P/R/F reporting.

pub mod learners;

use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::DatasetEntry;
use crate::metrics::columns;

pub use learners::{fit, Algorithm, Hyperparameters, Model};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no {0} instances; evaluation needs both labels")]
    MissingClass(&'static str),
    #[error("{found} instances are too few for {folds}-fold cross-validation")]
    TooFew { found: usize, folds: usize },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("no prediction for {hash} {fqn}")]
    MissingPrediction { hash: String, fqn: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledInstance {
    pub features: Vec<f64>,
    pub buggy: bool,
    pub commit: String,
    pub fqn: String,
    pub parent_fqn: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabeledSet {
    pub columns: Vec<String>,
    pub instances: Vec<LabeledInstance>,
}

impl LabeledSet {
    pub fn counts(&self) -> (usize, usize) {
        let b = self.instances.iter().filter(|i| i.buggy).count();
        (b, self.instances.len() - b)
    }
}

/// Binary labels from bug counts. Metric columns that are empty for any
/// entry are dropped from the features.
pub fn label(entries: &[DatasetEntry]) -> LabeledSet {
    let Some(first) = entries.first() else {
        return LabeledSet::default();
    };
    let names = columns(first.level);
    let keep: Vec<usize> = (0..names.len())
        .filter(|&j| entries.iter().all(|e| e.metrics.values.get(j).copied().flatten().is_some()))
        .collect();
    LabeledSet {
        columns: keep.iter().map(|&j| names[j].to_string()).collect(),
        instances: entries
            .iter()
            .map(|e| LabeledInstance {
                features: keep.iter().map(|&j| e.metrics.values[j].unwrap()).collect(),
                buggy: e.is_buggy(),
                commit: e.commit_hash.clone(),
                fqn: e.fqn.clone(),
                parent_fqn: e.parent_fqn.clone(),
            })
            .collect(),
    }
}

/// Mixes a seed with stream identifiers (splitmix64 finalizer).
pub fn derive_seed(seed: u64, parts: &[u64]) -> u64 {
    let mut z = seed;
    for &p in parts {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(p.wrapping_mul(0xD1B5_4A32_D192_ED03));
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}

/// Reduces the majority class of `idx` to the minority size. Returns the
/// kept indices in ascending order.
pub fn undersample_indices(idx: &[usize], buggy: impl Fn(usize) -> bool, seed: u64) -> Result<Vec<usize>, EvalError> {
    let (mut b, mut c): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| buggy(i));
    if b.is_empty() {
        return Err(EvalError::MissingClass("buggy"));
    }
    if c.is_empty() {
        return Err(EvalError::MissingClass("clean"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = b.len().min(c.len());
    let major = if b.len() > c.len() { &mut b } else { &mut c };
    major.shuffle(&mut rng);
    major.truncate(n);
    let mut kept: Vec<usize> = b.into_iter().chain(c).collect();
    kept.sort_unstable();
    Ok(kept)
}

pub fn undersample(instances: &[LabeledInstance], seed: u64) -> Result<Vec<LabeledInstance>, EvalError> {
    let idx: Vec<usize> = (0..instances.len()).collect();
    let kept = undersample_indices(&idx, |i| instances[i].buggy, seed)?;
    Ok(kept.into_iter().map(|i| instances[i].clone()).collect())
}

pub fn train(
    algo: Algorithm,
    instances: &[LabeledInstance],
    hyper: &Hyperparameters,
    seed: u64,
) -> Model {
    let x: Vec<&[f64]> = instances.iter().map(|i| i.features.as_slice()).collect();
    let y: Vec<bool> = instances.iter().map(|i| i.buggy).collect();
    fit(algo, &x, &y, hyper, seed)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn record(&mut self, predicted: bool, actual: bool) {
        match (predicted, actual) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, false) => self.tn += 1,
            (false, true) => self.fn_ += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

impl std::ops::Add for ConfusionMatrix {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            tn: self.tn + o.tn,
            fn_: self.fn_ + o.fn_,
        }
    }
}

impl std::iter::Sum for ConfusionMatrix {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::default(), |a, b| a + b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
    /// A zero denominator was replaced by 0.
    pub undefined: bool,
}

pub fn prf(m: &ConfusionMatrix) -> Prf {
    let mut undefined = false;
    let mut ratio = |num: u64, den: u64| {
        if den == 0 {
            undefined = true;
            0.0
        } else {
            num as f64 / den as f64
        }
    };
    let precision = ratio(m.tp, m.tp + m.fp);
    let recall = ratio(m.tp, m.tp + m.fn_);
    let f_measure = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Prf {
        precision,
        recall,
        f_measure,
        undefined,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvConfig {
    pub folds: usize,
    pub repeats: usize,
    pub seed: u64,
    pub hyper: Hyperparameters,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            folds: 10,
            repeats: 1,
            seed: 1,
            hyper: Hyperparameters::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub algorithm: String,
    pub level: String,
    pub matrix: ConfusionMatrix,
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
    pub undefined: bool,
    /// Fold matrices, repeat-major.
    pub per_fold: Vec<ConfusionMatrix>,
    pub repeats: usize,
    pub folds: usize,
    /// Prediction per instance for each repeat.
    #[serde(skip)]
    pub predictions: Vec<Vec<bool>>,
}

impl EvalResult {
    fn from_parts(
        algorithm: String,
        level: String,
        per_fold: Vec<ConfusionMatrix>,
        repeats: usize,
        folds: usize,
        predictions: Vec<Vec<bool>>,
    ) -> Self {
        let matrix: ConfusionMatrix = per_fold.iter().copied().sum();
        let p = prf(&matrix);
        Self {
            algorithm,
            level,
            matrix,
            precision: p.precision,
            recall: p.recall,
            f_measure: p.f_measure,
            undefined: p.undefined,
            per_fold,
            repeats,
            folds,
            predictions,
        }
    }
}

/// Assigns each instance a fold, stratified by label.
pub fn stratified_folds(labels: &[bool], k: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold = vec![0; labels.len()];
    for class in [true, false] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(&mut rng);
        for (j, i) in idx.into_iter().enumerate() {
            fold[i] = j % k;
        }
    }
    fold
}

/// Repeated stratified k-fold cross-validation with under-sampling inside
/// each training fold. Matrices are summed over folds and repeats.
pub fn cross_validate(
    algo: Algorithm,
    set: &LabeledSet,
    level: &str,
    cfg: &CvConfig,
) -> Result<EvalResult, EvalError> {
    let inst = &set.instances;
    let labels: Vec<bool> = inst.iter().map(|i| i.buggy).collect();
    let (b, c) = set.counts();
    if b == 0 {
        return Err(EvalError::MissingClass("buggy"));
    }
    if c == 0 {
        return Err(EvalError::MissingClass("clean"));
    }
    if inst.len() < cfg.folds {
        return Err(EvalError::TooFew {
            found: inst.len(),
            folds: cfg.folds,
        });
    }
    let mut k = cfg.folds;
    if k > b.min(c) {
        k = b.min(c);
        log::warn!("{level}/{algo}: reducing folds from {} to {k} for the smaller class", cfg.folds);
    }
    if k < 2 {
        return Err(EvalError::TooFew { found: b.min(c), folds: 2 });
    }
    let repeats = cfg.repeats.max(1);
    let assignments: Vec<Vec<usize>> = (0..repeats)
        .map(|r| stratified_folds(&labels, k, derive_seed(cfg.seed, &[r as u64])))
        .collect();
    let tasks: Vec<(usize, usize)> = (0..repeats).flat_map(|r| (0..k).map(move |f| (r, f))).collect();
    let outcomes: Vec<(ConfusionMatrix, Vec<(usize, bool)>)> = tasks
        .par_iter()
        .map(|&(r, f)| {
            let folds = &assignments[r];
            let train_idx: Vec<usize> = (0..inst.len()).filter(|&i| folds[i] != f).collect();
            let kept = undersample_indices(&train_idx, |i| labels[i], derive_seed(cfg.seed, &[r as u64, f as u64, 1]))
                .expect("stratified training folds hold both labels");
            let x: Vec<&[f64]> = kept.iter().map(|&i| inst[i].features.as_slice()).collect();
            let y: Vec<bool> = kept.iter().map(|&i| labels[i]).collect();
            let model = fit(algo, &x, &y, &cfg.hyper, derive_seed(cfg.seed, &[r as u64, f as u64, 2]));
            let mut m = ConfusionMatrix::default();
            let mut preds = Vec::new();
            for i in (0..inst.len()).filter(|&i| folds[i] == f) {
                let p = model.predict(&inst[i].features);
                m.record(p, labels[i]);
                preds.push((i, p));
            }
            (m, preds)
        })
        .collect();
    let mut predictions = vec![vec![false; inst.len()]; repeats];
    let mut per_fold = Vec::with_capacity(tasks.len());
    for (&(r, _), (m, preds)) in tasks.iter().zip(outcomes) {
        per_fold.push(m);
        for (i, p) in preds {
            predictions[r][i] = p;
        }
    }
    Ok(EvalResult::from_parts(algo.id().to_string(), level.to_string(), per_fold, repeats, k, predictions))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MethodPrediction {
    pub commit: String,
    pub fqn: String,
    pub parent_fqn: String,
    pub predicted: bool,
    pub actual: bool,
}

/// Class-level matrix: a class (per commit) is predicted buggy when any of
/// its methods is, and actually buggy when any of its methods is.
pub fn project_to_class(preds: &[MethodPrediction]) -> ConfusionMatrix {
    let mut classes: BTreeMap<(&str, &str), (bool, bool)> = BTreeMap::new();
    for p in preds {
        let e = classes.entry((&p.commit, &p.parent_fqn)).or_default();
        e.0 |= p.predicted;
        e.1 |= p.actual;
    }
    let mut m = ConfusionMatrix::default();
    for (pred, actual) in classes.into_values() {
        m.record(pred, actual);
    }
    m
}

/// Projects each repeat of a method-level result onto classes.
pub fn project_result(method: &EvalResult, set: &LabeledSet) -> EvalResult {
    let per_repeat: Vec<ConfusionMatrix> = method
        .predictions
        .iter()
        .map(|preds| {
            let items: Vec<MethodPrediction> = set
                .instances
                .iter()
                .zip(preds)
                .map(|(inst, &p)| MethodPrediction {
                    commit: inst.commit.clone(),
                    fqn: inst.fqn.clone(),
                    parent_fqn: inst.parent_fqn.clone().unwrap_or_default(),
                    predicted: p,
                    actual: inst.buggy,
                })
                .collect();
            project_to_class(&items)
        })
        .collect();
    EvalResult::from_parts(
        method.algorithm.clone(),
        "projected".to_string(),
        per_repeat,
        method.repeats,
        method.folds,
        Vec::new(),
    )
}

/// Unweighted means of P, R and F over per-project results.
pub fn mean_over_projects(results: &[&EvalResult]) -> Prf {
    let n = results.len().max(1) as f64;
    let mean = |f: fn(&EvalResult) -> f64| results.iter().map(|r| f(r)).fold(0.0, |a, b| a + b) / n;
    Prf {
        precision: mean(|r| r.precision),
        recall: mean(|r| r.recall),
        f_measure: mean(|r| r.f_measure),
        undefined: results.iter().any(|r| r.undefined),
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> EvalError {
    EvalError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

/// Reads `hash,fqn,predicted` rows produced by an external learner.
/// `predicted` is `buggy`/`clean`, `1`/`0` or `true`/`false`.
pub fn read_predictions(path: &Path) -> Result<HashMap<(String, String), bool>, EvalError> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| io_err(path, e))?;
    let mut out = HashMap::new();
    for row in rdr.records() {
        let row = row.map_err(|e| io_err(path, e))?;
        let (Some(h), Some(f), Some(p)) = (row.get(0), row.get(1), row.get(2)) else {
            return Err(io_err(path, "expected hash,fqn,predicted"));
        };
        let p = match p.trim().to_ascii_lowercase().as_str() {
            "buggy" | "1" | "true" => true,
            "clean" | "0" | "false" => false,
            other => return Err(io_err(path, format!("bad prediction `{other}`"))),
        };
        out.insert((h.to_string(), f.to_string()), p);
    }
    Ok(out)
}

pub fn evaluate_predictions(
    set: &LabeledSet,
    preds: &HashMap<(String, String), bool>,
) -> Result<ConfusionMatrix, EvalError> {
    let mut m = ConfusionMatrix::default();
    for inst in &set.instances {
        let p = preds
            .get(&(inst.commit.clone(), inst.fqn.clone()))
            .ok_or_else(|| EvalError::MissingPrediction {
                hash: inst.commit.clone(),
                fqn: inst.fqn.clone(),
            })?;
        m.record(*p, inst.buggy);
    }
    Ok(m)
}

/// One line of the results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub project: String,
    pub filter: String,
    pub level: String,
    pub algorithm: String,
    pub repeats: usize,
    pub folds: usize,
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
    pub undefined: bool,
}

impl ResultRow {
    pub fn new(project: &str, filter: &str, r: &EvalResult) -> Self {
        Self {
            project: project.to_string(),
            filter: filter.to_string(),
            level: r.level.clone(),
            algorithm: r.algorithm.clone(),
            repeats: r.repeats,
            folds: r.folds,
            tp: r.matrix.tp,
            fp: r.matrix.fp,
            tn: r.matrix.tn,
            fn_: r.matrix.fn_,
            precision: r.precision,
            recall: r.recall,
            f_measure: r.f_measure,
            undefined: r.undefined,
        }
    }
}

pub fn write_results_csv(rows: &[ResultRow], path: &Path) -> Result<(), EvalError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| io_err(path, e))?;
    }
    let bytes = w.into_inner().map_err(|e| io_err(path, e))?;
    crate::ingest::write_atomic(path, &bytes).map_err(|e| io_err(path, e))
}

pub fn read_results_csv(path: &Path) -> Result<Vec<ResultRow>, EvalError> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| io_err(path, e))?;
    rdr.deserialize().map(|r| r.map_err(|e| io_err(path, e))).collect()
}

/// Aligned text rendering of the results table.
pub fn results_table(rows: &[ResultRow]) -> String {
    let header = ["project", "filter", "level", "algorithm", "precision", "recall", "f_measure"];
    let cells: Vec<[String; 7]> = rows
        .iter()
        .map(|r| {
            [
                r.project.clone(),
                r.filter.clone(),
                r.level.clone(),
                r.algorithm.clone(),
                format!("{:.4}", r.precision),
                format!("{:.4}", r.recall),
                format!("{:.4}{}", r.f_measure, if r.undefined { "*" } else { "" }),
            ]
        })
        .collect();
    let mut width = header.map(str::len);
    for row in &cells {
        for (w, c) in width.iter_mut().zip(row) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = Vec::new();
    let line = |out: &mut Vec<u8>, row: &[&str]| {
        let parts: Vec<String> = row
            .iter()
            .zip(&width)
            .enumerate()
            .map(|(i, (c, w))| if i < 4 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect();
        writeln!(out, "{}", parts.join("  ").trim_end()).unwrap();
    };
    line(&mut out, &header);
    for row in &cells {
        line(&mut out, &row.iter().map(String::as_str).collect::<Vec<_>>());
    }
    if rows.iter().any(|r| r.undefined) {
        writeln!(out, "* a precision or recall denominator was zero").unwrap();
    }
    String::from_utf8(out).unwrap()
}
