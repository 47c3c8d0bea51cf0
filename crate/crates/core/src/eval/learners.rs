//! Built-in binary classifiers. Labels are `true` for buggy.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    OneR,
    NaiveBayes,
    Logistic,
    DecisionTree,
    RandomTree,
    RandomForest,
    /// Always predicts the given label; a baseline, not a learner.
    Constant(bool),
}

impl Algorithm {
    pub const BUILTIN: [Algorithm; 6] = [
        Algorithm::OneR,
        Algorithm::NaiveBayes,
        Algorithm::Logistic,
        Algorithm::DecisionTree,
        Algorithm::RandomTree,
        Algorithm::RandomForest,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Algorithm::OneR => "one_r",
            Algorithm::NaiveBayes => "naive_bayes",
            Algorithm::Logistic => "logistic",
            Algorithm::DecisionTree => "decision_tree",
            Algorithm::RandomTree => "random_tree",
            Algorithm::RandomForest => "random_forest",
            Algorithm::Constant(true) => "constant_buggy",
            Algorithm::Constant(false) => "constant_clean",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "one_r" => Ok(Algorithm::OneR),
            "naive_bayes" => Ok(Algorithm::NaiveBayes),
            "logistic" => Ok(Algorithm::Logistic),
            "decision_tree" => Ok(Algorithm::DecisionTree),
            "random_tree" => Ok(Algorithm::RandomTree),
            "random_forest" => Ok(Algorithm::RandomForest),
            "constant_buggy" => Ok(Algorithm::Constant(true)),
            "constant_clean" => Ok(Algorithm::Constant(false)),
            other => Err(format!("unknown algorithm `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparameters {
    /// Forest size.
    pub trees: usize,
    /// Bootstrap sampling for forest members.
    pub bootstrap: bool,
    /// Features tried per split by random trees; `None` means ceil(sqrt(d)).
    pub features_per_split: Option<usize>,
    /// Minimum majority count of a OneR interval.
    pub min_bucket: usize,
    /// Minimum instances per branch of the pruned tree.
    pub min_leaf: usize,
    /// Pruning confidence of the pruned tree.
    pub confidence: f64,
    /// L2 penalty of the logistic model, on standardized features.
    pub ridge: f64,
    pub max_iter: usize,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Self {
            trees: 100,
            bootstrap: true,
            features_per_split: None,
            min_bucket: 6,
            min_leaf: 2,
            confidence: 0.25,
            ridge: 1e-4,
            max_iter: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Constant(bool),
    OneR(OneR),
    NaiveBayes(NaiveBayes),
    Logistic(Logistic),
    Tree(Tree),
    Forest(Vec<Tree>),
}

impl Model {
    pub fn predict(&self, x: &[f64]) -> bool {
        match self {
            Model::Constant(b) => *b,
            Model::OneR(m) => m.predict(x),
            Model::NaiveBayes(m) => m.predict(x),
            Model::Logistic(m) => m.probability(x) > 0.5,
            Model::Tree(t) => t.leaf(x).label,
            Model::Forest(trees) => {
                let p = trees.iter().map(|t| t.leaf(x).p_buggy()).fold(0.0, |a, b| a + b)
                    / trees.len() as f64;
                if p != 0.5 {
                    return p > 0.5;
                }
                let votes = trees.iter().filter(|t| t.leaf(x).label).count();
                match (2 * votes).cmp(&trees.len()) {
                    std::cmp::Ordering::Greater => true,
                    std::cmp::Ordering::Less => false,
                    std::cmp::Ordering::Equal => trees[0].leaf(x).label,
                }
            }
        }
    }
}

/// Trains a model on rows `x` with labels `y`. A training set holding a
/// single label yields a constant model.
pub fn fit(algo: Algorithm, x: &[&[f64]], y: &[bool], hyper: &Hyperparameters, seed: u64) -> Model {
    if let Algorithm::Constant(b) = algo {
        return Model::Constant(b);
    }
    let buggy = y.iter().filter(|&&b| b).count();
    if x.is_empty() || buggy == 0 || buggy == y.len() {
        log::warn!("{algo}: training set has a single label, using a constant classifier");
        return Model::Constant(buggy > 0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match algo {
        Algorithm::OneR => Model::OneR(OneR::fit(x, y, hyper.min_bucket.max(1), &mut rng)),
        Algorithm::NaiveBayes => Model::NaiveBayes(NaiveBayes::fit(x, y)),
        Algorithm::Logistic => Model::Logistic(Logistic::fit(x, y, hyper.ridge, hyper.max_iter)),
        Algorithm::DecisionTree => Model::Tree(Tree::pruned(x, y, hyper, &mut rng)),
        Algorithm::RandomTree => Model::Tree(Tree::random(x, y, hyper, &mut rng)),
        Algorithm::RandomForest => Model::Forest(forest(x, y, hyper, seed)),
        Algorithm::Constant(_) => unreachable!(),
    }
}

fn majority(counts: [f64; 2], rng: &mut ChaCha8Rng) -> bool {
    if counts[1] != counts[0] {
        counts[1] > counts[0]
    } else {
        rng.random_bool(0.5)
    }
}

// ---------------------------------------------------------------- OneR

#[derive(Debug, Clone, PartialEq)]
pub struct OneR {
    pub feature: usize,
    /// Interval `i` holds values below `bounds[i]`; the last is unbounded.
    pub bounds: Vec<f64>,
    pub labels: Vec<bool>,
    pub errors: usize,
}

impl OneR {
    fn fit(x: &[&[f64]], y: &[bool], min_bucket: usize, rng: &mut ChaCha8Rng) -> Self {
        let d = x[0].len();
        let mut best: Option<OneR> = None;
        for f in 0..d {
            let rule = Self::rule(x, y, f, min_bucket, rng);
            if best.as_ref().is_none_or(|b| rule.errors < b.errors) {
                best = Some(rule);
            }
        }
        best.unwrap_or(OneR {
            feature: 0,
            bounds: Vec::new(),
            labels: vec![majority(counts(y.iter().copied()), rng)],
            errors: 0,
        })
    }

    fn rule(x: &[&[f64]], y: &[bool], f: usize, min_bucket: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut order: Vec<usize> = (0..x.len()).collect();
        order.sort_by(|&a, &b| x[a][f].total_cmp(&x[b][f]).then(a.cmp(&b)));
        let mut buckets: Vec<(f64, [f64; 2])> = Vec::new();
        let mut i = 0;
        while i < order.len() {
            let mut c = [0.0; 2];
            loop {
                c[y[order[i]] as usize] += 1.0;
                i += 1;
                if i == order.len() {
                    break;
                }
                let (cur, prev) = (x[order[i]][f], x[order[i - 1]][f]);
                if cur == prev || c[0] == c[1] {
                    continue;
                }
                let maj = c[1] > c[0];
                if c[maj as usize] >= min_bucket as f64 && y[order[i]] != maj {
                    break;
                }
            }
            let bound = if i < order.len() {
                (x[order[i - 1]][f] + x[order[i]][f]) / 2.0
            } else {
                f64::INFINITY
            };
            buckets.push((bound, c));
        }
        let mut bounds = Vec::new();
        let mut labels: Vec<bool> = Vec::new();
        let mut errors = 0.0;
        for (bound, c) in buckets {
            let label = majority(c, rng);
            errors += c[!label as usize];
            if labels.last() == Some(&label) {
                *bounds.last_mut().unwrap() = bound;
            } else {
                labels.push(label);
                bounds.push(bound);
            }
        }
        OneR {
            feature: f,
            bounds,
            labels,
            errors: errors as usize,
        }
    }

    pub fn predict(&self, x: &[f64]) -> bool {
        let v = x[self.feature];
        let i = self.bounds.iter().position(|&b| v < b).unwrap_or(self.labels.len() - 1);
        self.labels[i]
    }
}

fn counts(y: impl Iterator<Item = bool>) -> [f64; 2] {
    let mut c = [0.0; 2];
    for b in y {
        c[b as usize] += 1.0;
    }
    c
}

// ---------------------------------------------------------------- scaling

#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    fn fit(x: &[&[f64]]) -> Self {
        let d = x[0].len();
        let n = x.len() as f64;
        let mut mean = vec![0.0; d];
        for row in x {
            for (m, v) in mean.iter_mut().zip(row.iter()) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for row in x {
            for j in 0..d {
                var[j] += (row[j] - mean[j]).powi(2);
            }
        }
        let scale = var
            .into_iter()
            .map(|v| {
                let s = (v / n).sqrt();
                if s > 1e-12 && s.is_finite() {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, scale }
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }
}

// ---------------------------------------------------------------- naive Bayes

#[derive(Debug, Clone, PartialEq)]
pub struct NaiveBayes {
    pub scaler: Standardizer,
    pub log_prior: [f64; 2],
    pub mean: [Vec<f64>; 2],
    pub var: [Vec<f64>; 2],
}

const MIN_VARIANCE: f64 = 1e-6;

impl NaiveBayes {
    fn fit(x: &[&[f64]], y: &[bool]) -> Self {
        let scaler = Standardizer::fit(x);
        let z: Vec<Vec<f64>> = x.iter().map(|r| scaler.apply(r)).collect();
        let d = x[0].len();
        let c = counts(y.iter().copied());
        let n = y.len() as f64;
        let mut mean = [vec![0.0; d], vec![0.0; d]];
        let mut var = [vec![0.0; d], vec![0.0; d]];
        for (row, &label) in z.iter().zip(y) {
            for j in 0..d {
                mean[label as usize][j] += row[j];
            }
        }
        for k in 0..2 {
            mean[k].iter_mut().for_each(|m| *m /= c[k]);
        }
        for (row, &label) in z.iter().zip(y) {
            let k = label as usize;
            for j in 0..d {
                var[k][j] += (row[j] - mean[k][j]).powi(2);
            }
        }
        for k in 0..2 {
            var[k].iter_mut().for_each(|v| *v = (*v / c[k]).max(MIN_VARIANCE));
        }
        let log_prior = [((c[0] + 1.0) / (n + 2.0)).ln(), ((c[1] + 1.0) / (n + 2.0)).ln()];
        Self {
            scaler,
            log_prior,
            mean,
            var,
        }
    }

    fn score(&self, z: &[f64], k: usize) -> f64 {
        let mut s = self.log_prior[k];
        for j in 0..z.len() {
            let v = self.var[k][j];
            s -= 0.5 * ((2.0 * std::f64::consts::PI * v).ln() + (z[j] - self.mean[k][j]).powi(2) / v);
        }
        s
    }

    pub fn predict(&self, x: &[f64]) -> bool {
        let z = self.scaler.apply(x);
        self.score(&z, 1) > self.score(&z, 0)
    }
}

// ---------------------------------------------------------------- logistic

#[derive(Debug, Clone, PartialEq)]
pub struct Logistic {
    pub scaler: Standardizer,
    /// Intercept first.
    pub weights: Vec<f64>,
}

fn sigmoid(t: f64) -> f64 {
    1.0 / (1.0 + (-t.clamp(-500.0, 500.0)).exp())
}

/// Solves `a x = b` in place by Gaussian elimination with partial pivoting.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            if f != 0.0 {
                for c in col..n {
                    a[r][c] -= f * a[col][c];
                }
                b[r] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).fold(0.0, |p, q| p + q);
        x[r] = (b[r] - s) / a[r][r];
    }
    Some(x)
}

impl Logistic {
    /// Newton iterations on the penalized log-likelihood.
    fn fit(x: &[&[f64]], y: &[bool], ridge: f64, max_iter: usize) -> Self {
        let scaler = Standardizer::fit(x);
        let z: Vec<Vec<f64>> = x
            .iter()
            .map(|r| {
                let mut v = vec![1.0];
                v.extend(scaler.apply(r));
                v
            })
            .collect();
        let p = z[0].len();
        let mut w = vec![0.0; p];
        let ridge = ridge.max(1e-10);
        for _ in 0..max_iter {
            let mut grad = vec![0.0; p];
            let mut hess = vec![vec![0.0; p]; p];
            for (row, &label) in z.iter().zip(y) {
                let mu = sigmoid(dot(&w, row));
                let r = label as u8 as f64 - mu;
                let s = (mu * (1.0 - mu)).max(1e-12);
                for i in 0..p {
                    grad[i] += r * row[i];
                    for j in i..p {
                        hess[i][j] += s * row[i] * row[j];
                    }
                }
            }
            for i in 0..p {
                for j in 0..i {
                    hess[i][j] = hess[j][i];
                }
                if i > 0 {
                    grad[i] -= ridge * w[i];
                    hess[i][i] += ridge;
                }
            }
            let Some(step) = solve(hess, grad) else { break };
            let mut largest: f64 = 0.0;
            for (wi, si) in w.iter_mut().zip(&step) {
                *wi += si;
                largest = largest.max(si.abs());
            }
            if !largest.is_finite() || largest < 1e-8 {
                break;
            }
        }
        Self { scaler, weights: w }
    }

    pub fn probability(&self, x: &[f64]) -> f64 {
        let z = self.scaler.apply(x);
        sigmoid(self.weights[0] + dot(&self.weights[1..], &z))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).fold(0.0, |s, v| s + v)
}

// ---------------------------------------------------------------- trees

#[derive(Debug, Clone, PartialEq)]
pub struct Leaf {
    /// Clean and buggy training counts.
    pub dist: [f64; 2],
    pub label: bool,
}

impl Leaf {
    pub fn p_buggy(&self) -> f64 {
        let n = self.dist[0] + self.dist[1];
        if n > 0.0 {
            self.dist[1] / n
        } else {
            self.label as u8 as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Tree {
    Leaf(Leaf),
    /// Values `<= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: Box<Tree>,
        right: Box<Tree>,
    },
}

fn entropy(c: [f64; 2]) -> f64 {
    let n = c[0] + c[1];
    let mut h = 0.0;
    for v in c {
        if v > 0.0 {
            let p = v / n;
            h -= p * p.log2();
        }
    }
    h
}

struct Candidate {
    feature: usize,
    threshold: f64,
    gain: f64,
    split_info: f64,
}

/// Best binary split of `idx` on feature `f` by information gain, with the
/// number of admissible split points.
fn best_split(
    x: &[&[f64]],
    y: &[bool],
    idx: &[usize],
    f: usize,
    min_side: usize,
    midpoint: bool,
) -> Option<(Candidate, usize)> {
    let mut order = idx.to_vec();
    order.sort_by(|&a, &b| x[a][f].total_cmp(&x[b][f]).then(a.cmp(&b)));
    let total = counts(order.iter().map(|&i| y[i]));
    let n = order.len() as f64;
    let base = entropy(total);
    let mut left = [0.0; 2];
    let mut best: Option<Candidate> = None;
    let mut admissible = 0;
    for k in 0..order.len() - 1 {
        left[y[order[k]] as usize] += 1.0;
        let (a, b) = (x[order[k]][f], x[order[k + 1]][f]);
        if a == b || k + 1 < min_side || order.len() - k - 1 < min_side {
            continue;
        }
        admissible += 1;
        let right = [total[0] - left[0], total[1] - left[1]];
        let nl = (k + 1) as f64;
        let nr = n - nl;
        let gain = base - (nl * entropy(left) + nr * entropy(right)) / n;
        if best.as_ref().is_none_or(|c| gain > c.gain) {
            let split_info = entropy([nl, nr]);
            best = Some(Candidate {
                feature: f,
                threshold: if midpoint { (a + b) / 2.0 } else { a },
                gain,
                split_info,
            });
        }
    }
    best.map(|c| (c, admissible))
}

impl Tree {
    pub fn leaf(&self, x: &[f64]) -> &Leaf {
        let mut t = self;
        loop {
            match t {
                Tree::Leaf(l) => return l,
                Tree::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => t = if x[*feature] <= *threshold { left } else { right },
            }
        }
    }

    pub fn size(&self) -> usize {
        match self {
            Tree::Leaf(_) => 1,
            Tree::Split { left, right, .. } => 1 + left.size() + right.size(),
        }
    }

    fn make_leaf(dist: [f64; 2], rng: &mut ChaCha8Rng) -> Tree {
        Tree::Leaf(Leaf {
            dist,
            label: majority(dist, rng),
        })
    }

    fn partition(x: &[&[f64]], idx: &[usize], f: usize, t: f64) -> (Vec<usize>, Vec<usize>) {
        idx.iter().partition(|&&i| x[i][f] <= t)
    }

    /// Entropy-based tree with gain-ratio splits and error-based pruning,
    /// in the style of C4.5 (no subtree raising).
    pub fn pruned(x: &[&[f64]], y: &[bool], hyper: &Hyperparameters, rng: &mut ChaCha8Rng) -> Tree {
        let idx: Vec<usize> = (0..x.len()).collect();
        let t = Self::grow_c45(x, y, &idx, hyper.min_leaf.max(1), rng);
        t.prune(hyper.confidence.clamp(1e-6, 0.5), rng).0
    }

    fn grow_c45(x: &[&[f64]], y: &[bool], idx: &[usize], min_leaf: usize, rng: &mut ChaCha8Rng) -> Tree {
        let dist = counts(idx.iter().map(|&i| y[i]));
        let n = idx.len();
        if dist[0] == 0.0 || dist[1] == 0.0 || n < 2 * min_leaf {
            return Self::make_leaf(dist, rng);
        }
        let min_side = ((0.1 * n as f64 / 2.0).clamp(min_leaf as f64, 25.0)) as usize;
        let mut cands = Vec::new();
        for f in 0..x[0].len() {
            if let Some((mut c, k)) = best_split(x, y, idx, f, min_side, false) {
                c.gain -= (k as f64).log2() / n as f64;
                if c.gain > 0.0 {
                    cands.push(c);
                }
            }
        }
        if cands.is_empty() {
            return Self::make_leaf(dist, rng);
        }
        let avg = cands.iter().map(|c| c.gain).fold(0.0, |a, b| a + b) / cands.len() as f64;
        let mut best: Option<&Candidate> = None;
        for c in cands.iter().filter(|c| c.gain >= avg - 1e-3) {
            let ratio = c.gain / c.split_info;
            if best.is_none_or(|b| ratio > b.gain / b.split_info) {
                best = Some(c);
            }
        }
        let c = best.expect("nonempty");
        let (l, r) = Self::partition(x, idx, c.feature, c.threshold);
        Tree::Split {
            feature: c.feature,
            threshold: c.threshold,
            left: Box::new(Self::grow_c45(x, y, &l, min_leaf, rng)),
            right: Box::new(Self::grow_c45(x, y, &r, min_leaf, rng)),
        }
    }

    fn dist(&self) -> [f64; 2] {
        match self {
            Tree::Leaf(l) => l.dist,
            Tree::Split { left, right, .. } => {
                let (a, b) = (left.dist(), right.dist());
                [a[0] + b[0], a[1] + b[1]]
            }
        }
    }

    /// Returns the pruned tree and its estimated error count.
    fn prune(self, cf: f64, rng: &mut ChaCha8Rng) -> (Tree, f64) {
        match self {
            Tree::Leaf(l) => {
                let n = l.dist[0] + l.dist[1];
                let e = l.dist[!l.label as usize];
                let est = e + add_errors(n, e, cf);
                (Tree::Leaf(l), est)
            }
            Tree::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                let (l, el) = left.prune(cf, rng);
                let (r, er) = right.prune(cf, rng);
                let subtree = Tree::Split {
                    feature,
                    threshold,
                    left: Box::new(l),
                    right: Box::new(r),
                };
                let dist = subtree.dist();
                let n = dist[0] + dist[1];
                let label = majority(dist, rng);
                let e = dist[!label as usize];
                let as_leaf = e + add_errors(n, e, cf);
                if as_leaf <= el + er + 0.1 {
                    (Tree::Leaf(Leaf { dist, label }), as_leaf)
                } else {
                    (subtree, el + er)
                }
            }
        }
    }

    /// Unpruned tree choosing among a random subset of features per node.
    pub fn random(x: &[&[f64]], y: &[bool], hyper: &Hyperparameters, rng: &mut ChaCha8Rng) -> Tree {
        let d = x[0].len();
        let k = hyper
            .features_per_split
            .unwrap_or_else(|| (d as f64).sqrt().ceil() as usize)
            .clamp(1, d.max(1));
        let idx: Vec<usize> = (0..x.len()).collect();
        Self::grow_random(x, y, &idx, k, rng)
    }

    fn grow_random(x: &[&[f64]], y: &[bool], idx: &[usize], k: usize, rng: &mut ChaCha8Rng) -> Tree {
        let dist = counts(idx.iter().map(|&i| y[i]));
        if dist[0] == 0.0 || dist[1] == 0.0 || idx.len() < 2 {
            return Self::make_leaf(dist, rng);
        }
        let mut features: Vec<usize> = (0..x[0].len()).collect();
        features.shuffle(rng);
        let mut best: Option<Candidate> = None;
        for (tried, &f) in features.iter().enumerate() {
            if tried >= k && best.as_ref().is_some_and(|b| b.gain > 0.0) {
                break;
            }
            if let Some((c, _)) = best_split(x, y, idx, f, 1, true) {
                if best.as_ref().is_none_or(|b| c.gain > b.gain) {
                    best = Some(c);
                }
            }
        }
        match best {
            Some(c) if c.gain > 0.0 => {
                let (l, r) = Self::partition(x, idx, c.feature, c.threshold);
                Tree::Split {
                    feature: c.feature,
                    threshold: c.threshold,
                    left: Box::new(Self::grow_random(x, y, &l, k, rng)),
                    right: Box::new(Self::grow_random(x, y, &r, k, rng)),
                }
            }
            _ => Self::make_leaf(dist, rng),
        }
    }
}

/// Upper confidence bound on extra errors at a leaf with `n` instances and
/// `e` observed errors.
fn add_errors(n: f64, e: f64, cf: f64) -> f64 {
    if n <= 0.0 {
        return 0.0;
    }
    if e < 1.0 {
        let base = n * (1.0 - cf.powf(1.0 / n));
        if e == 0.0 {
            return base;
        }
        return base + e * (add_errors(n, 1.0, cf) - base);
    }
    if e + 0.5 >= n {
        return (n - e).max(0.0);
    }
    let z = normal_quantile(1.0 - cf);
    let f = (e + 0.5) / n;
    let r = (f + z * z / (2.0 * n) + z * (f / n - f * f / n + z * z / (4.0 * n * n)).sqrt())
        / (1.0 + z * z / n);
    r * n - e
}

/// Inverse standard normal CDF by bisection on erfc.
fn normal_quantile(p: f64) -> f64 {
    let (mut lo, mut hi) = (-40.0f64, 40.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if crate::stats::normal_cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Per-member seed of a forest; member 0 uses the forest seed itself.
pub fn member_seed(seed: u64, i: usize) -> u64 {
    seed.wrapping_add((i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn forest(x: &[&[f64]], y: &[bool], hyper: &Hyperparameters, seed: u64) -> Vec<Tree> {
    use rayon::prelude::*;
    (0..hyper.trees.max(1))
        .into_par_iter()
        .map(|i| {
            let s = member_seed(seed, i);
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            if !hyper.bootstrap {
                return Tree::random(x, y, hyper, &mut rng);
            }
            let mut boot = ChaCha8Rng::seed_from_u64(s ^ 0xB007_5EED_B007_5EED);
            let sample: Vec<usize> = (0..x.len()).map(|_| boot.random_range(0..x.len())).collect();
            let bx: Vec<&[f64]> = sample.iter().map(|&i| x[i]).collect();
            let by: Vec<bool> = sample.iter().map(|&i| y[i]).collect();
            if by.iter().all(|&b| b == by[0]) {
                return Tree::Leaf(Leaf {
                    dist: counts(by.iter().copied()),
                    label: by[0],
                });
            }
            Tree::random(&bx, &by, hyper, &mut rng)
        })
        .collect()
}
