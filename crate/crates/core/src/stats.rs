//! Nonparametric tests for comparing learners and filters: Friedman,
//! Nemenyi post-hoc, Wilcoxon signed-rank, effect size and count ratios.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

/// Two-tailed 5% threshold of the normal approximation.
pub const Z_CRIT: f64 = 1.96;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("need at least {need} {what}, found {found}")]
    TooSmall { what: &'static str, need: usize, found: usize },
    #[error("row {row} has {found} values, expected {expected}")]
    Ragged { row: usize, found: usize, expected: usize },
    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("samples differ in length ({0} vs {1})")]
    Length(usize, usize),
    #[error("zero denominator")]
    ZeroDenominator,
    #[error("no critical value for k = {k} at alpha = {alpha}")]
    NoCriticalValue { k: usize, alpha: f64 },
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Regularized upper incomplete gamma Q(a, x). Uses the series for P
/// below x = a + 1 and a continued fraction above.
pub fn gamma_q(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    let lead = a * x.ln() - x - ln_gamma(a);
    if x < a + 1.0 {
        let mut term = 1.0 / a;
        let mut sum = term;
        let mut ap = a;
        for _ in 0..10_000 {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if term.abs() < sum.abs() * 1e-17 {
                break;
            }
        }
        (1.0 - sum * lead.exp()).clamp(0.0, 1.0)
    } else {
        // Modified Lentz.
        let tiny = 1e-300;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..10_000 {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < tiny {
                d = tiny;
            }
            c = b + an / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            let delta = d * c;
            h *= delta;
            if (delta - 1.0).abs() < 1e-16 {
                break;
            }
        }
        (lead.exp() * h).clamp(0.0, 1.0)
    }
}

/// Upper tail of the chi-square distribution.
pub fn chi2_sf(x: f64, df: f64) -> f64 {
    gamma_q(df / 2.0, x / 2.0)
}

/// Ranks starting at 1, ties sharing their mean rank.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Sum of t^3 - t over tie groups.
fn tie_term(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mut s = 0.0;
    let mut i = 0;
    while i < v.len() {
        let mut j = i;
        while j + 1 < v.len() && v[j + 1] == v[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        s += t * t * t - t;
        i = j + 1;
    }
    s
}

/// Rows are samples (blocks), columns are treatments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedSampleMatrix {
    rows: Vec<Vec<f64>>,
}

impl PairedSampleMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self, StatsError> {
        if rows.len() < 2 {
            return Err(StatsError::TooSmall { what: "rows", need: 2, found: rows.len() });
        }
        let k = rows[0].len();
        if k < 2 {
            return Err(StatsError::TooSmall { what: "treatments", need: 2, found: k });
        }
        for (r, row) in rows.iter().enumerate() {
            if row.len() != k {
                return Err(StatsError::Ragged { row: r, found: row.len(), expected: k });
            }
            if let Some(c) = row.iter().position(|v| !v.is_finite()) {
                return Err(StatsError::NonFinite { row: r, col: c });
            }
        }
        Ok(Self { rows })
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn k(&self) -> usize {
        self.rows[0].len()
    }

    /// Mean within-row rank of each column.
    pub fn mean_ranks(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.k()];
        for row in &self.rows {
            for (s, r) in sums.iter_mut().zip(midranks(row)) {
                *s += r;
            }
        }
        sums.into_iter().map(|s| s / self.n() as f64).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Friedman {
    pub statistic: f64,
    pub p_value: f64,
    pub mean_ranks: Vec<f64>,
}

/// Friedman chi-square with tie correction.
pub fn friedman(m: &PairedSampleMatrix) -> Friedman {
    let (n, k) = (m.n() as f64, m.k() as f64);
    let mean_ranks = m.mean_ranks();
    let ssum: f64 = mean_ranks.iter().map(|r| (r * n).powi(2)).fold(0.0, |a, b| a + b);
    let raw = 12.0 / (n * k * (k + 1.0)) * ssum - 3.0 * n * (k + 1.0);
    let ties: f64 = m.rows().iter().map(|r| tie_term(r)).fold(0.0, |a, b| a + b);
    let c = 1.0 - ties / (n * k * (k * k - 1.0));
    if c <= 1e-12 {
        return Friedman { statistic: 0.0, p_value: 1.0, mean_ranks };
    }
    let statistic = (raw / c).max(0.0);
    Friedman {
        statistic,
        p_value: chi2_sf(statistic, k - 1.0),
        mean_ranks,
    }
}

/// P(Q <= q) for the studentized range of `k` means with infinite degrees
/// of freedom: k * integral of phi(z) (Phi(z) - Phi(z - q))^(k-1).
pub fn studentized_range_cdf(q: f64, k: usize) -> f64 {
    if q <= 0.0 {
        return 0.0;
    }
    // Composite Simpson; the integrand is smooth and negligible beyond 9.
    let (lo, hi) = (-9.0, 9.0 + q);
    let steps = 4000;
    let h = (hi - lo) / steps as f64;
    let f = |z: f64| {
        let d = normal_cdf(z) - normal_cdf(z - q);
        normal_pdf(z) * d.max(0.0).powi(k as i32 - 1)
    };
    let mut s = f(lo) + f(hi);
    for i in 1..steps {
        let z = lo + i as f64 * h;
        s += if i % 2 == 1 { 4.0 * f(z) } else { 2.0 * f(z) };
    }
    (k as f64 * s * h / 3.0).clamp(0.0, 1.0)
}

pub fn studentized_range_sf(q: f64, k: usize) -> f64 {
    (1.0 - studentized_range_cdf(q, k)).clamp(0.0, 1.0)
}

/// Upper critical values of the studentized range, infinite degrees of
/// freedom, for k = 2..=20.
const Q_05: [f64; 19] = [
    2.772, 3.314, 3.633, 3.858, 4.030, 4.170, 4.286, 4.387, 4.474, 4.552, 4.622, 4.685, 4.743,
    4.796, 4.845, 4.891, 4.934, 4.974, 5.012,
];
const Q_01: [f64; 19] = [
    3.643, 4.120, 4.403, 4.603, 4.757, 4.882, 4.987, 5.078, 5.157, 5.227, 5.290, 5.348, 5.400,
    5.448, 5.493, 5.535, 5.574, 5.611, 5.645,
];

/// Tabulated critical value for `k` groups at alpha 0.05 or 0.01.
pub fn q_critical(k: usize, alpha: f64) -> Result<f64, StatsError> {
    let table = if (alpha - 0.05).abs() < 1e-12 {
        &Q_05
    } else if (alpha - 0.01).abs() < 1e-12 {
        &Q_01
    } else {
        return Err(StatsError::NoCriticalValue { k, alpha });
    };
    if !(2..=20).contains(&k) {
        return Err(StatsError::NoCriticalValue { k, alpha });
    }
    Ok(table[k - 2])
}

/// Reported p values are capped to the range significance tables print.
pub const P_CAP: f64 = 0.9;
pub const P_FLOOR: f64 = 0.001;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Nemenyi {
    pub k: usize,
    pub n: usize,
    pub alpha: f64,
    pub mean_ranks: Vec<f64>,
    pub q_crit: f64,
    /// Critical difference of mean ranks.
    pub cd: f64,
    /// `rank_diff[i][j]` = mean rank of i minus mean rank of j.
    pub rank_diff: Vec<Vec<f64>>,
    /// Exact p values, unclamped.
    pub p_exact: Vec<Vec<f64>>,
    /// Clamped to [`P_FLOOR`, `P_CAP`] for reporting.
    pub p: Vec<Vec<f64>>,
}

impl Nemenyi {
    pub fn significant(&self, i: usize, j: usize) -> bool {
        self.rank_diff[i][j].abs() > self.cd
    }
}

/// Pairwise comparison of mean ranks. The statistic of a pair is the rank
/// difference over sqrt(k(k+1)/(12N)), compared with the studentized range.
pub fn nemenyi(m: &PairedSampleMatrix, alpha: f64) -> Result<Nemenyi, StatsError> {
    let (n, k) = (m.n(), m.k());
    let q_crit = q_critical(k, alpha)?;
    let se = (k as f64 * (k as f64 + 1.0) / (12.0 * n as f64)).sqrt();
    let mean_ranks = m.mean_ranks();
    let mut rank_diff = vec![vec![0.0; k]; k];
    let mut p_exact = vec![vec![1.0; k]; k];
    for i in 0..k {
        for j in 0..k {
            if i == j {
                continue;
            }
            let d = mean_ranks[i] - mean_ranks[j];
            rank_diff[i][j] = d;
            if j > i {
                p_exact[i][j] = studentized_range_sf(d.abs() / se, k);
            } else {
                p_exact[i][j] = p_exact[j][i];
            }
        }
    }
    let p = p_exact
        .iter()
        .map(|row| row.iter().map(|v| v.clamp(P_FLOOR, P_CAP)).collect())
        .collect();
    Ok(Nemenyi {
        k,
        n,
        alpha,
        mean_ranks,
        q_crit,
        cd: q_crit * se,
        rank_diff,
        p_exact,
        p,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Wilcoxon {
    /// Positive when `a` tends to exceed `b`.
    pub z: f64,
    pub p: f64,
    /// Rank sum of positive differences a - b.
    pub w_plus: f64,
    /// Pairs left after dropping zero differences.
    pub n: usize,
    pub degenerate: bool,
}

/// Signed-rank test with the normal approximation and tie-corrected
/// variance. Zero differences are discarded.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<Wilcoxon, StatsError> {
    if a.len() != b.len() {
        return Err(StatsError::Length(a.len(), b.len()));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|v| *v != 0.0).collect();
    if d.is_empty() {
        return Ok(Wilcoxon { z: 0.0, p: 1.0, w_plus: 0.0, n: 0, degenerate: true });
    }
    if d.len() < 5 {
        return Err(StatsError::TooSmall { what: "nonzero differences", need: 5, found: d.len() });
    }
    let abs: Vec<f64> = d.iter().map(|v| v.abs()).collect();
    let ranks = midranks(&abs);
    let w_plus: f64 = ranks.iter().zip(&d).filter(|(_, v)| **v > 0.0).map(|(r, _)| *r).fold(0.0, |x, y| x + y);
    let n = d.len() as f64;
    let mu = n * (n + 1.0) / 4.0;
    let var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term(&abs) / 48.0;
    let z = if var > 0.0 { (w_plus - mu) / var.sqrt() } else { 0.0 };
    Ok(Wilcoxon {
        z,
        p: erfc(z.abs() / std::f64::consts::SQRT_2).clamp(0.0, 1.0),
        w_plus,
        n: d.len(),
        degenerate: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EffectLabel {
    None,
    Small,
    Medium,
    Large,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectSize {
    pub r: f64,
    pub label: EffectLabel,
}

/// r = z / sqrt(n), labelled at 0.1, 0.3 and 0.5.
pub fn effect_size_r(z: f64, n: usize) -> Result<EffectSize, StatsError> {
    if n == 0 {
        return Err(StatsError::ZeroDenominator);
    }
    let r = z / (n as f64).sqrt();
    let a = r.abs();
    let label = if a >= 0.5 {
        EffectLabel::Large
    } else if a >= 0.3 {
        EffectLabel::Medium
    } else if a >= 0.1 {
        EffectLabel::Small
    } else {
        EffectLabel::None
    };
    Ok(EffectSize { r, label })
}

/// Ratio of entry counts between two dataset construction methods.
pub fn rate(traditional: u64, fix_based: u64) -> Result<f64, StatsError> {
    if fix_based == 0 {
        return Err(StatsError::ZeroDenominator);
    }
    Ok(traditional as f64 / fix_based as f64)
}
