//! Filtering of entries that share a metric vector but disagree on the
//! buggy/clean label.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{format_value, DatasetEntry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterStrategy {
    None,
    Removal,
    Subtract,
    Single,
    Gcf,
}

impl FilterStrategy {
    pub const ALL: [FilterStrategy; 5] = [
        FilterStrategy::None,
        FilterStrategy::Removal,
        FilterStrategy::Subtract,
        FilterStrategy::Single,
        FilterStrategy::Gcf,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FilterStrategy::None => "none",
            FilterStrategy::Removal => "removal",
            FilterStrategy::Subtract => "subtract",
            FilterStrategy::Single => "single",
            FilterStrategy::Gcf => "gcf",
        }
    }

    /// Output directory name; the unfiltered dataset lives in `full`.
    pub fn dir_name(self) -> &'static str {
        match self {
            FilterStrategy::None => "full",
            FilterStrategy::Removal => "remove",
            other => other.as_str(),
        }
    }
}

impl fmt::Display for FilterStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FilterStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" | "full" => Ok(FilterStrategy::None),
            "removal" | "remove" => Ok(FilterStrategy::Removal),
            "subtract" => Ok(FilterStrategy::Subtract),
            "single" => Ok(FilterStrategy::Single),
            "gcf" => Ok(FilterStrategy::Gcf),
            other => Err(format!(
                "unknown filter strategy `{other}` (expected none, removal, subtract, single or gcf)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConflictGroup {
    pub feature_key: String,
    pub n_buggy: usize,
    pub n_clean: usize,
    /// Indices into the entry list, ascending.
    pub members: Vec<usize>,
}

impl ConflictGroup {
    pub fn is_mixed(&self) -> bool {
        self.n_buggy > 0 && self.n_clean > 0
    }
}

/// Level plus every metric value; hash, name and bug count are excluded.
pub fn feature_key(e: &DatasetEntry) -> String {
    let mut key = e.level.to_string();
    for v in &e.metrics.values {
        key.push(',');
        key.push_str(&format_value(*v));
    }
    key
}

/// Groups entries by feature key, in order of first appearance.
pub fn group_entries(entries: &[DatasetEntry]) -> Vec<ConflictGroup> {
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut groups: Vec<ConflictGroup> = Vec::new();
    for (i, e) in entries.iter().enumerate() {
        let key = feature_key(e);
        let g = *index.entry(key.clone()).or_insert_with(|| {
            groups.push(ConflictGroup {
                feature_key: key,
                n_buggy: 0,
                n_clean: 0,
                members: Vec::new(),
            });
            groups.len() - 1
        });
        let group = &mut groups[g];
        group.members.push(i);
        if e.is_buggy() {
            group.n_buggy += 1;
        } else {
            group.n_clean += 1;
        }
    }
    groups
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Buggy and clean counts a group keeps. Only mixed groups change; for a
/// tie under `single`, `coin` picks the buggy side.
pub fn target_counts(b: usize, c: usize, strategy: FilterStrategy, coin: bool) -> (usize, usize) {
    if b == 0 || c == 0 {
        return (b, c);
    }
    use std::cmp::Ordering::*;
    match strategy {
        FilterStrategy::None => (b, c),
        FilterStrategy::Removal => match b.cmp(&c) {
            Greater => (b, 0),
            Less => (0, c),
            Equal => (0, 0),
        },
        FilterStrategy::Subtract => match b.cmp(&c) {
            Greater => (b - c, 0),
            Less => (0, c - b),
            Equal => (0, 0),
        },
        FilterStrategy::Single => match b.cmp(&c) {
            Greater => (1, 0),
            Less => (0, 1),
            Equal => {
                if coin {
                    (1, 0)
                } else {
                    (0, 1)
                }
            }
        },
        FilterStrategy::Gcf => {
            let g = gcd(b, c);
            (b / g, c / g)
        }
    }
}

/// Applies the strategy group by group and returns the kept members of
/// each group, ascending. Which members survive is drawn from `seed`.
pub fn filter_groups(
    groups: &[ConflictGroup],
    is_buggy: impl Fn(usize) -> bool,
    strategy: FilterStrategy,
    seed: u64,
) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    groups
        .iter()
        .map(|g| {
            if !g.is_mixed() || strategy == FilterStrategy::None {
                return g.members.clone();
            }
            let coin = rng.random_bool(0.5);
            let (kb, kc) = target_counts(g.n_buggy, g.n_clean, strategy, coin);
            let (mut buggy, mut clean): (Vec<usize>, Vec<usize>) =
                g.members.iter().partition(|&&m| is_buggy(m));
            buggy.shuffle(&mut rng);
            clean.shuffle(&mut rng);
            let mut kept: Vec<usize> = buggy[..kb].iter().chain(&clean[..kc]).copied().collect();
            kept.sort_unstable();
            kept
        })
        .collect()
}

/// Filters a dataset; surviving entries keep their original order.
pub fn apply_filter(entries: &[DatasetEntry], strategy: FilterStrategy, seed: u64) -> Vec<DatasetEntry> {
    let groups = group_entries(entries);
    let mut kept: Vec<usize> = filter_groups(&groups, |i| entries[i].is_buggy(), strategy, seed)
        .into_iter()
        .flatten()
        .collect();
    kept.sort_unstable();
    kept.into_iter().map(|i| entries[i].clone()).collect()
}
