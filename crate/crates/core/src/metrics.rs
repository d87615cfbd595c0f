//! Ranking and calibration metrics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScoredSet {
    pub scores: Vec<f64>,
    pub labels: Vec<bool>,
    /// Contamination distance per record; `None` entries (clean records)
    /// fall outside every distance bucket.
    pub strata: Option<Vec<Option<usize>>>,
}

impl ScoredSet {
    pub fn new(scores: Vec<f64>, labels: Vec<bool>) -> Self {
        ScoredSet {
            scores,
            labels,
            strata: None,
        }
    }

    pub fn with_strata(mut self, strata: Vec<Option<usize>>) -> Self {
        self.strata = Some(strata);
        self
    }

    fn validate(&self) -> Result<()> {
        if self.scores.len() != self.labels.len() {
            return Err(Error::Dimension(format!(
                "{} scores vs {} labels",
                self.scores.len(),
                self.labels.len()
            )));
        }
        if let Some(s) = &self.strata {
            if s.len() != self.scores.len() {
                return Err(Error::Dimension(format!(
                    "{} strata vs {} scores",
                    s.len(),
                    self.scores.len()
                )));
            }
        }
        if let Some(i) = self.scores.iter().position(|s| !s.is_finite()) {
            return Err(Error::Domain(format!("score {i} is not finite")));
        }
        Ok(())
    }
}

/// Probability that a random positive outscores a random negative, ties
/// counted half. Computed by sorting, equal to the pairwise definition.
pub fn auroc(s: &ScoredSet) -> Result<f64> {
    s.validate()?;
    let pos = s.labels.iter().filter(|&&l| l).count() as u64;
    let neg = s.labels.len() as u64 - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClass("score set: AUROC needs both labels".into()));
    }

    let mut order: Vec<usize> = (0..s.scores.len()).collect();
    order.sort_by(|&a, &b| s.scores[a].total_cmp(&s.scores[b]));

    // twice the Mann-Whitney statistic, kept integral
    let mut doubled: u64 = 0;
    let mut neg_below: u64 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let (mut p_tie, mut n_tie) = (0u64, 0u64);
        while j < order.len() && s.scores[order[j]] == s.scores[order[i]] {
            if s.labels[order[j]] {
                p_tie += 1;
            } else {
                n_tie += 1;
            }
            j += 1;
        }
        doubled += 2 * p_tie * neg_below + p_tie * n_tie;
        neg_below += n_tie;
        i = j;
    }
    Ok(doubled as f64 / (2 * pos * neg) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EceConfig {
    /// Number of equal-width bins over `[0, 1]`.
    pub bins: usize,
}

impl Default for EceConfig {
    fn default() -> Self {
        EceConfig { bins: 10 }
    }
}

/// Bin-weighted `|accuracy - confidence|` over equal-width bins. A score of
/// exactly 1.0 lands in the last bin.
pub fn ece(s: &ScoredSet, cfg: &EceConfig) -> Result<f64> {
    s.validate()?;
    if cfg.bins == 0 {
        return Err(Error::Config("ECE needs at least one bin".into()));
    }
    if s.scores.is_empty() {
        return Err(Error::Empty("ECE of an empty score set".into()));
    }
    let b = cfg.bins;
    let mut conf = vec![0.0; b];
    let mut hits = vec![0.0; b];
    let mut count = vec![0usize; b];
    for (&p, &l) in s.scores.iter().zip(&s.labels) {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Domain(format!("score {p} outside [0, 1]")));
        }
        let k = ((p * b as f64) as usize).min(b - 1);
        conf[k] += p;
        hits[k] += if l { 1.0 } else { 0.0 };
        count[k] += 1;
    }
    let n = s.scores.len() as f64;
    Ok((0..b)
        .filter(|&k| count[k] > 0)
        .map(|k| {
            let c = count[k] as f64;
            (c / n) * (hits[k] / c - conf[k] / c).abs()
        })
        .sum())
}

pub fn accuracy(s: &ScoredSet, threshold: f64) -> Result<f64> {
    s.validate()?;
    if s.scores.is_empty() {
        return Err(Error::Empty("accuracy of an empty score set".into()));
    }
    let right = s
        .scores
        .iter()
        .zip(&s.labels)
        .filter(|(&p, &l)| (p >= threshold) == l)
        .count();
    Ok(right as f64 / s.scores.len() as f64)
}

/// Distance bucket: exact `d` below the cap, `cap+` at and above it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DistanceBucket {
    Exact(usize),
    AtLeast(usize),
}

impl DistanceBucket {
    pub fn of(d: usize, cap: usize) -> Self {
        if d >= cap {
            DistanceBucket::AtLeast(cap)
        } else {
            DistanceBucket::Exact(d)
        }
    }
}

impl std::fmt::Display for DistanceBucket {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DistanceBucket::Exact(d) => write!(f, "{d}"),
            DistanceBucket::AtLeast(d) => write!(f, "{d}+"),
        }
    }
}

pub const DEFAULT_DISTANCE_CAP: usize = 7;

/// AUROC per distance bucket. Buckets without both labels are omitted.
pub fn stratified_auroc(s: &ScoredSet, cap: usize) -> Result<BTreeMap<DistanceBucket, f64>> {
    s.validate()?;
    if cap == 0 {
        return Err(Error::Config("distance cap must be >= 1".into()));
    }
    let strata = s
        .strata
        .as_ref()
        .ok_or_else(|| Error::Config("stratified AUROC needs distance strata".into()))?;
    let mut buckets: BTreeMap<DistanceBucket, ScoredSet> = BTreeMap::new();
    for ((&p, &l), d) in s.scores.iter().zip(&s.labels).zip(strata) {
        if let Some(d) = d {
            let set = buckets.entry(DistanceBucket::of(*d, cap)).or_default();
            set.scores.push(p);
            set.labels.push(l);
        }
    }
    let mut out = BTreeMap::new();
    for (k, set) in buckets {
        match auroc(&set) {
            Ok(v) => {
                out.insert(k, v);
            }
            Err(Error::SingleClass(_)) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}
