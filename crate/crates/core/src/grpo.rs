//! Group-relative advantages and within-group variance diagnostics.
//!
//! No policy is trained here. The module checks the reward-to-advantage
//! contract: a group of trajectory returns is centered and scaled by its
//! population standard deviation, and groups whose returns collapse to a
//! single value contribute no learning signal.

use serde::{Deserialize, Serialize};

use crate::reward::{momentum_reward, RewardConfig, RewardMode, RewardTrace};
use crate::{par, Error, Result};

pub const DEFAULT_EPS_NUM: f64 = 1e-8;
pub const DEFAULT_GROUP_SIZE: usize = 4;
pub const DEFAULT_COLLAPSE_THRESHOLD: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupBatch {
    pub returns: Vec<f64>,
    pub eps_num: f64,
}

impl GroupBatch {
    pub fn new(returns: Vec<f64>) -> Self {
        GroupBatch {
            returns,
            eps_num: DEFAULT_EPS_NUM,
        }
    }

    pub fn mean(&self) -> f64 {
        self.returns.iter().sum::<f64>() / self.returns.len() as f64
    }

    /// Population variance.
    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.returns.iter().map(|r| (r - m) * (r - m)).sum::<f64>() / self.returns.len() as f64
    }
}

/// `(R_i - mean) / (std + eps_num)` with population std.
pub fn group_advantages(b: &GroupBatch) -> Result<Vec<f64>> {
    let g = b.returns.len();
    if g < 2 {
        return Err(Error::GroupTooSmall(g));
    }
    if b.returns.iter().any(|r| !r.is_finite()) {
        return Err(Error::Domain("non-finite return in group".into()));
    }
    let mean = b.mean();
    if b.returns.iter().all(|&r| r == b.returns[0]) {
        return Ok(vec![0.0; g]);
    }
    let denom = b.variance().sqrt() + b.eps_num;
    let mut adv: Vec<f64> = b.returns.iter().map(|r| (r - mean) / denom).collect();
    // remove the rounding residue of the centering so the group sums to zero
    let drift = adv.iter().sum::<f64>() / g as f64;
    adv.iter_mut().for_each(|a| *a -= drift);
    Ok(adv)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    Mean,
    Sum,
}

impl std::str::FromStr for Aggregation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Aggregation::Mean),
            "sum" => Ok(Aggregation::Sum),
            other => Err(Error::Config(format!("unknown aggregation `{other}`"))),
        }
    }
}

impl Aggregation {
    pub fn apply(self, rewards: &[f64]) -> Result<f64> {
        if rewards.is_empty() {
            return Err(Error::Empty("trajectory has no rewards".into()));
        }
        // summing in sorted order makes the return independent of step order
        let mut sorted = rewards.to_vec();
        sorted.sort_by(f64::total_cmp);
        let sum: f64 = sorted.iter().sum();
        Ok(match self {
            Aggregation::Sum => sum,
            Aggregation::Mean => sum / rewards.len() as f64,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryReturn {
    pub trajectory_id: String,
    pub per_step_rewards: Vec<f64>,
    #[serde(rename = "return")]
    pub value: f64,
}

impl TrajectoryReturn {
    pub fn from_trace(
        trajectory_id: impl Into<String>,
        trace: &RewardTrace,
        agg: Aggregation,
    ) -> Result<Self> {
        let per_step_rewards = trace.rewards();
        let value = agg.apply(&per_step_rewards)?;
        Ok(TrajectoryReturn {
            trajectory_id: trajectory_id.into(),
            per_step_rewards,
            value,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupVariance {
    pub vanilla: f64,
    pub momentum: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceReport {
    pub groups: Vec<GroupVariance>,
    pub collapse_threshold: f64,
    pub collapsed_vanilla: usize,
    pub collapsed_momentum: usize,
}

impl VarianceReport {
    pub fn mean_variance(&self) -> GroupVariance {
        let n = self.groups.len().max(1) as f64;
        GroupVariance {
            vanilla: self.groups.iter().map(|g| g.vanilla).sum::<f64>() / n,
            momentum: self.groups.iter().map(|g| g.momentum).sum::<f64>() / n,
        }
    }
}

/// Per-group return variance for paired (vanilla, momentum) batches.
pub fn variance_diagnostic(
    pairs: &[(GroupBatch, GroupBatch)],
    collapse_threshold: f64,
) -> Result<VarianceReport> {
    let mut groups = Vec::with_capacity(pairs.len());
    for (i, (v, m)) in pairs.iter().enumerate() {
        if v.returns.len() != m.returns.len() {
            return Err(Error::MismatchedGroups(format!(
                "group {i}: {} vanilla vs {} momentum returns",
                v.returns.len(),
                m.returns.len()
            )));
        }
        if v.returns.len() < 2 {
            return Err(Error::GroupTooSmall(v.returns.len()));
        }
        groups.push(GroupVariance {
            vanilla: v.variance(),
            momentum: m.variance(),
        });
    }
    Ok(VarianceReport {
        collapsed_vanilla: groups.iter().filter(|g| g.vanilla < collapse_threshold).count(),
        collapsed_momentum: groups.iter().filter(|g| g.momentum < collapse_threshold).count(),
        groups,
        collapse_threshold,
    })
}

/// Score every trajectory in both modes from the same `s_final` streams and
/// return the paired group batches.
///
/// `groups[g][k]` is the `s_final` stream of trajectory `k` in group `g`.
/// `cfg.mode` is ignored; `cfg.alpha` drives the momentum side.
pub fn paired_batches(
    groups: &[Vec<Vec<f64>>],
    cfg: &RewardConfig,
    agg: Aggregation,
) -> Result<Vec<(GroupBatch, GroupBatch)>> {
    let vanilla = RewardConfig {
        mode: RewardMode::Vanilla,
        ..*cfg
    };
    let momentum = RewardConfig {
        mode: RewardMode::Momentum,
        ..*cfg
    };
    par::map(groups, |group| {
        if group.len() < 2 {
            return Err(Error::GroupTooSmall(group.len()));
        }
        let mut v = Vec::with_capacity(group.len());
        let mut m = Vec::with_capacity(group.len());
        for stream in group {
            v.push(agg.apply(&momentum_reward(stream, &vanilla)?.rewards())?);
            m.push(agg.apply(&momentum_reward(stream, &momentum)?.rewards())?);
        }
        Ok((GroupBatch::new(v), GroupBatch::new(m)))
    })
    .into_iter()
    .collect()
}
