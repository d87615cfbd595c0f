//! Momentum reward over a trajectory's stream of correction-head scores.
//!
//! Each raw score is softened and clipped,
//! `s~ = clip(sigmoid(logit(s) / T), eps, 1 - eps)`, then contrasted with
//! the mean of the earlier clipped scores in logit space:
//! `r_t = sigmoid(logit(s~_t) + alpha * (s~_t - mean(s~_1..s~_{t-1})))`.
//! The first step has no history and gets `r_1 = s~_1`.

use serde::{Deserialize, Serialize};

use crate::probe::{clamp_probability, logit, sigmoid};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardMode {
    /// `r_t = s~_t`.
    Vanilla,
    Momentum,
}

impl std::str::FromStr for RewardMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vanilla" => Ok(RewardMode::Vanilla),
            "momentum" => Ok(RewardMode::Momentum),
            other => Err(Error::Config(format!("unknown reward mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig {
    pub temperature: f64,
    pub clip: f64,
    pub alpha: f64,
    pub mode: RewardMode,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig {
            temperature: 2.0,
            clip: 0.05,
            alpha: 5.0,
            mode: RewardMode::Momentum,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::Config(format!(
                "temperature must be > 0, got {}",
                self.temperature
            )));
        }
        if !(self.clip > 0.0 && self.clip < 0.5) {
            return Err(Error::Config(format!(
                "clip must lie in (0, 0.5), got {}",
                self.clip
            )));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!("alpha must be >= 0, got {}", self.alpha)));
        }
        Ok(())
    }

    /// Momentum scale actually applied: zero in vanilla mode.
    pub fn effective_alpha(&self) -> f64 {
        match self.mode {
            RewardMode::Vanilla => 0.0,
            RewardMode::Momentum => self.alpha,
        }
    }
}

/// Temperature-softened, clipped score in `[eps, 1 - eps]`.
pub fn temp_clip(s: f64, cfg: &RewardConfig) -> Result<f64> {
    cfg.validate()?;
    let z = logit(s)?;
    Ok(sigmoid(z / cfg.temperature).clamp(cfg.clip, 1.0 - cfg.clip))
}

/// O(1) running mean of the clipped scores seen so far. The incremental
/// update keeps the mean of a constant stream exactly equal to the constant.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunningMean {
    count: usize,
    mean: f64,
}

impl RunningMean {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// Mean of everything before step `count + 1`. Before the first step
    /// there is no history and the current score itself is returned.
    pub fn mean_before(&self, current: f64) -> f64 {
        if self.count == 0 {
            current
        } else {
            self.mean
        }
    }

    /// Consume step `step` (1-based). Steps must arrive in order.
    pub fn update(&mut self, step: usize, s_tilde: f64) -> Result<f64> {
        if step != self.count + 1 {
            return Err(Error::OutOfOrder {
                expected: self.count + 1,
                got: step,
            });
        }
        self.count += 1;
        self.mean += (s_tilde - self.mean) / self.count as f64;
        Ok(self.mean)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardStep {
    pub s_final: f64,
    pub s_tilde: f64,
    pub running_mean_before: f64,
    pub bonus: f64,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardTrace {
    pub steps: Vec<RewardStep>,
}

impl RewardTrace {
    pub fn rewards(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.reward).collect()
    }
}

pub fn momentum_reward(s_final: &[f64], cfg: &RewardConfig) -> Result<RewardTrace> {
    cfg.validate()?;
    if s_final.is_empty() {
        return Err(Error::Empty("reward stream has no steps".into()));
    }
    let alpha = cfg.effective_alpha();
    let mut mean = RunningMean::new();
    let mut steps = Vec::with_capacity(s_final.len());
    for (t, &s) in s_final.iter().enumerate() {
        let s_tilde = temp_clip(s, cfg)?;
        let before = mean.mean_before(s_tilde);
        let (bonus, reward) = match cfg.mode {
            RewardMode::Vanilla => (0.0, s_tilde),
            RewardMode::Momentum => {
                // `+ 0.0` folds a negative zero into +0 so traces serialize
                // identically to vanilla mode when alpha = 0
                let bonus = alpha * (s_tilde - before) + 0.0;
                // exact pass-through when there is nothing to add; the floor
                // keeps huge alphas from saturating to exactly 0 or 1
                let reward = if bonus == 0.0 {
                    s_tilde
                } else {
                    clamp_probability(sigmoid(logit(s_tilde)? + bonus))
                };
                (bonus, reward)
            }
        };
        mean.update(t + 1, s_tilde)?;
        steps.push(RewardStep {
            s_final: s,
            s_tilde,
            running_mean_before: before,
            bonus,
            reward,
        });
    }
    Ok(RewardTrace { steps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn cfg(alpha: f64, mode: RewardMode) -> RewardConfig {
        RewardConfig {
            alpha,
            mode,
            ..Default::default()
        }
    }

    /// A config whose clip is inert and temperature 1, so `s~ = s`.
    fn passthrough(alpha: f64) -> RewardConfig {
        RewardConfig {
            temperature: 1.0,
            clip: 1e-9,
            alpha,
            mode: RewardMode::Momentum,
        }
    }

    #[test]
    fn temp_clip_values() {
        let c = RewardConfig::default();
        assert_eq!(temp_clip(0.5, &c).unwrap(), 0.5);
        // sigma(ln(9) / 2) = 3 / (1 + 3)
        assert_abs_diff_eq!(temp_clip(0.9, &c).unwrap(), 0.75, epsilon = 1e-12);
        assert_abs_diff_eq!(temp_clip(0.1, &c).unwrap(), 0.25, epsilon = 1e-12);
        // sigma(ln(999) / 2) ~ 0.9693 lies above the clip
        assert_eq!(temp_clip(0.999, &c).unwrap(), 0.95);
        assert_eq!(temp_clip(1.0 - 1e-6, &c).unwrap(), 0.95);
        assert_eq!(temp_clip(1e-6, &c).unwrap(), 0.05);
    }

    #[test]
    fn temp_clip_identity_at_unit_temperature() {
        let c = RewardConfig {
            temperature: 1.0,
            ..Default::default()
        };
        for s in [0.05, 0.2, 0.5, 0.77, 0.95] {
            assert_abs_diff_eq!(temp_clip(s, &c).unwrap(), s, epsilon = 1e-12);
        }
    }

    #[test]
    fn config_errors() {
        for bad in [
            RewardConfig {
                temperature: 0.0,
                ..Default::default()
            },
            RewardConfig {
                clip: 0.5,
                ..Default::default()
            },
            RewardConfig {
                clip: 0.0,
                ..Default::default()
            },
            RewardConfig {
                alpha: -1.0,
                ..Default::default()
            },
        ] {
            assert!(matches!(temp_clip(0.3, &bad), Err(Error::Config(_))));
        }
    }

    #[test]
    fn running_mean_streams() {
        let mut m = RunningMean::new();
        assert_eq!(m.mean_before(0.7), 0.7);
        m.update(1, 0.5).unwrap();
        assert_eq!(m.mean_before(0.8), 0.5);

        let mut m = RunningMean::new();
        m.update(1, 0.2).unwrap();
        m.update(2, 0.4).unwrap();
        assert_abs_diff_eq!(m.mean_before(0.9), 0.3, epsilon = 1e-15);
        assert!(matches!(
            m.update(4, 0.1),
            Err(Error::OutOfOrder {
                expected: 3,
                got: 4
            })
        ));
    }

    #[test]
    fn momentum_worked_example() {
        let t = momentum_reward(&[0.5, 0.8], &passthrough(5.0)).unwrap();
        // sigma(ln 4 + 1.5)
        let expected = sigmoid(4f64.ln() + 1.5);
        assert_abs_diff_eq!(t.steps[1].reward, expected, epsilon = 1e-9);
        assert_abs_diff_eq!(t.steps[1].reward, 0.9472, epsilon = 1e-4);
        assert_abs_diff_eq!(t.steps[1].bonus, 1.5, epsilon = 1e-9);
    }

    #[test]
    fn first_step_and_constant_streams() {
        let t = momentum_reward(&[0.7], &passthrough(5.0)).unwrap();
        assert_eq!(t.steps[0].reward, t.steps[0].s_tilde);
        assert_eq!(t.steps[0].bonus, 0.0);

        let t = momentum_reward(&[0.63; 6], &cfg(5.0, RewardMode::Momentum)).unwrap();
        let c = t.steps[0].s_tilde;
        assert!(t.steps.iter().all(|s| s.reward == c && s.bonus == 0.0));
        assert!(momentum_reward(&[], &RewardConfig::default()).is_err());
    }

    #[test]
    fn saturation_shrinks_effect_near_clip_edge() {
        let b = 0.8;
        let edge = 0.95;
        let gain_edge = sigmoid(logit(edge).unwrap() + b) - edge;
        let gain_mid = sigmoid(logit(0.5).unwrap() + b) - 0.5;
        assert!(gain_edge < gain_mid);
    }

    fn stream() -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(
            prop_oneof![Just(1e-12), Just(1.0 - 1e-12), 0.0f64..=1.0],
            1..20,
        )
    }

    proptest! {
        #[test]
        fn bounded_and_clipped(s in stream(), alpha in 0.0f64..50.0) {
            let t = momentum_reward(&s, &cfg(alpha, RewardMode::Momentum)).unwrap();
            for st in &t.steps {
                prop_assert!(st.s_tilde >= 0.05 && st.s_tilde <= 0.95);
                prop_assert!(st.reward > 0.0 && st.reward < 1.0);
                prop_assert!(logit(st.s_tilde).unwrap().is_finite());
            }
            prop_assert_eq!(t.steps[0].reward, t.steps[0].s_tilde);
        }

        #[test]
        fn constant_streams_are_fixed_points(s in 0.0f64..=1.0, n in 1usize..30, t in 0.5f64..4.0) {
            let c = RewardConfig { temperature: t, ..RewardConfig::default() };
            let tr = momentum_reward(&vec![s; n], &c).unwrap();
            let first = tr.steps[0].s_tilde;
            prop_assert!(tr.steps.iter().all(|st| st.reward == first && st.bonus == 0.0));
        }

        #[test]
        fn zero_alpha_modes_agree(s in stream()) {
            let v = momentum_reward(&s, &cfg(0.0, RewardMode::Vanilla)).unwrap();
            let m = momentum_reward(&s, &cfg(0.0, RewardMode::Momentum)).unwrap();
            prop_assert_eq!(v, m);
        }

        #[test]
        fn bonus_sign_moves_reward(s in stream(), alpha in 0.1f64..20.0) {
            let t = momentum_reward(&s, &cfg(alpha, RewardMode::Momentum)).unwrap();
            for st in &t.steps {
                // bonuses below float resolution are lost in the logit round trip
                if st.bonus > 1e-9 {
                    prop_assert!(st.reward > st.s_tilde);
                } else if st.bonus < -1e-9 {
                    prop_assert!(st.reward < st.s_tilde);
                }
            }
        }
    }
}
