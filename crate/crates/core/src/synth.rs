//! Seeded synthetic corpus with clean, contaminated and adversarial
//! diagnostic splits.
//!
//! Every record carries two latent bits: `turn_correct` (the label) and
//! `belief_consistent` (coherence with the prefix). Under a clean prefix the
//! two agree; diagnostic records set them opposite.
//!
//! * Hidden features are Gaussian around `+/- hidden_signal * a(d) * u`
//!   according to `belief_consistent`, where `u` is the unit all-ones
//!   direction and `a(d)` the distance attenuation: 1 for clean prefixes,
//!   falling linearly from 1 at `d = 1` to `hidden_floor` at
//!   `d = max_distance`.
//! * Attention features are not sampled directly. Each (layer, head) gets a
//!   synthetic softmax row over `[prefix; turn]` whose routing (mass on the
//!   turn's own tokens) and sharpness depend on `turn_correct`, and the
//!   statistics are computed by [`crate::features::build_feature_record`].
//!   A contaminated prefix perturbs only the prefix segment of each row.
//!
//! A matched clean / contaminated pair shares the trajectory skeleton, the
//! label and every evaluation-turn noise draw; the two records differ only
//! in prefix-derived components.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::features::{build_feature_record, ActivationPayload, FeatureRecord};
use crate::trajectory::{
    ContaminationInfo, ContaminationType, CorrectnessLabel, PrefixKind, Step, StepRole,
    Trajectory,
};
use crate::{par, Error, Result};

/// Gain of the hidden signal in the mean-pooled feature relative to the
/// last-token feature.
const MEAN_POOL_GAIN: f64 = 0.9;
/// Baseline logit offset of the turn's own tokens.
const ROUTING_BASE: f64 = 0.5;
/// Share of the attention signal that goes to sharpness rather than routing.
const SHARPNESS_GAIN: f64 = 0.3;
/// Std of the logit perturbation a contaminated prefix adds to prefix tokens.
const PREFIX_JITTER: f64 = 0.15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_train: usize,
    /// Size of the clean and contaminated test splits (matched pairs).
    pub n_test: usize,
    pub d_model: usize,
    pub heads: usize,
    pub layers: usize,
    /// Share of contaminated records in the training split.
    pub contamination_fraction: f64,
    /// Diagnostic split size as a fraction of `n_test`.
    pub diagnostic_fraction: f64,
    /// Norm of the class-mean offset of the hidden features (belief signal).
    pub hidden_signal: f64,
    /// Logit shift of attention routing per unit of correctness.
    pub attention_signal: f64,
    pub noise_std: f64,
    pub max_distance: usize,
    /// Hidden-signal attenuation at `max_distance`.
    pub hidden_floor: f64,
    pub rollout_groups: usize,
    pub group_size: usize,
    pub rollout_steps: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 42,
            n_train: 800,
            n_test: 200,
            d_model: 16,
            heads: 4,
            layers: 4,
            contamination_fraction: 0.5,
            diagnostic_fraction: 1.0,
            hidden_signal: 1.05,
            attention_signal: 0.42,
            noise_std: 1.0,
            max_distance: 4,
            hidden_floor: 0.1,
            rollout_groups: 16,
            group_size: 4,
            rollout_steps: 5,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let frac = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must lie in [0, 1], got {v}")))
            }
        };
        frac("contamination_fraction", self.contamination_fraction)?;
        frac("diagnostic_fraction", self.diagnostic_fraction)?;
        frac("hidden_floor", self.hidden_floor)?;
        if self.d_model == 0 || self.heads == 0 {
            return Err(Error::Config("d_model and heads must be positive".into()));
        }
        if self.layers < 4 {
            return Err(Error::Config(format!(
                "layers must be >= 4, got {}",
                self.layers
            )));
        }
        if self.max_distance == 0 {
            return Err(Error::Config("max_distance must be positive".into()));
        }
        if !(self.noise_std > 0.0 && self.noise_std.is_finite()) {
            return Err(Error::Config(format!(
                "noise_std must be > 0, got {}",
                self.noise_std
            )));
        }
        if !(self.hidden_signal.is_finite() && self.attention_signal.is_finite()) {
            return Err(Error::Config("signal strengths must be finite".into()));
        }
        if self.rollout_groups > 0 && (self.group_size < 2 || self.rollout_steps == 0) {
            return Err(Error::Config(
                "rollouts need group_size >= 2 and rollout_steps >= 1".into(),
            ));
        }
        Ok(())
    }

    /// Hidden-signal multiplier for a record at distance `d` (`None` = clean).
    pub fn attenuation(&self, distance: Option<usize>) -> f64 {
        match distance {
            None => 1.0,
            Some(_) if self.max_distance == 1 => 1.0,
            Some(d) => {
                let d = d.clamp(1, self.max_distance);
                let t = (d - 1) as f64 / (self.max_distance - 1) as f64;
                1.0 - (1.0 - self.hidden_floor) * t
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatentState {
    pub turn_correct: bool,
    pub belief_consistent: bool,
    pub prefix_kind: PrefixKind,
    pub distance: Option<usize>,
}

impl LatentState {
    fn clean(correct: bool) -> Self {
        LatentState {
            turn_correct: correct,
            belief_consistent: correct,
            prefix_kind: PrefixKind::Clean,
            distance: None,
        }
    }

    fn contaminated(correct: bool, d: usize) -> Self {
        LatentState {
            turn_correct: correct,
            belief_consistent: correct,
            prefix_kind: PrefixKind::Contaminated,
            distance: Some(d),
        }
    }

    fn diagnostic(correct: bool, d: usize) -> Self {
        LatentState {
            turn_correct: correct,
            belief_consistent: !correct,
            prefix_kind: if correct {
                PrefixKind::DiagnosticInconsistentCorrect
            } else {
                PrefixKind::DiagnosticConsistentIncorrect
            },
            distance: Some(d),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Corpus {
    pub train: Vec<FeatureRecord>,
    pub test_clean: Vec<FeatureRecord>,
    pub test_contaminated: Vec<FeatureRecord>,
    pub test_diagnostic: Vec<FeatureRecord>,
    /// Grouped multi-step trajectories for reward / advantage simulation.
    pub rollouts: Vec<FeatureRecord>,
}

impl Corpus {
    pub fn splits(&self) -> [(&'static str, &[FeatureRecord]); 5] {
        [
            ("train", &self.train),
            ("test_clean", &self.test_clean),
            ("test_contaminated", &self.test_contaminated),
            ("test_diagnostic", &self.test_diagnostic),
            ("rollouts", &self.rollouts),
        ]
    }
}

#[derive(Clone, Copy)]
enum Stream {
    Train = 1,
    TestPair = 2,
    Diagnostic = 3,
    Rollout = 4,
    Prefix = 5,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn derive_seed(seed: u64, stream: Stream, index: u64) -> u64 {
    splitmix(splitmix(splitmix(seed) ^ stream as u64) ^ index)
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Trajectory skeleton; prefix length is independent of the distance.
fn skeleton(
    cfg: &SynthConfig,
    rng: &mut ChaCha8Rng,
    task_id: String,
) -> (Trajectory, usize) {
    let eval_index = cfg.max_distance + 1 + rng.random_range(0..=2usize);
    let steps = (1..=eval_index)
        .map(|i| Step {
            index: i,
            role: if i == eval_index {
                StepRole::Action
            } else {
                match i % 3 {
                    1 => StepRole::Thought,
                    2 => StepRole::Action,
                    _ => StepRole::Observation,
                }
            },
            text_len_tokens: if i == eval_index {
                rng.random_range(6..=14)
            } else {
                rng.random_range(4..=12)
            },
            is_evaluation_turn: i == eval_index,
        })
        .collect();
    (
        Trajectory {
            task_id,
            steps,
            prefix_kind: PrefixKind::Clean,
            contamination: None,
        },
        eval_index,
    )
}

/// Builds one record. `eval_seed` drives every evaluation-turn draw;
/// `prefix_seed` drives contamination-only draws.
fn synth_record(
    cfg: &SynthConfig,
    record_id: String,
    latent: LatentState,
    eval_seed: u64,
    prefix_seed: u64,
) -> Result<(FeatureRecord, Trajectory)> {
    let mut rng = ChaCha8Rng::seed_from_u64(eval_seed);
    let mut prefix_rng = ChaCha8Rng::seed_from_u64(prefix_seed);

    let (mut traj, eval_index) = skeleton(cfg, &mut rng, record_id.clone());
    traj.prefix_kind = latent.prefix_kind;
    let contamination_type =
        ContaminationType::ALL[prefix_rng.random_range(0..ContaminationType::ALL.len())];
    if let Some(d) = latent.distance {
        traj.contamination = Some(ContaminationInfo {
            contaminated_index: eval_index - d,
            contamination_type,
            distance: d,
        });
    }
    let prefix_tokens = traj.prefix_token_count();
    let eval_tokens = traj.steps[eval_index - 1].text_len_tokens;
    let seq = prefix_tokens + eval_tokens;

    let (d_model, heads, layers) = (cfg.d_model, cfg.heads, cfg.layers);
    let belief = if latent.belief_consistent { 1.0 } else { -1.0 };
    let offset = belief * cfg.hidden_signal * cfg.attenuation(latent.distance)
        / (d_model as f64).sqrt();

    let hidden_last_token_per_layer: Vec<Vec<f64>> = (0..layers)
        .map(|l| {
            let depth = (l + 1) as f64 / layers as f64;
            (0..d_model)
                .map(|_| offset * depth + cfg.noise_std * normal(&mut rng))
                .collect()
        })
        .collect();
    let hidden_mean_pooled_last_layer: Vec<f64> = (0..d_model)
        .map(|_| offset * MEAN_POOL_GAIN + cfg.noise_std * normal(&mut rng))
        .collect();

    let correct = if latent.turn_correct { 1.0 } else { -1.0 };
    let contaminated = latent.prefix_kind != PrefixKind::Clean;
    let mut attention_rows = Vec::with_capacity(layers);
    for _ in 0..layers {
        let mut layer_rows = Vec::with_capacity(heads);
        for _ in 0..heads {
            let routing = ROUTING_BASE - correct * cfg.attention_signal
                + cfg.noise_std * normal(&mut rng);
            let sharp = (SHARPNESS_GAIN
                * (correct * cfg.attention_signal + cfg.noise_std * normal(&mut rng)))
            .exp();
            let mut logits: Vec<f64> = (0..seq)
                .map(|k| {
                    let base = sharp * normal(&mut rng);
                    if k >= prefix_tokens {
                        base + routing
                    } else {
                        base
                    }
                })
                .collect();
            if contaminated {
                for v in &mut logits[..prefix_tokens] {
                    *v += PREFIX_JITTER * normal(&mut prefix_rng);
                }
            }
            layer_rows.push(softmax(&logits));
        }
        attention_rows.push(layer_rows);
    }

    let payload = ActivationPayload {
        hidden_last_token_per_layer,
        hidden_mean_pooled_last_layer,
        attention_rows,
        prefix_token_count: prefix_tokens,
        eval_token_count: eval_tokens,
    };
    let mut record = build_feature_record(
        record_id,
        &payload,
        CorrectnessLabel::from_bool(latent.turn_correct),
        latent.prefix_kind,
        latent.distance,
    )?;
    record.belief_consistent = Some(latent.belief_consistent);
    if contaminated {
        record.contamination_type = Some(contamination_type);
    }
    Ok((record, traj))
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    let mut row: Vec<f64> = e.into_iter().map(|v| v / s).collect();
    let s2: f64 = row.iter().sum();
    row.iter_mut().for_each(|v| *v /= s2);
    row
}

fn pair_from_seed(
    cfg: &SynthConfig,
    base_seed: u64,
    correct: bool,
    distance: usize,
    ids: (String, String),
) -> Result<(FeatureRecord, FeatureRecord)> {
    let prefix_seed = derive_seed(base_seed, Stream::Prefix, 0);
    let (clean, _) = synth_record(cfg, ids.0, LatentState::clean(correct), base_seed, prefix_seed)?;
    let (cont, _) = synth_record(
        cfg,
        ids.1,
        LatentState::contaminated(correct, distance),
        base_seed,
        prefix_seed,
    )?;
    Ok((clean, cont))
}

/// One clean / contaminated pair sharing the evaluation turn. Label and
/// distance are drawn from `base_seed`.
pub fn generate_matched_pair(
    cfg: &SynthConfig,
    base_seed: u64,
) -> Result<(FeatureRecord, FeatureRecord)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix(base_seed));
    let correct = rng.random_bool(0.5);
    let d = rng.random_range(1..=cfg.max_distance);
    pair_from_seed(
        cfg,
        base_seed,
        correct,
        d,
        (format!("pair-{base_seed}-clean"), format!("pair-{base_seed}-contaminated")),
    )
}

/// The trajectory skeleton behind a generated record (for validation).
pub fn record_trajectory(
    cfg: &SynthConfig,
    latent: LatentState,
    eval_seed: u64,
) -> Result<Trajectory> {
    let prefix_seed = derive_seed(eval_seed, Stream::Prefix, 0);
    Ok(synth_record(cfg, "t".into(), latent, eval_seed, prefix_seed)?.1)
}

/// Test splits cycle labels and distances so that every distance bucket
/// holds both classes.
fn stratified(i: usize, max_distance: usize) -> (bool, usize) {
    (i % 2 == 1, 1 + (i / 2) % max_distance)
}

pub fn generate_corpus(cfg: &SynthConfig) -> Result<Corpus> {
    cfg.validate()?;
    let seed = cfg.seed;

    let train = par::map_range(cfg.n_train, |i| {
        let eval_seed = derive_seed(seed, Stream::Train, i as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix(eval_seed));
        let correct = rng.random_bool(0.5);
        let latent = if rng.random::<f64>() < cfg.contamination_fraction {
            LatentState::contaminated(correct, rng.random_range(1..=cfg.max_distance))
        } else {
            LatentState::clean(correct)
        };
        let prefix_seed = derive_seed(eval_seed, Stream::Prefix, 0);
        synth_record(cfg, format!("train-{i:05}"), latent, eval_seed, prefix_seed).map(|r| r.0)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let pairs = par::map_range(cfg.n_test, |i| {
        let (correct, d) = stratified(i, cfg.max_distance);
        pair_from_seed(
            cfg,
            derive_seed(seed, Stream::TestPair, i as u64),
            correct,
            d,
            (
                format!("test_clean-{i:05}"),
                format!("test_contaminated-{i:05}"),
            ),
        )
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let (test_clean, test_contaminated) = pairs.into_iter().unzip();

    let n_diag = (cfg.n_test as f64 * cfg.diagnostic_fraction).round() as usize;
    let test_diagnostic = par::map_range(n_diag, |i| {
        let (correct, d) = stratified(i, cfg.max_distance);
        let eval_seed = derive_seed(seed, Stream::Diagnostic, i as u64);
        let prefix_seed = derive_seed(eval_seed, Stream::Prefix, 0);
        synth_record(
            cfg,
            format!("test_diagnostic-{i:05}"),
            LatentState::diagnostic(correct, d),
            eval_seed,
            prefix_seed,
        )
        .map(|r| r.0)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let rollouts = generate_rollouts(cfg)?;

    Ok(Corpus {
        train,
        test_clean,
        test_contaminated,
        test_diagnostic,
        rollouts,
    })
}

/// `rollout_groups` prompts x `group_size` trajectories x `rollout_steps`
/// steps. Each trajectory follows its own linear trend in per-step success
/// probability, so trajectories in a group differ in shape, not just level.
fn generate_rollouts(cfg: &SynthConfig) -> Result<Vec<FeatureRecord>> {
    let n_traj = cfg.rollout_groups * cfg.group_size;
    let per_traj = par::map_range(n_traj, |k| {
        let (g, m) = (k / cfg.group_size, k % cfg.group_size);
        let traj_seed = derive_seed(cfg.seed, Stream::Rollout, k as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix(traj_seed));
        let level: f64 = rng.random_range(0.25..0.75);
        let slope: f64 = rng.random_range(-0.2..0.2);
        let centre = (cfg.rollout_steps as f64 + 1.0) / 2.0;
        (1..=cfg.rollout_steps)
            .map(|t| {
                let p = (level + slope * (t as f64 - centre)).clamp(0.05, 0.95);
                let correct = rng.random_bool(p);
                let eval_seed = derive_seed(traj_seed, Stream::Rollout, t as u64);
                let prefix_seed = derive_seed(eval_seed, Stream::Prefix, 0);
                let traj_id = format!("g{g:03}-m{m}");
                let (mut r, _) = synth_record(
                    cfg,
                    format!("rollouts-{traj_id}-s{t}"),
                    LatentState::clean(correct),
                    eval_seed,
                    prefix_seed,
                )?;
                r.trajectory_id = Some(traj_id);
                r.step = Some(t);
                Ok(r)
            })
            .collect::<Result<Vec<_>>>()
    });
    let mut out = Vec::with_capacity(n_traj * cfg.rollout_steps);
    for t in per_traj {
        out.extend(t?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{AttentionStat, FeatureSubsetMask};
    use crate::trajectory::validate_trajectory;

    fn small() -> SynthConfig {
        SynthConfig {
            n_train: 60,
            n_test: 24,
            rollout_groups: 2,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let a = generate_corpus(&small()).unwrap();
        let b = generate_corpus(&small()).unwrap();
        assert_eq!(a, b);
        let c = generate_corpus(&SynthConfig { seed: 43, ..small() }).unwrap();
        assert_ne!(a.train, c.train);
        assert_eq!(a.train.len(), c.train.len());
    }

    #[test]
    fn diagnostic_split_is_anti_correlated() {
        let c = generate_corpus(&small()).unwrap();
        assert_eq!(c.test_diagnostic.len(), 24);
        for r in &c.test_diagnostic {
            assert_ne!(r.belief_consistent, Some(r.label.is_correct()));
            assert!(r.prefix_kind.is_diagnostic());
            let expect_correct = r.prefix_kind == PrefixKind::DiagnosticInconsistentCorrect;
            assert_eq!(r.label.is_correct(), expect_correct);
        }
    }

    #[test]
    fn every_split_has_both_labels_and_valid_dims() {
        let c = generate_corpus(&small()).unwrap();
        for (name, split) in c.splits() {
            assert!(split.iter().any(|r| r.label.is_correct()), "{name}");
            assert!(split.iter().any(|r| !r.label.is_correct()), "{name}");
            for r in split {
                let dims = r.dims().unwrap();
                assert_eq!((dims.d_model, dims.heads, dims.layers), (16, 4, 4));
                // ratios of a valid row
                let pr = FeatureSubsetMask::new(&[AttentionStat::PrefixRatio])
                    .unwrap()
                    .select(&r.features.attn_multi_layer)
                    .unwrap();
                let sr = FeatureSubsetMask::new(&[AttentionStat::SelfRatio])
                    .unwrap()
                    .select(&r.features.attn_multi_layer)
                    .unwrap();
                for (p, s) in pr.iter().zip(&sr) {
                    assert!((p + s - 1.0).abs() <= 1e-5);
                }
            }
        }
    }

    #[test]
    fn matched_pairs_share_the_evaluation_turn() {
        let cfg = small();
        for seed in 0..20 {
            let (clean, cont) = generate_matched_pair(&cfg, seed).unwrap();
            assert_eq!(clean.label, cont.label);
            assert_eq!(clean.prefix_kind, PrefixKind::Clean);
            assert_eq!(cont.prefix_kind, PrefixKind::Contaminated);
            let d = cont.distance.unwrap();
            assert!((1..=cfg.max_distance).contains(&d));
            // hidden noise shared: difference is the attenuated offset only
            let a = cfg.attenuation(Some(d));
            let sign = if clean.label.is_correct() { 1.0 } else { -1.0 };
            let shift = sign * cfg.hidden_signal * (1.0 - a) / (cfg.d_model as f64).sqrt();
            for (x, y) in clean.features.last_token.iter().zip(&cont.features.last_token) {
                assert!((x - y - shift).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn contamination_only_touches_the_prefix_segment() {
        let cfg = small();
        let latent_clean = LatentState::clean(true);
        let latent_cont = LatentState::contaminated(true, 2);
        let (rc, tc) = synth_record(&cfg, "a".into(), latent_clean, 9, 10).unwrap();
        let (rx, tx) = synth_record(&cfg, "b".into(), latent_cont, 9, 10).unwrap();
        assert_eq!(tc.steps, tx.steps);
        assert!(validate_trajectory(&tc).is_empty());
        assert!(validate_trajectory(&tx).is_empty());
        assert_ne!(rc.features.attn_multi_layer, rx.features.attn_multi_layer);
    }

    #[test]
    fn self_ratio_moves_only_through_the_prefix_normalizer() {
        // turn-segment logits are shared across the pair; only the prefix
        // jitter changes the softmax normalizer
        let cfg = small();
        let (clean, cont) = generate_matched_pair(&cfg, 77).unwrap();
        let self_ratio = |r: &FeatureRecord| {
            FeatureSubsetMask::new(&[AttentionStat::SelfRatio])
                .unwrap()
                .select(&r.features.attn_last_layer)
                .unwrap()
        };
        let (a, b) = (self_ratio(&clean), self_ratio(&cont));
        assert_eq!(a.len(), cfg.heads);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 0.1);
        }
    }

    #[test]
    fn attenuation_schedule() {
        let cfg = SynthConfig::default();
        assert_eq!(cfg.attenuation(None), 1.0);
        assert_eq!(cfg.attenuation(Some(1)), 1.0);
        assert!((cfg.attenuation(Some(cfg.max_distance)) - cfg.hidden_floor).abs() < 1e-15);
        let vals: Vec<f64> = (1..=cfg.max_distance).map(|d| cfg.attenuation(Some(d))).collect();
        assert!(vals.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn generated_trajectories_validate() {
        let cfg = small();
        for s in 0..10 {
            for latent in [
                LatentState::clean(false),
                LatentState::contaminated(true, 1 + (s as usize) % 4),
                LatentState::diagnostic(false, 4),
            ] {
                let t = record_trajectory(&cfg, latent, s).unwrap();
                assert!(validate_trajectory(&t).is_empty(), "{t:?}");
            }
        }
    }

    #[test]
    fn rollouts_are_grouped() {
        let c = generate_corpus(&small()).unwrap();
        assert_eq!(c.rollouts.len(), 2 * 4 * 5);
        assert_eq!(c.rollouts[0].trajectory_id.as_deref(), Some("g000-m0"));
        assert_eq!(c.rollouts[4].step, Some(5));
        assert_eq!(c.rollouts[5].trajectory_id.as_deref(), Some("g000-m1"));
    }

    #[test]
    fn config_validation() {
        for bad in [
            SynthConfig {
                layers: 3,
                ..Default::default()
            },
            SynthConfig {
                contamination_fraction: 1.5,
                ..Default::default()
            },
            SynthConfig {
                noise_std: 0.0,
                ..Default::default()
            },
            SynthConfig {
                max_distance: 0,
                ..Default::default()
            },
        ] {
            assert!(matches!(generate_corpus(&bad), Err(Error::Config(_))));
        }
    }
}
