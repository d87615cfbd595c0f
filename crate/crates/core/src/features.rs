//! Probe feature assembly from captured activations.
//!
//! Five variants are derived from one evaluation turn:
//!
//! | variant            | length        | content                                          |
//! |--------------------|---------------|--------------------------------------------------|
//! | `last_token`       | `d_model`     | final-layer hidden state of the turn's last token |
//! | `mean_pooled`      | `d_model`     | final-layer hidden states averaged over the turn  |
//! | `multi_layer`      | `4 * d_model` | last-token hidden states of the final 4 layers    |
//! | `attn_last_layer`  | `4 * H`       | attention statistics of the final layer           |
//! | `attn_multi_layer` | `4 * H * L`   | attention statistics of every layer               |
//!
//! Attention blocks are laid out statistic-major, then head, then layer:
//! `index = stat * (H * L) + head * L + layer` (with `L = 1` for the
//! last-layer block). Statistic order is `max_attn, std_attn, prefix_ratio,
//! self_ratio`.

use serde::{Deserialize, Serialize};

use crate::trajectory::{ContaminationType, CorrectnessLabel, PrefixKind};
use crate::{Error, Result};

/// Tolerance on attention-row normalization.
pub const ROW_SUM_TOLERANCE: f64 = 1e-5;

/// Number of final layers concatenated into the multi-layer hidden feature.
pub const MULTI_LAYER_DEPTH: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttentionStat {
    MaxAttn,
    StdAttn,
    PrefixRatio,
    SelfRatio,
}

impl AttentionStat {
    pub const ALL: [AttentionStat; 4] = [
        AttentionStat::MaxAttn,
        AttentionStat::StdAttn,
        AttentionStat::PrefixRatio,
        AttentionStat::SelfRatio,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AttentionStat::MaxAttn => "max_attn",
            AttentionStat::StdAttn => "std_attn",
            AttentionStat::PrefixRatio => "prefix_ratio",
            AttentionStat::SelfRatio => "self_ratio",
        }
    }

    fn position(self) -> usize {
        self as usize
    }
}

impl std::str::FromStr for AttentionStat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AttentionStat::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown attention statistic `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttentionStats {
    pub max_attn: f64,
    pub std_attn: f64,
    pub prefix_ratio: f64,
    pub self_ratio: f64,
}

impl AttentionStats {
    pub fn get(&self, stat: AttentionStat) -> f64 {
        match stat {
            AttentionStat::MaxAttn => self.max_attn,
            AttentionStat::StdAttn => self.std_attn,
            AttentionStat::PrefixRatio => self.prefix_ratio,
            AttentionStat::SelfRatio => self.self_ratio,
        }
    }
}

/// Summaries of one head's attention distribution over `[prefix; turn]`.
///
/// `std_attn` is the population standard deviation of the row entries.
pub fn attention_stats(row: &[f64], prefix_token_count: usize) -> Result<AttentionStats> {
    if prefix_token_count >= row.len() {
        return Err(Error::Dimension(format!(
            "prefix_token_count {prefix_token_count} must be < row length {}",
            row.len()
        )));
    }
    let mut sum = 0.0;
    for (i, &v) in row.iter().enumerate() {
        if !v.is_finite() || v < 0.0 {
            return Err(Error::Domain(format!("attention entry {i} is {v}")));
        }
        sum += v;
    }
    if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
        return Err(Error::Domain(format!("attention row sums to {sum}")));
    }

    let n = row.len() as f64;
    let mean = sum / n;
    let max_attn = row.iter().copied().fold(0.0_f64, f64::max);
    let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let prefix_ratio: f64 = row[..prefix_token_count].iter().sum();
    let self_ratio: f64 = row[prefix_token_count..].iter().sum();
    Ok(AttentionStats {
        max_attn,
        std_attn: var.sqrt(),
        prefix_ratio,
        self_ratio,
    })
}

/// Raw activations captured at the evaluation turn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivationPayload {
    /// `[layer][d_model]`, last token of the turn.
    pub hidden_last_token_per_layer: Vec<Vec<f64>>,
    pub hidden_mean_pooled_last_layer: Vec<f64>,
    /// `[layer][head][position]`, one aggregated distribution per head.
    pub attention_rows: Vec<Vec<Vec<f64>>>,
    pub prefix_token_count: usize,
    pub eval_token_count: usize,
}

impl ActivationPayload {
    pub fn layers(&self) -> usize {
        self.attention_rows.len()
    }

    pub fn heads(&self) -> usize {
        self.attention_rows.first().map_or(0, Vec::len)
    }

    pub fn d_model(&self) -> usize {
        self.hidden_mean_pooled_last_layer.len()
    }

    /// Check shapes and row normalization.
    pub fn validate(&self) -> Result<()> {
        if self.eval_token_count == 0 {
            return Err(Error::Dimension("eval_token_count must be positive".into()));
        }
        let d = self.d_model();
        if d == 0 {
            return Err(Error::Dimension("d_model must be positive".into()));
        }
        if self.hidden_last_token_per_layer.len() != self.layers() {
            return Err(Error::Dimension(format!(
                "{} hidden layers vs {} attention layers",
                self.hidden_last_token_per_layer.len(),
                self.layers()
            )));
        }
        if let Some(h) = self.hidden_last_token_per_layer.iter().find(|h| h.len() != d) {
            return Err(Error::Dimension(format!(
                "hidden vector of length {} != d_model {d}",
                h.len()
            )));
        }
        let heads = self.heads();
        if heads == 0 {
            return Err(Error::Dimension("no attention heads".into()));
        }
        let seq = self.prefix_token_count + self.eval_token_count;
        for layer in &self.attention_rows {
            if layer.len() != heads {
                return Err(Error::Dimension("ragged head count across layers".into()));
            }
            for row in layer {
                if row.len() != seq {
                    return Err(Error::Dimension(format!(
                        "attention row of length {} != prefix + eval = {seq}",
                        row.len()
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FeatureDims {
    pub d_model: usize,
    pub heads: usize,
    pub layers: usize,
}

impl FeatureDims {
    pub fn attn_multi_len(&self) -> usize {
        4 * self.heads * self.layers
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureBlocks {
    pub last_token: Vec<f64>,
    pub mean_pooled: Vec<f64>,
    pub multi_layer: Vec<f64>,
    pub attn_last_layer: Vec<f64>,
    pub attn_multi_layer: Vec<f64>,
}

/// One evaluation turn: features, label and provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRecord {
    pub record_id: String,
    pub label: CorrectnessLabel,
    pub prefix_kind: PrefixKind,
    #[serde(default)]
    pub distance: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contamination_type: Option<ContaminationType>,
    /// Latent coherence-with-prefix bit, known only for generated data.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub belief_consistent: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trajectory_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<usize>,
    pub features: FeatureBlocks,
    /// Reserved for payloads beyond the five standard variants.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extensions: Option<serde_json::Value>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HiddenVariant {
    LastToken,
    MeanPooled,
    MultiLayer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttentionVariant {
    LastLayer,
    MultiLayer,
}

impl FeatureRecord {
    pub fn hidden(&self, v: HiddenVariant) -> &[f64] {
        match v {
            HiddenVariant::LastToken => &self.features.last_token,
            HiddenVariant::MeanPooled => &self.features.mean_pooled,
            HiddenVariant::MultiLayer => &self.features.multi_layer,
        }
    }

    pub fn attention(&self, v: AttentionVariant) -> &[f64] {
        match v {
            AttentionVariant::LastLayer => &self.features.attn_last_layer,
            AttentionVariant::MultiLayer => &self.features.attn_multi_layer,
        }
    }

    /// Dimensions implied by the block lengths, if they are consistent.
    pub fn dims(&self) -> Result<FeatureDims> {
        let f = &self.features;
        let d_model = f.last_token.len();
        let heads = f.attn_last_layer.len() / 4;
        let layers = if heads == 0 {
            0
        } else {
            f.attn_multi_layer.len() / (4 * heads)
        };
        let dims = FeatureDims {
            d_model,
            heads,
            layers,
        };
        self.check_dims(&dims)?;
        Ok(dims)
    }

    pub fn check_dims(&self, dims: &FeatureDims) -> Result<()> {
        let f = &self.features;
        let expect = [
            ("last_token", f.last_token.len(), dims.d_model),
            ("mean_pooled", f.mean_pooled.len(), dims.d_model),
            ("multi_layer", f.multi_layer.len(), MULTI_LAYER_DEPTH * dims.d_model),
            ("attn_last_layer", f.attn_last_layer.len(), 4 * dims.heads),
            ("attn_multi_layer", f.attn_multi_layer.len(), dims.attn_multi_len()),
        ];
        for (name, got, want) in expect {
            if got != want || want == 0 {
                return Err(Error::Dimension(format!(
                    "record {}: {name} has length {got}, expected {want}",
                    self.record_id
                )));
            }
        }
        Ok(())
    }
}

/// Assemble every feature variant from a payload.
pub fn build_feature_record(
    record_id: impl Into<String>,
    payload: &ActivationPayload,
    label: CorrectnessLabel,
    prefix_kind: PrefixKind,
    distance: Option<usize>,
) -> Result<FeatureRecord> {
    payload.validate()?;
    let layers = payload.layers();
    if layers < MULTI_LAYER_DEPTH {
        return Err(Error::Dimension(format!(
            "multi-layer hidden feature needs {MULTI_LAYER_DEPTH} layers, payload has {layers}"
        )));
    }
    let heads = payload.heads();

    // stats[layer][head]
    let mut stats = Vec::with_capacity(layers);
    for layer in &payload.attention_rows {
        let per_head = layer
            .iter()
            .map(|row| attention_stats(row, payload.prefix_token_count))
            .collect::<Result<Vec<_>>>()?;
        stats.push(per_head);
    }

    let mut attn_multi_layer = Vec::with_capacity(4 * heads * layers);
    for stat in AttentionStat::ALL {
        for h in 0..heads {
            for layer_stats in &stats {
                attn_multi_layer.push(layer_stats[h].get(stat));
            }
        }
    }
    let last = &stats[layers - 1];
    let mut attn_last_layer = Vec::with_capacity(4 * heads);
    for stat in AttentionStat::ALL {
        attn_last_layer.extend(last.iter().map(|s| s.get(stat)));
    }

    let multi_layer = payload.hidden_last_token_per_layer[layers - MULTI_LAYER_DEPTH..]
        .iter()
        .flatten()
        .copied()
        .collect();

    Ok(FeatureRecord {
        record_id: record_id.into(),
        label,
        prefix_kind,
        distance,
        contamination_type: None,
        belief_consistent: None,
        trajectory_id: None,
        step: None,
        features: FeatureBlocks {
            last_token: payload.hidden_last_token_per_layer[layers - 1].clone(),
            mean_pooled: payload.hidden_mean_pooled_last_layer.clone(),
            multi_layer,
            attn_last_layer,
            attn_multi_layer,
        },
        extensions: None,
    })
}

/// Non-empty subset of the four attention statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FeatureSubsetMask(u8);

impl FeatureSubsetMask {
    pub const FULL: FeatureSubsetMask = FeatureSubsetMask(0b1111);

    pub fn new(stats: &[AttentionStat]) -> Result<Self> {
        let bits = stats.iter().fold(0u8, |acc, s| acc | (1 << s.position()));
        Self::from_bits(bits)
    }

    pub fn from_bits(bits: u8) -> Result<Self> {
        if bits & 0b1111 == 0 || bits > 0b1111 {
            return Err(Error::Config(
                "feature subset mask must name at least one statistic".into(),
            ));
        }
        Ok(FeatureSubsetMask(bits))
    }

    /// All fifteen non-empty subsets, in bit order.
    pub fn all_nonempty() -> Vec<FeatureSubsetMask> {
        (1u8..16).map(FeatureSubsetMask).collect()
    }

    pub fn contains(&self, stat: AttentionStat) -> bool {
        self.0 & (1 << stat.position()) != 0
    }

    pub fn stats(&self) -> Vec<AttentionStat> {
        AttentionStat::ALL
            .into_iter()
            .filter(|s| self.contains(*s))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn is_full(&self) -> bool {
        self.0 == 0b1111
    }

    /// Keep the statistic blocks named by the mask. `block` must be a
    /// statistic-major attention block whose length is a multiple of 4.
    pub fn select(&self, block: &[f64]) -> Result<Vec<f64>> {
        if !block.len().is_multiple_of(4) {
            return Err(Error::Dimension(format!(
                "attention block length {} is not a multiple of 4",
                block.len()
            )));
        }
        let per_stat = block.len() / 4;
        let mut out = Vec::with_capacity(per_stat * self.len());
        for s in self.stats() {
            let start = s.position() * per_stat;
            out.extend_from_slice(&block[start..start + per_stat]);
        }
        Ok(out)
    }
}

impl std::fmt::Display for FeatureSubsetMask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let names: Vec<&str> = self.stats().into_iter().map(AttentionStat::as_str).collect();
        f.write_str(&names.join(","))
    }
}

impl std::str::FromStr for FeatureSubsetMask {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.trim() == "all" || s.trim() == "full" {
            return Ok(FeatureSubsetMask::FULL);
        }
        let stats = s
            .split(',')
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .map(str::parse)
            .collect::<Result<Vec<AttentionStat>>>()?;
        FeatureSubsetMask::new(&stats)
    }
}

impl Serialize for FeatureSubsetMask {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.stats().serialize(s)
    }
}

impl<'de> Deserialize<'de> for FeatureSubsetMask {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let stats = Vec::<AttentionStat>::deserialize(d)?;
        FeatureSubsetMask::new(&stats).map_err(serde::de::Error::custom)
    }
}

/// Multi-layer attention features restricted to the statistics in `mask`,
/// preserving (statistic, head, layer) order.
pub fn apply_subset(record: &FeatureRecord, mask: FeatureSubsetMask) -> Result<Vec<f64>> {
    mask.select(&record.features.attn_multi_layer)
}
