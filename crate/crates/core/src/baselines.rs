//! Single-signal probe baselines. Each is one probe on a fixed slice of the
//! feature record, with no preprocessing beyond the probe's own
//! standardizer.

use serde::{Deserialize, Serialize};

use crate::features::{AttentionVariant, FeatureRecord, HiddenVariant};
use crate::metrics::{auroc, ece, EceConfig, ScoredSet};
use crate::pair::{check_consistent_dims, labels};
use crate::probe::{fit_probe, FitReport, ProbeConfig, ProbeModel};
use crate::{par, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    LastToken,
    MeanPooled,
    MultiLayer,
    AttentionLastLayer,
    MultiAttn,
    /// Last-token hidden features followed by last-layer attention features.
    HiddenPlusAttn,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 6] = [
        BaselineKind::LastToken,
        BaselineKind::MeanPooled,
        BaselineKind::MultiLayer,
        BaselineKind::AttentionLastLayer,
        BaselineKind::MultiAttn,
        BaselineKind::HiddenPlusAttn,
    ];

    pub const HIDDEN: [BaselineKind; 3] = [
        BaselineKind::LastToken,
        BaselineKind::MeanPooled,
        BaselineKind::MultiLayer,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BaselineKind::LastToken => "last_token",
            BaselineKind::MeanPooled => "mean_pooled",
            BaselineKind::MultiLayer => "multi_layer",
            BaselineKind::AttentionLastLayer => "attention_last_layer",
            BaselineKind::MultiAttn => "multi_attn",
            BaselineKind::HiddenPlusAttn => "hidden_plus_attn",
        }
    }

    pub fn is_hidden(self) -> bool {
        Self::HIDDEN.contains(&self)
    }

    /// The feature slice this baseline reads.
    pub fn slice(self, r: &FeatureRecord) -> Vec<f64> {
        match self {
            BaselineKind::LastToken => r.hidden(HiddenVariant::LastToken).to_vec(),
            BaselineKind::MeanPooled => r.hidden(HiddenVariant::MeanPooled).to_vec(),
            BaselineKind::MultiLayer => r.hidden(HiddenVariant::MultiLayer).to_vec(),
            BaselineKind::AttentionLastLayer => r.attention(AttentionVariant::LastLayer).to_vec(),
            BaselineKind::MultiAttn => r.attention(AttentionVariant::MultiLayer).to_vec(),
            BaselineKind::HiddenPlusAttn => {
                let h = r.hidden(HiddenVariant::LastToken);
                let a = r.attention(AttentionVariant::LastLayer);
                let mut x = Vec::with_capacity(h.len() + a.len());
                x.extend_from_slice(h);
                x.extend_from_slice(a);
                x
            }
        }
    }
}

impl std::fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for BaselineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.replace('-', "_");
        BaselineKind::ALL
            .into_iter()
            .find(|k| k.as_str() == norm)
            .ok_or_else(|| Error::Config(format!("unknown baseline `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineSpec {
    pub kind: BaselineKind,
    pub probe: ProbeConfig,
}

impl BaselineSpec {
    pub fn new(kind: BaselineKind) -> Self {
        BaselineSpec {
            kind,
            probe: ProbeConfig::default(),
        }
    }
}

pub fn train_baseline(
    spec: &BaselineSpec,
    records: &[FeatureRecord],
) -> Result<(ProbeModel, FitReport)> {
    check_consistent_dims(records)?;
    let rows: Vec<Vec<f64>> = records.iter().map(|r| spec.kind.slice(r)).collect();
    fit_probe(&rows, &labels(records), &spec.probe)
}

pub fn score_baseline(
    model: &ProbeModel,
    spec: &BaselineSpec,
    records: &[FeatureRecord],
) -> Result<Vec<f64>> {
    par::map(records, |r| model.predict_proba(&spec.kind.slice(r)))
        .into_iter()
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub auroc: f64,
    pub ece: f64,
}

pub fn evaluate_baseline(
    model: &ProbeModel,
    spec: &BaselineSpec,
    records: &[FeatureRecord],
) -> Result<Evaluation> {
    let scores = score_baseline(model, spec, records)?;
    let set = ScoredSet::new(scores, labels(records));
    Ok(Evaluation {
        auroc: auroc(&set)?,
        ece: ece(&set, &EceConfig::default())?,
    })
}

/// Trains every baseline kind on `train`, in parallel.
pub fn train_all(
    train: &[FeatureRecord],
    probe: ProbeConfig,
) -> Result<Vec<(BaselineSpec, ProbeModel)>> {
    par::map(&BaselineKind::ALL, |&kind| {
        let spec = BaselineSpec { kind, probe };
        train_baseline(&spec, train).map(|(m, _)| (spec, m))
    })
    .into_iter()
    .collect()
}
