//! Two-stage prefix-aware reward model.
//!
//! Stage 1 is a hidden-state probe producing a belief-consistency score
//! `s_bc`. It is fit once on the mixed (clean + contaminated) corpus and then
//! frozen. Stage 2 is a correction head over `[attention features; s_bc]`
//! fit against the same labels; its output `s_final` is the grounded
//! correctness estimate used as the step reward.

use serde::{Deserialize, Serialize};

use crate::features::{
    AttentionVariant, FeatureDims, FeatureRecord, FeatureSubsetMask, HiddenVariant,
};
use crate::probe::{
    fit_probe, fit_probe_with_standardizer, FitReport, ProbeConfig, ProbeModel, Standardizer,
};
use crate::{par, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairConfig {
    pub hidden: HiddenVariant,
    pub attention: AttentionVariant,
    /// `None` keeps all four statistics.
    pub mask: Option<FeatureSubsetMask>,
    pub probe: ProbeConfig,
    /// Whether `s_bc` passes through the Stage-2 standardizer like any other
    /// coordinate.
    pub standardize_sbc: bool,
}

impl Default for PairConfig {
    fn default() -> Self {
        PairConfig {
            hidden: HiddenVariant::LastToken,
            attention: AttentionVariant::MultiLayer,
            mask: None,
            probe: ProbeConfig::default(),
            standardize_sbc: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairModel {
    pub config: PairConfig,
    pub stage1: ProbeModel,
    pub stage2: ProbeModel,
    pub stage1_report: FitReport,
    pub stage2_report: FitReport,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairScore {
    pub s_bc: f64,
    pub s_final: f64,
}

pub(crate) fn check_consistent_dims(records: &[FeatureRecord]) -> Result<FeatureDims> {
    let first = records
        .first()
        .ok_or_else(|| Error::Empty("no training records".into()))?;
    let dims = first.dims()?;
    for r in &records[1..] {
        r.check_dims(&dims)?;
    }
    Ok(dims)
}

pub(crate) fn labels(records: &[FeatureRecord]) -> Vec<bool> {
    records.iter().map(|r| r.label.is_correct()).collect()
}

fn attention_input(
    cfg: &PairConfig,
    r: &FeatureRecord,
    s_bc: f64,
) -> Result<Vec<f64>> {
    let block = r.attention(cfg.attention);
    let mut x = match cfg.mask {
        Some(m) => m.select(block)?,
        None => block.to_vec(),
    };
    x.push(s_bc);
    Ok(x)
}

fn fit_stage2(
    cfg: &PairConfig,
    records: &[FeatureRecord],
    s_bc: &[f64],
    y: &[bool],
) -> Result<(ProbeModel, FitReport)> {
    let rows = records
        .iter()
        .zip(s_bc)
        .map(|(r, &s)| attention_input(cfg, r, s))
        .collect::<Result<Vec<_>>>()?;
    if cfg.standardize_sbc {
        fit_probe(&rows, y, &cfg.probe)
    } else {
        let mut st = Standardizer::fit(&rows)?;
        let last = st.len() - 1;
        st.mean[last] = 0.0;
        st.scale[last] = 1.0;
        fit_probe_with_standardizer(st, &rows, y, &cfg.probe)
    }
}

/// Fit Stage 1 on the hidden variant, freeze it, then fit Stage 2 on
/// `[attention; s_bc]` over the same records.
pub fn train_pair(records: &[FeatureRecord], config: PairConfig) -> Result<PairModel> {
    check_consistent_dims(records)?;
    let y = labels(records);
    let hidden: Vec<&[f64]> = records.iter().map(|r| r.hidden(config.hidden)).collect();
    let (stage1, stage1_report) = fit_probe(&hidden, &y, &config.probe)?;

    let s_bc = hidden
        .iter()
        .map(|h| stage1.predict_proba(h))
        .collect::<Result<Vec<_>>>()?;
    let (stage2, stage2_report) = fit_stage2(&config, records, &s_bc, &y)?;
    Ok(PairModel {
        config,
        stage1,
        stage2,
        stage1_report,
        stage2_report,
    })
}

impl PairModel {
    pub fn stage2_input_dim(&self) -> usize {
        self.stage2.input_dim()
    }

    pub fn score_bc(&self, r: &FeatureRecord) -> Result<f64> {
        self.stage1.predict_proba(r.hidden(self.config.hidden))
    }

    pub fn score_final(&self, r: &FeatureRecord) -> Result<f64> {
        Ok(self.score(r)?.s_final)
    }

    pub fn score(&self, r: &FeatureRecord) -> Result<PairScore> {
        let s_bc = self.score_bc(r)?;
        let x = attention_input(&self.config, r, s_bc)?;
        Ok(PairScore {
            s_bc,
            s_final: self.stage2.predict_proba(&x)?,
        })
    }

    /// Order-preserving batch scoring; parallel when the `parallel` feature
    /// is enabled.
    pub fn score_batch(&self, records: &[FeatureRecord]) -> Result<Vec<PairScore>> {
        par::map(records, |r| self.score(r)).into_iter().collect()
    }

    /// Single-threaded batch scoring.
    pub fn score_batch_serial(&self, records: &[FeatureRecord]) -> Result<Vec<PairScore>> {
        records.iter().map(|r| self.score(r)).collect()
    }

    /// Refit only the correction head under a different attention subset,
    /// reusing this model's frozen Stage 1.
    pub fn retrain_stage2(
        &self,
        records: &[FeatureRecord],
        mask: Option<FeatureSubsetMask>,
    ) -> Result<PairModel> {
        check_consistent_dims(records)?;
        let y = labels(records);
        let s_bc = records
            .iter()
            .map(|r| self.score_bc(r))
            .collect::<Result<Vec<_>>>()?;
        let config = PairConfig { mask, ..self.config };
        let (stage2, stage2_report) = fit_stage2(&config, records, &s_bc, &y)?;
        Ok(PairModel {
            config,
            stage1: self.stage1.clone(),
            stage2,
            stage1_report: self.stage1_report.clone(),
            stage2_report,
        })
    }
}
