//! On-disk formats: line-delimited feature files with a leading manifest
//! line, model documents, reward-trace files and flat metric reports.
//!
//! Floats go through `serde_json`, which prints the shortest representation
//! that parses back to the same value, so every format round-trips exactly.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::{BaselineKind, BaselineSpec};
use crate::features::{
    AttentionStat, AttentionVariant, FeatureDims, FeatureRecord, FeatureSubsetMask,
    HiddenVariant, MULTI_LAYER_DEPTH,
};
use crate::pair::{PairConfig, PairModel};
use crate::probe::{FitReport, ProbeConfig, ProbeModel};
use crate::reward::{RewardConfig, RewardStep};
use crate::{Error, Result};

pub const FEATURE_FORMAT: &str = "pair-features";
pub const MODEL_FORMAT_VERSION: u32 = 1;
pub const TRACE_FORMAT: &str = "pair-traces";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// An io error that names the file it concerns.
pub fn io_error(path: &Path, e: std::io::Error) -> Error {
    Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| io_error(path, e))
}

pub fn hash_file(path: &Path) -> Result<String> {
    Ok(sha256_hex(&read_bytes(path)?))
}

/// Write-temp-then-rename in the destination directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut builder = tempfile::Builder::new();
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        builder.permissions(fs::Permissions::from_mode(0o644));
    }
    let write = || -> std::io::Result<()> {
        let mut tmp = builder.tempfile_in(dir)?;
        tmp.write_all(bytes)?;
        tmp.as_file().sync_all()?;
        tmp.persist(path).map_err(|e| e.error)?;
        Ok(())
    };
    write().map_err(|e| io_error(path, e))
}

fn to_line<T: Serialize>(v: &T) -> Result<String> {
    Ok(serde_json::to_string(v)?)
}

fn parse_line<T: DeserializeOwned>(line: &str, path: &Path, lineno: usize) -> Result<T> {
    serde_json::from_str(line)
        .map_err(|e| Error::Parse(format!("{}:{lineno}: {e}", path.display())))
}

/// Lines of a text file, with blank lines skipped and 1-based numbers kept.
fn read_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let f = fs::File::open(path).map_err(|e| io_error(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| io_error(path, e))?;
        if !line.trim().is_empty() {
            out.push((i + 1, line));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureManifest {
    pub format: String,
    pub d_model: usize,
    pub heads: usize,
    pub layers: usize,
    pub multi_layer_depth: usize,
    /// Statistic order of the attention blocks.
    pub attention_stats: Vec<AttentionStat>,
    /// Index formula of the attention blocks.
    pub attention_layout: String,
    pub split: String,
    pub records: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator_config_hash: Option<String>,
}

impl FeatureManifest {
    pub fn new(dims: FeatureDims, split: &str, records: usize) -> Self {
        FeatureManifest {
            format: FEATURE_FORMAT.into(),
            d_model: dims.d_model,
            heads: dims.heads,
            layers: dims.layers,
            multi_layer_depth: MULTI_LAYER_DEPTH,
            attention_stats: AttentionStat::ALL.to_vec(),
            attention_layout: "stat * heads * layers + head * layers + layer".into(),
            split: split.into(),
            records,
            generator_config_hash: None,
        }
    }

    pub fn dims(&self) -> FeatureDims {
        FeatureDims {
            d_model: self.d_model,
            heads: self.heads,
            layers: self.layers,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct ManifestLine {
    manifest: FeatureManifest,
}

pub fn feature_file_bytes(manifest: &FeatureManifest, records: &[FeatureRecord]) -> Result<Vec<u8>> {
    let dims = manifest.dims();
    let mut out = to_line(&ManifestLine {
        manifest: manifest.clone(),
    })?;
    out.push('\n');
    for r in records {
        r.check_dims(&dims)?;
        out.push_str(&to_line(r)?);
        out.push('\n');
    }
    Ok(out.into_bytes())
}

pub fn write_feature_file(
    path: &Path,
    manifest: &FeatureManifest,
    records: &[FeatureRecord],
) -> Result<()> {
    write_atomic(path, &feature_file_bytes(manifest, records)?)
}

pub fn read_feature_file(path: &Path) -> Result<(FeatureManifest, Vec<FeatureRecord>)> {
    let lines = read_lines(path)?;
    let ((n0, first), rest) = lines
        .split_first()
        .ok_or_else(|| Error::Parse(format!("{}: empty feature file", path.display())))?;
    let manifest: FeatureManifest = parse_line::<ManifestLine>(first, path, *n0)?.manifest;
    if manifest.format != FEATURE_FORMAT {
        return Err(Error::Parse(format!(
            "{}: unknown format `{}`",
            path.display(),
            manifest.format
        )));
    }
    let dims = manifest.dims();
    let records = rest
        .iter()
        .map(|(n, l)| {
            let r: FeatureRecord = parse_line(l, path, *n)?;
            r.check_dims(&dims).map_err(|e| match e {
                Error::Dimension(m) => {
                    Error::Dimension(format!("{}:{n}: {m}", path.display()))
                }
                other => other,
            })?;
            Ok(r)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((manifest, records))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageFile {
    pub probe: ProbeModel,
    pub input: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subset: Option<FeatureSubsetMask>,
    pub fit: FitReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelBody {
    Pair {
        hidden: HiddenVariant,
        attention: AttentionVariant,
        probe_config: ProbeConfig,
        standardize_sbc: bool,
        stage1: StageFile,
        stage2: StageFile,
    },
    Baseline {
        spec: BaselineSpec,
        stage1: StageFile,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub corpus_hash: String,
    pub seed: u64,
    pub records: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub dims: FeatureDims,
    pub model: ModelBody,
    pub training: TrainingMeta,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LoadedModel {
    Pair(PairModel),
    Baseline(BaselineSpec, ProbeModel),
}

fn hidden_name(v: HiddenVariant) -> &'static str {
    match v {
        HiddenVariant::LastToken => "last_token",
        HiddenVariant::MeanPooled => "mean_pooled",
        HiddenVariant::MultiLayer => "multi_layer",
    }
}

fn attention_name(v: AttentionVariant) -> &'static str {
    match v {
        AttentionVariant::LastLayer => "attn_last_layer",
        AttentionVariant::MultiLayer => "attn_multi_layer",
    }
}

impl ModelFile {
    pub fn from_pair(m: &PairModel, dims: FeatureDims, training: TrainingMeta) -> Self {
        let c = m.config;
        ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            dims,
            model: ModelBody::Pair {
                hidden: c.hidden,
                attention: c.attention,
                probe_config: c.probe,
                standardize_sbc: c.standardize_sbc,
                stage1: StageFile {
                    probe: m.stage1.clone(),
                    input: hidden_name(c.hidden).into(),
                    subset: None,
                    fit: m.stage1_report.clone(),
                },
                stage2: StageFile {
                    probe: m.stage2.clone(),
                    input: format!("{}+s_bc", attention_name(c.attention)),
                    subset: c.mask,
                    fit: m.stage2_report.clone(),
                },
            },
            training,
        }
    }

    pub fn from_baseline(
        spec: BaselineSpec,
        model: &ProbeModel,
        fit: &FitReport,
        dims: FeatureDims,
        training: TrainingMeta,
    ) -> Self {
        ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            dims,
            model: ModelBody::Baseline {
                spec,
                stage1: StageFile {
                    probe: model.clone(),
                    input: spec.kind.as_str().into(),
                    subset: None,
                    fit: fit.clone(),
                },
            },
            training,
        }
    }

    pub fn baseline_kind(&self) -> Option<BaselineKind> {
        match &self.model {
            ModelBody::Baseline { spec, .. } => Some(spec.kind),
            ModelBody::Pair { .. } => None,
        }
    }

    pub fn load(&self) -> Result<LoadedModel> {
        if self.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Parse(format!(
                "unsupported model format version {}",
                self.format_version
            )));
        }
        Ok(match &self.model {
            ModelBody::Pair {
                hidden,
                attention,
                probe_config,
                standardize_sbc,
                stage1,
                stage2,
            } => LoadedModel::Pair(PairModel {
                config: PairConfig {
                    hidden: *hidden,
                    attention: *attention,
                    mask: stage2.subset,
                    probe: *probe_config,
                    standardize_sbc: *standardize_sbc,
                },
                stage1: stage1.probe.clone(),
                stage2: stage2.probe.clone(),
                stage1_report: stage1.fit.clone(),
                stage2_report: stage2.fit.clone(),
            }),
            ModelBody::Baseline { spec, stage1 } => {
                LoadedModel::Baseline(*spec, stage1.probe.clone())
            }
        })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s.into_bytes())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Ok(serde_json::from_slice(bytes)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes()?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_bytes(&read_bytes(path)?)
            .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
    }
}

/// Reward parameters as applied, so that vanilla mode and momentum mode
/// with `alpha = 0` describe themselves identically.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectiveReward {
    pub temperature: f64,
    pub clip: f64,
    pub alpha: f64,
}

impl From<&RewardConfig> for EffectiveReward {
    fn from(c: &RewardConfig) -> Self {
        EffectiveReward {
            temperature: c.temperature,
            clip: c.clip,
            alpha: c.effective_alpha(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub format: String,
    pub model_hash: String,
    pub input_hash: String,
    pub reward: EffectiveReward,
    pub trajectories: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceLine {
    pub trajectory_id: String,
    pub record_ids: Vec<String>,
    pub labels: Vec<u8>,
    pub s_bc: Vec<f64>,
    pub steps: Vec<RewardStep>,
}

#[derive(Serialize, Deserialize)]
struct HeaderLine {
    header: TraceHeader,
}

pub fn trace_file_bytes(header: &TraceHeader, lines: &[TraceLine]) -> Result<Vec<u8>> {
    let mut out = to_line(&HeaderLine {
        header: header.clone(),
    })?;
    out.push('\n');
    for l in lines {
        out.push_str(&to_line(l)?);
        out.push('\n');
    }
    Ok(out.into_bytes())
}

pub fn read_trace_file(path: &Path) -> Result<(TraceHeader, Vec<TraceLine>)> {
    let lines = read_lines(path)?;
    let ((n0, first), rest) = lines
        .split_first()
        .ok_or_else(|| Error::Parse(format!("{}: empty trace file", path.display())))?;
    let header = parse_line::<HeaderLine>(first, path, *n0)?.header;
    if header.format != TRACE_FORMAT {
        return Err(Error::Parse(format!(
            "{}: unknown format `{}`",
            path.display(),
            header.format
        )));
    }
    let traces = rest
        .iter()
        .map(|(n, l)| parse_line(l, path, *n))
        .collect::<Result<Vec<TraceLine>>>()?;
    Ok((header, traces))
}

/// Flat key/value metric report.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Report(pub BTreeMap<String, serde_json::Value>);

impl Report {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, key: impl Into<String>, v: impl Into<serde_json::Value>) {
        self.0.insert(key.into(), v.into());
    }

    pub fn get_f64(&self, key: &str) -> Option<f64> {
        self.0.get(key).and_then(|v| v.as_f64())
    }

    /// Adds every field of `config` under `config.<prefix>.`.
    pub fn echo<T: Serialize>(&mut self, prefix: &str, config: &T) -> Result<()> {
        fn walk(r: &mut Report, key: String, v: serde_json::Value) {
            match v {
                serde_json::Value::Object(m) => {
                    for (k, v) in m {
                        walk(r, format!("{key}.{k}"), v);
                    }
                }
                other => r.set(key, other),
            }
        }
        walk(self, format!("config.{prefix}"), serde_json::to_value(config)?);
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut s = serde_json::to_string_pretty(&self.0)?;
        s.push('\n');
        Ok(s.into_bytes())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes()?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        serde_json::from_slice(&read_bytes(path)?)
            .map(Report)
            .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
    }
}
