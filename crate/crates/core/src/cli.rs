//! Command-line surface: `synth`, `train`, `score`, `eval` and `grpo-sim`.
//!
//! Every output is written atomically and echoes the effective
//! configuration. Identical invocations produce identical bytes.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::baselines::{score_baseline, train_baseline, BaselineKind, BaselineSpec};
use crate::features::{AttentionVariant, FeatureRecord, FeatureSubsetMask, HiddenVariant};
use crate::grpo::{
    group_advantages, paired_batches, variance_diagnostic, Aggregation, GroupBatch,
    DEFAULT_COLLAPSE_THRESHOLD, DEFAULT_EPS_NUM, DEFAULT_GROUP_SIZE,
};
use crate::io::{
    hash_file, read_bytes, read_feature_file, read_trace_file, sha256_hex, trace_file_bytes,
    write_atomic, write_feature_file, EffectiveReward, FeatureManifest, LoadedModel,
    ModelFile, Report, TraceHeader, TraceLine, TrainingMeta, TRACE_FORMAT,
};
use crate::metrics::{accuracy, auroc, ece, stratified_auroc, EceConfig, ScoredSet, DEFAULT_DISTANCE_CAP};
use crate::pair::{train_pair, PairConfig};
use crate::probe::{ProbeConfig, DEFAULT_MAX_ITER, DEFAULT_REG_C, DEFAULT_TOL};
use crate::reward::{momentum_reward, RewardConfig, RewardMode};
use crate::synth::{generate_corpus, SynthConfig};
use crate::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "pair", version, about = "Prefix-aware probe reward model")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a seeded synthetic corpus.
    Synth(SynthArgs),
    /// Fit a PAIR model or a single-probe baseline.
    Train(TrainArgs),
    /// Score trajectories into per-step reward traces.
    Score(ScoreArgs),
    /// AUROC / ECE report over one or more feature files.
    Eval(EvalArgs),
    /// Group-relative advantage and variance diagnostic over reward traces.
    GrpoSim(GrpoArgs),
}

fn parse_name<T: DeserializeOwned>(s: &str) -> std::result::Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.replace('-', "_")))
        .map_err(|_| format!("unknown value `{s}`"))
}

fn parse_from_str<T: std::str::FromStr<Err = Error>>(s: &str) -> std::result::Result<T, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
    /// JSON generator config; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub n_train: Option<usize>,
    #[arg(long)]
    pub n_test: Option<usize>,
    #[arg(long)]
    pub hidden_signal: Option<f64>,
    #[arg(long)]
    pub attention_signal: Option<f64>,
    #[arg(long)]
    pub noise_std: Option<f64>,
    #[arg(long)]
    pub max_distance: Option<usize>,
    #[arg(long)]
    pub contamination_fraction: Option<f64>,
    #[arg(long)]
    pub rollout_groups: Option<usize>,
    #[arg(long)]
    pub group_size: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub model_out: PathBuf,
    /// Train the two-stage model.
    #[arg(long, conflicts_with = "baseline", required_unless_present = "baseline")]
    pub pair: bool,
    #[arg(long, value_parser = parse_from_str::<BaselineKind>)]
    pub baseline: Option<BaselineKind>,
    #[arg(long, default_value_t = DEFAULT_REG_C)]
    pub reg_c: f64,
    #[arg(long, default_value_t = DEFAULT_TOL)]
    pub tol: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_ITER)]
    pub max_iter: usize,
    /// Recorded in the model metadata; training itself draws no randomness.
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value = "last_token", value_parser = parse_name::<HiddenVariant>)]
    pub hidden: HiddenVariant,
    #[arg(long, default_value = "multi_layer", value_parser = parse_name::<AttentionVariant>)]
    pub attention: AttentionVariant,
    /// Attention statistics kept in Stage 2, e.g. `max_attn,self_ratio`.
    #[arg(long, value_parser = parse_from_str::<FeatureSubsetMask>)]
    pub subset: Option<FeatureSubsetMask>,
    /// Feed `s_bc` to Stage 2 without standardizing it.
    #[arg(long)]
    pub raw_sbc: bool,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub trace_out: PathBuf,
    #[arg(long, default_value = "momentum", value_parser = parse_from_str::<RewardMode>)]
    pub mode: RewardMode,
    #[arg(long, default_value_t = 5.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = 2.0)]
    pub temperature: f64,
    #[arg(long, default_value_t = 0.05)]
    pub clip: f64,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Feature files; each is reported as its own split and pooled overall.
    #[arg(long, required = true, num_args = 1..)]
    pub input: Vec<PathBuf>,
    #[arg(long)]
    pub report_out: PathBuf,
    /// Add per-distance AUROC buckets.
    #[arg(long)]
    pub stratify_distance: bool,
    #[arg(long, default_value_t = DEFAULT_DISTANCE_CAP)]
    pub distance_cap: usize,
    /// Refit Stage 2 on `--train` with only these attention statistics.
    #[arg(long, value_parser = parse_from_str::<FeatureSubsetMask>, requires = "train")]
    pub subset: Option<FeatureSubsetMask>,
    #[arg(long)]
    pub train: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GrpoArgs {
    #[arg(long)]
    pub traces: PathBuf,
    #[arg(long)]
    pub report_out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_GROUP_SIZE)]
    pub group_size: usize,
    #[arg(long, default_value = "mean", value_parser = parse_from_str::<Aggregation>)]
    pub aggregation: Aggregation,
    /// Momentum scale for the momentum side of the variance comparison.
    #[arg(long, default_value_t = 5.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = DEFAULT_COLLAPSE_THRESHOLD)]
    pub collapse_threshold: f64,
    #[arg(long, default_value_t = DEFAULT_EPS_NUM)]
    pub eps_num: f64,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(a) => synth(&a),
        Command::Train(a) => train(&a),
        Command::Score(a) => score(&a),
        Command::Eval(a) => eval(&a),
        Command::GrpoSim(a) => grpo_sim(&a),
    }
}

fn canonical_hash<T: Serialize>(v: &T) -> Result<String> {
    Ok(sha256_hex(serde_json::to_string(v)?.as_bytes()))
}

pub fn synth_config(a: &SynthArgs) -> Result<SynthConfig> {
    let mut cfg = match &a.config {
        Some(p) => serde_json::from_slice(&read_bytes(p)?)
            .map_err(|e| Error::Parse(format!("{}: {e}", p.display())))?,
        None => SynthConfig::default(),
    };
    macro_rules! flag {
        ($($f:ident),*) => { $( if let Some(v) = a.$f { cfg.$f = v; } )* };
    }
    flag!(
        seed,
        n_train,
        n_test,
        hidden_signal,
        attention_signal,
        noise_std,
        max_distance,
        contamination_fraction,
        rollout_groups,
        group_size
    );
    cfg.validate()?;
    Ok(cfg)
}

fn synth(a: &SynthArgs) -> Result<()> {
    let cfg = synth_config(a)?;
    let corpus = generate_corpus(&cfg)?;
    let config_hash = canonical_hash(&cfg)?;
    fs::create_dir_all(&a.out_dir).map_err(|e| crate::io::io_error(&a.out_dir, e))?;
    let mut files = serde_json::Map::new();
    for (name, records) in corpus.splits() {
        let Some(first) = records.first() else {
            continue;
        };
        let mut manifest = FeatureManifest::new(first.dims()?, name, records.len());
        manifest.generator_config_hash = Some(config_hash.clone());
        let file = format!("{name}.jsonl");
        let path = a.out_dir.join(&file);
        write_feature_file(&path, &manifest, records)?;
        files.insert(
            name.into(),
            serde_json::json!({
                "path": file,
                "records": records.len(),
                "sha256": hash_file(&path)?,
            }),
        );
    }
    let doc = serde_json::json!({
        "config": cfg,
        "config_hash": config_hash,
        "files": files,
    });
    let mut bytes = serde_json::to_vec_pretty(&doc)?;
    bytes.push(b'\n');
    write_atomic(&a.out_dir.join("manifest.json"), &bytes)
}

fn train(a: &TrainArgs) -> Result<()> {
    let probe = ProbeConfig {
        reg_c: a.reg_c,
        tol: a.tol,
        max_iter: a.max_iter,
    };
    probe.validate()?;
    let (manifest, records) = read_feature_file(&a.input)?;
    let meta = TrainingMeta {
        corpus_hash: hash_file(&a.input)?,
        seed: a.seed,
        records: records.len(),
    };
    let dims = manifest.dims();
    let file = match a.baseline {
        Some(kind) => {
            let spec = BaselineSpec { kind, probe };
            let (model, fit) = train_baseline(&spec, &records)?;
            ModelFile::from_baseline(spec, &model, &fit, dims, meta)
        }
        None => {
            let config = PairConfig {
                hidden: a.hidden,
                attention: a.attention,
                mask: a.subset,
                probe,
                standardize_sbc: !a.raw_sbc,
            };
            ModelFile::from_pair(&train_pair(&records, config)?, dims, meta)
        }
    };
    file.write(&a.model_out)
}

/// Named score columns produced by a model for a batch of records.
fn score_columns(model: &LoadedModel, records: &[FeatureRecord]) -> Result<Vec<(String, Vec<f64>)>> {
    Ok(match model {
        LoadedModel::Pair(m) => {
            let s = m.score_batch(records)?;
            vec![
                ("pair".into(), s.iter().map(|p| p.s_final).collect()),
                ("stage1_only".into(), s.iter().map(|p| p.s_bc).collect()),
            ]
        }
        LoadedModel::Baseline(spec, m) => {
            vec![(spec.kind.as_str().into(), score_baseline(m, spec, records)?)]
        }
    })
}

fn load_model(path: &Path) -> Result<(ModelFile, LoadedModel)> {
    let file = ModelFile::read(path)?;
    let model = file.load()?;
    Ok((file, model))
}

/// Records grouped by trajectory in order of first appearance, each group
/// sorted by step. Records without a trajectory id stand alone.
fn trajectories(records: &[FeatureRecord]) -> Result<Vec<(String, Vec<&FeatureRecord>)>> {
    let mut index: HashMap<&str, usize> = HashMap::new();
    let mut out: Vec<(String, Vec<&FeatureRecord>)> = Vec::new();
    for r in records {
        let id = r.trajectory_id.as_deref().unwrap_or(&r.record_id);
        match index.get(id) {
            Some(&i) => out[i].1.push(r),
            None => {
                index.insert(id, out.len());
                out.push((id.to_string(), vec![r]));
            }
        }
    }
    for (_, steps) in &mut out {
        if steps.iter().all(|r| r.step.is_some()) {
            steps.sort_by_key(|r| r.step);
            for (i, r) in steps.iter().enumerate() {
                if r.step != Some(i + 1) {
                    return Err(Error::OutOfOrder {
                        expected: i + 1,
                        got: r.step.unwrap_or(0),
                    });
                }
            }
        }
    }
    Ok(out)
}

fn score(a: &ScoreArgs) -> Result<()> {
    let cfg = RewardConfig {
        temperature: a.temperature,
        clip: a.clip,
        alpha: a.alpha,
        mode: a.mode,
    };
    cfg.validate()?;
    let (file, model) = load_model(&a.model)?;
    let (manifest, records) = read_feature_file(&a.input)?;
    if manifest.dims() != file.dims {
        return Err(Error::Dimension(format!(
            "model expects {:?}, input has {:?}",
            file.dims,
            manifest.dims()
        )));
    }
    let columns = score_columns(&model, &records)?;
    let s_final: HashMap<&str, f64> = records
        .iter()
        .map(|r| r.record_id.as_str())
        .zip(columns[0].1.iter().copied())
        .collect();
    let s_bc: HashMap<&str, f64> = match columns.get(1) {
        Some((_, v)) => records
            .iter()
            .map(|r| r.record_id.as_str())
            .zip(v.iter().copied())
            .collect(),
        None => HashMap::new(),
    };
    let mut lines = Vec::new();
    for (id, steps) in trajectories(&records)? {
        let stream: Vec<f64> = steps.iter().map(|r| s_final[r.record_id.as_str()]).collect();
        let trace = momentum_reward(&stream, &cfg)?;
        lines.push(TraceLine {
            trajectory_id: id,
            record_ids: steps.iter().map(|r| r.record_id.clone()).collect(),
            labels: steps.iter().map(|r| r.label.value()).collect(),
            s_bc: steps
                .iter()
                .filter_map(|r| s_bc.get(r.record_id.as_str()).copied())
                .collect(),
            steps: trace.steps,
        });
    }
    let header = TraceHeader {
        format: TRACE_FORMAT.into(),
        model_hash: hash_file(&a.model)?,
        input_hash: hash_file(&a.input)?,
        reward: EffectiveReward::from(&cfg),
        trajectories: lines.len(),
    };
    write_atomic(&a.trace_out, &trace_file_bytes(&header, &lines)?)
}

fn add_metrics(
    report: &mut Report,
    prefix: &str,
    set: &ScoredSet,
    column: &str,
    cap: Option<usize>,
) -> Result<()> {
    report.set(format!("{prefix}auroc.{column}"), auroc(set)?);
    report.set(format!("{prefix}ece.{column}"), ece(set, &EceConfig::default())?);
    report.set(format!("{prefix}accuracy.{column}"), accuracy(set, 0.5)?);
    if let Some(cap) = cap {
        for (bucket, v) in stratified_auroc(set, cap)? {
            report.set(format!("{prefix}bucket.{bucket}.auroc.{column}"), v);
        }
    }
    Ok(())
}

fn eval(a: &EvalArgs) -> Result<()> {
    let (file, mut model) = load_model(&a.model)?;
    let mut report = Report::new();
    report.set("model.sha256", hash_file(&a.model)?);
    report.set(
        "model.kind",
        file.baseline_kind().map_or("pair", BaselineKind::as_str),
    );

    if let Some(mask) = a.subset {
        let LoadedModel::Pair(pair) = &model else {
            return Err(Error::Config("--subset applies to PAIR models only".into()));
        };
        let train = a.train.as_deref().expect("clap enforces --train with --subset");
        let (_, train_records) = read_feature_file(train)?;
        report.set("train.sha256", hash_file(train)?);
        model = LoadedModel::Pair(pair.retrain_stage2(&train_records, Some(mask))?);
    }
    if let LoadedModel::Pair(p) = &model {
        report.echo("pair", &p.config)?;
    }

    let cap = a.stratify_distance.then_some(a.distance_cap);
    report.set("config.eval.stratify_distance", a.stratify_distance);
    report.set("config.eval.distance_cap", a.distance_cap);

    let mut pooled_records: Vec<FeatureRecord> = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for path in &a.input {
        let (manifest, records) = read_feature_file(path)?;
        if manifest.dims() != file.dims {
            return Err(Error::Dimension(format!(
                "{}: model expects {:?}, input has {:?}",
                path.display(),
                file.dims,
                manifest.dims()
            )));
        }
        let n = seen.entry(manifest.split.clone()).or_insert(0);
        *n += 1;
        let split = if *n == 1 {
            manifest.split.clone()
        } else {
            format!("{}_{n}", manifest.split)
        };
        let prefix = format!("split.{split}.");
        report.set(format!("{prefix}sha256"), hash_file(path)?);
        report.set(format!("{prefix}n"), records.len());
        let labels: Vec<bool> = records.iter().map(|r| r.label.is_correct()).collect();
        let strata: Vec<Option<usize>> = records.iter().map(|r| r.distance).collect();
        for (column, scores) in score_columns(&model, &records)? {
            let set = ScoredSet::new(scores, labels.clone()).with_strata(strata.clone());
            match add_metrics(&mut report, &prefix, &set, &column, cap) {
                Ok(()) | Err(Error::SingleClass(_)) => {}
                Err(e) => return Err(e),
            }
        }
        pooled_records.extend(records);
    }

    let labels: Vec<bool> = pooled_records.iter().map(|r| r.label.is_correct()).collect();
    let strata: Vec<Option<usize>> = pooled_records.iter().map(|r| r.distance).collect();
    report.set("n", pooled_records.len());
    report.set("n.correct", labels.iter().filter(|&&l| l).count());
    for (column, scores) in score_columns(&model, &pooled_records)? {
        let set = ScoredSet::new(scores, labels.clone()).with_strata(strata.clone());
        add_metrics(&mut report, "", &set, &column, cap)?;
    }
    report.write(&a.report_out)
}

fn grpo_sim(a: &GrpoArgs) -> Result<()> {
    if a.group_size < 2 {
        return Err(Error::GroupTooSmall(a.group_size));
    }
    if !(a.eps_num > 0.0) {
        return Err(Error::Config(format!("eps_num must be > 0, got {}", a.eps_num)));
    }
    let (header, traces) = read_trace_file(&a.traces)?;
    if traces.len() % a.group_size != 0 {
        return Err(Error::MismatchedGroups(format!(
            "{} trajectories do not split into groups of {}",
            traces.len(),
            a.group_size
        )));
    }
    let reward = RewardConfig {
        temperature: header.reward.temperature,
        clip: header.reward.clip,
        alpha: a.alpha,
        mode: RewardMode::Momentum,
    };
    reward.validate()?;

    let chunks: Vec<&[TraceLine]> = traces.chunks(a.group_size).collect();
    let streams: Vec<Vec<Vec<f64>>> = chunks
        .iter()
        .map(|g| {
            g.iter()
                .map(|t| t.steps.iter().map(|s| s.s_final).collect())
                .collect()
        })
        .collect();
    let pairs = paired_batches(&streams, &reward, a.aggregation)?;
    let diag = variance_diagnostic(&pairs, a.collapse_threshold)?;

    let mut report = Report::new();
    report.set("traces.sha256", hash_file(&a.traces)?);
    report.echo("grpo", &serde_json::json!({
        "group_size": a.group_size,
        "aggregation": a.aggregation,
        "alpha": a.alpha,
        "collapse_threshold": a.collapse_threshold,
        "eps_num": a.eps_num,
    }))?;
    report.echo("trace_reward", &header.reward)?;
    report.set("groups", chunks.len());
    report.set("trajectories", traces.len());

    let mut traced_var = 0.0;
    let mut max_abs_sum: f64 = 0.0;
    let mut zero_adv_groups = 0usize;
    for (i, g) in chunks.iter().enumerate() {
        let returns = g
            .iter()
            .map(|t| {
                let r: Vec<f64> = t.steps.iter().map(|s| s.reward).collect();
                a.aggregation.apply(&r)
            })
            .collect::<Result<Vec<_>>>()?;
        let batch = GroupBatch {
            returns,
            eps_num: a.eps_num,
        };
        let adv = group_advantages(&batch)?;
        max_abs_sum = max_abs_sum.max(adv.iter().sum::<f64>().abs());
        if adv.iter().all(|&x| x == 0.0) {
            zero_adv_groups += 1;
        }
        traced_var += batch.variance();
        let key = format!("group.{i:04}");
        report.set(format!("{key}.variance.traced"), batch.variance());
        report.set(format!("{key}.variance.vanilla"), diag.groups[i].vanilla);
        report.set(format!("{key}.variance.momentum"), diag.groups[i].momentum);
    }
    let mean = diag.mean_variance();
    report.set("variance.traced.mean", traced_var / chunks.len().max(1) as f64);
    report.set("variance.vanilla.mean", mean.vanilla);
    report.set("variance.momentum.mean", mean.momentum);
    report.set("collapsed.vanilla", diag.collapsed_vanilla);
    report.set("collapsed.momentum", diag.collapsed_momentum);
    report.set("advantage.max_abs_group_sum", max_abs_sum);
    report.set("advantage.zero_groups", zero_adv_groups);
    report.write(&a.report_out)
}
