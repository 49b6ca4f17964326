use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use actioncodec::baselines::{BinningTokenizer, DctBpeTokenizer, StringTokenizer};
use actioncodec::data::stats::{load_stats, save_stats};
use actioncodec::data::trajectory::{read_jsonl, write_jsonl};
use actioncodec::data::{
    compute_stats_by_embodiment, synth_dataset, ActionChunk, ChunkPool, EmbodimentRegistry,
    StatsTable, Trajectory,
};
use actioncodec::metrics::{
    artifact_entropy, capacity_bound, corpus_entropy, overlap_rate, recon_error,
    throughput_latency, CorpusEntropy, Norm, OrReport,
};
use actioncodec::model::ActionCodec;
use actioncodec::objectives::{
    losses::cosine_similarity, rvq_posttrain, train_codec, write_train_log,
};
use actioncodec::policy::{perturbation_profile, train_policy, write_profile_csv, PolicyDataset};
use actioncodec::{TokenSequence, Tokenizer};
use candle_core::DType;
use serde::Serialize;

use crate::config::{require, RunConfig};
use crate::plot::{line_chart, Series};
use crate::{CliError, Common};

struct Dataset {
    trajectories: Vec<Trajectory>,
    registry: EmbodimentRegistry,
    stats: StatsTable,
}

impl Dataset {
    fn load(dir: &Path) -> Result<Self, CliError> {
        let need = |name: &str| -> Result<PathBuf, CliError> {
            let p = dir.join(name);
            if p.exists() {
                Ok(p)
            } else {
                Err(CliError {
                    code: 1,
                    message: format!("dataset file {} not found", p.display()),
                })
            }
        };
        Ok(Self {
            trajectories: read_jsonl(&need("dataset.jsonl")?)?,
            registry: EmbodimentRegistry::load(&need("registry.json")?)?,
            stats: load_stats(&need("stats.json")?)?,
        })
    }

    fn pool(&self, stride: usize, horizon: Option<usize>) -> Result<ChunkPool, CliError> {
        Ok(ChunkPool::build(
            &self.trajectories,
            &self.registry,
            &self.stats,
            stride,
            horizon,
        )?)
    }
}

fn config(c: &Common) -> Result<RunConfig, CliError> {
    match &c.config {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn dataset(c: &Common) -> Result<Dataset, CliError> {
    let dir = c
        .dataset
        .as_ref()
        .ok_or_else(|| CliError::config("--dataset is required"))?;
    Dataset::load(dir)
}

fn checkpoint(c: &Common) -> Result<ActionCodec, CliError> {
    let p = c
        .checkpoint
        .as_ref()
        .ok_or_else(|| CliError::config("--checkpoint is required"))?;
    if !p.exists() {
        return Err(CliError {
            code: 1,
            message: format!("checkpoint {} not found", p.display()),
        });
    }
    Ok(ActionCodec::load(p)?)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

#[derive(Serialize)]
struct Resolved<'a> {
    command: &'a str,
    seed: u64,
    dataset: Option<&'a Path>,
    checkpoint: Option<&'a Path>,
    config: &'a RunConfig,
}

/// Creates `--out` and records the fully resolved configuration.
fn begin(command: &str, c: &Common, cfg: &RunConfig) -> Result<Instant, CliError> {
    std::fs::create_dir_all(&c.out)?;
    write_json(
        &c.out.join("resolved_config.json"),
        &Resolved {
            command,
            seed: c.seed,
            dataset: c.dataset.as_deref(),
            checkpoint: c.checkpoint.as_deref(),
            config: cfg,
        },
    )?;
    Ok(Instant::now())
}

/// Wall-clock figures live apart from the reproducible outputs.
fn finish(
    command: &str,
    c: &Common,
    start: Instant,
    extra: serde_json::Value,
) -> Result<(), CliError> {
    write_json(
        &c.out.join("timing.json"),
        &serde_json::json!({
            "command": command,
            "wall_seconds": start.elapsed().as_secs_f64(),
            "details": extra,
        }),
    )
}

pub fn synth(c: &Common) -> Result<(), CliError> {
    let cfg = config(c)?;
    let synth = require(&cfg.synth, "synth")?;
    synth.validate()?;
    let start = begin("synth", c, &cfg)?;
    let trajectories = synth_dataset(synth, c.seed)?;
    let registry = synth.registry()?;
    let stats = compute_stats_by_embodiment(&trajectories, &registry)?;
    write_jsonl(&c.out.join("dataset.jsonl"), &trajectories)?;
    save_stats(&c.out.join("stats.json"), &stats)?;
    registry.save(&c.out.join("registry.json"))?;
    println!(
        "wrote {} trajectories to {}",
        trajectories.len(),
        c.out.display()
    );
    finish("synth", c, start, serde_json::Value::Null)
}

pub fn train(c: &Common) -> Result<(), CliError> {
    let cfg = config(c)?;
    let codec_cfg = require(&cfg.codec, "codec")?.clone();
    let train_cfg = require(&cfg.train, "train")?;
    train_cfg.validate()?;
    let data = dataset(c)?;
    let start = begin("train", c, &cfg)?;
    let pool = data.pool(cfg.data.stride, None)?;
    let codec = ActionCodec::new(codec_cfg, data.registry.clone(), DType::F32, c.seed)?;
    let outcome = train_codec(codec, &pool, train_cfg, c.seed)?;
    outcome.codec.save(&c.out.join("codec.json"))?;
    write_train_log(&c.out.join("train_log.csv"), &outcome.log)?;
    if let Some(last) = outcome.log.last() {
        println!(
            "trained {} steps: loss {:.5}, recon {:.5}, perplexity {:.1}",
            train_cfg.steps, last.loss, last.recon, last.codebook_perplexity
        );
    }
    finish("train", c, start, serde_json::Value::Null)
}

pub fn posttrain(c: &Common) -> Result<(), CliError> {
    let cfg = config(c)?;
    let run = require(&cfg.posttrain, "posttrain")?;
    let base = checkpoint(c)?;
    let data = dataset(c)?;
    let start = begin("posttrain", c, &cfg)?;
    let pool = data.pool(cfg.data.stride, None)?;
    let audit: Vec<&ActionChunk> = pool.chunks().take(run.audit_chunks).collect();
    let out = rvq_posttrain(&base, &pool, run.depth, &run.train, &audit, c.seed)?;
    out.codec.save(&c.out.join("codec_rvq.json"))?;
    write_train_log(&c.out.join("posttrain_log.csv"), &out.log)?;
    write_json(
        &c.out.join("audit.json"),
        &serde_json::json!({ "summary": out.audit.summary(), "audit": out.audit }),
    )?;
    println!("{}", out.audit.summary());
    if out.audit.frozen_checksum_before != out.audit.frozen_checksum_after
        || out.audit.level0_mismatches != 0
    {
        return Err(CliError {
            code: 1,
            message: "frozen parameters or level-0 codes changed during post-training".into(),
        });
    }
    finish("posttrain", c, start, serde_json::Value::Null)
}

#[derive(Debug, Serialize)]
struct ArtifactRow {
    sigma: f64,
    mean_bits: f64,
    min_bits: f64,
    max_bits: f64,
    anchors: usize,
}

#[derive(Debug, Serialize)]
struct EvalReport {
    tokenizer: String,
    vocab: usize,
    depth: usize,
    token_budget: Option<usize>,
    n_chunks: usize,
    overlap: OrReport,
    recon_l1: f64,
    recon_l2: f64,
    capacity_bits: f64,
    level0_entropy: CorpusEntropy,
    artifact_entropy: Vec<ArtifactRow>,
}

/// Level-0 codes of every chunk, in pool order.
fn level0_corpus(tok: &dyn Tokenizer, pool: &ChunkPool) -> Result<Vec<Vec<u32>>, CliError> {
    let mut out = Vec::with_capacity(pool.len());
    for g in &pool.groups {
        let chunks: Vec<&ActionChunk> = g.items.iter().map(|i| &i.chunk).collect();
        for part in chunks.chunks(256) {
            out.extend(
                tok.encode_batch(part)?
                    .into_iter()
                    .map(|t| t.primary().to_vec()),
            );
        }
    }
    Ok(out)
}

pub fn eval(c: &Common) -> Result<(), CliError> {
    let cfg = config(c)?;
    let codec = checkpoint(c)?;
    let data = dataset(c)?;
    let start = begin("eval", c, &cfg)?;
    let pool = data.pool(cfg.data.stride, None)?;
    let chunks: Vec<&ActionChunk> = pool.chunks().collect();
    let pairs = pool.adjacent_pairs();
    let overlap = overlap_rate(&codec, &pairs)?;
    let corpus = level0_corpus(&codec, &pool)?;
    let level0_entropy = corpus_entropy(&corpus, codec.vocab_size())?;

    let m = cfg.eval.artifact_anchors.clamp(1, chunks.len());
    let anchors: Vec<&ActionChunk> = (0..m).map(|i| chunks[i * chunks.len() / m]).collect();
    let mut artifact = Vec::new();
    let mut csv = csv::Writer::from_path(c.out.join("artifact_entropy.csv"))?;
    csv.write_record(["sigma", "anchor", "bits"])?;
    for (si, &sigma) in cfg.eval.sigmas.iter().enumerate() {
        let mut bits = Vec::with_capacity(m);
        for (ai, a) in anchors.iter().enumerate() {
            let seed = c.seed ^ ((si as u64) << 32 | ai as u64);
            let h = artifact_entropy(&codec, a, sigma, cfg.eval.artifact_samples, seed)?;
            csv.write_record([sigma.to_string(), ai.to_string(), h.to_string()])?;
            bits.push(h);
        }
        artifact.push(ArtifactRow {
            sigma,
            mean_bits: bits.iter().sum::<f64>() / m as f64,
            min_bits: bits.iter().copied().fold(f64::INFINITY, f64::min),
            max_bits: bits.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            anchors: m,
        });
    }
    csv.flush()?;

    let report = EvalReport {
        tokenizer: codec.name(),
        vocab: codec.vocab_size(),
        depth: codec.depth(),
        token_budget: codec.token_budget(&chunks[0].shape()),
        n_chunks: chunks.len(),
        overlap,
        recon_l1: recon_error(&codec, &chunks, Norm::L1)?,
        recon_l2: recon_error(&codec, &chunks, Norm::L2)?,
        capacity_bits: capacity_bound(codec.n_tokens(), codec.vocab_size()),
        level0_entropy,
        artifact_entropy: artifact,
    };
    write_json(&c.out.join("metrics.json"), &report)?;
    println!(
        "OR {:.4}  recon L1 {:.5}  budget {:?}  H(C) {:.2} <= {:.2} <= {:.2} bits",
        report.overlap.overlap_rate,
        report.recon_l1,
        report.token_budget,
        report.level0_entropy.joint,
        report.level0_entropy.sum_marginals,
        report.capacity_bits
    );
    finish("eval", c, start, serde_json::Value::Null)
}

#[derive(Debug, Clone, Serialize)]
struct CompareRow {
    tokenizer: String,
    horizon: usize,
    vocab: usize,
    budget_mean: f64,
    budget_std: f64,
    budget: String,
    overlap_rate: f64,
    n_pairs: usize,
    recon_l1: f64,
    recon_l2: f64,
}

fn compare_row(tok: &dyn Tokenizer, pool: &ChunkPool) -> Result<CompareRow, CliError> {
    let chunks: Vec<&ActionChunk> = pool.chunks().collect();
    let lens: Vec<f64> = level0_corpus(tok, pool)?
        .iter()
        .map(|c| c.len() as f64)
        .collect();
    let depth = tok.encode(chunks[0])?.n_levels() as f64;
    let n = lens.len() as f64;
    let mean = lens.iter().sum::<f64>() / n * depth;
    let std = (lens.iter().map(|l| (l * depth - mean).powi(2)).sum::<f64>() / n).sqrt();
    let overlap = overlap_rate(tok, &pool.adjacent_pairs())?;
    Ok(CompareRow {
        tokenizer: tok.name(),
        horizon: chunks[0].horizon,
        vocab: tok.vocab_size(),
        budget_mean: mean,
        budget_std: std,
        budget: format!("{mean:.1}±{std:.1}"),
        overlap_rate: overlap.overlap_rate,
        n_pairs: overlap.n_pairs,
        recon_l1: recon_error(tok, &chunks, Norm::L1)?,
        recon_l2: recon_error(tok, &chunks, Norm::L2)?,
    })
}

pub fn compare(c: &Common) -> Result<(), CliError> {
    let cfg = config(c)?;
    let run = &cfg.compare;
    let codec = checkpoint(c)?;
    let data = dataset(c)?;
    let start = begin("compare", c, &cfg)?;
    let native = data.pool(cfg.data.stride, None)?;
    let short = data.pool(cfg.data.stride, Some(run.baseline_horizon))?;
    let short_chunks: Vec<&ActionChunk> = short.chunks().collect();
    let binning = BinningTokenizer::new(actioncodec::baselines::BinningConfig {
        horizon: run.baseline_horizon,
        ..run.binning.clone()
    })?;
    let string = StringTokenizer::new(run.string_precision)?;
    let dct = DctBpeTokenizer::fit(&short_chunks, run.dct_bpe.clone())?;
    dct.config.save_merges(&c.out.join("dct_bpe_merges.json"))?;

    let arms: Vec<(&dyn Tokenizer, &ChunkPool)> = vec![
        (&codec, &native),
        (&binning, &short),
        (&string, &short),
        (&dct, &short),
    ];
    let mut rows = Vec::new();
    let mut timing = BTreeMap::new();
    let delay = Duration::from_secs_f64(run.token_delay_ms.max(0.0) / 1000.0);
    for (tok, pool) in arms {
        rows.push(compare_row(tok, pool)?);
        let chunks: Vec<&ActionChunk> = pool.chunks().collect();
        let t = throughput_latency(tok, &chunks, run.trials.max(10), delay)?;
        timing.insert(tok.name(), t);
    }
    let mut w = csv::Writer::from_path(c.out.join("comparison.csv"))?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    write_json(&c.out.join("comparison.json"), &rows)?;
    println!(
        "{:<18} {:>4} {:>14} {:>8} {:>10} {:>11} {:>10}",
        "tokenizer", "T", "token budget", "OR", "recon L1", "latency s", "actions/s"
    );
    for r in &rows {
        let t = &timing[&r.tokenizer];
        println!(
            "{:<18} {:>4} {:>14} {:>8.3} {:>10.5} {:>11.4} {:>10.1}",
            r.tokenizer,
            r.horizon,
            r.budget,
            r.overlap_rate,
            r.recon_l1,
            t.latency_s,
            t.actions_per_s
        );
    }
    finish("compare", c, start, serde_json::to_value(&timing)?)
}

pub fn perturb(c: &Common) -> Result<(), CliError> {
    let cfg = config(c)?;
    let run = require(&cfg.perturb, "perturb")?;
    let codec = checkpoint(c)?;
    let data = dataset(c)?;
    let start = begin("perturb", c, &cfg)?;
    let pool = data.pool(cfg.data.stride, None)?;
    let all = PolicyDataset::from_pool(&pool, &codec)?;
    let (train, val) = all.split_by_trajectory(run.val_every);
    let (policy, curve) = train_policy(&train, &val, &run.policy, run.steps, c.seed, Some(&codec))?;
    curve.write_csv(&c.out.join("curve.csv"))?;
    let profile = perturbation_profile(&policy, &val, &codec, run.trials, c.seed)?;
    write_profile_csv(&profile, &c.out.join("perturb.csv"))?;
    for p in &profile {
        println!(
            "position {:>5}: L1 {:.5} ± {:.5}",
            p.position.map_or("none".to_string(), |j| j.to_string()),
            p.mean_l1,
            p.std_err
        );
    }
    finish("perturb", c, start, serde_json::Value::Null)
}

/// Per-step speed `|a_{t+1} - a_t| * hz`, linearly resampled to `points`
/// samples over normalized time.
pub fn velocity_profile(chunk: &ActionChunk, points: usize) -> Vec<f64> {
    let speeds: Vec<f64> = (1..chunk.horizon)
        .map(|t| {
            let d: f64 = chunk
                .row(t)
                .iter()
                .zip(chunk.row(t - 1))
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            d.sqrt() * chunk.control_hz()
        })
        .collect();
    if speeds.len() < 2 {
        return vec![speeds.first().copied().unwrap_or(0.0); points];
    }
    (0..points)
        .map(|i| {
            let u = i as f64 / (points - 1).max(1) as f64 * (speeds.len() - 1) as f64;
            let k = (u.floor() as usize).min(speeds.len() - 2);
            let f = u - k as f64;
            speeds[k] * (1.0 - f) + speeds[k + 1] * f
        })
        .collect()
}

#[derive(Debug, Serialize)]
struct TransferChunk {
    index: usize,
    velocity_cosine: Option<f64>,
    matches_reconstruction: Option<bool>,
}

pub fn transfer(c: &Common) -> Result<(), CliError> {
    let cfg = config(c)?;
    let run = require(&cfg.transfer, "transfer")?;
    let codec = checkpoint(c)?;
    let data = dataset(c)?;
    let from = codec.registry.by_name(&run.from)?.clone();
    let to = codec.registry.by_name(&run.to)?.clone();
    let start = begin("transfer", c, &cfg)?;
    let pool = data.pool(cfg.data.stride, None)?;
    let group = pool
        .groups
        .iter()
        .find(|g| g.spec.name == from.name)
        .ok_or_else(|| actioncodec::Error::UnknownEmbodiment(from.name.clone()))?;
    let sources: Vec<&ActionChunk> = group
        .items
        .iter()
        .take(run.chunks)
        .map(|i| &i.chunk)
        .collect();
    let tokens: Vec<TokenSequence> = codec.encode_batch(&sources)?;
    let target_shape = to.shape();
    let refs: Vec<&TokenSequence> = tokens.iter().collect();
    let decoded = codec.detokenize(&refs, &target_shape)?;
    let same = from.index == to.index;
    let recon = if same {
        Some(codec.reconstruct(&sources)?)
    } else {
        None
    };

    let mut w = csv::Writer::from_path(c.out.join("transfer.csv"))?;
    w.write_record([
        "chunk",
        "role",
        "embodiment",
        "step",
        "time",
        "dim",
        "value",
    ])?;
    let mut summary = Vec::new();
    for (i, (src, dst)) in sources.iter().zip(&decoded).enumerate() {
        for (role, chunk, name) in [("source", *src, &from.name), ("decoded", dst, &to.name)] {
            for t in 0..chunk.horizon {
                for d in 0..chunk.action_dim {
                    w.write_record([
                        i.to_string(),
                        role.to_string(),
                        name.clone(),
                        t.to_string(),
                        (t as f64 / chunk.control_hz()).to_string(),
                        d.to_string(),
                        chunk.get(t, d).to_string(),
                    ])?;
                }
            }
        }
        summary.push(TransferChunk {
            index: i,
            velocity_cosine: cosine_similarity(
                &velocity_profile(src, 64),
                &velocity_profile(dst, 64),
            )
            .ok(),
            matches_reconstruction: recon.as_ref().map(|r| {
                r[i].actions
                    .iter()
                    .map(|v| v.to_bits())
                    .eq(dst.actions.iter().map(|v| v.to_bits()))
            }),
        });
    }
    w.flush()?;
    let cosines: Vec<f64> = summary.iter().filter_map(|s| s.velocity_cosine).collect();
    let mean = if cosines.is_empty() {
        None
    } else {
        Some(cosines.iter().sum::<f64>() / cosines.len() as f64)
    };
    write_json(
        &c.out.join("transfer.json"),
        &serde_json::json!({
            "from": from.name,
            "to": to.name,
            "mean_velocity_cosine": mean,
            "chunks": summary,
        }),
    )?;
    println!(
        "{} -> {}: mean velocity-profile cosine {:?}",
        from.name, to.name, mean
    );
    finish("transfer", c, start, serde_json::Value::Null)
}

/// Numeric columns of a CSV by header name; unparsable cells become NaN.
fn read_columns(path: &Path) -> Result<BTreeMap<String, Vec<f64>>, CliError> {
    let mut r = csv::Reader::from_path(path)?;
    let headers: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let mut cols: BTreeMap<String, Vec<f64>> =
        headers.iter().map(|h| (h.clone(), Vec::new())).collect();
    for rec in r.records() {
        let rec = rec?;
        for (h, v) in headers.iter().zip(rec.iter()) {
            cols.get_mut(h)
                .expect("header present")
                .push(v.parse().unwrap_or(f64::NAN));
        }
    }
    Ok(cols)
}

fn series(cols: &BTreeMap<String, Vec<f64>>, x: &str, ys: &[&str]) -> Vec<Series> {
    let Some(xs) = cols.get(x) else {
        return Vec::new();
    };
    ys.iter()
        .filter_map(|y| {
            cols.get(*y).map(|v| {
                (
                    y.to_string(),
                    xs.iter().copied().zip(v.iter().copied()).collect(),
                )
            })
        })
        .collect()
}

pub fn report(c: &Common) -> Result<(), CliError> {
    let dir = &c.out;
    if !dir.is_dir() {
        return Err(CliError {
            code: 1,
            message: format!("{} is not a directory", dir.display()),
        });
    }
    let charts: [(&str, &str, &str, &str, &[&str]); 6] = [
        (
            "train_log.csv",
            "train_loss.svg",
            "Training losses",
            "step",
            &["loss", "recon", "tcl", "clip", "infonce"],
        ),
        (
            "train_log.csv",
            "train_or.svg",
            "Validation overlap rate",
            "step",
            &["overlap_rate"],
        ),
        (
            "posttrain_log.csv",
            "posttrain.svg",
            "Post-training reconstruction",
            "step",
            &["recon", "codebook"],
        ),
        (
            "curve.csv",
            "policy_curve.svg",
            "Policy training",
            "step",
            &["token_accuracy", "recon_l1"],
        ),
        (
            "perturb.csv",
            "perturb.svg",
            "Token injection error",
            "position",
            &["mean_l1", "std_err"],
        ),
        (
            "artifact_entropy.csv",
            "artifact_entropy.svg",
            "Artifact entropy",
            "sigma",
            &["bits"],
        ),
    ];
    let mut written = Vec::new();
    for (csv_name, svg, title, x, ys) in charts {
        let p = dir.join(csv_name);
        if !p.exists() {
            continue;
        }
        let cols = read_columns(&p)?;
        if line_chart(&dir.join(svg), title, x, &series(&cols, x, ys))? {
            written.push(svg.to_string());
        }
    }
    if written.is_empty() {
        return Err(CliError {
            code: 1,
            message: format!("no plottable CSVs in {}", dir.display()),
        });
    }
    for w in &written {
        println!("wrote {}", dir.join(w).display());
    }
    Ok(())
}
