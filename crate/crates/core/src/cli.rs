//! Command-line front end: config parsing and the experiment subcommands.
//!
//! Every command works inside one run directory (`--out`) with fixed file
//! names, so a pipeline is just the commands run in order:
//!
//! ```text
//! data/{train,valid,test}.{src,tgt}   gen-data
//! stats.csv, metric.ckpt              gen-data
//! pretrain/ckpt_<iter>, baseline.ckpt pretrain
//! pretrain_log.jsonl                  pretrain
//! finetune/ckpt_<iter>, best.ckpt     finetune
//! train_log.jsonl, aux_log.jsonl      finetune
//! eval.csv, hyp.<split>.txt           evaluate
//! correlation.csv                     correlate
//! divergence.tsv                      diverge
//! histogram.csv                       histogram
//! ```

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::analysis::{
    correlation_matrix, divergence_tsv, mine_divergence, CorrelationConfig, DivergenceThresholds, NamedMetric,
};
use crate::decoding::{write_hypotheses, BeamConfig};
use crate::error::{Error, Result};
use crate::model::checkpoint::{load_model, read_tensors, save_model, write_tensors, CheckpointMeta};
use crate::model::ModelParams;
use crate::objectives::{ObjectiveConfig, ObjectiveKind};
use crate::par;
use crate::rewards::{
    reward_histogram, synthetic_judgments, train_learned_metric, EditSimilarity, LearnedMetric, LearnedMetricParams,
    RewardFunction, SmoothedBleu,
};
use crate::synthdata::{
    corpus_stats, generate_corpus, read_corpus, read_lines, write_corpus, Corpus, SequencePair, Split, TaskKind,
    TaskSpec, Vocab,
};
use crate::trainer::{evaluate_model, finetune_reward, pretrain_nll, PretrainConfig, TrainConfig};

/// Reward used for fine-tuning.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RewardKind {
    Sbleu,
    EditSim,
    Learned,
}

impl FromStr for RewardKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sbleu" => Ok(RewardKind::Sbleu),
            "edit_sim" => Ok(RewardKind::EditSim),
            "learned" => Ok(RewardKind::Learned),
            _ => Err(Error::config(
                "reward.kind",
                format!("unknown reward `{s}` (sbleu, edit_sim, learned)"),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisConfig {
    pub k: usize,
    pub samples: usize,
    pub bin_width: f64,
    pub metric_up: f64,
    pub sbleu_down: f64,
    pub split: Split,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        let th = DivergenceThresholds::default();
        AnalysisConfig {
            k: 4,
            samples: 10_000,
            bin_width: 0.05,
            metric_up: th.metric_up,
            sbleu_down: th.sbleu_down,
            split: Split::Test,
        }
    }
}

/// Union of every module's settings plus the run seed.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub data: TaskSpec,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub beam_width: usize,
    pub length_norm: bool,
    pub reward: RewardKind,
    pub bleu_max_n: usize,
    pub judgments: usize,
    pub objective: ObjectiveConfig,
    pub pretrain: PretrainConfig,
    pub train: TrainConfig,
    pub analysis: AnalysisConfig,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data: TaskSpec::default(),
            embed_dim: 32,
            hidden_dim: 32,
            beam_width: 4,
            length_norm: true,
            reward: RewardKind::Sbleu,
            bleu_max_n: 4,
            judgments: 2000,
            objective: ObjectiveConfig::default(),
            pretrain: PretrainConfig::default(),
            train: TrainConfig::default(),
            analysis: AnalysisConfig::default(),
            seed: 1,
        }
    }
}

/// Keys accepted in config files and `--set`, in documentation order.
pub const CONFIG_KEYS: &[&str] = &[
    "data.task",
    "data.vocab_size",
    "data.min_len",
    "data.max_len",
    "data.noise_drop",
    "data.noise_swap",
    "data.corpus_size",
    "model.embed_dim",
    "model.hidden_dim",
    "decode.beam_width",
    "score.length_norm",
    "reward.kind",
    "reward.max_n",
    "reward.judgments",
    "objective.kind",
    "objective.alpha",
    "train.pretrain_iters",
    "train.pretrain_lr",
    "train.pretrain_lr_final",
    "train.pretrain_batch",
    "train.clip_norm",
    "train.ckpt_every",
    "train.average_last",
    "train.lr",
    "train.n",
    "train.beam_width",
    "train.eval_every",
    "train.max_iters",
    "train.topk_for_mean",
    "train.batch_sentences",
    "train.valid_size",
    "analysis.k",
    "analysis.samples",
    "analysis.bin_width",
    "analysis.metric_up",
    "analysis.sbleu_down",
    "analysis.split",
];

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::config(key, format!("cannot parse `{value}`: {e}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::config(key, format!("expected a boolean, got `{value}`"))),
    }
}

impl RunConfig {
    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value;
        match key {
            "data.task" => self.data.task_kind = v.parse::<TaskKind>()?,
            "data.vocab_size" => self.data.vocab_size = parse_value(key, v)?,
            "data.min_len" => self.data.min_len = parse_value(key, v)?,
            "data.max_len" => self.data.max_len = parse_value(key, v)?,
            "data.noise_drop" => self.data.noise_drop = parse_value(key, v)?,
            "data.noise_swap" => self.data.noise_swap = parse_value(key, v)?,
            "data.corpus_size" => self.data.corpus_size = parse_value(key, v)?,
            "model.embed_dim" => self.embed_dim = parse_value(key, v)?,
            "model.hidden_dim" => self.hidden_dim = parse_value(key, v)?,
            "decode.beam_width" => self.beam_width = parse_value(key, v)?,
            "score.length_norm" => self.length_norm = parse_bool(key, v)?,
            "reward.kind" => self.reward = v.parse()?,
            "reward.max_n" => self.bleu_max_n = parse_value(key, v)?,
            "reward.judgments" => self.judgments = parse_value(key, v)?,
            "objective.kind" => self.objective.kind = v.parse::<ObjectiveKind>()?,
            "objective.alpha" => self.objective.alpha = parse_value(key, v)?,
            "train.pretrain_iters" => self.pretrain.iters = parse_value(key, v)?,
            "train.pretrain_lr" => self.pretrain.lr = parse_value(key, v)?,
            "train.pretrain_lr_final" => self.pretrain.lr_final = parse_value(key, v)?,
            "train.pretrain_batch" => self.pretrain.batch_sentences = parse_value(key, v)?,
            "train.clip_norm" => self.pretrain.clip_norm = if v == "none" { None } else { Some(parse_value(key, v)?) },
            "train.ckpt_every" => self.pretrain.ckpt_every = parse_value(key, v)?,
            "train.average_last" => self.pretrain.average_last = parse_value(key, v)?,
            "train.lr" => self.train.lr = parse_value(key, v)?,
            "train.n" => self.train.n = parse_value(key, v)?,
            "train.beam_width" => self.train.beam_width_train = parse_value(key, v)?,
            "train.eval_every" => self.train.eval_every = parse_value(key, v)?,
            "train.max_iters" => self.train.max_iters = parse_value(key, v)?,
            "train.topk_for_mean" => self.train.topk_for_mean = parse_value(key, v)?,
            "train.batch_sentences" => self.train.batch_sentences = parse_value(key, v)?,
            "train.valid_size" => self.train.valid_size = parse_value(key, v)?,
            "analysis.k" => self.analysis.k = parse_value(key, v)?,
            "analysis.samples" => self.analysis.samples = parse_value(key, v)?,
            "analysis.bin_width" => self.analysis.bin_width = parse_value(key, v)?,
            "analysis.metric_up" => self.analysis.metric_up = parse_value(key, v)?,
            "analysis.sbleu_down" => self.analysis.sbleu_down = parse_value(key, v)?,
            "analysis.split" => self.analysis.split = v.parse()?,
            _ => return Err(Error::config(key, "unknown configuration key")),
        }
        Ok(())
    }

    /// Parses `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str, origin: &Path) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Format {
                path: origin.to_path_buf(),
                message: format!("line {}: expected `key = value`", i + 1),
            })?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    /// Propagates the run seed and shared switches into the module configs.
    pub fn finalize(mut self) -> Result<Self> {
        self.data.seed = self.seed;
        self.pretrain.seed = self.seed;
        self.train.seed = self.seed;
        self.pretrain.embed_dim = self.embed_dim;
        self.pretrain.hidden_dim = self.hidden_dim;
        self.objective.length_norm_scores = self.length_norm;
        if self.embed_dim == 0 {
            return Err(Error::config("model.embed_dim", "must be positive"));
        }
        if self.hidden_dim == 0 {
            return Err(Error::config("model.hidden_dim", "must be positive"));
        }
        if self.beam_width == 0 {
            return Err(Error::config("decode.beam_width", "must be positive"));
        }
        if self.bleu_max_n == 0 {
            return Err(Error::config("reward.max_n", "must be positive"));
        }
        self.objective.validate()?;
        Ok(self)
    }

    fn vocab(&self) -> Result<Vocab> {
        Vocab::new(self.data.vocab_size)
    }

    fn inference_beam(&self) -> BeamConfig {
        BeamConfig::new(self.beam_width, self.beam_width, self.length_norm)
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "seqreward",
    version,
    about = "Sequence-level reward optimization on synthetic translation tasks"
)]
pub struct Cli {
    /// Config file with `key = value` lines.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Run directory holding all inputs and outputs.
    #[arg(long, global = true, default_value = "run")]
    pub out: PathBuf,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; 1 gives the bit-reproducible sequential path.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Replace existing outputs instead of refusing.
    #[arg(long, global = true)]
    pub overwrite: bool,
    /// Extra `key=value` settings applied after the config file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the synthetic corpus, its stats and the learned metric.
    GenData,
    /// NLL pretraining; writes the averaged baseline.
    Pretrain,
    /// Reward fine-tuning from the baseline.
    Finetune {
        #[arg(long)]
        baseline: Option<PathBuf>,
    },
    /// Score top-1 decodes under every reward.
    Evaluate {
        /// Defaults to best.ckpt.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Second model for score deltas and decode edit distance.
        #[arg(long)]
        compare: Option<PathBuf>,
    },
    /// Kendall's tau between metrics over k-best lists.
    Correlate {
        /// Defaults to baseline.ckpt.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Sentences where the learned metric rises while smoothed BLEU falls.
    Diverge {
        /// Defaults to hyp_compare.<split>.txt from `evaluate --compare`.
        #[arg(long)]
        baseline_hyp: Option<PathBuf>,
        /// Defaults to hyp.<split>.txt.
        #[arg(long)]
        tuned_hyp: Option<PathBuf>,
        /// Defaults to data/<split>.tgt.
        #[arg(long)]
        references: Option<PathBuf>,
    },
    /// Histogram of learned-metric scores of top-1 decodes.
    Histogram {
        /// Defaults to baseline.ckpt.
        #[arg(long)]
        model: Option<PathBuf>,
    },
}

struct Run {
    dir: PathBuf,
    cfg: RunConfig,
    overwrite: bool,
}

#[derive(Serialize)]
struct PretrainLogRecord {
    iter: usize,
    nll: f64,
}

impl Run {
    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Refuses to clobber outputs unless `--overwrite`; with it, stale output
    /// directories are cleared so reruns leave no leftovers.
    fn claim(&self, outputs: &[&str]) -> Result<()> {
        for name in outputs {
            let p = self.path(name);
            if p.exists() {
                if !self.overwrite {
                    return Err(Error::input(format!(
                        "{} already exists; pass --overwrite to replace it",
                        p.display()
                    )));
                }
                if p.is_dir() {
                    fs::remove_dir_all(&p).map_err(|e| Error::io(&p, e))?;
                }
            }
        }
        fs::create_dir_all(&self.dir).map_err(|e| Error::io(&self.dir, e))
    }

    fn write(&self, name: &str, text: &str) -> Result<()> {
        let p = self.path(name);
        fs::write(&p, text).map_err(|e| Error::io(&p, e))
    }

    fn corpus(&self) -> Result<Corpus> {
        read_corpus(&self.path("data"), self.cfg.vocab()?)
    }

    fn model(&self, given: Option<&PathBuf>, default: &str) -> Result<ModelParams> {
        let p = given.cloned().unwrap_or_else(|| self.path(default));
        let (params, _) = load_model(&p)?;
        if params.vocab_size != self.cfg.data.vocab_size {
            return Err(Error::config(
                "data.vocab_size",
                format!("{} has vocabulary {}", p.display(), params.vocab_size),
            ));
        }
        Ok(params)
    }

    fn metric(&self) -> Result<LearnedMetricParams> {
        LearnedMetricParams::from_tensors(&read_tensors(&self.path("metric.ckpt"))?)
    }

    fn rewards(&self) -> Result<Vec<Arc<dyn RewardFunction>>> {
        let mut out: Vec<Arc<dyn RewardFunction>> = vec![
            Arc::new(SmoothedBleu::new(self.cfg.bleu_max_n)),
            Arc::new(EditSimilarity),
        ];
        if self.path("metric.ckpt").exists() {
            out.push(Arc::new(LearnedMetric::new(self.metric()?)));
        }
        Ok(out)
    }

    fn gen_data(&self) -> Result<()> {
        self.claim(&["data", "stats.csv", "metric.ckpt"])?;
        let corpus = generate_corpus(&self.cfg.data)?;
        write_corpus(&self.path("data"), &corpus)?;
        self.write("stats.csv", &corpus_stats(&corpus)?.to_csv())?;
        let refs: Vec<_> = corpus.split(Split::Train).iter().map(|p| p.reference.clone()).collect();
        let judged = synthetic_judgments(&refs, corpus.vocab, self.cfg.judgments, self.cfg.seed)?;
        let fit = train_learned_metric(&judged)?;
        write_tensors(&self.path("metric.ckpt"), &fit.params.to_tensors())?;
        log::info!("wrote {} pairs to {}", corpus.len(), self.dir.display());
        Ok(())
    }

    fn pretrain(&self) -> Result<()> {
        self.claim(&["pretrain", "baseline.ckpt", "pretrain_log.jsonl"])?;
        let corpus = self.corpus()?;
        let out = pretrain_nll(&corpus.split_pairs(Split::Train), corpus.vocab, &self.cfg.pretrain)?;
        let ckpt_dir = self.path("pretrain");
        fs::create_dir_all(&ckpt_dir).map_err(|e| Error::io(&ckpt_dir, e))?;
        let mut log = String::new();
        for ((it, params), nll) in out.checkpoints.iter().zip(&out.losses) {
            save_model(
                &ckpt_dir.join(format!("ckpt_{it}")),
                params,
                &CheckpointMeta::for_params(params, *it, self.cfg.seed),
            )?;
            log.push_str(&jsonl(&PretrainLogRecord { iter: *it, nll: *nll })?);
        }
        self.write("pretrain_log.jsonl", &log)?;
        save_model(
            &self.path("baseline.ckpt"),
            &out.params,
            &CheckpointMeta::for_params(&out.params, self.cfg.pretrain.iters, self.cfg.seed),
        )
    }

    fn finetune(&self, baseline: Option<&PathBuf>) -> Result<()> {
        self.claim(&["finetune", "best.ckpt", "train_log.jsonl", "aux_log.jsonl"])?;
        let corpus = self.corpus()?;
        let base = self.model(baseline, "baseline.ckpt")?;
        if base.embed_dim != self.cfg.embed_dim || base.hidden_dim != self.cfg.hidden_dim {
            return Err(Error::config(
                "model.embed_dim",
                format!(
                    "baseline is E={} H={}, config says E={} H={}",
                    base.embed_dim, base.hidden_dim, self.cfg.embed_dim, self.cfg.hidden_dim
                ),
            ));
        }
        let sbleu = SmoothedBleu::new(self.cfg.bleu_max_n);
        let edit = EditSimilarity;
        let learned = if self.path("metric.ckpt").exists() {
            Some(LearnedMetric::new(self.metric()?))
        } else {
            None
        };
        let reward: &dyn RewardFunction = match self.cfg.reward {
            RewardKind::Sbleu => &sbleu,
            RewardKind::EditSim => &edit,
            RewardKind::Learned => learned
                .as_ref()
                .ok_or_else(|| Error::input(format!("{} is missing", self.path("metric.ckpt").display())))?,
        };
        // the other rewards are tracked alongside so divergence can be inspected
        let mut aux: Vec<&dyn RewardFunction> = vec![&sbleu, &edit];
        if let Some(l) = &learned {
            aux.push(l);
        }
        aux.retain(|r| r.name() != reward.name());

        let ckpt_dir = self.path("finetune");
        fs::create_dir_all(&ckpt_dir).map_err(|e| Error::io(&ckpt_dir, e))?;
        let log_path = self.path("train_log.jsonl");
        let mut log_file = fs::File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;
        let seed = self.cfg.seed;
        let out = finetune_reward(
            &base,
            &corpus.split_pairs(Split::Train),
            &corpus.split_pairs(Split::Valid),
            reward,
            &aux,
            &self.cfg.objective,
            &self.cfg.train,
            |rec, params| {
                log_file
                    .write_all(jsonl(rec)?.as_bytes())
                    .map_err(|e| Error::io(&log_path, e))?;
                save_model(
                    &ckpt_dir.join(format!("ckpt_{}", rec.iteration)),
                    params,
                    &CheckpointMeta::for_params(params, rec.iteration, seed),
                )
            },
        )?;
        let mut aux_text = String::new();
        for rec in &out.aux_log {
            aux_text.push_str(&jsonl(rec)?);
        }
        self.write("aux_log.jsonl", &aux_text)?;
        log::info!("best checkpoint at iteration {}", out.best_iter);
        save_model(
            &self.path("best.ckpt"),
            &out.best_params,
            &CheckpointMeta::for_params(&out.best_params, out.best_iter, seed),
        )
    }

    fn evaluate(&self, model: Option<&PathBuf>, compare: Option<&PathBuf>) -> Result<()> {
        let split = self.cfg.analysis.split.name();
        let hyp = format!("hyp.{split}.txt");
        let hyp_compare = format!("hyp_compare.{split}.txt");
        self.claim(&["eval.csv", &hyp, &hyp_compare])?;
        let corpus = self.corpus()?;
        let params = self.model(model, "best.ckpt")?;
        let other = match compare {
            Some(p) => Some(self.model(Some(p), "")?),
            None => None,
        };
        let rewards = self.rewards()?;
        let refs: Vec<&dyn RewardFunction> = rewards.iter().map(|r| r.as_ref()).collect();
        let pairs = corpus.split_pairs(self.cfg.analysis.split);
        let beam = self.cfg.inference_beam();
        let (report, sets) = evaluate_model(&params, &pairs, &refs, &beam, other.as_ref())?;
        write_hypotheses(&self.path(&hyp), &sets)?;
        if let Some(o) = &other {
            let (_, other_sets) = evaluate_model(o, &pairs, &[], &beam, None)?;
            write_hypotheses(&self.path(&hyp_compare), &other_sets)?;
        }
        self.write("eval.csv", &report.to_csv())
    }

    fn correlate(&self, model: Option<&PathBuf>) -> Result<()> {
        self.claim(&["correlation.csv"])?;
        let corpus = self.corpus()?;
        let params = self.model(model, "baseline.ckpt")?;
        let mut metrics = vec![NamedMetric::model_score()];
        metrics.extend(self.rewards()?.into_iter().map(NamedMetric::reward));
        let a = &self.cfg.analysis;
        let cfg = CorrelationConfig {
            k: a.k,
            samples: a.samples,
            seed: self.cfg.seed,
            length_norm: self.cfg.length_norm,
        };
        let m = correlation_matrix(&params, &corpus.split_pairs(a.split), &metrics, &cfg)?;
        self.write("correlation.csv", &m.to_csv())
    }

    fn diverge(&self, baseline: Option<&PathBuf>, tuned: Option<&PathBuf>, refs: Option<&PathBuf>) -> Result<()> {
        self.claim(&["divergence.tsv"])?;
        let split = self.cfg.analysis.split.name();
        let or = |p: Option<&PathBuf>, d: String| p.cloned().unwrap_or_else(|| self.path(&d));
        let baseline = read_lines(&or(baseline, format!("hyp_compare.{split}.txt")))?;
        let tuned = read_lines(&or(tuned, format!("hyp.{split}.txt")))?;
        let references = read_lines(&or(refs, format!("data/{split}.tgt")))?;
        let metric = LearnedMetric::new(self.metric()?);
        let th = DivergenceThresholds {
            metric_up: self.cfg.analysis.metric_up,
            sbleu_down: self.cfg.analysis.sbleu_down,
        };
        let records = mine_divergence(&baseline, &tuned, &references, &metric, &th)?;
        self.write("divergence.tsv", &divergence_tsv(&records))
    }

    fn histogram(&self, model: Option<&PathBuf>) -> Result<()> {
        self.claim(&["histogram.csv"])?;
        let corpus = self.corpus()?;
        let params = self.model(model, "baseline.ckpt")?;
        let metric = LearnedMetric::new(self.metric()?);
        let pairs: Vec<SequencePair> = corpus.split_pairs(self.cfg.analysis.split);
        let (_, sets) = evaluate_model(&params, &pairs, &[], &self.cfg.inference_beam(), None)?;
        let scores = sets
            .iter()
            .zip(&pairs)
            .map(|(s, p)| {
                let top = s.top().map(|c| c.tokens.as_slice()).unwrap_or(&[]);
                metric.evaluate(top, &p.reference)
            })
            .collect::<Result<Vec<f64>>>()?;
        let h = reward_histogram(&scores, self.cfg.analysis.bin_width)?;
        self.write("histogram.csv", &h.to_csv())
    }
}

fn jsonl<T: Serialize>(record: &T) -> Result<String> {
    let mut s = serde_json::to_string(record).map_err(|e| Error::Internal(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

/// Builds the effective config: defaults, then the file, then `--set`, then `--seed`.
pub fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &cli.config {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        cfg.apply_text(&text, path)?;
    }
    for kv in &cli.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::config(kv.as_str(), "expected KEY=VALUE"))?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.finalize()
}

pub fn run(cli: Cli) -> Result<()> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(Error::config("--threads", "must be at least 1"));
        }
        par::init_threads(t);
    }
    let run = Run {
        cfg: load_config(&cli)?,
        dir: cli.out.clone(),
        overwrite: cli.overwrite,
    };
    match &cli.command {
        Command::GenData => run.gen_data(),
        Command::Pretrain => run.pretrain(),
        Command::Finetune { baseline } => run.finetune(baseline.as_ref()),
        Command::Evaluate { model, compare } => run.evaluate(model.as_ref(), compare.as_ref()),
        Command::Correlate { model } => run.correlate(model.as_ref()),
        Command::Diverge {
            baseline_hyp,
            tuned_hyp,
            references,
        } => run.diverge(baseline_hyp.as_ref(), tuned_hyp.as_ref(), references.as_ref()),
        Command::Histogram { model } => run.histogram(model.as_ref()),
    }
}
