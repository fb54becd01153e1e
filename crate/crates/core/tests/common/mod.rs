//! Shared test helpers: brute-force oracles and a driver for the `seqreward` binary.

#![allow(dead_code)]

pub mod oracle;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

/// A run small enough to finish in seconds.
pub const TINY_CONFIG: &str = "\
# tiny end-to-end run
data.task = lexicon
data.vocab_size = 14
data.min_len = 2
data.max_len = 5
data.corpus_size = 240
model.embed_dim = 8
model.hidden_dim = 8
decode.beam_width = 4
reward.judgments = 300
train.pretrain_iters = 120
train.pretrain_lr = 0.5
train.pretrain_lr_final = 0.1
train.ckpt_every = 40
train.average_last = 2
train.max_iters = 6
train.eval_every = 3
train.n = 4
train.beam_width = 4
train.topk_for_mean = 4
train.batch_sentences = 4
train.valid_size = 10
analysis.k = 4
analysis.samples = 20
";

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_seqreward"))
}

pub fn run(args: &[&str]) -> Output {
    bin()
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("spawn seqreward")
}

pub fn run_ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "seqreward {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn write_config(dir: &Path) -> PathBuf {
    let p = dir.join("tiny.conf");
    fs::write(&p, TINY_CONFIG).unwrap();
    p
}

/// Every pipeline stage in order, with the given extra global flags.
pub fn full_pipeline(config: &Path, out: &Path, extra: &[&str]) {
    let base = |cmd: &[&str]| {
        let mut a: Vec<&str> = vec!["--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
        a.extend_from_slice(extra);
        a.extend_from_slice(cmd);
        run_ok(&a);
    };
    let baseline = out.join("baseline.ckpt");
    base(&["gen-data"]);
    base(&["pretrain"]);
    base(&["finetune"]);
    base(&["evaluate", "--compare", baseline.to_str().unwrap()]);
    base(&["correlate"]);
    base(&["diverge"]);
    base(&["histogram"]);
}

/// Relative path to contents for every file below `dir`.
pub fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}
