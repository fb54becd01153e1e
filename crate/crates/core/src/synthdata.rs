//! Synthetic parallel corpora.
//!
//! Three task families over a shared integer vocabulary: `copy`, `reverse`
//! and `lexicon` (a seed-derived bijection over the payload vocabulary). A
//! corruption step then drops and transposes reference tokens, which leaves a
//! teacher-forced model with reward headroom.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::seed;

pub type Token = u32;

pub const PAD: Token = 0;
pub const BOS: Token = 1;
pub const EOS: Token = 2;
pub const UNK: Token = 3;
/// First id usable inside a sentence payload.
pub const FIRST_PAYLOAD: Token = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Vocab {
    pub size: usize,
}

impl Vocab {
    pub fn new(size: usize) -> Result<Self> {
        if size < FIRST_PAYLOAD as usize + 1 {
            return Err(Error::config(
                "data.vocab_size",
                format!("must be at least {} (got {size})", FIRST_PAYLOAD + 1),
            ));
        }
        Ok(Vocab { size })
    }

    pub fn is_payload(&self, t: Token) -> bool {
        t >= FIRST_PAYLOAD && (t as usize) < self.size
    }

    pub fn payload(&self) -> impl Iterator<Item = Token> {
        FIRST_PAYLOAD..self.size as Token
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskKind {
    Copy,
    Reverse,
    Lexicon,
}

impl FromStr for TaskKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "copy" => Ok(TaskKind::Copy),
            "reverse" => Ok(TaskKind::Reverse),
            "lexicon" => Ok(TaskKind::Lexicon),
            other => Err(Error::config("data.task", format!("unknown task `{other}`"))),
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TaskKind::Copy => "copy",
            TaskKind::Reverse => "reverse",
            TaskKind::Lexicon => "lexicon",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskSpec {
    pub task_kind: TaskKind,
    pub vocab_size: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub noise_drop: f64,
    pub noise_swap: f64,
    pub corpus_size: usize,
    pub seed: u64,
}

impl Default for TaskSpec {
    fn default() -> Self {
        TaskSpec {
            task_kind: TaskKind::Lexicon,
            vocab_size: 50,
            min_len: 3,
            max_len: 10,
            noise_drop: 0.1,
            noise_swap: 0.1,
            corpus_size: 2000,
            seed: 1,
        }
    }
}

impl TaskSpec {
    pub fn validate(&self) -> Result<Vocab> {
        let vocab = Vocab::new(self.vocab_size)?;
        if self.min_len == 0 {
            return Err(Error::config("data.min_len", "must be positive"));
        }
        if self.max_len < self.min_len {
            return Err(Error::config(
                "data.max_len",
                format!("must be >= data.min_len ({})", self.min_len),
            ));
        }
        for (key, p) in [
            ("data.noise_drop", self.noise_drop),
            ("data.noise_swap", self.noise_swap),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::config(key, format!("must lie in [0, 1] (got {p})")));
            }
        }
        if self.corpus_size == 0 {
            return Err(Error::config("data.corpus_size", "must be positive"));
        }
        Ok(vocab)
    }
}

/// An aligned source/reference pair.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SequencePair {
    pub source: Vec<Token>,
    pub reference: Vec<Token>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Valid, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

impl FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "valid" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            other => Err(Error::input(format!("unknown split `{other}`"))),
        }
    }
}

/// 90/5/5 assignment from a hash of the pair index.
pub fn split_for_index(seed: u64, index: usize) -> Split {
    let h = seed::splitmix64(seed::derive(seed, "split") ^ index as u64) % 100;
    match h {
        0..=89 => Split::Train,
        90..=94 => Split::Valid,
        _ => Split::Test,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub pairs: Vec<SequencePair>,
    pub vocab: Vocab,
    pub splits: Vec<Split>,
}

impl Corpus {
    pub fn split(&self, split: Split) -> Vec<&SequencePair> {
        self.pairs
            .iter()
            .zip(&self.splits)
            .filter(|(_, s)| **s == split)
            .map(|(p, _)| p)
            .collect()
    }

    pub fn split_pairs(&self, split: Split) -> Vec<SequencePair> {
        self.split(split).into_iter().cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// The seed-derived bijection used by the lexicon task, indexed by token id.
/// Reserved ids map to themselves.
pub fn lexicon_map(vocab: Vocab, seed: u64) -> Vec<Token> {
    let mut rng = seed::rng(seed, "lexicon");
    let mut image: Vec<Token> = vocab.payload().collect();
    image.shuffle(&mut rng);
    let mut map: Vec<Token> = (0..FIRST_PAYLOAD).collect();
    map.extend(image);
    map
}

/// Drops each token with probability `drop`, then transposes adjacent pairs
/// with probability `swap`. Never returns an empty sequence for non-empty input.
pub fn corrupt<R: Rng>(tokens: &[Token], drop: f64, swap: f64, rng: &mut R) -> Vec<Token> {
    let mut out: Vec<Token> = tokens
        .iter()
        .copied()
        .filter(|_| !(drop > 0.0 && rng.gen_bool(drop)))
        .collect();
    if out.is_empty() && !tokens.is_empty() {
        out.push(tokens[rng.gen_range(0..tokens.len())]);
    }
    let mut i = 0;
    while i + 1 < out.len() {
        if swap > 0.0 && rng.gen_bool(swap) {
            out.swap(i, i + 1);
            i += 2;
        } else {
            i += 1;
        }
    }
    out
}

pub fn generate_corpus(spec: &TaskSpec) -> Result<Corpus> {
    let vocab = spec.validate()?;
    let map = lexicon_map(vocab, spec.seed);
    let mut rng = seed::rng(spec.seed, "corpus");
    let mut pairs = Vec::with_capacity(spec.corpus_size);
    for _ in 0..spec.corpus_size {
        let len = rng.gen_range(spec.min_len..=spec.max_len);
        let source: Vec<Token> = (0..len)
            .map(|_| rng.gen_range(FIRST_PAYLOAD..vocab.size as Token))
            .collect();
        let clean: Vec<Token> = match spec.task_kind {
            TaskKind::Copy => source.clone(),
            TaskKind::Reverse => source.iter().rev().copied().collect(),
            TaskKind::Lexicon => source.iter().map(|&t| map[t as usize]).collect(),
        };
        let reference = corrupt(&clean, spec.noise_drop, spec.noise_swap, &mut rng);
        pairs.push(SequencePair { source, reference });
    }
    let splits = (0..pairs.len()).map(|i| split_for_index(spec.seed, i)).collect();
    Ok(Corpus { pairs, vocab, splits })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitStats {
    pub split: Split,
    pub count: usize,
    pub avg_len: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StatsReport {
    pub rows: Vec<SplitStats>,
    pub total: SplitStats,
}

impl StatsReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("split,count,avg_len\n");
        for r in &self.rows {
            s.push_str(&format!("{},{},{:.4}\n", r.split.name(), r.count, r.avg_len));
        }
        s.push_str(&format!("all,{},{:.4}\n", self.total.count, self.total.avg_len));
        s
    }
}

/// Pair counts per split and mean reference length in tokens.
pub fn corpus_stats(corpus: &Corpus) -> Result<StatsReport> {
    if corpus.is_empty() {
        return Err(Error::input("corpus is empty"));
    }
    let mean_len = |pairs: &[&SequencePair]| {
        if pairs.is_empty() {
            0.0
        } else {
            pairs.iter().map(|p| p.reference.len()).sum::<usize>() as f64 / pairs.len() as f64
        }
    };
    let rows = Split::ALL
        .iter()
        .map(|&split| {
            let pairs = corpus.split(split);
            SplitStats {
                split,
                count: pairs.len(),
                avg_len: mean_len(&pairs),
            }
        })
        .collect();
    let all: Vec<&SequencePair> = corpus.pairs.iter().collect();
    Ok(StatsReport {
        rows,
        total: SplitStats {
            split: Split::Train,
            count: all.len(),
            avg_len: mean_len(&all),
        },
    })
}

pub fn format_tokens(tokens: &[Token]) -> String {
    tokens.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(" ")
}

pub fn parse_tokens(line: &str) -> std::result::Result<Vec<Token>, std::num::ParseIntError> {
    line.split_whitespace().map(str::parse).collect()
}

/// Writes one sentence per line.
pub fn write_lines(path: &Path, sentences: &[Vec<Token>]) -> Result<()> {
    let mut buf = Vec::new();
    for s in sentences {
        writeln!(buf, "{}", format_tokens(s)).expect("write to Vec");
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn read_lines(path: &Path) -> Result<Vec<Vec<Token>>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .map(|(i, line)| {
            parse_tokens(line).map_err(|e| Error::Format {
                path: path.to_path_buf(),
                message: format!("line {}: {e}", i + 1),
            })
        })
        .collect()
}

/// Writes `<split>.src` / `<split>.tgt` for every split into `dir`.
pub fn write_corpus(dir: &Path, corpus: &Corpus) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for split in Split::ALL {
        let pairs = corpus.split(split);
        let src: Vec<Vec<Token>> = pairs.iter().map(|p| p.source.clone()).collect();
        let tgt: Vec<Vec<Token>> = pairs.iter().map(|p| p.reference.clone()).collect();
        write_lines(&dir.join(format!("{}.src", split.name())), &src)?;
        write_lines(&dir.join(format!("{}.tgt", split.name())), &tgt)?;
    }
    Ok(())
}

pub fn read_split(dir: &Path, split: Split) -> Result<Vec<SequencePair>> {
    let src_path = dir.join(format!("{}.src", split.name()));
    let tgt_path = dir.join(format!("{}.tgt", split.name()));
    let src = read_lines(&src_path)?;
    let tgt = read_lines(&tgt_path)?;
    if src.len() != tgt.len() {
        return Err(Error::Format {
            path: tgt_path,
            message: format!("{} lines but source has {}", tgt.len(), src.len()),
        });
    }
    Ok(src
        .into_iter()
        .zip(tgt)
        .map(|(source, reference)| SequencePair { source, reference })
        .collect())
}

/// Reads the three split files back into a corpus (pairs grouped by split).
pub fn read_corpus(dir: &Path, vocab: Vocab) -> Result<Corpus> {
    let mut pairs = Vec::new();
    let mut splits = Vec::new();
    for split in Split::ALL {
        for p in read_split(dir, split)? {
            for &t in p.source.iter().chain(&p.reference) {
                if !vocab.is_payload(t) {
                    return Err(Error::input(format!(
                        "token {t} in {} split is outside the payload vocabulary",
                        split.name()
                    )));
                }
            }
            pairs.push(p);
            splits.push(split);
        }
    }
    Ok(Corpus { pairs, vocab, splits })
}
