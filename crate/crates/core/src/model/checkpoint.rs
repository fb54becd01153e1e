//! Binary checkpoint container.
//!
//! Layout: magic `SRWD`, one format-version byte, then tensors until end of
//! file. Each tensor is a u32 name length, the UTF-8 name, a u32 rank, `rank`
//! u32 dims and the row-major f32 payload. All integers and floats are
//! little-endian. Model checkpoints carry a `key=value` sidecar at
//! `<path>.meta`.

use std::fs;
use std::path::{Path, PathBuf};

use super::params::{ModelParams, Tensor};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"SRWD";
pub const FORMAT_VERSION: u8 = 1;

pub fn encode_tensors(tensors: &[Tensor]) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.push(FORMAT_VERSION);
    for t in tensors {
        buf.extend_from_slice(&(t.name.len() as u32).to_le_bytes());
        buf.extend_from_slice(t.name.as_bytes());
        buf.extend_from_slice(&(t.dims.len() as u32).to_le_bytes());
        for &d in &t.dims {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in &t.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    buf
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(self.err("unexpected end of file"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn err(&self, message: &str) -> Error {
        Error::Format {
            path: self.path.to_path_buf(),
            message: format!("{message} (offset {})", self.pos),
        }
    }
}

pub fn decode_tensors(bytes: &[u8], path: &Path) -> Result<Vec<Tensor>> {
    let mut r = Reader { bytes, pos: 0, path };
    if r.take(4)? != MAGIC {
        return Err(r.err("bad magic"));
    }
    let version = r.take(1)?[0];
    if version != FORMAT_VERSION {
        return Err(r.err(&format!("unsupported format version {version}")));
    }
    let mut tensors = Vec::new();
    while r.pos < bytes.len() {
        let name_len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| r.err("tensor name is not UTF-8"))?
            .to_string();
        let rank = r.u32()? as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(r.u32()? as usize);
        }
        let n: usize = dims.iter().product();
        let data = r
            .take(n * 4)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        tensors.push(Tensor { name, dims, data });
    }
    Ok(tensors)
}

pub fn write_tensors(path: &Path, tensors: &[Tensor]) -> Result<()> {
    fs::write(path, encode_tensors(tensors)).map_err(|e| Error::io(path, e))
}

pub fn read_tensors(path: &Path) -> Result<Vec<Tensor>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_tensors(&bytes, path)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckpointMeta {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub iteration: usize,
    pub seed: u64,
}

impl CheckpointMeta {
    pub fn for_params(params: &ModelParams, iteration: usize, seed: u64) -> Self {
        CheckpointMeta {
            vocab_size: params.vocab_size,
            embed_dim: params.embed_dim,
            hidden_dim: params.hidden_dim,
            iteration,
            seed,
        }
    }

    pub fn to_text(&self) -> String {
        format!(
            "vocab_size={}\nE={}\nH={}\niteration={}\nseed={}\n",
            self.vocab_size, self.embed_dim, self.hidden_dim, self.iteration, self.seed
        )
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let fmt_err = |message: String| Error::Format {
            path: path.to_path_buf(),
            message,
        };
        let get = |key: &str| -> Result<u64> {
            text.lines()
                .filter_map(|l| l.split_once('='))
                .find(|(k, _)| k.trim() == key)
                .ok_or_else(|| fmt_err(format!("missing key `{key}`")))?
                .1
                .trim()
                .parse()
                .map_err(|e| fmt_err(format!("key `{key}`: {e}")))
        };
        Ok(CheckpointMeta {
            vocab_size: get("vocab_size")? as usize,
            embed_dim: get("E")? as usize,
            hidden_dim: get("H")? as usize,
            iteration: get("iteration")? as usize,
            seed: get("seed")?,
        })
    }
}

pub fn meta_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta");
    PathBuf::from(s)
}

pub fn save_model(path: &Path, params: &ModelParams, meta: &CheckpointMeta) -> Result<()> {
    write_tensors(path, &params.tensors)?;
    let mp = meta_path(path);
    fs::write(&mp, meta.to_text()).map_err(|e| Error::io(mp, e))
}

pub fn load_model(path: &Path) -> Result<(ModelParams, CheckpointMeta)> {
    let params = ModelParams::from_tensors(read_tensors(path)?).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let mp = meta_path(path);
    let text = fs::read_to_string(&mp).map_err(|e| Error::io(&mp, e))?;
    let meta = CheckpointMeta::parse(&text, &mp)?;
    if meta.vocab_size != params.vocab_size
        || meta.embed_dim != params.embed_dim
        || meta.hidden_dim != params.hidden_dim
    {
        return Err(Error::Format {
            path: mp,
            message: "sidecar dimensions disagree with tensors".into(),
        });
    }
    Ok((params, meta))
}
