use rand::Rng;

use crate::error::{Error, Result};
use crate::seed;

/// Named 32-bit tensor, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    fn zeros(name: &str, dims: Vec<usize>) -> Self {
        let n = dims.iter().product();
        Tensor {
            name: name.to_string(),
            dims,
            data: vec![0.0; n],
        }
    }
}

pub const EMB: usize = 0;
pub const ENC_W: usize = 1;
pub const ENC_U: usize = 2;
pub const ENC_B: usize = 3;
pub const DEC_W: usize = 4;
pub const DEC_U: usize = 5;
pub const DEC_V: usize = 6;
pub const DEC_B: usize = 7;
pub const OUT_W: usize = 8;
pub const OUT_B: usize = 9;
pub const NUM_TENSORS: usize = 10;

pub const TENSOR_NAMES: [&str; NUM_TENSORS] = [
    "embedding",
    "enc.w",
    "enc.u",
    "enc.b",
    "dec.w",
    "dec.u",
    "dec.v",
    "dec.b",
    "out.w",
    "out.b",
];

pub const DEFAULT_EMBED: usize = 32;
pub const DEFAULT_HIDDEN: usize = 32;

fn tensor_dims(vocab: usize, e: usize, h: usize) -> [Vec<usize>; NUM_TENSORS] {
    [
        vec![vocab, e],
        vec![e, h],
        vec![h, h],
        vec![h],
        vec![e, h],
        vec![h, h],
        vec![h, h],
        vec![h],
        vec![h, vocab],
        vec![vocab],
    ]
}

/// Parameters of the encoder-decoder, stored as 32-bit floats.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub tensors: Vec<Tensor>,
}

impl ModelParams {
    pub fn zeros(vocab_size: usize, embed_dim: usize, hidden_dim: usize) -> Result<Self> {
        for (key, v) in [
            ("data.vocab_size", vocab_size),
            ("model.embed", embed_dim),
            ("model.hidden", hidden_dim),
        ] {
            if v == 0 {
                return Err(Error::config(key, "dimension must be at least 1"));
            }
        }
        let tensors = tensor_dims(vocab_size, embed_dim, hidden_dim)
            .into_iter()
            .zip(TENSOR_NAMES)
            .map(|(dims, name)| Tensor::zeros(name, dims))
            .collect();
        Ok(ModelParams {
            vocab_size,
            embed_dim,
            hidden_dim,
            tensors,
        })
    }

    /// Builds parameters from tensors read off disk, checking names and shapes.
    pub fn from_tensors(tensors: Vec<Tensor>) -> Result<Self> {
        if tensors.len() != NUM_TENSORS {
            return Err(Error::input(format!(
                "expected {NUM_TENSORS} tensors, found {}",
                tensors.len()
            )));
        }
        let vocab = tensors[EMB].dims.first().copied().unwrap_or(0);
        let e = tensors[EMB].dims.get(1).copied().unwrap_or(0);
        let h = tensors[ENC_B].dims.first().copied().unwrap_or(0);
        let expected = ModelParams::zeros(vocab, e, h)?;
        for (got, want) in tensors.iter().zip(&expected.tensors) {
            if got.name != want.name || got.dims != want.dims || got.data.len() != want.data.len() {
                return Err(Error::input(format!(
                    "tensor `{}` {:?} does not match expected `{}` {:?}",
                    got.name, got.dims, want.name, want.dims
                )));
            }
        }
        Ok(ModelParams {
            vocab_size: vocab,
            embed_dim: e,
            hidden_dim: h,
            tensors,
        })
    }

    pub fn num_params(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    pub fn same_shape(&self, other: &ModelParams) -> bool {
        self.tensors.len() == other.tensors.len()
            && self.tensors.iter().zip(&other.tensors).all(|(a, b)| a.dims == b.dims)
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.data.iter().all(|v| v.is_finite()))
    }
}

/// Uniform init in [-0.08, 0.08].
pub fn init_params(vocab_size: usize, embed_dim: usize, hidden_dim: usize, seed: u64) -> Result<ModelParams> {
    let mut params = ModelParams::zeros(vocab_size, embed_dim, hidden_dim)?;
    let mut rng = seed::rng(seed, "init");
    for t in &mut params.tensors {
        for v in &mut t.data {
            *v = rng.gen_range(-0.08f32..=0.08f32);
        }
    }
    Ok(params)
}

/// Gradient buffers mirroring [`ModelParams`], accumulated in 64 bits.
#[derive(Debug, Clone, PartialEq)]
pub struct GradAccumulator {
    pub buffers: Vec<Vec<f64>>,
}

impl GradAccumulator {
    pub fn zeros_like(params: &ModelParams) -> Self {
        GradAccumulator {
            buffers: params.tensors.iter().map(|t| vec![0.0; t.data.len()]).collect(),
        }
    }

    pub(crate) fn from_shapes(shapes: &[usize]) -> Self {
        GradAccumulator {
            buffers: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &GradAccumulator) {
        for (a, b) in self.buffers.iter_mut().zip(&other.buffers) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, c: f64) {
        for b in &mut self.buffers {
            for x in b.iter_mut() {
                *x *= c;
            }
        }
    }

    pub fn norm(&self) -> f64 {
        self.buffers
            .iter()
            .flat_map(|b| b.iter())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.buffers.iter().all(|b| b.iter().all(|&x| x == 0.0))
    }
}

/// θ ← θ − lr·g.
pub fn sgd_step(params: &mut ModelParams, grads: &GradAccumulator, lr: f64) -> Result<()> {
    if !(lr > 0.0) {
        return Err(Error::config("train.lr", "learning rate must be positive"));
    }
    if grads.buffers.len() != params.tensors.len()
        || grads
            .buffers
            .iter()
            .zip(&params.tensors)
            .any(|(g, t)| g.len() != t.data.len())
    {
        return Err(Error::Internal("gradient shapes do not match parameters".into()));
    }
    for (t, g) in params.tensors.iter_mut().zip(&grads.buffers) {
        for (v, &gv) in t.data.iter_mut().zip(g) {
            *v = (*v as f64 - lr * gv) as f32;
        }
    }
    Ok(())
}

/// Elementwise mean of a list of checkpoints.
pub fn average_checkpoints(checkpoints: &[ModelParams]) -> Result<ModelParams> {
    let first = checkpoints
        .first()
        .ok_or_else(|| Error::input("no checkpoints to average"))?;
    if checkpoints.iter().any(|c| !c.same_shape(first)) {
        return Err(Error::input("checkpoint shapes differ"));
    }
    let k = checkpoints.len() as f64;
    let mut out = first.clone();
    for (ti, t) in out.tensors.iter_mut().enumerate() {
        for (i, v) in t.data.iter_mut().enumerate() {
            let sum: f64 = checkpoints.iter().map(|c| c.tensors[ti].data[i] as f64).sum();
            *v = (sum / k) as f32;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_seeded_and_bounded() {
        let a = init_params(7, 3, 4, 11).unwrap();
        assert_eq!(a, init_params(7, 3, 4, 11).unwrap());
        assert_ne!(a, init_params(7, 3, 4, 12).unwrap());
        assert!(a.tensors.iter().all(|t| t.data.iter().all(|v| v.abs() <= 0.08)));
    }

    #[test]
    fn init_shapes() {
        let p = init_params(5, 2, 2, 0).unwrap();
        assert_eq!(p.tensors[EMB].data.len(), 10);
        assert_eq!(p.tensors[OUT_W].dims, vec![2, 5]);
        assert!(matches!(init_params(5, 0, 2, 0), Err(Error::Config { .. })));
    }

    #[test]
    fn sgd_cases() {
        let mut p = init_params(6, 2, 3, 1).unwrap();
        let orig = p.clone();
        let zero = GradAccumulator::zeros_like(&p);
        sgd_step(&mut p, &zero, 0.1).unwrap();
        assert_eq!(p, orig);

        let mut g = GradAccumulator::zeros_like(&p);
        for (b, t) in g.buffers.iter_mut().zip(&p.tensors) {
            for (x, v) in b.iter_mut().zip(&t.data) {
                *x = *v as f64;
            }
        }
        sgd_step(&mut p, &g, 1.0).unwrap();
        assert!(p.tensors.iter().all(|t| t.data.iter().all(|&v| v == 0.0)));

        let mut q = ModelParams::zeros(5, 1, 1).unwrap();
        q.tensors[ENC_B].data[0] = 0.5;
        let mut g = GradAccumulator::zeros_like(&q);
        g.buffers[ENC_B][0] = 0.1;
        sgd_step(&mut q, &g, 1e-4).unwrap();
        assert_eq!(q.tensors[ENC_B].data[0], 0.49999f32);

        assert!(sgd_step(&mut q, &g, 0.0).is_err());
        let bad = GradAccumulator::from_shapes(&[1]);
        assert!(matches!(sgd_step(&mut q, &bad, 0.1), Err(Error::Internal(_))));
    }

    #[test]
    fn averaging_cases() {
        let p = init_params(6, 2, 3, 1).unwrap();
        assert_eq!(average_checkpoints(&[p.clone(), p.clone(), p.clone()]).unwrap(), p);

        let mut neg = p.clone();
        neg.tensors
            .iter_mut()
            .for_each(|t| t.data.iter_mut().for_each(|v| *v = -*v));
        let avg = average_checkpoints(&[p.clone(), neg]).unwrap();
        assert!(avg.tensors.iter().all(|t| t.data.iter().all(|&v| v == 0.0)));

        let mut cs = vec![p.clone(), p.clone(), p.clone()];
        for (c, v) in cs.iter_mut().zip([0.2f32, 0.4, 0.6]) {
            c.tensors[DEC_B].data[0] = v;
        }
        let avg = average_checkpoints(&cs).unwrap();
        assert!((avg.tensors[DEC_B].data[0] - 0.4).abs() < 1e-7);

        let other = init_params(7, 2, 3, 1).unwrap();
        assert!(average_checkpoints(&[p, other]).is_err());
        assert!(average_checkpoints(&[]).is_err());
    }
}
