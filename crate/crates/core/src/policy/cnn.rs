use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::PolicyError;
use crate::env::{Action, Observation};

pub const MAGIC: &[u8; 10] = b"DIWPOLICY1";

/// Tensor names and shapes in file order. Convolutions are `[out, in, kh, kw]`.
pub const LAYOUT: [(&str, &[usize]); 13] = [
    ("conv1.weight", &[32, 3, 8, 8]),
    ("conv1.bias", &[32]),
    ("conv2.weight", &[64, 32, 4, 4]),
    ("conv2.bias", &[64]),
    ("conv3.weight", &[64, 64, 3, 3]),
    ("conv3.bias", &[64]),
    ("fc1.weight", &[512, 3136]),
    ("fc1.bias", &[512]),
    ("head_mean.weight", &[2, 512]),
    ("head_mean.bias", &[2]),
    ("head_logstd", &[2]),
    ("value_head.weight", &[1, 512]),
    ("value_head.bias", &[1]),
];

const INPUT: [usize; 3] = [3, 84, 84];

/// Dense row-major f32 array.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }
}

/// Actor-critic network weights, tensors in [`LAYOUT`] order.
#[derive(Clone, Debug, PartialEq)]
pub struct CnnWeights {
    pub tensors: Vec<Tensor>,
}

/// Gaussian action distribution and state value.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PolicyOutput {
    pub mean: [f32; 2],
    pub logstd: [f32; 2],
    pub value: f32,
}

/// Every intermediate activation of one forward pass.
#[derive(Clone, Debug)]
pub struct Activations {
    pub conv1: Tensor,
    pub conv2: Tensor,
    pub conv3: Tensor,
    pub flat: Tensor,
    pub fc1: Tensor,
    pub output: PolicyOutput,
}

impl CnnWeights {
    pub fn zeros() -> Self {
        Self {
            tensors: LAYOUT.iter().map(|(_, s)| Tensor::zeros(s)).collect(),
        }
    }

    /// Uniform in `±1/sqrt(fan_in)` for every tensor, log-std included.
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let mut w = Self::zeros();
        for (k, t) in w.tensors.iter_mut().enumerate() {
            let fan_in = match LAYOUT[k].0 {
                "conv1.weight" | "conv1.bias" => 3 * 64,
                "conv2.weight" | "conv2.bias" => 32 * 16,
                "conv3.weight" | "conv3.bias" => 64 * 9,
                "fc1.weight" | "fc1.bias" => 3136,
                "head_logstd" => 1,
                _ => 512,
            };
            let bound = 1.0 / (fan_in as f32).sqrt();
            t.data.iter_mut().for_each(|v| *v = rng.random_range(-bound..bound));
        }
        w
    }

    pub fn get(&self, name: &str) -> &Tensor {
        let k = LAYOUT.iter().position(|(n, _)| *n == name).expect("known tensor");
        &self.tensors[k]
    }

    pub fn get_mut(&mut self, name: &str) -> &mut Tensor {
        let k = LAYOUT.iter().position(|(n, _)| *n == name).expect("known tensor");
        &mut self.tensors[k]
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        if self.tensors.len() != LAYOUT.len() {
            return Err(PolicyError::ShapeMismatch(format!(
                "expected {} tensors, found {}",
                LAYOUT.len(),
                self.tensors.len()
            )));
        }
        for ((name, shape), t) in LAYOUT.iter().zip(&self.tensors) {
            if t.shape != *shape || t.data.len() != shape.iter().product::<usize>() {
                return Err(PolicyError::ShapeMismatch(format!("{name}: expected {shape:?}, found {:?}", t.shape)));
            }
            if t.data.iter().any(|v| !v.is_finite()) {
                return Err(PolicyError::NonFinite(name.to_string()));
            }
        }
        Ok(())
    }

    pub fn forward(&self, obs: &Observation) -> Result<PolicyOutput, PolicyError> {
        Ok(self.forward_layers(obs)?.output)
    }

    pub fn forward_layers(&self, obs: &Observation) -> Result<Activations, PolicyError> {
        if obs.pixels != INPUT[1] || obs.data.len() != INPUT.iter().product::<usize>() {
            return Err(PolicyError::ShapeMismatch(format!(
                "observation: expected {INPUT:?}, found {} values at {} px",
                obs.data.len(),
                obs.pixels
            )));
        }
        let input = Tensor {
            shape: INPUT.to_vec(),
            data: obs.data.clone(),
        };
        let conv1 = conv_relu(&input, self.get("conv1.weight"), self.get("conv1.bias"), 4);
        let conv2 = conv_relu(&conv1, self.get("conv2.weight"), self.get("conv2.bias"), 2);
        let conv3 = conv_relu(&conv2, self.get("conv3.weight"), self.get("conv3.bias"), 1);
        let flat = Tensor {
            shape: vec![conv3.data.len()],
            data: conv3.data.clone(),
        };
        let mut fc1 = linear(&flat.data, self.get("fc1.weight"), self.get("fc1.bias"));
        fc1.iter_mut().for_each(|v| *v = v.max(0.0));
        let mean = linear(&fc1, self.get("head_mean.weight"), self.get("head_mean.bias"));
        let value = linear(&fc1, self.get("value_head.weight"), self.get("value_head.bias"));
        let ls = &self.get("head_logstd").data;
        let output = PolicyOutput {
            mean: [mean[0], mean[1]],
            logstd: [ls[0], ls[1]],
            value: value[0],
        };
        Ok(Activations {
            conv1,
            conv2,
            conv3,
            fc1: Tensor {
                shape: vec![fc1.len()],
                data: fc1,
            },
            flat,
            output,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = MAGIC.to_vec();
        for ((name, _), t) in LAYOUT.iter().zip(&self.tensors) {
            out.extend((name.len() as u16).to_le_bytes());
            out.extend(name.as_bytes());
            out.push(t.shape.len() as u8);
            for &d in &t.shape {
                out.extend((d as u32).to_le_bytes());
            }
            for v in &t.data {
                out.extend(v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, PolicyError> {
        if bytes.len() < MAGIC.len() {
            return Err(if MAGIC.starts_with(bytes) {
                PolicyError::TruncatedFile
            } else {
                PolicyError::BadMagic
            });
        }
        if &bytes[..MAGIC.len()] != MAGIC {
            return Err(PolicyError::BadMagic);
        }
        let mut r = Reader {
            bytes,
            at: MAGIC.len(),
        };
        let mut tensors = Vec::with_capacity(LAYOUT.len());
        for (name, shape) in LAYOUT {
            let len = u16::from_le_bytes(r.take(2)?.try_into().unwrap()) as usize;
            let found = String::from_utf8_lossy(r.take(len)?).into_owned();
            if found != name {
                return Err(PolicyError::ShapeMismatch(format!("expected tensor {name}, found {found}")));
            }
            let rank = r.take(1)?[0] as usize;
            let dims: Vec<usize> = (0..rank)
                .map(|_| r.take(4).map(|b| u32::from_le_bytes(b.try_into().unwrap()) as usize))
                .collect::<Result<_, _>>()?;
            if dims != shape {
                return Err(PolicyError::ShapeMismatch(format!("{name}: expected {shape:?}, found {dims:?}")));
            }
            let n: usize = dims.iter().product();
            let data = r
                .take(4 * n)?
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
                .collect();
            tensors.push(Tensor { shape: dims, data });
        }
        if r.at != bytes.len() {
            return Err(PolicyError::ShapeMismatch(format!("{} trailing bytes", bytes.len() - r.at)));
        }
        let w = Self { tensors };
        w.validate()?;
        Ok(w)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PolicyError> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), PolicyError> {
        self.validate()?;
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], PolicyError> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or(PolicyError::TruncatedFile)?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }
}

/// Eight-lane dot product; keeps the reduction vectorisable.
#[inline]
fn dot(a: &[f32], b: &[f32]) -> f32 {
    let mut acc = [0.0f32; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let tail: f32 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    acc.iter().sum::<f32>() + tail
}

/// Valid (unpadded) convolution followed by ReLU.
fn conv_relu(input: &Tensor, weight: &Tensor, bias: &Tensor, stride: usize) -> Tensor {
    let (c, h, w) = (input.shape[0], input.shape[1], input.shape[2]);
    let (o, k) = (weight.shape[0], weight.shape[2]);
    let ho = (h - k) / stride + 1;
    let wo = (w - k) / stride + 1;
    let patch_len = c * k * k;
    let mut patch = vec![0.0f32; patch_len];
    let mut out = Tensor::zeros(&[o, ho, wo]);
    for y in 0..ho {
        for x in 0..wo {
            for ci in 0..c {
                for ky in 0..k {
                    let row = (ci * h + y * stride + ky) * w + x * stride;
                    let dst = (ci * k + ky) * k;
                    patch[dst..dst + k].copy_from_slice(&input.data[row..row + k]);
                }
            }
            for oi in 0..o {
                let v = dot(&weight.data[oi * patch_len..(oi + 1) * patch_len], &patch) + bias.data[oi];
                out.data[(oi * ho + y) * wo + x] = v.max(0.0);
            }
        }
    }
    out
}

fn linear(x: &[f32], weight: &Tensor, bias: &Tensor) -> Vec<f32> {
    let n = weight.shape[1];
    (0..weight.shape[0])
        .map(|o| dot(&weight.data[o * n..(o + 1) * n], x) + bias.data[o])
        .collect()
}

/// Squashed Gaussian action: `tanh(mean + exp(logstd) z)` with `z` standard
/// normal, or `tanh(mean)` when deterministic.
pub fn act<R: Rng + ?Sized>(dist: &PolicyOutput, rng: &mut R, stochastic: bool) -> Action {
    let sample = |k: usize, rng: &mut R| {
        let m = dist.mean[k] as f64;
        if stochastic {
            let z: f64 = StandardNormal.sample(rng);
            (m + (dist.logstd[k] as f64).exp() * z).tanh()
        } else {
            m.tanh()
        }
    };
    let v = sample(0, rng);
    let off = sample(1, rng);
    Action::new(v, off)
}
