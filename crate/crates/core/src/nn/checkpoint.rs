//! Text checkpoint format: a versioned key → tensor map.
//!
//! ```text
//! usac-checkpoint 1
//! <key> f64 <shape> <v0> <v1> ...
//! <key> u64 <shape> <v0> <v1> ...
//! end
//! ```
//!
//! One tensor per line, fields separated by single spaces. `<shape>` is the
//! dimension list joined by `x` (`256x3`, `7`). Keys contain no whitespace
//! and lines are sorted by key. Floats use Rust's shortest round-trip
//! formatting, so save → load is lossless.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array1, Array2};

use super::mlp::{Dense, Mlp};
use super::optim::{AdamConfig, AdamState};
use crate::{Error, Result, Rng};

pub const FORMAT_HEADER: &str = "usac-checkpoint";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum Tensor {
    F64 { shape: Vec<usize>, data: Vec<f64> },
    U64 { shape: Vec<usize>, data: Vec<u64> },
}

impl Tensor {
    fn shape(&self) -> &[usize] {
        match self {
            Tensor::F64 { shape, .. } | Tensor::U64 { shape, .. } => shape,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    entries: BTreeMap<String, Tensor>,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    fn check_key(key: &str) {
        assert!(
            !key.is_empty() && !key.chars().any(char::is_whitespace),
            "checkpoint keys must be non-empty without whitespace: {key:?}"
        );
    }

    pub fn put_f64(&mut self, key: impl Into<String>, shape: &[usize], data: Vec<f64>) {
        let key = key.into();
        Self::check_key(&key);
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "shape/data mismatch for {key}"
        );
        self.entries.insert(
            key,
            Tensor::F64 {
                shape: shape.to_vec(),
                data,
            },
        );
    }

    pub fn put_u64(&mut self, key: impl Into<String>, shape: &[usize], data: Vec<u64>) {
        let key = key.into();
        Self::check_key(&key);
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "shape/data mismatch for {key}"
        );
        self.entries.insert(
            key,
            Tensor::U64 {
                shape: shape.to_vec(),
                data,
            },
        );
    }

    pub fn put_scalar(&mut self, key: impl Into<String>, v: f64) {
        self.put_f64(key, &[1], vec![v]);
    }

    pub fn get_f64(&self, key: &str) -> Result<(&[usize], &[f64])> {
        match self.entries.get(key) {
            Some(Tensor::F64 { shape, data }) => Ok((shape, data)),
            Some(_) => Err(bad(format!("{key} is not an f64 tensor"))),
            None => Err(bad(format!("missing key {key}"))),
        }
    }

    pub fn get_u64(&self, key: &str) -> Result<(&[usize], &[u64])> {
        match self.entries.get(key) {
            Some(Tensor::U64 { shape, data }) => Ok((shape, data)),
            Some(_) => Err(bad(format!("{key} is not a u64 tensor"))),
            None => Err(bad(format!("missing key {key}"))),
        }
    }

    pub fn get_scalar(&self, key: &str) -> Result<f64> {
        let (_, data) = self.get_f64(key)?;
        match data {
            [v] => Ok(*v),
            _ => Err(bad(format!("{key} is not a scalar"))),
        }
    }

    /// Stores `net` under `<prefix>.<layer>.weight` / `.bias`.
    pub fn put_net(&mut self, prefix: &str, net: &Mlp) {
        self.put_u64(
            format!("{prefix}.dims"),
            &[net.dims().len()],
            net.dims().iter().map(|&d| d as u64).collect(),
        );
        for (i, l) in net.layers().iter().enumerate() {
            self.put_f64(
                format!("{prefix}.{i}.weight"),
                &[l.out_dim(), l.in_dim()],
                l.weight.iter().copied().collect(),
            );
            self.put_f64(format!("{prefix}.{i}.bias"), &[l.out_dim()], l.bias.to_vec());
        }
    }

    pub fn get_net(&self, prefix: &str) -> Result<Mlp> {
        let (_, dims) = self.get_u64(&format!("{prefix}.dims"))?;
        let mut layers = Vec::with_capacity(dims.len().saturating_sub(1));
        for i in 0..dims.len().saturating_sub(1) {
            let (ws, w) = self.get_f64(&format!("{prefix}.{i}.weight"))?;
            let (bs, b) = self.get_f64(&format!("{prefix}.{i}.bias"))?;
            let expect_w = [dims[i + 1] as usize, dims[i] as usize];
            if ws != expect_w || bs != [dims[i + 1] as usize] {
                return Err(bad(format!("{prefix}.{i}: shape disagrees with dims")));
            }
            layers.push(Dense {
                weight: Array2::from_shape_vec((ws[0], ws[1]), w.to_vec()).map_err(|e| bad(e.to_string()))?,
                bias: Array1::from(b.to_vec()),
            });
        }
        Mlp::from_layers(layers)
    }

    pub fn put_adam(&mut self, prefix: &str, state: &AdamState) {
        let c = state.config;
        self.put_f64(
            format!("{prefix}.config"),
            &[4],
            vec![c.learning_rate, c.beta1, c.beta2, c.epsilon],
        );
        self.put_u64(format!("{prefix}.step_count"), &[1], vec![state.step_count]);
        self.put_u64(
            format!("{prefix}.tensors"),
            &[state.first_moment.len()],
            state.first_moment.iter().map(|m| m.len() as u64).collect(),
        );
        for (k, (m, v)) in state.first_moment.iter().zip(&state.second_moment).enumerate() {
            self.put_f64(format!("{prefix}.{k}.m"), &[m.len()], m.clone());
            self.put_f64(format!("{prefix}.{k}.v"), &[v.len()], v.clone());
        }
    }

    pub fn get_adam(&self, prefix: &str) -> Result<AdamState> {
        let (_, c) = self.get_f64(&format!("{prefix}.config"))?;
        let [learning_rate, beta1, beta2, epsilon] = c else {
            return Err(bad(format!("{prefix}.config must hold 4 values")));
        };
        let config = AdamConfig {
            learning_rate: *learning_rate,
            beta1: *beta1,
            beta2: *beta2,
            epsilon: *epsilon,
        };
        let (_, step) = self.get_u64(&format!("{prefix}.step_count"))?;
        let (_, lens) = self.get_u64(&format!("{prefix}.tensors"))?;
        let mut first_moment = Vec::with_capacity(lens.len());
        let mut second_moment = Vec::with_capacity(lens.len());
        for (k, &len) in lens.iter().enumerate() {
            let (_, m) = self.get_f64(&format!("{prefix}.{k}.m"))?;
            let (_, v) = self.get_f64(&format!("{prefix}.{k}.v"))?;
            if m.len() != len as usize || v.len() != len as usize {
                return Err(bad(format!("{prefix}.{k}: moment length mismatch")));
            }
            first_moment.push(m.to_vec());
            second_moment.push(v.to_vec());
        }
        Ok(AdamState {
            config,
            first_moment,
            second_moment,
            step_count: step.first().copied().unwrap_or(0),
        })
    }

    /// Stores a ChaCha generator exactly: seed words, stream, word position.
    pub fn put_rng(&mut self, key: &str, rng: &Rng) {
        let seed = rng.get_seed();
        let mut data: Vec<u64> = seed
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        data.push(rng.get_stream());
        let pos = rng.get_word_pos();
        data.push(pos as u64);
        data.push((pos >> 64) as u64);
        self.put_u64(key, &[7], data);
    }

    pub fn get_rng(&self, key: &str) -> Result<Rng> {
        use rand::SeedableRng;
        let (_, data) = self.get_u64(key)?;
        let [s0, s1, s2, s3, stream, lo, hi] = data else {
            return Err(bad(format!("{key}: generator state needs 7 words")));
        };
        let mut seed = [0u8; 32];
        for (chunk, w) in seed.chunks_exact_mut(8).zip([s0, s1, s2, s3]) {
            chunk.copy_from_slice(&w.to_le_bytes());
        }
        let mut rng = Rng::from_seed(seed);
        rng.set_stream(*stream);
        rng.set_word_pos(u128::from(*lo) | (u128::from(*hi) << 64));
        Ok(rng)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{FORMAT_HEADER} {FORMAT_VERSION}\n");
        for (key, t) in &self.entries {
            let shape = t.shape().iter().map(usize::to_string).collect::<Vec<_>>().join("x");
            match t {
                Tensor::F64 { data, .. } => {
                    write!(out, "{key} f64 {shape}").unwrap();
                    for v in data {
                        write!(out, " {v}").unwrap();
                    }
                }
                Tensor::U64 { data, .. } => {
                    write!(out, "{key} u64 {shape}").unwrap();
                    for v in data {
                        write!(out, " {v}").unwrap();
                    }
                }
            }
            out.push('\n');
        }
        out.push_str("end\n");
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad("empty checkpoint"))?;
        let mut h = header.split(' ');
        if h.next() != Some(FORMAT_HEADER) {
            return Err(bad("missing format header"));
        }
        let version: u32 = h
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad("missing format version"))?;
        if version != FORMAT_VERSION {
            return Err(bad(format!("unsupported format version {version}")));
        }

        let mut ckpt = Checkpoint::new();
        let mut ended = false;
        for (lineno, line) in lines.enumerate() {
            if line == "end" {
                ended = true;
                break;
            }
            let mut fields = line.split(' ');
            let (Some(key), Some(kind), Some(shape)) = (fields.next(), fields.next(), fields.next()) else {
                return Err(bad(format!("line {}: truncated entry", lineno + 2)));
            };
            let shape: Vec<usize> = shape
                .split('x')
                .map(|d| d.parse().map_err(|_| bad(format!("{key}: bad shape"))))
                .collect::<Result<_>>()?;
            let n: usize = shape.iter().product();
            let tensor = match kind {
                "f64" => Tensor::F64 {
                    data: fields
                        .map(|v| v.parse().map_err(|_| bad(format!("{key}: bad f64 {v:?}"))))
                        .collect::<Result<_>>()?,
                    shape,
                },
                "u64" => Tensor::U64 {
                    data: fields
                        .map(|v| v.parse().map_err(|_| bad(format!("{key}: bad u64 {v:?}"))))
                        .collect::<Result<_>>()?,
                    shape,
                },
                other => return Err(bad(format!("{key}: unknown element type {other}"))),
            };
            let len = match &tensor {
                Tensor::F64 { data, .. } => data.len(),
                Tensor::U64 { data, .. } => data.len(),
            };
            if len != n {
                return Err(bad(format!("{key}: expected {n} values, found {len}")));
            }
            ckpt.entries.insert(key.to_string(), tensor);
        }
        if !ended {
            return Err(bad("missing end marker"));
        }
        Ok(ckpt)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }
}
