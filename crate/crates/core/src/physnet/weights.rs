use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use physnet_autograd::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::config::{LatentKind, NetworkConfig};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"PNW1";
pub const CHECKPOINT_VERSION: u32 = 1;

const KERNEL: usize = 4;

/// Which optimizer group a parameter belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamGroup {
    /// Encoder and generator, trained on the generator loss.
    Generator,
    Critic,
}

impl ParamGroup {
    pub fn of(name: &str) -> Self {
        if name.starts_with("critic.") {
            ParamGroup::Critic
        } else {
            ParamGroup::Generator
        }
    }
}

enum Init {
    /// Zero-mean normal with `sqrt(2 / fan_in)` deviation.
    He(usize),
    Zero,
}

fn layout(cfg: &NetworkConfig) -> Vec<(String, Vec<usize>, Init)> {
    let k = KERNEL;
    let mut out = Vec::new();
    let mut push = |name: String, shape: Vec<usize>, init: Init| out.push((name, shape, init));
    let levels = cfg.conv_levels;
    let n = cfg.condition_length;

    let mut cin = 1;
    for l in 0..levels {
        let c = cfg.channels(l);
        push(format!("enc.conv{l}.w"), vec![c, cin, k, k, k], Init::He(cin * k * k * k));
        push(format!("enc.conv{l}.b"), vec![c], Init::Zero);
        cin = c;
    }
    let flat = cfg.encoder_flat_len();
    push("enc.fc.w".into(), vec![flat, cfg.flatten_dim], Init::He(flat));
    push("enc.fc.b".into(), vec![cfg.flatten_dim], Init::Zero);
    let heads: &[&str] = match cfg.latent_kind {
        LatentKind::Variational => &["mu", "logvar"],
        LatentKind::Deterministic => &["code"],
    };
    for h in heads {
        push(format!("enc.{h}.w"), vec![cfg.flatten_dim, cfg.latent_dim], Init::He(cfg.flatten_dim));
        push(format!("enc.{h}.b"), vec![cfg.latent_dim], Init::Zero);
    }

    let zin = cfg.latent_dim + n;
    push("gen.fc.w".into(), vec![zin, cfg.generator_dense], Init::He(zin));
    push("gen.fc.b".into(), vec![cfg.generator_dense], Init::Zero);
    let mut cin = cfg.generator_start_channels();
    for j in 0..levels - 1 {
        let skip = levels - 2 - j;
        let input = cin + cfg.channels(skip);
        let cout = if skip == 0 { 1 } else { cfg.channels(skip - 1) };
        // Each output voxel of a stride-2, kernel-4 deconv sees 2³ taps per input channel.
        push(format!("gen.deconv{j}.w"), vec![input, cout, k, k, k], Init::He(input * 8));
        push(format!("gen.deconv{j}.b"), vec![cout], Init::Zero);
        cin = cout;
    }
    push("gen.input_skip".into(), vec![1], Init::Zero);

    let mut cin = 1 + n;
    for l in 0..levels {
        let c = cfg.channels(l);
        push(format!("critic.conv{l}.w"), vec![c, cin, k, k, k], Init::He(cin * k * k * k));
        push(format!("critic.conv{l}.b"), vec![c], Init::Zero);
        cin = c + if l + 1 == cfg.critic_reinject_level() { n } else { 0 };
    }
    let flat = cin * cfg.level_resolution(levels - 1).pow(3);
    push("critic.fc.w".into(), vec![flat, cfg.critic_dense], Init::He(flat));
    push("critic.fc.b".into(), vec![cfg.critic_dense], Init::Zero);
    out
}

/// Named parameter tensors of the encoder, generator and critic.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelWeights {
    pub config: NetworkConfig,
    pub tensors: BTreeMap<String, Tensor>,
}

impl ModelWeights {
    pub fn init(config: &NetworkConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tensors = BTreeMap::new();
        for (name, shape, init) in layout(config) {
            let t = match init {
                Init::Zero => Tensor::zeros(&shape),
                Init::He(fan_in) => {
                    let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("finite deviation");
                    Tensor::from_fn(&shape, |_| normal.sample(&mut rng))
                }
            };
            tensors.insert(name, t);
        }
        Ok(Self {
            config: config.clone(),
            tensors,
        })
    }

    /// All-zero weights; every critic value is then zero.
    pub fn zeros(config: &NetworkConfig) -> Result<Self> {
        config.validate()?;
        let tensors = layout(config).into_iter().map(|(n, s, _)| (n, Tensor::zeros(&s))).collect();
        Ok(Self {
            config: config.clone(),
            tensors,
        })
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.tensors.get(name).ok_or_else(|| Error::Weights(format!("missing tensor '{name}'")))
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors.values().map(Tensor::numel).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.values().all(Tensor::is_finite)
    }

    /// Rounds every value to `f32`, the precision checkpoints store.
    pub fn rounded(&self) -> Self {
        let tensors = self.tensors.iter().map(|(k, t)| (k.clone(), t.map(|v| v as f32 as f64))).collect();
        Self {
            config: self.config.clone(),
            tensors,
        }
    }

    /// Checks names and shapes against the configured layout.
    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        let expected = layout(&self.config);
        if expected.len() != self.tensors.len() {
            return Err(Error::Weights(format!(
                "{} tensors, configuration expects {}",
                self.tensors.len(),
                expected.len()
            )));
        }
        for (name, shape, _) in expected {
            let t = self.get(&name)?;
            if t.shape() != shape.as_slice() {
                return Err(Error::Weights(format!("tensor '{name}' has shape {:?}, expected {shape:?}", t.shape())));
            }
        }
        Ok(())
    }

    /// Layout: magic `PNW1`, u32 version, u64 config fingerprint, u32-length
    /// JSON config, u32 tensor count, then per tensor a u16-length name, u8
    /// rank, u32 dims and little-endian f32 values.
    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&self.config.fingerprint().to_le_bytes());
        let cfg = serde_json::to_vec(&self.config)?;
        out.extend_from_slice(&(cfg.len() as u32).to_le_bytes());
        out.extend_from_slice(&cfg);
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in &self.tensors {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(t.shape().len() as u8);
            for &d in t.shape() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for &v in t.data() {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        w.write_all(&out)?;
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        let mut cur = bytes.as_slice();
        let mut take = |n: usize| -> Result<&[u8]> {
            if cur.len() < n {
                return Err(Error::Weights("truncated checkpoint".into()));
            }
            let (head, tail) = cur.split_at(n);
            cur = tail;
            Ok(head)
        };
        if take(4)? != MAGIC {
            return Err(Error::Weights("bad magic: not a checkpoint file".into()));
        }
        let version = u32::from_le_bytes(take(4)?.try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return Err(Error::Weights(format!("checkpoint version {version}, expected {CHECKPOINT_VERSION}")));
        }
        let fingerprint = u64::from_le_bytes(take(8)?.try_into().unwrap());
        let cfg_len = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        let config: NetworkConfig = serde_json::from_slice(take(cfg_len)?)?;
        if config.fingerprint() != fingerprint {
            return Err(Error::Weights("config fingerprint does not match the stored configuration".into()));
        }
        let count = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        let mut tensors = BTreeMap::new();
        for _ in 0..count {
            let name_len = u16::from_le_bytes(take(2)?.try_into().unwrap()) as usize;
            let name = String::from_utf8(take(name_len)?.to_vec()).map_err(|e| Error::Weights(format!("tensor name: {e}")))?;
            let rank = take(1)?[0] as usize;
            let shape = (0..rank)
                .map(|_| Ok(u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize))
                .collect::<Result<Vec<_>>>()?;
            let numel: usize = shape.iter().product();
            let data = take(numel * 4)?
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                .collect();
            tensors.insert(name, Tensor::new(shape, data));
        }
        if !cur.is_empty() {
            return Err(Error::Weights(format!("{} trailing bytes in checkpoint", cur.len())));
        }
        let w = Self { config, tensors };
        w.validate()?;
        Ok(w)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut f)?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut f = std::fs::File::open(path)
            .map_err(|e| Error::Weights(format!("cannot open {}: {e}", path.display())))?;
        Self::read_from(&mut f)
    }

    /// Loads a checkpoint and insists it was built for `expected`.
    pub fn load_for(path: &Path, expected: &NetworkConfig) -> Result<Self> {
        let w = Self::load(path)?;
        if w.config.fingerprint() != expected.fingerprint() {
            return Err(Error::Weights(format!(
                "checkpoint {} was trained with a different network configuration",
                path.display()
            )));
        }
        Ok(w)
    }
}
