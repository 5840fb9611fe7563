use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use physnet_autograd::{Graph, Tensor};
use rand::seq::SliceRandom;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::evaluate::evaluate;
use super::metrics::{MetricLog, MetricRow};
use crate::dataset::{Dataset, SampleRecord, Split};
use crate::error::{Error, Result};
use crate::physnet::{
    condition_batch, critic_loss, generator_loss, grid_batch, prior_loss, reconstruction_loss, Bound, LatentKind,
    ModelWeights, NetworkConfig, ParamGroup,
};
use crate::voxel::{VoxelGrid, DEFAULT_THRESHOLD};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelVariant {
    Physnet,
    IcganBaseline,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub max_iterations: usize,
    /// Critic updates per generator update.
    pub critic_steps: usize,
    pub eval_interval: usize,
    pub seed: u64,
    pub model_variant: ModelVariant,
    /// Binarization threshold for validation IOU.
    pub threshold: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 8,
            learning_rate: 5e-5,
            adam_beta1: 0.5,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            max_iterations: 1000,
            critic_steps: 5,
            eval_interval: 100,
            seed: 0,
            model_variant: ModelVariant::Physnet,
            threshold: DEFAULT_THRESHOLD,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.batch_size == 0 {
            return fail("batch_size must be at least 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail(format!("learning_rate {} must be positive", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return fail(format!("Adam betas ({}, {}) must lie in [0, 1)", self.adam_beta1, self.adam_beta2));
        }
        if !(self.adam_epsilon > 0.0) {
            return fail("adam_epsilon must be positive".into());
        }
        if self.eval_interval == 0 {
            return fail("eval_interval must be at least 1".into());
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return fail(format!("threshold {} must lie in (0, 1)", self.threshold));
        }
        Ok(())
    }

    fn optimizer(&self) -> Adam {
        Adam::new(self.learning_rate, self.adam_beta1, self.adam_beta2, self.adam_epsilon)
    }
}

/// One training pair with its flat condition.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub input: VoxelGrid,
    pub target: VoxelGrid,
    pub condition: Vec<f64>,
}

impl Example {
    pub fn from_record(r: &SampleRecord) -> Self {
        Self {
            input: r.input.clone(),
            target: r.target.clone(),
            condition: r.condition.to_vec(),
        }
    }

    /// Training and validation examples of a dataset.
    pub fn splits(ds: &Dataset) -> (Vec<Self>, Vec<Self>) {
        let take = |s| ds.split(s).into_iter().map(Self::from_record).collect();
        (take(Split::Train), take(Split::Validation))
    }
}

/// Optimizer and sampling state of a run.
#[derive(Clone, Debug)]
pub struct TrainState {
    pub iteration: usize,
    pub generator_opt: Adam,
    pub critic_opt: Adam,
    pub rng: ChaCha8Rng,
    pub best_iou: f64,
    pub best_iteration: usize,
    order: Vec<usize>,
    cursor: usize,
}

impl TrainState {
    fn new(cfg: &TrainConfig, examples: usize) -> Self {
        Self {
            iteration: 0,
            generator_opt: cfg.optimizer(),
            critic_opt: cfg.optimizer(),
            rng: ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x7472_6169_6e00_0000),
            best_iou: f64::NEG_INFINITY,
            best_iteration: 0,
            order: (0..examples).collect(),
            cursor: examples,
        }
    }

    /// Next `size` example indices, reshuffling after every pass.
    fn next_batch(&mut self, size: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(size);
        while out.len() < size {
            if self.cursor == self.order.len() {
                self.order.shuffle(&mut self.rng);
                self.cursor = 0;
            }
            out.push(self.order[self.cursor]);
            self.cursor += 1;
        }
        out
    }
}

pub struct TrainOutcome {
    /// Weights with the best validation IOU, at checkpoint precision.
    pub best: ModelWeights,
    pub last: ModelWeights,
    pub log: MetricLog,
    pub state: TrainState,
}

struct Batch {
    input: Tensor,
    target: Tensor,
    condition: Tensor,
}

fn make_batch(examples: &[Example], idx: &[usize], condition_length: usize) -> Result<Batch> {
    let inputs: Vec<&VoxelGrid> = idx.iter().map(|&i| &examples[i].input).collect();
    let targets: Vec<&VoxelGrid> = idx.iter().map(|&i| &examples[i].target).collect();
    let conds: Vec<Vec<f64>> = idx.iter().map(|&i| examples[i].condition.clone()).collect();
    Ok(Batch {
        input: grid_batch(&inputs)?,
        target: grid_batch(&targets)?,
        condition: condition_batch(&conds, condition_length)?,
    })
}

fn normal_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    Tensor::from_fn(shape, |_| StandardNormal.sample(rng))
}

#[derive(Default)]
struct Sums {
    generator: f64,
    critic: f64,
    reconstruction: f64,
    prior: f64,
    penalty: f64,
    generator_steps: usize,
    critic_steps: usize,
}

impl Sums {
    fn row(&self, iteration: usize, iou: f64) -> MetricRow {
        let g = self.generator_steps.max(1) as f64;
        let c = self.critic_steps.max(1) as f64;
        MetricRow {
            iteration,
            generator_loss: self.generator / g,
            critic_loss: self.critic / c,
            reconstruction_loss: self.reconstruction / g,
            prior_loss: self.prior / g,
            gradient_penalty: self.penalty / c,
            validation_iou: iou,
        }
    }
}

fn non_finite(iteration: usize, detail: String, out: Option<&Path>, have_best: bool) -> Error {
    let last_good = match out {
        Some(dir) if have_best => Some(dir.join("best.ckpt")),
        _ => None,
    };
    Error::NonFinite {
        iteration,
        detail,
        last_good,
    }
}

fn collect_grads(graph: &Graph, loss: physnet_autograd::Var<'_>, params: &[(&str, physnet_autograd::Var<'_>)]) -> Result<BTreeMap<String, Tensor>> {
    let vars: Vec<_> = params.iter().map(|(_, v)| *v).collect();
    let grads = graph.grad(loss, &vars);
    let mut out = BTreeMap::new();
    for ((name, _), g) in params.iter().zip(grads) {
        let t = (*g.value()).clone();
        if !t.is_finite() {
            return Err(Error::Evaluation(format!("non-finite gradient for '{name}'")));
        }
        out.insert(name.to_string(), t);
    }
    Ok(out)
}

/// Generator output for a batch, with sampled codes and no history.
fn sample_fakes(weights: &ModelWeights, batch: &Batch, rng: &mut ChaCha8Rng) -> Tensor {
    let g = Graph::new();
    let net = Bound::new(&g, weights);
    let enc = net.encode(g.constant(batch.input.clone()));
    let noise = normal_tensor(rng, &enc.mu.shape());
    let z = net.reparameterize(&enc, g.constant(noise));
    let out = net.generate(z, g.constant(batch.condition.clone()), &enc.skips);
    (*out.value()).clone()
}

fn critic_step(weights: &mut ModelWeights, state: &mut TrainState, batch: &Batch, sums: &mut Sums) -> Result<()> {
    let fake = sample_fakes(weights, batch, &mut state.rng);
    let b = batch.input.shape()[0];
    let eta: Vec<f64> = (0..b).map(|_| state.rng.random::<f64>()).collect();
    let g = Graph::new();
    let net = Bound::new(&g, weights);
    let y = g.constant(batch.condition.clone());
    let critic = |v| net.discriminate(v, y);
    let loss = critic_loss(&g, &critic, g.constant(fake), g.constant(batch.target.clone()), &eta, net.config.lambda_gp);
    let (total, penalty) = (loss.total.item(), loss.penalty.item());
    if !total.is_finite() {
        return Err(Error::Evaluation(format!("critic loss is {total}")));
    }
    let grads = collect_grads(&g, loss.total, &net.group(ParamGroup::Critic))?;
    state.critic_opt.update(&mut weights.tensors, &grads);
    sums.critic += total;
    sums.penalty += penalty;
    sums.critic_steps += 1;
    Ok(())
}

fn generator_step(weights: &mut ModelWeights, state: &mut TrainState, batch: &Batch, sums: &mut Sums) -> Result<()> {
    let g = Graph::new();
    let net = Bound::new(&g, weights);
    let cfg = &net.config;
    let x = g.constant(batch.input.clone());
    let t = g.constant(batch.target.clone());
    let y = g.constant(batch.condition.clone());
    let enc = net.encode(x);
    let noise = normal_tensor(&mut state.rng, &enc.mu.shape());
    let z = net.reparameterize(&enc, g.constant(noise));
    let o = net.generate(z, y, &enc.skips);
    let rec = reconstruction_loss(t, o, cfg.alpha);
    let vae = match (cfg.latent_kind, enc.log_var) {
        (LatentKind::Variational, Some(lv)) => {
            let prior = prior_loss(enc.mu, lv);
            sums.prior += prior.item();
            rec + prior
        }
        _ => rec,
    };
    let loss = generator_loss(vae, net.discriminate(o, y).mean_all(), cfg.beta);
    let value = loss.item();
    if !value.is_finite() {
        return Err(Error::Evaluation(format!("generator loss is {value}")));
    }
    let grads = collect_grads(&g, loss, &net.group(ParamGroup::Generator))?;
    state.generator_opt.update(&mut weights.tensors, &grads);
    sums.generator += value;
    sums.reconstruction += rec.item();
    sums.generator_steps += 1;
    Ok(())
}

/// Trains encoder, generator and critic on `train`, evaluating on
/// `validation` every `eval_interval` iterations and at the end.
///
/// With `out` set, `best.ckpt`, `last.ckpt` and the metric CSVs are written there.
pub fn train_examples(
    train: &[Example],
    validation: &[Example],
    net_cfg: &NetworkConfig,
    cfg: &TrainConfig,
    out: Option<&Path>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    net_cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Config("no training examples".into()));
    }
    for e in train.iter().chain(validation) {
        if e.input.resolution() != net_cfg.resolution || e.target.resolution() != net_cfg.resolution {
            return Err(Error::Config(format!(
                "{}³ examples for a {}³ network",
                e.input.resolution(),
                net_cfg.resolution
            )));
        }
        if e.condition.len() != net_cfg.condition_length {
            return Err(Error::Config(format!(
                "conditions of length {} for a network expecting {}",
                e.condition.len(),
                net_cfg.condition_length
            )));
        }
    }
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
    }
    let mut weights = ModelWeights::init(net_cfg, cfg.seed)?;
    let mut state = TrainState::new(cfg, train.len());
    let mut log = MetricLog::default();
    let mut best = weights.clone();
    let started = Instant::now();
    let mut sums = Sums::default();

    for it in 1..=cfg.max_iterations {
        state.iteration = it;
        let step = (|| -> Result<()> {
            for _ in 0..cfg.critic_steps {
                let idx = state.next_batch(cfg.batch_size);
                critic_step(&mut weights, &mut state, &make_batch(train, &idx, net_cfg.condition_length)?, &mut sums)?;
            }
            let idx = state.next_batch(cfg.batch_size);
            generator_step(&mut weights, &mut state, &make_batch(train, &idx, net_cfg.condition_length)?, &mut sums)
        })();
        match step {
            Ok(()) => {}
            Err(Error::Evaluation(detail)) => return Err(non_finite(it, detail, out, state.best_iou.is_finite())),
            Err(e) => return Err(e),
        }
        if it % cfg.eval_interval == 0 || it == cfg.max_iterations {
            let snapshot = weights.rounded();
            let iou = if validation.is_empty() {
                f64::NAN
            } else {
                evaluate(&snapshot, validation, cfg.threshold)?.mean_iou
            };
            log.push(sums.row(it, iou), started.elapsed().as_secs_f64())?;
            sums = Sums::default();
            log::info!("iteration {it}: validation IOU {iou:.4}");
            if iou > state.best_iou || (validation.is_empty() && it == cfg.max_iterations) {
                state.best_iou = iou;
                state.best_iteration = it;
                best = snapshot;
                if let Some(dir) = out {
                    best.save(&dir.join("best.ckpt"))?;
                }
            }
            if let Some(dir) = out {
                log.save(dir)?;
            }
        }
    }
    if let Some(dir) = out {
        if cfg.max_iterations == 0 {
            best.save(&dir.join("best.ckpt"))?;
        }
        weights.save(&dir.join("last.ckpt"))?;
        log.save(dir)?;
    }
    Ok(TrainOutcome {
        best,
        last: weights,
        log,
        state,
    })
}

fn check_dataset(ds: &Dataset, net_cfg: &NetworkConfig) -> Result<()> {
    if ds.resolution() != net_cfg.resolution {
        return Err(Error::Config(format!(
            "dataset resolution {} does not match network resolution {}",
            ds.resolution(),
            net_cfg.resolution
        )));
    }
    if ds.condition_length() != net_cfg.condition_length {
        return Err(Error::Config(format!(
            "dataset conditions have length {}, network expects {}",
            ds.condition_length(),
            net_cfg.condition_length
        )));
    }
    Ok(())
}

/// Trains on a dataset's train split, validating on its validation split.
pub fn train(ds: &Dataset, net_cfg: &NetworkConfig, cfg: &TrainConfig, out: Option<&Path>) -> Result<TrainOutcome> {
    check_dataset(ds, net_cfg)?;
    let net_cfg = match cfg.model_variant {
        ModelVariant::Physnet => net_cfg.clone(),
        ModelVariant::IcganBaseline => net_cfg.baseline_variant(),
    };
    let (train, val) = Example::splits(ds);
    train_examples(&train, &val, &net_cfg, cfg, out)
}

/// The adversarial-autoencoder baseline: the same network with a
/// deterministic code and no prior term.
pub fn train_baseline_icgan(ds: &Dataset, net_cfg: &NetworkConfig, cfg: &TrainConfig, out: Option<&Path>) -> Result<TrainOutcome> {
    let cfg = TrainConfig {
        model_variant: ModelVariant::IcganBaseline,
        ..cfg.clone()
    };
    train(ds, net_cfg, &cfg, out)
}

/// Path of the best checkpoint written by a run into `dir`.
pub fn best_checkpoint(dir: &Path) -> PathBuf {
    dir.join("best.ckpt")
}
