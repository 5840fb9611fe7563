use std::path::Path;

use crate::dataset::{Dataset, GenerationMode, Split};
use crate::error::{Error, Result};
use crate::physnet::{predict, LatentKind, ModelWeights, NetworkConfig, Sampling};
use crate::trainer::{train, train_examples, Example, ModelVariant, TrainConfig, TrainOutcome};
use crate::voxel::{binarize, VoxelGrid};

/// Completed grid and whether it should be trusted.
#[derive(Clone, Debug, PartialEq)]
pub struct Reconstruction {
    /// Occupancy probabilities in `(0, 1)`.
    pub grid: VoxelGrid,
    /// Set for empty inputs, and for outputs with nothing above the threshold.
    pub low_confidence: bool,
}

/// Anything that maps a partial grid to a full grid of the same resolution.
pub trait ReconstructionBackend {
    fn resolution(&self) -> usize;
    fn reconstruct(&self, partial: &VoxelGrid, p: f64) -> Result<Reconstruction>;
}

/// The in-repo reconstruction network: the deformation network's conv ladder
/// with a deterministic code and no condition.
#[derive(Clone, Debug)]
pub struct Reconstructor {
    pub weights: ModelWeights,
}

/// Network for reconstruction at resolution `n`.
pub fn reconstructor_config(resolution: usize) -> Result<NetworkConfig> {
    NetworkConfig::deterministic_baseline(resolution, 0)
}

impl Reconstructor {
    pub fn new(weights: ModelWeights) -> Result<Self> {
        let cfg = &weights.config;
        if cfg.condition_length != 0 || cfg.latent_kind != LatentKind::Deterministic {
            return Err(Error::Config(
                "a reconstructor takes no condition and uses a deterministic code".into(),
            ));
        }
        Ok(Self { weights })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::new(ModelWeights::load(path)?)
    }
}

impl ReconstructionBackend for Reconstructor {
    fn resolution(&self) -> usize {
        self.weights.config.resolution
    }

    fn reconstruct(&self, partial: &VoxelGrid, p: f64) -> Result<Reconstruction> {
        let grid = predict(&self.weights, partial, &[], Sampling::Deterministic)?;
        let low_confidence = partial.occupied_count() == 0 || binarize(&grid, p)?.occupied_count() == 0;
        Ok(Reconstruction { grid, low_confidence })
    }
}

fn require_partial(ds: &Dataset) -> Result<()> {
    if ds.manifest.mode != GenerationMode::Partial {
        return Err(Error::Config("expected a dataset generated in partial mode".into()));
    }
    Ok(())
}

/// Partial input to undeformed full shape, with no condition.
pub fn reconstruction_examples(ds: &Dataset, split: Split) -> Result<Vec<Example>> {
    require_partial(ds)?;
    let pairs = ds.reconstruction_pairs()?;
    Ok(pairs
        .split(split)
        .into_iter()
        .map(|r| Example {
            input: r.input.clone(),
            target: r.target.clone(),
            condition: Vec::new(),
        })
        .collect())
}

/// Trains a reconstructor on the partial records of `ds`, validating on
/// reconstruction of its validation split.
pub fn train_reconstructor(
    ds: &Dataset,
    net_cfg: &NetworkConfig,
    cfg: &TrainConfig,
    out: Option<&Path>,
) -> Result<(Reconstructor, TrainOutcome)> {
    let train_set = reconstruction_examples(ds, Split::Train)?;
    let val = reconstruction_examples(ds, Split::Validation)?;
    let outcome = train_examples(&train_set, &val, net_cfg, cfg, out)?;
    Ok((Reconstructor::new(outcome.best.clone())?, outcome))
}

/// The deformation network trained end to end on partial inputs and
/// deformed full targets.
pub fn train_direct_partial(ds: &Dataset, net_cfg: &NetworkConfig, cfg: &TrainConfig, out: Option<&Path>) -> Result<TrainOutcome> {
    require_partial(ds)?;
    let cfg = TrainConfig {
        model_variant: ModelVariant::Physnet,
        ..cfg.clone()
    };
    train(ds, net_cfg, &cfg, out)
}
