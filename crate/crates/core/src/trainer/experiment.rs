use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::metrics::MetricLog;
use super::train::{train, train_examples, ModelVariant, TrainConfig};
use crate::cascade::{completed_examples, train_reconstructor, CascadePipeline, Reconstructor};
use crate::dataset::{
    generate_dataset, Dataset, DatasetManifest, GenerationConfig, GenerationMode, LocationEncoding, ObjectSpec, PrimitiveKind, SamplingPlan, Split,
};
use crate::error::{Error, Result};
use crate::physnet::NetworkConfig;
use crate::voxel::iou;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ExperimentName {
    /// Variational code against the deterministic-code baseline.
    #[serde(rename = "encoding_comparison")]
    EncodingComparison,
    /// `1 × N` moduli against a `√N × √N` joint grid of moduli and Poisson ratios.
    #[serde(rename = "sampling_1xN_vs_KxK")]
    SamplingPlans,
    /// Real-valued against one-hot force location.
    #[serde(rename = "location_encoding")]
    LocationEncoding,
    /// Single network on partial views against reconstruction followed by deformation.
    #[serde(rename = "partial_vs_cascaded")]
    PartialVsCascaded,
}

impl ExperimentName {
    pub const ALL: [Self; 4] = [
        Self::EncodingComparison,
        Self::SamplingPlans,
        Self::LocationEncoding,
        Self::PartialVsCascaded,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::EncodingComparison => "encoding_comparison",
            Self::SamplingPlans => "sampling_1xN_vs_KxK",
            Self::LocationEncoding => "location_encoding",
            Self::PartialVsCascaded => "partial_vs_cascaded",
        }
    }

    /// Datasets the experiment trains on.
    pub fn datasets(self) -> &'static [DatasetPreset] {
        match self {
            Self::EncodingComparison => &[DatasetPreset::DenseModulus],
            Self::SamplingPlans => &[DatasetPreset::DenseModulus, DatasetPreset::JointGrid],
            Self::LocationEncoding => &[DatasetPreset::Locations],
            Self::PartialVsCascaded => &[DatasetPreset::Partial],
        }
    }
}

impl std::fmt::Display for ExperimentName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ExperimentName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|n| n.as_str() == s).ok_or_else(|| {
            let names: Vec<_> = Self::ALL.iter().map(|n| n.as_str()).collect();
            Error::Experiment(format!("unknown experiment '{s}'; valid names: {}", names.join(", ")))
        })
    }
}

/// Desk-scale datasets used by the experiments.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetPreset {
    /// 64 moduli at constant Poisson ratio on a block.
    DenseModulus,
    /// 8 × 8 moduli and Poisson ratios on a block.
    JointGrid,
    /// A bridge loaded at six positions along its deck.
    Locations,
    /// Rotated partial views of a bridge, two angles per axis.
    Partial,
}

impl DatasetPreset {
    pub const ALL: [Self; 4] = [Self::DenseModulus, Self::JointGrid, Self::Locations, Self::Partial];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::DenseModulus => "dense_modulus",
            Self::JointGrid => "joint_grid",
            Self::Locations => "locations",
            Self::Partial => "partial",
        }
    }

    pub fn generation_config(self, resolution: usize) -> GenerationConfig {
        let narrow = [1e-5, 1e-4];
        let (plan, kind, mode) = match self {
            Self::DenseModulus => (
                SamplingPlan {
                    e_range: narrow,
                    ..SamplingPlan::modulus_only(64)
                },
                PrimitiveKind::Block,
                GenerationMode::Full3d,
            ),
            Self::JointGrid => (
                SamplingPlan {
                    e_range: narrow,
                    nu_range: [0.0, 0.45],
                    ..SamplingPlan::joint(8, 8)
                },
                PrimitiveKind::Block,
                GenerationMode::Full3d,
            ),
            Self::Locations => (
                SamplingPlan {
                    e_range: [1e-5, 2e-5],
                    force_samples: 3,
                    location_count: 6,
                    ..SamplingPlan::modulus_only(4)
                },
                PrimitiveKind::Bridge,
                GenerationMode::Full3d,
            ),
            Self::Partial => (
                SamplingPlan {
                    e_range: [1e-5, 2e-5],
                    force_samples: 2,
                    rotations_per_axis: 2,
                    ..SamplingPlan::modulus_only(4)
                },
                PrimitiveKind::Bridge,
                GenerationMode::Partial,
            ),
        };
        GenerationConfig {
            mode,
            resolution,
            ..GenerationConfig::new(plan, vec![ObjectSpec::primitive(kind)])
        }
    }
}

impl std::str::FromStr for DatasetPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|p| p.as_str() == s).ok_or_else(|| {
            let names: Vec<_> = Self::ALL.iter().map(|p| p.as_str()).collect();
            Error::Config(format!("unknown dataset preset '{s}'; valid presets: {}", names.join(", ")))
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Directory holding one subdirectory per dataset preset.
    pub data_dir: PathBuf,
    pub resolution: usize,
    pub base_channels: usize,
    pub seeds: Vec<u64>,
    /// Budget and optimizer shared by every arm; the seed is set per run.
    pub train: TrainConfig,
    pub convergence_threshold: f64,
    /// Consecutive evaluations at or above the threshold that count as converged.
    pub sustain: usize,
    /// Part of the cascade's budget spent on the reconstructor.
    pub reconstruction_share: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            data_dir: PathBuf::from("datasets"),
            resolution: 16,
            base_channels: 8,
            seeds: vec![1, 2, 3],
            train: TrainConfig {
                learning_rate: 1e-3,
                max_iterations: 300,
                eval_interval: 25,
                ..TrainConfig::default()
            },
            convergence_threshold: 0.8,
            sustain: 3,
            reconstruction_share: 0.5,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if self.seeds.is_empty() {
            return Err(Error::Config("an experiment needs at least one seed".into()));
        }
        if !(self.reconstruction_share > 0.0 && self.reconstruction_share < 1.0) {
            return Err(Error::Config(format!(
                "reconstruction_share {} must lie in (0, 1)",
                self.reconstruction_share
            )));
        }
        if self.train.max_iterations < 2 {
            return Err(Error::Config("experiments need a budget of at least 2 iterations".into()));
        }
        Ok(())
    }

    pub fn dataset_dir(&self, preset: DatasetPreset) -> PathBuf {
        self.data_dir.join(preset.as_str())
    }

    fn network(&self, condition_length: usize) -> Result<NetworkConfig> {
        let mut net = NetworkConfig::for_resolution(self.resolution, condition_length)?;
        net.base_channels = self.base_channels;
        net.validate()?;
        Ok(net)
    }

    fn run_config(&self, seed: u64, iterations: usize) -> TrainConfig {
        TrainConfig {
            seed,
            max_iterations: iterations,
            ..self.train.clone()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub iteration: usize,
    pub validation_iou: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: u64,
    /// Validation IOU of the weights at the end of the budget.
    pub final_iou: f64,
    pub best_iou: f64,
    pub convergence_iteration: Option<usize>,
    pub curve: Vec<CurvePoint>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArmReport {
    pub name: String,
    pub runs: Vec<RunReport>,
    pub mean_final_iou: f64,
    pub mean_best_iou: f64,
}

impl ArmReport {
    fn new(name: &str, runs: Vec<RunReport>) -> Self {
        let mean = |f: fn(&RunReport) -> f64| runs.iter().map(f).sum::<f64>() / runs.len() as f64;
        Self {
            name: name.to_string(),
            mean_final_iou: mean(|r| r.final_iou),
            mean_best_iou: mean(|r| r.best_iou),
            runs,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: ExperimentName,
    /// Iterations per run of every arm.
    pub iterations: usize,
    pub seeds: Vec<u64>,
    pub convergence_threshold: f64,
    pub arms: Vec<ArmReport>,
    /// Iteration at which the cascade switches from reconstruction to deformation training.
    pub phase_boundary: Option<usize>,
}

impl ExperimentReport {
    pub fn arm(&self, name: &str) -> Option<&ArmReport> {
        self.arms.iter().find(|a| a.name == name)
    }

    /// Seeds on which arm `a` ends at or above arm `b` (strictly above when `strict`).
    pub fn wins(&self, a: &str, b: &str, strict: bool) -> usize {
        let (Some(a), Some(b)) = (self.arm(a), self.arm(b)) else {
            return 0;
        };
        a.runs
            .iter()
            .zip(&b.runs)
            .filter(|(x, y)| if strict { x.final_iou > y.final_iou } else { x.final_iou >= y.final_iou })
            .count()
    }

    /// Long-format curve data: `arm,seed,iteration,validation_iou`.
    pub fn curves_csv(&self) -> String {
        let mut s = String::from("arm,seed,iteration,validation_iou\n");
        for arm in &self.arms {
            for run in &arm.runs {
                for p in &run.curve {
                    writeln!(s, "{},{},{},{}", arm.name, run.seed, p.iteration, p.validation_iou).unwrap();
                }
            }
        }
        s
    }

    /// Writes `report.json` and `curves.csv` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.json"), serde_json::to_string_pretty(self)?)?;
        std::fs::write(dir.join("curves.csv"), self.curves_csv())?;
        Ok(())
    }
}

fn curve(log: &MetricLog, offset: usize) -> Vec<CurvePoint> {
    log.rows
        .iter()
        .map(|r| CurvePoint {
            iteration: r.iteration + offset,
            validation_iou: r.validation_iou,
        })
        .collect()
}

fn run_report(seed: u64, log: &MetricLog, cfg: &ExperimentConfig) -> RunReport {
    RunReport {
        seed,
        final_iou: log.last_iou().unwrap_or(f64::NAN),
        best_iou: log.best().map(|r| r.validation_iou).unwrap_or(f64::NAN),
        convergence_iteration: log.convergence_iteration(cfg.convergence_threshold, cfg.sustain),
        curve: curve(log, 0),
    }
}

/// Loads a preset's dataset, or explains how to create it.
fn load_preset(name: ExperimentName, preset: DatasetPreset, cfg: &ExperimentConfig) -> Result<Dataset> {
    let dir = cfg.dataset_dir(preset);
    if !DatasetManifest::path(&dir).exists() {
        return Err(Error::Experiment(format!(
            "dataset '{}' not found at {}; create it with `physnet generate --preset {} --out {}` or rerun with `physnet experiment {name} --autogen`",
            preset.as_str(),
            dir.display(),
            preset.as_str(),
            dir.display(),
        )));
    }
    let ds = Dataset::load(&dir)?;
    if ds.resolution() != cfg.resolution {
        return Err(Error::Experiment(format!(
            "dataset '{}' has resolution {}, the experiment runs at {}",
            preset.as_str(),
            ds.resolution(),
            cfg.resolution
        )));
    }
    Ok(ds)
}

/// Generates every dataset `name` needs that is not already present.
pub fn generate_missing(name: ExperimentName, cfg: &ExperimentConfig) -> Result<Vec<DatasetPreset>> {
    let mut made = Vec::new();
    for &preset in name.datasets() {
        let dir = cfg.dataset_dir(preset);
        if !DatasetManifest::path(&dir).exists() {
            generate_dataset(&preset.generation_config(cfg.resolution), &dir)?;
            made.push(preset);
        }
    }
    Ok(made)
}

fn train_arm(ds: &Dataset, variant: ModelVariant, cfg: &ExperimentConfig) -> Result<Vec<RunReport>> {
    let net = cfg.network(ds.condition_length())?;
    cfg.seeds
        .iter()
        .map(|&seed| {
            let tc = TrainConfig {
                model_variant: variant,
                ..cfg.run_config(seed, cfg.train.max_iterations)
            };
            let out = train(ds, &net, &tc, None)?;
            Ok(run_report(seed, &out.log, cfg))
        })
        .collect()
}

/// Reconstructor then aligned deformation network, splitting one budget.
/// The pipeline is scored once, at the end, on the partial validation views;
/// the curve shows each stage's own validation score.
fn cascade_arm(ds: &Dataset, cfg: &ExperimentConfig) -> Result<(Vec<RunReport>, usize)> {
    let budget = cfg.train.max_iterations;
    let rec_iters = ((budget as f64 * cfg.reconstruction_share).round() as usize).clamp(1, budget - 1);
    let mut rec_net = cfg.network(0)?.baseline_variant();
    rec_net.condition_length = 0;
    let def_net = cfg.network(ds.condition_length())?;
    let partial_val = ds.split(Split::Validation);
    let p = cfg.train.threshold;
    let mut runs = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        let (_, rec) = train_reconstructor(ds, &rec_net, &cfg.run_config(seed, rec_iters), None)?;
        let reconstructor = Reconstructor::new(rec.last.rounded())?;
        let train_set = completed_examples(&reconstructor, ds, Split::Train, p)?;
        let val_set = completed_examples(&reconstructor, ds, Split::Validation, p)?;
        let def = train_examples(&train_set, &val_set, &def_net, &cfg.run_config(seed, budget - rec_iters), None)?;
        let pipeline = CascadePipeline::new(Some(reconstructor), def.last.rounded(), p)?;
        let mut scores = Vec::with_capacity(partial_val.len());
        for r in &partial_val {
            let out = pipeline.predict(&r.input, &r.condition.to_vec())?;
            scores.push(iou(&out.grid, &r.target, p)?);
        }
        let final_iou = if scores.is_empty() {
            f64::NAN
        } else {
            scores.iter().sum::<f64>() / scores.len() as f64
        };
        let mut points = curve(&rec.log, 0);
        points.extend(curve(&def.log, rec_iters));
        let mut combined = MetricLog::default();
        for r in &def.log.rows {
            combined.push(
                super::metrics::MetricRow {
                    iteration: r.iteration + rec_iters,
                    ..r.clone()
                },
                0.0,
            )?;
        }
        runs.push(RunReport {
            seed,
            final_iou,
            best_iou: final_iou,
            convergence_iteration: combined.convergence_iteration(cfg.convergence_threshold, cfg.sustain),
            curve: points,
        });
    }
    Ok((runs, rec_iters))
}

/// Trains every arm of `name` for the same number of iterations under each
/// seed and collects final scores and learning curves.
pub fn run_experiment(name: ExperimentName, cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let mut phase_boundary = None;
    let arms = match name {
        ExperimentName::EncodingComparison => {
            let ds = load_preset(name, DatasetPreset::DenseModulus, cfg)?;
            vec![
                ArmReport::new("physnet", train_arm(&ds, ModelVariant::Physnet, cfg)?),
                ArmReport::new("icgan_baseline", train_arm(&ds, ModelVariant::IcganBaseline, cfg)?),
            ]
        }
        ExperimentName::SamplingPlans => {
            let line = load_preset(name, DatasetPreset::DenseModulus, cfg)?;
            let grid = load_preset(name, DatasetPreset::JointGrid, cfg)?;
            vec![
                ArmReport::new("1xN", train_arm(&line, ModelVariant::Physnet, cfg)?),
                ArmReport::new("KxK", train_arm(&grid, ModelVariant::Physnet, cfg)?),
            ]
        }
        ExperimentName::LocationEncoding => {
            let ds = load_preset(name, DatasetPreset::Locations, cfg)?;
            let real = ds.with_encoding(LocationEncoding::Real)?;
            let one_hot = ds.with_encoding(LocationEncoding::OneHot)?;
            vec![
                ArmReport::new("real", train_arm(&real, ModelVariant::Physnet, cfg)?),
                ArmReport::new("one_hot", train_arm(&one_hot, ModelVariant::Physnet, cfg)?),
            ]
        }
        ExperimentName::PartialVsCascaded => {
            let ds = load_preset(name, DatasetPreset::Partial, cfg)?;
            let direct = cfg
                .seeds
                .iter()
                .map(|&seed| {
                    let out = crate::cascade::train_direct_partial(&ds, &cfg.network(ds.condition_length())?, &cfg.run_config(seed, cfg.train.max_iterations), None)?;
                    Ok(run_report(seed, &out.log, cfg))
                })
                .collect::<Result<Vec<_>>>()?;
            let (cascaded, boundary) = cascade_arm(&ds, cfg)?;
            phase_boundary = Some(boundary);
            vec![ArmReport::new("direct_partial", direct), ArmReport::new("cascaded", cascaded)]
        }
    };
    Ok(ExperimentReport {
        experiment: name,
        iterations: cfg.train.max_iterations,
        seeds: cfg.seeds.clone(),
        convergence_threshold: cfg.convergence_threshold,
        arms,
        phase_boundary,
    })
}
