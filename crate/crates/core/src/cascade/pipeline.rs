use std::path::Path;

use serde::{Deserialize, Serialize};

use super::reconstructor::{ReconstructionBackend, Reconstructor};
use crate::dataset::{Dataset, Split};
use crate::error::{Error, Result};
use crate::physnet::{predict, ModelWeights, Sampling};
use crate::trainer::Example;
use crate::voxel::{binarize, principal_alignment, resample, RigidAlignment, VoxelGrid};

pub const DESCRIPTOR_FILE: &str = "pipeline.json";

/// Contents of a bundle's `pipeline.json`. Paths are relative to the bundle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineDescriptor {
    /// Absent in bypass mode.
    pub reconstructor: Option<String>,
    pub deformation: String,
    pub threshold: f64,
    #[serde(default = "yes")]
    pub align: bool,
}

fn yes() -> bool {
    true
}

/// Reconstruct, binarize, align, deform, and map back to the input frame.
#[derive(Clone, Debug)]
pub struct CascadePipeline {
    /// `None` treats inputs as already complete.
    pub reconstructor: Option<Reconstructor>,
    pub deformation: ModelWeights,
    pub threshold: f64,
    /// When off, the deformation network sees the completed grid as is.
    pub align: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CascadeOutput {
    /// Occupancy probabilities in the input's frame.
    pub grid: VoxelGrid,
    /// Map from the input frame to the frame the deformation network saw.
    pub alignment: RigidAlignment,
    /// PCA could not fix the axes, so no alignment was applied.
    pub degenerate_alignment: bool,
    pub low_confidence: bool,
}

/// Alignment of a binary grid, or identity when it is empty or its axes are
/// undetermined; the flag reports the fallback.
fn alignment_of(g: &VoxelGrid) -> (RigidAlignment, bool) {
    match principal_alignment(g) {
        Ok((a, false)) => (a, false),
        _ => (RigidAlignment::identity(), true),
    }
}

fn transformed(g: &VoxelGrid, a: &RigidAlignment) -> VoxelGrid {
    if a.is_identity() {
        g.clone()
    } else {
        resample(g, a)
    }
}

impl CascadePipeline {
    pub fn new(reconstructor: Option<Reconstructor>, deformation: ModelWeights, threshold: f64) -> Result<Self> {
        let pipeline = Self {
            reconstructor,
            deformation,
            threshold,
            align: true,
        };
        pipeline.validate()?;
        Ok(pipeline)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::Config(format!("threshold {} must lie in (0, 1)", self.threshold)));
        }
        if let Some(r) = &self.reconstructor {
            if r.resolution() != self.deformation.config.resolution {
                return Err(Error::Config(format!(
                    "reconstructor works at {}³ but the deformation network at {}³",
                    r.resolution(),
                    self.deformation.config.resolution
                )));
            }
        }
        Ok(())
    }

    pub fn predict(&self, input: &VoxelGrid, condition: &[f64]) -> Result<CascadeOutput> {
        let (full, low_confidence) = match &self.reconstructor {
            Some(r) => {
                let rec = r.reconstruct(input, self.threshold)?;
                (binarize(&rec.grid, self.threshold)?, rec.low_confidence)
            }
            None => (binarize(input, self.threshold)?, input.occupied_count() == 0),
        };
        let (alignment, degenerate) = if self.align {
            alignment_of(&full)
        } else {
            (RigidAlignment::identity(), false)
        };
        let aligned = transformed(&full, &alignment);
        let deformed = predict(&self.deformation, &aligned, condition, Sampling::Deterministic)?;
        let mut grid = transformed(&deformed, &alignment.inverse());
        if grid.spacing() != input.spacing() {
            grid = VoxelGrid::new(grid.resolution(), input.spacing(), grid.values().to_vec(), grid.kind())?;
        }
        Ok(CascadeOutput {
            grid,
            alignment,
            degenerate_alignment: degenerate,
            low_confidence,
        })
    }

    /// Writes the checkpoints and `pipeline.json` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let reconstructor = match &self.reconstructor {
            Some(r) => {
                r.weights.save(&dir.join("reconstructor.ckpt"))?;
                Some("reconstructor.ckpt".to_string())
            }
            None => None,
        };
        self.deformation.save(&dir.join("deformation.ckpt"))?;
        let descriptor = PipelineDescriptor {
            reconstructor,
            deformation: "deformation.ckpt".into(),
            threshold: self.threshold,
            align: self.align,
        };
        std::fs::write(dir.join(DESCRIPTOR_FILE), serde_json::to_string_pretty(&descriptor)?)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(dir.join(DESCRIPTOR_FILE))?;
        let d: PipelineDescriptor = serde_json::from_str(&text)?;
        let reconstructor = d.reconstructor.map(|p| Reconstructor::load(&dir.join(p))).transpose()?;
        let pipeline = Self {
            reconstructor,
            deformation: ModelWeights::load(&dir.join(&d.deformation))?,
            threshold: d.threshold,
            align: d.align,
        };
        pipeline.validate()?;
        Ok(pipeline)
    }
}

/// Deformation-stage pairs as the pipeline will present them: each partial
/// view completed by `reconstructor`, binarized at `threshold` and moved into
/// its own principal frame, with the deformed target moved alongside.
pub fn completed_examples(reconstructor: &dyn ReconstructionBackend, ds: &Dataset, split: Split, threshold: f64) -> Result<Vec<Example>> {
    ds.split(split)
        .into_iter()
        .map(|r| {
            let full = binarize(&reconstructor.reconstruct(&r.input, threshold)?.grid, threshold)?;
            let (a, _) = alignment_of(&full);
            Ok(Example {
                input: transformed(&full, &a),
                target: transformed(&r.target, &a),
                condition: r.condition.to_vec(),
            })
        })
        .collect()
}

/// Training pairs for the cascade's deformation stage: each record's
/// undeformed reference shape and deformed target, both moved into the
/// reference's principal frame.
pub fn aligned_examples(ds: &Dataset, split: Split) -> Result<Vec<Example>> {
    ds.split(split)
        .into_iter()
        .map(|r| {
            let reference = r
                .metadata
                .reference
                .as_ref()
                .ok_or_else(|| Error::Config("aligned examples need partial records carrying reference shapes".into()))?;
            let (a, _) = alignment_of(reference);
            Ok(Example {
                input: transformed(reference, &a),
                target: transformed(&r.target, &a),
                condition: r.condition.to_vec(),
            })
        })
        .collect()
}
