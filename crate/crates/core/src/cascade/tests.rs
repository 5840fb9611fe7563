use super::*;
use crate::physnet::{predict, ModelWeights, NetworkConfig, Sampling};
use crate::voxel::{resample, VoxelGrid};

fn slab(n: usize) -> VoxelGrid {
    VoxelGrid::from_fn(n, 0.01, |x, y, z| (1..n - 1).contains(&x) && (2..n - 2).contains(&y) && z < n / 4).unwrap()
}

fn deformation() -> ModelWeights {
    ModelWeights::init(&NetworkConfig::for_resolution(8, 2).unwrap(), 7).unwrap()
}

fn reconstructor() -> Reconstructor {
    Reconstructor::new(ModelWeights::init(&reconstructor_config(8).unwrap(), 8).unwrap()).unwrap()
}

#[test]
fn unaligned_bypass_is_plain_prediction() {
    let mut pipeline = CascadePipeline::new(None, deformation(), 0.8).unwrap();
    pipeline.align = false;
    let x = slab(8);
    let y = [0.4, 0.6];
    let out = pipeline.predict(&x, &y).unwrap();
    assert_eq!(out.grid, predict(&pipeline.deformation, &x, &y, Sampling::Deterministic).unwrap());
    assert!(out.alignment.is_identity());
}

#[test]
fn bypass_predicts_on_the_aligned_grid() {
    let pipeline = CascadePipeline::new(None, deformation(), 0.8).unwrap();
    let x = slab(8);
    let y = [0.1, 0.9];
    let out = pipeline.predict(&x, &y).unwrap();
    assert!(!out.degenerate_alignment);
    let aligned = resample(&x, &out.alignment);
    let expected = predict(&pipeline.deformation, &aligned, &y, Sampling::Deterministic).unwrap();
    assert_eq!(out.grid, resample(&expected, &out.alignment.inverse()));
    assert_eq!(out.grid.resolution(), 8);
    assert!(out.grid.values().iter().all(|v| (0.0..1.0).contains(v)));
}

#[test]
fn cascade_is_deterministic_and_flags_empty_input() {
    let pipeline = CascadePipeline::new(Some(reconstructor()), deformation(), 0.5).unwrap();
    let x = slab(8);
    let a = pipeline.predict(&x, &[0.0, 0.5]).unwrap();
    assert_eq!(a, pipeline.predict(&x, &[0.0, 0.5]).unwrap());
    let empty = pipeline.predict(&VoxelGrid::empty(8, 0.01).unwrap(), &[0.0, 0.5]).unwrap();
    assert!(empty.low_confidence);
    assert_eq!(empty.grid.resolution(), 8);
}

#[test]
fn bundle_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let rec = Reconstructor::new(reconstructor().weights.rounded()).unwrap();
    let pipeline = CascadePipeline::new(Some(rec), deformation().rounded(), 0.7).unwrap();
    pipeline.save(dir.path()).unwrap();
    let loaded = CascadePipeline::load(dir.path()).unwrap();
    let x = slab(8);
    assert_eq!(loaded.predict(&x, &[0.2, 0.2]).unwrap(), pipeline.predict(&x, &[0.2, 0.2]).unwrap());
    assert_eq!(loaded.threshold, 0.7);
}

#[test]
fn mismatched_stages_are_rejected() {
    assert!(Reconstructor::new(deformation()).is_err());
    let wide = ModelWeights::init(&reconstructor_config(16).unwrap(), 1).unwrap();
    assert!(CascadePipeline::new(Some(Reconstructor::new(wide).unwrap()), deformation(), 0.8).is_err());
    assert!(CascadePipeline::new(None, deformation(), 1.0).is_err());
}

/// Backend that returns the reference shape recorded for a known partial view.
struct Lookup(Vec<(VoxelGrid, VoxelGrid)>);

impl ReconstructionBackend for Lookup {
    fn resolution(&self) -> usize {
        8
    }

    fn reconstruct(&self, partial: &VoxelGrid, _p: f64) -> crate::Result<Reconstruction> {
        let (_, full) = self.0.iter().find(|(v, _)| v == partial).expect("unknown view");
        Ok(Reconstruction { grid: full.clone(), low_confidence: false })
    }
}

#[test]
fn perfect_completions_match_reference_alignment() {
    use crate::dataset::{generate_dataset, Dataset, GenerationConfig, GenerationMode, ObjectSpec, PrimitiveKind, SamplingPlan, Split};
    let dir = tempfile::tempdir().unwrap();
    let plan = SamplingPlan { e_range: [1e-5, 1e-5], rotations_per_axis: 2, ..SamplingPlan::modulus_only(1) };
    let cfg = GenerationConfig {
        mode: GenerationMode::Partial,
        resolution: 8,
        ..GenerationConfig::new(plan, vec![ObjectSpec::primitive(PrimitiveKind::Block)])
    };
    generate_dataset(&cfg, dir.path()).unwrap();
    let ds = Dataset::load(dir.path()).unwrap();
    let backend = Lookup(ds.records.iter().map(|r| (r.input.clone(), r.metadata.reference.clone().unwrap())).collect());
    for split in [Split::Train, Split::Validation, Split::Test] {
        assert_eq!(completed_examples(&backend, &ds, split, 0.8).unwrap(), aligned_examples(&ds, split).unwrap());
    }
    assert!(!aligned_examples(&ds, Split::Train).unwrap().is_empty());
}
