use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::condition::{encode_condition, LocationEncoding};
use super::manifest::{assign_splits, record_hash, DatasetManifest, GenerationMode, ObjectSpec, RecordEntry, Split, MANIFEST_VERSION};
use super::plan::{sample_materials, SamplingPlan};
use super::primitives::build_primitive;
use super::record::{InputKind, RecordMetadata, SampleRecord};
use crate::elastic::{build_hex_mesh, deform_and_revoxelize, DisplacementField, ElasticSystem, ForceSpec, HexMesh, MaterialParams, SolverOptions};
use crate::error::{Error, Result};
use crate::voxel::{depth_to_partial_grid, enumerate_rotations, render_depth, rotate_grid, VoxelGrid};

/// Largest tolerated fraction of skipped records.
pub const MAX_SKIP_RATE: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationConfig {
    #[serde(default)]
    pub plan: SamplingPlan,
    pub objects: Vec<ObjectSpec>,
    #[serde(default = "default_mode")]
    pub mode: GenerationMode,
    #[serde(default = "default_encoding")]
    pub encoding: LocationEncoding,
    #[serde(default = "default_resolution")]
    pub resolution: usize,
    /// Metres per voxel.
    #[serde(default = "default_spacing")]
    pub spacing: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_mode() -> GenerationMode {
    GenerationMode::Full3d
}
fn default_encoding() -> LocationEncoding {
    LocationEncoding::Real
}
fn default_resolution() -> usize {
    16
}
fn default_spacing() -> f64 {
    0.01
}

impl GenerationConfig {
    pub fn new(plan: SamplingPlan, objects: Vec<ObjectSpec>) -> Self {
        Self {
            plan,
            objects,
            mode: default_mode(),
            encoding: default_encoding(),
            resolution: default_resolution(),
            spacing: default_spacing(),
            seed: 0,
        }
    }
}

/// Material- and force-independent state of one stretched object.
struct Geometry {
    object_id: String,
    scale: [f64; 3],
    shape: VoxelGrid,
    mesh: HexMesh,
    /// Unit-load displacements at E = 1 GPa, indexed `[nu][location]`.
    unit: Vec<Vec<DisplacementField>>,
    force_max: f64,
}

fn load_custom(spec: &ObjectSpec, base: &Path) -> Result<Option<VoxelGrid>> {
    match &spec.grid {
        None => Ok(None),
        Some(p) => {
            let path = if p.is_absolute() { p.clone() } else { base.join(p) };
            Ok(Some(VoxelGrid::load(&path)?))
        }
    }
}

fn prepare_geometry(
    cfg: &GenerationConfig,
    spec: &ObjectSpec,
    custom: Option<&VoxelGrid>,
    scale: [f64; 3],
    nus: &[f64],
) -> Result<Geometry> {
    let plan = &cfg.plan;
    let shape = build_primitive(spec.kind, scale, cfg.resolution, cfg.spacing, custom)?;
    let mesh = build_hex_mesh(&shape, plan.location_count)?;
    let opts = SolverOptions::default();
    let direction = Vector3::from(plan.force_direction);
    let mut unit = Vec::with_capacity(nus.len());
    for &nu in nus {
        let system = ElasticSystem::assemble(&mesh, &MaterialParams::new(1.0, nu)?)?;
        let mut per_site = Vec::with_capacity(mesh.load_sites.len());
        for site in &mesh.load_sites {
            let share = direction / site.len() as f64;
            let loads: Vec<_> = site.iter().map(|&n| (n, share)).collect();
            per_site.push(system.solve(&loads, &opts)?);
        }
        unit.push(per_site);
    }
    let force_max = match plan.force_max {
        Some(f) => f,
        None => {
            let top = shape.occupied_cells().map(|c| c[2]).max().unwrap_or(0);
            let height = (top + 1) as f64 * cfg.spacing;
            let worst = unit
                .iter()
                .flat_map(|per_site| per_site.iter().zip(&mesh.load_sites))
                .map(|(u, site)| site.iter().map(|&n| u.u[n].norm()).sum::<f64>() / site.len() as f64)
                .fold(0.0, f64::max);
            if !(worst > 0.0) {
                return Err(Error::Generation(format!("object '{}' does not respond to load", spec.id)));
            }
            let softest = plan.e_range[0];
            plan.calibration_deflection * height * softest / worst
        }
    };
    Ok(Geometry {
        object_id: spec.id.clone(),
        scale,
        shape,
        mesh,
        unit,
        force_max,
    })
}

/// Target of one full-3D sample plus the pieces needed to emit its records.
struct Sample<'g> {
    geometry: &'g Geometry,
    material: MaterialParams,
    force: ForceSpec,
    target: VoxelGrid,
}

/// Runs the plan and writes `manifest.json` and `records/` under `out`.
///
/// Every (object, scale, material, force, location) combination is simulated
/// once; by linearity the displacement is a unit-load solution scaled by
/// `F / E`. Partial mode emits one record per camera pose with the rotated
/// target and the rotated undeformed shape as reference.
pub fn generate_dataset(cfg: &GenerationConfig, out: &Path) -> Result<DatasetManifest> {
    generate_dataset_with_base(cfg, out, Path::new("."))
}

/// As [`generate_dataset`], resolving relative custom-grid paths against `base`.
pub fn generate_dataset_with_base(cfg: &GenerationConfig, out: &Path, base: &Path) -> Result<DatasetManifest> {
    cfg.plan.validate()?;
    if cfg.objects.is_empty() {
        return Err(Error::Config("no objects to generate".into()));
    }
    crate::voxel::VoxelGrid::empty(cfg.resolution, cfg.spacing)?;
    let materials = sample_materials(&cfg.plan)?;
    let nus = cfg.plan.poisson_ratios();
    let poses = match cfg.mode {
        GenerationMode::Full3d => Vec::new(),
        GenerationMode::Partial => enumerate_rotations(cfg.plan.rotations_per_axis),
    };
    let per_sample = poses.len().max(1);

    let records_dir = out.join("records");
    std::fs::create_dir_all(&records_dir)?;

    let mut records: Vec<SampleRecord> = Vec::new();
    let mut skipped = 0usize;
    let mut expected = 0usize;
    for spec in &cfg.objects {
        let custom = load_custom(spec, base)?;
        for scale in cfg.plan.scales() {
            let per_geometry = materials.len() * cfg.plan.force_samples * cfg.plan.location_count * per_sample;
            expected += per_geometry;
            let geometry = match prepare_geometry(cfg, spec, custom.as_ref(), scale, &nus) {
                Ok(g) => g,
                Err(e) => {
                    log::warn!("skipping object '{}' at scale {scale:?}: {e}", spec.id);
                    skipped += per_geometry;
                    continue;
                }
            };
            for material in &materials {
                let nu_index = nus.iter().position(|&v| v == material.poissons_ratio).expect("material from plan");
                for fraction in cfg.plan.force_fractions() {
                    for location in 0..cfg.plan.location_count {
                        let force = ForceSpec::new(fraction * geometry.force_max, location, cfg.plan.force_direction)?;
                        let u = geometry.unit[nu_index][location].scaled(force.magnitude / material.youngs_modulus);
                        let target = match deform_and_revoxelize(&geometry.mesh, &u, cfg.resolution, cfg.spacing) {
                            Ok(t) if t.occupied_cells().any(|c| c[2] == 0) => t,
                            Ok(_) => {
                                log::warn!("skipping record: deformed '{}' lost ground contact", geometry.object_id);
                                skipped += per_sample;
                                continue;
                            }
                            Err(e) => {
                                log::warn!("skipping record: {e}");
                                skipped += per_sample;
                                continue;
                            }
                        };
                        let sample = Sample {
                            geometry: &geometry,
                            material: *material,
                            force,
                            target,
                        };
                        emit(cfg, &sample, &poses, &mut records)?;
                    }
                }
            }
            log::info!("object '{}' scale {scale:?}: {} records so far", spec.id, records.len());
        }
    }
    if expected > 0 && skipped as f64 / expected as f64 > MAX_SKIP_RATE {
        return Err(Error::Generation(format!(
            "{skipped} of {expected} records skipped ({:.1}% > {:.0}%)",
            100.0 * skipped as f64 / expected as f64,
            100.0 * MAX_SKIP_RATE
        )));
    }

    let splits = assign_splits(cfg.seed, records.len());
    let mut entries = Vec::with_capacity(records.len());
    let mut offset = 0u64;
    for (i, (rec, split)) in records.iter().zip(splits).enumerate() {
        let bytes = rec.to_bytes();
        let file = format!("records/{i:08}.rec");
        std::fs::write(out.join(&file), &bytes)?;
        entries.push(RecordEntry {
            file,
            offset,
            length: bytes.len() as u64,
            split,
        });
        offset += bytes.len() as u64;
    }
    let manifest = DatasetManifest {
        format_version: MANIFEST_VERSION,
        plan: cfg.plan.clone(),
        mode: cfg.mode,
        encoding: cfg.encoding,
        resolution: cfg.resolution,
        spacing: cfg.spacing as f32 as f64,
        seed: cfg.seed,
        objects: cfg.objects.clone(),
        record_count: entries.len(),
        skipped,
        records: entries,
    };
    manifest.save(out)?;
    Ok(manifest)
}

fn emit(cfg: &GenerationConfig, s: &Sample<'_>, poses: &[crate::voxel::CameraPose], out: &mut Vec<SampleRecord>) -> Result<()> {
    let g = s.geometry;
    let condition = encode_condition(&s.material, &s.force, g.force_max, cfg.encoding, cfg.plan.location_count)?;
    let metadata = |rotation: [f64; 3], reference: Option<VoxelGrid>, index: usize| RecordMetadata {
        object_id: g.object_id.clone(),
        youngs_modulus: s.material.youngs_modulus,
        poissons_ratio: s.material.poissons_ratio,
        force: s.force.magnitude,
        force_max: g.force_max,
        location_index: s.force.location_index,
        location_count: cfg.plan.location_count,
        scale: g.scale,
        rotation,
        seed: record_hash(cfg.seed, index),
        reference,
    };
    if poses.is_empty() {
        let index = out.len();
        out.push(SampleRecord {
            input_kind: InputKind::Full3d,
            input: g.shape.clone(),
            target: s.target.clone(),
            condition,
            metadata: metadata([0.0; 3], None, index),
        });
        return Ok(());
    }
    for pose in poses {
        let index = out.len();
        let partial = depth_to_partial_grid(&render_depth(&g.shape, pose))?;
        out.push(SampleRecord {
            input_kind: InputKind::Partial,
            input: partial,
            target: rotate_grid(&s.target, pose),
            condition: condition.clone(),
            metadata: metadata(pose.angles, Some(rotate_grid(&g.shape, pose)), index),
        });
    }
    Ok(())
}

/// A dataset loaded into memory.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub root: PathBuf,
    pub manifest: DatasetManifest,
    pub records: Vec<SampleRecord>,
}

impl Dataset {
    pub fn load(dir: &Path) -> Result<Self> {
        let manifest = DatasetManifest::load(dir)?;
        let mut records = Vec::with_capacity(manifest.records.len());
        for entry in &manifest.records {
            let bytes = std::fs::read(dir.join(&entry.file))?;
            if bytes.len() as u64 != entry.length {
                return Err(Error::Format(format!(
                    "{} is {} bytes, manifest says {}",
                    entry.file,
                    bytes.len(),
                    entry.length
                )));
            }
            let rec = SampleRecord::from_bytes(&bytes, manifest.encoding)?;
            if rec.input.resolution() != manifest.resolution {
                return Err(Error::Format(format!("{} has resolution {}", entry.file, rec.input.resolution())));
            }
            records.push(rec);
        }
        Ok(Self {
            root: dir.to_path_buf(),
            manifest,
            records,
        })
    }

    pub fn resolution(&self) -> usize {
        self.manifest.resolution
    }

    pub fn condition_length(&self) -> usize {
        self.manifest.encoding.condition_length(self.manifest.plan.location_count)
    }

    pub fn indices(&self, split: Split) -> Vec<usize> {
        (0..self.records.len()).filter(|&i| self.manifest.records[i].split == split).collect()
    }

    pub fn split(&self, split: Split) -> Vec<&SampleRecord> {
        self.indices(split).into_iter().map(|i| &self.records[i]).collect()
    }

    /// Copy with every condition re-encoded from metadata.
    pub fn with_encoding(&self, encoding: LocationEncoding) -> Result<Self> {
        let mut out = self.clone();
        out.manifest.encoding = encoding;
        out.records = self.records.iter().map(|r| r.reencoded(encoding)).collect::<Result<_>>()?;
        Ok(out)
    }

    /// Copy whose records map each partial input to its undeformed reference
    /// shape, for training a reconstructor.
    pub fn reconstruction_pairs(&self) -> Result<Self> {
        let mut out = self.clone();
        for rec in &mut out.records {
            rec.target = rec.metadata.reference.clone().ok_or_else(|| {
                Error::Config("reconstruction needs partial records carrying reference shapes".into())
            })?;
        }
        Ok(out)
    }
}
