use std::path::{Path, PathBuf};
use std::time::Instant;

use physnet_core::cascade::{train_direct_partial, train_reconstructor, CascadePipeline, Reconstructor};
use physnet_core::dataset::{
    encode_condition, scale_modulus, Dataset, DatasetManifest, GenerationConfig, GenerationMode, LocationEncoding, Split,
};
use physnet_core::elastic::{ForceSpec, MaterialParams, DOWN};
use physnet_core::physnet::{predict as predict_grid, ModelWeights, NetworkConfig, Sampling};
use physnet_core::trainer::{
    best_checkpoint, evaluate as evaluate_split, generate_missing, run_experiment, train as train_model, train_baseline_icgan, DatasetPreset, Example,
    ExperimentName, TrainConfig,
};
use physnet_core::voxel::{binarize, depth_to_partial_grid, iou, DepthImage, VoxelGrid};
use physnet_core::{Error, Result};
use serde::Serialize;

use crate::config::{echo_resolved, CliConfig, ConditionSpec};
use crate::plot::{render_curves, PALETTE};
use crate::{BundleArgs, Encoding, EvaluateArgs, ExperimentArgs, GenerateArgs, Mode, PredictArgs, TrainArgs, Variant};

fn encoding(e: Encoding) -> LocationEncoding {
    match e {
        Encoding::Real => LocationEncoding::Real,
        Encoding::OneHot => LocationEncoding::OneHot,
    }
}

fn required(value: Option<PathBuf>, flag: &str) -> Result<PathBuf> {
    value.ok_or_else(|| Error::Config(format!("--{flag} is required (or set `{flag}` in the config file)")))
}

/// Refuses to reuse `dir` when `marker` is already there, unless forced.
fn guard(dir: &Path, marker: &str, force: bool) -> Result<()> {
    if dir.join(marker).exists() && !force {
        return Err(Error::Config(format!(
            "{} already holds {marker}; pass --force to overwrite",
            dir.display()
        )));
    }
    Ok(())
}

pub fn generate(a: GenerateArgs) -> Result<()> {
    let file = CliConfig::load(a.config.as_deref())?;
    let resolution = a.resolution.or(file.generation.as_ref().map(|g| g.resolution)).unwrap_or(16);
    let mut cfg: GenerationConfig = match (&a.preset, file.generation) {
        (Some(p), _) => p.parse::<DatasetPreset>()?.generation_config(resolution),
        (None, Some(g)) => g,
        (None, None) => return Err(Error::Config("give a --preset or a config file with a `generation` section".into())),
    };
    cfg.resolution = resolution;
    if let Some(m) = a.mode {
        cfg.mode = match m {
            Mode::Full3d => GenerationMode::Full3d,
            Mode::Partial => GenerationMode::Partial,
        };
    }
    if let Some(s) = a.seed.or(file.seed) {
        cfg.seed = s;
    }
    if let Some(e) = a.encoding {
        cfg.encoding = encoding(e);
    }
    if let Some(r) = a.rotations {
        cfg.plan.rotations_per_axis = r;
    }
    let out = required(a.out.or(file.out), "out")?;
    guard(&out, "manifest.json", a.force)?;
    if a.force && out.join("records").exists() {
        std::fs::remove_dir_all(out.join("records"))?;
    }
    let base = a.config.as_deref().and_then(Path::parent).unwrap_or(Path::new("."));
    let started = Instant::now();
    let manifest = physnet_core::dataset::generate_dataset_with_base(&cfg, &out, base)?;
    echo_resolved(&out, &cfg)?;
    println!("manifest: {}", DatasetManifest::path(&out).display());
    println!(
        "records: {} (train {}, validation {}, test {}), skipped: {}, wall-clock: {:.2} s",
        manifest.record_count,
        manifest.count(Split::Train),
        manifest.count(Split::Validation),
        manifest.count(Split::Test),
        manifest.skipped,
        started.elapsed().as_secs_f64()
    );
    Ok(())
}

#[derive(Serialize)]
struct ResolvedTrain<'a> {
    variant: &'a str,
    dataset: &'a Path,
    network: &'a NetworkConfig,
    train: &'a TrainConfig,
}

pub fn train(a: TrainArgs) -> Result<()> {
    let file = CliConfig::load(a.config.as_deref())?;
    let dataset = required(a.dataset.or(file.dataset), "dataset")?;
    let out = required(a.out.or(file.out), "out")?;
    let mut cfg = file.train.unwrap_or_default();
    if let Some(v) = a.iterations {
        cfg.max_iterations = v;
    }
    if let Some(v) = a.learning_rate {
        cfg.learning_rate = v;
    }
    if let Some(v) = a.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = a.critic_steps {
        cfg.critic_steps = v;
    }
    if let Some(v) = a.eval_interval {
        cfg.eval_interval = v;
    }
    if let Some(v) = a.seed.or(file.seed) {
        cfg.seed = v;
    }
    cfg.validate()?;
    guard(&out, "best.ckpt", a.force)?;
    let ds = Dataset::load(&dataset)?;

    let mut net = match (&file.network, a.variant) {
        (Some(n), _) => n.clone(),
        (None, Variant::Reconstructor) => physnet_core::cascade::reconstructor_config(ds.resolution())?,
        (None, Variant::Icgan) => NetworkConfig::deterministic_baseline(ds.resolution(), ds.condition_length())?,
        (None, _) => NetworkConfig::for_resolution(ds.resolution(), ds.condition_length())?,
    };
    if let Some(b) = a.base_channels {
        net.base_channels = b;
    }
    net.validate()?;
    let variant = match a.variant {
        Variant::Physnet => "physnet",
        Variant::Icgan => "icgan",
        Variant::Reconstructor => "reconstructor",
        Variant::DirectPartial => "direct-partial",
    };
    echo_resolved(
        &out,
        &ResolvedTrain {
            variant,
            dataset: &dataset,
            network: &net,
            train: &cfg,
        },
    )?;
    println!("{}", serde_json::to_string_pretty(&net)?);
    let started = Instant::now();
    let outcome = match a.variant {
        Variant::Physnet => train_model(&ds, &net, &cfg, Some(&out))?,
        Variant::Icgan => train_baseline_icgan(&ds, &net, &cfg, Some(&out))?,
        Variant::Reconstructor => train_reconstructor(&ds, &net, &cfg, Some(&out))?.1,
        Variant::DirectPartial => train_direct_partial(&ds, &net, &cfg, Some(&out))?,
    };
    if a.variant != Variant::Reconstructor {
        if let Some(spec) = ConditionSpec::of(&ds) {
            spec.save(&out)?;
        }
    }
    println!("checkpoint: {}", best_checkpoint(&out).display());
    println!("metrics: {}", out.join("metrics.csv").display());
    match outcome.log.best() {
        Some(best) => println!(
            "best validation IOU {:.4} at iteration {}; {} iterations in {:.1} s",
            best.validation_iou,
            best.iteration,
            cfg.max_iterations,
            started.elapsed().as_secs_f64()
        ),
        None => println!("no iterations run; initial weights written"),
    }
    Ok(())
}

fn load_input(path: &Path) -> Result<VoxelGrid> {
    let bytes = std::fs::read(path)?;
    if bytes.starts_with(b"VXD1") {
        return depth_to_partial_grid(&DepthImage::from_bytes(&bytes)?);
    }
    VoxelGrid::from_bytes(&bytes)
}

/// `E,nu,F,loc` in physical units.
fn parse_condition(text: &str) -> Result<(f64, f64, f64, usize)> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    let names = ["E", "nu", "F", "loc"];
    if parts.len() != 4 {
        return Err(Error::Config(format!("--condition needs 4 values E,nu,F,loc; got '{text}'")));
    }
    let num = |i: usize| {
        parts[i]
            .parse::<f64>()
            .map_err(|_| Error::Config(format!("condition field {} = '{}' is not a number", names[i], parts[i])))
    };
    let loc = parts[3]
        .parse::<usize>()
        .map_err(|_| Error::Config(format!("condition field loc = '{}' is not a location index", parts[3])))?;
    Ok((num(0)?, num(1)?, num(2)?, loc))
}

fn condition_vector(a: &PredictArgs, model_dir: &Path, expected_len: usize) -> Result<Vec<f64>> {
    let (e, nu, f, loc) = parse_condition(&a.condition)?;
    let found = ConditionSpec::find(model_dir)?;
    let force_max = a
        .force_max
        .or(found.as_ref().map(|s| s.force_max))
        .ok_or_else(|| Error::Config("--force-max is required: no condition.json beside the model".into()))?;
    let location_count = a.locations.or(found.as_ref().map(|s| s.location_count)).unwrap_or(1);
    let enc = a
        .encoding
        .map(encoding)
        .or(found.as_ref().map(|s| s.encoding))
        .unwrap_or(LocationEncoding::Real);
    let field = |name: &str, detail: String| Error::Range(format!("condition field {name}: {detail}"));
    scale_modulus(e).map_err(|err| match err {
        Error::Range(m) => field("E", m),
        other => other,
    })?;
    if !(0.0..0.5).contains(&nu) {
        return Err(field("nu", format!("{nu} outside [0, 0.5)")));
    }
    if !(0.0..=force_max).contains(&f) {
        return Err(field("F", format!("{f} N outside [0, {force_max}]")));
    }
    if loc >= location_count {
        return Err(field("loc", format!("{loc} outside [0, {location_count})")));
    }
    let cv = encode_condition(&MaterialParams::new(e, nu)?, &ForceSpec::new(f, loc, DOWN)?, force_max, enc, location_count)?;
    let v = cv.to_vec();
    if v.len() != expected_len {
        return Err(Error::Config(format!(
            "condition encodes to {} values but the model expects {expected_len}; check --locations and --encoding",
            v.len()
        )));
    }
    Ok(v)
}

fn parent_dir(p: &Path) -> &Path {
    p.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."))
}

pub fn predict(a: PredictArgs) -> Result<()> {
    let input = load_input(&a.input)?;
    let (grid, elapsed) = if let Some(dir) = &a.pipeline {
        let pipeline = CascadePipeline::load(dir)?;
        let y = condition_vector(&a, dir, pipeline.deformation.config.condition_length)?;
        let started = Instant::now();
        let out = pipeline.predict(&input, &y)?;
        let elapsed = started.elapsed();
        if out.degenerate_alignment {
            println!("alignment: degenerate principal axes, proceeded unaligned");
        }
        if out.low_confidence {
            println!("reconstruction: low confidence");
        }
        (out.grid, elapsed)
    } else {
        let model = a.model.clone().expect("clap requires --model without --pipeline");
        let weights = ModelWeights::load(&model)?;
        let y = condition_vector(&a, parent_dir(&model), weights.config.condition_length)?;
        let sampling = a.sample_seed.map(Sampling::Stochastic).unwrap_or(Sampling::Deterministic);
        let started = Instant::now();
        let g = predict_grid(&weights, &input, &y, sampling)?;
        (g, started.elapsed())
    };
    println!("forward pass: {:.1} ms", elapsed.as_secs_f64() * 1e3);
    if let Some(out) = &a.out {
        grid.save(out)?;
        let companion = out.with_extension("binary.vxg");
        binarize(&grid, a.threshold)?.save(&companion)?;
        println!("wrote {} and {}", out.display(), companion.display());
    }
    if let Some(t) = &a.target {
        let target = binarize(&VoxelGrid::load(t)?, 0.5)?;
        println!("IOU: {:.4}", iou(&grid, &target, a.threshold)?);
    }
    Ok(())
}

pub fn evaluate(a: EvaluateArgs) -> Result<()> {
    let weights = ModelWeights::load(&a.model)?;
    let ds = Dataset::load(&a.dataset)?;
    let split = match a.split.as_str() {
        "train" => Split::Train,
        "validation" => Split::Validation,
        "test" => Split::Test,
        s => return Err(Error::Config(format!("unknown split '{s}'; use train, validation or test"))),
    };
    let examples: Vec<Example> = ds.split(split).into_iter().map(Example::from_record).collect();
    let e = evaluate_split(&weights, &examples, a.threshold)?;
    let lo = e.per_record.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = e.per_record.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    println!("{} records: mean IOU {:.4} (min {lo:.4}, max {hi:.4})", e.per_record.len(), e.mean_iou);
    Ok(())
}

pub fn bundle(a: BundleArgs) -> Result<()> {
    guard(&a.out, physnet_core::cascade::DESCRIPTOR_FILE, a.force)?;
    let reconstructor = a.reconstructor.as_deref().map(Reconstructor::load).transpose()?;
    let mut pipeline = CascadePipeline::new(reconstructor, ModelWeights::load(&a.deformation)?, a.threshold)?;
    pipeline.align = !a.no_align;
    pipeline.save(&a.out)?;
    if let Some(spec) = ConditionSpec::find(parent_dir(&a.deformation))? {
        spec.save(&a.out)?;
    }
    println!("pipeline: {}", a.out.display());
    Ok(())
}

pub fn experiment(a: ExperimentArgs) -> Result<()> {
    let name: ExperimentName = a.name.parse().map_err(|e: Error| match e {
        Error::Experiment(m) => Error::Config(m),
        other => other,
    })?;
    let file = CliConfig::load(a.config.as_deref())?;
    let mut cfg = file.experiment.unwrap_or_default();
    if let Some(d) = a.data_dir {
        cfg.data_dir = d;
    }
    if let Some(v) = a.iterations {
        cfg.train.max_iterations = v;
    }
    if let Some(s) = a.seeds {
        cfg.seeds = s;
    }
    if let Some(b) = a.base_channels {
        cfg.base_channels = b;
    }
    cfg.validate()?;
    let out = a.out.or(file.out).unwrap_or_else(|| PathBuf::from(name.as_str()));
    guard(&out, "report.json", a.force)?;
    if a.autogen {
        for p in generate_missing(name, &cfg)? {
            println!("generated dataset {} in {}", p.as_str(), cfg.dataset_dir(p).display());
        }
    }
    echo_resolved(&out, &cfg)?;
    let started = Instant::now();
    let report = run_experiment(name, &cfg)?;
    report.save(&out)?;
    let plot = out.join("curves.png");
    render_curves(&report, &plot)?;
    println!("{name}: {} iterations per run, seeds {:?}", report.iterations, report.seeds);
    for (arm, colour) in report.arms.iter().zip(PALETTE.iter().cycle()) {
        let finals: Vec<String> = arm.runs.iter().map(|r| format!("{:.4}", r.final_iou)).collect();
        println!(
            "  {:<16} mean final IOU {:.4}  per seed [{}]  plot colour rgb{:?}",
            arm.name,
            arm.mean_final_iou,
            finals.join(", "),
            colour
        );
    }
    println!("report: {}", out.join("report.json").display());
    println!("curves: {} and {}", out.join("curves.csv").display(), plot.display());
    println!("wall-clock: {:.1} s", started.elapsed().as_secs_f64());
    Ok(())
}
