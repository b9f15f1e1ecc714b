use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use pcdiff_core::denoiser::{self, Architecture, DenoiserParams, Model, TrainConfig, TrainingRecord};
use pcdiff_core::diffusion::{ScheduleSpec, DEFAULT_BETA_END, DEFAULT_BETA_START, REFERENCE_STEPS};
use pcdiff_core::implant::{ensemble_stats, generate_implant};
use pcdiff_core::pipeline::{self, PipelineConfig};
use pcdiff_core::surface::write_point_cloud_ply;
use pcdiff_core::synthetic::{self, DatasetManifest, PhantomSpec, Variation};
use pcdiff_core::volume::{load_binary, save_volume};
use pcdiff_core::{metrics, BinaryGrid};

use crate::record::{manifest_path, Recorder};
use crate::{CompleteArgs, EvalArgs, ImplantArgs, ScheduleArgs, SynthArgs, TrainArgs};

pub const DATASET_MANIFEST: &str = "dataset.json";

fn flags<T: serde::Serialize>(args: &T) -> serde_json::Value {
    serde_json::to_value(args).expect("flags serialize")
}

fn positive(name: &str, v: usize) -> Result<()> {
    if v == 0 {
        bail!("--{name} must be positive");
    }
    Ok(())
}

fn distinct(input: &Path, output: &Path) -> Result<()> {
    if input == output {
        bail!("input and output paths must differ: {}", input.display());
    }
    Ok(())
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("{}: cannot create directory", dir.display()))
}

fn triple_dir(root: &Path, i: usize) -> PathBuf {
    root.join(format!("triple_{i:04}"))
}

fn schedule_spec(steps: usize, beta_start: Option<f64>, beta_end: Option<f64>) -> Result<ScheduleSpec> {
    positive("timesteps", steps)?;
    let scale = REFERENCE_STEPS as f64 / steps as f64;
    let spec = ScheduleSpec {
        steps,
        beta_start: beta_start.unwrap_or(DEFAULT_BETA_START * scale),
        beta_end: beta_end.unwrap_or(DEFAULT_BETA_END * scale),
    };
    spec.build()?;
    Ok(spec)
}

pub fn synth(args: &SynthArgs) -> Result<()> {
    positive("count", args.count)?;
    create_dir(&args.output)?;
    let mut rec = Recorder::new("synth", flags(args), Some(args.seed));
    let (phantoms, manifest) =
        synthetic::make_dataset(args.count, &PhantomSpec::default(), &Variation::default(), args.seed)?;
    for (i, p) in phantoms.iter().enumerate() {
        let dir = triple_dir(&args.output, i);
        create_dir(&dir)?;
        for (name, grid) in [("complete", &p.complete), ("defective", &p.defective), ("implant", &p.implant)] {
            let path = dir.join(format!("{name}.json"));
            save_volume(grid, &path)?;
            rec.output(&path)?;
        }
    }
    let path = args.output.join(DATASET_MANIFEST);
    fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")
        .with_context(|| format!("{}: cannot write", path.display()))?;
    rec.output(&path)?;
    rec.write(&manifest_path(&args.output))?;
    println!("wrote {} triples to {}", phantoms.len(), args.output.display());
    Ok(())
}

/// Training clouds drawn per triple.
const CLOUDS_PER_TRIPLE: usize = 1;

pub fn train(args: &TrainArgs) -> Result<()> {
    positive("points-n", args.points_n)?;
    positive("points-m", args.points_m)?;
    positive("batch", args.batch)?;
    distinct(&args.input, &args.output)?;
    let ScheduleArgs {
        timesteps,
        beta_start,
        beta_end,
    } = args.schedule;
    let spec = schedule_spec(timesteps, beta_start, beta_end)?;
    let mut rec = Recorder::new("train", flags(args), Some(args.seed));

    let manifest_file = args.input.join(DATASET_MANIFEST);
    let text = fs::read_to_string(&manifest_file)
        .with_context(|| format!("{}: cannot read dataset manifest", manifest_file.display()))?;
    let dataset: DatasetManifest = serde_json::from_str(&text)
        .with_context(|| format!("{}: malformed dataset manifest", manifest_file.display()))?;
    rec.input(&manifest_file)?;
    let mut volumes = Vec::with_capacity(dataset.specs.len());
    for i in 0..dataset.specs.len() {
        let dir = triple_dir(&args.input, i);
        let (d, m) = (dir.join("defective.json"), dir.join("implant.json"));
        volumes.push((load_binary(&d)?, load_binary(&m)?));
        rec.input(&d)?;
        rec.input(&m)?;
    }
    let pairs: Vec<(&BinaryGrid, &BinaryGrid)> = volumes.iter().map(|(d, m)| (d, m)).collect();
    let clouds = pipeline::training_set(&pairs, args.points_n, args.points_m, CLOUDS_PER_TRIPLE, args.seed)?;

    let config = TrainConfig {
        learning_rate: args.lr,
        batch_size: args.batch,
        epochs: args.epochs,
        ..Default::default()
    };
    let sched = spec.build()?;
    let init = DenoiserParams::new(Architecture::toy(), args.seed)?;
    let (params, history) = denoiser::fit(&init, &clouds, &config, &sched, args.seed)?;
    let model = Model {
        params,
        schedule: Some(spec),
        training: Some(TrainingRecord {
            config,
            seed: args.seed,
            examples: clouds.len(),
            loss_history: history.clone(),
        }),
    };
    denoiser::save_model(&model, &args.output)?;
    rec.output(&args.output)?;
    rec.write(&manifest_path(&args.output))?;
    match (history.first(), history.last()) {
        (Some(a), Some(b)) => println!("trained {} epochs on {} clouds: loss {a:.4} -> {b:.4}", history.len(), clouds.len()),
        _ => println!("no epochs run; wrote the initial parameters"),
    }
    Ok(())
}

pub fn complete(args: &CompleteArgs) -> Result<()> {
    positive("points-n", args.points_n)?;
    positive("points-m", args.points_m)?;
    positive("ensemble", args.ensemble)?;
    if let Some(g) = args.grid {
        positive("grid", g)?;
    }
    distinct(&args.input, &args.output)?;
    let mut rec = Recorder::new("complete", flags(args), Some(args.seed));
    let s_d = load_binary(&args.input)?;
    rec.input(&args.input)?;
    let model = denoiser::load_model(&args.model)?;
    rec.input(&args.model)?;
    let spec = match (args.timesteps, model.schedule) {
        (None, Some(s)) if args.beta_start.is_none() && args.beta_end.is_none() => s,
        (steps, s) => schedule_spec(
            steps.or(s.map(|s| s.steps)).unwrap_or(REFERENCE_STEPS),
            args.beta_start,
            args.beta_end,
        )?,
    };
    let sched = spec.build()?;
    let config = PipelineConfig {
        points_n: args.points_n,
        points_m: args.points_m,
        grid: args.grid,
        ..Default::default()
    };
    let (members, stats) =
        pipeline::complete_ensemble(&s_d, &model.params, &sched, &config, args.seed, args.ensemble)?;
    create_dir(&args.output)?;
    for (i, m) in members.iter().enumerate() {
        let dir = args.output.join(format!("member_{i}"));
        create_dir(&dir)?;
        let (completed, implant, cloud) = (dir.join("completed.json"), dir.join("implant.json"), dir.join("cloud.ply"));
        save_volume(&m.completed, &completed)?;
        save_volume(&m.implant, &implant)?;
        write_point_cloud_ply(&m.cloud_mm, &cloud)?;
        for p in [&completed, &implant, &cloud] {
            rec.output(p)?;
        }
    }
    let (mean, var, majority) = (
        args.output.join("mean.json"),
        args.output.join("variance.json"),
        args.output.join("mean_implant.json"),
    );
    save_volume(&stats.mean, &mean)?;
    save_volume(&stats.variance, &var)?;
    save_volume(&stats.mean_implant, &majority)?;
    for p in [&mean, &var, &majority] {
        rec.output(p)?;
    }
    rec.write(&manifest_path(&args.output))?;
    println!(
        "completed {} member(s); mean implant has {} voxels",
        members.len(),
        stats.mean_implant.count_ones()
    );
    Ok(())
}

pub fn implant(args: &ImplantArgs) -> Result<()> {
    let mut rec = Recorder::new("implant", flags(args), None);
    let s_d = load_binary(&args.reference)?;
    rec.input(&args.reference)?;
    let mut implants = Vec::with_capacity(args.input.len());
    for path in &args.input {
        distinct(path, &args.output)?;
        let s_c = load_binary(path)?;
        rec.input(path)?;
        implants.push(generate_implant(&s_c, &s_d)?);
    }
    let stats = ensemble_stats(&implants)?;
    create_dir(&args.output)?;
    for (i, g) in implants.iter().enumerate() {
        let p = args.output.join(format!("implant_{i}.json"));
        save_volume(g, &p)?;
        rec.output(&p)?;
    }
    for (name, grid) in [("mean", &stats.mean), ("variance", &stats.variance)] {
        let p = args.output.join(format!("{name}.json"));
        save_volume(grid, &p)?;
        rec.output(&p)?;
    }
    let p = args.output.join("mean_implant.json");
    save_volume(&stats.mean_implant, &p)?;
    rec.output(&p)?;
    rec.write(&manifest_path(&args.output))?;
    println!("{} implant(s); mean implant has {} voxels", implants.len(), stats.mean_implant.count_ones());
    Ok(())
}

pub fn eval(args: &EvalArgs) -> Result<()> {
    if !(args.tolerance_mm > 0.0) {
        bail!("--tolerance-mm must be positive");
    }
    let pred = load_binary(&args.input)?;
    let truth = load_binary(&args.reference)?;
    let report = metrics::evaluate(&pred, &truth, args.tolerance_mm)?;
    let json = serde_json::to_string_pretty(&report)?;
    if let Some(out) = &args.output {
        distinct(&args.input, out)?;
        let mut rec = Recorder::new("eval", flags(args), None);
        rec.input(&args.input)?;
        rec.input(&args.reference)?;
        fs::write(out, json.clone() + "\n").with_context(|| format!("{}: cannot write", out.display()))?;
        rec.output(out)?;
        rec.write(&manifest_path(out))?;
    }
    println!("{json}");
    Ok(())
}
