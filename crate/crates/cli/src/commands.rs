use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use anyhow::Result;
use log::info;
use splatsim_core::cloud::{load_cloud, load_splats, map_semantic_groups, save_cloud, save_splats, CloudFormat};
use splatsim_core::evaluate::{c2c_distance, c2c_per_class, c2c_to_plane, coverage_fraction, density_stats, EvalReport};
use splatsim_core::features::OrientationFallback;
use splatsim_core::lidar::{
    load_trajectory, sensor_preset, simulate_trajectory, splat_dynamic_frames, MultiDepth, Pose, ScanOptions,
    SplatScene,
};
use splatsim_core::resample::{run_adaptive_pipeline, PipelineOptions, PipelineOutput};
use splatsim_core::splatgen::GroupParams;
use splatsim_core::{synth, GroupMapping, PointCloud, SplatSet, SurfaceGroup, Variant, Vec3};

use crate::args::{
    EvalArgs, GenArgs, InputArgs, PipelineArgs, ResampleArgs, Scene, SimulateArgs, SplatArgs, SynthArgs, VariantArg,
};
use crate::failure::{Failure, Stage};

/// Shared settings every subcommand may need.
#[derive(Debug, Clone, Default)]
pub struct Context {
    pub seed: u64,
    pub sensor_fields: Vec<(String, String)>,
}

fn variant(v: VariantArg) -> Variant {
    match v {
        VariantArg::Basic => Variant::Basic,
        VariantArg::AdaSemantic => Variant::AdaSemantic,
        VariantArg::AdaDescr => Variant::AdaDescr,
    }
}

fn invalid(stage: &'static str, message: impl Into<String>) -> Failure {
    Failure::new(stage, "invalid_parameter", message)
}

/// Checks the generation flags before any file is read.
fn pipeline_options(gen: &GenArgs, denoise: bool, resample: bool) -> Result<PipelineOptions, Failure> {
    if gen.k == 0 {
        return Err(invalid("config", "k must be at least 1"));
    }
    if !(0.0..=1.0).contains(&gen.alpha) {
        return Err(invalid("config", format!("alpha must lie in [0, 1], got {}", gen.alpha)));
    }
    if !gen.beta.is_finite() {
        return Err(invalid("config", "beta must be finite"));
    }
    let mut overrides = Vec::new();
    for entry in &gen.group_scale {
        let (g, s) = entry
            .split_once('=')
            .ok_or_else(|| invalid("config", format!("group scale '{entry}' is not GROUP=SCALE")))?;
        let group = g.trim().parse::<SurfaceGroup>().stage("config")?;
        let scale: f64 = s.trim().parse().map_err(|_| invalid("config", format!("group scale '{entry}' is not a number")))?;
        let params = GroupParams::uniform(scale);
        params.validate().stage("config")?;
        overrides.retain(|(og, _)| *og != group);
        overrides.push((group, params));
    }
    let fallback = match &gen.viewpoint {
        Some(v) => OrientationFallback::Viewpoint(Vec3::new(v[0], v[1], v[2])),
        None => OrientationFallback::Up,
    };
    Ok(PipelineOptions {
        variant: variant(gen.variant),
        k: gen.k,
        alpha: gen.alpha,
        beta: gen.beta,
        fallback,
        denoise,
        resample,
        overrides,
    })
}

/// Input cloud split into the static scene and per-frame dynamic objects.
struct Loaded {
    cloud: PointCloud,
    dynamic: SplatSet,
}

fn load_input(input: &InputArgs) -> Result<Loaded, Failure> {
    let format = CloudFormat::from_path(&input.input);
    let cloud = load_cloud(&input.input, format, input.labels.as_deref()).stage("load")?;
    info!("loaded {} points from {}", cloud.len(), input.input.display());
    let Some(path) = &input.mapping else {
        return Ok(Loaded {
            cloud,
            dynamic: SplatSet::default(),
        });
    };
    let mapping = GroupMapping::load(path).stage("mapping")?;
    let split = map_semantic_groups(&cloud, &mapping).stage("mapping")?;
    let dynamic = if split.dynamic.is_empty() {
        SplatSet::default()
    } else {
        splat_dynamic_frames(&split.dynamic)
    };
    info!("{} static points, {} dynamic splats", split.static_cloud.len(), dynamic.len());
    Ok(Loaded {
        cloud: split.static_cloud,
        dynamic,
    })
}

fn run_pipeline(cloud: &PointCloud, opts: &PipelineOptions) -> Result<PipelineOutput, Failure> {
    let out = run_adaptive_pipeline(cloud, opts).stage("pipeline")?;
    info!(
        "{} splats ({} before resampling), {} points removed, {} added",
        out.splats.len(),
        out.first_pass_splats,
        out.removed_points,
        out.added_points
    );
    Ok(out)
}

fn with_dynamic(splats: SplatSet, dynamic: &SplatSet) -> SplatSet {
    if dynamic.is_empty() {
        splats
    } else {
        splats.concat(dynamic)
    }
}

pub fn splat(args: &SplatArgs) -> Result<()> {
    let opts = pipeline_options(&args.gen, false, false)?;
    let input = load_input(&args.input)?;
    let out = run_pipeline(&input.cloud, &opts)?;
    save_splats(&with_dynamic(out.splats, &input.dynamic), &args.output).stage("write")?;
    Ok(())
}

pub fn resample(args: &ResampleArgs) -> Result<()> {
    let opts = pipeline_options(&args.gen, !args.no_denoise, true)?;
    let input = load_input(&args.input)?;
    let out = run_pipeline(&input.cloud, &opts)?;
    save_cloud(&out.cloud, &args.output).stage("write")?;
    Ok(())
}

fn timings_csv(timings: &[(String, f64)]) -> String {
    let mut out = String::from("stage,seconds\n");
    for (stage, s) in timings {
        let _ = writeln!(out, "{stage},{s}");
    }
    out
}

pub fn pipeline(args: &PipelineArgs) -> Result<()> {
    let opts = pipeline_options(&args.gen, !args.no_denoise, !args.no_resample)?;
    let input = load_input(&args.input)?;
    let out = run_pipeline(&input.cloud, &opts)?;
    if let Some(path) = &args.cloud_out {
        save_cloud(&out.cloud, path).stage("write")?;
    }
    if let Some(path) = &args.timings_out {
        std::fs::write(path, timings_csv(&out.timings)).stage("write")?;
    }
    save_splats(&with_dynamic(out.splats, &input.dynamic), &args.output).stage("write")?;
    Ok(())
}

pub fn simulate(args: &SimulateArgs, ctx: &Context) -> Result<()> {
    let mut model = sensor_preset(&args.sensor).stage("config")?;
    for (field, value) in &ctx.sensor_fields {
        model.set_field(field, value).stage("config")?;
    }
    for entry in &args.sensor_set {
        let (field, value) = entry
            .split_once('=')
            .ok_or_else(|| invalid("config", format!("sensor override '{entry}' is not FIELD=VALUE")))?;
        model.set_field(field.trim(), value).stage("config")?;
    }
    if let Some(noise) = args.noise {
        model.noise_sigma = noise;
    }
    model.validate().stage("config")?;
    if !model.noise_sigma.is_finite() {
        return Err(invalid("config", "noise must be finite and non-negative").into());
    }
    if args.multi_depth && (args.depth == 0 || !(args.depth_gap > 0.0)) {
        return Err(invalid("config", "multi-depth needs depth ≥ 1 and a positive gap").into());
    }

    let poses = match &args.trajectory {
        Some(path) => load_trajectory(path).stage("trajectory")?,
        None => vec![Pose::at(Vec3::new(args.pose[0], args.pose[1], args.pose[2]), 0)],
    };
    let set = load_splats(&args.splats).stage("load")?;
    info!("{} splats, {} poses, sensor {}", set.len(), poses.len(), model.name);
    let scene = SplatScene::new(set);
    let opts = ScanOptions {
        noise_sigma: model.noise_sigma,
        multi_depth: args.multi_depth.then_some(MultiDepth {
            depth: args.depth,
            max_gap: args.depth_gap,
        }),
        frame_filter: None,
        seed: ctx.seed,
    };
    let out = simulate_trajectory(&scene, &model, &poses, &opts).stage("simulate")?;
    std::fs::create_dir_all(&args.out_dir).stage("write")?;
    for scan in &out.scans {
        let path = args.out_dir.join(format!("scan_{:06}.ply", scan.pose.frame));
        save_cloud(&scan.to_cloud(), &path).stage("write")?;
        info!("frame {}: {} returns of {} rays", scan.pose.frame, scan.len(), scan.ray_count);
    }
    save_cloud(&out.accumulated, &args.out_dir.join("accumulated.ply")).stage("write")?;
    Ok(())
}

fn load_any(path: &Path) -> Result<PointCloud, Failure> {
    load_cloud(path, CloudFormat::from_path(path), None).stage("load")
}

pub fn eval(args: &EvalArgs) -> Result<()> {
    if let Some(r) = args.density_radius {
        if !(r > 0.0) {
            return Err(invalid("config", "density radius must be positive").into());
        }
    }
    let mut timings = Vec::new();
    let mut notes = Vec::new();
    let mut clock = Instant::now();
    let mut lap = |name: &str, timings: &mut Vec<(String, f64)>| {
        timings.push((name.to_string(), clock.elapsed().as_secs_f64()));
        clock = Instant::now();
    };

    let sim = load_any(&args.sim)?;
    let ori = args.ori.as_deref().map(load_any).transpose()?;
    lap("load", &mut timings);

    let c2c_mean = match (&args.ideal_plane, &ori) {
        (Some(p), _) => {
            notes.push(("c2c_reference".to_string(), format!("plane {},{},{},{}", p[0], p[1], p[2], p[3])));
            c2c_to_plane(&sim, Vec3::new(p[0], p[1], p[2]), p[3]).stage("eval")?
        }
        (None, Some(ori)) => {
            notes.push(("c2c_reference".to_string(), "original cloud".to_string()));
            c2c_distance(&sim, ori).stage("eval")?
        }
        (None, None) => unreachable!("clap requires --ori without --ideal-plane"),
    };
    lap("c2c", &mut timings);

    let per_class = if args.classes.is_empty() {
        Vec::new()
    } else {
        let ori = ori.as_ref().ok_or_else(|| invalid("eval", "per-class C2C needs --ori"))?;
        notes.push(("per_class_protocol".to_string(), "simulated class c vs original class c".to_string()));
        c2c_per_class(&sim, ori, &args.classes).stage("eval")?
    };
    lap("per_class", &mut timings);

    let density = args.density_radius.map(|r| density_stats(&sim, r)).transpose().stage("eval")?;
    lap("density", &mut timings);

    let (coverage, primitives) = match &args.splats {
        Some(path) => {
            let set = load_splats(path).stage("load")?;
            let coverage = ori
                .as_ref()
                .map(|ori| coverage_fraction(&set, ori, args.coverage_tol))
                .transpose()
                .stage("eval")?;
            (coverage, Some(set.len()))
        }
        None => (None, None),
    };
    lap("coverage", &mut timings);

    let report = EvalReport {
        c2c_mean,
        evaluated_points: sim.len(),
        per_class,
        density,
        coverage,
        primitives,
        timings,
        notes,
    };
    std::fs::create_dir_all(&args.out_dir).stage("write")?;
    std::fs::write(args.out_dir.join("report.csv"), report.to_csv()).stage("write")?;
    std::fs::write(args.out_dir.join("timings.csv"), report.timings_csv()).stage("write")?;
    let summary = report.summary();
    std::fs::write(args.out_dir.join("summary.txt"), &summary).stage("write")?;
    print!("{summary}");
    Ok(())
}

fn mapping_text(mapping: &GroupMapping) -> String {
    let mut out = String::new();
    for (class, group) in &mapping.groups {
        let dynamic = if mapping.is_dynamic(*class) { " dynamic" } else { "" };
        let _ = writeln!(out, "{class} {group}{dynamic}");
    }
    out
}

pub fn synth(args: &SynthArgs, ctx: &Context) -> Result<()> {
    if !(args.spacing > 0.0) || !(args.size > 0.0) {
        return Err(invalid("synth", "size and spacing must be positive").into());
    }
    let cloud = match args.scene {
        Scene::Plane => {
            let per_side = (args.size / args.spacing).round() as usize + 1;
            synth::plane(args.size, per_side, args.sigma, ctx.seed, Vec3::new(0.0, 0.0, args.sensor_height))
        }
        Scene::Dihedral => synth::dihedral(args.size, args.spacing, args.sigma, ctx.seed),
        Scene::Pole => synth::pole(&synth::PoleSpec {
            ground_spacing: args.spacing,
            sigma: args.sigma,
            seed: ctx.seed,
            ..Default::default()
        }),
        Scene::ScanLines => synth::scan_lines(&synth::ScanLineSpec {
            sigma: args.sigma,
            seed: ctx.seed,
            ..Default::default()
        }),
    }
    .stage("synth")?;
    info!("{} points", cloud.len());
    save_cloud(&cloud, &args.output).stage("write")?;
    if let Some(path) = &args.mapping_out {
        std::fs::write(path, mapping_text(&synth::default_mapping())).stage("write")?;
    }
    Ok(())
}
