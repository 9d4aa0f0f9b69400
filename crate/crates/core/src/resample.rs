//! Point-to-plane denoising, splat-based resampling and the full adaptive
//! generation pipeline.

use std::time::Instant;

use rayon::prelude::*;

use crate::cloud::{PointCloud, SplatSet, SurfaceGroup, Variant};
use crate::error::{Error, Result};
use crate::features::{self, OrientationFallback, ScaleStats, DEFAULT_K};
use crate::spatial::PointIndex;
use crate::splatgen::{self, GenConfig, GroupParams, DEFAULT_ALPHA, DEFAULT_BETA, ERROR_BOUND_TOL};
use crate::Vec3;

/// Upper bound on points added around one splat.
pub const MAX_NEW_PER_SPLAT: usize = 8;

/// New points closer than this to an existing point are dropped.
pub const DEDUP_DISTANCE: f64 = 1e-9;

/// Removes points whose unsigned distance to some neighbor's tangent plane
/// exceeds three standard deviations of that neighborhood's unsigned
/// distances. Neighborhoods with zero spread remove nothing. Points without
/// a normal do not judge their neighbors.
pub fn denoise(cloud: &PointCloud, index: &PointIndex, k: usize, radius: f64) -> Result<PointCloud> {
    let normals = cloud.normals.as_ref().ok_or(Error::MissingAttribute("normals"))?;
    let marks: Vec<Vec<usize>> = (0..cloud.len())
        .into_par_iter()
        .map(|i| {
            let Some(n) = normals[i] else { return Vec::new() };
            let p = cloud.positions[i];
            let nbrs = index.restricted_neighborhood(i, &p, k, radius);
            if nbrs.is_empty() {
                return Vec::new();
            }
            let dists: Vec<f64> = nbrs
                .iter()
                .map(|nb| n.dot(&(cloud.positions[nb.index] - p)).abs())
                .collect();
            let m = dists.len() as f64;
            let mean = dists.iter().sum::<f64>() / m;
            let sigma = (dists.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / m).sqrt();
            if sigma == 0.0 {
                return Vec::new();
            }
            nbrs.iter()
                .zip(&dists)
                .filter(|(_, &d)| d > 3.0 * sigma + ERROR_BOUND_TOL)
                .map(|(nb, _)| nb.index)
                .collect()
        })
        .collect();
    let mut remove = vec![false; cloud.len()];
    for j in marks.into_iter().flatten() {
        remove[j] = true;
    }
    let keep: Vec<usize> = (0..cloud.len()).filter(|&i| !remove[i]).collect();
    Ok(cloud.select(&keep))
}

/// Splat density within R̄, counting only splats outside the NonSurface group.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityStats {
    /// Neighbor count per splat; `None` for NonSurface splats.
    pub per_splat: Vec<Option<usize>>,
    pub mean: f64,
    pub radius: f64,
}

fn eligible(group: SurfaceGroup) -> bool {
    group != SurfaceGroup::NonSurface
}

pub fn compute_density(set: &SplatSet, radius: f64) -> Result<DensityStats> {
    if set.is_empty() {
        return Err(Error::Empty("splat set"));
    }
    let ids: Vec<usize> = (0..set.len()).filter(|&i| eligible(set.splats[i].group)).collect();
    let centers: Vec<Vec3> = ids.iter().map(|&i| set.splats[i].center).collect();
    let mut per_splat = vec![None; set.len()];
    if !centers.is_empty() {
        let index = PointIndex::new(&centers);
        let counts: Vec<usize> = (0..centers.len())
            .into_par_iter()
            .map(|e| index.count_within(&centers[e], radius, Some(e)))
            .collect();
        for (e, &i) in ids.iter().enumerate() {
            per_splat[i] = Some(counts[e]);
        }
    }
    let total: usize = per_splat.iter().flatten().sum();
    let mean = if ids.is_empty() { 0.0 } else { total as f64 / ids.len() as f64 };
    Ok(DensityStats {
        per_splat,
        mean,
        radius,
    })
}

/// A point created by resampling: the midpoint of splat `source` and splat
/// `partner`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewPoint {
    pub position: Vec3,
    pub source: usize,
    pub partner: usize,
}

fn same_splat_class(set: &SplatSet, i: usize, j: usize, variant: Variant) -> bool {
    let (a, b) = (&set.splats[i], &set.splats[j]);
    match (variant, a.label, b.label) {
        (Variant::AdaSemantic, Some(la), Some(lb)) => la == lb,
        _ => a.group == b.group,
    }
}

/// Midpoints proposed for every under-dense splat, in splat order, before
/// deduplication.
pub fn resample_points(set: &SplatSet, density: &DensityStats, variant: Variant, beta: f64) -> Vec<NewPoint> {
    let ids: Vec<usize> = (0..set.len()).filter(|&i| density.per_splat[i].is_some()).collect();
    if ids.is_empty() {
        return Vec::new();
    }
    let centers: Vec<Vec3> = ids.iter().map(|&i| set.splats[i].center).collect();
    let index = PointIndex::new(&centers);
    let proposals: Vec<Vec<NewPoint>> = (0..ids.len())
        .into_par_iter()
        .map(|e| {
            let i = ids[e];
            let mut count = density.per_splat[i].unwrap_or(0) as f64;
            if count >= density.mean {
                return Vec::new();
            }
            let si = &set.splats[i];
            let mut nbrs = index.within(&centers[e], density.radius, Some(e));
            nbrs.sort_by(|a, b| b.dist2.total_cmp(&a.dist2).then(a.index.cmp(&b.index)));
            let mut out = Vec::new();
            for nb in nbrs {
                if count >= density.mean || out.len() >= MAX_NEW_PER_SPLAT {
                    break;
                }
                let j = ids[nb.index];
                let sj = &set.splats[j];
                if !same_splat_class(set, i, j, variant) || si.normal.dot(&sj.normal) <= beta {
                    continue;
                }
                out.push(NewPoint {
                    position: (si.center + sj.center) * 0.5,
                    source: i,
                    partner: j,
                });
                count += 1.0;
            }
            out
        })
        .collect();
    proposals.into_iter().flatten().collect()
}

/// Appends resampled points to `cloud`. Each new point copies the
/// attributes of the point that seeded its source splat; its normal is the
/// source splat's normal.
pub fn resample_cloud(
    cloud: &PointCloud,
    set: &SplatSet,
    density: &DensityStats,
    variant: Variant,
    beta: f64,
) -> Result<(PointCloud, Vec<NewPoint>)> {
    let proposals = resample_points(set, density, variant, beta);
    let seeds = match (&set.seeds, proposals.is_empty()) {
        (_, true) => return Ok((cloud.clone(), Vec::new())),
        (Some(s), false) => s,
        (None, false) => {
            return Err(Error::MissingAttribute("splat seeds (the set must come from this cloud)"));
        }
    };
    if seeds.len() != set.len() || seeds.iter().any(|&s| s >= cloud.len()) {
        return Err(Error::Structural("splat seeds do not match the cloud".into()));
    }

    let mut all = cloud.positions.clone();
    all.extend(proposals.iter().map(|p| p.position));
    let index = PointIndex::new(&all);
    let mut kept_new = Vec::new();
    let mut alive = vec![true; all.len()];
    for (o, p) in proposals.iter().enumerate() {
        let me = cloud.len() + o;
        let dup = index
            .within(&p.position, DEDUP_DISTANCE, Some(me))
            .iter()
            .any(|nb| nb.index < me && alive[nb.index]);
        if dup {
            alive[me] = false;
        } else {
            kept_new.push(*p);
        }
    }

    let sources: Vec<usize> = kept_new.iter().map(|p| seeds[p.source]).collect();
    let mut extra = cloud.select(&sources);
    extra.positions = kept_new.iter().map(|p| p.position).collect();
    if let Some(normals) = extra.normals.as_mut() {
        for (n, p) in normals.iter_mut().zip(&kept_new) {
            *n = Some(set.splats[p.source].normal);
        }
    }
    let mut out = cloud.clone();
    out.append(&extra)?;
    Ok((out, kept_new))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOptions {
    pub variant: Variant,
    pub k: usize,
    pub alpha: f64,
    pub beta: f64,
    pub fallback: OrientationFallback,
    pub denoise: bool,
    pub resample: bool,
    pub overrides: Vec<(SurfaceGroup, GroupParams)>,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            variant: Variant::AdaSemantic,
            k: DEFAULT_K,
            alpha: DEFAULT_ALPHA,
            beta: DEFAULT_BETA,
            fallback: OrientationFallback::default(),
            denoise: true,
            resample: true,
            overrides: Vec::new(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub splats: SplatSet,
    /// The cloud the final splats were generated from, with normals (and
    /// descriptor groups for the descriptor variant).
    pub cloud: PointCloud,
    pub stats: ScaleStats,
    pub removed_points: usize,
    pub added_points: usize,
    /// Splat count of the pass before resampling.
    pub first_pass_splats: usize,
    pub timings: Vec<(String, f64)>,
}

struct Timer(Vec<(String, f64)>);

impl Timer {
    fn run<T>(&mut self, stage: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let out = f()?;
        self.0.push((stage.to_string(), start.elapsed().as_secs_f64()));
        Ok(out)
    }
}

/// Normals, scale statistics, groups (descriptor variant) and splats.
fn generation_pass(cloud: &PointCloud, opts: &PipelineOptions, timer: &mut Timer) -> Result<(PointCloud, PointIndex, SplatSet, ScaleStats)> {
    let a = timer.run("features", || features::analyze(cloud, opts.k, opts.fallback))?;
    let prepared = match opts.variant {
        Variant::AdaDescr => features::with_descriptor_groups(&a.cloud, &features::groups_from_frames(&a.frames)),
        _ => a.cloud,
    };
    let config = GenConfig {
        variant: opts.variant,
        alpha: opts.alpha,
        beta: opts.beta,
        stats: a.stats,
        overrides: opts.overrides.clone(),
    };
    let set = timer.run("generate", || splatgen::generate_splats(&prepared, &a.index, &config))?;
    Ok((prepared, a.index, set, a.stats))
}

/// Denoise, generate, resample once, then regenerate on the augmented cloud.
pub fn run_adaptive_pipeline(cloud: &PointCloud, opts: &PipelineOptions) -> Result<PipelineOutput> {
    if opts.variant == Variant::AdaSemantic && cloud.groups.is_none() {
        return Err(Error::MissingAttribute("groups (map labels to groups first)"));
    }
    let mut timer = Timer(Vec::new());
    let mut work = cloud.clone();
    let mut removed_points = 0;
    if opts.denoise {
        let a = timer.run("features", || features::analyze(&work, opts.k, opts.fallback))?;
        work = timer.run("denoise", || denoise(&a.cloud, &a.index, opts.k, a.stats.r_bar))?;
        removed_points = cloud.len() - work.len();
        log::info!("denoise removed {removed_points} of {} points", cloud.len());
    }

    let (prepared, _, set, stats) = generation_pass(&work, opts, &mut timer)?;
    let first_pass_splats = set.len();
    if !opts.resample {
        let mut splats = set;
        splats.set_meta("resampled", false);
        splats.set_meta("denoised", opts.denoise);
        return Ok(PipelineOutput {
            splats,
            cloud: prepared,
            stats,
            removed_points,
            added_points: 0,
            first_pass_splats,
            timings: timer.0,
        });
    }

    let density = timer.run("density", || compute_density(&set, stats.r_bar))?;
    let (augmented, added) = timer.run("resample", || resample_cloud(&prepared, &set, &density, opts.variant, opts.beta))?;
    log::info!("resampling added {} points around {} splats", added.len(), set.len());
    let (final_cloud, _, mut splats, stats) = generation_pass(&augmented, opts, &mut timer)?;
    splats.set_meta("resampled", true);
    splats.set_meta("denoised", opts.denoise);
    splats.set_meta("e_bar_recomputed_after_denoise", opts.denoise);
    Ok(PipelineOutput {
        splats,
        cloud: final_cloud,
        stats,
        removed_points,
        added_points: added.len(),
        first_pass_splats,
        timings: timer.0,
    })
}
