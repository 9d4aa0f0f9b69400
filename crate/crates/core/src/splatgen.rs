//! Splat growth: Basic, semantic-adaptive and descriptor-adaptive variants.

use rayon::prelude::*;

use crate::cloud::{PointCloud, Splat, SplatSet, SurfaceGroup, Variant};
use crate::error::{Error, Result};
use crate::features::ScaleStats;
use crate::spatial::PointIndex;

pub const DEFAULT_ALPHA: f64 = 0.2;
pub const DEFAULT_BETA: f64 = 0.6;

/// Absolute slack on the error-bound test so that exactly planar input,
/// whose residuals are pure rounding noise, still grows splats.
pub const ERROR_BOUND_TOL: f64 = 1e-9;

/// Seeds evaluated speculatively per parallel batch.
const SEED_BATCH: usize = 512;

/// Multipliers applied to (K, R̄, Ē) for one surface group.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupParams {
    pub k_scale: f64,
    pub r_scale: f64,
    pub e_scale: f64,
}

impl GroupParams {
    pub const fn uniform(s: f64) -> Self {
        GroupParams {
            k_scale: s,
            r_scale: s,
            e_scale: s,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if [self.k_scale, self.r_scale, self.e_scale]
            .iter()
            .all(|s| s.is_finite() && *s > 0.0)
        {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("group scales must be positive: {self:?}")))
        }
    }
}

pub fn group_params(group: SurfaceGroup, variant: Variant) -> Result<GroupParams> {
    use SurfaceGroup::*;
    let s = match (variant, group) {
        (Variant::Basic, _) => 1.0,
        (Variant::AdaSemantic, Ground) => 3.0,
        (Variant::AdaSemantic, Surface) => 1.0,
        (Variant::AdaDescr, GroundSurface) => 2.0,
        (_, Linear) => 0.33,
        (_, NonSurface) => 0.25,
        (v, g) => {
            return Err(Error::Config(format!("group {g} is not used by the {v} variant")));
        }
    };
    Ok(GroupParams::uniform(s))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenConfig {
    pub variant: Variant,
    pub alpha: f64,
    pub beta: f64,
    pub stats: ScaleStats,
    /// Per-group overrides of the default scale table.
    pub overrides: Vec<(SurfaceGroup, GroupParams)>,
}

impl GenConfig {
    pub fn new(variant: Variant, stats: ScaleStats) -> Self {
        GenConfig {
            variant,
            alpha: DEFAULT_ALPHA,
            beta: DEFAULT_BETA,
            stats,
            overrides: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidParameter(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        if !self.beta.is_finite() {
            return Err(Error::InvalidParameter("beta must be finite".into()));
        }
        if self.stats.k == 0 || !(self.stats.r_bar > 0.0) || !(self.stats.e_bar >= 0.0) {
            return Err(Error::InvalidParameter(format!("invalid scale statistics {:?}", self.stats)));
        }
        for (_, p) in &self.overrides {
            p.validate()?;
        }
        Ok(())
    }

    pub fn params(&self, group: SurfaceGroup) -> Result<GroupParams> {
        match self.overrides.iter().find(|(g, _)| *g == group) {
            Some((_, p)) => Ok(*p),
            None => group_params(group, self.variant),
        }
    }

    /// Group-scaled (K, R̄, Ē).
    pub fn scaled(&self, group: SurfaceGroup) -> Result<(usize, f64, f64)> {
        let p = self.params(group)?;
        let k = ((p.k_scale * self.stats.k as f64).round() as usize).max(1);
        Ok((k, p.r_scale * self.stats.r_bar, p.e_scale * self.stats.e_bar))
    }
}

/// Result of growing one splat from a seed.
#[derive(Debug, Clone, PartialEq)]
pub struct Growth {
    pub splat: Splat,
    /// Neighbors accepted during growth, in ascending distance.
    pub included: Vec<usize>,
    /// Included points inside the α-sphere; they no longer seed.
    pub consumed: Vec<usize>,
}

/// Group used to scale a point's parameters.
fn seed_group(cloud: &PointCloud, i: usize, variant: Variant) -> Option<SurfaceGroup> {
    match variant {
        Variant::Basic => Some(cloud.group(i).unwrap_or(SurfaceGroup::Surface)),
        _ => cloud.group(i),
    }
}

/// Whether neighbor `j` belongs to the same class as seed `i`. The semantic
/// variant compares labels when present; the descriptor variant compares
/// descriptor groups.
fn same_class(cloud: &PointCloud, i: usize, j: usize, variant: Variant) -> bool {
    match variant {
        Variant::Basic => true,
        Variant::AdaSemantic if cloud.labels.is_some() => cloud.label(i) == cloud.label(j),
        _ => cloud.group(i) == cloud.group(j),
    }
}

/// Grows a splat from `seed`. `None` when the seed has no normal or group,
/// or when not a single neighbor passes the stopping rules.
pub fn grow_splat(seed: usize, cloud: &PointCloud, index: &PointIndex, config: &GenConfig) -> Option<Growth> {
    let n = cloud.normal(seed)?;
    let group = seed_group(cloud, seed, config.variant)?;
    let (k, radius, e_bound) = config.scaled(group).ok()?;
    let p = cloud.positions[seed];

    let mut included = Vec::new();
    let mut eps_sum = 0.0;
    for nb in index.restricted_neighborhood(seed, &p, k, radius) {
        let j = nb.index;
        let eps = n.dot(&(cloud.positions[j] - p));
        if eps.abs() > e_bound + ERROR_BOUND_TOL {
            break;
        }
        if !same_class(cloud, seed, j, config.variant) {
            break;
        }
        match cloud.normal(j) {
            Some(nj) if n.dot(&nj) > config.beta => {}
            _ => break,
        }
        included.push(j);
        eps_sum += eps;
    }
    let &last = included.last()?;

    // the seed's own residual is zero but it counts toward the mean
    let eps_bar = eps_sum / (included.len() + 1) as f64;
    let center = p + n * eps_bar;
    let d = cloud.positions[last] - center;
    let r = (d - n * n.dot(&d)).norm();
    if !(r > 0.0) {
        return None;
    }
    let discard2 = (config.alpha * r).powi(2);
    let consumed = included
        .iter()
        .copied()
        .filter(|&j| (cloud.positions[j] - center).norm_squared() <= discard2)
        .collect();
    Some(Growth {
        splat: Splat {
            center,
            normal: n,
            radius: r,
            group,
            label: cloud.label(seed),
            frame_id: None,
        },
        included,
        consumed,
    })
}

/// Grows splats from every point in index order, skipping points consumed
/// by earlier splats. Seeds are evaluated in parallel batches and accepted
/// sequentially, so the result equals a purely sequential pass.
pub fn generate_splats(cloud: &PointCloud, index: &PointIndex, config: &GenConfig) -> Result<SplatSet> {
    config.validate()?;
    let normals = cloud.normals.as_ref().ok_or(Error::MissingAttribute("normals"))?;
    if !normals.iter().any(Option::is_some) {
        return Err(Error::Degenerate("no point has an oriented normal".into()));
    }
    if config.variant != Variant::Basic {
        let groups = cloud.groups.as_ref().ok_or(Error::MissingAttribute("groups"))?;
        for g in groups.iter().collect::<std::collections::BTreeSet<_>>() {
            config.params(*g)?;
        }
    }

    let mut consumed = vec![false; cloud.len()];
    let mut splats = Vec::new();
    let mut seeds = Vec::new();
    let mut next = 0;
    while next < cloud.len() {
        let batch: Vec<usize> = (next..cloud.len())
            .filter(|&i| !consumed[i] && normals[i].is_some())
            .take(SEED_BATCH)
            .collect();
        let Some(&end) = batch.last() else { break };
        next = end + 1;
        let grown: Vec<Option<Growth>> = batch
            .par_iter()
            .map(|&i| grow_splat(i, cloud, index, config))
            .collect();
        for (&seed, growth) in batch.iter().zip(grown) {
            if consumed[seed] {
                continue;
            }
            consumed[seed] = true;
            if let Some(g) = growth {
                for &j in &g.consumed {
                    consumed[j] = true;
                }
                splats.push(g.splat);
                seeds.push(seed);
            }
        }
    }

    let mut set = SplatSet::new(splats);
    set.seeds = Some(seeds);
    set.set_meta("variant", config.variant);
    set.set_meta("alpha", config.alpha);
    set.set_meta("beta", config.beta);
    set.set_meta("k", config.stats.k);
    set.set_meta("r_bar", config.stats.r_bar);
    set.set_meta("e_bar", config.stats.e_bar);
    set.set_meta("r_bar_definition", "mean_kth_neighbor_distance");
    set.set_meta("e_bar_pooling", "pooled_pairs");
    set.set_meta("input_points", cloud.len());
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Vec3;

    fn stats(r_bar: f64, e_bar: f64, k: usize) -> ScaleStats {
        ScaleStats { r_bar, e_bar, k }
    }

    fn with_up_normals(positions: Vec<Vec3>) -> PointCloud {
        let n = positions.len();
        let mut c = PointCloud::from_positions(positions);
        c.normals = Some(vec![Some(Vec3::z()); n]);
        c
    }

    #[test]
    fn default_group_scales() {
        let k = |g, v| {
            let cfg = GenConfig::new(v, stats(1.0, 0.1, 40));
            cfg.scaled(g).unwrap().0
        };
        assert_eq!(k(SurfaceGroup::Ground, Variant::AdaSemantic), 120);
        assert_eq!(k(SurfaceGroup::Surface, Variant::AdaSemantic), 40);
        assert_eq!(k(SurfaceGroup::Linear, Variant::AdaSemantic), 13);
        assert_eq!(k(SurfaceGroup::NonSurface, Variant::AdaSemantic), 10);
        assert_eq!(k(SurfaceGroup::GroundSurface, Variant::AdaDescr), 80);
        assert_eq!(
            group_params(SurfaceGroup::Surface, Variant::AdaSemantic).unwrap(),
            GroupParams::uniform(1.0)
        );
        assert!(group_params(SurfaceGroup::GroundSurface, Variant::AdaSemantic).is_err());
        assert!(group_params(SurfaceGroup::Ground, Variant::AdaDescr).is_err());
    }

    #[test]
    fn coplanar_neighbors_give_centered_splat() {
        let pts = vec![
            Vec3::zeros(),
            Vec3::new(0.1, 0.0, 0.0),
            Vec3::new(0.0, 0.2, 0.0),
            Vec3::new(-0.3, 0.0, 0.0),
            Vec3::new(0.0, -0.4, 0.0),
            Vec3::new(0.5, 0.0, 0.0),
        ];
        let c = with_up_normals(pts);
        let idx = PointIndex::build(&c).unwrap();
        let cfg = GenConfig::new(Variant::Basic, stats(1.0, 0.0, 10));
        let g = grow_splat(0, &c, &idx, &cfg).unwrap();
        assert_eq!(g.splat.center, Vec3::zeros());
        assert_eq!(g.splat.radius, 0.5);
        assert_eq!(g.included, vec![1, 2, 3, 4, 5]);
        // α·r = 0.1 keeps only the nearest neighbor in the discard sphere
        assert_eq!(g.consumed, vec![1]);
    }

    #[test]
    fn error_bound_stops_growth() {
        let c = with_up_normals(vec![Vec3::zeros(), Vec3::new(0.1, 0.0, 0.1), Vec3::new(0.2, 0.0, 0.1)]);
        let idx = PointIndex::build(&c).unwrap();
        let cfg = GenConfig::new(Variant::Basic, stats(1.0, 0.05, 10));
        assert!(grow_splat(0, &c, &idx, &cfg).is_none());
    }

    #[test]
    fn smoothness_and_class_stop_growth() {
        let mut c = with_up_normals((0..4).map(|i| Vec3::new(0.1 * i as f64, 0.0, 0.0)).collect());
        c.normals.as_mut().unwrap()[2] = Some(Vec3::x());
        let idx = PointIndex::build(&c).unwrap();
        let cfg = GenConfig::new(Variant::Basic, stats(1.0, 0.0, 10));
        assert_eq!(grow_splat(0, &c, &idx, &cfg).unwrap().included, vec![1]);

        let mut c = with_up_normals((0..4).map(|i| Vec3::new(0.1 * i as f64, 0.0, 0.0)).collect());
        c.labels = Some(vec![1, 1, 2, 1]);
        c.groups = Some(vec![SurfaceGroup::Surface; 4]);
        let idx = PointIndex::build(&c).unwrap();
        let cfg = GenConfig::new(Variant::AdaSemantic, stats(1.0, 0.0, 10));
        assert_eq!(grow_splat(0, &c, &idx, &cfg).unwrap().included, vec![1]);
        let basic = GenConfig::new(Variant::Basic, stats(1.0, 0.0, 10));
        assert_eq!(grow_splat(0, &c, &idx, &basic).unwrap().included, vec![1, 2, 3]);
    }

    #[test]
    fn missing_neighbor_normal_stops_growth() {
        let mut c = with_up_normals((0..4).map(|i| Vec3::new(0.1 * i as f64, 0.0, 0.0)).collect());
        c.normals.as_mut().unwrap()[3] = None;
        let idx = PointIndex::build(&c).unwrap();
        let cfg = GenConfig::new(Variant::Basic, stats(1.0, 0.0, 10));
        assert_eq!(grow_splat(0, &c, &idx, &cfg).unwrap().included, vec![1, 2]);
    }

    #[test]
    fn single_point_gives_empty_set() {
        let c = with_up_normals(vec![Vec3::zeros()]);
        let idx = PointIndex::build(&c).unwrap();
        let cfg = GenConfig::new(Variant::Basic, stats(1.0, 0.0, 10));
        let set = generate_splats(&c, &idx, &cfg).unwrap();
        assert!(set.is_empty());
    }

    #[test]
    fn generation_requires_normals_and_groups() {
        let c = PointCloud::from_positions(vec![Vec3::zeros(), Vec3::x()]);
        let idx = PointIndex::build(&c).unwrap();
        let cfg = GenConfig::new(Variant::Basic, stats(1.0, 0.0, 10));
        assert!(generate_splats(&c, &idx, &cfg).is_err());
        let c = with_up_normals(vec![Vec3::zeros(), Vec3::x()]);
        let cfg = GenConfig::new(Variant::AdaDescr, stats(1.0, 0.0, 10));
        assert!(generate_splats(&c, &idx, &cfg).is_err());
        let mut bad = GenConfig::new(Variant::Basic, stats(1.0, 0.0, 10));
        bad.alpha = 1.5;
        assert!(generate_splats(&with_up_normals(vec![Vec3::zeros()]), &idx, &bad).is_err());
    }
}
