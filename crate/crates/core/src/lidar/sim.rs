use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::sensor::{generate_revolution_rays, Pose, SensorModel};
use crate::cloud::{ExtraProperty, PointCloud, ScalarType, SplatSet, SurfaceGroup};
use crate::error::{Error, Result};
use crate::spatial::{brute_force_all_hits, brute_force_first_hit, Bvh, Hit, Ray};
use crate::Vec3;

pub const DEFAULT_DEPTH: usize = 5;
/// Largest gap between consecutive hits merged into one return, in meters.
pub const DEFAULT_DEPTH_GAP: f64 = 0.10;

/// A splat set prepared for ray casting.
#[derive(Debug, Clone)]
pub struct SplatScene {
    pub set: SplatSet,
    bvh: Option<Bvh>,
    brute_force: bool,
}

impl SplatScene {
    pub fn new(set: SplatSet) -> Self {
        let bvh = if set.is_empty() {
            None
        } else {
            Bvh::build(&set).ok()
        };
        SplatScene {
            set,
            bvh,
            brute_force: false,
        }
    }

    /// A scene that tests every splat against every ray.
    pub fn unaccelerated(set: SplatSet) -> Self {
        SplatScene {
            set,
            bvh: None,
            brute_force: true,
        }
    }

    pub fn first_hit(&self, ray: &Ray, frame: Option<u32>) -> Option<Hit> {
        match &self.bvh {
            Some(bvh) if !self.brute_force => bvh.first_hit(ray, frame),
            _ => brute_force_first_hit(&self.set, ray, frame),
        }
    }

    pub fn all_hits(&self, ray: &Ray, frame: Option<u32>) -> Vec<Hit> {
        match &self.bvh {
            Some(bvh) if !self.brute_force => bvh.all_hits(ray, frame),
            _ => brute_force_all_hits(&self.set, ray, frame),
        }
    }

    fn same_class(&self, a: usize, b: usize) -> bool {
        let (sa, sb) = (&self.set.splats[a], &self.set.splats[b]);
        match (sa.label, sb.label) {
            (Some(la), Some(lb)) => la == lb,
            _ => sa.group == sb.group,
        }
    }
}

/// Weight of the `d`-th accumulated hit (1-based) in a stack of depth `depth`.
pub fn depth_weight(d: usize, depth: usize) -> f64 {
    let half = depth as f64 / 2.0;
    (-(d as f64 - half).abs() / half).exp()
}

/// Weighted average of consecutive same-class hits along a ray.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedReturn {
    pub point: Vec3,
    pub t: f64,
    /// Hits that contributed, in ascending t.
    pub hits: Vec<Hit>,
}

impl WeightedReturn {
    pub fn first(&self) -> &Hit {
        &self.hits[0]
    }
}

pub fn weighted_return(
    scene: &SplatScene,
    ray: &Ray,
    depth: usize,
    max_gap: f64,
    frame: Option<u32>,
) -> Option<WeightedReturn> {
    let hits = scene.all_hits(ray, frame);
    let first = *hits.first()?;
    let mut used = vec![first];
    for h in &hits[1..] {
        let prev = used[used.len() - 1];
        if used.len() >= depth.max(1) || !scene.same_class(first.splat_index, h.splat_index) || h.t - prev.t > max_gap {
            break;
        }
        used.push(*h);
    }
    let n = used.len();
    let mut wsum = 0.0;
    let mut point = Vec3::zeros();
    let mut t = 0.0;
    for (d, h) in used.iter().enumerate() {
        let w = depth_weight(d + 1, n);
        wsum += w;
        point += h.point * w;
        t += h.t * w;
    }
    // a convex combination; the clamp only removes rounding
    let t = (t / wsum).clamp(first.t, used[n - 1].t);
    Some(WeightedReturn {
        point: point / wsum,
        t,
        hits: used,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MultiDepth {
    pub depth: usize,
    pub max_gap: f64,
}

impl Default for MultiDepth {
    fn default() -> Self {
        MultiDepth {
            depth: DEFAULT_DEPTH,
            max_gap: DEFAULT_DEPTH_GAP,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ScanOptions {
    /// Standard deviation of the additive range noise, in meters.
    pub noise_sigma: f64,
    /// Average several hits per ray instead of keeping the first.
    pub multi_depth: Option<MultiDepth>,
    /// Only splats without a frame id or with this frame id are visible.
    pub frame_filter: Option<u32>,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanReturn {
    pub point: Vec3,
    pub range: f64,
    pub beam: u32,
    pub azimuth: u32,
    pub splat_index: usize,
    pub label: Option<u32>,
    pub group: SurfaceGroup,
    pub splat_frame: Option<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scan {
    pub pose: Pose,
    pub ray_count: usize,
    pub returns: Vec<ScanReturn>,
}

impl Scan {
    pub fn len(&self) -> usize {
        self.returns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.returns.is_empty()
    }

    /// Returns as a cloud with sensor position, frame id, group and (when
    /// every hit splat carries one) label, plus `beam`, `azimuth` and
    /// `range` columns.
    pub fn to_cloud(&self) -> PointCloud {
        let n = self.returns.len();
        let labels: Option<Vec<u32>> = self.returns.iter().map(|r| r.label).collect();
        let column = |name: &str, ty, f: &dyn Fn(&ScanReturn) -> f64| ExtraProperty {
            name: name.to_string(),
            ty,
            values: self.returns.iter().map(f).collect(),
        };
        PointCloud {
            positions: self.returns.iter().map(|r| r.point).collect(),
            normals: None,
            labels: if n == 0 { None } else { labels },
            groups: Some(self.returns.iter().map(|r| r.group).collect()),
            sensor_positions: Some(vec![self.pose.position; n]),
            frame_ids: Some(vec![self.pose.frame; n]),
            extras: vec![
                column("beam", ScalarType::U16, &|r| r.beam as f64),
                column("azimuth", ScalarType::U16, &|r| r.azimuth as f64),
                column("range", ScalarType::F64, &|r| r.range),
            ],
        }
    }
}

/// Deterministic per-ray generator: one ChaCha stream per frame, one block
/// of words per ray.
fn ray_rng(seed: u64, frame: u32, ray: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(frame as u64);
    rng.set_word_pos((ray as u128) << 32);
    rng
}

/// Casts one revolution. Rays are processed in parallel and returns are
/// kept in ray order.
pub fn simulate_scan(scene: &SplatScene, model: &SensorModel, pose: &Pose, opts: &ScanOptions) -> Result<Scan> {
    model.validate()?;
    if !(opts.noise_sigma >= 0.0) || !opts.noise_sigma.is_finite() {
        return Err(Error::InvalidParameter("noise sigma must be finite and non-negative".into()));
    }
    let rays = generate_revolution_rays(model, pose);
    let ray_count = rays.len();
    if scene.set.is_empty() {
        return Ok(Scan {
            pose: *pose,
            ray_count,
            returns: Vec::new(),
        });
    }
    let noise = (opts.noise_sigma > 0.0).then(|| Normal::new(0.0, opts.noise_sigma).expect("sigma checked above"));
    let beams = model.beams;
    let returns: Vec<Option<ScanReturn>> = rays
        .par_iter()
        .enumerate()
        .map(|(i, ray)| {
            let (hit, point, t) = match opts.multi_depth {
                Some(md) => {
                    let w = weighted_return(scene, ray, md.depth, md.max_gap, opts.frame_filter)?;
                    (*w.first(), w.point, w.t)
                }
                None => {
                    let h = scene.first_hit(ray, opts.frame_filter)?;
                    (h, h.point, h.t)
                }
            };
            let (point, range) = match &noise {
                Some(dist) => {
                    let e = dist.sample(&mut ray_rng(opts.seed, pose.frame, i));
                    (point + ray.direction * e, t + e)
                }
                None => (point, t),
            };
            if !(range > 0.0) || range > model.range_max {
                return None;
            }
            let splat = &scene.set.splats[hit.splat_index];
            Some(ScanReturn {
                point,
                range,
                beam: (i % beams) as u32,
                azimuth: (i / beams) as u32,
                splat_index: hit.splat_index,
                label: splat.label,
                group: splat.group,
                splat_frame: splat.frame_id,
            })
        })
        .collect();
    Ok(Scan {
        pose: *pose,
        ray_count,
        returns: returns.into_iter().flatten().collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::Splat;

    fn disk(z: f64, label: u32, frame: Option<u32>) -> Splat {
        Splat {
            center: Vec3::new(0.0, 0.0, z),
            normal: Vec3::z(),
            radius: 1.0,
            group: SurfaceGroup::Surface,
            label: Some(label),
            frame_id: frame,
        }
    }

    fn down_ray() -> Ray {
        Ray::new(Vec3::new(0.0, 0.0, 10.0), -Vec3::z(), 100.0).unwrap()
    }

    #[test]
    fn kernel_values() {
        assert_eq!(depth_weight(2, 4), 1.0);
        assert!((depth_weight(0, 4) - (-1.0f64).exp()).abs() < 1e-15);
        assert!((depth_weight(1, 1) - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn single_hit_return_is_hit_point() {
        let scene = SplatScene::new(SplatSet::new(vec![disk(0.0, 1, None)]));
        let w = weighted_return(&scene, &down_ray(), 5, 0.1, None).unwrap();
        assert_eq!(w.point, Vec3::zeros());
        assert_eq!(w.hits.len(), 1);
    }

    #[test]
    fn stack_stops_at_class_change_and_gap() {
        let scene = SplatScene::new(SplatSet::new(vec![
            disk(0.0, 1, None),
            disk(0.02, 1, None),
            disk(0.04, 2, None),
            disk(-0.5, 1, None),
        ]));
        let w = weighted_return(&scene, &down_ray(), 5, 0.1, None).unwrap();
        assert_eq!(w.hits.len(), 1, "class change right after first hit");

        let scene = SplatScene::new(SplatSet::new(vec![disk(0.0, 1, None), disk(0.02, 1, None), disk(-0.5, 1, None)]));
        let w = weighted_return(&scene, &down_ray(), 5, 0.1, None).unwrap();
        assert_eq!(w.hits.len(), 2, "gap stops accumulation");
        assert!(w.t > w.hits[0].t && w.t < w.hits[1].t);
    }

    #[test]
    fn empty_scene_gives_empty_scan() {
        let m = super::super::sensor_preset("hdl32").unwrap();
        let scan = simulate_scan(&SplatScene::new(SplatSet::default()), &m, &Pose::at(Vec3::zeros(), 0), &ScanOptions::default()).unwrap();
        assert!(scan.is_empty());
        assert_eq!(scan.ray_count, 57_600);
    }

    #[test]
    fn scan_cloud_columns() {
        let mut m = super::super::sensor_preset("hdl32").unwrap();
        m.pulses_per_rev = 10;
        let scene = SplatScene::new(SplatSet::new(vec![Splat {
            radius: 1000.0,
            ..disk(0.0, 3, None)
        }]));
        let scan = simulate_scan(&scene, &m, &Pose::at(Vec3::new(0.0, 0.0, 2.0), 5), &ScanOptions::default()).unwrap();
        assert!(!scan.is_empty());
        let c = scan.to_cloud();
        c.validate().unwrap();
        assert_eq!(c.labels.as_ref().unwrap()[0], 3);
        assert_eq!(c.frame_ids.as_ref().unwrap()[0], 5);
        assert_eq!(c.extra("beam").unwrap().values.len(), scan.len());
    }
}
