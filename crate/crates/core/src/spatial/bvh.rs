//! Ray casting against splats.
//!
//! Each splat is wrapped in an axis-aligned cube whose side equals the splat
//! diameter. The hierarchy is built by median split along the longest axis of
//! the centroid bounds with at most [`LEAF_SIZE`] splats per leaf.

use std::cmp::Ordering;

use crate::cloud::{Splat, SplatSet};
use crate::error::{Error, Result};
use crate::Vec3;

/// Minimum ray parameter accepted for a hit, guarding against
/// self-intersection when rays are re-cast from a surface.
pub const SELF_INTERSECTION_EPS: f64 = 1e-4;
/// Splats whose normal is this close to perpendicular to the ray are skipped.
pub const PARALLEL_EPS: f64 = 1e-12;
pub const LEAF_SIZE: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    pub direction: Vec3,
    pub max_range: f64,
}

impl Ray {
    /// Normalizes `direction`; rejects zero or non-finite directions and
    /// non-positive ranges.
    pub fn new(origin: Vec3, direction: Vec3, max_range: f64) -> Result<Self> {
        let len = direction.norm();
        if !(len > 0.0) || !len.is_finite() {
            return Err(Error::InvalidParameter("ray direction must be non-zero".into()));
        }
        if !(max_range > 0.0) {
            return Err(Error::InvalidParameter("ray max_range must be positive".into()));
        }
        Ok(Ray {
            origin,
            direction: direction / len,
            max_range,
        })
    }

    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.direction * t
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub t: f64,
    pub point: Vec3,
    pub splat_index: usize,
}

impl Hit {
    fn order(&self, other: &Hit) -> Ordering {
        self.t
            .total_cmp(&other.t)
            .then(self.splat_index.cmp(&other.splat_index))
    }
}

/// Ray/disk intersection: plane hit at
/// `t = (c - o)·n / (d·n)`, accepted when `t_min < t <= max_range` and the
/// hit lies strictly inside the radius.
#[inline]
pub fn intersect_disk(ray: &Ray, center: &Vec3, normal: &Vec3, radius2: f64, t_min: f64) -> Option<(f64, Vec3)> {
    let denom = ray.direction.dot(normal);
    if denom.abs() < PARALLEL_EPS {
        return None;
    }
    let t = (center - ray.origin).dot(normal) / denom;
    if !(t > t_min) || t > ray.max_range {
        return None;
    }
    let point = ray.at(t);
    let v = point - center;
    if v.dot(&v) < radius2 {
        Some((t, point))
    } else {
        None
    }
}

pub fn intersect_splat(ray: &Ray, splat: &Splat) -> Option<(f64, Vec3)> {
    intersect_disk(ray, &splat.center, &splat.normal, splat.radius * splat.radius, SELF_INTERSECTION_EPS)
}

#[inline]
fn frame_passes(splat_frame: Option<u32>, filter: Option<u32>) -> bool {
    match (splat_frame, filter) {
        (Some(f), Some(g)) => f == g,
        _ => true,
    }
}

#[derive(Debug, Clone, Copy)]
struct Prim {
    center: Vec3,
    normal: Vec3,
    radius2: f64,
    frame: Option<u32>,
    index: u32,
}

#[derive(Debug, Clone)]
struct Node {
    min: Vec3,
    max: Vec3,
    /// Leaf: first primitive. Internal: left child; right child is `first + 1`.
    first: u32,
    count: u32,
}

/// Bounding-volume hierarchy over a splat set. Immutable after build and
/// safe to query from many threads.
#[derive(Debug, Clone)]
pub struct Bvh {
    nodes: Vec<Node>,
    prims: Vec<Prim>,
}

impl Bvh {
    pub fn build(set: &SplatSet) -> Result<Self> {
        if set.is_empty() {
            return Err(Error::Empty("cannot build a hierarchy over zero splats"));
        }
        let mut prims: Vec<Prim> = set
            .splats
            .iter()
            .enumerate()
            .map(|(i, s)| Prim {
                center: s.center,
                normal: s.normal,
                radius2: s.radius * s.radius,
                frame: s.frame_id,
                index: i as u32,
            })
            .collect();
        let half: Vec<f64> = set
            .splats
            .iter()
            .map(|s| {
                // padded so that rounding in the slab test never culls a disk
                let scale = 1.0 + s.center.amax() + s.radius;
                s.radius + 1e-9 * scale
            })
            .collect();
        let mut nodes = vec![Node {
            min: Vec3::zeros(),
            max: Vec3::zeros(),
            first: 0,
            count: 0,
        }];
        build_node(&mut prims, &half, 0, 0, &mut nodes);
        Ok(Bvh { nodes, prims })
    }

    pub fn splat_count(&self) -> usize {
        self.prims.len()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.count > 0).count()
    }

    /// Closest hit with `t > SELF_INTERSECTION_EPS`; equal `t` resolves to the
    /// lower splat index. Splats tagged with a different frame than
    /// `frame_filter` are invisible.
    pub fn first_hit(&self, ray: &Ray, frame_filter: Option<u32>) -> Option<Hit> {
        let inv = ray.direction.map(|d| 1.0 / d);
        let mut best: Option<Hit> = None;
        let mut best_t = ray.max_range;
        let mut stack: Vec<(u32, f64)> = Vec::with_capacity(64);
        if let Some(t0) = self.enter(0, ray, &inv, best_t) {
            stack.push((0, t0));
        }
        while let Some((ni, t_enter)) = stack.pop() {
            if t_enter > best_t {
                continue;
            }
            let node = &self.nodes[ni as usize];
            if node.count > 0 {
                let start = node.first as usize;
                for p in &self.prims[start..start + node.count as usize] {
                    if !frame_passes(p.frame, frame_filter) {
                        continue;
                    }
                    if let Some((t, point)) =
                        intersect_disk(ray, &p.center, &p.normal, p.radius2, SELF_INTERSECTION_EPS)
                    {
                        let hit = Hit {
                            t,
                            point,
                            splat_index: p.index as usize,
                        };
                        if best.is_none_or(|b| hit.order(&b) == Ordering::Less) {
                            best_t = t;
                            best = Some(hit);
                        }
                    }
                }
            } else {
                let l = node.first;
                let r = l + 1;
                let tl = self.enter(l, ray, &inv, best_t);
                let tr = self.enter(r, ray, &inv, best_t);
                match (tl, tr) {
                    (Some(a), Some(b)) => {
                        if a <= b {
                            stack.push((r, b));
                            stack.push((l, a));
                        } else {
                            stack.push((l, a));
                            stack.push((r, b));
                        }
                    }
                    (Some(a), None) => stack.push((l, a)),
                    (None, Some(b)) => stack.push((r, b)),
                    (None, None) => {}
                }
            }
        }
        best
    }

    /// Every hit along the ray, ascending by `t` (ties by splat index).
    pub fn all_hits(&self, ray: &Ray, frame_filter: Option<u32>) -> Vec<Hit> {
        let inv = ray.direction.map(|d| 1.0 / d);
        let mut hits = Vec::new();
        let mut stack: Vec<u32> = Vec::with_capacity(64);
        stack.push(0);
        while let Some(ni) = stack.pop() {
            if self.enter(ni, ray, &inv, ray.max_range).is_none() {
                continue;
            }
            let node = &self.nodes[ni as usize];
            if node.count > 0 {
                let start = node.first as usize;
                for p in &self.prims[start..start + node.count as usize] {
                    if !frame_passes(p.frame, frame_filter) {
                        continue;
                    }
                    if let Some((t, point)) =
                        intersect_disk(ray, &p.center, &p.normal, p.radius2, SELF_INTERSECTION_EPS)
                    {
                        hits.push(Hit {
                            t,
                            point,
                            splat_index: p.index as usize,
                        });
                    }
                }
            } else {
                stack.push(node.first + 1);
                stack.push(node.first);
            }
        }
        hits.sort_by(Hit::order);
        hits
    }

    /// Entry parameter of the ray into a node box clipped to
    /// `[SELF_INTERSECTION_EPS, t_max]`, or `None` on a miss.
    #[inline]
    fn enter(&self, ni: u32, ray: &Ray, inv: &Vec3, t_max: f64) -> Option<f64> {
        let n = &self.nodes[ni as usize];
        let mut lo = SELF_INTERSECTION_EPS;
        let mut hi = t_max;
        for a in 0..3 {
            let o = ray.origin[a];
            if ray.direction[a] == 0.0 {
                if o < n.min[a] || o > n.max[a] {
                    return None;
                }
                continue;
            }
            let t1 = (n.min[a] - o) * inv[a];
            let t2 = (n.max[a] - o) * inv[a];
            let (near, far) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            lo = lo.max(near);
            hi = hi.min(far);
            if lo > hi {
                return None;
            }
        }
        Some(lo)
    }

    #[cfg(test)]
    fn check_structure(&self, set: &SplatSet) {
        let mut seen = vec![0usize; set.len()];
        for node in self.nodes.iter().filter(|n| n.count > 0) {
            assert!(node.count as usize <= LEAF_SIZE);
            for p in &self.prims[node.first as usize..(node.first + node.count) as usize] {
                seen[p.index as usize] += 1;
                let s = &set.splats[p.index as usize];
                for a in 0..3 {
                    assert!(node.min[a] <= s.center[a] - s.radius);
                    assert!(node.max[a] >= s.center[a] + s.radius);
                }
            }
        }
        assert!(seen.iter().all(|&c| c == 1), "every splat in exactly one leaf");
    }
}

fn build_node(prims: &mut [Prim], half: &[f64], offset: usize, ni: usize, nodes: &mut Vec<Node>) {
    let mut min = Vec3::repeat(f64::INFINITY);
    let mut max = Vec3::repeat(f64::NEG_INFINITY);
    let mut cmin = min;
    let mut cmax = max;
    for p in prims.iter() {
        let h = Vec3::repeat(half[p.index as usize]);
        min = min.inf(&(p.center - h));
        max = max.sup(&(p.center + h));
        cmin = cmin.inf(&p.center);
        cmax = cmax.sup(&p.center);
    }
    nodes[ni].min = min;
    nodes[ni].max = max;
    if prims.len() <= LEAF_SIZE {
        nodes[ni].first = offset as u32;
        nodes[ni].count = prims.len() as u32;
        return;
    }
    let axis = (cmax - cmin).imax();
    let mid = prims.len() / 2;
    prims.select_nth_unstable_by(mid, |a, b| {
        a.center[axis]
            .total_cmp(&b.center[axis])
            .then(a.index.cmp(&b.index))
    });
    let left = nodes.len();
    let blank = Node {
        min,
        max,
        first: 0,
        count: 0,
    };
    nodes.push(blank.clone());
    nodes.push(blank);
    nodes[ni].first = left as u32;
    let (lo, hi) = prims.split_at_mut(mid);
    build_node(lo, half, offset, left, nodes);
    build_node(hi, half, offset + mid, left + 1, nodes);
}

/// Exhaustive first hit over every splat; the reference for [`Bvh::first_hit`].
pub fn brute_force_first_hit(set: &SplatSet, ray: &Ray, frame_filter: Option<u32>) -> Option<Hit> {
    let mut best: Option<Hit> = None;
    for (i, s) in set.splats.iter().enumerate() {
        if !frame_passes(s.frame_id, frame_filter) {
            continue;
        }
        if let Some((t, point)) = intersect_splat(ray, s) {
            // strict comparison keeps the lowest index on ties
            if best.is_none_or(|b| t < b.t) {
                best = Some(Hit {
                    t,
                    point,
                    splat_index: i,
                });
            }
        }
    }
    best
}

pub fn brute_force_all_hits(set: &SplatSet, ray: &Ray, frame_filter: Option<u32>) -> Vec<Hit> {
    let mut hits: Vec<Hit> = set
        .splats
        .iter()
        .enumerate()
        .filter(|(_, s)| frame_passes(s.frame_id, frame_filter))
        .filter_map(|(i, s)| {
            intersect_splat(ray, s).map(|(t, point)| Hit {
                t,
                point,
                splat_index: i,
            })
        })
        .collect();
    hits.sort_by(Hit::order);
    hits
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::SurfaceGroup;

    fn disk(center: Vec3, normal: Vec3, radius: f64) -> Splat {
        Splat {
            center,
            normal: normal.normalize(),
            radius,
            group: SurfaceGroup::Surface,
            label: None,
            frame_id: None,
        }
    }

    fn down_ray(x: f64) -> Ray {
        Ray::new(Vec3::new(x, 0.0, 5.0), -Vec3::z(), 100.0).unwrap()
    }

    #[test]
    fn axis_aligned_hit() {
        let set = SplatSet::new(vec![disk(Vec3::zeros(), Vec3::z(), 1.0)]);
        let bvh = Bvh::build(&set).unwrap();
        assert_eq!(bvh.leaf_count(), 1);
        let hit = bvh.first_hit(&down_ray(0.0), None).unwrap();
        assert_eq!(hit.t, 5.0);
        assert_eq!(hit.point, Vec3::zeros());
        assert_eq!(hit.splat_index, 0);
    }

    #[test]
    fn radius_check_and_parallel_miss() {
        let set = SplatSet::new(vec![disk(Vec3::zeros(), Vec3::z(), 0.5)]);
        let bvh = Bvh::build(&set).unwrap();
        assert!(bvh.first_hit(&down_ray(0.6), None).is_none());
        let grazing = Ray::new(Vec3::new(-5.0, 0.0, 0.0), Vec3::x(), 100.0).unwrap();
        assert!(bvh.first_hit(&grazing, None).is_none());
        assert!(brute_force_first_hit(&set, &grazing, None).is_none());
    }

    #[test]
    fn gap_between_disjoint_splats() {
        let set = SplatSet::new(vec![
            disk(Vec3::new(-1.0, 0.0, 0.0), Vec3::z(), 0.5),
            disk(Vec3::new(1.0, 0.0, 0.0), Vec3::z(), 0.5),
        ]);
        let bvh = Bvh::build(&set).unwrap();
        assert!(bvh.first_hit(&down_ray(0.0), None).is_none());
        assert!(brute_force_first_hit(&set, &down_ray(0.0), None).is_none());
        assert_eq!(bvh.first_hit(&down_ray(1.2), None).unwrap().splat_index, 1);
    }

    #[test]
    fn coaxial_stack_and_frame_gate() {
        let mut splats: Vec<Splat> = [1.0, 2.0, 3.0]
            .iter()
            .map(|&z| disk(Vec3::new(0.0, 0.0, z), Vec3::z(), 1.0))
            .collect();
        let ray = Ray::new(Vec3::zeros(), Vec3::z(), 100.0).unwrap();
        let bvh = Bvh::build(&SplatSet::new(splats.clone())).unwrap();
        let hits = bvh.all_hits(&ray, None);
        assert_eq!(hits.iter().map(|h| h.t).collect::<Vec<_>>(), vec![1.0, 2.0, 3.0]);

        splats[1].frame_id = Some(7);
        let bvh = Bvh::build(&SplatSet::new(splats)).unwrap();
        assert_eq!(bvh.all_hits(&ray, Some(8)).len(), 2);
        assert_eq!(bvh.all_hits(&ray, Some(7)).len(), 3);
        assert_eq!(bvh.all_hits(&ray, None).len(), 3);
    }

    #[test]
    fn self_intersection_guard() {
        let set = SplatSet::new(vec![disk(Vec3::zeros(), Vec3::z(), 1.0)]);
        let bvh = Bvh::build(&set).unwrap();
        let from_surface = Ray::new(Vec3::new(0.0, 0.0, 5e-5), -Vec3::z(), 10.0).unwrap();
        assert!(bvh.first_hit(&from_surface, None).is_none());
    }

    #[test]
    fn max_range_is_inclusive() {
        let set = SplatSet::new(vec![disk(Vec3::zeros(), Vec3::z(), 1.0)]);
        let bvh = Bvh::build(&set).unwrap();
        let ray = Ray::new(Vec3::new(0.0, 0.0, 5.0), -Vec3::z(), 5.0).unwrap();
        assert!(bvh.first_hit(&ray, None).is_some());
        let short = Ray::new(Vec3::new(0.0, 0.0, 5.0), -Vec3::z(), 4.999).unwrap();
        assert!(bvh.first_hit(&short, None).is_none());
    }

    #[test]
    fn equal_t_prefers_lower_index() {
        let set = SplatSet::new(vec![
            disk(Vec3::new(0.3, 0.0, 0.0), Vec3::z(), 1.0),
            disk(Vec3::new(-0.3, 0.0, 0.0), Vec3::z(), 1.0),
        ]);
        let hit = Bvh::build(&set).unwrap().first_hit(&down_ray(0.0), None).unwrap();
        assert_eq!(hit.splat_index, 0);
    }

    #[test]
    fn structure_invariants() {
        let splats = (0..300)
            .map(|i| {
                let f = i as f64;
                disk(
                    Vec3::new((f * 0.37).sin() * 10.0, (f * 0.11).cos() * 10.0, f * 0.01),
                    Vec3::new(f.sin(), f.cos(), 1.0),
                    0.1 + (f * 0.7).sin().abs(),
                )
            })
            .collect();
        let set = SplatSet::new(splats);
        Bvh::build(&set).unwrap().check_structure(&set);
        assert!(Bvh::build(&SplatSet::default()).is_err());
    }

    #[test]
    fn ray_validation() {
        assert!(Ray::new(Vec3::zeros(), Vec3::zeros(), 1.0).is_err());
        assert!(Ray::new(Vec3::zeros(), Vec3::x(), 0.0).is_err());
        let r = Ray::new(Vec3::zeros(), Vec3::new(3.0, 4.0, 0.0), 1.0).unwrap();
        assert!((r.direction.norm() - 1.0).abs() < 1e-15);
    }
}
