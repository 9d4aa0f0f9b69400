use std::cmp::Ordering;

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::Vec3;

const LEAF_SIZE: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub dist2: f64,
}

impl Neighbor {
    pub fn dist(&self) -> f64 {
        self.dist2.sqrt()
    }

    /// Total order used everywhere: distance, then index.
    fn key_cmp(&self, other: &Neighbor) -> Ordering {
        self.dist2
            .total_cmp(&other.dist2)
            .then(self.index.cmp(&other.index))
    }
}

#[derive(Debug, Clone)]
struct Node {
    min: Vec3,
    max: Vec3,
    /// Leaf: start into `order`. Internal: index of the left child (the right
    /// child follows it).
    first: u32,
    /// Zero for internal nodes.
    count: u32,
}

/// Exact nearest-neighbor index over a fixed set of points.
///
/// Results are ordered by `(distance, index)`, so they do not depend on how
/// the tree happened to be built.
#[derive(Debug, Clone)]
pub struct PointIndex {
    /// Points permuted into leaf order.
    points: Vec<Vec3>,
    order: Vec<u32>,
    nodes: Vec<Node>,
}

impl PointIndex {
    /// Builds the index over a cloud's positions; empty clouds are rejected.
    pub fn build(cloud: &PointCloud) -> Result<Self> {
        if cloud.is_empty() {
            return Err(Error::Empty("cannot index an empty cloud"));
        }
        Ok(Self::new(&cloud.positions))
    }

    pub fn new(points: &[Vec3]) -> Self {
        let mut order: Vec<u32> = (0..points.len() as u32).collect();
        let mut nodes = Vec::with_capacity(2 * points.len() / LEAF_SIZE + 1);
        if !points.is_empty() {
            nodes.push(Node {
                min: Vec3::zeros(),
                max: Vec3::zeros(),
                first: 0,
                count: 0,
            });
            build_node(points, &mut order, 0, 0, &mut nodes);
        }
        let permuted = order.iter().map(|&i| points[i as usize]).collect();
        PointIndex {
            points: permuted,
            order,
            nodes,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// The `k` nearest points to `q`, optionally skipping one index.
    pub fn knn(&self, q: &Vec3, k: usize, exclude: Option<usize>) -> Vec<Neighbor> {
        self.knn_within(q, k, f64::INFINITY, exclude)
    }

    /// The `k` nearest points among those within `radius` of `q`.
    pub fn knn_within(&self, q: &Vec3, k: usize, radius: f64, exclude: Option<usize>) -> Vec<Neighbor> {
        let mut best: Vec<Neighbor> = Vec::with_capacity(k + 1);
        if k == 0 || self.nodes.is_empty() {
            return best;
        }
        let limit2 = radius * radius;
        let mut stack: Vec<(u32, f64)> = vec![(0, 0.0)];
        while let Some((ni, box_d2)) = stack.pop() {
            let bound = if best.len() == k {
                best[k - 1].dist2.min(limit2)
            } else {
                limit2
            };
            if box_d2 > bound {
                continue;
            }
            let node = &self.nodes[ni as usize];
            if node.count > 0 {
                let start = node.first as usize;
                for j in start..start + node.count as usize {
                    let index = self.order[j] as usize;
                    if Some(index) == exclude {
                        continue;
                    }
                    let dist2 = (self.points[j] - q).norm_squared();
                    if dist2 > limit2 {
                        continue;
                    }
                    let cand = Neighbor { index, dist2 };
                    if best.len() == k {
                        if cand.key_cmp(&best[k - 1]) != Ordering::Less {
                            continue;
                        }
                        best.pop();
                    }
                    let pos = best
                        .binary_search_by(|b| b.key_cmp(&cand))
                        .unwrap_or_else(|p| p);
                    best.insert(pos, cand);
                }
            } else {
                let l = node.first;
                let r = node.first + 1;
                let dl = self.box_dist2(l, q);
                let dr = self.box_dist2(r, q);
                // push the farther child first so the nearer is visited first
                if dl <= dr {
                    stack.push((r, dr));
                    stack.push((l, dl));
                } else {
                    stack.push((l, dl));
                    stack.push((r, dr));
                }
            }
        }
        best
    }

    /// All points within `radius` of `q` (inclusive), sorted by distance.
    pub fn within(&self, q: &Vec3, radius: f64, exclude: Option<usize>) -> Vec<Neighbor> {
        let mut out = Vec::new();
        if self.nodes.is_empty() {
            return out;
        }
        let r2 = radius * radius;
        let mut stack = vec![0u32];
        while let Some(ni) = stack.pop() {
            if self.box_dist2(ni, q) > r2 {
                continue;
            }
            let node = &self.nodes[ni as usize];
            if node.count > 0 {
                let start = node.first as usize;
                for j in start..start + node.count as usize {
                    let index = self.order[j] as usize;
                    let dist2 = (self.points[j] - q).norm_squared();
                    if dist2 <= r2 && Some(index) != exclude {
                        out.push(Neighbor { index, dist2 });
                    }
                }
            } else {
                stack.push(node.first);
                stack.push(node.first + 1);
            }
        }
        out.sort_by(Neighbor::key_cmp);
        out
    }

    /// Number of points within `radius` of `q`, without allocating.
    pub fn count_within(&self, q: &Vec3, radius: f64, exclude: Option<usize>) -> usize {
        if self.nodes.is_empty() {
            return 0;
        }
        let r2 = radius * radius;
        let mut count = 0;
        let mut stack = vec![0u32];
        while let Some(ni) = stack.pop() {
            if self.box_dist2(ni, q) > r2 {
                continue;
            }
            let node = &self.nodes[ni as usize];
            if node.count > 0 {
                let start = node.first as usize;
                for j in start..start + node.count as usize {
                    if (self.points[j] - q).norm_squared() <= r2
                        && Some(self.order[j] as usize) != exclude
                    {
                        count += 1;
                    }
                }
            } else {
                stack.push(node.first);
                stack.push(node.first + 1);
            }
        }
        count
    }

    pub fn nearest(&self, q: &Vec3) -> Option<Neighbor> {
        self.knn(q, 1, None).into_iter().next()
    }

    /// The smaller of the k-NN set and the ball of `radius` around a point,
    /// excluding the query point itself; sorted by increasing distance.
    pub fn restricted_neighborhood(&self, query: usize, position: &Vec3, k: usize, radius: f64) -> Vec<Neighbor> {
        self.knn_within(position, k, radius, Some(query))
    }

    fn box_dist2(&self, ni: u32, q: &Vec3) -> f64 {
        let n = &self.nodes[ni as usize];
        let mut d2 = 0.0;
        for a in 0..3 {
            let v = q[a];
            let d = if v < n.min[a] {
                n.min[a] - v
            } else if v > n.max[a] {
                v - n.max[a]
            } else {
                0.0
            };
            d2 += d * d;
        }
        d2
    }
}

fn build_node(points: &[Vec3], order: &mut [u32], offset: usize, ni: usize, nodes: &mut Vec<Node>) {
    let mut min = Vec3::repeat(f64::INFINITY);
    let mut max = Vec3::repeat(f64::NEG_INFINITY);
    for &i in order.iter() {
        let p = &points[i as usize];
        min = min.inf(p);
        max = max.sup(p);
    }
    nodes[ni].min = min;
    nodes[ni].max = max;
    if order.len() <= LEAF_SIZE {
        nodes[ni].first = offset as u32;
        nodes[ni].count = order.len() as u32;
        return;
    }
    let extent = max - min;
    let axis = extent.imax();
    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &b| {
        points[a as usize][axis]
            .total_cmp(&points[b as usize][axis])
            .then(a.cmp(&b))
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
    nodes[ni].count = 0;
    let (lo, hi) = order.split_at_mut(mid);
    build_node(points, lo, offset, left, nodes);
    build_node(points, hi, offset + mid, left + 1, nodes);
}
