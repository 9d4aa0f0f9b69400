//! Local PCA: normals, scale statistics and eigenvalue descriptors.

use nalgebra::{Matrix3, SymmetricEigen};
use rayon::prelude::*;

use crate::cloud::{PointCloud, SurfaceGroup};
use crate::error::{Error, Result};
use crate::spatial::PointIndex;
use crate::Vec3;

pub const DEFAULT_K: usize = 40;

/// Neighborhoods with fewer neighbors than this (query point excluded) get
/// no normal.
pub const MIN_NEIGHBORS: usize = 3;

/// Eigen-decomposition of a neighborhood covariance, largest spread first.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PcaFrame {
    pub eigenvalues: [f64; 3],
    pub eigenvectors: [Vec3; 3],
    pub centroid: Vec3,
}

impl PcaFrame {
    /// Direction of least spread.
    pub fn normal(&self) -> Vec3 {
        self.eigenvectors[2]
    }

    pub fn descriptors(&self) -> Option<Descriptors> {
        Descriptors::from_eigenvalues(self.eigenvalues)
    }
}

/// Flip `v` so its first component with magnitude above 1e-12 is positive.
fn canonical_sign(v: Vec3) -> Vec3 {
    match v.iter().find(|c| c.abs() > 1e-12) {
        Some(&c) if c < 0.0 => -v,
        _ => v,
    }
}

pub fn neighborhood_pca(points: &[Vec3]) -> Result<PcaFrame> {
    if points.len() < 3 {
        return Err(Error::Degenerate(format!(
            "PCA needs at least 3 points, got {}",
            points.len()
        )));
    }
    let n = points.len() as f64;
    let centroid = points.iter().sum::<Vec3>() / n;
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p - centroid;
        cov += d * d.transpose();
    }
    cov /= n;

    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let eigenvalues = order.map(|i| eig.eigenvalues[i].max(0.0));
    if eigenvalues[0] <= 0.0 {
        return Err(Error::Degenerate("all points coincide".into()));
    }
    let eigenvectors = order.map(|i| canonical_sign(eig.eigenvectors.column(i).into_owned()));
    Ok(PcaFrame {
        eigenvalues,
        eigenvectors,
        centroid,
    })
}

/// Dimensionality descriptors of a neighborhood; they sum to one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Descriptors {
    pub linearity: f64,
    pub planarity: f64,
    pub sphericity: f64,
}

impl Descriptors {
    /// `None` when the largest eigenvalue is zero.
    pub fn from_eigenvalues([l1, l2, l3]: [f64; 3]) -> Option<Self> {
        if !(l1 > 0.0) {
            return None;
        }
        Some(Descriptors {
            linearity: (l1 - l2) / l1,
            planarity: (l2 - l3) / l1,
            sphericity: l3 / l1,
        })
    }

    /// Largest descriptor wins; ties go to linear, then planar.
    pub fn group(&self) -> SurfaceGroup {
        let mut best = (self.linearity, SurfaceGroup::Linear);
        if self.planarity > best.0 {
            best = (self.planarity, SurfaceGroup::GroundSurface);
        }
        if self.sphericity > best.0 {
            best = (self.sphericity, SurfaceGroup::NonSurface);
        }
        best.1
    }
}

/// How normals are oriented when the cloud carries no sensor positions.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum OrientationFallback {
    /// Point every normal towards one viewpoint.
    Viewpoint(Vec3),
    /// Point every normal into the +z half-space.
    #[default]
    Up,
    /// Keep the eigensolver's canonical sign.
    Unoriented,
}

/// Neighborhood scale of a cloud: mean k-NN radius and mean point-to-plane
/// error over all restricted neighborhoods.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleStats {
    /// Mean distance to the k-th nearest neighbor.
    pub r_bar: f64,
    /// Pooled mean of |n_i · (p_k - p_i)| over every (point, neighbor) pair.
    pub e_bar: f64,
    pub k: usize,
}

/// PCA frame of every point's restricted neighborhood (the point itself
/// included in the fit). `None` where fewer than [`MIN_NEIGHBORS`] neighbors
/// exist or all of them coincide.
pub fn local_frames(cloud: &PointCloud, index: &PointIndex, k: usize, radius: f64) -> Vec<Option<PcaFrame>> {
    (0..cloud.len())
        .into_par_iter()
        .map_init(Vec::new, |buf, i| {
            let p = cloud.positions[i];
            let nbrs = index.restricted_neighborhood(i, &p, k, radius);
            if nbrs.len() < MIN_NEIGHBORS {
                return None;
            }
            buf.clear();
            buf.push(p);
            buf.extend(nbrs.iter().map(|n| cloud.positions[n.index]));
            neighborhood_pca(buf).ok()
        })
        .collect()
}

/// Orients each frame's least-spread axis towards the point's sensor (or the
/// fallback) and stores it as the cloud's normals.
pub fn normals_from_frames(cloud: &PointCloud, frames: &[Option<PcaFrame>], fallback: OrientationFallback) -> PointCloud {
    let normals = frames
        .par_iter()
        .enumerate()
        .map(|(i, f)| {
            f.as_ref().map(|f| {
                let n = f.normal();
                let p = cloud.positions[i];
                let reference = match (&cloud.sensor_positions, fallback) {
                    (Some(s), _) => Some(s[i] - p),
                    (None, OrientationFallback::Viewpoint(v)) => Some(v - p),
                    (None, OrientationFallback::Up) => Some(Vec3::z()),
                    (None, OrientationFallback::Unoriented) => None,
                };
                match reference {
                    Some(r) if n.dot(&r) < 0.0 => -n,
                    _ => n,
                }
            })
        })
        .collect();
    PointCloud {
        normals: Some(normals),
        ..cloud.clone()
    }
}

pub fn estimate_normals(
    cloud: &PointCloud,
    index: &PointIndex,
    k: usize,
    radius: f64,
    fallback: OrientationFallback,
) -> PointCloud {
    normals_from_frames(cloud, &local_frames(cloud, index, k, radius), fallback)
}

/// Mean distance from every point to its k-th nearest neighbor (itself
/// excluded).
pub fn mean_knn_radius(cloud: &PointCloud, index: &PointIndex, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    if cloud.len() < k + 1 {
        return Err(Error::InvalidParameter(format!(
            "need more than k = {k} points, cloud has {}",
            cloud.len()
        )));
    }
    let radii: Vec<f64> = (0..cloud.len())
        .into_par_iter()
        .map(|i| {
            let nn = index.knn(&cloud.positions[i], k, Some(i));
            nn.last().map_or(0.0, |n| n.dist())
        })
        .collect();
    Ok(radii.iter().sum::<f64>() / cloud.len() as f64)
}

/// Pooled mean unsigned point-to-plane distance over all restricted
/// neighborhoods of points that have a normal.
pub fn error_bound(cloud: &PointCloud, index: &PointIndex, k: usize, radius: f64) -> Result<f64> {
    let normals = cloud.normals.as_ref().ok_or(Error::MissingAttribute("normals"))?;
    let partial: Vec<(f64, usize)> = (0..cloud.len())
        .into_par_iter()
        .map(|i| {
            let Some(n) = normals[i] else {
                return (0.0, 0);
            };
            let p = cloud.positions[i];
            let nbrs = index.restricted_neighborhood(i, &p, k, radius);
            let sum = nbrs
                .iter()
                .map(|nb| n.dot(&(cloud.positions[nb.index] - p)).abs())
                .sum::<f64>();
            (sum, nbrs.len())
        })
        .collect();
    // fixed index order keeps the result independent of thread scheduling
    let (sum, count) = partial
        .iter()
        .fold((0.0, 0usize), |(s, c), (ps, pc)| (s + ps, c + pc));
    Ok(if count == 0 { 0.0 } else { sum / count as f64 })
}

/// R̄ and Ē for a cloud whose normals are already estimated.
pub fn compute_scale_stats(cloud: &PointCloud, index: &PointIndex, k: usize) -> Result<ScaleStats> {
    let r_bar = mean_knn_radius(cloud, index, k)?;
    let e_bar = error_bound(cloud, index, k, r_bar)?;
    Ok(ScaleStats { r_bar, e_bar, k })
}

/// Descriptor group per point; `None` for degenerate neighborhoods.
pub fn groups_from_frames(frames: &[Option<PcaFrame>]) -> Vec<Option<SurfaceGroup>> {
    frames
        .iter()
        .map(|f| f.and_then(|f| f.descriptors()).map(|d| d.group()))
        .collect()
}

pub fn classify_by_descriptors(cloud: &PointCloud, index: &PointIndex, k: usize, radius: f64) -> Vec<Option<SurfaceGroup>> {
    groups_from_frames(&local_frames(cloud, index, k, radius))
}

/// Stores descriptor groups on the cloud. Degenerate points become
/// `NonSurface`, the group with the smallest splats.
pub fn with_descriptor_groups(cloud: &PointCloud, groups: &[Option<SurfaceGroup>]) -> PointCloud {
    PointCloud {
        groups: Some(
            groups
                .iter()
                .map(|g| g.unwrap_or(SurfaceGroup::NonSurface))
                .collect(),
        ),
        ..cloud.clone()
    }
}

/// Everything a splat-generation pass needs from a cloud.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub cloud: PointCloud,
    pub index: PointIndex,
    pub stats: ScaleStats,
    pub frames: Vec<Option<PcaFrame>>,
}

/// Index, R̄, oriented normals and Ē in one pass.
pub fn analyze(cloud: &PointCloud, k: usize, fallback: OrientationFallback) -> Result<Analysis> {
    let index = PointIndex::build(cloud)?;
    let r_bar = mean_knn_radius(cloud, &index, k)?;
    let frames = local_frames(cloud, &index, k, r_bar);
    let oriented = normals_from_frames(cloud, &frames, fallback);
    let e_bar = error_bound(&oriented, &index, k, r_bar)?;
    Ok(Analysis {
        cloud: oriented,
        index,
        stats: ScaleStats { r_bar, e_bar, k },
        frames,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Rotation3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    /// Cyclic Jacobi eigenvalue iteration, independent of nalgebra's solver.
    fn jacobi_eigenvalues(mut a: [[f64; 3]; 3]) -> [f64; 3] {
        for _ in 0..100 {
            let off = a[0][1].powi(2) + a[0][2].powi(2) + a[1][2].powi(2);
            if off < 1e-30 {
                break;
            }
            for (p, q) in [(0, 1), (0, 2), (1, 2)] {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                let mut b = a;
                for k in 0..3 {
                    b[k][p] = c * a[k][p] - s * a[k][q];
                    b[k][q] = s * a[k][p] + c * a[k][q];
                }
                let mut d = b;
                for k in 0..3 {
                    d[p][k] = c * b[p][k] - s * b[q][k];
                    d[q][k] = s * b[p][k] + c * b[q][k];
                }
                a = d;
            }
        }
        let mut ev = [a[0][0], a[1][1], a[2][2]];
        ev.sort_by(|x, y| y.total_cmp(x));
        ev
    }

    fn covariance(points: &[Vec3]) -> [[f64; 3]; 3] {
        let n = points.len() as f64;
        let c = points.iter().sum::<Vec3>() / n;
        let mut m = [[0.0; 3]; 3];
        for p in points {
            let d = p - c;
            for i in 0..3 {
                for j in 0..3 {
                    m[i][j] += d[i] * d[j] / n;
                }
            }
        }
        m
    }

    #[test]
    fn unit_square_plane() {
        let pts = [
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(1.0, 1.0, 0.0),
        ];
        let f = neighborhood_pca(&pts).unwrap();
        assert_eq!(f.eigenvalues[2], 0.0);
        assert!((f.normal().abs() - Vec3::z()).norm() < 1e-12);
        assert_eq!(f.descriptors().unwrap().group(), SurfaceGroup::GroundSurface);
    }

    #[test]
    fn collinear_points() {
        let pts: Vec<Vec3> = (0..5).map(|i| Vec3::new(i as f64, 0.0, 0.0)).collect();
        let f = neighborhood_pca(&pts).unwrap();
        assert!(f.eigenvalues[1].abs() < 1e-15 && f.eigenvalues[2].abs() < 1e-15);
        assert!((f.eigenvectors[0] - Vec3::x()).norm() < 1e-12, "canonical sign is +x");
        assert_eq!(f.descriptors().unwrap().group(), SurfaceGroup::Linear);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(neighborhood_pca(&[Vec3::zeros(), Vec3::x()]).is_err());
        assert!(neighborhood_pca(&[Vec3::x(); 5]).is_err());
    }

    #[test]
    fn eigenvalues_match_jacobi_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let normal = Normal::new(0.0, 1.0).unwrap();
        for _ in 0..50 {
            let scale = Vec3::new(rng.random_range(0.1..3.0), rng.random_range(0.1..3.0), rng.random_range(0.1..3.0));
            let pts: Vec<Vec3> = (0..60)
                .map(|_| {
                    Vec3::new(normal.sample(&mut rng), normal.sample(&mut rng), normal.sample(&mut rng))
                        .component_mul(&scale)
                })
                .collect();
            let f = neighborhood_pca(&pts).unwrap();
            let oracle = jacobi_eigenvalues(covariance(&pts));
            for a in 0..3 {
                assert!((f.eigenvalues[a] - oracle[a]).abs() < 1e-9, "{:?} vs {oracle:?}", f.eigenvalues);
            }
            let m = nalgebra::Matrix3::from_columns(&f.eigenvectors);
            assert!((m.transpose() * m - Matrix3::identity()).amax() < 1e-6);
        }
    }

    #[test]
    fn descriptor_examples() {
        let g = |l| Descriptors::from_eigenvalues(l).unwrap().group();
        assert_eq!(g([1.0, 1.0, 0.0]), SurfaceGroup::GroundSurface);
        assert_eq!(g([1.0, 0.0, 0.0]), SurfaceGroup::Linear);
        assert_eq!(g([1.0, 1.0, 1.0]), SurfaceGroup::NonSurface);
        // ties: linearity = planarity = 0.5
        assert_eq!(g([1.0, 0.5, 0.0]), SurfaceGroup::Linear);
        assert!(Descriptors::from_eigenvalues([0.0, 0.0, 0.0]).is_none());
    }

    fn plane_grid(n: usize, spacing: f64) -> PointCloud {
        let positions = (0..n * n)
            .map(|i| Vec3::new((i % n) as f64 * spacing, (i / n) as f64 * spacing, 0.0))
            .collect();
        PointCloud::from_positions(positions)
    }

    #[test]
    fn plane_normals_follow_sensor() {
        for (sensor_z, expected) in [(10.0, 1.0), (-10.0, -1.0)] {
            let mut c = plane_grid(20, 0.1);
            c.sensor_positions = Some(vec![Vec3::new(0.0, 0.0, sensor_z); c.len()]);
            let idx = PointIndex::build(&c).unwrap();
            let out = estimate_normals(&c, &idx, 10, 1.0, OrientationFallback::Unoriented);
            for n in out.normals.unwrap() {
                assert_eq!(n.unwrap(), Vec3::new(0.0, 0.0, expected));
            }
        }
    }

    #[test]
    fn isolated_point_flagged() {
        let mut c = plane_grid(10, 0.1);
        c.positions.push(Vec3::new(50.0, 50.0, 50.0));
        let idx = PointIndex::build(&c).unwrap();
        let out = estimate_normals(&c, &idx, 10, 0.5, OrientationFallback::Up);
        let normals = out.normals.unwrap();
        assert!(normals.last().unwrap().is_none());
        assert!(normals[..100].iter().all(|n| n.is_some()));
    }

    #[test]
    fn unit_line_radius() {
        let c = PointCloud::from_positions((0..10).map(|i| Vec3::new(i as f64, 0.0, 0.0)).collect());
        let idx = PointIndex::build(&c).unwrap();
        assert_eq!(mean_knn_radius(&c, &idx, 1).unwrap(), 1.0);
        assert!(mean_knn_radius(&c, &idx, 10).is_err());
    }

    #[test]
    fn exact_plane_has_zero_error_bound() {
        let a = analyze(&plane_grid(30, 0.1), 20, OrientationFallback::Up).unwrap();
        assert!(a.stats.e_bar.abs() < 1e-15);
        assert!(a.stats.r_bar > 0.0);
    }

    #[test]
    fn error_bound_matches_brute_force_and_half_normal() {
        let sigma = 0.002;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let noise = Normal::new(0.0, sigma).unwrap();
        // random xy: a grid has exact distance ties that z-noise would break
        let c = PointCloud::from_positions(
            (0..100_000)
                .map(|_| Vec3::new(rng.random_range(0.0..16.0), rng.random_range(0.0..16.0), noise.sample(&mut rng)))
                .collect(),
        );
        let a = analyze(&c, DEFAULT_K, OrientationFallback::Up).unwrap();

        // brute force: every pair by exhaustive neighbor search
        let pts = &a.cloud.positions;
        let mut sum = 0.0;
        let mut count = 0usize;
        for i in (0..pts.len()).step_by(97) {
            let Some(nrm) = a.cloud.normal(i) else { continue };
            let mut d: Vec<(f64, usize)> = pts
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(j, q)| ((q - pts[i]).norm_squared(), j))
                .collect();
            d.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
            d.truncate(DEFAULT_K);
            d.retain(|x| x.0 <= a.stats.r_bar * a.stats.r_bar);
            let local: f64 = d.iter().map(|(_, j)| nrm.dot(&(pts[*j] - pts[i])).abs()).sum();
            let fast: f64 = a
                .index
                .restricted_neighborhood(i, &pts[i], DEFAULT_K, a.stats.r_bar)
                .iter()
                .map(|nb| nrm.dot(&(pts[nb.index] - pts[i])).abs())
                .sum();
            assert!((local - fast).abs() <= 1e-12 * (1.0 + local));
            sum += local;
            count += d.len();
        }
        assert!(count > 0 && sum > 0.0);

        // With the true normal ε = z_k - z_i ~ N(0, σ√2) because the seed is
        // noisy too, so E|ε| = 2σ/√π, not the half-normal σ√(2/π).
        let exact = 2.0 * sigma / std::f64::consts::PI.sqrt();
        let mut true_normals = a.cloud.clone();
        true_normals.normals = Some(vec![Some(Vec3::z()); c.len()]);
        let e_true = error_bound(&true_normals, &a.index, DEFAULT_K, a.stats.r_bar).unwrap();
        let rel = (e_true - exact).abs() / exact;
        assert!(rel < 0.02, "Ē with true normals = {e_true}, expected {exact} (rel {rel})");
        // fitted normals absorb part of the noise
        let half_normal = sigma * (2.0 / std::f64::consts::PI).sqrt();
        assert!(a.stats.e_bar < e_true && a.stats.e_bar > half_normal, "Ē = {}", a.stats.e_bar);
    }

    #[test]
    fn rigid_motion_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let pts: Vec<Vec3> = (0..2000)
            .map(|_| Vec3::new(rng.random_range(0.0..5.0), rng.random_range(0.0..5.0), rng.random_range(0.0..0.3)))
            .collect();
        let sensor = Vec3::new(2.5, 2.5, 10.0);
        let mut c = PointCloud::from_positions(pts);
        c.sensor_positions = Some(vec![sensor; c.len()]);
        let rot = Rotation3::from_euler_angles(0.3, -0.7, 1.1);
        let shift = Vec3::new(100.0, -40.0, 7.0);
        let mut moved = c.clone();
        for p in moved.positions.iter_mut() {
            *p = rot * *p + shift;
        }
        moved.sensor_positions = Some(vec![rot * sensor + shift; c.len()]);

        let a = analyze(&c, 20, OrientationFallback::Up).unwrap();
        let b = analyze(&moved, 20, OrientationFallback::Up).unwrap();
        assert!((a.stats.e_bar - b.stats.e_bar).abs() < 1e-9);
        for i in 0..c.len() {
            match (a.cloud.normal(i), b.cloud.normal(i)) {
                (Some(na), Some(nb)) => assert!((rot * na - nb).norm() < 1e-6),
                (None, None) => {}
                _ => panic!("normal presence differs at {i}"),
            }
            if let (Some(fa), Some(fb)) = (a.frames[i], b.frames[i]) {
                let (da, db) = (fa.descriptors().unwrap(), fb.descriptors().unwrap());
                assert!((da.linearity - db.linearity).abs() < 1e-9);
                assert!((da.planarity - db.planarity).abs() < 1e-9);
                assert!((da.sphericity - db.sphericity).abs() < 1e-9);
            }
        }
    }
}
