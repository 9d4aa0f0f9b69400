use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use splatsim_core::features::{analyze, OrientationFallback, DEFAULT_K};
use splatsim_core::resample::{compute_density, denoise, resample_cloud, run_adaptive_pipeline, PipelineOptions};
use splatsim_core::splatgen::{generate_splats, GenConfig, DEFAULT_BETA};
use splatsim_core::{synth, PointCloud, Splat, SplatSet, SurfaceGroup, Variant, Vec3};

/// Direct evaluation of the 3σ rule with brute-force neighborhoods.
fn oracle_denoise_keep(cloud: &PointCloud, k: usize, radius: f64) -> Vec<usize> {
    let mut remove = vec![false; cloud.len()];
    for i in 0..cloud.len() {
        let Some(n) = cloud.normal(i) else { continue };
        let p = cloud.positions[i];
        let mut nbrs: Vec<(f64, usize)> = (0..cloud.len())
            .filter(|&j| j != i)
            .map(|j| ((cloud.positions[j] - p).norm_squared(), j))
            .filter(|&(d2, _)| d2 <= radius * radius)
            .collect();
        nbrs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        nbrs.truncate(k);
        if nbrs.is_empty() {
            continue;
        }
        let d: Vec<f64> = nbrs.iter().map(|&(_, j)| n.dot(&(cloud.positions[j] - p)).abs()).collect();
        let mean = d.iter().sum::<f64>() / d.len() as f64;
        let sigma = (d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / d.len() as f64).sqrt();
        if sigma == 0.0 {
            continue;
        }
        for (&(_, j), &dj) in nbrs.iter().zip(&d) {
            if dj > 3.0 * sigma + 1e-9 {
                remove[j] = true;
            }
        }
    }
    (0..cloud.len()).filter(|&i| !remove[i]).collect()
}

fn grid(n: usize, spacing: f64, sigma: f64, seed: u64) -> PointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut positions = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let z = sigma * rng.random_range(-1.0..1.0);
            positions.push(Vec3::new(i as f64 * spacing, j as f64 * spacing, z));
        }
    }
    let len = positions.len();
    let mut c = PointCloud::from_positions(positions);
    c.sensor_positions = Some(vec![Vec3::new(0.0, 0.0, 5.0); len]);
    c
}

#[test]
fn denoise_matches_rule_oracle() {
    let cloud = grid(30, 0.05, 0.004, 2);
    let a = analyze(&cloud, 20, OrientationFallback::default()).unwrap();
    let out = denoise(&a.cloud, &a.index, 20, a.stats.r_bar).unwrap();
    let keep = oracle_denoise_keep(&a.cloud, 20, a.stats.r_bar);
    assert_eq!(out, a.cloud.select(&keep));
    assert!(out.len() < a.cloud.len());
}

#[test]
fn outlier_is_removed_and_rerun_is_a_noop() {
    let mut cloud = grid(20, 0.5, 0.0, 0);
    let center = Vec3::new(4.5, 4.5, 1.0);
    cloud.positions.push(center);
    cloud.sensor_positions.as_mut().unwrap().push(Vec3::new(0.0, 0.0, 5.0));
    let outlier = cloud.len() - 1;
    let a = analyze(&cloud, DEFAULT_K, OrientationFallback::default()).unwrap();
    assert!(a.stats.r_bar > 1.0);
    let once = denoise(&a.cloud, &a.index, DEFAULT_K, a.stats.r_bar).unwrap();
    assert!(!once.positions.contains(&a.cloud.positions[outlier]));
    assert!(once.positions.iter().all(|p| p.z == 0.0));

    let b = analyze(&once, DEFAULT_K, OrientationFallback::default()).unwrap();
    let twice = denoise(&b.cloud, &b.index, DEFAULT_K, b.stats.r_bar).unwrap();
    assert_eq!(twice.len(), b.cloud.len());
}

fn random_splats(n: usize, seed: u64) -> SplatSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let groups = [SurfaceGroup::Ground, SurfaceGroup::Surface, SurfaceGroup::NonSurface];
    SplatSet::new(
        (0..n)
            .map(|_| Splat {
                center: Vec3::new(rng.random_range(0.0..4.0), rng.random_range(0.0..4.0), rng.random_range(0.0..1.0)),
                normal: Vec3::z(),
                radius: 0.1,
                group: groups[rng.random_range(0..3)],
                label: None,
                frame_id: None,
            })
            .collect(),
    )
}

#[test]
fn density_counts_match_brute_force() {
    let set = random_splats(800, 4);
    let radius = 0.4;
    let stats = compute_density(&set, radius).unwrap();
    let eligible = |s: &Splat| s.group != SurfaceGroup::NonSurface;
    let mut sum = 0usize;
    let mut count = 0usize;
    for (i, s) in set.splats.iter().enumerate() {
        if !eligible(s) {
            assert_eq!(stats.per_splat[i], None);
            continue;
        }
        let c = set
            .splats
            .iter()
            .enumerate()
            .filter(|&(j, t)| j != i && eligible(t) && (t.center - s.center).norm() <= radius)
            .count();
        assert_eq!(stats.per_splat[i], Some(c), "splat {i}");
        sum += c;
        count += 1;
    }
    assert!((stats.mean - sum as f64 / count as f64).abs() < 1e-12);
}

#[test]
fn dihedral_resampling_keeps_the_sharp_edge() {
    let cloud = synth::dihedral(2.0, 0.05, 0.0, 0).unwrap();
    let a = analyze(&cloud, DEFAULT_K, OrientationFallback::default()).unwrap();
    let set = generate_splats(&a.cloud, &a.index, &GenConfig::new(Variant::AdaSemantic, a.stats)).unwrap();
    let density = compute_density(&set, a.stats.r_bar).unwrap();
    let (out, added) = resample_cloud(&a.cloud, &set, &density, Variant::AdaSemantic, DEFAULT_BETA).unwrap();
    assert!(!added.is_empty());
    assert_eq!(out.select(&(0..a.cloud.len()).collect::<Vec<_>>()), a.cloud);
    // each center sits within Ē of its on-plane seed, so midpoints do too
    let tol = a.stats.e_bar + 1e-9;
    for i in a.cloud.len()..out.len() {
        let p = out.positions[i];
        match out.label(i) {
            Some(synth::GROUND_LABEL) => assert!(p.z.abs() <= tol, "floor point off the floor: {p:?}"),
            Some(synth::WALL_LABEL) => assert!(p.x.abs() <= tol, "wall point off the wall: {p:?}"),
            other => panic!("unexpected label {other:?}"),
        }
    }
}

#[test]
fn new_points_are_valid_midpoints() {
    let cloud = synth::scan_lines(&synth::ScanLineSpec { lines: 12, ..Default::default() }).unwrap();
    let a = analyze(&cloud, DEFAULT_K, OrientationFallback::default()).unwrap();
    let set = generate_splats(&a.cloud, &a.index, &GenConfig::new(Variant::AdaSemantic, a.stats)).unwrap();
    let density = compute_density(&set, a.stats.r_bar).unwrap();
    let (out, added) = resample_cloud(&a.cloud, &set, &density, Variant::AdaSemantic, DEFAULT_BETA).unwrap();
    assert_eq!(out.len(), a.cloud.len() + added.len());
    let seeds = set.seeds.as_ref().unwrap();
    for (o, np) in added.iter().enumerate() {
        let (s, t) = (&set.splats[np.source], &set.splats[np.partner]);
        assert!(density.per_splat[np.source].unwrap() as f64 <= density.mean);
        assert!(((s.center + t.center) * 0.5 - np.position).norm() < 1e-12);
        assert!((s.center - t.center).norm() <= a.stats.r_bar + 1e-12);
        assert!(s.normal.dot(&t.normal) > DEFAULT_BETA);
        assert_eq!(s.label, t.label);
        let i = a.cloud.len() + o;
        assert_eq!(out.positions[i], np.position);
        assert_eq!(out.label(i), a.cloud.label(seeds[np.source]));
        assert_eq!(out.normal(i), Some(s.normal));
    }
    for (i, p) in added.iter().enumerate() {
        for q in &a.cloud.positions {
            assert!((p.position - q).norm() > 1e-9);
        }
        for r in &added[..i] {
            assert!((p.position - r.position).norm() > 1e-9);
        }
    }
}

#[test]
fn pipeline_bookkeeping() {
    let cloud = synth::dihedral(2.0, 0.05, 0.003, 1).unwrap();
    let out = run_adaptive_pipeline(&cloud, &PipelineOptions::default()).unwrap();
    assert_eq!(out.cloud.len(), cloud.len() - out.removed_points + out.added_points);
    let stages: Vec<&str> = out.timings.iter().map(|(s, _)| s.as_str()).collect();
    assert!(stages.contains(&"denoise"));
    assert!(out.splats.splats.iter().all(|s| s.validate().is_ok()));

    let plain = run_adaptive_pipeline(&cloud, &PipelineOptions { denoise: false, resample: false, ..Default::default() }).unwrap();
    assert_eq!(plain.cloud.len(), cloud.len());
    assert_eq!(plain.first_pass_splats, plain.splats.len());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn denoise_only_removes(seed in 0u64..1000, sigma in 0.0f64..0.02) {
        let cloud = grid(14, 0.05, sigma, seed);
        let a = analyze(&cloud, 16, OrientationFallback::default()).unwrap();
        let out = denoise(&a.cloud, &a.index, 16, a.stats.r_bar).unwrap();
        prop_assert!(out.len() <= a.cloud.len());
        let mut it = a.cloud.positions.iter();
        for p in &out.positions {
            prop_assert!(it.any(|q| q == p), "kept points stay in input order");
        }
    }

    #[test]
    fn resampling_only_appends(seed in 0u64..1000, sigma in 0.0f64..0.01) {
        let cloud = grid(16, 0.05, sigma, seed);
        let a = analyze(&cloud, 16, OrientationFallback::default()).unwrap();
        let set = generate_splats(&a.cloud, &a.index, &GenConfig::new(Variant::Basic, a.stats)).unwrap();
        let density = compute_density(&set, a.stats.r_bar).unwrap();
        let (out, added) = resample_cloud(&a.cloud, &set, &density, Variant::Basic, DEFAULT_BETA).unwrap();
        prop_assert_eq!(out.len(), a.cloud.len() + added.len());
        prop_assert_eq!(&out.positions[..a.cloud.len()], &a.cloud.positions[..]);
        prop_assert!(added.windows(2).all(|w| w[0].source <= w[1].source));
        let per_source = added.iter().fold(std::collections::BTreeMap::new(), |mut m, p| {
            *m.entry(p.source).or_insert(0usize) += 1;
            m
        });
        prop_assert!(per_source.values().all(|&c| c <= 8));
    }
}
