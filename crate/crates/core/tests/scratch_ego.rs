use rigid_accum_core::grid::{pillarize, GeometricFeaturizer, GridExtent, PillarSize};
use rigid_accum_core::matcher::{estimate_ego_motion, EgoEstimateConfig};
use rigid_accum_core::sim::{simulate, EgoMotionSpec, SceneSpec};
use rigid_accum_core::{Real, Vec3};

#[test]
fn scratch_matcher_on_sim_pair() {
    let spec = SceneSpec {
        frames: 5,
        interval: 0.1,
        static_points: 4000,
        ground_points: 800,
        extent: 20.0,
        ego: EgoMotionSpec { velocity: Vec3::new(6.0, 1.0, 0.0), yaw_rate: 0.05 },
        noise_sigma: 0.02,
        dropout: 0.0,
        max_range: Real::INFINITY,
        seed: 42,
        objects: vec![],
    };
    let scene = simulate(&spec).unwrap();
    let extent = GridExtent::centered(26.0);
    let pillar = PillarSize { x: 0.25, y: 0.25, z: 8.0 };
    let grids: Vec<_> = scene
        .sequence
        .frames()
        .iter()
        .map(|f| pillarize(f, extent, pillar, &GeometricFeaturizer { with_intensity: false }).unwrap())
        .collect();
    for t in [2usize, 5] {
        let elapsed = (t - 1) as Real * 0.1;
        let fg_src = vec![0.0; grids[t - 1].shape().0 * grids[t - 1].shape().1];
        let fg_dst = vec![0.0; grids[0].shape().0 * grids[0].shape().1];
        for (label, scale, iters, n_ego) in [
            ("base 1e6/5it/1024", 1.0e6, 5, 1024usize),
            ("soft  1/5it/1024", 1.0, 5, 1024),
            ("mid  30/5it/1024", 30.0, 5, 1024),
            ("mid  30/50it/1024", 30.0, 50, 1024),
            ("base 1e6/5it/4096", 1.0e6, 5, 4096),
            ("mid  30/5it/4096", 30.0, 5, 4096),
        ] {
            let cfg = EgoEstimateConfig {
                elapsed,
                v_max: 30.0,
                n_ego,
                sinkhorn_iterations: iters,
                cost_scale: scale,
                seed: 7,
                ..EgoEstimateConfig::default()
            };
            let (est, diag) =
                estimate_ego_motion(&grids[t - 1], &fg_src, &grids[0], &fg_dst, &cfg).unwrap();
            let truth = &scene.ego[t - 1];
            // report translation error of the estimate vs ground truth pose
            let terr = (est.translation - truth.translation).norm();
            let probe = Vec3::new(5.0, -3.0, 1.0);
            let perr = (est.apply(probe) - truth.apply(probe)).norm();
            println!(
                "t={t} {label}: terr={terr:.4} probe_err={perr:.4} inlier={:.3} resid={:.3} masked={}",
                diag.inlier_score, diag.mean_residual, diag.masked_rows
            );
        }
        println!("t={t} truth translation = {:?}", scene.ego[t - 1].translation);
    }
}
