//! Projection noise through triangulation and the rig pose solve.

use eeprec_core::effector::{default_nm_config, rig_forward, solve_effector_pose, BallCenters, MarkerRigSpec};
use eeprec_core::eval::{compute_report, ErrorSource};
use eeprec_core::geometry::{Vec2, Vec3};
use eeprec_core::image::BallColor;
use eeprec_core::rng::rng_from_seed;
use eeprec_core::scene::SceneConfig;
use eeprec_core::tracking::{triangulate_ball, TriangulationMode};
use rand_distr::{Distribution, Normal};

#[test]
fn half_pixel_noise_gives_submillimeter_axes_with_z_best() {
    let scene = SceneConfig::default();
    let cams = scene.cameras().unwrap();
    let rig = MarkerRigSpec::default();
    let mut rng = rng_from_seed(2024);
    let noise = Normal::new(0.0, 0.5).unwrap();
    let (mut ball, mut effector) = (Vec::new(), Vec::new());
    for _ in 0..500 {
        let (pose, truth) = scene.sample_visible_rig(&cams, &rig, 0.3, &mut rng);
        let mut est = [Vec3::zeros(); 3];
        for (k, color) in [BallColor::Green, BallColor::Yellow, BallColor::Red].into_iter().enumerate() {
            let p = truth.get(color);
            let obs: Vec<(u32, Vec2)> = cams
                .iter()
                .enumerate()
                .map(|(i, c)| {
                    let px = c.project(&p).unwrap();
                    (i as u32, px + Vec2::new(noise.sample(&mut rng), noise.sample(&mut rng)))
                })
                .collect();
            est[k] = triangulate_ball(color, &obs, &cams, TriangulationMode::PairwiseMean).unwrap().center();
            ball.push(est[k] - p);
        }
        let observed = BallCenters {
            green: est[0],
            yellow: est[1],
            red: est[2],
        };
        let sol = solve_effector_pose(&observed, &rig, &default_nm_config()).unwrap();
        effector.push(sol.position() - pose.position);
        // the solve reproduces the observation geometry closely
        let back = rig_forward(&sol.pose(), &rig);
        assert!((back.green - observed.green).norm() < 3.0);
    }
    let b = compute_report(&ball, ErrorSource::Measurement).unwrap();
    let e = compute_report(&effector, ErrorSource::Measurement).unwrap();
    for r in [&b, &e] {
        assert!(r.rms.iter().all(|v| *v < 0.7), "{:?}", r.rms);
        assert!(r.rms_3d < 1.1, "{}", r.rms_3d);
        assert!(r.rms[2] < r.rms[0] && r.rms[2] < r.rms[1], "z should be best: {:?}", r.rms);
        let combined = r.rms.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((combined - r.rms_3d).abs() < 1e-9);
    }
    assert!(e.rms_3d < b.rms_3d);
}
