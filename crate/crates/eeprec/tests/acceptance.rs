//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any fails. `EEPREC_ACCEPTANCE=1,4` runs a subset.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use eeprec::formats::tables::{ImprovementRow, ReportRow, SplitRow};
use eeprec::formats::{dataset, read_table};
use eeprec::manifest::file_sha256;
use eeprec::pipeline::seeded_training;
use eeprec::{run_stage, CliError, PipelineConfig, Stage};
use eeprec_core::calibration::{refine_camera_pose, ChessboardPrior};
use eeprec_core::effector::{default_nm_config, solve_effector_pose, BallCenters, MarkerRigSpec};
use eeprec_core::geometry::{Ray, Vec2, Vec3};
use eeprec_core::image::{
    color_path_mask, detect_ball_cached, edge_path, render_scene, BallColor, DetectedCircle, DetectorConfig, EdgeCache,
    HoughAccumulator, RenderSettings, TUNER_TOLERANCE,
};
use eeprec_core::nn::{split_by_trajectory, split_random_points, train, Activation, Dataset, ErrorCorrector, Mlp, SplitSpec};
use eeprec_core::optim::LMConfig;
use eeprec_core::rng::{rng_from_seed, stage_seed};
use eeprec_core::scene::SceneConfig;
use eeprec_core::tracking::{triangulate_ball, triangulate_pair, update_track, CircleTrack, TrackStatus, TrackerConfig, TriangulationMode};
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

// calibration
const CAL_POSITION_TOL_MM: f64 = 1e-6;
const CAL_ANGLE_TOL_RAD: f64 = 1e-8;
const CAL_NOISY_MEDIAN_MM: f64 = 1.0;
const CAL_TRIALS: usize = 100;
const CAL_SECONDS: f64 = 5.0;
// detection
const CORPUS_FRAMES: usize = 200;
const MAX_OCCLUSION: f64 = 0.3;
const MIN_DETECTION_RATE: f64 = 0.99;
const MAX_CENTER_ERROR_PX: f64 = 1.0;
const MAX_FALSE_POSITIVE_RATE: f64 = 0.005;
const CORPUS_SECONDS: f64 = 120.0;
// triangulation and pose
const EXACT_MM: f64 = 1e-9;
const SKEW_PAIRS: usize = 1000;
const PIXEL_NOISE: f64 = 0.5;
const CHAIN_POSES: usize = 1000;
const BALL_RMS_BAND_MM: (f64, f64) = (0.5, 1.5);
const EFFECTOR_RATIO: f64 = 0.75;
const CHAIN_SECONDS: f64 = 60.0;
// gradients
const FD_STEP: f64 = 1e-6;
const GRAD_REL_TOL: f64 = 1e-5;
/// Gradients smaller than this are compared absolutely.
const GRAD_FLOOR: f64 = 1e-4;
// end to end
const SEED: u64 = 42;
const SIM_RMS_BAND_MM: (f64, f64) = (3.0, 10.0);
const SPLIT_TARGETS: [usize; 3] = [30_000, 3_000, 3_000];
const SPLIT_SIZE_TOL: f64 = 0.10;
const MIN_RMS_REDUCTION_PCT: f64 = 80.0;
const MIN_SD_REDUCTION_PCT: f64 = 50.0;
const MAX_CORRECTED_RMS_MM: f64 = 1.2;
const TRAIN_SECONDS: f64 = 1800.0;
const MAX_LATENCY_MS: f64 = 1.0;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(checks: &[(bool, String)]) -> Verdict {
    let pass = checks.iter().all(|c| c.0);
    let detail = checks
        .iter()
        .map(|(ok, s)| if *ok { s.clone() } else { format!("[failed] {s}") })
        .collect::<Vec<_>>()
        .join("; ");
    Verdict { pass, detail }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn rms(v: impl IntoIterator<Item = f64>) -> f64 {
    let (mut s, mut n) = (0.0, 0usize);
    for x in v {
        s += x;
        n += 1;
    }
    (s / n as f64).sqrt()
}

fn camera_refinement() -> Verdict {
    let started = Instant::now();
    let scene = SceneConfig::default();
    let cams = scene.cameras().unwrap();
    let lm = LMConfig::default();
    let mut rng = rng_from_seed(101);

    let exact = scene.observe_markers(&cams, 0.0, &mut rng).unwrap();
    let (mut worst_pos, mut worst_ang, mut marker_count) = (0.0f64, 0.0f64, usize::MAX);
    for (id, cam) in cams.iter().enumerate() {
        marker_count = marker_count.min(exact.correspondences(id as u32).len());
        let prior = ChessboardPrior::perturbed(&cam.pose, 40.0, 5f64.to_radians(), &mut rng);
        let out = refine_camera_pose(id as u32, &prior, &cam.intrinsics, &exact, &lm).unwrap();
        worst_pos = worst_pos.max((out.pose.position - cam.pose.position).norm());
        worst_ang = worst_ang.max(out.pose.orientation.angle_to(&cam.pose.orientation));
    }

    let mut errors = Vec::with_capacity(CAL_TRIALS * cams.len());
    for _ in 0..CAL_TRIALS {
        let noisy = scene.observe_markers(&cams, PIXEL_NOISE, &mut rng).unwrap();
        for (id, cam) in cams.iter().enumerate() {
            let prior = ChessboardPrior::perturbed(&cam.pose, 40.0, 5f64.to_radians(), &mut rng);
            let out = refine_camera_pose(id as u32, &prior, &cam.intrinsics, &noisy, &lm).unwrap();
            errors.push((out.pose.position - cam.pose.position).norm());
        }
    }
    let med = median(errors);
    let secs = started.elapsed().as_secs_f64();
    verdict(&[
        (cams.len() == 4 && marker_count == 16, format!("{} cameras x {marker_count} markers", cams.len())),
        (worst_pos <= CAL_POSITION_TOL_MM, format!("noiseless position error {worst_pos:.2e} mm")),
        (worst_ang <= CAL_ANGLE_TOL_RAD, format!("noiseless angle error {worst_ang:.2e} rad")),
        (med < CAL_NOISY_MEDIAN_MM, format!("0.5 px median position error {med:.3} mm")),
        (secs < CAL_SECONDS, format!("{secs:.2} s")),
    ])
}

/// Rebuilds the accumulator the detector used and checks that its threshold
/// finds exactly one circle while one tolerance lower finds more.
fn tuner_bound_holds(img: &eeprec_core::image::RasterImage, color: BallColor, cfg: &DetectorConfig, threshold: f64, sigma: f64) -> bool {
    let mut params = cfg.hough.clone();
    params.blur_sigma = sigma;
    let mask = color_path_mask(img, color, params.nominal_radius());
    let edges = edge_path(img, sigma, params.canny_high).masked(&mask);
    let acc = HoughAccumulator::build(&edges, &params).unwrap();
    acc.count(threshold, params.d_min) == 1 && acc.count(threshold - TUNER_TOLERANCE, params.d_min) > 1
}

fn detection_corpus() -> Verdict {
    let started = Instant::now();
    let scene = SceneConfig::default();
    let cams = scene.cameras().unwrap();
    let rig = MarkerRigSpec::default();
    let cfg = DetectorConfig::default();
    let mut rng = rng_from_seed(202);
    let (mut total, mut hits, mut false_pos, mut worst_occ, mut worst_err) = (0usize, 0usize, 0usize, 0.0f64, 0.0f64);
    let (mut tunable, mut verified) = (0usize, 0usize);
    let mut verify_secs = 0.0;
    for _ in 0..CORPUS_FRAMES {
        let (_, balls) = scene.sample_visible_rig(&cams, &rig, MAX_OCCLUSION, &mut rng);
        let views = render_scene(&cams, &balls, rig.ball_radius, &RenderSettings::default(), &mut rng);
        for v in &views {
            let mut cache = EdgeCache::new(&v.image);
            for o in &v.circles {
                total += 1;
                worst_occ = worst_occ.max(o.occluded_fraction);
                let out = detect_ball_cached(&mut cache, o.color, &cfg).unwrap();
                if let Some(c) = out.accepted() {
                    let e = (c.center[0] - o.center[0]).hypot(c.center[1] - o.center[1]);
                    if e <= MAX_CENTER_ERROR_PX {
                        hits += 1;
                        worst_err = worst_err.max(e);
                    } else {
                        false_pos += 1;
                    }
                }
                if out.tunable {
                    tunable += 1;
                    let t = Instant::now();
                    if tuner_bound_holds(&v.image, o.color, &cfg, out.threshold, out.blur_sigma) {
                        verified += 1;
                    }
                    verify_secs += t.elapsed().as_secs_f64();
                }
            }
        }
    }
    let secs = started.elapsed().as_secs_f64() - verify_secs;
    let rate = hits as f64 / total as f64;
    let fp_rate = false_pos as f64 / total as f64;
    verdict(&[
        (total == CORPUS_FRAMES * 4 * 3, format!("{total} balls")),
        (worst_occ <= MAX_OCCLUSION, format!("max occlusion {worst_occ:.3}")),
        (rate >= MIN_DETECTION_RATE, format!("detected within 1 px {hits}/{total} ({:.2}%)", 100.0 * rate)),
        (worst_err <= MAX_CENTER_ERROR_PX, format!("max center error {worst_err:.3} px")),
        (fp_rate <= MAX_FALSE_POSITIVE_RATE, format!("false positives {false_pos} ({:.3}%)", 100.0 * fp_rate)),
        (tunable > 0 && verified == tunable, format!("tuner bound verified {verified}/{tunable} tunable")),
        (secs < CORPUS_SECONDS, format!("{secs:.1} s (+{verify_secs:.1} s verification)")),
    ])
}

fn state_machine() -> Verdict {
    let cfg = TrackerConfig::default();
    let last = [100.0, 100.0];
    let circle = |dx: f64| DetectedCircle {
        center: [last[0] + dx, last[1]],
        radius: 12.0,
        color: BallColor::Yellow,
        score: 40.0,
    };
    // jumps straddling the motion threshold
    let jumps = [0.0, cfg.motion_threshold - 1e-9, cfg.motion_threshold, cfg.motion_threshold + 1e-9, 3.0 * cfg.motion_threshold];
    let c = cfg.consistency_threshold;
    let consistencies = [None, Some(0.0), Some(c - 1e-9), Some(c), Some(c + 1e-9), Some(f64::INFINITY)];
    let mut cases = 0usize;
    let mut mismatches = Vec::new();
    for status in [TrackStatus::Effective, TrackStatus::Suspended] {
        for good in 0..=cfg.reinstate_frames + 3 {
            for history in [None, Some(last)] {
                for jump in jumps.iter().map(Some).chain([None]) {
                    for color_ok in [false, true] {
                        for consistency in consistencies {
                            cases += 1;
                            let track = CircleTrack {
                                status,
                                last_center: history,
                                last_radius: history.map(|_| 12.0),
                                consecutive_good_frames: good,
                                ..CircleTrack::new(2, BallColor::Yellow)
                            };
                            let det = jump.map(|d| circle(*d));
                            let got = update_track(&track, det.as_ref(), color_ok, consistency, &cfg);

                            let detected = det.is_some();
                            let moved = history.is_some() && jump.is_some_and(|d| *d > cfg.motion_threshold);
                            let want = match status {
                                TrackStatus::Effective if detected && color_ok && !moved => (TrackStatus::Effective, good + 1),
                                TrackStatus::Effective => (TrackStatus::Suspended, 0),
                                TrackStatus::Suspended => {
                                    let consistent = consistency.is_some_and(|v| v <= c);
                                    if detected && color_ok && consistent {
                                        let n = good + 1;
                                        (if n > 5 { TrackStatus::Effective } else { TrackStatus::Suspended }, n)
                                    } else {
                                        (TrackStatus::Suspended, 0)
                                    }
                                }
                            };
                            let want_center = det.map(|d| d.center).or(history);
                            if (got.status, got.consecutive_good_frames) != want || got.last_center != want_center {
                                mismatches.push(format!(
                                    "{status:?} good={good} hist={} jump={jump:?} color={color_ok} cons={consistency:?}",
                                    history.is_some()
                                ));
                            }
                        }
                    }
                }
            }
        }
    }
    // walk a suspended track through good frames one at a time
    let mut t = CircleTrack {
        status: TrackStatus::Suspended,
        last_center: Some(last),
        ..CircleTrack::new(0, BallColor::Yellow)
    };
    let mut reinstated_after = None;
    for k in 1..=10 {
        t = update_track(&t, Some(&circle(0.0)), true, Some(1.0), &cfg);
        if t.status == TrackStatus::Effective {
            reinstated_after = Some(k);
            break;
        }
    }
    verdict(&[
        (mismatches.is_empty(), format!("{cases} combinations, {} mismatches {:?}", mismatches.len(), mismatches.first())),
        (cfg.reinstate_frames == 5, format!("reinstate_frames {}", cfg.reinstate_frames)),
        (reinstated_after == Some(6), format!("reinstated after {reinstated_after:?} good frames")),
    ])
}

/// Closest-point midpoint by bisection on the derivative of the squared
/// distance from a point on line 1 to line 2.
fn brute_midpoint(r1: &Ray, r2: &Ray) -> Vec3 {
    let foot = |p: &Vec3| r2.origin + r2.direction * (p - r2.origin).dot(&r2.direction);
    let slope = |s: f64| {
        let p = r1.point_at(s);
        (p - foot(&p)).dot(&r1.direction)
    };
    let (mut lo, mut hi) = (-1.0e6, 1.0e6);
    assert!(slope(lo) < 0.0 && slope(hi) > 0.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if slope(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let p = r1.point_at(0.5 * (lo + hi));
    (p + foot(&p)) * 0.5
}

fn triangulation_and_pose() -> Verdict {
    let started = Instant::now();
    let scene = SceneConfig::default();
    let cams = scene.cameras().unwrap();
    let rig = MarkerRigSpec::default();
    let mut rng = rng_from_seed(404);

    let mut worst_exact = 0.0f64;
    for _ in 0..1000 {
        let p = scene.workspace.sample(&mut rng);
        let obs: Vec<(u32, Vec2)> = cams.iter().enumerate().map(|(i, c)| (i as u32, c.project(&p).unwrap())).collect();
        for mode in [TriangulationMode::PairwiseMean, TriangulationMode::LeastSquares] {
            let b = triangulate_ball(BallColor::Red, &obs, &cams, mode).unwrap();
            worst_exact = worst_exact.max((b.center() - p).norm());
        }
    }

    let mut worst_pair = 0.0f64;
    let mut skew = 0usize;
    while skew < SKEW_PAIRS {
        let mut v = || Vec3::new(rng.random_range(-100.0..100.0), rng.random_range(-100.0..100.0), rng.random_range(-100.0..100.0));
        let (r1, r2) = (Ray::new(v(), v()).unwrap(), Ray::new(v(), v()).unwrap());
        // skew: non-parallel and not coplanar
        let n = r1.direction.cross(&r2.direction);
        if n.norm() < 0.05 || (r2.origin - r1.origin).dot(&n).abs() < 1e-3 {
            continue;
        }
        skew += 1;
        let m = triangulate_pair(&r1, &r2).unwrap();
        worst_pair = worst_pair.max((m - brute_midpoint(&r1, &r2)).norm());
    }

    let noise = Normal::new(0.0, PIXEL_NOISE).unwrap();
    let (mut ball_sq, mut eff_sq) = (Vec::new(), Vec::new());
    for _ in 0..CHAIN_POSES {
        let (pose, balls) = scene.sample_visible_rig(&cams, &rig, 1.0, &mut rng);
        let mut est = [Vec3::zeros(); 3];
        for (k, color) in [BallColor::Green, BallColor::Yellow, BallColor::Red].into_iter().enumerate() {
            let p = balls.get(color);
            let obs: Vec<(u32, Vec2)> = cams
                .iter()
                .enumerate()
                .map(|(i, c)| (i as u32, c.project(&p).unwrap() + Vec2::new(noise.sample(&mut rng), noise.sample(&mut rng))))
                .collect();
            est[k] = triangulate_ball(color, &obs, &cams, TriangulationMode::PairwiseMean).unwrap().center();
            ball_sq.push((est[k] - p).norm_squared());
        }
        let observed = BallCenters {
            green: est[0],
            yellow: est[1],
            red: est[2],
        };
        let sol = solve_effector_pose(&observed, &rig, &default_nm_config()).unwrap();
        eff_sq.push((sol.position() - pose.position).norm_squared());
    }
    let (ball, eff) = (rms(ball_sq), rms(eff_sq));
    let secs = started.elapsed().as_secs_f64();
    verdict(&[
        (worst_exact <= EXACT_MM, format!("noiseless 4-view error {worst_exact:.2e} mm")),
        (worst_pair <= EXACT_MM, format!("pair vs oracle {worst_pair:.2e} over {skew} skew pairs")),
        (
            (BALL_RMS_BAND_MM.0..=BALL_RMS_BAND_MM.1).contains(&ball),
            format!("ball rms {ball:.4} mm"),
        ),
        (eff <= EFFECTOR_RATIO * ball, format!("effector rms {eff:.4} mm (ratio {:.3})", eff / ball)),
        (secs < CHAIN_SECONDS, format!("{secs:.1} s")),
    ])
}

fn perturbed_mlp(sizes: &[usize], seed: u64) -> Mlp<f64> {
    let mut rng = rng_from_seed(seed);
    let mut m = Mlp::<f64>::new(sizes, Activation::Sigmoid, &mut rng).unwrap();
    for p in m.params_mut() {
        *p += 0.3 * rng.random_range(-1.0..1.0);
    }
    m
}

fn worst_gradient_error(sizes: &[usize], seed: u64) -> f64 {
    let m = perturbed_mlp(sizes, seed);
    let mut rng = rng_from_seed(seed ^ 0xa5a5);
    let batch = 6;
    let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| StandardNormal.sample(&mut rng)).collect() };
    let x = draw(batch * sizes[0]);
    let y = draw(batch * sizes[sizes.len() - 1]);
    let (_, grad) = m.loss_and_gradient(&x, &y, batch, 0.0).unwrap();
    let mut worst = 0.0f64;
    for k in 0..m.params().len() {
        let at = |delta: f64| {
            let mut p = m.clone();
            p.params_mut()[k] += delta;
            p.loss_and_gradient(&x, &y, batch, 0.0).unwrap().0
        };
        let fd = (at(FD_STEP) - at(-FD_STEP)) / (2.0 * FD_STEP);
        let rel = (fd - grad[k]).abs() / fd.abs().max(grad[k].abs()).max(GRAD_FLOOR);
        worst = worst.max(rel);
    }
    worst
}

fn nn_gradients() -> Verdict {
    let affine = worst_gradient_error(&[5, 3], 501);
    let one_hidden = worst_gradient_error(&[4, 6, 2], 502);
    let two_hidden = worst_gradient_error(&[6, 5, 4, 3], 503);

    let sizes = [118, 600, 500, 400, 3];
    let m = perturbed_mlp(&sizes, 504).cast::<f32>();
    let mut rng = rng_from_seed(505);
    let rows = 40;
    let x: Vec<f32> = (0..rows * 118).map(|_| StandardNormal.sample(&mut rng)).map(|v: f64| v as f32).collect();
    let together = m.predict(&x, rows).unwrap();
    let row = |r: usize| &x[r * 118..(r + 1) * 118];
    let mut mismatched = 0;
    for r in 0..rows {
        let alone = m.predict(row(r), 1).unwrap();
        // a different batch: this row with a few others in another order
        let mut mixed: Vec<f32> = Vec::new();
        for o in [(r + 7) % rows, r, (r + 3) % rows] {
            mixed.extend_from_slice(row(o));
        }
        let in_mix = m.predict(&mixed, 3).unwrap();
        let want = &together[r * 3..(r + 1) * 3];
        let same = |a: &[f32]| a.iter().zip(want).all(|(p, q)| p.to_bits() == q.to_bits());
        if !same(&alone) || !same(&in_mix[3..6]) {
            mismatched += 1;
        }
    }
    verdict(&[
        (affine < GRAD_REL_TOL, format!("affine {affine:.1e}")),
        (one_hidden < GRAD_REL_TOL, format!("affine+batch-norm+sigmoid {one_hidden:.1e}")),
        (two_hidden < GRAD_REL_TOL, format!("two hidden layers {two_hidden:.1e}")),
        (mismatched == 0, format!("batch-composition bit mismatches {mismatched}/{rows}")),
    ])
}

/// Artifacts of the seed-42 pipeline run that later criteria share.
struct PipelineRun {
    cfg: PipelineConfig,
    root: PathBuf,
    files: BTreeMap<String, String>,
    stage_seconds: BTreeMap<&'static str, f64>,
    summaries: BTreeMap<&'static str, Vec<(String, String)>>,
    failures: Vec<String>,
}

fn snapshot(root: &Path) -> BTreeMap<String, String> {
    fn walk(dir: &Path, root: &Path, out: &mut BTreeMap<String, String>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(&p, root, out);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, file_sha256(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

fn run_pipeline_once(root: &Path) -> PipelineRun {
    let cfg = PipelineConfig::load(None, &[format!("seed={SEED}"), format!("paths.root={}", root.display())]).unwrap();
    let mut run = PipelineRun {
        cfg: cfg.clone(),
        root: root.to_path_buf(),
        files: BTreeMap::new(),
        stage_seconds: BTreeMap::new(),
        summaries: BTreeMap::new(),
        failures: Vec::new(),
    };
    for stage in Stage::ALL {
        let started = Instant::now();
        let result = run_stage(stage, &cfg);
        run.stage_seconds.insert(stage.name(), started.elapsed().as_secs_f64());
        match result {
            Ok(r) => {
                run.summaries.insert(stage.name(), r.summary);
            }
            // artifacts are still written; the criteria judge the numbers
            Err(CliError::Threshold(msg)) => run.failures.push(format!("{}: {msg}", stage.name())),
            Err(e) => panic!("stage {} failed: {e}", stage.name()),
        }
    }
    run.files = snapshot(root);
    run
}

fn summary_value(run: &PipelineRun, stage: &str, key: &str) -> Option<f64> {
    run.summaries.get(stage)?.iter().find(|(k, _)| k == key)?.1.parse().ok()
}

fn load_dataset(run: &PipelineRun) -> Dataset {
    dataset::read(&run.cfg.path(&run.cfg.paths.dataset)).unwrap()
}

fn end_to_end(run: &PipelineRun, ds: &Dataset) -> Verdict {
    let sim_rms = rms(ds.pairs.iter().map(|p| p.error.iter().map(|e| e * e).sum::<f64>()));
    let (spec, _) = seeded_training(&run.cfg, stage_seed(SEED, "train"));
    let split = split_by_trajectory(ds, &spec).unwrap();
    let sizes = [split.train.len(), split.val.len(), split.test.len()];
    let sizes_ok = sizes
        .iter()
        .zip(SPLIT_TARGETS)
        .all(|(n, t)| (*n as f64 - t as f64).abs() <= SPLIT_SIZE_TOL * t as f64);

    let reports = run.cfg.path(&run.cfg.paths.reports);
    let imp: Vec<ImprovementRow> = read_table(&reports.join("improvement.csv")).unwrap();
    let rows: Vec<ReportRow> = read_table(&reports.join("correction_report.csv")).unwrap();
    let corrected = rows.iter().find(|r| r.source == "corrected").unwrap();
    let reported = rows.iter().find(|r| r.source == "reported").unwrap();
    let imp = &imp[0];
    let train_secs = run.stage_seconds["train"];
    let latency = summary_value(run, "estimate", "median single-record latency ms").unwrap_or(f64::INFINITY);
    verdict(&[
        (
            (SIM_RMS_BAND_MM.0..=SIM_RMS_BAND_MM.1).contains(&sim_rms),
            format!("simulated rms {sim_rms:.3} mm over {} samples", ds.len()),
        ),
        (sizes_ok, format!("split {}/{}/{} by trajectory", sizes[0], sizes[1], sizes[2])),
        (corrected.count == split.test.len(), format!("held-out records {}", corrected.count)),
        (
            imp.rms_reduction_pct >= MIN_RMS_REDUCTION_PCT,
            format!("rms {:.3} -> {:.3} mm ({:.1}%)", reported.rms_3d, corrected.rms_3d, imp.rms_reduction_pct),
        ),
        (
            imp.sd_reduction_pct >= MIN_SD_REDUCTION_PCT,
            format!("sd {:.3} -> {:.3} mm ({:.1}%)", imp.sd_before, imp.sd_after, imp.sd_reduction_pct),
        ),
        (corrected.rms_3d <= MAX_CORRECTED_RMS_MM, format!("corrected rms {:.3} mm", corrected.rms_3d)),
        (train_secs < TRAIN_SECONDS, format!("training {train_secs:.0} s")),
        (latency < MAX_LATENCY_MS, format!("median latency {latency:.4} ms")),
        (run.failures.is_empty(), format!("stage threshold failures {:?}", run.failures)),
    ])
}

fn residual_rms(model: &ErrorCorrector<f32>, ds: &Dataset) -> f64 {
    let pred = model.predict_dataset(ds).unwrap();
    rms(ds.pairs.iter().zip(&pred).map(|(p, q)| (0..3).map(|j| (p.error[j] - q[j]).powi(2)).sum::<f64>()))
}

fn split_integrity(run: &PipelineRun, ds: &Dataset) -> Verdict {
    let rows: Vec<SplitRow> = read_table(&run.cfg.path(&run.cfg.paths.models).join("split.csv")).unwrap();
    let mut seen = BTreeMap::new();
    let mut duplicated = 0;
    for r in &rows {
        if seen.insert(r.trajectory_id, r.split.clone()).is_some() {
            duplicated += 1;
        }
    }
    let all: BTreeSet<u32> = ds.trajectory_ids().collect();
    let ids = |name: &str| -> Vec<u32> { seen.iter().filter(|(_, s)| *s == name).map(|(id, _)| *id).collect() };
    let parts: Vec<BTreeSet<u32>> = ["train", "val", "test"]
        .iter()
        .map(|n| ds.select_trajectories(&ids(n)).unwrap().trajectory_ids().collect())
        .collect();
    let disjoint = parts[0].is_disjoint(&parts[1]) && parts[0].is_disjoint(&parts[2]) && parts[1].is_disjoint(&parts[2]);
    let covered = seen.keys().copied().collect::<BTreeSet<_>>() == all;

    // trajectory-split test rms of the pipeline model
    let test = ds.select_trajectories(&ids("test")).unwrap();
    let traj_model: ErrorCorrector<f32> = eeprec::formats::model::read(&run.cfg.path(&run.cfg.paths.models).join("model.bin")).unwrap();
    let traj_rms = residual_rms(&traj_model, &test);

    // a model fit on points drawn at random from the training trajectories
    let mut pool_ids = ids("train");
    pool_ids.extend(ids("val"));
    let pool = ds.select_trajectories(&pool_ids).unwrap();
    let spec = SplitSpec {
        train: 0.8,
        val: 0.1,
        test: 0.1,
        tolerance: 0.01,
        seed: stage_seed(SEED, "acceptance/points"),
    };
    let points = split_random_points(&pool, &spec).unwrap();
    let (_, training) = seeded_training(&run.cfg, stage_seed(SEED, "train"));
    let started = Instant::now();
    let outcome = train::<f32>(&points.train, &points.val, &training).unwrap();
    let secs = started.elapsed().as_secs_f64();
    let seen_rms = residual_rms(&outcome.model, &points.test);
    let unseen_rms = residual_rms(&outcome.model, &test);
    verdict(&[
        (duplicated == 0 && covered, format!("{} trajectories assigned once", seen.len())),
        (disjoint, "no trajectory id in two splits".to_string()),
        (true, format!("trajectory-split test rms {traj_rms:.3} mm")),
        (
            unseen_rms >= seen_rms,
            format!("point-split model: random-point test {seen_rms:.3} mm, unseen trajectories {unseen_rms:.3} mm ({secs:.0} s)"),
        ),
    ])
}

fn determinism(first: &PipelineRun) -> Verdict {
    std::fs::remove_dir_all(&first.root).unwrap();
    let second = run_pipeline_once(&first.root);
    let differing: Vec<&String> = first
        .files
        .keys()
        .chain(second.files.keys())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .filter(|k| first.files.get(*k) != second.files.get(*k))
        .collect();
    verdict(&[
        (first.files.len() > 100, format!("{} artifacts", first.files.len())),
        (differing.is_empty(), format!("{} differ {:?}", differing.len(), differing.iter().take(5).collect::<Vec<_>>())),
    ])
}

fn main() -> ExitCode {
    let selected: Option<BTreeSet<u32>> = std::env::var("EEPREC_ACCEPTANCE")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let wanted = |n: u32| selected.as_ref().is_none_or(|s| s.contains(&n));

    let mut results: Vec<(u32, &str, Verdict)> = Vec::new();
    let mut report = |n: u32, name: &'static str, v: Verdict| {
        println!("criterion {n} {}: {name}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        results.push((n, name, v));
    };
    if wanted(1) {
        report(1, "camera refinement", camera_refinement());
    }
    if wanted(2) {
        report(2, "detection corpus", detection_corpus());
    }
    if wanted(3) {
        report(3, "track state machine", state_machine());
    }
    if wanted(4) {
        report(4, "triangulation and pose", triangulation_and_pose());
    }
    if wanted(5) {
        report(5, "network gradients", nn_gradients());
    }
    if wanted(6) || wanted(7) || wanted(8) {
        let dir = tempfile::tempdir().unwrap();
        let started = Instant::now();
        let run = run_pipeline_once(&dir.path().join("run"));
        println!("seed {SEED} pipeline run: {:.0} s", started.elapsed().as_secs_f64());
        let ds = load_dataset(&run);
        if wanted(6) {
            report(6, "end-to-end correction", end_to_end(&run, &ds));
        }
        if wanted(7) {
            report(7, "split integrity", split_integrity(&run, &ds));
        }
        if wanted(8) {
            report(8, "determinism", determinism(&run));
        }
    }
    let failed = results.iter().filter(|r| !r.2.pass).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
