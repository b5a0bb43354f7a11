//! The pipeline stages. Each stage reads only files written by earlier
//! stages (or the config), writes its artifacts under the run root and
//! leaves a manifest next to them in the manifests directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use eeprec_core::calibration::{refine_camera_pose, ChessboardPrior, Marker, MarkerSet};
use eeprec_core::effector::rig_forward;
use eeprec_core::eval::{compute_report, improvement_summary, ErrorSource};
use eeprec_core::geometry::{CameraModel, Vec2, Vec3};
use eeprec_core::image::{detect_ball_cached, render_scene, BallColor, EdgeCache, RasterImage};
use eeprec_core::nn::{split_by_trajectory, train_with, Dataset, ErrorCorrector, SplitKind, SplitSpec, TrainingConfig};
use eeprec_core::rng::{stage_rng, stage_seed};
use eeprec_core::robot::{generate_teleop_trajectories, simulate_run, workspace_coverage};
use eeprec_core::tracking::FrameTracker;

use crate::config::{EstimateScope, PipelineConfig};
use crate::error::CliError;
use crate::formats::tables::*;
use crate::formats::{dataset, model, ppm, read_table, write_table};
use crate::manifest::Manifest;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Stage {
    Scene,
    Calibrate,
    Render,
    Detect,
    Track,
    Simulate,
    Train,
    Estimate,
    Evaluate,
}

impl Stage {
    /// Every stage in dependency order.
    pub const ALL: [Stage; 9] = [
        Stage::Scene,
        Stage::Calibrate,
        Stage::Render,
        Stage::Detect,
        Stage::Track,
        Stage::Simulate,
        Stage::Train,
        Stage::Estimate,
        Stage::Evaluate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Scene => "scene",
            Stage::Calibrate => "calibrate",
            Stage::Render => "render",
            Stage::Detect => "detect",
            Stage::Track => "track",
            Stage::Simulate => "simulate",
            Stage::Train => "train",
            Stage::Estimate => "estimate",
            Stage::Evaluate => "evaluate",
        }
    }
}

/// What a finished stage produced. `summary` holds human-readable facts,
/// including timings, that are deliberately kept out of the artifacts.
#[derive(Debug, Clone)]
pub struct StageReport {
    pub stage: Stage,
    pub outputs: Vec<PathBuf>,
    pub manifest: PathBuf,
    pub summary: Vec<(String, String)>,
}

#[derive(Default)]
struct Outcome {
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    summary: Vec<(String, String)>,
    violations: Vec<String>,
}

impl Outcome {
    fn note(&mut self, key: &str, value: impl ToString) {
        self.summary.push((key.to_string(), value.to_string()));
    }
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

/// A required input file; its absence is a configuration problem.
fn input(path: PathBuf, producer: Stage) -> Result<PathBuf, CliError> {
    if path.is_file() {
        Ok(path)
    } else {
        Err(CliError::Config(format!(
            "missing input {} (written by `{}`)",
            path.display(),
            producer.name()
        )))
    }
}

/// Runs one stage and writes its manifest. A threshold violation still
/// leaves every artifact and the manifest in place.
pub fn run_stage(stage: Stage, cfg: &PipelineConfig) -> Result<StageReport, CliError> {
    cfg.validate()?;
    let seed = stage_seed(cfg.seed, stage.name());
    let out = match stage {
        Stage::Scene => scene(cfg, seed),
        Stage::Calibrate => calibrate(cfg),
        Stage::Render => render(cfg, seed),
        Stage::Detect => detect(cfg),
        Stage::Track => track(cfg),
        Stage::Simulate => simulate(cfg, seed),
        Stage::Train => train(cfg, seed),
        Stage::Estimate => estimate(cfg),
        Stage::Evaluate => evaluate(cfg),
    }?;
    let manifest_path = cfg.path(&cfg.paths.manifests).join(format!("{}.json", stage.name()));
    Manifest::new(stage.name(), cfg, seed, &out.inputs, &out.outputs)?.write(&manifest_path)?;
    if !out.violations.is_empty() {
        return Err(CliError::Threshold(out.violations.join("; ")));
    }
    Ok(StageReport {
        stage,
        outputs: out.outputs,
        manifest: manifest_path,
        summary: out.summary,
    })
}

/// Every stage in order; stops at the first failure.
pub fn run_pipeline(cfg: &PipelineConfig, mut on_stage: impl FnMut(&StageReport)) -> Result<Vec<StageReport>, (Stage, CliError)> {
    let mut reports = Vec::new();
    for stage in Stage::ALL {
        let r = run_stage(stage, cfg).map_err(|e| (stage, e))?;
        on_stage(&r);
        reports.push(r);
    }
    Ok(reports)
}

fn scene(cfg: &PipelineConfig, seed: u64) -> Result<Outcome, CliError> {
    let s = &cfg.scene;
    let dir = cfg.path(&cfg.paths.scene);
    let cams = s.geometry.cameras().map_err(runtime)?;
    let mut out = Outcome::default();

    let observed = s
        .geometry
        .observe_markers(&cams, s.marker_pixel_noise, &mut stage_rng(seed, "markers"))
        .map_err(runtime)?;
    let mut markers = Vec::new();
    for cam_id in 0..cams.len() as u32 {
        for c in observed.correspondences(cam_id) {
            markers.push(MarkerRow {
                camera_id: cam_id,
                marker_id: c.marker_id,
                x_w: c.world.x,
                y_w: c.world.y,
                z_w: c.world.z,
                u_px: c.pixel.x,
                v_px: c.pixel.y,
            });
        }
    }

    let mut rng = stage_rng(seed, "priors");
    let priors: Vec<CameraPoseRow> = cams
        .iter()
        .enumerate()
        .map(|(i, cam)| {
            let p = ChessboardPrior::perturbed(
                &cam.pose,
                s.prior_position_error,
                s.prior_orientation_error_deg.to_radians(),
                &mut rng,
            );
            CameraPoseRow::new(i as u32, &p.prior_pose)
        })
        .collect();
    let truth: Vec<CameraPoseRow> = cams.iter().enumerate().map(|(i, c)| CameraPoseRow::new(i as u32, &c.pose)).collect();

    let path = s.geometry.smooth_rig_path(
        &cams,
        &cfg.effector.rig,
        s.max_occlusion,
        &s.rig_path,
        s.frames,
        &mut stage_rng(seed, "rig"),
    );
    let rig: Vec<RigTruthRow> = path
        .iter()
        .enumerate()
        .map(|(f, (pose, _))| {
            let [x, y, z, alpha, beta, gamma] = pose.to_params();
            RigTruthRow {
                frame: f as u64,
                timestamp: f as f64 / s.frame_rate,
                x,
                y,
                z,
                alpha,
                beta,
                gamma,
            }
        })
        .collect();

    let files = [
        ("markers.csv", "marker observations: world position (mm) and pixel (px) per camera"),
        ("priors.csv", "rough camera poses to start calibration from"),
        ("cameras_truth.csv", "true camera poses"),
        ("rig_truth.csv", "true marker rig pose per frame"),
    ];
    let paths: Vec<PathBuf> = files.iter().map(|(f, _)| dir.join(f)).collect();
    write_table(&paths[0], &[files[0].1], &markers)?;
    write_table(&paths[1], &[files[1].1, "pose columns: mm and rad"], &priors)?;
    write_table(&paths[2], &[files[2].1, "pose columns: mm and rad"], &truth)?;
    write_table(&paths[3], &[files[3].1], &rig)?;
    out.outputs = paths;
    out.note("cameras", cams.len());
    out.note("marker observations", markers.len());
    out.note("frames", rig.len());
    Ok(out)
}

fn cameras_from_rows(mut rows: Vec<CameraPoseRow>, cfg: &PipelineConfig, what: &str) -> Result<Vec<CameraModel>, CliError> {
    rows.sort_by_key(|r| r.camera_id);
    if rows.is_empty() || rows.iter().enumerate().any(|(i, r)| r.camera_id != i as u32) {
        return Err(CliError::Runtime(format!("{what}: camera ids must be 0..n")));
    }
    let k = cfg.scene.geometry.intrinsics;
    Ok(rows.iter().map(|r| CameraModel::new(r.pose(), k)).collect())
}

fn calibrate(cfg: &PipelineConfig) -> Result<Outcome, CliError> {
    let scene = cfg.path(&cfg.paths.scene);
    let markers_path = input(scene.join("markers.csv"), Stage::Scene)?;
    let priors_path = input(scene.join("priors.csv"), Stage::Scene)?;
    let rows: Vec<MarkerRow> = read_table(&markers_path)?;
    let mut priors: Vec<CameraPoseRow> = read_table(&priors_path)?;
    priors.sort_by_key(|r| r.camera_id);

    let mut world: BTreeMap<u32, [f64; 3]> = BTreeMap::new();
    for r in &rows {
        let p = [r.x_w, r.y_w, r.z_w];
        if *world.entry(r.marker_id).or_insert(p) != p {
            return Err(CliError::Runtime(format!("marker {} has two world positions", r.marker_id)));
        }
    }
    let list: Vec<Marker> = world.iter().map(|(id, p)| Marker::new(*id, Vec3::from(*p))).collect();
    let mut set = MarkerSet::new(&list).map_err(runtime)?;
    for r in &rows {
        set.add_observation(r.camera_id, r.marker_id, Vec2::new(r.u_px, r.v_px))
            .map_err(runtime)?;
    }

    let s = &cfg.scene;
    let k = s.geometry.intrinsics;
    let mut poses = Vec::new();
    let mut quality = Vec::new();
    for p in &priors {
        let prior = ChessboardPrior {
            prior_pose: p.pose(),
            position_uncertainty: s.prior_position_error,
            orientation_uncertainty: s.prior_orientation_error_deg.to_radians(),
        };
        let r = refine_camera_pose(p.camera_id, &prior, &k, &set, &cfg.calibration.lm).map_err(runtime)?;
        poses.push(CameraPoseRow::new(p.camera_id, &r.pose));
        quality.push(CalibrationRow {
            camera_id: p.camera_id,
            markers: set.correspondences(p.camera_id).len(),
            initial_rms_px: r.initial_rms,
            final_rms_px: r.final_rms,
            iterations: r.iterations,
        });
    }
    let dir = cfg.path(&cfg.paths.calibration);
    let cams = dir.join("cameras.csv");
    let res = dir.join("residuals.csv");
    write_table(&cams, &["refined camera poses: mm and rad"], &poses)?;
    write_table(&res, &["reprojection RMS before and after refinement"], &quality)?;
    let mut out = Outcome {
        inputs: vec![markers_path, priors_path],
        outputs: vec![cams, res],
        ..Outcome::default()
    };
    for q in &quality {
        out.note(&format!("camera {} reprojection rms px", q.camera_id), format!("{:.4}", q.final_rms_px));
    }
    Ok(out)
}

fn render(cfg: &PipelineConfig, seed: u64) -> Result<Outcome, CliError> {
    let scene = cfg.path(&cfg.paths.scene);
    let cams_path = input(scene.join("cameras_truth.csv"), Stage::Scene)?;
    let rig_path = input(scene.join("rig_truth.csv"), Stage::Scene)?;
    let cams = cameras_from_rows(read_table(&cams_path)?, cfg, "cameras_truth.csv")?;
    let rig: Vec<RigTruthRow> = read_table(&rig_path)?;
    let dir = cfg.path(&cfg.paths.frames);
    let spec = &cfg.effector.rig;

    let mut out = Outcome {
        inputs: vec![cams_path, rig_path],
        ..Outcome::default()
    };
    let mut index = Vec::new();
    let mut oracle = Vec::new();
    for row in &rig {
        let balls = rig_forward(&row.pose(), spec);
        let mut rng = stage_rng(seed, &format!("frame/{}", row.frame));
        let views = render_scene(&cams, &balls, spec.ball_radius, &cfg.render, &mut rng);
        for (cam_id, v) in views.iter().enumerate() {
            let file = format!("frame_{:05}_cam{cam_id}.ppm", row.frame);
            let path = dir.join(&file);
            ppm::write(&path, &v.image)?;
            out.outputs.push(path);
            index.push(FrameIndexRow {
                frame: row.frame,
                timestamp: row.timestamp,
                camera_id: cam_id as u32,
                file,
            });
            for c in &v.circles {
                oracle.push(OracleRow {
                    frame: row.frame,
                    camera_id: cam_id as u32,
                    color: c.color.name().to_string(),
                    u: c.center[0],
                    v: c.center[1],
                    radius: c.radius,
                    occluded_fraction: c.occluded_fraction,
                });
            }
        }
    }
    let index_path = dir.join("index.csv");
    let oracle_path = dir.join("oracle.csv");
    write_table(&index_path, &["rendered images, one per frame and camera"], &index)?;
    write_table(&oracle_path, &["true ball circles in each image, px"], &oracle)?;
    out.outputs.push(index_path);
    out.outputs.push(oracle_path);
    out.note("images", index.len());
    Ok(out)
}

/// The frame index plus the image files it names, grouped by frame.
fn frame_groups(cfg: &PipelineConfig, out: &mut Outcome) -> Result<BTreeMap<u64, Vec<FrameIndexRow>>, CliError> {
    let dir = cfg.path(&cfg.paths.frames);
    let index_path = input(dir.join("index.csv"), Stage::Render)?;
    let rows: Vec<FrameIndexRow> = read_table(&index_path)?;
    out.inputs.push(index_path);
    let mut groups: BTreeMap<u64, Vec<FrameIndexRow>> = BTreeMap::new();
    for r in rows {
        out.inputs.push(input(dir.join(&r.file), Stage::Render)?);
        groups.entry(r.frame).or_default().push(r);
    }
    for g in groups.values_mut() {
        g.sort_by_key(|r| r.camera_id);
    }
    Ok(groups)
}

fn detect(cfg: &PipelineConfig) -> Result<Outcome, CliError> {
    let mut out = Outcome::default();
    let groups = frame_groups(cfg, &mut out)?;
    let frames_dir = cfg.path(&cfg.paths.frames);
    let mut rows = Vec::new();
    let mut accepted = 0;
    for views in groups.values() {
        for v in views {
            let img = ppm::read(&frames_dir.join(&v.file))?;
            let mut cache = EdgeCache::new(&img);
            for color in BallColor::ALL {
                // a failed blur escalation means nothing usable was found
                let outcome = detect_ball_cached(&mut cache, color, &cfg.detector).ok();
                let circle = outcome.as_ref().and_then(|o| o.circle);
                let status = match &outcome {
                    Some(o) if o.accepted().is_some() => "accepted",
                    Some(o) if o.circle.is_some() => "color_rejected",
                    _ => "missing",
                };
                accepted += usize::from(status == "accepted");
                rows.push(DetectionRow {
                    frame: v.frame,
                    camera_id: v.camera_id,
                    color: color.name().to_string(),
                    u: circle.map(|c| c.center[0]),
                    v: circle.map(|c| c.center[1]),
                    radius: circle.map(|c| c.radius),
                    score: circle.map(|c| c.score),
                    status: status.to_string(),
                });
            }
        }
    }
    let path = cfg.path(&cfg.paths.detections).join("detections.csv");
    write_table(&path, &["single-view detections with the configured global search bounds, px"], &rows)?;
    out.outputs.push(path);
    out.note("accepted", format!("{accepted} of {}", rows.len()));
    Ok(out)
}

fn track(cfg: &PipelineConfig) -> Result<Outcome, CliError> {
    let mut out = Outcome::default();
    let cams_path = input(cfg.path(&cfg.paths.calibration).join("cameras.csv"), Stage::Calibrate)?;
    let cams = cameras_from_rows(read_table(&cams_path)?, cfg, "cameras.csv")?;
    out.inputs.push(cams_path);
    let groups = frame_groups(cfg, &mut out)?;
    let frames_dir = cfg.path(&cfg.paths.frames);
    let e = &cfg.effector;
    let mut tracker = FrameTracker::new(
        cams.clone(),
        cfg.tracker.clone(),
        cfg.detector.clone(),
        e.rig,
        e.nelder_mead.clone(),
        e.triangulation,
    )
    .map_err(runtime)?;

    let (mut log, mut balls, mut truth) = (Vec::new(), Vec::new(), Vec::new());
    for (frame, views) in &groups {
        if views.len() != cams.len() || views.iter().enumerate().any(|(i, v)| v.camera_id != i as u32) {
            return Err(CliError::Runtime(format!("frame {frame} does not have one image per camera")));
        }
        let images = views
            .iter()
            .map(|v| ppm::read(&frames_dir.join(&v.file)))
            .collect::<Result<Vec<RasterImage>, _>>()?;
        let r = tracker.process(&images)?;
        if r.skipped {
            for cam in 0..cams.len() as u32 {
                for color in BallColor::ALL {
                    log.push(TrackLogRow {
                        frame: *frame,
                        camera: cam,
                        color: color.name().into(),
                        status: "skipped".into(),
                        u: None,
                        v: None,
                        r: None,
                    });
                }
            }
            continue;
        }
        for d in &r.detections {
            log.push(TrackLogRow {
                frame: *frame,
                camera: d.camera_id,
                color: d.color.name().into(),
                status: d.status.name().into(),
                u: d.circle.map(|c| c.center[0]),
                v: d.circle.map(|c| c.center[1]),
                r: d.circle.map(|c| c.radius),
            });
        }
        for b in r.balls.iter().flatten() {
            balls.push(BallRow {
                frame: *frame,
                color: b.color.name().into(),
                x: b.center[0],
                y: b.center[1],
                z: b.center[2],
                pair_count: b.pair_count as u32,
            });
        }
        if let Some(p) = r.effector {
            truth.push(GroundTruthRow {
                timestamp: views[0].timestamp,
                x: p.position[0],
                y: p.position[1],
                z: p.position[2],
                alpha: p.orientation.alpha,
                beta: p.orientation.beta,
                gamma: p.orientation.gamma,
                residual_cost: p.residual_cost,
            });
        }
    }
    let dir = cfg.path(&cfg.paths.track);
    let paths = [dir.join("track_log.csv"), dir.join("balls.csv"), dir.join("ground_truth.csv")];
    write_table(&paths[0], &["per-view circle status after each frame, px"], &log)?;
    write_table(&paths[1], &["triangulated ball centers, mm"], &balls)?;
    write_table(
        &paths[2],
        &["measured end-effector pose: mm, rad; residual_cost in mm^2"],
        &truth,
    )?;
    out.outputs.extend(paths);
    out.note("frames", groups.len());
    out.note("effector poses", truth.len());
    out.note("restarts", tracker.restarts());
    Ok(out)
}

fn simulate(cfg: &PipelineConfig, seed: u64) -> Result<Outcome, CliError> {
    let s = &cfg.simulate;
    let started = Instant::now();
    let trajectories =
        generate_teleop_trajectories(s.trajectories, s.duration, stage_seed(seed, "trajectories"), &s.trajectory)
            .map_err(runtime)?;
    let mut rng = stage_rng(seed, "noise");
    let mut samples = Vec::new();
    for t in &trajectories {
        samples.extend(simulate_run(t, &s.error_model, &s.sim, &mut rng).map_err(runtime)?);
    }
    let truth: Vec<Vec3> = samples.iter().map(|x| Vec3::from(x.true_position)).collect();
    let coverage = workspace_coverage(truth.iter(), &s.trajectory.workspace, 8);
    let errors: Vec<Vec3> = samples.iter().map(|x| x.error()).collect();
    let report = compute_report(&errors, ErrorSource::Reported).map_err(runtime)?;
    let ds = Dataset::from_samples(samples).map_err(runtime)?;

    let path = cfg.path(&cfg.paths.dataset);
    dataset::write(&path, &ds)?;
    let mut out = Outcome {
        outputs: vec![path.clone()],
        ..Outcome::default()
    };
    if s.csv_export {
        let csv = path.with_extension("csv");
        dataset::write_csv(&csv, &ds)?;
        out.outputs.push(csv);
    }
    out.note("pairs", ds.len());
    out.note("trajectories", trajectories.len());
    out.note("reported error rms mm", format!("{:.3}", report.rms_3d));
    out.note("workspace coverage", format!("{coverage:.3}"));
    out.note("seconds", format!("{:.1}", started.elapsed().as_secs_f64()));
    Ok(out)
}

/// The split spec and training config with their seeds fanned out from the
/// top-level seed.
pub fn seeded_training(cfg: &PipelineConfig, seed: u64) -> (SplitSpec, TrainingConfig) {
    let split = SplitSpec {
        seed: stage_seed(seed, "split"),
        ..cfg.split.clone()
    };
    let training = TrainingConfig {
        seed: stage_seed(seed, "fit"),
        ..cfg.training.clone()
    };
    (split, training)
}

fn train(cfg: &PipelineConfig, seed: u64) -> Result<Outcome, CliError> {
    let ds_path = input(cfg.path(&cfg.paths.dataset), Stage::Simulate)?;
    let ds = dataset::read(&ds_path)?;
    let (split_spec, training) = seeded_training(cfg, seed);
    let split = split_by_trajectory(&ds, &split_spec).map_err(runtime)?;
    let started = Instant::now();
    let outcome = train_with::<f32>(&split.train, &split.val, &training, |_| {}).map_err(runtime)?;
    let seconds = started.elapsed().as_secs_f64();

    let dir = cfg.path(&cfg.paths.models);
    let model_path = dir.join("model.bin");
    let history_path = dir.join("history.csv");
    let split_path = dir.join("split.csv");
    model::write(&model_path, &outcome.model)?;
    let history: Vec<HistoryRow> = outcome
        .history
        .iter()
        .map(|h| HistoryRow {
            epoch: h.epoch,
            train_loss: h.train_loss,
            val_loss: h.val_loss,
            val_rms_mm: h.val_rms_mm,
        })
        .collect();
    write_table(&history_path, &["losses are on standardized labels; val_rms_mm is in mm"], &history)?;
    let assignment: Vec<SplitRow> = split
        .assignment
        .iter()
        .map(|(id, kind)| SplitRow {
            trajectory_id: *id,
            split: kind.name().to_string(),
        })
        .collect();
    write_table(&split_path, &["split of each trajectory"], &assignment)?;

    let mut out = Outcome {
        inputs: vec![ds_path],
        outputs: vec![model_path, history_path, split_path],
        ..Outcome::default()
    };
    out.note("split", format!("{}/{}/{}", split.train.len(), split.val.len(), split.test.len()));
    out.note("epochs", outcome.history.len());
    out.note("best epoch", outcome.best_epoch);
    if let Some(h) = outcome.history.iter().find(|h| h.epoch == outcome.best_epoch) {
        out.note("best val rms mm", format!("{:.4}", h.val_rms_mm));
    }
    out.note("training seconds", format!("{seconds:.1}"));
    Ok(out)
}

/// The dataset restricted to one split, as recorded by `train`.
fn scoped(ds: &Dataset, scope: EstimateScope, cfg: &PipelineConfig, out: &mut Outcome) -> Result<Dataset, CliError> {
    let kind = match scope {
        EstimateScope::All => return Ok(ds.clone()),
        EstimateScope::Train => SplitKind::Train,
        EstimateScope::Val => SplitKind::Val,
        EstimateScope::Test => SplitKind::Test,
    };
    let path = input(cfg.path(&cfg.paths.models).join("split.csv"), Stage::Train)?;
    let rows: Vec<SplitRow> = read_table(&path)?;
    out.inputs.push(path);
    let ids: Vec<u32> = rows.iter().filter(|r| r.split == kind.name()).map(|r| r.trajectory_id).collect();
    ds.select_trajectories(&ids).map_err(runtime)
}

fn estimate(cfg: &PipelineConfig) -> Result<Outcome, CliError> {
    let model_path = input(cfg.path(&cfg.paths.models).join("model.bin"), Stage::Train)?;
    let ds_path = input(cfg.path(&cfg.paths.dataset), Stage::Simulate)?;
    let corrector: ErrorCorrector<f32> = model::read(&model_path)?;
    let ds = dataset::read(&ds_path)?;
    let mut out = Outcome {
        inputs: vec![model_path, ds_path],
        ..Outcome::default()
    };
    let stream = scoped(&ds, cfg.estimate.scope, cfg, &mut out)?;
    let predicted = corrector.predict_dataset(&stream).map_err(runtime)?;
    let rows: Vec<CorrectedRow> = stream
        .pairs
        .iter()
        .zip(&predicted)
        .map(|(p, e)| {
            let r = p.record.reported_position();
            CorrectedRow {
                trajectory_id: p.trajectory_id,
                timestamp: p.record.timestamp,
                reported_x: r.x,
                reported_y: r.y,
                reported_z: r.z,
                corrected_x: r.x + e[0],
                corrected_y: r.y + e[1],
                corrected_z: r.z + e[2],
            }
        })
        .collect();
    let path = cfg.path(&cfg.paths.estimate).join("corrected.csv");
    write_table(&path, &["reported and corrected tool positions, mm"], &rows)?;
    out.outputs.push(path);
    out.note("records", rows.len());
    let latency = single_record_latency(&corrector, &stream, 1000);
    out.note("median single-record latency ms", format!("{:.4}", latency * 1e3));
    Ok(out)
}

/// Median wall time of one-record predictions over the first `n` records, s.
pub fn single_record_latency(model: &ErrorCorrector<f32>, ds: &Dataset, n: usize) -> f64 {
    let mut times: Vec<f64> = ds
        .pairs
        .iter()
        .take(n)
        .map(|p| {
            let t = Instant::now();
            let e = model.predict_errors(&[&p.record]);
            let dt = t.elapsed().as_secs_f64();
            std::hint::black_box(e).ok();
            dt
        })
        .collect();
    if times.is_empty() {
        return 0.0;
    }
    times.sort_by(f64::total_cmp);
    times[times.len() / 2]
}

fn check(out: &mut Outcome, rows: &mut Vec<ThresholdRow>, name: &str, value: f64, at_least: bool, limit: f64) {
    let pass = if at_least { value >= limit } else { value <= limit };
    let relation = if at_least { ">=" } else { "<=" };
    if !pass {
        out.violations.push(format!("{name} = {value:.4} violates {relation} {limit}"));
    }
    rows.push(ThresholdRow {
        check: name.to_string(),
        value,
        relation: relation.to_string(),
        limit,
        pass,
    });
}

fn evaluate(cfg: &PipelineConfig) -> Result<Outcome, CliError> {
    let mut out = Outcome::default();
    let mut thresholds = Vec::new();
    let reports = cfg.path(&cfg.paths.reports);
    let mut any = false;

    let corrected_path = cfg.path(&cfg.paths.estimate).join("corrected.csv");
    if corrected_path.is_file() {
        any = true;
        evaluate_correction(cfg, &corrected_path, &reports, &mut out, &mut thresholds)?;
    }
    let measured_path = cfg.path(&cfg.paths.track).join("ground_truth.csv");
    if measured_path.is_file() {
        any = true;
        evaluate_measurement(cfg, &measured_path, &reports, &mut out, &mut thresholds)?;
    }
    let detections_path = cfg.path(&cfg.paths.detections).join("detections.csv");
    if detections_path.is_file() {
        any = true;
        evaluate_detection(cfg, &detections_path, &reports, &mut out)?;
    }
    if !any {
        return Err(CliError::Config(format!(
            "nothing to evaluate: none of {}, {} or {} exists",
            corrected_path.display(),
            measured_path.display(),
            detections_path.display()
        )));
    }
    let path = reports.join("thresholds.csv");
    write_table(&path, &["configured acceptance thresholds"], &thresholds)?;
    out.outputs.push(path);
    Ok(out)
}

fn evaluate_correction(
    cfg: &PipelineConfig,
    corrected_path: &Path,
    reports: &Path,
    out: &mut Outcome,
    thresholds: &mut Vec<ThresholdRow>,
) -> Result<(), CliError> {
    let ds_path = input(cfg.path(&cfg.paths.dataset), Stage::Simulate)?;
    let ds = dataset::read(&ds_path)?;
    let rows: Vec<CorrectedRow> = read_table(corrected_path)?;
    out.inputs.push(ds_path);
    out.inputs.push(corrected_path.to_path_buf());

    let mut ids: Vec<u32> = rows.iter().map(|r| r.trajectory_id).collect();
    ids.dedup();
    let stream = ds.select_trajectories(&ids).map_err(runtime)?;
    if stream.len() != rows.len() {
        return Err(CliError::Runtime(format!(
            "corrected stream has {} records, the dataset has {} for those trajectories",
            rows.len(),
            stream.len()
        )));
    }
    let (mut before, mut after, mut plot) = (Vec::new(), Vec::new(), Vec::new());
    for (p, r) in stream.pairs.iter().zip(&rows) {
        let reported = p.record.reported_position();
        if p.trajectory_id != r.trajectory_id
            || p.record.timestamp != r.timestamp
            || reported != Vec3::new(r.reported_x, r.reported_y, r.reported_z)
        {
            return Err(CliError::Runtime(format!(
                "corrected stream does not line up with the dataset at trajectory {} t={}",
                r.trajectory_id, r.timestamp
            )));
        }
        let truth = reported + Vec3::from(p.error);
        let corrected = Vec3::new(r.corrected_x, r.corrected_y, r.corrected_z);
        before.push(truth - reported);
        after.push(truth - corrected);
        plot.push(PlotRow {
            trajectory_id: r.trajectory_id,
            time: r.timestamp,
            true_x: truth.x,
            true_y: truth.y,
            true_z: truth.z,
            reported_x: reported.x,
            reported_y: reported.y,
            reported_z: reported.z,
            corrected_x: r.corrected_x,
            corrected_y: r.corrected_y,
            corrected_z: r.corrected_z,
        });
    }
    let b = compute_report(&before, ErrorSource::Reported).map_err(runtime)?;
    let a = compute_report(&after, ErrorSource::Corrected).map_err(runtime)?;
    let imp = improvement_summary(&b, &a).map_err(runtime)?;

    let report_path = reports.join("correction_report.csv");
    let imp_path = reports.join("improvement.csv");
    let plot_path = reports.join("plot_data.csv");
    write_table(
        &report_path,
        REPORT_COMMENTS,
        &[ReportRow::new("position", &b), ReportRow::new("position", &a)],
    )?;
    write_table(
        &imp_path,
        &["reductions in percent: 100 (1 - after / before); SD is sd_3d_signed"],
        &[ImprovementRow::new("position", &b, &a, &imp)],
    )?;
    write_table(&plot_path, &["tool position traces, mm; time in s"], &plot)?;
    out.outputs.extend([report_path, imp_path, plot_path]);

    let e = &cfg.evaluate;
    check(out, thresholds, "rms_reduction_pct", imp.rms_reduction_pct, true, e.min_rms_reduction_pct);
    check(out, thresholds, "sd_reduction_pct", imp.sd_reduction_pct, true, e.min_sd_reduction_pct);
    check(out, thresholds, "corrected_rms_mm", a.rms_3d, false, e.max_corrected_rms_mm);
    out.note("reported rms mm", format!("{:.4}", b.rms_3d));
    out.note("corrected rms mm", format!("{:.4}", a.rms_3d));
    out.note("rms reduction %", format!("{:.2}", imp.rms_reduction_pct));
    out.note("sd reduction %", format!("{:.2}", imp.sd_reduction_pct));
    Ok(())
}

fn evaluate_measurement(
    cfg: &PipelineConfig,
    measured_path: &Path,
    reports: &Path,
    out: &mut Outcome,
    thresholds: &mut Vec<ThresholdRow>,
) -> Result<(), CliError> {
    let rig_path = input(cfg.path(&cfg.paths.scene).join("rig_truth.csv"), Stage::Scene)?;
    let balls_path = input(cfg.path(&cfg.paths.track).join("balls.csv"), Stage::Track)?;
    let rig: Vec<RigTruthRow> = read_table(&rig_path)?;
    let measured: Vec<GroundTruthRow> = read_table(measured_path)?;
    let balls: Vec<BallRow> = read_table(&balls_path)?;
    out.inputs.extend([rig_path, measured_path.to_path_buf(), balls_path]);

    let by_time: BTreeMap<u64, &RigTruthRow> = rig.iter().map(|r| (r.timestamp.to_bits(), r)).collect();
    let by_frame: BTreeMap<u64, &RigTruthRow> = rig.iter().map(|r| (r.frame, r)).collect();
    let mut effector = Vec::new();
    for m in &measured {
        let t = by_time
            .get(&m.timestamp.to_bits())
            .ok_or_else(|| CliError::Runtime(format!("no true rig pose at t={}", m.timestamp)))?;
        effector.push(Vec3::new(m.x, m.y, m.z) - t.pose().position);
    }
    let mut ball_err = Vec::new();
    for b in &balls {
        let t = by_frame
            .get(&b.frame)
            .ok_or_else(|| CliError::Runtime(format!("no true rig pose for frame {}", b.frame)))?;
        let color = BallColor::from_name(&b.color).ok_or_else(|| CliError::Runtime(format!("unknown color {}", b.color)))?;
        let truth = rig_forward(&t.pose(), &cfg.effector.rig).get(color);
        ball_err.push(Vec3::new(b.x, b.y, b.z) - truth);
    }
    let eff = compute_report(&effector, ErrorSource::Measurement).map_err(runtime)?;
    let ball = compute_report(&ball_err, ErrorSource::Measurement).map_err(runtime)?;
    let path = reports.join("measurement_report.csv");
    write_table(&path, REPORT_COMMENTS, &[ReportRow::new("ball", &ball), ReportRow::new("effector", &eff)])?;
    out.outputs.push(path);
    check(
        out,
        thresholds,
        "measurement_rms_mm",
        eff.rms_3d,
        false,
        cfg.evaluate.max_measurement_rms_mm,
    );
    out.note("ball measurement rms mm", format!("{:.4}", ball.rms_3d));
    out.note("effector measurement rms mm", format!("{:.4}", eff.rms_3d));
    Ok(())
}

/// Detection quality against the renderer's circles.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DetectionReportRow {
    pub balls: usize,
    /// Accepted with the center within 1 px.
    pub detected: usize,
    pub detection_rate: f64,
    /// Accepted but more than 1 px from the true center.
    pub false_positives: usize,
    pub false_positive_rate: f64,
    pub center_rms_px: f64,
}

fn evaluate_detection(cfg: &PipelineConfig, detections_path: &Path, reports: &Path, out: &mut Outcome) -> Result<(), CliError> {
    let oracle_path = input(cfg.path(&cfg.paths.frames).join("oracle.csv"), Stage::Render)?;
    let oracle: Vec<OracleRow> = read_table(&oracle_path)?;
    let found: Vec<DetectionRow> = read_table(detections_path)?;
    out.inputs.extend([oracle_path, detections_path.to_path_buf()]);
    let by_key: BTreeMap<(u64, u32, &str), &DetectionRow> =
        found.iter().map(|d| ((d.frame, d.camera_id, d.color.as_str()), d)).collect();
    let (mut detected, mut fp, mut sq) = (0, 0, 0.0);
    for o in &oracle {
        let Some(d) = by_key.get(&(o.frame, o.camera_id, o.color.as_str())) else {
            continue;
        };
        if d.status != "accepted" {
            continue;
        }
        let (u, v) = (d.u.unwrap_or(f64::NAN), d.v.unwrap_or(f64::NAN));
        let err = (u - o.u).hypot(v - o.v);
        if err <= 1.0 {
            detected += 1;
            sq += err * err;
        } else {
            fp += 1;
        }
    }
    let n = oracle.len().max(1) as f64;
    let row = DetectionReportRow {
        balls: oracle.len(),
        detected,
        detection_rate: detected as f64 / n,
        false_positives: fp,
        false_positive_rate: fp as f64 / n,
        center_rms_px: (sq / detected.max(1) as f64).sqrt(),
    };
    let path = reports.join("detection_report.csv");
    write_table(&path, &["untracked detection against the rendered circles"], &[row.clone()])?;
    out.outputs.push(path);
    out.note("detection rate", format!("{:.4}", row.detection_rate));
    Ok(())
}
