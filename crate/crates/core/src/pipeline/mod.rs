//! End-to-end orchestration behind the `evfusion` binary.
//!
//! [`map_view`] runs every stage in memory for one reference view;
//! [`run_pipeline`], [`run_eval`] and [`run_synth`] add dataset loading and
//! artifact writing.

mod config;
mod report;

pub use config::{
    parse_synth_params, set_synth_param, split_assignment, validate_synth_params, EvalConfig, MapParams,
    PipelineConfig, PIPELINE_KEYS, SYNTH_KEYS,
};
pub use report::{fixed, DecisionRow, EvalReport, EvalWindowRow, KernelErrorRow, KernelSummary, MapReport, WindowReport};

use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::dataset::{select_reference_frame, CameraModel, DatasetPaths, Event, Frame, FrameEntry, Pose, Trajectory};
use crate::emvs::{build_dsi, detect_local_maxima, median_filter, remove_isolated, semi_dense_to_cloud, PointCloud, SemiDenseDepthMap};
use crate::error::{Error, Result};
use crate::export::{label_values, provenance_mask, range_values, write_file, write_pfm, write_pgm16, write_pgm8, write_ply};
use crate::fusion::{fuse, project_map_points, range_image_to_cloud, FusionResult, ProjectedEvents, WeightKernel};
use crate::metrics::{compare_kernels, segment_windows, ErrorReport, FillingReport, FusionInputs, KernelError, Plane};
use crate::segmentation::{segment, LabelMap};
use crate::synth::{write_dataset, SynthOutput, SynthParams};

/// Artifact file names written by [`run_pipeline`].
pub const SEMI_DENSE_PLY: &str = "semi_dense.ply";
pub const DENSE_PLY: &str = "dense.ply";
pub const RANGE_PFM: &str = "range.pfm";
pub const PROVENANCE_PGM: &str = "provenance.pgm";
pub const LABELS_PGM: &str = "labels.pgm";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_CSV: &str = "report.csv";
pub const EVAL_JSON: &str = "eval.json";
pub const EVAL_CSV: &str = "eval.csv";

/// Everything one reference view is reconstructed from.
#[derive(Debug, Clone, Copy)]
pub struct ViewInputs<'a> {
    pub events: &'a [Event],
    pub trajectory: &'a Trajectory,
    pub cam: &'a CameraModel,
    /// Raw (distorted) frame at the reference view.
    pub frame: &'a Frame,
    pub ref_pose: &'a Pose,
}

/// Products of every stage for one reference view.
#[derive(Debug, Clone)]
pub struct ViewResult {
    pub semi_dense: SemiDenseDepthMap,
    pub semi_dense_cloud: PointCloud,
    pub projected: ProjectedEvents,
    pub labels: LabelMap,
    pub fusion: FusionResult,
    pub dense_cloud: PointCloud,
    /// N1 counts the projected events, the semi-dense points as seen in the
    /// reference image.
    pub filling: FillingReport,
}

impl ViewResult {
    pub fn fusion_inputs<'a>(&'a self, inputs: &ViewInputs<'a>) -> FusionInputs<'a> {
        FusionInputs {
            labels: &self.labels,
            projected: &self.projected,
            ref_pose: inputs.ref_pose,
            cam: inputs.cam,
        }
    }
}

/// Event map, segmentation and fill for one reference view.
pub fn map_view(inputs: &ViewInputs<'_>, params: &MapParams) -> Result<ViewResult> {
    params.validate()?;
    let cam = inputs.cam;
    if (inputs.frame.width, inputs.frame.height) != (cam.width, cam.height) {
        return Err(Error::InvalidArgument(format!(
            "reference frame is {}x{}, camera is {}x{}",
            inputs.frame.width, inputs.frame.height, cam.width, cam.height
        )));
    }

    let clock = Instant::now();
    let dsi = build_dsi(inputs.events, inputs.trajectory, cam, inputs.ref_pose, &params.dsi)?;
    log::info!(
        "voted {} events into {}x{}x{} DSI in {:.2?}",
        inputs.events.len(),
        params.dsi.nx,
        params.dsi.ny,
        params.dsi.nz,
        clock.elapsed()
    );

    let maxima = detect_local_maxima(&dsi, &params.maxima)?;
    let semi_dense = median_filter(
        &remove_isolated(&maxima, params.outlier_radius, params.min_neighbours),
        params.median,
    )?;
    drop(dsi);
    let semi_dense_cloud = semi_dense_to_cloud(&semi_dense, inputs.ref_pose, cam);
    let projected = project_map_points(&semi_dense_cloud, inputs.ref_pose, cam);
    log::info!("{} semi-dense points, {} projected events", semi_dense.len(), projected.len());

    let rectified = inputs.frame.undistort(cam)?;
    let labels = segment(&rectified, &params.grow)?;
    log::info!(
        "{} regions, {} unlabeled pixels",
        labels.num_regions(),
        labels.invalid_pixels()
    );

    let clock = Instant::now();
    let fusion = fuse(&labels, &projected, &params.fill)?;
    log::info!(
        "filled {} of {} regions ({} pixels) in {:.2?}",
        fusion.filled_regions(),
        labels.num_regions(),
        fusion.range_image.len(),
        clock.elapsed()
    );
    let dense_cloud = range_image_to_cloud(&fusion.range_image, inputs.ref_pose, cam);
    let filling = FillingReport::new(
        projected.len(),
        fusion.range_image.len(),
        cam.res(),
        fusion.decisions.clone(),
    )?;
    Ok(ViewResult {
        semi_dense,
        semi_dense_cloud,
        projected,
        labels,
        fusion,
        dense_cloud,
        filling,
    })
}

/// Planar error of each kernel, reusing the view's segmentation and
/// projected events.
pub fn kernel_errors(
    view: &ViewResult,
    inputs: &ViewInputs<'_>,
    params: &MapParams,
    kernels: &[WeightKernel],
    plane_depth: f64,
) -> Result<Vec<KernelError>> {
    let plane = Plane::fronto_parallel(inputs.ref_pose, plane_depth);
    compare_kernels(view.fusion_inputs(inputs), &params.fill, kernels, &plane)
}

/// Calibration, trajectory and frame index of a dataset directory.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub paths: DatasetPaths,
    pub cam: CameraModel,
    pub trajectory: Trajectory,
    pub frames: Vec<FrameEntry>,
}

impl Dataset {
    pub fn open(root: &Path, width: usize, height: usize) -> Result<Self> {
        let paths = DatasetPaths::new(root);
        Ok(Dataset {
            cam: paths.read_calibration(width, height)?,
            trajectory: paths.read_trajectory()?,
            frames: paths.read_frame_index()?,
            paths,
        })
    }

    /// Nearest frame to `t_ref`, loaded, and the pose at its timestamp.
    pub fn reference(&self, t_ref: f64) -> Result<(Frame, Pose)> {
        let entry = select_reference_frame(&self.frames, t_ref)?;
        let path = self.paths.root.join(&entry.path);
        let frame = Frame::load(&path, entry.t)?;
        let pose = self.trajectory.interpolate(entry.t)?;
        Ok((frame, pose))
    }
}

fn nonempty_events(dataset: &Dataset, t_start: f64, t_end: f64) -> Result<Vec<Event>> {
    let events = dataset
        .paths
        .read_events_in_window(dataset.cam.width, dataset.cam.height, t_start, t_end)?;
    if events.is_empty() {
        return Err(Error::EmptyEventWindow { t_start, t_end });
    }
    Ok(events)
}

/// What [`run_pipeline`] produced.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub out_dir: PathBuf,
    pub report: MapReport,
    pub view: ViewResult,
    pub kernel_errors: Vec<KernelError>,
}

/// Reconstructs the configured reference view and writes all artifacts to
/// `cfg.out`.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineOutput> {
    cfg.validate()?;
    let dataset = Dataset::open(&cfg.dataset, cfg.width, cfg.height)?;
    let events = nonempty_events(&dataset, cfg.t_start, cfg.t_end)?;
    let (frame, ref_pose) = dataset.reference(cfg.t_ref)?;
    let inputs = ViewInputs {
        events: &events,
        trajectory: &dataset.trajectory,
        cam: &dataset.cam,
        frame: &frame,
        ref_pose: &ref_pose,
    };
    let view = map_view(&inputs, &cfg.map)?;
    let kernel_errors = match cfg.eval.plane_depth {
        Some(depth) => kernel_errors(&view, &inputs, &cfg.map, &cfg.eval.kernels, depth)?,
        None => Vec::new(),
    };

    let window = WindowReport {
        t_start: cfg.t_start,
        t_end: cfg.t_end,
        t_ref: cfg.t_ref,
        t_frame: frame.t,
        events: events.len(),
    };
    let report = MapReport::new(
        cfg.sequence_name(),
        window,
        &view.filling,
        view.semi_dense.len(),
        &kernel_errors,
    );
    write_artifacts(&cfg.out, &view, &report)?;
    log::info!(
        "N1 = {}, N2 = {}, beta = {:.4}; artifacts in {}",
        report.n1,
        report.n2,
        report.beta,
        cfg.out.display()
    );
    Ok(PipelineOutput {
        out_dir: cfg.out.clone(),
        report,
        view,
        kernel_errors,
    })
}

fn write_artifacts(out: &Path, view: &ViewResult, report: &MapReport) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let ri = &view.fusion.range_image;
    let labels = &view.labels;
    write_file(&out.join(SEMI_DENSE_PLY), |w| write_ply(w, &view.semi_dense_cloud))?;
    write_file(&out.join(DENSE_PLY), |w| write_ply(w, &view.dense_cloud))?;
    write_file(&out.join(RANGE_PFM), |w| write_pfm(w, ri.width, ri.height, &range_values(ri)))?;
    write_file(&out.join(PROVENANCE_PGM), |w| {
        write_pgm8(w, ri.width, ri.height, &provenance_mask(ri))
    })?;
    write_file(&out.join(LABELS_PGM), |w| {
        write_pgm16(w, labels.width, labels.height, &label_values(labels))
    })?;
    report::write_json(&out.join(REPORT_JSON), report)?;
    let csv_path = out.join(REPORT_CSV);
    let file = crate::export::create(&csv_path)?;
    report.write_csv(file)
}

/// Splits `[t_start, t_end)` into `eval.segment_len` windows, reconstructs
/// each at its midpoint and reports the planar error of every configured
/// kernel. Writes `eval.json` and `eval.csv` to `cfg.out`.
pub fn run_eval(cfg: &PipelineConfig) -> Result<EvalReport> {
    cfg.validate()?;
    let plane_depth = cfg
        .eval
        .plane_depth
        .ok_or_else(|| Error::Config("eval needs eval.plane_depth".into()))?;
    if cfg.eval.kernels.is_empty() {
        return Err(Error::Config("eval.kernels is empty".into()));
    }
    let dataset = Dataset::open(&cfg.dataset, cfg.width, cfg.height)?;
    let windows = segment_windows(cfg.t_start, cfg.t_end - cfg.t_start, cfg.eval.segment_len)?;
    if windows.is_empty() {
        return Err(Error::Config(format!(
            "window [{}, {}) is shorter than eval.segment_len = {}",
            cfg.t_start, cfg.t_end, cfg.eval.segment_len
        )));
    }
    let all = nonempty_events(&dataset, cfg.t_start, windows.last().map_or(cfg.t_end, |w| w.end))?;

    let mut rows = Vec::with_capacity(windows.len());
    let mut per_kernel: Vec<ErrorReport> = cfg
        .eval
        .kernels
        .iter()
        .map(|&kernel| ErrorReport {
            sequence: cfg.sequence_name(),
            kernel,
            segment_errors_cm: Vec::new(),
        })
        .collect();
    for (i, window) in windows.iter().enumerate() {
        let events: Vec<Event> = all.iter().copied().filter(|e| window.contains(e.t)).collect();
        if events.is_empty() {
            return Err(Error::EmptyEventWindow {
                t_start: window.start,
                t_end: window.end,
            });
        }
        let (frame, ref_pose) = dataset.reference(window.mid())?;
        let inputs = ViewInputs {
            events: &events,
            trajectory: &dataset.trajectory,
            cam: &dataset.cam,
            frame: &frame,
            ref_pose: &ref_pose,
        };
        let view = map_view(&inputs, &cfg.map)?;
        let errors = kernel_errors(&view, &inputs, &cfg.map, &cfg.eval.kernels, plane_depth)?;
        for (report, e) in per_kernel.iter_mut().zip(&errors) {
            report.segment_errors_cm.push(e.error_cm);
        }
        log::info!(
            "window {i} [{:.3}, {:.3}): {}",
            window.start,
            window.end,
            errors
                .iter()
                .map(|e| format!("{} {:.3} cm", e.kernel, e.error_cm))
                .collect::<Vec<_>>()
                .join(", ")
        );
        rows.push(EvalWindowRow {
            window: WindowReport {
                t_start: fixed(window.start),
                t_end: fixed(window.end),
                t_ref: fixed(window.mid()),
                t_frame: fixed(frame.t),
                events: events.len(),
            },
            n1: view.filling.n1,
            n2: view.filling.n2,
            beta: fixed(view.filling.beta),
            errors_cm: errors.iter().map(KernelErrorRow::from).collect(),
        });
    }

    let report = EvalReport {
        sequence: cfg.sequence_name(),
        segment_len: fixed(cfg.eval.segment_len),
        plane_depth: fixed(plane_depth),
        windows: rows,
        kernels: per_kernel.iter().map(KernelSummary::from).collect(),
    };
    std::fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e))?;
    report::write_json(&cfg.out.join(EVAL_JSON), &report)?;
    report.write_csv(crate::export::create(&cfg.out.join(EVAL_CSV))?)?;
    Ok(report)
}

/// Writes a synthetic dataset to `out`.
pub fn run_synth(params: &SynthParams, out: &Path) -> Result<SynthOutput> {
    validate_synth_params(params)?;
    let clock = Instant::now();
    let output = write_dataset(params, out)?;
    log::info!(
        "wrote {} events and {} frames to {} in {:.2?}",
        output.events,
        output.frames,
        out.display(),
        clock.elapsed()
    );
    Ok(output)
}
