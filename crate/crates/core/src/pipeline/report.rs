//! Machine-readable run reports.
//!
//! Floating-point values are rounded to a fixed number of decimals before
//! serialization so reports from identical runs compare byte for byte.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::export::write_file;
use crate::fusion::FillDecision;
use crate::metrics::{ErrorReport, FillingReport, KernelError};

const DECIMALS: i32 = 6;

/// `v` rounded to the report precision.
pub fn fixed(v: f64) -> f64 {
    let scale = 10f64.powi(DECIMALS);
    let r = (v * scale).round() / scale;
    // Avoid "-0.0" in the output.
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct WindowReport {
    pub t_start: f64,
    pub t_end: f64,
    pub t_ref: f64,
    /// Timestamp of the reference frame actually used.
    pub t_frame: f64,
    pub events: usize,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct KernelErrorRow {
    pub kernel: String,
    pub error_cm: f64,
    #[serde(rename = "N2")]
    pub n2: usize,
}

impl From<&KernelError> for KernelErrorRow {
    fn from(k: &KernelError) -> Self {
        KernelErrorRow {
            kernel: k.kernel.name().to_owned(),
            error_cm: fixed(k.error_cm),
            n2: k.n2,
        }
    }
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct DecisionRow {
    pub region_id: u32,
    pub contour_hits: usize,
    pub interior_hits: usize,
    pub contour_len: usize,
    pub region_size: usize,
    pub filled: bool,
}

impl From<&FillDecision> for DecisionRow {
    fn from(d: &FillDecision) -> Self {
        DecisionRow {
            region_id: d.region_id,
            contour_hits: d.contour_hits,
            interior_hits: d.interior_hits,
            contour_len: d.contour_len,
            region_size: d.region_size,
            filled: d.filled,
        }
    }
}

/// Contents of `report.json`.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct MapReport {
    pub sequence: String,
    pub window: WindowReport,
    #[serde(rename = "N1")]
    pub n1: usize,
    #[serde(rename = "N2")]
    pub n2: usize,
    #[serde(rename = "Res")]
    pub res: usize,
    pub beta: f64,
    pub semi_dense_points: usize,
    pub filled_regions: usize,
    pub regions: usize,
    pub per_kernel_errors_cm: Vec<KernelErrorRow>,
    pub decisions: Vec<DecisionRow>,
}

impl MapReport {
    pub fn new(
        sequence: String,
        mut window: WindowReport,
        filling: &FillingReport,
        semi_dense_points: usize,
        kernel_errors: &[KernelError],
    ) -> Self {
        window.t_start = fixed(window.t_start);
        window.t_end = fixed(window.t_end);
        window.t_ref = fixed(window.t_ref);
        window.t_frame = fixed(window.t_frame);
        MapReport {
            sequence,
            window,
            n1: filling.n1,
            n2: filling.n2,
            res: filling.res,
            beta: fixed(filling.beta),
            semi_dense_points,
            filled_regions: filling.decisions.iter().filter(|d| d.filled).count(),
            regions: filling.decisions.len(),
            per_kernel_errors_cm: kernel_errors.iter().map(KernelErrorRow::from).collect(),
            decisions: filling.decisions.iter().map(DecisionRow::from).collect(),
        }
    }

    /// One CSV row per evaluated kernel, or a single row with empty error
    /// columns when no ground truth was configured.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut csv = csv::Writer::from_writer(w);
        let header = ["sequence", "t_ref", "N1", "N2", "Res", "beta", "kernel", "error_cm"];
        csv.write_record(header).map_err(csv_error)?;
        let common = [
            self.sequence.clone(),
            self.window.t_ref.to_string(),
            self.n1.to_string(),
            self.n2.to_string(),
            self.res.to_string(),
            self.beta.to_string(),
        ];
        if self.per_kernel_errors_cm.is_empty() {
            csv.write_record(common.iter().map(String::as_str).chain(["", ""]))
                .map_err(csv_error)?;
        }
        for k in &self.per_kernel_errors_cm {
            let error = k.error_cm.to_string();
            csv.write_record(common.iter().map(String::as_str).chain([k.kernel.as_str(), error.as_str()]))
                .map_err(csv_error)?;
        }
        csv.flush().map_err(|e| Error::Internal(e.to_string()))
    }
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct EvalWindowRow {
    pub window: WindowReport,
    #[serde(rename = "N1")]
    pub n1: usize,
    #[serde(rename = "N2")]
    pub n2: usize,
    pub beta: f64,
    pub errors_cm: Vec<KernelErrorRow>,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct KernelSummary {
    pub kernel: String,
    pub segment_errors_cm: Vec<f64>,
    pub mean_cm: Option<f64>,
}

impl From<&ErrorReport> for KernelSummary {
    fn from(r: &ErrorReport) -> Self {
        KernelSummary {
            kernel: r.kernel.name().to_owned(),
            segment_errors_cm: r.segment_errors_cm.iter().copied().map(fixed).collect(),
            mean_cm: r.mean_cm().map(fixed),
        }
    }
}

/// Contents of `eval.json`.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct EvalReport {
    pub sequence: String,
    pub segment_len: f64,
    pub plane_depth: f64,
    pub windows: Vec<EvalWindowRow>,
    pub kernels: Vec<KernelSummary>,
}

impl EvalReport {
    /// One row per window, one error column per kernel.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut csv = csv::Writer::from_writer(w);
        let mut header: Vec<String> = ["sequence", "window", "t_start", "t_end", "N1", "N2", "beta"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        header.extend(self.kernels.iter().map(|k| format!("error_cm_{}", k.kernel)));
        csv.write_record(&header).map_err(csv_error)?;
        for (i, row) in self.windows.iter().enumerate() {
            let mut rec = vec![
                self.sequence.clone(),
                i.to_string(),
                row.window.t_start.to_string(),
                row.window.t_end.to_string(),
                row.n1.to_string(),
                row.n2.to_string(),
                row.beta.to_string(),
            ];
            rec.extend(row.errors_cm.iter().map(|e| e.error_cm.to_string()));
            csv.write_record(&rec).map_err(csv_error)?;
        }
        csv.flush().map_err(|e| Error::Internal(e.to_string()))
    }
}

fn csv_error(e: csv::Error) -> Error {
    Error::Internal(format!("csv: {e}"))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_file(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value).map_err(std::io::Error::other)?;
        w.write_all(b"\n")
    })
}
