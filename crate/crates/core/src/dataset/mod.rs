//! Readers for the Event Camera Dataset text layout plus the camera and pose
//! plumbing every later stage depends on.
//!
//! A dataset directory holds `events.txt`, `images.txt` (with the frames it
//! names), `calib.txt` and `groundtruth.txt`. All readers accept Unix or
//! Windows line endings and any mix of spaces and tabs between fields.

mod camera;
mod events;
mod frames;
mod trajectory;

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

pub use camera::{CameraModel, Distortion, UNDISTORT_MAX_ITERATIONS};
pub use events::{format_events, parse_events, write_events, Event, EventLines};
pub use frames::{
    parse_frame_index, select_reference_frame, write_frame_index, Frame, FrameEntry,
};
pub use trajectory::{format_poses, parse_poses, Pose, Trajectory};

use crate::error::{Error, Result};

pub const EVENTS_FILE: &str = "events.txt";
pub const IMAGES_FILE: &str = "images.txt";
pub const CALIB_FILE: &str = "calib.txt";
pub const GROUNDTRUTH_FILE: &str = "groundtruth.txt";

/// A recoverable oddity found while parsing, reported alongside the result.
#[derive(Debug, Clone, PartialEq)]
pub struct Warning {
    pub line: usize,
    pub message: String,
}

/// Parsed value plus whatever the parser complained about.
#[derive(Debug, Clone)]
pub struct Parsed<T> {
    pub value: T,
    pub warnings: Vec<Warning>,
}

/// Calls `f` with the 1-based line number and the whitespace-separated fields
/// of every non-empty line.
pub(crate) fn for_each_record<R, F>(reader: R, source: &str, mut f: F) -> Result<()>
where
    R: std::io::BufRead,
    F: FnMut(usize, &[&str]) -> Result<()>,
{
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::parse(source, i + 1, e.to_string()))?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        f(i + 1, &fields)?;
    }
    Ok(())
}

pub(crate) fn parse_field<T: std::str::FromStr>(
    source: &str,
    line: usize,
    what: &str,
    field: &str,
) -> Result<T> {
    field
        .parse()
        .map_err(|_| Error::parse(source, line, format!("cannot parse {what} from {field:?}")))
}

pub(crate) fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

/// Paths of the four files making up a dataset directory.
#[derive(Debug, Clone)]
pub struct DatasetPaths {
    pub root: PathBuf,
}

impl DatasetPaths {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        DatasetPaths { root: root.into() }
    }

    pub fn events(&self) -> PathBuf {
        self.root.join(EVENTS_FILE)
    }

    pub fn images(&self) -> PathBuf {
        self.root.join(IMAGES_FILE)
    }

    pub fn calib(&self) -> PathBuf {
        self.root.join(CALIB_FILE)
    }

    pub fn groundtruth(&self) -> PathBuf {
        self.root.join(GROUNDTRUTH_FILE)
    }

    pub fn read_calibration(&self, width: usize, height: usize) -> Result<CameraModel> {
        let path = self.calib();
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        CameraModel::parse_calibration(&text, width, height)
    }

    pub fn read_trajectory(&self) -> Result<Trajectory> {
        let path = self.groundtruth();
        let parsed = parse_poses(open(&path)?)?;
        Trajectory::new(parsed.value)
    }

    pub fn read_frame_index(&self) -> Result<Vec<FrameEntry>> {
        parse_frame_index(open(&self.images())?)
    }

    /// Events with `t_start <= t < t_end`. The file is assumed sorted, so
    /// reading stops at the first event past the window.
    pub fn read_events_in_window(
        &self,
        width: usize,
        height: usize,
        t_start: f64,
        t_end: f64,
    ) -> Result<Vec<Event>> {
        let mut lines = EventLines::new(open(&self.events())?, width, height);
        let mut events = Vec::new();
        for ev in lines.by_ref() {
            let ev = ev?;
            if ev.t >= t_end {
                break;
            }
            if ev.t >= t_start {
                events.push(ev);
            }
        }
        if lines.non_monotonic() > 0 {
            log::warn!(
                "{}: {} non-monotonic timestamps",
                self.events().display(),
                lines.non_monotonic()
            );
        }
        Ok(events)
    }
}
