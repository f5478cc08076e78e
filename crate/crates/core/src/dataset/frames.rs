use std::fmt::Write as _;
use std::io::BufRead;
use std::path::{Path, PathBuf};

use nalgebra::Vector2;

use super::{for_each_record, parse_field, CameraModel};
use crate::error::{Error, Result};

/// 8-bit grayscale image with its capture time.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub t: f64,
    pub width: usize,
    pub height: usize,
    /// Row-major intensities.
    pub data: Vec<u8>,
}

impl Frame {
    pub fn new(t: f64, width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != width * height {
            return Err(Error::InvalidArgument(format!(
                "frame buffer of {} bytes does not match {width}x{height}",
                data.len()
            )));
        }
        Ok(Frame {
            t,
            width,
            height,
            data,
        })
    }

    pub fn filled(t: f64, width: usize, height: usize, value: u8) -> Self {
        Frame {
            t,
            width,
            height,
            data: vec![value; width * height],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    /// Loads a PNG or PGM image as grayscale.
    pub fn load(path: &Path, t: f64) -> Result<Self> {
        let img = image::open(path)
            .map_err(|source| Error::Image {
                path: path.to_owned(),
                source,
            })?
            .into_luma8();
        let (w, h) = img.dimensions();
        Frame::new(t, w as usize, h as usize, img.into_raw())
    }

    /// Bilinear sample with border replication.
    pub fn sample_bilinear(&self, x: f64, y: f64) -> f64 {
        let max_x = (self.width - 1) as f64;
        let max_y = (self.height - 1) as f64;
        let x = x.clamp(0.0, max_x);
        let y = y.clamp(0.0, max_y);
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let top = self.get(x0, y0) as f64 * (1.0 - fx) + self.get(x1, y0) as f64 * fx;
        let bottom = self.get(x0, y1) as f64 * (1.0 - fx) + self.get(x1, y1) as f64 * fx;
        top * (1.0 - fy) + bottom * fy
    }

    /// Resamples a raw frame into the rectified geometry of `cam`.
    pub fn undistort(&self, cam: &CameraModel) -> Result<Frame> {
        if self.width != cam.width || self.height != cam.height {
            return Err(Error::InvalidArgument(format!(
                "frame is {}x{}, camera is {}x{}",
                self.width, self.height, cam.width, cam.height
            )));
        }
        if cam.distortion.is_zero() {
            return Ok(self.clone());
        }
        let mut data = Vec::with_capacity(self.data.len());
        for v in 0..self.height {
            for u in 0..self.width {
                let n = cam.pixel_to_normalized(u as f64, v as f64);
                let raw = cam.distort_normalized(Vector2::new(n.x, n.y));
                data.push(self.sample_bilinear(raw.x, raw.y).round() as u8);
            }
        }
        Ok(Frame { data, ..*self })
    }
}

/// One line of `images.txt`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameEntry {
    pub t: f64,
    pub path: PathBuf,
}

/// Parses `images.txt` lines `t filename`.
pub fn parse_frame_index<R: BufRead>(reader: R) -> Result<Vec<FrameEntry>> {
    let mut entries = Vec::new();
    for_each_record(reader, "images", |line, fields| {
        if fields.len() != 2 {
            return Err(Error::parse(
                "images",
                line,
                format!("expected \"t filename\", found {} fields", fields.len()),
            ));
        }
        entries.push(FrameEntry {
            t: parse_field("images", line, "timestamp", fields[0])?,
            path: PathBuf::from(fields[1]),
        });
        Ok(())
    })?;
    Ok(entries)
}

pub fn write_frame_index(entries: &[FrameEntry]) -> String {
    let mut out = String::new();
    for e in entries {
        let _ = writeln!(out, "{:.9} {}", e.t, e.path.display());
    }
    out
}

/// Entry closest in time to `t_ref`; ties go to the earlier frame.
pub fn select_reference_frame(index: &[FrameEntry], t_ref: f64) -> Result<&FrameEntry> {
    let mut best: Option<&FrameEntry> = None;
    for e in index {
        best = match best {
            None => Some(e),
            Some(b) => {
                let (db, de) = ((b.t - t_ref).abs(), (e.t - t_ref).abs());
                if de < db || (de == db && e.t < b.t) {
                    Some(e)
                } else {
                    Some(b)
                }
            }
        };
    }
    best.ok_or_else(|| Error::InvalidArgument("frame index is empty".into()))
}
