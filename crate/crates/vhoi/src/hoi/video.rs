//! Video and trajectory containers.
//!
//! `MaskVideo` holds `u8` frames, either 3-channel palette-colored masks or
//! 1-channel binary visibility maps. `RealVideo` holds `f64` frames and is
//! the working type for blurred renderings and decoded model output.
//! `TrajectorySet` is the sparse control signal: K point tracks over T
//! frames with per-frame visibility and one class label per track.

use ndarray::{Array2, Array3, Array4, Axis};
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::{Error, Result};

/// Palette-colored (3-channel) or binary (1-channel) frame sequence,
/// stored `[T, H, W, C]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskVideo {
    pub data: Array4<u8>,
}

impl MaskVideo {
    pub fn new(data: Array4<u8>) -> Result<Self> {
        let c = data.shape()[3];
        if c != 1 && c != 3 {
            return Err(Error::Shape(format!("mask video must have 1 or 3 channels, got {c}")));
        }
        Ok(Self { data })
    }

    pub fn zeros(t: usize, h: usize, w: usize, c: usize) -> Self {
        Self {
            data: Array4::zeros((t, h, w, c)),
        }
    }

    pub fn frames(&self) -> usize {
        self.data.shape()[0]
    }

    pub fn height(&self) -> usize {
        self.data.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.data.shape()[2]
    }

    pub fn channels(&self) -> usize {
        self.data.shape()[3]
    }

    /// Real-valued copy in `[0, 1]` (binary maps) or raw `[0, 255]` color units.
    pub fn to_real_raw(&self) -> RealVideo {
        RealVideo {
            data: self.data.mapv(|v| v as f64),
        }
    }

    /// Real-valued copy scaled to `[-1, 1]` from `[0, 255]` color units.
    pub fn to_real_signed(&self) -> RealVideo {
        RealVideo {
            data: self.data.mapv(|v| v as f64 / 127.5 - 1.0),
        }
    }

    /// Writes frames as zero-padded numbered PNGs plus a `meta.json`.
    pub fn save_png_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let (t, h, w, c) = dim4(&self.data);
        for ti in 0..t {
            let path = dir.join(format!("{ti:05}.png"));
            let frame = self.data.index_axis(Axis(0), ti);
            match c {
                3 => {
                    let mut buf = image::RgbImage::new(w as u32, h as u32);
                    for y in 0..h {
                        for x in 0..w {
                            buf.put_pixel(
                                x as u32,
                                y as u32,
                                image::Rgb([frame[[y, x, 0]], frame[[y, x, 1]], frame[[y, x, 2]]]),
                            );
                        }
                    }
                    buf.save(&path)?;
                }
                _ => {
                    // binary maps are stored as 0/255 luma for viewability
                    let mut buf = image::GrayImage::new(w as u32, h as u32);
                    for y in 0..h {
                        for x in 0..w {
                            let v = if frame[[y, x, 0]] > 0 { 255 } else { 0 };
                            buf.put_pixel(x as u32, y as u32, image::Luma([v]));
                        }
                    }
                    buf.save(&path)?;
                }
            }
        }
        let meta = serde_json::json!({ "t": t, "h": h, "w": w, "channels": c });
        std::fs::write(dir.join("meta.json"), serde_json::to_string_pretty(&meta)?)?;
        Ok(())
    }

    /// Loads a directory previously written by [`MaskVideo::save_png_dir`].
    pub fn load_png_dir(dir: &Path) -> Result<Self> {
        let meta: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.join("meta.json"))?)?;
        let t = meta["t"].as_u64().ok_or_else(|| Error::Data("meta.json missing t".into()))?
            as usize;
        let h = meta["h"].as_u64().unwrap_or(0) as usize;
        let w = meta["w"].as_u64().unwrap_or(0) as usize;
        let c = meta["channels"].as_u64().unwrap_or(3) as usize;
        let mut data = Array4::zeros((t, h, w, c));
        for ti in 0..t {
            let img = image::open(dir.join(format!("{ti:05}.png")))?;
            match c {
                3 => {
                    let rgb = img.to_rgb8();
                    if rgb.width() as usize != w || rgb.height() as usize != h {
                        return Err(Error::Data(format!("frame {ti} has wrong size")));
                    }
                    for y in 0..h {
                        for x in 0..w {
                            let px = rgb.get_pixel(x as u32, y as u32);
                            for ch in 0..3 {
                                data[[ti, y, x, ch]] = px[ch];
                            }
                        }
                    }
                }
                _ => {
                    let gray = img.to_luma8();
                    for y in 0..h {
                        for x in 0..w {
                            data[[ti, y, x, 0]] =
                                if gray.get_pixel(x as u32, y as u32)[0] > 127 { 1 } else { 0 };
                        }
                    }
                }
            }
        }
        MaskVideo::new(data)
    }
}

/// Real-valued frame sequence `[T, H, W, C]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RealVideo {
    pub data: Array4<f64>,
}

impl RealVideo {
    pub fn zeros(t: usize, h: usize, w: usize, c: usize) -> Self {
        Self {
            data: Array4::zeros((t, h, w, c)),
        }
    }

    pub fn frames(&self) -> usize {
        self.data.shape()[0]
    }

    /// Maps `[-1, 1]` values back to `[0, 255]` color units (clamped).
    pub fn signed_to_color_units(&self) -> RealVideo {
        RealVideo {
            data: self.data.mapv(|v| ((v + 1.0) * 127.5).clamp(0.0, 255.0)),
        }
    }

    /// Clamps to `[0,255]`, rounds, and converts to `u8` frames.
    pub fn to_mask_rounded(&self) -> Result<MaskVideo> {
        MaskVideo::new(self.data.mapv(|v| v.round().clamp(0.0, 255.0) as u8))
    }
}

fn dim4<T>(a: &Array4<T>) -> (usize, usize, usize, usize) {
    let s = a.shape();
    (s[0], s[1], s[2], s[3])
}

/// K point tracks over T frames with visibility flags and class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySet {
    /// `[K, T, 2]` pixel coordinates, `(x, y)` order.
    pub points: Array3<f64>,
    /// `[K, T]` per-frame visibility.
    pub visibility: Array2<bool>,
    /// `[K]` class ids; never the background class.
    pub labels: Vec<u8>,
    pub height: usize,
    pub width: usize,
}

#[derive(Serialize, Deserialize)]
struct TrackJson {
    label: u8,
    points: Vec<[f64; 2]>,
    visible: Vec<bool>,
}

#[derive(Serialize, Deserialize)]
struct TrajectoryJson {
    #[serde(rename = "T")]
    t: usize,
    #[serde(rename = "H")]
    h: usize,
    #[serde(rename = "W")]
    w: usize,
    tracks: Vec<TrackJson>,
}

impl TrajectorySet {
    pub fn num_tracks(&self) -> usize {
        self.points.shape()[0]
    }

    pub fn num_frames(&self) -> usize {
        self.points.shape()[1]
    }

    /// Checks the type invariants: K >= 1, consistent shapes, non-background
    /// labels, finite in-bounds coordinates wherever a point is visible.
    pub fn validate(&self) -> Result<()> {
        let (k, t, two) = (
            self.points.shape()[0],
            self.points.shape()[1],
            self.points.shape()[2],
        );
        if k == 0 {
            return Err(Error::Invalid("trajectory set needs at least one track".into()));
        }
        if two != 2 {
            return Err(Error::Shape("trajectory points must be [K, T, 2]".into()));
        }
        if self.visibility.shape() != [k, t] {
            return Err(Error::Shape("visibility must be [K, T]".into()));
        }
        if self.labels.len() != k {
            return Err(Error::Shape("labels must have one entry per track".into()));
        }
        if self.labels.iter().any(|&l| l == 0) {
            return Err(Error::Invalid("track labels must not be the background class".into()));
        }
        for ki in 0..k {
            for ti in 0..t {
                if !self.visibility[[ki, ti]] {
                    continue;
                }
                let (x, y) = (self.points[[ki, ti, 0]], self.points[[ki, ti, 1]]);
                if !x.is_finite() || !y.is_finite() {
                    return Err(Error::Invalid(format!(
                        "track {ki} frame {ti} has non-finite coordinates"
                    )));
                }
                if x < 0.0 || x >= self.width as f64 || y < 0.0 || y >= self.height as f64 {
                    return Err(Error::Invalid(format!(
                        "track {ki} frame {ti} visible point ({x}, {y}) out of bounds"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let (k, t) = (self.num_tracks(), self.num_frames());
        let tracks = (0..k)
            .map(|ki| TrackJson {
                label: self.labels[ki],
                points: (0..t)
                    .map(|ti| [self.points[[ki, ti, 0]], self.points[[ki, ti, 1]]])
                    .collect(),
                visible: (0..t).map(|ti| self.visibility[[ki, ti]]).collect(),
            })
            .collect();
        Ok(serde_json::to_string_pretty(&TrajectoryJson {
            t,
            h: self.height,
            w: self.width,
            tracks,
        })?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let parsed: TrajectoryJson = serde_json::from_str(s)?;
        let k = parsed.tracks.len();
        let t = parsed.t;
        let mut points = Array3::zeros((k, t, 2));
        let mut visibility = Array2::from_elem((k, t), false);
        let mut labels = Vec::with_capacity(k);
        for (ki, tr) in parsed.tracks.iter().enumerate() {
            if tr.points.len() != t || tr.visible.len() != t {
                return Err(Error::Data(format!("track {ki} length mismatch with T={t}")));
            }
            labels.push(tr.label);
            for ti in 0..t {
                points[[ki, ti, 0]] = tr.points[ti][0];
                points[[ki, ti, 1]] = tr.points[ti][1];
                visibility[[ki, ti]] = tr.visible[ti];
            }
        }
        let out = Self {
            points,
            visibility,
            labels,
            height: parsed.h,
            width: parsed.w,
        };
        out.validate()?;
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_track() -> TrajectorySet {
        let mut points = Array3::zeros((1, 2, 2));
        points[[0, 0, 0]] = 10.0;
        points[[0, 0, 1]] = 11.0;
        points[[0, 1, 0]] = 12.0;
        points[[0, 1, 1]] = 13.0;
        TrajectorySet {
            points,
            visibility: Array2::from_elem((1, 2), true),
            labels: vec![14],
            height: 32,
            width: 32,
        }
    }

    #[test]
    fn trajectory_json_round_trip() {
        let t = single_track();
        let json = t.to_json().unwrap();
        let back = TrajectorySet::from_json(&json).unwrap();
        assert_eq!(back, t);
        // schema spot checks
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v["T"], 2);
        assert_eq!(v["H"], 32);
        assert_eq!(v["tracks"][0]["label"], 14);
        assert_eq!(v["tracks"][0]["points"][0][0], 10.0);
    }

    #[test]
    fn validate_rejects_background_label_and_out_of_bounds() {
        let mut t = single_track();
        t.labels[0] = 0;
        assert!(t.validate().is_err());
        let mut t = single_track();
        t.points[[0, 1, 0]] = 99.0;
        assert!(t.validate().is_err());
        let mut t = single_track();
        t.points[[0, 1, 0]] = f64::NAN;
        assert!(t.validate().is_err());
        // invisible points may be anywhere
        let mut t = single_track();
        t.points[[0, 1, 0]] = f64::NAN;
        t.visibility[[0, 1]] = false;
        assert!(t.validate().is_ok());
    }

    #[test]
    fn mask_video_png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut mv = MaskVideo::zeros(2, 4, 5, 3);
        mv.data[[0, 1, 2, 0]] = 255;
        mv.data[[1, 3, 4, 2]] = 7;
        mv.save_png_dir(dir.path()).unwrap();
        let back = MaskVideo::load_png_dir(dir.path()).unwrap();
        assert_eq!(back, mv);

        let mut vis = MaskVideo::zeros(2, 4, 5, 1);
        vis.data[[1, 0, 0, 0]] = 1;
        vis.save_png_dir(dir.path()).unwrap();
        let back = MaskVideo::load_png_dir(dir.path()).unwrap();
        assert_eq!(back, vis);
    }
}
