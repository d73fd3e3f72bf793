//! File formats: `.xyz` / `.bin` point clouds, event CSV, scene configs,
//! and 8-bit PPM images.

use super::{DatasetError, Event, EventStream, Image};
use crate::geometry::{Frame, Intrinsics, PointCloud};
use std::fs;
use std::path::Path;

/// Text cloud: one `x y z` per line.
pub fn save_point_cloud_xyz(pc: &PointCloud, path: &Path) -> Result<(), DatasetError> {
    let mut out = String::new();
    for p in &pc.points {
        out.push_str(&format!("{} {} {}\n", p[0], p[1], p[2]));
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn load_point_cloud_xyz(path: &Path, frame: Frame) -> Result<PointCloud, DatasetError> {
    let text = fs::read_to_string(path)?;
    let mut points = Vec::new();
    let mut offset = 0u64;
    for line in text.lines() {
        let trimmed = line.trim();
        if !trimmed.is_empty() {
            let vals: Vec<f64> = trimmed
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| DatasetError::Malformed {
                    offset,
                    message: format!("bad coordinate: {e}"),
                })?;
            if vals.len() != 3 {
                return Err(DatasetError::Malformed {
                    offset,
                    message: format!("expected 3 coordinates, got {}", vals.len()),
                });
            }
            points.push([vals[0], vals[1], vals[2]]);
        }
        offset += line.len() as u64 + 1;
    }
    Ok(PointCloud::new(points, frame))
}

/// Binary cloud: little-endian float32 `x y z` triples, no header.
pub fn save_point_cloud_bin(pc: &PointCloud, path: &Path) -> Result<(), DatasetError> {
    let mut bytes = Vec::with_capacity(pc.len() * 12);
    for p in &pc.points {
        for &v in p {
            bytes.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    fs::write(path, bytes)?;
    Ok(())
}

pub fn load_point_cloud_bin(path: &Path, frame: Frame) -> Result<PointCloud, DatasetError> {
    let bytes = fs::read(path)?;
    if bytes.len() % 12 != 0 {
        return Err(DatasetError::Malformed {
            offset: (bytes.len() / 12 * 12) as u64,
            message: format!("truncated record: {} trailing bytes", bytes.len() % 12),
        });
    }
    let mut points = Vec::with_capacity(bytes.len() / 12);
    for rec in bytes.chunks_exact(12) {
        let mut p = [0.0f64; 3];
        for (i, c) in rec.chunks_exact(4).enumerate() {
            p[i] = f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64;
        }
        points.push(p);
    }
    Ok(PointCloud::new(points, frame))
}

const EVENT_CSV_HEADER: &str = "t_us,x,y,polarity";

/// Event CSV: header line then `t_us,x,y,polarity` rows, polarity in {1,-1}.
pub fn save_events_csv(es: &EventStream, path: &Path) -> Result<(), DatasetError> {
    let mut out = String::from(EVENT_CSV_HEADER);
    out.push('\n');
    for e in es.events() {
        out.push_str(&format!("{},{},{},{}\n", e.t_us, e.x, e.y, e.polarity));
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn load_events_csv(path: &Path, width: u32, height: u32) -> Result<EventStream, DatasetError> {
    let text = fs::read_to_string(path)?;
    let mut events = Vec::new();
    let mut offset = 0u64;
    for (lineno, line) in text.lines().enumerate() {
        let malformed = |message: String| DatasetError::Malformed { offset, message };
        if lineno == 0 {
            if line.trim() != EVENT_CSV_HEADER {
                return Err(malformed(format!("expected header {EVENT_CSV_HEADER:?}")));
            }
        } else if !line.trim().is_empty() {
            let fields: Vec<&str> = line.trim().split(',').collect();
            if fields.len() != 4 {
                return Err(malformed(format!("expected 4 fields, got {}", fields.len())));
            }
            let t_us = fields[0]
                .parse::<i64>()
                .map_err(|e| malformed(format!("bad timestamp: {e}")))?;
            let x = fields[1]
                .parse::<u32>()
                .map_err(|e| malformed(format!("bad x: {e}")))?;
            let y = fields[2]
                .parse::<u32>()
                .map_err(|e| malformed(format!("bad y: {e}")))?;
            let polarity = fields[3]
                .parse::<i8>()
                .map_err(|e| malformed(format!("bad polarity: {e}")))?;
            events.push(Event { t_us, x, y, polarity });
        }
        offset += line.len() as u64 + 1;
    }
    EventStream::new(events, width, height)
}

/// 8-bit binary PPM (P6); values quantized as `round(v * 255)` clamped.
pub fn encode_image_ppm(img: &Image) -> Vec<u8> {
    assert_eq!(img.channels, 3, "PPM wants 3 channels");
    let mut out = format!("P6\n{} {}\n255\n", img.width, img.height).into_bytes();
    for &v in &img.data {
        out.push((v.clamp(0.0, 1.0) * 255.0).round() as u8);
    }
    out
}

pub fn decode_image_ppm(bytes: &[u8]) -> Result<Image, DatasetError> {
    let malformed = |offset: u64, message: &str| DatasetError::Malformed {
        offset,
        message: message.to_string(),
    };
    // Header: magic, width, height, maxval, each followed by one whitespace.
    let mut pos = 0usize;
    let mut token = |pos: &mut usize| -> Result<String, DatasetError> {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        let start = *pos;
        while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if start == *pos {
            return Err(DatasetError::Malformed {
                offset: start as u64,
                message: "unexpected end of PPM header".into(),
            });
        }
        Ok(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
    };
    if token(&mut pos)? != "P6" {
        return Err(malformed(0, "not a P6 PPM"));
    }
    let width: usize = token(&mut pos)?
        .parse()
        .map_err(|_| malformed(pos as u64, "bad width"))?;
    let height: usize = token(&mut pos)?
        .parse()
        .map_err(|_| malformed(pos as u64, "bad height"))?;
    let maxval: usize = token(&mut pos)?
        .parse()
        .map_err(|_| malformed(pos as u64, "bad maxval"))?;
    if maxval != 255 {
        return Err(malformed(pos as u64, "only maxval 255 supported"));
    }
    pos += 1; // single whitespace after maxval
    let need = width * height * 3;
    if bytes.len() < pos + need {
        return Err(malformed(bytes.len() as u64, "truncated pixel data"));
    }
    let data = bytes[pos..pos + need]
        .iter()
        .map(|&b| b as f64 / 255.0)
        .collect();
    Ok(Image {
        width,
        height,
        channels: 3,
        data,
    })
}

/// Flat key=value scene description for the synthetic generator.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    pub point_count: usize,
    /// Depth range of generated points, meters.
    pub z_min: f64,
    pub z_max: f64,
    /// Camera resolution, pixels (shared by the RGB and event cameras).
    pub width: u32,
    pub height: u32,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// Data seed: the dataset is a pure function of this config.
    pub seed: u64,
    /// Virtual camera motion used to synthesize events, pixels.
    pub motion_px: f64,
    /// Number of frames to generate (optional key, default 8).
    pub frames: usize,
    /// Intensity-difference threshold for event emission (optional key).
    pub event_thresh: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            point_count: 1500,
            z_min: 4.0,
            z_max: 20.0,
            width: 640,
            height: 320,
            fx: 320.0,
            fy: 320.0,
            cx: 320.0,
            cy: 160.0,
            seed: 42,
            motion_px: 2.0,
            frames: 8,
            event_thresh: 0.05,
        }
    }
}

impl SceneConfig {
    pub fn intrinsics(&self) -> Result<Intrinsics, DatasetError> {
        Ok(Intrinsics::new(
            self.fx,
            self.fy,
            self.cx,
            self.cy,
            self.width,
            self.height,
        )?)
    }

    pub fn parse(text: &str) -> Result<Self, DatasetError> {
        let mut cfg = SceneConfig::default();
        let mut seen = std::collections::HashSet::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| DatasetError::InfeasibleConfig(format!("not key=value: {line:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            seen.insert(key.to_string());
            let bad = |e: String| DatasetError::InfeasibleConfig(format!("key {key}: {e}"));
            match key {
                "point_count" => cfg.point_count = value.parse().map_err(|e| bad(format!("{e}")))?,
                "z_min" => cfg.z_min = value.parse().map_err(|e| bad(format!("{e}")))?,
                "z_max" => cfg.z_max = value.parse().map_err(|e| bad(format!("{e}")))?,
                "width" => cfg.width = value.parse().map_err(|e| bad(format!("{e}")))?,
                "height" => cfg.height = value.parse().map_err(|e| bad(format!("{e}")))?,
                "fx" => cfg.fx = value.parse().map_err(|e| bad(format!("{e}")))?,
                "fy" => cfg.fy = value.parse().map_err(|e| bad(format!("{e}")))?,
                "cx" => cfg.cx = value.parse().map_err(|e| bad(format!("{e}")))?,
                "cy" => cfg.cy = value.parse().map_err(|e| bad(format!("{e}")))?,
                "seed" => cfg.seed = value.parse().map_err(|e| bad(format!("{e}")))?,
                "motion_px" => cfg.motion_px = value.parse().map_err(|e| bad(format!("{e}")))?,
                "frames" => cfg.frames = value.parse().map_err(|e| bad(format!("{e}")))?,
                "event_thresh" => {
                    cfg.event_thresh = value.parse().map_err(|e| bad(format!("{e}")))?
                }
                _ => return Err(DatasetError::UnknownKey(key.to_string())),
            }
        }
        for required in [
            "point_count",
            "z_min",
            "z_max",
            "width",
            "height",
            "fx",
            "fy",
            "cx",
            "cy",
            "seed",
            "motion_px",
        ] {
            if !seen.contains(required) {
                return Err(DatasetError::MissingKey(required.to_string()));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, DatasetError> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        if !(self.z_min > 0.0 && self.z_min < self.z_max) {
            return Err(DatasetError::InfeasibleConfig(format!(
                "depth range [{}, {}] is empty or non-positive",
                self.z_min, self.z_max
            )));
        }
        if self.point_count == 0 {
            return Err(DatasetError::InfeasibleConfig("point_count is zero".into()));
        }
        if self.frames == 0 {
            return Err(DatasetError::InfeasibleConfig("frames is zero".into()));
        }
        self.intrinsics()?;
        Ok(())
    }

    pub fn to_text(&self) -> String {
        format!(
            "point_count={}\nz_min={}\nz_max={}\nwidth={}\nheight={}\nfx={}\nfy={}\ncx={}\ncy={}\nseed={}\nmotion_px={}\nframes={}\nevent_thresh={}\n",
            self.point_count,
            self.z_min,
            self.z_max,
            self.width,
            self.height,
            self.fx,
            self.fy,
            self.cx,
            self.cy,
            self.seed,
            self.motion_px,
            self.frames,
            self.event_thresh,
        )
    }
}
