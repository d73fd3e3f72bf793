//! Dataset directory layout and integrity manifest.
//!
//! A dataset directory holds `scene.cfg`, a `frames/` subdirectory with one
//! file quartet per frame, and `manifest.txt` listing every file with its
//! SHA-256 plus a final checksum over the manifest body itself.

use crate::CliError;
use sha2::{Digest, Sha256};
use std::fs;
use std::path::{Path, PathBuf};
use trical_core::dataset::{
    load_events_csv, load_point_cloud_bin, SceneConfig, SyntheticFrame,
};
use trical_core::geometry::{Frame, RigidTransform};

pub const MANIFEST_MAGIC: &str = "trical-dataset v1";

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    let out = h.finalize();
    out.iter().map(|b| format!("{b:02x}")).collect()
}

/// Relative paths of one frame's files.
pub fn frame_files(index: usize) -> [String; 5] {
    [
        format!("frames/frame_{index:04}.cloud.bin"),
        format!("frames/frame_{index:04}.image.ppm"),
        format!("frames/frame_{index:04}.events.csv"),
        format!("frames/frame_{index:04}.t_rgb.txt"),
        format!("frames/frame_{index:04}.t_ev.txt"),
    ]
}

/// Assemble the manifest from per-file hashes (in frame order).
pub fn render_manifest(frames: usize, cfg: &SceneConfig, files: &[(String, String)]) -> String {
    let mut body = format!(
        "{MANIFEST_MAGIC}\nframes {frames}\nwidth {}\nheight {}\n",
        cfg.width, cfg.height
    );
    for (path, hash) in files {
        body.push_str(&format!("file {path} {hash}\n"));
    }
    let checksum = sha256_hex(body.as_bytes());
    format!("{body}checksum {checksum}\n")
}

/// Parsed, verified manifest.
pub struct DatasetManifest {
    pub root: PathBuf,
    pub frames: usize,
    pub files: Vec<(String, String)>,
}

/// Read `manifest.txt`, verify the body checksum, and confirm every listed
/// file exists with the recorded hash.
pub fn verify_manifest(root: &Path) -> Result<DatasetManifest, CliError> {
    let text = fs::read_to_string(root.join("manifest.txt"))
        .map_err(|e| CliError::MissingArtifact(format!("manifest.txt in {root:?}: {e}")))?;
    let bad = |m: String| CliError::DataFormat(format!("manifest: {m}"));

    let (body, checksum_line) = text
        .rsplit_once("checksum ")
        .ok_or_else(|| bad("missing checksum line".into()))?;
    let expect = checksum_line.trim();
    let got = sha256_hex(body.as_bytes());
    if got != expect {
        return Err(bad(format!("checksum mismatch: {got} vs {expect}")));
    }

    let mut lines = body.lines();
    if lines.next() != Some(MANIFEST_MAGIC) {
        return Err(bad("bad magic".into()));
    }
    let mut frames = None;
    let mut files = Vec::new();
    for line in lines {
        if let Some(rest) = line.strip_prefix("frames ") {
            frames = Some(rest.parse::<usize>().map_err(|e| bad(format!("frames: {e}")))?);
        } else if line.starts_with("width ") || line.starts_with("height ") {
            continue;
        } else if let Some(rest) = line.strip_prefix("file ") {
            let (path, hash) = rest
                .rsplit_once(' ')
                .ok_or_else(|| bad(format!("bad file line {line:?}")))?;
            files.push((path.to_string(), hash.to_string()));
        } else if !line.trim().is_empty() {
            return Err(bad(format!("unexpected line {line:?}")));
        }
    }
    let frames = frames.ok_or_else(|| bad("missing frames line".into()))?;
    for (rel, hash) in &files {
        let bytes = fs::read(root.join(rel))
            .map_err(|e| CliError::MissingArtifact(format!("{rel}: {e}")))?;
        let got = sha256_hex(&bytes);
        if got != *hash {
            return Err(bad(format!("{rel}: hash mismatch")));
        }
    }
    Ok(DatasetManifest {
        root: root.to_path_buf(),
        frames,
        files,
    })
}

/// Load one frame quartet back into a [`SyntheticFrame`].
pub fn load_frame(
    root: &Path,
    cfg: &SceneConfig,
    index: usize,
) -> Result<SyntheticFrame, CliError> {
    let [cloud_p, image_p, events_p, t_rgb_p, t_ev_p] = frame_files(index);
    let cloud = load_point_cloud_bin(&root.join(cloud_p), Frame::Lidar)?;
    let image_bytes = fs::read(root.join(image_p))?;
    let image = trical_core::dataset::decode_image_ppm(&image_bytes)?;
    let events = load_events_csv(&root.join(events_p), cfg.width, cfg.height)?;
    let t_rgb_line = fs::read_to_string(root.join(t_rgb_p))?;
    let t_lidar_rgb =
        RigidTransform::from_line(t_rgb_line.trim(), Frame::Lidar, Frame::Rgb)?;
    let t_ev_line = fs::read_to_string(root.join(t_ev_p))?;
    let t_lidar_event =
        RigidTransform::from_line(t_ev_line.trim(), Frame::Lidar, Frame::Event)?;
    let k = cfg.intrinsics()?;
    Ok(SyntheticFrame {
        cloud,
        image,
        events,
        t_lidar_rgb,
        t_lidar_event,
        k_rgb: k,
        k_event: k,
    })
}

/// Load the scene config stored alongside a dataset.
pub fn load_dataset_config(root: &Path) -> Result<SceneConfig, CliError> {
    Ok(SceneConfig::load(&root.join("scene.cfg"))?)
}
