//! Checkpoint format: a text manifest of tensor names and shapes per pair,
//! each followed by a flat little-endian float64 blob.

use super::{RegressorConfig, RegressorError, RegressorParams, StageModel};
use crate::Pair;
use std::fs;
use std::path::Path;

const MAGIC: &str = "trical-checkpoint v1";

fn write_params(out: &mut Vec<u8>, pair: Pair, p: &RegressorParams) {
    out.extend_from_slice(format!("pair {}\n", pair.label()).as_bytes());
    let c = &p.cfg;
    out.extend_from_slice(
        format!(
            "cfg in_channels {}\ncfg width {}\ncfg height {}\ncfg growth {}\ncfg fc_width {}\ncfg head_width {}\ncfg leaky_slope {}\n",
            c.in_channels, c.width, c.height, c.growth, c.fc_width, c.head_width, c.leaky_slope
        )
        .as_bytes(),
    );
    let tensors = p.tensors();
    for (name, shape, _) in &tensors {
        let dims: Vec<String> = shape.iter().map(|d| d.to_string()).collect();
        out.extend_from_slice(format!("tensor {name} {}\n", dims.join(" ")).as_bytes());
    }
    let flat = p.to_flat();
    out.extend_from_slice(format!("data {}\n", flat.len()).as_bytes());
    for v in flat {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

/// Serialize one stage (both pairs) to a checkpoint file.
pub fn save_stage_checkpoint(
    path: &Path,
    stage: usize,
    model: &StageModel,
) -> Result<(), RegressorError> {
    let mut out = format!("{MAGIC}\nstage {stage}\n").into_bytes();
    write_params(&mut out, Pair::LidarRgb, &model.rgb);
    write_params(&mut out, Pair::LidarEvent, &model.ev);
    fs::write(path, out)?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn line(&mut self) -> Result<&'a str, RegressorError> {
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
            self.pos += 1;
        }
        if self.pos >= self.bytes.len() {
            return Err(RegressorError::Checkpoint("unexpected end of file".into()));
        }
        let line = std::str::from_utf8(&self.bytes[start..self.pos])
            .map_err(|e| RegressorError::Checkpoint(format!("non-UTF8 manifest line: {e}")))?;
        self.pos += 1;
        Ok(line)
    }

    fn blob(&mut self, count: usize) -> Result<Vec<f64>, RegressorError> {
        let need = count * 8;
        if self.bytes.len() < self.pos + need {
            return Err(RegressorError::Checkpoint(format!(
                "truncated data blob at byte {}",
                self.pos
            )));
        }
        let vals = self.bytes[self.pos..self.pos + need]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes([c[0], c[1], c[2], c[3], c[4], c[5], c[6], c[7]]))
            .collect();
        self.pos += need;
        Ok(vals)
    }
}

fn read_params(cur: &mut Cursor, expect_pair: Pair) -> Result<RegressorParams, RegressorError> {
    let bad = |m: String| RegressorError::Checkpoint(m);
    let pair_line = cur.line()?;
    if pair_line != format!("pair {}", expect_pair.label()) {
        return Err(bad(format!(
            "expected 'pair {}', got {pair_line:?}",
            expect_pair.label()
        )));
    }
    let mut cfg = RegressorConfig::default();
    let mut names = Vec::new();
    loop {
        let line = cur.line()?;
        if let Some(rest) = line.strip_prefix("cfg ") {
            let (key, value) = rest
                .split_once(' ')
                .ok_or_else(|| bad(format!("bad cfg line {line:?}")))?;
            let parse_usize =
                |v: &str| v.parse::<usize>().map_err(|e| bad(format!("cfg {key}: {e}")));
            match key {
                "in_channels" => cfg.in_channels = parse_usize(value)?,
                "width" => cfg.width = parse_usize(value)?,
                "height" => cfg.height = parse_usize(value)?,
                "growth" => cfg.growth = parse_usize(value)?,
                "fc_width" => cfg.fc_width = parse_usize(value)?,
                "head_width" => cfg.head_width = parse_usize(value)?,
                "leaky_slope" => {
                    cfg.leaky_slope = value
                        .parse::<f64>()
                        .map_err(|e| bad(format!("cfg leaky_slope: {e}")))?
                }
                other => return Err(bad(format!("unknown cfg key {other:?}"))),
            }
        } else if let Some(rest) = line.strip_prefix("tensor ") {
            names.push(rest.to_string());
        } else if let Some(rest) = line.strip_prefix("data ") {
            let count: usize = rest.parse().map_err(|e| bad(format!("data count: {e}")))?;
            let flat = cur.blob(count)?;
            let expected = RegressorParams::zeros(&cfg);
            if expected.n_params() != count {
                return Err(bad(format!(
                    "data count {count} does not match config ({} params)",
                    expected.n_params()
                )));
            }
            let declared: Vec<String> = expected
                .tensors()
                .iter()
                .map(|(name, shape, _)| {
                    let dims: Vec<String> = shape.iter().map(|d| d.to_string()).collect();
                    format!("{name} {}", dims.join(" "))
                })
                .collect();
            if names != declared {
                return Err(bad("tensor manifest does not match config shapes".into()));
            }
            return Ok(RegressorParams::from_flat(&cfg, &flat));
        } else {
            return Err(bad(format!("unexpected manifest line {line:?}")));
        }
    }
}

/// Load a stage checkpoint; returns the stage index and both pair models.
pub fn load_stage_checkpoint(path: &Path) -> Result<(usize, StageModel), RegressorError> {
    let bytes = fs::read(path)?;
    let mut cur = Cursor {
        bytes: &bytes,
        pos: 0,
    };
    let magic = cur.line()?;
    if magic != MAGIC {
        return Err(RegressorError::Checkpoint(format!(
            "bad magic {magic:?}"
        )));
    }
    let stage_line = cur.line()?;
    let stage: usize = stage_line
        .strip_prefix("stage ")
        .ok_or_else(|| RegressorError::Checkpoint(format!("expected stage line, got {stage_line:?}")))?
        .parse()
        .map_err(|e| RegressorError::Checkpoint(format!("stage index: {e}")))?;
    let rgb = read_params(&mut cur, Pair::LidarRgb)?;
    let ev = read_params(&mut cur, Pair::LidarEvent)?;
    Ok((stage, StageModel { rgb, ev }))
}
