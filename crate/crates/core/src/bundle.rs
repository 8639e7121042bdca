//! On-disk prediction bundles.
//!
//! A bundle is a directory holding `manifest.json` plus three headerless
//! tensors per image: the pointmap (`H × W × 3` little-endian binary32),
//! the confidence map (`H × W` binary32) and the validity mask (`H × W`
//! bytes, 0 or 1). A stream is a directory of `submap_NNNN/` bundles.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Intrinsics, Pose, Vec3};
use crate::prediction::{FramePrediction, SubmapPrediction};

pub const MANIFEST: &str = "manifest.json";

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub submap_index: usize,
    #[serde(rename = "O")]
    pub overlap: usize,
    pub frames: Vec<FrameEntry>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FrameEntry {
    pub t: usize,
    pub c: usize,
    pub width: usize,
    pub height: usize,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// Row-major camera-to-submap 4×4. `null` entries (how JSON spells
    /// non-finite numbers) are rejected on load.
    pub pose: Vec<Option<f64>>,
    pub pointmap_file: String,
    pub confidence_file: String,
    pub mask_file: String,
}

fn tensor_names(t: usize, c: usize) -> (String, String, String) {
    let stem = format!("t{t:05}_c{c:02}");
    (
        format!("{stem}_points.f32"),
        format!("{stem}_conf.f32"),
        format!("{stem}_mask.u8"),
    )
}

pub fn submap_dir(root: &Path, k: usize) -> PathBuf {
    root.join(format!("submap_{k:04}"))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Writes a submap bundle into `dir`, creating it if needed. Pointmaps are
/// stored as binary32, so coordinates round to the nearest `f32`.
pub fn save_bundle(sp: &SubmapPrediction, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut frames = Vec::with_capacity(sp.frames.len());
    for f in &sp.frames {
        f.validate()?;
        let (pm, cf, mk) = tensor_names(f.t, f.c);

        let mut buf = Vec::with_capacity(f.pointmap.len() * 12);
        for p in &f.pointmap {
            for v in p.iter() {
                buf.extend_from_slice(&(*v as f32).to_le_bytes());
            }
        }
        write_file(&dir.join(&pm), &buf)?;

        let buf: Vec<u8> = f.confidence.iter().flat_map(|c| c.to_le_bytes()).collect();
        write_file(&dir.join(&cf), &buf)?;

        let buf: Vec<u8> = f.valid.iter().map(|&m| m as u8).collect();
        write_file(&dir.join(&mk), &buf)?;

        let k = &f.intrinsics;
        frames.push(FrameEntry {
            t: f.t,
            c: f.c,
            width: k.width,
            height: k.height,
            fx: k.fx,
            fy: k.fy,
            cx: k.cx,
            cy: k.cy,
            pose: f.pose.to_row_major().iter().map(|&v| Some(v)).collect(),
            pointmap_file: pm,
            confidence_file: cf,
            mask_file: mk,
        });
    }
    let manifest = Manifest {
        submap_index: sp.index,
        overlap: sp.overlap,
        frames,
    };
    let path = dir.join(MANIFEST);
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Json {
        path: path.clone(),
        source: e,
    })?;
    write_file(&path, text.as_bytes())
}

fn read_tensor(dir: &Path, file: &str, elem: usize, expected: usize, t: usize, c: usize) -> Result<Vec<u8>> {
    let path = dir.join(file);
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    if bytes.len() % elem != 0 {
        return Err(Error::ReadLength {
            t,
            c,
            file: path.display().to_string(),
            got: bytes.len(),
        });
    }
    if bytes.len() / elem != expected {
        return Err(Error::ShapeMismatch {
            t,
            c,
            file: path.display().to_string(),
            expected,
            got: bytes.len() / elem,
        });
    }
    Ok(bytes)
}

fn f32s(bytes: &[u8]) -> impl Iterator<Item = f32> + '_ {
    bytes.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
}

pub fn load_bundle(dir: &Path) -> Result<SubmapPrediction> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::Json {
        path: path.clone(),
        source: e,
    })?;

    let mut frames = Vec::with_capacity(manifest.frames.len());
    for e in &manifest.frames {
        let (t, c) = (e.t, e.c);
        let bad = |reason: String| Error::InvalidFrame { t, c, reason };
        let intrinsics =
            Intrinsics::new(e.fx, e.fy, e.cx, e.cy, e.width, e.height).map_err(|err| bad(err.to_string()))?;
        if e.pose.len() != 16 {
            return Err(bad(format!("pose has {} entries, expected 16", e.pose.len())));
        }
        let mut pose = [0.0; 16];
        for (dst, src) in pose.iter_mut().zip(&e.pose) {
            *dst = src.filter(|v| v.is_finite()).ok_or_else(|| bad("non-finite pose entry".into()))?;
        }
        let pose = Pose::from_row_major(&pose).map_err(|err| bad(err.to_string()))?;

        let n = e.width * e.height;
        let pm = read_tensor(dir, &e.pointmap_file, 4, n * 3, t, c)?;
        let pointmap: Vec<Vec3> = f32s(&pm)
            .collect::<Vec<_>>()
            .chunks_exact(3)
            .map(|p| Vec3::new(p[0] as f64, p[1] as f64, p[2] as f64))
            .collect();
        let confidence: Vec<f32> = f32s(&read_tensor(dir, &e.confidence_file, 4, n, t, c)?).collect();
        let mask = read_tensor(dir, &e.mask_file, 1, n, t, c)?;
        if let Some(b) = mask.iter().find(|&&b| b > 1) {
            return Err(bad(format!("mask byte {b} is not 0/1")));
        }
        let fp = FramePrediction {
            t,
            c,
            intrinsics,
            pose,
            pointmap,
            confidence,
            valid: mask.iter().map(|&b| b == 1).collect(),
        };
        fp.validate()?;
        frames.push(fp);
    }
    Ok(SubmapPrediction::new(manifest.submap_index, manifest.overlap, frames))
}

/// Number of `submap_NNNN` bundles in a stream directory.
pub fn count_submaps(root: &Path) -> Result<usize> {
    let mut k = 0;
    while submap_dir(root, k).join(MANIFEST).is_file() {
        k += 1;
    }
    if k == 0 {
        return Err(Error::InvalidConfig(format!(
            "no submap bundles found under {}",
            root.display()
        )));
    }
    Ok(k)
}
