//! Per-submap prediction bundles, stream segmentation and confidence
//! filtering.

use std::collections::BTreeSet;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Intrinsics, Pose, Vec3};

/// Prediction for a single image `(t, c)`: pixel-aligned points expressed in
/// the submap frame.
#[derive(Clone, Debug, PartialEq)]
pub struct FramePrediction {
    pub t: usize,
    pub c: usize,
    pub intrinsics: Intrinsics,
    /// Camera-to-submap.
    pub pose: Pose,
    /// Row-major `height × width`.
    pub pointmap: Vec<Vec3>,
    pub confidence: Vec<f32>,
    pub valid: Vec<bool>,
}

impl FramePrediction {
    pub fn width(&self) -> usize {
        self.intrinsics.width
    }

    pub fn height(&self) -> usize {
        self.intrinsics.height
    }

    #[inline]
    pub fn idx(&self, u: usize, v: usize) -> usize {
        v * self.intrinsics.width + u
    }

    pub fn point(&self, u: usize, v: usize) -> Vec3 {
        self.pointmap[self.idx(u, v)]
    }

    pub fn is_valid(&self, u: usize, v: usize) -> bool {
        self.valid[self.idx(u, v)]
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&m| m).count()
    }

    /// Iterates `(u, v, point)` over valid pixels in row-major order.
    pub fn valid_points(&self) -> impl Iterator<Item = (usize, usize, Vec3)> + '_ {
        let w = self.intrinsics.width;
        self.pointmap
            .iter()
            .zip(&self.valid)
            .enumerate()
            .filter(|(_, (_, &m))| m)
            .map(move |(i, (p, _))| (i % w, i / w, *p))
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.intrinsics.pixel_count();
        let bad = |reason: String| Error::InvalidFrame {
            t: self.t,
            c: self.c,
            reason,
        };
        self.intrinsics.validate().map_err(|e| bad(e.to_string()))?;
        if self.pointmap.len() != n || self.confidence.len() != n || self.valid.len() != n {
            return Err(bad(format!(
                "grid sizes {}/{}/{} do not match {}x{}",
                self.pointmap.len(),
                self.confidence.len(),
                self.valid.len(),
                self.intrinsics.width,
                self.intrinsics.height
            )));
        }
        if !self.pose.is_finite() {
            return Err(bad("non-finite pose".into()));
        }
        if self
            .pointmap
            .iter()
            .zip(&self.valid)
            .any(|(p, &m)| m && !p.iter().all(|v| v.is_finite()))
        {
            return Err(bad("valid pointmap entry is not finite".into()));
        }
        Ok(())
    }

    pub fn pixel(u: usize, v: usize) -> Vector2<f64> {
        Vector2::new(u as f64, v as f64)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SubmapPrediction {
    pub index: usize,
    /// Ordered by `(t, c)`.
    pub frames: Vec<FramePrediction>,
    pub overlap: usize,
}

impl SubmapPrediction {
    pub fn new(index: usize, overlap: usize, mut frames: Vec<FramePrediction>) -> Self {
        frames.sort_by_key(|f| (f.t, f.c));
        Self {
            index,
            frames,
            overlap,
        }
    }

    pub fn frame(&self, t: usize, c: usize) -> Option<&FramePrediction> {
        self.frames
            .binary_search_by_key(&(t, c), |f| (f.t, f.c))
            .ok()
            .map(|i| &self.frames[i])
    }

    pub fn timestamps(&self) -> Vec<usize> {
        let set: BTreeSet<usize> = self.frames.iter().map(|f| f.t).collect();
        set.into_iter().collect()
    }

    pub fn cameras(&self) -> Vec<usize> {
        let set: BTreeSet<usize> = self.frames.iter().map(|f| f.c).collect();
        set.into_iter().collect()
    }

    /// The first `overlap` timestamps, shared with the previous submap.
    pub fn overlap_timestamps(&self) -> Vec<usize> {
        if self.index == 0 {
            return Vec::new();
        }
        let mut ts = self.timestamps();
        ts.truncate(self.overlap);
        ts
    }

    /// Reference-camera poses for the given timestamps, in order.
    pub fn reference_poses(&self, timestamps: &[usize]) -> Result<Vec<Pose>> {
        timestamps
            .iter()
            .map(|&t| {
                self.frame(t, 0).map(|f| f.pose).ok_or_else(|| Error::InvalidFrame {
                    t,
                    c: 0,
                    reason: format!("reference camera missing from submap {}", self.index),
                })
            })
            .collect()
    }

    /// All valid points in the submap frame.
    pub fn valid_points(&self) -> Vec<Vec3> {
        self.frames.iter().flat_map(|f| f.valid_points().map(|(_, _, p)| p)).collect()
    }

    /// Maximum distance of valid points to their centroid.
    pub fn radius(&self) -> f64 {
        point_cloud_radius(&self.valid_points())
    }

    pub fn validate(&self) -> Result<()> {
        for f in &self.frames {
            f.validate()?;
        }
        let ts = self.timestamps();
        if ts.windows(2).any(|w| w[1] != w[0] + 1) {
            return Err(Error::InvalidConfig(format!(
                "submap {} has non-contiguous timestamps {ts:?}",
                self.index
            )));
        }
        for &t in &ts {
            if self.frame(t, 0).is_none() {
                return Err(Error::InvalidFrame {
                    t,
                    c: 0,
                    reason: format!("reference camera missing from submap {}", self.index),
                });
            }
        }
        Ok(())
    }
}

pub fn point_cloud_radius(points: &[Vec3]) -> f64 {
    if points.is_empty() {
        return 0.0;
    }
    let c = crate::geometry::centroid(points);
    points.iter().map(|p| (p - c).norm()).fold(0.0, f64::max)
}

/// Stream layout: `total_frames` timestamps of `cameras` images each, cut
/// into submaps of `new_frames` fresh timestamps plus `overlap` shared ones.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamConfig {
    pub total_frames: usize,
    pub cameras: usize,
    pub new_frames: usize,
    pub overlap: usize,
}

impl StreamConfig {
    pub fn new(total_frames: usize, cameras: usize, new_frames: usize, overlap: usize) -> Result<Self> {
        let cfg = Self {
            total_frames,
            cameras,
            new_frames,
            overlap,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.overlap < 1 || self.overlap > self.new_frames || self.new_frames > self.total_frames || self.cameras < 1 {
            return Err(Error::InvalidConfig(format!(
                "stream needs 1 <= O <= L <= T and C >= 1, got T={} C={} L={} O={}",
                self.total_frames, self.cameras, self.new_frames, self.overlap
            )));
        }
        Ok(())
    }

    pub fn submap_count(&self) -> usize {
        self.total_frames.div_ceil(self.new_frames)
    }
}

/// Timestamp sets per submap. Submap `k > 0` spans `[kL − O, (k+1)L − 1]`,
/// truncated at `T − 1`; a short tail still forms its own submap.
pub fn segment_stream(cfg: &StreamConfig) -> Result<Vec<Vec<usize>>> {
    cfg.validate()?;
    let (t_total, l, o) = (cfg.total_frames, cfg.new_frames, cfg.overlap);
    Ok((0..cfg.submap_count())
        .map(|k| {
            let start = if k == 0 { 0 } else { k * l - o };
            let end = ((k + 1) * l).min(t_total);
            (start..end).collect()
        })
        .collect())
}

/// Value at `percentile` of `values` with linear interpolation between
/// closest ranks (the numpy default).
pub fn percentile(values: &mut [f32], pct: f64) -> f32 {
    values.sort_by(f32::total_cmp);
    let n = values.len();
    if n == 1 {
        return values[0];
    }
    let rank = pct.clamp(0.0, 100.0) / 100.0 * (n - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    (values[lo] as f64 + (values[hi] as f64 - values[lo] as f64) * frac) as f32
}

/// Keeps only pixels whose confidence is strictly above the per-image
/// percentile of currently valid confidences. Percentile 0 keeps the mask.
pub fn confidence_filter(fp: &FramePrediction, pct: f64) -> Vec<bool> {
    if pct <= 0.0 {
        return fp.valid.clone();
    }
    let mut vals: Vec<f32> = fp
        .confidence
        .iter()
        .zip(&fp.valid)
        .filter(|(_, &m)| m)
        .map(|(c, _)| *c)
        .collect();
    if vals.is_empty() {
        return fp.valid.clone();
    }
    let threshold = percentile(&mut vals, pct);
    fp.confidence
        .iter()
        .zip(&fp.valid)
        .map(|(&c, &m)| m && c > threshold)
        .collect()
}

/// Applies [`confidence_filter`] to every frame of a submap in place.
pub fn filter_submap(sp: &mut SubmapPrediction, pct: f64) {
    for f in &mut sp.frames {
        f.valid = confidence_filter(f, pct);
    }
}
