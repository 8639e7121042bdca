//! Point-agnostic registration of consecutive submaps from the poses of
//! their shared reference-camera frames.

use crate::error::{Error, Result};
use crate::geometry::{chordal_rotation_average, Mat3, Pose, Vec3, REORTHONORMALIZE_EVERY};
use crate::prediction::{FramePrediction, SubmapPrediction};

/// Maps a (scale-corrected) submap frame into the global frame, which is the
/// frame of the first submap.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SubmapTransform {
    pub index: usize,
    pub scale_correction: f64,
    pub to_global: Pose,
}

impl SubmapTransform {
    pub fn identity(index: usize) -> Self {
        Self {
            index,
            scale_correction: 1.0,
            to_global: Pose::identity(),
        }
    }

    pub fn apply_point(&self, p: &Vec3) -> Vec3 {
        self.to_global.transform_point(&(self.scale_correction * p))
    }

    pub fn apply_pose(&self, p: &Pose) -> Pose {
        self.to_global
            .compose(&Pose::new(p.rotation, self.scale_correction * p.translation))
    }
}

/// Median over all overlap-camera pairs `i < j` of the baseline ratio
/// `‖c_prev,i − c_prev,j‖ / ‖c_curr,i − c_curr,j‖`. Multiplying submap-k
/// geometry by the result matches its overlap baselines to submap k−1.
pub fn estimate_inter_submap_scale(prev: &[Pose], curr: &[Pose]) -> Result<f64> {
    if prev.len() != curr.len() {
        return Err(Error::LengthMismatch {
            what: "overlap poses",
            left: prev.len(),
            right: curr.len(),
        });
    }
    if prev.len() < 2 {
        return Err(Error::InsufficientFrames {
            needed: 2,
            got: prev.len(),
        });
    }
    let mut ratios = Vec::new();
    for i in 0..prev.len() {
        for j in i + 1..prev.len() {
            let bc = (curr[i].center() - curr[j].center()).norm();
            if bc < 1e-12 {
                return Err(Error::DegenerateBaseline(bc));
            }
            ratios.push((prev[i].center() - prev[j].center()).norm() / bc);
        }
    }
    Ok(median(&mut ratios))
}

pub(crate) fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Transform taking submap k's frame to submap k−1's: the chordal mean of
/// the per-frame `T_prev,i ∘ T_curr,i⁻¹` rotations with the arithmetic mean
/// of their translations.
pub fn pairwise_registration(prev: &[Pose], curr: &[Pose]) -> Result<Pose> {
    if prev.len() != curr.len() {
        return Err(Error::LengthMismatch {
            what: "overlap poses",
            left: prev.len(),
            right: curr.len(),
        });
    }
    if prev.is_empty() {
        return Err(Error::NoOverlap);
    }
    let per_frame: Vec<Pose> = prev.iter().zip(curr).map(|(p, c)| p.compose(&c.inverse())).collect();
    if per_frame.len() == 1 {
        return Ok(per_frame[0]);
    }
    let rotations: Vec<Mat3> = per_frame.iter().map(|h| h.rotation).collect();
    let rotation = chordal_rotation_average(&rotations)?;
    let translation = per_frame.iter().fold(Vec3::zeros(), |a, h| a + h.translation) / per_frame.len() as f64;
    Ok(Pose::new(rotation, translation))
}

/// Left fold of the pairwise transforms into per-submap global transforms.
///
/// `pairs[k-1]` maps submap k (already multiplied by `scales[k-1]`) into
/// submap k−1's raw frame. Scale corrections accumulate multiplicatively
/// from submap 0, and each pairwise translation is expressed in the
/// corrected units of its target submap.
pub fn chain_to_global(pairs: &[Pose], scales: &[f64]) -> Result<Vec<SubmapTransform>> {
    if pairs.len() != scales.len() {
        return Err(Error::LengthMismatch {
            what: "pairwise transforms vs scales",
            left: pairs.len(),
            right: scales.len(),
        });
    }
    let mut chain = Chain::new();
    for (h, &s) in pairs.iter().zip(scales) {
        chain.push(h, s)?;
    }
    Ok(chain.into_transforms())
}

/// Incremental form of [`chain_to_global`] used by the online pipeline.
#[derive(Clone, Debug)]
pub struct Chain {
    transforms: Vec<SubmapTransform>,
}

impl Default for Chain {
    fn default() -> Self {
        Self::new()
    }
}

impl Chain {
    pub fn new() -> Self {
        Self {
            transforms: vec![SubmapTransform::identity(0)],
        }
    }

    pub fn push(&mut self, pair: &Pose, scale: f64) -> Result<&SubmapTransform> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidConfig(format!("scale ratio must be positive, got {scale}")));
        }
        let last = *self.transforms.last().expect("chain starts with submap 0");
        let step = Pose::new(pair.rotation, last.scale_correction * pair.translation);
        let mut to_global = last.to_global.compose(&step);
        let index = last.index + 1;
        if index.is_multiple_of(REORTHONORMALIZE_EVERY) {
            to_global = to_global.orthonormalized();
        }
        self.transforms.push(SubmapTransform {
            index,
            scale_correction: last.scale_correction * scale,
            to_global,
        });
        Ok(self.transforms.last().unwrap())
    }

    pub fn last(&self) -> &SubmapTransform {
        self.transforms.last().unwrap()
    }

    pub fn transforms(&self) -> &[SubmapTransform] {
        &self.transforms
    }

    pub fn into_transforms(self) -> Vec<SubmapTransform> {
        self.transforms
    }
}

/// Re-expresses a submap in the global frame. Masks and confidences are
/// untouched.
pub fn apply_to_submap(sp: &SubmapPrediction, st: &SubmapTransform) -> SubmapPrediction {
    let frames = sp
        .frames
        .iter()
        .map(|f| FramePrediction {
            pose: st.apply_pose(&f.pose),
            pointmap: f.pointmap.iter().map(|p| st.apply_point(p)).collect(),
            ..f.clone()
        })
        .collect();
    SubmapPrediction {
        index: sp.index,
        frames,
        overlap: sp.overlap,
    }
}
