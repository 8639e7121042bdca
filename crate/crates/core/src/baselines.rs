//! Point-based competitor aligners: a least-squares similarity between
//! overlap point clouds and a 15-DOF projective (SL(4)) warp estimated by a
//! normalized direct linear transform.

use nalgebra::{DMatrix, Matrix4, Vector4};

use crate::error::{Error, Result};
use crate::geometry::{centroid, nearest_rotation, umeyama_align, Mat3, Pose, Sim3, Vec3};
use crate::prediction::SubmapPrediction;

/// Pixel-bridged correspondences between two submaps: for every shared
/// overlap image and every pixel valid in both, `src` is the point in
/// `curr` and `dst` the point in `prev`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Correspondences {
    pub src: Vec<Vec3>,
    pub dst: Vec<Vec3>,
}

impl Correspondences {
    pub fn len(&self) -> usize {
        self.src.len()
    }

    pub fn is_empty(&self) -> bool {
        self.src.is_empty()
    }
}

pub fn overlap_correspondences(prev: &SubmapPrediction, curr: &SubmapPrediction) -> Correspondences {
    let overlap = curr.overlap_timestamps();
    let mut out = Correspondences::default();
    for g in curr.frames.iter().filter(|f| overlap.contains(&f.t)) {
        let Some(f) = prev.frame(g.t, g.c) else { continue };
        if f.intrinsics.width != g.intrinsics.width || f.intrinsics.height != g.intrinsics.height {
            continue;
        }
        for (u, v, p) in g.valid_points() {
            if f.is_valid(u, v) {
                out.src.push(p);
                out.dst.push(f.point(u, v));
            }
        }
    }
    out
}

/// Similarity (or rigid, for metric-scale inputs) alignment of `src` onto
/// `dst`.
pub fn sim3_point_align(src: &[Vec3], dst: &[Vec3], with_scale: bool) -> Result<Sim3> {
    umeyama_align(src, dst, with_scale)
}

/// A 4×4 homography of 3-space normalized to unit determinant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sl4Transform {
    pub h: Matrix4<f64>,
}

impl Default for Sl4Transform {
    fn default() -> Self {
        Self::identity()
    }
}

/// Fourth coordinates smaller than this mark a point as sent to infinity.
pub const HOMOGENEOUS_EPS: f64 = 1e-9;

impl Sl4Transform {
    pub fn identity() -> Self {
        Self { h: Matrix4::identity() }
    }

    /// Rescales to determinant +1, choosing the overall sign so that the
    /// homogeneous coordinate of `reference` stays positive. Fails on
    /// singular or orientation-reversing matrices, which have no real
    /// unit-determinant representative.
    pub fn normalized(h: Matrix4<f64>, reference: &Vec3) -> Result<Self> {
        if !h.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("projective transform"));
        }
        let mut h = h;
        let w = h.row(3).dot(&reference.push(1.0).transpose());
        if w < 0.0 {
            h = -h;
        }
        let det = h.determinant();
        if !(det > 0.0) {
            return Err(Error::DegenerateConfiguration(format!(
                "projective estimate has determinant {det:e}"
            )));
        }
        Ok(Self { h: h / det.powf(0.25) })
    }

    pub fn apply(&self, p: &Vec3) -> Option<Vec3> {
        let x = self.h * p.push(1.0);
        if x.w.abs() < HOMOGENEOUS_EPS {
            None
        } else {
            Some(x.xyz() / x.w)
        }
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &Sl4Transform) -> Sl4Transform {
        let h = self.h * other.h;
        let det = h.determinant();
        Sl4Transform { h: h / det.abs().powf(0.25) }
    }

    /// Differential of the projective map at `p`.
    pub fn jacobian(&self, p: &Vec3) -> Option<Mat3> {
        let x = self.h * p.push(1.0);
        if x.w.abs() < HOMOGENEOUS_EPS {
            return None;
        }
        let y = x.xyz() / x.w;
        let a = self.h.fixed_view::<3, 3>(0, 0).into_owned();
        let hrow = self.h.fixed_view::<1, 3>(3, 0).transpose();
        Some((a - y * hrow.transpose()) / x.w)
    }

    /// Warps a camera pose: the center moves as a point and the orientation
    /// is the rotation nearest to the warped camera axes. SL(4) does not act
    /// on rigid poses, so this is an approximation.
    pub fn warp_pose(&self, pose: &Pose) -> Option<Pose> {
        let center = self.apply(&pose.translation)?;
        let j = self.jacobian(&pose.translation)?;
        Some(Pose::new(nearest_rotation(&(j * pose.rotation)), center))
    }
}

/// Applies a projective map; points landing at infinity are `None`.
pub fn apply_sl4(t: &Sl4Transform, points: &[Vec3]) -> Vec<Option<Vec3>> {
    points.iter().map(|p| t.apply(p)).collect()
}

/// Similarity normalization: centroid to the origin, mean distance √3.
fn normalizer(points: &[Vec3]) -> Result<Matrix4<f64>> {
    let c = centroid(points);
    let mean_dist = points.iter().map(|p| (p - c).norm()).sum::<f64>() / points.len() as f64;
    if !(mean_dist > 0.0) {
        return Err(Error::DegenerateConfiguration("all points coincide".into()));
    }
    let s = 3f64.sqrt() / mean_dist;
    let mut t = Matrix4::identity() * s;
    t[(3, 3)] = 1.0;
    t.fixed_view_mut::<3, 1>(0, 3).copy_from(&(-s * c));
    Ok(t)
}

/// Ratio of the thinnest to the widest principal spread of a point set.
fn flatness(points: &[Vec3]) -> f64 {
    let c = centroid(points);
    let cov = points.iter().fold(Mat3::zeros(), |acc, p| {
        let d = p - c;
        acc + d * d.transpose()
    });
    let ev = cov.symmetric_eigenvalues();
    (ev.min().max(0.0) / ev.max()).sqrt()
}

/// Point sets flatter than this are treated as coplanar: a plane does not
/// determine a homography of 3-space, and single-precision coordinates
/// would otherwise hide that behind rounding noise.
pub const SL4_PLANAR_RATIO: f64 = 1e-4;

/// Relative size of the second-smallest singular value below which the
/// null space is considered more than one-dimensional.
pub const SL4_RANK_GAP: f64 = 1e-10;

/// Direct linear estimate of `H` with `dst ≃ H · [src; 1]`, from the
/// linearized constraints `h_r·X − y_r (h_4·X) = 0` for the three output
/// rows. Both sides are similarity-normalized first.
pub fn sl4_point_align(src: &[Vec3], dst: &[Vec3]) -> Result<Sl4Transform> {
    if src.len() != dst.len() {
        return Err(Error::LengthMismatch {
            what: "point correspondences",
            left: src.len(),
            right: dst.len(),
        });
    }
    if src.len() < 6 {
        return Err(Error::InsufficientPoints {
            needed: 6,
            got: src.len(),
        });
    }
    if src.iter().chain(dst).any(|p| !p.iter().all(|v| v.is_finite())) {
        return Err(Error::NonFinite("point correspondences"));
    }
    let ts = normalizer(src)?;
    let td = normalizer(dst)?;
    for (side, pts) in [("source", src), ("target", dst)] {
        let f = flatness(pts);
        if f < SL4_PLANAR_RATIO {
            return Err(Error::DegenerateConfiguration(format!(
                "{side} points are coplanar (spread ratio {f:.3e})"
            )));
        }
    }

    let n = src.len();
    let mut a = DMatrix::<f64>::zeros(3 * n, 16);
    for (i, (s, d)) in src.iter().zip(dst).enumerate() {
        let x: Vector4<f64> = ts * s.push(1.0);
        let y: Vector4<f64> = td * d.push(1.0);
        for r in 0..3 {
            let row = 3 * i + r;
            for j in 0..4 {
                a[(row, 4 * r + j)] = x[j];
                a[(row, 12 + j)] = -y[r] * x[j];
            }
        }
    }
    // Singular values and right vectors of A via the 16×16 triangular factor.
    let r = a.qr().r();
    let svd = r.svd(false, true);
    let sv = &svd.singular_values;
    if sv[14] < SL4_RANK_GAP * sv[0] {
        return Err(Error::DegenerateConfiguration(format!(
            "DLT null space is not one-dimensional (σ15/σ1 = {:.3e})",
            sv[14] / sv[0]
        )));
    }
    let vt = svd.v_t.expect("requested");
    let h_norm = Matrix4::from_row_slice(vt.row(15).transpose().as_slice());
    let td_inv = td
        .try_inverse()
        .ok_or_else(|| Error::DegenerateConfiguration("singular normalizer".into()))?;
    Sl4Transform::normalized(td_inv * h_norm * ts, &centroid(src))
}

/// RMS of `‖H(srcᵢ) − dstᵢ‖` over points that stay finite, with the count
/// of points sent to infinity.
pub fn transfer_residual(t: &Sl4Transform, src: &[Vec3], dst: &[Vec3]) -> (f64, usize) {
    let mut sum = 0.0;
    let mut n = 0usize;
    let mut invalid = 0usize;
    for (s, d) in src.iter().zip(dst) {
        match t.apply(s) {
            Some(p) => {
                sum += (p - d).norm_squared();
                n += 1;
            }
            None => invalid += 1,
        }
    }
    ((sum / n.max(1) as f64).sqrt(), invalid)
}
