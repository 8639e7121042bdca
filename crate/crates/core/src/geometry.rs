//! Rigid and similarity transforms, the pinhole camera model, chordal
//! rotation averaging and Umeyama alignment.
//!
//! Poses are stored camera-to-frame: `x_frame = R * x_cam + t`.

use nalgebra::{Matrix3, Matrix4, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Number of compositions after which accumulated rotations are projected
/// back onto SO(3).
pub const REORTHONORMALIZE_EVERY: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose {
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn new(rotation: Mat3, translation: Vec3) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        Self::new(Mat3::identity(), Vec3::zeros())
    }

    pub fn from_translation(translation: Vec3) -> Self {
        Self::new(Mat3::identity(), translation)
    }

    pub fn from_rotation(rotation: Mat3) -> Self {
        Self::new(rotation, Vec3::zeros())
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self::new(rt, -(rt * self.translation))
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &Pose) -> Self {
        Self::new(
            self.rotation * other.rotation,
            self.rotation * other.translation + self.translation,
        )
    }

    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    /// Camera center in the target frame.
    pub fn center(&self) -> Vec3 {
        self.translation
    }

    pub fn orthonormalized(&self) -> Self {
        Self::new(nearest_rotation(&self.rotation), self.translation)
    }

    pub fn is_finite(&self) -> bool {
        self.rotation.iter().chain(self.translation.iter()).all(|v| v.is_finite())
    }

    /// Max deviation of `RᵀR` from identity and of `det R` from 1.
    pub fn rotation_error(&self) -> f64 {
        let ortho = (self.rotation.transpose() * self.rotation - Mat3::identity()).abs().max();
        ortho.max((self.rotation.determinant() - 1.0).abs())
    }

    pub fn to_matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// Row-major 4×4, as written in bundle manifests.
    pub fn to_row_major(&self) -> [f64; 16] {
        let m = self.to_matrix();
        let mut out = [0.0; 16];
        for r in 0..4 {
            for c in 0..4 {
                out[r * 4 + c] = m[(r, c)];
            }
        }
        out
    }

    /// Reads a row-major 4×4 rigid transform. The rotation block is taken
    /// as-is; callers decide how strictly to validate it.
    pub fn from_row_major(v: &[f64; 16]) -> Result<Self> {
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("pose matrix"));
        }
        let rotation = Mat3::new(v[0], v[1], v[2], v[4], v[5], v[6], v[8], v[9], v[10]);
        let translation = Vec3::new(v[3], v[7], v[11]);
        Ok(Self::new(rotation, translation))
    }

    /// Rotation angle of `R` in radians.
    pub fn rotation_angle(&self) -> f64 {
        rotation_angle(&self.rotation)
    }
}

pub fn rotation_angle(r: &Mat3) -> f64 {
    ((r.trace() - 1.0) * 0.5).clamp(-1.0, 1.0).acos()
}

/// Composes a sequence of poses left to right (`p0 ∘ p1 ∘ …`), projecting the
/// rotation back onto SO(3) every [`REORTHONORMALIZE_EVERY`] steps.
pub fn compose_chain<'a>(poses: impl IntoIterator<Item = &'a Pose>) -> Pose {
    let mut acc = Pose::identity();
    for (i, p) in poses.into_iter().enumerate() {
        acc = acc.compose(p);
        if (i + 1) % REORTHONORMALIZE_EVERY == 0 {
            acc = acc.orthonormalized();
        }
    }
    acc
}

pub fn rot_x(angle: f64) -> Mat3 {
    let (s, c) = angle.sin_cos();
    Mat3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

pub fn rot_y(angle: f64) -> Mat3 {
    let (s, c) = angle.sin_cos();
    Mat3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

pub fn rot_z(angle: f64) -> Mat3 {
    let (s, c) = angle.sin_cos();
    Mat3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Rotation about a unit axis (Rodrigues).
pub fn rot_axis_angle(axis: &Vec3, angle: f64) -> Mat3 {
    let k = axis.normalize();
    let kx = k.cross_matrix();
    Mat3::identity() + kx * angle.sin() + kx * kx * (1.0 - angle.cos())
}

/// Projects a 3×3 matrix onto SO(3) in the Frobenius sense.
pub fn nearest_rotation(m: &Mat3) -> Mat3 {
    let svd = m.svd(true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut d = Mat3::identity();
    if (u * vt).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    u * d * vt
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sim3 {
    pub scale: f64,
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl Default for Sim3 {
    fn default() -> Self {
        Self::identity()
    }
}

impl Sim3 {
    pub fn new(scale: f64, rotation: Mat3, translation: Vec3) -> Self {
        Self {
            scale,
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        Self::new(1.0, Mat3::identity(), Vec3::zeros())
    }

    pub fn from_pose(p: &Pose) -> Self {
        Self::new(1.0, p.rotation, p.translation)
    }

    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.scale * (self.rotation * p) + self.translation
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &Sim3) -> Self {
        Self::new(
            self.scale * other.scale,
            self.rotation * other.rotation,
            self.scale * (self.rotation * other.translation) + self.translation,
        )
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        let inv_s = 1.0 / self.scale;
        Self::new(inv_s, rt, -(inv_s * (rt * self.translation)))
    }

    /// Maps a camera pose through the similarity: the camera center is
    /// transformed as a point and the orientation is rotated.
    pub fn transform_pose(&self, p: &Pose) -> Pose {
        Pose::new(self.rotation * p.rotation, self.transform_point(&p.translation))
    }

    pub fn rigid_part(&self) -> Pose {
        Pose::new(self.rotation, self.translation)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        let k = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    /// Square pixels, principal point at the image center, horizontal
    /// field of view in radians.
    pub fn from_fov(width: usize, height: usize, hfov: f64) -> Result<Self> {
        let f = width as f64 * 0.5 / (hfov * 0.5).tan();
        Self::new(f, f, width as f64 * 0.5, height as f64 * 0.5, width, height)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.fx.is_finite()
            && self.fy.is_finite()
            && self.fx > 0.0
            && self.fy > 0.0
            && self.cx > 0.0
            && self.cx < self.width as f64
            && self.cy > 0.0
            && self.cy < self.height as f64;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidIntrinsics(format!("{self:?}")))
        }
    }

    pub fn matrix(&self) -> Mat3 {
        Mat3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    /// Camera-frame ray with unit z through a pixel.
    pub fn ray(&self, pixel: &Vector2<f64>) -> Vec3 {
        Vec3::new((pixel.x - self.cx) / self.fx, (pixel.y - self.cy) / self.fy, 1.0)
    }

    /// Whether a projected pixel rounds to a location inside the image.
    pub fn round_in_bounds(&self, pixel: &Vector2<f64>) -> Option<(usize, usize)> {
        let u = pixel.x.round();
        let v = pixel.y.round();
        if u >= 0.0 && v >= 0.0 && u < self.width as f64 && v < self.height as f64 {
            Some((u as usize, v as usize))
        } else {
            None
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Projection {
    pub pixel: Vector2<f64>,
    pub depth: f64,
}

impl Projection {
    /// Depth at or below 1e-9 means the point is behind (or on) the camera
    /// plane and the pixel is meaningless.
    pub fn in_front(&self) -> bool {
        self.depth > 1e-9
    }
}

/// Projects a frame-space point into a camera with camera-to-frame `pose`.
/// No bounds clipping is applied.
pub fn project(point: &Vec3, pose: &Pose, intr: &Intrinsics) -> Projection {
    let pc = pose.rotation.transpose() * (point - pose.translation);
    let depth = pc.z;
    if depth <= 1e-9 {
        return Projection {
            pixel: Vector2::new(f64::NAN, f64::NAN),
            depth,
        };
    }
    Projection {
        pixel: Vector2::new(
            intr.fx * pc.x / depth + intr.cx,
            intr.fy * pc.y / depth + intr.cy,
        ),
        depth,
    }
}

pub fn unproject(pixel: &Vector2<f64>, depth: f64, pose: &Pose, intr: &Intrinsics) -> Result<Vec3> {
    if !(depth > 0.0) {
        return Err(Error::InvalidDepth(depth));
    }
    Ok(pose.transform_point(&(intr.ray(pixel) * depth)))
}

/// Sum of squared Frobenius distances from `r` to every rotation in the set.
pub fn chordal_cost(r: &Mat3, rotations: &[Mat3]) -> f64 {
    rotations.iter().map(|ri| (r - ri).norm_squared()).sum()
}

/// Chordal L2 mean: the rotation minimizing `Σ‖R − Rᵢ‖²_F`, obtained by
/// projecting the arithmetic mean matrix onto SO(3).
pub fn chordal_rotation_average(rotations: &[Mat3]) -> Result<Mat3> {
    if rotations.is_empty() {
        return Err(Error::EmptyInput("rotation set"));
    }
    let mean = rotations.iter().fold(Mat3::zeros(), |acc, r| acc + r) / rotations.len() as f64;
    let svd = mean.svd(true, true);
    let sv = svd.singular_values;
    // Rank ≤ 1 leaves a continuum of minimizers (e.g. two opposed rotations).
    if sv[1] < 1e-9 {
        return Err(Error::DegenerateAverage([sv[0], sv[1], sv[2]]));
    }
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut d = Mat3::identity();
    if (u * vt).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    Ok(u * d * vt)
}

fn check_points(src: &[Vec3], dst: &[Vec3]) -> Result<()> {
    if src.len() != dst.len() {
        return Err(Error::LengthMismatch {
            what: "point correspondences",
            left: src.len(),
            right: dst.len(),
        });
    }
    if src.len() < 3 {
        return Err(Error::InsufficientPoints {
            needed: 3,
            got: src.len(),
        });
    }
    if src.iter().chain(dst).any(|p| !p.iter().all(|v| v.is_finite())) {
        return Err(Error::NonFinite("point correspondences"));
    }
    Ok(())
}

pub fn centroid(points: &[Vec3]) -> Vec3 {
    points.iter().fold(Vec3::zeros(), |acc, p| acc + p) / points.len() as f64
}

/// Least-squares similarity (or rigid, with `with_scale == false`) mapping
/// `src` onto `dst`, minimizing `Σ‖dstᵢ − (s R srcᵢ + t)‖²`.
pub fn umeyama_align(src: &[Vec3], dst: &[Vec3], with_scale: bool) -> Result<Sim3> {
    check_points(src, dst)?;
    let n = src.len() as f64;
    let mu_s = centroid(src);
    let mu_d = centroid(dst);

    let mut cov = Mat3::zeros();
    let mut src_cov = Mat3::zeros();
    for (s, d) in src.iter().zip(dst) {
        let sc = s - mu_s;
        cov += (d - mu_d) * sc.transpose();
        src_cov += sc * sc.transpose();
    }
    cov /= n;
    src_cov /= n;
    let var_s = src_cov.trace();

    let eig = src_cov.symmetric_eigen();
    let mut ev: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    if ev[0] <= 0.0 || ev[1] <= 1e-12 * ev[0] {
        return Err(Error::DegenerateConfiguration(format!(
            "source points are collinear or coincident (covariance eigenvalues {ev:?})"
        )));
    }

    let svd = cov.svd(true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut d = Mat3::identity();
    if u.determinant() * vt.determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    let rotation = u * d * vt;
    let scale = if with_scale {
        let sv = svd.singular_values;
        (sv[0] * d[(0, 0)] + sv[1] * d[(1, 1)] + sv[2] * d[(2, 2)]) / var_s
    } else {
        1.0
    };
    let translation = mu_d - scale * (rotation * mu_s);
    Ok(Sim3::new(scale, rotation, translation))
}

/// Root-mean-square of `‖dstᵢ − T(srcᵢ)‖`.
pub fn alignment_rmse(t: &Sim3, src: &[Vec3], dst: &[Vec3]) -> f64 {
    let sum: f64 = src
        .iter()
        .zip(dst)
        .map(|(s, d)| (d - t.transform_point(s)).norm_squared())
        .sum();
    (sum / src.len().max(1) as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_rotation(rng: &mut impl Rng) -> Mat3 {
        let axis = Vec3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let axis = if axis.norm() < 1e-3 { Vec3::z() } else { axis };
        rot_axis_angle(&axis, rng.random_range(-3.1..3.1))
    }

    fn intr() -> Intrinsics {
        Intrinsics::new(100.0, 100.0, 50.0, 50.0, 100, 100).unwrap()
    }

    #[test]
    fn principal_point_projection() {
        let p = project(&Vec3::new(0.0, 0.0, 4.0), &Pose::identity(), &intr());
        assert_eq!(p.pixel, Vector2::new(50.0, 50.0));
        assert_eq!(p.depth, 4.0);
        let x = unproject(&Vector2::new(50.0, 50.0), 3.0, &Pose::identity(), &intr()).unwrap();
        assert_eq!(x, Vec3::new(0.0, 0.0, 3.0));
    }

    #[test]
    fn hand_evaluated_pinhole() {
        let p = project(&Vec3::new(1.0, 0.0, 2.0), &Pose::identity(), &intr());
        assert_eq!(p.pixel, Vector2::new(100.0, 50.0));
        assert_eq!(p.depth, 2.0);
        let x = unproject(&Vector2::new(100.0, 50.0), 2.0, &Pose::identity(), &intr()).unwrap();
        assert_eq!(x, Vec3::new(1.0, 0.0, 2.0));
    }

    #[test]
    fn behind_camera_is_flagged() {
        let p = project(&Vec3::new(0.0, 0.0, -1.0), &Pose::identity(), &intr());
        assert!(!p.in_front());
        assert!(matches!(
            unproject(&Vector2::new(1.0, 1.0), 0.0, &Pose::identity(), &intr()),
            Err(Error::InvalidDepth(_))
        ));
    }

    #[test]
    fn invalid_intrinsics_rejected() {
        assert!(Intrinsics::new(0.0, 1.0, 5.0, 5.0, 10, 10).is_err());
        assert!(Intrinsics::new(1.0, 1.0, 10.0, 5.0, 10, 10).is_err());
    }

    #[test]
    fn roundtrip_random_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let k = intr();
        for _ in 0..100 {
            let pose = Pose::new(
                random_rotation(&mut rng),
                Vec3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), 0.0),
            );
            let px = Vector2::new(rng.random_range(0.0..100.0), rng.random_range(0.0..100.0));
            let depth = rng.random_range(0.1..1000.0);
            let x = unproject(&px, depth, &pose, &k).unwrap();
            let back = project(&x, &pose, &k);
            assert!((back.pixel - px).norm() < 1e-7 * px.norm());
            assert!((back.depth - depth).abs() < 1e-7 * depth);
        }
    }

    #[test]
    fn pose_inverse_and_matrix_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let p = Pose::new(random_rotation(&mut rng), Vec3::new(1.0, -2.0, 0.5));
            let id = p.compose(&p.inverse());
            assert!((id.rotation - Mat3::identity()).abs().max() < 1e-9);
            assert!(id.translation.norm() < 1e-9);
            assert!(p.rotation_error() < 1e-9);
            let q = Pose::from_row_major(&p.to_row_major()).unwrap();
            assert_eq!(p, q);
        }
    }

    #[test]
    fn long_chain_stays_orthonormal() {
        let step = Pose::new(rot_axis_angle(&Vec3::new(0.3, 1.0, 0.2), 0.37), Vec3::new(0.1, 0.0, 0.0));
        let chain = vec![step; 1000];
        let acc = compose_chain(&chain);
        assert!(acc.rotation_error() < 1e-12);
    }

    #[test]
    fn chordal_average_basic_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let r = random_rotation(&mut rng);
        let avg = chordal_rotation_average(&[r, r]).unwrap();
        assert!((avg - r).abs().max() < 1e-12);

        let d20 = 20f64.to_radians();
        let avg = chordal_rotation_average(&[rot_z(d20), rot_z(-d20)]).unwrap();
        assert!((avg - Mat3::identity()).abs().max() < 1e-12);

        assert!(matches!(chordal_rotation_average(&[]), Err(Error::EmptyInput(_))));
        let opposed = [Mat3::identity(), rot_z(std::f64::consts::PI)];
        assert!(matches!(
            chordal_rotation_average(&opposed),
            Err(Error::DegenerateAverage(_))
        ));
    }

    #[test]
    fn chordal_average_beats_inputs_and_random_rotations() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let base = random_rotation(&mut rng);
        let set: Vec<Mat3> = (0..6)
            .map(|_| base * rot_axis_angle(&Vec3::new(rng.random(), rng.random(), 1.0), rng.random_range(-0.5..0.5)))
            .collect();
        let avg = chordal_rotation_average(&set).unwrap();
        let best = chordal_cost(&avg, &set);
        for r in &set {
            assert!(best <= chordal_cost(r, &set) + 1e-12);
        }
        for _ in 0..1000 {
            assert!(best <= chordal_cost(&random_rotation(&mut rng), &set) + 1e-12);
        }
    }

    #[test]
    fn umeyama_recovers_similarity() {
        let src = vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 2.0, 0.0),
            Vec3::new(0.5, 0.3, 1.5),
            Vec3::new(-1.0, 0.7, 0.2),
        ];
        let id = umeyama_align(&src, &src, true).unwrap();
        assert!((id.scale - 1.0).abs() < 1e-12);
        assert!((id.rotation - Mat3::identity()).abs().max() < 1e-12);

        let r = rot_z(30f64.to_radians());
        let t = Vec3::new(1.0, 2.0, 3.0);
        let dst: Vec<Vec3> = src.iter().map(|p| 2.0 * (r * p) + t).collect();
        let est = umeyama_align(&src, &dst, true).unwrap();
        assert!((est.scale - 2.0).abs() < 1e-9);
        assert!((est.rotation - r).abs().max() < 1e-9);
        assert!((est.translation - t).abs().max() < 1e-9);
        assert!(alignment_rmse(&est, &src, &dst) < 1e-9);

        let rigid = umeyama_align(&src, &dst, false).unwrap();
        assert_eq!(rigid.scale, 1.0);
        assert!((rigid.rotation - r).abs().max() < 1e-9);
    }

    #[test]
    fn umeyama_rejects_collinear_and_short_inputs() {
        let line: Vec<Vec3> = (0..3).map(|i| Vec3::new(i as f64, 2.0 * i as f64, 0.0)).collect();
        assert!(matches!(
            umeyama_align(&line, &line, true),
            Err(Error::DegenerateConfiguration(_))
        ));
        let two = &line[..2];
        assert!(matches!(
            umeyama_align(two, two, true),
            Err(Error::InsufficientPoints { .. })
        ));
    }

    proptest! {
        #[test]
        fn umeyama_exact_residual(
            seed in 0u64..1000,
            scale in 0.1f64..10.0,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let r = random_rotation(&mut rng);
            let t = Vec3::new(rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0));
            let src: Vec<Vec3> = (0..12)
                .map(|_| Vec3::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)))
                .collect();
            let dst: Vec<Vec3> = src.iter().map(|p| scale * (r * p) + t).collect();
            let est = umeyama_align(&src, &dst, true).unwrap();
            prop_assert!(alignment_rmse(&est, &src, &dst) < 1e-9 * scale.max(1.0) * 10.0);
            prop_assert!((est.scale - scale).abs() < 1e-9 * scale);
        }

        #[test]
        fn projection_roundtrip(
            u in 0.0f64..100.0, v in 0.0f64..100.0, depth in 0.1f64..1000.0, angle in -3.0f64..3.0,
        ) {
            let pose = Pose::new(rot_axis_angle(&Vec3::new(1.0, 0.5, -0.2), angle), Vec3::new(3.0, -1.0, 2.0));
            let k = intr();
            let x = unproject(&Vector2::new(u, v), depth, &pose, &k).unwrap();
            let p = project(&x, &pose, &k);
            prop_assert!((p.depth - depth).abs() <= 1e-7 * depth);
            prop_assert!((p.pixel - Vector2::new(u, v)).norm() <= 1e-7 * (u.hypot(v)).max(1.0));
        }
    }
}
