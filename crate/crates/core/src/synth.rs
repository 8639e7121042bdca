//! Synthetic driving scenes and corrupted per-submap predictions.
//!
//! The world is z-up: a ground plane at `z = 0` plus axis-aligned boxes
//! (buildings, and long thin ones acting as walls) scattered beside a
//! smooth planar path. A rig of cameras rides along the path; depth is
//! rendered by exact ray casting, then corrupted by one of the distortion
//! regimes before being expressed in the submap's local frame.

use std::fs;
use std::path::Path;
use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bundle::{save_bundle, submap_dir};
use crate::error::{Error, Result};
use crate::export::{export_ply, export_trajectory, parse_trajectory, trajectory_row, ColoredCloud};
use crate::geometry::{rot_axis_angle, rot_x, rot_z, Intrinsics, Mat3, Pose, Vec3};
use crate::prediction::{segment_stream, FramePrediction, StreamConfig, SubmapPrediction};

/// Minimum fraction of pixels of every image that must hit geometry.
pub const MIN_VISIBILITY: f64 = 0.2;
pub const GROUND_TRUTH_FILE: &str = "ground_truth.json";
pub const GT_CLOUD_FILE: &str = "gt_cloud.ply";

pub fn gt_trajectory_file(camera: usize) -> String {
    format!("gt_trajectory_cam{camera}.txt")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneConfig {
    pub seed: u64,
    pub n_points: usize,
    /// Meters; sets the path step (`extent / 25` per frame) and the
    /// default sensing range.
    pub extent: f64,
    pub n_frames: usize,
    pub n_cameras: usize,
    pub width: usize,
    pub height: usize,
    pub hfov_deg: f64,
    /// Defaults to three per frame.
    pub n_boxes: Option<usize>,
    /// Ground plane only.
    pub flat: bool,
    /// Defaults to `extent / 2`.
    pub max_range: Option<f64>,
    pub camera_height: f64,
    pub pitch_deg: f64,
    pub frame_rate: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_points: 5000,
            extent: 50.0,
            n_frames: 20,
            n_cameras: 3,
            width: 64,
            height: 48,
            hfov_deg: 90.0,
            n_boxes: None,
            flat: false,
            max_range: None,
            camera_height: 1.5,
            pitch_deg: 8.0,
            frame_rate: 2.0,
        }
    }
}

impl SceneConfig {
    pub fn new(seed: u64, n_points: usize, extent: f64, n_frames: usize, n_cameras: usize) -> Self {
        Self {
            seed,
            n_points,
            extent,
            n_frames,
            n_cameras,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.n_points < 1000 {
            return bad(format!("n_points must be >= 1000, got {}", self.n_points));
        }
        if self.n_cameras < 1 || self.n_frames < 2 {
            return bad("scene needs >= 1 camera and >= 2 frames".into());
        }
        if !(self.extent > 0.0) || !(self.frame_rate > 0.0) {
            return bad("extent and frame_rate must be positive".into());
        }
        if !(self.hfov_deg > 1.0 && self.hfov_deg < 170.0) || self.width < 4 || self.height < 4 {
            return bad("invalid image geometry".into());
        }
        Ok(())
    }

    pub fn max_range(&self) -> f64 {
        self.max_range.unwrap_or(0.5 * self.extent)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Primitive {
    Ground,
    Cuboid { min: Vec3, max: Vec3 },
}

impl Primitive {
    /// Ray parameter of the first hit along `o + s·d`, `s > 0`.
    pub fn intersect(&self, o: &Vec3, d: &Vec3) -> Option<f64> {
        match self {
            Primitive::Ground => (d.z < 0.0 && o.z > 0.0).then(|| -o.z / d.z),
            Primitive::Cuboid { min, max } => {
                let (mut lo, mut hi) = (0.0f64, f64::INFINITY);
                for a in 0..3 {
                    if d[a] == 0.0 {
                        if o[a] < min[a] || o[a] > max[a] {
                            return None;
                        }
                        continue;
                    }
                    let t1 = (min[a] - o[a]) / d[a];
                    let t2 = (max[a] - o[a]) / d[a];
                    lo = lo.max(t1.min(t2));
                    hi = hi.min(t1.max(t2));
                }
                (lo <= hi && lo > 0.0).then_some(lo)
            }
        }
    }

    /// Distance from a point to the primitive's solid.
    pub fn distance(&self, p: &Vec3) -> f64 {
        match self {
            Primitive::Ground => p.z.abs(),
            Primitive::Cuboid { min, max } => {
                let q = Vec3::new(
                    (min.x - p.x).max(p.x - max.x).max(0.0),
                    (min.y - p.y).max(p.y - max.y).max(0.0),
                    (min.z - p.z).max(p.z - max.z).max(0.0),
                );
                q.norm()
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticScene {
    pub config: SceneConfig,
    pub primitives: Vec<Primitive>,
    pub surface_points: Vec<Vec3>,
    /// Body pose per timestamp.
    pub trajectory: Vec<Pose>,
    /// Camera-to-body mount per camera.
    pub rig: Vec<Pose>,
    pub intrinsics: Intrinsics,
    views: ViewCache,
}

/// Rendered views, filled on first use. Ignored by equality.
#[derive(Clone, Default)]
struct ViewCache(Vec<OnceLock<IdealView>>);

impl PartialEq for ViewCache {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

impl std::fmt::Debug for ViewCache {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} cached views", self.0.iter().filter(|v| v.get().is_some()).count())
    }
}

/// Depth per pixel (row-major), `None` where the ray misses or exceeds
/// the sensing range.
#[derive(Clone, Debug)]
pub struct IdealView {
    pub pose: Pose,
    pub depth: Vec<Option<f64>>,
}

fn camera_mount(c: usize, n: usize, height: f64, pitch: f64) -> Pose {
    let yaw = std::f64::consts::TAU * c as f64 / n as f64;
    // Camera axes (x right, y down, z forward) in a body frame with x
    // forward, y left, z up.
    let base = Mat3::new(0.0, 0.0, 1.0, -1.0, 0.0, 0.0, 0.0, -1.0, 0.0);
    let r = rot_z(yaw) * base * rot_x(-pitch);
    Pose::new(r, Vec3::new(0.3 * yaw.cos(), 0.3 * yaw.sin(), height))
}

fn generate_path(cfg: &SceneConfig, rng: &mut ChaCha8Rng) -> Vec<Pose> {
    let step = cfg.extent / 25.0;
    let (mut x, mut y, mut heading) = (0.0f64, 0.0f64, 0.0f64);
    let mut rate = 0.0;
    let mut left = 0usize;
    let mut out = Vec::with_capacity(cfg.n_frames);
    for _ in 0..cfg.n_frames {
        out.push(Pose::new(rot_z(heading), Vec3::new(x, y, 0.0)));
        if left == 0 {
            rate = rng.random_range(-0.12..0.12);
            left = rng.random_range(3..7);
        }
        left -= 1;
        heading += rate;
        x += step * heading.cos();
        y += step * heading.sin();
    }
    out
}

fn place_boxes(cfg: &SceneConfig, path: &[Pose], centers: &[Vec3], rng: &mut ChaCha8Rng) -> Vec<Primitive> {
    let n = cfg.n_boxes.unwrap_or(3 * cfg.n_frames);
    let mut boxes = Vec::with_capacity(n);
    for i in 0..n {
        for _ in 0..50 {
            // The first few boxes sit just ahead of the start so early
            // frames always see some structure.
            let s = if i < 4 {
                rng.random_range(0.0..1.0f64)
            } else {
                rng.random_range(0.0..(path.len() - 1) as f64)
            };
            let j = (s.floor() as usize).min(path.len() - 2);
            let f = s - j as f64;
            let at = path[j].translation * (1.0 - f) + path[j + 1].translation * f;
            let dir = (path[j + 1].translation - path[j].translation).normalize();
            let normal = Vec3::new(-dir.y, dir.x, 0.0);
            let side = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let ahead = if i < 4 { rng.random_range(4.0..12.0) } else { 0.0 };
            let center = at + dir * ahead + normal * side * rng.random_range(3.0..12.0);
            let (sx, sy) = if rng.random_bool(0.25) {
                let long = rng.random_range(6.0..15.0);
                let thin = rng.random_range(0.3..0.6);
                if rng.random_bool(0.5) { (long, thin) } else { (thin, long) }
            } else {
                (rng.random_range(1.0..4.0), rng.random_range(1.0..4.0))
            };
            let h = rng.random_range(1.0..6.0);
            let b = Primitive::Cuboid {
                min: Vec3::new(center.x - sx / 2.0, center.y - sy / 2.0, 0.0),
                max: Vec3::new(center.x + sx / 2.0, center.y + sy / 2.0, h),
            };
            if centers.iter().all(|c| b.distance(c) > 1.5) {
                boxes.push(b);
                break;
            }
        }
    }
    boxes
}

fn sample_surface(cfg: &SceneConfig, primitives: &[Primitive], path: &[Pose], rng: &mut ChaCha8Rng) -> Vec<Vec3> {
    let (mut lo, mut hi) = (Vec3::repeat(f64::INFINITY), Vec3::repeat(f64::NEG_INFINITY));
    for p in path {
        lo = lo.inf(&p.translation);
        hi = hi.sup(&p.translation);
    }
    let margin = 15.0;
    let boxes: Vec<(Vec3, Vec3)> = primitives
        .iter()
        .filter_map(|p| match p {
            Primitive::Cuboid { min, max } => Some((*min, *max)),
            Primitive::Ground => None,
        })
        .collect();
    let on_ground = if boxes.is_empty() { cfg.n_points } else { cfg.n_points * 2 / 5 };
    let mut out = Vec::with_capacity(cfg.n_points);
    for _ in 0..on_ground {
        out.push(Vec3::new(
            rng.random_range(lo.x - margin..hi.x + margin),
            rng.random_range(lo.y - margin..hi.y + margin),
            0.0,
        ));
    }
    // Box faces except the bottom, area-weighted.
    let mut faces = Vec::new();
    for (min, max) in &boxes {
        let e = max - min;
        for (axis, side) in [(0, 0), (0, 1), (1, 0), (1, 1), (2, 1)] {
            let (a, b) = ((axis + 1) % 3, (axis + 2) % 3);
            faces.push((*min, *max, axis, side, e[a] * e[b]));
        }
    }
    let total: f64 = faces.iter().map(|f| f.4).sum();
    while out.len() < cfg.n_points {
        let mut pick = rng.random_range(0.0..total);
        let face = faces
            .iter()
            .find(|f| {
                pick -= f.4;
                pick <= 0.0
            })
            .unwrap_or(faces.last().expect("boxes exist"));
        let (min, max, axis, side, _) = *face;
        let mut p = Vec3::zeros();
        for a in 0..3 {
            p[a] = if a == axis {
                if side == 0 { min[a] } else { max[a] }
            } else {
                rng.random_range(min[a]..max[a])
            };
        }
        out.push(p);
    }
    out
}

fn cast_among<'a>(prims: impl Iterator<Item = &'a Primitive>, origin: &Vec3, dir: &Vec3, range: f64) -> Option<f64> {
    let s = prims.filter_map(|p| p.intersect(origin, dir)).fold(f64::INFINITY, f64::min);
    (s.is_finite() && s * dir.norm() <= range).then_some(s)
}

/// Deterministic scene, path and rig from `cfg.seed`.
pub fn generate_scene_with(cfg: &SceneConfig) -> Result<SyntheticScene> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let intrinsics = Intrinsics::from_fov(cfg.width, cfg.height, cfg.hfov_deg.to_radians())?;
    let trajectory = generate_path(cfg, &mut rng);
    let rig: Vec<Pose> = (0..cfg.n_cameras)
        .map(|c| camera_mount(c, cfg.n_cameras, cfg.camera_height, cfg.pitch_deg.to_radians()))
        .collect();
    let centers: Vec<Vec3> = trajectory
        .iter()
        .flat_map(|b| rig.iter().map(move |m| b.compose(m).translation))
        .collect();
    let mut primitives = vec![Primitive::Ground];
    if !cfg.flat {
        primitives.extend(place_boxes(cfg, &trajectory, &centers, &mut rng));
    }
    let surface_points = sample_surface(cfg, &primitives, &trajectory, &mut rng);
    let scene = SyntheticScene {
        config: cfg.clone(),
        primitives,
        surface_points,
        trajectory,
        rig,
        intrinsics,
        views: ViewCache((0..cfg.n_frames * cfg.n_cameras).map(|_| OnceLock::new()).collect()),
    };
    for t in 0..cfg.n_frames {
        for c in 0..cfg.n_cameras {
            let v = scene.render_ideal(t, c);
            let frac = v.depth.iter().filter(|d| d.is_some()).count() as f64 / v.depth.len() as f64;
            if frac < MIN_VISIBILITY {
                return Err(Error::Generation(format!(
                    "camera {c} at frame {t} sees geometry in {:.1}% of pixels (need {:.0}%); \
                     increase extent or max_range, or lower pitch",
                    100.0 * frac,
                    100.0 * MIN_VISIBILITY
                )));
            }
        }
    }
    Ok(scene)
}

pub fn generate_scene(seed: u64, n_points: usize, extent: f64, n_frames: usize, n_cameras: usize) -> Result<SyntheticScene> {
    generate_scene_with(&SceneConfig::new(seed, n_points, extent, n_frames, n_cameras))
}

impl SyntheticScene {
    pub fn n_frames(&self) -> usize {
        self.trajectory.len()
    }

    pub fn n_cameras(&self) -> usize {
        self.rig.len()
    }

    /// World pose of camera `c` at timestamp `t`.
    pub fn camera_pose(&self, t: usize, c: usize) -> Pose {
        self.trajectory[t].compose(&self.rig[c])
    }

    pub fn camera_trajectory(&self, c: usize) -> Vec<Pose> {
        (0..self.n_frames()).map(|t| self.camera_pose(t, c)).collect()
    }

    pub fn path_length(&self) -> f64 {
        crate::evaluation::trajectory_length(&self.camera_trajectory(0))
    }

    /// Depth along the optical axis of the closest hit.
    pub fn cast(&self, origin: &Vec3, dir: &Vec3) -> Option<f64> {
        cast_among(self.primitives.iter(), origin, dir, self.config.max_range())
    }

    /// Ideal depth of camera `c` at timestamp `t`, rendered once.
    pub fn render_ideal(&self, t: usize, c: usize) -> &IdealView {
        self.views.0[t * self.n_cameras() + c].get_or_init(|| self.render_uncached(t, c))
    }

    fn render_uncached(&self, t: usize, c: usize) -> IdealView {
        let pose = self.camera_pose(t, c);
        let range = self.config.max_range();
        // Primitives out of range cannot produce a valid hit.
        let near: Vec<&Primitive> = self
            .primitives
            .iter()
            .filter(|p| p.distance(&pose.translation) <= range)
            .collect();
        let k = &self.intrinsics;
        let mut depth = Vec::with_capacity(k.pixel_count());
        for v in 0..k.height {
            for u in 0..k.width {
                // Camera rays have unit z, so the ray parameter is the depth.
                let dir = pose.rotation * k.ray(&FramePrediction::pixel(u, v));
                depth.push(cast_among(near.iter().copied(), &pose.translation, &dir, range));
            }
        }
        IdealView { pose, depth }
    }

    /// World points of every valid pixel of every image.
    pub fn gt_cloud(&self) -> Vec<Vec3> {
        self.gt_cloud_for(self.n_cameras())
    }

    /// As [`gt_cloud`](Self::gt_cloud) over cameras `0..cameras` only.
    pub fn gt_cloud_for(&self, cameras: usize) -> Vec<Vec3> {
        let k = &self.intrinsics;
        let mut out = Vec::new();
        for t in 0..self.n_frames() {
            for c in 0..cameras.min(self.n_cameras()) {
                let view = self.render_ideal(t, c);
                for (i, d) in view.depth.iter().enumerate() {
                    if let Some(d) = d {
                        let ray = k.ray(&FramePrediction::pixel(i % k.width, i / k.width));
                        out.push(view.pose.transform_point(&(ray * *d)));
                    }
                }
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WaveAxis {
    U,
    V,
    #[default]
    Both,
}

/// How predicted depth departs from the truth, per submap. Per-submap
/// lists shorter than the stream fall back to the undistorted value.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "regime", rename_all = "snake_case")]
pub enum Regime {
    #[default]
    None,
    /// Depth and pose translations scaled by `scales[k]`.
    Case1 { scales: Vec<f64> },
    /// Pixels unprojected with perturbed intrinsics, depth scaled.
    Case2 {
        focal_scales: Vec<f64>,
        principal_shifts: Vec<[f64; 2]>,
        depth_scales: Vec<f64>,
    },
    /// `D' = D (1 + α sin(β u / W + φ_k) cos(β v / H + φ_k))`.
    Case3 {
        amplitude: f64,
        frequency: f64,
        #[serde(default)]
        axis: WaveAxis,
        phases: Vec<f64>,
    },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DistortionSpec {
    pub regime: Regime,
    /// Magnitudes of the random rigid motion applied to each submap's
    /// local frame.
    pub jitter_rotation_deg: f64,
    pub jitter_translation: f64,
    pub jitter_seed: u64,
}

fn at(v: &[f64], k: usize, default: f64) -> f64 {
    v.get(k).copied().unwrap_or(default)
}

impl DistortionSpec {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn with_regime(regime: Regime) -> Self {
        Self {
            regime,
            ..Self::default()
        }
    }

    pub fn with_jitter(mut self, rotation_deg: f64, translation: f64, seed: u64) -> Self {
        self.jitter_rotation_deg = rotation_deg;
        self.jitter_translation = translation;
        self.jitter_seed = seed;
        self
    }

    /// Case-1 scales drawn log-uniformly from `[lo, hi]`.
    pub fn random_scales(seed: u64, submaps: usize, lo: f64, hi: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scales = (0..submaps).map(|_| rng.random_range(lo.ln()..=hi.ln()).exp()).collect();
        Self::with_regime(Regime::Case1 { scales })
    }

    /// Case-2 intrinsics: focal lengths scaled uniformly within
    /// `1 ± focal_delta` for every submap after the first.
    pub fn random_intrinsics(seed: u64, submaps: usize, focal_delta: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let focal_scales = (0..submaps)
            .map(|k| if k == 0 { 1.0 } else { 1.0 + rng.random_range(-focal_delta..=focal_delta) })
            .collect();
        Self::with_regime(Regime::Case2 {
            focal_scales,
            principal_shifts: Vec::new(),
            depth_scales: Vec::new(),
        })
    }

    /// Case-3 field with phases drawn uniformly per submap.
    pub fn random_wave(seed: u64, submaps: usize, amplitude: f64, frequency: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let phases = (0..submaps).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
        Self::with_regime(Regime::Case3 {
            amplitude,
            frequency,
            axis: WaveAxis::Both,
            phases,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        match &self.regime {
            Regime::None => {}
            Regime::Case1 { scales } => {
                if !scales.iter().all(|s| *s > 0.0 && s.is_finite()) {
                    return bad("case1 scales must be positive");
                }
            }
            Regime::Case2 {
                focal_scales,
                principal_shifts,
                depth_scales,
            } => {
                if !focal_scales.iter().chain(depth_scales).all(|s| *s > 0.0 && s.is_finite()) {
                    return bad("case2 scales must be positive");
                }
                if !principal_shifts.iter().flatten().all(|s| s.is_finite()) {
                    return bad("case2 principal shifts must be finite");
                }
            }
            Regime::Case3 {
                amplitude, frequency, phases, ..
            } => {
                if !(*amplitude >= 0.0 && *amplitude < 1.0) || !frequency.is_finite() {
                    return bad("case3 needs 0 <= amplitude < 1 and a finite frequency");
                }
                if !phases.iter().all(|p| p.is_finite()) {
                    return bad("case3 phases must be finite");
                }
            }
        }
        if !(self.jitter_rotation_deg >= 0.0) || !(self.jitter_translation >= 0.0) {
            return bad("jitter magnitudes must be non-negative");
        }
        Ok(())
    }

    /// Multiplicative depth factor `f(D)/D` at pixel `(u, v)` of submap `k`.
    pub fn depth_factor(&self, k: usize, u: usize, v: usize, width: usize, height: usize) -> f64 {
        match &self.regime {
            Regime::None => 1.0,
            Regime::Case1 { scales } => at(scales, k, 1.0),
            Regime::Case2 { depth_scales, .. } => at(depth_scales, k, 1.0),
            Regime::Case3 {
                amplitude,
                frequency,
                axis,
                phases,
            } => {
                let phi = at(phases, k, 0.0);
                let su = (frequency * u as f64 / width as f64 + phi).sin();
                let cv = (frequency * v as f64 / height as f64 + phi).cos();
                let g = match axis {
                    WaveAxis::U => su,
                    WaveAxis::V => cv,
                    WaveAxis::Both => su * cv,
                };
                1.0 + amplitude * g
            }
        }
    }

    /// Scale applied to pose translations (the depth scale of globally
    /// scaled regimes).
    fn translation_scale(&self, k: usize) -> f64 {
        match &self.regime {
            Regime::Case1 { scales } => at(scales, k, 1.0),
            Regime::Case2 { depth_scales, .. } => at(depth_scales, k, 1.0),
            _ => 1.0,
        }
    }

    fn intrinsics(&self, k: usize, base: &Intrinsics) -> Result<Intrinsics> {
        match &self.regime {
            Regime::Case2 {
                focal_scales,
                principal_shifts,
                ..
            } => {
                let f = at(focal_scales, k, 1.0);
                let s = principal_shifts.get(k).copied().unwrap_or([0.0; 2]);
                Intrinsics::new(base.fx * f, base.fy * f, base.cx + s[0], base.cy + s[1], base.width, base.height)
            }
            _ => Ok(*base),
        }
    }

    pub fn jitter(&self, k: usize) -> Pose {
        if self.jitter_rotation_deg == 0.0 && self.jitter_translation == 0.0 {
            return Pose::identity();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.jitter_seed);
        rng.set_stream(k as u64);
        let mut unit = || {
            let v = Vec3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            v / v.norm().max(1e-12)
        };
        let axis = unit();
        let dir = unit();
        let mut rng = ChaCha8Rng::seed_from_u64(self.jitter_seed ^ 0x9e37_79b9_7f4a_7c15);
        rng.set_stream(k as u64);
        let angle = self.jitter_rotation_deg.to_radians() * rng.random_range(-1.0..=1.0);
        let dist = self.jitter_translation * rng.random_range(0.0..=1.0);
        Pose::new(rot_axis_angle(&axis, angle), dir * dist)
    }
}

/// Renders submap `k` over `timestamps`, expressed in the frame of its
/// first camera (before jitter).
pub fn render_submap(
    scene: &SyntheticScene,
    timestamps: &[usize],
    spec: &DistortionSpec,
    k: usize,
    overlap: usize,
) -> Result<SubmapPrediction> {
    spec.validate()?;
    let Some(&t0) = timestamps.first() else {
        return Err(Error::EmptyInput("submap timestamps"));
    };
    if let Some(t) = timestamps.iter().find(|&&t| t >= scene.n_frames()) {
        return Err(Error::InvalidConfig(format!(
            "timestamp {t} outside scene range 0..{}",
            scene.n_frames()
        )));
    }
    let anchor_inv = scene.camera_pose(t0, 0).inverse();
    let jitter = spec.jitter(k);
    let scale = spec.translation_scale(k);
    let base = &scene.intrinsics;
    let intr = spec.intrinsics(k, base)?;
    let (w, h) = (base.width, base.height);

    let mut frames = Vec::with_capacity(timestamps.len() * scene.n_cameras());
    for &t in timestamps {
        for c in 0..scene.n_cameras() {
            let view = scene.render_ideal(t, c);
            let local = anchor_inv.compose(&view.pose);
            let pose = jitter.compose(&Pose::new(local.rotation, local.translation * scale));
            let mut pointmap = vec![Vec3::zeros(); w * h];
            let mut confidence = vec![0f32; w * h];
            let mut valid = vec![false; w * h];
            for (i, d) in view.depth.iter().enumerate() {
                let Some(d) = d else { continue };
                let (u, v) = (i % w, i / w);
                let factor = spec.depth_factor(k, u, v, w, h);
                let cam = intr.ray(&FramePrediction::pixel(u, v)) * (d * factor);
                pointmap[i] = pose.transform_point(&cam);
                confidence[i] = (1.0 - (factor - 1.0).abs()).clamp(0.0, 1.0) as f32;
                valid[i] = true;
            }
            frames.push(FramePrediction {
                t,
                c,
                intrinsics: intr,
                pose,
                pointmap,
                confidence,
                valid,
            });
        }
    }
    Ok(SubmapPrediction::new(k, if k == 0 { 0 } else { overlap }, frames))
}

/// Everything needed to score a run against a synthetic stream.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GroundTruthFile {
    pub seed: u64,
    pub scene: SceneConfig,
    pub stream: StreamConfig,
    pub distortion: DistortionSpec,
    pub frame_rate: f64,
    /// Per camera, one `t tx ty tz qx qy qz qw` row per timestamp.
    pub trajectories: Vec<Vec<String>>,
}

impl GroundTruthFile {
    pub fn new(scene: &SyntheticScene, stream: &StreamConfig, spec: &DistortionSpec) -> Self {
        let rate = scene.config.frame_rate;
        Self {
            seed: scene.config.seed,
            scene: scene.config.clone(),
            stream: *stream,
            distortion: spec.clone(),
            frame_rate: rate,
            trajectories: (0..scene.n_cameras())
                .map(|c| {
                    scene
                        .camera_trajectory(c)
                        .iter()
                        .enumerate()
                        .map(|(t, p)| trajectory_row(t as f64 / rate, p))
                        .collect()
                })
                .collect(),
        }
    }

    pub fn poses(&self) -> Result<Vec<Vec<Pose>>> {
        self.trajectories
            .iter()
            .map(|rows| {
                let text = rows.join("\n");
                Ok(parse_trajectory(text.as_bytes())?.into_iter().map(|(_, p)| p).collect())
            })
            .collect()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Json {
            path: path.to_path_buf(),
            source: e,
        })
    }
}

/// Checks that the scene covers the stream.
pub fn check_stream(scene: &SyntheticScene, stream: &StreamConfig) -> Result<()> {
    stream.validate()?;
    if stream.total_frames != scene.n_frames() || stream.cameras != scene.n_cameras() {
        return Err(Error::InvalidConfig(format!(
            "stream expects {} frames × {} cameras, scene has {} × {}",
            stream.total_frames,
            stream.cameras,
            scene.n_frames(),
            scene.n_cameras()
        )));
    }
    Ok(())
}

/// Writes `submap_NNNN/` bundles, `ground_truth.json` and `gt_cloud.ply`.
pub fn write_stream(scene: &SyntheticScene, stream: &StreamConfig, spec: &DistortionSpec, dir: &Path) -> Result<()> {
    check_stream(scene, stream)?;
    spec.validate()?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (k, ts) in segment_stream(stream)?.iter().enumerate() {
        let sp = render_submap(scene, ts, spec, k, stream.overlap)?;
        save_bundle(&sp, &submap_dir(dir, k))?;
    }
    let gt = GroundTruthFile::new(scene, stream, spec);
    let path = dir.join(GROUND_TRUTH_FILE);
    let text = serde_json::to_string_pretty(&gt).map_err(|e| Error::Json {
        path: path.clone(),
        source: e,
    })?;
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    for (c, poses) in gt.poses()?.iter().enumerate() {
        export_trajectory(poses, gt.frame_rate, &dir.join(gt_trajectory_file(c)))?;
    }
    let points = scene.gt_cloud();
    let colors = vec![[200, 200, 200]; points.len()];
    export_ply(&ColoredCloud { points, colors }, &dir.join(GT_CLOUD_FILE))
}
