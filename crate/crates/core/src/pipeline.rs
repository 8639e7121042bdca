//! Online alignment loop, strategies, evaluation and artifact export.

use std::fmt;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::baselines::{overlap_correspondences, sim3_point_align, sl4_point_align, Sl4Transform};
use crate::bundle::{count_submaps, load_bundle, submap_dir};
use crate::control_points::{ControlPool, TrackStats, TrackerParams};
use crate::deformation::{aggregate_canonical, extent, smooth_displacements, tps_fit, SmoothingParams, TpsModel};
use crate::error::{Error, Result};
use crate::evaluation::{geometry_metrics, trajectory_length, trajectory_metrics, AlignmentReport};
use crate::export::{export_ply, export_trajectory, read_ply, submap_color, ColoredCloud};
use crate::geometry::{Pose, Vec3};
use crate::prediction::{filter_submap, segment_stream, StreamConfig, SubmapPrediction};
use crate::registration::{apply_to_submap, estimate_inter_submap_scale, pairwise_registration, Chain, SubmapTransform};
use crate::synth::{
    check_stream, generate_scene_with, render_submap, DistortionSpec, GroundTruthFile, SceneConfig, SyntheticScene,
    GROUND_TRUTH_FILE, GT_CLOUD_FILE,
};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// Pose-based registration, tracked control points and per-submap TPS.
    #[default]
    Talo,
    Sim3,
    Sl4,
    /// Submaps left in their own frames.
    None,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [Strategy::Talo, Strategy::Sim3, Strategy::Sl4, Strategy::None];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Talo => "talo",
            Strategy::Sim3 => "sim3",
            Strategy::Sl4 => "sl4",
            Strategy::None => "none",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|v| v.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::InvalidConfig(format!("unknown strategy {s:?} (talo, sim3, sl4, none)")))
    }
}

/// Default TPS regularization as a fraction of the control points'
/// bounding-box diagonal.
pub const LAMBDA_RATIO: f64 = 1e-3;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthInput {
    pub scene: SceneConfig,
    pub distortion: DistortionSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub strategy: Strategy,
    #[serde(rename = "L")]
    pub new_frames: usize,
    #[serde(rename = "O")]
    pub overlap: usize,
    /// Use only cameras `0..C`; all when unset.
    #[serde(rename = "C")]
    pub cameras: Option<usize>,
    pub voxel_ratio: f64,
    #[serde(rename = "Q")]
    pub neighbors: usize,
    /// TPS regularization in meters; `LAMBDA_RATIO × extent` when unset.
    pub lambda: Option<f64>,
    pub confidence_percentile: f64,
    /// Propagation gate as a multiple of the voxel size.
    pub gate_ratio: f64,
    /// Skip scale estimation (metric-depth backbones).
    pub metric_scale: bool,
    /// Refit each completed submap's TPS as the stream advances.
    pub streaming: bool,
    /// Seed of the synthetic scene; overrides `synth.scene.seed`.
    pub seed: u64,
    /// Directory of `submap_NNNN` bundles; synthesizes when unset.
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub rte_gap: usize,
    pub clamp: f64,
    pub synth: SynthInput,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::Talo,
            new_frames: 2,
            overlap: 2,
            cameras: None,
            voxel_ratio: 0.05,
            neighbors: 32,
            lambda: None,
            confidence_percentile: 60.0,
            gate_ratio: 2.0,
            metric_scale: false,
            streaming: false,
            seed: 0,
            input: None,
            output: None,
            rte_gap: 1,
            clamp: 10.0,
            synth: SynthInput::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Json {
            path: path.to_path_buf(),
            source: e,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.overlap < 1 || self.overlap > self.new_frames {
            return bad(format!("need 1 <= O <= L, got L={} O={}", self.new_frames, self.overlap));
        }
        if self.cameras == Some(0) {
            return bad("C must be >= 1".into());
        }
        if !(self.voxel_ratio > 0.0 && self.voxel_ratio.is_finite()) {
            return bad(format!("voxel_ratio must be positive, got {}", self.voxel_ratio));
        }
        if !(self.gate_ratio > 0.0 && self.gate_ratio.is_finite()) {
            return bad(format!("gate_ratio must be positive, got {}", self.gate_ratio));
        }
        if !(0.0..100.0).contains(&self.confidence_percentile) {
            return bad(format!("confidence percentile must lie in [0, 100), got {}", self.confidence_percentile));
        }
        if !(self.clamp > 0.0) || self.rte_gap < 1 {
            return bad("clamp must be positive and rte_gap >= 1".into());
        }
        if self.strategy == Strategy::Talo {
            if self.neighbors < 1 {
                return bad("Q must be >= 1".into());
            }
            if let Some(l) = self.lambda {
                if !(l >= 0.0 && l.is_finite()) {
                    return bad(format!("lambda must be >= 0, got {l}"));
                }
            }
            if !self.metric_scale && self.overlap < 2 {
                return bad("scale estimation needs O >= 2 (or metric_scale)".into());
            }
        }
        if self.input.is_none() {
            self.synth.scene.validate()?;
            self.synth.distortion.validate()?;
        }
        Ok(())
    }

    pub fn scene_config(&self) -> SceneConfig {
        SceneConfig {
            seed: self.seed,
            ..self.synth.scene.clone()
        }
    }

    pub fn stream_config(&self, scene: &SyntheticScene) -> Result<StreamConfig> {
        StreamConfig::new(scene.n_frames(), scene.n_cameras(), self.new_frames, self.overlap)
    }

    fn tracker(&self) -> TrackerParams {
        TrackerParams {
            voxel_ratio: self.voxel_ratio,
            gate_ratio: self.gate_ratio,
        }
    }
}

/// Supplies submaps in stream order.
pub trait SubmapSource {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn load(&mut self, k: usize) -> Result<SubmapPrediction>;
}

pub struct BundleSource {
    root: PathBuf,
    count: usize,
}

impl BundleSource {
    pub fn open(root: &Path) -> Result<Self> {
        Ok(Self {
            root: root.to_path_buf(),
            count: count_submaps(root)?,
        })
    }
}

impl SubmapSource for BundleSource {
    fn len(&self) -> usize {
        self.count
    }

    fn load(&mut self, k: usize) -> Result<SubmapPrediction> {
        load_bundle(&submap_dir(&self.root, k))
    }
}

/// Renders submaps on demand.
pub struct SynthSource<'a> {
    pub scene: &'a SyntheticScene,
    pub spec: DistortionSpec,
    pub stream: StreamConfig,
    segments: Vec<Vec<usize>>,
}

impl<'a> SynthSource<'a> {
    pub fn new(scene: &'a SyntheticScene, stream: StreamConfig, spec: DistortionSpec) -> Result<Self> {
        check_stream(scene, &stream)?;
        spec.validate()?;
        Ok(Self {
            scene,
            spec,
            stream,
            segments: segment_stream(&stream)?,
        })
    }
}

impl SubmapSource for SynthSource<'_> {
    fn len(&self) -> usize {
        self.segments.len()
    }

    fn load(&mut self, k: usize) -> Result<SubmapPrediction> {
        render_submap(self.scene, &self.segments[k], &self.spec, k, self.stream.overlap)
    }
}

#[derive(Clone, Debug, Default)]
pub struct GroundTruth {
    /// Per camera, one pose per timestamp.
    pub trajectories: Vec<Vec<Pose>>,
    pub cloud: Vec<Vec3>,
}

impl GroundTruth {
    pub fn from_scene(scene: &SyntheticScene) -> Self {
        Self::from_scene_cameras(scene, scene.n_cameras())
    }

    /// Restricted to cameras `0..cameras`.
    pub fn from_scene_cameras(scene: &SyntheticScene, cameras: usize) -> Self {
        let cameras = cameras.min(scene.n_cameras());
        Self {
            trajectories: (0..cameras).map(|c| scene.camera_trajectory(c)).collect(),
            cloud: scene.gt_cloud_for(cameras),
        }
    }

    /// Reads `ground_truth.json` and `gt_cloud.ply` from a stream
    /// directory.
    pub fn load(dir: &Path) -> Result<Self> {
        let gt = GroundTruthFile::load(&dir.join(GROUND_TRUTH_FILE))?;
        Ok(Self {
            trajectories: gt.poses()?,
            cloud: read_ply(&dir.join(GT_CLOUD_FILE))?.points,
        })
    }

    pub fn length(&self) -> f64 {
        self.trajectories.first().map_or(0.0, |t| trajectory_length(t))
    }
}

/// An alignment that could not be carried out, kept instead of a crash.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Failure {
    pub submap: usize,
    pub stage: &'static str,
    pub reason: String,
}

/// Outcome of feeding one submap.
#[derive(Clone, Debug, Default)]
pub struct StepReport {
    pub index: usize,
    /// Inter-submap scale ratio applied (1 for the first submap).
    pub scale: f64,
    pub tracking: TrackStats,
    pub seconds: f64,
    /// Streaming mode: the refreshed deformation of submap `index − 1`.
    pub interim_model: Option<TpsModel>,
}

/// Final state of a run.
#[derive(Clone, Debug, Default)]
pub struct Alignment {
    pub strategy: Strategy,
    /// Submaps in the common frame, deformed when the strategy does so.
    pub submaps: Vec<SubmapPrediction>,
    pub transforms: Vec<SubmapTransform>,
    pub models: Vec<TpsModel>,
    pub pool: ControlPool,
    pub failure: Option<Failure>,
    pub seconds: Vec<f64>,
}

impl Alignment {
    /// Per camera, the pose of each timestamp taken from the first submap
    /// containing it.
    pub fn trajectories(&self) -> Vec<Vec<Pose>> {
        let mut out: Vec<Vec<Option<Pose>>> = Vec::new();
        for sp in &self.submaps {
            for f in &sp.frames {
                if out.len() <= f.c {
                    out.resize(f.c + 1, Vec::new());
                }
                let row = &mut out[f.c];
                if row.len() <= f.t {
                    row.resize(f.t + 1, None);
                }
                row[f.t].get_or_insert(f.pose);
            }
        }
        out.into_iter().map(|r| r.into_iter().flatten().collect()).collect()
    }

    pub fn cloud(&self) -> ColoredCloud {
        let mut c = ColoredCloud::default();
        for sp in &self.submaps {
            let color = submap_color(sp.index);
            for p in sp.valid_points() {
                c.points.push(p);
                c.colors.push(color);
            }
        }
        c
    }
}

fn sim3_transform(index: usize, s: &crate::geometry::Sim3) -> SubmapTransform {
    SubmapTransform {
        index,
        scale_correction: s.scale,
        to_global: s.rigid_part(),
    }
}

fn warp_submap_sl4(sp: &SubmapPrediction, h: &Sl4Transform) -> Option<SubmapPrediction> {
    let mut out = sp.clone();
    for f in &mut out.frames {
        f.pose = h.warp_pose(&f.pose)?;
        for i in 0..f.pointmap.len() {
            if !f.valid[i] {
                continue;
            }
            match h.apply(&f.pointmap[i]) {
                Some(p) => f.pointmap[i] = p,
                None => f.valid[i] = false,
            }
        }
    }
    Some(out)
}

/// Per-submap control-point deformation from the pool's current state.
pub fn fit_submap_model(pool: &ControlPool, canonical: &[Option<Vec3>], k: usize, cfg: &PipelineConfig) -> Result<TpsModel> {
    let obs = pool.observed_in(k);
    let mut sources = Vec::with_capacity(obs.len());
    let mut targets = Vec::with_capacity(obs.len());
    for (i, o) in &obs {
        if let Some(c) = canonical[*i] {
            sources.push(o.point);
            targets.push(c);
        }
    }
    let params = SmoothingParams {
        neighbors: cfg.neighbors,
        sigma: None,
    };
    let smoothed = smooth_displacements(&sources, &targets, &params)?;
    let lambda = cfg.lambda.unwrap_or(LAMBDA_RATIO * extent(&sources));
    tps_fit(&sources, &smoothed, lambda)
}

/// Robust fused position of every control point.
pub fn canonical_positions(pool: &ControlPool) -> Result<Vec<Option<Vec3>>> {
    pool.points
        .iter()
        .map(|cp| {
            let pts = cp.points();
            if pts.is_empty() {
                Ok(None)
            } else {
                aggregate_canonical(&pts).map(Some)
            }
        })
        .collect()
}

fn deform(sp: &SubmapPrediction, model: &TpsModel) -> SubmapPrediction {
    let mut out = sp.clone();
    for f in &mut out.frames {
        for i in 0..f.pointmap.len() {
            if f.valid[i] {
                f.pointmap[i] = model.eval(&f.pointmap[i]);
            }
        }
    }
    out
}

/// The online aligner: submaps are pushed in order and each is placed in
/// the common frame using only itself and earlier submaps.
pub struct Aligner {
    cfg: PipelineConfig,
    chain: Chain,
    last_raw: Option<SubmapPrediction>,
    state: Alignment,
}

impl Aligner {
    pub fn new(cfg: PipelineConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            state: Alignment {
                strategy: cfg.strategy,
                ..Alignment::default()
            },
            cfg,
            chain: Chain::new(),
            last_raw: None,
        })
    }

    pub fn failure(&self) -> Option<&Failure> {
        self.state.failure.as_ref()
    }

    pub fn pool(&self) -> &ControlPool {
        &self.state.pool
    }

    fn fail(&mut self, submap: usize, stage: &'static str, reason: String) {
        log::warn!("submap {submap}: {stage} failed: {reason}");
        self.state.failure = Some(Failure { submap, stage, reason });
    }

    pub fn push(&mut self, mut sp: SubmapPrediction) -> Result<StepReport> {
        let k = self.state.submaps.len();
        let start = Instant::now();
        let mut report = StepReport {
            index: k,
            scale: 1.0,
            ..StepReport::default()
        };
        if self.state.failure.is_some() {
            return Ok(report);
        }
        if sp.index != k {
            return Err(Error::InvalidConfig(format!("expected submap {k}, got {}", sp.index)).at_stage(k, "load"));
        }
        if let Some(c) = self.cfg.cameras {
            sp.frames.retain(|f| f.c < c);
        }
        sp.validate().map_err(|e| e.at_stage(k, "load"))?;
        filter_submap(&mut sp, self.cfg.confidence_percentile);
        if sp.frames.iter().all(|f| f.valid_count() == 0) {
            return Err(Error::InvalidConfig(format!(
                "confidence percentile {} leaves no valid pixels (uniform confidence maps keep nothing; use 0 to disable filtering)",
                self.cfg.confidence_percentile
            ))
            .at_stage(k, "filter"));
        }

        let (global, transform) = if k == 0 {
            (sp.clone(), SubmapTransform::identity(0))
        } else {
            let prev = self.state.submaps.last().expect("k > 0");
            match self.cfg.strategy {
                Strategy::None => (sp.clone(), SubmapTransform::identity(k)),
                Strategy::Talo => {
                    let raw_prev = self.last_raw.as_ref().expect("k > 0");
                    let ts = sp.overlap_timestamps();
                    let prev_poses = raw_prev.reference_poses(&ts).map_err(|e| e.at_stage(k, "register"))?;
                    let mut curr_poses = sp.reference_poses(&ts).map_err(|e| e.at_stage(k, "register"))?;
                    if !self.cfg.metric_scale {
                        report.scale =
                            estimate_inter_submap_scale(&prev_poses, &curr_poses).map_err(|e| e.at_stage(k, "scale"))?;
                    }
                    for p in &mut curr_poses {
                        p.translation *= report.scale;
                    }
                    let h = pairwise_registration(&prev_poses, &curr_poses).map_err(|e| e.at_stage(k, "register"))?;
                    let st = *self.chain.push(&h, report.scale).map_err(|e| e.at_stage(k, "register"))?;
                    (apply_to_submap(&sp, &st), st)
                }
                Strategy::Sim3 => {
                    let corr = overlap_correspondences(prev, &sp);
                    let s = sim3_point_align(&corr.src, &corr.dst, !self.cfg.metric_scale)
                        .map_err(|e| e.at_stage(k, "sim3"))?;
                    report.scale = s.scale;
                    let st = sim3_transform(k, &s);
                    (apply_to_submap(&sp, &st), st)
                }
                Strategy::Sl4 => {
                    let corr = overlap_correspondences(prev, &sp);
                    let h = match sl4_point_align(&corr.src, &corr.dst) {
                        Ok(h) => h,
                        Err(Error::DegenerateConfiguration(m)) => {
                            self.fail(k, "sl4", m);
                            return Ok(report);
                        }
                        Err(e) => return Err(e.at_stage(k, "sl4")),
                    };
                    match warp_submap_sl4(&sp, &h) {
                        Some(w) => (w, SubmapTransform::identity(k)),
                        None => {
                            self.fail(k, "sl4", "a camera center was sent to infinity".into());
                            return Ok(report);
                        }
                    }
                }
            }
        };

        if k > 0 && self.cfg.strategy == Strategy::Talo {
            let prev = self.state.submaps.last().expect("k > 0");
            report.tracking = self
                .state
                .pool
                .step(prev, &global, &self.cfg.tracker())
                .map_err(|e| e.at_stage(k, "track"))?;
            if self.cfg.streaming {
                let canonical = canonical_positions(&self.state.pool).map_err(|e| e.at_stage(k - 1, "aggregate"))?;
                report.interim_model = Some(
                    fit_submap_model(&self.state.pool, &canonical, k - 1, &self.cfg)
                        .map_err(|e| e.at_stage(k - 1, "deform"))?,
                );
            }
        }

        self.state.submaps.push(global);
        self.state.transforms.push(transform);
        self.last_raw = Some(sp);
        report.seconds = start.elapsed().as_secs_f64();
        self.state.seconds.push(report.seconds);
        log::debug!("submap {k}: scale {:.6}, tracks {:?}", report.scale, report.tracking);
        Ok(report)
    }

    /// Consolidation: fits every submap's deformation from all
    /// observations and applies it.
    pub fn finish(mut self) -> Result<Alignment> {
        if self.state.failure.is_some() || self.cfg.strategy != Strategy::Talo {
            return Ok(self.state);
        }
        let canonical = canonical_positions(&self.state.pool).map_err(|e| e.at_stage(0, "aggregate"))?;
        let mut models = Vec::with_capacity(self.state.submaps.len());
        for k in 0..self.state.submaps.len() {
            let model = fit_submap_model(&self.state.pool, &canonical, k, &self.cfg).map_err(|e| e.at_stage(k, "deform"))?;
            self.state.submaps[k] = deform(&self.state.submaps[k], &model);
            models.push(model);
        }
        self.state.models = models;
        Ok(self.state)
    }
}

/// Progress notifications of [`align_stream`].
#[derive(Clone, Debug)]
pub enum Progress<'a> {
    Loading(usize),
    Aligned(&'a StepReport),
}

/// Runs the online loop over a source.
pub fn align_stream(
    cfg: &PipelineConfig,
    source: &mut dyn SubmapSource,
    mut progress: impl FnMut(Progress<'_>),
) -> Result<Alignment> {
    let mut aligner = Aligner::new(cfg.clone())?;
    for k in 0..source.len() {
        progress(Progress::Loading(k));
        let sp = source.load(k).map_err(|e| e.at_stage(k, "load"))?;
        let report = aligner.push(sp)?;
        progress(Progress::Aligned(&report));
        if aligner.failure().is_some() {
            break;
        }
    }
    aligner.finish()
}

/// Scores an alignment; cameras beyond those aligned are ignored.
pub fn evaluate(alignment: &Alignment, gt: &GroundTruth, cfg: &PipelineConfig) -> Result<AlignmentReport> {
    let pred = alignment.trajectories();
    if pred.is_empty() || pred.len() > gt.trajectories.len() {
        return Err(Error::LengthMismatch {
            what: "cameras in prediction vs ground truth",
            left: pred.len(),
            right: gt.trajectories.len(),
        });
    }
    let gt_traj = &gt.trajectories[..pred.len()];
    let (s, ate, rte, rre) = trajectory_metrics(&pred, gt_traj, cfg.rte_gap)?;
    let cloud: Vec<Vec3> = alignment.cloud().points.iter().map(|p| s.transform_point(p)).collect();
    let geo = geometry_metrics(&cloud, &gt.cloud, cfg.clamp)?;
    Ok(AlignmentReport::new(ate, rte, rre, geo, gt.length()))
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub alignment: Alignment,
    pub report: Option<AlignmentReport>,
}

impl RunOutput {
    /// Recorded failure or catastrophic drift.
    pub fn failed(&self) -> bool {
        self.alignment.failure.is_some() || self.report.is_some_and(|r| r.failed)
    }
}

/// Loads or synthesizes the stream, aligns, evaluates when ground truth is
/// available, and writes artifacts when `cfg.output` is set.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let (alignment, gt) = match &cfg.input {
        Some(dir) => {
            let mut source = BundleSource::open(dir)?;
            let gt = if dir.join(GROUND_TRUTH_FILE).is_file() {
                Some(GroundTruth::load(dir)?)
            } else {
                None
            };
            (align_stream(cfg, &mut source, |_| {})?, gt)
        }
        None => {
            let scene = generate_scene_with(&cfg.scene_config())?;
            let stream = cfg.stream_config(&scene)?;
            let mut source = SynthSource::new(&scene, stream, cfg.synth.distortion.clone())?;
            let alignment = align_stream(cfg, &mut source, |_| {})?;
            let cameras = cfg.cameras.unwrap_or(scene.n_cameras());
            (alignment, Some(GroundTruth::from_scene_cameras(&scene, cameras)))
        }
    };
    let report = match (&gt, &alignment.failure) {
        (Some(gt), None) => Some(evaluate(&alignment, gt, cfg)?),
        _ => None,
    };
    let out = RunOutput { alignment, report };
    if let Some(dir) = &cfg.output {
        write_artifacts(dir, cfg, &out)?;
    }
    Ok(out)
}

pub const REPORT_FILE: &str = "report.csv";
pub const FAILURE_FILE: &str = "failure.json";
pub const CLOUD_FILE: &str = "cloud.ply";
pub const CONTROL_POINTS_FILE: &str = "control_points.csv";

pub fn trajectory_file(c: usize) -> String {
    format!("trajectory_cam{c}.txt")
}

/// Writes the report, trajectories, cloud and control points. A recorded
/// failure writes only `failure.json`.
pub fn write_artifacts(dir: &Path, cfg: &PipelineConfig, out: &RunOutput) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: &str, text: String| {
        let path = dir.join(name);
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    };
    if let Some(f) = &out.alignment.failure {
        let text = serde_json::to_string_pretty(f).map_err(|e| Error::Json {
            path: dir.join(FAILURE_FILE),
            source: e,
        })?;
        return write(FAILURE_FILE, text);
    }
    if let Some(r) = &out.report {
        write(
            REPORT_FILE,
            format!("{}\n{}\n", AlignmentReport::csv_header(), r.csv_row(cfg.strategy.name())),
        )?;
    }
    let rate = cfg.synth.scene.frame_rate;
    for (c, traj) in out.alignment.trajectories().iter().enumerate() {
        export_trajectory(traj, rate, &dir.join(trajectory_file(c)))?;
    }
    export_ply(&out.alignment.cloud(), &dir.join(CLOUD_FILE))?;
    if cfg.strategy == Strategy::Talo {
        let path = dir.join(CONTROL_POINTS_FILE);
        let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        out.alignment
            .pool
            .write_csv(&mut BufWriter::new(file))
            .map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}
