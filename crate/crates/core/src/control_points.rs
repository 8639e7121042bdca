//! Control points: voxel-sampled world locations tracked across submaps
//! through shared pixels of the overlap frames.

use std::collections::{BTreeMap, HashSet};
use std::io::Write;

use crate::error::{Error, Result};
use crate::geometry::{project, Vec3};
use crate::prediction::SubmapPrediction;

pub type VoxelIndex = [i64; 3];

/// Uniform grid anchored at the componentwise minimum of a point set.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VoxelGrid {
    pub origin: Vec3,
    pub cell: f64,
}

impl VoxelGrid {
    pub fn fit<'a>(points: impl IntoIterator<Item = &'a Vec3>, cell: f64) -> Option<Self> {
        let mut it = points.into_iter().peekable();
        it.peek()?;
        let origin = it.fold(Vec3::repeat(f64::INFINITY), |m, p| m.inf(p));
        Some(Self { origin, cell })
    }

    pub fn index(&self, p: &Vec3) -> VoxelIndex {
        let q = (p - self.origin) / self.cell;
        [q.x.floor() as i64, q.y.floor() as i64, q.z.floor() as i64]
    }

    pub fn center(&self, v: &VoxelIndex) -> Vec3 {
        self.origin + (Vec3::new(v[0] as f64, v[1] as f64, v[2] as f64) + Vec3::repeat(0.5)) * self.cell
    }
}

/// Image location a control-point observation was read from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Anchor {
    pub t: usize,
    pub c: usize,
    pub u: usize,
    pub v: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Observation {
    /// Global frame.
    pub point: Vec3,
    pub anchor: Anchor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ControlPoint {
    pub id: usize,
    /// Keyed by submap index.
    pub observations: BTreeMap<usize, Observation>,
    pub alive: bool,
}

impl ControlPoint {
    pub fn points(&self) -> Vec<Vec3> {
        self.observations.values().map(|o| o.point).collect()
    }

    pub fn latest_submap(&self) -> Option<usize> {
        self.observations.keys().next_back().copied()
    }
}

/// One representative per occupied, unblocked voxel: the input point closest
/// to the voxel center (lowest input index on ties). Returns input indices
/// ordered by voxel index.
pub fn voxel_select(grid: &VoxelGrid, points: &[Vec3], blocked: &HashSet<VoxelIndex>) -> Vec<usize> {
    let mut best: BTreeMap<VoxelIndex, (usize, f64)> = BTreeMap::new();
    for (i, p) in points.iter().enumerate() {
        let v = grid.index(p);
        if blocked.contains(&v) {
            continue;
        }
        let d = (p - grid.center(&v)).norm_squared();
        best.entry(v)
            .and_modify(|e| {
                if d < e.1 {
                    *e = (i, d);
                }
            })
            .or_insert((i, d));
    }
    best.into_values().map(|(i, _)| i).collect()
}

/// [`voxel_select`] on a grid fitted to `points`.
pub fn voxel_generate(points: &[Vec3], cell: f64, blocked: &HashSet<VoxelIndex>) -> Vec<usize> {
    match VoxelGrid::fit(points, cell) {
        Some(grid) => voxel_select(&grid, points, blocked),
        None => Vec::new(),
    }
}

/// Parameters of the pixel-bridged tracker.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrackerParams {
    /// Voxel size as a fraction of the current submap's radius.
    pub voxel_ratio: f64,
    /// Propagation gate as a multiple of the voxel size.
    pub gate_ratio: f64,
}

impl Default for TrackerParams {
    fn default() -> Self {
        Self {
            voxel_ratio: 0.05,
            gate_ratio: 2.0,
        }
    }
}

/// The global control-point pool, owned by the pipeline loop.
#[derive(Clone, Debug, Default)]
pub struct ControlPool {
    pub points: Vec<ControlPoint>,
}

/// Summary of one tracking step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TrackStats {
    pub propagated: usize,
    pub terminated: usize,
    pub seeded: usize,
}

impl ControlPool {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Control points with an observation in submap `k`, as
    /// `(pool position, observation)`.
    pub fn observed_in(&self, k: usize) -> Vec<(usize, Observation)> {
        self.points
            .iter()
            .enumerate()
            .filter_map(|(i, cp)| cp.observations.get(&k).map(|o| (i, *o)))
            .collect()
    }

    /// Advances the pool onto `curr`: live tracks in `prev` are propagated
    /// through the shared frames, then new control points are seeded in
    /// voxels the propagated tracks leave free. Both submaps must already be
    /// in the global frame.
    pub fn step(&mut self, prev: &SubmapPrediction, curr: &SubmapPrediction, params: &TrackerParams) -> Result<TrackStats> {
        let overlap = curr.overlap_timestamps();
        if overlap.is_empty() {
            return Err(Error::NoOverlap);
        }
        let cell = params.voxel_ratio * curr.radius();
        if !(cell > 0.0) {
            return Err(Error::DegenerateConfiguration(format!(
                "submap {} has no spatial extent for voxelization",
                curr.index
            )));
        }
        let gate = params.gate_ratio * cell;

        let mut stats = TrackStats::default();
        let mut carried = Vec::new();
        for cp in self.points.iter_mut().filter(|cp| cp.alive && cp.observations.contains_key(&prev.index)) {
            if propagate(cp, prev, curr, &overlap, gate) {
                stats.propagated += 1;
                carried.push(cp.observations[&prev.index].point);
            } else {
                stats.terminated += 1;
            }
        }
        let new = seed_overlap_controls(prev, curr, &carried, cell);
        stats.seeded = new.len();
        let first_id = self.points.len();
        self.points.extend(new.into_iter().enumerate().map(|(i, mut cp)| {
            cp.id = first_id + i;
            cp
        }));
        Ok(stats)
    }

    /// One CSV row per observation: `id,k,x,y,z,t,c,u,v`.
    pub fn write_csv(&self, out: &mut impl Write) -> std::io::Result<()> {
        writeln!(out, "id,k,x,y,z,t,c,u,v")?;
        for cp in &self.points {
            for (k, o) in &cp.observations {
                let a = o.anchor;
                writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{}",
                    cp.id, k, o.point.x, o.point.y, o.point.z, a.t, a.c, a.u, a.v
                )?;
            }
        }
        Ok(())
    }
}

/// Seeds control points from the previous submap's valid overlap points.
/// Voxels containing any of `carried` (previous-submap observations of
/// tracks that were just propagated) are blocked. Each new point gets its
/// previous-submap observation and the current submap's point at the same
/// pixel; candidates whose pixel is masked out in `curr` are skipped.
/// Returned ids are zero-based placeholders.
pub fn seed_overlap_controls(
    prev: &SubmapPrediction,
    curr: &SubmapPrediction,
    carried: &[Vec3],
    cell: f64,
) -> Vec<ControlPoint> {
    let overlap = curr.overlap_timestamps();
    let mut cands: Vec<Vec3> = Vec::new();
    let mut anchors: Vec<Anchor> = Vec::new();
    for f in prev.frames.iter().filter(|f| overlap.contains(&f.t)) {
        let Some(g) = curr.frame(f.t, f.c) else { continue };
        for (u, v, p) in f.valid_points() {
            if g.is_valid(u, v) {
                cands.push(p);
                anchors.push(Anchor { t: f.t, c: f.c, u, v });
            }
        }
    }
    let Some(grid) = VoxelGrid::fit(&cands, cell) else {
        return Vec::new();
    };
    let blocked: HashSet<VoxelIndex> = carried.iter().map(|p| grid.index(p)).collect();
    voxel_select(&grid, &cands, &blocked)
        .into_iter()
        .map(|i| {
            let a = anchors[i];
            let next = curr.frame(a.t, a.c).expect("checked above").point(a.u, a.v);
            let mut observations = BTreeMap::new();
            observations.insert(prev.index, Observation { point: cands[i], anchor: a });
            observations.insert(curr.index, Observation { point: next, anchor: a });
            ControlPoint {
                id: 0,
                observations,
                alive: true,
            }
        })
        .collect()
}

/// Carries a track from submap `from` into `next` through the images of
/// the shared `overlap` timestamps. The candidate pixel with the smallest
/// pointmap-consistency error below `gate` wins (ties go to the lowest
/// `(t, c)`); the track dies when no image qualifies. The new observation
/// is `next`'s point at that pixel shifted by the track's offset from
/// `from`'s point there. Returns whether the track survived.
pub fn propagate(
    cp: &mut ControlPoint,
    from: &SubmapPrediction,
    next: &SubmapPrediction,
    overlap: &[usize],
    gate: f64,
) -> bool {
    let Some(obs) = cp.observations.get(&from.index).copied() else {
        cp.alive = false;
        return false;
    };
    if !cp.alive {
        return false;
    }
    let mut best: Option<(f64, Anchor)> = None;
    for f in from.frames.iter().filter(|f| overlap.contains(&f.t)) {
        let Some(g) = next.frame(f.t, f.c) else { continue };
        let proj = project(&obs.point, &f.pose, &f.intrinsics);
        if !proj.in_front() {
            continue;
        }
        let Some((u, v)) = f.intrinsics.round_in_bounds(&proj.pixel) else {
            continue;
        };
        if !f.is_valid(u, v) || !g.is_valid(u, v) {
            continue;
        }
        let err = (obs.point - f.point(u, v)).norm();
        if err < gate && best.is_none_or(|(e, _)| err < e) {
            best = Some((err, Anchor { t: f.t, c: f.c, u, v }));
        }
    }
    match best {
        Some((_, a)) => {
            // The rounded pixel samples a neighbouring surface point; carry
            // the track's offset from it so consistent submaps reproduce the
            // same location exactly.
            let offset = obs.point - from.frame(a.t, a.c).expect("iterated above").point(a.u, a.v);
            let point = next.frame(a.t, a.c).expect("checked above").point(a.u, a.v) + offset;
            cp.observations.insert(next.index, Observation { point, anchor: a });
            true
        }
        None => {
            cp.alive = false;
            false
        }
    }
}
