#![allow(dead_code)]

use submap_align::geometry::{Pose, Vec3};
use submap_align::prediction::{segment_stream, StreamConfig, SubmapPrediction};
use submap_align::registration::{apply_to_submap, estimate_inter_submap_scale, pairwise_registration, Chain};
use submap_align::synth::{render_submap, DistortionSpec, SyntheticScene};

pub fn rms(a: &[Vec3], b: &[Vec3]) -> f64 {
    (a.iter().zip(b).map(|(x, y)| (x - y).norm_squared()).sum::<f64>() / a.len() as f64).sqrt()
}

/// Renders a stream and places each submap in the first submap's frame by
/// pose registration.
pub fn registered_stream(scene: &SyntheticScene, stream: &StreamConfig, spec: &DistortionSpec) -> Vec<SubmapPrediction> {
    let mut chain = Chain::new();
    let mut raw: Vec<SubmapPrediction> = Vec::new();
    let mut out = Vec::new();
    for (k, ts) in segment_stream(stream).unwrap().iter().enumerate() {
        let sp = render_submap(scene, ts, spec, k, if k == 0 { 0 } else { stream.overlap }).unwrap();
        let st = if k == 0 {
            *chain.push(&Pose::identity(), 1.0).unwrap()
        } else {
            let shared = sp.overlap_timestamps();
            let prev = raw[k - 1].reference_poses(&shared).unwrap();
            let mut curr = sp.reference_poses(&shared).unwrap();
            let r = estimate_inter_submap_scale(&prev, &curr).unwrap();
            for p in &mut curr {
                p.translation *= r;
            }
            *chain.push(&pairwise_registration(&prev, &curr).unwrap(), r).unwrap()
        };
        out.push(apply_to_submap(&sp, &st));
        raw.push(sp);
    }
    out
}

/// Same timestamps rendered as `count` consecutive submaps: a camera rig
/// that does not move between submaps.
pub fn static_submaps(scene: &SyntheticScene, ts: &[usize], spec: &DistortionSpec, count: usize) -> Vec<SubmapPrediction> {
    (0..count)
        .map(|k| render_submap(scene, ts, spec, k, if k == 0 { 0 } else { ts.len() }).unwrap())
        .collect()
}

/// Exhaustive voxel representative selection: every occupied voxel is
/// found by flooring each point, then every point is scanned for the one
/// nearest that voxel's center.
pub fn oracle_voxel(points: &[Vec3], cell: f64, blocked: &[[i64; 3]]) -> Vec<usize> {
    if points.is_empty() {
        return Vec::new();
    }
    let mut origin = [f64::INFINITY; 3];
    for p in points {
        for d in 0..3 {
            if p[d] < origin[d] {
                origin[d] = p[d];
            }
        }
    }
    let index = |p: &Vec3| -> [i64; 3] {
        let mut v = [0i64; 3];
        for d in 0..3 {
            v[d] = ((p[d] - origin[d]) / cell).floor() as i64;
        }
        v
    };
    let mut voxels: Vec<[i64; 3]> = points.iter().map(index).filter(|v| !blocked.contains(v)).collect();
    voxels.sort();
    voxels.dedup();
    voxels
        .iter()
        .map(|v| {
            let center = Vec3::new(
                origin[0] + (v[0] as f64 + 0.5) * cell,
                origin[1] + (v[1] as f64 + 0.5) * cell,
                origin[2] + (v[2] as f64 + 0.5) * cell,
            );
            let mut best = (usize::MAX, f64::INFINITY);
            for (i, p) in points.iter().enumerate() {
                if index(p) != *v {
                    continue;
                }
                let d = (p - center).norm_squared();
                if d < best.1 {
                    best = (i, d);
                }
            }
            best.0
        })
        .collect()
}

/// Accuracy, completeness and Chamfer by scanning every pair.
pub fn oracle_geometry(pred: &[Vec3], gt: &[Vec3], clamp: f64) -> (f64, f64, f64) {
    let one_way = |from: &[Vec3], to: &[Vec3]| {
        let mut sum = 0.0;
        for p in from {
            let mut best = f64::INFINITY;
            for q in to {
                let d = (p - q).norm_squared();
                if d < best {
                    best = d;
                }
            }
            sum += best.sqrt().min(clamp);
        }
        sum / from.len() as f64
    };
    let acc = one_way(pred, gt);
    let comp = one_way(gt, pred);
    (acc, comp, (acc + comp) / 2.0)
}

/// Angle (degrees) about `axis` minimizing the chordal cost to the given
/// rotations, searched on a 0.01° grid.
pub fn oracle_chordal_angle(axis: &Vec3, rotations: &[submap_align::geometry::Mat3]) -> f64 {
    let mut best = (0.0, f64::INFINITY);
    for i in -18000..18000 {
        let deg = i as f64 * 0.01;
        let r = submap_align::geometry::rot_axis_angle(axis, deg.to_radians());
        let cost: f64 = rotations.iter().map(|ri| (r - ri).norm_squared()).sum();
        if cost < best.1 {
            best = (deg, cost);
        }
    }
    best.0
}

/// Neighbourhood-smoothed targets evaluated literally: for each point, sort
/// all points by distance, keep the `q` nearest (itself included), weight
/// their displacements by `exp(−d²/2σ²)` and normalize. `σ` is the median
/// distance to the `q`-th nearest neighbour; a zero `σ` keeps only
/// coincident neighbours.
pub fn oracle_smoothing(points: &[Vec3], canonical: &[Vec3], q: usize) -> Vec<Vec3> {
    let n = points.len();
    let mut neighbours = Vec::with_capacity(n);
    for i in 0..n {
        let mut all: Vec<(f64, usize)> = (0..n).map(|j| ((points[i] - points[j]).norm(), j)).collect();
        all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        all.truncate(q);
        neighbours.push(all);
    }
    let mut far: Vec<f64> = neighbours.iter().map(|nb| nb[q - 1].0).collect();
    far.sort_by(f64::total_cmp);
    let sigma = if n % 2 == 1 {
        far[n / 2]
    } else {
        (far[n / 2 - 1] + far[n / 2]) / 2.0
    };
    (0..n)
        .map(|i| {
            let mut num = Vec3::zeros();
            let mut den = 0.0;
            for &(d, j) in &neighbours[i] {
                let w = if sigma > 0.0 {
                    (-(d * d) / (2.0 * sigma * sigma)).exp()
                } else if d == 0.0 {
                    1.0
                } else {
                    0.0
                };
                num += w * (canonical[j] - points[j]);
                den += w;
            }
            points[i] + num / den
        })
        .collect()
}
