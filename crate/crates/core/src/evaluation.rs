//! Trajectory and reconstruction metrics after similarity gauge alignment.

use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{umeyama_align, Pose, Sim3, Vec3};
use crate::spatial::KdTree;

/// ATE above this fraction of the ground-truth path length marks a run as
/// a catastrophic failure.
pub const FAILURE_FRACTION: f64 = 0.05;
pub const DEFAULT_CLAMP: f64 = 10.0;

fn check_lengths(pred: usize, gt: usize, needed: usize) -> Result<()> {
    if pred != gt {
        return Err(Error::LengthMismatch {
            what: "trajectories",
            left: pred,
            right: gt,
        });
    }
    if pred < needed {
        return Err(Error::InsufficientFrames { needed, got: pred });
    }
    Ok(())
}

fn rms(sum_sq: f64, n: usize) -> f64 {
    (sum_sq / n as f64).sqrt()
}

/// Similarity mapping predicted camera centers onto ground truth, and the
/// RMS of the remaining center distances.
pub fn align_and_ate(pred: &[Pose], gt: &[Pose]) -> Result<(Sim3, f64)> {
    check_lengths(pred.len(), gt.len(), 3)?;
    let src: Vec<Vec3> = pred.iter().map(Pose::center).collect();
    let dst: Vec<Vec3> = gt.iter().map(Pose::center).collect();
    let s = umeyama_align(&src, &dst, true)?;
    let sum: f64 = src.iter().zip(&dst).map(|(p, q)| (s.transform_point(p) - q).norm_squared()).sum();
    Ok((s, rms(sum, src.len())))
}

/// Squared translation and rotation-angle (degrees) errors of the relative
/// motions over gap `gap`, with predicted translations multiplied by `scale`.
fn relative_errors<'a>(pred: &'a [Pose], gt: &'a [Pose], gap: usize, scale: f64) -> impl Iterator<Item = (f64, f64)> + 'a {
    (0..pred.len().saturating_sub(gap)).map(move |t| {
        let rel = |a: &Pose, b: &Pose| a.inverse().compose(b);
        let mut dp = rel(&pred[t], &pred[t + gap]);
        dp.translation *= scale;
        let dg = rel(&gt[t], &gt[t + gap]);
        let e = dg.inverse().compose(&dp);
        (e.translation.norm_squared(), e.rotation_angle().to_degrees().powi(2))
    })
}

/// RTE (meters) and RRE (degrees) RMSE. Predicted translations are first
/// brought to metric scale by the similarity fitted over camera centers.
pub fn rte_rre(pred: &[Pose], gt: &[Pose], gap: usize) -> Result<(f64, f64)> {
    let gap = gap.max(1);
    check_lengths(pred.len(), gt.len(), (gap + 1).max(3))?;
    let (s, _) = align_and_ate(pred, gt)?;
    let (mut st, mut sr, mut n) = (0.0, 0.0, 0);
    for (t, r) in relative_errors(pred, gt, gap, s.scale) {
        st += t;
        sr += r;
        n += 1;
    }
    Ok((rms(st, n), rms(sr, n)))
}

/// Trajectory metrics over a multi-camera rig: ATE over all cameras'
/// centers concatenated, RTE/RRE pooled over each camera's sequence.
pub fn trajectory_metrics(pred: &[Vec<Pose>], gt: &[Vec<Pose>], gap: usize) -> Result<(Sim3, f64, f64, f64)> {
    check_lengths(pred.len(), gt.len(), 1)?;
    let gap = gap.max(1);
    for (p, g) in pred.iter().zip(gt) {
        check_lengths(p.len(), g.len(), gap + 1)?;
    }
    let flat_p: Vec<Pose> = pred.iter().flatten().copied().collect();
    let flat_g: Vec<Pose> = gt.iter().flatten().copied().collect();
    let (s, ate) = align_and_ate(&flat_p, &flat_g)?;
    let (mut st, mut sr, mut n) = (0.0, 0.0, 0);
    for (p, g) in pred.iter().zip(gt) {
        for (t, r) in relative_errors(p, g, gap, s.scale) {
            st += t;
            sr += r;
            n += 1;
        }
    }
    Ok((s, ate, rms(st, n), rms(sr, n)))
}

/// Sum of consecutive center distances.
pub fn trajectory_length(poses: &[Pose]) -> f64 {
    poses.windows(2).map(|w| (w[1].center() - w[0].center()).norm()).sum()
}

fn mean_clamped_nn(from: &[Vec3], to: &KdTree, clamp: f64) -> f64 {
    let sum: f64 = from
        .iter()
        .map(|p| to.nearest_within(p, clamp * clamp).map_or(clamp, |(_, d2)| d2.sqrt().min(clamp)))
        .sum();
    sum / from.len() as f64
}

/// (accuracy, completeness, chamfer) with per-point distances clamped.
pub fn geometry_metrics(pred: &[Vec3], gt: &[Vec3], clamp: f64) -> Result<(f64, f64, f64)> {
    if pred.is_empty() {
        return Err(Error::EmptyInput("predicted cloud"));
    }
    if gt.is_empty() {
        return Err(Error::EmptyInput("ground-truth cloud"));
    }
    let acc = mean_clamped_nn(pred, &KdTree::build(gt), clamp);
    let comp = mean_clamped_nn(gt, &KdTree::build(pred), clamp);
    Ok((acc, comp, (acc + comp) / 2.0))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct AlignmentReport {
    pub ate_rmse: f64,
    pub rte_rmse: f64,
    pub rre_rmse: f64,
    pub accuracy: f64,
    pub completeness: f64,
    pub chamfer: f64,
    pub gt_length: f64,
    pub failed: bool,
}

pub const REPORT_COLUMNS: [&str; 9] = [
    "strategy",
    "ate_rmse",
    "rte_rmse",
    "rre_rmse",
    "accuracy",
    "completeness",
    "chamfer",
    "gt_length",
    "failed",
];

pub fn is_failure(ate_rmse: f64, gt_length: f64) -> bool {
    !(ate_rmse <= FAILURE_FRACTION * gt_length)
}

impl AlignmentReport {
    pub fn new(ate: f64, rte: f64, rre: f64, geometry: (f64, f64, f64), gt_length: f64) -> Self {
        Self {
            ate_rmse: ate,
            rte_rmse: rte,
            rre_rmse: rre,
            accuracy: geometry.0,
            completeness: geometry.1,
            chamfer: geometry.2,
            gt_length,
            failed: is_failure(ate, gt_length),
        }
    }

    pub fn csv_header() -> String {
        REPORT_COLUMNS.join(",")
    }

    pub fn csv_row(&self, strategy: &str) -> String {
        format!(
            "{strategy},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{}",
            self.ate_rmse,
            self.rte_rmse,
            self.rre_rmse,
            self.accuracy,
            self.completeness,
            self.chamfer,
            self.gt_length,
            self.failed
        )
    }
}

impl fmt::Display for AlignmentReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows = [
            ("ATE RMSE [m]", self.ate_rmse),
            ("RTE RMSE [m]", self.rte_rmse),
            ("RRE RMSE [deg]", self.rre_rmse),
            ("Accuracy [m]", self.accuracy),
            ("Completeness [m]", self.completeness),
            ("Chamfer [m]", self.chamfer),
            ("GT length [m]", self.gt_length),
        ];
        for (name, v) in rows {
            writeln!(f, "{name:<18} {v:>14.6e}")?;
        }
        write!(f, "{:<18} {:>14}", "Failed", self.failed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{rot_axis_angle, rot_z};

    fn path(n: usize) -> Vec<Pose> {
        (0..n)
            .map(|i| {
                let a = i as f64 * 0.3;
                Pose::new(rot_z(a), Vec3::new(5.0 * a.cos(), 5.0 * a.sin(), 0.1 * i as f64))
            })
            .collect()
    }

    #[test]
    fn identical_trajectories() {
        let gt = path(12);
        assert!(align_and_ate(&gt, &gt).unwrap().1 < 1e-12);
        let (rte, rre) = rte_rre(&gt, &gt, 1).unwrap();
        assert!(rte < 1e-12 && rre < 1e-6);
    }

    #[test]
    fn similarity_gauge_invariance() {
        let gt = path(15);
        let s = Sim3::new(3.5, rot_axis_angle(&Vec3::new(1.0, 2.0, 3.0).normalize(), 1.1), Vec3::new(4.0, -2.0, 9.0));
        let pred: Vec<Pose> = gt.iter().map(|p| s.transform_pose(p)).collect();
        assert!(align_and_ate(&pred, &gt).unwrap().1 < 1e-9);
        let (rte, _) = rte_rre(&pred, &gt, 1).unwrap();
        assert!(rte < 1e-9);
    }

    #[test]
    fn global_translation_keeps_relative_errors() {
        let gt = path(10);
        let pred: Vec<Pose> = gt
            .iter()
            .map(|p| Pose::new(p.rotation, p.translation + Vec3::new(7.0, 1.0, -2.0)))
            .collect();
        let (rte, rre) = rte_rre(&pred, &gt, 1).unwrap();
        assert!(rte < 1e-9 && rre < 1e-6);
    }

    #[test]
    fn three_four_five() {
        let (a, c, ch) = geometry_metrics(&[Vec3::zeros()], &[Vec3::new(3.0, 4.0, 0.0)], 10.0).unwrap();
        assert_eq!((a, c, ch), (5.0, 5.0, 5.0));
    }

    #[test]
    fn far_point_clamped() {
        let gt = vec![Vec3::zeros(), Vec3::new(1.0, 0.0, 0.0)];
        let pred = vec![Vec3::zeros(), Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 100.0, 0.0)];
        let (a, c, _) = geometry_metrics(&pred, &gt, 10.0).unwrap();
        assert_eq!(a, 10.0 / 3.0);
        assert_eq!(c, 0.0);
        assert!(geometry_metrics(&[], &gt, 10.0).is_err());
    }

    #[test]
    fn failure_rule() {
        assert!(!is_failure(0.5, 10.0));
        assert!(is_failure(0.51, 10.0));
        assert!(is_failure(f64::NAN, 10.0));
        let r = AlignmentReport::new(1.0, 0.0, 0.0, (1.0, 3.0, 2.0), 100.0);
        assert_eq!(r.chamfer, (r.accuracy + r.completeness) / 2.0);
        assert_eq!(r.csv_row("talo").split(',').count(), REPORT_COLUMNS.len());
    }
}
