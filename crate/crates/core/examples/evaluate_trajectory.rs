//! Scores a drifting trajectory against ground truth and writes both in the
//! text trajectory format.

use submap_align::evaluation::{align_and_ate, geometry_metrics, rte_rre, trajectory_length, AlignmentReport};
use submap_align::export::{export_trajectory, read_trajectory};
use submap_align::geometry::{rot_z, Pose, Sim3, Vec3};

fn main() -> submap_align::Result<()> {
    let gt: Vec<Pose> = (0..60)
        .map(|i| {
            let a = i as f64 * 0.05;
            Pose::new(rot_z(a), Vec3::new(20.0 * a.sin(), 20.0 * (1.0 - a.cos()), 1.5))
        })
        .collect();
    // Arbitrary gauge plus a slow heading drift.
    let gauge = Sim3::new(0.3, rot_z(1.0), Vec3::new(5.0, -2.0, 0.0));
    let pred: Vec<Pose> = gt
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let drift = Pose::from_rotation(rot_z(i as f64 * 2e-4));
            gauge.transform_pose(&drift.compose(p))
        })
        .collect();

    let (sim, ate) = align_and_ate(&pred, &gt)?;
    let (rte, rre) = rte_rre(&pred, &gt, 1)?;
    println!("recovered gauge scale {:.4}", sim.scale);

    let gt_cloud: Vec<Vec3> = gt.iter().map(|p| p.transform_point(&Vec3::new(0.0, 0.0, 5.0))).collect();
    let pred_cloud: Vec<Vec3> = pred
        .iter()
        .map(|p| sim.transform_point(&p.transform_point(&Vec3::new(0.0, 0.0, 5.0 * 0.3))))
        .collect();
    let geo = geometry_metrics(&pred_cloud, &gt_cloud, 10.0)?;
    println!("{}", AlignmentReport::new(ate, rte, rre, geo, trajectory_length(&gt)));

    let dir = std::env::temp_dir();
    let path = dir.join("evaluate_trajectory_pred.txt");
    export_trajectory(&pred, 2.0, &path)?;
    let back = read_trajectory(&path)?;
    println!("wrote {} rows to {}, last stamp {:.1} s", back.len(), path.display(), back[back.len() - 1].0);
    Ok(())
}
