//! Two single-camera submaps whose intrinsics disagree: a similarity cannot
//! explain the overlap, a 3D homography can.

use submap_align::baselines::{overlap_correspondences, sim3_point_align, sl4_point_align, transfer_residual};
use submap_align::geometry::alignment_rmse;
use submap_align::prediction::{segment_stream, StreamConfig};
use submap_align::synth::{generate_scene, render_submap, DistortionSpec, Regime};

fn main() -> submap_align::Result<()> {
    let scene = generate_scene(5, 2000, 50.0, 4, 1)?;
    let stream = StreamConfig::new(4, 1, 2, 1)?;
    let windows = segment_stream(&stream)?;
    let spec = DistortionSpec::with_regime(Regime::Case2 {
        focal_scales: vec![1.0, 1.05],
        principal_shifts: Vec::new(),
        depth_scales: Vec::new(),
    });
    let prev = render_submap(&scene, &windows[0], &spec, 0, 0)?;
    let curr = render_submap(&scene, &windows[1], &spec, 1, stream.overlap)?;
    let corr = overlap_correspondences(&prev, &curr);
    println!("{} overlap correspondences", corr.len());

    let s = sim3_point_align(&corr.src, &corr.dst, true)?;
    println!("Sim(3): scale {:.4}, residual {:.3e} m", s.scale, alignment_rmse(&s, &corr.src, &corr.dst));

    let h = sl4_point_align(&corr.src, &corr.dst)?;
    let (rms, lost) = transfer_residual(&h, &corr.src, &corr.dst);
    println!("SL(4):  residual {rms:.3e} m, {lost} points sent to infinity");
    println!("H =\n{:.6}", h.h);
    Ok(())
}
