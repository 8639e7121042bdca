//! Pose-only registration of two overlapping submaps whose depth scales
//! disagree by 1.7×, then the same pair chained into the global frame.

use submap_align::geometry::{rotation_angle, Pose};
use submap_align::prediction::{segment_stream, StreamConfig};
use submap_align::registration::{estimate_inter_submap_scale, pairwise_registration, Chain};
use submap_align::synth::{generate_scene, render_submap, DistortionSpec, Regime};

fn main() -> submap_align::Result<()> {
    let scene = generate_scene(3, 2000, 50.0, 8, 3)?;
    let stream = StreamConfig::new(8, 3, 4, 2)?;
    let windows = segment_stream(&stream)?;
    let spec = DistortionSpec::with_regime(Regime::Case1 {
        scales: vec![1.0, 1.7, 1.0],
    })
    .with_jitter(10.0, 2.0, 3);

    let prev = render_submap(&scene, &windows[0], &spec, 0, 0)?;
    let curr = render_submap(&scene, &windows[1], &spec, 1, stream.overlap)?;
    let shared = curr.overlap_timestamps();
    println!("submap 1 shares frames {shared:?} with submap 0");

    let prev_poses = prev.reference_poses(&shared)?;
    let curr_poses = curr.reference_poses(&shared)?;
    let r = estimate_inter_submap_scale(&prev_poses, &curr_poses)?;
    println!("scale ratio {r:.9} (injected {:.9})", 1.0 / 1.7);

    let rescaled: Vec<_> = curr_poses
        .iter()
        .map(|p| {
            let mut p = *p;
            p.translation *= r;
            p
        })
        .collect();
    let h = pairwise_registration(&prev_poses, &rescaled)?;
    println!(
        "relative transform: {:.3} deg, {:.3} m",
        rotation_angle(&h.rotation).to_degrees(),
        h.translation.norm()
    );

    let mut chain = Chain::new();
    chain.push(&Pose::identity(), 1.0)?;
    let st = *chain.push(&h, r)?;
    let mut worst: f64 = 0.0;
    for f in curr.frames.iter().filter(|f| shared.contains(&f.t)) {
        let Some(g) = prev.frame(f.t, f.c) else { continue };
        for (u, v, p) in f.valid_points() {
            if g.is_valid(u, v) {
                worst = worst.max((st.apply_point(&p) - g.point(u, v)).norm());
            }
        }
    }
    println!("largest overlap disagreement after registration: {worst:.3e} m");
    Ok(())
}
