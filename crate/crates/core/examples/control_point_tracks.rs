//! Tracks control points through a stream of registered submaps and prints
//! how long tracks survive.

use std::collections::BTreeMap;

use submap_align::control_points::{ControlPool, TrackerParams};
use submap_align::geometry::Pose;
use submap_align::pipeline::{PipelineConfig, SubmapSource, SynthSource};
use submap_align::prediction::SubmapPrediction;
use submap_align::registration::{apply_to_submap, estimate_inter_submap_scale, pairwise_registration, Chain};
use submap_align::synth::{generate_scene_with, DistortionSpec};

fn main() -> submap_align::Result<()> {
    let cfg = PipelineConfig::default();
    let scene = generate_scene_with(&cfg.scene_config())?;
    let stream = cfg.stream_config(&scene)?;
    let spec = DistortionSpec::none().with_jitter(5.0, 1.0, 0);
    let mut source = SynthSource::new(&scene, stream, spec)?;

    let mut chain = Chain::new();
    let mut pool = ControlPool::new();
    let mut raw_prev: Option<SubmapPrediction> = None;
    let mut placed_prev: Option<SubmapPrediction> = None;
    for k in 0..source.len() {
        let sp = source.load(k)?;
        let st = match &raw_prev {
            None => *chain.push(&Pose::identity(), 1.0)?,
            Some(raw) => {
                let shared = sp.overlap_timestamps();
                let prev_poses = raw.reference_poses(&shared)?;
                let mut curr_poses = sp.reference_poses(&shared)?;
                let r = estimate_inter_submap_scale(&prev_poses, &curr_poses)?;
                for p in &mut curr_poses {
                    p.translation *= r;
                }
                *chain.push(&pairwise_registration(&prev_poses, &curr_poses)?, r)?
            }
        };
        let global = apply_to_submap(&sp, &st);
        if let Some(prev) = &placed_prev {
            let s = pool.step(prev, &global, &TrackerParams::default())?;
            println!(
                "submap {k:>2}: {:>4} propagated, {:>4} terminated, {:>4} seeded, {:>5} in pool",
                s.propagated,
                s.terminated,
                s.seeded,
                pool.len()
            );
        }
        raw_prev = Some(sp);
        placed_prev = Some(global);
    }

    let mut lengths = BTreeMap::new();
    for cp in &pool.points {
        *lengths.entry(cp.observations.len()).or_insert(0usize) += 1;
    }
    println!("track length histogram (submaps observed: count)");
    for (len, n) in lengths {
        println!("  {len:>2}: {n}");
    }
    Ok(())
}
