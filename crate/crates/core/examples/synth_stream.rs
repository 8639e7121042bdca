//! Writes a distorted synthetic stream to disk in the bundle format.
//!
//! `cargo run --release --example synth_stream -- <out-dir> [seed]`

use std::path::PathBuf;

use submap_align::prediction::StreamConfig;
use submap_align::synth::{generate_scene_with, write_stream, DistortionSpec, SceneConfig};

fn main() -> submap_align::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = args.next().map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("synth_stream"));
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);

    let cfg = SceneConfig {
        width: 96,
        height: 72,
        ..SceneConfig::new(seed, 5000, 50.0, 24, 3)
    };
    let scene = generate_scene_with(&cfg)?;
    println!(
        "{} primitives, {} surface samples, path {:.1} m",
        scene.primitives.len(),
        scene.surface_points.len(),
        scene.path_length()
    );
    let valid: usize = (0..scene.n_cameras())
        .map(|c| scene.render_ideal(0, c).depth.iter().flatten().count())
        .sum();
    println!("first rig frame sees {valid} of {} pixels", 3 * cfg.width * cfg.height);

    let stream = StreamConfig::new(24, 3, 4, 2)?;
    let spec = DistortionSpec::random_wave(seed, stream.submap_count(), 0.05, std::f64::consts::PI).with_jitter(5.0, 1.0, seed);
    write_stream(&scene, &stream, &spec, &dir)?;
    println!("wrote {} submaps to {}", stream.submap_count(), dir.display());
    Ok(())
}
