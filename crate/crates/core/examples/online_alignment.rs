//! Streams submaps through the aligner one at a time, reporting progress
//! and refreshed deformations as they become available.

use submap_align::pipeline::{align_stream, evaluate, GroundTruth, PipelineConfig, Progress, SynthSource};
use submap_align::synth::{generate_scene_with, DistortionSpec};

fn main() -> submap_align::Result<()> {
    let cfg = PipelineConfig {
        streaming: true,
        ..PipelineConfig::default()
    };
    let scene = generate_scene_with(&cfg.scene_config())?;
    let stream = cfg.stream_config(&scene)?;
    let spec = DistortionSpec::random_wave(0, stream.submap_count(), 0.05, std::f64::consts::PI).with_jitter(5.0, 1.0, 0);
    let mut source = SynthSource::new(&scene, stream, spec)?;

    let alignment = align_stream(&cfg, &mut source, |p| match p {
        Progress::Loading(k) => eprint!("submap {k}: "),
        Progress::Aligned(step) => eprintln!(
            "scale {:.4}, {} tracked, {} new{} ({:.0} ms)",
            step.scale,
            step.tracking.propagated,
            step.tracking.seeded,
            step.interim_model
                .as_ref()
                .map(|m| format!(", refreshed submap {} with {} controls", step.index - 1, m.sources.len()))
                .unwrap_or_default(),
            step.seconds * 1e3
        ),
    })?;
    let report = evaluate(&alignment, &GroundTruth::from_scene(&scene), &cfg)?;
    println!("{report}");
    Ok(())
}
