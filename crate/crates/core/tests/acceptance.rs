//! Acceptance harness: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails.

mod common;

use std::collections::HashSet;
use std::fs;
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use submap_align::baselines::{overlap_correspondences, sim3_point_align, sl4_point_align, transfer_residual};
use submap_align::bundle::{load_bundle, save_bundle};
use submap_align::control_points::voxel_generate;
use submap_align::deformation::{aggregate_canonical, smooth_displacements, tps_apply, tps_fit, SmoothingParams};
use submap_align::evaluation::geometry_metrics;
use submap_align::export::{parse_ply, submap_color, write_ply, ColoredCloud};
use submap_align::geometry::{alignment_rmse, chordal_rotation_average, rot_axis_angle, rotation_angle, Mat3, Vec3};
use submap_align::pipeline::{align_stream, evaluate, run_pipeline, GroundTruth, PipelineConfig, Progress, Strategy, SynthSource};
use submap_align::prediction::{segment_stream, StreamConfig};
use submap_align::registration::{apply_to_submap, pairwise_registration, SubmapTransform};
use submap_align::synth::{generate_scene, generate_scene_with, render_submap, DistortionSpec, Regime, SceneConfig};

use common::{oracle_chordal_angle, oracle_geometry, oracle_smoothing, oracle_voxel, rms};

type Outcome = Result<String, String>;
type Criterion = (&'static str, &'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

const EXTENT: f64 = 50.0;
const ALPHA: f64 = 0.05;
const BETA: f64 = std::f64::consts::PI;

fn p1() -> Outcome {
    let mut cfg = PipelineConfig::default();
    cfg.synth.distortion = DistortionSpec::none().with_jitter(5.0, 1.0, 0);
    cfg.confidence_percentile = 0.0;
    let start = Instant::now();
    let out = run_pipeline(&cfg).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let r = out.report.ok_or("no report")?;
    let submaps = out.alignment.submaps.len();
    check(
        submaps == 10 && r.ate_rmse < 1e-9 * EXTENT && r.chamfer < 1e-9 * EXTENT && secs < 10.0,
        format!(
            "{submaps} submaps, ATE {:.2e} m, Chamfer {:.2e} m (bound {:.0e}), {secs:.2} s",
            r.ate_rmse,
            r.chamfer,
            1e-9 * EXTENT
        ),
    )
}

fn p2() -> Outcome {
    let mut worst_scale: f64 = 0.0;
    let mut worst_chamfer: f64 = 0.0;
    for seed in 0..3u64 {
        let mut cfg = PipelineConfig {
            seed,
            confidence_percentile: 0.0,
            ..PipelineConfig::default()
        };
        let submaps = cfg.synth.scene.n_frames.div_ceil(cfg.new_frames);
        let spec = DistortionSpec::random_scales(seed, submaps, 0.5, 2.0).with_jitter(5.0, 1.0, seed);
        let Regime::Case1 { scales } = &spec.regime else { unreachable!() };
        let scales = scales.clone();
        cfg.synth.distortion = spec;
        let scene = generate_scene_with(&cfg.scene_config()).map_err(|e| e.to_string())?;
        let gt = GroundTruth::from_scene(&scene);
        for strategy in [Strategy::Talo, Strategy::Sim3, Strategy::Sl4] {
            cfg.strategy = strategy;
            let mut src = SynthSource::new(&scene, cfg.stream_config(&scene).map_err(|e| e.to_string())?, cfg.synth.distortion.clone())
                .map_err(|e| e.to_string())?;
            let mut recovered = Vec::new();
            let al = align_stream(&cfg, &mut src, |p| {
                if let Progress::Aligned(step) = p {
                    recovered.push(step.scale);
                }
            })
            .map_err(|e| e.to_string())?;
            if let Some(f) = &al.failure {
                return Err(format!("{strategy} failed at submap {}: {}", f.submap, f.reason));
            }
            if strategy == Strategy::Talo {
                for k in 1..recovered.len() {
                    let truth = scales[k - 1] / scales[k];
                    worst_scale = worst_scale.max((recovered[k] - truth).abs() / truth);
                }
            }
            let r = evaluate(&al, &gt, &cfg).map_err(|e| e.to_string())?;
            worst_chamfer = worst_chamfer.max(r.chamfer);
        }
    }
    check(
        worst_scale < 1e-6 && worst_chamfer < 1e-6 * EXTENT,
        format!(
            "3 seeds: worst relative scale error {worst_scale:.2e}, worst Chamfer over talo/sim3/sl4 {worst_chamfer:.2e} m (bound {:.0e})",
            1e-6 * EXTENT
        ),
    )
}

fn p3() -> Outcome {
    let stream = StreamConfig::new(4, 1, 2, 1).map_err(|e| e.to_string())?;
    let windows = segment_stream(&stream).map_err(|e| e.to_string())?;
    let (mut worst_sl4, mut least_sim3) = (0.0f64, f64::INFINITY);
    for seed in 0..10u64 {
        let scene = generate_scene(seed, 2000, EXTENT, 4, 1).map_err(|e| e.to_string())?;
        let sign = if seed % 2 == 0 { 1.0 } else { -1.0 };
        let spec = DistortionSpec::with_regime(Regime::Case2 {
            focal_scales: vec![1.0, 1.0 + sign * 0.05],
            principal_shifts: Vec::new(),
            depth_scales: Vec::new(),
        });
        let prev = render_submap(&scene, &windows[0], &spec, 0, 0).map_err(|e| e.to_string())?;
        let curr = render_submap(&scene, &windows[1], &spec, 1, 1).map_err(|e| e.to_string())?;
        let c = overlap_correspondences(&prev, &curr);
        let h = sl4_point_align(&c.src, &c.dst).map_err(|e| e.to_string())?;
        let (r4, lost) = transfer_residual(&h, &c.src, &c.dst);
        if lost > 0 {
            return Err(format!("seed {seed}: {lost} points sent to infinity"));
        }
        let s = sim3_point_align(&c.src, &c.dst, true).map_err(|e| e.to_string())?;
        worst_sl4 = worst_sl4.max(r4);
        least_sim3 = least_sim3.min(alignment_rmse(&s, &c.src, &c.dst));
    }
    check(
        worst_sl4 < 1e-6 * EXTENT && least_sim3 > 1e-3 * EXTENT,
        format!("10 seeds, ±5% focal: worst SL(4) residual {worst_sl4:.2e} m, smallest Sim(3) residual {least_sim3:.2e} m"),
    )
}

fn p4() -> Outcome {
    let mut ratios = Vec::new();
    for seed in 0..10u64 {
        let scene = generate_scene_with(&SceneConfig {
            seed,
            n_frames: 8,
            ..SceneConfig::default()
        })
        .map_err(|e| e.to_string())?;
        let spec = DistortionSpec::random_wave(seed, 4, ALPHA, BETA);
        let a = render_submap(&scene, &[0, 1, 2, 3], &spec, 0, 0).map_err(|e| e.to_string())?;
        let b = render_submap(&scene, &[2, 3, 4, 5], &spec, 1, 2).map_err(|e| e.to_string())?;
        // Exact pose registration: what remains in the overlap is the
        // injected distortion alone.
        let h = pairwise_registration(
            &a.reference_poses(&[2, 3]).map_err(|e| e.to_string())?,
            &b.reference_poses(&[2, 3]).map_err(|e| e.to_string())?,
        )
        .map_err(|e| e.to_string())?;
        let placed = apply_to_submap(
            &b,
            &SubmapTransform {
                index: 1,
                scale_correction: 1.0,
                to_global: h,
            },
        );
        let c = overlap_correspondences(&a, &placed);
        let injected = rms(&c.src, &c.dst);
        let s = sim3_point_align(&c.src, &c.dst, true).map_err(|e| e.to_string())?;
        ratios.push(alignment_rmse(&s, &c.src, &c.dst) / injected);
    }
    let min = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    check(
        min >= 0.5,
        format!("alpha {ALPHA}, beta π: Sim(3) residual / injected RMS, min {min:.3} over 10 seeds ({ratios:.2?})"),
    )
}

fn p5() -> Outcome {
    let (mut talo, mut sim3) = (Vec::new(), Vec::new());
    let mut wins = 0;
    for seed in 0..10u64 {
        let mut cfg = PipelineConfig {
            seed,
            ..PipelineConfig::default()
        };
        cfg.synth.scene.n_frames = 60;
        let submaps = cfg.synth.scene.n_frames.div_ceil(cfg.new_frames);
        cfg.synth.distortion = DistortionSpec::random_wave(seed, submaps, ALPHA, BETA).with_jitter(5.0, 1.0, seed);
        let t = run_pipeline(&cfg).map_err(|e| e.to_string())?.report.ok_or("no report")?.chamfer;
        cfg.strategy = Strategy::Sim3;
        let s = run_pipeline(&cfg).map_err(|e| e.to_string())?.report.ok_or("no report")?.chamfer;
        if t < s {
            wins += 1;
        }
        talo.push(t);
        sim3.push(s);
    }
    let median = |v: &mut Vec<f64>| {
        v.sort_by(f64::total_cmp);
        (v[4] + v[5]) / 2.0
    };
    let (mt, ms) = (median(&mut talo), median(&mut sim3));
    check(
        wins >= 9 && mt <= 0.7 * ms,
        format!(
            "60-frame streams: TALO lower on {wins}/10 seeds, median Chamfer {mt:.4} vs {ms:.4} m (ratio {:.3}, bar 0.70)",
            mt / ms
        ),
    )
}

fn p6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut pt = || Vec3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
    let src: Vec<Vec3> = (0..20).map(|_| pt()).collect();
    let dst: Vec<Vec3> = (0..20).map(|_| pt()).collect();
    let held: Vec<Vec3> = (0..50).map(|_| pt()).collect();
    let ext = submap_align::deformation::extent(&src);

    let m0 = tps_fit(&src, &dst, 0.0).map_err(|e| e.to_string())?;
    let interp = tps_apply(&m0, &src).iter().zip(&dst).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);

    let a = rot_axis_angle(&Vec3::new(0.3, -1.0, 0.4).normalize(), 0.8) * 1.7 + Mat3::new(0.1, 0.0, 0.2, 0.0, -0.1, 0.0, 0.05, 0.0, 0.0);
    let t = Vec3::new(2.0, -1.0, 0.5);
    let aff = |p: &Vec3| a * p + t;
    let dst_aff: Vec<Vec3> = src.iter().map(aff).collect();
    let (mut aff_err, mut aff_w) = (0.0f64, 0.0f64);
    for lambda in [0.0, 1e-3, 1e-1, 10.0] {
        let m = tps_fit(&src, &dst_aff, lambda).map_err(|e| e.to_string())?;
        aff_w = aff_w.max(m.weight_norm());
        for (p, q) in held.iter().zip(tps_apply(&m, &held)) {
            aff_err = aff_err.max((aff(p) - q).norm());
        }
    }

    let mut residuals = Vec::new();
    for lambda in [0.0, 1e-3, 1e-1, 10.0] {
        let m = tps_fit(&src, &dst, lambda).map_err(|e| e.to_string())?;
        residuals.push(tps_apply(&m, &src).iter().zip(&dst).map(|(a, b)| (a - b).norm_squared()).sum::<f64>());
    }
    let monotone = residuals.windows(2).all(|w| w[1] >= w[0]);
    let shown: Vec<String> = residuals.iter().map(|r| format!("{r:.2e}")).collect();
    check(
        interp < 1e-6 * ext && aff_err < 1e-6 && aff_w < 1e-8 && monotone,
        format!(
            "interpolation {interp:.1e} m (extent {ext:.1}), affine held-out {aff_err:.1e} m with |W| {aff_w:.1e}, residuals over λ ∈ {{0, 1e-3, 1e-1, 10}}: [{}]",
            shown.join(", ")
        ),
    )
}

fn p7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut cloud = |n: usize, span: f64| -> Vec<Vec3> {
        (0..n)
            .map(|_| Vec3::new(rng.random_range(-span..span), rng.random_range(-span..span), rng.random_range(0.0..span)))
            .collect()
    };
    let mut voxel_ok = 0;
    for i in 0..100 {
        let pts = cloud(1 + (i * 37) % 400, 2.0);
        let cell = 0.05 + 0.01 * (i % 60) as f64;
        if voxel_generate(&pts, cell, &HashSet::new()) == oracle_voxel(&pts, cell, &[]) {
            voxel_ok += 1;
        }
    }
    let mut geo_ok = true;
    for (n, m) in [(10, 10), (500, 300), (2000, 2000)] {
        let (p, g) = (cloud(n, 20.0), cloud(m, 20.0));
        geo_ok &= geometry_metrics(&p, &g, 10.0).map_err(|e| e.to_string())? == oracle_geometry(&p, &g, 10.0);
    }
    let mut chordal_worst: f64 = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..10 {
        let axis = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)).normalize();
        let rots: Vec<Mat3> = (0..4).map(|_| rot_axis_angle(&axis, rng.random_range(-1.2..1.2))).collect();
        let lib = chordal_rotation_average(&rots).map_err(|e| e.to_string())?;
        let grid = rot_axis_angle(&axis, oracle_chordal_angle(&axis, &rots).to_radians());
        chordal_worst = chordal_worst.max(rotation_angle(&(lib.transpose() * grid)).to_degrees());
    }
    let pts: Vec<Vec3> = (0..50).map(|i| Vec3::new((i as f64 * 0.7).sin() * 3.0, (i as f64 * 1.3).cos() * 2.0, i as f64 * 0.05)).collect();
    let canon: Vec<Vec3> = pts.iter().enumerate().map(|(i, p)| p + Vec3::new(0.01 * (i % 5) as f64, -0.02, 0.003 * i as f64)).collect();
    let lib = smooth_displacements(&pts, &canon, &SmoothingParams { neighbors: 5, sigma: None }).map_err(|e| e.to_string())?;
    let smooth_err = lib.iter().zip(oracle_smoothing(&pts, &canon, 5)).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    check(
        voxel_ok == 100 && geo_ok && chordal_worst < 0.1 && smooth_err < 1e-9,
        format!(
            "voxel {voxel_ok}/100 exact, geometry exact up to 2000×2000: {geo_ok}, chordal vs 0.01° grid {chordal_worst:.3}°, smoothing {smooth_err:.1e}"
        ),
    )
}

fn p8() -> Outcome {
    let mut obs: Vec<Vec3> = (0..5).map(|i| Vec3::new(1.0, 2.0, 3.0) + Vec3::repeat(i as f64 * 2e-10)).collect();
    let mean = obs.iter().sum::<Vec3>() / 5.0;
    obs.push(Vec3::new(1e6, -1e6, 1e6));
    let agg = aggregate_canonical(&obs).map_err(|e| e.to_string())?;
    let agg_err = (agg - mean).norm();

    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (stream, out) = (tmp.path().join("flat"), tmp.path().join("out"));
    let bin = env!("CARGO_BIN_EXE_submap-align");
    let synth = Command::new(bin)
        .args(["synth", "--flat", "--frames", "8", "--out"])
        .arg(&stream)
        .output()
        .map_err(|e| e.to_string())?;
    if !synth.status.success() {
        return Err(String::from_utf8_lossy(&synth.stderr).into_owned());
    }
    let run = Command::new(bin)
        .args(["run", "--strategy", "sl4", "--conf-pct", "0", "--in"])
        .arg(&stream)
        .arg("--out")
        .arg(&out)
        .env("RUST_LOG", "error")
        .output()
        .map_err(|e| e.to_string())?;
    let code = run.status.code();
    let written: Vec<String> = fs::read_dir(&out)
        .map_err(|e| e.to_string())?
        .map(|e| e.map(|e| e.file_name().to_string_lossy().into_owned()))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    check(
        agg_err < 1e-9 && code == Some(3) && written == ["failure.json"],
        format!("MAD aggregate off by {agg_err:.1e}; flat-scene SL(4) exit {code:?}, wrote {written:?}"),
    )
}

fn p9() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut cfg = PipelineConfig::default();
    cfg.synth.distortion = DistortionSpec::random_wave(0, 10, ALPHA, BETA).with_jitter(5.0, 1.0, 0);
    let mut identical = true;
    for strategy in [Strategy::Talo, Strategy::Sim3, Strategy::Sl4] {
        cfg.strategy = strategy;
        let mut runs = Vec::new();
        for i in 0..2 {
            let dir = tmp.path().join(format!("{strategy}{i}"));
            cfg.output = Some(dir.clone());
            run_pipeline(&cfg).map_err(|e| e.to_string())?;
            let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(&dir)
                .map_err(|e| e.to_string())?
                .map(|e| {
                    let e = e.unwrap();
                    (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
                })
                .collect();
            files.sort();
            runs.push(files);
        }
        identical &= runs[0] == runs[1] && !runs[0].is_empty();
    }

    let scene = generate_scene(9, 1000, EXTENT, 4, 3).map_err(|e| e.to_string())?;
    let sp = render_submap(&scene, &[0, 1, 2, 3], &cfg.synth.distortion, 1, 2).map_err(|e| e.to_string())?;
    let (b1, b2) = (tmp.path().join("b1"), tmp.path().join("b2"));
    save_bundle(&sp, &b1).map_err(|e| e.to_string())?;
    let loaded = load_bundle(&b1).map_err(|e| e.to_string())?;
    save_bundle(&loaded, &b2).map_err(|e| e.to_string())?;
    let mut bundle_exact = load_bundle(&b2).map_err(|e| e.to_string())? == loaded;
    for e in fs::read_dir(&b1).map_err(|e| e.to_string())? {
        let name = e.map_err(|e| e.to_string())?.file_name();
        bundle_exact &= fs::read(b1.join(&name)).ok() == fs::read(b2.join(&name)).ok();
    }

    let cloud = ColoredCloud {
        colors: (0..loaded.valid_points().len()).map(|i| submap_color(i % 7)).collect(),
        points: loaded.valid_points(),
    };
    let mut bytes = Vec::new();
    write_ply(&cloud, &mut bytes).map_err(|e| e.to_string())?;
    let back = parse_ply(&bytes[..]).map_err(|e| e.to_string())?;
    let mut again = Vec::new();
    write_ply(&back, &mut again).map_err(|e| e.to_string())?;
    let ply_exact = back == cloud && again == bytes;
    check(
        identical && bundle_exact && ply_exact,
        format!("repeat runs byte-identical (talo/sim3/sl4): {identical}, bundle round-trip exact: {bundle_exact}, PLY round-trip exact: {ply_exact}"),
    )
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("P1", "exactness on undistorted stream", p1),
        ("P2", "Case-1 scale recovery", p2),
        ("P3", "Case-2 SL(4) vs Sim(3) separation", p3),
        ("P4", "Case-3 defeats global Sim(3)", p4),
        ("P5", "TALO beats Sim(3) on Case 3", p5),
        ("P6", "TPS properties", p6),
        ("P7", "oracle equivalence", p7),
        ("P8", "robustness and failure bookkeeping", p8),
        ("P9", "determinism and formats", p9),
    ];
    let mut failed = 0;
    for (id, name, f) in criteria {
        let start = Instant::now();
        let (status, detail) = match f() {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("{id} {status} {name}: {detail} [{:.1} s]", start.elapsed().as_secs_f64());
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
