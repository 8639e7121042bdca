//! Fits thin-plate splines to a bent sheet of control points and shows how
//! regularization trades data fit for smoothness.

use submap_align::deformation::{extent, smooth_displacements, tps_apply, tps_fit, SmoothingParams};
use submap_align::geometry::Vec3;

fn bend(p: &Vec3) -> Vec3 {
    Vec3::new(p.x, p.y, p.z + 0.3 * (p.x * 0.8).sin() * (p.y * 0.5).cos())
}

fn main() -> submap_align::Result<()> {
    let sources: Vec<Vec3> = (0..12)
        .flat_map(|i| (0..8).map(move |j| Vec3::new(i as f64 * 0.5, j as f64 * 0.5, 0.1 * ((i + j) % 3) as f64)))
        .collect();
    let targets: Vec<Vec3> = sources.iter().map(bend).collect();
    let probes: Vec<Vec3> = (0..200)
        .map(|i| Vec3::new(0.25 + (i % 20) as f64 * 0.26, 0.2 + (i / 20) as f64 * 0.33, 0.1))
        .collect();
    println!("{} control points spanning {:.2} m", sources.len(), extent(&sources));

    println!("{:>10} {:>14} {:>14} {:>10}", "lambda", "fit rms [m]", "probe rms [m]", "|w|");
    for lambda in [0.0, 1e-3, 1e-2, 1e-1, 1.0] {
        let model = tps_fit(&sources, &targets, lambda)?;
        let fitted = tps_apply(&model, &sources);
        let probed = tps_apply(&model, &probes);
        let rms = |a: &[Vec3], b: &[Vec3]| {
            (a.iter().zip(b).map(|(x, y)| (x - y).norm_squared()).sum::<f64>() / a.len() as f64).sqrt()
        };
        let truth: Vec<Vec3> = probes.iter().map(bend).collect();
        println!(
            "{lambda:>10.0e} {:>14.3e} {:>14.3e} {:>10.3}",
            rms(&fitted, &targets),
            rms(&probed, &truth),
            model.weight_norm()
        );
    }

    // Noisy targets: neighbourhood smoothing before the fit.
    let noisy: Vec<Vec3> = targets
        .iter()
        .enumerate()
        .map(|(i, t)| t + Vec3::new(0.0, 0.0, if i % 7 == 0 { 0.2 } else { 0.0 }))
        .collect();
    let smoothed = smooth_displacements(&sources, &noisy, &SmoothingParams { neighbors: 8, sigma: None })?;
    let err = |v: &[Vec3]| v.iter().zip(&targets).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    println!("worst target error: raw {:.3} m, smoothed {:.3} m", err(&noisy), err(&smoothed));
    Ok(())
}
