//! Canonical aggregation of control-point observations, Gaussian smoothing
//! of their displacements, and the regularized 3D thin-plate spline that
//! warps each submap onto the consensus.

use std::io::{Read, Write};

use nalgebra::{DMatrix, Matrix4x3};

use crate::error::{Error, Result};
use crate::geometry::{umeyama_align, Mat3, Vec3};
use crate::registration::median;
use crate::spatial::KdTree;

/// Consistency factor turning a MAD into a normal-equivalent sigma.
pub const MAD_TO_SIGMA: f64 = 1.4826;
/// Observations further than this many sigmas from the median are dropped.
pub const MAD_GATE: f64 = 3.0;

/// MAD-filtered mean. An observation survives only if every coordinate lies
/// within `3 · 1.4826 · MAD` of that coordinate's median; a zero MAD keeps
/// only exact-median values. Falls back to the componentwise median when
/// nothing survives.
pub fn aggregate_canonical(observations: &[Vec3]) -> Result<Vec3> {
    match observations.len() {
        0 => return Err(Error::EmptyInput("control-point observations")),
        1 => return Ok(observations[0]),
        _ => {}
    }
    let mut med = Vec3::zeros();
    let mut gate = Vec3::zeros();
    for d in 0..3 {
        let mut col: Vec<f64> = observations.iter().map(|p| p[d]).collect();
        let m = median(&mut col);
        let mut dev: Vec<f64> = col.iter().map(|x| (x - m).abs()).collect();
        med[d] = m;
        gate[d] = MAD_GATE * MAD_TO_SIGMA * median(&mut dev);
    }
    let survivors: Vec<&Vec3> = observations
        .iter()
        .filter(|p| (0..3).all(|d| (p[d] - med[d]).abs() <= gate[d]))
        .collect();
    if survivors.is_empty() {
        return Ok(med);
    }
    Ok(survivors.iter().fold(Vec3::zeros(), |a, p| a + *p) / survivors.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SmoothingParams {
    /// Neighbourhood size, the point itself included.
    pub neighbors: usize,
    /// Gaussian bandwidth; `None` uses the median distance to the
    /// `neighbors`-th nearest neighbour.
    pub sigma: Option<f64>,
}

impl Default for SmoothingParams {
    fn default() -> Self {
        Self {
            neighbors: 32,
            sigma: None,
        }
    }
}

/// Smoothed per-submap targets `pᵢ + Σⱼ wᵢⱼ Δⱼ` with `Δ = canonical − p`
/// and normalized Gaussian weights over each point's Q nearest neighbours.
pub fn smooth_displacements(points: &[Vec3], canonical: &[Vec3], params: &SmoothingParams) -> Result<Vec<Vec3>> {
    if points.len() != canonical.len() {
        return Err(Error::LengthMismatch {
            what: "control points vs canonical positions",
            left: points.len(),
            right: canonical.len(),
        });
    }
    if params.neighbors == 0 {
        return Err(Error::InvalidConfig("smoothing neighbourhood must be >= 1".into()));
    }
    if points.len() < 2 {
        return Ok(canonical.to_vec());
    }
    let q = params.neighbors.min(points.len());
    let tree = KdTree::build(points);
    let neighborhoods: Vec<Vec<(usize, f64)>> = points.iter().map(|p| tree.k_nearest(p, q)).collect();
    let sigma = match params.sigma {
        Some(s) => s,
        None => {
            let mut far: Vec<f64> = neighborhoods.iter().map(|n| n[q - 1].1.sqrt()).collect();
            median(&mut far)
        }
    };
    let disp: Vec<Vec3> = canonical.iter().zip(points).map(|(c, p)| c - p).collect();
    Ok(points
        .iter()
        .zip(&neighborhoods)
        .map(|(p, nbrs)| {
            let weights: Vec<f64> = nbrs.iter().map(|&(_, d2)| gaussian(d2, sigma)).collect();
            let total: f64 = weights.iter().sum();
            let delta = nbrs
                .iter()
                .zip(&weights)
                .fold(Vec3::zeros(), |acc, (&(j, _), w)| acc + disp[j] * (w / total));
            p + delta
        })
        .collect())
}

/// `exp(−d² / 2σ²)`, taking the σ → 0 limit when the bandwidth collapses.
fn gaussian(d2: f64, sigma: f64) -> f64 {
    if sigma > 0.0 {
        (-d2 / (2.0 * sigma * sigma)).exp()
    } else if d2 == 0.0 {
        1.0
    } else {
        0.0
    }
}

/// How a [`TpsModel`] was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TpsKind {
    Spline,
    /// Too few or affinely degenerate sources: least-squares affine.
    Affine,
    /// Affine fit degenerate as well: least-squares rigid.
    Rigid,
    /// Collinear or fewer than three sources: mean offset only.
    Translation,
    Identity,
}

/// `F(x) = A x + b + Σᵢ wᵢ ‖x − pᵢ‖`.
#[derive(Clone, Debug, PartialEq)]
pub struct TpsModel {
    pub affine: Mat3,
    pub translation: Vec3,
    pub weights: Vec<Vec3>,
    pub sources: Vec<Vec3>,
    pub lambda: f64,
    pub kind: TpsKind,
}

impl TpsModel {
    pub fn identity() -> Self {
        Self {
            affine: Mat3::identity(),
            translation: Vec3::zeros(),
            weights: Vec::new(),
            sources: Vec::new(),
            lambda: 0.0,
            kind: TpsKind::Identity,
        }
    }

    pub fn eval(&self, x: &Vec3) -> Vec3 {
        let mut y = self.affine * x + self.translation;
        for (w, p) in self.weights.iter().zip(&self.sources) {
            y += w * (x - p).norm();
        }
        y
    }

    /// Frobenius norm of the kernel weights.
    pub fn weight_norm(&self) -> f64 {
        self.weights.iter().map(|w| w.norm_squared()).sum::<f64>().sqrt()
    }

    /// Flat little-endian binary64: `P, λ, A (row-major), b, W, sources`.
    pub fn write_to(&self, out: &mut impl Write) -> std::io::Result<()> {
        let mut vals = vec![self.sources.len() as f64, self.lambda];
        vals.extend(self.affine.transpose().iter());
        vals.extend(self.translation.iter());
        for w in &self.weights {
            vals.extend(w.iter());
        }
        for p in &self.sources {
            vals.extend(p.iter());
        }
        for v in vals {
            out.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from(input: &mut impl Read) -> Result<Self> {
        let mut bytes = Vec::new();
        input
            .read_to_end(&mut bytes)
            .map_err(|e| Error::Parse(format!("TPS model: {e}")))?;
        if bytes.len() % 8 != 0 || bytes.len() < 8 * 14 {
            return Err(Error::Parse(format!("TPS model: {} bytes is not a valid length", bytes.len())));
        }
        let vals: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        let p = vals[0];
        if !(p >= 0.0 && p.fract() == 0.0) || vals.len() != 14 + 6 * p as usize {
            return Err(Error::Parse(format!("TPS model: header P={p} does not match {} values", vals.len())));
        }
        let p = p as usize;
        let vec3s = |s: &[f64]| s.chunks_exact(3).map(Vec3::from_column_slice).collect::<Vec<_>>();
        let kind = if p == 0 { TpsKind::Affine } else { TpsKind::Spline };
        Ok(Self {
            lambda: vals[1],
            affine: Mat3::from_row_slice(&vals[2..11]),
            translation: Vec3::from_column_slice(&vals[11..14]),
            weights: vec3s(&vals[14..14 + 3 * p]),
            sources: vec3s(&vals[14 + 3 * p..]),
            kind,
        })
    }
}

fn finite(points: &[Vec3]) -> bool {
    points.iter().all(|p| p.iter().all(|v| v.is_finite()))
}

/// Bounding-box diagonal.
pub fn extent(points: &[Vec3]) -> f64 {
    if points.is_empty() {
        return 0.0;
    }
    let lo = points.iter().fold(Vec3::repeat(f64::INFINITY), |m, p| m.inf(p));
    let hi = points.iter().fold(Vec3::repeat(f64::NEG_INFINITY), |m, p| m.sup(p));
    (hi - lo).norm()
}

/// Relative size of the smallest principal spread of a point set.
fn flatness(points: &[Vec3]) -> [f64; 3] {
    let c = crate::geometry::centroid(points);
    let cov = points.iter().fold(Mat3::zeros(), |a, p| {
        let d = p - c;
        a + d * d.transpose()
    });
    let mut ev: Vec<f64> = cov.symmetric_eigen().eigenvalues.iter().map(|v| v.max(0.0)).collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    [ev[0], ev[1], ev[2]]
}

/// Regularized thin-plate spline with kernel φ(r) = r.
///
/// Minimizes `Σ‖F(pᵢ) − tᵢ‖² + λ E(W)` where `E(W) = −tr(Wᵀ K W)` is the
/// bending energy of this kernel (non-negative under the side conditions
/// `Σ wᵢ = 0`, `Σ wᵢ pᵢᵀ = 0`). `λ = 0` interpolates. Too few or affinely
/// degenerate sources fall back to affine, rigid, then translation fits
/// with zero kernel weights.
pub fn tps_fit(sources: &[Vec3], targets: &[Vec3], lambda: f64) -> Result<TpsModel> {
    if sources.len() != targets.len() {
        return Err(Error::LengthMismatch {
            what: "TPS sources vs targets",
            left: sources.len(),
            right: targets.len(),
        });
    }
    if !finite(sources) || !finite(targets) || !lambda.is_finite() {
        return Err(Error::NonFinite("TPS inputs"));
    }
    if lambda < 0.0 {
        return Err(Error::InvalidConfig(format!("TPS regularization must be >= 0, got {lambda}")));
    }
    let n = sources.len();
    if n == 0 {
        return Ok(TpsModel::identity());
    }
    let spread = flatness(sources);
    let volumetric = spread[0] > 0.0 && spread[2] > 1e-10 * spread[0];
    if n < 5 || !volumetric {
        return fallback_fit(sources, targets, lambda, &spread);
    }

    // Solve in centred, unit-scaled coordinates. With x̂ = (x − μ)/s the
    // kernel scales by 1/s, so the regularizer becomes λ/s.
    let mu = crate::geometry::centroid(sources);
    let s = extent(sources);
    let hat: Vec<Vec3> = sources.iter().map(|p| (p - mu) / s).collect();
    let lam = lambda / s;

    let m = n + 4;
    let mut sys = DMatrix::<f64>::zeros(m, m);
    let mut rhs = DMatrix::<f64>::zeros(m, 3);
    for i in 0..n {
        for j in 0..i {
            let r = (hat[i] - hat[j]).norm();
            sys[(i, j)] = r;
            sys[(j, i)] = r;
        }
        sys[(i, i)] = -lam;
        for d in 0..3 {
            sys[(i, n + d)] = hat[i][d];
            sys[(n + d, i)] = hat[i][d];
            rhs[(i, d)] = targets[i][d];
        }
        sys[(i, n + 3)] = 1.0;
        sys[(n + 3, i)] = 1.0;
    }

    let lu = sys.lu();
    let diag = lu.u().diagonal().abs();
    let (dmax, dmin) = (diag.max(), diag.min());
    if dmin == 0.0 {
        return Err(Error::DegenerateConfiguration("TPS system is singular".into()));
    }
    if dmax / dmin > 1e12 {
        log::warn!("TPS system poorly conditioned (pivot ratio {:.3e}, {} sources)", dmax / dmin, n);
    }
    let sol = lu
        .solve(&rhs)
        .ok_or_else(|| Error::DegenerateConfiguration("TPS system is singular".into()))?;

    // Map back: A = Â/s, b = b̂ − Â μ / s, w = ŵ / s.
    let coef = Matrix4x3::from_fn(|r, c| sol[(n + r, c)]);
    let a_hat = coef.fixed_view::<3, 3>(0, 0).transpose();
    let b_hat = coef.row(3).transpose();
    let affine = a_hat / s;
    let translation = b_hat - affine * mu;
    let weights = (0..n).map(|i| Vec3::new(sol[(i, 0)], sol[(i, 1)], sol[(i, 2)]) / s).collect();
    Ok(TpsModel {
        affine,
        translation,
        weights,
        sources: sources.to_vec(),
        lambda,
        kind: TpsKind::Spline,
    })
}

fn fallback_fit(sources: &[Vec3], targets: &[Vec3], lambda: f64, spread: &[f64; 3]) -> Result<TpsModel> {
    let n = sources.len();
    let mut model = TpsModel {
        lambda,
        ..TpsModel::identity()
    };
    let volumetric = spread[0] > 0.0 && spread[2] > 1e-10 * spread[0];
    if n >= 4 && volumetric {
        let mut design = DMatrix::<f64>::zeros(n, 4);
        let mut rhs = DMatrix::<f64>::zeros(n, 3);
        for i in 0..n {
            for d in 0..3 {
                design[(i, d)] = sources[i][d];
                rhs[(i, d)] = targets[i][d];
            }
            design[(i, 3)] = 1.0;
        }
        let sol = design
            .svd(true, true)
            .solve(&rhs, 1e-12)
            .map_err(|e| Error::DegenerateConfiguration(e.to_string()))?;
        model.affine = Mat3::from_fn(|r, c| sol[(c, r)]);
        model.translation = Vec3::new(sol[(3, 0)], sol[(3, 1)], sol[(3, 2)]);
        model.kind = TpsKind::Affine;
        return Ok(model);
    }
    if n >= 3 {
        if let Ok(sim) = umeyama_align(sources, targets, false) {
            model.affine = sim.rotation;
            model.translation = sim.translation;
            model.kind = TpsKind::Rigid;
            return Ok(model);
        }
    }
    let offset = targets
        .iter()
        .zip(sources)
        .fold(Vec3::zeros(), |a, (t, p)| a + (t - p))
        / n as f64;
    model.translation = offset;
    model.kind = TpsKind::Translation;
    Ok(model)
}

/// Evaluates the deformation at every point.
pub fn tps_apply(model: &TpsModel, points: &[Vec3]) -> Vec<Vec3> {
    points.iter().map(|p| model.eval(p)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_points(rng: &mut impl Rng, n: usize) -> Vec<Vec3> {
        (0..n)
            .map(|_| Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect()
    }

    #[test]
    fn aggregate_examples() {
        let p = Vec3::new(1.0, -2.0, 3.5);
        assert_eq!(aggregate_canonical(&[p]).unwrap(), p);
        assert_eq!(aggregate_canonical(&[p; 4]).unwrap(), p);
        let mut obs = vec![Vec3::zeros(); 5];
        obs.push(Vec3::new(100.0, 0.0, 0.0));
        assert_eq!(aggregate_canonical(&obs).unwrap(), Vec3::zeros());
        assert!(matches!(aggregate_canonical(&[]), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn aggregate_drops_gross_outlier() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let base = Vec3::new(3.0, 4.0, 5.0);
        let inliers: Vec<Vec3> = (0..5)
            .map(|_| base + Vec3::new(rng.random(), rng.random(), rng.random()) * 1e-9)
            .collect();
        let mean = inliers.iter().fold(Vec3::zeros(), |a, p| a + p) / 5.0;
        let mut obs = inliers.clone();
        obs.insert(2, Vec3::new(1e6, -1e6, 1e6));
        let agg = aggregate_canonical(&obs).unwrap();
        assert!((agg - mean).norm() < 1e-9);
    }

    #[test]
    fn smoothing_constant_displacement() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts = random_points(&mut rng, 40);
        let v = Vec3::new(0.25, -1.0, 2.0);
        let canon: Vec<Vec3> = pts.iter().map(|p| p + v).collect();
        let out = smooth_displacements(&pts, &canon, &SmoothingParams { neighbors: 6, sigma: None }).unwrap();
        for (o, p) in out.iter().zip(&pts) {
            assert!((o - (p + v)).norm() < 1e-12);
        }
        let single = smooth_displacements(&pts[..1], &canon[..1], &SmoothingParams::default()).unwrap();
        assert_eq!(single, canon[..1].to_vec());
    }

    #[test]
    fn tps_identity_and_translation() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let src = random_points(&mut rng, 25);
        let m = tps_fit(&src, &src, 0.0).unwrap();
        assert_eq!(m.kind, TpsKind::Spline);
        assert!((m.affine - Mat3::identity()).abs().max() < 1e-9);
        assert!(m.translation.norm() < 1e-9);
        assert!(m.weight_norm() < 1e-9);

        let shift = Vec3::new(1.0, 0.0, 0.0);
        let dst: Vec<Vec3> = src.iter().map(|p| p + shift).collect();
        let m = tps_fit(&src, &dst, 0.05).unwrap();
        assert!((m.translation - shift).norm() < 1e-9);
        let probe = random_points(&mut rng, 30);
        for (a, b) in tps_apply(&m, &probe).iter().zip(&probe) {
            assert!((a - b - shift).norm() < 1e-9);
        }
        let id = TpsModel::identity();
        assert_eq!(tps_apply(&id, &probe), probe);
    }

    #[test]
    fn tps_side_conditions_hold() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let src = random_points(&mut rng, 30);
        let dst: Vec<Vec3> = src.iter().map(|p| p + random_points(&mut rng, 1)[0] * 0.1).collect();
        for lambda in [0.0, 0.1] {
            let m = tps_fit(&src, &dst, lambda).unwrap();
            let sum = m.weights.iter().fold(Vec3::zeros(), |a, w| a + w);
            let moment = m.weights.iter().zip(&src).fold(Mat3::zeros(), |a, (w, p)| a + w * p.transpose());
            assert!(sum.norm() < 1e-6);
            assert!(moment.abs().max() < 1e-6);
        }
    }

    #[test]
    fn tps_fallbacks() {
        let src = vec![Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0), Vec3::new(0.0, 0.0, 1.0)];
        let dst: Vec<Vec3> = src.iter().map(|p| 2.0 * p + Vec3::x()).collect();
        let m = tps_fit(&src, &dst, 0.0).unwrap();
        assert_eq!(m.kind, TpsKind::Affine);
        assert!((m.eval(&Vec3::new(0.5, 0.5, 0.5)) - Vec3::new(2.0, 1.0, 1.0)).norm() < 1e-9);

        let plane: Vec<Vec3> = (0..10).map(|i| Vec3::new(i as f64, (i * i % 7) as f64, 0.0)).collect();
        let m = tps_fit(&plane, &plane, 0.0).unwrap();
        assert_eq!(m.kind, TpsKind::Rigid);
        assert!(m.weights.is_empty());

        let line: Vec<Vec3> = (0..6).map(|i| Vec3::new(i as f64, 0.0, 0.0)).collect();
        let moved: Vec<Vec3> = line.iter().map(|p| p + Vec3::z()).collect();
        let m = tps_fit(&line, &moved, 0.0).unwrap();
        assert_eq!(m.kind, TpsKind::Translation);
        assert_eq!(m.translation, Vec3::z());

        assert_eq!(tps_fit(&[], &[], 0.0).unwrap().kind, TpsKind::Identity);
        assert!(tps_fit(&[Vec3::new(f64::NAN, 0.0, 0.0)], &[Vec3::zeros()], 0.0).is_err());
    }

    #[test]
    fn serialization_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let src = random_points(&mut rng, 12);
        let dst = random_points(&mut rng, 12);
        let m = tps_fit(&src, &dst, 0.01).unwrap();
        let mut buf = Vec::new();
        m.write_to(&mut buf).unwrap();
        assert_eq!(buf.len(), 8 * (14 + 6 * 12));
        let back = TpsModel::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(back, m);
        assert!(TpsModel::read_from(&mut &buf[..buf.len() - 8]).is_err());
    }
}
