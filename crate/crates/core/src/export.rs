//! Text trajectories (`t tx ty tz qx qy qz qw`, one pose per line) and
//! binary little-endian PLY point clouds with per-point RGB.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::{Quaternion, Rotation3, UnitQuaternion};

use crate::error::{Error, Result};
use crate::geometry::{Pose, Vec3};

/// Prints `-0` as `0`; everything else in shortest round-trip form.
fn num(v: f64) -> String {
    format!("{}", v + 0.0)
}

pub fn pose_to_quaternion(pose: &Pose) -> UnitQuaternion<f64> {
    let q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(pose.rotation));
    if q.w < 0.0 {
        UnitQuaternion::new_unchecked(-q.into_inner())
    } else {
        q
    }
}

pub fn trajectory_row(timestamp: f64, pose: &Pose) -> String {
    let q = pose_to_quaternion(pose);
    let t = &pose.translation;
    format!(
        "{:.6} {} {} {} {} {} {} {}",
        timestamp,
        num(t.x),
        num(t.y),
        num(t.z),
        num(q.i),
        num(q.j),
        num(q.k),
        num(q.w)
    )
}

/// Writes one row per pose; frame `i` is stamped `i / frame_rate`.
pub fn write_trajectory(poses: &[Pose], frame_rate: f64, out: &mut impl Write) -> std::io::Result<()> {
    for (i, p) in poses.iter().enumerate() {
        writeln!(out, "{}", trajectory_row(i as f64 / frame_rate, p))?;
    }
    Ok(())
}

pub fn export_trajectory(poses: &[Pose], frame_rate: f64, path: &Path) -> Result<()> {
    if poses.is_empty() {
        return Err(Error::EmptyInput("trajectory"));
    }
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_trajectory(poses, frame_rate, &mut w)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn parse_trajectory(input: impl BufRead) -> Result<Vec<(f64, Pose)>> {
    let mut out = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line.map_err(|e| Error::Parse(format!("line {}: {e}", n + 1)))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse(format!("line {}: {e}", n + 1)))?;
        if vals.len() != 8 {
            return Err(Error::Parse(format!("line {}: expected 8 values, got {}", n + 1, vals.len())));
        }
        if !vals.iter().all(|v| v.is_finite()) {
            return Err(Error::Parse(format!("line {}: non-finite value", n + 1)));
        }
        let q = Quaternion::new(vals[7], vals[4], vals[5], vals[6]);
        if q.norm() < 1e-12 {
            return Err(Error::Parse(format!("line {}: zero quaternion", n + 1)));
        }
        let r = UnitQuaternion::from_quaternion(q).to_rotation_matrix().into_inner();
        out.push((vals[0], Pose::new(r, Vec3::new(vals[1], vals[2], vals[3]))));
    }
    Ok(out)
}

pub fn read_trajectory(path: &Path) -> Result<Vec<(f64, Pose)>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_trajectory(BufReader::new(file))
}

/// A point cloud as stored on disk: binary32 coordinates widened to f64.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ColoredCloud {
    pub points: Vec<Vec3>,
    pub colors: Vec<[u8; 3]>,
}

/// Distinct, stable color for submap `k` (golden-angle hue walk).
pub fn submap_color(k: usize) -> [u8; 3] {
    let h = (k as f64 * 0.618_033_988_749_895).fract() * 6.0;
    let x = 1.0 - (h % 2.0 - 1.0).abs();
    let (r, g, b) = match h as u32 {
        0 => (1.0, x, 0.0),
        1 => (x, 1.0, 0.0),
        2 => (0.0, 1.0, x),
        3 => (0.0, x, 1.0),
        4 => (x, 0.0, 1.0),
        _ => (1.0, 0.0, x),
    };
    let c = |v: f64| (40.0 + 215.0 * v).round() as u8;
    [c(r), c(g), c(b)]
}

pub fn write_ply(cloud: &ColoredCloud, out: &mut impl Write) -> std::io::Result<()> {
    write!(
        out,
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\n\
         property float x\nproperty float y\nproperty float z\n\
         property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n",
        cloud.points.len()
    )?;
    let mut buf = Vec::with_capacity(cloud.points.len() * 15);
    for (p, c) in cloud.points.iter().zip(&cloud.colors) {
        for v in p.iter() {
            buf.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        buf.extend_from_slice(c);
    }
    out.write_all(&buf)
}

pub fn export_ply(cloud: &ColoredCloud, path: &Path) -> Result<()> {
    if cloud.points.is_empty() {
        return Err(Error::EmptyInput("point cloud"));
    }
    if cloud.points.len() != cloud.colors.len() {
        return Err(Error::LengthMismatch {
            what: "points and colors",
            left: cloud.points.len(),
            right: cloud.colors.len(),
        });
    }
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_ply(cloud, &mut w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

/// Reads the layout written by [`write_ply`]; the color block is optional.
pub fn parse_ply(mut input: impl BufRead) -> Result<ColoredCloud> {
    let bad = |m: &str| Error::Parse(format!("ply: {m}"));
    let mut line = String::new();
    let mut header = Vec::new();
    loop {
        line.clear();
        if input.read_line(&mut line).map_err(|e| bad(&e.to_string()))? == 0 {
            return Err(bad("missing end_header"));
        }
        let l = line.trim().to_string();
        if l == "end_header" {
            break;
        }
        header.push(l);
    }
    if header.first().map(String::as_str) != Some("ply") {
        return Err(bad("missing magic"));
    }
    if !header.iter().any(|l| l == "format binary_little_endian 1.0") {
        return Err(bad("only binary_little_endian 1.0 is supported"));
    }
    let mut count = None;
    let mut props = Vec::new();
    for l in &header[1..] {
        let f: Vec<&str> = l.split_whitespace().collect();
        match f.as_slice() {
            ["element", "vertex", n] => count = Some(n.parse::<usize>().map_err(|_| bad("bad vertex count"))?),
            ["element", ..] => return Err(bad("unsupported element")),
            ["property", ty, name] => props.push(format!("{ty} {name}")),
            _ => {}
        }
    }
    let count = count.ok_or_else(|| bad("no vertex element"))?;
    let xyz = ["float x", "float y", "float z"];
    let rgb = ["uchar red", "uchar green", "uchar blue"];
    let has_color = match props.len() {
        3 if props == xyz => false,
        6 if props[..3] == xyz && props[3..] == rgb => true,
        _ => return Err(bad("unsupported vertex properties")),
    };
    let stride = if has_color { 15 } else { 12 };
    let mut data = Vec::new();
    input.read_to_end(&mut data).map_err(|e| bad(&e.to_string()))?;
    if data.len() != count * stride {
        return Err(bad(&format!("expected {} data bytes, got {}", count * stride, data.len())));
    }
    let mut cloud = ColoredCloud::default();
    for rec in data.chunks_exact(stride) {
        let f = |i: usize| f32::from_le_bytes([rec[i], rec[i + 1], rec[i + 2], rec[i + 3]]) as f64;
        cloud.points.push(Vec3::new(f(0), f(4), f(8)));
        cloud.colors.push(if has_color { [rec[12], rec[13], rec[14]] } else { [255; 3] });
    }
    Ok(cloud)
}

pub fn read_ply(path: &Path) -> Result<ColoredCloud> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_ply(BufReader::new(file))
}
