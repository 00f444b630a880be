//! File formats: XYZ point clouds, density-colored PLY export, OFF/OBJ mesh import.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{DensityField, PointCloud, TriangleMesh};
use crate::{Error, Result};

/// Writes one `x y z` line per point, shortest round-trip decimal form.
pub fn save_xyz(cloud: &PointCloud, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for p in &cloud.points {
        writeln!(w, "{} {} {}", p[0], p[1], p[2])?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_xyz(path: &Path) -> Result<PointCloud> {
    let r = BufReader::new(File::open(path)?);
    let mut points = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let mut it = t.split_whitespace();
        let mut p = [0.0; 3];
        for c in &mut p {
            *c = it
                .next()
                .ok_or_else(|| Error::Parse(format!("xyz line {}: fewer than 3 fields", lineno + 1)))?
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("xyz line {}: {}", lineno + 1, e)))?;
        }
        points.push(p);
    }
    if points.is_empty() {
        return Err(Error::Parse("xyz file contains no points".into()));
    }
    Ok(PointCloud::new(points))
}

/// Density color ramp endpoints: sparse maps to dark blue, dense to light yellow.
const SPARSE_COLOR: [u8; 3] = [0, 0, 139];
const DENSE_COLOR: [u8; 3] = [255, 255, 224];

fn ramp(t: f64) -> [u8; 3] {
    let mut c = [0u8; 3];
    for a in 0..3 {
        let v = SPARSE_COLOR[a] as f64 + t * (DENSE_COLOR[a] as f64 - SPARSE_COLOR[a] as f64);
        c[a] = v.round().clamp(0.0, 255.0) as u8;
    }
    c
}

/// ASCII PLY with per-vertex RGB encoding the density field, linearly ramped
/// over the field's min-max range.
pub fn save_ply_density(cloud: &PointCloud, field: &DensityField, path: &Path) -> Result<()> {
    if cloud.len() != field.values.len() {
        return Err(Error::invalid(format!(
            "save_ply_density: cloud has {} points but field has {} values",
            cloud.len(),
            field.values.len()
        )));
    }
    let lo = *field.values.iter().min().unwrap_or(&0) as f64;
    let hi = *field.values.iter().max().unwrap_or(&0) as f64;
    let span = hi - lo;
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "ply")?;
    writeln!(w, "format ascii 1.0")?;
    writeln!(w, "element vertex {}", cloud.len())?;
    writeln!(w, "property float x")?;
    writeln!(w, "property float y")?;
    writeln!(w, "property float z")?;
    writeln!(w, "property uchar red")?;
    writeln!(w, "property uchar green")?;
    writeln!(w, "property uchar blue")?;
    writeln!(w, "end_header")?;
    for (p, &v) in cloud.points.iter().zip(&field.values) {
        let t = if span > 0.0 { (v as f64 - lo) / span } else { 0.5 };
        let [r, g, b] = ramp(t);
        writeln!(w, "{} {} {} {} {} {}", p[0], p[1], p[2], r, g, b)?;
    }
    w.flush()?;
    Ok(())
}

/// OFF mesh import; polygons beyond triangles are fan-triangulated.
pub fn load_off(path: &Path) -> Result<TriangleMesh> {
    let r = BufReader::new(File::open(path)?);
    let mut lines = r.lines().map_while(|l| l.ok()).filter(|l| {
        let t = l.trim();
        !t.is_empty() && !t.starts_with('#')
    });
    let header = lines.next().ok_or_else(|| Error::Parse("empty OFF file".into()))?;
    let counts_line = if header.trim() == "OFF" {
        lines.next().ok_or_else(|| Error::Parse("OFF missing counts".into()))?
    } else if let Some(rest) = header.trim().strip_prefix("OFF") {
        // Counts may share the header line.
        rest.to_string()
    } else {
        return Err(Error::Parse("not an OFF file".into()));
    };
    let counts: Vec<usize> = counts_line
        .split_whitespace()
        .map(|t| t.parse::<usize>().map_err(|e| Error::Parse(format!("OFF counts: {}", e))))
        .collect::<Result<_>>()?;
    if counts.len() < 2 {
        return Err(Error::Parse("OFF counts line needs vertex and face counts".into()));
    }
    let (nv, nf) = (counts[0], counts[1]);
    let mut vertices = Vec::with_capacity(nv);
    let mut faces = Vec::new();
    for _ in 0..nv {
        let line = lines.next().ok_or_else(|| Error::Parse("OFF truncated vertices".into()))?;
        let v: Vec<f64> = line
            .split_whitespace()
            .take(3)
            .map(|t| t.parse::<f64>().map_err(|e| Error::Parse(format!("OFF vertex: {}", e))))
            .collect::<Result<_>>()?;
        if v.len() != 3 {
            return Err(Error::Parse("OFF vertex with fewer than 3 coordinates".into()));
        }
        vertices.push([v[0], v[1], v[2]]);
    }
    for _ in 0..nf {
        let line = lines.next().ok_or_else(|| Error::Parse("OFF truncated faces".into()))?;
        let idx: Vec<usize> = line
            .split_whitespace()
            .map(|t| t.parse::<usize>().map_err(|e| Error::Parse(format!("OFF face: {}", e))))
            .collect::<Result<_>>()?;
        let (&k, rest) = idx
            .split_first()
            .ok_or_else(|| Error::Parse("OFF empty face line".into()))?;
        if rest.len() < k || k < 3 {
            return Err(Error::Parse(format!("OFF face declares {} vertices", k)));
        }
        for i in 1..k - 1 {
            faces.push([rest[0], rest[i], rest[i + 1]]);
        }
    }
    TriangleMesh::new(vertices, faces)
}

/// OBJ mesh export (`v` and `f` records, 1-based indices).
pub fn save_obj(mesh: &TriangleMesh, path: &Path) -> Result<()> {
    mesh.validate()?;
    let mut w = BufWriter::new(File::create(path)?);
    for v in &mesh.vertices {
        writeln!(w, "v {} {} {}", v[0], v[1], v[2])?;
    }
    for f in &mesh.faces {
        writeln!(w, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1)?;
    }
    w.flush()?;
    Ok(())
}

/// OBJ mesh import (`v` and `f` records; `f` entries may carry `/` suffixes).
pub fn load_obj(path: &Path) -> Result<TriangleMesh> {
    let r = BufReader::new(File::open(path)?);
    let mut vertices: Vec<[f64; 3]> = Vec::new();
    let mut faces = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        let mut it = t.split_whitespace();
        match it.next() {
            Some("v") => {
                let v: Vec<f64> = it
                    .take(3)
                    .map(|s| {
                        s.parse::<f64>()
                            .map_err(|e| Error::Parse(format!("obj line {}: {}", lineno + 1, e)))
                    })
                    .collect::<Result<_>>()?;
                if v.len() != 3 {
                    return Err(Error::Parse(format!("obj line {}: short vertex", lineno + 1)));
                }
                vertices.push([v[0], v[1], v[2]]);
            }
            Some("f") => {
                let idx: Vec<usize> = it
                    .map(|s| parse_obj_index(s, vertices.len(), lineno + 1))
                    .collect::<Result<_>>()?;
                if idx.len() < 3 {
                    return Err(Error::Parse(format!("obj line {}: face needs 3+ vertices", lineno + 1)));
                }
                for i in 1..idx.len() - 1 {
                    faces.push([idx[0], idx[i], idx[i + 1]]);
                }
            }
            _ => {}
        }
    }
    TriangleMesh::new(vertices, faces)
}

fn parse_obj_index(token: &str, nv: usize, lineno: usize) -> Result<usize> {
    let first = token.split('/').next().unwrap_or("");
    let i: i64 = first
        .parse()
        .map_err(|e| Error::Parse(format!("obj line {}: {}", lineno, e)))?;
    let idx = if i > 0 {
        (i - 1) as usize
    } else if i < 0 {
        let back = (-i) as usize;
        if back > nv {
            return Err(Error::Parse(format!("obj line {}: negative index out of range", lineno)));
        }
        nv - back
    } else {
        return Err(Error::Parse(format!("obj line {}: zero face index", lineno)));
    };
    Ok(idx)
}
