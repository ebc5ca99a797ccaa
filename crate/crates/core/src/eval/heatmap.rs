use std::fmt::Write as _;
use std::path::Path;

use crate::mesh::SurfaceMesh;
use crate::{Error, Result};

/// Linear blue to red over `[0, max]`; everything is blue when `max` is 0.
pub fn colormap(value: f64, max: f64) -> [u8; 3] {
    let t = if max > 0.0 { (value / max).clamp(0.0, 1.0) } else { 0.0 };
    let r = (255.0 * t).round() as u8;
    [r, 0, 255 - r]
}

/// ASCII PLY of the surface with one color per vertex.
pub fn heatmap_ply(surface: &SurfaceMesh, values: &[f64]) -> Result<String> {
    if values.len() != surface.vertex_count() {
        return Err(Error::shape(format!(
            "{} values for {} vertices",
            values.len(),
            surface.vertex_count()
        )));
    }
    let max = values.iter().copied().fold(0.0, f64::max);
    let mut out = String::new();
    let _ = write!(
        out,
        "ply\nformat ascii 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\n\
         property uchar red\nproperty uchar green\nproperty uchar blue\nelement face {}\n\
         property list uchar int vertex_indices\nend_header\n",
        surface.vertex_count(),
        surface.triangles().len()
    );
    for (p, &v) in surface.vertices().iter().zip(values) {
        let [r, g, b] = colormap(v, max);
        let _ = writeln!(out, "{} {} {} {r} {g} {b}", p[0], p[1], p[2]);
    }
    for t in surface.triangles() {
        let _ = writeln!(out, "3 {} {} {}", t[0], t[1], t[2]);
    }
    Ok(out)
}

pub fn export_heatmap(surface: &SurfaceMesh, values: &[f64], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, heatmap_ply(surface, values)?).map_err(|e| Error::io(path, e))
}

/// Vertex colors of a PLY written by [`heatmap_ply`].
pub fn parse_heatmap(text: &str) -> Result<Vec<[u8; 3]>> {
    let mut lines = text.lines().enumerate();
    let mut count = None;
    for (i, line) in lines.by_ref() {
        if let Some(n) = line.strip_prefix("element vertex ") {
            count = Some(n.trim().parse::<usize>().map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })?);
        }
        if line == "end_header" {
            break;
        }
    }
    let count = count.ok_or_else(|| Error::Format("ply without a vertex element".into()))?;
    let mut colors = Vec::with_capacity(count);
    for (i, line) in lines.take(count) {
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 6 {
            return Err(Error::Parse {
                line: i + 1,
                message: format!("expected 6 vertex fields, got {}", f.len()),
            });
        }
        let c = |s: &str| {
            s.parse::<u8>().map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })
        };
        colors.push([c(f[3])?, c(f[4])?, c(f[5])?]);
    }
    if colors.len() != count {
        return Err(Error::Format(format!("ply has {} of {count} vertices", colors.len())));
    }
    Ok(colors)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tri() -> SurfaceMesh {
        SurfaceMesh::new(vec![[0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]], vec![[0, 1, 2]]).unwrap()
    }

    #[test]
    fn endpoints_and_zero_errors() {
        assert_eq!(colormap(0.0, 0.0), [0, 0, 255]);
        assert_eq!(colormap(2.0, 2.0), [255, 0, 0]);
        let text = heatmap_ply(&tri(), &[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(parse_heatmap(&text).unwrap(), vec![[0, 0, 255]; 3]);
    }

    #[test]
    fn round_trip_recovers_colors() {
        let v = [0.1, 0.7, 0.35];
        let colors = parse_heatmap(&heatmap_ply(&tri(), &v).unwrap()).unwrap();
        let expect: Vec<[u8; 3]> = v.iter().map(|&x| colormap(x, 0.7)).collect();
        assert_eq!(colors, expect);
        assert_eq!(colors[1], [255, 0, 0]);
        assert!(heatmap_ply(&tri(), &[0.0]).is_err());
    }
}
