//! Per-pixel point clouds and their ASCII PLY encoding.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::geometry::WorldPoint;
use crate::image::Image;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CloudPoint {
    /// Camera pixel index the point was reconstructed from.
    pub pixel: (u32, u32),
    pub position: WorldPoint,
}

/// Reconstructed points in camera-raster order.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub width: usize,
    pub height: usize,
    pub points: Vec<CloudPoint>,
    /// Pixels that were valid but failed triangulation.
    pub dropped: usize,
}

impl PointCloud {
    pub fn empty(width: usize, height: usize) -> Self {
        PointCloud {
            width,
            height,
            points: Vec::new(),
            dropped: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn positions(&self) -> impl Iterator<Item = &WorldPoint> + '_ {
        self.points.iter().map(|p| &p.position)
    }

    /// Scatters the points back onto the camera raster.
    pub fn to_grid(&self) -> Image<Option<WorldPoint>> {
        let mut grid = Image::filled(self.width, self.height, None);
        for p in &self.points {
            grid.set(p.pixel.0 as usize, p.pixel.1 as usize, Some(p.position));
        }
        grid
    }

    /// ASCII PLY with float `x y z` (mm) and int `u v` pixel indices.
    pub fn to_ply(&self) -> String {
        let mut out = String::with_capacity(64 + self.points.len() * 40);
        out.push_str("ply\nformat ascii 1.0\n");
        let _ = writeln!(out, "comment camera_resolution {} {}", self.width, self.height);
        let _ = writeln!(out, "element vertex {}", self.points.len());
        out.push_str(
            "property float x\nproperty float y\nproperty float z\nproperty int u\nproperty int v\nend_header\n",
        );
        for p in &self.points {
            let _ = writeln!(
                out,
                "{:.6} {:.6} {:.6} {} {}",
                p.position.x, p.position.y, p.position.z, p.pixel.0, p.pixel.1
            );
        }
        out
    }

    /// Parses an ASCII PLY vertex list. `u`/`v` properties are optional; without
    /// them points are laid out on a single row.
    pub fn from_ply(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some("ply") {
            return Err(Error::parse("ply header", "missing `ply` magic"));
        }
        let mut count: Option<usize> = None;
        let mut props: Vec<String> = Vec::new();
        let mut resolution: Option<(usize, usize)> = None;
        let mut in_vertex = false;
        let mut ended = false;
        for line in lines.by_ref() {
            let toks: Vec<&str> = line.split_whitespace().collect();
            match toks.as_slice() {
                ["format", "ascii", _] => {}
                ["format", other, ..] => {
                    return Err(Error::parse("ply header", format!("unsupported format `{other}`")))
                }
                ["comment", "camera_resolution", w, h] => {
                    resolution = w.parse().ok().zip(h.parse().ok());
                }
                ["comment", ..] | ["obj_info", ..] => {}
                ["element", "vertex", n] => {
                    count = Some(n.parse().map_err(|_| Error::parse("ply header", "bad vertex count"))?);
                    in_vertex = true;
                }
                ["element", ..] => in_vertex = false,
                ["property", _ty, name] if in_vertex => props.push(name.to_string()),
                ["property", ..] => {}
                ["end_header"] => {
                    ended = true;
                    break;
                }
                _ => return Err(Error::parse("ply header", format!("unexpected line `{line}`"))),
            }
        }
        let count = count.ok_or_else(|| Error::parse("ply header", "missing vertex element"))?;
        if !ended {
            return Err(Error::parse("ply header", "missing end_header"));
        }
        let col = |name: &str| props.iter().position(|p| p == name);
        let (ix, iy, iz) = match (col("x"), col("y"), col("z")) {
            (Some(x), Some(y), Some(z)) => (x, y, z),
            _ => return Err(Error::parse("ply header", "vertex needs x, y, z properties")),
        };
        let uv = col("u").zip(col("v"));
        let mut points = Vec::with_capacity(count);
        for i in 0..count {
            let line = lines
                .next()
                .ok_or_else(|| Error::parse("ply body", format!("expected {count} vertices, got {i}")))?;
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::parse("ply body", format!("bad number on vertex {i}")))?;
            if vals.len() < props.len() {
                return Err(Error::parse("ply body", format!("vertex {i} has too few fields")));
            }
            let pixel = match uv {
                Some((iu, iv)) => (vals[iu] as u32, vals[iv] as u32),
                None => (i as u32, 0),
            };
            points.push(CloudPoint {
                pixel,
                position: WorldPoint::new(vals[ix], vals[iy], vals[iz]),
            });
        }
        let (width, height) = resolution.unwrap_or_else(|| {
            let w = points.iter().map(|p| p.pixel.0 as usize + 1).max().unwrap_or(0);
            let h = points.iter().map(|p| p.pixel.1 as usize + 1).max().unwrap_or(0);
            (w, h)
        });
        if points
            .iter()
            .any(|p| p.pixel.0 as usize >= width || p.pixel.1 as usize >= height)
        {
            return Err(Error::parse("ply body", "pixel index outside camera resolution"));
        }
        Ok(PointCloud {
            width,
            height,
            points,
            dropped: 0,
        })
    }
}
