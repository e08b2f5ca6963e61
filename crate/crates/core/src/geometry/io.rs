//! Plain-text mesh and report files.
//!
//! The mesh format is line-oriented ASCII with `#` comments:
//!
//! ```text
//! lipmax-mesh 1
//! vertices N
//! x y z            # N lines
//! tets M
//! a b c d          # M lines, zero-based vertex ids, positive orientation
//! bfaces K
//! v0 v1 v2 chart   # K lines, one per boundary face
//! ```
//!
//! Vertices are written with 17 significant digits, so a save/load round
//! trip reproduces every coordinate bit for bit. Loading is strict: a tet
//! listed in negative orientation is an error naming the tet, and the
//! `bfaces` section must list exactly the boundary faces the tets induce.
//! Chart directions are reconstructed canonically from the labelled faces
//! (the negated area-weighted mean outward normal per chart).

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Point3, Vector3};

use super::mesh::TetMesh;
use crate::report::SuiteReport;
use crate::{Error, Result};

pub fn save_mesh(mesh: &TetMesh, path: &Path) -> Result<()> {
    std::fs::write(path, mesh_to_string(mesh))?;
    Ok(())
}

pub fn load_mesh(path: &Path) -> Result<TetMesh> {
    let text = std::fs::read_to_string(path)?;
    mesh_from_str(&text)
}

/// Write a suite report next to wherever the caller wants it.
pub fn save_report(report: &SuiteReport, path: &Path) -> Result<()> {
    std::fs::write(path, report.render())?;
    Ok(())
}

pub fn mesh_to_string(mesh: &TetMesh) -> String {
    let mut out = String::new();
    out.push_str("lipmax-mesh 1\n");
    let _ = writeln!(out, "vertices {}", mesh.points.len());
    for p in &mesh.points {
        let _ = writeln!(out, "{:.17e} {:.17e} {:.17e}", p.x, p.y, p.z);
    }
    let _ = writeln!(out, "tets {}", mesh.tets.len());
    for t in &mesh.tets {
        let _ = writeln!(out, "{} {} {} {}", t[0], t[1], t[2], t[3]);
    }
    let _ = writeln!(out, "bfaces {}", mesh.boundary.len());
    for f in &mesh.boundary {
        let _ = writeln!(out, "{} {} {} {}", f.verts[0], f.verts[1], f.verts[2], f.chart);
    }
    out
}

struct Lines<'a> {
    iter: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Lines {
            iter: text.lines().enumerate(),
        }
    }

    /// Next non-empty line with comments stripped, as (1-based line, text).
    fn next_content(&mut self) -> Option<(usize, &'a str)> {
        for (i, raw) in self.iter.by_ref() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if !line.is_empty() {
                return Some((i + 1, line));
            }
        }
        None
    }
}

fn parse_count(line: &str, lineno: usize, keyword: &str) -> Result<usize> {
    let mut parts = line.split_whitespace();
    match (parts.next(), parts.next(), parts.next()) {
        (Some(k), Some(n), None) if k == keyword => n.parse().map_err(|_| {
            Error::InvalidMesh(format!("line {lineno}: bad count in `{line}`"))
        }),
        _ => Err(Error::InvalidMesh(format!(
            "line {lineno}: expected `{keyword} N`, found `{line}`"
        ))),
    }
}

pub fn mesh_from_str(text: &str) -> Result<TetMesh> {
    let mut lines = Lines::new(text);

    let (lineno, header) = lines
        .next_content()
        .ok_or_else(|| Error::InvalidMesh("empty mesh file".into()))?;
    if header != "lipmax-mesh 1" {
        return Err(Error::InvalidMesh(format!(
            "line {lineno}: unsupported header `{header}`"
        )));
    }

    let (lineno, line) = lines
        .next_content()
        .ok_or_else(|| Error::InvalidMesh("missing vertices section".into()))?;
    let nv = parse_count(line, lineno, "vertices")?;
    let mut points = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (lineno, line) = lines.next_content().ok_or_else(|| {
            Error::InvalidMesh(format!("vertex table ends early (expected {nv} rows)"))
        })?;
        let coords: Vec<f64> = line
            .split_whitespace()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::InvalidMesh(format!("line {lineno}: bad vertex `{line}`")))?;
        if coords.len() != 3 {
            return Err(Error::InvalidMesh(format!(
                "line {lineno}: vertex needs 3 coordinates, found {}",
                coords.len()
            )));
        }
        points.push(Point3::new(coords[0], coords[1], coords[2]));
    }

    let (lineno, line) = lines
        .next_content()
        .ok_or_else(|| Error::InvalidMesh("missing tets section".into()))?;
    let nt = parse_count(line, lineno, "tets")?;
    let mut tets = Vec::with_capacity(nt);
    for _ in 0..nt {
        let (lineno, line) = lines.next_content().ok_or_else(|| {
            Error::InvalidMesh(format!("tet table ends early (expected {nt} rows)"))
        })?;
        let ids: Vec<usize> = line
            .split_whitespace()
            .map(|s| s.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::InvalidMesh(format!("line {lineno}: bad tet `{line}`")))?;
        if ids.len() != 4 {
            return Err(Error::InvalidMesh(format!(
                "line {lineno}: tet needs 4 vertex ids, found {}",
                ids.len()
            )));
        }
        tets.push([ids[0], ids[1], ids[2], ids[3]]);
    }

    let (lineno, line) = lines
        .next_content()
        .ok_or_else(|| Error::InvalidMesh("missing bfaces section".into()))?;
    let nb = parse_count(line, lineno, "bfaces")?;
    let mut bfaces = Vec::with_capacity(nb);
    for _ in 0..nb {
        let (lineno, line) = lines.next_content().ok_or_else(|| {
            Error::InvalidMesh(format!("bface table ends early (expected {nb} rows)"))
        })?;
        let ids: Vec<usize> = line
            .split_whitespace()
            .map(|s| s.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::InvalidMesh(format!("line {lineno}: bad bface `{line}`")))?;
        if ids.len() != 4 {
            return Err(Error::InvalidMesh(format!(
                "line {lineno}: bface needs `v0 v1 v2 chart`, found {} fields",
                ids.len()
            )));
        }
        let mut verts = [ids[0], ids[1], ids[2]];
        verts.sort_unstable();
        bfaces.push((verts, ids[3] as u32, lineno));
    }
    if let Some((lineno, line)) = lines.next_content() {
        return Err(Error::InvalidMesh(format!(
            "line {lineno}: trailing content `{line}`"
        )));
    }

    let mut mesh = TetMesh::new_strict(points, tets)?;

    // The listed faces must be exactly the boundary the tets induce.
    let mut listed: std::collections::BTreeMap<[usize; 3], u32> = std::collections::BTreeMap::new();
    for (verts, chart, lineno) in bfaces {
        if listed.insert(verts, chart).is_some() {
            return Err(Error::InvalidMesh(format!(
                "line {lineno}: boundary face {verts:?} listed twice"
            )));
        }
    }
    if listed.len() != mesh.boundary.len() {
        return Err(Error::InvalidMesh(format!(
            "bfaces lists {} faces but the tets induce {}",
            listed.len(),
            mesh.boundary.len()
        )));
    }
    for f in &mesh.boundary {
        if !listed.contains_key(&f.verts) {
            return Err(Error::InvalidMesh(format!(
                "boundary face {:?} induced by the tets is missing from bfaces",
                f.verts
            )));
        }
    }

    // Reconstruct chart directions from the labels: per chart, the negated
    // area-weighted mean outward normal.
    let mut chart_ids: Vec<u32> = listed.values().copied().collect();
    chart_ids.sort_unstable();
    chart_ids.dedup();
    let mut directions = Vec::with_capacity(chart_ids.len());
    for &id in &chart_ids {
        let mut sum = Vector3::zeros();
        for f in &mesh.boundary {
            if listed[&f.verts] == id {
                sum += f.area * f.normal;
            }
        }
        let norm = sum.norm();
        if norm < 1e-300 {
            return Err(Error::Chart(format!(
                "chart {id}: face normals cancel; no direction can represent it"
            )));
        }
        directions.push((id, -sum / norm, false));
    }
    let classify = |verts: &[usize; 3]| listed[verts];
    mesh.assign_charts_by_verts(&directions, classify)?;
    Ok(mesh)
}
