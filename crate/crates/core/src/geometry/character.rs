//! Quantitative Lipschitz data of a domain.
//!
//! Every constant in the trace, extension, and solution bounds is a closed
//! form in three numbers: a Lipschitz bound `M` for the boundary charts, an
//! opening angle `theta` (equivalently a transversality constant
//! `beta = min_k cos(theta_k)` over the charts), and the per-chart angles
//! themselves. This module extracts those numbers exactly from the two
//! domain representations the crate supports: piecewise-linear height
//! fields, where the facet gradients are the whole story, and bounded
//! tetrahedral meshes with chart-labelled boundaries.

use nalgebra::Vector3;

use super::mesh::{Chart, TetMesh};
use crate::{Error, Result};

/// The quantitative character `(M, theta, charts, beta)` of a Lipschitz
/// boundary. `m` bounds the slope of the boundary charts, `theta` is the
/// worst opening angle of the domain against its reference direction, and
/// `beta = min_k cos(theta_k)` over the charts.
#[derive(Debug, Clone)]
pub struct LipschitzCharacter {
    pub m: f64,
    pub theta: f64,
    pub charts: Vec<Chart>,
    pub beta: f64,
}

impl LipschitzCharacter {
    /// `min_k cos(theta_k)`; errors if any chart opens to a right angle.
    pub fn beta_of(charts: &[Chart]) -> Result<f64> {
        let mut beta: f64 = 1.0;
        for c in charts {
            let cos = c.theta.cos();
            if cos <= 1e-12 {
                return Err(Error::Chart(format!(
                    "chart {} opens a right angle (theta = {})",
                    c.id, c.theta
                )));
            }
            beta = beta.min(cos);
        }
        if charts.is_empty() {
            return Err(Error::Chart("character needs at least one chart".into()));
        }
        Ok(beta)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(Error::Chart(format!("beta = {} out of (0, 1]", self.beta)));
        }
        if self.m < 0.0 || !self.m.is_finite() {
            return Err(Error::Chart(format!("invalid slope bound {}", self.m)));
        }
        Ok(())
    }
}

/// Character of a bounded chart-labelled mesh.
///
/// Per-chart angles are the exact facet maxima already recorded on the
/// chart table. The slope bound is taken from the boundary vertex fans:
/// at each boundary vertex the *distinct* outward normals of the incident
/// faces are averaged into a reference direction, and the worst angle of a
/// face normal against it gives a local slope `tan(theta_v)`. Deduplicating
/// normals keeps the fan direction independent of how flat patches happen
/// to be triangulated (a cube corner always reads as the space diagonal).
/// Chart maps of a bounded domain are bi-Lipschitz, so their constant is
/// never below one; the returned `m` is floored accordingly.
pub fn lipschitz_character(mesh: &TetMesh) -> Result<LipschitzCharacter> {
    if mesh.charts.is_empty() {
        return Err(Error::Chart(
            "mesh carries no charts; assign charts before extracting a character".into(),
        ));
    }
    let beta = LipschitzCharacter::beta_of(&mesh.charts)?;
    let theta = mesh
        .charts
        .iter()
        .map(|c| c.theta)
        .fold(0.0, f64::max);

    // Distinct-normal fan per boundary vertex.
    let mut fan: std::collections::BTreeMap<usize, Vec<Vector3<f64>>> =
        std::collections::BTreeMap::new();
    for f in &mesh.boundary {
        for &v in &f.verts {
            let normals = fan.entry(v).or_default();
            if !normals.iter().any(|n| (n - f.normal).norm() < 1e-9) {
                normals.push(f.normal);
            }
        }
    }
    let mut m_fan: f64 = 0.0;
    for (v, normals) in &fan {
        let sum: Vector3<f64> = normals.iter().sum();
        let norm = sum.norm();
        if norm < 1e-9 {
            return Err(Error::Chart(format!(
                "boundary vertex {v} has a degenerate normal fan"
            )));
        }
        let dir = sum / norm;
        let mut min_cos: f64 = 1.0;
        for n in normals {
            min_cos = min_cos.min(dir.dot(n));
        }
        if min_cos <= 1e-9 {
            return Err(Error::Chart(format!(
                "boundary vertex {v} is not graph-like: its normal fan opens a right angle"
            )));
        }
        let tan_v = (1.0 - min_cos * min_cos).sqrt() / min_cos;
        m_fan = m_fan.max(tan_v);
    }

    let character = LipschitzCharacter {
        m: m_fan.max(1.0),
        theta,
        charts: mesh.charts.clone(),
        beta,
    };
    character.validate()?;
    Ok(character)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::generators::{unit_cube, wedge_mesh};

    #[test]
    fn cube_face_charts_are_flat() {
        let mesh = unit_cube(2).unwrap();
        let ch = lipschitz_character(&mesh).unwrap();
        assert_eq!(ch.charts.len(), 6);
        for c in &ch.charts {
            assert!(c.theta.abs() < 1e-12);
        }
        assert!((ch.beta - 1.0).abs() < 1e-12);
        // Cube corners: three orthogonal faces, fan direction along the
        // diagonal, slope tan(arccos(1/sqrt(3))) = sqrt(2).
        assert!((ch.m - 2f64.sqrt()).abs() < 1e-10);
    }

    #[test]
    fn wedge_mesh_graph_chart_angle() {
        let alpha = std::f64::consts::FRAC_PI_2;
        let mesh = wedge_mesh(alpha, [4, 2, 2], 1.0, 1.0, 1.0).unwrap();
        let ch = lipschitz_character(&mesh).unwrap();
        let graph = ch.charts.iter().find(|c| c.id == 0).unwrap();
        assert!((graph.theta - (std::f64::consts::FRAC_PI_2 - alpha / 2.0)).abs() < 1e-12);
        assert!((ch.beta - (alpha / 2.0).sin()).abs() < 1e-12);
        // The bounded polyhedron's corners dominate its slope bound; the
        // spine vertices alone would give tan(pi/4) = 1.
        assert!(ch.m >= 1.0);
    }

    #[test]
    fn chartless_mesh_is_rejected() {
        use crate::geometry::mesh::TetMesh;
        let points = vec![
            nalgebra::Point3::new(0.0, 0.0, 0.0),
            nalgebra::Point3::new(1.0, 0.0, 0.0),
            nalgebra::Point3::new(0.0, 1.0, 0.0),
            nalgebra::Point3::new(0.0, 0.0, 1.0),
        ];
        let mesh = TetMesh::new(points, vec![[0, 1, 2, 3]]).unwrap();
        assert!(lipschitz_character(&mesh).is_err());
    }
}
