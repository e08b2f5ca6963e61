//! Special Lipschitz domains: regions above a piecewise-linear graph.
//!
//! A [`GraphDomain`] is the region `{ x3 > phi(x') }` with `phi` given as a
//! triangulated height field. Because the interpolant is affine per
//! triangle, the Lipschitz constant `M = max_T |grad phi_T|` and the opening
//! angle `theta = arccos(min_T 1/sqrt(1+|grad phi_T|^2))` are exact facet
//! maxima, not quadrature estimates — refining the triangulation of a fixed
//! piecewise-linear graph changes neither.

use nalgebra::{Matrix2, Point3, Vector2, Vector3};

use super::character::LipschitzCharacter;
use super::mesh::Chart;
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct GraphDomain {
    /// Horizontal vertex positions.
    pub verts: Vec<[f64; 2]>,
    /// Height of the graph at each vertex.
    pub heights: Vec<f64>,
    /// Counterclockwise triangles over the horizontal plane.
    pub tris: Vec<[usize; 3]>,
    /// Horizontal bounding box, (low corner, high corner).
    pub bbox: ([f64; 2], [f64; 2]),
}

impl GraphDomain {
    pub fn new(verts: Vec<[f64; 2]>, heights: Vec<f64>, tris: Vec<[usize; 3]>) -> Result<Self> {
        if verts.len() != heights.len() {
            return Err(Error::InvalidMesh(
                "height count must match vertex count".into(),
            ));
        }
        if verts.is_empty() || tris.is_empty() {
            return Err(Error::InvalidMesh("empty height field".into()));
        }
        let mut bbox = ([f64::MAX; 2], [f64::MIN; 2]);
        for v in &verts {
            for a in 0..2 {
                bbox.0[a] = bbox.0[a].min(v[a]);
                bbox.1[a] = bbox.1[a].max(v[a]);
            }
        }
        let mut scale: f64 = 0.0;
        for a in 0..2 {
            scale = scale.max(bbox.1[a] - bbox.0[a]);
        }
        let mut oriented = Vec::with_capacity(tris.len());
        for (i, t) in tris.into_iter().enumerate() {
            if t.iter().any(|&v| v >= verts.len()) {
                return Err(Error::InvalidMesh(format!(
                    "triangle {i}: vertex out of range"
                )));
            }
            let mut t = t;
            let area2 = signed_area2(&verts, &t);
            if area2.abs() < 1e-12 * scale * scale {
                return Err(Error::InvalidMesh(format!("triangle {i} is degenerate")));
            }
            if area2 < 0.0 {
                t.swap(1, 2);
            }
            oriented.push(t);
        }
        Ok(GraphDomain {
            verts,
            heights,
            tris: oriented,
            bbox,
        })
    }

    /// Sample `phi` on a regular grid and triangulate each cell along the
    /// low-to-high diagonal — the same diagonal the slab mesh generator's
    /// boundary triangulation uses, so the two stay vertex-compatible.
    pub fn from_grid(
        phi: impl Fn(f64, f64) -> f64,
        n: [usize; 2],
        lo: [f64; 2],
        hi: [f64; 2],
    ) -> Result<Self> {
        let [nx, ny] = n;
        if nx == 0 || ny == 0 {
            return Err(Error::InvalidMesh("grid needs at least one cell".into()));
        }
        let mut verts = Vec::with_capacity((nx + 1) * (ny + 1));
        let mut heights = Vec::with_capacity(verts.capacity());
        for j in 0..=ny {
            for i in 0..=nx {
                let x = lo[0] + (hi[0] - lo[0]) * i as f64 / nx as f64;
                let y = lo[1] + (hi[1] - lo[1]) * j as f64 / ny as f64;
                verts.push([x, y]);
                heights.push(phi(x, y));
            }
        }
        let idx = |i: usize, j: usize| j * (nx + 1) + i;
        let mut tris = Vec::with_capacity(2 * nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                tris.push([idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)]);
                tris.push([idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)]);
            }
        }
        GraphDomain::new(verts, heights, tris)
    }

    /// Horizontal gradient of the affine interpolant on triangle `t`.
    pub fn tri_gradient(&self, t: usize) -> Vector2<f64> {
        let [a, b, c] = self.tris[t];
        let d = Matrix2::from_columns(&[
            Vector2::new(
                self.verts[b][0] - self.verts[a][0],
                self.verts[b][1] - self.verts[a][1],
            ),
            Vector2::new(
                self.verts[c][0] - self.verts[a][0],
                self.verts[c][1] - self.verts[a][1],
            ),
        ]);
        let dh = Vector2::new(
            self.heights[b] - self.heights[a],
            self.heights[c] - self.heights[a],
        );
        // grad solves d^T grad = dh.
        d.transpose()
            .try_inverse()
            .expect("validated triangles are invertible")
            * dh
    }

    /// Lipschitz constant: the exact maximum facet gradient magnitude.
    pub fn m(&self) -> f64 {
        (0..self.tris.len())
            .map(|t| self.tri_gradient(t).norm())
            .fold(0.0, f64::max)
    }

    /// Opening angle `arccos(min_T 1/sqrt(1+|grad phi_T|^2))`.
    pub fn theta(&self) -> f64 {
        let min_cos = (0..self.tris.len())
            .map(|t| 1.0 / (1.0 + self.tri_gradient(t).norm_squared()).sqrt())
            .fold(1.0, f64::min);
        min_cos.clamp(-1.0, 1.0).acos()
    }

    /// Character with a single vertical chart `e = (0,0,1)`.
    pub fn character(&self) -> LipschitzCharacter {
        let theta = self.theta();
        LipschitzCharacter {
            m: self.m(),
            theta,
            charts: vec![Chart {
                id: 0,
                e: Vector3::z(),
                theta,
                artificial: false,
            }],
            beta: theta.cos(),
        }
    }

    /// Flat (horizontal) area of triangle `t`.
    pub fn tri_area_flat(&self, t: usize) -> f64 {
        signed_area2(&self.verts, &self.tris[t]).abs() / 2.0
    }

    /// Area of the graph surface over triangle `t`.
    pub fn tri_area_surface(&self, t: usize) -> f64 {
        self.tri_area_flat(t) * (1.0 + self.tri_gradient(t).norm_squared()).sqrt()
    }

    /// The point of the graph surface above vertex `v`.
    pub fn surface_point(&self, v: usize) -> Point3<f64> {
        Point3::new(self.verts[v][0], self.verts[v][1], self.heights[v])
    }

    /// Downward unit normal of the graph over triangle `t` (outward for the
    /// region above the graph).
    pub fn tri_normal(&self, t: usize) -> Vector3<f64> {
        let g = self.tri_gradient(t);
        Vector3::new(g.x, g.y, -1.0) / (1.0 + g.norm_squared()).sqrt()
    }

    /// Vertex-lumped quadrature weights: for each vertex, one third of the
    /// incident triangle areas, both in the flat metric and on the surface.
    pub fn vertex_weights(&self) -> (Vec<f64>, Vec<f64>) {
        let mut flat = vec![0.0; self.verts.len()];
        let mut surf = vec![0.0; self.verts.len()];
        for t in 0..self.tris.len() {
            let af = self.tri_area_flat(t) / 3.0;
            let asf = self.tri_area_surface(t) / 3.0;
            for &v in &self.tris[t] {
                flat[v] += af;
                surf[v] += asf;
            }
        }
        (flat, surf)
    }

    /// Split every triangle in four through edge midpoints; heights at
    /// midpoints are interpolated, so the represented surface is unchanged.
    pub fn refine(&self) -> GraphDomain {
        use std::collections::BTreeMap;
        let mut verts = self.verts.clone();
        let mut heights = self.heights.clone();
        let mut mid: BTreeMap<[usize; 2], usize> = BTreeMap::new();
        let mut midpoint = |a: usize, b: usize, verts: &mut Vec<[f64; 2]>, heights: &mut Vec<f64>| {
            let key = [a.min(b), a.max(b)];
            *mid.entry(key).or_insert_with(|| {
                let v = [
                    (verts[a][0] + verts[b][0]) / 2.0,
                    (verts[a][1] + verts[b][1]) / 2.0,
                ];
                let h = (heights[a] + heights[b]) / 2.0;
                verts.push(v);
                heights.push(h);
                verts.len() - 1
            })
        };
        let mut tris = Vec::with_capacity(4 * self.tris.len());
        for &[a, b, c] in &self.tris {
            let ab = midpoint(a, b, &mut verts, &mut heights);
            let bc = midpoint(b, c, &mut verts, &mut heights);
            let ca = midpoint(c, a, &mut verts, &mut heights);
            tris.extend([[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]]);
        }
        GraphDomain::new(verts, heights, tris).expect("refinement preserves validity")
    }
}

/// The wedge of opening angle `alpha`: the special Lipschitz domain above
/// `phi(x) = cot(alpha/2)|x|`, restricted to a square of the given extent.
/// Returns the height field together with its character: `M = cot(alpha/2)`,
/// `theta = pi/2 - alpha/2`, and one chart per flat ray of the wedge with
/// the ray's inward direction (each ray is flat in its own frame, so the
/// per-chart angles are zero and `beta = 1`).
pub fn make_wedge(alpha: f64, extent: f64) -> Result<(GraphDomain, LipschitzCharacter)> {
    if !(alpha > 0.0 && alpha < std::f64::consts::PI) {
        return Err(Error::InvalidMesh(format!(
            "wedge opening angle {alpha} out of (0, pi)"
        )));
    }
    if extent <= 0.0 {
        return Err(Error::InvalidMesh("wedge needs positive extent".into()));
    }
    let slope = 1.0 / (alpha / 2.0).tan();
    let domain = GraphDomain::from_grid(
        |x, _y| slope * x.abs(),
        [2, 1],
        [-extent, 0.0],
        [extent, extent],
    )?;
    let (s, c) = (alpha / 2.0).sin_cos();
    // Outward normals of the two rays, extruded: (-+cos(a/2), 0, -sin(a/2));
    // chart directions point inward.
    let charts = vec![
        Chart {
            id: 0,
            e: Vector3::new(c, 0.0, s),
            theta: 0.0,
            artificial: false,
        },
        Chart {
            id: 1,
            e: Vector3::new(-c, 0.0, s),
            theta: 0.0,
            artificial: false,
        },
    ];
    let character = LipschitzCharacter {
        m: slope,
        theta: std::f64::consts::FRAC_PI_2 - alpha / 2.0,
        charts,
        beta: 1.0,
    };
    Ok((domain, character))
}

fn signed_area2(verts: &[[f64; 2]], t: &[usize; 3]) -> f64 {
    let [a, b, c] = *t;
    (verts[b][0] - verts[a][0]) * (verts[c][1] - verts[a][1])
        - (verts[b][1] - verts[a][1]) * (verts[c][0] - verts[a][0])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_graph_character() {
        let g = GraphDomain::from_grid(|_, _| 0.0, [3, 3], [0.0, 0.0], [1.0, 1.0]).unwrap();
        assert_eq!(g.m(), 0.0);
        assert_eq!(g.theta(), 0.0);
        let ch = g.character();
        assert_eq!(ch.beta, 1.0);
    }

    #[test]
    fn tilted_plane_gradient_exact() {
        let g = GraphDomain::from_grid(
            |x, y| 2.0 * x - 3.0 * y,
            [2, 2],
            [0.0, 0.0],
            [1.0, 1.0],
        )
        .unwrap();
        for t in 0..g.tris.len() {
            let gr = g.tri_gradient(t);
            assert!((gr - Vector2::new(2.0, -3.0)).norm() < 1e-12);
        }
        assert!((g.m() - 13f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn wedge_character_matches_closed_forms() {
        // Opening angle pi/2: M = 1, theta = pi/4.
        let (g, ch) = make_wedge(std::f64::consts::FRAC_PI_2, 1.0).unwrap();
        assert!((ch.m - 1.0).abs() < 1e-12);
        assert!((g.m() - 1.0).abs() < 1e-12);
        assert!((ch.theta - std::f64::consts::FRAC_PI_4).abs() < 1e-12);
        assert!((g.theta() - ch.theta).abs() < 1e-12);
        // Small angle: M close to 2/alpha.
        let alpha = 0.2;
        let (_, ch) = make_wedge(alpha, 1.0).unwrap();
        assert!((ch.m - 2.0 / alpha).abs() / (2.0 / alpha) < 0.02);
        // Near-flat limit.
        let (_, ch) = make_wedge(std::f64::consts::PI - 1e-9, 1.0).unwrap();
        assert!(ch.m < 1e-8);
        assert!(ch.theta < 1e-8);
    }

    #[test]
    fn wedge_identity_over_sampled_angles() {
        // cos(theta) = sin(alpha/2) across the admissible range.
        for k in 1..=50 {
            let alpha = std::f64::consts::PI * k as f64 / 51.0;
            let (_, ch) = make_wedge(alpha, 1.0).unwrap();
            assert!(
                (ch.theta.cos() - (alpha / 2.0).sin()).abs() < 1e-12,
                "alpha = {alpha}"
            );
        }
    }

    #[test]
    fn refinement_preserves_character_and_area() {
        let (g, _) = make_wedge(1.0, 2.0).unwrap();
        let fine = g.refine().refine();
        assert!((g.m() - fine.m()).abs() < 1e-12);
        assert!((g.theta() - fine.theta()).abs() < 1e-12);
        let area: f64 = (0..g.tris.len()).map(|t| g.tri_area_surface(t)).sum();
        let area_fine: f64 = (0..fine.tris.len()).map(|t| fine.tri_area_surface(t)).sum();
        assert!((area - area_fine).abs() < 1e-10 * area);
    }

    #[test]
    fn lumped_weights_sum_to_area() {
        let (g, _) = make_wedge(2.0, 1.0).unwrap();
        let (flat, surf) = g.vertex_weights();
        let flat_sum: f64 = flat.iter().sum();
        let surf_sum: f64 = surf.iter().sum();
        assert!((flat_sum - 2.0).abs() < 1e-12); // 2 x 1 rectangle
        let exact: f64 = (0..g.tris.len()).map(|t| g.tri_area_surface(t)).sum();
        assert!((surf_sum - exact).abs() < 1e-12);
    }
}
