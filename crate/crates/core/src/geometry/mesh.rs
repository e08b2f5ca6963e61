//! Conforming tetrahedral meshes with oriented boundary and chart metadata.
//!
//! A [`TetMesh`] stores positively oriented tetrahedra plus everything the
//! rest of the crate derives from them once: a deterministic global edge
//! numbering (lexicographically sorted vertex pairs), per-tet edge incidences
//! with orientation signs, and the boundary with per-face outward normals.
//! Boundary faces carry a chart id; charts carry the graph direction used by
//! the Lipschitz character and an `artificial` flag distinguishing physical
//! boundary from truncation walls.

use std::collections::BTreeMap;

use nalgebra::{Matrix3, Point3, Vector3};

use crate::{Error, Result};

/// Local edges of a tetrahedron `[v0,v1,v2,v3]`.
pub const LOCAL_EDGES: [[usize; 2]; 6] = [[0, 1], [0, 2], [0, 3], [1, 2], [1, 3], [2, 3]];

/// Local faces; face `i` is opposite vertex `i`.
pub const LOCAL_FACES: [[usize; 3]; 4] = [[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]];

/// One patch of the boundary that is a Lipschitz graph in direction `e`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Chart {
    pub id: u32,
    /// Unit vector pointing from the boundary into the domain; the chart's
    /// boundary piece is a graph over the plane orthogonal to `e`.
    pub e: Vector3<f64>,
    /// Largest angle between `-e` and an outward face normal in the chart.
    /// Zero for a flat face orthogonal to `e`; must stay below a right angle.
    pub theta: f64,
    /// True when the chart truncates an unbounded domain (slab top, wedge
    /// walls) rather than belonging to the physical boundary under study.
    pub artificial: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct BoundaryFace {
    /// Vertex indices, sorted ascending (orientation lives in `normal`).
    pub verts: [usize; 3],
    /// Index of the unique tet owning this face.
    pub tet: usize,
    /// Outward unit normal.
    pub normal: Vector3<f64>,
    pub area: f64,
    pub chart: u32,
    /// Copied from the owning chart.
    pub artificial: bool,
}

impl BoundaryFace {
    pub fn centroid(&self, points: &[Point3<f64>]) -> Point3<f64> {
        Point3::from(
            (points[self.verts[0]].coords
                + points[self.verts[1]].coords
                + points[self.verts[2]].coords)
                / 3.0,
        )
    }
}

#[derive(Debug, Clone)]
pub struct TetMesh {
    pub points: Vec<Point3<f64>>,
    /// Tetrahedra, each with positive signed volume.
    pub tets: Vec<[usize; 4]>,
    /// Global edges as sorted vertex pairs, lexicographically ordered.
    pub edges: Vec<[usize; 2]>,
    /// For each tet, global edge index of each of [`LOCAL_EDGES`].
    pub tet_edges: Vec<[usize; 6]>,
    /// +1 when the local edge runs from lower to higher global vertex id.
    pub tet_edge_signs: Vec<[f64; 6]>,
    pub boundary: Vec<BoundaryFace>,
    pub charts: Vec<Chart>,
}

impl TetMesh {
    /// Build a mesh from raw vertices and connectivity, validating as we go:
    /// every tet nondegenerate, every face shared by at most two tets, the
    /// mesh connected through interior faces. Tets are reoriented to positive
    /// volume. Charts start empty; generators attach them afterwards.
    pub fn new(points: Vec<Point3<f64>>, tets: Vec<[usize; 4]>) -> Result<TetMesh> {
        Self::build(points, tets, false)
    }

    /// Like [`TetMesh::new`] but rejecting negatively oriented input tets
    /// instead of silently reorienting them — used by the mesh loader, where
    /// a flipped tet means a corrupted file.
    pub fn new_strict(points: Vec<Point3<f64>>, tets: Vec<[usize; 4]>) -> Result<TetMesh> {
        Self::build(points, tets, true)
    }

    fn build(points: Vec<Point3<f64>>, tets_in: Vec<[usize; 4]>, strict: bool) -> Result<TetMesh> {
        if points.is_empty() || tets_in.is_empty() {
            return Err(Error::InvalidMesh("empty mesh".into()));
        }
        let n = points.len();
        let mut scale: f64 = 0.0;
        for t in &tets_in {
            for le in LOCAL_EDGES {
                if t[le[0]] < n && t[le[1]] < n {
                    scale = scale.max((points[t[le[0]]] - points[t[le[1]]]).norm());
                }
            }
        }
        let mut tets = Vec::with_capacity(tets_in.len());
        for (i, t) in tets_in.into_iter().enumerate() {
            let mut t = t;
            if t.iter().any(|&v| v >= n) {
                return Err(Error::InvalidMesh(format!("tet {i}: vertex out of range")));
            }
            let mut sorted = t;
            sorted.sort_unstable();
            if sorted.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::InvalidMesh(format!("tet {i}: repeated vertex")));
            }
            let vol = signed_volume(&points, &t);
            if vol.abs() < 1e-12 * scale.powi(3) {
                return Err(Error::InvalidMesh(format!("tet {i} is degenerate")));
            }
            if vol < 0.0 {
                if strict {
                    return Err(Error::InvalidMesh(format!(
                        "tet {i} has negative signed volume"
                    )));
                }
                t.swap(2, 3);
            }
            tets.push(t);
        }

        // Global edge numbering: sorted pairs in lexicographic order.
        let mut edge_ids: BTreeMap<[usize; 2], usize> = BTreeMap::new();
        for t in &tets {
            for le in LOCAL_EDGES {
                let (a, b) = (t[le[0]], t[le[1]]);
                edge_ids.entry([a.min(b), a.max(b)]).or_insert(0);
            }
        }
        let mut edges = Vec::with_capacity(edge_ids.len());
        for (i, (e, id)) in edge_ids.iter_mut().enumerate() {
            *id = i;
            edges.push(*e);
        }
        let mut tet_edges = Vec::with_capacity(tets.len());
        let mut tet_edge_signs = Vec::with_capacity(tets.len());
        for t in &tets {
            let mut g = [0usize; 6];
            let mut s = [0f64; 6];
            for (k, le) in LOCAL_EDGES.iter().enumerate() {
                let (a, b) = (t[le[0]], t[le[1]]);
                g[k] = edge_ids[&[a.min(b), a.max(b)]];
                s[k] = if a < b { 1.0 } else { -1.0 };
            }
            tet_edges.push(g);
            tet_edge_signs.push(s);
        }

        // Face incidence for manifoldness, boundary extraction, connectivity.
        let mut faces: BTreeMap<[usize; 3], Vec<usize>> = BTreeMap::new();
        for (ti, t) in tets.iter().enumerate() {
            for lf in LOCAL_FACES {
                let mut f = [t[lf[0]], t[lf[1]], t[lf[2]]];
                f.sort_unstable();
                faces.entry(f).or_default().push(ti);
            }
        }
        let mut uf = UnionFind::new(tets.len());
        let mut bfaces = Vec::new();
        for (f, owners) in &faces {
            match owners.len() {
                1 => bfaces.push((*f, owners[0])),
                2 => uf.union(owners[0], owners[1]),
                k => {
                    return Err(Error::InvalidMesh(format!("face {f:?} shared by {k} tets")));
                }
            }
        }
        let root = uf.find(0);
        if (0..tets.len()).any(|t| uf.find(t) != root) {
            return Err(Error::InvalidMesh("mesh is disconnected".into()));
        }

        let mut mesh = TetMesh {
            points,
            tets,
            edges,
            tet_edges,
            tet_edge_signs,
            boundary: Vec::new(),
            charts: Vec::new(),
        };
        for (f, tet) in bfaces {
            let (normal, area) = mesh.outward_face(f, tet)?;
            mesh.boundary.push(BoundaryFace {
                verts: f,
                tet,
                normal,
                area,
                chart: 0,
                artificial: false,
            });
        }
        Ok(mesh)
    }

    fn outward_face(&self, f: [usize; 3], tet: usize) -> Result<(Vector3<f64>, f64)> {
        let [a, b, c] = f;
        let opp = self.tets[tet]
            .iter()
            .copied()
            .find(|v| !f.contains(v))
            .ok_or_else(|| Error::InvalidMesh("face not part of owner tet".into()))?;
        let pa = self.points[a];
        let mut n = (self.points[b] - pa).cross(&(self.points[c] - pa));
        if n.dot(&(self.points[opp] - pa)) > 0.0 {
            n = -n;
        }
        let len = n.norm();
        if len == 0.0 {
            return Err(Error::InvalidMesh("degenerate boundary face".into()));
        }
        Ok((n / len, 0.5 * len))
    }

    /// Attach charts: give each chart its graph direction and artificial
    /// flag, classify every boundary face to a chart id, and record each
    /// chart's opening angle `theta = arccos(min over faces of -e.nu)`.
    /// Errors if some face opens a right angle or more against its chart.
    pub fn assign_charts(
        &mut self,
        directions: &[(u32, Vector3<f64>, bool)],
        classify: impl Fn(Point3<f64>, Vector3<f64>) -> u32,
    ) -> Result<()> {
        let labels: Vec<u32> = self
            .boundary
            .iter()
            .map(|f| classify(f.centroid(&self.points), f.normal))
            .collect();
        self.apply_chart_labels(directions, &labels)
    }

    /// Like [`Self::assign_charts`] but classifying by the face's vertex
    /// indices — robust when faces must be identified by lattice position
    /// rather than by geometry.
    pub fn assign_charts_by_verts(
        &mut self,
        directions: &[(u32, Vector3<f64>, bool)],
        classify: impl Fn(&[usize; 3]) -> u32,
    ) -> Result<()> {
        let labels: Vec<u32> = self.boundary.iter().map(|f| classify(&f.verts)).collect();
        self.apply_chart_labels(directions, &labels)
    }

    fn apply_chart_labels(
        &mut self,
        directions: &[(u32, Vector3<f64>, bool)],
        labels: &[u32],
    ) -> Result<()> {
        let mut min_dot = vec![1.0f64; directions.len()];
        let ids: BTreeMap<u32, usize> = directions
            .iter()
            .enumerate()
            .map(|(i, (id, _, _))| (*id, i))
            .collect();
        for (bi, &chart) in labels.iter().enumerate() {
            let slot = *ids
                .get(&chart)
                .ok_or_else(|| Error::Chart(format!("face assigned to unknown chart {chart}")))?;
            let (_, e, artificial) = directions[slot];
            self.boundary[bi].chart = chart;
            self.boundary[bi].artificial = artificial;
            let dot = (-self.boundary[bi].normal.dot(&e)).clamp(-1.0, 1.0);
            if dot <= 1e-9 {
                return Err(Error::Chart(format!(
                    "chart {chart}: face normal opens a right angle against graph direction"
                )));
            }
            min_dot[slot] = min_dot[slot].min(dot);
        }
        self.charts = directions
            .iter()
            .zip(min_dot)
            .map(|(&(id, e, artificial), dot)| Chart {
                id,
                e,
                theta: dot.acos(),
                artificial,
            })
            .collect();
        Ok(())
    }

    pub fn tet_points(&self, t: usize) -> [Point3<f64>; 4] {
        let v = self.tets[t];
        [
            self.points[v[0]],
            self.points[v[1]],
            self.points[v[2]],
            self.points[v[3]],
        ]
    }

    /// Volume of tet `t` (tets are stored positively oriented).
    pub fn tet_volume(&self, t: usize) -> f64 {
        signed_volume(&self.points, &self.tets[t]).abs()
    }

    /// Gradients of the four barycentric coordinates on tet `t`.
    pub fn tet_gradients(&self, t: usize) -> [Vector3<f64>; 4] {
        let p = self.tet_points(t);
        let d = Matrix3::from_columns(&[p[1] - p[0], p[2] - p[0], p[3] - p[0]]);
        let inv = d.try_inverse().expect("validated tets are invertible");
        // Rows of the inverse are the gradients of barycentric coords 1..3.
        let g1 = Vector3::new(inv[(0, 0)], inv[(0, 1)], inv[(0, 2)]);
        let g2 = Vector3::new(inv[(1, 0)], inv[(1, 1)], inv[(1, 2)]);
        let g3 = Vector3::new(inv[(2, 0)], inv[(2, 1)], inv[(2, 2)]);
        [-(g1 + g2 + g3), g1, g2, g3]
    }

    pub fn volume(&self) -> f64 {
        (0..self.tets.len()).map(|t| self.tet_volume(t)).sum()
    }

    pub fn boundary_area(&self) -> f64 {
        self.boundary.iter().map(|f| f.area).sum()
    }

    /// Area of the physical (non-artificial) boundary.
    pub fn physical_boundary_area(&self) -> f64 {
        self.boundary
            .iter()
            .filter(|f| !f.artificial)
            .map(|f| f.area)
            .sum()
    }

    /// Longest edge.
    pub fn h_max(&self) -> f64 {
        self.edges
            .iter()
            .map(|e| (self.points[e[0]] - self.points[e[1]]).norm())
            .fold(0.0, f64::max)
    }

    /// Sorted indices of vertices lying on the boundary.
    pub fn boundary_vertices(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.boundary.iter().flat_map(|f| f.verts).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// Sorted global edge indices of edges lying on the boundary.
    pub fn boundary_edge_indices(&self) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .boundary
            .iter()
            .flat_map(|f| {
                let [a, b, c] = f.verts;
                [[a, b], [a, c], [b, c]]
            })
            .map(|e| self.edge_index(e).expect("boundary edge exists"))
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Global index of the edge with the given sorted vertex pair.
    pub fn edge_index(&self, e: [usize; 2]) -> Option<usize> {
        self.edges.binary_search(&e).ok()
    }

    /// The three global edge indices of a boundary face, ordered as the
    /// vertex pairs (v0,v1), (v0,v2), (v1,v2) of its sorted vertex triple.
    pub fn face_edge_indices(&self, face: &BoundaryFace) -> [usize; 3] {
        let [a, b, c] = face.verts;
        [
            self.edge_index([a, b]).expect("face edge exists"),
            self.edge_index([a, c]).expect("face edge exists"),
            self.edge_index([b, c]).expect("face edge exists"),
        ]
    }
}

fn signed_volume(points: &[Point3<f64>], t: &[usize; 4]) -> f64 {
    let d = Matrix3::from_columns(&[
        points[t[1]] - points[t[0]],
        points[t[2]] - points[t[0]],
        points[t[3]] - points[t[0]],
    ]);
    d.determinant() / 6.0
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }
    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }
    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra] = rb;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference_tet() -> TetMesh {
        let points = vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
            Point3::new(0.0, 0.0, 1.0),
        ];
        TetMesh::new(points, vec![[0, 1, 2, 3]]).unwrap()
    }

    #[test]
    fn single_tet_metrics() {
        let m = reference_tet();
        assert!((m.tet_volume(0) - 1.0 / 6.0).abs() < 1e-15);
        assert_eq!(m.edges.len(), 6);
        assert_eq!(m.boundary.len(), 4);
        let g = m.tet_gradients(0);
        let s = g[0] + g[1] + g[2] + g[3];
        assert!(s.norm() < 1e-14);
        assert!((g[1] - Vector3::new(1.0, 0.0, 0.0)).norm() < 1e-14);
        // Outward normals: the slanted face has normal (1,1,1)/sqrt(3).
        let slant = m.boundary.iter().find(|f| f.verts == [1, 2, 3]).unwrap();
        assert!((slant.normal - Vector3::new(1.0, 1.0, 1.0).normalize()).norm() < 1e-14);
        assert!((m.boundary_area() - (1.5 + 3f64.sqrt() / 2.0)).abs() < 1e-14);
        for f in &m.boundary {
            assert!((f.normal.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn orientation_normalized_or_rejected() {
        let points = vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
            Point3::new(0.0, 0.0, 1.0),
        ];
        // [0,2,1,3] is negatively oriented.
        let m = TetMesh::new(points.clone(), vec![[0, 2, 1, 3]]).unwrap();
        assert!(signed_volume(&m.points, &m.tets[0]) > 0.0);
        assert!(TetMesh::new_strict(points, vec![[0, 2, 1, 3]]).is_err());
    }

    #[test]
    fn edge_signs_match_vertex_order() {
        let points = vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
            Point3::new(0.0, 0.0, 1.0),
        ];
        let m = TetMesh::new(points, vec![[0, 2, 1, 3]]).unwrap();
        // After reorienting, vertices are [0,2,3,1]; local edge 0 is (0,2):
        // ascending, sign +1; local edge 3 is (2,3) ascending; local edge 5
        // is (3,1): descending, sign -1.
        let t = m.tets[0];
        for (k, le) in LOCAL_EDGES.iter().enumerate() {
            let (a, b) = (t[le[0]], t[le[1]]);
            let expect = if a < b { 1.0 } else { -1.0 };
            assert_eq!(m.tet_edge_signs[0][k], expect);
            let ge = m.edges[m.tet_edges[0][k]];
            assert_eq!(ge, [a.min(b), a.max(b)]);
        }
    }

    #[test]
    fn rejects_broken_meshes() {
        let points = vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
            Point3::new(1.0, 1.0, 0.0),
        ];
        // Flat tet.
        assert!(TetMesh::new(points.clone(), vec![[0, 1, 2, 3]]).is_err());
        // Out-of-range index.
        assert!(TetMesh::new(points, vec![[0, 1, 2, 9]]).is_err());
    }

    #[test]
    fn disconnected_rejected() {
        let mut points = Vec::new();
        for s in [0.0, 10.0] {
            points.extend([
                Point3::new(s, 0.0, 0.0),
                Point3::new(s + 1.0, 0.0, 0.0),
                Point3::new(s, 1.0, 0.0),
                Point3::new(s, 0.0, 1.0),
            ]);
        }
        let r = TetMesh::new(points, vec![[0, 1, 2, 3], [4, 5, 6, 7]]);
        assert!(r.is_err());
    }

    #[test]
    fn chart_assignment_records_opening_angle() {
        let mut m = reference_tet();
        // One chart per face, graph directions opposite the outward normals
        // except the bottom chart, whose direction is tilted by 0.3 rad to
        // exercise the opening-angle bookkeeping.
        let tilt = 0.3f64;
        let slant = Vector3::new(1.0, 1.0, 1.0).normalize();
        m.assign_charts(
            &[
                (0, Vector3::new(tilt.sin(), 0.0, tilt.cos()), false),
                (1, Vector3::new(1.0, 0.0, 0.0), false),
                (2, Vector3::new(0.0, 1.0, 0.0), true),
                (3, -slant, false),
            ],
            |_c, n| {
                if n.z < -0.5 {
                    0
                } else if n.x < -0.5 {
                    1
                } else if n.y < -0.5 {
                    2
                } else {
                    3
                }
            },
        )
        .unwrap();
        assert!((m.charts[0].theta - tilt).abs() < 1e-12);
        assert!(m.charts[1].theta.abs() < 1e-6);
        assert!(m.charts[3].theta.abs() < 1e-6);
        // Artificial flag propagates to faces.
        let y_face = m.boundary.iter().find(|f| f.chart == 2).unwrap();
        assert!(y_face.artificial);
        assert!((m.physical_boundary_area() - (m.boundary_area() - y_face.area)).abs() < 1e-12);
    }
}
