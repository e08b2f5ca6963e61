//! Finite element spaces on tetrahedral meshes.
//!
//! Three conforming spaces cover everything the estimates need: continuous
//! piecewise-linear and piecewise-quadratic scalars (H^1), and the lowest
//! Whitney edge space (H(curl)). Edge degrees of freedom are tangential
//! line integrals along edges oriented from the lower to the higher global
//! vertex id; the per-tet sign table recorded on the mesh reconciles that
//! global orientation with the local basis. Whitney interpolation commutes
//! with the differential: interpolating a gradient gives an exactly
//! curl-free coefficient vector, and interpolating any field whose curl is
//! constant reproduces that curl exactly — both facts are load-bearing for
//! the verification suites and are pinned by tests here.

use faer::sparse::{SparseColMat, Triplet};
use nalgebra::{Point3, Vector3};
use num_complex::Complex64;

use crate::geometry::TetMesh;
use crate::quad::edge_rule;
use crate::{Error, Result};

/// Coefficient scalars: real or complex.
pub trait Coeff:
    Copy
    + Default
    + std::ops::Add<Output = Self>
    + std::ops::Sub<Output = Self>
    + std::ops::Neg<Output = Self>
    + std::ops::AddAssign
    + std::ops::Mul<f64, Output = Self>
    + Send
    + Sync
    + 'static
{
    fn abs_sq(self) -> f64;
}

impl Coeff for f64 {
    fn abs_sq(self) -> f64 {
        self * self
    }
}

impl Coeff for Complex64 {
    fn abs_sq(self) -> f64 {
        self.norm_sqr()
    }
}

/// Squared Euclidean magnitude of a coefficient triple.
pub fn norm_sq3<T: Coeff>(v: &[T; 3]) -> f64 {
    v[0].abs_sq() + v[1].abs_sq() + v[2].abs_sq()
}

/// `acc += c * v` componentwise.
pub fn axpy3<T: Coeff>(acc: &mut [T; 3], c: T, v: &Vector3<f64>) {
    acc[0] += c * v.x;
    acc[1] += c * v.y;
    acc[2] += c * v.z;
}

/// Barycentric coordinates of a reference-tet point `(x, y, z)`.
pub fn bary_of_ref(p: &[f64; 3]) -> [f64; 4] {
    [1.0 - p[0] - p[1] - p[2], p[0], p[1], p[2]]
}

/// Physical point of barycentric coordinates in tet `t`.
pub fn point_of_bary(mesh: &TetMesh, t: usize, b: &[f64; 4]) -> Point3<f64> {
    let pts = mesh.tet_points(t);
    Point3::from(
        pts[0].coords * b[0] + pts[1].coords * b[1] + pts[2].coords * b[2] + pts[3].coords * b[3],
    )
}

// ---------------------------------------------------------------------------
// Scalar spaces

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalarSpace {
    P1,
    P2,
}

/// A continuous scalar finite element field.
#[derive(Debug, Clone)]
pub struct ScalarField {
    pub space: ScalarSpace,
    pub coeffs: Vec<f64>,
}

/// Number of scalar dofs: vertices for P1, vertices + edges for P2.
pub fn scalar_ndofs(mesh: &TetMesh, space: ScalarSpace) -> usize {
    match space {
        ScalarSpace::P1 => mesh.points.len(),
        ScalarSpace::P2 => mesh.points.len() + mesh.edges.len(),
    }
}

/// Nodal interpolation: vertex values, plus edge-midpoint values for P2.
pub fn interpolate_scalar(
    mesh: &TetMesh,
    space: ScalarSpace,
    f: impl Fn(&Point3<f64>) -> f64,
) -> ScalarField {
    let mut coeffs: Vec<f64> = mesh.points.iter().map(&f).collect();
    if space == ScalarSpace::P2 {
        coeffs.reserve(mesh.edges.len());
        for e in &mesh.edges {
            let mid = Point3::from((mesh.points[e[0]].coords + mesh.points[e[1]].coords) / 2.0);
            coeffs.push(f(&mid));
        }
    }
    ScalarField { space, coeffs }
}

impl ScalarField {
    /// Value at barycentric coordinates of tet `t`.
    pub fn eval(&self, mesh: &TetMesh, t: usize, b: &[f64; 4]) -> f64 {
        let tet = &mesh.tets[t];
        match self.space {
            ScalarSpace::P1 => (0..4).map(|i| b[i] * self.coeffs[tet[i]]).sum(),
            ScalarSpace::P2 => {
                let mut v: f64 = (0..4)
                    .map(|i| b[i] * (2.0 * b[i] - 1.0) * self.coeffs[tet[i]])
                    .sum();
                let nv = mesh.points.len();
                for (le, &[i, j]) in crate::geometry::mesh::LOCAL_EDGES.iter().enumerate() {
                    let ge = mesh.tet_edges[t][le];
                    v += 4.0 * b[i] * b[j] * self.coeffs[nv + ge];
                }
                v
            }
        }
    }

    /// Gradient at barycentric coordinates of tet `t`.
    pub fn grad(&self, mesh: &TetMesh, t: usize, b: &[f64; 4]) -> Vector3<f64> {
        let tet = &mesh.tets[t];
        let g = mesh.tet_gradients(t);
        match self.space {
            ScalarSpace::P1 => (0..4).map(|i| g[i] * self.coeffs[tet[i]]).sum(),
            ScalarSpace::P2 => {
                let mut v: Vector3<f64> = (0..4)
                    .map(|i| g[i] * ((4.0 * b[i] - 1.0) * self.coeffs[tet[i]]))
                    .sum();
                let nv = mesh.points.len();
                for (le, &[i, j]) in crate::geometry::mesh::LOCAL_EDGES.iter().enumerate() {
                    let ge = mesh.tet_edges[t][le];
                    v += (g[i] * b[j] + g[j] * b[i]) * (4.0 * self.coeffs[nv + ge]);
                }
                v
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Nodal vector fields (components in H^1)

/// A continuous piecewise-linear vector field, one coefficient triple per
/// vertex. The H^1 trace and extension suites sample from this space.
#[derive(Debug, Clone)]
pub struct NodalVectorField<T: Coeff> {
    pub coeffs: Vec<[T; 3]>,
}

impl<T: Coeff> NodalVectorField<T> {
    pub fn interpolate(mesh: &TetMesh, f: impl Fn(&Point3<f64>) -> [T; 3]) -> Self {
        NodalVectorField {
            coeffs: mesh.points.iter().map(f).collect(),
        }
    }

    pub fn eval(&self, mesh: &TetMesh, t: usize, b: &[f64; 4]) -> [T; 3] {
        let tet = &mesh.tets[t];
        let mut v = [T::default(); 3];
        for i in 0..4 {
            for k in 0..3 {
                v[k] += self.coeffs[tet[i]][k] * b[i];
            }
        }
        v
    }

    /// Jacobian rows: `rows[k] = grad u_k` (constant per tet).
    pub fn jacobian(&self, mesh: &TetMesh, t: usize) -> [[T; 3]; 3] {
        let tet = &mesh.tets[t];
        let g = mesh.tet_gradients(t);
        let mut rows = [[T::default(); 3]; 3];
        for i in 0..4 {
            for k in 0..3 {
                for a in 0..3 {
                    rows[k][a] += self.coeffs[tet[i]][k] * g[i][a];
                }
            }
        }
        rows
    }
}

// ---------------------------------------------------------------------------
// Whitney edge space

/// A field in the lowest-order edge space, one coefficient per mesh edge.
/// The coefficient is the tangential line integral along the edge, oriented
/// from the lower to the higher global vertex id.
#[derive(Debug, Clone)]
pub struct EdgeField<T: Coeff> {
    pub coeffs: Vec<T>,
}

impl<T: Coeff> EdgeField<T> {
    pub fn zero(mesh: &TetMesh) -> Self {
        EdgeField {
            coeffs: vec![T::default(); mesh.edges.len()],
        }
    }

    /// Edge interpolation by 4-point Gauss line integrals per edge.
    pub fn interpolate(mesh: &TetMesh, f: impl Fn(&Point3<f64>) -> [T; 3]) -> Self {
        let (xs, ws) = edge_rule(4);
        let coeffs = mesh
            .edges
            .iter()
            .map(|&[a, b]| {
                let pa = mesh.points[a].coords;
                let pb = mesh.points[b].coords;
                let d = pb - pa;
                let mut dof = T::default();
                for (&x, &w) in xs.iter().zip(&ws) {
                    let p = Point3::from(pa + d * x);
                    let v = f(&p);
                    dof += (v[0] * d.x + v[1] * d.y + v[2] * d.z) * w;
                }
                dof
            })
            .collect();
        EdgeField { coeffs }
    }

    /// Value at barycentric coordinates of tet `t`.
    pub fn eval(&self, mesh: &TetMesh, t: usize, b: &[f64; 4]) -> [T; 3] {
        let g = mesh.tet_gradients(t);
        let mut v = [T::default(); 3];
        for (le, &[i, j]) in crate::geometry::mesh::LOCAL_EDGES.iter().enumerate() {
            let c = self.coeffs[mesh.tet_edges[t][le]] * mesh.tet_edge_signs[t][le];
            let basis = g[j] * b[i] - g[i] * b[j];
            axpy3(&mut v, c, &basis);
        }
        v
    }

    /// Curl on tet `t` (constant).
    pub fn curl(&self, mesh: &TetMesh, t: usize) -> [T; 3] {
        let g = mesh.tet_gradients(t);
        let mut v = [T::default(); 3];
        for (le, &[i, j]) in crate::geometry::mesh::LOCAL_EDGES.iter().enumerate() {
            let c = self.coeffs[mesh.tet_edges[t][le]] * mesh.tet_edge_signs[t][le];
            let basis = 2.0 * g[i].cross(&g[j]);
            axpy3(&mut v, c, &basis);
        }
        v
    }
}

/// Local Whitney basis values at barycentric coordinates: six vectors in
/// local edge order, signed to match the global edge orientation.
pub fn whitney_values(mesh: &TetMesh, t: usize, b: &[f64; 4]) -> [Vector3<f64>; 6] {
    let g = mesh.tet_gradients(t);
    let mut out = [Vector3::zeros(); 6];
    for (le, &[i, j]) in crate::geometry::mesh::LOCAL_EDGES.iter().enumerate() {
        out[le] = (g[j] * b[i] - g[i] * b[j]) * mesh.tet_edge_signs[t][le];
    }
    out
}

/// Local Whitney curls on tet `t` (constant), globally signed.
pub fn whitney_curls(mesh: &TetMesh, t: usize) -> [Vector3<f64>; 6] {
    let g = mesh.tet_gradients(t);
    let mut out = [Vector3::zeros(); 6];
    for (le, &[i, j]) in crate::geometry::mesh::LOCAL_EDGES.iter().enumerate() {
        out[le] = 2.0 * g[i].cross(&g[j]) * mesh.tet_edge_signs[t][le];
    }
    out
}

// ---------------------------------------------------------------------------
// Boundary face helpers

/// Local vertex indices (in the owning tet) of a boundary face's sorted
/// vertex triple, plus the local index of the opposite vertex.
pub fn face_local_indices(mesh: &TetMesh, face_verts: &[usize; 3], tet: usize) -> ([usize; 3], usize) {
    let t = &mesh.tets[tet];
    let mut local = [usize::MAX; 3];
    let mut opp = usize::MAX;
    for li in 0..4 {
        if let Some(k) = face_verts.iter().position(|&v| v == t[li]) {
            local[k] = li;
        } else {
            opp = li;
        }
    }
    debug_assert!(local.iter().all(|&l| l < 4) && opp < 4);
    (local, opp)
}

/// Tet barycentric coordinates of a point given by triangle barycentric
/// coordinates `(m0, m1, m2)` on a boundary face.
pub fn face_bary_to_tet(local: &[usize; 3], m: &[f64; 3]) -> [f64; 4] {
    let mut b = [0.0; 4];
    for k in 0..3 {
        b[local[k]] = m[k];
    }
    b
}

// ---------------------------------------------------------------------------
// Scalar P1 assembly and the discrete-harmonic lift

/// P1 stiffness matrix (Dirichlet integrand `grad u . grad v`).
pub fn p1_stiffness(mesh: &TetMesh) -> Result<SparseColMat<usize, f64>> {
    let n = mesh.points.len();
    let mut triplets = Vec::with_capacity(16 * mesh.tets.len());
    for t in 0..mesh.tets.len() {
        let vol = mesh.tet_volume(t);
        let g = mesh.tet_gradients(t);
        let tet = &mesh.tets[t];
        for i in 0..4 {
            for j in 0..4 {
                triplets.push(Triplet::new(tet[i], tet[j], vol * g[i].dot(&g[j])));
            }
        }
    }
    triplets.sort_by_key(|t| (t.col, t.row));
    SparseColMat::try_new_from_triplets(n, n, &triplets)
        .map_err(|e| Error::Solve(format!("stiffness assembly failed: {e:?}")))
}

/// Discrete-harmonic extension of boundary vertex values into the mesh:
/// solves the P1 Laplace system on interior vertices with the given
/// Dirichlet data. Returns P1 coefficients on all vertices.
pub fn p1_harmonic_lift(mesh: &TetMesh, boundary_value: impl Fn(usize) -> f64) -> Result<Vec<f64>> {
    use faer::prelude::*;

    let n = mesh.points.len();
    let bset = mesh.boundary_vertices();
    let mut is_bnd = vec![false; n];
    for &v in &bset {
        is_bnd[v] = true;
    }
    let mut interior = Vec::new();
    let mut index_of = vec![usize::MAX; n];
    for v in 0..n {
        if !is_bnd[v] {
            index_of[v] = interior.len();
            interior.push(v);
        }
    }
    let mut values = vec![0.0; n];
    for &v in &bset {
        values[v] = boundary_value(v);
    }
    if interior.is_empty() {
        return Ok(values);
    }

    let ni = interior.len();
    let mut triplets = Vec::new();
    let mut rhs = faer::Mat::<f64>::zeros(ni, 1);
    for t in 0..mesh.tets.len() {
        let vol = mesh.tet_volume(t);
        let g = mesh.tet_gradients(t);
        let tet = &mesh.tets[t];
        for i in 0..4 {
            if is_bnd[tet[i]] {
                continue;
            }
            let ri = index_of[tet[i]];
            for j in 0..4 {
                let k = vol * g[i].dot(&g[j]);
                if is_bnd[tet[j]] {
                    rhs[(ri, 0)] -= k * values[tet[j]];
                } else {
                    triplets.push(Triplet::new(ri, index_of[tet[j]], k));
                }
            }
        }
    }
    triplets.sort_by_key(|t| (t.col, t.row));
    let a = SparseColMat::try_new_from_triplets(ni, ni, &triplets)
        .map_err(|e| Error::Solve(format!("lift assembly failed: {e:?}")))?;
    let llt = a
        .sp_cholesky(faer::Side::Lower)
        .map_err(|e| Error::Solve(format!("lift factorization failed: {e:?}")))?;
    let x = llt.solve(&rhs);
    for (k, &v) in interior.iter().enumerate() {
        values[v] = x[(k, 0)];
    }
    Ok(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::generators::unit_cube;
    use crate::quad::tet_rule;

    #[test]
    fn p1_reproduces_linear_fields() {
        let mesh = unit_cube(2).unwrap();
        let f = |p: &Point3<f64>| 3.0 * p.x - 2.0 * p.y + 0.5 * p.z + 1.0;
        let u = interpolate_scalar(&mesh, ScalarSpace::P1, f);
        let rule = tet_rule(2);
        for t in 0..mesh.tets.len() {
            for q in &rule.points {
                let b = bary_of_ref(q);
                let p = point_of_bary(&mesh, t, &b);
                assert!((u.eval(&mesh, t, &b) - f(&p)).abs() < 1e-13);
            }
            let g = u.grad(&mesh, t, &[0.25; 4]);
            assert!((g - Vector3::new(3.0, -2.0, 0.5)).norm() < 1e-12);
        }
    }

    #[test]
    fn p2_reproduces_quadratics() {
        let mesh = unit_cube(1).unwrap();
        let f = |p: &Point3<f64>| p.x * p.x - 2.0 * p.y * p.z + p.z + 0.25;
        let gf = |p: &Point3<f64>| Vector3::new(2.0 * p.x, -2.0 * p.z, -2.0 * p.y + 1.0);
        let u = interpolate_scalar(&mesh, ScalarSpace::P2, f);
        let rule = tet_rule(3);
        for t in 0..mesh.tets.len() {
            for q in &rule.points {
                let b = bary_of_ref(q);
                let p = point_of_bary(&mesh, t, &b);
                assert!((u.eval(&mesh, t, &b) - f(&p)).abs() < 1e-12);
                assert!((u.grad(&mesh, t, &b) - gf(&p)).norm() < 1e-11);
            }
        }
    }

    #[test]
    fn edge_space_contains_rigid_fields() {
        // Fields a + b x x are reproduced exactly by edge interpolation.
        let mesh = unit_cube(2).unwrap();
        let a = Vector3::new(0.3, -1.0, 0.7);
        let b = Vector3::new(-0.2, 0.5, 1.1);
        let f = |p: &Point3<f64>| {
            let v = a + b.cross(&p.coords);
            [v.x, v.y, v.z]
        };
        let u = EdgeField::<f64>::interpolate(&mesh, f);
        let rule = tet_rule(2);
        for t in 0..mesh.tets.len() {
            for q in &rule.points {
                let bary = bary_of_ref(q);
                let p = point_of_bary(&mesh, t, &bary);
                let v = u.eval(&mesh, t, &bary);
                let exact = f(&p);
                for k in 0..3 {
                    assert!((v[k] - exact[k]).abs() < 1e-12);
                }
            }
            let c = u.curl(&mesh, t);
            // curl(b x x) = 2b.
            assert!((Vector3::new(c[0], c[1], c[2]) - 2.0 * b).norm() < 1e-11);
        }
    }

    #[test]
    fn interpolation_commutes_with_curl() {
        let mesh = unit_cube(2).unwrap();
        // u = (y, 0, 0) is not in the edge space, but its interpolant's
        // curl equals the exact constant curl (0, 0, -1).
        let u = EdgeField::<f64>::interpolate(&mesh, |p| [p.y, 0.0, 0.0]);
        for t in 0..mesh.tets.len() {
            let c = u.curl(&mesh, t);
            assert!((Vector3::new(c[0], c[1], c[2]) - Vector3::new(0.0, 0.0, -1.0)).norm() < 1e-11);
        }
        // Edge dofs of a gradient field are potential differences, so the
        // discrete curl must telescope to zero around every tet — this pins
        // the per-tet sign table against the global edge orientation.
        let potential = |p: &Point3<f64>| (1.3 * p.x - 0.4 * p.y + 0.8 * p.z).sin();
        let grad = EdgeField {
            coeffs: mesh
                .edges
                .iter()
                .map(|&[a, b]| potential(&mesh.points[b]) - potential(&mesh.points[a]))
                .collect::<Vec<f64>>(),
        };
        for t in 0..mesh.tets.len() {
            let c = grad.curl(&mesh, t);
            assert!(norm_sq3(&c).sqrt() < 1e-12);
        }
    }

    #[test]
    fn complex_edge_fields_reproduce_constants() {
        use num_complex::Complex64 as C;
        let mesh = unit_cube(1).unwrap();
        let c = [C::new(0.4, -1.2), C::new(0.0, 2.0), C::new(-0.7, 0.3)];
        let u = EdgeField::<C>::interpolate(&mesh, |_| c);
        for t in 0..mesh.tets.len() {
            let v = u.eval(&mesh, t, &[0.25; 4]);
            for k in 0..3 {
                assert!((v[k] - c[k]).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn harmonic_lift_reproduces_linear_data() {
        let mesh = unit_cube(3).unwrap();
        let f = |p: &Point3<f64>| 2.0 * p.x - p.y + 3.0 * p.z;
        let lift = p1_harmonic_lift(&mesh, |v| f(&mesh.points[v])).unwrap();
        for (v, p) in mesh.points.iter().enumerate() {
            assert!((lift[v] - f(p)).abs() < 1e-10, "vertex {v}");
        }
    }

    #[test]
    fn face_bary_roundtrip() {
        let mesh = unit_cube(1).unwrap();
        let f = &mesh.boundary[0];
        let (local, opp) = face_local_indices(&mesh, &f.verts, f.tet);
        let b = face_bary_to_tet(&local, &[0.2, 0.3, 0.5]);
        assert_eq!(b[opp], 0.0);
        let p = point_of_bary(&mesh, f.tet, &b);
        // The point lies in the face plane: distance along the normal from
        // the face centroid is zero.
        let c = f.centroid(&mesh.points);
        assert!(((p - c).dot(&f.normal)).abs() < 1e-12);
    }
}
