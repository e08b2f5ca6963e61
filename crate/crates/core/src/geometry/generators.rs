//! Mesh generators: boxes, slabs over Lipschitz graphs, wedges, and balls.
//!
//! Every grid-based generator triangulates cells into six tetrahedra sharing
//! the cell's main diagonal, which keeps adjacent cells conforming and makes
//! the induced boundary triangulation cut every quad along the same diagonal
//! direction. Slab and wedge meshes are built by shearing a box grid onto a
//! piecewise linear graph; the ball maps a cube grid through a smooth
//! equal-norm map that places boundary vertices exactly on the sphere.

use nalgebra::{Point3, Vector3};

use super::mesh::TetMesh;
use crate::{Error, Result};

/// The six axis orders that split a cell into tets around its main diagonal.
const KUHN_PERMS: [[usize; 3]; 6] = [
    [0, 1, 2],
    [0, 2, 1],
    [1, 0, 2],
    [1, 2, 0],
    [2, 0, 1],
    [2, 1, 0],
];

fn grid_tets(nx: usize, ny: usize, nz: usize) -> Vec<[usize; 4]> {
    let idx = |i: usize, j: usize, k: usize| (k * (ny + 1) + j) * (nx + 1) + i;
    let mut tets = Vec::with_capacity(6 * nx * ny * nz);
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                for perm in KUHN_PERMS {
                    let mut c = [i, j, k];
                    let mut verts = [idx(c[0], c[1], c[2]), 0, 0, 0];
                    for (step, axis) in perm.iter().enumerate() {
                        c[*axis] += 1;
                        verts[step + 1] = idx(c[0], c[1], c[2]);
                    }
                    tets.push(verts);
                }
            }
        }
    }
    tets
}

fn axis_chart_directions(artificial: bool) -> Vec<(u32, Vector3<f64>, bool)> {
    let axes = [Vector3::x(), Vector3::y(), Vector3::z()];
    (0..6u32)
        .map(|c| {
            let axis = axes[(c / 2) as usize];
            let e = if c % 2 == 0 { axis } else { -axis };
            (c, e, artificial)
        })
        .collect()
}

fn dominant_axis_chart(outward: Vector3<f64>) -> u32 {
    let axes = [Vector3::x(), Vector3::y(), Vector3::z()];
    let mut best = (0u32, f64::MIN);
    for c in 0..6u32 {
        let axis = axes[(c / 2) as usize];
        let o = if c % 2 == 0 { -axis } else { axis };
        let d = outward.dot(&o);
        if d > best.1 {
            best = (c, d);
        }
    }
    best.0
}

/// Axis-aligned box `[x0,x1] x [y0,y1] x [z0,z1]`, `n = (nx,ny,nz)` cells.
/// Six charts, one per face, all physical, graph directions pointing inward.
pub fn box_mesh(n: [usize; 3], lo: [f64; 3], hi: [f64; 3]) -> Result<TetMesh> {
    let [nx, ny, nz] = n;
    if nx == 0 || ny == 0 || nz == 0 {
        return Err(Error::InvalidMesh(
            "box needs at least one cell per axis".into(),
        ));
    }
    let mut points = Vec::with_capacity((nx + 1) * (ny + 1) * (nz + 1));
    for k in 0..=nz {
        for j in 0..=ny {
            for i in 0..=nx {
                points.push(Point3::new(
                    lo[0] + (hi[0] - lo[0]) * i as f64 / nx as f64,
                    lo[1] + (hi[1] - lo[1]) * j as f64 / ny as f64,
                    lo[2] + (hi[2] - lo[2]) * k as f64 / nz as f64,
                ));
            }
        }
    }
    let mut mesh = TetMesh::new(points, grid_tets(nx, ny, nz))?;
    mesh.assign_charts(&axis_chart_directions(false), |_c, nrm| {
        dominant_axis_chart(nrm)
    })?;
    Ok(mesh)
}

/// Unit cube `[0,1]^3` with `n` cells per axis.
pub fn unit_cube(n: usize) -> Result<TetMesh> {
    box_mesh([n, n, n], [0.0; 3], [1.0; 3])
}

/// Mesh of `{ phi(x,y) < z < phi(x,y) + thickness }` over a rectangle, built
/// by shearing a box grid onto the nodal values of `phi`. Chart 0 is the
/// graph boundary (direction +z); charts 1-4 are the side walls and chart 5
/// the sheared top, all flagged artificial — they truncate the unbounded
/// domain above the graph.
pub fn slab_over_graph(
    phi: impl Fn(f64, f64) -> f64,
    n: [usize; 3],
    xy_lo: [f64; 2],
    xy_hi: [f64; 2],
    thickness: f64,
) -> Result<TetMesh> {
    let [nx, ny, nz] = n;
    if nx == 0 || ny == 0 || nz == 0 || thickness <= 0.0 {
        return Err(Error::InvalidMesh("slab needs positive extent".into()));
    }
    let mut points = Vec::with_capacity((nx + 1) * (ny + 1) * (nz + 1));
    for k in 0..=nz {
        for j in 0..=ny {
            for i in 0..=nx {
                let x = xy_lo[0] + (xy_hi[0] - xy_lo[0]) * i as f64 / nx as f64;
                let y = xy_lo[1] + (xy_hi[1] - xy_lo[1]) * j as f64 / ny as f64;
                points.push(Point3::new(
                    x,
                    y,
                    phi(x, y) + thickness * k as f64 / nz as f64,
                ));
            }
        }
    }
    let mut mesh = TetMesh::new(points, grid_tets(nx, ny, nz))?;
    let layer = (nx + 1) * (ny + 1);
    let dirs = [
        (0u32, Vector3::z(), false),
        (1, Vector3::x(), true),
        (2, -Vector3::x(), true),
        (3, Vector3::y(), true),
        (4, -Vector3::y(), true),
        (5, -Vector3::z(), true),
    ];
    // Classify by vertex lattice position: the graph and top are the k = 0
    // and k = nz node layers; the walls are the extreme x/y node columns.
    let nxp = nx + 1;
    let col = |v: usize| (v % layer) % nxp;
    let row = |v: usize| (v % layer) / nxp;
    let lay = |v: usize| v / layer;
    mesh.assign_charts_by_verts(&dirs, |verts| {
        if verts.iter().all(|&v| lay(v) == 0) {
            0
        } else if verts.iter().all(|&v| lay(v) == nz) {
            5
        } else if verts.iter().all(|&v| col(v) == 0) {
            1
        } else if verts.iter().all(|&v| col(v) == nx) {
            2
        } else if verts.iter().all(|&v| row(v) == 0) {
            3
        } else {
            4
        }
    })?;
    Ok(mesh)
}

/// Truncated wedge of opening angle `alpha`: the region above the graph
/// `phi(x) = cot(alpha/2) |x|`, extruded along `y`, cut at `thickness` above
/// the graph. `n[0]` must be even so the wedge spine lies on a grid line and
/// the graph is represented exactly.
pub fn wedge_mesh(
    alpha: f64,
    n: [usize; 3],
    half_width: f64,
    depth: f64,
    thickness: f64,
) -> Result<TetMesh> {
    if !(alpha > 0.0 && alpha < std::f64::consts::PI) {
        return Err(Error::InvalidMesh(format!(
            "wedge opening angle {alpha} out of (0, pi)"
        )));
    }
    if n[0] % 2 != 0 {
        return Err(Error::InvalidMesh(
            "wedge needs an even cell count across the spine".into(),
        ));
    }
    let slope = 1.0 / (alpha / 2.0).tan();
    slab_over_graph(
        move |x, _y| slope * x.abs(),
        n,
        [-half_width, 0.0],
        [half_width, depth],
        thickness,
    )
}

/// The equal-norm cube-to-ball map: smooth on the cube, identity at the
/// center, and sends the cube surface exactly onto the unit sphere.
pub fn spherify(p: Vector3<f64>) -> Vector3<f64> {
    let (x2, y2, z2) = (p.x * p.x, p.y * p.y, p.z * p.z);
    Vector3::new(
        p.x * (1.0 - y2 / 2.0 - z2 / 2.0 + y2 * z2 / 3.0).sqrt(),
        p.y * (1.0 - z2 / 2.0 - x2 / 2.0 + z2 * x2 / 3.0).sqrt(),
        p.z * (1.0 - x2 / 2.0 - y2 / 2.0 + x2 * y2 / 3.0).sqrt(),
    )
}

/// Ball of given radius, `n` cells per cube axis. Boundary vertices lie on
/// the sphere to rounding. Six charts by dominant outward axis.
pub fn ball_mesh(n: usize, radius: f64) -> Result<TetMesh> {
    if n < 2 {
        return Err(Error::InvalidMesh("ball needs n >= 2".into()));
    }
    if radius <= 0.0 {
        return Err(Error::InvalidMesh("ball needs positive radius".into()));
    }
    let mut points = Vec::with_capacity((n + 1).pow(3));
    for k in 0..=n {
        for j in 0..=n {
            for i in 0..=n {
                let p = Vector3::new(
                    2.0 * i as f64 / n as f64 - 1.0,
                    2.0 * j as f64 / n as f64 - 1.0,
                    2.0 * k as f64 / n as f64 - 1.0,
                );
                points.push(Point3::from(radius * spherify(p)));
            }
        }
    }
    let mut mesh = TetMesh::new(points, grid_tets(n, n, n))?;
    mesh.assign_charts(&axis_chart_directions(false), |centroid, _nrm| {
        dominant_axis_chart(centroid.coords.normalize())
    })?;
    Ok(mesh)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_counts_and_measures() {
        let m = unit_cube(3).unwrap();
        assert_eq!(m.tets.len(), 6 * 27);
        assert_eq!(m.points.len(), 64);
        assert!((m.volume() - 1.0).abs() < 1e-13);
        assert!((m.boundary_area() - 6.0).abs() < 1e-12);
        assert_eq!(m.charts.len(), 6);
        for c in &m.charts {
            assert!(c.theta.abs() < 1e-6);
        }
    }

    #[test]
    fn flat_slab_matches_box() {
        let s = slab_over_graph(|_, _| 0.0, [2, 2, 2], [0.0, 0.0], [1.0, 1.0], 1.0).unwrap();
        let b = unit_cube(2).unwrap();
        assert_eq!(s.tets, b.tets);
        assert!((s.volume() - 1.0).abs() < 1e-13);
        // Only the bottom is physical.
        assert!((s.physical_boundary_area() - 1.0).abs() < 1e-13);
    }

    #[test]
    fn wedge_graph_chart_angle() {
        let alpha = std::f64::consts::FRAC_PI_2;
        let m = wedge_mesh(alpha, [4, 2, 3], 1.0, 1.0, 2.0).unwrap();
        // Shearing preserves volume: thickness times footprint area.
        assert!((m.volume() - 2.0 * 2.0).abs() < 1e-12);
        let graph_chart = m.charts.iter().find(|c| c.id == 0).unwrap();
        let expect = std::f64::consts::FRAC_PI_2 - alpha / 2.0;
        assert!((graph_chart.theta - expect).abs() < 1e-12);
        // Graph faces carry outward normals (-+cos(a/2), 0, -sin(a/2)).
        let c = (alpha / 2.0).cos();
        let s = (alpha / 2.0).sin();
        for f in m.boundary.iter().filter(|f| !f.artificial) {
            let n = f.normal;
            assert!(n.y.abs() < 1e-13);
            assert!((n.z + s).abs() < 1e-12);
            assert!((n.x.abs() - c).abs() < 1e-12);
        }
    }

    #[test]
    fn ball_vertices_on_sphere() {
        let r = 1.5;
        let m = ball_mesh(4, r).unwrap();
        assert_eq!(m.tets.len(), 6 * 64);
        for &v in &m.boundary_vertices() {
            assert!((m.points[v].coords.norm() - r).abs() < 1e-12);
        }
        // Coarse polyhedral ball: measures a few percent under the smooth ones.
        let vol = m.volume();
        let exact = 4.0 / 3.0 * std::f64::consts::PI * r.powi(3);
        assert!(vol < exact && vol > 0.9 * exact, "vol {vol} vs {exact}");
        let area = m.boundary_area();
        let exact_a = 4.0 * std::f64::consts::PI * r * r;
        assert!(area < exact_a && area > 0.9 * exact_a);
        assert_eq!(m.charts.len(), 6);
        for c in &m.charts {
            assert!(c.theta < 1.2, "chart angle {}", c.theta);
        }
    }
}
