//! Smooth squared partitions of unity subordinate to boundary charts.
//!
//! Chart-by-chart constructions (flattening, extension, blended traces) are
//! glued with weights `eta_k = w_k / sqrt(sum_j w_j^2)`, so that
//! `sum_k eta_k^2 = 1` holds identically wherever any chart is active. The
//! raw weights are C^1 bumps built from a quadratic B-spline profile, which
//! keeps every blended field in H^1 without further smoothing.

use nalgebra::{Point3, Vector3};

use super::mesh::TetMesh;
use crate::{Error, Result};

pub type WeightFn = Box<dyn Fn(&Point3<f64>) -> f64 + Send + Sync>;

/// Quadratic cardinal B-spline on (0, 3), peak 3/4 at 3/2.
fn bspline2(s: f64) -> f64 {
    if s <= 0.0 || s >= 3.0 {
        0.0
    } else if s < 1.0 {
        0.5 * s * s
    } else if s < 2.0 {
        0.5 * (-2.0 * s * s + 6.0 * s - 3.0)
    } else {
        0.5 * (3.0 - s) * (3.0 - s)
    }
}

/// C^1 bump profile of a scaled distance: 1 at `t = 0`, 0 for `|t| >= 1`,
/// with vanishing derivative at both ends.
pub fn bump_profile(t: f64) -> f64 {
    (4.0 / 3.0) * bspline2(1.5 + 1.5 * t.abs())
}

/// One chart of a partition: an identifier, the chart's inward reference
/// direction, and its raw (unnormalized) weight.
pub struct PouChart {
    pub id: u32,
    pub e: Vector3<f64>,
    pub weight: WeightFn,
}

pub struct PartitionOfUnity {
    pub charts: Vec<PouChart>,
    /// `support[k][t]`: whether chart `k` is active anywhere on tet `t`.
    pub support: Vec<Vec<bool>>,
}

impl PartitionOfUnity {
    /// Raw weights at a point.
    pub fn weights(&self, p: &Point3<f64>) -> Vec<f64> {
        self.charts.iter().map(|c| (c.weight)(p)).collect()
    }

    /// Normalized values `eta_k(p)`; errors where no chart is active.
    pub fn eval(&self, p: &Point3<f64>) -> Result<Vec<f64>> {
        let w = self.weights(p);
        let s: f64 = w.iter().map(|x| x * x).sum();
        if s <= 0.0 {
            return Err(Error::Chart(format!(
                "point ({}, {}, {}) is not covered by any chart",
                p.x, p.y, p.z
            )));
        }
        let inv = 1.0 / s.sqrt();
        Ok(w.into_iter().map(|x| x * inv).collect())
    }

    /// `eta_k(p)` for a single chart index.
    pub fn eval_chart(&self, k: usize, p: &Point3<f64>) -> Result<f64> {
        Ok(self.eval(p)?[k])
    }
}

/// Build a partition subordinate to the given charts and verify coverage of
/// the mesh: every vertex, tet centroid, and boundary face centroid must lie
/// in the support of at least one chart.
pub fn build_partition_of_unity(
    mesh: &TetMesh,
    charts: Vec<PouChart>,
) -> Result<PartitionOfUnity> {
    if charts.is_empty() {
        return Err(Error::Chart("partition needs at least one chart".into()));
    }
    let pou = PartitionOfUnity {
        support: charts
            .iter()
            .map(|c| {
                (0..mesh.tets.len())
                    .map(|t| {
                        let pts = mesh.tet_points(t);
                        let centroid = Point3::from(
                            (pts[0].coords + pts[1].coords + pts[2].coords + pts[3].coords) / 4.0,
                        );
                        let active = pts.iter().any(|p| (c.weight)(p) > 0.0);
                        active || (c.weight)(&centroid) > 0.0
                    })
                    .collect()
            })
            .collect(),
        charts,
    };

    let mut probes: Vec<Point3<f64>> = mesh.points.clone();
    for t in 0..mesh.tets.len() {
        let pts = mesh.tet_points(t);
        probes.push(Point3::from(
            (pts[0].coords + pts[1].coords + pts[2].coords + pts[3].coords) / 4.0,
        ));
    }
    for f in &mesh.boundary {
        probes.push(f.centroid(&mesh.points));
    }
    for p in &probes {
        pou.eval(p)?;
    }
    Ok(pou)
}

/// A single global chart with unit weight.
pub fn uniform_chart(e: Vector3<f64>) -> Vec<PouChart> {
    vec![PouChart {
        id: 0,
        e,
        weight: Box::new(|_| 1.0),
    }]
}

/// Six face charts of the box `[lo, hi]`, weights bumping off the face
/// planes with reach `r`. Chart `2*axis + side` matches the box mesh
/// generator's face chart numbering; directions point inward.
pub fn box_face_charts(lo: Point3<f64>, hi: Point3<f64>, r: f64) -> Vec<PouChart> {
    let mut charts = Vec::with_capacity(6);
    for axis in 0..3 {
        for side in 0..2 {
            let plane = if side == 0 { lo[axis] } else { hi[axis] };
            let mut e = Vector3::zeros();
            e[axis] = if side == 0 { 1.0 } else { -1.0 };
            charts.push(PouChart {
                id: (2 * axis + side) as u32,
                e,
                weight: Box::new(move |p: &Point3<f64>| bump_profile((p[axis] - plane) / r)),
            });
        }
    }
    charts
}

/// Eight corner charts of the box `[lo, hi]`: weights bump off the corner
/// in the max metric scaled to the box diameter, so the three faces meeting
/// at the corner lie in one chart, which is a Lipschitz graph of slope
/// sqrt(2) over the plane orthogonal to the inward diagonal.
pub fn box_corner_charts(lo: Point3<f64>, hi: Point3<f64>) -> Vec<PouChart> {
    let mut charts = Vec::with_capacity(8);
    for cz in 0..2 {
        for cy in 0..2 {
            for cx in 0..2 {
                let corner = Point3::new(
                    if cx == 0 { lo.x } else { hi.x },
                    if cy == 0 { lo.y } else { hi.y },
                    if cz == 0 { lo.z } else { hi.z },
                );
                let scale = Vector3::new(
                    (hi.x - lo.x).abs(),
                    (hi.y - lo.y).abs(),
                    (hi.z - lo.z).abs(),
                );
                let e = Vector3::new(
                    if cx == 0 { 1.0 } else { -1.0 },
                    if cy == 0 { 1.0 } else { -1.0 },
                    if cz == 0 { 1.0 } else { -1.0 },
                ) / 3f64.sqrt();
                charts.push(PouChart {
                    id: (4 * cz + 2 * cy + cx) as u32,
                    e,
                    weight: Box::new(move |p: &Point3<f64>| {
                        let t = (0..3)
                            .map(|a| ((p[a] - corner[a]) / scale[a]).abs())
                            .fold(0.0, f64::max);
                        bump_profile(t)
                    }),
                });
            }
        }
    }
    charts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::generators::unit_cube;
    use crate::rng::seeded;
    use rand::Rng;

    #[test]
    fn single_chart_is_identically_one() {
        let mesh = unit_cube(2).unwrap();
        let pou = build_partition_of_unity(&mesh, uniform_chart(Vector3::z())).unwrap();
        let mut rng = seeded(7, "pou-single");
        for _ in 0..100 {
            let p = Point3::new(rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>());
            let eta = pou.eval(&p).unwrap();
            assert_eq!(eta.len(), 1);
            assert!((eta[0] - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn equal_overlap_gives_inverse_sqrt_two() {
        let mesh = unit_cube(2).unwrap();
        let charts = vec![
            PouChart {
                id: 0,
                e: Vector3::z(),
                weight: Box::new(|p: &Point3<f64>| bump_profile(p.z / 2.0)),
            },
            PouChart {
                id: 1,
                e: -Vector3::z(),
                weight: Box::new(|p: &Point3<f64>| bump_profile((1.0 - p.z) / 2.0)),
            },
        ];
        let pou = build_partition_of_unity(&mesh, charts).unwrap();
        // On the midplane both weights agree, so each eta is 1/sqrt(2).
        let eta = pou.eval(&Point3::new(0.3, 0.8, 0.5)).unwrap();
        assert!((eta[0] - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-14);
        assert!((eta[1] - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-14);
    }

    #[test]
    fn cube_face_charts_sum_to_one() {
        let mesh = unit_cube(2).unwrap();
        let charts = box_face_charts(Point3::origin(), Point3::new(1.0, 1.0, 1.0), 0.75);
        let pou = build_partition_of_unity(&mesh, charts).unwrap();
        let mut rng = seeded(11, "pou-cube");
        for _ in 0..10_000 {
            let p = Point3::new(rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>());
            let eta = pou.eval(&p).unwrap();
            let s: f64 = eta.iter().map(|x| x * x).sum();
            assert!((s - 1.0).abs() < 1e-10);
            assert!(eta.iter().all(|&x| (0.0..=1.0).contains(&x)));
        }
    }

    #[test]
    fn corner_charts_cover_cube() {
        let mesh = unit_cube(3).unwrap();
        let charts = box_corner_charts(Point3::origin(), Point3::new(1.0, 1.0, 1.0));
        let pou = build_partition_of_unity(&mesh, charts).unwrap();
        let mut rng = seeded(3, "pou-corner");
        for _ in 0..1000 {
            let p = Point3::new(rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>());
            let eta = pou.eval(&p).unwrap();
            let s: f64 = eta.iter().map(|x| x * x).sum();
            assert!((s - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn support_flags_track_reach() {
        let mesh = unit_cube(3).unwrap();
        let charts = box_face_charts(Point3::origin(), Point3::new(1.0, 1.0, 1.0), 0.6);
        let pou = build_partition_of_unity(&mesh, charts).unwrap();
        // Chart 0 bumps off the x = 0 face with reach 0.6: tets in the last
        // grid layer (x >= 2/3) are outside its support.
        let far_tet = (0..mesh.tets.len())
            .find(|&t| mesh.tet_points(t).iter().all(|p| p.x > 0.6))
            .expect("cube at n = 3 has tets beyond the reach");
        assert!(!pou.support[0][far_tet]);
        let near_tet = (0..mesh.tets.len())
            .find(|&t| mesh.tet_points(t).iter().any(|p| p.x < 0.3))
            .unwrap();
        assert!(pou.support[0][near_tet]);
    }

    #[test]
    fn uncovered_point_is_an_error() {
        let mesh = unit_cube(2).unwrap();
        // Reach too short to see the cube center from any face.
        let charts = box_face_charts(Point3::origin(), Point3::new(1.0, 1.0, 1.0), 0.3);
        assert!(build_partition_of_unity(&mesh, charts).is_err());
    }
}
