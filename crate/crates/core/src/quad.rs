//! Gaussian quadrature on edges, triangles, and tetrahedra.
//!
//! Simplex rules are built by collapsing tensor-product Gauss-Legendre grids
//! (Duffy transform). That costs a few more points than optimal symmetric
//! rules but gives positive weights at every degree and one code path to
//! trust. For a requested polynomial degree `d` the collapsed integrand has
//! per-axis degree at most `d + 2` (tet) or `d + 1` (triangle), so the 1D
//! point counts below are chosen to integrate those exactly.

/// Gauss-Legendre nodes and weights on `[-1, 1]`, by Newton iteration on the
/// Legendre polynomial. Accurate to machine precision for the small `n` used
/// here.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Chebyshev-based initial guess.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // Evaluate P_n(x) and P_n'(x) by the three-term recurrence.
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=n {
                let k = k as f64;
                let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 1 { x } else { p1 };
            dp = (n as f64) * (x * p - p0) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n == 1 {
        nodes[0] = 0.0;
        weights[0] = 2.0;
    }
    (nodes, weights)
}

/// Gauss-Legendre rule mapped to `[0, 1]`.
pub fn edge_rule(n: usize) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    (
        x.iter().map(|t| 0.5 * (t + 1.0)).collect(),
        w.iter().map(|v| 0.5 * v).collect(),
    )
}

/// Quadrature rule on the reference triangle `{x, y >= 0, x + y <= 1}`.
/// Weights sum to 1/2.
#[derive(Debug, Clone)]
pub struct TriRule {
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
}

/// Quadrature rule on the reference tetrahedron
/// `{x, y, z >= 0, x + y + z <= 1}`. Weights sum to 1/6.
#[derive(Debug, Clone)]
pub struct TetRule {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

/// Rule exact for polynomials of total degree `degree` on the reference
/// triangle.
pub fn tri_rule(degree: usize) -> TriRule {
    let n = (degree + 3) / 2; // per-axis degree <= degree + 1
    let (x, w) = edge_rule(n);
    let mut points = Vec::with_capacity(n * n);
    let mut weights = Vec::with_capacity(n * n);
    for (i, &u) in x.iter().enumerate() {
        for (j, &v) in x.iter().enumerate() {
            points.push([u, v * (1.0 - u)]);
            weights.push(w[i] * w[j] * (1.0 - u));
        }
    }
    TriRule { points, weights }
}

/// Rule exact for polynomials of total degree `degree` on the reference
/// tetrahedron.
pub fn tet_rule(degree: usize) -> TetRule {
    let n = (degree + 4) / 2; // per-axis degree <= degree + 2
    let (x, w) = edge_rule(n);
    let mut points = Vec::with_capacity(n * n * n);
    let mut weights = Vec::with_capacity(n * n * n);
    for (i, &u) in x.iter().enumerate() {
        for (j, &v) in x.iter().enumerate() {
            for (k, &t) in x.iter().enumerate() {
                let y = v * (1.0 - u);
                let z = t * (1.0 - u) * (1.0 - v);
                points.push([u, y, z]);
                weights.push(w[i] * w[j] * w[k] * (1.0 - u).powi(2) * (1.0 - v));
            }
        }
    }
    TetRule { points, weights }
}
