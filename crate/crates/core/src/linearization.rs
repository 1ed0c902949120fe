//! Jacobians, spectra and rank computations.
//!
//! The finite-difference Jacobian of the agent-coordinate field is the
//! reference; the closed forms below are checked against it. Closed forms for
//! the restricted law `u_i = u(e_i)` carry the factor 2 that comes from
//! differentiating `z . z`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control_laws::{ControlLaw, LocalGains};
use crate::dynamics::vector_field_x;
use crate::geometry::{EdgeVectors, Framework, GaugeChart, TargetsSquared};

/// Sign pattern of the edge dynamics: `dz_i/dt = sum_j A_ij u_j z_j`.
pub const EDGE_ADJACENCY: [[i32; 5]; 5] = [
    [-1, 1, 0, 0, -1],
    [0, -1, 1, 0, 0],
    [1, 0, -1, 0, 1],
    [0, 0, 1, -1, 0],
    [-1, 0, 0, 1, -1],
];

/// Scale between the restricted-law product `u' Z A_e Z^T` and the true
/// nontrivial Jacobian spectrum.
pub const RESTRICTED_SCALE: f64 = 2.0;

/// Factor `k` in `k (dF/ds) Z = dF/dz` for the restricted law.
pub const TARGET_JACOBIAN_FACTOR: f64 = -2.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinearizationError {
    #[error("expected 3 gauge zeros, found {found} eigenvalues with |λ| <= {tol:e}")]
    GaugeZeroMismatch { found: usize, tol: f64 },
    #[error("rigid-motion generators not annihilated (residual {0:e})")]
    GeneratorResidual(f64),
    #[error("eigenvalue computation failed")]
    Eigen,
}

/// A complex eigenvalue.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Eigenvalue {
    pub re: f64,
    pub im: f64,
}

impl Eigenvalue {
    pub fn norm(&self) -> f64 {
        self.re.hypot(self.im)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    /// Sorted by real part, then imaginary part.
    pub eigenvalues: Vec<Eigenvalue>,
    /// Number of eigenvalues of the full Jacobian within `tol_zero` of zero.
    pub zero_count: usize,
    pub tol_zero: f64,
}

impl Spectrum {
    pub fn max_real(&self) -> f64 {
        self.eigenvalues
            .iter()
            .fold(f64::NEG_INFINITY, |m, l| m.max(l.re))
    }

    pub fn positive_count(&self, band: f64) -> usize {
        self.eigenvalues.iter().filter(|l| l.re > band).count()
    }

    /// Largest distance between an eigenvalue and the conjugate of its nearest partner.
    pub fn conjugate_pairing_error(&self) -> f64 {
        self.eigenvalues
            .iter()
            .map(|l| {
                self.eigenvalues
                    .iter()
                    .map(|m| (l.re - m.re).hypot(l.im + m.im))
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max)
    }
}

pub fn sort_eigenvalues(v: &mut [Eigenvalue]) {
    v.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
}

pub fn eigenvalues(m: &DMatrix<f64>) -> Vec<Eigenvalue> {
    let mut v: Vec<Eigenvalue> = m
        .clone()
        .complex_eigenvalues()
        .iter()
        .map(|c| Eigenvalue { re: c.re, im: c.im })
        .collect();
    sort_eigenvalues(&mut v);
    v
}

/// 5x10 block-diagonal matrix with rows `z_i^T`.
pub fn z_matrix(z: &EdgeVectors) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(5, 10);
    for i in 0..5 {
        m[(i, 2 * i)] = z.z[i].x;
        m[(i, 2 * i + 1)] = z.z[i].y;
    }
    m
}

pub fn adjacency_matrix() -> DMatrix<f64> {
    DMatrix::from_fn(5, 5, |i, j| EDGE_ADJACENCY[i][j] as f64)
}

/// Rows `(z1,-z1,0,0)`, `(0,z2,-z2,0)`, `(-z3,0,z3,0)`, `(0,0,z4,-z4)`, `(z5,0,0,-z5)`.
pub fn rigidity_matrix(z: &EdgeVectors) -> DMatrix<f64> {
    // (edge, agent with +z, agent with -z)
    const ROWS: [(usize, usize, usize); 5] = [(0, 0, 1), (1, 1, 2), (2, 2, 0), (3, 2, 3), (4, 0, 3)];
    let mut m = DMatrix::zeros(5, 8);
    for (i, plus, minus) in ROWS {
        let v = z.z[i];
        m[(i, 2 * plus)] = v.x;
        m[(i, 2 * plus + 1)] = v.y;
        m[(i, 2 * minus)] = -v.x;
        m[(i, 2 * minus + 1)] = -v.y;
    }
    m
}

pub fn rigidity_rank(z: &EdgeVectors, rel_tol: f64) -> usize {
    let sv = rigidity_matrix(z).singular_values();
    let smax = sv.max();
    sv.iter().filter(|s| **s > rel_tol * smax).count()
}

/// Central-difference Jacobian of the agent field.
pub fn jacobian_x_fd(f: &Framework, s: &TargetsSquared, law: &ControlLaw, mu: f64) -> DMatrix<f64> {
    let x = f.to_array();
    let scale = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let h = 1e-6_f64.max(1e-8 * scale);
    let mut j = DMatrix::zeros(8, 8);
    for c in 0..8 {
        let mut xp = x;
        let mut xm = x;
        xp[c] += h;
        xm[c] -= h;
        let fp = vector_field_x(&Framework::from_slice(&xp), s, law, mu);
        let fm = vector_field_x(&Framework::from_slice(&xm), s, law, mu);
        for r in 0..8 {
            j[(r, c)] = (fp[r] - fm[r]) / (2.0 * h);
        }
    }
    j
}

/// Exact Jacobian at a design framework from the local gains.
pub fn analytic_jacobian_x(f: &Framework, g: &LocalGains) -> DMatrix<f64> {
    let z = f.edges();
    // velocity of agent a gains u_j z_j
    const DRIVEN: [usize; 5] = [0, 1, 2, 3, 0];
    let mut gm = DMatrix::zeros(8, 5);
    for (j, a) in DRIVEN.iter().enumerate() {
        gm[(2 * a, j)] = z.z[j].x;
        gm[(2 * a + 1, j)] = z.z[j].y;
    }
    let mut k = DMatrix::zeros(5, 5);
    k[(0, 0)] = g.k11;
    k[(0, 4)] = g.k12;
    k[(4, 0)] = g.k51;
    k[(4, 4)] = g.k52;
    k[(1, 1)] = g.k2;
    k[(2, 2)] = g.k3;
    k[(3, 3)] = g.k4;
    // de_i/dx; the rigidity row of edge 4 has the opposite orientation
    let mut de = rigidity_matrix(&z) * -2.0;
    de.row_mut(3).neg_mut();
    gm * k * de
}

/// Two translations and the infinitesimal rotation, as columns.
pub fn rigid_generators(f: &Framework) -> DMatrix<f64> {
    let mut g = DMatrix::zeros(8, 3);
    for (i, p) in f.pos.iter().enumerate() {
        g[(2 * i, 0)] = 1.0;
        g[(2 * i + 1, 1)] = 1.0;
        g[(2 * i, 2)] = -p.y;
        g[(2 * i + 1, 2)] = p.x;
    }
    g
}

/// Eigenvalues of `j8` on the quotient by the rigid-motion generators.
///
/// At an equilibrium `j8` annihilates the generators, so in a basis whose
/// first three vectors span them the matrix is block triangular and the
/// trailing 5x5 block carries the remaining spectrum.
pub fn deflated_spectrum(j8: &DMatrix<f64>, f: &Framework, tol_zero: Option<f64>) -> Spectrum {
    let norm = j8.norm().max(1e-300);
    let tol = tol_zero.unwrap_or(1e-6 * norm);
    let q = completed_basis(&rigid_generators(f));
    let b = q.transpose() * j8 * &q;
    let block = b.view((3, 3), (5, 5)).into_owned();
    let zero_count = eigenvalues(j8).iter().filter(|l| l.norm() <= tol).count();
    Spectrum {
        eigenvalues: eigenvalues(&block),
        zero_count,
        tol_zero: tol,
    }
}

/// Orthonormal basis of R^n whose leading columns span `g`.
fn completed_basis(g: &DMatrix<f64>) -> DMatrix<f64> {
    let n = g.nrows();
    // Gram-Schmidt over the generators followed by the unit vectors
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(n);
    let mut candidates: Vec<DVector<f64>> = (0..g.ncols()).map(|c| g.column(c).into_owned()).collect();
    candidates.extend((0..n).map(|i| DVector::from_fn(n, |r, _| if r == i { 1.0 } else { 0.0 })));
    for mut v in candidates {
        for b in &basis {
            let d = b.dot(&v);
            v -= b * d;
        }
        for b in &basis {
            let d = b.dot(&v);
            v -= b * d;
        }
        let nv = v.norm();
        if nv > 1e-8 {
            basis.push(v / nv);
        }
        if basis.len() == n {
            break;
        }
    }
    DMatrix::from_columns(&basis)
}

/// The five nontrivial eigenvalues of an equilibrium Jacobian.
///
/// Requires exactly three eigenvalues within `tol_zero` (default
/// `1e-6 |J|`) and that the rigid-motion generators are annihilated.
pub fn nontrivial_spectrum(
    j8: &DMatrix<f64>,
    f: &Framework,
    tol_zero: Option<f64>,
) -> Result<Spectrum, LinearizationError> {
    let spec = deflated_spectrum(j8, f, tol_zero);
    let g = rigid_generators(f);
    let res = (j8 * &g).norm() / (g.norm() * j8.norm().max(1e-300));
    if res > 1e-6 {
        return Err(LinearizationError::GeneratorResidual(res));
    }
    if spec.zero_count != 3 {
        return Err(LinearizationError::GaugeZeroMismatch {
            found: spec.zero_count,
            tol: spec.tol_zero,
        });
    }
    Ok(spec)
}

/// `scale u' Z A_e Z^T` with the calibrated scale, i.e. entries
/// `2 u' A_ij z_i . z_j`.
pub fn reduced_jacobian_restricted(z: &EdgeVectors, uprime: f64) -> DMatrix<f64> {
    DMatrix::from_fn(5, 5, |i, j| {
        RESTRICTED_SCALE * uprime * EDGE_ADJACENCY[i][j] as f64 * z.z[i].dot(z.z[j])
    })
}

/// The 5x5 reduced Jacobian in gauge coordinates for general local gains.
///
/// Entries are written out in chart coordinates with `d = ell3`. Like
/// [`reduced_jacobian_restricted`] before scaling, it omits the factor 2 from
/// `d(z . z)`; its determinant is `q p` exactly.
pub fn reduced_jacobian_gains(chart: &GaugeChart, g: &LocalGains) -> DMatrix<f64> {
    let (x21, x22, x41, x42, d) = (chart.x2.x, chart.x2.y, chart.x4.x, chart.x4.y, chart.ell3);
    let LocalGains {
        k2,
        k3,
        k4,
        k11,
        k12,
        k51,
        k52,
    } = *g;
    let mut j = DMatrix::zeros(5, 5);
    j[(0, 0)] = -x21 * (k11 * x21 + k51 * x41) - x22 * (k11 * x22 + k51 * x42);
    j[(0, 1)] = -k2 * x21 * x21 - k2 * x22 * (x22 + d);
    j[(0, 4)] = -x21 * (k52 * x41 + k12 * x21) - x22 * (k52 * x42 + k12 * x22);
    j[(1, 1)] = -k2 * x21 * x21 - k2 * (x22 + d) * (x22 + d);
    j[(1, 2)] = -d * k3 * (x22 + d);
    j[(2, 0)] = d * (k11 * x22 + k51 * x42);
    j[(2, 2)] = -d * d * k3;
    j[(2, 4)] = d * (k52 * x42 + k12 * x22);
    j[(3, 2)] = -d * k3 * (x42 + d);
    j[(3, 3)] = -k4 * x41 * x41 - k4 * (x42 + d) * (x42 + d);
    j[(4, 0)] = -x41 * (k11 * x21 + k51 * x41) - x42 * (k11 * x22 + k51 * x42);
    j[(4, 3)] = -k4 * x41 * x41 - k4 * x42 * (x42 + d);
    j[(4, 4)] = -x41 * (k52 * x41 + k12 * x21) - x42 * (k52 * x42 + k12 * x22);
    j
}

/// Same matrix assembled from edge vectors: `A_ij z_i . z'_j` with
/// `z'_1 = k11 z1 + k51 z5`, `z'_5 = k12 z1 + k52 z5`, `z'_j = k_j z_j` otherwise.
pub fn reduced_jacobian_gains_from_edges(z: &EdgeVectors, g: &LocalGains) -> DMatrix<f64> {
    let [z1, z2, z3, z4, z5] = z.z;
    let zp = [
        g.k11 * z1 + g.k51 * z5,
        g.k2 * z2,
        g.k3 * z3,
        g.k4 * z4,
        g.k12 * z1 + g.k52 * z5,
    ];
    DMatrix::from_fn(5, 5, |i, j| EDGE_ADJACENCY[i][j] as f64 * z.z[i].dot(zp[j]))
}

/// 10x10 edge-space Jacobian of the restricted law at a design framework:
/// block `(i, j) = 2 u' A_ij z_j z_j^T`.
pub fn jacobian_z_restricted(z: &EdgeVectors, uprime: f64) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(10, 10);
    for i in 0..5 {
        for j in 0..5 {
            let a = EDGE_ADJACENCY[i][j] as f64;
            if a == 0.0 {
                continue;
            }
            let zj = [z.z[j].x, z.z[j].y];
            for r in 0..2 {
                for c in 0..2 {
                    m[(2 * i + r, 2 * j + c)] = RESTRICTED_SCALE * uprime * a * zj[r] * zj[c];
                }
            }
        }
    }
    m
}

/// 10x5 derivative of the edge field with respect to the squared targets:
/// block `(i, j) = -u' A_ij z_j`.
pub fn d_jacobian_restricted(z: &EdgeVectors, uprime: f64) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(10, 5);
    for i in 0..5 {
        for j in 0..5 {
            let a = EDGE_ADJACENCY[i][j] as f64;
            m[(2 * i, j)] = -uprime * a * z.z[j].x;
            m[(2 * i + 1, j)] = -uprime * a * z.z[j].y;
        }
    }
    m
}

/// `| k (dF/ds) Z - dF/dz |_max` with `k` = [`TARGET_JACOBIAN_FACTOR`].
pub fn target_identity_residual(z: &EdgeVectors, uprime: f64) -> f64 {
    let lhs = d_jacobian_restricted(z, uprime) * z_matrix(z) * TARGET_JACOBIAN_FACTOR;
    (lhs - jacobian_z_restricted(z, uprime)).amax()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorankInfo {
    pub corank: usize,
    /// Descending.
    pub singular_values: Vec<f64>,
}

/// Number of singular values at or below `tol * sigma_max`.
pub fn corank(j: &DMatrix<f64>, tol: f64) -> CorankInfo {
    let mut sv: Vec<f64> = j.singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    let smax = sv.first().copied().unwrap_or(0.0);
    let corank = sv.iter().filter(|s| **s <= tol * smax).count();
    CorankInfo {
        corank: if smax == 0.0 { sv.len() } else { corank },
        singular_values: sv,
    }
}

/// Ratio between the finite-difference trace and the unscaled restricted
/// closed form at a design chart for `u(e) = e`. Gauge zeros do not
/// contribute to the trace.
pub fn calibrate_restricted_scale(chart: &GaugeChart) -> f64 {
    let s = chart.targets();
    let f = chart.framework();
    let fd = jacobian_x_fd(&f, &s, &ControlLaw::identity(), 0.0);
    let unscaled = reduced_jacobian_restricted(&chart.edges(), 1.0) / RESTRICTED_SCALE;
    fd.trace() / unscaled.trace()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control_laws::local_gains;
    use crate::geometry::Vec2;

    fn s0_chart() -> GaugeChart {
        GaugeChart::new(0.6, -0.3, 1.2, -0.6, 1.0)
    }

    fn generic_chart() -> GaugeChart {
        GaugeChart::new(0.9, -0.2, -0.5, -1.3, 1.1)
    }

    #[test]
    fn adjacency_matches_edge_field() {
        // dz1/dt = u2 z2 - u1 z1 - u5 z5, dz3/dt = u1 z1 - u3 z3 + u5 z5
        assert_eq!(EDGE_ADJACENCY[0], [-1, 1, 0, 0, -1]);
        assert_eq!(EDGE_ADJACENCY[2], [1, 0, -1, 0, 1]);
    }

    #[test]
    fn rigidity_ranks() {
        let sq = Framework::new(
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(1.0, 1.0),
            Vec2::new(0.0, 1.0),
        );
        assert_eq!(rigidity_rank(&sq.edges(), 1e-10), 5);
        let line = Framework::new(
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(2.5, 0.0),
            Vec2::new(-1.0, 0.0),
        );
        assert!(rigidity_rank(&line.edges(), 1e-10) < 5);
        assert_eq!(rigidity_rank(&s0_chart().edges(), 1e-10), 5);
    }

    #[test]
    fn fd_matches_analytic() {
        let chart = generic_chart();
        let s = chart.targets();
        let g = LocalGains::from_array([1.3, 0.7, 2.1, 0.9, -0.4, 0.25, 1.6]);
        let law = ControlLaw::from_gains(&g);
        let f = chart.framework();
        let fd = jacobian_x_fd(&f, &s, &law, 0.0);
        let an = analytic_jacobian_x(&f, &g);
        assert!((&fd - &an).amax() <= 1e-6 * an.amax());
    }

    #[test]
    fn generators_annihilated() {
        let chart = generic_chart();
        let f = chart.framework();
        let j = jacobian_x_fd(&f, &chart.targets(), &ControlLaw::identity(), 0.0);
        assert!((&j * rigid_generators(&f)).amax() <= 1e-7);
        let spec = nontrivial_spectrum(&j, &f, None).unwrap();
        assert_eq!(spec.eigenvalues.len(), 5);
        assert_eq!(spec.zero_count, 3);
        assert!(spec.conjugate_pairing_error() < 1e-9);
    }

    #[test]
    fn restricted_reduced_matches_fd_spectrum() {
        let chart = generic_chart();
        let f = chart.framework();
        let j = jacobian_x_fd(&f, &chart.targets(), &ControlLaw::identity(), 0.0);
        let fd = nontrivial_spectrum(&j, &f, None).unwrap();
        let red = eigenvalues(&reduced_jacobian_restricted(&chart.edges(), 1.0));
        for (a, b) in fd.eigenvalues.iter().zip(red.iter()) {
            assert!((a.re - b.re).abs() + (a.im - b.im).abs() <= 1e-6 * b.norm().max(1.0));
        }
        assert!((calibrate_restricted_scale(&chart) - RESTRICTED_SCALE).abs() < 1e-6);
    }

    #[test]
    fn column_proportionality_at_alignment() {
        let j = reduced_jacobian_restricted(&s0_chart().edges(), 1.0);
        for r in 0..5 {
            assert!((j[(r, 4)] - 2.0 * j[(r, 0)]).abs() <= 1e-12);
        }
        assert_eq!(reduced_jacobian_restricted(&s0_chart().edges(), 0.0).amax(), 0.0);
    }

    #[test]
    fn gains_matrix_transcription() {
        let chart = generic_chart();
        let g = LocalGains::from_array([1.3, 0.7, 2.1, 0.9, -0.4, 0.25, 1.6]);
        let a = reduced_jacobian_gains(&chart, &g);
        let b = reduced_jacobian_gains_from_edges(&chart.edges(), &g);
        assert!((&a - &b).amax() < 1e-14);
        let zero = reduced_jacobian_gains(&chart, &LocalGains::from_array([0.0; 7]));
        assert_eq!(zero.amax(), 0.0);
    }

    #[test]
    fn gains_matrix_determinant_vs_restricted() {
        let chart = generic_chart();
        let s = chart.targets();
        let g = local_gains(&ControlLaw::identity(), &s, &chart).unwrap();
        let a = reduced_jacobian_gains(&chart, &g).determinant();
        let b = reduced_jacobian_restricted(&chart.edges(), 1.0).determinant();
        assert!((b - RESTRICTED_SCALE.powi(5) * a).abs() < 1e-10 * b.abs().max(1.0));
    }

    #[test]
    fn edge_jacobian_spectrum() {
        let z = generic_chart().edges();
        let big = eigenvalues(&jacobian_z_restricted(&z, 1.0));
        let small = eigenvalues(&reduced_jacobian_restricted(&z, 1.0));
        let zeros = big.iter().filter(|l| l.norm() < 1e-8).count();
        assert_eq!(zeros, 5);
        for l in &small {
            let d = big
                .iter()
                .map(|m| (l.re - m.re).hypot(l.im - m.im))
                .fold(f64::INFINITY, f64::min);
            assert!(d < 1e-8);
        }
    }

    #[test]
    fn target_identity() {
        assert!(target_identity_residual(&generic_chart().edges(), 1.0) <= 1e-10);
        assert!(target_identity_residual(&s0_chart().edges(), 0.7) <= 1e-10);
    }

    #[test]
    fn corank_cases() {
        let j = reduced_jacobian_restricted(&s0_chart().edges(), 1.0);
        assert_eq!(corank(&j, 1e-10).corank, 1);
        let j = reduced_jacobian_restricted(&generic_chart().edges(), 1.0);
        assert_eq!(corank(&j, 1e-10).corank, 0);
        // z2 = 0 on top of the alignment: x2 = x3
        let c = GaugeChart::new(0.0, -1.0, 0.0, -2.0, 1.0);
        let j = reduced_jacobian_restricted(&c.edges(), 1.0);
        assert!(corank(&j, 1e-10).corank >= 2);
    }
}
