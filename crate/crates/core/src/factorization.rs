//! Determinant factorization `det J = q p` and orbit sign tables.
//!
//! `q` depends only on the local gains, `p` only on the chart. Along the
//! orbit `{id, R1, R3, R1R3}` of a chart the gain functions take shared
//! values, which constrains the signs `det J` can take.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control_laws::LocalGains;
use crate::geometry::GaugeChart;
use crate::linearization::reduced_jacobian_gains;

/// |p| below this counts as zero in an orbit.
pub const DEGENERATE_P_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FactorizationError {
    #[error("degenerate orbit: p = {value:e} at orbit element {element}")]
    DegenerateOrbit { element: &'static str, value: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PFactors {
    pub p1: f64,
    pub p2: f64,
    pub p3: f64,
    pub p4: f64,
    pub p: f64,
}

/// Chart factors of the reduced-Jacobian determinant.
///
/// `p1` vanishes when agents 1, 2, 3 are collinear, `p2` when 1, 3, 4 are,
/// `p3` when `z1` is parallel to `z5`.
pub fn p_factors(chart: &GaugeChart) -> PFactors {
    let (x21, x22, x41, x42, l3) = (chart.x2.x, chart.x2.y, chart.x4.x, chart.x4.y, chart.ell3);
    let l2sq = x21 * x21 + (x22 + l3) * (x22 + l3);
    let l4sq = x41 * x41 + (x42 + l3) * (x42 + l3);
    let p1 = l3 * x21;
    let p2 = l3 * x41;
    let p3 = x21 * x42 - x22 * x41;
    let p4 = l3 * (x41 * l2sq - x21 * l4sq);
    PFactors {
        p1,
        p2,
        p3,
        p4,
        p: p1 * p2 * p3 * p4,
    }
}

/// Determinants of the ambient 2x2 blocks `[z1 z3]`, `[z1 z5]`, `[z3 z4]` and
/// `[[z1.z3⊥, z4.z3⊥], [z2.z2, z4.z4]]`, with their relation to [`PFactors`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AmbientDeterminants {
    pub det_a: [f64; 4],
    /// Fourth block with the sign of its `z4.z3⊥` entry reversed.
    pub det_a4_flipped: f64,
    /// `p_k` equals `± det_a[perm[k]]`, with `p4 = -det_a4_flipped`.
    pub perm: [usize; 4],
    /// `max |p_k - matched ambient value|`.
    pub residual: f64,
    /// `p + prod(det_a)`; nonzero in general.
    pub unflipped_product_gap: f64,
}

pub fn ambient_determinants(chart: &GaugeChart) -> AmbientDeterminants {
    let z = chart.edges().z;
    let [z1, z2, z3, z4, z5] = z;
    let z3p = z3.perp();
    let a1 = z1.cross(z3);
    let a2 = z1.cross(z5);
    let a3 = z3.cross(z4);
    let m = [[z1.dot(z3p), z4.dot(z3p)], [z2.norm_sq(), z4.norm_sq()]];
    let a4 = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let a4f = m[0][0] * m[1][1] + m[0][1] * m[1][0];
    let pf = p_factors(chart);
    let perm = [0, 2, 1, 3];
    let matched = [a1, a3, a2, -a4f];
    let residual = [pf.p1, pf.p2, pf.p3, pf.p4]
        .iter()
        .zip(matched)
        .map(|(p, m)| (p - m).abs())
        .fold(0.0, f64::max);
    AmbientDeterminants {
        det_a: [a1, a2, a3, a4],
        det_a4_flipped: a4f,
        perm,
        residual,
        unflipped_product_gap: pf.p + a1 * a2 * a3 * a4,
    }
}

/// `k2 k3 k4 (k11 k52 - k12 k51)`.
pub fn q_value(g: &LocalGains) -> f64 {
    g.k2 * g.k3 * g.k4 * (g.k11 * g.k52 - g.k12 * g.k51)
}

/// `|det J - q p| / max(1, |det J|)` for the gauge-coordinate Jacobian.
pub fn verify_factorization(chart: &GaugeChart, g: &LocalGains) -> f64 {
    let det = reduced_jacobian_gains(chart, g).determinant();
    (det - q_value(g) * p_factors(chart).p).abs() / det.abs().max(1.0)
}

pub const ORBIT_LABELS: [&str; 4] = ["id", "R1", "R3", "R1R3"];

/// Values of `p` on the orbit `{c, R1 c, R3 c, R1 R3 c}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignTable {
    pub p: [f64; 4],
    pub signs: [i8; 4],
}

impl SignTable {
    pub fn from_signs(signs: [i8; 4]) -> Self {
        Self {
            p: signs.map(f64::from),
            signs,
        }
    }

    pub fn product_sign(&self) -> i8 {
        self.signs.iter().product()
    }
}

pub fn orbit(chart: &GaugeChart) -> [GaugeChart; 4] {
    [
        *chart,
        chart.reflect_r1(),
        chart.reflect_r3(),
        chart.reflect_r1().reflect_r3(),
    ]
}

pub fn orbit_p_signs(chart: &GaugeChart) -> Result<SignTable, FactorizationError> {
    let p = orbit(chart).map(|c| p_factors(&c).p);
    for (k, v) in p.iter().enumerate() {
        if v.abs() <= DEGENERATE_P_TOL {
            return Err(FactorizationError::DegenerateOrbit {
                element: ORBIT_LABELS[k],
                value: *v,
            });
        }
    }
    Ok(SignTable {
        p,
        signs: p.map(|v| if v > 0.0 { 1 } else { -1 }),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Feasibility {
    pub feasible: bool,
    /// Signs `(f(c), f(R1 c), g(c), g(R3 c))` making every column negative.
    pub witness: Option<[i8; 4]>,
    /// Number of the 16 assignments tried.
    pub cases: usize,
}

/// Searches for gain-function signs giving `f g p < 0` in every orbit column.
///
/// `f` takes one value on `{id, R3}` and another on `{R1, R1R3}`; `g` takes
/// one value on `{id, R1}` and another on `{R3, R1R3}`.
pub fn sign_table_feasible(t: &SignTable) -> Feasibility {
    let mut cases = 0;
    for bits in 0..16u8 {
        cases += 1;
        let sg = |b: u8| if bits & (1 << b) != 0 { -1i8 } else { 1 };
        let (f_o, f_r1, g_o, g_r3) = (sg(0), sg(1), sg(2), sg(3));
        let cols = [
            f_o * g_o * t.signs[0],
            f_r1 * g_o * t.signs[1],
            f_o * g_r3 * t.signs[2],
            f_r1 * g_r3 * t.signs[3],
        ];
        if cols.iter().all(|c| *c < 0) {
            return Feasibility {
                feasible: true,
                witness: Some([f_o, f_r1, g_o, g_r3]),
                cases,
            };
        }
    }
    Feasibility {
        feasible: false,
        witness: None,
        cases,
    }
}

/// All 16 sign tables.
pub fn all_sign_tables() -> Vec<SignTable> {
    (0..16u8)
        .map(|bits| SignTable::from_signs(std::array::from_fn(|k| if bits & (1 << k) != 0 { -1 } else { 1 })))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_chart_factors() {
        let pf = p_factors(&GaugeChart::new(1.0, 0.0, 1.0, 1.0, 1.0));
        assert_eq!((pf.p1, pf.p2, pf.p3, pf.p4, pf.p), (1.0, 1.0, 1.0, -3.0, -3.0));
    }

    #[test]
    fn collinear_two_gives_zero() {
        let pf = p_factors(&GaugeChart::new(0.0, 0.7, 1.0, 0.2, 1.3));
        assert_eq!(pf.p1, 0.0);
        assert_eq!(pf.p, 0.0);
    }

    #[test]
    fn q_cases() {
        assert_eq!(q_value(&LocalGains::uniform(1.0)), 1.0);
        let g = LocalGains::from_array([2.0, 3.0, 0.5, 0.0, 1.0, 1.0, 0.0]);
        assert_eq!(q_value(&g), -3.0);
        let g = LocalGains::from_array([2.0, 0.0, 0.5, 1.0, 1.0, 1.0, 0.0]);
        assert_eq!(q_value(&g), 0.0);
    }

    #[test]
    fn ambient_reconciliation() {
        for c in [
            GaugeChart::new(1.0, 0.0, 1.0, 1.0, 1.0),
            GaugeChart::new(0.3, -1.2, -0.8, 0.4, 1.7),
        ] {
            let a = ambient_determinants(&c);
            assert!(a.residual < 1e-12);
            let pf = p_factors(&c);
            let prod: f64 = a.det_a[..3].iter().product::<f64>() * a.det_a4_flipped;
            assert!((pf.p + prod).abs() < 1e-12);
        }
        assert!(ambient_determinants(&GaugeChart::new(0.3, -1.2, -0.8, 0.4, 1.7)).unflipped_product_gap.abs() > 1e-3);
    }

    #[test]
    fn identity_holds_at_sample() {
        let c = GaugeChart::new(0.3, -1.2, -0.8, 0.4, 1.7);
        let g = LocalGains::from_array([1.1, -0.6, 2.3, 0.4, 0.9, -1.5, 0.2]);
        assert!(verify_factorization(&c, &g) < 1e-12);
    }

    #[test]
    fn reference_orbit_product_negative() {
        let t = orbit_p_signs(&GaugeChart::new(1.0, 0.0, 1.0, 1.0, 1.0)).unwrap();
        assert_eq!(t.product_sign(), -1);
        assert!(!sign_table_feasible(&t).feasible);
    }

    #[test]
    fn degenerate_orbit_reported() {
        assert!(matches!(
            orbit_p_signs(&GaugeChart::new(0.0, 0.7, 1.0, 0.2, 1.3)),
            Err(FactorizationError::DegenerateOrbit { element: "id", .. })
        ));
    }

    #[test]
    fn orbit_scale_invariant() {
        let c = GaugeChart::new(0.3, -1.2, -0.8, 0.4, 1.7);
        let a = orbit_p_signs(&c).unwrap();
        let b = orbit_p_signs(&c.scaled(3.7)).unwrap();
        assert_eq!(a.signs, b.signs);
    }

    #[test]
    fn r3_fixes_axis_points() {
        let c = GaugeChart::new(0.8, 0.0, 1.0, 0.5, 1.0);
        assert_eq!(c.reflect_r3().x2, c.x2);
    }

    #[test]
    fn printed_pattern_infeasible() {
        let t = SignTable::from_signs([1, -1, -1, -1]);
        assert!(!sign_table_feasible(&t).feasible);
        let t = SignTable::from_signs([1, 1, 1, 1]);
        let f = sign_table_feasible(&t);
        assert!(f.feasible && f.witness.is_some());
    }

    #[test]
    fn parity_over_all_tables() {
        let tables = all_sign_tables();
        assert_eq!(tables.len(), 16);
        for t in tables {
            let f = sign_table_feasible(&t);
            assert_eq!(f.feasible, t.product_sign() > 0, "{:?}", t.signs);
            if !f.feasible {
                assert_eq!(f.cases, 16);
            }
        }
    }
}
