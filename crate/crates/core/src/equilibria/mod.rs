//! Equilibrium solving, continuation, bifurcation checks and classification.
//!
//! Equilibria are solved in the gauge chart `x1 = 0`, `x3 = (0, x32)`. The
//! relative field of agents 2..4 with respect to agent 1 lives in R^6; the
//! rotation is removed by a multiplier `omega` on the rotation generator.

use serde::{Deserialize, Serialize};

use crate::control_laws::ControlLaw;
use crate::dynamics::{field_at_targets, vector_field_x};
use crate::geometry::{errors_of, Errors, Framework, GaugeChart, TargetsSquared, Vec2};
use crate::linearization::{deflated_spectrum, jacobian_x_fd, Spectrum};

pub mod ancillary;
pub mod classify;
pub mod continuation;
pub mod harvest;
pub mod newton;
pub mod probe;
pub mod sotomayor;

pub use ancillary::solve_ancillary_aligned;
pub use classify::{classify, ClassificationVerdict, DefinitionFlags};
pub use continuation::{continue_branch, design_branch, Branch, Corrector};
pub use harvest::{harvest_equilibria, Harvest, SearchParams};
pub use newton::{newton_equilibrium, NewtonError, NewtonOptions};
pub use probe::{robustness_probe, ProbeReport};
pub use sotomayor::{sotomayor_check, ParamField, SotomayorReport, SotomayorTols, Verdict};

/// Half-width of the band around zero in which the leading real part is
/// reported as marginal.
pub const MARGINAL_BAND: f64 = 1e-7;
/// Largest `|e_i|` of a design equilibrium.
pub const DESIGN_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EquilibriumClass {
    Design,
    Ancillary,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stability {
    Stable,
    Unstable,
    Marginal,
}

impl Stability {
    pub fn from_max_real(re: f64) -> Self {
        if re < -MARGINAL_BAND {
            Stability::Stable
        } else if re > MARGINAL_BAND {
            Stability::Unstable
        } else {
            Stability::Marginal
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumRecord {
    pub chart: GaugeChart,
    pub mu: f64,
    /// Max-norm of the agent field at the chart.
    pub residual: f64,
    pub omega: f64,
    pub spectrum: Spectrum,
    pub errors: Errors,
    pub class: EquilibriumClass,
    pub stability: Stability,
}

impl EquilibriumRecord {
    pub fn gauge_zero_count(&self) -> usize {
        self.spectrum.zero_count
    }

    pub fn leading_real(&self) -> f64 {
        self.spectrum.max_real()
    }

    pub fn is_aligned(&self, tol: f64) -> bool {
        self.chart.is_aligned(tol)
    }
}

/// Evaluates residual, spectrum and tags of a chart.
pub fn assess(
    chart: &GaugeChart,
    s: &TargetsSquared,
    law: &ControlLaw,
    mu: f64,
    omega: f64,
) -> EquilibriumRecord {
    let f = chart.framework();
    let st = s.shifted(3, mu);
    let residual = field_at_targets(&f, &st, law)
        .iter()
        .fold(0.0_f64, |m, v| m.max(v.abs()));
    let j = jacobian_x_fd(&f, s, law, mu);
    let spectrum = deflated_spectrum(&j, &f, None);
    let errors = errors_of(&chart.edges(), &st);
    let class = if errors.max_abs() <= DESIGN_TOL {
        EquilibriumClass::Design
    } else {
        EquilibriumClass::Ancillary
    };
    let stability = Stability::from_max_real(spectrum.max_real());
    EquilibriumRecord {
        chart: *chart,
        mu,
        residual,
        omega,
        spectrum,
        errors,
        class,
        stability,
    }
}

/// Framework with `x1 = 0` and agents 2..4 at `y = (x2, x3, x4)`.
pub(crate) fn framework_from_relative(y: &[f64; 6]) -> Framework {
    Framework::new(
        Vec2::ZERO,
        Vec2::new(y[0], y[1]),
        Vec2::new(y[2], y[3]),
        Vec2::new(y[4], y[5]),
    )
}

/// Velocities of agents 2..4 relative to agent 1.
pub fn relative_field(y: &[f64; 6], s: &TargetsSquared, law: &ControlLaw) -> [f64; 6] {
    let v = field_at_targets(&framework_from_relative(y), s, law);
    std::array::from_fn(|i| v[i + 2] - v[i % 2])
}

/// Infinitesimal rotation about agent 1 in relative coordinates.
pub fn rotation_generator(y: &[f64; 6]) -> [f64; 6] {
    [-y[1], y[0], -y[3], y[2], -y[5], y[4]]
}

/// Chart coordinates `(x21, x22, x32, x41, x42)` to relative coordinates.
pub fn slice_to_relative(x: &[f64]) -> [f64; 6] {
    [x[0], x[1], 0.0, x[2], x[3], x[4]]
}

pub fn chart_to_slice(c: &GaugeChart) -> [f64; 5] {
    [c.x2.x, c.x2.y, -c.ell3, c.x4.x, c.x4.y]
}

/// Field on the slice `x1 = 0`, `x31 = 0`: the relative field minus the
/// rotation that keeps `x31` at zero. Its Jacobian at an equilibrium carries
/// the five nontrivial eigenvalues.
pub fn slice_field(x: &[f64], s: &TargetsSquared, law: &ControlLaw) -> [f64; 5] {
    let y = slice_to_relative(x);
    let f = relative_field(&y, s, law);
    let r = rotation_generator(&y);
    let omega = if r[2] != 0.0 { f[2] / r[2] } else { 0.0 };
    let g: [f64; 6] = std::array::from_fn(|i| f[i] - omega * r[i]);
    [g[0], g[1], g[3], g[4], g[5]]
}

/// Max-norm of the agent field, for reporting.
pub fn field_residual(f: &Framework, s: &TargetsSquared, law: &ControlLaw, mu: f64) -> f64 {
    vector_field_x(f, s, law, mu)
        .iter()
        .fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// Smallest distance between two frameworks over rotations and translations.
///
/// Both are centred; the rotation angle is found on a coarse grid and
/// refined by golden-section search.
pub fn se2_distance(a: &Framework, b: &Framework) -> f64 {
    let ca = a.centroid();
    let cb = b.centroid();
    let pa = a.pos.map(|p| p - ca);
    let pb = b.pos.map(|p| p - cb);
    let dist = |th: f64| -> f64 {
        pa.iter()
            .zip(pb.iter())
            .map(|(p, q)| (*p - q.rotate(th)).norm_sq())
            .sum::<f64>()
    };
    const GRID: usize = 72;
    let step = std::f64::consts::TAU / GRID as f64;
    let best = (0..GRID)
        .map(|k| k as f64 * step)
        .min_by(|x, y| dist(*x).total_cmp(&dist(*y)))
        .unwrap_or(0.0);
    let (mut lo, mut hi) = (best - step, best + step);
    let g = (5.0_f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let (mut f1, mut f2) = (dist(x1), dist(x2));
    for _ in 0..80 {
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = dist(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = dist(x2);
        }
    }
    f1.min(f2).min(dist(best)).max(0.0).sqrt()
}
