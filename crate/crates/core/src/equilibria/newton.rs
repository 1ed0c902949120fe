//! Bordered Newton solver for equilibria modulo rigid motions.
//!
//! Unknowns `(x21, x22, x32, x41, x42, omega)` solve
//! `relative_field(y) + omega * rotation_generator(y) = 0` with `x1 = 0` and
//! `x31 = 0`. A converged point is accepted only if the full agent field
//! vanishes, which rules out rotating and translating formations.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use super::{assess, relative_field, rotation_generator, slice_to_relative, EquilibriumRecord};
use crate::control_laws::ControlLaw;
use crate::geometry::{gauge_fix, Framework, GaugeChart, GeometryError, TargetsSquared};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NewtonError {
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("converged to a degenerate configuration (shortest edge {min_edge:e})")]
    Degenerate { framework: Framework, min_edge: f64 },
    #[error("converged to a rotating formation (omega = {0:e})")]
    Rotating(f64),
    #[error("relative equilibrium with residual agent field {0:e}")]
    Translating(f64),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NewtonOptions {
    pub max_iterations: usize,
    /// Acceptance bound on the max-norm of the agent field.
    pub residual_tol: f64,
    pub omega_tol: f64,
    /// Shortest edge, relative to the framework size, counted as collapsed.
    pub degenerate_tol: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            residual_tol: 1e-10,
            omega_tol: 1e-10,
            degenerate_tol: 1e-6,
        }
    }
}

fn bordered_residual(u: &[f64; 6], s: &TargetsSquared, law: &ControlLaw) -> [f64; 6] {
    let y = slice_to_relative(&u[..5]);
    let f = relative_field(&y, s, law);
    let r = rotation_generator(&y);
    std::array::from_fn(|i| f[i] + u[5] * r[i])
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

fn bordered_jacobian(u: &[f64; 6], s: &TargetsSquared, law: &ControlLaw) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(6, 6);
    let scale = max_abs(&u[..5]).max(1.0);
    let h = 1e-7 * scale;
    for c in 0..5 {
        let mut up = *u;
        let mut um = *u;
        up[c] += h;
        um[c] -= h;
        let fp = bordered_residual(&up, s, law);
        let fm = bordered_residual(&um, s, law);
        for r in 0..6 {
            j[(r, c)] = (fp[r] - fm[r]) / (2.0 * h);
        }
    }
    let r = rotation_generator(&slice_to_relative(&u[..5]));
    for (row, v) in r.iter().enumerate() {
        j[(row, 5)] = *v;
    }
    j
}

fn solve_step(j: DMatrix<f64>, rhs: DVector<f64>) -> DVector<f64> {
    if let Some(x) = j.clone().lu().solve(&rhs) {
        if x.iter().all(|v| v.is_finite()) {
            return x;
        }
    }
    j.svd(true, true)
        .solve(&rhs, 1e-12)
        .unwrap_or_else(|_| DVector::zeros(rhs.len()))
}

/// Solves for an equilibrium near `start` and returns its assessed record.
pub fn newton_equilibrium(
    start: &Framework,
    s: &TargetsSquared,
    law: &ControlLaw,
    mu: f64,
    opts: &NewtonOptions,
) -> Result<(EquilibriumRecord, usize), NewtonError> {
    let fix = gauge_fix(start)?;
    let c = fix.chart;
    let st = s.shifted(3, mu);
    let mut u = [c.x2.x, c.x2.y, -c.ell3, c.x4.x, c.x4.y, 0.0];
    let mut g = bordered_residual(&u, &st, law);
    let mut res = max_abs(&g);
    let mut iterations = 0;
    let tiny = |u: &[f64; 6]| 1e-15 * max_abs(&u[..5]).max(1.0).powi(3);
    while iterations < opts.max_iterations && res > tiny(&u) {
        iterations += 1;
        let j = bordered_jacobian(&u, &st, law);
        let step = solve_step(j, -DVector::from_column_slice(&g));
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let trial: [f64; 6] = std::array::from_fn(|i| u[i] + lambda * step[i]);
            let gt = bordered_residual(&trial, &st, law);
            let rt = max_abs(&gt);
            if rt.is_finite() && (rt < res || rt <= tiny(&trial)) {
                u = trial;
                g = gt;
                res = rt;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if !accepted {
            break;
        }
        if step.amax() * lambda <= 1e-15 * max_abs(&u[..5]).max(1.0) {
            break;
        }
    }
    let f = super::framework_from_relative(&slice_to_relative(&u[..5]));
    let z = f.edges();
    let size = f.max_abs().max(1e-300);
    let min_edge = z.z.iter().map(|v| v.norm()).fold(f64::INFINITY, f64::min);
    if min_edge <= opts.degenerate_tol * size {
        return Err(NewtonError::Degenerate {
            framework: f,
            min_edge,
        });
    }
    let scale = max_abs(&u[..5]).max(1.0).powi(3);
    if !(res <= opts.residual_tol * scale) {
        return Err(NewtonError::NoConvergence { iterations, residual: res });
    }
    if u[5].abs() > opts.omega_tol * max_abs(&u[..5]).max(1.0).powi(2) {
        return Err(NewtonError::Rotating(u[5]));
    }
    let chart: GaugeChart = gauge_fix(&f)?.chart;
    let record = assess(&chart, s, law, mu, u[5]);
    if record.residual > opts.residual_tol * scale {
        return Err(NewtonError::Translating(record.residual));
    }
    Ok((record, iterations))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibria::EquilibriumClass;
    use crate::geometry::{attach_frameworks, Vec2};

    #[test]
    fn design_start_converges_immediately() {
        let c = GaugeChart::new(0.6, -0.3, 1.2, -0.6, 1.0);
        let (r, it) = newton_equilibrium(
            &c.framework(),
            &c.targets(),
            &ControlLaw::identity(),
            0.0,
            &NewtonOptions::default(),
        )
        .unwrap();
        assert!(it <= 2);
        assert!(r.omega.abs() < 1e-12);
        assert!(r.chart.distance(&c) < 1e-12);
    }

    #[test]
    fn perturbed_square_recovers_design() {
        let s = TargetsSquared([1.0, 1.0, 2.0, 1.0, 1.0]);
        let h = 0.5_f64.sqrt();
        let c = GaugeChart::new(h, -h, -h, -h, 2.0_f64.sqrt());
        let mut f = c.framework().rotated(0.4).translated(Vec2::new(0.3, 0.1));
        f.pos[1] += Vec2::new(0.03, -0.02);
        f.pos[3] += Vec2::new(-0.02, 0.025);
        f.pos[2] += Vec2::new(0.01, 0.0);
        let (r, _) = newton_equilibrium(&f, &s, &ControlLaw::identity(), 0.0, &Default::default()).unwrap();
        assert_eq!(r.class, EquilibriumClass::Design);
        let att = attach_frameworks(&s);
        let d = att.charts.iter().map(|a| a.distance(&r.chart)).fold(f64::INFINITY, f64::min);
        assert!(d < 1e-9);
        assert!(r.residual <= 1e-12);
    }

    #[test]
    fn collapse_is_flagged() {
        let p = Vec2::new(0.0, 0.0);
        let f = Framework::new(p, Vec2::new(1e-9, 0.0), Vec2::new(0.0, -1e-3), Vec2::new(2e-9, 1e-9));
        let r = newton_equilibrium(
            &f,
            &TargetsSquared([1.0, 1.0, 2.0, 1.0, 1.0]),
            &ControlLaw::identity(),
            0.0,
            &Default::default(),
        );
        assert!(r.is_err());
    }
}
