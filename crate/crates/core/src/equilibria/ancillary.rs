//! Equilibria with `z1` parallel to `z5`.
//!
//! With `x1 = 0`, `x2 = t2 e`, `x4 = t4 e` on a fixed unit direction `e`,
//! agents 2, 3, 4 are at rest iff `e2 = e3 = e4 = 0`, and agent 1 is at rest
//! iff `u1 t2 + u5 t4 = 0`. That is four equations in `(t2, t4, x3)`.

use nalgebra::{Matrix4, Vector4};
use thiserror::Error;

use super::{assess, EquilibriumRecord};
use crate::control_laws::{evaluate, ControlLaw};
use crate::geometry::{gauge_fix, Errors, Framework, GaugeChart, GeometryError, TargetsSquared, Vec2};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AncillaryError {
    #[error("aligned system did not converge (residual {0:e})")]
    NoConvergence(f64),
    #[error("solution has t2 t4 of sign {got}, requested {want}")]
    WrongBranch { got: f64, want: f64 },
    #[error("no starting point: circles |x3| and |x3 - x2| do not meet")]
    NoStart,
    #[error("agent field residual {0:e} at the aligned solution")]
    Residual(f64),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

fn aligned_residual(v: &[f64; 4], s: &TargetsSquared, law: &ControlLaw) -> [f64; 4] {
    let [t2, t4, a, b] = *v;
    let x3 = Vec2::new(a, b);
    let x2 = Vec2::new(t2, 0.0);
    let x4 = Vec2::new(t4, 0.0);
    let e = Errors([
        t2 * t2 - s.0[0],
        (x3 - x2).norm_sq() - s.0[1],
        x3.norm_sq() - s.0[2],
        (x3 - x4).norm_sq() - s.0[3],
        t4 * t4 - s.0[4],
    ]);
    let dot = t2 * t4;
    let u1 = evaluate(law, 1, s, &e, dot);
    let u5 = evaluate(law, 5, s, &e, dot);
    [e.0[1], e.0[2], e.0[3], u1 * t2 + u5 * t4]
}

/// `(t2, t4, x31, x32)` of a chart after rotating `x2` onto the positive
/// horizontal axis.
pub fn aligned_coords(c: &GaugeChart) -> [f64; 4] {
    let th = c.x2.y.atan2(c.x2.x);
    let x3 = c.x3().rotate(-th);
    let x4 = c.x4.rotate(-th);
    [c.x2.norm(), x4.x, x3.x, x3.y]
}

fn default_start(s: &TargetsSquared, branch_sign: f64) -> Option<[f64; 4]> {
    let t2 = s.0[0].sqrt();
    let t4 = branch_sign.signum() * s.0[4].sqrt();
    // |x3|^2 = s3, |x3 - (t2, 0)|^2 = s2
    let a = (s.0[2] - s.0[1] + t2 * t2) / (2.0 * t2);
    let b2 = s.0[2] - a * a;
    if !(b2 >= 0.0) || t2 == 0.0 {
        return None;
    }
    Some([t2, t4, a, -b2.sqrt()])
}

/// Solves the aligned system; `branch_sign` selects `sign(t2 t4)`
/// (+1 parallel, −1 anti-parallel `z1`, `z5`).
pub fn solve_ancillary_aligned(
    s: &TargetsSquared,
    mu: f64,
    law: &ControlLaw,
    branch_sign: f64,
    hint: Option<[f64; 4]>,
) -> Result<EquilibriumRecord, AncillaryError> {
    let st = s.shifted(3, mu);
    let mut v = match hint {
        Some(h) => h,
        None => default_start(&st, branch_sign).ok_or(AncillaryError::NoStart)?,
    };
    let norm = |r: &[f64; 4]| r.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    let mut r = aligned_residual(&v, &st, law);
    let mut res = norm(&r);
    for _ in 0..60 {
        let scale = v.iter().fold(1.0_f64, |m, x| m.max(x.abs()));
        if res <= 1e-15 * scale.powi(3) {
            break;
        }
        let h = 1e-7 * scale;
        let mut j = Matrix4::zeros();
        for c in 0..4 {
            let mut vp = v;
            let mut vm = v;
            vp[c] += h;
            vm[c] -= h;
            let rp = aligned_residual(&vp, &st, law);
            let rm = aligned_residual(&vm, &st, law);
            for k in 0..4 {
                j[(k, c)] = (rp[k] - rm[k]) / (2.0 * h);
            }
        }
        let Some(step) = j.lu().solve(&-Vector4::from(r)) else {
            break;
        };
        let mut lambda = 1.0;
        let mut moved = false;
        for _ in 0..30 {
            let trial: [f64; 4] = std::array::from_fn(|i| v[i] + lambda * step[i]);
            let rt = aligned_residual(&trial, &st, law);
            if norm(&rt) < res {
                v = trial;
                r = rt;
                res = norm(&rt);
                moved = true;
                break;
            }
            lambda *= 0.5;
        }
        if !moved {
            break;
        }
    }
    let scale = v.iter().fold(1.0_f64, |m, x| m.max(x.abs()));
    if !(res <= 1e-11 * scale.powi(3)) {
        return Err(AncillaryError::NoConvergence(res));
    }
    let got = (v[0] * v[1]).signum();
    if got != branch_sign.signum() {
        return Err(AncillaryError::WrongBranch {
            got,
            want: branch_sign.signum(),
        });
    }
    let f = Framework::new(
        Vec2::ZERO,
        Vec2::new(v[0], 0.0),
        Vec2::new(v[2], v[3]),
        Vec2::new(v[1], 0.0),
    );
    let chart = gauge_fix(&f)?.chart;
    let rec = assess(&chart, s, law, mu, 0.0);
    if rec.residual > 1e-10 * scale.powi(3) {
        return Err(AncillaryError::Residual(rec.residual));
    }
    Ok(rec)
}
