//! Numerical transcritical-bifurcation conditions.
//!
//! At an equilibrium with a simple zero eigenvalue (right and left null
//! vectors `v`, `w`) a transcritical bifurcation needs
//! `w . f_mu = 0`, `w . D2f(v, v) != 0` and a nonzero mixed term.
//!
//! The mixed term is reported twice. `c_raw = w . (D f_mu) v` is the plain
//! directional derivative. `c` adds the correction `w . D2f(xi, v)` with
//! `J xi = -f_mu`, `xi` orthogonal to `v`, which is the coefficient of
//! `mu * y` in the reduced scalar equation when `f_mu` does not vanish
//! identically.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::slice_field;
use crate::control_laws::ControlLaw;
use crate::geometry::TargetsSquared;
use crate::linearization::{eigenvalues, Eigenvalue};

/// A vector field depending on one parameter.
pub trait ParamField: Sync {
    fn dim(&self) -> usize;
    fn eval(&self, x: &[f64], mu: f64) -> Vec<f64>;
}

/// `x' = x (mu - x)`.
pub struct Logistic;

impl ParamField for Logistic {
    fn dim(&self) -> usize {
        1
    }
    fn eval(&self, x: &[f64], mu: f64) -> Vec<f64> {
        vec![x[0] * (mu - x[0])]
    }
}

/// `x' = mu - x^2`.
pub struct SaddleNode;

impl ParamField for SaddleNode {
    fn dim(&self) -> usize {
        1
    }
    fn eval(&self, x: &[f64], mu: f64) -> Vec<f64> {
        vec![mu - x[0] * x[0]]
    }
}

/// `x' = x (1 - k x^2)`; `mu` is added to `k`.
pub struct CubicFeedback {
    pub k: f64,
}

impl ParamField for CubicFeedback {
    fn dim(&self) -> usize {
        1
    }
    fn eval(&self, x: &[f64], mu: f64) -> Vec<f64> {
        vec![x[0] * (1.0 - (self.k + mu) * x[0] * x[0])]
    }
}

/// Gradient flow of the double well `x^4/4 - x^2/2 - mu x`.
pub struct DoubleWell;

impl ParamField for DoubleWell {
    fn dim(&self) -> usize {
        1
    }
    fn eval(&self, x: &[f64], mu: f64) -> Vec<f64> {
        vec![-(x[0] * x[0] * x[0] - x[0] - mu)]
    }
}

/// The formation field on the gauge slice `(x21, x22, x32, x41, x42)` with
/// `mu` added to the target of edge 3.
pub struct TwoCyclesSlice {
    pub s: TargetsSquared,
    pub law: ControlLaw,
}

impl ParamField for TwoCyclesSlice {
    fn dim(&self) -> usize {
        5
    }
    fn eval(&self, x: &[f64], mu: f64) -> Vec<f64> {
        slice_field(x, &self.s.shifted(3, mu), &self.law).to_vec()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SotomayorTols {
    /// Relative to `max(|J|, 1)`.
    pub lambda: f64,
    pub b: f64,
    pub a: f64,
    pub c: f64,
    /// Finite-difference step.
    pub h: f64,
}

impl Default for SotomayorTols {
    fn default() -> Self {
        Self {
            lambda: 1e-6,
            b: 1e-6,
            a: 1e-6,
            c: 1e-6,
            h: 1e-4,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Transcritical,
    SaddleNodeLike,
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SotomayorReport {
    pub lambda_min: f64,
    pub v: Vec<f64>,
    pub w: Vec<f64>,
    pub b_mu: f64,
    pub a: f64,
    pub c_raw: f64,
    pub c: f64,
    /// `w . (f_mumu + 2 D f_mu xi + D2f(xi, xi))`.
    pub g_mumu: f64,
    /// `c^2 - a g_mumu`; positive when two branches cross.
    pub discriminant: f64,
    pub other_eigenvalues: Vec<Eigenvalue>,
    pub others_negative: bool,
    pub singular_values: Vec<f64>,
    pub verdict: Verdict,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SotomayorError {
    #[error("corank {corank} >= 2 (singular values {singular_values:?})")]
    HighCorank {
        corank: usize,
        singular_values: Vec<f64>,
    },
    #[error("dimension mismatch: field has {field}, point has {point}")]
    Dimension { field: usize, point: usize },
}

fn eval_v(field: &dyn ParamField, x: &DVector<f64>, mu: f64) -> DVector<f64> {
    DVector::from_vec(field.eval(x.as_slice(), mu))
}

/// Central-difference Jacobian with step `h`.
pub fn jacobian(field: &dyn ParamField, x: &[f64], mu: f64, h: f64) -> DMatrix<f64> {
    let n = field.dim();
    let x0 = DVector::from_column_slice(x);
    let mut j = DMatrix::zeros(n, n);
    for c in 0..n {
        let mut e = DVector::zeros(n);
        e[c] = h;
        let d = (eval_v(field, &(&x0 + &e), mu) - eval_v(field, &(&x0 - &e), mu)) / (2.0 * h);
        j.set_column(c, &d);
    }
    j
}

/// One Richardson step for a second-order central formula.
fn richardson<F: Fn(f64) -> DVector<f64>>(d: F, h: f64) -> DVector<f64> {
    let coarse = d(h);
    let fine = d(0.5 * h);
    (fine * 4.0 - coarse) / 3.0
}

/// Runs the checks at the equilibrium `x0` of `field` at `mu0`.
pub fn sotomayor_check(
    field: &dyn ParamField,
    x0: &[f64],
    mu0: f64,
    tols: &SotomayorTols,
) -> Result<SotomayorReport, SotomayorError> {
    let n = field.dim();
    if x0.len() != n {
        return Err(SotomayorError::Dimension {
            field: n,
            point: x0.len(),
        });
    }
    let x = DVector::from_column_slice(x0);
    let j = jacobian(field, x0, mu0, 1e-6 * x.amax().max(1.0));
    let jnorm = j.norm().max(1.0);

    let svd = j.clone().svd(true, true);
    let (u, vt) = (svd.u.as_ref().unwrap(), svd.v_t.as_ref().unwrap());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let singular_values: Vec<f64> = order.iter().map(|&k| svd.singular_values[k]).collect();
    let kmin = order[n - 1];
    let small = singular_values
        .iter()
        .filter(|s| **s <= tols.lambda * jnorm)
        .count();
    if small >= 2 {
        return Err(SotomayorError::HighCorank {
            corank: small,
            singular_values,
        });
    }
    let mut v: DVector<f64> = vt.row(kmin).transpose();
    let mut w: DVector<f64> = u.column(kmin).into_owned();
    // fix orientation: leading component of v positive, w . v > 0
    let lead = v.iamax();
    if v[lead] < 0.0 {
        v = -v;
    }
    if w.dot(&v) < 0.0 {
        w = -w;
    }

    let mut eigs = eigenvalues(&j);
    let imin = (0..eigs.len())
        .min_by(|&a, &b| eigs[a].norm().total_cmp(&eigs[b].norm()))
        .unwrap_or(0);
    let lambda_min = eigs[imin].re;
    eigs.remove(imin);
    let others_negative = eigs.iter().all(|l| l.re < 0.0);

    let h = tols.h;
    let f = |y: &DVector<f64>, m: f64| eval_v(field, y, m);
    let f_mu = richardson(|h| (f(&x, mu0 + h) - f(&x, mu0 - h)) / (2.0 * h), h);
    let d2 = |p: &DVector<f64>, q: &DVector<f64>| {
        richardson(
            |h| {
                (f(&(&x + (p + q) * h), mu0) - f(&(&x + (p - q) * h), mu0)
                    - f(&(&x - (p - q) * h), mu0)
                    + f(&(&x - (p + q) * h), mu0))
                    / (4.0 * h * h)
            },
            h,
        )
    };
    let d_fmu = |p: &DVector<f64>| {
        richardson(
            |h| {
                (f(&(&x + p * h), mu0 + h) - f(&(&x - p * h), mu0 + h) - f(&(&x + p * h), mu0 - h)
                    + f(&(&x - p * h), mu0 - h))
                    / (4.0 * h * h)
            },
            h,
        )
    };
    let f_mumu = richardson(|h| (f(&x, mu0 + h) - f(&x, mu0) * 2.0 + f(&x, mu0 - h)) / (h * h), h);

    let b_mu = w.dot(&f_mu);
    let a = w.dot(&d2(&v, &v));
    let c_raw = w.dot(&d_fmu(&v));

    let xi = {
        let svd = j.clone().svd(true, true);
        let mut sol = svd
            .solve(&(-&f_mu), tols.lambda * jnorm)
            .unwrap_or_else(|_| DVector::zeros(n));
        let along = sol.dot(&v);
        sol -= &v * along;
        sol
    };
    let (c, g_mumu) = if xi.amax() > 0.0 {
        let c = c_raw + w.dot(&d2(&xi, &v));
        let g = w.dot(&(f_mumu + d_fmu(&xi) * 2.0 + d2(&xi, &xi)));
        (c, g)
    } else {
        (c_raw, w.dot(&f_mumu))
    };
    let discriminant = c * c - a * g_mumu;

    let singular = lambda_min.abs() <= tols.lambda * jnorm;
    let verdict = if singular
        && others_negative
        && b_mu.abs() <= tols.b
        && a.abs() >= tols.a
        && c.abs() >= tols.c
    {
        Verdict::Transcritical
    } else if singular && b_mu.abs() > tols.b && a.abs() >= tols.a {
        Verdict::SaddleNodeLike
    } else {
        Verdict::Inconclusive
    };

    Ok(SotomayorReport {
        lambda_min,
        v: v.iter().copied().collect(),
        w: w.iter().copied().collect(),
        b_mu,
        a,
        c_raw,
        c,
        g_mumu,
        discriminant,
        other_eigenvalues: eigs,
        others_negative,
        singular_values,
        verdict,
    })
}
