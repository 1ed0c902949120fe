//! Closed-loop vector field and time integration.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control_laws::{evaluate_all, ControlLaw};
use crate::geometry::{edges, errors_of, EdgeVectors, Errors, Framework, TargetsSquared, Vec2};
use crate::linearization::EDGE_ADJACENCY;

/// Positions beyond this magnitude abort an integration.
pub const BLOW_UP_BOUND: f64 = 1e6;

/// Base targets with a parameter added to one of them (edge 3 by default).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MuFamily {
    pub base: TargetsSquared,
    pub mu: f64,
    pub edge: usize,
}

impl MuFamily {
    pub fn new(base: TargetsSquared, mu: f64) -> Self {
        Self { base, mu, edge: 3 }
    }

    pub fn targets(&self) -> TargetsSquared {
        self.base.shifted(self.edge, self.mu)
    }
}

fn feedbacks(z: &EdgeVectors, s: &TargetsSquared, law: &ControlLaw) -> [f64; 5] {
    let e = errors_of(z, s);
    evaluate_all(law, s, &e, z.dot15())
}

/// Agent velocities with targets exactly `s` (no parameter shift).
pub fn field_at_targets(f: &Framework, s: &TargetsSquared, law: &ControlLaw) -> [f64; 8] {
    let z = edges(f);
    let u = feedbacks(&z, s, law);
    let [z1, z2, z3, z4, z5] = z.z;
    let v1 = u[0] * z1 + u[4] * z5;
    let v2 = u[1] * z2;
    let v3 = u[2] * z3;
    let v4 = u[3] * z4;
    [v1.x, v1.y, v2.x, v2.y, v3.x, v3.y, v4.x, v4.y]
}

/// Agent velocities; `mu` is added to the target of edge 3.
pub fn vector_field_x(f: &Framework, s: &TargetsSquared, law: &ControlLaw, mu: f64) -> [f64; 8] {
    field_at_targets(f, &s.shifted(3, mu), law)
}

/// Edge velocities `dz_i/dt = sum_j A_ij u_j z_j`.
pub fn vector_field_z(z: &EdgeVectors, s: &TargetsSquared, law: &ControlLaw, mu: f64) -> [f64; 10] {
    let u = feedbacks(z, &s.shifted(3, mu), law);
    let mut out = [0.0; 10];
    for (i, row) in EDGE_ADJACENCY.iter().enumerate() {
        let mut acc = Vec2::ZERO;
        for (j, a) in row.iter().enumerate() {
            if *a != 0 {
                acc += (*a as f64 * u[j]) * z.z[j];
            }
        }
        out[2 * i] = acc.x;
        out[2 * i + 1] = acc.y;
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorControls {
    pub rtol: f64,
    pub atol: f64,
    pub h0: f64,
    pub max_step: f64,
    /// Fixed RK4 step; when set the adaptive pair is bypassed.
    pub fixed_step: Option<f64>,
    pub max_steps: usize,
}

impl Default for IntegratorControls {
    fn default() -> Self {
        Self {
            rtol: 1e-9,
            atol: 1e-12,
            h0: 1e-3,
            max_step: f64::INFINITY,
            fixed_step: None,
            max_steps: 2_000_000,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IntegrationError {
    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepUnderflow { t: f64, h: f64 },
    #[error("state exceeded {BLOW_UP_BOUND:e} at t = {t}")]
    BlowUp { t: f64 },
    #[error("step budget of {0} exhausted at t = {1}")]
    TooManySteps(usize, f64),
    #[error("non-finite state at t = {0}")]
    NonFinite(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Framework>,
    pub errors: Vec<Errors>,
}

impl Trajectory {
    pub fn last(&self) -> (f64, Framework, Errors) {
        let n = self.times.len() - 1;
        (self.times[n], self.states[n], self.errors[n])
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

// Dormand-Prince 5(4) tableau
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Solution samples of an autonomous ODE.
#[derive(Clone, Debug, PartialEq)]
pub struct OdeSolution<const N: usize> {
    pub t: Vec<f64>,
    pub y: Vec<[f64; N]>,
}

fn check_state<const N: usize>(y: &[f64; N], t: f64) -> Result<(), IntegrationError> {
    if y.iter().any(|v| !v.is_finite()) {
        return Err(IntegrationError::NonFinite(t));
    }
    if y.iter().any(|v| v.abs() > BLOW_UP_BOUND) {
        return Err(IntegrationError::BlowUp { t });
    }
    Ok(())
}

fn rk4_step<const N: usize, F>(rhs: &F, y: &[f64; N], h: f64) -> [f64; N]
where
    F: Fn(&[f64; N]) -> [f64; N],
{
    let add = |a: &[f64; N], k: &[f64; N], c: f64| -> [f64; N] {
        std::array::from_fn(|i| a[i] + c * k[i])
    };
    let k1 = rhs(y);
    let k2 = rhs(&add(y, &k1, 0.5 * h));
    let k3 = rhs(&add(y, &k2, 0.5 * h));
    let k4 = rhs(&add(y, &k3, h));
    std::array::from_fn(|i| y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
}

/// Integrates `y' = rhs(y)` on `[0, t_end]`, recording every accepted step.
pub fn solve_ode<const N: usize, F>(
    rhs: F,
    y0: [f64; N],
    t_end: f64,
    ctl: &IntegratorControls,
) -> Result<OdeSolution<N>, IntegrationError>
where
    F: Fn(&[f64; N]) -> [f64; N],
{
    assert!(t_end > 0.0, "integration horizon must be positive");
    check_state(&y0, 0.0)?;
    let mut sol = OdeSolution {
        t: vec![0.0],
        y: vec![y0],
    };
    let mut t = 0.0;
    let mut y = y0;

    if let Some(h) = ctl.fixed_step {
        let n = (t_end / h).ceil() as usize;
        for i in 1..=n {
            let step = if i == n { t_end - t } else { h };
            y = rk4_step(&rhs, &y, step);
            t = if i == n { t_end } else { i as f64 * h };
            check_state(&y, t)?;
            sol.t.push(t);
            sol.y.push(y);
        }
        return Ok(sol);
    }

    let mut h = ctl.h0.min(ctl.max_step).min(t_end);
    let mut k = [[0.0; N]; 7];
    k[0] = rhs(&y);
    let mut steps = 0usize;
    while t < t_end {
        if steps >= ctl.max_steps {
            return Err(IntegrationError::TooManySteps(ctl.max_steps, t));
        }
        steps += 1;
        let last = t + h >= t_end;
        if last {
            h = t_end - t;
        }
        for stage in 1..7 {
            let ys: [f64; N] = std::array::from_fn(|i| {
                y[i] + h * (0..stage).map(|j| A[stage][j] * k[j][i]).sum::<f64>()
            });
            k[stage] = rhs(&ys);
        }
        let y5: [f64; N] = std::array::from_fn(|i| {
            y[i] + h * (0..7).map(|j| B5[j] * k[j][i]).sum::<f64>()
        });
        let mut err = 0.0;
        for i in 0..N {
            let e = h * (0..7).map(|j| (B5[j] - B4[j]) * k[j][i]).sum::<f64>();
            let sc = ctl.atol + ctl.rtol * y[i].abs().max(y5[i].abs());
            err += (e / sc) * (e / sc);
        }
        let err = (err / N as f64).sqrt();
        if !err.is_finite() {
            h *= 0.2;
        } else if err <= 1.0 {
            t = if last { t_end } else { t + h };
            y = y5;
            check_state(&y, t)?;
            sol.t.push(t);
            sol.y.push(y);
            // first-same-as-last
            k[0] = k[6];
            let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            h = (h * fac).min(ctl.max_step);
        } else {
            h *= (0.9 * err.powf(-0.2)).clamp(0.2, 1.0);
        }
        if h < 1e-14 * t.abs().max(1.0) {
            return Err(IntegrationError::StepUnderflow { t, h });
        }
    }
    Ok(sol)
}

/// Integrates the formation from `f0` over `[0, t_end]`.
pub fn integrate(
    f0: &Framework,
    s: &TargetsSquared,
    law: &ControlLaw,
    mu: f64,
    t_end: f64,
    ctl: &IntegratorControls,
) -> Result<Trajectory, IntegrationError> {
    let st = s.shifted(3, mu);
    let rhs = |y: &[f64; 8]| field_at_targets(&Framework::from_slice(y), &st, law);
    let sol = solve_ode(rhs, f0.to_array(), t_end, ctl)?;
    let states: Vec<Framework> = sol.y.iter().map(|y| Framework::from_slice(y)).collect();
    let errors = states.iter().map(|f| errors_of(&edges(f), &st)).collect();
    Ok(Trajectory {
        times: sol.t,
        states,
        errors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::GaugeChart;

    fn square() -> Framework {
        Framework::new(
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(1.0, 1.0),
            Vec2::new(0.0, 1.0),
        )
    }

    #[test]
    fn square_is_equilibrium() {
        let s = TargetsSquared([1.0, 1.0, 2.0, 1.0, 1.0]);
        let v = vector_field_x(&square(), &s, &ControlLaw::identity(), 0.0);
        assert!(v.iter().all(|c| c.abs() < 1e-15));
    }

    #[test]
    fn superposed_agents_are_fixed() {
        let p = Vec2::new(0.4, -1.0);
        let f = Framework::new(p, p, p, p);
        let law = ControlLaw::SharedScalarPoly {
            coeffs: vec![1.0, 0.3, -0.2],
        };
        let v = vector_field_x(&f, &TargetsSquared([1.0, 2.0, 3.0, 1.0, 1.0]), &law, 0.1);
        assert_eq!(v, [0.0; 8]);
    }

    #[test]
    fn mu_shifts_edge_three() {
        let s = TargetsSquared([1.0, 1.0, 2.0, 1.0, 1.0]);
        let v = vector_field_x(&square(), &s, &ControlLaw::identity(), 0.5);
        // e3 = -0.5, z3 = (-1, -1)
        assert!((v[4] - 0.5).abs() < 1e-15 && (v[5] - 0.5).abs() < 1e-15);
        assert!(v[..4].iter().chain(&v[6..]).all(|c| *c == 0.0));
    }

    #[test]
    fn edge_field_is_pushforward() {
        let f = Framework::new(
            Vec2::new(0.1, 0.3),
            Vec2::new(1.2, -0.4),
            Vec2::new(0.5, 2.0),
            Vec2::new(-0.7, 0.8),
        );
        let s = TargetsSquared([1.0, 2.0, 1.5, 0.7, 2.2]);
        let law = ControlLaw::SharedScalarPoly {
            coeffs: vec![1.0, 0.5],
        };
        let v = vector_field_x(&f, &s, &law, 0.2);
        let w = vector_field_z(&edges(&f), &s, &law, 0.2);
        let vel = Framework::from_slice(&v);
        let dz = edges(&vel).to_array();
        for i in 0..10 {
            assert!((dz[i] - w[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn identity_law_matches_gradient_form() {
        // x1' = e1 z1 + e5 z5 for u(e) = e
        let f = Framework::new(
            Vec2::new(0.0, 0.0),
            Vec2::new(1.3, 0.2),
            Vec2::new(0.4, -1.1),
            Vec2::new(-0.6, 0.9),
        );
        let s = TargetsSquared([2.0, 2.6, 2.0, 1.4, 3.3]);
        let z = edges(&f);
        let e = errors_of(&z, &s);
        let v = vector_field_x(&f, &s, &ControlLaw::identity(), 0.0);
        let want = e.0[0] * z.z[0] + e.0[4] * z.z[4];
        assert!((v[0] - want.x).abs() < 1e-14 && (v[1] - want.y).abs() < 1e-14);
        assert!((v[6] - e.0[3] * z.z[3].x).abs() < 1e-14);
    }

    #[test]
    fn exponential_decay_accuracy() {
        let sol = solve_ode(|y: &[f64; 1]| [-y[0]], [1.0], 5.0, &IntegratorControls::default())
            .unwrap();
        let y = sol.y.last().unwrap()[0];
        assert!((y - (-5.0_f64).exp()).abs() < 1e-10);
        assert_eq!(*sol.t.last().unwrap(), 5.0);
        assert!(sol.t.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn fixed_step_rk4_accuracy() {
        let ctl = IntegratorControls {
            fixed_step: Some(1e-2),
            ..Default::default()
        };
        let sol = solve_ode(|y: &[f64; 2]| [y[1], -y[0]], [1.0, 0.0], 1.0, &ctl).unwrap();
        let y = sol.y.last().unwrap();
        assert!((y[0] - 1.0_f64.cos()).abs() < 1e-9);
        assert_eq!(sol.t.len(), 101);
    }

    #[test]
    fn blow_up_detected() {
        let r = solve_ode(|y: &[f64; 1]| [y[0] * y[0]], [1.0], 2.0, &IntegratorControls::default());
        assert!(matches!(
            r,
            Err(IntegrationError::BlowUp { .. }) | Err(IntegrationError::StepUnderflow { .. })
        ));
    }

    #[test]
    fn design_start_stays_put() {
        let c = GaugeChart::new(0.6, -0.3, 1.2, -0.6, 1.0);
        let s = c.targets();
        let f = c.framework();
        let tr = integrate(&f, &s, &ControlLaw::identity(), 0.0, 5.0, &Default::default()).unwrap();
        let (_, end, _) = tr.last();
        for (p, q) in end.pos.iter().zip(f.pos.iter()) {
            assert!((*p - *q).norm() < 1e-9);
        }
    }
}
