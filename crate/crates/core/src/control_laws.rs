//! Decentralized feedback laws for the 2-cycles information flow.
//!
//! Agents 2, 3 and 4 have one leader each and feed back `u_i(s_i; e_i)`.
//! Agent 1 has two co-leaders and feeds back `u1, u5` as functions of
//! `(s1, s5; e1, e5, z1 . z5)`. All laws are polynomials.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{errors_of, Errors, GaugeChart, TargetsSquared};

/// Variable names of an edge-1/5 monomial, in power order.
const PAIR_VARS: [&str; 5] = ["s1", "s5", "e1", "e5", "z1·z5"];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LawError {
    #[error("edge {edge}: monomial {monomial} lacks error factor")]
    Incompatible { edge: usize, monomial: String },
    #[error("edge {edge}: monomial has {got} powers, expected {want}")]
    BadArity { edge: usize, got: usize, want: usize },
    #[error("edge {edge}: feedback {value:e} at zero error (s = {s:?}, z1·z5 = {dot15})")]
    NonzeroAtDesign {
        edge: usize,
        value: f64,
        s: [f64; 5],
        dot15: f64,
    },
    #[error("chart is not a design framework (max |e_i| = {0:e})")]
    NotDesign(f64),
}

/// A single term `coef * prod(var_k ^ pow_k)`.
///
/// For edges 2, 3, 4 the powers are `[s_i, e_i]`; for edges 1 and 5 they
/// are `[s1, s5, e1, e5, z1·z5]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Monomial {
    pub coef: f64,
    pub pow: Vec<u32>,
}

impl Monomial {
    pub fn new(coef: f64, pow: &[u32]) -> Self {
        Self {
            coef,
            pow: pow.to_vec(),
        }
    }

    fn eval(&self, vars: &[f64]) -> f64 {
        self.pow
            .iter()
            .zip(vars)
            .fold(self.coef, |acc, (&p, &v)| acc * v.powi(p as i32))
    }

    /// Partial derivative with respect to variable `k`.
    fn diff(&self, k: usize, vars: &[f64]) -> f64 {
        let p = self.pow[k];
        if p == 0 {
            return 0.0;
        }
        let mut acc = self.coef * p as f64;
        for (j, (&q, &v)) in self.pow.iter().zip(vars).enumerate() {
            let q = if j == k { q - 1 } else { q };
            acc *= v.powi(q as i32);
        }
        acc
    }

    fn label(&self, names: &[&str]) -> String {
        let parts: Vec<String> = self
            .pow
            .iter()
            .zip(names)
            .filter(|(p, _)| **p > 0)
            .map(|(p, n)| if *p == 1 { n.to_string() } else { format!("{n}^{p}") })
            .collect();
        if parts.is_empty() {
            "1".into()
        } else {
            parts.join("·")
        }
    }
}

/// Per-edge polynomial tables.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgePolys {
    pub u1: Vec<Monomial>,
    pub u2: Vec<Monomial>,
    pub u3: Vec<Monomial>,
    pub u4: Vec<Monomial>,
    pub u5: Vec<Monomial>,
}

impl EdgePolys {
    pub fn edge(&self, edge: usize) -> &[Monomial] {
        match edge {
            1 => &self.u1,
            2 => &self.u2,
            3 => &self.u3,
            4 => &self.u4,
            5 => &self.u5,
            _ => panic!("edge index {edge} out of range 1..=5"),
        }
    }

    fn edge_mut(&mut self, edge: usize) -> &mut Vec<Monomial> {
        match edge {
            1 => &mut self.u1,
            2 => &mut self.u2,
            3 => &mut self.u3,
            4 => &mut self.u4,
            5 => &mut self.u5,
            _ => panic!("edge index {edge} out of range 1..=5"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ControlLaw {
    /// `u_i = k_i e_i` for edges 2..4, `u1 = k11 e1 + k12 e5`, `u5 = k51 e1 + k52 e5`.
    PerEdgeLinear {
        k2: f64,
        k3: f64,
        k4: f64,
        k11: f64,
        k12: f64,
        k51: f64,
        k52: f64,
    },
    /// The same scalar `u(e) = sum_j c_j e^j` (j >= 1) on every edge.
    SharedScalarPoly { coeffs: Vec<f64> },
    GeneralPoly(EdgePolys),
}

impl ControlLaw {
    /// `u(e) = e` on every edge.
    pub fn identity() -> Self {
        ControlLaw::SharedScalarPoly { coeffs: vec![1.0] }
    }

    pub fn from_gains(g: &LocalGains) -> Self {
        ControlLaw::PerEdgeLinear {
            k2: g.k2,
            k3: g.k3,
            k4: g.k4,
            k11: g.k11,
            k12: g.k12,
            k51: g.k51,
            k52: g.k52,
        }
    }

    /// Rewrites the law as explicit monomial tables.
    pub fn to_general(&self) -> EdgePolys {
        match self {
            ControlLaw::GeneralPoly(p) => p.clone(),
            ControlLaw::PerEdgeLinear {
                k2,
                k3,
                k4,
                k11,
                k12,
                k51,
                k52,
            } => EdgePolys {
                u1: vec![
                    Monomial::new(*k11, &[0, 0, 1, 0, 0]),
                    Monomial::new(*k12, &[0, 0, 0, 1, 0]),
                ],
                u2: vec![Monomial::new(*k2, &[0, 1])],
                u3: vec![Monomial::new(*k3, &[0, 1])],
                u4: vec![Monomial::new(*k4, &[0, 1])],
                u5: vec![
                    Monomial::new(*k51, &[0, 0, 1, 0, 0]),
                    Monomial::new(*k52, &[0, 0, 0, 1, 0]),
                ],
            },
            ControlLaw::SharedScalarPoly { coeffs } => {
                let single: Vec<Monomial> = coeffs
                    .iter()
                    .enumerate()
                    .map(|(j, c)| Monomial::new(*c, &[0, j as u32 + 1]))
                    .collect();
                let pair = |slot: usize| -> Vec<Monomial> {
                    coeffs
                        .iter()
                        .enumerate()
                        .map(|(j, c)| {
                            let mut pow = [0u32; 5];
                            pow[slot] = j as u32 + 1;
                            Monomial::new(*c, &pow)
                        })
                        .collect()
                };
                EdgePolys {
                    u1: pair(2),
                    u2: single.clone(),
                    u3: single.clone(),
                    u4: single,
                    u5: pair(3),
                }
            }
        }
    }
}

fn shared_poly(coeffs: &[f64], e: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| (acc + c) * e)
}

fn shared_poly_deriv(coeffs: &[f64], e: f64) -> f64 {
    coeffs
        .iter()
        .enumerate()
        .rev()
        .fold(0.0, |acc, (j, c)| acc * e + (j as f64 + 1.0) * c)
}

/// Arguments of the feedback on `edge`.
fn edge_vars(edge: usize, s: &TargetsSquared, e: &Errors, dot15: f64) -> Vec<f64> {
    match edge {
        1 | 5 => vec![s.0[0], s.0[4], e.0[0], e.0[4], dot15],
        2..=4 => vec![s.0[edge - 1], e.0[edge - 1]],
        _ => panic!("edge index {edge} out of range 1..=5"),
    }
}

/// Scalar feedback `u_edge` for `edge` in `1..=5`.
pub fn evaluate(law: &ControlLaw, edge: usize, s: &TargetsSquared, e: &Errors, dot15: f64) -> f64 {
    assert!((1..=5).contains(&edge), "edge index {edge} out of range 1..=5");
    match law {
        ControlLaw::PerEdgeLinear {
            k2,
            k3,
            k4,
            k11,
            k12,
            k51,
            k52,
        } => match edge {
            1 => k11 * e.0[0] + k12 * e.0[4],
            2 => k2 * e.0[1],
            3 => k3 * e.0[2],
            4 => k4 * e.0[3],
            _ => k51 * e.0[0] + k52 * e.0[4],
        },
        ControlLaw::SharedScalarPoly { coeffs } => shared_poly(coeffs, e.0[edge - 1]),
        ControlLaw::GeneralPoly(p) => {
            let vars = edge_vars(edge, s, e, dot15);
            p.edge(edge).iter().map(|m| m.eval(&vars)).sum()
        }
    }
}

/// All five feedbacks at once.
pub fn evaluate_all(law: &ControlLaw, s: &TargetsSquared, e: &Errors, dot15: f64) -> [f64; 5] {
    std::array::from_fn(|i| evaluate(law, i + 1, s, e, dot15))
}

fn check_arity(p: &EdgePolys) -> Result<(), LawError> {
    for edge in 1..=5 {
        let want = if edge == 1 || edge == 5 { 5 } else { 2 };
        for m in p.edge(edge) {
            if m.pow.len() != want {
                return Err(LawError::BadArity {
                    edge,
                    got: m.pow.len(),
                    want,
                });
            }
        }
    }
    Ok(())
}

/// Checks that every feedback vanishes at zero error, symbolically and at
/// 100 seeded random `(s, z1·z5)` samples.
pub fn validate_compatibility(law: &ControlLaw) -> Result<(), LawError> {
    if let ControlLaw::GeneralPoly(p) = law {
        check_arity(p)?;
        for edge in 1..=5 {
            for m in p.edge(edge) {
                if m.coef == 0.0 {
                    continue;
                }
                let has_error = if edge == 1 || edge == 5 {
                    m.pow[2] > 0 || m.pow[3] > 0
                } else {
                    m.pow[1] > 0
                };
                if !has_error {
                    let names: &[&str] = if edge == 1 || edge == 5 {
                        &PAIR_VARS
                    } else {
                        &["s", "e"]
                    };
                    return Err(LawError::Incompatible {
                        edge,
                        monomial: m.label(names),
                    });
                }
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x2c7c1e5);
    let zero = Errors([0.0; 5]);
    for _ in 0..100 {
        let s = TargetsSquared(std::array::from_fn(|_| rng.gen_range(0.0..10.0)));
        let dot15 = rng.gen_range(-10.0..10.0);
        for edge in 1..=5 {
            let value = evaluate(law, edge, &s, &zero, dot15);
            if value.abs() > 1e-12 {
                return Err(LawError::NonzeroAtDesign {
                    edge,
                    value,
                    s: s.0,
                    dot15,
                });
            }
        }
    }
    Ok(())
}

/// First derivatives of the feedbacks with respect to the errors at a
/// design framework.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalGains {
    pub k2: f64,
    pub k3: f64,
    pub k4: f64,
    pub k11: f64,
    pub k12: f64,
    pub k51: f64,
    pub k52: f64,
}

impl LocalGains {
    pub fn uniform(k: f64) -> Self {
        Self {
            k2: k,
            k3: k,
            k4: k,
            k11: k,
            k12: 0.0,
            k51: 0.0,
            k52: k,
        }
    }

    pub fn to_array(&self) -> [f64; 7] {
        [self.k2, self.k3, self.k4, self.k11, self.k12, self.k51, self.k52]
    }

    pub fn from_array(a: [f64; 7]) -> Self {
        Self {
            k2: a[0],
            k3: a[1],
            k4: a[2],
            k11: a[3],
            k12: a[4],
            k51: a[5],
            k52: a[6],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

/// `du_edge / de_wrt` evaluated analytically at the given arguments.
pub fn partial_error(
    law: &ControlLaw,
    edge: usize,
    wrt: usize,
    s: &TargetsSquared,
    e: &Errors,
    dot15: f64,
) -> f64 {
    match law {
        ControlLaw::PerEdgeLinear {
            k2,
            k3,
            k4,
            k11,
            k12,
            k51,
            k52,
        } => match (edge, wrt) {
            (1, 1) => *k11,
            (1, 5) => *k12,
            (5, 1) => *k51,
            (5, 5) => *k52,
            (2, 2) => *k2,
            (3, 3) => *k3,
            (4, 4) => *k4,
            _ => 0.0,
        },
        ControlLaw::SharedScalarPoly { coeffs } => {
            if edge == wrt {
                shared_poly_deriv(coeffs, e.0[edge - 1])
            } else {
                0.0
            }
        }
        ControlLaw::GeneralPoly(p) => {
            let slot = match (edge, wrt) {
                (1 | 5, 1) => 2,
                (1 | 5, 5) => 3,
                (2..=4, w) if w == edge => 1,
                _ => return 0.0,
            };
            let vars = edge_vars(edge, s, e, dot15);
            p.edge(edge).iter().map(|m| m.diff(slot, &vars)).sum()
        }
    }
}

const GAIN_SLOTS: [(usize, usize); 7] = [(2, 2), (3, 3), (4, 4), (1, 1), (1, 5), (5, 1), (5, 5)];

fn design_check(s: &TargetsSquared, chart: &GaugeChart) -> Result<(), LawError> {
    let err = errors_of(&chart.edges(), s).max_abs();
    if err > 1e-10 * (1.0 + s.0.iter().fold(0.0_f64, |m, v| m.max(*v))) {
        return Err(LawError::NotDesign(err));
    }
    Ok(())
}

/// Local gains at a design chart, by analytic differentiation.
pub fn local_gains(
    law: &ControlLaw,
    s: &TargetsSquared,
    chart: &GaugeChart,
) -> Result<LocalGains, LawError> {
    design_check(s, chart)?;
    let dot15 = chart.x2.dot(chart.x4);
    let zero = Errors([0.0; 5]);
    Ok(LocalGains::from_array(GAIN_SLOTS.map(|(edge, wrt)| {
        partial_error(law, edge, wrt, s, &zero, dot15)
    })))
}

/// Local gains by central differences with step `h`.
pub fn local_gains_fd(
    law: &ControlLaw,
    s: &TargetsSquared,
    chart: &GaugeChart,
    h: f64,
) -> Result<LocalGains, LawError> {
    design_check(s, chart)?;
    let dot15 = chart.x2.dot(chart.x4);
    Ok(LocalGains::from_array(GAIN_SLOTS.map(|(edge, wrt)| {
        let mut ep = [0.0; 5];
        let mut em = [0.0; 5];
        ep[wrt - 1] = h;
        em[wrt - 1] = -h;
        (evaluate(law, edge, s, &Errors(ep), dot15) - evaluate(law, edge, s, &Errors(em), dot15))
            / (2.0 * h)
    })))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationSpec {
    pub epsilon: f64,
    pub seed: u64,
    #[serde(default = "default_degree")]
    pub degree: u32,
    #[serde(default = "default_bound")]
    pub coef_bound: f64,
    #[serde(default = "default_true")]
    pub compatible_only: bool,
}

fn default_degree() -> u32 {
    3
}
fn default_bound() -> f64 {
    1.0
}
fn default_true() -> bool {
    true
}

impl PerturbationSpec {
    pub fn new(epsilon: f64, seed: u64) -> Self {
        Self {
            epsilon,
            seed,
            degree: default_degree(),
            coef_bound: default_bound(),
            compatible_only: true,
        }
    }
}

/// All exponent vectors of length `n` with total degree `<= deg`, in
/// lexicographic order.
fn exponents(n: usize, deg: u32) -> Vec<Vec<u32>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in 0..=deg {
        for mut rest in exponents(n - 1, deg - p) {
            rest.insert(0, p);
            out.push(rest);
        }
    }
    out
}

/// Adds `epsilon` times a seeded random polynomial to every feedback.
///
/// The random part only involves the error variables and `z1·z5`; target
/// powers are left out because targets are constant per scenario and only
/// rescale coefficients.
pub fn perturb(law: &ControlLaw, spec: &PerturbationSpec) -> ControlLaw {
    if spec.epsilon == 0.0 {
        return law.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut p = law.to_general();
    let b = spec.coef_bound;
    for edge in 1..=5 {
        let pair = edge == 1 || edge == 5;
        let terms: Vec<Vec<u32>> = if pair {
            exponents(3, spec.degree)
                .into_iter()
                .filter(|q| !spec.compatible_only || q[0] + q[1] > 0)
                .map(|q| vec![0, 0, q[0], q[1], q[2]])
                .collect()
        } else {
            (0..=spec.degree)
                .filter(|q| !spec.compatible_only || *q > 0)
                .map(|q| vec![0, q])
                .collect()
        };
        let table = p.edge_mut(edge);
        for pow in terms {
            let c = if b > 0.0 { rng.gen_range(-b..=b) } else { 0.0 };
            table.push(Monomial {
                coef: spec.epsilon * c,
                pow,
            });
        }
    }
    ControlLaw::GeneralPoly(p)
}

impl fmt::Display for ControlLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ControlLaw::PerEdgeLinear { .. } => write!(f, "per-edge linear"),
            ControlLaw::SharedScalarPoly { coeffs } => write!(f, "shared polynomial {coeffs:?}"),
            ControlLaw::GeneralPoly(p) => {
                let n: usize = (1..=5).map(|e| p.edge(e).len()).sum();
                write!(f, "general polynomial ({n} monomials)")
            }
        }
    }
}
