//! Natural-parameter continuation of equilibria in `mu`.

use serde::{Deserialize, Serialize};

use super::ancillary::{aligned_coords, solve_ancillary_aligned};
use super::newton::{newton_equilibrium, NewtonOptions};
use super::{assess, EquilibriumRecord};
use crate::control_laws::ControlLaw;
use crate::geometry::{attach_frameworks, GaugeChart, TargetsSquared};

/// Smallest step before a branch is declared terminated.
pub const MIN_STEP: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Corrector {
    /// Bordered Newton on the full field.
    Newton,
    /// The four-unknown aligned system with the given `sign(t2 t4)`.
    Aligned { branch_sign: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchPoint {
    pub mu: f64,
    pub record: EquilibriumRecord,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub label: String,
    pub points: Vec<BranchPoint>,
    /// Reason and last good `mu` when the branch stopped early.
    pub terminated: Option<(String, f64)>,
}

impl Branch {
    pub fn mus(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.mu).collect()
    }

    pub fn at(&self, mu: f64) -> Option<&EquilibriumRecord> {
        self.points
            .iter()
            .find(|p| (p.mu - mu).abs() <= 1e-12)
            .map(|p| &p.record)
    }
}

fn correct(
    prev: &EquilibriumRecord,
    predicted: &GaugeChart,
    s: &TargetsSquared,
    law: &ControlLaw,
    mu: f64,
    corrector: Corrector,
) -> Option<EquilibriumRecord> {
    match corrector {
        Corrector::Newton => newton_equilibrium(&predicted.framework(), s, law, mu, &NewtonOptions::default())
            .ok()
            .map(|(r, _)| r)
            .filter(|r| r.chart.distance(&prev.chart) < 0.5),
        Corrector::Aligned { branch_sign } => {
            solve_ancillary_aligned(s, mu, law, branch_sign, Some(aligned_coords(predicted))).ok()
        }
    }
}

fn extrapolate(a: &BranchPoint, b: &BranchPoint, mu: f64) -> GaugeChart {
    let (ca, cb) = (a.record.chart.to_array(), b.record.chart.to_array());
    let t = (mu - b.mu) / (b.mu - a.mu);
    let v: [f64; 5] = std::array::from_fn(|i| cb[i] + t * (cb[i] - ca[i]));
    GaugeChart::new(v[0], v[1], v[2], v[3], v[4])
}

/// Follows the equilibrium of `seed` from `seed.mu` to `mu_end`.
///
/// Visits the grid `seed.mu + k * step` with a secant predictor. A failed
/// correction is retried with half the step toward the same grid point;
/// the branch stops once the step drops below [`MIN_STEP`].
pub fn continue_branch(
    seed: &EquilibriumRecord,
    s: &TargetsSquared,
    law: &ControlLaw,
    mu_end: f64,
    step: f64,
    corrector: Corrector,
) -> Branch {
    let dir = (mu_end - seed.mu).signum();
    let h0 = step.abs();
    let mut branch = Branch {
        label: String::new(),
        points: vec![BranchPoint {
            mu: seed.mu,
            record: seed.clone(),
        }],
        terminated: None,
    };
    if dir == 0.0 || h0 == 0.0 {
        return branch;
    }
    let span = mu_end - seed.mu;
    let n_grid = ((span.abs() / h0 - 1e-9).ceil() as usize).max(1);
    let mut mu = seed.mu;
    for k in 1..=n_grid {
        let goal = if k == n_grid {
            mu_end
        } else {
            let g = seed.mu + dir * k as f64 * h0;
            if g.abs() < 1e-12 * span.abs() {
                0.0
            } else {
                g
            }
        };
        while (goal - mu) * dir > 1e-14 {
            let mut h = (goal - mu).abs();
            loop {
                let target = if h == (goal - mu).abs() { goal } else { mu + dir * h };
                let n = branch.points.len();
                let last = &branch.points[n - 1];
                let predicted = if n >= 2 {
                    extrapolate(&branch.points[n - 2], last, target)
                } else {
                    last.record.chart
                };
                if let Some(rec) = correct(&last.record, &predicted, s, law, target, corrector) {
                    mu = target;
                    branch.points.push(BranchPoint { mu, record: rec });
                    break;
                }
                h *= 0.5;
                if h < MIN_STEP {
                    branch.terminated =
                        Some(("corrector failed below the minimum step".into(), mu));
                    return branch;
                }
            }
        }
    }
    branch
}

/// Design equilibria along `mus`, following the attached chart nearest to
/// the previous one.
pub fn design_branch(
    s: &TargetsSquared,
    law: &ControlLaw,
    start: &GaugeChart,
    mus: &[f64],
) -> Branch {
    let mut branch = Branch {
        label: "design".into(),
        points: Vec::with_capacity(mus.len()),
        terminated: None,
    };
    let mut prev = *start;
    for &mu in mus {
        let att = attach_frameworks(&s.shifted(3, mu));
        let Some(c) = att
            .charts
            .iter()
            .min_by(|a, b| a.distance(&prev).total_cmp(&b.distance(&prev)))
        else {
            branch.terminated = Some((att.diagnostic.unwrap_or_default(), mu));
            break;
        };
        prev = *c;
        branch.points.push(BranchPoint {
            mu,
            record: assess(c, s, law, mu, 0.0),
        });
    }
    branch
}

/// `mu` where the aligned branch meets the design set (`e1 = 0`), by
/// bisection on `[lo, hi]`.
pub fn locate_crossing(
    s: &TargetsSquared,
    law: &ControlLaw,
    branch_sign: f64,
    lo: f64,
    hi: f64,
) -> Option<f64> {
    let e1 = |mu: f64| {
        solve_ancillary_aligned(s, mu, law, branch_sign, None)
            .ok()
            .map(|r| r.errors.0[0])
    };
    let (mut a, mut b) = (lo, hi);
    let (mut fa, fb) = (e1(a)?, e1(b)?);
    if fa == 0.0 {
        return Some(a);
    }
    if fa * fb > 0.0 {
        return None;
    }
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        let fm = e1(m)?;
        if fm == 0.0 || (b - a) < 1e-14 {
            return Some(m);
        }
        if fa * fm < 0.0 {
            b = m;
        } else {
            a = m;
            fa = fm;
        }
    }
    Some(0.5 * (a + b))
}

/// `n + 1` evenly spaced values from `lo` to `hi`.
pub fn mu_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..=n)
        .map(|k| {
            let v = lo + (hi - lo) * k as f64 / n as f64;
            if v.abs() < 1e-14 * (hi - lo).abs() {
                0.0
            } else {
                v
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s0() -> TargetsSquared {
        TargetsSquared([0.45, 0.85, 1.0, 1.6, 1.8])
    }

    #[test]
    fn design_branch_has_four_charts_off_zero() {
        for mu in [-0.2, -0.01, 0.01, 0.2] {
            assert_eq!(attach_frameworks(&s0().shifted(3, mu)).charts.len(), 4);
        }
        let c = GaugeChart::new(0.6, -0.3, 1.2, -0.6, 1.0);
        let b = design_branch(&s0(), &ControlLaw::identity(), &c, &mu_grid(-0.2, 0.2, 40));
        assert_eq!(b.points.len(), 41);
        assert!(b.terminated.is_none());
    }

    #[test]
    fn aligned_branch_spans_zero() {
        let law = ControlLaw::identity();
        let seed = solve_ancillary_aligned(&s0(), -0.2, &law, 1.0, None).unwrap();
        let b = continue_branch(&seed, &s0(), &law, 0.1, 0.01, Corrector::Aligned { branch_sign: 1.0 });
        assert!(b.terminated.is_none(), "{:?}", b.terminated);
        assert_eq!(b.points.len(), 31);
        assert!((b.points.last().unwrap().mu - 0.1).abs() < 1e-12);
        let mus = b.mus();
        assert!(mus.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn aligned_branch_folds_before_upper_end() {
        let law = ControlLaw::identity();
        let seed = solve_ancillary_aligned(&s0(), 0.0, &law, 1.0, None).unwrap();
        let b = continue_branch(&seed, &s0(), &law, 0.2, 0.01, Corrector::Aligned { branch_sign: 1.0 });
        let (_, last) = b.terminated.clone().unwrap();
        assert!(last > 0.103 && last < 0.104, "{last}");
    }

    #[test]
    fn crossing_at_zero() {
        let m = locate_crossing(&s0(), &ControlLaw::identity(), 1.0, -0.1, 0.1).unwrap();
        assert!(m.abs() < 1e-9);
    }

    #[test]
    fn newton_corrector_follows_design() {
        let law = ControlLaw::identity();
        let s = TargetsSquared([1.0, 1.0, 2.0, 1.0, 1.0]);
        let h = 0.5_f64.sqrt();
        let c = GaugeChart::new(h, -h, -h, -h, 2.0_f64.sqrt());
        let seed = assess(&c, &s, &law, 0.0, 0.0);
        let b = continue_branch(&seed, &s, &law, 0.1, 0.05, Corrector::Newton);
        assert_eq!(b.points.len(), 3);
        assert!(b.points.iter().all(|p| p.record.errors.max_abs() < 1e-9));
    }
}
