//! Stability classification of the harvested equilibrium set.

use serde::{Deserialize, Serialize};

use super::harvest::{harvest_equilibria, SearchParams};
use super::sotomayor::{jacobian, ParamField};
use super::{EquilibriumClass, EquilibriumRecord, Stability, MARGINAL_BAND};
use crate::control_laws::ControlLaw;
use crate::geometry::{attach_frameworks, TargetsSquared};
use crate::linearization::eigenvalues;

/// Type-A flags of a finite equilibrium set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DefinitionFlags {
    /// The design set is nonempty.
    pub feasible: bool,
    /// Every stable equilibrium is a design equilibrium.
    pub type_a: bool,
    /// Stable and design equilibria coincide.
    pub strong_type_a: bool,
}

impl DefinitionFlags {
    /// `points` pairs "is design" with the stability verdict; marginal points
    /// count as neither stable nor unstable.
    pub fn from_points(points: &[(bool, Stability)], design_expected: usize) -> Self {
        let designs = points.iter().filter(|p| p.0).count();
        let feasible = designs > 0 || design_expected > 0;
        let type_a = points
            .iter()
            .all(|&(d, st)| d || st != Stability::Stable);
        let strong_type_a = type_a
            && designs > 0
            && designs >= design_expected
            && points
                .iter()
                .all(|&(d, st)| !d || st == Stability::Stable);
        Self {
            feasible,
            type_a,
            strong_type_a,
        }
    }
}

/// Stability of a scalar or vector fixture at `x`, from the eigenvalues of
/// its finite-difference Jacobian.
pub fn fixture_stability(field: &dyn ParamField, x: &[f64], mu: f64) -> Stability {
    let j = jacobian(field, x, mu, 1e-5);
    let re = eigenvalues(&j)
        .iter()
        .map(|e| e.re)
        .fold(f64::NEG_INFINITY, f64::max);
    Stability::from_max_real(re)
}

/// Flags for a fixture given its equilibria and which of them are design.
pub fn classify_fixture(field: &dyn ParamField, mu: f64, points: &[(Vec<f64>, bool)]) -> DefinitionFlags {
    let tagged: Vec<(bool, Stability)> = points
        .iter()
        .map(|(x, d)| (*d, fixture_stability(field, x, mu)))
        .collect();
    let expected = points.iter().filter(|p| p.1).count();
    DefinitionFlags::from_points(&tagged, expected)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassificationVerdict {
    pub records: Vec<EquilibriumRecord>,
    pub design_found: usize,
    pub design_expected: usize,
    pub ancillary_count: usize,
    /// Indices into `records`.
    pub stable: Vec<usize>,
    pub unstable: Vec<usize>,
    pub marginal: Vec<usize>,
    pub stable_ancillary: Vec<usize>,
    pub degenerate_count: usize,
    pub feasible: bool,
    pub type_a_empirical: bool,
    pub strong_type_a_empirical: bool,
    pub warnings: Vec<String>,
    pub starts: usize,
    pub seed: u64,
}

/// Builds the verdict from already harvested records.
pub fn verdict_from_records(
    records: Vec<EquilibriumRecord>,
    design_expected: usize,
    degenerate_count: usize,
    starts: usize,
    seed: u64,
) -> ClassificationVerdict {
    let idx = |st: Stability| -> Vec<usize> {
        records
            .iter()
            .enumerate()
            .filter(|(_, r)| r.stability == st)
            .map(|(i, _)| i)
            .collect()
    };
    let stable = idx(Stability::Stable);
    let unstable = idx(Stability::Unstable);
    let marginal = idx(Stability::Marginal);
    let is_design = |r: &EquilibriumRecord| r.class == EquilibriumClass::Design;
    let stable_ancillary: Vec<usize> = stable
        .iter()
        .copied()
        .filter(|&i| !is_design(&records[i]))
        .collect();
    let design_found = records.iter().filter(|r| is_design(r)).count();
    let mut warnings: Vec<String> = marginal
        .iter()
        .map(|&i| {
            format!(
                "record {i} is marginal (leading real part {:e} within {MARGINAL_BAND:e})",
                records[i].leading_real()
            )
        })
        .collect();
    if design_found < design_expected {
        warnings.push(format!(
            "found {design_found} of {design_expected} design equilibria"
        ));
    }
    let points: Vec<(bool, Stability)> = records.iter().map(|r| (is_design(r), r.stability)).collect();
    let flags = DefinitionFlags::from_points(&points, design_expected);
    ClassificationVerdict {
        design_found,
        design_expected,
        ancillary_count: records.len() - design_found,
        stable,
        unstable,
        marginal,
        stable_ancillary,
        degenerate_count,
        feasible: flags.feasible,
        type_a_empirical: flags.type_a,
        strong_type_a_empirical: flags.strong_type_a,
        warnings,
        starts,
        seed,
        records,
    }
}

/// Harvests equilibria at `mu` and applies the type-A definitions.
pub fn classify(
    s: &TargetsSquared,
    law: &ControlLaw,
    mu: f64,
    params: &SearchParams,
) -> ClassificationVerdict {
    let h = harvest_equilibria(s, law, mu, params);
    let expected = attach_frameworks(&s.shifted(3, mu)).charts.len();
    verdict_from_records(h.records, expected, h.degenerate.len(), h.starts, h.seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibria::sotomayor::{CubicFeedback, DoubleWell};

    #[test]
    fn cubic_fixture_is_not_type_a() {
        let k = 2.0_f64;
        let r = (1.0 / k).sqrt();
        let f = CubicFeedback { k };
        let pts = vec![(vec![r], true), (vec![-r], false), (vec![0.0], false)];
        let flags = classify_fixture(&f, 0.0, &pts);
        assert!(flags.feasible);
        assert!(!flags.type_a);
        assert!(!flags.strong_type_a);
        assert_eq!(fixture_stability(&f, &[0.0], 0.0), Stability::Unstable);
    }

    #[test]
    fn double_well_with_both_minima_designed() {
        let f = DoubleWell;
        let pts = vec![(vec![1.0], true), (vec![-1.0], true), (vec![0.0], false)];
        let flags = classify_fixture(&f, 0.0, &pts);
        assert!(flags.type_a && flags.strong_type_a);
        let pts = vec![(vec![1.0], true), (vec![-1.0], false), (vec![0.0], false)];
        assert!(!classify_fixture(&f, 0.0, &pts).type_a);
    }

    #[test]
    fn all_stable_design_is_type_a() {
        let flags = DefinitionFlags::from_points(
            &[(true, Stability::Stable), (false, Stability::Unstable)],
            1,
        );
        assert!(flags.type_a && flags.strong_type_a && flags.feasible);
        let flags = DefinitionFlags::from_points(
            &[(true, Stability::Unstable), (false, Stability::Unstable)],
            1,
        );
        assert!(flags.type_a && !flags.strong_type_a);
        let none = DefinitionFlags::from_points(&[], 0);
        assert!(!none.feasible && none.type_a && !none.strong_type_a);
    }
}
