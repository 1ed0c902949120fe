//! Persistence of equilibria under seeded perturbations of the control law.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::harvest::{harvest_equilibria, SearchParams};
use super::newton::{newton_equilibrium, NewtonOptions};
use super::{se2_distance, EquilibriumClass, EquilibriumRecord, Stability};
use crate::control_laws::{perturb, ControlLaw, PerturbationSpec};
use crate::geometry::{TargetsSquared, PARALLEL_TOL};

/// A re-solved equilibrium farther than this from its base is counted as lost.
pub const TRACK_RADIUS: f64 = 0.05;
/// Alignment tolerance for re-solved records, which carry Newton residuals.
pub const RESOLVED_ALIGNMENT_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecordPersistence {
    pub index: usize,
    pub class: EquilibriumClass,
    pub stability: Stability,
    pub aligned: bool,
    /// Trials in which a nearby equilibrium was found.
    pub existed: usize,
    /// Trials in which it also kept its stability verdict.
    pub same_stability: usize,
    /// Largest displacement modulo rigid motions over the trials.
    pub max_shift: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub epsilon: f64,
    pub trials: usize,
    pub base_seed: u64,
    pub base: Vec<EquilibriumRecord>,
    pub per_record: Vec<RecordPersistence>,
    /// Trials in which every base record persisted with the same verdict.
    pub unchanged_trials: usize,
    /// Trials in which some stable aligned ancillary record persisted as
    /// stable and ancillary. `None` when there is no such base record.
    pub stable_aligned_ancillary_persisted: Option<usize>,
}

struct TrialOutcome {
    /// Per base record: (existed, same stability, shift, stable ancillary).
    rows: Vec<(bool, bool, f64, bool)>,
}

fn run_trial(
    base: &[EquilibriumRecord],
    s: &TargetsSquared,
    law: &ControlLaw,
    mu: f64,
) -> TrialOutcome {
    let rows = base
        .iter()
        .map(|b| {
            let start = b.chart.framework();
            match newton_equilibrium(&start, s, law, mu, &NewtonOptions::default()) {
                Ok((r, _)) => {
                    let d = se2_distance(&start, &r.chart.framework());
                    if d > TRACK_RADIUS {
                        return (false, false, d, false);
                    }
                    let stable_anc = r.stability == Stability::Stable
                        && r.class == EquilibriumClass::Ancillary
                        && r.is_aligned(RESOLVED_ALIGNMENT_TOL);
                    (true, r.stability == b.stability, d, stable_anc)
                }
                Err(_) => (false, false, f64::NAN, false),
            }
        })
        .collect();
    TrialOutcome { rows }
}

/// Re-solves `base` under `trials` perturbed laws with seeds
/// `spec.seed + t`.
pub fn probe_records(
    base: Vec<EquilibriumRecord>,
    s: &TargetsSquared,
    law: &ControlLaw,
    mu: f64,
    spec: &PerturbationSpec,
    trials: usize,
) -> ProbeReport {
    let outcomes: Vec<TrialOutcome> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut sp = *spec;
            sp.seed = spec.seed.wrapping_add(t as u64);
            run_trial(&base, s, &perturb(law, &sp), mu)
        })
        .collect();

    let per_record: Vec<RecordPersistence> = base
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let mut p = RecordPersistence {
                index: i,
                class: b.class,
                stability: b.stability,
                aligned: b.is_aligned(PARALLEL_TOL),
                existed: 0,
                same_stability: 0,
                max_shift: 0.0,
            };
            for o in &outcomes {
                let (e, same, d, _) = o.rows[i];
                if e {
                    p.existed += 1;
                    p.max_shift = p.max_shift.max(d);
                }
                if same {
                    p.same_stability += 1;
                }
            }
            p
        })
        .collect();

    let unchanged_trials = outcomes
        .iter()
        .filter(|o| o.rows.iter().all(|r| r.0 && r.1))
        .count();
    let targets: Vec<usize> = per_record
        .iter()
        .filter(|p| p.aligned && p.class == EquilibriumClass::Ancillary && p.stability == Stability::Stable)
        .map(|p| p.index)
        .collect();
    let stable_aligned_ancillary_persisted = (!targets.is_empty()).then(|| {
        outcomes
            .iter()
            .filter(|o| targets.iter().any(|&i| o.rows[i].3))
            .count()
    });
    ProbeReport {
        epsilon: spec.epsilon,
        trials,
        base_seed: spec.seed,
        base,
        per_record,
        unchanged_trials,
        stable_aligned_ancillary_persisted,
    }
}

/// Harvests the unperturbed equilibria and probes their persistence.
pub fn robustness_probe(
    s: &TargetsSquared,
    law: &ControlLaw,
    mu: f64,
    spec: &PerturbationSpec,
    trials: usize,
    search: &SearchParams,
) -> ProbeReport {
    let base = harvest_equilibria(s, law, mu, search).records;
    probe_records(base, s, law, mu, spec, trials)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibria::assess;
    use crate::geometry::GaugeChart;

    fn base() -> (TargetsSquared, Vec<EquilibriumRecord>) {
        let c = GaugeChart::new(0.9, -0.2, -0.5, -1.3, 1.1);
        let s = c.targets();
        let law = ControlLaw::identity();
        let recs = vec![
            assess(&c, &s, &law, 0.0, 0.0),
            assess(&c.reflect_r1(), &s, &law, 0.0, 0.0),
        ];
        (s, recs)
    }

    #[test]
    fn zero_epsilon_persists_trivially() {
        let (s, recs) = base();
        let r = probe_records(recs, &s, &ControlLaw::identity(), 0.0, &PerturbationSpec::new(0.0, 3), 4);
        assert_eq!(r.unchanged_trials, 4);
        assert!(r.per_record.iter().all(|p| p.existed == 4 && p.same_stability == 4));
        assert!(r.per_record.iter().all(|p| p.max_shift < 1e-9));
    }

    #[test]
    fn compatible_perturbation_keeps_design_location() {
        let (s, recs) = base();
        let spec = PerturbationSpec::new(1e-3, 11);
        let r = probe_records(recs, &s, &ControlLaw::identity(), 0.0, &spec, 5);
        for p in &r.per_record {
            assert_eq!(p.existed, 5);
            assert!(p.max_shift < 1e-8, "shift {}", p.max_shift);
        }
    }
}
