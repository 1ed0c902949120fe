//! Multi-start search for equilibria.
//!
//! Starts are drawn in a box from a seeded ChaCha8 stream. Each start is
//! integrated forward and the endpoint polished by Newton; Newton is also
//! run directly from the start, which reaches unstable equilibria that the
//! flow avoids. The attached design charts are always included. Results are
//! deduplicated modulo rotation and translation only.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::newton::{newton_equilibrium, NewtonError, NewtonOptions};
use super::{assess, se2_distance, EquilibriumRecord};
use crate::control_laws::ControlLaw;
use crate::dynamics::{integrate, IntegratorControls};
use crate::geometry::{attach_frameworks, Framework, TargetsSquared};
use crate::linearization::rigidity_rank;

/// Frameworks closer than this modulo rigid motions are the same equilibrium.
pub const DEDUP_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchParams {
    pub n_starts: usize,
    pub seed: u64,
    /// Starts are uniform in `[-box_half_width, box_half_width]^8`.
    pub box_half_width: f64,
    /// Integration horizon per start.
    pub t_end: f64,
    /// Also run Newton directly from each start.
    pub direct_newton: bool,
}

impl Default for SearchParams {
    fn default() -> Self {
        Self {
            n_starts: 200,
            seed: 1,
            box_half_width: 3.0,
            t_end: 60.0,
            direct_newton: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegenerateRecord {
    pub framework: Framework,
    pub min_edge: f64,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Harvest {
    pub records: Vec<EquilibriumRecord>,
    pub degenerate: Vec<DegenerateRecord>,
    /// Starts whose integration or polishing failed.
    pub failures: usize,
    pub starts: usize,
    pub seed: u64,
}

pub fn random_starts(n: usize, seed: u64, half_width: f64) -> Vec<Framework> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let v: [f64; 8] = std::array::from_fn(|_| rng.gen_range(-half_width..=half_width));
            Framework::from_slice(&v)
        })
        .collect()
}

enum Outcome {
    Found(EquilibriumRecord),
    Degenerate(DegenerateRecord),
    Failed,
}

fn polish(f: &Framework, s: &TargetsSquared, law: &ControlLaw, mu: f64) -> Outcome {
    match newton_equilibrium(f, s, law, mu, &NewtonOptions::default()) {
        Ok((r, _)) => {
            if rigidity_rank(&r.chart.edges(), 1e-8) < 5 {
                Outcome::Degenerate(DegenerateRecord {
                    framework: r.chart.framework(),
                    min_edge: r.chart.edges().z.iter().map(|z| z.norm()).fold(f64::INFINITY, f64::min),
                    reason: "collinear".into(),
                })
            } else {
                Outcome::Found(r)
            }
        }
        Err(NewtonError::Degenerate { framework, min_edge }) => Outcome::Degenerate(DegenerateRecord {
            framework,
            min_edge,
            reason: "collapsed edge".into(),
        }),
        Err(_) => Outcome::Failed,
    }
}

fn run_start(
    f0: &Framework,
    s: &TargetsSquared,
    law: &ControlLaw,
    mu: f64,
    p: &SearchParams,
) -> Vec<Outcome> {
    let ctl = IntegratorControls {
        rtol: 1e-8,
        atol: 1e-10,
        max_steps: 200_000,
        ..Default::default()
    };
    let mut out = Vec::with_capacity(2);
    match integrate(f0, s, law, mu, p.t_end, &ctl) {
        Ok(tr) => out.push(polish(&tr.last().1, s, law, mu)),
        Err(_) => out.push(Outcome::Failed),
    }
    if p.direct_newton {
        out.push(polish(f0, s, law, mu));
    }
    out
}

/// Collects distinct equilibria of the formation at `mu`.
pub fn harvest_equilibria(
    s: &TargetsSquared,
    law: &ControlLaw,
    mu: f64,
    p: &SearchParams,
) -> Harvest {
    let starts = random_starts(p.n_starts, p.seed, p.box_half_width);
    let outcomes: Vec<Vec<Outcome>> = starts
        .par_iter()
        .map(|f0| run_start(f0, s, law, mu, p))
        .collect();

    let mut h = Harvest {
        records: Vec::new(),
        degenerate: Vec::new(),
        failures: 0,
        starts: p.n_starts,
        seed: p.seed,
    };
    for c in attach_frameworks(&s.shifted(3, mu)).charts {
        push_unique(&mut h.records, assess(&c, s, law, mu, 0.0));
    }
    for o in outcomes.into_iter().flatten() {
        match o {
            Outcome::Found(r) => {
                push_unique(&mut h.records, r);
            }
            Outcome::Degenerate(d) => {
                if !h
                    .degenerate
                    .iter()
                    .any(|x| se2_distance(&x.framework, &d.framework) <= DEDUP_TOL)
                {
                    h.degenerate.push(d);
                }
            }
            Outcome::Failed => h.failures += 1,
        }
    }
    h
}

/// Appends `r` unless an equal record (modulo rigid motion) is present.
pub fn push_unique(records: &mut Vec<EquilibriumRecord>, r: EquilibriumRecord) -> bool {
    let f = r.chart.framework();
    let scale = f.max_abs().max(1.0);
    if records
        .iter()
        .any(|x| se2_distance(&x.chart.framework(), &f) <= DEDUP_TOL * scale)
    {
        return false;
    }
    records.push(r);
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibria::EquilibriumClass;
    use crate::geometry::GaugeChart;

    #[test]
    fn starts_are_reproducible() {
        assert_eq!(random_starts(5, 7, 2.0), random_starts(5, 7, 2.0));
        assert_ne!(random_starts(5, 7, 2.0), random_starts(5, 8, 2.0));
    }

    #[test]
    fn rotated_duplicate_collapses() {
        let c = GaugeChart::new(0.9, -0.2, -0.5, -1.3, 1.1);
        let s = c.targets();
        let law = ControlLaw::identity();
        let r = assess(&c, &s, &law, 0.0, 0.0);
        let mut recs = vec![r.clone()];
        let (moved, _) = newton_equilibrium(
            &c.framework().rotated(1.3),
            &s,
            &law,
            0.0,
            &NewtonOptions::default(),
        )
        .unwrap();
        assert!(!push_unique(&mut recs, moved));
        assert_eq!(recs.len(), 1);
        let mirror = assess(&c.reflect_r1(), &s, &law, 0.0, 0.0);
        assert!(push_unique(&mut recs, mirror));
    }

    #[test]
    fn square_harvest_design_bound() {
        let s = TargetsSquared([1.0, 1.0, 2.0, 1.0, 1.0]);
        let p = SearchParams {
            n_starts: 24,
            t_end: 30.0,
            ..Default::default()
        };
        let h = harvest_equilibria(&s, &ControlLaw::identity(), 0.0, &p);
        let designs = h
            .records
            .iter()
            .filter(|r| r.class == EquilibriumClass::Design)
            .count();
        assert!(designs <= 4 && designs >= 2);
    }
}
