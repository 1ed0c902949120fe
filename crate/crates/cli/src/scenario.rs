//! Scenario files.
//!
//! A scenario is a TOML document with a version tag, the targets and
//! optional sections for the law, integrator, search, probe, chart,
//! continuation, simulation and bifurcation tolerances. Missing sections take
//! their defaults; unknown fields are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use twocycles_core::control_laws::validate_compatibility;
use twocycles_core::dynamics::IntegratorControls;
use twocycles_core::equilibria::{SearchParams, SotomayorTols};
use twocycles_core::geometry::attach_frameworks;
use twocycles_core::{ControlLaw, GaugeChart, PerturbationSpec, TargetsSquared};

use crate::{CliError, Command};

pub const SCENARIO_VERSION: u32 = 1;
/// Step used by `--fixed-step` when the scenario does not set one.
pub const DEFAULT_FIXED_STEP: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Convention {
    /// Values are squared edge lengths.
    Squared,
    /// Values are edge lengths and are squared on ingest.
    Lengths,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Targets {
    pub values: [f64; 5],
    pub convention: Convention,
}

impl Targets {
    pub fn squared(&self) -> TargetsSquared {
        match self.convention {
            Convention::Squared => TargetsSquared(self.values),
            Convention::Lengths => TargetsSquared::from_lengths(self.values),
        }
    }
}

/// Which chart the chart-based commands act on: explicit coordinates
/// `(x21, x22, x41, x42, ell3)` or an index into the attached design charts.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChartSpec {
    pub coords: Option<[f64; 5]>,
    pub attached: Option<usize>,
}

impl ChartSpec {
    /// Resolves against the targets at the scenario's `mu`.
    pub fn resolve(&self, s: &TargetsSquared) -> Result<GaugeChart, CliError> {
        if let Some([a, b, c, d, l]) = self.coords {
            return Ok(GaugeChart::new(a, b, c, d, l));
        }
        let k = self.attached.unwrap_or(0);
        let att = attach_frameworks(s);
        att.charts.get(k).copied().ok_or_else(|| {
            CliError::Numerical(format!(
                "no attached chart with index {k} ({} attached{})",
                att.charts.len(),
                att.diagnostic.map(|d| format!(": {d}")).unwrap_or_default()
            ))
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeOptions {
    pub epsilon: f64,
    pub seed: u64,
    pub degree: u32,
    pub coef_bound: f64,
    pub compatible_only: bool,
    pub trials: usize,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        let p = PerturbationSpec::new(1e-3, 1);
        Self {
            epsilon: p.epsilon,
            seed: p.seed,
            degree: p.degree,
            coef_bound: p.coef_bound,
            compatible_only: p.compatible_only,
            trials: 20,
        }
    }
}

impl ProbeOptions {
    pub fn spec(&self) -> PerturbationSpec {
        PerturbationSpec {
            epsilon: self.epsilon,
            seed: self.seed,
            degree: self.degree,
            coef_bound: self.coef_bound,
            compatible_only: self.compatible_only,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContinuationOptions {
    pub mu_min: f64,
    pub mu_max: f64,
    /// Grid intervals for the design branch.
    pub steps: usize,
    /// Step of the aligned ancillary continuation.
    pub step: f64,
    /// `sign(t2 t4)` of the aligned branch; `+1` or `-1`.
    pub aligned_sign: f64,
    /// Where the aligned branch is first solved.
    pub seed_mu: f64,
}

impl Default for ContinuationOptions {
    fn default() -> Self {
        Self {
            mu_min: -0.2,
            mu_max: 0.2,
            steps: 40,
            step: 0.01,
            aligned_sign: 1.0,
            seed_mu: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateOptions {
    pub t_end: f64,
    /// Agent positions `(x1, y1, ..., x4, y4)`; the resolved chart when absent.
    pub initial: Option<[f64; 8]>,
}

impl Default for SimulateOptions {
    fn default() -> Self {
        Self {
            t_end: 10.0,
            initial: None,
        }
    }
}

fn identity_law() -> ControlLaw {
    ControlLaw::identity()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<Command>,
    /// Added to `s3`.
    #[serde(default)]
    pub mu: f64,
    pub targets: Targets,
    #[serde(default = "identity_law")]
    pub law: ControlLaw,
    #[serde(default)]
    pub integrator: IntegratorControls,
    #[serde(default)]
    pub search: SearchParams,
    #[serde(default)]
    pub probe: ProbeOptions,
    #[serde(default)]
    pub chart: ChartSpec,
    #[serde(default)]
    pub continuation: ContinuationOptions,
    #[serde(default)]
    pub simulate: SimulateOptions,
    #[serde(default)]
    pub sotomayor: SotomayorTols,
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let sc: Scenario = toml::from_str(text).map_err(|e| CliError::Scenario(e.to_string()))?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Scenario(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn emit(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    /// SHA-256 of the emitted form, hex encoded.
    pub fn digest(&self) -> String {
        format!("{:x}", Sha256::digest(self.emit().as_bytes()))
    }

    /// Targets with `mu` added to `s3`.
    pub fn targets_at_mu(&self) -> TargetsSquared {
        self.targets.squared().shifted(3, self.mu)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.search.seed = seed;
        self.probe.seed = seed;
        self
    }

    pub fn with_fixed_step(mut self) -> Self {
        self.integrator.fixed_step = Some(self.integrator.fixed_step.unwrap_or(DEFAULT_FIXED_STEP));
        self
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Scenario(m));
        if self.version != SCENARIO_VERSION {
            return bad(format!("unsupported scenario version {} (expected {SCENARIO_VERSION})", self.version));
        }
        if self.targets.values.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return bad(format!("targets must be finite and positive, got {:?}", self.targets.values));
        }
        if !self.mu.is_finite() || self.targets.squared().0[2] + self.mu <= 0.0 {
            return bad(format!("mu = {} leaves s3 + mu nonpositive", self.mu));
        }
        validate_compatibility(&self.law).map_err(|e| CliError::Scenario(format!("law: {e}")))?;
        let ig = &self.integrator;
        if !(ig.rtol > 0.0 && ig.atol > 0.0 && ig.h0 > 0.0 && ig.max_step > 0.0 && ig.max_steps > 0) {
            return bad("integrator tolerances, steps and step budget must be positive".into());
        }
        if ig.fixed_step.is_some_and(|h| !(h > 0.0 && h.is_finite())) {
            return bad("integrator.fixed_step must be positive".into());
        }
        let se = &self.search;
        if !(se.n_starts > 0 && se.box_half_width > 0.0 && se.t_end > 0.0) {
            return bad("search needs n_starts, box_half_width and t_end positive".into());
        }
        let p = &self.probe;
        if !(p.epsilon >= 0.0 && p.epsilon.is_finite() && p.trials > 0 && p.coef_bound >= 0.0) {
            return bad("probe needs epsilon >= 0, coef_bound >= 0 and trials > 0".into());
        }
        if self.chart.coords.is_some() && self.chart.attached.is_some() {
            return bad("chart: give either coords or attached, not both".into());
        }
        if self.chart.coords.is_some_and(|c| !(c[4] > 0.0) || c.iter().any(|v| !v.is_finite())) {
            return bad("chart.coords must be finite with ell3 > 0".into());
        }
        let c = &self.continuation;
        if !(c.mu_min < c.mu_max && c.steps > 0 && c.step > 0.0) {
            return bad("continuation needs mu_min < mu_max, steps > 0 and step > 0".into());
        }
        if c.aligned_sign != 1.0 && c.aligned_sign != -1.0 {
            return bad(format!("continuation.aligned_sign must be 1 or -1, got {}", c.aligned_sign));
        }
        if !(self.simulate.t_end > 0.0) {
            return bad("simulate.t_end must be positive".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
version = 1
[targets]
values = [2.0, 2.6, 2.0, 3.3, 1.4]
convention = "lengths"
"#;

    #[test]
    fn minimal_scenario_takes_defaults() {
        let sc = Scenario::parse(MINIMAL).unwrap();
        assert_eq!(sc.law, ControlLaw::identity());
        assert_eq!(sc.search, SearchParams::default());
        assert!((sc.targets.squared().0[3] - 3.3 * 3.3).abs() < 1e-15);
    }

    #[test]
    fn round_trip_is_identity() {
        let mut sc = Scenario::parse(MINIMAL).unwrap();
        sc.name = Some("hull".into());
        sc.command = Some(Command::Classify);
        sc.chart.coords = Some([0.6, -0.3, 1.2, -0.6, 1.0]);
        sc.integrator.fixed_step = Some(0.01);
        let again = Scenario::parse(&sc.emit()).unwrap();
        assert_eq!(again, sc);
        assert_eq!(again.digest(), sc.digest());
    }

    #[test]
    fn unknown_fields_rejected() {
        let text = format!("{MINIMAL}\n[search]\nn_start = 3\n");
        assert!(matches!(Scenario::parse(&text), Err(CliError::Scenario(_))));
        let text = format!("colour = 1\n{MINIMAL}");
        assert!(Scenario::parse(&text).is_err());
    }

    #[test]
    fn incompatible_law_rejected() {
        let text = format!(
            "{MINIMAL}\n[law]\nkind = \"general_poly\"\nu1 = [{{ coef = 1.0, pow = [1, 0, 0, 0, 0] }}]\nu2 = []\nu3 = []\nu4 = []\nu5 = []\n"
        );
        let err = Scenario::parse(&text).unwrap_err();
        assert!(err.to_string().contains("law"), "{err}");
    }

    #[test]
    fn seed_override_changes_digest() {
        let sc = Scenario::parse(MINIMAL).unwrap();
        let other = sc.clone().with_seed(99);
        assert_eq!(other.probe.seed, 99);
        assert_ne!(sc.digest(), other.digest());
    }
}
