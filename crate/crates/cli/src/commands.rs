//! The nine commands. Each returns its JSON payload and writes its CSV
//! files into the output directory.

use std::path::Path;

use serde_json::{json, Value};

use twocycles_core::control_laws::local_gains;
use twocycles_core::dynamics::integrate;
use twocycles_core::equilibria::classify::classify;
use twocycles_core::equilibria::continuation::{continue_branch, design_branch, locate_crossing, mu_grid, Branch, Corrector};
use twocycles_core::equilibria::sotomayor::TwoCyclesSlice;
use twocycles_core::equilibria::{
    assess, chart_to_slice, harvest_equilibria, robustness_probe, solve_ancillary_aligned, sotomayor_check, Verdict,
    DESIGN_TOL,
};
use twocycles_core::factorization::{orbit_p_signs, p_factors, q_value, sign_table_feasible, verify_factorization};
use twocycles_core::geometry::{attach_frameworks, Framework, PARALLEL_TOL};
use twocycles_core::linearization::jacobian_x_fd;

use crate::output::{self, write_atomic};
use crate::{CliError, Command, Outcome, Scenario};

fn to_json<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("payload serializes")
}

fn save(out: &Path, name: &str, bytes: Vec<u8>, o: &mut Outcome) -> Result<(), CliError> {
    write_atomic(&out.join(name), &bytes)?;
    o.artifacts.push(name.to_string());
    Ok(())
}

pub fn run(cmd: Command, sc: &Scenario, out: &Path) -> Result<Outcome, CliError> {
    match cmd {
        Command::Attach => attach(sc, out),
        Command::Simulate => simulate(sc, out),
        Command::Equilibria => equilibria(sc, out),
        Command::Spectrum => spectrum(sc),
        Command::Factorize => factorize(sc, out),
        Command::Continue => continuation(sc, out),
        Command::Sotomayor => sotomayor(sc),
        Command::Classify => classification(sc, out),
        Command::Probe => probe(sc, out),
    }
}

fn attach(sc: &Scenario, out: &Path) -> Result<Outcome, CliError> {
    let att = attach_frameworks(&sc.targets_at_mu());
    let mut o = Outcome::default();
    if let Some(d) = &att.diagnostic {
        o.diagnostics.push(d.clone());
    }
    let charts: Vec<Value> = att
        .charts
        .iter()
        .map(|c| {
            json!({
                "chart": c,
                "origin_in_hull": c.origin_in_hull(),
                "aligned": c.is_aligned(PARALLEL_TOL),
                "p": p_factors(c).p,
            })
        })
        .collect();
    o.result = json!({ "status": att.status, "charts": charts });
    save(out, "charts.csv", output::charts_csv(&att)?, &mut o)?;
    Ok(o)
}

fn simulate(sc: &Scenario, out: &Path) -> Result<Outcome, CliError> {
    let f0 = match sc.simulate.initial {
        Some(v) => Framework::from_slice(&v),
        None => sc.chart.resolve(&sc.targets_at_mu())?.framework(),
    };
    let tr = integrate(&f0, &sc.targets.squared(), &sc.law, sc.mu, sc.simulate.t_end, &sc.integrator)
        .map_err(|e| CliError::Numerical(format!("integration: {e}")))?;
    let (t, f, e) = tr.last();
    let mut o = Outcome::default();
    o.result = json!({
        "samples": tr.len(),
        "fixed_step": sc.integrator.fixed_step,
        "t_end": t,
        "initial": f0.to_array(),
        "final": f.to_array(),
        "final_errors": e.0,
        "final_max_abs_error": e.max_abs(),
    });
    save(out, "trajectory.csv", output::trajectory_csv(&tr)?, &mut o)?;
    Ok(o)
}

fn equilibria(sc: &Scenario, out: &Path) -> Result<Outcome, CliError> {
    let h = harvest_equilibria(&sc.targets.squared(), &sc.law, sc.mu, &sc.search);
    let mut o = Outcome::default();
    if h.failures > 0 {
        o.diagnostics.push(format!("{} of {} runs did not converge", h.failures, 2 * h.starts));
    }
    save(out, "equilibria.csv", output::equilibria_csv(&h.records)?, &mut o)?;
    o.result = to_json(&h);
    Ok(o)
}

fn spectrum(sc: &Scenario) -> Result<Outcome, CliError> {
    let s = sc.targets.squared();
    let chart = sc.chart.resolve(&sc.targets_at_mu())?;
    let rec = assess(&chart, &s, &sc.law, sc.mu, 0.0);
    let mut o = Outcome::default();
    if rec.residual > 1e-8 {
        o.diagnostics.push(format!(
            "chart is not an equilibrium (field residual {:e}); eigenvalues describe the linearization only",
            rec.residual
        ));
    }
    if rec.gauge_zero_count() != 3 {
        o.diagnostics.push(format!("{} near-zero eigenvalues, expected 3", rec.gauge_zero_count()));
    }
    let full = twocycles_core::linearization::eigenvalues(&jacobian_x_fd(&chart.framework(), &s, &sc.law, sc.mu));
    o.result = json!({ "record": rec, "full_eigenvalues": full });
    Ok(o)
}

fn factorize(sc: &Scenario, out: &Path) -> Result<Outcome, CliError> {
    let st = sc.targets_at_mu();
    let chart = sc.chart.resolve(&st)?;
    let g = local_gains(&sc.law, &st, &chart).map_err(|e| CliError::Numerical(format!("local gains: {e}")))?;
    let mut o = Outcome::default();
    let table = match orbit_p_signs(&chart) {
        Ok(t) => Some(t),
        Err(e) => {
            o.diagnostics.push(format!("no sign table: {e}"));
            None
        }
    };
    o.result = json!({
        "chart": chart,
        "p_factors": p_factors(&chart),
        "gains": g,
        "q": q_value(&g),
        "relative_residual": verify_factorization(&chart, &g),
        "sign_table": table,
        "product_sign": table.map(|t| t.product_sign()),
        "feasibility": table.map(|t| sign_table_feasible(&t)),
    });
    if let Some(t) = &table {
        save(out, "sign_table.csv", output::sign_table_csv(t)?, &mut o)?;
    }
    Ok(o)
}

fn continuation(sc: &Scenario, out: &Path) -> Result<Outcome, CliError> {
    let s = sc.targets.squared();
    let c = &sc.continuation;
    let start = sc.chart.resolve(&sc.targets_at_mu())?;
    let grid = mu_grid(c.mu_min, c.mu_max, c.steps);
    let design = design_branch(&s, &sc.law, &start, &grid);
    let mut o = Outcome::default();
    let corrector = Corrector::Aligned {
        branch_sign: c.aligned_sign,
    };
    let mut branches: Vec<Branch> = vec![design];
    match solve_ancillary_aligned(&s, c.seed_mu, &sc.law, c.aligned_sign, None) {
        Ok(seed) => {
            let mut up = continue_branch(&seed, &s, &sc.law, c.mu_max, c.step, corrector);
            let mut down = continue_branch(&seed, &s, &sc.law, c.mu_min, c.step, corrector);
            up.label = "aligned_up".into();
            down.label = "aligned_down".into();
            branches.push(down);
            branches.push(up);
        }
        Err(e) => o.diagnostics.push(format!("aligned branch not seeded at mu = {}: {e}", c.seed_mu)),
    }
    for b in &branches {
        if let Some((why, mu)) = &b.terminated {
            o.diagnostics.push(format!("branch {} stopped after mu = {mu}: {why}", b.label));
        }
    }

    // Brackets where e1 changes sign along the aligned branch.
    let mut aligned: Vec<(f64, f64)> = branches[1..]
        .iter()
        .flat_map(|b| b.points.iter().map(|p| (p.mu, p.record.errors.0[0])))
        .collect();
    aligned.sort_by(|a, b| a.0.total_cmp(&b.0));
    aligned.dedup_by(|a, b| (a.0 - b.0).abs() <= 1e-12);
    let crossings: Vec<f64> = aligned
        .windows(2)
        .filter_map(|w| {
            if w[0].1.abs() <= DESIGN_TOL {
                return Some(w[0].0);
            }
            (w[0].1 * w[1].1 < 0.0)
                .then(|| locate_crossing(&s, &sc.law, c.aligned_sign, w[0].0, w[1].0))
                .flatten()
        })
        .collect();

    let refs: Vec<&Branch> = branches.iter().collect();
    save(out, "bifurcation.csv", output::bifurcation_csv(&refs)?, &mut o)?;
    let summary: Vec<Value> = branches
        .iter()
        .map(|b| {
            json!({
                "label": b.label,
                "points": b.points.len(),
                "mu_range": [b.points.first().map(|p| p.mu), b.points.last().map(|p| p.mu)],
                "terminated": b.terminated,
            })
        })
        .collect();
    o.result = json!({ "branches": summary, "crossings": crossings });
    Ok(o)
}

fn sotomayor(sc: &Scenario) -> Result<Outcome, CliError> {
    let chart = sc.chart.resolve(&sc.targets_at_mu())?;
    let field = TwoCyclesSlice {
        s: sc.targets.squared(),
        law: sc.law.clone(),
    };
    let rep = sotomayor_check(&field, &chart_to_slice(&chart), sc.mu, &sc.sotomayor)
        .map_err(|e| CliError::Numerical(format!("bifurcation check: {e}")))?;
    let mut o = Outcome::default();
    if rep.verdict == Verdict::Inconclusive {
        o.diagnostics.push("verdict inconclusive".into());
    }
    o.result = json!({ "chart": chart, "report": rep });
    Ok(o)
}

fn classification(sc: &Scenario, out: &Path) -> Result<Outcome, CliError> {
    let v = classify(&sc.targets.squared(), &sc.law, sc.mu, &sc.search);
    let mut o = Outcome::default();
    o.diagnostics.extend(v.warnings.iter().cloned());
    save(out, "equilibria.csv", output::equilibria_csv(&v.records)?, &mut o)?;
    o.result = to_json(&v);
    Ok(o)
}

fn probe(sc: &Scenario, out: &Path) -> Result<Outcome, CliError> {
    let rep = robustness_probe(
        &sc.targets.squared(),
        &sc.law,
        sc.mu,
        &sc.probe.spec(),
        sc.probe.trials,
        &sc.search,
    );
    let mut o = Outcome::default();
    if rep.stable_aligned_ancillary_persisted.is_none() {
        o.diagnostics.push("no stable aligned ancillary equilibrium in the base set".into());
    }
    save(out, "equilibria.csv", output::equilibria_csv(&rep.base)?, &mut o)?;
    o.result = to_json(&rep);
    Ok(o)
}
