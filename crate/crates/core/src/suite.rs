//! Verification checks on the bundled presets, shared by `sdd-sim verify`
//! and the acceptance tests.

use std::fmt::Write as _;

use serde::Serialize;

use crate::delay::{check_h, DelayFunctional, InnerMap};
use crate::diagnostics::{
    apriori_from_trajectory, constant_delay_oracle, continuous_dependence, dissipation_from_trajectory,
    dissipation_radius, holder_check, semigroup_restart, standard_directions,
};
use crate::error::Result;
use crate::export::csv_string;
use crate::integrator::{solve, SolverMode, SolverOptions};
use crate::nonlinearity::f_norm_bound;
use crate::scenario::ScenarioConfig;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Metric {
    pub name: String,
    pub observed: f64,
    /// Threshold or analytic value the observation is compared with.
    pub bound: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub pass: bool,
    pub metrics: Vec<Metric>,
}

impl CheckOutcome {
    fn new(name: &str) -> Self {
        Self { name: name.to_string(), pass: true, metrics: Vec::new() }
    }

    fn metric(&mut self, name: &str, observed: f64, bound: Option<f64>) {
        self.metrics.push(Metric { name: name.to_string(), observed, bound });
    }

    /// Records `observed < bound` (or `≤` when `inclusive`) and folds it into the verdict.
    fn require(&mut self, name: &str, observed: f64, bound: f64, inclusive: bool) {
        let ok = if inclusive { observed <= bound } else { observed < bound };
        self.pass &= ok;
        self.metric(name, observed, Some(bound));
    }

    fn require_at_least(&mut self, name: &str, observed: f64, bound: f64) {
        self.pass &= observed >= bound;
        self.metric(name, observed, Some(bound));
    }

    /// One line: `PASS name: metric=value (bound b), …`.
    pub fn line(&self) -> String {
        let mut out = format!("{} {}:", if self.pass { "PASS" } else { "FAIL" }, self.name);
        for (i, m) in self.metrics.iter().enumerate() {
            let sep = if i == 0 { " " } else { ", " };
            let _ = write!(out, "{sep}{}={:.6e}", m.name, m.observed);
            if let Some(b) = m.bound {
                let _ = write!(out, " (bound {b:.6e})");
            }
        }
        out
    }
}

fn nicholson() -> Result<ScenarioConfig> {
    ScenarioConfig::preset("nicholson")
}

/// Exact decay of the first mode: `||u(1)|| = e^{−1}`.
pub fn decay() -> Result<CheckOutcome> {
    let (spec, opts, t) = ScenarioConfig::preset("decay")?.build()?;
    let traj = solve(&spec, &opts, t)?;
    let exact = (-spec.op.lambda_1() * traj.final_time()).exp();
    let rel = (traj.final_state().norm() - exact).abs() / exact;
    let mut out = CheckOutcome::new("decay");
    out.require("relative_error", rel, 1e-10, false);
    Ok(out)
}

/// Main solver against the per-mode reference on `oracle.cfg` in the
/// configured mode: error below `1e-6` at the preset step and observed
/// order at least one between `h` and `h/2`.
pub fn oracle() -> Result<CheckOutcome> {
    let (spec, opts, t) = ScenarioConfig::preset("oracle")?.build()?;
    let errors = oracle_errors(&opts, t, &spec)?;
    let mut out = CheckOutcome::new(&format!("oracle[{}]", opts.mode.name()));
    out.require("max_l2_error", errors.0, 1e-6, false);
    out.require_at_least("error_ratio_h_over_h2", errors.0 / errors.1, 1.7);
    Ok(out)
}

fn oracle_errors(
    opts: &SolverOptions<f64>,
    t: f64,
    spec: &crate::integrator::ProblemSpec<f64>,
) -> Result<(f64, f64)> {
    let mut errs = [0.0; 2];
    for (i, h) in [opts.h, opts.h / 2.0].into_iter().enumerate() {
        let o = SolverOptions { h, ..*opts };
        let traj = solve(spec, &o, t)?;
        errs[i] = constant_delay_oracle(spec, traj.h(), t)?.max_discrepancy(&traj)?;
    }
    Ok((errs[0], errs[1]))
}

/// Oracle comparison in a given mode at step `h`: returns the errors at `h` and `h/2`.
pub fn oracle_errors_for(mode: SolverMode, h: f64) -> Result<(f64, f64)> {
    let (spec, opts, t) = ScenarioConfig::preset("oracle")?.build()?;
    oracle_errors(&SolverOptions { h, ..opts.with_mode(mode) }, t, &spec)
}

/// Delay functionals of every shipped variant on a window `r = 1`.
pub fn shipped_delays() -> Vec<DelayFunctional<f64>> {
    let aff = |a, b| InnerMap::AffineNorm { a, b };
    let mean = |a, b| InnerMap::MeanValue { a, b };
    [
        DelayFunctional::point(aff(0.2, 0.3), 0.5, None, 1.0),
        DelayFunctional::point(mean(0.5, 0.3), 1.0, Some(0.3), 1.0),
        DelayFunctional::multi_point(vec![(aff(0.1, 0.2), 0.5), (mean(0.1, -0.2), 0.8)], None, 1.0),
        DelayFunctional::integral_of_p(aff(0.3, 0.5), 0.35, 1.0),
        DelayFunctional::p_of_integral(mean(0.4, 0.6), 0.2, 1.0),
        DelayFunctional::constant(0.45, 1.0),
    ]
    .into_iter()
    .map(|d| d.expect("valid shipped delay"))
    .collect()
}

/// Randomized ignore-property test on every shipped variant (exact zero
/// required) and on a functional that reads `φ(0)` (must fail).
pub fn ignore_property(trials: usize) -> Result<CheckOutcome> {
    let mut out = CheckOutcome::new("ignore_property");
    let mut worst = 0.0_f64;
    for (i, eta) in shipped_delays().iter().enumerate() {
        let rep = check_h(eta, 8, trials, 1000 + i as u64);
        worst = worst.max(rep.max_discrepancy);
        out.pass &= rep.pass;
    }
    out.require("max_discrepancy", worst, 0.0, true);
    let violator = DelayFunctional::point_unchecked(InnerMap::AffineNorm { a: 0.0, b: 0.3 }, 0.0, 0.5, 1.0);
    let rep = check_h(&violator, 8, trials, 7);
    out.pass &= !rep.pass;
    out.metric("violator_discrepancy", rep.max_discrepancy, None);
    Ok(out)
}

/// Post-hoc `η(u_t)` on the finished Nicholson trajectory against the frozen schedule.
pub fn schedule_consistency() -> Result<CheckOutcome> {
    let (spec, opts, t) = nicholson()?.build()?;
    let traj = solve(&spec, &opts, t)?;
    let mut out = CheckOutcome::new("schedule_consistency");
    out.require("max_discrepancy", traj.h_consistency(&spec.delay)?, 0.0, true);
    out.metric("nodes", traj.delays().len() as f64, None);
    Ok(out)
}

/// `ε` ladder in three directions plus the restart comparison.
pub fn dependence(eps_ladder: &[f64]) -> Result<CheckOutcome> {
    let (spec, opts, t) = nicholson()?.build()?;
    let dirs = standard_directions(&spec)?;
    let rep = continuous_dependence(&spec, &opts, &dirs, eps_ladder, t, 1e-4)?;
    let mut out = CheckOutcome::new("continuous_dependence");
    for row in &rep.rows {
        out.pass &= row.pass;
        out.metric(&format!("{}_final", row.direction), *row.deviation.last().unwrap_or(&f64::NAN), Some(1e-4));
        out.metric(&format!("{}_decreasing", row.direction), f64::from(u8::from(row.strictly_decreasing)), None);
        if let Some(s) = row.schedule_unchanged {
            out.metric(&format!("{}_schedule_unchanged", row.direction), f64::from(u8::from(s)), None);
        }
    }
    let restart = semigroup_restart(&spec, &opts, 2.0, 3.0)?;
    out.require("restart_discrepancy", restart, 1e-9, false);
    Ok(out)
}

pub fn apriori() -> Result<CheckOutcome> {
    let (spec, opts, t) = nicholson()?.build()?;
    let b = f_norm_bound(&spec.birth, &spec.kernel, &spec.op)?;
    let traj = solve(&spec, &opts, t)?;
    let rep = apriori_from_trajectory(&spec, &traj, b);
    let mut out = CheckOutcome::new("apriori_bound");
    out.require("max_norm", rep.observed, rep.analytic * (1.0 + crate::diagnostics::BOUND_TOL), true);
    out.metric("gronwall_bound", rep.gronwall, None);
    out.require("max_f_norm", rep.observed_f, rep.f_bound * (1.0 + crate::diagnostics::BOUND_TOL), true);
    Ok(out)
}

/// Absorbing-ball entry from data of size `{1, 10, 100}·R(δ)` for `δ ∈ {0, 1/4}` up to `T = 10`.
pub fn dissipation() -> Result<CheckOutcome> {
    let (spec, opts, _) = nicholson()?.build()?;
    let b = f_norm_bound(&spec.birth, &spec.kernel, &spec.op)?;
    let mut out = CheckOutcome::new("dissipativity");
    for delta in [0.0, 0.25] {
        let radius = dissipation_radius(b, spec.op.lambda_1(), spec.d, delta);
        for scale in [1.0, 10.0, 100.0] {
            let phi = spec.phi.scaled(scale * radius / spec.phi.sup_norm());
            let s = spec.with_phi(phi)?;
            let traj = solve(&s, &opts, 10.0)?;
            let rep = dissipation_from_trajectory(&s, &traj, delta)?;
            out.pass &= rep.pass;
            let tag = format!("d{delta}_x{scale}");
            out.metric(&format!("{tag}_entry"), rep.entry_time.unwrap_or(f64::INFINITY), None);
            out.metric(&format!("{tag}_max_after"), rep.max_after_entry, Some(rep.ball));
            out.metric(&format!("{tag}_envelope_excess"), rep.envelope_excess, Some(crate::diagnostics::BOUND_TOL));
        }
    }
    Ok(out)
}

pub fn holder() -> Result<CheckOutcome> {
    let (spec, opts, _) = nicholson()?.build()?;
    let traj = solve(&spec, &opts, 3.0)?;
    let rep = holder_check(&spec, &traj, 0.25, (1.0, 3.0), 500, 2024)?;
    let mut out = CheckOutcome::new("holder");
    out.pass = rep.pass;
    out.metric("max_ratio", rep.max_ratio, Some(rep.analytic_min));
    out.metric("max_ratio_over_l", rep.max_ratio_over_l, Some(1.0));
    Ok(out)
}

/// Two in-process runs of the Nicholson preset give byte-identical CSV.
pub fn determinism() -> Result<CheckOutcome> {
    let cfg = nicholson()?;
    let (spec, opts, t) = cfg.build()?;
    let cols = cfg.columns()?;
    let a = csv_string(&solve(&spec, &opts, t)?, &spec.op, &cols)?;
    let b = csv_string(&solve(&spec, &opts, t)?, &spec.op, &cols)?;
    let mut out = CheckOutcome::new("determinism");
    out.pass = a == b;
    out.metric("bytes", a.len() as f64, None);
    Ok(out)
}

pub const SUITES: &[&str] = &["all", "H", "oracle", "dissipation", "holder", "dependence", "apriori"];

/// Runs a named suite; `None` for an unknown name.
pub fn run_suite(name: &str) -> Option<Result<Vec<CheckOutcome>>> {
    let ladder = [1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6];
    let result = match name {
        "H" => (|| Ok(vec![ignore_property(1000)?, schedule_consistency()?]))(),
        "oracle" => (|| Ok(vec![decay()?, oracle()?]))(),
        "dissipation" => dissipation().map(|o| vec![o]),
        "holder" => holder().map(|o| vec![o]),
        "dependence" => dependence(&ladder).map(|o| vec![o]),
        "apriori" => apriori().map(|o| vec![o]),
        "all" => (|| {
            Ok(vec![
                decay()?,
                oracle()?,
                ignore_property(1000)?,
                schedule_consistency()?,
                dependence(&ladder)?,
                apriori()?,
                dissipation()?,
                holder()?,
                determinism()?,
            ])
        })(),
        _ => return None,
    };
    Some(result)
}
