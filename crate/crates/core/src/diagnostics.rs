//! Executable versions of the a-priori, dissipativity, Hölder and
//! continuous-dependence estimates, plus an independent reference solver for
//! linear constant-delay problems.
//!
//! Every verdict is a one-sided check `observed ≤ analytic·(1 + tol)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Result, SddError};
use crate::history::InitialFunction;
use crate::integrator::{solve, ProblemSpec, SolverOptions, Trajectory};
use crate::nonlinearity::{f_norm_bound, BirthFunction, Kernel};
use crate::scalar::Scalar;
use crate::spectral::ModalVector;

/// Relative slack on bounds that are exact in modal arithmetic.
pub const BOUND_TOL: f64 = 1e-6;
/// Slack on the absorbing-ball radius.
pub const RADIUS_SLACK: f64 = 0.05;

/// The a-priori constant
/// `C_T = ||φ(0)|| + d[||φ(0)||d⁻¹e^{dT} + e^{dT}B d⁻²(1 − e^{−dT}(dT − 1))] + T·B`.
///
/// The bracket grows like `2B/d` as `d → 0`, so for `d < 1e-8` the `d → 0`
/// limit of [`apriori_constant_gronwall`] is returned instead.
pub fn apriori_constant(phi0: f64, d: f64, t: f64, b: f64) -> f64 {
    if d < 1e-8 {
        return apriori_constant_gronwall(phi0, d, t, b);
    }
    let edt = (d * t).exp();
    phi0 + d * (phi0 / d * edt + edt * b / (d * d) * (1.0 - (-d * t).exp() * (d * t - 1.0))) + t * b
}

/// Solution of `Ψ(t) ≤ ||φ(0)|| + tB + d∫₀ᵗΨ`, namely
/// `||φ(0)||e^{dt} + B(e^{dt} − 1)/d`, with the series `B·t(1 + dt/2 + …)` for small `dt`.
pub fn apriori_constant_gronwall(phi0: f64, d: f64, t: f64, b: f64) -> f64 {
    let z = d * t;
    let growth = if z < 1e-8 { t * (1.0 + 0.5 * z) } else { z.exp_m1() / d };
    phi0 * z.exp() + b * growth
}

/// Asymptotic radius `R(δ) = B·λ₁^{2δ−1}(λ₁ + 2d)^{−1/2}` of the absorbing ball.
pub fn dissipation_radius(b: f64, lambda1: f64, d: f64, delta: f64) -> f64 {
    (b * b * lambda1.powf(4.0 * delta - 2.0) / (lambda1 + 2.0 * d)).sqrt()
}

/// `D_δ = e^{−(δ+½)}(δ+½)^{δ+½}`
pub fn d_delta(delta: f64) -> f64 {
    let s = delta + 0.5;
    (-s).exp() * s.powf(s)
}

/// `D̂_δ = e^{−(1+δ)}(1+δ)^{1+δ}`
pub fn d_hat(delta: f64) -> f64 {
    let s = 1.0 + delta;
    (-s).exp() * s.powf(s)
}

/// Hölder constant
/// `L = D_δ·min(t₁,t₂)^{−(δ+½)}||φ(0)|| + [D_δ t₁^{½−δ}(½−δ)^{−1} + δ^δ(e(1−δ))^{−1}]·M`
/// with `M = max_{τ≤t₂}||F(u_τ) + d·u(τ)||`.
pub fn holder_constant(delta: f64, t1: f64, t2: f64, phi0: f64, forcing_max: f64) -> f64 {
    let dd = d_delta(delta);
    let lead = dd * t1.min(t2).powf(-(delta + 0.5)) * phi0;
    let delta_pow = if delta == 0.0 { 1.0 } else { delta.powf(delta) };
    let bracket = dd * t1.powf(0.5 - delta) / (0.5 - delta) + delta_pow / (std::f64::consts::E * (1.0 - delta));
    lead + bracket * forcing_max
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AprioriReport {
    pub t_end: f64,
    /// `B = M_f|Ω|^{3/2}C_b`
    pub f_bound: f64,
    pub analytic: f64,
    pub gronwall: f64,
    pub observed: f64,
    /// Largest `||F||` met along the trajectory.
    pub observed_f: f64,
    pub pass: bool,
    pub pass_gronwall: bool,
}

fn forward_max_norm<T: Scalar>(traj: &Trajectory<T>) -> f64 {
    traj.forward_states().iter().map(|v| v.norm().as_f64()).fold(0.0, f64::max)
}

/// Compares `max_{t≤T}||u(t)||` against the a-priori constant.
pub fn apriori_bound<T: Scalar>(spec: &ProblemSpec<T>, opts: &SolverOptions<T>, t_end: T) -> Result<AprioriReport> {
    let b = f_norm_bound(&spec.birth, &spec.kernel, &spec.op)?.as_f64();
    let traj = solve(spec, opts, t_end)?;
    Ok(apriori_from_trajectory(spec, &traj, b))
}

pub fn apriori_from_trajectory<T: Scalar>(spec: &ProblemSpec<T>, traj: &Trajectory<T>, b: f64) -> AprioriReport {
    let t = traj.final_time().as_f64();
    let phi0 = spec.phi.at_zero().norm().as_f64();
    let d = spec.d.as_f64();
    let analytic = apriori_constant(phi0, d, t, b);
    let gronwall = apriori_constant_gronwall(phi0, d, t, b);
    let observed = forward_max_norm(traj);
    let observed_f = traj.forcing().iter().map(|v| v.norm().as_f64()).fold(0.0, f64::max);
    AprioriReport {
        t_end: t,
        f_bound: b,
        analytic,
        gronwall,
        observed,
        observed_f,
        pass: observed <= analytic * (1.0 + BOUND_TOL) && observed_f <= b * (1.0 + BOUND_TOL),
        pass_gronwall: observed <= gronwall * (1.0 + BOUND_TOL),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DissipationReport {
    pub delta: f64,
    pub radius: f64,
    /// `R(δ)·(1 + slack)`
    pub ball: f64,
    pub initial_sup_norm: f64,
    pub entry_time: Option<f64>,
    pub max_after_entry: f64,
    /// Largest `y(t) − y(0)e^{−(λ₁+2d)t} − R²` with `y = ||A^δu||²`, relative to the envelope.
    pub envelope_excess: f64,
    pub envelope_pass: bool,
    pub pass: bool,
}

/// Absorbing-ball check for each `δ` on one trajectory.
///
/// The entry time is the first node after which `||A^δu||` stays in the ball
/// for a full window `r`. With `R(δ) = 0` (no forcing) the verdict rests on
/// the envelope alone, which then forces decay to zero.
pub fn dissipativity_check<T: Scalar>(
    spec: &ProblemSpec<T>,
    opts: &SolverOptions<T>,
    deltas: &[f64],
    t_end: T,
) -> Result<Vec<DissipationReport>> {
    let traj = solve(spec, opts, t_end)?;
    deltas.iter().map(|&delta| dissipation_from_trajectory(spec, &traj, delta)).collect()
}

pub fn dissipation_from_trajectory<T: Scalar>(
    spec: &ProblemSpec<T>,
    traj: &Trajectory<T>,
    delta: f64,
) -> Result<DissipationReport> {
    if !(0.0..0.5).contains(&delta) {
        return Err(SddError::invalid(format!("dissipativity needs δ ∈ [0, 1/2), got {delta}")));
    }
    let b = f_norm_bound(&spec.birth, &spec.kernel, &spec.op)?.as_f64();
    let lambda1 = spec.op.lambda_1().as_f64();
    let d = spec.d.as_f64();
    let radius = dissipation_radius(b, lambda1, d, delta);
    let ball = radius * (1.0 + RADIUS_SLACK);
    let dt = T::lit(delta);
    let norms: Vec<f64> = traj
        .forward_states()
        .iter()
        .map(|v| spec.op.frac_power_norm(dt, v).map(|x| x.as_f64()))
        .collect::<Result<_>>()?;
    let times: Vec<f64> = traj.forward_times().iter().map(|t| t.as_f64()).collect();
    let rate = lambda1 + 2.0 * d;
    let y0 = norms[0] * norms[0];
    let mut excess = 0.0_f64;
    for (&t, &n) in times.iter().zip(&norms) {
        let env = y0 * (-rate * t).exp() + radius * radius;
        excess = excess.max((n * n - env) / env.max(f64::MIN_POSITIVE));
    }
    let envelope_pass = excess <= BOUND_TOL;
    let r = spec.r.as_f64();
    let mut entry = None;
    if radius > 0.0 {
        let mut run_start: Option<usize> = None;
        for (i, &n) in norms.iter().enumerate() {
            if n > ball {
                run_start = None;
                continue;
            }
            let st = *run_start.get_or_insert(i);
            if times[i] - times[st] >= r * (1.0 - 1e-9) {
                entry = Some(st);
                break;
            }
        }
    }
    let max_after_entry = entry.map_or(f64::NAN, |i| norms[i..].iter().copied().fold(0.0, f64::max));
    let stays = entry.is_some_and(|_| max_after_entry <= ball);
    let pass = envelope_pass
        && if radius > 0.0 { stays } else { norms[norms.len() - 1] < norms[0] || norms[0] == 0.0 };
    Ok(DissipationReport {
        delta,
        radius,
        ball,
        initial_sup_norm: spec.phi.sup_norm().as_f64(),
        entry_time: entry.map(|i| times[i]),
        max_after_entry,
        envelope_excess: excess,
        envelope_pass,
        pass,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HolderReport {
    pub delta: f64,
    pub interval: (f64, f64),
    pub pairs: usize,
    /// Smallest analytic `L` over the sampled pairs.
    pub analytic_min: f64,
    pub max_ratio: f64,
    /// Largest `ratio / L` over the sampled pairs.
    pub max_ratio_over_l: f64,
    pub pass: bool,
}

/// Samples `n_pairs` node pairs in `[a, b]` and checks
/// `||A^δ(u(t₁) − u(t₂))|| ≤ L(δ, t₁, t₂, φ)·√|t₁ − t₂|` for each.
pub fn holder_check<T: Scalar>(
    spec: &ProblemSpec<T>,
    traj: &Trajectory<T>,
    delta: f64,
    interval: (f64, f64),
    n_pairs: usize,
    seed: u64,
) -> Result<HolderReport> {
    let (a, b) = interval;
    if !(0.0..0.5).contains(&delta) || !(a > 0.0 && b > a) {
        return Err(SddError::invalid(format!("Hölder check needs δ ∈ [0, 1/2) and 0 < a < b, got {delta}, [{a}, {b}]")));
    }
    let times: Vec<f64> = traj.forward_times().iter().map(|t| t.as_f64()).collect();
    let states = traj.forward_states();
    let d = spec.d;
    // running max of ||F(u_τ) + d·u(τ)||
    let mut forcing_max = Vec::with_capacity(times.len());
    let mut run = 0.0_f64;
    for (f, u) in traj.forcing().iter().zip(states) {
        let mut g = f.clone();
        g.axpy(d, u);
        run = run.max(g.norm().as_f64());
        forcing_max.push(run);
    }
    let lo = times.partition_point(|&t| t < a - 1e-12);
    let hi = times.partition_point(|&t| t <= b + 1e-12);
    if hi <= lo {
        return Err(SddError::invalid(format!("no trajectory nodes inside [{a}, {b}]")));
    }
    let phi0 = spec.phi.at_zero().norm().as_f64();
    let dt = T::lit(delta);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = HolderReport {
        delta,
        interval,
        pairs: n_pairs,
        analytic_min: f64::INFINITY,
        max_ratio: 0.0,
        max_ratio_over_l: 0.0,
        pass: true,
    };
    for _ in 0..n_pairs {
        let i = rng.gen_range(lo..hi);
        let j = rng.gen_range(lo..hi);
        let (i1, i2) = if times[i] <= times[j] { (i, j) } else { (j, i) };
        let (t1, t2) = (times[i1], times[i2]);
        let l = holder_constant(delta, t1, t2, phi0, forcing_max[i2]);
        report.analytic_min = report.analytic_min.min(l);
        let ratio = if i1 == i2 {
            0.0
        } else {
            spec.op.frac_power_norm(dt, &(&states[i1] - &states[i2]))?.as_f64() / (t2 - t1).sqrt()
        };
        report.max_ratio = report.max_ratio.max(ratio);
        report.max_ratio_over_l = report.max_ratio_over_l.max(ratio / l);
        if ratio > l * (1.0 + BOUND_TOL) {
            report.pass = false;
        }
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DependenceRow {
    pub direction: String,
    pub eps: Vec<f64>,
    /// `sup_{t≤T}||u^ε_t − u_t||_C` for each `ε`.
    pub deviation: Vec<f64>,
    pub strictly_decreasing: bool,
    /// Exact schedule agreement on the nodes of the first macro-step that
    /// cannot see the perturbation; `None` when not applicable.
    pub schedule_unchanged: Option<bool>,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DependenceReport {
    pub rows: Vec<DependenceRow>,
    pub threshold: f64,
    pub pass: bool,
}

/// A named perturbation `ψ`; `support_start` is the left end of its support
/// when `ψ` vanishes on `[−r, support_start]`.
#[derive(Clone, Debug)]
pub struct Direction<T> {
    pub name: String,
    pub psi: InitialFunction<T>,
    pub support_start: Option<T>,
}

/// Three perturbation directions: global, supported on `[−r, −η_ign]`, and
/// supported on `(−η_ign/2, 0]`.
pub fn standard_directions<T: Scalar>(spec: &ProblemSpec<T>) -> Result<Vec<Direction<T>>> {
    let r = spec.r;
    let ign = spec.delay.eta_ign();
    let n = spec.phi.samples().len().max(81);
    let modes = spec.op.n_modes();
    let shape = |th: T, k: usize| -> T {
        let kk = T::from_usize_lossy(k + 1);
        (kk * th + T::one()).cos() / kk
    };
    let global = InitialFunction::from_fn(r, n, |th| ModalVector::new((0..modes).map(|k| shape(th, k)).collect()))?;
    let hat = |th: T, lo: T, hi: T| -> T {
        if th <= lo || th >= hi {
            T::zero()
        } else {
            let mid = (lo + hi) * T::lit(0.5);
            T::one() - ((th - mid) / (mid - lo)).abs()
        }
    };
    let far_hi = -ign;
    let far = InitialFunction::from_fn(r, n, |th| {
        let w = hat(th, -r - r, far_hi);
        ModalVector::new((0..modes).map(|k| w * shape(th, k)).collect())
    })?;
    let near_lo = -ign * T::lit(0.5);
    let near = InitialFunction::from_fn(r, n, |th| {
        let w = if th > near_lo { (th - near_lo) / (-near_lo) } else { T::zero() };
        ModalVector::new((0..modes).map(|k| w * shape(th, k)).collect())
    })?;
    Ok(vec![
        Direction { name: "global".into(), psi: global, support_start: None },
        Direction { name: "far_history".into(), psi: far, support_start: None },
        Direction { name: "recent_history".into(), psi: near, support_start: Some(near_lo) },
    ])
}

/// Runs the `ε` ladder for each direction; the perturbed initial functions
/// are `φ + ε·ψ` on the θ-grid of `φ`.
pub fn continuous_dependence<T: Scalar>(
    spec: &ProblemSpec<T>,
    opts: &SolverOptions<T>,
    directions: &[Direction<T>],
    eps_ladder: &[f64],
    t_end: T,
    threshold: f64,
) -> Result<DependenceReport> {
    let base = solve(spec, opts, t_end)?;
    let mut rows = Vec::with_capacity(directions.len());
    for dir in directions {
        let mut deviation = Vec::with_capacity(eps_ladder.len());
        let mut schedule_unchanged = dir.support_start.map(|_| true);
        for &eps in eps_ladder {
            let phi = spec.phi.perturbed(&dir.psi, T::lit(eps))?;
            let traj = solve(&spec.with_phi(phi)?, opts, t_end)?;
            deviation.push(base.sup_deviation(&traj)?);
            if let Some(s) = dir.support_start {
                // nodes t_n read the history up to t_n − η_ign ≤ s
                let limit = (s + spec.delay.eta_ign()).as_f64();
                let n_first = ((traj.macro_step() / traj.h()).round().to_usize().unwrap_or(0)).min(traj.delays().len());
                for j in 0..n_first {
                    if traj.forward_times()[j].as_f64() <= limit + 1e-12 && traj.delays()[j] != base.delays()[j] {
                        schedule_unchanged = Some(false);
                    }
                }
            }
        }
        let strictly_decreasing = deviation.windows(2).all(|w| w[1] < w[0]);
        let last = deviation.last().copied().unwrap_or(f64::INFINITY);
        let pass = strictly_decreasing && last < threshold && schedule_unchanged != Some(false);
        rows.push(DependenceRow {
            direction: dir.name.clone(),
            eps: eps_ladder.to_vec(),
            deviation,
            strictly_decreasing,
            schedule_unchanged,
            pass,
        });
    }
    let pass = rows.iter().all(|r| r.pass);
    Ok(DependenceReport { rows, threshold, pass })
}

/// `sup ||S_{t₁+t₂}φ − S_{t₂}S_{t₁}φ||` over the nodes of `[t₁, t₁ + t₂]`.
/// Both solves share the micro grid when `t₁` is a multiple of the macro-step
/// and `r` a multiple of `h`.
pub fn semigroup_restart<T: Scalar>(spec: &ProblemSpec<T>, opts: &SolverOptions<T>, t1: T, t2: T) -> Result<f64> {
    let full = solve(spec, opts, t1 + t2)?;
    let first = solve(spec, opts, t1)?;
    let per_window = (spec.r / first.h()).round().to_usize().unwrap_or(1).max(1);
    let seg = first.segment_at(first.final_time(), per_window + 1)?;
    let second = solve(&spec.with_phi(seg)?, opts, t2)?;
    let offset = first.forward_times().len() - 1;
    let mut worst = 0.0_f64;
    for (j, v) in second.forward_states().iter().enumerate() {
        let k = full.zero_index() + offset + j;
        if k >= full.states().len() {
            break;
        }
        worst = worst.max(full.states()[k].distance(v).as_f64());
    }
    Ok(worst)
}

/// Reference solution of a linear constant-delay problem on given nodes.
#[derive(Clone, Debug)]
pub struct OracleTrajectory<T> {
    pub times: Vec<T>,
    pub states: Vec<ModalVector<T>>,
}

impl<T: Scalar> OracleTrajectory<T> {
    /// `max_n ||u(t_n) − u_ref(t_n)||` over the forward nodes of `traj`.
    pub fn max_discrepancy(&self, traj: &Trajectory<T>) -> Result<f64> {
        if self.times.len() != traj.forward_times().len() {
            return Err(SddError::invalid("oracle and trajectory use different nodes"));
        }
        Ok(self
            .states
            .iter()
            .zip(traj.forward_states())
            .map(|(a, b)| a.distance(b).as_f64())
            .fold(0.0, f64::max))
    }
}

/// Solves `u_k′ = −(λ_k + d)u_k + c·u_k(t − τ)` mode by mode with classical
/// RK4 at step `h/10` and cubic Hermite dense output, reporting the values at
/// the nodes `n·h`, `n = 0..=⌈T/h⌉`. With `τ = 0` each mode is the exact
/// exponential `e^{(c − λ_k − d)t}`.
pub fn constant_delay_oracle<T: Scalar>(spec: &ProblemSpec<T>, h: T, t_end: T) -> Result<OracleTrajectory<T>> {
    let c = match spec.birth {
        BirthFunction::Linear { c } => c.as_f64(),
        BirthFunction::Zero => 0.0,
        _ => return Err(SddError::Unsupported(format!("oracle needs a linear birth function, got {}", spec.birth.name()))),
    };
    if !matches!(spec.kernel, Kernel::Dirac) {
        return Err(SddError::Unsupported("oracle needs the local (dirac) kernel".into()));
    }
    let tau = spec
        .delay
        .constant_value()
        .ok_or_else(|| SddError::Unsupported("oracle needs a constant delay".into()))?
        .as_f64();
    let h = h.as_f64();
    let n_nodes = (t_end.as_f64() / h - 1e-9).ceil().max(1.0) as usize;
    let sub = 10usize;
    let ho = h / sub as f64;
    let n_fine = n_nodes * sub;
    let d = spec.d.as_f64();
    let theta = spec.phi.theta_grid();
    let mut out = vec![ModalVector::zeros(spec.op.n_modes()); n_nodes + 1];
    for (k, &lam) in spec.op.eigenvalues().iter().enumerate() {
        let lam = lam.as_f64();
        let hist_t: Vec<f64> = theta.iter().map(|t| t.as_f64()).collect();
        let hist_v: Vec<f64> = spec.phi.samples().iter().map(|v| v[k].as_f64()).collect();
        let phi_at = |s: f64| -> f64 {
            let s = s.max(hist_t[0]).min(0.0);
            let i = hist_t.partition_point(|&t| t <= s).clamp(1, hist_t.len() - 1);
            let (ta, tb) = (hist_t[i - 1], hist_t[i]);
            hist_v[i - 1] + (s - ta) / (tb - ta) * (hist_v[i] - hist_v[i - 1])
        };
        let u0 = hist_v[hist_v.len() - 1];
        if tau == 0.0 {
            for (n, slot) in out.iter_mut().enumerate() {
                slot[k] = T::lit(u0 * ((c - lam - d) * n as f64 * h).exp());
            }
            continue;
        }
        // fine grid values and derivatives for Hermite interpolation
        let mut u = Vec::with_capacity(n_fine + 1);
        let mut du = Vec::with_capacity(n_fine + 1);
        let rhs = |uv: f64, delayed: f64| -(lam + d) * uv + c * delayed;
        let delayed_at = |s: f64, u: &[f64], du: &[f64]| -> f64 {
            if s <= 0.0 {
                return phi_at(s);
            }
            let x = s / ho;
            let i = (x.floor() as usize).min(u.len().saturating_sub(2));
            let w = x - i as f64;
            if i + 1 >= u.len() {
                return u[u.len() - 1];
            }
            let (h00, h10, h01, h11) = (
                (1.0 + 2.0 * w) * (1.0 - w) * (1.0 - w),
                w * (1.0 - w) * (1.0 - w),
                w * w * (3.0 - 2.0 * w),
                w * w * (w - 1.0),
            );
            h00 * u[i] + h10 * ho * du[i] + h01 * u[i + 1] + h11 * ho * du[i + 1]
        };
        u.push(u0);
        // right derivative at t = 0
        du.push(rhs(u0, phi_at(-tau)));
        for n in 0..n_fine {
            let t = n as f64 * ho;
            let un = u[n];
            let k1 = du[n];
            let mid = delayed_at(t + 0.5 * ho - tau, &u, &du);
            let k2 = rhs(un + 0.5 * ho * k1, mid);
            let k3 = rhs(un + 0.5 * ho * k2, mid);
            let end = delayed_at(t + ho - tau, &u, &du);
            let k4 = rhs(un + ho * k3, end);
            let next = un + ho / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            u.push(next);
            du.push(rhs(next, end));
        }
        for (n, slot) in out.iter_mut().enumerate() {
            slot[k] = T::lit(u[n * sub]);
        }
    }
    let times = (0..=n_nodes).map(|n| T::lit(n as f64 * h)).collect();
    Ok(OracleTrajectory { times, states: out })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::delay::{DelayFunctional, InnerMap};
    use crate::integrator::SolverMode;
    use crate::spectral::SpectralOperator;
    use std::f64::consts::{E, PI};

    fn nicholson(d: f64) -> ProblemSpec<f64> {
        let op = SpectralOperator::dirichlet_laplacian_1d(PI, 8, 32).unwrap();
        let delay = DelayFunctional::point(InnerMap::AffineNorm { a: 0.2, b: 0.3 }, 0.5, None, 1.0).unwrap();
        let phi = InitialFunction::from_fn(1.0, 41, |th: f64| {
            let mut v = ModalVector::zeros(8);
            v[0] = 1.0 + 0.2 * th;
            v[2] = 0.1;
            v
        })
        .unwrap();
        ProblemSpec::new(op, d, delay, BirthFunction::Nicholson { p: 2.0 }, Kernel::gaussian(0.1).unwrap(), phi).unwrap()
    }

    fn linear(c: f64, tau: f64, n_modes: usize) -> ProblemSpec<f64> {
        let op = SpectralOperator::dirichlet_laplacian_1d(PI, n_modes, 2 * n_modes).unwrap();
        let delay = DelayFunctional::constant(tau, 1.0).unwrap();
        let phi = InitialFunction::from_fn(1.0, 21, |th: f64| {
            ModalVector::new((0..n_modes).map(|k| (1.0 + 0.5 * th) / (1.0 + k as f64).powi(2)).collect())
        })
        .unwrap();
        ProblemSpec::new(op, 0.0, delay, BirthFunction::Linear { c }, Kernel::Dirac, phi).unwrap()
    }

    #[test]
    fn constants_special_cases() {
        assert!((d_delta(0.0) - (0.5f64 / E).sqrt()).abs() < 1e-15);
        assert!((d_delta(0.0) - 0.42888194248035344).abs() < 1e-15);
        assert!((d_delta(0.25) - 0.38069317078097525).abs() < 1e-15);
        assert!((d_hat(0.0) - 1.0 / E).abs() < 1e-15);
        assert!((d_hat(0.25) - 0.37867742379730174).abs() < 1e-15);
        let b = 3.654730779489438;
        assert!((dissipation_radius(b, 1.0, 0.0, 0.0) - b).abs() < 1e-14);
        assert!((dissipation_radius(b, 1.0, 0.5, 0.0) - 2.5842849175881786).abs() < 1e-14);
        assert!((dissipation_radius(b, 1.0, 0.5, 0.25) - 2.5842849175881786).abs() < 1e-14);
        assert!((apriori_constant(1.0, 0.5, 5.0, b) - 109.5394268179367).abs() < 1e-10);
        // d = 0: Gronwall limit ||φ(0)|| + T·B
        assert!((apriori_constant(1.0, 0.0, 5.0, b) - (1.0 + 5.0 * b)).abs() < 1e-12);
        assert!((apriori_constant(2.0, 0.0, 1.0, 0.0) - 2.0).abs() < 1e-15);
        // the series branch is continuous with the closed form
        let near = apriori_constant_gronwall(1.0, 1e-7, 5.0, b);
        let series = apriori_constant_gronwall(1.0, 1e-9, 5.0, b);
        assert!((near - series).abs() < 1e-5);
    }

    #[test]
    fn printed_constant_dominates_gronwall() {
        for &(d, t) in &[(0.1, 1.0), (0.5, 5.0), (2.0, 0.5), (1e-3, 3.0)] {
            assert!(apriori_constant(1.3, d, t, 0.7) >= apriori_constant_gronwall(1.3, d, t, 0.7));
        }
    }

    #[test]
    fn holder_constant_special_case() {
        // δ = 0, t₁ = t₂ = 1: L = D₀·φ0 + [2D₀ + 1/e]·M
        let l = holder_constant(0.0, 1.0, 1.0, 2.0, 3.0);
        let d0 = d_delta(0.0);
        assert!((l - (2.0 * d0 + (2.0 * d0 + 1.0 / E) * 3.0)).abs() < 1e-14);
    }

    #[test]
    fn apriori_passes_on_decay_and_nicholson() {
        let op = SpectralOperator::dirichlet_laplacian_1d(PI, 4, 8).unwrap();
        let phi = InitialFunction::constant(1.0, ModalVector::new(vec![0.6, 0.8, 0.0, 0.0])).unwrap();
        let spec = ProblemSpec::new(op, 0.0, DelayFunctional::constant(0.5, 1.0).unwrap(), BirthFunction::Zero, Kernel::Dirac, phi)
            .unwrap();
        let rep = apriori_bound(&spec, &SolverOptions::new(0.01), 2.0).unwrap();
        assert!(rep.pass && rep.pass_gronwall);
        assert!((rep.analytic - 1.0).abs() < 1e-12);
        assert!((rep.observed - 1.0).abs() < 1e-12);
        let rep = apriori_bound(&nicholson(0.5), &SolverOptions::new(0.01), 5.0).unwrap();
        assert!(rep.pass && rep.pass_gronwall, "{rep:?}");
        let unbounded = linear(0.5, 0.5, 4);
        assert!(matches!(apriori_bound(&unbounded, &SolverOptions::new(0.01), 1.0), Err(SddError::Unsupported(_))));
    }

    #[test]
    fn dissipation_enters_ball_from_large_data() {
        let spec = nicholson(0.5);
        let b = f_norm_bound(&spec.birth, &spec.kernel, &spec.op).unwrap();
        let radius = dissipation_radius(b, 1.0, 0.5, 0.0);
        let big = spec.phi.scaled(100.0 * radius / spec.phi.sup_norm());
        let reps = dissipativity_check(&spec.with_phi(big).unwrap(), &SolverOptions::new(0.01), &[0.0, 0.25], 10.0).unwrap();
        for rep in reps {
            assert!(rep.pass, "{rep:?}");
            assert!(rep.max_after_entry <= rep.ball);
        }
    }

    #[test]
    fn dissipation_without_forcing_decays() {
        let op = SpectralOperator::dirichlet_laplacian_1d(PI, 4, 8).unwrap();
        let phi = InitialFunction::constant(1.0, ModalVector::new(vec![1.0, 1.0, 0.0, 0.5])).unwrap();
        let spec = ProblemSpec::new(op, 0.0, DelayFunctional::constant(0.5, 1.0).unwrap(), BirthFunction::Zero, Kernel::Dirac, phi)
            .unwrap();
        let reps = dissipativity_check(&spec, &SolverOptions::new(0.01), &[0.0, 0.25], 3.0).unwrap();
        for rep in reps {
            assert_eq!(rep.radius, 0.0);
            assert!(rep.pass && rep.envelope_pass, "{rep:?}");
        }
    }

    #[test]
    fn holder_closed_form_single_mode() {
        let op = SpectralOperator::dirichlet_laplacian_1d(PI, 1, 2).unwrap();
        let phi = InitialFunction::constant(1.0, ModalVector::new(vec![2.0])).unwrap();
        let spec = ProblemSpec::new(op, 0.0, DelayFunctional::constant(0.5, 1.0).unwrap(), BirthFunction::Zero, Kernel::Dirac, phi)
            .unwrap();
        let traj = solve(&spec, &SolverOptions::new(0.01), 3.0).unwrap();
        let rep = holder_check(&spec, &traj, 0.25, (1.0, 3.0), 200, 7).unwrap();
        assert!(rep.pass, "{rep:?}");
        // the largest ratio matches the closed form on some sampled pair
        let (t1, t2) = (1.0, 1.01);
        let closed = ((-t1 as f64).exp() - (-t2 as f64).exp()).abs() * 2.0 / (t2 - t1 as f64).sqrt();
        let u1 = traj.state_at(t1).unwrap();
        let u2 = traj.state_at(t2).unwrap();
        let numeric = (&u1 - &u2).norm() / (t2 - t1 as f64).sqrt();
        assert!((numeric - closed).abs() < 1e-10);
        assert!(closed <= holder_constant(0.25, t1, t2, 2.0, 0.0));
    }

    #[test]
    fn holder_passes_on_nicholson() {
        let spec = nicholson(0.5);
        let traj = solve(&spec, &SolverOptions::new(0.01), 3.0).unwrap();
        let rep = holder_check(&spec, &traj, 0.25, (1.0, 3.0), 500, 11).unwrap();
        assert!(rep.pass, "{rep:?}");
        assert!(rep.max_ratio > 0.0);
    }

    #[test]
    fn dependence_ladder_decreases() {
        let spec = nicholson(0.5);
        let dirs = standard_directions(&spec).unwrap();
        let rep =
            continuous_dependence(&spec, &SolverOptions::new(0.02), &dirs, &[1e-1, 1e-2, 1e-3, 1e-4], 2.0, 1e-2).unwrap();
        assert!(rep.pass, "{rep:?}");
        assert_eq!(rep.rows[2].schedule_unchanged, Some(true));
        let zero = continuous_dependence(&spec, &SolverOptions::new(0.02), &dirs[..1], &[0.0], 1.0, 1e-2).unwrap();
        assert_eq!(zero.rows[0].deviation, vec![0.0]);
    }

    #[test]
    fn directions_respect_supports() {
        let spec = nicholson(0.5);
        let dirs = standard_directions(&spec).unwrap();
        for (th, v) in dirs[1].psi.theta_grid().iter().zip(dirs[1].psi.samples()) {
            if *th >= -0.5 {
                assert_eq!(v.norm(), 0.0);
            }
        }
        for (th, v) in dirs[2].psi.theta_grid().iter().zip(dirs[2].psi.samples()) {
            if *th <= -0.25 {
                assert_eq!(v.norm(), 0.0);
            }
        }
    }

    #[test]
    fn restart_matches() {
        let spec = nicholson(0.5);
        let dev = semigroup_restart(&spec, &SolverOptions::new(0.01), 1.0, 1.5).unwrap();
        assert!(dev < 1e-9, "{dev}");
    }

    #[test]
    fn oracle_special_cases() {
        // τ = 0 gives the exact exponential
        let spec = linear(0.5, 0.0, 3);
        let ora = constant_delay_oracle(&spec, 0.01, 1.0).unwrap();
        let u0 = spec.phi.at_zero();
        for (k, &lam) in spec.op.eigenvalues().iter().enumerate() {
            let exact = u0[k] * ((0.5 - lam) * 1.0f64).exp();
            assert!((ora.states[100][k] - exact).abs() < 1e-14 * exact.abs().max(1.0));
        }
        // c = 0 is pure decay
        let spec = linear(0.0, 0.5, 3);
        let ora = constant_delay_oracle(&spec, 0.01, 1.0).unwrap();
        let exact = spec.op.apply_semigroup(0.0, 1.0, spec.phi.at_zero()).unwrap();
        assert!(ora.states[100].distance(&exact) < 1e-12);
        let nic = nicholson(0.0);
        assert!(matches!(constant_delay_oracle(&nic, 0.01, 1.0), Err(SddError::Unsupported(_))));
    }

    #[test]
    fn oracle_against_solver_is_first_order() {
        let spec = linear(0.5, 0.5, 4);
        let errs: Vec<f64> = [0.02, 0.01]
            .iter()
            .map(|&h| {
                let traj = solve(&spec, &SolverOptions::new(h), 3.0).unwrap();
                let ora = constant_delay_oracle(&spec, traj.h(), 3.0).unwrap();
                ora.max_discrepancy(&traj).unwrap()
            })
            .collect();
        let ratio = errs[0] / errs[1];
        assert!((1.7..=2.3).contains(&ratio), "{errs:?}");
    }

    #[test]
    fn oracle_against_etd2_is_second_order() {
        let spec = linear(0.5, 0.5, 4);
        let errs: Vec<f64> = [0.02, 0.01]
            .iter()
            .map(|&h| {
                let traj = solve(&spec, &SolverOptions::new(h).with_mode(SolverMode::Etd2), 3.0).unwrap();
                constant_delay_oracle(&spec, traj.h(), 3.0).unwrap().max_discrepancy(&traj).unwrap()
            })
            .collect();
        assert!(errs[0] / errs[1] > 3.5, "{errs:?}");
    }
}
