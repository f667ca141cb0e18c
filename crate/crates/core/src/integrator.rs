//! Method-of-steps integration of the mild solution.
//!
//! Time is cut into macro-steps of length `Δ ≤ η_ign`. At the start `a` of a
//! macro-step the delay is frozen into the schedule `r(t_n) = η(ū_{t_n})`,
//! where `ū` continues the computed history constantly past `a`. Because `η`
//! never reads `(t − η_ign, t]`, the schedule equals the true `η(u_{t_n})`
//! and the remaining problem has a known time-dependent delay. Micro-steps of
//! size `h` then use exponential time differencing, which is exact for the
//! linear part in modal space.

use serde::Serialize;

use crate::delay::DelayFunctional;
use crate::error::{Result, SddError};
use crate::history::{interpolate, InitialFunction, PathView, Segment};
use crate::nonlinearity::{BirthFunction, Kernel, Nonlinearity};
use crate::scalar::Scalar;
use crate::spectral::{ModalVector, SpectralOperator};

const CORRECTOR_TOL: f64 = 1e-10;
const CORRECTOR_MAX: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverMode {
    Etd1,
    Etd2,
    Picard,
}

impl SolverMode {
    pub fn name(&self) -> &'static str {
        match self {
            SolverMode::Etd1 => "etd1",
            SolverMode::Etd2 => "etd2",
            SolverMode::Picard => "picard",
        }
    }
}

impl std::str::FromStr for SolverMode {
    type Err = SddError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "etd1" => Ok(SolverMode::Etd1),
            "etd2" => Ok(SolverMode::Etd2),
            "picard" => Ok(SolverMode::Picard),
            other => Err(SddError::invalid(format!("unknown solver mode `{other}` (etd1, etd2, picard)"))),
        }
    }
}

/// Everything that defines the initial-value problem.
#[derive(Clone, Debug)]
pub struct ProblemSpec<T> {
    pub op: SpectralOperator<T>,
    /// Damping `d ≥ 0`.
    pub d: T,
    /// History window `r`.
    pub r: T,
    pub delay: DelayFunctional<T>,
    pub birth: BirthFunction<T>,
    pub kernel: Kernel<T>,
    pub phi: InitialFunction<T>,
}

impl<T: Scalar> ProblemSpec<T> {
    /// Takes `r` from the delay functional and validates the combination.
    pub fn new(
        op: SpectralOperator<T>,
        d: T,
        delay: DelayFunctional<T>,
        birth: BirthFunction<T>,
        kernel: Kernel<T>,
        phi: InitialFunction<T>,
    ) -> Result<Self> {
        let spec = Self { r: delay.window(), op, d, delay, birth, kernel, phi };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.d >= T::zero()) || !self.d.is_finite() {
            return Err(SddError::invalid(format!("damping d must be finite and non-negative, got {}", self.d)));
        }
        if !(self.r > T::zero()) || !self.r.is_finite() {
            return Err(SddError::invalid(format!("window r must be positive, got {}", self.r)));
        }
        let tol = T::snap_tolerance() * self.r;
        if (self.delay.window() - self.r).abs() > tol {
            return Err(SddError::invalid(format!(
                "delay functional window {} differs from r = {}",
                self.delay.window(),
                self.r
            )));
        }
        let ign = self.delay.eta_ign();
        if !(ign > T::zero()) || ign > self.r + tol {
            return Err(SddError::invalid(format!("eta_ign must lie in (0, r], got {ign}")));
        }
        if (self.phi.window() - self.r).abs() > tol {
            return Err(SddError::invalid(format!(
                "initial function spans [-{}, 0] but r = {}",
                self.phi.window(),
                self.r
            )));
        }
        if self.phi.n_modes() != self.op.n_modes() {
            return Err(SddError::invalid(format!(
                "initial function has {} modes, operator has {}",
                self.phi.n_modes(),
                self.op.n_modes()
            )));
        }
        self.birth.certify(T::lit(50.0), 2001)?;
        Ok(())
    }

    /// Same problem from a different initial function.
    pub fn with_phi(&self, phi: InitialFunction<T>) -> Result<Self> {
        let spec = Self { phi, ..self.clone() };
        spec.validate()?;
        Ok(spec)
    }

    pub fn nonlinearity(&self) -> Nonlinearity<T> {
        Nonlinearity::new(self.birth, self.kernel, &self.op)
    }

    /// `M_f|Ω|L_b + d`, the rate in the contraction estimate.
    pub fn contraction_rate(&self) -> T {
        self.kernel.transport_constant(self.op.domain_measure()) * self.birth.lipschitz() + self.d
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions<T> {
    /// Requested micro-step; reduced so that it divides the macro-step.
    pub h: T,
    pub mode: SolverMode,
    pub picard_tol: T,
    pub picard_max_iter: usize,
    /// Macro-step length, at most `η_ign`. Defaults to `η_ign`.
    pub macro_step: Option<T>,
}

impl<T: Scalar> SolverOptions<T> {
    pub fn new(h: T) -> Self {
        Self { h, mode: SolverMode::Etd1, picard_tol: T::lit(1e-12), picard_max_iter: 200, macro_step: None }
    }

    pub fn with_mode(mut self, mode: SolverMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_macro_step(mut self, step: T) -> Self {
        self.macro_step = Some(step);
        self
    }
}

/// Bookkeeping for one macro-step.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct MacroStepInfo {
    pub t_start: f64,
    pub t_end: f64,
    /// Micro nodes whose delay hit a clamp.
    pub clamp_events: usize,
    /// Micro-steps where the delayed time fell inside the current step.
    pub corrector_steps: usize,
    pub corrector_max_residual: f64,
    /// Corrector loops that stopped above tolerance.
    pub corrector_warnings: usize,
    /// Iterations used on each Picard sub-interval.
    pub picard_iterations: Vec<usize>,
    /// Largest ratio of successive Picard differences.
    pub picard_max_ratio: f64,
    /// Predicted contraction constant `α·(M_f|Ω|L_b + d)`.
    pub picard_kappa: f64,
}

/// The computed solution on `[−K·h, T]`.
#[derive(Clone, Debug)]
pub struct Trajectory<T> {
    times: Vec<T>,
    states: Vec<ModalVector<T>>,
    zero_index: usize,
    delays: Vec<T>,
    forcing: Vec<ModalVector<T>>,
    macro_steps: Vec<MacroStepInfo>,
    h: T,
    macro_len: T,
    window: T,
    mode: SolverMode,
}

impl<T: Scalar> Trajectory<T> {
    /// All nodes, starting with the history samples.
    pub fn times(&self) -> &[T] {
        &self.times
    }

    pub fn states(&self) -> &[ModalVector<T>] {
        &self.states
    }

    /// Index of the node `t = 0`.
    pub fn zero_index(&self) -> usize {
        self.zero_index
    }

    /// Nodes `t_n ≥ 0`.
    pub fn forward_times(&self) -> &[T] {
        &self.times[self.zero_index..]
    }

    pub fn forward_states(&self) -> &[ModalVector<T>] {
        &self.states[self.zero_index..]
    }

    /// `η(u_{t_n})` for every forward node.
    pub fn delays(&self) -> &[T] {
        &self.delays
    }

    /// `F(u(t_n − η(u_{t_n})))` for every forward node.
    pub fn forcing(&self) -> &[ModalVector<T>] {
        &self.forcing
    }

    pub fn macro_steps(&self) -> &[MacroStepInfo] {
        &self.macro_steps
    }

    /// Micro-step actually used.
    pub fn h(&self) -> T {
        self.h
    }

    pub fn macro_step(&self) -> T {
        self.macro_len
    }

    pub fn window(&self) -> T {
        self.window
    }

    pub fn mode(&self) -> SolverMode {
        self.mode
    }

    pub fn final_time(&self) -> T {
        self.times[self.times.len() - 1]
    }

    pub fn final_state(&self) -> &ModalVector<T> {
        &self.states[self.states.len() - 1]
    }

    /// Linear interpolation of the stored nodes.
    pub fn state_at(&self, t: T) -> Result<ModalVector<T>> {
        interpolate(&self.times, &self.states, t)
    }

    /// The recorded path up to and including node `index`.
    pub fn path_until(&self, index: usize) -> PathView<'_, T> {
        PathView::new(&self.times[..=index], &self.states[..=index], self.window)
    }

    /// `u_t` resampled onto `n` uniform points of `[t − r, t]`.
    pub fn segment_at(&self, t: T, n: usize) -> Result<InitialFunction<T>> {
        let n = n.max(2);
        let r = self.window;
        let samples = (0..n)
            .map(|i| {
                let s = if i + 1 == n { t } else { t - r + r * T::from_usize_lossy(i) / T::from_usize_lossy(n - 1) };
                self.state_at(s)
            })
            .collect::<Result<Vec<_>>>()?;
        InitialFunction::from_samples(r, samples)
    }

    pub fn clamp_events(&self) -> usize {
        self.macro_steps.iter().map(|m| m.clamp_events).sum()
    }

    pub fn corrector_steps(&self) -> usize {
        self.macro_steps.iter().map(|m| m.corrector_steps).sum()
    }

    pub fn corrector_warnings(&self) -> usize {
        self.macro_steps.iter().map(|m| m.corrector_warnings).sum()
    }

    pub fn picard_max_ratio(&self) -> f64 {
        self.macro_steps.iter().map(|m| m.picard_max_ratio).fold(0.0, f64::max)
    }

    pub fn picard_kappa(&self) -> f64 {
        self.macro_steps.iter().map(|m| m.picard_kappa).fold(0.0, f64::max)
    }

    /// Re-evaluates `η` on the finished path at every forward node and
    /// returns the largest deviation from the schedule that was used.
    pub fn h_consistency(&self, eta: &DelayFunctional<T>) -> Result<f64> {
        let mut worst = 0.0_f64;
        for (j, &used) in self.delays.iter().enumerate() {
            let view = self.path_until(self.zero_index + j);
            let post = eta.eval(&view)?;
            worst = worst.max((post - used).abs().as_f64());
        }
        Ok(worst)
    }

    /// `sup_n ||u(t_n) − v(t_n)||` over all shared nodes, history included.
    /// Both trajectories must live on the same grid.
    pub fn sup_deviation(&self, other: &Trajectory<T>) -> Result<f64> {
        if self.times.len() != other.times.len() || self.h != other.h || self.zero_index != other.zero_index {
            return Err(SddError::invalid("trajectories live on different time grids"));
        }
        Ok(self
            .states
            .iter()
            .zip(&other.states)
            .map(|(a, b)| a.distance(b).as_f64())
            .fold(0.0, f64::max))
    }
}

/// Per-mode ETD coefficients for one micro-step.
struct EtdCoefficients<T> {
    decay: Vec<T>,
    phi1: Vec<T>,
    phi2: Vec<T>,
}

impl<T: Scalar> EtdCoefficients<T> {
    fn new(op: &SpectralOperator<T>, d: T, h: T) -> Self {
        let mut decay = Vec::with_capacity(op.n_modes());
        let mut phi1 = Vec::with_capacity(op.n_modes());
        let mut phi2 = Vec::with_capacity(op.n_modes());
        for &lam in op.eigenvalues() {
            let c = lam + d;
            let z = c * h;
            decay.push((-z).exp());
            phi1.push(if c < T::lit(1e-8) {
                h * (T::one() - z * T::lit(0.5))
            } else {
                -(-z).exp_m1() / c
            });
            phi2.push(if z < T::lit(1e-3) {
                h * (T::lit(0.5) - z / T::lit(6.0) + z * z / T::lit(24.0) - z * z * z / T::lit(120.0))
            } else {
                ((-z).exp_m1() + z) / (c * z)
            });
        }
        Self { decay, phi1, phi2 }
    }

    fn etd1(&self, u: &ModalVector<T>, f: &ModalVector<T>) -> ModalVector<T> {
        ModalVector::new(
            u.iter()
                .zip(f.iter())
                .zip(self.decay.iter().zip(&self.phi1))
                .map(|((&u, &f), (&e, &p))| e * u + p * f)
                .collect(),
        )
    }

    /// `pred + φ₂·(f_new − f_old)`
    fn correct(&self, pred: &ModalVector<T>, f_new: &ModalVector<T>, f_old: &ModalVector<T>) -> ModalVector<T> {
        ModalVector::new(
            pred.iter()
                .zip(f_new.iter().zip(f_old.iter()))
                .zip(&self.phi2)
                .map(|((&p, (&a, &b)), &c)| p + c * (a - b))
                .collect(),
        )
    }
}

/// One exponential Euler step
/// `u_k ← e^{−(λ_k+d)h}u_k + (1 − e^{−(λ_k+d)h})/(λ_k+d)·F_k`.
pub fn step_micro_etd1<T: Scalar>(
    op: &SpectralOperator<T>,
    d: T,
    h: T,
    u: &ModalVector<T>,
    forcing: &ModalVector<T>,
) -> ModalVector<T> {
    EtdCoefficients::new(op, d, h).etd1(u, forcing)
}

fn schedule_detailed<T: Scalar, S: Segment<T>>(
    eta: &DelayFunctional<T>,
    frozen: &S,
    nodes: &[T],
) -> Result<Vec<(T, bool)>> {
    let a = frozen.t_now();
    if let Some(&last) = nodes.last() {
        let span = last - a;
        if span > eta.eta_ign() * (T::one() + T::snap_tolerance()) {
            return Err(SddError::invalid(format!(
                "macro-step of length {span} exceeds eta_ign = {}",
                eta.eta_ign()
            )));
        }
    }
    nodes
        .iter()
        .map(|&t| eta.eval_detailed(&crate::history::ExtendedSegment::new(frozen, t)))
        .collect()
}

/// Delay schedule `r(t_n) = η(ū_{t_n})` on the given nodes, where `ū`
/// continues `frozen` constantly past its end. Nodes may reach at most
/// `η_ign` beyond the end of `frozen`.
pub fn delay_schedule<T: Scalar, S: Segment<T>>(eta: &DelayFunctional<T>, frozen: &S, nodes: &[T]) -> Result<Vec<T>> {
    Ok(schedule_detailed(eta, frozen, nodes)?.into_iter().map(|(v, _)| v).collect())
}

struct Plan<T> {
    h: T,
    macro_len: T,
    per_macro: usize,
    n_steps: usize,
}

fn plan<T: Scalar>(spec: &ProblemSpec<T>, opts: &SolverOptions<T>, t_end: T) -> Result<Plan<T>> {
    if !(opts.h > T::zero()) || !opts.h.is_finite() {
        return Err(SddError::invalid(format!("micro-step h must be positive, got {}", opts.h)));
    }
    if !(t_end > T::zero()) || !t_end.is_finite() {
        return Err(SddError::invalid(format!("final time must be positive, got {t_end}")));
    }
    let ign = spec.delay.eta_ign();
    let macro_len = opts.macro_step.unwrap_or(ign);
    if !(macro_len > T::zero()) || macro_len > ign * (T::one() + T::snap_tolerance()) {
        return Err(SddError::invalid(format!("macro-step must lie in (0, eta_ign = {ign}], got {macro_len}")));
    }
    let snap = T::snap_tolerance();
    let per_macro = (macro_len / opts.h - snap).ceil().to_usize().unwrap_or(1).max(1);
    let h = macro_len / T::from_usize_lossy(per_macro);
    let n_steps = (t_end / h - snap).ceil().to_usize().unwrap_or(1).max(1);
    Ok(Plan { h, macro_len, per_macro, n_steps })
}

fn node_time<T: Scalar>(n: usize, h: T) -> T {
    T::from_usize_lossy(n) * h
}

/// Integrates `spec` up to `t_end` (rounded up to the micro grid).
pub fn solve<T: Scalar>(spec: &ProblemSpec<T>, opts: &SolverOptions<T>, t_end: T) -> Result<Trajectory<T>> {
    if opts.mode == SolverMode::Picard {
        return solve_picard(spec, opts, t_end);
    }
    spec.validate()?;
    let plan = plan(spec, opts, t_end)?;
    let mut run = Run::start(spec, opts, &plan)?;
    let mut n = 0;
    while n < plan.n_steps {
        let len = plan.per_macro.min(plan.n_steps - n);
        let sched = run.schedule(n, len)?;
        let mut info = run.macro_info(n, len, &sched);
        for i in 0..len {
            run.step_explicit(n + i, &sched, i, &mut info)?;
        }
        run.macro_steps.push(info);
        n += len;
    }
    run.finish()
}

/// Integrates `spec` by Picard iteration of the discrete mild-solution map on
/// sub-intervals short enough for the map to contract. The fixed point equals
/// the [`SolverMode::Etd1`] trajectory.
pub fn solve_picard<T: Scalar>(spec: &ProblemSpec<T>, opts: &SolverOptions<T>, t_end: T) -> Result<Trajectory<T>> {
    spec.validate()?;
    let plan = plan(spec, opts, t_end)?;
    let rate = spec.contraction_rate();
    let alpha_cap = if rate > T::zero() { T::lit(0.5) / rate } else { plan.macro_len };
    let q = (alpha_cap.min(plan.macro_len) / plan.h + T::snap_tolerance())
        .floor()
        .to_usize()
        .unwrap_or(1)
        .clamp(1, plan.per_macro);
    let kappa = T::from_usize_lossy(q) * plan.h * rate;
    if kappa >= T::one() {
        return Err(SddError::invalid(format!(
            "micro-step {} too large for a contracting Picard map (kappa = {kappa})",
            plan.h
        )));
    }
    let mut run = Run::start(spec, opts, &plan)?;
    run.mode = SolverMode::Picard;
    let mut n = 0;
    while n < plan.n_steps {
        let len = plan.per_macro.min(plan.n_steps - n);
        let sched = run.schedule(n, len)?;
        let mut info = run.macro_info(n, len, &sched);
        info.picard_kappa = kappa.as_f64();
        let mut i = 0;
        while i < len {
            let sub = q.min(len - i);
            run.picard_subinterval(n + i, &sched[i..i + sub], opts, &mut info)?;
            i += sub;
        }
        run.macro_steps.push(info);
        n += len;
    }
    run.finish()
}

struct Run<'a, T> {
    spec: &'a ProblemSpec<T>,
    nl: Nonlinearity<T>,
    coef: EtdCoefficients<T>,
    h: T,
    macro_len: T,
    mode: SolverMode,
    times: Vec<T>,
    states: Vec<ModalVector<T>>,
    zero_index: usize,
    delays: Vec<T>,
    forcing: Vec<ModalVector<T>>,
    macro_steps: Vec<MacroStepInfo>,
}

impl<'a, T: Scalar> Run<'a, T> {
    fn start(spec: &'a ProblemSpec<T>, opts: &SolverOptions<T>, plan: &Plan<T>) -> Result<Self> {
        let (times, states) = spec.phi.on_solver_grid(plan.h)?;
        let zero_index = times.len() - 1;
        let cap = plan.n_steps + 1;
        let mut run = Self {
            spec,
            nl: spec.nonlinearity(),
            coef: EtdCoefficients::new(&spec.op, spec.d, plan.h),
            h: plan.h,
            macro_len: plan.macro_len,
            mode: opts.mode,
            times,
            states,
            zero_index,
            delays: Vec::with_capacity(cap),
            forcing: Vec::with_capacity(cap),
            macro_steps: Vec::new(),
        };
        run.times.reserve(cap);
        run.states.reserve(cap);
        Ok(run)
    }

    fn index(&self, n: usize) -> usize {
        self.zero_index + n
    }

    fn window(&self) -> T {
        self.spec.r
    }

    /// Schedule on the nodes `n..=n+len` frozen at node `n`.
    fn schedule(&self, n: usize, len: usize) -> Result<Vec<(T, bool)>> {
        let nodes: Vec<T> = (n..=n + len).map(|k| node_time(k, self.h)).collect();
        let idx = self.index(n);
        let frozen = PathView::new(&self.times[..=idx], &self.states[..=idx], self.window());
        schedule_detailed(&self.spec.delay, &frozen, &nodes)
    }

    fn macro_info(&self, n: usize, len: usize, sched: &[(T, bool)]) -> MacroStepInfo {
        MacroStepInfo {
            t_start: node_time(n, self.h).as_f64(),
            t_end: node_time(n + len, self.h).as_f64(),
            clamp_events: sched[..len].iter().filter(|s| s.1).count(),
            ..MacroStepInfo::default()
        }
    }

    fn lookup(&self, s: T) -> Result<ModalVector<T>> {
        interpolate(&self.times, &self.states, s)
    }

    fn forcing_at(&self, v: &ModalVector<T>) -> Result<ModalVector<T>> {
        self.nl.eval(&self.spec.op, v)
    }

    fn push(&mut self, n_next: usize, u: ModalVector<T>) -> Result<()> {
        let t = node_time(n_next, self.h);
        if !u.is_finite() {
            return Err(SddError::Divergence { t: t.as_f64() });
        }
        self.times.push(t);
        self.states.push(u);
        Ok(())
    }

    /// ETD1 or ETD2 step from node `n`; `sched[i]` is the delay at node `n`.
    fn step_explicit(&mut self, n: usize, sched: &[(T, bool)], i: usize, info: &mut MacroStepInfo) -> Result<()> {
        let t_n = node_time(n, self.h);
        let tau = sched[i].0;
        let f_n = self.forcing_at(&self.lookup(t_n - tau)?)?;
        let u_n = &self.states[self.index(n)];
        let pred = self.coef.etd1(u_n, &f_n);
        let next = match self.mode {
            SolverMode::Etd2 => {
                let t_next = node_time(n + 1, self.h);
                let s = t_next - sched[i + 1].0;
                let inside = s > t_n + T::snap_tolerance() * self.h;
                if inside {
                    self.vanishing_delay_corrector(u_n, &pred, &f_n, (s - t_n) / self.h, info)?
                } else {
                    let f_next = self.forcing_at(&self.lookup(s)?)?;
                    self.coef.correct(&pred, &f_next, &f_n)
                }
            }
            _ => pred,
        };
        self.delays.push(tau);
        self.forcing.push(f_n);
        self.push(n + 1, next)
    }

    /// Delayed time `t_n + w·h` lies inside the step being taken: start from
    /// the constant predictor `u_n` and refine by fixed-point iteration.
    fn vanishing_delay_corrector(
        &self,
        u_n: &ModalVector<T>,
        pred: &ModalVector<T>,
        f_n: &ModalVector<T>,
        w: T,
        info: &mut MacroStepInfo,
    ) -> Result<ModalVector<T>> {
        info.corrector_steps += 1;
        let mut current = self.coef.correct(pred, &self.forcing_at(u_n)?, f_n);
        let mut residual = f64::INFINITY;
        for _ in 0..CORRECTOR_MAX {
            let delayed = ModalVector::lerp(u_n, &current, w);
            let next = self.coef.correct(pred, &self.forcing_at(&delayed)?, f_n);
            residual = next.distance(&current).as_f64();
            current = next;
            if residual <= CORRECTOR_TOL {
                break;
            }
        }
        info.corrector_max_residual = info.corrector_max_residual.max(residual);
        if residual > CORRECTOR_TOL {
            info.corrector_warnings += 1;
        }
        Ok(current)
    }

    /// Solves nodes `n+1..=n+sched.len()` by Picard iteration.
    fn picard_subinterval(
        &mut self,
        n: usize,
        sched: &[(T, bool)],
        opts: &SolverOptions<T>,
        info: &mut MacroStepInfo,
    ) -> Result<()> {
        let q = sched.len();
        let t0 = node_time(n, self.h);
        let sub_times: Vec<T> = (n..=n + q).map(|k| node_time(k, self.h)).collect();
        let u0 = self.states[self.index(n)].clone();
        let mut iterate = vec![u0.clone(); q + 1];
        let mut forcing = Vec::with_capacity(q);
        let mut prev_diff: Option<f64> = None;
        let mut max_ratio = 0.0_f64;
        let mut converged = false;
        let mut diff = f64::INFINITY;
        let mut used = 0;
        for it in 1..=opts.picard_max_iter.max(1) {
            used = it;
            let mut next = Vec::with_capacity(q + 1);
            next.push(u0.clone());
            forcing.clear();
            for (i, &(tau, _)) in sched.iter().enumerate() {
                let s = sub_times[i] - tau;
                let delayed = if s <= t0 + T::snap_tolerance() * self.h {
                    self.lookup(s)?
                } else {
                    interpolate(&sub_times, &iterate, s)?
                };
                let f = self.forcing_at(&delayed)?;
                let u = self.coef.etd1(&next[i], &f);
                if !u.is_finite() {
                    return Err(SddError::Divergence { t: sub_times[i + 1].as_f64() });
                }
                next.push(u);
                forcing.push(f);
            }
            diff = next.iter().zip(&iterate).map(|(a, b)| a.distance(b).as_f64()).fold(0.0, f64::max);
            let scale = next.iter().map(|v| v.norm().as_f64()).fold(1.0, f64::max);
            if let Some(p) = prev_diff {
                if p > 100.0 * f64::EPSILON * scale && diff > 0.0 {
                    max_ratio = max_ratio.max(diff / p);
                }
            }
            prev_diff = Some(diff);
            iterate = next;
            if diff <= opts.picard_tol.as_f64() * scale {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(SddError::NonConvergence { iterations: used, residual: diff });
        }
        info.picard_iterations.push(used);
        info.picard_max_ratio = info.picard_max_ratio.max(max_ratio);
        for (i, (u, f)) in iterate.into_iter().skip(1).zip(forcing).enumerate() {
            self.delays.push(sched[i].0);
            self.forcing.push(f);
            self.push(n + i + 1, u)?;
        }
        Ok(())
    }

    fn finish(mut self) -> Result<Trajectory<T>> {
        let last = self.times.len() - 1;
        let n_last = last - self.zero_index;
        let sched = self.schedule(n_last, 0)?;
        let tau = sched[0].0;
        let f = self.forcing_at(&self.lookup(self.times[last] - tau)?)?;
        self.delays.push(tau);
        self.forcing.push(f);
        Ok(Trajectory {
            times: self.times,
            states: self.states,
            zero_index: self.zero_index,
            delays: self.delays,
            forcing: self.forcing,
            macro_steps: self.macro_steps,
            h: self.h,
            macro_len: self.macro_len,
            window: self.spec.r,
            mode: self.mode,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::delay::InnerMap;
    use std::f64::consts::PI;

    fn decay_spec(n_modes: usize, d: f64, phi0: ModalVector<f64>) -> ProblemSpec<f64> {
        let op = SpectralOperator::dirichlet_laplacian_1d(PI, n_modes, 2 * n_modes).unwrap();
        let delay = DelayFunctional::constant(0.5, 1.0).unwrap();
        let phi = InitialFunction::constant(1.0, phi0).unwrap();
        ProblemSpec::new(op, d, delay, BirthFunction::Zero, Kernel::Dirac, phi).unwrap()
    }

    fn nicholson(n_modes: usize) -> ProblemSpec<f64> {
        let op = SpectralOperator::dirichlet_laplacian_1d(PI, n_modes, 4 * n_modes).unwrap();
        let delay = DelayFunctional::point(InnerMap::AffineNorm { a: 0.2, b: 0.3 }, 0.5, None, 1.0).unwrap();
        let phi = InitialFunction::from_fn(1.0, 41, |th: f64| {
            let mut v = ModalVector::zeros(n_modes);
            v[0] = 1.0 + 0.5 * (3.0 * th).sin();
            v[1] = 0.3 * th;
            v
        })
        .unwrap();
        ProblemSpec::new(op, 0.5, delay, BirthFunction::Nicholson { p: 2.0 }, Kernel::gaussian(0.1).unwrap(), phi)
            .unwrap()
    }

    fn linear_constant(c: f64, tau: f64, n_modes: usize) -> ProblemSpec<f64> {
        let op = SpectralOperator::dirichlet_laplacian_1d(PI, n_modes, 2 * n_modes).unwrap();
        let delay = DelayFunctional::constant(tau, 1.0).unwrap();
        let phi = InitialFunction::from_fn(1.0, 21, |th: f64| {
            ModalVector::new((0..n_modes).map(|k| (1.0 + th) / (1.0 + k as f64)).collect())
        })
        .unwrap();
        ProblemSpec::new(op, 0.0, delay, BirthFunction::Linear { c }, Kernel::Dirac, phi).unwrap()
    }

    #[test]
    fn homogeneous_step_is_exact_decay() {
        let op = SpectralOperator::dirichlet_laplacian_1d(PI, 3, 6).unwrap();
        let u = ModalVector::new(vec![1.0, -2.0, 0.5]);
        let out = step_micro_etd1(&op, 0.25, 0.1, &u, &op.zeros());
        let exact = op.apply_semigroup(0.25, 0.1, &u).unwrap();
        assert_eq!(out, exact);
    }

    #[test]
    fn scalar_forced_ode_is_exact() {
        // u' = −u + 1 with λ₁ = 1, d = 0
        let op = SpectralOperator::dirichlet_laplacian_1d(PI, 1, 2).unwrap();
        for h in [1e-3, 0.1, 0.7, 2.0] {
            let out = step_micro_etd1(&op, 0.0, h, &ModalVector::new(vec![0.0]), &ModalVector::new(vec![1.0]));
            assert!((out[0] - (1.0 - (-h as f64).exp())).abs() < 1e-15);
        }
    }

    #[test]
    fn small_rate_uses_series() {
        let op = SpectralOperator::<f64>::dirichlet_laplacian_1d(1e5, 1, 2).unwrap();
        assert!(op.lambda_1() < 1e-8);
        let c = EtdCoefficients::new(&op, 0.0, 0.5);
        assert!((c.phi1[0] - 0.5).abs() < 1e-8);
        assert!((c.phi2[0] - 0.25).abs() < 1e-8);
    }

    #[test]
    fn exact_decay_of_first_mode() {
        let spec = decay_spec(4, 0.0, ModalVector::unit(4, 1));
        let traj = solve(&spec, &SolverOptions::new(1e-2), 1.0).unwrap();
        let rel = (traj.final_state().norm() - (-1.0f64).exp()).abs() / (-1.0f64).exp();
        assert!(rel < 1e-10, "{rel}");
        assert!((traj.final_time() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn grid_and_bookkeeping() {
        let spec = nicholson(6);
        let traj = solve(&spec, &SolverOptions::new(0.03), 2.0).unwrap();
        // h is reduced to divide η_ign = 0.5
        assert!((traj.h() - 0.5 / 17.0).abs() < 1e-15);
        assert!(traj.times().windows(2).all(|w| w[1] > w[0]));
        assert_eq!(traj.times()[traj.zero_index()], 0.0);
        assert_eq!(traj.delays().len(), traj.forward_times().len());
        assert_eq!(traj.forcing().len(), traj.forward_times().len());
        assert!(traj.final_time() >= 2.0 - 1e-12);
        for (t, v) in traj.times()[..=traj.zero_index()].iter().zip(traj.states()) {
            assert_eq!(v, &spec.phi.eval(*t).unwrap());
        }
        assert!(traj.times()[0] <= -1.0);
        let m = traj.macro_steps();
        assert_eq!(m.len(), 4);
        assert!(m.windows(2).all(|w| w[0].t_end == w[1].t_start));
    }

    #[test]
    fn schedule_is_h_consistent() {
        let spec = nicholson(6);
        for mode in [SolverMode::Etd1, SolverMode::Etd2] {
            let traj = solve(&spec, &SolverOptions::new(0.01).with_mode(mode), 3.0).unwrap();
            assert_eq!(traj.h_consistency(&spec.delay).unwrap(), 0.0);
        }
        let integral = DelayFunctional::integral_of_p(InnerMap::AffineNorm { a: 0.1, b: 0.4 }, 0.3, 1.0).unwrap();
        let spec = ProblemSpec { delay: integral, ..nicholson(6) };
        let traj = solve(&spec, &SolverOptions::new(0.01), 3.0).unwrap();
        assert_eq!(traj.h_consistency(&spec.delay).unwrap(), 0.0);
    }

    #[test]
    fn schedule_beyond_ignore_horizon_is_rejected() {
        let spec = nicholson(4);
        let hist = crate::history::HistorySegment::from_initial(&spec.phi);
        assert!(delay_schedule(&spec.delay, &hist, &[0.0, 0.25, 0.5]).is_ok());
        assert!(delay_schedule(&spec.delay, &hist, &[0.0, 0.6]).is_err());
        let too_long = SolverOptions::new(0.01).with_macro_step(0.6);
        assert!(solve(&spec, &too_long, 1.0).is_err());
    }

    #[test]
    fn constant_schedules() {
        let spec = linear_constant(0.5, 0.4, 3);
        let hist = crate::history::HistorySegment::from_initial(&spec.phi);
        assert_eq!(delay_schedule(&spec.delay, &hist, &[0.0, 0.3, 0.9]).unwrap(), vec![0.4; 3]);
        let point = DelayFunctional::point(InnerMap::AffineNorm { a: 0.1, b: 0.2 }, 1.0, None, 1.0).unwrap();
        let flat = InitialFunction::constant(1.0, ModalVector::new(vec![0.3, 0.4, 0.0])).unwrap();
        let hist = crate::history::HistorySegment::from_initial(&flat);
        let s: Vec<f64> = delay_schedule(&point, &hist, &[0.0, 0.5, 1.0]).unwrap();
        assert!(s.iter().all(|&v| (v - 0.2).abs() < 1e-15));
    }

    #[test]
    fn seams_share_values_and_restart_matches() {
        let spec = nicholson(6);
        let opts = SolverOptions::new(0.01);
        let full = solve(&spec, &opts, 3.0).unwrap();
        let first = solve(&spec, &opts, 1.0).unwrap();
        let phi1 = first.segment_at(1.0, 101).unwrap();
        let second = solve(&spec.with_phi(phi1).unwrap(), &opts, 2.0).unwrap();
        let a = full.final_state();
        let b = second.final_state();
        assert!(a.distance(b) < 1e-9, "{}", a.distance(b));
        for (j, &t) in first.forward_times().iter().enumerate() {
            let k = full.zero_index() + j;
            assert_eq!(full.times()[k], t);
            assert_eq!(&full.states()[k], &first.forward_states()[j]);
        }
    }

    #[test]
    fn runs_are_deterministic() {
        let spec = nicholson(5);
        let opts = SolverOptions::new(0.02).with_mode(SolverMode::Etd2);
        let a = solve(&spec, &opts, 2.0).unwrap();
        let b = solve(&spec, &opts, 2.0).unwrap();
        assert_eq!(a.states(), b.states());
        assert_eq!(a.sup_deviation(&b).unwrap(), 0.0);
    }

    #[test]
    fn picard_matches_etd1() {
        for spec in [linear_constant(0.5, 0.5, 4), nicholson(6)] {
            let opts = SolverOptions::new(0.01);
            let etd = solve(&spec, &opts, 2.0).unwrap();
            let pic = solve(&spec, &opts.with_mode(SolverMode::Picard), 2.0).unwrap();
            assert!(etd.sup_deviation(&pic).unwrap() < 1e-8);
            assert!(pic.picard_max_ratio() <= pic.picard_kappa() * 1.1);
            assert!(pic.picard_kappa() < 1.0);
        }
    }

    #[test]
    fn picard_contracts_on_fast_delay() {
        // a delay shorter than the sub-interval forces genuine iteration
        let mut spec = nicholson(6);
        spec.delay = DelayFunctional::point(InnerMap::AffineNorm { a: 0.0, b: 0.0 }, 0.5, None, 1.0)
            .unwrap()
            .with_floor(0.01)
            .unwrap();
        let opts = SolverOptions::new(0.005).with_mode(SolverMode::Picard);
        let pic = solve(&spec, &opts, 1.0).unwrap();
        let its: usize = pic.macro_steps().iter().flat_map(|m| m.picard_iterations.iter()).copied().max().unwrap();
        assert!(its > 2);
        assert!(pic.picard_max_ratio() > 0.0);
        assert!(pic.picard_max_ratio() <= pic.picard_kappa() * 1.1);
        let etd = solve(&spec, &SolverOptions::new(0.005), 1.0).unwrap();
        assert!(etd.sup_deviation(&pic).unwrap() < 1e-8);
    }

    #[test]
    fn picard_zero_data_converges_immediately() {
        let mut spec = nicholson(4);
        spec.phi = InitialFunction::constant(1.0, ModalVector::zeros(4)).unwrap();
        let pic = solve(&spec, &SolverOptions::new(0.05).with_mode(SolverMode::Picard), 1.0).unwrap();
        assert!(pic.states().iter().all(|v| v.norm() == 0.0));
        assert!(pic.macro_steps().iter().flat_map(|m| m.picard_iterations.iter()).all(|&i| i == 1));
    }

    #[test]
    fn picard_iteration_cap_is_an_error() {
        let mut spec = nicholson(4);
        spec.delay = DelayFunctional::point(InnerMap::AffineNorm { a: 0.0, b: 0.0 }, 0.5, None, 1.0)
            .unwrap()
            .with_floor(0.001)
            .unwrap();
        let mut opts = SolverOptions::new(0.01).with_mode(SolverMode::Picard);
        opts.picard_max_iter = 2;
        assert!(matches!(solve(&spec, &opts, 1.0), Err(SddError::NonConvergence { .. })));
    }

    #[test]
    fn vanishing_delay_uses_corrector() {
        let mut spec = nicholson(6);
        spec.delay = DelayFunctional::point(InnerMap::AffineNorm { a: 0.0, b: 0.0 }, 0.5, None, 1.0).unwrap();
        let opts = SolverOptions::new(0.01).with_mode(SolverMode::Etd2);
        let traj = solve(&spec, &opts, 1.0).unwrap();
        assert!(traj.delays().iter().all(|&v| v == 0.0));
        assert!(traj.corrector_steps() > 0);
        assert_eq!(traj.corrector_warnings(), 0);
        let fine = solve(&spec, &SolverOptions::new(0.0005).with_mode(SolverMode::Etd2), 1.0).unwrap();
        let err = traj.final_state().distance(fine.final_state());
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn etd2_is_second_order_on_linear_problem() {
        let spec = linear_constant(0.5, 0.5, 4);
        let errs: Vec<f64> = [0.02, 0.01]
            .iter()
            .map(|&h| {
                let coarse = solve(&spec, &SolverOptions::new(h).with_mode(SolverMode::Etd2), 2.0).unwrap();
                let fine = solve(&spec, &SolverOptions::new(h / 16.0).with_mode(SolverMode::Etd2), 2.0).unwrap();
                coarse.final_state().distance(fine.final_state())
            })
            .collect();
        let ratio = errs[0] / errs[1];
        assert!(ratio > 3.0, "{errs:?}");
    }

    #[test]
    fn divergence_is_reported() {
        let op = SpectralOperator::dirichlet_laplacian_1d(1e3, 1, 2).unwrap();
        let delay = DelayFunctional::constant(0.0, 1.0).unwrap();
        let phi = InitialFunction::constant(1.0, ModalVector::new(vec![1.0])).unwrap();
        let spec = ProblemSpec::new(op, 0.0, delay, BirthFunction::Linear { c: 1e3 }, Kernel::Dirac, phi).unwrap();
        let err = solve(&spec, &SolverOptions::new(0.1), 100.0).unwrap_err();
        assert!(matches!(err, SddError::Divergence { .. }));
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let spec = nicholson(4);
        let short_phi = InitialFunction::constant(0.5, ModalVector::zeros(4)).unwrap();
        assert!(spec.with_phi(short_phi).is_err());
        let wrong_modes = InitialFunction::constant(1.0, ModalVector::zeros(3)).unwrap();
        assert!(spec.with_phi(wrong_modes).is_err());
        assert!(solve(&spec, &SolverOptions::new(-0.1), 1.0).is_err());
        assert!(solve(&spec, &SolverOptions::new(0.1), 0.0).is_err());
    }

    #[test]
    fn f32_solve_runs() {
        let op = SpectralOperator::<f32>::dirichlet_laplacian_1d(std::f32::consts::PI, 4, 8).unwrap();
        let delay = DelayFunctional::constant(0.5f32, 1.0).unwrap();
        let phi = InitialFunction::constant(1.0f32, ModalVector::unit(4, 1)).unwrap();
        let spec = ProblemSpec::new(op, 0.0, delay, BirthFunction::Zero, Kernel::Dirac, phi).unwrap();
        let traj = solve(&spec, &SolverOptions::new(0.01f32), 1.0).unwrap();
        assert!((traj.final_state().norm() - (-1.0f32).exp()).abs() < 1e-5);
    }
}
