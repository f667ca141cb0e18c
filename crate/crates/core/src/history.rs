//! Solution segments `u_t` over a trailing window and the initial function `φ`.
//!
//! All evaluation is piecewise linear in time. Query times that land within a
//! relative `√ε` of a sample time snap onto that sample, which keeps values read
//! at nodes bit-exact even when the query time was produced by floating-point
//! arithmetic (`t_n − r_k`).

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Result, SddError};
use crate::scalar::Scalar;
use crate::spectral::{ModalVector, SpectralOperator};

/// Read access to a time-indexed solution record ending at `t_now`.
pub trait Segment<T: Scalar> {
    fn t_now(&self) -> T;

    /// Nominal window length `r`.
    fn window(&self) -> T;

    /// Earliest time that can be evaluated.
    fn t_start(&self) -> T;

    /// Value at time `s`; never extrapolates.
    fn eval_at(&self, s: T) -> Result<ModalVector<T>>;

    /// Sample times strictly inside `(lo, hi)`, in increasing order.
    fn sample_times_between(&self, lo: T, hi: T) -> Vec<T>;
}

pub(crate) fn interpolate<T: Scalar>(times: &[T], values: &[ModalVector<T>], s: T) -> Result<ModalVector<T>> {
    let n = times.len();
    let out_of_window = || SddError::OutOfWindow {
        s: s.as_f64(),
        lo: times.first().map_or(f64::NAN, |t| t.as_f64()),
        hi: times.last().map_or(f64::NAN, |t| t.as_f64()),
    };
    if n == 0 || !s.is_finite() {
        return Err(out_of_window());
    }
    if n == 1 {
        let tol = T::snap_tolerance() * times[0].abs().max(T::one());
        return if (s - times[0]).abs() <= tol { Ok(values[0].clone()) } else { Err(out_of_window()) };
    }
    let snap = T::snap_tolerance();
    let (first, last) = (times[0], times[n - 1]);
    if s < first - snap * (times[1] - first) || s > last + snap * (last - times[n - 2]) {
        return Err(out_of_window());
    }
    let s = s.max(first).min(last);
    let i = times.partition_point(|&t| t <= s);
    if i >= n {
        return Ok(values[n - 1].clone());
    }
    let (ta, tb) = (times[i - 1], times[i]);
    let w = (s - ta) / (tb - ta);
    if w <= snap {
        Ok(values[i - 1].clone())
    } else if w >= T::one() - snap {
        Ok(values[i].clone())
    } else {
        Ok(ModalVector::lerp(&values[i - 1], &values[i], w))
    }
}

pub(crate) fn interior_times<T: Scalar>(times: &[T], lo: T, hi: T) -> Vec<T> {
    if times.len() < 2 || !(hi > lo) {
        return Vec::new();
    }
    let snap = T::snap_tolerance();
    let a = times.partition_point(|&t| t <= lo);
    let b = times.partition_point(|&t| t < hi);
    (a..b)
        .filter(|&i| {
            let t = times[i];
            let gap = if i + 1 < times.len() { times[i + 1] - t } else { t - times[i - 1] };
            t - lo > snap * gap && hi - t > snap * gap
        })
        .map(|i| times[i])
        .collect()
}

/// The state `u_t`: samples covering at least `[t_now − r, t_now]`.
#[derive(Clone, Debug)]
pub struct HistorySegment<T> {
    window: T,
    times: Vec<T>,
    values: Vec<ModalVector<T>>,
    // samples before `start` have been retired and await compaction
    start: usize,
}

impl<T: Scalar> HistorySegment<T> {
    pub fn from_samples(window: T, times: Vec<T>, values: Vec<ModalVector<T>>) -> Result<Self> {
        if !(window > T::zero()) {
            return Err(SddError::invalid(format!("window length must be positive, got {window}")));
        }
        if times.is_empty() || times.len() != values.len() {
            return Err(SddError::invalid("history needs matching, non-empty time and value arrays"));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(SddError::invalid("history sample times must be strictly increasing"));
        }
        let span = times[times.len() - 1] - times[0];
        if span < window * (T::one() - T::snap_tolerance()) {
            return Err(SddError::invalid(format!("history spans {span}, shorter than window {window}")));
        }
        Ok(Self { window, times, values, start: 0 })
    }

    /// History holding exactly the samples of `φ` on `[−r, 0]`.
    pub fn from_initial(phi: &InitialFunction<T>) -> Self {
        Self {
            window: phi.window(),
            times: phi.theta_grid(),
            values: phi.samples().to_vec(),
            start: 0,
        }
    }

    pub fn times(&self) -> &[T] {
        &self.times[self.start..]
    }

    pub fn values(&self) -> &[ModalVector<T>] {
        &self.values[self.start..]
    }

    pub fn len(&self) -> usize {
        self.times.len() - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn last(&self) -> &ModalVector<T> {
        self.values.last().expect("history is never empty")
    }

    /// Appends a sample and retires those older than `t_now − r − (one cell)`.
    pub fn push(&mut self, t_new: T, v: ModalVector<T>) -> Result<()> {
        let t_prev = self.t_now();
        if !(t_new > t_prev) {
            return Err(SddError::invalid(format!(
                "history times must increase: pushing {t_new} after {t_prev}"
            )));
        }
        let cell = t_new - t_prev;
        self.times.push(t_new);
        self.values.push(v);
        let keep_from = t_new - self.window - cell;
        while self.times.len() - self.start >= 2 && self.times[self.start + 1] <= keep_from {
            self.start += 1;
        }
        if self.start > 64 && self.start * 2 > self.times.len() {
            self.times.drain(..self.start);
            self.values.drain(..self.start);
            self.start = 0;
        }
        Ok(())
    }
}

impl<T: Scalar> Segment<T> for HistorySegment<T> {
    fn t_now(&self) -> T {
        *self.times.last().expect("history is never empty")
    }

    fn window(&self) -> T {
        self.window
    }

    fn t_start(&self) -> T {
        self.times[self.start]
    }

    fn eval_at(&self, s: T) -> Result<ModalVector<T>> {
        interpolate(self.times(), self.values(), s)
    }

    fn sample_times_between(&self, lo: T, hi: T) -> Vec<T> {
        interior_times(self.times(), lo, hi)
    }
}

/// A segment continued constantly at its endpoint value up to a later `t_now`.
///
/// This is the extension `φ̄` shifted to the start of a macro-step.
#[derive(Clone, Copy, Debug)]
pub struct ExtendedSegment<'a, S, T> {
    base: &'a S,
    t_now: T,
}

impl<'a, T: Scalar, S: Segment<T>> ExtendedSegment<'a, S, T> {
    pub fn new(base: &'a S, t_now: T) -> Self {
        Self { base, t_now: t_now.max(base.t_now()) }
    }
}

impl<'a, T: Scalar, S: Segment<T>> Segment<T> for ExtendedSegment<'a, S, T> {
    fn t_now(&self) -> T {
        self.t_now
    }

    fn window(&self) -> T {
        self.base.window()
    }

    fn t_start(&self) -> T {
        self.base.t_start()
    }

    fn eval_at(&self, s: T) -> Result<ModalVector<T>> {
        let base_end = self.base.t_now();
        if s <= base_end {
            return self.base.eval_at(s);
        }
        let tol = T::snap_tolerance() * (self.t_now - base_end).max(T::epsilon());
        if s <= self.t_now + tol {
            self.base.eval_at(base_end)
        } else {
            Err(SddError::OutOfWindow {
                s: s.as_f64(),
                lo: self.t_start().as_f64(),
                hi: self.t_now.as_f64(),
            })
        }
    }

    fn sample_times_between(&self, lo: T, hi: T) -> Vec<T> {
        self.base.sample_times_between(lo, hi)
    }
}

/// Borrowed view of stored samples treated as a segment ending at `t_now`.
#[derive(Clone, Copy, Debug)]
pub struct PathView<'a, T> {
    times: &'a [T],
    values: &'a [ModalVector<T>],
    window: T,
}

impl<'a, T: Scalar> PathView<'a, T> {
    pub fn new(times: &'a [T], values: &'a [ModalVector<T>], window: T) -> Self {
        assert_eq!(times.len(), values.len());
        assert!(!times.is_empty());
        Self { times, values, window }
    }
}

impl<'a, T: Scalar> Segment<T> for PathView<'a, T> {
    fn t_now(&self) -> T {
        self.times[self.times.len() - 1]
    }

    fn window(&self) -> T {
        self.window
    }

    fn t_start(&self) -> T {
        self.times[0]
    }

    fn eval_at(&self, s: T) -> Result<ModalVector<T>> {
        interpolate(self.times, self.values, s)
    }

    fn sample_times_between(&self, lo: T, hi: T) -> Vec<T> {
        interior_times(self.times, lo, hi)
    }
}

/// `||u_t||_C`: the maximum of `||u(s)||` over `s ∈ [t_now − r, t_now]`.
///
/// Norms of a piecewise-linear path are convex on each piece, so the maximum
/// over the nodes plus the left endpoint is exact for the interpolant.
pub fn segment_sup_norm<T: Scalar, S: Segment<T>>(seg: &S) -> T {
    let hi = seg.t_now();
    let lo = (hi - seg.window()).max(seg.t_start());
    let mut best = T::zero();
    let mut visit = |s: T| {
        if let Ok(v) = seg.eval_at(s) {
            best = best.max(v.norm());
        }
    };
    visit(lo);
    for s in seg.sample_times_between(lo, hi) {
        visit(s);
    }
    visit(hi);
    best
}

/// The extension `φ̄`: `φ` on `[−r, 0]`, constant at `φ(0)` on `(0, η_ign)`.
pub fn extend<T: Scalar>(phi: &InitialFunction<T>, eta_ign: T) -> Result<HistorySegment<T>> {
    if !(eta_ign > T::zero()) {
        return Err(SddError::invalid(format!("ignore horizon must be positive, got {eta_ign}")));
    }
    let mut h = HistorySegment::from_initial(phi);
    let end = phi.at_zero().clone();
    h.times.push(eta_ign);
    h.values.push(end);
    Ok(h)
}

/// The initial function `φ ∈ C([−r, 0]; L²)`, sampled on a uniform θ-grid.
#[derive(Clone, Debug, PartialEq)]
pub struct InitialFunction<T> {
    window: T,
    samples: Vec<ModalVector<T>>,
}

impl<T: Scalar> InitialFunction<T> {
    /// `samples[i]` is `φ(−r + i·r/(n−1))`; at least two samples.
    pub fn from_samples(window: T, samples: Vec<ModalVector<T>>) -> Result<Self> {
        if !(window > T::zero()) {
            return Err(SddError::invalid(format!("window length must be positive, got {window}")));
        }
        if samples.len() < 2 {
            return Err(SddError::invalid("initial function needs at least two samples"));
        }
        let n = samples[0].len();
        if samples.iter().any(|v| v.len() != n) {
            return Err(SddError::invalid("initial function samples have inconsistent mode counts"));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(SddError::invalid("initial function contains non-finite values"));
        }
        Ok(Self { window, samples })
    }

    pub fn constant(window: T, v: ModalVector<T>) -> Result<Self> {
        Self::from_samples(window, vec![v.clone(), v])
    }

    /// Samples `f(θ)` on `n` uniform points of `[−r, 0]`.
    pub fn from_fn(window: T, n: usize, f: impl Fn(T) -> ModalVector<T>) -> Result<Self> {
        if n < 2 {
            return Err(SddError::invalid("initial function needs at least two samples"));
        }
        let grid = theta_grid(window, n);
        Self::from_samples(window, grid.into_iter().map(f).collect())
    }

    /// Linear resampling of arbitrary increasing θ nodes spanning `[−r, 0]`.
    pub fn resample(window: T, thetas: &[T], values: &[ModalVector<T>], n: usize) -> Result<Self> {
        if thetas.len() != values.len() || thetas.len() < 2 {
            return Err(SddError::invalid("need matching θ and value arrays with at least two rows"));
        }
        if thetas.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(SddError::invalid("θ column must be strictly increasing"));
        }
        let tol = T::snap_tolerance() * window;
        if (thetas[0] + window).abs() > tol || thetas[thetas.len() - 1].abs() > tol {
            return Err(SddError::invalid(format!(
                "θ column must span [-{window}, 0], got [{}, {}]",
                thetas[0],
                thetas[thetas.len() - 1]
            )));
        }
        let grid = theta_grid(window, n.max(2));
        let samples = grid
            .into_iter()
            .map(|th| interpolate(thetas, values, th))
            .collect::<Result<Vec<_>>>()?;
        Self::from_samples(window, samples)
    }

    pub fn window(&self) -> T {
        self.window
    }

    pub fn n_modes(&self) -> usize {
        self.samples[0].len()
    }

    pub fn samples(&self) -> &[ModalVector<T>] {
        &self.samples
    }

    pub fn theta_grid(&self) -> Vec<T> {
        theta_grid(self.window, self.samples.len())
    }

    pub fn at_zero(&self) -> &ModalVector<T> {
        &self.samples[self.samples.len() - 1]
    }

    /// `φ(θ)`; arguments below `−r` read `φ(−r)`.
    pub fn eval(&self, theta: T) -> Result<ModalVector<T>> {
        let th = theta.max(-self.window);
        interpolate(&self.theta_grid(), &self.samples, th)
    }

    pub fn sup_norm(&self) -> T {
        self.samples.iter().map(|v| v.norm()).fold(T::zero(), T::max)
    }

    /// `φ + ε·ψ` on the union-free common grid of `self` (ψ is resampled).
    pub fn perturbed(&self, psi: &InitialFunction<T>, eps: T) -> Result<Self> {
        if psi.n_modes() != self.n_modes() {
            return Err(SddError::invalid("perturbation has a different number of modes"));
        }
        let grid = self.theta_grid();
        let samples = grid
            .iter()
            .zip(&self.samples)
            .map(|(&th, v)| {
                let mut out = v.clone();
                out.axpy(eps, &psi.eval(th)?);
                Ok(out)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_samples(self.window, samples)
    }

    pub fn scaled(&self, factor: T) -> Self {
        Self { window: self.window, samples: self.samples.iter().map(|v| v.scaled(factor)).collect() }
    }

    /// Samples `φ` at `k·h` for `k = −K..=0` with `K = ⌈r/h⌉`; the first node
    /// may sit below `−r` and then holds `φ(−r)`.
    pub fn on_solver_grid(&self, h: T) -> Result<(Vec<T>, Vec<ModalVector<T>>)> {
        if !(h > T::zero()) {
            return Err(SddError::invalid(format!("step must be positive, got {h}")));
        }
        let k = (self.window / h - T::snap_tolerance()).ceil().to_i64().unwrap_or(0).max(1);
        let grid = self.theta_grid();
        let mut times = Vec::with_capacity(k as usize + 1);
        let mut values = Vec::with_capacity(k as usize + 1);
        for i in -k..=0 {
            let t = T::from_i64(i).expect("scalar conversion") * h;
            times.push(t);
            values.push(interpolate(&grid, &self.samples, t.max(-self.window))?);
        }
        Ok((times, values))
    }

    /// Reads a CSV whose first column is θ and whose remaining columns are
    /// either modal coefficients (header `mode_1, mode_2, …`) or nodal
    /// values on the operator's grid (header `x_1, x_2, …`).
    pub fn from_csv_str(text: &str, window: T, op: &SpectralOperator<T>, n_theta: usize) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'));
        let header = lines.next().ok_or_else(|| SddError::invalid("empty initial-function CSV"))?;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        if cols.len() < 2 || !cols[0].eq_ignore_ascii_case("theta") {
            return Err(SddError::invalid("CSV header must start with `theta`"));
        }
        let modal = if cols[1].starts_with("mode") {
            true
        } else if cols[1].starts_with('x') || cols[1].starts_with("grid") {
            false
        } else {
            return Err(SddError::invalid(format!("cannot tell modal from nodal columns by `{}`", cols[1])));
        };
        let width = cols.len() - 1;
        let expected = if modal { op.n_modes() } else { op.n_grid() };
        if width != expected {
            return Err(SddError::invalid(format!("CSV has {width} data columns, expected {expected}")));
        }
        let mut thetas = Vec::new();
        let mut values = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let row = line
                .split(',')
                .map(|c| c.trim().parse::<f64>().map(T::lit))
                .collect::<std::result::Result<Vec<T>, _>>()
                .map_err(|e| SddError::invalid(format!("CSV row {}: {e}", lineno + 2)))?;
            if row.len() != width + 1 {
                return Err(SddError::invalid(format!("CSV row {} has {} columns", lineno + 2, row.len())));
            }
            thetas.push(row[0]);
            let v = if modal { ModalVector::new(row[1..].to_vec()) } else { op.to_modal(&row[1..])? };
            values.push(v);
        }
        Self::resample(window, &thetas, &values, n_theta)
    }

    pub fn from_csv_path(path: &Path, window: T, op: &SpectralOperator<T>, n_theta: usize) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_csv_str(&text, window, op, n_theta)
    }

    /// Modal CSV in the format accepted by [`InitialFunction::from_csv_str`].
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("theta");
        for k in 1..=self.n_modes() {
            let _ = write!(out, ",mode_{k}");
        }
        out.push('\n');
        for (th, v) in self.theta_grid().iter().zip(&self.samples) {
            let _ = write!(out, "{:.16e}", th.as_f64());
            for c in v.iter() {
                let _ = write!(out, ",{:.16e}", c.as_f64());
            }
            out.push('\n');
        }
        out
    }
}

fn theta_grid<T: Scalar>(window: T, n: usize) -> Vec<T> {
    let step = window / T::from_usize_lossy(n - 1);
    (0..n)
        .map(|i| if i + 1 == n { T::zero() } else { -window + T::from_usize_lossy(i) * step })
        .collect()
}
