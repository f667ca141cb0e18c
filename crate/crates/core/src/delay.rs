//! State-dependent delay functionals `η : C → [0, r]`.
//!
//! Every shipped constructor only reads the history at times `≤ t_now − η_ign`,
//! so two histories that agree on `[t_now − r, t_now − η_ign]` give the same
//! delay. [`check_h`] verifies this on random pairs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Result, SddError};
use crate::history::{HistorySegment, Segment};
use crate::scalar::Scalar;
use crate::spectral::ModalVector;

/// Named inner maps `p : L² → [0, r]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum InnerMap<T> {
    /// `clamp(a + b·||v||, 0, r)`
    AffineNorm { a: T, b: T },
    /// `clamp(a + b·⟨v, e₁⟩, 0, r)`
    MeanValue { a: T, b: T },
}

impl<T: Scalar> InnerMap<T> {
    pub fn from_name(name: &str, a: T, b: T) -> Result<Self> {
        match name {
            "affine_norm" => Ok(InnerMap::AffineNorm { a, b }),
            "mean_value" => Ok(InnerMap::MeanValue { a, b }),
            other => Err(SddError::invalid(format!(
                "unknown inner map `{other}` (expected affine_norm or mean_value)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            InnerMap::AffineNorm { .. } => "affine_norm",
            InnerMap::MeanValue { .. } => "mean_value",
        }
    }

    pub fn params(&self) -> (T, T) {
        match *self {
            InnerMap::AffineNorm { a, b } | InnerMap::MeanValue { a, b } => (a, b),
        }
    }

    pub fn eval(&self, v: &ModalVector<T>, cap: T) -> T {
        self.eval_tracked(v, cap).0
    }

    /// Value and whether the `[0, cap]` clamp changed it.
    pub fn eval_tracked(&self, v: &ModalVector<T>, cap: T) -> (T, bool) {
        let raw = match *self {
            InnerMap::AffineNorm { a, b } => a + b * v.norm(),
            InnerMap::MeanValue { a, b } => a + b * v.as_slice().first().copied().unwrap_or_else(T::zero),
        };
        let value = raw.max(T::zero()).min(cap);
        (value, value != raw)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DelayVariant {
    Point,
    MultiPoint,
    IntegralOfP,
    POfIntegral,
    Constant,
}

#[derive(Clone, Debug, PartialEq)]
enum DelayKind<T> {
    /// `Σ p_k(φ(−r_k))`
    Points(Vec<(InnerMap<T>, T)>),
    /// `∫_{−r}^{−η_ign} p(φ(θ)) dθ`
    IntegralOfP(InnerMap<T>),
    /// `p(∫_{−r}^{−η_ign} φ(θ) dθ)`
    POfIntegral(InnerMap<T>),
    Constant(T),
}

#[derive(Clone, Debug, PartialEq)]
pub struct DelayFunctional<T> {
    variant: DelayVariant,
    kind: DelayKind<T>,
    window: T,
    eta_ign: T,
    eta_min: Option<T>,
}

impl<T: Scalar> DelayFunctional<T> {
    fn validated_ign(window: T, eta_ign: T) -> Result<()> {
        if !(window > T::zero()) || !window.is_finite() {
            return Err(SddError::invalid(format!("delay window r must be positive, got {window}")));
        }
        if !(eta_ign > T::zero()) || eta_ign > window {
            return Err(SddError::invalid(format!("eta_ign must lie in (0, r = {window}], got {eta_ign}")));
        }
        Ok(())
    }

    /// `η(φ) = p(φ(−r_k))`. The declared ignore horizon defaults to `r_k`.
    pub fn point(map: InnerMap<T>, offset: T, eta_ign: Option<T>, window: T) -> Result<Self> {
        let mut f = Self::multi_point(vec![(map, offset)], eta_ign, window)?;
        f.variant = DelayVariant::Point;
        Ok(f)
    }

    /// `η(φ) = Σ p_k(φ(−r_k))`. The declared ignore horizon defaults to `min r_k`.
    pub fn multi_point(terms: Vec<(InnerMap<T>, T)>, eta_ign: Option<T>, window: T) -> Result<Self> {
        if terms.is_empty() {
            return Err(SddError::invalid("multi-point delay needs at least one offset"));
        }
        let min_offset = terms.iter().map(|t| t.1).fold(T::infinity(), T::min);
        let eta_ign = eta_ign.unwrap_or(min_offset);
        Self::validated_ign(window, eta_ign)?;
        for &(_, rk) in &terms {
            if rk < eta_ign {
                return Err(SddError::invalid(format!(
                    "delay offset r_k = {rk} lies inside the ignore zone (eta_ign = {eta_ign})"
                )));
            }
            if rk > window {
                return Err(SddError::invalid(format!("delay offset r_k = {rk} exceeds the window r = {window}")));
            }
        }
        Ok(Self { variant: DelayVariant::MultiPoint, kind: DelayKind::Points(terms), window, eta_ign, eta_min: None })
    }

    pub fn integral_of_p(map: InnerMap<T>, eta_ign: T, window: T) -> Result<Self> {
        Self::validated_ign(window, eta_ign)?;
        Ok(Self { variant: DelayVariant::IntegralOfP, kind: DelayKind::IntegralOfP(map), window, eta_ign, eta_min: None })
    }

    pub fn p_of_integral(map: InnerMap<T>, eta_ign: T, window: T) -> Result<Self> {
        Self::validated_ign(window, eta_ign)?;
        Ok(Self { variant: DelayVariant::POfIntegral, kind: DelayKind::POfIntegral(map), window, eta_ign, eta_min: None })
    }

    /// Constant delay `τ`; it ignores the whole window, so `η_ign = r`.
    pub fn constant(tau: T, window: T) -> Result<Self> {
        Self::validated_ign(window, window)?;
        if !(tau >= T::zero()) || tau > window {
            return Err(SddError::invalid(format!("constant delay {tau} outside [0, r = {window}]")));
        }
        Ok(Self { variant: DelayVariant::Constant, kind: DelayKind::Constant(tau), window, eta_ign: window, eta_min: None })
    }

    /// A point delay that skips the ignore-zone validation. It exists to
    /// exercise [`check_h`] with functionals that read recent history.
    pub fn point_unchecked(map: InnerMap<T>, offset: T, declared_eta_ign: T, window: T) -> Self {
        Self {
            variant: DelayVariant::Point,
            kind: DelayKind::Points(vec![(map, offset)]),
            window,
            eta_ign: declared_eta_ign,
            eta_min: None,
        }
    }

    /// Enables the lower clamp `η ≥ η_min`.
    pub fn with_floor(mut self, eta_min: T) -> Result<Self> {
        if !(eta_min >= T::zero()) || eta_min > self.window {
            return Err(SddError::invalid(format!("eta_min {eta_min} outside [0, r = {}]", self.window)));
        }
        self.eta_min = Some(eta_min);
        Ok(self)
    }

    pub fn variant(&self) -> DelayVariant {
        self.variant
    }

    pub fn window(&self) -> T {
        self.window
    }

    pub fn eta_ign(&self) -> T {
        self.eta_ign
    }

    pub fn eta_min(&self) -> Option<T> {
        self.eta_min
    }

    /// Offsets and maps of point variants; empty otherwise.
    pub fn point_terms(&self) -> &[(InnerMap<T>, T)] {
        match &self.kind {
            DelayKind::Points(t) => t,
            _ => &[],
        }
    }

    /// Inner map of the integral variants.
    pub fn integral_map(&self) -> Option<InnerMap<T>> {
        match &self.kind {
            DelayKind::IntegralOfP(m) | DelayKind::POfIntegral(m) => Some(*m),
            _ => None,
        }
    }

    pub fn constant_value(&self) -> Option<T> {
        match self.kind {
            DelayKind::Constant(tau) => Some(tau),
            _ => None,
        }
    }

    pub fn eval<S: Segment<T>>(&self, seg: &S) -> Result<T> {
        self.eval_detailed(seg).map(|(v, _)| v)
    }

    /// Delay value and whether any clamp (inner maps or the final
    /// `[η_min, r]` range) was active.
    pub fn eval_detailed<S: Segment<T>>(&self, seg: &S) -> Result<(T, bool)> {
        let now = seg.t_now();
        let cap = self.window;
        let mut clamped = false;
        let raw = match &self.kind {
            DelayKind::Constant(tau) => *tau,
            DelayKind::Points(terms) => {
                let mut acc = T::zero();
                for (map, rk) in terms {
                    let (v, c) = map.eval_tracked(&seg.eval_at(now - *rk)?, cap);
                    clamped |= c;
                    acc = acc + v;
                }
                acc
            }
            DelayKind::IntegralOfP(map) => {
                let mut any = false;
                let value = trapezoid(seg, now - self.window, now - self.eta_ign, |v| {
                    let (p, c) = map.eval_tracked(v, cap);
                    any |= c;
                    Ok(p)
                })?;
                clamped |= any;
                value
            }
            DelayKind::POfIntegral(map) => {
                let integral = trapezoid_vector(seg, now - self.window, now - self.eta_ign)?;
                let (v, c) = map.eval_tracked(&integral, cap);
                clamped |= c;
                v
            }
        };
        let floor = self.eta_min.unwrap_or_else(T::zero);
        let value = raw.max(floor).min(cap);
        Ok((value, clamped || value != raw))
    }
}

fn trapezoid_nodes<T: Scalar, S: Segment<T>>(seg: &S, lo: T, hi: T) -> Vec<T> {
    let mut nodes = Vec::new();
    nodes.push(lo);
    nodes.extend(seg.sample_times_between(lo, hi));
    nodes.push(hi);
    nodes
}

fn trapezoid<T: Scalar, S: Segment<T>>(seg: &S, lo: T, hi: T, mut f: impl FnMut(&ModalVector<T>) -> Result<T>) -> Result<T> {
    if !(hi > lo) {
        return Ok(T::zero());
    }
    let nodes = trapezoid_nodes(seg, lo, hi);
    let vals = nodes.iter().map(|&s| f(&seg.eval_at(s)?)).collect::<Result<Vec<T>>>()?;
    let half = T::lit(0.5);
    Ok(nodes
        .windows(2)
        .zip(vals.windows(2))
        .map(|(t, v)| (t[1] - t[0]) * half * (v[0] + v[1]))
        .sum())
}

fn trapezoid_vector<T: Scalar, S: Segment<T>>(seg: &S, lo: T, hi: T) -> Result<ModalVector<T>> {
    let first = seg.eval_at(lo)?;
    let mut acc = ModalVector::zeros(first.len());
    if !(hi > lo) {
        return Ok(acc);
    }
    let nodes = trapezoid_nodes(seg, lo, hi);
    let mut prev = first;
    let half = T::lit(0.5);
    for w in nodes.windows(2) {
        let next = seg.eval_at(w[1])?;
        let dt = (w[1] - w[0]) * half;
        acc.axpy(dt, &prev);
        acc.axpy(dt, &next);
        prev = next;
    }
    Ok(acc)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HReport {
    pub pass: bool,
    pub trials: usize,
    pub max_discrepancy: f64,
}

fn linspace<T: Scalar>(a: T, b: T, n: usize) -> Vec<T> {
    (0..n)
        .map(|i| {
            if i + 1 == n {
                b
            } else {
                a + (b - a) * T::from_usize_lossy(i) / T::from_usize_lossy(n - 1)
            }
        })
        .collect()
}

fn random_vector<T: Scalar>(rng: &mut ChaCha8Rng, n_modes: usize, scale: f64) -> ModalVector<T> {
    ModalVector::new((0..n_modes).map(|_| T::lit(scale * rng.gen_range(-1.0..1.0))).collect())
}

/// Randomized test of the ignore property: builds `trials` pairs of histories
/// that agree on `[−r, −η_ign]` and differ on `(−η_ign, 0]`, and reports the
/// largest delay discrepancy. Passing requires exactly zero.
pub fn check_h<T: Scalar>(eta: &DelayFunctional<T>, n_modes: usize, trials: usize, seed: u64) -> HReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = eta.window();
    let ign = eta.eta_ign().min(r);
    let left: Vec<T> = if ign < r { linspace(-r, -ign, 24) } else { vec![-r] };
    let right: Vec<T> = linspace(-ign, T::zero(), 12).into_iter().skip(1).collect();
    let times: Vec<T> = left.iter().chain(&right).copied().collect();
    let mut worst = 0.0_f64;
    for _ in 0..trials.max(1) {
        let scale = 10f64.powf(rng.gen_range(-1.5..0.5));
        let shared: Vec<ModalVector<T>> = left.iter().map(|_| random_vector(&mut rng, n_modes, scale)).collect();
        let mut a = shared.clone();
        let mut b = shared;
        for _ in &right {
            a.push(random_vector(&mut rng, n_modes, 3.0 * scale));
            b.push(random_vector(&mut rng, n_modes, 3.0 * scale));
        }
        let ha = HistorySegment::from_samples(r, times.clone(), a).expect("valid random history");
        let hb = HistorySegment::from_samples(r, times.clone(), b).expect("valid random history");
        let da = eta.eval(&ha).map(|v| v.as_f64()).unwrap_or(f64::NAN);
        let db = eta.eval(&hb).map(|v| v.as_f64()).unwrap_or(f64::NAN);
        let diff = (da - db).abs();
        worst = if diff.is_nan() { f64::INFINITY } else { worst.max(diff) };
    }
    HReport { pass: worst == 0.0, trials: trials.max(1), max_discrepancy: worst }
}
