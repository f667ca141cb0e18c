//! The delayed reaction term `F(v)(x) = ∫_Ω b(v(y)) f(x − y) dy` and its
//! local counterpart `F_ℓ(v)(x) = b(v(x))`.
//!
//! `F` acts on a single snapshot: the integrator resolves the delayed time
//! and hands over `u(t − η(u_t))`.

use serde::Serialize;

use crate::error::{Result, SddError};
use crate::scalar::Scalar;
use crate::spectral::{ModalVector, SpectralOperator};

/// Birth-rate function `b : ℝ → ℝ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BirthFunction<T> {
    /// `p·w·e^{−w}` for `w ≥ 0`, zero for negative densities.
    Nicholson { p: T },
    Linear { c: T },
    Zero,
    /// `c·tanh(w)`
    Tanh { c: T },
}

/// Constants certified for a birth function: `|b(w)| ≤ c1·|w| + c_b` and
/// `|b(w₁) − b(w₂)| ≤ lipschitz·|w₁ − w₂|`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BirthConstants {
    pub c1: f64,
    pub c_b: f64,
    pub lipschitz: f64,
}

impl<T: Scalar> BirthFunction<T> {
    pub fn eval(&self, w: T) -> T {
        match *self {
            BirthFunction::Nicholson { p } => {
                let w = w.max(T::zero());
                p * w * (-w).exp()
            }
            BirthFunction::Linear { c } => c * w,
            BirthFunction::Zero => T::zero(),
            BirthFunction::Tanh { c } => c * w.tanh(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            BirthFunction::Nicholson { .. } => "nicholson",
            BirthFunction::Linear { .. } => "linear",
            BirthFunction::Zero => "zero",
            BirthFunction::Tanh { .. } => "tanh",
        }
    }

    /// Linear growth constant `C₁`.
    pub fn c1(&self) -> T {
        match *self {
            BirthFunction::Linear { c } => c.abs(),
            _ => T::zero(),
        }
    }

    /// Additive bound `C_b`; for the Nicholson map this is `p/e`, attained at `w = 1`.
    pub fn c_b(&self) -> T {
        match *self {
            BirthFunction::Nicholson { p } => p.abs() / T::E(),
            BirthFunction::Tanh { c } => c.abs(),
            _ => T::zero(),
        }
    }

    /// Lipschitz constant `L_b`; for the Nicholson map `|b′|` peaks at `w = 0`.
    pub fn lipschitz(&self) -> T {
        match *self {
            BirthFunction::Nicholson { p } => p.abs(),
            BirthFunction::Linear { c } | BirthFunction::Tanh { c } => c.abs(),
            BirthFunction::Zero => T::zero(),
        }
    }

    pub fn is_bounded(&self) -> bool {
        self.c1() == T::zero()
    }

    pub fn constants(&self) -> BirthConstants {
        BirthConstants { c1: self.c1().as_f64(), c_b: self.c_b().as_f64(), lipschitz: self.lipschitz().as_f64() }
    }

    /// Checks the reported constants on `n` uniform samples of `[−w_max, w_max]`.
    pub fn certify(&self, w_max: T, n: usize) -> Result<()> {
        let n = n.max(2);
        let slack = T::one() + T::lit(1e-9);
        let (c1, cb, lb) = (self.c1(), self.c_b(), self.lipschitz());
        let step = (w_max + w_max) / T::from_usize_lossy(n - 1);
        let mut prev: Option<(T, T)> = None;
        for i in 0..n {
            let w = -w_max + T::from_usize_lossy(i) * step;
            let bw = self.eval(w);
            if bw.abs() > (c1 * w.abs() + cb) * slack + T::epsilon() {
                return Err(SddError::invalid(format!(
                    "{} violates its growth bound at w = {w}: |b| = {}",
                    self.name(),
                    bw.abs()
                )));
            }
            if let Some((pw, pb)) = prev {
                if (bw - pb).abs() > lb * (w - pw) * slack + T::epsilon() {
                    return Err(SddError::invalid(format!(
                        "{} violates its Lipschitz bound near w = {w}",
                        self.name()
                    )));
                }
            }
            prev = Some((w, bw));
        }
        Ok(())
    }
}

/// Interaction kernel `f`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Kernel<T> {
    /// `f(s) = e^{−s²/4α} / √(4πα)`
    Gaussian { alpha: T },
    /// Point interaction; selects the local nonlinearity.
    Dirac,
}

impl<T: Scalar> Kernel<T> {
    pub fn gaussian(alpha: T) -> Result<Self> {
        if !(alpha > T::zero()) || !alpha.is_finite() {
            return Err(SddError::invalid(format!("gaussian width alpha must be positive, got {alpha}")));
        }
        Ok(Kernel::Gaussian { alpha })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Kernel::Gaussian { .. } => "gaussian",
            Kernel::Dirac => "dirac",
        }
    }

    pub fn eval(&self, s: T) -> T {
        match *self {
            Kernel::Gaussian { alpha } => {
                let four_alpha = T::lit(4.0) * alpha;
                (-(s * s) / four_alpha).exp() / (T::PI() * four_alpha).sqrt()
            }
            Kernel::Dirac => {
                if s == T::zero() {
                    T::infinity()
                } else {
                    T::zero()
                }
            }
        }
    }

    /// `M_f = sup|f|`; `None` for the Dirac kernel.
    pub fn bound(&self) -> Option<T> {
        match *self {
            Kernel::Gaussian { alpha } => Some(T::one() / (T::lit(4.0) * T::PI() * alpha).sqrt()),
            Kernel::Dirac => None,
        }
    }

    /// Factor `κ` with `||F(v₁) − F(v₂)|| ≤ κ·L_b·||v₁ − v₂||`:
    /// `M_f·|Ω|` for a bounded kernel, `1` for the local map.
    pub fn transport_constant(&self, measure: T) -> T {
        match self.bound() {
            Some(m) => m * measure,
            None => T::one(),
        }
    }
}

/// `F` bound to a particular operator grid (kernel values are tabulated).
#[derive(Clone, Debug)]
pub struct Nonlinearity<T> {
    birth: BirthFunction<T>,
    kernel: Kernel<T>,
    // f(m·Δx) for m = 0..=n_grid+1
    table: Vec<T>,
    dx: T,
}

impl<T: Scalar> Nonlinearity<T> {
    pub fn new(birth: BirthFunction<T>, kernel: Kernel<T>, op: &SpectralOperator<T>) -> Self {
        let dx = op.dx();
        let table = match kernel {
            Kernel::Gaussian { .. } => (0..=op.n_grid() + 1).map(|m| kernel.eval(T::from_usize_lossy(m) * dx)).collect(),
            Kernel::Dirac => Vec::new(),
        };
        Self { birth, kernel, table, dx }
    }

    pub fn birth(&self) -> &BirthFunction<T> {
        &self.birth
    }

    pub fn kernel(&self) -> &Kernel<T> {
        &self.kernel
    }

    /// Evaluates `F` (or `F_ℓ` for the Dirac kernel) on a delayed snapshot.
    ///
    /// The convolution is the trapezoid rule on the closed grid
    /// `{0, x_1, …, x_n, L}` with the Dirichlet boundary value `v = 0` at the ends.
    pub fn eval(&self, op: &SpectralOperator<T>, v_delayed: &ModalVector<T>) -> Result<ModalVector<T>> {
        if let BirthFunction::Zero = self.birth {
            return Ok(op.zeros());
        }
        let nodal = op.to_nodal(v_delayed)?;
        let w: Vec<T> = nodal.iter().map(|&u| self.birth.eval(u)).collect();
        match self.kernel {
            Kernel::Dirac => op.to_modal(&w),
            Kernel::Gaussian { .. } => {
                let n = w.len();
                let b0 = self.birth.eval(T::zero());
                let half = T::lit(0.5);
                let mut g = vec![T::zero(); n];
                for (i, gi) in g.iter_mut().enumerate() {
                    // grid index of x_i is i + 1; boundaries sit at 0 and n + 1
                    let mut acc = half * b0 * (self.table[i + 1] + self.table[n - i]);
                    for (j, &wj) in w.iter().enumerate() {
                        acc = acc + wj * self.table[i.abs_diff(j)];
                    }
                    *gi = acc * self.dx;
                }
                op.to_modal(&g)
            }
        }
    }

    /// `M_f·|Ω|^{3/2}·C_b` (local map: `|Ω|^{1/2}·C_b`); requires bounded `b`.
    pub fn norm_bound(&self, op: &SpectralOperator<T>) -> Result<T> {
        f_norm_bound(&self.birth, &self.kernel, op)
    }

    /// `κ·L_b`, the Lipschitz constant of `F` on `L²`.
    pub fn lipschitz(&self, op: &SpectralOperator<T>) -> T {
        self.kernel.transport_constant(op.domain_measure()) * self.birth.lipschitz()
    }
}

/// Uniform bound on `||F||` for bounded birth functions.
pub fn f_norm_bound<T: Scalar>(b: &BirthFunction<T>, f: &Kernel<T>, op: &SpectralOperator<T>) -> Result<T> {
    if !b.is_bounded() {
        return Err(SddError::Unsupported(format!(
            "norm bound on F needs a bounded birth function; {} has C1 = {}",
            b.name(),
            b.c1()
        )));
    }
    let omega = op.domain_measure();
    Ok(match f.bound() {
        Some(m) => m * omega * omega.sqrt() * b.c_b(),
        None => omega.sqrt() * b.c_b(),
    })
}

/// One-shot evaluation of `F` without caching the kernel table.
pub fn eval_f<T: Scalar>(
    op: &SpectralOperator<T>,
    b: &BirthFunction<T>,
    f: &Kernel<T>,
    v_delayed: &ModalVector<T>,
) -> Result<ModalVector<T>> {
    Nonlinearity::new(*b, *f, op).eval(op, v_delayed)
}
