//! Eigen-decomposition of the 1D Dirichlet Laplacian on `(0, L)`.
//!
//! The operator is represented by its first `N` eigenpairs
//! `λ_k = (kπ/L)²`, `e_k(x) = √(2/L) sin(kπx/L)` together with a uniform
//! interior quadrature grid `x_j = j·L/(n_grid + 1)`, `j = 1..=n_grid`.
//! On that grid the discrete sine vectors are exactly orthonormal for
//! `k ≤ n_grid`, so the nodal/modal transforms below are exact inverses on
//! band-limited fields.

use std::ops::{Add, Index, IndexMut, Sub};

use crate::error::{Result, SddError};
use crate::scalar::Scalar;

/// Coefficients of an `L²(0, L)` element in the eigenbasis, `v_k = ⟨v, e_k⟩`.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct ModalVector<T>(Vec<T>);

impl<T: Scalar> ModalVector<T> {
    pub fn new(coefficients: Vec<T>) -> Self {
        Self(coefficients)
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![T::zero(); n])
    }

    /// The `k`-th basis vector (1-based, matching `e_k`).
    pub fn unit(n: usize, k: usize) -> Self {
        assert!(k >= 1 && k <= n, "mode index {k} outside 1..={n}");
        let mut v = Self::zeros(n);
        v.0[k - 1] = T::one();
        v
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.0
    }

    pub fn into_inner(self) -> Vec<T> {
        self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, T> {
        self.0.iter()
    }

    pub fn dot(&self, other: &Self) -> T {
        self.0.iter().zip(&other.0).map(|(&a, &b)| a * b).sum()
    }

    /// L² norm via Parseval.
    pub fn norm(&self) -> T {
        self.dot(self).sqrt()
    }

    pub fn scaled(&self, s: T) -> Self {
        Self(self.0.iter().map(|&a| a * s).collect())
    }

    /// `self += s·other`
    pub fn axpy(&mut self, s: T, other: &Self) {
        for (a, &b) in self.0.iter_mut().zip(&other.0) {
            *a = *a + s * b;
        }
    }

    /// `a + w·(b − a)`; returns `a` bit-for-bit wherever `a == b`.
    pub fn lerp(a: &Self, b: &Self, w: T) -> Self {
        Self(a.0.iter().zip(&b.0).map(|(&x, &y)| x + w * (y - x)).collect())
    }

    pub fn distance(&self, other: &Self) -> T {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(&a, &b)| (a - b) * (a - b))
            .sum::<T>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }

    /// `|v_N| / ||v||`, the truncation monitor; zero for the zero vector.
    pub fn tail_ratio(&self) -> T {
        let n = self.norm();
        match self.0.last() {
            Some(&last) if n > T::zero() => last.abs() / n,
            _ => T::zero(),
        }
    }
}

impl<T> Index<usize> for ModalVector<T> {
    type Output = T;
    fn index(&self, i: usize) -> &T {
        &self.0[i]
    }
}

impl<T> IndexMut<usize> for ModalVector<T> {
    fn index_mut(&mut self, i: usize) -> &mut T {
        &mut self.0[i]
    }
}

impl<T: Scalar> Add for &ModalVector<T> {
    type Output = ModalVector<T>;
    fn add(self, rhs: Self) -> ModalVector<T> {
        ModalVector(self.0.iter().zip(&rhs.0).map(|(&a, &b)| a + b).collect())
    }
}

impl<T: Scalar> Sub for &ModalVector<T> {
    type Output = ModalVector<T>;
    fn sub(self, rhs: Self) -> ModalVector<T> {
        ModalVector(self.0.iter().zip(&rhs.0).map(|(&a, &b)| a - b).collect())
    }
}

impl<T> From<Vec<T>> for ModalVector<T> {
    fn from(v: Vec<T>) -> Self {
        Self(v)
    }
}

/// Truncated spectral representation of `A = −∂²ₓ` with Dirichlet conditions.
///
/// Immutable after construction.
#[derive(Clone, Debug)]
pub struct SpectralOperator<T> {
    length: T,
    eigenvalues: Vec<T>,
    grid: Vec<T>,
    dx: T,
    /// `basis[k * n_grid + j] = e_{k+1}(x_j)`
    basis: Vec<T>,
}

impl<T: Scalar> SpectralOperator<T> {
    /// Builds the `N`-mode Dirichlet Laplacian on `(0, L)` with `n_grid`
    /// interior quadrature nodes. Requires `n_grid ≥ 2N`.
    pub fn dirichlet_laplacian_1d(length: T, n_modes: usize, n_grid: usize) -> Result<Self> {
        if !(length > T::zero()) || !length.is_finite() {
            return Err(SddError::invalid(format!("domain length must be positive, got {length}")));
        }
        if n_modes == 0 {
            return Err(SddError::invalid("number of modes must be positive"));
        }
        if n_grid < 2 * n_modes {
            return Err(SddError::invalid(format!(
                "quadrature grid of {n_grid} points cannot resolve {n_modes} modes (need at least {})",
                2 * n_modes
            )));
        }
        let pi = T::PI();
        let eigenvalues = (1..=n_modes)
            .map(|k| {
                let w = T::from_usize_lossy(k) * pi / length;
                w * w
            })
            .collect();
        let dx = length / T::from_usize_lossy(n_grid + 1);
        let grid: Vec<T> = (1..=n_grid).map(|j| T::from_usize_lossy(j) * dx).collect();
        let norm = (T::lit(2.0) / length).sqrt();
        let mut basis = Vec::with_capacity(n_modes * n_grid);
        for k in 1..=n_modes {
            for j in 1..=n_grid {
                // sin(kjπ/(n+1)) with the argument reduced mod 2(n+1) keeps the table accurate
                let m = (k * j) % (2 * (n_grid + 1));
                let arg = T::from_usize_lossy(m) * pi / T::from_usize_lossy(n_grid + 1);
                basis.push(norm * arg.sin());
            }
        }
        Ok(Self { length, eigenvalues, grid, dx, basis })
    }

    pub fn length(&self) -> T {
        self.length
    }

    /// `|Ω|`; equals the length in 1D.
    pub fn domain_measure(&self) -> T {
        self.length
    }

    pub fn n_modes(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn n_grid(&self) -> usize {
        self.grid.len()
    }

    pub fn eigenvalues(&self) -> &[T] {
        &self.eigenvalues
    }

    pub fn lambda_1(&self) -> T {
        self.eigenvalues[0]
    }

    pub fn grid(&self) -> &[T] {
        &self.grid
    }

    pub fn dx(&self) -> T {
        self.dx
    }

    /// `e_k(x_j)` for 1-based `k` and 0-based grid index `j`.
    pub fn basis_value(&self, k: usize, j: usize) -> T {
        self.basis[(k - 1) * self.n_grid() + j]
    }

    /// `e_k(x)` at an arbitrary point.
    pub fn eigenfunction(&self, k: usize, x: T) -> T {
        (T::lit(2.0) / self.length).sqrt() * (T::from_usize_lossy(k) * T::PI() * x / self.length).sin()
    }

    pub fn zeros(&self) -> ModalVector<T> {
        ModalVector::zeros(self.n_modes())
    }

    fn check_len(&self, v: &ModalVector<T>) -> Result<()> {
        if v.len() != self.n_modes() {
            return Err(SddError::invalid(format!(
                "modal vector has {} coefficients, operator has {} modes",
                v.len(),
                self.n_modes()
            )));
        }
        Ok(())
    }

    /// `e^{−(A + d)t} v`, exact in modal space.
    pub fn apply_semigroup(&self, d: T, t: T, v: &ModalVector<T>) -> Result<ModalVector<T>> {
        if t < T::zero() || !t.is_finite() {
            return Err(SddError::invalid(format!("semigroup time must be non-negative, got {t}")));
        }
        if d < T::zero() {
            return Err(SddError::invalid(format!("damping must be non-negative, got {d}")));
        }
        self.check_len(v)?;
        Ok(ModalVector(
            self.eigenvalues
                .iter()
                .zip(v.iter())
                .map(|(&lam, &c)| (-(lam + d) * t).exp() * c)
                .collect(),
        ))
    }

    /// `||A^δ v|| = √(Σ λ_k^{2δ} v_k²)` for `δ ∈ [0, 1]`.
    pub fn frac_power_norm(&self, delta: T, v: &ModalVector<T>) -> Result<T> {
        if !(delta >= T::zero() && delta <= T::one()) {
            return Err(SddError::invalid(format!("fractional power must lie in [0, 1], got {delta}")));
        }
        self.check_len(v)?;
        if delta == T::zero() {
            return Ok(v.norm());
        }
        let two_delta = delta + delta;
        Ok(self
            .eigenvalues
            .iter()
            .zip(v.iter())
            .map(|(&lam, &c)| lam.powf(two_delta) * c * c)
            .sum::<T>()
            .sqrt())
    }

    /// Quadrature projection `v_k = Σ_j g(x_j) e_k(x_j) Δx`.
    pub fn to_modal(&self, nodal: &[T]) -> Result<ModalVector<T>> {
        let n = self.n_grid();
        if nodal.len() != n {
            return Err(SddError::invalid(format!(
                "nodal array has {} values, grid has {n}",
                nodal.len()
            )));
        }
        Ok(ModalVector(
            self.basis
                .chunks_exact(n)
                .map(|row| row.iter().zip(nodal).map(|(&e, &g)| e * g).sum::<T>() * self.dx)
                .collect(),
        ))
    }

    /// Synthesis `g(x_j) = Σ_k v_k e_k(x_j)`.
    pub fn to_nodal(&self, v: &ModalVector<T>) -> Result<Vec<T>> {
        self.check_len(v)?;
        let n = self.n_grid();
        let mut out = vec![T::zero(); n];
        for (row, &c) in self.basis.chunks_exact(n).zip(v.iter()) {
            if c == T::zero() {
                continue;
            }
            for (o, &e) in out.iter_mut().zip(row) {
                *o = *o + c * e;
            }
        }
        Ok(out)
    }

    /// Discrete L² norm of nodal values, `√(Σ_j g_j² Δx)`.
    pub fn nodal_norm(&self, nodal: &[T]) -> T {
        (nodal.iter().map(|&g| g * g).sum::<T>() * self.dx).sqrt()
    }

    /// Pointwise value of a modal field at `x`.
    pub fn eval_point(&self, v: &ModalVector<T>, x: T) -> T {
        v.iter().enumerate().map(|(i, &c)| c * self.eigenfunction(i + 1, x)).sum()
    }
}
