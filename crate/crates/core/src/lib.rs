//! Spectral-Galerkin simulation of semilinear parabolic equations with a
//! discrete state-dependent delay,
//!
//! ```text
//! ∂ₜu + Au + d·u = ∫_Ω b(u(t − η(u_t), y)) f(x − y) dy,   u|_{[−r,0]} = φ,
//! ```
//!
//! on `Ω = (0, L)` with Dirichlet conditions. The delay functional `η` ignores
//! the most recent stretch `(−η_ign, 0]` of the history, which lets the solver
//! advance by steps of length `η_ign` on which the delay is a known function
//! of time.
//!
//! All numerical types are generic over [`Scalar`] (`f32`/`f64`); the
//! `*64` aliases below fix the precision used by the command-line tool.

pub mod delay;
pub mod diagnostics;
pub mod error;
pub mod export;
pub mod history;
pub mod integrator;
pub mod nonlinearity;
pub mod scalar;
pub mod scenario;
pub mod spectral;
pub mod suite;

pub use delay::{check_h, DelayFunctional, DelayVariant, HReport, InnerMap};
pub use diagnostics::{
    apriori_bound, constant_delay_oracle, continuous_dependence, dissipativity_check, holder_check, semigroup_restart,
    AprioriReport, DependenceReport, DissipationReport, HolderReport,
};
pub use error::{Result, SddError};
pub use export::{csv_string, write_csv, write_csv_file, CsvColumns};
pub use integrator::{
    delay_schedule, solve, solve_picard, step_micro_etd1, MacroStepInfo, ProblemSpec, SolverMode, SolverOptions, Trajectory,
};
pub use history::{extend, segment_sup_norm, ExtendedSegment, HistorySegment, InitialFunction, PathView, Segment};

pub use nonlinearity::{eval_f, f_norm_bound, BirthFunction, Kernel, Nonlinearity};
pub use scalar::Scalar;
pub use scenario::ScenarioConfig;
pub use spectral::{ModalVector, SpectralOperator};

pub type ModalVector64 = ModalVector<f64>;
pub type ModalVector32 = ModalVector<f32>;
pub type SpectralOperator64 = SpectralOperator<f64>;
pub type SpectralOperator32 = SpectralOperator<f32>;
pub type HistorySegment64 = HistorySegment<f64>;
pub type InitialFunction64 = InitialFunction<f64>;
pub type InitialFunction32 = InitialFunction<f32>;
pub type DelayFunctional64 = DelayFunctional<f64>;
pub type DelayFunctional32 = DelayFunctional<f32>;
pub type BirthFunction64 = BirthFunction<f64>;
pub type Kernel64 = Kernel<f64>;
pub type ProblemSpec64 = ProblemSpec<f64>;
pub type ProblemSpec32 = ProblemSpec<f32>;
pub type SolverOptions64 = SolverOptions<f64>;
pub type SolverOptions32 = SolverOptions<f32>;
pub type Trajectory64 = Trajectory<f64>;
pub type Trajectory32 = Trajectory<f32>;
