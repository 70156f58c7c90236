use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("Hilbert-space dimension {dim} exceeds cap {cap} (override with USQED_DIM_CAP)")]
    DimensionOverflow { dim: usize, cap: usize },

    #[error("incompatible Hilbert space: {0}")]
    IncompatibleSpace(String),

    #[error("operator is not Hermitian: max |M - M^dag| = {defect:.3e}")]
    NonHermitian { defect: f64 },

    #[error(
        "truncation-unitarity failure: defect {defect:.3e} above tolerance {tol:.1e}; \
         increase the Fock cutoff"
    )]
    TruncationUnitarity { defect: f64, tol: f64 },

    #[error("linear-algebra backend failure: {0}")]
    Lapack(String),

    #[error("singular linear system")]
    SingularSolve,

    #[error("no sign change of f on the supplied grid")]
    NoSignChange,

    #[error("minimizer stagnated: {0}")]
    MinimizerStagnation(String),

    #[error("cutoff cap {cap} reached before convergence (last shift {shift:.3e})")]
    CutoffCapReached { cap: usize, shift: f64 },

    #[error("series did not converge at x = {x} (order cap {cap} hit)")]
    SeriesNonConvergence { x: f64, cap: usize },

    #[error("dark steady state: <O- O+> = {flux:.3e} below threshold")]
    DarkSteadyState { flux: f64 },

    #[error("degenerate steady-state manifold: {n_slow} Liouvillian modes within {gap:.1e} of 0")]
    DegenerateSteadyState { n_slow: usize, gap: f64 },

    #[error("spectral instability: {0}")]
    SpectralInstability(String),

    #[error("Fourier cutoff cap {cap} reached without convergence (residual {residual:.3e})")]
    FloquetCutoffCap { cap: usize, residual: f64 },

    #[error("config schema violation: {0}")]
    Schema(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("{0}")]
    Numerics(String),
}
