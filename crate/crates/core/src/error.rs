//! Error type shared by every stage of the pipeline.

use thiserror::Error;

/// Everything that can go wrong between parameter validation and linewidth
/// extraction. Variants carry enough context to decide whether a retry with
/// different numerical settings (truncation, horizon, tolerance) makes sense.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum QlwError {
    /// A rate parameter (`gamma`, `chi`, `r`) is zero, negative, or not finite.
    #[error("rate parameter {name} must be positive and finite, got {value}")]
    NonPositiveRate { name: &'static str, value: f64 },

    /// The thermal occupation `n_b` is negative or not finite.
    #[error("thermal occupation n_b must be nonnegative and finite, got {0}")]
    NegativeThermal(f64),

    /// An operation that only makes sense above threshold was requested at or
    /// below it.
    #[error("operating point is at or below threshold: alpha/gamma = {0}")]
    BelowThreshold(f64),

    /// The photon-number cutoff is too small to hold the state.
    #[error("photon-number truncation too small: n_max = {n_max} ({reason})")]
    TruncationTooSmall { n_max: usize, reason: &'static str },

    /// The stationary distribution does not fit below the absolute cutoff cap.
    #[error(
        "stationary distribution does not converge below n = {cap}; \
         the parameter set is out of the tool's reach"
    )]
    DivergentDistribution { cap: usize },

    /// Mandel Q is undefined for a state with no photons.
    #[error("mean photon number is zero; Mandel Q undefined")]
    ZeroMean,

    /// The adaptive integrator collapsed its step size.
    #[error("integrator step collapsed at t = {t} (h = {h}); system too stiff for the tolerance")]
    StiffnessFailure { t: f64, h: f64 },

    /// A state component became NaN or infinite during propagation.
    #[error("non-finite state component at t = {t}")]
    NonFiniteState { t: f64 },

    /// The correlation did not decay through the requested fit window.
    #[error(
        "correlation decayed to {reached:.3} of g(0) by t_max, but the fit \
         window needs {needed:.3}; increase t_max"
    )]
    WindowNotReached { needed: f64, reached: f64 },

    /// The fit window contains samples that are zero or negative.
    #[error("fit window contains non-positive correlation samples")]
    NonPositiveSamples,

    /// Inverse iteration did not settle on an eigenvalue.
    #[error("inverse iteration did not converge within {0} iterations")]
    NoConvergence(usize),

    /// The correlation value underflowed where a ratio of sums is needed.
    #[error("correlation denominator underflowed at t = {t}")]
    ZeroDenominator { t: f64 },

    /// The trace retained too much amplitude at t_max to extrapolate a tail.
    #[error(
        "correlation still at {fraction:.3} of g(0) at t_max; no exponential \
         tail fit available for the spectrum"
    )]
    InsufficientDecay { fraction: f64 },

    /// A closed form that is only derived for a zero-temperature bath was
    /// requested with thermal photons present.
    #[error("formula is defined for n_b = 0 only, got n_b = {0}")]
    ThermalNotSupported(f64),
}
