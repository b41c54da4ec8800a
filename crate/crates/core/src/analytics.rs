//! Closed-form expressions for the mean photon number, the linewidth in its
//! several equivalent forms, the photon-number variance, the Mandel Q
//! parameter, the phase-diffusion comparison width, and the validity region
//! of the closed forms.
//!
//! All functions are pure. The linewidth family is algebraically one
//! result written against different inputs: `linewidth_eq22/eq23/eq24/eq28`
//! agree to rounding whenever their inputs come from one parameter set via
//! [`mean_photon`] and [`mandel_q`]. `linewidth_pd` is the independent
//! phase-diffusion width kept for comparison; `linewidth_far` is the common
//! far-above-threshold limit of both.

use crate::error::QlwError;
use crate::model::LaserParams;

/// Validity verdict with the two dimensionless margins behind it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Validity {
    /// Both ratios clear the requested margin.
    pub valid: bool,
    /// Distance above threshold against the saturation scale,
    /// `(alpha/gamma - 1)/sqrt(chi (1+n_b))`.
    pub left_ratio: f64,
    /// Saturation smallness against the distance above threshold,
    /// `(1/chi)/(alpha/gamma - 1)`.
    pub right_ratio: f64,
}

fn require_above_threshold(params: &LaserParams) -> Result<f64, QlwError> {
    let ar = params.alpha_ratio();
    if ar <= 1.0 {
        return Err(QlwError::BelowThreshold(ar));
    }
    Ok(ar)
}

/// Mean photon number above threshold, `(alpha/gamma - 1)/chi`.
pub fn mean_photon(params: &LaserParams) -> Result<f64, QlwError> {
    let ar = require_above_threshold(params)?;
    Ok((ar - 1.0) / params.chi)
}

/// Linewidth in terms of the mean photon number:
/// `(gamma/2 nbar) [(2 + chi nbar)/(1 + chi nbar) + 2 n_b]`.
pub fn linewidth_eq22(nbar: f64, chi: f64, gamma: f64, n_b: f64) -> f64 {
    let x = chi * nbar;
    gamma / (2.0 * nbar) * ((2.0 + x) / (1.0 + x) + 2.0 * n_b)
}

/// Linewidth in terms of the gain and loss rates:
/// `(alpha + gamma)/(2 nbar) * (gamma/alpha) + (gamma/nbar) n_b`.
pub fn linewidth_eq23(nbar: f64, params: &LaserParams) -> Result<f64, QlwError> {
    require_above_threshold(params)?;
    let alpha = params.alpha();
    let gamma = params.gamma;
    Ok((alpha + gamma) / (2.0 * nbar) * (gamma / alpha) + gamma / nbar * params.n_b)
}

/// Linewidth with the mean photon number eliminated:
/// `(gamma chi / 2) (gamma/(alpha - gamma)) (1 + gamma/alpha + 2 n_b)`.
pub fn linewidth_eq24(params: &LaserParams) -> Result<f64, QlwError> {
    require_above_threshold(params)?;
    let alpha = params.alpha();
    let gamma = params.gamma;
    Ok(0.5
        * gamma
        * params.chi
        * (gamma / (alpha - gamma))
        * (1.0 + gamma / alpha + 2.0 * params.n_b))
}

/// Far-above-threshold limiting value, `(chi gamma^2 / 2 alpha)(1 + 2 n_b)`.
pub fn linewidth_far(params: &LaserParams) -> Result<f64, QlwError> {
    require_above_threshold(params)?;
    Ok(0.5 * params.chi * params.gamma * params.gamma / params.alpha() * (1.0 + 2.0 * params.n_b))
}

/// The same limit written against the mean photon number,
/// `(gamma/2 nbar)(1 + 2 n_b)`. The two forms agree as alpha/gamma grows;
/// this one stays closer to the full linewidth at moderate pumping.
pub fn linewidth_far_at(nbar: f64, gamma: f64, n_b: f64) -> f64 {
    gamma / (2.0 * nbar) * (1.0 + 2.0 * n_b)
}

/// Relative photon-number variance `var/nbar = alpha/(alpha-gamma) (1+n_b)`.
pub fn variance_eq27(params: &LaserParams) -> Result<f64, QlwError> {
    require_above_threshold(params)?;
    let alpha = params.alpha();
    Ok(alpha / (alpha - params.gamma) * (1.0 + params.n_b))
}

/// Mandel Q parameter, `(gamma + n_b alpha)/(alpha - gamma)`.
pub fn mandel_q(params: &LaserParams) -> Result<f64, QlwError> {
    require_above_threshold(params)?;
    let alpha = params.alpha();
    Ok((params.gamma + params.n_b * alpha) / (alpha - params.gamma))
}

/// Linewidth in terms of the Mandel Q parameter:
/// `(gamma/2 nbar) (1 + Q/(1+Q)) (1 + n_b)`.
pub fn linewidth_eq28(nbar: f64, q: f64, gamma: f64, n_b: f64) -> f64 {
    gamma / (2.0 * nbar) * (1.0 + q / (1.0 + q)) * (1.0 + n_b)
}

/// Phase-diffusion linewidth `(gamma + alpha)/(4 nbar)`, the standard
/// comparison formula; derived for zero thermal occupation only, so any
/// `n_b > 0` is refused rather than guessed at.
pub fn linewidth_pd(params: &LaserParams) -> Result<f64, QlwError> {
    if params.n_b > 0.0 {
        return Err(QlwError::ThermalNotSupported(params.n_b));
    }
    let ar = require_above_threshold(params)?;
    let nbar = (ar - 1.0) / params.chi;
    Ok((params.gamma + params.alpha()) / (4.0 * nbar))
}

/// The phase-diffusion width against the mean photon number directly:
/// `gamma chi / 4 + gamma/(2 nbar)`.
pub fn linewidth_pd_at(nbar: f64, chi: f64, gamma: f64) -> f64 {
    0.25 * gamma * chi + 0.5 * gamma / nbar
}

/// Pre-elimination linewidth written against the pump rate:
/// `gamma - (r chi / 2(1+chi nbar)) [1 - (chi/(1+chi nbar)) (1/2 + var/nbar)]`.
/// Kept in this raw form so the derivation chain can be exercised end to
/// end; see [`linewidth_eq18_balanced`] for the version with the pump rate
/// eliminated through the steady-state balance.
pub fn linewidth_eq18(params: &LaserParams, nbar: f64, var: f64) -> f64 {
    let chi = params.chi;
    let sat = 1.0 + chi * nbar;
    let gain = params.r * chi / (2.0 * sat);
    params.gamma - gain * (1.0 - chi / sat * (0.5 + var / nbar))
}

/// Saturated pump rate implied by the steady-state photon balance, in units
/// of the loss rate: `1 + (chi/(1+chi nbar))(1 + var/nbar) - (1+n_b)/nbar`.
/// Multiplying by `gamma` gives the effective `r chi / 2(1+chi nbar)`.
pub fn pump_factor_eq21(nbar: f64, var: f64, chi: f64, n_b: f64) -> f64 {
    let sat = 1.0 + chi * nbar;
    1.0 + chi / sat * (1.0 + var / nbar) - (1.0 + n_b) / nbar
}

/// The pre-elimination linewidth with the pump rate replaced by the
/// steady-state balance value: the leading variance contributions cancel
/// and the mean-photon-number form of the linewidth is recovered up to
/// higher-order corrections.
pub fn linewidth_eq18_balanced(nbar: f64, var: f64, chi: f64, gamma: f64, n_b: f64) -> f64 {
    let sat = 1.0 + chi * nbar;
    let pump = gamma * pump_factor_eq21(nbar, var, chi, n_b);
    gamma - pump * (1.0 - chi / sat * (0.5 + var / nbar))
}

/// Validity check of the closed forms: well above threshold on the
/// saturation scale, yet far below the fully saturated regime. Both margins
/// are returned so callers can apply a stricter cutoff than the default.
pub fn validity(params: &LaserParams, margin: f64) -> Validity {
    assert!(margin >= 1.0, "margin must be at least 1");
    let excess = params.alpha_ratio() - 1.0;
    let left_ratio = excess / (params.chi * (1.0 + params.n_b)).sqrt();
    let right_ratio = if excess > 0.0 {
        1.0 / (params.chi * excess)
    } else {
        0.0
    };
    Validity {
        valid: left_ratio >= margin && right_ratio >= margin,
        left_ratio,
        right_ratio,
    }
}
