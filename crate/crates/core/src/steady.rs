//! Stationary photon statistics via detailed balance.
//!
//! The population sector is a birth-death chain, so its stationary state
//! satisfies a two-term recursion: every nearest-neighbor probability flux
//! closes individually. That gives the exact distribution in O(n_max) with no
//! linear solve; a fixed-point residual against the assembled generator and
//! two exact balance identities guard the construction.

use crate::error::QlwError;
use crate::kernels::{assemble_diagonal_generator, TridiagGenerator};
use crate::model::{LaserParams, PhotonDistribution, Truncation, TruncationSpec};

/// Absolute cap on the automatic cutoff growth. Distributions that still leak
/// past this point are outside the tool's intended regime.
pub const N_MAX_CAP: usize = 1 << 22;

/// Exact residuals of the stationary balance identities; both vanish for the
/// true steady state up to rounding.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BalanceReport {
    /// First-moment balance: gain flux minus `gamma (nbar - n_b)`, relative.
    pub r1: f64,
    /// Second-moment balance, normalized by the sum of absolute terms.
    pub r2: f64,
}

/// Probability ratio `p_{n+1} / p_n` of the stationary chain.
fn step_ratio(params: &LaserParams, n: usize) -> f64 {
    let np1 = (n + 1) as f64;
    (params.alpha() / (1.0 + params.chi * np1) + params.gamma * params.n_b)
        / (params.gamma * (1.0 + params.n_b))
}

/// Initial cutoff estimate from closed-form moments (above threshold) or the
/// geometric envelope (at or below threshold).
fn initial_estimate(params: &LaserParams) -> usize {
    let ar = params.alpha_ratio();
    let mut guess = 32usize;
    if ar > 1.0 {
        let nbar = (ar - 1.0) / params.chi;
        let var = nbar * ar / (ar - 1.0) * (1.0 + params.n_b);
        guess = guess.max((nbar + 12.0 * var.sqrt()).ceil() as usize + 8);
    }
    // Geometric tail envelope: ratios are below their n = 0 value, so
    // p_n <= p_0 rho^n; pick n with rho^n ~ 1e-15.
    let rho = step_ratio(params, 0);
    if rho > 0.0 && rho < 1.0 {
        let n_geom = (34.6 / -(rho.ln())).ceil() as usize;
        guess = guess.max(n_geom.min(N_MAX_CAP));
    }
    guess.min(N_MAX_CAP)
}

/// Compute the normalized distribution on a fixed cutoff, plus the estimated
/// relative tail mass beyond it (geometric continuation of the last ratio).
fn distribution_on(
    params: &LaserParams,
    n_max: usize,
) -> Result<(PhotonDistribution, f64), QlwError> {
    // Log-space cumulative product of ratios, one exp-normalize pass.
    let mut logp = Vec::with_capacity(n_max + 1);
    logp.push(0.0f64);
    let mut acc = 0.0f64;
    let mut peak = 0.0f64;
    for n in 0..n_max {
        acc += step_ratio(params, n).ln();
        logp.push(acc);
        if acc > peak {
            peak = acc;
        }
    }
    let mut w: Vec<f64> = logp.iter().map(|&l| (l - peak).exp()).collect();
    let total: f64 = w.iter().sum();
    for x in &mut w {
        *x /= total;
    }
    let rho_end = step_ratio(params, n_max);
    let tail = if rho_end < 1.0 {
        w[n_max] * rho_end / (1.0 - rho_end)
    } else {
        f64::INFINITY
    };
    Ok((PhotonDistribution::from_probabilities(w)?, tail))
}

/// Resolve a truncation request into a concrete cutoff by computing the
/// distribution; returns both so callers never pay twice.
pub fn steady_distribution_with_truncation(
    params: &LaserParams,
    spec: &TruncationSpec,
) -> Result<(PhotonDistribution, Truncation), QlwError> {
    params.validate()?;
    let bound = spec.tail_mass_bound();
    match *spec {
        TruncationSpec::Fixed { n_max, .. } => {
            if n_max < 8 {
                return Err(QlwError::TruncationTooSmall {
                    n_max,
                    reason: "stationary state needs at least 8 levels",
                });
            }
            let (dist, tail) = distribution_on(params, n_max)?;
            if !(tail < bound) {
                return Err(QlwError::TruncationTooSmall {
                    n_max,
                    reason: "estimated tail mass beyond the cutoff exceeds the bound",
                });
            }
            Ok((dist, Truncation { n_max }))
        }
        TruncationSpec::Auto { .. } => {
            let mut n_max = initial_estimate(params).max(8);
            loop {
                let (dist, tail) = distribution_on(params, n_max)?;
                if tail < bound {
                    return Ok((dist, Truncation { n_max }));
                }
                if n_max >= N_MAX_CAP {
                    return Err(QlwError::DivergentDistribution { cap: N_MAX_CAP });
                }
                n_max = (n_max * 2).min(N_MAX_CAP);
            }
        }
    }
}

/// Stationary photon-number distribution for the given operating point.
pub fn steady_distribution(
    params: &LaserParams,
    spec: &TruncationSpec,
) -> Result<PhotonDistribution, QlwError> {
    steady_distribution_with_truncation(params, spec).map(|(d, _)| d)
}

/// Moments `(nbar, var, Q)` of a distribution; `Q` is undefined at zero mean.
pub fn moments(dist: &PhotonDistribution) -> Result<(f64, f64, f64), QlwError> {
    let q = dist.q.ok_or(QlwError::ZeroMean)?;
    Ok((dist.nbar, dist.var, q))
}

/// Evaluate the exact stationary balance identities on a distribution.
///
/// `r1` checks the first-moment (flux) balance
/// `sum_n alpha (n+1) p_n / (1 + chi (n+1)) = gamma (nbar - n_b)`,
/// normalized by `gamma * nbar` (by `gamma` alone for the vacuum).
/// `r2` checks the second-moment balance, normalized by the sum of the
/// absolute values of its terms. Exact steady states give both below 1e-8
/// with huge margin; a 1% perturbation of a single probability lifts `r2`
/// above 1e-6.
pub fn check_balance(dist: &PhotonDistribution, params: &LaserParams) -> BalanceReport {
    let (gamma, n_b, chi) = (params.gamma, params.n_b, params.chi);
    let alpha = params.alpha();
    let nbar = dist.nbar;

    let mut gain_flux = 0.0;
    for (n, &p) in dist.p.iter().enumerate() {
        let np1 = (n + 1) as f64;
        gain_flux += alpha * np1 / (1.0 + chi * np1) * p;
    }
    let denom1 = if nbar > 0.0 { gamma * nbar } else { gamma };
    let r1 = (gain_flux - gamma * (nbar - n_b)).abs() / denom1;

    let mut sum = 0.0;
    let mut sum_abs = 0.0;
    for (n, &p) in dist.p.iter().enumerate() {
        let nf = n as f64;
        let np1 = nf + 1.0;
        let term = p
            * (alpha * np1 * (2.0 * nf + 1.0 - 2.0 * nbar) / (1.0 + chi * np1)
                - 2.0 * nbar * gamma * (n_b - nf)
                + gamma * (n_b * np1 * (2.0 * nf + 1.0) - (1.0 + n_b) * nf * (2.0 * nf - 1.0)));
        sum += term;
        sum_abs += term.abs();
    }
    let r2 = if sum_abs > 0.0 {
        sum.abs() / sum_abs
    } else {
        0.0
    };

    BalanceReport { r1, r2 }
}

/// Infinity-norm residual of the distribution as a fixed point of the
/// assembled population generator, relative to the distribution's peak.
pub fn fixed_point_residual(dist: &PhotonDistribution, gen: &TridiagGenerator) -> f64 {
    let mut gp = vec![0.0; gen.dim()];
    gen.apply(&dist.p, &mut gp);
    let num = gp.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
    let den = dist.p.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
    num / den
}

/// Convenience: distribution and matching population generator together.
pub fn steady_with_generator(
    params: &LaserParams,
    spec: &TruncationSpec,
) -> Result<(PhotonDistribution, TridiagGenerator), QlwError> {
    let (dist, trunc) = steady_distribution_with_truncation(params, spec)?;
    let gen = assemble_diagonal_generator(params, trunc)?;
    Ok((dist, gen))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn auto() -> TruncationSpec {
        TruncationSpec::default()
    }

    #[test]
    fn thermal_state_matches_geometric_moments() {
        let p = LaserParams::new(1.0, 2.0, 1e-3, 0.0, 0.0).unwrap();
        let d = steady_distribution(&p, &auto()).unwrap();
        let (nbar, var, q) = moments(&d).unwrap();
        assert!((nbar - 2.0).abs() < 1e-9, "nbar = {nbar}");
        assert!((var - 6.0).abs() < 1e-8, "var = {var}");
        assert!((q - 2.0).abs() < 1e-8, "q = {q}");
        // Geometric ratio n_b / (1 + n_b) = 2/3.
        assert!((d.p[1] / d.p[0] - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn vacuum_has_no_mandel_q() {
        let p = LaserParams::new(1.0, 0.0, 1e-3, 0.0, 0.0).unwrap();
        let d = steady_distribution(&p, &auto()).unwrap();
        assert!((d.p[0] - 1.0).abs() < 1e-15);
        assert!(matches!(moments(&d), Err(QlwError::ZeroMean)));
    }

    #[test]
    fn laser_point_frozen_moments() {
        // chi = 1e-3, alpha/gamma = 2, n_b = 0.
        let p = LaserParams::from_alpha_ratio(1.0, 0.0, 1e-3, 2.0, 0.0).unwrap();
        let d = steady_distribution(&p, &auto()).unwrap();
        let (nbar, _, q) = moments(&d).unwrap();
        assert!((nbar / 1000.0 - 1.0).abs() < 1e-8, "nbar = {nbar}");
        assert!((q - 1.0).abs() < 1e-8, "q = {q}");
    }

    #[test]
    fn near_threshold_frozen_moments() {
        let p = LaserParams::from_alpha_ratio(1.0, 0.0, 1e-3, 1.2, 0.0).unwrap();
        let d = steady_distribution(&p, &auto()).unwrap();
        let (nbar, _, q) = moments(&d).unwrap();
        assert!((nbar / 200.0000003 - 1.0).abs() < 1e-7, "nbar = {nbar}");
        assert!((q / 4.999999727 - 1.0).abs() < 1e-7, "q = {q}");
    }

    #[test]
    fn thermal_laser_frozen_moments() {
        let p = LaserParams::from_alpha_ratio(1.0, 0.5, 1e-3, 1.2, 0.0).unwrap();
        let d = steady_distribution(&p, &auto()).unwrap();
        let (nbar, _, q) = moments(&d).unwrap();
        assert!((nbar / 200.5000907 - 1.0).abs() < 1e-8, "nbar = {nbar}");
        assert!((q / 7.981202231 - 1.0).abs() < 1e-8, "q = {q}");
    }

    #[test]
    fn balance_residuals_vanish_at_steady_state() {
        for (ar, n_b) in [(2.0, 0.0), (1.2, 0.5), (5.0, 0.0)] {
            let p = LaserParams::from_alpha_ratio(1.0, n_b, 1e-3, ar, 0.0).unwrap();
            let d = steady_distribution(&p, &auto()).unwrap();
            let b = check_balance(&d, &p);
            assert!(b.r1 < 1e-10, "r1 = {} at ar={ar}, n_b={n_b}", b.r1);
            assert!(b.r2 < 1e-10, "r2 = {} at ar={ar}, n_b={n_b}", b.r2);
        }
    }

    #[test]
    fn balance_residual_for_thermal_state() {
        let p = LaserParams::new(1.0, 2.0, 1e-3, 0.0, 0.0).unwrap();
        let d = steady_distribution(&p, &auto()).unwrap();
        let b = check_balance(&d, &p);
        assert!(b.r1 < 1e-12);
        assert!(b.r2 < 1e-12);
    }

    #[test]
    fn perturbed_distribution_trips_r2() {
        let p = LaserParams::from_alpha_ratio(1.0, 0.0, 1e-3, 2.0, 0.0).unwrap();
        let d = steady_distribution(&p, &auto()).unwrap();
        let mut probs = d.p.clone();
        let peak = probs
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap();
        probs[peak] *= 1.01;
        let perturbed = PhotonDistribution::from_probabilities(probs).unwrap();
        let b = check_balance(&perturbed, &p);
        assert!(b.r2 > 1e-6, "r2 = {}", b.r2);
    }

    #[test]
    fn fixed_point_residual_is_tiny() {
        let p = LaserParams::from_alpha_ratio(1.0, 0.5, 1e-3, 2.0, 0.0).unwrap();
        let (d, g) = steady_with_generator(&p, &auto()).unwrap();
        assert!(fixed_point_residual(&d, &g) < 1e-10);
    }

    #[test]
    fn fixed_cutoff_too_small_is_rejected() {
        let p = LaserParams::from_alpha_ratio(1.0, 0.0, 1e-3, 2.0, 0.0).unwrap();
        let spec = TruncationSpec::Fixed {
            n_max: 100,
            tail_mass_bound: 1e-12,
        };
        assert!(matches!(
            steady_distribution(&p, &spec),
            Err(QlwError::TruncationTooSmall { .. })
        ));
        let spec = TruncationSpec::Fixed {
            n_max: 3000,
            tail_mass_bound: 1e-12,
        };
        assert!(steady_distribution(&p, &spec).is_ok());
    }

    #[test]
    fn auto_cutoff_scales_with_the_mean() {
        let p = LaserParams::from_alpha_ratio(1.0, 0.0, 1e-3, 2.0, 0.0).unwrap();
        let (_, t) = steady_distribution_with_truncation(&p, &auto()).unwrap();
        assert!(t.n_max >= 1300 && t.n_max <= 4000, "n_max = {}", t.n_max);
    }
}
