//! Value types shared across the pipeline: operating-point parameters,
//! photon-number truncation, distributions, off-diagonal states, and
//! correlation traces.

use serde::{Deserialize, Serialize};

use crate::error::QlwError;

/// Operating point of the laser, in units where rates are absolute numbers
/// (the cavity decay rate `gamma` is conventionally set to 1 and defines the
/// unit of time).
///
/// `g` and `Gamma` of the lasing transition never appear individually; they
/// enter only through the saturation parameter `chi = 4 g^2 / Gamma^2`, whose
/// inverse is the saturation photon number. The linear gain rate is
/// `alpha = r * chi / 2` for injection rate `r`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaserParams {
    /// Cavity (loss) decay rate.
    pub gamma: f64,
    /// Thermal occupation of the loss bath.
    pub n_b: f64,
    /// Saturation parameter of the gain medium.
    pub chi: f64,
    /// Injection rate of inverted atoms.
    pub r: f64,
    /// Optical carrier frequency; only shifts the spectrum center.
    pub nu: f64,
}

impl LaserParams {
    /// Validated constructor from the raw injection rate `r`.
    pub fn new(gamma: f64, n_b: f64, chi: f64, r: f64, nu: f64) -> Result<Self, QlwError> {
        let p = Self {
            gamma,
            n_b,
            chi,
            r,
            nu,
        };
        p.validate()?;
        Ok(p)
    }

    /// Validated constructor from the above-threshold ratio `alpha/gamma`.
    pub fn from_alpha_ratio(
        gamma: f64,
        n_b: f64,
        chi: f64,
        alpha_ratio: f64,
        nu: f64,
    ) -> Result<Self, QlwError> {
        if !(chi > 0.0) || !chi.is_finite() {
            return Err(QlwError::NonPositiveRate {
                name: "chi",
                value: chi,
            });
        }
        let r = 2.0 * alpha_ratio * gamma / chi;
        Self::new(gamma, n_b, chi, r, nu)
    }

    /// Check all parameter invariants.
    pub fn validate(&self) -> Result<(), QlwError> {
        if !(self.gamma > 0.0) || !self.gamma.is_finite() {
            return Err(QlwError::NonPositiveRate {
                name: "gamma",
                value: self.gamma,
            });
        }
        if !(self.chi > 0.0) || !self.chi.is_finite() {
            return Err(QlwError::NonPositiveRate {
                name: "chi",
                value: self.chi,
            });
        }
        if !(self.r >= 0.0) || !self.r.is_finite() {
            return Err(QlwError::NonPositiveRate {
                name: "r",
                value: self.r,
            });
        }
        if !(self.n_b >= 0.0) || !self.n_b.is_finite() {
            return Err(QlwError::NegativeThermal(self.n_b));
        }
        if !self.nu.is_finite() {
            return Err(QlwError::NonPositiveRate {
                name: "nu",
                value: self.nu,
            });
        }
        Ok(())
    }

    /// Linear gain rate `alpha = r * chi / 2`.
    pub fn alpha(&self) -> f64 {
        self.r * self.chi / 2.0
    }

    /// Above-threshold ratio `alpha / gamma`.
    pub fn alpha_ratio(&self) -> f64 {
        self.alpha() / self.gamma
    }

    /// True strictly above threshold (`alpha > gamma`).
    pub fn is_above_threshold(&self) -> bool {
        self.alpha() > self.gamma
    }
}

/// Resolved photon-number cutoff: states live on `n = 0..=n_max`
/// (populations) or `n = 1..=n_max` (first off-diagonal).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Truncation {
    /// Largest photon number retained.
    pub n_max: usize,
}

/// How to pick the cutoff: a fixed value, or automatic growth until the
/// estimated stationary tail mass beyond the cutoff drops below a bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TruncationSpec {
    /// Grow from a moment-based estimate, doubling until the tail mass beyond
    /// `n_max` is below `tail_mass_bound`.
    Auto { tail_mass_bound: f64 },
    /// Use exactly this cutoff; fails if the tail mass bound is violated.
    Fixed { n_max: usize, tail_mass_bound: f64 },
}

impl Default for TruncationSpec {
    fn default() -> Self {
        TruncationSpec::Auto {
            tail_mass_bound: 1e-12,
        }
    }
}

impl TruncationSpec {
    /// Tail mass bound carried by either variant.
    pub fn tail_mass_bound(&self) -> f64 {
        match *self {
            TruncationSpec::Auto { tail_mass_bound } => tail_mass_bound,
            TruncationSpec::Fixed {
                tail_mass_bound, ..
            } => tail_mass_bound,
        }
    }
}

/// Normalized photon-number distribution with its stored moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhotonDistribution {
    /// `p[n]` is the probability of `n` photons; sums to 1 within 1e-12.
    pub p: Vec<f64>,
    /// Mean photon number.
    pub nbar: f64,
    /// Photon-number variance.
    pub var: f64,
    /// Mandel Q = var/nbar - 1; `None` when the mean vanishes.
    pub q: Option<f64>,
}

impl PhotonDistribution {
    /// Build from raw probabilities, normalizing and computing moments.
    /// Rejects negative entries and all-zero input.
    pub fn from_probabilities(mut p: Vec<f64>) -> Result<Self, QlwError> {
        if p.is_empty() {
            return Err(QlwError::TruncationTooSmall {
                n_max: 0,
                reason: "empty distribution",
            });
        }
        let mut total = 0.0;
        for &x in &p {
            if !(x >= 0.0) || !x.is_finite() {
                return Err(QlwError::NonFiniteState { t: 0.0 });
            }
            total += x;
        }
        if total <= 0.0 {
            return Err(QlwError::ZeroMean);
        }
        for x in &mut p {
            *x /= total;
        }
        let mut nbar = 0.0;
        for (n, &x) in p.iter().enumerate() {
            nbar += n as f64 * x;
        }
        // Second pass around the mean avoids cancellation for narrow
        // distributions centered at large n.
        let mut var = 0.0;
        for (n, &x) in p.iter().enumerate() {
            let d = n as f64 - nbar;
            var += d * d * x;
        }
        let q = if nbar > 0.0 {
            Some(var / nbar - 1.0)
        } else {
            None
        };
        Ok(Self { p, nbar, var, q })
    }

    /// Largest photon number represented.
    pub fn n_max(&self) -> usize {
        self.p.len() - 1
    }

    /// Probability mass in the last `k` bins; a boundary-pressure diagnostic.
    pub fn boundary_mass(&self, k: usize) -> f64 {
        let start = self.p.len().saturating_sub(k);
        self.p[start..].iter().sum()
    }
}

/// First off-diagonal sector: `c[i]` holds the coefficient for `n = i + 1`
/// (there is no `n = 0` element in this sector).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OffDiagState {
    /// Coefficients `c_n`, `n = 1..=n_max`.
    pub c: Vec<f64>,
    /// Time at which this state was sampled.
    pub t: f64,
}

impl OffDiagState {
    /// The weighted sum `sum_n sqrt(n) c_n`, i.e. the field correlation value
    /// this state contributes.
    pub fn weighted_sum(&self) -> f64 {
        self.c
            .iter()
            .enumerate()
            .map(|(i, &c)| ((i + 1) as f64).sqrt() * c)
            .sum()
    }
}

/// Which route produced a correlation trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TraceMethod {
    /// Adaptive implicit time integration of the off-diagonal sector.
    ExplicitIntegration,
    /// Reconstruction from the dominant eigenpair.
    Eigen,
}

/// Sampled two-time field correlation `g(t)` (real on resonance).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationTrace {
    /// Sample times, ascending, starting at 0.
    pub times: Vec<f64>,
    /// `g(t_k)`; `values[0]` equals the mean photon number of the initial
    /// state within 1e-10.
    pub values: Vec<f64>,
    /// Cutoff used by the propagation.
    pub truncation: Truncation,
    /// Provenance of the samples.
    pub method: TraceMethod,
}

impl CorrelationTrace {
    /// Number of samples.
    pub fn len(&self) -> usize {
        self.times.len()
    }

    /// True when the trace holds no samples.
    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn params_validation_catches_each_field() {
        assert!(matches!(
            LaserParams::new(0.0, 0.0, 1e-3, 1.0, 0.0),
            Err(QlwError::NonPositiveRate { name: "gamma", .. })
        ));
        assert!(matches!(
            LaserParams::new(1.0, 0.0, 0.0, 1.0, 0.0),
            Err(QlwError::NonPositiveRate { name: "chi", .. })
        ));
        assert!(matches!(
            LaserParams::new(1.0, 0.0, 1e-3, -1.0, 0.0),
            Err(QlwError::NonPositiveRate { name: "r", .. })
        ));
        assert!(matches!(
            LaserParams::new(1.0, -0.5, 1e-3, 1.0, 0.0),
            Err(QlwError::NegativeThermal(_))
        ));
        assert!(LaserParams::new(1.0, 0.0, 1e-3, 0.0, 0.0).is_ok());
    }

    #[test]
    fn alpha_ratio_round_trip() {
        let p = LaserParams::from_alpha_ratio(1.0, 0.0, 1e-3, 2.0, 0.0).unwrap();
        assert!((p.alpha() - 2.0).abs() < 1e-14);
        assert!((p.alpha_ratio() - 2.0).abs() < 1e-14);
        assert!((p.r - 4000.0).abs() < 1e-9);
        assert!(p.is_above_threshold());
    }

    #[test]
    fn distribution_moments_number_state() {
        let mut p = vec![0.0; 8];
        p[5] = 1.0;
        let d = PhotonDistribution::from_probabilities(p).unwrap();
        assert_eq!(d.nbar, 5.0);
        assert_eq!(d.var, 0.0);
        assert_eq!(d.q, Some(-1.0));
    }

    #[test]
    fn distribution_rejects_negative_and_empty() {
        assert!(PhotonDistribution::from_probabilities(vec![0.5, -0.1]).is_err());
        assert!(PhotonDistribution::from_probabilities(vec![]).is_err());
        assert!(PhotonDistribution::from_probabilities(vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn vacuum_state_has_no_q() {
        let d = PhotonDistribution::from_probabilities(vec![1.0, 0.0]).unwrap();
        assert_eq!(d.nbar, 0.0);
        assert_eq!(d.q, None);
    }

    #[test]
    fn weighted_sum_counts_from_n_equals_one() {
        let s = OffDiagState {
            c: vec![1.0, 1.0, 0.0],
            t: 0.0,
        };
        let expect = 1.0 + 2.0_f64.sqrt();
        assert!((s.weighted_sum() - expect).abs() < 1e-15);
    }

    #[test]
    fn serde_round_trip() {
        let p = LaserParams::from_alpha_ratio(1.0, 0.5, 1e-3, 2.0, 0.0).unwrap();
        let s = serde_json::to_string(&p).unwrap();
        let back: LaserParams = serde_json::from_str(&s).unwrap();
        assert_eq!(p, back);
    }
}
