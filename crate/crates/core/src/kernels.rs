//! Gain-kernel coefficients and assembly of the tridiagonal generators for
//! the two sectors of the density matrix that the pipeline needs.
//!
//! One atom crossing the cavity maps the field density matrix element
//! `sigma_{n,m}` to `A_{n,m} sigma_{n,m} + B_{n-1,m-1} sigma_{n-1,m-1}`;
//! averaging over a Poissonian beam of injection rate `r` and adding thermal
//! cavity loss produces, sector by sector in `k = n - m`, a real tridiagonal
//! generator. Populations (`k = 0`) and the first off-diagonal (`k = 1`) are
//! all the linewidth computation requires: the sectors never mix.

use crate::error::QlwError;
use crate::model::{LaserParams, Truncation};

/// Which density-matrix sector a generator acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sector {
    /// Populations `p_n`, indices `n = 0..=n_max`.
    Diagonal,
    /// Coherences `c_n = sigma_{n-1,n}`, indices `n = 1..=n_max`.
    OffDiag1,
}

/// Whether the gain coefficients keep their full denominators or drop the
/// `chi^2` correction that is negligible for saturation photon numbers well
/// above one.
///
/// `Exact` is the default everywhere in the pipeline; `LeadingOrder` exists
/// so tests can measure the size of the dropped terms instead of assuming it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GainForm {
    /// Full coefficients, `chi^2 (n-m)^2 / 8` retained in the denominator.
    #[default]
    Exact,
    /// `chi^2` terms dropped (exact on the diagonal, where they vanish).
    LeadingOrder,
}

/// Real tridiagonal generator `d x / dt = G x`, stored as three vectors.
///
/// `sub[i]` couples row `i` to `i-1` (with `sub[0] = 0`), `sup[i]` couples
/// row `i` to `i+1` (with `sup[dim-1] = 0`). Couplings are nonnegative rates,
/// so `D G D^-1` is symmetric for a positive diagonal `D` and the spectrum is
/// real.
#[derive(Debug, Clone, PartialEq)]
pub struct TridiagGenerator {
    pub sub: Vec<f64>,
    pub diag: Vec<f64>,
    pub sup: Vec<f64>,
    pub sector: Sector,
}

impl TridiagGenerator {
    /// Number of rows.
    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    /// Dense matrix-vector product `y = G x`.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        let n = self.dim();
        debug_assert_eq!(x.len(), n);
        debug_assert_eq!(y.len(), n);
        for i in 0..n {
            let mut acc = self.diag[i] * x[i];
            if i > 0 {
                acc += self.sub[i] * x[i - 1];
            }
            if i + 1 < n {
                acc += self.sup[i] * x[i + 1];
            }
            y[i] = acc;
        }
    }

    /// Column sums of the full matrix; zero columns mean conservation of the
    /// summed quantity.
    pub fn column_sums(&self) -> Vec<f64> {
        let n = self.dim();
        let mut s = vec![0.0; n];
        for j in 0..n {
            let mut acc = self.diag[j];
            if j + 1 < n {
                acc += self.sub[j + 1];
            }
            if j > 0 {
                acc += self.sup[j - 1];
            }
            s[j] = acc;
        }
        s
    }
}

/// Shared denominator of the gain coefficients.
fn gain_denominator(n: u64, m: u64, chi: f64, form: GainForm) -> f64 {
    let s = (n + m + 2) as f64;
    let d = n as f64 - m as f64;
    let chi2_term = match form {
        GainForm::Exact => chi * chi * d * d / 8.0,
        GainForm::LeadingOrder => 0.0,
    };
    2.0 + chi * s + chi2_term
}

/// Diagonal gain coefficient `A_{n,m}` with a selectable denominator form.
pub fn gain_a_form(n: u64, m: u64, chi: f64, form: GainForm) -> f64 {
    let s = (n + m + 2) as f64;
    (2.0 + 0.5 * chi * s) / gain_denominator(n, m, chi, form)
}

/// Ladder gain coefficient `B_{n,m}` with a selectable denominator form.
pub fn gain_b_form(n: u64, m: u64, chi: f64, form: GainForm) -> f64 {
    let x = ((n + 1) as f64).sqrt() * ((m + 1) as f64).sqrt();
    chi * x / gain_denominator(n, m, chi, form)
}

/// Diagonal gain coefficient `A_{n,m}`, full form.
pub fn gain_a(n: u64, m: u64, chi: f64) -> f64 {
    gain_a_form(n, m, chi, GainForm::Exact)
}

/// Ladder gain coefficient `B_{n,m}`, full form.
pub fn gain_b(n: u64, m: u64, chi: f64) -> f64 {
    gain_b_form(n, m, chi, GainForm::Exact)
}

fn check_truncation(trunc: Truncation) -> Result<usize, QlwError> {
    if trunc.n_max < 8 {
        return Err(QlwError::TruncationTooSmall {
            n_max: trunc.n_max,
            reason: "generator needs at least 8 photon levels",
        });
    }
    Ok(trunc.n_max)
}

/// Generator of the population sector, `d p / dt = G_d p`, on `n = 0..=n_max`.
///
/// Upward rate from `n` is `r B_{n,n} + gamma n_b (n+1)` (gain plus thermal
/// absorption), downward rate is `gamma (1+n_b) n`. The boundary is
/// reflecting: no flow leaves `n_max`, so every column of `G_d` sums to zero
/// and total probability is conserved exactly.
pub fn assemble_diagonal_generator(
    params: &LaserParams,
    trunc: Truncation,
) -> Result<TridiagGenerator, QlwError> {
    params.validate()?;
    let n_max = check_truncation(trunc)?;
    let dim = n_max + 1;
    let (gamma, n_b, chi) = (params.gamma, params.n_b, params.chi);
    let alpha = params.alpha();

    // up[n] = rate n -> n+1, down[n] = rate n -> n-1.
    let up = |n: usize| -> f64 {
        let np1 = (n + 1) as f64;
        alpha * np1 / (1.0 + chi * np1) + gamma * n_b * np1
    };
    let down = |n: usize| -> f64 { gamma * (1.0 + n_b) * n as f64 };

    let mut sub = vec![0.0; dim];
    let mut diag = vec![0.0; dim];
    let mut sup = vec![0.0; dim];
    for i in 0..dim {
        let out_up = if i < n_max { up(i) } else { 0.0 };
        diag[i] = -(out_up + down(i));
        if i > 0 {
            sub[i] = up(i - 1);
        }
        if i + 1 < dim {
            sup[i] = down(i + 1);
        }
    }
    Ok(TridiagGenerator {
        sub,
        diag,
        sup,
        sector: Sector::Diagonal,
    })
}

/// Generator of the first off-diagonal sector, `d c / dt = G_1 c`, on
/// `c_n = sigma_{n-1,n}`, `n = 1..=n_max` (row `i` holds `n = i + 1`).
///
/// Row `n`:
/// `dc_n/dt = [r (A_{n-1,n} - 1) - (gamma/2)(1+n_b)(2n-1) - (gamma/2) n_b (2n+1)] c_n`
/// `        + [r B_{n-2,n-1} + gamma n_b sqrt((n-1)n)] c_{n-1}`
/// `        + gamma (1+n_b) sqrt(n(n+1)) c_{n+1}`.
pub fn assemble_offdiag_generator(
    params: &LaserParams,
    trunc: Truncation,
    form: GainForm,
) -> Result<TridiagGenerator, QlwError> {
    params.validate()?;
    let n_max = check_truncation(trunc)?;
    let (gamma, n_b, chi, r) = (params.gamma, params.n_b, params.chi, params.r);
    let q = match form {
        GainForm::Exact => chi * chi / 8.0,
        GainForm::LeadingOrder => 0.0,
    };

    let mut sub = vec![0.0; n_max];
    let mut diag = vec![0.0; n_max];
    let mut sup = vec![0.0; n_max];
    for i in 0..n_max {
        let n = (i + 1) as f64;
        // A_{n-1,n} - 1 and B_{n-2,n-1} written directly from the closed
        // forms; the sqrt((n-1)n) factor makes the n = 1 row couple to
        // nothing below it, as it must.
        let d_here = 2.0 + chi * (2.0 * n + 1.0) + q;
        let d_below = 2.0 + chi * (2.0 * n - 1.0) + q;
        let a_minus_1 = -(chi * (n + 0.5) + q) / d_here;
        let ladder = ((n - 1.0) * n).sqrt();
        diag[i] = r * a_minus_1
            - 0.5 * gamma * (1.0 + n_b) * (2.0 * n - 1.0)
            - 0.5 * gamma * n_b * (2.0 * n + 1.0);
        sub[i] = (r * chi / d_below + gamma * n_b) * ladder;
        if i + 1 < n_max {
            sup[i] = gamma * (1.0 + n_b) * (n * (n + 1.0)).sqrt();
        }
    }
    Ok(TridiagGenerator {
        sub,
        diag,
        sup,
        sector: Sector::OffDiag1,
    })
}

/// Action of the thermal-loss generator on a dense density matrix, as a
/// reference implementation for verifying moment laws and the tridiagonal
/// assemblies. `rho` is row-major `dim x dim`; returns `d rho / dt`.
///
/// `(L rho)_{nm} = gamma (1+n_b) [sqrt((n+1)(m+1)) rho_{n+1,m+1} - (n+m)/2 rho_{nm}]`
/// `             + gamma n_b [sqrt(n m) rho_{n-1,m-1} - (n+m+2)/2 rho_{nm}]`.
pub fn loss_dense_action(rho: &[f64], dim: usize, gamma: f64, n_b: f64) -> Vec<f64> {
    assert_eq!(rho.len(), dim * dim);
    let at = |n: usize, m: usize| rho[n * dim + m];
    let mut out = vec![0.0; dim * dim];
    for n in 0..dim {
        for m in 0..dim {
            let mut v = -gamma * (1.0 + n_b) * 0.5 * (n + m) as f64 * at(n, m)
                - gamma * n_b * 0.5 * (n + m + 2) as f64 * at(n, m);
            if n + 1 < dim && m + 1 < dim {
                v += gamma * (1.0 + n_b) * (((n + 1) * (m + 1)) as f64).sqrt() * at(n + 1, m + 1);
            }
            if n > 0 && m > 0 {
                v += gamma * n_b * ((n * m) as f64).sqrt() * at(n - 1, m - 1);
            }
            out[n * dim + m] = v;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trunc(n_max: usize) -> Truncation {
        Truncation { n_max }
    }

    #[test]
    fn gain_a_frozen_values() {
        // chi = 0.1: A(0,0) = 1 - 0.1/2.2, A(1,0) includes the chi^2/8 term.
        assert!((gain_a(0, 0, 0.1) - 0.954_545_454_545_454_5).abs() < 1e-15);
        assert!((gain_a(1, 0, 0.1) - (1.0 - 0.151_25 / 2.301_25)).abs() < 1e-15);
        let expect: f64 = 1.0 - 0.151_25 / 2.301_25;
        assert!((expect - 0.934_274_851).abs() < 1e-9);
    }

    #[test]
    fn gain_b_frozen_value() {
        assert!((gain_b(0, 0, 0.1) - 0.045_454_545_454_545_46).abs() < 1e-15);
    }

    #[test]
    fn gain_small_chi_limits() {
        for &(n, m) in &[(0u64, 0u64), (3, 7), (100, 99)] {
            assert!((gain_a(n, m, 1e-12) - 1.0).abs() < 1e-9);
            assert!(gain_b(n, m, 1e-12) < 1e-9);
        }
    }

    #[test]
    fn gain_trace_preservation_on_diagonal() {
        for n in [0u64, 1, 5, 100, 10_000] {
            for chi in [1e-4, 1e-2, 0.5] {
                let s = gain_a(n, n, chi) + gain_b(n, n, chi);
                assert!((s - 1.0).abs() < 1e-12, "A+B = {s} at n={n}, chi={chi}");
            }
        }
    }

    #[test]
    fn leading_order_matches_exact_on_diagonal_only() {
        let chi = 0.1;
        assert_eq!(
            gain_a(4, 4, chi),
            gain_a_form(4, 4, chi, GainForm::LeadingOrder)
        );
        assert!(gain_a(4, 3, chi) != gain_a_form(4, 3, chi, GainForm::LeadingOrder));
    }

    #[test]
    fn diagonal_generator_conserves_probability() {
        let p = LaserParams::from_alpha_ratio(1.0, 0.3, 1e-2, 2.0, 0.0).unwrap();
        let g = assemble_diagonal_generator(&p, trunc(64)).unwrap();
        for (j, s) in g.column_sums().iter().enumerate() {
            assert!(s.abs() < 1e-12, "column {j} sums to {s}");
        }
    }

    #[test]
    fn diagonal_generator_empty_cavity_is_pure_decay() {
        let p = LaserParams::new(1.0, 0.0, 1e-3, 0.0, 0.0).unwrap();
        let g = assemble_diagonal_generator(&p, trunc(16)).unwrap();
        for i in 0..g.dim() {
            assert_eq!(g.sub[i], 0.0);
            assert!((g.diag[i] + i as f64).abs() < 1e-15);
            if i + 1 < g.dim() {
                assert!((g.sup[i] - (i + 1) as f64).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn diagonal_rate_ratio_crosses_one_at_saturation() {
        // gamma=1, n_b=0, chi=1e-3, alpha=2: up/down crosses 1 at n+1 = 1000.
        let p = LaserParams::from_alpha_ratio(1.0, 0.0, 1e-3, 2.0, 0.0).unwrap();
        let g = assemble_diagonal_generator(&p, trunc(1200)).unwrap();
        // up(n) = sub[n+1], down(n+1) = gamma * (n+1).
        let ratio = |n: usize| g.sub[n + 1] / ((n + 1) as f64);
        assert!(ratio(998) > 1.0);
        assert!((ratio(999) - 1.0).abs() < 1e-12);
        assert!(ratio(1000) < 1.0);
    }

    #[test]
    fn offdiag_structure_empty_cavity() {
        let p = LaserParams::new(1.0, 0.0, 1e-3, 0.0, 0.0).unwrap();
        let g = assemble_offdiag_generator(&p, trunc(32), GainForm::Exact).unwrap();
        for i in 0..g.dim() {
            let n = (i + 1) as f64;
            assert_eq!(g.sub[i], 0.0);
            assert!((g.diag[i] + 0.5 * (2.0 * n - 1.0)).abs() < 1e-15);
            if i + 1 < g.dim() {
                assert!((g.sup[i] - (n * (n + 1.0)).sqrt()).abs() < 1e-15);
            }
        }
    }

    /// With r = 0 and n_b = 0 the weighted sum decays at exactly gamma/2 for
    /// any state: the sub-couplings vanish, so the identity survives
    /// truncation in every column.
    #[test]
    fn weighted_sum_decays_at_half_gamma_empty_cavity() {
        let p = LaserParams::new(1.0, 0.0, 1e-3, 0.0, 0.0).unwrap();
        let g = assemble_offdiag_generator(&p, trunc(64), GainForm::Exact).unwrap();
        let c: Vec<f64> = (0..g.dim())
            .map(|i| (i as f64 * 0.37).sin() + 1.5)
            .collect();
        let mut dc = vec![0.0; g.dim()];
        g.apply(&c, &mut dc);
        let w = |v: &[f64]| -> f64 {
            v.iter()
                .enumerate()
                .map(|(i, &x)| ((i + 1) as f64).sqrt() * x)
                .sum()
        };
        let lhs = w(&dc);
        let rhs = -0.5 * w(&c);
        assert!((lhs - rhs).abs() < 1e-12 * rhs.abs());
    }

    /// Same identity with thermal photons, checked away from the boundary
    /// where truncation cuts a sub-coupling.
    #[test]
    fn weighted_sum_decays_at_half_gamma_thermal_interior() {
        let p = LaserParams::new(1.0, 1.5, 1e-3, 0.0, 0.0).unwrap();
        let g = assemble_offdiag_generator(&p, trunc(96), GainForm::Exact).unwrap();
        let dim = g.dim();
        let mut c = vec![0.0; dim];
        for (i, x) in c.iter_mut().enumerate().take(dim - 2) {
            let d = (i as f64 - 30.0) / 8.0;
            *x = (-0.5 * d * d).exp();
        }
        let mut dc = vec![0.0; dim];
        g.apply(&c, &mut dc);
        let w = |v: &[f64]| -> f64 {
            v.iter()
                .enumerate()
                .map(|(i, &x)| ((i + 1) as f64).sqrt() * x)
                .sum()
        };
        assert!((w(&dc) + 0.5 * w(&c)).abs() < 1e-10 * w(&c).abs());
    }

    #[test]
    fn offdiag_couplings_nonnegative_diag_negative() {
        let p = LaserParams::from_alpha_ratio(1.0, 0.7, 5e-3, 3.0, 0.0).unwrap();
        let g = assemble_offdiag_generator(&p, trunc(256), GainForm::Exact).unwrap();
        for i in 0..g.dim() {
            assert!(g.sub[i] >= 0.0);
            assert!(g.sup[i] >= 0.0);
            assert!(g.diag[i] < 0.0);
        }
    }

    #[test]
    fn truncation_guard() {
        let p = LaserParams::from_alpha_ratio(1.0, 0.0, 1e-3, 2.0, 0.0).unwrap();
        assert!(matches!(
            assemble_offdiag_generator(&p, trunc(7), GainForm::Exact),
            Err(QlwError::TruncationTooSmall { .. })
        ));
        assert!(matches!(
            assemble_diagonal_generator(&p, trunc(4)),
            Err(QlwError::TruncationTooSmall { .. })
        ));
    }

    /// The dense loss action restricted to the diagonal and first
    /// off-diagonal must reproduce the tridiagonal assemblies at r = 0.
    #[test]
    fn dense_loss_matches_tridiagonal_sectors() {
        let dim = 12;
        let gamma = 1.3;
        let n_b = 0.8;
        let p = LaserParams::new(gamma, n_b, 1e-3, 0.0, 0.0).unwrap();
        let gd = assemble_diagonal_generator(&p, trunc(dim - 1)).unwrap();
        let g1 = assemble_offdiag_generator(&p, trunc(dim - 1), GainForm::Exact).unwrap();

        // Diagonal sector: feed a single population and read the column.
        for j in 0..dim - 1 {
            let mut rho = vec![0.0; dim * dim];
            rho[j * dim + j] = 1.0;
            let d = loss_dense_action(&rho, dim, gamma, n_b);
            for i in 0..dim - 1 {
                let dense = d[i * dim + i];
                let tri = if i == j {
                    gd.diag[i]
                } else if i == j + 1 {
                    gd.sub[i]
                } else if i + 1 == j {
                    gd.sup[i]
                } else {
                    0.0
                };
                // The reflecting boundary of the tridiagonal form
                // intentionally differs from the dense leak at n_max.
                if j < dim - 2 && i < dim - 2 {
                    assert!((dense - tri).abs() < 1e-13, "diag sector ({i},{j})");
                }
            }
        }

        // Off-diagonal sector: c_n = rho_{n-1,n}.
        for j in 1..dim - 1 {
            let mut rho = vec![0.0; dim * dim];
            rho[(j - 1) * dim + j] = 1.0;
            let d = loss_dense_action(&rho, dim, gamma, n_b);
            for i in 1..dim - 1 {
                let dense = d[(i - 1) * dim + i];
                let (ri, rj) = (i - 1, j - 1);
                let tri = if ri == rj {
                    g1.diag[ri]
                } else if ri == rj + 1 {
                    g1.sub[ri]
                } else if ri + 1 == rj {
                    g1.sup[ri]
                } else {
                    0.0
                };
                if j < dim - 2 && i < dim - 2 {
                    assert!((dense - tri).abs() < 1e-13, "offdiag sector ({i},{j})");
                }
            }
        }
    }
}
