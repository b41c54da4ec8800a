//! End-to-end pipeline for one parameter point: steady state, both numeric
//! linewidth extractors, and the closed-form family, collected into a single
//! report row.

use crate::analytics;
use crate::config::RunConfig;
use crate::dynamics::{
    fit_decay_rate, initial_offdiag, propagate_correlation, slowest_decay_rate, PropagateOptions,
};
use crate::error::QlwError;
use crate::kernels::{assemble_offdiag_generator, GainForm};
use crate::model::{
    CorrelationTrace, LaserParams, OffDiagState, PhotonDistribution, Truncation, TruncationSpec,
};
use crate::steady::{moments, steady_distribution};

/// Knobs of the full pipeline; every `None` resolves adaptively.
#[derive(Debug, Clone, Copy)]
pub struct PipelineOptions {
    /// Validity margin for the closed-form region check.
    pub margin: f64,
    /// Integrator tolerance per unit time.
    pub rtol: f64,
    /// Propagation horizon; `None` picks `ln(25)` e-folds of the predicted
    /// decay, and the fit retries with a doubled horizon when the trace has
    /// not decayed far enough.
    pub t_max: Option<f64>,
    /// Photon-number cutoff; `None` auto-sizes from the tail bound.
    pub n_max: Option<usize>,
    /// Stationary probability mass allowed beyond the cutoff.
    pub tail_mass_bound: f64,
    /// Number of uniformly spaced correlation samples.
    pub samples: usize,
    /// Fit window as fractions of the initial correlation.
    pub window: (f64, f64),
    /// Run the numeric extractors (the expensive part) at all.
    pub with_numeric: bool,
    /// Gain kernel variant for the numeric generator.
    pub gain_form: GainForm,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            margin: 10.0,
            rtol: 1e-8,
            t_max: None,
            n_max: None,
            tail_mass_bound: 1e-12,
            samples: 400,
            window: (0.8, 0.2),
            with_numeric: true,
            gain_form: GainForm::Exact,
        }
    }
}

impl PipelineOptions {
    /// Adopt the numeric knobs of a run configuration.
    pub fn from_config(cfg: &RunConfig) -> Self {
        Self {
            rtol: cfg.rtol,
            t_max: cfg.t_max,
            n_max: cfg.n_max,
            tail_mass_bound: cfg.tail_mass_bound,
            samples: cfg.samples,
            window: (cfg.f_hi, cfg.f_lo),
            ..Self::default()
        }
    }
}

/// Everything the pipeline knows about one parameter point. Closed-form
/// fields are `None` below threshold (and the phase-diffusion width also for
/// thermal occupation, where it is not defined); numeric fields are `None`
/// when the numeric pass is disabled.
#[derive(Debug, Clone)]
pub struct LinewidthReport {
    pub params: LaserParams,
    pub alpha_ratio: f64,
    pub nbar_analytic: Option<f64>,
    pub nbar_numeric: f64,
    pub q_analytic: Option<f64>,
    pub q_numeric: Option<f64>,
    pub lw_eq22: Option<f64>,
    pub lw_eq23: Option<f64>,
    pub lw_eq24: Option<f64>,
    pub lw_eq24a: Option<f64>,
    pub lw_eq28: Option<f64>,
    pub lw_eq31: Option<f64>,
    pub lw_numeric_eig: Option<f64>,
    pub lw_numeric_fit: Option<f64>,
    pub fit_uncertainty: Option<f64>,
    pub valid: bool,
    pub left_ratio: f64,
    pub right_ratio: f64,
    /// Photon-number cutoff actually used.
    pub n_max: usize,
    /// Propagation horizon actually used (0 when numeric is disabled).
    pub t_max: f64,
}

/// Steady state plus one propagated correlation trace, for callers that
/// want the raw trajectory rather than the fitted report.
#[derive(Debug, Clone)]
pub struct Propagated {
    pub dist: PhotonDistribution,
    pub trace: CorrelationTrace,
    pub snapshots: Vec<OffDiagState>,
    pub t_max: f64,
}

fn truncation_spec(opts: &PipelineOptions) -> TruncationSpec {
    match opts.n_max {
        Some(n_max) => TruncationSpec::Fixed {
            n_max,
            tail_mass_bound: opts.tail_mass_bound,
        },
        None => TruncationSpec::Auto {
            tail_mass_bound: opts.tail_mass_bound,
        },
    }
}

/// Decay-rate guess used to size the propagation horizon: half the
/// closed-form width above threshold, half the loss rate otherwise.
fn predicted_rate(params: &LaserParams) -> f64 {
    match analytics::linewidth_eq24(params) {
        Ok(w) => 0.5 * w,
        Err(_) => 0.5 * params.gamma,
    }
}

/// Initial condition for the correlation: one annihilation step from the
/// steady state, or from the first excited number state when the steady
/// state is the vacuum and carries no signal.
fn initial_state(dist: &PhotonDistribution) -> OffDiagState {
    let c0 = initial_offdiag(dist);
    if c0.weighted_sum() > 0.0 {
        c0
    } else {
        let mut c = vec![0.0; dist.n_max().max(8)];
        c[0] = 1.0;
        OffDiagState { c, t: 0.0 }
    }
}

/// Steady state and correlation trace at one parameter point, without any
/// fitting; `snapshot_every` as in [`PropagateOptions`].
pub fn correlation_pipeline(
    params: &LaserParams,
    opts: &PipelineOptions,
    snapshot_every: Option<usize>,
) -> Result<Propagated, QlwError> {
    params.validate()?;
    let dist = steady_distribution(params, &truncation_spec(opts))?;
    let g1 = assemble_offdiag_generator(
        params,
        Truncation {
            n_max: dist.n_max(),
        },
        opts.gain_form,
    )?;
    let c0 = initial_state(&dist);
    let t_max = opts
        .t_max
        .unwrap_or_else(|| 25f64.ln() / predicted_rate(params));
    let prop = PropagateOptions {
        rtol: opts.rtol,
        snapshot_every,
        ..Default::default()
    };
    let (trace, snapshots) = propagate_correlation(&c0, &g1, t_max, opts.samples, &prop)?;
    Ok(Propagated {
        dist,
        trace,
        snapshots,
        t_max,
    })
}

/// Full report for one parameter point: steady state, closed forms, and —
/// unless disabled — the two numeric linewidth extractors, with the
/// propagation horizon doubled up to twice when the fit window is not
/// reached.
pub fn linewidth_report(
    params: &LaserParams,
    opts: &PipelineOptions,
) -> Result<LinewidthReport, QlwError> {
    params.validate()?;
    let dist = steady_distribution(params, &truncation_spec(opts))?;
    let (nbar_num, _var, q_num) = match moments(&dist) {
        Ok((n, v, q)) => (n, v, Some(q)),
        Err(QlwError::ZeroMean) => (0.0, 0.0, None),
        Err(e) => return Err(e),
    };

    let nbar_an = analytics::mean_photon(params).ok();
    let q_an = analytics::mandel_q(params).ok();
    let lw_eq22 =
        nbar_an.map(|n| analytics::linewidth_eq22(n, params.chi, params.gamma, params.n_b));
    let lw_eq23 = nbar_an.and_then(|n| analytics::linewidth_eq23(n, params).ok());
    let lw_eq24 = analytics::linewidth_eq24(params).ok();
    let lw_eq24a = analytics::linewidth_far(params).ok();
    let lw_eq28 = match (nbar_an, q_an) {
        (Some(n), Some(q)) => Some(analytics::linewidth_eq28(n, q, params.gamma, params.n_b)),
        _ => None,
    };
    let lw_eq31 = analytics::linewidth_pd(params).ok();
    let validity = analytics::validity(params, opts.margin);

    let mut lw_eig = None;
    let mut lw_fit = None;
    let mut fit_unc = None;
    let mut t_used = 0.0;
    if opts.with_numeric {
        let g1 = assemble_offdiag_generator(
            params,
            Truncation {
                n_max: dist.n_max(),
            },
            opts.gain_form,
        )?;
        lw_eig = Some(2.0 * slowest_decay_rate(&g1)?);
        let c0 = initial_state(&dist);
        let mut t_max = opts
            .t_max
            .unwrap_or_else(|| 25f64.ln() / predicted_rate(params));
        let prop = PropagateOptions {
            rtol: opts.rtol,
            ..Default::default()
        };
        let mut attempt = 0;
        let fit = loop {
            let (trace, _) = propagate_correlation(&c0, &g1, t_max, opts.samples, &prop)?;
            match fit_decay_rate(&trace, opts.window) {
                Ok(fit) => break fit,
                Err(QlwError::WindowNotReached { .. }) if attempt < 2 => {
                    attempt += 1;
                    t_max *= 2.0;
                }
                Err(e) => return Err(e),
            }
        };
        t_used = t_max;
        lw_fit = Some(fit.delta_omega);
        fit_unc = Some(fit.uncertainty);
    }

    Ok(LinewidthReport {
        params: *params,
        alpha_ratio: params.alpha_ratio(),
        nbar_analytic: nbar_an,
        nbar_numeric: nbar_num,
        q_analytic: q_an,
        q_numeric: q_num,
        lw_eq22,
        lw_eq23,
        lw_eq24,
        lw_eq24a,
        lw_eq28,
        lw_eq31,
        lw_numeric_eig: lw_eig,
        lw_numeric_fit: lw_fit,
        fit_uncertainty: fit_unc,
        valid: validity.valid,
        left_ratio: validity.left_ratio,
        right_ratio: validity.right_ratio,
        n_max: dist.n_max(),
        t_max: t_used,
    })
}
