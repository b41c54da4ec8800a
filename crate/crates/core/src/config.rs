//! Run configuration: a flat `key = value` file with `#` comments.
//!
//! Every knob of a run lives here so that a CSV header carrying the resolved
//! config reproduces the run exactly. Parsing is strict: unknown keys,
//! malformed numbers, and missing required keys are errors with file/line
//! context rather than silent defaults.

use std::fmt;
use std::path::Path;

use crate::error::QlwError;
use crate::model::LaserParams;

/// Spacing of the sweep grid over the pump ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GridScale {
    #[default]
    Log,
    Linear,
}

impl fmt::Display for GridScale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GridScale::Log => write!(f, "log"),
            GridScale::Linear => write!(f, "linear"),
        }
    }
}

/// Configuration error carrying its origin; renders as `path:line: message`.
/// Line 0 marks file-level problems such as missing required keys.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub path: String,
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.path, self.line, self.message)
    }
}

impl std::error::Error for ConfigError {}

/// Fully resolved run configuration.
///
/// The pump is specified either directly (`r`) or as the threshold ratio
/// (`alpha_ratio`); exactly one must be present. Optional values left as
/// `None` are resolved adaptively downstream.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub gamma: f64,
    pub n_b: f64,
    pub chi: f64,
    pub r: f64,
    pub nu: f64,
    pub n_max: Option<usize>,
    pub tail_mass_bound: f64,
    pub t_max: Option<f64>,
    pub rtol: f64,
    pub samples: usize,
    pub f_hi: f64,
    pub f_lo: f64,
    pub grid_start: f64,
    pub grid_stop: f64,
    pub grid_points: usize,
    pub grid_scale: GridScale,
    pub numeric_every: usize,
}

#[derive(Default)]
struct Builder {
    gamma: Option<f64>,
    n_b: Option<f64>,
    chi: Option<f64>,
    r: Option<f64>,
    alpha_ratio: Option<f64>,
    nu: Option<f64>,
    n_max: Option<usize>,
    tail_mass_bound: Option<f64>,
    t_max: Option<f64>,
    rtol: Option<f64>,
    samples: Option<usize>,
    f_hi: Option<f64>,
    f_lo: Option<f64>,
    grid_start: Option<f64>,
    grid_stop: Option<f64>,
    grid_points: Option<usize>,
    grid_scale: Option<GridScale>,
    numeric_every: Option<usize>,
}

impl RunConfig {
    /// Parse a configuration file from disk.
    pub fn parse_file(path: &Path) -> Result<Self, ConfigError> {
        let display = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
            path: display.clone(),
            line: 0,
            message: format!("cannot read config: {e}"),
        })?;
        Self::parse_str(&text, &display)
    }

    /// Parse configuration text; `path` is used only for error context.
    pub fn parse_str(text: &str, path: &str) -> Result<Self, ConfigError> {
        let err = |line: usize, message: String| ConfigError {
            path: path.to_string(),
            line,
            message,
        };
        let mut b = Builder::default();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(line_no, format!("expected `key = value`, got `{line}`")))?;
            let key = key.trim();
            let value = value.trim();
            let f = |b: &str| -> Result<f64, ConfigError> {
                b.parse::<f64>()
                    .map_err(|_| err(line_no, format!("key `{key}`: `{value}` is not a number")))
            };
            let u = |b: &str| -> Result<usize, ConfigError> {
                b.parse::<usize>().map_err(|_| {
                    err(
                        line_no,
                        format!("key `{key}`: `{value}` is not a nonnegative integer"),
                    )
                })
            };
            match key {
                "gamma" => b.gamma = Some(f(value)?),
                "n_b" => b.n_b = Some(f(value)?),
                "chi" => b.chi = Some(f(value)?),
                "r" => b.r = Some(f(value)?),
                "alpha_ratio" => b.alpha_ratio = Some(f(value)?),
                "nu" => b.nu = Some(f(value)?),
                "n_max" => b.n_max = Some(u(value)?),
                "tail_mass_bound" => b.tail_mass_bound = Some(f(value)?),
                "t_max" => b.t_max = Some(f(value)?),
                "rtol" => b.rtol = Some(f(value)?),
                "samples" => b.samples = Some(u(value)?),
                "f_hi" => b.f_hi = Some(f(value)?),
                "f_lo" => b.f_lo = Some(f(value)?),
                "grid_start" => b.grid_start = Some(f(value)?),
                "grid_stop" => b.grid_stop = Some(f(value)?),
                "grid_points" => b.grid_points = Some(u(value)?),
                "grid_scale" => {
                    b.grid_scale = Some(match value {
                        "log" => GridScale::Log,
                        "linear" => GridScale::Linear,
                        other => {
                            return Err(err(
                                line_no,
                                format!(
                                    "key `grid_scale`: `{other}` is neither `log` nor `linear`"
                                ),
                            ))
                        }
                    })
                }
                "numeric_every" => b.numeric_every = Some(u(value)?),
                other => return Err(err(line_no, format!("unknown key `{other}`"))),
            }
        }
        Self::finish(b, path)
    }

    fn finish(b: Builder, path: &str) -> Result<Self, ConfigError> {
        let err = |message: String| ConfigError {
            path: path.to_string(),
            line: 0,
            message,
        };
        let chi = b
            .chi
            .ok_or_else(|| err("missing required key `chi`".into()))?;
        let gamma = b.gamma.unwrap_or(1.0);
        let r = match (b.r, b.alpha_ratio) {
            (Some(_), Some(_)) => {
                return Err(err(
                    "keys `r` and `alpha_ratio` are mutually exclusive".into()
                ))
            }
            (None, None) => return Err(err("one of `r` or `alpha_ratio` is required".into())),
            (Some(r), None) => r,
            (None, Some(ar)) => {
                if ar < 0.0 {
                    return Err(err(format!("key `alpha_ratio`: {ar} is negative")));
                }
                2.0 * gamma * ar / chi
            }
        };
        let cfg = Self {
            gamma,
            n_b: b.n_b.unwrap_or(0.0),
            chi,
            r,
            nu: b.nu.unwrap_or(0.0),
            n_max: b.n_max,
            tail_mass_bound: b.tail_mass_bound.unwrap_or(1e-12),
            t_max: b.t_max,
            rtol: b.rtol.unwrap_or(1e-8),
            samples: b.samples.unwrap_or(400),
            f_hi: b.f_hi.unwrap_or(0.8),
            f_lo: b.f_lo.unwrap_or(0.2),
            grid_start: b.grid_start.unwrap_or(1.05),
            grid_stop: b.grid_stop.unwrap_or(10.0),
            grid_points: b.grid_points.unwrap_or(60),
            grid_scale: b.grid_scale.unwrap_or_default(),
            numeric_every: b.numeric_every.unwrap_or(4),
        };
        cfg.params().map_err(|e| err(e.to_string()))?;
        if !(cfg.f_lo > 0.0 && cfg.f_hi > cfg.f_lo && cfg.f_hi < 1.0) {
            return Err(err(format!(
                "fit window needs 0 < f_lo < f_hi < 1, got f_lo = {}, f_hi = {}",
                cfg.f_lo, cfg.f_hi
            )));
        }
        if cfg.samples < 2 {
            return Err(err("key `samples` must be at least 2".into()));
        }
        if cfg.grid_points < 2 {
            return Err(err("key `grid_points` must be at least 2".into()));
        }
        if !(cfg.grid_start > 0.0 && cfg.grid_stop > cfg.grid_start) {
            return Err(err(format!(
                "grid needs 0 < grid_start < grid_stop, got {} and {}",
                cfg.grid_start, cfg.grid_stop
            )));
        }
        if cfg.numeric_every == 0 {
            return Err(err("key `numeric_every` must be positive".into()));
        }
        if let Some(t) = cfg.t_max {
            if !(t > 0.0) {
                return Err(err(format!("key `t_max`: {t} is not positive")));
            }
        }
        if !(cfg.rtol > 0.0 && cfg.rtol < 1.0) {
            return Err(err(format!("key `rtol`: {} is out of (0, 1)", cfg.rtol)));
        }
        if !(cfg.tail_mass_bound > 0.0 && cfg.tail_mass_bound < 1.0) {
            return Err(err(format!(
                "key `tail_mass_bound`: {} is out of (0, 1)",
                cfg.tail_mass_bound
            )));
        }
        Ok(cfg)
    }

    /// Physical parameters of the run.
    pub fn params(&self) -> Result<LaserParams, QlwError> {
        LaserParams::new(self.gamma, self.n_b, self.chi, self.r, self.nu)
    }

    /// Pump-ratio grid for sweeps, endpoints included exactly.
    pub fn grid(&self) -> Vec<f64> {
        let n = self.grid_points;
        let mut out = Vec::with_capacity(n);
        for k in 0..n {
            let f = k as f64 / (n - 1) as f64;
            let v = match self.grid_scale {
                GridScale::Log => {
                    (self.grid_start.ln() + f * (self.grid_stop / self.grid_start).ln()).exp()
                }
                GridScale::Linear => self.grid_start + f * (self.grid_stop - self.grid_start),
            };
            out.push(v);
        }
        out[0] = self.grid_start;
        out[n - 1] = self.grid_stop;
        out
    }

    /// The full configuration as `key = value` lines, every value resolved;
    /// parsing these lines back reproduces the config.
    pub fn resolved_lines(&self) -> Vec<String> {
        let opt_u =
            |v: Option<usize>| v.map_or("# n_max = auto".to_string(), |x| format!("n_max = {x}"));
        let mut lines = vec![
            format!("gamma = {}", self.gamma),
            format!("n_b = {}", self.n_b),
            format!("chi = {}", self.chi),
            format!("r = {}", self.r),
            format!("nu = {}", self.nu),
            opt_u(self.n_max),
            match self.t_max {
                Some(t) => format!("t_max = {t}"),
                None => "# t_max = auto".to_string(),
            },
            format!("tail_mass_bound = {}", self.tail_mass_bound),
            format!("rtol = {}", self.rtol),
            format!("samples = {}", self.samples),
            format!("f_hi = {}", self.f_hi),
            format!("f_lo = {}", self.f_lo),
            format!("grid_start = {}", self.grid_start),
            format!("grid_stop = {}", self.grid_stop),
            format!("grid_points = {}", self.grid_points),
            format!("grid_scale = {}", self.grid_scale),
            format!("numeric_every = {}", self.numeric_every),
        ];
        lines.retain(|l| !l.is_empty());
        lines
    }
}
