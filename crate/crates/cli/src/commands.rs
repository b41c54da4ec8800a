//! The six subcommands. Every emitter starts its CSV with a comment block
//! carrying the fully resolved config, so each data file reproduces its own
//! run. Human-readable summaries go to stderr; data goes to `--out` or
//! stdout.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use qlw_core::dynamics::{fit_decay_rate, slowest_decay_rate, spectrum};
use qlw_core::kernels::assemble_offdiag_generator;
use qlw_core::report::{correlation_pipeline, linewidth_report, LinewidthReport, PipelineOptions};
use qlw_core::steady::{check_balance, moments, steady_distribution};
use qlw_core::{LaserParams, QlwError, Truncation, TruncationSpec};

use crate::csvio::{fmt, fmt_opt, sanitize, Table};
use crate::{classify, CmdError, Job};

/// Column order of a linewidth row: identifiers, steady-state comparison,
/// closed forms, numeric extractors, validity check, then every linewidth
/// again normalized by chi*gamma.
const LINEWIDTH_COLUMNS: [&str; 20] = [
    "alpha_ratio",
    "chi",
    "n_b",
    "nbar_analytic",
    "nbar_numeric",
    "Q_analytic",
    "Q_numeric",
    "lw_eq24",
    "lw_eq31",
    "lw_eq24a",
    "lw_numeric_eig",
    "lw_numeric_fit",
    "valid",
    "left_ratio",
    "right_ratio",
    "lw_eq24_norm",
    "lw_eq31_norm",
    "lw_eq24a_norm",
    "lw_numeric_eig_norm",
    "lw_numeric_fit_norm",
];

fn comment_block(sub: &str, job: &Job) -> Vec<String> {
    let ts = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let mut v = vec![format!("qlw {sub}"), format!("generated_unix = {ts}")];
    v.extend(job.cfg.resolved_lines());
    v
}

fn write_out(out: &Option<PathBuf>, text: &str) -> Result<(), CmdError> {
    match out {
        Some(path) => fs::write(path, text)
            .map_err(|e| CmdError::Config(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
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

pub(crate) fn steady(job: Job) -> Result<(), CmdError> {
    let params = job.cfg.params().map_err(classify)?;
    let dist = steady_distribution(&params, &truncation_spec(&job.opts)).map_err(classify)?;

    let mut table = Table::new(vec!["n", "p"]);
    table.comments = comment_block("steady", &job);
    for (n, &p) in dist.p.iter().enumerate() {
        table.push_row(vec![n.to_string(), fmt(p)]);
    }
    write_out(&job.out, &table.to_csv())?;

    let bal = check_balance(&dist, &params);
    eprintln!("steady: n_max = {}", dist.n_max());
    match moments(&dist) {
        Ok((nbar, var, q)) => {
            eprintln!("nbar = {}", fmt(nbar));
            eprintln!("var = {}", fmt(var));
            eprintln!("Q = {}", fmt(q));
        }
        Err(QlwError::ZeroMean) => {
            eprintln!("nbar = 0");
            eprintln!("var = 0");
            eprintln!("Q = undefined");
        }
        Err(e) => return Err(classify(e)),
    }
    eprintln!("r1 = {}", fmt(bal.r1));
    eprintln!("r2 = {}", fmt(bal.r2));
    Ok(())
}

pub(crate) fn correlate(job: Job) -> Result<(), CmdError> {
    let params = job.cfg.params().map_err(classify)?;
    let run = correlation_pipeline(&params, &job.opts, None).map_err(classify)?;
    let g0 = run.trace.values[0];

    let mut table = Table::new(vec!["t", "g1", "g1_norm"]);
    table.comments = comment_block("correlate", &job);
    for (&t, &g) in run.trace.times.iter().zip(&run.trace.values) {
        table.push_row(vec![fmt(t), fmt(g), fmt(g / g0)]);
    }
    write_out(&job.out, &table.to_csv())?;

    eprintln!(
        "correlate: n_max = {}, t_max = {}, samples = {}",
        run.dist.n_max(),
        fmt(run.t_max),
        run.trace.len()
    );
    match fit_decay_rate(&run.trace, job.opts.window) {
        Ok(fit) => {
            eprintln!("lambda_fit = {}", fmt(fit.lambda));
            eprintln!("delta_omega_fit = {}", fmt(fit.delta_omega));
            eprintln!("fit_uncertainty = {}", fmt(fit.uncertainty));
            eprintln!(
                "window = [{}, {}], points = {}",
                fmt(fit.window.0),
                fmt(fit.window.1),
                fit.points
            );
        }
        // The trace is the deliverable; a fit that needs a longer horizon
        // is reported but does not fail the command.
        Err(e) => eprintln!("fit unavailable: {e}"),
    }
    Ok(())
}

pub(crate) fn spectrum_cmd(job: Job) -> Result<(), CmdError> {
    let params = job.cfg.params().map_err(classify)?;
    let run = correlation_pipeline(&params, &job.opts, None).map_err(classify)?;
    // An empty cavity is probed with a single-photon state of zero mean;
    // normalize by g(0) instead.
    let norm = if run.dist.nbar > 0.0 {
        run.dist.nbar
    } else {
        run.trace.values[0]
    };
    let spec = spectrum(&run.trace, norm, params.nu, None).map_err(classify)?;

    let mut table = Table::new(vec!["omega", "s"]);
    table.comments = comment_block("spectrum", &job);
    for (&w, &s) in spec.omega.iter().zip(&spec.s) {
        table.push_row(vec![fmt(w), fmt(s)]);
    }
    write_out(&job.out, &table.to_csv())?;

    eprintln!(
        "spectrum: n_max = {}, t_max = {}",
        run.dist.n_max(),
        fmt(run.t_max)
    );
    eprintln!("fwhm = {}", fmt(spec.fwhm));
    eprintln!(
        "fwhm_norm = {}",
        fmt(spec.fwhm / (params.chi * params.gamma))
    );
    eprintln!("peak = {}", fmt(spec.peak));
    Ok(())
}

fn report_cells(rep: &LinewidthReport) -> Vec<String> {
    let p = &rep.params;
    let norm = p.chi * p.gamma;
    let scaled = |x: Option<f64>| fmt_opt(x.map(|v| v / norm));
    vec![
        fmt(rep.alpha_ratio),
        fmt(p.chi),
        fmt(p.n_b),
        fmt_opt(rep.nbar_analytic),
        fmt(rep.nbar_numeric),
        fmt_opt(rep.q_analytic),
        fmt_opt(rep.q_numeric),
        fmt_opt(rep.lw_eq24),
        fmt_opt(rep.lw_eq31),
        fmt_opt(rep.lw_eq24a),
        fmt_opt(rep.lw_numeric_eig),
        fmt_opt(rep.lw_numeric_fit),
        rep.valid.to_string(),
        fmt(rep.left_ratio),
        fmt(rep.right_ratio),
        scaled(rep.lw_eq24),
        scaled(rep.lw_eq31),
        scaled(rep.lw_eq24a),
        scaled(rep.lw_numeric_eig),
        scaled(rep.lw_numeric_fit),
    ]
}

fn dash(x: Option<f64>) -> String {
    x.map(fmt).unwrap_or_else(|| "-".into())
}

fn summarize_report(rep: &LinewidthReport) {
    let p = &rep.params;
    let norm = p.chi * p.gamma;
    let scaled = |x: Option<f64>| dash(x.map(|v| v / norm));
    if p.r == 0.0 {
        eprintln!("empty cavity: delta_omega = gamma = {}", fmt(p.gamma));
    }
    eprintln!(
        "linewidth at alpha/gamma = {}: chi = {}, n_b = {}, gamma = {}",
        fmt(rep.alpha_ratio),
        fmt(p.chi),
        fmt(p.n_b),
        fmt(p.gamma)
    );
    eprintln!(
        "nbar_analytic = {}, nbar_numeric = {}",
        dash(rep.nbar_analytic),
        fmt(rep.nbar_numeric)
    );
    eprintln!(
        "Q_analytic = {}, Q_numeric = {}",
        dash(rep.q_analytic),
        dash(rep.q_numeric)
    );
    eprintln!(
        "lw_eq24 = {} (norm {})",
        dash(rep.lw_eq24),
        scaled(rep.lw_eq24)
    );
    eprintln!(
        "lw_eq31 = {} (norm {})",
        dash(rep.lw_eq31),
        scaled(rep.lw_eq31)
    );
    eprintln!(
        "lw_eq24a = {} (norm {})",
        dash(rep.lw_eq24a),
        scaled(rep.lw_eq24a)
    );
    eprintln!(
        "lw_numeric_eig = {} (norm {})",
        dash(rep.lw_numeric_eig),
        scaled(rep.lw_numeric_eig)
    );
    eprintln!(
        "lw_numeric_fit = {} (norm {}), fit_uncertainty = {}",
        dash(rep.lw_numeric_fit),
        scaled(rep.lw_numeric_fit),
        dash(rep.fit_uncertainty)
    );
    eprintln!(
        "valid = {}, left_ratio = {}, right_ratio = {}",
        rep.valid,
        fmt(rep.left_ratio),
        fmt(rep.right_ratio)
    );
    eprintln!("n_max = {}, t_max = {}", rep.n_max, fmt(rep.t_max));
}

pub(crate) fn linewidth(job: Job) -> Result<(), CmdError> {
    let params = job.cfg.params().map_err(classify)?;
    let rep = linewidth_report(&params, &job.opts).map_err(classify)?;

    let mut table = Table::new(LINEWIDTH_COLUMNS.to_vec());
    table.comments = comment_block("linewidth", &job);
    table.push_row(report_cells(&rep));
    write_out(&job.out, &table.to_csv())?;

    summarize_report(&rep);
    Ok(())
}

/// One sweep row: the linewidth columns plus a trailing `error` cell,
/// empty on success. A failed point never aborts the sweep.
fn sweep_cells(job: &Job, index: usize, alpha_ratio: f64) -> Vec<String> {
    let cfg = &job.cfg;
    let failed = |msg: String| -> Vec<String> {
        let mut cells = vec![fmt(alpha_ratio), fmt(cfg.chi), fmt(cfg.n_b)];
        cells.resize(LINEWIDTH_COLUMNS.len(), String::new());
        cells.push(sanitize(&msg));
        cells
    };
    let params =
        match LaserParams::from_alpha_ratio(cfg.gamma, cfg.n_b, cfg.chi, alpha_ratio, cfg.nu) {
            Ok(p) => p,
            Err(e) => return failed(e.to_string()),
        };
    if !params.is_above_threshold() {
        return failed(QlwError::BelowThreshold(params.alpha_ratio()).to_string());
    }
    // Numeric extraction only on the decimated sub-grid; the closed forms
    // are cheap and run everywhere.
    let mut opts = job.opts;
    opts.with_numeric = job.opts.with_numeric && index % cfg.numeric_every.max(1) == 0;
    match linewidth_report(&params, &opts) {
        Ok(rep) => {
            let mut cells = report_cells(&rep);
            cells.push(String::new());
            cells
        }
        Err(e) => failed(e.to_string()),
    }
}

/// Evaluate `points` slots concurrently with `workers` threads, preserving
/// grid order in the result vector.
fn run_indexed<F>(points: usize, workers: usize, eval: F) -> Vec<Vec<String>>
where
    F: Fn(usize) -> Vec<String> + Sync,
{
    let slots: Vec<Mutex<Option<Vec<String>>>> = (0..points).map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = workers.clamp(1, points.max(1));
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= points {
                    break;
                }
                let row = eval(i);
                *slots[i].lock().unwrap() = Some(row);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().unwrap().expect("every slot filled"))
        .collect()
}

pub(crate) fn sweep(job: Job) -> Result<(), CmdError> {
    let grid = job.cfg.grid();
    let rows = run_indexed(grid.len(), job.workers, |i| sweep_cells(&job, i, grid[i]));

    let mut columns: Vec<&str> = LINEWIDTH_COLUMNS.to_vec();
    columns.push("error");
    let mut table = Table::new(columns);
    table.comments = comment_block("sweep", &job);
    let error_col = table.columns.len() - 1;
    let mut errors = 0usize;
    for (i, row) in rows.into_iter().enumerate() {
        if !row[error_col].is_empty() {
            errors += 1;
            eprintln!(
                "point {i} (alpha/gamma = {}): {}",
                fmt(grid[i]),
                row[error_col]
            );
        }
        table.push_row(row);
    }
    write_out(&job.out, &table.to_csv())?;
    eprintln!(
        "sweep: {} points, workers = {}, numeric every {}, errors = {errors}",
        grid.len(),
        job.workers,
        job.cfg.numeric_every.max(1)
    );
    Ok(())
}

/// Slowest decay rate of the off-diagonal sector, doubled into a full
/// width — the cheap numeric column for figure data.
fn eig_width(params: &LaserParams, opts: &PipelineOptions) -> Result<f64, QlwError> {
    let dist = steady_distribution(params, &truncation_spec(opts))?;
    let g1 = assemble_offdiag_generator(
        params,
        Truncation {
            n_max: dist.n_max(),
        },
        opts.gain_form,
    )?;
    Ok(2.0 * slowest_decay_rate(&g1)?)
}

pub(crate) fn fig1(job: Job) -> Result<(), CmdError> {
    if job.cfg.n_b != 0.0 {
        return Err(CmdError::Config(format!(
            "fig1 is defined for n_b = 0 only, config has n_b = {}",
            fmt(job.cfg.n_b)
        )));
    }
    let out = job.out.clone().ok_or_else(|| {
        CmdError::Config(
            "fig1 requires --out <file.csv> (a .gp script is written next to it)".into(),
        )
    })?;

    let grid = job.cfg.grid();
    let norm = job.cfg.chi * job.cfg.gamma;
    let every = job.cfg.numeric_every.max(1);
    let rows = run_indexed(grid.len(), job.workers, |i| {
        let ar = grid[i];
        let params = match LaserParams::from_alpha_ratio(
            job.cfg.gamma,
            job.cfg.n_b,
            job.cfg.chi,
            ar,
            job.cfg.nu,
        ) {
            Ok(p) if p.is_above_threshold() => p,
            _ => {
                return vec![
                    fmt(ar),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                ]
            }
        };
        let eq24 = qlw_core::analytics::linewidth_eq24(&params).ok();
        let eq31 = qlw_core::analytics::linewidth_pd(&params).ok();
        let eq24a = qlw_core::analytics::linewidth_far(&params).ok();
        let numeric = if job.opts.with_numeric && i % every == 0 {
            eig_width(&params, &job.opts).ok()
        } else {
            None
        };
        vec![
            fmt(ar),
            fmt_opt(eq24.map(|v| v / norm)),
            fmt_opt(eq31.map(|v| v / norm)),
            fmt_opt(eq24a.map(|v| v / norm)),
            fmt_opt(numeric.map(|v| v / norm)),
        ]
    });

    let mut table = Table::new(vec![
        "alpha_ratio",
        "lw_eq24_norm",
        "lw_eq31_norm",
        "lw_eq24a_norm",
        "lw_numeric_norm",
    ]);
    table.comments = comment_block("fig1", &job);
    for row in rows {
        table.push_row(row);
    }
    write_out(&Some(out.clone()), &table.to_csv())?;

    let gp_path = out.with_extension("gp");
    let script = gnuplot_script(&out);
    fs::write(&gp_path, script)
        .map_err(|e| CmdError::Config(format!("cannot write {}: {e}", gp_path.display())))?;
    eprintln!("fig1: wrote {} and {}", out.display(), gp_path.display());
    Ok(())
}

fn gnuplot_script(csv: &Path) -> String {
    let name = csv
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| csv.display().to_string());
    format!(
        r#"# generated by qlw fig1; run from this directory: gnuplot {stem}.gp
set datafile separator ","
set datafile missing ""
set logscale x
set logscale y
set xlabel "pump ratio"
set ylabel "linewidth / (chi gamma)"
set key top right
csv = "{name}"
plot csv using 1:2 with lines lw 2 title "closed form", \
     csv using 1:3 with lines dashtype 2 title "phase diffusion", \
     csv using 1:4 with lines dashtype 3 title "far above threshold", \
     csv using 1:5 with points pt 7 ps 0.6 title "numeric"
"#,
        stem = csv
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default(),
        name = name
    )
}
