//! Stage orchestration: domain → stationary → spectrum → flow → diagnostics → rates.

use std::path::Path;

use fdelab_core::diagnostics::{self as diag, EntropyReport};
use fdelab_core::flow::{
    evolve, extinction_study, match_extinction_time, Control, DtPolicy, EvolveOptions, ExtinctionMatch, ExtinctionStudy,
    FlowKind, FlowState, MatchOptions, Trajectory,
};
use fdelab_core::grid::{build_domain, Grid};
use fdelab_core::rates::{fit_rate, sharp_rate_verdict, RateFit, SharpRateVerdict, WindowPolicy};
use fdelab_core::spectrum::{classify_gap, deflate, project_coefficients, weighted_eigensystem, EigenSystem, GapReport};
use fdelab_core::stationary::{solve_stationary, Exponents, InitialGuess, StationaryProfile};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{ExperimentConfig, InitialData};
use crate::error::{CliError, Stage};
use crate::format::{fmt_f64, fmt_opt, read_field, write_csv, write_json};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pipeline {
    Stationary,
    Spectrum,
    LinearEvolve,
    Evolve,
    Rates,
}

impl Pipeline {
    pub fn name(&self) -> &'static str {
        match self {
            Pipeline::Stationary => "stationary",
            Pipeline::Spectrum => "spectrum",
            Pipeline::LinearEvolve => "linear-evolve",
            Pipeline::Evolve => "evolve",
            Pipeline::Rates => "rates",
        }
    }
}

/// Domain, profile and spectrum for one exponent set.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub grid: Grid,
    pub exps: Exponents,
    pub profile: StationaryProfile,
    pub eigs: EigenSystem,
    pub gap: GapReport,
}

impl Prepared {
    /// Modes reported in traces: `k ≤ k_p + 1`.
    pub fn k_report(&self) -> usize {
        (self.gap.k_p + 1).min(self.eigs.len())
    }
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared, CliError> {
    let grid = build_domain(cfg.domain.spec()).stage("domain")?;
    prepare_on(grid, cfg.exponents.exponents(), cfg)
}

fn prepare_on(grid: Grid, exps: Exponents, cfg: &ExperimentConfig) -> Result<Prepared, CliError> {
    let profile = solve_stationary(&grid, &exps, InitialGuess::FirstEigenfunction, Default::default()).stage("stationary")?;
    let eigs = weighted_eigensystem(&grid, &profile.v, exps.p, cfg.spectrum_modes).stage("spectrum")?;
    let gap = classify_gap(&eigs, exps.p, exps.c, cfg.gap_tol).stage("spectrum")?;
    Ok(Prepared { grid, exps, profile, eigs, gap })
}

fn sup(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Initial perturbation `f0 = v0 - V`.
pub fn initial_perturbation(cfg: &ExperimentConfig, prep: &Prepared) -> Result<Vec<f64>, CliError> {
    let v = &prep.profile.v;
    let f = match &cfg.initial {
        InitialData::Stationary => vec![0.0; v.len()],
        InitialData::ScaledStationary { factor } => v.iter().map(|x| (factor - 1.0) * x).collect(),
        InitialData::ModePerturbed { modes } => {
            let vmax = sup(v);
            let mut f = vec![0.0; v.len()];
            for &(k, j, a) in modes {
                let phi = prep.eigs.mode(k, j).map_err(|e| CliError::Config(format!("initial.modes: {e}")))?;
                let s = a * vmax / sup(phi);
                f.iter_mut().zip(phi).for_each(|(fi, p)| *fi += s * p);
            }
            f
        }
        InitialData::FromFile { path } => {
            let v0 = read_field(path)?;
            if v0.len() != v.len() {
                return Err(CliError::Config(format!("initial.path: {} values for {} nodes", v0.len(), v.len())));
            }
            v0.iter().zip(v).map(|(a, b)| a - b).collect()
        }
    };
    if cfg.deflate_initial {
        return deflate(&prep.grid, &prep.eigs, &f, prep.gap.k_p).stage("initial");
    }
    Ok(f)
}

#[derive(Debug, Clone)]
pub struct FlowRun {
    pub kind: FlowKind,
    pub reports: Vec<EntropyReport>,
    pub trajectory: Trajectory,
    pub matched: Option<ExtinctionMatch>,
    pub initial_scale: f64,
}

fn evolve_options(cfg: &ExperimentConfig, store_fields: bool) -> EvolveOptions {
    EvolveOptions {
        horizon: cfg.flow.horizon,
        policy: DtPolicy {
            dt_init: cfg.flow.dt_init.min(cfg.flow.dt_max),
            dt_max: cfg.flow.dt_max,
            dt_min: cfg.flow.dt_min,
            ..Default::default()
        },
        sample_every: cfg.flow.sample_every,
        store_fields,
    }
}

pub fn run_linear(cfg: &ExperimentConfig, prep: &Prepared, f0: Vec<f64>) -> Result<FlowRun, CliError> {
    let opts = evolve_options(cfg, false);
    let k = prep.k_report();
    let mut reports = vec![diag::linear_report(&prep.grid, &prep.profile.v, &prep.exps, &prep.eigs, k, &f0, 0.0).stage("diagnostics")?];
    let trajectory = evolve(&prep.grid, &prep.exps, Some(&prep.profile.v), FlowState::new(FlowKind::Linearized, f0), &opts, &mut |s| {
        reports.push(diag::linear_report(&prep.grid, &prep.profile.v, &prep.exps, &prep.eigs, k, &s.field, s.time)?);
        Ok(Control::Continue)
    })
    .stage("flow")?;
    Ok(FlowRun { kind: FlowKind::Linearized, reports, trajectory, matched: None, initial_scale: 1.0 })
}

/// Rescaled flow from `v0`, optionally rescaled so its extinction time matches `c`.
pub fn run_nonlinear(cfg: &ExperimentConfig, prep: &Prepared, v0: Vec<f64>, matching: bool) -> Result<FlowRun, CliError> {
    if v0.iter().any(|x| !(*x > 0.0)) {
        return Err(CliError::Numerical { stage: "initial", source: fdelab_core::Error::NonpositiveField });
    }
    let mut opts = evolve_options(cfg, true);
    let trivial = v0 == prep.profile.v;
    if matching && !trivial {
        // adaptive steps make the drift discontinuous in the scale
        opts.policy = DtPolicy::fixed(cfg.flow.dt_max);
    }
    let matched = if matching && !trivial {
        let mopts = MatchOptions { threshold: cfg.flow.match_threshold, ..Default::default() };
        Some(match_extinction_time(&prep.grid, &prep.exps, &prep.profile.v, &v0, &opts, &mopts).stage("flow")?)
    } else {
        None
    };
    let scale = matched.map_or(1.0, |m| m.scale);
    let init: Vec<f64> = v0.iter().map(|x| scale * x).collect();
    let k = prep.k_report();
    let mut reports = vec![diag::entropy_report(&prep.grid, &prep.profile.v, &prep.exps, &prep.eigs, k, &init, 0.0).stage("diagnostics")?];
    let trajectory = evolve(&prep.grid, &prep.exps, None, FlowState::new(FlowKind::Rescaled, init), &opts, &mut |s| {
        reports.push(diag::entropy_report(&prep.grid, &prep.profile.v, &prep.exps, &prep.eigs, k, &s.field, s.time)?);
        Ok(Control::Continue)
    })
    .stage("flow")?;
    Ok(FlowRun { kind: FlowKind::Rescaled, reports, trajectory, matched, initial_scale: scale })
}

#[derive(Debug, Clone)]
pub struct ExtinctionLoop {
    pub study: ExtinctionStudy,
    pub t_config: f64,
    pub c_estimated: f64,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub pipeline: Pipeline,
    /// Config as run; exponents are replaced by the estimated ones in a closed loop.
    pub config: ExperimentConfig,
    pub prepared: Prepared,
    pub flow: Option<FlowRun>,
    pub extinction: Option<ExtinctionLoop>,
    pub summary: Option<Value>,
    pub verdict: Option<Verdict>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub status: String,
    pub flow: String,
    pub p: f64,
    pub c: f64,
    pub k_p: usize,
    pub lambda_p: Option<f64>,
    pub predicted: Option<f64>,
    pub lambda_fit: Option<f64>,
    pub rel_err: Option<f64>,
    pub tol: f64,
    pub window: Option<(f64, f64)>,
    pub r_squared: Option<f64>,
    pub stderr: Option<f64>,
    pub samples: Option<usize>,
    pub band: (f64, f64),
    pub initial_scale: f64,
    pub final_entropy: f64,
    pub constants: Option<Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Verdict {
    pub fn failed(&self) -> bool {
        self.status == "FAIL"
    }
}

pub const STATUS_PASS: &str = "PASS";
pub const STATUS_FAIL: &str = "FAIL";
pub const STATUS_FIXED_POINT: &str = "TRIVIAL-FIXED-POINT";
pub const STATUS_NOT_APPLICABLE: &str = "NOT-APPLICABLE";

/// Fixed-point threshold for the stationary-data verdict.
pub const FIXED_POINT_ENTROPY: f64 = 1e-12;

fn rate_verdict(
    cfg: &ExperimentConfig,
    prep: &Prepared,
    run: &FlowRun,
    status_hint: Option<&str>,
    constants: Option<Value>,
) -> Verdict {
    let linear = run.kind == FlowKind::Linearized;
    let times: Vec<f64> = run.reports.iter().map(|r| r.t).collect();
    let values: Vec<f64> = run.reports.iter().map(|r| if linear { r.e_lin } else { r.e_nl }).collect();
    let policy = if linear {
        WindowPolicy::Explicit(0.5 * cfg.flow.horizon, cfg.flow.horizon)
    } else {
        WindowPolicy::EntropyBand(cfg.rate_band.0, cfg.rate_band.1)
    };
    let fit: Result<RateFit, fdelab_core::Error> = fit_rate(&times, &values, policy);
    let sharp: Option<Result<SharpRateVerdict, fdelab_core::Error>> =
        fit.as_ref().ok().map(|f| sharp_rate_verdict(f, &prep.gap, prep.exps.p, cfg.rate_tol));
    let final_entropy = values.last().copied().unwrap_or(f64::NAN);
    let mut v = Verdict {
        status: STATUS_FAIL.into(),
        flow: if linear { "linearized".into() } else { "rescaled".into() },
        p: prep.exps.p,
        c: prep.exps.c,
        k_p: prep.gap.k_p,
        lambda_p: prep.gap.lambda_p,
        predicted: prep.gap.lambda_p.map(|l| 2.0 * l / prep.exps.p),
        lambda_fit: fit.as_ref().ok().map(|f| f.lambda_fit),
        rel_err: None,
        tol: cfg.rate_tol,
        window: fit.as_ref().ok().map(|f| f.window),
        r_squared: fit.as_ref().ok().map(|f| f.r_squared),
        stderr: fit.as_ref().ok().map(|f| f.stderr),
        samples: fit.as_ref().ok().map(|f| f.samples),
        band: cfg.rate_band,
        initial_scale: run.initial_scale,
        final_entropy,
        constants,
        error: None,
    };
    if let Some(s) = status_hint {
        v.status = s.into();
        if s == STATUS_FIXED_POINT && !(run.reports.iter().all(|r| r.e_nl.abs() <= FIXED_POINT_ENTROPY || r.e_lin <= FIXED_POINT_ENTROPY)) {
            v.status = STATUS_FAIL.into();
            v.error = Some("stationary data drifted from the fixed point".into());
        }
        if let Some(Ok(s)) = &sharp {
            v.rel_err = Some(s.rel_err);
        }
        return v;
    }
    match (fit, sharp) {
        (Err(e), _) => v.error = Some(e.to_string()),
        (_, Some(Err(e))) => v.error = Some(e.to_string()),
        (_, Some(Ok(s))) => {
            v.rel_err = Some(s.rel_err);
            v.status = if s.pass { STATUS_PASS.into() } else { STATUS_FAIL.into() };
        }
        _ => {}
    }
    v
}

fn err_json(e: impl std::fmt::Display) -> Value {
    json!({ "error": e.to_string() })
}

/// Every sampled check on a rescaled run, as JSON; individual failures are recorded, not raised.
pub fn diagnostics_summary(cfg: &ExperimentConfig, prep: &Prepared, run: &FlowRun) -> Value {
    let reports = &run.reports;
    let p = prep.exps.p;
    let c = prep.exps.c;
    let dim = prep.grid.dim();
    let k_p = prep.gap.k_p;
    let last = reports.last();
    let sandwich = diag::sandwich_summary(reports, p);
    let sandwich_json = match &sandwich {
        Ok(s) => json!({ "lo": s.lo, "hi": s.hi, "C": s.c_measured, "slope": s.slope, "samples": s.samples }),
        Err(e) => err_json(e),
    };
    let c_sand = sandwich.as_ref().map(|s| s.c_measured).unwrap_or(0.0);
    let rayleigh_cp = reports
        .iter()
        .filter(|r| r.e_nl >= cfg.rate_band.0 && r.e_nl <= cfg.rate_band.1)
        .filter_map(|r| diag::rayleigh_compare(r, p, c_sand).ok())
        .map(|rc| rc.c_prime)
        .fold(None, |m: Option<f64>, x| Some(m.map_or(x, |m| m.max(x))));
    let production = diag::production_residual(reports, p, c, cfg.rate_band);
    let production_json = match &production {
        Ok(s) => json!({
            "kappa_sup": s.kappa_sup,
            "kappa_analytic": s.kappa_analytic,
            "fd_discrepancy": s.fd_discrepancy,
            "ratio_slope": s.ratio_slope,
            "samples": s.kappa.len(),
        }),
        Err(e) => err_json(e),
    };
    let smoothing = diag::smoothing_check(reports, diag::smoothing_exponent(dim));
    let smoothing_json = match &smoothing {
        Ok(s) => {
            let coarse = diag::smoothing_check(reports, 1.0 / dim as f64).ok().map(|x| x.ratios.last().map(|r| r.1).unwrap_or(f64::NAN));
            json!({ "t0": s.t0, "kappa": s.sup, "exponent": diag::smoothing_exponent(dim), "last_ratio_exponent_1_over_N": coarse })
        }
        Err(e) => err_json(e),
    };
    let quant = if k_p > 0 {
        match diag::quantitative_orthogonality(reports, k_p, 0.5 * diag::smoothing_exponent(dim)) {
            Ok(q) => json!({ "sup": q.sup, "exponent": 0.5 * diag::smoothing_exponent(dim) }),
            Err(e) => err_json(e),
        }
    } else {
        Value::Null
    };
    let ladder = [0.1, 0.03, 0.01];
    let entry = diag::orthogonality_entry_times(reports, k_p, &ladder);
    let increases = diag::entropy_increases(reports, k_p, 0.01, 0.1, cfg.rate_band.0);
    let growth = diag::quotient_growth(reports, k_p, 0.1);
    let monot = diag::time_monotonicity_check(&prep.grid, &prep.profile.v, &prep.exps, &run.trajectory.sample_times, &run.trajectory.fields);
    let monot_json = match &monot {
        Ok(m) => json!({ "worst_integral": m.worst_integral, "worst_pointwise": m.worst_pointwise, "pairs": m.pairs }),
        Err(e) => err_json(e),
    };
    json!({
        "samples": reports.len(),
        "final": last.map(|r| json!({ "t": r.t, "E_nl": r.e_nl, "E_lin": r.e_lin, "h_inf": r.h_inf })),
        "initial_scale": run.initial_scale,
        "match": run.matched.map(|m| json!({ "scale": m.scale, "trials": m.trials, "bracket": [m.bracket.0, m.bracket.1] })),
        "sandwich": sandwich_json,
        "rayleigh": { "limit": diag::rayleigh_limit(p), "C_prime": rayleigh_cp },
        "aon_aol_kappa": diag::aon_aol_kappa(reports, k_p),
        "production": production_json,
        "smoothing": smoothing_json,
        "quantitative_orthogonality": quant,
        "orthogonality_entry": ladder.iter().zip(&entry).map(|(e, t)| json!({ "eps": e, "t": t })).collect::<Vec<_>>(),
        "entropy_monotone": increases.map(|(t, n)| json!({ "from": t, "increases": n })),
        "quotient_growth": { "windows": growth.len(), "min_ratio": growth.iter().map(|g| g.ratio).reduce(f64::min) },
        "time_monotonicity": monot_json,
    })
}

fn comparison_constants(summary: &Value) -> Value {
    json!({
        "sandwich_lo": summary["sandwich"]["lo"],
        "sandwich_hi": summary["sandwich"]["hi"],
        "remainder_kappa": summary["production"]["kappa_sup"],
        "smoothing_kappa": summary["smoothing"]["kappa"],
    })
}

/// Runs the stages for `pipeline` in memory.
pub fn execute(pipeline: Pipeline, cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let mut cfg = cfg.clone();
    let mut prepared = prepare(&cfg)?;
    let mut out = Outcome { pipeline, config: cfg.clone(), prepared: prepared.clone(), flow: None, extinction: None, summary: None, verdict: None };
    if matches!(pipeline, Pipeline::Stationary | Pipeline::Spectrum) {
        return Ok(out);
    }
    let f0 = initial_perturbation(&cfg, &prepared)?;
    let stationary = matches!(cfg.initial, InitialData::Stationary);
    if pipeline == Pipeline::LinearEvolve {
        let low = project_coefficients(&prepared.grid, &prepared.eigs, &f0, prepared.gap.k_p).stage("spectrum")?;
        let norm = prepared.eigs.norm_sq(&f0).sqrt();
        let deflated = low.iter().flatten().all(|x| x.abs() <= 1e-8 * norm);
        let run = run_linear(&cfg, &prepared, f0)?;
        let hint = if stationary {
            Some(STATUS_FIXED_POINT)
        } else if !deflated {
            Some(STATUS_NOT_APPLICABLE)
        } else {
            None
        };
        out.verdict = Some(rate_verdict(&cfg, &prepared, &run, hint, None));
        out.flow = Some(run);
        return Ok(out);
    }
    let mut v0: Vec<f64> = prepared.profile.v.iter().zip(&f0).map(|(a, b)| a + b).collect();
    let mut matching = cfg.flow.match_extinction;
    if cfg.extinction.enabled {
        let u0: Vec<f64> = v0.iter().map(|x| x.max(0.0).powf(prepared.exps.p)).collect();
        let study = extinction_study(&prepared.grid, &prepared.exps, &u0, cfg.extinction.dt, cfg.extinction.levels).stage("extinction")?;
        let t_config = prepared.exps.t_ext;
        let exps = Exponents::from_p_t(prepared.exps.p, study.t_extrapolated).stage("extinction")?;
        cfg = cfg.with_exponents(&exps);
        prepared = prepare_on(prepared.grid.clone(), exps, &cfg)?;
        v0 = u0.iter().map(|u| u.powf(exps.m)).collect();
        matching = false;
        out.extinction = Some(ExtinctionLoop { study, t_config, c_estimated: exps.c });
        out.config = cfg.clone();
        out.prepared = prepared.clone();
    }
    let run = run_nonlinear(&cfg, &prepared, v0, matching)?;
    let summary = diagnostics_summary(&cfg, &prepared, &run);
    if pipeline == Pipeline::Rates {
        let hint = stationary.then_some(STATUS_FIXED_POINT);
        out.verdict = Some(rate_verdict(&cfg, &prepared, &run, hint, Some(comparison_constants(&summary))));
    }
    out.summary = Some(summary);
    out.flow = Some(run);
    Ok(out)
}

fn trace_header(prep: &Prepared) -> Vec<String> {
    let mut h: Vec<String> = ["t", "E_lin", "I_lin", "E_nl", "h_inf"].iter().map(|s| s.to_string()).collect();
    let k = prep.k_report();
    for prefix in ["Q", "Qn", "A"] {
        for kk in 1..=k {
            for j in 1..=prep.eigs.multiplicities[kk - 1] {
                h.push(format!("{prefix}_{kk}_{j}"));
            }
        }
    }
    h
}

fn trace_rows(reports: &[EntropyReport]) -> Vec<Vec<String>> {
    reports
        .iter()
        .map(|r| {
            let mut row = vec![fmt_f64(r.t), fmt_f64(r.e_lin), fmt_f64(r.i_lin), fmt_f64(r.e_nl), fmt_f64(r.h_inf)];
            row.extend(r.q_lin.iter().flatten().map(|q| fmt_opt(*q)));
            row.extend(r.q_nl.iter().flatten().map(|q| fmt_opt(*q)));
            row.extend(r.a_nl.iter().flatten().map(|a| fmt_f64(*a)));
            row
        })
        .collect()
}

fn production_rows(reports: &[EntropyReport]) -> Vec<Vec<String>> {
    reports
        .iter()
        .map(|r| {
            let kappa = if r.cubic > 0.0 { r.r_p.abs() / r.cubic } else { f64::NAN };
            [r.t, r.delta_now, r.de_dt, r.r_p, r.cubic, kappa].iter().map(|x| fmt_f64(*x)).collect()
        })
        .collect()
}

fn gap_json(prep: &Prepared) -> Value {
    let g = &prep.gap;
    json!({
        "k_p": g.k_p,
        "lambda_p": g.lambda_p,
        "gamma_p": g.gamma_p,
        "h2_ok": g.h2_ok,
        "gap_margin": g.gap_margin,
        "cp": g.cp,
        "sharp_rate": g.lambda_p.map(|l| 2.0 * l / prep.exps.p),
        "relative_error_rate": g.lambda_p.map(|l| l / prep.exps.p),
        "eigenvalues": prep.eigs.eigenvalues,
        "multiplicities": prep.eigs.multiplicities,
    })
}

/// Writes the artifacts of `out` into `dir`; returns the file names written.
pub fn write_artifacts(out: &Outcome, dir: &Path) -> Result<Vec<String>, CliError> {
    let prep = &out.prepared;
    let mut files = Vec::new();
    let profile_rows: Vec<Vec<String>> = (0..prep.grid.len())
        .map(|i| vec![fmt_f64(prep.grid.coords[i]), fmt_f64(prep.profile.v[i]), fmt_f64(prep.profile.s[i])])
        .collect();
    write_csv(&dir.join("profile.csv"), &["x".into(), "V".into(), "S".into()], &profile_rows)?;
    files.push("profile.csv".to_string());
    if out.pipeline != Pipeline::Stationary {
        let mut rows = Vec::new();
        for (k, space) in prep.eigs.residuals.iter().enumerate() {
            for (j, res) in space.iter().enumerate() {
                rows.push(vec![(k + 1).to_string(), (j + 1).to_string(), fmt_f64(prep.eigs.eigenvalues[k]), fmt_f64(*res)]);
            }
        }
        write_csv(&dir.join("spectrum.csv"), &["k".into(), "j".into(), "lambda".into(), "residual".into()], &rows)?;
        write_json(&dir.join("gap.json"), &gap_json(prep))?;
        files.extend(["spectrum.csv".to_string(), "gap.json".to_string()]);
    }
    if let Some(run) = &out.flow {
        write_csv(&dir.join("trace.csv"), &trace_header(prep), &trace_rows(&run.reports))?;
        files.push("trace.csv".into());
        if run.kind == FlowKind::Rescaled {
            let header: Vec<String> = ["t", "delta", "dE_dt", "R_p", "cubic", "kappa"].iter().map(|s| s.to_string()).collect();
            write_csv(&dir.join("production.csv"), &header, &production_rows(&run.reports))?;
            files.push("production.csv".into());
        }
    }
    if let Some(summary) = &out.summary {
        write_json(&dir.join("summary.json"), summary)?;
        files.push("summary.json".into());
    }
    if let Some(x) = &out.extinction {
        let j = json!({
            "T_config": x.t_config,
            "T_estimates": x.study.estimates.iter().map(|e| e.t_est).collect::<Vec<_>>(),
            "dts": x.study.dts,
            "fit_windows": x.study.estimates.iter().map(|e| [e.window.0, e.window.1]).collect::<Vec<_>>(),
            "fit_residuals": x.study.estimates.iter().map(|e| e.fit_residual).collect::<Vec<_>>(),
            "T_extrapolated": x.study.t_extrapolated,
            "c_estimated": x.c_estimated,
            "rel_err": (x.study.t_extrapolated - x.t_config) / x.t_config,
        });
        write_json(&dir.join("extinction.json"), &j)?;
        files.push("extinction.json".into());
    }
    if let Some(v) = &out.verdict {
        write_json(&dir.join("verdict.json"), v)?;
        files.push("verdict.json".into());
    }
    files.push("manifest.json".into());
    let manifest = json!({
        "tool": "fdelab",
        "version": env!("CARGO_PKG_VERSION"),
        "pipeline": out.pipeline.name(),
        "config": out.config,
        "derived": {
            "p": prep.exps.p,
            "m": prep.exps.m,
            "c": prep.exps.c,
            "T": prep.exps.t_ext,
            "h": prep.grid.h,
            "stationary_residual": prep.profile.residual_norm,
            "stationary_newton_iters": prep.profile.newton_iters,
        },
        "files": files,
    });
    write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(files)
}

/// Full run: execute, write artifacts, return the outcome.
pub fn run_experiment(pipeline: Pipeline, cfg: &ExperimentConfig, dir: &Path) -> Result<Outcome, CliError> {
    let out = execute(pipeline, cfg)?;
    write_artifacts(&out, dir)?;
    Ok(out)
}
