//! Implicit Euler integration of the original flow `u_τ = Δu^m`, the rescaled flow
//! `∂_t v^p = Δv + cv^p` and its linearization `pV^{p-1} f_t = Δf + cpV^{p-1} f`.
//!
//! Both nonlinear steps reduce to `a |z|^{p-1} z - dt Δ_h z = r` for `z = v` (or `u^m`),
//! with `a = 1 - c dt` (rescaled) or `a = 1` (original).

use crate::error::{check_len, Error, Result};
use crate::grid::Grid;
use crate::stationary::Exponents;

const MAX_NEWTON: usize = 30;
const NEWTON_TOL: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowKind {
    Original,
    Rescaled,
    Linearized,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    pub kind: FlowKind,
    pub field: Vec<f64>,
    pub time: f64,
}

impl FlowState {
    pub fn new(kind: FlowKind, field: Vec<f64>) -> Self {
        Self { kind, field, time: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub state: FlowState,
    pub newton_iters: usize,
}

fn signed_pow(z: f64, p: f64) -> f64 {
    z.abs().powf(p) * z.signum()
}

fn sup(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Newton for `a |z|^{p-1} z - dt Δ_h z = rhs`, weighted by the quadrature so the
/// Jacobian `diag(w a p |z|^{p-1}) + dt K` is symmetric positive definite.
fn implicit_power_solve(
    grid: &Grid,
    p: f64,
    a: f64,
    dt: f64,
    rhs: &[f64],
    z0: &[f64],
    strict: bool,
) -> Result<(Vec<f64>, usize)> {
    let n = grid.len();
    let w = &grid.quad_weights;
    let stiff = grid.stiffness();
    let mut z = z0.to_vec();
    let scale = sup(z0).max(sup(rhs).powf(1.0 / p)).max(f64::MIN_POSITIVE);
    for iter in 1..=MAX_NEWTON {
        let kz = stiff.mul_vec(&z)?;
        let g: Vec<f64> = (0..n).map(|i| -(w[i] * (a * signed_pow(z[i], p) - rhs[i]) + dt * kz[i])).collect();
        let jd: Vec<f64> = (0..n).map(|i| w[i] * a * p * z[i].abs().powf(p - 1.0)).collect();
        let jac = stiff.scaled(dt).add_diag(&jd);
        let dz = jac.solve(&g).map_err(|e| Error::StepFailure(format!("Newton system: {e}")))?;
        let mut t = 1.0;
        if strict {
            let mut ok = false;
            for _ in 0..50 {
                if z.iter().zip(&dz).all(|(a, b)| a + t * b > 0.0) {
                    ok = true;
                    break;
                }
                t *= 0.5;
            }
            if !ok {
                return Err(Error::PositivityLoss);
            }
        }
        for (zi, d) in z.iter_mut().zip(&dz) {
            *zi += t * d;
        }
        if !z.iter().all(|x| x.is_finite()) {
            return Err(Error::StepFailure("non-finite Newton iterate".into()));
        }
        if t == 1.0 && sup(&dz) <= NEWTON_TOL * sup(&z).max(1e-300 * scale) {
            return Ok((z, iter));
        }
    }
    Err(Error::StepFailure(format!("Newton did not converge in {MAX_NEWTON} iterations")))
}

fn expect_kind(state: &FlowState, kind: FlowKind) -> Result<()> {
    if state.kind != kind {
        return Err(Error::StepFailure(format!("expected a {kind:?} state, got {:?}", state.kind)));
    }
    Ok(())
}

/// One implicit Euler step of the rescaled flow in the conserved variable `w = v^p`.
pub fn step_rescaled(grid: &Grid, exps: &Exponents, state: &FlowState, dt: f64) -> Result<StepReport> {
    expect_kind(state, FlowKind::Rescaled)?;
    check_len(grid.len(), state.field.len())?;
    if !(dt > 0.0) {
        return Err(Error::StepFailure(format!("time step must be positive, got {dt}")));
    }
    let a = 1.0 - exps.c * dt;
    if a <= 0.0 {
        return Err(Error::StepFailure(format!("time step {dt} exceeds 1/c")));
    }
    if state.field.iter().any(|x| !(*x > 0.0)) {
        return Err(Error::PositivityLoss);
    }
    let rhs: Vec<f64> = state.field.iter().map(|v| v.powf(exps.p)).collect();
    let (z, iters) = implicit_power_solve(grid, exps.p, a, dt, &rhs, &state.field, true)?;
    if z.iter().any(|x| !(*x > 0.0)) {
        return Err(Error::PositivityLoss);
    }
    Ok(StepReport { state: FlowState { kind: FlowKind::Rescaled, field: z, time: state.time + dt }, newton_iters: iters })
}

/// One implicit Euler step of `u_τ = Δ_h u^m`.
pub fn step_original(grid: &Grid, exps: &Exponents, state: &FlowState, dt: f64) -> Result<StepReport> {
    expect_kind(state, FlowKind::Original)?;
    check_len(grid.len(), state.field.len())?;
    if !(dt > 0.0) {
        return Err(Error::StepFailure(format!("time step must be positive, got {dt}")));
    }
    if state.field.iter().any(|x| *x < 0.0 || !x.is_finite()) {
        return Err(Error::PositivityLoss);
    }
    let umax = sup(&state.field);
    if umax == 0.0 {
        let field = vec![0.0; grid.len()];
        return Ok(StepReport { state: FlowState { kind: FlowKind::Original, field, time: state.time + dt }, newton_iters: 0 });
    }
    let z0: Vec<f64> = state.field.iter().map(|u| u.powf(exps.m)).collect();
    let (z, iters) = implicit_power_solve(grid, exps.p, 1.0, dt, &state.field, &z0, false)?;
    let zmax = sup(&z);
    if z.iter().any(|x| *x < -1e-10 * zmax) {
        return Err(Error::PositivityLoss);
    }
    let field = z.iter().map(|x| x.max(0.0).powf(exps.p)).collect();
    Ok(StepReport { state: FlowState { kind: FlowKind::Original, field, time: state.time + dt }, newton_iters: iters })
}

/// Largest stable step of the linearized flow, `p / (c(p-1))`.
pub fn linearized_dt_limit(exps: &Exponents) -> f64 {
    exps.p / (exps.c * (exps.p - 1.0))
}

/// One implicit Euler step of `pW f_t = Δf + cpW f` with `W = V^{p-1}`:
/// `(p(1 - c dt) M + dt K) f⁺ = p M f` where `M = w V^{p-1}`.
pub fn step_linearized(grid: &Grid, profile: &[f64], exps: &Exponents, state: &FlowState, dt: f64) -> Result<StepReport> {
    expect_kind(state, FlowKind::Linearized)?;
    check_len(grid.len(), state.field.len())?;
    check_len(grid.len(), profile.len())?;
    let limit = linearized_dt_limit(exps);
    if !(dt > 0.0) || dt >= limit {
        return Err(Error::TimeStepTooLarge { dt, limit });
    }
    let p = exps.p;
    let mass: Vec<f64> = profile.iter().zip(&grid.quad_weights).map(|(v, w)| w * v.powf(p - 1.0)).collect();
    let diag: Vec<f64> = mass.iter().map(|m| p * (1.0 - exps.c * dt) * m).collect();
    let mat = grid.stiffness().scaled(dt).add_diag(&diag);
    let rhs: Vec<f64> = mass.iter().zip(&state.field).map(|(m, f)| p * m * f).collect();
    let field = mat.solve(&rhs)?;
    Ok(StepReport { state: FlowState { kind: FlowKind::Linearized, field, time: state.time + dt }, newton_iters: 0 })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DtPolicy {
    pub dt_init: f64,
    pub dt_max: f64,
    pub dt_min: f64,
    pub grow: f64,
    /// Steps with at most this many Newton iterations let `dt` grow.
    pub easy_iters: usize,
}

impl Default for DtPolicy {
    fn default() -> Self {
        Self { dt_init: 1e-3, dt_max: 1e-2, dt_min: 1e-8, grow: 1.2, easy_iters: 3 }
    }
}

impl DtPolicy {
    pub fn fixed(dt: f64) -> Self {
        Self { dt_init: dt, dt_max: dt, dt_min: dt * 1e-6, ..Default::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvolveOptions {
    pub horizon: f64,
    pub policy: DtPolicy,
    pub sample_every: f64,
    pub store_fields: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub kind: FlowKind,
    pub sample_times: Vec<f64>,
    /// Fields at the sample times when requested.
    pub fields: Vec<Vec<f64>>,
    pub newton_iters: Vec<usize>,
    pub dt_history: Vec<f64>,
    pub final_state: FlowState,
    pub stopped_early: bool,
}

/// `k`-th sample time; exact decimal multiples when `1/every` is an integer.
pub fn sample_time(k: usize, every: f64) -> f64 {
    let inv = 1.0 / every;
    if (inv - inv.round()).abs() < 1e-9 * inv {
        k as f64 / inv.round()
    } else {
        k as f64 * every
    }
}

fn step_any(grid: &Grid, exps: &Exponents, profile: Option<&[f64]>, state: &FlowState, dt: f64) -> Result<StepReport> {
    match state.kind {
        FlowKind::Original => step_original(grid, exps, state, dt),
        FlowKind::Rescaled => step_rescaled(grid, exps, state, dt),
        FlowKind::Linearized => {
            let v = profile.ok_or_else(|| Error::StepFailure("linearized flow needs the profile".into()))?;
            step_linearized(grid, v, exps, state, dt)
        }
    }
}

/// Steps to `opts.horizon` with adaptive `dt`, calling `observer` at every sample time.
pub fn evolve(
    grid: &Grid,
    exps: &Exponents,
    profile: Option<&[f64]>,
    initial: FlowState,
    opts: &EvolveOptions,
    observer: &mut dyn FnMut(&FlowState) -> Result<Control>,
) -> Result<Trajectory> {
    check_len(grid.len(), initial.field.len())?;
    if !(opts.sample_every > 0.0) || !(opts.horizon >= initial.time) {
        return Err(Error::StepFailure("invalid horizon or sample cadence".into()));
    }
    let pol = opts.policy;
    let kind = initial.kind;
    let mut state = initial;
    let mut k = (state.time / opts.sample_every).floor() as usize + 1;
    while sample_time(k, opts.sample_every) <= state.time {
        k += 1;
    }
    let mut dt = pol.dt_init.min(pol.dt_max);
    let mut traj = Trajectory {
        kind,
        sample_times: Vec::new(),
        fields: Vec::new(),
        newton_iters: Vec::new(),
        dt_history: Vec::new(),
        final_state: state.clone(),
        stopped_early: false,
    };
    let horizon = opts.horizon;
    while state.time < horizon {
        let next_sample = sample_time(k, opts.sample_every);
        let target = next_sample.min(horizon);
        let mut h = dt;
        let land = target - state.time <= h * 1.0001;
        if land {
            h = target - state.time;
        }
        match step_any(grid, exps, profile, &state, h) {
            Ok(rep) => {
                let t = if land { target } else { state.time + h };
                state = rep.state;
                state.time = t;
                traj.newton_iters.push(rep.newton_iters);
                traj.dt_history.push(h);
                if rep.newton_iters <= pol.easy_iters {
                    dt = (dt * pol.grow).min(pol.dt_max);
                }
                if land && target == next_sample {
                    k += 1;
                    traj.sample_times.push(t);
                    if opts.store_fields {
                        traj.fields.push(state.field.clone());
                    }
                    if observer(&state)? == Control::Stop {
                        traj.stopped_early = true;
                        break;
                    }
                }
            }
            Err(Error::StepFailure(_) | Error::PositivityLoss | Error::Singular(_)) if h * 0.5 >= pol.dt_min => {
                dt = h * 0.5;
            }
            Err(Error::StepFailure(msg)) => {
                return Err(Error::StepFailure(format!("at t = {}: dt fell below dt_min ({msg})", state.time)))
            }
            Err(e) => return Err(e),
        }
    }
    traj.final_state = state;
    Ok(traj)
}

/// Signed coefficient of `v - V` along `V`, relative to `‖V‖_{L²_V}`.
pub fn drift_along_profile(grid: &Grid, profile: &[f64], p: f64, v: &[f64]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..grid.len() {
        let m = grid.quad_weights[i] * profile[i].powf(p - 1.0);
        num += m * (v[i] - profile[i]) * profile[i];
        den += m * profile[i] * profile[i];
    }
    num / den
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchOptions {
    /// Trials stop once the drift along `V` exceeds this in magnitude.
    pub threshold: f64,
    pub max_trials: usize,
    pub rel_tol: f64,
}

impl Default for MatchOptions {
    fn default() -> Self {
        Self { threshold: 0.05, max_trials: 120, rel_tol: 1e-15 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtinctionMatch {
    /// Factor `a` such that `a v0` has extinction time `T = p/((p-1)c)`.
    pub scale: f64,
    pub trials: usize,
    pub bracket: (f64, f64),
}

/// Sign of the eventual drift of the rescaled flow started at `a v0`:
/// `+1` when the datum outlives `T`, `-1` when it dies first.
fn drift_sign(
    grid: &Grid,
    exps: &Exponents,
    profile: &[f64],
    v0: &[f64],
    a: f64,
    opts: &EvolveOptions,
    threshold: f64,
) -> Result<f64> {
    let init = FlowState::new(FlowKind::Rescaled, v0.iter().map(|x| a * x).collect());
    let mut last = drift_along_profile(grid, profile, exps.p, &init.field);
    let mut obs = |s: &FlowState| -> Result<Control> {
        last = drift_along_profile(grid, profile, exps.p, &s.field);
        let far = s.field.iter().zip(profile).any(|(v, vv)| (v / vv - 1.0).abs() > 0.5);
        Ok(if last.abs() > threshold || far { Control::Stop } else { Control::Continue })
    };
    let opts = EvolveOptions { store_fields: false, ..*opts };
    match evolve(grid, exps, None, init, &opts, &mut obs) {
        Ok(_) => {}
        Err(Error::StepFailure(_) | Error::PositivityLoss) => {}
        Err(e) => return Err(e),
    }
    Ok(if last >= 0.0 { 1.0 } else { -1.0 })
}

/// Bisects on the amplitude of `v0` until the rescaled flow stays near `V` over the
/// horizon, i.e. until the datum's extinction time matches the one encoded in `c`.
/// Use a fixed-step policy: adaptive steps make the drift jump with the scale.
pub fn match_extinction_time(
    grid: &Grid,
    exps: &Exponents,
    profile: &[f64],
    v0: &[f64],
    opts: &EvolveOptions,
    mopts: &MatchOptions,
) -> Result<ExtinctionMatch> {
    check_len(grid.len(), v0.len())?;
    check_len(grid.len(), profile.len())?;
    if v0.iter().any(|x| !(*x > 0.0)) {
        return Err(Error::NonpositiveField);
    }
    let mut trials = 0;
    let sign = |a: f64, trials: &mut usize| -> Result<f64> {
        *trials += 1;
        drift_sign(grid, exps, profile, v0, a, opts, mopts.threshold)
    };
    let s0 = sign(1.0, &mut trials)?;
    let (mut lo, mut hi);
    let mut step = 0.02f64;
    let mut a = 1.0;
    loop {
        if trials > mopts.max_trials {
            return Err(Error::MatchFailure("no sign change while bracketing".into()));
        }
        let cand = if s0 > 0.0 { a * (-step).exp() } else { a * step.exp() };
        let sc = sign(cand, &mut trials)?;
        if sc != s0 {
            (lo, hi) = if s0 > 0.0 { (cand, a) } else { (a, cand) };
            break;
        }
        a = cand;
        step *= 2.0;
    }
    while hi - lo > mopts.rel_tol * hi {
        if trials > mopts.max_trials {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if sign(mid, &mut trials)? > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(ExtinctionMatch { scale: 0.5 * (lo + hi), trials, bracket: (lo, hi) })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtinctionEstimate {
    pub t_est: f64,
    /// Fit window `(τ_lo, τ_hi)`.
    pub window: (f64, f64),
    /// Root-mean-square residual of the linear fit relative to `‖u0‖^{1-m}`.
    pub fit_residual: f64,
    pub samples: usize,
}

/// Fraction band of `‖u‖^{1-m} / ‖u0‖^{1-m}` used for the extinction fit.
pub const EXTINCTION_BAND: (f64, f64) = (0.05, 0.5);

/// Extrapolates `‖u(τ)‖_∞^{1-m}` linearly to zero over the late band.
pub fn estimate_extinction_time(times: &[f64], sups: &[f64], m: f64, band: (f64, f64)) -> Result<ExtinctionEstimate> {
    check_len(times.len(), sups.len())?;
    if times.is_empty() {
        return Err(Error::InsufficientDecay);
    }
    let y: Vec<f64> = sups.iter().map(|s| s.powf(1.0 - m)).collect();
    let y0 = y[0];
    if y.iter().all(|&v| v > band.0 * y0) {
        return Err(Error::InsufficientDecay);
    }
    let sel: Vec<usize> = (0..y.len()).filter(|&i| y[i] >= band.0 * y0 && y[i] <= band.1 * y0).collect();
    if sel.len() < 3 {
        return Err(Error::InsufficientDecay);
    }
    let xs: Vec<f64> = sel.iter().map(|&i| times[i]).collect();
    let ys: Vec<f64> = sel.iter().map(|&i| y[i] / y0).collect();
    let (slope, icpt) = crate::rates::least_squares(&xs, &ys);
    if !(slope < 0.0) {
        return Err(Error::InsufficientDecay);
    }
    let rms = (xs.iter().zip(&ys).map(|(x, yv)| (yv - (icpt + slope * x)).powi(2)).sum::<f64>() / xs.len() as f64).sqrt();
    Ok(ExtinctionEstimate { t_est: -icpt / slope, window: (xs[0], *xs.last().unwrap()), fit_residual: rms, samples: xs.len() })
}

/// Runs the original flow at fixed `dt` until `‖u‖_∞ < 1e-6 ‖u0‖_∞` and fits the extinction time.
pub fn extinction_run(grid: &Grid, exps: &Exponents, u0: &[f64], dt: f64) -> Result<ExtinctionEstimate> {
    let u_max0 = sup(u0);
    if u_max0 == 0.0 {
        return Err(Error::InsufficientDecay);
    }
    let mut times = vec![0.0];
    let mut sups = vec![u_max0];
    let mut obs = |s: &FlowState| -> Result<Control> {
        let m = sup(&s.field);
        times.push(s.time);
        sups.push(m);
        Ok(if m < 1e-6 * u_max0 { Control::Stop } else { Control::Continue })
    };
    // generous horizon: the separate-variables clock with the weakest decay
    let horizon = 1e3 * exps.t_ext.max(1.0) * (u_max0.powf(1.0 - exps.m)).max(1.0);
    let opts = EvolveOptions { horizon, policy: DtPolicy::fixed(dt), sample_every: dt, store_fields: false };
    let traj = evolve(grid, exps, None, FlowState::new(FlowKind::Original, u0.to_vec()), &opts, &mut obs)?;
    if !traj.stopped_early {
        return Err(Error::InsufficientDecay);
    }
    estimate_extinction_time(&times, &sups, exps.m, EXTINCTION_BAND)
}

/// Richardson extrapolation of a first-order quantity over `dt, dt/2, dt/4, …`.
pub fn richardson(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    let mut factor = 2.0;
    while v.len() > 1 {
        v = v.windows(2).map(|w| (factor * w[1] - w[0]) / (factor - 1.0)).collect();
        factor *= 2.0;
    }
    v[0]
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtinctionStudy {
    pub estimates: Vec<ExtinctionEstimate>,
    pub dts: Vec<f64>,
    pub t_extrapolated: f64,
}

/// Extinction time from runs at `dt, dt/2, …` (`levels` runs), Richardson-extrapolated.
pub fn extinction_study(grid: &Grid, exps: &Exponents, u0: &[f64], dt: f64, levels: usize) -> Result<ExtinctionStudy> {
    let dts: Vec<f64> = (0..levels.max(1)).map(|i| dt / 2f64.powi(i as i32)).collect();
    let estimates = dts.iter().map(|&d| extinction_run(grid, exps, u0, d)).collect::<Result<Vec<_>>>()?;
    let t_extrapolated = richardson(&estimates.iter().map(|e| e.t_est).collect::<Vec<_>>());
    Ok(ExtinctionStudy { estimates, dts, t_extrapolated })
}

/// Original time `τ = T(1 - e^{-t/T})` of rescaled time `t`.
pub fn original_time(t: f64, t_ext: f64) -> f64 {
    -t_ext * (-t / t_ext).exp_m1()
}

/// Maps `u(τ)` to the rescaled `v(t) = (e^{t/((1-m)T)} u)^m` with `t = T log(T/(T-τ))`.
pub fn rescale_field(u: &[f64], tau: f64, exps: &Exponents) -> Vec<f64> {
    let t_ext = exps.t_ext;
    let t = t_ext * (t_ext / (t_ext - tau)).ln();
    let factor = (t / ((1.0 - exps.m) * t_ext)).exp();
    u.iter().map(|x| (factor * x).powf(exps.m)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_domain, DomainSpec};
    use crate::stationary::{solve_stationary, InitialGuess};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup(n: usize, p: f64) -> (Grid, Exponents, Vec<f64>) {
        let g = build_domain(DomainSpec::interval(1.0, n)).unwrap();
        let e = Exponents::from_p_c(p, 1.0).unwrap();
        let v = solve_stationary(&g, &e, InitialGuess::FirstEigenfunction, Default::default()).unwrap().v;
        (g, e, v)
    }

    fn rel_sup(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / sup(b)
    }

    #[test]
    fn profile_is_a_fixed_point() {
        let (g, e, v) = setup(128, 2.0);
        let s = FlowState::new(FlowKind::Rescaled, v.clone());
        let r = step_rescaled(&g, &e, &s, 1e-2).unwrap();
        assert!(rel_sup(&r.state.field, &v) < 1e-10 * 1e-2);
    }

    #[test]
    fn uniform_perturbation_step() {
        let (g, e, v) = setup(128, 2.0);
        let dt = 1e-3;
        let s = FlowState::new(FlowKind::Rescaled, v.iter().map(|x| x * (1.0 + 1e-6)).collect());
        let r = step_rescaled(&g, &e, &s, dt).unwrap();
        assert!(r.newton_iters <= 3);
        let h = r.state.field.iter().zip(&v).map(|(a, b)| (a / b - 1.0).abs()).fold(0.0, f64::max);
        let lam_p = 3.0;
        assert!(h >= (-(2.0 * lam_p / e.p + 0.1) * dt).exp() * 1e-6);
        assert!(h <= 1e-6 * (1.0 + 2.0 * e.c * dt));
    }

    #[test]
    fn rejects_bad_steps() {
        let (g, e, v) = setup(32, 2.0);
        let s = FlowState::new(FlowKind::Rescaled, v.clone());
        assert!(step_rescaled(&g, &e, &s, 1.5).is_err());
        assert!(step_original(&g, &e, &s, 1e-3).is_err());
        let lin = FlowState::new(FlowKind::Linearized, v.clone());
        assert!(matches!(step_linearized(&g, &v, &e, &lin, 2.0), Err(Error::TimeStepTooLarge { .. })));
        let mut neg = v.clone();
        neg[3] = -1.0;
        assert!(matches!(
            step_rescaled(&g, &e, &FlowState::new(FlowKind::Rescaled, neg), 1e-3),
            Err(Error::PositivityLoss)
        ));
    }

    #[test]
    fn separate_variables_solution() {
        let (g, e, v) = setup(64, 2.0);
        let s: Vec<f64> = v.iter().map(|x| x.powf(e.p)).collect();
        let t_ext = e.t_ext;
        let dt = t_ext / 2000.0;
        let opts = EvolveOptions { horizon: t_ext / 2.0, policy: DtPolicy::fixed(dt), sample_every: t_ext / 2.0, store_fields: false };
        let traj = evolve(&g, &e, None, FlowState::new(FlowKind::Original, s.clone()), &opts, &mut |_| Ok(Control::Continue)).unwrap();
        let factor = 0.5f64.powf(1.0 / (1.0 - e.m));
        let exact: Vec<f64> = s.iter().map(|x| x * factor).collect();
        assert!(rel_sup(&traj.final_state.field, &exact) < 1e-2);
    }

    #[test]
    fn zero_stays_zero_and_energy_decays() {
        let (g, e, v) = setup(64, 2.0);
        let z = FlowState::new(FlowKind::Original, vec![0.0; 64]);
        assert!(step_original(&g, &e, &z, 1e-2).unwrap().state.field.iter().all(|&x| x == 0.0));
        let mut s = FlowState::new(FlowKind::Original, g.coords.iter().zip(&v).map(|(x, vv)| vv * vv * (1.0 + x)).collect());
        let energy = |u: &[f64]| g.integrate(&u.iter().map(|x| x.powf(1.0 + e.m)).collect::<Vec<_>>()).unwrap();
        let mut prev = energy(&s.field);
        for _ in 0..50 {
            s = step_original(&g, &e, &s, 5e-3).unwrap().state;
            let now = energy(&s.field);
            assert!(now <= prev);
            prev = now;
        }
    }

    #[test]
    fn implicit_steps_preserve_order() {
        let (g, e, v) = setup(48, 1.5);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let a: Vec<f64> = v.iter().map(|x| x * rng.gen_range(0.5..1.5)).collect();
            let b: Vec<f64> = a.iter().map(|x| x * rng.gen_range(1.0..1.3)).collect();
            let dt = rng.gen_range(1e-3..5e-2);
            let ra = step_rescaled(&g, &e, &FlowState::new(FlowKind::Rescaled, a.clone()), dt).unwrap();
            let rb = step_rescaled(&g, &e, &FlowState::new(FlowKind::Rescaled, b.clone()), dt).unwrap();
            assert!(ra.state.field.iter().zip(&rb.state.field).all(|(x, y)| x <= y));
            let ua: Vec<f64> = a.iter().map(|x| x.powf(e.p)).collect();
            let ub: Vec<f64> = b.iter().map(|x| x.powf(e.p)).collect();
            let oa = step_original(&g, &e, &FlowState::new(FlowKind::Original, ua), dt).unwrap();
            let ob = step_original(&g, &e, &FlowState::new(FlowKind::Original, ub), dt).unwrap();
            assert!(oa.state.field.iter().zip(&ob.state.field).all(|(x, y)| x <= y));
        }
    }

    #[test]
    fn samples_land_on_exact_times() {
        let (g, e, v) = setup(32, 2.0);
        let opts = EvolveOptions {
            horizon: 1.0,
            policy: DtPolicy { dt_init: 0.013, dt_max: 0.03, ..Default::default() },
            sample_every: 0.1,
            store_fields: true,
        };
        let traj = evolve(&g, &e, None, FlowState::new(FlowKind::Rescaled, v), &opts, &mut |_| Ok(Control::Continue)).unwrap();
        let expect: Vec<f64> = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0].to_vec();
        assert_eq!(traj.sample_times, expect);
        assert_eq!(traj.fields.len(), 10);
        assert_eq!(traj.final_state.time, 1.0);
        assert!(traj.dt_history.iter().all(|&d| d <= 0.03 + 1e-15));
    }

    #[test]
    fn richardson_removes_linear_and_quadratic_terms() {
        let f = |h: f64| 2.0 + 3.0 * h - 5.0 * h * h;
        let v = richardson(&[f(0.1), f(0.05), f(0.025)]);
        assert!((v - 2.0).abs() < 1e-12);
    }

    #[test]
    fn manufactured_extinction_fit() {
        let m = 0.5;
        let times: Vec<f64> = (0..2000).map(|i| i as f64 * 1e-3).collect();
        let sups: Vec<f64> = times.iter().map(|t| 3.0 * (1.0 - t / 2.0).max(0.0).powf(1.0 / (1.0 - m))).collect();
        let est = estimate_extinction_time(&times, &sups, m, EXTINCTION_BAND).unwrap();
        assert!((est.t_est - 2.0).abs() < 1e-10);
        assert!(est.fit_residual < 1e-12);
        let flat = vec![1.0; 10];
        assert!(matches!(estimate_extinction_time(&times[..10], &flat, m, EXTINCTION_BAND), Err(Error::InsufficientDecay)));
    }

    #[test]
    fn time_maps_are_inverse() {
        let e = Exponents::from_p_c(2.0, 1.0).unwrap();
        let tau = original_time(1.0, e.t_ext);
        let v = rescale_field(&[1.0], tau, &e);
        let factor = (1.0 / ((1.0 - e.m) * e.t_ext)).exp();
        assert!((v[0] - factor.powf(e.m)).abs() < 1e-14);
    }
}
