//! Exponential rate fits, the delay-ODE supersolution and the sharp-rate verdict.

use crate::error::{check_len, Error, Result};
use crate::spectrum::GapReport;

/// Ordinary least squares `y ≈ intercept + slope x`; returns `(slope, intercept)`.
pub fn least_squares(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WindowPolicy {
    Explicit(f64, f64),
    /// Samples whose value lies in `[lo, hi]`.
    EntropyBand(f64, f64),
}

pub const DEFAULT_BAND: (f64, f64) = (1e-10, 1e-4);
pub const MIN_FIT_SAMPLES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    /// Decay rate: minus the slope of `log value` against `t`.
    pub lambda_fit: f64,
    pub intercept: f64,
    pub window: (f64, f64),
    pub r_squared: f64,
    /// Standard error of the slope.
    pub stderr: f64,
    pub samples: usize,
}

pub fn fit_rate(times: &[f64], values: &[f64], policy: WindowPolicy) -> Result<RateFit> {
    check_len(times.len(), values.len())?;
    let keep = |t: f64, v: f64| {
        v > 0.0
            && v.is_finite()
            && match policy {
                WindowPolicy::Explicit(lo, hi) => t >= lo && t <= hi,
                WindowPolicy::EntropyBand(lo, hi) => v >= lo && v <= hi,
            }
    };
    let (xs, ys): (Vec<f64>, Vec<f64>) =
        times.iter().zip(values).filter(|(t, v)| keep(**t, **v)).map(|(t, v)| (*t, v.ln())).unzip();
    if xs.len() < MIN_FIT_SAMPLES {
        return Err(Error::EmptyWindow(xs.len()));
    }
    let (slope, intercept) = least_squares(&xs, &ys);
    let n = xs.len() as f64;
    let my = ys.iter().sum::<f64>() / n;
    let mx = xs.iter().sum::<f64>() / n;
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let ss_res: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let r_squared = if ss_tot > 0.0 { (1.0 - ss_res / ss_tot).clamp(0.0, 1.0) } else { 1.0 };
    let stderr = (ss_res / (n - 2.0) / sxx).sqrt();
    Ok(RateFit {
        lambda_fit: -slope,
        intercept,
        window: (xs[0], *xs.last().unwrap()),
        r_squared,
        stderr,
        samples: xs.len(),
    })
}

/// Closed-form supersolution of `Y' = -λY + Y^σ(t-1) Y` anchored at `Y(t0) = y0`.
///
/// With `s = t - t0 + 1`, `Ȳ = λ^{1/σ} e^{-λs} / [e^{-λσ(s-1)} + C]^{1/σ}` and
/// `C = λ e^{-λσ} y0^{-σ} - 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayBarrier {
    pub lambda: f64,
    pub sigma: f64,
    pub t0: f64,
    pub c: f64,
}

impl DelayBarrier {
    pub fn new(lambda: f64, sigma: f64, y0: f64, t0: f64) -> Result<Self> {
        if !(lambda > 0.0 && sigma > 0.0 && y0 > 0.0) {
            return Err(Error::NonpositiveC(f64::NAN));
        }
        let c = lambda * (-lambda * sigma).exp() * y0.powf(-sigma) - 1.0;
        if !(c > 0.0) {
            return Err(Error::NonpositiveC(c));
        }
        Ok(Self { lambda, sigma, t0, c })
    }

    fn denom(&self, s: f64) -> f64 {
        (-self.lambda * self.sigma * (s - 1.0)).exp() + self.c
    }

    pub fn value(&self, t: f64) -> f64 {
        let s = t - self.t0 + 1.0;
        self.lambda.powf(1.0 / self.sigma) * (-self.lambda * s).exp() / self.denom(s).powf(1.0 / self.sigma)
    }

    pub fn derivative(&self, t: f64) -> f64 {
        let s = t - self.t0 + 1.0;
        let e = (-self.lambda * self.sigma * (s - 1.0)).exp();
        self.value(t) * self.lambda * (e / self.denom(s) - 1.0)
    }

    /// `Ȳ'(t) + λȲ(t) - Ȳ^σ(t-1) Ȳ(t)`, nonnegative for `t ≥ t0`.
    pub fn residual(&self, t: f64) -> f64 {
        let y = self.value(t);
        self.derivative(t) + self.lambda * y - self.value(t - 1.0).powf(self.sigma) * y
    }

    /// `lim Ȳ(t) e^{λ(t - t0 + 1)} = (λ/C)^{1/σ}`.
    pub fn asymptote(&self) -> f64 {
        (self.lambda / self.c).powf(1.0 / self.sigma)
    }
}

pub fn delay_supersolution(lambda: f64, sigma: f64, y_t0: f64, t0: f64, t: f64) -> Result<f64> {
    Ok(DelayBarrier::new(lambda, sigma, y_t0, t0)?.value(t))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DelayOdeRun {
    pub lambda: f64,
    pub sigma: f64,
    pub t0: f64,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub slopes: Vec<f64>,
}

impl DelayOdeRun {
    /// Cubic Hermite dense output on `[t0, t_end]`.
    pub fn eval(&self, t: f64) -> f64 {
        let dt = self.times[1] - self.times[0];
        let last = self.times.len() - 1;
        let i = (((t - self.t0) / dt).floor().max(0.0) as usize).min(last - 1);
        hermite(self.times[i], self.times[i + 1], self.values[i], self.values[i + 1], self.slopes[i], self.slopes[i + 1], t)
    }
}

fn hermite(t0: f64, t1: f64, y0: f64, y1: f64, d0: f64, d1: f64, t: f64) -> f64 {
    let h = t1 - t0;
    let s = (t - t0) / h;
    let s2 = s * s;
    let s3 = s2 * s;
    (2.0 * s3 - 3.0 * s2 + 1.0) * y0 + (s3 - 2.0 * s2 + s) * h * d0 + (-2.0 * s3 + 3.0 * s2) * y1 + (s3 - s2) * h * d1
}

/// RK4 for `Y' = -λY + Y^σ(t-1) Y` on `[t0, t0 + horizon]` with `history` on `[t0-1, t0]`.
/// `1/dt` must be an integer so the delayed stages fall on completed steps.
pub fn integrate_delay_ode(
    lambda: f64,
    sigma: f64,
    history: &dyn Fn(f64) -> f64,
    t0: f64,
    horizon: f64,
    dt: f64,
    cap: f64,
) -> Result<DelayOdeRun> {
    let steps_per_unit = (1.0 / dt).round();
    if !(dt > 0.0 && dt <= 1.0) || ((1.0 / dt) - steps_per_unit).abs() > 1e-9 * steps_per_unit {
        return Err(Error::StepFailure(format!("delay step {dt} must divide the unit delay")));
    }
    let y0 = history(t0);
    if !(y0 > 0.0) {
        return Err(Error::NonpositiveField);
    }
    let steps = (horizon / dt).round() as usize;
    let mut run = DelayOdeRun {
        lambda,
        sigma,
        t0,
        times: Vec::with_capacity(steps + 1),
        values: Vec::with_capacity(steps + 1),
        slopes: Vec::with_capacity(steps + 1),
    };
    let rhs = |y: f64, delayed: f64| -lambda * y + delayed.max(0.0).powf(sigma) * y;
    let delayed = |run: &DelayOdeRun, tau: f64| -> f64 {
        if tau <= t0 {
            history(tau)
        } else {
            run.eval(tau)
        }
    };
    run.times.push(t0);
    run.values.push(y0);
    run.slopes.push(rhs(y0, history(t0 - 1.0)));
    for k in 0..steps {
        let t = t0 + k as f64 * dt;
        let y = run.values[k];
        // stages never read beyond the last stored node since dt ≤ 1
        let d0 = delayed(&run, t - 1.0);
        let dh = delayed(&run, t - 1.0 + 0.5 * dt);
        let d1 = delayed(&run, t - 1.0 + dt);
        let k1 = rhs(y, d0);
        let k2 = rhs(y + 0.5 * dt * k1, dh);
        let k3 = rhs(y + 0.5 * dt * k2, dh);
        let k4 = rhs(y + dt * k3, d1);
        let yn = y + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        let tn = t0 + (k + 1) as f64 * dt;
        if !yn.is_finite() || yn > cap {
            return Err(Error::BlowUp { t: tn, cap });
        }
        run.times.push(tn);
        run.values.push(yn.max(0.0));
        run.slopes.push(rhs(yn, d1));
    }
    Ok(run)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SharpRateVerdict {
    pub lambda_fit: f64,
    /// `2λ_p/p`.
    pub predicted: f64,
    pub lambda_p: f64,
    pub k_p: usize,
    pub p: f64,
    pub rel_err: f64,
    pub tol: f64,
    pub pass: bool,
}

pub fn sharp_rate_verdict(fit: &RateFit, gap: &GapReport, p: f64, tol: f64) -> Result<SharpRateVerdict> {
    let lambda_p = match gap.lambda_p {
        Some(l) if gap.h2_ok => l,
        _ => return Err(Error::H2Violated),
    };
    let predicted = 2.0 * lambda_p / p;
    let rel_err = (fit.lambda_fit - predicted).abs() / predicted;
    Ok(SharpRateVerdict {
        lambda_fit: fit.lambda_fit,
        predicted,
        lambda_p,
        k_p: gap.k_p,
        p,
        rel_err,
        tol,
        pass: rel_err <= tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid(n: usize, dt: f64) -> Vec<f64> {
        (0..n).map(|i| i as f64 * dt).collect()
    }

    #[test]
    fn exact_exponential() {
        let t = grid(200, 0.05);
        let v: Vec<f64> = t.iter().map(|x| (-3.0 * x).exp()).collect();
        let fit = fit_rate(&t, &v, WindowPolicy::Explicit(0.0, 10.0)).unwrap();
        assert!((fit.lambda_fit - 3.0).abs() < 1e-10);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn correction_fades_late() {
        let t = grid(400, 0.05);
        let v: Vec<f64> = t.iter().map(|x| (-3.0 * x).exp() * (1.0 + 0.1 * (-x).exp())).collect();
        let early = fit_rate(&t, &v, WindowPolicy::Explicit(0.0, 3.0)).unwrap();
        let late = fit_rate(&t, &v, WindowPolicy::Explicit(10.0, 19.0)).unwrap();
        assert!((late.lambda_fit - 3.0).abs() < (early.lambda_fit - 3.0).abs());
        assert!((late.lambda_fit - 3.0).abs() < 1e-4);
    }

    #[test]
    fn band_window_and_empty() {
        let t = grid(400, 0.05);
        let v: Vec<f64> = t.iter().map(|x| (-2.0 * x).exp()).collect();
        let fit = fit_rate(&t, &v, WindowPolicy::EntropyBand(1e-6, 1e-2)).unwrap();
        assert!(fit.window.0 >= 2.3 - 0.05 && fit.window.1 <= 6.91);
        assert!(matches!(fit_rate(&t, &v, WindowPolicy::EntropyBand(1e-30, 1e-20)), Err(Error::EmptyWindow(0))));
    }

    #[test]
    fn barrier_anchoring_and_limit() {
        let b = DelayBarrier::new(1.0, 0.5, 0.25, 0.0).unwrap();
        assert!((b.c - (2.0 * (-0.5f64).exp() - 1.0)).abs() < 1e-15);
        assert!((b.value(0.0) - 0.25).abs() < 1e-15);
        // s = 2: Ȳ = e^{-2} / (e^{-1/2} + C)^2
        let frozen = (-2.0f64).exp() / ((-0.5f64).exp() + b.c).powi(2);
        assert!((b.value(1.0) - frozen).abs() < 1e-15);
        let t = 60.0;
        assert!((b.value(t) * (t + 1.0f64).exp() - b.asymptote()).abs() < 1e-9 * b.asymptote());
        assert!(matches!(DelayBarrier::new(1.0, 0.5, 2.0, 0.0), Err(Error::NonpositiveC(_))));
    }

    #[test]
    fn barrier_derivative_matches_differences() {
        let b = DelayBarrier::new(1.0, 0.5, 0.25, 3.0).unwrap();
        for i in 0..50 {
            let t = 3.0 + 0.4 * i as f64;
            let h = 1e-5;
            let fd = (b.value(t + h) - b.value(t - h)) / (2.0 * h);
            assert!((fd - b.derivative(t)).abs() < 1e-8 * b.value(t).max(1e-12) + 1e-14);
            assert!(b.residual(t) >= -1e-14);
        }
    }

    #[test]
    fn comparison_with_barrier() {
        let b = DelayBarrier::new(1.0, 0.5, 0.25, 0.0).unwrap();
        let run = integrate_delay_ode(1.0, 0.5, &|t| b.value(t), 0.0, 20.0, 1e-2, 1e6).unwrap();
        for (t, y) in run.times.iter().zip(&run.values) {
            assert!(*y <= b.value(*t) * (1.0 + 1e-6));
        }
    }

    #[test]
    fn dominated_regime_is_pure_decay() {
        let run = integrate_delay_ode(1.0, 60.0, &|_| 0.5, 0.0, 5.0, 0.01, 10.0).unwrap();
        let y = *run.values.last().unwrap();
        assert!((y / (0.5 * (-5.0f64).exp()) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn rk4_self_convergence() {
        let hist = |t: f64| 0.3 * (1.0 + 0.2 * t);
        let end = |dt| *integrate_delay_ode(1.0, 0.5, &hist, 0.0, 4.0, dt, 1e6).unwrap().values.last().unwrap();
        let (a, b, c) = (end(0.1), end(0.05), end(0.025));
        let order = ((a - b) / (b - c)).abs().log2();
        assert!(order > 3.5, "order {order}");
    }

    #[test]
    fn blow_up_is_reported() {
        let r = integrate_delay_ode(0.1, 1.0, &|_| 5.0, 0.0, 20.0, 0.05, 1e3);
        assert!(matches!(r, Err(Error::BlowUp { .. })));
    }

    #[test]
    fn verdict_requires_gap() {
        let fit = RateFit { lambda_fit: 3.0, intercept: 0.0, window: (0.0, 1.0), r_squared: 1.0, stderr: 0.0, samples: 10 };
        let gap = GapReport { k_p: 1, lambda_p: Some(3.0), gamma_p: 1.0, h2_ok: true, gap_margin: 0.5, cp: 2.0 };
        let v = sharp_rate_verdict(&fit, &gap, 2.0, 0.05).unwrap();
        assert!(v.pass && v.rel_err == 0.0);
        let bad = GapReport { lambda_p: None, h2_ok: false, ..gap };
        assert!(matches!(sharp_rate_verdict(&fit, &bad, 2.0, 0.05), Err(Error::H2Violated)));
    }

    proptest! {
        #[test]
        fn fit_invariant_under_rescaling(rate in 0.1f64..5.0, scale in 1e-6f64..1e6) {
            let t = grid(60, 0.1);
            let v: Vec<f64> = t.iter().map(|x| (-rate * x).exp() * (1.0 + 0.01 * (7.0 * x).sin())).collect();
            let w: Vec<f64> = v.iter().map(|x| x * scale).collect();
            let a = fit_rate(&t, &v, WindowPolicy::Explicit(0.0, 10.0)).unwrap();
            let b = fit_rate(&t, &w, WindowPolicy::Explicit(0.0, 10.0)).unwrap();
            prop_assert!((a.lambda_fit - b.lambda_fit).abs() < 1e-9 * rate);
        }
    }
}
