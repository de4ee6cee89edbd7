//! Entropies, entropy production, Rayleigh quotients and the sampled inequality checks
//! evaluated along rescaled trajectories.

use crate::error::{check_len, Error, Result};
use crate::grid::Grid;
use crate::series::{entropy_density, pow1pm1, pow_rem2};
use crate::spectrum::EigenSystem;
use crate::stationary::Exponents;

/// Nonlinear quotients are undefined at or below this entropy.
pub const QUOTIENT_FLOOR: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq)]
pub struct EntropyReport {
    pub t: f64,
    /// `E[f] = ∫ f² V^{p-1}`, `f = v - V`.
    pub e_lin: f64,
    /// `I[f] = ∫|∇f|² - pc ∫ f² V^{p-1}`.
    pub i_lin: f64,
    pub e_nl: f64,
    pub h_inf: f64,
    /// `(∫ h² V^{p+1})^{1/2}`.
    pub h_l2v: f64,
    /// `Q_{k,j}[f]`, indexed `[k-1][j-1]`.
    pub q_lin: Vec<Vec<Option<f64>>>,
    pub q_nl: Vec<Vec<Option<f64>>>,
    /// `𝒜_{k,j}[v] = ∫ (v^p - V^p) φ_{k,j}`.
    pub a_nl: Vec<Vec<f64>>,
    pub delta_now: f64,
    /// `d𝓔/dt` of the semi-discrete flow at this state.
    pub de_dt: f64,
    /// `R_p = d𝓔/dt + (p+1)/p I[f]`.
    pub r_p: f64,
    /// `∫ |f|³ V^{p-2}`.
    pub cubic: f64,
}

impl EntropyReport {
    /// Largest `|𝒬_{k,j}|` over `k ≤ k_max`, if any is defined.
    pub fn max_q_nl(&self, k_max: usize) -> Option<f64> {
        max_abs(&self.q_nl, k_max)
    }

    pub fn max_q_lin(&self, k_max: usize) -> Option<f64> {
        max_abs(&self.q_lin, k_max)
    }
}

fn max_abs(q: &[Vec<Option<f64>>], k_max: usize) -> Option<f64> {
    q.iter().take(k_max).flatten().flatten().map(|x| x.abs()).reduce(f64::max)
}

fn check_report_inputs(grid: &Grid, profile: &[f64], eigs: &EigenSystem, k_report: usize, field: &[f64]) -> Result<()> {
    check_len(grid.len(), profile.len())?;
    check_len(grid.len(), field.len())?;
    if k_report > eigs.len() {
        return Err(Error::ModeOutOfRange { requested: k_report, available: eigs.len() });
    }
    Ok(())
}

fn linear_parts(grid: &Grid, profile: &[f64], exps: &Exponents, eigs: &EigenSystem, k_report: usize, f: &[f64]) -> Result<(f64, f64, f64, Vec<Vec<Option<f64>>>)> {
    let p = exps.p;
    let e_lin = eigs.norm_sq(f);
    let grad = grid.dirichlet_energy(f)?;
    let i_lin = grad - p * exps.c * e_lin;
    let cubic: f64 = (0..grid.len()).map(|i| grid.quad_weights[i] * f[i].abs().powi(3) * profile[i].powf(p - 2.0)).sum();
    let q_lin = eigs.eigenfunctions[..k_report]
        .iter()
        .map(|space| space.iter().map(|phi| (e_lin > 0.0).then(|| eigs.inner(f, phi) / e_lin.sqrt())).collect())
        .collect();
    Ok((e_lin, i_lin, cubic, q_lin))
}

/// Evaluates every functional at the rescaled state `v`.
pub fn entropy_report(
    grid: &Grid,
    profile: &[f64],
    exps: &Exponents,
    eigs: &EigenSystem,
    k_report: usize,
    v: &[f64],
    t: f64,
) -> Result<EntropyReport> {
    check_report_inputs(grid, profile, eigs, k_report, v)?;
    if v.iter().any(|x| !(*x > 0.0)) {
        return Err(Error::NonpositiveField);
    }
    let p = exps.p;
    let n = grid.len();
    let w = &grid.quad_weights;
    let f: Vec<f64> = v.iter().zip(profile).map(|(a, b)| a - b).collect();
    let h: Vec<f64> = f.iter().zip(profile).map(|(a, b)| a / b).collect();
    let (e_lin, i_lin, cubic, q_lin) = linear_parts(grid, profile, exps, eigs, k_report, &f)?;
    let vp1: Vec<f64> = profile.iter().map(|x| x.powf(p + 1.0)).collect();
    // v^p - V^p without cancellation
    let dvp: Vec<f64> = (0..n).map(|i| profile[i].powf(p) * pow1pm1(p, h[i])).collect();
    let e_nl: f64 = (0..n).map(|i| w[i] * vp1[i] * entropy_density(p, h[i])).sum();
    let h_inf = h.iter().fold(0.0, |m: f64, x| m.max(x.abs()));
    let h_l2v = (0..n).map(|i| w[i] * h[i] * h[i] * vp1[i]).sum::<f64>().sqrt();
    let rem: f64 = (0..n).map(|i| w[i] * h[i] * vp1[i] * pow_rem2(p, h[i])).sum();
    let r_p = (p + 1.0) / p * exps.c * rem;
    let de_dt = -(p + 1.0) / p * i_lin + r_p;
    let a_nl: Vec<Vec<f64>> = eigs.eigenfunctions[..k_report]
        .iter()
        .map(|space| space.iter().map(|phi| (0..n).map(|i| w[i] * dvp[i] * phi[i]).sum()).collect())
        .collect();
    let q_nl = a_nl
        .iter()
        .map(|row| row.iter().map(|a| (e_nl > QUOTIENT_FLOOR).then(|| a / e_nl.sqrt())).collect())
        .collect();
    Ok(EntropyReport { t, e_lin, i_lin, e_nl, h_inf, h_l2v, q_lin, q_nl, a_nl, delta_now: h_inf, de_dt, r_p, cubic })
}

/// Report for the linearized flow: linear functionals of `f`; nonlinear ones at `V + f`
/// when that is positive, NaN otherwise.
pub fn linear_report(
    grid: &Grid,
    profile: &[f64],
    exps: &Exponents,
    eigs: &EigenSystem,
    k_report: usize,
    f: &[f64],
    t: f64,
) -> Result<EntropyReport> {
    check_report_inputs(grid, profile, eigs, k_report, f)?;
    let v: Vec<f64> = profile.iter().zip(f).map(|(a, b)| a + b).collect();
    if v.iter().all(|x| *x > 0.0) {
        return entropy_report(grid, profile, exps, eigs, k_report, &v, t);
    }
    let (e_lin, i_lin, cubic, q_lin) = linear_parts(grid, profile, exps, eigs, k_report, f)?;
    let nan_q = q_lin.iter().map(|r| vec![None; r.len()]).collect();
    let nan_a = q_lin.iter().map(|r| vec![f64::NAN; r.len()]).collect();
    let h_inf = f.iter().zip(profile).fold(0.0, |m: f64, (a, b)| m.max((a / b).abs()));
    Ok(EntropyReport {
        t,
        e_lin,
        i_lin,
        e_nl: f64::NAN,
        h_inf,
        h_l2v: e_lin.sqrt(),
        q_lin,
        q_nl: nan_q,
        a_nl: nan_a,
        delta_now: h_inf,
        de_dt: f64::NAN,
        r_p: f64::NAN,
        cubic,
    })
}

/// Measured versions of the abstract comparison constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComparisonConstants {
    pub sandwich_lo: f64,
    pub sandwich_hi: f64,
    pub remainder_kappa: f64,
    pub smoothing_kappa: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SandwichMargin {
    /// `2𝓔 / ((p+1) E)`.
    pub ratio: f64,
    pub delta: f64,
    /// Smallest `C` with `ratio ∈ [(1+Cδ)^{-2}, (1+Cδ)²]`.
    pub c_needed: f64,
}

impl SandwichMargin {
    pub fn holds_with(&self, c: f64) -> bool {
        let b = (1.0 + c * self.delta).powi(2);
        self.ratio <= b * (1.0 + 1e-12) && self.ratio >= (1.0 - 1e-12) / b
    }
}

/// `None` outside the regime `0 < δ < 1/(2p)` with positive entropies.
pub fn sandwich_check(report: &EntropyReport, p: f64) -> Option<SandwichMargin> {
    let delta = report.h_inf;
    if !(delta > 0.0 && delta < 1.0 / (2.0 * p) && report.e_lin > 0.0 && report.e_nl > 0.0) {
        return None;
    }
    let ratio = 2.0 * report.e_nl / ((p + 1.0) * report.e_lin);
    let c_needed = (ratio.max(1.0 / ratio).sqrt() - 1.0) / delta;
    Some(SandwichMargin { ratio, delta, c_needed })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SandwichSummary {
    pub lo: f64,
    pub hi: f64,
    /// Supremum of the required constant over the valid samples.
    pub c_measured: f64,
    /// Log-log slope of `|ratio - 1|` against `δ` over samples with `δ ≥ 1e-4`.
    pub slope: Option<f64>,
    pub samples: usize,
}

pub fn sandwich_summary(reports: &[EntropyReport], p: f64) -> Result<SandwichSummary> {
    let m: Vec<SandwichMargin> = reports.iter().filter_map(|r| sandwich_check(r, p)).collect();
    if m.is_empty() {
        return Err(Error::InsufficientTrace("no sample in the sandwich regime".into()));
    }
    let lo = m.iter().map(|x| x.ratio).fold(f64::INFINITY, f64::min);
    let hi = m.iter().map(|x| x.ratio).fold(0.0, f64::max);
    let c_measured = m.iter().map(|x| x.c_needed).fold(0.0, f64::max);
    let (xs, ys): (Vec<f64>, Vec<f64>) = m
        .iter()
        .filter(|x| x.delta >= 1e-4 && (x.ratio - 1.0).abs() > 0.0)
        .map(|x| (x.delta.ln(), (x.ratio - 1.0).abs().ln()))
        .unzip();
    let slope = (xs.len() >= 3).then(|| crate::rates::least_squares(&xs, &ys).0);
    Ok(SandwichSummary { lo, hi, c_measured, slope, samples: m.len() })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RayleighComparison {
    /// `√2 p / √(p+1)`.
    pub limit: f64,
    /// `𝒬_{k,j} / Q_{k,j}` with 1-based `(k, j)`.
    pub ratios: Vec<(usize, usize, Option<f64>)>,
    /// Smallest `C'` making the bracket hold with the given `C`.
    pub c_prime: f64,
}

pub fn rayleigh_limit(p: f64) -> f64 {
    2f64.sqrt() * p / (p + 1.0).sqrt()
}

/// Checks `𝒬 ∈ [L(1+Cδ)^{-1}Q - C'√E, L(1+Cδ)Q + C'√E]` and reports the `C'` it needs.
pub fn rayleigh_compare(report: &EntropyReport, p: f64, c: f64) -> Result<RayleighComparison> {
    if !(report.e_nl > 0.0) || report.h_inf >= 1.0 / (2.0 * p) {
        return Err(Error::InsufficientTrace("Rayleigh comparison needs 𝓔 > 0 and δ < 1/(2p)".into()));
    }
    let limit = rayleigh_limit(p);
    let grow = 1.0 + c * report.h_inf;
    let se = report.e_lin.sqrt();
    let mut ratios = Vec::new();
    let mut c_prime: f64 = 0.0;
    for (k, (ql, qn)) in report.q_lin.iter().zip(&report.q_nl).enumerate() {
        for (j, (a, b)) in ql.iter().zip(qn).enumerate() {
            let (Some(a), Some(b)) = (a, b) else {
                ratios.push((k + 1, j + 1, None));
                continue;
            };
            ratios.push((k + 1, j + 1, (a.abs() > 0.0).then(|| b / a)));
            let (lo, hi) = if *a >= 0.0 { (limit * a / grow, limit * a * grow) } else { (limit * a * grow, limit * a / grow) };
            let need = (lo - b).max(b - hi).max(0.0);
            if se > 0.0 {
                c_prime = c_prime.max(need / se);
            }
        }
    }
    Ok(RayleighComparison { limit, ratios, c_prime })
}

/// Smallest `κ` with `max Q ≤ κ max 𝒬` on every sample where both are defined.
pub fn aon_aol_kappa(reports: &[EntropyReport], k_max: usize) -> Option<f64> {
    reports
        .iter()
        .filter_map(|r| match (r.max_q_lin(k_max), r.max_q_nl(k_max)) {
            (Some(a), Some(b)) if b > 0.0 => Some(a / b),
            _ => None,
        })
        .reduce(f64::max)
}

/// Analytic size of the cubic remainder constant, `c(p²-1)(p+1+|p-2|)/6`.
pub fn kappa_estimate(p: f64, c: f64) -> f64 {
    c * (p * p - 1.0) * (p + 1.0 + (p - 2.0).abs()) / 6.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProductionSummary {
    /// `(t, |R_p| / ∫|f|³V^{p-2})` on the window.
    pub kappa: Vec<(f64, f64)>,
    pub kappa_sup: f64,
    pub kappa_analytic: f64,
    /// Largest relative gap between the Richardson trace derivative and `d𝓔/dt`.
    pub fd_discrepancy: f64,
    /// Log-log slope of `|R_p| / I` against `h_∞`.
    pub ratio_slope: Option<f64>,
}

/// Relative slack allowed between trace differences and the production identity.
pub const FD_SLACK: f64 = 0.05;

/// Production residual on the samples with `𝓔 ∈ band` and `δ < 1/(2p)`.
pub fn production_residual(reports: &[EntropyReport], p: f64, c: f64, band: (f64, f64)) -> Result<ProductionSummary> {
    let idx: Vec<usize> = (0..reports.len())
        .filter(|&i| {
            let r = &reports[i];
            r.e_nl >= band.0 && r.e_nl <= band.1 && r.h_inf < 1.0 / (2.0 * p) && r.cubic > 0.0
        })
        .collect();
    if idx.len() < 5 {
        return Err(Error::InsufficientTrace(format!("{} samples in the production window", idx.len())));
    }
    let kappa: Vec<(f64, f64)> = idx.iter().map(|&i| (reports[i].t, reports[i].r_p.abs() / reports[i].cubic)).collect();
    let kappa_sup = kappa.iter().map(|x| x.1).fold(0.0, f64::max);
    let mut fd_discrepancy: f64 = 0.0;
    let mut checked = 0;
    for &i in &idx {
        if i < 2 || i + 2 >= reports.len() {
            continue;
        }
        let t: Vec<f64> = (i - 2..=i + 2).map(|k| reports[k].t).collect();
        let dt = t[3] - t[2];
        if t.windows(2).any(|w| ((w[1] - w[0]) - dt).abs() > 1e-9 * dt) {
            continue;
        }
        let e = |k: usize| reports[k].e_nl;
        let d1 = (e(i + 1) - e(i - 1)) / (2.0 * dt);
        let d2 = (e(i + 2) - e(i - 2)) / (4.0 * dt);
        let d = (4.0 * d1 - d2) / 3.0;
        let exact = reports[i].de_dt;
        fd_discrepancy = fd_discrepancy.max((d - exact).abs() / exact.abs());
        checked += 1;
    }
    if checked == 0 {
        return Err(Error::InsufficientTrace("no uniformly sampled interior points".into()));
    }
    if fd_discrepancy > FD_SLACK {
        return Err(Error::WindowTooCoarse(format!("trace derivative off by {:.3}%", 100.0 * fd_discrepancy)));
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = idx
        .iter()
        .map(|&i| &reports[i])
        .filter(|r| r.r_p != 0.0 && r.i_lin > 0.0)
        .map(|r| (r.h_inf.ln(), (r.r_p.abs() / r.i_lin).ln()))
        .unzip();
    let ratio_slope = (xs.len() >= 3).then(|| crate::rates::least_squares(&xs, &ys).0);
    Ok(ProductionSummary { kappa, kappa_sup, kappa_analytic: kappa_estimate(p, c), fd_discrepancy, ratio_slope })
}

/// Log-linear interpolation of the sampled entropy at time `t`.
fn entropy_at(reports: &[EntropyReport], t: f64) -> Option<f64> {
    let i = reports.partition_point(|r| r.t < t);
    if i < reports.len() && (reports[i].t - t).abs() <= 1e-9 * t.abs().max(1.0) {
        return Some(reports[i].e_nl);
    }
    if i == 0 || i >= reports.len() {
        return None;
    }
    let (a, b) = (&reports[i - 1], &reports[i]);
    if !(a.e_nl > 0.0 && b.e_nl > 0.0) {
        return None;
    }
    let s = (t - a.t) / (b.t - a.t);
    Some((a.e_nl.ln() * (1.0 - s) + b.e_nl.ln() * s).exp())
}

#[derive(Debug, Clone, PartialEq)]
pub struct DelayedRatio {
    /// First sample with `𝓔 ≤ 1`.
    pub t0: f64,
    /// `(t, numerator(t) / 𝓔(t-1)^exponent)` for `t ≥ t0 + 1`.
    pub ratios: Vec<(f64, f64)>,
    pub sup: f64,
}

fn delayed_ratio(reports: &[EntropyReport], exponent: f64, num: &dyn Fn(&EntropyReport) -> Option<f64>) -> Result<DelayedRatio> {
    let t0 = reports
        .iter()
        .find(|r| r.e_nl <= 1.0)
        .map(|r| r.t)
        .ok_or_else(|| Error::InsufficientTrace("entropy never drops below 1".into()))?;
    let mut ratios = Vec::new();
    for r in reports.iter().filter(|r| r.t >= t0 + 1.0 - 1e-12) {
        let Some(e) = entropy_at(reports, r.t - 1.0) else { continue };
        let Some(x) = num(r) else { continue };
        if !(e > 0.0) || x == 0.0 {
            continue;
        }
        ratios.push((r.t, x / e.powf(exponent)));
    }
    if ratios.is_empty() {
        return Err(Error::InsufficientTrace("no sample at least one time unit after t0".into()));
    }
    let sup = ratios.iter().map(|x| x.1).fold(0.0, f64::max);
    Ok(DelayedRatio { t0, ratios, sup })
}

/// `sup ‖h(t)‖_∞ / 𝓔[v(t-1)]^{exponent}`; the sharp exponent is `1/(4N)`.
pub fn smoothing_check(reports: &[EntropyReport], exponent: f64) -> Result<DelayedRatio> {
    delayed_ratio(reports, exponent, &|r| Some(r.h_inf))
}

pub fn smoothing_exponent(dim: usize) -> f64 {
    1.0 / (4.0 * dim as f64)
}

/// `sup max_{k ≤ k_max} 𝒬_{k,j}(t) / 𝓔[v(t-1)]^{exponent}`; the exponent is `1/(8N)`.
pub fn quantitative_orthogonality(reports: &[EntropyReport], k_max: usize, exponent: f64) -> Result<DelayedRatio> {
    delayed_ratio(reports, exponent, &|r| r.max_q_nl(k_max))
}

/// For each `ε`, the earliest sampled time after which every defined `𝒬_{k,j}`
/// (`k ≤ k_max`) stays `≤ ε`.
pub fn orthogonality_entry_times(reports: &[EntropyReport], k_max: usize, ladder: &[f64]) -> Vec<Option<f64>> {
    ladder
        .iter()
        .map(|&eps| {
            let mut entry = None;
            for r in reports {
                match r.max_q_nl(k_max) {
                    Some(q) if q > eps => entry = None,
                    Some(_) => {
                        if entry.is_none() {
                            entry = Some(r.t);
                        }
                    }
                    None => {}
                }
            }
            entry
        })
        .collect()
}

/// Number of increases of the sampled entropy after the first sample with
/// `δ < delta_bar` and all `𝒬 ≤ eps_bar`, ignoring samples with `𝓔 < floor`.
pub fn entropy_increases(reports: &[EntropyReport], k_max: usize, delta_bar: f64, eps_bar: f64, floor: f64) -> Option<(f64, usize)> {
    let start = reports
        .iter()
        .position(|r| r.h_inf < delta_bar && r.max_q_nl(k_max).map_or(true, |q| q <= eps_bar))?;
    let tail: Vec<&EntropyReport> = reports[start..].iter().filter(|r| r.e_nl >= floor).collect();
    let bad = tail.windows(2).filter(|w| w[1].e_nl >= w[0].e_nl).count();
    Some((reports[start].t, bad))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuotientGrowth {
    pub t: f64,
    pub k: usize,
    pub j: usize,
    /// `(d|𝒜|/dt) / (ε0 |𝒜|)`.
    pub ratio: f64,
}

/// Growth of `|𝒜_{k,j}|` where `𝒬_{k,j} ≥ ε0` and `δ ≤ ε0/10`.
pub fn quotient_growth(reports: &[EntropyReport], k_max: usize, eps0: f64) -> Vec<QuotientGrowth> {
    let mut out = Vec::new();
    for i in 1..reports.len().saturating_sub(1) {
        let r = &reports[i];
        if r.h_inf > eps0 / 10.0 {
            continue;
        }
        for (k, row) in r.q_nl.iter().take(k_max).enumerate() {
            for (j, q) in row.iter().enumerate() {
                if q.map_or(true, |q| q.abs() < eps0) {
                    continue;
                }
                let a = |s: &EntropyReport| s.a_nl[k][j].abs();
                let d = (a(&reports[i + 1]) - a(&reports[i - 1])) / (reports[i + 1].t - reports[i - 1].t);
                out.push(QuotientGrowth { t: r.t, k: k + 1, j: j + 1, ratio: d / (eps0 * a(r)) });
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonotonicityReport {
    /// Worst additive violation of the two-sided integral bounds.
    pub worst_integral: f64,
    /// Worst violation of `∂_t h ≤ 2cm(h+1)` by sample differences.
    pub worst_pointwise: f64,
    pub pairs: usize,
}

/// Integral bounds on `∫_{t0}^{t1} h dt` for sample pairs at `t ≥ T log 2`: consecutive
/// pairs and pairs one time unit apart.
pub fn time_monotonicity_check(
    grid: &Grid,
    profile: &[f64],
    exps: &Exponents,
    times: &[f64],
    fields: &[Vec<f64>],
) -> Result<MonotonicityReport> {
    check_len(times.len(), fields.len())?;
    let start = exps.t_ext * 2f64.ln();
    let sel: Vec<usize> = (0..times.len()).filter(|&i| times[i] >= start).collect();
    if sel.len() < 2 {
        return Err(Error::InsufficientTrace("fewer than two samples after T log 2".into()));
    }
    let h: Vec<Vec<f64>> = sel
        .iter()
        .map(|&i| {
            check_len(grid.len(), fields[i].len())?;
            Ok(fields[i].iter().zip(profile).map(|(v, vv)| v / vv - 1.0).collect())
        })
        .collect::<Result<_>>()?;
    let t: Vec<f64> = sel.iter().map(|&i| times[i]).collect();
    let cm2 = 2.0 * exps.c * exps.m;
    let spacing = (t[1] - t[0]).max(1e-300);
    let stride = ((1.0 / spacing).round() as usize).max(1);
    let mut worst_integral: f64 = 0.0;
    let mut worst_pointwise: f64 = 0.0;
    let mut pairs = 0;
    for a in 0..t.len() {
        let far = if stride > 1 { Some(a + stride) } else { None };
        for b in std::iter::once(a + 1).chain(far) {
            if b >= t.len() {
                continue;
            }
            pairs += 1;
            let d = t[b] - t[a];
            let e = (cm2 * d).exp();
            for x in 0..grid.len() {
                let integral: f64 = (a..b).map(|s| 0.5 * (h[s][x] + h[s + 1][x]) * (t[s + 1] - t[s])).sum();
                let lower = (1.0 - 1.0 / e) / cm2 * h[b][x] - 0.5 * cm2 * d * d;
                let upper = (e - 1.0) / cm2 * h[a][x] + 0.5 * cm2 * d * d * e;
                worst_integral = worst_integral.max(lower - integral).max(integral - upper);
                if b == a + 1 {
                    let slope = (h[b][x] - h[a][x]) / d;
                    worst_pointwise = worst_pointwise.max(slope - cm2 * (h[a][x].max(h[b][x]) + 1.0));
                }
            }
        }
    }
    Ok(MonotonicityReport { worst_integral, worst_pointwise, pairs })
}
