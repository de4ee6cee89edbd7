//! Positive solutions of `-ΔV = cV^p` with homogeneous Dirichlet data.

use crate::error::{check_len, Error, Result};
use crate::grid::{build_domain, DomainSpec, Geometry, Grid};
use crate::quadrature::{integrate, QuadOptions};
use crate::spectrum::lowest_pencil;

/// `p = 1/m`, `c = p/((p-1)T)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Exponents {
    pub p: f64,
    pub m: f64,
    pub c: f64,
    /// Extinction time `T`.
    pub t_ext: f64,
}

impl Exponents {
    pub fn from_p_c(p: f64, c: f64) -> Result<Self> {
        if !(p > 1.0 && p.is_finite()) {
            return Err(Error::InvalidExponents(format!("p must exceed 1, got {p}")));
        }
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::InvalidExponents(format!("c must be positive, got {c}")));
        }
        Ok(Self { p, m: 1.0 / p, c, t_ext: p / ((p - 1.0) * c) })
    }

    pub fn from_p_t(p: f64, t_ext: f64) -> Result<Self> {
        if !(t_ext > 0.0 && t_ext.is_finite()) {
            return Err(Error::InvalidExponents(format!("T must be positive, got {t_ext}")));
        }
        if !(p > 1.0 && p.is_finite()) {
            return Err(Error::InvalidExponents(format!("p must exceed 1, got {p}")));
        }
        let mut e = Self::from_p_c(p, p / ((p - 1.0) * t_ext))?;
        e.t_ext = t_ext;
        Ok(e)
    }

    pub fn from_m_c(m: f64, c: f64) -> Result<Self> {
        if !(m > 0.0 && m < 1.0) {
            return Err(Error::InvalidExponents(format!("m must lie in (0, 1), got {m}")));
        }
        let mut e = Self::from_p_c(1.0 / m, c)?;
        e.m = m;
        Ok(e)
    }

    pub fn from_m_t(m: f64, t_ext: f64) -> Result<Self> {
        if !(m > 0.0 && m < 1.0) {
            return Err(Error::InvalidExponents(format!("m must lie in (0, 1), got {m}")));
        }
        let mut e = Self::from_p_t(1.0 / m, t_ext)?;
        e.m = m;
        Ok(e)
    }

    /// Same `p`, new `c`.
    pub fn with_c(&self, c: f64) -> Result<Self> {
        Self::from_p_c(self.p, c)
    }

    /// Checks `p < (N+2)/(N-2)` for `N ≥ 3`.
    pub fn check_dimension(&self, dim: usize) -> Result<()> {
        if dim >= 3 {
            let ps = (dim as f64 + 2.0) / (dim as f64 - 2.0);
            if self.p >= ps {
                return Err(Error::InvalidExponents(format!(
                    "p = {} is not below the critical exponent {ps} for N = {dim}",
                    self.p
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StationaryProfile {
    pub v: Vec<f64>,
    /// `S = V^p`.
    pub s: Vec<f64>,
    pub c: f64,
    /// `‖Δ_h V + cV^p‖_∞`.
    pub residual_norm: f64,
    pub newton_iters: usize,
}

impl StationaryProfile {
    pub fn sup(&self) -> f64 {
        self.v.iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialGuess {
    FirstEigenfunction,
    Supplied(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StationaryOptions {
    pub max_iters: usize,
    /// Target for `‖Δ_h V + cV^p‖_∞ / ‖V‖_∞`.
    pub tol: f64,
}

impl Default for StationaryOptions {
    fn default() -> Self {
        Self { max_iters: 100, tol: 1e-10 }
    }
}

/// Smallest residual that floating-point evaluation of `Δ_h` can certify.
pub fn residual_floor(grid: &Grid) -> f64 {
    8.0 * f64::EPSILON / (grid.h * grid.h)
}

/// `‖Δ_h V + cV^p‖_∞`.
pub fn stationary_residual(grid: &Grid, v: &[f64], p: f64, c: f64) -> Result<f64> {
    let lap = grid.apply_laplacian(v)?;
    Ok(lap.iter().zip(v).map(|(l, x)| (l + c * x.abs().powf(p)).abs()).fold(0.0, f64::max))
}

fn sup(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Damped Newton on `Δ_h V + cV^p = 0`.
pub fn solve_stationary(grid: &Grid, exps: &Exponents, init: InitialGuess, opts: StationaryOptions) -> Result<StationaryProfile> {
    exps.check_dimension(grid.dim())?;
    let (p, c) = (exps.p, exps.c);
    let n = grid.len();
    let w = &grid.quad_weights;
    let mut v = match init {
        InitialGuess::Supplied(v0) => {
            check_len(n, v0.len())?;
            if v0.iter().any(|x| !(*x > 0.0)) {
                return Err(Error::NonpositiveField);
            }
            v0
        }
        InitialGuess::FirstEigenfunction => {
            let (lam, vecs) = lowest_pencil(grid.stiffness(), w, 1)?;
            let phi: Vec<f64> = vecs[0].iter().map(|x| x.abs().max(f64::MIN_POSITIVE)).collect();
            // scale so that ∫|∇V|² = c ∫V^{p+1} holds for V = s φ
            let num = lam[0] * grid.integrate(&phi.iter().map(|x| x * x).collect::<Vec<_>>())?;
            let den = c * grid.integrate(&phi.iter().map(|x| x.powf(p + 1.0)).collect::<Vec<_>>())?;
            let s = (num / den).powf(1.0 / (p - 1.0));
            phi.iter().map(|x| s * x).collect()
        }
    };
    let tol = opts.tol.max(residual_floor(grid));
    let stiff = grid.stiffness();
    let residual = |v: &[f64]| -> Result<Vec<f64>> {
        let kv = stiff.mul_vec(v)?;
        Ok((0..n).map(|i| -kv[i] / w[i] + c * v[i].powf(p)).collect())
    };
    let mut r = residual(&v)?;
    let mut rn = sup(&r);
    for iter in 0..=opts.max_iters {
        if rn <= tol * sup(&v) {
            let s = v.iter().map(|x| x.powf(p)).collect();
            return Ok(StationaryProfile { v, s, c, residual_norm: rn, newton_iters: iter });
        }
        if iter == opts.max_iters {
            break;
        }
        // J = -K + diag(w c p V^{p-1}) acting on the weighted residual w·r
        let jd: Vec<f64> = (0..n).map(|i| w[i] * c * p * v[i].powf(p - 1.0)).collect();
        let jac = stiff.scaled(-1.0).add_diag(&jd);
        let rhs: Vec<f64> = (0..n).map(|i| -w[i] * r[i]).collect();
        let dv = jac.solve(&rhs)?;
        let mut t = 1.0;
        let mut accepted = false;
        let mut positive_seen = false;
        for _ in 0..60 {
            let trial: Vec<f64> = v.iter().zip(&dv).map(|(a, b)| a + t * b).collect();
            if trial.iter().all(|x| *x > 0.0) {
                positive_seen = true;
                let rt = residual(&trial)?;
                let rtn = sup(&rt);
                if rtn < rn || rtn <= tol * sup(&trial) {
                    v = trial;
                    r = rt;
                    rn = rtn;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted {
            if !positive_seen {
                return Err(Error::NegativeIterate);
            }
            return Err(Error::NonConvergence { iters: iter + 1, residual: rn });
        }
    }
    Err(Error::NonConvergence { iters: opts.max_iters, residual: rn })
}

/// `(min V/dist, max V/dist)`.
pub fn boundary_slope_bounds(grid: &Grid, v: &[f64]) -> Result<(f64, f64)> {
    check_len(grid.len(), v.len())?;
    if v.iter().any(|x| !(*x > 0.0)) {
        return Err(Error::NonpositiveField);
    }
    let ratios = v.iter().zip(&grid.boundary_distance).map(|(a, d)| a / d);
    Ok(ratios.fold((f64::INFINITY, 0.0f64), |(lo, hi), r| (lo.min(r), hi.max(r))))
}

/// Closed-form one-dimensional profile from the first integral
/// `V'² = 2c/(p+1) (M^{p+1} - V^{p+1})`.
#[derive(Debug, Clone, Copy)]
pub struct IntervalOracle {
    pub p: f64,
    pub c: f64,
    pub length: f64,
    /// `M = max V`.
    pub peak: f64,
    /// `I_p = ∫₀¹ dt / √(1 - t^{p+1})`.
    pub i_p: f64,
    quad: QuadOptions,
}

/// Integrand of `I_p` after `t = 1 - u²`.
fn first_integral_kernel(p: f64, u: f64) -> f64 {
    if u == 0.0 {
        return 2.0 / (p + 1.0).sqrt();
    }
    let q = -((p + 1.0) * (-u * u).ln_1p()).exp_m1();
    2.0 * u / q.sqrt()
}

impl IntervalOracle {
    pub fn new(exps: &Exponents, length: f64, quad: QuadOptions) -> Result<Self> {
        let (p, c) = (exps.p, exps.c);
        if !(length > 0.0) {
            return Err(Error::InvalidDomain(format!("interval length must be positive, got {length}")));
        }
        let i_p = integrate(|u| first_integral_kernel(p, u), 0.0, 1.0, quad)?;
        let k = 2.0 * c / (p + 1.0);
        let peak = (2.0 * i_p / (length * k.sqrt())).powf(2.0 / (p - 1.0));
        if !(peak.is_finite() && peak > 0.0) {
            return Err(Error::RootBracketFailure(format!("peak value {peak} out of range")));
        }
        Ok(Self { p, c, length, peak, i_p, quad })
    }

    /// `V(x)` for `x ∈ [0, L]`.
    pub fn value(&self, x: f64) -> Result<f64> {
        let d = x.min(self.length - x);
        if d <= 0.0 {
            return Ok(0.0);
        }
        let k = 2.0 * self.c / (self.p + 1.0);
        let target = d * k.sqrt() * self.peak.powf(0.5 * (self.p - 1.0));
        if target >= self.i_p {
            return Ok(self.peak);
        }
        // solve G(u) = ∫_u^1 kernel = target; G decreases from I_p to 0
        let p = self.p;
        let g = |u: f64| integrate(|s| first_integral_kernel(p, s), u, 1.0, self.quad);
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        let mut u = 1.0 - target / self.i_p;
        for _ in 0..200 {
            let gu = g(u)? - target;
            if gu > 0.0 {
                lo = u;
            } else {
                hi = u;
            }
            let step = gu / first_integral_kernel(p, u);
            let mut next = u + step;
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if (next - u).abs() <= 4.0 * f64::EPSILON || hi - lo <= 4.0 * f64::EPSILON {
                u = next;
                break;
            }
            u = next;
        }
        Ok(self.peak * (1.0 - u * u))
    }
}

/// Oracle profile tabulated on the interval grid with `n` nodes.
pub fn oracle_profile_1d(exps: &Exponents, length: f64, n: usize) -> Result<StationaryProfile> {
    oracle_profile_1d_with(exps, length, n, QuadOptions::default())
}

pub fn oracle_profile_1d_with(exps: &Exponents, length: f64, n: usize, quad: QuadOptions) -> Result<StationaryProfile> {
    let grid = build_domain(DomainSpec::interval(length, n))?;
    let oracle = IntervalOracle::new(exps, length, quad)?;
    let v = grid.coords.iter().map(|&x| oracle.value(x)).collect::<Result<Vec<f64>>>()?;
    let residual_norm = stationary_residual(&grid, &v, exps.p, exps.c)?;
    let s = v.iter().map(|x| x.powf(exps.p)).collect();
    Ok(StationaryProfile { v, s, c: exps.c, residual_norm, newton_iters: 0 })
}

/// Oracle values at the nodes of an existing interval grid.
pub fn oracle_on_grid(grid: &Grid, exps: &Exponents) -> Result<Vec<f64>> {
    let Geometry::Interval { length } = grid.spec.geometry else {
        return Err(Error::InvalidDomain("the oracle needs an interval".into()));
    };
    let oracle = IntervalOracle::new(exps, length, QuadOptions::default())?;
    grid.coords.iter().map(|&x| oracle.value(x)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn interval(n: usize) -> Grid {
        build_domain(DomainSpec::interval(1.0, n)).unwrap()
    }

    fn rel_sup(a: &[f64], b: &[f64]) -> f64 {
        let d = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        d / sup(b)
    }

    #[test]
    fn exponent_constructors() {
        let e = Exponents::from_p_c(2.0, 1.0).unwrap();
        assert_eq!(e.t_ext, 2.0);
        assert!((e.p * e.m - 1.0).abs() < 1e-14);
        let e = Exponents::from_p_t(3.0, 0.5).unwrap();
        assert!((e.c * (e.p - 1.0) * e.t_ext - e.p).abs() < 1e-12);
        let e = Exponents::from_m_c(0.25, 2.0).unwrap();
        assert_eq!(e.p, 4.0);
        assert!(Exponents::from_p_c(1.0, 1.0).is_err());
        assert!(Exponents::from_p_c(2.0, -1.0).is_err());
        assert!(Exponents::from_m_t(1.5, 1.0).is_err());
        assert!(Exponents::from_p_c(5.0, 1.0).unwrap().check_dimension(3).is_err());
        assert!(Exponents::from_p_c(4.9, 1.0).unwrap().check_dimension(3).is_ok());
        assert!(Exponents::from_p_c(50.0, 1.0).unwrap().check_dimension(2).is_ok());
    }

    #[test]
    fn oracle_peak_values() {
        // frozen from an independent adaptive quadrature of ∫₀¹ dt/√(1-t^{p+1})
        for (p, peak) in [(2.0, 11.796_687_938_969_542), (3.0, 3.708_149_354_602_743_8), (1.2, 113_244.060_540_551_22)] {
            let e = Exponents::from_p_c(p, 1.0).unwrap();
            let o = IntervalOracle::new(&e, 1.0, QuadOptions::default()).unwrap();
            assert!((o.peak - peak).abs() < 1e-11 * peak, "p = {p}: {}", o.peak);
        }
    }

    #[test]
    fn oracle_is_stable_under_quadrature_refinement() {
        let e = Exponents::from_p_c(2.0, 1.0).unwrap();
        let coarse = oracle_profile_1d_with(&e, 1.0, 64, QuadOptions { rel_tol: 1e-11, ..Default::default() }).unwrap();
        let fine = oracle_profile_1d(&e, 1.0, 64).unwrap();
        assert!(rel_sup(&coarse.v, &fine.v) < 1e-10);
    }

    #[test]
    fn matches_oracle_at_second_order() {
        let e = Exponents::from_p_c(2.0, 1.0).unwrap();
        let err = |n: usize| {
            let g = interval(n);
            let sol = solve_stationary(&g, &e, InitialGuess::FirstEigenfunction, Default::default()).unwrap();
            let o = oracle_on_grid(&g, &e).unwrap();
            rel_sup(&sol.v, &o)
        };
        let (e1, e2) = (err(63), err(127));
        let order = (e1 / e2).log2();
        assert!(order > 1.9 && order < 2.1, "order {order}");
    }

    #[test]
    fn residual_and_energy_identity() {
        for spec in [DomainSpec::interval(1.0, 200), DomainSpec::ball(3, 1.0, 200), DomainSpec::ball(2, 1.0, 100)] {
            let g = build_domain(spec).unwrap();
            let e = Exponents::from_p_c(2.0, 1.0).unwrap();
            let sol = solve_stationary(&g, &e, InitialGuess::FirstEigenfunction, Default::default()).unwrap();
            assert!(sol.residual_norm <= 1e-10 * sol.sup());
            assert!(sol.v.iter().all(|&x| x > 0.0));
            assert!(sol.newton_iters < 20);
            let grad = g.dirichlet_energy(&sol.v).unwrap();
            let pot = g.integrate(&sol.v.iter().map(|x| x.powi(3)).collect::<Vec<_>>()).unwrap();
            assert!((grad - pot).abs() < 1e-8 * grad);
            // unimodal
            let imax = sol.v.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
            assert!(sol.v[..=imax].windows(2).all(|w| w[0] <= w[1]));
            assert!(sol.v[imax..].windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn scaling_equivariance() {
        let g = interval(128);
        let e1 = Exponents::from_p_c(2.5, 1.0).unwrap();
        let a: f64 = 1.7;
        let e2 = Exponents::from_p_c(2.5, a.powf(1.0 - 2.5)).unwrap();
        let v1 = solve_stationary(&g, &e1, InitialGuess::FirstEigenfunction, Default::default()).unwrap();
        let v2 = solve_stationary(&g, &e2, InitialGuess::FirstEigenfunction, Default::default()).unwrap();
        let scaled: Vec<f64> = v1.v.iter().map(|x| a * x).collect();
        assert!(rel_sup(&v2.v, &scaled) < 1e-8);
    }

    #[test]
    fn supplied_guess_and_errors() {
        let g = interval(64);
        let e = Exponents::from_p_c(2.0, 1.0).unwrap();
        let guess: Vec<f64> = g.coords.iter().map(|&x| 40.0 * x * (1.0 - x)).collect();
        let sol = solve_stationary(&g, &e, InitialGuess::Supplied(guess), Default::default()).unwrap();
        assert!(sol.residual_norm <= 1e-10 * sol.sup());
        let mut bad = vec![1.0; 64];
        bad[0] = -1.0;
        assert!(matches!(
            solve_stationary(&g, &e, InitialGuess::Supplied(bad), Default::default()),
            Err(Error::NonpositiveField)
        ));
        let r = solve_stationary(&g, &e, InitialGuess::FirstEigenfunction, StationaryOptions { max_iters: 1, tol: 1e-10 });
        assert!(matches!(r, Err(Error::NonConvergence { .. })));
    }

    #[test]
    fn near_linear_limit_is_first_eigenfunction() {
        let g = interval(256);
        let e = Exponents::from_p_c(1.01, PI * PI).unwrap();
        let sol = solve_stationary(&g, &e, InitialGuess::FirstEigenfunction, Default::default()).unwrap();
        let nv = g.integrate(&sol.v.iter().map(|x| x * x).collect::<Vec<_>>()).unwrap().sqrt();
        let s: Vec<f64> = g.coords.iter().map(|&x| (PI * x).sin()).collect();
        let ns = g.integrate(&s.iter().map(|x| x * x).collect::<Vec<_>>()).unwrap().sqrt();
        let d = sol.v.iter().zip(&s).map(|(a, b)| (a / nv - b / ns).abs()).fold(0.0, f64::max);
        assert!(d <= 0.02 * sup(&s) / ns, "{d}");
    }

    #[test]
    fn slope_bounds() {
        let g = interval(999);
        let s: Vec<f64> = g.coords.iter().map(|&x| (PI * x).sin()).collect();
        let (c0, c1) = boundary_slope_bounds(&g, &s).unwrap();
        assert!((c0 - 2.0).abs() < 1e-5);
        assert!((c1 - PI).abs() < 1e-4);
        let q: Vec<f64> = g.coords.iter().map(|&x| x * (1.0 - x)).collect();
        let (c0, c1) = boundary_slope_bounds(&g, &q).unwrap();
        assert!(c0 >= 0.5 - 1e-12 && c1 <= 1.0);
        let e = Exponents::from_p_c(2.0, 1.0).unwrap();
        let sol = solve_stationary(&g, &e, InitialGuess::FirstEigenfunction, Default::default()).unwrap();
        let (c0, c1) = boundary_slope_bounds(&g, &sol.v).unwrap();
        assert!(c0 > 0.0 && c1 / c0 <= 10.0);
        assert!(boundary_slope_bounds(&g, &vec![0.0; 999]).is_err());
    }
}
