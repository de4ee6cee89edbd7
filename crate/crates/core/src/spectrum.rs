//! The weighted Dirichlet eigenproblem `-Δφ = λ V^{p-1} φ` and the spectral constants
//! `k_p`, `λ_p`, `γ_p` that locate `cp` in it.
//!
//! Eigenvalues come from bisection on the Sturm count of `K - σM`, eigenvectors from
//! shift-invert inverse iteration at the converged eigenvalue.

use crate::error::{check_len, Error, Result};
use crate::grid::Grid;
use crate::tridiag::Tridiag;

/// Relative tolerance for merging eigenvalues into one eigenspace.
pub const CLUSTER_TOL: f64 = 1e-6;
pub const DEFAULT_GAP_TOL: f64 = 1e-3;

#[derive(Debug, Clone)]
pub struct EigenSystem {
    pub p: f64,
    /// Distinct eigenvalues `λ_{V,1} < λ_{V,2} < …`.
    pub eigenvalues: Vec<f64>,
    pub multiplicities: Vec<usize>,
    /// `eigenfunctions[k][j]` is `φ_{k+1,j+1}`, normalized in `L²_V`.
    pub eigenfunctions: Vec<Vec<Vec<f64>>>,
    pub inverse_eigenvalues: Vec<f64>,
    /// `‖Kφ - λMφ‖ / (λ ‖Mφ‖)` per eigenfunction.
    pub residuals: Vec<Vec<f64>>,
    /// `V^{p-1}` at the nodes.
    pub weight: Vec<f64>,
    /// Quadrature weight times `V^{p-1}`.
    pub mass: Vec<f64>,
}

impl EigenSystem {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// `φ_{k,j}` with 1-based indices.
    pub fn mode(&self, k: usize, j: usize) -> Result<&[f64]> {
        if k == 0 || k > self.len() {
            return Err(Error::ModeOutOfRange { requested: k, available: self.len() });
        }
        let space = &self.eigenfunctions[k - 1];
        if j == 0 || j > space.len() {
            return Err(Error::ModeOutOfRange { requested: j, available: space.len() });
        }
        Ok(&space[j - 1])
    }

    /// `⟨f, g⟩_{L²_V}`.
    pub fn inner(&self, f: &[f64], g: &[f64]) -> f64 {
        self.mass.iter().zip(f).zip(g).map(|((m, a), b)| m * a * b).sum()
    }

    pub fn norm_sq(&self, f: &[f64]) -> f64 {
        self.inner(f, f)
    }
}

/// Lowest `count` eigenpairs of the pencil `(stiff, diag(mass))`, ascending, with
/// `xᵀ diag(mass) x = 1`.
pub fn lowest_pencil(stiff: &Tridiag, mass: &[f64], count: usize) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let n = stiff.len();
    check_len(n, mass.len())?;
    if count == 0 || count > n {
        return Err(Error::EigensolverFailure(format!("cannot compute {count} modes of a size-{n} pencil")));
    }
    if mass.iter().any(|m| !(*m > 0.0) || !m.is_finite()) {
        return Err(Error::EigensolverFailure("mass must be positive".into()));
    }
    let mut upper = 0.0f64;
    for i in 0..n {
        let mut r = stiff.diag[i].abs();
        if i > 0 {
            r += stiff.lower[i - 1].abs();
        }
        if i + 1 < n {
            r += stiff.lower[i].abs();
        }
        upper = upper.max(r / mass[i]);
    }
    let mut values = Vec::with_capacity(count);
    let mut lo_start = 0.0f64;
    for j in 0..count {
        let (mut lo, mut hi) = (lo_start, upper * (1.0 + 1e-12));
        for _ in 0..400 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if stiff.count_below(mass, mid) > j {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi - lo <= 2.0 * f64::EPSILON * hi {
                break;
            }
        }
        let lam = 0.5 * (lo + hi);
        values.push(lam);
        lo_start = lo;
    }
    let mut vectors: Vec<Vec<f64>> = Vec::with_capacity(count);
    for (j, &lam) in values.iter().enumerate() {
        let mut shift = lam;
        let lu = loop {
            let a = stiff.add_diag(&mass.iter().map(|m| -shift * m).collect::<Vec<_>>());
            match a.factor() {
                Ok(lu) => break lu,
                Err(_) => shift *= 1.0 - 1e-13,
            }
        };
        // deterministic start vector with components in every mode
        let mut x: Vec<f64> = (0..n)
            .map(|i| 1.0 + 0.5 * ((i as f64 + 1.0) * 0.754877666 * (j as f64 + 1.0)).sin())
            .collect();
        for _ in 0..4 {
            let mut y: Vec<f64> = x.iter().zip(mass).map(|(a, m)| a * m).collect();
            lu.solve_in_place(&mut y);
            for prev in &vectors {
                let c: f64 = (0..n).map(|i| mass[i] * y[i] * prev[i]).sum();
                for i in 0..n {
                    y[i] -= c * prev[i];
                }
            }
            let nrm = (0..n).map(|i| mass[i] * y[i] * y[i]).sum::<f64>().sqrt();
            if !(nrm > 0.0) || !nrm.is_finite() {
                return Err(Error::EigensolverFailure(format!("inverse iteration stagnated at mode {}", j + 1)));
            }
            x = y.iter().map(|v| v / nrm).collect();
        }
        let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let lead = x.iter().find(|v| v.abs() > 1e-3 * peak).copied().unwrap_or(1.0);
        if lead < 0.0 {
            x.iter_mut().for_each(|v| *v = -*v);
        }
        vectors.push(x);
    }
    Ok((values, vectors))
}

/// Lowest `modes` eigenpairs of `-Δ_h φ = λ V^{p-1} φ`, grouped into eigenspaces.
pub fn weighted_eigensystem(grid: &Grid, v: &[f64], p: f64, modes: usize) -> Result<EigenSystem> {
    check_len(grid.len(), v.len())?;
    if v.iter().any(|x| !(*x > 0.0)) {
        return Err(Error::NonpositiveField);
    }
    if modes == 0 || modes > grid.len() / 4 {
        return Err(Error::EigensolverFailure(format!(
            "requested {modes} modes; allowed 1..={}",
            grid.len() / 4
        )));
    }
    let weight: Vec<f64> = v.iter().map(|x| x.powf(p - 1.0)).collect();
    let mass: Vec<f64> = weight.iter().zip(&grid.quad_weights).map(|(a, w)| a * w).collect();
    let (values, vectors) = lowest_pencil(grid.stiffness(), &mass, modes)?;
    let mut eigenvalues: Vec<f64> = Vec::new();
    let mut eigenfunctions: Vec<Vec<Vec<f64>>> = Vec::new();
    let mut residuals: Vec<Vec<f64>> = Vec::new();
    for (lam, phi) in values.into_iter().zip(vectors) {
        let kphi = grid.stiffness_apply(&phi)?;
        let num: f64 = (0..phi.len()).map(|i| (kphi[i] - lam * mass[i] * phi[i]).powi(2)).sum::<f64>().sqrt();
        let den: f64 = (0..phi.len()).map(|i| (lam * mass[i] * phi[i]).powi(2)).sum::<f64>().sqrt();
        let res = num / den;
        match eigenvalues.last() {
            Some(&prev) if (lam - prev).abs() <= CLUSTER_TOL * lam.abs() => {
                eigenfunctions.last_mut().unwrap().push(phi);
                residuals.last_mut().unwrap().push(res);
            }
            _ => {
                eigenvalues.push(lam);
                eigenfunctions.push(vec![phi]);
                residuals.push(vec![res]);
            }
        }
    }
    if let Some(first) = eigenfunctions.first_mut() {
        let s: f64 = first[0].iter().zip(&mass).map(|(a, m)| a * m).sum();
        if s < 0.0 {
            first[0].iter_mut().for_each(|x| *x = -*x);
        }
    }
    let multiplicities = eigenfunctions.iter().map(|s| s.len()).collect();
    let inverse_eigenvalues = eigenvalues.iter().map(|l| 1.0 / l).collect();
    Ok(EigenSystem { p, eigenvalues, multiplicities, eigenfunctions, inverse_eigenvalues, residuals, weight, mass })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapReport {
    pub k_p: usize,
    /// `λ_{V,k_p+1} - cp`, absent when the gap test fails.
    pub lambda_p: Option<f64>,
    pub gamma_p: f64,
    pub h2_ok: bool,
    pub gap_margin: f64,
    pub cp: f64,
}

/// Locates `cp` in the spectrum.
pub fn classify_gap(eigs: &EigenSystem, p: f64, c: f64, gap_tol: f64) -> Result<GapReport> {
    let cp = c * p;
    let largest = *eigs.eigenvalues.last().ok_or(Error::SpectrumTooShort { largest: 0.0, cp })?;
    if largest <= cp {
        return Err(Error::SpectrumTooShort { largest, cp });
    }
    let k_p = eigs.eigenvalues.iter().filter(|&&l| l < cp).count();
    let gap_margin = eigs.eigenvalues.iter().map(|l| (l - cp).abs() / cp).fold(f64::INFINITY, f64::min);
    let h2_ok = gap_margin > gap_tol;
    let next = eigs.eigenvalues[k_p];
    let n_kp = if k_p > 0 { eigs.multiplicities[k_p - 1] } else { 0 };
    let gamma_p = (next - eigs.eigenvalues[0]) * k_p as f64 * n_kp as f64;
    Ok(GapReport { k_p, lambda_p: h2_ok.then_some(next - cp), gamma_p, h2_ok, gap_margin, cp })
}

/// `ψ̂_{k,j} = ⟨field, φ_{k,j}⟩_{L²_V}` for `k ≤ k_max`; indexed `[k-1][j-1]`.
pub fn project_coefficients(grid: &Grid, eigs: &EigenSystem, field: &[f64], k_max: usize) -> Result<Vec<Vec<f64>>> {
    check_len(grid.len(), field.len())?;
    if k_max > eigs.len() {
        return Err(Error::ModeOutOfRange { requested: k_max, available: eigs.len() });
    }
    Ok(eigs.eigenfunctions[..k_max]
        .iter()
        .map(|space| space.iter().map(|phi| eigs.inner(field, phi)).collect())
        .collect())
}

/// Removes the components on `V_1 … V_{k_p}`.
pub fn deflate(grid: &Grid, eigs: &EigenSystem, field: &[f64], k_p: usize) -> Result<Vec<f64>> {
    check_len(grid.len(), field.len())?;
    if k_p > eigs.len() {
        return Err(Error::ModeOutOfRange { requested: k_p, available: eigs.len() });
    }
    let mut out = field.to_vec();
    for _ in 0..2 {
        for space in &eigs.eigenfunctions[..k_p] {
            for phi in space {
                let c = eigs.inner(&out, phi);
                out.iter_mut().zip(phi).for_each(|(o, f)| *o -= c * f);
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoincareMargin {
    /// `∫|∇f|² - λ_{V,k_p+1} ∫ f² V^{p-1}`.
    pub margin: f64,
    /// `I[f] - λ_p E[f]` with `I[f] = ∫|∇f|² - cp ∫ f² V^{p-1}`.
    pub shifted_margin: f64,
    pub norm_sq: f64,
}

pub fn check_improved_poincare(grid: &Grid, eigs: &EigenSystem, gap: &GapReport, field: &[f64]) -> Result<PoincareMargin> {
    check_len(grid.len(), field.len())?;
    if gap.k_p >= eigs.len() {
        return Err(Error::ModeOutOfRange { requested: gap.k_p + 1, available: eigs.len() });
    }
    let grad = grid.dirichlet_energy(field)?;
    let e = eigs.norm_sq(field);
    let next = eigs.eigenvalues[gap.k_p];
    let lambda_p = next - gap.cp;
    Ok(PoincareMargin {
        margin: grad - next * e,
        shifted_margin: (grad - gap.cp * e) - lambda_p * e,
        norm_sq: e,
    })
}

/// Poincaré bound for almost-orthogonal fields: returns `(margin, ε)` where `ε` is the
/// largest low-mode Rayleigh quotient and
/// `margin = ∫|∇f|² - (cp + λ_p - γ_p ε²) ∫ f² V^{p-1}`.
pub fn almost_orthogonal_poincare(grid: &Grid, eigs: &EigenSystem, gap: &GapReport, field: &[f64]) -> Result<(f64, f64)> {
    let lambda_p = gap.lambda_p.ok_or(Error::H2Violated)?;
    let coeffs = project_coefficients(grid, eigs, field, gap.k_p)?;
    let e = eigs.norm_sq(field);
    let eps = coeffs.iter().flatten().map(|c| c.abs() / e.sqrt()).fold(0.0, f64::max);
    let grad = grid.dirichlet_energy(field)?;
    Ok((grad - (gap.cp + lambda_p - gap.gamma_p * eps * eps) * e, eps))
}
