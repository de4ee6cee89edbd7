//! Uniform grids on an interval or a radially reduced ball.
//!
//! The discrete Laplacian is assembled in flux form, `Δ_h f = -(K f) / w`, where
//! `K` is the symmetric stiffness matrix and `w` are the quadrature weights.
//! Summation by parts is then exact: `Σ w (Δ_h f) g = -fᵀ K g`.

use std::f64::consts::PI;

use crate::error::{check_len, Error, Result};
use crate::tridiag::{Tridiag, TridiagLu};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Geometry {
    Interval { length: f64 },
    RadialBall { dim: usize, radius: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DomainSpec {
    pub geometry: Geometry,
    /// Number of unknowns.
    pub nodes: usize,
}

impl DomainSpec {
    pub fn interval(length: f64, nodes: usize) -> Self {
        Self { geometry: Geometry::Interval { length }, nodes }
    }

    pub fn ball(dim: usize, radius: f64, nodes: usize) -> Self {
        Self { geometry: Geometry::RadialBall { dim, radius }, nodes }
    }

    pub fn validate(&self) -> Result<()> {
        if self.nodes < 8 {
            return Err(Error::InvalidDomain(format!("need at least 8 nodes, got {}", self.nodes)));
        }
        match self.geometry {
            Geometry::Interval { length } if !(length > 0.0 && length.is_finite()) => {
                Err(Error::InvalidDomain(format!("interval length must be positive, got {length}")))
            }
            Geometry::RadialBall { radius, .. } if !(radius > 0.0 && radius.is_finite()) => {
                Err(Error::InvalidDomain(format!("ball radius must be positive, got {radius}")))
            }
            Geometry::RadialBall { dim: 0, .. } => {
                Err(Error::InvalidDomain("ball dimension must be at least 1".into()))
            }
            _ => Ok(()),
        }
    }

    /// Space dimension `N` (1 for the interval).
    pub fn dim(&self) -> usize {
        match self.geometry {
            Geometry::Interval { .. } => 1,
            Geometry::RadialBall { dim, .. } => dim,
        }
    }
}

/// Surface measure of the unit sphere `S^{N-1}`.
pub fn sphere_area(dim: usize) -> f64 {
    // |S^{N-1}| = 2 π^{N/2} / Γ(N/2), by the recursion |S^{N+1}| = 2π/N |S^{N-1}|
    let mut area = if dim % 2 == 0 { 2.0 * PI } else { 2.0 };
    let mut k = if dim % 2 == 0 { 2 } else { 1 };
    while k < dim {
        area *= 2.0 * PI / k as f64;
        k += 2;
    }
    area
}

#[derive(Debug, Clone)]
pub struct Grid {
    pub spec: DomainSpec,
    pub h: f64,
    pub coords: Vec<f64>,
    pub quad_weights: Vec<f64>,
    pub boundary_distance: Vec<f64>,
    stiffness: Tridiag,
    poisson: TridiagLu,
}

pub fn build_domain(spec: DomainSpec) -> Result<Grid> {
    spec.validate()?;
    assemble(spec)
}

fn assemble(spec: DomainSpec) -> Result<Grid> {
    let n = spec.nodes;
    let (h, coords, weights, dist, diag, off) = match spec.geometry {
        Geometry::Interval { length } => {
            let h = length / (n as f64 + 1.0);
            let coords: Vec<f64> = (1..=n).map(|i| i as f64 * h).collect();
            let dist = coords.iter().map(|&x| x.min(length - x)).collect();
            let diag = vec![2.0 / h; n];
            let off = vec![-1.0 / h; n - 1];
            (h, coords, vec![h; n], dist, diag, off)
        }
        Geometry::RadialBall { dim, radius } => {
            // vertex-centred: r_i = i h, i = 0..n-1, Dirichlet node at r = n h = R
            let h = radius / n as f64;
            let area = sphere_area(dim);
            let nd = dim as i32;
            let coords: Vec<f64> = (0..n).map(|i| i as f64 * h).collect();
            let face = |i: usize| (i as f64 + 0.5) * h;
            let cond: Vec<f64> = (0..n).map(|i| area * face(i).powi(nd - 1) / h).collect();
            let weights = (0..n)
                .map(|i| {
                    let lo = if i == 0 { 0.0 } else { face(i - 1).powi(nd) };
                    area * (face(i).powi(nd) - lo) / dim as f64
                })
                .collect();
            let dist = coords.iter().map(|&r| radius - r).collect();
            let diag = (0..n).map(|i| cond[i] + if i > 0 { cond[i - 1] } else { 0.0 }).collect();
            let off = cond[..n - 1].iter().map(|c| -c).collect();
            (h, coords, weights, dist, diag, off)
        }
    };
    let stiffness = Tridiag::symmetric(diag, off);
    let poisson = stiffness.factor()?;
    Ok(Grid { spec, h, coords, quad_weights: weights, boundary_distance: dist, stiffness, poisson })
}

impl Grid {
    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.spec.dim()
    }

    /// Measure of the continuous domain.
    pub fn measure(&self) -> f64 {
        match self.spec.geometry {
            Geometry::Interval { length } => length,
            Geometry::RadialBall { dim, radius } => sphere_area(dim) * radius.powi(dim as i32) / dim as f64,
        }
    }

    /// Stiffness matrix `K`, so that `∫|∇f|² = fᵀ K f`.
    pub fn stiffness(&self) -> &Tridiag {
        &self.stiffness
    }

    /// `K f` without the weight division.
    pub fn stiffness_apply(&self, field: &[f64]) -> Result<Vec<f64>> {
        self.stiffness.mul_vec(field)
    }

    /// Discrete Laplacian `Δ_h f` (not negated) with homogeneous Dirichlet data.
    pub fn apply_laplacian(&self, field: &[f64]) -> Result<Vec<f64>> {
        let kf = self.stiffness.mul_vec(field)?;
        Ok(kf.iter().zip(&self.quad_weights).map(|(k, w)| -k / w).collect())
    }

    /// Solves `-Δ_h g = rhs` with homogeneous Dirichlet data.
    pub fn solve_poisson(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        check_len(self.len(), rhs.len())?;
        let mut b: Vec<f64> = rhs.iter().zip(&self.quad_weights).map(|(r, w)| r * w).collect();
        self.poisson.solve_in_place(&mut b);
        Ok(b)
    }

    pub fn integrate(&self, field: &[f64]) -> Result<f64> {
        check_len(self.len(), field.len())?;
        Ok(self.quad_weights.iter().zip(field).map(|(w, f)| w * f).sum())
    }

    /// `∫ f g w dx`.
    pub fn inner_product_weighted(&self, f: &[f64], g: &[f64], w: &[f64]) -> Result<f64> {
        check_len(self.len(), f.len())?;
        check_len(self.len(), g.len())?;
        check_len(self.len(), w.len())?;
        Ok((0..self.len()).map(|i| self.quad_weights[i] * f[i] * g[i] * w[i]).sum())
    }

    /// Discrete Dirichlet energy `∫|∇f|² = fᵀ K f`.
    pub fn dirichlet_energy(&self, field: &[f64]) -> Result<f64> {
        let kf = self.stiffness.mul_vec(field)?;
        Ok(kf.iter().zip(field).map(|(a, b)| a * b).sum())
    }

    /// Discrete bilinear form `∫∇f·∇g = fᵀ K g`.
    pub fn dirichlet_form(&self, f: &[f64], g: &[f64]) -> Result<f64> {
        check_len(self.len(), g.len())?;
        let kf = self.stiffness.mul_vec(f)?;
        Ok(kf.iter().zip(g).map(|(a, b)| a * b).sum())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn interval(n: usize) -> Grid {
        build_domain(DomainSpec::interval(1.0, n)).unwrap()
    }

    fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(build_domain(DomainSpec::interval(1.0, 7)).is_err());
        assert!(build_domain(DomainSpec::interval(0.0, 16)).is_err());
        assert!(build_domain(DomainSpec::interval(-1.0, 16)).is_err());
        assert!(build_domain(DomainSpec::ball(3, 0.0, 16)).is_err());
        assert!(build_domain(DomainSpec::ball(0, 1.0, 16)).is_err());
    }

    #[test]
    fn three_point_interval_layout() {
        let spec = DomainSpec::interval(1.0, 3);
        assert!(build_domain(spec).is_err());
        let g = assemble(spec).unwrap();
        assert_eq!(g.coords, vec![0.25, 0.5, 0.75]);
        assert_eq!(g.quad_weights, vec![0.25, 0.25, 0.25]);
        assert_eq!(g.boundary_distance, vec![0.25, 0.5, 0.25]);
    }

    #[test]
    fn weights_sum_to_interior_measure() {
        // uniform weights omit the two boundary half-cells: Σ w = L - h
        let g = interval(1023);
        let s: f64 = g.quad_weights.iter().sum();
        assert!((s - (1.0 - 1.0 / 1024.0)).abs() < 1e-12);
    }

    #[test]
    fn sphere_areas() {
        assert_eq!(sphere_area(1), 2.0);
        assert!((sphere_area(2) - 2.0 * PI).abs() < 1e-15);
        assert!((sphere_area(3) - 4.0 * PI).abs() < 1e-14);
        assert!((sphere_area(4) - 2.0 * PI * PI).abs() < 1e-13);
    }

    #[test]
    fn radial_dimension_one_is_folded_interval() {
        let r = build_domain(DomainSpec::ball(1, 1.0, 8)).unwrap();
        let full = build_domain(DomainSpec::interval(2.0, 15)).unwrap();
        assert!((r.h - full.h).abs() < 1e-15);
        // even field on (-1, 1): f(x) = cos(πx/2)
        let f_full: Vec<f64> = full.coords.iter().map(|&x| ((x - 1.0) * PI / 2.0).cos()).collect();
        let f_rad: Vec<f64> = r.coords.iter().map(|&x| (x * PI / 2.0).cos()).collect();
        let l_full = full.apply_laplacian(&f_full).unwrap();
        let l_rad = r.apply_laplacian(&f_rad).unwrap();
        for i in 0..8 {
            assert!((l_rad[i] - l_full[7 + i]).abs() < 1e-12);
        }
        let i_full = full.integrate(&f_full).unwrap();
        let i_rad = r.integrate(&f_rad).unwrap();
        assert!((i_full - i_rad).abs() < 1e-14);
    }

    #[test]
    fn laplacian_of_quadratic_is_exact() {
        let g = interval(50);
        let f: Vec<f64> = g.coords.iter().map(|&x| x * (1.0 - x)).collect();
        let l = g.apply_laplacian(&f).unwrap();
        assert!(l.iter().all(|v| (v + 2.0).abs() < 1e-9));
    }

    #[test]
    fn laplacian_of_sine_is_second_order() {
        let err = |n: usize| {
            let g = interval(n);
            let f: Vec<f64> = g.coords.iter().map(|&x| (PI * x).sin()).collect();
            let l = g.apply_laplacian(&f).unwrap();
            let e: Vec<f64> = f.iter().map(|v| -PI * PI * v).collect();
            sup_diff(&l, &e)
        };
        let (e1, e2) = (err(63), err(127));
        let order = (e1 / e2).log2();
        assert!(order > 1.9 && order < 2.1, "order {order}");
    }

    #[test]
    fn radial_ball_eigenfunction() {
        let err = |n: usize| {
            let g = build_domain(DomainSpec::ball(3, 1.0, n)).unwrap();
            let f: Vec<f64> =
                g.coords.iter().map(|&r| if r == 0.0 { PI } else { (PI * r).sin() / r }).collect();
            let l = g.apply_laplacian(&f).unwrap();
            let e: Vec<f64> = f.iter().map(|v| -PI * PI * v).collect();
            sup_diff(&l, &e)
        };
        let (e1, e2, e3) = (err(64), err(128), err(256));
        assert!(e3 < 1e-2 * PI.powi(3));
        let order = (e2 / e3).log2();
        assert!(order > 1.8, "order {order}, errors {e1} {e2} {e3}");
    }

    #[test]
    fn integrals() {
        let g = interval(255);
        let f: Vec<f64> = g.coords.iter().map(|&x| (PI * x).sin()).collect();
        assert!((g.integrate(&f).unwrap() - 2.0 / PI).abs() < 1e-4);
        let b = build_domain(DomainSpec::ball(3, 1.0, 256)).unwrap();
        let one = vec![1.0; 256];
        let vol = 4.0 * PI / 3.0;
        // last cell stops at (n - 1/2) h
        let expect = vol * (1.0 - 0.5 / 256.0f64).powi(3);
        assert!((b.integrate(&one).unwrap() - expect).abs() < 1e-12);
        assert!((b.integrate(&one).unwrap() - vol).abs() < 0.03);
    }

    #[test]
    fn poisson_solves() {
        let g = interval(40);
        let x = g.solve_poisson(&vec![2.0; 40]).unwrap();
        for (xi, &c) in x.iter().zip(&g.coords) {
            assert!((xi - c * (1.0 - c)).abs() < 1e-12);
        }
        let g = interval(255);
        let rhs: Vec<f64> = g.coords.iter().map(|&x| PI * PI * (PI * x).sin()).collect();
        let sol = g.solve_poisson(&rhs).unwrap();
        let e: Vec<f64> = g.coords.iter().map(|&x| (PI * x).sin()).collect();
        assert!(sup_diff(&sol, &e) < 2e-5);
    }

    #[test]
    fn green_matrix_is_symmetric_under_quadrature() {
        for spec in [DomainSpec::interval(1.0, 20), DomainSpec::ball(3, 1.0, 20)] {
            let g = build_domain(spec).unwrap();
            let n = g.len();
            let cols: Vec<Vec<f64>> = (0..n)
                .map(|j| {
                    let mut e = vec![0.0; n];
                    e[j] = 1.0 / g.quad_weights[j];
                    g.solve_poisson(&e).unwrap()
                })
                .collect();
            for i in 0..n {
                for j in 0..n {
                    let a = cols[j][i];
                    let b = cols[i][j];
                    assert!((a - b).abs() < 1e-12 * a.abs().max(1.0));
                    assert!(a > 0.0);
                }
            }
        }
    }

    #[test]
    fn weighted_inner_product() {
        let g = interval(16);
        let f: Vec<f64> = (0..16).map(|i| i as f64).collect();
        let one = vec![1.0; 16];
        let a = g.inner_product_weighted(&f, &f, &one).unwrap();
        assert!(a > 0.0);
        assert_eq!(g.inner_product_weighted(&one, &one, &vec![0.0; 16]).unwrap(), 0.0);
        assert!(matches!(g.integrate(&[1.0]), Err(Error::LengthMismatch { .. })));
        assert!(g.apply_laplacian(&[1.0]).is_err());
    }

    fn arb_spec() -> impl Strategy<Value = DomainSpec> {
        prop_oneof![
            (8usize..64, 0.5f64..3.0).prop_map(|(n, l)| DomainSpec::interval(l, n)),
            (8usize..64, 1usize..4, 0.5f64..3.0).prop_map(|(n, d, r)| DomainSpec::ball(d, r, n)),
        ]
    }

    proptest! {
        #[test]
        fn laplacian_symmetric_and_negative(
            spec in arb_spec(),
            a in proptest::collection::vec(-1.0f64..1.0, 64),
            b in proptest::collection::vec(-1.0f64..1.0, 64),
        ) {
            let g = build_domain(spec).unwrap();
            let n = g.len();
            let (f, h) = (&a[..n], &b[..n]);
            let lf = g.apply_laplacian(f).unwrap();
            let lh = g.apply_laplacian(h).unwrap();
            let one = vec![1.0; n];
            let s1 = g.inner_product_weighted(&lf, h, &one).unwrap();
            let s2 = g.inner_product_weighted(f, &lh, &one).unwrap();
            let scale = g.dirichlet_energy(f).unwrap().sqrt() * g.dirichlet_energy(h).unwrap().sqrt();
            prop_assert!((s1 - s2).abs() <= 1e-10 * scale.max(1e-300));
            prop_assert!(g.inner_product_weighted(&lf, f, &one).unwrap() <= 0.0);
            let back = g.solve_poisson(&lf).unwrap();
            let fmax = f.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            for i in 0..n {
                prop_assert!((back[i] + f[i]).abs() <= 1e-10 * fmax.max(1e-300));
            }
        }
    }
}
