//! Tridiagonal matrices: products, pivoted LU and Sturm inertia counts.

use crate::error::{check_len, Error, Result};

/// Tridiagonal matrix with `lower[i] = A[i+1][i]` and `upper[i] = A[i][i+1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiag {
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Tridiag {
    pub fn new(lower: Vec<f64>, diag: Vec<f64>, upper: Vec<f64>) -> Self {
        let n = diag.len();
        assert!(n >= 1, "empty tridiagonal matrix");
        assert_eq!(lower.len(), n - 1);
        assert_eq!(upper.len(), n - 1);
        Self { lower, diag, upper }
    }

    /// Symmetric matrix from its diagonal and off-diagonal.
    pub fn symmetric(diag: Vec<f64>, off: Vec<f64>) -> Self {
        Self::new(off.clone(), diag, off)
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len(self.len(), x.len())?;
        let n = self.len();
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut s = self.diag[i] * x[i];
            if i > 0 {
                s += self.lower[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                s += self.upper[i] * x[i + 1];
            }
            y[i] = s;
        }
        Ok(y)
    }

    /// `self + diag(d)`.
    pub fn add_diag(&self, d: &[f64]) -> Tridiag {
        let mut t = self.clone();
        for (a, b) in t.diag.iter_mut().zip(d) {
            *a += b;
        }
        t
    }

    /// `alpha * self`.
    pub fn scaled(&self, alpha: f64) -> Tridiag {
        Tridiag {
            lower: self.lower.iter().map(|x| alpha * x).collect(),
            diag: self.diag.iter().map(|x| alpha * x).collect(),
            upper: self.upper.iter().map(|x| alpha * x).collect(),
        }
    }

    pub fn factor(&self) -> Result<TridiagLu> {
        TridiagLu::new(self)
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        self.factor()?.solve(rhs)
    }

    /// Number of eigenvalues below `sigma` of the symmetric pencil `(self, diag(mass))`,
    /// read off the signs of the LDLᵀ pivots of `self - sigma * diag(mass)`.
    /// Only the `lower` band is used.
    pub fn count_below(&self, mass: &[f64], sigma: f64) -> usize {
        let n = self.len();
        let mut count = 0;
        let mut d = self.diag[0] - sigma * mass[0];
        let tiny = f64::MIN_POSITIVE.sqrt();
        for i in 0..n {
            if i > 0 {
                let e = self.lower[i - 1];
                d = self.diag[i] - sigma * mass[i] - e * e / d;
            }
            if d == 0.0 {
                d = -tiny;
            }
            if d < 0.0 {
                count += 1;
            }
        }
        count
    }
}

/// LU factorization with partial pivoting (one extra superdiagonal of fill).
#[derive(Debug, Clone)]
pub struct TridiagLu {
    dl: Vec<f64>,
    d: Vec<f64>,
    du: Vec<f64>,
    du2: Vec<f64>,
    swapped: Vec<bool>,
}

impl TridiagLu {
    pub fn new(a: &Tridiag) -> Result<Self> {
        let n = a.len();
        let mut dl = a.lower.clone();
        let mut d = a.diag.clone();
        let mut du = a.upper.clone();
        let mut du2 = vec![0.0; n.saturating_sub(2)];
        let mut swapped = vec![false; n];
        for i in 0..n.saturating_sub(1) {
            if d[i].abs() >= dl[i].abs() {
                if d[i] != 0.0 {
                    let fact = dl[i] / d[i];
                    dl[i] = fact;
                    d[i + 1] -= fact * du[i];
                }
            } else {
                let fact = d[i] / dl[i];
                d[i] = dl[i];
                dl[i] = fact;
                let temp = du[i];
                du[i] = d[i + 1];
                d[i + 1] = temp - fact * d[i + 1];
                if i + 2 < n {
                    du2[i] = du[i + 1];
                    du[i + 1] = -fact * du[i + 1];
                }
                swapped[i] = true;
            }
        }
        if let Some(i) = d.iter().position(|x| *x == 0.0 || !x.is_finite()) {
            return Err(Error::Singular(i));
        }
        Ok(Self { dl, d, du, du2, swapped })
    }

    pub fn len(&self) -> usize {
        self.d.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d.is_empty()
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        check_len(self.len(), rhs.len())?;
        let mut b = rhs.to_vec();
        self.solve_in_place(&mut b);
        Ok(b)
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.d.len();
        for i in 0..n.saturating_sub(1) {
            if self.swapped[i] {
                let temp = b[i];
                b[i] = b[i + 1];
                b[i + 1] = temp - self.dl[i] * b[i];
            } else {
                b[i + 1] -= self.dl[i] * b[i];
            }
        }
        b[n - 1] /= self.d[n - 1];
        if n > 1 {
            b[n - 2] = (b[n - 2] - self.du[n - 2] * b[n - 1]) / self.d[n - 2];
        }
        for i in (0..n.saturating_sub(2)).rev() {
            b[i] = (b[i] - self.du[i] * b[i + 1] - self.du2[i] * b[i + 2]) / self.d[i];
        }
    }
}
