//! Cancellation-free evaluation of the power remainders used by the entropies.

const SMALL: f64 = 1e-2;
const TERMS: usize = 14;

/// `(1+h)^a - 1`.
pub fn pow1pm1(a: f64, h: f64) -> f64 {
    (a * h.ln_1p()).exp_m1()
}

/// `(1+h)^a - 1 - a h`.
pub fn pow_rem2(a: f64, h: f64) -> f64 {
    if h.abs() < SMALL {
        let mut coef = a;
        let mut hk = h;
        let mut sum = 0.0;
        for k in 2..TERMS {
            coef *= (a - (k as f64 - 1.0)) / k as f64;
            hk *= h;
            sum += coef * hk;
        }
        sum
    } else {
        pow1pm1(a, h) - a * h
    }
}

/// Entropy integrand per unit `V^{p+1}`:
/// `g(h) = (1+h)^{p+1} - 1 - (p+1)/p ((1+h)^p - 1)`, with `g ≈ (p+1)/2 h²`.
pub fn entropy_density(p: f64, h: f64) -> f64 {
    if h.abs() < SMALL {
        let q = p + 1.0;
        let r = q / p;
        let (mut c1, mut c2) = (q, p);
        let mut hk = h;
        let mut sum = 0.0;
        for k in 2..TERMS {
            let kf = k as f64;
            c1 *= (q - kf + 1.0) / kf;
            c2 *= (p - kf + 1.0) / kf;
            hk *= h;
            sum += (c1 - r * c2) * hk;
        }
        sum
    } else {
        pow1pm1(p + 1.0, h) - (p + 1.0) / p * pow1pm1(p, h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn leading_terms() {
        let h = 1e-6;
        assert!((pow_rem2(2.0, h) - h * h).abs() < 1e-25);
        assert!((entropy_density(2.0, h) / (h * h) - 1.5).abs() < 1e-5);
        assert_eq!(entropy_density(3.0, 0.0), 0.0);
    }

    #[test]
    fn integer_exponent_matches_expansion() {
        // p = 2: (1+h)^3 - 1 - 3/2((1+h)^2 - 1) = 3/2 h² + h³
        for &h in &[-0.009, 0.005, 0.3, -0.4] {
            let exact = 1.5 * h * h + h * h * h;
            assert!((entropy_density(2.0, h) - exact).abs() < 1e-15 * (1.0 + exact.abs()) + 1e-18);
        }
    }

    proptest! {
        #[test]
        fn branches_agree_at_switch(p in 1.01f64..6.0, s in prop::bool::ANY) {
            let h = if s { SMALL * (1.0 - 1e-12) } else { -SMALL * (1.0 - 1e-12) };
            let hb = h * (1.0 + 2e-12);
            let a = entropy_density(p, h);
            let b = entropy_density(p, hb);
            prop_assert!((a - b).abs() < 1e-9 * a.abs());
            let a = pow_rem2(p, h);
            let b = pow_rem2(p, hb);
            prop_assert!((a - b).abs() < 1e-9 * a.abs());
        }

        #[test]
        fn entropy_density_nonnegative(p in 1.01f64..6.0, h in -0.9f64..3.0) {
            prop_assert!(entropy_density(p, h) >= 0.0);
        }
    }
}
