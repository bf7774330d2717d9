//! Scalar helpers over `libm` so the crate stays `no_std`.

#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
pub fn ln_1p(x: f64) -> f64 {
    libm::log1p(x)
}

#[inline]
pub fn sin(x: f64) -> f64 {
    libm::sin(x)
}

#[inline]
pub fn floor(x: f64) -> f64 {
    libm::floor(x)
}

#[inline]
pub fn hypot(a: f64, b: f64) -> f64 {
    libm::hypot(a, b)
}

/// `e^x - 1 - x` without cancellation near zero.
///
/// Returns `+inf` once `x` exceeds 700.
pub fn exp_excess(x: f64) -> f64 {
    if x > 700.0 {
        return f64::INFINITY;
    }
    if x.abs() < 0.1 {
        // x^2/2! + x^3/3! + ...; 20 terms is far past convergence for |x| < 0.1
        let mut term = x * x / 2.0;
        let mut sum = term;
        for k in 3..24 {
            term *= x / k as f64;
            sum += term;
            if term.abs() <= sum.abs() * 1e-18 {
                break;
            }
        }
        sum
    } else {
        libm::expm1(x) - x
    }
}

/// Integer square root, exact for all `u64`.
pub fn isqrt(n: u64) -> u64 {
    if n < 2 {
        return n;
    }
    let mut x = libm::sqrt(n as f64) as u64;
    while x.checked_mul(x).map_or(true, |sq| sq > n) {
        x -= 1;
    }
    while (x + 1).checked_mul(x + 1).is_some_and(|sq| sq <= n) {
        x += 1;
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exp_excess_matches_series_and_direct_forms() {
        for &x in &[-3.0, -0.5, -0.09, -1e-6, 0.0, 1e-9, 0.05, 0.099, 0.2, 4.0] {
            let direct = libm::exp(x) - 1.0 - x;
            let got = exp_excess(x);
            if x.abs() > 0.01 {
                assert!((got - direct).abs() <= 1e-13 * (1.0 + direct.abs()), "x={x}");
            }
            assert!(got >= 0.0);
        }
        // x^2/2 dominates at tiny x, where the direct form is pure rounding noise
        let x = 5e-9;
        assert!((exp_excess(x) / (x * x / 2.0) - 1.0).abs() < 1e-8);
        assert!(exp_excess(701.0).is_infinite());
    }

    #[test]
    fn isqrt_is_floor_of_root() {
        for n in 0..20_000u64 {
            let r = isqrt(n);
            assert!(r * r <= n && (r + 1) * (r + 1) > n, "n={n}");
        }
        assert_eq!(isqrt(u64::MAX), 4_294_967_295);
    }
}
