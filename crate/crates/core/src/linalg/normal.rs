use core::f64::consts::FRAC_1_SQRT_2;

/// Standard normal CDF, `0.5 * erfc(-x / sqrt 2)`.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetry_and_reference_value() {
        assert_eq!(std_normal_cdf(0.0), 0.5);
        for &x in &[0.1, 0.7, 1.3, 2.5, 4.0, 7.5] {
            assert!((std_normal_cdf(x) + std_normal_cdf(-x) - 1.0).abs() <= 1e-14);
        }
        // 50-digit mpmath: ncdf(1.96)
        assert!((std_normal_cdf(1.96) - 0.9750021048517795).abs() <= 1e-15);
    }

    #[test]
    fn strictly_increasing_on_grid() {
        // Above x ~ 7.5 consecutive grid values differ by less than the
        // spacing of doubles just below 1, so ties there are unavoidable. Each
        // tie must be one the exact increment could not resolve.
        let n = 10_000;
        let h = 16.0 / n as f64;
        let mut prev = std_normal_cdf(-8.0);
        for i in 1..=n {
            let x = -8.0 + h * i as f64;
            let v = std_normal_cdf(x);
            if v == prev {
                let density = (-0.5 * (x - h) * (x - h)).exp() / (2.0 * core::f64::consts::PI).sqrt();
                let ulp = f64::from_bits(prev.to_bits() + 1) - prev;
                assert!(x > 7.0 && h * density < ulp, "tie at {x}");
            } else {
                assert!(v > prev, "decreasing at {x}");
            }
            prev = v;
        }
    }
}
