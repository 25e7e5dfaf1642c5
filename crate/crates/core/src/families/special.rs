//! Special functions needed by the families and links: the polygamma
//! functions of order 0..=2 and the standard normal density, distribution
//! and quantile functions.

use crate::error::{GlmError, Result};
use libm::erfc;
use std::f64::consts::{FRAC_1_SQRT_2, PI};

const SHIFT_THRESHOLD: f64 = 8.0;

/// Polygamma function of order 0 (digamma), 1 (trigamma) or 2 (tetragamma).
///
/// Small arguments are shifted above 8 with the recurrence
/// `ψ⁽ⁿ⁾(x) = ψ⁽ⁿ⁾(x + 1) − (−1)ⁿ n! / xⁿ⁺¹` and then evaluated with the
/// Bernoulli-number asymptotic expansion.
pub fn polygamma(order: u32, x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(GlmError::Domain {
            name: "polygamma",
            x,
        });
    }
    match order {
        0 => Ok(digamma_unchecked(x)),
        1 => Ok(trigamma_unchecked(x)),
        2 => Ok(tetragamma_unchecked(x)),
        _ => Err(GlmError::InvalidArgument(format!(
            "polygamma order {order} is not supported (0, 1 or 2)"
        ))),
    }
}

pub fn digamma(x: f64) -> Result<f64> {
    polygamma(0, x)
}

pub fn trigamma(x: f64) -> Result<f64> {
    polygamma(1, x)
}

pub fn tetragamma(x: f64) -> Result<f64> {
    polygamma(2, x)
}

fn digamma_unchecked(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < SHIFT_THRESHOLD {
        acc -= 1.0 / x;
        x += 1.0;
    }
    let r = 1.0 / (x * x);
    // B_{2k} / (2k) for k = 1..=7
    let series = r
        * (1.0 / 12.0
            - r * (1.0 / 120.0
                - r * (1.0 / 252.0
                    - r * (1.0 / 240.0
                        - r * (1.0 / 132.0 - r * (691.0 / 32760.0 - r * (1.0 / 12.0)))))));
    acc + x.ln() - 0.5 / x - series
}

fn trigamma_unchecked(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < SHIFT_THRESHOLD {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let r = 1.0 / (x * x);
    let series = (1.0 / 6.0
        - r * (1.0 / 30.0
            - r * (1.0 / 42.0
                - r * (1.0 / 30.0 - r * (5.0 / 66.0 - r * (691.0 / 2730.0 - r * (7.0 / 6.0)))))))
        / (x * x * x);
    acc + 1.0 / x + 0.5 * r + series
}

fn tetragamma_unchecked(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < SHIFT_THRESHOLD {
        acc -= 2.0 / (x * x * x);
        x += 1.0;
    }
    let r = 1.0 / (x * x);
    let series = r
        * r
        * (0.5
            - r * (1.0 / 6.0
                - r * (1.0 / 6.0
                    - r * (3.0 / 10.0 - r * (5.0 / 6.0 - r * (691.0 / 210.0 - r * 17.5))))));
    acc - r - r / x - series
}

/// Standard normal density.
pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Standard normal distribution function, evaluated through `erfc` so that
/// both tails keep full relative precision.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// Standard normal quantile: Acklam's rational approximation followed by two
/// Halley corrections against [`normal_cdf`].
pub fn normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(GlmError::Domain {
            name: "normal_quantile",
            x: p,
        });
    }
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;

    let mut x = if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };

    for _ in 0..2 {
        // work on the smaller tail to avoid cancellation in cdf - p
        let e = if x < 0.0 {
            normal_cdf(x) - p
        } else {
            (1.0 - p) - normal_cdf(-x)
        };
        let u = e / normal_pdf(x);
        x -= u / (1.0 + 0.5 * x * u);
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

    // Euler-Maclaurin tail of the harmonic series: independent of the
    // recurrence/asymptotic route used by `digamma`.
    fn digamma_one_by_series(n: usize) -> f64 {
        let h: f64 = (1..=n).map(|k| 1.0 / k as f64).sum();
        let nf = n as f64;
        -(h - nf.ln() - 0.5 / nf + 1.0 / (12.0 * nf * nf) - 1.0 / (120.0 * nf.powi(4)))
    }

    fn trigamma_one_by_series(n: usize) -> f64 {
        let s: f64 = (1..=n).map(|k| 1.0 / (k as f64 * k as f64)).sum();
        let nf = n as f64;
        s + 1.0 / nf - 0.5 / (nf * nf) + 1.0 / (6.0 * nf.powi(3))
    }

    #[test]
    fn digamma_at_one_is_minus_euler_gamma() {
        let oracle = digamma_one_by_series(20_000);
        assert!((oracle + EULER_GAMMA).abs() < 1e-14);
        let v = digamma(1.0).unwrap();
        assert!((v - oracle).abs() / oracle.abs() < 1e-12, "{v} vs {oracle}");
    }

    #[test]
    fn trigamma_at_one_is_pi_squared_over_six() {
        let oracle = trigamma_one_by_series(20_000);
        let v = trigamma(1.0).unwrap();
        assert!((v - oracle).abs() / oracle < 1e-12);
        assert!((v - PI * PI / 6.0).abs() < 1e-13);
    }

    #[test]
    fn tetragamma_at_one_is_minus_two_zeta_three() {
        let zeta3 = 1.202_056_903_159_594_2;
        let v = tetragamma(1.0).unwrap();
        assert!((v + 2.0 * zeta3).abs() / (2.0 * zeta3) < 1e-12);
    }

    #[test]
    fn polygamma_matches_reference_values() {
        // high-precision reference values
        let cases = [
            (0, 0.5, -1.963_510_026_021_423_5),
            (0, 10.0, 2.251_752_589_066_721),
            (1, 0.5, 4.934_802_200_544_679),
            (1, 3.7, 0.310_037_857_670_038_3),
            (2, 0.25, -129.327_739_937_536_92),
            (2, 12.0, -0.007_547_205_368_998_912),
        ];
        for (order, x, expected) in cases {
            let v = polygamma(order, x).unwrap();
            assert!(
                (v - expected).abs() / expected.abs() < 1e-11,
                "order {order} at {x}: {v} vs {expected}"
            );
        }
    }

    #[test]
    fn polygamma_rejects_non_positive_arguments() {
        assert!(matches!(polygamma(0, 0.0), Err(GlmError::Domain { .. })));
        assert!(matches!(polygamma(1, -2.5), Err(GlmError::Domain { .. })));
        assert!(polygamma(3, 1.0).is_err());
    }

    #[test]
    fn digamma_derivative_matches_trigamma() {
        for &x in &[0.3, 1.7, 5.0, 20.0] {
            let h = 1e-5 * x;
            let fd = (digamma(x + h).unwrap() - digamma(x - h).unwrap()) / (2.0 * h);
            let t = trigamma(x).unwrap();
            assert!((fd - t).abs() / t < 1e-7);
            let fd2 = (trigamma(x + h).unwrap() - trigamma(x - h).unwrap()) / (2.0 * h);
            let tt = tetragamma(x).unwrap();
            assert!((fd2 - tt).abs() / tt.abs() < 1e-6);
        }
    }

    #[test]
    fn normal_quantile_inverts_cdf() {
        for &p in &[1e-12, 1e-6, 0.01, 0.3, 0.5, 0.8, 0.975, 1.0 - 1e-9] {
            let x = normal_quantile(p).unwrap();
            let back = normal_cdf(x);
            assert!((back - p).abs() <= 1e-14 * p.max(1e-3), "{p}: {back}");
        }
        assert!(normal_quantile(0.0).is_err());
        assert!(normal_quantile(1.0).is_err());
    }

    #[test]
    fn normal_quantile_matches_bisection_oracle() {
        let p = 0.975;
        let (mut lo, mut hi) = (0.0_f64, 5.0_f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if normal_cdf(mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let q = normal_quantile(p).unwrap();
        assert!((q - 0.5 * (lo + hi)).abs() < 1e-12);
        assert!((q - 1.959_963_984_540_054).abs() < 1e-12);
    }

    proptest::proptest! {
        #[test]
        fn digamma_recurrence(x in 0.01f64..50.0) {
            let lhs = digamma(x + 1.0).unwrap() - digamma(x).unwrap();
            proptest::prop_assert!((lhs - 1.0 / x).abs() <= 1e-12 * (1.0 / x).max(1.0));
        }
    }
}
