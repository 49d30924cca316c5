use crate::error::{Error, Result};
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TTest {
    pub t: f64,
    pub p: f64,
    pub df: f64,
}

/// Two-sample pooled-variance t-test of `H1: mean(a) > mean(b)`.
pub fn ttest_one_tailed(a: &[f64], b: &[f64]) -> Result<TTest> {
    for s in [a, b] {
        if s.len() < 2 {
            return Err(Error::InsufficientData { needed: 2, got: s.len() });
        }
        if s.iter().any(|x| !x.is_finite()) {
            return Err(Error::Value("non-finite sample value".into()));
        }
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let ma = a.iter().sum::<f64>() / na;
    let mb = b.iter().sum::<f64>() / nb;
    let ss = |s: &[f64], m: f64| s.iter().map(|x| (x - m) * (x - m)).sum::<f64>();
    let df = na + nb - 2.0;
    let pooled = (ss(a, ma) + ss(b, mb)) / df;
    if pooled == 0.0 {
        if ma == mb {
            return Ok(TTest { t: 0.0, p: 0.5, df });
        }
        return Err(Error::DegenerateVariance);
    }
    let t = (ma - mb) / math::sqrt(pooled * (1.0 / na + 1.0 / nb));
    Ok(TTest { t, p: student_t_sf(t, df), df })
}

/// `P(T > t)` for Student's t with `df` degrees of freedom.
pub fn student_t_sf(t: f64, df: f64) -> f64 {
    if t == 0.0 {
        return 0.5;
    }
    let tail = 0.5 * regularized_incomplete_beta(df / (df + t * t), 0.5 * df, 0.5);
    if t > 0.0 {
        tail
    } else {
        1.0 - tail
    }
}

/// `I_x(a, b)` by the continued fraction, using the symmetry
/// `I_x(a, b) = 1 - I_{1-x}(b, a)` where it converges faster.
pub fn regularized_incomplete_beta(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = math::ln_gamma(a + b) - math::ln_gamma(a) - math::ln_gamma(b)
        + a * math::ln(x)
        + b * math::ln(1.0 - x);
    let front = math::exp(ln_front);
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_continued_fraction(x, a, b) / a
    } else {
        1.0 - front * beta_continued_fraction(1.0 - x, b, a) / b
    }
}

/// Modified Lentz evaluation of the incomplete-beta continued fraction.
fn beta_continued_fraction(x: f64, a: f64, b: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-15;
    let guard = |v: f64| if math::abs(v) < TINY { TINY } else { v };
    let mut c = 1.0;
    let mut d = 1.0 / guard(1.0 - (a + b) * x / (a + 1.0));
    let mut h = d;
    for m in 1..=500 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let even = m * (b - m) * x / ((a + m2 - 1.0) * (a + m2));
        d = 1.0 / guard(1.0 + even * d);
        c = guard(1.0 + even / c);
        h *= d * c;
        let odd = -(a + m) * (a + b + m) * x / ((a + m2) * (a + m2 + 1.0));
        d = 1.0 / guard(1.0 + odd * d);
        c = guard(1.0 + odd / c);
        let delta = d * c;
        h *= delta;
        if math::abs(delta - 1.0) < EPS {
            break;
        }
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_tails() {
        // df = 1 is Cauchy, df = 2 has an algebraic CDF.
        for t in [-3.0, -0.5, 0.1, 1.0, 2.5, 10.0] {
            let cauchy = 0.5 - libm::atan(t) / core::f64::consts::PI;
            assert!((student_t_sf(t, 1.0) - cauchy).abs() < 1e-12, "t={t}");
            let df2 = 0.5 - t / (2.0 * libm::sqrt(2.0 + t * t));
            assert!((student_t_sf(t, 2.0) - df2).abs() < 1e-12, "t={t}");
        }
    }

    #[test]
    fn incomplete_beta_edges_and_symmetry() {
        assert_eq!(regularized_incomplete_beta(0.0, 2.0, 3.0), 0.0);
        assert_eq!(regularized_incomplete_beta(1.0, 2.0, 3.0), 1.0);
        // I_x(1, 1) = x, I_x(2, 1) = x^2.
        assert!((regularized_incomplete_beta(0.3, 1.0, 1.0) - 0.3).abs() < 1e-14);
        assert!((regularized_incomplete_beta(0.3, 2.0, 1.0) - 0.09).abs() < 1e-14);
        let s = regularized_incomplete_beta(0.4, 2.5, 7.0) + regularized_incomplete_beta(0.6, 7.0, 2.5);
        assert!((s - 1.0).abs() < 1e-14);
    }

    #[test]
    fn anchor_and_symmetry() {
        let r = ttest_one_tailed(&[2.0, 3.0, 4.0], &[1.0, 2.0, 3.0]).unwrap();
        assert!((r.t - 1.0 / libm::sqrt(2.0 / 3.0)).abs() < 1e-12);
        assert!((r.p - 0.143_932_067_363_345).abs() < 1e-12);
        assert!((r.p - 0.1438).abs() < 1e-3);
        assert_eq!(r.df, 4.0);
        let s = ttest_one_tailed(&[1.0, 2.0, 3.0], &[2.0, 3.0, 4.0]).unwrap();
        assert!((s.t + r.t).abs() < 1e-15);
        assert!((s.p - (1.0 - r.p)).abs() < 1e-14);
    }

    #[test]
    fn degenerate_inputs() {
        let same = ttest_one_tailed(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!((same.t, same.p), (0.0, 0.5));
        let flat = ttest_one_tailed(&[1.0, 1.0], &[1.0, 1.0]).unwrap();
        assert_eq!((flat.t, flat.p), (0.0, 0.5));
        assert_eq!(ttest_one_tailed(&[1.0, 1.0], &[2.0, 2.0]), Err(Error::DegenerateVariance));
        assert_eq!(ttest_one_tailed(&[1.0], &[2.0, 2.0]), Err(Error::InsufficientData { needed: 2, got: 1 }));
    }
}
