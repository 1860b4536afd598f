//! Closed-form Gaussian quantities and quadrature-backed integrals.
//!
//! Everything here is a pure function of its arguments. Stochastic modules
//! are tested against these values.

#[allow(clippy::excessive_precision)]
pub mod quadrature;
#[allow(clippy::excessive_precision)]
pub mod special;
pub mod test_function;

pub use quadrature::{compensated_sum, integrate, ln_integrate_exp, NeumaierSum, QuadratureResult, QuadratureSpec};
pub use special::{
    gaussian_tail, heat_kernel, ln_add_exp, ln_gaussian_tail, ln_heat_kernel, normal_cdf, normal_interval_probability,
};
pub use test_function::TestFunction;

use crate::error::{ensure_finite, ensure_positive, Error, Result};
use special::{ln_normal_interval_probability, ln_sqrt_2pi};

/// Rejects `λ ≤ 0` with the error kind matching the sign.
pub fn require_positive_drift(lambda: f64) -> Result<()> {
    ensure_finite("lambda", lambda)?;
    if lambda == 0.0 {
        Err(Error::ZeroDrift)
    } else if lambda < 0.0 {
        Err(Error::NegativeDrift(lambda))
    } else {
        Ok(())
    }
}

/// `e^{−z²/2}/(z√(2π))`, the leading term of `P(B_1 ≥ z)` as `z → ∞`.
pub fn gaussian_tail_asymptotic(z: f64) -> Result<f64> {
    Ok(ln_gaussian_tail_asymptotic(z)?.exp())
}

pub fn ln_gaussian_tail_asymptotic(z: f64) -> Result<f64> {
    if !(z.is_finite() && z > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "tail asymptotic needs z > 0 (got {z})"
        )));
    }
    Ok(-0.5 * z * z - z.ln() - ln_sqrt_2pi())
}

/// Standardized bounds of `B_t` for the event `x + B_t − λt ∈ [a, b]`.
fn landing_bounds(x: f64, t: f64, lambda: f64, a: f64, b: f64) -> (f64, f64) {
    let s = t.sqrt();
    ((a - x + lambda * t) / s, (b - x + lambda * t) / s)
}

/// `P(x + B_t − λt ∈ [a, b])`.
pub fn landing_probability(x: f64, t: f64, lambda: f64, a: f64, b: f64) -> f64 {
    let (lo, hi) = landing_bounds(x, t, lambda, a, b);
    normal_interval_probability(lo, hi)
}

/// `ln P(x + B_t − λt ∈ [a, b])`.
pub fn ln_landing_probability(x: f64, t: f64, lambda: f64, a: f64, b: f64) -> f64 {
    let (lo, hi) = landing_bounds(x, t, lambda, a, b);
    ln_normal_interval_probability(lo, hi)
}

fn check_time(t: f64) -> Result<()> {
    ensure_positive("t", t)
}

/// `P(|x + B_t − λt| ≤ K)`, exact as a difference of two Gaussian tails.
pub fn hit_window_probability(x: f64, t: f64, lambda: f64, k: f64) -> Result<f64> {
    check_time(t)?;
    ensure_positive("K", k)?;
    ensure_finite("x", x)?;
    ensure_finite("lambda", lambda)?;
    Ok(landing_probability(x, t, lambda, -k, k))
}

/// `ln P(|x + B_t − λt| ≤ K)`; finite far into the tails.
pub fn ln_hit_window_probability(x: f64, t: f64, lambda: f64, k: f64) -> Result<f64> {
    check_time(t)?;
    ensure_positive("K", k)?;
    ensure_finite("x", x)?;
    ensure_finite("lambda", lambda)?;
    Ok(ln_landing_probability(x, t, lambda, -k, k))
}

/// How a test function enters a Gaussian expectation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transform {
    /// `E[h(x + B_t − λt)]`.
    Identity,
    /// `E[1 − e^{−f(x + B_t − λt)}]`.
    OneMinusExp,
}

impl Transform {
    fn apply(self, v: f64) -> f64 {
        match self {
            Transform::Identity => v,
            Transform::OneMinusExp => -(-v).exp_m1(),
        }
    }
}

/// `E[g(x + B_t − λt)]` where `g` is `f` or `1 − e^{−f}`.
///
/// Piecewise-constant `f` is handled exactly with interval probabilities;
/// anything else is integrated against the `N(x − λt, t)` density, split at
/// the support breakpoints and at the density's peak.
pub fn smoothed_expectation(
    x: f64,
    t: f64,
    lambda: f64,
    f: &TestFunction,
    transform: Transform,
    q: &QuadratureSpec,
) -> Result<f64> {
    check_time(t)?;
    let Some((lo, hi)) = f.support() else {
        return Ok(0.0);
    };
    if let Some(pieces) = f.constant_pieces() {
        return Ok(compensated_sum(
            pieces
                .iter()
                .map(|&(a, b, v)| transform.apply(v) * landing_probability(x, t, lambda, a, b)),
        ));
    }
    // Bound on the integral, used to scale the absolute tolerance.
    let bound = transform.apply(f.sup()) * landing_probability(x, t, lambda, lo, hi);
    if bound == 0.0 {
        return Ok(0.0);
    }
    let center = x - lambda * t;
    let mut breaks = f.breakpoints();
    breaks.push(center);
    let s = t.sqrt();
    breaks.extend([center - 3.0 * s, center + 3.0 * s]);
    let spec = q.with_abs_tol(q.abs_tol * bound.min(1.0));
    let r = integrate(
        |y| transform.apply(f.eval(y)) * heat_kernel(y - center, t),
        lo,
        hi,
        &breaks,
        &spec,
    )?;
    Ok(r.value.clamp(0.0, bound))
}

/// `ln E[g(x + B_t − λt)]`, accurate where the expectation itself underflows.
pub fn ln_smoothed_expectation(
    x: f64,
    t: f64,
    lambda: f64,
    f: &TestFunction,
    transform: Transform,
    q: &QuadratureSpec,
) -> Result<f64> {
    check_time(t)?;
    let Some((lo, hi)) = f.support() else {
        return Ok(f64::NEG_INFINITY);
    };
    if let Some(pieces) = f.constant_pieces() {
        return Ok(pieces.iter().fold(f64::NEG_INFINITY, |acc, &(a, b, v)| {
            ln_add_exp(acc, transform.apply(v).ln() + ln_landing_probability(x, t, lambda, a, b))
        }));
    }
    let center = x - lambda * t;
    ln_integrate_exp(
        |y| transform.apply(f.eval(y)).ln() + ln_heat_kernel(y - center, t),
        lo,
        hi,
        &f.breakpoints(),
        &[center],
        q.rel_tol,
    )
}

/// `E[1 − e^{−f(x + B_t − λt)}]`, the per-atom integrand of `Θ_t(f)`.
pub fn expected_one_minus_exp(x: f64, t: f64, lambda: f64, f: &TestFunction, q: &QuadratureSpec) -> Result<f64> {
    smoothed_expectation(x, t, lambda, f, Transform::OneMinusExp, q)
}

/// `∫ g(y)·e^{−rate·y} dy` where `g` is `h` or `1 − e^{−h}`.
pub fn weighted_integral(h: &TestFunction, rate: f64, transform: Transform, q: &QuadratureSpec) -> Result<f64> {
    ensure_finite("rate", rate)?;
    let Some((lo, hi)) = h.support() else {
        return Ok(0.0);
    };
    if let Some(pieces) = h.constant_pieces() {
        return Ok(compensated_sum(pieces.iter().map(|&(a, b, v)| {
            let mass = if rate == 0.0 {
                b - a
            } else {
                // (e^{−ra} − e^{−rb})/r, written to stay accurate for small r(b − a)
                (-rate * a).exp() * (-(-rate * (b - a)).exp_m1()) / rate
            };
            transform.apply(v) * mass
        })));
    }
    let r = integrate(
        |y| transform.apply(h.eval(y)) * (-rate * y).exp(),
        lo,
        hi,
        &h.breakpoints(),
        q,
    )?;
    Ok(r.value)
}

/// Bound on `∫_{outside [A, B]} e^{−rate·x}·sup h·P(x + B_t − λt ∈ supp h) dx`.
fn invariance_tail_bound(
    support: (f64, f64),
    sup_h: f64,
    t: f64,
    lambda: f64,
    rate: f64,
    outer: (f64, f64),
    q: &QuadratureSpec,
) -> Result<f64> {
    let (s_lo, s_hi) = support;
    let width = 60.0 * t.sqrt() + 4.0 * (lambda.abs() + rate.abs()) * t + 10.0;
    let integrand = |x: f64| (-rate * x + ln_landing_probability(x, t, lambda, s_lo, s_hi)).exp();
    let spec = q.with_abs_tol(f64::MIN_POSITIVE);
    let left = integrate(integrand, outer.0 - width, outer.0, &[], &spec)?.value;
    let right = integrate(integrand, outer.1, outer.1 + width, &[], &spec)?.value;
    Ok(sup_h * (left + right))
}

/// `∫_ℝ E[h(x + B_t − λt)]·e^{−rate·x} dx` by nested quadrature on a
/// bound-certified truncated domain.
fn invariance_lhs(h: &TestFunction, t: f64, lambda: f64, rate: f64, q: &QuadratureSpec) -> Result<f64> {
    check_time(t)?;
    ensure_finite("lambda", lambda)?;
    q.validate()?;
    let Some(support) = h.support() else {
        return Ok(0.0);
    };
    let (s_lo, s_hi) = support;
    let drift = lambda.abs() * t + rate.abs() * t;
    let sup_h = h.sup();
    let target = q.abs_tol / 10.0;
    let outer_for = |r: f64| (s_lo - drift - r, s_hi + drift + r);

    let r_max = 20.0 * (drift + 40.0 * t.sqrt()) + 10.0;
    let tail_at = |r: f64| invariance_tail_bound(support, sup_h, t, lambda, rate, outer_for(r), q);
    let mut hi_r = r_max;
    let tail_hi = tail_at(hi_r)?;
    if tail_hi >= target {
        return Err(Error::Truncation {
            tail: tail_hi,
            tolerance: target,
        });
    }
    let mut lo_r = 0.0;
    if tail_at(lo_r)? >= target {
        for _ in 0..60 {
            let mid = 0.5 * (lo_r + hi_r);
            if tail_at(mid)? < target {
                hi_r = mid;
            } else {
                lo_r = mid;
            }
            if hi_r - lo_r < 1e-3 * t.sqrt() {
                break;
            }
        }
    } else {
        hi_r = 0.0;
    }
    let (a, b) = outer_for(hi_r);

    let mut breaks: Vec<f64> = Vec::new();
    for bp in h.breakpoints() {
        breaks.extend([bp + lambda * t, bp + lambda * t - rate * t]);
    }
    let inner = q.with_abs_tol(q.abs_tol * 1e-3);
    let mut inner_err: Option<Error> = None;
    let r = integrate(
        |x| match smoothed_expectation(x, t, lambda, h, Transform::Identity, &inner) {
            Ok(v) => v * (-rate * x).exp(),
            Err(e) => {
                inner_err.get_or_insert(e);
                0.0
            }
        },
        a,
        b,
        &breaks,
        q,
    );
    if let Some(e) = inner_err {
        return Err(e);
    }
    Ok(r?.value)
}

/// Left side of `∫ E[h(x + B_t − λt)] e^{−2λx} dx = ∫ h(y) e^{−2λy} dy`.
pub fn exp_weighted_invariance_lhs(h: &TestFunction, t: f64, lambda: f64, q: &QuadratureSpec) -> Result<f64> {
    invariance_lhs(h, t, lambda, 2.0 * lambda, q)
}

/// Left side of `∫ E[h(x + B_t − λt)] dx = ∫ h(y) dy`.
pub fn flat_invariance_lhs(h: &TestFunction, t: f64, lambda: f64, q: &QuadratureSpec) -> Result<f64> {
    invariance_lhs(h, t, lambda, 0.0, q)
}

/// `exp{−∫(1 − e^{−f(x)})(Z e^{−2λx} + Y) dx}`, the Laplace functional of
/// the Poisson process with that deterministic intensity.
pub fn cox_laplace_closed_form(f: &TestFunction, z: f64, y: f64, lambda: f64, q: &QuadratureSpec) -> Result<f64> {
    Ok((-laplace_exponent(f, z, y, lambda, q)?).exp())
}

/// `∫(1 − e^{−f(x)})(Z e^{−2λx} + Y) dx`.
pub fn laplace_exponent(f: &TestFunction, z: f64, y: f64, lambda: f64, q: &QuadratureSpec) -> Result<f64> {
    crate::error::ensure_nonnegative("Z", z)?;
    crate::error::ensure_nonnegative("Y", y)?;
    ensure_finite("lambda", lambda)?;
    let mut total = 0.0;
    if z > 0.0 {
        total += z * weighted_integral(f, 2.0 * lambda, Transform::OneMinusExp, q)?;
    }
    if y > 0.0 {
        total += y * weighted_integral(f, 0.0, Transform::OneMinusExp, q)?;
    }
    Ok(total)
}

/// `½·exp(λ·t^{1/6}/4)`.
pub fn ratio_lemma_bound(t: f64, lambda: f64) -> Result<f64> {
    require_positive_drift(lambda)?;
    check_time(t)?;
    Ok(0.5 * (0.25 * lambda * t.powf(1.0 / 6.0)).exp())
}

/// `ln` of [`tail_bm_approximation`].
pub fn ln_tail_bm_approximation(x: f64, t: f64, lambda: f64, k_f: f64) -> Result<f64> {
    require_positive_drift(lambda)?;
    check_time(t)?;
    ensure_finite("x", x)?;
    crate::error::ensure_nonnegative("K_f", k_f)?;
    let d = lambda * t - x;
    Ok(-d * d / (2.0 * t) + 2.0 * lambda * k_f - (2.0 * lambda).ln() - 0.5 * t.ln() - ln_sqrt_2pi())
}

/// `e^{−(λt − x)²/(2t) + 2λK_f} / (2λ√(2πt))`, the large-`t` approximation of
/// `P(x + B_t − λt ≥ −K_f)` for `x` near `−λt`.
pub fn tail_bm_approximation(x: f64, t: f64, lambda: f64, k_f: f64) -> Result<f64> {
    Ok(ln_tail_bm_approximation(x, t, lambda, k_f)?.exp())
}

/// `ln P(x + B_t − λt ≥ −K_f)`, the exact counterpart of the approximation.
pub fn ln_drifted_upper_tail(x: f64, t: f64, lambda: f64, k_f: f64) -> Result<f64> {
    check_time(t)?;
    Ok(ln_gaussian_tail((-k_f - x + lambda * t) / t.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ln_smoothed_matches_direct() {
        let q = QuadratureSpec::default();
        let bump = TestFunction::smooth_bump(0.5, 1.0, 2.0).unwrap();
        let step = TestFunction::step(0.0, 1.0, 2.0_f64.ln()).unwrap();
        for f in [&bump, &step] {
            for &(x, t, l) in &[(0.0, 1.0, 0.0), (2.0, 3.0, 1.0), (-1.0, 0.5, -0.5)] {
                for tr in [Transform::Identity, Transform::OneMinusExp] {
                    let direct = smoothed_expectation(x, t, l, f, tr, &q).unwrap();
                    let lv = ln_smoothed_expectation(x, t, l, f, tr, &q).unwrap();
                    assert!(((lv.exp() - direct) / direct).abs() < 1e-8, "{x} {t} {l}");
                }
            }
        }
        // deep tail stays finite
        let deep = ln_smoothed_expectation(-1e4, 1e4, 1.0, &bump, Transform::OneMinusExp, &q).unwrap();
        assert!(deep.is_finite() && deep < -19_000.0);
        assert_eq!(
            ln_smoothed_expectation(0.0, 1.0, 1.0, &TestFunction::zero(), Transform::Identity, &q).unwrap(),
            f64::NEG_INFINITY
        );
    }

    fn q() -> QuadratureSpec {
        QuadratureSpec::default()
    }

    #[test]
    fn asymptotic_tail_values() {
        let v = gaussian_tail_asymptotic(3.0).unwrap();
        assert!((v - 1.477_282_803_979_335_7e-3).abs() < 1e-15);
        let ratio = gaussian_tail(10.0) / gaussian_tail_asymptotic(10.0).unwrap();
        assert!((0.985..=1.0).contains(&ratio), "{ratio}");
        assert!(gaussian_tail_asymptotic(20.0).unwrap() < gaussian_tail_asymptotic(10.0).unwrap());
        assert!(gaussian_tail_asymptotic(0.0).is_err());
        assert!(gaussian_tail_asymptotic(-1.0).is_err());
    }

    #[test]
    fn hit_window_cases() {
        let p = hit_window_probability(0.0, 1.0, 0.0, 1.0).unwrap();
        assert!((p - 0.682_689_492_137_085_9).abs() < 1e-14);
        for &t in &[0.3, 1.0, 7.0] {
            let centred = hit_window_probability(2.0 * t, t, 2.0, 1.0).unwrap();
            let want = 1.0 - 2.0 * gaussian_tail(1.0 / t.sqrt());
            assert!((centred - want).abs() < 1e-14);
        }
        assert!(hit_window_probability(0.0, 0.0, 1.0, 1.0).is_err());
        assert!(hit_window_probability(0.0, -1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn hit_window_below_density_bound() {
        for &t in &[0.1, 1.0, 10.0, 1e4] {
            for &k in &[0.5, 1.0, 3.0] {
                let bound = 2.0 * k / (2.0 * std::f64::consts::PI * t).sqrt();
                for i in -200..=200 {
                    let x = i as f64 * 0.05 * (1.0 + t.sqrt());
                    let p = hit_window_probability(x, t, 1.0, k).unwrap();
                    assert!(p <= bound * (1.0 + 1e-12), "t={t} k={k} x={x}");
                }
            }
        }
    }

    #[test]
    fn expected_one_minus_exp_examples() {
        let zero = TestFunction::zero();
        assert_eq!(expected_one_minus_exp(0.3, 1.0, 0.0, &zero, &q()).unwrap(), 0.0);
        let f = TestFunction::step(0.0, 1.0, std::f64::consts::LN_2).unwrap();
        let v = expected_one_minus_exp(0.0, 1.0, 0.0, &f, &q()).unwrap();
        assert!((v - 0.170_672_373_034_271_47).abs() < 1e-14, "{v}");
    }

    #[test]
    fn bump_expectation_matches_riemann_sum() {
        let f = TestFunction::smooth_bump(0.2, 0.8, 1.5).unwrap();
        let (x, t, lambda) = (0.7, 0.4, 0.5);
        let v = expected_one_minus_exp(x, t, lambda, &f, &q()).unwrap();
        // midpoint rule on a fine grid as an independent check
        let n = 200_000;
        let (a, b) = (-0.6, 1.0);
        let dy = (b - a) / n as f64;
        let riemann: f64 = (0..n)
            .map(|i| {
                let y = a + (i as f64 + 0.5) * dy;
                f.one_minus_exp(y) * heat_kernel(y + lambda * t - x, t) * dy
            })
            .sum();
        assert!((v - riemann).abs() < 1e-9, "{v} vs {riemann}");
    }

    #[test]
    fn invariance_identity_step() {
        let h = TestFunction::step(-1.0, 0.0, 1.0).unwrap();
        let lhs = exp_weighted_invariance_lhs(&h, 2.0, 1.0, &q()).unwrap();
        let want = (2f64.exp() - 1.0) / 2.0;
        assert!((lhs - want).abs() < 1e-8, "{lhs} vs {want}");
        let flat = flat_invariance_lhs(&h, 2.0, 1.0, &q()).unwrap();
        assert!((flat - 1.0).abs() < 1e-8, "{flat}");
        assert_eq!(exp_weighted_invariance_lhs(&TestFunction::zero(), 2.0, 1.0, &q()).unwrap(), 0.0);
    }

    #[test]
    fn cox_laplace_examples() {
        let f = TestFunction::step(0.0, 1.0, std::f64::consts::LN_2).unwrap();
        assert_eq!(cox_laplace_closed_form(&TestFunction::zero(), 1.0, 1.0, 1.0, &q()).unwrap(), 1.0);
        let v = cox_laplace_closed_form(&f, 1.0, 0.0, 0.5, &q()).unwrap();
        assert!((v - 0.729_015_504_215_524_7).abs() < 1e-14, "{v}");
        let w = cox_laplace_closed_form(&f, 0.0, 1.0, 0.5, &q()).unwrap();
        assert!((w - (-0.5f64).exp()).abs() < 1e-15);
        assert!(cox_laplace_closed_form(&f, -1.0, 1.0, 0.5, &q()).is_err());
    }

    #[test]
    fn ratio_bound_values() {
        assert!((ratio_lemma_bound(1e6, 1.0).unwrap() - 6.091_246_980_351_737).abs() < 1e-12);
        assert!((ratio_lemma_bound(1.0, 1.0).unwrap() - 0.642_012_708_343_870_7).abs() < 1e-14);
        assert!(ratio_lemma_bound(2.0, 1.0).unwrap() > ratio_lemma_bound(1.0, 1.0).unwrap());
        assert_eq!(ratio_lemma_bound(1.0, 0.0), Err(Error::ZeroDrift));
        assert!(matches!(ratio_lemma_bound(1.0, -1.0), Err(Error::NegativeDrift(_))));
    }

    #[test]
    fn tail_bm_examples() {
        let approx = tail_bm_approximation(-4.0, 4.0, 1.0, 0.0).unwrap();
        assert!((approx - 3.345_755_644_122_134e-5).abs() < 1e-18);
        let exact = ln_drifted_upper_tail(-4.0, 4.0, 1.0, 0.0).unwrap().exp();
        assert!((approx / exact - 1.056_401_786_122_367_8).abs() < 1e-12);
        // K_f = 0, x = −λt: e^{−2λ²t}/(2λ√(2πt))
        let (t, lambda): (f64, f64) = (9.0, 0.7);
        let direct = (-2.0 * lambda * lambda * t).exp() / (2.0 * lambda * (2.0 * std::f64::consts::PI * t).sqrt());
        let v = tail_bm_approximation(-lambda * t, t, lambda, 0.0).unwrap();
        assert!(((v - direct) / direct).abs() < 1e-13);
        assert!(tail_bm_approximation(0.0, 1.0, 0.0, 0.0).is_err());
    }
}
