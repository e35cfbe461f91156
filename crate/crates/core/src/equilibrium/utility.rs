//! Exact expected and interim utilities of scale-based bidding.
//!
//! With ordered factors, two units trade at `(alpha_b2 theta_b + alpha_s2 theta_s) / 2`
//! when `theta_s <= (alpha_b2 / alpha_s2) theta_b`, one unit trades at
//! `(alpha_b1 theta_b + alpha_s1 theta_s) / 2` when the type lies between that
//! threshold and `(alpha_b1 / alpha_s1) theta_b`, and nothing trades otherwise.
//!
//! The interim utilities integrate the opponent's type over these regions with
//! the thresholds clamped to the opponent's support. The expected utilities then
//! integrate the interim utility over the own type. Between the points where a
//! threshold hits a support bound the integrand is a quadratic polynomial, so
//! Simpson's rule on each piece is exact.
//!
//! The `unclamped_*` functions are the textbook closed forms obtained by
//! integrating the same regions without clamping. They coincide with the
//! clamped values whenever every threshold stays inside the support.

use super::{MarketSpec, ScaleProfile};
use crate::{Error, Result};

fn check_inputs(profile: &ScaleProfile, spec: &MarketSpec) -> Result<()> {
    if profile.alphas().iter().any(|a| !a.is_finite()) {
        return Err(Error::domain("non-finite scale factor"));
    }
    spec.validate()?;
    profile.check_ordering()
}

/// Integrates a piecewise polynomial (degree <= 3 on every piece) over `[lo, hi]`.
fn piecewise_simpson(lo: f64, hi: f64, breaks: &[f64], f: impl Fn(f64) -> f64) -> f64 {
    let mut points: Vec<f64> = breaks.iter().copied().filter(|b| b.is_finite() && *b > lo && *b < hi).collect();
    points.push(lo);
    points.push(hi);
    points.sort_by(f64::total_cmp);
    points
        .windows(2)
        .map(|w| {
            let (a, b) = (w[0], w[1]);
            (b - a) / 6.0 * (f(a) + 4.0 * f(0.5 * (a + b)) + f(b))
        })
        .sum()
}

/// Buyer's interim utilities `(two units, one unit)` at type `theta_b`.
pub fn interim_utilities_buyer(theta_b: f64, profile: &ScaleProfile, spec: &MarketSpec) -> Result<(f64, f64)> {
    check_inputs(profile, spec)?;
    if !theta_b.is_finite() {
        return Err(Error::domain("non-finite buyer type"));
    }
    Ok(buyer_interim(theta_b, profile, spec))
}

fn buyer_interim(t: f64, p: &ScaleProfile, spec: &MarketSpec) -> (f64, f64) {
    let w = 1.0 / (spec.h_s - spec.l_s);
    let clamp = |s: f64| s.clamp(spec.l_s, spec.h_s);
    let two_hi = clamp(p.alpha_b2 / p.alpha_s2 * t);
    let one_hi = clamp(p.alpha_b1 / p.alpha_s1 * t);
    // antiderivatives of the per-unit surplus in theta_s
    let f2 = |s: f64| (t - 0.5 * p.alpha_b2 * t) * s - 0.25 * p.alpha_s2 * s * s;
    let f1 = |s: f64| (t - 0.5 * p.alpha_b1 * t) * s - 0.25 * p.alpha_s1 * s * s;
    let u_two = 2.0 * w * (f2(two_hi) - f2(spec.l_s));
    let u_one = w * (f1(one_hi) - f1(two_hi));
    (u_two, u_one)
}

/// Seller's interim utilities `(two units, one unit)` at type `theta_s`.
pub fn interim_utilities_seller(theta_s: f64, profile: &ScaleProfile, spec: &MarketSpec) -> Result<(f64, f64)> {
    check_inputs(profile, spec)?;
    if !theta_s.is_finite() {
        return Err(Error::domain("non-finite seller type"));
    }
    Ok(seller_interim(theta_s, profile, spec))
}

fn seller_interim(s: f64, p: &ScaleProfile, spec: &MarketSpec) -> (f64, f64) {
    let w = 1.0 / (spec.h_b - spec.l_b);
    let clamp = |t: f64| t.clamp(spec.l_b, spec.h_b);
    let two_lo = clamp(p.alpha_s2 / p.alpha_b2 * s);
    let one_lo = clamp(p.alpha_s1 / p.alpha_b1 * s);
    let g2 = |t: f64| 0.25 * p.alpha_b2 * t * t + (0.5 * p.alpha_s2 * s - s) * t;
    let g1 = |t: f64| 0.25 * p.alpha_b1 * t * t + (0.5 * p.alpha_s1 * s - s) * t;
    let u_two = 2.0 * w * (g2(spec.h_b) - g2(two_lo));
    let u_one = w * (g1(two_lo) - g1(one_lo));
    (u_two, u_one)
}

/// Ex-ante expected utility of the buyer.
pub fn expected_utility_buyer(profile: &ScaleProfile, spec: &MarketSpec) -> Result<f64> {
    check_inputs(profile, spec)?;
    let c2 = profile.alpha_b2 / profile.alpha_s2;
    let c1 = profile.alpha_b1 / profile.alpha_s1;
    let breaks = [spec.l_s / c2, spec.h_s / c2, spec.l_s / c1, spec.h_s / c1];
    let integral = piecewise_simpson(spec.l_b, spec.h_b, &breaks, |t| {
        let (a, b) = buyer_interim(t, profile, spec);
        a + b
    });
    Ok(integral / (spec.h_b - spec.l_b))
}

/// Ex-ante expected utility of the seller.
pub fn expected_utility_seller(profile: &ScaleProfile, spec: &MarketSpec) -> Result<f64> {
    check_inputs(profile, spec)?;
    let c2 = profile.alpha_b2 / profile.alpha_s2;
    let c1 = profile.alpha_b1 / profile.alpha_s1;
    let breaks = [spec.l_b * c2, spec.h_b * c2, spec.l_b * c1, spec.h_b * c1];
    let integral = piecewise_simpson(spec.l_s, spec.h_s, &breaks, |s| {
        let (a, b) = seller_interim(s, profile, spec);
        a + b
    });
    Ok(integral / (spec.h_s - spec.l_s))
}

/// Closed form of the buyer's expected utility without clamping the
/// clearing thresholds to the seller's support.
pub fn unclamped_expected_utility_buyer(profile: &ScaleProfile, spec: &MarketSpec) -> f64 {
    let ScaleProfile { alpha_b1: b1, alpha_b2: b2, alpha_s1: s1, alpha_s2: s2, .. } = *profile;
    let MarketSpec { l_b, h_b, l_s, h_s, .. } = *spec;
    let width = h_s - l_s;
    let m2 = h_b * h_b + h_b * l_b + l_b * l_b;
    let (r1, r2) = (b1 / s1, b2 / s2);
    m2 / (3.0 * width)
        * ((r1 - r2) * (1.0 - b1 / 2.0 - s1 / 4.0 * (r1 + r2)) + 2.0 * r2 * (1.0 - b2 / 2.0) - b2 * b2 / (2.0 * s2))
        - l_s * (h_b + l_b) / width * (1.0 - b2 / 2.0)
        + l_s * l_s * s2 / (2.0 * width)
}

/// Closed form of the seller's expected utility without clamping.
pub fn unclamped_expected_utility_seller(profile: &ScaleProfile, spec: &MarketSpec) -> f64 {
    let ScaleProfile { alpha_b1: b1, alpha_b2: b2, alpha_s1: s1, alpha_s2: s2, .. } = *profile;
    let MarketSpec { l_b, h_b, l_s, h_s, .. } = *spec;
    let width = h_b - l_b;
    let m2 = h_s * h_s + h_s * l_s + l_s * l_s;
    let (q1, q2) = (s1 / b1, s2 / b2);
    m2 / (3.0 * width)
        * ((q2 - q1) * (b1 / 4.0 * (q2 + q1) + s1 / 2.0 - 1.0) + 2.0 * q2 * (1.0 - s2 / 2.0) - s2 * s2 / (2.0 * b2))
        - h_b * (h_s + l_s) / width * (1.0 - s2 / 2.0)
        + h_b * h_b * b2 / (2.0 * width)
}
