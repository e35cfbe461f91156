//! First-order systems characterising the scale-factor equilibria.
//!
//! Each case is one implementation of [`EquilibriumCase`]; the
//! [`CaseRegistry`] looks them up by tag or name.
//!
//! The systems only depend on the supports through four coefficients
//! ([`FocCoefficients`]): `g_b = (h_b^2 + h_b l_b + l_b^2) / (h_b + l_b)`, its
//! seller counterpart `g_s`, and the coupling terms `c_b = 3 l_s` and
//! `c_s = 3 h_b`. Swapping the buyer and seller coefficients maps each system
//! onto its mirror image (case 2 <-> case 3, cases 1 and 4 onto themselves).

use serde::{Deserialize, Serialize};

use super::newton::{self, NewtonOptions};
use super::{BneSolution, CaseTag, MarketSpec, ScaleProfile};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FocCoefficients {
    pub g_b: f64,
    pub g_s: f64,
    pub c_b: f64,
    pub c_s: f64,
}

impl FocCoefficients {
    pub fn from_spec(spec: &MarketSpec) -> Self {
        let g = |l: f64, h: f64| (h * h + h * l + l * l) / (h + l);
        FocCoefficients { g_b: g(spec.l_b, spec.h_b), g_s: g(spec.l_s, spec.h_s), c_b: 3.0 * spec.l_s, c_s: 3.0 * spec.h_b }
    }

    /// Exchanges the roles of buyer and seller.
    pub fn mirrored(&self) -> Self {
        FocCoefficients { g_b: self.g_s, g_s: self.g_b, c_b: self.c_s, c_s: self.c_b }
    }
}

pub trait EquilibriumCase: Send + Sync {
    fn tag(&self) -> CaseTag;

    /// Names of the unknowns, in the order used by [`Self::residuals`].
    fn unknowns(&self) -> &'static [&'static str];

    /// First-order residuals; `None` when `x` leaves the domain (non-positive factors).
    fn residuals(&self, x: &[f64], coeffs: &FocCoefficients) -> Option<Vec<f64>>;

    fn to_profile(&self, x: &[f64]) -> Result<ScaleProfile>;

    fn from_profile(&self, profile: &ScaleProfile) -> Vec<f64>;

    fn initial_guess(&self) -> Vec<f64>;

    fn solve_coefficients(&self, coeffs: &FocCoefficients, opts: &NewtonOptions) -> Result<BneSolution> {
        let outcome = newton::solve(|x| self.residuals(x, coeffs), &self.initial_guess(), opts);
        // keep the best iterate even if it is not a valid profile
        let profile = self.to_profile(&outcome.x).unwrap_or_else(|_| raw_profile(self.tag(), &outcome.x));
        let ordering_violation = profile.check_ordering().err().map(|e| e.to_string());
        Ok(BneSolution {
            profile,
            residuals: outcome.residuals,
            iterations: outcome.iterations,
            converged: outcome.converged,
            ordering_violation,
        })
    }

    fn solve(&self, spec: &MarketSpec, opts: &NewtonOptions) -> Result<BneSolution> {
        spec.validate()?;
        self.solve_coefficients(&FocCoefficients::from_spec(spec), opts)
    }
}

fn raw_profile(tag: CaseTag, x: &[f64]) -> ScaleProfile {
    let [b1, b2, s1, s2] = match (tag, x) {
        (CaseTag::Case1, &[b, s]) => [b, b, s, s],
        (CaseTag::Case2, &[b1, b2, s]) => [b1, b2, s, s],
        (CaseTag::Case3, &[b, s1, s2]) => [b, b, s1, s2],
        (_, &[b1, b2, s1, s2]) => [b1, b2, s1, s2],
        _ => [f64::NAN; 4],
    };
    ScaleProfile { alpha_b1: b1, alpha_b2: b2, alpha_s1: s1, alpha_s2: s2, case: tag }
}

fn positive(x: &[f64]) -> bool {
    x.iter().all(|v| v.is_finite() && *v > 0.0)
}

pub struct SameSame;
pub struct SplitBuyer;
pub struct SplitSeller;
pub struct SplitBoth;

impl EquilibriumCase for SameSame {
    fn tag(&self) -> CaseTag {
        CaseTag::Case1
    }

    fn unknowns(&self) -> &'static [&'static str] {
        &["alpha_b", "alpha_s"]
    }

    fn residuals(&self, x: &[f64], c: &FocCoefficients) -> Option<Vec<f64>> {
        let &[b, s] = x else { return None };
        Some(vec![b - 2.0 / 3.0 - c.c_b * s / (6.0 * c.g_b), s - 2.0 / 3.0 - c.c_s * b / (6.0 * c.g_s)])
    }

    fn to_profile(&self, x: &[f64]) -> Result<ScaleProfile> {
        ScaleProfile::case1(x[0], x[1])
    }

    fn from_profile(&self, p: &ScaleProfile) -> Vec<f64> {
        vec![p.alpha_b1, p.alpha_s1]
    }

    fn initial_guess(&self) -> Vec<f64> {
        vec![0.65, 1.05]
    }

    /// The system is linear: `alpha_b = 2/3 + kb alpha_s`, `alpha_s = 2/3 + ks alpha_b`.
    fn solve_coefficients(&self, c: &FocCoefficients, _opts: &NewtonOptions) -> Result<BneSolution> {
        let kb = c.c_b / (6.0 * c.g_b);
        let ks = c.c_s / (6.0 * c.g_s);
        let det = 1.0 - kb * ks;
        if det.abs() < 1e-12 {
            return Err(Error::Singular(format!("case 1 coupling kb * ks = {}", kb * ks)));
        }
        let b = (2.0 / 3.0) * (1.0 + kb) / det;
        let s = 2.0 / 3.0 + ks * b;
        let residuals = self.residuals(&[b, s], c).unwrap_or_default();
        let profile = ScaleProfile::case1(b, s).unwrap_or_else(|_| raw_profile(CaseTag::Case1, &[b, s]));
        let converged = residuals.iter().all(|r| r.abs() <= 1e-10) && positive(&[b, s]);
        let ordering_violation = profile.check_ordering().err().map(|e| e.to_string());
        Ok(BneSolution { profile, residuals, iterations: 0, converged, ordering_violation })
    }
}

impl EquilibriumCase for SplitBuyer {
    fn tag(&self) -> CaseTag {
        CaseTag::Case2
    }

    fn unknowns(&self) -> &'static [&'static str] {
        &["alpha_b1", "alpha_b2", "alpha_s"]
    }

    fn residuals(&self, x: &[f64], c: &FocCoefficients) -> Option<Vec<f64>> {
        let &[b1, b2, s] = x else { return None };
        if !positive(x) {
            return None;
        }
        Some(vec![
            3.0 * b1 - b2 - 2.0,
            (b1 - 5.0 * b2 + 2.0) * c.g_b + c.c_b * s,
            ((1.0 / b2 - 1.0 / b1) * (s * (b1 + 3.0 * b2) - 2.0 * b2) - 6.0 * s + 4.0) * c.g_s + c.c_s * b2,
        ])
    }

    fn to_profile(&self, x: &[f64]) -> Result<ScaleProfile> {
        ScaleProfile::case2(x[0], x[1], x[2])
    }

    fn from_profile(&self, p: &ScaleProfile) -> Vec<f64> {
        vec![p.alpha_b1, p.alpha_b2, p.alpha_s1]
    }

    fn initial_guess(&self) -> Vec<f64> {
        vec![0.7, 0.6, 1.05]
    }
}

impl EquilibriumCase for SplitSeller {
    fn tag(&self) -> CaseTag {
        CaseTag::Case3
    }

    fn unknowns(&self) -> &'static [&'static str] {
        &["alpha_b", "alpha_s1", "alpha_s2"]
    }

    fn residuals(&self, x: &[f64], c: &FocCoefficients) -> Option<Vec<f64>> {
        let &[b, s1, s2] = x else { return None };
        if !positive(x) {
            return None;
        }
        Some(vec![
            ((1.0 / s2 - 1.0 / s1) * (b * (s1 + 3.0 * s2) - 2.0 * s2) - 6.0 * b + 4.0) * c.g_b + c.c_b * s2,
            3.0 * s1 - s2 - 2.0,
            (s1 - 5.0 * s2 + 2.0) * c.g_s + c.c_s * b,
        ])
    }

    fn to_profile(&self, x: &[f64]) -> Result<ScaleProfile> {
        ScaleProfile::case3(x[0], x[1], x[2])
    }

    fn from_profile(&self, p: &ScaleProfile) -> Vec<f64> {
        vec![p.alpha_b1, p.alpha_s1, p.alpha_s2]
    }

    fn initial_guess(&self) -> Vec<f64> {
        vec![0.65, 1.0, 1.1]
    }
}

impl EquilibriumCase for SplitBoth {
    fn tag(&self) -> CaseTag {
        CaseTag::Case4
    }

    fn unknowns(&self) -> &'static [&'static str] {
        &["alpha_b1", "alpha_b2", "alpha_s1", "alpha_s2"]
    }

    fn residuals(&self, x: &[f64], c: &FocCoefficients) -> Option<Vec<f64>> {
        let &[b1, b2, s1, s2] = x else { return None };
        if !positive(x) {
            return None;
        }
        Some(vec![
            s1 * b2 + s2 * (2.0 - 3.0 * b1),
            (2.0 + b1 - 6.0 * b2 + s1 * b2 / s2) * c.g_b + c.c_b * s2,
            b1 * s2 + b2 * (2.0 - 3.0 * s1),
            (2.0 + s1 - 6.0 * s2 + b1 * s2 / b2) * c.g_s + c.c_s * b2,
        ])
    }

    fn to_profile(&self, x: &[f64]) -> Result<ScaleProfile> {
        ScaleProfile::case4(x[0], x[1], x[2], x[3])
    }

    fn from_profile(&self, p: &ScaleProfile) -> Vec<f64> {
        p.alphas().to_vec()
    }

    fn initial_guess(&self) -> Vec<f64> {
        vec![0.7, 0.6, 1.0, 1.1]
    }
}

/// Case solvers looked up by tag or by name (`"1"`, `"case2"`, ...).
pub struct CaseRegistry {
    cases: Vec<Box<dyn EquilibriumCase>>,
}

impl CaseRegistry {
    pub fn new() -> Self {
        CaseRegistry { cases: Vec::new() }
    }

    pub fn standard() -> Self {
        let mut registry = Self::new();
        registry.register(SameSame);
        registry.register(SplitBuyer);
        registry.register(SplitSeller);
        registry.register(SplitBoth);
        registry
    }

    pub fn register<C: EquilibriumCase + 'static>(&mut self, case: C) {
        self.cases.retain(|c| c.tag() != case.tag());
        self.cases.push(Box::new(case));
    }

    pub fn get(&self, tag: CaseTag) -> Option<&dyn EquilibriumCase> {
        self.cases.iter().find(|c| c.tag() == tag).map(|c| c.as_ref())
    }

    pub fn by_name(&self, name: &str) -> Result<&dyn EquilibriumCase> {
        let tag: CaseTag = name.parse()?;
        self.get(tag).ok_or_else(|| Error::config(format!("no solver registered for {tag}")))
    }

    pub fn tags(&self) -> Vec<CaseTag> {
        self.cases.iter().map(|c| c.tag()).collect()
    }
}

impl Default for CaseRegistry {
    fn default() -> Self {
        Self::standard()
    }
}

pub fn solve_case(tag: CaseTag, spec: &MarketSpec) -> Result<BneSolution> {
    let registry = CaseRegistry::standard();
    let case = registry.get(tag).expect("standard registry covers every case");
    case.solve(spec, &NewtonOptions::default())
}

pub fn solve_case1(spec: &MarketSpec) -> Result<BneSolution> {
    solve_case(CaseTag::Case1, spec)
}

pub fn solve_case2(spec: &MarketSpec) -> Result<BneSolution> {
    solve_case(CaseTag::Case2, spec)
}

pub fn solve_case3(spec: &MarketSpec) -> Result<BneSolution> {
    solve_case(CaseTag::Case3, spec)
}

pub fn solve_case4(spec: &MarketSpec) -> Result<BneSolution> {
    solve_case(CaseTag::Case4, spec)
}
