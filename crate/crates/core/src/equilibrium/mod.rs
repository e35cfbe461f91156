//! Scale-factor equilibria of the one-buyer/one-seller two-unit auction
//! under the average clearing price rule.
//!
//! The buyer bids `alpha_b1 * theta_b` and `alpha_b2 * theta_b`, the seller
//! asks `alpha_s1 * theta_s` and `alpha_s2 * theta_s`, with types drawn from
//! independent uniforms. [`utility`] evaluates expected and interim utilities
//! exactly, [`systems`] holds the first-order systems of the four cases behind
//! the [`EquilibriumCase`] trait, and [`montecarlo`] provides the sampling
//! oracle used to certify solutions.

mod newton;
pub mod montecarlo;
pub mod systems;
pub mod utility;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use montecarlo::{
    best_response_scan, certify, estimate_expected_utilities, estimate_expected_utility, Certification, Estimate,
    Role, RoleCertificate, ScanOptions, ScanResult,
};
pub use newton::NewtonOptions;
pub use systems::{
    solve_case, solve_case1, solve_case2, solve_case3, solve_case4, CaseRegistry, EquilibriumCase, FocCoefficients,
};
pub use utility::{
    expected_utility_buyer, expected_utility_seller, interim_utilities_buyer, interim_utilities_seller,
    unclamped_expected_utility_buyer, unclamped_expected_utility_seller,
};

/// Uniform type supports of the buyer (`[l_b, h_b]`) and seller (`[l_s, h_s]`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarketSpec {
    pub l_b: f64,
    pub h_b: f64,
    pub l_s: f64,
    pub h_s: f64,
    #[serde(default = "default_k")]
    pub k: f64,
}

fn default_k() -> f64 {
    0.5
}

impl MarketSpec {
    pub fn new(l_b: f64, h_b: f64, l_s: f64, h_s: f64) -> Result<Self> {
        let spec = MarketSpec { l_b, h_b, l_s, h_s, k: 0.5 };
        spec.validate()?;
        Ok(spec)
    }

    /// Both types uniform on `[0, 1]`.
    pub fn unit() -> Self {
        MarketSpec { l_b: 0.0, h_b: 1.0, l_s: 0.0, h_s: 1.0, k: 0.5 }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.l_b, self.h_b, self.l_s, self.h_s, self.k];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("market spec values must be finite"));
        }
        if self.l_b >= self.h_b {
            return Err(Error::config(format!("buyer support requires l_b < h_b (got {} >= {})", self.l_b, self.h_b)));
        }
        if self.l_s >= self.h_s {
            return Err(Error::config(format!("seller support requires l_s < h_s (got {} >= {})", self.l_s, self.h_s)));
        }
        if self.l_b < 0.0 || self.l_s < 0.0 {
            return Err(Error::config("type supports must be non-negative (l_b >= 0, l_s >= 0)"));
        }
        if self.k != 0.5 {
            return Err(Error::config(format!("closed forms are only available for k = 0.5 (got {})", self.k)));
        }
        Ok(())
    }
}

impl FromStr for MarketSpec {
    type Err = Error;

    /// Parses `l_b,h_b,l_s,h_s`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>().map_err(|e| Error::config(format!("bad spec component {p:?}: {e}"))))
            .collect::<Result<_>>()?;
        match parts.as_slice() {
            &[l_b, h_b, l_s, h_s] => MarketSpec::new(l_b, h_b, l_s, h_s),
            _ => Err(Error::config(format!("spec needs four comma-separated values, got {}", parts.len()))),
        }
    }
}

impl fmt::Display for MarketSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{},{}", self.l_b, self.h_b, self.l_s, self.h_s)
    }
}

/// Which scale factors are tied together.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CaseTag {
    /// Buyer factors tied, seller factors tied.
    Case1,
    /// Buyer factors free, seller factors tied.
    Case2,
    /// Buyer factors tied, seller factors free.
    Case3,
    /// Both free.
    Case4,
}

impl CaseTag {
    pub const ALL: [CaseTag; 4] = [CaseTag::Case1, CaseTag::Case2, CaseTag::Case3, CaseTag::Case4];

    pub fn number(self) -> u8 {
        match self {
            CaseTag::Case1 => 1,
            CaseTag::Case2 => 2,
            CaseTag::Case3 => 3,
            CaseTag::Case4 => 4,
        }
    }

    pub fn buyer_tied(self) -> bool {
        matches!(self, CaseTag::Case1 | CaseTag::Case3)
    }

    pub fn seller_tied(self) -> bool {
        matches!(self, CaseTag::Case1 | CaseTag::Case2)
    }
}

impl fmt::Display for CaseTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "case{}", self.number())
    }
}

impl FromStr for CaseTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().trim_start_matches("case") {
            "1" => Ok(CaseTag::Case1),
            "2" => Ok(CaseTag::Case2),
            "3" => Ok(CaseTag::Case3),
            "4" => Ok(CaseTag::Case4),
            other => Err(Error::config(format!("unknown case {other:?} (expected 1-4)"))),
        }
    }
}

/// Buyer and seller scale factors.
///
/// Constructors check positivity and the ties implied by the case tag. The
/// ordering `alpha_b1 >= alpha_b2`, `alpha_s2 >= alpha_s1` (first bid meets
/// first ask) is checked separately by [`ScaleProfile::check_ordering`] since
/// some first-order roots violate it and still need to be reported.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleProfile {
    pub alpha_b1: f64,
    pub alpha_b2: f64,
    pub alpha_s1: f64,
    pub alpha_s2: f64,
    pub case: CaseTag,
}

impl ScaleProfile {
    pub fn new(case: CaseTag, alpha_b1: f64, alpha_b2: f64, alpha_s1: f64, alpha_s2: f64) -> Result<Self> {
        let p = ScaleProfile { alpha_b1, alpha_b2, alpha_s1, alpha_s2, case };
        if p.alphas().iter().any(|a| !a.is_finite() || *a <= 0.0) {
            return Err(Error::domain(format!("scale factors must be positive and finite: {:?}", p.alphas())));
        }
        if case.buyer_tied() && alpha_b1 != alpha_b2 {
            return Err(Error::domain(format!("{case} ties the buyer factors")));
        }
        if case.seller_tied() && alpha_s1 != alpha_s2 {
            return Err(Error::domain(format!("{case} ties the seller factors")));
        }
        Ok(p)
    }

    pub fn case1(alpha_b: f64, alpha_s: f64) -> Result<Self> {
        Self::new(CaseTag::Case1, alpha_b, alpha_b, alpha_s, alpha_s)
    }

    pub fn case2(alpha_b1: f64, alpha_b2: f64, alpha_s: f64) -> Result<Self> {
        Self::new(CaseTag::Case2, alpha_b1, alpha_b2, alpha_s, alpha_s)
    }

    pub fn case3(alpha_b: f64, alpha_s1: f64, alpha_s2: f64) -> Result<Self> {
        Self::new(CaseTag::Case3, alpha_b, alpha_b, alpha_s1, alpha_s2)
    }

    pub fn case4(alpha_b1: f64, alpha_b2: f64, alpha_s1: f64, alpha_s2: f64) -> Result<Self> {
        Self::new(CaseTag::Case4, alpha_b1, alpha_b2, alpha_s1, alpha_s2)
    }

    pub fn alphas(&self) -> [f64; 4] {
        [self.alpha_b1, self.alpha_b2, self.alpha_s1, self.alpha_s2]
    }

    pub fn with_buyer(&self, alpha_b1: f64, alpha_b2: f64) -> Self {
        ScaleProfile { alpha_b1, alpha_b2, ..*self }
    }

    pub fn with_seller(&self, alpha_s1: f64, alpha_s2: f64) -> Self {
        ScaleProfile { alpha_s1, alpha_s2, ..*self }
    }

    pub fn is_ordered(&self) -> bool {
        self.alpha_b1 >= self.alpha_b2 && self.alpha_s2 >= self.alpha_s1
    }

    pub fn check_ordering(&self) -> Result<()> {
        if self.alphas().iter().any(|a| !a.is_finite() || *a <= 0.0) {
            return Err(Error::Ordering(format!("scale factors must be positive: {:?}", self.alphas())));
        }
        if self.alpha_b1 < self.alpha_b2 {
            return Err(Error::Ordering(format!(
                "buyer needs alpha_b1 >= alpha_b2 (got {} < {})",
                self.alpha_b1, self.alpha_b2
            )));
        }
        if self.alpha_s2 < self.alpha_s1 {
            return Err(Error::Ordering(format!(
                "seller needs alpha_s2 >= alpha_s1 (got {} < {})",
                self.alpha_s2, self.alpha_s1
            )));
        }
        Ok(())
    }
}

/// Root of a case's first-order system.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BneSolution {
    pub profile: ScaleProfile,
    pub residuals: Vec<f64>,
    pub iterations: u32,
    pub converged: bool,
    /// Set when the root breaks the bid/ask ordering assumptions. Such roots
    /// are still returned so callers can inspect them.
    pub ordering_violation: Option<String>,
}

impl BneSolution {
    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().fold(0.0, |m, r| m.max(r.abs()))
    }

    pub fn is_valid(&self) -> bool {
        self.converged && self.ordering_violation.is_none()
    }
}
