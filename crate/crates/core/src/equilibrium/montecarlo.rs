//! Monte-Carlo oracle: realised utilities of sampled types pushed through the
//! clearing engine, and exhaustive grid best-response scans built on it.
//!
//! Samples are split into fixed-size shards; shard `i` draws from ChaCha
//! stream `i` of the given seed and the per-shard moments are merged in shard
//! order. Results therefore depend only on `(seed, samples)`. Shards may be
//! evaluated on several threads (`jobs`), which changes nothing but wall time.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{CaseTag, MarketSpec, ScaleProfile};
use crate::auction::{two_unit_clearing, two_unit_outcome, AuctionRules, Side, BUYER, SELLER};
use crate::{rng, Error, Result};

const SHARD: u64 = 1 << 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Buyer,
    Seller,
}

impl std::fmt::Display for Role {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Role::Buyer => "buyer",
            Role::Seller => "seller",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
    pub samples: u64,
}

/// Running mean / sum of squared deviations (Welford), mergeable.
#[derive(Clone, Copy, Debug, Default)]
struct Moments {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Moments {
    #[inline]
    fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    fn merge(self, other: Moments) -> Moments {
        if self.n == 0 {
            return other;
        }
        if other.n == 0 {
            return self;
        }
        let n = self.n + other.n;
        let delta = other.mean - self.mean;
        Moments {
            n,
            mean: self.mean + delta * other.n as f64 / n as f64,
            m2: self.m2 + other.m2 + delta * delta * (self.n as f64 * other.n as f64) / n as f64,
        }
    }

    fn estimate(self) -> Estimate {
        let std_error = if self.n > 1 { (self.m2 / (self.n - 1) as f64 / self.n as f64).sqrt() } else { 0.0 };
        Estimate { mean: self.mean, std_error, samples: self.n }
    }
}

fn shard_sizes(samples: u64) -> Vec<u64> {
    let full = samples / SHARD;
    let mut sizes = vec![SHARD; full as usize];
    if samples % SHARD != 0 {
        sizes.push(samples % SHARD);
    }
    sizes
}

fn draw_types(spec: &MarketSpec, seed: u64, shard: u64, count: u64) -> Vec<(f64, f64)> {
    let mut rng = rng::stream(seed, shard);
    (0..count)
        .map(|_| {
            let tb = spec.l_b + (spec.h_b - spec.l_b) * rng.random::<f64>();
            let ts = spec.l_s + (spec.h_s - spec.l_s) * rng.random::<f64>();
            (tb, ts)
        })
        .collect()
}

/// Evaluates `f` on every shard (in parallel when `jobs > 1`) and returns the
/// shard results in shard order.
fn map_shards<T, F>(sizes: &[u64], jobs: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64, u64) -> T + Sync,
{
    if jobs <= 1 || sizes.len() <= 1 {
        return sizes.iter().enumerate().map(|(i, &n)| f(i as u64, n)).collect();
    }
    let chunk = sizes.len().div_ceil(jobs);
    std::thread::scope(|scope| {
        let handles: Vec<_> = sizes
            .chunks(chunk)
            .enumerate()
            .map(|(c, part)| {
                let f = &f;
                scope.spawn(move || {
                    part.iter().enumerate().map(|(j, &n)| f((c * chunk + j) as u64, n)).collect::<Vec<T>>()
                })
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("shard worker panicked")).collect()
    })
}

fn check_samples(samples: u64) -> Result<()> {
    if samples == 0 {
        return Err(Error::config("Monte-Carlo estimation needs at least one sample"));
    }
    Ok(())
}

/// Estimates both roles' expected utilities from the same type draws, clearing
/// every draw through the order book ([`two_unit_outcome`]).
pub fn estimate_expected_utilities(
    profile: &ScaleProfile,
    spec: &MarketSpec,
    samples: u64,
    seed: u64,
    jobs: usize,
) -> Result<(Estimate, Estimate)> {
    check_samples(samples)?;
    spec.validate()?;
    profile.check_ordering()?;
    let rules = AuctionRules::acpr();
    let shards = map_shards(&shard_sizes(samples), jobs, |shard, n| -> Result<(Moments, Moments)> {
        let (mut buyer, mut seller) = (Moments::default(), Moments::default());
        for (tb, ts) in draw_types(spec, seed, shard, n) {
            let result = two_unit_outcome(tb, ts, profile, &rules)?;
            let (ub, us) = match result.price {
                Some(price) => (
                    (tb - price) * f64::from(result.filled(BUYER, Side::Bid)),
                    (price - ts) * f64::from(result.filled(SELLER, Side::Ask)),
                ),
                None => (0.0, 0.0),
            };
            buyer.push(ub);
            seller.push(us);
        }
        Ok((buyer, seller))
    });
    let mut buyer = Moments::default();
    let mut seller = Moments::default();
    for shard in shards {
        let (b, s) = shard?;
        buyer = buyer.merge(b);
        seller = seller.merge(s);
    }
    Ok((buyer.estimate(), seller.estimate()))
}

pub fn estimate_expected_utility(
    role: Role,
    profile: &ScaleProfile,
    spec: &MarketSpec,
    samples: u64,
    seed: u64,
) -> Result<Estimate> {
    let (b, s) = estimate_expected_utilities(profile, spec, samples, seed, 1)?;
    Ok(match role {
        Role::Buyer => b,
        Role::Seller => s,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanOptions {
    pub step: f64,
    pub samples: u64,
    pub seed: u64,
    /// Largest buyer factor on the grid.
    pub buyer_max: f64,
    /// Largest seller factor on the grid.
    pub seller_max: f64,
    /// Scan a single shared factor instead of an ordered pair.
    pub tied: bool,
    pub jobs: usize,
}

impl Default for ScanOptions {
    fn default() -> Self {
        ScanOptions { step: 0.01, samples: 100_000, seed: 0, buyer_max: 1.0, seller_max: 2.0, tied: true, jobs: 1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanResult {
    pub role: Role,
    /// `(alpha_1, alpha_2)` of the best grid point; equal when tied.
    pub best_alphas: [f64; 2],
    pub best: Estimate,
    pub points: usize,
}

/// Pre-drawn types shared by every grid point (common random numbers).
struct Panel {
    types: Vec<Vec<(f64, f64)>>,
}

impl Panel {
    fn new(spec: &MarketSpec, samples: u64, seed: u64) -> Self {
        let types = shard_sizes(samples)
            .iter()
            .enumerate()
            .map(|(i, &n)| draw_types(spec, seed, i as u64, n))
            .collect();
        Panel { types }
    }

    fn evaluate(&self, role: Role, profile: &ScaleProfile) -> Estimate {
        let rules = AuctionRules::acpr();
        self.types
            .iter()
            .map(|shard| {
                let mut m = Moments::default();
                for &(tb, ts) in shard {
                    let out = two_unit_clearing(tb, ts, profile, &rules);
                    let u = match (out.quantity, role) {
                        (0, _) => 0.0,
                        (_, Role::Buyer) => out.buyer_utility(tb),
                        (_, Role::Seller) => out.seller_utility(ts),
                    };
                    m.push(u);
                }
                m
            })
            .fold(Moments::default(), Moments::merge)
            .estimate()
    }
}

fn grid(step: f64, max: f64) -> Vec<f64> {
    let n = (max / step + 1e-9).floor() as usize;
    (1..=n).map(|i| i as f64 * step).collect()
}

fn deviation(role: Role, base: &ScaleProfile, a1: f64, a2: f64) -> ScaleProfile {
    match role {
        Role::Buyer => base.with_buyer(a1, a2),
        Role::Seller => base.with_seller(a1, a2),
    }
}

fn candidate_pairs(role: Role, opts: &ScanOptions) -> Vec<(f64, f64)> {
    let max = match role {
        Role::Buyer => opts.buyer_max,
        Role::Seller => opts.seller_max,
    };
    let g = grid(opts.step, max);
    if opts.tied {
        return g.iter().map(|&a| (a, a)).collect();
    }
    // buyer: first bid is the higher one; seller: first ask is the lower one
    let mut pairs = Vec::new();
    for (i, &a) in g.iter().enumerate() {
        for &b in &g[..=i] {
            pairs.push(match role {
                Role::Buyer => (a, b),
                Role::Seller => (b, a),
            });
        }
    }
    pairs
}

fn scan_with_panel(role: Role, fixed: &ScaleProfile, opts: &ScanOptions, panel: &Panel) -> ScanResult {
    let pairs = candidate_pairs(role, opts);
    let values = map_shards(&vec![1; pairs.len()], opts.jobs, |i, _| {
        let (a1, a2) = pairs[i as usize];
        panel.evaluate(role, &deviation(role, fixed, a1, a2))
    });
    let (best_idx, best) = values
        .iter()
        .enumerate()
        .fold((0, values[0]), |(bi, bv), (i, v)| if v.mean > bv.mean { (i, *v) } else { (bi, bv) });
    let (a1, a2) = pairs[best_idx];
    ScanResult { role, best_alphas: [a1, a2], best, points: pairs.len() }
}

/// Exhaustive grid search over `role`'s scale factors with the opponent's
/// factors held at `fixed`. Every grid point is evaluated on the same sampled
/// types.
pub fn best_response_scan(role: Role, fixed: &ScaleProfile, spec: &MarketSpec, opts: &ScanOptions) -> Result<ScanResult> {
    check_samples(opts.samples)?;
    spec.validate()?;
    if !(opts.step > 0.0) || !opts.step.is_finite() {
        return Err(Error::config(format!("grid step must be positive, got {}", opts.step)));
    }
    if grid(opts.step, opts.buyer_max.max(opts.seller_max)).is_empty() {
        return Err(Error::config("grid is empty"));
    }
    let panel = Panel::new(spec, opts.samples, opts.seed);
    if candidate_pairs(role, opts).is_empty() {
        return Err(Error::config(format!("grid for the {role} is empty")));
    }
    Ok(scan_with_panel(role, fixed, opts, &panel))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoleCertificate {
    pub role: Role,
    /// Utility at the candidate profile, on the scan's samples.
    pub reference: Estimate,
    pub scan: ScanResult,
    pub gain: f64,
    /// `gain / reference.std_error`.
    pub gain_in_std_errors: f64,
    pub certified: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certification {
    pub case: CaseTag,
    pub profile: ScaleProfile,
    pub buyer: RoleCertificate,
    pub seller: RoleCertificate,
}

impl Certification {
    pub fn certified(&self) -> bool {
        self.buyer.certified && self.seller.certified
    }

    pub fn max_gain_in_std_errors(&self) -> f64 {
        self.buyer.gain_in_std_errors.max(self.seller.gain_in_std_errors)
    }
}

/// Scans both roles at `profile`, each over the factors its case leaves free,
/// and flags any deviation gaining more than `threshold` standard errors.
pub fn certify(profile: &ScaleProfile, spec: &MarketSpec, opts: &ScanOptions, threshold: f64) -> Result<Certification> {
    check_samples(opts.samples)?;
    spec.validate()?;
    let panel = Panel::new(spec, opts.samples, opts.seed);
    let role_cert = |role: Role, tied: bool| {
        let role_opts = ScanOptions { tied, ..*opts };
        let reference = panel.evaluate(role, profile);
        let scan = scan_with_panel(role, profile, &role_opts, &panel);
        let gain = scan.best.mean - reference.mean;
        let gain_in_std_errors = if reference.std_error > 0.0 {
            gain / reference.std_error
        } else if gain > 0.0 {
            f64::INFINITY
        } else {
            0.0
        };
        RoleCertificate { role, reference, scan, gain, gain_in_std_errors, certified: gain_in_std_errors <= threshold }
    };
    Ok(Certification {
        case: profile.case,
        profile: *profile,
        buyer: role_cert(Role::Buyer, profile.case.buyer_tied()),
        seller: role_cert(Role::Seller, profile.case.seller_tied()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibrium::{expected_utility_buyer, expected_utility_seller};

    #[test]
    fn non_crossing_profile_has_zero_utility() {
        let spec = MarketSpec::new(0.0, 1.0, 0.5, 1.0).unwrap();
        let p = ScaleProfile::case1(0.4, 1.5).unwrap();
        let e = estimate_expected_utility(Role::Buyer, &p, &spec, 5000, 3).unwrap();
        assert_eq!((e.mean, e.std_error), (0.0, 0.0));
    }

    #[test]
    fn estimates_are_deterministic_and_job_independent() {
        let p = ScaleProfile::case2(0.8, 0.5, 1.1).unwrap();
        let spec = MarketSpec::unit();
        let a = estimate_expected_utilities(&p, &spec, 200_000, 11, 1).unwrap();
        let b = estimate_expected_utilities(&p, &spec, 200_000, 11, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.0, estimate_expected_utility(Role::Buyer, &p, &spec, 200_000, 11).unwrap());
    }

    #[test]
    fn estimate_agrees_with_closed_form() {
        let p = ScaleProfile::case1(2.0 / 3.0, 1.0).unwrap();
        let spec = MarketSpec::unit();
        let (b, s) = estimate_expected_utilities(&p, &spec, 400_000, 5, 1).unwrap();
        let ub = expected_utility_buyer(&p, &spec).unwrap();
        let us = expected_utility_seller(&p, &spec).unwrap();
        assert!((b.mean - ub).abs() < 4.0 * b.std_error, "{b:?} vs {ub}");
        assert!((s.mean - us).abs() < 4.0 * s.std_error, "{s:?} vs {us}");
    }

    #[test]
    fn zero_samples_rejected() {
        let p = ScaleProfile::case1(0.5, 1.0).unwrap();
        assert!(estimate_expected_utility(Role::Buyer, &p, &MarketSpec::unit(), 0, 0).is_err());
        let opts = ScanOptions { samples: 0, ..Default::default() };
        assert!(best_response_scan(Role::Buyer, &p, &MarketSpec::unit(), &opts).is_err());
        let opts = ScanOptions { step: 0.0, ..Default::default() };
        assert!(best_response_scan(Role::Buyer, &p, &MarketSpec::unit(), &opts).is_err());
    }

    #[test]
    fn single_point_grid_returns_that_point() {
        let p = ScaleProfile::case1(2.0 / 3.0, 1.0).unwrap();
        let opts = ScanOptions { step: 2.0 / 3.0, samples: 1000, ..Default::default() };
        let r = best_response_scan(Role::Buyer, &p, &MarketSpec::unit(), &opts).unwrap();
        assert_eq!(r.points, 1);
        assert_eq!(r.best_alphas, [2.0 / 3.0, 2.0 / 3.0]);
    }

    #[test]
    fn ordered_pairs_respect_role_ordering() {
        let opts = ScanOptions { step: 0.5, tied: false, ..Default::default() };
        for (a1, a2) in candidate_pairs(Role::Buyer, &opts) {
            assert!(a1 >= a2);
        }
        let pairs = candidate_pairs(Role::Seller, &opts);
        assert_eq!(pairs.len(), 10);
        assert!(pairs.iter().all(|(s1, s2)| s2 >= s1));
    }

    #[test]
    fn buyer_scan_finds_two_thirds() {
        let p = ScaleProfile::case1(2.0 / 3.0, 1.0).unwrap();
        let opts = ScanOptions { step: 0.01, samples: 1_000_000, seed: 9, ..Default::default() };
        let r = best_response_scan(Role::Buyer, &p, &MarketSpec::unit(), &opts).unwrap();
        assert!((r.best_alphas[0] - 2.0 / 3.0).abs() <= 0.01 + 1e-12, "{r:?}");
        assert!(r.best.mean <= 2.0 / 9.0 + 3.0 * r.best.std_error);
    }
}
