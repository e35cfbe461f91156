//! Bidding strategies.
//!
//! Every strategy turns a [`TraderContext`] into a list of orders for the
//! next auction. Strategies are created from a [`StrategyConfig`] through a
//! [`StrategyRegistry`], which maps the config's kind name to a factory.

mod zip;

use std::collections::BTreeMap;
use std::fmt;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::auction::{Order, Side, TraderId};
use crate::rng::Rng;
use crate::{Error, Result};

pub use zip::{zip_orders, zip_update, ZipState, ZipStrategy};

/// What a trader knows when it is asked for orders.
pub struct TraderContext<'a> {
    pub trader: TraderId,
    pub side: Side,
    /// Per-unit valuation (buyers) or cost (sellers).
    pub true_type: f64,
    pub remaining_quantity: u32,
    /// Auctions left before delivery, counting this one.
    pub proximity: u32,
    pub last_clearing_price: Option<f64>,
    pub rng: &'a mut Rng,
}

impl TraderContext<'_> {
    pub fn validate(&self) -> Result<()> {
        if !self.true_type.is_finite() || self.true_type < 0.0 {
            return Err(Error::domain(format!("true type must be finite and non-negative, got {}", self.true_type)));
        }
        if self.proximity > 24 {
            return Err(Error::domain(format!("proximity {} outside [0, 24]", self.proximity)));
        }
        Ok(())
    }
}

/// Result of one auction as seen by a single trader.
#[derive(Clone, Debug, PartialEq)]
pub struct AuctionFeedback {
    /// Uniform clearing price, `None` if the auction did not clear.
    pub price: Option<f64>,
    /// Units this trader traded.
    pub filled: u32,
    /// The orders this trader submitted.
    pub submitted: Vec<Order>,
}

pub trait BiddingStrategy: Send {
    fn name(&self) -> &'static str;

    /// Called once per game before the first auction.
    fn begin_game(&mut self, _true_type: f64, _rng: &mut Rng) {}

    fn orders(&mut self, ctx: &mut TraderContext<'_>) -> Result<Vec<Order>>;

    fn observe(&mut self, _feedback: &AuctionFeedback) {}

    /// Raw action behind the last orders, for strategies that learn.
    fn last_action(&self) -> Option<Vec<f64>> {
        None
    }
}

fn default_delta() -> f64 {
    0.01
}

/// Strategy selection as read from experiment configs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StrategyConfig {
    /// One order per scale factor at `alpha * theta`.
    ScaleBased { alphas: Vec<f64> },
    /// One order at a uniform random price. Bounds default to `[0, 2 theta]`.
    Zi {
        #[serde(default)]
        min_price: Option<f64>,
        #[serde(default)]
        max_price: Option<f64>,
    },
    /// Margin-adapting trader. `mu` is drawn from `[mu_min, mu_max]` at game
    /// start, defaulting to `[theta / 2, theta]`; `delta` is the margin step
    /// as a fraction of `mu`.
    Zip {
        #[serde(default)]
        mu_min: Option<f64>,
        #[serde(default)]
        mu_max: Option<f64>,
        #[serde(default = "default_delta")]
        delta: f64,
    },
    /// Bids or asks the true type.
    Truthful,
    /// Learned policy loaded from a checkpoint.
    Ddpg {
        #[serde(default)]
        checkpoint: Option<String>,
    },
}

impl StrategyConfig {
    /// Registry key of this config.
    pub fn kind(&self) -> &'static str {
        match self {
            StrategyConfig::ScaleBased { .. } => "scale_based",
            StrategyConfig::Zi { .. } => "zi",
            StrategyConfig::Zip { .. } => "zip",
            StrategyConfig::Truthful => "truthful",
            StrategyConfig::Ddpg { .. } => "ddpg",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            StrategyConfig::ScaleBased { alphas } => {
                if alphas.is_empty() {
                    return Err(Error::config("scale_based needs at least one alpha"));
                }
                if alphas.iter().any(|a| !a.is_finite() || *a <= 0.0) {
                    return Err(Error::config(format!("scale_based alphas must be positive, got {alphas:?}")));
                }
            }
            StrategyConfig::Zi { min_price, max_price } => {
                if let (Some(lo), Some(hi)) = (min_price, max_price) {
                    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                        return Err(Error::config(format!("zi requires min_price < max_price (got {lo}, {hi})")));
                    }
                }
                if min_price.is_some_and(|v| v < 0.0) {
                    return Err(Error::config("zi min_price must be non-negative"));
                }
            }
            StrategyConfig::Zip { mu_min, mu_max, delta } => {
                if !(delta.is_finite() && *delta > 0.0 && *delta < 1.0) {
                    return Err(Error::config(format!("zip delta must lie in (0, 1), got {delta}")));
                }
                if let (Some(lo), Some(hi)) = (mu_min, mu_max) {
                    if !(0.0 < *lo && lo <= hi) {
                        return Err(Error::config(format!("zip requires 0 < mu_min <= mu_max (got {lo}, {hi})")));
                    }
                }
            }
            StrategyConfig::Truthful | StrategyConfig::Ddpg { .. } => {}
        }
        Ok(())
    }
}

impl fmt::Display for StrategyConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.kind())
    }
}

/// Splits `quantity` over `n` orders; sizes differ by at most one, larger first.
pub fn split_quantity(quantity: u32, n: usize) -> Vec<u32> {
    if n == 0 {
        return Vec::new();
    }
    let base = quantity / n as u32;
    let extra = (quantity % n as u32) as usize;
    (0..n).map(|i| base + u32::from(i < extra)).collect()
}

/// One order per scale factor at `alpha * theta`, quantity split evenly.
pub fn scale_based_orders(ctx: &TraderContext<'_>, alphas: &[f64], side: Side) -> Result<Vec<Order>> {
    if alphas.is_empty() {
        return Err(Error::domain("scale-based bidding needs at least one alpha"));
    }
    let mut orders = Vec::with_capacity(alphas.len());
    for (alpha, q) in alphas.iter().zip(split_quantity(ctx.remaining_quantity, alphas.len())) {
        if q > 0 {
            orders.push(Order::new(ctx.trader, side, alpha * ctx.true_type, q, 0)?);
        }
    }
    Ok(orders)
}

/// A single order for the whole remaining quantity at a price drawn
/// uniformly from `[min_price, max_price]`.
pub fn zi_orders(ctx: &mut TraderContext<'_>, min_price: f64, max_price: f64) -> Result<Vec<Order>> {
    if !(min_price < max_price) {
        return Err(Error::domain(format!("zi requires min_price < max_price (got {min_price}, {max_price})")));
    }
    if ctx.remaining_quantity == 0 {
        return Ok(Vec::new());
    }
    let price = ctx.rng.random_range(min_price..=max_price);
    Ok(vec![Order::new(ctx.trader, ctx.side, price, ctx.remaining_quantity, 0)?])
}

pub struct ScaleBasedStrategy {
    pub alphas: Vec<f64>,
}

impl BiddingStrategy for ScaleBasedStrategy {
    fn name(&self) -> &'static str {
        "scale_based"
    }

    fn orders(&mut self, ctx: &mut TraderContext<'_>) -> Result<Vec<Order>> {
        scale_based_orders(ctx, &self.alphas, ctx.side)
    }
}

pub struct ZiStrategy {
    pub min_price: Option<f64>,
    pub max_price: Option<f64>,
}

impl BiddingStrategy for ZiStrategy {
    fn name(&self) -> &'static str {
        "zi"
    }

    fn orders(&mut self, ctx: &mut TraderContext<'_>) -> Result<Vec<Order>> {
        let lo = self.min_price.unwrap_or(0.0);
        let hi = self.max_price.unwrap_or(2.0 * ctx.true_type);
        zi_orders(ctx, lo, hi)
    }
}

pub struct TruthfulStrategy;

impl BiddingStrategy for TruthfulStrategy {
    fn name(&self) -> &'static str {
        "truthful"
    }

    fn orders(&mut self, ctx: &mut TraderContext<'_>) -> Result<Vec<Order>> {
        if ctx.remaining_quantity == 0 {
            return Ok(Vec::new());
        }
        Ok(vec![Order::new(ctx.trader, ctx.side, ctx.true_type, ctx.remaining_quantity, 0)?])
    }
}

pub type StrategyFactory = Box<dyn Fn(&StrategyConfig) -> Result<Box<dyn BiddingStrategy>> + Send + Sync>;

/// Strategy factories keyed by [`StrategyConfig::kind`].
#[derive(Default)]
pub struct StrategyRegistry {
    factories: BTreeMap<String, StrategyFactory>,
}

impl StrategyRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registry with the built-in scale-based, ZI, ZIP and truthful strategies.
    pub fn standard() -> Self {
        let mut reg = Self::new();
        reg.register("scale_based", |cfg| match cfg {
            StrategyConfig::ScaleBased { alphas } => Ok(Box::new(ScaleBasedStrategy { alphas: alphas.clone() })),
            _ => Err(mismatch("scale_based", cfg)),
        });
        reg.register("zi", |cfg| match cfg {
            StrategyConfig::Zi { min_price, max_price } => {
                Ok(Box::new(ZiStrategy { min_price: *min_price, max_price: *max_price }))
            }
            _ => Err(mismatch("zi", cfg)),
        });
        reg.register("zip", |cfg| match cfg {
            StrategyConfig::Zip { mu_min, mu_max, delta } => Ok(Box::new(ZipStrategy::new(*mu_min, *mu_max, *delta))),
            _ => Err(mismatch("zip", cfg)),
        });
        reg.register("truthful", |_| Ok(Box::new(TruthfulStrategy)));
        reg
    }

    pub fn register<F>(&mut self, name: &str, factory: F)
    where
        F: Fn(&StrategyConfig) -> Result<Box<dyn BiddingStrategy>> + Send + Sync + 'static,
    {
        self.factories.insert(name.to_string(), Box::new(factory));
    }

    pub fn build(&self, cfg: &StrategyConfig) -> Result<Box<dyn BiddingStrategy>> {
        cfg.validate()?;
        let factory = self
            .factories
            .get(cfg.kind())
            .ok_or_else(|| Error::config(format!("no strategy registered under {:?}", cfg.kind())))?;
        factory(cfg)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }
}

fn mismatch(name: &str, cfg: &StrategyConfig) -> Error {
    Error::config(format!("factory {name:?} cannot build a {} strategy", cfg.kind()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn ctx(rng: &mut Rng, theta: f64, q: u32) -> TraderContext<'_> {
        TraderContext {
            trader: TraderId(3),
            side: Side::Bid,
            true_type: theta,
            remaining_quantity: q,
            proximity: 24,
            last_clearing_price: None,
            rng,
        }
    }

    #[test]
    fn scale_based_examples() {
        let mut r = rng::seeded(0);
        let orders = scale_based_orders(&ctx(&mut r, 0.8, 2), &[0.9, 0.6], Side::Bid).unwrap();
        let got: Vec<_> = orders.iter().map(|o| (o.price, o.quantity)).collect();
        assert_eq!(got, vec![(0.9 * 0.8, 1), (0.6 * 0.8, 1)]);
        assert!((orders[0].price - 0.72).abs() < 1e-15 && (orders[1].price - 0.48).abs() < 1e-15);

        let orders = scale_based_orders(&ctx(&mut r, 0.8, 3), &[0.9, 0.6], Side::Bid).unwrap();
        assert_eq!(orders.iter().map(|o| o.quantity).collect::<Vec<_>>(), vec![2, 1]);
        assert!(scale_based_orders(&ctx(&mut r, 0.8, 0), &[0.9, 0.6], Side::Bid).unwrap().is_empty());
        assert!(scale_based_orders(&ctx(&mut r, 0.8, 1), &[], Side::Bid).is_err());
    }

    #[test]
    fn single_unit_goes_to_first_factor() {
        let mut r = rng::seeded(0);
        let orders = scale_based_orders(&ctx(&mut r, 1.0, 1), &[0.9, 0.6], Side::Bid).unwrap();
        assert_eq!(orders.len(), 1);
        assert_eq!(orders[0].price, 0.9);
    }

    #[test]
    fn zi_examples() {
        let mut r = rng::seeded(11);
        let orders = zi_orders(&mut ctx(&mut r, 1.0, 5), 0.2, 0.7).unwrap();
        assert_eq!(orders.len(), 1);
        assert_eq!(orders[0].quantity, 5);
        assert!((0.2..=0.7).contains(&orders[0].price));
        assert!(zi_orders(&mut ctx(&mut r, 1.0, 0), 0.2, 0.7).unwrap().is_empty());

        let mut a = rng::seeded(5);
        let mut b = rng::seeded(5);
        let pa = zi_orders(&mut ctx(&mut a, 1.0, 2), 0.0, 1.0).unwrap()[0].price;
        let pb = zi_orders(&mut ctx(&mut b, 1.0, 2), 0.0, 1.0).unwrap()[0].price;
        assert_eq!(pa, pb);
    }

    #[test]
    fn zi_default_bounds_scale_with_theta() {
        let mut s = ZiStrategy { min_price: None, max_price: None };
        let mut r = rng::seeded(2);
        for _ in 0..200 {
            let o = s.orders(&mut ctx(&mut r, 0.4, 1)).unwrap();
            assert!((0.0..=0.8).contains(&o[0].price));
        }
    }

    #[test]
    fn truthful_bids_type() {
        let mut r = rng::seeded(0);
        let o = TruthfulStrategy.orders(&mut ctx(&mut r, 0.3, 4)).unwrap();
        assert_eq!((o[0].price, o[0].quantity), (0.3, 4));
    }

    #[test]
    fn registry_builds_by_kind() {
        let reg = StrategyRegistry::standard();
        assert_eq!(reg.names().collect::<Vec<_>>(), vec!["scale_based", "truthful", "zi", "zip"]);
        let s = reg.build(&StrategyConfig::Zi { min_price: Some(0.0), max_price: Some(1.0) }).unwrap();
        assert_eq!(s.name(), "zi");
        let err = reg.build(&StrategyConfig::Ddpg { checkpoint: None }).err().unwrap();
        assert!(err.to_string().contains("ddpg"));
        assert!(reg.build(&StrategyConfig::Zi { min_price: Some(1.0), max_price: Some(1.0) }).is_err());
        assert!(reg.build(&StrategyConfig::ScaleBased { alphas: vec![0.5, -0.1] }).is_err());
    }

    #[test]
    fn config_json_roundtrip() {
        let json = r#"[{"kind":"zi","min_price":0,"max_price":2},{"kind":"zip"},{"kind":"truthful"},
                       {"kind":"scale_based","alphas":[0.6,0.5]}]"#;
        let cfgs: Vec<StrategyConfig> = serde_json::from_str(json).unwrap();
        assert_eq!(cfgs[1], StrategyConfig::Zip { mu_min: None, mu_max: None, delta: 0.01 });
        let back: Vec<StrategyConfig> = serde_json::from_str(&serde_json::to_string(&cfgs).unwrap()).unwrap();
        assert_eq!(back, cfgs);
    }

    #[test]
    fn split_is_balanced() {
        assert_eq!(split_quantity(7, 3), vec![3, 2, 2]);
        assert_eq!(split_quantity(1, 2), vec![1, 0]);
        assert!(split_quantity(4, 0).is_empty());
    }
}
