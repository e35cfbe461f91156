//! Periodic day-ahead auction: every delivery slot is traded in a sequence
//! of 24 uniform-price double auctions, after which unmet demand is bought
//! at the balancing price.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::auction::{clear_auction, AuctionRules, ClearingResult, Order, Side, TraderId};
use crate::rng::{self, Rng};
use crate::strategies::{AuctionFeedback, BiddingStrategy, StrategyConfig, StrategyRegistry, TraderContext};
use crate::{Error, Result};

/// Auctions per delivery slot.
pub const PROXIMITIES: u32 = 24;

/// Seller ids start here so they never collide with buyer seats.
pub const SELLER_ID_BASE: u32 = 1000;

/// A group of identical sellers whose per-unit cost is redrawn every slot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SellerGroup {
    pub count: u32,
    pub strategy: StrategyConfig,
    /// Units each seller can deliver per slot.
    pub capacity: u32,
    pub cost_min: f64,
    pub cost_max: f64,
}

fn default_rules_k() -> f64 {
    0.5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PdaGameConfig {
    /// Buyer seats, in order.
    pub traders: Vec<StrategyConfig>,
    /// Units each buyer needs per delivery slot.
    pub demand_per_trader: u32,
    pub supply: Vec<SellerGroup>,
    pub balancing_price: f64,
    pub num_delivery_slots: u32,
    pub seed: u64,
    /// Random stream per buyer seat; defaults to the seat index plus one.
    #[serde(default)]
    pub trader_streams: Option<Vec<u64>>,
    #[serde(default = "default_rules_k")]
    pub k: f64,
}

impl PdaGameConfig {
    pub fn validate(&self) -> Result<()> {
        if self.traders.is_empty() {
            return Err(Error::config("a game needs at least one buyer"));
        }
        if !(self.balancing_price.is_finite() && self.balancing_price >= 0.0) {
            return Err(Error::config(format!("balancing price must be finite and non-negative, got {}", self.balancing_price)));
        }
        if self.num_delivery_slots == 0 {
            return Err(Error::config("need at least one delivery slot"));
        }
        for (i, g) in self.supply.iter().enumerate() {
            if !(g.cost_min.is_finite() && g.cost_max.is_finite() && 0.0 <= g.cost_min && g.cost_min <= g.cost_max) {
                return Err(Error::config(format!(
                    "seller group {i}: need 0 <= cost_min <= cost_max (got {}, {})",
                    g.cost_min, g.cost_max
                )));
            }
            g.strategy.validate()?;
        }
        for t in &self.traders {
            t.validate()?;
        }
        if let Some(streams) = &self.trader_streams {
            if streams.len() != self.traders.len() {
                return Err(Error::config("trader_streams must list one stream per trader"));
            }
        }
        AuctionRules::new(self.k, false)?;
        Ok(())
    }

    fn stream_of(&self, seat: usize) -> u64 {
        self.trader_streams.as_ref().map_or(seat as u64 + 1, |s| s[seat])
    }
}

/// One learner step, logged for replay and for the transition CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PdaTransition {
    pub game_id: u64,
    pub trader: u32,
    pub slot: u32,
    pub proximity: u32,
    /// Quantity still to buy before this auction.
    pub q: u32,
    pub theta: f64,
    pub action: Vec<f64>,
    /// Clearing price, zero when the auction did not clear.
    pub cp: f64,
    pub cq: u32,
    /// `-cp * cq`, minus `q' * theta` on the last auction of the slot.
    pub reward: f64,
    pub done: bool,
    pub next_q: u32,
}

/// Totals for one buyer over a game.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TraderMetrics {
    pub trader: u32,
    pub strategy: String,
    pub wholesale_units: u64,
    pub wholesale_cost: f64,
    pub balancing_units: u64,
    pub balancing_cost: f64,
    pub total_cost: f64,
    /// Units bought in the auctions.
    pub energy_bought: u64,
    /// Wholesale spend over wholesale units; absent when nothing cleared.
    pub avg_unit_clearing_price: Option<f64>,
    /// Total cost over all units including balancing.
    pub blended_unit_price: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SellerMetrics {
    pub trader: u32,
    pub units_sold: u64,
    pub revenue: f64,
}

/// Market-level record of one auction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuctionRecord {
    pub slot: u32,
    pub proximity: u32,
    pub price: Option<f64>,
    pub quantity: u64,
    /// Uncleared orders with trader ids removed: `(side, price, quantity)`.
    pub residual_book: Vec<(Side, f64, u32)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PdaGameResult {
    pub buyers: Vec<TraderMetrics>,
    pub sellers: Vec<SellerMetrics>,
    pub transitions: Vec<PdaTransition>,
    pub auctions: Vec<AuctionRecord>,
}

struct Seat {
    id: TraderId,
    side: Side,
    strategy: Box<dyn BiddingStrategy>,
    rng: Rng,
    theta: f64,
    capacity: u32,
    remaining: u32,
    last_price: Option<f64>,
}

/// A game in progress. Use [`run_pda_game`] to play one to the end.
pub struct PdaGame {
    config: PdaGameConfig,
    game_id: u64,
    rules: AuctionRules,
    buyers: Vec<Seat>,
    sellers: Vec<Seat>,
    seller_costs: Vec<(f64, f64)>,
    cost_rng: Rng,
    buyer_metrics: Vec<TraderMetrics>,
    seller_metrics: Vec<SellerMetrics>,
    transitions: Vec<PdaTransition>,
    auctions: Vec<AuctionRecord>,
}

impl PdaGame {
    pub fn new(config: PdaGameConfig, game_id: u64, registry: &StrategyRegistry) -> Result<Self> {
        config.validate()?;
        let theta = config.balancing_price;
        let mut buyers = Vec::with_capacity(config.traders.len());
        let mut buyer_metrics = Vec::with_capacity(config.traders.len());
        for (i, cfg) in config.traders.iter().enumerate() {
            let mut seat = Seat {
                id: TraderId(i as u32),
                side: Side::Bid,
                strategy: registry.build(cfg)?,
                rng: rng::stream(config.seed, config.stream_of(i)),
                theta,
                capacity: config.demand_per_trader,
                remaining: 0,
                last_price: None,
            };
            seat.strategy.begin_game(theta, &mut seat.rng);
            buyer_metrics.push(TraderMetrics {
                trader: i as u32,
                strategy: cfg.kind().to_string(),
                ..Default::default()
            });
            buyers.push(seat);
        }
        let mut sellers = Vec::new();
        let mut seller_costs = Vec::new();
        let mut seller_metrics = Vec::new();
        for group in &config.supply {
            for _ in 0..group.count {
                let n = sellers.len() as u32;
                let id = TraderId(SELLER_ID_BASE + n);
                let mut seat = Seat {
                    id,
                    side: Side::Ask,
                    strategy: registry.build(&group.strategy)?,
                    rng: rng::stream(config.seed, u64::from(SELLER_ID_BASE + n)),
                    theta: group.cost_min,
                    capacity: group.capacity,
                    remaining: 0,
                    last_price: None,
                };
                seat.strategy.begin_game(0.5 * (group.cost_min + group.cost_max), &mut seat.rng);
                sellers.push(seat);
                seller_costs.push((group.cost_min, group.cost_max));
                seller_metrics.push(SellerMetrics { trader: id.0, ..Default::default() });
            }
        }
        Ok(PdaGame {
            rules: AuctionRules::new(config.k, false)?,
            cost_rng: rng::stream(config.seed, 0),
            config,
            game_id,
            buyers,
            sellers,
            seller_costs,
            buyer_metrics,
            seller_metrics,
            transitions: Vec::new(),
            auctions: Vec::new(),
        })
    }

    /// Resets quantities for a new delivery slot and redraws seller costs.
    pub fn begin_slot(&mut self) {
        for b in &mut self.buyers {
            b.remaining = b.capacity;
        }
        for (s, &(lo, hi)) in self.sellers.iter_mut().zip(&self.seller_costs) {
            s.remaining = s.capacity;
            s.theta = if hi > lo { self.cost_rng.random_range(lo..=hi) } else { lo };
        }
    }

    /// Quantity still needed by each buyer.
    pub fn remaining(&self) -> Vec<u32> {
        self.buyers.iter().map(|b| b.remaining).collect()
    }

    fn collect(seats: &mut [Seat], proximity: u32, seq: &mut u64) -> Result<(Vec<Order>, Vec<Vec<Order>>)> {
        let mut book = Vec::new();
        let mut per_seat = Vec::with_capacity(seats.len());
        for seat in seats.iter_mut() {
            if seat.remaining == 0 {
                per_seat.push(Vec::new());
                continue;
            }
            let mut ctx = TraderContext {
                trader: seat.id,
                side: seat.side,
                true_type: seat.theta,
                remaining_quantity: seat.remaining,
                proximity,
                last_clearing_price: seat.last_price,
                rng: &mut seat.rng,
            };
            let mut orders = seat.strategy.orders(&mut ctx)?;
            let total: u64 = orders.iter().map(|o| u64::from(o.quantity)).sum();
            if total > u64::from(seat.remaining) {
                return Err(Error::domain(format!(
                    "{} offered {total} units with only {} remaining",
                    seat.strategy.name(),
                    seat.remaining
                )));
            }
            for o in &mut orders {
                if o.side != seat.side || o.trader != seat.id {
                    return Err(Error::domain(format!("{} emitted an order for another seat", seat.strategy.name())));
                }
                o.seq = *seq;
                *seq += 1;
            }
            book.extend(orders.iter().copied());
            per_seat.push(orders);
        }
        Ok((book, per_seat))
    }

    /// Runs one auction of `slot` at the given proximity.
    pub fn pda_step(&mut self, slot: u32, proximity: u32) -> Result<ClearingResult> {
        if !(1..=PROXIMITIES).contains(&proximity) {
            return Err(Error::domain(format!("proximity {proximity} outside [1, {PROXIMITIES}]")));
        }
        let mut seq = 0;
        let before: Vec<u32> = self.remaining();
        let (bids, bid_orders) = Self::collect(&mut self.buyers, proximity, &mut seq)?;
        let (asks, ask_orders) = Self::collect(&mut self.sellers, proximity, &mut seq)?;
        let result = clear_auction(&bids, &asks, &self.rules);
        let price = result.price;

        for (i, seat) in self.buyers.iter_mut().enumerate() {
            let filled = result.filled(seat.id, Side::Bid);
            if !bid_orders[i].is_empty() {
                seat.strategy.observe(&AuctionFeedback { price, filled, submitted: bid_orders[i].clone() });
            }
            seat.remaining -= filled;
            if price.is_some() {
                seat.last_price = price;
            }
            let m = &mut self.buyer_metrics[i];
            if let Some(p) = price {
                m.wholesale_units += u64::from(filled);
                m.wholesale_cost += p * f64::from(filled);
            }
            if before[i] > 0 {
                if let Some(action) = seat.strategy.last_action() {
                    let cp = price.filter(|_| filled > 0).unwrap_or(0.0);
                    let last = proximity == 1;
                    let mut reward = -cp * f64::from(filled);
                    if last {
                        reward -= f64::from(seat.remaining) * seat.theta;
                    }
                    self.transitions.push(PdaTransition {
                        game_id: self.game_id,
                        trader: seat.id.0,
                        slot,
                        proximity,
                        q: before[i],
                        theta: seat.theta,
                        action,
                        cp,
                        cq: filled,
                        reward,
                        done: last || seat.remaining == 0,
                        next_q: seat.remaining,
                    });
                }
            }
        }
        for (j, seat) in self.sellers.iter_mut().enumerate() {
            let filled = result.filled(seat.id, Side::Ask);
            if !ask_orders[j].is_empty() {
                seat.strategy.observe(&AuctionFeedback { price, filled, submitted: ask_orders[j].clone() });
            }
            seat.remaining -= filled;
            if price.is_some() {
                seat.last_price = price;
            }
            if let Some(p) = price {
                self.seller_metrics[j].units_sold += u64::from(filled);
                self.seller_metrics[j].revenue += p * f64::from(filled);
            }
        }
        self.auctions.push(AuctionRecord {
            slot,
            proximity,
            price,
            quantity: result.total_quantity,
            residual_book: result.uncleared_book.iter().map(|o| (o.side, o.price, o.quantity)).collect(),
        });
        Ok(result)
    }

    /// Buys unmet demand at the balancing price.
    pub fn settle_slot(&mut self) {
        for (seat, m) in self.buyers.iter_mut().zip(&mut self.buyer_metrics) {
            m.balancing_units += u64::from(seat.remaining);
            m.balancing_cost += f64::from(seat.remaining) * self.config.balancing_price;
            seat.remaining = 0;
        }
    }

    pub fn finish(mut self) -> PdaGameResult {
        for m in &mut self.buyer_metrics {
            m.total_cost = m.wholesale_cost + m.balancing_cost;
            m.energy_bought = m.wholesale_units;
            m.avg_unit_clearing_price = (m.wholesale_units > 0).then(|| m.wholesale_cost / m.wholesale_units as f64);
            let units = m.wholesale_units + m.balancing_units;
            m.blended_unit_price = (units > 0).then(|| m.total_cost / units as f64);
        }
        PdaGameResult {
            buyers: self.buyer_metrics,
            sellers: self.seller_metrics,
            transitions: self.transitions,
            auctions: self.auctions,
        }
    }
}

/// Plays every slot of a game through all proximities.
pub fn run_pda_game(config: &PdaGameConfig, game_id: u64, registry: &StrategyRegistry) -> Result<PdaGameResult> {
    let mut game = PdaGame::new(config.clone(), game_id, registry)?;
    for slot in 0..config.num_delivery_slots {
        game.begin_slot();
        for proximity in (1..=PROXIMITIES).rev() {
            if game.remaining().iter().all(|q| *q == 0) {
                break;
            }
            game.pda_step(slot, proximity)?;
        }
        game.settle_slot();
    }
    Ok(game.finish())
}
