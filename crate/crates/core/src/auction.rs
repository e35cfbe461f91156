//! Multi-unit k-double auction with uniform pricing.
//!
//! Orders are conceptually expanded into unit lots. Bid lots are ranked by
//! descending price and ask lots by ascending price (ties go to the earlier
//! `seq`, then the smaller trader id). Lots are matched greedily while the bid
//! crosses the ask, and every matched unit trades at
//! `k * last_bid + (1 - k) * last_ask`, where the last pair is the marginal
//! (least competitive) matched bid/ask.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::equilibrium::ScaleProfile;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TraderId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Side {
    Bid,
    Ask,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Order {
    pub trader: TraderId,
    pub side: Side,
    pub price: f64,
    pub quantity: u32,
    pub seq: u64,
}

impl Order {
    pub fn new(trader: TraderId, side: Side, price: f64, quantity: u32, seq: u64) -> Result<Self> {
        let order = Order { trader, side, price, quantity, seq };
        order.validate()?;
        Ok(order)
    }

    pub fn bid(trader: TraderId, price: f64, quantity: u32, seq: u64) -> Result<Self> {
        Self::new(trader, Side::Bid, price, quantity, seq)
    }

    pub fn ask(trader: TraderId, price: f64, quantity: u32, seq: u64) -> Result<Self> {
        Self::new(trader, Side::Ask, price, quantity, seq)
    }

    pub fn validate(&self) -> Result<()> {
        if self.quantity == 0 {
            return Err(Error::InvalidOrder(format!("zero quantity from trader {}", self.trader.0)));
        }
        if !self.price.is_finite() {
            return Err(Error::InvalidOrder(format!("non-finite price {}", self.price)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuctionRules {
    pub k: f64,
    pub clear_on_equality: bool,
}

impl AuctionRules {
    pub fn new(k: f64, clear_on_equality: bool) -> Result<Self> {
        if !(0.0..=1.0).contains(&k) {
            return Err(Error::config(format!("k must lie in [0, 1], got {k}")));
        }
        Ok(AuctionRules { k, clear_on_equality })
    }

    /// Average clearing price rule (k = 0.5).
    pub fn acpr() -> Self {
        AuctionRules { k: 0.5, clear_on_equality: true }
    }

    #[inline]
    fn crosses(&self, bid: f64, ask: f64) -> bool {
        if self.clear_on_equality {
            bid >= ask
        } else {
            bid > ask
        }
    }

    /// Rounding can push the weighted mean just outside the marginal pair.
    #[inline]
    fn price(&self, bid: f64, ask: f64) -> f64 {
        (self.k * bid + (1.0 - self.k) * ask).clamp(ask, bid)
    }
}

impl Default for AuctionRules {
    fn default() -> Self {
        Self::acpr()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fill {
    pub trader: TraderId,
    pub side: Side,
    pub quantity: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClearingResult {
    pub cleared: bool,
    pub price: Option<f64>,
    pub total_quantity: u64,
    pub fills: Vec<Fill>,
    pub uncleared_book: Vec<Order>,
}

impl ClearingResult {
    fn empty(bids: &[Order], asks: &[Order]) -> Self {
        ClearingResult {
            cleared: false,
            price: None,
            total_quantity: 0,
            fills: Vec::new(),
            uncleared_book: bids.iter().chain(asks).copied().collect(),
        }
    }

    /// Units filled for `trader` on `side`.
    pub fn filled(&self, trader: TraderId, side: Side) -> u32 {
        self.fills
            .iter()
            .filter(|f| f.trader == trader && f.side == side)
            .map(|f| f.quantity)
            .sum()
    }

    pub fn side_volume(&self, side: Side) -> u64 {
        self.fills.iter().filter(|f| f.side == side).map(|f| u64::from(f.quantity)).sum()
    }
}

/// Outcome of the greedy lot matching: traded units and the marginal pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cross {
    pub quantity: u64,
    pub marginal_bid: f64,
    pub marginal_ask: f64,
    pub price: f64,
}

/// Greedy matching over price ladders already sorted by priority
/// (`bids` descending, `asks` ascending). Each item is `(price, units)`.
///
/// This is the matching kernel shared by [`clear_auction`] and the
/// allocation-free [`two_unit_clearing`].
pub fn cross_ladders<B, A>(bids: B, asks: A, rules: &AuctionRules) -> Option<Cross>
where
    B: IntoIterator<Item = (f64, u32)>,
    A: IntoIterator<Item = (f64, u32)>,
{
    let mut bids = bids.into_iter().filter(|&(_, q)| q > 0);
    let mut asks = asks.into_iter().filter(|&(_, q)| q > 0);
    let (mut bid_price, mut bid_left) = bids.next()?;
    let (mut ask_price, mut ask_left) = asks.next()?;
    let mut quantity = 0u64;
    let mut marginal = None;
    while rules.crosses(bid_price, ask_price) {
        let units = bid_left.min(ask_left);
        quantity += u64::from(units);
        marginal = Some((bid_price, ask_price));
        bid_left -= units;
        ask_left -= units;
        if bid_left == 0 {
            match bids.next() {
                Some((p, q)) => (bid_price, bid_left) = (p, q),
                None => break,
            }
        }
        if ask_left == 0 {
            match asks.next() {
                Some((p, q)) => (ask_price, ask_left) = (p, q),
                None => break,
            }
        }
    }
    marginal.map(|(marginal_bid, marginal_ask)| Cross {
        quantity,
        marginal_bid,
        marginal_ask,
        price: rules.price(marginal_bid, marginal_ask),
    })
}

fn bid_priority(a: &Order, b: &Order) -> Ordering {
    b.price
        .total_cmp(&a.price)
        .then(a.seq.cmp(&b.seq))
        .then(a.trader.cmp(&b.trader))
}

fn ask_priority(a: &Order, b: &Order) -> Ordering {
    a.price
        .total_cmp(&b.price)
        .then(a.seq.cmp(&b.seq))
        .then(a.trader.cmp(&b.trader))
}

/// Clears one sealed-bid round. Empty sides (or no crossing pair) give an
/// uncleared result with the whole book left resting.
pub fn clear_auction(bids: &[Order], asks: &[Order], rules: &AuctionRules) -> ClearingResult {
    debug_assert!(bids.iter().chain(asks).all(|o| o.validate().is_ok()));

    let mut bids: Vec<Order> = bids.to_vec();
    let mut asks: Vec<Order> = asks.to_vec();
    bids.sort_by(bid_priority);
    asks.sort_by(ask_priority);

    let Some(cross) = cross_ladders(
        bids.iter().map(|o| (o.price, o.quantity)),
        asks.iter().map(|o| (o.price, o.quantity)),
        rules,
    ) else {
        return ClearingResult::empty(&bids, &asks);
    };

    let mut fills: BTreeMap<(Side, TraderId), u32> = BTreeMap::new();
    let mut book = Vec::new();
    for (orders, side) in [(&bids, Side::Bid), (&asks, Side::Ask)] {
        let mut to_fill = cross.quantity;
        for order in orders.iter() {
            let filled = to_fill.min(u64::from(order.quantity)) as u32;
            to_fill -= u64::from(filled);
            if filled > 0 {
                *fills.entry((side, order.trader)).or_default() += filled;
            }
            if filled < order.quantity {
                book.push(Order { quantity: order.quantity - filled, side, ..*order });
            }
        }
    }

    ClearingResult {
        cleared: true,
        price: Some(cross.price),
        total_quantity: cross.quantity,
        fills: fills
            .into_iter()
            .map(|((side, trader), quantity)| Fill { trader, side, quantity })
            .collect(),
        uncleared_book: book,
    }
}

pub const BUYER: TraderId = TraderId(0);
pub const SELLER: TraderId = TraderId(1);

/// The two bids and two asks of the one-buyer/one-seller game.
pub fn two_unit_orders(theta_b: f64, theta_s: f64, profile: &ScaleProfile) -> Result<([Order; 2], [Order; 2])> {
    Ok((
        [
            Order::bid(BUYER, profile.alpha_b1 * theta_b, 1, 0)?,
            Order::bid(BUYER, profile.alpha_b2 * theta_b, 1, 1)?,
        ],
        [
            Order::ask(SELLER, profile.alpha_s1 * theta_s, 1, 2)?,
            Order::ask(SELLER, profile.alpha_s2 * theta_s, 1, 3)?,
        ],
    ))
}

/// Clears the two-unit auction between a buyer of type `theta_b` and a seller
/// of type `theta_s` playing the scale factors in `profile`.
pub fn two_unit_outcome(
    theta_b: f64,
    theta_s: f64,
    profile: &ScaleProfile,
    rules: &AuctionRules,
) -> Result<ClearingResult> {
    if !theta_b.is_finite() || !theta_s.is_finite() {
        return Err(Error::domain("types must be finite"));
    }
    profile.check_ordering()?;
    let (bids, asks) = two_unit_orders(theta_b, theta_s, profile)?;
    Ok(clear_auction(&bids, &asks, rules))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UnitOutcome {
    pub quantity: u32,
    pub price: f64,
}

impl UnitOutcome {
    pub fn buyer_utility(&self, theta_b: f64) -> f64 {
        (theta_b - self.price) * f64::from(self.quantity)
    }

    pub fn seller_utility(&self, theta_s: f64) -> f64 {
        (self.price - theta_s) * f64::from(self.quantity)
    }
}

/// Allocation-free variant of [`two_unit_outcome`] for Monte-Carlo loops.
///
/// Runs the same matching kernel as [`clear_auction`]. Factors need not be
/// ordered: each side is ranked by price before matching, exactly as the book
/// would. Returns quantity 0 and price NaN when nothing clears.
#[inline]
pub fn two_unit_clearing(theta_b: f64, theta_s: f64, profile: &ScaleProfile, rules: &AuctionRules) -> UnitOutcome {
    let (mut b1, mut b2) = (profile.alpha_b1 * theta_b, profile.alpha_b2 * theta_b);
    let (mut a1, mut a2) = (profile.alpha_s1 * theta_s, profile.alpha_s2 * theta_s);
    if b2 > b1 {
        std::mem::swap(&mut b1, &mut b2);
    }
    if a2 < a1 {
        std::mem::swap(&mut a1, &mut a2);
    }
    match cross_ladders([(b1, 1), (b2, 1)], [(a1, 1), (a2, 1)], rules) {
        Some(c) => UnitOutcome { quantity: c.quantity as u32, price: c.price },
        None => UnitOutcome { quantity: 0, price: f64::NAN },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bid(t: u32, p: f64, q: u32, seq: u64) -> Order {
        Order::bid(TraderId(t), p, q, seq).unwrap()
    }

    fn ask(t: u32, p: f64, q: u32, seq: u64) -> Order {
        Order::ask(TraderId(t), p, q, seq).unwrap()
    }

    /// Matches unit lots by trying every count `m` and keeping the largest one
    /// where the m-th best bid crosses the m-th best ask.
    fn brute_force(bids: &[Order], asks: &[Order], rules: &AuctionRules) -> (u64, Option<f64>) {
        let mut b: Vec<f64> = bids.iter().flat_map(|o| std::iter::repeat(o.price).take(o.quantity as usize)).collect();
        let mut a: Vec<f64> = asks.iter().flat_map(|o| std::iter::repeat(o.price).take(o.quantity as usize)).collect();
        b.sort_by(|x, y| y.partial_cmp(x).unwrap());
        a.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let mut best = (0, None);
        for m in 1..=b.len().min(a.len()) {
            let ok = if rules.clear_on_equality { b[m - 1] >= a[m - 1] } else { b[m - 1] > a[m - 1] };
            if ok {
                best = (m as u64, Some(rules.k * b[m - 1] + (1.0 - rules.k) * a[m - 1]));
            }
        }
        best
    }

    #[test]
    fn single_pair_clears_at_midpoint() {
        let r = clear_auction(&[bid(0, 0.8, 1, 0)], &[ask(1, 0.4, 1, 1)], &AuctionRules::acpr());
        assert!(r.cleared);
        assert_eq!(r.total_quantity, 1);
        assert!((r.price.unwrap() - 0.6).abs() < 1e-12);
        assert!(r.uncleared_book.is_empty());
    }

    #[test]
    fn bid_below_ask_does_not_clear() {
        let r = clear_auction(&[bid(0, 0.3, 1, 0)], &[ask(1, 0.5, 1, 1)], &AuctionRules::acpr());
        assert!(!r.cleared);
        assert!(r.fills.is_empty());
        assert_eq!(r.price, None);
        assert_eq!(r.uncleared_book.len(), 2);
    }

    #[test]
    fn only_first_pair_crosses() {
        let bids = [bid(0, 0.9, 1, 0), bid(0, 0.6, 1, 1)];
        let asks = [ask(1, 0.5, 1, 2), ask(1, 0.7, 1, 3)];
        let rules = AuctionRules::acpr();
        let r = clear_auction(&bids, &asks, &rules);
        assert_eq!(r.total_quantity, 1);
        assert!((r.price.unwrap() - 0.7).abs() < 1e-12);
        let (q, p) = brute_force(&bids, &asks, &rules);
        assert_eq!(q, 1);
        assert!((p.unwrap() - 0.7).abs() < 1e-12);
        assert_eq!(r.uncleared_book.len(), 2);
        assert_eq!(r.uncleared_book[0].price, 0.6);
        assert_eq!(r.uncleared_book[1].price, 0.7);
    }

    #[test]
    fn both_pairs_cross_at_marginal_pair() {
        let bids = [bid(0, 0.9, 1, 0), bid(0, 0.8, 1, 1)];
        let asks = [ask(1, 0.5, 1, 2), ask(1, 0.6, 1, 3)];
        let rules = AuctionRules::acpr();
        let r = clear_auction(&bids, &asks, &rules);
        assert_eq!(r.total_quantity, 2);
        assert!((r.price.unwrap() - 0.7).abs() < 1e-12);
        assert_eq!(brute_force(&bids, &asks, &rules).0, 2);
        assert_eq!(r.filled(TraderId(0), Side::Bid), 2);
        assert_eq!(r.filled(TraderId(1), Side::Ask), 2);
    }

    #[test]
    fn empty_sides_yield_no_clearing() {
        let rules = AuctionRules::acpr();
        assert!(!clear_auction(&[], &[ask(1, 0.1, 3, 0)], &rules).cleared);
        assert!(!clear_auction(&[bid(0, 0.1, 3, 0)], &[], &rules).cleared);
        assert!(!clear_auction(&[], &[], &rules).cleared);
    }

    #[test]
    fn equality_flag_controls_touching_orders() {
        let bids = [bid(0, 0.5, 1, 0)];
        let asks = [ask(1, 0.5, 1, 1)];
        assert!(clear_auction(&bids, &asks, &AuctionRules::new(0.5, true).unwrap()).cleared);
        assert!(!clear_auction(&bids, &asks, &AuctionRules::new(0.5, false).unwrap()).cleared);
    }

    #[test]
    fn k_weights_marginal_pair() {
        let bids = [bid(0, 1.0, 1, 0)];
        let asks = [ask(1, 0.0, 1, 1)];
        let r = clear_auction(&bids, &asks, &AuctionRules::new(0.25, true).unwrap());
        assert!((r.price.unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn partial_fill_leaves_residual_and_ties_go_to_earlier_seq() {
        let bids = [bid(2, 1.0, 2, 5), bid(3, 1.0, 2, 1)];
        let asks = [ask(9, 0.2, 3, 0)];
        let r = clear_auction(&bids, &asks, &AuctionRules::acpr());
        assert_eq!(r.total_quantity, 3);
        assert_eq!(r.filled(TraderId(3), Side::Bid), 2);
        assert_eq!(r.filled(TraderId(2), Side::Bid), 1);
        assert_eq!(r.uncleared_book, vec![Order { quantity: 1, ..bids[0] }]);
    }

    #[test]
    fn invalid_orders_are_rejected() {
        assert!(Order::bid(TraderId(0), 1.0, 0, 0).is_err());
        assert!(Order::ask(TraderId(0), f64::NAN, 1, 0).is_err());
        assert!(AuctionRules::new(1.5, true).is_err());
    }

    #[test]
    fn two_unit_examples() {
        let rules = AuctionRules::acpr();
        let p = ScaleProfile::case1(2.0 / 3.0, 1.0).unwrap();
        let r = two_unit_outcome(0.8, 0.3, &p, &rules).unwrap();
        assert_eq!(r.total_quantity, 2);
        let expected = (2.0 / 3.0 * 0.8 + 0.3) / 2.0;
        assert!((r.price.unwrap() - expected).abs() < 1e-12);
        assert!((expected - 0.416_666_666_7).abs() < 1e-9);

        let r = two_unit_outcome(0.1, 0.9, &ScaleProfile::case4(0.9, 0.5, 0.8, 1.2).unwrap(), &rules).unwrap();
        assert!(!r.cleared);

        let unit = ScaleProfile::case1(1.0, 1.0).unwrap();
        let r = two_unit_outcome(1.0, 0.0, &unit, &rules).unwrap();
        assert_eq!(r.total_quantity, 2);
        assert!((r.price.unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn two_unit_outcome_rejects_misordered_profiles() {
        let bad_buyer = ScaleProfile::case4(0.5, 0.9, 1.0, 1.1).unwrap();
        assert!(matches!(two_unit_outcome(0.5, 0.5, &bad_buyer, &AuctionRules::acpr()), Err(Error::Ordering(_))));
        let bad_seller = ScaleProfile::case4(0.9, 0.5, 1.2, 1.1).unwrap();
        assert!(matches!(two_unit_outcome(0.5, 0.5, &bad_seller, &AuctionRules::acpr()), Err(Error::Ordering(_))));
    }
}
