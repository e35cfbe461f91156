//! A simplified zero-intelligence-plus trader.
//!
//! The trader quotes `mu * (1 + m)`. Buyers start at `m = -0.01` and keep
//! `m` in `[-1, 0]`; sellers start at `m = 0.01` and keep `m >= 0`. After
//! each cleared auction the margin moves by `delta`: a buyer that was filled
//! shades its bid down, a buyer left out below the clearing price bids up.
//! Sellers mirror this.

use rand::Rng as _;

use super::{AuctionFeedback, BiddingStrategy, TraderContext};
use crate::auction::{Order, Side};
use crate::rng::Rng;
use crate::Result;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ZipState {
    pub mu: f64,
    pub margin: f64,
    pub delta: f64,
}

impl ZipState {
    pub fn new(mu: f64, delta: f64, side: Side) -> Self {
        let margin = match side {
            Side::Bid => -0.01,
            Side::Ask => 0.01,
        };
        ZipState { mu, margin, delta }
    }

    pub fn price(&self) -> f64 {
        self.mu * (1.0 + self.margin)
    }
}

/// One order for the remaining quantity at the current quote.
pub fn zip_orders(ctx: &TraderContext<'_>, state: ZipState) -> Result<(Vec<Order>, ZipState)> {
    if ctx.remaining_quantity == 0 {
        return Ok((Vec::new(), state));
    }
    let order = Order::new(ctx.trader, ctx.side, state.price(), ctx.remaining_quantity, 0)?;
    Ok((vec![order], state))
}

/// Adjusts the margin after one auction.
pub fn zip_update(state: ZipState, side: Side, feedback: &AuctionFeedback) -> ZipState {
    let Some(cp) = feedback.price else {
        return state;
    };
    let Some(quote) = feedback.submitted.first().map(|o| o.price) else {
        return state;
    };
    let wanted: u32 = feedback.submitted.iter().map(|o| o.quantity).sum();
    let mut margin = state.margin;
    match side {
        Side::Bid => {
            if feedback.filled >= wanted {
                margin -= state.delta;
            } else if quote < cp {
                margin += state.delta;
            }
            // keep the quote positive and at or below mu
            margin = margin.clamp(-1.0 + state.delta, 0.0);
        }
        Side::Ask => {
            if feedback.filled >= wanted {
                margin += state.delta;
            } else if quote > cp {
                margin -= state.delta;
            }
            margin = margin.max(0.0);
        }
    }
    ZipState { margin, ..state }
}

pub struct ZipStrategy {
    mu_min: Option<f64>,
    mu_max: Option<f64>,
    delta: f64,
    side: Side,
    state: Option<ZipState>,
}

impl ZipStrategy {
    pub fn new(mu_min: Option<f64>, mu_max: Option<f64>, delta: f64) -> Self {
        ZipStrategy { mu_min, mu_max, delta, side: Side::Bid, state: None }
    }

    pub fn state(&self) -> Option<ZipState> {
        self.state
    }
}

impl BiddingStrategy for ZipStrategy {
    fn name(&self) -> &'static str {
        "zip"
    }

    fn begin_game(&mut self, true_type: f64, rng: &mut Rng) {
        let lo = self.mu_min.unwrap_or(0.5 * true_type);
        let hi = self.mu_max.unwrap_or(true_type).max(lo);
        let mu = if hi > lo { rng.random_range(lo..=hi) } else { lo };
        self.state = Some(ZipState::new(mu, self.delta, self.side));
    }

    fn orders(&mut self, ctx: &mut TraderContext<'_>) -> Result<Vec<Order>> {
        if self.state.is_none() || self.side != ctx.side {
            self.side = ctx.side;
            self.begin_game(ctx.true_type, ctx.rng);
        }
        let (orders, state) = zip_orders(ctx, self.state.expect("initialized above"))?;
        self.state = Some(state);
        Ok(orders)
    }

    fn observe(&mut self, feedback: &AuctionFeedback) {
        if let Some(s) = self.state {
            self.state = Some(zip_update(s, self.side, feedback));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::auction::TraderId;
    use crate::rng;

    fn bid_ctx(rng: &mut Rng, q: u32) -> TraderContext<'_> {
        TraderContext {
            trader: TraderId(0),
            side: Side::Bid,
            true_type: 60.0,
            remaining_quantity: q,
            proximity: 10,
            last_clearing_price: None,
            rng,
        }
    }

    fn feedback(price: Option<f64>, filled: u32, quote: f64) -> AuctionFeedback {
        AuctionFeedback { price, filled, submitted: vec![Order::bid(TraderId(0), quote, 2, 0).unwrap()] }
    }

    #[test]
    fn first_quote_is_ninety_nine_percent_of_mu() {
        let mut r = rng::seeded(0);
        let (orders, _) = zip_orders(&bid_ctx(&mut r, 2), ZipState::new(50.0, 0.01, Side::Bid)).unwrap();
        assert!((orders[0].price - 49.5).abs() < 1e-12);
        assert_eq!(orders[0].quantity, 2);
    }

    #[test]
    fn outbid_buyer_raises() {
        let s = ZipState::new(50.0, 0.01, Side::Bid);
        let next = zip_update(s, Side::Bid, &feedback(Some(52.0), 0, s.price()));
        assert!(next.price() > s.price());
    }

    #[test]
    fn filled_buyer_shades() {
        let s = ZipState::new(50.0, 0.01, Side::Bid);
        let next = zip_update(s, Side::Bid, &feedback(Some(45.0), 2, s.price()));
        assert!(next.price() < s.price());
    }

    #[test]
    fn no_clearing_leaves_state() {
        let s = ZipState::new(50.0, 0.01, Side::Bid);
        assert_eq!(zip_update(s, Side::Bid, &feedback(None, 0, s.price())), s);
    }

    #[test]
    fn quotes_stay_positive() {
        let mut s = ZipState::new(10.0, 0.3, Side::Bid);
        for _ in 0..50 {
            s = zip_update(s, Side::Bid, &feedback(Some(1.0), 2, s.price()));
            assert!(s.price() > 0.0);
        }
    }

    #[test]
    fn seller_mirrors_buyer() {
        let s = ZipState::new(20.0, 0.01, Side::Ask);
        assert!((s.price() - 20.2).abs() < 1e-12);
        let undercut = zip_update(s, Side::Ask, &feedback(Some(19.0), 0, s.price()));
        assert!(undercut.price() < s.price());
        assert!(undercut.margin >= 0.0);
    }

    #[test]
    fn strategy_draws_mu_in_range() {
        let mut s = ZipStrategy::new(Some(40.0), Some(50.0), 0.01);
        let mut r = rng::seeded(4);
        let o = s.orders(&mut bid_ctx(&mut r, 3)).unwrap();
        assert!((40.0 * 0.99..=50.0 * 0.99).contains(&o[0].price));
    }
}
