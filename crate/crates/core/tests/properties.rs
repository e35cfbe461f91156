use dalab::auction::{clear_auction, two_unit_clearing, two_unit_outcome, AuctionRules, Order, Side, TraderId};
use dalab::equilibrium::{CaseRegistry, CaseTag, FocCoefficients, MarketSpec, ScaleProfile};
use dalab::neural::{ReplayBuffer, Transition};
use dalab::rng;
use dalab::strategies::{StrategyConfig, StrategyRegistry, TraderContext};
use proptest::prelude::*;

fn side(max_orders: usize) -> impl Strategy<Value = Vec<(f64, u32)>> {
    let price = prop_oneof![(0u32..=10).prop_map(|p| f64::from(p) / 10.0), 0.0..1.0f64];
    prop::collection::vec((price, 1u32..4), 0..=max_orders)
}

fn book(bids: &[(f64, u32)], asks: &[(f64, u32)]) -> (Vec<Order>, Vec<Order>) {
    let b = bids.iter().enumerate().map(|(i, &(p, q))| Order::bid(TraderId(i as u32), p, q, i as u64).unwrap());
    let a = asks
        .iter()
        .enumerate()
        .map(|(i, &(p, q))| Order::ask(TraderId(100 + i as u32), p, q, (bids.len() + i) as u64).unwrap());
    (b.collect(), a.collect())
}

fn rules() -> impl Strategy<Value = AuctionRules> {
    (0.0..=1.0f64, any::<bool>()).prop_map(|(k, eq)| AuctionRules::new(k, eq).unwrap())
}

fn spec() -> impl Strategy<Value = MarketSpec> {
    (0.0..0.5f64, 0.5..1.0f64, 0.0..0.5f64, 0.5..1.0f64)
        .prop_map(|(lb, wb, ls, ws)| MarketSpec::new(lb, lb + wb, ls, ls + ws).unwrap())
}

fn profile() -> impl Strategy<Value = ScaleProfile> {
    (0.2..1.0f64, 0.0..1.0f64, 0.8..1.6f64, 0.0..1.0f64)
        .prop_map(|(b1, f, s1, g)| ScaleProfile::case4(b1, b1 * (0.5 + 0.5 * f), s1, s1 * (1.0 + 0.5 * g)).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn fills_balance_and_price_stays_in_marginal_pair(bids in side(5), asks in side(5), rules in rules()) {
        let (b, a) = book(&bids, &asks);
        let r = clear_auction(&b, &a, &rules);
        prop_assert_eq!(r.side_volume(Side::Bid), r.total_quantity);
        prop_assert_eq!(r.side_volume(Side::Ask), r.total_quantity);
        let Some(price) = r.price else {
            prop_assert!(!r.cleared && r.fills.is_empty());
            return Ok(());
        };
        let mut bl: Vec<f64> = b.iter().flat_map(|o| std::iter::repeat_n(o.price, o.quantity as usize)).collect();
        let mut al: Vec<f64> = a.iter().flat_map(|o| std::iter::repeat_n(o.price, o.quantity as usize)).collect();
        bl.sort_by(|x, y| y.total_cmp(x));
        al.sort_by(f64::total_cmp);
        let m = r.total_quantity as usize;
        prop_assert!(al[m - 1] <= price && price <= bl[m - 1]);
        let rest: u64 = r.uncleared_book.iter().map(|o| u64::from(o.quantity)).sum();
        prop_assert_eq!(rest + 2 * r.total_quantity, (bl.len() + al.len()) as u64);
    }

    #[test]
    fn raising_a_bid_never_reduces_its_fill(
        bids in side(5).prop_filter("non-empty", |b| !b.is_empty()),
        asks in side(5),
        pick in any::<prop::sample::Index>(),
        raise in 0.0..0.5f64,
        rules in rules(),
    ) {
        let i = pick.index(bids.len());
        let (b, a) = book(&bids, &asks);
        let before = clear_auction(&b, &a, &rules).filled(TraderId(i as u32), Side::Bid);
        let mut raised = b.clone();
        raised[i].price += raise;
        let after = clear_auction(&raised, &a, &rules).filled(TraderId(i as u32), Side::Bid);
        prop_assert!(after >= before);
    }

    #[test]
    fn two_unit_kernel_matches_book_and_piecewise_rule(tb in 0.0..1.5f64, ts in 0.0..1.5f64, p in profile()) {
        let rules = AuctionRules::acpr();
        let book = two_unit_outcome(tb, ts, &p, &rules).unwrap();
        let kernel = two_unit_clearing(tb, ts, &p, &rules);
        prop_assert_eq!(u64::from(kernel.quantity), book.total_quantity);
        let (b1, b2, s1, s2) = (p.alpha_b1 * tb, p.alpha_b2 * tb, p.alpha_s1 * ts, p.alpha_s2 * ts);
        let (q, price) = if b2 >= s2 {
            (2, (b2 + s2) / 2.0)
        } else if b1 >= s1 {
            (1, (b1 + s1) / 2.0)
        } else {
            (0, f64::NAN)
        };
        prop_assert_eq!(kernel.quantity, q);
        if q > 0 {
            prop_assert_eq!(book.price, Some(kernel.price));
            prop_assert!((kernel.price - price).abs() <= 1e-15);
        } else {
            prop_assert_eq!(book.price, None);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn converged_solutions_have_tiny_residuals(spec in spec()) {
        let registry = CaseRegistry::standard();
        for tag in CaseTag::ALL {
            if let Ok(sol) = registry.get(tag).unwrap().solve(&spec, &Default::default()) {
                if sol.converged {
                    prop_assert!(sol.max_residual() <= 1e-9, "{}: {:?}", tag, sol.residuals);
                }
            }
        }
    }

    #[test]
    fn swapping_roles_mirrors_the_solution(spec in spec()) {
        let registry = CaseRegistry::standard();
        let c = FocCoefficients::from_spec(&spec);
        let m = c.mirrored();
        let solve = |tag, coeffs: &FocCoefficients| {
            registry.get(tag).unwrap().solve_coefficients(coeffs, &Default::default()).unwrap()
        };
        for (tag, mirror) in [
            (CaseTag::Case1, CaseTag::Case1),
            (CaseTag::Case2, CaseTag::Case3),
            (CaseTag::Case3, CaseTag::Case2),
            (CaseTag::Case4, CaseTag::Case4),
        ] {
            let a = solve(tag, &c);
            let b = solve(mirror, &m);
            prop_assume!(a.converged && b.converged);
            let [b1, b2, s1, s2] = a.profile.alphas();
            let [mb1, mb2, ms1, ms2] = b.profile.alphas();
            for (x, y) in [(b1, ms1), (b2, ms2), (s1, mb1), (s2, mb2)] {
                prop_assert!((x - y).abs() <= 1e-8, "{}: {:?} vs {:?}", tag, a.profile, b.profile);
            }
        }
    }

    #[test]
    fn strategies_never_overcommit_and_are_deterministic(
        kind in 0usize..4,
        theta in 0.01..100.0f64,
        remaining in 0u32..30,
        proximity in 1u32..=24,
        seller in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let cfg = match kind {
            0 => StrategyConfig::ScaleBased { alphas: vec![0.9, 0.7] },
            1 => StrategyConfig::Zi { min_price: None, max_price: None },
            2 => StrategyConfig::Zip { mu_min: None, mu_max: None, delta: 0.01 },
            _ => StrategyConfig::Truthful,
        };
        let side = if seller { Side::Ask } else { Side::Bid };
        let reg = StrategyRegistry::standard();
        let run = || {
            let mut s = reg.build(&cfg).unwrap();
            let mut r = rng::seeded(seed);
            s.begin_game(theta, &mut r);
            let mut ctx = TraderContext {
                trader: TraderId(3),
                side,
                true_type: theta,
                remaining_quantity: remaining,
                proximity,
                last_clearing_price: None,
                rng: &mut r,
            };
            s.orders(&mut ctx).unwrap()
        };
        let orders = run();
        let total: u32 = orders.iter().map(|o| o.quantity).sum();
        prop_assert!(total <= remaining);
        prop_assert!(orders.iter().all(|o| o.side == side && o.price.is_finite() && o.quantity > 0));
        prop_assert_eq!(orders, run());
    }

    #[test]
    fn scale_based_prices_are_exact_multiples(a1 in 0.01..2.0f64, a2 in 0.01..2.0f64, theta in 0.01..100.0f64) {
        let reg = StrategyRegistry::standard();
        let mut s = reg.build(&StrategyConfig::ScaleBased { alphas: vec![a1, a2] }).unwrap();
        let mut r = rng::seeded(0);
        let mut ctx = TraderContext {
            trader: TraderId(0),
            side: Side::Bid,
            true_type: theta,
            remaining_quantity: 2,
            proximity: 1,
            last_clearing_price: None,
            rng: &mut r,
        };
        let prices: Vec<f64> = s.orders(&mut ctx).unwrap().iter().map(|o| o.price).collect();
        prop_assert_eq!(prices, vec![a1 * theta, a2 * theta]);
    }

    #[test]
    fn replay_never_exceeds_capacity(capacity in 1usize..50, pushes in 0usize..200, batch in 1usize..60) {
        let mut buf = ReplayBuffer::new(capacity);
        for i in 0..pushes {
            buf.push(Transition { state: vec![i as f64], action: vec![0.0], reward: 0.0, next_state: vec![0.0], done: false });
            prop_assert!(buf.len() <= capacity);
        }
        prop_assert_eq!(buf.len(), pushes.min(capacity));
        let sample = buf.sample(batch, &mut rng::seeded(1));
        prop_assert_eq!(sample.len(), batch.min(buf.len()));
        let mut ids: Vec<u64> = sample.iter().map(|t| t.state[0] as u64).collect();
        ids.sort_unstable();
        ids.dedup();
        prop_assert_eq!(ids.len(), sample.len());
    }
}
