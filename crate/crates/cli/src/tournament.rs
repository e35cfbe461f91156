//! Paired-seed PDA tournaments of the learned agent against baseline buyers.

use std::collections::BTreeMap;
use std::sync::Arc;

use dalab::equilibrium::{solve_case, CaseTag, MarketSpec};
use dalab::markets::{register_ddpg, run_pda_game, Exploration, PdaGameResult, PdaMarket};
use dalab::neural::DdpgAgent;
use dalab::rng;
use dalab::strategies::{StrategyConfig, StrategyRegistry};
use serde::{Deserialize, Serialize};

use crate::config::TournamentConfig;
use crate::error::CliResult;
use crate::output::{fmt_float, fmt_opt, Table};

pub const REFERENCE: &str = "ddpg";

/// ZI, ZIP, truthful, and scale-based bidding at the case-1 equilibrium factor.
pub fn default_opponents(market: &PdaMarket) -> CliResult<Vec<StrategyConfig>> {
    let eq = solve_case(CaseTag::Case1, &MarketSpec::unit())?.profile.alpha_b1;
    Ok(vec![
        market.zi(),
        StrategyConfig::Zip { mu_min: None, mu_max: None, delta: 0.01 },
        StrategyConfig::Truthful,
        StrategyConfig::ScaleBased { alphas: vec![eq, eq] },
    ])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GameRow {
    pub set: String,
    pub game: u32,
    pub seed: u64,
    pub seat: usize,
    pub broker: String,
    pub avg_unit_clearing_price: Option<f64>,
    pub blended_unit_price: Option<f64>,
    pub wholesale_units: u64,
    pub balancing_units: u64,
    pub total_cost: f64,
    /// This broker's average price over the reference broker's, in this game.
    pub normalized_ratio: Option<f64>,
}

pub const GAME_COLUMNS: [&str; 11] = [
    "set",
    "game",
    "seed",
    "seat",
    "broker",
    "avg_unit_clearing_price",
    "blended_unit_price",
    "wholesale_units",
    "balancing_units",
    "total_cost",
    "normalized_ratio",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BrokerSummary {
    pub broker: String,
    /// Games in which the broker bought anything in the auctions.
    pub priced_games: u32,
    pub mean_avg_unit_clearing_price: Option<f64>,
    pub std_avg_unit_clearing_price: Option<f64>,
    pub mean_blended_unit_price: Option<f64>,
    /// Mean average price over the reference broker's mean average price.
    pub normalized_ratio: Option<f64>,
    /// Games where the reference broker's average price was strictly lower.
    pub reference_lower: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SetSummary {
    pub set: String,
    pub players: usize,
    pub games: u32,
    pub brokers: Vec<BrokerSummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TournamentReport {
    pub reference: String,
    pub seed: u64,
    pub sets: Vec<SetSummary>,
    #[serde(skip)]
    pub rows: Vec<GameRow>,
}

impl TournamentReport {
    pub fn set(&self, name: &str) -> Option<&SetSummary> {
        self.sets.iter().find(|s| s.set == name)
    }

    pub fn table(&self) -> Table {
        let mut t = Table::new(&GAME_COLUMNS);
        for r in &self.rows {
            t.push(vec![
                r.set.clone(),
                r.game.to_string(),
                r.seed.to_string(),
                r.seat.to_string(),
                r.broker.clone(),
                fmt_opt(r.avg_unit_clearing_price),
                fmt_opt(r.blended_unit_price),
                r.wholesale_units.to_string(),
                r.balancing_units.to_string(),
                fmt_float(r.total_cost),
                fmt_opt(r.normalized_ratio),
            ]);
        }
        t
    }
}

impl SetSummary {
    pub fn broker(&self, name: &str) -> Option<&BrokerSummary> {
        self.brokers.iter().find(|b| b.broker == name)
    }
}

/// Seat labels: the strategy kind, suffixed with the seat when repeated.
fn labels(roster: &[StrategyConfig]) -> Vec<String> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for r in roster {
        *counts.entry(r.kind()).or_default() += 1;
    }
    roster
        .iter()
        .enumerate()
        .map(|(i, r)| if counts[r.kind()] > 1 { format!("{}#{i}", r.kind()) } else { r.kind().to_string() })
        .collect()
}

/// Runs `f` over `0..n` on up to `jobs` threads, returning results in order.
pub fn parallel_map<R: Send>(n: usize, jobs: usize, f: impl Fn(usize) -> R + Sync) -> Vec<R> {
    let jobs = jobs.clamp(1, n.max(1));
    if jobs == 1 {
        return (0..n).map(&f).collect();
    }
    let mut out: Vec<Option<R>> = (0..n).map(|_| None).collect();
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..jobs)
            .map(|j| {
                let f = &f;
                scope.spawn(move || (j..n).step_by(jobs).map(|i| (i, f(i))).collect::<Vec<_>>())
            })
            .collect();
        for h in handles {
            for (i, r) in h.join().expect("worker panicked") {
                out[i] = Some(r);
            }
        }
    });
    out.into_iter().map(|r| r.expect("every index computed")).collect()
}

fn mean_std(xs: &[f64]) -> (Option<f64>, Option<f64>) {
    if xs.is_empty() {
        return (None, None);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 { xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (Some(mean), Some(var.sqrt()))
}

fn summarize(set: &str, labels: &[String], games: u32, rows: &[GameRow]) -> SetSummary {
    let price_of = |label: &str| -> Vec<Option<f64>> {
        rows.iter().filter(|r| r.broker == label).map(|r| r.avg_unit_clearing_price).collect()
    };
    let reference = price_of(REFERENCE);
    let ref_mean = mean_std(&reference.iter().flatten().copied().collect::<Vec<_>>()).0;
    let brokers = labels
        .iter()
        .map(|label| {
            let prices = price_of(label);
            let priced: Vec<f64> = prices.iter().flatten().copied().collect();
            let blended: Vec<f64> =
                rows.iter().filter(|r| &r.broker == label).filter_map(|r| r.blended_unit_price).collect();
            let (mean, std) = mean_std(&priced);
            let reference_lower = reference
                .iter()
                .zip(&prices)
                .filter(|(r, p)| matches!((r, p), (Some(r), Some(p)) if r < p))
                .count() as u32;
            BrokerSummary {
                broker: label.clone(),
                priced_games: priced.len() as u32,
                mean_avg_unit_clearing_price: mean,
                std_avg_unit_clearing_price: std,
                mean_blended_unit_price: mean_std(&blended).0,
                normalized_ratio: match (mean, ref_mean) {
                    (Some(m), Some(r)) if r > 0.0 => Some(m / r),
                    _ => None,
                },
                reference_lower,
            }
        })
        .collect();
    SetSummary { set: set.to_string(), players: labels.len(), games, brokers }
}

fn game_rows(set: &str, game: u32, seed: u64, labels: &[String], result: &PdaGameResult) -> Vec<GameRow> {
    let ref_price = result.buyers[0].avg_unit_clearing_price;
    result
        .buyers
        .iter()
        .enumerate()
        .map(|(seat, m)| GameRow {
            set: set.to_string(),
            game,
            seed,
            seat,
            broker: labels[seat].clone(),
            avg_unit_clearing_price: m.avg_unit_clearing_price,
            blended_unit_price: m.blended_unit_price,
            wholesale_units: m.wholesale_units,
            balancing_units: m.balancing_units,
            total_cost: m.total_cost,
            normalized_ratio: match (m.avg_unit_clearing_price, ref_price) {
                (Some(p), Some(r)) if r > 0.0 => Some(p / r),
                _ => None,
            },
        })
        .collect()
}

/// Offset keeping tournament game seeds apart from the training games'.
const GAME_SEED_BASE: u64 = 1 << 32;

/// Plays `games` games of `roster` (learned agent in seat 0). Game `g` of
/// every set uses the same seed, so pairings face identical supply.
fn play_set(
    set: &str,
    roster: Vec<StrategyConfig>,
    agent: &Arc<DdpgAgent>,
    market: &PdaMarket,
    games: u32,
    seed: u64,
    jobs: usize,
) -> CliResult<(SetSummary, Vec<GameRow>)> {
    let mut registry = StrategyRegistry::standard();
    register_ddpg(
        &mut registry,
        Some(agent.clone()),
        market.demand_for(roster.len()),
        market.balancing_price,
        Exploration::Greedy,
    );
    let labels = labels(&roster);
    let results = parallel_map(games as usize, jobs, |g| {
        let game_seed = rng::derive_seed(seed, GAME_SEED_BASE + g as u64);
        let cfg = market.game(roster.clone(), game_seed);
        run_pda_game(&cfg, g as u64, &registry).map(|r| game_rows(set, g as u32, game_seed, &labels, &r))
    });
    let mut rows = Vec::new();
    for r in results {
        rows.extend(r?);
    }
    Ok((summarize(set, &labels, games, &rows), rows))
}

/// Two-player sets against each opponent, then one set with everyone.
pub fn run_tournament(
    agent: Arc<DdpgAgent>,
    market: &PdaMarket,
    opponents: &[StrategyConfig],
    cfg: &TournamentConfig,
    seed: u64,
    jobs: usize,
) -> CliResult<TournamentReport> {
    let mut sets = Vec::new();
    let mut rows = Vec::new();
    let ddpg = StrategyConfig::Ddpg { checkpoint: None };
    if cfg.two_player_games > 0 {
        for opp in opponents {
            let name = format!("{REFERENCE}_vs_{}", opp.kind());
            let (s, r) = play_set(&name, vec![ddpg.clone(), opp.clone()], &agent, market, cfg.two_player_games, seed, jobs)?;
            sets.push(s);
            rows.extend(r);
        }
    }
    if cfg.five_player_games > 0 && !opponents.is_empty() {
        let mut roster = vec![ddpg];
        roster.extend(opponents.iter().cloned());
        let name = format!("{}_player", roster.len());
        let (s, r) = play_set(&name, roster, &agent, market, cfg.five_player_games, seed, jobs)?;
        sets.push(s);
        rows.extend(r);
    }
    Ok(TournamentReport { reference: REFERENCE.to_string(), seed, sets, rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_map_keeps_order() {
        for jobs in [1, 2, 3, 8] {
            assert_eq!(parallel_map(7, jobs, |i| i * i), vec![0, 1, 4, 9, 16, 25, 36]);
        }
        assert!(parallel_map(0, 4, |i| i).is_empty());
    }

    #[test]
    fn repeated_kinds_get_seat_suffixes() {
        let zi = StrategyConfig::Zi { min_price: None, max_price: None };
        let l = labels(&[StrategyConfig::Ddpg { checkpoint: None }, zi.clone(), zi]);
        assert_eq!(l, vec!["ddpg", "zi#1", "zi#2"]);
    }

    #[test]
    fn summary_counts_strict_reference_wins() {
        let row = |broker: &str, game: u32, p: Option<f64>| GameRow {
            set: "s".into(),
            game,
            seed: 0,
            seat: 0,
            broker: broker.into(),
            avg_unit_clearing_price: p,
            blended_unit_price: p,
            wholesale_units: 1,
            balancing_units: 0,
            total_cost: 0.0,
            normalized_ratio: None,
        };
        let rows = vec![
            row("ddpg", 0, Some(10.0)),
            row("zi", 0, Some(12.0)),
            row("ddpg", 1, Some(10.0)),
            row("zi", 1, Some(10.0)),
            row("ddpg", 2, None),
            row("zi", 2, Some(9.0)),
        ];
        let s = summarize("s", &["ddpg".into(), "zi".into()], 3, &rows);
        let zi = s.broker("zi").unwrap();
        assert_eq!(zi.reference_lower, 1);
        assert_eq!(zi.priced_games, 3);
        assert!((zi.normalized_ratio.unwrap() - (31.0 / 3.0) / 10.0).abs() < 1e-12);
        assert_eq!(s.broker("ddpg").unwrap().normalized_ratio, Some(1.0));
    }
}
