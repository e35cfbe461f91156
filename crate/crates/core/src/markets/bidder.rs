//! The learned policy as a PDA bidder, and offline training against ZI.

use std::path::Path;
use std::sync::Arc;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::pda::{run_pda_game, PdaGameConfig, PdaTransition, SellerGroup, PROXIMITIES};
use crate::auction::Order;
use crate::neural::{DdpgAgent, DdpgConfig, ReplayBuffer, Transition, UpdateStats};
use crate::rng;
use crate::strategies::{scale_based_orders, BiddingStrategy, StrategyConfig, StrategyRegistry, TraderContext};
use crate::{Error, Result};

/// Network input for a PDA state: `[p / 24, q / demand, theta / theta_scale]`.
pub fn pda_features(proximity: u32, q: u32, theta: f64, demand: u32, theta_scale: f64) -> Vec<f64> {
    vec![
        f64::from(proximity) / f64::from(PROXIMITIES),
        f64::from(q) / f64::from(demand.max(1)),
        theta / theta_scale,
    ]
}

pub const PDA_STATE_DIM: usize = 3;
pub const PDA_ACTION_DIM: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Exploration {
    Greedy,
    /// Uniform actions, ignoring the policy.
    Uniform,
    Gaussian { sigma: f64 },
    /// Each delivery slot draws uniform start and end actions and moves linearly
    /// between them over the proximities, jittered by up to `width` per auction.
    Ramp { width: f64 },
}

/// Bids two fractions of the balancing price chosen by the actor.
pub struct DdpgBidder {
    agent: Arc<DdpgAgent>,
    demand: u32,
    theta_scale: f64,
    exploration: Exploration,
    ramp: Option<Vec<(f64, f64)>>,
    last_action: Option<Vec<f64>>,
}

impl DdpgBidder {
    pub fn new(agent: Arc<DdpgAgent>, demand: u32, theta_scale: f64, exploration: Exploration) -> Result<Self> {
        if agent.state_dim() != PDA_STATE_DIM || agent.action_dim() != PDA_ACTION_DIM {
            return Err(Error::config(format!(
                "PDA bidder needs a {PDA_STATE_DIM}-input, {PDA_ACTION_DIM}-output agent, got {} and {}",
                agent.state_dim(),
                agent.action_dim()
            )));
        }
        Ok(DdpgBidder { agent, demand, theta_scale, exploration, ramp: None, last_action: None })
    }
}

impl BiddingStrategy for DdpgBidder {
    fn name(&self) -> &'static str {
        "ddpg"
    }

    fn orders(&mut self, ctx: &mut TraderContext<'_>) -> Result<Vec<Order>> {
        if ctx.remaining_quantity == 0 {
            self.last_action = None;
            return Ok(Vec::new());
        }
        let state = pda_features(ctx.proximity, ctx.remaining_quantity, ctx.true_type, self.demand, self.theta_scale);
        let action = match self.exploration {
            Exploration::Greedy => self.agent.select_action(&state, 0.0, ctx.rng),
            Exploration::Uniform => (0..PDA_ACTION_DIM).map(|_| ctx.rng.random()).collect(),
            Exploration::Gaussian { sigma } => self.agent.select_action(&state, sigma, ctx.rng),
            Exploration::Ramp { width } => {
                if ctx.proximity == PROXIMITIES || self.ramp.is_none() {
                    self.ramp = Some((0..PDA_ACTION_DIM).map(|_| (ctx.rng.random(), ctx.rng.random())).collect());
                }
                let t = f64::from(PROXIMITIES.saturating_sub(ctx.proximity)) / f64::from(PROXIMITIES - 1);
                let ramp = self.ramp.as_deref().unwrap_or_default();
                ramp.iter()
                    .map(|&(a, b): &(f64, f64)| (a + (b - a) * t + ctx.rng.random_range(-width..=width)).clamp(0.0, 1.0))
                    .collect()
            }
        };
        let mut alphas = action.clone();
        alphas.sort_by(|a, b| b.total_cmp(a));
        let orders = scale_based_orders(ctx, &alphas, ctx.side)?;
        self.last_action = Some(action);
        Ok(orders)
    }

    fn last_action(&self) -> Option<Vec<f64>> {
        self.last_action.clone()
    }
}

/// Registers the `ddpg` kind. Configs naming a checkpoint load it; others use `agent`.
pub fn register_ddpg(
    registry: &mut StrategyRegistry,
    agent: Option<Arc<DdpgAgent>>,
    demand: u32,
    theta_scale: f64,
    exploration: Exploration,
) {
    registry.register("ddpg", move |cfg| {
        let StrategyConfig::Ddpg { checkpoint } = cfg else {
            return Err(Error::config(format!("ddpg factory cannot build {}", cfg.kind())));
        };
        let agent = match (checkpoint, &agent) {
            (Some(path), _) => Arc::new(DdpgAgent::load(Path::new(path))?),
            (None, Some(a)) => a.clone(),
            (None, None) => return Err(Error::config("ddpg trader needs a checkpoint")),
        };
        Ok(Box::new(DdpgBidder::new(agent, demand, theta_scale, exploration)?))
    });
}

/// Market used for PDA training and tournaments. Total demand per slot is
/// split equally among the buyers of each game.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PdaMarket {
    pub total_demand: u32,
    pub supply: Vec<SellerGroup>,
    pub balancing_price: f64,
    pub num_delivery_slots: u32,
    /// ZI bounds used for buyer seats in this market.
    pub zi_min_price: f64,
    pub zi_max_price: f64,
}

impl Default for PdaMarket {
    fn default() -> Self {
        PdaMarket {
            total_demand: 40,
            supply: vec![SellerGroup {
                count: 16,
                strategy: StrategyConfig::ScaleBased { alphas: vec![1.0, 1.1] },
                capacity: 8,
                cost_min: 20.0,
                cost_max: 50.0,
            }],
            balancing_price: 60.0,
            num_delivery_slots: 168,
            zi_min_price: 0.0,
            zi_max_price: 60.0,
        }
    }
}

impl PdaMarket {
    pub fn zi(&self) -> StrategyConfig {
        StrategyConfig::Zi { min_price: Some(self.zi_min_price), max_price: Some(self.zi_max_price) }
    }

    pub fn demand_for(&self, buyers: usize) -> u32 {
        self.total_demand / buyers.max(1) as u32
    }

    /// Game config for a roster of buyer strategies.
    pub fn game(&self, roster: Vec<StrategyConfig>, seed: u64) -> PdaGameConfig {
        PdaGameConfig {
            demand_per_trader: self.demand_for(roster.len()),
            traders: roster,
            supply: self.supply.clone(),
            balancing_price: self.balancing_price,
            num_delivery_slots: self.num_delivery_slots,
            seed,
            trader_streams: None,
            k: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PdaTraining {
    pub market: PdaMarket,
    pub two_player_games: u32,
    pub four_player_games: u32,
    /// Offline updates over the collected buffer.
    pub updates: usize,
    /// Behaviour policy while collecting.
    pub exploration: Exploration,
    pub ddpg: DdpgConfig,
}

impl Default for PdaTraining {
    fn default() -> Self {
        PdaTraining {
            market: PdaMarket::default(),
            two_player_games: 20,
            four_player_games: 20,
            updates: 20_000,
            exploration: Exploration::Ramp { width: 0.05 },
            ddpg: DdpgConfig::default(),
        }
    }
}

pub struct PdaTrainingRun {
    pub agent: DdpgAgent,
    pub transitions: Vec<PdaTransition>,
    pub updates: Vec<UpdateStats>,
}

/// Replay transition with the reward scaled by `1 / (theta * demand)`.
pub fn to_replay(t: &PdaTransition, demand: u32, theta_scale: f64) -> Transition {
    let scale = t.theta * f64::from(demand.max(1));
    Transition {
        state: pda_features(t.proximity, t.q, t.theta, demand, theta_scale),
        action: t.action.clone(),
        reward: if scale > 0.0 { t.reward / scale } else { t.reward },
        next_state: pda_features(t.proximity - 1, t.next_q, t.theta, demand, theta_scale),
        done: t.done,
    }
}

const STREAM_INIT: u64 = 11;
const STREAM_REPLAY: u64 = 12;

/// Collects explored games against ZI opponents, then trains
/// offline on the combined buffer.
pub fn train_pda(cfg: &PdaTraining, seed: u64) -> Result<PdaTrainingRun> {
    let market = &cfg.market;
    let mut agent = DdpgAgent::new(PDA_STATE_DIM, PDA_ACTION_DIM, cfg.ddpg.clone(), &mut rng::stream(seed, STREAM_INIT))?;
    let placeholder = Arc::new(agent.clone());
    let mut replay = ReplayBuffer::new(cfg.ddpg.replay_capacity);
    let mut transitions = Vec::new();
    let sets = [(2usize, cfg.two_player_games), (4usize, cfg.four_player_games)];
    let mut game_id = 0u64;
    for (players, games) in sets {
        let demand = market.demand_for(players);
        let mut registry = StrategyRegistry::standard();
        register_ddpg(&mut registry, Some(placeholder.clone()), demand, market.balancing_price, cfg.exploration);
        for _ in 0..games {
            let mut roster = vec![StrategyConfig::Ddpg { checkpoint: None }];
            roster.extend(std::iter::repeat_n(market.zi(), players - 1));
            let game = market.game(roster, rng::derive_seed(seed, game_id));
            let result = run_pda_game(&game, game_id, &registry)?;
            for t in result.transitions {
                replay.push(to_replay(&t, demand, market.balancing_price));
                transitions.push(t);
            }
            game_id += 1;
        }
    }
    if replay.is_empty() {
        return Err(Error::config("PDA training collected no transitions"));
    }
    let mut sampler = rng::stream(seed, STREAM_REPLAY);
    let mut updates = Vec::with_capacity(cfg.updates);
    for _ in 0..cfg.updates {
        let batch = replay.sample(cfg.ddpg.batch_size, &mut sampler);
        updates.push(agent.update(&batch)?);
    }
    Ok(PdaTrainingRun { agent, transitions, updates })
}
