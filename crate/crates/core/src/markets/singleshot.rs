//! One buyer, one equilibrium seller, a single two-unit auction per episode.

use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::auction::{clear_auction, AuctionRules, Order, Side, BUYER, SELLER};
use crate::equilibrium::{solve_case, CaseTag, MarketSpec, ScaleProfile};
use crate::neural::{DdpgAgent, DdpgConfig, ReplayBuffer, Transition};
use crate::rng;
use crate::strategies::{scale_based_orders, TraderContext};
use crate::{Error, Result};

/// Buyer-side training cases. Cases 1 and 3 share the buyer's equilibrium.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SingleShotCase {
    Case1or3,
    Case2,
    Case4,
}

impl SingleShotCase {
    pub const ALL: [SingleShotCase; 3] = [SingleShotCase::Case1or3, SingleShotCase::Case2, SingleShotCase::Case4];

    pub fn tag(self) -> CaseTag {
        match self {
            SingleShotCase::Case1or3 => CaseTag::Case1,
            SingleShotCase::Case2 => CaseTag::Case2,
            SingleShotCase::Case4 => CaseTag::Case4,
        }
    }

    /// A tied buyer learns one factor, a free buyer two.
    pub fn action_dim(self) -> usize {
        if self.tag().buyer_tied() {
            1
        } else {
            2
        }
    }

    /// Equilibrium profile on `[0, 1]^2`; the seller half is the opponent.
    pub fn equilibrium(self) -> Result<ScaleProfile> {
        Ok(solve_case(self.tag(), &MarketSpec::unit())?.profile)
    }
}

impl fmt::Display for SingleShotCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SingleShotCase::Case1or3 => "case1or3",
            SingleShotCase::Case2 => "case2",
            SingleShotCase::Case4 => "case4",
        })
    }
}

impl FromStr for SingleShotCase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "1" | "3" | "case1" | "case3" | "case1or3" => Ok(SingleShotCase::Case1or3),
            "2" | "case2" => Ok(SingleShotCase::Case2),
            "4" | "case4" => Ok(SingleShotCase::Case4),
            other => Err(Error::config(format!("unknown training case {other:?} (expected 1, 2, 3 or 4)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SingleShotState {
    pub quantity: u32,
    pub theta: f64,
}

impl SingleShotState {
    pub fn new(quantity: u32, theta: f64) -> Result<Self> {
        if quantity > 2 || !(0.0..=1.0).contains(&theta) {
            return Err(Error::domain(format!("single-shot state needs q <= 2 and theta in [0, 1], got ({quantity}, {theta})")));
        }
        Ok(SingleShotState { quantity, theta })
    }

    /// Network input: `[q / 2, theta]`.
    pub fn features(&self) -> Vec<f64> {
        vec![f64::from(self.quantity) / 2.0, self.theta]
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOutcome {
    pub next: SingleShotState,
    pub price: Option<f64>,
    pub cleared: u32,
    /// `-cp * cq`.
    pub reward: f64,
    /// `-q' * theta`, paid because the episode ends after one auction.
    pub terminal_reward: f64,
    pub done: bool,
}

impl StepOutcome {
    pub fn total_reward(&self) -> f64 {
        self.reward + self.terminal_reward
    }
}

/// Maps raw actor output to `(alpha_b1, alpha_b2)` with `alpha_b1 >= alpha_b2`.
pub fn action_to_alphas(action: &[f64]) -> [f64; 2] {
    match action {
        [a] => [*a, *a],
        [a, b, ..] => [a.max(*b), a.min(*b)],
        [] => [0.0, 0.0],
    }
}

/// Runs the single auction of an episode.
pub fn singleshot_step(
    state: SingleShotState,
    alphas: [f64; 2],
    seller: &ScaleProfile,
    theta_s: f64,
) -> Result<StepOutcome> {
    if alphas.iter().any(|a| !(0.0..=1.0).contains(a)) || alphas[0] < alphas[1] {
        return Err(Error::domain(format!("action must be sorted and inside [0, 1]^2, got {alphas:?}")));
    }
    // scale-based pricing is deterministic; the context stream is unused
    let mut unused = rng::seeded(0);
    let ctx = TraderContext {
        trader: BUYER,
        side: Side::Bid,
        true_type: state.theta,
        remaining_quantity: state.quantity,
        proximity: 1,
        last_clearing_price: None,
        rng: &mut unused,
    };
    let mut bids = scale_based_orders(&ctx, &alphas, Side::Bid)?;
    for (seq, b) in bids.iter_mut().enumerate() {
        b.seq = seq as u64;
    }
    let asks = [
        Order::ask(SELLER, seller.alpha_s1 * theta_s, 1, 2)?,
        Order::ask(SELLER, seller.alpha_s2 * theta_s, 1, 3)?,
    ];
    let result = clear_auction(&bids, &asks, &AuctionRules::acpr());
    let cleared = result.filled(BUYER, Side::Bid);
    let reward = result.price.map_or(0.0, |p| -p * f64::from(cleared));
    let next = SingleShotState { quantity: state.quantity - cleared, theta: state.theta };
    Ok(StepOutcome {
        next,
        price: result.price,
        cleared,
        reward,
        terminal_reward: -f64::from(next.quantity) * state.theta,
        done: true,
    })
}

/// When the learner updates its networks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Schedule {
    /// Act with the noisy policy and update after every episode once the
    /// warm-up transitions are in the buffer.
    Online,
    /// Fill the buffer with uniformly random actions first, then run
    /// `updates` updates over it.
    Offline { updates: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SingleShotTraining {
    pub episodes: usize,
    pub schedule: Schedule,
    pub ddpg: DdpgConfig,
    pub eval_states: usize,
}

impl Default for SingleShotTraining {
    fn default() -> Self {
        SingleShotTraining { episodes: 10_000, schedule: Schedule::Online, ddpg: DdpgConfig::default(), eval_states: 1000 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub theta: f64,
    pub theta_s: f64,
    pub a1: f64,
    pub a2: f64,
    pub reward: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct UpdateRecord {
    pub step: u64,
    pub critic_loss: f64,
    pub actor_objective: f64,
}

/// Mean and standard deviation of the greedy policy's `(alpha_b1, alpha_b2)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyEvaluation {
    pub case: SingleShotCase,
    pub states: usize,
    pub mean: [f64; 2],
    pub std: [f64; 2],
    pub theory: [f64; 2],
}

impl PolicyEvaluation {
    /// `|mean - theory| / theory` per factor.
    pub fn relative_error(&self) -> [f64; 2] {
        [0, 1].map(|i| (self.mean[i] - self.theory[i]).abs() / self.theory[i])
    }
}

pub struct SingleShotRun {
    pub agent: DdpgAgent,
    pub curve: Vec<EpisodeRecord>,
    pub updates: Vec<UpdateRecord>,
    pub evaluation: PolicyEvaluation,
}

const STREAM_ENV: u64 = 1;
const STREAM_ACTION: u64 = 2;
const STREAM_REPLAY: u64 = 3;
const STREAM_EVAL: u64 = 4;
const STREAM_INIT: u64 = 5;

/// Trains a buyer against the case's equilibrium seller.
pub fn train_singleshot(case: SingleShotCase, cfg: &SingleShotTraining, seed: u64) -> Result<SingleShotRun> {
    let profile = case.equilibrium()?;
    let mut agent = DdpgAgent::new(2, case.action_dim(), cfg.ddpg.clone(), &mut rng::stream(seed, STREAM_INIT))?;
    let mut env = rng::stream(seed, STREAM_ENV);
    let mut explore = rng::stream(seed, STREAM_ACTION);
    let mut sampler = rng::stream(seed, STREAM_REPLAY);
    let mut replay = ReplayBuffer::new(cfg.ddpg.replay_capacity);
    let mut curve = Vec::with_capacity(cfg.episodes);
    let mut updates = Vec::new();
    let online = cfg.schedule == Schedule::Online;
    let mut update = |agent: &mut DdpgAgent, replay: &ReplayBuffer, updates: &mut Vec<UpdateRecord>| -> Result<()> {
        let batch = replay.sample(cfg.ddpg.batch_size, &mut sampler);
        let stats = agent.update(&batch)?;
        updates.push(UpdateRecord { step: agent.step, critic_loss: stats.critic_loss, actor_objective: stats.actor_objective });
        Ok(())
    };
    for episode in 0..cfg.episodes {
        let theta: f64 = env.random();
        let theta_s: f64 = env.random();
        let state = SingleShotState { quantity: 2, theta };
        let features = state.features();
        let action: Vec<f64> = if !online || replay.len() < cfg.ddpg.warmup {
            (0..case.action_dim()).map(|_| explore.random()).collect()
        } else {
            let progress = episode as f64 / cfg.episodes.max(1) as f64;
            agent.select_action(&features, cfg.ddpg.noise_at(progress), &mut explore)
        };
        let alphas = action_to_alphas(&action);
        let out = singleshot_step(state, alphas, &profile, theta_s)?;
        replay.push(Transition {
            state: features,
            action,
            reward: out.total_reward(),
            next_state: out.next.features(),
            done: out.done,
        });
        curve.push(EpisodeRecord { episode, theta, theta_s, a1: alphas[0], a2: alphas[1], reward: out.total_reward() });
        if online && replay.len() >= cfg.ddpg.warmup.max(1) {
            for _ in 0..cfg.ddpg.updates_per_step {
                update(&mut agent, &replay, &mut updates)?;
            }
        }
    }
    if let Schedule::Offline { updates: n } = cfg.schedule {
        if replay.is_empty() {
            return Err(Error::config("offline training needs at least one episode"));
        }
        for _ in 0..n {
            update(&mut agent, &replay, &mut updates)?;
        }
    }
    let evaluation = evaluate_policy(&agent, case, cfg.eval_states, rng::derive_seed(seed, STREAM_EVAL))?;
    Ok(SingleShotRun { agent, curve, updates, evaluation })
}

/// Greedy policy statistics over `states` draws of `theta ~ U[0, 1]`, `q = 2`.
pub fn evaluate_policy(agent: &DdpgAgent, case: SingleShotCase, states: usize, seed: u64) -> Result<PolicyEvaluation> {
    if agent.state_dim() != 2 || agent.action_dim() != case.action_dim() {
        return Err(Error::config(format!(
            "agent with {} inputs and {} outputs cannot play {case}",
            agent.state_dim(),
            agent.action_dim()
        )));
    }
    if states == 0 {
        return Err(Error::config("evaluation needs at least one state"));
    }
    let profile = case.equilibrium()?;
    let mut r = rng::seeded(seed);
    let mut sums = [0.0; 2];
    let mut squares = [0.0; 2];
    for _ in 0..states {
        let s = SingleShotState { quantity: 2, theta: r.random() };
        let alphas = action_to_alphas(&agent.act(&s.features()));
        for i in 0..2 {
            sums[i] += alphas[i];
            squares[i] += alphas[i] * alphas[i];
        }
    }
    let n = states as f64;
    let mean = sums.map(|s| s / n);
    let std = [0, 1].map(|i| (squares[i] / n - mean[i] * mean[i]).max(0.0).sqrt());
    Ok(PolicyEvaluation { case, states, mean, std, theory: [profile.alpha_b1, profile.alpha_b2] })
}
