use std::fs;
use std::path::Path;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::mlp::{soft_update, Activation, MlpParams};
use super::replay::Transition;
use crate::rng::Rng;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DdpgConfig {
    pub gamma: f64,
    pub tau: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub hidden: Vec<usize>,
    pub batch_size: usize,
    pub replay_capacity: usize,
    /// Transitions collected with uniform random actions before learning starts.
    pub warmup: usize,
    /// Exploration noise decays linearly from `noise_start` to `noise_end`.
    pub noise_start: f64,
    pub noise_end: f64,
    /// L2 penalty on critic weights.
    pub critic_l2: f64,
    /// Gradient updates per environment step once warm-up is over.
    pub updates_per_step: usize,
}

impl Default for DdpgConfig {
    fn default() -> Self {
        DdpgConfig {
            gamma: 0.99,
            tau: 0.001,
            actor_lr: 1e-4,
            critic_lr: 1e-3,
            hidden: vec![40, 30],
            batch_size: 64,
            replay_capacity: 100_000,
            warmup: 1000,
            noise_start: 0.3,
            noise_end: 0.05,
            critic_l2: 0.0,
            updates_per_step: 1,
        }
    }
}

impl DdpgConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::config(format!("gamma must lie in [0, 1], got {}", self.gamma)));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::config(format!("tau must lie in (0, 1], got {}", self.tau)));
        }
        if !(self.actor_lr > 0.0 && self.critic_lr > 0.0) {
            return Err(Error::config("learning rates must be positive"));
        }
        if self.hidden.len() < 2 || self.hidden.contains(&0) {
            return Err(Error::config("need at least two non-empty hidden layers"));
        }
        if self.batch_size == 0 || self.replay_capacity == 0 {
            return Err(Error::config("batch size and replay capacity must be positive"));
        }
        if self.noise_start < 0.0 || self.noise_end < 0.0 {
            return Err(Error::config("noise scales must be non-negative"));
        }
        Ok(())
    }

    /// Noise scale after `progress` in `[0, 1]` of training.
    pub fn noise_at(&self, progress: f64) -> f64 {
        let p = progress.clamp(0.0, 1.0);
        self.noise_start + (self.noise_end - self.noise_start) * p
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub state_dim: usize,
    pub action_dim: usize,
    pub hidden: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UpdateStats {
    pub critic_loss: f64,
    /// Mean `Q(s, mu(s))` over the batch before the actor step.
    pub actor_objective: f64,
}

/// Actor-critic pair with target copies and optimizer state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DdpgAgent {
    pub architecture: Architecture,
    pub config: DdpgConfig,
    pub actor: MlpParams,
    pub critic: MlpParams,
    pub actor_target: MlpParams,
    pub critic_target: MlpParams,
    pub actor_opt: Adam,
    pub critic_opt: Adam,
    pub step: u64,
}

impl DdpgAgent {
    pub fn new(state_dim: usize, action_dim: usize, config: DdpgConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let actor = MlpParams::actor(state_dim, action_dim, &config.hidden, rng);
        let critic = MlpParams::critic(state_dim, action_dim, &config.hidden, rng);
        Ok(DdpgAgent {
            architecture: Architecture { state_dim, action_dim, hidden: config.hidden.clone() },
            actor_opt: Adam::new(config.actor_lr, actor.num_params()),
            critic_opt: Adam::new(config.critic_lr, critic.num_params()),
            actor_target: actor.clone(),
            critic_target: critic.clone(),
            actor,
            critic,
            config,
            step: 0,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.architecture.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.architecture.action_dim
    }

    /// Deterministic policy output.
    pub fn act(&self, state: &[f64]) -> Vec<f64> {
        self.actor.forward(state, &[])
    }

    pub fn q_value(&self, state: &[f64], action: &[f64]) -> f64 {
        self.critic.forward(state, action)[0]
    }

    /// Policy output plus Gaussian noise, clipped to `[0, 1]`.
    pub fn select_action(&self, state: &[f64], noise_scale: f64, rng: &mut Rng) -> Vec<f64> {
        let mut a = self.act(state);
        if noise_scale > 0.0 {
            let normal = Normal::new(0.0, noise_scale).expect("positive noise scale");
            for v in &mut a {
                *v += normal.sample(rng);
            }
        }
        for v in &mut a {
            *v = v.clamp(0.0, 1.0);
        }
        a
    }

    /// One Adam step on the mean squared TD error. Returns the loss.
    pub fn update_critic(&mut self, batch: &[&Transition]) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::domain("empty batch"));
        }
        let n = batch.len() as f64;
        let mut grads = vec![0.0; self.critic.num_params()];
        let mut loss = 0.0;
        for t in batch {
            let y = self.td_target(t);
            let trace = self.critic.forward_trace(&t.state, &t.action);
            let err = trace.output[0] - y;
            loss += err * err / n;
            self.critic.backward(&trace, &[2.0 * err / n], Some(&mut grads));
        }
        if self.config.critic_l2 > 0.0 {
            for (g, p) in grads.iter_mut().zip(self.critic.flat()) {
                *g += 2.0 * self.config.critic_l2 * p;
            }
        }
        self.check_finite("critic loss", loss, &grads)?;
        self.critic_opt.step(&mut self.critic, &grads);
        Ok(loss)
    }

    /// `r + gamma * (1 - done) * Q'(s', mu'(s'))`.
    pub fn td_target(&self, t: &Transition) -> f64 {
        if t.done {
            return t.reward;
        }
        let next_action = self.actor_target.forward(&t.next_state, &[]);
        t.reward + self.config.gamma * self.critic_target.forward(&t.next_state, &next_action)[0]
    }

    /// One Adam ascent step on `mean Q(s, mu(s))`. Returns the objective.
    pub fn update_actor(&mut self, batch: &[&Transition]) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::domain("empty batch"));
        }
        let n = batch.len() as f64;
        let mut grads = vec![0.0; self.actor.num_params()];
        let mut objective = 0.0;
        for t in batch {
            let actor_trace = self.actor.forward_trace(&t.state, &[]);
            let critic_trace = self.critic.forward_trace(&t.state, &actor_trace.output);
            objective += critic_trace.output[0] / n;
            let (_, dq_da) = self.critic.backward(&critic_trace, &[1.0], None);
            let upstream: Vec<f64> = dq_da.iter().map(|g| -g / n).collect();
            self.actor.backward(&actor_trace, &upstream, Some(&mut grads));
        }
        self.check_finite("actor objective", objective, &grads)?;
        self.actor_opt.step(&mut self.actor, &grads);
        Ok(objective)
    }

    pub fn soft_update_targets(&mut self, tau: f64) {
        soft_update(&self.actor, &mut self.actor_target, tau);
        soft_update(&self.critic, &mut self.critic_target, tau);
    }

    /// Critic step, actor step, then soft target update.
    pub fn update(&mut self, batch: &[&Transition]) -> Result<UpdateStats> {
        let critic_loss = self.update_critic(batch)?;
        let actor_objective = self.update_actor(batch)?;
        self.soft_update_targets(self.config.tau);
        self.step += 1;
        Ok(UpdateStats { critic_loss, actor_objective })
    }

    fn check_finite(&self, what: &str, value: f64, grads: &[f64]) -> Result<()> {
        if !value.is_finite() || grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::Training {
                step: self.step,
                detail: format!("{what} = {value}, non-finite gradients: {}", grads.iter().any(|g| !g.is_finite())),
            });
        }
        Ok(())
    }

    /// Checks all networks against the declared architecture.
    pub fn validate(&self) -> Result<()> {
        let arch = &self.architecture;
        let mut rng = crate::rng::seeded(0);
        let actor = MlpParams::actor(arch.state_dim, arch.action_dim, &arch.hidden, &mut rng);
        let critic = MlpParams::critic(arch.state_dim, arch.action_dim, &arch.hidden, &mut rng);
        for (name, net, want) in [
            ("actor", &self.actor, &actor),
            ("actor_target", &self.actor_target, &actor),
            ("critic", &self.critic, &critic),
            ("critic_target", &self.critic_target, &critic),
        ] {
            net.validate().map_err(|e| Error::Checkpoint(format!("{name}: {e}")))?;
            if !net.same_shape(want) {
                return Err(Error::Checkpoint(format!("{name} does not match architecture {arch:?}")));
            }
        }
        if self.actor.layers.last().map(|l| l.activation) != Some(Activation::Sigmoid) {
            return Err(Error::Checkpoint("actor output must be sigmoid".into()));
        }
        for (name, opt, net) in [("actor_opt", &self.actor_opt, &self.actor), ("critic_opt", &self.critic_opt, &self.critic)] {
            if opt.m.len() != net.num_params() || opt.v.len() != net.num_params() {
                return Err(Error::Checkpoint(format!("{name} state has the wrong length")));
            }
        }
        self.config.validate().map_err(|e| Error::Checkpoint(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("agent serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let agent: DdpgAgent = serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
        agent.validate()?;
        Ok(agent)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            fs::read_to_string(path).map_err(|e| Error::Checkpoint(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}
