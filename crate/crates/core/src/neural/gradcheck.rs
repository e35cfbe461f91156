//! Central finite-difference checks of the hand-written backward passes.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::ddpg::{DdpgAgent, DdpgConfig};
use super::mlp::MlpParams;
use crate::rng::{self, Rng};

pub const STEP: f64 = 1e-5;

/// Relative error with an absolute floor for near-zero gradients.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckTarget {
    Actor,
    Critic,
    /// `d Q(s, mu(s)) / d actor parameters`, the policy step.
    PolicyGradient,
}

fn dot_loss(net: &MlpParams, x: &[f64], side: &[f64], upstream: &[f64]) -> f64 {
    net.forward(x, side).iter().zip(upstream).map(|(y, u)| y * u).sum()
}

fn central(f: impl Fn(f64) -> f64) -> f64 {
    (f(STEP) - f(-STEP)) / (2.0 * STEP)
}

/// Worst relative error of `backward` for the loss `upstream . forward(x, side)`
/// over parameters, inputs and side inputs.
pub fn mlp_gradient_error(net: &MlpParams, x: &[f64], side: &[f64], upstream: &[f64]) -> f64 {
    let trace = net.forward_trace(x, side);
    let mut grads = vec![0.0; net.num_params()];
    let (dx, dside) = net.backward(&trace, upstream, Some(&mut grads));
    let flat = net.flat();
    let mut worst: f64 = 0.0;
    for (i, g) in grads.iter().enumerate() {
        let fd = central(|h| {
            let mut v = flat.clone();
            v[i] += h;
            let mut n = net.clone();
            n.set_flat(&v);
            dot_loss(&n, x, side, upstream)
        });
        worst = worst.max(relative_error(*g, fd));
    }
    for (j, g) in dx.iter().enumerate() {
        let fd = central(|h| {
            let mut xs = x.to_vec();
            xs[j] += h;
            dot_loss(net, &xs, side, upstream)
        });
        worst = worst.max(relative_error(*g, fd));
    }
    for (j, g) in dside.iter().enumerate() {
        let fd = central(|h| {
            let mut ss = side.to_vec();
            ss[j] += h;
            dot_loss(net, x, &ss, upstream)
        });
        worst = worst.max(relative_error(*g, fd));
    }
    worst
}

/// Worst relative error of the chained critic-through-actor gradient.
pub fn policy_gradient_error(agent: &DdpgAgent, state: &[f64]) -> f64 {
    let at = agent.actor.forward_trace(state, &[]);
    let ct = agent.critic.forward_trace(state, &at.output);
    let (_, dq_da) = agent.critic.backward(&ct, &[1.0], None);
    let mut grads = vec![0.0; agent.actor.num_params()];
    agent.actor.backward(&at, &dq_da, Some(&mut grads));
    let flat = agent.actor.flat();
    grads
        .iter()
        .enumerate()
        .map(|(i, g)| {
            let fd = central(|h| {
                let mut v = flat.clone();
                v[i] += h;
                let mut actor = agent.actor.clone();
                actor.set_flat(&v);
                agent.critic.forward(state, &actor.forward(state, &[]))[0]
            });
            relative_error(*g, fd)
        })
        .fold(0.0, f64::max)
}

fn uniform_vec(r: &mut Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| r.random_range(-1.0..1.0)).collect()
}

/// Small random network with every parameter drawn from `U[-1, 1]`, so that
/// no layer's gradient is negligible.
fn random_net(r: &mut Rng, critic: bool) -> MlpParams {
    let state = r.random_range(1..4);
    let action = r.random_range(1..3);
    let hidden = [r.random_range(2..7), r.random_range(2..6)];
    let mut net =
        if critic { MlpParams::critic(state, action, &hidden, r) } else { MlpParams::actor(state, action, &hidden, r) };
    for p in net.params_mut() {
        *p = r.random_range(-1.0..1.0);
    }
    net
}

/// Worst relative error over `instances` random small networks and inputs.
pub fn worst_random_error(target: CheckTarget, instances: usize, seed: u64) -> f64 {
    let mut r = rng::seeded(seed);
    (0..instances)
        .map(|_| match target {
            CheckTarget::Actor | CheckTarget::Critic => {
                let critic = target == CheckTarget::Critic;
                let net = random_net(&mut r, critic);
                let x = uniform_vec(&mut r, net.input_dim());
                let side: Vec<f64> = (0..net.side_width()).map(|_| r.random()).collect();
                let up = uniform_vec(&mut r, net.output_dim());
                mlp_gradient_error(&net, &x, &side, &up)
            }
            CheckTarget::PolicyGradient => {
                let state_dim = r.random_range(1..4);
                let action_dim = r.random_range(1..3);
                let hidden = vec![r.random_range(2..6), r.random_range(2..6)];
                let cfg = DdpgConfig { hidden, ..Default::default() };
                let mut agent = DdpgAgent::new(state_dim, action_dim, cfg, &mut r).expect("valid config");
                for p in agent.actor.params_mut().chain(agent.critic.params_mut()) {
                    *p = r.random_range(-1.0..1.0);
                }
                let s = uniform_vec(&mut r, state_dim);
                policy_gradient_error(&agent, &s)
            }
        })
        .fold(0.0, f64::max)
}
