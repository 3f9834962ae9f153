//! DDPG margin controller: actor/critic networks with target copies, a
//! ring replay buffer and Ornstein-Uhlenbeck exploration noise.
//!
//! The actor maps the last `w_state` prediction errors to a raw score; the
//! margin is `clamp(sigmoid(raw), 0, 0.99)`. Exploration noise is added to
//! the raw score before squashing. The critic scores `state ++ [margin]`.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{
    write_values, Activation, AdamState, CheckpointLines, CopyMode, DenseNet, ForwardTrace, Gradients, Loss,
};
use crate::seed;
use crate::strategy::{Margin, MarginStrategy, Observation, MAX_MARGIN};

pub const ACTOR_HIDDEN: usize = 16;
pub const CRITIC_HIDDEN: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DdpgConfig {
    pub learning_rate: f64,
    pub gamma: f64,
    pub replay_capacity: usize,
    pub batch_size: usize,
    pub warmup_steps: usize,
    pub ou_theta: f64,
    pub ou_mu: f64,
    pub ou_sigma: f64,
    pub target_update_days: usize,
    pub w_state: usize,
    pub train_fraction: f64,
    pub critic_loss: Loss,
    /// One agent per host instead of one shared agent per metric.
    pub per_host_agents: bool,
}

impl Default for DdpgConfig {
    fn default() -> Self {
        DdpgConfig {
            learning_rate: 0.001,
            gamma: 0.99,
            replay_capacity: 100_000,
            batch_size: 128,
            warmup_steps: 1000,
            ou_theta: 0.15,
            ou_mu: 0.0,
            ou_sigma: 0.3,
            target_update_days: 10,
            w_state: 10,
            train_fraction: 0.8,
            critic_loss: Loss::Mae,
            per_host_agents: false,
        }
    }
}

impl DdpgConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |f: &str, why: &str| Err(Error::config(format!("ddpg.{f}: {why}")));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail("learning_rate", "must be > 0");
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return fail("gamma", "must lie in [0,1]");
        }
        for (name, v) in [
            ("replay_capacity", self.replay_capacity),
            ("batch_size", self.batch_size),
            ("target_update_days", self.target_update_days),
            ("w_state", self.w_state),
        ] {
            if v == 0 {
                return fail(name, "must be positive");
            }
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return fail("train_fraction", "must lie in (0,1)");
        }
        if !(self.ou_theta >= 0.0 && self.ou_sigma >= 0.0 && self.ou_mu.is_finite()) {
            return fail("ou_theta/ou_sigma", "must be non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: f64,
    pub reward: f64,
    pub next_state: Vec<f64>,
}

impl Transition {
    fn is_valid(&self, w_state: usize) -> bool {
        self.state.len() == w_state
            && self.next_state.len() == w_state
            && self.state.iter().chain(&self.next_state).all(|v| v.is_finite())
            && self.reward.is_finite()
            && (0.0..=MAX_MARGIN).contains(&self.action)
    }
}

/// Fixed-capacity ring of transitions; the oldest entry is overwritten.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    items: Vec<Transition>,
    capacity: usize,
    next: usize,
    rng: ChaCha8Rng,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, seed: u64) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        ReplayBuffer {
            items: Vec::with_capacity(capacity.min(4096)),
            capacity,
            next: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Uniform draw of `n` indices with replacement.
    pub fn sample_indices(&mut self, n: usize) -> Vec<usize> {
        if self.items.is_empty() {
            return Vec::new();
        }
        (0..n).map(|_| self.rng.random_range(0..self.items.len())).collect()
    }

    pub fn get(&self, index: usize) -> Option<&Transition> {
        self.items.get(index)
    }

    /// Contents from oldest to newest.
    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        let split = if self.items.len() < self.capacity { 0 } else { self.next };
        self.items[split..].iter().chain(&self.items[..split])
    }
}

/// Discrete OU process with unit time step:
/// `x <- x + theta * (mu - x) + sigma * N(0,1)`.
#[derive(Debug, Clone)]
pub struct OuProcess {
    pub x: f64,
    pub theta: f64,
    pub mu: f64,
    pub sigma: f64,
    rng: ChaCha8Rng,
}

impl OuProcess {
    pub fn new(theta: f64, mu: f64, sigma: f64, seed: u64) -> Self {
        OuProcess {
            x: mu,
            theta,
            mu,
            sigma,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn sample(&mut self) -> f64 {
        let z: f64 = self.rng.sample(StandardNormal);
        self.x += self.theta * (self.mu - self.x) + self.sigma * z;
        self.x
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Maps a raw actor score to a margin.
pub fn squash(raw: f64) -> f64 {
    sigmoid(raw).clamp(0.0, MAX_MARGIN)
}

/// Derivative used for the actor update. The clamp at 0.99 is passed
/// through so a saturated actor still receives a gradient.
fn squash_slope(raw: f64) -> f64 {
    let s = sigmoid(raw);
    s * (1.0 - s)
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LearnStats {
    pub updated: bool,
    /// Set when a transition or batch contained non-finite values and was
    /// ignored.
    pub rejected: bool,
    pub critic_loss: Option<f64>,
    pub actor_objective: Option<f64>,
    pub target_synced: bool,
}

#[derive(Debug, Clone)]
pub struct DdpgAgent {
    config: DdpgConfig,
    seed: u64,
    steps_per_day: usize,
    reward_scale: f64,
    actor: DenseNet,
    critic: DenseNet,
    target_actor: DenseNet,
    target_critic: DenseNet,
    actor_opt: AdamState,
    critic_opt: AdamState,
    replay: ReplayBuffer,
    noise: OuProcess,
    warmup_rng: ChaCha8Rng,
    act_calls: u64,
    learn_calls: u64,
    updates: u64,
}

impl DdpgAgent {
    /// `reward_scale` divides raw dollar rewards before they reach the
    /// critic. `steps_per_day` sets the target-sync period.
    pub fn new(config: DdpgConfig, steps_per_day: usize, reward_scale: f64, seed: u64) -> Result<Self> {
        config.validate()?;
        if !(reward_scale > 0.0 && reward_scale.is_finite()) {
            return Err(Error::domain("reward scale must be positive"));
        }
        if steps_per_day == 0 {
            return Err(Error::domain("steps_per_day must be positive"));
        }
        let mut init = seed::rng(seed, "init");
        let w = config.w_state;
        let actor = DenseNet::new(
            &[w, ACTOR_HIDDEN, ACTOR_HIDDEN, 1],
            &[Activation::Relu, Activation::Relu, Activation::Linear],
            &mut init,
        )?;
        let critic = DenseNet::new(
            &[w + 1, CRITIC_HIDDEN, CRITIC_HIDDEN, 1],
            &[Activation::Relu, Activation::Relu, Activation::Linear],
            &mut init,
        )?;
        Ok(Self::assemble(config, seed, steps_per_day, reward_scale, actor, critic))
    }

    fn assemble(
        config: DdpgConfig,
        seed: u64,
        steps_per_day: usize,
        reward_scale: f64,
        actor: DenseNet,
        critic: DenseNet,
    ) -> Self {
        DdpgAgent {
            actor_opt: AdamState::new(&actor, config.learning_rate),
            critic_opt: AdamState::new(&critic, config.learning_rate),
            target_actor: actor.clone(),
            target_critic: critic.clone(),
            replay: ReplayBuffer::new(config.replay_capacity, seed::derive(seed, "replay")),
            noise: OuProcess::new(config.ou_theta, config.ou_mu, config.ou_sigma, seed::derive(seed, "ou")),
            warmup_rng: seed::rng(seed, "warmup"),
            actor,
            critic,
            config,
            seed,
            steps_per_day,
            reward_scale,
            act_calls: 0,
            learn_calls: 0,
            updates: 0,
        }
    }

    pub fn config(&self) -> &DdpgConfig {
        &self.config
    }

    pub fn actor(&self) -> &DenseNet {
        &self.actor
    }

    pub fn critic(&self) -> &DenseNet {
        &self.critic
    }

    pub fn replay(&self) -> &ReplayBuffer {
        &self.replay
    }

    pub fn reward_scale(&self) -> f64 {
        self.reward_scale
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn noise_state(&self) -> f64 {
        self.noise.x
    }

    /// Number of `store_and_learn` calls between hard target syncs.
    pub fn target_interval(&self) -> u64 {
        (self.config.target_update_days * self.steps_per_day) as u64
    }

    fn check_state(&self, state: &[f64]) -> Result<()> {
        if state.len() != self.config.w_state {
            return Err(Error::domain(format!(
                "state has {} entries, agent expects {}",
                state.len(),
                self.config.w_state
            )));
        }
        if !state.iter().all(|v| v.is_finite()) {
            return Err(Error::domain("state contains non-finite values"));
        }
        Ok(())
    }

    /// Raw actor score for a state.
    pub fn raw_action(&self, state: &[f64]) -> Result<f64> {
        self.check_state(state)?;
        Ok(self.actor.forward(state)?[0])
    }

    /// Chooses a margin. With `explore`, the first `warmup_steps` calls act
    /// uniformly at random and later calls perturb the actor with OU noise.
    pub fn act(&mut self, state: &[f64], explore: bool) -> Result<Margin> {
        let raw = self.raw_action(state)?;
        if !explore {
            return Ok(Margin::clamped(squash(raw)));
        }
        self.act_calls += 1;
        if self.act_calls <= self.config.warmup_steps as u64 {
            return Ok(Margin::clamped(self.warmup_rng.random_range(0.0..MAX_MARGIN)));
        }
        Ok(Margin::clamped(squash(raw + self.noise.sample())))
    }

    /// Q-value of `(state, action)` under the live critic, in normalized
    /// reward units.
    pub fn q_value(&self, state: &[f64], action: f64) -> Result<f64> {
        self.check_state(state)?;
        Ok(self.critic.forward(&critic_input(state, action))?[0])
    }

    /// Stores a transition and, once the buffer holds
    /// `max(batch_size, warmup_steps)` entries, runs one critic and one
    /// actor update on a uniformly sampled batch.
    pub fn store_and_learn(&mut self, transition: Transition) -> LearnStats {
        let mut stats = LearnStats::default();
        if !transition.is_valid(self.config.w_state) {
            stats.rejected = true;
            return stats;
        }
        self.replay.push(transition);
        self.learn_calls += 1;

        let threshold = self.config.batch_size.max(self.config.warmup_steps);
        if self.replay.len() >= threshold {
            let batch = self.replay.sample_indices(self.config.batch_size);
            match self.update(&batch) {
                Some((critic_loss, actor_objective)) => {
                    stats.updated = true;
                    stats.critic_loss = Some(critic_loss);
                    stats.actor_objective = Some(actor_objective);
                }
                None => stats.rejected = true,
            }
        }
        if self.learn_calls.is_multiple_of(self.target_interval()) {
            self.sync_targets();
            stats.target_synced = true;
        }
        stats
    }

    pub fn sync_targets(&mut self) {
        self.target_actor
            .copy_from(&self.actor, CopyMode::Hard)
            .expect("target actor shape");
        self.target_critic
            .copy_from(&self.critic, CopyMode::Hard)
            .expect("target critic shape");
    }

    fn update(&mut self, batch: &[usize]) -> Option<(f64, f64)> {
        let transitions: Vec<&Transition> = batch.iter().map(|&i| self.replay.get(i)).collect::<Option<_>>()?;
        let (critic_loss, critic_grads) = self.critic_gradient(&transitions).ok()?;
        if !critic_loss.is_finite() || !critic_grads.is_finite() {
            return None;
        }
        let states: Vec<&[f64]> = transitions.iter().map(|t| t.state.as_slice()).collect();
        self.critic_opt.apply(&mut self.critic, &critic_grads).ok()?;

        let (objective, actor_grads) = self.actor_gradient(&states).ok()?;
        if !objective.is_finite() || !actor_grads.is_finite() {
            return None;
        }
        self.actor_opt.apply(&mut self.actor, &actor_grads).ok()?;
        self.updates += 1;
        Some((critic_loss, objective))
    }

    /// Critic loss against the bootstrapped targets
    /// `r / reward_scale + gamma * Q'(s', mu'(s'))`, and its gradient.
    pub fn critic_gradient(&self, batch: &[&Transition]) -> Result<(f64, Gradients)> {
        let n = batch.len() as f64;
        let loss = self.config.critic_loss;
        let mut grads = Gradients::zeros_like(&self.critic);
        let mut total = 0.0;
        for t in batch {
            let next_action = squash(self.target_actor.forward(&t.next_state)?[0]);
            let next_q = self.target_critic.forward(&critic_input(&t.next_state, next_action))?[0];
            let target = t.reward / self.reward_scale + self.config.gamma * next_q;
            let trace = self.critic.forward_trace(&critic_input(&t.state, t.action))?;
            let q = trace.output()[0];
            total += loss.value(q, target) / n;
            self.critic
                .backward_into(&trace, &[loss.gradient(q, target) / n], &mut grads)?;
        }
        Ok((total, grads))
    }

    /// Mean `Q(s, squash(actor(s)))` over `states`, and the gradient of its
    /// negation w.r.t. the actor parameters (the actor descends it).
    pub fn actor_gradient(&self, states: &[&[f64]]) -> Result<(f64, Gradients)> {
        let n = states.len() as f64;
        let w = self.config.w_state;
        let mut grads = Gradients::zeros_like(&self.actor);
        let mut scratch = Gradients::zeros_like(&self.critic);
        let mut objective = 0.0;
        for state in states {
            let actor_trace: ForwardTrace = self.actor.forward_trace(state)?;
            let raw = actor_trace.output()[0];
            let critic_trace = self.critic.forward_trace(&critic_input(state, squash(raw)))?;
            objective += critic_trace.output()[0] / n;
            let input_grad = self.critic.backward_into(&critic_trace, &[-1.0 / n], &mut scratch)?;
            let upstream = input_grad[w] * squash_slope(raw);
            self.actor.backward_into(&actor_trace, &[upstream], &mut grads)?;
        }
        Ok((objective, grads))
    }

    /// Mean `Q(s, squash(actor(s)))` under the live networks.
    pub fn policy_value(&self, states: &[&[f64]]) -> Result<f64> {
        let mut total = 0.0;
        for s in states {
            let a = squash(self.actor.forward(s)?[0]);
            total += self.critic.forward(&critic_input(s, a))?[0];
        }
        Ok(total / states.len() as f64)
    }

    pub fn actor_mut(&mut self) -> &mut DenseNet {
        &mut self.actor
    }

    pub fn critic_mut(&mut self) -> &mut DenseNet {
        &mut self.critic
    }

    /// Serializes configuration, normalization constant, OU state and all
    /// four networks. The replay buffer and optimizer moments are not saved.
    pub fn to_checkpoint(&self) -> String {
        let c = &self.config;
        let mut s = String::new();
        writeln!(s, "ddpg-agent 1").unwrap();
        writeln!(s, "seed {}", self.seed).unwrap();
        writeln!(s, "steps_per_day {}", self.steps_per_day).unwrap();
        writeln!(s, "w_state {}", c.w_state).unwrap();
        writeln!(s, "replay_capacity {}", c.replay_capacity).unwrap();
        writeln!(s, "batch_size {}", c.batch_size).unwrap();
        writeln!(s, "warmup_steps {}", c.warmup_steps).unwrap();
        writeln!(s, "target_update_days {}", c.target_update_days).unwrap();
        writeln!(
            s,
            "critic_loss {}",
            if c.critic_loss == Loss::Mae { "mae" } else { "mse" }
        )
        .unwrap();
        writeln!(s, "per_host_agents {}", c.per_host_agents).unwrap();
        write_values(
            &mut s,
            "reals",
            &[
                c.learning_rate,
                c.gamma,
                c.ou_theta,
                c.ou_mu,
                c.ou_sigma,
                c.train_fraction,
                self.reward_scale,
                self.noise.x,
            ],
        );
        for (name, net) in [
            ("actor", &self.actor),
            ("critic", &self.critic),
            ("target_actor", &self.target_actor),
            ("target_critic", &self.target_critic),
        ] {
            writeln!(s, "net {name}").unwrap();
            s.push_str(&net.to_checkpoint());
        }
        writeln!(s, "end").unwrap();
        s
    }

    pub fn from_checkpoint(text: &str) -> Result<Self> {
        let mut lines = CheckpointLines::new(text);
        let h = "header";
        if lines.expect(h, "ddpg-agent")? != ["1"] {
            return Err(Error::checkpoint(h, "unsupported version"));
        }
        let int = |lines: &mut CheckpointLines<'_>, key: &str| -> Result<u64> {
            let tok = lines.expect(h, key)?;
            match tok.as_slice() {
                [v] => v.parse().map_err(|_| Error::checkpoint(h, format!("bad `{key}`"))),
                _ => Err(Error::checkpoint(h, format!("malformed `{key}`"))),
            }
        };
        let seed = int(&mut lines, "seed")?;
        let steps_per_day = int(&mut lines, "steps_per_day")? as usize;
        let w_state = int(&mut lines, "w_state")? as usize;
        let replay_capacity = int(&mut lines, "replay_capacity")? as usize;
        let batch_size = int(&mut lines, "batch_size")? as usize;
        let warmup_steps = int(&mut lines, "warmup_steps")? as usize;
        let target_update_days = int(&mut lines, "target_update_days")? as usize;
        let critic_loss: Loss = match lines.expect(h, "critic_loss")?.as_slice() {
            [v] => v.parse().map_err(|e: Error| Error::checkpoint(h, e.to_string()))?,
            _ => return Err(Error::checkpoint(h, "malformed `critic_loss`")),
        };
        let per_host_agents = match lines.expect(h, "per_host_agents")?.as_slice() {
            ["true"] => true,
            ["false"] => false,
            _ => return Err(Error::checkpoint(h, "malformed `per_host_agents`")),
        };
        let reals = lines.values(h, "reals", 8)?;
        let config = DdpgConfig {
            learning_rate: reals[0],
            gamma: reals[1],
            replay_capacity,
            batch_size,
            warmup_steps,
            ou_theta: reals[2],
            ou_mu: reals[3],
            ou_sigma: reals[4],
            target_update_days,
            w_state,
            train_fraction: reals[5],
            critic_loss,
            per_host_agents,
        };
        config.validate().map_err(|e| Error::checkpoint(h, e.to_string()))?;

        let mut nets = Vec::with_capacity(4);
        for name in ["actor", "critic", "target_actor", "target_critic"] {
            if lines.expect(name, "net")? != [name] {
                return Err(Error::checkpoint(name, "network out of order"));
            }
            nets.push(DenseNet::read_checkpoint(&mut lines, name)?);
        }
        lines.expect("trailer", "end")?;
        if !lines.is_done() {
            return Err(Error::checkpoint("trailer", "unexpected data after `end`"));
        }
        let [actor, critic, target_actor, target_critic]: [DenseNet; 4] = nets.try_into().expect("four networks");

        let expect_actor = vec![
            (w_state, ACTOR_HIDDEN, Activation::Relu),
            (ACTOR_HIDDEN, ACTOR_HIDDEN, Activation::Relu),
            (ACTOR_HIDDEN, 1, Activation::Linear),
        ];
        let expect_critic = vec![
            (w_state + 1, CRITIC_HIDDEN, Activation::Relu),
            (CRITIC_HIDDEN, CRITIC_HIDDEN, Activation::Relu),
            (CRITIC_HIDDEN, 1, Activation::Linear),
        ];
        if actor.shape() != expect_actor || target_actor.shape() != expect_actor {
            return Err(Error::checkpoint("actor", "architecture mismatch"));
        }
        if critic.shape() != expect_critic || target_critic.shape() != expect_critic {
            return Err(Error::checkpoint("critic", "architecture mismatch"));
        }

        let mut agent = DdpgAgent::assemble(config, seed, steps_per_day, reals[6], actor, critic);
        if agent.reward_scale.is_nan() || agent.reward_scale <= 0.0 || steps_per_day == 0 {
            return Err(Error::checkpoint(h, "invalid reward scale or steps_per_day"));
        }
        agent.target_actor = target_actor;
        agent.target_critic = target_critic;
        agent.noise.x = reals[7];
        Ok(agent)
    }
}

fn critic_input(state: &[f64], action: f64) -> Vec<f64> {
    let mut v = Vec::with_capacity(state.len() + 1);
    v.extend_from_slice(state);
    v.push(action);
    v
}

/// Frozen-policy view: the agent acts greedily on the error window.
impl MarginStrategy for DdpgAgent {
    fn name(&self) -> String {
        "releaser".to_string()
    }

    fn select_margin(&mut self, obs: &Observation<'_>) -> Margin {
        self.act(obs.error_window, false).unwrap_or(Margin::ZERO)
    }
}
