//! Decentralised multi-agent PPO: every courier of a learner group samples from
//! a shared policy network, transitions go into a joint replay memory, and a
//! value network with a periodically frozen target copy supplies the critic.

use std::collections::VecDeque;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::{ghav_action, ghep_action, mbm_action, random_action, Scoring};
use crate::domain::NUM_ACTIONS;
use crate::error::{Error, Result};
use crate::neural::{entropy, greedy, sample, softmax, Adam, DenseNet, Gradients, HIDDEN_UNITS};
use crate::scenario::ProblemInstance;
use crate::seeds::derive_seed;
use crate::sim::{run_episode, Dispatcher, EpisodeResult, Snapshot};
use crate::state::{encode, StateFeatures, Variant};

/// One executed decision of one courier, ready for learning.
#[derive(Clone, Debug)]
pub struct Transition {
    pub state: Arc<StateFeatures>,
    pub action: usize,
    /// Probability the policy assigned to `action` when it was taken.
    pub behavior_prob: f64,
    pub reward: f64,
    pub shaped_reward: f64,
    /// `None` for the last decision of the episode.
    pub next_state: Option<Arc<StateFeatures>>,
    pub value_target: f64,
    pub advantage: f64,
    pub courier: usize,
    pub episode: usize,
    /// Position in the courier's own trajectory.
    pub t: usize,
}

/// FIFO replay memory.
#[derive(Clone, Debug)]
pub struct ReplayMemory {
    capacity: usize,
    items: VecDeque<Transition>,
}

impl ReplayMemory {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            items: VecDeque::with_capacity(capacity.min(1 << 16)),
        }
    }

    pub fn push(&mut self, t: Transition) -> Result<()> {
        if !(t.behavior_prob > 0.0 && t.behavior_prob <= 1.0) {
            return Err(Error::Transition(format!(
                "behaviour probability {} outside (0, 1]",
                t.behavior_prob
            )));
        }
        if !t.value_target.is_finite() || !t.advantage.is_finite() {
            return Err(Error::NonFinite("transition target"));
        }
        if self.capacity == 0 {
            return Ok(());
        }
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
        Ok(())
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

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }

    fn sample_batch(&self, batch: usize, rng: &mut ChaCha8Rng) -> Vec<&Transition> {
        (0..batch)
            .map(|_| &self.items[rng.random_range(0..self.items.len())])
            .collect()
    }
}

/// A reward and the time it was earned.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Completion {
    pub time: f64,
    pub reward: f64,
}

/// `r + alpha * R_team`, where `R_team` is the mean raw reward of all
/// completions (any courier, this one included) inside `[start, end]`.
pub fn shape_reward(reward: f64, start: f64, end: f64, completions: &[Completion], alpha: f64) -> f64 {
    let inside: Vec<f64> = completions
        .iter()
        .filter(|c| c.time >= start && c.time <= end)
        .map(|c| c.reward)
        .collect();
    let team = if inside.is_empty() {
        0.0
    } else {
        inside.iter().sum::<f64>() / inside.len() as f64
    };
    reward + alpha * team
}

/// Value targets and advantages for one courier's complete trajectory.
///
/// `target(t) = r_t + gamma * V_target(s_{t+1})` with a zero terminal value;
/// `advantage(t) = sum_k gamma^(k-t) r_k - V(s_t)`.
pub fn compute_targets(
    rewards: &[f64],
    states: &[Arc<StateFeatures>],
    value: &DenseNet,
    target: &DenseNet,
    gamma: f64,
) -> Result<Vec<(f64, f64)>> {
    if rewards.len() != states.len() {
        return Err(Error::IncompleteTrajectory(rewards.len().min(states.len())));
    }
    if rewards.iter().any(|r| !r.is_finite()) {
        return Err(Error::IncompleteTrajectory(
            rewards.iter().position(|r| !r.is_finite()).unwrap_or(0),
        ));
    }
    let n = rewards.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let x = stack(states.iter().map(|s| s.data.as_slice()), value.input_dim())?;
    let v = value.forward_batch(x.view())?;
    let vt = target.forward_batch(x.view())?;
    let mut out = vec![(0.0, 0.0); n];
    let mut ret = 0.0;
    for t in (0..n).rev() {
        let boot = if t + 1 < n { vt[[t + 1, 0]] } else { 0.0 };
        ret = rewards[t] + gamma * ret;
        out[t] = (rewards[t] + gamma * boot, ret - v[[t, 0]]);
    }
    Ok(out)
}

fn stack<'a>(rows: impl Iterator<Item = &'a [f64]>, width: usize) -> Result<Array2<f64>> {
    let mut data = Vec::new();
    let mut count = 0;
    for r in rows {
        if r.len() != width {
            return Err(Error::Dimension {
                expected: width,
                got: r.len(),
            });
        }
        data.extend_from_slice(r);
        count += 1;
    }
    Ok(Array2::from_shape_vec((count, width), data).expect("rows have equal width"))
}

/// Batch-mean squared error of the value net and its gradient.
pub fn value_loss(net: &DenseNet, batch: &[&Transition]) -> Result<(f64, Gradients)> {
    let x = stack(batch.iter().map(|t| t.state.data.as_slice()), net.input_dim())?;
    let v = net.forward_batch(x.view())?;
    let n = batch.len() as f64;
    let mut up = Array2::zeros((batch.len(), 1));
    let mut loss = 0.0;
    for (i, t) in batch.iter().enumerate() {
        let d = v[[i, 0]] - t.value_target;
        loss += d * d / n;
        up[[i, 0]] = 2.0 * d / n;
    }
    Ok((loss, net.backward_batch(x.view(), up.view())?))
}

/// Negative batch-mean clipped surrogate and its gradient (minimising it
/// ascends the surrogate).
pub fn ppo_loss(net: &DenseNet, batch: &[&Transition], clip: f64) -> Result<(f64, Gradients)> {
    let x = stack(batch.iter().map(|t| t.state.data.as_slice()), net.input_dim())?;
    let logits = net.forward_batch(x.view())?;
    let n = batch.len() as f64;
    let mut up = Array2::zeros(logits.raw_dim());
    let mut loss = 0.0;
    for (i, t) in batch.iter().enumerate() {
        let row = logits.row(i);
        let probs = softmax(row.as_slice().expect("contiguous row"))?;
        let ratio = probs[t.action] / t.behavior_prob;
        let a = t.advantage;
        let unclipped = ratio * a;
        let clipped = ratio.clamp(1.0 - clip, 1.0 + clip) * a;
        loss -= unclipped.min(clipped) / n;
        if unclipped <= clipped {
            // d ratio / d logit_j = ratio * (1[j = a] - p_j)
            for (j, p) in probs.iter().enumerate() {
                let onehot = if j == t.action { 1.0 } else { 0.0 };
                up[[i, j]] = -a * ratio * (onehot - p) / n;
            }
        }
    }
    Ok((loss, net.backward_batch(x.view(), up.view())?))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Imitation {
    None,
    /// The expert takes every decision before episode `until`.
    Full { until: usize },
    /// Each decision goes to the expert with probability `prob` before `until`.
    Mixed { prob: f64, until: usize },
}

/// Policy driving a group of couriers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupPolicy {
    /// Trained network; groups naming the same learner share nets and memory.
    Learner(usize),
    Random,
    Ghav,
    Ghep,
    Mbm,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FleetGroup {
    pub couriers: usize,
    pub policy: GroupPolicy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub episodes: usize,
    pub gamma: f64,
    pub alpha: f64,
    pub n1: usize,
    pub n2: usize,
    pub batch: usize,
    pub lr: f64,
    pub clip: f64,
    pub target_refresh: usize,
    pub memory: usize,
    pub hidden: usize,
    pub variant: Variant,
    pub imitation: Imitation,
    pub expert: Scoring,
    /// Empty means one learner for the whole fleet.
    pub fleet: Vec<FleetGroup>,
    /// Greedy evaluation on the held-out set every this many episodes (0 = never).
    pub eval_every: usize,
    pub learn: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            episodes: 10_000,
            gamma: 0.8,
            alpha: 0.5,
            n1: 10,
            n2: 10,
            batch: 1024,
            lr: 5e-4,
            clip: 0.2,
            target_refresh: 10,
            memory: 20_000,
            hidden: HIDDEN_UNITS,
            variant: Variant::Basic,
            imitation: Imitation::None,
            expert: Scoring::Rate,
            fleet: Vec::new(),
            eval_every: 0,
            learn: true,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.into()));
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return fail("gamma must lie in (0, 1)");
        }
        if !(self.alpha >= 0.0) {
            return fail("alpha must be non-negative");
        }
        if !(self.clip > 0.0 && self.clip < 1.0) {
            return fail("clip epsilon must lie in (0, 1)");
        }
        if !(self.lr > 0.0) || self.batch == 0 || self.hidden == 0 {
            return fail("learning rate, batch size and hidden width must be positive");
        }
        if let Imitation::Mixed { prob, .. } = self.imitation {
            if !(0.0..=1.0).contains(&prob) {
                return fail("imitation probability must lie in [0, 1]");
            }
        }
        Ok(())
    }

    /// Policy of every courier for a fleet of `couriers`.
    pub fn groups_for(&self, couriers: usize) -> Result<Vec<GroupPolicy>> {
        if self.fleet.is_empty() {
            return Ok(vec![GroupPolicy::Learner(0); couriers]);
        }
        let out: Vec<GroupPolicy> = self
            .fleet
            .iter()
            .flat_map(|g| std::iter::repeat_n(g.policy, g.couriers))
            .collect();
        if out.len() != couriers {
            return Err(Error::Config(format!(
                "fleet groups cover {} couriers, instance has {couriers}",
                out.len()
            )));
        }
        Ok(out)
    }

    pub fn learner_count(&self) -> usize {
        self.fleet
            .iter()
            .filter_map(|g| match g.policy {
                GroupPolicy::Learner(l) => Some(l + 1),
                _ => None,
            })
            .max()
            .unwrap_or(1)
    }
}

/// Networks, optimisers and memory of one learner.
pub struct Learner {
    pub policy: DenseNet,
    pub value: DenseNet,
    pub target: DenseNet,
    policy_opt: Adam,
    value_opt: Adam,
    pub memory: ReplayMemory,
}

impl Learner {
    pub fn new(config: &TrainConfig, index: usize) -> Self {
        let input = config.variant.input_len();
        let policy = DenseNet::new(
            input,
            config.hidden,
            NUM_ACTIONS,
            derive_seed(config.seed, "policy-net", index as u64),
        );
        let value = DenseNet::new(
            input,
            config.hidden,
            1,
            derive_seed(config.seed, "value-net", index as u64),
        );
        Self {
            policy_opt: Adam::new(&policy, config.lr),
            value_opt: Adam::new(&value, config.lr),
            target: value.clone(),
            policy,
            value,
            memory: ReplayMemory::new(config.memory),
        }
    }

    /// `iterations` Adam steps on batch-mean squared error; returns the mean loss.
    pub fn value_update(&mut self, iterations: usize, batch: usize, rng: &mut ChaCha8Rng) -> Result<f64> {
        if self.memory.is_empty() || iterations == 0 {
            return Ok(0.0);
        }
        let mut total = 0.0;
        for _ in 0..iterations {
            let b = self.memory.sample_batch(batch, rng);
            let (loss, g) = value_loss(&self.value, &b)?;
            self.value_opt.update(&mut self.value, &g)?;
            total += loss;
        }
        Ok(total / iterations as f64)
    }

    /// `iterations` Adam steps on the clipped surrogate; returns the mean loss.
    pub fn policy_update(
        &mut self,
        iterations: usize,
        batch: usize,
        clip: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<f64> {
        if self.memory.is_empty() || iterations == 0 {
            return Ok(0.0);
        }
        let mut total = 0.0;
        for _ in 0..iterations {
            let b = self.memory.sample_batch(batch, rng);
            let (loss, g) = ppo_loss(&self.policy, &b, clip)?;
            self.policy_opt.update(&mut self.policy, &g)?;
            total += loss;
        }
        Ok(total / iterations as f64)
    }
}

/// How a learner's courier picks among its policy's probabilities.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Selection {
    Sample,
    Greedy,
}

/// Trained policy as a dispatcher (used for evaluation and export).
#[derive(Clone, Debug)]
pub struct MarlPolicy {
    pub net: DenseNet,
    pub variant: Variant,
    pub selection: Selection,
}

impl MarlPolicy {
    pub fn probabilities(&self, snapshot: &Snapshot<'_>, courier: usize) -> Result<Vec<f64>> {
        let s = encode(snapshot, courier, self.variant);
        softmax(&self.net.forward(&s.data)?)
    }
}

impl Dispatcher for MarlPolicy {
    fn dispatch(&mut self, s: &Snapshot<'_>, courier: usize, rng: &mut ChaCha8Rng) -> Result<usize> {
        let p = self.probabilities(s, courier)?;
        Ok(match self.selection {
            Selection::Sample => sample(&p, rng),
            Selection::Greedy => greedy(&p),
        })
    }
}

fn baseline_action(
    policy: GroupPolicy,
    s: &Snapshot<'_>,
    courier: usize,
    rng: &mut ChaCha8Rng,
) -> Result<usize> {
    Ok(match policy {
        GroupPolicy::Random => random_action(rng),
        GroupPolicy::Ghav => ghav_action(s, courier),
        GroupPolicy::Ghep => ghep_action(s, courier, Scoring::Rate),
        GroupPolicy::Mbm => mbm_action(s, courier, Scoring::Rate)?,
        GroupPolicy::Learner(_) => unreachable!("learners are handled by the caller"),
    })
}

#[derive(Clone, Debug)]
struct Decision {
    state: Arc<StateFeatures>,
    action: usize,
    behavior_prob: f64,
}

/// Dispatcher used during collection: runs the learners' policies (or the
/// expert) and records what each learner courier saw and did.
struct Collector<'a> {
    nets: Vec<&'a DenseNet>,
    groups: &'a [GroupPolicy],
    variant: Variant,
    selection: Selection,
    expert: Scoring,
    expert_prob: f64,
    decisions: Vec<Vec<Decision>>,
    entropy_sum: f64,
}

impl Dispatcher for Collector<'_> {
    fn dispatch(&mut self, s: &Snapshot<'_>, courier: usize, rng: &mut ChaCha8Rng) -> Result<usize> {
        let GroupPolicy::Learner(l) = self.groups[courier] else {
            return baseline_action(self.groups[courier], s, courier, rng);
        };
        let state = encode(s, courier, self.variant);
        let probs = softmax(&self.nets[l].forward(&state.data)?)?;
        self.entropy_sum += entropy(&probs);
        let use_expert = self.expert_prob >= 1.0
            || (self.expert_prob > 0.0 && rng.random::<f64>() < self.expert_prob);
        let action = if use_expert {
            ghep_action(s, courier, self.expert)
        } else {
            match self.selection {
                Selection::Sample => sample(&probs, rng),
                Selection::Greedy => greedy(&probs),
            }
        };
        self.decisions[courier].push(Decision {
            state: Arc::new(state),
            action,
            behavior_prob: probs[action],
        });
        Ok(action)
    }

    fn fleet_of(&self, courier: usize) -> usize {
        fleet_tag(self.groups[courier])
    }
}

/// Numeric tag reported per courier: learners keep their index, baselines
/// are numbered after them (100 + kind).
pub fn fleet_tag(policy: GroupPolicy) -> usize {
    match policy {
        GroupPolicy::Learner(l) => l,
        GroupPolicy::Random => 100,
        GroupPolicy::Ghav => 101,
        GroupPolicy::Ghep => 102,
        GroupPolicy::Mbm => 103,
    }
}

/// Evaluation dispatcher for a (possibly mixed) fleet.
pub struct FleetPolicy {
    pub learners: Vec<MarlPolicy>,
    pub groups: Vec<GroupPolicy>,
}

impl Dispatcher for FleetPolicy {
    fn dispatch(&mut self, s: &Snapshot<'_>, courier: usize, rng: &mut ChaCha8Rng) -> Result<usize> {
        match self.groups[courier] {
            GroupPolicy::Learner(l) => self.learners[l].dispatch(s, courier, rng),
            other => baseline_action(other, s, courier, rng),
        }
    }

    fn fleet_of(&self, courier: usize) -> usize {
        fleet_tag(self.groups[courier])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub episode: usize,
    pub train_score: f64,
    pub eval_score: Option<f64>,
    pub value_loss: f64,
    pub mean_entropy: f64,
}

pub fn write_learning_curve<W: Write>(rows: &[CurveRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["episode", "train_score", "eval_score", "value_loss", "mean_entropy"])?;
    for r in rows {
        w.write_record([
            r.episode.to_string(),
            r.train_score.to_string(),
            r.eval_score.map(|v| v.to_string()).unwrap_or_default(),
            r.value_loss.to_string(),
            r.mean_entropy.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Everything produced by [`train`].
pub struct TrainOutcome {
    pub learners: Vec<Learner>,
    pub curve: Vec<CurveRow>,
    /// Result of the last training episode.
    pub last_episode: Option<EpisodeResult>,
    /// Route-validator findings summed over all training episodes.
    pub route_violations: usize,
}

impl TrainOutcome {
    pub fn checkpoint(&self, variant: Variant) -> Checkpoint {
        Checkpoint {
            variant,
            policies: self.learners.iter().map(|l| l.policy.clone()).collect(),
            values: self.learners.iter().map(|l| l.value.clone()).collect(),
        }
    }
}

/// Turns one collected episode into transitions (targets included).
fn build_transitions(
    result: &EpisodeResult,
    decisions: &[Vec<Decision>],
    learner_of: impl Fn(usize) -> Option<usize>,
    learners: &[Learner],
    config: &TrainConfig,
    episode: usize,
) -> Result<Vec<(usize, Transition)>> {
    let mut completions: Vec<Completion> = result
        .actions
        .iter()
        .flatten()
        .map(|a| Completion {
            time: a.completion_time,
            reward: a.reward,
        })
        .collect();
    completions.sort_by(|a, b| a.time.total_cmp(&b.time));
    let mut out = Vec::new();
    for (c, decided) in decisions.iter().enumerate() {
        let Some(l) = learner_of(c) else { continue };
        let records = &result.actions[c];
        if records.len() != decided.len() {
            return Err(Error::IncompleteTrajectory(c));
        }
        let shaped: Vec<f64> = records
            .iter()
            .map(|a| {
                let lo = completions.partition_point(|x| x.time < a.decision_time);
                let hi = completions.partition_point(|x| x.time <= a.completion_time);
                shape_reward(a.reward, a.decision_time, a.completion_time, &completions[lo..hi], config.alpha)
            })
            .collect();
        let states: Vec<Arc<StateFeatures>> = decided.iter().map(|d| d.state.clone()).collect();
        let targets = compute_targets(&shaped, &states, &learners[l].value, &learners[l].target, config.gamma)?;
        for (t, d) in decided.iter().enumerate() {
            out.push((
                l,
                Transition {
                    state: d.state.clone(),
                    action: d.action,
                    behavior_prob: d.behavior_prob,
                    reward: records[t].reward,
                    shaped_reward: shaped[t],
                    next_state: states.get(t + 1).cloned(),
                    value_target: targets[t].0,
                    advantage: targets[t].1,
                    courier: c,
                    episode,
                    t,
                },
            ));
        }
    }
    Ok(out)
}

/// Greedy evaluation of the current learners on `instances`; returns the mean score.
pub fn evaluate(
    learners: &[MarlPolicy],
    groups: &[GroupPolicy],
    instances: &[ProblemInstance],
    seed: u64,
) -> Result<f64> {
    if instances.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for (i, inst) in instances.iter().enumerate() {
        let mut fleet = FleetPolicy {
            learners: learners.to_vec(),
            groups: groups.to_vec(),
        };
        total += run_episode(inst, &mut fleet, derive_seed(seed, "eval", i as u64))?.score;
    }
    Ok(total / instances.len() as f64)
}

/// Algorithm-1 training loop. `progress` is called after every episode.
pub fn train(
    config: &TrainConfig,
    train_set: &[ProblemInstance],
    eval_set: &[ProblemInstance],
    mut progress: impl FnMut(&CurveRow),
) -> Result<TrainOutcome> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::Config("training needs at least one instance".into()));
    }
    let mut learners: Vec<Learner> = (0..config.learner_count())
        .map(|i| Learner::new(config, i))
        .collect();
    let mut pick_rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, "instance-pick", 0));
    let mut update_rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, "minibatch", 0));
    let mut curve = Vec::with_capacity(config.episodes);
    let mut last_episode = None;
    let mut route_violations = 0;

    for episode in 0..config.episodes {
        let inst = &train_set[pick_rng.random_range(0..train_set.len())];
        let groups = config.groups_for(inst.meta.couriers)?;
        let expert_prob = match config.imitation {
            Imitation::Full { until } if episode < until => 1.0,
            Imitation::Mixed { prob, until } if episode < until => prob,
            _ => 0.0,
        };
        let mut collector = Collector {
            nets: learners.iter().map(|l| &l.policy).collect(),
            groups: &groups,
            variant: config.variant,
            selection: Selection::Sample,
            expert: config.expert,
            expert_prob,
            decisions: vec![Vec::new(); groups.len()],
            entropy_sum: 0.0,
        };
        let result = run_episode(
            inst,
            &mut collector,
            derive_seed(config.seed, "episode", episode as u64),
        )?;
        let Collector {
            decisions,
            entropy_sum,
            ..
        } = collector;
        let n_decisions: usize = decisions.iter().map(Vec::len).sum();
        let learner_of = |c: usize| match groups[c] {
            GroupPolicy::Learner(l) => Some(l),
            _ => None,
        };
        for (l, t) in build_transitions(&result, &decisions, learner_of, &learners, config, episode)? {
            learners[l].memory.push(t)?;
        }

        let mut value_loss = 0.0;
        if config.learn {
            for learner in learners.iter_mut() {
                value_loss += learner.value_update(config.n1, config.batch, &mut update_rng)?;
                learner.policy_update(config.n2, config.batch, config.clip, &mut update_rng)?;
            }
            value_loss /= learners.len() as f64;
            if config.target_refresh > 0 && (episode + 1) % config.target_refresh == 0 {
                for learner in learners.iter_mut() {
                    learner.target = learner.value.clone();
                }
            }
        }

        let eval_score = if config.eval_every > 0 && (episode + 1) % config.eval_every == 0 {
            let policies = marl_policies(&learners, config.variant, Selection::Greedy);
            let groups = match eval_set.first() {
                Some(e) => config.groups_for(e.meta.couriers)?,
                None => Vec::new(),
            };
            Some(evaluate(&policies, &groups, eval_set, config.seed)?)
        } else {
            None
        };
        let row = CurveRow {
            episode,
            train_score: result.score,
            eval_score,
            value_loss,
            mean_entropy: if n_decisions > 0 {
                entropy_sum / n_decisions as f64
            } else {
                0.0
            },
        };
        route_violations += result.route_violations;
        progress(&row);
        curve.push(row);
        last_episode = Some(result);
    }
    Ok(TrainOutcome {
        learners,
        curve,
        last_episode,
        route_violations,
    })
}

pub fn marl_policies(learners: &[Learner], variant: Variant, selection: Selection) -> Vec<MarlPolicy> {
    learners
        .iter()
        .map(|l| MarlPolicy {
            net: l.policy.clone(),
            variant,
            selection,
        })
        .collect()
}

/// Saved policy (and value) networks of every learner.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub variant: Variant,
    pub policies: Vec<DenseNet>,
    pub values: Vec<DenseNet>,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let doc = serde_json::json!({
            "variant": self.variant,
            "policies": self.policies.iter().map(DenseNet::to_json).collect::<Vec<_>>(),
            "values": self.values.iter().map(DenseNet::to_json).collect::<Vec<_>>(),
        });
        std::fs::write(path, serde_json::to_string(&doc)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        let schema = |m: &str| Error::Schema {
            path: m.into(),
            message: "missing or malformed".into(),
        };
        let variant: Variant = serde_json::from_value(doc.get("variant").cloned().ok_or_else(|| schema("variant"))?)?;
        let nets = |key: &str| -> Result<Vec<DenseNet>> {
            doc.get(key)
                .and_then(|v| v.as_array())
                .ok_or_else(|| schema(key))?
                .iter()
                .map(DenseNet::from_json)
                .collect()
        };
        let policies = nets("policies")?;
        let values = nets("values")?;
        if policies.is_empty() {
            return Err(schema("policies"));
        }
        for p in &policies {
            if p.input_dim() != variant.input_len() || p.output_dim() != NUM_ACTIONS {
                return Err(Error::Dimension {
                    expected: variant.input_len(),
                    got: p.input_dim(),
                });
            }
        }
        Ok(Self {
            variant,
            policies,
            values,
        })
    }

    pub fn policies(&self, selection: Selection) -> Vec<MarlPolicy> {
        self.policies
            .iter()
            .map(|net| MarlPolicy {
                net: net.clone(),
                variant: self.variant,
                selection,
            })
            .collect()
    }
}
