//! Synchronous advantage actor-critic for the pose controller, trained in
//! the render-free simulator with randomly drawn switcher labels.
//!
//! Cameras labelled `Vision` are driven by the virtual tracker. Cameras
//! labelled `Pose` sample from the policy, and only those camera-steps are
//! recorded and contribute gradients.

use rand::RngCore;
use rayon::prelude::*;

use super::network::{backward, forward, init_params, ForwardCache, PolicyParams, PoseObservation};
use crate::controllers::{
    choose_action, random_switch, virtual_tracker_action, PolicyMode, PoseMessage, SwitchLabel,
};
use crate::error::{Error, Result};
use crate::shell::config::{EpisodeConfig, TrainConfig};
use crate::shell::rng::RngStream;
use crate::world::{spawn_episode, WorldState};

/// Mean absolute parameter value beyond which training is aborted.
const DIVERGENCE_LIMIT: f64 = 1e3;

/// Discounted returns `G_t = r_t + gamma G_{t+1}` with `G_T = bootstrap`.
pub fn compute_returns(rewards: &[f64], bootstrap: f64, gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = bootstrap;
    for (g, r) in out.iter_mut().zip(rewards).rev() {
        acc = r + gamma * acc;
        *g = acc;
    }
    out
}

/// One row of the training log.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateLog {
    pub update_idx: usize,
    /// Cumulative environment steps, summed over environments.
    pub env_steps: u64,
    /// Cumulative policy-controlled camera-steps.
    pub pose_steps: u64,
    /// Mean reward of this update's policy-controlled camera-steps.
    pub mean_reward_g0: f64,
    pub entropy: f64,
    pub value_loss: f64,
    /// Pre-clip global gradient norm.
    pub grad_norm: f64,
    /// Number of transitions in this update.
    pub transitions: usize,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: PolicyParams,
    pub log: Vec<UpdateLog>,
}

struct Transition {
    cache: ForwardCache,
    action: usize,
    reward: f64,
    done: bool,
}

struct Env {
    world: WorldState,
    rng: RngStream,
    labels: Vec<SwitchLabel>,
}

impl Env {
    fn new(episode: &EpisodeConfig, train: &TrainConfig, index: usize) -> Result<Self> {
        let mut rng = RngStream::new(train.seed, 1 + index as u64);
        let world = spawn_episode(episode, rng.next_u64())?;
        let mut env = Self {
            labels: Vec::new(),
            world,
            rng,
        };
        env.draw_labels(train.p_pose);
        Ok(env)
    }

    fn draw_labels(&mut self, p_pose: f64) {
        let n = self.world.n_cameras();
        self.labels = (0..n)
            .map(|_| random_switch(&mut self.rng, p_pose))
            .collect();
    }

    fn messages(&self) -> Vec<PoseMessage> {
        self.world
            .cameras
            .iter()
            .zip(&self.labels)
            .enumerate()
            .map(|(index, (&pose, &label))| PoseMessage { index, pose, label })
            .collect()
    }

    /// Runs `steps` steps, returning per-camera transition streams and the
    /// bootstrap value for each stream's tail.
    fn rollout(
        &mut self,
        params: &PolicyParams,
        episode: &EpisodeConfig,
        train: &TrainConfig,
        steps: usize,
    ) -> Result<(Vec<Vec<Transition>>, Vec<f64>)> {
        let n = self.world.n_cameras();
        let h = self.world.arena_half;
        let mut streams: Vec<Vec<Transition>> = (0..n).map(|_| Vec::new()).collect();
        for _ in 0..steps {
            let messages = self.messages();
            let target = self.world.target.position();
            let mut actions = Vec::with_capacity(n);
            let mut pending = Vec::new();
            for (i, m) in messages.iter().enumerate() {
                let a = match m.label {
                    SwitchLabel::Vision => virtual_tracker_action(&m.pose, &target),
                    SwitchLabel::Pose => {
                        let obs = PoseObservation::from_messages(i, &messages, h)?;
                        let out = forward(params, &obs)?;
                        let (a, _) =
                            choose_action(&out.cache.log_probs, PolicyMode::Sample, &mut self.rng);
                        pending.push((i, out.cache, a.index()));
                        a
                    }
                };
                actions.push(a);
            }
            let outcomes = self.world.step_mut(episode, &actions, &mut self.rng)?;
            let done = self.world.t >= episode.episode_len;
            for (i, cache, action) in pending {
                streams[i].push(Transition {
                    cache,
                    action,
                    reward: outcomes[i].reward,
                    done: false,
                });
            }
            if done {
                for s in streams.iter_mut() {
                    if let Some(last) = s.last_mut() {
                        last.done = true;
                    }
                }
                self.world = spawn_episode(episode, self.rng.next_u64())?;
            }
            self.draw_labels(train.p_pose);
        }

        // Bootstrap each unfinished stream from the value of the current state,
        // seen as a pose-controlled camera.
        let mut messages = self.messages();
        let mut bootstrap = vec![0.0; n];
        for (i, s) in streams.iter().enumerate() {
            if s.last().is_some_and(|t| !t.done) {
                let saved = messages[i].label;
                messages[i].label = SwitchLabel::Pose;
                let obs = PoseObservation::from_messages(i, &messages, h)?;
                bootstrap[i] = forward(params, &obs)?.value;
                messages[i].label = saved;
            }
        }
        Ok((streams, bootstrap))
    }
}

struct Batch {
    grad: PolicyParams,
    count: usize,
    reward_sum: f64,
    entropy_sum: f64,
    value_loss_sum: f64,
}

fn accumulate(
    params: &PolicyParams,
    train: &TrainConfig,
    streams: &[Vec<Transition>],
    bootstrap: &[f64],
) -> Result<Batch> {
    let mut batch = Batch {
        grad: PolicyParams::zeros(),
        count: 0,
        reward_sum: 0.0,
        entropy_sum: 0.0,
        value_loss_sum: 0.0,
    };
    for (stream, &tail) in streams.iter().zip(bootstrap) {
        // Split at episode ends; finished segments bootstrap from zero.
        let mut start = 0;
        while start < stream.len() {
            let end = stream[start..]
                .iter()
                .position(|t| t.done)
                .map_or(stream.len(), |k| start + k + 1);
            let segment = &stream[start..end];
            let boot = if segment.last().is_some_and(|t| t.done) {
                0.0
            } else {
                tail
            };
            let rewards: Vec<f64> = segment.iter().map(|t| t.reward).collect();
            let returns = compute_returns(&rewards, boot, train.gamma);
            for (t, g) in segment.iter().zip(returns) {
                let advantage = g - t.cache.value;
                let grad = backward(
                    params,
                    &t.cache,
                    t.action,
                    advantage,
                    g,
                    train.entropy_coeff,
                    train.value_coeff,
                )?;
                batch.grad.add_scaled(&grad, 1.0);
                batch.count += 1;
                batch.reward_sum += t.reward;
                batch.entropy_sum -= t.cache.log_probs.iter().map(|l| l.exp() * l).sum::<f64>();
                batch.value_loss_sum += (t.cache.value - g).powi(2);
            }
            start = end;
        }
    }
    Ok(batch)
}

/// Trains the pose policy from a fresh initialization.
pub fn train_pose_controller(train: &TrainConfig, episode: &EpisodeConfig) -> Result<TrainOutcome> {
    train_from(init_params(train.seed), train, episode, |_| {})
}

/// Trains from given parameters, calling `on_update` after every update.
pub fn train_from(
    mut params: PolicyParams,
    train: &TrainConfig,
    episode: &EpisodeConfig,
    mut on_update: impl FnMut(&UpdateLog),
) -> Result<TrainOutcome> {
    train.validate()?;
    episode.validate()?;
    params.validate()?;

    let mut envs = (0..train.n_envs)
        .map(|e| Env::new(episode, train, e))
        .collect::<Result<Vec<_>>>()?;

    let mut log = Vec::new();
    let mut pose_steps = 0u64;
    let mut env_steps = 0u64;
    while pose_steps < train.total_steps {
        let snapshot = &params;
        let rollouts = envs
            .par_iter_mut()
            .map(|env| env.rollout(snapshot, episode, train, train.rollout_len))
            .collect::<Result<Vec<_>>>()?;
        env_steps += (train.n_envs * train.rollout_len) as u64;

        let batches = rollouts
            .par_iter()
            .map(|(streams, boot)| accumulate(snapshot, train, streams, boot))
            .collect::<Result<Vec<_>>>()?;

        let mut grad = PolicyParams::zeros();
        let (mut count, mut reward, mut entropy, mut value_loss) = (0usize, 0.0, 0.0, 0.0);
        for b in &batches {
            grad.add_scaled(&b.grad, 1.0);
            count += b.count;
            reward += b.reward_sum;
            entropy += b.entropy_sum;
            value_loss += b.value_loss_sum;
        }
        if count == 0 {
            continue;
        }
        grad.scale(1.0 / count as f64);
        let grad_norm = grad.l2_norm();
        if grad_norm > train.grad_clip {
            grad.scale(train.grad_clip / grad_norm);
        }
        params.add_scaled(&grad, -train.learning_rate);
        let mean_abs = params.mean_abs();
        if mean_abs.is_nan() || mean_abs > DIVERGENCE_LIMIT {
            return Err(Error::Divergence(format!(
                "mean |param| = {mean_abs} after update {}",
                log.len()
            )));
        }

        pose_steps += count as u64;
        let entry = UpdateLog {
            update_idx: log.len(),
            env_steps,
            pose_steps,
            mean_reward_g0: reward / count as f64,
            entropy: entropy / count as f64,
            value_loss: value_loss / count as f64,
            grad_norm,
            transitions: count,
        };
        on_update(&entry);
        log.push(entry);
    }
    Ok(TrainOutcome { params, log })
}

/// Mean policy-step reward over the first `window` policy-controlled
/// camera-steps of a log, and over the last `window`.
pub fn reward_window_means(log: &[UpdateLog], window: u64) -> (f64, f64) {
    fn mean<'a>(rows: impl Iterator<Item = &'a UpdateLog>, window: u64) -> f64 {
        let (mut n, mut sum) = (0u64, 0.0);
        for r in rows {
            if n >= window {
                break;
            }
            n += r.transitions as u64;
            sum += r.mean_reward_g0 * r.transitions as f64;
        }
        if n == 0 {
            0.0
        } else {
            sum / n as f64
        }
    }
    (mean(log.iter(), window), mean(log.iter().rev(), window))
}
