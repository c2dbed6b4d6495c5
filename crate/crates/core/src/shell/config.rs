//! Episode and training configuration, loaded from a flat JSON object.
//!
//! Every key is optional and falls back to its default; unknown keys are
//! rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Layout and dynamics of one randomized episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeConfig {
    /// Half side length of the square arena, meters.
    pub arena_half: f64,
    pub n_cameras: usize,
    pub n_obstacles: usize,
    pub obstacle_size_min: f64,
    pub obstacle_size_max: f64,
    pub obstacle_height_min: f64,
    pub obstacle_height_max: f64,
    /// Target speed range, meters per step.
    pub target_speed_min: f64,
    pub target_speed_max: f64,
    pub camera_height_min: f64,
    pub camera_height_max: f64,
    /// Initial yaw jitter around the bearing to the arena center, degrees.
    pub yaw_jitter_deg: f64,
    pub pause_probability: f64,
    pub pause_steps_min: u32,
    pub pause_steps_max: u32,
    /// Keep-out band along the walls for obstacles and target waypoints, meters.
    pub wall_margin: f64,
    pub episode_len: usize,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            arena_half: 10.0,
            n_cameras: 4,
            n_obstacles: 8,
            obstacle_size_min: 0.5,
            obstacle_size_max: 3.0,
            obstacle_height_min: 1.0,
            obstacle_height_max: 2.5,
            target_speed_min: 0.05,
            target_speed_max: 0.2,
            camera_height_min: 2.0,
            camera_height_max: 3.0,
            yaw_jitter_deg: 30.0,
            pause_probability: 0.05,
            pause_steps_min: 10,
            pause_steps_max: 30,
            wall_margin: 1.0,
            episode_len: 500,
        }
    }
}

impl EpisodeConfig {
    pub fn obstacle_free(mut self) -> Self {
        self.n_obstacles = 0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        check(
            "arena_half",
            (5.0..=20.0).contains(&self.arena_half),
            "must be in [5, 20]",
        )?;
        check(
            "n_cameras",
            (2..=8).contains(&self.n_cameras),
            "must be in [2, 8] (minimum 2)",
        )?;
        check("n_obstacles", self.n_obstacles <= 15, "must be in [0, 15]")?;
        range(
            "obstacle_size",
            self.obstacle_size_min,
            self.obstacle_size_max,
        )?;
        range(
            "obstacle_height",
            self.obstacle_height_min,
            self.obstacle_height_max,
        )?;
        range("target_speed", self.target_speed_min, self.target_speed_max)?;
        range(
            "camera_height",
            self.camera_height_min,
            self.camera_height_max,
        )?;
        check(
            "yaw_jitter_deg",
            (0.0..=180.0).contains(&self.yaw_jitter_deg),
            "must be in [0, 180]",
        )?;
        check(
            "pause_probability",
            (0.0..=1.0).contains(&self.pause_probability),
            "must be in [0, 1]",
        )?;
        check(
            "pause_steps_max",
            self.pause_steps_min <= self.pause_steps_max,
            "must not be below pause_steps_min",
        )?;
        check(
            "wall_margin",
            self.wall_margin >= 0.0 && 2.0 * self.wall_margin < self.arena_half,
            "must be non-negative and below a quarter of the arena side",
        )?;
        check(
            "obstacle_size_max",
            self.obstacle_size_max < 2.0 * (self.arena_half - self.wall_margin),
            "obstacles must fit inside the arena",
        )?;
        check("episode_len", self.episode_len >= 1, "must be at least 1")?;
        Ok(())
    }
}

/// Hyperparameters of synchronous advantage actor-critic training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub gamma: f64,
    pub learning_rate: f64,
    pub entropy_coeff: f64,
    pub value_coeff: f64,
    pub rollout_len: usize,
    pub n_envs: usize,
    pub grad_clip: f64,
    /// Budget in policy-controlled camera-steps.
    pub total_steps: u64,
    /// Probability that a camera's switcher label is drawn as 0 (pose control).
    pub p_pose: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            gamma: 0.95,
            learning_rate: 1e-3,
            entropy_coeff: 0.01,
            value_coeff: 0.5,
            rollout_len: 20,
            n_envs: 16,
            grad_clip: 5.0,
            total_steps: 300_000,
            p_pose: 0.3,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        check(
            "gamma",
            self.gamma > 0.0 && self.gamma < 1.0,
            "must be in (0, 1)",
        )?;
        check(
            "learning_rate",
            self.learning_rate > 0.0,
            "must be positive",
        )?;
        check(
            "entropy_coeff",
            self.entropy_coeff >= 0.0,
            "must be non-negative",
        )?;
        check("value_coeff", self.value_coeff > 0.0, "must be positive")?;
        check("rollout_len", self.rollout_len >= 1, "must be at least 1")?;
        check("n_envs", self.n_envs >= 1, "must be at least 1")?;
        check("grad_clip", self.grad_clip > 0.0, "must be positive")?;
        check(
            "p_pose",
            self.p_pose > 0.0 && self.p_pose <= 1.0,
            "must be in (0, 1]",
        )?;
        Ok(())
    }
}

fn check(key: &str, ok: bool, message: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::validation(key, message))
    }
}

fn range(prefix: &str, lo: f64, hi: f64) -> Result<()> {
    check(&format!("{prefix}_min"), lo > 0.0, "must be positive")?;
    check(
        &format!("{prefix}_max"),
        hi > lo,
        &format!("must exceed {prefix}_min"),
    )
}

/// On-disk layout: both configs flattened into one object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ConfigFile {
    arena_half: f64,
    n_cameras: usize,
    n_obstacles: usize,
    obstacle_size_min: f64,
    obstacle_size_max: f64,
    obstacle_height_min: f64,
    obstacle_height_max: f64,
    target_speed_min: f64,
    target_speed_max: f64,
    camera_height_min: f64,
    camera_height_max: f64,
    yaw_jitter_deg: f64,
    pause_probability: f64,
    pause_steps_min: u32,
    pause_steps_max: u32,
    wall_margin: f64,
    episode_len: usize,
    gamma: f64,
    learning_rate: f64,
    entropy_coeff: f64,
    value_coeff: f64,
    rollout_len: usize,
    n_envs: usize,
    grad_clip: f64,
    total_steps: u64,
    p_pose: f64,
    seed: u64,
}

impl Default for ConfigFile {
    fn default() -> Self {
        Self::from_parts(&EpisodeConfig::default(), &TrainConfig::default())
    }
}

impl ConfigFile {
    fn from_parts(e: &EpisodeConfig, t: &TrainConfig) -> Self {
        Self {
            arena_half: e.arena_half,
            n_cameras: e.n_cameras,
            n_obstacles: e.n_obstacles,
            obstacle_size_min: e.obstacle_size_min,
            obstacle_size_max: e.obstacle_size_max,
            obstacle_height_min: e.obstacle_height_min,
            obstacle_height_max: e.obstacle_height_max,
            target_speed_min: e.target_speed_min,
            target_speed_max: e.target_speed_max,
            camera_height_min: e.camera_height_min,
            camera_height_max: e.camera_height_max,
            yaw_jitter_deg: e.yaw_jitter_deg,
            pause_probability: e.pause_probability,
            pause_steps_min: e.pause_steps_min,
            pause_steps_max: e.pause_steps_max,
            wall_margin: e.wall_margin,
            episode_len: e.episode_len,
            gamma: t.gamma,
            learning_rate: t.learning_rate,
            entropy_coeff: t.entropy_coeff,
            value_coeff: t.value_coeff,
            rollout_len: t.rollout_len,
            n_envs: t.n_envs,
            grad_clip: t.grad_clip,
            total_steps: t.total_steps,
            p_pose: t.p_pose,
            seed: t.seed,
        }
    }

    fn into_parts(self) -> (EpisodeConfig, TrainConfig) {
        (
            EpisodeConfig {
                arena_half: self.arena_half,
                n_cameras: self.n_cameras,
                n_obstacles: self.n_obstacles,
                obstacle_size_min: self.obstacle_size_min,
                obstacle_size_max: self.obstacle_size_max,
                obstacle_height_min: self.obstacle_height_min,
                obstacle_height_max: self.obstacle_height_max,
                target_speed_min: self.target_speed_min,
                target_speed_max: self.target_speed_max,
                camera_height_min: self.camera_height_min,
                camera_height_max: self.camera_height_max,
                yaw_jitter_deg: self.yaw_jitter_deg,
                pause_probability: self.pause_probability,
                pause_steps_min: self.pause_steps_min,
                pause_steps_max: self.pause_steps_max,
                wall_margin: self.wall_margin,
                episode_len: self.episode_len,
            },
            TrainConfig {
                gamma: self.gamma,
                learning_rate: self.learning_rate,
                entropy_coeff: self.entropy_coeff,
                value_coeff: self.value_coeff,
                rollout_len: self.rollout_len,
                n_envs: self.n_envs,
                grad_clip: self.grad_clip,
                total_steps: self.total_steps,
                p_pose: self.p_pose,
                seed: self.seed,
            },
        )
    }
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> Result<(EpisodeConfig, TrainConfig)> {
    let file: ConfigFile = serde_json::from_str(text).map_err(|e| Error::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let (episode, train) = file.into_parts();
    episode.validate()?;
    train.validate()?;
    Ok((episode, train))
}

pub fn load_config(path: impl AsRef<Path>) -> Result<(EpisodeConfig, TrainConfig)> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text)
}

/// Canonical serialization: every key, pretty-printed, fixed key order.
pub fn config_to_string(episode: &EpisodeConfig, train: &TrainConfig) -> String {
    let mut s = serde_json::to_string_pretty(&ConfigFile::from_parts(episode, train))
        .expect("config serializes");
    s.push('\n');
    s
}

pub fn save_config(
    episode: &EpisodeConfig,
    train: &TrainConfig,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, config_to_string(episode, train)).map_err(|e| Error::io(path, e))
}
