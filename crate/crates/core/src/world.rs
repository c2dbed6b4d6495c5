//! The tracking environment: randomized layouts, target motion, camera
//! actuation, per-camera visibility and the per-step reward.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    angle_error, footprint_entry, in_fov, segment_hits_box, wrap_angle, CameraPose, Obstacle,
    Point3, ZOOM_MAX, ZOOM_MIN,
};
use crate::shell::config::EpisodeConfig;
use crate::shell::rng::{streams, RngStream};

/// Height of the tracked point on the target (mid-height of a 1.8 m person).
pub const TARGET_HEIGHT: f64 = 0.9;
pub const ROTATION_STEP_DEG: f64 = 5.0;
pub const ZOOM_STEP: f64 = 0.1;
/// Pitch error at which the direction reward loses a full unit.
pub const ALPHA_MAX_DEG: f64 = 30.0;
/// Yaw error at which the direction reward loses a full unit.
pub const BETA_MAX_DEG: f64 = 45.0;
/// Zoom-error normalizer: the width of the zoom range.
pub const XI_MAX: f64 = ZOOM_MAX - ZOOM_MIN;
/// Distance at which zoom 1 keeps the target at its reference apparent size.
pub const ZOOM_REFERENCE_DISTANCE: f64 = 6.0;
/// Minimum distance the target keeps from obstacle footprints.
pub const TARGET_CLEARANCE: f64 = 0.1;

const MAX_REJECTIONS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    KeepStill,
    Left,
    Right,
    Up,
    Down,
    TopLeft,
    TopRight,
    BottomLeft,
    BottomRight,
    ZoomIn,
    ZoomOut,
}

impl Action {
    pub const COUNT: usize = 11;

    pub const ALL: [Action; Action::COUNT] = [
        Action::KeepStill,
        Action::Left,
        Action::Right,
        Action::Up,
        Action::Down,
        Action::TopLeft,
        Action::TopRight,
        Action::BottomLeft,
        Action::BottomRight,
        Action::ZoomIn,
        Action::ZoomOut,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Action> {
        Action::ALL.get(index).copied()
    }

    /// `(d_pitch, d_yaw, d_zoom)` applied by this action before clamping.
    fn delta(self) -> (f64, f64, f64) {
        let r = ROTATION_STEP_DEG;
        match self {
            Action::KeepStill => (0.0, 0.0, 0.0),
            Action::Left => (0.0, -r, 0.0),
            Action::Right => (0.0, r, 0.0),
            Action::Up => (r, 0.0, 0.0),
            Action::Down => (-r, 0.0, 0.0),
            Action::TopLeft => (r, -r, 0.0),
            Action::TopRight => (r, r, 0.0),
            Action::BottomLeft => (-r, -r, 0.0),
            Action::BottomRight => (-r, r, 0.0),
            Action::ZoomIn => (0.0, 0.0, ZOOM_STEP),
            Action::ZoomOut => (0.0, 0.0, -ZOOM_STEP),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Visibility {
    Visible,
    Occluded,
    OutOfView,
}

impl Visibility {
    /// One-letter code used in episode logs.
    pub fn code(self) -> &'static str {
        match self {
            Visibility::Visible => "V",
            Visibility::Occluded => "O",
            Visibility::OutOfView => "X",
        }
    }

    pub fn from_code(code: &str) -> Option<Visibility> {
        match code {
            "V" => Some(Visibility::Visible),
            "O" => Some(Visibility::Occluded),
            "X" => Some(Visibility::OutOfView),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetState {
    pub x: f64,
    pub y: f64,
    /// Meters per step.
    pub speed: f64,
    pub waypoint: [f64; 2],
    pub pause_steps_remaining: u32,
}

impl TargetState {
    pub fn position(&self) -> Point3 {
        Point3::new(self.x, self.y, TARGET_HEIGHT)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub cameras: Vec<CameraPose>,
    pub target: TargetState,
    pub obstacles: Vec<Obstacle>,
    pub t: usize,
    pub arena_half: f64,
}

/// What one camera experienced on a step, measured on the post-step state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraOutcome {
    pub visibility: Visibility,
    /// Clipped total reward.
    pub reward: f64,
    pub direction_reward: f64,
    pub zoom_reward: f64,
    pub d_alpha: f64,
    pub d_beta: f64,
    pub d_xi: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub state: WorldState,
    pub cameras: Vec<CameraOutcome>,
}

fn keep_out(obstacle: &Obstacle) -> Obstacle {
    let c = TARGET_CLEARANCE;
    Obstacle {
        min: [obstacle.min[0] - c, obstacle.min[1] - c],
        max: [obstacle.max[0] + c, obstacle.max[1] + c],
        height: obstacle.height,
    }
}

fn blocked(obstacles: &[Obstacle], x: f64, y: f64) -> bool {
    obstacles
        .iter()
        .any(|o| keep_out(o).footprint_contains(x, y))
}

fn draw_waypoint<R: Rng + ?Sized>(
    rng: &mut R,
    config: &EpisodeConfig,
    obstacles: &[Obstacle],
) -> Option<[f64; 2]> {
    let lim = config.arena_half - config.wall_margin;
    (0..MAX_REJECTIONS).find_map(|_| {
        let p = [rng.gen_range(-lim..=lim), rng.gen_range(-lim..=lim)];
        (!blocked(obstacles, p[0], p[1])).then_some(p)
    })
}

fn perimeter_point(arena_half: f64, s: f64) -> (f64, f64) {
    let side = 2.0 * arena_half;
    let h = arena_half;
    let (edge, u) = ((s / side).floor() as usize % 4, s % side);
    match edge {
        0 => (-h + u, -h),
        1 => (h, -h + u),
        2 => (h - u, h),
        _ => (-h, h - u),
    }
}

/// Builds a fresh randomized episode. Identical `(config, seed)` gives an
/// identical state.
pub fn spawn_episode(config: &EpisodeConfig, seed: u64) -> Result<WorldState> {
    config.validate()?;
    let mut rng = RngStream::new(seed, streams::LAYOUT);
    let h = config.arena_half;

    let tx = rng.gen_range(-h / 2.0..=h / 2.0);
    let ty = rng.gen_range(-h / 2.0..=h / 2.0);

    let lim = h - config.wall_margin;
    let mut obstacles = Vec::with_capacity(config.n_obstacles);
    for k in 0..config.n_obstacles {
        let placed = (0..MAX_REJECTIONS).find_map(|_| {
            let w = rng.gen_range(config.obstacle_size_min..=config.obstacle_size_max);
            let d = rng.gen_range(config.obstacle_size_min..=config.obstacle_size_max);
            let height = rng.gen_range(config.obstacle_height_min..=config.obstacle_height_max);
            if w >= 2.0 * lim || d >= 2.0 * lim {
                return None;
            }
            let cx = rng.gen_range(-lim + w / 2.0..=lim - w / 2.0);
            let cy = rng.gen_range(-lim + d / 2.0..=lim - d / 2.0);
            let o = Obstacle {
                min: [cx - w / 2.0, cy - d / 2.0],
                max: [cx + w / 2.0, cy + d / 2.0],
                height,
            };
            (!keep_out(&o).footprint_contains(tx, ty)).then_some(o)
        });
        match placed {
            Some(o) => obstacles.push(o),
            None => {
                return Err(Error::Infeasible(format!(
                    "could not place obstacle {k} after {MAX_REJECTIONS} attempts"
                )))
            }
        }
    }

    let cameras = (0..config.n_cameras)
        .map(|_| {
            let s = rng.gen_range(0.0..8.0 * h);
            let (x, y) = perimeter_point(h, s);
            let z = rng.gen_range(config.camera_height_min..=config.camera_height_max);
            let to_center = (-y).atan2(-x).to_degrees();
            let jitter = rng.gen_range(-config.yaw_jitter_deg..=config.yaw_jitter_deg);
            CameraPose::new(Point3::new(x, y, z), 0.0, to_center + jitter, ZOOM_MIN)
        })
        .collect();

    let speed = rng.gen_range(config.target_speed_min..=config.target_speed_max);
    let waypoint = draw_waypoint(&mut rng, config, &obstacles)
        .ok_or_else(|| Error::Infeasible("no free waypoint in arena".into()))?;

    Ok(WorldState {
        cameras,
        target: TargetState {
            x: tx,
            y: ty,
            speed,
            waypoint,
            pause_steps_remaining: 0,
        },
        obstacles,
        t: 0,
        arena_half: h,
    })
}

/// Moves the target one step along its waypoint path.
pub fn advance_target<R: Rng + ?Sized>(
    state: &WorldState,
    config: &EpisodeConfig,
    rng: &mut R,
) -> TargetState {
    let mut target = state.target.clone();
    if target.pause_steps_remaining > 0 {
        target.pause_steps_remaining -= 1;
        return target;
    }

    let from = [target.x, target.y];
    let (dx, dy) = (target.waypoint[0] - from[0], target.waypoint[1] - from[1]);
    let dist = dx.hypot(dy);
    let arriving = dist < target.speed || dist == 0.0;
    let to = if arriving {
        target.waypoint
    } else {
        let s = target.speed / dist;
        [from[0] + dx * s, from[1] + dy * s]
    };

    let len = (to[0] - from[0]).hypot(to[1] - from[1]);
    let entry = state
        .obstacles
        .iter()
        .filter_map(|o| footprint_entry(from, to, &keep_out(o)))
        .fold(None, |acc: Option<f64>, t| {
            Some(acc.map_or(t, |a| a.min(t)))
        });

    let redraw = match entry {
        Some(t_enter) => {
            // Stop just short of the keep-out boundary.
            let travel = (t_enter * len - 1e-6).max(0.0);
            let f = if len > 0.0 { travel / len } else { 0.0 };
            target.x = from[0] + (to[0] - from[0]) * f;
            target.y = from[1] + (to[1] - from[1]) * f;
            true
        }
        None => {
            target.x = to[0];
            target.y = to[1];
            arriving
        }
    };

    if redraw {
        if let Some(wp) = draw_waypoint(rng, config, &state.obstacles) {
            target.waypoint = wp;
        }
        target.speed = rng.gen_range(config.target_speed_min..=config.target_speed_max);
        if arriving && entry.is_none() && rng.gen_bool(config.pause_probability) {
            target.pause_steps_remaining =
                rng.gen_range(config.pause_steps_min..=config.pause_steps_max);
        }
    }
    target
}

/// Applies one discrete command to a camera, keeping the pose in range.
pub fn apply_action(pose: &CameraPose, action: Action) -> CameraPose {
    if action == Action::KeepStill {
        return *pose;
    }
    let (dp, dy, dz) = action.delta();
    CameraPose::new(
        pose.position,
        pose.pitch_deg + dp,
        wrap_angle(pose.yaw_deg + dy),
        pose.zoom + dz,
    )
}

pub fn visibility_of(state: &WorldState, i: usize) -> Visibility {
    let pose = &state.cameras[i];
    let target = state.target.position();
    if !in_fov(pose, &target) {
        Visibility::OutOfView
    } else if state
        .obstacles
        .iter()
        .any(|o| segment_hits_box(&pose.position, &target, o))
    {
        Visibility::Occluded
    } else {
        Visibility::Visible
    }
}

pub fn direction_reward(vis: Visibility, d_alpha: f64, d_beta: f64) -> f64 {
    match vis {
        Visibility::Visible => 1.0 - d_alpha / ALPHA_MAX_DEG - d_beta / BETA_MAX_DEG,
        Visibility::Occluded => 0.0,
        Visibility::OutOfView => -1.0,
    }
}

/// Zoom that keeps the target's apparent size constant at `distance`.
pub fn desired_zoom(distance: f64) -> f64 {
    (distance / ZOOM_REFERENCE_DISTANCE).clamp(ZOOM_MIN, ZOOM_MAX)
}

pub fn zoom_reward(vis: Visibility, zoom: f64, distance: f64) -> f64 {
    match vis {
        Visibility::Visible => 1.0 - (zoom - desired_zoom(distance)).abs() / XI_MAX,
        _ => 0.0,
    }
}

impl WorldState {
    pub fn n_cameras(&self) -> usize {
        self.cameras.len()
    }

    /// Per-camera measurements on the current state.
    pub fn observe(&self, i: usize) -> Result<CameraOutcome> {
        let pose = &self.cameras[i];
        let target = self.target.position();
        let visibility = visibility_of(self, i);
        let (d_alpha, d_beta) = angle_error(pose, &target)?;
        let distance = pose.position.distance(&target);
        let d_xi = (pose.zoom - desired_zoom(distance)).abs();
        let direction = direction_reward(visibility, d_alpha, d_beta);
        let zoom = zoom_reward(visibility, pose.zoom, distance);
        Ok(CameraOutcome {
            visibility,
            reward: (direction + zoom).clamp(-1.0, 1.0),
            direction_reward: direction,
            zoom_reward: zoom,
            d_alpha,
            d_beta,
            d_xi,
        })
    }

    /// Advances the world in place: cameras act, the target moves, time ticks.
    /// Returns the per-camera outcome measured on the new state.
    pub fn step_mut<R: Rng + ?Sized>(
        &mut self,
        config: &EpisodeConfig,
        actions: &[Action],
        rng: &mut R,
    ) -> Result<Vec<CameraOutcome>> {
        if actions.len() != self.cameras.len() {
            return Err(Error::Contract(format!(
                "{} actions for {} cameras",
                actions.len(),
                self.cameras.len()
            )));
        }
        for (pose, &a) in self.cameras.iter_mut().zip(actions) {
            *pose = apply_action(pose, a);
        }
        self.target = advance_target(self, config, rng);
        self.t += 1;
        (0..self.cameras.len()).map(|i| self.observe(i)).collect()
    }
}

/// Pure transition: returns the successor state alongside the outcomes.
pub fn step<R: Rng + ?Sized>(
    state: &WorldState,
    config: &EpisodeConfig,
    actions: &[Action],
    rng: &mut R,
) -> Result<StepOutcome> {
    let mut next = state.clone();
    let cameras = next.step_mut(config, actions, rng)?;
    Ok(StepOutcome {
        state: next,
        cameras,
    })
}
