//! Per-camera decision policies: the greedy virtual tracker, triangulation
//! and learned pose controllers, the switchers, and the single-view baseline.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{angle_error, CameraPose, Point3};
use crate::learn::{forward, PolicyParams, PoseObservation, ACTIONS};
use crate::world::{
    apply_action, desired_zoom, Action, Visibility, ALPHA_MAX_DEG, BETA_MAX_DEG, TARGET_HEIGHT,
    XI_MAX,
};

/// Condition number above which the triangulation normal matrix is treated
/// as singular.
pub const MAX_CONDITION: f64 = 1e6;

/// Switcher output: `Vision` (g = 1) when vision-based tracking is trusted,
/// `Pose` (g = 0) when the camera should follow its pose controller.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SwitchLabel {
    Pose,
    Vision,
}

impl SwitchLabel {
    pub fn g(self) -> u8 {
        match self {
            SwitchLabel::Pose => 0,
            SwitchLabel::Vision => 1,
        }
    }

    pub fn from_g(g: u8) -> Option<Self> {
        match g {
            0 => Some(SwitchLabel::Pose),
            1 => Some(SwitchLabel::Vision),
            _ => None,
        }
    }

    fn flipped(self) -> Self {
        match self {
            SwitchLabel::Pose => SwitchLabel::Vision,
            SwitchLabel::Vision => SwitchLabel::Pose,
        }
    }
}

/// What each camera broadcasts to the others every step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseMessage {
    pub index: usize,
    pub pose: CameraPose,
    pub label: SwitchLabel,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriangulationResult {
    /// Ground-plane point, `None` on failure.
    pub estimate: Option<[f64; 2]>,
    /// Condition number of the 2x2 normal matrix; infinite when singular
    /// or when fewer than two cameras contribute.
    pub condition: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PolicyMode {
    Sample,
    #[default]
    Greedy,
}

/// One-step cost the virtual tracker minimizes.
fn tracking_cost(pose: &CameraPose, target: &Point3, ideal_zoom: f64) -> f64 {
    let (d_alpha, d_beta) = angle_error(pose, target).unwrap_or((180.0, 180.0));
    d_alpha / ALPHA_MAX_DEG + d_beta / BETA_MAX_DEG + (pose.zoom - ideal_zoom).abs() / XI_MAX
}

/// Greedy one-step oracle: the action whose resulting pose minimizes the
/// normalized angle and zoom error. Ties go to the lowest action index.
pub fn virtual_tracker_action(pose: &CameraPose, target: &Point3) -> Action {
    if pose.position == *target {
        return Action::KeepStill;
    }
    let ideal_zoom = desired_zoom(pose.position.distance(target));
    let mut best = (Action::KeepStill, f64::INFINITY);
    for a in Action::ALL {
        let cost = tracking_cost(&apply_action(pose, a), target, ideal_zoom);
        if cost < best.1 {
            best = (a, cost);
        }
    }
    best.0
}

fn symmetric_condition(a: f64, b: f64, d: f64) -> f64 {
    let half_trace = 0.5 * (a + d);
    let radius = (0.25 * (a - d) * (a - d) + b * b).sqrt();
    let (hi, lo) = (half_trace + radius, half_trace - radius);
    if lo <= 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Least-squares intersection of the ground-plane rays of every camera
/// labelled `Vision`.
pub fn triangulate(messages: &[PoseMessage]) -> Result<TriangulationResult> {
    if messages.is_empty() {
        return Err(Error::Contract(
            "triangulation needs at least one message".into(),
        ));
    }
    let mut contributors: Vec<&PoseMessage> = messages
        .iter()
        .filter(|m| m.label == SwitchLabel::Vision)
        .collect();
    // Canonical summation order keeps the result independent of message order.
    contributors.sort_by_key(|m| m.index);

    let failure = TriangulationResult {
        estimate: None,
        condition: f64::INFINITY,
    };
    if contributors.len() < 2 {
        return Ok(failure);
    }

    // Normal equations: sum(I - d d^T) p = sum(I - d d^T) c.
    let (mut a, mut b, mut d) = (0.0, 0.0, 0.0);
    let (mut rx, mut ry) = (0.0, 0.0);
    for m in contributors {
        let yaw = m.pose.yaw_deg.to_radians();
        let (s, c) = yaw.sin_cos();
        let (px, py) = (m.pose.position.x, m.pose.position.y);
        let (m00, m01, m11) = (1.0 - c * c, -c * s, 1.0 - s * s);
        a += m00;
        b += m01;
        d += m11;
        rx += m00 * px + m01 * py;
        ry += m01 * px + m11 * py;
    }
    let condition = symmetric_condition(a, b, d);
    if condition > MAX_CONDITION {
        return Ok(TriangulationResult {
            estimate: None,
            condition,
        });
    }
    let det = a * d - b * b;
    let x = (d * rx - b * ry) / det;
    let y = (a * ry - b * rx) / det;
    Ok(TriangulationResult {
        estimate: Some([x, y]),
        condition,
    })
}

fn own_pose(i: usize, messages: &[PoseMessage]) -> Result<CameraPose> {
    messages
        .iter()
        .find(|m| m.index == i)
        .map(|m| m.pose)
        .ok_or_else(|| Error::Contract(format!("no message from camera {i}")))
}

/// Triangulation-based pose controller with a one-slot memory of the last
/// successful estimate.
pub fn geometric_pose_action(
    i: usize,
    messages: &[PoseMessage],
    memory: &mut Option<[f64; 2]>,
) -> Result<Action> {
    let pose = own_pose(i, messages)?;
    if let Some(p) = triangulate(messages)?.estimate {
        *memory = Some(p);
    }
    Ok(match memory {
        Some([x, y]) => virtual_tracker_action(&pose, &Point3::new(*x, *y, TARGET_HEIGHT)),
        None => Action::KeepStill,
    })
}

/// Action choice from explicit log-probabilities; the returned pair is the
/// action and its log-probability.
pub fn choose_action<R: Rng + ?Sized>(
    log_probs: &[f64; ACTIONS],
    mode: PolicyMode,
    rng: &mut R,
) -> (Action, f64) {
    let k = match mode {
        PolicyMode::Greedy => {
            let mut best = 0;
            for k in 1..ACTIONS {
                if log_probs[k] > log_probs[best] {
                    best = k;
                }
            }
            best
        }
        PolicyMode::Sample => {
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            let mut pick = None;
            for (k, lp) in log_probs.iter().enumerate() {
                acc += lp.exp();
                if u < acc {
                    pick = Some(k);
                    break;
                }
            }
            // Rounding can leave `acc` a hair below 1: take the last live action.
            pick.unwrap_or_else(|| {
                (0..ACTIONS)
                    .rev()
                    .find(|&k| log_probs[k] > f64::NEG_INFINITY)
                    .unwrap_or(0)
            })
        }
    };
    (Action::ALL[k], log_probs[k])
}

/// Learned pose controller: returns `(action, log-probability, value)`.
pub fn learned_pose_action<R: Rng + ?Sized>(
    i: usize,
    messages: &[PoseMessage],
    params: &PolicyParams,
    arena_half: f64,
    rng: &mut R,
    mode: PolicyMode,
) -> Result<(Action, f64, f64)> {
    params.validate()?;
    let obs = PoseObservation::from_messages(i, messages, arena_half)?;
    let out = forward(params, &obs)?;
    let (action, log_prob) = choose_action(&out.cache.log_probs, mode, rng);
    Ok((action, log_prob, out.value))
}

pub fn oracle_switch(vis: Visibility) -> SwitchLabel {
    match vis {
        Visibility::Visible => SwitchLabel::Vision,
        Visibility::Occluded | Visibility::OutOfView => SwitchLabel::Pose,
    }
}

/// `Pose` with probability `p_pose`, otherwise `Vision`.
pub fn random_switch<R: Rng + ?Sized>(rng: &mut R, p_pose: f64) -> SwitchLabel {
    if rng.gen_bool(p_pose.clamp(0.0, 1.0)) {
        SwitchLabel::Pose
    } else {
        SwitchLabel::Vision
    }
}

/// Oracle label flipped with probability `eps`.
pub fn noisy_switch<R: Rng + ?Sized>(vis: Visibility, rng: &mut R, eps: f64) -> SwitchLabel {
    let label = oracle_switch(vis);
    if rng.gen_bool(eps.clamp(0.0, 1.0)) {
        label.flipped()
    } else {
        label
    }
}

/// Single-view baseline: tracks while the target is visible, freezes otherwise.
pub fn sv_baseline_action(pose: &CameraPose, vis: Visibility, target: &Point3) -> Action {
    match vis {
        Visibility::Visible => virtual_tracker_action(pose, target),
        Visibility::Occluded | Visibility::OutOfView => Action::KeepStill,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ControllerKind {
    /// Every camera follows the oracle tracker at all times.
    Virtual,
    /// Vision proxy plus triangulation pose controller.
    Geometric,
    /// Vision proxy plus learned pose controller.
    Learned,
    /// Single-view baseline: no information sharing.
    Sv,
}

impl ControllerKind {
    pub fn name(self) -> &'static str {
        match self {
            ControllerKind::Virtual => "virtual",
            ControllerKind::Geometric => "geometric",
            ControllerKind::Learned => "learned",
            ControllerKind::Sv => "sv",
        }
    }
}

impl std::str::FromStr for ControllerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "virtual" => Ok(ControllerKind::Virtual),
            "geometric" => Ok(ControllerKind::Geometric),
            "learned" => Ok(ControllerKind::Learned),
            "sv" => Ok(ControllerKind::Sv),
            other => Err(Error::validation(
                "controller",
                format!("unknown controller `{other}` (virtual|geometric|learned|sv)"),
            )),
        }
    }
}

/// A resolved controller, ready to act.
#[derive(Debug, Clone, Copy)]
pub enum Controller<'a> {
    Virtual,
    Geometric,
    Learned {
        params: &'a PolicyParams,
        mode: PolicyMode,
    },
    Sv,
}

/// Per-camera mutable controller state, owned for one episode.
#[derive(Debug, Clone, Default)]
pub struct CameraMemory {
    pub last_estimate: Option<[f64; 2]>,
}

/// Full per-camera decision: vision proxy when the own label is `Vision`,
/// the configured pose controller otherwise.
///
/// The vision proxy is the oracle tracker gated on true visibility, so a
/// mislabelled camera that cannot actually see the target holds still.
#[allow(clippy::too_many_arguments)]
pub fn system_action<R: Rng + ?Sized>(
    i: usize,
    vis: Visibility,
    messages: &[PoseMessage],
    target: &Point3,
    controller: Controller<'_>,
    memory: &mut CameraMemory,
    arena_half: f64,
    rng: &mut R,
) -> Result<Action> {
    let me = messages
        .iter()
        .find(|m| m.index == i)
        .ok_or_else(|| Error::Contract(format!("no message from camera {i}")))?;
    match controller {
        Controller::Virtual => Ok(virtual_tracker_action(&me.pose, target)),
        Controller::Sv => Ok(sv_baseline_action(&me.pose, vis, target)),
        _ if me.label == SwitchLabel::Vision => Ok(sv_baseline_action(&me.pose, vis, target)),
        Controller::Geometric => geometric_pose_action(i, messages, &mut memory.last_estimate),
        Controller::Learned { params, mode } => {
            learned_pose_action(i, messages, params, arena_half, rng, mode).map(|r| r.0)
        }
    }
}
