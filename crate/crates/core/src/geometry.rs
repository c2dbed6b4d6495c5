//! Angle arithmetic, bearings, field-of-view tests and line-of-sight
//! intersection against box obstacles.
//!
//! All angles are in degrees. Yaw is measured counter-clockwise from the
//! world +x axis and lives in (-180, 180]; pitch is positive up.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PITCH_LIMIT_DEG: f64 = 60.0;
pub const ZOOM_MIN: f64 = 1.0;
pub const ZOOM_MAX: f64 = 3.3;
/// Horizontal field of view at zoom 1.
pub const BASE_H_FOV_DEG: f64 = 90.0;
/// Vertical field of view at zoom 1.
pub const BASE_V_FOV_DEG: f64 = 60.0;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn distance(&self, other: &Point3) -> f64 {
        let (dx, dy, dz) = (other.x - self.x, other.y - self.y, other.z - self.z);
        (dx * dx + dy * dy + dz * dz).sqrt()
    }

    pub fn horizontal_distance(&self, other: &Point3) -> f64 {
        (other.x - self.x).hypot(other.y - self.y)
    }

    fn lerp(&self, other: &Point3, t: f64) -> Point3 {
        Point3::new(
            self.x + (other.x - self.x) * t,
            self.y + (other.y - self.y) * t,
            self.z + (other.z - self.z) * t,
        )
    }

    fn axis(&self, i: usize) -> f64 {
        match i {
            0 => self.x,
            1 => self.y,
            _ => self.z,
        }
    }
}

/// Position, orientation and zoom of one pan-tilt-zoom camera. Roll is
/// always zero and is not represented.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraPose {
    pub position: Point3,
    pub pitch_deg: f64,
    pub yaw_deg: f64,
    pub zoom: f64,
}

impl CameraPose {
    /// Builds a pose, wrapping yaw and clamping pitch and zoom into range.
    pub fn new(position: Point3, pitch_deg: f64, yaw_deg: f64, zoom: f64) -> Self {
        Self {
            position,
            pitch_deg: pitch_deg.clamp(-PITCH_LIMIT_DEG, PITCH_LIMIT_DEG),
            yaw_deg: wrap_angle(yaw_deg),
            zoom: zoom.clamp(ZOOM_MIN, ZOOM_MAX),
        }
    }

    pub fn is_valid(&self) -> bool {
        self.pitch_deg.abs() <= PITCH_LIMIT_DEG
            && self.yaw_deg > -180.0
            && self.yaw_deg <= 180.0
            && (ZOOM_MIN..=ZOOM_MAX).contains(&self.zoom)
            && self.position.x.is_finite()
            && self.position.y.is_finite()
            && self.position.z.is_finite()
    }
}

/// Direction from an observer to a target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bearing {
    pub pitch_deg: f64,
    pub yaw_deg: f64,
}

/// Axis-aligned box standing on the ground plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub min: [f64; 2],
    pub max: [f64; 2],
    pub height: f64,
}

impl Obstacle {
    pub fn new(min: [f64; 2], max: [f64; 2], height: f64) -> Result<Self> {
        if !(min[0] < max[0] && min[1] < max[1]) {
            return Err(Error::Domain(format!(
                "obstacle min {min:?} must be below max {max:?} componentwise"
            )));
        }
        if height.is_nan() || height <= 0.0 {
            return Err(Error::Domain(format!(
                "obstacle height {height} must be positive"
            )));
        }
        Ok(Self { min, max, height })
    }

    /// Strict interior test of the ground footprint.
    pub fn footprint_contains(&self, x: f64, y: f64) -> bool {
        x > self.min[0] && x < self.max[0] && y > self.min[1] && y < self.max[1]
    }

    fn lower(&self) -> [f64; 3] {
        [self.min[0], self.min[1], 0.0]
    }

    fn upper(&self) -> [f64; 3] {
        [self.max[0], self.max[1], self.height]
    }
}

/// Wraps an angle into (-180, 180].
pub fn wrap_angle(a: f64) -> f64 {
    let r = a.rem_euclid(360.0);
    if r > 180.0 {
        r - 360.0
    } else {
        r
    }
}

pub fn bearing_to(from: &Point3, to: &Point3) -> Result<Bearing> {
    let (dx, dy, dz) = (to.x - from.x, to.y - from.y, to.z - from.z);
    if dx == 0.0 && dy == 0.0 && dz == 0.0 {
        return Err(Error::Domain("bearing between coincident points".into()));
    }
    let yaw = wrap_angle(dy.atan2(dx).to_degrees());
    let pitch = dz.atan2(dx.hypot(dy)).to_degrees();
    Ok(Bearing {
        pitch_deg: pitch,
        yaw_deg: yaw,
    })
}

/// Absolute pitch and yaw error `(d_alpha, d_beta)` between where the camera
/// points and the direction to `target`.
pub fn angle_error(pose: &CameraPose, target: &Point3) -> Result<(f64, f64)> {
    let b = bearing_to(&pose.position, target)?;
    let d_alpha = (pose.pitch_deg - b.pitch_deg).abs();
    let d_beta = wrap_angle(pose.yaw_deg - b.yaw_deg).abs();
    Ok((d_alpha, d_beta))
}

/// Horizontal and vertical field of view at the given zoom.
pub fn effective_fov(zoom: f64) -> Result<(f64, f64)> {
    if !(ZOOM_MIN..=ZOOM_MAX).contains(&zoom) {
        return Err(Error::Domain(format!(
            "zoom {zoom} outside [{ZOOM_MIN}, {ZOOM_MAX}]"
        )));
    }
    Ok((BASE_H_FOV_DEG / zoom, BASE_V_FOV_DEG / zoom))
}

/// Whether the target direction lies inside the camera's current view
/// frustum (angular test only, occlusion is not considered).
pub fn in_fov(pose: &CameraPose, target: &Point3) -> bool {
    let Ok((d_alpha, d_beta)) = angle_error(pose, target) else {
        return false;
    };
    let zoom = pose.zoom.clamp(ZOOM_MIN, ZOOM_MAX);
    let (h, v) = (BASE_H_FOV_DEG / zoom, BASE_V_FOV_DEG / zoom);
    d_beta <= h / 2.0 && d_alpha <= v / 2.0
}

/// Parametric interval `[t_enter, t_exit]` of the closed segment `p0 + t (p1 - p0)`,
/// `t in [0, 1]`, that lies inside the closed box `[lo, hi]`. Slab method.
pub fn clip_segment(p0: &Point3, p1: &Point3, lo: [f64; 3], hi: [f64; 3]) -> Option<(f64, f64)> {
    let mut t_enter = 0.0_f64;
    let mut t_exit = 1.0_f64;
    for axis in 0..3 {
        let origin = p0.axis(axis);
        let delta = p1.axis(axis) - origin;
        if delta == 0.0 {
            if origin < lo[axis] || origin > hi[axis] {
                return None;
            }
            continue;
        }
        let inv = 1.0 / delta;
        let mut ta = (lo[axis] - origin) * inv;
        let mut tb = (hi[axis] - origin) * inv;
        if ta > tb {
            std::mem::swap(&mut ta, &mut tb);
        }
        t_enter = t_enter.max(ta);
        t_exit = t_exit.min(tb);
        if t_enter > t_exit {
            return None;
        }
    }
    Some((t_enter, t_exit))
}

/// True iff the closed segment `p0`–`p1` touches the obstacle box.
pub fn segment_hits_box(p0: &Point3, p1: &Point3, obstacle: &Obstacle) -> bool {
    clip_segment(p0, p1, obstacle.lower(), obstacle.upper()).is_some()
}

/// First parameter at which the ground-plane move `from -> to` enters the
/// open footprint of `obstacle`, if it does.
pub(crate) fn footprint_entry(from: [f64; 2], to: [f64; 2], obstacle: &Obstacle) -> Option<f64> {
    let p0 = Point3::new(from[0], from[1], 0.0);
    let p1 = Point3::new(to[0], to[1], 0.0);
    let (t_enter, t_exit) = clip_segment(&p0, &p1, obstacle.lower(), obstacle.upper())?;
    // Grazing an edge or a corner does not enter the interior.
    let mid = p0.lerp(&p1, 0.5 * (t_enter + t_exit));
    obstacle.footprint_contains(mid.x, mid.y).then_some(t_enter)
}
