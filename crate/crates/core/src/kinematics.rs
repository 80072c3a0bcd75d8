//! Two-timescale motion model.
//!
//! UAVs hold a constant acceleration for a whole master slot and integrate it
//! exactly over each small slot, so the velocity leaving small slot `n` is the
//! velocity entering slot `n + 1`. Users move at constant velocity in the
//! ground plane and are resampled on a configurable master-slot cadence.
//! Everything here is value-semantic; the environment owns the state.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

/// Cartesian triple in meters, m/s or m/s² depending on context.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 0.0 };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn dot(self, other: Vec3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, rhs: Vec3) -> Vec3 {
        Vec3::new(self.x + rhs.x, self.y + rhs.y, self.z + rhs.z)
    }
}

impl AddAssign for Vec3 {
    fn add_assign(&mut self, rhs: Vec3) {
        *self = *self + rhs;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, rhs: Vec3) -> Vec3 {
        Vec3::new(self.x - rhs.x, self.y - rhs.y, self.z - rhs.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UavKinematicState {
    pub position: Vec3,
    pub velocity: Vec3,
    /// Held constant for the whole master slot.
    pub acceleration: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UserKinematicState {
    /// Ground position, `z == 0`.
    pub position: Vec3,
    /// Horizontal velocity, `z == 0`.
    pub velocity: Vec3,
}

/// Position on the two timescales. Both indices are 1-based.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotClock {
    master: usize,
    small: usize,
    masters: usize,
    smalls: usize,
    delta: f64,
}

impl SlotClock {
    pub fn new(masters: usize, smalls: usize, delta: f64) -> Result<Self, ConfigError> {
        if masters == 0 || smalls == 0 {
            return Err(ConfigError::invalid("T/N", "slot counts must be at least 1"));
        }
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(ConfigError::invalid("slot_duration_s", "must be positive and finite"));
        }
        Ok(Self { master: 1, small: 1, masters, smalls, delta })
    }

    pub fn master(&self) -> usize {
        self.master
    }

    pub fn small(&self) -> usize {
        self.small
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn masters(&self) -> usize {
        self.masters
    }

    pub fn smalls(&self) -> usize {
        self.smalls
    }

    /// First small slot of a master slot: the only place a new acceleration is read.
    pub fn is_master_start(&self) -> bool {
        self.small == 1
    }

    /// Last small slot of the last master slot.
    pub fn is_final(&self) -> bool {
        self.master == self.masters && self.small == self.smalls
    }

    /// Flat 0-based slot index within the episode.
    pub fn flat_index(&self) -> usize {
        (self.master - 1) * self.smalls + (self.small - 1)
    }

    /// Moves to the next small slot, rolling over into the next master slot.
    /// Returns `false` (and stays put) once the horizon is exhausted.
    pub fn advance(&mut self) -> bool {
        if self.is_final() {
            return false;
        }
        if self.small == self.smalls {
            self.small = 1;
            self.master += 1;
        } else {
            self.small += 1;
        }
        true
    }
}

/// Vertical cylinder confining UAVs (full height) and users (ground disc).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cylinder {
    pub x_mid: f64,
    pub y_mid: f64,
    pub radius: f64,
    pub z_max: f64,
}

/// Exact constant-acceleration update over one small slot.
pub fn step_uav(state: &UavKinematicState, delta: f64) -> UavKinematicState {
    let a = state.acceleration;
    UavKinematicState {
        position: state.position + state.velocity * delta + a * (0.5 * delta * delta),
        velocity: state.velocity + a * delta,
        acceleration: a,
    }
}

pub fn step_user(state: &UserKinematicState, delta: f64) -> UserKinematicState {
    let mut position = state.position + state.velocity * delta;
    position.z = 0.0;
    UserKinematicState { position, velocity: state.velocity }
}

/// Draws a fresh horizontal velocity: uniform heading, speed uniform in `[0, v_prime_max]`.
///
/// Always consumes exactly two draws so that the random stream does not depend
/// on the cap.
pub fn resample_user_velocity<R: Rng + ?Sized>(
    state: &UserKinematicState,
    rng: &mut R,
    v_prime_max: f64,
) -> UserKinematicState {
    let heading: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let fraction: f64 = rng.gen_range(0.0..=1.0);
    let speed = (fraction * v_prime_max).max(0.0);
    let velocity = if speed > 0.0 {
        Vec3::new(speed * heading.cos(), speed * heading.sin(), 0.0)
    } else {
        Vec3::ZERO
    };
    UserKinematicState { position: state.position, velocity: clip_norm(velocity, v_prime_max) }
}

/// Norm-scales `v` onto the ball of radius `limit`; direction is preserved.
pub fn clip_norm(v: Vec3, limit: f64) -> Vec3 {
    let norm = v.norm();
    if norm <= limit {
        return v;
    }
    if limit <= 0.0 {
        return Vec3::ZERO;
    }
    let mut out = v * (limit / norm);
    // rounding can leave the result an ulp outside the ball
    while out.norm() > limit {
        out = out * (1.0 - f64::EPSILON);
    }
    out
}

pub fn clip_acceleration(a: Vec3, a_max: f64) -> Vec3 {
    clip_norm(a, a_max)
}

/// Speed cap; same norm-scaling rule as the acceleration clip.
pub fn clip_speed(v: Vec3, v_max: f64) -> Vec3 {
    clip_norm(v, v_max)
}

/// End positions after `steps` small slots from `start`, one per candidate
/// acceleration (each clipped to `a_max`, held fixed, no confinement).
pub fn reachable_positions(
    start: &UavKinematicState,
    accelerations: &[Vec3],
    a_max: f64,
    steps: usize,
    delta: f64,
) -> Vec<Vec3> {
    accelerations
        .iter()
        .map(|&a| {
            let mut s = UavKinematicState { acceleration: clip_acceleration(a, a_max), ..*start };
            for _ in 0..steps {
                s = step_uav(&s, delta);
            }
            s.position
        })
        .collect()
}

/// States that can be pushed back into the simulation cylinder.
pub trait Confinable: Sized {
    fn confine(&self, cylinder: &Cylinder) -> Self;
}

/// Projects the position onto the cylinder and reflects any velocity
/// component that points out through a violated boundary.
pub fn enforce_confinement<S: Confinable>(state: &S, cylinder: &Cylinder) -> S {
    state.confine(cylinder)
}

/// Horizontal projection + reflection shared by UAVs and users.
fn confine_horizontal(position: &mut Vec3, velocity: &mut Vec3, cylinder: &Cylinder) {
    let dx = position.x - cylinder.x_mid;
    let dy = position.y - cylinder.y_mid;
    let r = dx.hypot(dy);
    if r <= cylinder.radius {
        return;
    }
    let (nx, ny) = (dx / r, dy / r);
    let mut scale = cylinder.radius / r;
    loop {
        position.x = cylinder.x_mid + dx * scale;
        position.y = cylinder.y_mid + dy * scale;
        if (position.x - cylinder.x_mid).hypot(position.y - cylinder.y_mid) <= cylinder.radius {
            break;
        }
        scale *= 1.0 - f64::EPSILON;
    }
    let outward = velocity.x * nx + velocity.y * ny;
    if outward > 0.0 {
        velocity.x -= 2.0 * outward * nx;
        velocity.y -= 2.0 * outward * ny;
    }
}

impl Confinable for UavKinematicState {
    fn confine(&self, cylinder: &Cylinder) -> Self {
        let mut out = *self;
        confine_horizontal(&mut out.position, &mut out.velocity, cylinder);
        if out.position.z > cylinder.z_max {
            out.position.z = cylinder.z_max;
            if out.velocity.z > 0.0 {
                out.velocity.z = -out.velocity.z;
            }
        } else if out.position.z < 0.0 {
            out.position.z = 0.0;
            if out.velocity.z < 0.0 {
                out.velocity.z = -out.velocity.z;
            }
        }
        out
    }
}

impl Confinable for UserKinematicState {
    fn confine(&self, cylinder: &Cylinder) -> Self {
        let mut out = *self;
        out.position.z = 0.0;
        out.velocity.z = 0.0;
        confine_horizontal(&mut out.position, &mut out.velocity, cylinder);
        out
    }
}
