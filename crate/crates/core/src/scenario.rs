//! Static network geometry and constant-velocity target truth.
//!
//! Nodes are dropped uniformly at random over a square area; the target moves
//! in a straight line at constant velocity. Everything here is a plain value
//! type, so a scenario can be shared read-only between threads.

use std::ops::{Add, Mul, Sub};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, Error, Result};

/// Planar vector in meters (positions) or meters per second (velocities).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

pub type Position2D = Vec2;

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn distance(self, other: Vec2) -> f64 {
        (other - self).norm()
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, rhs: f64) -> Vec2 {
        Vec2::new(self.x * rhs, self.y * rhs)
    }
}

impl From<[f64; 2]> for Vec2 {
    fn from(v: [f64; 2]) -> Self {
        Vec2::new(v[0], v[1])
    }
}

impl From<Vec2> for [f64; 2] {
    fn from(v: Vec2) -> Self {
        [v.x, v.y]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadarNode {
    pub id: usize,
    pub position: Position2D,
}

/// Ground-truth target kinematics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetTruth {
    pub position: Position2D,
    pub velocity: Vec2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeometryConfig {
    /// Side of the square deployment area, meters.
    pub area_size: f64,
    pub node_count: usize,
    pub target_initial_position: Position2D,
    pub target_velocity: Vec2,
    /// Seconds per coherent pulse interval.
    pub cpi_duration: f64,
}

impl GeometryConfig {
    pub fn validate(&self) -> Result<()> {
        if self.node_count == 0 {
            return Err(Error::OutOfRange {
                what: "node_count",
                detail: "at least one radar node is required".into(),
            });
        }
        ensure_positive("area_size", self.area_size)?;
        ensure_positive("cpi_duration", self.cpi_duration)?;
        if !self.target_initial_position.is_finite() {
            return Err(Error::NonFinite {
                what: "target_initial_position",
                value: f64::NAN,
            });
        }
        if !self.target_velocity.is_finite() {
            return Err(Error::NonFinite {
                what: "target_velocity",
                value: f64::NAN,
            });
        }
        Ok(())
    }

    pub fn initial_target(&self) -> TargetTruth {
        TargetTruth {
            position: self.target_initial_position,
            velocity: self.target_velocity,
        }
    }
}

/// Drop `node_count` nodes i.i.d. uniformly over `[0, area]^2`.
pub fn place_nodes<R: Rng + ?Sized>(rng: &mut R, cfg: &GeometryConfig) -> Result<Vec<RadarNode>> {
    cfg.validate()?;
    Ok((0..cfg.node_count)
        .map(|id| {
            let x = rng.random_range(0.0..=cfg.area_size);
            let y = rng.random_range(0.0..=cfg.area_size);
            RadarNode {
                id,
                position: Vec2::new(x, y),
            }
        })
        .collect())
}

pub fn propagate_target(state: TargetTruth, dt: f64) -> TargetTruth {
    debug_assert!(dt >= 0.0, "negative propagation interval {dt}");
    TargetTruth {
        position: state.position + state.velocity * dt,
        velocity: state.velocity,
    }
}

/// Range, radial velocity and angle of arrival of the target as seen from a node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observables {
    pub range: f64,
    /// Positive when the target recedes.
    pub radial_velocity: f64,
    /// Angle of the node-to-target line of sight, in (-pi, pi].
    pub angle: f64,
}

pub fn true_observables(node: &RadarNode, target: &TargetTruth) -> Result<Observables> {
    let los = target.position - node.position;
    let range = los.norm();
    if range == 0.0 {
        return Err(Error::CoincidentPositions);
    }
    let unit = los * (1.0 / range);
    Ok(Observables {
        range,
        radial_velocity: target.velocity.dot(unit),
        angle: los.y.atan2(los.x),
    })
}
