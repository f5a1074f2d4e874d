//! Measurement generation and linear Kalman tracking.
//!
//! The state is `[x, y, vx, vy]` in the world frame. Nodes measure range,
//! radial velocity and angle; only the position part (range and angle mapped
//! to Cartesian) enters the filter update.

use nalgebra::{Matrix2, Matrix2x4, Matrix4, Matrix4x2, SymmetricEigen, Vector2, Vector4};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, Error, Result};
use crate::rfmodel::{measurement_sigmas, MeasurementSigmas};
use crate::scenario::{true_observables, RadarNode, TargetTruth, Vec2};

/// One node's processed returns for one CPI.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement {
    pub node_id: usize,
    pub cpi: usize,
    pub range: f64,
    pub radial_velocity: f64,
    pub angle: f64,
    pub sigmas: MeasurementSigmas,
    pub valid: bool,
}

impl Measurement {
    pub fn invalidated(self) -> Self {
        Measurement { valid: false, ..self }
    }
}

/// Waveform and array constants that turn processed SINR into accuracies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorParams {
    pub bandwidth: f64,
    pub wavelength: f64,
    pub cpi_duration: f64,
    /// Angle accuracy at unit processed SINR, radians.
    pub aperture_factor: f64,
}

impl SensorParams {
    pub fn sigmas(&self, processed_sinr: f64) -> Result<MeasurementSigmas> {
        measurement_sigmas(
            processed_sinr,
            self.bandwidth,
            self.wavelength,
            self.cpi_duration,
            self.aperture_factor,
        )
    }
}

/// Truth observables plus independent Gaussian errors. Always draws exactly
/// three normals so the noise stream stays aligned whatever the caller does
/// with the result.
pub fn generate_measurement<R: Rng + ?Sized>(
    rng: &mut R,
    node: &RadarNode,
    truth: &TargetTruth,
    cpi: usize,
    processed_sinr: f64,
    sensor: &SensorParams,
) -> Result<Measurement> {
    let sigmas = sensor.sigmas(processed_sinr)?;
    let obs = true_observables(node, truth)?;
    let [zr, zv, za]: [f64; 3] = std::array::from_fn(|_| rng.sample(StandardNormal));
    Ok(Measurement {
        node_id: node.id,
        cpi,
        range: (obs.range + sigmas.range * zr).abs(),
        radial_velocity: obs.radial_velocity + sigmas.radial_velocity * zv,
        angle: obs.angle + sigmas.angle * za,
        sigmas,
        valid: true,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackState {
    pub x: Vector4<f64>,
    pub p: Matrix4<f64>,
    /// CPI of the last measurement update, `None` before initialization.
    pub last_update_cpi: Option<usize>,
}

impl TrackState {
    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x[0], self.x[1])
    }

    pub fn velocity(&self) -> Vec2 {
        Vec2::new(self.x[2], self.x[3])
    }

    /// Smallest covariance eigenvalue is no more negative than `1e-9 trace`.
    pub fn is_covariance_valid(&self) -> bool {
        let trace = self.p.trace();
        let eig = SymmetricEigen::new(self.p).eigenvalues;
        self.p.iter().all(|v| v.is_finite()) && eig.iter().all(|&l| l >= -1e-9 * trace.abs())
    }
}

/// Prior variances used when a track is started from its first fix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackInit {
    pub position_variance: f64,
    pub velocity_variance: f64,
}

impl Default for TrackInit {
    fn default() -> Self {
        TrackInit {
            position_variance: 1e3,
            velocity_variance: 1e4,
        }
    }
}

/// Start a track at `position` with zero velocity and a wide prior.
pub fn init_track(position: Vec2, init: &TrackInit, cpi: usize) -> TrackState {
    let pv = init.position_variance;
    let vv = init.velocity_variance;
    TrackState {
        x: Vector4::new(position.x, position.y, 0.0, 0.0),
        p: Matrix4::from_diagonal(&Vector4::new(pv, pv, vv, vv)),
        last_update_cpi: Some(cpi),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterParams {
    pub f: Matrix4<f64>,
    pub q: Matrix4<f64>,
}

impl FilterParams {
    /// Constant-velocity transition with a continuous white-acceleration
    /// process noise of spectral density `q` (m^2/s^3).
    pub fn constant_velocity(dt: f64, q: f64) -> Result<Self> {
        ensure_positive("filter dt", dt)?;
        if !(q.is_finite() && q >= 0.0) {
            return Err(Error::OutOfRange {
                what: "process noise intensity",
                detail: format!("q must be finite and >= 0 (got {q})"),
            });
        }
        let mut f = Matrix4::identity();
        f[(0, 2)] = dt;
        f[(1, 3)] = dt;
        let (a, b, c) = (q * dt.powi(3) / 3.0, q * dt.powi(2) / 2.0, q * dt);
        #[rustfmt::skip]
        let qm = Matrix4::new(
            a, 0.0, b, 0.0,
            0.0, a, 0.0, b,
            b, 0.0, c, 0.0,
            0.0, b, 0.0, c,
        );
        Ok(FilterParams { f, q: qm })
    }
}

fn symmetrize(p: Matrix4<f64>) -> Matrix4<f64> {
    (p + p.transpose()) * 0.5
}

fn position_selector() -> Matrix2x4<f64> {
    Matrix2x4::new(1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0)
}

pub fn kf_predict(state: &TrackState, params: &FilterParams) -> TrackState {
    TrackState {
        x: params.f * state.x,
        p: symmetrize(params.f * state.p * params.f.transpose() + params.q),
        last_update_cpi: state.last_update_cpi,
    }
}

/// Position-only update with the Joseph covariance form.
pub fn kf_update(state: &TrackState, z: Vector2<f64>, r: Matrix2<f64>) -> Result<TrackState> {
    let h = position_selector();
    let innovation = z - h * state.x;
    let s = h * state.p * h.transpose() + r;
    let s = (s + s.transpose()) * 0.5;
    let chol = s.cholesky().ok_or(Error::NotPositiveDefinite)?;
    // K = P H^T S^-1, computed as (S^-1 H P)^T since S and P are symmetric.
    let k: Matrix4x2<f64> = chol.solve(&(h * state.p)).transpose();
    let i_kh = Matrix4::identity() - k * h;
    let p = i_kh * state.p * i_kh.transpose() + k * r * k.transpose();
    Ok(TrackState {
        x: state.x + k * innovation,
        p: symmetrize(p),
        last_update_cpi: state.last_update_cpi,
    })
}

/// Map a valid (range, angle) measurement to a world-frame position fix with
/// its first-order covariance.
pub fn polar_to_cartesian(node_position: Vec2, m: &Measurement) -> Result<(Vector2<f64>, Matrix2<f64>)> {
    if !m.valid {
        return Err(Error::InvalidMeasurement {
            node: m.node_id,
            cpi: m.cpi,
        });
    }
    let (s, c) = m.angle.sin_cos();
    let z = Vector2::new(node_position.x + m.range * c, node_position.y + m.range * s);
    let jac = Matrix2::new(c, -m.range * s, s, m.range * c);
    let d = Matrix2::from_diagonal(&Vector2::new(m.sigmas.range.powi(2), m.sigmas.angle.powi(2)));
    let r = jac * d * jac.transpose();
    Ok((z, (r + r.transpose()) * 0.5))
}

/// Coordinator fusion: predict, then apply every valid measurement in node
/// order. With no valid measurements the track coasts.
pub fn cc_fuse(
    measurements: &[Measurement],
    nodes: &[RadarNode],
    track: &TrackState,
    params: &FilterParams,
) -> Result<TrackState> {
    let mut ordered: Vec<&Measurement> = measurements.iter().filter(|m| m.valid).collect();
    ordered.sort_by_key(|m| m.node_id);
    let mut state = kf_predict(track, params);
    for m in ordered {
        let node = nodes.get(m.node_id).ok_or_else(|| {
            Error::ShapeMismatch(format!("measurement from unknown node {}", m.node_id))
        })?;
        let (z, r) = polar_to_cartesian(node.position, m)?;
        state = kf_update(&state, z, r)?;
        state.last_update_cpi = Some(m.cpi);
    }
    Ok(state)
}

/// Average of the valid position fixes, used to start a track.
pub fn mean_fix(measurements: &[Measurement], nodes: &[RadarNode]) -> Result<Option<Vec2>> {
    let mut sum = Vec2::ZERO;
    let mut count = 0usize;
    for m in measurements.iter().filter(|m| m.valid) {
        let node = nodes
            .get(m.node_id)
            .ok_or_else(|| Error::ShapeMismatch(format!("measurement from unknown node {}", m.node_id)))?;
        let (z, _) = polar_to_cartesian(node.position, m)?;
        sum = sum + Vec2::new(z[0], z[1]);
        count += 1;
    }
    Ok((count > 0).then(|| sum * (1.0 / count as f64)))
}

/// Range from `node_position` to the track's position `k0` CPIs ahead.
pub fn predict_range(track: &TrackState, node_position: Vec2, k0: usize, params: &FilterParams) -> f64 {
    let mut x = track.x;
    for _ in 0..k0 {
        x = params.f * x;
    }
    Vec2::new(x[0], x[1]).distance(node_position)
}
