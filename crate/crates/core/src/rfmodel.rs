//! RF-domain math: radar-equation powers, the interference environment, SINR
//! and its noisy estimates, the range-free channel metric, detection
//! probability and the measurement-noise law.
//!
//! All quantities are linear unless the name says `_db`/`_dbw`.

use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, Error, Result};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
pub const BOLTZMANN: f64 = 1.380_649e-23;
pub const REFERENCE_TEMPERATURE_K: f64 = 290.0;

pub fn to_db(linear: f64) -> f64 {
    10.0 * linear.log10()
}

pub fn from_db(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Thermal noise power `k T0 B` in watts.
pub fn thermal_noise_power(bandwidth_hz: f64) -> f64 {
    BOLTZMANN * REFERENCE_TEMPERATURE_K * bandwidth_hz
}

pub fn wavelength(frequency_hz: f64) -> f64 {
    SPEED_OF_LIGHT / frequency_hz
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadarParams {
    /// Transmit power, W.
    pub transmit_power: f64,
    /// Antenna gain, linear.
    pub antenna_gain: f64,
    /// Wavelength, m.
    pub wavelength: f64,
    /// Radar cross section, m^2.
    pub rcs: f64,
    /// Receiver noise power, W.
    pub noise_power: f64,
}

impl RadarParams {
    pub fn validate(&self) -> Result<()> {
        ensure_positive("transmit_power", self.transmit_power)?;
        ensure_positive("antenna_gain", self.antenna_gain)?;
        ensure_positive("wavelength", self.wavelength)?;
        ensure_positive("rcs", self.rcs)?;
        ensure_positive("noise_power", self.noise_power)?;
        Ok(())
    }

    /// `P_x G^2 lambda^2 / (4 pi)^3`, the range-independent factor shared by
    /// the received and predicted power laws.
    fn geometry_free_gain(&self) -> f64 {
        self.transmit_power * self.antenna_gain.powi(2) * self.wavelength.powi(2) / (4.0 * PI).powi(3)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSet {
    pub start_frequencies: Vec<f64>,
    pub bandwidth: f64,
}

impl ChannelSet {
    /// `count` contiguous channels of `bandwidth` starting at `first_start`.
    pub fn contiguous(count: usize, first_start: f64, bandwidth: f64) -> Self {
        ChannelSet {
            start_frequencies: (0..count).map(|n| first_start + n as f64 * bandwidth).collect(),
            bandwidth,
        }
    }

    pub fn count(&self) -> usize {
        self.start_frequencies.len()
    }

    pub fn validate(&self, node_count: usize) -> Result<()> {
        ensure_positive("channel bandwidth", self.bandwidth)?;
        if self.count() < node_count {
            return Err(Error::MatchingInfeasible {
                nodes: node_count,
                channels: self.count(),
            });
        }
        for w in self.start_frequencies.windows(2) {
            if w[1] - w[0] < self.bandwidth {
                return Err(Error::OutOfRange {
                    what: "channel start frequencies",
                    detail: format!("{} and {} overlap or are unordered", w[0], w[1]),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DriftModel {
    Static,
    /// Every CPI each channel's power takes an independent Gaussian step of
    /// `step_db` standard deviation in the dB domain.
    LogRandomWalk { step_db: f64 },
}

/// Interference environment `P_{i,n}` with optional per-node multipliers.
#[derive(Debug, Clone)]
pub struct InterferenceField {
    base_power: Vec<f64>,
    per_node_scale: Vec<Vec<f64>>,
    ordering_preserving: bool,
    drift: DriftModel,
    drift_rng: ChaCha8Rng,
}

/// Parameters for drawing a random interference field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterferenceDraw {
    /// Lowest base power, dBW.
    pub floor_dbw: f64,
    /// Base powers are log-uniform over `[floor, floor + span]` dB.
    pub span_db: f64,
    pub ordering_preserving: bool,
    /// Std of the per-node log-normal multipliers when ordering is not preserved.
    pub perturbation_std_db: f64,
    pub drift: DriftModel,
}

impl InterferenceField {
    pub fn new(
        base_power: Vec<f64>,
        per_node_scale: Vec<Vec<f64>>,
        ordering_preserving: bool,
        drift: DriftModel,
        drift_seed: u64,
    ) -> Result<Self> {
        for &p in &base_power {
            ensure_positive("interference power", p)?;
        }
        for row in &per_node_scale {
            if row.len() != base_power.len() {
                return Err(Error::ShapeMismatch(format!(
                    "per-node scale row has {} entries for {} channels",
                    row.len(),
                    base_power.len()
                )));
            }
            for &s in row {
                ensure_positive("per-node interference scale", s)?;
            }
        }
        let field = InterferenceField {
            base_power,
            per_node_scale,
            ordering_preserving,
            drift,
            drift_rng: ChaCha8Rng::seed_from_u64(drift_seed),
        };
        if ordering_preserving && !field.rank_order_consistent() {
            return Err(Error::Config(
                "ordering-preserving interference field has rows with different channel rank order".into(),
            ));
        }
        Ok(field)
    }

    /// Draw base powers log-uniformly and, when ordering need not hold, i.i.d.
    /// log-normal per-node multipliers.
    pub fn draw<R: Rng + ?Sized>(
        rng: &mut R,
        node_count: usize,
        channel_count: usize,
        draw_cfg: &InterferenceDraw,
        drift_seed: u64,
    ) -> Result<Self> {
        let base_power: Vec<f64> = (0..channel_count)
            .map(|_| from_db(draw_cfg.floor_dbw + rng.random_range(0.0..=draw_cfg.span_db)))
            .collect();
        let per_node_scale = (0..node_count)
            .map(|_| {
                (0..channel_count)
                    .map(|_| {
                        // Always consume the draws so both modes see the same base powers
                        // and downstream streams.
                        let z: f64 = rng.sample(StandardNormal);
                        if draw_cfg.ordering_preserving {
                            1.0
                        } else {
                            from_db(draw_cfg.perturbation_std_db * z)
                        }
                    })
                    .collect()
            })
            .collect();
        Self::new(
            base_power,
            per_node_scale,
            draw_cfg.ordering_preserving,
            draw_cfg.drift,
            drift_seed,
        )
    }

    pub fn channel_count(&self) -> usize {
        self.base_power.len()
    }

    pub fn base_power(&self) -> &[f64] {
        &self.base_power
    }

    pub fn ordering_preserving(&self) -> bool {
        self.ordering_preserving
    }

    /// Interference seen by node `m` in channel `n`.
    pub fn power(&self, node: usize, channel: usize) -> f64 {
        self.base_power[channel] * self.per_node_scale[node][channel]
    }

    /// Advance the drift model by one CPI.
    pub fn step(&mut self) {
        if let DriftModel::LogRandomWalk { step_db } = self.drift {
            for p in &mut self.base_power {
                let z: f64 = self.drift_rng.sample(StandardNormal);
                *p *= from_db(step_db * z);
            }
        }
    }

    /// Whether every node ranks the channels identically by interference power.
    pub fn rank_order_consistent(&self) -> bool {
        let n = self.channel_count();
        let nodes = self.per_node_scale.len();
        for a in 0..n {
            for b in (a + 1)..n {
                let mut sign = None;
                for m in 0..nodes {
                    let d = self.power(m, a) - self.power(m, b);
                    let s = d.partial_cmp(&0.0);
                    match sign {
                        None => sign = Some(s),
                        Some(prev) if prev != s => return false,
                        _ => {}
                    }
                }
            }
        }
        true
    }
}

/// Radar-equation target return `P_x G^2 lambda^2 sigma / ((4 pi)^3 r^4)`.
pub fn received_power(params: &RadarParams, range: f64) -> Result<f64> {
    ensure_positive("range", range)?;
    Ok(params.geometry_free_gain() * params.rcs / range.powi(4))
}

/// Predicted return power at an estimated future range. The cross section is
/// deliberately absent; it is unknown to the node and cancels in rankings.
pub fn predicted_power(params: &RadarParams, predicted_range: f64) -> Result<f64> {
    ensure_positive("predicted range", predicted_range)?;
    Ok(params.geometry_free_gain() / predicted_range.powi(4))
}

pub fn sinr(signal: f64, interference: f64, noise: f64) -> f64 {
    debug_assert!(interference >= 0.0 && noise > 0.0);
    signal / (interference + noise)
}

/// Channel metric in dB: SINR with the predicted target return removed.
pub fn channel_metric(sinr: f64, predicted_power: f64) -> Result<f64> {
    ensure_positive("sinr", sinr)?;
    ensure_positive("predicted power", predicted_power)?;
    Ok(to_db(sinr) - to_db(predicted_power))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "value", rename_all = "snake_case")]
pub enum SigmaGamma {
    /// Absolute standard deviation in linear SINR units.
    Fixed(f64),
    /// Standard deviation as a fraction of the true linear SINR.
    Proportional(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinrEstimateModel {
    pub sigma: SigmaGamma,
    /// Estimates are floored here so they stay strictly positive.
    pub floor: f64,
}

impl SinrEstimateModel {
    pub fn noiseless() -> Self {
        SinrEstimateModel {
            sigma: SigmaGamma::Fixed(0.0),
            floor: 1e-12,
        }
    }

    pub fn std_dev(&self, gamma: f64) -> f64 {
        match self.sigma {
            SigmaGamma::Fixed(s) => s,
            SigmaGamma::Proportional(f) => f * gamma,
        }
    }
}

/// One Gaussian SINR estimate around the true value. Always consumes exactly
/// one normal draw.
pub fn sample_sinr_estimate<R: Rng + ?Sized>(rng: &mut R, gamma: f64, model: &SinrEstimateModel) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    estimate_from_normal(gamma, model, z)
}

/// Deterministic half of [`sample_sinr_estimate`] for callers that manage
/// their own normal draws.
pub fn estimate_from_normal(gamma: f64, model: &SinrEstimateModel, z: f64) -> f64 {
    let sd = model.std_dev(gamma);
    if sd == 0.0 {
        return gamma;
    }
    (gamma + sd * z).max(model.floor)
}

/// Albersheim's approximation of the detection probability of a
/// nonfluctuating target after noncoherent integration of `n_pulses`.
pub fn detection_probability(snr: f64, pfa: f64, n_pulses: u32) -> Result<f64> {
    if !(pfa > 0.0 && pfa < 1.0) {
        return Err(Error::OutOfRange {
            what: "probability of false alarm",
            detail: format!("{pfa} not in (0, 1)"),
        });
    }
    ensure_positive("snr", snr)?;
    if n_pulses == 0 {
        return Err(Error::OutOfRange {
            what: "n_pulses",
            detail: "at least one pulse is required".into(),
        });
    }
    let n = f64::from(n_pulses);
    let a = (0.62 / pfa).ln();
    let z = (to_db(snr) + 5.0 * n.log10()) / (6.2 + 4.54 / (n + 0.44).sqrt());
    let b = (10f64.powf(z) - a) / (0.12 * a + 1.7);
    Ok(1.0 / (1.0 + (-b).exp()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementSigmas {
    pub range: f64,
    pub radial_velocity: f64,
    pub angle: f64,
}

/// Cramer-Rao style accuracy law: every sigma scales as `1/sqrt(2 gamma)`.
pub fn measurement_sigmas(
    processed_sinr: f64,
    bandwidth: f64,
    wavelength: f64,
    cpi_duration: f64,
    aperture_factor: f64,
) -> Result<MeasurementSigmas> {
    ensure_positive("processed sinr", processed_sinr)?;
    ensure_positive("bandwidth", bandwidth)?;
    ensure_positive("wavelength", wavelength)?;
    ensure_positive("cpi duration", cpi_duration)?;
    ensure_positive("aperture factor", aperture_factor)?;
    let root = (2.0 * processed_sinr).sqrt();
    Ok(MeasurementSigmas {
        range: SPEED_OF_LIGHT / (2.0 * bandwidth * root),
        radial_velocity: wavelength / (2.0 * cpi_duration * root),
        angle: aperture_factor / root,
    })
}

/// Lowest interference base power (dBW) such that an average matched channel
/// gives `typical_sinr` at the reference received power.
///
/// The `M` matched channels of a draw are, on average, the best `M` of `N`
/// log-uniform levels, whose mean position in the span is
/// `(M + 1) / (2 (N + 1))` from the bottom.
pub fn interference_floor_for_typical_sinr(
    reference_power: f64,
    typical_sinr: f64,
    noise_power: f64,
    span_db: f64,
    node_count: usize,
    channel_count: usize,
) -> Result<f64> {
    ensure_positive("reference power", reference_power)?;
    ensure_positive("typical sinr", typical_sinr)?;
    let interference = reference_power / typical_sinr - noise_power;
    if interference <= 0.0 {
        return Err(Error::Config(format!(
            "typical SINR {:.2} dB is unreachable: noise alone limits SINR to {:.2} dB",
            to_db(typical_sinr),
            to_db(reference_power / noise_power)
        )));
    }
    let matched_position = (node_count as f64 + 1.0) / (2.0 * (channel_count as f64 + 1.0));
    Ok(to_db(interference) - span_db * matched_position)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn table_radar() -> RadarParams {
        RadarParams {
            transmit_power: 100.0,
            antenna_gain: 1000.0,
            wavelength: 0.12491,
            rcs: 100.0,
            noise_power: 1e-13,
        }
    }

    #[test]
    fn radar_equation_matches_hand_evaluation() {
        // 100 * 1e6 * 0.12491^2 * 100 / (1984.4017 * 1e16)
        let hand = 100.0 * 1.0e6 * 0.12491f64 * 0.12491 * 100.0 / (4.0 * PI * 4.0 * PI * 4.0 * PI) / 1.0e16;
        let p = received_power(&table_radar(), 10_000.0).unwrap();
        assert_relative_eq!(p, hand, max_relative = 1e-14);
        assert_relative_eq!(p, 7.86e-12, max_relative = 1e-3);
    }

    #[test]
    fn fourth_power_and_rcs_linearity() {
        let r = table_radar();
        let p1 = received_power(&r, 5000.0).unwrap();
        let p2 = received_power(&r, 10_000.0).unwrap();
        assert_relative_eq!(p1 / p2, 16.0, max_relative = 1e-14);
        let doubled = RadarParams { rcs: 200.0, ..r };
        assert_relative_eq!(received_power(&doubled, 5000.0).unwrap(), 2.0 * p1, max_relative = 1e-15);
    }

    #[test]
    fn nonpositive_range_rejected() {
        assert!(received_power(&table_radar(), 0.0).is_err());
        assert!(predicted_power(&table_radar(), -1.0).is_err());
    }

    #[test]
    fn predicted_power_drops_cross_section() {
        let r = table_radar();
        let pp = predicted_power(&r, 10_000.0).unwrap();
        assert_relative_eq!(pp, 7.86e-14, max_relative = 1e-3);
        assert_relative_eq!(pp * r.rcs, received_power(&r, 10_000.0).unwrap(), max_relative = 1e-14);
        let mut prev = pp;
        for k in 1..20 {
            let next = predicted_power(&r, 10_000.0 * (1.0 + k as f64)).unwrap();
            assert!(next < prev);
            prev = next;
        }
    }

    #[test]
    fn sinr_arithmetic() {
        assert_relative_eq!(sinr(1e-11, 0.0, 1e-12), 10.0, max_relative = 1e-15);
        assert_relative_eq!(sinr(1e-11, 9e-12, 1e-12), 1.0, max_relative = 1e-15);
    }

    #[test]
    fn metric_is_db_difference() {
        assert_relative_eq!(
            channel_metric(from_db(12.0), from_db(-110.0)).unwrap(),
            122.0,
            max_relative = 1e-12
        );
        assert_eq!(channel_metric(1.0, 1.0).unwrap(), 0.0);
        assert!(channel_metric(0.0, 1.0).is_err());
        assert!(channel_metric(1.0, -1.0).is_err());
    }

    #[test]
    fn metric_is_range_invariant_with_exact_ranges() {
        let r = table_radar();
        let interference = 3e-12;
        let metric_at = |range: f64| {
            let g = sinr(received_power(&r, range).unwrap(), interference, r.noise_power);
            channel_metric(g, predicted_power(&r, range).unwrap()).unwrap()
        };
        let near = metric_at(1234.5);
        let far = metric_at(9876.5);
        assert!((near - far).abs() < 1e-9);
        assert_relative_eq!(near, to_db(r.rcs / (interference + r.noise_power)), epsilon = 1e-9);
    }

    #[test]
    fn metric_agrees_across_nodes_under_identical_interference() {
        let r = table_radar();
        let interference = 7e-13;
        let at = |range: f64| {
            let g = sinr(received_power(&r, range).unwrap(), interference, r.noise_power);
            channel_metric(g, predicted_power(&r, range).unwrap()).unwrap()
        };
        // Exact ranges: identical. A 1% range prediction error shifts the metric by 40 log10(1.01).
        assert!((at(2000.0) - at(7000.0)).abs() < 1e-9);
        let g = sinr(received_power(&r, 2000.0).unwrap(), interference, r.noise_power);
        let biased = channel_metric(g, predicted_power(&r, 2020.0).unwrap()).unwrap();
        assert_relative_eq!(biased - at(2000.0), 40.0 * 1.01f64.log10(), epsilon = 1e-9);
    }

    #[test]
    fn power_decomposition_identity() {
        let r = table_radar();
        let py = received_power(&r, 4000.0).unwrap();
        let pi = 2.5e-12;
        let total = py + pi + r.noise_power;
        assert_relative_eq!(total - pi - r.noise_power, py, max_relative = 1e-12);
        assert_relative_eq!(sinr(py, pi, r.noise_power), py / (total - py), max_relative = 1e-12);
    }

    #[test]
    fn zero_noise_estimate_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = SinrEstimateModel::noiseless();
        for g in [1e-3, 1.0, 1234.5] {
            assert_eq!(sample_sinr_estimate(&mut rng, g, &m), g);
        }
        let zero_frac = SinrEstimateModel {
            sigma: SigmaGamma::Proportional(0.0),
            floor: 1e-9,
        };
        assert_eq!(sample_sinr_estimate(&mut rng, 42.0, &zero_frac), 42.0);
    }

    #[test]
    fn estimate_mean_and_floor() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let model = SinrEstimateModel {
            sigma: SigmaGamma::Proportional(0.1),
            floor: 1e-9,
        };
        let n = 100_000;
        let mean = (0..n).map(|_| sample_sinr_estimate(&mut rng, 20.0, &model)).sum::<f64>() / n as f64;
        assert!((mean - 20.0).abs() / 20.0 < 0.01, "mean {mean}");

        let wide = SinrEstimateModel {
            sigma: SigmaGamma::Fixed(5.0),
            floor: 1e-6,
        };
        for _ in 0..10_000 {
            assert!(sample_sinr_estimate(&mut rng, 0.5, &wide) > 0.0);
        }
    }

    #[test]
    fn estimates_are_reproducible() {
        let model = SinrEstimateModel {
            sigma: SigmaGamma::Proportional(0.1),
            floor: 1e-9,
        };
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..64).map(|_| sample_sinr_estimate(&mut rng, 3.0, &model).to_bits()).collect::<Vec<_>>()
        };
        assert_eq!(draw(99), draw(99));
    }

    /// Forward form: single-pulse SNR (dB) required for a given Pd/Pfa.
    fn albersheim_required_snr_db(pd: f64, pfa: f64, n: f64) -> f64 {
        let a = (0.62 / pfa).ln();
        let b = (pd / (1.0 - pd)).ln();
        -5.0 * n.log10() + (6.2 + 4.54 / (n + 0.44).sqrt()) * (a + 0.12 * a * b + 1.7 * b).log10()
    }

    #[test]
    fn albersheim_inverts_forward_form() {
        let req = albersheim_required_snr_db(0.9, 1e-6, 1.0);
        assert!((13.1..13.2).contains(&req), "required {req} dB");
        let pd = detection_probability(from_db(req), 1e-6, 1).unwrap();
        assert_relative_eq!(pd, 0.9, epsilon = 1e-9);
        let pd_132 = detection_probability(from_db(13.2), 1e-6, 1).unwrap();
        // Half a tenth of a dB above the requirement moves Pd by about one percent.
        assert!((pd_132 - 0.9).abs() < 0.02, "{pd_132}");

        for &(pd, pfa, n) in &[(0.5, 1e-4, 4.0), (0.99, 1e-8, 16.0), (0.3, 1e-3, 512.0)] {
            let snr = from_db(albersheim_required_snr_db(pd, pfa, n));
            assert_relative_eq!(
                detection_probability(snr, pfa, n as u32).unwrap(),
                pd,
                epsilon = 1e-9
            );
        }
    }

    #[test]
    fn detection_probability_limits_and_monotonicity() {
        assert!(detection_probability(from_db(40.0), 1e-6, 1).unwrap() > 1.0 - 1e-12);
        let mut prev = 0.0;
        for db in -5..25 {
            let pd = detection_probability(from_db(db as f64), 1e-6, 1).unwrap();
            assert!(pd >= prev);
            prev = pd;
        }
        let mut prev = 0.0;
        for e in (1..=10).rev() {
            let pd = detection_probability(from_db(10.0), 10f64.powi(-e), 1).unwrap();
            assert!(pd >= prev);
            prev = pd;
        }
        assert!(detection_probability(10.0, 0.0, 1).is_err());
        assert!(detection_probability(10.0, 1.0, 1).is_err());
    }

    #[test]
    fn sigma_law() {
        let s = measurement_sigmas(1e3, 20e6, 0.125, 0.0524288, 0.1).unwrap();
        assert_relative_eq!(s.range, SPEED_OF_LIGHT / (4e7 * 2000f64.sqrt()), max_relative = 1e-14);
        assert!((s.range - 0.1676).abs() < 1e-3);
        let q = measurement_sigmas(4e3, 20e6, 0.125, 0.0524288, 0.1).unwrap();
        assert_relative_eq!(q.range, s.range / 2.0, max_relative = 1e-14);
        assert_relative_eq!(q.radial_velocity, s.radial_velocity / 2.0, max_relative = 1e-14);
        assert_relative_eq!(q.angle, s.angle / 2.0, max_relative = 1e-14);
        let huge = measurement_sigmas(1e300, 20e6, 0.125, 0.05, 0.1).unwrap();
        assert!(huge.range < 1e-140 && huge.angle < 1e-140);
    }

    #[test]
    fn drawn_field_respects_ordering_flag() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let draw_cfg = InterferenceDraw {
            floor_dbw: -120.0,
            span_db: 15.0,
            ordering_preserving: true,
            perturbation_std_db: 3.0,
            drift: DriftModel::Static,
        };
        let f = InterferenceField::draw(&mut rng, 5, 8, &draw_cfg, 1).unwrap();
        assert!(f.rank_order_consistent());
        for m in 0..5 {
            for n in 0..8 {
                assert_eq!(f.power(m, n), f.base_power()[n]);
            }
        }
        let mut broken = 0;
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let relaxed = InterferenceDraw {
                ordering_preserving: false,
                ..draw_cfg
            };
            let f = InterferenceField::draw(&mut rng, 5, 8, &relaxed, 1).unwrap();
            if !f.rank_order_consistent() {
                broken += 1;
            }
        }
        assert!(broken >= 18, "3 dB perturbations should almost always break rank order");
    }

    #[test]
    fn relaxed_draw_shares_base_powers() {
        let draw_cfg = InterferenceDraw {
            floor_dbw: -120.0,
            span_db: 15.0,
            ordering_preserving: true,
            perturbation_std_db: 3.0,
            drift: DriftModel::Static,
        };
        let a = InterferenceField::draw(&mut ChaCha8Rng::seed_from_u64(8), 5, 8, &draw_cfg, 1).unwrap();
        let relaxed = InterferenceDraw {
            ordering_preserving: false,
            ..draw_cfg
        };
        let b = InterferenceField::draw(&mut ChaCha8Rng::seed_from_u64(8), 5, 8, &relaxed, 1).unwrap();
        assert_eq!(a.base_power(), b.base_power());
    }

    #[test]
    fn drift_moves_powers_only_when_enabled() {
        let base = vec![1e-12; 4];
        let scale = vec![vec![1.0; 4]; 2];
        let mut fixed = InterferenceField::new(base.clone(), scale.clone(), true, DriftModel::Static, 0).unwrap();
        fixed.step();
        assert_eq!(fixed.base_power(), base.as_slice());
        let mut walk =
            InterferenceField::new(base.clone(), scale, true, DriftModel::LogRandomWalk { step_db: 0.5 }, 0).unwrap();
        walk.step();
        assert_ne!(walk.base_power(), base.as_slice());
        assert!(walk.rank_order_consistent());
    }

    #[test]
    fn calibration_hits_typical_sinr_on_average_matched_channel() {
        let floor = interference_floor_for_typical_sinr(1e-10, from_db(12.0), 1e-13, 15.0, 5, 8).unwrap();
        let avg_matched_db = floor + 15.0 * 6.0 / 18.0;
        let achieved = 1e-10 / (from_db(avg_matched_db) + 1e-13);
        assert_relative_eq!(to_db(achieved), 12.0, epsilon = 1e-9);
        assert!(interference_floor_for_typical_sinr(1e-14, from_db(12.0), 1e-13, 15.0, 5, 8).is_err());
    }

    #[test]
    fn channel_set_validation() {
        let c = ChannelSet::contiguous(8, 2.34e9, 20e6);
        assert_eq!(c.count(), 8);
        assert!(c.validate(5).is_ok());
        assert!(matches!(c.validate(9), Err(Error::MatchingInfeasible { .. })));
        let overlapping = ChannelSet {
            start_frequencies: vec![1e9, 1.01e9],
            bandwidth: 20e6,
        };
        assert!(overlapping.validate(1).is_err());
    }
}
