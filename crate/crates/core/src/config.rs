//! Scenario configuration: the JSON schema with defaults for the reference
//! scenario, validation, and resolution into the linear-unit parameter set
//! the simulator runs on.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, Error, Result};
use crate::policies::{PolicyKind, PolicyParams};
use crate::rfmodel::{
    from_db, interference_floor_for_typical_sinr, received_power, wavelength, ChannelSet,
    DriftModel, InterferenceDraw, RadarParams, SigmaGamma, SinrEstimateModel, BOLTZMANN,
};
use crate::scenario::{propagate_target, GeometryConfig, Vec2};
use crate::tracking::{FilterParams, SensorParams, TrackInit};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometrySection {
    pub area_size_m: f64,
    pub node_count: usize,
    pub target_initial_position_m: [f64; 2],
    pub target_velocity_mps: [f64; 2],
}

impl Default for GeometrySection {
    fn default() -> Self {
        let v = 200.0 / std::f64::consts::SQRT_2;
        GeometrySection {
            area_size_m: 10_000.0,
            node_count: 5,
            target_initial_position_m: [0.0, 0.0],
            target_velocity_mps: [v, v],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadarSection {
    pub transmit_power_dbw: f64,
    pub antenna_gain_db: f64,
    pub carrier_frequency_hz: f64,
    pub rcs_m2: f64,
    pub pri_s: f64,
    pub pris_per_cpi: u32,
    /// Receiver noise temperature for the `k T B` noise floor.
    pub noise_temperature_k: f64,
}

impl Default for RadarSection {
    fn default() -> Self {
        RadarSection {
            transmit_power_dbw: 20.0,
            antenna_gain_db: 30.0,
            carrier_frequency_hz: 2.4e9,
            rcs_m2: 100.0,
            pri_s: 1.024e-4,
            pris_per_cpi: 512,
            noise_temperature_k: 290.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelSection {
    pub count: usize,
    pub first_start_hz: f64,
    pub bandwidth_hz: f64,
}

impl Default for ChannelSection {
    fn default() -> Self {
        ChannelSection {
            count: 8,
            first_start_hz: 2.34e9,
            bandwidth_hz: 20e6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InterferenceSection {
    pub span_db: f64,
    /// Average matched-channel SINR at the reference geometry.
    pub typical_sinr_db: f64,
    /// CPI whose target position anchors the calibration.
    pub reference_cpi: usize,
    /// Per-node perturbation std when channel ordering is not shared.
    pub perturbation_std_db: f64,
    pub drift: DriftModel,
}

impl Default for InterferenceSection {
    fn default() -> Self {
        InterferenceSection {
            span_db: 15.0,
            typical_sinr_db: 12.0,
            reference_cpi: 350,
            perturbation_std_db: 3.0,
            drift: DriftModel::Static,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SinrEstimateSection {
    pub sigma: SigmaGamma,
    pub floor: f64,
}

impl Default for SinrEstimateSection {
    fn default() -> Self {
        SinrEstimateSection {
            sigma: SigmaGamma::Proportional(0.1),
            floor: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectionSection {
    pub pfa: f64,
}

impl Default for DetectionSection {
    fn default() -> Self {
        DetectionSection { pfa: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackingSection {
    /// White-acceleration spectral density, m^2/s^3.
    pub process_noise: f64,
    pub aperture_factor: f64,
    pub init: TrackInit,
}

impl Default for TrackingSection {
    fn default() -> Self {
        TrackingSection {
            process_noise: 1.0,
            aperture_factor: 0.1,
            init: TrackInit::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub geometry: GeometrySection,
    pub radar: RadarSection,
    pub channels: ChannelSection,
    pub interference: InterferenceSection,
    pub sinr_estimate: SinrEstimateSection,
    pub detection: DetectionSection,
    pub tracking: TrackingSection,
    pub policy: PolicyKind,
    pub policy_params: PolicyParams,
    pub horizon_cpis: usize,
    pub runs: usize,
    pub seed_base: u64,
    /// Errors after this CPI form the post-convergence window.
    pub convergence_cpi: usize,
    pub output_dir: PathBuf,
    /// Every node ranks channels identically.
    pub assumption1: bool,
    pub detection_gating: bool,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            geometry: GeometrySection::default(),
            radar: RadarSection::default(),
            channels: ChannelSection::default(),
            interference: InterferenceSection::default(),
            sinr_estimate: SinrEstimateSection::default(),
            detection: DetectionSection::default(),
            tracking: TrackingSection::default(),
            policy: PolicyKind::HEtp,
            policy_params: PolicyParams::default(),
            horizon_cpis: 700,
            runs: 30,
            seed_base: 1,
            convergence_cpi: 150,
            output_dir: PathBuf::from("results"),
            assumption1: true,
            detection_gating: false,
        }
    }
}

/// Everything a run needs, in linear units, after validation and calibration.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub geometry: GeometryConfig,
    pub radar: RadarParams,
    pub channels: ChannelSet,
    pub interference: InterferenceDraw,
    pub sinr_estimate: SinrEstimateModel,
    pub sensor: SensorParams,
    pub filter: FilterParams,
    pub track_init: TrackInit,
    pub pris_per_cpi: u32,
    pub pfa: f64,
    pub detection_gating: bool,
    pub policy: PolicyKind,
    pub policy_params: PolicyParams,
    pub horizon_cpis: usize,
    pub convergence_cpi: usize,
    /// Mean node-to-target distance used for calibration, m.
    pub reference_range: f64,
}

/// Grid resolution for averaging node-target distance over the area.
const CALIBRATION_GRID: usize = 64;

/// Mean distance from a uniformly placed node to `target`, by midpoint rule.
pub fn mean_distance_over_area(area: f64, target: Vec2) -> f64 {
    let cell = area / CALIBRATION_GRID as f64;
    let mut total = 0.0;
    for i in 0..CALIBRATION_GRID {
        for j in 0..CALIBRATION_GRID {
            let p = Vec2::new((i as f64 + 0.5) * cell, (j as f64 + 0.5) * cell);
            total += p.distance(target);
        }
    }
    total / (CALIBRATION_GRID * CALIBRATION_GRID) as f64
}

impl ScenarioConfig {
    pub fn geometry_config(&self) -> GeometryConfig {
        GeometryConfig {
            area_size: self.geometry.area_size_m,
            node_count: self.geometry.node_count,
            target_initial_position: self.geometry.target_initial_position_m.into(),
            target_velocity: self.geometry.target_velocity_mps.into(),
            cpi_duration: self.radar.pri_s * f64::from(self.radar.pris_per_cpi),
        }
    }

    pub fn seeds(&self) -> Vec<u64> {
        (0..self.runs as u64).map(|i| self.seed_base + i).collect()
    }

    /// Validate and convert to linear units, calibrating the interference floor.
    pub fn resolve(&self) -> Result<Scenario> {
        let geometry = self.geometry_config();
        geometry.validate()?;
        let r = &self.radar;
        if r.pris_per_cpi == 0 {
            return Err(Error::OutOfRange {
                what: "pris_per_cpi",
                detail: "at least one PRI per CPI is required".into(),
            });
        }
        for (what, v) in [
            ("transmit_power_dbw", r.transmit_power_dbw),
            ("antenna_gain_db", r.antenna_gain_db),
        ] {
            if !v.is_finite() {
                return Err(Error::NonFinite { what, value: v });
            }
        }
        ensure_positive("carrier_frequency_hz", r.carrier_frequency_hz)?;
        ensure_positive("noise_temperature_k", r.noise_temperature_k)?;
        let c = &self.channels;
        ensure_positive("bandwidth_hz", c.bandwidth_hz)?;
        ensure_positive("first_start_hz", c.first_start_hz)?;
        let channels = ChannelSet::contiguous(c.count, c.first_start_hz, c.bandwidth_hz);
        channels.validate(geometry.node_count)?;

        let noise_power = BOLTZMANN * r.noise_temperature_k * c.bandwidth_hz;
        let radar = RadarParams {
            transmit_power: from_db(r.transmit_power_dbw),
            antenna_gain: from_db(r.antenna_gain_db),
            wavelength: wavelength(r.carrier_frequency_hz),
            rcs: r.rcs_m2,
            noise_power,
        };
        radar.validate()?;

        let i = &self.interference;
        ensure_positive("span_db", i.span_db)?;
        if !i.typical_sinr_db.is_finite() {
            return Err(Error::NonFinite {
                what: "typical_sinr_db",
                value: i.typical_sinr_db,
            });
        }
        if !(i.perturbation_std_db.is_finite() && i.perturbation_std_db >= 0.0) {
            return Err(Error::OutOfRange {
                what: "perturbation_std_db",
                detail: format!("must be finite and >= 0 (got {})", i.perturbation_std_db),
            });
        }
        if let DriftModel::LogRandomWalk { step_db } = i.drift {
            if !(step_db.is_finite() && step_db >= 0.0) {
                return Err(Error::OutOfRange {
                    what: "drift step_db",
                    detail: format!("must be finite and >= 0 (got {step_db})"),
                });
            }
        }
        let reference_target = propagate_target(
            geometry.initial_target(),
            (i.reference_cpi as f64 + 0.5) * geometry.cpi_duration,
        );
        let reference_range = mean_distance_over_area(geometry.area_size, reference_target.position);
        let floor_dbw = interference_floor_for_typical_sinr(
            received_power(&radar, reference_range)?,
            from_db(i.typical_sinr_db),
            noise_power,
            i.span_db,
            geometry.node_count,
            channels.count(),
        )?;

        let s = &self.sinr_estimate;
        ensure_positive("sinr estimate floor", s.floor)?;
        let sigma_ok = match s.sigma {
            SigmaGamma::Fixed(v) | SigmaGamma::Proportional(v) => v.is_finite() && v >= 0.0,
        };
        if !sigma_ok {
            return Err(Error::OutOfRange {
                what: "sinr_estimate.sigma",
                detail: "must be finite and >= 0".into(),
            });
        }

        if !(self.detection.pfa > 0.0 && self.detection.pfa < 1.0) {
            return Err(Error::OutOfRange {
                what: "detection.pfa",
                detail: format!("{} not in (0, 1)", self.detection.pfa),
            });
        }
        let t = &self.tracking;
        ensure_positive("aperture_factor", t.aperture_factor)?;
        ensure_positive("init.position_variance", t.init.position_variance)?;
        ensure_positive("init.velocity_variance", t.init.velocity_variance)?;
        let filter = FilterParams::constant_velocity(geometry.cpi_duration, t.process_noise)?;
        self.policy_params.validate()?;

        Ok(Scenario {
            sensor: SensorParams {
                bandwidth: c.bandwidth_hz,
                wavelength: radar.wavelength,
                cpi_duration: geometry.cpi_duration,
                aperture_factor: t.aperture_factor,
            },
            interference: InterferenceDraw {
                floor_dbw,
                span_db: i.span_db,
                ordering_preserving: self.assumption1,
                perturbation_std_db: i.perturbation_std_db,
                drift: i.drift,
            },
            sinr_estimate: SinrEstimateModel {
                sigma: s.sigma,
                floor: s.floor,
            },
            geometry,
            radar,
            channels,
            filter,
            track_init: t.init,
            pris_per_cpi: r.pris_per_cpi,
            pfa: self.detection.pfa,
            detection_gating: self.detection_gating,
            policy: self.policy,
            policy_params: self.policy_params,
            horizon_cpis: self.horizon_cpis,
            convergence_cpi: self.convergence_cpi,
            reference_range,
        })
    }

    /// The parts of the config that define the simulated world and seeds, with
    /// policy choice and bookkeeping blanked out.
    fn world_view(&self) -> ScenarioConfig {
        ScenarioConfig {
            policy: PolicyKind::Oracle,
            policy_params: PolicyParams::default(),
            output_dir: PathBuf::new(),
            ..self.clone()
        }
    }

    /// Error unless `other` differs from `self` only in policy settings.
    pub fn ensure_same_world(&self, other: &ScenarioConfig) -> Result<()> {
        let (a, b) = (self.world_view(), other.world_view());
        if a == b {
            return Ok(());
        }
        let va = serde_json::to_value(&a)?;
        let vb = serde_json::to_value(&b)?;
        let differing: Vec<String> = match (va, vb) {
            (serde_json::Value::Object(ma), serde_json::Value::Object(mb)) => ma
                .iter()
                .filter(|(k, v)| mb.get(*k) != Some(v))
                .map(|(k, _)| k.clone())
                .collect(),
            _ => Vec::new(),
        };
        Err(Error::WorldMismatch(format!("fields differ: {}", differing.join(", "))))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Read, parse and validate a config file.
pub fn parse_config(path: &Path) -> Result<ScenarioConfig> {
    let text = fs::read_to_string(path).map_err(|source| Error::ConfigRead {
        path: path.to_path_buf(),
        source,
    })?;
    let cfg = ScenarioConfig::from_json(&text).map_err(|source| Error::ConfigParse {
        path: path.to_path_buf(),
        source,
    })?;
    cfg.resolve()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rfmodel::to_db;

    #[test]
    fn empty_object_gives_reference_defaults() {
        let cfg = ScenarioConfig::from_json("{}").unwrap();
        assert_eq!(cfg, ScenarioConfig::default());
        assert_eq!(cfg.geometry.node_count, 5);
        assert_eq!(cfg.channels.count, 8);
        assert_eq!(cfg.horizon_cpis, 700);
        assert_eq!(cfg.runs, 30);
        let s = cfg.resolve().unwrap();
        assert!((s.radar.transmit_power - 100.0).abs() < 1e-9);
        assert!((s.radar.antenna_gain - 1000.0).abs() < 1e-9);
        assert_eq!(s.radar.rcs, 100.0);
        assert!((s.radar.wavelength - 0.124913).abs() < 1e-6);
        assert!((s.geometry.cpi_duration - 0.0524288).abs() < 1e-12);
        assert!((to_db(s.radar.noise_power) - (-130.97)).abs() < 0.01);
        assert!((s.geometry.target_velocity.norm() - 200.0).abs() < 1e-9);
    }

    #[test]
    fn calibration_hits_typical_sinr() {
        let s = ScenarioConfig::default().resolve().unwrap();
        // Mid-level matched interference at the reference range gives the typical SINR.
        let p_ref = received_power(&s.radar, s.reference_range).unwrap();
        let mid = from_db(s.interference.floor_dbw + s.interference.span_db * 6.0 / 18.0);
        assert!((to_db(p_ref / (mid + s.radar.noise_power)) - 12.0).abs() < 1e-9);
        assert!((4000.0..6000.0).contains(&s.reference_range));
    }

    #[test]
    fn mean_distance_oracle() {
        // Unit square to its corner: known constant (sqrt 2 + ln(1 + sqrt 2)) / 3.
        let exact = (2f64.sqrt() + (1.0 + 2f64.sqrt()).ln()) / 3.0;
        assert!((mean_distance_over_area(1.0, Vec2::ZERO) - exact).abs() < 1e-4);
    }

    #[test]
    fn too_many_nodes_rejected() {
        let cfg = ScenarioConfig::from_json(r#"{"geometry": {"node_count": 9}}"#).unwrap();
        let err = cfg.resolve().unwrap_err();
        assert!(err.to_string().contains("matchings require M <= N"), "{err}");
        assert!(err.is_config_error());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(ScenarioConfig::from_json(r#"{"horizon": 3}"#).is_err());
        assert!(ScenarioConfig::from_json(r#"{"radar": {"power": 3}}"#).is_err());
    }

    #[test]
    fn nonpositive_constants_rejected() {
        for text in [
            r#"{"radar": {"rcs_m2": 0}}"#,
            r#"{"radar": {"carrier_frequency_hz": -1}}"#,
            r#"{"geometry": {"area_size_m": 0}}"#,
            r#"{"channels": {"bandwidth_hz": 0}}"#,
            r#"{"detection": {"pfa": 1.5}}"#,
        ] {
            let err = ScenarioConfig::from_json(text).unwrap().resolve().unwrap_err();
            assert!(err.is_config_error(), "{text}: {err}");
        }
    }

    #[test]
    fn echo_round_trips() {
        let mut cfg = ScenarioConfig::default();
        cfg.policy = PolicyKind::Mc;
        cfg.interference.drift = DriftModel::LogRandomWalk { step_db: 0.25 };
        cfg.sinr_estimate.sigma = SigmaGamma::Fixed(0.5);
        let back = ScenarioConfig::from_json(&cfg.to_json().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn world_comparison() {
        let a = ScenarioConfig::default();
        let mut b = a.clone();
        b.policy = PolicyKind::Random;
        b.policy_params.confidence = 3.0;
        assert!(a.ensure_same_world(&b).is_ok());
        b.channels.count = 9;
        let err = a.ensure_same_world(&b).unwrap_err();
        assert!(err.to_string().contains("channels"), "{err}");
    }

    #[test]
    fn missing_file_is_config_error() {
        let err = parse_config(Path::new("/nonexistent/cfg.json")).unwrap_err();
        assert!(matches!(err, Error::ConfigRead { .. }));
        assert!(err.is_config_error());
    }
}
