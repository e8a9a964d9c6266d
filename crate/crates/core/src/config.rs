//! Configuration file: TOML, SI units throughout.
//!
//! Every key has a default, so an empty file (or no file) yields the nominal
//! robot. See `docs/config.md` for the annotated reference.

use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::geometry::{ChainGeometry, ParallelLimits, Range, SerialLimits};

/// Environment variable consulted when no `--config` path is given.
pub const CONFIG_ENV: &str = "HOPPER_CONFIG";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HopperConfig {
    pub geometry: GeometryConfig,
    pub limits: LimitsConfig,
    pub actuation: ActuationConfig,
    pub sim: SimConfig,
    pub contact: ContactConfig,
    pub randomization: RandomizationConfig,
    pub raibert: RaibertConfig,
    pub episode: EpisodeConfig,
    pub reward: RewardConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryConfig {
    /// Hip pivot radial offset `r`, m.
    pub r: f64,
    /// Upper link `D`, m.
    pub upper: f64,
    /// Lower link `d`, m.
    pub lower: f64,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        GeometryConfig {
            r: 0.06,
            upper: 0.14,
            lower: 0.30,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LimitsConfig {
    pub parallel_q: Range,
    pub serial_roll: Range,
    pub serial_pitch: Range,
    pub serial_ext: Range,
}

impl Default for LimitsConfig {
    fn default() -> Self {
        let s = SerialLimits::default();
        LimitsConfig {
            parallel_q: ParallelLimits::default().q,
            serial_roll: s.roll,
            serial_pitch: s.pitch,
            serial_ext: s.ext,
        }
    }
}

impl LimitsConfig {
    pub fn parallel(&self) -> ParallelLimits {
        ParallelLimits { q: self.parallel_q }
    }

    pub fn serial(&self) -> SerialLimits {
        SerialLimits {
            roll: self.serial_roll,
            pitch: self.serial_pitch,
            ext: self.serial_ext,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ActuationConfig {
    /// Parallel PD stiffness, Nm/rad.
    pub kp: f64,
    /// Parallel PD damping, Nm s/rad.
    pub kd: f64,
    /// Parallel motor torque limit, Nm.
    pub tau_max: f64,
    /// Serial effort limits: roll Nm, pitch Nm, extension N.
    pub serial_effort_max: [f64; 3],
    /// Serial PD stiffness for joint-target mapping. Derived from `kp` at the
    /// symmetric stance pose when absent.
    pub serial_kp: Option<[f64; 3]>,
    /// Serial PD damping for joint-target mapping. Derived from `kd` when absent.
    pub serial_kd: Option<[f64; 3]>,
}

impl Default for ActuationConfig {
    fn default() -> Self {
        ActuationConfig {
            kp: 20.0,
            kd: 0.5,
            tau_max: 12.0,
            serial_effort_max: [30.0, 30.0, 300.0],
            serial_kp: None,
            serial_kd: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Physics step, s.
    pub dt: f64,
    /// Physics steps per control step.
    pub control_decimation: u32,
    pub gravity: f64,
    pub body_mass: f64,
    /// Principal inertia of the body, kg m^2.
    pub body_inertia: [f64; 3],
    /// Virtual inertia of the template joints: roll kg m^2, pitch kg m^2, extension kg.
    pub leg_inertia: [f64; 3],
    /// Extra height above the nominal stance at reset, m.
    pub drop_height: f64,
    /// Magnitude above which a state value counts as diverged.
    pub diverge_limit: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            dt: 0.002,
            control_decimation: 10,
            gravity: 9.81,
            body_mass: 2.5,
            body_inertia: [0.02, 0.02, 0.03],
            leg_inertia: [0.02, 0.02, 1.0],
            drop_height: 0.02,
            diverge_limit: 1e6,
        }
    }
}

impl SimConfig {
    pub fn control_period(&self) -> f64 {
        self.dt * f64::from(self.control_decimation)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContactConfig {
    /// Normal stiffness `k_n`, N/m.
    pub stiffness: f64,
    /// Normal damping `c_n`, N s/m.
    pub damping: f64,
    /// Coulomb coefficient.
    pub friction: f64,
    /// Tangential anchor spring, N/m.
    pub tangential_stiffness: f64,
    /// Tangential anchor damping, N s/m.
    pub tangential_damping: f64,
}

impl Default for ContactConfig {
    fn default() -> Self {
        ContactConfig {
            stiffness: 5000.0,
            damping: 50.0,
            friction: 0.8,
            tangential_stiffness: 5000.0,
            tangential_damping: 50.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RandomizationConfig {
    pub mass_scale: Range,
    pub friction: Range,
    pub stiffness_scale: Range,
    pub gain_scale: Range,
}

impl Default for RandomizationConfig {
    fn default() -> Self {
        RandomizationConfig {
            mass_scale: Range::new(0.8, 1.2),
            friction: Range::new(0.4, 1.0),
            stiffness_scale: Range::new(0.7, 1.3),
            gain_scale: Range::new(0.9, 1.1),
        }
    }
}

/// Gains of the foot-placement baseline controller.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RaibertConfig {
    /// Velocity-error gain on the foot placement, s.
    pub k_v: f64,
    /// Per-hop integral gain on the velocity error at lift-off, s.
    pub k_i: f64,
    /// Multiplier on the lift-off speed whose flight lasts half a period.
    pub liftoff_gain: f64,
    /// Fraction of each touchdown timing error corrected on the next flight.
    pub timing_gain: f64,
    /// Leg length at touchdown and lift-off, m.
    pub hop_length: f64,
    /// Leg shortening during swing for ground clearance, m.
    pub retract: f64,
    /// Bounds on the duration of the stance trajectory, s.
    pub min_stance: f64,
    pub max_stance: f64,
    /// Deepest allowed leg compression below nominal length, m.
    pub max_compression: f64,
    /// Stance attitude stiffness, Nm/rad.
    pub k_att: f64,
    /// Stance attitude damping, Nm s/rad.
    pub d_att: f64,
    /// Position feedback folded into the velocity command, 1/s.
    pub k_pos: f64,
}

impl Default for RaibertConfig {
    fn default() -> Self {
        RaibertConfig {
            k_v: 0.015,
            k_i: 0.02,
            liftoff_gain: 1.0,
            timing_gain: 0.5,
            hop_length: 0.25,
            retract: 0.03,
            min_stance: 0.1,
            max_stance: 0.3,
            max_compression: 0.07,
            k_att: 2.0,
            d_att: 0.8,
            k_pos: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpisodeConfig {
    /// Default episode length, s.
    pub horizon: f64,
    /// |roll| or |pitch| beyond this counts as a fall, rad.
    pub fall_angle: f64,
    /// Base height above terrain below this counts as a fall, m.
    pub fall_height: f64,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        EpisodeConfig {
            horizon: 20.0,
            fall_angle: 0.6,
            fall_height: 0.05,
        }
    }
}

/// Reward weights and kernel widths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    pub tracking_weight: f64,
    pub tracking_sigma: f64,
    pub phase_weight: f64,
    pub upright_weight: f64,
    pub upright_sigma: f64,
    pub action_rate_weight: f64,
    pub torque_weight: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig {
            tracking_weight: 1.0,
            tracking_sigma: 0.25,
            phase_weight: 0.5,
            upright_weight: 0.3,
            upright_sigma: 0.2,
            action_rate_weight: 0.01,
            torque_weight: 2e-4,
        }
    }
}

fn positive(key: &'static str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(ConfigError::invalid(key, format!("must be > 0, got {v}")))
    }
}

fn non_negative(key: &'static str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(ConfigError::invalid(key, format!("must be >= 0, got {v}")))
    }
}

fn ordered(key: &'static str, r: &Range) -> Result<(), ConfigError> {
    if r.min.is_finite() && r.max.is_finite() && r.min <= r.max {
        Ok(())
    } else {
        Err(ConfigError::invalid(key, format!("empty range [{}, {}]", r.min, r.max)))
    }
}

impl HopperConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, ConfigError> {
        let cfg: HopperConfig = toml::from_str(s).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        Self::from_toml_str(&text)
    }

    /// Loads `path` if given, else `$HOPPER_CONFIG` if set, else defaults.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        match path {
            Some(p) => Self::from_file(p),
            None => match std::env::var_os(CONFIG_ENV) {
                Some(p) if !p.is_empty() => Self::from_file(Path::new(&p)),
                _ => Ok(Self::default()),
            },
        }
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn chain_geometry(&self) -> Result<ChainGeometry, ConfigError> {
        ChainGeometry::new(self.geometry.r, self.geometry.upper, self.geometry.lower)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let geom = self.chain_geometry()?;

        let l = &self.limits;
        ordered("limits.parallel_q", &l.parallel_q)?;
        ordered("limits.serial_roll", &l.serial_roll)?;
        ordered("limits.serial_pitch", &l.serial_pitch)?;
        ordered("limits.serial_ext", &l.serial_ext)?;
        if l.serial_ext.min <= 0.0 || l.serial_ext.max > geom.upper_link() + geom.lower_link() {
            return Err(ConfigError::invalid(
                "limits.serial_ext",
                "must satisfy 0 < min < max <= D + d",
            ));
        }
        let stance = -geom.symmetric_foot_height();
        if !l.serial_ext.contains(stance) {
            return Err(ConfigError::invalid(
                "limits.serial_ext",
                format!("must contain the stance leg length {stance:.5}"),
            ));
        }

        let a = &self.actuation;
        positive("actuation.kp", a.kp)?;
        non_negative("actuation.kd", a.kd)?;
        positive("actuation.tau_max", a.tau_max)?;
        for v in a.serial_effort_max {
            positive("actuation.serial_effort_max", v)?;
        }
        if let Some(k) = a.serial_kp {
            for v in k {
                positive("actuation.serial_kp", v)?;
            }
        }
        if let Some(k) = a.serial_kd {
            for v in k {
                non_negative("actuation.serial_kd", v)?;
            }
        }

        let s = &self.sim;
        positive("sim.dt", s.dt)?;
        if s.control_decimation == 0 {
            return Err(ConfigError::invalid("sim.control_decimation", "must be >= 1"));
        }
        non_negative("sim.gravity", s.gravity)?;
        positive("sim.body_mass", s.body_mass)?;
        for v in s.body_inertia {
            positive("sim.body_inertia", v)?;
        }
        for v in s.leg_inertia {
            positive("sim.leg_inertia", v)?;
        }
        non_negative("sim.drop_height", s.drop_height)?;
        positive("sim.diverge_limit", s.diverge_limit)?;

        let c = &self.contact;
        positive("contact.stiffness", c.stiffness)?;
        non_negative("contact.damping", c.damping)?;
        non_negative("contact.friction", c.friction)?;
        positive("contact.tangential_stiffness", c.tangential_stiffness)?;
        non_negative("contact.tangential_damping", c.tangential_damping)?;

        let r = &self.randomization;
        for (k, range) in [
            ("randomization.mass_scale", &r.mass_scale),
            ("randomization.friction", &r.friction),
            ("randomization.stiffness_scale", &r.stiffness_scale),
            ("randomization.gain_scale", &r.gain_scale),
        ] {
            ordered(k, range)?;
            if range.min < 0.0 {
                return Err(ConfigError::invalid(k, "must be non-negative"));
            }
        }
        if r.mass_scale.min <= 0.0 || r.stiffness_scale.min <= 0.0 || r.gain_scale.min <= 0.0 {
            return Err(ConfigError::invalid("randomization", "scale ranges must be > 0"));
        }

        let rb = &self.raibert;
        for (k, v) in [
            ("raibert.k_v", rb.k_v),
            ("raibert.k_i", rb.k_i),
            ("raibert.timing_gain", rb.timing_gain),
            ("raibert.retract", rb.retract),
            ("raibert.k_att", rb.k_att),
            ("raibert.d_att", rb.d_att),
            ("raibert.k_pos", rb.k_pos),
        ] {
            non_negative(k, v)?;
        }
        positive("raibert.liftoff_gain", rb.liftoff_gain)?;
        positive("raibert.min_stance", rb.min_stance)?;
        positive("raibert.max_compression", rb.max_compression)?;
        positive("raibert.hop_length", rb.hop_length)?;
        if rb.max_stance < rb.min_stance {
            return Err(ConfigError::invalid("raibert.max_stance", "must be >= min_stance"));
        }
        let hop = rb.hop_length;
        if !l.serial_ext.contains(hop) || !l.serial_ext.contains(hop - rb.max_compression.max(rb.retract)) {
            return Err(ConfigError::invalid(
                "raibert",
                "hop_length, max_compression and retract must keep the leg length within limits.serial_ext",
            ));
        }

        let e = &self.episode;
        positive("episode.horizon", e.horizon)?;
        positive("episode.fall_angle", e.fall_angle)?;
        non_negative("episode.fall_height", e.fall_height)?;

        let w = &self.reward;
        positive("reward.tracking_sigma", w.tracking_sigma)?;
        positive("reward.upright_sigma", w.upright_sigma)?;
        for (k, v) in [
            ("reward.tracking_weight", w.tracking_weight),
            ("reward.phase_weight", w.phase_weight),
            ("reward.upright_weight", w.upright_weight),
            ("reward.action_rate_weight", w.action_rate_weight),
            ("reward.torque_weight", w.torque_weight),
        ] {
            non_negative(k, v)?;
        }
        Ok(())
    }

    pub fn body_inertia(&self) -> Vector3<f64> {
        Vector3::from(self.sim.body_inertia)
    }
}
