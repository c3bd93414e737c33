//! System configuration: Table-I physics, scenario geometry and training
//! settings, loaded from TOML with every key optional.
//!
//! Noise and power budgets are written in dBm in files and held in watts in
//! [`SystemConfig`].

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::channel::{dbm_to_watts, watts_to_dbm, PathLoss, Position3D};
use crate::env::SchemeMode;
use crate::error::{Result, SkyError};
use crate::uav::{FlightBox, PropulsionParams};

#[derive(Debug, Clone, PartialEq)]
pub struct Physics {
    pub propulsion: PropulsionParams,
    pub h0: f64,
    pub kappa_br: f64,
    pub kappa_rg: f64,
    pub kappa_bg: f64,
    /// Receiver noise power (W).
    pub sigma0_sq: f64,
    /// RIS thermal noise power (W).
    pub sigma1_sq: f64,
    /// BS transmit power budget (W).
    pub pb_max: f64,
    /// RIS output power budget (W).
    pub pr_max: f64,
    pub beta_max: f64,
}

impl Default for Physics {
    fn default() -> Self {
        PhysicsFile::default().into_physics()
    }
}

impl Physics {
    pub fn path_loss(&self) -> PathLoss {
        PathLoss {
            h0: self.h0,
            kappa_br: self.kappa_br,
            kappa_rg: self.kappa_rg,
            kappa_bg: self.kappa_bg,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct PhysicsFile {
    u_tip: f64,
    d0: f64,
    rho: f64,
    solidity: f64,
    rotor_area: f64,
    v0: f64,
    p0: f64,
    p1: f64,
    h0: f64,
    kappa_br: f64,
    kappa_rg: f64,
    kappa_bg: f64,
    sigma0_dbm: f64,
    sigma1_dbm: f64,
    pb_max_dbm: f64,
    pr_max_dbm: f64,
    beta_max: f64,
}

impl Default for PhysicsFile {
    fn default() -> Self {
        let p = PropulsionParams::default();
        Self {
            u_tip: p.u_tip,
            d0: p.d0,
            rho: p.rho,
            solidity: p.solidity,
            rotor_area: p.rotor_area,
            v0: p.v0,
            p0: p.p0,
            p1: p.p1,
            h0: 1e-3,
            kappa_br: 2.0,
            kappa_rg: 2.0,
            kappa_bg: 3.6,
            sigma0_dbm: -105.0,
            sigma1_dbm: -105.0,
            pb_max_dbm: 30.0,
            pr_max_dbm: 0.0,
            beta_max: 8.0,
        }
    }
}

/// dBm value that converts back to exactly `watts` when one exists within a
/// few ulps of the direct conversion, so written configs reload unchanged.
fn dbm_for(watts: f64) -> f64 {
    let first = watts_to_dbm(watts);
    let (mut up, mut down) = (first, first);
    for _ in 0..64 {
        if dbm_to_watts(up) == watts {
            return up;
        }
        if dbm_to_watts(down) == watts {
            return down;
        }
        up = up.next_up();
        down = down.next_down();
    }
    first
}

impl PhysicsFile {
    fn into_physics(self) -> Physics {
        Physics {
            propulsion: PropulsionParams {
                p0: self.p0,
                p1: self.p1,
                u_tip: self.u_tip,
                v0: self.v0,
                d0: self.d0,
                solidity: self.solidity,
                rho: self.rho,
                rotor_area: self.rotor_area,
            },
            h0: self.h0,
            kappa_br: self.kappa_br,
            kappa_rg: self.kappa_rg,
            kappa_bg: self.kappa_bg,
            sigma0_sq: dbm_to_watts(self.sigma0_dbm),
            sigma1_sq: dbm_to_watts(self.sigma1_dbm),
            pb_max: dbm_to_watts(self.pb_max_dbm),
            pr_max: dbm_to_watts(self.pr_max_dbm),
            beta_max: self.beta_max,
        }
    }

    fn from_physics(p: &Physics) -> Self {
        let q = &p.propulsion;
        Self {
            u_tip: q.u_tip,
            d0: q.d0,
            rho: q.rho,
            solidity: q.solidity,
            rotor_area: q.rotor_area,
            v0: q.v0,
            p0: q.p0,
            p1: q.p1,
            h0: p.h0,
            kappa_br: p.kappa_br,
            kappa_rg: p.kappa_rg,
            kappa_bg: p.kappa_bg,
            sigma0_dbm: dbm_for(p.sigma0_sq),
            sigma1_dbm: dbm_for(p.sigma1_sq),
            pb_max_dbm: dbm_for(p.pb_max),
            pr_max_dbm: dbm_for(p.pr_max),
            beta_max: p.beta_max,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub arena: FlightBox,
    /// Fixed UAV altitude H (m).
    pub altitude: f64,
    pub bs: [f64; 3],
    pub users: Vec<[f64; 3]>,
    pub eve: [f64; 3],
    pub uav_start: [f64; 2],
    /// Number of RIS elements M.
    pub elements: usize,
    /// Slots per episode N.
    pub slots: usize,
    /// Slot length delta (s).
    pub delta: f64,
    /// Maximum flight distance per slot (m).
    pub max_distance: f64,
    /// QoS floor per user (bits/s/Hz).
    pub q_min: f64,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            arena: FlightBox::square(400.0),
            altitude: 50.0,
            bs: [10.0, 10.0, 10.0],
            users: vec![[250.0, 300.0, 1.0], [250.0, 315.0, 1.0]],
            eve: [300.0, 250.0, 1.0],
            uav_start: [10.0, 390.0],
            elements: 20,
            slots: 200,
            delta: 1.0,
            max_distance: 20.0,
            q_min: 1.0,
        }
    }
}

impl Scenario {
    pub fn users_count(&self) -> usize {
        self.users.len()
    }

    pub fn bs_position(&self) -> Position3D {
        self.bs.into()
    }

    pub fn uav_start_position(&self) -> Position3D {
        Position3D::new(self.uav_start[0], self.uav_start[1], self.altitude)
    }

    /// Ground node positions, node-indexed (Eve first).
    pub fn node_positions(&self) -> Vec<Position3D> {
        std::iter::once(self.eve)
            .chain(self.users.iter().copied())
            .map(Position3D::from)
            .collect()
    }
}

/// Which rate the reward's leading factor uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardRate {
    Secrecy,
    Sum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Training {
    pub episodes: usize,
    /// Gradient updates per episode.
    pub iterations: usize,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub lr: f64,
    pub hidden: Vec<usize>,
    pub gamma: f64,
    pub tau: f64,
    pub warmup_episodes: usize,
    pub w1: f64,
    pub w2: f64,
    /// Boundary penalty p.
    pub penalty: f64,
    pub seed: u64,
    pub reward_rate: RewardRate,
    /// Deterministic-policy episodes rolled after training for metrics.
    pub eval_episodes: usize,
}

impl Default for Training {
    fn default() -> Self {
        Self {
            episodes: 5000,
            iterations: 70,
            batch_size: 256,
            buffer_capacity: 1_000_000,
            lr: 3e-4,
            hidden: vec![512, 256],
            gamma: 0.99,
            tau: 0.005,
            warmup_episodes: 10,
            w1: 0.3,
            w2: 0.5,
            penalty: 10.0,
            seed: 0,
            reward_rate: RewardRate::Secrecy,
            eval_episodes: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SystemConfig {
    pub physics: Physics,
    pub scenario: Scenario,
    pub training: Training,
    pub mode: SchemeMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct ConfigFile {
    mode: SchemeMode,
    physics: PhysicsFile,
    scenario: Scenario,
    training: Training,
}

impl SystemConfig {
    /// Reduced sizes that train in about a minute on one core.
    pub fn desk() -> Self {
        let mut cfg = Self::default();
        cfg.scenario.elements = 10;
        cfg.scenario.slots = 50;
        cfg.training.episodes = 300;
        cfg.training.iterations = 50;
        cfg.training.batch_size = 64;
        cfg.training.buffer_capacity = 100_000;
        cfg.training.hidden = vec![64, 64];
        cfg.training.gamma = 0.9;
        cfg
    }

    pub fn users(&self) -> usize {
        self.scenario.users_count()
    }

    pub fn elements(&self) -> usize {
        self.scenario.elements
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: ConfigFile =
            toml::from_str(text).map_err(|e| SkyError::Config(e.message().to_string()))?;
        let cfg = Self {
            physics: file.physics.into_physics(),
            scenario: file.scenario,
            training: file.training,
            mode: file.mode,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        let file = ConfigFile {
            mode: self.mode,
            physics: PhysicsFile::from_physics(&self.physics),
            scenario: self.scenario.clone(),
            training: self.training.clone(),
        };
        toml::to_string(&file).map_err(|e| SkyError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |field: &str, bound: &str| {
            Err(SkyError::Config(format!("{field} must be {bound}")))
        };
        let p = &self.physics;
        let s = &self.scenario;
        let t = &self.training;

        if !p.propulsion.is_valid() {
            return fail("physics propulsion parameters", "finite and > 0");
        }
        if !(p.h0 > 0.0) {
            return fail("physics.h0", "> 0");
        }
        for (name, k) in [("kappa_br", p.kappa_br), ("kappa_rg", p.kappa_rg), ("kappa_bg", p.kappa_bg)] {
            if !(k >= 0.0) {
                return fail(&format!("physics.{name}"), ">= 0");
            }
        }
        for (name, w) in [
            ("sigma0_dbm", p.sigma0_sq),
            ("sigma1_dbm", p.sigma1_sq),
            ("pb_max_dbm", p.pb_max),
            ("pr_max_dbm", p.pr_max),
        ] {
            if !(w > 0.0) || !w.is_finite() {
                return fail(&format!("physics.{name}"), "finite");
            }
        }
        if !(p.beta_max > 0.0) || !p.beta_max.is_finite() {
            return fail("physics.beta_max", "> 0");
        }

        if s.users.is_empty() {
            return fail("scenario.users", "non-empty (K >= 1)");
        }
        if s.elements == 0 {
            return fail("scenario.elements", ">= 1");
        }
        if s.slots == 0 {
            return fail("scenario.slots", ">= 1");
        }
        if !(s.delta > 0.0) {
            return fail("scenario.delta", "> 0");
        }
        if !(s.max_distance > 0.0) {
            return fail("scenario.max_distance", "> 0");
        }
        if !(s.altitude > 0.0) {
            return fail("scenario.altitude", "> 0");
        }
        let a = &s.arena;
        if !(a.x_max > a.x_min && a.y_max > a.y_min) {
            return fail("scenario.arena", "a non-empty rectangle");
        }
        if !a.contains(s.uav_start[0], s.uav_start[1]) {
            return fail("scenario.uav_start", "inside the arena");
        }
        if s.node_positions().iter().chain([&s.bs_position()]).any(|n| !n.is_valid()) {
            return fail("scenario node positions", "finite with z >= 0");
        }
        if s.node_positions().iter().any(|n| (n.z - s.altitude).abs() < 1e-9 && a.contains(n.x, n.y)) {
            return fail("scenario node altitudes", "different from the UAV altitude");
        }
        if !(s.q_min >= 0.0) {
            return fail("scenario.q_min", ">= 0");
        }

        if t.batch_size == 0 {
            return fail("training.batch_size", ">= 1");
        }
        if t.buffer_capacity < t.batch_size {
            return fail("training.buffer_capacity", ">= batch_size");
        }
        if t.hidden.is_empty() || t.hidden.contains(&0) {
            return fail("training.hidden", "a non-empty list of positive sizes");
        }
        if !(t.lr > 0.0) {
            return fail("training.lr", "> 0");
        }
        if !(0.0..=1.0).contains(&t.gamma) {
            return fail("training.gamma", "in [0, 1]");
        }
        if !(t.tau > 0.0 && t.tau <= 1.0) {
            return fail("training.tau", "in (0, 1]");
        }
        if !(t.penalty >= 0.0 && t.w1 >= 0.0 && t.w2 >= 0.0) {
            return fail("training.w1, w2 and penalty", ">= 0");
        }
        Ok(())
    }
}

/// Reads a config file; `None` gives the defaults.
pub fn load_config(path: Option<&Path>) -> Result<SystemConfig> {
    match path {
        None => {
            let cfg = SystemConfig::default();
            cfg.validate()?;
            Ok(cfg)
        }
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| SkyError::io(path, e))?;
            SystemConfig::from_toml_str(&text)
        }
    }
}

pub fn write_config(cfg: &SystemConfig, path: &Path) -> Result<()> {
    std::fs::write(path, cfg.to_toml_string()?).map_err(|e| SkyError::io(path, e))
}
