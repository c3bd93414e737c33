//! The per-slot decision process: state encoding, action decoding, the
//! channel-alignment layer and the reward.
//!
//! One call to [`SkyEnv::step`] runs, in order: decode the action, move the
//! UAV, redraw channels at the new position, re-align every RIS phase,
//! compose the RIS diagonal (shrinking amplification if the RIS budget is
//! exceeded), evaluate rates and SEE, compute the reward and encode the next
//! state with the freshly aligned phases.

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::app::config::{RewardRate, SystemConfig};
use crate::channel::{build_channels, ChannelSet, Node, Position3D};
use crate::error::{Result, SkyError};
use crate::link::{noma_rates, oma_rates, see, LinkBudget, RateReport};
use crate::ris::{
    align_phases, compose_theta, map_scheduling, ris_power, scheduling_interval, AmpVector,
    EffectiveRis, PhaseBook, RisAssignment,
};
use crate::uav::{power_bounds, propulsion_energy, step_position, PowerBounds, UavState};

/// Scheme variants compared in the experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
pub enum SchemeMode {
    /// Multifunctional RIS: elements reflect towards users or jam Eve.
    #[default]
    #[serde(rename = "MF")]
    Mf,
    /// Reflection only; no element is ever scheduled to Eve.
    #[serde(rename = "AR")]
    Ar,
    /// Jamming only; every element is scheduled to Eve.
    #[serde(rename = "AJ")]
    Aj,
    /// Multifunctional RIS with orthogonal time sharing instead of NOMA.
    #[serde(rename = "OMA-MF")]
    OmaMf,
    /// Multifunctional RIS driven by uniformly random actions.
    #[serde(rename = "RANDOM")]
    Random,
}

impl SchemeMode {
    pub const ALL: [SchemeMode; 5] = [
        SchemeMode::Mf,
        SchemeMode::Ar,
        SchemeMode::Aj,
        SchemeMode::OmaMf,
        SchemeMode::Random,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SchemeMode::Mf => "MF",
            SchemeMode::Ar => "AR",
            SchemeMode::Aj => "AJ",
            SchemeMode::OmaMf => "OMA-MF",
            SchemeMode::Random => "RANDOM",
        }
    }
}

impl fmt::Display for SchemeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SchemeMode {
    type Err = SkyError;

    fn from_str(s: &str) -> Result<Self> {
        SchemeMode::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                SkyError::Input(format!(
                    "unknown mode {s:?}, expected one of MF, AR, AJ, OMA-MF, RANDOM"
                ))
            })
    }
}

pub fn action_dim(elements: usize, users: usize) -> usize {
    users + 2 * elements + 2
}

pub fn state_dim(elements: usize, users: usize) -> usize {
    let nodes = users + 1;
    2 * elements + nodes * 2 * elements + 2 * nodes + 2 + 3 * nodes + 2 * elements * nodes
}

/// Physical controls for one slot, before the RIS budget is enforced.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodedAction {
    pub powers: Vec<f64>,
    pub assignment: RisAssignment,
    pub amps: AmpVector,
    pub distance: f64,
    pub heading: f64,
}

fn unit(a: f64) -> f64 {
    (a + 1.0) / 2.0
}

/// Maps a `[-1, 1]` action onto controls, honouring the BS power budget and
/// the scheme's scheduling restriction.
///
/// Layout: `K` power ratios, `M` scheduling raws, `M` amplification raws,
/// flight distance, flight heading.
pub fn decode_action(action: &[f64], cfg: &SystemConfig) -> Result<DecodedAction> {
    let k = cfg.users();
    let m = cfg.elements();
    if action.len() != action_dim(m, k) {
        return Err(SkyError::Input(format!(
            "action has {} entries, expected {}",
            action.len(),
            action_dim(m, k)
        )));
    }
    if let Some(bad) = action.iter().find(|a| !(-1.0..=1.0).contains(*a)) {
        return Err(SkyError::Input(format!("action entry {bad} outside [-1, 1]")));
    }
    let (power_raw, rest) = action.split_at(k);
    let (sched_raw, rest) = rest.split_at(m);
    let (amp_raw, motion) = rest.split_at(m);

    let pb_max = cfg.physics.pb_max;
    let mut powers: Vec<f64> = power_raw.iter().map(|&a| unit(a) * pb_max).collect();
    let total: f64 = powers.iter().sum();
    if total > pb_max {
        let scale = pb_max / total;
        powers.iter_mut().for_each(|p| *p *= scale);
    }

    let assignment = match cfg.mode {
        SchemeMode::Aj => RisAssignment::uniform(m, Node::Eve),
        SchemeMode::Ar => {
            // squeeze [-1, 1] onto the users' part of the scheduling range
            let (lo, _) = scheduling_interval(2, k);
            let squeezed: Vec<f64> = sched_raw
                .iter()
                .map(|&a| (lo + unit(a) * (1.0 - lo)).min(1.0))
                .collect();
            map_scheduling(&squeezed, k)?
        }
        _ => map_scheduling(sched_raw, k)?,
    };

    let beta_max = cfg.physics.beta_max;
    Ok(DecodedAction {
        powers,
        assignment,
        amps: AmpVector {
            beta: amp_raw.iter().map(|&a| unit(a) * beta_max).collect(),
        },
        distance: (unit(motion[0]) * cfg.scenario.max_distance).min(cfg.scenario.max_distance),
        heading: (unit(motion[1]) * TAU).rem_euclid(TAU),
    })
}

/// Average per-user shortfall below the QoS floor.
pub fn qos_violation(user_rates: &[f64], q_min: f64) -> f64 {
    if user_rates.is_empty() {
        return 0.0;
    }
    user_rates.iter().map(|r| (q_min - r).max(0.0)).sum::<f64>() / user_rates.len() as f64
}

/// `R (1 - w1 * P_norm - w2 * U) - p * oob`.
pub fn reward_of(report: &RateReport, oob: bool, cfg: &SystemConfig, bounds: &PowerBounds) -> f64 {
    let t = &cfg.training;
    let rate = match t.reward_rate {
        RewardRate::Secrecy => report.secrecy_sum,
        RewardRate::Sum => report.user_rates.iter().sum(),
    };
    let span = bounds.p_max - bounds.p_min;
    let p_norm = if span > 0.0 {
        ((report.p_sum - bounds.p_min) / span).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let u = qos_violation(&report.user_rates, cfg.scenario.q_min);
    let penalty = if oob { t.penalty } else { 0.0 };
    rate * (1.0 - t.w1 * p_norm - t.w2 * u) - penalty
}

/// Controls actually applied in a slot, after every constraint adjustment.
#[derive(Debug, Clone, PartialEq)]
pub struct StepInfo {
    pub powers: Vec<f64>,
    pub assignment: RisAssignment,
    pub amps: AmpVector,
    pub p_ris: f64,
    pub position: Position3D,
    pub velocity: f64,
    pub phases: PhaseBook,
    pub channels: ChannelSet,
    pub effective: EffectiveRis,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub next_state: Vec<f64>,
    pub reward: f64,
    pub report: RateReport,
    pub oob: bool,
    pub qos_violation: f64,
    pub done: bool,
    pub info: StepInfo,
}

/// Serializable resume point of an environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSnapshot {
    pub uav: UavState,
    pub slot: usize,
    pub rng: ChaCha8Rng,
    pub channels: ChannelSet,
}

#[derive(Debug, Clone)]
pub struct SkyEnv {
    cfg: SystemConfig,
    nodes: Vec<Position3D>,
    bounds: PowerBounds,
    /// Per-link amplitude scale bringing channel features to O(1).
    feature_scale: [f64; 3],
    rng: ChaCha8Rng,
    uav: UavState,
    slot: usize,
    channels: ChannelSet,
    phases: PhaseBook,
}

const FEATURE_REF_DISTANCE: f64 = 100.0;

impl SkyEnv {
    pub fn new(cfg: &SystemConfig) -> Result<Self> {
        cfg.validate()?;
        let s = &cfg.scenario;
        let p = &cfg.physics;
        let v_max = s.max_distance / s.delta;
        let per_second = power_bounds(&p.propulsion, v_max, 0.0)?;
        let bounds = PowerBounds {
            p_min: per_second.p_min * s.delta,
            p_max: per_second.p_max * s.delta + p.pr_max,
        };
        let scale = |kappa: f64| (FEATURE_REF_DISTANCE.powf(kappa) / p.h0).sqrt();
        let uav = UavState::hovering_at(s.uav_start_position());
        let nodes = s.node_positions();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.training.seed);
        let channels = build_channels(
            &uav.position,
            &s.bs_position(),
            &nodes,
            s.elements,
            &p.path_loss(),
            &mut rng,
        )?;
        let phases = align_phases(&channels);
        Ok(Self {
            cfg: cfg.clone(),
            nodes,
            bounds,
            feature_scale: [scale(p.kappa_br), scale(p.kappa_rg), scale(p.kappa_bg)],
            rng,
            uav,
            slot: 0,
            channels,
            phases,
        })
    }

    pub fn config(&self) -> &SystemConfig {
        &self.cfg
    }

    pub fn power_bounds(&self) -> PowerBounds {
        self.bounds
    }

    pub fn state_dim(&self) -> usize {
        state_dim(self.cfg.elements(), self.cfg.users())
    }

    pub fn action_dim(&self) -> usize {
        action_dim(self.cfg.elements(), self.cfg.users())
    }

    pub fn slot(&self) -> usize {
        self.slot
    }

    pub fn is_done(&self) -> bool {
        self.slot >= self.cfg.scenario.slots
    }

    pub fn uav(&self) -> &UavState {
        &self.uav
    }

    pub fn channels(&self) -> &ChannelSet {
        &self.channels
    }

    pub fn phases(&self) -> &PhaseBook {
        &self.phases
    }

    fn draw_channels(&mut self) -> Result<()> {
        let s = &self.cfg.scenario;
        self.channels = build_channels(
            &self.uav.position,
            &s.bs_position(),
            &self.nodes,
            s.elements,
            &self.cfg.physics.path_loss(),
            &mut self.rng,
        )?;
        self.phases = align_phases(&self.channels);
        Ok(())
    }

    /// Starts a new episode at the scenario's start point.
    pub fn reset(&mut self, seed: u64) -> Result<Vec<f64>> {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.uav = UavState::hovering_at(self.cfg.scenario.uav_start_position());
        self.slot = 0;
        self.draw_channels()?;
        Ok(self.state())
    }

    /// Encodes the current observation.
    pub fn state(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.state_dim());
        let [s_br, s_rg, s_bg] = self.feature_scale;
        let push_c = |out: &mut Vec<f64>, h: &num_complex::Complex64, s: f64| {
            out.push(h.re * s);
            out.push(h.im * s);
        };
        for h in &self.channels.h_br {
            push_c(&mut out, h, s_br);
        }
        for row in &self.channels.h_rg {
            for h in row {
                push_c(&mut out, h, s_rg);
            }
        }
        for h in &self.channels.h_bg {
            push_c(&mut out, h, s_bg);
        }
        let arena = &self.cfg.scenario.arena;
        let side = arena.side();
        out.push((self.uav.position.x - arena.x_min) / side);
        out.push((self.uav.position.y - arena.y_min) / side);
        for n in &self.nodes {
            out.push((n.x - arena.x_min) / side);
            out.push((n.y - arena.y_min) / side);
            out.push(n.z / side);
        }
        for row in &self.phases.theta {
            for &t in row {
                out.push(t.cos());
                out.push(t.sin());
            }
        }
        out
    }

    pub fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        if self.is_done() {
            return Err(SkyError::Contract("episode is finished; call reset".into()));
        }
        let cfg = self.cfg.clone();
        let s = &cfg.scenario;
        let p = &cfg.physics;

        let decoded = decode_action(action, &cfg)?;
        let (uav, oob) = step_position(
            &self.uav,
            decoded.distance,
            decoded.heading,
            &s.arena,
            s.max_distance,
            s.delta,
        )?;
        self.uav = uav;
        self.draw_channels()?;

        let p_uav = propulsion_energy(self.uav.last_velocity, s.delta, &p.propulsion)?;
        let mut amps = decoded.amps;
        let mut eff = compose_theta(&decoded.assignment, &self.phases, &amps);
        let mut p_ris = ris_power(&self.channels, &eff, &decoded.powers, p.sigma1_sq);
        if p_ris > p.pr_max {
            amps = crate::ris::rescale_beta(&amps, p_ris, p.pr_max);
            eff = compose_theta(&decoded.assignment, &self.phases, &amps);
            p_ris = ris_power(&self.channels, &eff, &decoded.powers, p.sigma1_sq);
        }

        let budget =
            LinkBudget::from_channels(&self.channels, &eff, &decoded.powers, p.sigma0_sq, p.sigma1_sq);
        let (user_rates, eve_rates) = match cfg.mode {
            SchemeMode::OmaMf => oma_rates(&budget),
            _ => noma_rates(&budget)?,
        };
        let report = see(&user_rates, &eve_rates, p_ris, p_uav)?;
        let reward = reward_of(&report, oob, &cfg, &self.bounds);
        let qos = qos_violation(&report.user_rates, s.q_min);

        self.slot += 1;
        Ok(StepResult {
            next_state: self.state(),
            reward,
            report,
            oob,
            qos_violation: qos,
            done: self.is_done(),
            info: StepInfo {
                powers: decoded.powers,
                assignment: decoded.assignment,
                amps,
                p_ris,
                position: self.uav.position,
                velocity: self.uav.last_velocity,
                phases: self.phases.clone(),
                channels: self.channels.clone(),
                effective: eff,
            },
        })
    }

    /// Outcome of `action` from the current state, leaving `self` untouched.
    pub fn evaluate(&self, action: &[f64]) -> Result<StepResult> {
        self.clone().step(action)
    }

    pub fn snapshot(&self) -> EnvSnapshot {
        EnvSnapshot {
            uav: self.uav,
            slot: self.slot,
            rng: self.rng.clone(),
            channels: self.channels.clone(),
        }
    }

    pub fn restore(&mut self, snap: &EnvSnapshot) -> Result<()> {
        if snap.channels.elements() != self.cfg.elements() || snap.channels.users() != self.cfg.users() {
            return Err(SkyError::Input("snapshot does not match this environment".into()));
        }
        self.uav = snap.uav;
        self.slot = snap.slot;
        self.rng = snap.rng.clone();
        self.channels = snap.channels.clone();
        self.phases = align_phases(&self.channels);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;

    fn desk(m: usize) -> SystemConfig {
        let mut cfg = SystemConfig::desk();
        cfg.scenario.elements = m;
        cfg
    }

    #[test]
    fn state_dimension_formula() {
        assert_eq!(state_dim(20, 2), 297);
        let env = SkyEnv::new(&SystemConfig::default()).unwrap();
        assert_eq!(env.state().len(), 297);
        assert_eq!(env.action_dim(), 2 + 40 + 2);
    }

    #[test]
    fn reset_is_deterministic_and_starts_at_origin_point() {
        let mut env = SkyEnv::new(&desk(4)).unwrap();
        let a = env.reset(42).unwrap();
        let b = env.reset(42).unwrap();
        assert_eq!(a, b);
        let off = 2 * 4 + 3 * 2 * 4 + 2 * 3;
        assert_relative_eq!(a[off], 10.0 / 400.0);
        assert_relative_eq!(a[off + 1], 390.0 / 400.0);
        assert!(a.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn lower_extreme_action() {
        let cfg = desk(3);
        let a = vec![-1.0; action_dim(3, 2)];
        let d = decode_action(&a, &cfg).unwrap();
        assert_eq!(d.powers, vec![0.0, 0.0]);
        assert_eq!(d.amps.beta, vec![0.0; 3]);
        assert_eq!(d.distance, 0.0);
        assert_eq!(d.heading, 0.0);
        assert!(d.assignment.assign.iter().all(|&n| n == Node::Eve));
    }

    #[test]
    fn power_budget_and_midpoints() {
        let cfg = desk(2);
        let mut a = vec![0.0; action_dim(2, 2)];
        a[0] = 1.0;
        a[1] = 1.0;
        let d = decode_action(&a, &cfg).unwrap();
        assert_relative_eq!(d.powers[0], 0.5 * cfg.physics.pb_max);
        assert_relative_eq!(d.powers[1], 0.5 * cfg.physics.pb_max);
        assert_eq!(d.amps.beta, vec![4.0, 4.0]);
        assert_relative_eq!(d.distance, 10.0);
        assert!(decode_action(&[2.0; 8], &cfg).is_err());
        assert!(decode_action(&[0.0; 3], &cfg).is_err());
    }

    #[test]
    fn mode_restrictions_on_scheduling() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for mode in [SchemeMode::Ar, SchemeMode::Aj] {
            let mut cfg = desk(6);
            cfg.mode = mode;
            for _ in 0..500 {
                let a: Vec<f64> = (0..action_dim(6, 2)).map(|_| rng.random_range(-1.0..=1.0)).collect();
                let d = decode_action(&a, &cfg).unwrap();
                let eve = d.assignment.count(Node::Eve);
                match mode {
                    SchemeMode::Ar => assert_eq!(eve, 0),
                    _ => assert_eq!(eve, 6),
                }
            }
        }
    }

    #[test]
    fn reward_examples() {
        let mut cfg = SystemConfig::default();
        cfg.scenario.users = vec![[250.0, 300.0, 1.0]];
        let bounds = PowerBounds { p_min: 100.0, p_max: 200.0 };
        let report = see(&[5.0], &[1.0], 0.0, 150.0).unwrap();
        assert_relative_eq!(reward_of(&report, false, &cfg, &bounds), 3.4);
        assert_relative_eq!(reward_of(&report, true, &cfg, &bounds), 3.4 - 10.0);
        assert_relative_eq!(qos_violation(&[0.5, 2.0], 1.0), 0.25);
    }

    #[test]
    fn zero_action_gives_zero_reward() {
        let mut env = SkyEnv::new(&desk(4)).unwrap();
        env.reset(1).unwrap();
        let r = env.step(&vec![-1.0; env.action_dim()]).unwrap();
        assert_eq!(r.report.secrecy_sum, 0.0);
        assert_eq!(r.reward, 0.0);
        assert!(!r.oob);
    }

    #[test]
    fn leaving_the_box_costs_the_penalty() {
        let mut env = SkyEnv::new(&desk(4)).unwrap();
        env.reset(1).unwrap();
        let mut a = vec![-1.0; env.action_dim()];
        let n = a.len();
        a[n - 2] = 1.0; // full distance
        a[n - 1] = 0.0; // heading pi: towards x < 0 from x = 10
        let r = env.step(&a).unwrap();
        assert!(r.oob);
        assert_eq!(r.info.position.x, 0.0);
        assert_relative_eq!(r.reward, -10.0);
    }

    #[test]
    fn episode_length_and_done_flag() {
        let mut cfg = desk(3);
        cfg.scenario.slots = 7;
        let mut env = SkyEnv::new(&cfg).unwrap();
        env.reset(0).unwrap();
        let a = vec![0.0; env.action_dim()];
        for n in 1..=7 {
            let r = env.step(&a).unwrap();
            assert_eq!(r.done, n == 7);
        }
        assert!(matches!(env.step(&a), Err(SkyError::Contract(_))));
    }

    #[test]
    fn fixed_seed_trajectory_is_reproducible() {
        let run = || {
            let mut env = SkyEnv::new(&desk(5)).unwrap();
            env.reset(9).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(77);
            (0..20)
                .map(|_| {
                    let a: Vec<f64> = (0..env.action_dim()).map(|_| rng.random_range(-1.0..=1.0)).collect();
                    env.step(&a).unwrap()
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn snapshot_resumes_identically() {
        let mut env = SkyEnv::new(&desk(3)).unwrap();
        env.reset(5).unwrap();
        let a = vec![0.3; env.action_dim()];
        env.step(&a).unwrap();
        let snap = env.snapshot();
        let text = serde_json::to_string(&snap).unwrap();
        let first = env.step(&a).unwrap();

        let mut other = SkyEnv::new(&desk(3)).unwrap();
        other.restore(&serde_json::from_str(&text).unwrap()).unwrap();
        assert_eq!(other.step(&a).unwrap(), first);
    }

    #[test]
    fn next_state_carries_aligned_phases() {
        let mut env = SkyEnv::new(&desk(3)).unwrap();
        env.reset(2).unwrap();
        let r = env.step(&vec![0.5; env.action_dim()]).unwrap();
        assert_eq!(r.info.phases, align_phases(&r.info.channels));
        let tail = &r.next_state[r.next_state.len() - 2 * 3 * 3..];
        for (i, pair) in tail.chunks(2).enumerate() {
            let t = r.info.phases.theta[i / 3][i % 3];
            assert_relative_eq!(pair[0], t.cos());
            assert_relative_eq!(pair[1], t.sin());
        }
    }
}
