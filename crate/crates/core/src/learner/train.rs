//! Episode loop: roll the environment, fill the replay buffer, run SAC
//! updates. Everything is driven by ChaCha streams derived from one seed, so
//! a fixed config reproduces bit-identical logs.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::replay::{Experience, ReplayBuffer};
use super::sac::{sample_action, update, Batch, NetworkBundle, SacConfig};
use crate::app::config::SystemConfig;
use crate::env::{SchemeMode, SkyEnv};
use crate::error::Result;

const STREAM_INIT: u64 = 1;
const STREAM_ACTION: u64 = 2;
const STREAM_EPISODE: u64 = 3;
const STREAM_UPDATE: u64 = 4;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// One row of the training log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub cumulative_reward: f64,
    pub mean_see: f64,
    pub mean_secrecy_rate: f64,
    /// Fraction of slots in which some user missed the QoS floor.
    pub qos_violation_rate: f64,
}

/// Per-slot UAV state of a rollout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryPoint {
    pub slot: usize,
    pub x: f64,
    pub y: f64,
    pub velocity: f64,
    pub see: f64,
}

#[derive(Debug, Clone)]
pub struct Rollout {
    pub record: EpisodeRecord,
    pub trajectory: Vec<TrajectoryPoint>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub bundle: NetworkBundle,
    pub log: Vec<EpisodeRecord>,
}

/// How actions are chosen during a rollout.
pub enum Policy<'a> {
    Uniform,
    Stochastic(&'a NetworkBundle),
    Deterministic(&'a NetworkBundle),
}

fn uniform_action<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<f64> {
    (0..dim).map(|_| rng.random_range(-1.0..=1.0)).collect()
}

/// Plays one full episode from `env.reset(episode_seed)`. Every transition
/// is handed to `sink`.
pub fn rollout<R: Rng + ?Sized>(
    env: &mut SkyEnv,
    policy: &Policy<'_>,
    episode: usize,
    episode_seed: u64,
    rng: &mut R,
    mut sink: impl FnMut(Experience),
) -> Result<Rollout> {
    let mut state = env.reset(episode_seed)?;
    let dim = env.action_dim();
    let mut total = 0.0;
    let mut see = 0.0;
    let mut secrecy = 0.0;
    let mut violations = 0usize;
    let mut trajectory = Vec::with_capacity(env.config().scenario.slots);
    while !env.is_done() {
        let action = match policy {
            Policy::Uniform => uniform_action(dim, rng),
            Policy::Stochastic(b) => sample_action(b, &state, rng, false)?.0,
            Policy::Deterministic(b) => sample_action(b, &state, rng, true)?.0,
        };
        let step = env.step(&action)?;
        total += step.reward;
        see += step.report.see;
        secrecy += step.report.secrecy_sum;
        if step.qos_violation > 0.0 {
            violations += 1;
        }
        trajectory.push(TrajectoryPoint {
            slot: env.slot(),
            x: step.info.position.x,
            y: step.info.position.y,
            velocity: step.info.velocity,
            see: step.report.see,
        });
        let next = step.next_state;
        sink(Experience {
            state: std::mem::replace(&mut state, next.clone()),
            action,
            reward: step.reward,
            next_state: next,
            // the slot limit truncates, it does not terminate
            done: false,
        });
    }
    let n = trajectory.len().max(1) as f64;
    Ok(Rollout {
        record: EpisodeRecord {
            episode,
            cumulative_reward: total,
            mean_see: see / n,
            mean_secrecy_rate: secrecy / n,
            qos_violation_rate: violations as f64 / n,
        },
        trajectory,
    })
}

/// Freshly initialized agent for `cfg`.
pub fn init_bundle(cfg: &SystemConfig) -> NetworkBundle {
    let ds = crate::env::state_dim(cfg.elements(), cfg.users());
    let da = crate::env::action_dim(cfg.elements(), cfg.users());
    NetworkBundle::new(ds, da, &cfg.training.hidden, &mut stream(cfg.training.seed, STREAM_INIT))
}

/// Trains an agent under `cfg`, calling `on_episode` after every episode.
///
/// The RANDOM mode never leaves the warmup phase and performs no updates.
pub fn train(cfg: &SystemConfig, mut on_episode: impl FnMut(&EpisodeRecord) -> Result<()>) -> Result<TrainOutcome> {
    let t = &cfg.training;
    let mut env = SkyEnv::new(cfg)?;
    let mut bundle = init_bundle(cfg);
    let sac = SacConfig::standard(bundle.action_dim, t.lr, t.gamma, t.tau);
    let mut buffer = ReplayBuffer::new(t.buffer_capacity);
    let mut action_rng = stream(t.seed, STREAM_ACTION);
    let mut episode_rng = stream(t.seed, STREAM_EPISODE);
    let mut update_rng = stream(t.seed, STREAM_UPDATE);
    let learning = cfg.mode != SchemeMode::Random;

    let mut log = Vec::with_capacity(t.episodes);
    for episode in 0..t.episodes {
        let seed = episode_rng.next_u64();
        let policy = if learning && episode >= t.warmup_episodes {
            Policy::Stochastic(&bundle)
        } else {
            Policy::Uniform
        };
        let out = rollout(&mut env, &policy, episode, seed, &mut action_rng, |e| buffer.push(e))?;
        if learning && buffer.len() >= t.batch_size {
            for _ in 0..t.iterations {
                let batch = Batch::from_experiences(&buffer.sample(t.batch_size, &mut update_rng));
                update(&mut bundle, &batch, &sac, &mut update_rng)?;
            }
        }
        on_episode(&out.record)?;
        log.push(out.record);
    }
    Ok(TrainOutcome { bundle, log })
}

/// Uniform-action episodes under `cfg`'s environment, seeded like `train`.
pub fn random_policy_run(cfg: &SystemConfig, episodes: usize) -> Result<Vec<EpisodeRecord>> {
    let mut env = SkyEnv::new(cfg)?;
    let mut action_rng = stream(cfg.training.seed, STREAM_ACTION);
    let mut episode_rng = stream(cfg.training.seed, STREAM_EPISODE);
    (0..episodes)
        .map(|e| {
            let seed = episode_rng.next_u64();
            rollout(&mut env, &Policy::Uniform, e, seed, &mut action_rng, |_| {}).map(|r| r.record)
        })
        .collect()
}

/// Deterministic-policy rollouts on fresh episode seeds derived from `seed`.
pub fn evaluate_policy(
    cfg: &SystemConfig,
    policy: &Policy<'_>,
    episodes: usize,
    seed: u64,
) -> Result<Vec<Rollout>> {
    let mut env = SkyEnv::new(cfg)?;
    let mut rng = stream(seed, STREAM_ACTION);
    let mut seeds = stream(seed, STREAM_EPISODE ^ 0x5eed);
    (0..episodes)
        .map(|e| {
            let s = seeds.next_u64();
            rollout(&mut env, policy, e, s, &mut rng, |_| {})
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> SystemConfig {
        let mut cfg = SystemConfig::desk();
        cfg.scenario.elements = 2;
        cfg.scenario.slots = 5;
        cfg.training.episodes = 3;
        cfg.training.iterations = 2;
        cfg.training.batch_size = 4;
        cfg.training.warmup_episodes = 1;
        cfg.training.hidden = vec![8];
        cfg
    }

    #[test]
    fn zero_episodes_returns_initial_bundle() {
        let mut cfg = tiny();
        cfg.training.episodes = 0;
        let out = train(&cfg, |_| Ok(())).unwrap();
        assert!(out.log.is_empty());
        assert_eq!(out.bundle, init_bundle(&cfg));
    }

    #[test]
    fn training_is_reproducible() {
        let cfg = tiny();
        let a = train(&cfg, |_| Ok(())).unwrap();
        let b = train(&cfg, |_| Ok(())).unwrap();
        assert_eq!(a.log, b.log);
        assert_eq!(a.bundle, b.bundle);
        assert_eq!(a.log.len(), 3);
        assert_ne!(a.bundle, init_bundle(&cfg));
    }

    #[test]
    fn random_mode_never_updates() {
        let mut cfg = tiny();
        cfg.mode = SchemeMode::Random;
        let out = train(&cfg, |_| Ok(())).unwrap();
        assert_eq!(out.bundle, init_bundle(&cfg));
    }

    #[test]
    fn rollout_trajectory_covers_every_slot() {
        let cfg = tiny();
        let r = evaluate_policy(&cfg, &Policy::Uniform, 2, 9).unwrap();
        assert_eq!(r.len(), 2);
        let slots: Vec<usize> = r[0].trajectory.iter().map(|p| p.slot).collect();
        assert_eq!(slots, vec![1, 2, 3, 4, 5]);
        assert!((0.0..=1.0).contains(&r[0].record.qos_violation_rate));
    }
}
