//! Scheme baselines, brute-force oracles and parameter sweeps.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::app::config::SystemConfig;
use crate::channel::{ChannelSet, Complex, Node};
use crate::env::SkyEnv;
pub use crate::env::SchemeMode;
use crate::error::{Result, SkyError};
use crate::learner::sac::NetworkBundle;
use crate::learner::train::{evaluate_policy, random_policy_run, train, EpisodeRecord, Policy, TrajectoryPoint};
use crate::ris::{scheduling_interval, AmpVector, PhaseBook, RisAssignment};

/// Metrics of one trained (or random) scheme.
#[derive(Debug, Clone)]
pub struct BaselineSummary {
    pub mode: SchemeMode,
    pub mean_see: f64,
    pub mean_secrecy_rate: f64,
    pub qos_violation_rate: f64,
    /// Mean cumulative reward of the evaluation episodes.
    pub final_reward: f64,
    pub trajectory: Vec<TrajectoryPoint>,
    pub training_log: Vec<EpisodeRecord>,
    pub bundle: Option<NetworkBundle>,
}

fn summarize(records: &[EpisodeRecord]) -> (f64, f64, f64, f64) {
    let n = records.len().max(1) as f64;
    let sum = |f: fn(&EpisodeRecord) -> f64| records.iter().map(f).sum::<f64>() / n;
    (
        sum(|r| r.mean_see),
        sum(|r| r.mean_secrecy_rate),
        sum(|r| r.qos_violation_rate),
        sum(|r| r.cumulative_reward),
    )
}

/// Trains under `mode` for `episodes` and scores the deterministic policy on
/// `cfg.training.eval_episodes` fresh episodes. RANDOM rolls uniform actions
/// for `episodes` episodes and scores those directly.
pub fn run_baseline(mode: SchemeMode, cfg: &SystemConfig, episodes: usize, seed: u64) -> Result<BaselineSummary> {
    let mut cfg = cfg.clone();
    cfg.mode = mode;
    cfg.training.episodes = episodes;
    cfg.training.seed = seed;
    cfg.validate()?;
    if mode == SchemeMode::Random {
        let log = random_policy_run(&cfg, episodes)?;
        let last = evaluate_policy(&cfg, &Policy::Uniform, 1, seed)?;
        let (see, sec, qos, rew) = summarize(&log);
        return Ok(BaselineSummary {
            mode,
            mean_see: see,
            mean_secrecy_rate: sec,
            qos_violation_rate: qos,
            final_reward: rew,
            trajectory: last.into_iter().next().map(|r| r.trajectory).unwrap_or_default(),
            training_log: log,
            bundle: None,
        });
    }
    let out = train(&cfg, |_| Ok(()))?;
    let evals = evaluate_policy(&cfg, &Policy::Deterministic(&out.bundle), cfg.training.eval_episodes.max(1), seed)?;
    let records: Vec<EpisodeRecord> = evals.iter().map(|r| r.record).collect();
    let (see, sec, qos, rew) = summarize(&records);
    Ok(BaselineSummary {
        mode,
        mean_see: see,
        mean_secrecy_rate: sec,
        qos_violation_rate: qos,
        final_reward: rew,
        trajectory: evals.into_iter().last().map(|r| r.trajectory).unwrap_or_default(),
        training_log: out.log,
        bundle: Some(out.bundle),
    })
}

/// Best gridded phases and the magnitudes they reach, node-indexed.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseOracle {
    pub phases: PhaseBook,
    pub magnitudes: Vec<f64>,
}

pub const PHASE_ORACLE_MAX_ELEMENTS: usize = 3;
pub const PHASE_ORACLE_MAX_GRID: usize = 360;

/// `|h_bg + sum_{m in S} sqrt(beta_m) e^{j theta_m} h_rg[m] h_br[m]|` over the
/// elements `S` assigned to `node`.
pub fn node_gain(channels: &ChannelSet, assignment: &RisAssignment, amps: &AmpVector, node: Node, theta: &[f64]) -> f64 {
    let rg = channels.rg(node);
    let mut acc = channels.bg(node);
    for (m, &n) in assignment.assign.iter().enumerate() {
        if n == node {
            acc += Complex64::from_polar(amps.beta[m].sqrt(), theta[m]) * rg[m] * channels.h_br[m];
        }
    }
    acc.norm()
}

/// Largest loss the phase grid can cause: every element off by at most half
/// a grid step.
pub fn grid_resolution_bound(channels: &ChannelSet, assignment: &RisAssignment, amps: &AmpVector, node: Node, grid: usize) -> f64 {
    let rg = channels.rg(node);
    let slack = 1.0 - (std::f64::consts::PI / grid as f64).cos();
    assignment
        .assign
        .iter()
        .enumerate()
        .filter(|(_, &n)| n == node)
        .map(|(m, _)| amps.beta[m].sqrt() * rg[m].norm() * channels.h_br[m].norm())
        .sum::<f64>()
        * slack
}

/// Joint exhaustive search over `grid` phases for each node's own elements.
/// Elements not assigned to a node keep phase 0 in that node's row.
pub fn brute_force_phase_oracle(
    channels: &ChannelSet,
    assignment: &RisAssignment,
    amps: &AmpVector,
    grid: usize,
) -> Result<PhaseOracle> {
    let m = channels.elements();
    if m > PHASE_ORACLE_MAX_ELEMENTS || grid == 0 || grid > PHASE_ORACLE_MAX_GRID {
        return Err(SkyError::CostGuard(format!(
            "phase oracle needs M <= {PHASE_ORACLE_MAX_ELEMENTS} and 1 <= grid <= {PHASE_ORACLE_MAX_GRID}, got M = {m}, grid = {grid}"
        )));
    }
    if assignment.len() != m || amps.beta.len() != m {
        return Err(SkyError::Input("assignment and amplitudes must cover every element".into()));
    }
    let step = TAU / grid as f64;
    let mut theta = Vec::with_capacity(channels.nodes());
    let mut magnitudes = Vec::with_capacity(channels.nodes());
    for node in Node::all(channels.users()) {
        let own: Vec<usize> = (0..m).filter(|&i| assignment.assign[i] == node).collect();
        let rg = channels.rg(node);
        let terms: Vec<Complex> = own
            .iter()
            .map(|&i| amps.beta[i].sqrt() * rg[i] * channels.h_br[i])
            .collect();
        let rotations: Vec<Complex> = (0..grid).map(|g| Complex64::from_polar(1.0, g as f64 * step)).collect();
        let mut idx = vec![0usize; own.len()];
        let mut best = (f64::NEG_INFINITY, idx.clone());
        loop {
            let mut acc = channels.bg(node);
            for (t, &g) in terms.iter().zip(&idx) {
                acc += t * rotations[g];
            }
            let mag = acc.norm();
            if mag > best.0 {
                best = (mag, idx.clone());
            }
            // odometer increment over the grid indices
            let mut carry = true;
            for g in idx.iter_mut() {
                *g += 1;
                if *g < grid {
                    carry = false;
                    break;
                }
                *g = 0;
            }
            if carry {
                break;
            }
        }
        let mut row = vec![0.0; m];
        for (&i, &g) in own.iter().zip(&best.1) {
            row[i] = g as f64 * step;
        }
        theta.push(row);
        magnitudes.push(best.0);
    }
    Ok(PhaseOracle {
        phases: PhaseBook { theta },
        magnitudes,
    })
}

/// One instance of the alignment-versus-grid comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseCheck {
    pub instance: usize,
    pub elements: usize,
    pub node: Node,
    pub aligned: f64,
    pub oracle: f64,
    pub bound: f64,
}

impl PhaseCheck {
    /// Closed-form alignment is within grid resolution of the grid optimum.
    pub fn passes(&self) -> bool {
        self.aligned >= self.oracle - self.bound - 1e-12 * self.oracle.max(f64::MIN_POSITIVE)
    }
}

/// Compares closed-form alignment with a 360-point grid search on
/// `instances` random geometries (UAV position, `M` in {1, 2}, element
/// schedule and amplification all drawn from `seed`).
pub fn phase_oracle_check(cfg: &SystemConfig, instances: usize, seed: u64) -> Result<Vec<PhaseCheck>> {
    use crate::channel::{build_channels, Position3D};
    use crate::ris::align_phases;
    use rand::{Rng, SeedableRng};

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let s = &cfg.scenario;
    let nodes = s.node_positions();
    let users = cfg.users();
    let mut out = Vec::new();
    for instance in 0..instances {
        let m = rng.random_range(1..=2usize);
        let uav = Position3D::new(
            rng.random_range(s.arena.x_min..=s.arena.x_max),
            rng.random_range(s.arena.y_min..=s.arena.y_max),
            s.altitude,
        );
        let ch = build_channels(&uav, &s.bs_position(), &nodes, m, &cfg.physics.path_loss(), &mut rng)?;
        let assignment = RisAssignment {
            assign: (0..m).map(|_| Node::from_index(rng.random_range(0..=users))).collect(),
        };
        let amps = AmpVector {
            beta: (0..m).map(|_| rng.random_range(0.0..=cfg.physics.beta_max)).collect(),
        };
        let oracle = brute_force_phase_oracle(&ch, &assignment, &amps, PHASE_ORACLE_MAX_GRID)?;
        let closed = align_phases(&ch);
        for node in Node::all(users) {
            out.push(PhaseCheck {
                instance,
                elements: m,
                node,
                aligned: node_gain(&ch, &assignment, &amps, node, &closed.theta[node.index()]),
                oracle: oracle.magnitudes[node.index()],
                bound: grid_resolution_bound(&ch, &assignment, &amps, node, PHASE_ORACLE_MAX_GRID),
            });
        }
    }
    Ok(out)
}

pub const SEE_ORACLE_MAX_USERS: usize = 2;
pub const SEE_ORACLE_MAX_ELEMENTS: usize = 2;
pub const SEE_ORACLE_MAX_LEVELS: usize = 5;
pub const SEE_ORACLE_MAX_CANDIDATES: usize = 1_000_000;

/// Discrete action grid for the single-slot SEE oracle.
///
/// Powers, amplifications, flight distance and heading take `levels`
/// evenly spaced raw values in `[-1, 1]`; each scheduling raw takes the
/// midpoint of one node's interval.
#[derive(Debug, Clone, PartialEq)]
pub struct SeeGrid {
    pub users: usize,
    pub elements: usize,
    pub levels: Vec<f64>,
    pub schedule: Vec<f64>,
}

impl SeeGrid {
    pub fn new(cfg: &SystemConfig, levels: usize) -> Result<Self> {
        let k = cfg.users();
        let m = cfg.elements();
        if k > SEE_ORACLE_MAX_USERS || m > SEE_ORACLE_MAX_ELEMENTS || !(2..=SEE_ORACLE_MAX_LEVELS).contains(&levels) {
            return Err(SkyError::CostGuard(format!(
                "SEE oracle needs K <= {SEE_ORACLE_MAX_USERS}, M <= {SEE_ORACLE_MAX_ELEMENTS} and 2..={SEE_ORACLE_MAX_LEVELS} levels, got K = {k}, M = {m}, levels = {levels}"
            )));
        }
        let grid = Self {
            users: k,
            elements: m,
            levels: (0..levels).map(|i| -1.0 + 2.0 * i as f64 / (levels - 1) as f64).collect(),
            schedule: (1..=k + 1)
                .map(|g| {
                    let (lo, hi) = scheduling_interval(g, k);
                    0.5 * (lo + hi)
                })
                .collect(),
        };
        if grid.candidates() > SEE_ORACLE_MAX_CANDIDATES {
            return Err(SkyError::CostGuard(format!(
                "SEE oracle grid has {} candidates, limit {SEE_ORACLE_MAX_CANDIDATES}",
                grid.candidates()
            )));
        }
        Ok(grid)
    }

    fn radices(&self) -> Vec<usize> {
        let l = self.levels.len();
        let mut r = vec![l; self.users];
        r.extend(std::iter::repeat_n(self.schedule.len(), self.elements));
        r.extend(std::iter::repeat_n(l, self.elements + 2));
        r
    }

    pub fn candidates(&self) -> usize {
        self.radices().iter().product()
    }

    /// The `index`-th grid action in mixed-radix order.
    pub fn action(&self, mut index: usize) -> Vec<f64> {
        let radices = self.radices();
        let k = self.users;
        let m = self.elements;
        radices
            .iter()
            .enumerate()
            .map(|(d, &r)| {
                let digit = index % r;
                index /= r;
                if (k..k + m).contains(&d) {
                    self.schedule[digit]
                } else {
                    self.levels[digit]
                }
            })
            .collect()
    }

    /// Nearest grid action to an arbitrary `[-1, 1]` action.
    pub fn snap(&self, action: &[f64]) -> Vec<f64> {
        let k = self.users;
        let m = self.elements;
        let nearest = |set: &[f64], v: f64| {
            *set.iter()
                .min_by(|a, b| (*a - v).abs().total_cmp(&(*b - v).abs()))
                .expect("non-empty grid")
        };
        action
            .iter()
            .enumerate()
            .map(|(d, &v)| {
                if (k..k + m).contains(&d) {
                    nearest(&self.schedule, v)
                } else {
                    nearest(&self.levels, v)
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeeOracle {
    pub best_see: f64,
    pub best_action: Vec<f64>,
    pub evaluated: usize,
}

/// Exhaustive single-slot SEE search from `env`'s current state over
/// `grid`. Each candidate is applied to a clone, so constraint handling is
/// exactly the environment's.
pub fn brute_force_see_oracle(env: &SkyEnv, grid: &SeeGrid) -> Result<SeeOracle> {
    if grid.users != env.config().users() || grid.elements != env.config().elements() {
        return Err(SkyError::Input("oracle grid does not match the environment".into()));
    }
    let mut best = SeeOracle {
        best_see: f64::NEG_INFINITY,
        best_action: Vec::new(),
        evaluated: 0,
    };
    for i in 0..grid.candidates() {
        let action = grid.action(i);
        let see = env.evaluate(&action)?.report.see;
        best.evaluated += 1;
        if see > best.best_see {
            best.best_see = see;
            best.best_action = action;
        }
    }
    Ok(best)
}

/// One state of the SEE dominance check.
#[derive(Debug, Clone, PartialEq)]
pub struct SeeCheck {
    pub state: usize,
    pub oracle_see: f64,
    /// Best SEE among the snapped probe actions.
    pub probe_see: f64,
}

impl SeeCheck {
    pub fn passes(&self) -> bool {
        self.probe_see <= self.oracle_see + 1e-9
    }
}

/// Walks `states` slots of a uniform-random episode; at each one, compares
/// the oracle maximum with `probes` random actions snapped onto the grid
/// plus the snapped action of `policy` when given.
pub fn see_oracle_check(
    cfg: &SystemConfig,
    levels: usize,
    states: usize,
    probes: usize,
    policy: Option<&NetworkBundle>,
    seed: u64,
) -> Result<Vec<SeeCheck>> {
    use crate::learner::sac::sample_action;
    use rand::{Rng, SeedableRng};

    let grid = SeeGrid::new(cfg, levels)?;
    let mut env = SkyEnv::new(cfg)?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut state = env.reset(seed)?;
    let dim = env.action_dim();
    let mut out = Vec::with_capacity(states);
    for i in 0..states {
        if env.is_done() {
            state = env.reset(seed.wrapping_add(i as u64))?;
        }
        let oracle = brute_force_see_oracle(&env, &grid)?;
        let mut candidates: Vec<Vec<f64>> = (0..probes)
            .map(|_| (0..dim).map(|_| rng.random_range(-1.0..=1.0)).collect())
            .collect();
        if let Some(b) = policy {
            candidates.push(sample_action(b, &state, &mut rng, true)?.0);
        }
        let mut probe_see = f64::NEG_INFINITY;
        for a in &candidates {
            probe_see = probe_see.max(env.evaluate(&grid.snap(a))?.report.see);
        }
        out.push(SeeCheck {
            state: i,
            oracle_see: oracle.best_see,
            probe_see,
        });
        let walk: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..=1.0)).collect();
        state = env.step(&walk)?.next_state;
    }
    Ok(out)
}

/// Cells of a sweep; every combination of the lists is trained per seed.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub elements: Vec<usize>,
    pub beta_max: Vec<f64>,
    pub modes: Vec<SchemeMode>,
    pub seeds: Vec<u64>,
    /// Base configuration carrying episode and slot counts.
    pub base: SystemConfig,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.elements.is_empty() || self.beta_max.is_empty() || self.modes.is_empty() || self.seeds.is_empty() {
            return Err(SkyError::Input("sweep lists must be non-empty".into()));
        }
        self.base.validate()
    }

    pub fn cells(&self) -> Vec<(usize, f64, SchemeMode, u64)> {
        let mut out = Vec::new();
        for &m in &self.elements {
            for &b in &self.beta_max {
                for &mode in &self.modes {
                    for &s in &self.seeds {
                        out.push((m, b, mode, s));
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub elements: usize,
    pub beta_max: f64,
    pub mode: SchemeMode,
    pub seed: u64,
    pub mean_see: f64,
    pub mean_secrecy_rate: f64,
    pub qos_violation_rate: f64,
    pub final_reward: f64,
}

/// Trains every cell on the rayon pool. `on_row` sees each row as soon as
/// its cell finishes; the returned table is in [`SweepSpec::cells`] order.
pub fn run_sweep(spec: &SweepSpec, on_row: impl Fn(&SweepRow) -> Result<()> + Sync) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    spec.cells()
        .into_par_iter()
        .map(|(m, beta, mode, seed)| {
            let mut cfg = spec.base.clone();
            cfg.scenario.elements = m;
            cfg.physics.beta_max = beta;
            let s = run_baseline(mode, &cfg, cfg.training.episodes, seed)?;
            let row = SweepRow {
                elements: m,
                beta_max: beta,
                mode,
                seed,
                mean_see: s.mean_see,
                mean_secrecy_rate: s.mean_secrecy_rate,
                qos_violation_rate: s.qos_violation_rate,
                final_reward: s.final_reward,
            };
            on_row(&row)?;
            Ok(row)
        })
        .collect()
}

/// Seed-averaged rows, one per `(M, beta_max, mode)` in first-seen order.
pub fn sweep_means(rows: &[SweepRow]) -> Vec<SweepRow> {
    let mut out: Vec<(SweepRow, usize)> = Vec::new();
    for r in rows {
        match out
            .iter_mut()
            .find(|(o, _)| o.elements == r.elements && o.beta_max == r.beta_max && o.mode == r.mode)
        {
            Some((acc, n)) => {
                acc.mean_see += r.mean_see;
                acc.mean_secrecy_rate += r.mean_secrecy_rate;
                acc.qos_violation_rate += r.qos_violation_rate;
                acc.final_reward += r.final_reward;
                *n += 1;
            }
            None => out.push((r.clone(), 1)),
        }
    }
    out.into_iter()
        .map(|(mut r, n)| {
            let n = n as f64;
            r.mean_see /= n;
            r.mean_secrecy_rate /= n;
            r.qos_violation_rate /= n;
            r.final_reward /= n;
            r
        })
        .collect()
}
