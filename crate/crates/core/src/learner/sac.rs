//! Soft actor-critic: squashed-Gaussian actor, twin Q critics with Polyak
//! targets, and an automatically tuned entropy temperature.
//!
//! The actor emits a mean and an unconstrained log-std head per action
//! dimension. The log-std head is squashed smoothly into
//! `[LOG_STD_MIN, LOG_STD_MAX]` so the policy loss stays differentiable
//! everywhere.

use ndarray::{s, Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::adam::{adam_step, AdamConfig, AdamState};
use super::dense::{hstack, Activation, DenseNet, NetGrads};
use super::replay::Experience;
use crate::error::{Result, SkyError};

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;
/// Keeps `log(1 - a^2)` finite as `|a| -> 1`.
pub const SQUASH_EPS: f64 = 1e-6;
const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

#[derive(Debug, Clone, PartialEq)]
pub struct SacConfig {
    pub gamma: f64,
    pub tau: f64,
    pub lr: f64,
    pub target_entropy: f64,
}

impl SacConfig {
    pub fn standard(action_dim: usize, lr: f64, gamma: f64, tau: f64) -> Self {
        Self {
            gamma,
            tau,
            lr,
            target_entropy: -(action_dim as f64),
        }
    }
}

/// Every network and optimizer state of one agent.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkBundle {
    pub actor: DenseNet,
    pub critic1: DenseNet,
    pub critic2: DenseNet,
    pub target1: DenseNet,
    pub target2: DenseNet,
    pub log_alpha: f64,
    pub state_dim: usize,
    pub action_dim: usize,
    actor_opt: AdamState,
    critic1_opt: AdamState,
    critic2_opt: AdamState,
    alpha_opt: AdamState,
}

fn opt_for(net: &DenseNet) -> AdamState {
    AdamState::for_shapes(net.param_slices().iter().map(|s| s.len()))
}

impl NetworkBundle {
    pub fn new<R: Rng + ?Sized>(state_dim: usize, action_dim: usize, hidden: &[usize], rng: &mut R) -> Self {
        let sizes = |input: usize, output: usize| {
            std::iter::once(input)
                .chain(hidden.iter().copied())
                .chain(std::iter::once(output))
                .collect::<Vec<_>>()
        };
        let actor = DenseNet::new(&sizes(state_dim, 2 * action_dim), Activation::Identity, rng);
        let critic1 = DenseNet::new(&sizes(state_dim + action_dim, 1), Activation::Identity, rng);
        let critic2 = DenseNet::new(&sizes(state_dim + action_dim, 1), Activation::Identity, rng);
        Self::from_parts(actor, critic1.clone(), critic2.clone(), critic1, critic2, 0.0)
    }

    /// Assembles a bundle with fresh optimizer state.
    pub fn from_parts(
        actor: DenseNet,
        critic1: DenseNet,
        critic2: DenseNet,
        target1: DenseNet,
        target2: DenseNet,
        log_alpha: f64,
    ) -> Self {
        let action_dim = actor.output_dim() / 2;
        let state_dim = actor.input_dim();
        Self {
            actor_opt: opt_for(&actor),
            critic1_opt: opt_for(&critic1),
            critic2_opt: opt_for(&critic2),
            alpha_opt: AdamState::for_shapes([1]),
            actor,
            critic1,
            critic2,
            target1,
            target2,
            log_alpha,
            state_dim,
            action_dim,
        }
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.exp()
    }

    pub fn hidden(&self) -> Vec<usize> {
        let sizes = self.actor.sizes();
        sizes[1..sizes.len() - 1].to_vec()
    }

    pub fn is_finite(&self) -> bool {
        self.log_alpha.is_finite()
            && [&self.actor, &self.critic1, &self.critic2, &self.target1, &self.target2]
                .iter()
                .all(|n| n.is_finite())
    }
}

/// Splits raw actor output into means and squashed log-stds.
pub fn policy_heads(raw: &Array2<f64>, action_dim: usize) -> (Array2<f64>, Array2<f64>) {
    let mean = raw.slice(s![.., ..action_dim]).to_owned();
    let half = 0.5 * (LOG_STD_MAX - LOG_STD_MIN);
    let log_std = raw
        .slice(s![.., action_dim..])
        .mapv(|r| LOG_STD_MIN + half * (r.tanh() + 1.0));
    (mean, log_std)
}

/// `a = tanh(mean + std * noise)` per row, with the log-density of `a`.
pub fn squashed_sample(
    mean: &Array2<f64>,
    log_std: &Array2<f64>,
    noise: &Array2<f64>,
) -> (Array2<f64>, Array1<f64>) {
    let mut actions = Array2::zeros(mean.raw_dim());
    let mut logp = Array1::zeros(mean.nrows());
    Zip::from(actions.rows_mut())
        .and(&mut logp)
        .and(mean.rows())
        .and(log_std.rows())
        .and(noise.rows())
        .for_each(|mut a_row, lp, mu, ls, eps| {
            let mut acc = 0.0;
            for d in 0..mu.len() {
                let u = mu[d] + ls[d].exp() * eps[d];
                let a = u.tanh();
                a_row[d] = a;
                acc += -0.5 * eps[d] * eps[d] - ls[d] - HALF_LN_2PI - (1.0 - a * a + SQUASH_EPS).ln();
            }
            *lp = acc;
        });
    (actions, logp)
}

pub fn standard_noise<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || StandardNormal.sample(rng))
}

/// Draws one action for `state`. The deterministic variant returns
/// `tanh(mean)` and its log-density.
pub fn sample_action<R: Rng + ?Sized>(
    bundle: &NetworkBundle,
    state: &[f64],
    rng: &mut R,
    deterministic: bool,
) -> Result<(Vec<f64>, f64)> {
    let raw = bundle.actor.forward(state)?;
    let raw = Array2::from_shape_vec((1, raw.len()), raw).expect("row");
    let (mean, log_std) = policy_heads(&raw, bundle.action_dim);
    let noise = if deterministic {
        Array2::zeros(mean.raw_dim())
    } else {
        standard_noise(1, bundle.action_dim, rng)
    };
    let (a, logp) = squashed_sample(&mean, &log_std, &noise);
    Ok((a.row(0).to_vec(), logp[0]))
}

/// Column-stacked mini-batch.
#[derive(Debug, Clone)]
pub struct Batch {
    pub states: Array2<f64>,
    pub actions: Array2<f64>,
    pub rewards: Array1<f64>,
    pub next_states: Array2<f64>,
    pub dones: Array1<f64>,
}

impl Batch {
    pub fn from_experiences(items: &[&Experience]) -> Self {
        let n = items.len();
        let ds = items[0].state.len();
        let da = items[0].action.len();
        let mut states = Array2::zeros((n, ds));
        let mut actions = Array2::zeros((n, da));
        let mut next_states = Array2::zeros((n, ds));
        for (i, e) in items.iter().enumerate() {
            states.row_mut(i).assign(&ndarray::aview1(&e.state));
            actions.row_mut(i).assign(&ndarray::aview1(&e.action));
            next_states.row_mut(i).assign(&ndarray::aview1(&e.next_state));
        }
        Self {
            states,
            actions,
            rewards: items.iter().map(|e| e.reward).collect(),
            next_states,
            dones: items.iter().map(|e| if e.done { 1.0 } else { 0.0 }).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}

fn q_values(critic: &DenseNet, states: ArrayView2<f64>, actions: ArrayView2<f64>) -> Array1<f64> {
    critic
        .forward_batch(hstack(states, actions).view())
        .column(0)
        .to_owned()
}

/// Soft Bellman targets `r + gamma (1 - done) (min Q_targ(s', a') - alpha log pi(a'|s'))`
/// with `a'` drawn from the current actor using `noise`.
pub fn critic_targets(bundle: &NetworkBundle, batch: &Batch, noise: &Array2<f64>, gamma: f64) -> Array1<f64> {
    let raw = bundle.actor.forward_batch(batch.next_states.view());
    let (mean, log_std) = policy_heads(&raw, bundle.action_dim);
    let (next_actions, next_logp) = squashed_sample(&mean, &log_std, noise);
    let q1 = q_values(&bundle.target1, batch.next_states.view(), next_actions.view());
    let q2 = q_values(&bundle.target2, batch.next_states.view(), next_actions.view());
    let alpha = bundle.alpha();
    let mut y = Array1::zeros(batch.len());
    Zip::from(&mut y)
        .and(&batch.rewards)
        .and(&batch.dones)
        .and(&q1)
        .and(&q2)
        .and(&next_logp)
        .for_each(|y, &r, &d, &a, &b, &lp| {
            *y = r + gamma * (1.0 - d) * (a.min(b) - alpha * lp);
        });
    y
}

/// Mean squared Bellman error of one critic and its parameter gradient.
pub fn critic_loss_grad(
    critic: &DenseNet,
    states: ArrayView2<f64>,
    actions: ArrayView2<f64>,
    targets: &Array1<f64>,
) -> (f64, NetGrads) {
    let n = targets.len() as f64;
    let (q, cache) = critic.forward_train(hstack(states, actions).view());
    let diff = &q.column(0) - targets;
    let loss = diff.mapv(|d| d * d).sum() / n;
    let grad_out = diff.mapv(|d| 2.0 * d / n).insert_axis(Axis(1));
    let (grads, _) = critic.backward(&cache, grad_out.view());
    (loss, grads)
}

/// Policy loss `mean(alpha log pi(a|s) - min(Q1, Q2)(s, a))` for
/// reparameterized actions `a = tanh(mean + std * noise)`, its gradient with
/// respect to the actor, and the per-sample log-densities.
pub fn actor_loss_grad(
    actor: &DenseNet,
    critic1: &DenseNet,
    critic2: &DenseNet,
    states: ArrayView2<f64>,
    noise: &Array2<f64>,
    alpha: f64,
) -> (f64, NetGrads, Array1<f64>) {
    let n = states.nrows();
    let nf = n as f64;
    let da = actor.output_dim() / 2;
    let ds = states.ncols();

    let (raw, actor_cache) = actor.forward_train(states);
    let (mean, log_std) = policy_heads(&raw, da);
    let (actions, logp) = squashed_sample(&mean, &log_std, noise);

    let sa = hstack(states, actions.view());
    let (q1, c1_cache) = critic1.forward_train(sa.view());
    let (q2, c2_cache) = critic2.forward_train(sa.view());
    let mut up1 = Array2::zeros((n, 1));
    let mut up2 = Array2::zeros((n, 1));
    let mut loss = 0.0;
    for i in 0..n {
        let (a, b) = (q1[[i, 0]], q2[[i, 0]]);
        if a <= b {
            up1[[i, 0]] = -1.0 / nf;
        } else {
            up2[[i, 0]] = -1.0 / nf;
        }
        loss += alpha * logp[i] - a.min(b);
    }
    loss /= nf;
    let (_, dsa1) = critic1.backward(&c1_cache, up1.view());
    let (_, dsa2) = critic2.backward(&c2_cache, up2.view());
    let dq_da = &dsa1.slice(s![.., ds..]) + &dsa2.slice(s![.., ds..]);

    let half = 0.5 * (LOG_STD_MAX - LOG_STD_MIN);
    let mut grad_raw = Array2::zeros(raw.raw_dim());
    for i in 0..n {
        for d in 0..da {
            let a = actions[[i, d]];
            let one_minus = 1.0 - a * a;
            let std = log_std[[i, d]].exp();
            let dlogp_du = 2.0 * a * one_minus / (one_minus + SQUASH_EPS);
            let dl_du = alpha / nf * dlogp_du + dq_da[[i, d]] * one_minus;
            let dl_dlogstd = -alpha / nf + dl_du * std * noise[[i, d]];
            let t = raw[[i, da + d]].tanh();
            grad_raw[[i, d]] = dl_du;
            grad_raw[[i, da + d]] = dl_dlogstd * half * (1.0 - t * t);
        }
    }
    let (grads, _) = actor.backward(&actor_cache, grad_raw.view());
    (loss, grads, logp)
}

/// Temperature loss `-mean(log_alpha (log pi + target_entropy))` and its
/// derivative in `log_alpha`.
pub fn alpha_loss_grad(log_alpha: f64, logp: &Array1<f64>, target_entropy: f64) -> (f64, f64) {
    let m = logp.mapv(|lp| lp + target_entropy).mean().unwrap_or(0.0);
    (-log_alpha * m, -m)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossDiagnostics {
    pub critic1: f64,
    pub critic2: f64,
    pub actor: f64,
    pub alpha_loss: f64,
    pub alpha: f64,
}

fn apply(net: &mut DenseNet, grads: &NetGrads, state: &mut AdamState, cfg: &AdamConfig) {
    let g = grads.slices();
    adam_step(&mut net.param_slices_mut(), &g, state, cfg);
}

/// One SAC gradient step on `batch`.
pub fn update<R: Rng + ?Sized>(
    bundle: &mut NetworkBundle,
    batch: &Batch,
    cfg: &SacConfig,
    rng: &mut R,
) -> Result<LossDiagnostics> {
    if batch.is_empty() {
        return Err(SkyError::Contract("empty training batch".into()));
    }
    let adam = AdamConfig::with_lr(cfg.lr);
    let n = batch.len();
    let da = bundle.action_dim;

    let target_noise = standard_noise(n, da, rng);
    let y = critic_targets(bundle, batch, &target_noise, cfg.gamma);
    let (l1, g1) = critic_loss_grad(&bundle.critic1, batch.states.view(), batch.actions.view(), &y);
    let (l2, g2) = critic_loss_grad(&bundle.critic2, batch.states.view(), batch.actions.view(), &y);

    let actor_noise = standard_noise(n, da, rng);
    let alpha = bundle.alpha();
    let (la, ga, logp) = actor_loss_grad(
        &bundle.actor,
        &bundle.critic1,
        &bundle.critic2,
        batch.states.view(),
        &actor_noise,
        alpha,
    );
    let (lt, gt) = alpha_loss_grad(bundle.log_alpha, &logp, cfg.target_entropy);

    for (name, v) in [("critic1", l1), ("critic2", l2), ("actor", la), ("temperature", lt)] {
        if !v.is_finite() {
            let r_min = batch.rewards.iter().copied().fold(f64::INFINITY, f64::min);
            let r_max = batch.rewards.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            return Err(SkyError::Diverged(format!(
                "{name} loss is {v}; batch of {n} with rewards in [{r_min}, {r_max}], alpha {alpha}"
            )));
        }
    }

    apply(&mut bundle.critic1, &g1, &mut bundle.critic1_opt, &adam);
    apply(&mut bundle.critic2, &g2, &mut bundle.critic2_opt, &adam);
    apply(&mut bundle.actor, &ga, &mut bundle.actor_opt, &adam);
    let mut la_param = [bundle.log_alpha];
    adam_step(&mut [&mut la_param[..]], &[&[gt]], &mut bundle.alpha_opt, &adam);
    bundle.log_alpha = la_param[0];

    bundle.target1.polyak_from(&bundle.critic1, cfg.tau);
    bundle.target2.polyak_from(&bundle.critic2, cfg.tau);

    Ok(LossDiagnostics {
        critic1: l1,
        critic2: l2,
        actor: la,
        alpha_loss: lt,
        alpha: bundle.alpha(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_bundle(seed: u64) -> NetworkBundle {
        NetworkBundle::new(6, 3, &[8, 8], &mut ChaCha8Rng::seed_from_u64(seed))
    }

    fn random_batch(n: usize, rng: &mut ChaCha8Rng, done: bool) -> Batch {
        let items: Vec<Experience> = (0..n)
            .map(|_| Experience {
                state: (0..6).map(|_| rng.random_range(-1.0..1.0)).collect(),
                action: (0..3).map(|_| rng.random_range(-0.99..0.99)).collect(),
                reward: rng.random_range(-1.0..1.0),
                next_state: (0..6).map(|_| rng.random_range(-1.0..1.0)).collect(),
                done,
            })
            .collect();
        let refs: Vec<&Experience> = items.iter().collect();
        Batch::from_experiences(&refs)
    }

    #[test]
    fn deterministic_zero_mean_gives_zero_action() {
        let mut b = small_bundle(0);
        for l in &mut b.actor.layers {
            l.weight.fill(0.0);
            l.bias.fill(0.0);
        }
        let (a, lp) = sample_action(&b, &[0.1; 6], &mut ChaCha8Rng::seed_from_u64(1), true).unwrap();
        assert_eq!(a, vec![0.0; 3]);
        // log_std sits at the middle of its range; no squash correction at u = 0
        let ls = 0.5 * (LOG_STD_MIN + LOG_STD_MAX);
        assert_relative_eq!(lp, 3.0 * (-ls - HALF_LN_2PI - (1.0 + SQUASH_EPS).ln()), epsilon = 1e-12);
    }

    #[test]
    fn log_prob_stays_finite_near_saturation() {
        let mean = Array2::from_elem((1, 1), 0.0);
        let log_std = Array2::from_elem((1, 1), 0.0);
        for u in [5.0, 8.0, 9.0, 20.0, 400.0] {
            let (a, lp) = squashed_sample(&mean, &log_std, &Array2::from_elem((1, 1), u));
            assert!(lp[0].is_finite(), "u = {u}, a = {}", a[[0, 0]]);
        }
    }

    #[test]
    fn gamma_zero_terminal_targets_are_rewards() {
        let b = small_bundle(1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let batch = random_batch(16, &mut rng, true);
        let y = critic_targets(&b, &batch, &standard_noise(16, 3, &mut rng), 0.0);
        assert_eq!(y, batch.rewards);
        let y = critic_targets(&b, &batch, &standard_noise(16, 3, &mut rng), 0.99);
        assert_eq!(y, batch.rewards);
    }

    #[test]
    fn tau_one_copies_critics() {
        let mut b = small_bundle(3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let batch = random_batch(16, &mut rng, false);
        let cfg = SacConfig { gamma: 0.9, tau: 1.0, lr: 1e-3, target_entropy: -3.0 };
        update(&mut b, &batch, &cfg, &mut rng).unwrap();
        assert_eq!(b.target1, b.critic1);
        assert_eq!(b.target2, b.critic2);
    }

    #[test]
    fn polyak_contracts_towards_frozen_critic() {
        let mut b = small_bundle(5);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        b.target1 = DenseNet::new(&b.critic1.sizes(), Activation::Identity, &mut rng);
        let dist = |a: &DenseNet, c: &DenseNet| {
            a.params_flat().iter().zip(c.params_flat()).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
        };
        let before = dist(&b.target1, &b.critic1);
        let critic = b.critic1.clone();
        b.target1.polyak_from(&critic, 0.1);
        assert!(dist(&b.target1, &critic) <= 0.9 * before + 1e-12);
    }

    #[test]
    fn critic_overfits_a_frozen_batch() {
        let mut b = small_bundle(7);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let batch = random_batch(32, &mut rng, false);
        let cfg = SacConfig { gamma: 0.9, tau: 0.005, lr: 3e-3, target_entropy: -3.0 };
        let first = update(&mut b, &batch, &cfg, &mut rng).unwrap().critic1;
        let mut last = first;
        for _ in 0..100 {
            last = update(&mut b, &batch, &cfg, &mut rng).unwrap().critic1;
        }
        assert!(last < 0.5 * first, "critic loss {first} -> {last}");
    }

    #[test]
    fn alpha_stays_positive() {
        let mut b = small_bundle(9);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let batch = random_batch(16, &mut rng, false);
        let cfg = SacConfig { gamma: 0.9, tau: 0.005, lr: 0.05, target_entropy: 50.0 };
        for _ in 0..200 {
            let d = update(&mut b, &batch, &cfg, &mut rng).unwrap();
            assert!(d.alpha > 0.0);
        }
        assert!(b.is_finite());
    }
}
