//! NOMA SIC rates, eavesdropping rates and secure energy efficiency.
//!
//! Users are decoded by successive interference cancellation in order of
//! increasing combined-channel gain: the weakest user's signal is decoded
//! first, by everyone, with every other user's signal still present. A user
//! decodes its own signal after removing all weaker users, so the only
//! residual interference comes from stronger users. Rates are spectral
//! efficiencies in bits/s/Hz.

use serde::{Deserialize, Serialize};

use crate::channel::{ChannelSet, Node};
use crate::error::{Result, SkyError};
use crate::ris::{amplified_noise_at, combined_channel, jamming_power_at, EffectiveRis};

/// Per-slot received quantities. Vectors named per node are node-indexed
/// (Eve at 0); `powers` is user-indexed.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkBudget {
    pub combined_gain: Vec<f64>,
    pub jam: Vec<f64>,
    pub amp_noise: Vec<f64>,
    pub sigma0_sq: f64,
    pub powers: Vec<f64>,
}

impl LinkBudget {
    pub fn from_channels(
        channels: &ChannelSet,
        eff: &EffectiveRis,
        powers: &[f64],
        sigma0_sq: f64,
        sigma1_sq: f64,
    ) -> Self {
        let total: f64 = powers.iter().sum();
        let nodes: Vec<Node> = Node::all(channels.users()).collect();
        Self {
            combined_gain: nodes
                .iter()
                .map(|&g| combined_channel(channels, eff, g).norm_sqr())
                .collect(),
            jam: nodes
                .iter()
                .map(|&g| jamming_power_at(channels, eff, g, total))
                .collect(),
            amp_noise: nodes
                .iter()
                .map(|&g| amplified_noise_at(channels, eff, g, sigma1_sq))
                .collect(),
            sigma0_sq,
            powers: powers.to_vec(),
        }
    }

    pub fn users(&self) -> usize {
        self.powers.len()
    }

    pub fn user_gains(&self) -> &[f64] {
        &self.combined_gain[1..]
    }

    /// Jamming, amplified RIS noise and receiver noise at `node`.
    pub fn noise_floor(&self, node: Node) -> f64 {
        let g = node.index();
        self.jam[g] + self.amp_noise[g] + self.sigma0_sq
    }

    pub fn is_valid(&self) -> bool {
        let ok = |v: &f64| v.is_finite() && *v >= 0.0;
        self.combined_gain.iter().all(ok)
            && self.jam.iter().all(ok)
            && self.amp_noise.iter().all(ok)
            && self.powers.iter().all(ok)
            && ok(&self.sigma0_sq)
    }
}

/// Users sorted by gain, strongest first; ties keep ascending user index.
pub fn decoding_order(gains: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..gains.len()).collect();
    order.sort_by(|&a, &b| gains[b].total_cmp(&gains[a]).then(a.cmp(&b)));
    order
}

fn position(order: &[usize], user: usize) -> Result<usize> {
    order
        .iter()
        .position(|&u| u == user)
        .ok_or_else(|| SkyError::Input(format!("user {user} missing from decoding order")))
}

/// SINR at user `decoder` when decoding user `target`'s signal.
///
/// Only defined when `decoder` is at least as strong as `target`, i.e. not
/// after it in the strongest-first `order`. Users stronger than `target`
/// have not been cancelled yet and interfere.
pub fn sinr(decoder: usize, target: usize, budget: &LinkBudget, order: &[usize]) -> Result<f64> {
    let pos_decoder = position(order, decoder)?;
    let pos_target = position(order, target)?;
    if pos_decoder > pos_target {
        return Err(SkyError::Contract(format!(
            "user {decoder} is weaker than user {target} and cannot decode it"
        )));
    }
    let gain = budget.combined_gain[Node::User(decoder).index()];
    let interference: f64 = order[..pos_target]
        .iter()
        .map(|&l| budget.powers[l] * gain)
        .sum();
    Ok(gain * budget.powers[target]
        / (interference + budget.noise_floor(Node::User(decoder))))
}

/// Achievable rate of user `j`: the worst SINR over every user that has to
/// decode its signal (itself and all stronger users).
pub fn user_rate(j: usize, budget: &LinkBudget, order: &[usize]) -> Result<f64> {
    let pos_j = position(order, j)?;
    let mut worst = f64::INFINITY;
    for &decoder in &order[..=pos_j] {
        worst = worst.min(sinr(decoder, j, budget, order)?);
    }
    Ok((1.0 + worst).log2())
}

/// Worst-case eavesdropping rate on user `j`: Eve cancels all inter-user
/// interference and is limited only by jamming and noise.
pub fn eve_rate(j: usize, budget: &LinkBudget) -> f64 {
    let snr = budget.combined_gain[Node::Eve.index()] * budget.powers[j]
        / budget.noise_floor(Node::Eve);
    (1.0 + snr).log2()
}

/// User and eavesdropping rates under NOMA with gain-ordered SIC.
pub fn noma_rates(budget: &LinkBudget) -> Result<(Vec<f64>, Vec<f64>)> {
    let order = decoding_order(budget.user_gains());
    let users = (0..budget.users())
        .map(|j| user_rate(j, budget, &order))
        .collect::<Result<Vec<_>>>()?;
    let eve = (0..budget.users()).map(|j| eve_rate(j, budget)).collect();
    Ok((users, eve))
}

/// Orthogonal time sharing: each user gets a `1/K` slot fraction carrying the
/// whole transmit power. Eve listens in every fraction.
pub fn oma_rates(budget: &LinkBudget) -> (Vec<f64>, Vec<f64>) {
    let k = budget.users() as f64;
    let total: f64 = budget.powers.iter().sum();
    let eve_snr = budget.combined_gain[Node::Eve.index()] * total / budget.noise_floor(Node::Eve);
    let users = (0..budget.users())
        .map(|j| {
            let node = Node::User(j);
            let snr = budget.combined_gain[node.index()] * total / budget.noise_floor(node);
            (1.0 + snr).log2() / k
        })
        .collect();
    let eve = vec![(1.0 + eve_snr).log2() / k; budget.users()];
    (users, eve)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub user_rates: Vec<f64>,
    pub eve_rates: Vec<f64>,
    pub secrecy_sum: f64,
    pub see: f64,
    pub p_sum: f64,
    pub p_ris: f64,
    pub p_uav: f64,
}

impl RateReport {
    pub fn secrecy_rates(&self) -> impl Iterator<Item = f64> + '_ {
        self.user_rates
            .iter()
            .zip(&self.eve_rates)
            .map(|(r, e)| (r - e).max(0.0))
    }
}

/// Secrecy sum rate over RIS plus propulsion power.
pub fn see(user_rates: &[f64], eve_rates: &[f64], p_ris: f64, p_uav: f64) -> Result<RateReport> {
    let p_sum = p_ris + p_uav;
    if !(p_sum > 0.0) {
        return Err(SkyError::Domain(format!(
            "total power must be positive, got {p_sum}"
        )));
    }
    if user_rates.len() != eve_rates.len() {
        return Err(SkyError::Input("rate vectors differ in length".into()));
    }
    let secrecy_sum = user_rates
        .iter()
        .zip(eve_rates)
        .map(|(r, e)| (r - e).max(0.0))
        .sum::<f64>();
    Ok(RateReport {
        user_rates: user_rates.to_vec(),
        eve_rates: eve_rates.to_vec(),
        secrecy_sum,
        see: secrecy_sum / p_sum,
        p_sum,
        p_ris,
        p_uav,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn budget(gains: &[f64], powers: &[f64], sigma0: f64) -> LinkBudget {
        // gains are node-indexed: Eve first
        LinkBudget {
            combined_gain: gains.to_vec(),
            jam: vec![0.0; gains.len()],
            amp_noise: vec![0.0; gains.len()],
            sigma0_sq: sigma0,
            powers: powers.to_vec(),
        }
    }

    #[test]
    fn order_examples() {
        assert_eq!(decoding_order(&[0.2, 0.9]), vec![1, 0]);
        assert_eq!(decoding_order(&[0.5, 0.5]), vec![0, 1]);
        assert_eq!(decoding_order(&[0.1]), vec![0]);
    }

    #[test]
    fn single_user_sinr_is_snr() {
        let b = budget(&[0.0, 3.0], &[2.0], 0.5);
        assert_relative_eq!(sinr(0, 0, &b, &[0]).unwrap(), 12.0);
    }

    #[test]
    fn weak_user_sees_strong_user_interference() {
        // user 2 strongest, so user 1's signal is decoded with user 2's power
        // still on the air: 2 / (1 * 1 + 1) = 1
        let b = budget(&[0.0, 1.0, 1.5], &[2.0, 1.0], 1.0);
        let order = decoding_order(b.user_gains());
        assert_eq!(order, vec![1, 0]);
        assert_relative_eq!(sinr(0, 0, &b, &order).unwrap(), 1.0);
        // the strongest user decodes its own signal interference-free
        assert_relative_eq!(sinr(1, 1, &b, &order).unwrap(), 1.5);
        assert!(matches!(sinr(0, 1, &b, &order), Err(SkyError::Contract(_))));
    }

    #[test]
    fn rate_examples() {
        let b = budget(&[0.0, 1.0], &[1.0], 1.0);
        assert_relative_eq!(user_rate(0, &b, &[0]).unwrap(), 1.0);
        let e = budget(&[1.0, 1.0], &[1.0], 1.0);
        assert_relative_eq!(eve_rate(0, &e), 1.0);
        let silent = budget(&[1.0, 1.0], &[0.0], 1.0);
        assert_eq!(eve_rate(0, &silent), 0.0);
    }

    #[test]
    fn user_rate_takes_worst_decoder() {
        let b = budget(&[0.0, 0.4, 0.9], &[0.7, 0.3], 0.2);
        let order = decoding_order(b.user_gains());
        let g_own = sinr(0, 0, &b, &order).unwrap();
        let g_strong = sinr(1, 0, &b, &order).unwrap();
        assert_relative_eq!(user_rate(0, &b, &order).unwrap(), (1.0 + g_own.min(g_strong)).log2());
        assert!(user_rate(0, &b, &order).unwrap() <= (1.0 + g_own).log2());
    }

    #[test]
    fn see_examples() {
        let r = see(&[3.0], &[1.0], 50.0, 150.0).unwrap();
        assert_eq!(r.secrecy_sum, 2.0);
        assert_relative_eq!(r.see, 0.01);
        let leaky = see(&[1.0, 0.5], &[2.0, 0.5], 1.0, 1.0).unwrap();
        assert_eq!(leaky.secrecy_sum, 0.0);
        assert_eq!(leaky.see, 0.0);
        let doubled = see(&[3.0], &[1.0], 100.0, 300.0).unwrap();
        assert_relative_eq!(doubled.see, r.see / 2.0);
        assert!(see(&[1.0], &[0.0], 0.0, 0.0).is_err());
    }

    #[test]
    fn eve_rate_decreases_with_jamming() {
        let mut b = budget(&[1e-3, 1.0], &[1.0], 1e-4);
        let mut last = f64::INFINITY;
        for jam in [0.0, 1e-5, 1e-3, 1.0, 1e3, 1e9] {
            b.jam[0] = jam;
            let r = eve_rate(0, &b);
            assert!(r <= last);
            last = r;
        }
        assert!(last < 1e-6);
    }

    proptest! {
        #[test]
        fn user_rate_monotone_in_powers(
            gains in proptest::collection::vec(0.01f64..10.0, 3..5),
            powers in proptest::collection::vec(0.0f64..1.0, 3..5),
            bump in 0.01f64..1.0,
        ) {
            let k = gains.len().min(powers.len()) - 1;
            let mut node_gains = vec![0.5];
            node_gains.extend_from_slice(&gains[..k]);
            let b = budget(&node_gains, &powers[..k], 0.1);
            let order = decoding_order(b.user_gains());
            for j in 0..k {
                let base = user_rate(j, &b, &order).unwrap();
                let mut own = b.clone();
                own.powers[j] += bump;
                prop_assert!(user_rate(j, &own, &order).unwrap() >= base - 1e-12);
                let pos = order.iter().position(|&u| u == j).unwrap();
                for &stronger in &order[..pos] {
                    let mut other = b.clone();
                    other.powers[stronger] += bump;
                    prop_assert!(user_rate(j, &other, &order).unwrap() <= base + 1e-12);
                }
            }
        }

        #[test]
        fn secrecy_never_negative(
            rates in proptest::collection::vec(0.0f64..10.0, 1..4),
            eves in proptest::collection::vec(0.0f64..10.0, 4),
            p in 1.0f64..500.0,
        ) {
            let r = see(&rates, &eves[..rates.len()], 0.0, p).unwrap();
            prop_assert!(r.secrecy_sum >= 0.0 && r.see >= 0.0);
            let expected: f64 = rates.iter().zip(&eves).map(|(a, b)| (a - b).max(0.0)).sum();
            prop_assert!((r.secrecy_sum - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn oma_single_user_matches_shannon() {
        let b = budget(&[0.2, 2.0], &[0.5], 0.25);
        let (u, e) = oma_rates(&b);
        assert_relative_eq!(u[0], (1.0f64 + 4.0).log2());
        assert_relative_eq!(e[0], (1.0f64 + 0.4).log2());
        let two = budget(&[0.2, 2.0, 1.0], &[0.25, 0.25], 0.25);
        let (u2, _) = oma_rates(&two);
        assert_relative_eq!(u2[0], (1.0f64 + 4.0).log2() / 2.0);
    }
}
