//! RIS element scheduling, channel-alignment phases, amplification and the
//! reflect/jam split of the effective RIS diagonal.

use num_complex::Complex64;

use crate::channel::{wrap_phase, ChannelSet, Complex, Node};
use crate::error::{Result, SkyError};

/// Which ground node each RIS element serves.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RisAssignment {
    pub assign: Vec<Node>,
}

impl RisAssignment {
    pub fn uniform(elements: usize, node: Node) -> Self {
        Self {
            assign: vec![node; elements],
        }
    }

    pub fn len(&self) -> usize {
        self.assign.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assign.is_empty()
    }

    pub fn count(&self, node: Node) -> usize {
        self.assign.iter().filter(|&&n| n == node).count()
    }
}

/// Per-node alignment phases, `theta[node_index][element]` in `[0, 2π)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseBook {
    pub theta: Vec<Vec<f64>>,
}

impl PhaseBook {
    pub fn phase(&self, node: Node, element: usize) -> f64 {
        self.theta[node.index()][element]
    }
}

/// Power-domain amplification factors; the RIS applies `sqrt(beta)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AmpVector {
    pub beta: Vec<f64>,
}

impl AmpVector {
    pub fn uniform(elements: usize, beta: f64) -> Self {
        Self {
            beta: vec![beta; elements],
        }
    }
}

/// Effective RIS diagonals: `total = reflect + jam` with disjoint supports.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveRis {
    pub theta_total: Vec<Complex>,
    pub theta_reflect: Vec<Complex>,
    pub theta_jam: Vec<Complex>,
}

impl EffectiveRis {
    pub fn zeros(elements: usize) -> Self {
        let z = vec![Complex::new(0.0, 0.0); elements];
        Self {
            theta_total: z.clone(),
            theta_reflect: z.clone(),
            theta_jam: z,
        }
    }
}

fn arg_or_zero(h: Complex) -> f64 {
    if h.norm_sqr() == 0.0 {
        0.0
    } else {
        h.arg()
    }
}

/// Closed-form alignment: each element's phase makes its cascaded path add
/// in phase with the node's direct path. Computed for every node, Eve
/// included (Eve-assigned elements steer jamming towards Eve).
pub fn align_phases(channels: &ChannelSet) -> PhaseBook {
    let theta = (0..channels.nodes())
        .map(|g| {
            let direct = arg_or_zero(channels.h_bg[g]);
            channels.h_rg[g]
                .iter()
                .zip(&channels.h_br)
                .map(|(&rg, &br)| wrap_phase(direct - arg_or_zero(br) - arg_or_zero(rg)))
                .collect()
        })
        .collect();
    PhaseBook { theta }
}

/// Lower and upper bound of the raw-action interval of 1-based node index
/// `g_prime` (1 = Eve, k + 1 = user k).
pub fn scheduling_interval(g_prime: usize, users: usize) -> (f64, f64) {
    let k = users as f64;
    let g = g_prime as f64;
    ((2.0 * g - k - 3.0) / (k + 1.0), (2.0 * g - k - 1.0) / (k + 1.0))
}

fn schedule_one(raw: f64, users: usize) -> Node {
    (1..=users + 1)
        .find(|&g| {
            let (lo, hi) = scheduling_interval(g, users);
            lo <= raw && raw < hi
        })
        // only raw == 1 falls through every half-open interval
        .map_or(Node::User(users - 1), |g| Node::from_index(g - 1))
}

/// Maps raw actor outputs in `[-1, 1]` onto node assignments by splitting
/// the range into `K + 1` equal intervals, Eve's first.
pub fn map_scheduling(raw: &[f64], users: usize) -> Result<RisAssignment> {
    if users == 0 {
        return Err(SkyError::Input("need at least one user".into()));
    }
    if let Some(bad) = raw.iter().find(|r| !(-1.0..=1.0).contains(*r)) {
        return Err(SkyError::Input(format!(
            "scheduling entry {bad} outside [-1, 1]"
        )));
    }
    Ok(RisAssignment {
        assign: raw.iter().map(|&r| schedule_one(r, users)).collect(),
    })
}

pub fn compose_theta(assign: &RisAssignment, phases: &PhaseBook, amps: &AmpVector) -> EffectiveRis {
    let m = assign.len();
    debug_assert_eq!(amps.beta.len(), m);
    let mut eff = EffectiveRis::zeros(m);
    for (i, &node) in assign.assign.iter().enumerate() {
        let v = Complex64::from_polar(amps.beta[i].sqrt(), phases.phase(node, i));
        match node {
            Node::Eve => eff.theta_jam[i] = v,
            Node::User(_) => eff.theta_reflect[i] = v,
        }
        eff.theta_total[i] = eff.theta_reflect[i] + eff.theta_jam[i];
    }
    eff
}

fn cascade(rg: &[Complex], diag: &[Complex], br: &[Complex]) -> Complex {
    rg.iter()
        .zip(diag)
        .zip(br)
        .map(|((&r, &t), &b)| r * t * b)
        .sum()
}

/// Reflected plus direct channel seen by `node`.
pub fn combined_channel(channels: &ChannelSet, eff: &EffectiveRis, node: Node) -> Complex {
    cascade(channels.rg(node), &eff.theta_reflect, &channels.h_br) + channels.bg(node)
}

/// Received power of the RIS-generated jamming at `node`.
pub fn jamming_power_at(
    channels: &ChannelSet,
    eff: &EffectiveRis,
    node: Node,
    total_tx_power: f64,
) -> f64 {
    cascade(channels.rg(node), &eff.theta_jam, &channels.h_br).norm_sqr() * total_tx_power
}

/// Amplified RIS thermal noise received at `node`.
pub fn amplified_noise_at(
    channels: &ChannelSet,
    eff: &EffectiveRis,
    node: Node,
    sigma1_sq: f64,
) -> f64 {
    let gain: f64 = channels
        .rg(node)
        .iter()
        .zip(&eff.theta_total)
        .map(|(&r, &t)| (r * t).norm_sqr())
        .sum();
    sigma1_sq * gain
}

/// Output power drawn by the active RIS.
pub fn ris_power(channels: &ChannelSet, eff: &EffectiveRis, powers: &[f64], sigma1_sq: f64) -> f64 {
    let tx: f64 = powers.iter().sum();
    let (signal, noise) = eff
        .theta_total
        .iter()
        .zip(&channels.h_br)
        .fold((0.0, 0.0), |(s, n), (&t, &b)| {
            (s + (t * b).norm_sqr(), n + t.norm_sqr())
        });
    tx * signal + sigma1_sq * noise
}

/// Scales every factor by `p_r_max / p_ris` when the RIS exceeds its budget.
/// RIS power is linear in beta, so the rescaled surface draws exactly
/// `p_r_max`.
pub fn rescale_beta(amps: &AmpVector, p_ris: f64, p_r_max: f64) -> AmpVector {
    if p_ris <= p_r_max {
        return amps.clone();
    }
    let factor = p_r_max / p_ris;
    AmpVector {
        beta: amps.beta.iter().map(|b| b * factor).collect(),
    }
}
