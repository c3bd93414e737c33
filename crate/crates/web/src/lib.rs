//! Browser demo bindings: propulsion power curve, SEE heatmap over UAV
//! positions, and alignment gain under a phase error.
//!
//! Each export wraps a plain function so the numerics are testable natively.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use skymirror::channel::{build_channels, ChannelSet, Node, Position3D};
use skymirror::link::{noma_rates, oma_rates, see, LinkBudget};
use skymirror::ris::{align_phases, combined_channel, compose_theta, ris_power, rescale_beta, AmpVector, RisAssignment};
use skymirror::uav::{propulsion_energy, PropulsionParams};
use skymirror::SystemConfig;
use wasm_bindgen::prelude::*;

/// `[v_0, P(v_0), v_1, P(v_1), ...]` for `samples` speeds in `[0, v_max]`.
pub fn propulsion_curve(v_max: f64, samples: usize) -> Vec<f64> {
    let params = PropulsionParams::default();
    let n = samples.max(2);
    (0..n)
        .flat_map(|i| {
            let v = v_max * i as f64 / (n - 1) as f64;
            [v, params.power(v)]
        })
        .collect()
}

/// Elements `0..jam_count` jam Eve; the rest alternate between users.
fn split_assignment(elements: usize, users: usize, jam_fraction: f64) -> RisAssignment {
    let jam = ((jam_fraction.clamp(0.0, 1.0) * elements as f64).round() as usize).min(elements);
    RisAssignment {
        assign: (0..elements)
            .map(|m| if m < jam { Node::Eve } else { Node::User((m - jam) % users) })
            .collect(),
    }
}

fn slot_see(cfg: &SystemConfig, ch: &ChannelSet, assignment: &RisAssignment, oma: bool) -> f64 {
    let p = &cfg.physics;
    let k = cfg.users();
    let m = cfg.elements();
    let powers = vec![p.pb_max / k as f64; k];
    let phases = align_phases(ch);
    let mut amps = AmpVector::uniform(m, p.beta_max);
    let mut eff = compose_theta(assignment, &phases, &amps);
    let mut p_ris = ris_power(ch, &eff, &powers, p.sigma1_sq);
    if p_ris > p.pr_max {
        amps = rescale_beta(&amps, p_ris, p.pr_max);
        eff = compose_theta(assignment, &phases, &amps);
        p_ris = ris_power(ch, &eff, &powers, p.sigma1_sq);
    }
    let budget = LinkBudget::from_channels(ch, &eff, &powers, p.sigma0_sq, p.sigma1_sq);
    let rates = if oma { Ok(oma_rates(&budget)) } else { noma_rates(&budget) };
    let hover = propulsion_energy(0.0, cfg.scenario.delta, &p.propulsion).unwrap_or(f64::NAN);
    rates
        .and_then(|(u, e)| see(&u, &e, p_ris, hover))
        .map(|r| r.see)
        .unwrap_or(f64::NAN)
}

/// Row-major `grid x grid` SEE (bit/J) of a hovering UAV over the default
/// arena, with equal BS power split, aligned phases and a fixed fading draw
/// per cell. `y` grows with the row index.
pub fn see_heatmap(grid: usize, elements: usize, beta_max: f64, jam_fraction: f64, oma: bool, seed: u64) -> Vec<f64> {
    let mut cfg = SystemConfig::default();
    cfg.scenario.elements = elements.max(1);
    cfg.physics.beta_max = beta_max.max(0.0);
    let s = &cfg.scenario;
    let nodes = s.node_positions();
    let assignment = split_assignment(cfg.elements(), cfg.users(), jam_fraction);
    let n = grid.max(1);
    let mut out = Vec::with_capacity(n * n);
    for row in 0..n {
        for col in 0..n {
            let x = s.arena.x_min + (col as f64 + 0.5) / n as f64 * s.arena.side();
            let y = s.arena.y_min + (row as f64 + 0.5) / n as f64 * s.arena.side();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let value = build_channels(
                &Position3D::new(x, y, s.altitude),
                &s.bs_position(),
                &nodes,
                cfg.elements(),
                &cfg.physics.path_loss(),
                &mut rng,
            )
            .map(|ch| slot_see(&cfg, &ch, &assignment, oma))
            .unwrap_or(f64::NAN);
            out.push(value);
        }
    }
    out
}

/// `|h_1|^2` with every reflect phase rotated by `offset` radians, relative
/// to the aligned value, for a UAV hovering above the first user.
pub fn alignment_gain(offset: f64, elements: usize, beta: f64, seed: u64) -> f64 {
    let cfg = SystemConfig::default();
    let s = &cfg.scenario;
    let m = elements.max(1);
    let user = s.node_positions()[1];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let Ok(ch) = build_channels(
        &Position3D::new(user.x, user.y, s.altitude),
        &s.bs_position(),
        &s.node_positions(),
        m,
        &cfg.physics.path_loss(),
        &mut rng,
    ) else {
        return f64::NAN;
    };
    let assignment = RisAssignment::uniform(m, Node::User(0));
    let amps = AmpVector::uniform(m, beta);
    let mut phases = align_phases(&ch);
    let aligned = combined_channel(&ch, &compose_theta(&assignment, &phases, &amps), Node::User(0)).norm_sqr();
    for t in &mut phases.theta[Node::User(0).index()] {
        *t += offset;
    }
    let shifted = combined_channel(&ch, &compose_theta(&assignment, &phases, &amps), Node::User(0)).norm_sqr();
    shifted / aligned
}

#[wasm_bindgen(js_name = propulsionCurve)]
pub fn propulsion_curve_js(v_max: f64, samples: usize) -> Vec<f64> {
    propulsion_curve(v_max, samples)
}

#[wasm_bindgen(js_name = seeHeatmap)]
pub fn see_heatmap_js(grid: usize, elements: usize, beta_max: f64, jam_fraction: f64, oma: bool, seed: u32) -> Vec<f64> {
    see_heatmap(grid, elements, beta_max, jam_fraction, oma, seed as u64)
}

#[wasm_bindgen(js_name = alignmentGain)]
pub fn alignment_gain_js(offset: f64, elements: usize, beta: f64, seed: u32) -> f64 {
    alignment_gain(offset, elements, beta, seed as u64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn curve_starts_at_hover_power() {
        let c = propulsion_curve(30.0, 31);
        assert_eq!(c.len(), 62);
        assert_eq!(c[0], 0.0);
        assert!((c[1] - 168.49).abs() < 1e-9);
        assert_eq!(c[60], 30.0);
    }

    #[test]
    fn split_counts() {
        let a = split_assignment(10, 2, 0.3);
        assert_eq!(a.count(Node::Eve), 3);
        assert_eq!(a.count(Node::User(0)), 4);
        assert_eq!(a.count(Node::User(1)), 3);
        assert_eq!(split_assignment(4, 2, 2.0).count(Node::Eve), 4);
    }

    #[test]
    fn heatmap_is_finite_and_non_negative() {
        let h = see_heatmap(6, 4, 8.0, 0.25, false, 1);
        assert_eq!(h.len(), 36);
        assert!(h.iter().all(|v| v.is_finite() && *v >= 0.0));
        assert_eq!(h, see_heatmap(6, 4, 8.0, 0.25, false, 1));
    }

    #[test]
    fn phase_error_never_beats_alignment() {
        assert!((alignment_gain(0.0, 8, 4.0, 3) - 1.0).abs() < 1e-12);
        for k in 1..12 {
            assert!(alignment_gain(k as f64 * 0.5, 8, 4.0, 3) <= 1.0 + 1e-12);
        }
    }
}
