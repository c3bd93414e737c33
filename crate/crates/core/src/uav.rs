//! Rotary-wing propulsion power and fixed-altitude horizontal motion.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::channel::Position3D;
use crate::error::{Result, SkyError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropulsionParams {
    /// Blade profile power in hover (W).
    pub p0: f64,
    /// Induced power in hover (W).
    pub p1: f64,
    /// Rotor blade tip speed (m/s).
    pub u_tip: f64,
    /// Mean rotor induced velocity in hover (m/s).
    pub v0: f64,
    /// Fuselage drag ratio.
    pub d0: f64,
    /// Rotor solidity.
    pub solidity: f64,
    /// Air density (kg/m^3).
    pub rho: f64,
    /// Rotor disk area (m^2).
    pub rotor_area: f64,
}

impl Default for PropulsionParams {
    fn default() -> Self {
        Self {
            p0: 79.86,
            p1: 88.63,
            u_tip: 120.0,
            v0: 4.3,
            d0: 0.6,
            solidity: 0.05,
            rho: 1.225,
            rotor_area: 0.503,
        }
    }
}

impl PropulsionParams {
    pub fn is_valid(&self) -> bool {
        [
            self.p0,
            self.p1,
            self.u_tip,
            self.v0,
            self.d0,
            self.solidity,
            self.rho,
            self.rotor_area,
        ]
        .iter()
        .all(|v| v.is_finite() && *v > 0.0)
    }

    pub fn blade_profile_power(&self, v: f64) -> f64 {
        self.p0 * (1.0 + 3.0 * v * v / (self.u_tip * self.u_tip))
    }

    pub fn parasite_power(&self, v: f64) -> f64 {
        0.5 * self.d0 * self.rho * self.solidity * self.rotor_area * v.powi(3)
    }

    pub fn induced_power(&self, v: f64) -> f64 {
        let r = v * v / (2.0 * self.v0 * self.v0);
        self.p1 * ((1.0 + r * r).sqrt() - r).sqrt()
    }

    /// Instantaneous propulsion power at horizontal speed `v`.
    pub fn power(&self, v: f64) -> f64 {
        self.blade_profile_power(v) + self.parasite_power(v) + self.induced_power(v)
    }
}

/// Flight energy over one slot of `delta` seconds at speed `v`.
pub fn propulsion_energy(v: f64, delta: f64, params: &PropulsionParams) -> Result<f64> {
    if !(v >= 0.0) || !v.is_finite() {
        return Err(SkyError::Domain(format!("speed must be >= 0, got {v}")));
    }
    if !(delta > 0.0) {
        return Err(SkyError::Domain(format!("slot length must be > 0, got {delta}")));
    }
    Ok(delta * params.power(v))
}

/// Horizontal flight box at the UAV's fixed altitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlightBox {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl FlightBox {
    pub fn square(side: f64) -> Self {
        Self {
            x_min: 0.0,
            x_max: side,
            y_min: 0.0,
            y_max: side,
        }
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        (self.x_min..=self.x_max).contains(&x) && (self.y_min..=self.y_max).contains(&y)
    }

    pub fn side(&self) -> f64 {
        (self.x_max - self.x_min).max(self.y_max - self.y_min)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UavState {
    pub position: Position3D,
    pub last_velocity: f64,
}

impl UavState {
    pub fn hovering_at(position: Position3D) -> Self {
        Self {
            position,
            last_velocity: 0.0,
        }
    }
}

/// Moves the UAV `distance` metres along `heading`. Proposals leaving the
/// box are clamped onto it and flagged. The speed charged for the slot is
/// that of the proposed move.
pub fn step_position(
    state: &UavState,
    distance: f64,
    heading: f64,
    bounds: &FlightBox,
    max_distance: f64,
    delta: f64,
) -> Result<(UavState, bool)> {
    if !(0.0..=max_distance).contains(&distance) {
        return Err(SkyError::Input(format!(
            "flight distance {distance} outside [0, {max_distance}]"
        )));
    }
    if !heading.is_finite() {
        return Err(SkyError::Input("heading must be finite".into()));
    }
    let heading = heading.rem_euclid(TAU);
    let p = state.position;
    let x = p.x + distance * heading.cos();
    let y = p.y + distance * heading.sin();
    let oob = !bounds.contains(x, y);
    let next = Position3D::new(
        x.clamp(bounds.x_min, bounds.x_max),
        y.clamp(bounds.y_min, bounds.y_max),
        p.z,
    );
    Ok((
        UavState {
            position: next,
            last_velocity: distance / delta,
        },
        oob,
    ))
}

/// Normalization range of total power used by the reward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerBounds {
    pub p_min: f64,
    pub p_max: f64,
}

const BOUNDS_GRID: usize = 10_000;

/// Minimum and maximum propulsion power over `[0, v_max]`; the maximum also
/// carries the RIS budget `p_r_max`.
pub fn power_bounds(params: &PropulsionParams, v_max: f64, p_r_max: f64) -> Result<PowerBounds> {
    if !(v_max > 0.0) {
        return Err(SkyError::Domain(format!("v_max must be > 0, got {v_max}")));
    }
    let step = v_max / (BOUNDS_GRID - 1) as f64;
    let (mut arg_min, mut p_min, mut p_max) = (0usize, f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..BOUNDS_GRID {
        let p = params.power(i as f64 * step);
        if p < p_min {
            p_min = p;
            arg_min = i;
        }
        p_max = p_max.max(p);
    }

    // golden-section refinement inside the bracketing grid cells
    let mut lo = arg_min.saturating_sub(1) as f64 * step;
    let mut hi = ((arg_min + 1).min(BOUNDS_GRID - 1)) as f64 * step;
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..100 {
        let a = hi - phi * (hi - lo);
        let b = lo + phi * (hi - lo);
        if params.power(a) < params.power(b) {
            hi = b;
        } else {
            lo = a;
        }
    }
    p_min = p_min.min(params.power(0.5 * (lo + hi)));

    Ok(PowerBounds {
        p_min,
        p_max: p_max + p_r_max,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn hover_energy() {
        let p = PropulsionParams::default();
        assert_relative_eq!(propulsion_energy(0.0, 1.0, &p).unwrap(), 168.49, epsilon = 1e-9);
        assert_relative_eq!(propulsion_energy(0.0, 2.5, &p).unwrap(), 2.5 * 168.49, epsilon = 1e-9);
        assert!(propulsion_energy(-1.0, 1.0, &p).is_err());
        assert!(propulsion_energy(1.0, 0.0, &p).is_err());
    }

    #[test]
    fn energy_at_induced_velocity() {
        // 79.86 * (1 + 3 * 4.3^2 / 120^2) + 0.5 * 0.6 * 1.225 * 0.05 * 0.503 * 4.3^3
        //   + 88.63 * sqrt(sqrt(1.25) - 0.5) = 150.5787...
        let e = propulsion_energy(4.3, 1.0, &PropulsionParams::default()).unwrap();
        assert_relative_eq!(e, 150.6, max_relative = 0.01);
        assert_relative_eq!(e, 150.578_7, epsilon = 1e-3);
    }

    #[test]
    fn parasite_term_at_max_speed() {
        // 0.5 * 0.6 * 1.225 * 0.05 * 0.503 * 20^3 = 73.9410
        let p = PropulsionParams::default();
        assert_relative_eq!(p.parasite_power(20.0), 73.941_05, epsilon = 1e-4);
        let total = propulsion_energy(20.0, 1.0, &p).unwrap();
        let independent = 79.86 * (1.0 + 3.0 * 400.0 / 14_400.0)
            + 73.941_05
            + 88.63 * ((1.0 + (400.0f64 / 36.98).powi(2)).sqrt() - 400.0 / 36.98).sqrt();
        assert_relative_eq!(total, independent, max_relative = 1e-6);
    }

    #[test]
    fn per_term_monotonicity() {
        let p = PropulsionParams::default();
        let grid: Vec<f64> = (0..=400).map(|i| i as f64 * 0.05).collect();
        for w in grid.windows(2) {
            assert!(p.blade_profile_power(w[1]) > p.blade_profile_power(w[0]));
            assert!(p.parasite_power(w[1]) > p.parasite_power(w[0]));
            assert!(p.induced_power(w[1]) < p.induced_power(w[0]));
        }
    }

    #[test]
    fn step_examples() {
        let bounds = FlightBox::square(400.0);
        let s = UavState::hovering_at(Position3D::new(10.0, 390.0, 50.0));
        let (same, oob) = step_position(&s, 0.0, 1.0, &bounds, 20.0, 1.0).unwrap();
        assert_eq!(same.position, s.position);
        assert!(!oob);

        let (down, oob) =
            step_position(&s, 20.0, 3.0 * std::f64::consts::FRAC_PI_2, &bounds, 20.0, 1.0).unwrap();
        assert_relative_eq!(down.position.x, 10.0, epsilon = 1e-9);
        assert_relative_eq!(down.position.y, 370.0, epsilon = 1e-9);
        assert_eq!(down.last_velocity, 20.0);
        assert!(!oob);

        let edge = UavState::hovering_at(Position3D::new(395.0, 200.0, 50.0));
        let (clamped, oob) = step_position(&edge, 20.0, 0.0, &bounds, 20.0, 1.0).unwrap();
        assert_eq!(clamped.position, Position3D::new(400.0, 200.0, 50.0));
        assert!(oob);
        assert_eq!(clamped.last_velocity, 20.0);

        assert!(step_position(&s, 21.0, 0.0, &bounds, 20.0, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn steps_stay_in_bounds(x in 0.0f64..=400.0, y in 0.0f64..=400.0,
                                d in 0.0f64..=20.0, h in 0.0f64..std::f64::consts::TAU) {
            let bounds = FlightBox::square(400.0);
            let s = UavState::hovering_at(Position3D::new(x, y, 50.0));
            let (next, _) = step_position(&s, d, h, &bounds, 20.0, 1.0).unwrap();
            prop_assert!(bounds.contains(next.position.x, next.position.y));
            prop_assert!(next.position.distance(&s.position) <= 20.0 + 1e-9);
            prop_assert_eq!(next.position.z, 50.0);
        }
    }

    #[test]
    fn bounds_against_coarse_scan() {
        let p = PropulsionParams::default();
        let b = power_bounds(&p, 20.0, 1e-3).unwrap();
        assert!(b.p_min <= p.power(0.0));
        assert!(b.p_max >= b.p_min);
        let coarse = (0..=200)
            .map(|i| p.power(i as f64 * 0.1))
            .fold(f64::INFINITY, f64::min);
        assert_relative_eq!(b.p_min, coarse, max_relative = 5e-3);
        assert!(b.p_min <= coarse);
        let coarse_max = (0..=200)
            .map(|i| p.power(i as f64 * 0.1))
            .fold(f64::NEG_INFINITY, f64::max);
        assert_relative_eq!(b.p_max, coarse_max + 1e-3, max_relative = 1e-6);
    }
}
