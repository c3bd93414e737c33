//! Geometry, large-scale path loss and per-slot channel generation.
//!
//! The BS→RIS and RIS→node links are pure line-of-sight: a path-loss
//! amplitude times the unit-modulus response of a half-wavelength uniform
//! linear array lying along the x-axis. The direct BS→node links are
//! Rayleigh (circularly-symmetric complex Gaussian, unit variance), redrawn
//! on every call to [`build_channels`].

use std::f64::consts::{FRAC_1_SQRT_2, PI, TAU};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SkyError};

pub type Complex = Complex64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position3D {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Position3D {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn distance(&self, other: &Position3D) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        let dz = self.z - other.z;
        (dx * dx + dy * dy + dz * dz).sqrt()
    }

    pub fn is_valid(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite() && self.z >= 0.0
    }
}

impl From<[f64; 3]> for Position3D {
    fn from(p: [f64; 3]) -> Self {
        Self::new(p[0], p[1], p[2])
    }
}

/// A ground node: the eavesdropper or one of the `K` legitimate users.
///
/// Users are zero-based internally; `User(0)` is "user 1" in reports.
/// Node-indexed vectors put Eve at index 0 and `User(k)` at `k + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Node {
    Eve,
    User(usize),
}

impl Node {
    pub fn index(self) -> usize {
        match self {
            Node::Eve => 0,
            Node::User(k) => k + 1,
        }
    }

    pub fn from_index(idx: usize) -> Node {
        if idx == 0 {
            Node::Eve
        } else {
            Node::User(idx - 1)
        }
    }

    /// All `K + 1` nodes in index order.
    pub fn all(users: usize) -> impl Iterator<Item = Node> {
        (0..=users).map(Node::from_index)
    }
}

impl std::fmt::Display for Node {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Node::Eve => write!(f, "eve"),
            Node::User(k) => write!(f, "user{}", k + 1),
        }
    }
}

/// Path-loss constants shared by every link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathLoss {
    pub h0: f64,
    pub kappa_br: f64,
    pub kappa_rg: f64,
    pub kappa_bg: f64,
}

/// Power-domain large-scale gain `h0 * d^-kappa`.
pub fn path_loss_gain(distance: f64, exponent: f64, h0: f64) -> Result<f64> {
    if !(distance > 0.0) || !distance.is_finite() {
        return Err(SkyError::Domain(format!(
            "path loss needs a positive distance, got {distance}"
        )));
    }
    if !(exponent >= 0.0) || !(h0 > 0.0) {
        return Err(SkyError::Domain(format!(
            "path loss needs exponent >= 0 and h0 > 0, got {exponent} and {h0}"
        )));
    }
    Ok(h0 * distance.powf(-exponent))
}

/// Phase of element `element` of the x-axis ULA for a wave leaving `tx`
/// towards `rx`, wrapped into `[0, 2π)`.
pub fn los_phase(tx: &Position3D, rx: &Position3D, element: usize) -> Result<f64> {
    let d = tx.distance(rx);
    if !(d > 0.0) {
        return Err(SkyError::Domain(
            "line-of-sight phase undefined for coincident positions".into(),
        ));
    }
    let cos_aod = (rx.x - tx.x) / d;
    Ok(wrap_phase(PI * element as f64 * cos_aod))
}

/// Wraps an angle into `[0, 2π)`.
pub fn wrap_phase(angle: f64) -> f64 {
    let w = angle.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// One draw of the unit-variance NLoS coefficient.
pub fn sample_nlos<R: Rng + ?Sized>(rng: &mut R) -> Complex {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex::new(re * FRAC_1_SQRT_2, im * FRAC_1_SQRT_2)
}

/// Channel coefficients for one time slot.
///
/// `h_rg` and `h_bg` are node-indexed (see [`Node::index`]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSet {
    pub h_br: Vec<Complex>,
    pub h_rg: Vec<Vec<Complex>>,
    pub h_bg: Vec<Complex>,
}

impl ChannelSet {
    pub fn elements(&self) -> usize {
        self.h_br.len()
    }

    pub fn nodes(&self) -> usize {
        self.h_bg.len()
    }

    pub fn users(&self) -> usize {
        self.nodes() - 1
    }

    pub fn rg(&self, node: Node) -> &[Complex] {
        &self.h_rg[node.index()]
    }

    pub fn bg(&self, node: Node) -> Complex {
        self.h_bg[node.index()]
    }
}

fn los_vector(
    tx: &Position3D,
    rx: &Position3D,
    elements: usize,
    amplitude: f64,
) -> Result<Vec<Complex>> {
    (0..elements)
        .map(|m| los_phase(tx, rx, m).map(|phi| Complex::from_polar(amplitude, phi)))
        .collect()
}

/// Builds every link for a UAV at `uav`. `nodes` is node-indexed (Eve first).
///
/// The NLoS draws consume the stream in node order and do not depend on the
/// positions, so two calls with equal stream state see identical fading.
pub fn build_channels<R: Rng + ?Sized>(
    uav: &Position3D,
    bs: &Position3D,
    nodes: &[Position3D],
    elements: usize,
    loss: &PathLoss,
    rng: &mut R,
) -> Result<ChannelSet> {
    if elements == 0 {
        return Err(SkyError::Input("RIS needs at least one element".into()));
    }
    if nodes.len() < 2 {
        return Err(SkyError::Input(
            "need an eavesdropper and at least one user".into(),
        ));
    }
    if let Some(bad) = std::iter::once(uav)
        .chain(std::iter::once(bs))
        .chain(nodes.iter())
        .find(|p| !p.is_valid())
    {
        return Err(SkyError::Input(format!("invalid position {bad:?}")));
    }

    let br_amp = path_loss_gain(bs.distance(uav), loss.kappa_br, loss.h0)?.sqrt();
    let h_br = los_vector(bs, uav, elements, br_amp)?;

    let mut h_rg = Vec::with_capacity(nodes.len());
    let mut h_bg = Vec::with_capacity(nodes.len());
    for node in nodes {
        let rg_amp = path_loss_gain(uav.distance(node), loss.kappa_rg, loss.h0)?.sqrt();
        h_rg.push(los_vector(uav, node, elements, rg_amp)?);
        let bg_amp = path_loss_gain(bs.distance(node), loss.kappa_bg, loss.h0)?.sqrt();
        h_bg.push(sample_nlos(rng) * bg_amp);
    }

    Ok(ChannelSet { h_br, h_rg, h_bg })
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * watts.log10() + 30.0
}
