//! Distance-based path loss with Rician small-scale fading.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::config::NetworkConfig;
use crate::rng::RngStream;

/// Reference distance for the path-loss law; shorter distances are clamped.
pub const REFERENCE_DISTANCE_M: f64 = 1.0;

/// Deterministic line-of-sight component (unit power).
pub const LOS_COMPONENT: Complex64 = Complex64 { re: 1.0, im: 0.0 };

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

pub fn distance(ue: Position, mbs: Position) -> f64 {
    (ue.x - mbs.x).hypot(ue.y - mbs.y)
}

/// `beta0 * d^-alpha`, with `d` clamped below at the 1 m reference distance.
pub fn large_scale_gain(dist: f64, beta0: f64, alpha: f64) -> f64 {
    beta0 * dist.max(REFERENCE_DISTANCE_M).powf(-alpha)
}

/// Rician fading coefficient with Rician factor `k`.
///
/// The scattered part is standard complex normal: real and imaginary parts
/// are independent N(0, 1/2), so `E|g~|^2 = 1`. `k = inf` yields the LOS
/// component exactly; `k = 0` is pure Rayleigh. Two normal draws are consumed
/// in every case so stream positions do not depend on `k`.
pub fn rician_sample(rng: &mut RngStream, k: f64) -> Complex64 {
    let re = rng.standard_normal();
    let im = rng.standard_normal();
    let scatter = Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2;
    let (los_w, nlos_w) = if k.is_infinite() {
        (1.0, 0.0)
    } else {
        ((k / (k + 1.0)).sqrt(), (1.0 / (k + 1.0)).sqrt())
    };
    LOS_COMPONENT * los_w + scatter * nlos_w
}

pub fn channel_gain(beta: f64, zeta: Complex64) -> Complex64 {
    zeta * beta.sqrt()
}

/// Channel gains of one iteration, row-major `n_ues x m_mbs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainMatrix {
    pub n_ues: usize,
    pub m_mbs: usize,
    pub step: usize,
    pub gains: Vec<Complex64>,
}

impl GainMatrix {
    pub fn get(&self, ue: usize, mbs: usize) -> Complex64 {
        self.gains[ue * self.m_mbs + mbs]
    }

    /// `|g|^2` for one link.
    pub fn power(&self, ue: usize, mbs: usize) -> f64 {
        self.get(ue, mbs).norm_sqr()
    }

    /// Builds a matrix from explicit real gains, mostly for fixtures.
    pub fn from_real(n_ues: usize, m_mbs: usize, values: &[f64]) -> Self {
        assert_eq!(values.len(), n_ues * m_mbs);
        Self {
            n_ues,
            m_mbs,
            step: 0,
            gains: values.iter().map(|&g| Complex64::new(g, 0.0)).collect(),
        }
    }
}

/// Fresh fading for every (UE, MBS) link; draws in row-major order.
pub fn gain_matrix(
    ue_positions: &[Position],
    mbs_positions: &[Position],
    cfg: &NetworkConfig,
    rng: &mut RngStream,
    step: usize,
) -> GainMatrix {
    let mut gains = Vec::with_capacity(ue_positions.len() * mbs_positions.len());
    for &ue in ue_positions {
        for &mbs in mbs_positions {
            let beta = large_scale_gain(distance(ue, mbs), cfg.beta0, cfg.pathloss_alpha);
            gains.push(channel_gain(beta, rician_sample(rng, cfg.rician_k)));
        }
    }
    GainMatrix {
        n_ues: ue_positions.len(),
        m_mbs: mbs_positions.len(),
        step,
        gains,
    }
}
