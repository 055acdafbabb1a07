//! Rabi lineshape with a narrowing factor and its analytic gradient.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units;

/// `P(δ) = A sin²((Ωτ/2)√(1+u²)) / (1+u²)` with `u = α(δ − δ0)/Ω`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineshapeParams {
    pub a: f64,
    #[serde(with = "units::freq")]
    pub omega_line: f64,
    #[serde(with = "units::duration")]
    pub tau: f64,
    pub alpha: f64,
    #[serde(with = "units::freq")]
    pub delta0: f64,
}

/// Parameter order used by gradients, masks and covariance matrices.
pub const PARAM_NAMES: [&str; 5] = ["a", "omega_line", "tau", "alpha", "delta0"];

impl LineshapeParams {
    pub fn new(a: f64, omega_line: f64, tau: f64, alpha: f64, delta0: f64) -> Result<Self> {
        let p = Self {
            a,
            omega_line,
            tau,
            alpha,
            delta0,
        };
        p.validate()?;
        Ok(p)
    }

    /// On-resonance π pulse at full contrast.
    pub fn pi_pulse(omega_line: f64, alpha: f64) -> Self {
        Self {
            a: 1.0,
            omega_line,
            tau: std::f64::consts::PI / omega_line,
            alpha,
            delta0: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.a) {
            return Err(Error::InvalidParameter(format!(
                "contrast {} outside [0, 1]",
                self.a
            )));
        }
        if !(self.omega_line > 0.0
            && self.alpha > 0.0
            && self.tau >= 0.0
            && self.delta0.is_finite())
        {
            return Err(Error::InvalidParameter(
                "lineshape needs omega_line > 0, alpha > 0, tau >= 0".into(),
            ));
        }
        Ok(())
    }

    pub fn to_array(&self) -> [f64; 5] {
        [self.a, self.omega_line, self.tau, self.alpha, self.delta0]
    }

    pub fn from_array(v: [f64; 5]) -> Self {
        Self {
            a: v[0],
            omega_line: v[1],
            tau: v[2],
            alpha: v[3],
            delta0: v[4],
        }
    }
}

pub fn lineshape(p: &LineshapeParams, delta: f64) -> f64 {
    let u = p.alpha * (delta - p.delta0) / p.omega_line;
    let s2 = 1.0 + u * u;
    let theta = 0.5 * p.omega_line * p.tau * s2.sqrt();
    p.a * theta.sin().powi(2) / s2
}

/// Value and gradient with respect to `(A, Ω, τ, α, δ0)`.
pub fn lineshape_grad(p: &LineshapeParams, delta: f64) -> (f64, [f64; 5]) {
    let d = delta - p.delta0;
    let u = p.alpha * d / p.omega_line;
    let s2 = 1.0 + u * u;
    let s = s2.sqrt();
    let theta = 0.5 * p.omega_line * p.tau * s;
    let (sin, cos) = theta.sin_cos();
    let shape = sin * sin / s2;
    let value = p.a * shape;

    // dP = A [sin2θ/s² dθ − 2 sin²θ/s³ ds], ds = (u/s) du
    let k_theta = p.a * 2.0 * sin * cos / s2;
    let k_s = -2.0 * p.a * sin * sin / (s2 * s);
    let ds_du = u / s;
    let dtheta_ds = 0.5 * p.omega_line * p.tau;
    let via_u = |du: f64| (k_theta * dtheta_ds + k_s) * ds_du * du;

    let g_omega = k_theta * 0.5 * p.tau * s + via_u(-u / p.omega_line);
    let g_tau = k_theta * 0.5 * p.omega_line * s;
    let g_alpha = via_u(d / p.omega_line);
    let g_delta0 = via_u(-p.alpha / p.omega_line);
    (value, [shape, g_omega, g_tau, g_alpha, g_delta0])
}

/// Derivative with respect to the probe detuning.
pub fn lineshape_slope(p: &LineshapeParams, delta: f64) -> f64 {
    -lineshape_grad(p, delta).1[4]
}

/// Which resonance a lineshape describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectrumKind {
    /// One spin scanned in its own detuning.
    Single,
    /// `↓↓ ↔ ↑↑` scanned in the common detuning.
    Even,
    /// `↓↑ ↔ ↑↓` scanned in the difference detuning.
    Odd,
    /// `↓…↓ ↔ ↑…↑` of `N` spins scanned in the common detuning.
    Register(usize),
}

impl SpectrumKind {
    pub fn n_correlated(self) -> usize {
        match self {
            SpectrumKind::Single => 1,
            SpectrumKind::Even | SpectrumKind::Odd => 2,
            SpectrumKind::Register(n) => n,
        }
    }
}

/// Lineshape Rabi frequency and narrowing factor of a model with coupling
/// `omega` (the off-diagonal element of the flipping block), against lab
/// detunings. Returns `(omega_line, alpha)`.
pub fn map_hamiltonian_to_lineshape(omega: f64, kind: SpectrumKind) -> (f64, f64) {
    (2.0 * omega, kind.n_correlated() as f64)
}
