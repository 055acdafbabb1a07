//! The spin Hamiltonians: the two-spin Ising model with a transverse field,
//! its N-spin generalization and the single-spin Rabi generator.
//!
//! Parameters here are the literal operator coefficients in rad/s. Scans and
//! configuration files use lab detunings instead (laser minus transition
//! frequency); the σz coefficient is half the lab detuning, see
//! [`IsingParams::from_lab`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantum::{basis_index, embed, pauli, tensor, CMatrix, Operator, Pauli, EXACT_TOL};

/// Default memory guard for the N-spin builder (2¹⁰ × 2¹⁰ dense matrices).
pub const DEFAULT_MAX_SPINS: usize = 10;

/// Coefficients of `Ω σy⊗σy + δ₁(σz⊗I + I⊗σz) + δ₂(σz⊗I − I⊗σz)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IsingParams {
    pub omega: f64,
    pub delta1: f64,
    pub delta2: f64,
}

impl IsingParams {
    pub fn new(omega: f64, delta1: f64, delta2: f64) -> Result<Self> {
        if !(omega >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "coupling must be >= 0, got {omega}"
            )));
        }
        Ok(Self {
            omega,
            delta1,
            delta2,
        })
    }

    /// Builds the coefficients from lab detunings: `delta1_lab = ω_L − ω₀`
    /// (common) and `delta2_lab = (ω₀¹ − ω₀²)/2` (differential). Each spin's
    /// σz coefficient is half its detuning, so the block detuning `2δ` of
    /// either parity subspace equals the lab detuning.
    pub fn from_lab(omega: f64, delta1_lab: f64, delta2_lab: f64) -> Result<Self> {
        Self::new(omega, 0.5 * delta1_lab, 0.5 * delta2_lab)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CouplingAxis {
    #[default]
    X,
    Y,
}

/// Coefficients of `Ω (σ_axis)^⊗N + Σᵢ δᵢ σzⁱ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NSpinParams {
    pub omega: f64,
    pub deltas: Vec<f64>,
    pub axis: CouplingAxis,
}

impl NSpinParams {
    pub fn new(omega: f64, deltas: Vec<f64>, axis: CouplingAxis) -> Result<Self> {
        if deltas.len() < 2 {
            return Err(Error::InvalidParameter(format!(
                "need at least 2 spins, got {}",
                deltas.len()
            )));
        }
        if !(omega >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "coupling must be >= 0, got {omega}"
            )));
        }
        Ok(Self {
            omega,
            deltas,
            axis,
        })
    }

    pub fn uniform(omega: f64, delta: f64, n: usize, axis: CouplingAxis) -> Result<Self> {
        Self::new(omega, vec![delta; n], axis)
    }

    pub fn n(&self) -> usize {
        self.deltas.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Subspace {
    /// `{|↑↑⟩, |↓↓⟩}`
    Even,
    /// `{|↑↓⟩, |↓↑⟩}`
    Odd,
}

impl Subspace {
    /// Ordered basis labels of the block.
    pub fn labels(self) -> [&'static str; 2] {
        match self {
            Subspace::Even => ["uu", "dd"],
            Subspace::Odd => ["ud", "du"],
        }
    }

    pub fn of_label(label: &str) -> Result<Self> {
        match label {
            "uu" | "dd" => Ok(Subspace::Even),
            "ud" | "du" => Ok(Subspace::Odd),
            _ => Err(Error::InvalidLabel(label.to_owned())),
        }
    }
}

pub fn ising_two_spin(p: &IsingParams) -> Operator {
    let y = pauli(Pauli::Y);
    let yy = tensor(&[y.clone(), y]).expect("non-empty");
    let z = pauli(Pauli::Z);
    let z1 = embed(&z, 0, 2).expect("site in range");
    let z2 = embed(&z, 1, 2).expect("site in range");
    let common = &z1 + &z2;
    let diff = &z1 - &z2;
    &(&(&yy * p.omega) + &(&common * p.delta1)) + &(&diff * p.delta2)
}

pub fn correlated_n_spin(p: &NSpinParams) -> Result<Operator> {
    correlated_n_spin_with_limit(p, DEFAULT_MAX_SPINS)
}

pub fn correlated_n_spin_with_limit(p: &NSpinParams, max_spins: usize) -> Result<Operator> {
    let n = p.n();
    if n > max_spins {
        return Err(Error::TooManySpins { n, max: max_spins });
    }
    let axis = match p.axis {
        CouplingAxis::X => pauli(Pauli::X),
        CouplingAxis::Y => pauli(Pauli::Y),
    };
    let coupling = tensor(&vec![axis; n])?;
    let z = pauli(Pauli::Z);
    let mut h = &coupling * p.omega;
    for (i, &d) in p.deltas.iter().enumerate() {
        if d != 0.0 {
            h = &h + &(&embed(&z, i, n)? * d);
        }
    }
    Ok(h)
}

/// `Ω σy + δ σz`.
pub fn single_spin_rabi(omega: f64, delta: f64) -> Operator {
    &(&pauli(Pauli::Y) * omega) + &(&pauli(Pauli::Z) * delta)
}

/// Extracts the 2×2 parity block of a two-spin generator in the ordered basis
/// of [`Subspace::labels`]. Fails if the generator mixes the two blocks.
pub fn subspace_reduce(h: &Operator, which: Subspace) -> Result<Operator> {
    if h.dim() != 4 {
        return Err(Error::DimensionMismatch {
            expected: 4,
            found: h.dim(),
        });
    }
    let even = [basis_index("uu")?, basis_index("dd")?];
    let odd = [basis_index("ud")?, basis_index("du")?];
    let mut leak: f64 = 0.0;
    for &r in &even {
        for &c in &odd {
            leak = leak.max(h.entry(r, c).norm()).max(h.entry(c, r).norm());
        }
    }
    if leak > EXACT_TOL {
        return Err(Error::ParityLeakage { leak });
    }
    let idx = match which {
        Subspace::Even => even,
        Subspace::Odd => odd,
    };
    let m = CMatrix::from_fn(2, 2, |r, c| h.entry(idx[r], idx[c]));
    Operator::from_matrix(m)
}

/// Eigenvalue gap of a 2×2 Hermitian block.
pub fn dressed_gap(block: &Operator) -> f64 {
    let m = block.matrix();
    let half_diff = 0.5 * (m[(0, 0)].re - m[(1, 1)].re);
    2.0 * (half_diff * half_diff + m[(0, 1)].norm_sqr()).sqrt()
}
