//! Dense operator and state algebra with exact propagation for static
//! Hermitian generators.
//!
//! Conventions used throughout the crate:
//!
//! * `|↑⟩ = (1, 0)`, `|↓⟩ = (0, 1)`, so `σz = diag(1, -1)` and
//!   `σy = [[0, -i], [i, 0]]`.
//! * Spin 1 is the leftmost tensor factor. For two spins the computational
//!   basis order is `(↑↑, ↑↓, ↓↑, ↓↓)`.
//! * A motional mode, when present, is the last tensor factor.
//! * Generators are angular frequencies (ħ = 1), so `ψ(t) = exp(-iHt) ψ(0)`.
//!
//! Basis states are addressed by labels made of `u`/`d` characters, one per
//! spin, spin 1 first (`"du"` is `|↓↑⟩`).

use std::ops::{Add, Mul, Sub};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
pub use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Tolerance used for Hermiticity and normalization checks.
pub const EXACT_TOL: f64 = 1e-12;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);
const I: C64 = C64::new(0.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Pauli {
    X,
    Y,
    Z,
    Identity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    matrix: CMatrix,
    hermitian: bool,
}

impl Operator {
    /// Wraps a square matrix, setting the Hermitian flag from an explicit
    /// `max|M - M†|` check.
    pub fn from_matrix(matrix: CMatrix) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::DimensionMismatch {
                expected: matrix.nrows(),
                found: matrix.ncols(),
            });
        }
        let hermitian = hermiticity_deviation(&matrix) < EXACT_TOL;
        Ok(Self { matrix, hermitian })
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            matrix: CMatrix::zeros(dim, dim),
            hermitian: true,
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            matrix: CMatrix::identity(dim, dim),
            hermitian: true,
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    pub fn hermiticity_deviation(&self) -> f64 {
        hermiticity_deviation(&self.matrix)
    }

    pub fn entry(&self, row: usize, col: usize) -> C64 {
        self.matrix[(row, col)]
    }

    /// Real scaling keeps the Hermitian flag.
    pub fn scale(&self, factor: f64) -> Self {
        Self {
            matrix: &self.matrix * C64::from(factor),
            hermitian: self.hermitian,
        }
    }

    pub fn apply(&self, psi: &StateVector) -> Result<CVector> {
        if psi.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: psi.dim(),
            });
        }
        Ok(&self.matrix * psi.amplitudes())
    }

    /// `[A, B] = AB - BA`.
    pub fn commutator(&self, other: &Operator) -> Result<CMatrix> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        Ok(&self.matrix * &other.matrix - &other.matrix * &self.matrix)
    }

    /// Expectation value `⟨ψ|A|ψ⟩` (real part; exact for Hermitian `A`).
    pub fn expectation(&self, psi: &StateVector) -> Result<f64> {
        let a = self.apply(psi)?;
        Ok(psi.amplitudes().dotc(&a).re)
    }
}

impl Add for &Operator {
    type Output = Operator;

    fn add(self, rhs: &Operator) -> Operator {
        assert_eq!(self.dim(), rhs.dim(), "operator dimensions differ");
        Operator {
            matrix: &self.matrix + &rhs.matrix,
            hermitian: self.hermitian && rhs.hermitian,
        }
    }
}

impl Sub for &Operator {
    type Output = Operator;

    fn sub(self, rhs: &Operator) -> Operator {
        assert_eq!(self.dim(), rhs.dim(), "operator dimensions differ");
        Operator {
            matrix: &self.matrix - &rhs.matrix,
            hermitian: self.hermitian && rhs.hermitian,
        }
    }
}

impl Mul<f64> for &Operator {
    type Output = Operator;

    fn mul(self, rhs: f64) -> Operator {
        self.scale(rhs)
    }
}

fn hermiticity_deviation(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut dev: f64 = 0.0;
    for r in 0..n {
        for c in r..n {
            dev = dev.max((m[(r, c)] - m[(c, r)].conj()).norm());
        }
    }
    dev
}

/// Single-spin Pauli matrix in the fixed convention.
pub fn pauli(axis: Pauli) -> Operator {
    let m = match axis {
        Pauli::X => CMatrix::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO]),
        Pauli::Y => CMatrix::from_row_slice(2, 2, &[ZERO, -I, I, ZERO]),
        Pauli::Z => CMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE]),
        Pauli::Identity => CMatrix::identity(2, 2),
    };
    Operator {
        matrix: m,
        hermitian: true,
    }
}

/// Kronecker product in list order.
pub fn tensor(ops: &[Operator]) -> Result<Operator> {
    let (first, rest) = ops.split_first().ok_or(Error::EmptyTensor)?;
    let mut acc = first.clone();
    for op in rest {
        acc = Operator {
            matrix: acc.matrix.kronecker(&op.matrix),
            hermitian: acc.hermitian && op.hermitian,
        };
    }
    Ok(acc)
}

/// Places a 2×2 operator on `site` of an `n`-spin register.
pub fn embed(op: &Operator, site: usize, n: usize) -> Result<Operator> {
    if op.dim() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            found: op.dim(),
        });
    }
    if site >= n {
        return Err(Error::SiteOutOfRange { site, n });
    }
    let factors: Vec<Operator> = (0..n)
        .map(|k| {
            if k == site {
                op.clone()
            } else {
                pauli(Pauli::Identity)
            }
        })
        .collect();
    tensor(&factors)
}

/// Index of a `u`/`d` label in the computational basis.
pub fn basis_index(label: &str) -> Result<usize> {
    if label.is_empty() {
        return Err(Error::InvalidLabel(label.to_owned()));
    }
    label.chars().try_fold(0usize, |acc, c| match c {
        'u' => Ok(acc << 1),
        'd' => Ok((acc << 1) | 1),
        _ => Err(Error::InvalidLabel(label.to_owned())),
    })
}

pub fn basis_label(index: usize, n_spins: usize) -> String {
    (0..n_spins)
        .map(|k| {
            if (index >> (n_spins - 1 - k)) & 1 == 0 {
                'u'
            } else {
                'd'
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    amplitudes: CVector,
    dims: Vec<usize>,
    n_spins: usize,
}

impl StateVector {
    /// Builds a state from amplitudes that must already be normalized.
    /// The first `n_spins` factors of `dims` are spins (dimension 2); any
    /// remaining factor is a motional mode.
    pub fn new(amplitudes: CVector, dims: Vec<usize>, n_spins: usize) -> Result<Self> {
        let d: usize = dims.iter().product();
        if d != amplitudes.len() {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: amplitudes.len(),
            });
        }
        if n_spins > dims.len() || dims[..n_spins].iter().any(|&k| k != 2) {
            return Err(Error::InvalidParameter(format!(
                "leading {n_spins} factors of {dims:?} must be spins"
            )));
        }
        let norm = amplitudes.norm();
        if (norm - 1.0).abs() > EXACT_TOL {
            return Err(Error::InvalidParameter(format!(
                "state norm {norm} is not 1"
            )));
        }
        Ok(Self {
            amplitudes,
            dims,
            n_spins,
        })
    }

    /// Normalizes the amplitudes before construction.
    pub fn normalized(amplitudes: CVector, dims: Vec<usize>, n_spins: usize) -> Result<Self> {
        let norm = amplitudes.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::InvalidParameter(
                "cannot normalize a zero state".into(),
            ));
        }
        Self::new(amplitudes.unscale(norm), dims, n_spins)
    }

    /// A spin register in a computational basis state, e.g. `"dd"`.
    pub fn spins(label: &str) -> Result<Self> {
        let n = label.len();
        let idx = basis_index(label)?;
        let mut amps = CVector::zeros(1 << n);
        amps[idx] = ONE;
        Self::new(amps, vec![2; n], n)
    }

    /// Spin basis state tensored with Fock state `|fock⟩` of a mode truncated at `n_max`.
    pub fn spins_with_mode(label: &str, fock: usize, n_max: usize) -> Result<Self> {
        if fock > n_max {
            return Err(Error::InvalidParameter(format!(
                "Fock state {fock} above n_max {n_max}"
            )));
        }
        let n = label.len();
        let idx = basis_index(label)?;
        let levels = n_max + 1;
        let mut amps = CVector::zeros((1 << n) * levels);
        amps[idx * levels + fock] = ONE;
        let mut dims = vec![2; n];
        dims.push(levels);
        Self::new(amps, dims, n)
    }

    /// Equal-weight superposition of the labelled spin basis states.
    pub fn superposition(labels: &[&str]) -> Result<Self> {
        let n = labels.first().map(|l| l.len()).ok_or(Error::EmptyTensor)?;
        let mut amps = CVector::zeros(1 << n);
        for l in labels {
            if l.len() != n {
                return Err(Error::InvalidLabel((*l).to_owned()));
            }
            amps[basis_index(l)?] += ONE;
        }
        Self::normalized(amps, vec![2; n], n)
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn n_spins(&self) -> usize {
        self.n_spins
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.norm()
    }

    /// Replaces the amplitudes, keeping the subsystem structure. Used by
    /// propagators, which check the norm themselves.
    pub(crate) fn with_amplitudes(&self, amplitudes: CVector) -> Self {
        debug_assert_eq!(amplitudes.len(), self.dim());
        Self {
            amplitudes,
            dims: self.dims.clone(),
            n_spins: self.n_spins,
        }
    }

    /// Population of the last (motional) factor's top level, if present.
    pub fn mode_edge_population(&self) -> Option<f64> {
        if self.dims.len() == self.n_spins {
            return None;
        }
        let levels = *self.dims.last()?;
        let outer = self.dim() / levels;
        Some(
            (0..outer)
                .map(|k| self.amplitudes[k * levels + levels - 1].norm_sqr())
                .sum(),
        )
    }
}

/// Eigendecomposition of a static Hermitian generator, reusable across times.
#[derive(Debug, Clone)]
pub struct Propagator {
    eigenvalues: DVector<f64>,
    eigenvectors: CMatrix,
}

impl Propagator {
    pub fn new(h: &Operator) -> Result<Self> {
        if !h.is_hermitian() {
            return Err(Error::NotHermitian {
                deviation: h.hermiticity_deviation(),
            });
        }
        let eig = SymmetricEigen::new(h.matrix.clone());
        Ok(Self {
            eigenvalues: eig.eigenvalues,
            eigenvectors: eig.eigenvectors,
        })
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    pub fn evolve(&self, psi0: &StateVector, t: f64) -> Result<StateVector> {
        let d = self.eigenvalues.len();
        if psi0.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: psi0.dim(),
            });
        }
        let mut coeffs = self.eigenvectors.ad_mul(psi0.amplitudes());
        for (c, &lambda) in coeffs.iter_mut().zip(self.eigenvalues.iter()) {
            *c *= C64::from_polar(1.0, -lambda * t);
        }
        Ok(psi0.with_amplitudes(&self.eigenvectors * coeffs))
    }
}

/// `exp(-iHt) ψ0` via Hermitian eigendecomposition.
pub fn propagate_static(h: &Operator, psi0: &StateVector, t: f64) -> Result<StateVector> {
    if h.dim() != psi0.dim() {
        return Err(Error::DimensionMismatch {
            expected: h.dim(),
            found: psi0.dim(),
        });
    }
    Propagator::new(h)?.evolve(psi0, t)
}

/// Probabilities over the computational basis of the selected subsystems
/// (indices into `dims`), marginalized over everything else. `None` selects
/// all spins, tracing out the motional mode. Ordering follows the tensor
/// order of the selected factors.
pub fn populations(psi: &StateVector, subsystem: Option<&[usize]>) -> Vec<f64> {
    let all_spins: Vec<usize> = (0..psi.n_spins).collect();
    let selected = subsystem.unwrap_or(&all_spins);
    let dims = &psi.dims;
    let out_dim: usize = selected.iter().map(|&k| dims[k]).product();
    let mut out = vec![0.0; out_dim];
    // strides of each factor in the full index
    let mut strides = vec![1usize; dims.len()];
    for k in (0..dims.len().saturating_sub(1)).rev() {
        strides[k] = strides[k + 1] * dims[k + 1];
    }
    for (idx, a) in psi.amplitudes.iter().enumerate() {
        let p = a.norm_sqr();
        if p == 0.0 {
            continue;
        }
        let mut j = 0;
        for &k in selected {
            j = j * dims[k] + (idx / strides[k]) % dims[k];
        }
        out[j] += p;
    }
    out
}

/// `⟨σz ⊗ … ⊗ σz⟩` over all spins, with any motional mode traced out.
pub fn parity_expectation(psi: &StateVector) -> f64 {
    populations(psi, None)
        .iter()
        .enumerate()
        .map(|(i, p)| if i.count_ones() % 2 == 0 { *p } else { -*p })
        .sum()
}
