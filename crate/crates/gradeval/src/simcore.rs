//! Minimal dense state-vector engine.
//!
//! Registers are laid out little-endian: qubit `b` of a register at offset
//! `o` is bit `o + b` of the amplitude index, and registers occupy contiguous
//! bit ranges in declaration order. Basis labels reported by measurement use
//! the same convention, so every label in a report can be reproduced by hand.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

/// Dense complex matrix used throughout the crate.
pub type CMat = nalgebra::DMatrix<Complex64>;
/// Dense complex vector used throughout the crate.
pub type CVec = nalgebra::DVector<Complex64>;

pub const NORM_TOL: f64 = 1e-10;
pub const MEASURE_NORM_TOL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("gate dimension {got} does not match 2^{targets} targets")]
    DimensionMismatch { got: usize, targets: usize },
    #[error("gate deviates from unitarity by {dev:.3e}")]
    NonUnitary { dev: f64 },
    #[error("qubit indices overlap or repeat: {0:?}")]
    OverlappingQubits(Vec<usize>),
    #[error("qubit index {0} out of range for {1}-qubit state")]
    QubitOutOfRange(usize, usize),
    #[error("register `{0}` not found")]
    RegisterNotFound(String),
    #[error("register widths must be >= 1")]
    EmptyRegister,
    #[error("state norm drifted to {0}; upstream bug")]
    NormDrift(f64),
}

/// Named block of qubits inside the global ordering.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QubitRegister {
    pub name: String,
    pub width: usize,
    pub offset: usize,
}

impl QubitRegister {
    /// Global qubit indices covered by this register, least significant first.
    pub fn qubits(&self) -> Vec<usize> {
        (self.offset..self.offset + self.width).collect()
    }

    pub fn label_mask(&self) -> u64 {
        ((1u64 << self.width) - 1) << self.offset
    }

    pub fn label_of(&self, basis_index: u64) -> u64 {
        (basis_index >> self.offset) & ((1u64 << self.width) - 1)
    }
}

/// Ordered, contiguous, non-overlapping set of registers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegisterLayout {
    registers: Vec<QubitRegister>,
    total_width: usize,
}

impl RegisterLayout {
    pub fn new(specs: &[(&str, usize)]) -> Result<Self, SimError> {
        let mut registers = Vec::with_capacity(specs.len());
        let mut offset = 0;
        for (name, width) in specs {
            if *width == 0 {
                return Err(SimError::EmptyRegister);
            }
            registers.push(QubitRegister {
                name: (*name).to_string(),
                width: *width,
                offset,
            });
            offset += width;
        }
        Ok(Self {
            registers,
            total_width: offset,
        })
    }

    pub fn total_width(&self) -> usize {
        self.total_width
    }

    pub fn registers(&self) -> &[QubitRegister] {
        &self.registers
    }

    pub fn register(&self, name: &str) -> Result<&QubitRegister, SimError> {
        self.registers
            .iter()
            .find(|r| r.name == name)
            .ok_or_else(|| SimError::RegisterNotFound(name.to_string()))
    }
}

/// Fixed-point grid G_n: label j of an n-bit register decodes to
/// `j/2^n - 1/2 + 1/2^(n+1)`, a point in (-1/2, 1/2).
///
/// This is the only place the label <-> coordinate convention lives.
pub fn grid_value(label: u64, width: usize) -> f64 {
    let n = width as i32;
    label as f64 / (2f64).powi(n) - 0.5 + (2f64).powi(-(n + 1))
}

/// Bit widths of the index registers x_1 .. x_M, register 1 in the lowest
/// bits. Lattice index = sum_j label_j << offset_j.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexGrid {
    widths: Vec<usize>,
}

impl IndexGrid {
    pub fn new(widths: Vec<usize>) -> Self {
        assert!(!widths.is_empty() && widths.iter().all(|&w| w >= 1));
        Self { widths }
    }

    pub fn m(&self) -> usize {
        self.widths.len()
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn total_bits(&self) -> usize {
        self.widths.iter().sum()
    }

    pub fn lattice_len(&self) -> usize {
        1usize << self.total_bits()
    }

    pub fn offset(&self, register: usize) -> usize {
        self.widths[..register].iter().sum()
    }

    /// Layout with one register per component, named x1 .. xM.
    pub fn layout(&self) -> RegisterLayout {
        let names: Vec<String> = (1..=self.m()).map(|j| format!("x{j}")).collect();
        let specs: Vec<(&str, usize)> = names
            .iter()
            .map(|n| n.as_str())
            .zip(self.widths.iter().copied())
            .collect();
        RegisterLayout::new(&specs).expect("positive widths")
    }

    pub fn label_of(&self, lattice_index: usize, register: usize) -> u64 {
        ((lattice_index >> self.offset(register)) as u64) & ((1u64 << self.widths[register]) - 1)
    }

    /// Grid coordinate of one register's label inside a lattice index.
    pub fn value_of(&self, lattice_index: usize, register: usize) -> f64 {
        grid_value(self.label_of(lattice_index, register), self.widths[register])
    }
}

/// Deterministic per-repetition random stream: identical (seed, stream)
/// always reproduces the same sample sequence.
#[derive(Debug, Clone)]
pub struct RngStream {
    pub seed: u64,
    pub stream: u64,
    rng: ChaCha12Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { seed, stream, rng }
    }

    /// Uniform sample in [0, 1).
    pub fn uniform(&mut self) -> f64 {
        self.rng.gen::<f64>()
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }
}

/// One computational-basis outcome, reported per register.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementOutcome {
    /// Integer label per register, in layout order.
    pub labels: Vec<u64>,
    /// G_n decoding of each label.
    pub values: Vec<f64>,
}

/// Dense state vector over a register layout.
#[derive(Debug, Clone)]
pub struct StateVector {
    layout: RegisterLayout,
    amps: Vec<Complex64>,
}

impl StateVector {
    /// All-zeros basis state |0...0>.
    pub fn zero(layout: RegisterLayout) -> Self {
        let mut amps = vec![Complex64::new(0.0, 0.0); 1usize << layout.total_width()];
        amps[0] = Complex64::new(1.0, 0.0);
        Self { layout, amps }
    }

    pub fn from_amplitudes(layout: RegisterLayout, amps: Vec<Complex64>) -> Result<Self, SimError> {
        if amps.len() != 1usize << layout.total_width() {
            return Err(SimError::DimensionMismatch {
                got: amps.len(),
                targets: layout.total_width(),
            });
        }
        let state = Self { layout, amps };
        let norm = state.norm_sqr();
        if (norm - 1.0).abs() > MEASURE_NORM_TOL {
            return Err(SimError::NormDrift(norm));
        }
        Ok(state)
    }

    pub fn layout(&self) -> &RegisterLayout {
        &self.layout
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn amplitudes_mut(&mut self) -> &mut [Complex64] {
        &mut self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    /// Applies a small unitary on `targets` (little-endian: `targets[0]` is
    /// the least significant bit of the gate's index space), restricted to
    /// basis states where every control qubit is 1.
    pub fn apply_gate(
        &mut self,
        gate: &CMat,
        targets: &[usize],
        controls: &[usize],
    ) -> Result<(), SimError> {
        let n = self.layout.total_width();
        let dim = 1usize << targets.len();
        if gate.nrows() != dim || gate.ncols() != dim {
            return Err(SimError::DimensionMismatch {
                got: gate.nrows(),
                targets: targets.len(),
            });
        }
        let mut seen = vec![false; n];
        for &q in targets.iter().chain(controls.iter()) {
            if q >= n {
                return Err(SimError::QubitOutOfRange(q, n));
            }
            if seen[q] {
                let mut all: Vec<usize> = targets.to_vec();
                all.extend_from_slice(controls);
                return Err(SimError::OverlappingQubits(all));
            }
            seen[q] = true;
        }
        ensure_unitary(gate, NORM_TOL)?;

        let target_mask: u64 = targets.iter().fold(0, |m, &q| m | (1u64 << q));
        let control_mask: u64 = controls.iter().fold(0, |m, &q| m | (1u64 << q));
        // pattern -> scattered bit offset of each gate basis state
        let offsets: Vec<u64> = (0..dim)
            .map(|pat| {
                targets
                    .iter()
                    .enumerate()
                    .fold(0u64, |acc, (i, &q)| acc | ((((pat >> i) & 1) as u64) << q))
            })
            .collect();

        let mut scratch = vec![Complex64::new(0.0, 0.0); dim];
        for base in 0..self.amps.len() as u64 {
            if base & target_mask != 0 || base & control_mask != control_mask {
                continue;
            }
            for (pat, off) in offsets.iter().enumerate() {
                scratch[pat] = self.amps[(base | off) as usize];
            }
            for (row, off) in offsets.iter().enumerate() {
                let mut acc = Complex64::new(0.0, 0.0);
                for (col, s) in scratch.iter().enumerate() {
                    acc += gate[(row, col)] * s;
                }
                self.amps[(base | off) as usize] = acc;
            }
        }
        debug_assert!((self.norm_sqr() - 1.0).abs() < 1e-9);
        Ok(())
    }

    /// Hadamard on every qubit of a register.
    pub fn apply_hadamard_register(&mut self, name: &str) -> Result<(), SimError> {
        let qubits = self.layout.register(name)?.qubits();
        let h = gates::hadamard();
        for q in qubits {
            self.apply_gate(&h, &[q], &[])?;
        }
        Ok(())
    }

    /// Inverse Fourier transform over the shifted grid G_n on one register:
    /// matrix elements 2^(-n/2) exp(-2 pi i 2^n x k) for x, k in G_n.
    pub fn apply_qft_inverse(&mut self, name: &str) -> Result<(), SimError> {
        let reg = self.layout.register(name)?.clone();
        let m = qft_inverse_matrix(reg.width);
        self.apply_gate(&m, &reg.qubits(), &[])
    }

    /// Probability of each basis index.
    pub fn probabilities(&self) -> Vec<f64> {
        self.amps.iter().map(|a| a.norm_sqr()).collect()
    }

    /// Samples one computational-basis outcome across all registers.
    ///
    /// Does not collapse the state; repeated calls model independent
    /// measurements of freshly prepared copies.
    pub fn measure_all(&self, rng: &mut RngStream) -> Result<MeasurementOutcome, SimError> {
        let norm = self.norm_sqr();
        if (norm - 1.0).abs() > MEASURE_NORM_TOL {
            return Err(SimError::NormDrift(norm));
        }
        let u = rng.uniform() * norm;
        let mut acc = 0.0;
        let mut hit = self.amps.len() - 1;
        for (idx, a) in self.amps.iter().enumerate() {
            acc += a.norm_sqr();
            if u < acc {
                hit = idx;
                break;
            }
        }
        Ok(self.outcome_of(hit as u64))
    }

    /// Splits a basis index into per-register labels and grid values.
    pub fn outcome_of(&self, basis_index: u64) -> MeasurementOutcome {
        let labels: Vec<u64> = self
            .layout
            .registers()
            .iter()
            .map(|r| r.label_of(basis_index))
            .collect();
        let values = self
            .layout
            .registers()
            .iter()
            .zip(labels.iter())
            .map(|(r, &l)| grid_value(l, r.width))
            .collect();
        MeasurementOutcome { labels, values }
    }
}

/// Explicit matrix of the inverse Fourier transform over G_n,
/// `M[k, x] = 2^(-n/2) exp(-2 pi i 2^n x k)` with x, k the grid values of the
/// column and row labels.
pub fn qft_inverse_matrix(width: usize) -> CMat {
    let dim = 1usize << width;
    let scale = 1.0 / (dim as f64).sqrt();
    let two_n = dim as f64;
    CMat::from_fn(dim, dim, |row, col| {
        let k = grid_value(row as u64, width);
        let x = grid_value(col as u64, width);
        let phase = -2.0 * std::f64::consts::PI * two_n * x * k;
        Complex64::from_polar(scale, phase)
    })
}

/// Max-entry deviation of U from unitarity, ||U^dag U - I||_max.
pub fn unitarity_deviation(u: &CMat) -> f64 {
    let prod = u.adjoint() * u;
    let mut dev: f64 = 0.0;
    for i in 0..prod.nrows() {
        for j in 0..prod.ncols() {
            let expect = if i == j { 1.0 } else { 0.0 };
            dev = dev.max((prod[(i, j)] - Complex64::new(expect, 0.0)).norm());
        }
    }
    dev
}

pub fn ensure_unitary(u: &CMat, tol: f64) -> Result<(), SimError> {
    let dev = unitarity_deviation(u);
    if dev > tol {
        return Err(SimError::NonUnitary { dev });
    }
    Ok(())
}

/// Common single-qubit gates.
pub mod gates {
    use super::{CMat, Complex64};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    pub fn identity(dim: usize) -> CMat {
        CMat::identity(dim, dim)
    }

    pub fn pauli_x() -> CMat {
        CMat::from_row_slice(2, 2, &[c(0., 0.), c(1., 0.), c(1., 0.), c(0., 0.)])
    }

    pub fn pauli_y() -> CMat {
        CMat::from_row_slice(2, 2, &[c(0., 0.), c(0., -1.), c(0., 1.), c(0., 0.)])
    }

    pub fn pauli_z() -> CMat {
        CMat::from_row_slice(2, 2, &[c(1., 0.), c(0., 0.), c(0., 0.), c(-1., 0.)])
    }

    pub fn hadamard() -> CMat {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        CMat::from_row_slice(2, 2, &[c(s, 0.), c(s, 0.), c(s, 0.), c(-s, 0.)])
    }

    /// S = diag(1, i).
    pub fn phase_s() -> CMat {
        CMat::from_row_slice(2, 2, &[c(1., 0.), c(0., 0.), c(0., 0.), c(0., 1.)])
    }

    /// S^dag = diag(1, -i).
    pub fn phase_s_dag() -> CMat {
        CMat::from_row_slice(2, 2, &[c(1., 0.), c(0., 0.), c(0., 0.), c(0., -1.)])
    }
}
