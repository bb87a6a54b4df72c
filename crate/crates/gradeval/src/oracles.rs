//! The oracle stack: state preparation, the parameterized unitary U(x), the
//! Hadamard-test circuit F(x) that encodes f(x) in an ancilla amplitude, the
//! index-controlled probability oracle over the grid, the (idealized) phase
//! oracle, and the query ledger.
//!
//! Conventions, fixed once:
//! - `U(x) = prod_{j=1..M} pre_j exp(-2i x_j G_j) * tail`, factor j = 1
//!   leftmost. Plain expectation estimation has `pre_j = tail = I` and
//!   `G_j = O_j`.
//! - `f(x) = -Im<psi|U(x)|psi>/2 + 1/2` (imaginary part), or the analogous
//!   real-part variant used by the correlation pipeline.
//! - The probability-to-phase conversion is idealized: f is read out exactly
//!   (analytic mode) or from simulated circuit amplitudes (circuit mode) and
//!   the phase applied directly. Its cost is modeled by a query multiplier
//!   and its inexactness by an injectable perturbation of magnitude <= eps'.

use crate::operators::{ObservableSet, OperatorError, Propagator};
use crate::simcore::{
    gates, grid_value, CMat, CVec, IndexGrid, RegisterLayout, SimError, StateVector,
};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use thiserror::Error;

pub const UNITARY_TOL: f64 = 1e-10;
/// An eps'-approximate phase oracle only makes sense for eps' < 1/3.
pub const MAX_PHASE_ERROR: f64 = 1.0 / 3.0;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("parameter vector has length {got}, expected {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("scale index {ell} outside {{-{m}, ..., {m}}}")]
    ScaleOutOfRange { ell: i64, m: usize },
    #[error("phase error {0} must lie in [0, 1/3)")]
    PhaseErrorTooLarge(f64),
    #[error("state width {got} does not match expected {expected}")]
    StateWidthMismatch { expected: usize, got: usize },
    #[error("state amplitudes must have unit norm (got {0})")]
    NotNormalized(f64),
    #[error("matrix is not unitary (deviation {0:.3e})")]
    NotUnitary(f64),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Operator(#[from] OperatorError),
}

/// Black-box preparation unitary: |psi> = U_psi |0...0>.
///
/// Invocation counters record forward and inverse uses; the ledger is the
/// authoritative cost record, these exist for cross-checks.
#[derive(Debug)]
pub struct StatePrepOracle {
    unitary: CMat,
    psi: CVec,
    forward: AtomicU64,
    inverse: AtomicU64,
}

impl StatePrepOracle {
    pub fn from_unitary(unitary: CMat) -> Result<Arc<Self>, OracleError> {
        if unitary.nrows() != unitary.ncols() || !unitary.nrows().is_power_of_two() {
            return Err(OracleError::StateWidthMismatch {
                expected: unitary.nrows().next_power_of_two(),
                got: unitary.ncols(),
            });
        }
        let dev = crate::simcore::unitarity_deviation(&unitary);
        if dev > UNITARY_TOL {
            return Err(OracleError::NotUnitary(dev));
        }
        let psi = unitary.column(0).into_owned();
        Ok(Arc::new(Self {
            unitary,
            psi,
            forward: AtomicU64::new(0),
            inverse: AtomicU64::new(0),
        }))
    }

    /// Builds some unitary whose first column is exactly the given state.
    pub fn from_state(amplitudes: &[Complex64]) -> Result<Arc<Self>, OracleError> {
        let dim = amplitudes.len();
        if !dim.is_power_of_two() {
            return Err(OracleError::StateWidthMismatch {
                expected: dim.next_power_of_two(),
                got: dim,
            });
        }
        let psi = CVec::from_column_slice(amplitudes);
        let norm = psi.norm();
        if (norm - 1.0).abs() > 1e-8 {
            return Err(OracleError::NotNormalized(norm * norm));
        }
        let psi = psi / Complex64::new(norm, 0.0);
        Self::from_unitary(unitary_preparing(&psi))
    }

    pub fn qubits(&self) -> usize {
        self.psi.len().trailing_zeros() as usize
    }

    pub fn dim(&self) -> usize {
        self.psi.len()
    }

    pub fn psi(&self) -> &CVec {
        &self.psi
    }

    pub fn unitary(&self) -> &CMat {
        &self.unitary
    }

    pub fn record_forward(&self) {
        self.forward.fetch_add(1, Ordering::Relaxed);
    }

    pub fn record_inverse(&self) {
        self.inverse.fetch_add(1, Ordering::Relaxed);
    }

    /// (forward, inverse) invocation counts so far.
    pub fn counts(&self) -> (u64, u64) {
        (
            self.forward.load(Ordering::Relaxed),
            self.inverse.load(Ordering::Relaxed),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OracleKind {
    Analytic,
    Circuit,
}

/// How f values reach the phase oracle, plus the injectable conversion error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleMode {
    pub kind: OracleKind,
    /// eps': per-application phase perturbation magnitude, < 1/3 when nonzero.
    pub phase_error: f64,
}

impl OracleMode {
    pub fn analytic() -> Self {
        Self {
            kind: OracleKind::Analytic,
            phase_error: 0.0,
        }
    }

    pub fn circuit() -> Self {
        Self {
            kind: OracleKind::Circuit,
            phase_error: 0.0,
        }
    }

    pub fn with_phase_error(mut self, eps: f64) -> Result<Self, OracleError> {
        if !(0.0..MAX_PHASE_ERROR).contains(&eps) {
            return Err(OracleError::PhaseErrorTooLarge(eps));
        }
        self.phase_error = eps;
        Ok(self)
    }
}

/// Monotone counters for the oracle-model costs of a run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResourceLedger {
    pub u_psi_queries: u64,
    pub phase_oracle_queries: u64,
    /// Controlled-evolution gate count per observable.
    pub controlled_evolution_count: Vec<u64>,
    /// Sum of |x| over applied exp(-i x O_j) gates, per observable.
    pub total_evolution_duration: Vec<f64>,
    pub qubit_high_water: usize,
}

impl ResourceLedger {
    pub fn new(m: usize) -> Self {
        Self {
            u_psi_queries: 0,
            phase_oracle_queries: 0,
            controlled_evolution_count: vec![0; m],
            total_evolution_duration: vec![0.0; m],
            qubit_high_water: 0,
        }
    }

    pub fn charge_u_psi(&mut self, queries: u64) {
        self.u_psi_queries += queries;
    }

    pub fn charge_phase(&mut self, queries: u64) {
        self.phase_oracle_queries += queries;
    }

    pub fn charge_evolution(&mut self, observable: usize, gates: u64, duration: f64) {
        self.controlled_evolution_count[observable] += gates;
        self.total_evolution_duration[observable] += duration;
    }

    pub fn record_qubits(&mut self, qubits: usize) {
        self.qubit_high_water = self.qubit_high_water.max(qubits);
    }

    pub fn merge(&mut self, other: &ResourceLedger) {
        self.u_psi_queries += other.u_psi_queries;
        self.phase_oracle_queries += other.phase_oracle_queries;
        for (a, b) in self
            .controlled_evolution_count
            .iter_mut()
            .zip(&other.controlled_evolution_count)
        {
            *a += b;
        }
        for (a, b) in self
            .total_evolution_duration
            .iter_mut()
            .zip(&other.total_evolution_duration)
        {
            *a += b;
        }
        self.qubit_high_water = self.qubit_high_water.max(other.qubit_high_water);
    }
}

/// One factor `pre * exp(-2i x G)` of the parameterized product.
#[derive(Debug, Clone)]
pub struct RotationSlot {
    /// Constant unitary to the left of the rotation; None means identity.
    pub pre: Option<CMat>,
    pub generator: Propagator,
}

/// U(x) = prod_j [pre_j exp(-2i x_j G_j)] * tail, factor j = 1 leftmost.
#[derive(Debug, Clone)]
pub struct ParamUnitary {
    slots: Vec<RotationSlot>,
    tail: Option<CMat>,
    dim: usize,
}

impl ParamUnitary {
    pub fn new(slots: Vec<RotationSlot>, tail: Option<CMat>) -> Self {
        assert!(!slots.is_empty());
        let dim = slots[0].generator.dim();
        assert!(slots.iter().all(|s| s.generator.dim() == dim));
        if let Some(t) = &tail {
            assert_eq!(t.nrows(), dim);
        }
        Self { slots, tail, dim }
    }

    pub fn from_observable_set(set: &ObservableSet) -> Self {
        let slots = set
            .iter()
            .map(|o| RotationSlot {
                pre: None,
                generator: o.propagator().clone(),
            })
            .collect();
        Self::new(slots, None)
    }

    pub fn m(&self) -> usize {
        self.slots.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn slots(&self) -> &[RotationSlot] {
        &self.slots
    }

    pub fn tail(&self) -> Option<&CMat> {
        self.tail.as_ref()
    }

    /// Full dense product.
    pub fn dense(&self, x: &[f64]) -> Result<CMat, OracleError> {
        if x.len() != self.m() {
            return Err(OracleError::LengthMismatch {
                expected: self.m(),
                got: x.len(),
            });
        }
        let mut acc = gates::identity(self.dim);
        for (slot, &xj) in self.slots.iter().zip(x) {
            if let Some(pre) = &slot.pre {
                acc *= pre;
            }
            acc *= slot.generator.exponential(2.0 * xj);
        }
        if let Some(tail) = &self.tail {
            acc *= tail;
        }
        Ok(acc)
    }

    /// <psi| U(x) |psi> via matrix-vector products only.
    pub fn overlap(&self, psi: &CVec, x: &[f64]) -> Result<Complex64, OracleError> {
        if x.len() != self.m() {
            return Err(OracleError::LengthMismatch {
                expected: self.m(),
                got: x.len(),
            });
        }
        let mut w = match &self.tail {
            Some(t) => t * psi,
            None => psi.clone(),
        };
        for (slot, &xj) in self.slots.iter().zip(x).rev() {
            w = slot.generator.apply_exponential(2.0 * xj, &w);
            if let Some(pre) = &slot.pre {
                w = pre * w;
            }
        }
        Ok(psi.dotc(&w))
    }
}

/// U(x) = prod_j exp(-2i x_j O_j) for an observable set.
pub fn build_u_of_x(set: &ObservableSet, x: &[f64]) -> Result<CMat, OracleError> {
    ParamUnitary::from_observable_set(set).dense(x)
}

/// Which component of <psi|U(x)|psi> the Hadamard test reads out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestPart {
    /// F = (H x I)(c-U)(S^dag H x U_psi); ancilla-1 probability is
    /// -Im<U>/2 + 1/2.
    Imaginary,
    /// F = (H x I)(c-U)(H x U_psi); ancilla-1 probability is -Re<U>/2 + 1/2.
    Real,
}

/// The scalar function f whose gradient at 0 carries the targets.
#[derive(Debug, Clone)]
pub struct HadamardTestFunction {
    unitary: ParamUnitary,
    psi_oracle: Arc<StatePrepOracle>,
    part: TestPart,
}

impl HadamardTestFunction {
    pub fn new(
        unitary: ParamUnitary,
        psi_oracle: Arc<StatePrepOracle>,
        part: TestPart,
    ) -> Result<Self, OracleError> {
        if unitary.dim() != psi_oracle.dim() {
            return Err(OracleError::StateWidthMismatch {
                expected: unitary.dim(),
                got: psi_oracle.dim(),
            });
        }
        Ok(Self {
            unitary,
            psi_oracle,
            part,
        })
    }

    pub fn for_expectations(
        set: &ObservableSet,
        psi_oracle: Arc<StatePrepOracle>,
    ) -> Result<Self, OracleError> {
        Self::new(
            ParamUnitary::from_observable_set(set),
            psi_oracle,
            TestPart::Imaginary,
        )
    }

    pub fn m(&self) -> usize {
        self.unitary.m()
    }

    pub fn system_qubits(&self) -> usize {
        self.psi_oracle.qubits()
    }

    pub fn part(&self) -> TestPart {
        self.part
    }

    pub fn unitary(&self) -> &ParamUnitary {
        &self.unitary
    }

    pub fn psi_oracle(&self) -> &Arc<StatePrepOracle> {
        &self.psi_oracle
    }

    fn f_of_overlap(&self, overlap: Complex64) -> f64 {
        match self.part {
            TestPart::Imaginary => -0.5 * overlap.im + 0.5,
            TestPart::Real => -0.5 * overlap.re + 0.5,
        }
    }

    /// One oracle-model evaluation of f; charges one U_psi query.
    pub fn f_analytic(&self, x: &[f64], ledger: &mut ResourceLedger) -> Result<f64, OracleError> {
        ledger.charge_u_psi(1);
        self.psi_oracle.record_forward();
        self.f_raw(x)
    }

    /// Simulator-internal evaluation; charges nothing.
    pub fn f_raw(&self, x: &[f64]) -> Result<f64, OracleError> {
        let overlap = self.unitary.overlap(self.psi_oracle.psi(), x)?;
        let f = self.f_of_overlap(overlap);
        debug_assert!((-1e-12..=1.0 + 1e-12).contains(&f));
        Ok(f)
    }

    /// f(scale * k) for every point k of the lattice, evaluated with shared
    /// suffix products so the whole grid costs little more than one sweep.
    pub fn eval_on_lattice(&self, grid: &IndexGrid, scale: f64) -> Vec<f64> {
        assert_eq!(grid.m(), self.m());
        let psi = self.psi_oracle.psi();
        let slots = self.unitary.slots();
        // per-register rotation tables over the grid labels
        let tables: Vec<Vec<CMat>> = (0..grid.m())
            .map(|j| {
                let n = grid.widths()[j];
                (0..(1u64 << n))
                    .map(|label| {
                        slots[j]
                            .generator
                            .exponential(2.0 * scale * grid_value(label, n))
                    })
                    .collect()
            })
            .collect();
        // bras for register 0: column form of psi^dag pre_0 E_0(v)
        let pre0_adj_psi = match &slots[0].pre {
            Some(pre) => pre.adjoint() * psi,
            None => psi.clone(),
        };
        let bras: Vec<CVec> = {
            let n = grid.widths()[0];
            (0..(1u64 << n))
                .map(|label| {
                    slots[0]
                        .generator
                        .apply_exponential(-2.0 * scale * grid_value(label, n), &pre0_adj_psi)
                })
                .collect()
        };
        let w_init = match self.unitary.tail() {
            Some(t) => t * psi,
            None => psi.clone(),
        };
        let mut out = vec![0.0; grid.lattice_len()];
        self.lattice_recurse(grid, &tables, &bras, &w_init, grid.m() - 1, 0, &mut out);
        out
    }

    #[allow(clippy::too_many_arguments)]
    fn lattice_recurse(
        &self,
        grid: &IndexGrid,
        tables: &[Vec<CMat>],
        bras: &[CVec],
        w: &CVec,
        reg: usize,
        base_index: usize,
        out: &mut [f64],
    ) {
        if reg == 0 {
            for (label, bra) in bras.iter().enumerate() {
                // bra holds E^dag pre^dag psi, so the conjugating dot gives
                // psi^dag pre E w
                out[base_index | label] = self.f_of_overlap(bra.dotc(w));
            }
            return;
        }
        let off = grid.offset(reg);
        let slot = &self.unitary.slots()[reg];
        for (label, table) in tables[reg].iter().enumerate() {
            let mut w2 = table * w;
            if let Some(pre) = &slot.pre {
                w2 = pre * w2;
            }
            self.lattice_recurse(grid, tables, bras, &w2, reg - 1, base_index | (label << off), out);
        }
    }
}

/// Layout for a standalone Hadamard-test circuit: ancilla then system.
pub fn f_circuit_layout(system_qubits: usize) -> RegisterLayout {
    RegisterLayout::new(&[("ancilla", 1), ("system", system_qubits)]).expect("positive widths")
}

/// Applies F(x) to a state holding a fresh |0> ancilla and |0..0> system.
/// Charges one U_psi query.
pub fn apply_f_circuit(
    state: &mut StateVector,
    func: &HadamardTestFunction,
    x: &[f64],
    ledger: &mut ResourceLedger,
) -> Result<(), OracleError> {
    let anc = state.layout().register("ancilla")?.offset;
    let sys = state.layout().register("system")?.qubits();
    // rightmost factor first: (S^dag H x U_psi)
    state.apply_gate(func.psi_oracle.unitary(), &sys, &[])?;
    ledger.charge_u_psi(1);
    func.psi_oracle.record_forward();
    state.apply_gate(&gates::hadamard(), &[anc], &[])?;
    if func.part == TestPart::Imaginary {
        state.apply_gate(&gates::phase_s_dag(), &[anc], &[])?;
    }
    // controlled-U(x), then the final Hadamard
    let u = func.unitary.dense(x)?;
    state.apply_gate(&u, &sys, &[anc])?;
    state.apply_gate(&gates::hadamard(), &[anc], &[])?;
    ledger.record_qubits(state.layout().total_width());
    Ok(())
}

/// Fresh-state convenience wrapper around [`apply_f_circuit`].
pub fn build_f_state(
    func: &HadamardTestFunction,
    x: &[f64],
    ledger: &mut ResourceLedger,
) -> Result<StateVector, OracleError> {
    let mut state = StateVector::zero(f_circuit_layout(func.system_qubits()));
    apply_f_circuit(&mut state, func, x, ledger)?;
    Ok(state)
}

/// Probability of measuring the named single-qubit register in |1>.
pub fn register_one_probability(state: &StateVector, name: &str) -> Result<f64, OracleError> {
    let reg = state.layout().register(name)?;
    let mask = reg.label_mask();
    Ok(state
        .amplitudes()
        .iter()
        .enumerate()
        .filter(|(idx, _)| (*idx as u64) & mask != 0)
        .map(|(_, a)| a.norm_sqr())
        .sum())
}

/// Index-controlled probability oracle: applies F(l r k) on the block of
/// every index value k. Each controlled evolution decomposes into n_j
/// doubly-controlled exp(-i x O_j) gates with exponentially spaced x, plus
/// one ancilla-controlled offset rotation realizing the grid shift.
#[derive(Debug, Clone)]
pub struct ProbabilityOracle {
    func: HadamardTestFunction,
    grid: IndexGrid,
    r: f64,
    ell: i64,
}

impl ProbabilityOracle {
    pub fn new(
        func: HadamardTestFunction,
        grid: IndexGrid,
        r: f64,
        m: usize,
        ell: i64,
    ) -> Result<Self, OracleError> {
        if ell.unsigned_abs() as usize > m {
            return Err(OracleError::ScaleOutOfRange { ell, m });
        }
        if grid.m() != func.m() {
            return Err(OracleError::LengthMismatch {
                expected: func.m(),
                got: grid.m(),
            });
        }
        Ok(Self { func, grid, r, ell })
    }

    /// Index registers, then the test ancilla, then the system register.
    pub fn layout(&self) -> RegisterLayout {
        let mut specs: Vec<(String, usize)> = (1..=self.grid.m())
            .map(|j| (format!("x{j}"), self.grid.widths()[j - 1]))
            .collect();
        specs.push(("ancilla".to_string(), 1));
        specs.push(("system".to_string(), self.func.system_qubits()));
        let refs: Vec<(&str, usize)> = specs.iter().map(|(n, w)| (n.as_str(), *w)).collect();
        RegisterLayout::new(&refs).expect("positive widths")
    }

    pub fn total_qubits(&self) -> usize {
        self.grid.total_bits() + 1 + self.func.system_qubits()
    }

    /// One application; charges 1 U_psi query and n_j controlled evolutions
    /// (plus the offset rotation's duration) per observable.
    pub fn apply(
        &self,
        state: &mut StateVector,
        ledger: &mut ResourceLedger,
    ) -> Result<(), OracleError> {
        let layout = state.layout().clone();
        let anc = layout.register("ancilla")?.offset;
        let sys = layout.register("system")?.qubits();
        let m = self.grid.m();
        let scale = self.ell as f64 * self.r;

        // (S^dag H x U_psi), uncontrolled
        state.apply_gate(self.func.psi_oracle.unitary(), &sys, &[])?;
        ledger.charge_u_psi(1);
        self.func.psi_oracle.record_forward();
        state.apply_gate(&gates::hadamard(), &[anc], &[])?;
        if self.func.part == TestPart::Imaginary {
            state.apply_gate(&gates::phase_s_dag(), &[anc], &[])?;
        }

        // ancilla-controlled U(l r k): rightmost factor of Eq-6 order first
        if let Some(tail) = self.func.unitary.tail() {
            state.apply_gate(tail, &sys, &[anc])?;
        }
        for j in (0..m).rev() {
            let slot = &self.func.unitary.slots()[j];
            let n = self.grid.widths()[j];
            let reg = layout.register(&format!("x{}", j + 1))?.clone();
            // bit b contributes 2^(b-n) to the grid coordinate
            let mut gate_count = 0u64;
            let mut duration = 0.0;
            for b in 0..n {
                let x = 2.0 * scale * (2f64).powi(b as i32 - n as i32);
                let gate = slot.generator.exponential(x);
                state.apply_gate(&gate, &sys, &[anc, reg.offset + b])?;
                gate_count += 1;
                duration += x.abs();
            }
            // grid-shift offset, controlled on the ancilla alone
            let x_off = 2.0 * scale * (-0.5 + (2f64).powi(-(n as i32) - 1));
            let gate = slot.generator.exponential(x_off);
            state.apply_gate(&gate, &sys, &[anc])?;
            duration += x_off.abs();
            ledger.charge_evolution(j, gate_count, duration);
            if let Some(pre) = &slot.pre {
                state.apply_gate(pre, &sys, &[anc])?;
            }
        }

        state.apply_gate(&gates::hadamard(), &[anc], &[])?;
        ledger.record_qubits(layout.total_width());
        Ok(())
    }

    /// Extracts f(l r k) for every index value k from a state prepared as
    /// uniform-index x |0> x |0..0> and passed through `apply`.
    pub fn block_probabilities(&self, state: &StateVector) -> Result<Vec<f64>, OracleError> {
        let anc = state.layout().register("ancilla")?.offset;
        let lattice = self.grid.lattice_len();
        let index_mask = (lattice - 1) as u64;
        let mut f = vec![0.0; lattice];
        for (idx, a) in state.amplitudes().iter().enumerate() {
            if idx & (1usize << anc) != 0 {
                f[(idx as u64 & index_mask) as usize] += a.norm_sqr();
            }
        }
        for v in &mut f {
            *v *= lattice as f64;
        }
        Ok(f)
    }
}

/// Plan-derived parameters the phase oracle needs.
#[derive(Debug, Clone)]
pub struct PhaseOracleParams {
    pub grid: IndexGrid,
    /// Grid scale r.
    pub r: f64,
    /// Central-difference coefficients a_l for l in {-m, ..., m}.
    pub coefficients: Vec<f64>,
    /// Modeled probability-oracle invocations per unit phase query,
    /// from the idealized conversion.
    pub conversion_multiplier: u64,
    /// Modeled qubit footprint N + 1 + sum n_i.
    pub modeled_qubits: usize,
}

impl PhaseOracleParams {
    pub fn difference_order(&self) -> usize {
        debug_assert!(self.coefficients.len() % 2 == 1);
        self.coefficients.len() / 2
    }
}

/// Phase oracle for h(k) = sum_l a_l f(l r k), applied at arbitrary power:
/// |k> -> e^{i power h(k)} |k> on an index-only lattice state.
#[derive(Debug, Clone)]
pub struct PhaseOracle {
    grid: IndexGrid,
    h: Vec<f64>,
    sum_abs_coefficients: f64,
    conversion_multiplier: u64,
    modeled_qubits: usize,
    phase_error: f64,
    /// Grid scale and |a|-weighted mean |l|, for modeling the controlled
    /// evolutions inside each probability-oracle invocation.
    evolution_scale: Option<(f64, f64)>,
}

impl PhaseOracle {
    /// Analytic mode: f read out exactly through the dense overlap.
    pub fn analytic(
        func: &HadamardTestFunction,
        params: &PhaseOracleParams,
        mode: OracleMode,
    ) -> Result<Self, OracleError> {
        Self::validate_mode(mode)?;
        let h = Self::combine(params, |ell| {
            Ok(func.eval_on_lattice(&params.grid, ell as f64 * params.r))
        })?;
        Ok(Self::assemble(params, h, mode))
    }

    /// Circuit mode: f extracted from simulated probability-oracle circuits,
    /// one per scale l; the probability-to-phase conversion stays idealized.
    pub fn circuit(
        func: &HadamardTestFunction,
        params: &PhaseOracleParams,
        mode: OracleMode,
    ) -> Result<Self, OracleError> {
        Self::validate_mode(mode)?;
        let m = params.difference_order();
        let h = Self::combine(params, |ell| {
            let oracle = ProbabilityOracle::new(
                func.clone(),
                params.grid.clone(),
                params.r,
                m,
                ell,
            )?;
            let mut state = StateVector::zero(oracle.layout());
            for j in 1..=params.grid.m() {
                state.apply_hadamard_register(&format!("x{j}"))?;
            }
            // compile-time probing; per-run cost is charged by `apply`
            let mut scratch = ResourceLedger::new(func.m());
            oracle.apply(&mut state, &mut scratch)?;
            oracle.block_probabilities(&state)
        })?;
        Ok(Self::assemble(params, h, mode))
    }

    /// Synthetic oracle around explicit h values (used to exercise the
    /// exact-recovery paths).
    pub fn from_h_values(
        grid: IndexGrid,
        h: Vec<f64>,
        sum_abs_coefficients: f64,
        modeled_qubits: usize,
    ) -> Self {
        assert_eq!(h.len(), grid.lattice_len());
        Self {
            grid,
            h,
            sum_abs_coefficients,
            conversion_multiplier: 1,
            modeled_qubits,
            phase_error: 0.0,
            evolution_scale: None,
        }
    }

    fn validate_mode(mode: OracleMode) -> Result<(), OracleError> {
        if !(0.0..MAX_PHASE_ERROR).contains(&mode.phase_error) {
            return Err(OracleError::PhaseErrorTooLarge(mode.phase_error));
        }
        Ok(())
    }

    fn combine(
        params: &PhaseOracleParams,
        f_of_scale: impl Fn(i64) -> Result<Vec<f64>, OracleError> + Sync,
    ) -> Result<Vec<f64>, OracleError> {
        let m = params.difference_order() as i64;
        let active: Vec<(f64, i64)> = (-m..=m)
            .map(|ell| (params.coefficients[(ell + m) as usize], ell))
            .filter(|(a, _)| *a != 0.0)
            .collect();
        let evaluated: Result<Vec<(f64, Vec<f64>)>, OracleError> = active
            .par_iter()
            .map(|&(a, ell)| f_of_scale(ell).map(|f| (a, f)))
            .collect();
        let mut h = vec![0.0; params.grid.lattice_len()];
        for (a, f) in evaluated? {
            for (hv, fv) in h.iter_mut().zip(f) {
                *hv += a * fv;
            }
        }
        Ok(h)
    }

    fn assemble(params: &PhaseOracleParams, h: Vec<f64>, mode: OracleMode) -> Self {
        let sum_abs: f64 = params.coefficients.iter().map(|a| a.abs()).sum();
        let m = params.difference_order() as i64;
        let mean_abs_scale = if sum_abs > 0.0 {
            params
                .coefficients
                .iter()
                .enumerate()
                .map(|(idx, a)| a.abs() * (idx as i64 - m).unsigned_abs() as f64)
                .sum::<f64>()
                / sum_abs
        } else {
            0.0
        };
        Self {
            grid: params.grid.clone(),
            h,
            sum_abs_coefficients: sum_abs,
            conversion_multiplier: params.conversion_multiplier.max(1),
            modeled_qubits: params.modeled_qubits,
            phase_error: mode.phase_error,
            evolution_scale: Some((params.r, mean_abs_scale)),
        }
    }

    pub fn grid(&self) -> &IndexGrid {
        &self.grid
    }

    pub fn h_values(&self) -> &[f64] {
        &self.h
    }

    /// Unit phase queries charged for one application at this power:
    /// ceil(|power| sum_l |a_l| / 2 pi).
    pub fn unit_queries(&self, power: f64) -> u64 {
        (power.abs() * self.sum_abs_coefficients / (2.0 * std::f64::consts::PI)).ceil() as u64
    }

    /// Total modeled queries for one application, conversion included.
    pub fn queries_for(&self, power: f64) -> u64 {
        self.unit_queries(power) * self.conversion_multiplier
    }

    /// Ledger-only accounting for one application (used when repetitions
    /// sample from a cached state instead of re-running the circuit).
    ///
    /// Each modeled probability-oracle invocation carries n_j doubly
    /// controlled evolutions per observable; their |x| total per invocation
    /// is 3 |l| r (1 - 2^-n_j) with |l| taken as the |a|-weighted mean.
    pub fn charge(&self, power: f64, ledger: &mut ResourceLedger) {
        let queries = self.queries_for(power);
        ledger.charge_phase(queries);
        ledger.charge_u_psi(queries);
        ledger.record_qubits(self.modeled_qubits);
        if let Some((r, mean_scale)) = self.evolution_scale {
            for (j, &n) in self.grid.widths().iter().enumerate() {
                let per_query = 3.0 * mean_scale * r * (1.0 - (2f64).powi(-(n as i32)));
                ledger.charge_evolution(j, queries * n as u64, queries as f64 * per_query);
            }
        }
    }

    /// |k> -> e^{i (power h(k) + p_k)} |k>, where p_k is the deterministic
    /// injected conversion error with |p_k| <= eps'.
    pub fn apply(
        &self,
        state: &mut StateVector,
        power: f64,
        ledger: &mut ResourceLedger,
    ) -> Result<(), OracleError> {
        if state.layout().total_width() != self.grid.total_bits() {
            return Err(OracleError::StateWidthMismatch {
                expected: self.grid.total_bits(),
                got: state.layout().total_width(),
            });
        }
        for (idx, amp) in state.amplitudes_mut().iter_mut().enumerate() {
            let mut phase = power * self.h[idx];
            if self.phase_error > 0.0 {
                phase += self.phase_error * perturbation_pattern(idx);
            }
            *amp *= Complex64::from_polar(1.0, phase);
        }
        self.charge(power, ledger);
        Ok(())
    }
}

/// Fixed quasi-random pattern in [-1, 1] for the injected phase error.
fn perturbation_pattern(idx: usize) -> f64 {
    const GOLDEN_ANGLE: f64 = 2.399963229728653;
    ((idx as f64 + 1.0) * GOLDEN_ANGLE).cos()
}

/// Completes a normalized state to a full unitary with that state as its
/// first column (Householder QR, phase-corrected).
pub fn unitary_preparing(psi: &CVec) -> CMat {
    let dim = psi.len();
    let mut seed = CMat::identity(dim, dim);
    seed.set_column(0, psi);
    let qr = seed.qr();
    let r00 = qr.r()[(0, 0)];
    let mut q = qr.q();
    let mut col0 = q.column(0).into_owned();
    col0 *= r00;
    q.set_column(0, &col0);
    debug_assert!((&q.column(0).into_owned() - psi).norm() < 1e-10);
    q
}

/// Convenience: f for a plain observable set (imaginary-part test).
pub fn f_analytic(
    set: &ObservableSet,
    psi_oracle: &Arc<StatePrepOracle>,
    x: &[f64],
    ledger: &mut ResourceLedger,
) -> Result<f64, OracleError> {
    HadamardTestFunction::for_expectations(set, Arc::clone(psi_oracle))?.f_analytic(x, ledger)
}
