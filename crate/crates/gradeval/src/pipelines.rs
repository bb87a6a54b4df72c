//! End-to-end estimators: simultaneous expectation values (uniform and
//! arbitrary norm bounds), dynamic correlation functions, and the sign-matrix
//! lower-bound fixture.
//!
//! Every pipeline computes dense reference values next to its estimates;
//! the philosophy is estimate-vs-oracle, never estimate-vs-trust.

use crate::gradient::{
    median_aggregate, solve_plan_general, solve_plan_uniform, GradientError, GradientPlan,
    OutcomeSampler, RepetitionOutcome,
};
use crate::operators::{Body, Hamiltonian, Observable, ObservableSet, OperatorError, PauliTerm};
use crate::oracles::{
    unitary_preparing, HadamardTestFunction, OracleError, OracleKind, OracleMode, ParamUnitary,
    PhaseOracle, ResourceLedger, RotationSlot, StatePrepOracle, TestPart,
};
use crate::simcore::{CMat, CVec, RngStream, SimError};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::sync::Arc;
use thiserror::Error;

/// Streams for trial t use ids t * STREAM_STRIDE + repetition.
pub const STREAM_STRIDE: u64 = 1 << 20;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("plan needs {needed} qubits, budget is {budget}; clamping not permitted")]
    QubitBudget { needed: usize, budget: usize },
    #[error("state oracle acts on {got} qubits, operators on {expected}")]
    SystemMismatch { expected: usize, got: usize },
    #[error("correlation spec invalid: {0}")]
    InvalidCorrelation(String),
    #[error("fixture invalid: {0}")]
    InvalidFixture(String),
    #[error(transparent)]
    Gradient(#[from] GradientError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Knobs shared by all pipelines.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunOptions {
    pub mode: OracleMode,
    pub seed: u64,
    /// Dense-simulation budget: N + 1 + sum n_i must fit inside.
    pub max_qubits: usize,
    /// Permit shrinking index registers to fit the budget (flagged in the
    /// plan); without permission an oversized plan is an error.
    pub allow_clamp: bool,
    /// Keep per-repetition raw outcomes in the report.
    pub record_outcomes: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            mode: OracleMode::analytic(),
            seed: 1,
            max_qubits: 24,
            allow_clamp: false,
            record_outcomes: true,
        }
    }
}

/// Everything one run produces.
#[derive(Debug, Clone, Serialize)]
pub struct EstimationReport {
    pub target_ids: Vec<String>,
    pub estimates: Vec<f64>,
    /// Dense-oracle reference values.
    pub references: Vec<f64>,
    pub errors: Vec<f64>,
    /// Max component error <= epsilon.
    pub success: bool,
    pub plan: GradientPlan,
    pub ledger: ResourceLedger,
    pub seed: u64,
    pub mode: OracleMode,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub raw_outcomes: Option<Vec<RepetitionOutcome>>,
    /// Sign convention notes (correlation pipeline).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub convention: Option<String>,
}

/// One trial of a prepared harness.
#[derive(Debug, Clone)]
pub struct TrialResult {
    pub estimates: Vec<f64>,
    pub errors: Vec<f64>,
    pub success: bool,
    pub ledger: ResourceLedger,
    pub outcomes: Vec<RepetitionOutcome>,
}

/// A solved instance: plan, phase oracle, cached outcome distribution, and
/// reference values. Preparing once and running many seeded trials is the
/// backbone of every Monte-Carlo check.
#[derive(Debug, Clone)]
pub struct EstimationHarness {
    plan: GradientPlan,
    sampler: OutcomeSampler,
    references: Vec<f64>,
    target_ids: Vec<String>,
    /// Applied to the decoded gradient before reporting (correlation parts).
    estimate_sign: f64,
    mode: OracleMode,
    convention: Option<String>,
}

impl EstimationHarness {
    fn prepare(
        func: &HadamardTestFunction,
        mut plan: GradientPlan,
        references: Vec<f64>,
        target_ids: Vec<String>,
        estimate_sign: f64,
        convention: Option<String>,
        opts: &RunOptions,
    ) -> Result<Self, PipelineError> {
        let system_qubits = func.system_qubits();
        let needed = plan.modeled_qubits(system_qubits);
        if needed > opts.max_qubits {
            if !opts.allow_clamp {
                return Err(PipelineError::QubitBudget {
                    needed,
                    budget: opts.max_qubits,
                });
            }
            plan.clamp_to_qubit_budget(system_qubits, opts.max_qubits);
        }
        let params = plan.phase_oracle_params(system_qubits);
        let oracle = match opts.mode.kind {
            OracleKind::Analytic => PhaseOracle::analytic(func, &params, opts.mode)?,
            OracleKind::Circuit => PhaseOracle::circuit(func, &params, opts.mode)?,
        };
        let sampler = OutcomeSampler::prepare(&plan, &oracle)?;
        Ok(Self {
            plan,
            sampler,
            references,
            target_ids,
            estimate_sign,
            mode: opts.mode,
            convention,
        })
    }

    pub fn plan(&self) -> &GradientPlan {
        &self.plan
    }

    pub fn references(&self) -> &[f64] {
        &self.references
    }

    /// T repetitions, component-wise lower median, errors against the dense
    /// references. Trials are independent given distinct (seed, trial).
    pub fn run_trial(&self, seed: u64, trial: u64) -> Result<TrialResult, PipelineError> {
        let mut ledger = ResourceLedger::new(self.plan.dimension);
        let mut outcomes = Vec::with_capacity(self.plan.repetitions);
        for rep in 0..self.plan.repetitions {
            let mut rng = RngStream::new(seed, trial * STREAM_STRIDE + rep as u64);
            outcomes.push(self.sampler.sample(&mut rng, &mut ledger));
        }
        let rows: Vec<Vec<f64>> = outcomes.iter().map(|o| o.estimates.clone()).collect();
        let mut estimates = median_aggregate(&rows)?;
        for e in &mut estimates {
            *e *= self.estimate_sign;
        }
        let errors: Vec<f64> = estimates
            .iter()
            .zip(&self.references)
            .map(|(e, r)| (e - r).abs())
            .collect();
        let success = errors.iter().all(|&e| e <= self.plan.epsilon);
        Ok(TrialResult {
            estimates,
            errors,
            success,
            ledger,
            outcomes,
        })
    }

    pub fn report(&self, opts: &RunOptions) -> Result<EstimationReport, PipelineError> {
        let trial = self.run_trial(opts.seed, 0)?;
        Ok(EstimationReport {
            target_ids: self.target_ids.clone(),
            estimates: trial.estimates,
            references: self.references.clone(),
            errors: trial.errors,
            success: trial.success,
            plan: self.plan.clone(),
            ledger: trial.ledger,
            seed: opts.seed,
            mode: self.mode,
            raw_outcomes: opts.record_outcomes.then_some(trial.outcomes),
            convention: self.convention.clone(),
        })
    }
}

fn dense_expectation(psi: &CVec, operator: &CMat) -> f64 {
    psi.dotc(&(operator * psi)).re
}

/// Harness for <psi|O_j|psi> estimation. Uniform-bound plan (c = 2) when all
/// declared bounds are 1, general plan with z = 2B otherwise.
pub fn prepare_expectations(
    set: &ObservableSet,
    psi_oracle: &Arc<StatePrepOracle>,
    epsilon: f64,
    delta: f64,
    opts: &RunOptions,
) -> Result<EstimationHarness, PipelineError> {
    if psi_oracle.qubits() != set.system_qubits() {
        return Err(PipelineError::SystemMismatch {
            expected: set.system_qubits(),
            got: psi_oracle.qubits(),
        });
    }
    let plan = if set.uniform_unit_bounds() {
        solve_plan_uniform(set.len(), epsilon, delta, 2.0)?
    } else {
        solve_plan_general(&set.norm_bounds(), epsilon, delta)?
    };
    let func = HadamardTestFunction::for_expectations(set, Arc::clone(psi_oracle))?;
    let references: Vec<f64> = set
        .iter()
        .map(|o| dense_expectation(psi_oracle.psi(), &o.dense()))
        .collect();
    let target_ids = set.iter().map(|o| o.id.clone()).collect();
    EstimationHarness::prepare(&func, plan, references, target_ids, 1.0, None, opts)
}

/// One-shot expectation-value estimation report.
pub fn estimate_expectations(
    set: &ObservableSet,
    psi_oracle: &Arc<StatePrepOracle>,
    epsilon: f64,
    delta: f64,
    opts: &RunOptions,
) -> Result<EstimationReport, PipelineError> {
    prepare_expectations(set, psi_oracle, epsilon, delta, opts)?.report(opts)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorrelationPart {
    Real,
    Imaginary,
}

/// One probe operator A_j with its time point t_j.
#[derive(Debug, Clone)]
pub struct CorrelationProbe {
    pub operator: Observable,
    pub time: f64,
}

/// C_{A_j,B}(t_j) = <psi| U(0,t_j) A_j^dag U(t_j,0) B |psi> for Hermitian,
/// unitary probes A_j (times nondecreasing) and source B.
#[derive(Debug, Clone)]
pub struct CorrelationSpec {
    pub hamiltonian: Hamiltonian,
    pub probes: Vec<CorrelationProbe>,
    pub source: Observable,
    pub part: CorrelationPart,
}

impl CorrelationSpec {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.probes.is_empty() {
            return Err(PipelineError::InvalidCorrelation("no probes".into()));
        }
        let dim = self.hamiltonian.dim();
        for p in &self.probes {
            if p.operator.dim() != dim {
                return Err(PipelineError::InvalidCorrelation(format!(
                    "probe `{}` dimension mismatch",
                    p.operator.id
                )));
            }
            let dev = crate::simcore::unitarity_deviation(&p.operator.dense());
            if dev > 1e-10 {
                return Err(PipelineError::InvalidCorrelation(format!(
                    "probe `{}` is not unitary (dev {dev:.3e})",
                    p.operator.id
                )));
            }
        }
        if self.source.dim() != dim {
            return Err(PipelineError::InvalidCorrelation(
                "source dimension mismatch".into(),
            ));
        }
        let dev = crate::simcore::unitarity_deviation(&self.source.dense());
        if dev > 1e-10 {
            return Err(PipelineError::InvalidCorrelation(format!(
                "source is not unitary (dev {dev:.3e})"
            )));
        }
        for w in self.probes.windows(2) {
            if w[1].time < w[0].time {
                return Err(PipelineError::InvalidCorrelation(
                    "times must be nondecreasing".into(),
                ));
            }
        }
        Ok(())
    }

    /// Dense references for the requested part.
    pub fn reference_values(&self, psi: &CVec) -> Result<Vec<f64>, PipelineError> {
        Ok(self
            .complex_references(psi)?
            .into_iter()
            .map(|c| match self.part {
                CorrelationPart::Real => c.re,
                CorrelationPart::Imaginary => c.im,
            })
            .collect())
    }

    pub fn complex_references(&self, psi: &CVec) -> Result<Vec<Complex64>, PipelineError> {
        let b = self.source.dense();
        self.probes
            .iter()
            .map(|p| {
                let back = self.hamiltonian.time_evolution(p.time, 0.0)?; // U(0, t)
                let fwd = self.hamiltonian.time_evolution(0.0, p.time)?; // U(t, 0)
                let op = &back * p.operator.dense().adjoint() * &fwd * &b;
                Ok(psi.dotc(&(op * psi)))
            })
            .collect()
    }

    /// The interleaved parameterized unitary
    /// U(x) = [prod_j U(t_{j-1}, t_j) exp(-2i x_j A_j)] U(t_M, t_0) B.
    pub fn param_unitary(&self) -> Result<ParamUnitary, PipelineError> {
        let mut slots = Vec::with_capacity(self.probes.len());
        let mut t_prev = 0.0;
        for p in &self.probes {
            // U(t_{j-1}, t_j) evolves from t_j back to t_{j-1}
            let pre = self.hamiltonian.time_evolution(p.time, t_prev)?;
            slots.push(RotationSlot {
                pre: Some(pre),
                generator: p.operator.propagator().clone(),
            });
            t_prev = p.time;
        }
        let tail = self.hamiltonian.time_evolution(0.0, t_prev)? * self.source.dense();
        Ok(ParamUnitary::new(slots, Some(tail)))
    }
}

/// Harness for a collection of dynamic correlation functions.
///
/// Convention (validated against the dense references): the gradient of the
/// imaginary-component test yields Re C; the imaginary part is minus the
/// gradient of the real-component test.
pub fn prepare_correlations(
    spec: &CorrelationSpec,
    psi_oracle: &Arc<StatePrepOracle>,
    epsilon: f64,
    delta: f64,
    opts: &RunOptions,
) -> Result<EstimationHarness, PipelineError> {
    spec.validate()?;
    if psi_oracle.dim() != spec.hamiltonian.dim() {
        return Err(PipelineError::SystemMismatch {
            expected: spec.hamiltonian.dim().trailing_zeros() as usize,
            got: psi_oracle.qubits(),
        });
    }
    let (test_part, sign, convention) = match spec.part {
        CorrelationPart::Real => (
            TestPart::Imaginary,
            1.0,
            "Re C = +gradient of the imaginary-component Hadamard test",
        ),
        CorrelationPart::Imaginary => (
            TestPart::Real,
            -1.0,
            "Im C = -gradient of the real-component Hadamard test",
        ),
    };
    let func =
        HadamardTestFunction::new(spec.param_unitary()?, Arc::clone(psi_oracle), test_part)?;
    // probes are Hermitian and unitary, so their norms are 1 and c = 2 holds
    let plan = solve_plan_uniform(spec.probes.len(), epsilon, delta, 2.0)?;
    let references = spec.reference_values(psi_oracle.psi())?;
    let target_ids = spec
        .probes
        .iter()
        .map(|p| format!("C[{},{}](t={})", p.operator.id, spec.source.id, p.time))
        .collect();
    EstimationHarness::prepare(
        &func,
        plan,
        references,
        target_ids,
        sign,
        Some(convention.to_string()),
        opts,
    )
}

/// One-shot correlation estimation report.
pub fn estimate_correlations(
    spec: &CorrelationSpec,
    psi_oracle: &Arc<StatePrepOracle>,
    epsilon: f64,
    delta: f64,
    opts: &RunOptions,
) -> Result<EstimationReport, PipelineError> {
    prepare_correlations(spec, psi_oracle, epsilon, delta, opts)?.report(opts)
}

/// Sign-matrix fixture: a state psi(U_p) built from a sample oracle U_p and
/// the sign unitary U_A, for which (A p)_i = <Z_i> exactly.
#[derive(Debug, Clone)]
pub struct LowerBoundInstance {
    pub sign_matrix: Vec<Vec<i8>>,
    pub distribution: Vec<f64>,
    pub observable_set: ObservableSet,
    pub psi_oracle: Arc<StatePrepOracle>,
    /// (A p)_i, the exact expectation of Z_i.
    pub targets: Vec<f64>,
    pub system_qubits: usize,
}

/// Builds the fixture: sign register of M qubits, index register of
/// ceil(log2 M) qubits, one purification qubit held in |0>.
pub fn build_lowerbound_instance(
    sign_matrix: &[Vec<i8>],
    p: &[f64],
) -> Result<LowerBoundInstance, PipelineError> {
    let m = sign_matrix.len();
    if m == 0 || p.len() != m {
        return Err(PipelineError::InvalidFixture(
            "need a square sign matrix and matching p".into(),
        ));
    }
    for row in sign_matrix {
        if row.len() != m || row.iter().any(|&v| v != 1 && v != -1) {
            return Err(PipelineError::InvalidFixture(
                "sign matrix entries must be +1 or -1".into(),
            ));
        }
    }
    if p.iter().any(|&v| v < 0.0) || (p.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
        return Err(PipelineError::InvalidFixture(
            "p must be a probability vector (1e-12 tolerance)".into(),
        ));
    }
    let index_bits = (usize::BITS - (m - 1).leading_zeros()).max(1) as usize;
    let system_qubits = m + index_bits + 1;
    if system_qubits > 10 {
        return Err(PipelineError::InvalidFixture(format!(
            "{system_qubits} qubits exceed the dense fixture cap"
        )));
    }
    let dim = 1usize << system_qubits;

    // U_p on index (x) purification: |0>|0> -> sum_j sqrt(p_j) |j>|0>
    let sub_dim = 1usize << (index_bits + 1);
    let mut target = CVec::zeros(sub_dim);
    for (j, &pj) in p.iter().enumerate() {
        target[j] = Complex64::new(pj.sqrt(), 0.0);
    }
    let u_p = unitary_preparing(&target);
    // index+purification occupy the bits above the sign register
    let u_p_full = u_p.kronecker(&crate::simcore::gates::identity(1 << m));

    // U_A flips sign qubit i on branch j exactly when A_ij = -1
    let mut u_a = CMat::zeros(dim, dim);
    let index_mask = ((1usize << index_bits) - 1) << m;
    for basis in 0..dim {
        let j = (basis & index_mask) >> m;
        let flips = if j < m {
            (0..m).fold(0usize, |acc, i| {
                acc | (usize::from(sign_matrix[i][j] == -1) << i)
            })
        } else {
            0
        };
        u_a[(basis ^ flips, basis)] = Complex64::new(1.0, 0.0);
    }

    let psi_oracle = StatePrepOracle::from_unitary(&u_a * u_p_full)?;

    let observables = (0..m)
        .map(|i| {
            let letters: String = (0..system_qubits)
                .map(|q| if q == i { 'Z' } else { 'I' })
                .collect();
            Observable::new(
                format!("Z{}", i + 1),
                Body::Pauli(vec![PauliTerm {
                    weight: 1.0,
                    letters,
                }]),
                1.0,
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    let observable_set = ObservableSet::new(observables)?;

    let targets: Vec<f64> = (0..m)
        .map(|i| {
            (0..m)
                .map(|j| sign_matrix[i][j] as f64 * p[j])
                .sum::<f64>()
        })
        .collect();

    Ok(LowerBoundInstance {
        sign_matrix: sign_matrix.to_vec(),
        distribution: p.to_vec(),
        observable_set,
        psi_oracle,
        targets,
        system_qubits,
    })
}

impl LowerBoundInstance {
    /// Exact <Z_i> from the dense state.
    pub fn dense_expectations(&self) -> Vec<f64> {
        self.observable_set
            .iter()
            .map(|o| dense_expectation(self.psi_oracle.psi(), &o.dense()))
            .collect()
    }

    /// max_i |(A p)_i - <Z_i>|.
    pub fn identity_deviation(&self) -> f64 {
        self.targets
            .iter()
            .zip(self.dense_expectations())
            .map(|(t, e)| (t - e).abs())
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simcore::gates;

    fn pauli_obs(id: &str, text: &str) -> Observable {
        Observable::from_pauli_text(id, text, 1.0).unwrap()
    }

    fn basis_state(qubits: usize, index: usize) -> Arc<StatePrepOracle> {
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << qubits];
        amps[index] = Complex64::new(1.0, 0.0);
        StatePrepOracle::from_state(&amps).unwrap()
    }

    fn plus_state() -> Arc<StatePrepOracle> {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        StatePrepOracle::from_state(&[Complex64::new(s, 0.0), Complex64::new(s, 0.0)]).unwrap()
    }

    #[test]
    fn estimate_single_z_on_zero_state() {
        let set = ObservableSet::new(vec![pauli_obs("z", "Z")]).unwrap();
        let psi = basis_state(1, 0);
        let harness =
            prepare_expectations(&set, &psi, 0.1, 1.0 / 3.0, &RunOptions::default()).unwrap();
        assert_eq!(harness.references(), &[1.0]);
        let mut successes = 0;
        let trials = 60;
        for t in 0..trials {
            if harness.run_trial(11, t).unwrap().success {
                successes += 1;
            }
        }
        assert!(
            successes as f64 / trials as f64 >= 2.0 / 3.0,
            "{successes}/{trials}"
        );
    }

    #[test]
    fn estimate_two_z_targets() {
        // O = (Z on qubit 1, Z on qubit 2), psi = |01> (qubit 1 in 0,
        // qubit 2 in 1): targets (1, -1)
        let set = ObservableSet::new(vec![pauli_obs("z1", "ZI"), pauli_obs("z2", "IZ")]).unwrap();
        let psi = basis_state(2, 0b10);
        let report =
            estimate_expectations(&set, &psi, 0.1, 1.0 / 3.0, &RunOptions::default()).unwrap();
        assert!((report.references[0] - 1.0).abs() < 1e-12);
        assert!((report.references[1] + 1.0).abs() < 1e-12);
        assert!(report.success, "errors {:?}", report.errors);
        assert!(report.ledger.u_psi_queries > 0);
    }

    #[test]
    fn estimate_x_and_z_on_plus_state() {
        let set = ObservableSet::new(vec![pauli_obs("x", "X"), pauli_obs("z", "Z")]).unwrap();
        let psi = plus_state();
        let report =
            estimate_expectations(&set, &psi, 0.1, 1.0 / 3.0, &RunOptions::default()).unwrap();
        assert!((report.references[0] - 1.0).abs() < 1e-12);
        assert!(report.references[1].abs() < 1e-12);
        assert!(report.success, "errors {:?}", report.errors);
    }

    #[test]
    fn general_norm_path_is_selected_and_works() {
        let set = ObservableSet::new(vec![
            pauli_obs("x", "X"),
            Observable::from_pauli_text("z4", "4*Z", 4.0).unwrap(),
        ])
        .unwrap();
        let psi = plus_state();
        let report =
            estimate_expectations(&set, &psi, 0.1, 1.0 / 3.0, &RunOptions::default()).unwrap();
        assert!(report.plan.uniform_c.is_none(), "general path expected");
        assert_eq!(report.plan.z, vec![2.0, 8.0]);
        assert!((report.references[0] - 1.0).abs() < 1e-12);
        assert!(report.references[1].abs() < 1e-12);
        assert!(report.success, "errors {:?}", report.errors);
    }

    #[test]
    fn qubit_budget_enforced_without_clamp() {
        let set = ObservableSet::new(vec![pauli_obs("z", "Z")]).unwrap();
        let psi = basis_state(1, 0);
        let opts = RunOptions {
            max_qubits: 6,
            ..Default::default()
        };
        let err = estimate_expectations(&set, &psi, 0.1, 1.0 / 3.0, &opts).unwrap_err();
        assert!(matches!(err, PipelineError::QubitBudget { .. }));
        let opts = RunOptions {
            max_qubits: 6,
            allow_clamp: true,
            ..Default::default()
        };
        let report = estimate_expectations(&set, &psi, 0.1, 1.0 / 3.0, &opts).unwrap();
        assert!(report.plan.clamped);
        assert!(report.plan.modeled_qubits(1) <= 6);
    }

    #[test]
    fn reports_are_deterministic_per_seed() {
        let set = ObservableSet::new(vec![pauli_obs("x", "X"), pauli_obs("z", "Z")]).unwrap();
        let psi = plus_state();
        let opts = RunOptions {
            seed: 42,
            ..Default::default()
        };
        let a = estimate_expectations(&set, &psi, 0.1, 1.0 / 3.0, &opts).unwrap();
        let b = estimate_expectations(&set, &psi, 0.1, 1.0 / 3.0, &opts).unwrap();
        assert_eq!(a.estimates, b.estimates);
        assert_eq!(a.ledger, b.ledger);
        assert_eq!(a.raw_outcomes, b.raw_outcomes);
    }

    fn xx_correlation_spec(part: CorrelationPart, t: f64) -> CorrelationSpec {
        CorrelationSpec {
            hamiltonian: Hamiltonian::new(Body::from_pauli_text("Z").unwrap()).unwrap(),
            probes: vec![CorrelationProbe {
                operator: pauli_obs("a", "X"),
                time: t,
            }],
            source: pauli_obs("b", "X"),
            part,
        }
    }

    #[test]
    fn correlation_identity_case() {
        // all times 0, A = B = I: C = 1
        let spec = CorrelationSpec {
            hamiltonian: Hamiltonian::new(Body::Dense(gates::identity(2))).unwrap(),
            probes: vec![
                CorrelationProbe {
                    operator: pauli_obs("a1", "I"),
                    time: 0.0,
                },
                CorrelationProbe {
                    operator: pauli_obs("a2", "I"),
                    time: 0.0,
                },
            ],
            source: pauli_obs("b", "I"),
            part: CorrelationPart::Real,
        };
        let psi = basis_state(1, 0);
        let refs = spec.reference_values(psi.psi()).unwrap();
        assert!(refs.iter().all(|&r| (r - 1.0).abs() < 1e-12));
    }

    /// Closed form: H=Z, A=B=X, psi=|0>: C(t) = e^{2it}; at t = pi/4 the
    /// real part is 0 and the imaginary part is 1.
    #[test]
    fn correlation_closed_form_references() {
        let t = std::f64::consts::FRAC_PI_4;
        let psi = basis_state(1, 0);
        let spec_re = xx_correlation_spec(CorrelationPart::Real, t);
        let spec_im = xx_correlation_spec(CorrelationPart::Imaginary, t);
        let c = spec_re.complex_references(psi.psi()).unwrap()[0];
        assert!((c - Complex64::new(0.0, 1.0)).norm() < 1e-12, "{c}");
        assert!(spec_re.reference_values(psi.psi()).unwrap()[0].abs() < 1e-12);
        assert!((spec_im.reference_values(psi.psi()).unwrap()[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn correlation_estimates_both_parts() {
        let t = std::f64::consts::FRAC_PI_4;
        let psi = basis_state(1, 0);
        for part in [CorrelationPart::Real, CorrelationPart::Imaginary] {
            let spec = xx_correlation_spec(part, t);
            let report =
                estimate_correlations(&spec, &psi, 0.1, 1.0 / 3.0, &RunOptions::default())
                    .unwrap();
            assert!(report.success, "{part:?}: errors {:?}", report.errors);
            assert!(report.convention.is_some());
        }
    }

    #[test]
    fn correlation_two_qubit_instance_with_gradient() {
        let ham = Hamiltonian::new(Body::from_pauli_text("0.8*ZI + 0.6*XX").unwrap()).unwrap();
        let spec = CorrelationSpec {
            hamiltonian: ham,
            probes: vec![
                CorrelationProbe {
                    operator: pauli_obs("a1", "XI"),
                    time: 0.3,
                },
                CorrelationProbe {
                    operator: pauli_obs("a2", "ZZ"),
                    time: 0.7,
                },
            ],
            source: pauli_obs("b", "XI"),
            part: CorrelationPart::Real,
        };
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let psi = StatePrepOracle::from_state(&[
            Complex64::new(s, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(s, 0.0),
            Complex64::new(0.0, 0.0),
        ])
        .unwrap();
        let harness =
            prepare_correlations(&spec, &psi, 0.1, 1.0 / 3.0, &RunOptions::default()).unwrap();
        let mut successes = 0;
        let trials = 30;
        for t in 0..trials {
            if harness.run_trial(19, t).unwrap().success {
                successes += 1;
            }
        }
        assert!(
            successes as f64 / trials as f64 >= 2.0 / 3.0,
            "{successes}/{trials}"
        );
    }

    #[test]
    fn correlation_validation_errors() {
        let mut spec = xx_correlation_spec(CorrelationPart::Real, 0.5);
        spec.probes.push(CorrelationProbe {
            operator: pauli_obs("a2", "X"),
            time: 0.1, // decreasing
        });
        assert!(matches!(
            spec.validate(),
            Err(PipelineError::InvalidCorrelation(_))
        ));
        let mut spec = xx_correlation_spec(CorrelationPart::Real, 0.5);
        spec.probes[0].operator = Observable::from_pauli_text("half", "0.5*X", 0.5).unwrap();
        assert!(matches!(
            spec.validate(),
            Err(PipelineError::InvalidCorrelation(_))
        ));
    }

    #[test]
    fn fixture_m2_example() {
        let a = vec![vec![1i8, 1], vec![1, -1]];
        let p = vec![0.5, 0.5];
        let inst = build_lowerbound_instance(&a, &p).unwrap();
        assert_eq!(inst.targets, vec![1.0, 0.0]);
        assert!(inst.identity_deviation() < 1e-12);
    }

    #[test]
    fn fixture_all_plus_rows() {
        let a = vec![vec![1i8, 1, 1], vec![1, 1, 1], vec![1, 1, 1]];
        let p = vec![0.2, 0.5, 0.3];
        let inst = build_lowerbound_instance(&a, &p).unwrap();
        assert!(inst.targets.iter().all(|&t| (t - 1.0).abs() < 1e-15));
        assert!(inst.identity_deviation() < 1e-12);
    }

    #[test]
    fn fixture_point_mass_reads_off_column() {
        let a = vec![vec![1i8, -1], vec![-1, -1]];
        let p = vec![0.0, 1.0];
        let inst = build_lowerbound_instance(&a, &p).unwrap();
        assert_eq!(inst.targets, vec![-1.0, -1.0]);
        assert!(inst.identity_deviation() < 1e-12);
    }

    #[test]
    fn fixture_random_identity_holds() {
        let mut rng = RngStream::new(400, 0);
        for trial in 0..60 {
            let m = 2 + trial % 3;
            let a: Vec<Vec<i8>> = (0..m)
                .map(|_| {
                    (0..m)
                        .map(|_| if rng.uniform() < 0.5 { 1 } else { -1 })
                        .collect()
                })
                .collect();
            let mut p: Vec<f64> = (0..m).map(|_| rng.uniform() + 1e-3).collect();
            let total: f64 = p.iter().sum();
            for v in &mut p {
                *v /= total;
            }
            let inst = build_lowerbound_instance(&a, &p).unwrap();
            assert!(
                inst.identity_deviation() < 1e-11,
                "trial {trial}: {}",
                inst.identity_deviation()
            );
        }
    }

    #[test]
    fn fixture_estimation_end_to_end() {
        let a = vec![vec![1i8, -1], vec![-1, 1]];
        let p = vec![0.25, 0.75];
        let inst = build_lowerbound_instance(&a, &p).unwrap();
        let harness = prepare_expectations(
            &inst.observable_set,
            &inst.psi_oracle,
            0.1,
            1.0 / 3.0,
            &RunOptions::default(),
        )
        .unwrap();
        for (r, t) in harness.references().iter().zip(&inst.targets) {
            assert!((r - t).abs() < 1e-11);
        }
        let mut successes = 0;
        let trials = 30;
        for t in 0..trials {
            if harness.run_trial(23, t).unwrap().success {
                successes += 1;
            }
        }
        assert!(successes as f64 / trials as f64 >= 2.0 / 3.0);
    }

    #[test]
    fn fixture_rejects_bad_inputs() {
        assert!(build_lowerbound_instance(&[], &[]).is_err());
        let a = vec![vec![1i8, 2], vec![1, 1]];
        assert!(build_lowerbound_instance(&a, &[0.5, 0.5]).is_err());
        let a = vec![vec![1i8, 1], vec![1, 1]];
        assert!(build_lowerbound_instance(&a, &[0.5, 0.6]).is_err());
    }
}
