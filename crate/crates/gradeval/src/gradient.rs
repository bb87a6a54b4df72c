//! The gradient estimation engine: parameter solver, central-difference
//! coefficients, the Fourier read-out routine, decode, and median
//! aggregation.
//!
//! All logarithms in the parameter formulas are base 2; the plan records
//! this so reports are self-describing.

use crate::oracles::{OracleError, PhaseOracle, PhaseOracleParams, ResourceLedger};
use crate::simcore::{grid_value, IndexGrid, RngStream, SimError, StateVector};
use num::{BigInt, BigRational, One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Lemma-level constants: 1/a^2 + 1/b <= 1/2304 with b = 3840 fixed by the
/// smoothness bound (bad-point fraction 1/3840), which forces a >= 76.
pub const A_CONST: f64 = 76.0;
pub const B_CONST: f64 = 3840.0;

#[derive(Debug, Error)]
pub enum GradientError {
    #[error("need at least one component, got M = {0}")]
    BadDimension(usize),
    #[error("epsilon {eps} outside (0, {limit})")]
    EpsilonOutOfRange { eps: f64, limit: f64 },
    #[error("delta {0} outside (0, 1)")]
    DeltaOutOfRange(f64),
    #[error("all norm bounds must be positive")]
    NonPositiveBound,
    #[error("difference order must be >= 1")]
    BadOrder,
    #[error("exactness system is singular")]
    SingularSystem,
    #[error("range condition N_i > 2 S r z_i violated for component {0}")]
    RangeCondition(usize),
    #[error("phase oracle grid {got:?} does not match plan widths {expected:?}")]
    GridMismatch {
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("empty estimate matrix")]
    EmptyEstimates,
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Every solved parameter of one estimation run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GradientPlan {
    /// Number of gradient components M.
    pub dimension: usize,
    /// Per-component derivative bounds z_i (z = 2B; uniform case z_i = c).
    pub z: Vec<f64>,
    /// Scalar bound c on the uniform path, absent on the general path.
    pub uniform_c: Option<f64>,
    /// Difference order parameter m.
    pub order: usize,
    /// Grid scale r.
    pub r: f64,
    /// Fractional power scale S = 4/(epsilon r), held exactly.
    pub s: f64,
    /// Index register widths n_i.
    pub widths: Vec<usize>,
    /// Repetition count T = ceil(18 ln(2M/delta)).
    pub repetitions: usize,
    /// Central-difference coefficients a_l, l in {-m, ..., m}.
    pub coefficients: Vec<f64>,
    pub delta: f64,
    pub epsilon: f64,
    /// Lemma constants with 1/a^2 + 1/b <= 1/2304.
    pub a_const: f64,
    pub b_const: f64,
    /// Largest oracle argument magnitude, x_max = r m.
    pub x_max: f64,
    /// Modeled probability-oracle invocations per unit phase query.
    pub conversion_multiplier: u64,
    /// Base of every log in the formulas above.
    pub log_base: u32,
    /// Set when a qubit budget forced the widths below their solved values.
    pub clamped: bool,
}

impl GradientPlan {
    pub fn grid(&self) -> IndexGrid {
        IndexGrid::new(self.widths.clone())
    }

    /// N + 1 + sum_i n_i qubits for a system of `system_qubits`.
    pub fn modeled_qubits(&self, system_qubits: usize) -> usize {
        system_qubits + 1 + self.widths.iter().sum::<usize>()
    }

    /// Unit phase queries charged per repetition: ceil(S sum_l |a_l|).
    pub fn unit_queries_per_repetition(&self) -> u64 {
        let sum_abs: f64 = self.coefficients.iter().map(|a| a.abs()).sum();
        (self.s * sum_abs).ceil() as u64
    }

    pub fn phase_oracle_params(&self, system_qubits: usize) -> PhaseOracleParams {
        PhaseOracleParams {
            grid: self.grid(),
            r: self.r,
            coefficients: self.coefficients.clone(),
            conversion_multiplier: self.conversion_multiplier,
            modeled_qubits: self.modeled_qubits(system_qubits),
        }
    }

    /// Reduces index widths until N + 1 + sum n_i fits the budget.
    /// Widths shrink largest-first and never below 1.
    pub fn clamp_to_qubit_budget(&mut self, system_qubits: usize, max_qubits: usize) -> bool {
        let mut changed = false;
        while self.modeled_qubits(system_qubits) > max_qubits {
            let victim = match self
                .widths
                .iter()
                .enumerate()
                .filter(|(_, &w)| w > 1)
                .max_by_key(|(_, &w)| w)
                .map(|(i, _)| i)
            {
                Some(v) => v,
                None => break,
            };
            self.widths[victim] -= 1;
            changed = true;
        }
        if changed {
            self.clamped = true;
        }
        changed
    }

    /// The rescaled reading of the read-out range condition,
    /// N_i > 2 S r z_i for every component.
    pub fn range_condition_ok(&self) -> bool {
        self.widths.iter().zip(&self.z).all(|(&n, &z)| {
            let n_i = (1u64 << n) as f64;
            n_i > 2.0 * self.s * self.r * z
        })
    }
}

fn log2_ceil_at_least_one(x: f64) -> usize {
    (x.log2().ceil() as i64).max(1) as usize
}

fn repetitions_for(dimension: usize, delta: f64) -> usize {
    (18.0 * (2.0 * dimension as f64 / delta).ln()).ceil() as usize
}

fn conversion_multiplier_for(planned_queries: u64, epsilon: f64) -> u64 {
    ((planned_queries as f64 / epsilon).log2().ceil() as i64).max(1) as u64
}

fn finish_plan(
    dimension: usize,
    z: Vec<f64>,
    uniform_c: Option<f64>,
    order: usize,
    r: f64,
    epsilon: f64,
    delta: f64,
) -> Result<GradientPlan, GradientError> {
    let s = 4.0 / (epsilon * r);
    let widths: Vec<usize> = z
        .iter()
        .map(|&zi| log2_ceil_at_least_one(12.0 * zi / epsilon))
        .collect();
    let repetitions = repetitions_for(dimension, delta);
    let coefficients = difference_coefficients(order)?;
    let mut plan = GradientPlan {
        dimension,
        z,
        uniform_c,
        order,
        r,
        s,
        widths,
        repetitions,
        coefficients,
        delta,
        epsilon,
        a_const: A_CONST,
        b_const: B_CONST,
        x_max: r * order as f64,
        conversion_multiplier: 1,
        log_base: 2,
        clamped: false,
    };
    plan.conversion_multiplier = conversion_multiplier_for(
        plan.repetitions as u64 * plan.unit_queries_per_repetition(),
        epsilon,
    );
    if let Some(i) = (0..dimension).find(|&i| {
        let n_i = (1u64 << plan.widths[i]) as f64;
        n_i <= 2.0 * plan.s * plan.r * plan.z[i]
    }) {
        return Err(GradientError::RangeCondition(i));
    }
    Ok(plan)
}

/// Uniform-bound plan: m = ceil(log2(c sqrt(M)/eps)),
/// 1/r = 9 c m sqrt(M) (81*8*42 pi c m sqrt(M)/eps)^(1/2m), S = 4/(eps r),
/// n_i = ceil(log2(12 c/eps)).
pub fn solve_plan_uniform(
    dimension: usize,
    epsilon: f64,
    delta: f64,
    c: f64,
) -> Result<GradientPlan, GradientError> {
    if dimension < 1 {
        return Err(GradientError::BadDimension(dimension));
    }
    if !(epsilon > 0.0 && epsilon <= c) {
        return Err(GradientError::EpsilonOutOfRange {
            eps: epsilon,
            limit: c,
        });
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(GradientError::DeltaOutOfRange(delta));
    }
    let sqrt_m = (dimension as f64).sqrt();
    let order = log2_ceil_at_least_one(c * sqrt_m / epsilon);
    let m = order as f64;
    let inner = 81.0 * 8.0 * 42.0 * std::f64::consts::PI * c * m * sqrt_m / epsilon;
    let r_inv = 9.0 * c * m * sqrt_m * inner.powf(1.0 / (2.0 * m));
    finish_plan(
        dimension,
        vec![c; dimension],
        Some(c),
        order,
        1.0 / r_inv,
        epsilon,
        delta,
    )
}

/// General-bound plan for z = 2B: m = ceil(log2(||z||/eps)),
/// 1/r = 9 ||z|| sqrt(m/2) (64*8 a pi ||z|| sqrt(m/2)/eps)^(1/2m),
/// n_i = ceil(log2(12 z_i/eps)).
pub fn solve_plan_general(
    bounds: &[f64],
    epsilon: f64,
    delta: f64,
) -> Result<GradientPlan, GradientError> {
    let dimension = bounds.len();
    if dimension < 1 {
        return Err(GradientError::BadDimension(dimension));
    }
    if bounds.iter().any(|&b| b <= 0.0 || !b.is_finite()) {
        return Err(GradientError::NonPositiveBound);
    }
    let z: Vec<f64> = bounds.iter().map(|&b| 2.0 * b).collect();
    let z_norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(epsilon > 0.0 && epsilon < z_norm) {
        return Err(GradientError::EpsilonOutOfRange {
            eps: epsilon,
            limit: z_norm,
        });
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(GradientError::DeltaOutOfRange(delta));
    }
    let order = log2_ceil_at_least_one(z_norm / epsilon);
    let m = order as f64;
    let half_m_sqrt = (m / 2.0).sqrt();
    let inner = 64.0 * 8.0 * A_CONST * std::f64::consts::PI * z_norm * half_m_sqrt / epsilon;
    let r_inv = 9.0 * z_norm * half_m_sqrt * inner.powf(1.0 / (2.0 * m));
    finish_plan(dimension, z, None, order, 1.0 / r_inv, epsilon, delta)
}

/// Exact rational solve of the central-difference exactness system:
/// antisymmetric a with sum_l a_l l = 1 and sum_l a_l l^p = 0 for
/// p in {0, 2, 3, ..., 2m}.
pub fn difference_coefficients_exact(order: usize) -> Result<Vec<BigRational>, GradientError> {
    if order < 1 {
        return Err(GradientError::BadOrder);
    }
    let m = order;
    // Antisymmetry disposes of even p; odd p = 2q+1 leaves the m x m system
    // sum_{l=1..m} 2 a_l l^(2q+1) = delta_{q,0}.
    let mut a: Vec<Vec<BigRational>> = (0..m)
        .map(|q| {
            (1..=m)
                .map(|l| {
                    BigRational::from_integer(
                        BigInt::from(l).pow(2 * q as u32 + 1) * BigInt::from(2),
                    )
                })
                .collect()
        })
        .collect();
    let mut b: Vec<BigRational> = (0..m)
        .map(|q| {
            if q == 0 {
                BigRational::one()
            } else {
                BigRational::zero()
            }
        })
        .collect();
    for col in 0..m {
        let pivot = (col..m)
            .find(|&row| !a[row][col].is_zero())
            .ok_or(GradientError::SingularSystem)?;
        a.swap(col, pivot);
        b.swap(col, pivot);
        let p = a[col][col].clone();
        for row in col + 1..m {
            if a[row][col].is_zero() {
                continue;
            }
            let factor = &a[row][col] / &p;
            let pivot_row = a[col].clone();
            for (k, pivot_entry) in pivot_row.iter().enumerate().take(m).skip(col) {
                let sub = &factor * pivot_entry;
                a[row][k] -= sub;
            }
            let sub = &factor * &b[col];
            b[row] -= sub;
        }
    }
    let mut positive = vec![BigRational::zero(); m];
    for row in (0..m).rev() {
        if a[row][row].is_zero() {
            return Err(GradientError::SingularSystem);
        }
        let mut acc = b[row].clone();
        for k in row + 1..m {
            acc -= &a[row][k] * &positive[k];
        }
        positive[row] = acc / &a[row][row];
    }
    let mut full = vec![BigRational::zero(); 2 * m + 1];
    for (i, val) in positive.iter().enumerate() {
        full[m + 1 + i] = val.clone();
        full[m - 1 - i] = -val.clone();
    }
    Ok(full)
}

/// f64 view of [`difference_coefficients_exact`], indexed l + m.
pub fn difference_coefficients(order: usize) -> Result<Vec<f64>, GradientError> {
    Ok(difference_coefficients_exact(order)?
        .iter()
        .map(|r| r.to_f64().expect("small rationals"))
        .collect())
}

/// One measured lattice point: integer label and G_n coordinate per register.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub labels: Vec<u64>,
    pub values: Vec<f64>,
}

/// g~_i = N_i k_i / (S r); with S = 4/(eps r) this equals N_i k_i eps / 4.
pub fn decode(plan: &GradientPlan, component: usize, label: u64) -> f64 {
    let n = plan.widths[component];
    let k = grid_value(label, n);
    ((1u64 << n) as f64) * k / (plan.s * plan.r)
}

/// Component-wise lower median (index (T-1)/2 of the sorted column).
pub fn median_aggregate(estimates: &[Vec<f64>]) -> Result<Vec<f64>, GradientError> {
    if estimates.is_empty() {
        return Err(GradientError::EmptyEstimates);
    }
    let m = estimates[0].len();
    let mut out = Vec::with_capacity(m);
    for i in 0..m {
        let mut col: Vec<f64> = estimates.iter().map(|row| row[i]).collect();
        col.sort_by(|a, b| a.partial_cmp(b).expect("finite estimates"));
        out.push(col[(col.len() - 1) / 2]);
    }
    Ok(out)
}

/// Result of one repetition: the measured point and its decoded estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepetitionOutcome {
    pub point: GridPoint,
    pub estimates: Vec<f64>,
}

fn check_grid(plan: &GradientPlan, oracle: &PhaseOracle) -> Result<(), GradientError> {
    if oracle.grid().widths() != plan.widths.as_slice() {
        return Err(GradientError::GridMismatch {
            expected: plan.widths.clone(),
            got: oracle.grid().widths().to_vec(),
        });
    }
    Ok(())
}

/// Hadamard transform on every index register, one phase-oracle application
/// at power 2 pi S, then the inverse grid Fourier transform per register.
pub fn algorithm1_final_state(
    plan: &GradientPlan,
    oracle: &PhaseOracle,
    ledger: &mut ResourceLedger,
) -> Result<StateVector, GradientError> {
    check_grid(plan, oracle)?;
    let grid = plan.grid();
    let mut state = StateVector::zero(grid.layout());
    for j in 1..=grid.m() {
        state.apply_hadamard_register(&format!("x{j}"))?;
    }
    oracle.apply(&mut state, 2.0 * std::f64::consts::PI * plan.s, ledger)?;
    for j in 1..=grid.m() {
        state.apply_qft_inverse(&format!("x{j}"))?;
    }
    Ok(state)
}

/// One full repetition including the measurement.
pub fn run_algorithm1(
    plan: &GradientPlan,
    oracle: &PhaseOracle,
    rng: &mut RngStream,
    ledger: &mut ResourceLedger,
) -> Result<RepetitionOutcome, GradientError> {
    let state = algorithm1_final_state(plan, oracle, ledger)?;
    let outcome = state.measure_all(rng)?;
    let estimates = (0..plan.dimension)
        .map(|i| decode(plan, i, outcome.labels[i]))
        .collect();
    Ok(RepetitionOutcome {
        point: GridPoint {
            labels: outcome.labels,
            values: outcome.values,
        },
        estimates,
    })
}

/// Caches the repetition-invariant outcome distribution of the read-out
/// circuit so independent repetitions reduce to sampling; each sample still
/// charges the ledger exactly as one circuit execution would.
#[derive(Debug, Clone)]
pub struct OutcomeSampler {
    plan: GradientPlan,
    cumulative: Vec<f64>,
    /// Ledger delta of one repetition, replayed per sample.
    per_rep_charges: ResourceLedger,
}

impl OutcomeSampler {
    pub fn prepare(plan: &GradientPlan, oracle: &PhaseOracle) -> Result<Self, GradientError> {
        check_grid(plan, oracle)?;
        let mut per_rep_charges = ResourceLedger::new(plan.dimension);
        let state = algorithm1_final_state(plan, oracle, &mut per_rep_charges)?;
        let mut cumulative = state.probabilities();
        let mut acc = 0.0;
        for p in cumulative.iter_mut() {
            acc += *p;
            *p = acc;
        }
        Ok(Self {
            plan: plan.clone(),
            cumulative,
            per_rep_charges,
        })
    }

    /// Draws one repetition and charges the ledger for it.
    pub fn sample(&self, rng: &mut RngStream, ledger: &mut ResourceLedger) -> RepetitionOutcome {
        ledger.merge(&self.per_rep_charges);
        let total = *self.cumulative.last().expect("non-empty lattice");
        let u = rng.uniform() * total;
        let idx = self
            .cumulative
            .partition_point(|&c| c <= u)
            .min(self.cumulative.len() - 1);
        let grid = self.plan.grid();
        let labels: Vec<u64> = (0..grid.m()).map(|i| grid.label_of(idx, i)).collect();
        let values: Vec<f64> = labels
            .iter()
            .zip(self.plan.widths.iter())
            .map(|(&l, &n)| grid_value(l, n))
            .collect();
        let estimates = labels
            .iter()
            .enumerate()
            .map(|(i, &l)| decode(&self.plan, i, l))
            .collect();
        RepetitionOutcome {
            point: GridPoint { labels, values },
            estimates,
        }
    }
}
