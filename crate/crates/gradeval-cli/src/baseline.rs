//! Repeat-prepare-and-measure baseline: the shot-noise-limited contrast for
//! the benchmark harness.
//!
//! Observables are measured jointly from one shot stream only when every
//! body is diagonal in the computational basis; otherwise the budget is
//! split evenly and each observable is sampled in its own eigenbasis.

use gradeval::operators::ObservableSet;
use gradeval::oracles::StatePrepOracle;
use gradeval::simcore::{CVec, RngStream};

#[derive(Debug, Clone)]
pub struct BaselineOutcome {
    pub estimates: Vec<f64>,
    pub errors: Vec<f64>,
    pub max_error: f64,
    /// State preparations actually consumed.
    pub preparations: u64,
    /// True when all observables shared each shot.
    pub jointly_measured: bool,
}

fn is_computational_diagonal(matrix: &gradeval::simcore::CMat) -> bool {
    let n = matrix.nrows();
    for i in 0..n {
        for j in 0..n {
            if i != j && matrix[(i, j)].norm() > 1e-12 {
                return false;
            }
        }
    }
    true
}

fn cumulative_from_probs(probs: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    probs
        .iter()
        .map(|p| {
            acc += p;
            acc
        })
        .collect()
}

fn draw(cumulative: &[f64], rng: &mut RngStream) -> usize {
    let total = *cumulative.last().expect("non-empty distribution");
    let u = rng.uniform() * total;
    cumulative
        .partition_point(|&c| c <= u)
        .min(cumulative.len() - 1)
}

/// Runs the baseline at a total preparation budget and returns empirical
/// means with errors against the dense references.
pub fn sampling_baseline(
    set: &ObservableSet,
    psi_oracle: &StatePrepOracle,
    references: &[f64],
    budget: u64,
    rng: &mut RngStream,
) -> BaselineOutcome {
    let psi = psi_oracle.psi();
    let all_diagonal = set.iter().all(|o| is_computational_diagonal(&o.dense()));
    let (estimates, preparations) = if all_diagonal {
        (joint_diagonal_estimates(set, psi, budget, rng), budget)
    } else {
        per_observable_estimates(set, psi, budget, rng)
    };
    let errors: Vec<f64> = estimates
        .iter()
        .zip(references)
        .map(|(e, r)| (e - r).abs())
        .collect();
    let max_error = errors.iter().cloned().fold(0.0, f64::max);
    BaselineOutcome {
        estimates,
        errors,
        max_error,
        preparations,
        jointly_measured: all_diagonal,
    }
}

fn joint_diagonal_estimates(
    set: &ObservableSet,
    psi: &CVec,
    shots: u64,
    rng: &mut RngStream,
) -> Vec<f64> {
    let diags: Vec<Vec<f64>> = set
        .iter()
        .map(|o| {
            let d = o.dense();
            (0..d.nrows()).map(|i| d[(i, i)].re).collect()
        })
        .collect();
    let probs: Vec<f64> = psi.iter().map(|a| a.norm_sqr()).collect();
    let cumulative = cumulative_from_probs(&probs);
    let mut sums = vec![0.0; set.len()];
    for _ in 0..shots {
        let idx = draw(&cumulative, rng);
        for (sum, diag) in sums.iter_mut().zip(&diags) {
            *sum += diag[idx];
        }
    }
    sums.iter().map(|s| s / shots.max(1) as f64).collect()
}

fn per_observable_estimates(
    set: &ObservableSet,
    psi: &CVec,
    budget: u64,
    rng: &mut RngStream,
) -> (Vec<f64>, u64) {
    let shots_each = (budget / set.len() as u64).max(1);
    let mut estimates = Vec::with_capacity(set.len());
    for obs in set.iter() {
        // eigenbasis measurement: outcome lambda_e with prob |<e|psi>|^2
        let eig = obs.dense().symmetric_eigen();
        let coeffs = eig.eigenvectors.adjoint() * psi;
        let probs: Vec<f64> = coeffs.iter().map(|c| c.norm_sqr()).collect();
        let cumulative = cumulative_from_probs(&probs);
        let mut sum = 0.0;
        for _ in 0..shots_each {
            sum += eig.eigenvalues[draw(&cumulative, rng)];
        }
        estimates.push(sum / shots_each as f64);
    }
    (estimates, shots_each * set.len() as u64)
}

/// Mean absolute first-component error over `repeats` independent baseline
/// runs at each budget; the raw material for the shot-noise exponent fit.
pub fn error_curve(
    set: &ObservableSet,
    psi_oracle: &StatePrepOracle,
    references: &[f64],
    budgets: &[u64],
    repeats: u64,
    seed: u64,
) -> Vec<(f64, f64)> {
    budgets
        .iter()
        .map(|&budget| {
            let mean: f64 = (0..repeats)
                .map(|rep| {
                    let mut rng = RngStream::new(seed, budget.wrapping_mul(1000) + rep);
                    sampling_baseline(set, psi_oracle, references, budget, &mut rng).max_error
                })
                .sum::<f64>()
                / repeats as f64;
            (budget as f64, mean)
        })
        .collect()
}

/// Dense references for a set and state.
pub fn dense_references(set: &ObservableSet, psi_oracle: &StatePrepOracle) -> Vec<f64> {
    let psi = psi_oracle.psi();
    set.iter()
        .map(|o| {
            let v = &o.dense() * psi;
            psi.iter()
                .zip(v.iter())
                .map(|(a, b)| (a.conj() * b).re)
                .sum()
        })
        .collect()
}
