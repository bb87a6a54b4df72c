//! Task implementations behind the CLI: each command produces the report
//! envelope and an exit code (0 success, 2 statistical failure, 1 error is
//! signalled by the caller via Result).

use crate::baseline::{dense_references, error_curve, sampling_baseline};
use crate::config::{
    build_correlation_spec, build_lowerbound_from, build_observable_set, build_state, RunConfig,
    Task,
};
use gradeval::costmodel::{query_cost, CostRecord};
use gradeval::gradient::GradientPlan;
use gradeval::oracles::ResourceLedger;
use gradeval::pipelines::{
    estimate_correlations, estimate_expectations, prepare_expectations, EstimationReport,
    RunOptions,
};
use gradeval::simcore::RngStream;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

pub const SCHEMA: &str = "gradeval/1";
/// Baseline trials draw from stream ids far above the gradient repetitions.
const BASELINE_STREAM_BASE: u64 = 500_000;

#[derive(Debug, thiserror::Error)]
pub enum CommandError {
    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
    #[error(transparent)]
    Pipeline(#[from] gradeval::pipelines::PipelineError),
    #[error(transparent)]
    Cost(#[from] gradeval::costmodel::CostError),
    #[error("benchmark needs at least 30 trials, got {0}")]
    TooFewTrials(u64),
    #[error("budget infeasible: {0}")]
    BudgetInfeasible(String),
    #[error("cannot write output: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot serialize report: {0}")]
    Serialize(#[from] serde_json::Error),
}

/// Deterministic logical counters; wall-clock times live inside the
/// `timestamp` field so reports stay byte-identical across runs.
#[derive(Debug, Clone, Serialize)]
pub struct Timings {
    pub repetitions: u64,
    pub u_psi_queries: u64,
    pub phase_oracle_queries: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Envelope {
    pub schema: String,
    pub task: Task,
    pub mode: String,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub plan: Option<GradientPlan>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ledger: Option<ResourceLedger>,
    pub estimates: Vec<f64>,
    pub references: Vec<f64>,
    pub errors: Vec<f64>,
    pub success: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<serde_json::Value>,
    pub timings: Timings,
    /// The only non-deterministic field.
    pub timestamp: serde_json::Value,
}

pub struct CommandOutcome {
    pub envelope: Envelope,
    pub exit_code: i32,
}

fn timestamp_value(started: std::time::Instant) -> serde_json::Value {
    let unix_ms = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0);
    json!({
        "unix_ms": unix_ms,
        "wall_ms": started.elapsed().as_millis() as u64,
    })
}

fn envelope_from_report(
    task: Task,
    config: &RunConfig,
    report: EstimationReport,
    detail: Option<serde_json::Value>,
    started: std::time::Instant,
) -> Envelope {
    let timings = Timings {
        repetitions: report.plan.repetitions as u64,
        u_psi_queries: report.ledger.u_psi_queries,
        phase_oracle_queries: report.ledger.phase_oracle_queries,
    };
    let mut merged_detail = detail.unwrap_or(json!({}));
    if let Some(conv) = &report.convention {
        merged_detail["convention"] = json!(conv);
    }
    if let Some(outcomes) = &report.raw_outcomes {
        merged_detail["raw_outcomes"] = serde_json::to_value(outcomes).unwrap_or(json!(null));
    }
    merged_detail["target_ids"] = json!(report.target_ids);
    Envelope {
        schema: SCHEMA.to_string(),
        task,
        mode: config.mode.clone(),
        seed: config.seed,
        plan: Some(report.plan),
        ledger: Some(report.ledger),
        estimates: report.estimates,
        references: report.references,
        errors: report.errors,
        success: report.success,
        detail: Some(merged_detail),
        timings,
        timestamp: timestamp_value(started),
    }
}

pub fn cmd_estimate(config: &RunConfig) -> Result<CommandOutcome, CommandError> {
    let started = std::time::Instant::now();
    let set = build_observable_set(config.observables.as_deref().unwrap_or(&[]))?;
    let psi = build_state(config.state.as_ref().expect("validated"))?;
    let opts = config.run_options()?;
    let report = estimate_expectations(
        &set,
        &psi,
        config.epsilon.expect("validated"),
        config.delta,
        &opts,
    )?;
    let exit_code = if report.success { 0 } else { 2 };
    Ok(CommandOutcome {
        envelope: envelope_from_report(Task::Estimate, config, report, None, started),
        exit_code,
    })
}

pub fn cmd_correlate(config: &RunConfig) -> Result<CommandOutcome, CommandError> {
    let started = std::time::Instant::now();
    let spec = build_correlation_spec(config.correlation.as_ref().expect("validated"))?;
    let psi = build_state(config.state.as_ref().expect("validated"))?;
    let opts = config.run_options()?;
    let report = estimate_correlations(
        &spec,
        &psi,
        config.epsilon.expect("validated"),
        config.delta,
        &opts,
    )?;
    let exit_code = if report.success { 0 } else { 2 };
    Ok(CommandOutcome {
        envelope: envelope_from_report(Task::Correlate, config, report, None, started),
        exit_code,
    })
}

/// Identity check max_i |(Ap)_i - <Z_i>| plus a full estimator run on the
/// fixture instance.
pub fn cmd_fixture(config: &RunConfig) -> Result<CommandOutcome, CommandError> {
    let started = std::time::Instant::now();
    let instance = build_lowerbound_from(config.fixture.as_ref().expect("validated"))?;
    let deviation = instance.identity_deviation();
    let identity_ok = deviation < 1e-11;
    let opts = config.run_options()?;
    let report = estimate_expectations(
        &instance.observable_set,
        &instance.psi_oracle,
        config.epsilon.expect("validated"),
        config.delta,
        &opts,
    )?;
    let detail = json!({
        "fixture": {
            "targets": instance.targets,
            "dense_expectations": instance.dense_expectations(),
            "identity_deviation": deviation,
            "identity_ok": identity_ok,
            "system_qubits": instance.system_qubits,
        }
    });
    let success = report.success && identity_ok;
    let mut envelope = envelope_from_report(Task::Fixture, config, report, Some(detail), started);
    envelope.success = success;
    Ok(CommandOutcome {
        exit_code: if success { 0 } else { 2 },
        envelope,
    })
}

fn format_factors(record: &CostRecord) -> String {
    record
        .factors
        .iter()
        .map(|f| format!("{}^{}", f.base, f.exponent))
        .collect::<Vec<_>>()
        .join(" * ")
}

pub fn cmd_cost(config: &RunConfig) -> Result<CommandOutcome, CommandError> {
    let started = std::time::Instant::now();
    let cost = config.cost.as_ref().expect("validated");
    let rows = query_cost(cost.scenario, &cost.params)?;
    if let Some(path) = &cost.csv_out {
        let mut csv = String::from("label,expression,numeric,constants_known\n");
        for r in &rows {
            csv.push_str(&format!(
                "{},{},{},{}\n",
                r.label,
                format_factors(r),
                r.numeric,
                r.constants_known
            ));
        }
        std::fs::write(path, csv)?;
    }
    let envelope = Envelope {
        schema: SCHEMA.to_string(),
        task: Task::Cost,
        mode: config.mode.clone(),
        seed: config.seed,
        plan: None,
        ledger: None,
        estimates: rows.iter().map(|r| r.numeric).collect(),
        references: Vec::new(),
        errors: Vec::new(),
        success: true,
        detail: Some(json!({ "cost_table": rows, "scenario": cost.scenario })),
        timings: Timings {
            repetitions: 0,
            u_psi_queries: 0,
            phase_oracle_queries: 0,
        },
        timestamp: timestamp_value(started),
    };
    Ok(CommandOutcome {
        envelope,
        exit_code: 0,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct MethodSummary {
    pub success_fraction: f64,
    pub error_p50: f64,
    pub error_p90: f64,
    pub error_max: f64,
    pub u_psi_queries_total: u64,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let idx = ((sorted.len() - 1) as f64 * q).round() as usize;
    sorted[idx]
}

fn summarize(max_errors: &[f64], successes: usize, queries: u64) -> MethodSummary {
    let mut sorted = max_errors.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite errors"));
    MethodSummary {
        success_fraction: successes as f64 / max_errors.len() as f64,
        error_p50: quantile(&sorted, 0.5),
        error_p90: quantile(&sorted, 0.9),
        error_max: quantile(&sorted, 1.0),
        u_psi_queries_total: queries,
    }
}

/// Gradient pipeline vs naive sampling at matched U_psi budgets over
/// `trials` seeded trials.
pub fn cmd_benchmark(config: &RunConfig) -> Result<CommandOutcome, CommandError> {
    let started = std::time::Instant::now();
    if config.trials < 30 {
        return Err(CommandError::TooFewTrials(config.trials));
    }
    let set = build_observable_set(config.observables.as_deref().unwrap_or(&[]))?;
    let psi = build_state(config.state.as_ref().expect("validated"))?;
    let epsilon = config.epsilon.expect("validated");
    let opts = RunOptions {
        record_outcomes: false,
        ..config.run_options()?
    };
    let harness = prepare_expectations(&set, &psi, epsilon, config.delta, &opts)?;
    let references = dense_references(&set, &psi);

    let trials: Vec<_> = (0..config.trials)
        .into_par_iter()
        .map(|t| harness.run_trial(config.seed, t))
        .collect::<Result<Vec<_>, _>>()?;
    let gradient_budget = trials[0].ledger.u_psi_queries;
    if gradient_budget == 0 {
        return Err(CommandError::BudgetInfeasible(
            "gradient run consumed no queries".into(),
        ));
    }

    let baseline_runs: Vec<_> = (0..config.trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = RngStream::new(config.seed, BASELINE_STREAM_BASE + t);
            sampling_baseline(&set, &psi, &references, gradient_budget, &mut rng)
        })
        .collect();

    let gradient_errors: Vec<f64> = trials
        .iter()
        .map(|t| t.errors.iter().cloned().fold(0.0, f64::max))
        .collect();
    let gradient_successes = trials.iter().filter(|t| t.success).count();
    let gradient_queries: u64 = trials.iter().map(|t| t.ledger.u_psi_queries).sum();

    let baseline_errors: Vec<f64> = baseline_runs.iter().map(|b| b.max_error).collect();
    let baseline_successes = baseline_runs
        .iter()
        .filter(|b| b.max_error <= epsilon)
        .count();
    let baseline_queries: u64 = baseline_runs.iter().map(|b| b.preparations).sum();

    let gradient_summary = summarize(&gradient_errors, gradient_successes, gradient_queries);
    let baseline_summary = summarize(&baseline_errors, baseline_successes, baseline_queries);

    // optional error-vs-budget sweep for the shot-noise contrast
    let sweep = config
        .benchmark
        .as_ref()
        .filter(|b| !b.budgets.is_empty())
        .map(|b| error_curve(&set, &psi, &references, &b.budgets, 64, config.seed));

    let success = gradient_summary.success_fraction >= 2.0 / 3.0;
    let detail = json!({
        "trials": config.trials,
        "matched_budget_per_trial": gradient_budget,
        "gradient": gradient_summary,
        "sampling_baseline": baseline_summary,
        "baseline_jointly_measured": baseline_runs[0].jointly_measured,
        "error_vs_budget": sweep,
    });
    let envelope = Envelope {
        schema: SCHEMA.to_string(),
        task: Task::Benchmark,
        mode: config.mode.clone(),
        seed: config.seed,
        plan: Some(harness.plan().clone()),
        ledger: None,
        estimates: Vec::new(),
        references,
        errors: Vec::new(),
        success,
        detail: Some(detail),
        timings: Timings {
            repetitions: config.trials * harness.plan().repetitions as u64,
            u_psi_queries: gradient_queries,
            phase_oracle_queries: 0,
        },
        timestamp: timestamp_value(started),
    };
    Ok(CommandOutcome {
        exit_code: if success { 0 } else { 2 },
        envelope,
    })
}

/// Dispatches on the configured task.
pub fn run(config: &RunConfig) -> Result<CommandOutcome, CommandError> {
    match config.task {
        Task::Estimate => cmd_estimate(config),
        Task::Correlate => cmd_correlate(config),
        Task::Fixture => cmd_fixture(config),
        Task::Cost => cmd_cost(config),
        Task::Benchmark => cmd_benchmark(config),
    }
}

/// Serializes the envelope and writes it to the configured location.
pub fn write_report(envelope: &Envelope, out: Option<&str>) -> Result<String, CommandError> {
    let text = serde_json::to_string_pretty(envelope)?;
    if let Some(path) = out {
        std::fs::write(path, &text)?;
    }
    Ok(text)
}
