//! JSON run configuration: task selection, instance specs, and knobs.

use gradeval::operators::{Body, Hamiltonian, Observable, ObservableSet};
use gradeval::oracles::{OracleKind, OracleMode, StatePrepOracle};
use gradeval::pipelines::{CorrelationPart, CorrelationProbe, CorrelationSpec, RunOptions};
use gradeval::simcore::{CMat, SimError};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::sync::Arc;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("field `{field}`: {reason}")]
    Invalid { field: String, reason: String },
}

fn invalid(field: impl Into<String>, reason: impl ToString) -> ConfigError {
    ConfigError::Invalid {
        field: field.into(),
        reason: reason.to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Estimate,
    Correlate,
    Fixture,
    Cost,
    Benchmark,
}

/// `{id, kind: "dense"|"pauli", data, norm_bound}`; dense data is a row-major
/// matrix of [re, im] pairs, pauli data is text like "1.5*XZI + 0.5*IYI".
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObservableSpec {
    pub id: String,
    pub kind: String,
    pub data: serde_json::Value,
    pub norm_bound: f64,
}

/// Operator without a norm bound (Hamiltonians).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OperatorSpec {
    pub kind: String,
    pub data: serde_json::Value,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum StateSpec {
    /// |0...0> on `qubits` qubits.
    Zero { qubits: usize },
    /// Explicit amplitudes as [re, im] pairs, length a power of two.
    Amplitudes { data: Vec<[f64; 2]> },
    /// Full preparation unitary, row-major [re, im] pairs.
    Unitary { data: Vec<Vec<[f64; 2]>> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbeSpec {
    #[serde(flatten)]
    pub operator: ObservableSpec,
    pub time: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorrelationConfig {
    pub hamiltonian: OperatorSpec,
    pub probes: Vec<ProbeSpec>,
    pub source: ObservableSpec,
    pub part: CorrelationPart,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FixtureConfig {
    pub sign_matrix: Vec<Vec<i8>>,
    pub p: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CostConfig {
    pub scenario: gradeval::costmodel::Scenario,
    #[serde(default)]
    pub params: gradeval::costmodel::CostParams,
    /// Optional CSV copy of the table for plotting.
    #[serde(default)]
    pub csv_out: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    /// Budgets for the baseline error-vs-budget sweep; empty means matched
    /// budget only.
    #[serde(default)]
    pub budgets: Vec<u64>,
}

fn default_delta() -> f64 {
    1.0 / 3.0
}

fn default_seed() -> u64 {
    1
}

fn default_trials() -> u64 {
    1
}

fn default_max_qubits() -> usize {
    24
}

fn default_mode() -> String {
    "analytic".to_string()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub task: Task,
    pub epsilon: Option<f64>,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_mode")]
    pub mode: String,
    /// Injected probability-to-phase conversion error eps'.
    #[serde(default)]
    pub phase_error: f64,
    #[serde(default = "default_trials")]
    pub trials: u64,
    #[serde(default = "default_max_qubits")]
    pub max_qubits: usize,
    #[serde(default)]
    pub allow_clamp: bool,
    #[serde(default)]
    pub out: Option<String>,
    #[serde(default)]
    pub observables: Option<Vec<ObservableSpec>>,
    #[serde(default)]
    pub state: Option<StateSpec>,
    #[serde(default)]
    pub correlation: Option<CorrelationConfig>,
    #[serde(default)]
    pub fixture: Option<FixtureConfig>,
    #[serde(default)]
    pub cost: Option<CostConfig>,
    #[serde(default)]
    pub benchmark: Option<BenchmarkConfig>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        let config: RunConfig = serde_json::from_str(&text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if let Some(eps) = self.epsilon {
            if eps <= 0.0 {
                return Err(invalid("epsilon", "must be positive"));
            }
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(invalid("delta", "must lie in (0, 1)"));
        }
        if self.trials < 1 {
            return Err(invalid("trials", "must be at least 1"));
        }
        match self.mode.as_str() {
            "analytic" | "circuit" => {}
            other => return Err(invalid("mode", format!("unknown mode `{other}`"))),
        }
        match self.task {
            Task::Estimate | Task::Benchmark => {
                if self.observables.is_none() {
                    return Err(invalid("observables", "required for this task"));
                }
                if self.state.is_none() {
                    return Err(invalid("state", "required for this task"));
                }
                if self.epsilon.is_none() {
                    return Err(invalid("epsilon", "required for this task"));
                }
            }
            Task::Correlate => {
                if self.correlation.is_none() {
                    return Err(invalid("correlation", "required for this task"));
                }
                if self.state.is_none() {
                    return Err(invalid("state", "required for this task"));
                }
                if self.epsilon.is_none() {
                    return Err(invalid("epsilon", "required for this task"));
                }
            }
            Task::Fixture => {
                if self.fixture.is_none() {
                    return Err(invalid("fixture", "required for this task"));
                }
                if self.epsilon.is_none() {
                    return Err(invalid("epsilon", "required for this task"));
                }
            }
            Task::Cost => {
                if self.cost.is_none() {
                    return Err(invalid("cost", "required for this task"));
                }
            }
        }
        Ok(())
    }

    pub fn oracle_mode(&self) -> Result<OracleMode, ConfigError> {
        let base = match self.mode.as_str() {
            "analytic" => OracleMode::analytic(),
            "circuit" => OracleMode::circuit(),
            other => return Err(invalid("mode", format!("unknown mode `{other}`"))),
        };
        if self.phase_error > 0.0 {
            base.with_phase_error(self.phase_error)
                .map_err(|e| invalid("phase_error", e))
        } else {
            Ok(base)
        }
    }

    pub fn run_options(&self) -> Result<RunOptions, ConfigError> {
        Ok(RunOptions {
            mode: self.oracle_mode()?,
            seed: self.seed,
            max_qubits: self.max_qubits,
            allow_clamp: self.allow_clamp,
            record_outcomes: true,
        })
    }

    pub fn mode_kind(&self) -> Result<OracleKind, ConfigError> {
        Ok(self.oracle_mode()?.kind)
    }
}

fn complex(pair: [f64; 2]) -> Complex64 {
    Complex64::new(pair[0], pair[1])
}

fn dense_from_json(field: &str, data: &serde_json::Value) -> Result<CMat, ConfigError> {
    let rows: Vec<Vec<[f64; 2]>> =
        serde_json::from_value(data.clone()).map_err(|e| invalid(field, e))?;
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(invalid(field, "dense matrix must be square"));
    }
    Ok(CMat::from_fn(n, n, |i, j| complex(rows[i][j])))
}

fn body_from_spec(field: &str, kind: &str, data: &serde_json::Value) -> Result<Body, ConfigError> {
    match kind {
        "pauli" => {
            let text: String =
                serde_json::from_value(data.clone()).map_err(|e| invalid(field, e))?;
            Body::from_pauli_text(&text).map_err(|e| invalid(field, e))
        }
        "dense" => Ok(Body::Dense(dense_from_json(field, data)?)),
        other => Err(invalid(field, format!("unknown kind `{other}`"))),
    }
}

pub fn build_observable(field: &str, spec: &ObservableSpec) -> Result<Observable, ConfigError> {
    let body = body_from_spec(&format!("{field}.data"), &spec.kind, &spec.data)?;
    Observable::new(spec.id.clone(), body, spec.norm_bound)
        .map_err(|e| invalid(format!("{field} (id `{}`)", spec.id), e))
}

pub fn build_observable_set(specs: &[ObservableSpec]) -> Result<ObservableSet, ConfigError> {
    let observables = specs
        .iter()
        .enumerate()
        .map(|(i, s)| build_observable(&format!("observables[{i}]"), s))
        .collect::<Result<Vec<_>, _>>()?;
    ObservableSet::new(observables).map_err(|e| invalid("observables", e))
}

pub fn build_state(spec: &StateSpec) -> Result<Arc<StatePrepOracle>, ConfigError> {
    match spec {
        StateSpec::Zero { qubits } => {
            if *qubits == 0 || *qubits > 16 {
                return Err(invalid("state.qubits", "must be in 1..=16"));
            }
            let mut amps = vec![Complex64::new(0.0, 0.0); 1usize << qubits];
            amps[0] = Complex64::new(1.0, 0.0);
            StatePrepOracle::from_state(&amps).map_err(|e| invalid("state", e))
        }
        StateSpec::Amplitudes { data } => {
            let amps: Vec<Complex64> = data.iter().map(|&p| complex(p)).collect();
            StatePrepOracle::from_state(&amps).map_err(|e| invalid("state.data", e))
        }
        StateSpec::Unitary { data } => {
            let m = dense_from_json("state.data", &serde_json::to_value(data).unwrap())?;
            StatePrepOracle::from_unitary(m).map_err(|e| invalid("state.data", e))
        }
    }
}

pub fn build_lowerbound_from(
    config: &FixtureConfig,
) -> Result<gradeval::pipelines::LowerBoundInstance, ConfigError> {
    gradeval::pipelines::build_lowerbound_instance(&config.sign_matrix, &config.p)
        .map_err(|e| invalid("fixture", e))
}

pub fn build_correlation_spec(config: &CorrelationConfig) -> Result<CorrelationSpec, ConfigError> {
    let ham_body = body_from_spec(
        "correlation.hamiltonian.data",
        &config.hamiltonian.kind,
        &config.hamiltonian.data,
    )?;
    let hamiltonian = Hamiltonian::new(ham_body).map_err(|e| invalid("correlation.hamiltonian", e))?;
    let probes = config
        .probes
        .iter()
        .enumerate()
        .map(|(i, p)| {
            Ok(CorrelationProbe {
                operator: build_observable(&format!("correlation.probes[{i}]"), &p.operator)?,
                time: p.time,
            })
        })
        .collect::<Result<Vec<_>, ConfigError>>()?;
    let source = build_observable("correlation.source", &config.source)?;
    Ok(CorrelationSpec {
        hamiltonian,
        probes,
        source,
        part: config.part,
    })
}

impl From<SimError> for ConfigError {
    fn from(e: SimError) -> Self {
        invalid("state", e)
    }
}
