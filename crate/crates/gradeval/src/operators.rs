//! Observables with declared norm bounds, their time-evolution exponentials,
//! and Hamiltonians for correlation functions.
//!
//! Bodies are either dense Hermitian matrices or real-weighted Pauli-string
//! sums written like `"1.5*XZI + 0.5*IYI"`. The first character of a Pauli
//! string acts on qubit 0 (the least significant bit of the amplitude index).

use crate::simcore::{gates, CMat};
use num_complex::Complex64;
use thiserror::Error;

/// Eigendecompositions above this dimension are rejected rather than
/// approximated; desk-scale runs stay far below it.
pub const DENSE_DIM_CAP: usize = 1 << 10;

pub const HERMITICITY_TOL: f64 = 1e-10;
pub const NORM_BOUND_SLACK: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum OperatorError {
    #[error("body is not Hermitian (max deviation {0:.3e})")]
    NonHermitian(f64),
    #[error("spectral norm {norm:.6} exceeds declared bound {bound:.6}")]
    NormBoundViolated { norm: f64, bound: f64 },
    #[error("dimension {0} exceeds the dense cap {DENSE_DIM_CAP}")]
    DimensionOverCap(usize),
    #[error("dimension {0} is not a power of two")]
    NotPowerOfTwo(usize),
    #[error("norm bound must be positive, got {0}")]
    NonPositiveBound(f64),
    #[error("cannot parse Pauli string `{input}`: {reason}")]
    PauliParse { input: String, reason: String },
    #[error("observable set is empty")]
    EmptySet,
    #[error("duplicate observable id `{0}`")]
    DuplicateId(String),
    #[error("observable `{id}` acts on {got} qubits, set uses {expected}")]
    MixedWidths {
        id: String,
        got: usize,
        expected: usize,
    },
    #[error("duration is not finite")]
    NonFiniteDuration,
}

/// One weighted Pauli string, e.g. (1.5, "XZI").
#[derive(Debug, Clone, PartialEq)]
pub struct PauliTerm {
    pub weight: f64,
    pub letters: String,
}

impl PauliTerm {
    fn single_qubit_matrix(letter: char) -> Option<CMat> {
        match letter {
            'I' => Some(gates::identity(2)),
            'X' => Some(gates::pauli_x()),
            'Y' => Some(gates::pauli_y()),
            'Z' => Some(gates::pauli_z()),
            _ => None,
        }
    }

    /// Dense matrix; the first letter lands on qubit 0 (lowest index bits).
    pub fn dense(&self) -> CMat {
        let mut acc = gates::identity(1);
        for letter in self.letters.chars().rev() {
            let single = Self::single_qubit_matrix(letter).expect("validated at parse");
            acc = acc.kronecker(&single);
        }
        acc
    }

    /// Pauli strings commute iff they differ (both non-identity) on an even
    /// number of positions.
    pub fn commutes_with(&self, other: &PauliTerm) -> bool {
        let clashes = self
            .letters
            .chars()
            .zip(other.letters.chars())
            .filter(|(a, b)| *a != 'I' && *b != 'I' && a != b)
            .count();
        clashes % 2 == 0
    }
}

/// Parses text like `"1.5*XZI + 0.5*IYI"` or `"XX - 0.25*ZZ"`.
pub fn parse_pauli_sum(input: &str) -> Result<Vec<PauliTerm>, OperatorError> {
    let err = |reason: &str| OperatorError::PauliParse {
        input: input.to_string(),
        reason: reason.to_string(),
    };
    // split into signed chunks
    let mut terms = Vec::new();
    let mut chunk = String::new();
    let mut sign = 1.0;
    let mut pending_sign = 1.0;
    let flush = |chunk: &mut String,
                 sign: f64,
                 terms: &mut Vec<PauliTerm>|
     -> Result<(), OperatorError> {
        let body = chunk.trim();
        if body.is_empty() {
            return Err(OperatorError::PauliParse {
                input: input.to_string(),
                reason: "empty term".to_string(),
            });
        }
        let (weight, letters) = match body.split_once('*') {
            Some((w, l)) => (
                w.trim()
                    .parse::<f64>()
                    .map_err(|e| OperatorError::PauliParse {
                        input: input.to_string(),
                        reason: format!("bad coefficient `{w}`: {e}"),
                    })?,
                l.trim(),
            ),
            None => (1.0, body),
        };
        if letters.is_empty() || !letters.chars().all(|c| "IXYZ".contains(c)) {
            return Err(OperatorError::PauliParse {
                input: input.to_string(),
                reason: format!("letters `{letters}` must be non-empty over I, X, Y, Z"),
            });
        }
        terms.push(PauliTerm {
            weight: sign * weight,
            letters: letters.to_string(),
        });
        chunk.clear();
        Ok(())
    };
    for ch in input.chars() {
        match ch {
            '+' | '-' if !chunk.trim().is_empty() => {
                flush(&mut chunk, sign * pending_sign, &mut terms)?;
                sign = 1.0;
                pending_sign = if ch == '-' { -1.0 } else { 1.0 };
            }
            '-' => pending_sign = -pending_sign,
            '+' => {}
            _ => chunk.push(ch),
        }
    }
    if chunk.trim().is_empty() {
        return Err(err("trailing separator"));
    }
    flush(&mut chunk, sign * pending_sign, &mut terms)?;
    let width = terms[0].letters.len();
    if terms.iter().any(|t| t.letters.len() != width) {
        return Err(err("terms act on different numbers of qubits"));
    }
    Ok(terms)
}

/// Hermitian body shared by observables and Hamiltonians.
#[derive(Debug, Clone)]
pub enum Body {
    Dense(CMat),
    Pauli(Vec<PauliTerm>),
}

impl Body {
    pub fn from_pauli_text(text: &str) -> Result<Self, OperatorError> {
        Ok(Body::Pauli(parse_pauli_sum(text)?))
    }

    pub fn dense(&self) -> CMat {
        match self {
            Body::Dense(m) => m.clone(),
            Body::Pauli(terms) => {
                let dim = 1usize << terms[0].letters.len();
                let mut acc = CMat::zeros(dim, dim);
                for t in terms {
                    acc += t.dense() * Complex64::new(t.weight, 0.0);
                }
                acc
            }
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Body::Dense(m) => m.nrows(),
            Body::Pauli(terms) => 1usize << terms[0].letters.len(),
        }
    }

    fn validate(&self) -> Result<(), OperatorError> {
        let dim = self.dim();
        if dim > DENSE_DIM_CAP {
            return Err(OperatorError::DimensionOverCap(dim));
        }
        if !dim.is_power_of_two() {
            return Err(OperatorError::NotPowerOfTwo(dim));
        }
        let m = self.dense();
        if m.nrows() != m.ncols() {
            return Err(OperatorError::NotPowerOfTwo(m.ncols()));
        }
        let dev = hermiticity_deviation(&m);
        if dev > HERMITICITY_TOL {
            return Err(OperatorError::NonHermitian(dev));
        }
        Ok(())
    }
}

/// Max-entry deviation ||O - O^dag||_max.
pub fn hermiticity_deviation(m: &CMat) -> f64 {
    let diff = m - m.adjoint();
    diff.iter().fold(0.0f64, |acc, v| acc.max(v.norm()))
}

/// Cached eigendecomposition of a Hermitian operator; produces the matrix
/// exponentials exp(-i x O) for arbitrary durations x.
#[derive(Debug, Clone)]
pub struct Propagator {
    basis: CMat,
    energies: Vec<f64>,
}

impl Propagator {
    pub fn new(hermitian: &CMat) -> Result<Self, OperatorError> {
        if hermitian.nrows() > DENSE_DIM_CAP {
            return Err(OperatorError::DimensionOverCap(hermitian.nrows()));
        }
        let dev = hermiticity_deviation(hermitian);
        if dev > HERMITICITY_TOL {
            return Err(OperatorError::NonHermitian(dev));
        }
        let eig = hermitian.clone().symmetric_eigen();
        Ok(Self {
            basis: eig.eigenvectors,
            energies: eig.eigenvalues.iter().copied().collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.basis.nrows()
    }

    /// exp(-i x O) = V diag(e^{-i x lambda}) V^dag.
    pub fn exponential(&self, x: f64) -> CMat {
        let dim = self.dim();
        let mut scaled = self.basis.clone();
        for (col, lambda) in self.energies.iter().enumerate() {
            let phase = Complex64::from_polar(1.0, -x * lambda);
            for row in 0..dim {
                scaled[(row, col)] *= phase;
            }
        }
        scaled * self.basis.adjoint()
    }

    /// exp(-i x O) v without forming the matrix.
    pub fn apply_exponential(&self, x: f64, v: &crate::simcore::CVec) -> crate::simcore::CVec {
        let mut coeffs = self.basis.adjoint() * v;
        for (i, lambda) in self.energies.iter().enumerate() {
            coeffs[i] *= Complex64::from_polar(1.0, -x * lambda);
        }
        &self.basis * coeffs
    }

    pub fn spectral_norm(&self) -> f64 {
        self.energies.iter().fold(0.0f64, |acc, l| acc.max(l.abs()))
    }
}

/// Hermitian operator with a declared spectral-norm bound B_j.
///
/// The bound is user-declared and verified at construction, never inferred.
#[derive(Debug, Clone)]
pub struct Observable {
    pub id: String,
    pub body: Body,
    pub norm_bound: f64,
    propagator: Propagator,
}

impl Observable {
    pub fn new(id: impl Into<String>, body: Body, norm_bound: f64) -> Result<Self, OperatorError> {
        if norm_bound <= 0.0 || !norm_bound.is_finite() {
            return Err(OperatorError::NonPositiveBound(norm_bound));
        }
        body.validate()?;
        let propagator = Propagator::new(&body.dense())?;
        let norm = propagator.spectral_norm();
        if norm > norm_bound + NORM_BOUND_SLACK {
            return Err(OperatorError::NormBoundViolated {
                norm,
                bound: norm_bound,
            });
        }
        Ok(Self {
            id: id.into(),
            body,
            norm_bound,
            propagator,
        })
    }

    pub fn from_pauli_text(
        id: impl Into<String>,
        text: &str,
        norm_bound: f64,
    ) -> Result<Self, OperatorError> {
        Self::new(id, Body::from_pauli_text(text)?, norm_bound)
    }

    pub fn dense(&self) -> CMat {
        self.body.dense()
    }

    pub fn dim(&self) -> usize {
        self.body.dim()
    }

    pub fn qubits(&self) -> usize {
        self.dim().trailing_zeros() as usize
    }

    pub fn propagator(&self) -> &Propagator {
        &self.propagator
    }

    /// Largest |eigenvalue|.
    pub fn spectral_norm(&self) -> f64 {
        self.propagator.spectral_norm()
    }
}

/// exp(-i x O). Single Pauli strings use the exact cos/sin form; commuting
/// sums compose term exponentials; everything else goes through the
/// eigendecomposition.
pub fn evolve(obs: &Observable, x: f64) -> Result<CMat, OperatorError> {
    if !x.is_finite() {
        return Err(OperatorError::NonFiniteDuration);
    }
    let dim = obs.dim();
    if x == 0.0 {
        return Ok(gates::identity(dim));
    }
    if let Body::Pauli(terms) = &obs.body {
        let all_commute = terms
            .iter()
            .enumerate()
            .all(|(i, a)| terms[i + 1..].iter().all(|b| a.commutes_with(b)));
        if all_commute {
            let mut acc = gates::identity(dim);
            for t in terms {
                // exp(-i theta P) = cos(theta) I - i sin(theta) P for P^2 = I
                let theta = x * t.weight;
                let term = gates::identity(dim) * Complex64::new(theta.cos(), 0.0)
                    + t.dense() * Complex64::new(0.0, -theta.sin());
                acc = term * acc;
            }
            return Ok(acc);
        }
    }
    Ok(obs.propagator().exponential(x))
}

/// Largest |eigenvalue| of the body, for dims within the dense cap.
pub fn spectral_norm(obs: &Observable) -> Result<f64, OperatorError> {
    if obs.dim() > DENSE_DIM_CAP {
        return Err(OperatorError::DimensionOverCap(obs.dim()));
    }
    Ok(obs.spectral_norm())
}

/// Time-independent Hamiltonian; U(t, t') = exp(-i H (t - t')).
#[derive(Debug, Clone)]
pub struct Hamiltonian {
    pub body: Body,
    propagator: Propagator,
}

impl Hamiltonian {
    pub fn new(body: Body) -> Result<Self, OperatorError> {
        body.validate()?;
        let propagator = Propagator::new(&body.dense())?;
        Ok(Self { body, propagator })
    }

    pub fn dim(&self) -> usize {
        self.body.dim()
    }

    /// U(t_to, t_from) = exp(-i H (t_to - t_from)), evolving a state from
    /// time `t_from` to time `t_to`.
    pub fn time_evolution(&self, t_from: f64, t_to: f64) -> Result<CMat, OperatorError> {
        let x = t_to - t_from;
        if !x.is_finite() {
            return Err(OperatorError::NonFiniteDuration);
        }
        Ok(self.propagator.exponential(x))
    }
}

/// Ordered collection of observables over one system register.
#[derive(Debug, Clone)]
pub struct ObservableSet {
    observables: Vec<Observable>,
}

impl ObservableSet {
    pub fn new(observables: Vec<Observable>) -> Result<Self, OperatorError> {
        if observables.is_empty() {
            return Err(OperatorError::EmptySet);
        }
        let expected = observables[0].qubits();
        for (i, o) in observables.iter().enumerate() {
            if observables[..i].iter().any(|p| p.id == o.id) {
                return Err(OperatorError::DuplicateId(o.id.clone()));
            }
            if o.qubits() != expected {
                return Err(OperatorError::MixedWidths {
                    id: o.id.clone(),
                    got: o.qubits(),
                    expected,
                });
            }
        }
        Ok(Self { observables })
    }

    pub fn len(&self) -> usize {
        self.observables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observables.is_empty()
    }

    pub fn system_qubits(&self) -> usize {
        self.observables[0].qubits()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Observable> {
        self.observables.iter()
    }

    pub fn get(&self, i: usize) -> &Observable {
        &self.observables[i]
    }

    pub fn norm_bounds(&self) -> Vec<f64> {
        self.observables.iter().map(|o| o.norm_bound).collect()
    }

    /// True when every declared bound is exactly 1 (the uniform-norm path).
    pub fn uniform_unit_bounds(&self) -> bool {
        self.observables.iter().all(|o| o.norm_bound == 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simcore::RngStream;

    fn obs_z() -> Observable {
        Observable::from_pauli_text("z", "Z", 1.0).unwrap()
    }

    /// Test-only matrix exponential by scaling and squaring of the Taylor
    /// series; independent of the eigendecomposition route.
    fn expm_series(m: &CMat, x: f64) -> CMat {
        let dim = m.nrows();
        let a = m * Complex64::new(0.0, -x);
        let norm = a.iter().map(|v| v.norm()).fold(0.0f64, f64::max) * dim as f64;
        let squarings = norm.log2().ceil().max(0.0) as u32 + 4;
        let b = &a * Complex64::new((0.5f64).powi(squarings as i32), 0.0);
        let mut term = gates::identity(dim);
        let mut sum = gates::identity(dim);
        for k in 1..32 {
            term = &term * &b * Complex64::new(1.0 / k as f64, 0.0);
            sum += &term;
        }
        let mut out = sum;
        for _ in 0..squarings {
            out = &out * &out;
        }
        out
    }

    fn random_hermitian(rng: &mut RngStream, dim: usize) -> CMat {
        let raw = CMat::from_fn(dim, dim, |_, _| {
            Complex64::new(rng.uniform_range(-1.0, 1.0), rng.uniform_range(-1.0, 1.0))
        });
        (&raw + raw.adjoint()) * Complex64::new(0.5, 0.0)
    }

    #[test]
    fn evolve_z_closed_form() {
        let u = evolve(&obs_z(), std::f64::consts::FRAC_PI_2).unwrap();
        let e = Complex64::from_polar(1.0, -std::f64::consts::FRAC_PI_2);
        assert!((u[(0, 0)] - e).norm() < 1e-12);
        assert!((u[(1, 1)] - e.conj()).norm() < 1e-12);
        assert!(u[(0, 1)].norm() < 1e-14 && u[(1, 0)].norm() < 1e-14);
    }

    #[test]
    fn evolve_zero_duration_is_identity() {
        let u = evolve(&obs_z(), 0.0).unwrap();
        assert!((u - gates::identity(2)).iter().all(|v| v.norm() < 1e-15));
    }

    #[test]
    fn evolve_matches_series_oracle() {
        let mut rng = RngStream::new(11, 0);
        for _ in 0..8 {
            let h = random_hermitian(&mut rng, 4);
            let obs = Observable::new("r", Body::Dense(h.clone()), 4.0).unwrap();
            let u = evolve(&obs, 0.3).unwrap();
            let oracle = expm_series(&h, 0.3);
            let dev = (&u - &oracle).iter().map(|v| v.norm()).fold(0.0, f64::max);
            assert!(dev < 1e-9, "dev = {dev:.3e}");
        }
    }

    #[test]
    fn evolve_group_property() {
        let mut rng = RngStream::new(12, 0);
        let h = random_hermitian(&mut rng, 4);
        let obs = Observable::new("r", Body::Dense(h), 4.0).unwrap();
        let (x1, x2) = (0.37, -0.83);
        let lhs = evolve(&obs, x1).unwrap() * evolve(&obs, x2).unwrap();
        let rhs = evolve(&obs, x1 + x2).unwrap();
        let dev = (&lhs - &rhs).iter().map(|v| v.norm()).fold(0.0, f64::max);
        assert!(dev < 1e-9);
    }

    #[test]
    fn evolve_commutes_with_conjugation() {
        // V e^{-i x O} V^dag = e^{-i x V O V^dag}
        let mut rng = RngStream::new(13, 0);
        for _ in 0..4 {
            let h = random_hermitian(&mut rng, 4);
            let v = {
                let raw = random_hermitian(&mut rng, 4);
                Propagator::new(&raw).unwrap().exponential(1.0) // a random unitary
            };
            let obs = Observable::new("o", Body::Dense(h.clone()), 4.0).unwrap();
            let conj_body = &v * &h * v.adjoint();
            let conj_body = (&conj_body + conj_body.adjoint()) * Complex64::new(0.5, 0.0);
            let obs_c = Observable::new("c", Body::Dense(conj_body), 4.0).unwrap();
            let lhs = &v * evolve(&obs, 0.45).unwrap() * v.adjoint();
            let rhs = evolve(&obs_c, 0.45).unwrap();
            let dev = (&lhs - &rhs).iter().map(|x| x.norm()).fold(0.0, f64::max);
            assert!(dev < 1e-9, "dev = {dev:.3e}");
        }
    }

    #[test]
    fn pauli_commuting_fast_path_matches_dense_route() {
        let body = Body::from_pauli_text("0.7*ZI + 0.4*IZ - 0.2*ZZ").unwrap();
        let obs = Observable::new("zz", body.clone(), 1.3).unwrap();
        let fast = evolve(&obs, 0.9).unwrap();
        let via_eig = obs.propagator().exponential(0.9);
        let dev = (&fast - &via_eig).iter().map(|v| v.norm()).fold(0.0, f64::max);
        assert!(dev < 1e-10, "dev = {dev:.3e}");
    }

    #[test]
    fn spectral_norms() {
        assert!((spectral_norm(&obs_z()).unwrap() - 1.0).abs() < 1e-12);
        let three_x = Observable::from_pauli_text("3x", "3*X", 3.0).unwrap();
        assert!((spectral_norm(&three_x).unwrap() - 3.0).abs() < 1e-12);
    }

    /// Power iteration on O^2 as an independent norm oracle.
    #[test]
    fn spectral_norm_matches_power_iteration() {
        let mut rng = RngStream::new(21, 0);
        for _ in 0..6 {
            let h = random_hermitian(&mut rng, 8);
            let obs = Observable::new("r", Body::Dense(h.clone()), 10.0).unwrap();
            let squared = &h * &h;
            let mut v = nalgebra::DVector::from_fn(8, |i, _| {
                Complex64::new(rng.uniform_range(-1.0, 1.0) + 0.01 * i as f64, 0.0)
            });
            let mut lambda = 0.0;
            for _ in 0..4000 {
                v = &squared * v;
                lambda = v.norm();
                v /= Complex64::new(lambda, 0.0);
            }
            let oracle = lambda.sqrt();
            assert!(
                (spectral_norm(&obs).unwrap() - oracle).abs() < 1e-6,
                "norm {} vs oracle {}",
                spectral_norm(&obs).unwrap(),
                oracle
            );
        }
    }

    #[test]
    fn norm_bound_honesty() {
        let body = Body::from_pauli_text("2*Z").unwrap();
        let err = Observable::new("liar", body, 1.0).unwrap_err();
        assert!(matches!(err, OperatorError::NormBoundViolated { .. }));
    }

    #[test]
    fn rejects_non_hermitian_body() {
        let m = CMat::from_row_slice(
            2,
            2,
            &[
                Complex64::new(0.0, 0.0),
                Complex64::new(1.0, 0.5),
                Complex64::new(0.0, 0.0),
                Complex64::new(0.0, 0.0),
            ],
        );
        assert!(matches!(
            Observable::new("bad", Body::Dense(m), 2.0),
            Err(OperatorError::NonHermitian(_))
        ));
    }

    #[test]
    fn time_evolution_basics() {
        let h = Hamiltonian::new(Body::from_pauli_text("Z").unwrap()).unwrap();
        let id = h.time_evolution(0.7, 0.7).unwrap();
        assert!((id - gates::identity(2)).iter().all(|v| v.norm() < 1e-12));

        let fwd = h.time_evolution(0.0, 0.9).unwrap();
        let back = h.time_evolution(0.9, 0.0).unwrap();
        let prod = fwd * back;
        assert!((prod - gates::identity(2)).iter().all(|v| v.norm() < 1e-10));

        // closed form at t = pi/4
        let u = h.time_evolution(0.0, std::f64::consts::FRAC_PI_4).unwrap();
        let e = Complex64::from_polar(1.0, -std::f64::consts::FRAC_PI_4);
        assert!((u[(0, 0)] - e).norm() < 1e-12);
        assert!((u[(1, 1)] - e.conj()).norm() < 1e-12);
    }

    #[test]
    fn parse_pauli_sum_examples() {
        let terms = parse_pauli_sum("1.5*XZI + 0.5*IYI").unwrap();
        assert_eq!(terms.len(), 2);
        assert_eq!(terms[0].weight, 1.5);
        assert_eq!(terms[0].letters, "XZI");
        assert_eq!(terms[1].weight, 0.5);

        let terms = parse_pauli_sum("XX - 0.25*ZZ").unwrap();
        assert_eq!(terms[0].weight, 1.0);
        assert_eq!(terms[1].weight, -0.25);

        assert!(parse_pauli_sum("1.5*XQ").is_err());
        assert!(parse_pauli_sum("X + XX").is_err());
        assert!(parse_pauli_sum("").is_err());
    }

    #[test]
    fn pauli_letter_order_matches_qubit_order() {
        // "XI" acts on qubit 0: basis |q1 q0>, X flips bit 0
        let term = PauliTerm {
            weight: 1.0,
            letters: "XI".to_string(),
        };
        let m = term.dense();
        assert!((m[(1, 0)] - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        assert!((m[(3, 2)] - Complex64::new(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn observable_set_validation() {
        let a = Observable::from_pauli_text("a", "X", 1.0).unwrap();
        let b = Observable::from_pauli_text("b", "Z", 1.0).unwrap();
        assert_eq!(ObservableSet::new(vec![a.clone(), b]).unwrap().len(), 2);

        let dup = Observable::from_pauli_text("a", "Z", 1.0).unwrap();
        assert!(matches!(
            ObservableSet::new(vec![a.clone(), dup]),
            Err(OperatorError::DuplicateId(_))
        ));
        let wide = Observable::from_pauli_text("w", "XX", 1.0).unwrap();
        assert!(matches!(
            ObservableSet::new(vec![a, wide]),
            Err(OperatorError::MixedWidths { .. })
        ));
    }
}
