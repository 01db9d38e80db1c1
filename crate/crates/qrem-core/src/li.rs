//! The linear-inversion baseline: response-matrix tomography from
//! computational-basis preparations and least-squares correction constrained
//! to the probability simplex.
//!
//! The constrained solve is projected gradient descent on `‖Λx − p̂‖²` with a
//! Euclidean simplex projection each step: dependency-free and certifiable
//! against a grid-search oracle.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::channel::{NoiseChannel, ProbabilityDistribution, Shots, SUM_TOLERANCE};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::seeds::derive_seed_indexed;

/// Solver controls; fixed by design rather than user-tunable.
const MAX_ITERATIONS: usize = 10_000;
const MOVE_TOLERANCE: f64 = 1e-10;
const RIDGE: f64 = 1e-10;
const CONDITION_LIMIT: f64 = 1e12;

/// Empirical response matrix: column j is the observed distribution when
/// basis state j is prepared. `shots_per_column == 0` records exact
/// (infinite-shot) calibration.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseMatrix {
    n: usize,
    lambda: Matrix,
    shots_per_column: u64,
}

#[derive(Serialize, Deserialize)]
struct ResponseMatrixWire {
    n: usize,
    lambda: Vec<f64>,
    shots_per_column: u64,
}

impl ResponseMatrix {
    /// Validates empirical column-stochasticity.
    pub fn new(n: usize, lambda: Matrix, shots_per_column: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidChannel("need at least one qubit".into()));
        }
        let dim = 1usize << n;
        if lambda.rows() != dim || lambda.cols() != dim {
            return Err(Error::DimensionMismatch { expected: dim, actual: lambda.rows() });
        }
        for c in 0..dim {
            let mut sum = 0.0;
            for r in 0..dim {
                let v = lambda.get(r, c);
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::InvalidChannel(format!(
                        "response matrix entry [{r}][{c}] = {v} is not a probability"
                    )));
                }
                sum += v;
            }
            if (sum - 1.0).abs() > SUM_TOLERANCE {
                return Err(Error::InvalidChannel(format!(
                    "response matrix column {c} sums to {sum}"
                )));
            }
        }
        Ok(ResponseMatrix { n, lambda, shots_per_column })
    }

    pub fn num_qubits(&self) -> usize {
        self.n
    }

    pub fn lambda(&self) -> &Matrix {
        &self.lambda
    }

    pub fn shots_per_column(&self) -> u64 {
        self.shots_per_column
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let wire = ResponseMatrixWire {
            n: self.n,
            lambda: self.lambda.as_slice().to_vec(),
            shots_per_column: self.shots_per_column,
        };
        let file = File::create(path)?;
        let mut w = BufWriter::new(file);
        serde_json::to_writer(&mut w, &wire)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let wire: ResponseMatrixWire =
            serde_json::from_reader(BufReader::new(File::open(path)?))?;
        let dim = 1usize << wire.n;
        let lambda = Matrix::from_row_major(dim, dim, wire.lambda)?;
        ResponseMatrix::new(wire.n, lambda, wire.shots_per_column)
    }
}

/// Response-matrix tomography against a simulated channel: prepares each of
/// the 2^n computational basis states, applies the channel, and (optionally)
/// samples. Column seeds derive from `seed`.
pub fn calibrate(channel: &NoiseChannel, shots: Shots, seed: u64) -> Result<ResponseMatrix> {
    shots.validate()?;
    let n = channel.num_qubits();
    let dim = 1usize << n;
    let mut lambda = Matrix::zeros(dim, dim);
    for j in 0..dim {
        let prep = ProbabilityDistribution::basis_state(n, j)?;
        let noisy = channel.apply(&prep)?;
        let observed = crate::channel::sample(
            shots,
            derive_seed_indexed(seed, "calib-column", j as u64),
            &noisy,
        );
        lambda.set_column(j, observed.values());
    }
    let per_column = match shots {
        Shots::Exact => 0,
        Shots::Count(c) => c,
    };
    ResponseMatrix::new(n, lambda, per_column)
}

/// Builds a response matrix from a dataset of basis-state preparations
/// (records whose ideal distribution is one-hot). Multiple records for the
/// same basis state are averaged; a missing basis state is an error.
pub fn calibrate_from_records(data: &Dataset) -> Result<ResponseMatrix> {
    let n = data.num_qubits();
    let dim = 1usize << n;
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); dim];
    let mut sums: Vec<Vec<f64>> = vec![vec![0.0; dim]; dim];
    let mut counts = vec![0usize; dim];
    let mut shot_counts = Vec::new();
    for record in data.records() {
        let ideal = record.ideal.values();
        let j = ideal
            .iter()
            .position(|&v| (v - 1.0).abs() <= 1e-9)
            .ok_or_else(|| {
                Error::InvalidDataset("calibration record is not a basis-state preparation".into())
            })?;
        for (slot, &v) in sums[j].iter_mut().zip(record.observed.values()) {
            *slot += v;
        }
        counts[j] += 1;
        if let Shots::Count(c) = record.shots {
            shot_counts.push(c);
        }
    }
    for j in 0..dim {
        if counts[j] == 0 {
            return Err(Error::MissingBasisColumn { index: j });
        }
        columns[j] = sums[j].iter().map(|v| v / counts[j] as f64).collect();
    }
    let mut lambda = Matrix::zeros(dim, dim);
    for (j, col) in columns.iter().enumerate() {
        lambda.set_column(j, col);
    }
    let per_column = match (shot_counts.first(), shot_counts.iter().all(|&c| Some(&c) == shot_counts.first())) {
        (Some(&c), true) => c,
        _ => 0,
    };
    ResponseMatrix::new(n, lambda, per_column)
}

/// Euclidean projection onto the probability simplex (the classic
/// sort-then-threshold algorithm, O(d log d)).
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let d = v.len();
    debug_assert!(d > 0);
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cumulative = 0.0;
    let mut tau = 0.0;
    let mut support = 0;
    for (k, &u) in sorted.iter().enumerate() {
        cumulative += u;
        let candidate = (cumulative - 1.0) / (k + 1) as f64;
        if u - candidate > 0.0 {
            tau = candidate;
            support = k + 1;
        }
    }
    debug_assert!(support > 0);
    v.iter().map(|&x| (x - tau).max(0.0)).collect()
}

/// Prepared solver for repeated mitigation against one response matrix.
/// Precomputes the spectral step size and the ridge fallback; immutable and
/// safe for concurrent use.
#[derive(Debug, Clone)]
pub struct LiSolver {
    lambda: Matrix,
    lambda_t: Matrix,
    n: usize,
    step: f64,
    ridge: f64,
}

impl LiSolver {
    pub fn new(rm: &ResponseMatrix) -> Result<Self> {
        let lambda = rm.lambda().clone();
        let sv = linalg::singular_values(&lambda);
        let sigma_max = sv[0];
        let sigma_min = *sv.last().expect("non-empty spectrum");
        if sigma_max <= 0.0 {
            return Err(Error::SingularMatrix { sigma_max });
        }
        let condition = if sigma_min > 0.0 { sigma_max / sigma_min } else { f64::INFINITY };
        let ridge = if condition > CONDITION_LIMIT { RIDGE } else { 0.0 };
        // Lipschitz constant of the gradient is 2(σ_max² + ridge).
        let step = 1.0 / (sigma_max * sigma_max + ridge);
        Ok(LiSolver {
            lambda_t: lambda.transpose(),
            lambda,
            n: rm.num_qubits(),
            step,
            ridge,
        })
    }

    /// Solves `argmin ‖Λx − p̂‖₂  s.t.  x ≥ 0, Σx = 1`, warm-started at the
    /// projected unconstrained solution. When `Λ⁻¹p̂` already lies on the
    /// simplex the iteration stops there immediately.
    pub fn mitigate(&self, observed: &ProbabilityDistribution) -> Result<ProbabilityDistribution> {
        let dim = self.lambda.rows();
        if observed.dim() != dim {
            return Err(Error::DimensionMismatch { expected: dim, actual: observed.dim() });
        }
        let target = observed.values();
        let mut x = match linalg::solve(&self.lambda, target) {
            Some(unconstrained) => project_simplex(&unconstrained),
            None => project_simplex(target),
        };
        for _ in 0..MAX_ITERATIONS {
            let residual = self.residual_vector(&x, target);
            let mut gradient = self.lambda_t.matvec(&residual);
            for (g, &xi) in gradient.iter_mut().zip(&x) {
                *g = 2.0 * *g + 2.0 * self.ridge * xi;
            }
            let moved: Vec<f64> =
                x.iter().zip(&gradient).map(|(&xi, &g)| xi - self.step * g).collect();
            let next = project_simplex(&moved);
            let movement = x
                .iter()
                .zip(&next)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            x = next;
            if movement <= MOVE_TOLERANCE {
                return ProbabilityDistribution::new(self.n, x);
            }
        }
        let residual_norm = self
            .residual_vector(&x, target)
            .iter()
            .map(|r| r * r)
            .sum::<f64>()
            .sqrt();
        Err(Error::SolverDiverged { iterations: MAX_ITERATIONS, residual: residual_norm })
    }

    fn residual_vector(&self, x: &[f64], target: &[f64]) -> Vec<f64> {
        let mut r = self.lambda.matvec(x);
        for (ri, &t) in r.iter_mut().zip(target) {
            *ri -= t;
        }
        r
    }
}

/// One-shot constrained least-squares mitigation. Prefer [`LiSolver`] when
/// mitigating many distributions against the same matrix.
pub fn mitigate_li(
    rm: &ResponseMatrix,
    observed: &ProbabilityDistribution,
) -> Result<ProbabilityDistribution> {
    LiSolver::new(rm)?.mitigate(observed)
}
