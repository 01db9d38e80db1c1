//! Ideal product-state measurement distributions and synthetic noisy readout
//! channels, with finite-shot sampling and optional temporal drift.
//!
//! Bit-order convention (used everywhere in this crate): qubit 0 is the most
//! significant bit of a basis-state index. For an `n`-qubit index `b`, the
//! bit of qubit `q` is `(b >> (n - 1 - q)) & 1`, and joint vectors/matrices
//! are Kronecker products with qubit 0 as the first (slowest) factor.

use std::f64::consts::TAU;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Absolute tolerance on probability-vector normalization.
pub const SUM_TOLERANCE: f64 = 1e-9;

/// A distribution over the 2^n computational basis states: non-negative
/// entries summing to 1 within [`SUM_TOLERANCE`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ProbabilityDistributionWire", into = "ProbabilityDistributionWire")]
pub struct ProbabilityDistribution {
    num_qubits: usize,
    values: Vec<f64>,
}

/// Serialized as a bare vector; the qubit count is recovered from the length.
#[derive(Serialize, Deserialize, Clone)]
struct ProbabilityDistributionWire(Vec<f64>);

impl From<ProbabilityDistribution> for ProbabilityDistributionWire {
    fn from(p: ProbabilityDistribution) -> Self {
        ProbabilityDistributionWire(p.values)
    }
}

impl TryFrom<ProbabilityDistributionWire> for ProbabilityDistribution {
    type Error = Error;

    fn try_from(w: ProbabilityDistributionWire) -> Result<Self> {
        let n = qubits_for_len(w.0.len())?;
        ProbabilityDistribution::new(n, w.0)
    }
}

fn qubits_for_len(len: usize) -> Result<usize> {
    if len >= 2 && len.is_power_of_two() {
        Ok(len.trailing_zeros() as usize)
    } else {
        Err(Error::InvalidDistribution(format!(
            "length {len} is not 2^n for any n >= 1"
        )))
    }
}

impl ProbabilityDistribution {
    /// Validates the invariants: length 2^n, entries finite and >= 0, sum
    /// within [`SUM_TOLERANCE`] of 1.
    pub fn new(num_qubits: usize, values: Vec<f64>) -> Result<Self> {
        if num_qubits == 0 {
            return Err(Error::InvalidDistribution("need at least one qubit".into()));
        }
        let dim = 1usize << num_qubits;
        if values.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, actual: values.len() });
        }
        let mut sum = 0.0;
        for &v in &values {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidDistribution(format!("entry {v} out of range")));
            }
            sum += v;
        }
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidDistribution(format!(
                "entries sum to {sum}, expected 1 within {SUM_TOLERANCE}"
            )));
        }
        Ok(ProbabilityDistribution { num_qubits, values })
    }

    /// Uniform distribution over all basis states.
    pub fn uniform(num_qubits: usize) -> Self {
        let dim = 1usize << num_qubits;
        ProbabilityDistribution { num_qubits, values: vec![1.0 / dim as f64; dim] }
    }

    /// One-hot distribution on basis state `index`.
    pub fn basis_state(num_qubits: usize, index: usize) -> Result<Self> {
        let dim = 1usize << num_qubits;
        if index >= dim {
            return Err(Error::InvalidDistribution(format!(
                "basis index {index} out of range for {num_qubits} qubits"
            )));
        }
        let mut values = vec![0.0; dim];
        values[index] = 1.0;
        Ok(ProbabilityDistribution { num_qubits, values })
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Probability that qubit `q` reads 1, i.e. the marginal over all basis
    /// states whose bit for `q` is set.
    pub fn excited_marginal(&self, qubit: usize) -> f64 {
        debug_assert!(qubit < self.num_qubits);
        let shift = self.num_qubits - 1 - qubit;
        self.values
            .iter()
            .enumerate()
            .filter(|(b, _)| (b >> shift) & 1 == 1)
            .map(|(_, v)| v)
            .sum()
    }

    /// Mean excited-state marginal over all qubits.
    pub fn mean_excited_marginal(&self) -> f64 {
        (0..self.num_qubits).map(|q| self.excited_marginal(q)).sum::<f64>()
            / self.num_qubits as f64
    }

    /// Total-variation distance to another distribution of the same size.
    pub fn total_variation(&self, other: &ProbabilityDistribution) -> f64 {
        0.5 * self
            .values
            .iter()
            .zip(other.values())
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
    }
}

/// Per-qubit rotation angles, each normalized into [0, 2π).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct AngleVector {
    angles: Vec<f64>,
}

impl From<AngleVector> for Vec<f64> {
    fn from(a: AngleVector) -> Self {
        a.angles
    }
}

impl TryFrom<Vec<f64>> for AngleVector {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        AngleVector::new(v)
    }
}

impl AngleVector {
    pub fn new(angles: Vec<f64>) -> Result<Self> {
        if angles.is_empty() {
            return Err(Error::InvalidAngles("empty angle vector".into()));
        }
        let normalized = angles
            .into_iter()
            .map(|a| {
                if !a.is_finite() {
                    return Err(Error::InvalidAngles(format!("angle {a} is not finite")));
                }
                let mut r = a.rem_euclid(TAU);
                // rem_euclid can round up to TAU for tiny negative inputs.
                if r >= TAU {
                    r = 0.0;
                }
                Ok(r)
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok(AngleVector { angles: normalized })
    }

    /// Draws `n` angles independently and uniformly from [0, 2π).
    pub fn random<R: Rng>(n: usize, rng: &mut R) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidAngles("empty angle vector".into()));
        }
        let angles = (0..n).map(|_| rng.random_range(0.0..TAU)).collect();
        Ok(AngleVector { angles })
    }

    pub fn len(&self) -> usize {
        self.angles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles.is_empty()
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }
}

/// Exact measurement-outcome distribution of the product state prepared by
/// rotating each qubit `i` by `R_y(θ_i)`: entry `b` is
/// `∏_i cos²(θ_i/2)^(1-b_i) · sin²(θ_i/2)^(b_i)`.
pub fn ideal_distribution(angles: &AngleVector) -> ProbabilityDistribution {
    let n = angles.len();
    let dim = 1usize << n;
    let per_qubit: Vec<(f64, f64)> = angles
        .angles()
        .iter()
        .map(|&t| {
            let c = (t / 2.0).cos();
            let s = (t / 2.0).sin();
            (c * c, s * s)
        })
        .collect();
    let mut values = vec![0.0; dim];
    for (b, slot) in values.iter_mut().enumerate() {
        let mut prob = 1.0;
        for (q, &(p0, p1)) in per_qubit.iter().enumerate() {
            let bit = (b >> (n - 1 - q)) & 1;
            prob *= if bit == 1 { p1 } else { p0 };
        }
        *slot = prob;
    }
    ProbabilityDistribution { num_qubits: n, values }
}

/// Per-qubit readout flip probabilities: `eps01` flips a true 0 to an
/// observed 1, `eps10` flips a true 1 to an observed 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlipRates {
    pub eps01: f64,
    pub eps10: f64,
}

impl FlipRates {
    pub fn new(eps01: f64, eps10: f64) -> Result<Self> {
        for (name, v) in [("eps01", eps01), ("eps10", eps10)] {
            if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidChannel(format!("{name} = {v} outside [0, 1]")));
            }
        }
        Ok(FlipRates { eps01, eps10 })
    }

    /// Single-qubit confusion matrix: column j is the observed distribution
    /// when the true state is j.
    pub fn confusion_matrix(&self) -> Matrix {
        Matrix::from_row_major(
            2,
            2,
            vec![1.0 - self.eps01, self.eps10, self.eps01, 1.0 - self.eps10],
        )
        .expect("2x2 buffer")
    }
}

/// Tensor product of per-qubit confusion matrices, qubit 0 as the most
/// significant factor.
pub fn tensor_confusion_matrix(rates: &[FlipRates]) -> Matrix {
    let mut m = Matrix::identity(1);
    for r in rates {
        m = m.kron(&r.confusion_matrix());
    }
    m
}

fn check_column_stochastic(lambda: &Matrix) -> Result<()> {
    let d = lambda.rows();
    if lambda.cols() != d {
        return Err(Error::InvalidChannel("lambda must be square".into()));
    }
    for c in 0..d {
        let mut sum = 0.0;
        for r in 0..d {
            let v = lambda.get(r, c);
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidChannel(format!(
                    "lambda[{r}][{c}] = {v} is not a probability"
                )));
            }
            sum += v;
        }
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidChannel(format!(
                "column {c} sums to {sum}, expected 1 within {SUM_TOLERANCE}"
            )));
        }
    }
    Ok(())
}

/// Linear readout channel: `p̂ = Λ p` for a column-stochastic Λ.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearChannel {
    n: usize,
    lambda: Matrix,
}

impl LinearChannel {
    /// Validates that `lambda` is 2^n x 2^n and column-stochastic.
    pub fn new(n: usize, lambda: Matrix) -> Result<Self> {
        let dim = 1usize << n;
        if n == 0 {
            return Err(Error::InvalidChannel("need at least one qubit".into()));
        }
        if lambda.rows() != dim {
            return Err(Error::DimensionMismatch { expected: dim, actual: lambda.rows() });
        }
        check_column_stochastic(&lambda)?;
        Ok(LinearChannel { n, lambda })
    }

    pub fn identity(n: usize) -> Result<Self> {
        LinearChannel::new(n, Matrix::identity(1 << n))
    }

    /// Builds Λ as the tensor product of per-qubit confusion matrices.
    pub fn from_flip_rates(rates: &[FlipRates]) -> Result<Self> {
        if rates.is_empty() {
            return Err(Error::InvalidChannel("need at least one qubit".into()));
        }
        LinearChannel::new(rates.len(), tensor_confusion_matrix(rates))
    }

    pub fn num_qubits(&self) -> usize {
        self.n
    }

    pub fn lambda(&self) -> &Matrix {
        &self.lambda
    }

    pub fn apply(&self, p: &ProbabilityDistribution) -> Result<ProbabilityDistribution> {
        if p.num_qubits() != self.n {
            return Err(Error::DimensionMismatch {
                expected: 1 << self.n,
                actual: p.dim(),
            });
        }
        let values = self.lambda.matvec(p.values());
        ProbabilityDistribution::new(self.n, values)
    }
}

/// Non-linear readout channel. The per-qubit `eps10` rates are modulated by
/// the input's mean excited-state marginal m̄(p):
/// `eps10_i(p) = clamp(eps10_i + κ·m̄(p), 0, 1)`, after which the resulting
/// state-dependent tensor-product stochastic matrix is applied. With κ = 0
/// this reduces exactly to the linear tensor-product channel.
#[derive(Debug, Clone, PartialEq)]
pub struct NonlinearChannel {
    n: usize,
    rates: Vec<FlipRates>,
    kappa: f64,
}

impl NonlinearChannel {
    pub fn new(rates: Vec<FlipRates>, kappa: f64) -> Result<Self> {
        if rates.is_empty() {
            return Err(Error::InvalidChannel("need at least one qubit".into()));
        }
        if !kappa.is_finite() {
            return Err(Error::InvalidChannel(format!("kappa = {kappa} is not finite")));
        }
        Ok(NonlinearChannel { n: rates.len(), rates, kappa })
    }

    pub fn num_qubits(&self) -> usize {
        self.n
    }

    pub fn flip_rates(&self) -> &[FlipRates] {
        &self.rates
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// Effective flip rates for input `p` (eps10 modulated, clamped to [0,1]).
    pub fn effective_rates(&self, p: &ProbabilityDistribution) -> Vec<FlipRates> {
        let shift = self.kappa * p.mean_excited_marginal();
        self.rates
            .iter()
            .map(|r| FlipRates {
                eps01: r.eps01,
                eps10: (r.eps10 + shift).clamp(0.0, 1.0),
            })
            .collect()
    }

    pub fn apply(&self, p: &ProbabilityDistribution) -> Result<ProbabilityDistribution> {
        if p.num_qubits() != self.n {
            return Err(Error::DimensionMismatch {
                expected: 1 << self.n,
                actual: p.dim(),
            });
        }
        let lambda = tensor_confusion_matrix(&self.effective_rates(p));
        ProbabilityDistribution::new(self.n, lambda.matvec(p.values()))
    }
}

/// Which channel parameter a drift schedule perturbs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DriftParam {
    Eps01,
    Eps10,
    Kappa,
}

/// Shape of the perturbation as a function of the time index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DriftShape {
    /// delta(t) = rate * t
    Ramp,
    /// delta(t) = rate * sin(t), t in time-step units (radians)
    Sine,
}

/// Time-dependent perturbation of one named channel parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftSchedule {
    pub param: DriftParam,
    pub shape: DriftShape,
    pub rate: f64,
}

impl DriftSchedule {
    pub fn delta(&self, t: i64) -> f64 {
        match self.shape {
            DriftShape::Ramp => self.rate * t as f64,
            DriftShape::Sine => self.rate * (t as f64).sin(),
        }
    }
}

/// Channel whose flip-rate parameters drift over a discrete time index.
/// `kappa = None` yields concrete linear (tensor-product) channels,
/// `Some(κ)` concrete non-linear ones.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftingChannel {
    n: usize,
    rates: Vec<FlipRates>,
    kappa: Option<f64>,
    schedule: DriftSchedule,
}

impl DriftingChannel {
    pub fn new(rates: Vec<FlipRates>, kappa: Option<f64>, schedule: DriftSchedule) -> Result<Self> {
        if rates.is_empty() {
            return Err(Error::InvalidChannel("need at least one qubit".into()));
        }
        if let Some(k) = kappa {
            if !k.is_finite() {
                return Err(Error::InvalidChannel(format!("kappa = {k} is not finite")));
            }
        }
        if schedule.param == DriftParam::Kappa && kappa.is_none() {
            return Err(Error::InvalidChannel(
                "drift on kappa requires a nonlinear base channel".into(),
            ));
        }
        if !schedule.rate.is_finite() {
            return Err(Error::InvalidChannel("drift rate is not finite".into()));
        }
        Ok(DriftingChannel { n: rates.len(), rates, kappa, schedule })
    }

    pub fn num_qubits(&self) -> usize {
        self.n
    }

    pub fn schedule(&self) -> &DriftSchedule {
        &self.schedule
    }

    /// Concrete channel at time index `t`; `drift_at(0)` is the base channel.
    /// Negative time indices are rejected.
    pub fn drift_at(&self, t: i64) -> Result<NoiseChannel> {
        if t < 0 {
            return Err(Error::InvalidChannel(format!("negative time index {t}")));
        }
        let delta = self.schedule.delta(t);
        let mut rates = self.rates.clone();
        let mut kappa = self.kappa;
        match self.schedule.param {
            DriftParam::Eps01 => {
                for r in &mut rates {
                    r.eps01 = (r.eps01 + delta).clamp(0.0, 1.0);
                }
            }
            DriftParam::Eps10 => {
                for r in &mut rates {
                    r.eps10 = (r.eps10 + delta).clamp(0.0, 1.0);
                }
            }
            DriftParam::Kappa => {
                kappa = kappa.map(|k| k + delta);
            }
        }
        match kappa {
            Some(k) => Ok(NoiseChannel::Nonlinear(NonlinearChannel::new(rates, k)?)),
            None => Ok(NoiseChannel::Linear(LinearChannel::from_flip_rates(&rates)?)),
        }
    }
}

/// The simulated readout error map: the ground truth that hardware supplies
/// in a real experiment.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseChannel {
    Linear(LinearChannel),
    Nonlinear(NonlinearChannel),
    Drifting(DriftingChannel),
}

impl NoiseChannel {
    pub fn num_qubits(&self) -> usize {
        match self {
            NoiseChannel::Linear(c) => c.num_qubits(),
            NoiseChannel::Nonlinear(c) => c.num_qubits(),
            NoiseChannel::Drifting(c) => c.num_qubits(),
        }
    }

    /// Applies the channel to `p`. Drifting channels must be resolved with
    /// [`DriftingChannel::drift_at`] first.
    pub fn apply(&self, p: &ProbabilityDistribution) -> Result<ProbabilityDistribution> {
        match self {
            NoiseChannel::Linear(c) => c.apply(p),
            NoiseChannel::Nonlinear(c) => c.apply(p),
            NoiseChannel::Drifting(_) => Err(Error::InvalidChannel(
                "drifting channel must be resolved with drift_at(t) before application".into(),
            )),
        }
    }

    /// Short human-readable description for reports.
    pub fn description(&self) -> String {
        match self {
            NoiseChannel::Linear(c) => format!("linear(n={})", c.num_qubits()),
            NoiseChannel::Nonlinear(c) => format!(
                "nonlinear(n={}, kappa={})",
                c.num_qubits(),
                c.kappa()
            ),
            NoiseChannel::Drifting(c) => {
                let s = c.schedule();
                format!(
                    "drifting(n={}, param={:?}, shape={:?}, rate={})",
                    c.num_qubits(),
                    s.param,
                    s.shape,
                    s.rate
                )
            }
        }
    }

    pub fn from_config(cfg: &ChannelConfig) -> Result<NoiseChannel> {
        cfg.build()
    }

    pub fn to_config(&self) -> ChannelConfig {
        match self {
            NoiseChannel::Linear(c) => ChannelConfig {
                kind: ChannelKind::Linear,
                n: c.num_qubits(),
                lambda: Some(c.lambda().as_slice().to_vec()),
                flip_rates: None,
                kappa: None,
                drift: None,
            },
            NoiseChannel::Nonlinear(c) => ChannelConfig {
                kind: ChannelKind::Nonlinear,
                n: c.num_qubits(),
                lambda: None,
                flip_rates: Some(c.rates.iter().map(|r| (r.eps01, r.eps10)).collect()),
                kappa: Some(c.kappa()),
                drift: None,
            },
            NoiseChannel::Drifting(c) => ChannelConfig {
                kind: ChannelKind::Drifting,
                n: c.num_qubits(),
                lambda: None,
                flip_rates: Some(c.rates.iter().map(|r| (r.eps01, r.eps10)).collect()),
                kappa: c.kappa,
                drift: Some(*c.schedule()),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelKind {
    Linear,
    Nonlinear,
    Drifting,
}

/// Serialized channel description. Field names are part of the format
/// contract: {"kind", "n", "lambda" (row-major, optional), "flip_rates"
/// ([[eps01, eps10], …]), "kappa", "drift": {"param", "shape", "rate"}}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    pub kind: ChannelKind,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flip_rates: Option<Vec<(f64, f64)>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift: Option<DriftSchedule>,
}

impl ChannelConfig {
    fn parse_rates(&self) -> Result<Vec<FlipRates>> {
        let raw = self
            .flip_rates
            .as_ref()
            .ok_or_else(|| Error::InvalidChannel("flip_rates missing".into()))?;
        if raw.len() != self.n {
            return Err(Error::InvalidChannel(format!(
                "flip_rates has {} entries for n={}",
                raw.len(),
                self.n
            )));
        }
        raw.iter().map(|&(e01, e10)| FlipRates::new(e01, e10)).collect()
    }

    /// Validates and builds the runtime channel.
    pub fn build(&self) -> Result<NoiseChannel> {
        if self.n == 0 {
            return Err(Error::InvalidChannel("need at least one qubit".into()));
        }
        match self.kind {
            ChannelKind::Linear => {
                if let Some(flat) = &self.lambda {
                    let dim = 1usize << self.n;
                    let m = Matrix::from_row_major(dim, dim, flat.clone())?;
                    Ok(NoiseChannel::Linear(LinearChannel::new(self.n, m)?))
                } else {
                    let rates = self.parse_rates()?;
                    Ok(NoiseChannel::Linear(LinearChannel::from_flip_rates(&rates)?))
                }
            }
            ChannelKind::Nonlinear => {
                let rates = self.parse_rates()?;
                let kappa = self
                    .kappa
                    .ok_or_else(|| Error::InvalidChannel("kappa missing".into()))?;
                Ok(NoiseChannel::Nonlinear(NonlinearChannel::new(rates, kappa)?))
            }
            ChannelKind::Drifting => {
                let rates = self.parse_rates()?;
                let schedule = self
                    .drift
                    .ok_or_else(|| Error::InvalidChannel("drift schedule missing".into()))?;
                Ok(NoiseChannel::Drifting(DriftingChannel::new(rates, self.kappa, schedule)?))
            }
        }
    }
}

/// Shot budget: a finite repetition count or the infinite-shot bypass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shots {
    /// No sampling; the distribution passes through exactly.
    Exact,
    Count(u64),
}

impl Shots {
    pub fn validate(&self) -> Result<()> {
        match self {
            Shots::Exact => Ok(()),
            Shots::Count(0) => Err(Error::InvalidConfig("shots must be >= 1".into())),
            Shots::Count(_) => Ok(()),
        }
    }
}

impl Serialize for Shots {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Shots::Exact => s.serialize_str("exact"),
            Shots::Count(c) => s.serialize_u64(*c),
        }
    }
}

impl<'de> Deserialize<'de> for Shots {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl serde::de::Visitor<'_> for V {
            type Value = Shots;

            fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
                f.write_str("a shot count or the string \"exact\"")
            }

            fn visit_u64<E: serde::de::Error>(self, v: u64) -> std::result::Result<Shots, E> {
                Ok(Shots::Count(v))
            }

            fn visit_i64<E: serde::de::Error>(self, v: i64) -> std::result::Result<Shots, E> {
                u64::try_from(v)
                    .map(Shots::Count)
                    .map_err(|_| E::custom(format!("negative shot count {v}")))
            }

            fn visit_str<E: serde::de::Error>(self, v: &str) -> std::result::Result<Shots, E> {
                if v == "exact" {
                    Ok(Shots::Exact)
                } else {
                    Err(E::custom(format!("expected \"exact\", got {v:?}")))
                }
            }
        }
        d.deserialize_any(V)
    }
}

/// Finite-shot multinomial sampler. Sampling is a pure function of
/// (seed, shots, distribution); create one sampler per task from a master
/// seed via [`crate::seeds::derive_seed_indexed`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShotSampler {
    shots: u64,
    seed: u64,
}

impl ShotSampler {
    pub fn new(shots: u64, seed: u64) -> Result<Self> {
        if shots == 0 {
            return Err(Error::InvalidConfig("shots must be >= 1".into()));
        }
        Ok(ShotSampler { shots, seed })
    }

    pub fn shots(&self) -> u64 {
        self.shots
    }

    /// Draws `shots` outcomes from the multinomial distribution `p` and
    /// returns normalized empirical frequencies. Counts are generated by
    /// conditional binomial chaining, so the cost is O(dim) rather than
    /// O(shots).
    pub fn sample(&self, p: &ProbabilityDistribution) -> ProbabilityDistribution {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let values = p.values();
        let dim = values.len();
        let mut counts = vec![0u64; dim];
        let mut remaining = self.shots;
        let mut mass = 1.0f64;
        for i in 0..dim - 1 {
            if remaining == 0 {
                break;
            }
            let cond = if mass > 0.0 { (values[i] / mass).clamp(0.0, 1.0) } else { 1.0 };
            let draw = Binomial::new(remaining, cond)
                .expect("conditional probability clamped to [0, 1]")
                .sample(&mut rng);
            counts[i] = draw;
            remaining -= draw;
            mass -= values[i];
        }
        counts[dim - 1] += remaining;
        let freq: Vec<f64> =
            counts.iter().map(|&c| c as f64 / self.shots as f64).collect();
        ProbabilityDistribution { num_qubits: p.num_qubits(), values: freq }
    }
}

/// Samples `p` under the given shot budget: `Shots::Exact` is the identity,
/// `Shots::Count(c)` draws from a [`ShotSampler`] seeded with `seed`.
pub fn sample(shots: Shots, seed: u64, p: &ProbabilityDistribution) -> ProbabilityDistribution {
    match shots {
        Shots::Exact => p.clone(),
        Shots::Count(c) => ShotSampler { shots: c.max(1), seed }.sample(p),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn angles(v: &[f64]) -> AngleVector {
        AngleVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn ideal_all_ground() {
        let p = ideal_distribution(&angles(&[0.0, 0.0]));
        assert_eq!(p.values(), &[1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn ideal_all_excited() {
        let p = ideal_distribution(&angles(&[PI, PI]));
        for (i, &v) in p.values().iter().enumerate() {
            let expect = if i == 3 { 1.0 } else { 0.0 };
            assert_abs_diff_eq!(v, expect, epsilon = 1e-30);
        }
    }

    #[test]
    fn ideal_uniform_superposition() {
        let p = ideal_distribution(&angles(&[PI / 2.0, PI / 2.0]));
        for &v in p.values() {
            assert_abs_diff_eq!(v, 0.25, epsilon = 1e-15);
        }
    }

    #[test]
    fn ideal_random_instance_matches_oracle() {
        // Frozen from the independent per-qubit tensor oracle.
        let p = ideal_distribution(&angles(&[1.0, 2.3]));
        let expected = [
            0.12850895348654426,
            0.6416421994475255,
            0.038353035873543724,
            0.1914958111923864,
        ];
        for (v, e) in p.values().iter().zip(expected) {
            assert_abs_diff_eq!(v, &e, epsilon = 1e-15);
        }
    }

    #[test]
    fn ideal_rejects_empty() {
        assert!(AngleVector::new(vec![]).is_err());
    }

    #[test]
    fn angles_normalize_mod_tau() {
        let a = angles(&[-0.5, TAU + 0.25, 7.0 * PI]);
        assert_abs_diff_eq!(a.angles()[0], TAU - 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(a.angles()[1], 0.25, epsilon = 1e-12);
        assert_abs_diff_eq!(a.angles()[2], PI, epsilon = 1e-9);
        for &x in a.angles() {
            assert!((0.0..TAU).contains(&x));
        }
    }

    #[test]
    fn linear_column_extraction() {
        let m = Matrix::from_row_major(2, 2, vec![0.9, 0.2, 0.1, 0.8]).unwrap();
        let ch = LinearChannel::new(1, m).unwrap();
        let p = ProbabilityDistribution::new(1, vec![1.0, 0.0]).unwrap();
        let out = ch.apply(&p).unwrap();
        assert_eq!(out.values(), &[0.9, 0.1]);
    }

    #[test]
    fn linear_identity_channel() {
        let ch = LinearChannel::identity(2).unwrap();
        let p = ideal_distribution(&angles(&[1.0, 2.3]));
        let out = ch.apply(&p).unwrap();
        for (a, b) in out.values().iter().zip(p.values()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-15);
        }
    }

    #[test]
    fn linear_tensor_product_matches_explicit_kron() {
        // Frozen from the independent Kronecker/matvec oracle.
        let r0 = FlipRates::new(0.1, 0.2).unwrap();
        let r1 = FlipRates::new(0.15, 0.05).unwrap();
        let ch = LinearChannel::from_flip_rates(&[r0, r1]).unwrap();
        let p = ideal_distribution(&angles(&[1.0, 2.3]));
        let out = ch.apply(&p).unwrap();
        let expected = [
            0.13561822260277132,
            0.6034875844510775,
            0.04787136888529908,
            0.21302282406085202,
        ];
        for (v, e) in out.values().iter().zip(expected) {
            assert_abs_diff_eq!(v, &e, epsilon = 1e-15);
        }
    }

    #[test]
    fn linear_rejects_non_stochastic() {
        let m = Matrix::from_row_major(2, 2, vec![0.9, 0.2, 0.2, 0.8]).unwrap();
        assert!(LinearChannel::new(1, m).is_err());
    }

    #[test]
    fn nonlinear_kappa_zero_reduces_to_linear() {
        let rates =
            vec![FlipRates::new(0.03, 0.07).unwrap(), FlipRates::new(0.02, 0.05).unwrap()];
        let nl = NonlinearChannel::new(rates.clone(), 0.0).unwrap();
        let lin = LinearChannel::from_flip_rates(&rates).unwrap();
        let p = ideal_distribution(&angles(&[1.0, 2.3]));
        let a = nl.apply(&p).unwrap();
        let b = lin.apply(&p).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-12);
        }
    }

    #[test]
    fn nonlinear_all_ground_is_unmodulated() {
        let rates = vec![FlipRates::new(0.05, 0.05).unwrap(); 2];
        let nl = NonlinearChannel::new(rates, 0.4).unwrap();
        let p = ProbabilityDistribution::basis_state(2, 0).unwrap();
        let eff = nl.effective_rates(&p);
        for r in eff {
            assert_abs_diff_eq!(r.eps10, 0.05, epsilon = 1e-15);
        }
    }

    #[test]
    fn nonlinear_uniform_input_matches_oracle() {
        // Frozen from the independent modulated-matrix oracle:
        // m̄ = 0.5, eps10 -> 0.15, explicit 4x4 matvec.
        let rates = vec![FlipRates::new(0.05, 0.05).unwrap(); 2];
        let nl = NonlinearChannel::new(rates, 0.2).unwrap();
        let out = nl.apply(&ProbabilityDistribution::uniform(2)).unwrap();
        let expected = [0.3025, 0.2475, 0.2475, 0.2025];
        for (v, e) in out.values().iter().zip(expected) {
            assert_abs_diff_eq!(v, &e, epsilon = 1e-15);
        }
    }

    #[test]
    fn drift_at_zero_is_base() {
        let rates = vec![FlipRates::new(0.02, 0.05).unwrap(); 2];
        let schedule =
            DriftSchedule { param: DriftParam::Eps10, shape: DriftShape::Ramp, rate: 0.001 };
        let ch = DriftingChannel::new(rates.clone(), None, schedule).unwrap();
        match ch.drift_at(0).unwrap() {
            NoiseChannel::Linear(l) => {
                let base = LinearChannel::from_flip_rates(&rates).unwrap();
                assert_eq!(l.lambda(), base.lambda());
            }
            other => panic!("expected linear channel, got {other:?}"),
        }
    }

    #[test]
    fn drift_ramp_arithmetic() {
        let rates = vec![FlipRates::new(0.02, 0.05).unwrap(); 2];
        let schedule =
            DriftSchedule { param: DriftParam::Eps10, shape: DriftShape::Ramp, rate: 0.001 };
        let ch = DriftingChannel::new(rates, Some(0.1), schedule).unwrap();
        match ch.drift_at(10).unwrap() {
            NoiseChannel::Nonlinear(nl) => {
                for r in nl.flip_rates() {
                    assert_abs_diff_eq!(r.eps10, 0.06, epsilon = 1e-15);
                    assert_abs_diff_eq!(r.eps01, 0.02, epsilon = 1e-15);
                }
            }
            other => panic!("expected nonlinear channel, got {other:?}"),
        }
    }

    #[test]
    fn drift_full_application_matches_oracle() {
        // Frozen from the independent drift-then-kron oracle at t = 10.
        let rates = vec![FlipRates::new(0.02, 0.05).unwrap(); 2];
        let schedule =
            DriftSchedule { param: DriftParam::Eps10, shape: DriftShape::Ramp, rate: 0.001 };
        let ch = DriftingChannel::new(rates, None, schedule).unwrap();
        let at10 = ch.drift_at(10).unwrap();
        let p = ProbabilityDistribution::new(2, vec![0.4, 0.3, 0.2, 0.1]).unwrap();
        let out = at10.apply(&p).unwrap();
        let expected = [0.41392, 0.29008, 0.19808, 0.09792];
        for (v, e) in out.values().iter().zip(expected) {
            assert_abs_diff_eq!(v, &e, epsilon = 1e-15);
        }
    }

    #[test]
    fn drift_rejects_negative_time() {
        let rates = vec![FlipRates::new(0.02, 0.05).unwrap()];
        let schedule =
            DriftSchedule { param: DriftParam::Eps10, shape: DriftShape::Ramp, rate: 0.001 };
        let ch = DriftingChannel::new(rates, None, schedule).unwrap();
        assert!(ch.drift_at(-1).is_err());
    }

    #[test]
    fn sample_exact_bypass_is_identity() {
        let p = ideal_distribution(&angles(&[1.0, 2.3]));
        let out = sample(Shots::Exact, 99, &p);
        assert_eq!(out, p);
    }

    #[test]
    fn sample_degenerate_distribution() {
        let p = ProbabilityDistribution::new(1, vec![1.0, 0.0]).unwrap();
        let s = ShotSampler::new(1000, 5).unwrap();
        assert_eq!(s.sample(&p).values(), &[1.0, 0.0]);
    }

    #[test]
    fn sample_reproducible_and_close() {
        let p = ProbabilityDistribution::new(1, vec![0.5, 0.5]).unwrap();
        let s = ShotSampler::new(10_000, 1234).unwrap();
        let a = s.sample(&p);
        let b = s.sample(&p);
        assert_eq!(a, b);
        assert!((a.values()[0] - 0.5).abs() < 0.02);
    }

    #[test]
    fn channel_config_round_trip() {
        let cfg = ChannelConfig {
            kind: ChannelKind::Drifting,
            n: 2,
            lambda: None,
            flip_rates: Some(vec![(0.02, 0.05), (0.03, 0.04)]),
            kappa: Some(0.2),
            drift: Some(DriftSchedule {
                param: DriftParam::Eps10,
                shape: DriftShape::Ramp,
                rate: 0.001,
            }),
        };
        let json = serde_json::to_string(&cfg).unwrap();
        let back: ChannelConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(cfg, back);
        let ch = back.build().unwrap();
        assert_eq!(ch.to_config(), cfg);
    }

    #[test]
    fn excited_marginal_uses_msb_order() {
        // Basis state 2 = |10>: qubit 0 excited, qubit 1 not.
        let p = ProbabilityDistribution::basis_state(2, 2).unwrap();
        assert_eq!(p.excited_marginal(0), 1.0);
        assert_eq!(p.excited_marginal(1), 0.0);
    }
}
