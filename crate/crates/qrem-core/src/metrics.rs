//! Distance measures between mitigated and ideal distributions, and the
//! method-comparison statistic.
//!
//! All three distances are non-negative and vanish exactly when the two
//! distributions coincide. KLD uses the natural logarithm.

use serde::{Deserialize, Serialize};

use crate::channel::ProbabilityDistribution;
use crate::error::{Error, Result};

/// Floor applied to mitigated entries inside the KLD logarithm. Relevant only
/// for LI outputs, which can sit exactly on the simplex boundary; softmax
/// outputs are strictly positive.
pub const KLD_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    Mse,
    Kld,
    #[serde(rename = "if")]
    Infidelity,
}

impl MetricKind {
    pub const ALL: [MetricKind; 3] = [MetricKind::Mse, MetricKind::Kld, MetricKind::Infidelity];

    pub fn name(&self) -> &'static str {
        match self {
            MetricKind::Mse => "mse",
            MetricKind::Kld => "kld",
            MetricKind::Infidelity => "if",
        }
    }
}

impl std::fmt::Display for MetricKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

fn check_dims(a: &ProbabilityDistribution, b: &ProbabilityDistribution) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch { expected: a.dim(), actual: b.dim() });
    }
    Ok(())
}

/// Mean squared error `(1/2^n) Σ |p̃_i − p_i|²`.
pub fn mse(mitigated: &ProbabilityDistribution, ideal: &ProbabilityDistribution) -> Result<f64> {
    check_dims(mitigated, ideal)?;
    let sum = kahan_sum(
        mitigated
            .values()
            .iter()
            .zip(ideal.values())
            .map(|(a, b)| (a - b) * (a - b)),
    );
    Ok(sum / mitigated.dim() as f64)
}

/// Kullback-Leibler divergence `Σ p_i ln(p_i / p̃_i)` with the conventions
/// `0·ln(0/x) = 0` and p̃ entries floored at [`KLD_CLAMP`]. Argument order is
/// (ideal, mitigated).
pub fn kld(ideal: &ProbabilityDistribution, mitigated: &ProbabilityDistribution) -> Result<f64> {
    check_dims(ideal, mitigated)?;
    let sum = kahan_sum(ideal.values().iter().zip(mitigated.values()).map(|(&p, &q)| {
        if p == 0.0 {
            0.0
        } else {
            p * (p / q.max(KLD_CLAMP)).ln()
        }
    }));
    Ok(sum)
}

/// Infidelity `1 − (Σ √(p_i p̃_i))²`, the quantum state infidelity of two
/// diagonal density matrices. Always in [0, 1].
///
/// The squared overlap is expanded as `Σ p_i p̃_i + 2 Σ_{i<j} r_i r_j` with
/// `r_i = √(p_i p̃_i)`: the diagonal terms carry no square-root rounding, so
/// single-overlap cases (e.g. one-hot p̃) come out exact.
pub fn infidelity(
    p: &ProbabilityDistribution,
    q: &ProbabilityDistribution,
) -> Result<f64> {
    check_dims(p, q)?;
    let roots: Vec<f64> =
        p.values().iter().zip(q.values()).map(|(a, b)| (a * b).sqrt()).collect();
    let diagonal = kahan_sum(p.values().iter().zip(q.values()).map(|(a, b)| a * b));
    let mut cross = 0.0;
    for i in 0..roots.len() {
        if roots[i] == 0.0 {
            continue;
        }
        for j in i + 1..roots.len() {
            cross += roots[i] * roots[j];
        }
    }
    Ok((1.0 - (diagonal + 2.0 * cross)).clamp(0.0, 1.0))
}

/// Evaluates one metric; argument order is (ideal, mitigated) for all kinds.
pub fn evaluate(
    kind: MetricKind,
    ideal: &ProbabilityDistribution,
    mitigated: &ProbabilityDistribution,
) -> Result<f64> {
    match kind {
        MetricKind::Mse => mse(mitigated, ideal),
        MetricKind::Kld => kld(ideal, mitigated),
        MetricKind::Infidelity => infidelity(ideal, mitigated),
    }
}

/// Performance improvement ratio `(d_li − d_nn) / d_nn × 100` in percent;
/// positive means the NN method wins. `d_nn == 0` is signaled as
/// [`Error::NnExact`] rather than dividing.
pub fn improvement_ratio(d_li: f64, d_nn: f64) -> Result<f64> {
    if !(d_li.is_finite() && d_nn.is_finite()) || d_li < 0.0 || d_nn < 0.0 {
        return Err(Error::InvalidConfig(format!(
            "improvement ratio needs non-negative finite errors, got li={d_li}, nn={d_nn}"
        )));
    }
    if d_nn == 0.0 {
        return Err(Error::NnExact);
    }
    Ok((d_li - d_nn) / d_nn * 100.0)
}

/// Kahan-compensated sum; keeps metric averaging reassociation-stable well
/// below 1e-12.
pub fn kahan_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for x in values {
        let y = x - c;
        let t = sum + y;
        c = (t - sum) - y;
        sum = t;
    }
    sum
}

/// Compensated mean.
pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    kahan_sum(values.iter().copied()) / values.len() as f64
}

/// Compensated mean and standard error (sample std / √N).
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let m = mean(values);
    if n == 1 {
        return (m, 0.0);
    }
    let var = kahan_sum(values.iter().map(|v| (v - m) * (v - m))) / (n - 1) as f64;
    (m, (var / n as f64).sqrt())
}


#[cfg(test)]
mod symmetry_tests {
    use super::*;

    fn dist(values: &[f64]) -> ProbabilityDistribution {
        let n = values.len().trailing_zeros() as usize;
        ProbabilityDistribution::new(n, values.to_vec()).unwrap()
    }

    #[test]
    fn mse_and_infidelity_are_symmetric() {
        let p = dist(&[0.7, 0.1, 0.15, 0.05]);
        let q = dist(&[0.2, 0.4, 0.3, 0.1]);
        assert_eq!(mse(&p, &q).unwrap(), mse(&q, &p).unwrap());
        assert_eq!(infidelity(&p, &q).unwrap(), infidelity(&q, &p).unwrap());
    }

    #[test]
    fn infidelity_stays_in_unit_interval() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand::rngs::StdRng::seed_from_u64(3);
        for _ in 0..500 {
            let draw = |rng: &mut rand::rngs::StdRng| {
                let raw: Vec<f64> = (0..4).map(|_| rng.random_range(0.0..1.0)).collect();
                let sum: f64 = raw.iter().sum::<f64>().max(1e-9);
                dist(&raw.iter().map(|v| v / sum).collect::<Vec<_>>())
            };
            let p = draw(&mut rng);
            let q = draw(&mut rng);
            let v = infidelity(&p, &q).unwrap();
            assert!((0.0..=1.0).contains(&v));
        }
    }
}
