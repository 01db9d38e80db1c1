//! Oracle-backed tests for the linear-inversion baseline: exact recovery on
//! linear noise and grid-search certification of the constrained solver.

use proptest::prelude::*;
use qrem_core::channel::{NoiseChannel, ProbabilityDistribution, Shots};
use qrem_core::li::{calibrate, mitigate_li, LiSolver, ResponseMatrix};
use qrem_core::linalg::Matrix;

/// Random invertible column-stochastic matrix with heavy diagonal.
fn arb_diag_dominant(dim: usize) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(0.0..1.0f64, dim * dim).prop_map(move |raw| {
        let mut m = Matrix::zeros(dim, dim);
        for c in 0..dim {
            // Diagonal >= 0.7, off-diagonal mass split over the rest.
            let off: Vec<f64> = (0..dim - 1).map(|r| raw[c * dim + r]).collect();
            let off_sum: f64 = off.iter().sum::<f64>().max(1e-9);
            let diag = 0.7 + 0.29 * raw[c * dim + dim - 1];
            let mut k = 0;
            for r in 0..dim {
                if r == c {
                    m.set(r, c, diag);
                } else {
                    m.set(r, c, (1.0 - diag) * off[k] / off_sum);
                    k += 1;
                }
            }
        }
        m
    })
}

fn arb_simplex(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(1e-4..1.0f64, dim..=dim).prop_map(move |raw| {
        let sum: f64 = raw.iter().sum();
        raw.iter().map(|v| v / sum).collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(60))]

    #[test]
    fn exact_on_linear_noise_n2(
        lambda in arb_diag_dominant(4),
        p_raw in arb_simplex(4),
    ) {
        let p = ProbabilityDistribution::new(2, p_raw).unwrap();
        let rm = ResponseMatrix::new(2, lambda.clone(), 0).unwrap();
        let observed = ProbabilityDistribution::new(2, lambda.matvec(p.values())).unwrap();
        let out = mitigate_li(&rm, &observed).unwrap();
        for (a, b) in out.values().iter().zip(p.values()) {
            prop_assert!((a - b).abs() < 1e-6, "entry error {}", (a - b).abs());
        }
    }

    #[test]
    fn mitigated_output_is_always_a_distribution(
        lambda in arb_diag_dominant(4),
        observed_raw in arb_simplex(4),
    ) {
        let rm = ResponseMatrix::new(2, lambda, 0).unwrap();
        let observed = ProbabilityDistribution::new(2, observed_raw).unwrap();
        let out = mitigate_li(&rm, &observed).unwrap();
        let sum: f64 = out.values().iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-9);
        prop_assert!(out.values().iter().all(|&v| v >= 0.0));
    }
}

/// Two-stage grid minimizer over the probability simplex: a full pass at
/// `coarse` resolution, then a refined pass at `fine` resolution in a box
/// around the coarse argmin. For convex objectives this matches a dense
/// fine-resolution sweep.
fn grid_min_simplex(
    objective: &dyn Fn(&[f64]) -> f64,
    dim: usize,
    coarse: f64,
    fine: f64,
) -> Vec<f64> {
    let stage1 = sweep(objective, dim, coarse, None);
    sweep(objective, dim, fine, Some((&stage1, 3.0 * coarse)))
}

fn sweep(
    objective: &dyn Fn(&[f64]) -> f64,
    dim: usize,
    step: f64,
    window: Option<(&[f64], f64)>,
) -> Vec<f64> {
    let k = (1.0 / step).round() as i64;
    let bounds: Vec<(i64, i64)> = (0..dim)
        .map(|i| match window {
            None => (0, k),
            Some((center, width)) => {
                let lo = ((center[i] - width) / step).floor() as i64;
                let hi = ((center[i] + width) / step).ceil() as i64;
                (lo.max(0), hi.min(k))
            }
        })
        .collect();
    let mut odometer: Vec<i64> = bounds[..dim - 1].iter().map(|&(lo, _)| lo).collect();
    let mut best = Vec::new();
    let mut best_value = f64::INFINITY;
    let mut point = vec![0.0; dim];
    'outer: loop {
        let partial: i64 = odometer.iter().sum();
        let last = k - partial;
        if last >= bounds[dim - 1].0 && last <= bounds[dim - 1].1 {
            for (i, &ki) in odometer.iter().enumerate() {
                point[i] = ki as f64 * step;
            }
            point[dim - 1] = last as f64 * step;
            let value = objective(&point);
            if value < best_value {
                best_value = value;
                best = point.clone();
            }
        }
        // Odometer increment with carry over the first dim-1 digits.
        for digit in (0..dim - 1).rev() {
            odometer[digit] += 1;
            if odometer[digit] <= bounds[digit].1 {
                continue 'outer;
            }
            odometer[digit] = bounds[digit].0;
            if digit == 0 {
                break 'outer;
            }
        }
        if dim == 1 {
            break;
        }
    }
    best
}

#[test]
fn constrained_solution_matches_grid_oracle_when_inversion_leaves_simplex() {
    // 2-qubit stochastic Λ and an observation whose unconstrained inverse has
    // a negative entry.
    let lambda = Matrix::from_row_major(
        4,
        4,
        vec![
            0.85, 0.05, 0.04, 0.02, //
            0.05, 0.82, 0.03, 0.05, //
            0.06, 0.05, 0.88, 0.06, //
            0.04, 0.08, 0.05, 0.87,
        ],
    )
    .unwrap();
    let rm = ResponseMatrix::new(2, lambda.clone(), 0).unwrap();
    let observed = ProbabilityDistribution::new(2, vec![0.9, 0.02, 0.05, 0.03]).unwrap();
    let unconstrained = qrem_core::linalg::solve(&lambda, observed.values()).unwrap();
    assert!(
        unconstrained.iter().any(|&v| v < 0.0),
        "test premise: inversion must leave the simplex, got {unconstrained:?}"
    );

    let out = mitigate_li(&rm, &observed).unwrap();
    let objective = |x: &[f64]| {
        let r = lambda.matvec(x);
        r.iter().zip(observed.values()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
    };
    let oracle = grid_min_simplex(&objective, 4, 0.01, 0.001);
    let dist: f64 = out
        .values()
        .iter()
        .zip(&oracle)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    assert!(dist < 2e-3, "solver {:?} vs grid oracle {oracle:?} (dist {dist})", out.values());
}

#[test]
fn solver_reuse_matches_one_shot() {
    let rates = [
        qrem_core::channel::FlipRates::new(0.08, 0.1).unwrap(),
        qrem_core::channel::FlipRates::new(0.06, 0.09).unwrap(),
    ];
    let lin = qrem_core::channel::LinearChannel::from_flip_rates(&rates).unwrap();
    let rm = calibrate(&NoiseChannel::Linear(lin), Shots::Exact, 0).unwrap();
    let solver = LiSolver::new(&rm).unwrap();
    let observed = ProbabilityDistribution::new(2, vec![0.5, 0.2, 0.2, 0.1]).unwrap();
    assert_eq!(
        solver.mitigate(&observed).unwrap(),
        mitigate_li(&rm, &observed).unwrap()
    );
}

#[test]
fn calibrate_with_shots_is_reproducible_and_stochastic() {
    let rates = [qrem_core::channel::FlipRates::new(0.05, 0.05).unwrap()];
    let lin = qrem_core::channel::LinearChannel::from_flip_rates(&rates).unwrap();
    let ch = NoiseChannel::Linear(lin);
    let a = calibrate(&ch, Shots::Count(4096), 9).unwrap();
    let b = calibrate(&ch, Shots::Count(4096), 9).unwrap();
    assert_eq!(a.lambda(), b.lambda());
    assert_eq!(a.shots_per_column(), 4096);
    for c in 0..2 {
        let sum: f64 = (0..2).map(|r| a.lambda().get(r, c)).sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }
}
