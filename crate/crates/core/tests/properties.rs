use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;

use sms_langevin::calibrate::{accuracy, ace, nll, rps, Metrics, PredictionSet};
use sms_langevin::couple::telescope;
use sms_langevin::couple::LevelEstimate;
use sms_langevin::dataset::Dataset;
use sms_langevin::diagnose::{contraction_check, hessian_norm_power_iteration, lyapunov_invariant_covariance};
use sms_langevin::integrate::{OUCoeffs, Scheme};
use sms_langevin::model::{
    gradient, potential, prior_gradient, term_gradient_sum, LocalizedModel, LogRegModel, Model, QuadraticModel,
};
use sms_langevin::noise::stream_rng;
use sms_langevin::sgrad::{sample_partition, GradientEstimator};

fn logreg(seed: u64) -> LogRegModel {
    let mut rng = stream_rng(seed, 0);
    let data = Dataset::synthetic_logistic(&mut rng, 40, 3, 3, 1.0).unwrap();
    LogRegModel::new(Arc::new(data), 1.0).unwrap()
}

fn fd_rel_err<M: Model>(m: &M, x: &[f64]) -> f64 {
    let g = gradient(m, x).unwrap();
    let eps = 1e-5;
    let mut num = 0.0f64;
    let mut den = 0.0f64;
    for i in 0..x.len() {
        let mut a = x.to_vec();
        let mut b = x.to_vec();
        a[i] += eps;
        b[i] -= eps;
        let fd = (potential(m, &a).unwrap() - potential(m, &b).unwrap()) / (2.0 * eps);
        num = num.max((fd - g[i]).abs());
        den = den.max(g[i].abs());
    }
    num / den.max(1.0)
}

/// Random symmetric positive definite matrix `B B' + 0.1 I`.
fn spd(d: usize, entries: &[f64]) -> Vec<f64> {
    let b = DMatrix::from_row_slice(d, d, &entries[..d * d]);
    let a = &b * b.transpose() + DMatrix::identity(d, d) * 0.1;
    (0..d).flat_map(|i| (0..d).map(move |j| (i, j))).map(|(i, j)| a[(i, j)]).collect()
}

fn probs_table(raw: &[f64], c: usize) -> Vec<Vec<f64>> {
    raw.chunks(c)
        .map(|r| {
            let s: f64 = r.iter().sum();
            r.iter().map(|v| v / s).collect()
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn quadratic_gradient_matches_finite_differences(
        entries in prop::collection::vec(-1.0..1.0f64, 16),
        x in prop::collection::vec(-2.0..2.0f64, 4),
    ) {
        let m = QuadraticModel::new(spd(4, &entries), vec![0.3, -0.1, 0.0, 0.2], 5).unwrap();
        prop_assert!(fd_rel_err(&m, &x) < 1e-4);
    }

    #[test]
    fn logreg_gradient_matches_finite_differences(
        seed in 0u64..1000,
        x in prop::collection::vec(-1.5..1.5f64, 12),
    ) {
        prop_assert!(fd_rel_err(&logreg(seed), &x) < 1e-4);
    }

    #[test]
    fn term_gradients_add_up_over_a_partition(seed in 0u64..1000, x in prop::collection::vec(-1.0..1.0f64, 12)) {
        let m = logreg(seed);
        let mut rng = stream_rng(seed, 4);
        let schedule = sample_partition(&mut rng, m.num_terms(), 8).unwrap();
        let mut sum = vec![0.0; m.dim()];
        for b in schedule.blocks() {
            for (s, g) in sum.iter_mut().zip(term_gradient_sum(&m, &x, b).unwrap()) {
                *s += g;
            }
        }
        let full = gradient(&m, &x).unwrap();
        let prior = prior_gradient(&m, &x).unwrap();
        for i in 0..m.dim() {
            prop_assert!((sum[i] - (full[i] - prior[i])).abs() < 1e-10);
        }
    }

    #[test]
    fn quadratic_strong_convexity_witness(
        entries in prop::collection::vec(-1.0..1.0f64, 9),
        x in prop::collection::vec(-3.0..3.0f64, 3),
        y in prop::collection::vec(-3.0..3.0f64, 3),
    ) {
        let m = QuadraticModel::new(spd(3, &entries), vec![0.0; 3], 2).unwrap();
        let (gx, gy) = (gradient(&m, &x).unwrap(), gradient(&m, &y).unwrap());
        let inner: f64 = (0..3).map(|i| (gx[i] - gy[i]) * (x[i] - y[i])).sum();
        let dist2: f64 = (0..3).map(|i| (x[i] - y[i]).powi(2)).sum();
        prop_assert!(inner >= m.strong_convexity() * dist2 - 1e-9);
    }

    #[test]
    fn localization_adds_the_quadratic_exactly(
        center in prop::collection::vec(-1.0..1.0f64, 12),
        x in prop::collection::vec(-1.0..1.0f64, 12),
        rho in 0.05..2.0f64,
    ) {
        let inner = logreg(3);
        let loc = LocalizedModel::new(&inner, center.clone(), rho, 6.0 * rho).unwrap();
        let dist2: f64 = x.iter().zip(&center).map(|(a, c)| (a - c).powi(2)).sum();
        let diff = potential(&loc, &x).unwrap() - potential(&inner, &x).unwrap();
        prop_assert!((diff - dist2 / (2.0 * rho * rho)).abs() < 1e-12 * (1.0 + diff.abs()));
    }

    #[test]
    fn ou_coefficients_stay_finite(log_gt in -14.0..1.0f64, gamma in 0.1..30.0f64) {
        let t = 10f64.powf(log_gt) / gamma;
        let c = OUCoeffs::new(t, gamma).unwrap();
        let (vx, cov, vv) = c.noise_moments();
        for v in [c.eta, c.f, c.mix, c.mix_complement, c.z2_scale, vx, cov, vv] {
            prop_assert!(v.is_finite());
        }
        prop_assert!((0.0..=1.0).contains(&c.mix));
        prop_assert!((c.mix * c.mix + c.mix_complement * c.mix_complement - 1.0).abs() < 1e-12);
        let (zx, zv) = c.noise_pair(0.7, -1.1);
        prop_assert!(zx.is_finite() && zv.is_finite());
    }

    #[test]
    fn lyapunov_residual_is_tiny(
        diag in prop::collection::vec(0.2..4.0f64, 2),
        gamma in 0.5..4.0f64,
        frac in 0.02..0.3f64,
        scheme in prop::sample::select(vec![Scheme::Ubu, Scheme::Baoab, Scheme::Euler]),
    ) {
        let m = QuadraticModel::diagonal(&diag, 1).unwrap();
        let h = frac / m.lipschitz().sqrt() / gamma.max(1.0);
        let o = lyapunov_invariant_covariance(&m, scheme, h, gamma).unwrap();
        prop_assert!(o.relative_residual < 1e-12, "residual {}", o.relative_residual);
    }

    #[test]
    fn contraction_never_beats_the_bound(m in 0.1..1.0f64, ratio in 1.0..4.0f64, frac in 0.05..0.9f64) {
        let big_m = m * ratio;
        let model = QuadraticModel::diagonal(&[m, big_m], 1).unwrap();
        let gamma = (8.0 * big_m).sqrt();
        let h = frac / (2.0 * gamma);
        let r = contraction_check(&model, h, gamma, 50, 8, 1).unwrap();
        prop_assert!(r.hypotheses_hold);
        prop_assert!(r.measured_rate <= r.bound + 1e-12);
    }

    #[test]
    fn power_iteration_matches_dense_eigensolver(d in 2usize..12, entries in prop::collection::vec(-1.0..1.0f64, 144)) {
        let a = spd(d, &entries);
        let m = QuadraticModel::new(a.clone(), vec![0.0; d], 1).unwrap();
        let mut rng = stream_rng(d as u64, 2);
        let est = hessian_norm_power_iteration(&m, &vec![0.0; d], 5000, 1e-12, &mut rng).unwrap();
        let eig = SymmetricEigen::new(DMatrix::from_row_slice(d, d, &a)).eigenvalues;
        let top = eig.iter().cloned().fold(0.0, f64::max);
        prop_assert!((est.value - top).abs() <= 1e-5 * top, "{} vs {}", est.value, top);
    }

    #[test]
    fn telescoping_is_consistent(deltas in prop::collection::vec(-1.0..1.0f64, 2..6)) {
        let levels: Vec<LevelEstimate> = deltas
            .iter()
            .enumerate()
            .map(|(l, &d)| LevelEstimate {
                h_coarse: 0.1 / 2f64.powi(l as i32),
                delta: vec![d],
                chunk_std: vec![0.01],
                delta_mean: d,
                delta_mean_std: 0.01,
                kept_steps: 100,
                chunks: 4,
                max_separation: 0.0,
            })
            .collect();
        let c = telescope(&levels).unwrap();
        for l in 0..levels.len() - 1 {
            // exact up to the rounding of the suffix sums
            prop_assert!((c.bias[l + 1] - c.bias[l] + levels[l].delta_mean).abs() <= 1e-14);
        }
    }

    #[test]
    fn metrics_ignore_row_order(
        raw in prop::collection::vec(0.01..1.0f64, 60),
        labels in prop::collection::vec(0usize..3, 20),
        shift in 1usize..19,
    ) {
        let rows = probs_table(&raw, 3);
        let a = PredictionSet::new(rows.clone(), labels.clone()).unwrap();
        let mut order: Vec<usize> = (0..20).collect();
        order.rotate_left(shift);
        order.swap(0, 7);
        let b = PredictionSet::new(
            order.iter().map(|&i| rows[i].clone()).collect(),
            order.iter().map(|&i| labels[i]).collect(),
        )
        .unwrap();
        let (ma, mb) = (Metrics::evaluate(&a, 4).unwrap(), Metrics::evaluate(&b, 4).unwrap());
        prop_assert!((ma.accuracy - mb.accuracy).abs() < 1e-12);
        prop_assert!((ma.nll - mb.nll).abs() < 1e-12);
        prop_assert!((ma.rps - mb.rps).abs() < 1e-12);
        prop_assert!((ma.ace - mb.ace).abs() < 1e-12);
    }

    #[test]
    fn metric_ranges(
        raw in prop::collection::vec(0.0..1.0f64, 80),
        labels in prop::collection::vec(0usize..4, 20),
        ranges in 1usize..8,
    ) {
        let raw: Vec<f64> = raw.iter().map(|v| v + 1e-9).collect();
        let p = PredictionSet::new(probs_table(&raw, 4), labels).unwrap();
        prop_assert!((0.0..=1.0).contains(&accuracy(&p)));
        prop_assert!((0.0..=1.0).contains(&ace(&p, ranges).unwrap()));
        prop_assert!((0.0..=3.0).contains(&rps(&p)));
        prop_assert!(nll(&p) >= 0.0);
    }

    #[test]
    fn every_index_used_twice_per_period(n_m in 1usize..6, batch in 1usize..8, seed in 0u64..100) {
        let m = QuadraticModel::diagonal(&[1.0, 2.0], n_m * batch).unwrap();
        let mut est = GradientEstimator::sweep(batch, None);
        let mut rng = stream_rng(seed, 1);
        let mut count = vec![0usize; n_m * batch];
        for k in 1..=2 * n_m {
            for i in est.estimate(&m, &[0.1, 0.2], k, &mut rng).unwrap().1.indices {
                count[i] += 1;
            }
        }
        prop_assert!(count.iter().all(|&c| c == 2));
    }

    #[test]
    fn estimator_draws_are_seed_determined(seed in 0u64..1000, kind in 0usize..3) {
        let m = QuadraticModel::diagonal(&[1.0, 2.0, 3.0], 30).unwrap();
        let make = || match kind {
            0 => GradientEstimator::iid(6),
            1 => GradientEstimator::sweep(6, None),
            _ => GradientEstimator::iid(30),
        };
        let run = || {
            let mut est = make();
            let mut rng = stream_rng(seed, 1);
            (1..=12).map(|k| est.estimate(&m, &[0.5, -0.5, 1.0], k, &mut rng).unwrap()).collect::<Vec<_>>()
        };
        prop_assert_eq!(run(), run());
    }
}
