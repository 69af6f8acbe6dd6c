// SPDX-License-Identifier: MIT OR Apache-2.0

use proptest::prelude::*;

use tsnorm::forecaster::{gradients, ForecasterKind, LinearForecaster};
use tsnorm::normalization::{
    denormalize, instance_stats, modulations, normalize, CminParams, GlobalStats, MinMaxParams, NormContext,
    NormKind, NormStrategy,
};
use tsnorm::shift::energy_distance;

fn window(len: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    (prop::collection::vec(-1.0f64..1.0, len), 0.1f64..50.0, -100.0f64..100.0)
        .prop_map(|(v, s, o)| v.into_iter().map(|x| o + s * x).collect())
        .prop_filter("non-constant", |v: &Vec<f64>| v.iter().any(|x| *x != v[0]))
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    let scale = a.iter().chain(b).fold(1.0f64, |m, x| m.max(x.abs()));
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol * scale)
}

proptest! {
    #[test]
    fn every_strategy_round_trips(
        x in window(2..60),
        kind_idx in 0usize..8,
        alpha in 0.2f64..3.0,
        beta in -2.0f64..2.0,
        eps in 0.0f64..1e-3,
    ) {
        let kind = NormKind::ALL[kind_idx];
        let strategy = NormStrategy::new(kind).with_epsilon(eps).with_affine(alpha, beta);
        let stats = instance_stats(&x);
        let ctx = match kind {
            NormKind::Standard | NormKind::PerUserStandard => NormContext::Global(GlobalStats { mu: 3.0, sigma: 7.0 }),
            NormKind::Minmax => NormContext::MinMax(MinMaxParams { min: -150.0, max: 150.0 }),
            NormKind::Relative => NormContext::Relative { mean: 12.5 },
            NormKind::Cmin => NormContext::Modulated {
                stats,
                params: CminParams { gamma: alpha, nu: beta, ..CminParams::identity("c") },
            },
            _ => NormContext::Instance(stats),
        };
        let z = normalize(&x, &strategy, &ctx).unwrap();
        let back = denormalize(&z, &strategy, &ctx).unwrap();
        prop_assert!(close(&back, &x, 1e-10));
    }

    #[test]
    fn instance_normalization_ignores_scale_and_offset(x in window(2..60), a in 0.01f64..100.0, b in -1e3f64..1e3) {
        let s = NormStrategy::new(NormKind::Instance).with_epsilon(0.0);
        let y: Vec<f64> = x.iter().map(|v| a * v + b).collect();
        let zx = normalize(&x, &s, &NormContext::Instance(instance_stats(&x))).unwrap();
        let zy = normalize(&y, &s, &NormContext::Instance(instance_stats(&y))).unwrap();
        prop_assert!(close(&zx, &zy, 1e-8));
    }

    #[test]
    fn modulations_are_affine_invariant(x in window(2..40), y in window(1..20), a in 0.01f64..100.0, b in -1e3f64..1e3) {
        let m = modulations(&x, &y, 0.0);
        let f = |v: &[f64]| v.iter().map(|t| a * t + b).collect::<Vec<_>>();
        let n = modulations(&f(&x), &f(&y), 0.0);
        prop_assert!(close(&[m.delta, m.lambda], &[n.delta, n.lambda], 1e-8));
    }

    #[test]
    fn dlinear_with_equal_weights_is_linear(
        x in window(3..30),
        seed in any::<u64>(),
        h in 1usize..6,
        half_kernel in 0usize..4,
    ) {
        let l = x.len();
        let kernel = (2 * half_kernel + 1).min(if l % 2 == 0 { l - 1 } else { l });
        let linear = LinearForecaster::init(ForecasterKind::Linear, l, h, kernel, seed).unwrap();
        let mut dl = LinearForecaster::zeros(ForecasterKind::Dlinear, l, h, kernel).unwrap();
        dl.w_seasonal_mut().copy_from_slice(linear.w_seasonal());
        dl.w_trend_mut().unwrap().copy_from_slice(linear.w_seasonal());
        dl.bias_mut().copy_from_slice(linear.bias());
        let a = linear.forward(&x).unwrap();
        let b = dl.forward(&x).unwrap();
        prop_assert!(close(&a, &b, 1e-12));
    }

    #[test]
    fn forecaster_gradients_match_finite_differences(
        seed in any::<u64>(),
        dlinear in any::<bool>(),
        data in prop::collection::vec(-3.0f64..3.0, 40),
    ) {
        let (l, h) = (5, 3);
        let kind = if dlinear { ForecasterKind::Dlinear } else { ForecasterKind::Linear };
        let model = LinearForecaster::init(kind, l, h, 3, seed).unwrap();
        let batch: Vec<(Vec<f64>, Vec<f64>)> = data.chunks(l + h).map(|c| (c[..l].to_vec(), c[l..].to_vec())).collect();
        let g = gradients(&model, &batch).unwrap();
        let step = 1e-6;
        for i in 0..model.params().len() {
            let mut p = model.clone();
            p.params_mut()[i] += step;
            let mut q = model.clone();
            q.params_mut()[i] -= step;
            let fd = (p.mse(&batch).unwrap() - q.mse(&batch).unwrap()) / (2.0 * step);
            prop_assert!((fd - g.0[i]).abs() <= 1e-6 * g.0[i].abs().max(1.0));
        }
    }

    #[test]
    fn energy_distance_is_symmetric(
        p in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 2), 2..30),
        q in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 2), 2..30),
    ) {
        let a = energy_distance(&p, &q).unwrap();
        let b = energy_distance(&q, &p).unwrap();
        prop_assert_eq!(a.to_bits(), b.to_bits());
        prop_assert_eq!(energy_distance(&p, &p).unwrap(), 0.0);
    }
}
