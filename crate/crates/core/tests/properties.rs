use awfl_core::channel::{aggregate, draw_channel_frame, make_transmit_plan, WorkerGeometry};
use awfl_core::dpca::{communication_saving, principal_angle_sines};
use awfl_core::learner::{softmax, GradientVector};
use awfl_core::mathkit::{exp_integral_e1, Lane, RngStream};
use nalgebra::DMatrix;
use proptest::prelude::*;

proptest! {
    #[test]
    fn power_budget_holds_for_any_gradient(
        y in proptest::collection::vec(-1e3f64..1e3, 1..40),
        distance in 50.0f64..600.0,
        p0 in 1.0f64..1e3,
        seed in any::<u64>(),
    ) {
        prop_assume!(y.iter().any(|v| *v != 0.0));
        let geom = WorkerGeometry::new(distance, 2.2).unwrap();
        let y = GradientVector(y);
        let frame = draw_channel_frame(&geom, y.len(), 1e-3, RngStream::new(seed, 0, 0, Lane::Channel)).unwrap();
        let plan = make_transmit_plan(&frame, &y, p0, 1e-3, &geom).unwrap();
        if !plan.is_silent() {
            prop_assert!((plan.transmit_power(&y) - p0).abs() <= 1e-9 * p0);
        }
    }

    #[test]
    fn e1_is_decreasing_and_bracketed(x in 1e-4f64..60.0) {
        let e = exp_integral_e1(x).unwrap();
        let lower = 0.5 * (-x).exp() * (1.0 + 2.0 / x).ln();
        let upper = (-x).exp() * (1.0 + 1.0 / x).ln();
        prop_assert!(lower <= e * (1.0 + 1e-12) && e <= upper * (1.0 + 1e-12));
        prop_assert!(exp_integral_e1(x * 1.01).unwrap() < e);
    }

    #[test]
    fn aggregate_is_the_mean(values in proptest::collection::vec(proptest::collection::vec(-10.0f64..10.0, 5), 1..8)) {
        let grads: Vec<GradientVector> = values.iter().cloned().map(GradientVector).collect();
        let mean = aggregate(&grads).unwrap();
        for i in 0..5 {
            let want = values.iter().map(|v| v[i]).sum::<f64>() / values.len() as f64;
            prop_assert!((mean.0[i] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_sums_to_one(logits in proptest::collection::vec(-500.0f64..500.0, 1..12)) {
        let p = softmax(&logits);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn principal_angle_sines_are_symmetric(theta in 0.0f64..1.5, phi in 0.0f64..1.5) {
        let a = DMatrix::from_column_slice(3, 1, &[theta.cos(), theta.sin(), 0.0]);
        let b = DMatrix::from_column_slice(3, 1, &[phi.cos(), 0.0, phi.sin()]);
        let ab = principal_angle_sines(&a, &b).unwrap();
        let ba = principal_angle_sines(&b, &a).unwrap();
        prop_assert!((ab[0] - ba[0]).abs() < 1e-12);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&ab[0]));
    }

    #[test]
    fn saving_is_a_fraction(d0 in 1usize..5000, frac in 0.0f64..1.0) {
        let dhat = ((d0 as f64 * frac) as usize).max(1);
        let s = communication_saving(d0, dhat);
        prop_assert!((0.0..1.0).contains(&s));
        prop_assert!((s - (d0 - dhat) as f64 / d0 as f64).abs() < 1e-15);
    }
}
