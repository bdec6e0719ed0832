use delag_core::atc::{atc_interval, ensemble_predict, l1_loss_grad, AtcEnsemble, Eatc, Obs};
use delag_core::container::Container;
use delag_core::eval::{compute_metrics, holdout_split};
use delag_core::geo::{crosstrack_ratio, overlap_fraction};
use delag_core::raster::{valid_fraction_of, Era5Series, SceneStack};
use delag_core::recon::{combine_uncertainty, total_interval};
use delag_core::{Error, Violation};
use proptest::collection::vec;
use proptest::prelude::*;

/// Strictly increasing days in 1..=366.
fn days_strategy(max: usize) -> impl Strategy<Value = Vec<u16>> {
    proptest::sample::subsequence((1u16..=366).collect::<Vec<_>>(), 1..=max)
}

fn stack_strategy() -> impl Strategy<Value = SceneStack> {
    (days_strategy(6), 1usize..6, 1usize..6).prop_flat_map(|(days, h, w)| {
        let n = days.len() * h * w;
        let cell = prop_oneof![1 => Just(f32::NAN), 4 => 180.0f32..=360.0];
        vec(cell, n).prop_map(move |temps| SceneStack::new(days.clone(), h, w, temps).unwrap())
    })
}

fn same_bits(a: &[f32], b: &[f32]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn stack_round_trips_through_bytes(stack in stack_strategy()) {
        let bytes = stack.to_container().to_bytes().unwrap();
        let back = SceneStack::from_container(Container::from_bytes(&bytes).unwrap()).unwrap();
        prop_assert_eq!(back.days(), stack.days());
        prop_assert_eq!(back.shape(), stack.shape());
        prop_assert!(same_bits(back.temps(), stack.temps()));
        // Saving again gives the same bytes.
        prop_assert_eq!(back.to_container().to_bytes().unwrap(), bytes);
    }

    #[test]
    fn valid_fraction_ignores_pixel_order(
        values in vec(prop_oneof![Just(f32::NAN), 180.0f32..360.0], 1..200),
        seed in any::<u64>(),
    ) {
        let mut shuffled = values.clone();
        let mut s = seed;
        for i in (1..shuffled.len()).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            shuffled.swap(i, (s >> 33) as usize % (i + 1));
        }
        prop_assert_eq!(valid_fraction_of(&values), valid_fraction_of(&shuffled));
    }

    #[test]
    fn loader_rejects_bad_temperatures(stack in stack_strategy(), idx in any::<prop::sample::Index>(), hot in any::<bool>()) {
        let mut c = stack.to_container();
        let i = idx.index(c.data.len());
        c.data[i] = if hot { 360.5 } else { 150.0 };
        match SceneStack::from_container(c) {
            Err(Error::Invalid { violation, index, .. }) => {
                prop_assert_eq!(violation, Violation::TemperatureOutOfRange);
                prop_assert_eq!(index, Some(i));
            }
            other => prop_assert!(false, "expected rejection, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn loader_rejects_bad_day_axes(stack in stack_strategy(), which in 0u8..3) {
        let mut c = stack.to_container();
        let n = c.days.len();
        match which {
            0 => c.days[n - 1] = 367,
            1 => c.days[0] = 0,
            _ => {
                if n < 2 {
                    c.days[0] = 400;
                } else {
                    c.days[1] = c.days[0];
                }
            }
        }
        let err = SceneStack::from_container(c).unwrap_err();
        let is_day_violation = matches!(
            &err,
            Error::Invalid { violation: Violation::DayOutOfRange | Violation::DaysNotIncreasing, .. }
        );
        prop_assert!(is_day_violation, "{}", err);
    }

    #[test]
    fn loader_rejects_truncated_payloads(stack in stack_strategy(), cut in 1usize..8) {
        let bytes = stack.to_container().to_bytes().unwrap();
        let short = &bytes[..bytes.len() - cut.min(bytes.len() - 1)];
        prop_assert!(Container::from_bytes(short).is_err());
    }

    #[test]
    fn metric_identities(pairs in vec((-50.0f64..50.0, -50.0f64..50.0), 2..100)) {
        let (pred, truth): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let m = compute_metrics(&pred, &truth, None).unwrap();
        let eps = 1e-12 * (1.0 + m.rmse);
        prop_assert!(m.mae >= 0.0);
        prop_assert!(m.rmse + eps >= m.mae);
        prop_assert!(m.rmse + eps >= m.bias.abs());
        if let Some(r2) = m.r2 {
            prop_assert!(r2 <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn covering_intervals_give_full_coverage(
        rows in vec((-50.0f64..50.0, 0.0f64..5.0, 0.0f64..5.0, -50.0f64..50.0), 2..100),
    ) {
        let truth: Vec<f64> = rows.iter().map(|r| r.0).collect();
        let lo: Vec<f64> = rows.iter().map(|r| r.0 - r.1).collect();
        let hi: Vec<f64> = rows.iter().map(|r| r.0 + r.2).collect();
        let pred: Vec<f64> = rows.iter().map(|r| r.3).collect();
        let m = compute_metrics(&pred, &truth, Some((&lo, &hi))).unwrap();
        prop_assert_eq!(m.cov95, Some(1.0));
    }

    #[test]
    fn crosstrack_is_symmetric_and_increasing(a in 0.0f64..81.9, b in 0.0f64..81.9) {
        prop_assume!(a != b);
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(crosstrack_ratio(lo).unwrap() < crosstrack_ratio(hi).unwrap());
        prop_assert!(overlap_fraction(lo).unwrap() <= overlap_fraction(hi).unwrap());
        prop_assert_eq!(crosstrack_ratio(a).unwrap(), crosstrack_ratio(-a).unwrap());
        prop_assert_eq!(overlap_fraction(-b).unwrap(), overlap_fraction(b).unwrap());
    }

    #[test]
    fn variance_and_interval_sums(rows in vec((0.0f64..10.0, 0.0f64..10.0, -5.0f64..5.0, 0.0f64..3.0, -5.0f64..5.0, 0.0f64..3.0), 1..50)) {
        let va: Vec<f64> = rows.iter().map(|r| r.0).collect();
        let vg: Vec<f64> = rows.iter().map(|r| r.1).collect();
        let total = combine_uncertainty(&va, &vg).unwrap();
        for i in 0..rows.len() {
            prop_assert_eq!(total[i], va[i] + vg[i]);
        }
        let al: Vec<f64> = rows.iter().map(|r| 280.0 + r.2).collect();
        let au: Vec<f64> = rows.iter().map(|r| 280.0 + r.2 + r.3).collect();
        let gl: Vec<f64> = rows.iter().map(|r| r.4).collect();
        let gu: Vec<f64> = rows.iter().map(|r| r.4 + r.5).collect();
        let (lo, hi) = total_interval(&al, &au, &gl, &gu).unwrap();
        for i in 0..rows.len() {
            let width = hi[i] - lo[i];
            let parts = (au[i] - al[i]) + (gu[i] - gl[i]);
            prop_assert!((width - parts).abs() <= 1e-9);
        }
        let mut neg = vg.clone();
        neg[0] = -1e-9;
        prop_assert!(combine_uncertainty(&va, &neg).is_err());
    }

    #[test]
    fn ensemble_bounds_are_ordered(
        params in vec((200.0f64..260.0, 0.0f64..20.0, 0.0f64..365.0, -0.2f64..0.4), 40 * 4),
        day in 1u16..=365,
    ) {
        let pixels: Vec<Eatc> = params.iter().map(|&(c, a, phi, b)| Eatc { c, a, phi, b }).collect();
        let ens = AtcEnsemble::new(2, 2, (0..40).collect(), pixels).unwrap();
        let days: Vec<u16> = (1..=365).collect();
        let era5 = Era5Series::new(days.clone(), 1, days.iter().map(|&d| 280.0 + (d % 7) as f32).collect(), 2, 2, vec![0; 4]).unwrap();
        let (mean, sd) = ensemble_predict(&ens, day, &era5).unwrap();
        let (lo, hi) = atc_interval(&ens, day, &era5, 0.95).unwrap();
        for p in 0..4 {
            prop_assert!(lo[p] <= hi[p]);
            prop_assert!(sd[p] >= 0.0);
            prop_assert!(mean[p].is_finite());
        }
    }

    #[test]
    fn loss_is_periodic_in_phase(
        c in 200.0f64..260.0, a in 0.0f64..20.0, phi in 0.0f64..365.0, b in -0.2f64..0.4, k in -3i32..4,
        obs in vec((1u16..=365, 250.0f64..320.0, 270.0f64..300.0), 1..40),
    ) {
        let obs: Vec<Obs> = obs.into_iter().map(|(d, t, e)| Obs { day: d as f64, temp: t, era5: e }).collect();
        let p = Eatc { c, a, phi, b };
        let q = Eatc { phi: phi + 365.0 * k as f64, ..p };
        let (lp, _) = l1_loss_grad(&p, &obs);
        let (lq, _) = l1_loss_grad(&q, &obs);
        prop_assert!((lp - lq).abs() <= 1e-9 * (1.0 + lp.abs()));
        let canon = q.canonical();
        prop_assert!((0.0..365.0).contains(&canon.phi));
    }

    #[test]
    fn holdout_takes_exactly_the_fraction(n_valid in 10usize..200, extra in 0usize..10, seed in any::<u64>(), day in 1u16..=365) {
        // At least 80% cloud: total > 5 * n_valid.
        let total = 5 * n_valid + 1 + extra;
        let mut values = vec![f32::NAN; total];
        for p in 0..n_valid {
            values[(p * 7919) % total] = 290.0;
        }
        let valid = values.iter().filter(|v| !v.is_nan()).count();
        prop_assume!(valid == n_valid);
        let s = holdout_split(&values, day, 0.2, seed).unwrap();
        prop_assert_eq!(s.test.len(), (0.2 * n_valid as f64).round() as usize);
        prop_assert_eq!(s.test.len() + s.train.len(), n_valid);
        prop_assert!(s.test.iter().all(|p| !s.train.contains(p)));
        prop_assert!(s.test.iter().chain(&s.train).all(|&p| !values[p].is_nan()));
        prop_assert_eq!(holdout_split(&values, day, 0.2, seed).unwrap(), s);
    }
}
