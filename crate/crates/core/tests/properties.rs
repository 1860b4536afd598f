use cox_invariance::analytic::{cox_laplace_closed_form, gaussian_tail, normal_cdf, QuadratureSpec, TestFunction};
use cox_invariance::decomposition::decompose;
use cox_invariance::dynamics::{evolve_with_noise, plan_padding};
use cox_invariance::pointproc::{intensity_mass, sample_ppp, IntensityModel, PointConfiguration, WindowSpec};
use cox_invariance::randomness::SeedSpec;
use cox_invariance::verify::{apply_bonferroni, laplace_value, poisson_upper_tail};
use proptest::prelude::*;

fn window() -> impl Strategy<Value = WindowSpec> {
    (-5.0f64..5.0, 0.1f64..6.0).prop_map(|(lo, w)| WindowSpec::new(lo, lo + w).unwrap())
}

fn model() -> impl Strategy<Value = IntensityModel> {
    (0.0f64..5.0, 0.0f64..5.0, 0.2f64..2.0).prop_map(|(z, y, l)| IntensityModel::new(z, y, l).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn window_reflect_is_involution(w in window()) {
        let r = w.reflect().reflect();
        prop_assert!((r.lo - w.lo).abs() < 1e-12 && (r.hi - w.hi).abs() < 1e-12);
        prop_assert!((w.reflect().width() - w.width()).abs() < 1e-12);
    }

    #[test]
    fn mass_is_additive(m in model(), w in window(), s in 0.0f64..1.0) {
        let mid = w.lo + s * w.width();
        let total = intensity_mass(&m, &w);
        let parts = intensity_mass(&m, &WindowSpec::new(w.lo, mid).unwrap())
            + intensity_mass(&m, &WindowSpec::new(mid, w.hi).unwrap());
        prop_assert!((total - parts).abs() <= 1e-9 * total.max(1.0));
    }

    #[test]
    fn laplace_in_unit_interval(m in model(), lo in -3.0f64..3.0, w in 0.1f64..2.0, h in 0.01f64..3.0) {
        let f = TestFunction::step(lo, lo + w, h).unwrap();
        let v = cox_laplace_closed_form(&f, m.z, m.y, m.lambda, &QuadratureSpec::default()).unwrap();
        prop_assert!((0.0..=1.0).contains(&v));
    }

    #[test]
    fn sampled_atoms_sorted_in_window(m in model(), w in window(), seed in any::<u64>()) {
        let c = sample_ppp(&m, &w, &mut SeedSpec::new(seed, 0).stream()).unwrap();
        prop_assert!(c.atoms().windows(2).all(|p| p[0] <= p[1]));
        prop_assert!(c.atoms().iter().all(|&x| w.contains(x)));
    }

    #[test]
    fn same_seed_same_sample(m in model(), seed in any::<u64>()) {
        let w = WindowSpec::new(-2.0, 2.0).unwrap();
        let a = sample_ppp(&m, &w, &mut SeedSpec::new(seed, 3).stream()).unwrap();
        let b = sample_ppp(&m, &w, &mut SeedSpec::new(seed, 3).stream()).unwrap();
        prop_assert_eq!(a.atoms(), b.atoms());
    }

    #[test]
    fn zero_noise_is_pure_drift(xs in prop::collection::vec(-3.0f64..3.0, 0..20), t in 0.0f64..2.0, l in 0.1f64..2.0) {
        let w = WindowSpec::new(-3.0, 3.0).unwrap();
        let c = PointConfiguration::new(xs, w).unwrap();
        let noise = vec![0.0; c.len()];
        let e = evolve_with_noise(&c, t, l, &noise).unwrap();
        prop_assert_eq!(e.len(), c.len());
        for (a, b) in c.atoms().iter().zip(e.atoms()) {
            prop_assert!((b - (a - l * t)).abs() < 1e-12);
        }
    }

    #[test]
    fn decomposition_is_additive(xs in prop::collection::vec(-20.0f64..20.0, 0..30), t in 1.0f64..50.0) {
        let w = WindowSpec::new(-20.0, 20.0).unwrap();
        let c = PointConfiguration::new(xs, w).unwrap();
        let f = TestFunction::step(-1.0, 1.0, 1.0).unwrap();
        let r = decompose(&c, t, 1.0, &f, &QuadratureSpec::default()).unwrap();
        prop_assert!(r.additivity_residual() <= 1e-9 * r.theta_t_f.abs().max(1.0));
        prop_assert!(r.theta_t_f >= -1e-12);
    }

    #[test]
    fn laplace_value_monotone_in_atoms(xs in prop::collection::vec(-2.0f64..2.0, 0..10), extra in -2.0f64..2.0) {
        let w = WindowSpec::new(-2.0, 2.0).unwrap();
        let f = TestFunction::step(-1.0, 1.0, 0.7).unwrap();
        let a = laplace_value(&PointConfiguration::new(xs.clone(), w).unwrap(), &f);
        let mut more = xs;
        more.push(extra);
        let b = laplace_value(&PointConfiguration::new(more, w).unwrap(), &f);
        prop_assert!(b <= a && a <= 1.0 && b > 0.0);
    }

    #[test]
    fn padding_contains_observation(m in model(), w in window(), t in 0.01f64..3.0) {
        let pad = plan_padding(&w, t, m.lambda, &m, 1e-6).unwrap();
        prop_assert!(pad.contains_window(&w));
    }

    #[test]
    fn poisson_tail_decreasing(mean in 0.1f64..20.0, k in 0.0f64..30.0) {
        let a = poisson_upper_tail(mean, k).unwrap();
        let b = poisson_upper_tail(mean, k + 1.0).unwrap();
        prop_assert!((0.0..=1.0).contains(&a) && b <= a + 1e-15);
    }

    #[test]
    fn gaussian_tail_symmetry(z in -8.0f64..8.0) {
        prop_assert!((gaussian_tail(z) + gaussian_tail(-z) - 1.0).abs() < 1e-14);
        prop_assert!((normal_cdf(z) - gaussian_tail(-z)).abs() < 1e-14);
    }
}

#[test]
fn bonferroni_ignores_controls() {
    use cox_invariance::verify::{TestKind, TestOutcome};
    let mk = |control| TestOutcome {
        name: "x".into(),
        kind: TestKind::LaplaceZ,
        statistic: 0.0,
        p_value: 0.004,
        significance: 0.0,
        pass: false,
        control,
        t: Some(1.0),
        f: None,
        window: None,
        replicates: 1,
        seed: 0,
    };
    let mut v = vec![mk(false), mk(false), mk(true)];
    assert_eq!(apply_bonferroni(&mut v, 0.01), 2);
    assert!(!v[0].pass);
    assert!((v[0].significance - 0.005).abs() < 1e-15);
}

#[test]
fn gaussian_samples_match_normal_cdf() {
    let mut s = SeedSpec::new(17, 0).stream();
    let mut xs: Vec<f64> = (0..20_000).map(|_| s.standard_normal()).collect();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let d = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let c = normal_cdf(x);
            (c - i as f64 / n).abs().max(((i + 1) as f64 / n - c).abs())
        })
        .fold(0.0, f64::max);
    // 1% critical value
    assert!(d < 1.628 / n.sqrt(), "KS distance {d}");
}
