use proptest::prelude::*;
use rand::seq::SliceRandom;
use stars_isac::beamform::{cu_effective_channel, extract_diag_profile, penalty_value, rank_one_recovery, BeamSolution, Scheme, StarsProfile};
use stars_isac::bench::{aggregate, num, trial_seed, TrialRecord};
use stars_isac::channel::{nf_steering, steering_derivative, Axis, ChannelSet, CMat};
use stars_isac::deploy::{deploy_coefficients, gamma_lower};
use stars_isac::estimate::rmse;
use stars_isac::fim::{closed_form_fim, correlation_factors, exact_fim, speb_from_fim};
use stars_isac::geometry::{cartesian_from_polar, polar_from_cartesian, PolarPosition};
use stars_isac::sample::{random_psd, rng, small_instance};

fn cfg() -> ProptestConfig {
    ProptestConfig { cases: 48, ..ProptestConfig::default() }
}

proptest! {
    #![proptest_config(cfg())]

    #[test]
    fn polar_cartesian_round_trip(r in 0.5f64..20.0, th in 0.05f64..3.09) {
        let p = polar_from_cartesian(cartesian_from_polar(PolarPosition::new(r, th))).unwrap();
        prop_assert!((p.r - r).abs() < 1e-12 * r && (p.theta - th).abs() < 1e-12);
    }

    #[test]
    fn steering_inner_products_have_zero_real_part(r in 1.0f64..15.0, th in 0.1f64..3.0, half in 1usize..9) {
        let lam = 0.0107;
        let sv = nf_steering(r, th, 2 * half, lam / 2.0, lam).unwrap();
        for axis in [Axis::Angle, Axis::Range] {
            let d = steering_derivative(&sv, axis);
            let ip = sv.entries.dotc(&d);
            prop_assert!(ip.re.abs() <= 1e-10 * d.norm() * sv.entries.norm());
        }
    }

    #[test]
    fn fim_symmetric_psd_and_factor_signs(seed in 0u64..10_000) {
        let (cfg, scn, rx, prof) = small_instance(seed);
        let rep = exact_fim(&rx, &prof, scn.st, &scn, &cfg).unwrap();
        let j = rep.j_polar;
        prop_assert!((j[(0, 1)] - j[(1, 0)]).abs() <= 1e-12 * j.norm());
        let eig = j.symmetric_eigen().eigenvalues;
        prop_assert!(eig.min() >= -1e-9 * j.trace());
        let f = correlation_factors(&rx, &prof, scn.st, &cfg).unwrap();
        prop_assert!(f.a >= 0.0 && f.b1 >= 0.0 && f.b2 >= 0.0);
        let speb = speb_from_fim(&rep, cartesian_from_polar(scn.st)).unwrap();
        prop_assert!(speb > 0.0 && speb.is_finite());
    }

    #[test]
    fn closed_form_speb_decreases_with_sensor_count(seed in 0u64..10_000) {
        let (cfg, scn, rx, prof) = small_instance(seed);
        let pos = cartesian_from_polar(scn.st);
        let mut prev = f64::INFINITY;
        for m_r in (2..=cfg.m_star).step_by(2) {
            let c = cfg.with_sensors(m_r, cfg.d_s).unwrap();
            let s = speb_from_fim(&closed_form_fim(&rx, &prof, scn.st, &scn, &c).unwrap(), pos).unwrap();
            prop_assert!(s < prev, "M_r {m_r}: {s} !< {prev}");
            prev = s;
        }
    }

    #[test]
    fn deploy_coefficients_reproduce_entries(seed in 0u64..10_000, frac in 0.5f64..1.0) {
        let (cfg, scn, rx, prof) = small_instance(seed);
        let c = deploy_coefficients(&rx, &prof, scn.st, &scn, &cfg).unwrap();
        let d_s = frac * cfg.m_star as f64 * cfg.d_r / cfg.m_sensor as f64;
        let rep = closed_form_fim(&rx, &prof, scn.st, &scn, &cfg.with_sensors(cfg.m_sensor, d_s).unwrap()).unwrap();
        let (jt, jr) = c.entries(cfg.m_sensor as f64, d_s).unwrap();
        prop_assert!((jt - rep.j_polar[(0, 0)]).abs() <= 1e-9 * jt.abs());
        prop_assert!((jr - rep.j_polar[(1, 1)]).abs() <= 1e-9 * jr.abs());
    }

    #[test]
    fn taylor_bound_is_below_square(x in 0.0f64..10.0, x0 in 0.0f64..10.0) {
        prop_assert!(gamma_lower(x, x0) <= x * x + 1e-12 * (1.0 + x * x));
    }

    #[test]
    fn penalty_nonnegative_and_zero_on_rank_one(seed in 0u64..10_000, n in 2usize..8) {
        let mut r = rng(seed);
        let a = random_psd(n, &mut r);
        let b = random_psd(n, &mut r);
        prop_assert!(penalty_value(&a, &b) >= 0.0);
        let v = a.column(0).into_owned();
        let one = &v * v.adjoint();
        prop_assert!(penalty_value(&one, &one) <= 1e-10 * one.norm());
    }

    #[test]
    fn extracted_profiles_respect_energy(seed in 0u64..10_000) {
        let mut r = rng(seed);
        let n = 5;
        let qr = random_psd(n, &mut r);
        let qt = random_psd(n, &mut r);
        let p = extract_diag_profile(&qr, &qt, f64::INFINITY).unwrap();
        prop_assert_eq!(p.elements(), n);
        prop_assert!(p.max_element_energy() <= 1.0 + 1e-12);
    }

    #[test]
    fn recovery_keeps_covariance_and_rate_term(seed in 0u64..10_000) {
        let (cfg, scn, rx, prof) = small_instance(seed);
        let chans = ChannelSet::new(&cfg, scn.cu).unwrap();
        let v_big = random_psd(cfg.bs_elements(), &mut rng(seed + 1));
        let sol = BeamSolution { r_s0: rx.clone(), v_big: v_big.clone(), ..BeamSolution::isotropic(cfg.bs_elements(), 1.0) };
        let rec = rank_one_recovery(&sol, &chans, &prof).unwrap();
        prop_assert!((rec.rx() - sol.rx()).norm() <= 1e-9 * sol.rx().norm());
        let u = cu_effective_channel(&prof, &chans);
        let (q0, q1) = (u.dotc(&(&v_big * &u)).re, u.dotc(&(&rec.v_big * &u)).re);
        prop_assert!((q0 - q1).abs() <= 1e-8 * q0);
        let eig = nalgebra::SymmetricEigen::new(rec.r_s0.clone()).eigenvalues;
        prop_assert!(eig.min() >= -1e-10 * rec.rx().trace().re);
    }

    #[test]
    fn rmse_is_permutation_invariant(seed in 0u64..10_000, n in 1usize..30) {
        use rand::Rng;
        let mut r = rng(seed);
        let mut pairs: Vec<(PolarPosition, PolarPosition)> = (0..n)
            .map(|_| (PolarPosition::new(r.random_range(2.0..9.0), r.random_range(0.5..2.5)), PolarPosition::new(r.random_range(2.0..9.0), r.random_range(0.5..2.5))))
            .collect();
        let a = rmse(&pairs).unwrap();
        pairs.shuffle(&mut r);
        let b = rmse(&pairs).unwrap();
        prop_assert!(a >= 0.0 && (a - b).abs() <= 1e-12 * a.max(1.0));
    }

    #[test]
    fn csv_numbers_keep_twelve_digits(x in -1e12f64..1e12, e in -30i32..30) {
        let v = x * 10f64.powi(e);
        let back: f64 = num(v).parse().unwrap();
        prop_assert!((back - v).abs() <= 5e-12 * v.abs());
    }

    #[test]
    fn aggregate_ignores_record_order(seed in 0u64..10_000, n in 1usize..6) {
        use rand::Rng;
        let mut r = rng(seed);
        let mut recs = Vec::new();
        for v in [1.0, 2.0] {
            for t in 0..n {
                for s in Scheme::ALL {
                    let ok = r.random_bool(0.8);
                    let cf = r.random_range(0.1..10.0);
                    recs.push(TrialRecord {
                        scheme: s, sweep_value: v, seed: trial_seed(3, t), cf, speb: 2.0 * cf, rate: 1.0,
                        m_r: 2, d_s: 0.1, iterations: 1, wall_time: 0.0,
                        status: if ok { "ok".into() } else { "infeasible".into() },
                    });
                }
            }
        }
        let a = aggregate(&recs);
        recs.shuffle(&mut r);
        let b = aggregate(&recs);
        prop_assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b.iter()) {
            prop_assert_eq!((x.sweep_value, x.scheme, x.trials_common), (y.sweep_value, y.scheme, y.trials_common));
            prop_assert!(x.mean_cf.is_nan() && y.mean_cf.is_nan() || (x.mean_cf - y.mean_cf).abs() <= 1e-12 * x.mean_cf);
        }
    }
}

#[test]
fn uniform_profile_meets_energy_split() {
    let p = StarsProfile::uniform(9);
    assert!((p.max_element_energy() - 1.0).abs() < 1e-12);
    let z = CMat::zeros(3, 3);
    assert_eq!(penalty_value(&z, &z), 0.0);
}
