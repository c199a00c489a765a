mod common;

use std::sync::Arc;

use nlcons_core::analysis::*;
use nlcons_core::graph::*;
use nlcons_core::inclusion::*;
use nlcons_core::integrator::*;
use nlcons_core::linalg::norm_inf;
use nlcons_core::lyapunov::*;
use nlcons_core::nonlinearity::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn q(delta: f64) -> Nonlinearity {
    quantizer_symmetric(QuantizerParams::new(delta).unwrap())
}

fn spanning_tree_system(seed: u64, n: usize, f: Nonlinearity) -> ConsensusSystem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = build_graph(n, &common::random_spanning_tree(&mut rng, n)).unwrap();
    ConsensusSystem::homogeneous(g, Arc::new(f))
}

fn uniform(seed: u64, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

fn homogeneous_choice() -> impl Strategy<Value = Nonlinearity> {
    prop_oneof![
        (0.3f64..2.0).prop_map(q),
        (0.3f64..2.0).prop_map(|d| quantizer_asymmetric(QuantizerParams::new(d).unwrap())),
        (0.2f64..1.0).prop_map(|d| quantizer_logarithmic(QuantizerParams::new(d).unwrap())),
        Just(sign_fn(1.0).unwrap()),
        (0.5f64..2.0).prop_map(|s| saturation_fn(s).unwrap()),
    ]
}

/// Black-box `sign` without a locator, so only chatter detection can
/// find its jump.
#[derive(Debug)]
struct OpaqueSign;

impl MonotoneFn for OpaqueSign {
    fn evaluate(&self, x: f64) -> f64 {
        if x > 0.0 {
            1.0
        } else if x < 0.0 {
            -1.0
        } else {
            0.0
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn envelopes_and_box_invariance(seed in any::<u64>(), n in 2usize..8, f in homogeneous_choice()) {
        let sys = spanning_tree_system(seed, n, f);
        let x0 = uniform(seed ^ 1, n, -4.0, 4.0);
        let cfg = IntegratorConfig::new(0.01, 20.0).unwrap();
        let traj = integrate(&sys, &x0, &cfg).unwrap();
        let slack = chatter_slack(&sys, &cfg, &x0);
        let tr = evaluate_lyapunov(&sys, &traj, None).unwrap();
        let rep = monotonicity_report(&tr, slack);
        prop_assert!(rep.v.pass && rep.w.pass, "{:?}", rep);
        let (lo, hi) = (min_coordinate(&x0), max_coordinate(&x0));
        for s in &traj.states {
            prop_assert!(s.iter().all(|&v| v >= lo - slack && v <= hi + slack));
        }
    }

    #[test]
    fn positivity(seed in any::<u64>(), n in 2usize..8, f in homogeneous_choice()) {
        let sys = spanning_tree_system(seed, n, f);
        let x0 = uniform(seed ^ 2, n, 0.1, 5.0);
        let cfg = IntegratorConfig::new(0.01, 20.0).unwrap();
        let traj = integrate(&sys, &x0, &cfg).unwrap();
        let slack = chatter_slack(&sys, &cfg, &x0);
        let lowest = traj.states.iter().map(|s| min_coordinate(s)).fold(f64::INFINITY, f64::min);
        prop_assert!(lowest >= -slack);
    }

    #[test]
    fn trajectory_shape(seed in any::<u64>(), n in 1usize..8, f in homogeneous_choice()) {
        let sys = spanning_tree_system(seed, n, f);
        let x0 = uniform(seed ^ 3, n, -3.0, 3.0);
        let cfg = IntegratorConfig::new(0.02, 10.0).unwrap();
        let traj = integrate(&sys, &x0, &cfg).unwrap();
        prop_assert_eq!(traj.times[0], 0.0);
        prop_assert!(traj.times.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(*traj.times.last().unwrap() <= cfg.t_end + cfg.dt);
        prop_assert!(traj.states.iter().all(|s| s.iter().all(|v| v.is_finite())));
        for k in 0..traj.len() - 1 {
            let step: Vec<f64> = traj.states[k + 1].iter().zip(&traj.states[k]).map(|(a, b)| a - b).collect();
            let speed = norm_inf(&traj.selections[k].derivative).max(norm_inf(&traj.selections[k + 1].derivative));
            let dt = traj.times[k + 1] - traj.times[k];
            prop_assert!(norm_inf(&step) <= dt * speed + 1e-12, "step {}", k);
        }
        // No coordinate engages twice without a release in between.
        let mut sliding = vec![false; n];
        for e in &traj.events {
            match e.kind {
                EventKind::SlidingEngage => {
                    prop_assert!(!sliding[e.coordinate]);
                    sliding[e.coordinate] = true;
                }
                EventKind::SlidingRelease => {
                    prop_assert!(sliding[e.coordinate]);
                    sliding[e.coordinate] = false;
                }
                EventKind::Crossing => {}
            }
        }
    }

    #[test]
    fn d2_is_strongly_invariant(seed in any::<u64>(), n in 2usize..8, d in 0.3f64..2.0) {
        let sys = spanning_tree_system(seed, n, q(d));
        let x0 = uniform(seed ^ 4, n, -4.0, 4.0);
        let cfg = IntegratorConfig::new(0.01, 30.0).unwrap();
        let traj = integrate(&sys, &x0, &cfg).unwrap();
        prop_assert_eq!(invariance_violations(&sys, &traj, LimitSetKind::D2, MEMBERSHIP_SNAP), 0);
        let rep = convergence_verdict(&sys, &traj, &cfg, None).unwrap();
        prop_assert_eq!(rep.scenario_class, ScenarioClass::SpanningTreeQuantized);
        prop_assert!(rep.passed(), "{:?}", rep);
    }

    #[test]
    fn v1_decreases_on_strongly_connected(seed in any::<u64>(), n in 2usize..7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = build_graph(n, &common::random_strongly_connected(&mut rng, n)).unwrap();
        let fs: Vec<Nonlinearity> = (0..n)
            .map(|_| match rng.gen_range(0..4) {
                0 => q(1.0),
                1 => quantizer_asymmetric(QuantizerParams::new(0.7).unwrap()),
                2 => quantizer_logarithmic(QuantizerParams::new(0.5).unwrap()),
                _ => sign_fn(1.0).unwrap(),
            })
            .collect();
        let sys = ConsensusSystem::from_descriptors(g, fs).unwrap();
        let x0: Vec<f64> = (0..n).map(|_| rng.gen_range(-4.0..4.0)).collect();
        let cfg = IntegratorConfig::new(0.01, 20.0).unwrap();
        let traj = integrate(&sys, &x0, &cfg).unwrap();
        let w = left_perron(sys.laplacian(), 1e-10).unwrap();
        let tr = evaluate_lyapunov(&sys, &traj, Some(&w)).unwrap();
        let rep = monotonicity_report(&tr, chatter_slack(&sys, &cfg, &x0));
        prop_assert!(rep.v1.unwrap().pass, "{:?}", rep.v1);
    }

    #[test]
    fn v1_is_radially_unbounded(seed in any::<u64>(), n in 2usize..7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = build_graph(n, &common::random_strongly_connected(&mut rng, n)).unwrap();
        let fs: Vec<Nonlinearity> = (0..n)
            .map(|_| match rng.gen_range(0..5) {
                0 => q(1.0),
                1 => quantizer_asymmetric(QuantizerParams::new(0.7).unwrap()),
                2 => quantizer_logarithmic(QuantizerParams::new(0.5).unwrap()),
                3 => saturation_fn(2.0).unwrap(),
                _ => sign_fn(1.0).unwrap(),
            })
            .collect();
        let sys = ConsensusSystem::from_descriptors(g, fs).unwrap();
        let w = left_perron(sys.laplacian(), 1e-10).unwrap();
        let u: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assume!(norm > 1e-3);
        let vals: Vec<f64> = [1e2, 1e3, 1e4]
            .iter()
            .map(|r| {
                let x: Vec<f64> = u.iter().map(|v| r * v / norm).collect();
                v1_value(&sys, &w.w, &x).unwrap()
            })
            .collect();
        prop_assert!(vals[0] < vals[1] && vals[1] < vals[2], "{:?}", vals);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn d2_equals_d1(seed in any::<u64>(), n in 1usize..8, f in homogeneous_choice(), scale in 0.1f64..5.0) {
        let sys = spanning_tree_system(seed, n, f);
        let x = uniform(seed ^ 5, n, -scale, scale);
        prop_assert_eq!(in_d2(&sys, &x).unwrap(), in_d1(&sys, &x));
    }

    #[test]
    fn d2_equals_d1_on_boundaries(seed in any::<u64>(), n in 1usize..6, d in 0.3f64..2.0) {
        let sys = spanning_tree_system(seed, n, q(d));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..n).map(|_| (rng.gen_range(-3i32..3) as f64 + 0.5) * d).collect();
        prop_assert_eq!(in_d2(&sys, &x).unwrap(), in_d1(&sys, &x));
        prop_assert_eq!(in_q(d, &x), in_d2(&sys, &x).unwrap());
    }

    #[test]
    fn q_matches_k_scan(x in proptest::collection::vec(-5f64..5.0, 1..8), d in 0.1f64..3.0) {
        let scan = (-100i64..=100).any(|k| {
            x.iter().all(|&v| (k as f64 - 0.5) * d <= v && v <= (k as f64 + 0.5) * d)
        });
        prop_assert_eq!(in_q(d, &x), scan);
    }

    #[test]
    fn q_equals_d2_for_symmetric_quantizer(seed in any::<u64>(), n in 1usize..8, d in 0.2f64..2.0) {
        let sys = spanning_tree_system(seed, n, q(d));
        let x = uniform(seed ^ 6, n, -1.5 * d, 1.5 * d);
        prop_assert_eq!(in_q(d, &x), in_d2(&sys, &x).unwrap());
    }
}

#[test]
fn d1_is_closed_along_boundary_sequences() {
    let g = build_graph(3, &[(0, 1, 1.0), (1, 2, 1.0), (2, 0, 1.0)]).unwrap();
    let sys = ConsensusSystem::from_descriptors(
        g,
        vec![q(1.0), sign_fn(1.0).unwrap(), quantizer_asymmetric(QuantizerParams::new(1.0).unwrap())],
    )
    .unwrap();
    // Limits on boundaries of the first coordinate, approached from both sides.
    for (base, limit) in [
        (vec![0.5, 0.3, 1.2], 0.5),
        (vec![-0.5, -0.1, -0.7], -0.5),
        (vec![0.5, 0.0, 0.0], 0.5),
    ] {
        for side in [-1.0, 1.0] {
            let seq: Vec<Vec<f64>> = (1..40)
                .map(|k| {
                    let mut x = base.clone();
                    x[0] = limit + side * 0.5f64.powi(k);
                    x
                })
                .collect();
            if seq.iter().all(|x| in_d1(&sys, x)) {
                assert!(in_d1(&sys, &base), "limit {base:?} from side {side}");
            }
        }
    }
    // A sequence that is in the set approaches a boundary where it stays in.
    let seq_in: Vec<bool> = (1..40)
        .map(|k| in_d1(&sys, &[0.5 - 0.5f64.powi(k), 0.0, 0.4]))
        .collect();
    assert!(seq_in.iter().all(|&b| b));
    assert!(in_d1(&sys, &[0.5, 0.0, 0.4]));
}

#[test]
fn sign_pair_slides_at_the_origin() {
    let g = build_graph(2, &[(0, 1, 1.0), (1, 0, 1.0)]).unwrap();
    let sys = ConsensusSystem::homogeneous(g, Arc::new(sign_fn(1.0).unwrap()));
    let cfg = IntegratorConfig::new(0.01, 2.0).unwrap();
    let traj = integrate(&sys, &[1.0, -1.0], &cfg).unwrap();
    for (t, s) in traj.times.iter().zip(&traj.states) {
        if *t >= 0.5 + 10.0 * cfg.dt {
            assert!(norm_inf(s) <= cfg.dt + 1e-6);
        }
    }
    for sel in &traj.selections {
        for (i, &m) in sel.sliding_mask.iter().enumerate() {
            if m {
                assert!((-1.0..=1.0).contains(&sel.nu[i]));
            }
        }
    }
}

#[test]
fn chatter_detector_pins_black_box_jump() {
    let g = build_graph(2, &[(0, 1, 1.0), (1, 0, 1.0)]).unwrap();
    let sys = ConsensusSystem::homogeneous(g, Arc::new(OpaqueSign));
    let cfg = IntegratorConfig::new(0.01, 2.0).unwrap();
    let traj = integrate(&sys, &[0.99513, -0.99377], &cfg).unwrap();
    assert!(traj.events.iter().any(|e| e.kind == EventKind::SlidingEngage && e.chatter));
    let last = traj.final_state().unwrap();
    assert!(norm_inf(last) <= 2.0 * cfg.dt, "{last:?}");
    let tail = &traj.states[traj.len() - 20..];
    assert!(tail.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn step_halving_is_first_order() {
    let sys = spanning_tree_system(11, 5, saturation_fn(1.0).unwrap().with_bias(0.0));
    let x0 = uniform(12, 5, -2.0, 2.0);
    let run = |dt: f64| {
        let cfg = IntegratorConfig::new(dt, 3.0).unwrap();
        integrate(&sys, &x0, &cfg).unwrap().final_state().unwrap().to_vec()
    };
    let (a, b, c) = (run(0.02), run(0.01), run(0.005));
    let diff = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
    let (d1, d2) = (diff(&a, &b), diff(&b, &c));
    assert!(d2 > 0.0);
    assert!(d1 / d2 <= 4.0, "ratio {}", d1 / d2);
}

#[test]
fn batch_is_deterministic_and_ordered() {
    let sys = spanning_tree_system(21, 6, q(1.0));
    let cfg = IntegratorConfig::new(0.01, 10.0).unwrap();
    let xs: Vec<Vec<f64>> = (0..10).map(|k| uniform(100 + k, 6, -3.0, 3.0)).collect();
    let a = batch_integrate(&sys, &xs, &cfg).unwrap();
    let b = batch_integrate(&sys, &xs, &cfg).unwrap();
    assert_eq!(a, b);
    for (traj, x0) in a.iter().zip(&xs) {
        assert_eq!(&traj.states[0], x0);
        assert!(in_d2_snapped(&sys, traj.final_state().unwrap(), MEMBERSHIP_SNAP).unwrap());
    }
}
