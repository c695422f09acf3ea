use nchp::simulator::{init, replicate_rng, InitialLaw, SimConfig, SimState, StepOutcome};
use nchp::KernelParams;
use proptest::prelude::*;

fn percentile_speed(state: &SimState, q: f64) -> f64 {
    let mut speeds: Vec<f64> = state.velocities().iter().map(|v| v.norm()).collect();
    speeds.sort_by(f64::total_cmp);
    speeds[((speeds.len() - 1) as f64 * q).round() as usize]
}

#[test]
fn conservation_drift_after_1e8_collisions() {
    let params = KernelParams::new(1.0, 1.0).unwrap().with_cutoff(1e-3).unwrap();
    let cfg = SimConfig::new(params, 200, 1.0, InitialLaw::Maxwellian);
    let (mut state, mut rng) = init(&cfg, 0).unwrap();
    while state.accepted_count < 100_000_000 {
        state.step(&mut rng).unwrap();
    }
    let defect = state.conservation_defect();
    assert!(
        defect <= 1e-9,
        "drift {defect:e} after {} collisions",
        state.accepted_count
    );
}

#[test]
fn fastest_particles_slow_down_from_heavy_tails() {
    let params = KernelParams::new(1.0, 1.0).unwrap().with_cutoff(0.05).unwrap();
    let mut cfg = SimConfig::new(params, 20_000, 1.0, InitialLaw::StretchedExp);
    cfg.seed = 11;
    for r in 0..5 {
        let (mut state, mut rng) = init(&cfg, r).unwrap();
        let before = percentile_speed(&state, 0.999);
        state.advance_to(1.0, &mut rng).unwrap();
        let after = percentile_speed(&state, 0.999);
        assert!(after < before, "replicate {r}: {after} >= {before}");
    }
}

fn law() -> impl Strategy<Value = InitialLaw> {
    prop_oneof![
        Just(InitialLaw::Maxwellian),
        Just(InitialLaw::StretchedExp),
        Just(InitialLaw::TwoPoint),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn chain_invariants_hold(
        n in 2usize..60,
        gamma in 0.05..=1.0f64,
        nu in 0.05..1.95f64,
        eps in 0.01..1.0f64,
        law in law(),
        seed in any::<u64>(),
        horizon in 0.01..0.5f64,
    ) {
        let params = KernelParams::new(gamma, nu).unwrap().with_cutoff(eps).unwrap();
        let mut cfg = SimConfig::new(params, n, horizon, law);
        cfg.seed = seed;
        let (mut state, mut rng) = init(&cfg, 0).unwrap();
        let mut t_prev = state.t;
        let mut tally = [0u64; 3];
        while state.t < horizon && state.event_count < 20_000 {
            let outcome = state.step(&mut rng).unwrap();
            tally[match outcome {
                StepOutcome::Rejected => 0,
                StepOutcome::Null => 1,
                StepOutcome::Collision => 2,
            }] += 1;
            prop_assert!(state.t >= t_prev);
            t_prev = state.t;
            let speed = state.velocities().iter().map(|v| v.norm()).fold(0.0, f64::max);
            prop_assert!(speed <= state.v_max_bound * (1.0 + 1e-12));
        }
        prop_assert_eq!(tally[1], 0);
        prop_assert_eq!(tally[2], state.accepted_count);
        prop_assert_eq!(tally.iter().sum::<u64>(), state.event_count);
        prop_assert!(state.velocities().iter().all(|v| v.0.iter().all(|c| c.is_finite())));
        prop_assert!(state.conservation_defect() <= 1e-12);
    }

    #[test]
    fn advance_is_reproducible_and_lands_on_target(
        n in 2usize..40,
        seed in any::<u64>(),
        target in 0.0..0.3f64,
    ) {
        let params = KernelParams::new(1.0, 0.5).unwrap().with_cutoff(0.01).unwrap();
        let mut cfg = SimConfig::new(params, n, 1.0, InitialLaw::Maxwellian);
        cfg.seed = seed;
        let (mut a, mut ra) = init(&cfg, 3).unwrap();
        let (mut b, mut rb) = init(&cfg, 3).unwrap();
        a.advance_to(target, &mut ra).unwrap();
        b.advance_to(target, &mut rb).unwrap();
        prop_assert_eq!(a.t, target);
        prop_assert_eq!(a.velocities(), b.velocities());
        prop_assert_eq!(a.event_count, b.event_count);
    }

    #[test]
    fn replicate_streams_differ(seed in any::<u64>(), r in 0usize..16) {
        use rand::Rng;
        let x: u64 = replicate_rng(seed, r).random();
        let y: u64 = replicate_rng(seed, r + 1).random();
        prop_assert_ne!(x, y);
    }
}
