//! Delayed recursion vs the lifted delay-free reformulation on random
//! stable systems.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tds_core::{
    lift_to_linear, simulate, spectral_radius, ChannelSignal, DelaySystem, InitialData,
    InputSignal,
};

fn random_stable(rng: &mut ChaCha8Rng, n: usize, delays: &[usize], margin: f64) -> DelaySystem {
    let scale = 1.0 / (n as f64).sqrt();
    let a0 = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0) * scale);
    let delayed: Vec<_> = delays
        .iter()
        .map(|&d| {
            (
                DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0) * scale),
                d,
            )
        })
        .collect();
    let b = DMatrix::from_fn(n, 1, |_, _| rng.random_range(-1.0..1.0));
    let c = DMatrix::from_fn(1, n, |_, _| rng.random_range(-1.0..1.0));
    let sys = DelaySystem::new(a0.clone(), delayed.clone(), b.clone(), c.clone()).unwrap();
    let rho = spectral_radius(&sys).unwrap();
    if rho == 0.0 {
        return sys;
    }
    // scaling x(t) -> c^t x(t) divides each characteristic root by c
    let c_scale = rho / (1.0 - margin);
    let a0 = a0 / c_scale;
    let delayed = delayed
        .into_iter()
        .map(|(a, d)| (a / c_scale.powi(d as i32 + 1), d))
        .collect();
    DelaySystem::new(a0, delayed, b, c).unwrap()
}

fn random_init(rng: &mut ChaCha8Rng, n: usize, d_max: usize) -> InitialData {
    let values = (0..=d_max)
        .map(|_| {
            let v = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0f64));
            let norm = v.norm();
            v / norm
        })
        .collect();
    InitialData::from_values(values).unwrap()
}

#[test]
fn lifted_simulation_matches_delayed_recursion() {
    let mut rng = ChaCha8Rng::seed_from_u64(20240917);
    let horizon = 200;
    for trial in 0..50 {
        let n = rng.random_range(2..=20);
        let d_max = rng.random_range(1..=4usize);
        let mut delays: Vec<usize> = (1..=d_max).collect();
        delays.retain(|_| rng.random_bool(0.7));
        if delays.is_empty() {
            delays.push(d_max);
        }
        let sys = random_stable(&mut rng, n, &delays, 0.1);
        let init = random_init(&mut rng, n, sys.max_delay());
        let input = InputSignal::ClosedForm {
            channels: vec![ChannelSignal::RampSine {
                amplitude: 0.3,
                frequency: 0.45,
            }],
        };
        let direct = simulate(&sys, &init, &input, horizon, false).unwrap();

        let lifted = lift_to_linear(&sys, &init);
        let lifted_sys = lifted.as_delay_system();
        let lifted_init = lifted.initial_data();
        let lifted_traj = simulate(&lifted_sys, &lifted_init, &input, horizon, false).unwrap();

        let mut worst = 0.0f64;
        for (y, yl) in direct.outputs().iter().zip(lifted_traj.outputs()) {
            worst = worst.max((y - yl).amax());
        }
        assert!(
            worst <= 1e-12,
            "trial {trial}: lifted deviation {worst} (n={n}, delays {delays:?})"
        );
    }
}

#[test]
fn lifted_output_matches_state_projection() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let sys = random_stable(&mut rng, 6, &[2], 0.2);
    let init = random_init(&mut rng, 6, 2);
    let lifted = lift_to_linear(&sys, &init);
    // C_bar z(t) = C x(t)
    let traj = simulate(&sys, &init, &InputSignal::zero(1), 30, true).unwrap();
    let lifted_traj = simulate(
        &lifted.as_delay_system(),
        &lifted.initial_data(),
        &InputSignal::zero(1),
        30,
        true,
    )
    .unwrap();
    for (t, z) in lifted_traj.states().unwrap().iter().enumerate() {
        let cx = sys.c() * &traj.states().unwrap()[t];
        let cz = &lifted.c_bar * z;
        assert!((cx - cz).amax() <= 1e-12, "mismatch at t={t}");
    }
}
