use crate::{DelaySystem, Error, InitialData, InputSignal, Trajectory};
use nalgebra::{DMatrix, DVector};

/// Runs the delay recursion for `horizon` steps and records
/// `y(t) = C x(t)` for `t = 0..=horizon`.
pub fn simulate(
    system: &DelaySystem,
    init: &InitialData,
    input: &InputSignal,
    horizon: usize,
    retain_states: bool,
) -> Result<Trajectory, Error> {
    if horizon < 1 {
        return Err(Error::Argument("horizon must be at least 1".into()));
    }
    if init.state_dim() != system.state_dim() {
        return Err(Error::Dimension(format!(
            "initial data dimension {} does not match state dimension {}",
            init.state_dim(),
            system.state_dim()
        )));
    }
    if input.dim() != system.input_dim() {
        return Err(Error::Dimension(format!(
            "input dimension {} does not match B ({} columns)",
            input.dim(),
            system.input_dim()
        )));
    }
    if let Some(avail) = input.available_horizon() {
        if avail < horizon {
            return Err(Error::Argument(format!(
                "sampled input provides {avail} steps, horizon needs {horizon}"
            )));
        }
    }
    let d_max = system.max_delay();
    let init = init.with_max_lag(d_max);

    // ring buffer over the last d_max+1 states; slot(t mod len) = x(t)
    let len = d_max + 1;
    let mut ring: Vec<DVector<f64>> = vec![DVector::zeros(system.state_dim()); len];
    for lag in 0..=d_max {
        // x(-lag) lives at slot (-lag) mod len = (len - lag) mod len
        ring[(len - lag) % len] = init.phi(lag).clone();
    }

    let mut outputs = Vec::with_capacity(horizon + 1);
    let mut states = retain_states.then(|| Vec::with_capacity(horizon + 1));
    outputs.push(system.c() * &ring[0]);
    if let Some(s) = states.as_mut() {
        s.push(ring[0].clone());
    }
    for t in 0..horizon {
        let mut next = system.a0() * &ring[t % len] + system.b() * input.eval(t)?;
        for (a, d) in system.delayed_terms() {
            // x(t - d): slot (t - d) mod len
            let slot = (t + len - (d % len)) % len;
            next += a * &ring[slot];
        }
        ring[(t + 1) % len] = next;
        let x = &ring[(t + 1) % len];
        outputs.push(system.c() * x);
        if let Some(s) = states.as_mut() {
            s.push(x.clone());
        }
    }
    Ok(Trajectory::new(outputs, states))
}

/// Fundamental matrix sequence `Psi(0..=t_max)`.
///
/// `Psi(t+1) = A0 Psi(t) + sum_l A_l Psi(t - d_l)` with `Psi(0) = I` and
/// `Psi(tau) = 0` for `tau < 0`.
pub fn fundamental_matrix(system: &DelaySystem, t_max: usize) -> Vec<DMatrix<f64>> {
    let n = system.state_dim();
    let mut seq = Vec::with_capacity(t_max + 1);
    seq.push(DMatrix::<f64>::identity(n, n));
    for t in 0..t_max {
        let mut next = system.a0() * &seq[t];
        for (a, d) in system.delayed_terms() {
            if t >= *d {
                next += a * &seq[t - d];
            }
        }
        seq.push(next);
    }
    seq
}
