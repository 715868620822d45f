use crate::solve::{
    output_walsh_coefficients, solve_walsh_coefficients, SolveRoute, WalshMorProblem,
};
use nalgebra::{DMatrix, DVector};
use tds_core::{
    lift_to_linear, DelaySystem, Error, InitialData, InputSignal, MethodTag, Projection,
    ReducedSystem, ReductionParams,
};
use walsh_basis::WalshBasis;

/// Default rank tolerance relative to the largest singular value.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// Orthonormal basis of `colspan{X, phi(0), ..., phi(-d)}`.
///
/// Rank-revealing SVD with columns kept while `sigma > tol * sigma_max`;
/// every kept column has its first significant entry made positive so
/// repeated runs produce identical files.
pub fn build_projection(
    coeffs: &DMatrix<f64>,
    init: &InitialData,
    tol: f64,
) -> Result<DMatrix<f64>, Error> {
    let (v, _) = build_projection_with_spectrum(coeffs, init, tol)?;
    Ok(v)
}

pub fn build_projection_with_spectrum(
    coeffs: &DMatrix<f64>,
    init: &InitialData,
    tol: f64,
) -> Result<(DMatrix<f64>, Vec<f64>), Error> {
    let n = coeffs.nrows();
    if init.state_dim() != n {
        return Err(Error::Dimension(
            "coefficient matrix and initial data disagree on the state dimension".into(),
        ));
    }
    let lags = init.max_lag() + 1;
    let mut assembled = DMatrix::<f64>::zeros(n, coeffs.ncols() + lags);
    assembled
        .view_mut((0, 0), (n, coeffs.ncols()))
        .copy_from(coeffs);
    for lag in 0..lags {
        assembled
            .column_mut(coeffs.ncols() + lag)
            .copy_from(init.phi(lag));
    }
    let svd = assembled.svd(true, false);
    let u = svd.u.as_ref().expect("requested U");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .partial_cmp(&svd.singular_values[a])
            .unwrap()
    });
    let sigma_max = svd.singular_values[order[0]];
    if sigma_max == 0.0 {
        return Err(Error::Argument(
            "projection subspace is empty (all columns zero)".into(),
        ));
    }
    let threshold = if tol > 0.0 { tol * sigma_max } else { 0.0 };
    let kept: Vec<usize> = order
        .iter()
        .copied()
        .filter(|&i| svd.singular_values[i] > threshold)
        .collect();
    let mut v = DMatrix::<f64>::zeros(n, kept.len());
    for (col, &i) in kept.iter().enumerate() {
        v.column_mut(col).copy_from(&u.column(i));
    }
    fix_column_signs(&mut v);
    let spectrum: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    Ok((v, spectrum))
}

/// Makes the first significant entry of each column positive.
fn fix_column_signs(m: &mut DMatrix<f64>) {
    for mut col in m.column_iter_mut() {
        let norm = col.norm();
        if norm == 0.0 {
            continue;
        }
        if let Some(lead) = col.iter().find(|x| x.abs() > 1e-12 * norm) {
            if *lead < 0.0 {
                col.neg_mut();
            }
        }
    }
}

/// Everything a reduction run reports besides the model itself.
#[derive(Debug, Clone)]
pub struct WalshReduction {
    pub reduced: ReducedSystem,
    pub residual: f64,
    pub route: SolveRoute,
    pub iterations: Option<usize>,
    pub singular_values: Vec<f64>,
}

fn project_two_sided(
    system: &DelaySystem,
    v: &DMatrix<f64>,
    w: &DMatrix<f64>,
) -> Result<DelaySystem, Error> {
    let wt = w.transpose();
    let a0 = &wt * system.a0() * v;
    let delayed = system
        .delayed_terms()
        .iter()
        .map(|(a, d)| (&wt * a * v, *d))
        .collect();
    DelaySystem::new(a0, delayed, &wt * system.b(), system.c() * v)
}

fn power_of_two_log(n_points: usize) -> Result<u32, Error> {
    if n_points < 2 || !n_points.is_power_of_two() {
        return Err(Error::Argument(format!(
            "Walsh order must be a power of two >= 2, got {n_points}"
        )));
    }
    Ok(n_points.trailing_zeros())
}

/// One-sided Walsh reduction: solve for the coefficient matrix, span it
/// together with the initial vectors, project with `W = V`.
pub fn reduce_walsh(
    system: &DelaySystem,
    init: &InitialData,
    input: &InputSignal,
    n_points: usize,
    tol: f64,
) -> Result<WalshReduction, Error> {
    let l = power_of_two_log(n_points)?;
    let basis = WalshBasis::new(l).map_err(|e| Error::Argument(e.to_string()))?;
    let problem = WalshMorProblem::new(system, init, basis, input)?;
    let sol = solve_walsh_coefficients(&problem)?;
    let (v, spectrum) = build_projection_with_spectrum(&sol.coeffs, problem.init(), tol)?;
    let reduced_sys = project_two_sided(system, &v, &v)?;
    let reduced_init = problem.init().project(&v);
    let r = v.ncols();
    Ok(WalshReduction {
        reduced: ReducedSystem {
            system: reduced_sys,
            init: reduced_init,
            projection: Projection::TwoSided { v: v.clone(), w: v },
            method: MethodTag::Walsh,
            params: ReductionParams {
                order_param: Some(n_points as u32),
                discount: None,
                r,
                tol: Some(tol),
                build_seconds: None,
            },
        },
        residual: sol.residual,
        route: sol.route,
        iterations: sol.iterations,
        singular_values: spectrum,
    })
}

/// Largest entrywise deviation between the operational output coefficients
/// of the full model and of a reduced model, over the first `N` columns.
pub fn verify_coefficient_matching(
    system: &DelaySystem,
    init: &InitialData,
    reduced: &ReducedSystem,
    input: &InputSignal,
    n_points: usize,
) -> Result<f64, Error> {
    let l = power_of_two_log(n_points)?;
    let basis = WalshBasis::new(l).map_err(|e| Error::Argument(e.to_string()))?;
    let full_problem = WalshMorProblem::new(system, init, basis.clone(), input)?;
    let full_sol = solve_walsh_coefficients(&full_problem)?;
    let y_full = output_walsh_coefficients(
        system.c(),
        full_problem.init().phi(0),
        &full_sol.coeffs,
        &basis,
    )?;

    let red_problem = WalshMorProblem::new(&reduced.system, &reduced.init, basis.clone(), input)?;
    let red_sol = solve_walsh_coefficients(&red_problem)?;
    let y_red = output_walsh_coefficients(
        reduced.system.c(),
        red_problem.init().phi(0),
        &red_sol.coeffs,
        &basis,
    )?;

    Ok((y_full - y_red).amax())
}

/// Residuals of the span-inheritance property: the full coefficient matrix
/// factors through the projection (`X = V X_hat`) and the initial vectors
/// are reproduced (`phi(j) = V x_hat(j)`).
#[derive(Debug, Clone)]
pub struct LemmaResiduals {
    /// `|X - V X_hat|_F / |X|_F`.
    pub coeff_rel: f64,
    /// Per lag: `|phi(j) - V x_hat(j)| / |phi(j)|` (absolute when `phi` is 0).
    pub init_rels: Vec<f64>,
}

pub fn lemma_residuals(
    system: &DelaySystem,
    init: &InitialData,
    input: &InputSignal,
    reduced: &ReducedSystem,
    n_points: usize,
) -> Result<LemmaResiduals, Error> {
    let v = match &reduced.projection {
        Projection::TwoSided { v, .. } => v,
        Projection::Partitioned { .. } => {
            return Err(Error::Argument(
                "span inheritance applies to two-sided projections only".into(),
            ))
        }
    };
    let l = power_of_two_log(n_points)?;
    let basis = WalshBasis::new(l).map_err(|e| Error::Argument(e.to_string()))?;
    let full_problem = WalshMorProblem::new(system, init, basis.clone(), input)?;
    let full_sol = solve_walsh_coefficients(&full_problem)?;
    let red_problem = WalshMorProblem::new(&reduced.system, &reduced.init, basis, input)?;
    let red_sol = solve_walsh_coefficients(&red_problem)?;

    let denom = full_sol.coeffs.norm();
    let num = (&full_sol.coeffs - v * &red_sol.coeffs).norm();
    let coeff_rel = if denom == 0.0 { num } else { num / denom };
    let init_full = full_problem.init();
    let init_red = red_problem.init();
    let init_rels = (0..=init_full.max_lag())
        .map(|lag| {
            let phi = init_full.phi(lag);
            let err = (phi - v * init_red.phi(lag)).norm();
            if phi.norm() > 0.0 {
                err / phi.norm()
            } else {
                err
            }
        })
        .collect();
    Ok(LemmaResiduals {
        coeff_rel,
        init_rels,
    })
}

/// Lifted comparator: Walsh-reduce the delay-free lifted reformulation and
/// fold the partitioned basis back onto the delayed structure.
///
/// Refuses when the lifted dimension `n (d_max + 1)` exceeds `lift_cap`,
/// since the route materializes dense lifted matrices.
pub fn reduce_lifted_walsh(
    system: &DelaySystem,
    init: &InitialData,
    input: &InputSignal,
    n_points: usize,
    tol: f64,
    lift_cap: usize,
) -> Result<WalshReduction, Error> {
    let n = system.state_dim();
    let d_max = system.max_delay();
    let n_lift = n * (d_max + 1);
    if n_lift > lift_cap {
        return Err(Error::Capacity(format!(
            "lifted dimension {n_lift} exceeds the memory cap {lift_cap}; \
             the lifted route builds dense {n_lift}x{n_lift} matrices"
        )));
    }
    let l = power_of_two_log(n_points)?;
    let init = init.with_max_lag(d_max);
    let lifted = lift_to_linear(system, &init);
    let lifted_sys = lifted.as_delay_system();
    let lifted_init = lifted.initial_data();
    let basis = WalshBasis::new(l).map_err(|e| Error::Argument(e.to_string()))?;
    let problem = WalshMorProblem::new(&lifted_sys, &lifted_init, basis, input)?;
    let sol = solve_walsh_coefficients(&problem)?;
    let (v_hat, spectrum) = build_projection_with_spectrum(&sol.coeffs, &lifted_init, tol)?;
    let r = v_hat.ncols();

    let blocks: Vec<DMatrix<f64>> = (0..=d_max)
        .map(|k| DMatrix::from(v_hat.rows(k * n, n)))
        .collect();
    let v0t = blocks[0].transpose();
    let a0 = &v0t * system.a0() * &blocks[0];
    let delayed = system
        .delayed_terms()
        .iter()
        .map(|(a, d)| (&v0t * a * &blocks[*d], *d))
        .collect::<Vec<_>>();
    let b = &v0t * system.b();
    let c = system.c() * &blocks[0];
    let reduced_sys = DelaySystem::new(a0, delayed, b, c)?;

    let values: Vec<DVector<f64>> = (0..=d_max)
        .map(|lag| blocks[lag].transpose() * init.phi(lag))
        .collect();
    let bases: Vec<DMatrix<f64>> = (0..=d_max)
        .map(|lag| blocks[lag].transpose() * init.basis(lag))
        .collect();
    let weights: Vec<DVector<f64>> = (0..=d_max).map(|lag| init.weight(lag).clone()).collect();
    let reduced_init = InitialData::new(values, bases, weights)?;

    Ok(WalshReduction {
        reduced: ReducedSystem {
            system: reduced_sys,
            init: reduced_init,
            projection: Projection::Partitioned { blocks },
            method: MethodTag::Lifted,
            params: ReductionParams {
                order_param: Some(n_points as u32),
                discount: None,
                r,
                tol: Some(tol),
                build_seconds: None,
            },
        },
        residual: sol.residual,
        route: sol.route,
        iterations: sol.iterations,
        singular_values: spectrum,
    })
}
