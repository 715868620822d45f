use nalgebra::{DMatrix, DVector};
use tds_core::{DelaySystem, Error, InitialData, InputSignal};
use walsh_basis::WalshBasis;

/// Unknown count up to which the vec-form operator is factorized densely;
/// beyond it the matrix equation is solved iteratively. The contract either
/// way is the residual bound checked after the solve.
const DENSE_CROSSOVER: usize = 2048;

/// Relative residual contract of the matrix equation.
const RESIDUAL_TOL: f64 = 1e-8;

/// A delay system paired with a Walsh basis and the input expansion,
/// ready for the coefficient solve.
#[derive(Debug, Clone)]
pub struct WalshMorProblem {
    system: DelaySystem,
    init: InitialData,
    basis: WalshBasis,
    /// `m x N` Walsh coefficients of the input window.
    input_coeffs: DMatrix<f64>,
}

impl WalshMorProblem {
    pub fn new(
        system: &DelaySystem,
        init: &InitialData,
        basis: WalshBasis,
        input: &InputSignal,
    ) -> Result<Self, Error> {
        if basis.order() <= system.max_delay() {
            return Err(Error::Argument(format!(
                "Walsh order {} must exceed the largest delay {}",
                basis.order(),
                system.max_delay()
            )));
        }
        if input.dim() != system.input_dim() {
            return Err(Error::Dimension(format!(
                "input dimension {} does not match the system ({})",
                input.dim(),
                system.input_dim()
            )));
        }
        let input_coeffs = input_walsh_coefficients(input, &basis)?;
        Ok(WalshMorProblem {
            system: system.clone(),
            init: init.with_max_lag(system.max_delay()),
            basis,
            input_coeffs,
        })
    }

    pub fn system(&self) -> &DelaySystem {
        &self.system
    }

    pub fn init(&self) -> &InitialData {
        &self.init
    }

    pub fn basis(&self) -> &WalshBasis {
        &self.basis
    }

    pub fn input_coeffs(&self) -> &DMatrix<f64> {
        &self.input_coeffs
    }
}

/// Walsh coefficients of the first `N` input samples.
pub fn input_walsh_coefficients(
    input: &InputSignal,
    basis: &WalshBasis,
) -> Result<DMatrix<f64>, Error> {
    let n = basis.order();
    if let Some(avail) = input.available_horizon() {
        if avail < n {
            return Err(Error::Argument(format!(
                "input provides {avail} samples, the Walsh window needs {n}"
            )));
        }
    }
    let samples = (0..n)
        .map(|t| input.eval(t))
        .collect::<Result<Vec<_>, Error>>()?;
    basis
        .project(&samples)
        .map_err(|e| Error::Argument(e.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveRoute {
    Dense,
    Iterative,
}

/// Solution of the Walsh coefficient equation.
#[derive(Debug, Clone)]
pub struct WalshSolution {
    /// `n x N` coefficient matrix; `X W(i)` approximates `x(i+1)`.
    pub coeffs: DMatrix<f64>,
    /// Relative residual of the matrix equation.
    pub residual: f64,
    pub route: SolveRoute,
    pub iterations: Option<usize>,
}

/// The right multipliers of the matrix equation
/// `X S - A0 X (RS - I) - sum_l A_l X G_l = RHS` with
/// `G_l = R^{d_l+1} S - sum_{i=0..d_l} R^{N+d_l-i}`.
struct WalshOperator<'a> {
    system: &'a DelaySystem,
    s: DMatrix<f64>,
    rs_minus_i: DMatrix<f64>,
    g: Vec<DMatrix<f64>>,
}

impl<'a> WalshOperator<'a> {
    fn new(system: &'a DelaySystem, basis: &WalshBasis) -> Self {
        let n_pts = basis.order();
        let s = basis.summation_matrix().clone();
        let r = basis.shift_matrix().clone();
        let rs_minus_i = &r * &s - DMatrix::<f64>::identity(n_pts, n_pts);
        let g = system
            .delayed_terms()
            .iter()
            .map(|(_, d)| {
                let mut gl = mat_pow(&r, d + 1) * &s;
                for i in 0..=*d {
                    gl -= mat_pow(&r, n_pts + d - i);
                }
                gl
            })
            .collect();
        WalshOperator {
            system,
            s,
            rs_minus_i,
            g,
        }
    }

    fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = x * &self.s - self.system.a0() * (x * &self.rs_minus_i);
        for ((a, _), g) in self.system.delayed_terms().iter().zip(&self.g) {
            out -= a * (x * g);
        }
        out
    }

    /// Dense vec-form operator (Kronecker assembly).
    fn dense(&self, n_pts: usize) -> DMatrix<f64> {
        let n = self.system.state_dim();
        let eye_n = DMatrix::<f64>::identity(n, n);
        let mut op = self.s.transpose().kronecker(&eye_n);
        op -= self.rs_minus_i.transpose().kronecker(self.system.a0());
        for ((a, _), g) in self.system.delayed_terms().iter().zip(&self.g) {
            op -= g.transpose().kronecker(a);
        }
        debug_assert_eq!(op.nrows(), n * n_pts);
        op
    }
}

fn mat_pow(m: &DMatrix<f64>, mut e: usize) -> DMatrix<f64> {
    let mut base = m.clone();
    let mut acc = DMatrix::<f64>::identity(m.nrows(), m.ncols());
    while e > 0 {
        if e & 1 == 1 {
            acc = &acc * &base;
        }
        e >>= 1;
        if e > 0 {
            base = &base * &base;
        }
    }
    acc
}

fn assemble_rhs(problem: &WalshMorProblem) -> DMatrix<f64> {
    let sys = &problem.system;
    let basis = &problem.basis;
    let n = sys.state_dim();
    let n_pts = basis.order();
    // Q_j has phi(j) in column 0; the RHS collects A0 Q_0, the delayed
    // initial sums, and B U S
    let mut rhs = DMatrix::<f64>::zeros(n, n_pts);
    rhs.column_mut(0)
        .copy_from(&(sys.a0() * problem.init.phi(0)));
    for (a, d) in sys.delayed_terms() {
        let mut acc = DVector::<f64>::zeros(n);
        for i in 0..=*d {
            // lag of x(i - d) is d - i
            acc += problem.init.phi(d - i);
        }
        let mut col = rhs.column_mut(0);
        col += a * acc;
    }
    rhs += sys.b() * (&problem.input_coeffs * basis.summation_matrix());
    rhs
}

/// Solves the Walsh coefficient matrix equation, checking the residual
/// contract `|T(X) - RHS|_F <= 1e-8 (|X|_F |S|_F + |RHS|_F)`.
pub fn solve_walsh_coefficients(problem: &WalshMorProblem) -> Result<WalshSolution, Error> {
    let sys = &problem.system;
    let basis = &problem.basis;
    let n = sys.state_dim();
    let n_pts = basis.order();
    let op = WalshOperator::new(sys, basis);
    let rhs = assemble_rhs(problem);

    let (coeffs, route, iterations) = if n * n_pts <= DENSE_CROSSOVER {
        let dense = op.dense(n_pts);
        let rhs_vec = DVector::from_column_slice(rhs.as_slice());
        let lu = dense.clone().lu();
        let sol = lu.solve(&rhs_vec).ok_or_else(|| Error::Numerical {
            message: "vec-form Walsh operator is singular".into(),
            condition: condition_estimate(&dense),
        })?;
        (
            DMatrix::from_column_slice(n, n_pts, sol.as_slice()),
            SolveRoute::Dense,
            None,
        )
    } else {
        let precond = Preconditioner::new(sys, basis)?;
        let b_vec = DVector::from_column_slice(rhs.as_slice());
        let apply = |v: &DVector<f64>| {
            let x = DMatrix::from_column_slice(n, n_pts, v.as_slice());
            let y = op.apply(&x);
            DVector::from_column_slice(y.as_slice())
        };
        let apply_m = |v: &DVector<f64>| {
            let x = DMatrix::from_column_slice(n, n_pts, v.as_slice());
            let y = precond.apply(&x);
            DVector::from_column_slice(y.as_slice())
        };
        let (sol, iters, converged) = gmres(apply, apply_m, &b_vec, 1e-13, 400);
        if !converged {
            return Err(Error::Numerical {
                message: format!(
                    "Walsh coefficient solve did not converge in {iters} iterations"
                ),
                condition: None,
            });
        }
        (
            DMatrix::from_column_slice(n, n_pts, sol.as_slice()),
            SolveRoute::Iterative,
            Some(iters),
        )
    };

    let resid_abs = (op.apply(&coeffs) - &rhs).norm();
    let scale = coeffs.norm() * basis.summation_matrix().norm() + rhs.norm();
    let residual = if scale == 0.0 {
        resid_abs
    } else {
        resid_abs / scale
    };
    if residual > RESIDUAL_TOL {
        let condition = if n * n_pts <= 600 {
            condition_estimate(&op.dense(n_pts))
        } else {
            None
        };
        return Err(Error::Numerical {
            message: format!(
                "Walsh equation residual {residual:.3e} exceeds the contract {RESIDUAL_TOL:.1e}"
            ),
            condition,
        });
    }
    Ok(WalshSolution {
        coeffs,
        residual,
        route,
        iterations,
    })
}

fn condition_estimate(m: &DMatrix<f64>) -> Option<f64> {
    let svd = m.clone().svd(false, false);
    let max = svd.singular_values.max();
    let min = svd.singular_values.min();
    (min > 0.0).then(|| max / min)
}

/// Operational Walsh coefficients of the output, from
/// `Y S = C Q_0 + C X R S - C X`.
pub fn output_walsh_coefficients(
    c: &DMatrix<f64>,
    phi0: &DVector<f64>,
    coeffs: &DMatrix<f64>,
    basis: &WalshBasis,
) -> Result<DMatrix<f64>, Error> {
    let n_pts = basis.order();
    let mut m = DMatrix::<f64>::zeros(c.nrows(), n_pts);
    m.column_mut(0).copy_from(&(c * phi0));
    m += c * coeffs * (basis.shift_matrix() * basis.summation_matrix());
    m -= c * coeffs;
    // Y = M S^{-1}: solve S^T Y^T = M^T
    let lu = basis.summation_matrix().transpose().lu();
    let yt = lu.solve(&m.transpose()).ok_or_else(|| Error::Numerical {
        message: "summation matrix is singular".into(),
        condition: None,
    })?;
    Ok(yt.transpose())
}

/// Forward substitution in sample space, used as the right preconditioner
/// of the iterative route. It inverts the block-lower-triangular part of the
/// equation and leaves only the wrap-around coupling to the last window
/// columns, so the preconditioned operator is identity plus low rank.
struct Preconditioner {
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    a0: DMatrix<f64>,
    delayed: Vec<(DMatrix<f64>, usize)>,
    walsh_f: DMatrix<f64>,
    n_pts: usize,
}

impl Preconditioner {
    fn new(system: &DelaySystem, basis: &WalshBasis) -> Result<Self, Error> {
        let n = system.state_dim();
        let mut diag = DMatrix::<f64>::identity(n, n) + system.a0();
        for (a, _) in system.delayed_terms() {
            diag += a;
        }
        let lu = diag.lu();
        Ok(Preconditioner {
            lu,
            a0: system.a0().clone(),
            delayed: system.delayed_terms().to_vec(),
            walsh_f: basis.walsh_matrix_f().clone(),
            n_pts: basis.order(),
        })
    }

    fn apply(&self, resid: &DMatrix<f64>) -> DMatrix<f64> {
        let n = resid.nrows();
        let n_pts = self.n_pts;
        // to sample space
        let rt = resid * &self.walsh_f;
        let mut z = DMatrix::<f64>::zeros(n, n_pts);
        // prefix sums of solved columns, prefix[k] = sum_{j<k} z_j
        let mut prefix = vec![DVector::<f64>::zeros(n); n_pts + 1];
        for k in 0..n_pts {
            let mut rhs = DVector::from(rt.column(k));
            if k > 0 {
                let sum_prev = &prefix[k];
                rhs -= sum_prev - &self.a0 * sum_prev;
                for (a, d) in &self.delayed {
                    let s1 = if k >= d + 1 {
                        prefix[k - d].clone()
                    } else {
                        DVector::zeros(n)
                    };
                    rhs -= a * (2.0 * s1 - sum_prev);
                }
            }
            let zk = self.lu.solve(&rhs).unwrap_or_else(|| DVector::zeros(n));
            prefix[k + 1] = &prefix[k] + &zk;
            z.set_column(k, &zk);
        }
        // back to coefficient space
        z * &self.walsh_f / n_pts as f64
    }
}

/// Right-preconditioned full GMRES. Returns the solution, iteration count
/// and whether the relative residual target was met.
fn gmres<A, M>(
    apply: A,
    apply_m: M,
    b: &DVector<f64>,
    rtol: f64,
    max_iter: usize,
) -> (DVector<f64>, usize, bool)
where
    A: Fn(&DVector<f64>) -> DVector<f64>,
    M: Fn(&DVector<f64>) -> DVector<f64>,
{
    let n = b.len();
    let b_norm = b.norm();
    if b_norm == 0.0 {
        return (DVector::zeros(n), 0, true);
    }
    let max_iter = max_iter.min(n);
    let mut basis: Vec<DVector<f64>> = vec![b / b_norm];
    // Hessenberg columns after Givens, plus rotation bookkeeping
    let mut h_cols: Vec<Vec<f64>> = Vec::new();
    let mut cs: Vec<f64> = Vec::new();
    let mut sn: Vec<f64> = Vec::new();
    let mut g = vec![b_norm];
    let mut converged = false;
    let mut iters = 0;

    for j in 0..max_iter {
        iters = j + 1;
        let mut w = apply(&apply_m(&basis[j]));
        let mut h = vec![0.0; j + 2];
        for (i, v) in basis.iter().enumerate() {
            h[i] = w.dot(v);
            w -= v * h[i];
        }
        // one re-orthogonalization pass keeps the basis clean
        for (i, v) in basis.iter().enumerate() {
            let corr = w.dot(v);
            h[i] += corr;
            w -= v * corr;
        }
        h[j + 1] = w.norm();
        // apply previous rotations
        for i in 0..j {
            let t = cs[i] * h[i] + sn[i] * h[i + 1];
            h[i + 1] = -sn[i] * h[i] + cs[i] * h[i + 1];
            h[i] = t;
        }
        let denom = (h[j] * h[j] + h[j + 1] * h[j + 1]).sqrt();
        let (c, s) = if denom == 0.0 {
            (1.0, 0.0)
        } else {
            (h[j] / denom, h[j + 1] / denom)
        };
        cs.push(c);
        sn.push(s);
        h[j] = c * h[j] + s * h[j + 1];
        h[j + 1] = 0.0;
        g.push(-s * g[j]);
        g[j] *= c;
        h_cols.push(h);

        let rel = g[j + 1].abs() / b_norm;
        if rel <= rtol {
            converged = true;
            break;
        }
        if h_cols[j][j + 1] == 0.0 && !converged {
            // lucky breakdown: exact solution in the current space
            converged = true;
            break;
        }
        basis.push(w / h_cols[j][j + 1]);
    }

    // back substitution on the triangular system
    let k = iters;
    let mut y = vec![0.0; k];
    for i in (0..k).rev() {
        let mut acc = g[i];
        for (jj, yj) in y.iter().enumerate().take(k).skip(i + 1) {
            acc -= h_cols[jj][i] * yj;
        }
        y[i] = if h_cols[i][i] != 0.0 {
            acc / h_cols[i][i]
        } else {
            0.0
        };
    }
    let mut x_pre = DVector::<f64>::zeros(n);
    for (i, yi) in y.iter().enumerate() {
        x_pre += &basis[i] * *yi;
    }
    (apply_m(&x_pre), iters, converged)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use tds_core::ChannelSignal;

    fn scalar_problem(n_pts_log2: u32) -> WalshMorProblem {
        let sys = DelaySystem::new(
            DMatrix::from_element(1, 1, 0.5),
            vec![(DMatrix::from_element(1, 1, 0.1), 1)],
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
        )
        .unwrap();
        let init = InitialData::from_values(vec![
            DVector::from_element(1, 1.0),
            DVector::from_element(1, 0.0),
        ])
        .unwrap();
        let basis = WalshBasis::new(n_pts_log2).unwrap();
        WalshMorProblem::new(&sys, &init, basis, &InputSignal::zero(1)).unwrap()
    }

    #[test]
    fn homogeneous_problem_has_zero_solution() {
        let sys = DelaySystem::new(
            DMatrix::from_element(1, 1, 0.5),
            vec![(DMatrix::from_element(1, 1, 0.1), 1)],
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
        )
        .unwrap();
        let init = InitialData::zero(1, 1);
        let basis = WalshBasis::new(2).unwrap();
        let problem =
            WalshMorProblem::new(&sys, &init, basis, &InputSignal::zero(1)).unwrap();
        let sol = solve_walsh_coefficients(&problem).unwrap();
        assert!(sol.coeffs.amax() <= 1e-14);
    }

    #[test]
    fn residual_contract_met_on_scalar_example() {
        let sol = solve_walsh_coefficients(&scalar_problem(2)).unwrap();
        assert!(sol.residual <= 1e-12);
        assert_eq!(sol.route, SolveRoute::Dense);
    }

    #[test]
    fn input_coefficients_of_constant_signal() {
        let basis = WalshBasis::new(3).unwrap();
        let sig = InputSignal::Samples {
            data: DMatrix::from_element(2, 8, 3.5),
        };
        let u = input_walsh_coefficients(&sig, &basis).unwrap();
        assert!((u[(0, 0)] - 3.5).abs() <= 1e-14);
        assert!((u[(1, 0)] - 3.5).abs() <= 1e-14);
        assert!(u.columns(1, 7).amax() <= 1e-13);
    }

    #[test]
    fn input_coefficients_reconstruct() {
        let basis = WalshBasis::new(3).unwrap();
        let sig = InputSignal::ClosedForm {
            channels: vec![ChannelSignal::RampSine {
                amplitude: 2.0,
                frequency: 0.4,
            }],
        };
        let u = input_walsh_coefficients(&sig, &basis).unwrap();
        for k in 0..8 {
            let back = basis.reconstruct(&u, k).unwrap();
            let expect = sig.eval(k).unwrap();
            assert!((back - expect).amax() <= 1e-12);
        }
    }

    #[test]
    fn iterative_route_matches_dense() {
        // same operator solved both ways on a system big enough to cross over
        let n = 40;
        let a0 = DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                0.4
            } else {
                0.2 * ((i * 7 + j * 13) as f64 * 0.29).sin() / n as f64
            }
        });
        let a1 = DMatrix::from_fn(n, n, |i, j| 0.1 * ((i + 2 * j) as f64 * 0.53).cos() / n as f64);
        let b = DMatrix::from_fn(n, 1, |i, _| ((i + 1) as f64 * 0.17).sin());
        let c = DMatrix::from_element(1, n, 1.0);
        let sys = DelaySystem::new(a0, vec![(a1, 2)], b, c).unwrap();
        let init = InitialData::from_values(
            (0..=2)
                .map(|k| DVector::from_fn(n, |i, _| ((i * (k + 1)) as f64 * 0.41).cos()))
                .collect(),
        )
        .unwrap();
        let input = InputSignal::ClosedForm {
            channels: vec![ChannelSignal::RampSine {
                amplitude: 1.0,
                frequency: 0.3,
            }],
        };
        // N = 64 -> n*N = 2560 > crossover uses GMRES; N = 32 uses dense
        let basis64 = WalshBasis::new(6).unwrap();
        let problem64 = WalshMorProblem::new(&sys, &init, basis64, &input).unwrap();
        let sol = solve_walsh_coefficients(&problem64).unwrap();
        assert_eq!(sol.route, SolveRoute::Iterative);
        assert!(sol.residual <= 1e-10, "residual {}", sol.residual);

        // dense cross-check at the same order through the kron assembly
        let op = WalshOperator::new(&sys, problem64.basis());
        let dense = op.dense(64);
        let rhs = assemble_rhs(&problem64);
        let sol_dense = dense
            .lu()
            .solve(&DVector::from_column_slice(rhs.as_slice()))
            .unwrap();
        let x_dense = DMatrix::from_column_slice(n, 64, sol_dense.as_slice());
        let rel = (&sol.coeffs - &x_dense).norm() / x_dense.norm();
        assert!(rel <= 1e-9, "route disagreement {rel}");
    }

    #[test]
    fn cyclic_power_identity() {
        // replacing R^{N+d-i} by R^{d-i} changes the solution by <= 1e-10
        let problem = scalar_problem(3);
        let sol = solve_walsh_coefficients(&problem).unwrap();
        let basis = problem.basis();
        let n_pts = basis.order();
        let sys = problem.system();
        let r = basis.shift_matrix();
        let s = basis.summation_matrix();
        let mut op = s.transpose().kronecker(&DMatrix::<f64>::identity(1, 1));
        let rs_minus_i = r * s - DMatrix::<f64>::identity(n_pts, n_pts);
        op -= rs_minus_i.transpose().kronecker(sys.a0());
        for (a, d) in sys.delayed_terms() {
            let mut g = mat_pow(r, d + 1) * s;
            for i in 0..=*d {
                g -= mat_pow(r, (n_pts + d - i) % n_pts); // reduced exponent
            }
            op -= g.transpose().kronecker(a);
        }
        let rhs = assemble_rhs(&problem);
        let alt = op
            .lu()
            .solve(&DVector::from_column_slice(rhs.as_slice()))
            .unwrap();
        let alt = DMatrix::from_column_slice(1, n_pts, alt.as_slice());
        assert!((alt - &sol.coeffs).amax() <= 1e-10);
    }

    #[test]
    fn walsh_order_must_exceed_delay() {
        let sys = DelaySystem::new(
            DMatrix::from_element(1, 1, 0.5),
            vec![(DMatrix::from_element(1, 1, 0.1), 2)],
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
        )
        .unwrap();
        let init = InitialData::zero(1, 2);
        let basis = WalshBasis::new(1).unwrap();
        assert!(WalshMorProblem::new(&sys, &init, basis, &InputSignal::zero(1)).is_err());
    }
}
