//! Discrete Laguerre polynomials.
//!
//! The family `L_i(k)` is orthonormal on the non-negative integers and decays
//! geometrically with rate `o = sqrt(s)`, where `s` in `(0,1)` is the
//! discount factor. Evaluation goes through the three-term recurrence; the
//! closed binomial formula lives in [`reference`] and is only used to check
//! the recurrence. The basis vector satisfies `L(k+1) = T L(k)` with the
//! lower-triangular Toeplitz shift matrix `T`.

use nalgebra::{DMatrix, DVector};
use std::fmt;

/// Default discount factor used when a caller does not specify one.
pub const DEFAULT_DISCOUNT: f64 = 0.81;

#[derive(Debug, Clone, PartialEq)]
pub enum LaguerreError {
    /// Discount factor outside the open interval (0, 1).
    InvalidDiscount { s: f64 },
    /// Zero basis functions requested.
    InvalidOrder,
}

impl fmt::Display for LaguerreError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LaguerreError::InvalidDiscount { s } => {
                write!(f, "discount factor {s} outside the open interval (0, 1)")
            }
            LaguerreError::InvalidOrder => write!(f, "basis needs at least one term"),
        }
    }
}

impl std::error::Error for LaguerreError {}

fn check_discount(s: f64) -> Result<(), LaguerreError> {
    if !(s > 0.0 && s < 1.0) {
        return Err(LaguerreError::InvalidDiscount { s });
    }
    Ok(())
}

/// `L_i(k)` by the three-term recurrence, upward in `i` at fixed `k`.
pub fn laguerre_eval(i: usize, k: usize, s: f64) -> Result<f64, LaguerreError> {
    check_discount(s)?;
    let o = s.sqrt();
    let kf = k as f64;
    let l0 = (1.0 - s).sqrt() * o.powi(k as i32);
    if i == 0 {
        return Ok(l0);
    }
    // a_i(k) = (i + (i+1)s + (s-1)k) / (i+1), b_i = -i s / (i+1)
    let mut prev = l0;
    let mut cur = -(s + (s - 1.0) * kf) / o * l0;
    for m in 1..i {
        let mf = m as f64;
        let a = (mf + (mf + 1.0) * s + (s - 1.0) * kf) / (mf + 1.0);
        let b = -mf * s / (mf + 1.0);
        let next = -a / o * cur + b / s * prev;
        prev = cur;
        cur = next;
    }
    Ok(cur)
}

/// The lower-triangular Toeplitz shift-transformation matrix `T`.
///
/// Diagonal entries equal `o`; the first column is
/// `[o, 1-s, (-o)(1-s), ..., (-o)^{K-2}(1-s)]`.
pub fn build_shift_matrix(k_terms: usize, s: f64) -> Result<DMatrix<f64>, LaguerreError> {
    check_discount(s)?;
    if k_terms == 0 {
        return Err(LaguerreError::InvalidOrder);
    }
    let o = s.sqrt();
    let mut t = DMatrix::<f64>::zeros(k_terms, k_terms);
    for i in 0..k_terms {
        t[(i, i)] = o;
        for j in 0..i {
            t[(i, j)] = (1.0 - s) * (-o).powi((i - j - 1) as i32);
        }
    }
    Ok(t)
}

/// Discrete Laguerre basis truncated to `K` terms.
#[derive(Debug, Clone)]
pub struct LaguerreBasis {
    k_terms: usize,
    s: f64,
    o: f64,
    shift: DMatrix<f64>,
}

impl LaguerreBasis {
    pub fn new(k_terms: usize, s: f64) -> Result<Self, LaguerreError> {
        let shift = build_shift_matrix(k_terms, s)?;
        Ok(LaguerreBasis {
            k_terms,
            s,
            o: s.sqrt(),
            shift,
        })
    }

    pub fn k_terms(&self) -> usize {
        self.k_terms
    }

    pub fn discount(&self) -> f64 {
        self.s
    }

    /// `o = s^{1/2}`, the decay rate of the basis.
    pub fn decay(&self) -> f64 {
        self.o
    }

    pub fn shift_matrix(&self) -> &DMatrix<f64> {
        &self.shift
    }

    /// Stacked evaluations `[L_0(k), ..., L_{K-1}(k)]`.
    pub fn basis_vector(&self, k: usize) -> DVector<f64> {
        let mut v = DVector::<f64>::zeros(self.k_terms);
        let kf = k as f64;
        let l0 = (1.0 - self.s).sqrt() * self.o.powi(k as i32);
        v[0] = l0;
        if self.k_terms == 1 {
            return v;
        }
        v[1] = -(self.s + (self.s - 1.0) * kf) / self.o * l0;
        for m in 1..self.k_terms - 1 {
            let mf = m as f64;
            let a = (mf + (mf + 1.0) * self.s + (self.s - 1.0) * kf) / (mf + 1.0);
            let b = -mf * self.s / (mf + 1.0);
            v[m + 1] = -a / self.o * v[m] + b / self.s * v[m - 1];
        }
        v
    }

    /// `T^{-d}` computed by `d` lower-triangular solves against the identity.
    pub fn inverse_shift_power(&self, d: usize) -> DMatrix<f64> {
        let mut x = DMatrix::<f64>::identity(self.k_terms, self.k_terms);
        for _ in 0..d {
            x = self
                .shift
                .clone()
                .solve_lower_triangular(&x)
                .expect("shift matrix has positive diagonal");
        }
        x
    }

    /// `T^d` for a non-negative power.
    pub fn shift_power(&self, d: usize) -> DMatrix<f64> {
        let mut x = DMatrix::<f64>::identity(self.k_terms, self.k_terms);
        for _ in 0..d {
            x = &self.shift * x;
        }
        x
    }
}

/// Closed-form evaluation, the independent check for the recurrence.
pub mod reference {
    /// `L_i(k) = (-1)^i beta_i o^k alpha_i(k)` with
    /// `alpha_i(k) = s^i sum_j ((s-1)/s)^j C(i,j) C(k,j)` and
    /// `beta_i = ((1-s)/s^i)^{1/2}`. Binomial sums cancel badly for large
    /// arguments, which is why the production path uses the recurrence.
    pub fn eval_closed_form(i: usize, k: usize, s: f64) -> f64 {
        let o = s.sqrt();
        let ratio = (s - 1.0) / s;
        let mut alpha = 0.0;
        for j in 0..=i.min(k) {
            alpha += ratio.powi(j as i32) * binomial(i, j) * binomial(k, j);
        }
        alpha *= s.powi(i as i32);
        let beta = ((1.0 - s) / s.powi(i as i32)).sqrt();
        let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
        sign * beta * o.powi(k as i32) * alpha
    }

    fn binomial(n: usize, k: usize) -> f64 {
        if k > n {
            return 0.0;
        }
        let k = k.min(n - k);
        let mut acc = 1.0;
        for j in 0..k {
            acc = acc * (n - j) as f64 / (j + 1) as f64;
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn zeroth_function_is_geometric() {
        for (k, s) in [(0usize, 0.25), (3, 0.5), (10, 0.81)] {
            let expect = (1.0 - s as f64).sqrt() * (s as f64).sqrt().powi(k as i32);
            assert_abs_diff_eq!(laguerre_eval(0, k, s).unwrap(), expect, epsilon = 1e-14);
        }
    }

    #[test]
    fn first_function_at_zero() {
        // L_1(0) = -beta_1 s = -sqrt((1-s)/s) s, for s = 0.25 that is -sqrt(3)/4
        let got = laguerre_eval(1, 0, 0.25).unwrap();
        assert_abs_diff_eq!(got, -(3.0f64).sqrt() / 4.0, epsilon = 1e-14);
        assert_abs_diff_eq!(
            reference::eval_closed_form(1, 0, 0.25),
            got,
            epsilon = 1e-14
        );
    }

    #[test]
    fn recurrence_matches_closed_form() {
        let s = 0.5;
        let mut worst: f64 = 0.0;
        for i in 0..=10 {
            for k in 0..=50 {
                let a = laguerre_eval(i, k, s).unwrap();
                let b = reference::eval_closed_form(i, k, s);
                worst = worst.max((a - b).abs());
            }
        }
        assert!(worst <= 1e-9, "recurrence vs closed form deviates {worst}");
    }

    #[test]
    fn discount_range_checked() {
        assert!(laguerre_eval(0, 0, 0.0).is_err());
        assert!(laguerre_eval(0, 0, 1.0).is_err());
        assert!(laguerre_eval(0, 0, -0.5).is_err());
        assert!(LaguerreBasis::new(0, 0.5).is_err());
    }

    #[test]
    fn shift_matrix_smallest_orders() {
        let t = build_shift_matrix(1, 0.25).unwrap();
        assert_abs_diff_eq!(t[(0, 0)], 0.5, epsilon = 1e-15);

        let t = build_shift_matrix(3, 0.25).unwrap();
        let expect = [[0.5, 0.0, 0.0], [0.75, 0.5, 0.0], [-0.375, 0.75, 0.5]];
        for i in 0..3 {
            for j in 0..3 {
                assert_abs_diff_eq!(t[(i, j)], expect[i][j], epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn basis_vector_at_zero() {
        let b = LaguerreBasis::new(2, 0.25).unwrap();
        let v = b.basis_vector(0);
        assert_abs_diff_eq!(v[0], 0.75f64.sqrt(), epsilon = 1e-14);
        assert_abs_diff_eq!(v[1], -(3.0f64).sqrt() / 4.0, epsilon = 1e-14);
    }

    #[test]
    fn shift_advances_basis_vector() {
        let b = LaguerreBasis::new(6, 0.5).unwrap();
        let t = b.shift_matrix();
        for k in 0..=20 {
            let lhs = t * b.basis_vector(k);
            let rhs = b.basis_vector(k + 1);
            assert!((lhs - rhs).amax() <= 1e-9);
        }
        // L(k+2) = T^2 L(k)
        let t2 = b.shift_power(2);
        for k in 0..=10 {
            assert!((&t2 * b.basis_vector(k) - b.basis_vector(k + 2)).amax() <= 1e-9);
        }
    }

    #[test]
    fn shift_property_multi_step() {
        let b = LaguerreBasis::new(8, 0.81).unwrap();
        for step in 1..=8usize {
            let tp = b.shift_power(step);
            for k in (0..=32).step_by(8) {
                assert!((&tp * b.basis_vector(k) - b.basis_vector(k + step)).amax() <= 1e-8);
            }
        }
    }

    #[test]
    fn inverse_shift_powers() {
        let b = LaguerreBasis::new(8, 0.5).unwrap();
        let id = DMatrix::<f64>::identity(8, 8);
        let tinv = b.inverse_shift_power(1);
        assert!((b.shift_matrix() * &tinv - &id).amax() <= 1e-12);
        for i in 0..8 {
            assert_abs_diff_eq!(tinv[(i, i)], 1.0 / b.decay(), epsilon = 1e-12);
        }
        let tm4 = b.inverse_shift_power(4);
        let t4 = b.shift_power(4);
        assert!((tm4 * t4 - id).amax() <= 1e-10);
    }

    #[test]
    fn truncated_orthonormality() {
        for &s in &[0.25, 0.5, 0.81] {
            let k_terms = 12;
            let b = LaguerreBasis::new(k_terms, s).unwrap();
            // accumulate until the basis vector norm has fallen well below the
            // target tolerance; the polynomial factors push the mass of the
            // high-index functions far beyond the bare geometric-tail estimate
            let mut gram = DMatrix::<f64>::zeros(k_terms, k_terms);
            let mut peak = 0.0f64;
            let mut k = 0usize;
            loop {
                let v = b.basis_vector(k);
                let norm = v.norm();
                peak = peak.max(norm);
                gram += &v * v.transpose();
                if k > 100 && norm <= 1e-9 * (1.0 + peak) {
                    break;
                }
                assert!(k < 20_000, "orthonormality horizon failed to converge");
                k += 1;
            }
            for m in 0..k_terms {
                for n in 0..k_terms {
                    let expect = if m == n { 1.0 } else { 0.0 };
                    assert!(
                        (gram[(m, n)] - expect).abs() <= 1e-6,
                        "s={s} ({m},{n}): {}",
                        gram[(m, n)]
                    );
                }
            }
        }
    }

    #[test]
    fn basis_norm_decays() {
        let b = LaguerreBasis::new(6, 0.5).unwrap();
        let norms: Vec<f64> = (0..400).map(|k| b.basis_vector(k).norm()).collect();
        let last_rise = norms
            .windows(2)
            .rposition(|w| w[1] > w[0])
            .map_or(0, |p| p + 1);
        assert!(last_rise < 200, "norm still rising at k = {last_rise}");
        assert!(norms[399] < 1e-10);
    }
}
