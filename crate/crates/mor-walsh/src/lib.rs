//! Walsh-expansion model order reduction.
//!
//! The state window `x(1..N)` of a delay system is represented by a
//! coefficient matrix `X` with `x(i+1) ~ X W(i)`. Summing the recursion over
//! the window and applying the shift/summation identities of the basis turns
//! the dynamics into one linear matrix equation for `X`; the projection basis
//! spans the columns of `X` together with the initial vectors. Reduced models
//! built this way match the operational Walsh coefficients of the full
//! output.

mod projection;
mod solve;

pub use projection::{
    build_projection, lemma_residuals, reduce_lifted_walsh, reduce_walsh,
    verify_coefficient_matching, LemmaResiduals, WalshReduction,
};
pub use solve::{
    input_walsh_coefficients, output_walsh_coefficients, solve_walsh_coefficients, SolveRoute,
    WalshMorProblem, WalshSolution,
};
