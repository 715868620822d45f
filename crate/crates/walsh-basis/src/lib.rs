//! Discrete Walsh functions and their operational matrices.
//!
//! A basis of order `N = 2^l` consists of the `N` discrete Walsh functions
//! `W_i(k)` evaluated at the points `k = 0..N-1`. The crate builds the Walsh
//! matrix `W` (columns are the basis vectors), the backward shift matrix `R`
//! with `R W(k+1) = W(k)` (cyclic), and the summation matrix `S` with
//! `sum_{i<=k} W(i) = S W(k)`. Signals of length `N` can be projected onto
//! the basis and reconstructed exactly.

use nalgebra::{DMatrix, DVector};
use std::fmt;

/// Largest supported `log2` of the basis order. `N = 2^14` already means
/// three dense 16384 x 16384 matrices, which is the limit of what a desk
/// machine should be asked to hold.
pub const MAX_LOG2_ORDER: u32 = 14;

#[derive(Debug, Clone, PartialEq)]
pub enum WalshError {
    /// A function or point index was outside `[0, N)`.
    IndexOutOfRange { index: usize, order: usize },
    /// Requested order outside `1 <= l <= MAX_LOG2_ORDER`.
    OrderOutOfRange { log2_order: u32 },
    /// A projection was given the wrong number of samples.
    SampleCount { expected: usize, got: usize },
    /// Sample vectors (or a coefficient matrix) had inconsistent dimensions.
    DimensionMismatch { expected: usize, got: usize },
}

impl fmt::Display for WalshError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WalshError::IndexOutOfRange { index, order } => {
                write!(f, "index {index} out of range for Walsh order {order}")
            }
            WalshError::OrderOutOfRange { log2_order } => write!(
                f,
                "log2 order {log2_order} outside supported range 1..={MAX_LOG2_ORDER}"
            ),
            WalshError::SampleCount { expected, got } => {
                write!(f, "expected exactly {expected} samples, got {got}")
            }
            WalshError::DimensionMismatch { expected, got } => {
                write!(f, "dimension mismatch: expected {expected}, got {got}")
            }
        }
    }
}

impl std::error::Error for WalshError {}

/// Bit mask `G(i)` such that `W_i(k) = (-1)^popcount(G(i) & k)`.
///
/// The exponent of the defining formula is `sum_j g_j(i) k_j` with
/// `g_0(i) = i_{m-1}` and `g_j(i) = i_{m-j} + i_{m-1-j}`, where `i_b` are the
/// binary digits of `i` (LSB = `i_0`) and `k_j` the digits of `k`. Only the
/// parity of `g_j` matters.
fn sequency_mask(i: usize, l: u32) -> usize {
    let m = l as usize;
    let bit = |b: usize| -> usize {
        if b < m {
            (i >> b) & 1
        } else {
            0
        }
    };
    let mut mask = 0usize;
    for j in 0..m {
        let g = if j == 0 {
            bit(m - 1)
        } else {
            (bit(m - 1 - j) + bit(m - j)) & 1
        };
        mask |= g << j;
    }
    mask
}

/// Value of the `i`-th discrete Walsh function at point `k`, for order `2^l`.
pub fn walsh_function(i: usize, k: usize, l: u32) -> Result<i32, WalshError> {
    if l < 1 || l > MAX_LOG2_ORDER {
        return Err(WalshError::OrderOutOfRange { log2_order: l });
    }
    let n = 1usize << l;
    if i >= n {
        return Err(WalshError::IndexOutOfRange { index: i, order: n });
    }
    if k >= n {
        return Err(WalshError::IndexOutOfRange { index: k, order: n });
    }
    let parity = (sequency_mask(i, l) & k).count_ones() & 1;
    Ok(if parity == 0 { 1 } else { -1 })
}

/// Discrete Walsh basis of order `N = 2^l` with its operational matrices.
///
/// All matrices are immutable after construction; the basis can be shared
/// freely across threads.
#[derive(Debug, Clone)]
pub struct WalshBasis {
    log2_order: u32,
    order: usize,
    /// Walsh matrix with integer entries; column `k` is `W(k)`.
    walsh: DMatrix<i32>,
    /// Float copy of the Walsh matrix used in products.
    walsh_f: DMatrix<f64>,
    /// Backward shift matrix `R`.
    shift: DMatrix<f64>,
    /// Summation matrix `S`.
    summation: DMatrix<f64>,
}

impl WalshBasis {
    /// Builds the basis, the shift matrix `R = (1/N)[W(N-1) W(0) .. W(N-2)] W`
    /// and the summation matrix with entries
    /// `s_ij = (1/N) sum_k sum_{t<=k} W_i(t) W_j(k)`.
    pub fn new(l: u32) -> Result<Self, WalshError> {
        if l < 1 || l > MAX_LOG2_ORDER {
            return Err(WalshError::OrderOutOfRange { log2_order: l });
        }
        let n = 1usize << l;
        let mut walsh = DMatrix::<i32>::zeros(n, n);
        for i in 0..n {
            let mask = sequency_mask(i, l);
            for k in 0..n {
                let parity = (mask & k).count_ones() & 1;
                walsh[(i, k)] = if parity == 0 { 1 } else { -1 };
            }
        }
        let walsh_f = walsh.map(|v| v as f64);

        // columns of W rotated one step: [W(N-1) W(0) .. W(N-2)]
        let mut rotated = DMatrix::<f64>::zeros(n, n);
        rotated.column_mut(0).copy_from(&walsh_f.column(n - 1));
        for k in 1..n {
            rotated.column_mut(k).copy_from(&walsh_f.column(k - 1));
        }
        let shift = &rotated * &walsh_f / n as f64;

        // integer cumulative sums along k keep S exact up to the final /N
        let mut cum = DMatrix::<i64>::zeros(n, n);
        for i in 0..n {
            let mut acc = 0i64;
            for k in 0..n {
                acc += walsh[(i, k)] as i64;
                cum[(i, k)] = acc;
            }
        }
        let mut summation = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let mut acc = 0i64;
                for k in 0..n {
                    acc += cum[(i, k)] * walsh[(j, k)] as i64;
                }
                summation[(i, j)] = acc as f64 / n as f64;
            }
        }

        #[cfg(feature = "fault-injection")]
        let summation = {
            let mut s = summation;
            s[(0, 0)] += 1e-3;
            s
        };

        Ok(WalshBasis {
            log2_order: l,
            order: n,
            walsh,
            walsh_f,
            shift,
            summation,
        })
    }

    pub fn log2_order(&self) -> u32 {
        self.log2_order
    }

    /// Number of points and functions `N`.
    pub fn order(&self) -> usize {
        self.order
    }

    /// Integer Walsh matrix; column `k` holds `W(k)`.
    pub fn walsh_matrix(&self) -> &DMatrix<i32> {
        &self.walsh
    }

    /// Float copy of the Walsh matrix.
    pub fn walsh_matrix_f(&self) -> &DMatrix<f64> {
        &self.walsh_f
    }

    pub fn shift_matrix(&self) -> &DMatrix<f64> {
        &self.shift
    }

    pub fn summation_matrix(&self) -> &DMatrix<f64> {
        &self.summation
    }

    /// Basis vector `W(k)` as a float column.
    pub fn walsh_vector(&self, k: usize) -> Result<DVector<f64>, WalshError> {
        if k >= self.order {
            return Err(WalshError::IndexOutOfRange {
                index: k,
                order: self.order,
            });
        }
        Ok(DVector::from(self.walsh_f.column(k)))
    }

    /// `R^j` through the closed formula with the column rotation taken mod `N`.
    ///
    /// Exact counterpart of the floating matrix power; `R^N = I` holds by
    /// construction here.
    pub fn shift_power(&self, j: usize) -> DMatrix<f64> {
        let n = self.order;
        let j = j % n;
        let mut rotated = DMatrix::<f64>::zeros(n, n);
        for k in 0..n {
            // R^j W(k) = W((k - j) mod N), so column k of the rotated factor
            // is W((k - j) mod N)
            let src = (k + n - j) % n;
            rotated.column_mut(k).copy_from(&self.walsh_f.column(src));
        }
        &rotated * &self.walsh_f / n as f64
    }

    /// Walsh coefficients of a length-`N` sequence of vectors.
    ///
    /// Returns the `q x N` matrix `Z` with `z(k) = Z W(k)` exactly.
    pub fn project(&self, samples: &[DVector<f64>]) -> Result<DMatrix<f64>, WalshError> {
        if samples.len() != self.order {
            return Err(WalshError::SampleCount {
                expected: self.order,
                got: samples.len(),
            });
        }
        let q = samples[0].len();
        for s in samples {
            if s.len() != q {
                return Err(WalshError::DimensionMismatch {
                    expected: q,
                    got: s.len(),
                });
            }
        }
        let mut m = DMatrix::<f64>::zeros(q, self.order);
        for (k, s) in samples.iter().enumerate() {
            m.column_mut(k).copy_from(s);
        }
        Ok(m * &self.walsh_f / self.order as f64)
    }

    /// Evaluates a coefficient matrix at point `k`, i.e. `Z W(k)`.
    pub fn reconstruct(&self, coeffs: &DMatrix<f64>, k: usize) -> Result<DVector<f64>, WalshError> {
        if k >= self.order {
            return Err(WalshError::IndexOutOfRange {
                index: k,
                order: self.order,
            });
        }
        if coeffs.ncols() != self.order {
            return Err(WalshError::DimensionMismatch {
                expected: self.order,
                got: coeffs.ncols(),
            });
        }
        Ok(coeffs * self.walsh_vector(k)?)
    }
}
