use crate::{Error, Trajectory};

/// Output deviation between a full and a reduced trajectory.
#[derive(Debug, Clone)]
pub struct ErrorMetrics {
    /// `max_i |y_i(t) - yhat_i(t)|` per step.
    pub per_step_abs: Vec<f64>,
    /// `sqrt(sum_t |y - yhat|^2) / sqrt(sum_t |y|^2)`, with `0/0 = 0`.
    pub rel_l2: f64,
    pub max_abs: f64,
}

pub fn error_metrics(full: &Trajectory, reduced: &Trajectory) -> Result<ErrorMetrics, Error> {
    if full.horizon() != reduced.horizon() {
        return Err(Error::Argument(format!(
            "trajectory horizons differ: {} vs {}",
            full.horizon(),
            reduced.horizon()
        )));
    }
    if full.output_dim() != reduced.output_dim() {
        return Err(Error::Dimension(format!(
            "output dimensions differ: {} vs {}",
            full.output_dim(),
            reduced.output_dim()
        )));
    }
    let mut per_step_abs = Vec::with_capacity(full.outputs().len());
    let mut err_sq = 0.0;
    let mut ref_sq = 0.0;
    for (y, yh) in full.outputs().iter().zip(reduced.outputs()) {
        let diff = y - yh;
        per_step_abs.push(diff.amax());
        err_sq += diff.norm_squared();
        ref_sq += y.norm_squared();
    }
    let rel_l2 = if ref_sq == 0.0 {
        if err_sq == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (err_sq / ref_sq).sqrt()
    };
    let max_abs = per_step_abs.iter().cloned().fold(0.0, f64::max);
    Ok(ErrorMetrics {
        per_step_abs,
        rel_l2,
        max_abs,
    })
}
