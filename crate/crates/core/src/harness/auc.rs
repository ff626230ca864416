use crate::error::{Error, Result};

/// Trapezoidal area under `(step, value)` points divided by the step span,
/// so a constant curve `c` yields `c`. Points must have increasing steps.
pub fn compute_auc(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::arg("AUC needs at least two evaluation points"));
    }
    let mut area = 0.0;
    for w in points.windows(2) {
        let (x0, y0) = w[0];
        let (x1, y1) = w[1];
        if !(x1 > x0) {
            return Err(Error::arg(format!("steps must increase ({x0} then {x1})")));
        }
        area += 0.5 * (y0 + y1) * (x1 - x0);
    }
    Ok(area / (points[points.len() - 1].0 - points[0].0))
}

/// AUC of one run's rows, over its own step span.
pub fn run_auc(rows: &[&super::RunRow]) -> Result<f64> {
    let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.total_step as f64, r.mean_return)).collect();
    compute_auc(&pts)
}
