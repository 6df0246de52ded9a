use super::OptimizerError;

fn check_feasible(p: &[f64], lower: &[f64], upper: &[f64]) -> Result<(), OptimizerError> {
    for (i, ((&v, &l), &u)) in p.iter().zip(lower).zip(upper).enumerate() {
        if !(v >= l && v <= u) {
            return Err(OptimizerError::InfeasiblePoint {
                index: i,
                value: v,
                lower: l,
                upper: u,
            });
        }
    }
    Ok(())
}

/// Zeroes the components of `dp` that push an active bound outward.
pub fn project_direction_bounds(
    dp: &[f64],
    p: &[f64],
    lower: &[f64],
    upper: &[f64],
) -> Result<Vec<f64>, OptimizerError> {
    check_feasible(p, lower, upper)?;
    Ok(dp
        .iter()
        .zip(p)
        .zip(lower.iter().zip(upper))
        .map(|((&d, &v), (&l, &u))| {
            if (v >= u && d > 0.0) || (v <= l && d < 0.0) {
                0.0
            } else {
                d
            }
        })
        .collect())
}

pub fn clamp_to_bounds(p: &mut [f64], lower: &[f64], upper: &[f64]) {
    for ((v, &l), &u) in p.iter_mut().zip(lower).zip(upper) {
        *v = v.clamp(l, u);
    }
}
