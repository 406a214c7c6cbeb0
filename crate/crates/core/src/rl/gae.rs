use super::RlError;

/// Generalized advantage estimates and value targets.
///
/// `values[t]` and `next_values[t]` are target-critic values of the states
/// before and after step `t`. A `done` step contributes no bootstrap term
/// and stops the recursion, so advantages never cross episode boundaries.
/// The last entry is treated as a truncation point.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    next_values: &[f64],
    dones: &[bool],
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>), RlError> {
    let n = rewards.len();
    for (what, len) in [("values", values.len()), ("next_values", next_values.len()), ("dones", dones.len())] {
        if len != n {
            return Err(RlError::Length { what, expected: n, got: len });
        }
    }
    let mut advantages = vec![0.0; n];
    let mut running = 0.0;
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_values[t] * live - values[t];
        running = delta + gamma * lambda * live * running;
        advantages[t] = running;
    }
    let targets = advantages.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((advantages, targets))
}

/// Rescales to zero mean and unit variance; leaves constant input centered.
pub fn normalize(xs: &mut [f64]) {
    if xs.is_empty() {
        return;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    for x in xs.iter_mut() {
        *x = if std > 1e-12 { (*x - mean) / std } else { *x - mean };
    }
}
