/// n-step discounted returns, computed backwards from the bootstrap value:
/// `R_i = r_i + gamma * R_{i+1}`, seeded with `bootstrap` (or 0 when terminal).
pub fn compute_returns(rewards: &[f64], terminal: bool, bootstrap_value: f64, gamma: f64) -> Vec<f64> {
    let mut acc = if terminal { 0.0 } else { bootstrap_value };
    let mut out = vec![0.0; rewards.len()];
    for (r, o) in rewards.iter().zip(out.iter_mut()).rev() {
        acc = r + gamma * acc;
        *o = acc;
    }
    out
}
