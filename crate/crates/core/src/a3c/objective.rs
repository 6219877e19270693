use super::{compute_returns, A3cError, Result, Rollout};
use crate::net::{Network, OutputGrads};
use crate::numcore::Real;

/// Coefficients of the per-rollout objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub gamma: f64,
    pub entropy_beta: f64,
    pub value_coef: f64,
    /// Global gradient-norm bound; `None` disables clipping.
    pub clip_norm: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GradStats {
    pub objective: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    /// Gradient norm before clipping.
    pub grad_norm: f64,
}

fn lit<T: Real>(v: f64) -> T {
    T::lit(v)
}

fn as_f64<T: Real>(v: T) -> f64 {
    v.to_f64().unwrap_or(f64::NAN)
}

/// Advantages `R_i - V(s_i)` under the given network.
pub fn advantages<T: Real>(net: &Network<T>, rollout: &Rollout<T>, gamma: f64) -> Result<Vec<f64>> {
    let returns = compute_returns(&rollout.rewards(), rollout.terminal, rollout.bootstrap_value, gamma);
    rollout
        .transitions
        .iter()
        .zip(&returns)
        .map(|(t, r)| Ok(r - as_f64(net.forward(&t.observation)?.0.value)))
        .collect()
}

/// The scalar whose gradient [`accumulate_gradients`] computes:
///
/// `sum_i -log pi(a_i|s_i) * A_i + value_coef * (R_i - V(s_i))^2 - beta * H_i`
///
/// `fixed_advantages` holds the constant `A_i` of the policy term; pass the
/// advantages at the point of linearization when differencing this function.
pub fn rollout_objective<T: Real>(
    net: &Network<T>,
    rollout: &Rollout<T>,
    loss: &LossConfig,
    fixed_advantages: &[f64],
) -> Result<f64> {
    let returns = compute_returns(
        &rollout.rewards(),
        rollout.terminal,
        rollout.bootstrap_value,
        loss.gamma,
    );
    let mut total = 0.0;
    for ((t, &ret), &adv) in rollout.transitions.iter().zip(&returns).zip(fixed_advantages) {
        let (out, _) = net.forward(&t.observation)?;
        let lp = as_f64(out.log_prob(&t.action)?);
        let v = as_f64(out.value);
        total += -lp * adv + loss.value_coef * (ret - v).powi(2) - loss.entropy_beta * as_f64(out.entropy());
    }
    Ok(total)
}

/// Resets the network's gradient buffers and fills them with the gradient of
/// [`rollout_objective`] (advantages held constant in the policy term), then
/// clips the global norm.
pub fn accumulate_gradients<T: Real>(
    net: &mut Network<T>,
    rollout: &Rollout<T>,
    loss: &LossConfig,
) -> Result<GradStats> {
    net.params.zero_grad();
    let returns = compute_returns(
        &rollout.rewards(),
        rollout.terminal,
        rollout.bootstrap_value,
        loss.gamma,
    );
    let mut stats = GradStats::default();
    for (t, &ret) in rollout.transitions.iter().zip(&returns).rev() {
        let owned;
        let (out, cache) = match &t.cache {
            Some(c) => (&c.0, &c.1),
            None => {
                owned = net.forward(&t.observation)?;
                (&owned.0, &owned.1)
            }
        };
        let v = as_f64(out.value);
        let adv = ret - v;
        let (d_lp_fn, d_lp_sp) = out.log_prob_grad(&t.action)?;
        let mut grads = OutputGrads {
            value: lit(-2.0 * loss.value_coef * adv),
            fn_logits: d_lp_fn.iter().map(|&g| g * lit(-adv)).collect(),
            spatial_logits: d_lp_sp.iter().map(|&g| g * lit(-adv)).collect(),
        };
        let entropy = as_f64(out.entropy());
        if loss.entropy_beta != 0.0 {
            let (h_fn, h_sp) = out.entropy_grad();
            let beta: T = lit(loss.entropy_beta);
            grads
                .fn_logits
                .iter_mut()
                .zip(&h_fn)
                .for_each(|(g, &h)| *g = *g - beta * h);
            grads
                .spatial_logits
                .iter_mut()
                .zip(&h_sp)
                .for_each(|(g, &h)| *g = *g - beta * h);
        }
        net.backward(cache, &grads);

        let lp = as_f64(out.log_prob(&t.action)?);
        stats.policy_loss += -lp * adv;
        stats.value_loss += loss.value_coef * adv * adv;
        stats.entropy += entropy;
    }
    stats.objective = stats.policy_loss + stats.value_loss - loss.entropy_beta * stats.entropy;
    if net.params.check_finite().is_err() || !stats.objective.is_finite() {
        return Err(A3cError::NonFiniteGradient(format!(
            "rollout of {} steps, rewards {:?}, values {:?}, bootstrap {}",
            rollout.len(),
            rollout.rewards(),
            rollout.transitions.iter().map(|t| t.value).collect::<Vec<_>>(),
            rollout.bootstrap_value
        )));
    }
    stats.grad_norm = match loss.clip_norm {
        Some(c) => as_f64(net.params.clip_grad_norm(lit(c))),
        None => as_f64(net.params.grad_norm()),
    };
    Ok(stats)
}
