use super::{NetError, Result};
use crate::env::{Action, FunctionId};
use crate::numcore::Real;

/// Value estimate plus the two policy heads for one observation.
///
/// Probabilities are derived from log-probabilities computed as
/// `logit - logsumexp`, so masked function ids are exactly zero.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkOutputs<T = f32> {
    pub value: T,
    pub fn_logits: Vec<T>,
    pub fn_log_probs: Vec<T>,
    pub fn_probs: Vec<T>,
    pub spatial_logits: Vec<T>,
    pub spatial_log_probs: Vec<T>,
    pub spatial_probs: Vec<T>,
    pub available: Vec<bool>,
    pub resolution: usize,
}

fn entropy_of<T: Real>(probs: &[T], log_probs: &[T]) -> T {
    probs
        .iter()
        .zip(log_probs)
        .filter(|(&p, _)| p > T::zero())
        .map(|(&p, &lp)| -p * lp)
        .sum()
}

impl<T: Real> NetworkOutputs<T> {
    pub fn new(
        value: T,
        fn_logits: Vec<T>,
        fn_log_probs: Vec<T>,
        spatial_logits: Vec<T>,
        spatial_log_probs: Vec<T>,
        available: Vec<bool>,
        resolution: usize,
    ) -> Self {
        let fn_probs = fn_log_probs
            .iter()
            .zip(&available)
            .map(|(&lp, &a)| if a { lp.exp() } else { T::zero() })
            .collect();
        let spatial_probs = spatial_log_probs.iter().map(|&lp| lp.exp()).collect();
        Self {
            value,
            fn_logits,
            fn_log_probs,
            fn_probs,
            spatial_logits,
            spatial_log_probs,
            spatial_probs,
            available,
            resolution,
        }
    }

    fn is_spatial(&self, action: &Action) -> Result<bool> {
        FunctionId::from_index(action.function_id)
            .filter(|_| action.function_id < self.fn_probs.len())
            .map(|f| f.spec().spatial)
            .ok_or_else(|| NetError::ImpossibleAction(format!("function id {}", action.function_id)))
    }

    /// `log pi(a)`: function log-probability plus, for spatial functions, the
    /// pixel log-probability.
    pub fn log_prob(&self, action: &Action) -> Result<T> {
        let spatial = self.is_spatial(action)?;
        let f = action.function_id;
        if !self.available[f] || !self.fn_log_probs[f].is_finite() {
            return Err(NetError::ImpossibleAction(format!("function {f} is masked out")));
        }
        let mut lp = self.fn_log_probs[f];
        if spatial {
            let pixel = action
                .pixel(self.resolution)
                .filter(|&p| p < self.spatial_log_probs.len())
                .ok_or_else(|| NetError::ImpossibleAction("spatial function without a valid pixel".into()))?;
            lp = lp + self.spatial_log_probs[pixel];
        }
        Ok(lp)
    }

    pub fn fn_entropy(&self) -> T {
        entropy_of(&self.fn_probs, &self.fn_log_probs)
    }

    pub fn spatial_entropy(&self) -> T {
        entropy_of(&self.spatial_probs, &self.spatial_log_probs)
    }

    /// Function-head entropy plus spatial-head entropy.
    pub fn entropy(&self) -> T {
        self.fn_entropy() + self.spatial_entropy()
    }

    /// Gradient of `log pi(a)` with respect to the function and spatial logits.
    pub fn log_prob_grad(&self, action: &Action) -> Result<(Vec<T>, Vec<T>)> {
        self.log_prob(action)?;
        let d_fn = self
            .fn_probs
            .iter()
            .enumerate()
            .map(|(i, &p)| if i == action.function_id { T::one() - p } else { -p })
            .collect();
        let d_sp = match action.pixel(self.resolution) {
            Some(pix) if self.is_spatial(action)? => self
                .spatial_probs
                .iter()
                .enumerate()
                .map(|(i, &q)| if i == pix { T::one() - q } else { -q })
                .collect(),
            _ => vec![T::zero(); self.spatial_probs.len()],
        };
        Ok((d_fn, d_sp))
    }

    /// Gradient of [`entropy`](Self::entropy) with respect to both logit vectors.
    pub fn entropy_grad(&self) -> (Vec<T>, Vec<T>) {
        fn grad<T: Real>(probs: &[T], log_probs: &[T], h: T) -> Vec<T> {
            probs
                .iter()
                .zip(log_probs)
                .map(|(&p, &lp)| if p > T::zero() { -p * (lp + h) } else { T::zero() })
                .collect()
        }
        (
            grad(&self.fn_probs, &self.fn_log_probs, self.fn_entropy()),
            grad(&self.spatial_probs, &self.spatial_log_probs, self.spatial_entropy()),
        )
    }

    /// Mode of the function head (lowest id on ties) and, if spatial, the
    /// argmax pixel (lowest index on ties).
    pub fn greedy_action(&self) -> Action {
        let argmax = |v: &[T], ok: &dyn Fn(usize) -> bool| {
            let mut best: Option<usize> = None;
            for (i, &x) in v.iter().enumerate() {
                if ok(i) && best.is_none_or(|b| x > v[b]) {
                    best = Some(i);
                }
            }
            best.expect("at least one candidate")
        };
        let f = argmax(&self.fn_log_probs, &|i| self.available[i]);
        let spatial_arg = FunctionId::from_index(f).filter(|f| f.spec().spatial).map(|_| {
            let p = argmax(&self.spatial_logits, &|_| true);
            (p % self.resolution, p / self.resolution)
        });
        Action {
            function_id: f,
            spatial_arg,
        }
    }
}

pub fn log_prob<T: Real>(outputs: &NetworkOutputs<T>, action: &Action) -> Result<T> {
    outputs.log_prob(action)
}

pub fn policy_entropy<T: Real>(outputs: &NetworkOutputs<T>) -> T {
    outputs.entropy()
}
