use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Mutex, RwLock};

use crate::numcore::{ParamSet, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    /// RMSProp with squared-gradient statistics shared by all workers.
    RmsProp,
    Sgd,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    /// Decay of the squared-gradient moving average.
    pub alpha: f64,
    pub eps: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            kind: OptimizerKind::RmsProp,
            learning_rate: 5e-4,
            alpha: 0.99,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LockMode {
    /// Each tensor is read and updated atomically; no global lock.
    PerTensor,
    /// Every snapshot and update holds one global lock.
    Strict,
}

#[derive(Debug)]
struct Slot {
    values: Vec<f32>,
    sq_avg: Vec<f32>,
}

/// The global parameters, optimizer statistics and step counter `T`.
#[derive(Debug)]
pub struct SharedStore {
    names: Vec<String>,
    shapes: Vec<Vec<usize>>,
    slots: Vec<RwLock<Slot>>,
    strict: Option<Mutex<()>>,
    optimizer: OptimizerConfig,
    global_step: AtomicU64,
}

impl SharedStore {
    pub fn new(params: &ParamSet<f32>, optimizer: OptimizerConfig, lock_mode: LockMode) -> Self {
        let stats = params.iter().map(|p| vec![0.0; p.tensor.len()]).collect();
        Self::with_statistics(params, stats, optimizer, lock_mode)
    }

    /// Resumes from saved optimizer statistics (one vector per tensor).
    pub fn with_statistics(
        params: &ParamSet<f32>,
        statistics: Vec<Vec<f32>>,
        optimizer: OptimizerConfig,
        lock_mode: LockMode,
    ) -> Self {
        assert_eq!(statistics.len(), params.len(), "one statistics vector per tensor");
        Self {
            names: params.iter().map(|p| p.name.clone()).collect(),
            shapes: params.iter().map(|p| p.tensor.shape().to_vec()).collect(),
            slots: params
                .iter()
                .zip(statistics)
                .map(|(p, sq_avg)| {
                    assert_eq!(sq_avg.len(), p.tensor.len(), "statistics shape for {}", p.name);
                    RwLock::new(Slot {
                        values: p.tensor.data().to_vec(),
                        sq_avg,
                    })
                })
                .collect(),
            strict: (lock_mode == LockMode::Strict).then(|| Mutex::new(())),
            optimizer,
            global_step: AtomicU64::new(0),
        }
    }

    pub fn optimizer(&self) -> OptimizerConfig {
        self.optimizer
    }

    pub fn global_step(&self) -> u64 {
        self.global_step.load(Ordering::SeqCst)
    }

    pub fn set_global_step(&self, t: u64) {
        self.global_step.store(t, Ordering::SeqCst);
    }

    /// Copies the current global values into `dst` (same layout), one tensor
    /// at a time. Each tensor copy is untorn.
    pub fn snapshot_into(&self, dst: &mut ParamSet<f32>) {
        let _guard = self
            .strict
            .as_ref()
            .map(|m| m.lock().unwrap_or_else(|e| e.into_inner()));
        for (i, slot) in self.slots.iter().enumerate() {
            let slot = slot.read().unwrap_or_else(|e| e.into_inner());
            dst[i].tensor.data_mut().copy_from_slice(&slot.values);
        }
    }

    pub fn snapshot(&self) -> ParamSet<f32> {
        let mut out = ParamSet::new();
        for (name, shape) in self.names.iter().zip(&self.shapes) {
            out.push(name.clone(), Tensor::zeros(shape));
        }
        self.snapshot_into(&mut out);
        out
    }

    /// Squared-gradient moving averages, one tensor per parameter.
    pub fn statistics(&self) -> Vec<Vec<f32>> {
        let _guard = self
            .strict
            .as_ref()
            .map(|m| m.lock().unwrap_or_else(|e| e.into_inner()));
        self.slots
            .iter()
            .map(|s| s.read().unwrap_or_else(|e| e.into_inner()).sq_avg.clone())
            .collect()
    }

    /// Applies the gradients held in `grads` and advances `T` by `steps`.
    /// Returns the new `T`.
    pub fn apply_update(&self, grads: &ParamSet<f32>, steps: u64) -> u64 {
        let _guard = self
            .strict
            .as_ref()
            .map(|m| m.lock().unwrap_or_else(|e| e.into_inner()));
        let lr = self.optimizer.learning_rate as f32;
        let alpha = self.optimizer.alpha as f32;
        let eps = self.optimizer.eps as f32;
        for (i, slot) in self.slots.iter().enumerate() {
            let g = grads[i].tensor.grad();
            let mut slot = slot.write().unwrap_or_else(|e| e.into_inner());
            let Slot { values, sq_avg } = &mut *slot;
            match self.optimizer.kind {
                OptimizerKind::RmsProp => {
                    for ((v, s), &g) in values.iter_mut().zip(sq_avg.iter_mut()).zip(g) {
                        *s = alpha * *s + (1.0 - alpha) * g * g;
                        *v -= lr * g / (*s + eps).sqrt();
                    }
                }
                OptimizerKind::Sgd => {
                    for (v, &g) in values.iter_mut().zip(g) {
                        *v -= lr * g;
                    }
                }
            }
        }
        self.global_step.fetch_add(steps, Ordering::SeqCst) + steps
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_tensor(values: &[f32]) -> ParamSet<f32> {
        let mut ps = ParamSet::new();
        ps.push("w", Tensor::from_vec(&[values.len()], values.to_vec()).unwrap());
        ps
    }

    #[test]
    fn zero_gradient_leaves_values_but_advances_counter() {
        let ps = one_tensor(&[1.0, -2.0, 3.0]);
        let store = SharedStore::new(&ps, OptimizerConfig::default(), LockMode::PerTensor);
        assert_eq!(store.apply_update(&ps, 7), 7);
        assert_eq!(store.snapshot(), ps);
        assert_eq!(store.global_step(), 7);
    }

    #[test]
    fn rmsprop_matches_hand_stepped_oracle() {
        let init = [0.5f64, -1.0, 2.0];
        let grads = [[0.1f64, -2.0, 0.0], [0.3, 1.0, -4.0], [-0.2, 0.5, 1e-3]];
        let (lr, alpha, eps) = (5e-4, 0.99, 1e-8);
        let mut ps = one_tensor(&init.map(|v| v as f32));
        let store = SharedStore::new(
            &ps,
            OptimizerConfig {
                learning_rate: lr,
                ..Default::default()
            },
            LockMode::Strict,
        );
        let (mut want, mut sq) = (init, [0.0f64; 3]);
        for g in &grads {
            for j in 0..3 {
                sq[j] = alpha * sq[j] + (1.0 - alpha) * g[j] * g[j];
                want[j] -= lr * g[j] / (sq[j] + eps).sqrt();
            }
            ps[0].tensor.grad_mut().copy_from_slice(&g.map(|v| v as f32));
            store.apply_update(&ps, 1);
        }
        let got = store.snapshot();
        for j in 0..3 {
            let g = got[0].tensor.data()[j] as f64;
            assert!((g - want[j]).abs() < 1e-6, "scalar {j}: {g} vs {}", want[j]);
            assert!((store.statistics()[0][j] as f64 - sq[j]).abs() <= 1e-6 * sq[j].max(1e-6));
        }
        assert_eq!(store.global_step(), 3);
    }

    #[test]
    fn rmsprop_step_is_bounded() {
        let mut ps = one_tensor(&[0.0; 4]);
        ps[0].tensor.grad_mut().copy_from_slice(&[1e6, -1e-6, 40.0, 0.5]);
        let cfg = OptimizerConfig::default();
        let store = SharedStore::new(&ps, cfg, LockMode::PerTensor);
        store.apply_update(&ps, 1);
        let bound = cfg.learning_rate / cfg.eps.sqrt();
        for &v in store.snapshot()[0].tensor.data() {
            assert!((v as f64).abs() <= bound);
        }
    }

    #[test]
    fn sgd_is_plain_descent() {
        let mut ps = one_tensor(&[1.0, 1.0]);
        ps[0].tensor.grad_mut().copy_from_slice(&[2.0, -4.0]);
        let cfg = OptimizerConfig {
            kind: OptimizerKind::Sgd,
            learning_rate: 0.25,
            ..Default::default()
        };
        let store = SharedStore::new(&ps, cfg, LockMode::PerTensor);
        store.apply_update(&ps, 1);
        assert_eq!(store.snapshot()[0].tensor.data(), &[0.5, 2.0]);
    }
}
