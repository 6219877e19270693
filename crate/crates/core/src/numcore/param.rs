use super::{NumError, Real, Result, Tensor};

/// A named tensor. The name is the tensor's identity in checkpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter<T = f32> {
    pub name: String,
    pub tensor: Tensor<T>,
}

/// Ordered set of uniquely named parameters.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamSet<T = f32> {
    params: Vec<Parameter<T>>,
}

impl<T: Real> ParamSet<T> {
    pub fn new() -> Self {
        Self { params: Vec::new() }
    }

    /// Appends a parameter and returns its index. Panics on a duplicate name,
    /// which can only come from a bug in the caller's layer table.
    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor<T>) -> usize {
        let name = name.into();
        assert!(self.index_of(&name).is_none(), "duplicate parameter name {name}");
        self.params.push(Parameter { name, tensor });
        self.params.len() - 1
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    pub fn get(&self, name: &str) -> Result<&Parameter<T>> {
        self.params
            .iter()
            .find(|p| p.name == name)
            .ok_or_else(|| NumError::UnknownParameter(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Parameter<T>> {
        self.params
            .iter_mut()
            .find(|p| p.name == name)
            .ok_or_else(|| NumError::UnknownParameter(name.to_string()))
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Parameter<T>> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> std::slice::IterMut<'_, Parameter<T>> {
        self.params.iter_mut()
    }

    /// Mutable access to two distinct tensors, `a < b`.
    pub fn pair_mut(&mut self, a: usize, b: usize) -> (&mut Tensor<T>, &mut Tensor<T>) {
        assert!(a < b, "pair_mut needs a < b");
        let (lo, hi) = self.params.split_at_mut(b);
        (&mut lo[a].tensor, &mut hi[0].tensor)
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.tensor.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        self.params.iter_mut().for_each(|p| p.tensor.zero_grad());
    }

    pub fn grad_norm(&self) -> T {
        self.params
            .iter()
            .flat_map(|p| p.tensor.grad().iter())
            .map(|&g| g * g)
            .sum::<T>()
            .sqrt()
    }

    /// Rescales all gradients so their global L2 norm is at most `max_norm`.
    /// Returns the norm before clipping.
    pub fn clip_grad_norm(&mut self, max_norm: T) -> T {
        let norm = self.grad_norm();
        if norm > max_norm && norm > T::zero() {
            let scale = max_norm / norm;
            for p in &mut self.params {
                p.tensor.grad_mut().iter_mut().for_each(|g| *g = *g * scale);
            }
        }
        norm
    }

    pub fn check_finite(&self) -> Result<()> {
        for p in &self.params {
            p.tensor.check_finite(&p.name)?;
        }
        Ok(())
    }

    /// Overwrites values (not gradients) from another set with identical layout.
    pub fn copy_values_from(&mut self, other: &ParamSet<T>) -> Result<()> {
        if self.params.len() != other.params.len() {
            return Err(NumError::ShapeMismatch {
                op: "copy_values_from",
                detail: format!("{} vs {} parameters", self.params.len(), other.params.len()),
            });
        }
        for (dst, src) in self.params.iter_mut().zip(&other.params) {
            if dst.name != src.name || dst.tensor.shape() != src.tensor.shape() {
                return Err(NumError::ShapeMismatch {
                    op: "copy_values_from",
                    detail: format!(
                        "{} {:?} vs {} {:?}",
                        dst.name,
                        dst.tensor.shape(),
                        src.name,
                        src.tensor.shape()
                    ),
                });
            }
            dst.tensor.data_mut().copy_from_slice(src.tensor.data());
        }
        Ok(())
    }

    pub fn cast<U: Real>(&self) -> ParamSet<U> {
        ParamSet {
            params: self
                .params
                .iter()
                .map(|p| Parameter {
                    name: p.name.clone(),
                    tensor: p.tensor.cast(),
                })
                .collect(),
        }
    }
}

impl<T> std::ops::Index<usize> for ParamSet<T> {
    type Output = Parameter<T>;
    fn index(&self, i: usize) -> &Parameter<T> {
        &self.params[i]
    }
}

impl<T> std::ops::IndexMut<usize> for ParamSet<T> {
    fn index_mut(&mut self, i: usize) -> &mut Parameter<T> {
        &mut self.params[i]
    }
}
