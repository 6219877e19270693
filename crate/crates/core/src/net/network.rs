use super::{build, outputs::NetworkOutputs, ArchitectureSpec, NetError, Result, FLAT_UNITS, SHARED_UNITS};
use crate::env::Observation;
use crate::numcore::{
    conv2d_backward, conv2d_forward, fully_connected, fully_connected_backward, gemm, log_softmax, masked_log_softmax,
    relu_backward, relu_in_place, Conv2dCache, ParamSet, Real,
};

/// Index of a layer's weight; its bias sits at `weight + 1`.
type Layer = usize;

#[derive(Debug, Clone)]
struct Layout {
    screen: Vec<Layer>,
    minimap: Vec<Layer>,
    flat: Layer,
    spatial: Layer,
    shared: Layer,
    value_fc: Option<Layer>,
    value_out: Layer,
    fn_fc: Option<Layer>,
    fn_out: Layer,
}

impl Layout {
    fn resolve<T: Real>(arch: &ArchitectureSpec, params: &ParamSet<T>) -> Result<Self> {
        let expected = arch.layer_shapes();
        if expected.len() != params.len() {
            return Err(NetError::ParameterMismatch(format!(
                "{} expects {} tensors, parameter set has {}",
                arch.variant,
                expected.len(),
                params.len()
            )));
        }
        for (i, (name, shape)) in expected.iter().enumerate() {
            let p = &params[i];
            if &p.name != name || p.tensor.shape() != shape.as_slice() {
                return Err(NetError::ParameterMismatch(format!(
                    "tensor {i}: expected {name} {shape:?}, found {} {:?}",
                    p.name,
                    p.tensor.shape()
                )));
            }
        }
        let at = |name: &str| params.index_of(&format!("{name}.weight")).expect("validated above");
        let convs = |branch: &str| {
            (1..=arch.variant.branch_convs().len())
                .map(|i| at(&format!("{branch}.conv{i}")))
                .collect()
        };
        let head_fc = arch.variant.has_head_fc();
        Ok(Self {
            screen: convs("screen"),
            minimap: convs("minimap"),
            flat: at("flat.fc"),
            spatial: at("spatial.conv"),
            shared: at("shared.fc"),
            value_fc: head_fc.then(|| at("value.fc")),
            value_out: at("value.out"),
            fn_fc: head_fc.then(|| at("fn.fc")),
            fn_out: at("fn.out"),
        })
    }
}

#[derive(Debug, Clone)]
struct BranchCache<T> {
    convs: Vec<Conv2dCache<T>>,
    /// Post-ReLU output of every conv.
    outputs: Vec<Vec<T>>,
}

/// Activations retained by [`Network::forward`] for [`Network::backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    screen: BranchCache<T>,
    minimap: BranchCache<T>,
    flat_in: Vec<T>,
    flat_out: Vec<T>,
    pooled: Vec<T>,
    shared_out: Vec<T>,
    value_hidden: Option<Vec<T>>,
    fn_hidden: Option<Vec<T>>,
}

impl<T: Real> ForwardCache<T> {
    /// Which ReLU units are active, in a fixed order. Two forward passes with
    /// equal patterns lie on the same linear piece of every ReLU.
    pub fn relu_pattern(&self) -> Vec<bool> {
        let branches = [&self.screen, &self.minimap]
            .into_iter()
            .flat_map(|b| b.outputs.iter().flatten());
        branches
            .chain(&self.flat_out)
            .chain(&self.shared_out)
            .chain(self.value_hidden.iter().flatten())
            .chain(self.fn_hidden.iter().flatten())
            .map(|&v| v > T::zero())
            .collect()
    }
}

/// Loss gradients with respect to the three raw network outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputGrads<T> {
    pub value: T,
    pub fn_logits: Vec<T>,
    pub spatial_logits: Vec<T>,
}

impl<T: Real> OutputGrads<T> {
    pub fn zeros(num_functions: usize, pixels: usize) -> Self {
        Self {
            value: T::zero(),
            fn_logits: vec![T::zero(); num_functions],
            spatial_logits: vec![T::zero(); pixels],
        }
    }
}

/// An architecture together with its parameters.
#[derive(Debug, Clone)]
pub struct Network<T = f32> {
    arch: ArchitectureSpec,
    pub params: ParamSet<T>,
    layout: Layout,
}

fn to_real<T: Real>(values: &[f32]) -> Vec<T> {
    values.iter().map(|&v| T::lit(v as f64)).collect()
}

impl<T: Real> Network<T> {
    pub fn build(arch: ArchitectureSpec, init_seed: u64) -> Self {
        Self::new(arch, build(&arch, init_seed)).expect("built parameters match their architecture")
    }

    /// Wraps an existing parameter set, checking every name and shape.
    pub fn new(arch: ArchitectureSpec, params: ParamSet<T>) -> Result<Self> {
        let layout = Layout::resolve(&arch, &params)?;
        Ok(Self { arch, params, layout })
    }

    pub fn arch(&self) -> &ArchitectureSpec {
        &self.arch
    }

    pub fn cast<U: Real>(&self) -> Network<U> {
        Network {
            arch: self.arch,
            params: self.params.cast(),
            layout: self.layout.clone(),
        }
    }

    fn check_observation(&self, obs: &Observation) -> Result<()> {
        let o = &self.arch.obs_spec;
        let n = o.resolution;
        let problems = [
            (obs.screen.shape() != [o.screen_channels, n, n], "screen"),
            (obs.minimap.shape() != [o.minimap_channels, n, n], "minimap"),
            (obs.flat.shape() != [o.flat_dim], "flat"),
            (obs.available.len() != o.num_functions, "availability mask"),
        ];
        match problems.iter().find(|(bad, _)| *bad) {
            Some((_, what)) => Err(NetError::ObservationMismatch(format!("{what} shape"))),
            None => Ok(()),
        }
    }

    fn branch(&self, layers: &[Layer], input: Vec<T>) -> Result<BranchCache<T>> {
        let n = self.arch.obs_spec.resolution;
        let mut cache = BranchCache {
            convs: Vec::with_capacity(layers.len()),
            outputs: Vec::with_capacity(layers.len()),
        };
        let mut h = input;
        for &l in layers {
            let (mut out, conv) = conv2d_forward(&h, n, &self.params[l].tensor, &self.params[l + 1].tensor)?;
            relu_in_place(&mut out);
            cache.convs.push(conv);
            cache.outputs.push(out.clone());
            h = out;
        }
        Ok(cache)
    }

    fn dense(&self, layer: Layer, input: &[T]) -> Result<Vec<T>> {
        Ok(fully_connected(
            input,
            &self.params[layer].tensor,
            &self.params[layer + 1].tensor,
        )?)
    }

    /// Evaluates the value and both policy heads for one observation.
    pub fn forward(&self, obs: &Observation) -> Result<(NetworkOutputs<T>, ForwardCache<T>)> {
        self.check_observation(obs)?;
        let area = self.arch.obs_spec.pixels();
        let s = self.arch.branch_channels();

        let screen = self.branch(&self.layout.screen, to_real(obs.screen.data()))?;
        let minimap = self.branch(&self.layout.minimap, to_real(obs.minimap.data()))?;
        let flat_in: Vec<T> = to_real(obs.flat.data());
        let mut flat_out = self.dense(self.layout.flat, &flat_in)?;
        relu_in_place(&mut flat_out);

        let s_out = screen.outputs.last().expect("non-empty branch");
        let m_out = minimap.outputs.last().expect("non-empty branch");

        // 1x1 conv over [screen | minimap | broadcast flat]; the flat part is
        // the same at every pixel.
        let ws = self.params[self.layout.spatial].tensor.data();
        let bias = self.params[self.layout.spatial + 1].tensor.data()[0];
        let flat_term: T = ws[2 * s..].iter().zip(&flat_out).map(|(&w, &f)| w * f).sum();
        let mut spatial_logits = vec![bias + flat_term; area];
        gemm(1, s, area, &ws[..s], false, s_out, false, T::one(), &mut spatial_logits);
        gemm(
            1,
            s,
            area,
            &ws[s..2 * s],
            false,
            m_out,
            false,
            T::one(),
            &mut spatial_logits,
        );

        let inv_area = T::one() / T::lit(area as f64);
        let mut pooled = Vec::with_capacity(2 * s + FLAT_UNITS);
        for plane in s_out.chunks_exact(area).chain(m_out.chunks_exact(area)) {
            pooled.push(plane.iter().copied().sum::<T>() * inv_area);
        }
        pooled.extend_from_slice(&flat_out);
        let mut shared_out = self.dense(self.layout.shared, &pooled)?;
        relu_in_place(&mut shared_out);

        let head = |fc: Option<Layer>, out: Layer| -> Result<(Option<Vec<T>>, Vec<T>)> {
            match fc {
                Some(fc) => {
                    let mut hidden = self.dense(fc, &shared_out)?;
                    relu_in_place(&mut hidden);
                    let y = self.dense(out, &hidden)?;
                    Ok((Some(hidden), y))
                }
                None => Ok((None, self.dense(out, &shared_out)?)),
            }
        };
        let (value_hidden, value) = head(self.layout.value_fc, self.layout.value_out)?;
        let (fn_hidden, fn_logits) = head(self.layout.fn_fc, self.layout.fn_out)?;

        let fn_log_probs = masked_log_softmax(&fn_logits, &obs.available)?;
        let spatial_log_probs = log_softmax(&spatial_logits);
        let outputs = NetworkOutputs::new(
            value[0],
            fn_logits,
            fn_log_probs,
            spatial_logits,
            spatial_log_probs,
            obs.available.clone(),
            self.arch.obs_spec.resolution,
        );
        for (what, v) in [("value", &value[..]), ("spatial logits", &outputs.spatial_logits)] {
            if v.iter().any(|x| !x.is_finite()) {
                return Err(NetError::Num(crate::numcore::NumError::NonFinite(what.into())));
            }
        }
        let cache = ForwardCache {
            screen,
            minimap,
            flat_in,
            flat_out,
            pooled,
            shared_out,
            value_hidden,
            fn_hidden,
        };
        Ok((outputs, cache))
    }

    fn dense_backward(&mut self, layer: Layer, input: &[T], grad_out: &[T], want_input: bool) -> Option<Vec<T>> {
        let (w, b) = self.params.pair_mut(layer, layer + 1);
        fully_connected_backward(input, grad_out, w, b, want_input)
    }

    fn head_backward(
        &mut self,
        fc: Option<Layer>,
        out: Layer,
        hidden: Option<&Vec<T>>,
        shared_out: &[T],
        grad: &[T],
        d_shared: &mut [T],
    ) {
        let d = match (fc, hidden) {
            (Some(fc), Some(hidden)) => {
                let mut dh = self
                    .dense_backward(out, hidden, grad, true)
                    .expect("input grad requested");
                relu_backward(hidden, &mut dh);
                self.dense_backward(fc, shared_out, &dh, true)
            }
            _ => self.dense_backward(out, shared_out, grad, true),
        }
        .expect("input grad requested");
        for (a, b) in d_shared.iter_mut().zip(d) {
            *a = *a + b;
        }
    }

    fn branch_backward(&mut self, layers: &[Layer], cache: &BranchCache<T>, grad: Vec<T>) {
        let mut d = grad;
        for (i, &l) in layers.iter().enumerate().rev() {
            relu_backward(&cache.outputs[i], &mut d);
            let (w, b) = self.params.pair_mut(l, l + 1);
            match conv2d_backward(&cache.convs[i], &d, w, b, i > 0) {
                Some(next) => d = next,
                None => break,
            }
        }
    }

    /// Backpropagates output gradients, accumulating into the parameter
    /// gradient buffers.
    pub fn backward(&mut self, cache: &ForwardCache<T>, grads: &OutputGrads<T>) {
        let area = self.arch.obs_spec.pixels();
        let s = self.arch.branch_channels();
        let layout = self.layout.clone();

        let mut d_shared = vec![T::zero(); SHARED_UNITS];
        self.head_backward(
            layout.value_fc,
            layout.value_out,
            cache.value_hidden.as_ref(),
            &cache.shared_out,
            &[grads.value],
            &mut d_shared,
        );
        self.head_backward(
            layout.fn_fc,
            layout.fn_out,
            cache.fn_hidden.as_ref(),
            &cache.shared_out,
            &grads.fn_logits,
            &mut d_shared,
        );
        relu_backward(&cache.shared_out, &mut d_shared);
        let d_pooled = self
            .dense_backward(layout.shared, &cache.pooled, &d_shared, true)
            .expect("input grad requested");

        let dl = &grads.spatial_logits;
        let sum_dl: T = dl.iter().copied().sum();
        let s_out = cache.screen.outputs.last().expect("non-empty branch");
        let m_out = cache.minimap.outputs.last().expect("non-empty branch");
        let ws: Vec<T> = self.params[layout.spatial].tensor.data().to_vec();
        {
            let (w, b) = self.params.pair_mut(layout.spatial, layout.spatial + 1);
            b.grad_mut()[0] = b.grad()[0] + sum_dl;
            let wg = w.grad_mut();
            gemm(s, area, 1, s_out, false, dl, false, T::one(), &mut wg[..s]);
            gemm(s, area, 1, m_out, false, dl, false, T::one(), &mut wg[s..2 * s]);
            for (g, &f) in wg[2 * s..].iter_mut().zip(&cache.flat_out) {
                *g = *g + f * sum_dl;
            }
        }

        let inv_area = T::one() / T::lit(area as f64);
        let plane_grad = |w: &[T], pooled: &[T]| -> Vec<T> {
            let mut d = Vec::with_capacity(s * area);
            for c in 0..s {
                let base = pooled[c] * inv_area;
                d.extend(dl.iter().map(|&g| w[c] * g + base));
            }
            d
        };
        let d_screen = plane_grad(&ws[..s], &d_pooled[..s]);
        let d_minimap = plane_grad(&ws[s..2 * s], &d_pooled[s..2 * s]);
        let mut d_flat: Vec<T> = ws[2 * s..]
            .iter()
            .zip(&d_pooled[2 * s..])
            .map(|(&w, &dp)| w * sum_dl + dp)
            .collect();
        relu_backward(&cache.flat_out, &mut d_flat);
        self.dense_backward(layout.flat, &cache.flat_in, &d_flat, false);

        self.branch_backward(&layout.screen, &cache.screen, d_screen);
        self.branch_backward(&layout.minimap, &cache.minimap, d_minimap);
    }
}
