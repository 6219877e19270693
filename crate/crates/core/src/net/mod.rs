//! The three policy/value networks: `Baseline`, `PlusFc` and `PlusConv`.
//!
//! Screen and minimap planes each pass through a same-padded conv stack; the
//! flat features pass through a 256-unit FC layer and are broadcast over all
//! pixels. The concatenation of the three is the state representation:
//!
//! * spatial policy: 1x1 conv over the state representation, softmax over pixels
//! * value and function policy: a shared 256-unit FC over the mean-pooled state
//!   representation, then (for `PlusFc` only) a private 128-unit FC per head

mod network;
mod outputs;

pub use network::{ForwardCache, Network, OutputGrads};
pub use outputs::{log_prob, policy_entropy, NetworkOutputs};

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::env::ObservationSpec;
use crate::numcore::{NumError, ParamSet, Real, Tensor};

pub const FLAT_UNITS: usize = 256;
pub const SHARED_UNITS: usize = 256;
pub const HEAD_UNITS: usize = 128;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetError {
    #[error("unknown architecture `{0}` (expected baseline, plusfc or plusconv)")]
    UnknownVariant(String),
    #[error("observation does not match the network: {0}")]
    ObservationMismatch(String),
    #[error("parameters do not match the architecture: {0}")]
    ParameterMismatch(String),
    #[error("action has zero probability under the policy: {0}")]
    ImpossibleAction(String),
    #[error(transparent)]
    Num(#[from] NumError),
}

pub type Result<T, E = NetError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    Baseline,
    PlusFc,
    PlusConv,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Baseline, Variant::PlusFc, Variant::PlusConv];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Baseline => "baseline",
            Variant::PlusFc => "plusfc",
            Variant::PlusConv => "plusconv",
        }
    }

    /// `(output channels, kernel)` of each conv in the screen and minimap branches.
    pub fn branch_convs(self) -> &'static [(usize, usize)] {
        match self {
            Variant::Baseline | Variant::PlusFc => &[(16, 5), (32, 3)],
            Variant::PlusConv => &[(32, 5), (48, 3), (16, 3)],
        }
    }

    pub fn has_head_fc(self) -> bool {
        self == Variant::PlusFc
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = NetError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "baseline" => Ok(Variant::Baseline),
            "plusfc" => Ok(Variant::PlusFc),
            "plusconv" => Ok(Variant::PlusConv),
            _ => Err(NetError::UnknownVariant(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ArchitectureSpec {
    pub variant: Variant,
    pub obs_spec: ObservationSpec,
}

impl ArchitectureSpec {
    pub fn new(variant: Variant, obs_spec: ObservationSpec) -> Self {
        Self { variant, obs_spec }
    }

    /// Channels of one conv branch's output.
    pub fn branch_channels(&self) -> usize {
        self.variant.branch_convs().last().expect("non-empty branch").0
    }

    /// Channels of the concatenated state representation.
    pub fn state_channels(&self) -> usize {
        2 * self.branch_channels() + FLAT_UNITS
    }

    /// Every parameter's name and shape, in construction order.
    pub fn layer_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let o = &self.obs_spec;
        let mut shapes = Vec::new();
        let mut push_layer = |prefix: &str, weight: Vec<usize>| {
            let bias = vec![weight[0]];
            shapes.push((format!("{prefix}.weight"), weight));
            shapes.push((format!("{prefix}.bias"), bias));
        };
        for (branch, input) in [("screen", o.screen_channels), ("minimap", o.minimap_channels)] {
            let mut c = input;
            for (i, &(out, k)) in self.variant.branch_convs().iter().enumerate() {
                push_layer(&format!("{branch}.conv{}", i + 1), vec![out, c, k, k]);
                c = out;
            }
        }
        push_layer("flat.fc", vec![FLAT_UNITS, o.flat_dim]);
        push_layer("spatial.conv", vec![1, self.state_channels(), 1, 1]);
        push_layer("shared.fc", vec![SHARED_UNITS, self.state_channels()]);
        if self.variant.has_head_fc() {
            push_layer("value.fc", vec![HEAD_UNITS, SHARED_UNITS]);
            push_layer("value.out", vec![1, HEAD_UNITS]);
            push_layer("fn.fc", vec![HEAD_UNITS, SHARED_UNITS]);
            push_layer("fn.out", vec![o.num_functions, HEAD_UNITS]);
        } else {
            push_layer("value.out", vec![1, SHARED_UNITS]);
            push_layer("fn.out", vec![o.num_functions, SHARED_UNITS]);
        }
        shapes
    }

    pub fn num_scalars(&self) -> usize {
        self.layer_shapes()
            .iter()
            .map(|(_, s)| s.iter().product::<usize>())
            .sum()
    }
}

/// Glorot-uniform weights (`bound = sqrt(6 / (fan_in + fan_out))`), zero biases.
pub fn build<T: Real>(arch: &ArchitectureSpec, init_seed: u64) -> ParamSet<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(init_seed);
    let mut params = ParamSet::new();
    for (name, shape) in arch.layer_shapes() {
        let mut t = Tensor::<T>::zeros(&shape);
        if name.ends_with(".weight") {
            let receptive: usize = shape[2..].iter().product();
            let fan_in = shape[1] * receptive;
            let fan_out = shape[0] * receptive;
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for v in t.data_mut() {
                *v = T::lit(rng.gen_range(-bound..bound));
            }
        }
        params.push(name, t);
    }
    params
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec16() -> ObservationSpec {
        ObservationSpec::new(16).unwrap()
    }

    #[test]
    fn baseline_parameter_count_closed_form() {
        let arch = ArchitectureSpec::new(Variant::Baseline, spec16());
        let (cs, cm, flat, a) = (3, 2, 2, 7);
        let screen = (16 * cs * 25 + 16) + (32 * 16 * 9 + 32);
        assert_eq!(16 * cs * 25 + 16, 1216);
        let minimap = (16 * cm * 25 + 16) + (32 * 16 * 9 + 32);
        let flat_fc = 256 * flat + 256;
        let r = 32 + 32 + 256;
        let spatial = r + 1;
        let shared = 256 * r + 256;
        let heads = (256 + 1) + (256 * a + a);
        let expected = screen + minimap + flat_fc + spatial + shared + heads;
        assert_eq!(expected, 96_633);
        assert_eq!(arch.num_scalars(), expected);
        assert_eq!(build::<f32>(&arch, 0).num_scalars(), expected);
    }

    #[test]
    fn variants_follow_layer_table() {
        let shapes = |v| ArchitectureSpec::new(v, spec16()).layer_shapes();
        let find = |s: &[(String, Vec<usize>)], n: &str| s.iter().find(|(k, _)| k == n).map(|(_, v)| v.clone());

        let pc = shapes(Variant::PlusConv);
        assert_eq!(find(&pc, "screen.conv1.weight"), Some(vec![32, 3, 5, 5]));
        assert_eq!(find(&pc, "screen.conv2.weight"), Some(vec![48, 32, 3, 3]));
        assert_eq!(find(&pc, "minimap.conv3.weight"), Some(vec![16, 48, 3, 3]));
        assert_eq!(find(&pc, "spatial.conv.weight"), Some(vec![1, 16 + 16 + 256, 1, 1]));
        assert_eq!(find(&pc, "value.fc.weight"), None);

        let fc = shapes(Variant::PlusFc);
        assert_eq!(find(&fc, "screen.conv2.weight"), Some(vec![32, 16, 3, 3]));
        assert_eq!(find(&fc, "value.fc.weight"), Some(vec![128, 256]));
        assert_eq!(find(&fc, "fn.fc.weight"), Some(vec![128, 256]));
        assert_eq!(find(&fc, "fn.out.weight"), Some(vec![7, 128]));
        assert_eq!(find(&fc, "flat.fc.weight"), Some(vec![256, 2]));
        assert_eq!(find(&fc, "shared.fc.weight"), Some(vec![256, 320]));
    }

    #[test]
    fn build_is_deterministic_with_zero_biases() {
        let arch = ArchitectureSpec::new(Variant::PlusFc, spec16());
        let a = build::<f32>(&arch, 3);
        let b = build::<f32>(&arch, 3);
        assert_eq!(a, b);
        assert_ne!(a, build::<f32>(&arch, 4));
        for p in a.iter() {
            if p.name.ends_with(".bias") {
                assert!(p.tensor.data().iter().all(|&v| v == 0.0), "{}", p.name);
            } else {
                assert!(p.tensor.data().iter().any(|&v| v != 0.0), "{}", p.name);
            }
        }
    }

    #[test]
    fn variant_names_roundtrip() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
        assert!("fullyconv".parse::<Variant>().is_err());
    }
}
