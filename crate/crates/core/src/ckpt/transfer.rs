use super::{Checkpoint, CkptError, Result};
use crate::env::Minigame;
use crate::net::ArchitectureSpec;
use crate::numcore::ParamSet;

/// Starting point of a transfer run: the source weights, untouched, with no
/// optimizer statistics and `T = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferInit {
    pub params: ParamSet<f32>,
    pub minigame: Minigame,
    pub arch: ArchitectureSpec,
    pub source: String,
}

/// Reuses `source`'s parameters to initialize training on `target_minigame`
/// with `target_arch`. The architectures must match tensor for tensor.
pub fn transfer_init(
    source: &Checkpoint,
    source_label: &str,
    target_minigame: Minigame,
    target_arch: &ArchitectureSpec,
) -> Result<TransferInit> {
    let expected = target_arch.layer_shapes();
    let src = &source.params;
    for (name, shape) in &expected {
        match src.get(name).ok() {
            Some(p) if p.name == *name && p.tensor.shape() == shape.as_slice() => {}
            Some(p) if p.name == *name => {
                return Err(CkptError::Incompatible {
                    tensor: name.clone(),
                    detail: format!(
                        "source ({}) has shape {:?}, target ({}) needs {:?}",
                        source.metadata.variant,
                        p.tensor.shape(),
                        target_arch.variant,
                        shape
                    ),
                });
            }
            _ => {
                return Err(CkptError::Incompatible {
                    tensor: name.clone(),
                    detail: format!("missing from the {} source", source.metadata.variant),
                });
            }
        }
    }
    if src.len() != expected.len() {
        let extra = src
            .iter()
            .find(|p| !expected.iter().any(|(n, _)| *n == p.name))
            .map_or("?", |p| &p.name);
        return Err(CkptError::Incompatible {
            tensor: extra.to_string(),
            detail: format!("not part of the {} target", target_arch.variant),
        });
    }
    if source.metadata.variant != target_arch.variant || source.metadata.obs_spec != target_arch.obs_spec {
        return Err(CkptError::Incompatible {
            tensor: "metadata".into(),
            detail: format!(
                "source is {} at {:?}, target is {} at {:?}",
                source.metadata.variant, source.metadata.obs_spec, target_arch.variant, target_arch.obs_spec
            ),
        });
    }
    Ok(TransferInit {
        params: source.params.clone(),
        minigame: target_minigame,
        arch: *target_arch,
        source: source_label.to_string(),
    })
}
