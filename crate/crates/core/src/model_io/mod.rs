//! Checkpoints, delta extraction/restoration, and multi-model size accounting.

mod checkpoint;

use indexmap::IndexMap;

pub(crate) use checkpoint::{align_up, split_container, ALIGN};
pub use checkpoint::{ModelCheckpoint, Tensor, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};

use crate::error::{Error, Result};
use crate::numerics::{matrix_shape_str, Matrix};

/// Per-tensor difference between an aligned model and its backbone.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaWeights {
    pub tensors: IndexMap<String, Tensor>,
    pub backbone_checksum: u64,
}

fn check_names(a: &IndexMap<String, Tensor>, b: &IndexMap<String, Tensor>) -> Result<()> {
    let missing: Vec<String> = b.keys().filter(|k| !a.contains_key(*k)).cloned().collect();
    let extra: Vec<String> = a.keys().filter(|k| !b.contains_key(*k)).cloned().collect();
    if missing.is_empty() && extra.is_empty() {
        Ok(())
    } else {
        Err(Error::NameMismatch { missing, extra })
    }
}

fn check_shape(name: &str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() || a.is_vector != b.is_vector {
        return Err(Error::ShapeMismatch {
            name: name.to_string(),
            left: matrix_shape_str(a.shape()),
            right: matrix_shape_str(b.shape()),
        });
    }
    Ok(())
}

/// `aligned − backbone`, tensor by tensor, in backbone order.
///
/// Names `aligned` lacks are reported as missing; names only `aligned` has
/// are reported as extra.
pub fn extract_delta(aligned: &ModelCheckpoint, backbone: &ModelCheckpoint) -> Result<DeltaWeights> {
    check_names(aligned.tensors(), backbone.tensors())?;
    let mut tensors = IndexMap::with_capacity(backbone.len());
    for (name, b) in backbone.tensors() {
        let a = &aligned.tensors()[name];
        check_shape(name, a, b)?;
        let diff = a.data.sub(&b.data).map_err(|_| Error::NonFinite("extract_delta"))?;
        tensors.insert(
            name.clone(),
            Tensor {
                data: diff,
                is_vector: b.is_vector,
            },
        );
    }
    Ok(DeltaWeights {
        tensors,
        backbone_checksum: backbone.checksum(),
    })
}

/// `backbone + delta`. Fails with `CHECKSUM_MISMATCH` when the delta was taken
/// against a different backbone, unless `force` is set.
pub fn restore(backbone: &ModelCheckpoint, delta: &DeltaWeights, force: bool) -> Result<ModelCheckpoint> {
    if !force && delta.backbone_checksum != backbone.checksum() {
        return Err(Error::ChecksumMismatch {
            expected: delta.backbone_checksum,
            actual: backbone.checksum(),
        });
    }
    check_names(&delta.tensors, backbone.tensors())?;
    let mut tensors = IndexMap::with_capacity(backbone.len());
    for (name, b) in backbone.tensors() {
        let d = &delta.tensors[name];
        check_shape(name, d, b)?;
        let (rows, cols) = b.shape();
        // zero deltas keep the backbone bits, including signed zeros
        let data: Vec<f32> = b
            .data
            .data()
            .iter()
            .zip(d.data.data())
            .map(|(&x, &dx)| if dx == 0.0 { x } else { x + dx })
            .collect();
        let data = Matrix::new(rows, cols, data).map_err(|_| Error::NonFinite("restore"))?;
        tensors.insert(
            name.clone(),
            Tensor {
                data,
                is_vector: b.is_vector,
            },
        );
    }
    Ok(ModelCheckpoint::new(tensors))
}

/// Storage for one backbone plus `n_models` deltas at ratio `alpha`:
/// `(1 + alpha · n_models) · model_size`.
pub fn total_size(n_models: usize, model_size: f64, alpha: f64) -> f64 {
    (1.0 + alpha * n_models as f64) * model_size
}
