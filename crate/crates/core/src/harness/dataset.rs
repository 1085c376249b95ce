use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape_err, Result};
use crate::numerics::Tensor;

/// Labeled samples stored as one `F32` tensor: `[n, F]` feature rows or
/// `[n, C, H, W]` images.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureDataset {
    data: Tensor,
    labels: Vec<usize>,
    n_classes: usize,
    pub provenance: String,
}

/// JSON companion of a dataset tensor file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSidecar {
    pub labels: Vec<usize>,
    pub n_classes: usize,
    pub provenance: String,
}

impl FeatureDataset {
    pub fn new(data: Tensor, labels: Vec<usize>, provenance: impl Into<String>) -> Result<Self> {
        if data.as_f32().is_none() {
            return Err(invalid!("dataset tensor must be F32, got {:?}", data.dtype()));
        }
        if data.rank() != 2 && data.rank() != 4 {
            return Err(shape_err!("dataset tensor must be [n, F] or [n, C, H, W], got {:?}", data.shape()));
        }
        if labels.len() != data.shape()[0] {
            return Err(shape_err!("{} labels for {} samples", labels.len(), data.shape()[0]));
        }
        let n_classes = labels.iter().max().map_or(0, |m| m + 1);
        let mut seen = vec![false; n_classes];
        for &l in &labels {
            seen[l] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(invalid!("labels must be dense: class {missing} has no samples"));
        }
        Ok(Self { data, labels, n_classes, provenance: provenance.into() })
    }

    pub fn from_sidecar(data: Tensor, sidecar: LabelSidecar) -> Result<Self> {
        let d = Self::new(data, sidecar.labels, sidecar.provenance)?;
        if d.n_classes != sidecar.n_classes {
            return Err(invalid!("sidecar declares {} classes, labels use {}", sidecar.n_classes, d.n_classes));
        }
        Ok(d)
    }

    pub fn sidecar(&self) -> LabelSidecar {
        LabelSidecar { labels: self.labels.clone(), n_classes: self.n_classes, provenance: self.provenance.clone() }
    }

    pub fn data(&self) -> &Tensor {
        &self.data
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn is_image(&self) -> bool {
        self.data.rank() == 4
    }

    /// Shape of one sample.
    pub fn sample_shape(&self) -> &[usize] {
        &self.data.shape()[1..]
    }

    pub fn sample(&self, i: usize) -> &[f32] {
        let n: usize = self.sample_shape().iter().product();
        &self.data.as_f32().unwrap()[i * n..(i + 1) * n]
    }

    pub fn image(&self, i: usize) -> Result<Tensor> {
        if !self.is_image() {
            return Err(invalid!("dataset holds feature rows, not images"));
        }
        Tensor::from_f32(self.sample_shape().to_vec(), self.sample(i).to_vec())
    }

    /// Sample indices of every class, in dataset order.
    pub fn class_indices(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_classes];
        for (i, &l) in self.labels.iter().enumerate() {
            out[l].push(i);
        }
        out
    }
}
