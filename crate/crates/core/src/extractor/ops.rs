use serde::{Deserialize, Serialize};

/// Arithmetic performed by the feature extractor. An op is one multiply or one add.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCounts {
    pub multiplies: u64,
    pub adds: u64,
    /// Adds that route an activation into a weight-index bin.
    pub index_accumulates: u64,
    /// Global average pooling for branch features and residual adds.
    pub auxiliary: u64,
}

impl OpCounts {
    pub fn total(&self) -> u64 {
        self.multiplies + self.adds + self.index_accumulates + self.auxiliary
    }
}

impl std::ops::AddAssign for OpCounts {
    fn add_assign(&mut self, o: Self) {
        self.multiplies += o.multiplies;
        self.adds += o.adds;
        self.index_accumulates += o.index_accumulates;
        self.auxiliary += o.auxiliary;
    }
}

impl std::ops::Add for OpCounts {
    type Output = Self;
    fn add(mut self, o: Self) -> Self {
        self += o;
        self
    }
}
