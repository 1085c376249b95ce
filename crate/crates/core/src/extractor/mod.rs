//! Convolutional feature extraction in direct and clustered form, with
//! per-block global-average branch features and operation counters.

pub mod bundled;
pub mod conv;
pub mod exec;
pub mod fslm;
pub mod model;
pub mod ops;

pub use bundled::{bundled_model, BUNDLED_INPUT, BUNDLED_SEED, BUNDLED_WIDTHS};
pub use conv::{conv_clustered, conv_direct, global_average, max_pool, relu, Accumulation};
pub use exec::{run_model, BlockExecutor, BranchFeature, ExecMode, ModelRun, RunOptions};
pub use fslm::{decode_fslm, encode_fslm, load_fslm, save_fslm};
pub use model::{ConvWeights, Layer, ModelGraph};
pub use ops::OpCounts;
