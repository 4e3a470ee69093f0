//! Quantitative evaluation: position/force RMSE, Frechet and kernel
//! distances over a pinned feature embedding, and experiment drivers that
//! assemble the comparison tables.

mod features;
mod fid;
mod kid;
mod metrics;
mod report;

pub use features::{FeatureEmbedding, FeatureExtractor, FEATURE_DIM};
pub use fid::{fid, COVARIANCE_EPS};
pub use kid::{kid, KidScore, DEFAULT_SUBSETS, DEFAULT_SUBSET_SIZE};
pub use metrics::{force_rmse, position_rmse};
pub use report::{load_reports_json, write_reports_csv, write_reports_json, EvalReport};
