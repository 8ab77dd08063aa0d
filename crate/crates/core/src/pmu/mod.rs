//! Measurement degradations, dataset assembly, and the dataset container.

mod dataset;
mod degrade;
mod features;
mod format;

pub use dataset::{
    build_dataset, generate_samples, generate_trajectory, split_counts, Dataset, GenConfig, Provenance, Sample,
    Split,
};
pub use degrade::{
    add_gaussian_noise, delayed_window, drop_points, empirical_snr_db, inject_outliers, DegradationConfig,
    OUTLIER_SPREAD,
};
pub use features::{window_features, FEATURE_CHANNELS};
pub use format::{deserialize, from_bytes, sha256_hex, serialize, to_bytes, DATASET_MAGIC, DATASET_VERSION};
