//! Chain-quality metrics: autocorrelation, effective sample size, kernel
//! density estimates, field moments, and mode occupancy.

mod acf;
mod kde;
mod moments;

pub use acf::{acf, ess, ess_report, integrated_autocorrelation_time, AcfSeries, EssReport};
pub use kde::{
    kde, kde_1d, kde_2d, silverman_bandwidth, tv_distance, DensityEstimate, KdeGrid,
    MIN_KDE_SAMPLES,
};
pub use moments::{field_moments, mode_occupancy, FieldMoments, Mode};
