//! Evaluation battery: histogram similarity (BD, HC), windowed SSIM with
//! per-ROI averaging, GSM, blood-to-tissue contrast and reclassification.

mod figures;
mod histogram;
mod report;
mod risk;
mod similarity;
mod ssim;

pub use figures::{box_plot, write_figures};
pub use histogram::{bhattacharyya, hist_correlation, histogram_of, Histogram, DEFAULT_BINS};
pub use report::{aggregate, evaluate_experiment, EvalOptions, ImageMetrics, MetricReport, FIELD_NAMES};
pub use risk::{
    contrast_db, contrast_from_means, gsm, median, reclassification_rate, region_mean, region_values,
    Contrast, GsmRegion, GSM_ADVENTITIA_LEVEL, GSM_THRESHOLD, LUMEN_FLOOR,
};
pub use similarity::{domain_similarity, histogram_similarity, MeanSd, Pairing, SetSimilarity, SimilarityMode};
pub use ssim::{roi_ssim, ssim, ssim_map, window_taps, DYNAMIC_RANGE, K1, K2, WINDOW_SIDE};
