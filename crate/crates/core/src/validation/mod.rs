//! Repeated nested cross-validation, fit metrics and model comparison.

mod cv;
mod folds;
mod metrics;
mod report;
mod stats;

pub use cv::{
    compare_models, fold_rmses, nested_cv, outer_seed, select_and_fit, summarize, Selection, CityMetrics, Comparison, CvEntry, CvReport,
    FoldResult, PairTest, Summary, ALPHA, COMPARISON_NOTE,
};
pub use folds::{
    complement, difference, make_fold_plan, make_fold_plan_with, FoldPlan, INNER_FOLDS, MIN_ROWS, OUTER_FOLDS,
    REPEATS,
};
pub use metrics::{mae, r2, r2_ss, rmse};
pub use report::{
    read_report_json, write_city_metrics_csv, write_fold_metrics_csv, write_pairwise_csv, write_plot_data_csv,
    write_report_json,
};
pub use stats::{benjamini_hochberg, midranks, rank_sum_counts, wilcoxon_rank_sum, EXACT_MAX};
