//! Metrics, ablation runs, attention trace export and the interaction
//! timing benchmark.

mod ablation;
mod bench;
mod metrics;
mod trace;

pub use ablation::{ratio_sweep, run_ablation};
pub use bench::{
    bench_csv, benchmark_complexity, distance_flops, fit_scaling, interaction_flops, BenchOptions, BenchReport,
    BenchRow, ScalingFit,
};
pub use metrics::{
    clip_rating, evaluate, evaluate_examples, mae_rmse, predict_examples, split_examples, MetricsReport, RunMetrics,
    RATING_MAX, RATING_MIN,
};
pub use trace::{export_attention_trace, pooled_weights, AttentionTrace, ReviewAttention, SideAttention};
