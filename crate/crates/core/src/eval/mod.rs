//! Metrics, statistical tests, timing and result tables.

pub mod bench;
pub mod metrics;
pub mod predict;
pub mod report;
pub mod stats;

pub use bench::{bench_inference, time_forward, BenchConfig, Latency, TimingStats};
pub use metrics::{mae, pearson, ChannelScores, Pearson};
pub use predict::{predict_windows, Predictions};
pub use report::{
    comparison_table, noise_table_csv, to_csv, ComparisonRow, EvalReport, NoiseCondition, NoiseStudy, ReportMeta, RunGroup,
    RunResult, ScaleRow, TimingRow,
};
pub use stats::{anova_oneway, ci95, jarque_bera, levene, relative_diff, Interval, TestResult};
