//! Efficiency metrics, trial aggregation and CSV / SVG output.

mod csv;
mod metrics;
mod svg;

pub use self::csv::{emit_csv, emit_summary_csv, parse_csv, read_csv, result_rows, rows_to_csv, ResultRow};
pub use metrics::{aggregate, efficiency, EfficiencyScore, EpisodeSummary, TrialReport, TrialResult};
pub use svg::{emit_svg_chart, svg_chart, ChartKind};
