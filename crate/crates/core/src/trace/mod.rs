//! Packet traces: export, parsing, offline metric recomputation and
//! comparison against the online session log.

mod compare;
mod offline;
mod tsv;

pub use compare::{compare, nearest_rank, DiffKind, MetricComparison, Quantiles, Tolerances, ValidationReport};
pub use offline::{metrics_from_trace, TraceFrameMetrics, TraceMetrics};
pub use tsv::{
    format_time_s, parse_time_s, parse_trace, parse_trace_with, write_trace, CapturePoint, ColumnMap, Direction,
    ParsedTrace, TraceMeta, TraceRow, TraceWriter, COLUMNS,
};
