//! Binary tag and trace files, CSV exports and the run configuration.

mod config;
mod csv;
mod tags;
mod traces;

pub use config::{parse_config, ConfigError, RunConfig};
pub use csv::{
    fit_csv, fit_report, format_series, g2_series, histogram_series, parse_series, variance_series, write_text,
    CsvError, Series,
};
pub use tags::{decode_tags, encode_tags, read_tags, read_tags_from, write_tags, write_tags_to, TagIoError, TAG_MAGIC};
pub use traces::{decode_traces, encode_traces, read_traces, write_traces, TraceIoError, TRACE_MAGIC};
