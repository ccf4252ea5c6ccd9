//! Historian and weather ingestion, grid alignment, training-set assembly
//! and versioned JSON persistence.

mod align;
mod csv_io;
mod persist;
mod runs;

pub use align::{align_to_grid, build_training_dataset, exog_from_weather, AlignedData, DEFAULT_FILL_LIMIT};
pub use csv_io::{
    parse_historian_csv, parse_weather_csv, write_historian_csv, write_weather_csv, HistorianRecord, Parsed,
    RowIssue, Tag, WeatherRecord, HISTORIAN_HEADER, WEATHER_HEADER,
};
pub use persist::{from_json, load, save, to_json, Document, SCHEMA_VERSION};
pub use runs::{ActionKind, OperatorAction, RunRecord, RunStore, ScheduleEdit};
