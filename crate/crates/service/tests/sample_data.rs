use std::path::PathBuf;

use hydrotwin_core::datastore::{write_historian_csv, write_weather_csv};
use hydrotwin_service::config::ServiceConfig;
use hydrotwin_service::history::History;
use hydrotwin_service::pipeline::sample_history;

fn sample_dir() -> PathBuf {
    [env!("CARGO_MANIFEST_DIR"), "data", "sample"].iter().collect()
}

/// The committed sample CSVs are exactly what the seeded generator emits.
/// Set HYDROTWIN_BLESS=1 to rewrite them.
#[test]
fn bundled_sample_matches_generator() {
    let generated = sample_history(&ServiceConfig::default()).unwrap();
    let dir = sample_dir();
    if std::env::var_os("HYDROTWIN_BLESS").is_some() {
        generated.save(&dir).unwrap();
    }
    let historian = std::fs::read_to_string(dir.join("historian.csv")).unwrap();
    let weather = std::fs::read_to_string(dir.join("weather.csv")).unwrap();
    assert!(historian == write_historian_csv(&generated.historian), "historian.csv differs from the generator");
    assert!(weather == write_weather_csv(&generated.weather), "weather.csv differs from the generator");

    let (loaded, issues) = History::load(&dir).unwrap();
    assert!(issues.historian.is_empty() && issues.weather.is_empty());
    assert_eq!(loaded, generated);
}
