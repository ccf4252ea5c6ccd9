use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, NaiveDate, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const HISTORIAN_HEADER: [&str; 3] = ["timestamp", "tag", "value"];
pub const WEATHER_HEADER: [&str; 4] = ["date", "rainfall_mm", "temp_max_c", "temp_min_c"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tag {
    TankLevelPct,
    InflowM3,
    Reactor1Status,
    Reactor2Status,
    Reactor3Status,
    TempSetpointC,
    DrySolidsFrac,
    CycleMinutes,
    EnergyKwhM3,
    QualityIndex,
}

impl Tag {
    pub const ALL: [Tag; 10] = [
        Tag::TankLevelPct,
        Tag::InflowM3,
        Tag::Reactor1Status,
        Tag::Reactor2Status,
        Tag::Reactor3Status,
        Tag::TempSetpointC,
        Tag::DrySolidsFrac,
        Tag::CycleMinutes,
        Tag::EnergyKwhM3,
        Tag::QualityIndex,
    ];

    pub const REACTOR_STATUS: [Tag; 3] = [Tag::Reactor1Status, Tag::Reactor2Status, Tag::Reactor3Status];

    pub fn as_str(self) -> &'static str {
        match self {
            Tag::TankLevelPct => "tank_level_pct",
            Tag::InflowM3 => "inflow_m3",
            Tag::Reactor1Status => "reactor1_status",
            Tag::Reactor2Status => "reactor2_status",
            Tag::Reactor3Status => "reactor3_status",
            Tag::TempSetpointC => "temp_setpoint_c",
            Tag::DrySolidsFrac => "dry_solids_frac",
            Tag::CycleMinutes => "cycle_minutes",
            Tag::EnergyKwhM3 => "energy_kwh_m3",
            Tag::QualityIndex => "quality_index",
        }
    }

    pub fn is_status(self) -> bool {
        Tag::REACTOR_STATUS.contains(&self)
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Tag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Tag::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::Parse(format!("unknown tag `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistorianRecord {
    pub timestamp: DateTime<Utc>,
    pub tag: Tag,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeatherRecord {
    pub date: NaiveDate,
    pub rainfall_mm: f64,
    pub temp_max_c: f64,
    pub temp_min_c: f64,
}

/// A rejected row (errors) or an accepted row with a caveat (warnings).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowIssue {
    /// 1-based line number in the input text.
    pub line: u64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parsed<T> {
    pub records: Vec<T>,
    pub errors: Vec<RowIssue>,
    pub warnings: Vec<RowIssue>,
}

fn reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes())
}

/// Iterate data rows after checking the header; yields `(line, fields)` or
/// a row-level error.
fn rows<'a>(
    text: &'a str,
    header: &[&str],
) -> Result<impl Iterator<Item = std::result::Result<(u64, csv::StringRecord), RowIssue>> + 'a> {
    let mut rdr = reader(text);
    let mut iter = rdr.records();
    match iter.next() {
        Some(Ok(first)) if first.iter().eq(header.iter().copied()) => {}
        Some(Ok(first)) => {
            return Err(Error::Parse(format!(
                "expected header `{}`, found `{}`",
                header.join(","),
                first.iter().collect::<Vec<_>>().join(",")
            )))
        }
        Some(Err(e)) => return Err(Error::Parse(format!("unreadable header: {e}"))),
        None => return Err(Error::Parse(format!("missing header `{}`", header.join(",")))),
    }
    let remaining: Vec<_> = iter.collect();
    Ok(remaining.into_iter().map(|rec| match rec {
        Ok(r) => Ok((r.position().map_or(0, |p| p.line()), r)),
        Err(e) => Err(RowIssue {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        }),
    }))
}

fn parse_f64(field: &str, what: &str) -> std::result::Result<f64, String> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| format!("{what} `{field}` is not a number"))?;
    if !v.is_finite() {
        return Err(format!("{what} `{field}` is not finite"));
    }
    Ok(v)
}

fn parse_historian_row(fields: &csv::StringRecord) -> std::result::Result<HistorianRecord, String> {
    if fields.len() != 3 {
        return Err(format!("expected 3 fields, found {}", fields.len()));
    }
    let timestamp = DateTime::parse_from_rfc3339(fields[0].trim())
        .map_err(|e| format!("timestamp `{}`: {e}", &fields[0]))?
        .with_timezone(&Utc);
    let tag: Tag = fields[1].trim().parse().map_err(|e: Error| e.to_string())?;
    let value = parse_f64(&fields[2], "value")?;
    if tag.is_status() && value != 0.0 && value != 1.0 {
        return Err(format!("status tag {tag} must be 0 or 1, got {value}"));
    }
    Ok(HistorianRecord { timestamp, tag, value })
}

/// Parse a historian export. Bad rows are reported and skipped; the header
/// must be exactly `timestamp,tag,value`.
pub fn parse_historian_csv(text: &str) -> Result<Parsed<HistorianRecord>> {
    let mut out = Parsed {
        records: Vec::new(),
        errors: Vec::new(),
        warnings: Vec::new(),
    };
    for row in rows(text, &HISTORIAN_HEADER)? {
        match row {
            Ok((line, fields)) => match parse_historian_row(&fields) {
                Ok(rec) => out.records.push(rec),
                Err(message) => out.errors.push(RowIssue { line, message }),
            },
            Err(issue) => out.errors.push(issue),
        }
    }
    out.records.sort_by(|a, b| a.timestamp.cmp(&b.timestamp).then(a.tag.cmp(&b.tag)));
    Ok(out)
}

fn parse_weather_row(fields: &csv::StringRecord) -> std::result::Result<WeatherRecord, String> {
    if fields.len() != 4 {
        return Err(format!("expected 4 fields, found {}", fields.len()));
    }
    let date = NaiveDate::parse_from_str(fields[0].trim(), "%Y-%m-%d")
        .map_err(|e| format!("date `{}`: {e}", &fields[0]))?;
    let rainfall_mm = parse_f64(&fields[1], "rainfall_mm")?;
    let temp_max_c = parse_f64(&fields[2], "temp_max_c")?;
    let temp_min_c = parse_f64(&fields[3], "temp_min_c")?;
    if rainfall_mm < 0.0 {
        return Err(format!("rainfall_mm {rainfall_mm} is negative"));
    }
    if temp_min_c > temp_max_c {
        return Err(format!("temp_min_c {temp_min_c} exceeds temp_max_c {temp_max_c}"));
    }
    Ok(WeatherRecord {
        date,
        rainfall_mm,
        temp_max_c,
        temp_min_c,
    })
}

/// Parse daily weather observations. A repeated date replaces the earlier
/// row and leaves a warning.
pub fn parse_weather_csv(text: &str) -> Result<Parsed<WeatherRecord>> {
    let mut by_date: BTreeMap<NaiveDate, WeatherRecord> = BTreeMap::new();
    let mut errors = Vec::new();
    let mut warnings = Vec::new();
    for row in rows(text, &WEATHER_HEADER)? {
        match row {
            Ok((line, fields)) => match parse_weather_row(&fields) {
                Ok(rec) => {
                    if by_date.insert(rec.date, rec.clone()).is_some() {
                        warnings.push(RowIssue {
                            line,
                            message: format!("duplicate date {}; keeping this row", rec.date),
                        });
                    }
                }
                Err(message) => errors.push(RowIssue { line, message }),
            },
            Err(issue) => errors.push(issue),
        }
    }
    Ok(Parsed {
        records: by_date.into_values().collect(),
        errors,
        warnings,
    })
}

pub fn write_historian_csv(records: &[HistorianRecord]) -> String {
    let mut out = HISTORIAN_HEADER.join(",");
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{},{}\n",
            r.timestamp.to_rfc3339_opts(SecondsFormat::AutoSi, true),
            r.tag,
            r.value
        ));
    }
    out
}

pub fn write_weather_csv(records: &[WeatherRecord]) -> String {
    let mut out = WEATHER_HEADER.join(",");
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.date.format("%Y-%m-%d"),
            r.rainfall_mm,
            r.temp_max_c,
            r.temp_min_c
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_historian_row() {
        let p = parse_historian_csv("timestamp,tag,value\n2024-03-01T00:00:00Z,tank_level_pct,62.5\n").unwrap();
        assert_eq!(p.records.len(), 1);
        assert_eq!(p.records[0].tag, Tag::TankLevelPct);
        assert_eq!(p.records[0].value, 62.5);
        assert!(p.errors.is_empty());
    }

    #[test]
    fn bogus_tag_reported_with_line() {
        let text = "timestamp,tag,value\n\
                    2024-03-01T00:00:00Z,tank_level_pct,62.5\n\
                    2024-03-01T00:00:00Z,bogus,1\n\
                    2024-03-01T00:15:00Z,inflow_m3,30\n";
        let p = parse_historian_csv(text).unwrap();
        assert_eq!(p.records.len(), 2);
        assert_eq!(p.errors.len(), 1);
        assert_eq!(p.errors[0].line, 3);
    }

    #[test]
    fn header_rules() {
        assert!(parse_historian_csv("").is_err());
        assert!(parse_historian_csv("time,tag,value\n").is_err());
        let p = parse_historian_csv("timestamp,tag,value\n").unwrap();
        assert!(p.records.is_empty() && p.errors.is_empty());
    }

    #[test]
    fn malformed_rows() {
        let text = "timestamp,tag,value\n\
                    not-a-time,tank_level_pct,1\n\
                    2024-03-01T00:00:00Z,tank_level_pct,NaN\n\
                    2024-03-01T00:00:00Z,reactor1_status,0.5\n\
                    2024-03-01T00:00:00Z,tank_level_pct\n\
                    2024-03-01T00:00:00Z,tank_level_pct,abc\n";
        let p = parse_historian_csv(text).unwrap();
        assert!(p.records.is_empty());
        assert_eq!(p.errors.iter().map(|e| e.line).collect::<Vec<_>>(), vec![2, 3, 4, 5, 6]);
    }

    #[test]
    fn records_sorted_and_offsets_normalised() {
        let text = "timestamp,tag,value\n\
                    2024-03-01T10:00:00+10:00,tank_level_pct,2\n\
                    2024-03-01T00:00:00Z,inflow_m3,1\n\
                    2024-02-29T23:00:00Z,tank_level_pct,3\n";
        let p = parse_historian_csv(text).unwrap();
        let v: Vec<_> = p.records.iter().map(|r| (r.value, r.tag)).collect();
        assert_eq!(v, vec![(3.0, Tag::TankLevelPct), (2.0, Tag::TankLevelPct), (1.0, Tag::InflowM3)]);
    }

    #[test]
    fn weather_rows() {
        let p = parse_weather_csv("date,rainfall_mm,temp_max_c,temp_min_c\n2024-03-01,12.4,29.0,21.5\n").unwrap();
        assert_eq!(p.records.len(), 1);
        assert_eq!(p.records[0].rainfall_mm, 12.4);

        let p = parse_weather_csv("date,rainfall_mm,temp_max_c,temp_min_c\n2024-03-01,0,20,25\n").unwrap();
        assert!(p.records.is_empty());
        assert_eq!(p.errors[0].line, 2);

        let p = parse_weather_csv(
            "date,rainfall_mm,temp_max_c,temp_min_c\n2024-03-01,1,20,10\n2024-03-01,2,21,11\n",
        )
        .unwrap();
        assert_eq!(p.records.len(), 1);
        assert_eq!(p.records[0].rainfall_mm, 2.0);
        assert_eq!(p.warnings.len(), 1);
        assert_eq!(p.warnings[0].line, 3);

        assert!(parse_weather_csv("date,rain\n").is_err());
    }

    #[test]
    fn write_then_parse_is_identity() {
        let text = "timestamp,tag,value\n\
                    2024-03-01T00:00:00Z,tank_level_pct,62.5\n\
                    2024-03-01T00:00:00Z,reactor1_status,1\n\
                    2024-03-01T00:15:00Z,energy_kwh_m3,41.123456789012345\n";
        let p = parse_historian_csv(text).unwrap();
        let again = parse_historian_csv(&write_historian_csv(&p.records)).unwrap();
        assert_eq!(p.records, again.records);
    }
}
