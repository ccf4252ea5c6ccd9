use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::decision::Recommendation;
use crate::error::{Error, Result};
use crate::learner::Model;
use crate::schedule::{ScheduleProblem, ScheduleSolution};

pub const SCHEMA_VERSION: u32 = 1;

/// A value persisted as a standalone JSON document.
pub trait Document: Serialize + DeserializeOwned {
    const KIND: &'static str;
}

impl Document for Model {
    const KIND: &'static str = "model";
}

impl Document for ScheduleProblem {
    const KIND: &'static str = "schedule_problem";
}

impl Document for ScheduleSolution {
    const KIND: &'static str = "schedule_solution";
}

impl Document for Recommendation {
    const KIND: &'static str = "recommendation";
}

#[derive(Serialize)]
struct EnvelopeOut<'a, T> {
    schema_version: u32,
    kind: &'a str,
    body: &'a T,
}

#[derive(Deserialize)]
struct EnvelopeIn {
    schema_version: u32,
    kind: String,
    body: Value,
}

pub fn to_json<T: Document>(value: &T) -> Result<String> {
    let mut text = serde_json::to_string_pretty(&EnvelopeOut {
        schema_version: SCHEMA_VERSION,
        kind: T::KIND,
        body: value,
    })?;
    text.push('\n');
    Ok(text)
}

pub fn from_json<T: Document>(text: &str) -> Result<T> {
    let env: EnvelopeIn = serde_json::from_str(text)?;
    if env.schema_version != SCHEMA_VERSION {
        return Err(Error::Incompatible {
            found: env.schema_version,
            supported: SCHEMA_VERSION,
        });
    }
    if env.kind != T::KIND {
        return Err(Error::Parse(format!("expected a {} document, found {}", T::KIND, env.kind)));
    }
    Ok(serde_json::from_value(env.body)?)
}

pub fn save<T: Document>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, to_json(value)?)?;
    Ok(())
}

pub fn load<T: Document>(path: &Path) -> Result<T> {
    from_json(&fs::read_to_string(path)?)
}
