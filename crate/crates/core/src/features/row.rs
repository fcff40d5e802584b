//! Generic feature rows: `{"commit_id", "date", <numeric features>, "role"?, "label"?}`.
//!
//! Rows carry the fixed expert features plus any extra numeric keys a
//! user-supplied dataset provides. Values are kept in a canonical order
//! (expert features first, extras sorted by name) so serialization is
//! deterministic.

use std::fmt;

use serde::de::{self, Deserializer};
use serde::ser::{SerializeMap, Serializer};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::{ExpertFeatureVector, FEATURE_NAMES, INTEGER_FEATURES};
use crate::dataset::Role;

pub const RESERVED_KEYS: [&str; 4] = ["commit_id", "date", "role", "label"];

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub commit_id: String,
    pub date: Option<i64>,
    values: Vec<(String, f64)>,
    pub role: Option<Role>,
    pub label: Option<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{0}")]
pub struct RowError(pub String);

fn canonical_rank(name: &str) -> (usize, &str) {
    match FEATURE_NAMES.iter().position(|n| *n == name) {
        Some(i) => (i, ""),
        None => (FEATURE_NAMES.len(), name),
    }
}

impl FeatureRow {
    pub fn new(commit_id: impl Into<String>, date: Option<i64>, values: Vec<(String, f64)>) -> Self {
        let mut row = Self {
            commit_id: commit_id.into(),
            date,
            values,
            role: None,
            label: None,
        };
        row.canonicalize();
        row
    }

    pub fn from_vector(commit_id: impl Into<String>, date: i64, v: &ExpertFeatureVector) -> Self {
        Self::new(commit_id, Some(date), v.named_values())
    }

    fn canonicalize(&mut self) {
        self.values
            .sort_by(|a, b| canonical_rank(&a.0).cmp(&canonical_rank(&b.0)));
        self.values.dedup_by(|a, b| a.0 == b.0);
    }

    pub fn values(&self) -> &[(String, f64)] {
        &self.values
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.values.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }

    pub fn set(&mut self, name: &str, value: f64) {
        match self.values.iter_mut().find(|(n, _)| n == name) {
            Some(slot) => slot.1 = value,
            None => {
                self.values.push((name.to_string(), value));
                self.canonicalize();
            }
        }
    }

    pub fn feature_names(&self) -> impl Iterator<Item = &str> {
        self.values.iter().map(|(n, _)| n.as_str())
    }

    /// Lines added plus lines deleted, the inspection-effort proxy.
    pub fn churn(&self) -> u64 {
        let la = self.get("la").unwrap_or(0.0).max(0.0);
        let ld = self.get("ld").unwrap_or(0.0).max(0.0);
        (la + ld).round() as u64
    }

    pub fn to_vector(&self) -> Option<ExpertFeatureVector> {
        ExpertFeatureVector::from_named(|n| self.get(n))
    }

    pub fn from_json_value(value: Value) -> Result<Self, RowError> {
        let Value::Object(map) = value else {
            return Err(RowError("expected a JSON object".into()));
        };
        Self::from_map(map)
    }

    fn from_map(map: Map<String, Value>) -> Result<Self, RowError> {
        let mut commit_id = None;
        let mut date = None;
        let mut role = None;
        let mut label = None;
        let mut values = Vec::new();
        for (key, v) in map {
            match key.as_str() {
                "commit_id" => match v {
                    Value::String(s) => commit_id = Some(s),
                    _ => return Err(RowError("commit_id must be a string".into())),
                },
                "date" => match v.as_i64() {
                    Some(d) => date = Some(d),
                    None if v.is_null() => {}
                    None => return Err(RowError("date must be an integer".into())),
                },
                "role" => match v {
                    Value::String(s) => {
                        role = Some(s.parse::<Role>().map_err(RowError)?);
                    }
                    Value::Null => {}
                    _ => return Err(RowError("role must be a string".into())),
                },
                "label" => match v.as_u64() {
                    Some(l @ (0 | 1)) => label = Some(l as u8),
                    _ if v.is_null() => {}
                    _ => return Err(RowError(format!("label must be 0 or 1, got {v}"))),
                },
                _ => match v.as_f64() {
                    Some(x) if x.is_finite() => values.push((key, x)),
                    _ => return Err(RowError(format!("feature `{key}` must be a finite number, got {v}"))),
                },
            }
        }
        let commit_id = commit_id.ok_or_else(|| RowError("missing commit_id".into()))?;
        let mut row = Self::new(commit_id, date, values);
        row.role = role;
        row.label = label;
        Ok(row)
    }

    pub fn parse_line(line: &str) -> Result<Self, RowError> {
        let value: Value = serde_json::from_str(line).map_err(|e| RowError(e.to_string()))?;
        Self::from_json_value(value)
    }
}

impl Serialize for FeatureRow {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(None)?;
        map.serialize_entry("commit_id", &self.commit_id)?;
        if let Some(d) = self.date {
            map.serialize_entry("date", &d)?;
        }
        for (name, v) in &self.values {
            let integral = INTEGER_FEATURES.contains(&name.as_str()) && v.fract() == 0.0 && v.abs() < 9.0e15;
            if integral {
                map.serialize_entry(name, &(*v as i64))?;
            } else {
                map.serialize_entry(name, v)?;
            }
        }
        if let Some(r) = self.role {
            map.serialize_entry("role", &r)?;
        }
        if let Some(l) = self.label {
            map.serialize_entry("label", &l)?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for FeatureRow {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let map = Map::<String, Value>::deserialize(deserializer)?;
        FeatureRow::from_map(map).map_err(de::Error::custom)
    }
}

impl fmt::Display for FeatureRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let text = serde_json::to_string(self).map_err(|_| fmt::Error)?;
        f.write_str(&text)
    }
}
