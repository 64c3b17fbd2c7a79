//! Feedback records, the broad topic label set, and loaders for the auxiliary
//! data files (asset catalog, ridership, name table).

mod auxdata;
mod csv_io;
pub mod demo;
pub mod synth;
mod tweets;

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, NaiveDate, NaiveDateTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use auxdata::{
    AssetCatalog, LineEntry, NameGenderTable, RidershipSeries, RouteEntry, StationEntry,
    VehicleRange, SCHEMA_VERSION,
};
pub use csv_io::{parse_feedback_csv, write_feedback_csv, ColumnMap, CsvSchema};
pub use tweets::{parse_tweets_jsonl, DEFAULT_HANDLES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Channel {
    #[serde(rename = "CRM")]
    Crm,
    Twitter,
    Survey,
    Other,
}

impl Channel {
    pub fn as_str(self) -> &'static str {
        match self {
            Channel::Crm => "CRM",
            Channel::Twitter => "Twitter",
            Channel::Survey => "Survey",
            Channel::Other => "Other",
        }
    }
}

impl FromStr for Channel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "crm" => Ok(Channel::Crm),
            "twitter" | "tweet" => Ok(Channel::Twitter),
            "survey" => Ok(Channel::Survey),
            "other" => Ok(Channel::Other),
            _ => Err(Error::invalid(format!("unknown channel `{s}`"))),
        }
    }
}

/// Service mode of a feedback item or an asset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Mode {
    Bus,
    Rail,
    Generic,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Bus, Mode::Rail, Mode::Generic];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Bus => "Bus",
            Mode::Rail => "Rail",
            Mode::Generic => "Generic",
        }
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "bus" => Ok(Mode::Bus),
            "rail" => Ok(Mode::Rail),
            "generic" | "other" | "" => Ok(Mode::Generic),
            _ => Err(Error::invalid(format!("unknown mode `{s}`"))),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One raw feedback item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackRecord {
    pub id: String,
    pub text: String,
    pub channel: Channel,
    pub timestamp: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem_category: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode_hint: Option<Mode>,
    /// Display name of the author, when the channel provides one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub author: Option<String>,
}

/// The eleven broad transit topics plus the `Unassigned` sentinel.
///
/// Codes 0..=10 are stable and index every per-class matrix in the crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TopicLabel {
    Operations,
    Fares,
    CustomerService,
    Cleanliness,
    InformationProvision,
    UnsafeDriving,
    General,
    RouteSuggestions,
    FareEvasion,
    Crowding,
    Security,
    Unassigned,
}

impl TopicLabel {
    pub const COUNT: usize = 11;

    pub const ALL: [TopicLabel; 11] = [
        TopicLabel::Operations,
        TopicLabel::Fares,
        TopicLabel::CustomerService,
        TopicLabel::Cleanliness,
        TopicLabel::InformationProvision,
        TopicLabel::UnsafeDriving,
        TopicLabel::General,
        TopicLabel::RouteSuggestions,
        TopicLabel::FareEvasion,
        TopicLabel::Crowding,
        TopicLabel::Security,
    ];

    /// `None` for the sentinel.
    pub fn code(self) -> Option<usize> {
        match self {
            TopicLabel::Unassigned => None,
            other => Some(other as usize),
        }
    }

    pub fn from_code(code: usize) -> Option<TopicLabel> {
        Self::ALL.get(code).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            TopicLabel::Operations => "Operations/Delays/Procedures",
            TopicLabel::Fares => "SmarTrip Card/Fares",
            TopicLabel::CustomerService => "Customer Service",
            TopicLabel::Cleanliness => "Cleanliness/Maintenance",
            TopicLabel::InformationProvision => "Information Provision",
            TopicLabel::UnsafeDriving => "Unsafe Driving",
            TopicLabel::General => "General",
            TopicLabel::RouteSuggestions => "Route Suggestions",
            TopicLabel::FareEvasion => "Fare Evasion",
            TopicLabel::Crowding => "Crowding",
            TopicLabel::Security => "Crime/Harassment/Security",
            TopicLabel::Unassigned => "Unassigned",
        }
    }

    /// Canonical names of the 11 labels in code order.
    pub fn names() -> Vec<String> {
        Self::ALL.iter().map(|l| l.name().to_string()).collect()
    }
}

impl fmt::Display for TopicLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TopicLabel {
    type Err = Error;

    /// Accepts canonical names case-insensitively, ignoring spaces around `/`.
    fn from_str(s: &str) -> Result<Self> {
        let norm = |x: &str| {
            x.split('/')
                .map(|p| p.trim().to_ascii_lowercase())
                .collect::<Vec<_>>()
                .join("/")
        };
        let wanted = norm(s);
        Self::ALL
            .iter()
            .copied()
            .chain(std::iter::once(TopicLabel::Unassigned))
            .find(|l| norm(l.name()) == wanted)
            .ok_or_else(|| Error::UnknownLabel(s.to_string()))
    }
}

impl Serialize for TopicLabel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for TopicLabel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

const BUNDLED_CATEGORIES: &str = include_str!("../../data/problem_categories.txt");

/// The CRM problem-category vocabulary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CategoryVocabulary {
    names: BTreeSet<String>,
}

impl CategoryVocabulary {
    /// The bundled 61-entry list.
    pub fn bundled() -> Self {
        Self::from_lines(BUNDLED_CATEGORIES)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::from_lines(&text))
    }

    pub fn from_lines(text: &str) -> Self {
        let names = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_string)
            .collect();
        Self { names }
    }

    pub fn contains(&self, name: &str) -> bool {
        self.names.contains(name)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.names.iter().map(String::as_str)
    }
}

/// A row or line a parser refused, with a human-readable reason.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reject {
    pub row: usize,
    pub reason: String,
}

/// Output of a corpus parser.
///
/// `records.len() + rejects.len() + filtered` equals the number of input rows.
#[derive(Debug, Clone, Default)]
pub struct ParseOutcome {
    pub records: Vec<FeedbackRecord>,
    pub rejects: Vec<Reject>,
    /// Well-formed rows dropped by a filter (e.g. tweets mentioning no handle).
    pub filtered: usize,
}

impl ParseOutcome {
    pub fn input_rows(&self) -> usize {
        self.records.len() + self.rejects.len() + self.filtered
    }
}

/// Parse an ISO-8601 timestamp (RFC 3339, naive date-time treated as UTC, or
/// bare date), falling back to `fallback` as a chrono format string.
pub fn parse_timestamp(raw: &str, fallback: Option<&str>) -> Option<DateTime<Utc>> {
    let raw = raw.trim();
    if let Ok(t) = DateTime::parse_from_rfc3339(raw) {
        return Some(t.with_timezone(&Utc));
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M"] {
        if let Ok(t) = NaiveDateTime::parse_from_str(raw, fmt) {
            return Some(Utc.from_utc_datetime(&t));
        }
    }
    if let Ok(d) = NaiveDate::parse_from_str(raw, "%Y-%m-%d") {
        return Some(Utc.from_utc_datetime(&d.and_hms_opt(0, 0, 0)?));
    }
    let fmt = fallback?;
    if let Ok(t) = DateTime::parse_from_str(raw, fmt) {
        return Some(t.with_timezone(&Utc));
    }
    if let Ok(t) = NaiveDateTime::parse_from_str(raw, fmt) {
        return Some(Utc.from_utc_datetime(&t));
    }
    NaiveDate::parse_from_str(raw, fmt)
        .ok()
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .map(|t| Utc.from_utc_datetime(&t))
}

/// Records as JSON lines, one object per line.
pub fn write_records_jsonl(path: &Path, records: &[FeedbackRecord]) -> Result<()> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_records_jsonl(path: &Path) -> Result<Vec<FeedbackRecord>> {
    read_jsonl(path)
}

pub(crate) fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}
