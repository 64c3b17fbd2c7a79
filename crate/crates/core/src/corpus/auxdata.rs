//! JSON documents for the asset catalog, ridership series and name table.
//! Each carries `"schema_version": 1`.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::Mode;
use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

fn check_version(found: u32, what: &str) -> Result<()> {
    if found == SCHEMA_VERSION {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "{what}: unsupported schema_version {found} (expected {SCHEMA_VERSION})"
        )))
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn normalize_alias(a: &str) -> String {
    a.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteEntry {
    pub id: String,
    #[serde(default)]
    pub aliases: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationEntry {
    pub name: String,
    #[serde(default)]
    pub aliases: Vec<String>,
    /// Line ids serving the station.
    #[serde(default)]
    pub lines: Vec<String>,
}

/// A named rail line, usually a color.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineEntry {
    pub id: String,
    #[serde(default)]
    pub aliases: Vec<String>,
    #[serde(default = "rail")]
    pub mode: Mode,
}

fn rail() -> Mode {
    Mode::Rail
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VehicleRange {
    pub low: u64,
    pub high: u64,
    pub mode: Mode,
}

/// Routes, stations, lines and vehicle-number ranges of an agency.
///
/// After [`AssetCatalog::validate`] every alias list contains the entry's own
/// name and all aliases are lowercase with single spaces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssetCatalog {
    pub schema_version: u32,
    #[serde(default)]
    pub routes: Vec<RouteEntry>,
    #[serde(default)]
    pub stations: Vec<StationEntry>,
    #[serde(default)]
    pub lines: Vec<LineEntry>,
    #[serde(default)]
    pub vehicle_ranges: Vec<VehicleRange>,
}

impl AssetCatalog {
    pub fn load(path: &Path) -> Result<Self> {
        let mut c: AssetCatalog = read_json(path)?;
        c.validate()?;
        Ok(c)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mut c: AssetCatalog = serde_json::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&mut self) -> Result<()> {
        check_version(self.schema_version, "asset catalog")?;
        let fix = |name: &str, aliases: &mut Vec<String>| {
            aliases.push(name.to_string());
            let mut out: Vec<String> = aliases.iter().map(|a| normalize_alias(a)).filter(|a| !a.is_empty()).collect();
            out.sort();
            out.dedup();
            *aliases = out;
        };
        for r in &mut self.routes {
            fix(&r.id, &mut r.aliases);
        }
        for s in &mut self.stations {
            fix(&s.name, &mut s.aliases);
        }
        for l in &mut self.lines {
            fix(&l.id, &mut l.aliases);
        }
        for r in &self.vehicle_ranges {
            if r.low > r.high {
                return Err(Error::invalid(format!("vehicle range {}..{} is inverted", r.low, r.high)));
            }
        }
        for (i, a) in self.vehicle_ranges.iter().enumerate() {
            for b in &self.vehicle_ranges[i + 1..] {
                if a.mode == b.mode && a.low <= b.high && b.low <= a.high {
                    return Err(Error::invalid(format!(
                        "{} vehicle ranges {}..{} and {}..{} overlap",
                        a.mode, a.low, a.high, b.low, b.high
                    )));
                }
            }
        }
        Ok(())
    }

    /// Modes whose vehicle ranges contain `number`.
    pub fn vehicle_modes(&self, number: u64) -> Vec<Mode> {
        let mut modes: Vec<Mode> = self
            .vehicle_ranges
            .iter()
            .filter(|r| r.low <= number && number <= r.high)
            .map(|r| r.mode)
            .collect();
        modes.sort();
        modes.dedup();
        modes
    }

    /// Stable identity of the catalog contents.
    pub fn content_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let json = serde_json::to_vec(self).unwrap_or_default();
        hex::encode(Sha256::digest(&json))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RidershipEntry {
    date: NaiveDate,
    riders: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    group: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RidershipDoc {
    schema_version: u32,
    entries: Vec<RidershipEntry>,
}

/// Daily rider counts, system-wide (`group = None`) and optionally per group
/// (a route, line or mode name).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RidershipSeries {
    series: BTreeMap<Option<String>, BTreeMap<NaiveDate, u64>>,
}

impl RidershipSeries {
    pub fn new() -> Self {
        Self::default()
    }

    /// Fails when `(date, group)` is already present.
    pub fn insert(&mut self, date: NaiveDate, group: Option<&str>, riders: u64) -> Result<()> {
        let slot = self.series.entry(group.map(str::to_string)).or_default();
        if slot.insert(date, riders).is_some() {
            return Err(Error::invalid(format!(
                "duplicate ridership entry for {date} (group {})",
                group.unwrap_or("system")
            )));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let doc: RidershipDoc = read_json(path)?;
        Self::from_doc(doc)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_doc(serde_json::from_str(text)?)
    }

    fn from_doc(doc: RidershipDoc) -> Result<Self> {
        check_version(doc.schema_version, "ridership series")?;
        let mut s = Self::new();
        for e in doc.entries {
            s.insert(e.date, e.group.as_deref(), e.riders)?;
        }
        Ok(s)
    }

    pub fn to_json(&self) -> Result<String> {
        let entries = self
            .series
            .iter()
            .flat_map(|(g, days)| {
                days.iter().map(move |(d, r)| RidershipEntry {
                    date: *d,
                    riders: *r,
                    group: g.clone(),
                })
            })
            .collect();
        Ok(serde_json::to_string_pretty(&RidershipDoc {
            schema_version: SCHEMA_VERSION,
            entries,
        })?)
    }

    pub fn riders(&self, date: NaiveDate, group: Option<&str>) -> Option<u64> {
        self.series.get(&group.map(str::to_string))?.get(&date).copied()
    }

    pub fn has_group(&self, group: &str) -> bool {
        self.series.contains_key(&Some(group.to_string()))
    }

    /// All days of one series in date order.
    pub fn days(&self, group: Option<&str>) -> impl Iterator<Item = (NaiveDate, u64)> + '_ {
        self.series
            .get(&group.map(str::to_string))
            .into_iter()
            .flat_map(|m| m.iter().map(|(d, r)| (*d, *r)))
    }

    pub fn date_range(&self) -> Option<(NaiveDate, NaiveDate)> {
        let days = self.series.get(&None)?;
        Some((*days.keys().next()?, *days.keys().next_back()?))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct NameTableDoc {
    schema_version: u32,
    threshold: f64,
    entries: HashMap<String, f64>,
}

/// First-name → probability the bearer is female, with an abstention threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct NameGenderTable {
    entries: HashMap<String, f64>,
    threshold: f64,
}

impl NameGenderTable {
    pub fn new(entries: HashMap<String, f64>, threshold: f64) -> Result<Self> {
        if !(0.5..=1.0).contains(&threshold) {
            return Err(Error::invalid(format!("name table threshold {threshold} outside [0.5, 1]")));
        }
        let mut out = HashMap::with_capacity(entries.len());
        for (name, p) in entries {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::invalid(format!("p_female for `{name}` is {p}, outside [0, 1]")));
            }
            out.insert(name.trim().to_lowercase(), p);
        }
        Ok(Self { entries: out, threshold })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let doc: NameTableDoc = read_json(path)?;
        check_version(doc.schema_version, "name table")?;
        Self::new(doc.entries, doc.threshold)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: NameTableDoc = serde_json::from_str(text)?;
        check_version(doc.schema_version, "name table")?;
        Self::new(doc.entries, doc.threshold)
    }

    pub fn to_json(&self) -> Result<String> {
        let entries: BTreeMap<_, _> = self.entries.iter().collect();
        Ok(serde_json::to_string_pretty(&serde_json::json!({
            "schema_version": SCHEMA_VERSION,
            "threshold": self.threshold,
            "entries": entries,
        }))?)
    }

    pub fn p_female(&self, first_name: &str) -> Option<f64> {
        self.entries.get(&first_name.to_lowercase()).copied()
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_aliases_are_normalized() {
        let c = AssetCatalog::from_json(
            r#"{"schema_version":1,
                "stations":[{"name":"West  Hyattsville","aliases":["W Hyattsville"]}],
                "lines":[{"id":"Green","aliases":["Green Line"]}]}"#,
        )
        .unwrap();
        assert_eq!(c.stations[0].aliases, ["w hyattsville", "west hyattsville"]);
        assert_eq!(c.lines[0].aliases, ["green", "green line"]);
        assert_eq!(c.lines[0].mode, Mode::Rail);
    }

    #[test]
    fn overlapping_ranges_in_one_mode_are_rejected() {
        let err = AssetCatalog::from_json(
            r#"{"schema_version":1,"vehicle_ranges":[
                {"low":1000,"high":1999,"mode":"Rail"},{"low":1500,"high":2500,"mode":"Rail"}]}"#,
        );
        assert!(err.is_err());
        let ok = AssetCatalog::from_json(
            r#"{"schema_version":1,"vehicle_ranges":[
                {"low":1000,"high":1999,"mode":"Rail"},{"low":1500,"high":2500,"mode":"Bus"}]}"#,
        )
        .unwrap();
        assert_eq!(ok.vehicle_modes(1600), [Mode::Bus, Mode::Rail]);
        assert_eq!(ok.vehicle_modes(999), []);
    }

    #[test]
    fn wrong_schema_version() {
        assert!(AssetCatalog::from_json(r#"{"schema_version":2}"#).is_err());
    }

    #[test]
    fn ridership_round_trip_and_duplicates() {
        let d = NaiveDate::from_ymd_opt(2022, 1, 1).unwrap();
        let mut s = RidershipSeries::new();
        s.insert(d, None, 500_000).unwrap();
        s.insert(d, Some("70"), 9_000).unwrap();
        assert!(s.insert(d, None, 1).is_err());
        let back = RidershipSeries::from_json(&s.to_json().unwrap()).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.riders(d, Some("70")), Some(9_000));
        assert!(back.has_group("70"));
    }

    #[test]
    fn name_table_validation() {
        let mut m = HashMap::new();
        m.insert("Alex".to_string(), 0.4);
        let t = NameGenderTable::new(m.clone(), 0.9).unwrap();
        assert_eq!(t.p_female("alex"), Some(0.4));
        assert!(NameGenderTable::new(m.clone(), 0.3).is_err());
        m.insert("x".into(), 1.5);
        assert!(NameGenderTable::new(m, 0.9).is_err());
        let back = NameGenderTable::from_json(&t.to_json().unwrap()).unwrap();
        assert_eq!(back, t);
    }
}
