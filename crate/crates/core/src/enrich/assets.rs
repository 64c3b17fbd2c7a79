//! Route, station, line and vehicle mentions matched against an asset catalog.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{AssetCatalog, Mode};
use crate::textprep::{tokenize, tokenize_with, TokenizerConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AssetKind {
    Route,
    Station,
    Vehicle,
    Line,
}

impl AssetKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AssetKind::Route => "Route",
            AssetKind::Station => "Station",
            AssetKind::Vehicle => "Vehicle",
            AssetKind::Line => "Line",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Asset {
    pub kind: AssetKind,
    pub id: String,
    /// Mode this asset is evidence for.
    pub mode: Mode,
}

impl std::fmt::Display for Asset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.kind.as_str(), self.id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssetMatch {
    pub mode: Mode,
    /// In order of first mention, without duplicates.
    pub assets: Vec<Asset>,
}

/// Words that mark a nearby number as a vehicle id, with the mode they imply.
const VEHICLE_CUES: &[(&str, Option<Mode>)] = &[
    ("car", Some(Mode::Rail)),
    ("cars", Some(Mode::Rail)),
    ("railcar", Some(Mode::Rail)),
    ("train", Some(Mode::Rail)),
    ("bus", Some(Mode::Bus)),
    ("metrobus", Some(Mode::Bus)),
    ("vehicle", None),
    ("number", None),
    ("no", None),
];

/// Words that must sit next to a bare number for it to count as a route.
const ROUTE_CUES: &[&str] = &["bus", "metrobus", "route", "rt", "line"];

/// Compiled catalog aliases for repeated matching.
#[derive(Debug, Clone)]
pub struct AssetMatcher {
    aliases: HashMap<Vec<String>, Vec<Asset>>,
    max_len: usize,
    catalog: AssetCatalog,
}

fn alias_tokens(alias: &str) -> Vec<String> {
    let cfg = TokenizerConfig {
        strip_urls: false,
        strip_handles: false,
    };
    tokenize_with(alias, cfg).into_inner()
}

fn is_number(t: &str) -> bool {
    !t.is_empty() && t.bytes().all(|b| b.is_ascii_digit())
}

impl AssetMatcher {
    pub fn new(catalog: &AssetCatalog) -> Self {
        let mut aliases: HashMap<Vec<String>, Vec<Asset>> = HashMap::new();
        let mut add = |alias: &str, asset: Asset| {
            let key = alias_tokens(alias);
            if key.is_empty() {
                return;
            }
            let slot = aliases.entry(key).or_default();
            if !slot.contains(&asset) {
                slot.push(asset);
            }
        };
        for r in &catalog.routes {
            for a in r.aliases.iter().chain(std::iter::once(&r.id)) {
                add(a, Asset { kind: AssetKind::Route, id: r.id.clone(), mode: Mode::Bus });
            }
        }
        for s in &catalog.stations {
            for a in s.aliases.iter().chain(std::iter::once(&s.name)) {
                add(a, Asset { kind: AssetKind::Station, id: s.name.clone(), mode: Mode::Rail });
            }
        }
        for l in &catalog.lines {
            for a in l.aliases.iter().chain(std::iter::once(&l.id)) {
                add(a, Asset { kind: AssetKind::Line, id: l.id.clone(), mode: l.mode });
            }
        }
        let max_len = aliases.keys().map(Vec::len).max().unwrap_or(1);
        Self {
            aliases,
            max_len,
            catalog: catalog.clone(),
        }
    }

    /// Left-to-right scan taking the longest alias starting at each position.
    ///
    /// A bare numeric route alias only counts next to a route cue ("the 70
    /// bus"), so times and counts are not read as routes. A number that matches
    /// no alias is a vehicle when it lies in a catalog range and one of the two
    /// preceding tokens is a vehicle cue ("car 7507", "metrobus #6032").
    pub fn match_text(&self, text: &str) -> AssetMatch {
        let tokens = tokenize(text).into_inner();
        let mut assets: Vec<Asset> = Vec::new();
        let mut push = |a: &Asset| {
            if !assets.contains(a) {
                assets.push(a.clone());
            }
        };
        let mut i = 0;
        'scan: while i < tokens.len() {
            for len in (1..=self.max_len.min(tokens.len() - i)).rev() {
                let key = &tokens[i..i + len];
                let Some(found) = self.aliases.get(key) else { continue };
                let cued = len > 1 || !is_number(&key[0]) || self.route_cue_near(&tokens, i);
                let usable: Vec<&Asset> =
                    found.iter().filter(|a| cued || a.kind != AssetKind::Route).collect();
                if usable.is_empty() {
                    continue;
                }
                usable.into_iter().for_each(&mut push);
                i += len;
                continue 'scan;
            }
            if let Some(v) = self.vehicle_at(&tokens, i) {
                push(&v);
            }
            i += 1;
        }
        AssetMatch {
            mode: vote_mode(&assets),
            assets,
        }
    }

    fn route_cue_near(&self, tokens: &[String], i: usize) -> bool {
        let near = |j: Option<usize>| j.and_then(|j| tokens.get(j)).is_some_and(|t| ROUTE_CUES.contains(&t.as_str()));
        near(i.checked_sub(1)) || near(Some(i + 1))
    }

    fn vehicle_at(&self, tokens: &[String], i: usize) -> Option<Asset> {
        let tok = &tokens[i];
        if !is_number(tok) {
            return None;
        }
        let number: u64 = tok.parse().ok()?;
        let cue = tokens[i.saturating_sub(2)..i]
            .iter()
            .rev()
            .find_map(|t| VEHICLE_CUES.iter().find(|(w, _)| *w == t.as_str()))?;
        let modes = self.catalog.vehicle_modes(number);
        let mode = match (modes.as_slice(), cue.1) {
            ([], _) => return None,
            ([only], _) => *only,
            (many, Some(hint)) if many.contains(&hint) => hint,
            _ => Mode::Generic,
        };
        Some(Asset {
            kind: AssetKind::Vehicle,
            id: number.to_string(),
            mode,
        })
    }
}

/// Rail when rail evidence outnumbers bus evidence, Bus in the opposite case,
/// Generic on a tie or with no evidence.
pub fn vote_mode(assets: &[Asset]) -> Mode {
    let rail = assets.iter().filter(|a| a.mode == Mode::Rail).count();
    let bus = assets.iter().filter(|a| a.mode == Mode::Bus).count();
    match rail.cmp(&bus) {
        std::cmp::Ordering::Greater => Mode::Rail,
        std::cmp::Ordering::Less => Mode::Bus,
        std::cmp::Ordering::Equal => Mode::Generic,
    }
}

pub fn match_assets(text: &str, catalog: &AssetCatalog) -> AssetMatch {
    AssetMatcher::new(catalog).match_text(text)
}
