//! A synthetic transit-agency feedback corpus for demos and end-to-end tests.
//!
//! Texts are stitched from per-topic keyword phrases, mention catalog assets and
//! carry sentiment words, so every pipeline stage has something to find. The
//! generating topic of each record is returned as ground truth.

use std::collections::HashMap;

use chrono::{Datelike, Duration, NaiveDate, TimeZone, Utc, Weekday};
use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{AssetCatalog, Channel, FeedbackRecord, LineEntry, Mode, NameGenderTable, RidershipSeries, RouteEntry, StationEntry, TopicLabel, VehicleRange};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, seeded, SeededRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DemoConfig {
    pub n_records: usize,
    pub start: NaiveDate,
    pub days: u32,
    /// Share of records that arrive as tweets rather than CRM tickets.
    pub twitter_share: f64,
    /// Probability of mixing in a phrase from another topic.
    pub noise: f64,
    pub seed: u64,
}

impl Default for DemoConfig {
    fn default() -> Self {
        Self {
            n_records: 3000,
            start: NaiveDate::from_ymd_opt(2022, 1, 1).unwrap(),
            days: 120,
            twitter_share: 0.3,
            noise: 0.25,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DemoBundle {
    pub records: Vec<FeedbackRecord>,
    /// Generating topic of each record.
    pub truth: Vec<TopicLabel>,
    pub catalog: AssetCatalog,
    pub ridership: RidershipSeries,
    pub names: NameGenderTable,
}

struct TopicSpec {
    label: TopicLabel,
    weight: f64,
    phrases: &'static [&'static str],
    categories: &'static [&'static str],
    /// Probability that the record mentions a bus asset rather than a rail one.
    bus_share: f64,
    /// Probability of a positive rather than negative sentiment word.
    positive: f64,
}

const TOPICS: &[TopicSpec] = &[
    TopicSpec {
        label: TopicLabel::Operations,
        weight: 0.24,
        phrases: &[
            "minutes late", "late for work", "never showed", "bus never came", "failed to stop", "didn't stop",
            "two buses together", "kept going past the stop", "scheduled time", "minutes early", "people waiting",
            "next stop skipped", "departed early",
        ],
        categories: &["Delays", "Did Not Stop", "No Show", "Following Procedures", "Early", "Service Disruption", "Door Closing"],
        bus_share: 0.7,
        positive: 0.05,
    },
    TopicSpec {
        label: TopicLabel::Fares,
        weight: 0.12,
        phrases: &[
            "smartrip card", "credit card", "card number", "new card", "stored value", "add value", "charged twice",
            "monthly pass", "day pass", "vending machine", "money back", "apple wallet",
        ],
        categories: &["SmarTrip Card", "Fare Value Missing", "Incorrect Fare", "Farebox"],
        bus_share: 0.4,
        positive: 0.1,
    },
    TopicSpec {
        label: TopicLabel::CustomerService,
        weight: 0.12,
        phrases: &[
            "station manager", "commend the driver", "asked the driver", "extremely rude", "job well done",
            "excellent service", "great job", "went beyond", "another passenger", "driver said", "first time",
        ],
        categories: &["Commendation", "Rude Employee", "Unprofessional Behavior", "Passenger Assistance"],
        bus_share: 0.5,
        positive: 0.5,
    },
    TopicSpec {
        label: TopicLabel::Cleanliness,
        weight: 0.11,
        phrases: &[
            "air conditioning", "rail cars", "smells like", "lower level", "escalator broken", "street level",
            "needs cleaning", "degrees outside", "escalator not working", "station entrance", "trash on the floor",
        ],
        categories: &["Maintenance", "Cleaning", "Cooling", "Lighting", "Heat"],
        bus_share: 0.25,
        positive: 0.05,
    },
    TopicSpec {
        label: TopicLabel::InformationProvision,
        weight: 0.09,
        phrases: &[
            "track work", "single tracking", "wait minutes", "next train sign", "app shows wrong time",
            "no announcement", "bus tracker wrong", "display board",
        ],
        categories: &["Inaccurate Information", "Bus Info Display", "Announcements", "Platform Info Display", "Train Info Display"],
        bus_share: 0.45,
        positive: 0.05,
    },
    TopicSpec {
        label: TopicLabel::UnsafeDriving,
        weight: 0.07,
        phrases: &[
            "right lane", "left lane", "left turn", "almost hit", "oncoming traffic", "speed limit", "ran the light",
            "bike lane", "slammed the brakes", "driver cut me off", "hit my car",
        ],
        categories: &["Curbing Bus", "Safety", "Accident"],
        bus_share: 0.95,
        positive: 0.02,
    },
    TopicSpec {
        label: TopicLabel::General,
        weight: 0.07,
        phrases: &[
            "trip planner", "vintage metrobuses", "metropolitan area", "new look", "reserved parking", "parking lot",
            "good morning", "lost and found", "advertising",
        ],
        categories: &["General Information", "Other", "Suggestion", "Trip Planner", "Advertising"],
        bus_share: 0.5,
        positive: 0.4,
    },
    TopicSpec {
        label: TopicLabel::RouteSuggestions,
        weight: 0.05,
        phrases: &[
            "metrobus routes", "new routes", "new metrobus line", "need a new route", "add service", "reroute",
            "add express service", "extend the route",
        ],
        categories: &["Request Additional Service", "Suggestion"],
        bus_share: 0.85,
        positive: 0.3,
    },
    TopicSpec {
        label: TopicLabel::FareEvasion,
        weight: 0.04,
        phrases: &[
            "fare evasion", "without paying", "fare gates", "people jumping", "fare evaders", "jumping turnstiles",
            "don't pay", "walked through the gate",
        ],
        categories: &["Fare Evasion"],
        bus_share: 0.3,
        positive: 0.02,
    },
    TopicSpec {
        label: TopicLabel::Crowding,
        weight: 0.04,
        phrases: &[
            "rush hour", "too many people", "standing room only", "social distancing", "morning rush", "packed train",
            "six car train", "could not board",
        ],
        categories: &["Crowding"],
        bus_share: 0.35,
        positive: 0.02,
    },
    TopicSpec {
        label: TopicLabel::Security,
        weight: 0.05,
        phrases: &[
            "transit police", "police officer", "feel safe", "police presence", "people smoking", "fight broke out",
            "threatened me", "stolen phone",
        ],
        categories: &["Crime", "Harassment", "Security"],
        bus_share: 0.3,
        positive: 0.02,
    },
];

const FILLERS: &[&str] = &["today", "again", "this morning", "this evening", "please", "every day", "why", "really", "yesterday"];
const NEGATIVE: &[&str] = &["terrible", "unacceptable", "awful", "frustrating", "ridiculous", "horrible", "worst", "annoying"];
const POSITIVE: &[&str] = &["thank you", "great", "excellent", "wonderful", "appreciate", "nice", "helpful"];

const ROUTES: &[&str] = &["70", "30", "X2", "S9", "16Y", "52", "90", "A12", "P6", "10A"];
const LINES: &[&str] = &["Red", "Orange", "Blue", "Green", "Yellow", "Silver"];
const STATIONS: &[(&str, &[&str], &[&str])] = &[
    ("Gallery Place-Chinatown", &["Gallery Place"], &["Red", "Green", "Yellow"]),
    ("Metro Center", &[], &["Red", "Orange", "Blue", "Silver"]),
    ("Union Station", &[], &["Red"]),
    ("West Hyattsville", &[], &["Green"]),
    ("Prince George's Plaza", &["PG Plaza"], &["Green"]),
    ("East Falls Church", &[], &["Orange", "Silver"]),
    ("New Carrollton", &[], &["Orange"]),
    ("Archives", &[], &["Green", "Yellow"]),
    ("Huntington", &[], &["Yellow"]),
    ("Rosslyn", &[], &["Orange", "Blue", "Silver"]),
    ("Dupont Circle", &["Dupont"], &["Red"]),
    ("L'Enfant Plaza", &["L'Enfant"], &["Orange", "Blue", "Silver", "Green", "Yellow"]),
];
const NAMES: &[(&str, f64)] = &[
    ("maria", 0.99), ("jennifer", 0.99), ("linda", 0.99), ("susan", 0.99), ("aisha", 0.98), ("emily", 0.99),
    ("sarah", 0.99), ("karen", 0.99), ("nicole", 0.98), ("grace", 0.98), ("james", 0.01), ("john", 0.01),
    ("robert", 0.01), ("michael", 0.01), ("david", 0.01), ("kevin", 0.01), ("marcus", 0.01), ("andre", 0.03),
    ("thomas", 0.01), ("brian", 0.01), ("jordan", 0.4), ("taylor", 0.6), ("alex", 0.3), ("casey", 0.55),
    ("morgan", 0.7), ("riley", 0.6),
];
const SURNAMES: &[&str] = &["Smith", "Johnson", "Lee", "Garcia", "Brown", "Nguyen", "Davis", "Martinez", "Wilson", "Clark"];

fn demo_catalog() -> Result<AssetCatalog> {
    let mut c = AssetCatalog {
        schema_version: super::SCHEMA_VERSION,
        routes: ROUTES
            .iter()
            .map(|r| RouteEntry {
                id: r.to_string(),
                aliases: vec![format!("route {r}")],
            })
            .collect(),
        stations: STATIONS
            .iter()
            .map(|(name, aliases, lines)| StationEntry {
                name: name.to_string(),
                aliases: aliases.iter().map(|a| a.to_string()).collect(),
                lines: lines.iter().map(|l| l.to_string()).collect(),
            })
            .collect(),
        lines: LINES
            .iter()
            .map(|l| LineEntry {
                id: l.to_string(),
                aliases: vec![format!("{l} line")],
                mode: Mode::Rail,
            })
            .collect(),
        vehicle_ranges: vec![
            VehicleRange { low: 1000, high: 7999, mode: Mode::Rail },
            VehicleRange { low: 2000, high: 9999, mode: Mode::Bus },
        ],
    };
    c.validate()?;
    Ok(c)
}

fn demo_ridership(cfg: &DemoConfig, rng: &mut SeededRng) -> Result<RidershipSeries> {
    let mut s = RidershipSeries::new();
    for day in 0..cfg.days {
        let date = cfg.start + Duration::days(day as i64);
        let weekend = matches!(date.weekday(), Weekday::Sat | Weekday::Sun);
        let scale = if weekend { 0.55 } else { 1.0 } * rng.random_range(0.93..1.07);
        s.insert(date, None, (600_000.0 * scale) as u64)?;
        for (i, r) in ROUTES.iter().enumerate() {
            s.insert(date, Some(r), ((4_000 + 900 * i) as f64 * scale) as u64)?;
        }
        for (i, l) in LINES.iter().enumerate() {
            s.insert(date, Some(l), ((45_000 + 9_000 * i) as f64 * scale) as u64)?;
        }
    }
    Ok(s)
}

fn asset_phrase(rng: &mut SeededRng, bus: bool) -> (String, Mode) {
    if bus {
        let r = ROUTES.choose(rng).unwrap();
        let phrase = match rng.random_range(0..3) {
            0 => format!("on the {r} bus"),
            1 => format!("route {r}"),
            _ => format!("the {r} metrobus #{}", rng.random_range(8000..9999)),
        };
        (phrase, Mode::Bus)
    } else {
        let phrase = match rng.random_range(0..3) {
            0 => format!("at {}", STATIONS.choose(rng).unwrap().0),
            1 => format!("on the {} line", LINES.choose(rng).unwrap().to_lowercase()),
            _ => format!("car {}", rng.random_range(1000..2000)),
        };
        (phrase, Mode::Rail)
    }
}

/// Generate the demo corpus and its auxiliary documents. Identical configs give
/// identical output.
pub fn generate_demo(cfg: &DemoConfig) -> Result<DemoBundle> {
    if cfg.n_records == 0 || cfg.days == 0 {
        return Err(Error::invalid("demo corpus needs at least one record and one day"));
    }
    if !(0.0..=1.0).contains(&cfg.twitter_share) || !(0.0..=1.0).contains(&cfg.noise) {
        return Err(Error::invalid("twitter_share and noise must lie in [0, 1]"));
    }
    let mut rng = seeded(derive_seed(cfg.seed, "demo"));
    let weights: Vec<f64> = TOPICS.iter().map(|t| t.weight).collect();
    let base = Utc.from_utc_datetime(&cfg.start.and_hms_opt(0, 0, 0).unwrap());
    let mut records = Vec::with_capacity(cfg.n_records);
    let mut truth = Vec::with_capacity(cfg.n_records);
    for i in 0..cfg.n_records {
        let spec = &TOPICS[super::synth::sample_categorical(&mut rng, &weights)];
        let mut parts: Vec<String> = Vec::new();
        let n_phrases = rng.random_range(2..=3);
        for _ in 0..n_phrases {
            parts.push(spec.phrases.choose(&mut rng).unwrap().to_string());
        }
        if rng.random_bool(cfg.noise) {
            let other = TOPICS.choose(&mut rng).unwrap();
            parts.push(other.phrases.choose(&mut rng).unwrap().to_string());
        }
        let mut mode_hint = None;
        if rng.random_bool(0.6) {
            let bus = rng.random_bool(spec.bus_share);
            let (phrase, mode) = asset_phrase(&mut rng, bus);
            parts.push(phrase);
            mode_hint = Some(mode);
        }
        if rng.random_bool(0.7) {
            let pool = if rng.random_bool(spec.positive) { POSITIVE } else { NEGATIVE };
            parts.push(pool.choose(&mut rng).unwrap().to_string());
        }
        if rng.random_bool(0.5) {
            parts.push(FILLERS.choose(&mut rng).unwrap().to_string());
        }
        // keep the first phrase first, shuffle the rest lightly
        let tail = parts.len() - 1;
        if tail > 1 {
            let j = rng.random_range(1..=tail);
            parts.swap(j, tail);
        }
        let twitter = rng.random_bool(cfg.twitter_share);
        let mut text = parts.join(" ");
        if twitter {
            text = format!("@wmata {text}");
        }
        let author = rng.random_bool(0.6).then(|| {
            let (first, _) = NAMES.choose(&mut rng).unwrap();
            let mut first = first.to_string();
            first[..1].make_ascii_uppercase();
            format!("{first} {}", SURNAMES.choose(&mut rng).unwrap())
        });
        let day = rng.random_range(0..cfg.days) as i64;
        let minute = rng.random_range(5 * 60..23 * 60) as i64;
        records.push(FeedbackRecord {
            id: format!("demo-{i:06}"),
            text,
            channel: if twitter { Channel::Twitter } else { Channel::Crm },
            timestamp: base + Duration::days(day) + Duration::minutes(minute),
            problem_category: (!twitter).then(|| spec.categories.choose(&mut rng).unwrap().to_string()),
            mode_hint: if twitter { None } else { mode_hint },
            author,
        });
        truth.push(spec.label);
    }
    let mut aux_rng = seeded(derive_seed(cfg.seed, "demo-ridership"));
    let names: HashMap<String, f64> = NAMES.iter().map(|(n, p)| (n.to_string(), *p)).collect();
    Ok(DemoBundle {
        records,
        truth,
        catalog: demo_catalog()?,
        ridership: demo_ridership(cfg, &mut aux_rng)?,
        names: NameGenderTable::new(names, 0.9)?,
    })
}
