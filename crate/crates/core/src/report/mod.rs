//! Reporting artifacts built from enriched records: topic × sentiment and
//! topic × mode tables, ridership-normalized complaint rates, trailing moving
//! averages, and their CSV/JSON/SVG renderings.

mod manifest;
mod svg;

use std::collections::BTreeMap;
use std::path::Path;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Mode, RidershipSeries, TopicLabel};
use crate::enrich::{AssetKind, EnrichedRecord, Sentiment};
use crate::error::{Error, Result};
use crate::eval::ConfusionMatrix;

pub use manifest::{sha256_bytes, sha256_file, ArtifactEntry, Manifest, RunDir, MANIFEST_FILE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ColumnDim {
    Sentiment,
    Mode,
}

impl ColumnDim {
    pub fn columns(self) -> Vec<String> {
        match self {
            ColumnDim::Sentiment => Sentiment::ALL.iter().map(|s| s.as_str().to_string()).collect(),
            ColumnDim::Mode => Mode::ALL.iter().map(|m| m.as_str().to_string()).collect(),
        }
    }

    fn column_of(self, r: &EnrichedRecord) -> usize {
        match self {
            ColumnDim::Sentiment => r.sentiment as usize,
            ColumnDim::Mode => Mode::ALL.iter().position(|m| *m == r.mode).unwrap_or(2),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggRow {
    pub key: String,
    pub counts: Vec<u64>,
    pub total: u64,
    /// Row percentages, `100 · count / total`.
    pub shares: Vec<f64>,
}

impl AggRow {
    fn new(key: String, counts: Vec<u64>) -> Self {
        let total: u64 = counts.iter().sum();
        let shares = counts
            .iter()
            .map(|c| if total == 0 { 0.0 } else { 100.0 * *c as f64 / total as f64 })
            .collect();
        Self { key, counts, total, shares }
    }
}

pub const TOTAL_ROW: &str = "Total (All Topics)";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregationTable {
    pub column_dim: ColumnDim,
    pub columns: Vec<String>,
    /// Topics with at least one record, in topic-code order.
    pub rows: Vec<AggRow>,
    pub totals: AggRow,
    /// Topics without records.
    pub omitted: Vec<String>,
}

/// Count records by topic and the chosen column dimension.
pub fn aggregate(records: &[EnrichedRecord], column_dim: ColumnDim) -> AggregationTable {
    let columns = column_dim.columns();
    let mut counts: BTreeMap<TopicLabel, Vec<u64>> = BTreeMap::new();
    for r in records {
        counts.entry(r.topic).or_insert_with(|| vec![0; columns.len()])[column_dim.column_of(r)] += 1;
    }
    let mut totals = vec![0; columns.len()];
    for c in counts.values() {
        for (t, v) in totals.iter_mut().zip(c) {
            *t += v;
        }
    }
    let omitted = TopicLabel::ALL
        .iter()
        .filter(|t| !counts.contains_key(t))
        .map(|t| t.name().to_string())
        .collect();
    AggregationTable {
        column_dim,
        rows: counts.into_iter().map(|(t, c)| AggRow::new(t.name().to_string(), c)).collect(),
        totals: AggRow::new(TOTAL_ROW.to_string(), totals),
        columns,
        omitted,
    }
}

impl AggregationTable {
    /// `topic, <col>…, total, <col>_pct…`, then the totals row.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["topic".to_string()];
        header.extend(self.columns.iter().cloned());
        header.push("total".into());
        header.extend(self.columns.iter().map(|c| format!("{c}_pct")));
        w.write_record(&header)?;
        if !self.rows.is_empty() {
            for row in self.rows.iter().chain(std::iter::once(&self.totals)) {
                let mut rec = vec![row.key.clone()];
                rec.extend(row.counts.iter().map(u64::to_string));
                rec.push(row.total.to_string());
                rec.extend(row.shares.iter().map(f64::to_string));
                w.write_record(&rec)?;
            }
        }
        let bytes = w.into_inner().map_err(|e| Error::Stream(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }

    pub fn from_csv(text: &str, column_dim: ColumnDim) -> Result<Self> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let header = r.headers()?.clone();
        let c = (header.len().saturating_sub(2)) / 2;
        if header.len() != 2 + 2 * c || header.get(0) != Some("topic") {
            return Err(Error::invalid("aggregation CSV header is malformed"));
        }
        let columns: Vec<String> = header.iter().skip(1).take(c).map(String::from).collect();
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let counts = rec
                .iter()
                .skip(1)
                .take(c)
                .map(|v| v.parse::<u64>().map_err(|_| Error::invalid(format!("bad count `{v}`"))))
                .collect::<Result<Vec<_>>>()?;
            rows.push(AggRow::new(rec[0].to_string(), counts));
        }
        let totals = match rows.last() {
            Some(last) if last.key == TOTAL_ROW => rows.pop().unwrap(),
            Some(_) => return Err(Error::invalid("aggregation CSV lacks the totals row")),
            None => AggRow::new(TOTAL_ROW.into(), vec![0; c]),
        };
        let present: Vec<&str> = rows.iter().map(|r| r.key.as_str()).collect();
        let omitted = TopicLabel::ALL
            .iter()
            .map(|t| t.name())
            .filter(|n| !present.contains(n))
            .map(String::from)
            .collect();
        Ok(Self {
            column_dim,
            columns,
            rows,
            totals,
            omitted,
        })
    }

    /// Aligned text with one-decimal percentages and a footer for omitted topics.
    pub fn to_text(&self) -> String {
        let key_w = self
            .rows
            .iter()
            .map(|r| r.key.len())
            .chain([TOTAL_ROW.len(), 5])
            .max()
            .unwrap();
        let mut out = format!("{:<key_w$}", "Topic");
        for c in &self.columns {
            out.push_str(&format!(" {:>16}", c));
        }
        out.push_str(&format!(" {:>8}\n", "Total"));
        for row in self.rows.iter().chain(std::iter::once(&self.totals)) {
            out.push_str(&format!("{:<key_w$}", row.key));
            for (n, s) in row.counts.iter().zip(&row.shares) {
                out.push_str(&format!(" {:>16}", format!("{n} ({s:.1}%)")));
            }
            out.push_str(&format!(" {:>8}\n", row.total));
        }
        if !self.omitted.is_empty() {
            out.push_str(&format!("No records: {}\n", self.omitted.join(", ")));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupBy {
    All,
    Topic,
    Mode,
    Route,
    Line,
    Station,
}

impl std::str::FromStr for GroupBy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "all" | "system" => Ok(GroupBy::All),
            "topic" => Ok(GroupBy::Topic),
            "mode" => Ok(GroupBy::Mode),
            "route" => Ok(GroupBy::Route),
            "line" => Ok(GroupBy::Line),
            "station" => Ok(GroupBy::Station),
            other => Err(Error::invalid(format!("unknown grouping `{other}`"))),
        }
    }
}

/// Groups a record counts toward. Asset groupings count a record once for each
/// distinct asset of that kind it mentions.
pub fn record_groups(r: &EnrichedRecord, by: GroupBy) -> Vec<String> {
    let assets = |kind: AssetKind| {
        let mut ids: Vec<String> = r.assets.iter().filter(|a| a.kind == kind).map(|a| a.id.clone()).collect();
        ids.dedup();
        ids
    };
    match by {
        GroupBy::All => vec!["all".into()],
        GroupBy::Topic => vec![r.topic.name().into()],
        GroupBy::Mode => vec![r.mode.as_str().into()],
        GroupBy::Route => assets(AssetKind::Route),
        GroupBy::Line => assets(AssetKind::Line),
        GroupBy::Station => assets(AssetKind::Station),
    }
}

/// Inclusive date range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DateWindow {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DateWindow {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Result<Self> {
        if end < start {
            return Err(Error::invalid(format!("window end {end} precedes start {start}")));
        }
        Ok(Self { start, end })
    }

    pub fn contains(&self, d: NaiveDate) -> bool {
        self.start <= d && d <= self.end
    }

    pub fn days(&self) -> impl Iterator<Item = NaiveDate> + '_ {
        self.start.iter_days().take_while(|d| *d <= self.end)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRate {
    pub group: String,
    pub complaints: u64,
    pub riders: u64,
    /// Complaints per million riders; `None` when ridership is zero.
    pub rate: Option<f64>,
    /// True when the group's own ridership was used instead of system totals.
    pub group_ridership: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flag: Option<String>,
}

pub fn per_million(complaints: u64, riders: u64) -> Option<f64> {
    (riders > 0).then(|| complaints as f64 / (riders as f64 / 1e6))
}

fn window_riders(ridership: &RidershipSeries, window: &DateWindow, group: Option<&str>) -> Result<u64> {
    window.days().try_fold(0u64, |acc, d| {
        ridership
            .riders(d, group)
            .map(|r| acc + r)
            .ok_or_else(|| Error::invalid(format!("ridership{} has no entry for {d}", group.map(|g| format!(" for {g}")).unwrap_or_default())))
    })
}

/// Complaints in `window` per million riders, per group, sorted by group name.
/// With `group_ridership`, groups present in the ridership series are divided
/// by their own riders; every other group uses system totals.
pub fn complaints_per_million(
    records: &[EnrichedRecord],
    ridership: &RidershipSeries,
    window: &DateWindow,
    by: GroupBy,
    group_ridership: bool,
) -> Result<Vec<GroupRate>> {
    let system = window_riders(ridership, window, None)?;
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    if by == GroupBy::All {
        counts.insert("all".into(), 0);
    }
    for r in records.iter().filter(|r| window.contains(r.record.timestamp.date_naive())) {
        for g in record_groups(r, by) {
            *counts.entry(g).or_default() += 1;
        }
    }
    counts
        .into_iter()
        .map(|(group, complaints)| {
            let own = group_ridership && by != GroupBy::All && ridership.has_group(&group);
            let riders = if own { window_riders(ridership, window, Some(&group))? } else { system };
            let rate = per_million(complaints, riders);
            Ok(GroupRate {
                flag: rate.is_none().then(|| "undefined rate: zero ridership".to_string()),
                group,
                complaints,
                riders,
                rate,
                group_ridership: own,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedSeries {
    pub group: String,
    /// Strictly increasing dates.
    pub points: Vec<(NaiveDate, f64)>,
    /// Trailing window of the moving average that produced this series.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window_days: Option<usize>,
}

/// Daily complaints per million riders for each group over `window`.
/// Days with zero ridership are skipped.
pub fn daily_rates(
    records: &[EnrichedRecord],
    ridership: &RidershipSeries,
    window: &DateWindow,
    by: GroupBy,
    group_ridership: bool,
) -> Result<Vec<NormalizedSeries>> {
    let mut per_day: BTreeMap<String, BTreeMap<NaiveDate, u64>> = BTreeMap::new();
    if by == GroupBy::All {
        per_day.insert("all".into(), BTreeMap::new());
    }
    for r in records {
        let d = r.record.timestamp.date_naive();
        if window.contains(d) {
            for g in record_groups(r, by) {
                *per_day.entry(g).or_default().entry(d).or_default() += 1;
            }
        }
    }
    per_day
        .into_par_iter()
        .map(|(group, counts)| {
            let own = group_ridership && by != GroupBy::All && ridership.has_group(&group);
            let key = own.then_some(group.as_str());
            let mut points = Vec::new();
            for d in window.days() {
                let riders = ridership
                    .riders(d, key)
                    .ok_or_else(|| Error::invalid(format!("ridership has no entry for {d}")))?;
                if let Some(v) = per_million(counts.get(&d).copied().unwrap_or(0), riders) {
                    points.push((d, v));
                }
            }
            Ok(NormalizedSeries {
                group,
                points,
                window_days: None,
            })
        })
        .collect()
}

/// Trailing mean over `window` consecutive points. The first `window − 1`
/// points are emitted only when `min_periods` allows partial windows.
pub fn moving_average(series: &NormalizedSeries, window: usize, min_periods: Option<usize>) -> Result<NormalizedSeries> {
    if window == 0 {
        return Err(Error::invalid("moving-average window must be at least 1"));
    }
    let need = min_periods.unwrap_or(window).clamp(1, window);
    let points = (0..series.points.len())
        .filter_map(|i| {
            let lo = (i + 1).saturating_sub(window);
            let slice = &series.points[lo..=i];
            (slice.len() >= need).then(|| (series.points[i].0, slice.iter().map(|p| p.1).sum::<f64>() / slice.len() as f64))
        })
        .collect();
    Ok(NormalizedSeries {
        group: series.group.clone(),
        points,
        window_days: Some(window),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArtifactFormat {
    Csv,
    Json,
    Svg,
}

impl ArtifactFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ArtifactFormat::Csv => "csv",
            ArtifactFormat::Json => "json",
            ArtifactFormat::Svg => "svg",
        }
    }
}

impl std::str::FromStr for ArtifactFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(ArtifactFormat::Csv),
            "json" => Ok(ArtifactFormat::Json),
            "svg" => Ok(ArtifactFormat::Svg),
            other => Err(Error::UnsupportedFormat(other.to_string())),
        }
    }
}

/// Something [`emit`] can write.
pub trait Artifact {
    fn to_csv(&self) -> Result<String>;
    fn to_json(&self) -> Result<String>;
    fn to_svg(&self) -> Result<String>;
}

impl Artifact for AggregationTable {
    fn to_csv(&self) -> Result<String> {
        AggregationTable::to_csv(self)
    }

    fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    fn to_svg(&self) -> Result<String> {
        Ok(svg::stacked_bars(self))
    }
}

/// Rates for one grouping, rendered as a ranked bar chart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateTable {
    pub group_by: GroupBy,
    pub window: DateWindow,
    pub rates: Vec<GroupRate>,
}

impl Artifact for RateTable {
    fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["group", "complaints", "riders", "per_million", "group_ridership", "flag"])?;
        for r in &self.rates {
            w.write_record([
                r.group.clone(),
                r.complaints.to_string(),
                r.riders.to_string(),
                r.rate.map(|v| v.to_string()).unwrap_or_default(),
                r.group_ridership.to_string(),
                r.flag.clone().unwrap_or_default(),
            ])?;
        }
        csv_string(w)
    }

    fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    fn to_svg(&self) -> Result<String> {
        Ok(svg::rate_bars(self))
    }
}

/// Several series over the same axis, one line each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesSet {
    pub title: String,
    pub series: Vec<NormalizedSeries>,
}

impl Artifact for SeriesSet {
    /// Long format: `group,date,value`.
    fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["group", "date", "value"])?;
        for s in &self.series {
            for (d, v) in &s.points {
                w.write_record([s.group.clone(), d.to_string(), v.to_string()])?;
            }
        }
        csv_string(w)
    }

    fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    fn to_svg(&self) -> Result<String> {
        Ok(svg::line_chart(self, &self.to_csv()?))
    }
}

impl Artifact for ConfusionMatrix {
    fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["true\\predicted".to_string()];
        header.extend(self.labels.iter().cloned());
        w.write_record(&header)?;
        for (label, row) in self.labels.iter().zip(&self.counts) {
            let mut rec = vec![label.clone()];
            rec.extend(row.iter().map(u64::to_string));
            w.write_record(&rec)?;
        }
        csv_string(w)
    }

    fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    fn to_svg(&self) -> Result<String> {
        Ok(svg::heatmap(self))
    }
}

fn csv_string(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Stream(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

/// Render `artifact` in `format` and write it to `path`.
pub fn emit(artifact: &dyn Artifact, format: ArtifactFormat, path: &Path) -> Result<()> {
    let body = match format {
        ArtifactFormat::Csv => artifact.to_csv()?,
        ArtifactFormat::Json => artifact.to_json()?,
        ArtifactFormat::Svg => artifact.to_svg()?,
    };
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, body).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::corpus::{Channel, FeedbackRecord};
    use crate::enrich::{Asset, Gender, SentimentSource};
    use chrono::{TimeZone, Utc};
    use proptest::prelude::*;

    pub(crate) fn rec(day: u32, topic: TopicLabel, sentiment: Sentiment, mode: Mode, routes: &[&str]) -> EnrichedRecord {
        EnrichedRecord {
            schema_version: 1,
            record: FeedbackRecord {
                id: format!("r{day}"),
                text: "x".into(),
                channel: Channel::Twitter,
                timestamp: Utc.with_ymd_and_hms(2023, 1, day, 12, 0, 0).unwrap(),
                problem_category: None,
                mode_hint: None,
                author: None,
            },
            topic,
            topic_scores: vec![],
            sentiment,
            sentiment_source: SentimentSource::Lexicon,
            mode,
            assets: routes
                .iter()
                .map(|r| Asset {
                    kind: AssetKind::Route,
                    id: r.to_string(),
                    mode: Mode::Bus,
                })
                .collect(),
            gender: Gender::Unknown,
            flags: vec![],
        }
    }

    fn d(day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(2023, 1, day).unwrap()
    }

    #[test]
    fn sentiment_shares() {
        let mut rs = Vec::new();
        for (s, n) in [(Sentiment::Negative, 5), (Sentiment::Neutral, 3), (Sentiment::Positive, 2)] {
            rs.extend((0..n).map(|_| rec(1, TopicLabel::Crowding, s, Mode::Rail, &[])));
        }
        let t = aggregate(&rs, ColumnDim::Sentiment);
        assert_eq!(t.rows.len(), 1);
        assert_eq!(t.rows[0].shares, vec![50.0, 30.0, 20.0]);
        assert_eq!(t.totals.key, TOTAL_ROW);
        assert_eq!(t.totals.counts, vec![5, 3, 2]);
        assert_eq!(t.omitted.len(), 10);
        assert!(t.to_text().contains("No records:"));
    }

    #[test]
    fn csv_round_trip_and_empty_table() {
        let rs = vec![
            rec(1, TopicLabel::Fares, Sentiment::Negative, Mode::Bus, &[]),
            rec(2, TopicLabel::Operations, Sentiment::Neutral, Mode::Rail, &[]),
            rec(3, TopicLabel::Fares, Sentiment::Neutral, Mode::Generic, &[]),
        ];
        let t = aggregate(&rs, ColumnDim::Mode);
        let back = AggregationTable::from_csv(&t.to_csv().unwrap(), ColumnDim::Mode).unwrap();
        assert_eq!(back, t);
        let empty = aggregate(&[], ColumnDim::Sentiment);
        let csv = empty.to_csv().unwrap();
        assert_eq!(csv.lines().count(), 1);
        assert_eq!(AggregationTable::from_csv(&csv, ColumnDim::Sentiment).unwrap().rows.len(), 0);
    }

    #[test]
    fn rate_examples() {
        assert_eq!(per_million(50, 2_000_000), Some(25.0));
        assert_eq!(per_million(0, 2_000_000), Some(0.0));
        assert_eq!(per_million(3, 0), None);
    }

    fn ridership(days: u32, per_day: u64) -> RidershipSeries {
        let mut s = RidershipSeries::new();
        for day in 1..=days {
            s.insert(d(day), None, per_day).unwrap();
        }
        s
    }

    #[test]
    fn zero_ridership_flags_group() {
        let s = ridership(2, 0);
        let w = DateWindow::new(d(1), d(2)).unwrap();
        let rs = vec![rec(1, TopicLabel::Fares, Sentiment::Negative, Mode::Bus, &[])];
        let out = complaints_per_million(&rs, &s, &w, GroupBy::All, false).unwrap();
        assert_eq!(out[0].rate, None);
        assert!(out[0].flag.is_some());
    }

    #[test]
    fn missing_ridership_day_is_an_error() {
        let s = ridership(2, 10);
        let w = DateWindow::new(d(1), d(3)).unwrap();
        assert!(complaints_per_million(&[], &s, &w, GroupBy::All, false).is_err());
    }

    fn series(values: &[f64]) -> NormalizedSeries {
        NormalizedSeries {
            group: "g".into(),
            points: values.iter().enumerate().map(|(i, v)| (d(1) + chrono::Days::new(i as u64), *v)).collect(),
            window_days: None,
        }
    }

    fn values(s: &NormalizedSeries) -> Vec<f64> {
        s.points.iter().map(|p| p.1).collect()
    }

    #[test]
    fn moving_average_examples() {
        assert_eq!(values(&moving_average(&series(&[2.0, 4.0, 6.0]), 2, None).unwrap()), vec![3.0, 5.0]);
        assert_eq!(values(&moving_average(&series(&[2.0, 4.0, 6.0]), 1, None).unwrap()), vec![2.0, 4.0, 6.0]);
        assert_eq!(values(&moving_average(&series(&[7.0; 40]), 30, None).unwrap()), vec![7.0; 11]);
        assert_eq!(values(&moving_average(&series(&[2.0, 4.0, 6.0]), 2, Some(1)).unwrap()), vec![2.0, 3.0, 5.0]);
        assert!(moving_average(&series(&[]), 3, None).unwrap().points.is_empty());
        assert_eq!(moving_average(&series(&[1.0]), 5, None).unwrap().points.len(), 0);
    }

    #[test]
    fn unsupported_format() {
        assert!(matches!("png".parse::<ArtifactFormat>(), Err(Error::UnsupportedFormat(_))));
    }

    #[test]
    fn series_svg_has_one_path_per_group() {
        let set = SeriesSet {
            title: "t".into(),
            series: vec![series(&[1.0, 2.0]), NormalizedSeries { group: "h".into(), ..series(&[3.0, 1.0]) }],
        };
        let svg = set.to_svg().unwrap();
        assert_eq!(svg.matches("<path").count(), 2);
        assert!(svg.contains("group,date,value"));
    }

    proptest! {
        #[test]
        fn moving_average_matches_naive(vals in proptest::collection::vec(0.0f64..1e3, 0..80), w in 1usize..12) {
            let out = moving_average(&series(&vals), w, None).unwrap();
            prop_assert_eq!(out.points.len(), vals.len().saturating_sub(w - 1));
            for (j, (_, v)) in out.points.iter().enumerate() {
                let naive = vals[j..j + w].iter().sum::<f64>() / w as f64;
                prop_assert!((v - naive).abs() <= 1e-9 * naive.abs().max(1.0));
            }
        }

        #[test]
        fn aggregate_ignores_order(seed in 0u64..500, n in 0usize..60) {
            use rand::{seq::SliceRandom, Rng};
            let mut rng = crate::rng::seeded(seed);
            let mut rs: Vec<EnrichedRecord> = (0..n)
                .map(|_| rec(1, TopicLabel::ALL[rng.random_range(0..11)], Sentiment::ALL[rng.random_range(0..3)], Mode::ALL[rng.random_range(0..3)], &[]))
                .collect();
            let a = aggregate(&rs, ColumnDim::Sentiment);
            rs.shuffle(&mut rng);
            prop_assert_eq!(a, aggregate(&rs, ColumnDim::Sentiment));
        }

        #[test]
        fn rate_is_linear_in_count(k in 1usize..20, riders in 1u64..5_000_000) {
            let s = ridership(3, riders);
            let w = DateWindow::new(d(1), d(3)).unwrap();
            let one: Vec<_> = (0..k).map(|i| rec(1 + (i % 3) as u32, TopicLabel::Fares, Sentiment::Neutral, Mode::Bus, &[])).collect();
            let two: Vec<_> = one.iter().chain(&one).cloned().collect();
            let a = complaints_per_million(&one, &s, &w, GroupBy::All, false).unwrap()[0].rate.unwrap();
            let b = complaints_per_million(&two, &s, &w, GroupBy::All, false).unwrap()[0].rate.unwrap();
            prop_assert_eq!(b, 2.0 * a);
        }
    }
}
