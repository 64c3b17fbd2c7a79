//! Structure beyond topic: sentiment, service mode, mentioned assets and an
//! optional author gender guess.

mod assets;
mod sentiment;

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classify::{ClassifierHandle, HandleKind, Inputs};
use crate::corpus::{AssetCatalog, FeedbackRecord, Mode, NameGenderTable, TopicLabel};
use crate::error::{Error, Result};
use crate::features::TfidfVectorizer;
use crate::textprep::Preprocessor;

pub use assets::{match_assets, vote_mode, Asset, AssetKind, AssetMatch, AssetMatcher};
pub use sentiment::{Lexicon, Sentiment, SentimentProvider, SentimentSource};

pub const ENRICHED_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Gender {
    Male,
    Female,
    Unknown,
}

impl Gender {
    pub fn as_str(self) -> &'static str {
        match self {
            Gender::Male => "Male",
            Gender::Female => "Female",
            Gender::Unknown => "Unknown",
        }
    }
}

/// Looks up the first whitespace token of the display name. Female when
/// `p ≥ θ`, Male when `p ≤ 1 − θ`, Unknown otherwise or when absent.
pub fn infer_gender(display_name: Option<&str>, table: &NameGenderTable) -> Gender {
    let Some(first) = display_name.and_then(|n| n.split_whitespace().next()) else {
        return Gender::Unknown;
    };
    match table.p_female(&first.to_lowercase()) {
        Some(p) if p >= table.threshold() => Gender::Female,
        Some(p) if p <= 1.0 - table.threshold() => Gender::Male,
        _ => Gender::Unknown,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnrichedRecord {
    pub schema_version: u32,
    pub record: FeedbackRecord,
    pub topic: TopicLabel,
    /// Classifier scores over the 11 topics; empty when no topic was predicted.
    pub topic_scores: Vec<f64>,
    pub sentiment: Sentiment,
    pub sentiment_source: SentimentSource,
    pub mode: Mode,
    pub assets: Vec<Asset>,
    pub gender: Gender,
    /// Reasons this record is incomplete; empty when fully enriched.
    pub flags: Vec<String>,
}

/// A topic classifier with whatever it needs to read raw text.
#[derive(Debug, Clone)]
pub struct TopicModel {
    pub handle: ClassifierHandle,
    /// Required by local classifiers, ignored by bridge ones.
    pub vectorizer: Option<TfidfVectorizer>,
    pub prep: Preprocessor,
}

impl TopicModel {
    /// The handle must be an 11-topic classifier and local ones must match the
    /// vectorizer's vocabulary.
    pub fn validate(&self) -> Result<()> {
        if self.handle.labels != TopicLabel::names() {
            return Err(Error::invalid(format!(
                "classifier labels {:?} are not the 11 topic labels",
                self.handle.labels
            )));
        }
        if self.handle.kind() != HandleKind::Bridge {
            let v = self
                .vectorizer
                .as_ref()
                .ok_or_else(|| Error::invalid("a local classifier needs its TF-IDF vectorizer"))?;
            self.handle.check_vectorizer(v)?;
        }
        Ok(())
    }

    /// `(label, scores)` per text, or the reason it failed.
    pub fn predict(&self, texts: &[String]) -> Result<Vec<std::result::Result<(TopicLabel, Vec<f64>), String>>> {
        let out = match &self.vectorizer {
            Some(v) if self.handle.kind() != HandleKind::Bridge => {
                let xs: Vec<_> = texts.par_iter().map(|t| v.vectorize_terms(&self.prep.terms(t))).collect();
                self.handle.predict_batch(Inputs::Features(&xs))?
            }
            _ => self.handle.predict_batch(Inputs::Texts(texts))?,
        };
        Ok(out
            .into_iter()
            .map(|r| {
                r.map(|p| (TopicLabel::ALL[p.class], p.scores))
                    .map_err(|e| format!("topic: {e}"))
            })
            .collect())
    }
}

#[derive(Debug, Clone)]
pub struct Providers {
    pub sentiment: SentimentProvider,
    /// Gender inference runs only when a table is supplied.
    pub names: Option<NameGenderTable>,
}

impl Default for Providers {
    fn default() -> Self {
        Self {
            sentiment: SentimentProvider::Lexicon(Lexicon::bundled()),
            names: None,
        }
    }
}

/// Enrich every record; output order and count match the input. Records that
/// cannot be fully enriched are flagged rather than dropped.
pub fn enrich_pipeline(
    records: &[FeedbackRecord],
    topic: &TopicModel,
    catalog: &AssetCatalog,
    providers: &Providers,
) -> Result<Vec<EnrichedRecord>> {
    topic.validate()?;
    let mut catalog = catalog.clone();
    catalog.validate()?;
    let matcher = AssetMatcher::new(&catalog);

    let live: Vec<usize> = (0..records.len()).filter(|i| !records[*i].text.trim().is_empty()).collect();
    let texts: Vec<String> = live.iter().map(|i| records[*i].text.clone()).collect();
    let topics = topic.predict(&texts)?;
    let sentiments = providers.sentiment.classify_all(&texts)?;

    let mut out: Vec<EnrichedRecord> = records
        .iter()
        .map(|r| EnrichedRecord {
            schema_version: ENRICHED_SCHEMA_VERSION,
            record: r.clone(),
            topic: TopicLabel::Unassigned,
            topic_scores: Vec::new(),
            sentiment: Sentiment::Neutral,
            sentiment_source: SentimentSource::Failed,
            mode: r.mode_hint.unwrap_or(Mode::Generic),
            assets: Vec::new(),
            gender: Gender::Unknown,
            flags: vec!["empty_text".into()],
        })
        .collect();
    for ((i, t), s) in live.iter().zip(topics).zip(sentiments) {
        let e = &mut out[*i];
        e.flags.clear();
        match t {
            Ok((label, scores)) => {
                e.topic = label;
                e.topic_scores = scores;
            }
            Err(msg) => e.flags.push(msg),
        }
        (e.sentiment, e.sentiment_source) = s;
        if e.sentiment_source == SentimentSource::Failed {
            e.flags.push("sentiment: provider failed".into());
        }
    }
    out.par_iter_mut().for_each(|e| {
        let m = matcher.match_text(&e.record.text);
        if m.mode != Mode::Generic {
            e.mode = m.mode;
        }
        e.assets = m.assets;
        if let Some(table) = &providers.names {
            e.gender = infer_gender(e.record.author.as_deref(), table);
        }
    });
    Ok(out)
}

pub fn write_enriched_jsonl(path: &Path, records: &[EnrichedRecord]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_enriched_jsonl(path: &Path) -> Result<Vec<EnrichedRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let r: EnrichedRecord = serde_json::from_str(&line)
            .map_err(|e| Error::invalid(format!("{}:{}: {e}", path.display(), n + 1)))?;
        if r.schema_version != ENRICHED_SCHEMA_VERSION {
            return Err(Error::invalid(format!(
                "{}:{}: unsupported schema_version {}",
                path.display(),
                n + 1,
                r.schema_version
            )));
        }
        out.push(r);
    }
    Ok(out)
}

/// One row per record; assets and flags joined by `;`.
pub fn write_enriched_csv(path: &Path, records: &[EnrichedRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "id",
        "timestamp",
        "channel",
        "text",
        "topic",
        "sentiment",
        "sentiment_source",
        "mode",
        "assets",
        "gender",
        "flags",
    ])?;
    for e in records {
        let assets: Vec<String> = e.assets.iter().map(ToString::to_string).collect();
        let source = serde_json::to_value(e.sentiment_source)?;
        w.write_record([
            e.record.id.as_str(),
            &e.record.timestamp.to_rfc3339(),
            e.record.channel.as_str(),
            &e.record.text,
            e.topic.name(),
            e.sentiment.as_str(),
            source.as_str().unwrap_or_default(),
            e.mode.as_str(),
            &assets.join(";"),
            e.gender.as_str(),
            &e.flags.join(";"),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
