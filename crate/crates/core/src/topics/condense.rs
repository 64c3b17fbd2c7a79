//! Condensing raw LDA topics into the broad transit topics and building the
//! labeled training set.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{CategoryVocabulary, FeedbackRecord, TopicLabel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LabelSource {
    #[serde(rename = "LDA")]
    Lda,
    ManualHoldout,
    Model,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledRecord {
    pub record: FeedbackRecord,
    pub label: TopicLabel,
    pub label_source: LabelSource,
    pub primary_score: f64,
}

#[derive(Serialize, Deserialize)]
struct CondensationFile {
    topics: BTreeMap<String, String>,
    #[serde(default)]
    holdouts: BTreeMap<String, String>,
}

/// Analyst-curated mapping from source topic ids to broad labels, plus the
/// manual holdout categories.
#[derive(Debug, Clone, PartialEq)]
pub struct TopicCondensation {
    mapping: Vec<TopicLabel>,
    holdouts: BTreeMap<String, TopicLabel>,
}

/// Crime, Harassment and Security share one label; Crowding keeps its own.
pub fn default_holdouts() -> BTreeMap<String, TopicLabel> {
    [
        ("Crime", TopicLabel::Security),
        ("Harassment", TopicLabel::Security),
        ("Security", TopicLabel::Security),
        ("Crowding", TopicLabel::Crowding),
    ]
    .into_iter()
    .map(|(c, l)| (c.to_string(), l))
    .collect()
}

impl TopicCondensation {
    pub fn new(mapping: Vec<TopicLabel>, holdouts: BTreeMap<String, TopicLabel>) -> Result<Self> {
        if mapping.contains(&TopicLabel::Unassigned) {
            return Err(Error::invalid("source topics cannot map to Unassigned"));
        }
        Ok(Self { mapping, holdouts })
    }

    pub fn identity(k: usize) -> Result<Self> {
        let mapping = (0..k)
            .map(|t| TopicLabel::from_code(t).ok_or_else(|| Error::invalid(format!("no broad topic with code {t}"))))
            .collect::<Result<_>>()?;
        Self::new(mapping, default_holdouts())
    }

    /// Parse `{"topics": {"0": label, ...}, "holdouts": {category: label}}`.
    /// Every id in `0..k` must be mapped, and holdout keys must be known categories.
    pub fn from_json(text: &str, k: usize, categories: &CategoryVocabulary) -> Result<Self> {
        let file: CondensationFile = serde_json::from_str(text)?;
        let mut mapping = vec![None; k];
        for (id, label) in &file.topics {
            let t: usize = id
                .trim()
                .parse()
                .map_err(|_| Error::invalid(format!("mapping key {id:?} is not a topic id")))?;
            let slot = mapping
                .get_mut(t)
                .ok_or_else(|| Error::invalid(format!("mapping topic {t} outside 0..{k}")))?;
            *slot = Some(label.parse::<TopicLabel>()?);
        }
        if let Some(missing) = mapping.iter().position(Option::is_none) {
            return Err(Error::invalid(format!("mapping has no label for source topic {missing}")));
        }
        let mut holdouts = BTreeMap::new();
        for (cat, label) in file.holdouts {
            if !categories.contains(&cat) {
                return Err(Error::invalid(format!("holdout category {cat:?} is not a known problem category")));
            }
            holdouts.insert(cat, label.parse()?);
        }
        Self::new(mapping.into_iter().map(Option::unwrap).collect(), holdouts)
    }

    pub fn load(path: &Path, k: usize, categories: &CategoryVocabulary) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, k, categories)
    }

    pub fn to_json(&self) -> Result<String> {
        let file = CondensationFile {
            topics: self
                .mapping
                .iter()
                .enumerate()
                .map(|(t, l)| (t.to_string(), l.name().to_string()))
                .collect(),
            holdouts: self.holdouts.iter().map(|(c, l)| (c.clone(), l.name().to_string())).collect(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn k(&self) -> usize {
        self.mapping.len()
    }

    pub fn label(&self, topic: usize) -> Result<TopicLabel> {
        self.mapping
            .get(topic)
            .copied()
            .ok_or_else(|| Error::invalid(format!("source topic {topic} is not mapped")))
    }

    pub fn holdouts(&self) -> &BTreeMap<String, TopicLabel> {
        &self.holdouts
    }
}

/// Map each source topic to the reference label most common among documents
/// whose primary topic it is (lowest label code on ties); topics that are
/// nobody's primary topic map to General. Stands in for analyst review when
/// reference labels exist, as with synthetic corpora.
pub fn suggest_condensation(
    primary: &[Option<usize>],
    reference: &[TopicLabel],
    k: usize,
    holdouts: BTreeMap<String, TopicLabel>,
) -> Result<TopicCondensation> {
    if primary.len() != reference.len() {
        return Err(Error::invalid("primary topics and reference labels differ in length"));
    }
    let mut votes = vec![[0usize; TopicLabel::COUNT]; k];
    for (p, r) in primary.iter().zip(reference) {
        if let (Some(t), Some(code)) = (p, r.code()) {
            let row = votes
                .get_mut(*t)
                .ok_or_else(|| Error::invalid(format!("topic {t} outside 0..{k}")))?;
            row[code] += 1;
        }
    }
    let mapping = votes
        .iter()
        .map(|v| {
            let best = (0..TopicLabel::COUNT).fold(0, |b, c| if v[c] > v[b] { c } else { b });
            if v[best] == 0 {
                TopicLabel::General
            } else {
                TopicLabel::ALL[best]
            }
        })
        .collect();
    TopicCondensation::new(mapping, holdouts)
}

/// Relabel each document's source topic.
pub fn condense_topics(source_topics: &[usize], condensation: &TopicCondensation) -> Result<Vec<TopicLabel>> {
    source_topics.iter().map(|t| condensation.label(*t)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrimaryTopic {
    /// `None` when the largest share is below the threshold.
    pub topic: Option<usize>,
    pub score: f64,
}

/// Argmax of `theta` (lowest index on ties) if it reaches `threshold`.
pub fn assign_primary_topic(theta: &[f64], threshold: f64) -> PrimaryTopic {
    let mut best = 0;
    for (i, v) in theta.iter().enumerate() {
        if *v > theta[best] {
            best = i;
        }
    }
    let score = theta.get(best).copied().unwrap_or(0.0);
    PrimaryTopic {
        topic: (!theta.is_empty() && score >= threshold).then_some(best),
        score,
    }
}

/// Split off records whose problem category is a manual holdout.
pub fn holdout_manual_topics(
    records: Vec<FeedbackRecord>,
    holdouts: &BTreeMap<String, TopicLabel>,
) -> (Vec<LabeledRecord>, Vec<FeedbackRecord>) {
    let mut held = Vec::new();
    let mut rest = Vec::new();
    for record in records {
        match record.problem_category.as_deref().and_then(|c| holdouts.get(c)) {
            Some(label) => held.push(LabeledRecord {
                label: *label,
                label_source: LabelSource::ManualHoldout,
                primary_score: 1.0,
                record,
            }),
            None => rest.push(record),
        }
    }
    (held, rest)
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TrainingSet {
    pub labeled: Vec<LabeledRecord>,
    /// LDA records whose primary topic score fell below the threshold.
    pub unassigned: Vec<FeedbackRecord>,
    pub held_out: usize,
    pub lda_assigned: usize,
}

/// Combine held-out records with LDA records that have a strong primary topic.
/// `thetas[i]` is the topic mixture of `lda_records[i]`.
pub fn build_training_set(
    held_out: Vec<LabeledRecord>,
    lda_records: Vec<FeedbackRecord>,
    thetas: &[Vec<f64>],
    condensation: &TopicCondensation,
    threshold: f64,
) -> Result<TrainingSet> {
    if lda_records.len() != thetas.len() {
        return Err(Error::invalid("one topic mixture per LDA record is required"));
    }
    let held_ids: HashSet<&str> = held_out.iter().map(|r| r.record.id.as_str()).collect();
    if let Some(r) = lda_records.iter().find(|r| held_ids.contains(r.id.as_str())) {
        return Err(Error::invalid(format!("record {} is both held out and in the LDA set", r.id)));
    }
    let mut set = TrainingSet {
        held_out: held_out.len(),
        labeled: held_out,
        ..TrainingSet::default()
    };
    for (record, theta) in lda_records.into_iter().zip(thetas) {
        let primary = assign_primary_topic(theta, threshold);
        match primary.topic {
            Some(t) => {
                set.labeled.push(LabeledRecord {
                    record,
                    label: condensation.label(t)?,
                    label_source: LabelSource::Lda,
                    primary_score: primary.score,
                });
                set.lda_assigned += 1;
            }
            None => set.unassigned.push(record),
        }
    }
    Ok(set)
}

/// Per topic, the share of each problem category among its records.
/// Records without a category are skipped; topics with no records are omitted.
pub fn topic_category_ratios(labeled: &[LabeledRecord]) -> BTreeMap<TopicLabel, BTreeMap<String, f64>> {
    let mut counts: BTreeMap<TopicLabel, BTreeMap<String, usize>> = BTreeMap::new();
    for r in labeled {
        if let Some(cat) = &r.record.problem_category {
            *counts.entry(r.label).or_default().entry(cat.clone()).or_default() += 1;
        }
    }
    counts
        .into_iter()
        .map(|(label, cats)| {
            let total: usize = cats.values().sum();
            let ratios = cats.into_iter().map(|(c, n)| (c, n as f64 / total as f64)).collect();
            (label, ratios)
        })
        .collect()
}

/// The `n` largest ratios, descending, ties by category name.
pub fn top_ratios(ratios: &BTreeMap<String, f64>, n: usize) -> Vec<(String, f64)> {
    let mut v: Vec<(String, f64)> = ratios.iter().map(|(c, r)| (c.clone(), *r)).collect();
    v.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    v.truncate(n);
    v
}
