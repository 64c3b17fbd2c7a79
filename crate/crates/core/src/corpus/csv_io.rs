use std::collections::HashSet;
use std::path::Path;

use chrono::SecondsFormat;
use serde::{Deserialize, Serialize};

use super::{parse_timestamp, CategoryVocabulary, Channel, FeedbackRecord, ParseOutcome, Reject};
use crate::error::{Error, Result};

/// Column names in the input file for each record field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ColumnMap {
    pub id: String,
    pub text: String,
    pub channel: String,
    pub timestamp: String,
    pub problem_category: String,
    pub mode_hint: String,
    pub author: String,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            id: "id".into(),
            text: "text".into(),
            channel: "channel".into(),
            timestamp: "timestamp".into(),
            problem_category: "problem_category".into(),
            mode_hint: "mode".into(),
            author: "author".into(),
        }
    }
}

/// How to read an agency export.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct CsvSchema {
    pub columns: ColumnMap,
    /// chrono format tried when a timestamp is not ISO-8601.
    pub timestamp_format: Option<String>,
}

fn column(headers: &csv::StringRecord, name: &str) -> Option<usize> {
    headers.iter().position(|h| h.trim() == name)
}

/// Read a feedback CSV. Rows failing validation are returned as rejects
/// with their 1-based line number; a missing required column is fatal.
///
/// When `categories` is given, a CRM row's problem category must belong to it.
pub fn parse_feedback_csv(
    path: &Path,
    schema: &CsvSchema,
    categories: Option<&CategoryVocabulary>,
) -> Result<ParseOutcome> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_feedback_reader(file, schema, categories)
}

pub(crate) fn parse_feedback_reader<R: std::io::Read>(
    reader: R,
    schema: &CsvSchema,
    categories: Option<&CategoryVocabulary>,
) -> Result<ParseOutcome> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let cols = &schema.columns;
    let required = |name: &str| column(&headers, name).ok_or_else(|| Error::MissingColumn(name.into()));
    let id_col = required(&cols.id)?;
    let text_col = required(&cols.text)?;
    let channel_col = required(&cols.channel)?;
    let ts_col = required(&cols.timestamp)?;
    let cat_col = column(&headers, &cols.problem_category);
    let mode_col = column(&headers, &cols.mode_hint);
    let author_col = column(&headers, &cols.author);

    let mut out = ParseOutcome::default();
    let mut seen = HashSet::new();
    for (i, row) in rdr.records().enumerate() {
        // header is line 1
        let line = i + 2;
        let reject = |reason: &str| Reject {
            row: line,
            reason: reason.to_string(),
        };
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                out.rejects.push(reject(&format!("malformed row: {e}")));
                continue;
            }
        };
        let field = |c: usize| row.get(c).unwrap_or("").trim();
        let optional = |c: Option<usize>| {
            c.map(field).filter(|s| !s.is_empty()).map(str::to_string)
        };

        let id = field(id_col);
        if id.is_empty() {
            out.rejects.push(reject("empty id"));
            continue;
        }
        let text = row.get(text_col).unwrap_or("");
        if text.trim().is_empty() {
            out.rejects.push(reject("empty text"));
            continue;
        }
        let Ok(channel) = field(channel_col).parse::<Channel>() else {
            out.rejects.push(reject("unknown channel"));
            continue;
        };
        let Some(timestamp) = parse_timestamp(field(ts_col), schema.timestamp_format.as_deref())
        else {
            out.rejects.push(reject("unparseable timestamp"));
            continue;
        };
        let problem_category = optional(cat_col);
        if let (Some(cat), Some(vocab)) = (&problem_category, categories) {
            if !vocab.contains(cat) {
                out.rejects.push(reject("unknown problem category"));
                continue;
            }
        }
        let mode_hint = match optional(mode_col).map(|m| m.parse()) {
            None => None,
            Some(Ok(m)) => Some(m),
            Some(Err(_)) => {
                out.rejects.push(reject("unknown mode"));
                continue;
            }
        };
        if !seen.insert(id.to_string()) {
            out.rejects.push(reject("duplicate id"));
            continue;
        }
        out.records.push(FeedbackRecord {
            id: id.to_string(),
            text: text.to_string(),
            channel,
            timestamp,
            problem_category,
            mode_hint,
            author: optional(author_col),
        });
    }
    Ok(out)
}

/// Write records with the default column names.
pub fn write_feedback_csv(path: &Path, records: &[FeedbackRecord]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_feedback(file, records)
}

pub(crate) fn write_feedback<W: std::io::Write>(writer: W, records: &[FeedbackRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let c = ColumnMap::default();
    w.write_record([
        &c.id,
        &c.text,
        &c.channel,
        &c.timestamp,
        &c.problem_category,
        &c.mode_hint,
        &c.author,
    ])?;
    for r in records {
        w.write_record([
            r.id.as_str(),
            r.text.as_str(),
            r.channel.as_str(),
            &r.timestamp.to_rfc3339_opts(SecondsFormat::AutoSi, true),
            r.problem_category.as_deref().unwrap_or(""),
            r.mode_hint.map(|m| m.as_str()).unwrap_or(""),
            r.author.as_deref().unwrap_or(""),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Mode;
    use chrono::{TimeZone, Utc};
    use proptest::prelude::*;

    fn parse(text: &str) -> ParseOutcome {
        parse_feedback_reader(text.as_bytes(), &CsvSchema::default(), Some(&CategoryVocabulary::bundled()))
            .unwrap()
    }

    #[test]
    fn well_formed_rows() {
        let out = parse(
            "id,text,channel,timestamp,problem_category\n\
             1,Bus was late,CRM,2022-01-03T08:00:00Z,Delays\n\
             2,\"Dirty car, again\",CRM,2022-01-03,Cleaning\n\
             3,love the new line,Twitter,2022-01-04T10:00:00Z,\n",
        );
        assert_eq!(out.records.len(), 3);
        assert!(out.rejects.is_empty());
        assert_eq!(out.records[0].problem_category.as_deref(), Some("Delays"));
        assert_eq!(out.records[1].text, "Dirty car, again");
        assert_eq!(out.records[2].problem_category, None);
    }

    #[test]
    fn empty_text_is_rejected() {
        let out = parse(
            "id,text,channel,timestamp\n\
             1,Bus was late,CRM,2022-01-03\n\
             2,   ,CRM,2022-01-03\n\
             3,ok,CRM,2022-01-03\n",
        );
        assert_eq!(out.records.len(), 2);
        assert_eq!(out.rejects, vec![Reject { row: 3, reason: "empty text".into() }]);
        assert_eq!(out.input_rows(), 3);
    }

    #[test]
    fn bad_rows_are_counted() {
        let out = parse(
            "id,text,channel,timestamp,problem_category,mode\n\
             1,a,CRM,yesterday,,\n\
             2,b,Fax,2022-01-03,,\n\
             3,c,CRM,2022-01-03,Weather,\n\
             4,d,CRM,2022-01-03,,Ferry\n\
             4,e,CRM,2022-01-03,,bus\n\
             4,f,CRM,2022-01-03,,bus\n",
        );
        let reasons: Vec<_> = out.rejects.iter().map(|r| r.reason.as_str()).collect();
        assert_eq!(
            reasons,
            ["unparseable timestamp", "unknown channel", "unknown problem category", "unknown mode", "duplicate id"]
        );
        assert_eq!(out.records.len(), 1);
        assert_eq!(out.records[0].mode_hint, Some(Mode::Bus));
        assert_eq!(out.input_rows(), 6);
    }

    #[test]
    fn missing_column_is_fatal() {
        let err = parse_feedback_reader("id,text,channel\n1,a,CRM\n".as_bytes(), &CsvSchema::default(), None)
            .unwrap_err();
        assert!(matches!(err, Error::MissingColumn(c) if c == "timestamp"));
    }

    #[test]
    fn remapped_columns_and_fallback_format() {
        let schema = CsvSchema {
            columns: ColumnMap {
                id: "case_no".into(),
                text: "comment".into(),
                channel: "source".into(),
                timestamp: "received".into(),
                problem_category: "category".into(),
                ..ColumnMap::default()
            },
            timestamp_format: Some("%m/%d/%Y %H:%M".into()),
        };
        let out = parse_feedback_reader(
            "case_no,received,source,category,comment\nA1,06/27/2022 17:05,crm,Delays,late again\n".as_bytes(),
            &schema,
            None,
        )
        .unwrap();
        assert_eq!(out.records.len(), 1);
        assert_eq!(out.records[0].timestamp, Utc.with_ymd_and_hms(2022, 6, 27, 17, 5, 0).unwrap());
    }

    fn arb_record() -> impl Strategy<Value = FeedbackRecord> {
        (
            "[a-z0-9]{1,8}",
            "[ -~]{0,40}[a-zA-Z][ -~]{0,40}",
            prop_oneof![Just(Channel::Crm), Just(Channel::Twitter), Just(Channel::Survey)],
            0i64..2_000_000_000,
            proptest::option::of(prop_oneof![Just("Delays".to_string()), Just("Crowding".to_string())]),
            proptest::option::of(prop_oneof![Just(Mode::Bus), Just(Mode::Rail), Just(Mode::Generic)]),
            proptest::option::of("[A-Z][a-z]{1,6}( [A-Z][a-z]{1,6})?"),
        )
            .prop_map(|(id, text, channel, secs, problem_category, mode_hint, author)| FeedbackRecord {
                id,
                text,
                channel,
                timestamp: Utc.timestamp_opt(secs, 0).unwrap(),
                problem_category,
                mode_hint,
                author,
            })
    }

    proptest! {
        #[test]
        fn csv_round_trip(records in proptest::collection::vec(arb_record(), 0..20)) {
            let mut seen = HashSet::new();
            let records: Vec<_> = records.into_iter().filter(|r| seen.insert(r.id.clone())).collect();
            let mut buf = Vec::new();
            write_feedback(&mut buf, &records).unwrap();
            let out = parse_feedback_reader(buf.as_slice(), &CsvSchema::default(), None).unwrap();
            prop_assert!(out.rejects.is_empty(), "{:?}", out.rejects);
            prop_assert_eq!(out.records, records);
        }
    }
}
