//! Three-way sentiment from a bundled polarity lexicon or an external model.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::classify::{BridgeClient, BridgeConfig, BridgeEndpoint};
use crate::error::{Error, Result};
use crate::textprep::tokenize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Sentiment {
    Negative,
    Neutral,
    Positive,
}

impl Sentiment {
    pub const ALL: [Sentiment; 3] = [Sentiment::Negative, Sentiment::Neutral, Sentiment::Positive];

    pub fn as_str(self) -> &'static str {
        match self {
            Sentiment::Negative => "Negative",
            Sentiment::Neutral => "Neutral",
            Sentiment::Positive => "Positive",
        }
    }

    pub fn labels() -> Vec<String> {
        Self::ALL.iter().map(|s| s.as_str().to_string()).collect()
    }
}

impl std::fmt::Display for Sentiment {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Sentiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|x| x.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::UnknownLabel(s.to_string()))
    }
}

const BUNDLED_LEXICON: &str = include_str!("../../data/sentiment_lexicon.txt");

const NEGATORS: &[&str] = &[
    "not", "no", "never", "dont", "doesnt", "didnt", "isnt", "wasnt", "arent", "cant", "wont", "nothing",
];

/// Word → integer polarity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lexicon {
    scores: HashMap<String, i32>,
}

impl Lexicon {
    pub fn bundled() -> Self {
        Self::parse(BUNDLED_LEXICON).expect("bundled lexicon parses")
    }

    /// `word<TAB>score` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut scores = HashMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (word, score) = line
                .rsplit_once(char::is_whitespace)
                .ok_or_else(|| Error::invalid(format!("lexicon line {}: expected `word score`", n + 1)))?;
            let score: i32 = score
                .parse()
                .map_err(|_| Error::invalid(format!("lexicon line {}: bad score `{score}`", n + 1)))?;
            scores.insert(word.trim().to_lowercase(), score);
        }
        Ok(Self { scores })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn score(&self, word: &str) -> Option<i32> {
        self.scores.get(word).copied()
    }

    /// Sum of token polarities; a negator directly before a word flips it.
    pub fn polarity(&self, text: &str) -> i32 {
        let tokens = tokenize(text);
        let mut total = 0;
        for (i, t) in tokens.iter().enumerate() {
            if let Some(s) = self.score(t) {
                let negated = i > 0 && NEGATORS.contains(&tokens[i - 1].as_str());
                total += if negated { -s } else { s };
            }
        }
        total
    }

    pub fn classify(&self, text: &str) -> Sentiment {
        match self.polarity(text).signum() {
            1 => Sentiment::Positive,
            -1 => Sentiment::Negative,
            _ => Sentiment::Neutral,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SentimentSource {
    Lexicon,
    Bridge,
    /// The bridge failed and the lexicon answered instead.
    LexiconFallback,
    /// No provider produced a label.
    Failed,
}

#[derive(Debug, Clone)]
pub enum SentimentProvider {
    Lexicon(Lexicon),
    Bridge {
        endpoint: String,
        config: BridgeConfig,
        fallback: Option<Lexicon>,
    },
}

impl SentimentProvider {
    /// One label per text, in order. Bridge failures fall back to the lexicon
    /// when one is configured and are reported as `Failed` otherwise.
    pub fn classify_all(&self, texts: &[String]) -> Result<Vec<(Sentiment, SentimentSource)>> {
        match self {
            SentimentProvider::Lexicon(lex) => {
                Ok(texts.iter().map(|t| (lex.classify(t), SentimentSource::Lexicon)).collect())
            }
            SentimentProvider::Bridge {
                endpoint,
                config,
                fallback,
            } => {
                let endpoint: BridgeEndpoint = endpoint.parse()?;
                let mut client = BridgeClient::connect(&endpoint, &Sentiment::labels(), *config)?;
                let out = client.classify(texts)?;
                Ok(out
                    .into_iter()
                    .zip(texts)
                    .map(|(r, text)| match (r, fallback) {
                        (Ok(r), _) => (Sentiment::ALL[r.class], SentimentSource::Bridge),
                        (Err(_), Some(lex)) => (lex.classify(text), SentimentSource::LexiconFallback),
                        (Err(_), None) => (Sentiment::Neutral, SentimentSource::Failed),
                    })
                    .collect())
            }
        }
    }
}
