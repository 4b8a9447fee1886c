//! Dataset ingestion: the news CSV format, veracity labels and class counts.
//!
//! A data file has a header row naming at least `public_id`, `title` and
//! `text`. Labeled files additionally carry the rating column, spelled
//! either `our rating` or `our_rating`.

mod reader;

use std::fmt;
use std::io::Read;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("I/O error while reading corpus: {0}")]
    Io(#[from] std::io::Error),
    #[error("corpus is not valid UTF-8: {0}")]
    Encoding(#[from] std::string::FromUtf8Error),
    #[error("unterminated quoted field starting on line {line}")]
    UnterminatedQuote { line: usize },
    #[error("malformed CSV on line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("missing required column `{0}` in header")]
    MissingColumn(&'static str),
    #[error("empty input: no header row")]
    NoHeader,
    #[error("empty public_id on line {line}")]
    EmptyId { line: usize },
    #[error("unrecognized veracity label {0:?}")]
    UnknownLabel(String),
    #[error("document {id} has no rating but the corpus is labeled")]
    MissingLabel { id: String },
    #[error("document {id}: {source}")]
    BadLabel {
        id: String,
        #[source]
        source: Box<CorpusError>,
    },
    #[error("corpus mixes labeled and unlabeled rows ({labeled} labeled, {unlabeled} unlabeled)")]
    MixedLabels { labeled: usize, unlabeled: usize },
    #[error("document {id} is unlabeled")]
    Unlabeled { id: String },
}

/// Four-way veracity class. The discriminant is the numeric code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[repr(u8)]
pub enum Label {
    False = 0,
    True = 1,
    PartiallyFalse = 2,
    Other = 3,
}

impl Label {
    pub const COUNT: usize = 4;
    pub const ALL: [Label; 4] = [
        Label::False,
        Label::True,
        Label::PartiallyFalse,
        Label::Other,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_code(code: u8) -> Option<Label> {
        Label::ALL.get(code as usize).copied()
    }

    pub fn display_name(self) -> &'static str {
        match self {
            Label::False => "false",
            Label::True => "true",
            Label::PartiallyFalse => "partially_false",
            Label::Other => "other",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.display_name())
    }
}

impl FromStr for Label {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_label(s)
    }
}

/// Case-insensitive, whitespace-normalized label parsing.
///
/// `partially_false` (the display name) is accepted alongside
/// `partially false` so that display names parse back.
pub fn parse_label(raw: &str) -> Result<Label, CorpusError> {
    let norm = raw
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase();
    match norm.as_str() {
        "false" => Ok(Label::False),
        "true" => Ok(Label::True),
        "partially false" | "partially_false" => Ok(Label::PartiallyFalse),
        "other" => Ok(Label::Other),
        _ => Err(CorpusError::UnknownLabel(raw.to_string())),
    }
}

/// One data row exactly as it appears in the file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawRecord {
    pub public_id: String,
    pub title: String,
    pub text: String,
    /// `None` when the file has no rating column or the row is short.
    pub rating: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub id: String,
    pub title: String,
    pub body: String,
    pub label: Option<Label>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub counts: [u64; 4],
    pub total: u64,
}

impl ClassCounts {
    pub fn get(&self, label: Label) -> u64 {
        self.counts[label.index()]
    }

    /// Most frequent class, ties to the lowest code. `None` when empty.
    pub fn majority(&self) -> Option<Label> {
        if self.total == 0 {
            return None;
        }
        let mut best = Label::False;
        for l in Label::ALL {
            if self.get(l) > self.get(best) {
                best = l;
            }
        }
        Some(best)
    }
}

const RATING_HEADERS: [&str; 2] = ["our rating", "our_rating"];

struct Columns {
    id: usize,
    title: usize,
    text: usize,
    rating: Option<usize>,
}

impl Columns {
    fn from_header(header: &[String]) -> Result<Self, CorpusError> {
        let names: Vec<String> = header.iter().map(|h| h.trim().to_lowercase()).collect();
        let find = |name: &'static str| {
            names
                .iter()
                .position(|h| h == name)
                .ok_or(CorpusError::MissingColumn(name))
        };
        Ok(Columns {
            id: find("public_id")?,
            title: find("title")?,
            text: find("text")?,
            rating: names
                .iter()
                .position(|h| RATING_HEADERS.contains(&h.as_str())),
        })
    }
}

/// Parses a dataset file into raw records, one per data row.
pub fn parse_csv<R: Read>(mut stream: R) -> Result<Vec<RawRecord>, CorpusError> {
    let mut bytes = Vec::new();
    stream.read_to_end(&mut bytes)?;
    let text = String::from_utf8(bytes)?;
    let mut rows = reader::read_rows(&text)?.into_iter();
    let header = rows.next().ok_or(CorpusError::NoHeader)?;
    let cols = Columns::from_header(&header.fields)?;

    rows.map(|row| {
        let cell = |i: usize| row.fields.get(i).cloned().unwrap_or_default();
        let public_id = cell(cols.id).trim().to_string();
        if public_id.is_empty() {
            return Err(CorpusError::EmptyId { line: row.line });
        }
        Ok(RawRecord {
            public_id,
            title: cell(cols.title),
            text: cell(cols.text),
            rating: cols.rating.and_then(|i| row.fields.get(i).cloned()),
        })
    })
    .collect()
}

fn has_rating(r: &RawRecord) -> bool {
    r.rating.as_deref().is_some_and(|s| !s.trim().is_empty())
}

/// Converts raw records to documents. With `labeled`, every record must
/// carry a parseable rating; without it, ratings are ignored.
pub fn to_documents(records: Vec<RawRecord>, labeled: bool) -> Result<Vec<Document>, CorpusError> {
    records
        .into_iter()
        .map(|r| {
            let label = if labeled {
                let raw = r
                    .rating
                    .as_deref()
                    .filter(|s| !s.trim().is_empty())
                    .ok_or_else(|| CorpusError::MissingLabel {
                        id: r.public_id.clone(),
                    })?;
                Some(parse_label(raw).map_err(|e| CorpusError::BadLabel {
                    id: r.public_id.clone(),
                    source: Box::new(e),
                })?)
            } else {
                None
            };
            Ok(Document {
                id: r.public_id,
                title: r.title,
                body: r.text,
                label,
            })
        })
        .collect()
}

/// How [`load_documents`] treats the rating column.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelMode {
    Labeled,
    Unlabeled,
    /// Labeled if every row has a rating, unlabeled if none does,
    /// rejected otherwise.
    Detect,
}

/// Parse and convert in one step.
pub fn load_documents<R: Read>(stream: R, mode: LabelMode) -> Result<Vec<Document>, CorpusError> {
    let records = parse_csv(stream)?;
    let labeled = match mode {
        LabelMode::Labeled => true,
        LabelMode::Unlabeled => false,
        LabelMode::Detect => {
            let labeled = records.iter().filter(|r| has_rating(r)).count();
            let unlabeled = records.len() - labeled;
            match (labeled, unlabeled) {
                (_, 0) if labeled > 0 => true,
                (0, _) => false,
                _ => return Err(CorpusError::MixedLabels { labeled, unlabeled }),
            }
        }
    };
    to_documents(records, labeled)
}

/// Per-class document counts of a labeled corpus.
pub fn dataset_stats(docs: &[Document]) -> Result<ClassCounts, CorpusError> {
    let mut stats = ClassCounts::default();
    for d in docs {
        let label = d
            .label
            .ok_or_else(|| CorpusError::Unlabeled { id: d.id.clone() })?;
        stats.counts[label.index()] += 1;
        stats.total += 1;
    }
    Ok(stats)
}
