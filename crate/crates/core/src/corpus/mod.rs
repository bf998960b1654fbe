//! Interaction corpus: ingestion, k-core filtering, train/test splits and
//! dataset statistics.

mod kcore;
mod split;
mod stats;

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::Vocab;

pub use kcore::k_core_filter;
pub use split::{simulate_cold_start, split, split_events, SplitPlan, SplitStrategy};
pub use stats::{dataset_stats, DatasetStats};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("io error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("k-core filtering with k={k} removed every interaction")]
    EmptyAfterFilter { k: usize },
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("degenerate split: {0}")]
    DegenerateSplit(String),
}

pub type Result<T> = std::result::Result<T, CorpusError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InteractionFormat {
    /// `user<TAB>item<TAB>rating<TAB>timestamp`
    Tsv,
    /// `user::item::rating::timestamp`
    MovielensDat,
}

impl InteractionFormat {
    fn delimiter(self) -> &'static str {
        match self {
            InteractionFormat::Tsv => "\t",
            InteractionFormat::MovielensDat => "::",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub user: usize,
    pub item: usize,
    pub rating: f64,
    pub timestamp: i64,
}

/// The observed feedback set together with its user and item vocabularies.
///
/// Events never repeat a `(user, item)` pair and always index inside the
/// vocabularies. Vocabulary indices are dense and assigned in order of first
/// appearance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionLog {
    users: Vocab,
    items: Vocab,
    events: Vec<Event>,
}

impl InteractionLog {
    /// Builds a log from external-id records, collapsing duplicate
    /// `(user, item)` pairs onto the record with the latest timestamp
    /// (later records win ties). The surviving event keeps the position of
    /// the pair's first occurrence.
    pub fn from_records<I, U, T>(records: I) -> Self
    where
        I: IntoIterator<Item = (U, T, f64, i64)>,
        U: AsRef<str>,
        T: AsRef<str>,
    {
        let mut users = Vocab::new();
        let mut items = Vocab::new();
        let mut events: Vec<Event> = Vec::new();
        let mut seen: HashMap<(usize, usize), usize> = HashMap::new();
        for (u, i, rating, timestamp) in records {
            let user = users.intern(u.as_ref());
            let item = items.intern(i.as_ref());
            let ev = Event {
                user,
                item,
                rating,
                timestamp,
            };
            match seen.get(&(user, item)) {
                Some(&pos) => {
                    if timestamp >= events[pos].timestamp {
                        events[pos] = ev;
                    }
                }
                None => {
                    seen.insert((user, item), events.len());
                    events.push(ev);
                }
            }
        }
        Self {
            users,
            items,
            events,
        }
    }

    /// Keeps only the listed events and re-densifies both vocabularies,
    /// preserving the relative order of surviving ids.
    pub fn retain_events(&self, keep: impl Fn(usize, &Event) -> bool) -> Self {
        let records = self
            .events
            .iter()
            .enumerate()
            .filter(|(idx, ev)| keep(*idx, ev))
            .map(|(_, ev)| {
                (
                    self.users.id(ev.user),
                    self.items.id(ev.item),
                    ev.rating,
                    ev.timestamp,
                )
            });
        Self::from_records(records)
    }

    /// Restricts the log to items whose external id satisfies `keep`.
    pub fn retain_items(&self, keep: impl Fn(&str) -> bool) -> Self {
        self.retain_events(|_, ev| keep(self.items.id(ev.item)))
    }

    pub fn users(&self) -> &Vocab {
        &self.users
    }

    pub fn items(&self) -> &Vocab {
        &self.items
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn user_degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n_users()];
        for ev in &self.events {
            deg[ev.user] += 1;
        }
        deg
    }

    pub fn item_degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n_items()];
        for ev in &self.events {
            deg[ev.item] += 1;
        }
        deg
    }
}

pub fn load_interactions(path: impl AsRef<Path>, format: InteractionFormat) -> Result<InteractionLog> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_interactions(file, format)
}

/// Parses interaction records from any reader. Blank lines are skipped;
/// non-UTF-8 bytes are replaced rather than rejected.
pub fn parse_interactions<R: Read>(reader: R, format: InteractionFormat) -> Result<InteractionLog> {
    let delim = format.delimiter();
    let mut records = Vec::new();
    let mut reader = BufReader::new(reader);
    let mut buf = Vec::new();
    let mut line_no = 0;
    loop {
        buf.clear();
        let n = reader
            .read_until(b'\n', &mut buf)
            .map_err(|source| CorpusError::Io {
                path: "<reader>".into(),
                source,
            })?;
        if n == 0 {
            break;
        }
        line_no += 1;
        let line = String::from_utf8_lossy(&buf);
        let line = line.trim_end_matches(['\n', '\r']);
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(delim).collect();
        if fields.len() != 4 {
            return Err(CorpusError::Parse {
                line: line_no,
                message: format!("expected 4 fields, found {}", fields.len()),
            });
        }
        let rating: f64 = fields[2].trim().parse().map_err(|_| CorpusError::Parse {
            line: line_no,
            message: format!("invalid rating {:?}", fields[2]),
        })?;
        if !rating.is_finite() {
            return Err(CorpusError::Parse {
                line: line_no,
                message: format!("non-finite rating {:?}", fields[2]),
            });
        }
        let timestamp: i64 = fields[3].trim().parse().map_err(|_| CorpusError::Parse {
            line: line_no,
            message: format!("invalid timestamp {:?}", fields[3]),
        })?;
        records.push((
            fields[0].trim().to_owned(),
            fields[1].trim().to_owned(),
            rating,
            timestamp,
        ));
    }
    if records.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    Ok(InteractionLog::from_records(records))
}
