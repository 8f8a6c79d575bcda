//! CSV manifest: `path,label,category,speaker_id,age` plus an optional
//! `origin` column naming the source clip of augmented entries.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

const REQUIRED: [&str; 5] = ["path", "label", "category", "speaker_id", "age"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Category {
    Alphabet,
    Number,
    Color,
}

impl Category {
    pub const ALL: [Category; 3] = [Category::Alphabet, Category::Number, Category::Color];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Alphabet => "alphabet",
            Category::Number => "number",
            Category::Color => "color",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "alphabet" => Ok(Category::Alphabet),
            "number" => Ok(Category::Number),
            "color" => Ok(Category::Color),
            other => Err(Error::UnknownCategory(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    /// Path relative to the corpus root.
    pub path: String,
    pub label: String,
    pub category: Category,
    pub speaker_id: String,
    pub age_years: Option<u8>,
    /// Source clip of an augmented copy; `None` for original recordings.
    pub origin: Option<String>,
}

impl ManifestEntry {
    pub fn is_augmented(&self) -> bool {
        self.origin.is_some()
    }
}

/// Entries plus the label → class-id index (lexicographic label order).
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
    pub class_index: BTreeMap<String, usize>,
}

impl DatasetManifest {
    /// Builds a manifest, rejecting duplicate paths and invalid ages.
    pub fn new(entries: Vec<ManifestEntry>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(entries.len());
        for (row, e) in entries.iter().enumerate() {
            if e.path.is_empty() {
                return Err(Error::InvalidRow { row, reason: "empty path".into() });
            }
            if let Some(age) = e.age_years {
                if !(3..=12).contains(&age) {
                    return Err(Error::InvalidRow { row, reason: format!("age {age} outside [3, 12]") });
                }
            }
            if !seen.insert(e.path.as_str()) {
                return Err(Error::DuplicatePath(e.path.clone()));
            }
        }
        let labels: BTreeSet<&str> = entries.iter().map(|e| e.label.as_str()).collect();
        let class_index = labels.into_iter().enumerate().map(|(i, l)| (l.to_string(), i)).collect();
        Ok(Self { entries, class_index })
    }

    pub fn n_classes(&self) -> usize {
        self.class_index.len()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Labels ordered by class id.
    pub fn labels(&self) -> Vec<String> {
        self.class_index.keys().cloned().collect()
    }

    pub fn class_id(&self, label: &str) -> Option<usize> {
        self.class_index.get(label).copied()
    }

    pub fn speakers(&self) -> BTreeSet<&str> {
        self.entries.iter().map(|e| e.speaker_id.as_str()).collect()
    }

    /// Keeps the entries satisfying `keep`, rebuilding the class index.
    pub fn filter(&self, keep: impl Fn(&ManifestEntry) -> bool) -> DatasetManifest {
        let entries = self.entries.iter().filter(|e| keep(e)).cloned().collect();
        DatasetManifest::new(entries).expect("subset of a valid manifest is valid")
    }

    /// Keeps the entries of one category.
    pub fn category(&self, category: Category) -> DatasetManifest {
        self.filter(|e| e.category == category)
    }

    /// Parses manifest CSV text.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
        let headers = reader.headers().map_err(csv_err)?.clone();
        let column = |name: &str| headers.iter().position(|h| h.trim() == name);
        let mut idx = [0usize; 5];
        for (slot, name) in idx.iter_mut().zip(REQUIRED) {
            *slot = column(name).ok_or_else(|| Error::MissingColumn(name.to_string()))?;
        }
        let origin_col = column("origin");

        let mut entries = Vec::new();
        for (row, record) in reader.records().enumerate() {
            let record = record.map_err(csv_err)?;
            let field = |i: usize| record.get(i).unwrap_or("").trim();
            let age = match field(idx[4]) {
                "" => None,
                s => Some(s.parse::<u8>().map_err(|_| Error::InvalidRow {
                    row,
                    reason: format!("age `{s}` is not an integer"),
                })?),
            };
            let origin = origin_col.map(field).filter(|s| !s.is_empty()).map(str::to_string);
            entries.push(ManifestEntry {
                path: field(idx[0]).to_string(),
                label: field(idx[1]).to_string(),
                category: field(idx[2]).parse()?,
                speaker_id: field(idx[3]).to_string(),
                age_years: age,
                origin,
            });
        }
        Self::new(entries)
    }

    /// Serializes to manifest CSV; the `origin` column is written only when
    /// some entry is augmented.
    pub fn to_csv(&self) -> String {
        let with_origin = self.entries.iter().any(ManifestEntry::is_augmented);
        let mut writer = csv::Writer::from_writer(Vec::new());
        let mut header: Vec<&str> = REQUIRED.to_vec();
        if with_origin {
            header.push("origin");
        }
        writer.write_record(&header).expect("in-memory write");
        for e in &self.entries {
            let age = e.age_years.map(|a| a.to_string()).unwrap_or_default();
            let mut record = vec![e.path.as_str(), e.label.as_str(), e.category.as_str(), e.speaker_id.as_str(), age.as_str()];
            if with_origin {
                record.push(e.origin.as_deref().unwrap_or(""));
            }
            writer.write_record(&record).expect("in-memory write");
        }
        String::from_utf8(writer.into_inner().expect("in-memory flush")).expect("csv of utf-8 fields")
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format { kind: "manifest", reason: e.to_string() }
}
