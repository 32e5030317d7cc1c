use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("manifest CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("manifest row {row}: {reason}")]
    InvalidRecord { row: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
    #[default]
    #[serde(rename = "")]
    Unassigned,
}

impl Split {
    pub const ASSIGNABLE: [Split; 3] = [Split::Train, Split::Validation, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
            Split::Unassigned => "unassigned",
        }
    }

    pub fn index(self) -> Option<usize> {
        Split::ASSIGNABLE.iter().position(|&s| s == self)
    }
}

/// One performance, in the column layout of the released metadata CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    #[serde(rename = "canonical_composer")]
    pub composer: String,
    #[serde(rename = "canonical_title")]
    pub title: String,
    pub split: Split,
    pub year: i32,
    #[serde(rename = "midi_filename")]
    pub midi_path: String,
    #[serde(rename = "audio_filename")]
    pub audio_path: String,
    pub duration: f64,
}

impl ManifestRecord {
    /// Performances are identified by their MIDI path.
    pub fn performance_id(&self) -> &str {
        &self.midi_path
    }

    pub fn composition_key(&self) -> String {
        composition_key(&self.composer, &self.title)
    }
}

pub(super) fn normalize_text(s: &str) -> String {
    let lowered: String = s
        .chars()
        .flat_map(char::to_lowercase)
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect();
    let words: Vec<&str> = lowered.split_whitespace().collect();
    let mut out: Vec<String> = Vec::with_capacity(words.len());
    let mut i = 0;
    while i < words.len() {
        let w = words[i];
        // "Op. 10", "op10" and "Op 10" all become "op10"; likewise for "no".
        if (w == "op" || w == "no") && i + 1 < words.len() && words[i + 1].starts_with(|c: char| c.is_ascii_digit()) {
            out.push(format!("{w}{}", words[i + 1]));
            i += 2;
        } else {
            out.push(w.to_string());
            i += 1;
        }
    }
    out.join(" ")
}

/// Case- and punctuation-insensitive identity of a composition.
pub fn composition_key(composer: &str, title: &str) -> String {
    format!("{}|{}", normalize_text(composer), normalize_text(title))
}

pub fn read_manifest<R: Read>(reader: R) -> Result<Vec<ManifestRecord>, ManifestError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut records = Vec::new();
    for (row, rec) in rdr.deserialize::<ManifestRecord>().enumerate() {
        let rec = rec?;
        let invalid = |reason: &str| ManifestError::InvalidRecord { row: row + 1, reason: reason.into() };
        if !(rec.duration > 0.0) {
            return Err(invalid("duration must be positive"));
        }
        if rec.composer.trim().is_empty() || rec.title.trim().is_empty() {
            return Err(invalid("composer and title must be non-empty"));
        }
        records.push(rec);
    }
    Ok(records)
}

pub fn write_manifest<W: Write>(writer: W, records: &[ManifestRecord]) -> Result<(), ManifestError> {
    let mut w = csv::Writer::from_writer(writer);
    for r in records {
        w.serialize(r)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}
