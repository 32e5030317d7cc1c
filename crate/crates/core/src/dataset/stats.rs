use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::manifest::{ManifestRecord, Split};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsRow {
    pub split: String,
    pub performances: usize,
    /// Distinct composition keys; approximate because keys are fuzzy-normalized.
    pub compositions: usize,
    pub hours: f64,
    /// Present only when note counts are known for every performance in the row.
    pub notes: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StatsTable {
    pub rows: Vec<StatsRow>,
}

impl StatsTable {
    pub fn row(&self, split: &str) -> Option<&StatsRow> {
        self.rows.iter().find(|r| r.split == split)
    }
}

impl fmt::Display for StatsTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<12} {:>12} {:>12} {:>10} {:>12}", "split", "performances", "compositions", "hours", "notes (M)")?;
        for r in &self.rows {
            let notes = r.notes.map_or("-".to_string(), |n| format!("{:.2}", n as f64 / 1e6));
            writeln!(f, "{:<12} {:>12} {:>12} {:>10.1} {:>12}", r.split, r.performances, r.compositions, r.hours, notes)?;
        }
        Ok(())
    }
}

/// Per-split and total counts. `note_counts` maps performance ids to note counts.
pub fn compute_stats(records: &[ManifestRecord], note_counts: Option<&BTreeMap<String, u64>>) -> StatsTable {
    if records.is_empty() {
        return StatsTable::default();
    }
    let row = |name: &str, members: Vec<&ManifestRecord>| {
        let compositions: BTreeSet<String> = members.iter().map(|r| r.composition_key()).collect();
        let notes = note_counts.and_then(|nc| members.iter().map(|r| nc.get(r.performance_id()).copied()).sum());
        StatsRow {
            split: name.to_string(),
            performances: members.len(),
            compositions: compositions.len(),
            hours: members.iter().map(|r| r.duration).sum::<f64>() / 3600.0,
            notes,
        }
    };
    let mut rows = Vec::new();
    for split in [Split::Train, Split::Validation, Split::Test, Split::Unassigned] {
        let members: Vec<&ManifestRecord> = records.iter().filter(|r| r.split == split).collect();
        if !members.is_empty() || split != Split::Unassigned {
            rows.push(row(split.name(), members));
        }
    }
    rows.push(row("total", records.iter().collect()));
    StatsTable { rows }
}
