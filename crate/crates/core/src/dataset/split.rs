use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::manifest::{normalize_text, ManifestRecord, Split};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitConfig {
    /// Target fractions of total time for train, validation and test.
    pub targets: [f64; 3],
    /// Compositions with at least this many performances always go to train.
    pub popularity_threshold: usize,
    /// Composers with at least this many compositions are balanced individually.
    pub composer_min_compositions: usize,
    /// Weight of the per-composer deficit relative to the global one.
    pub composer_weight: f64,
    /// Allowed deviation from the target fractions, as a fraction.
    pub tolerance: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            targets: [0.8, 0.1, 0.1],
            popularity_threshold: 5,
            composer_min_compositions: 3,
            composer_weight: 0.5,
            tolerance: 0.03,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitAssignment {
    /// Performance id to split.
    pub assignments: BTreeMap<String, Split>,
    pub warnings: Vec<String>,
}

impl SplitAssignment {
    pub fn get(&self, performance_id: &str) -> Split {
        self.assignments.get(performance_id).copied().unwrap_or(Split::Unassigned)
    }

    /// Copies of `records` with their split column filled in.
    pub fn apply(&self, records: &[ManifestRecord]) -> Vec<ManifestRecord> {
        records.iter().map(|r| ManifestRecord { split: self.get(r.performance_id()), ..r.clone() }).collect()
    }
}

struct Composition {
    composer: String,
    duration: f64,
    performances: Vec<String>,
}

fn group(records: &[ManifestRecord]) -> Vec<Composition> {
    let mut by_key: BTreeMap<String, Composition> = BTreeMap::new();
    for r in records {
        let key = r.composition_key();
        let c = by_key.entry(key).or_insert_with(|| Composition {
            composer: normalize_text(&r.composer),
            duration: 0.0,
            performances: Vec::new(),
        });
        c.duration += r.duration;
        c.performances.push(r.performance_id().to_string());
    }
    by_key.into_values().collect()
}

/// Assigns whole compositions to splits, largest first, each to the split furthest below
/// its time target globally and (for composers with enough compositions) per composer.
/// Ties go to train, then validation, then test. Equal-duration compositions are ordered by
/// a shuffle seeded with `seed`.
pub fn make_split(records: &[ManifestRecord], cfg: &SplitConfig, seed: u64) -> SplitAssignment {
    let mut compositions = group(records);
    let total: f64 = compositions.iter().map(|c| c.duration).sum();
    let mut composer_total: BTreeMap<String, f64> = BTreeMap::new();
    let mut composer_count: BTreeMap<String, usize> = BTreeMap::new();
    for c in &compositions {
        *composer_total.entry(c.composer.clone()).or_default() += c.duration;
        *composer_count.entry(c.composer.clone()).or_default() += 1;
    }

    let mut assigned = [0.0f64; 3];
    let mut composer_assigned: BTreeMap<String, [f64; 3]> = BTreeMap::new();
    let mut assignments = BTreeMap::new();
    let assign = |c: &Composition,
                  split: Split,
                  assigned: &mut [f64; 3],
                  composer_assigned: &mut BTreeMap<String, [f64; 3]>,
                  assignments: &mut BTreeMap<String, Split>| {
        let idx = split.index().unwrap();
        assigned[idx] += c.duration;
        composer_assigned.entry(c.composer.clone()).or_default()[idx] += c.duration;
        for p in &c.performances {
            assignments.insert(p.clone(), split);
        }
    };

    let (popular, mut rest): (Vec<Composition>, Vec<Composition>) =
        compositions.drain(..).partition(|c| c.performances.len() >= cfg.popularity_threshold);
    for c in &popular {
        assign(c, Split::Train, &mut assigned, &mut composer_assigned, &mut assignments);
    }
    rest.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    rest.sort_by(|a, b| b.duration.total_cmp(&a.duration));

    for c in &rest {
        let balance_composer = composer_count[&c.composer] >= cfg.composer_min_compositions;
        let ctotal = composer_total[&c.composer];
        let cassigned = composer_assigned.get(&c.composer).copied().unwrap_or_default();
        let score = |i: usize| {
            let global = (cfg.targets[i] * total - assigned[i]) / total;
            let composer = if balance_composer {
                cfg.composer_weight * (cfg.targets[i] * ctotal - cassigned[i]) / ctotal
            } else {
                0.0
            };
            global + composer
        };
        // Strict comparison keeps the earlier split on ties.
        let best = (1..3).fold(0, |b, i| if score(i) > score(b) { i } else { b });
        assign(c, Split::ASSIGNABLE[best], &mut assigned, &mut composer_assigned, &mut assignments);
    }

    let mut warnings = Vec::new();
    for (i, split) in Split::ASSIGNABLE.iter().enumerate().skip(1) {
        if assigned[i] == 0.0 && !records.is_empty() {
            warnings.push(format!("{} split is empty", split.name()));
        }
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    SplitAssignment { assignments, warnings }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    /// Hard: one composition in several splits.
    CompositionSpansSplits { composition: String, splits: Vec<Split> },
    /// Hard: a performance without a split.
    Unassigned { performance_id: String },
    GlobalProportion { split: Split, actual: f64, target: f64 },
    ComposerProportion { composer: String, split: Split, actual: f64, target: f64 },
}

impl Violation {
    pub fn is_hard(&self) -> bool {
        matches!(self, Violation::CompositionSpansSplits { .. } | Violation::Unassigned { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitReport {
    /// Fractions of total time in train, validation and test.
    pub proportions: [f64; 3],
    pub violations: Vec<Violation>,
}

impl SplitReport {
    pub fn hard_violations(&self) -> impl Iterator<Item = &Violation> {
        self.violations.iter().filter(|v| v.is_hard())
    }

    pub fn proportions_ok(&self) -> bool {
        !self.violations.iter().any(|v| matches!(v, Violation::GlobalProportion { .. }))
    }
}

fn fractions(durations: &[f64; 3]) -> [f64; 3] {
    let total: f64 = durations.iter().sum();
    if total > 0.0 {
        durations.map(|d| d / total)
    } else {
        [0.0; 3]
    }
}

/// Checks composition disjointness and time proportions, globally and for composers with
/// enough compositions.
pub fn verify_split(assignment: &SplitAssignment, records: &[ManifestRecord], cfg: &SplitConfig) -> SplitReport {
    let mut violations = Vec::new();
    let mut by_composition: BTreeMap<String, BTreeSet<Split>> = BTreeMap::new();
    let mut global = [0.0; 3];
    let mut per_composer: BTreeMap<String, ([f64; 3], BTreeSet<String>)> = BTreeMap::new();
    for r in records {
        let split = assignment.get(r.performance_id());
        by_composition.entry(r.composition_key()).or_default().insert(split);
        match split.index() {
            Some(i) => {
                global[i] += r.duration;
                let e = per_composer.entry(normalize_text(&r.composer)).or_default();
                e.0[i] += r.duration;
                e.1.insert(r.composition_key());
            }
            None => violations.push(Violation::Unassigned { performance_id: r.performance_id().to_string() }),
        }
    }
    for (composition, splits) in by_composition {
        if splits.len() > 1 {
            violations.push(Violation::CompositionSpansSplits { composition, splits: splits.into_iter().collect() });
        }
    }
    let proportions = fractions(&global);
    for (i, split) in Split::ASSIGNABLE.iter().enumerate() {
        if (proportions[i] - cfg.targets[i]).abs() > cfg.tolerance {
            violations.push(Violation::GlobalProportion { split: *split, actual: proportions[i], target: cfg.targets[i] });
        }
    }
    for (composer, (durations, compositions)) in per_composer {
        if compositions.len() < cfg.composer_min_compositions {
            continue;
        }
        let p = fractions(&durations);
        for (i, split) in Split::ASSIGNABLE.iter().enumerate() {
            if (p[i] - cfg.targets[i]).abs() > cfg.tolerance {
                violations.push(Violation::ComposerProportion {
                    composer: composer.clone(),
                    split: *split,
                    actual: p[i],
                    target: cfg.targets[i],
                });
            }
        }
    }
    SplitReport { proportions, violations }
}
