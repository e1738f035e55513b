//! Longline set records: validation, CSV ingestion and pooling.
//!
//! One row per set is the primary format:
//!
//! ```text
//! set_id,n_hooks,n_baited,n_target,n_nontarget,n_empty,n_unknown,soak_minutes[,year,area]
//! ```
//!
//! A hook-level format (`set_id,hook_index,condition,soak_minutes`, condition one of
//! `B`, `T`, `NT`, `E`, `U`) is reduced to set records by counting.
//!
//! Hooks that did not come back (`n_unknown`) carry no outcome information and are
//! removed from the hook count before any estimation, see [`SetRecord::effective_hooks`].

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::DataError;

/// Default relative soak-time spread accepted by [`pool`].
pub const DEFAULT_SOAK_TOLERANCE: f64 = 0.05;

/// Outcome counts and effort for one longline set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetRecord {
    pub set_id: String,
    pub n_hooks: u64,
    pub n_baited: u64,
    pub n_target: u64,
    pub n_nontarget: u64,
    pub n_empty: u64,
    #[serde(default)]
    pub n_unknown: u64,
    /// Soak time in minutes.
    pub soak_time: f64,
    #[serde(default)]
    pub year: Option<i32>,
    #[serde(default)]
    pub area: Option<String>,
}

impl SetRecord {
    /// Builds a record without year/area labels and validates it.
    pub fn new(
        set_id: impl Into<String>,
        n_hooks: u64,
        n_baited: u64,
        n_target: u64,
        n_nontarget: u64,
        n_empty: u64,
        n_unknown: u64,
        soak_time: f64,
    ) -> Result<Self, DataError> {
        let record = Self {
            set_id: set_id.into(),
            n_hooks,
            n_baited,
            n_target,
            n_nontarget,
            n_empty,
            n_unknown,
            soak_time,
            year: None,
            area: None,
        };
        record.validate(None)?;
        Ok(record)
    }

    pub fn with_group(mut self, year: Option<i32>, area: Option<String>) -> Self {
        self.year = year;
        self.area = area;
        self
    }

    /// Checks the count identity and the soak time.
    pub fn validate(&self, row: Option<u64>) -> Result<(), DataError> {
        let total = self.n_baited as u128
            + self.n_target as u128
            + self.n_nontarget as u128
            + self.n_empty as u128
            + self.n_unknown as u128;
        if total != self.n_hooks as u128 {
            return Err(DataError::Invalid {
                set_id: self.set_id.clone(),
                row,
                reason: format!(
                    "hook outcomes sum to {total} but n_hooks is {}",
                    self.n_hooks
                ),
            });
        }
        if !(self.soak_time.is_finite() && self.soak_time > 0.0) {
            return Err(DataError::Invalid {
                set_id: self.set_id.clone(),
                row,
                reason: format!("soak time must be positive, got {}", self.soak_time),
            });
        }
        Ok(())
    }

    /// Hooks with an observed outcome: `n_hooks - n_unknown`.
    pub fn effective_hooks(&self) -> u64 {
        self.n_hooks - self.n_unknown
    }

    /// Outcome counts in multinomial cell order (baited, target, non-target, empty).
    pub fn outcome_counts(&self) -> [u64; 4] {
        [self.n_baited, self.n_target, self.n_nontarget, self.n_empty]
    }

    pub fn group_key(&self) -> GroupKey {
        GroupKey {
            year: self.year,
            area: self.area.clone(),
        }
    }
}

/// Grouping key used by per-year / per-area analyses.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GroupKey {
    pub year: Option<i32>,
    pub area: Option<String>,
}

impl fmt::Display for GroupKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let year = self.year.map_or_else(|| "*".to_string(), |y| y.to_string());
        let area = self.area.as_deref().unwrap_or("*");
        write!(f, "year={year} area={area}")
    }
}

/// Which labels to split a dataset on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct GroupBy {
    pub year: bool,
    pub area: bool,
}

/// An ordered collection of validated set records.
///
/// Set identifiers are unique within each (year, area) group.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Dataset {
    records: Vec<SetRecord>,
}

impl Dataset {
    pub fn new(records: Vec<SetRecord>) -> Result<Self, DataError> {
        let mut seen: HashSet<(GroupKey, &str)> = HashSet::with_capacity(records.len());
        for (i, record) in records.iter().enumerate() {
            record.validate(Some(i as u64 + 1))?;
            if !seen.insert((record.group_key(), record.set_id.as_str())) {
                return Err(DataError::DuplicateSet {
                    set_id: record.set_id.clone(),
                    group: record.group_key().to_string(),
                });
            }
        }
        Ok(Self { records })
    }

    /// Wraps records that are already known to be valid, skipping the uniqueness check.
    /// Used for bootstrap resamples, which repeat sets by construction.
    pub(crate) fn from_trusted(records: Vec<SetRecord>) -> Self {
        Self { records }
    }

    pub fn records(&self) -> &[SetRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<SetRecord> {
        self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn total_effective_hooks(&self) -> u64 {
        self.records.iter().map(SetRecord::effective_hooks).sum()
    }

    pub fn mean_soak(&self) -> Option<f64> {
        if self.records.is_empty() {
            return None;
        }
        Some(self.records.iter().map(|r| r.soak_time).sum::<f64>() / self.records.len() as f64)
    }

    /// True when every set has the same soak time and the same effective hook count.
    pub fn has_uniform_effort(&self) -> bool {
        match self.records.first() {
            None => false,
            Some(first) => self.records.iter().all(|r| {
                r.soak_time == first.soak_time && r.effective_hooks() == first.effective_hooks()
            }),
        }
    }

    /// Splits into groups. Groups are returned in key order.
    ///
    /// When a label is not grouped on it is dropped from the key and, to keep set
    /// identifiers unique inside the merged group, prefixed onto the set id.
    pub fn group_by(&self, by: GroupBy) -> BTreeMap<GroupKey, Dataset> {
        let mut groups: BTreeMap<GroupKey, Vec<SetRecord>> = BTreeMap::new();
        for record in &self.records {
            let key = GroupKey {
                year: if by.year { record.year } else { None },
                area: if by.area { record.area.clone() } else { None },
            };
            let mut record = record.clone();
            let mut prefix = Vec::new();
            if !by.year {
                if let Some(y) = record.year {
                    prefix.push(y.to_string());
                }
            }
            if !by.area {
                if let Some(a) = &record.area {
                    prefix.push(a.clone());
                }
            }
            if !prefix.is_empty() {
                record.set_id = format!("{}/{}", prefix.join("/"), record.set_id);
            }
            groups.entry(key).or_default().push(record);
        }
        groups
            .into_iter()
            .map(|(k, records)| (k, Dataset::from_trusted(records)))
            .collect()
    }

    /// Keeps records matching the optional year and area filters.
    pub fn filter(&self, year: Option<i32>, area: Option<&str>) -> Dataset {
        Dataset::from_trusted(
            self.records
                .iter()
                .filter(|r| year.is_none_or(|y| r.year == Some(y)))
                .filter(|r| area.is_none_or(|a| r.area.as_deref() == Some(a)))
                .cloned()
                .collect(),
        )
    }
}

/// Summed outcome counts of sets sharing one soak time.
///
/// Unknown hooks are already removed: `n_hooks_total` counts hooks with an observed
/// outcome, so `n_hooks_total = n_baited + n_target + n_nontarget + n_empty`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PooledCounts {
    pub n_hooks_total: u64,
    pub n_baited_total: u64,
    pub n_target_total: u64,
    pub n_nontarget_total: u64,
    pub n_empty_total: u64,
    pub soak_time: f64,
    pub n_sets: usize,
}

impl PooledCounts {
    /// Builds pooled counts directly; `n_hooks_total` is the sum of the four outcomes.
    pub fn from_outcomes(
        n_baited: u64,
        n_target: u64,
        n_nontarget: u64,
        n_empty: u64,
        soak_time: f64,
        n_sets: usize,
    ) -> Result<Self, DataError> {
        if !(soak_time.is_finite() && soak_time > 0.0) {
            return Err(DataError::Invalid {
                set_id: "<pooled>".into(),
                row: None,
                reason: format!("soak time must be positive, got {soak_time}"),
            });
        }
        Ok(Self {
            n_hooks_total: n_baited + n_target + n_nontarget + n_empty,
            n_baited_total: n_baited,
            n_target_total: n_target,
            n_nontarget_total: n_nontarget,
            n_empty_total: n_empty,
            soak_time,
            n_sets,
        })
    }

    /// Hooks that lost their bait: `N - N_B`.
    pub fn n_unbaited(&self) -> u64 {
        self.n_hooks_total - self.n_baited_total
    }

    pub fn outcome_counts(&self) -> [u64; 4] {
        [
            self.n_baited_total,
            self.n_target_total,
            self.n_nontarget_total,
            self.n_empty_total,
        ]
    }

    /// Same counts with a different soak time.
    pub fn with_soak(mut self, soak_time: f64) -> Self {
        self.soak_time = soak_time;
        self
    }
}

/// Sums counts across sets; the soak time is the mean of the member soak times.
///
/// Fails with [`DataError::VariableSoak`] when `(max - min) / mean` exceeds
/// `soak_tolerance`; such data need the variable-soak numerical fit.
pub fn pool(dataset: &Dataset, soak_tolerance: f64) -> Result<PooledCounts, DataError> {
    let records = dataset.records();
    if records.is_empty() {
        return Err(DataError::Empty);
    }
    let (mut min, mut max, mut sum) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
    let mut totals = [0u64; 4];
    for r in records {
        min = min.min(r.soak_time);
        max = max.max(r.soak_time);
        sum += r.soak_time;
        for (t, c) in totals.iter_mut().zip(r.outcome_counts()) {
            *t += c;
        }
    }
    let mean = sum / records.len() as f64;
    let spread = (max - min) / mean;
    if spread > soak_tolerance {
        return Err(DataError::VariableSoak {
            min,
            max,
            spread,
            tolerance: soak_tolerance,
        });
    }
    PooledCounts::from_outcomes(totals[0], totals[1], totals[2], totals[3], mean, records.len())
}

/// Input layout accepted by [`parse_records`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputFormat {
    /// One row per set.
    #[default]
    Sets,
    /// One row per hook with a condition code.
    Hooks,
}

#[derive(Debug, Clone, Default)]
pub struct ParseOptions {
    pub format: InputFormat,
}

const SET_COLUMNS: [&str; 8] = [
    "set_id",
    "n_hooks",
    "n_baited",
    "n_target",
    "n_nontarget",
    "n_empty",
    "n_unknown",
    "soak_minutes",
];
const HOOK_COLUMNS: [&str; 4] = ["set_id", "hook_index", "condition", "soak_minutes"];

/// Reads a CSV stream into a validated [`Dataset`].
pub fn parse_records<R: Read>(source: R, options: &ParseOptions) -> Result<Dataset, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(source);
    let headers = reader.headers()?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(DataError::Empty);
    }
    let index: HashMap<&str, usize> = headers.iter().enumerate().map(|(i, h)| (h, i)).collect();
    let required: &[&str] = match options.format {
        InputFormat::Sets => &SET_COLUMNS,
        InputFormat::Hooks => &HOOK_COLUMNS,
    };
    for column in required {
        if !index.contains_key(column) {
            return Err(DataError::MissingColumn(column.to_string()));
        }
    }
    let dataset = match options.format {
        InputFormat::Sets => parse_set_rows(&mut reader, &index)?,
        InputFormat::Hooks => parse_hook_rows(&mut reader, &index)?,
    };
    if dataset.is_empty() {
        return Err(DataError::Empty);
    }
    Ok(dataset)
}

struct Row<'a> {
    record: &'a csv::StringRecord,
    index: &'a HashMap<&'a str, usize>,
    line: u64,
}

impl Row<'_> {
    fn text(&self, column: &str) -> Option<&str> {
        self.index
            .get(column)
            .and_then(|&i| self.record.get(i))
            .filter(|s| !s.is_empty())
    }

    fn required(&self, column: &str) -> Result<&str, DataError> {
        self.text(column).ok_or_else(|| DataError::Field {
            line: self.line,
            column: column.to_string(),
            value: String::new(),
        })
    }

    fn parse<T: std::str::FromStr>(&self, column: &str) -> Result<T, DataError> {
        let raw = self.required(column)?;
        raw.parse().map_err(|_| DataError::Field {
            line: self.line,
            column: column.to_string(),
            value: raw.to_string(),
        })
    }

    fn parse_optional<T: std::str::FromStr>(&self, column: &str) -> Result<Option<T>, DataError> {
        match self.text(column) {
            None => Ok(None),
            Some(_) => self.parse(column).map(Some),
        }
    }
}

fn parse_set_rows<R: Read>(
    reader: &mut csv::Reader<R>,
    index: &HashMap<&str, usize>,
) -> Result<Dataset, DataError> {
    let mut records = Vec::new();
    let mut lines = Vec::new();
    for result in reader.records() {
        let raw = result?;
        let line = raw.position().map_or(0, |p| p.line());
        let row = Row {
            record: &raw,
            index,
            line,
        };
        let record = SetRecord {
            set_id: row.required("set_id")?.to_string(),
            n_hooks: row.parse("n_hooks")?,
            n_baited: row.parse("n_baited")?,
            n_target: row.parse("n_target")?,
            n_nontarget: row.parse("n_nontarget")?,
            n_empty: row.parse("n_empty")?,
            n_unknown: row.parse_optional("n_unknown")?.unwrap_or(0),
            soak_time: row.parse("soak_minutes")?,
            year: row.parse_optional("year")?,
            area: row.text("area").map(str::to_string),
        };
        record.validate(Some(line))?;
        records.push(record);
        lines.push(line);
    }
    check_unique(&records, &lines)?;
    Ok(Dataset::from_trusted(records))
}

fn check_unique(records: &[SetRecord], lines: &[u64]) -> Result<(), DataError> {
    let mut seen = HashSet::new();
    for (record, line) in records.iter().zip(lines) {
        if !seen.insert((record.group_key(), record.set_id.as_str())) {
            return Err(DataError::DuplicateSet {
                set_id: format!("{} (line {line})", record.set_id),
                group: record.group_key().to_string(),
            });
        }
    }
    Ok(())
}

/// Hook condition codes of the hook-level format.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HookCondition {
    Baited,
    Target,
    NonTarget,
    Empty,
    Unknown,
}

impl std::str::FromStr for HookCondition {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "B" => Ok(Self::Baited),
            "T" => Ok(Self::Target),
            "NT" => Ok(Self::NonTarget),
            "E" => Ok(Self::Empty),
            "U" => Ok(Self::Unknown),
            _ => Err(()),
        }
    }
}

fn parse_hook_rows<R: Read>(
    reader: &mut csv::Reader<R>,
    index: &HashMap<&str, usize>,
) -> Result<Dataset, DataError> {
    struct Acc {
        record: SetRecord,
        hooks: HashSet<u64>,
        first_line: u64,
    }
    let mut order: Vec<GroupedId> = Vec::new();
    let mut sets: HashMap<GroupedId, Acc> = HashMap::new();

    for result in reader.records() {
        let raw = result?;
        let line = raw.position().map_or(0, |p| p.line());
        let row = Row {
            record: &raw,
            index,
            line,
        };
        let set_id = row.required("set_id")?.to_string();
        let hook: u64 = row.parse("hook_index")?;
        let condition_raw = row.required("condition")?;
        let condition: HookCondition =
            condition_raw.parse().map_err(|_| DataError::Field {
                line,
                column: "condition".into(),
                value: condition_raw.to_string(),
            })?;
        let soak: f64 = row.parse("soak_minutes")?;
        let year: Option<i32> = row.parse_optional("year")?;
        let area = row.text("area").map(str::to_string);
        let key = GroupedId {
            group: GroupKey {
                year,
                area: area.clone(),
            },
            set_id: set_id.clone(),
        };
        let acc = sets.entry(key.clone()).or_insert_with(|| {
            order.push(key.clone());
            Acc {
                record: SetRecord {
                    set_id,
                    n_hooks: 0,
                    n_baited: 0,
                    n_target: 0,
                    n_nontarget: 0,
                    n_empty: 0,
                    n_unknown: 0,
                    soak_time: soak,
                    year,
                    area,
                },
                hooks: HashSet::new(),
                first_line: line,
            }
        });
        if acc.record.soak_time != soak {
            return Err(DataError::Invalid {
                set_id: acc.record.set_id.clone(),
                row: Some(line),
                reason: format!(
                    "soak time {soak} differs from {} given on line {}",
                    acc.record.soak_time, acc.first_line
                ),
            });
        }
        if !acc.hooks.insert(hook) {
            return Err(DataError::Invalid {
                set_id: acc.record.set_id.clone(),
                row: Some(line),
                reason: format!("hook {hook} recorded twice"),
            });
        }
        let r = &mut acc.record;
        r.n_hooks += 1;
        match condition {
            HookCondition::Baited => r.n_baited += 1,
            HookCondition::Target => r.n_target += 1,
            HookCondition::NonTarget => r.n_nontarget += 1,
            HookCondition::Empty => r.n_empty += 1,
            HookCondition::Unknown => r.n_unknown += 1,
        }
    }

    let mut records = Vec::with_capacity(order.len());
    for key in order {
        let acc = sets.remove(&key).expect("key recorded on insert");
        acc.record.validate(Some(acc.first_line))?;
        records.push(acc.record);
    }
    Ok(Dataset::from_trusted(records))
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct GroupedId {
    group: GroupKey,
    set_id: String,
}

/// Writes the set-level CSV format. `year` and `area` columns are emitted when any
/// record carries them.
pub fn write_records<W: Write>(dataset: &Dataset, sink: W) -> Result<(), DataError> {
    let with_year = dataset.records().iter().any(|r| r.year.is_some());
    let with_area = dataset.records().iter().any(|r| r.area.is_some());
    let mut writer = csv::Writer::from_writer(sink);
    let mut header: Vec<&str> = SET_COLUMNS.to_vec();
    if with_year || with_area {
        header.push("year");
        header.push("area");
    }
    writer.write_record(&header)?;
    for r in dataset.records() {
        let mut fields = vec![
            r.set_id.clone(),
            r.n_hooks.to_string(),
            r.n_baited.to_string(),
            r.n_target.to_string(),
            r.n_nontarget.to_string(),
            r.n_empty.to_string(),
            r.n_unknown.to_string(),
            format_soak(r.soak_time),
        ];
        if with_year || with_area {
            fields.push(r.year.map(|y| y.to_string()).unwrap_or_default());
            fields.push(r.area.clone().unwrap_or_default());
        }
        writer.write_record(&fields)?;
    }
    writer.flush().map_err(|e| DataError::Io(e.to_string()))?;
    Ok(())
}

// Shortest representation that parses back to the same f64.
fn format_soak(soak: f64) -> String {
    format!("{soak}")
}
