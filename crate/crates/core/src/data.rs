// SPDX-License-Identifier: MIT OR Apache-2.0

//! Dataset representation, cleaning, 6-way splitting and window sampling.
//!
//! A [`TimeSeriesDataset`] is a users × time grid of scalar readings with an
//! observation mask. Splitting crosses two user groups (`in`, `out`) with three
//! contiguous periods (`train`, `valid`, `test`), giving the six named
//! [`SplitName`]s. Windows never straddle a period boundary.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{Read, Write};
use std::ops::Range;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("dataset needs at least 2 users, got {0}")]
    TooFewUsers(usize),
    #[error("period `{period}` has {len} steps, shorter than L+H = {needed}")]
    PeriodTooShort {
        period: &'static str,
        len: usize,
        needed: usize,
    },
    #[error("no usable windows in split {0}")]
    NoUsableWindows(SplitName),
    #[error("invalid split fractions: {0}")]
    InvalidFractions(String),
    #[error("invalid window spec: L={lookback}, H={horizon} (need L >= 2, H >= 1)")]
    InvalidWindowSpec { lookback: usize, horizon: usize },
    #[error("ragged dataset: user `{user}` has {got} steps, expected {expected}")]
    Ragged {
        user: String,
        got: usize,
        expected: usize,
    },
    #[error("unknown user `{0}`")]
    UnknownUser(String),
    #[error("malformed csv: {0}")]
    Malformed(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Look-back and horizon lengths, in time-steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WindowSpec {
    pub lookback: usize,
    pub horizon: usize,
}

impl WindowSpec {
    pub fn new(lookback: usize, horizon: usize) -> Result<Self, DataError> {
        if lookback < 2 || horizon < 1 {
            return Err(DataError::InvalidWindowSpec { lookback, horizon });
        }
        Ok(Self { lookback, horizon })
    }

    pub fn total(&self) -> usize {
        self.lookback + self.horizon
    }
}

impl fmt::Display for WindowSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.lookback, self.horizon)
    }
}

/// A look-back `x` and the horizon `y` that immediately follows it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowPair {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Index of the user in the source dataset.
    pub user: usize,
    /// Time index of `x[0]`.
    pub start: usize,
}

/// Users × time grid. Missing entries hold 0 and are `false` in the mask.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesDataset {
    user_ids: Vec<String>,
    values: Vec<Vec<f64>>,
    mask: Vec<Vec<bool>>,
    /// Window start positions removed by cleaning (constant look-backs).
    blocked: Vec<Vec<bool>>,
    timestamps: Vec<String>,
    pub frequency: Option<String>,
}

impl TimeSeriesDataset {
    /// Fully observed dataset; one row of `values` per user.
    pub fn new(user_ids: Vec<String>, values: Vec<Vec<f64>>) -> Result<Self, DataError> {
        let mask = values.iter().map(|row| vec![true; row.len()]).collect();
        Self::with_mask(user_ids, values, mask)
    }

    pub fn with_mask(
        user_ids: Vec<String>,
        mut values: Vec<Vec<f64>>,
        mask: Vec<Vec<bool>>,
    ) -> Result<Self, DataError> {
        if user_ids.len() != values.len() || mask.len() != values.len() {
            return Err(DataError::Malformed(format!(
                "{} user ids, {} value rows, {} mask rows",
                user_ids.len(),
                values.len(),
                mask.len()
            )));
        }
        let len = values.first().map_or(0, Vec::len);
        for (i, (row, m)) in values.iter_mut().zip(&mask).enumerate() {
            if row.len() != len || m.len() != len {
                return Err(DataError::Ragged {
                    user: user_ids[i].clone(),
                    got: row.len().min(m.len()),
                    expected: len,
                });
            }
            for (v, &observed) in row.iter_mut().zip(m) {
                if !observed {
                    *v = 0.0;
                }
            }
        }
        let blocked = values.iter().map(|_| vec![false; len]).collect();
        Ok(Self {
            user_ids,
            values,
            mask,
            blocked,
            timestamps: (0..len).map(|t| t.to_string()).collect(),
            frequency: None,
        })
    }

    pub fn with_timestamps(mut self, timestamps: Vec<String>) -> Result<Self, DataError> {
        if timestamps.len() != self.len() {
            return Err(DataError::Malformed(format!(
                "{} timestamps for {} steps",
                timestamps.len(),
                self.len()
            )));
        }
        self.timestamps = timestamps;
        Ok(self)
    }

    pub fn n_users(&self) -> usize {
        self.user_ids.len()
    }

    /// Number of time-steps.
    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.n_users() == 0 || self.len() == 0
    }

    pub fn user_ids(&self) -> &[String] {
        &self.user_ids
    }

    pub fn user_index(&self, id: &str) -> Option<usize> {
        self.user_ids.iter().position(|u| u == id)
    }

    pub fn series(&self, user: usize) -> &[f64] {
        &self.values[user]
    }

    pub fn mask(&self, user: usize) -> &[bool] {
        &self.mask[user]
    }

    pub fn timestamps(&self) -> &[String] {
        &self.timestamps
    }

    pub fn is_blocked(&self, user: usize, start: usize) -> bool {
        self.blocked[user][start]
    }

    /// Window at `(user, start)` without any usability checks.
    pub fn window(&self, user: usize, start: usize, spec: WindowSpec) -> WindowPair {
        let s = &self.values[user];
        WindowPair {
            x: s[start..start + spec.lookback].to_vec(),
            y: s[start + spec.lookback..start + spec.total()].to_vec(),
            user,
            start,
        }
    }

    /// Keep only the listed users, in the given order.
    fn select_users(&self, keep: &[usize]) -> Self {
        Self {
            user_ids: keep.iter().map(|&u| self.user_ids[u].clone()).collect(),
            values: keep.iter().map(|&u| self.values[u].clone()).collect(),
            mask: keep.iter().map(|&u| self.mask[u].clone()).collect(),
            blocked: keep.iter().map(|&u| self.blocked[u].clone()).collect(),
            timestamps: self.timestamps.clone(),
            frequency: self.frequency.clone(),
        }
    }

    /// Drop users by identifier. Unknown identifiers are an error.
    pub fn exclude_users(&self, ids: &[String]) -> Result<(Self, RemovalReport), DataError> {
        let mut report = RemovalReport::default();
        let mut excluded = BTreeSet::new();
        for id in ids {
            let u = self
                .user_index(id)
                .ok_or_else(|| DataError::UnknownUser(id.clone()))?;
            excluded.insert(u);
            report.entries.push(Removal {
                user: id.clone(),
                start: 0,
                end: self.len(),
                reason: RemovalReason::Excluded,
            });
        }
        let keep: Vec<usize> = (0..self.n_users()).filter(|u| !excluded.contains(u)).collect();
        Ok((self.select_users(&keep), report))
    }

    /// Parse a wide (`time,<user>...`) or long (`time,user,value`) CSV.
    ///
    /// The long layout is detected by its exact three-column header. Empty
    /// cells are missing values.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self, DataError> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr.headers()?.clone();
        let lower: Vec<String> = headers.iter().map(|h| h.to_ascii_lowercase()).collect();
        if lower == ["time", "user", "value"] {
            Self::read_long(rdr)
        } else {
            Self::read_wide(rdr, &headers)
        }
    }

    fn read_wide<R: Read>(
        mut rdr: csv::Reader<R>,
        headers: &csv::StringRecord,
    ) -> Result<Self, DataError> {
        if headers.len() < 2 {
            return Err(DataError::Malformed(
                "wide csv needs a time column and at least one user column".into(),
            ));
        }
        let user_ids: Vec<String> = headers.iter().skip(1).map(str::to_owned).collect();
        let mut values = vec![Vec::new(); user_ids.len()];
        let mut mask = vec![Vec::new(); user_ids.len()];
        let mut timestamps = Vec::new();
        for (line, record) in rdr.records().enumerate() {
            let record = record?;
            if record.len() != headers.len() {
                return Err(DataError::Malformed(format!(
                    "row {} has {} fields, expected {}",
                    line + 2,
                    record.len(),
                    headers.len()
                )));
            }
            timestamps.push(record[0].to_owned());
            for (u, cell) in record.iter().skip(1).enumerate() {
                let (v, observed) = parse_cell(cell, line + 2)?;
                values[u].push(v);
                mask[u].push(observed);
            }
        }
        Self::with_mask(user_ids, values, mask)?.with_timestamps(timestamps)
    }

    fn read_long<R: Read>(mut rdr: csv::Reader<R>) -> Result<Self, DataError> {
        let mut users: Vec<String> = Vec::new();
        let mut user_pos: BTreeMap<String, usize> = BTreeMap::new();
        let mut times: Vec<String> = Vec::new();
        let mut time_pos: BTreeMap<String, usize> = BTreeMap::new();
        let mut cells: Vec<(usize, usize, f64, bool)> = Vec::new();
        for (line, record) in rdr.records().enumerate() {
            let record = record?;
            if record.len() != 3 {
                return Err(DataError::Malformed(format!(
                    "row {} has {} fields, expected 3",
                    line + 2,
                    record.len()
                )));
            }
            let t = *time_pos.entry(record[0].to_owned()).or_insert_with(|| {
                times.push(record[0].to_owned());
                times.len() - 1
            });
            let u = *user_pos.entry(record[1].to_owned()).or_insert_with(|| {
                users.push(record[1].to_owned());
                users.len() - 1
            });
            let (v, observed) = parse_cell(&record[2], line + 2)?;
            cells.push((u, t, v, observed));
        }
        // Integer indices sort numerically, anything else (ISO-8601) lexicographically.
        let mut order: Vec<usize> = (0..times.len()).collect();
        if times.iter().all(|t| t.parse::<i64>().is_ok()) {
            order.sort_by_key(|&i| times[i].parse::<i64>().unwrap_or_default());
        } else {
            order.sort_by(|&a, &b| times[a].cmp(&times[b]));
        }
        let mut rank = vec![0; times.len()];
        for (r, &i) in order.iter().enumerate() {
            rank[i] = r;
        }
        let mut values = vec![vec![0.0; times.len()]; users.len()];
        let mut mask = vec![vec![false; times.len()]; users.len()];
        for (u, t, v, observed) in cells {
            values[u][rank[t]] = v;
            mask[u][rank[t]] = observed;
        }
        let timestamps = order.iter().map(|&i| times[i].clone()).collect();
        Self::with_mask(users, values, mask)?.with_timestamps(timestamps)
    }

    /// Write the wide layout; missing entries become empty cells.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), DataError> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header = vec!["time".to_owned()];
        header.extend(self.user_ids.iter().cloned());
        wtr.write_record(&header)?;
        for t in 0..self.len() {
            let mut row = Vec::with_capacity(self.n_users() + 1);
            row.push(self.timestamps[t].clone());
            for u in 0..self.n_users() {
                if self.mask[u][t] {
                    row.push(format!("{}", self.values[u][t]));
                } else {
                    row.push(String::new());
                }
            }
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

fn parse_cell(cell: &str, line: usize) -> Result<(f64, bool), DataError> {
    if cell.is_empty() || cell.eq_ignore_ascii_case("nan") || cell.eq_ignore_ascii_case("na") {
        return Ok((0.0, false));
    }
    cell.parse::<f64>()
        .map(|v| (v, true))
        .map_err(|_| DataError::Malformed(format!("row {line}: cannot parse `{cell}` as a number")))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RemovalReason {
    ConstantWindow,
    DroppedUser,
    Excluded,
}

impl fmt::Display for RemovalReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RemovalReason::ConstantWindow => "constant_window",
            RemovalReason::DroppedUser => "dropped_user",
            RemovalReason::Excluded => "excluded",
        })
    }
}

/// One removed range. For constant windows `[start, end)` is the range of
/// blocked window start positions; for dropped users it is the whole series.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Removal {
    pub user: String,
    pub start: usize,
    pub end: usize,
    pub reason: RemovalReason,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemovalReport {
    pub entries: Vec<Removal>,
    /// True when cleaning left no user behind.
    pub empty: bool,
}

impl RemovalReport {
    pub fn merge(&mut self, other: RemovalReport) {
        self.entries.extend(other.entries);
        self.empty |= other.empty;
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), DataError> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["user", "start", "end", "reason"])?;
        for r in &self.entries {
            wtr.write_record([
                r.user.clone(),
                r.start.to_string(),
                r.end.to_string(),
                r.reason.to_string(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Default minimum usable fraction below which a user is dropped.
pub const DEFAULT_DROP_THRESHOLD: f64 = 0.5;

/// Block every look-back of length L whose values are all identical, and drop
/// users whose usable fraction of start positions falls below `drop_threshold`.
pub fn clean_dataset(
    dataset: &TimeSeriesDataset,
    spec: WindowSpec,
    drop_threshold: f64,
) -> (TimeSeriesDataset, RemovalReport) {
    let mut out = dataset.clone();
    let mut report = RemovalReport::default();
    let l = spec.lookback;
    let mut keep = Vec::new();
    for u in 0..out.n_users() {
        let series = &out.values[u];
        let n_starts = series.len().saturating_sub(l - 1);
        let mut blocked = vec![false; series.len()];
        let mut n_blocked = 0usize;
        // `run` counts how many consecutive values ending at t equal series[t].
        let mut run = 0usize;
        for t in 0..series.len() {
            run = if t > 0 && series[t] == series[t - 1] { run + 1 } else { 1 };
            if run >= l {
                blocked[t + 1 - l] = true;
                n_blocked += 1;
            }
        }
        let mut s = 0;
        while s < n_starts {
            if blocked[s] {
                let begin = s;
                while s < n_starts && blocked[s] {
                    s += 1;
                }
                report.entries.push(Removal {
                    user: out.user_ids[u].clone(),
                    start: begin,
                    end: s,
                    reason: RemovalReason::ConstantWindow,
                });
            } else {
                s += 1;
            }
        }
        let usable = if n_starts == 0 {
            0.0
        } else {
            (n_starts - n_blocked) as f64 / n_starts as f64
        };
        if usable < drop_threshold {
            report.entries.push(Removal {
                user: out.user_ids[u].clone(),
                start: 0,
                end: series.len(),
                reason: RemovalReason::DroppedUser,
            });
        } else {
            keep.push(u);
        }
        out.blocked[u] = blocked;
    }
    let out = out.select_users(&keep);
    report.empty = out.n_users() == 0;
    if report.empty {
        log::warn!("cleaning removed every user");
    }
    (out, report)
}

/// The six (user group × period) splits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SplitName {
    Train,
    Valid1,
    Valid2,
    Valid3,
    Test1,
    Test2,
}

impl SplitName {
    pub const ALL: [SplitName; 6] = [
        SplitName::Train,
        SplitName::Valid1,
        SplitName::Valid2,
        SplitName::Valid3,
        SplitName::Test1,
        SplitName::Test2,
    ];

    /// Splits reported by evaluation.
    pub const EVAL: [SplitName; 5] = [
        SplitName::Valid1,
        SplitName::Valid2,
        SplitName::Valid3,
        SplitName::Test1,
        SplitName::Test2,
    ];

    fn parts(self) -> (UserGroup, Period) {
        match self {
            SplitName::Train => (UserGroup::In, Period::Train),
            SplitName::Valid1 => (UserGroup::In, Period::Valid),
            SplitName::Valid2 => (UserGroup::Out, Period::Train),
            SplitName::Valid3 => (UserGroup::Out, Period::Valid),
            SplitName::Test1 => (UserGroup::In, Period::Test),
            SplitName::Test2 => (UserGroup::Out, Period::Test),
        }
    }
}

impl fmt::Display for SplitName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl FromStr for SplitName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SplitName::ALL
            .into_iter()
            .find(|n| n.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown split `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum UserGroup {
    In,
    Out,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Period {
    Train,
    Valid,
    Test,
}

/// User partition and period boundaries. User sets hold dataset indices, sorted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub users_in: Vec<usize>,
    pub users_out: Vec<usize>,
    pub t_train: Range<usize>,
    pub t_valid: Range<usize>,
    pub t_test: Range<usize>,
}

impl SplitAssignment {
    pub fn users(&self, split: SplitName) -> &[usize] {
        match split.parts().0 {
            UserGroup::In => &self.users_in,
            UserGroup::Out => &self.users_out,
        }
    }

    pub fn period(&self, split: SplitName) -> Range<usize> {
        match split.parts().1 {
            Period::Train => self.t_train.clone(),
            Period::Valid => self.t_valid.clone(),
            Period::Test => self.t_test.clone(),
        }
    }
}

fn floor_boundary(fraction: f64, len: usize) -> usize {
    // Absorb representation error such as 0.6 + 0.2 = 0.8000000000000002.
    ((fraction * len as f64) + 1e-9).floor() as usize
}

/// Seeded user shuffle with prefix split, and contiguous period boundaries at
/// `floor(fraction × length)`; the remainder accrues to the test period.
pub fn six_way_split(
    dataset: &TimeSeriesDataset,
    user_out_fraction: f64,
    period_fractions: [f64; 3],
    spec: WindowSpec,
    seed: u64,
) -> Result<SplitAssignment, DataError> {
    let n = dataset.n_users();
    if n < 2 {
        return Err(DataError::TooFewUsers(n));
    }
    if !(user_out_fraction > 0.0 && user_out_fraction < 1.0) {
        return Err(DataError::InvalidFractions(format!(
            "user_out_fraction must be in (0,1), got {user_out_fraction}"
        )));
    }
    if period_fractions.iter().any(|f| !(0.0..=1.0).contains(f))
        || (period_fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9
    {
        return Err(DataError::InvalidFractions(format!(
            "period fractions must be in [0,1] and sum to 1, got {period_fractions:?}"
        )));
    }
    let n_out = floor_boundary(user_out_fraction, n).clamp(1, n - 1);
    let mut users: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    users.shuffle(&mut rng);
    let mut users_out = users[..n_out].to_vec();
    let mut users_in = users[n_out..].to_vec();
    users_out.sort_unstable();
    users_in.sort_unstable();

    let len = dataset.len();
    let b1 = floor_boundary(period_fractions[0], len);
    let b2 = floor_boundary(period_fractions[0] + period_fractions[1], len).max(b1);
    let assignment = SplitAssignment {
        users_in,
        users_out,
        t_train: 0..b1,
        t_valid: b1..b2,
        t_test: b2..len,
    };
    for (name, range) in [
        ("train", &assignment.t_train),
        ("valid", &assignment.t_valid),
        ("test", &assignment.t_test),
    ] {
        if range.len() < spec.total() {
            return Err(DataError::PeriodTooShort {
                period: name,
                len: range.len(),
                needed: spec.total(),
            });
        }
    }
    Ok(assignment)
}

fn usable_starts(
    dataset: &TimeSeriesDataset,
    user: usize,
    period: &Range<usize>,
    spec: WindowSpec,
    stride: usize,
) -> Vec<usize> {
    if period.len() < spec.total() {
        return Vec::new();
    }
    (period.start..=period.end - spec.total())
        .step_by(stride.max(1))
        .filter(|&s| !dataset.is_blocked(user, s))
        .collect()
}

/// Draw `n` windows from `split`, cycling over its users round-robin.
///
/// Each user's usable start dates are drawn uniformly without replacement
/// until exhausted, then the pool is refilled.
pub fn sample_windows(
    dataset: &TimeSeriesDataset,
    assignment: &SplitAssignment,
    split: SplitName,
    spec: WindowSpec,
    n: usize,
    seed: u64,
) -> Result<Vec<WindowPair>, DataError> {
    if n == 0 {
        return Ok(Vec::new());
    }
    let period = assignment.period(split);
    let pools: Vec<(usize, Vec<usize>)> = assignment
        .users(split)
        .iter()
        .map(|&u| (u, usable_starts(dataset, u, &period, spec, 1)))
        .filter(|(_, starts)| !starts.is_empty())
        .collect();
    if pools.is_empty() {
        return Err(DataError::NoUsableWindows(split));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Per user: remaining undrawn starts, kept as a partially shuffled pool.
    let mut remaining: Vec<Vec<usize>> = pools.iter().map(|(_, s)| s.clone()).collect();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let k = i % pools.len();
        if remaining[k].is_empty() {
            remaining[k] = pools[k].1.clone();
        }
        let pool = &mut remaining[k];
        let j = rng.random_range(0..pool.len());
        let start = pool.swap_remove(j);
        out.push(dataset.window(pools[k].0, start, spec));
    }
    Ok(out)
}

/// Every usable window of `split` with starts `stride` apart, user by user.
pub fn enumerate_windows(
    dataset: &TimeSeriesDataset,
    assignment: &SplitAssignment,
    split: SplitName,
    spec: WindowSpec,
    stride: usize,
) -> Vec<WindowPair> {
    let period = assignment.period(split);
    assignment
        .users(split)
        .iter()
        .flat_map(|&u| {
            usable_starts(dataset, u, &period, spec, stride)
                .into_iter()
                .map(move |s| dataset.window(u, s, spec))
        })
        .collect()
}
