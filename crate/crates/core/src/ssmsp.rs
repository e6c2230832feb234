//! Day-to-day self-similarity of behavior vectors, multi-scale max/min
//! pooling over sliding windows, and assembly of per-taxi bags.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::{Days, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BehaviorKind {
    Stl,
    Pu,
}

impl BehaviorKind {
    pub const ALL: [BehaviorKind; 2] = [BehaviorKind::Stl, BehaviorKind::Pu];
}

impl fmt::Display for BehaviorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BehaviorKind::Stl => "stl",
            BehaviorKind::Pu => "pu",
        })
    }
}

impl FromStr for BehaviorKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stl" => Ok(BehaviorKind::Stl),
            "pu" => Ok(BehaviorKind::Pu),
            other => Err(Error::InvalidArgument(format!("unknown behavior kind {other:?}"))),
        }
    }
}

/// Encoded behaviors of one taxi-day; either may be absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailyBehavior {
    pub taxi_id: String,
    pub local_date: NaiveDate,
    pub f_stl: Option<Vec<f64>>,
    pub f_pu: Option<Vec<f64>>,
}

impl DailyBehavior {
    pub fn get(&self, kind: BehaviorKind) -> Option<&[f64]> {
        match kind {
            BehaviorKind::Stl => self.f_stl.as_deref(),
            BehaviorKind::Pu => self.f_pu.as_deref(),
        }
    }
}

/// `1 - cos(a, b)`, clamped to `[0, 2]`; `None` when either vector has zero norm.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> Option<f64> {
    let sa = crate::numeric::dot(a, a);
    let sb = crate::numeric::dot(b, b);
    if sa == 0.0 || sb == 0.0 {
        return None;
    }
    // sqrt(x * x) == x exactly, so identical vectors give exactly 0
    let cos = crate::numeric::dot(a, b) / (sa * sb).sqrt();
    Some((1.0 - cos).clamp(0.0, 2.0))
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SsSeries {
    /// `(start date of the pair, distance)` in date order.
    pub values: Vec<(NaiveDate, f64)>,
    pub skipped_zero_norm: usize,
}

/// Cosine distance between each pair of consecutive calendar days on which
/// `kind` is present.
pub fn self_similarity_series(days: &[DailyBehavior], kind: BehaviorKind) -> SsSeries {
    let mut out = SsSeries::default();
    for pair in days.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        if a.local_date.succ_opt() != Some(b.local_date) {
            continue;
        }
        let (Some(fa), Some(fb)) = (a.get(kind), b.get(kind)) else {
            continue;
        };
        match cosine_distance(fa, fb) {
            Some(s) => out.values.push((a.local_date, s)),
            None => out.skipped_zero_norm += 1,
        }
    }
    out
}

/// `(max, min)` of a set of distances, `(0, 0)` when empty.
pub fn pool_bucket(values: impl IntoIterator<Item = f64>) -> (f64, f64) {
    let mut it = values.into_iter();
    let Some(first) = it.next() else {
        return (0.0, 0.0);
    };
    it.fold((first, first), |(hi, lo), v| (hi.max(v), lo.min(v)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowParams {
    pub window_days: u32,
    pub step_days: u32,
    pub range_days: u32,
    /// Number of equal calendar buckets per scale, e.g. `[1, 2, 4]`.
    pub scales: Vec<u32>,
}

impl Default for WindowParams {
    fn default() -> Self {
        Self {
            window_days: 16,
            step_days: 4,
            range_days: 30,
            scales: vec![1, 2, 4],
        }
    }
}

impl WindowParams {
    pub fn validate(&self) -> Result<()> {
        if self.window_days < 2 {
            return Err(Error::config("window_days", "must be at least 2"));
        }
        if self.step_days == 0 {
            return Err(Error::config("step_days", "must be positive"));
        }
        if self.range_days < self.window_days {
            return Err(Error::config("range_days", "must be at least window_days"));
        }
        if self.scales.is_empty() {
            return Err(Error::config("msp_scales", "at least one scale is required"));
        }
        if let Some(s) = self.scales.iter().find(|&&s| s == 0 || s > self.window_days) {
            return Err(Error::config("msp_scales", format!("scale {s} does not fit a {}-day window", self.window_days)));
        }
        Ok(())
    }

    pub fn bucket_count(&self) -> usize {
        self.scales.iter().map(|&s| s as usize).sum()
    }

    pub fn feature_len(&self) -> usize {
        2 * self.bucket_count()
    }

    /// Window start offsets in days: `0, step, 2*step, ...` while the window fits the range.
    pub fn window_offsets(&self) -> Vec<u32> {
        if self.range_days < self.window_days {
            return Vec::new();
        }
        (0..=(self.range_days - self.window_days) / self.step_days)
            .map(|i| i * self.step_days)
            .collect()
    }

    /// Day-offset ranges `[lo, hi)` of every bucket, scale-major, left to right.
    pub fn buckets(&self) -> Vec<(u32, u32)> {
        let n = self.window_days;
        self.scales
            .iter()
            .flat_map(|&s| (0..s).map(move |b| (b * n / s, (b + 1) * n / s)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MspFeature {
    /// `[max_1..max_B, min_1..min_B]`.
    pub values: Vec<f64>,
    pub window_start: NaiveDate,
    pub kind: BehaviorKind,
    /// Fewer than two days of this behavior in the window; values are zero.
    pub missing: bool,
}

fn add_days(d: NaiveDate, n: u32) -> NaiveDate {
    d.checked_add_days(Days::new(u64::from(n))).expect("date in range")
}

/// Pools a series over one window. Pairs count toward the bucket holding
/// their first day and only when both days lie in the window.
pub fn msp_feature(
    series: &SsSeries,
    available_days: usize,
    window_start: NaiveDate,
    kind: BehaviorKind,
    params: &WindowParams,
) -> MspFeature {
    let b = params.bucket_count();
    if available_days < 2 {
        return MspFeature {
            values: vec![0.0; 2 * b],
            window_start,
            kind,
            missing: true,
        };
    }
    let last_pair_start = add_days(window_start, params.window_days - 2);
    let in_window: Vec<(i64, f64)> = series
        .values
        .iter()
        .filter(|(d, _)| *d >= window_start && *d <= last_pair_start)
        .map(|(d, s)| ((*d - window_start).num_days(), *s))
        .collect();
    let mut values = vec![0.0; 2 * b];
    for (i, (lo, hi)) in params.buckets().into_iter().enumerate() {
        let (mx, mn) = pool_bucket(
            in_window
                .iter()
                .filter(|(off, _)| *off >= i64::from(lo) && *off < i64::from(hi))
                .map(|(_, s)| *s),
        );
        values[i] = mx;
        values[b + i] = mn;
    }
    MspFeature {
        values,
        window_start,
        kind,
        missing: false,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bag {
    pub taxi_id: String,
    pub label: Option<u8>,
    pub stl: Vec<MspFeature>,
    pub pu: Vec<MspFeature>,
}

impl Bag {
    pub fn instances(&self, kind: BehaviorKind) -> &[MspFeature] {
        match kind {
            BehaviorKind::Stl => &self.stl,
            BehaviorKind::Pu => &self.pu,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BagSet {
    pub params: WindowParams,
    /// Day 0 of the range; shared by every taxi so windows line up.
    pub anchor: NaiveDate,
    pub bags: Vec<Bag>,
    pub short_span: usize,
    pub skipped_zero_norm: usize,
}

pub const BAGS_KIND: &str = "bags";

/// Slides windows over `[anchor, anchor + range_days)` and builds one bag
/// per taxi whose observed days span at least one window. Output is sorted
/// by taxi id.
pub fn build_bags(
    per_taxi: &BTreeMap<String, Vec<DailyBehavior>>,
    anchor: NaiveDate,
    params: &WindowParams,
) -> Result<BagSet> {
    params.validate()?;
    let range_end = add_days(anchor, params.range_days);
    let offsets = params.window_offsets();
    let mut set = BagSet {
        params: params.clone(),
        anchor,
        bags: Vec::new(),
        short_span: 0,
        skipped_zero_norm: 0,
    };
    for (taxi_id, days) in per_taxi {
        let mut days: Vec<DailyBehavior> = days
            .iter()
            .filter(|d| d.local_date >= anchor && d.local_date < range_end)
            .cloned()
            .collect();
        days.sort_by_key(|d| d.local_date);
        let span = match (days.first(), days.last()) {
            (Some(a), Some(b)) => (b.local_date - a.local_date).num_days() + 1,
            _ => 0,
        };
        if span < i64::from(params.window_days) {
            set.short_span += 1;
            continue;
        }
        let mut bag = Bag {
            taxi_id: taxi_id.clone(),
            label: None,
            stl: Vec::new(),
            pu: Vec::new(),
        };
        for kind in BehaviorKind::ALL {
            let series = self_similarity_series(&days, kind);
            set.skipped_zero_norm += series.skipped_zero_norm;
            let present: Vec<NaiveDate> = days
                .iter()
                .filter(|d| d.get(kind).is_some())
                .map(|d| d.local_date)
                .collect();
            for &off in &offsets {
                let start = add_days(anchor, off);
                let end = add_days(start, params.window_days);
                let available = present.iter().filter(|d| **d >= start && **d < end).count();
                let feat = msp_feature(&series, available, start, kind, params);
                if !feat.missing {
                    match kind {
                        BehaviorKind::Stl => bag.stl.push(feat),
                        BehaviorKind::Pu => bag.pu.push(feat),
                    }
                }
            }
        }
        set.bags.push(bag);
    }
    Ok(set)
}
