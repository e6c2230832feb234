//! Sleeping time and location: detection of stationary, vacant rest periods
//! and their 4-d vector form `[start, lon, lat, duration]`.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::geo::Projection;
use crate::ingest::{local_date, local_seconds, GpsPoint, ServiceEvent, TaxiDay, TaxiId};

pub const STL_DIM: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SleepParams {
    pub stationary_radius_m: f64,
    pub min_sleep_minutes: f64,
}

impl Default for SleepParams {
    fn default() -> Self {
        Self {
            stationary_radius_m: 200.0,
            min_sleep_minutes: 240.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SleepEpisode {
    pub taxi_id: TaxiId,
    pub local_date: NaiveDate,
    pub loc_lon: f64,
    pub loc_lat: f64,
    /// Minutes since local midnight of `local_date`.
    pub start: f64,
    pub duration: f64,
    pub start_ts: i64,
    pub end_ts: i64,
    /// Longest episode of its day.
    pub canonical: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StlVector(pub [f64; STL_DIM]);

impl StlVector {
    pub fn t_s(&self) -> f64 {
        self.0[0]
    }
    pub fn lon(&self) -> f64 {
        self.0[1]
    }
    pub fn lat(&self) -> f64 {
        self.0[2]
    }
    pub fn t_d(&self) -> f64 {
        self.0[3]
    }
}

pub fn stl_vector(episode: &SleepEpisode) -> StlVector {
    StlVector([episode.start, episode.loc_lon, episode.loc_lat, episode.duration])
}

/// Inclusive index range `[first, last]` of a stationary run in a trace.
pub type Run = (usize, usize);

/// Finds stationary, event-free runs of at least `min_sleep_minutes`.
///
/// Scanning left to right, a run starting at point `i` is extended one point
/// at a time while every point of the run stays within the radius of the
/// run's centroid and no service event falls inside `[ts_i, ts_j]`. Runs
/// long enough are emitted and the scan resumes after them; otherwise it
/// resumes at `i + 1`.
pub fn stationary_runs(gps: &[GpsPoint], event_ts: &[i64], params: &SleepParams) -> Vec<Run> {
    let n = gps.len();
    if n < 2 {
        return Vec::new();
    }
    let xy = project(gps);
    let r = params.stationary_radius_m;
    let min_len = (params.min_sleep_minutes * 60.0).ceil() as i64;
    let mut runs = Vec::new();
    let mut i = 0;
    while i < n {
        let next_event = event_ts
            .get(event_ts.partition_point(|&t| t < gps[i].ts))
            .copied()
            .unwrap_or(i64::MAX);
        if next_event <= gps[i].ts {
            i += 1;
            continue;
        }
        let j = extend_run(&xy, gps, i, next_event, r);
        if gps[j].ts - gps[i].ts >= min_len {
            runs.push((i, j));
            i = j + 1;
        } else {
            i += 1;
        }
    }
    runs
}

/// Projects a trace into meters around its first point.
pub fn project(gps: &[GpsPoint]) -> Vec<(f64, f64)> {
    match gps.first() {
        None => Vec::new(),
        Some(p0) => {
            let proj = Projection::new(p0.lon, p0.lat);
            gps.iter().map(|p| proj.to_xy(p.lon, p.lat)).collect()
        }
    }
}

/// Last index `j` such that every prefix `[i, j']`, `j' <= j`, is stationary.
///
/// Keeps a reference center with a bound on the distance of every run point
/// to it; the triangle inequality then bounds the distances to the moving
/// centroid, and the exact scan only runs when the bound is inconclusive.
fn extend_run(xy: &[(f64, f64)], gps: &[GpsPoint], i: usize, next_event: i64, r: f64) -> usize {
    let (mut sx, mut sy) = xy[i];
    let mut reference = xy[i];
    let mut reach = 0.0f64;
    let mut j = i;
    while j + 1 < xy.len() && gps[j + 1].ts < next_event {
        let p = xy[j + 1];
        let nsx = sx + p.0;
        let nsy = sy + p.1;
        let count = (j + 2 - i) as f64;
        let c = (nsx / count, nsy / count);
        let new_reach = reach.max(dist(p, reference));
        let bound = new_reach + dist(c, reference);
        if bound <= r {
            reach = new_reach;
        } else {
            let exact = xy[i..=j + 1].iter().map(|&q| dist(q, c)).fold(0.0, f64::max);
            if exact > r {
                break;
            }
            reference = c;
            reach = exact;
        }
        sx = nsx;
        sy = nsy;
        j += 1;
    }
    j
}

fn dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).hypot(a.1 - b.1)
}

fn service_ts(events: &[ServiceEvent]) -> Vec<i64> {
    let mut ts: Vec<i64> = events.iter().map(|e| e.ts).collect();
    ts.sort_unstable();
    ts
}

fn episode_from_run(
    taxi_id: &TaxiId,
    gps: &[GpsPoint],
    run: Run,
    utc_offset_s: i64,
) -> SleepEpisode {
    let pts = &gps[run.0..=run.1];
    let k = pts.len() as f64;
    let lon = pts.iter().map(|p| p.lon).sum::<f64>() / k;
    let lat = pts.iter().map(|p| p.lat).sum::<f64>() / k;
    let start_ts = pts[0].ts;
    let end_ts = pts[pts.len() - 1].ts;
    SleepEpisode {
        taxi_id: taxi_id.clone(),
        local_date: local_date(start_ts, utc_offset_s),
        loc_lon: lon,
        loc_lat: lat,
        start: local_seconds(start_ts, utc_offset_s) as f64 / 60.0,
        duration: (end_ts - start_ts) as f64 / 60.0,
        start_ts,
        end_ts,
        canonical: false,
    }
}

fn flag_canonical(episodes: &mut [SleepEpisode]) {
    let mut best: BTreeMap<NaiveDate, usize> = BTreeMap::new();
    for (idx, e) in episodes.iter().enumerate() {
        match best.get(&e.local_date) {
            Some(&b) if episodes[b].duration >= e.duration => {}
            _ => {
                best.insert(e.local_date, idx);
            }
        }
    }
    for idx in best.into_values() {
        episodes[idx].canonical = true;
    }
}

/// Sleep episodes within a single day's records.
pub fn detect_sleep_episodes(day: &TaxiDay, params: &SleepParams, utc_offset_s: i64) -> Vec<SleepEpisode> {
    if day.gps.len() < 2 {
        return Vec::new();
    }
    let runs = stationary_runs(&day.gps, &service_ts(&day.events), params);
    let mut eps: Vec<SleepEpisode> = runs
        .into_iter()
        .map(|run| episode_from_run(&day.taxi_id, &day.gps, run, utc_offset_s))
        .collect();
    flag_canonical(&mut eps);
    eps
}

/// Sleep episodes over a taxi's whole trace, so that rests spanning midnight
/// stay whole; each episode belongs to the day on which it starts.
pub fn detect_taxi_episodes(days: &[TaxiDay], params: &SleepParams, utc_offset_s: i64) -> Vec<SleepEpisode> {
    let Some(first) = days.first() else {
        return Vec::new();
    };
    let gps: Vec<GpsPoint> = days.iter().flat_map(|d| d.gps.iter().cloned()).collect();
    let events: Vec<ServiceEvent> = days.iter().flat_map(|d| d.events.iter().cloned()).collect();
    let runs = stationary_runs(&gps, &service_ts(&events), params);
    let mut eps: Vec<SleepEpisode> = runs
        .into_iter()
        .map(|run| episode_from_run(&first.taxi_id, &gps, run, utc_offset_s))
        .collect();
    flag_canonical(&mut eps);
    eps
}

/// Per-day inputs of the shift rule: qualifying sleep count and active
/// minutes (time spent moving between consecutive fixes at most 30 min apart).
pub fn daily_activity(
    days: &[TaxiDay],
    episodes: &[SleepEpisode],
    moving_threshold_m: f64,
) -> (Vec<usize>, Vec<f64>) {
    const MAX_GAP_S: i64 = 30 * 60;
    let mut counts: BTreeMap<NaiveDate, usize> = BTreeMap::new();
    for e in episodes {
        *counts.entry(e.local_date).or_default() += 1;
    }
    let mut sleeps = Vec::with_capacity(days.len());
    let mut active = Vec::with_capacity(days.len());
    for d in days {
        sleeps.push(counts.get(&d.local_date).copied().unwrap_or(0));
        let secs: i64 = d
            .gps
            .windows(2)
            .filter(|w| {
                let gap = w[1].ts - w[0].ts;
                gap <= MAX_GAP_S
                    && crate::geo::distance_m(w[0].lon, w[0].lat, w[1].lon, w[1].lat) >= moving_threshold_m
            })
            .map(|w| w[1].ts - w[0].ts)
            .sum();
        active.push(secs as f64 / 60.0);
    }
    (sleeps, active)
}

/// Per-dimension mean and standard deviation, used to precondition fits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl StandardizationStats {
    /// Relative spread below which a dimension is treated as constant and
    /// left unscaled.
    pub const DEGENERATE_REL_STD: f64 = 1e-12;

    pub fn fit(rows: &[Vec<f64>]) -> Self {
        let dim = rows.first().map_or(0, Vec::len);
        let n = rows.len().max(1) as f64;
        let mut mean = vec![0.0; dim];
        for r in rows {
            for (m, x) in mean.iter_mut().zip(r) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dim];
        for r in rows {
            for ((v, x), m) in var.iter_mut().zip(r).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
        let std = var
            .iter()
            .zip(&mean)
            .map(|(v, m)| {
                let s = (v / n).sqrt();
                if s > Self::DEGENERATE_REL_STD * m.abs().max(1.0) {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, std }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn invert(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| v * s + m)
            .collect()
    }
}
