//! Seeded synthetic fleet: per-driver personas with a nightly rest at home
//! and pick-ups around a few hotspots, plus planted driver substitutions.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use chrono::NaiveDate;
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{distance_m, Projection};
use crate::ingest::local_midnight_ts;
use crate::rng::{rng_for, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_taxis: usize,
    pub n_days: u32,
    pub ids_fraction: f64,
    pub substitution_days: u32,
    pub seed: u64,
    pub start_date: NaiveDate,
    pub utc_offset_s: i64,
    pub gps_interval_s: i64,
    /// Share of trace rows written with five decimals.
    pub low_precision_fraction: f64,
    pub city_lon: f64,
    pub city_lat: f64,
    pub city_radius_m: f64,
    pub hotspot_pool: usize,
    pub hotspots_per_persona: usize,
    pub hotspot_spread_m: f64,
    /// Minimum distance between the homes of a driver and their substitute.
    pub min_home_separation_m: f64,
    /// Substitutes draw hotspots the original driver never uses.
    pub disjoint_hotspots: bool,
    /// Upper bound of a persona's night-to-night std of sleep start, minutes;
    /// each persona draws its std from `[bound / 2, bound]`.
    pub sleep_start_jitter_min: f64,
    /// Same for sleep duration.
    pub sleep_dur_jitter_min: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_taxis: 100,
            n_days: 30,
            ids_fraction: 0.05,
            substitution_days: 6,
            seed: 7,
            start_date: NaiveDate::from_ymd_opt(2024, 3, 1).expect("valid date"),
            utc_offset_s: crate::ingest::DEFAULT_UTC_OFFSET_S,
            gps_interval_s: 600,
            low_precision_fraction: 0.01,
            city_lon: 116.40,
            city_lat: 39.90,
            city_radius_m: 15_000.0,
            hotspot_pool: 24,
            hotspots_per_persona: 3,
            hotspot_spread_m: 300.0,
            min_home_separation_m: 5_000.0,
            disjoint_hotspots: true,
            sleep_start_jitter_min: 6.0,
            sleep_dur_jitter_min: 10.0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_taxis == 0 {
            return Err(Error::config("n_taxis", "must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.ids_fraction) {
            return Err(Error::config("ids_fraction", "must lie in [0, 1]"));
        }
        if self.n_days < 2 {
            return Err(Error::config("n_days", "must be at least 2"));
        }
        if self.substitution_days == 0 || self.substitution_days > self.n_days {
            return Err(Error::config("substitution_days", "must lie in [1, n_days]"));
        }
        if self.gps_interval_s <= 0 {
            return Err(Error::config("gps_interval_s", "must be positive"));
        }
        if self.hotspots_per_persona == 0 || 2 * self.hotspots_per_persona > self.hotspot_pool {
            return Err(Error::config("hotspots_per_persona", "pool must hold two disjoint hotspot sets"));
        }
        if !(0.0..=1.0).contains(&self.low_precision_fraction) {
            return Err(Error::config("low_precision_fraction", "must lie in [0, 1]"));
        }
        if self.min_home_separation_m >= 1.5 * self.city_radius_m {
            return Err(Error::config("min_home_separation_m", "too large for the city radius"));
        }
        if !(self.sleep_start_jitter_min > 0.0) {
            return Err(Error::config("sleep_start_jitter_min", "must be positive"));
        }
        if !(self.sleep_dur_jitter_min > 0.0) {
            return Err(Error::config("sleep_dur_jitter_min", "must be positive"));
        }
        Ok(())
    }

    /// Number of planted substitutions: `round(n_taxis * ids_fraction)`.
    pub fn positives(&self) -> usize {
        (self.n_taxis as f64 * self.ids_fraction).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hotspot {
    pub lon: f64,
    pub lat: f64,
    pub spread_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriverPersona {
    pub home_lon: f64,
    pub home_lat: f64,
    pub home_jitter_m: f64,
    pub sleep_start_mean: f64,
    pub sleep_start_std: f64,
    pub sleep_dur_mean: f64,
    pub sleep_dur_std: f64,
    /// Indices into the city hotspot pool.
    pub hotspots: Vec<usize>,
    pub hotspot_weights: Vec<f64>,
    pub pu_rate: f64,
}

const GPS_NOISE_M: f64 = 15.0;
const CRUISE_STEP_MIN: f64 = 30.0;

struct City {
    proj: Projection,
    radius_m: f64,
    hotspots: Vec<Hotspot>,
}

impl City {
    fn new(cfg: &SynthConfig, rng: &mut Rng) -> Self {
        let proj = Projection::new(cfg.city_lon, cfg.city_lat);
        let mut city = City {
            proj,
            radius_m: cfg.city_radius_m,
            hotspots: Vec::new(),
        };
        for _ in 0..cfg.hotspot_pool {
            let (lon, lat) = city.random_location(rng, 0.9);
            city.hotspots.push(Hotspot {
                lon,
                lat,
                spread_m: cfg.hotspot_spread_m,
            });
        }
        city
    }

    fn random_location(&self, rng: &mut Rng, frac: f64) -> (f64, f64) {
        let r = self.radius_m * frac * rng.random::<f64>().sqrt();
        let a = rng.random_range(0.0..std::f64::consts::TAU);
        self.proj.to_lon_lat(r * a.cos(), r * a.sin())
    }

    fn jitter(&self, lon: f64, lat: f64, sd_m: f64, rng: &mut Rng) -> (f64, f64) {
        let n = Normal::new(0.0, sd_m).expect("positive spread");
        let (x, y) = self.proj.to_xy(lon, lat);
        self.proj.to_lon_lat(x + n.sample(rng), y + n.sample(rng))
    }
}

fn draw_persona(city: &City, cfg: &SynthConfig, avoid: Option<&DriverPersona>, rng: &mut Rng) -> DriverPersona {
    let (home_lon, home_lat) = loop {
        let cand = city.random_location(rng, 0.8);
        match avoid {
            Some(o) if distance_m(cand.0, cand.1, o.home_lon, o.home_lat) < cfg.min_home_separation_m => {}
            _ => break cand,
        }
    };
    let mut pool: Vec<usize> = (0..city.hotspots.len())
        .filter(|h| !(cfg.disjoint_hotspots && avoid.is_some_and(|o| o.hotspots.contains(h))))
        .collect();
    pool.shuffle(rng);
    let hotspots: Vec<usize> = pool.into_iter().take(cfg.hotspots_per_persona).collect();
    let raw: Vec<f64> = hotspots.iter().map(|_| rng.random_range(0.5..1.5)).collect();
    let total: f64 = raw.iter().sum();
    DriverPersona {
        home_lon,
        home_lat,
        home_jitter_m: 50.0,
        sleep_start_mean: rng.random_range(0.0..300.0),
        sleep_start_std: rng.random_range(cfg.sleep_start_jitter_min / 2.0..=cfg.sleep_start_jitter_min),
        sleep_dur_mean: rng.random_range(360.0..600.0),
        sleep_dur_std: rng.random_range(cfg.sleep_dur_jitter_min / 2.0..=cfg.sleep_dur_jitter_min),
        hotspots,
        hotspot_weights: raw.iter().map(|w| w / total).collect(),
        pu_rate: rng.random_range(16.0..28.0),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRow {
    pub taxi_id: String,
    pub label: u8,
    pub event_day: Option<u32>,
}

#[derive(Debug, Clone, Copy)]
struct Waypoint {
    minute: f64,
    lon: f64,
    lat: f64,
}

#[derive(Debug, Clone, Copy)]
struct Trip {
    pu: Waypoint,
    dropoff: Waypoint,
}

struct DayPlan {
    sleep_start: f64,
    sleep_end: f64,
    lon: f64,
    lat: f64,
}

fn plan_sleep(city: &City, p: &DriverPersona, day: u32, rng: &mut Rng) -> DayPlan {
    let start_n = Normal::new(p.sleep_start_mean, p.sleep_start_std).expect("positive std");
    let dur_n = Normal::new(p.sleep_dur_mean, p.sleep_dur_std).expect("positive std");
    let start = start_n.sample(rng).clamp(0.0, 600.0);
    let dur = dur_n.sample(rng).clamp(300.0, 660.0);
    let (lon, lat) = city.jitter(p.home_lon, p.home_lat, p.home_jitter_m, rng);
    let base = f64::from(day) * 1440.0;
    DayPlan {
        sleep_start: base + start,
        sleep_end: base + start + dur,
        lon,
        lat,
    }
}

fn plan_trips(city: &City, p: &DriverPersona, from: f64, until: f64, rng: &mut Rng) -> Vec<Trip> {
    let lo = from + 15.0;
    let hi = until - 60.0;
    if hi <= lo {
        return Vec::new();
    }
    let n = Poisson::new(p.pu_rate).expect("positive rate").sample(rng) as usize;
    let mut times: Vec<f64> = (0..n).map(|_| rng.random_range(lo..hi)).collect();
    times.sort_by(f64::total_cmp);
    let mut trips = Vec::new();
    let mut free_at = lo;
    for t in times {
        let start = t.max(free_at);
        let dur = rng.random_range(8.0..40.0);
        if start + dur > hi {
            break;
        }
        let h = pick_weighted(&p.hotspot_weights, rng);
        let spot = &city.hotspots[p.hotspots[h]];
        let (pu_lon, pu_lat) = city.jitter(spot.lon, spot.lat, spot.spread_m, rng);
        let (do_lon, do_lat) = city.random_location(rng, 1.0);
        trips.push(Trip {
            pu: Waypoint {
                minute: start,
                lon: pu_lon,
                lat: pu_lat,
            },
            dropoff: Waypoint {
                minute: start + dur,
                lon: do_lon,
                lat: do_lat,
            },
        });
        free_at = start + dur + 2.0;
    }
    trips
}

fn pick_weighted(weights: &[f64], rng: &mut Rng) -> usize {
    let mut u = rng.random::<f64>();
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.len() - 1
}

/// Adds random cruising waypoints so no awake gap leaves the taxi parked.
fn with_cruising(city: &City, path: Vec<Waypoint>, rng: &mut Rng) -> Vec<Waypoint> {
    let mut out = Vec::with_capacity(path.len() * 2);
    for pair in path.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        out.push(a);
        let gap = b.minute - a.minute;
        let extra = (gap / CRUISE_STEP_MIN).floor() as usize;
        for s in 1..extra {
            let (lon, lat) = city.random_location(rng, 1.0);
            out.push(Waypoint {
                minute: a.minute + gap * s as f64 / extra as f64,
                lon,
                lat,
            });
        }
    }
    if let Some(last) = path.last() {
        out.push(*last);
    }
    out
}

fn interpolate(path: &[Waypoint], minute: f64) -> (f64, f64) {
    let i = path.partition_point(|w| w.minute <= minute);
    if i == 0 {
        return (path[0].lon, path[0].lat);
    }
    if i == path.len() {
        let w = path[path.len() - 1];
        return (w.lon, w.lat);
    }
    let (a, b) = (path[i - 1], path[i]);
    let f = (minute - a.minute) / (b.minute - a.minute);
    (a.lon + f * (b.lon - a.lon), a.lat + f * (b.lat - a.lat))
}

struct Writers<W: Write> {
    trace: W,
    trips: W,
}

fn write_fix<W: Write>(out: &mut W, id: &str, lon: f64, lat: f64, ts: i64, low: bool) -> std::io::Result<()> {
    if low {
        writeln!(out, "{id},{lon:.5},{lat:.5},{ts}")
    } else {
        writeln!(out, "{id},{lon:.6},{lat:.6},{ts}")
    }
}

fn simulate_taxi<W: Write>(
    cfg: &SynthConfig,
    city: &City,
    taxi_id: &str,
    personas: &[DriverPersona],
    persona_of_day: &dyn Fn(u32) -> usize,
    out: &mut Writers<W>,
) -> std::io::Result<()> {
    let mut rng = rng_for(cfg.seed, &["synth", "days", taxi_id]);
    let midnight0 = local_midnight_ts(cfg.start_date, cfg.utc_offset_s);
    let to_ts = |minute: f64| midnight0 + (minute * 60.0).round() as i64;
    let nights: Vec<DayPlan> = (0..cfg.n_days)
        .map(|d| plan_sleep(city, &personas[persona_of_day(d)], d, &mut rng))
        .collect();
    let mut fixes: Vec<(i64, f64, f64)> = Vec::new();
    for (d, night) in nights.iter().enumerate() {
        let noise = Normal::new(0.0, GPS_NOISE_M).expect("positive noise");
        let mut m = night.sleep_start;
        while m <= night.sleep_end {
            let (x, y) = city.proj.to_xy(night.lon, night.lat);
            let (lon, lat) = city.proj.to_lon_lat(x + noise.sample(&mut rng), y + noise.sample(&mut rng));
            fixes.push((to_ts(m), lon, lat));
            m += cfg.gps_interval_s as f64 / 60.0;
        }
        let end = to_ts(night.sleep_end);
        if fixes.last().is_some_and(|f| f.0 < end) {
            fixes.push((end, night.lon, night.lat));
        }
        let Some(next) = nights.get(d + 1) else {
            break;
        };
        let persona = &personas[persona_of_day(d as u32)];
        let trips = plan_trips(city, persona, night.sleep_end, next.sleep_start, &mut rng);
        let mut path = vec![Waypoint {
            minute: night.sleep_end,
            lon: night.lon,
            lat: night.lat,
        }];
        for t in &trips {
            path.push(t.pu);
            path.push(t.dropoff);
        }
        path.push(Waypoint {
            minute: next.sleep_start,
            lon: next.lon,
            lat: next.lat,
        });
        let path = with_cruising(city, path, &mut rng);
        let step = cfg.gps_interval_s as f64 / 60.0;
        let mut m = night.sleep_end + step;
        let mut events = trips.iter().flat_map(|t| [t.pu, t.dropoff]).peekable();
        while m < next.sleep_start {
            while let Some(e) = events.next_if(|e| e.minute <= m) {
                fixes.push((to_ts(e.minute), e.lon, e.lat));
            }
            let (lon, lat) = interpolate(&path, m);
            fixes.push((to_ts(m), lon, lat));
            m += step;
        }
        for e in events {
            fixes.push((to_ts(e.minute), e.lon, e.lat));
        }
        for t in &trips {
            writeln!(
                out.trips,
                "{taxi_id},{},{:.6},{:.6},{},{:.6},{:.6}",
                to_ts(t.pu.minute),
                t.pu.lon,
                t.pu.lat,
                to_ts(t.dropoff.minute),
                t.dropoff.lon,
                t.dropoff.lat
            )?;
        }
    }
    fixes.sort_by_key(|f| f.0);
    fixes.dedup_by_key(|f| f.0);
    for (ts, lon, lat) in fixes {
        let low = rng.random::<f64>() < cfg.low_precision_fraction;
        write_fix(&mut out.trace, taxi_id, lon, lat, ts, low)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct FleetSummary {
    pub labels: Vec<LabelRow>,
}

/// Streams a fleet's trace and trip CSVs into the writers and returns labels.
pub fn generate_fleet<W: Write>(cfg: &SynthConfig, trace: W, trips: W) -> Result<FleetSummary> {
    cfg.validate()?;
    let mut city_rng = rng_for(cfg.seed, &["synth", "city"]);
    let city = City::new(cfg, &mut city_rng);
    let width = cfg.n_taxis.saturating_sub(1).to_string().len().max(4);
    let ids: Vec<String> = (0..cfg.n_taxis).map(|i| format!("taxi{i:0width$}")).collect();
    let mut order: Vec<usize> = (0..cfg.n_taxis).collect();
    order.shuffle(&mut rng_for(cfg.seed, &["synth", "labels"]));
    let mut positive = vec![false; cfg.n_taxis];
    for &i in order.iter().take(cfg.positives()) {
        positive[i] = true;
    }
    let mut w = Writers { trace, trips };
    let io = |e| Error::io("<synthetic fleet>", e);
    writeln!(w.trace, "{}", crate::ingest::TRACE_HEADER.join(",")).map_err(io)?;
    writeln!(w.trips, "{}", crate::ingest::TRIP_HEADER.join(",")).map_err(io)?;
    let mut labels = Vec::with_capacity(cfg.n_taxis);
    for (i, id) in ids.iter().enumerate() {
        let mut rng = rng_for(cfg.seed, &["synth", "persona", id]);
        let own = draw_persona(&city, cfg, None, &mut rng);
        let (personas, event_day) = if positive[i] {
            let sub = draw_persona(&city, cfg, Some(&own), &mut rng);
            let day = rng.random_range(0..=cfg.n_days - cfg.substitution_days);
            (vec![own, sub], Some(day))
        } else {
            (vec![own], None)
        };
        let span = cfg.substitution_days;
        let which = move |d: u32| match event_day {
            Some(e) if d >= e && d < e + span => 1,
            _ => 0,
        };
        simulate_taxi(cfg, &city, id, &personas, &which, &mut w).map_err(io)?;
        labels.push(LabelRow {
            taxi_id: id.clone(),
            label: u8::from(positive[i]),
            event_day,
        });
    }
    w.trace.flush().map_err(io)?;
    w.trips.flush().map_err(io)?;
    Ok(FleetSummary { labels })
}

pub const LABEL_HEADER: [&str; 3] = ["taxi_id", "label", "event_day"];

pub fn write_labels_csv<W: Write>(out: W, labels: &[LabelRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(LABEL_HEADER)?;
    for l in labels {
        w.write_record([
            l.taxi_id.clone(),
            l.label.to_string(),
            l.event_day.map(|d| d.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<labels>", e))?;
    Ok(())
}

pub fn read_labels_csv(path: &Path) -> Result<Vec<LabelRow>> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    let mut rdr = csv::Reader::from_path(path)?;
    let name = path.display().to_string();
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i as u64 + 2;
        let bad = |reason: String| Error::Malformed {
            path: name.clone(),
            line,
            reason,
        };
        let label = match rec.get(1).map(str::trim) {
            Some("0") => 0,
            Some("1") => 1,
            other => return Err(bad(format!("label must be 0 or 1, found {other:?}"))),
        };
        let event_day = match rec.get(2).map(str::trim) {
            None | Some("") => None,
            Some(s) => Some(s.parse().map_err(|_| bad(format!("bad event_day {s:?}")))?),
        };
        out.push(LabelRow {
            taxi_id: rec.get(0).unwrap_or_default().trim().to_string(),
            label,
            event_day,
        });
    }
    Ok(out)
}

/// Writes `trace.csv`, `trips.csv` and `labels.csv` into `dir`.
pub fn generate_fleet_to_dir(cfg: &SynthConfig, dir: &Path) -> Result<FleetSummary> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let open = |name: &str| -> Result<BufWriter<File>> {
        let p = dir.join(name);
        Ok(BufWriter::new(File::create(&p).map_err(|e| Error::io(&p, e))?))
    };
    let summary = generate_fleet(cfg, open("trace.csv")?, open("trips.csv")?)?;
    write_labels_csv(open("labels.csv")?, &summary.labels)?;
    Ok(summary)
}
