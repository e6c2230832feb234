//! Raw record parsing, GPS cleaning, service-event geo-location and day
//! segmentation.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::median;

pub type TaxiId = Arc<str>;

/// Minimum number of decimal digits a coordinate's source text must carry.
pub const MIN_COORD_DECIMALS: usize = 6;

/// Default local-time offset (Beijing, UTC+8).
pub const DEFAULT_UTC_OFFSET_S: i64 = 8 * 3600;

#[derive(Debug, Clone, PartialEq)]
pub struct GpsPoint {
    pub taxi_id: TaxiId,
    pub lon: f64,
    pub lat: f64,
    pub ts: i64,
}

/// A trace row as read from disk; the decimal counts come from the source
/// text because the parsed float forgets trailing zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct RawGpsPoint {
    pub point: GpsPoint,
    pub lon_decimals: usize,
    pub lat_decimals: usize,
}

impl RawGpsPoint {
    pub fn from_text(taxi_id: &str, lon: &str, lat: &str, ts: i64) -> Result<Self> {
        let parse = |s: &str, what: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidArgument(format!("bad {what} `{s}`")))
        };
        let point = GpsPoint {
            taxi_id: taxi_id.into(),
            lon: parse(lon, "lon")?,
            lat: parse(lat, "lat")?,
            ts,
        };
        validate_coords(point.lon, point.lat)?;
        if ts <= 0 {
            return Err(Error::InvalidArgument(format!("non-positive timestamp {ts}")));
        }
        Ok(Self {
            point,
            lon_decimals: decimal_digits(lon),
            lat_decimals: decimal_digits(lat),
        })
    }
}

fn validate_coords(lon: f64, lat: f64) -> Result<()> {
    if !(-180.0..=180.0).contains(&lon) || !(-90.0..=90.0).contains(&lat) {
        return Err(Error::InvalidArgument(format!(
            "coordinates out of range ({lon}, {lat})"
        )));
    }
    Ok(())
}

/// Number of digits after the decimal point in a numeric literal.
pub fn decimal_digits(text: &str) -> usize {
    let t = text.trim();
    let mantissa = t.split(['e', 'E']).next().unwrap_or(t);
    match mantissa.split_once('.') {
        Some((_, frac)) => frac.chars().take_while(|c| c.is_ascii_digit()).count(),
        None => 0,
    }
}

/// Keeps only points whose lon and lat text both carry at least six decimals.
pub fn filter_gps_precision(points: Vec<RawGpsPoint>) -> Vec<GpsPoint> {
    points
        .into_iter()
        .filter(|p| p.lon_decimals >= MIN_COORD_DECIMALS && p.lat_decimals >= MIN_COORD_DECIMALS)
        .map(|p| p.point)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EventKind {
    Pickup,
    Dropoff,
}

impl EventKind {
    /// Wire code: 0 = pick-up, 1 = drop-off.
    pub fn code(self) -> u8 {
        match self {
            EventKind::Pickup => 0,
            EventKind::Dropoff => 1,
        }
    }

    pub fn from_code(code: &str) -> Option<Self> {
        match code.trim() {
            "0" => Some(EventKind::Pickup),
            "1" => Some(EventKind::Dropoff),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ServiceEvent {
    pub taxi_id: TaxiId,
    pub kind: EventKind,
    pub lon: f64,
    pub lat: f64,
    pub ts: i64,
}

/// A taximeter event before geo-location.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawEvent {
    pub taxi_id: TaxiId,
    pub kind: EventKind,
    pub ts: i64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TripRecord {
    pub taxi_id: TaxiId,
    pub origin_ts: i64,
    pub origin_lon: f64,
    pub origin_lat: f64,
    pub dest_ts: i64,
    pub dest_lon: f64,
    pub dest_lat: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ShiftClass {
    OneShift,
    TwoShift,
    Unknown,
}

impl fmt::Display for ShiftClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ShiftClass::OneShift => "one_shift",
            ShiftClass::TwoShift => "two_shift",
            ShiftClass::Unknown => "unknown",
        })
    }
}

impl std::str::FromStr for ShiftClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "one_shift" => Ok(ShiftClass::OneShift),
            "two_shift" => Ok(ShiftClass::TwoShift),
            "unknown" => Ok(ShiftClass::Unknown),
            other => Err(Error::InvalidArgument(format!("unknown shift class `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaxiDay {
    pub taxi_id: TaxiId,
    pub local_date: NaiveDate,
    pub gps: Vec<GpsPoint>,
    pub events: Vec<ServiceEvent>,
    pub shift_class: ShiftClass,
}

/// Geo-locates each raw event at the GPS point nearest in time; ties go to
/// the earlier point. Returns the located events sorted by (ts, kind) and the
/// number of events dropped because the taxi has no trace.
pub fn match_service_events(trace: &[GpsPoint], raw_events: &[RawEvent]) -> (Vec<ServiceEvent>, usize) {
    if trace.is_empty() {
        return (Vec::new(), raw_events.len());
    }
    let mut out: Vec<ServiceEvent> = raw_events
        .iter()
        .map(|e| {
            let p = &trace[nearest_point(trace, e.ts)];
            ServiceEvent {
                taxi_id: e.taxi_id.clone(),
                kind: e.kind,
                lon: p.lon,
                lat: p.lat,
                ts: e.ts,
            }
        })
        .collect();
    sort_events(&mut out);
    (out, 0)
}

/// Index of the trace point minimizing |ts_gps - ts|, earliest on ties.
fn nearest_point(trace: &[GpsPoint], ts: i64) -> usize {
    let upper = trace.partition_point(|p| p.ts < ts);
    if upper == 0 {
        return 0;
    }
    if upper == trace.len() {
        let t = trace[upper - 1].ts;
        return trace.partition_point(|p| p.ts < t);
    }
    let lower_ts = trace[upper - 1].ts;
    let chosen_ts = if ts - lower_ts <= trace[upper].ts - ts {
        lower_ts
    } else {
        return upper;
    };
    trace.partition_point(|p| p.ts < chosen_ts)
}

pub fn sort_events(events: &mut [ServiceEvent]) {
    events.sort_by(|a, b| {
        (&a.taxi_id, a.ts, a.kind)
            .cmp(&(&b.taxi_id, b.ts, b.kind))
            .then(a.lon.total_cmp(&b.lon))
            .then(a.lat.total_cmp(&b.lat))
    });
}

/// Expands each trip into a pick-up and a drop-off event. Trips whose origin
/// does not precede the destination are returned in the second vector.
pub fn expand_trips(trips: &[TripRecord]) -> (Vec<ServiceEvent>, Vec<TripRecord>) {
    let mut events = Vec::with_capacity(trips.len() * 2);
    let mut rejected = Vec::new();
    for t in trips {
        if t.origin_ts >= t.dest_ts {
            rejected.push(t.clone());
            continue;
        }
        events.push(ServiceEvent {
            taxi_id: t.taxi_id.clone(),
            kind: EventKind::Pickup,
            lon: t.origin_lon,
            lat: t.origin_lat,
            ts: t.origin_ts,
        });
        events.push(ServiceEvent {
            taxi_id: t.taxi_id.clone(),
            kind: EventKind::Dropoff,
            lon: t.dest_lon,
            lat: t.dest_lat,
            ts: t.dest_ts,
        });
    }
    sort_events(&mut events);
    (events, rejected)
}

/// Local civil date of an epoch timestamp under a fixed UTC offset.
pub fn local_date(ts: i64, utc_offset_s: i64) -> NaiveDate {
    let days = (ts + utc_offset_s).div_euclid(86_400);
    NaiveDate::from_num_days_from_ce_opt(EPOCH_DAYS_FROM_CE + days as i32).expect("date in range")
}

/// Seconds since local midnight.
pub fn local_seconds(ts: i64, utc_offset_s: i64) -> i64 {
    (ts + utc_offset_s).rem_euclid(86_400)
}

/// Epoch seconds of local midnight for a date.
pub fn local_midnight_ts(date: NaiveDate, utc_offset_s: i64) -> i64 {
    i64::from(date.num_days_from_ce() - EPOCH_DAYS_FROM_CE) * 86_400 - utc_offset_s
}

const EPOCH_DAYS_FROM_CE: i32 = 719_163;

/// Splits one taxi's sorted trace and events into local days.
pub fn segment_days(
    taxi_id: &TaxiId,
    gps: &[GpsPoint],
    events: &[ServiceEvent],
    utc_offset_s: i64,
) -> Vec<TaxiDay> {
    let mut days: BTreeMap<NaiveDate, TaxiDay> = BTreeMap::new();
    let empty = |date: NaiveDate| TaxiDay {
        taxi_id: taxi_id.clone(),
        local_date: date,
        gps: Vec::new(),
        events: Vec::new(),
        shift_class: ShiftClass::Unknown,
    };
    for p in gps {
        let date = local_date(p.ts, utc_offset_s);
        days.entry(date).or_insert_with(|| empty(date)).gps.push(p.clone());
    }
    for e in events {
        let date = local_date(e.ts, utc_offset_s);
        days.entry(date).or_insert_with(|| empty(date)).events.push(e.clone());
    }
    days.into_values()
        .map(|mut d| {
            d.gps.sort_by_key(|p| p.ts);
            sort_events(&mut d.events);
            d
        })
        .collect()
}

/// Median-day shift rule: one qualifying sleep and at most 18 h of activity
/// is one-shift; at least 20 h of activity is two-shift; anything else, or
/// fewer than seven observed days, is unknown.
pub fn classify_shift(sleep_episodes_per_day: &[usize], active_minutes_per_day: &[f64]) -> ShiftClass {
    const MIN_DAYS: usize = 7;
    let n = sleep_episodes_per_day.len().min(active_minutes_per_day.len());
    if n < MIN_DAYS {
        return ShiftClass::Unknown;
    }
    let episodes: Vec<f64> = sleep_episodes_per_day[..n].iter().map(|&e| e as f64).collect();
    let med_episodes = median(&episodes).unwrap_or(0.0);
    let med_active = median(&active_minutes_per_day[..n]).unwrap_or(0.0);
    if med_episodes == 1.0 && med_active <= 18.0 * 60.0 {
        ShiftClass::OneShift
    } else if med_active >= 20.0 * 60.0 {
        ShiftClass::TwoShift
    } else {
        ShiftClass::Unknown
    }
}

/// Counters accumulated while reading and cleaning raw files.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IngestReport {
    pub trace_rows_read: u64,
    pub rows_filtered_precision: u64,
    pub trip_rows_read: u64,
    pub trips_rejected: u64,
    pub events_dropped: u64,
    pub malformed: Vec<(String, u64, String)>,
    pub shift_counts: BTreeMap<ShiftClass, u64>,
}

impl fmt::Display for IngestReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "trace_rows_read={}", self.trace_rows_read)?;
        writeln!(f, "rows_filtered_precision={}", self.rows_filtered_precision)?;
        writeln!(f, "trip_rows_read={}", self.trip_rows_read)?;
        writeln!(f, "trips_rejected={}", self.trips_rejected)?;
        writeln!(f, "events_dropped={}", self.events_dropped)?;
        writeln!(f, "malformed_rows={}", self.malformed.len())?;
        for class in [ShiftClass::OneShift, ShiftClass::TwoShift, ShiftClass::Unknown] {
            writeln!(
                f,
                "taxis_{}={}",
                class,
                self.shift_counts.get(&class).copied().unwrap_or(0)
            )?;
        }
        for (file, line, reason) in &self.malformed {
            writeln!(f, "malformed {file}:{line}: {reason}")?;
        }
        Ok(())
    }
}

fn reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(file))
}

fn check_header(path: &Path, rdr: &mut csv::Reader<std::fs::File>, expected: &[&str]) -> Result<()> {
    let header = rdr.headers()?.clone();
    let got: Vec<&str> = header.iter().map(str::trim).collect();
    if got != expected {
        return Err(Error::Malformed {
            path: path.display().to_string(),
            line: 1,
            reason: format!("expected header `{}`, found `{}`", expected.join(","), got.join(",")),
        });
    }
    Ok(())
}

/// Interns taxi ids so that all records of a taxi share one allocation.
#[derive(Default)]
struct Interner(BTreeMap<String, TaxiId>);

impl Interner {
    fn get(&mut self, s: &str) -> TaxiId {
        if let Some(id) = self.0.get(s) {
            return id.clone();
        }
        let id: TaxiId = s.into();
        self.0.insert(s.to_string(), id.clone());
        id
    }
}

pub const TRACE_HEADER: [&str; 4] = ["taxi_id", "lon", "lat", "ts"];
pub const TRIP_HEADER: [&str; 7] = ["taxi_id", "o_ts", "o_lon", "o_lat", "d_ts", "d_lon", "d_lat"];
pub const EVENT_HEADER: [&str; 5] = ["taxi_id", "kind", "lon", "lat", "ts"];

/// Reads a trace CSV. Malformed rows are recorded in the report with their
/// line number.
pub fn read_trace_csv(path: &Path, report: &mut IngestReport) -> Result<Vec<RawGpsPoint>> {
    let mut rdr = reader(path)?;
    check_header(path, &mut rdr, &TRACE_HEADER)?;
    let mut ids = Interner::default();
    let mut out = Vec::new();
    let mut rec = csv::StringRecord::new();
    let name = path.display().to_string();
    loop {
        let line = rdr.position().line();
        match rdr.read_record(&mut rec) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) => {
                report.malformed.push((name.clone(), line, e.to_string()));
                continue;
            }
        }
        report.trace_rows_read += 1;
        let parsed = (|| {
            if rec.len() != 4 {
                return Err(Error::InvalidArgument(format!("expected 4 fields, got {}", rec.len())));
            }
            let ts: i64 = rec[3]
                .trim()
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad ts `{}`", &rec[3])))?;
            let mut p = RawGpsPoint::from_text("", &rec[1], &rec[2], ts)?;
            p.point.taxi_id = ids.get(rec[0].trim());
            Ok(p)
        })();
        match parsed {
            Ok(p) => out.push(p),
            Err(e) => report.malformed.push((name.clone(), line, e.to_string())),
        }
    }
    Ok(out)
}

pub fn read_trips_csv(path: &Path, report: &mut IngestReport) -> Result<Vec<TripRecord>> {
    let mut rdr = reader(path)?;
    check_header(path, &mut rdr, &TRIP_HEADER)?;
    let mut ids = Interner::default();
    let mut out = Vec::new();
    let mut rec = csv::StringRecord::new();
    let name = path.display().to_string();
    loop {
        let line = rdr.position().line();
        match rdr.read_record(&mut rec) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) => {
                report.malformed.push((name.clone(), line, e.to_string()));
                continue;
            }
        }
        report.trip_rows_read += 1;
        let parsed = (|| -> Result<TripRecord> {
            if rec.len() != 7 {
                return Err(Error::InvalidArgument(format!("expected 7 fields, got {}", rec.len())));
            }
            let int = |i: usize| {
                rec[i]
                    .trim()
                    .parse::<i64>()
                    .map_err(|_| Error::InvalidArgument(format!("bad integer `{}`", &rec[i])))
            };
            let float = |i: usize| {
                rec[i]
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| Error::InvalidArgument(format!("bad number `{}`", &rec[i])))
            };
            let trip = TripRecord {
                taxi_id: ids.get(rec[0].trim()),
                origin_ts: int(1)?,
                origin_lon: float(2)?,
                origin_lat: float(3)?,
                dest_ts: int(4)?,
                dest_lon: float(5)?,
                dest_lat: float(6)?,
            };
            validate_coords(trip.origin_lon, trip.origin_lat)?;
            validate_coords(trip.dest_lon, trip.dest_lat)?;
            Ok(trip)
        })();
        match parsed {
            Ok(t) => out.push(t),
            Err(e) => report.malformed.push((name.clone(), line, e.to_string())),
        }
    }
    Ok(out)
}

pub fn read_events_csv(path: &Path) -> Result<Vec<ServiceEvent>> {
    let mut rdr = reader(path)?;
    check_header(path, &mut rdr, &EVENT_HEADER)?;
    let mut ids = Interner::default();
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let bad = |reason: String| Error::Malformed {
            path: path.display().to_string(),
            line: i as u64 + 2,
            reason,
        };
        if rec.len() != 5 {
            return Err(bad(format!("expected 5 fields, got {}", rec.len())));
        }
        let kind = EventKind::from_code(&rec[1]).ok_or_else(|| bad(format!("bad kind `{}`", &rec[1])))?;
        let lon = rec[2].trim().parse().map_err(|_| bad(format!("bad lon `{}`", &rec[2])))?;
        let lat = rec[3].trim().parse().map_err(|_| bad(format!("bad lat `{}`", &rec[3])))?;
        let ts = rec[4].trim().parse().map_err(|_| bad(format!("bad ts `{}`", &rec[4])))?;
        out.push(ServiceEvent {
            taxi_id: ids.get(rec[0].trim()),
            kind,
            lon,
            lat,
            ts,
        });
    }
    Ok(out)
}

pub fn write_events_csv<W: Write>(out: W, events: &[ServiceEvent]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(EVENT_HEADER)?;
    for e in events {
        w.write_record([
            e.taxi_id.to_string(),
            e.kind.code().to_string(),
            e.lon.to_string(),
            e.lat.to_string(),
            e.ts.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<events>", e))?;
    Ok(())
}

/// Writes a cleaned trace in the trace CSV layout (shortest round-trip floats).
pub fn write_trace_csv<W: Write>(out: W, points: &[GpsPoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_HEADER)?;
    for p in points {
        w.write_record([p.taxi_id.to_string(), p.lon.to_string(), p.lat.to_string(), p.ts.to_string()])?;
    }
    w.flush().map_err(|e| Error::io("<trace>", e))?;
    Ok(())
}

/// Groups records by taxi, sorting each group by timestamp.
pub fn group_by_taxi<T, F>(items: Vec<T>, key: F) -> BTreeMap<TaxiId, Vec<T>>
where
    F: Fn(&T) -> (&TaxiId, i64),
{
    let mut map: BTreeMap<TaxiId, Vec<T>> = BTreeMap::new();
    for item in items {
        let id = key(&item).0.clone();
        map.entry(id).or_default().push(item);
    }
    for v in map.values_mut() {
        v.sort_by_key(|x| key(x).1);
    }
    map
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gps(ts: i64, lon: f64) -> GpsPoint {
        GpsPoint {
            taxi_id: "t".into(),
            lon,
            lat: 39.9,
            ts,
        }
    }

    fn raw(ts: i64) -> RawEvent {
        RawEvent {
            taxi_id: "t".into(),
            kind: EventKind::Pickup,
            ts,
        }
    }

    #[test]
    fn precision_filter_uses_source_text() {
        let short = RawGpsPoint::from_text("t", "116.391244", "39.90623", 10).unwrap();
        let long = RawGpsPoint::from_text("t", "116.391244", "39.906231", 11).unwrap();
        let zeros = RawGpsPoint::from_text("t", "116.400000", "39.900000", 12).unwrap();
        let kept = filter_gps_precision(vec![short, long.clone(), zeros]);
        assert_eq!(kept.len(), 2);
        assert_eq!(kept[0], long.point);
        assert!(filter_gps_precision(Vec::new()).is_empty());
    }

    #[test]
    fn decimal_digit_counting() {
        assert_eq!(decimal_digits("116.391244"), 6);
        assert_eq!(decimal_digits(" 1.50 "), 2);
        assert_eq!(decimal_digits("116"), 0);
        assert_eq!(decimal_digits("1.234567e2"), 6);
    }

    #[test]
    fn nearest_timestamp_with_earlier_tie() {
        let trace = vec![gps(100, 1.0), gps(110, 2.0)];
        let (ev, dropped) = match_service_events(&trace, &[raw(104), raw(105), raw(106)]);
        assert_eq!(dropped, 0);
        let lons: Vec<f64> = ev.iter().map(|e| e.lon).collect();
        assert_eq!(lons, vec![1.0, 1.0, 2.0]);
    }

    #[test]
    fn events_outside_trace_snap_to_ends() {
        let trace = vec![gps(100, 1.0), gps(110, 2.0), gps(110, 3.0)];
        let (ev, _) = match_service_events(&trace, &[raw(5), raw(500)]);
        assert_eq!(ev[0].lon, 1.0);
        assert_eq!(ev[1].lon, 2.0);
    }

    #[test]
    fn empty_trace_drops_events() {
        let (ev, dropped) = match_service_events(&[], &[raw(1), raw(2)]);
        assert!(ev.is_empty());
        assert_eq!(dropped, 2);
    }

    fn trip(o: i64, d: i64) -> TripRecord {
        TripRecord {
            taxi_id: "t".into(),
            origin_ts: o,
            origin_lon: 116.0,
            origin_lat: 39.0,
            dest_ts: d,
            dest_lon: 116.1,
            dest_lat: 39.1,
        }
    }

    #[test]
    fn trips_expand_to_sorted_pu_do_pairs() {
        let (ev, rej) = expand_trips(&[trip(100, 200)]);
        assert!(rej.is_empty());
        assert_eq!(ev.len(), 2);
        assert_eq!((ev[0].kind, ev[0].ts), (EventKind::Pickup, 100));
        assert_eq!((ev[1].kind, ev[1].ts), (EventKind::Dropoff, 200));

        let (ev, _) = expand_trips(&[trip(500, 600), trip(100, 200), trip(300, 400)]);
        let ts: Vec<i64> = ev.iter().map(|e| e.ts).collect();
        assert_eq!(ts, vec![100, 200, 300, 400, 500, 600]);

        let (ev, rej) = expand_trips(&[trip(200, 100)]);
        assert!(ev.is_empty());
        assert_eq!(rej.len(), 1);
    }

    #[test]
    fn shift_rule() {
        assert_eq!(classify_shift(&[1; 10], &[14.0 * 60.0; 10]), ShiftClass::OneShift);
        assert_eq!(classify_shift(&[0; 10], &[22.0 * 60.0; 10]), ShiftClass::TwoShift);
        assert_eq!(classify_shift(&[1; 3], &[14.0 * 60.0; 3]), ShiftClass::Unknown);
        assert_eq!(classify_shift(&[1; 10], &[19.0 * 60.0; 10]), ShiftClass::Unknown);
        assert_eq!(classify_shift(&[2; 10], &[14.0 * 60.0; 10]), ShiftClass::Unknown);
    }

    #[test]
    fn local_dates_follow_offset() {
        // 2015-01-01T16:00:00Z is 2015-01-02 00:00 in UTC+8
        let ts = 1_420_128_000;
        assert_eq!(local_date(ts, 0), NaiveDate::from_ymd_opt(2015, 1, 1).unwrap());
        assert_eq!(local_date(ts, DEFAULT_UTC_OFFSET_S), NaiveDate::from_ymd_opt(2015, 1, 2).unwrap());
        assert_eq!(local_date(ts - 1, DEFAULT_UTC_OFFSET_S), NaiveDate::from_ymd_opt(2015, 1, 1).unwrap());
        let d = NaiveDate::from_ymd_opt(2015, 1, 2).unwrap();
        assert_eq!(local_midnight_ts(d, DEFAULT_UTC_OFFSET_S), ts);
        assert_eq!(local_seconds(ts + 90, DEFAULT_UTC_OFFSET_S), 90);
    }

    #[test]
    fn segmentation_partitions_records() {
        let id: TaxiId = "t".into();
        let base = 1_420_128_000; // local midnight
        let pts: Vec<GpsPoint> = (0..50).map(|i| gps(base - 3600 * 5 + i * 1800, 1.0)).collect();
        let ev = vec![ServiceEvent {
            taxi_id: id.clone(),
            kind: EventKind::Pickup,
            lon: 1.0,
            lat: 1.0,
            ts: base + 10,
        }];
        let days = segment_days(&id, &pts, &ev, DEFAULT_UTC_OFFSET_S);
        assert_eq!(days.iter().map(|d| d.gps.len()).sum::<usize>(), 50);
        assert_eq!(days.iter().map(|d| d.events.len()).sum::<usize>(), 1);
        for d in &days {
            for p in &d.gps {
                assert_eq!(local_date(p.ts, DEFAULT_UTC_OFFSET_S), d.local_date);
            }
        }
    }
}
