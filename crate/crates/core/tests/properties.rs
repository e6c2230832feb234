use std::sync::Arc;

use proptest::prelude::*;

use idsdetect::eval::{average_precision, rank_suspects, roc_auc, ScoredTaxi};
use idsdetect::fisher::fisher_vector;
use idsdetect::gmm::GmmModel;
use idsdetect::ingest::{
    local_date, match_service_events, segment_days, EventKind, GpsPoint, RawEvent, ServiceEvent, ShiftClass,
    TaxiDay, TaxiId, DEFAULT_UTC_OFFSET_S,
};
use idsdetect::mcmil::noise_or;
use idsdetect::ssmsp::cosine_distance;
use idsdetect::stl::{detect_sleep_episodes, project, SleepParams};

const T0: i64 = 1_709_222_400; // 2024-03-01 00:00 local

fn taxi() -> TaxiId {
    Arc::from("t")
}

fn trace_from(ts: &[i64], offsets: &[(f64, f64)]) -> Vec<GpsPoint> {
    let mut ts = ts.to_vec();
    ts.sort_unstable();
    ts.iter()
        .zip(offsets.iter().cycle())
        .map(|(&t, &(dx, dy))| GpsPoint {
            taxi_id: taxi(),
            lon: 116.4 + dx,
            lat: 39.9 + dy,
            ts: t,
        })
        .collect()
}

fn raw_events(ts: &[i64]) -> Vec<RawEvent> {
    ts.iter()
        .enumerate()
        .map(|(i, &t)| RawEvent {
            taxi_id: taxi(),
            kind: if i % 2 == 0 { EventKind::Pickup } else { EventKind::Dropoff },
            ts: t,
        })
        .collect()
}

fn scored(scores: &[i32], labels: &[bool]) -> Vec<ScoredTaxi> {
    scores
        .iter()
        .zip(labels)
        .enumerate()
        .map(|(i, (&s, &l))| ScoredTaxi {
            taxi_id: format!("taxi{i:05}"),
            score: f64::from(s),
            label: Some(u8::from(l)),
        })
        .collect()
}

fn offsets() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-0.003f64..0.003, -0.003f64..0.003), 1..8)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn event_matching_picks_nearest_earliest_point(
        gps_ts in prop::collection::vec(0i64..5_000, 1..60),
        ev_ts in prop::collection::vec(-500i64..5_500, 0..40),
        offs in offsets(),
    ) {
        let trace = trace_from(&gps_ts, &offs);
        let (located, dropped) = match_service_events(&trace, &raw_events(&ev_ts));
        prop_assert_eq!(dropped, 0);
        prop_assert_eq!(located.len(), ev_ts.len());
        for e in &located {
            let best = trace
                .iter()
                .enumerate()
                .min_by_key(|(i, p)| ((p.ts - e.ts).abs(), *i))
                .map(|(_, p)| p)
                .unwrap();
            prop_assert_eq!((e.lon, e.lat), (best.lon, best.lat));
        }
    }

    #[test]
    fn event_matching_ignores_input_order(
        gps_ts in prop::collection::vec(0i64..5_000, 1..40),
        ev_ts in prop::collection::vec(0i64..5_000, 0..30).prop_shuffle(),
        offs in offsets(),
    ) {
        let trace = trace_from(&gps_ts, &offs);
        let events = raw_events(&ev_ts);
        let mut reversed = events.clone();
        reversed.reverse();
        prop_assert_eq!(match_service_events(&trace, &events), match_service_events(&trace, &reversed));
    }

    #[test]
    fn segment_days_partitions_records(
        gps_ts in prop::collection::vec(-86_400i64..5 * 86_400, 0..80),
        ev_ts in prop::collection::vec(-86_400i64..5 * 86_400, 0..30),
    ) {
        let gps = trace_from(&gps_ts.iter().map(|t| T0 + t).collect::<Vec<_>>(), &[(0.0, 0.0)]);
        let (events, _) = if gps.is_empty() {
            (Vec::new(), 0)
        } else {
            match_service_events(&gps, &raw_events(&ev_ts.iter().map(|t| T0 + t).collect::<Vec<_>>()))
        };
        let days = segment_days(&taxi(), &gps, &events, DEFAULT_UTC_OFFSET_S);
        prop_assert_eq!(days.iter().map(|d| d.gps.len()).sum::<usize>(), gps.len());
        prop_assert_eq!(days.iter().map(|d| d.events.len()).sum::<usize>(), events.len());
        prop_assert!(days.windows(2).all(|w| w[0].local_date < w[1].local_date));
        for d in &days {
            prop_assert!(!d.gps.is_empty() || !d.events.is_empty());
            prop_assert!(d.gps.iter().all(|p| local_date(p.ts, DEFAULT_UTC_OFFSET_S) == d.local_date));
            prop_assert!(d.events.iter().all(|e| local_date(e.ts, DEFAULT_UTC_OFFSET_S) == d.local_date));
            prop_assert!(d.gps.windows(2).all(|w| w[0].ts <= w[1].ts));
        }
    }

    #[test]
    fn sleep_episodes_are_long_stationary_and_event_free(
        steps in prop::collection::vec((60i64..1_800, -0.004f64..0.004, -0.004f64..0.004, any::<bool>()), 2..200),
        ev_ts in prop::collection::vec(0i64..86_400, 0..6),
        min_sleep in 30.0f64..240.0,
    ) {
        let mut gps = Vec::with_capacity(steps.len());
        let (mut t, mut lon, mut lat) = (T0, 116.4, 39.9);
        for &(dt, dx, dy, moved) in &steps {
            t += dt;
            if moved {
                lon += dx;
                lat += dy;
            }
            gps.push(GpsPoint { taxi_id: taxi(), lon: lon + dx * 0.01, lat: lat + dy * 0.01, ts: t });
        }
        let events: Vec<ServiceEvent> = ev_ts
            .iter()
            .map(|&e| ServiceEvent { taxi_id: taxi(), kind: EventKind::Pickup, lon, lat, ts: T0 + e })
            .collect();
        let day = TaxiDay {
            taxi_id: taxi(),
            local_date: local_date(T0, DEFAULT_UTC_OFFSET_S),
            gps: gps.clone(),
            events: events.clone(),
            shift_class: ShiftClass::Unknown,
        };
        let params = SleepParams { stationary_radius_m: 200.0, min_sleep_minutes: min_sleep };
        let episodes = detect_sleep_episodes(&day, &params, DEFAULT_UTC_OFFSET_S);
        let xy = project(&gps);
        for ep in &episodes {
            prop_assert!(ep.duration >= min_sleep);
            prop_assert!(events.iter().all(|e| e.ts < ep.start_ts || e.ts > ep.end_ts));
            let inside: Vec<_> = gps
                .iter()
                .zip(&xy)
                .filter(|(p, _)| p.ts >= ep.start_ts && p.ts <= ep.end_ts)
                .map(|(_, q)| *q)
                .collect();
            let n = inside.len() as f64;
            let c = (inside.iter().map(|q| q.0).sum::<f64>() / n, inside.iter().map(|q| q.1).sum::<f64>() / n);
            prop_assert!(inside.iter().all(|q| (q.0 - c.0).hypot(q.1 - c.1) <= 200.0 + 1e-6));
        }
        prop_assert!(episodes.windows(2).all(|w| w[0].end_ts < w[1].start_ts));
        for ep in &episodes {
            let same_day = episodes.iter().filter(|e| e.local_date == ep.local_date);
            prop_assert_eq!(same_day.clone().filter(|e| e.canonical).count(), 1);
            let longest = same_day.map(|e| e.duration).fold(0.0, f64::max);
            prop_assert!(!ep.canonical || ep.duration == longest);
        }
    }

    #[test]
    fn noise_or_grows_with_each_input(
        probs in prop::collection::vec(0.0f64..=1.0, 0..20),
        extra in 0.0f64..=1.0,
    ) {
        let base = noise_or(probs.iter().copied());
        let more = noise_or(probs.iter().copied().chain([extra]));
        prop_assert!((0.0..=1.0).contains(&base));
        prop_assert!(more >= base);
        prop_assert!(more >= extra - 1e-15);
    }

    #[test]
    fn ranking_metrics_ignore_monotone_rescaling(
        rows in prop::collection::vec((-50i32..50, any::<bool>()), 2..200),
        scale in 1i32..7,
        shift in -1_000i32..1_000,
    ) {
        let (scores, labels): (Vec<i32>, Vec<bool>) = rows.into_iter().unzip();
        prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
        let a = scored(&scores, &labels);
        let mut b = a.clone();
        b.iter_mut().for_each(|s| s.score = (s.score * f64::from(scale) + f64::from(shift)).powi(3));
        prop_assert_eq!(roc_auc(&a).unwrap(), roc_auc(&b).unwrap());
        prop_assert_eq!(average_precision(&a).unwrap(), average_precision(&b).unwrap());
        let ids = |v: &[ScoredTaxi]| rank_suspects(v).into_iter().map(|s| s.taxi_id).collect::<Vec<_>>();
        prop_assert_eq!(ids(&a), ids(&b));
    }

    #[test]
    fn fisher_vector_ignores_point_order(
        comps in prop::collection::vec(
            (-2.0f64..2.0, prop::collection::vec(-2.0f64..2.0, 4), prop::collection::vec(0.25f64..2.25, 4)),
            1..6,
        ),
        bucket in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 4), 1..20).prop_shuffle(),
    ) {
        let alphas = comps.iter().map(|c| c.0).collect();
        let means = comps.iter().map(|c| c.1.clone()).collect();
        let vars = comps.iter().map(|c| c.2.clone()).collect();
        let model = GmmModel::new(alphas, means, vars).unwrap();
        let mut reversed = bucket.clone();
        reversed.reverse();
        let a = fisher_vector(&model, &bucket).unwrap();
        let b = fisher_vector(&model, &reversed).unwrap();
        prop_assert_eq!(a.bucket_size, b.bucket_size);
        let norm: f64 = a.values.iter().map(|v| v * v).sum();
        prop_assert!(norm == 0.0 || (norm - 1.0).abs() < 1e-12);
        for (x, y) in a.values.iter().zip(&b.values) {
            prop_assert!((x - y).abs() < 1e-12, "{} vs {}", x, y);
        }
    }

    #[test]
    fn cosine_distance_is_symmetric_and_bounded(
        a in prop::collection::vec(-1e3f64..1e3, 1..32),
        seed in prop::collection::vec(-1e3f64..1e3, 32),
    ) {
        let b = &seed[..a.len()];
        match (cosine_distance(&a, b), cosine_distance(b, &a)) {
            (Some(x), Some(y)) => {
                prop_assert_eq!(x, y);
                prop_assert!((0.0..=2.0).contains(&x));
            }
            (x, y) => prop_assert_eq!(x, y),
        }
        if a.iter().any(|&v| v != 0.0) {
            prop_assert!(cosine_distance(&a, &a).unwrap() < 1e-12);
        }
    }
}
