//! End-to-end stages over a data directory (raw CSVs, labels) and a work
//! directory (every intermediate artifact). Each stage reads only files,
//! writes only files, and records a manifest of its inputs and outputs.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Read};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::NaiveDate;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::artifact;
use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::eval::{evaluate, rank_suspects, write_ranked_csv, Metrics, ScoredTaxi};
use crate::fisher::fisher_vector;
use crate::gmm::{fit_gmm, GmmFile, GMM_KIND};
use crate::ingest::{
    expand_trips, filter_gps_precision, group_by_taxi, local_date, local_seconds, match_service_events,
    read_events_csv, read_trace_csv, read_trips_csv, segment_days, write_events_csv, write_trace_csv, EventKind,
    GpsPoint, IngestReport, RawEvent, ServiceEvent, ShiftClass, TaxiDay, TaxiId,
};
use crate::lda::{fit_lda, infer_topics, LdaModel, LDA_KIND};
use crate::logistic::{fit_logistic, LogisticModel, LogisticOptions};
use crate::mcmil::{train, McMilModel, MilBag};
use crate::pu::{build_vocabulary, tokenize, PuPoint, Vocabulary, VOCAB_KIND};
use crate::rng::{derive_seed, rng_for};
use crate::ssmsp::{build_bags, Bag, BagSet, BehaviorKind, DailyBehavior, BAGS_KIND};
use crate::stl::{daily_activity, detect_taxi_episodes, stl_vector, SleepEpisode, StandardizationStats};
use crate::synth::{generate_fleet_to_dir, read_labels_csv, LabelRow};

/// Locations of raw inputs and of stage outputs.
#[derive(Debug, Clone)]
pub struct Workspace {
    pub data_dir: PathBuf,
    pub work_dir: PathBuf,
}

impl Workspace {
    pub fn new(data_dir: impl Into<PathBuf>, work_dir: impl Into<PathBuf>) -> Self {
        Self {
            data_dir: data_dir.into(),
            work_dir: work_dir.into(),
        }
    }

    pub fn data(&self, name: &str) -> PathBuf {
        self.data_dir.join(name)
    }

    pub fn work(&self, name: &str) -> PathBuf {
        self.work_dir.join(name)
    }

    pub fn labels(&self) -> PathBuf {
        self.data("labels.csv")
    }

    pub fn model_path(&self, kind: ModelKind) -> PathBuf {
        self.work(&format!("model_{kind}.json"))
    }

    pub fn scores_path(&self, kind: ModelKind) -> PathBuf {
        self.work(&format!("scores_{kind}.csv"))
    }

    pub fn metrics_path(&self, kind: ModelKind) -> PathBuf {
        self.work(&format!("metrics_{kind}.txt"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: String,
    pub config_hash: String,
    pub seed: u64,
    pub split_seed: u64,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

pub const MANIFEST_KIND: &str = "manifest";

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

fn hashes(paths: &[PathBuf]) -> Result<BTreeMap<String, String>> {
    paths
        .iter()
        .filter(|p| p.exists())
        .map(|p| Ok((p.display().to_string(), sha256_file(p)?)))
        .collect()
}

fn write_manifest(cfg: &PipelineConfig, ws: &Workspace, stage: &str, inputs: &[PathBuf], outputs: &[PathBuf]) -> Result<()> {
    let m = Manifest {
        stage: stage.to_string(),
        config_hash: cfg.hash(),
        seed: cfg.seed,
        split_seed: cfg.split_seed,
        inputs: hashes(inputs)?,
        outputs: hashes(outputs)?,
    };
    artifact::save(&ws.work(&format!("manifests/{stage}.json")), MANIFEST_KIND, &m)?;
    std::fs::write(ws.work("config.txt"), cfg.to_text()).map_err(|e| Error::io(ws.work("config.txt"), e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

fn require_all(paths: &[PathBuf]) -> Result<()> {
    paths.iter().try_for_each(|p| artifact::require(p))
}

/// Keeps at most `max` items, chosen by a seeded shuffle, in original order.
fn subsample<T: Clone>(items: &[T], max: usize, seed: u64, tag: &str) -> Vec<T> {
    if items.len() <= max {
        return items.to_vec();
    }
    let mut idx: Vec<usize> = (0..items.len()).collect();
    idx.shuffle(&mut rng_for(seed, &["subsample", tag]));
    idx.truncate(max);
    idx.sort_unstable();
    idx.into_iter().map(|i| items[i].clone()).collect()
}

pub fn synth(cfg: &PipelineConfig, ws: &Workspace) -> Result<Vec<LabelRow>> {
    let summary = generate_fleet_to_dir(&cfg.synth_config(), &ws.data_dir)?;
    let outputs = [ws.data("trace.csv"), ws.data("trips.csv"), ws.labels()];
    write_manifest(cfg, ws, "synth", &[], &outputs)?;
    Ok(summary.labels)
}

fn read_clean_trace(path: &Path) -> Result<Vec<GpsPoint>> {
    let mut report = IngestReport::default();
    let rows = read_trace_csv(path, &mut report)?;
    if let Some((file, line, reason)) = report.malformed.first() {
        return Err(Error::Malformed {
            path: file.clone(),
            line: *line,
            reason: reason.clone(),
        });
    }
    Ok(rows.into_iter().map(|r| r.point).collect())
}

struct TaxiRecords {
    gps: Vec<GpsPoint>,
    events: Vec<ServiceEvent>,
}

fn per_taxi(gps: Vec<GpsPoint>, events: Vec<ServiceEvent>) -> BTreeMap<TaxiId, TaxiRecords> {
    let mut gps_by = group_by_taxi(gps, |p| (&p.taxi_id, p.ts));
    let events_by = group_by_taxi(events, |e| (&e.taxi_id, e.ts));
    let ids: BTreeSet<TaxiId> = gps_by.keys().chain(events_by.keys()).cloned().collect();
    let mut events_by = events_by;
    ids.into_iter()
        .map(|id| {
            let rec = TaxiRecords {
                gps: gps_by.remove(&id).unwrap_or_default(),
                events: events_by.remove(&id).unwrap_or_default(),
            };
            (id, rec)
        })
        .collect()
}

fn taxi_days(cfg: &PipelineConfig, id: &TaxiId, rec: &TaxiRecords) -> Vec<TaxiDay> {
    segment_days(id, &rec.gps, &rec.events, cfg.utc_offset_s())
}

/// Reads raw trace and trip files, filters imprecise fixes, locates
/// service events on the trace, classifies shifts, and keeps one-shift taxis.
pub fn ingest(cfg: &PipelineConfig, ws: &Workspace) -> Result<IngestReport> {
    let trace_path = ws.data("trace.csv");
    let trips_path = ws.data("trips.csv");
    require_all(&[trace_path.clone(), trips_path.clone()])?;
    let mut report = IngestReport::default();
    let raw = read_trace_csv(&trace_path, &mut report)?;
    let parsed = raw.len();
    let gps = filter_gps_precision(raw);
    report.rows_filtered_precision = (parsed - gps.len()) as u64;
    let trips = read_trips_csv(&trips_path, &mut report)?;
    let (expanded, rejected) = expand_trips(&trips);
    report.trips_rejected = rejected.len() as u64;
    let raw_events: Vec<RawEvent> = expanded
        .into_iter()
        .map(|e| RawEvent {
            taxi_id: e.taxi_id,
            kind: e.kind,
            ts: e.ts,
        })
        .collect();
    let mut gps_by = group_by_taxi(gps, |p| (&p.taxi_id, p.ts));
    let raw_by = group_by_taxi(raw_events, |e| (&e.taxi_id, e.ts));
    let mut kept_gps = Vec::new();
    let mut kept_events = Vec::new();
    let mut shifts = Vec::new();
    let ids: BTreeSet<TaxiId> = gps_by.keys().chain(raw_by.keys()).cloned().collect();
    for id in ids {
        let trace = gps_by.remove(&id).unwrap_or_default();
        let raw = raw_by.get(&id).map(Vec::as_slice).unwrap_or_default();
        let (events, dropped) = match_service_events(&trace, raw);
        report.events_dropped += dropped as u64;
        let rec = TaxiRecords { gps: trace, events };
        let days = taxi_days(cfg, &id, &rec);
        let episodes = detect_taxi_episodes(&days, &cfg.sleep_params(), cfg.utc_offset_s());
        let (sleeps, active) = daily_activity(&days, &episodes, cfg.moving_threshold_m);
        let class = crate::ingest::classify_shift(&sleeps, &active);
        *report.shift_counts.entry(class).or_default() += 1;
        shifts.push((id.clone(), class));
        if class == ShiftClass::OneShift {
            kept_gps.extend(rec.gps);
            kept_events.extend(rec.events);
        }
    }
    let gps_out = ws.work("gps.csv");
    let events_out = ws.work("events.csv");
    let shift_out = ws.work("shift.csv");
    let report_out = ws.work("ingest_report.txt");
    write_trace_csv(create(&gps_out)?, &kept_gps)?;
    write_events_csv(create(&events_out)?, &kept_events)?;
    let mut w = csv::Writer::from_writer(create(&shift_out)?);
    w.write_record(["taxi_id", "shift_class"])?;
    for (id, class) in &shifts {
        w.write_record([id.to_string(), class.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(&shift_out, e))?;
    std::fs::write(&report_out, report.to_string()).map_err(|e| Error::io(&report_out, e))?;
    write_manifest(
        cfg,
        ws,
        "ingest",
        &[trace_path, trips_path],
        &[gps_out, events_out, shift_out, report_out],
    )?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StlRow {
    pub taxi_id: String,
    pub date: NaiveDate,
    pub vector: [f64; 4],
}

pub const STL_HEADER: [&str; 6] = ["taxi_id", "date", "t_s", "lon", "lat", "t_d"];

fn write_stl_csv(path: &Path, rows: &[StlRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(STL_HEADER)?;
    for r in rows {
        let mut rec = vec![r.taxi_id.clone(), r.date.to_string()];
        rec.extend(r.vector.iter().map(f64::to_string));
        w.write_record(rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_stl_csv(path: &Path) -> Result<Vec<StlRow>> {
    artifact::require(path)?;
    let mut rdr = csv::Reader::from_path(path)?;
    let name = path.display().to_string();
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let bad = |reason: &str| Error::Malformed {
            path: name.clone(),
            line: i as u64 + 2,
            reason: reason.to_string(),
        };
        if rec.len() != 6 {
            return Err(bad("expected 6 fields"));
        }
        let date = NaiveDate::from_str(&rec[1]).map_err(|_| bad("bad date"))?;
        let mut vector = [0.0; 4];
        for (v, s) in vector.iter_mut().zip(rec.iter().skip(2)) {
            *v = s.parse().map_err(|_| bad("bad number"))?;
        }
        out.push(StlRow {
            taxi_id: rec[0].to_string(),
            date,
            vector,
        });
    }
    Ok(out)
}

/// Canonical (longest) sleep episode of every taxi-day.
pub fn extract_stl(cfg: &PipelineConfig, ws: &Workspace) -> Result<usize> {
    let gps_path = ws.work("gps.csv");
    let events_path = ws.work("events.csv");
    require_all(&[gps_path.clone(), events_path.clone()])?;
    let records = per_taxi(read_clean_trace(&gps_path)?, read_events_csv(&events_path)?);
    let mut rows = Vec::new();
    for (id, rec) in &records {
        let days = taxi_days(cfg, id, rec);
        let episodes: Vec<SleepEpisode> = detect_taxi_episodes(&days, &cfg.sleep_params(), cfg.utc_offset_s());
        rows.extend(episodes.iter().filter(|e| e.canonical).map(|e| StlRow {
            taxi_id: id.to_string(),
            date: e.local_date,
            vector: stl_vector(e).0,
        }));
    }
    let out = ws.work("stl.csv");
    write_stl_csv(&out, &rows)?;
    write_manifest(cfg, ws, "extract-stl", &[gps_path, events_path], &[out])?;
    Ok(rows.len())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitSet {
    Train,
    Test,
}

/// Stratified train/test assignment of the ingested, labeled taxis.
pub fn split(cfg: &PipelineConfig, ws: &Workspace) -> Result<BTreeMap<String, SplitSet>> {
    let shift_path = ws.work("shift.csv");
    require_all(&[shift_path.clone(), ws.labels()])?;
    let kept = read_one_shift(&shift_path)?;
    let labels = read_labels_csv(&ws.labels())?;
    let mut by_class: BTreeMap<u8, Vec<String>> = BTreeMap::new();
    for l in labels.iter().filter(|l| kept.contains(&l.taxi_id)) {
        by_class.entry(l.label).or_default().push(l.taxi_id.clone());
    }
    let mut out = BTreeMap::new();
    for (class, mut ids) in by_class {
        ids.sort();
        ids.shuffle(&mut rng_for(cfg.split_seed, &["split", &class.to_string()]));
        let n_test = (ids.len() as f64 * cfg.test_fraction).round() as usize;
        for (i, id) in ids.into_iter().enumerate() {
            out.insert(id, if i < n_test { SplitSet::Test } else { SplitSet::Train });
        }
    }
    let path = ws.work("split.csv");
    let mut w = csv::Writer::from_writer(create(&path)?);
    w.write_record(["taxi_id", "set"])?;
    for (id, set) in &out {
        let s = match set {
            SplitSet::Train => "train",
            SplitSet::Test => "test",
        };
        w.write_record([id.as_str(), s])?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    write_manifest(cfg, ws, "split", &[shift_path, ws.labels()], &[path])?;
    Ok(out)
}

fn read_one_shift(path: &Path) -> Result<BTreeSet<String>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut out = BTreeSet::new();
    for rec in rdr.records() {
        let rec = rec?;
        if rec.get(1) == Some("one_shift") {
            out.insert(rec[0].to_string());
        }
    }
    Ok(out)
}

/// `None` when no split has been made.
pub fn read_split(ws: &Workspace) -> Result<Option<BTreeMap<String, SplitSet>>> {
    let path = ws.work("split.csv");
    if !path.exists() {
        return Ok(None);
    }
    let mut rdr = csv::Reader::from_path(&path)?;
    let mut out = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let set = match rec.get(1) {
            Some("train") => SplitSet::Train,
            Some("test") => SplitSet::Test,
            other => {
                return Err(Error::Malformed {
                    path: path.display().to_string(),
                    line: i as u64 + 2,
                    reason: format!("bad set {other:?}"),
                })
            }
        };
        out.insert(rec[0].to_string(), set);
    }
    Ok(Some(out))
}

fn in_set(split: &Option<BTreeMap<String, SplitSet>>, id: &str, set: SplitSet) -> bool {
    match split {
        None => true,
        Some(m) => m.get(id) == Some(&set),
    }
}

/// Mixture over standardized STL vectors of the training taxis.
pub fn fit_gmm_stage(cfg: &PipelineConfig, ws: &Workspace) -> Result<GmmFile> {
    let stl_path = ws.work("stl.csv");
    let rows = read_stl_csv(&stl_path)?;
    let split = read_split(ws)?;
    let raw: Vec<Vec<f64>> = rows
        .iter()
        .filter(|r| in_set(&split, &r.taxi_id, SplitSet::Train))
        .map(|r| r.vector.to_vec())
        .collect();
    let raw = subsample(&raw, cfg.max_gmm_points, cfg.seed, "gmm");
    let stats = StandardizationStats::fit(&raw);
    let data: Vec<Vec<f64>> = raw.iter().map(|r| stats.apply(r)).collect();
    let fit = fit_gmm(&data, cfg.gmm_components, derive_seed(cfg.seed, &["gmm"]), &cfg.em_options())?;
    let file = GmmFile::new(&fit.model, stats);
    let out = ws.work("gmm.model");
    artifact::save(&out, GMM_KIND, &file)?;
    let mut inputs = vec![stl_path];
    inputs.push(ws.work("split.csv"));
    write_manifest(cfg, ws, "fit-gmm", &inputs, &[out])?;
    Ok(file)
}

type DocKey = (String, NaiveDate);

fn pickups_by_day(cfg: &PipelineConfig, events: &[ServiceEvent]) -> BTreeMap<DocKey, Vec<PuPoint>> {
    let off = cfg.utc_offset_s();
    let mut out: BTreeMap<DocKey, Vec<PuPoint>> = BTreeMap::new();
    for e in events.iter().filter(|e| e.kind == EventKind::Pickup) {
        out.entry((e.taxi_id.to_string(), local_date(e.ts, off)))
            .or_default()
            .push(PuPoint {
                t_pu: local_seconds(e.ts, off) as f64 / 60.0,
                lon: e.lon,
                lat: e.lat,
            });
    }
    out
}

fn doc_tokens(cfg: &PipelineConfig, vocab: &Vocabulary, key: &DocKey, points: &[PuPoint]) -> Result<Vec<usize>> {
    let delta = vocab.delta_for_meters(cfg.pu_delta_m);
    let mut rng = rng_for(cfg.seed, &["tokens", &key.0, &key.1.to_string()]);
    tokenize(points, vocab, delta, &mut rng)
}

/// Pick-up vocabulary and topic model over the training taxis' days.
pub fn fit_lda_stage(cfg: &PipelineConfig, ws: &Workspace) -> Result<(Vocabulary, LdaModel)> {
    let events_path = ws.work("events.csv");
    let events = read_events_csv(&events_path)?;
    let split = read_split(ws)?;
    let docs = pickups_by_day(cfg, &events);
    let train_docs: Vec<(&DocKey, &Vec<PuPoint>)> = docs
        .iter()
        .filter(|(k, _)| in_set(&split, &k.0, SplitSet::Train))
        .collect();
    let points: Vec<PuPoint> = train_docs.iter().flat_map(|(_, p)| p.iter().copied()).collect();
    let points = subsample(&points, cfg.max_vocab_points, cfg.seed, "vocab");
    let vocab = build_vocabulary(&points, cfg.vocab_words, derive_seed(cfg.seed, &["vocab"]))?.vocab;
    let chosen = subsample(&train_docs, cfg.max_lda_docs, cfg.seed, "lda-docs");
    let corpus = chosen
        .iter()
        .map(|(k, p)| doc_tokens(cfg, &vocab, k, p))
        .collect::<Result<Vec<_>>>()?;
    let lda = fit_lda(&corpus, vocab.len(), &cfg.lda_params())?.model;
    let vocab_out = ws.work("vocabulary.model");
    let lda_out = ws.work("lda.model");
    artifact::save(&vocab_out, VOCAB_KIND, &vocab)?;
    artifact::save(&lda_out, LDA_KIND, &lda)?;
    write_manifest(
        cfg,
        ws,
        "fit-lda",
        &[events_path, ws.work("split.csv")],
        &[vocab_out, lda_out],
    )?;
    Ok((vocab, lda))
}

pub const DAILY_KIND: &str = "daily";

/// Daily Fisher vectors of the canonical STL and topic proportions of the
/// day's pick-ups, for every ingested taxi.
pub fn encode(cfg: &PipelineConfig, ws: &Workspace) -> Result<Vec<DailyBehavior>> {
    let gmm_path = ws.work("gmm.model");
    let vocab_path = ws.work("vocabulary.model");
    let lda_path = ws.work("lda.model");
    let stl_path = ws.work("stl.csv");
    let events_path = ws.work("events.csv");
    require_all(&[gmm_path.clone(), vocab_path.clone(), lda_path.clone(), stl_path.clone(), events_path.clone()])?;
    let gmm_file: GmmFile = artifact::load(&gmm_path, GMM_KIND)?;
    let gmm = gmm_file.model()?;
    let vocab: Vocabulary = artifact::load(&vocab_path, VOCAB_KIND)?;
    let lda: LdaModel = artifact::load(&lda_path, LDA_KIND)?;
    let mut days: BTreeMap<DocKey, DailyBehavior> = BTreeMap::new();
    let blank = |k: &DocKey| DailyBehavior {
        taxi_id: k.0.clone(),
        local_date: k.1,
        f_stl: None,
        f_pu: None,
    };
    for r in read_stl_csv(&stl_path)? {
        let key = (r.taxi_id.clone(), r.date);
        let z = gmm_file.stats.apply(&r.vector);
        let fv = fisher_vector(&gmm, &[z]).map(|f| f.values);
        days.entry(key.clone()).or_insert_with(|| blank(&key)).f_stl = fv;
    }
    let events = read_events_csv(&events_path)?;
    let mut theta_rows = Vec::new();
    for (key, points) in pickups_by_day(cfg, &events) {
        let tokens = doc_tokens(cfg, &vocab, &key, &points)?;
        let seed = derive_seed(cfg.seed, &["infer", &key.0, &key.1.to_string()]);
        let theta = infer_topics(&lda, &tokens, cfg.infer_iters, seed)?;
        if theta.missing {
            continue;
        }
        theta_rows.push((key.clone(), theta.values.clone()));
        days.entry(key.clone()).or_insert_with(|| blank(&key)).f_pu = Some(theta.values);
    }
    let daily: Vec<DailyBehavior> = days.into_values().collect();
    let out = ws.work("daily.json");
    artifact::save(&out, DAILY_KIND, &daily)?;
    let theta_out = ws.work("theta.csv");
    let mut w = csv::Writer::from_writer(create(&theta_out)?);
    let mut header = vec!["taxi_id".to_string(), "date".to_string()];
    header.extend((1..=lda.n_topics).map(|t| format!("theta_{t}")));
    w.write_record(&header)?;
    for ((id, date), theta) in &theta_rows {
        let mut rec = vec![id.clone(), date.to_string()];
        rec.extend(theta.iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(&theta_out, e))?;
    write_manifest(
        cfg,
        ws,
        "encode",
        &[gmm_path, vocab_path, lda_path, stl_path, events_path],
        &[out, theta_out],
    )?;
    Ok(daily)
}

fn labels_map(ws: &Workspace) -> Result<Option<BTreeMap<String, u8>>> {
    let path = ws.labels();
    if !path.exists() {
        return Ok(None);
    }
    Ok(Some(read_labels_csv(&path)?.into_iter().map(|l| (l.taxi_id, l.label)).collect()))
}

/// Sliding-window multi-scale pooled self-similarity bags.
pub fn features(cfg: &PipelineConfig, ws: &Workspace) -> Result<BagSet> {
    let daily_path = ws.work("daily.json");
    let daily: Vec<DailyBehavior> = artifact::load(&daily_path, DAILY_KIND)?;
    let anchor = daily
        .iter()
        .map(|d| d.local_date)
        .min()
        .ok_or_else(|| Error::InvalidArgument("no encoded days".into()))?;
    let mut per_taxi: BTreeMap<String, Vec<DailyBehavior>> = BTreeMap::new();
    for d in daily {
        per_taxi.entry(d.taxi_id.clone()).or_default().push(d);
    }
    let mut set = build_bags(&per_taxi, anchor, &cfg.window_params())?;
    if let Some(labels) = labels_map(ws)? {
        for b in &mut set.bags {
            b.label = labels.get(&b.taxi_id).copied();
        }
    }
    let out = ws.work("bags.json");
    artifact::save(&out, BAGS_KIND, &set)?;
    let csv_out = ws.work("features.csv");
    let mut w = csv::Writer::from_writer(create(&csv_out)?);
    let mut header = vec!["taxi_id".to_string(), "kind".to_string(), "window_start".to_string()];
    header.extend((1..=cfg.window_params().feature_len()).map(|i| format!("v{i}")));
    w.write_record(&header)?;
    for b in &set.bags {
        for f in b.stl.iter().chain(&b.pu) {
            let mut rec = vec![b.taxi_id.clone(), f.kind.to_string(), f.window_start.to_string()];
            rec.extend(f.values.iter().map(f64::to_string));
            w.write_record(&rec)?;
        }
    }
    w.flush().map_err(|e| Error::io(&csv_out, e))?;
    write_manifest(cfg, ws, "features", &[daily_path, ws.labels()], &[out, csv_out])?;
    Ok(set)
}

/// Which classifier to train.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    /// One boosted component per behavior.
    McMil,
    /// Single component over concatenated per-window features.
    Mil,
    MilStl,
    MilPu,
    Logistic,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::McMil,
        ModelKind::Mil,
        ModelKind::MilStl,
        ModelKind::MilPu,
        ModelKind::Logistic,
    ];

    pub fn layout(self) -> Layout {
        match self {
            ModelKind::McMil | ModelKind::Logistic => Layout::PerBehavior,
            ModelKind::Mil => Layout::Concatenated,
            ModelKind::MilStl => Layout::Only(BehaviorKind::Stl),
            ModelKind::MilPu => Layout::Only(BehaviorKind::Pu),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::McMil => "mcmil",
            ModelKind::Mil => "mil",
            ModelKind::MilStl => "mil-stl",
            ModelKind::MilPu => "mil-pu",
            ModelKind::Logistic => "logistic",
        })
    }
}

impl FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.to_string() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown model `{s}`")))
    }
}

/// How a bag's windows become classifier components.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Layout {
    PerBehavior,
    /// One instance per window: STL features then PU features, zero-filled
    /// when a behavior is missing in that window.
    Concatenated,
    Only(BehaviorKind),
}

impl Layout {
    pub fn component_names(self) -> Vec<&'static str> {
        match self {
            Layout::PerBehavior => vec!["stl", "pu"],
            Layout::Concatenated => vec!["stl+pu"],
            Layout::Only(BehaviorKind::Stl) => vec!["stl"],
            Layout::Only(BehaviorKind::Pu) => vec!["pu"],
        }
    }

    pub fn dims(self, feature_len: usize) -> Vec<usize> {
        match self {
            Layout::PerBehavior => vec![feature_len, feature_len],
            Layout::Concatenated => vec![2 * feature_len],
            Layout::Only(_) => vec![feature_len],
        }
    }

    pub fn to_mil(self, bag: &Bag, feature_len: usize) -> MilBag {
        let values = |kind: BehaviorKind| -> Vec<Vec<f64>> {
            bag.instances(kind).iter().map(|f| f.values.clone()).collect()
        };
        let components = match self {
            Layout::PerBehavior => vec![values(BehaviorKind::Stl), values(BehaviorKind::Pu)],
            Layout::Only(kind) => vec![values(kind)],
            Layout::Concatenated => {
                let mut windows: BTreeMap<NaiveDate, Vec<f64>> = BTreeMap::new();
                for (offset, kind) in [(0, BehaviorKind::Stl), (feature_len, BehaviorKind::Pu)] {
                    for f in bag.instances(kind) {
                        let row = windows.entry(f.window_start).or_insert_with(|| vec![0.0; 2 * feature_len]);
                        row[offset..offset + feature_len].copy_from_slice(&f.values);
                    }
                }
                vec![windows.into_values().collect()]
            }
        };
        MilBag { components }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum TrainedModel {
    Boosted { layout: Layout, model: McMilModel },
    Logistic { layout: Layout, model: LogisticModel },
}

pub const MODEL_KIND: &str = "model";

impl TrainedModel {
    pub fn score(&self, bag: &Bag, feature_len: usize) -> f64 {
        match self {
            TrainedModel::Boosted { layout, model } => model.score(&layout.to_mil(bag, feature_len)),
            TrainedModel::Logistic { layout, model } => model.score(&layout.to_mil(bag, feature_len)),
        }
    }
}

fn labeled_training_bags<'a>(set: &'a BagSet, split: &Option<BTreeMap<String, SplitSet>>) -> (Vec<&'a Bag>, Vec<u8>) {
    let bags: Vec<&Bag> = set
        .bags
        .iter()
        .filter(|b| b.label.is_some() && in_set(split, &b.taxi_id, SplitSet::Train))
        .collect();
    let labels = bags.iter().map(|b| b.label.unwrap_or(0)).collect();
    (bags, labels)
}

pub fn train_stage(cfg: &PipelineConfig, ws: &Workspace, kind: ModelKind) -> Result<TrainedModel> {
    let bags_path = ws.work("bags.json");
    let set: BagSet = artifact::load(&bags_path, BAGS_KIND)?;
    let split = read_split(ws)?;
    let (bags, labels) = labeled_training_bags(&set, &split);
    let flen = set.params.feature_len();
    let layout = kind.layout();
    let mil: Vec<MilBag> = bags.iter().map(|b| layout.to_mil(b, flen)).collect();
    let trained = match kind {
        ModelKind::Logistic => {
            let opts = LogisticOptions {
                iters: cfg.logistic_iters,
                ..LogisticOptions::default()
            };
            TrainedModel::Logistic {
                layout,
                model: fit_logistic(&mil, &labels, &layout.dims(flen), &opts)?,
            }
        }
        _ => TrainedModel::Boosted {
            layout,
            model: train(&mil, &labels, &layout.component_names(), &cfg.boost_options())?.model,
        },
    };
    let out = ws.model_path(kind);
    artifact::save(&out, MODEL_KIND, &trained)?;
    write_manifest(cfg, ws, &format!("train-{kind}"), &[bags_path, ws.work("split.csv")], &[out])?;
    Ok(trained)
}

/// Scores the test taxis (every bag when no split exists).
pub fn score_stage(cfg: &PipelineConfig, ws: &Workspace, kind: ModelKind) -> Result<Vec<ScoredTaxi>> {
    let model_path = ws.model_path(kind);
    let bags_path = ws.work("bags.json");
    let model: TrainedModel = artifact::load(&model_path, MODEL_KIND)?;
    let set: BagSet = artifact::load(&bags_path, BAGS_KIND)?;
    let split = read_split(ws)?;
    let flen = set.params.feature_len();
    let scored: Vec<ScoredTaxi> = set
        .bags
        .iter()
        .filter(|b| in_set(&split, &b.taxi_id, SplitSet::Test))
        .map(|b| ScoredTaxi {
            taxi_id: b.taxi_id.clone(),
            score: model.score(b, flen),
            label: b.label,
        })
        .collect();
    let out = ws.scores_path(kind);
    let mut w = csv::Writer::from_writer(create(&out)?);
    w.write_record(["taxi_id", "score"])?;
    for s in &scored {
        w.write_record([s.taxi_id.clone(), s.score.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(&out, e))?;
    write_manifest(cfg, ws, &format!("score-{kind}"), &[model_path, bags_path], &[out])?;
    Ok(scored)
}

fn read_scores(path: &Path) -> Result<Vec<(String, f64)>> {
    artifact::require(path)?;
    let mut rdr = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let score = rec.get(1).and_then(|s| s.parse().ok()).ok_or_else(|| Error::Malformed {
            path: path.display().to_string(),
            line: i as u64 + 2,
            reason: "bad score".into(),
        })?;
        out.push((rec[0].to_string(), score));
    }
    Ok(out)
}

/// Metrics of a model's scores against the labels file, which must exist.
pub fn evaluate_stage(cfg: &PipelineConfig, ws: &Workspace, kind: ModelKind) -> Result<Metrics> {
    let scores_path = ws.scores_path(kind);
    artifact::require(&ws.labels())?;
    let labels = labels_map(ws)?.unwrap_or_default();
    let scored: Vec<ScoredTaxi> = read_scores(&scores_path)?
        .into_iter()
        .map(|(id, score)| {
            let label = labels.get(&id).copied();
            ScoredTaxi {
                taxi_id: id,
                score,
                label,
            }
        })
        .collect();
    let metrics = evaluate(&scored)?;
    let metrics_out = ws.metrics_path(kind);
    std::fs::write(&metrics_out, format!("{metrics}\n")).map_err(|e| Error::io(&metrics_out, e))?;
    let ranked_out = ws.work(&format!("ranked_{kind}.csv"));
    write_ranked_csv(create(&ranked_out)?, &rank_suspects(&scored))?;
    let mut outputs = vec![metrics_out.clone(), ranked_out];
    if kind == ModelKind::McMil {
        let primary = ws.work("metrics.txt");
        std::fs::copy(&metrics_out, &primary).map_err(|e| Error::io(&primary, e))?;
        outputs.push(primary);
    }
    write_manifest(cfg, ws, &format!("evaluate-{kind}"), &[scores_path, ws.labels()], &outputs)?;
    Ok(metrics)
}

#[derive(Debug, Clone)]
pub struct PipelineSummary {
    pub ingest: IngestReport,
    pub bags: usize,
    pub metrics: BTreeMap<ModelKind, Metrics>,
}

/// Runs every stage; with `generate`, first writes a synthetic fleet into
/// the data directory.
pub fn run_pipeline(cfg: &PipelineConfig, ws: &Workspace, generate: bool, models: &[ModelKind]) -> Result<PipelineSummary> {
    cfg.validate()?;
    if generate {
        synth(cfg, ws)?;
    }
    let report = ingest(cfg, ws)?;
    extract_stl(cfg, ws)?;
    let labeled = ws.labels().exists();
    if labeled {
        split(cfg, ws)?;
    }
    fit_gmm_stage(cfg, ws)?;
    fit_lda_stage(cfg, ws)?;
    encode(cfg, ws)?;
    let set = features(cfg, ws)?;
    let mut metrics = BTreeMap::new();
    if labeled {
        for &kind in models {
            train_stage(cfg, ws, kind)?;
            score_stage(cfg, ws, kind)?;
            metrics.insert(kind, evaluate_stage(cfg, ws, kind)?);
        }
    }
    Ok(PipelineSummary {
        ingest: report,
        bags: set.bags.len(),
        metrics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ssmsp::MspFeature;

    fn feat(kind: BehaviorKind, day: u32, v: f64) -> MspFeature {
        MspFeature {
            values: vec![v; 2],
            window_start: NaiveDate::from_ymd_opt(2024, 1, 1 + day).unwrap(),
            kind,
            missing: false,
        }
    }

    #[test]
    fn concatenated_layout_zero_fills() {
        let bag = Bag {
            taxi_id: "a".into(),
            label: None,
            stl: vec![feat(BehaviorKind::Stl, 0, 1.0)],
            pu: vec![feat(BehaviorKind::Pu, 0, 2.0), feat(BehaviorKind::Pu, 4, 3.0)],
        };
        let mil = Layout::Concatenated.to_mil(&bag, 2);
        assert_eq!(
            mil.components,
            vec![vec![vec![1.0, 1.0, 2.0, 2.0], vec![0.0, 0.0, 3.0, 3.0]]]
        );
        assert_eq!(Layout::PerBehavior.to_mil(&bag, 2).components[1].len(), 2);
        assert_eq!(Layout::Only(BehaviorKind::Stl).to_mil(&bag, 2).components[0].len(), 1);
    }

    #[test]
    fn model_names_round_trip() {
        for k in ModelKind::ALL {
            assert_eq!(k.to_string().parse::<ModelKind>().unwrap(), k);
        }
        assert!("svm".parse::<ModelKind>().is_err());
    }

    #[test]
    fn subsample_is_seeded_and_ordered() {
        let items: Vec<usize> = (0..100).collect();
        let a = subsample(&items, 10, 3, "x");
        assert_eq!(a, subsample(&items, 10, 3, "x"));
        assert!(a.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(subsample(&items[..5], 10, 3, "x"), items[..5].to_vec());
    }
}
