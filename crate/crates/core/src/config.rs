//! Flat `key = value` pipeline configuration. Unknown keys and out-of-range
//! values are rejected with the offending key named.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::gmm::EmOptions;
use crate::lda::LdaParams;
use crate::mcmil::{BoostOptions, WeightRule};
use crate::ssmsp::WindowParams;
use crate::stl::SleepParams;
use crate::synth::SynthConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub seed: u64,
    pub split_seed: u64,
    pub test_fraction: f64,
    pub utc_offset_hours: f64,
    pub stationary_radius_m: f64,
    pub min_sleep_minutes: f64,
    pub moving_threshold_m: f64,
    pub gmm_components: usize,
    pub em_max_iters: usize,
    pub em_tol: f64,
    pub var_floor: f64,
    pub max_gmm_points: usize,
    pub vocab_words: usize,
    pub max_vocab_points: usize,
    pub pu_delta_m: f64,
    pub lda_topics: usize,
    /// `None` means `50 / lda_topics`.
    pub lda_alpha: Option<f64>,
    pub lda_beta: f64,
    pub lda_iters: usize,
    pub max_lda_docs: usize,
    pub infer_iters: usize,
    pub window_days: u32,
    pub step_days: u32,
    pub range_days: u32,
    pub msp_scales: Vec<u32>,
    pub boost_rounds: usize,
    pub max_depth: usize,
    pub alpha_max: f64,
    pub weight_rule: WeightRule,
    pub logistic_iters: usize,
    pub synth: SynthConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let sleep = SleepParams::default();
        let em = EmOptions::default();
        let win = WindowParams::default();
        let boost = BoostOptions::default();
        Self {
            seed: 7,
            split_seed: 11,
            test_fraction: 0.3,
            utc_offset_hours: 8.0,
            stationary_radius_m: sleep.stationary_radius_m,
            min_sleep_minutes: sleep.min_sleep_minutes,
            moving_threshold_m: 100.0,
            gmm_components: 8,
            em_max_iters: em.max_iters,
            em_tol: em.tol,
            var_floor: em.var_floor,
            max_gmm_points: 50_000,
            vocab_words: 50,
            max_vocab_points: 50_000,
            pu_delta_m: 100.0,
            lda_topics: 60,
            lda_alpha: None,
            lda_beta: 0.01,
            lda_iters: 500,
            max_lda_docs: 4_000,
            infer_iters: 100,
            window_days: win.window_days,
            step_days: win.step_days,
            range_days: win.range_days,
            msp_scales: win.scales,
            boost_rounds: boost.rounds,
            max_depth: boost.max_depth,
            alpha_max: boost.alpha_max,
            weight_rule: boost.weight_rule,
            logistic_iters: 2_000,
            synth: SynthConfig::default(),
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::config(key, format!("cannot parse `{value}`")))
}

/// Config key of a synthetic-fleet field.
fn synth_key(field: &str) -> String {
    match field {
        "n_taxis" => "synth_taxis".into(),
        "n_days" => "synth_days".into(),
        f => format!("synth_{f}"),
    }
}

fn positive(key: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::config(key, format!("must be positive, got {v}")))
    }
}

fn at_least(key: &str, v: usize, min: usize) -> Result<()> {
    if v >= min {
        Ok(())
    } else {
        Err(Error::config(key, format!("must be at least {min}, got {v}")))
    }
}

impl PipelineConfig {
    pub const KEYS: &'static [&'static str] = &[
        "seed",
        "split_seed",
        "test_fraction",
        "utc_offset_hours",
        "stationary_radius_m",
        "min_sleep_minutes",
        "moving_threshold_m",
        "gmm_components",
        "em_max_iters",
        "em_tol",
        "var_floor",
        "max_gmm_points",
        "vocab_words",
        "max_vocab_points",
        "pu_delta_m",
        "lda_topics",
        "lda_alpha",
        "lda_beta",
        "lda_iters",
        "max_lda_docs",
        "infer_iters",
        "window_days",
        "step_days",
        "range_days",
        "msp_scales",
        "boost_rounds",
        "max_depth",
        "alpha_max",
        "weight_rule",
        "logistic_iters",
        "synth_taxis",
        "synth_days",
        "synth_ids_fraction",
        "synth_substitution_days",
        "synth_gps_interval_s",
        "synth_low_precision_fraction",
        "synth_min_home_separation_m",
        "synth_disjoint_hotspots",
        "synth_sleep_start_jitter_min",
        "synth_sleep_dur_jitter_min",
        "synth_start_date",
    ];

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "seed" => self.seed = parse(key, v)?,
            "split_seed" => self.split_seed = parse(key, v)?,
            "test_fraction" => self.test_fraction = parse(key, v)?,
            "utc_offset_hours" => self.utc_offset_hours = parse(key, v)?,
            "stationary_radius_m" => self.stationary_radius_m = parse(key, v)?,
            "min_sleep_minutes" => self.min_sleep_minutes = parse(key, v)?,
            "moving_threshold_m" => self.moving_threshold_m = parse(key, v)?,
            "gmm_components" => self.gmm_components = parse(key, v)?,
            "em_max_iters" => self.em_max_iters = parse(key, v)?,
            "em_tol" => self.em_tol = parse(key, v)?,
            "var_floor" => self.var_floor = parse(key, v)?,
            "max_gmm_points" => self.max_gmm_points = parse(key, v)?,
            "vocab_words" => self.vocab_words = parse(key, v)?,
            "max_vocab_points" => self.max_vocab_points = parse(key, v)?,
            "pu_delta_m" => self.pu_delta_m = parse(key, v)?,
            "lda_topics" => self.lda_topics = parse(key, v)?,
            "lda_alpha" => {
                self.lda_alpha = match v {
                    "auto" => None,
                    _ => Some(parse(key, v)?),
                }
            }
            "lda_beta" => self.lda_beta = parse(key, v)?,
            "lda_iters" => self.lda_iters = parse(key, v)?,
            "max_lda_docs" => self.max_lda_docs = parse(key, v)?,
            "infer_iters" => self.infer_iters = parse(key, v)?,
            "window_days" => self.window_days = parse(key, v)?,
            "step_days" => self.step_days = parse(key, v)?,
            "range_days" => self.range_days = parse(key, v)?,
            "msp_scales" => {
                self.msp_scales = v
                    .split(',')
                    .map(|s| parse(key, s.trim()))
                    .collect::<Result<Vec<u32>>>()?
            }
            "boost_rounds" => self.boost_rounds = parse(key, v)?,
            "max_depth" => self.max_depth = parse(key, v)?,
            "alpha_max" => self.alpha_max = parse(key, v)?,
            "weight_rule" => {
                self.weight_rule = match v {
                    "exact" => WeightRule::Exact,
                    "simplified" => WeightRule::Simplified,
                    _ => return Err(Error::config(key, format!("expected exact or simplified, got `{v}`"))),
                }
            }
            "logistic_iters" => self.logistic_iters = parse(key, v)?,
            "synth_taxis" => self.synth.n_taxis = parse(key, v)?,
            "synth_days" => self.synth.n_days = parse(key, v)?,
            "synth_ids_fraction" => self.synth.ids_fraction = parse(key, v)?,
            "synth_substitution_days" => self.synth.substitution_days = parse(key, v)?,
            "synth_gps_interval_s" => self.synth.gps_interval_s = parse(key, v)?,
            "synth_low_precision_fraction" => self.synth.low_precision_fraction = parse(key, v)?,
            "synth_min_home_separation_m" => self.synth.min_home_separation_m = parse(key, v)?,
            "synth_disjoint_hotspots" => self.synth.disjoint_hotspots = parse(key, v)?,
            "synth_sleep_start_jitter_min" => self.synth.sleep_start_jitter_min = parse(key, v)?,
            "synth_sleep_dur_jitter_min" => self.synth.sleep_dur_jitter_min = parse(key, v)?,
            "synth_start_date" => self.synth.start_date = parse(key, v)?,
            _ => return Err(Error::config(key, "unknown key")),
        }
        Ok(())
    }

    /// Parses a config document: `key = value` lines, `#` comments, blank lines.
    pub fn parse_str(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::config(line, format!("line {} is not `key = value`", i + 1)));
            };
            cfg.set(k.trim(), v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse_str(&crate::artifact::read_required(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::config("test_fraction", "must lie in (0, 1)"));
        }
        if !(-14.0..=14.0).contains(&self.utc_offset_hours) {
            return Err(Error::config("utc_offset_hours", "must lie in [-14, 14]"));
        }
        positive("stationary_radius_m", self.stationary_radius_m)?;
        positive("min_sleep_minutes", self.min_sleep_minutes)?;
        positive("moving_threshold_m", self.moving_threshold_m)?;
        at_least("gmm_components", self.gmm_components, 1)?;
        at_least("em_max_iters", self.em_max_iters, 1)?;
        positive("em_tol", self.em_tol)?;
        positive("var_floor", self.var_floor)?;
        at_least("max_gmm_points", self.max_gmm_points, 10 * self.gmm_components)?;
        at_least("vocab_words", self.vocab_words, 1)?;
        at_least("max_vocab_points", self.max_vocab_points, 10 * self.vocab_words)?;
        positive("pu_delta_m", self.pu_delta_m)?;
        at_least("lda_topics", self.lda_topics, 1)?;
        if let Some(a) = self.lda_alpha {
            positive("lda_alpha", a)?;
        }
        positive("lda_beta", self.lda_beta)?;
        at_least("lda_iters", self.lda_iters, 1)?;
        at_least("max_lda_docs", self.max_lda_docs, 1)?;
        at_least("infer_iters", self.infer_iters, 1)?;
        self.window_params().validate()?;
        at_least("max_depth", self.max_depth, 1)?;
        positive("alpha_max", self.alpha_max)?;
        self.synth.validate().map_err(|e| match e {
            Error::Config { key, reason } => Error::config(synth_key(&key), reason),
            other => other,
        })
    }

    pub fn utc_offset_s(&self) -> i64 {
        (self.utc_offset_hours * 3600.0).round() as i64
    }

    pub fn sleep_params(&self) -> SleepParams {
        SleepParams {
            stationary_radius_m: self.stationary_radius_m,
            min_sleep_minutes: self.min_sleep_minutes,
        }
    }

    pub fn em_options(&self) -> EmOptions {
        EmOptions {
            max_iters: self.em_max_iters,
            tol: self.em_tol,
            var_floor: self.var_floor,
        }
    }

    pub fn lda_params(&self) -> LdaParams {
        let mut p = LdaParams::with_topics(self.lda_topics, crate::rng::derive_seed(self.seed, &["lda"]));
        if let Some(a) = self.lda_alpha {
            p.alpha = a;
        }
        p.beta = self.lda_beta;
        p.iters = self.lda_iters;
        p
    }

    pub fn window_params(&self) -> WindowParams {
        WindowParams {
            window_days: self.window_days,
            step_days: self.step_days,
            range_days: self.range_days,
            scales: self.msp_scales.clone(),
        }
    }

    pub fn boost_options(&self) -> BoostOptions {
        BoostOptions {
            rounds: self.boost_rounds,
            max_depth: self.max_depth,
            alpha_max: self.alpha_max,
            seed: self.seed,
            weight_rule: self.weight_rule,
        }
    }

    pub fn synth_config(&self) -> SynthConfig {
        SynthConfig {
            seed: self.seed,
            utc_offset_s: self.utc_offset_s(),
            ..self.synth.clone()
        }
    }

    /// Canonical `key = value` rendering of every setting, in key order.
    pub fn to_text(&self) -> String {
        let mut m: BTreeMap<&str, String> = BTreeMap::new();
        m.insert("seed", self.seed.to_string());
        m.insert("split_seed", self.split_seed.to_string());
        m.insert("test_fraction", self.test_fraction.to_string());
        m.insert("utc_offset_hours", self.utc_offset_hours.to_string());
        m.insert("stationary_radius_m", self.stationary_radius_m.to_string());
        m.insert("min_sleep_minutes", self.min_sleep_minutes.to_string());
        m.insert("moving_threshold_m", self.moving_threshold_m.to_string());
        m.insert("gmm_components", self.gmm_components.to_string());
        m.insert("em_max_iters", self.em_max_iters.to_string());
        m.insert("em_tol", self.em_tol.to_string());
        m.insert("var_floor", self.var_floor.to_string());
        m.insert("max_gmm_points", self.max_gmm_points.to_string());
        m.insert("vocab_words", self.vocab_words.to_string());
        m.insert("max_vocab_points", self.max_vocab_points.to_string());
        m.insert("pu_delta_m", self.pu_delta_m.to_string());
        m.insert("lda_topics", self.lda_topics.to_string());
        m.insert("lda_alpha", self.lda_alpha.map_or("auto".into(), |a| a.to_string()));
        m.insert("lda_beta", self.lda_beta.to_string());
        m.insert("lda_iters", self.lda_iters.to_string());
        m.insert("max_lda_docs", self.max_lda_docs.to_string());
        m.insert("infer_iters", self.infer_iters.to_string());
        m.insert("window_days", self.window_days.to_string());
        m.insert("step_days", self.step_days.to_string());
        m.insert("range_days", self.range_days.to_string());
        m.insert(
            "msp_scales",
            self.msp_scales.iter().map(u32::to_string).collect::<Vec<_>>().join(","),
        );
        m.insert("boost_rounds", self.boost_rounds.to_string());
        m.insert("max_depth", self.max_depth.to_string());
        m.insert("alpha_max", self.alpha_max.to_string());
        m.insert(
            "weight_rule",
            match self.weight_rule {
                WeightRule::Exact => "exact".into(),
                WeightRule::Simplified => "simplified".into(),
            },
        );
        m.insert("logistic_iters", self.logistic_iters.to_string());
        m.insert("synth_taxis", self.synth.n_taxis.to_string());
        m.insert("synth_days", self.synth.n_days.to_string());
        m.insert("synth_ids_fraction", self.synth.ids_fraction.to_string());
        m.insert("synth_substitution_days", self.synth.substitution_days.to_string());
        m.insert("synth_gps_interval_s", self.synth.gps_interval_s.to_string());
        m.insert("synth_low_precision_fraction", self.synth.low_precision_fraction.to_string());
        m.insert("synth_min_home_separation_m", self.synth.min_home_separation_m.to_string());
        m.insert("synth_disjoint_hotspots", self.synth.disjoint_hotspots.to_string());
        m.insert("synth_sleep_start_jitter_min", self.synth.sleep_start_jitter_min.to_string());
        m.insert("synth_sleep_dur_jitter_min", self.synth.sleep_dur_jitter_min.to_string());
        m.insert("synth_start_date", self.synth.start_date.to_string());
        let mut out = String::new();
        for (k, v) in m {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_text().as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let cfg = PipelineConfig::default();
        cfg.validate().unwrap();
        let back = PipelineConfig::parse_str(&cfg.to_text()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
        let text = cfg.to_text();
        let keys: Vec<&str> = text.lines().map(|l| l.split(" = ").next().unwrap()).collect();
        let mut known = PipelineConfig::KEYS.to_vec();
        known.sort_unstable();
        assert_eq!(keys, known);
    }

    #[test]
    fn comments_and_overrides() {
        let cfg = PipelineConfig::parse_str("# demo\nlda_topics = 20 # fewer\n\nmsp_scales = 1, 2\n").unwrap();
        assert_eq!(cfg.lda_topics, 20);
        assert_eq!(cfg.msp_scales, vec![1, 2]);
        assert_ne!(cfg.hash(), PipelineConfig::default().hash());
    }

    #[test]
    fn bad_keys_are_named() {
        let err = PipelineConfig::parse_str("no_such_key = 1").unwrap_err();
        assert!(matches!(err, Error::Config { ref key, .. } if key == "no_such_key"));
        let err = PipelineConfig::parse_str("gmm_components = lots").unwrap_err();
        assert!(matches!(err, Error::Config { ref key, .. } if key == "gmm_components"));
        let err = PipelineConfig::parse_str("test_fraction = 1.5").unwrap_err();
        assert!(matches!(err, Error::Config { ref key, .. } if key == "test_fraction"));
        let err = PipelineConfig::parse_str("msp_scales = 1,32").unwrap_err();
        assert!(matches!(err, Error::Config { ref key, .. } if key == "msp_scales"));
    }
}
