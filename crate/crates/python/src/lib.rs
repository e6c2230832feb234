//! Python bindings: configuration, pipeline stages, and the numerical
//! building blocks (mixture model, Fisher vectors, LDA, metrics).

use std::collections::BTreeMap;
use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;

use idsdetect::config::PipelineConfig;
use idsdetect::eval::{self, ScoredTaxi};
use idsdetect::fisher::fisher_vector;
use idsdetect::gmm::{fit_gmm, EmOptions, GmmModel};
use idsdetect::lda::{fit_lda, infer_topics, LdaModel, LdaParams};
use idsdetect::mcmil;
use idsdetect::pipeline::{self, ModelKind, Workspace};
use idsdetect::ssmsp;
use idsdetect::Error;

create_exception!(idsdetect, IdsError, PyException);
create_exception!(idsdetect, MissingArtifactError, IdsError);
create_exception!(idsdetect, ConfigError, IdsError);

fn to_py(e: Error) -> PyErr {
    let msg = e.to_string();
    match e {
        Error::MissingArtifact(_) => MissingArtifactError::new_err(msg),
        Error::Config { .. } => ConfigError::new_err(msg),
        _ => IdsError::new_err(msg),
    }
}

fn model_kind(name: &str) -> PyResult<ModelKind> {
    name.parse().map_err(to_py)
}

/// Pipeline configuration; every key has a default.
#[pyclass(name = "Config", from_py_object)]
#[derive(Clone)]
struct PyConfig {
    inner: PipelineConfig,
}

#[pymethods]
impl PyConfig {
    #[new]
    #[pyo3(signature = (**overrides))]
    fn new(overrides: Option<BTreeMap<String, Bound<'_, PyAny>>>) -> PyResult<Self> {
        let mut inner = PipelineConfig::default();
        for (k, v) in overrides.unwrap_or_default() {
            inner.set(&k, &v.str()?.to_cow()?).map_err(to_py)?;
        }
        inner.validate().map_err(to_py)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        PipelineConfig::load(&path).map(|inner| Self { inner }).map_err(to_py)
    }

    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        PipelineConfig::parse_str(text).map(|inner| Self { inner }).map_err(to_py)
    }

    #[staticmethod]
    fn keys() -> Vec<&'static str> {
        PipelineConfig::KEYS.to_vec()
    }

    /// Sets one key and revalidates; the config is unchanged on error.
    fn set(&mut self, key: &str, value: &str) -> PyResult<()> {
        let mut next = self.inner.clone();
        next.set(key, value).map_err(to_py)?;
        next.validate().map_err(to_py)?;
        self.inner = next;
        Ok(())
    }

    fn to_text(&self) -> String {
        self.inner.to_text()
    }

    fn hash(&self) -> String {
        self.inner.hash()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    fn __repr__(&self) -> String {
        format!("Config(hash={})", &self.inner.hash()[..12])
    }
}

#[pyclass(name = "Metrics", frozen, get_all)]
struct PyMetrics {
    auc: f64,
    ap: f64,
    n_pos: usize,
    n_neg: usize,
}

#[pymethods]
impl PyMetrics {
    fn __repr__(&self) -> String {
        format!("Metrics(auc={:.6}, ap={:.6}, n_pos={}, n_neg={})", self.auc, self.ap, self.n_pos, self.n_neg)
    }
}

impl From<eval::Metrics> for PyMetrics {
    fn from(m: eval::Metrics) -> Self {
        Self {
            auc: m.auc,
            ap: m.ap,
            n_pos: m.n_pos,
            n_neg: m.n_neg,
        }
    }
}

/// Runs every stage and returns the metrics of each trained model.
#[pyfunction]
#[pyo3(signature = (config, data_dir, work_dir, models = None, generate = true))]
fn run_pipeline(
    py: Python<'_>,
    config: &PyConfig,
    data_dir: PathBuf,
    work_dir: PathBuf,
    models: Option<Vec<String>>,
    generate: bool,
) -> PyResult<BTreeMap<String, PyMetrics>> {
    let kinds = match models {
        Some(names) => names.iter().map(|n| model_kind(n)).collect::<PyResult<Vec<_>>>()?,
        None => ModelKind::ALL.to_vec(),
    };
    let ws = Workspace::new(data_dir, work_dir);
    let cfg = &config.inner;
    let summary = py
        .detach(|| pipeline::run_pipeline(cfg, &ws, generate, &kinds))
        .map_err(to_py)?;
    Ok(summary.metrics.into_iter().map(|(k, m)| (k.to_string(), m.into())).collect())
}

/// Runs one named stage, as the command-line subcommand of the same name
/// would. Returns a short summary string.
#[pyfunction]
#[pyo3(signature = (stage, config, data_dir, work_dir, model = "mcmil"))]
fn run_stage(
    py: Python<'_>,
    stage: &str,
    config: &PyConfig,
    data_dir: PathBuf,
    work_dir: PathBuf,
    model: &str,
) -> PyResult<String> {
    let kind = model_kind(model)?;
    let ws = Workspace::new(data_dir, work_dir);
    let cfg = &config.inner;
    let out = py.detach(|| -> idsdetect::Result<String> {
        Ok(match stage {
            "synth" => format!("taxis={}", pipeline::synth(cfg, &ws)?.len()),
            "ingest" => pipeline::ingest(cfg, &ws)?.to_string(),
            "extract-stl" => format!("episodes={}", pipeline::extract_stl(cfg, &ws)?),
            "split" => format!("taxis={}", pipeline::split(cfg, &ws)?.len()),
            "fit-gmm" => format!("components={}", pipeline::fit_gmm_stage(cfg, &ws)?.k),
            "fit-lda" => format!("words={}", pipeline::fit_lda_stage(cfg, &ws)?.0.len()),
            "encode" => format!("taxi_days={}", pipeline::encode(cfg, &ws)?.len()),
            "features" => format!("bags={}", pipeline::features(cfg, &ws)?.bags.len()),
            "train" => {
                pipeline::train_stage(cfg, &ws, kind)?;
                ws.model_path(kind).display().to_string()
            }
            "score" => format!("scored={}", pipeline::score_stage(cfg, &ws, kind)?.len()),
            "evaluate" => pipeline::evaluate_stage(cfg, &ws, kind)?.to_string(),
            other => return Err(Error::InvalidArgument(format!("unknown stage `{other}`"))),
        })
    });
    out.map_err(to_py)
}

/// Diagonal-covariance Gaussian mixture.
#[pyclass(name = "GaussianMixture", frozen)]
struct PyGmm {
    model: GmmModel,
    #[pyo3(get)]
    log_likelihoods: Vec<f64>,
}

#[pymethods]
impl PyGmm {
    #[staticmethod]
    #[pyo3(signature = (data, k, seed = 0, max_iters = 100, tol = 1e-6, var_floor = 1e-3))]
    fn fit(data: Vec<Vec<f64>>, k: usize, seed: u64, max_iters: usize, tol: f64, var_floor: f64) -> PyResult<Self> {
        let opts = EmOptions {
            max_iters,
            tol,
            var_floor,
        };
        let fit = fit_gmm(&data, k, seed, &opts).map_err(to_py)?;
        Ok(Self {
            model: fit.model,
            log_likelihoods: fit.log_likelihoods,
        })
    }

    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.model.weights.clone()
    }

    #[getter]
    fn means(&self) -> Vec<Vec<f64>> {
        self.model.means.clone()
    }

    #[getter]
    fn variances(&self) -> Vec<Vec<f64>> {
        self.model.vars.clone()
    }

    fn log_likelihood(&self, x: Vec<f64>) -> PyResult<f64> {
        if x.len() != self.model.dim() {
            return Err(IdsError::new_err(format!("expected {} values", self.model.dim())));
        }
        Ok(self.model.log_likelihood(&x))
    }

    /// Normalized Fisher vector of a bucket of points; `None` when empty.
    fn fisher_vector(&self, bucket: Vec<Vec<f64>>) -> PyResult<Option<Vec<f64>>> {
        if bucket.iter().any(|x| x.len() != self.model.dim()) {
            return Err(IdsError::new_err(format!("expected points of {} values", self.model.dim())));
        }
        Ok(fisher_vector(&self.model, &bucket).map(|f| f.values))
    }
}

/// Topic model over word-id documents.
#[pyclass(name = "TopicModel", frozen)]
struct PyLda {
    model: LdaModel,
}

#[pymethods]
impl PyLda {
    #[staticmethod]
    #[pyo3(signature = (docs, n_words, topics, seed = 0, alpha = None, beta = 0.01, iters = 500))]
    #[allow(clippy::too_many_arguments)]
    fn fit(
        py: Python<'_>,
        docs: Vec<Vec<usize>>,
        n_words: usize,
        topics: usize,
        seed: u64,
        alpha: Option<f64>,
        beta: f64,
        iters: usize,
    ) -> PyResult<Self> {
        let mut params = LdaParams::with_topics(topics, seed);
        params.alpha = alpha.unwrap_or(params.alpha);
        params.beta = beta;
        params.iters = iters;
        let fit = py.detach(|| fit_lda(&docs, n_words, &params)).map_err(to_py)?;
        Ok(Self { model: fit.model })
    }

    #[getter]
    fn topic_word(&self) -> Vec<Vec<f64>> {
        self.model.topic_word_probs()
    }

    /// Topic proportions of an unseen document.
    #[pyo3(signature = (doc, iters = 50, seed = 0))]
    fn infer(&self, doc: Vec<usize>, iters: usize, seed: u64) -> PyResult<Vec<f64>> {
        infer_topics(&self.model, &doc, iters, seed).map(|t| t.values).map_err(to_py)
    }
}

fn scored(scores: Vec<f64>, labels: Vec<u8>) -> PyResult<Vec<ScoredTaxi>> {
    if scores.len() != labels.len() {
        return Err(IdsError::new_err("scores and labels differ in length"));
    }
    Ok(scores
        .into_iter()
        .zip(labels)
        .enumerate()
        .map(|(i, (score, label))| ScoredTaxi {
            taxi_id: format!("{i:012}"),
            score,
            label: Some(label),
        })
        .collect())
}

#[pyfunction]
fn roc_auc(scores: Vec<f64>, labels: Vec<u8>) -> PyResult<f64> {
    eval::roc_auc(&scored(scores, labels)?).map_err(to_py)
}

/// Average precision; tied scores rank by input position.
#[pyfunction]
fn average_precision(scores: Vec<f64>, labels: Vec<u8>) -> PyResult<f64> {
    eval::average_precision(&scored(scores, labels)?).map_err(to_py)
}

#[pyfunction]
fn noise_or(probs: Vec<f64>) -> f64 {
    mcmil::noise_or(probs)
}

#[pyfunction]
fn cosine_distance(a: Vec<f64>, b: Vec<f64>) -> PyResult<Option<f64>> {
    if a.len() != b.len() {
        return Err(IdsError::new_err("vectors differ in length"));
    }
    Ok(ssmsp::cosine_distance(&a, &b))
}

#[pymodule]
#[pyo3(name = "idsdetect")]
fn init(m: &Bound<'_, PyModule>) -> PyResult<()> {
    let py = m.py();
    m.add("IdsError", py.get_type::<IdsError>())?;
    m.add("MissingArtifactError", py.get_type::<MissingArtifactError>())?;
    m.add("ConfigError", py.get_type::<ConfigError>())?;
    m.add_class::<PyConfig>()?;
    m.add_class::<PyMetrics>()?;
    m.add_class::<PyGmm>()?;
    m.add_class::<PyLda>()?;
    m.add_function(wrap_pyfunction!(run_pipeline, m)?)?;
    m.add_function(wrap_pyfunction!(run_stage, m)?)?;
    m.add_function(wrap_pyfunction!(roc_auc, m)?)?;
    m.add_function(wrap_pyfunction!(average_precision, m)?)?;
    m.add_function(wrap_pyfunction!(noise_or, m)?)?;
    m.add_function(wrap_pyfunction!(cosine_distance, m)?)?;
    Ok(())
}
