//! Python bindings: the main types (vocabulary, RBM, siamese autoencoder)
//! and operations (activations, AUC, choosing, synthetic data, pipeline
//! stages) exposed as the `bimodal_py` extension module. Vectors cross the
//! boundary as plain lists.

use std::path::Path;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use bimodal_core::numeric::{Matrix, Rng, Vector};
use bimodal_core::pipeline::{self, PipelineConfig, Strategy, SynthParams};
use bimodal_core::rbm;
use bimodal_core::siamese;
use bimodal_core::text;
use bimodal_core::vision;

fn py_err(e: bimodal_core::Error) -> PyErr {
    PyValueError::new_err(format!("[{}] {e}", e.category()))
}

fn to_matrix(rows: Vec<Vec<f64>>, what: &str) -> PyResult<Matrix> {
    if rows.is_empty() {
        return Err(PyValueError::new_err(format!("{what}: no rows")));
    }
    let cols = rows[0].len();
    if rows.iter().any(|r| r.len() != cols) {
        return Err(PyValueError::new_err(format!("{what}: ragged rows")));
    }
    let n = rows.len();
    Matrix::from_shape_vec((n, cols), rows.into_iter().flatten().collect())
        .map_err(|e| PyValueError::new_err(e.to_string()))
}

#[pyfunction]
fn sigmoid(x: f64) -> f64 {
    bimodal_core::numeric::sigmoid(x)
}

#[pyfunction]
fn l1_distance(a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
    bimodal_core::numeric::l1_distance(&a, &b).map_err(py_err)
}

#[pyfunction]
fn softmax_rows(rows: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
    let m = to_matrix(rows, "softmax_rows")?;
    let out = bimodal_core::numeric::softmax_rows(&m);
    Ok(out.rows().into_iter().map(|r| r.to_vec()).collect())
}

#[pyfunction]
fn auc(scored: Vec<(f64, bool)>) -> PyResult<f64> {
    bimodal_core::chooser::auc(&scored).map_err(py_err)
}

#[pyfunction]
fn pair_probability(s1: f64, s2: f64) -> PyResult<(f64, bool)> {
    bimodal_core::chooser::pair_probability(s1, s2).map_err(py_err)
}

#[pyfunction]
fn derange(n: usize, seed: u64) -> PyResult<Vec<usize>> {
    siamese::derange_pairs(n, &mut Rng::from_seed(seed)).map_err(py_err)
}

/// Level-1 image features from raw RGB bytes. Returns the values and the
/// (name, offset, length) segment layout.
#[pyfunction]
#[pyo3(signature = (width, height, rgb, organizer=None))]
fn extract_image_features(
    width: usize,
    height: usize,
    rgb: Vec<u8>,
    organizer: Option<Vec<f64>>,
) -> PyResult<(Vec<f64>, Vec<(String, usize, usize)>)> {
    let img = vision::RasterImage::from_rgb8(width, height, rgb).map_err(py_err)?;
    let fv = vision::extract_image_features(&img, organizer.as_deref()).map_err(py_err)?;
    let layout = fv
        .layout
        .iter()
        .map(|s| (s.name.clone(), s.offset, s.len))
        .collect();
    Ok((fv.values, layout))
}

#[pyclass(name = "Vocabulary")]
struct PyVocabulary {
    inner: text::Vocabulary,
}

#[pymethods]
impl PyVocabulary {
    /// Builds the dictionary of the most frequent normalized tokens.
    #[staticmethod]
    fn build(corpus: Vec<Vec<String>>, size: usize) -> PyResult<Self> {
        Ok(PyVocabulary {
            inner: text::Vocabulary::build(&corpus, size).map_err(py_err)?,
        })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(PyVocabulary {
            inner: text::Vocabulary::load(Path::new(path)).map_err(py_err)?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(Path::new(path)).map_err(py_err)
    }

    fn words(&self) -> Vec<String> {
        self.inner.words().to_vec()
    }

    /// Binary bag-of-words bits for a tag list.
    fn encode(&self, tags: Vec<String>) -> PyResult<Vec<u8>> {
        Ok(text::encode_bow(&tags, &self.inner)
            .map_err(py_err)?
            .bits()
            .to_vec())
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

fn parse_variant(variant: &str) -> PyResult<rbm::RbmVariant> {
    match variant {
        "bernoulli" => Ok(rbm::RbmVariant::Bernoulli),
        "gaussian" => Ok(rbm::RbmVariant::Gaussian),
        "replicated_softmax" => Ok(rbm::RbmVariant::ReplicatedSoftmax),
        other => Err(PyValueError::new_err(format!(
            "unknown variant '{other}'"
        ))),
    }
}

#[pyclass(name = "Rbm")]
struct PyRbm {
    inner: rbm::RbmParams,
}

#[pymethods]
impl PyRbm {
    #[new]
    #[pyo3(signature = (variant, n_visible, n_hidden, seed=0))]
    fn new(variant: &str, n_visible: usize, n_hidden: usize, seed: u64) -> PyResult<Self> {
        let mut rng = Rng::from_seed(seed);
        Ok(PyRbm {
            inner: rbm::RbmParams::init(parse_variant(variant)?, n_visible, n_hidden, &mut rng),
        })
    }

    #[getter]
    fn n_visible(&self) -> usize {
        self.inner.n_visible()
    }

    #[getter]
    fn n_hidden(&self) -> usize {
        self.inner.n_hidden()
    }

    #[getter]
    fn variant(&self) -> &'static str {
        self.inner.variant.name()
    }

    #[pyo3(signature = (v, h, m_words=None))]
    fn energy(&self, v: Vec<f64>, h: Vec<f64>, m_words: Option<usize>) -> PyResult<f64> {
        rbm::energy(
            &self.inner,
            &Vector::from_vec(v),
            &Vector::from_vec(h),
            m_words,
        )
        .map_err(py_err)
    }

    #[pyo3(signature = (v, m_words=None))]
    fn hidden_activation(&self, v: Vec<f64>, m_words: Option<usize>) -> PyResult<Vec<f64>> {
        Ok(rbm::hidden_activation(&self.inner, &Vector::from_vec(v), m_words)
            .map_err(py_err)?
            .to_vec())
    }

    /// Expected visible vector given a binary hidden state.
    #[pyo3(signature = (h, m_words=None))]
    fn visible_mean(&self, h: Vec<f64>, m_words: Option<usize>) -> PyResult<Vec<f64>> {
        Ok(
            rbm::visible_activation(&self.inner, &Vector::from_vec(h), m_words)
                .map_err(py_err)?
                .mean()
                .to_vec(),
        )
    }

    /// CD-k training; returns the per-epoch reconstruction error.
    #[pyo3(signature = (data, epochs=10, epsilon=None, batch_size=64, gibbs_steps=1, seed=0))]
    fn train(
        &mut self,
        data: Vec<Vec<f64>>,
        epochs: usize,
        epsilon: Option<f64>,
        batch_size: usize,
        gibbs_steps: usize,
        seed: u64,
    ) -> PyResult<Vec<f64>> {
        let matrix = to_matrix(data, "train data")?;
        let mut cfg = rbm::CdConfig::for_variant(self.inner.variant);
        cfg.epochs = epochs;
        cfg.batch_size = batch_size;
        cfg.gibbs_steps = gibbs_steps;
        cfg.seed = seed;
        if let Some(eps) = epsilon {
            cfg.epsilon = eps;
        }
        let mut rng = Rng::from_seed(seed);
        rbm::train_rbm(&mut self.inner, &matrix, &cfg, &mut rng).map_err(py_err)
    }

    fn save(&self, path: &str) -> PyResult<()> {
        rbm::save_rbm(Path::new(path), &self.inner).map_err(py_err)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(PyRbm {
            inner: rbm::load_rbm(Path::new(path)).map_err(py_err)?,
        })
    }
}

#[pyclass(name = "Siamese")]
struct PySiamese {
    inner: siamese::SiameseParams,
}

#[pymethods]
impl PySiamese {
    #[new]
    #[pyo3(signature = (input_dim, code_dim, seed=0))]
    fn new(input_dim: usize, code_dim: usize, seed: u64) -> Self {
        let mut rng = Rng::from_seed(seed);
        PySiamese {
            inner: siamese::SiameseParams::init(input_dim, code_dim, &mut rng),
        }
    }

    #[getter]
    fn input_dim(&self) -> usize {
        self.inner.input_dim()
    }

    #[getter]
    fn code_dim(&self) -> usize {
        self.inner.code_dim()
    }

    fn encode_image(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(self
            .inner
            .image_net
            .encode(&Vector::from_vec(x))
            .map_err(py_err)?
            .to_vec())
    }

    fn encode_text(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(self
            .inner
            .text_net
            .encode(&Vector::from_vec(x))
            .map_err(py_err)?
            .to_vec())
    }

    /// Code-space L1 distance C between an image input and a text input.
    fn compatibility(&self, p: Vec<f64>, q: Vec<f64>) -> PyResult<f64> {
        let cf = self.inner.image_net.encode(&Vector::from_vec(p)).map_err(py_err)?;
        let cg = self.inner.text_net.encode(&Vector::from_vec(q)).map_err(py_err)?;
        siamese::compatibility(&cf, &cg).map_err(py_err)
    }

    /// The chooser's score: squared compatibility C^2.
    fn dissimilarity(&self, p: Vec<f64>, q: Vec<f64>) -> PyResult<f64> {
        bimodal_core::chooser::pair_dissimilarity(&self.inner, &Vector::from_vec(p), &Vector::from_vec(q))
            .map_err(py_err)
    }

    /// Loss components (image, text, compat, total) for one pair.
    #[pyo3(signature = (p, q, matched, alpha=0.5, lam=0.2))]
    fn loss(
        &self,
        p: Vec<f64>,
        q: Vec<f64>,
        matched: bool,
        alpha: f64,
        lam: f64,
    ) -> PyResult<(f64, f64, f64, f64)> {
        let sample = siamese::PairedSample {
            p: Vector::from_vec(p),
            q: Vector::from_vec(q),
            indicator: matched,
        };
        let cfg = siamese::LossConfig {
            alpha,
            lambda: lam,
            sparsity: None,
            seed: 0,
        };
        let l = siamese::loss(&self.inner, &sample, &cfg).map_err(py_err)?;
        Ok((l.image, l.text, l.compat, l.total))
    }

    /// Trains on matched pairs with per-epoch deranged negatives. `lam=None`
    /// resolves lambda from the upper bound of C on the training data.
    /// Returns the per-epoch mean total loss.
    #[pyo3(signature = (pairs, epochs=50, learning_rate=0.05, batch_size=32, alpha=0.5, lam=0.2, seed=0))]
    #[allow(clippy::too_many_arguments)]
    fn train(
        &mut self,
        pairs: Vec<(Vec<f64>, Vec<f64>)>,
        epochs: usize,
        learning_rate: f64,
        batch_size: usize,
        alpha: f64,
        lam: Option<f64>,
        seed: u64,
    ) -> PyResult<Vec<f64>> {
        let positives: Vec<(Vector, Vector)> = pairs
            .into_iter()
            .map(|(p, q)| (Vector::from_vec(p), Vector::from_vec(q)))
            .collect();
        let cfg = siamese::LossConfig {
            alpha,
            lambda: lam.unwrap_or(0.2),
            sparsity: None,
            seed,
        };
        let opts = siamese::TrainOptions {
            epochs,
            batch_size,
            learning_rate,
            momentum: 0.9,
            lambda_from_upper_bound: lam.is_none(),
        };
        let mut rng = Rng::from_seed(seed);
        let history = siamese::train(&mut self.inner, &positives, &cfg, &opts, &mut rng)
            .map_err(py_err)?;
        Ok(history.into_iter().map(|l| l.total).collect())
    }

    fn save(&self, path: &str) -> PyResult<()> {
        siamese::save_siamese(Path::new(path), &self.inner).map_err(py_err)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(PySiamese {
            inner: siamese::load_siamese(Path::new(path)).map_err(py_err)?,
        })
    }
}

/// Writes a synthetic dataset and config; returns
/// (train_manifest, test_manifest, config) paths.
#[pyfunction]
#[pyo3(signature = (out_dir, pairs=200, triples=40, clusters=8, noise=0.25, seed=42))]
fn generate_synthetic(
    out_dir: &str,
    pairs: usize,
    triples: usize,
    clusters: usize,
    noise: f64,
    seed: u64,
) -> PyResult<(String, String, String)> {
    let params = SynthParams::new(pairs, triples, clusters, noise, seed);
    let out = pipeline::generate_synthetic(&params, Path::new(out_dir)).map_err(py_err)?;
    Ok((
        out.train_manifest.display().to_string(),
        out.test_manifest.display().to_string(),
        out.config.display().to_string(),
    ))
}

fn load_config(config: &str, seed: Option<u64>, strategy: Option<&str>) -> PyResult<PipelineConfig> {
    let mut cfg = PipelineConfig::load(Path::new(config)).map_err(py_err)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    if let Some(s) = strategy {
        cfg.strategy = Strategy::parse(s).map_err(py_err)?;
    }
    Ok(cfg)
}

/// Runs one pipeline stage against a workspace.
#[pyfunction]
#[pyo3(signature = (stage, config, workspace, force=false, seed=None, strategy=None))]
fn run_stage(
    stage: &str,
    config: &str,
    workspace: &str,
    force: bool,
    seed: Option<u64>,
    strategy: Option<&str>,
) -> PyResult<()> {
    let cfg = load_config(config, seed, strategy)?;
    let base = Path::new(config).parent().unwrap_or_else(|| Path::new("."));
    pipeline::run_stage(
        pipeline::Stage::parse(stage).map_err(py_err)?,
        &cfg,
        base,
        Path::new(workspace),
        force,
    )
    .map_err(py_err)
}

/// Runs every stage in order.
#[pyfunction]
#[pyo3(signature = (config, workspace, force=false, seed=None, strategy=None))]
fn run_pipeline(
    config: &str,
    workspace: &str,
    force: bool,
    seed: Option<u64>,
    strategy: Option<&str>,
) -> PyResult<()> {
    let cfg = load_config(config, seed, strategy)?;
    let base = Path::new(config).parent().unwrap_or_else(|| Path::new("."));
    pipeline::run_all(&cfg, base, Path::new(workspace), force).map_err(py_err)
}

/// Reads the evaluate stage's metrics as a dict-ready list of pairs.
#[pyfunction]
fn read_metrics(workspace: &str) -> PyResult<Vec<(String, String)>> {
    let ws = pipeline::Workspace::new(Path::new(workspace));
    pipeline::load_metrics(&ws.metrics()).map_err(py_err)
}

#[pymodule]
fn bimodal_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(sigmoid, m)?)?;
    m.add_function(wrap_pyfunction!(l1_distance, m)?)?;
    m.add_function(wrap_pyfunction!(softmax_rows, m)?)?;
    m.add_function(wrap_pyfunction!(auc, m)?)?;
    m.add_function(wrap_pyfunction!(pair_probability, m)?)?;
    m.add_function(wrap_pyfunction!(derange, m)?)?;
    m.add_function(wrap_pyfunction!(extract_image_features, m)?)?;
    m.add_function(wrap_pyfunction!(generate_synthetic, m)?)?;
    m.add_function(wrap_pyfunction!(run_stage, m)?)?;
    m.add_function(wrap_pyfunction!(run_pipeline, m)?)?;
    m.add_function(wrap_pyfunction!(read_metrics, m)?)?;
    m.add_class::<PyVocabulary>()?;
    m.add_class::<PyRbm>()?;
    m.add_class::<PySiamese>()?;
    Ok(())
}
