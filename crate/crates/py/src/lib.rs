//! Python bindings. Images cross the boundary as flat interleaved `H×W×C`
//! float lists plus a `(h, w, c)` shape.

use std::collections::BTreeMap;
use std::path::PathBuf;

use ::jcif as core;
use core::codec::{lambda_for, CodecConfig, CodecModel, RasterImage};
use core::dataset::{build_dataset, DatasetManifest, Split, SplitRatios, SyntheticSceneConfig, MANIFEST_FILE};
use core::hash_head::{HashCode, HashHead, HashHeadConfig, LabelVector};
use core::retrieval::Relevance;
use core::trainer::{train_stage1, train_stage2, Checkpoint, TrainSchedule};
use pyo3::exceptions::{PyIOError, PyKeyError, PyValueError};
use pyo3::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn err(e: core::Error) -> PyErr {
    match e {
        core::Error::Io { .. } => PyIOError::new_err(e.to_string()),
        core::Error::NotFound(_) => PyKeyError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn image(pixels: Vec<f64>, shape: (usize, usize, usize)) -> PyResult<RasterImage> {
    RasterImage::new(shape.0, shape.1, shape.2, pixels).map_err(err)
}

type ImageOut = (Vec<f64>, (usize, usize, usize));

fn image_out(img: &RasterImage) -> ImageOut {
    (img.pixels().to_vec(), (img.height(), img.width(), img.channels()))
}

fn code_of(bits: Vec<i8>) -> PyResult<HashCode> {
    HashCode::new(bits).map_err(err)
}

/// Generates the synthetic dataset under `out`; returns split sizes.
#[pyfunction]
#[pyo3(signature = (out, n, seed=0, size=32))]
fn generate_dataset(out: PathBuf, n: usize, seed: u64, size: usize) -> PyResult<BTreeMap<String, usize>> {
    let cfg = SyntheticSceneConfig { size, seed, ..Default::default() };
    let m = build_dataset(&cfg, n, &SplitRatios::default(), &out).map_err(err)?;
    Ok([Split::Train, Split::Val, Split::Test].iter().map(|&s| (s.to_string(), m.split_count(s))).collect())
}

/// A trained (or freshly initialized) codec, optionally with a hashing head.
#[pyclass(name = "Model", module = "jcif", skip_from_py_object)]
#[derive(Clone)]
struct PyModel {
    ckpt: Checkpoint,
}

impl PyModel {
    fn head(&self) -> PyResult<&HashHead> {
        self.ckpt.hash_head.as_ref().ok_or_else(|| PyValueError::new_err("this model has no hashing head; train stage 2"))
    }
}

#[pymethods]
impl PyModel {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyModel { ckpt: Checkpoint::load(&path).map_err(err)? })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.ckpt.save(&path).map_err(err)
    }

    /// Stage-1 training on the train split of a dataset directory.
    #[staticmethod]
    #[pyo3(signature = (data, steps, seed=0, lambda_setting=0.1, lr=1e-3, batch=8))]
    fn train_codec(data: PathBuf, steps: usize, seed: u64, lambda_setting: f64, lr: f64, batch: usize) -> PyResult<Self> {
        let samples = load(&data, Split::Train)?;
        let first = samples.first().ok_or_else(|| PyValueError::new_err("empty training split"))?;
        let values = first.image.pixel_count() * first.image.channels();
        let config = CodecConfig { lambda: lambda_for(lambda_setting, values), ..Default::default() };
        let mut codec = CodecModel::new(config, seed).map_err(err)?;
        let schedule = TrainSchedule { stage1_steps: steps, learning_rate: lr, batch_size: batch, seed, ..Default::default() };
        train_stage1(&mut codec, &samples, &schedule).map_err(err)?;
        Ok(PyModel { ckpt: Checkpoint { stage: 1, schedule, codec, hash_head: None } })
    }

    /// Stage-2 training: adds a `bits`-bit hashing head to this codec.
    #[pyo3(signature = (data, steps, bits=64, seed=0, lr=1e-3, batch=8))]
    fn train_hashing(&self, data: PathBuf, steps: usize, bits: usize, seed: u64, lr: f64, batch: usize) -> PyResult<Self> {
        let samples = load(&data, Split::Train)?;
        let classes = samples.first().map(|s| s.labels.classes()).ok_or_else(|| PyValueError::new_err("empty training split"))?;
        let mut codec = self.ckpt.codec.clone();
        let config = HashHeadConfig { classes, latent_channels: codec.config.latent_channels, ..HashHeadConfig::with_bits(bits) };
        let mut head = HashHead::new(config, seed).map_err(err)?;
        let schedule = TrainSchedule { stage2_steps: steps, learning_rate: lr, batch_size: batch, seed, ..self.ckpt.schedule.clone() };
        train_stage2(&mut codec, &mut head, &samples, &schedule).map_err(err)?;
        Ok(PyModel { ckpt: Checkpoint { stage: 2, schedule, codec, hash_head: Some(head) } })
    }

    #[getter]
    fn stage(&self) -> u8 {
        self.ckpt.stage
    }

    #[getter]
    fn lambda_(&self) -> f64 {
        self.ckpt.codec.config.lambda
    }

    #[getter]
    fn code_bits(&self) -> Option<usize> {
        self.ckpt.hash_head.as_ref().map(|h| h.config.code_bits)
    }

    /// Continuous latent, flat planar `[c, h, w]`, with its shape.
    fn encode(&self, pixels: Vec<f64>, shape: (usize, usize, usize)) -> PyResult<(Vec<f64>, Vec<usize>)> {
        let lat = self.ckpt.codec.encode(&image(pixels, shape)?).map_err(err)?;
        Ok((lat.0.data().to_vec(), lat.shape().to_vec()))
    }

    /// Round trip through rounding and the decoder.
    fn reconstruct(&self, pixels: Vec<f64>, shape: (usize, usize, usize)) -> PyResult<ImageOut> {
        let lat = self.ckpt.codec.encode(&image(pixels, shape)?).map_err(err)?;
        let q = core::codec::quantize(&lat, core::codec::QuantMode::Inference, &mut ChaCha8Rng::seed_from_u64(0));
        Ok(image_out(&self.ckpt.codec.decode(&q).map_err(err)?))
    }

    /// ±1 hash code of an image.
    fn hash(&self, pixels: Vec<f64>, shape: (usize, usize, usize)) -> PyResult<Vec<i8>> {
        let img = image(pixels, shape)?;
        let codes = core::pipeline::hash_images(&self.ckpt.codec, self.head()?, &[&img]).map_err(err)?;
        Ok(codes[0].bits().to_vec())
    }

    /// `(bpp, psnr)` with real entropy coding over a dataset split.
    #[pyo3(signature = (data, split="test"))]
    fn rate_quality(&self, data: PathBuf, split: &str) -> PyResult<(f64, f64)> {
        let samples = load(&data, split.parse().map_err(err)?)?;
        let images: Vec<&RasterImage> = samples.iter().map(|s| &s.image).collect();
        let p = core::pipeline::measure(&self.ckpt.codec, &images).map_err(err)?;
        Ok((p.bpp, p.psnr))
    }

    /// Compresses a dataset split into an archive.
    #[pyo3(signature = (data, split="test"))]
    fn compress(&self, data: PathBuf, split: &str) -> PyResult<PyArchive> {
        let samples = load(&data, split.parse().map_err(err)?)?;
        let (archive, _) = core::pipeline::compress(&self.ckpt.codec, self.head()?, &samples).map_err(err)?;
        Ok(PyArchive { inner: archive })
    }

    /// Joint and standard retrieval on the validation queries of a dataset
    /// against `archive`: `{path: (P@k, R@k, mAP, seconds, decodes)}`.
    #[pyo3(signature = (data, archive, k=10))]
    fn evaluate(&self, data: PathBuf, archive: &PyArchive, k: usize) -> PyResult<BTreeMap<String, (f64, f64, f64, f64, u64)>> {
        let manifest = DatasetManifest::load(&data.join(MANIFEST_FILE)).map_err(err)?;
        let labels: BTreeMap<u64, LabelVector> = manifest.entries.iter().map(|e| (e.id, e.labels.clone())).collect();
        let gallery: BTreeMap<u64, LabelVector> =
            archive.inner.entries().iter().filter_map(|e| labels.get(&e.id).map(|l| (e.id, l.clone()))).collect();
        let queries = manifest.load_split(&data, Split::Val).map_err(err)?;
        let ev = core::pipeline::evaluate(&self.ckpt.codec, self.head()?, &archive.inner, &queries, &gallery, Relevance::ShareLabel, k)
            .map_err(err)?;
        Ok([&ev.joint, &ev.standard]
            .iter()
            .map(|p| {
                let r = &p.report;
                (p.name.to_string(), (r.precision, r.recall, r.map.map, r.total_seconds, p.decodes))
            })
            .collect())
    }
}

fn load(data: &std::path::Path, split: Split) -> PyResult<Vec<core::dataset::Sample>> {
    let manifest = DatasetManifest::load(&data.join(MANIFEST_FILE)).map_err(err)?;
    manifest.load_split(data, split).map_err(err)
}

#[pyclass(name = "Archive", module = "jcif")]
struct PyArchive {
    inner: core::pipeline::Archive,
}

#[pymethods]
impl PyArchive {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyArchive { inner: core::pipeline::Archive::load(&path).map_err(err)? })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(err)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn code_bits(&self) -> usize {
        self.inner.code_bits()
    }

    fn ids(&self) -> Vec<u64> {
        self.inner.entries().iter().map(|e| e.id).collect()
    }

    fn payload_bits(&self) -> u64 {
        self.inner.payload_bits()
    }

    fn code(&self, id: u64) -> PyResult<Vec<i8>> {
        Ok(self.inner.get(id).map_err(err)?.code.bits().to_vec())
    }

    /// Decodes one image; touches only that image's bitstreams.
    fn decompress(&self, model: &PyModel, id: u64) -> PyResult<ImageOut> {
        let entry = self.inner.get(id).map_err(err)?;
        let mut dec = core::pipeline::Decoder::new(&model.ckpt.codec);
        Ok(image_out(&dec.image(entry).map_err(err)?))
    }

    fn index(&self) -> PyResult<PyHashTable> {
        Ok(PyHashTable { inner: self.inner.index().map_err(err)? })
    }
}

#[pyclass(name = "HashTable", module = "jcif")]
struct PyHashTable {
    inner: core::retrieval::HashTable,
}

#[pymethods]
impl PyHashTable {
    /// Builds a table from `(id, code)` pairs with ±1 codes.
    #[staticmethod]
    fn build(bits: usize, items: Vec<(u64, Vec<i8>)>) -> PyResult<Self> {
        let codes: Vec<(u64, HashCode)> = items.into_iter().map(|(id, c)| Ok((id, code_of(c)?))).collect::<PyResult<_>>()?;
        let table = core::retrieval::HashTable::build(bits, codes.iter().map(|(id, c)| (*id, c))).map_err(err)?;
        Ok(PyHashTable { inner: table })
    }

    #[staticmethod]
    fn from_bytes(bytes: Vec<u8>) -> PyResult<Self> {
        Ok(PyHashTable { inner: core::retrieval::HashTable::from_bytes(&bytes).map_err(err)? })
    }

    fn to_bytes(&self) -> Vec<u8> {
        self.inner.to_bytes()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn bits(&self) -> usize {
        self.inner.bits()
    }

    fn bucket_count(&self) -> usize {
        self.inner.bucket_count()
    }

    /// `[(id, hamming distance)]`, nearest first, ties by id.
    #[pyo3(signature = (code, top_k=10))]
    fn query(&self, code: Vec<i8>, top_k: usize) -> PyResult<Vec<(u64, u32)>> {
        let res = self.inner.query(&code_of(code)?, top_k).map_err(err)?;
        Ok(res.ids.into_iter().zip(res.distances).collect())
    }
}

/// Min-norm convex combination of two gradients: `(combined, alpha)`.
#[pyfunction]
fn mgda_combine(g_rate: Vec<f64>, g_dist: Vec<f64>) -> PyResult<(Vec<f64>, f64)> {
    if g_rate.len() != g_dist.len() {
        return Err(PyValueError::new_err("gradients differ in length"));
    }
    Ok(core::trainer::mgda_combine(&g_rate, &g_dist))
}

/// PCGrad projection with a seeded task order: `(projected, sum)`.
#[pyfunction]
#[pyo3(signature = (grads, seed=0))]
fn pcgrad(grads: Vec<Vec<f64>>, seed: u64) -> PyResult<(Vec<Vec<f64>>, Vec<f64>)> {
    if grads.len() < 2 || grads.iter().any(|g| g.len() != grads[0].len()) {
        return Err(PyValueError::new_err("need at least two gradients of equal length"));
    }
    Ok(core::trainer::pcgrad(&grads, &mut ChaCha8Rng::seed_from_u64(seed)))
}

/// Average precision of a ranked relevance list; `None` without relevant items.
#[pyfunction]
fn average_precision(relevant: Vec<bool>) -> Option<f64> {
    core::retrieval::average_precision(&relevant)
}

#[pyfunction]
fn hamming(a: Vec<i8>, b: Vec<i8>) -> PyResult<u32> {
    let (a, b) = (code_of(a)?, code_of(b)?);
    if a.len() != b.len() {
        return Err(PyValueError::new_err("codes differ in length"));
    }
    Ok(a.bits().iter().zip(b.bits()).filter(|(x, y)| x != y).count() as u32)
}

#[pymodule]
fn jcif(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModel>()?;
    m.add_class::<PyArchive>()?;
    m.add_class::<PyHashTable>()?;
    m.add_function(wrap_pyfunction!(generate_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(mgda_combine, m)?)?;
    m.add_function(wrap_pyfunction!(pcgrad, m)?)?;
    m.add_function(wrap_pyfunction!(average_precision, m)?)?;
    m.add_function(wrap_pyfunction!(hamming, m)?)?;
    Ok(())
}
