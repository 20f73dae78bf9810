//! Python bindings. Structured values cross the boundary as JSON text,
//! binary ones as `bytes`.

use std::path::PathBuf;
use std::sync::Arc;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyBytes;

use ::lifeserver::callosum::{self, CallosumPacket, FecConfig, MsgType};
use ::lifeserver::datastore::{DerivedStore, Ledger, NewRecord, RecordId, SenseStore};
use ::lifeserver::mind::{MindEngine, MindError, MindPolicy, MindQuery};
use ::lifeserver::node::HttpFetcher;
use ::lifeserver::sealed::{self, KeyPair, PublicKey, SealedEnvelope};
use ::lifeserver::vdp::{self, ResolutionLimits};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

/// Parse a payment document and return its canonical JSON.
#[pyfunction]
fn parse_vdp(text: &str) -> PyResult<String> {
    let doc = vdp::parse_vdp_str(text).map_err(value_err)?;
    String::from_utf8(vdp::serialize_vdp(&doc)).map_err(runtime_err)
}

/// Fetch and inline every linked document; returns canonical JSON.
#[pyfunction]
#[pyo3(signature = (url, max_depth = 16, max_documents = 64))]
fn resolve_vdp(py: Python<'_>, url: &str, max_depth: usize, max_documents: usize) -> PyResult<String> {
    let url = url.to_string();
    let resolved = py
        .detach(move || vdp::resolve_url(&url, &HttpFetcher::default(), ResolutionLimits::new(max_depth, max_documents)))
        .map_err(value_err)?;
    String::from_utf8(vdp::serialize_vdp(&resolved.document)).map_err(runtime_err)
}

/// Split `total` atomic units over a resolved document:
/// a list of `(address, amount, path)`.
#[pyfunction]
fn distribute(text: &str, total: u64) -> PyResult<Vec<(String, u64, String)>> {
    let doc = vdp::parse_vdp_str(text).map_err(value_err)?;
    let payments = vdp::distribute(&doc, total).map_err(value_err)?;
    Ok(payments.into_iter().map(|p| (p.address.to_string(), p.amount, p.path_string())).collect())
}

#[pyclass(name = "KeyPair", module = "lifeserver")]
struct PyKeyPair(KeyPair);

#[pymethods]
impl PyKeyPair {
    #[staticmethod]
    fn generate() -> PyResult<Self> {
        sealed::generate_keypair_os().map(PyKeyPair).map_err(runtime_err)
    }

    #[staticmethod]
    fn from_secret(secret: &[u8]) -> PyResult<Self> {
        let secret: [u8; 32] = secret.try_into().map_err(|_| PyValueError::new_err("secret must be 32 bytes"))?;
        Ok(PyKeyPair(KeyPair::from_secret_bytes(secret)))
    }

    #[getter]
    fn public_key<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, &self.0.public_key().0)
    }

    #[getter]
    fn key_id(&self) -> String {
        self.0.key_id().to_hex()
    }

    fn open<'py>(&self, py: Python<'py>, envelope: &[u8]) -> PyResult<Bound<'py, PyBytes>> {
        let envelope = SealedEnvelope::from_bytes(envelope).map_err(value_err)?;
        let plaintext = sealed::open(&self.0, &envelope).map_err(value_err)?;
        Ok(PyBytes::new(py, &plaintext))
    }

    fn __repr__(&self) -> String {
        format!("KeyPair(key_id='{}')", self.0.key_id().to_hex())
    }
}

/// Encrypt `plaintext` to a 32-byte public key; returns the envelope bytes.
#[pyfunction]
fn seal<'py>(py: Python<'py>, public_key: &[u8], plaintext: &[u8]) -> PyResult<Bound<'py, PyBytes>> {
    let pk = PublicKey::from_slice(public_key).map_err(value_err)?;
    let envelope = sealed::seal(&pk, plaintext).map_err(runtime_err)?;
    Ok(PyBytes::new(py, &envelope.to_bytes()))
}

fn fec(enabled: bool) -> FecConfig {
    if enabled {
        FecConfig::rs255_223()
    } else {
        FecConfig::disabled()
    }
}

fn msg_type(name: &str) -> PyResult<MsgType> {
    MsgType::ALL
        .into_iter()
        .find(|t| t.to_string() == name)
        .ok_or_else(|| PyValueError::new_err(format!("unknown message type {name:?}")))
}

/// Frame one packet for the inter-node link.
#[pyfunction]
#[pyo3(signature = (msg_type_name, correlation_id, payload, use_fec = false))]
fn encode_frame<'py>(
    py: Python<'py>,
    msg_type_name: &str,
    correlation_id: u64,
    payload: &[u8],
    use_fec: bool,
) -> PyResult<Bound<'py, PyBytes>> {
    let packet = CallosumPacket::new(msg_type(msg_type_name)?, correlation_id, payload);
    let frame = callosum::encode_frame(&packet, &fec(use_fec)).map_err(value_err)?;
    Ok(PyBytes::new(py, &frame))
}

/// Decode every frame found in `stream`. Damaged frames are skipped; the
/// result lists `(msg_type, correlation_id, payload)` for the good ones.
#[pyfunction]
#[pyo3(signature = (stream, use_fec = false))]
fn decode_stream<'py>(py: Python<'py>, stream: &[u8], use_fec: bool) -> Vec<(String, u64, Bound<'py, PyBytes>)> {
    callosum::decode_stream(stream, &fec(use_fec))
        .into_iter()
        .flatten()
        .map(|p| (p.msg_type.to_string(), p.correlation_id, PyBytes::new(py, &p.payload)))
        .collect()
}

/// A record store in a directory, queried through the aggregate engine.
#[pyclass(name = "RecordStore", module = "lifeserver")]
struct PyRecordStore {
    sense: Arc<SenseStore>,
    engine: MindEngine,
}

#[pymethods]
impl PyRecordStore {
    #[new]
    #[pyo3(signature = (directory, k_min = 5))]
    fn new(directory: PathBuf, k_min: u64) -> PyResult<Self> {
        std::fs::create_dir_all(&directory).map_err(runtime_err)?;
        let sense = Arc::new(SenseStore::open_public(&directory.join("sense.ndjson")).map_err(runtime_err)?);
        let derived = Arc::new(DerivedStore::open(&directory.join("derived.ndjson")).map_err(runtime_err)?);
        let ledger = Arc::new(Ledger::open(&directory.join("ledger.ndjson")).map_err(runtime_err)?);
        let policy = MindPolicy { k_min, ..MindPolicy::default() };
        let engine = MindEngine::new(sense.clone(), derived, ledger, policy, Arc::new(HttpFetcher::default()));
        Ok(PyRecordStore { sense, engine })
    }

    /// Append a record given as JSON; returns its id.
    fn append(&self, record_json: &str) -> PyResult<String> {
        let record: NewRecord = serde_json::from_str(record_json).map_err(value_err)?;
        let id = self.sense.append(record.with_id(RecordId::random())).map_err(value_err)?;
        Ok(id.to_string())
    }

    fn __len__(&self) -> usize {
        self.sense.len()
    }

    /// Run a query given as JSON. Returns the insight as JSON, or None when
    /// too few records contribute to reveal anything.
    fn query(&self, query_json: &str) -> PyResult<Option<String>> {
        let query: MindQuery = serde_json::from_str(query_json).map_err(value_err)?;
        match self.engine.execute_query(&query) {
            Ok(insight) => Ok(Some(serde_json::to_string(&insight).map_err(runtime_err)?)),
            Err(MindError::InsufficientData { .. }) => Ok(None),
            Err(e) => Err(value_err(e)),
        }
    }
}

#[pymodule]
#[pyo3(name = "lifeserver")]
fn lifeserver_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(parse_vdp, m)?)?;
    m.add_function(wrap_pyfunction!(resolve_vdp, m)?)?;
    m.add_function(wrap_pyfunction!(distribute, m)?)?;
    m.add_function(wrap_pyfunction!(seal, m)?)?;
    m.add_function(wrap_pyfunction!(encode_frame, m)?)?;
    m.add_function(wrap_pyfunction!(decode_stream, m)?)?;
    m.add_class::<PyKeyPair>()?;
    m.add_class::<PyRecordStore>()?;
    Ok(())
}
