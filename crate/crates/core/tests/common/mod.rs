#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use lifeserver::callosum::{ChannelMode, Direction};
use lifeserver::datastore::{FieldValue, NewRecord, Privacy, SourceVdp};
use lifeserver::node::{Deployment, NodeConfig};
use lifeserver::sealed::{seal, PublicKey};
use lifeserver::vdp::{MemoryFetcher, VdpDocument, VdpNode};

pub const PAIRING_CODE: &str = "424242";

pub fn public_config(dir: &Path, extra: &str) -> NodeConfig {
    let text = format!(
        "role = public\ndata_dir = {}\nlisten_address = 127.0.0.1:0\npairing_code = {PAIRING_CODE}\n{extra}",
        dir.join("public").display()
    );
    NodeConfig::parse(&text, dir).expect("public config")
}

pub fn private_config(dir: &Path, extra: &str) -> NodeConfig {
    let text = format!(
        "role = private\ndata_dir = {}\n{extra}",
        dir.join("private").display()
    );
    NodeConfig::parse(&text, dir).expect("private config")
}

pub struct TwoNodes {
    pub dir: tempfile::TempDir,
    pub deployment: Deployment,
}

impl TwoNodes {
    /// Start both nodes in duplex with the given public-config extras.
    pub fn start(public_extra: &str) -> TwoNodes {
        let dir = tempfile::tempdir().unwrap();
        let deployment = Deployment::start(
            vec![public_config(dir.path(), public_extra), private_config(dir.path(), "")],
            Arc::new(MemoryFetcher::new()),
        )
        .expect("deployment");
        TwoNodes { dir, deployment }
    }

    /// Start, provision and lock.
    pub fn locked(public_extra: &str) -> TwoNodes {
        let nodes = TwoNodes::start(public_extra);
        nodes.public().provision(Duration::from_secs(10)).expect("provision");
        nodes.public().set_mode(ChannelMode::Diode).unwrap();
        nodes.private().set_mode(ChannelMode::Diode).unwrap();
        nodes
    }

    pub fn public(&self) -> &lifeserver::node::PublicNode {
        self.deployment.public.as_ref().unwrap()
    }

    pub fn private(&self) -> &lifeserver::node::PrivateNode {
        self.deployment.private.as_ref().unwrap()
    }

    pub fn reverse_bytes(&self) -> u64 {
        self.deployment.channel().unwrap().counters().get(Direction::PrivateToPublic)
    }

    pub fn public_dir(&self) -> PathBuf {
        self.dir.path().join("public")
    }

    pub fn private_dir(&self) -> PathBuf {
        self.dir.path().join("private")
    }
}

pub fn payee(address: &str) -> SourceVdp {
    SourceVdp::Inline(VdpDocument::new(VdpNode::bitcoin(address)))
}

pub fn public_record(source: &str, ts: i64, record_type: &str, fields: &[(&str, f64)]) -> NewRecord {
    NewRecord {
        source_id: source.to_string(),
        source_vdp: payee(&format!("addr-{source}")),
        timestamp: ts,
        record_type: record_type.to_string(),
        privacy: Privacy::Public,
        fields: fields
            .iter()
            .map(|(k, v)| (k.to_string(), FieldValue::Number(*v)))
            .collect::<BTreeMap<_, _>>(),
        sealed_payload: None,
    }
}

pub fn sealed_record(source: &str, ts: i64, record_type: &str, key: &PublicKey, plaintext: &[u8]) -> NewRecord {
    NewRecord {
        source_id: source.to_string(),
        source_vdp: payee(&format!("addr-{source}")),
        timestamp: ts,
        record_type: record_type.to_string(),
        privacy: Privacy::Sealed,
        fields: BTreeMap::new(),
        sealed_payload: Some(seal(key, plaintext).unwrap()),
    }
}

pub fn wait_until(timeout: Duration, mut f: impl FnMut() -> bool) -> bool {
    let deadline = Instant::now() + timeout;
    while Instant::now() < deadline {
        if f() {
            return true;
        }
        std::thread::sleep(Duration::from_millis(20));
    }
    f()
}

/// Every file under `dir` whose bytes contain `needle`.
pub fn files_containing(dir: &Path, needle: &[u8]) -> Vec<PathBuf> {
    let mut hits = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).into_iter().flatten().flatten() {
            let path = entry.path();
            if path.is_dir() {
                stack.push(path);
            } else if let Ok(bytes) = std::fs::read(&path) {
                if bytes.windows(needle.len()).any(|w| w == needle) {
                    hits.push(path);
                }
            }
        }
    }
    hits
}
