//! Fetching source-published VDP documents over https, http or file URLs.

use std::time::Duration;

use crate::vdp::VdpFetcher;

pub const MAX_DOCUMENT_BYTES: u64 = 1024 * 1024;

pub struct HttpFetcher {
    agent: ureq::Agent,
}

impl HttpFetcher {
    pub fn new(timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        Self { agent }
    }
}

impl Default for HttpFetcher {
    fn default() -> Self {
        Self::new(Duration::from_secs(10))
    }
}

impl VdpFetcher for HttpFetcher {
    fn fetch(&self, url: &str) -> Result<Vec<u8>, String> {
        let parsed = url::Url::parse(url).map_err(|e| e.to_string())?;
        match parsed.scheme() {
            "file" => {
                let path = parsed
                    .to_file_path()
                    .map_err(|_| format!("not a local file url: {url}"))?;
                let meta = std::fs::metadata(&path).map_err(|e| e.to_string())?;
                if meta.len() > MAX_DOCUMENT_BYTES {
                    return Err(format!("document larger than {MAX_DOCUMENT_BYTES} bytes"));
                }
                std::fs::read(&path).map_err(|e| e.to_string())
            }
            "http" | "https" => {
                let mut response = self.agent.get(url).call().map_err(|e| e.to_string())?;
                response
                    .body_mut()
                    .with_config()
                    .limit(MAX_DOCUMENT_BYTES)
                    .read_to_vec()
                    .map_err(|e| e.to_string())
            }
            other => Err(format!("unsupported url scheme {other:?}")),
        }
    }
}
