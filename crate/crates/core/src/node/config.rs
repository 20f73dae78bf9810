//! `key = value` node configuration.
//!
//! One key per line, `#` starts a comment, blank lines are ignored.
//! Relative `data_dir` paths are taken relative to the config file.
//!
//! | key | roles | default |
//! |---|---|---|
//! | `role` | both | required: `public` or `private` |
//! | `data_dir` | both | required |
//! | `channel.transport` | both | `inprocess` (or `tcp-sim`) |
//! | `channel.address` | both | required for `tcp-sim`; the private node listens, the public node connects |
//! | `channel.mode` | both | `duplex` (first-boot mode; later overridden by the `lock` state) |
//! | `channel.fec` | both | `off` |
//! | `channel.fec.data_len` / `channel.fec.parity_len` | both | 223 / 32 |
//! | `channel.error.corruption_probability` / `.drop_probability` / `.seed` | both | 0 / 0 / 0 |
//! | `channel.handshake_timeout_ms` | both | 10000 |
//! | `listen_address` | public | required |
//! | `pairing_code` | public | required |
//! | `pairing_code_ttl_secs` | public | 86400 (0 = never expires) |
//! | `k_min` | public | 5 |
//! | `min_fee` | public | 0 |
//! | `ls_retention` | public | 0 (fraction of each fee kept, 0..=1) |
//! | `resolution.max_depth` / `resolution.max_documents` | public | 16 / 64 |

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use thiserror::Error;

use crate::callosum::{ChannelMode, ErrorModel, FecConfig};
use crate::mind::{MindPolicy, BASIS_POINTS, DEFAULT_K_MIN};
use crate::vdp::ResolutionLimits;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Public,
    Private,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Public => "public",
            Role::Private => "private",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transport {
    InProcess,
    TcpSim,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelConfig {
    pub transport: Transport,
    pub address: Option<String>,
    pub mode: ChannelMode,
    pub fec: FecConfig,
    pub error_model: ErrorModel,
    pub handshake_timeout: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeConfig {
    pub role: Role,
    pub data_dir: PathBuf,
    pub channel: ChannelConfig,
    /// Public role only.
    pub listen_address: Option<String>,
    pub pairing_code: Option<String>,
    pub pairing_ttl: Option<Duration>,
    pub mind: MindPolicy,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("line {line}: expected `key = value`, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("line {line}: key {key:?} given more than once")]
    DuplicateKey { key: String, line: usize },
    #[error("missing required key {0:?}")]
    MissingKey(String),
    #[error("bad value {value:?} for key {key:?}: {reason}")]
    BadValue { key: String, value: String, reason: String },
    #[error("unknown key {0:?}")]
    UnknownKey(String),
    #[error("key {key:?} is not valid for role {role}")]
    UnknownKeyForRole { key: String, role: Role },
}

const COMMON_KEYS: &[&str] = &[
    "role",
    "data_dir",
    "channel.transport",
    "channel.address",
    "channel.mode",
    "channel.fec",
    "channel.fec.data_len",
    "channel.fec.parity_len",
    "channel.error.corruption_probability",
    "channel.error.drop_probability",
    "channel.error.seed",
    "channel.handshake_timeout_ms",
];

const PUBLIC_KEYS: &[&str] = &[
    "listen_address",
    "pairing_code",
    "pairing_code_ttl_secs",
    "k_min",
    "min_fee",
    "ls_retention",
    "resolution.max_depth",
    "resolution.max_documents",
];

struct Entries {
    map: BTreeMap<String, String>,
}

impl Entries {
    fn raw(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(String::as_str)
    }

    fn required(&self, key: &str) -> Result<&str, ConfigError> {
        self.raw(key).ok_or_else(|| ConfigError::MissingKey(key.to_string()))
    }

    fn parsed<T: FromStr>(&self, key: &str, default: T) -> Result<T, ConfigError>
    where
        T::Err: fmt::Display,
    {
        match self.raw(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|e: T::Err| bad(key, v, e.to_string())),
        }
    }
}

fn bad(key: &str, value: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::BadValue {
        key: key.to_string(),
        value: value.to_string(),
        reason: reason.into(),
    }
}

fn probability(entries: &Entries, key: &str) -> Result<f64, ConfigError> {
    let p: f64 = entries.parsed(key, 0.0)?;
    if !(0.0..=1.0).contains(&p) {
        return Err(bad(key, entries.raw(key).unwrap_or(""), "must be within 0..=1"));
    }
    Ok(p)
}

fn split_lines(text: &str) -> Result<Entries, ConfigError> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split_once('#').map_or(raw, |(before, _)| before).trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(ConfigError::Syntax {
                line: i + 1,
                text: raw.to_string(),
            });
        };
        let key = key.trim();
        if key.is_empty() {
            return Err(ConfigError::Syntax {
                line: i + 1,
                text: raw.to_string(),
            });
        }
        if map.insert(key.to_string(), value.trim().to_string()).is_some() {
            return Err(ConfigError::DuplicateKey {
                key: key.to_string(),
                line: i + 1,
            });
        }
    }
    Ok(Entries { map })
}

impl NodeConfig {
    pub fn load(path: &Path) -> Result<NodeConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    /// Parse config text; relative `data_dir` is joined onto `base`.
    pub fn parse(text: &str, base: &Path) -> Result<NodeConfig, ConfigError> {
        let entries = split_lines(text)?;

        let role = match entries.required("role")? {
            "public" => Role::Public,
            "private" => Role::Private,
            other => return Err(bad("role", other, "expected `public` or `private`")),
        };
        for key in entries.map.keys() {
            let known_common = COMMON_KEYS.contains(&key.as_str());
            let known_public = PUBLIC_KEYS.contains(&key.as_str());
            if !known_common && !known_public {
                return Err(ConfigError::UnknownKey(key.clone()));
            }
            if known_public && role == Role::Private {
                return Err(ConfigError::UnknownKeyForRole {
                    key: key.clone(),
                    role,
                });
            }
        }

        let data_dir_text = entries.required("data_dir")?;
        if data_dir_text.is_empty() {
            return Err(bad("data_dir", data_dir_text, "must not be empty"));
        }
        let data_dir = base.join(data_dir_text);

        let transport = match entries.raw("channel.transport").unwrap_or("inprocess") {
            "inprocess" => Transport::InProcess,
            "tcp-sim" => Transport::TcpSim,
            other => return Err(bad("channel.transport", other, "expected `inprocess` or `tcp-sim`")),
        };
        let address = entries.raw("channel.address").map(str::to_string);
        if transport == Transport::TcpSim && address.is_none() {
            return Err(ConfigError::MissingKey("channel.address".into()));
        }
        let mode_text = entries.raw("channel.mode").unwrap_or("duplex");
        let mode = ChannelMode::parse(mode_text)
            .ok_or_else(|| bad("channel.mode", mode_text, "expected `duplex` or `diode`"))?;
        let fec_enabled = match entries.raw("channel.fec").unwrap_or("off") {
            "on" | "true" | "yes" => true,
            "off" | "false" | "no" => false,
            other => return Err(bad("channel.fec", other, "expected `on` or `off`")),
        };
        let defaults = FecConfig::rs255_223();
        let fec = FecConfig {
            enabled: fec_enabled,
            data_len: entries.parsed("channel.fec.data_len", defaults.data_len)?,
            parity_len: entries.parsed("channel.fec.parity_len", defaults.parity_len)?,
        };
        if let Err(e) = fec.validate() {
            return Err(bad(
                "channel.fec.parity_len",
                &format!("{}+{}", fec.data_len, fec.parity_len),
                e.to_string(),
            ));
        }
        let error_model = ErrorModel {
            corruption_probability: probability(&entries, "channel.error.corruption_probability")?,
            drop_probability: probability(&entries, "channel.error.drop_probability")?,
            seed: entries.parsed("channel.error.seed", 0u64)?,
        };
        let handshake_timeout =
            Duration::from_millis(entries.parsed("channel.handshake_timeout_ms", 10_000u64)?);
        let channel = ChannelConfig {
            transport,
            address,
            mode,
            fec,
            error_model,
            handshake_timeout,
        };

        let mut config = NodeConfig {
            role,
            data_dir,
            channel,
            listen_address: None,
            pairing_code: None,
            pairing_ttl: None,
            mind: MindPolicy::default(),
        };
        if role == Role::Private {
            return Ok(config);
        }

        let listen = entries.required("listen_address")?;
        if listen.parse::<std::net::SocketAddr>().is_err() && !listen.contains(':') {
            return Err(bad("listen_address", listen, "expected host:port"));
        }
        config.listen_address = Some(listen.to_string());
        let code = entries.required("pairing_code")?;
        if code.is_empty() {
            return Err(bad("pairing_code", code, "must not be empty"));
        }
        config.pairing_code = Some(code.to_string());
        let ttl: u64 = entries.parsed("pairing_code_ttl_secs", 86_400)?;
        config.pairing_ttl = (ttl > 0).then(|| Duration::from_secs(ttl));

        let k_min: u64 = entries.parsed("k_min", DEFAULT_K_MIN)?;
        if k_min == 0 {
            return Err(bad("k_min", "0", "must be at least 1"));
        }
        let retention: f64 = entries.parsed("ls_retention", 0.0)?;
        if !(0.0..=1.0).contains(&retention) {
            return Err(bad(
                "ls_retention",
                entries.raw("ls_retention").unwrap_or(""),
                "must be within 0..=1",
            ));
        }
        let max_depth: usize = entries.parsed("resolution.max_depth", 16)?;
        let max_documents: usize = entries.parsed("resolution.max_documents", 64)?;
        if max_depth == 0 {
            return Err(bad("resolution.max_depth", "0", "must be at least 1"));
        }
        if max_documents == 0 {
            return Err(bad("resolution.max_documents", "0", "must be at least 1"));
        }
        config.mind = MindPolicy {
            k_min,
            min_fee: entries.parsed("min_fee", 0u64)?,
            retention_bp: (retention * BASIS_POINTS as f64).round() as u32,
            limits: ResolutionLimits::new(max_depth, max_documents),
        };
        Ok(config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL_PUBLIC: &str = "
        # public node
        role = public
        data_dir = pub
        listen_address = 127.0.0.1:8080
        pairing_code = hello-42
    ";

    #[test]
    fn minimal_public_defaults() {
        let c = NodeConfig::parse(MINIMAL_PUBLIC, Path::new("/etc/ls")).unwrap();
        assert_eq!(c.role, Role::Public);
        assert_eq!(c.data_dir, PathBuf::from("/etc/ls/pub"));
        assert_eq!(c.mind.k_min, 5);
        assert_eq!(c.mind.retention_bp, 0);
        assert!(!c.channel.fec.enabled);
        assert_eq!(c.channel.mode, ChannelMode::Duplex);
        assert_eq!(c.channel.transport, Transport::InProcess);
        assert_eq!(c.mind.limits, ResolutionLimits::default());
    }

    #[test]
    fn private_rejects_public_keys() {
        let text = "role = private\ndata_dir = p\nlisten_address = 127.0.0.1:1\n";
        assert_eq!(
            NodeConfig::parse(text, Path::new(".")).unwrap_err(),
            ConfigError::UnknownKeyForRole {
                key: "listen_address".into(),
                role: Role::Private
            }
        );
    }

    #[test]
    fn diagnostics_name_the_key() {
        let e = NodeConfig::parse("role = public\ndata_dir = x\npairing_code = c\n", Path::new(".")).unwrap_err();
        assert_eq!(e, ConfigError::MissingKey("listen_address".into()));
        let e = NodeConfig::parse(&format!("{MINIMAL_PUBLIC}\nk_min = many"), Path::new(".")).unwrap_err();
        assert!(matches!(e, ConfigError::BadValue { ref key, .. } if key == "k_min"));
        let e = NodeConfig::parse(&format!("{MINIMAL_PUBLIC}\ncolour = blue"), Path::new(".")).unwrap_err();
        assert_eq!(e, ConfigError::UnknownKey("colour".into()));
        let e = NodeConfig::parse("role = public\nrole = private", Path::new(".")).unwrap_err();
        assert!(matches!(e, ConfigError::DuplicateKey { line: 2, .. }));
        let e = NodeConfig::parse("just words", Path::new(".")).unwrap_err();
        assert!(matches!(e, ConfigError::Syntax { line: 1, .. }));
    }

    #[test]
    fn channel_settings() {
        let text = format!(
            "{MINIMAL_PUBLIC}
            channel.transport = tcp-sim
            channel.address = 127.0.0.1:7700
            channel.mode = diode
            channel.fec = on
            channel.error.corruption_probability = 0.02
            channel.error.seed = 7
            ls_retention = 0.025
            "
        );
        let c = NodeConfig::parse(&text, Path::new(".")).unwrap();
        assert_eq!(c.channel.transport, Transport::TcpSim);
        assert_eq!(c.channel.mode, ChannelMode::Diode);
        assert!(c.channel.fec.enabled);
        assert_eq!(c.channel.error_model.corruption_probability, 0.02);
        assert_eq!(c.mind.retention_bp, 250);
        let missing = format!("{MINIMAL_PUBLIC}\nchannel.transport = tcp-sim");
        assert_eq!(
            NodeConfig::parse(&missing, Path::new(".")).unwrap_err(),
            ConfigError::MissingKey("channel.address".into())
        );
    }
}
