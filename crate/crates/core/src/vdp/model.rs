use std::fmt;

use serde::de::{self, Deserializer, MapAccess, Visitor};
use serde::ser::{SerializeMap, Serializer};
use serde::{Deserialize, Serialize};

/// The only protocol version this implementation reads or writes.
pub const VDP_VERSION: u64 = 1;

/// A value distribution document: a version tag, optional description and
/// the root of the split tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VdpDocument {
    pub version: u64,
    pub description: Option<String>,
    pub root: VdpNode,
}

impl VdpDocument {
    pub fn new(root: VdpNode) -> Self {
        Self {
            version: VDP_VERSION,
            description: None,
            root,
        }
    }

    pub fn with_description(mut self, description: impl Into<String>) -> Self {
        self.description = Some(description.into());
        self
    }

    /// True when no `ExternalRef` node remains anywhere in the tree.
    pub fn is_resolved(&self) -> bool {
        self.root.is_resolved()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum VdpNode {
    Split(Vec<VdpChild>),
    Payee(CryptoAddress),
    ExternalRef(String),
}

impl VdpNode {
    pub fn payee(scheme: Scheme, address: impl Into<String>) -> Self {
        VdpNode::Payee(CryptoAddress::new(scheme, address))
    }

    pub fn bitcoin(address: impl Into<String>) -> Self {
        Self::payee(Scheme::Bitcoin, address)
    }

    pub fn is_resolved(&self) -> bool {
        match self {
            VdpNode::Split(children) => children.iter().all(|c| c.node.is_resolved()),
            VdpNode::Payee(_) => true,
            VdpNode::ExternalRef(_) => false,
        }
    }

    /// Number of payee leaves below (and including) this node.
    pub fn leaf_count(&self) -> usize {
        match self {
            VdpNode::Split(children) => children.iter().map(|c| c.node.leaf_count()).sum(),
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VdpChild {
    pub id: String,
    pub shares: u64,
    pub node: VdpNode,
}

impl VdpChild {
    pub fn new(id: impl Into<String>, shares: u64, node: VdpNode) -> Self {
        Self {
            id: id.into(),
            shares,
            node,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scheme {
    Bitcoin,
    Other(String),
}

impl Scheme {
    pub fn parse(name: &str) -> Option<Scheme> {
        if name.is_empty() || name.chars().any(|c| c.is_uppercase()) {
            return None;
        }
        Some(match name {
            "bitcoin" => Scheme::Bitcoin,
            other => Scheme::Other(other.to_string()),
        })
    }

    pub fn as_str(&self) -> &str {
        match self {
            Scheme::Bitcoin => "bitcoin",
            Scheme::Other(name) => name,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CryptoAddress {
    pub scheme: Scheme,
    pub address: String,
}

impl CryptoAddress {
    pub fn new(scheme: Scheme, address: impl Into<String>) -> Self {
        Self {
            scheme,
            address: address.into(),
        }
    }

    pub fn bitcoin(address: impl Into<String>) -> Self {
        Self::new(Scheme::Bitcoin, address)
    }
}

/// Rendered as `scheme:address`.
impl fmt::Display for CryptoAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.scheme.as_str(), self.address)
    }
}

/// Serialized like a VDP `crypto` object: `{"<scheme>": "<address>"}`.
impl Serialize for CryptoAddress {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(1))?;
        map.serialize_entry(self.scheme.as_str(), &self.address)?;
        map.end()
    }
}

impl<'de> Deserialize<'de> for CryptoAddress {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct AddressVisitor;

        impl<'de> Visitor<'de> for AddressVisitor {
            type Value = CryptoAddress;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("an object with exactly one scheme -> address entry")
            }

            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<CryptoAddress, A::Error> {
                let Some((name, address)) = map.next_entry::<String, String>()? else {
                    return Err(de::Error::custom("empty crypto address"));
                };
                if map.next_key::<String>()?.is_some() {
                    return Err(de::Error::custom("crypto address has more than one scheme"));
                }
                let scheme = Scheme::parse(&name)
                    .ok_or_else(|| de::Error::custom(format!("invalid scheme {name:?}")))?;
                if address.is_empty() {
                    return Err(de::Error::custom("empty address"));
                }
                Ok(CryptoAddress { scheme, address })
            }
        }

        deserializer.deserialize_map(AddressVisitor)
    }
}

/// One payout produced by [`distribute`](super::distribute).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PaymentInstruction {
    pub address: CryptoAddress,
    /// Integer atomic units (e.g. satoshi).
    pub amount: u64,
    /// Branch ids from the root down to the payee leaf.
    pub path: Vec<String>,
}

impl PaymentInstruction {
    /// `/a/b/c`, or `/` for a payee at the root.
    pub fn path_string(&self) -> String {
        if self.path.is_empty() {
            "/".to_string()
        } else {
            self.path.iter().map(|p| format!("/{p}")).collect()
        }
    }
}

/// Bounds applied while following hyperlinked documents.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ResolutionLimits {
    /// Maximum number of nested documents along any one path, root included.
    pub max_depth: usize,
    /// Maximum number of distinct documents fetched in one resolve call.
    pub max_documents: usize,
}

impl Default for ResolutionLimits {
    fn default() -> Self {
        Self {
            max_depth: 16,
            max_documents: 64,
        }
    }
}

impl ResolutionLimits {
    pub fn new(max_depth: usize, max_documents: usize) -> Self {
        Self {
            max_depth: max_depth.max(1),
            max_documents: max_documents.max(1),
        }
    }
}
