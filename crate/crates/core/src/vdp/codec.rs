//! JSON reading and canonical writing of VDP documents.
//!
//! A document is `{"version":1, "description"?: string, ...node}` where a
//! node is exactly one of `{"split":[child,...]}`,
//! `{"crypto":{"<scheme>":"<address>"}}` or `{"url":"<absolute-url>"}`,
//! and a child is `{"id": string, "shares": positive-integer, ...node}`.

use std::collections::HashSet;

use serde_json::{Map, Value};

use super::error::VdpError;
use super::model::{CryptoAddress, Scheme, VdpChild, VdpDocument, VdpNode, VDP_VERSION};
use crate::canonical::to_canonical_string;

const NODE_KEYS: [&str; 3] = ["split", "crypto", "url"];

pub fn parse_vdp(bytes: &[u8]) -> Result<VdpDocument, VdpError> {
    let value: Value = serde_json::from_slice(bytes).map_err(|e| VdpError::Syntax {
        at: format!("line {} column {}", e.line(), e.column()),
        message: e.to_string(),
    })?;
    document_from_value(&value)
}

pub fn parse_vdp_str(text: &str) -> Result<VdpDocument, VdpError> {
    parse_vdp(text.as_bytes())
}

pub fn document_from_value(value: &Value) -> Result<VdpDocument, VdpError> {
    let at = "$";
    let obj = value
        .as_object()
        .ok_or_else(|| VdpError::syntax(at, "document must be a JSON object"))?;
    for key in obj.keys() {
        if !matches!(key.as_str(), "version" | "description") && !NODE_KEYS.contains(&key.as_str())
        {
            return Err(VdpError::UnknownKeyword {
                at: at.to_string(),
                key: key.clone(),
            });
        }
    }
    let version = match obj.get("version") {
        None => return Err(VdpError::syntax(at, "missing \"version\"")),
        Some(v) => v
            .as_u64()
            .ok_or_else(|| VdpError::syntax(at, "\"version\" must be a non-negative integer"))?,
    };
    if version != VDP_VERSION {
        return Err(VdpError::UnsupportedVersion(version));
    }
    let description = match obj.get("description") {
        None => None,
        Some(Value::String(s)) => Some(s.clone()),
        Some(_) => return Err(VdpError::syntax(at, "\"description\" must be a string")),
    };
    let root = node_from_object(obj, at)?;
    Ok(VdpDocument {
        version,
        description,
        root,
    })
}

fn node_from_object(obj: &Map<String, Value>, at: &str) -> Result<VdpNode, VdpError> {
    let present: Vec<&str> = NODE_KEYS
        .iter()
        .copied()
        .filter(|k| obj.contains_key(*k))
        .collect();
    let key = match present.as_slice() {
        [one] => *one,
        [] => {
            return Err(VdpError::syntax(
                at,
                "node needs one of \"split\", \"crypto\" or \"url\"",
            ))
        }
        _ => {
            return Err(VdpError::syntax(
                at,
                format!("node has more than one of {present:?}"),
            ))
        }
    };
    match key {
        "split" => split_from_value(&obj["split"], at),
        "crypto" => crypto_from_value(&obj["crypto"], &format!("{at}.crypto")),
        _ => url_from_value(&obj["url"], &format!("{at}.url")),
    }
}

fn split_from_value(value: &Value, at: &str) -> Result<VdpNode, VdpError> {
    let items = value
        .as_array()
        .ok_or_else(|| VdpError::syntax(&format!("{at}.split"), "\"split\" must be an array"))?;
    if items.is_empty() {
        return Err(VdpError::EmptySplit {
            at: format!("{at}.split"),
        });
    }
    let mut seen = HashSet::new();
    let mut children = Vec::with_capacity(items.len());
    for (i, item) in items.iter().enumerate() {
        let child_at = format!("{at}.split[{i}]");
        let child = child_from_value(item, &child_at)?;
        if !seen.insert(child.id.clone()) {
            return Err(VdpError::DuplicateSiblingId {
                at: child_at,
                id: child.id,
            });
        }
        children.push(child);
    }
    Ok(VdpNode::Split(children))
}

fn child_from_value(value: &Value, at: &str) -> Result<VdpChild, VdpError> {
    let obj = value
        .as_object()
        .ok_or_else(|| VdpError::syntax(at, "split child must be an object"))?;
    for key in obj.keys() {
        if !matches!(key.as_str(), "id" | "shares") && !NODE_KEYS.contains(&key.as_str()) {
            return Err(VdpError::UnknownKeyword {
                at: at.to_string(),
                key: key.clone(),
            });
        }
    }
    let id = match obj.get("id") {
        Some(Value::String(s)) if !s.is_empty() => s.clone(),
        Some(_) => return Err(VdpError::syntax(at, "\"id\" must be a non-empty string")),
        None => return Err(VdpError::syntax(at, "missing \"id\"")),
    };
    let shares = match obj.get("shares") {
        None => return Err(VdpError::syntax(at, "missing \"shares\"")),
        Some(v) => match v.as_u64() {
            Some(s) if s >= 1 => s,
            _ => {
                return Err(VdpError::InvalidShares {
                    at: at.to_string(),
                })
            }
        },
    };
    let node = node_from_object(obj, at)?;
    Ok(VdpChild { id, shares, node })
}

fn crypto_from_value(value: &Value, at: &str) -> Result<VdpNode, VdpError> {
    let obj = value
        .as_object()
        .ok_or_else(|| VdpError::syntax(at, "\"crypto\" must be an object"))?;
    if obj.len() != 1 {
        return Err(VdpError::syntax(
            at,
            "\"crypto\" must carry exactly one scheme entry",
        ));
    }
    let (name, address) = obj.iter().next().expect("one entry");
    let scheme = Scheme::parse(name)
        .ok_or_else(|| VdpError::syntax(at, format!("invalid scheme name {name:?}")))?;
    let address = match address {
        Value::String(s) if !s.is_empty() => s.clone(),
        _ => {
            return Err(VdpError::syntax(
                at,
                "address must be a non-empty string",
            ))
        }
    };
    Ok(VdpNode::Payee(CryptoAddress { scheme, address }))
}

fn url_from_value(value: &Value, at: &str) -> Result<VdpNode, VdpError> {
    let text = value
        .as_str()
        .ok_or_else(|| VdpError::syntax(at, "\"url\" must be a string"))?;
    match url::Url::parse(text) {
        Ok(_) => Ok(VdpNode::ExternalRef(text.to_string())),
        Err(e) => Err(VdpError::syntax(at, format!("not an absolute URL: {e}"))),
    }
}

pub fn document_to_value(doc: &VdpDocument) -> Value {
    let mut obj = Map::new();
    obj.insert("version".into(), Value::from(doc.version));
    if let Some(d) = &doc.description {
        obj.insert("description".into(), Value::String(d.clone()));
    }
    node_into_object(&doc.root, &mut obj);
    Value::Object(obj)
}

fn node_into_object(node: &VdpNode, obj: &mut Map<String, Value>) {
    match node {
        VdpNode::Split(children) => {
            // Declaration order is preserved: it decides remainder tie-breaks.
            let items = children
                .iter()
                .map(|c| {
                    let mut child = Map::new();
                    child.insert("id".into(), Value::String(c.id.clone()));
                    child.insert("shares".into(), Value::from(c.shares));
                    node_into_object(&c.node, &mut child);
                    Value::Object(child)
                })
                .collect();
            obj.insert("split".into(), Value::Array(items));
        }
        VdpNode::Payee(addr) => {
            let mut crypto = Map::new();
            crypto.insert(
                addr.scheme.as_str().to_string(),
                Value::String(addr.address.clone()),
            );
            obj.insert("crypto".into(), Value::Object(crypto));
        }
        VdpNode::ExternalRef(url) => {
            obj.insert("url".into(), Value::String(url.clone()));
        }
    }
}

/// Deterministic canonical text of `doc`.
pub fn serialize_vdp(doc: &VdpDocument) -> Vec<u8> {
    to_canonical_string(&document_to_value(doc)).into_bytes()
}

#[cfg(test)]
mod tests {
    use super::*;

    const CONTRIBUTORS: &str = r#"{
        "version": 1,
        "description": "project payouts",
        "split": [
            {"id": "contributors", "shares": 97, "split": [
                {"id": "ktorn", "shares": 1, "crypto": {"bitcoin": "1Ktorn"}},
                {"id": "marcoleong", "shares": 1, "crypto": {"bitcoin": "1Marco"}}
            ]},
            {"id": "upstream", "shares": 3, "crypto": {"bitcoin": "1Upstream"}}
        ]
    }"#;

    #[test]
    fn parses_contributors_tree() {
        let doc = parse_vdp_str(CONTRIBUTORS).unwrap();
        let VdpNode::Split(children) = &doc.root else {
            panic!("root should be a split")
        };
        assert_eq!(children.len(), 2);
        assert_eq!(children[0].id, "contributors");
        assert_eq!(children[0].shares, 97);
        assert_eq!(children[1].shares, 3);
        assert_eq!(doc.description.as_deref(), Some("project payouts"));
    }

    #[test]
    fn single_payee_document() {
        let doc = parse_vdp_str(r#"{"version":1,"crypto":{"bitcoin":"1A"}}"#).unwrap();
        assert_eq!(doc.root, VdpNode::bitcoin("1A"));
        assert_eq!(doc.root.leaf_count(), 1);
    }

    #[test]
    fn duplicate_sibling_ids_rejected() {
        let err = parse_vdp_str(
            r#"{"version":1,"split":[
                {"id":"ktorn","shares":1,"crypto":{"bitcoin":"a"}},
                {"id":"ktorn","shares":1,"crypto":{"bitcoin":"b"}}]}"#,
        )
        .unwrap_err();
        assert!(matches!(err, VdpError::DuplicateSiblingId { ref id, .. } if id == "ktorn"));
    }

    #[test]
    fn same_id_in_different_branches_is_fine() {
        parse_vdp_str(
            r#"{"version":1,"split":[
                {"id":"a","shares":1,"split":[{"id":"x","shares":1,"crypto":{"bitcoin":"1"}}]},
                {"id":"b","shares":1,"split":[{"id":"x","shares":1,"crypto":{"bitcoin":"2"}}]}]}"#,
        )
        .unwrap();
    }

    #[test]
    fn error_paths() {
        assert_eq!(
            parse_vdp_str(r#"{"version":2,"crypto":{"bitcoin":"a"}}"#).unwrap_err(),
            VdpError::UnsupportedVersion(2)
        );
        assert!(matches!(
            parse_vdp_str(r#"{"version":1,"split":[]}"#).unwrap_err(),
            VdpError::EmptySplit { .. }
        ));
        assert!(matches!(
            parse_vdp_str(r#"{"version":1,"split":[{"id":"a","shares":0,"crypto":{"bitcoin":"a"}}]}"#)
                .unwrap_err(),
            VdpError::InvalidShares { .. }
        ));
        assert!(matches!(
            parse_vdp_str(r#"{"version":1,"split":[{"id":"a","shares":1.5,"crypto":{"bitcoin":"a"}}]}"#)
                .unwrap_err(),
            VdpError::InvalidShares { .. }
        ));
        let err = parse_vdp_str(r#"{"version":1,"weight":3,"crypto":{"bitcoin":"a"}}"#).unwrap_err();
        assert!(matches!(err, VdpError::UnknownKeyword { ref key, .. } if key == "weight"));
        assert!(matches!(
            parse_vdp_str("{\"version\":1,\n\"split\": [").unwrap_err(),
            VdpError::Syntax { .. }
        ));
        assert!(matches!(
            parse_vdp_str(r#"{"version":1,"url":"relative/path.json"}"#).unwrap_err(),
            VdpError::Syntax { .. }
        ));
        assert!(matches!(
            parse_vdp_str(r#"{"version":1,"crypto":{"bitcoin":"a","litecoin":"b"}}"#).unwrap_err(),
            VdpError::Syntax { .. }
        ));
        assert!(matches!(
            parse_vdp_str(r#"{"version":1,"crypto":{"Bitcoin":"a"}}"#).unwrap_err(),
            VdpError::Syntax { .. }
        ));
        assert!(matches!(
            parse_vdp_str(r#"{"version":1,"crypto":{"bitcoin":"a"},"url":"https://x/y"}"#).unwrap_err(),
            VdpError::Syntax { .. }
        ));
    }

    #[test]
    fn error_identifies_field_location() {
        let err = parse_vdp_str(
            r#"{"version":1,"split":[{"id":"a","shares":1,"split":[{"id":"b","shares":-1,"crypto":{"bitcoin":"x"}}]}]}"#,
        )
        .unwrap_err();
        assert_eq!(
            err,
            VdpError::InvalidShares {
                at: "$.split[0].split[0]".into()
            }
        );
    }

    #[test]
    fn round_trip_and_canonical_bytes() {
        let doc = parse_vdp_str(CONTRIBUTORS).unwrap();
        let bytes = serialize_vdp(&doc);
        assert_eq!(parse_vdp(&bytes).unwrap(), doc);
        // Same structure written with different key order and whitespace.
        let reordered = parse_vdp_str(
            r#"{"split":[{"split":[{"crypto":{"bitcoin":"1Ktorn"},"shares":1,"id":"ktorn"},
            {"shares":1,"id":"marcoleong","crypto":{"bitcoin":"1Marco"}}],"shares":97,"id":"contributors"},
            {"crypto":{"bitcoin":"1Upstream"},"id":"upstream","shares":3}],
            "description":"project payouts","version":1}"#,
        )
        .unwrap();
        assert_eq!(serialize_vdp(&reordered), bytes);
    }

    #[test]
    fn sibling_order_is_kept() {
        let doc = VdpDocument::new(VdpNode::Split(vec![
            VdpChild::new("B", 1, VdpNode::bitcoin("b")),
            VdpChild::new("A", 1, VdpNode::bitcoin("a")),
        ]));
        let text = String::from_utf8(serialize_vdp(&doc)).unwrap();
        assert!(text.find("\"B\"").unwrap() < text.find("\"A\"").unwrap());
        assert_eq!(parse_vdp_str(&text).unwrap(), doc);
    }
}
