use std::collections::BTreeMap;

use super::error::VdpError;
use super::model::{VdpChild, VdpDocument, VdpNode};

/// One data source's stake in an insight.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Contribution {
    pub weight: u64,
    pub payee: VdpNode,
}

/// Build the document that splits a fee across contributing sources, one
/// child per source keyed by source id (sorted), weighted by `weight`.
pub fn build_attribution_vdp(
    contributions: &BTreeMap<String, Contribution>,
) -> Result<VdpDocument, VdpError> {
    if contributions.is_empty() {
        return Err(VdpError::EmptyContributions);
    }
    let mut children = Vec::with_capacity(contributions.len());
    for (source_id, c) in contributions {
        if c.weight == 0 {
            return Err(VdpError::InvalidShares {
                at: format!("contribution {source_id:?}"),
            });
        }
        children.push(VdpChild::new(source_id.clone(), c.weight, c.payee.clone()));
    }
    Ok(VdpDocument::new(VdpNode::Split(children)).with_description("data source attribution"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vdp::distribute::distribute;

    #[test]
    fn weights_become_shares() {
        let mut m = BTreeMap::new();
        m.insert("A".to_string(), Contribution { weight: 3, payee: VdpNode::bitcoin("1A") });
        m.insert("B".to_string(), Contribution { weight: 1, payee: VdpNode::bitcoin("1B") });
        let doc = build_attribution_vdp(&m).unwrap();
        let VdpNode::Split(children) = &doc.root else { panic!() };
        assert_eq!(
            children.iter().map(|c| (c.id.as_str(), c.shares)).collect::<Vec<_>>(),
            vec![("A", 3), ("B", 1)]
        );
        let amounts: Vec<u64> = distribute(&doc, 1000).unwrap().iter().map(|p| p.amount).collect();
        assert_eq!(amounts, vec![750, 250]);
    }

    #[test]
    fn single_source_takes_all() {
        let mut m = BTreeMap::new();
        m.insert("A".to_string(), Contribution { weight: 1, payee: VdpNode::bitcoin("1A") });
        let doc = build_attribution_vdp(&m).unwrap();
        assert_eq!(distribute(&doc, 999).unwrap()[0].amount, 999);
    }

    #[test]
    fn external_payee_kept_as_link() {
        let mut m = BTreeMap::new();
        m.insert(
            "vendor".to_string(),
            Contribution { weight: 2, payee: VdpNode::ExternalRef("https://v.example/vdp.json".into()) },
        );
        assert!(!build_attribution_vdp(&m).unwrap().is_resolved());
    }

    #[test]
    fn empty_rejected() {
        assert_eq!(
            build_attribution_vdp(&BTreeMap::new()).unwrap_err(),
            VdpError::EmptyContributions
        );
    }
}
