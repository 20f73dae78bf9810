//! Apportioning an integer amount through a resolved split tree.

use std::collections::BTreeMap;

use super::error::VdpError;
use super::model::{PaymentInstruction, VdpChild, VdpDocument, VdpNode};

/// Largest total accepted by [`distribute`].
pub const MAX_TOTAL: u64 = i64::MAX as u64;

/// Split `total` atomic units through `doc`.
///
/// At every split each child receives the floor of its exact share; the
/// units left over go one at a time to the children with the largest
/// fractional remainders, ties broken by declaration order. Leaves emit one
/// instruction each, in depth-first declaration order, and the amounts
/// always sum to `total`.
pub fn distribute(doc: &VdpDocument, total: u64) -> Result<Vec<PaymentInstruction>, VdpError> {
    if total > MAX_TOTAL {
        return Err(VdpError::Overflow);
    }
    let mut out = Vec::with_capacity(doc.root.leaf_count());
    let mut path = Vec::new();
    walk(&doc.root, total, &mut path, &mut out)?;
    debug_assert_eq!(out.iter().map(|p| p.amount as u128).sum::<u128>(), total as u128);
    Ok(out)
}

fn walk(
    node: &VdpNode,
    amount: u64,
    path: &mut Vec<String>,
    out: &mut Vec<PaymentInstruction>,
) -> Result<(), VdpError> {
    match node {
        VdpNode::Payee(address) => {
            out.push(PaymentInstruction {
                address: address.clone(),
                amount,
                path: path.clone(),
            });
            Ok(())
        }
        VdpNode::ExternalRef(_) => Err(VdpError::UnresolvedNode {
            path: if path.is_empty() {
                "/".into()
            } else {
                path.iter().map(|p| format!("/{p}")).collect()
            },
        }),
        VdpNode::Split(children) => {
            let allocation = apportion(children, amount)?;
            for (child, share) in children.iter().zip(allocation) {
                path.push(child.id.clone());
                walk(&child.node, share, path, out)?;
                path.pop();
            }
            Ok(())
        }
    }
}

/// Largest-remainder allocation of `amount` across `children` by shares.
pub(crate) fn apportion(children: &[VdpChild], amount: u64) -> Result<Vec<u64>, VdpError> {
    let total_shares: u128 = children.iter().map(|c| c.shares as u128).sum();
    if total_shares == 0 {
        return Err(VdpError::EmptySplit { at: "split".into() });
    }
    let amount = amount as u128;
    let mut floors = Vec::with_capacity(children.len());
    let mut remainders = Vec::with_capacity(children.len());
    for child in children {
        // amount < 2^63 and shares < 2^64, so the product fits in u128.
        let product = amount
            .checked_mul(child.shares as u128)
            .ok_or(VdpError::Overflow)?;
        floors.push(product / total_shares);
        remainders.push(product % total_shares);
    }
    let assigned: u128 = floors.iter().sum();
    let mut leftover = amount - assigned;
    let mut order: Vec<usize> = (0..children.len()).collect();
    // Stable sort keeps declaration order among equal remainders.
    order.sort_by(|&a, &b| remainders[b].cmp(&remainders[a]));
    for &i in &order {
        if leftover == 0 {
            break;
        }
        floors[i] += 1;
        leftover -= 1;
    }
    Ok(floors.into_iter().map(|f| f as u64).collect())
}

/// Sum of instructions per address, for reporting.
pub fn totals_by_address(instructions: &[PaymentInstruction]) -> BTreeMap<String, u64> {
    let mut map = BTreeMap::new();
    for p in instructions {
        *map.entry(p.address.to_string()).or_insert(0) += p.amount;
    }
    map
}
